fn main() {
    std::process::exit(homlab::cli::run(std::env::args_os()));
}
