use homlab::config::{load_scenario, scenario_from_toml};
use homlab_core::scenario::{build_catalog_scenario, catalog_names};
use std::path::Path;
use std::process::{Command, Output};

fn homlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homlab")).args(args).arg("--out").arg(out).output().unwrap()
}

#[test]
fn shipped_scenario_files_match_catalog() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for name in catalog_names() {
        let path = dir.join(format!("{name}.toml"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(scenario_from_toml(&text, name).unwrap(), build_catalog_scenario(name).unwrap(), "{name}");
        assert_eq!(load_scenario(path.to_str().unwrap()).unwrap().name, *name);
    }
}

#[test]
fn solve_writes_slices_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = homlab(&["solve", "--scenario", "heat_1d", "--nx", "32", "--t-final", "0.05"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let p = tmp.path();
    for f in ["manifest.json", "bounds.csv", "timing.json", "u_0000.csv", "u_0000.meta.json"] {
        assert!(p.join(f).exists(), "{f}");
    }
    let manifest = std::fs::read_to_string(p.join("manifest.json")).unwrap();
    assert!(!manifest.contains("wall_time"));
    let bounds = std::fs::read_to_string(p.join("bounds.csv")).unwrap();
    assert!(bounds.starts_with("check,t,observed,rhs,fitted_K,pass,slack\n"));
    assert!(bounds.lines().skip(1).all(|l| l.contains(",true,")));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(homlab(&["solve", "--bogus"], tmp.path()).status.code(), Some(2));
    assert_eq!(homlab(&["solve", "--scenario", "nope"], tmp.path()).status.code(), Some(2));
    let out = homlab(&["homogenize", "--scenario", "hom_linear_1d", "--eps", "1/3", "--nx", "32"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("incommensurate"));
    let out = homlab(&["vanish", "--scenario", "firstorder_2sys", "--eps", "0.05,0.1,0.025"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not decreasing"));
    assert_eq!(homlab(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn failed_verdict_exits_with_one() {
    // a running cost of -5 with a declared sup bound of 0 breaks the sup-norm check
    let tmp = tempfile::tempdir().unwrap();
    let heat = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/heat_1d.toml")).unwrap();
    let bad = heat.replace("[coefficients.l]\noffset = 0.0", "[coefficients.l]\noffset = -5.0");
    assert_ne!(bad, heat);
    let file = tmp.path().join("bad.toml");
    std::fs::write(&file, bad).unwrap();
    let out = homlab(&["solve", "--scenario", file.to_str().unwrap(), "--nx", "32", "--t-final", "0.5"], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    let bounds = std::fs::read_to_string(tmp.path().join("o/bounds.csv")).unwrap();
    assert!(bounds.lines().any(|l| l.starts_with("linfty") && l.contains(",false,")));
}

#[test]
fn cell_accepts_negative_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = homlab(&["cell", "--scenario", "hom_isaacs_1d", "--p", "-0.5", "--xx", "-1"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let levels = std::fs::read_to_string(tmp.path().join("levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 4);
}
