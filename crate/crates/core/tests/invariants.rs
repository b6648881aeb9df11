use homlab_core::estimates::fit_rate;
use homlab_core::grid::{GridFunction, SpaceGrid};
use homlab_core::operator::FastScale;
use homlab_core::scenario::{build_catalog_scenario, catalog_names};
use homlab_core::solver::{check_comparison, solve_parabolic_with, SolveOptions};
use homlab_core::exec::Sequential;
use proptest::prelude::*;

fn opts_for(name: &str) -> (SpaceGrid, SolveOptions) {
    let spec = build_catalog_scenario(name).unwrap();
    let grid = SpaceGrid::new(spec.dim, if spec.dim == 1 { 16 } else { 8 }).unwrap();
    let fast = spec.fast.then(|| FastScale::new(2));
    (grid, SolveOptions { fast, ..SolveOptions::default() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ordered_data_stay_ordered(idx in 0usize..7, gap in proptest::collection::vec(0.0f64..1.0, 16), shift in -2.0f64..2.0) {
        let name = catalog_names()[idx];
        let spec = build_catalog_scenario(name).unwrap();
        let (grid, opts) = opts_for(name);
        let high = GridFunction::sample_fields(grid, &spec.u0, 0.0).map(|v| v + shift);
        let vals = high.components().iter().map(|c| c.iter().enumerate().map(|(k, v)| v - gap[k % gap.len()]).collect()).collect();
        let low = GridFunction::from_values(grid, 0.0, vals).unwrap();
        let rep = check_comparison(&spec, &low, &high, 0.02, &opts).unwrap();
        prop_assert!(rep.pass, "{name}: {rep:?}");
    }

    #[test]
    fn constant_shift_moves_uncoupled_solutions_rigidly(c in -3.0f64..3.0) {
        let spec = build_catalog_scenario("isaacs_1d").unwrap();
        let (grid, mut opts) = opts_for("isaacs_1d");
        let base = solve_parabolic_with(&spec, grid, 0.05, &opts, &Sequential).unwrap();
        opts.u0 = Some(base.initial().map(|v| v + c));
        let moved = solve_parabolic_with(&spec, grid, 0.05, &opts, &Sequential).unwrap();
        let d = moved.last().difference_norms(base.last()).unwrap();
        for (a, b) in moved.last().component(0).iter().zip(base.last().component(0)) {
            prop_assert!((a - b - c).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn fit_rate_recovers_power_laws(p in 0.1f64..2.0, c in 0.01f64..100.0, perm in 0usize..6) {
        let params = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = params.iter().map(|e: &f64| c * e.powf(p)).collect();
        let order = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]][perm];
        let e: Vec<f64> = order.iter().map(|&i| errs[i]).collect();
        let x: Vec<f64> = order.iter().map(|&i| params[i]).collect();
        let fit = fit_rate(&e, &x).unwrap();
        prop_assert!((fit.exponent - p).abs() < 1e-9);
        prop_assert!((fit.prefactor - c).abs() < 1e-8 * c);
        prop_assert!(fit.residual < 1e-9);
    }

    #[test]
    fn restriction_keeps_coarse_nodes(n in 1usize..6, seed in 0u64..1000) {
        let fine = SpaceGrid::new(1, 8 * n).unwrap();
        let coarse = SpaceGrid::new(1, 4 * n).unwrap();
        let u = GridFunction::from_fn(fine, 1, 0.0, |i, _| ((i as u64 * 2654435761 + seed) % 97) as f64);
        let r = u.restrict(coarse).unwrap();
        for k in 0..coarse.len() {
            prop_assert_eq!(r.component(0)[k], u.component(0)[2 * k]);
        }
    }
}
