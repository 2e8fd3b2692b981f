//! End to end through the public API on a coarse grid: a source solution with
//! λ = 1/2 stays below its linear companion and loses mass to absorption.

use std::sync::Arc;

use hardy_vss::evolve::{linear_companion, mollified_delta, refine_source, EvolveConfig};
use hardy_vss::grid::RadialGrid;
use hardy_vss::model::{Model, ProblemParams};
use hardy_vss::verify::kernel_domination;

#[test]
fn source_run_below_linear_companion() {
    let model = Model::new(ProblemParams::new(3, -0.75, 0.0, 1.5).unwrap()).unwrap();
    assert!((model.lambda() - 0.5).abs() < 1e-15);
    let grid = Arc::new(RadialGrid::build(8.0, 256, 2.0, model.lambda(), 3).unwrap());
    let varkappa = 5.0;
    let u0 = mollified_delta(&grid, varkappa, 0.05).unwrap();
    assert!((u0.weighted_l1_norm() - varkappa).abs() < 1e-12 * varkappa);

    let mut cfg = EvolveConfig::new(0.5);
    cfg.record_times = vec![0.01, 0.1, 0.5];
    cfg.rho = vec![1.0];
    let run = refine_source(&grid, &model, varkappa, &[0.1, 0.05], 0, &cfg, 1.0).unwrap();
    let traj = run.trajectory;
    let lin = linear_companion(&traj, &cfg).unwrap();

    assert_eq!(traj.times(), vec![0.01, 0.1, 0.5]);
    assert!(traj.snapshots.iter().all(|s| s.min() >= 0.0));
    let rep = kernel_domination(&traj, &lin, varkappa);
    assert!(rep.pass, "{}", rep.line());

    let masses: Vec<f64> = traj.diagnostics.iter().map(|d| d.total_mass).collect();
    assert!(masses.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(*masses.last().unwrap() < varkappa);
    let defect = traj.diagnostics.iter().map(|d| d.mass_defect.abs()).fold(0.0, f64::max);
    assert!(defect < 1e-8 * varkappa, "mass defect {defect:e}");
}
