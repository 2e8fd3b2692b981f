//! One function per experiment. Each writes its CSV files into the output
//! directory and returns the experiment-specific part of `summary.json`.

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use hardy_vss::evolve::{
    config_for_width, evolve, fit_kernel_bound, heat_kernel, heat_kernel_exact, linear_companion, mollified_delta,
    refine_source, vss_by_saturation, Trajectory,
};
use hardy_vss::io::{fmt_g17, snapshots_csv, table_csv};
use hardy_vss::model::classify_regime;
use hardy_vss::profile::{check_decay, minimize_j, relative_linf_difference, shoot_profile, DescentConfig, ProfileSolution, ShootingConfig};
use hardy_vss::suite::{exact_kernel_bound, Suite};
use hardy_vss::verify::{
    critical_sweep_report, kernel_distance, keller_osserman_constant, lebesgue_slope_fit, sweep_cell, trace_fits, SweepCell,
    VerifyReport,
};
use hardy_vss::{Frame, Model, RadialField, RadialGrid};
use serde_json::{json, Map, Value};

use crate::config::{ProfileChoice, RunConfig};
use crate::summary::{num, nums, tagged, Tag};

pub type Summary = Map<String, Value>;

fn write(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    std::fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))
}

fn model(cfg: &RunConfig) -> anyhow::Result<Model> {
    Model::new(cfg.problem).context("problem parameters")
}

fn grid(cfg: &RunConfig, model: &Model) -> anyhow::Result<Arc<RadialGrid>> {
    let g = RadialGrid::build(cfg.grid.r_max, cfg.grid.n, cfg.grid.grading, model.lambda(), model.dim()).context("grid")?;
    Ok(Arc::new(g))
}

/// Sections shared by every experiment.
pub fn header(cfg: &RunConfig, experiment: &str) -> anyhow::Result<Summary> {
    let mut s = Summary::new();
    s.insert("experiment".into(), json!(experiment));
    s.insert("config".into(), tagged(cfg, Tag::Input));
    let m = model(cfg)?;
    s.insert("derived".into(), tagged(&m.derived, Tag::Reference));
    s.insert("regime".into(), tagged(&classify_regime(&m.params, &m.derived), Tag::Reference));
    Ok(s)
}

pub fn derive(_cfg: &RunConfig, _dir: &Path) -> anyhow::Result<Summary> {
    Ok(Summary::new())
}

fn trajectory_files(dir: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    write(dir, "snapshots.csv", &snapshots_csv(&traj.snapshots))?;
    write(dir, "diagnostics.csv", &traj.diagnostics_csv())
}

fn trajectory_summary(traj: &Trajectory) -> Value {
    let last = traj.diagnostics.last();
    let (c_ko, c_origin) = keller_osserman_constant(traj);
    json!({
        "record_times": nums(&traj.times(), Tag::Input),
        "sup": nums(&traj.snapshots.iter().map(|s| s.max()).collect::<Vec<_>>(), Tag::Measured),
        "total_mass": num(last.map_or(f64::NAN, |d| d.total_mass), Tag::Measured),
        "absorption_integral": num(last.map_or(f64::NAN, |d| d.absorption_integral), Tag::Measured),
        "clamped_mass_total": num(traj.clamped_mass_total, Tag::Measured),
        "steps": num(traj.diagnostics.len() as f64, Tag::Measured),
        "keller_osserman": { "all": num(c_ko, Tag::Measured), "origin": num(c_origin, Tag::Measured) },
    })
}

pub fn kernel(cfg: &RunConfig, dir: &Path) -> anyhow::Result<Summary> {
    let m = model(cfg)?;
    let g = grid(cfg, &m)?;
    let k = heat_kernel(&g, &cfg.kernel.times, &cfg.kernel.epsilons, &cfg.evolve).context("heat kernel")?;
    let exact: Vec<RadialField> = k
        .fields
        .iter()
        .map(|f| RadialField::from_fn(&g, Frame::Weighted, f.time, |r| heat_kernel_exact(m.dim(), m.lambda(), f.time, r)))
        .collect();
    write(dir, "kernel.csv", &snapshots_csv(&k.fields))?;
    write(dir, "kernel_exact.csv", &snapshots_csv(&exact))?;
    let (c, per_t) = fit_kernel_bound(&k.fields, cfg.kernel.delta);
    let mut l1 = vec![];
    for (f, e) in k.fields.iter().zip(&exact) {
        l1.push(f.weighted_l1_distance(e)?);
    }
    let mut s = Summary::new();
    s.insert(
        "kernel".into(),
        json!({
            "origin_value": nums(&k.fields.iter().map(|f| f.values[0]).collect::<Vec<_>>(), Tag::Measured),
            "origin_exact": nums(&exact.iter().map(|f| f.values[0]).collect::<Vec<_>>(), Tag::Reference),
            "l1_vs_exact": nums(&l1, Tag::Measured),
            "mass": nums(&k.fields.iter().map(|f| f.weighted_integral(g.r_max())).collect::<Result<Vec<_>, _>>()?, Tag::Measured),
            "epsilon_change": nums(&k.last_change, Tag::Measured),
            "extrapolation_error": nums(&k.error_estimate, Tag::Measured),
            "c_delta": num(c, Tag::Fitted),
            "c_delta_per_t": nums(&per_t, Tag::Fitted),
            "c_delta_exact": num(exact_kernel_bound(m.dim(), m.lambda(), cfg.kernel.delta), Tag::Reference),
        }),
    );
    Ok(s)
}

pub fn evolve_run(cfg: &RunConfig, dir: &Path) -> anyhow::Result<Summary> {
    let m = model(cfg)?;
    let g = grid(cfg, &m)?;
    let u0 = mollified_delta(&g, cfg.source.varkappa, cfg.source.epsilon)?;
    let traj = evolve(&u0, &config_for_width(&cfg.evolve, cfg.source.epsilon), &m).context("evolution")?;
    trajectory_files(dir, &traj)?;
    let mut s = Summary::new();
    s.insert("trajectory".into(), trajectory_summary(&traj));
    Ok(s)
}

pub fn source(cfg: &RunConfig, dir: &Path) -> anyhow::Result<Summary> {
    let m = model(cfg)?;
    let g = grid(cfg, &m)?;
    let run = refine_source(&g, &m, cfg.source.varkappa, &cfg.source.epsilons, 0, &cfg.evolve, cfg.source.rel_tol)
        .context("source solution")?;
    trajectory_files(dir, &run.trajectory)?;
    let companion = linear_companion(&run.trajectory, &config_for_width(&cfg.evolve, run.epsilon))?;
    let dist = kernel_distance(&run.trajectory, &companion)?;
    write(dir, "kernel_distance.csv", &table_csv(&["t", "l1_distance"], &dist.iter().map(|&(t, e)| vec![t, e]).collect::<Vec<_>>()))?;
    let mut src = json!({
        "converged": run.converged,
        "epsilon": num(run.epsilon, Tag::Measured),
        "last_change": num(run.last_change, Tag::Measured),
        "kernel_distance": nums(&dist.iter().map(|d| d.1).collect::<Vec<_>>(), Tag::Measured),
        "trajectory": trajectory_summary(&run.trajectory),
    });
    if run.trajectory.snapshots.len() >= 5 && !cfg.evolve.rho.is_empty() {
        let t0 = run.trajectory.times()[0] / 10.0;
        let fits = trace_fits(&run.trajectory, &cfg.evolve.rho, t0)?;
        src["trace"] = Value::Array(
            fits.iter()
                .map(|f| {
                    json!({
                        "rho": num(f.rho, Tag::Input),
                        "slope": num(f.slope, Tag::Fitted),
                        "r2": num(f.r2, Tag::Fitted),
                        "extrapolated_mass": num(f.extrapolated, Tag::Fitted),
                    })
                })
                .collect(),
        );
    }
    let mut s = Summary::new();
    s.insert("source".into(), src);
    Ok(s)
}

pub fn vss(cfg: &RunConfig, dir: &Path) -> anyhow::Result<Summary> {
    let m = model(cfg)?;
    let g = grid(cfg, &m)?;
    let sat = vss_by_saturation(&g, &m, &cfg.vss.epsilons, &cfg.evolve, cfg.vss.rel_tol, cfg.vss.max_varkappa)
        .context("very singular solution")?;
    let traj = &sat.trajectory;
    trajectory_files(dir, traj)?;
    let sigma = m.sigma();
    let mut rows = vec![];
    for snap in &traj.snapshots {
        let scale = snap.time.powf(sigma);
        for (r, v) in g.centers().iter().zip(&snap.values) {
            rows.push(vec![snap.time, r / snap.time.sqrt(), scale * v]);
        }
    }
    write(dir, "rescaled.csv", &table_csv(&["t", "xi", "scaled_value"], &rows))?;
    let mut v = json!({
        "saturated": sat.saturated,
        "varkappas": nums(&sat.varkappas, Tag::Measured),
        "epsilons": nums(&sat.epsilons, Tag::Measured),
        "width_converged": sat.width_converged,
        "changes": nums(&sat.changes, Tag::Measured),
        "scaled_origin_value": nums(&traj.snapshots.iter().map(|s| s.time.powf(sigma) * s.values[0]).collect::<Vec<_>>(), Tag::Measured),
        "trajectory": trajectory_summary(traj),
        "lebesgue_slope_reference": num(m.lebesgue_mass_slope(), Tag::Reference),
    });
    if traj.snapshots.len() >= 2 {
        let (slope, r2) = lebesgue_slope_fit(traj, 1.0)?;
        v["lebesgue_slope"] = num(slope, Tag::Fitted);
        v["lebesgue_slope_r2"] = num(r2, Tag::Fitted);
    }
    let mut s = Summary::new();
    s.insert("vss".into(), v);
    Ok(s)
}

fn profile_summary(p: &ProfileSolution) -> Value {
    let decay = check_decay(p);
    json!({
        "v0": num(p.v0, Tag::Measured),
        "j": num(p.j_value, Tag::Measured),
        "el_residual": num(p.el_residual_norm, Tag::Measured),
        "decay_constant": num(p.decay_constant, Tag::Measured),
        "decay_certified": decay.is_ok(),
        "iterations": num(p.iterations as f64, Tag::Measured),
        "a_star": p.a_star.map(|a| num(a, Tag::Measured)),
        "coercivity": p.coercivity.map(|(e, c)| json!({ "epsilon": num(e, Tag::Input), "c_epsilon": num(c, Tag::Fitted) })),
    })
}

pub fn profile(cfg: &RunConfig, dir: &Path) -> anyhow::Result<Summary> {
    let m = model(cfg)?;
    let g = grid(cfg, &m)?;
    let mut s = Summary::new();
    let var = match cfg.profile {
        ProfileChoice::Shooting => None,
        _ => Some(minimize_j(&m, &g, None, &DescentConfig::default()).context("variational profile")?),
    };
    let shot = match cfg.profile {
        ProfileChoice::Variational => None,
        _ => Some(shoot_profile(&m, &g, &ShootingConfig::default()).context("shooting profile")?),
    };
    if let Some(v) = &var {
        write(dir, "profile_variational.csv", &v.to_csv())?;
        s.insert("variational".into(), profile_summary(v));
    }
    if let Some(v) = &shot {
        write(dir, "profile_shooting.csv", &v.to_csv())?;
        s.insert("shooting".into(), profile_summary(v));
    }
    if let (Some(a), Some(b)) = (&var, &shot) {
        s.insert("relative_linf_difference_0_6".into(), num(relative_linf_difference(a, b, 6.0), Tag::Measured));
    }
    Ok(s)
}

pub fn sweep(cfg: &RunConfig, dir: &Path, jobs: usize) -> anyhow::Result<Summary> {
    let sc = &cfg.sweep;
    let run_cell = |p: f64| -> anyhow::Result<SweepCell> {
        let m = Model::new(hardy_vss::ProblemParams { p, ..cfg.problem }).with_context(|| format!("sweep at p = {p}"))?;
        let g = grid(cfg, &m)?;
        Ok(sweep_cell(&g, &m, sc.varkappa, &sc.epsilons, &cfg.evolve, (sc.probe_r, sc.probe_t), &sc.thresholds)?)
    };
    // Cells are independent; each worker takes every `jobs`-th p.
    let jobs = jobs.max(1).min(sc.p_values.len().max(1));
    let mut results: Vec<Option<anyhow::Result<SweepCell>>> = (0..sc.p_values.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let run_cell = &run_cell;
                scope.spawn(move || {
                    sc.p_values.iter().enumerate().skip(w).step_by(jobs).map(|(i, &p)| (i, run_cell(p))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let cells: Vec<SweepCell> = results.into_iter().map(|r| r.expect("every cell ran")).collect::<anyhow::Result<_>>()?;
    let mut table = String::from("p,p_star,finest_ratio,class\n");
    let mut probes = vec![];
    for c in &cells {
        let class = serde_json::to_value(c.class)?.as_str().unwrap_or("").to_string();
        table.push_str(&format!(
            "{},{},{},{class}\n",
            fmt_g17(c.p),
            fmt_g17(c.p_star),
            fmt_g17(*c.ratios.last().unwrap_or(&f64::NAN))
        ));
        probes.extend(c.epsilons.iter().zip(&c.probe_values).map(|(&e, &v)| vec![c.p, e, v]));
    }
    write(dir, "sweep.csv", &table)?;
    write(dir, "sweep_probe.csv", &table_csv(&["p", "epsilon", "probe_value"], &probes))?;
    let report = critical_sweep_report(&cells, &sc.thresholds);
    let mut s = Summary::new();
    s.insert("cells".into(), Value::Array(cells.iter().map(|c| {
        let mut v = tagged(c, Tag::Measured);
        v["p"] = num(c.p, Tag::Input);
        v["p_star"] = num(c.p_star, Tag::Reference);
        v["epsilons"] = nums(&c.epsilons, Tag::Input);
        v
    }).collect()));
    s.insert("report".into(), report_json(&report));
    Ok(s)
}

pub fn report_json(r: &VerifyReport) -> Value {
    json!({
        "name": r.name,
        "pass": r.pass,
        "measured": nums(&r.measured, Tag::Measured),
        "reference": nums(&r.reference, Tag::Reference),
        "tolerance": num(r.tolerance, Tag::Reference),
        "provenance": tagged(&r.provenance, Tag::Reference),
        "notes": r.notes,
    })
}

/// Runs the selected criteria; the returned flag is the aggregate verdict.
pub fn verify(cfg: &RunConfig, dir: &Path) -> anyhow::Result<(Summary, bool)> {
    let mut suite = Suite::new(cfg.seed);
    suite.sweep = cfg.sweep.thresholds;
    let mut reports = vec![];
    for &k in &cfg.criteria {
        let r = suite.run(k);
        println!("{}", r.line());
        reports.push(r);
    }
    let all = reports.iter().all(|r| r.pass);
    let table: String = reports.iter().map(|r| r.line() + "\n").collect();
    write(dir, "reports.txt", &table)?;
    let array: Vec<Value> = reports.iter().map(report_json).collect();
    write(dir, "reports.json", &(serde_json::to_string_pretty(&array)? + "\n"))?;
    let mut s = Summary::new();
    s.insert("reports".into(), Value::Array(array));
    s.insert("all_pass".into(), json!(all));
    Ok((s, all))
}
