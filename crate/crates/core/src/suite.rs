//! The acceptance checks as runnable experiments, numbered 1 to 14.
//!
//! Expensive runs (very singular solutions, source solutions, the variational
//! profile) are cached on the [`Suite`] so checks sharing them pay once.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use log::info;

use crate::error::Result;
use crate::evolve::{
    evolve, heat_kernel, heat_kernel_exact, linear_companion, refine_source, vss_by_saturation, EvolveConfig, Saturation,
    Scheme, Trajectory,
};
use crate::grid::{Frame, RadialField, RadialGrid};
use crate::model::{derive_params, Model, ProblemParams};
use crate::operators::{hardy_k_inequality_check, hardy_rayleigh_min};
use crate::profile::{check_decay, minimize_j, relative_linf_difference, shoot_profile, DescentConfig, ProfileSolution, ShootingConfig};
use crate::verify::{
    critical_sweep_report, initial_trace, kernel_domination, keller_osserman, lebesgue_mass_slope, self_similar_consistency,
    source_kernel_match, structural_invariants, sweep_cell, Provenance, SweepThresholds, TraceExpectation, VerifyReport,
};

pub const CRITERIA: usize = 14;

pub const R_MAX: f64 = 12.0;
/// Grading used for all concentrated data; resolves widths down to ~4e-14 at n = 2048.
pub const SINGULAR_GRADING: f64 = 6.0;
const SATURATION_TOL: f64 = 1e-3;
const MAX_VARKAPPA: f64 = 1e14;

/// Record set of the `κ = 0` very singular solution: five small times for
/// trace and mass fits, two late times for self-similarity.
pub const VSS_TIMES: [f64; 7] = [1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 0.5, 1.0];
pub const SOURCE_TIMES: [f64; 13] = [1e-8, 2e-8, 5e-8, 1e-7, 2e-7, 5e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0];
pub const LEBESGUE_TIMES: [f64; 7] = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 0.5, 1.0];
pub const TRACE_RHO: [f64; 3] = [0.25, 0.5, 1.0];

fn widths(finest_exponent: i32) -> Vec<f64> {
    (2..=finest_exponent).map(|k| 10f64.powi(-k)).collect()
}

fn singular_grid(n: usize, lambda: f64) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::build(R_MAX, n, SINGULAR_GRADING, lambda, 3)?))
}

fn vss_config(times: &[f64], growth: f64) -> EvolveConfig {
    let mut cfg = EvolveConfig::new(1.0).with_record_times(times.to_vec());
    cfg.dt_growth = growth;
    // Purely geometric steps up to t = 1.
    cfg.dt_max = growth - 1.0;
    cfg
}

fn base_model(p: f64) -> Result<Model> {
    Model::new(ProblemParams::new(3, 0.0, 0.0, p)?)
}

fn failed(name: &str, provenance: Provenance, tol: f64, err: impl std::fmt::Display) -> VerifyReport {
    VerifyReport::new(name, provenance, tol).fail_closed(format!("error: {err}"))
}

#[derive(Debug, Clone)]
pub struct SourcePair {
    pub solution: Trajectory,
    /// Linear evolution of the same mollified data.
    pub companion: Trajectory,
    pub converged: bool,
}

pub struct Suite {
    pub seed: u64,
    pub sweep: SweepThresholds,
    vss: HashMap<usize, Arc<Saturation>>,
    sources: HashMap<u64, Arc<SourcePair>>,
    profile: Option<Arc<ProfileSolution>>,
}

impl Suite {
    pub fn new(seed: u64) -> Self {
        Self { seed, sweep: SweepThresholds::default(), vss: HashMap::new(), sources: HashMap::new(), profile: None }
    }

    /// Runs criterion `k` (1-based).
    pub fn run(&mut self, k: usize) -> VerifyReport {
        let start = Instant::now();
        let mut rep = match k {
            1 => exponent_algebra(),
            2 => linear_kernel(),
            3 => kernel_bound(),
            4 => flat_oracle(),
            5 => self.keller_osserman(),
            6 => self.kernel_domination(),
            7 => self.initial_trace(),
            8 => self.kernel_matching(),
            9 => self.critical_sweep(),
            10 => self.profile_cross_validation(),
            11 => self.self_similar(),
            12 => lebesgue_slopes(),
            13 => hardy_suite(),
            14 => self.structural(),
            _ => VerifyReport::new("unknown", Provenance::Trivial, 0.0).fail_closed(format!("no criterion {k}")),
        };
        rep.name = format!("C{k:02} {}", rep.name);
        info!("{} ({:.1?})", rep.line(), start.elapsed());
        rep
    }

    pub fn run_all(&mut self) -> Vec<VerifyReport> {
        (1..=CRITERIA).map(|k| self.run(k)).collect()
    }

    /// Very singular solution at `(N=3, κ=0, α=0, p=1.5)` on `n` cells.
    pub fn vss(&mut self, n: usize) -> Result<Arc<Saturation>> {
        if let Some(s) = self.vss.get(&n) {
            return Ok(s.clone());
        }
        let model = base_model(1.5)?;
        let grid = singular_grid(n, 0.0)?;
        let sat = vss_by_saturation(&grid, &model, &widths(13), &vss_config(&VSS_TIMES, 1.005), SATURATION_TOL, MAX_VARKAPPA)?;
        let sat = Arc::new(sat);
        self.vss.insert(n, sat.clone());
        Ok(sat)
    }

    /// Source solution `u_ϰ` at `p = 1.5` and its linear companion.
    pub fn source(&mut self, varkappa: f64) -> Result<Arc<SourcePair>> {
        if let Some(s) = self.sources.get(&varkappa.to_bits()) {
            return Ok(s.clone());
        }
        let model = base_model(1.5)?;
        let grid = singular_grid(2048, 0.0)?;
        let mut cfg = EvolveConfig::new(1.0).with_record_times(SOURCE_TIMES.to_vec()).with_rho(TRACE_RHO.to_vec());
        cfg.dt_growth = 1.01;
        let run = refine_source(&grid, &model, varkappa, &widths(12), 0, &cfg, SATURATION_TOL)?;
        let cfg = crate::evolve::config_for_width(&cfg, run.epsilon);
        let companion = linear_companion(&run.trajectory, &cfg)?;
        let pair = Arc::new(SourcePair { solution: run.trajectory, companion, converged: run.converged });
        self.sources.insert(varkappa.to_bits(), pair.clone());
        Ok(pair)
    }

    /// Variational profile for `(N=3, λ=0, β=0, p=1.5)` on `[0, 12]`, n = 2048.
    pub fn profile(&mut self) -> Result<Arc<ProfileSolution>> {
        if let Some(p) = &self.profile {
            return Ok(p.clone());
        }
        let model = base_model(1.5)?;
        let grid = Arc::new(RadialGrid::build(R_MAX, 2048, 2.0, 0.0, 3)?);
        let sol = Arc::new(minimize_j(&model, &grid, None, &DescentConfig::default())?);
        self.profile = Some(sol.clone());
        Ok(sol)
    }

    fn keller_osserman(&mut self) -> VerifyReport {
        let mut run = || -> Result<VerifyReport> {
            let coarse = self.vss(1024)?;
            let fine = self.vss(2048)?;
            let mut rep = keller_osserman(&coarse.trajectory, Some(&fine.trajectory));
            let saturated = coarse.saturated && fine.saturated;
            rep.pass &= saturated;
            rep.notes.push_str(&format!(
                "; saturated {saturated} at ϰ = {:e} / {:e}",
                coarse.varkappas.last().unwrap_or(&f64::NAN),
                fine.varkappas.last().unwrap_or(&f64::NAN)
            ));
            Ok(rep)
        };
        run().unwrap_or_else(|e| failed("keller_osserman", Provenance::Derived, 0.05, e))
    }

    fn kernel_domination(&mut self) -> VerifyReport {
        let mut parts = vec![];
        for varkappa in [1.0, 100.0] {
            parts.push(match self.source(varkappa) {
                Ok(s) => kernel_domination(&s.solution, &s.companion, varkappa),
                Err(e) => failed("kernel_domination", Provenance::Paper, 1e-8, e),
            });
        }
        VerifyReport::combine("kernel_domination", Provenance::Paper, 1e-8, parts)
    }

    fn initial_trace(&mut self) -> VerifyReport {
        let t0 = SOURCE_TIMES[0] / 10.0;
        let finite = match self.source(1.0) {
            Ok(s) => {
                let mut rep = initial_trace(&s.solution, &TRACE_RHO, t0, TraceExpectation::Finite(1.0));
                rep.pass &= s.converged;
                rep
            }
            Err(e) => failed("initial_trace", Provenance::Derived, 0.02, e),
        };
        let divergent = match self.vss(2048) {
            Ok(s) => initial_trace(&s.trajectory, &TRACE_RHO, t0, TraceExpectation::Divergent(1e3)),
            Err(e) => failed("initial_trace", Provenance::Derived, 0.02, e),
        };
        VerifyReport::combine("initial_trace", Provenance::Derived, 0.02, vec![finite, divergent])
    }

    fn kernel_matching(&mut self) -> VerifyReport {
        let mut parts = vec![];
        for varkappa in [1.0, 100.0] {
            parts.push(match self.source(varkappa) {
                Ok(s) => {
                    // Only the small-time part of the record set.
                    let mut u = s.solution.clone();
                    let mut k = s.companion.clone();
                    u.snapshots.retain(|f| f.time <= 1e-4);
                    k.snapshots.retain(|f| f.time <= 1e-4);
                    source_kernel_match(&u, &k, varkappa)
                }
                Err(e) => failed("source_kernel_match", Provenance::Derived, 0.05, e),
            });
        }
        VerifyReport::combine("kernel_matching", Provenance::Derived, 0.05, parts)
    }

    fn critical_sweep(&mut self) -> VerifyReport {
        let th = self.sweep;
        let mut parts = vec![];
        let families: [(&str, fn(f64) -> Result<Model>, [f64; 2]); 2] = [
            ("kappa=0", base_model, [1.6, 1.7]),
            ("kappa=-3/4", |p| Model::from_weighted(3, 0.5, 0.5, p), [1.6, 1.65]),
        ];
        for (label, make, ps) in families {
            let run = || -> Result<VerifyReport> {
                let mut cells = vec![];
                for p in ps {
                    let model = make(p)?;
                    let grid = Arc::new(RadialGrid::build(R_MAX, 2048, 4.0, model.lambda(), 3)?);
                    cells.push(sweep_cell(&grid, &model, 100.0, &SWEEP_WIDTHS, &sweep_config(), (0.5, 0.25), &th)?);
                }
                let mut rep = critical_sweep_report(&cells, &th);
                rep.name = format!("critical_sweep {label}");
                Ok(rep)
            };
            parts.push(run().unwrap_or_else(|e| failed("critical_sweep", Provenance::Paper, th.vanish, e)));
        }
        VerifyReport::combine("critical_sweep", Provenance::Paper, th.vanish, parts)
    }

    fn profile_cross_validation(&mut self) -> VerifyReport {
        const AGREE: f64 = 1e-3;
        const EL: f64 = 1e-6;
        let mut run = || -> Result<VerifyReport> {
            let var = self.profile()?;
            let model = base_model(1.5)?;
            let shot = shoot_profile(&model, &var.grid, &ShootingConfig::default())?;
            let diff = relative_linf_difference(&var, &shot, 6.0);
            let decay = check_decay(&var);
            let mut rep = VerifyReport::new("profile_cross_validation", Provenance::Derived, AGREE);
            rep.measured = vec![diff, var.j_value, var.el_residual_norm, var.decay_constant];
            rep.reference = vec![AGREE, 0.0, EL];
            rep.pass = diff <= AGREE && var.j_value < 0.0 && var.el_residual_norm < EL && decay.is_ok() && var.decay_constant.is_finite();
            rep.notes = format!(
                "v(0) = {:.6}, a* = {:?}, shooting EL residual {:.2e}, decay {:?}",
                var.v0,
                shot.a_star,
                shot.el_residual_norm,
                decay.map(|d| d.constant)
            );
            Ok(rep)
        };
        run().unwrap_or_else(|e| failed("profile_cross_validation", Provenance::Derived, AGREE, e))
    }

    fn self_similar(&mut self) -> VerifyReport {
        let mut run = || -> Result<VerifyReport> {
            let vss = self.vss(2048)?;
            let profile = self.profile()?;
            Ok(self_similar_consistency(&vss.trajectory, &profile))
        };
        run().unwrap_or_else(|e| failed("self_similar_consistency", Provenance::Derived, 0.03, e))
    }

    fn structural(&self) -> VerifyReport {
        let run = || -> Result<VerifyReport> {
            let model = Model::from_weighted(3, 0.5, 0.5, 1.5)?;
            let grid = Arc::new(RadialGrid::build(R_MAX, 256, 2.0, model.lambda(), 3)?);
            Ok(structural_invariants(&grid, &model, self.seed)?.0)
        };
        run().unwrap_or_else(|e| failed("structural_invariants", Provenance::Trivial, 1e-13, e))
    }
}

/// Widths for the sweep: halvings from 1e-2.
pub const SWEEP_WIDTHS: [f64; 11] =
    [1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4, 3.125e-4, 1.5625e-4, 7.8125e-5, 3.90625e-5, 1.953125e-5, 9.765625e-6];

fn sweep_config() -> EvolveConfig {
    let mut cfg = EvolveConfig::new(0.25);
    cfg.dt_growth = 1.01;
    cfg
}

/// Criterion 1: the worked parameter sets.
pub fn exponent_algebra() -> VerifyReport {
    const TOL: f64 = 1e-12;
    let cases: [((usize, f64, f64, f64), [f64; 5]); 3] = [
        ((3, 0.0, 0.0, 1.5), [0.0, 0.0, 2.0, 5.0 / 3.0, 5.0 / 3.0]),
        ((3, -0.75, 0.0, 2.0), [0.5, 0.5, 1.25, 1.625, 1.0 + 4.0 / 7.0]),
        ((4, 0.75, 1.0, 2.0), [-0.5, 0.5, 1.25, 1.0 + 2.5 / 3.0, 1.0 + 6.0 / 7.0]),
    ];
    let mut rep = VerifyReport::new("exponent_algebra", Provenance::Trivial, TOL);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut residual = 0.0f64;
    let mut ok = true;
    for ((n, kappa, alpha, p), want) in cases {
        match ProblemParams::new(n, kappa, alpha, p).and_then(|pp| derive_params(&pp).map(|d| (pp, d))) {
            Ok((pp, d)) => {
                let got = [d.lambda, d.beta, d.sigma, d.p_star, d.p_star_star];
                worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
                residual = residual.max((d.lambda * d.lambda + d.lambda * (pp.dim as f64 - 2.0) + pp.kappa).abs());
            }
            Err(_) => ok = false,
        }
    }
    let rejected = ProblemParams::new(3, 0.25, 0.0, 2.0).is_err();
    let elapsed = start.elapsed().as_secs_f64();
    // Wall time decides the verdict but is kept out of the record, which must
    // be reproducible.
    let fast = elapsed < 1e-3;
    rep.measured = vec![worst, residual];
    rep.reference = vec![TOL, TOL];
    rep.pass = ok && worst <= TOL && residual <= TOL && rejected && fast;
    rep.notes = format!("κ = ((N-2)/2)² rejected: {rejected}; runtime below 1 ms: {fast}");
    rep
}

fn kernel_grid(n: usize, lambda: f64, dim: usize) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::build(R_MAX, n, 2.0, lambda, dim)?))
}

fn kernel_config(t_end: f64) -> EvolveConfig {
    let mut cfg = EvolveConfig::new(t_end).linear();
    cfg.dt_growth = 1.001;
    cfg.dt_max = 2e-4;
    cfg
}

const KERNEL_WIDTHS: [f64; 2] = [0.01, 0.005];

/// Criterion 2: `p_{1/4}(0⁺, 0) = π^{-3/2}` and the `L¹` distance to the Gaussian.
pub fn linear_kernel() -> VerifyReport {
    const VALUE_TOL: f64 = 0.01;
    const L1_TOL: f64 = 1e-3;
    let run = || -> Result<VerifyReport> {
        let grid = kernel_grid(1024, 0.0, 3)?;
        let k = heat_kernel(&grid, &[0.25], &KERNEL_WIDTHS, &kernel_config(0.25))?;
        let field = &k.fields[0];
        let exact = RadialField::from_fn(&grid, Frame::Weighted, 0.25, |r| heat_kernel_exact(3, 0.0, 0.25, r));
        let value = field.values[0];
        let reference = PI.powf(-1.5);
        let rel = (value - reference).abs() / reference;
        let l1 = field.weighted_l1_distance(&exact)?;
        let mut rep = VerifyReport::new("linear_kernel", Provenance::Trivial, VALUE_TOL);
        rep.measured = vec![value, rel, l1];
        rep.reference = vec![reference, VALUE_TOL, L1_TOL];
        rep.pass = rel <= VALUE_TOL && l1 <= L1_TOL;
        rep.notes = format!("n = 1024, ε-extrapolation change {:.2e}", k.last_change[0]);
        Ok(rep)
    };
    run().unwrap_or_else(|e| failed("linear_kernel", Provenance::Trivial, VALUE_TOL, e))
}

/// `sup_s e^{-s²δ/(4(1+δ))} (1+s)^λ` times the kernel normalization: the
/// smallest constant for which the closed-form kernel meets the envelope.
pub fn exact_kernel_bound(dim: usize, lambda: f64, delta: f64) -> f64 {
    let a = delta / (4.0 * (1.0 + delta));
    let s = if lambda > 0.0 { (-1.0 + (1.0 + 2.0 * lambda / a).sqrt()) / 2.0 } else { 0.0 };
    heat_kernel_exact(dim, lambda, 1.0, 0.0) * (-a * s * s).exp() * (1.0 + s).powf(lambda)
}

/// Criterion 3: one constant `c_δ` covers all times. The fitted constants
/// must agree across `t` and with the closed-form optimum within 5%.
pub fn kernel_bound() -> VerifyReport {
    const DELTA: f64 = 0.5;
    const SPREAD: f64 = 0.05;
    let times = [0.0625, 0.25, 1.0];
    let mut parts = vec![];
    for (lambda, dim) in [(0.0, 3usize), (0.5, 3), (-0.5, 4)] {
        let run = || -> Result<VerifyReport> {
            let grid = kernel_grid(1024, lambda, dim)?;
            let k = heat_kernel(&grid, &times, &KERNEL_WIDTHS, &kernel_config(1.0))?;
            let (c, per_t) = crate::evolve::fit_kernel_bound(&k.fields, DELTA);
            let lo = per_t.iter().copied().fold(f64::INFINITY, f64::min);
            let exact = exact_kernel_bound(dim, lambda, DELTA);
            let spread = (c - lo) / c;
            let dev = (c - exact).abs() / exact;
            let mut rep = VerifyReport::new(&format!("kernel_bound λ={lambda}"), Provenance::Derived, SPREAD);
            rep.measured = vec![c, spread, dev];
            rep.reference = vec![exact];
            rep.pass = c.is_finite() && c > 0.0 && spread <= SPREAD && dev <= SPREAD;
            rep.notes = format!("per-t c_δ {per_t:?}");
            Ok(rep)
        };
        parts.push(run().unwrap_or_else(|e| failed("kernel_bound", Provenance::Derived, SPREAD, e)));
    }
    VerifyReport::combine("kernel_bound", Provenance::Derived, SPREAD, parts)
}

/// Criterion 4: flat data follow `u' = -u²`, so `u(1) = 1/2`.
pub fn flat_oracle() -> VerifyReport {
    const TOL: f64 = 1e-6;
    let run = || -> Result<VerifyReport> {
        let grid = Arc::new(RadialGrid::build(R_MAX, 256, 2.0, 0.0, 3)?);
        let model = Model::from_weighted(3, 0.0, 0.0, 2.0)?;
        let u0 = RadialField::from_fn(&grid, Frame::Weighted, 0.0, |_| 1.0);
        let mut cfg = EvolveConfig::new(1.0);
        cfg.dt0 = 1e-4;
        cfg.dt_max = 2.5e-3;
        cfg.scheme = Scheme::Extrapolated;
        let traj = evolve(&u0, &cfg, &model)?;
        let value = traj.snapshots[0].interpolate(0.5);
        let mut rep = VerifyReport::new("flat_oracle", Provenance::Trivial, TOL);
        rep.measured = vec![value];
        rep.reference = vec![0.5];
        rep.pass = (value - 0.5).abs() <= TOL;
        rep.notes = "interior value at r = 0.5, extrapolated implicit Euler".into();
        Ok(rep)
    };
    run().unwrap_or_else(|e| failed("flat_oracle", Provenance::Trivial, TOL, e))
}

/// Criterion 12: Lebesgue mass exponents at `κ = 3/16` (`λ = -1/4`) in the
/// three regimes.
pub fn lebesgue_slopes() -> VerifyReport {
    let mut parts = vec![];
    // (p, n, grading, finest width exponent). Near p* the ε-error decays like
    // ε^{d(p*-p)}, so p = 1.7 needs widths down to 1e-20.
    for (p, n, grading, finest) in [(1.5, 2048, SINGULAR_GRADING, 13), (5.0 / 3.0, 2048, SINGULAR_GRADING, 13), (1.7, 4096, 8.0, 20)] {
        let run = || -> Result<VerifyReport> {
            let model = Model::new(ProblemParams::new(3, 3.0 / 16.0, 0.0, p)?)?;
            let grid = Arc::new(RadialGrid::build(R_MAX, n, grading, model.lambda(), 3)?);
            let sat = vss_by_saturation(&grid, &model, &widths(finest), &vss_config(&LEBESGUE_TIMES, 1.01), SATURATION_TOL, MAX_VARKAPPA)?;
            let mut rep = lebesgue_mass_slope(&sat.trajectory, 1.0);
            rep.notes.push_str(&format!(
                "; saturated {} at ϰ = {:e}, widths converged {:?}",
                sat.saturated,
                sat.varkappas.last().unwrap_or(&f64::NAN),
                sat.width_converged
            ));
            Ok(rep)
        };
        parts.push(run().unwrap_or_else(|e| failed("lebesgue_mass_slope", Provenance::Trivial, 0.05, e)));
    }
    VerifyReport::combine("lebesgue_slopes", Provenance::Trivial, 0.05, parts)
}

/// Criterion 13: Rayleigh minima within 5% at n = 512, gap shrinking under
/// refinement, and the `K`-weighted inequality on a bump.
pub fn hardy_suite() -> VerifyReport {
    const GAP: f64 = 0.05;
    let mut parts = vec![];
    // (N, λ, grading); see the grading notes in the README.
    for (dim, lambda, grading) in [(3usize, 0.0, 2.5), (4, -0.5, 2.5), (3, 0.5, 1.5)] {
        let run = || -> Result<VerifyReport> {
            let mut gaps = vec![];
            for n in [128, 256, 512] {
                let grid = Arc::new(RadialGrid::build(1.0, n, grading, lambda, dim)?);
                gaps.push(hardy_rayleigh_min(&grid)?.relative_gap);
            }
            let monotone = gaps.windows(2).all(|w| w[1].abs() <= w[0].abs());
            let last = gaps[gaps.len() - 1];
            let mut rep = VerifyReport::new(&format!("hardy N={dim} λ={lambda}"), Provenance::Paper, GAP);
            rep.measured = gaps.clone();
            rep.reference = vec![GAP];
            rep.pass = last.abs() <= GAP && monotone;
            rep.notes = format!("grading {grading}, monotone {monotone}");
            Ok(rep)
        };
        parts.push(run().unwrap_or_else(|e| failed("hardy", Provenance::Paper, GAP, e)));
    }
    let k_check = || -> Result<VerifyReport> {
        let grid = Arc::new(RadialGrid::build(4.0, 512, 1.0, 0.0, 3)?);
        let theta = RadialField::from_fn(&grid, Frame::Weighted, 0.0, |r| if r < 2.0 { (1.0 - r * r / 4.0).powi(2) } else { 0.0 });
        let k = hardy_k_inequality_check(&theta);
        let mut rep = VerifyReport::new("hardy_k_weighted", Provenance::Paper, k.tol);
        rep.measured = vec![k.lhs, k.rhs];
        rep.pass = k.holds;
        rep.notes = "bump (1 - r²/4)² on r < 2".into();
        Ok(rep)
    };
    parts.push(k_check().unwrap_or_else(|e| failed("hardy_k_weighted", Provenance::Paper, 1e-2, e)));
    VerifyReport::combine("hardy_suite", Provenance::Paper, GAP, parts)
}
