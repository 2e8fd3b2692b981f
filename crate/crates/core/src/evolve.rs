//! Implicit time stepping of `ũ_t = Δ_{h²}ũ - r^β ũ^p`, mollified Dirac data,
//! the weighted heat kernel, source solutions and the very singular solution
//! as the saturation limit `ϰ → ∞`.

use std::sync::Arc;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Frame, RadialField, RadialGrid};
use crate::linalg::Tridiagonal;
use crate::model::Model;
use crate::operators::{assemble_laplacian, OperatorMatrix};

/// Minimum number of cells inside the mollification radius.
pub const MIN_CELLS_PER_EPSILON: usize = 8;
/// Values in `[-NEG_TOL, 0)` are clamped to zero and logged.
pub const NEG_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Backward Euler: monotone and positivity preserving, first order.
    ImplicitEuler,
    /// `2·E(dt/2)² - E(dt)`: second order, no discrete comparison principle.
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub t_end: f64,
    pub dt0: f64,
    pub dt_growth: f64,
    pub dt_max: f64,
    pub newton: NewtonConfig,
    pub linear_only: bool,
    pub record_times: Vec<f64>,
    /// Radii at which `∫_{B_ρ} ũ h² dx` is tracked every step.
    pub rho: Vec<f64>,
    pub scheme: Scheme,
}

impl EvolveConfig {
    /// `dt₀ = 1e-6 t_end`, growth 1.05, cap `t_end/100`, one snapshot at `t_end`.
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            dt0: 1e-6 * t_end,
            dt_growth: 1.05,
            dt_max: t_end / 100.0,
            newton: NewtonConfig::default(),
            linear_only: false,
            record_times: vec![t_end],
            rho: vec![],
            scheme: Scheme::ImplicitEuler,
        }
    }

    pub fn with_record_times(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn with_rho(mut self, rho: Vec<f64>) -> Self {
        self.rho = rho;
        self
    }

    pub fn linear(mut self) -> Self {
        self.linear_only = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if !(self.dt0 > 0.0) {
            return bad(format!("dt0 = {} must be positive", self.dt0));
        }
        if !(1.0..=1.2).contains(&self.dt_growth) {
            return bad(format!("dt growth {} outside [1, 1.2]", self.dt_growth));
        }
        if !(self.dt_max >= self.dt0) {
            return bad(format!("dt_max = {} below dt0 = {}", self.dt_max, self.dt0));
        }
        if self.record_times.iter().any(|&t| !(t > 0.0 && t <= self.t_end)) {
            return bad("record times must lie in (0, t_end]".into());
        }
        if self.record_times.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("record times must be strictly increasing".into());
        }
        if self.newton.max_iter == 0 || !(self.newton.tol > 0.0) {
            return bad("Newton tolerance and iteration cap must be positive".into());
        }
        Ok(())
    }
}

/// Initial datum `ϰδ₀` mollified at width `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceData {
    pub varkappa: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub dt: f64,
    /// `∫_{B_ρ} ũ h² dx` for each configured ρ.
    pub masses: Vec<f64>,
    pub total_mass: f64,
    pub sup: f64,
    /// Running `∫₀ᵗ∫ r^β ũ^p h² dx ds`.
    pub absorption_integral: f64,
    /// Running flux through `R_max`.
    pub outflow: f64,
    /// `M(t_k) - M(t_{k-1}) + dt·(absorption + outflow)`, zero up to Newton tolerance.
    pub mass_defect: f64,
    pub newton_iterations: usize,
    pub clamped_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub model: Model,
    pub snapshots: Vec<RadialField>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub rho: Vec<f64>,
    pub clamped_mass_total: f64,
    pub source: Option<SourceData>,
}

impl Trajectory {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.snapshots[0].grid
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&RadialField> {
        self.snapshots.iter().find(|s| (s.time - t).abs() <= 1e-12 * t.max(1.0))
    }

    /// `t,mass_rho1,…,total_mass,sup,absorption_integral,outflow,mass_defect` rows.
    pub fn diagnostics_csv(&self) -> String {
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((1..=self.rho.len()).map(|k| format!("mass_rho{k}")));
        header.extend(
            ["total_mass", "sup", "absorption_integral", "outflow", "mass_defect"].map(String::from),
        );
        let rows: Vec<Vec<f64>> = self
            .diagnostics
            .iter()
            .map(|d| {
                let mut row = vec![d.t];
                row.extend(&d.masses);
                row.extend([d.total_mass, d.sup, d.absorption_integral, d.outflow, d.mass_defect]);
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        crate::io::table_csv(&header, &rows)
    }
}

/// `ϰ e^{-r²/(2ε²)}` normalized to weighted mass exactly `ϰ`.
pub fn mollified_delta(grid: &Arc<RadialGrid>, varkappa: f64, epsilon: f64) -> Result<RadialField> {
    if !(varkappa > 0.0) || !varkappa.is_finite() {
        return Err(Error::InvalidParams(format!("varkappa = {varkappa} must be positive and finite")));
    }
    if !(epsilon > 0.0) || epsilon >= grid.r_max() / 10.0 {
        return Err(Error::InvalidParams(format!("epsilon = {epsilon} must lie in (0, R_max/10)")));
    }
    let cells = grid.cells_within(epsilon);
    if cells < MIN_CELLS_PER_EPSILON {
        return Err(Error::UnderResolved { epsilon, cells, required: MIN_CELLS_PER_EPSILON });
    }
    let shape = RadialField::from_fn(grid, Frame::Weighted, 0.0, |r| (-r * r / (2.0 * epsilon * epsilon)).exp());
    let scale = varkappa / shape.weighted_l1_norm();
    Ok(shape.map(|_, v| v * scale))
}

/// Outcome of one implicit step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub clamped_mass: f64,
    /// `ω Σ m_i r_i^β u_i^p` at the new level.
    pub absorption_rate: f64,
    /// `ω · flux through R_max` at the new level.
    pub outflow_rate: f64,
}

/// Reusable implicit Euler solver for one grid and model.
#[derive(Debug, Clone)]
pub struct Stepper {
    op: OperatorMatrix,
    r_beta: Vec<f64>,
    p: f64,
    omega: f64,
    pub newton: NewtonConfig,
    pub linear_only: bool,
}

impl Stepper {
    pub fn new(grid: &Arc<RadialGrid>, model: &Model, newton: NewtonConfig, linear_only: bool) -> Result<Self> {
        check_grid_model(grid, model)?;
        let op = assemble_laplacian(grid);
        let beta = model.beta();
        let r_beta = grid.centers().iter().map(|r| r.powf(beta)).collect();
        Ok(Self { op, r_beta, p: model.p(), omega: grid.omega(), newton, linear_only })
    }

    pub fn operator(&self) -> &OperatorMatrix {
        &self.op
    }

    fn absorption_rate(&self, u: &[f64]) -> f64 {
        if self.linear_only {
            return 0.0;
        }
        let m = self.op.masses();
        self.omega * u.iter().zip(&self.r_beta).zip(m).map(|((&v, &rb), &mi)| rb * v.max(0.0).powf(self.p) * mi).sum::<f64>()
    }

    /// Solves `u⁺ - dt A u⁺ + dt r^β (u⁺)^p = u` by Newton, starting from the
    /// linear solve, which is a supersolution; the iterates then decrease
    /// monotonically to the root.
    pub fn step(&self, u: &[f64], dt: f64, time: f64) -> Result<StepOutcome> {
        let n = u.len();
        let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if let Some(min) = u.iter().copied().reduce(f64::min) {
            if min < -NEG_TOL * scale {
                return Err(Error::NegativeUndershoot { time, min });
            }
        }
        let u: Vec<f64> = u.iter().map(|v| v.max(0.0)).collect();
        let a = self.op.matrix();
        let mut base = Tridiagonal::zeros(n);
        for i in 0..n {
            base.sub[i] = -dt * a.sub[i];
            base.sup[i] = -dt * a.sup[i];
            base.diag[i] = 1.0 - dt * a.diag[i];
        }
        let singular = || Error::NewtonDiverged { time, residual: f64::NAN, iterations: 0 };
        let mut x = base.solve(&u).ok_or_else(singular)?;
        let mut iterations = 1;
        let mut residual = 0.0;
        if !self.linear_only {
            let tol = self.newton.tol;
            let mut jac = base.clone();
            let mut converged = false;
            for it in 1..=self.newton.max_iter {
                iterations = it;
                for v in x.iter_mut() {
                    *v = v.max(0.0);
                }
                let ax = self.op.apply(&x);
                let mut g = vec![0.0; n];
                for i in 0..n {
                    let xp1 = x[i].powf(self.p - 1.0);
                    g[i] = x[i] - dt * ax[i] + dt * self.r_beta[i] * xp1 * x[i] - u[i];
                    jac.diag[i] = base.diag[i] + dt * self.p * self.r_beta[i] * xp1;
                }
                // Residual in units of ũ: the Newton correction it would produce locally.
                residual = g.iter().zip(&jac.diag).fold(0.0f64, |m, (gi, d)| m.max((gi / d).abs()));
                let size = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                if !residual.is_finite() {
                    break;
                }
                let delta = jac.solve(&g).ok_or_else(singular)?;
                for (xi, di) in x.iter_mut().zip(&delta) {
                    *xi -= di;
                }
                // The last correction is applied even once converged: the
                // remaining error is then quadratically small.
                if residual <= tol * size {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NewtonDiverged { time, residual, iterations });
            }
        }
        let clamped_mass = self.clamp(&mut x, time)?;
        Ok(StepOutcome {
            absorption_rate: self.absorption_rate(&x),
            outflow_rate: self.omega * self.op.outflow(&x),
            values: x,
            iterations,
            residual,
            clamped_mass,
        })
    }

    /// Clamps values in `[-NEG_TOL·scale, 0)` and returns their weighted mass.
    fn clamp(&self, x: &mut [f64], time: f64) -> Result<f64> {
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut clamped = 0.0;
        for (v, m) in x.iter_mut().zip(self.op.masses()) {
            if *v < 0.0 {
                if *v < -NEG_TOL * scale {
                    return Err(Error::NegativeUndershoot { time, min: *v });
                }
                clamped += -*v * m;
                *v = 0.0;
            }
        }
        Ok(self.omega * clamped)
    }

    /// One step of the configured scheme. Rates are combined with the same
    /// weights as the values, so the discrete mass identity still closes.
    pub fn advance(&self, u: &[f64], dt: f64, time: f64, scheme: Scheme) -> Result<StepOutcome> {
        match scheme {
            Scheme::ImplicitEuler => self.step(u, dt, time),
            Scheme::Extrapolated => {
                let full = self.step(u, dt, time)?;
                let h1 = self.step(u, 0.5 * dt, time)?;
                let h2 = self.step(&h1.values, 0.5 * dt, time)?;
                let mut values: Vec<f64> = h2.values.iter().zip(&full.values).map(|(a, b)| 2.0 * a - b).collect();
                // Extrapolation may dip below zero in the far field; only round-off sized dips are tolerated.
                let mut clamped = 0.0;
                let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                for (v, m) in values.iter_mut().zip(self.op.masses()) {
                    if *v < 0.0 {
                        if *v < -1e-10 * scale {
                            return Err(Error::NegativeUndershoot { time, min: *v });
                        }
                        clamped += -*v * m;
                        *v = 0.0;
                    }
                }
                let comb = |a: f64, b: f64, c: f64| a + b - c;
                Ok(StepOutcome {
                    absorption_rate: comb(h1.absorption_rate, h2.absorption_rate, full.absorption_rate),
                    outflow_rate: comb(h1.outflow_rate, h2.outflow_rate, full.outflow_rate),
                    values,
                    iterations: full.iterations + h1.iterations + h2.iterations,
                    residual: full.residual.max(h1.residual).max(h2.residual),
                    clamped_mass: self.omega * clamped + full.clamped_mass + h1.clamped_mass + h2.clamped_mass,
                })
            }
        }
    }
}

fn check_grid_model(grid: &RadialGrid, model: &Model) -> Result<()> {
    if grid.dim() != model.dim() || (grid.lambda() - model.lambda()).abs() > 1e-14 {
        return Err(Error::GridMismatch(format!(
            "grid has N={}, λ={} but the model has N={}, λ={}",
            grid.dim(),
            grid.lambda(),
            model.dim(),
            model.lambda()
        )));
    }
    Ok(())
}

/// One implicit Euler step of the weighted equation.
pub fn step(u: &RadialField, dt: f64, model: &Model, linear_only: bool) -> Result<RadialField> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt = {dt} must be positive")));
    }
    let stepper = Stepper::new(&u.grid, model, NewtonConfig::default(), linear_only)?;
    let out = stepper.step(&u.values, dt, u.time + dt)?;
    Ok(RadialField { grid: u.grid.clone(), values: out.values, frame: Frame::Weighted, time: u.time + dt })
}

/// Geometric time stepping from `u0` to `t_end`, landing exactly on every record time.
pub fn evolve(u0: &RadialField, config: &EvolveConfig, model: &Model) -> Result<Trajectory> {
    config.validate()?;
    if u0.frame != Frame::Weighted {
        return Err(Error::GridMismatch("evolution runs in the weighted frame".into()));
    }
    let grid = u0.grid.clone();
    for &rho in &config.rho {
        if !(rho > 0.0 && rho <= grid.r_max()) {
            return Err(Error::OutOfRange { rho, r_max: grid.r_max() });
        }
    }
    let stepper = Stepper::new(&grid, model, config.newton, config.linear_only)?;
    let omega = grid.omega();
    let masses_of = |f: &RadialField| -> Result<Vec<f64>> { config.rho.iter().map(|&r| f.weighted_integral(r)).collect() };
    let total_of = |v: &[f64]| omega * v.iter().zip(grid.masses()).map(|(a, m)| a * m).sum::<f64>();

    let mut u = u0.clone();
    u.check_nonnegative(NEG_TOL * u.sup_abs().max(1.0))?;
    let mut t = u0.time;
    let mut dt_nominal = config.dt0;
    let mut absorbed = 0.0;
    let mut outflow = 0.0;
    let mut clamped_total = 0.0;
    let mut diagnostics = vec![StepDiagnostics {
        t,
        dt: 0.0,
        masses: masses_of(&u)?,
        total_mass: total_of(&u.values),
        sup: u.sup_abs(),
        absorption_integral: 0.0,
        outflow: 0.0,
        mass_defect: 0.0,
        newton_iterations: 0,
        clamped_mass: 0.0,
    }];
    let mut snapshots = Vec::with_capacity(config.record_times.len());
    let t_start = t;
    let mut next_record = config.record_times.iter().copied().filter(|&r| r > t_start).peekable();
    let t_end = config.t_end;

    while t < t_end * (1.0 - 1e-14) {
        let target = next_record.peek().copied().unwrap_or(t_end);
        let mut dt = dt_nominal;
        let mut hits_record = false;
        if t + dt >= target * (1.0 - 1e-12) {
            dt = target - t;
            hits_record = next_record.peek().is_some();
        }
        let out = stepper.advance(&u.values, dt, t + dt, config.scheme)?;
        let m_old = total_of(&u.values);
        let m_new = total_of(&out.values);
        absorbed += dt * out.absorption_rate;
        outflow += dt * out.outflow_rate;
        clamped_total += out.clamped_mass;
        t = if hits_record { target } else { t + dt };
        u = RadialField { grid: grid.clone(), values: out.values, frame: Frame::Weighted, time: t };
        diagnostics.push(StepDiagnostics {
            t,
            dt,
            masses: masses_of(&u)?,
            total_mass: m_new,
            sup: u.sup_abs(),
            absorption_integral: absorbed,
            outflow,
            mass_defect: m_new - m_old + dt * (out.absorption_rate + out.outflow_rate),
            newton_iterations: out.iterations,
            clamped_mass: out.clamped_mass,
        });
        if hits_record {
            next_record.next();
            snapshots.push(u.clone());
        }
        dt_nominal = (dt_nominal * config.dt_growth).min(config.dt_max);
    }
    if config.record_times.is_empty() {
        snapshots.push(u.clone());
    }
    if clamped_total > 0.0 {
        debug!("clamped mass {clamped_total:e} over {} steps", diagnostics.len() - 1);
    }
    Ok(Trajectory {
        model: *model,
        snapshots,
        diagnostics,
        rho: config.rho.clone(),
        clamped_mass_total: clamped_total,
        source: None,
    })
}

/// Closed-form weighted kernel from the origin,
/// `p_t(r, 0) = t^{-d/2} e^{-r²/4t} / (ω_N 2^{d-1} Γ(d/2))`, `d = N + 2λ`.
pub fn heat_kernel_exact(dim: usize, lambda: f64, t: f64, r: f64) -> f64 {
    let d = dim as f64 + 2.0 * lambda;
    let norm = crate::grid::sphere_area(dim) * 2f64.powf(d - 1.0) * statrs::function::gamma::gamma(d / 2.0);
    t.powf(-d / 2.0) * (-r * r / (4.0 * t)).exp() / norm
}

#[derive(Debug, Clone)]
pub struct KernelResult {
    /// Richardson-extrapolated kernel at each requested time.
    pub fields: Vec<RadialField>,
    /// Raw kernel per `ε` (outer) and time (inner).
    pub raw: Vec<Vec<RadialField>>,
    pub epsilons: Vec<f64>,
    /// `‖K_ε - K_{ε'}‖_{L¹_{h²}}` between the last two levels, per time.
    pub last_change: Vec<f64>,
    /// `‖extrapolated - K_finest‖_{L¹_{h²}}`, per time.
    pub error_estimate: Vec<f64>,
}

/// `p^{h²}_t(·,0)` by linear evolution of mollified deltas of decreasing width,
/// extrapolated in `ε²` from the two finest levels.
pub fn heat_kernel(grid: &Arc<RadialGrid>, times: &[f64], epsilons: &[f64], base: &EvolveConfig) -> Result<KernelResult> {
    if epsilons.len() < 2 {
        return Err(Error::InvalidParams("heat_kernel needs at least two mollification widths".into()));
    }
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParams("kernel times must be positive".into()));
    }
    let model = Model::from_weighted(grid.dim(), grid.lambda(), 0.0, 2.0)?;
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let mut config = base.clone();
    config.linear_only = true;
    config.t_end = t_end;
    config.dt_max = config.dt_max.min(t_end / 100.0);
    config.record_times = times.to_vec();
    let mut raw = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let u0 = mollified_delta(grid, 1.0, eps)?;
        raw.push(evolve(&u0, &config, &model)?.snapshots);
    }
    let k = raw.len();
    let (e1, e2) = (epsilons[k - 2], epsilons[k - 1]);
    let q = (e2 / e1).powi(2);
    let mut fields = vec![];
    let mut last_change = vec![];
    let mut error_estimate = vec![];
    for j in 0..times.len() {
        let (a, b) = (&raw[k - 2][j], &raw[k - 1][j]);
        let change = a.weighted_l1_distance(b)?;
        let values = a.values.iter().zip(&b.values).map(|(x, y)| (y - q * x) / (1.0 - q)).collect();
        let ext = RadialField { grid: grid.clone(), values, frame: Frame::Weighted, time: b.time };
        error_estimate.push(ext.weighted_l1_distance(b)?);
        last_change.push(change);
        fields.push(ext);
    }
    let worst = last_change.iter().copied().fold(0.0, f64::max);
    if worst > 1e-3 {
        return Err(Error::NotConverged(format!(
            "kernel iterates at ε = {e1:e}, {e2:e} differ by {worst:e} in L¹_h²"
        )));
    }
    Ok(KernelResult { fields, raw, epsilons: epsilons.to_vec(), last_change, error_estimate })
}

/// Per-time and global `c_δ = max_r p_t(r,0) / [t^{-d/2} e^{-r²/(4(1+δ)t)} (r/√t + 1)^{-λ}]`.
pub fn fit_kernel_bound(kernels: &[RadialField], delta: f64) -> (f64, Vec<f64>) {
    let per_t: Vec<f64> = kernels
        .iter()
        .map(|k| {
            let t = k.time;
            let d = k.grid.effective_dim();
            let lambda = k.grid.lambda();
            k.grid
                .centers()
                .iter()
                .zip(&k.values)
                .map(|(&r, &v)| {
                    let env = t.powf(-d / 2.0) * (-r * r / (4.0 * (1.0 + delta) * t)).exp() * (r / t.sqrt() + 1.0).powf(-lambda);
                    v / env
                })
                .fold(0.0, f64::max)
        })
        .collect();
    (per_t.iter().copied().fold(0.0, f64::max), per_t)
}

/// Schedule for data of width `ε`: the first step must resolve the `ε²`
/// diffusion time, otherwise the effective regularization is `√dt₀`.
pub fn config_for_width(config: &EvolveConfig, epsilon: f64) -> EvolveConfig {
    let mut cfg = config.clone();
    cfg.dt0 = cfg.dt0.min(0.1 * epsilon * epsilon);
    cfg
}

/// Outcome of an `ε`-refinement, converged or not.
#[derive(Debug, Clone)]
pub struct SourceRun {
    pub trajectory: Trajectory,
    pub epsilon: f64,
    pub last_change: f64,
    pub converged: bool,
    /// Index into the `ε` list of the accepted run.
    pub level: usize,
}

/// Runs the widths `epsilons[start..]` until two successive solutions differ
/// by less than `rel_tol`. Returns the finest run either way.
pub fn refine_source(
    grid: &Arc<RadialGrid>,
    model: &Model,
    varkappa: f64,
    epsilons: &[f64],
    start: usize,
    config: &EvolveConfig,
    rel_tol: f64,
) -> Result<SourceRun> {
    if start >= epsilons.len() {
        return Err(Error::Precondition("empty ε list".into()));
    }
    let mut prev: Option<Trajectory> = None;
    let mut last_change = f64::NAN;
    for (level, &eps) in epsilons.iter().enumerate().skip(start) {
        let u0 = mollified_delta(grid, varkappa, eps)?;
        let mut traj = evolve(&u0, &config_for_width(config, eps), model)?;
        traj.source = Some(SourceData { varkappa, epsilon: eps });
        if let Some(p) = &prev {
            last_change = relative_change(p, &traj)?;
            debug!("ϰ={varkappa:e} ε={eps:e}: relative change {last_change:e}");
            if last_change < rel_tol {
                return Ok(SourceRun { trajectory: traj, epsilon: eps, last_change, converged: true, level });
            }
        }
        prev = Some(traj);
    }
    let trajectory = prev.expect("at least one width was run");
    Ok(SourceRun {
        trajectory,
        epsilon: epsilons[epsilons.len() - 1],
        last_change,
        converged: false,
        level: epsilons.len() - 1,
    })
}

/// `u_ϰ` as the limit of mollified data, `ε` decreasing through `epsilons`.
pub fn source_solution(
    grid: &Arc<RadialGrid>,
    model: &Model,
    varkappa: f64,
    epsilons: &[f64],
    config: &EvolveConfig,
    rel_tol: f64,
) -> Result<Trajectory> {
    if !model.is_subcritical() {
        warn!("source solution requested at p = {} >= p* = {}", model.p(), model.derived.p_star);
    }
    let run = refine_source(grid, model, varkappa, epsilons, 0, config, rel_tol)?;
    if !run.converged {
        return Err(Error::NotConverged(format!(
            "source solution with ϰ={varkappa:e}: last ε-refinement changed the solution by {:e} (need < {rel_tol:e})",
            run.last_change
        )));
    }
    Ok(run.trajectory)
}

/// Largest relative `L¹_{h²}` change between matching snapshots.
pub fn relative_change(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.snapshots.len() != b.snapshots.len() {
        return Err(Error::GridMismatch("trajectories have different record sets".into()));
    }
    let mut worst = 0.0f64;
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        let norm = y.weighted_l1_norm();
        let diff = x.weighted_l1_distance(y)?;
        if norm > 0.0 {
            worst = worst.max(diff / norm);
        } else if diff > 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct Saturation {
    pub trajectory: Trajectory,
    pub varkappas: Vec<f64>,
    /// Width accepted at each `ϰ`.
    pub epsilons: Vec<f64>,
    /// Whether the `ε`-refinement converged at each `ϰ`.
    pub width_converged: Vec<bool>,
    /// Relative change between consecutive `ϰ` levels.
    pub changes: Vec<f64>,
    pub saturated: bool,
}

impl Saturation {
    pub fn require_saturated(self) -> Result<Self> {
        if self.saturated {
            Ok(self)
        } else {
            Err(Error::NotSaturated {
                last_varkappa: *self.varkappas.last().unwrap_or(&f64::NAN),
                last_change: self.changes.last().copied().unwrap_or(f64::NAN),
            })
        }
    }
}

/// `u_∞ = lim_{ϰ→∞} u_ϰ`: `ϰ = 10, 100, …` up to `max_varkappa`, each an
/// `ε`-refined source solution, until the relative change at all record
/// times drops below `rel_tol`. An unsaturated sequence is returned with
/// `saturated = false` and logged.
pub fn vss_by_saturation(
    grid: &Arc<RadialGrid>,
    model: &Model,
    epsilons: &[f64],
    config: &EvolveConfig,
    rel_tol: f64,
    max_varkappa: f64,
) -> Result<Saturation> {
    if !model.is_subcritical() {
        return Err(Error::Precondition(format!(
            "very singular solutions need p < p* = {}, got p = {}",
            model.derived.p_star,
            model.p()
        )));
    }
    if max_varkappa < 10.0 {
        return Err(Error::Precondition("saturation starts at ϰ = 10".into()));
    }
    let (mut varkappas, mut eps_used, mut width_converged, mut changes) = (vec![], vec![], vec![], vec![]);
    let mut prev: Option<Trajectory> = None;
    let mut start = 0;
    let mut varkappa = 10.0;
    while varkappa <= max_varkappa * (1.0 + 1e-12) {
        let run = refine_source(grid, model, varkappa, epsilons, start, config, rel_tol)?;
        // Larger ϰ needs at least the same resolution; begin one level coarser
        // so the first comparison is immediate.
        start = run.level.saturating_sub(1);
        varkappas.push(varkappa);
        eps_used.push(run.epsilon);
        width_converged.push(run.converged);
        let traj = run.trajectory;
        let mut saturated = false;
        if let Some(p) = &prev {
            let change = relative_change(p, &traj)?;
            changes.push(change);
            info!("saturation ϰ={varkappa:e} ε={:e}: relative change {change:e}", run.epsilon);
            saturated = change < rel_tol;
        }
        prev = Some(traj);
        if saturated {
            break;
        }
        varkappa *= 10.0;
    }
    let saturated = changes.last().is_some_and(|&c| c < rel_tol);
    if !saturated {
        warn!(
            "not saturated at ϰ={:e}: last change {:e}",
            varkappas.last().unwrap_or(&f64::NAN),
            changes.last().unwrap_or(&f64::NAN)
        );
    }
    Ok(Saturation {
        trajectory: prev.expect("at least one ϰ level"),
        varkappas,
        epsilons: eps_used,
        width_converged,
        changes,
        saturated,
    })
}

/// Linear evolution of exactly the same mollified data: the discrete
/// counterpart of `ϰ p^{h²}_t(·,0)` against which `u_ϰ` is compared.
pub fn linear_companion(traj: &Trajectory, config: &EvolveConfig) -> Result<Trajectory> {
    let src = traj
        .source
        .ok_or_else(|| Error::Precondition("trajectory carries no source data".into()))?;
    let grid = traj.grid().clone();
    let u0 = mollified_delta(&grid, src.varkappa, src.epsilon)?;
    let mut cfg = config.clone();
    cfg.linear_only = true;
    let mut lin = evolve(&u0, &cfg, &traj.model)?;
    lin.source = Some(src);
    Ok(lin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(r_max: f64, n: usize, g: f64, lambda: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::build(r_max, n, g, lambda, 3).unwrap())
    }

    #[test]
    fn mollified_delta_carries_exact_mass() {
        let g = grid(12.0, 1024, 2.0, 0.0);
        let a = mollified_delta(&g, 1.0, 0.02).unwrap();
        let b = mollified_delta(&g, 1.0, 0.01).unwrap();
        assert!((a.weighted_integral(12.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((b.weighted_integral(12.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(b.max() > a.max());
        let c = mollified_delta(&g, 37.5, 0.02).unwrap();
        assert!((c.weighted_integral(12.0).unwrap() / 37.5 - 1.0).abs() < 1e-12);
        assert!(matches!(mollified_delta(&g, 1.0, 1e-5), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn mollified_delta_converges_weakly() {
        // ∫ u₀ cos(r) h² dx = 1 - (N/2)ε² + O(ε⁴) for a normalized Gaussian in N=3.
        let g = grid(12.0, 2048, 2.0, 0.0);
        let mut errs = vec![];
        for &eps in &[0.08, 0.04, 0.02] {
            let u = mollified_delta(&g, 1.0, eps).unwrap();
            let m = u.map(|r, v| v * r.cos()).weighted_integral(12.0).unwrap();
            errs.push(1.0 - m);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1] - 4.0).abs() < 0.1, "{errs:?}");
        }
        assert!((errs[0] / (1.5 * 0.08 * 0.08) - 1.0).abs() < 0.02);
    }

    #[test]
    fn flat_state_follows_the_ode() {
        // u_t = -u², u(0) = 1 ⇒ u(1) = 1/2, away from the outer boundary.
        let g = grid(12.0, 256, 2.0, 0.0);
        let model = Model::from_weighted(3, 0.0, 0.0, 2.0).unwrap();
        let u0 = RadialField::from_fn(&g, Frame::Weighted, 0.0, |_| 1.0);
        let mut cfg = EvolveConfig::new(1.0);
        cfg.dt0 = 1e-4;
        cfg.dt_max = 2.5e-3;
        cfg.scheme = Scheme::Extrapolated;
        let traj = evolve(&u0, &cfg, &model).unwrap();
        let last = traj.snapshots.last().unwrap();
        assert_eq!(last.time, 1.0);
        assert!((last.interpolate(0.5) - 0.5).abs() < 1e-6, "{}", last.interpolate(0.5) - 0.5);
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = grid(12.0, 128, 2.0, 0.0);
        let model = Model::from_weighted(3, 0.0, 0.0, 1.5).unwrap();
        let u0 = RadialField::zeros(&g, Frame::Weighted, 0.0);
        let traj = evolve(&u0, &EvolveConfig::new(0.5).with_record_times(vec![0.1, 0.5]), &model).unwrap();
        assert_eq!(traj.times(), vec![0.1, 0.5]);
        assert!(traj.snapshots.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn mass_identity_and_monotonicity() {
        let g = grid(12.0, 512, 2.0, 0.5);
        let model = Model::from_weighted(3, 0.5, 0.5, 1.5).unwrap();
        let u0 = mollified_delta(&g, 5.0, 0.05).unwrap();
        let traj = evolve(&u0, &EvolveConfig::new(1.0).with_rho(vec![0.5, 1.0]), &model).unwrap();
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].total_mass <= w[0].total_mass * (1.0 + 1e-12));
            assert!(w[1].mass_defect.abs() <= 1e-9 * w[0].total_mass, "{:?}", w[1]);
        }
        assert_eq!(traj.clamped_mass_total, 0.0);
    }

    #[test]
    fn linear_mass_is_conserved_before_outflow() {
        let g = grid(12.0, 512, 2.0, -0.25);
        let model = Model::from_weighted(3, -0.25, 0.0, 1.5).unwrap();
        let u0 = mollified_delta(&g, 1.0, 0.05).unwrap();
        let traj = evolve(&u0, &EvolveConfig::new(1.0).linear(), &model).unwrap();
        for d in &traj.diagnostics {
            assert!((d.total_mass - 1.0).abs() < 1e-6, "{}", d.total_mass);
        }
    }

    #[test]
    fn gaussian_is_transported_by_the_heat_flow() {
        let g = grid(12.0, 1024, 2.0, 0.0);
        let model = Model::from_weighted(3, 0.0, 0.0, 1.5).unwrap();
        let s = 0.05;
        let u0 = RadialField::from_fn(&g, Frame::Weighted, 0.0, |r| heat_kernel_exact(3, 0.0, s, r));
        let mut cfg = EvolveConfig::new(0.25).linear();
        cfg.scheme = Scheme::Extrapolated;
        let traj = evolve(&u0, &cfg, &model).unwrap();
        let exact = RadialField::from_fn(&g, Frame::Weighted, 0.25, |r| heat_kernel_exact(3, 0.0, s + 0.25, r));
        let err = traj.snapshots[0].weighted_l1_distance(&exact).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn exact_kernel_normalization() {
        assert!((heat_kernel_exact(3, 0.0, 0.25, 0.0) - std::f64::consts::PI.powf(-1.5)).abs() < 1e-14);
        for &(lambda, dim) in &[(0.5, 3usize), (-0.5, 4)] {
            let g = Arc::new(RadialGrid::build(12.0, 4096, 2.0, lambda, dim).unwrap());
            let k = RadialField::from_fn(&g, Frame::Weighted, 0.3, |r| heat_kernel_exact(dim, lambda, 0.3, r));
            assert!((k.weighted_integral(12.0).unwrap() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn steps_preserve_order_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid(6.0, 128, 2.0, 0.5);
        let model = Model::from_weighted(3, 0.5, 0.5, 1.5).unwrap();
        for _ in 0..20 {
            let u: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..5.0)).collect();
            let v: Vec<f64> = u.iter().map(|x| x + rng.gen_range(0.0..2.0)).collect();
            let dt = rng.gen_range(1e-4..1e-1);
            let a = step(&RadialField::new(g.clone(), u, Frame::Weighted, 0.0).unwrap(), dt, &model, false).unwrap();
            let b = step(&RadialField::new(g.clone(), v, Frame::Weighted, 0.0).unwrap(), dt, &model, false).unwrap();
            assert!(a.min() >= 0.0);
            assert!(a.values.iter().zip(&b.values).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn newton_step_has_zero_residual() {
        let g = grid(6.0, 128, 2.0, 0.0);
        let model = Model::from_weighted(3, 0.0, 0.0, 2.0).unwrap();
        let u = RadialField::from_fn(&g, Frame::Weighted, 0.0, |r| 3.0 * (-r * r).exp());
        let v = step(&u, 0.01, &model, false).unwrap();
        let op = assemble_laplacian(&g);
        let res = crate::operators::pde_residual(&op, &u, &v, 0.01, &model).unwrap();
        assert!(res.sup_abs() * 0.01 < 1e-9, "{}", res.sup_abs());
    }

    #[test]
    fn config_validation() {
        let mut c = EvolveConfig::new(1.0);
        assert!(c.validate().is_ok());
        c.dt_growth = 1.5;
        assert!(c.validate().is_err());
        let c = EvolveConfig::new(1.0).with_record_times(vec![0.5, 2.0]);
        assert!(c.validate().is_err());
    }
}
