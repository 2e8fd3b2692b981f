//! Self-similar profiles `v(ξ)` of the very singular solution,
//! `-K^{-1}(K v')' - σ v + ξ^β v^p = 0` with `K = ξ^{2λ} e^{ξ²/4}`.
//!
//! Two independent constructions: descent on the energy `J` over the
//! finite-volume space, and shooting on the radial ODE.

use std::cell::Cell;
use std::rc::Rc;
use std::sync::Arc;

use log::{debug, info};
use ode_solvers::{Dopri5, System, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Frame, RadialField, RadialGrid};
use crate::linalg::Tridiagonal;
use crate::model::Model;
use crate::operators::{assemble_k_laplacian, OperatorMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMethod {
    Variational,
    Shooting,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSolution {
    #[serde(skip)]
    pub grid: Arc<RadialGrid>,
    #[serde(skip)]
    pub v: Vec<f64>,
    pub j_value: f64,
    pub el_residual_norm: f64,
    pub decay_constant: f64,
    pub method: ProfileMethod,
    pub v0: f64,
    /// Threshold initial value (shooting only).
    pub a_star: Option<f64>,
    pub iterations: usize,
    /// `(ε, C_ε)` from the descent iterates (variational only).
    pub coercivity: Option<(f64, f64)>,
}

impl ProfileSolution {
    pub fn field(&self) -> RadialField {
        RadialField { grid: self.grid.clone(), values: self.v.clone(), frame: Frame::Weighted, time: 1.0 }
    }

    pub fn interpolate(&self, xi: f64) -> f64 {
        self.field().interpolate(xi)
    }

    /// `xi,v,v_times_exp` rows.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .grid
            .centers()
            .iter()
            .zip(&self.v)
            .map(|(&x, &v)| vec![x, v, v * (x * x / 8.0).exp()])
            .collect();
        crate::io::table_csv(&["xi", "v", "v_times_exp"], &rows)
    }
}

/// The pieces of `J`, all with the `ω_N` factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub gradient: f64,
    pub power: f64,
    pub l2: f64,
}

impl EnergyParts {
    pub fn j(&self, sigma: f64, p: f64) -> f64 {
        0.5 * self.gradient + self.power / (p + 1.0) - 0.5 * sigma * self.l2
    }
}

struct Energy {
    op: OperatorMatrix,
    beta_masses: Vec<f64>,
    omega: f64,
    sigma: f64,
    p: f64,
}

impl Energy {
    fn new(grid: &Arc<RadialGrid>, model: &Model, mu: f64) -> Result<Self> {
        check_grid(grid, model)?;
        Ok(Self {
            op: assemble_k_laplacian(grid),
            beta_masses: grid.k_masses(model.beta()),
            omega: grid.omega(),
            sigma: mu,
            p: model.p(),
        })
    }

    fn parts(&self, theta: &[f64]) -> EnergyParts {
        let m = self.op.masses();
        EnergyParts {
            gradient: self.omega * self.op.energy(theta, theta),
            power: self.omega * theta.iter().zip(&self.beta_masses).map(|(t, w)| t.abs().powf(self.p + 1.0) * w).sum::<f64>(),
            l2: self.omega * theta.iter().zip(m).map(|(t, w)| t * t * w).sum::<f64>(),
        }
    }

    fn j(&self, theta: &[f64]) -> f64 {
        self.parts(theta).j(self.sigma, self.p)
    }

    /// `∂J/∂θ_i / ω`: the weak residual against the cell indicator.
    fn residual(&self, theta: &[f64]) -> Vec<f64> {
        let m = self.op.masses();
        let s = self.op.stiffness().apply(theta);
        (0..theta.len())
            .map(|i| {
                let t = theta[i];
                s[i] + t.abs().powf(self.p - 1.0) * t * self.beta_masses[i] - self.sigma * t * m[i]
            })
            .collect()
    }

    /// `S + M`, the discrete `H¹_K` Gram matrix.
    fn gram(&self) -> Tridiagonal {
        let mut g = self.op.stiffness();
        for (d, m) in g.diag.iter_mut().zip(self.op.masses()) {
            *d += m;
        }
        g
    }

    /// Dual norm of the weak residual over the test space, relative to
    /// `‖θ‖_{H¹_K}`: `√(rᵀ G⁻¹ r) / √(θᵀ G θ)`.
    fn relative_residual(&self, theta: &[f64]) -> f64 {
        let gram = self.gram();
        let r = self.residual(theta);
        let z = gram.solve(&r).unwrap_or_else(|| vec![f64::NAN; r.len()]);
        let num: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let gt = gram.apply(theta);
        let den: f64 = theta.iter().zip(&gt).map(|(a, b)| a * b).sum();
        (num / den).sqrt()
    }
}

fn check_grid(grid: &RadialGrid, model: &Model) -> Result<()> {
    if grid.dim() != model.dim() || (grid.lambda() - model.lambda()).abs() > 1e-14 {
        return Err(Error::GridMismatch(format!(
            "grid (N={}, λ={}) does not match model (N={}, λ={})",
            grid.dim(),
            grid.lambda(),
            model.dim(),
            model.lambda()
        )));
    }
    Ok(())
}

fn check_subcritical(model: &Model) -> Result<()> {
    if !model.is_subcritical() {
        return Err(Error::Precondition(format!(
            "a nontrivial profile needs p < p* = {}, got p = {}",
            model.derived.p_star,
            model.p()
        )));
    }
    Ok(())
}

/// `J(θ)` with `μ = σ`.
pub fn evaluate_j(theta: &RadialField, model: &Model) -> Result<f64> {
    evaluate_j_mu(theta, model, model.sigma())
}

pub fn evaluate_j_mu(theta: &RadialField, model: &Model, mu: f64) -> Result<f64> {
    Ok(Energy::new(&theta.grid, model, mu)?.j(&theta.values))
}

pub fn energy_parts(theta: &RadialField, model: &Model) -> Result<EnergyParts> {
    Ok(Energy::new(&theta.grid, model, model.sigma())?.parts(&theta.values))
}

/// Relative Euler-Lagrange residual of `v` in the discrete weak form.
pub fn el_residual(v: &RadialField, model: &Model) -> Result<f64> {
    Ok(Energy::new(&v.grid, model, model.sigma())?.relative_residual(&v.values))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub max_iter: usize,
    /// Stop when the relative decrease of `J` falls below this...
    pub j_tol: f64,
    /// ...and the Euler-Lagrange residual below this.
    pub residual_tol: f64,
    pub coercivity_epsilon: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self { max_iter: 200_000, j_tol: 1e-12, residual_tol: 1e-6, coercivity_epsilon: 0.5 }
    }
}

/// Sobolev-preconditioned descent on `J` with absolute-value projection.
/// Starts from `init` or from `e^{-ξ²/4}` scaled to the flat ceiling.
pub fn minimize_j(
    model: &Model,
    grid: &Arc<RadialGrid>,
    init: Option<&RadialField>,
    cfg: &DescentConfig,
) -> Result<ProfileSolution> {
    check_subcritical(model)?;
    let energy = Energy::new(grid, model, model.sigma())?;
    let mut theta: Vec<f64> = match init {
        Some(f) => {
            f.check_compatible(&RadialField::zeros(grid, f.frame, f.time))?;
            f.values.iter().map(|v| v.abs()).collect()
        }
        None => {
            let ceiling = (model.p() - 1.0).powf(-1.0 / (model.p() - 1.0));
            grid.centers().iter().map(|&x| ceiling * (-x * x / 4.0).exp()).collect()
        }
    };

    // (S + M) g = ∇J: the H¹_K Riesz map.
    let pre = energy.gram();

    let eps = cfg.coercivity_epsilon;
    let mut c_eps = 0.0f64;
    let mut witness = |parts: &EnergyParts| {
        c_eps = c_eps.max(parts.l2 - eps * (parts.gradient + parts.power));
    };

    let mut parts = energy.parts(&theta);
    witness(&parts);
    let mut j = parts.j(energy.sigma, energy.p);
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut residual = energy.relative_residual(&theta);
    while iterations < cfg.max_iter {
        iterations += 1;
        let grad = energy.residual(&theta);
        let dir = pre.solve(&grad).ok_or_else(|| Error::ConvergenceFailure("singular preconditioner".into()))?;
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>() * energy.omega;
        // Armijo backtracking; the projection |·| never increases J.
        let mut trial_step = (step * 2.0).min(4.0);
        let (next, next_parts) = loop {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| (t - trial_step * d).abs()).collect();
            let cp = energy.parts(&cand);
            if cp.j(energy.sigma, energy.p) <= j - 1e-4 * trial_step * slope {
                break (cand, cp);
            }
            trial_step *= 0.5;
            if trial_step < 1e-14 {
                break (theta.clone(), parts);
            }
        };
        step = trial_step;
        let j_next = next_parts.j(energy.sigma, energy.p);
        assert!(j_next <= j, "descent increased J: {j} -> {j_next}");
        let decrease = (j - j_next) / j.abs().max(f64::MIN_POSITIVE);
        theta = next;
        parts = next_parts;
        witness(&parts);
        j = j_next;
        residual = energy.relative_residual(&theta);
        if iterations % 1000 == 0 {
            debug!("descent {iterations}: J={j:e} residual={residual:e} step={step:e}");
        }
        if decrease < cfg.j_tol && residual < cfg.residual_tol {
            break;
        }
        if step < 1e-14 {
            break;
        }
    }
    let norm = theta.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if norm < 1e-10 {
        return Err(Error::TrivialMinimizer(norm));
    }
    if residual >= cfg.residual_tol {
        return Err(Error::MaxIterations(iterations));
    }
    if j >= 0.0 {
        return Err(Error::TrivialMinimizer(norm));
    }
    info!("minimizer after {iterations} iterations: J={j:e}, residual={residual:e}, v(0)={}", theta[0]);
    let decay_constant = decay_constant(grid, &theta, grid.r_max());
    Ok(ProfileSolution {
        grid: grid.clone(),
        v0: theta[0],
        v: theta,
        j_value: j,
        el_residual_norm: residual,
        decay_constant,
        method: ProfileMethod::Variational,
        a_star: None,
        iterations,
        coercivity: Some((eps, c_eps)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingConfig {
    pub a_min: f64,
    pub a_max: f64,
    pub bisection_tol: f64,
    /// "Decays" means `v ≤ envelope · a · e^{-ξ²/8}` without a sign change.
    pub envelope: f64,
    /// Integration continues past the grid until the behaviour is classified.
    pub xi_max: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self { a_min: 1e-6, a_max: 1e3, bisection_tol: 1e-12, envelope: 10.0, xi_max: 40.0, rtol: 1e-12, atol: 1e-300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotOutcome {
    SignChange,
    Escape,
    Decays,
}

struct ProfileOde {
    d: f64,
    sigma: f64,
    beta: f64,
    p: f64,
    a: f64,
    envelope: f64,
    outcome: Rc<Cell<ShotOutcome>>,
}

impl System<f64, Vector2<f64>> for ProfileOde {
    fn system(&self, x: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let (v, w) = (y[0], y[1]);
        dy[0] = w;
        dy[1] = -((self.d - 1.0) / x + x / 2.0) * w - self.sigma * v + x.powf(self.beta) * v.abs().powf(self.p - 1.0) * v;
    }

    fn solout(&mut self, x: f64, y: &Vector2<f64>, _dy: &Vector2<f64>) -> bool {
        if y[0] < 0.0 {
            self.outcome.set(ShotOutcome::SignChange);
            return true;
        }
        if y[0] > self.envelope * self.a * (-x * x / 8.0).exp() {
            self.outcome.set(ShotOutcome::Escape);
            return true;
        }
        false
    }
}

/// Dense trajectory of one shot.
struct Shot {
    outcome: ShotOutcome,
    xs: Vec<f64>,
    vs: Vec<f64>,
    ws: Vec<f64>,
}

const DENSE_DX: f64 = 1e-3;

fn shoot(model: &Model, a: f64, xi0: f64, cfg: &ShootingConfig) -> Result<Shot> {
    let d = model.effective_dim();
    let (sigma, beta, p) = (model.sigma(), model.beta(), model.p());
    // Regular expansion v = a - σa ξ²/(2d) + a^p ξ^{2+β}/((2+β)(d+β)).
    let c2 = -sigma * a / (2.0 * d);
    let cb = a.powf(p) / ((2.0 + beta) * (d + beta));
    let v0 = a + c2 * xi0 * xi0 + cb * xi0.powf(2.0 + beta);
    let w0 = 2.0 * c2 * xi0 + (2.0 + beta) * cb * xi0.powf(1.0 + beta);
    let outcome = Rc::new(Cell::new(ShotOutcome::Decays));
    let ode = ProfileOde { d, sigma, beta, p, a, envelope: cfg.envelope, outcome: outcome.clone() };
    let mut solver = Dopri5::new(ode, xi0, cfg.xi_max, DENSE_DX, Vector2::new(v0, w0), cfg.rtol, cfg.atol);
    solver
        .integrate()
        .map_err(|e| Error::ConvergenceFailure(format!("profile ODE at a={a}: {e:?}")))?;
    let (xs, ys) = solver.results().get();
    let vs: Vec<f64> = ys.iter().map(|y| y[0]).collect();
    let ws: Vec<f64> = ys.iter().map(|y| y[1]).collect();
    let outcome = outcome.get();
    debug!("shot a={a}: {outcome:?} at ξ={:?}, v={:?}, {} points", xs.last(), vs.last(), xs.len());
    Ok(Shot { outcome, xs: xs.clone(), vs, ws })
}

/// Classification of a single initial value, for calibration runs.
pub fn shot_outcome(model: &Model, a: f64, xi0: f64, cfg: &ShootingConfig) -> Result<ShotOutcome> {
    Ok(shoot(model, a, xi0, cfg)?.outcome)
}

/// Bisection on `v(0) = a` between sign change and escape; the threshold
/// profile is sampled at the grid centers.
pub fn shoot_profile(model: &Model, grid: &Arc<RadialGrid>, cfg: &ShootingConfig) -> Result<ProfileSolution> {
    check_subcritical(model)?;
    check_grid(grid, model)?;
    let xi0 = grid.centers()[0];
    let lo_outcome = shoot(model, cfg.a_min, xi0, cfg)?.outcome;
    let hi_outcome = shoot(model, cfg.a_max, xi0, cfg)?.outcome;
    if lo_outcome == hi_outcome || lo_outcome == ShotOutcome::Decays || hi_outcome == ShotOutcome::Decays {
        return Err(Error::BracketNotFound { lo: cfg.a_min, hi: cfg.a_max });
    }
    let (mut lo, mut hi) = (cfg.a_min, cfg.a_max);
    let mut iterations = 0;
    while hi - lo > cfg.bisection_tol * hi {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        match shoot(model, mid, xi0, cfg)?.outcome {
            ShotOutcome::Decays => {
                lo = mid;
                hi = mid;
            }
            o if o == lo_outcome => lo = mid,
            _ => hi = mid,
        }
    }
    let a_star = 0.5 * (lo + hi);
    let shot = shoot(model, a_star, xi0, cfg)?;
    let v: Vec<f64> = grid.centers().iter().map(|&x| hermite(&shot, x)).collect();
    let field = RadialField { grid: grid.clone(), values: v.clone(), frame: Frame::Weighted, time: 1.0 };
    let energy = Energy::new(grid, model, model.sigma())?;
    info!("shooting threshold a*={a_star} after {iterations} bisections ({:?} beyond)", shot.outcome);
    Ok(ProfileSolution {
        grid: grid.clone(),
        v0: a_star,
        j_value: energy.j(&v),
        el_residual_norm: energy.relative_residual(&field.values),
        decay_constant: decay_constant(grid, &v, grid.r_max()),
        v,
        method: ProfileMethod::Shooting,
        a_star: Some(a_star),
        iterations,
        coercivity: None,
    })
}

/// Cubic Hermite interpolation of the dense shot; zero past its end.
fn hermite(shot: &Shot, x: f64) -> f64 {
    let xs = &shot.xs;
    if x <= xs[0] {
        return shot.vs[0];
    }
    if x >= xs[xs.len() - 1] {
        return 0.0;
    }
    let j = xs.partition_point(|&t| t <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let h = x1 - x0;
    let s = (x - x0) / h;
    let (h00, h10, h01, h11) =
        (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s, -2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
    (h00 * shot.vs[j - 1] + h10 * h * shot.ws[j - 1] + h01 * shot.vs[j] + h11 * h * shot.ws[j]).max(0.0)
}

fn decay_constant(grid: &RadialGrid, v: &[f64], upto: f64) -> f64 {
    grid.centers()
        .iter()
        .zip(v)
        .filter(|(&x, _)| (1.0..=upto).contains(&x))
        .map(|(&x, &v)| v.abs() * (x * x / 8.0).exp())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    /// `sup_{ξ∈[1,R]} |v| e^{ξ²/8}`.
    pub constant: f64,
    pub argmax: f64,
    /// `(ξ, |v| e^{ξ²/8})` on `[1, R]`.
    pub scaled: Vec<(f64, f64)>,
}

/// Certificate for `|v| ≤ C e^{-ξ²/8}` on `[1, R_max]`.
pub fn check_decay(sol: &ProfileSolution) -> Result<DecayReport> {
    decay_report(&sol.grid, &sol.v)
}

pub fn decay_report(grid: &RadialGrid, v: &[f64]) -> Result<DecayReport> {
    if grid.r_max() < 8.0 {
        return Err(Error::Precondition(format!("decay check needs R_max >= 8, got {}", grid.r_max())));
    }
    let scaled: Vec<(f64, f64)> = grid
        .centers()
        .iter()
        .zip(v)
        .filter(|(&x, _)| x >= 1.0)
        .map(|(&x, &v)| (x, v.abs() * (x * x / 8.0).exp()))
        .collect();
    let (argmax, constant) = scaled.iter().fold((f64::NAN, 0.0), |acc, &(x, s)| if s > acc.1 { (x, s) } else { acc });
    if !constant.is_finite() {
        return Err(Error::DecayViolated);
    }
    let r_max = grid.r_max();
    let tail: Vec<f64> = scaled.iter().filter(|(x, _)| *x >= 1.0 + 0.75 * (r_max - 1.0)).map(|p| p.1).collect();
    // The last cell feels the Dirichlet face; judge the tail before it.
    let tail = &tail[..tail.len().saturating_sub(1)];
    if tail.len() >= 2 && tail.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::DecayViolated);
    }
    Ok(DecayReport { constant, argmax, scaled })
}

/// `max_{ξ≤upto} |a - b| / max_{ξ≤upto} |b|` through interpolation.
pub fn relative_linf_difference(a: &ProfileSolution, b: &ProfileSolution, upto: f64) -> f64 {
    let (fa, fb) = (a.field(), b.field());
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for &x in b.grid.centers().iter().filter(|&&x| x <= upto) {
        let (va, vb) = (fa.interpolate(x), fb.interpolate(x));
        num = num.max((va - vb).abs());
        den = den.max(vb.abs());
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProblemParams;
    use proptest::prelude::*;

    fn setup(n: usize, p: f64) -> (Model, Arc<RadialGrid>) {
        let model = Model::new(ProblemParams::new(3, 0.0, 0.0, p).unwrap()).unwrap();
        (model, Arc::new(RadialGrid::build(12.0, n, 2.0, 0.0, 3).unwrap()))
    }

    fn gaussian(grid: &Arc<RadialGrid>, scale: f64) -> RadialField {
        RadialField::from_fn(grid, Frame::Weighted, 1.0, |x| (-x * x / scale).exp())
    }

    #[test]
    fn energy_of_zero_is_zero() {
        let (model, grid) = setup(256, 1.5);
        let z = RadialField::zeros(&grid, Frame::Weighted, 1.0);
        assert_eq!(evaluate_j(&z, &model).unwrap(), 0.0);
    }

    #[test]
    fn ground_mode_quotient_is_half_the_dimension() {
        // e^{-ξ²/4} is the first eigenfunction of -K^{-1}(K v')' with eigenvalue d/2.
        let (model, grid) = setup(1024, 1.5);
        let e = energy_parts(&gaussian(&grid, 4.0), &model).unwrap();
        assert!((e.gradient / e.l2 - 1.5).abs() < 2e-3, "{}", e.gradient / e.l2);
    }

    #[test]
    fn small_multiples_of_the_ground_mode_have_negative_energy() {
        // J(τφ) = τ²/2 (d/2 - σ)‖φ‖² + O(τ^{p+1}) with σ = 2 > d/2.
        let (model, grid) = setup(512, 1.5);
        let phi = gaussian(&grid, 4.0);
        for tau in [1e-3, 1e-2, 1e-1] {
            let j = evaluate_j(&phi.map(|_, v| tau * v), &model).unwrap();
            assert!(j < 0.0, "τ = {tau}: J = {j}");
        }
        let big = evaluate_j(&phi.map(|_, v| 1e3 * v), &model).unwrap();
        assert!(big > 0.0);
    }

    #[test]
    fn quadratic_part_scales_exactly() {
        let (model, grid) = setup(256, 1.5);
        let phi = gaussian(&grid, 2.0);
        let a = energy_parts(&phi, &model).unwrap();
        let b = energy_parts(&phi.map(|_, v| 3.0 * v), &model).unwrap();
        assert!((b.gradient / a.gradient - 9.0).abs() < 1e-12);
        assert!((b.l2 / a.l2 - 9.0).abs() < 1e-12);
        assert!((b.power / a.power - 3f64.powf(2.5)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn energy_is_even(amp in 0.01f64..5.0, width in 0.5f64..8.0) {
            let (model, grid) = setup(128, 1.5);
            let phi = gaussian(&grid, width).map(|_, v| amp * v);
            let j1 = evaluate_j(&phi, &model).unwrap();
            let j2 = evaluate_j(&phi.map(|_, v| -v), &model).unwrap();
            prop_assert!((j1 - j2).abs() <= 1e-14 * j1.abs().max(1e-300));
        }

        #[test]
        fn j_mu_is_affine_in_mu(mu in 0.0f64..4.0) {
            let (model, grid) = setup(128, 1.5);
            let phi = gaussian(&grid, 3.0);
            let l2 = energy_parts(&phi, &model).unwrap().l2;
            let j0 = evaluate_j_mu(&phi, &model, 0.0).unwrap();
            let j = evaluate_j_mu(&phi, &model, mu).unwrap();
            prop_assert!((j - (j0 - 0.5 * mu * l2)).abs() < 1e-12 * (1.0 + j0.abs()));
        }
    }

    #[test]
    fn supercritical_exponent_is_rejected() {
        let (model, grid) = setup(128, 1.7);
        assert!(matches!(minimize_j(&model, &grid, None, &DescentConfig::default()), Err(Error::Precondition(_))));
        assert!(matches!(shoot_profile(&model, &grid, &ShootingConfig::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn grid_model_mismatch_is_rejected() {
        let (model, _) = setup(128, 1.5);
        let grid = Arc::new(RadialGrid::build(12.0, 128, 2.0, 0.5, 3).unwrap());
        assert!(matches!(minimize_j(&model, &grid, None, &DescentConfig::default()), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn shots_bracket_the_threshold() {
        let (model, _) = setup(128, 1.5);
        let cfg = ShootingConfig::default();
        assert_eq!(shot_outcome(&model, 0.1, 1e-4, &cfg).unwrap(), ShotOutcome::SignChange);
        assert_eq!(shot_outcome(&model, 10.0, 1e-4, &cfg).unwrap(), ShotOutcome::Escape);
    }

    #[test]
    fn both_constructions_agree() {
        let (model, grid) = setup(1024, 1.5);
        let var = minimize_j(&model, &grid, None, &DescentConfig::default()).unwrap();
        let shot = shoot_profile(&model, &grid, &ShootingConfig::default()).unwrap();
        assert!(var.j_value < 0.0 && var.el_residual_norm < 1e-6);
        assert!(relative_linf_difference(&var, &shot, 6.0) < 1e-3);
        assert!((var.v0 - shot.a_star.unwrap()).abs() < 1e-3);
        // Below the flat ceiling (p-1)^{-1/(p-1)} = 4.
        assert!(var.v.iter().all(|&v| (0.0..4.0).contains(&v)));
        let (eps, c) = var.coercivity.unwrap();
        assert!(eps == 0.5 && c.is_finite());
        assert_eq!(relative_linf_difference(&var, &var, 6.0), 0.0);
        assert!(var.to_csv().starts_with("xi,v,v_times_exp\n"));
    }

    #[test]
    fn decay_certificate() {
        let grid = Arc::new(RadialGrid::build(12.0, 1024, 1.0, 0.0, 3).unwrap());
        let fast: Vec<f64> = grid.centers().iter().map(|&x| (-x * x / 4.0).exp()).collect();
        let rep = decay_report(&grid, &fast).unwrap();
        // sup_{ξ≥1} e^{-ξ²/8} is attained at the first center past 1.
        let x1 = rep.argmax;
        assert!(x1 >= 1.0 && x1 < 1.0 + 2.0 * 12.0 / 1024.0);
        assert!((rep.constant - (-x1 * x1 / 8.0).exp()).abs() < 1e-15);
        assert!((rep.constant - (-0.125f64).exp()).abs() < 3e-3);
        let slow: Vec<f64> = grid.centers().iter().map(|&x| (-x * x / 16.0).exp()).collect();
        assert_eq!(decay_report(&grid, &slow).unwrap_err(), Error::DecayViolated);
        let short = RadialGrid::build(6.0, 64, 1.0, 0.0, 3).unwrap();
        assert!(matches!(decay_report(&short, &vec![0.0; 64]), Err(Error::Precondition(_))));
    }
}
