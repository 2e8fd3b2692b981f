//! Conservative finite-volume weighted Laplacian, absorption term, Hardy
//! quotients and discrete PDE residuals.
//!
//! For face weight `W` and cell masses `m_i` the operator is
//! `(Au)_i = (F_{i+1/2} - F_{i-1/2}) / m_i` with the flux
//! `F_{j} = W(r_j) (u_j - u_{j-1}) / (c_j - c_{j-1})`. The face at `r = 0`
//! carries `W = 0`; the outer face sees a Dirichlet zero placed on `R_max`.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{k_gauss_factor, power_weighted_gauss, Frame, RadialField, RadialGrid};
use crate::linalg::Tridiagonal;
use crate::model::Model;

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: Arc<RadialGrid>,
    /// `A` acting on nodal values (divided by cell mass).
    matrix: Tridiagonal,
    /// Face conductances `W(r_j)/Δc_j`, `j = 0..=n`; entry 0 is the origin face.
    conductance: Vec<f64>,
    masses: Vec<f64>,
}

impl OperatorMatrix {
    /// Assemble from an arbitrary face weight and cell masses.
    pub fn from_parts(grid: Arc<RadialGrid>, face_weight: impl Fn(f64) -> f64, masses: Vec<f64>) -> Self {
        let faces = grid.faces();
        let centers = grid.centers();
        let n = centers.len();
        let mut conductance = vec![0.0; n + 1];
        for j in 1..n {
            conductance[j] = face_weight(faces[j]) / (centers[j] - centers[j - 1]);
        }
        conductance[n] = face_weight(faces[n]) / (faces[n] - centers[n - 1]);

        let mut matrix = Tridiagonal::zeros(n);
        for i in 0..n {
            let (left, right) = (conductance[i], conductance[i + 1]);
            matrix.sub[i] = left / masses[i];
            matrix.sup[i] = if i + 1 < n { right / masses[i] } else { 0.0 };
            matrix.diag[i] = -(left + right) / masses[i];
        }
        Self { grid, matrix, conductance, masses }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn matrix(&self) -> &Tridiagonal {
        &self.matrix
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn conductance(&self) -> &[f64] {
        &self.conductance
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// `Au` in flux-difference form, so constants are annihilated exactly in the interior.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let m = &self.matrix;
        (0..n)
            .map(|i| {
                let left = if i > 0 { m.sub[i] * (u[i - 1] - u[i]) } else { 0.0 };
                let right = if i + 1 < n {
                    m.sup[i] * (u[i + 1] - u[i])
                } else {
                    -self.conductance[n] / self.masses[i] * u[i]
                };
                left + right
            })
            .collect()
    }

    /// `Σ u_i v_i m_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.masses).map(|((a, b), m)| a * b * m).sum()
    }

    /// Flux energy `Σ_j c_j (u_j - u_{j-1})(v_j - v_{j-1})`, outer ghost zero.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = u.len();
        let mut e = 0.0;
        for j in 1..n {
            e += self.conductance[j] * (u[j] - u[j - 1]) * (v[j] - v[j - 1]);
        }
        e + self.conductance[n] * u[n - 1] * v[n - 1]
    }

    /// Flux leaving through `R_max` (without `ω_N`).
    pub fn outflow(&self, u: &[f64]) -> f64 {
        self.conductance[self.len()] * u[self.len() - 1]
    }

    /// `S = -M A`, symmetric positive definite thanks to the Dirichlet face.
    pub fn stiffness(&self) -> Tridiagonal {
        let n = self.len();
        let mut s = Tridiagonal::zeros(n);
        for i in 0..n {
            s.diag[i] = self.conductance[i] + self.conductance[i + 1];
            s.sub[i] = -self.conductance[i];
            s.sup[i] = if i + 1 < n { -self.conductance[i + 1] } else { 0.0 };
        }
        s
    }

    /// Rows `i,sub,diag,super,mass` for debugging.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,sub,diag,super,mass\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i,
                crate::io::fmt_g17(self.matrix.sub[i]),
                crate::io::fmt_g17(self.matrix.diag[i]),
                crate::io::fmt_g17(self.matrix.sup[i]),
                crate::io::fmt_g17(self.masses[i])
            );
        }
        out
    }
}

/// The weighted Laplacian `Δ_{h²} = r^{-2λ}∇·(r^{2λ}∇)` on the grid's measure.
pub fn assemble_laplacian(grid: &Arc<RadialGrid>) -> OperatorMatrix {
    let e = grid.density_exponent();
    OperatorMatrix::from_parts(grid.clone(), |r| r.powf(e), grid.masses().to_vec())
}

/// `K^{-1}∇·(K∇)` with `K = r^{2λ}e^{r²/4}`.
pub fn assemble_k_laplacian(grid: &Arc<RadialGrid>) -> OperatorMatrix {
    let e = grid.density_exponent();
    OperatorMatrix::from_parts(grid.clone(), |r| r.powf(e) * k_gauss_factor(r), grid.k_masses(0.0))
}

/// `r^β |u|^{p-1} u` at cell centers.
pub fn absorption(u: &RadialField, beta: f64, p: f64) -> RadialField {
    u.map(|r, v| absorption_value(r, v, beta, p))
}

#[inline]
pub fn absorption_value(r: f64, v: f64, beta: f64, p: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        r.powf(beta) * v.abs().powf(p - 1.0) * v
    }
}

/// `(u_next - u_prev)/dt - A u_next + r^β |u_next|^{p-1} u_next`.
pub fn pde_residual(
    op: &OperatorMatrix,
    u_prev: &RadialField,
    u_next: &RadialField,
    dt: f64,
    model: &Model,
) -> Result<RadialField> {
    u_prev.check_compatible(u_next)?;
    if u_next.frame != Frame::Weighted {
        return Err(Error::GridMismatch("pde_residual expects weighted-frame fields".into()));
    }
    let au = op.apply(&u_next.values);
    let (beta, p) = (model.beta(), model.p());
    let values = u_next
        .values
        .iter()
        .zip(&u_prev.values)
        .zip(&au)
        .zip(u_next.grid.centers())
        .map(|(((&n, &o), &a), &r)| (n - o) / dt - a + absorption_value(r, n, beta, p))
        .collect();
    Ok(RadialField { grid: u_next.grid.clone(), values, frame: Frame::Weighted, time: u_next.time })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyMinimum {
    /// Discrete minimum of the Rayleigh quotient.
    pub value: f64,
    /// Continuum constant `((N-2+2λ)/2)²`.
    pub continuum: f64,
    /// Relative gap `(value - continuum)/continuum`.
    pub relative_gap: f64,
    pub iterations: usize,
}

/// Smallest eigenvalue of `S u = μ D u`, `S` the flux stiffness and
/// `D = diag ∫_cell r^{N-3+2λ} dr`, by inverse power iteration.
pub fn hardy_rayleigh_min(grid: &Arc<RadialGrid>) -> Result<HardyMinimum> {
    const MAX_ITER: usize = 10_000;
    const TOL: f64 = 1e-10;
    let op = assemble_laplacian(grid);
    let s = op.stiffness();
    let d = grid.power_masses(grid.density_exponent() - 2.0);
    let half = (grid.effective_dim() - 2.0) / 2.0;
    let continuum = half * half;
    let r_max = grid.r_max();

    let mut x: Vec<f64> = grid.centers().iter().map(|&r| r.powf(-half) * (1.0 - r / r_max)).collect();
    let mut mu = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let rhs: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a * b).collect();
        let y = s
            .solve(&rhs)
            .ok_or_else(|| Error::ConvergenceFailure("singular Hardy stiffness matrix".into()))?;
        let sy = s.apply(&y);
        let num: f64 = y.iter().zip(&sy).map(|(a, b)| a * b).sum();
        let den: f64 = y.iter().zip(&d).map(|(a, b)| a * a * b).sum();
        let mu_new = num / den;
        let norm = den.sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
        if ((mu_new - mu) / mu_new).abs() < TOL {
            return Ok(HardyMinimum {
                value: mu_new,
                continuum,
                relative_gap: (mu_new - continuum) / continuum,
                iterations: it,
            });
        }
        mu = mu_new;
    }
    Err(Error::ConvergenceFailure(format!("inverse iteration stalled after {MAX_ITER} iterations")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyKReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub tol: f64,
}

/// Checks `∫|∇θ|²K ≥ ∫(r²/16 + (N+2λ)/4 + ((N-2+2λ)/2)²/r²) θ² K` for
/// `K = r^{2λ}e^{r²/4}` on a grid function vanishing near `R_max`.
pub fn hardy_k_inequality_check(theta: &RadialField) -> HardyKReport {
    const TOL: f64 = 1e-2;
    let grid = &theta.grid;
    let op = assemble_k_laplacian(grid);
    let omega = grid.omega();
    let lhs = omega * op.energy(&theta.values, &theta.values);
    let d = grid.effective_dim();
    let hardy = ((d - 2.0) / 2.0).powi(2);
    let e = grid.density_exponent() - 2.0;
    let rhs = omega
        * grid
            .faces()
            .windows(2)
            .zip(&theta.values)
            .map(|(w, v)| {
                // r^{d-3} pulled out exactly; the bracket times r² is smooth.
                let weight = power_weighted_gauss(w[0], w[1], e, |r| {
                    (r.powi(4) / 16.0 + d / 4.0 * r * r + hardy) * k_gauss_factor(r)
                });
                v * v * weight
            })
            .sum::<f64>();
    HardyKReport { lhs, rhs, holds: lhs >= rhs * (1.0 - TOL), tol: TOL }
}
