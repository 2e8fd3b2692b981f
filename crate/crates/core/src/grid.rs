//! Graded radial meshes and radially reduced quadrature.
//!
//! Cells are `[r_i, r_{i+1}]` with `r_i = R (i/n)^g`; unknowns live at cell
//! midpoints, so `r = 0` is always a face and never a node. All integrals
//! include the surface area `ω_N` of the unit sphere.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CELLS: usize = 16;

// 4-point Gauss-Legendre rule on [-1, 1].
const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Surface area of the unit sphere in `R^N`.
pub fn sphere_area(dim: usize) -> f64 {
    // Γ(N/2) by recursion from Γ(1) = 1 or Γ(1/2) = √π.
    let mut gamma = if dim % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if dim % 2 == 0 { 1.0 } else { 0.5 };
    while x < dim as f64 / 2.0 - 1e-12 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma
}

/// `∫_a^b r^e dr` for `e > -1`, `0 ≤ a ≤ b`.
pub fn power_integral(a: f64, b: f64, exponent: f64) -> f64 {
    let e1 = exponent + 1.0;
    debug_assert!(e1 > 0.0);
    (b.powf(e1) - a.powf(e1)) / e1
}

/// `∫_a^b r^e g(r) dr` for smooth `g` and `e > -1`. The power is absorbed
/// exactly by the substitution `s = r^{e+1}`, the rest by 4-point Gauss.
pub fn power_weighted_gauss(a: f64, b: f64, exponent: f64, g: impl Fn(f64) -> f64) -> f64 {
    let e1 = exponent + 1.0;
    let (sa, sb) = (a.powf(e1), b.powf(e1));
    let (mid, half) = (0.5 * (sa + sb), 0.5 * (sb - sa));
    let sum: f64 = GAUSS_NODES
        .iter()
        .zip(GAUSS_WEIGHTS)
        .map(|(x, w)| w * g((mid + half * x).powf(1.0 / e1)))
        .sum();
    sum * half / e1
}

/// Gaussian factor of the self-similar weight `K = r^{2λ} e^{r²/4}`.
pub fn k_gauss_factor(r: f64) -> f64 {
    (0.25 * r * r).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    r_faces: Vec<f64>,
    r_centers: Vec<f64>,
    grading_exponent: f64,
    weight_lambda: f64,
    dim: usize,
    /// `∫_cell r^{N-1+2λ} dr`, without `ω_N`.
    masses: Vec<f64>,
}

impl RadialGrid {
    pub fn build(r_max: f64, n: usize, grading: f64, lambda: f64, dim: usize) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::BadGrid(format!("R_max = {r_max} must be positive")));
        }
        if n < MIN_CELLS {
            return Err(Error::BadGrid(format!("n = {n} cells, need at least {MIN_CELLS}")));
        }
        if !(grading >= 1.0) {
            return Err(Error::BadGrid(format!("grading exponent {grading} must be >= 1")));
        }
        if dim < 1 || !(dim as f64 + 2.0 * lambda > 0.0) {
            return Err(Error::BadGrid(format!("density r^(N-1+2λ) not integrable: N={dim}, λ={lambda}")));
        }
        let r_faces: Vec<f64> = (0..=n)
            .map(|i| if i == n { r_max } else { r_max * (i as f64 / n as f64).powf(grading) })
            .collect();
        Self::from_faces(r_faces, grading, lambda, dim)
    }

    fn from_faces(r_faces: Vec<f64>, grading: f64, lambda: f64, dim: usize) -> Result<Self> {
        if r_faces.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadGrid("faces must be strictly increasing".into()));
        }
        let exponent = dim as f64 - 1.0 + 2.0 * lambda;
        let r_centers = r_faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let masses = r_faces.windows(2).map(|w| power_integral(w[0], w[1], exponent)).collect();
        Ok(Self { r_faces, r_centers, grading_exponent: grading, weight_lambda: lambda, dim, masses })
    }

    /// Same faces, different measure exponent λ.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::from_faces(self.r_faces.clone(), self.grading_exponent, lambda, self.dim)
    }

    pub fn len(&self) -> usize {
        self.r_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_centers.is_empty()
    }

    pub fn faces(&self) -> &[f64] {
        &self.r_faces
    }

    pub fn centers(&self) -> &[f64] {
        &self.r_centers
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn r_max(&self) -> f64 {
        *self.r_faces.last().unwrap()
    }

    pub fn grading(&self) -> f64 {
        self.grading_exponent
    }

    pub fn lambda(&self) -> f64 {
        self.weight_lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `N + 2λ`.
    pub fn effective_dim(&self) -> f64 {
        self.dim as f64 + 2.0 * self.weight_lambda
    }

    /// Exponent of the radial density `w(r) = r^{N-1+2λ}`.
    pub fn density_exponent(&self) -> f64 {
        self.effective_dim() - 1.0
    }

    pub fn omega(&self) -> f64 {
        sphere_area(self.dim)
    }

    /// Number of cells whose outer face lies inside radius `r`.
    pub fn cells_within(&self, r: f64) -> usize {
        self.r_faces[1..].iter().take_while(|&&f| f <= r).count()
    }

    /// Per-cell `∫_cell r^{e} dr` (no `ω_N`).
    pub fn power_masses(&self, exponent: f64) -> Vec<f64> {
        self.r_faces.windows(2).map(|w| power_integral(w[0], w[1], exponent)).collect()
    }

    /// Per-cell `∫_cell r^{N-1+2λ+extra} e^{r²/4} dr` (no `ω_N`).
    pub fn k_masses(&self, extra_power: f64) -> Vec<f64> {
        let e = self.density_exponent() + extra_power;
        self.r_faces
            .windows(2)
            .map(|w| power_weighted_gauss(w[0], w[1], e, k_gauss_factor))
            .collect()
    }

    /// `ω_N Σ f_i ∫_{cell_i ∩ [0,ρ]} r^e dr`, exact in the density.
    fn truncated_power_sum(&self, values: &[f64], rho: f64, exponent: f64) -> Result<f64> {
        self.check_radius(rho)?;
        let mut sum = 0.0;
        for (i, w) in self.r_faces.windows(2).enumerate() {
            if w[0] >= rho {
                break;
            }
            sum += values[i] * power_integral(w[0], w[1].min(rho), exponent);
        }
        Ok(self.omega() * sum)
    }

    fn check_radius(&self, rho: f64) -> Result<()> {
        if !(rho > 0.0) || rho > self.r_max() * (1.0 + 1e-14) {
            return Err(Error::OutOfRange { rho, r_max: self.r_max() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// `ũ = u / r^λ`, evolving under the weighted Laplacian.
    Weighted,
    /// `u` itself, in the Hardy-potential equation.
    Original,
}

/// Grid function at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
    pub frame: Frame,
    pub time: f64,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, frame: Frame, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("field values must be finite".into()));
        }
        Ok(Self { grid, values, frame, time })
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, frame: Frame, time: f64, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.centers().iter().map(|&r| f(r)).collect();
        Self { grid: grid.clone(), values, frame, time }
    }

    pub fn zeros(grid: &Arc<RadialGrid>, frame: Frame, time: f64) -> Self {
        Self::from_fn(grid, frame, time, |_| 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_nonnegative(&self, tol: f64) -> Result<()> {
        let min = self.min();
        if min < -tol {
            return Err(Error::NegativeUndershoot { time: self.time, min });
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &RadialField) -> Result<()> {
        if self.frame != other.frame {
            return Err(Error::GridMismatch("fields are in different frames".into()));
        }
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.faces() != other.grid.faces() {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    /// Piecewise-linear interpolation through the cell centers; constant
    /// inside the first half cell and linear down to the Dirichlet zero at `R_max`.
    pub fn interpolate(&self, r: f64) -> f64 {
        let c = self.grid.centers();
        let n = c.len();
        if r <= c[0] {
            return self.values[0];
        }
        if r >= c[n - 1] {
            let r_max = self.grid.r_max();
            if r >= r_max {
                return 0.0;
            }
            return self.values[n - 1] * (r_max - r) / (r_max - c[n - 1]);
        }
        let j = c.partition_point(|&x| x <= r);
        let (a, b) = (c[j - 1], c[j]);
        let s = (r - a) / (b - a);
        self.values[j - 1] * (1.0 - s) + self.values[j] * s
    }

    /// `ω_N ∫_{B_ρ} f r^{2λ} dx` with the grid's weight exponent.
    pub fn weighted_integral(&self, rho: f64) -> Result<f64> {
        let g = &self.grid;
        g.truncated_power_sum(&self.values, rho, g.density_exponent())
    }

    /// `∫_{B_ρ} f dx` (plain Lebesgue measure).
    pub fn lebesgue_integral(&self, rho: f64) -> Result<f64> {
        let g = &self.grid;
        g.truncated_power_sum(&self.values, rho, g.dim() as f64 - 1.0)
    }

    /// `∫_{B_ρ} f K dx` with `K = r^{2λ} e^{r²/4}`; `None` integrates over the whole grid.
    pub fn k_integral(&self, rho: Option<f64>) -> Result<f64> {
        let g = &self.grid;
        let rho = match rho {
            Some(r) => {
                g.check_radius(r)?;
                r
            }
            None => g.r_max(),
        };
        let e = g.density_exponent();
        let mut sum = 0.0;
        for (i, w) in g.faces().windows(2).enumerate() {
            if w[0] >= rho {
                break;
            }
            sum += self.values[i] * power_weighted_gauss(w[0], w[1].min(rho), e, k_gauss_factor);
        }
        Ok(g.omega() * sum)
    }

    /// `‖f - g‖_{L¹(r^{2λ}dx)}` over the whole grid.
    pub fn weighted_l1_distance(&self, other: &RadialField) -> Result<f64> {
        self.check_compatible(other)?;
        let g = &self.grid;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .zip(g.masses())
            .map(|((a, b), m)| (a - b).abs() * m)
            .sum();
        Ok(g.omega() * sum)
    }

    pub fn weighted_l1_norm(&self) -> f64 {
        let g = &self.grid;
        g.omega() * self.values.iter().zip(g.masses()).map(|(a, m)| a.abs() * m).sum::<f64>()
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> RadialField {
        let values = self.values.iter().zip(self.grid.centers()).map(|(&v, &r)| f(r, v)).collect();
        RadialField { grid: self.grid.clone(), values, frame: self.frame, time: self.time }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn uniform_grid_faces_and_masses() {
        let g = RadialGrid::build(1.0, 16, 1.0, 0.0, 3).unwrap();
        for (i, f) in g.faces().iter().enumerate() {
            assert!((f - i as f64 / 16.0).abs() < 1e-15);
        }
        // ∫ r² over [i/16, (i+1)/16] = ((i+1)³ - i³) / (3·16³)
        for (i, m) in g.masses().iter().enumerate() {
            let k = i as f64;
            let exact = ((k + 1.0).powi(3) - k.powi(3)) / (3.0 * 4096.0);
            assert!((m - exact).abs() < 1e-17);
        }
    }

    #[test]
    fn four_cell_layout_matches_closed_form() {
        // Cell masses of the 4-cell uniform layout: {1, 7, 19, 37}/192.
        let faces: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        let g = RadialGrid::from_faces(faces, 1.0, 0.0, 3).unwrap();
        for (m, k) in g.masses().iter().zip([1.0, 7.0, 19.0, 37.0]) {
            assert!((m - k / 192.0).abs() < 1e-16);
        }
        let faces: Vec<f64> = (0..=4).map(|i| (i as f64 / 4.0).powi(2)).collect();
        assert_eq!(faces, vec![0.0, 1.0 / 16.0, 4.0 / 16.0, 9.0 / 16.0, 1.0]);
    }

    #[test]
    fn graded_faces() {
        let g = RadialGrid::build(1.0, 16, 2.0, 0.0, 3).unwrap();
        assert!((g.faces()[4] - 1.0 / 16.0).abs() < 1e-16);
        assert!((g.faces()[8] - 0.25).abs() < 1e-16);
        assert!((g.faces()[12] - 9.0 / 16.0).abs() < 1e-16);
        assert!(g.centers().iter().all(|&c| c > 0.0));
        for (c, w) in g.centers().iter().zip(g.faces().windows(2)) {
            assert!(w[0] < *c && *c < w[1]);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(RadialGrid::build(0.0, 32, 1.0, 0.0, 3), Err(Error::BadGrid(_))));
        assert!(matches!(RadialGrid::build(1.0, 8, 1.0, 0.0, 3), Err(Error::BadGrid(_))));
        assert!(matches!(RadialGrid::build(1.0, 32, 0.5, 0.0, 3), Err(Error::BadGrid(_))));
    }

    #[test]
    fn total_mass_closed_form() {
        for &(lambda, dim) in &[(0.0, 3usize), (0.5, 3), (-0.25, 3), (-0.5, 4)] {
            let g = RadialGrid::build(12.0, 257, 2.0, lambda, dim).unwrap();
            let d = dim as f64 + 2.0 * lambda;
            let total: f64 = g.masses().iter().sum();
            let exact = 12f64.powf(d) / d;
            assert!(((total - exact) / exact).abs() < 1e-13, "λ={lambda}");
        }
    }

    #[test]
    fn ball_volumes() {
        let g = Arc::new(RadialGrid::build(1.0, 64, 2.0, 0.0, 3).unwrap());
        let one = RadialField::from_fn(&g, Frame::Weighted, 0.0, |_| 1.0);
        assert!((one.weighted_integral(1.0).unwrap() - 4.0 * PI / 3.0).abs() < 1e-13);
        let g = Arc::new(RadialGrid::build(1.0, 64, 2.0, 0.5, 3).unwrap());
        let one = RadialField::from_fn(&g, Frame::Weighted, 0.0, |_| 1.0);
        assert!((one.weighted_integral(1.0).unwrap() - PI).abs() < 1e-13);
        // Partial cells use the exact density integral.
        let half = one.weighted_integral(0.3).unwrap();
        assert!((half - PI * 0.3f64.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn lebesgue_integral_of_ground_state() {
        let lambda = -0.25;
        let g = Arc::new(RadialGrid::build(1.0, 64, 1.0, lambda, 3).unwrap());
        let one = RadialField::from_fn(&g, Frame::Original, 0.0, |_| 1.0);
        assert!((one.lebesgue_integral(1.0).unwrap() - 4.0 * PI / 3.0).abs() < 1e-13);
        // u = r^λ integrated cellwise: nodal sampling is second order.
        let u = RadialField::from_fn(&g, Frame::Original, 0.0, |r| r.powf(lambda));
        let exact = 4.0 * PI / (3.0 + lambda);
        assert!((u.lebesgue_integral(1.0).unwrap() - exact).abs() < 5e-3);
    }

    #[test]
    fn out_of_range_radius() {
        let g = Arc::new(RadialGrid::build(1.0, 32, 1.0, 0.0, 3).unwrap());
        let one = RadialField::from_fn(&g, Frame::Weighted, 0.0, |_| 1.0);
        assert!(matches!(one.weighted_integral(1.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn second_order_quadrature_of_r() {
        // ω₃ ∫₀¹ r·r² dr = π.
        let errs: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let g = Arc::new(RadialGrid::build(1.0, n, 2.0, 0.0, 3).unwrap());
                let f = RadialField::from_fn(&g, Frame::Weighted, 0.0, |r| r);
                (f.weighted_integral(1.0).unwrap() - PI).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn k_integral_monotone_and_zero() {
        let g = Arc::new(RadialGrid::build(12.0, 256, 1.5, 0.0, 3).unwrap());
        let zero = RadialField::zeros(&g, Frame::Weighted, 0.0);
        assert_eq!(zero.k_integral(None).unwrap(), 0.0);
        let f = RadialField::from_fn(&g, Frame::Weighted, 0.0, |r| (-r * r / 2.0).exp());
        let h = RadialField::from_fn(&g, Frame::Weighted, 0.0, |r| 0.5 * (-r * r / 2.0).exp());
        assert!(f.k_integral(None).unwrap() >= h.k_integral(None).unwrap());
    }

    #[test]
    fn interpolation_is_exact_for_linear_data() {
        let g = Arc::new(RadialGrid::build(2.0, 64, 2.0, 0.0, 3).unwrap());
        let f = RadialField::from_fn(&g, Frame::Weighted, 0.0, |r| 3.0 * r + 1.0);
        for &r in &[0.1, 0.5, 1.0, 1.7] {
            assert!((f.interpolate(r) - (3.0 * r + 1.0)).abs() < 1e-12);
        }
        assert_eq!(f.interpolate(2.0), 0.0);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }
}
