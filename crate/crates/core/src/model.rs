//! Problem parameters, derived exponents and the ground-state transform.
//!
//! The original equation `u_t - Δu - κ/r² u + r^α u|u|^{p-1} = 0` is mapped by
//! `ũ = u / r^λ` onto `ũ_t - r^{-2λ}∇·(r^{2λ}∇ũ) + r^β ũ|ũ|^{p-1} = 0` with
//! `β = α + λ(p-1)`. Everything downstream works in the weighted variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Frame, RadialField};

/// Tolerance used to decide `p == p*` and similar exact boundaries.
pub const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    #[serde(rename = "N")]
    pub dim: usize,
    pub kappa: f64,
    pub alpha: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub lambda: f64,
    pub beta: f64,
    pub sigma: f64,
    pub p_star: f64,
    pub p_star_star: f64,
}

/// Which root of `λ² + λ(N-2) + κ = 0` to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Root {
    Larger,
    Smaller,
}

impl ProblemParams {
    pub fn new(dim: usize, kappa: f64, alpha: f64, p: f64) -> Result<Self> {
        let params = Self { dim, kappa, alpha, p };
        params.validate()?;
        Ok(params)
    }

    /// Original-variable parameters that produce the weighted problem `(N, λ, β, p)`.
    pub fn from_weighted(dim: usize, lambda: f64, beta: f64, p: f64) -> Result<Self> {
        let kappa = -lambda * lambda - lambda * (dim as f64 - 2.0);
        let alpha = beta - lambda * (p - 1.0);
        Self::new(dim, kappa, alpha, p)
    }

    /// The critical Hardy constant `((N-2)/2)²`.
    pub fn hardy_constant(&self) -> f64 {
        let half = (self.dim as f64 - 2.0) / 2.0;
        half * half
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::InvalidParams(format!("N = {} but N >= 3 is required", self.dim)));
        }
        let all_finite = self.kappa.is_finite() && self.alpha.is_finite() && self.p.is_finite();
        if !all_finite {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        if self.kappa >= self.hardy_constant() {
            return Err(Error::InvalidParams(format!(
                "kappa = {} violates kappa < ((N-2)/2)^2 = {}",
                self.kappa,
                self.hardy_constant()
            )));
        }
        if self.alpha <= -2.0 {
            return Err(Error::InvalidParams(format!("alpha = {} violates alpha > -2", self.alpha)));
        }
        if self.p <= 1.0 {
            return Err(Error::InvalidParams(format!("p = {} violates p > 1", self.p)));
        }
        Ok(())
    }
}

/// Root of the indicial equation `λ² + λ(N-2) + κ = 0`. Only the larger root
/// (the one with `λ > -(N-2)/2`) is supported.
pub fn ground_state_exponent(dim: usize, kappa: f64, root: Root) -> Result<f64> {
    let half = (dim as f64 - 2.0) / 2.0;
    let disc = half * half - kappa;
    if disc <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "kappa = {kappa} violates kappa < ((N-2)/2)^2 = {}",
            half * half
        )));
    }
    match root {
        Root::Larger => {
            // -half + sqrt(half² - κ), rewritten to avoid cancellation when κ ≈ 0.
            let s = disc.sqrt();
            Ok(if half > 0.0 { -kappa / (half + s) } else { -half + s })
        }
        Root::Smaller => Err(Error::InvalidParams(
            "the smaller root -(N-2)/2 - sqrt(((N-2)/2)^2 - kappa) is not a ground state of \
             the Hardy operator in H^1_loc; only the larger root is supported"
                .into(),
        )),
    }
}

pub fn derive_params(params: &ProblemParams) -> Result<DerivedParams> {
    params.validate()?;
    let n = params.dim as f64;
    let p = params.p;
    let lambda = ground_state_exponent(params.dim, params.kappa, Root::Larger)?;
    if lambda <= -(n - 2.0) / 2.0 {
        return Err(Error::InvalidParams(format!("lambda = {lambda} is not above -(N-2)/2")));
    }
    let beta = params.alpha + lambda * (p - 1.0);
    if beta <= -2.0 {
        return Err(Error::InvalidParams(format!(
            "weighted absorption exponent beta = alpha + lambda(p-1) = {beta} must exceed -2"
        )));
    }
    let sigma = (2.0 + beta) / (2.0 * (p - 1.0));
    let p_star = 1.0 + (2.0 + beta) / (n + 2.0 * lambda);
    let p_star_star = 1.0 + (2.0 + params.alpha) / (n + lambda);
    Ok(DerivedParams { lambda, beta, sigma, p_star, p_star_star })
}

/// Parameters together with their derived exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: ProblemParams,
    pub derived: DerivedParams,
}

impl Model {
    pub fn new(params: ProblemParams) -> Result<Self> {
        let derived = derive_params(&params)?;
        Ok(Self { params, derived })
    }

    pub fn from_weighted(dim: usize, lambda: f64, beta: f64, p: f64) -> Result<Self> {
        Self::new(ProblemParams::from_weighted(dim, lambda, beta, p)?)
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn lambda(&self) -> f64 {
        self.derived.lambda
    }

    pub fn beta(&self) -> f64 {
        self.derived.beta
    }

    pub fn sigma(&self) -> f64 {
        self.derived.sigma
    }

    pub fn p(&self) -> f64 {
        self.params.p
    }

    /// Effective dimension `N + 2λ` of the weighted measure `r^{2λ} dx`.
    pub fn effective_dim(&self) -> f64 {
        self.params.dim as f64 + 2.0 * self.derived.lambda
    }

    pub fn is_subcritical(&self) -> bool {
        self.params.p < self.derived.p_star - CRITICAL_TOL
    }

    /// Residual of the indicial equation at the chosen λ.
    pub fn indicial_residual(&self) -> f64 {
        let l = self.derived.lambda;
        l * l + l * (self.params.dim as f64 - 2.0) + self.params.kappa
    }

    /// Hardy constant of the weighted measure, `((N - 2 + 2λ)/2)²`.
    pub fn weighted_hardy_constant(&self) -> f64 {
        let h = (self.effective_dim() - 2.0) / 2.0;
        h * h
    }

    /// Small-time exponent of `∫_{B_ρ} u_∞ dx` in the original variables:
    /// `N/2 - (2+α)/(2(p-1))`.
    pub fn lebesgue_mass_slope(&self) -> f64 {
        let n = self.params.dim as f64;
        n / 2.0 - (2.0 + self.params.alpha) / (2.0 * (self.params.p - 1.0))
    }

    /// The exponent `1 + (2+α)/N` separating the Lebesgue-mass subregimes.
    pub fn lebesgue_threshold(&self) -> f64 {
        1.0 + (2.0 + self.params.alpha) / self.params.dim as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

/// Behaviour of the Lebesgue mass `∫_{B_ρ} u dx` as `t → 0` in the original variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LebesgueRegime {
    /// κ = 0: the Lebesgue and weighted masses coincide.
    Classical,
    /// κ < 0: every nontrivial singular solution has divergent Lebesgue mass.
    AllDivergent,
    /// κ > 0, p below `1+(2+α)/N`: source masses vanish, the VSS mass diverges.
    VssDivergent,
    /// κ > 0, p equal to `1+(2+α)/N`: the VSS mass has a finite ρ-independent limit.
    VssFinite,
    /// κ > 0, p between `1+(2+α)/N` and p**: every Lebesgue mass vanishes.
    VssVanishing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub criticality: Criticality,
    pub lebesgue: Option<LebesgueRegime>,
    pub p: f64,
    pub p_star: f64,
    pub p_star_star: f64,
    pub lebesgue_threshold: f64,
}

pub fn classify_regime(params: &ProblemParams, derived: &DerivedParams) -> RegimeReport {
    let p = params.p;
    let criticality = if (p - derived.p_star).abs() <= CRITICAL_TOL {
        Criticality::Critical
    } else if p < derived.p_star {
        Criticality::Subcritical
    } else {
        Criticality::Supercritical
    };
    let threshold = 1.0 + (2.0 + params.alpha) / params.dim as f64;
    let lebesgue = (criticality == Criticality::Subcritical).then(|| {
        if params.kappa == 0.0 {
            LebesgueRegime::Classical
        } else if params.kappa < 0.0 {
            LebesgueRegime::AllDivergent
        } else if (p - threshold).abs() <= CRITICAL_TOL {
            LebesgueRegime::VssFinite
        } else if p < threshold {
            LebesgueRegime::VssDivergent
        } else {
            LebesgueRegime::VssVanishing
        }
    });
    RegimeReport {
        criticality,
        lebesgue,
        p,
        p_star: derived.p_star,
        p_star_star: derived.p_star_star,
        lebesgue_threshold: threshold,
    }
}

/// `ũ = u r^{-λ}`, nodewise at cell centers.
pub fn to_weighted(u: &RadialField, lambda: f64) -> Result<RadialField> {
    if u.frame != Frame::Original {
        return Err(Error::GridMismatch("to_weighted expects an original-frame field".into()));
    }
    Ok(rescale(u, -lambda, Frame::Weighted))
}

/// `u = ũ r^{λ}`, nodewise at cell centers.
pub fn from_weighted(u: &RadialField, lambda: f64) -> Result<RadialField> {
    if u.frame != Frame::Weighted {
        return Err(Error::GridMismatch("from_weighted expects a weighted-frame field".into()));
    }
    Ok(rescale(u, lambda, Frame::Original))
}

fn rescale(u: &RadialField, exponent: f64, frame: Frame) -> RadialField {
    let values = u
        .values
        .iter()
        .zip(u.grid.centers())
        .map(|(v, r)| v * r.powf(exponent))
        .collect();
    RadialField { grid: u.grid.clone(), values, frame, time: u.time }
}
