//! `key = value` run configuration with dotted sections:
//!
//! ```text
//! # comment
//! problem.N = 3
//! problem.kappa = 0
//! evolve.record_times = 0.01, 0.1, 1
//! ```
//!
//! Unknown keys, duplicates and malformed values are errors carrying the line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use hardy_vss::evolve::{EvolveConfig, Scheme};
use hardy_vss::verify::SweepThresholds;
use hardy_vss::ProblemParams;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileChoice {
    Variational,
    Shooting,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub r_max: f64,
    pub n: usize,
    pub grading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceConfig {
    pub varkappa: f64,
    /// Width for a single `evolve` run.
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VssConfig {
    pub max_varkappa: f64,
    pub epsilons: Vec<f64>,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelConfig {
    pub times: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub p_values: Vec<f64>,
    pub varkappa: f64,
    pub epsilons: Vec<f64>,
    pub probe_r: f64,
    pub probe_t: f64,
    pub thresholds: SweepThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemParams,
    pub grid: GridConfig,
    pub evolve: EvolveConfig,
    pub source: SourceConfig,
    pub vss: VssConfig,
    pub kernel: KernelConfig,
    pub sweep: SweepConfig,
    pub profile: ProfileChoice,
    pub criteria: Vec<usize>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let decades = |lo: i32, hi: i32| (lo..=hi).map(|k| 10f64.powi(-k)).collect::<Vec<_>>();
        let mut evolve = EvolveConfig::new(1.0).with_record_times(vec![1e-3, 1e-2, 0.1, 1.0]).with_rho(vec![0.5, 1.0]);
        evolve.dt_growth = 1.01;
        Self {
            problem: ProblemParams { dim: 3, kappa: 0.0, alpha: 0.0, p: 1.5 },
            grid: GridConfig { r_max: 12.0, n: 1024, grading: 2.0 },
            evolve,
            source: SourceConfig { varkappa: 1.0, epsilon: 0.01, epsilons: decades(2, 8), rel_tol: 1e-3 },
            vss: VssConfig { max_varkappa: 1e8, epsilons: decades(2, 13), rel_tol: 1e-3 },
            kernel: KernelConfig { times: vec![0.0625, 0.25, 1.0], epsilons: vec![0.01, 0.005], delta: 0.5 },
            sweep: SweepConfig {
                p_values: vec![1.6, 1.7],
                varkappa: 100.0,
                epsilons: (0..8).map(|k| 0.01 * 0.5f64.powi(k)).collect(),
                probe_r: 0.5,
                probe_t: 0.25,
                thresholds: SweepThresholds::default(),
            },
            profile: ProfileChoice::Both,
            criteria: (1..=hardy_vss::suite::CRITERIA).collect(),
            seed: 42,
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

fn float(line: usize, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| err(line, format!("'{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(err(line, format!("'{v}' is not finite")));
    }
    Ok(x)
}

fn int<T: std::str::FromStr>(line: usize, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| err(line, format!("'{v}' is not a non-negative integer")))
}

fn floats(line: usize, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|s| float(line, s.trim())).collect()
}

fn boolean(line: usize, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, format!("'{v}' is not true/false"))),
    }
}

/// Splits the text into `key -> (line, value)`.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| err(line, format!("expected key = value, got '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(err(line, format!("bad key '{key}'")));
        }
        if value.is_empty() {
            return Err(err(line, format!("missing value for '{key}'")));
        }
        if let Some((first, _)) = pairs.insert(key.to_string(), (line, value.to_string())) {
            return Err(err(line, format!("duplicate key '{key}' (first set on line {first})")));
        }
    }
    Ok(pairs)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (key, (line, v)) in parse_pairs(text)? {
            let (l, v) = (line, v.as_str());
            match key.as_str() {
                "problem.N" => c.problem.dim = int(l, v)?,
                "problem.kappa" => c.problem.kappa = float(l, v)?,
                "problem.alpha" => c.problem.alpha = float(l, v)?,
                "problem.p" => c.problem.p = float(l, v)?,
                "grid.r_max" => c.grid.r_max = float(l, v)?,
                "grid.n" => c.grid.n = int(l, v)?,
                "grid.grading" => c.grid.grading = float(l, v)?,
                "evolve.t_end" => c.evolve.t_end = float(l, v)?,
                "evolve.dt0" => c.evolve.dt0 = float(l, v)?,
                "evolve.dt_growth" => c.evolve.dt_growth = float(l, v)?,
                "evolve.dt_max" => c.evolve.dt_max = float(l, v)?,
                "evolve.record_times" => c.evolve.record_times = floats(l, v)?,
                "evolve.rho" => c.evolve.rho = floats(l, v)?,
                "evolve.linear_only" => c.evolve.linear_only = boolean(l, v)?,
                "evolve.newton_tol" => c.evolve.newton.tol = float(l, v)?,
                "evolve.newton_max_iter" => c.evolve.newton.max_iter = int(l, v)?,
                "evolve.scheme" => {
                    c.evolve.scheme = match v {
                        "implicit_euler" => Scheme::ImplicitEuler,
                        "extrapolated" => Scheme::Extrapolated,
                        _ => return Err(err(l, format!("scheme '{v}' is not implicit_euler or extrapolated"))),
                    }
                }
                "source.varkappa" => c.source.varkappa = float(l, v)?,
                "source.epsilon" => c.source.epsilon = float(l, v)?,
                "source.epsilons" => c.source.epsilons = floats(l, v)?,
                "source.rel_tol" => c.source.rel_tol = float(l, v)?,
                "vss.max_varkappa" => c.vss.max_varkappa = float(l, v)?,
                "vss.epsilons" => c.vss.epsilons = floats(l, v)?,
                "vss.rel_tol" => c.vss.rel_tol = float(l, v)?,
                "kernel.times" => c.kernel.times = floats(l, v)?,
                "kernel.epsilons" => c.kernel.epsilons = floats(l, v)?,
                "kernel.delta" => c.kernel.delta = float(l, v)?,
                "sweep.p_values" => c.sweep.p_values = floats(l, v)?,
                "sweep.varkappa" => c.sweep.varkappa = float(l, v)?,
                "sweep.epsilons" => c.sweep.epsilons = floats(l, v)?,
                "sweep.probe_r" => c.sweep.probe_r = float(l, v)?,
                "sweep.probe_t" => c.sweep.probe_t = float(l, v)?,
                "sweep.persist" => c.sweep.thresholds.persist = float(l, v)?,
                "sweep.vanish" => c.sweep.thresholds.vanish = float(l, v)?,
                "profile.method" => {
                    c.profile = match v {
                        "variational" => ProfileChoice::Variational,
                        "shooting" => ProfileChoice::Shooting,
                        "both" => ProfileChoice::Both,
                        _ => return Err(err(l, format!("profile method '{v}' is not variational, shooting or both"))),
                    }
                }
                "verify.criteria" => {
                    c.criteria = v.split(',').map(|s| int(l, s.trim())).collect::<Result<_, _>>()?;
                    if let Some(&k) = c.criteria.iter().find(|&&k| k == 0 || k > hardy_vss::suite::CRITERIA) {
                        return Err(err(l, format!("criterion {k} outside 1..={}", hardy_vss::suite::CRITERIA)));
                    }
                }
                "seed" => c.seed = int(l, v)?,
                _ => return Err(err(l, format!("unknown key '{key}'"))),
            }
        }
        c.evolve.validate().map_err(|e| err(0, e.to_string()))?;
        if c.grid.n < 2 || !(c.grid.r_max > 0.0) || !(c.grid.grading >= 1.0) {
            return Err(err(0, "grid needs n >= 2, r_max > 0, grading >= 1"));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn keys_and_lists() {
        let c = RunConfig::parse("problem.kappa = -0.75\nproblem.p=2 # trailing\nevolve.record_times = 0.1, 0.5,1\nseed = 7\n").unwrap();
        assert_eq!(c.problem.kappa, -0.75);
        assert_eq!(c.problem.p, 2.0);
        assert_eq!(c.evolve.record_times, vec![0.1, 0.5, 1.0]);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RunConfig::parse("problem.p = 1.5\n\ngrid.n = many\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.to_string().starts_with("config line 3:"));
        assert_eq!(RunConfig::parse("a.b = 1\n").unwrap_err().line, 1);
        assert_eq!(RunConfig::parse("\nproblem.p\n").unwrap_err().line, 2);
        let dup = RunConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert_eq!(dup.line, 2);
        assert!(dup.message.contains("line 1"));
        assert_eq!(RunConfig::parse("verify.criteria = 1, 15\n").unwrap_err().line, 1);
        assert_eq!(RunConfig::parse("problem.p = nan\n").unwrap_err().line, 1);
    }

    #[test]
    fn inconsistent_schedule_is_rejected() {
        assert!(RunConfig::parse("evolve.record_times = 0.5, 2\n").is_err());
    }
}
