//! Experiment configuration: defaults, flat `key = value` files and the
//! seed environment variable.
//!
//! Precedence, lowest first: built-in defaults, `DPNTK_SEED`, the config
//! file, command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dp_ntk::dp::{ConditionConfig, DpParams, MRule};

use crate::error::{HarnessError, Result};

pub const SEED_ENV: &str = "DPNTK_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KPolicy {
    /// Largest admissible `k` for each ε, clamped to `[⌈8 ln(1/δ_α)⌉, 10⁷]`.
    MaxK,
    Fixed(u64),
}

impl FromStr for KPolicy {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "max-k" | "max_k" => Ok(KPolicy::MaxK),
            other => other
                .parse::<u64>()
                .ok()
                .filter(|&k| k >= 1)
                .map(KPolicy::Fixed)
                .ok_or_else(|| HarnessError::Usage(format!("k must be `max-k` or a positive integer, got `{other}`"))),
        }
    }
}

impl fmt::Display for KPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KPolicy::MaxK => write!(f, "max-k"),
            KPolicy::Fixed(k) => write!(f, "{k}"),
        }
    }
}

pub fn parse_m_rule(s: &str) -> Result<MRule> {
    match s.trim() {
        "protocol" => Ok(MRule::Protocol),
        "composed" => Ok(MRule::Composed),
        other => Err(HarnessError::Usage(format!("m-rule must be `protocol` or `composed`, got `{other}`"))),
    }
}

/// Comma-separated list of positive reals.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Usage(format!("bad epsilon `{}`", t.trim())))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub n_cls: usize,
    pub m: usize,
    pub k_policy: KPolicy,
    pub lambda: f64,
    pub sigma: f64,
    pub beta: f64,
    pub bound_b: f64,
    pub delta_total: f64,
    pub epsilon_grid: Vec<f64>,
    /// Share of ε spent on the feature noise; the rest goes to the kernel.
    pub eps_split: f64,
    /// Share of δ spent on the feature noise.
    pub delta_split: f64,
    pub train_fraction: f64,
    pub separation: f64,
    /// Norm scale of the within-cluster noise of synthetic data.
    pub spread: f64,
    pub m_rule: MRule,
    /// Failure probability of the kernel concentration radius ρ.
    pub gamma: f64,
    /// Constant in front of the concentration radius ρ.
    pub c_rho: f64,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub normalize: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 500,
            d: 16,
            n_cls: 2,
            m: 256,
            k_policy: KPolicy::MaxK,
            lambda: 10.0,
            sigma: 1.0,
            beta: 1e-6,
            bound_b: 1.0,
            delta_total: 2e-3,
            epsilon_grid: vec![30.0, 100.0, 300.0, 1e3, 3e3, 1e4, 3e4],
            eps_split: 0.5,
            delta_split: 0.5,
            train_fraction: 0.2,
            separation: 1.0,
            spread: 0.6,
            m_rule: MRule::Protocol,
            gamma: 0.01,
            c_rho: 1.0,
            seed: 0,
            input: None,
            normalize: false,
            output: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| HarnessError::Usage(format!("bad value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Defaults with the seed taken from `DPNTK_SEED` when set.
    pub fn from_env() -> Result<Self> {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = parse(SEED_ENV, &v)?;
        }
        Ok(cfg)
    }

    /// Sets one field by its kebab-case name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "n-cls" => self.n_cls = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "k" => self.k_policy = value.parse()?,
            "lambda" => self.lambda = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "bound-b" => self.bound_b = parse(key, value)?,
            "delta" => self.delta_total = parse(key, value)?,
            "epsilon-grid" => self.epsilon_grid = parse_grid(value)?,
            "eps-split" => self.eps_split = parse(key, value)?,
            "delta-split" => self.delta_split = parse(key, value)?,
            "train-fraction" => self.train_fraction = parse(key, value)?,
            "separation" => self.separation = parse(key, value)?,
            "spread" => self.spread = parse(key, value)?,
            "m-rule" => self.m_rule = parse_m_rule(value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "c-rho" => self.c_rho = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "input" => self.input = Some(PathBuf::from(value.trim())),
            "normalize" => self.normalize = parse(key, value)?,
            "output" => self.output = Some(PathBuf::from(value.trim())),
            _ => return Err(HarnessError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// skipped.
    pub fn apply_str(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Parse {
                path: origin.to_path_buf(),
                line: idx as u64 + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                HarnessError::Usage(msg) => HarnessError::Parse {
                    path: origin.to_path_buf(),
                    line: idx as u64 + 1,
                    msg,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        self.apply_str(&text, path)
    }

    /// Total budget of the grid point `epsilon`.
    pub fn total_budget(&self, epsilon: f64) -> Result<DpParams> {
        Ok(DpParams::new(epsilon, self.delta_total)?)
    }

    /// `(dp_x, dp_alpha)` for one grid point.
    pub fn split_budget(&self, epsilon: f64) -> Result<(DpParams, DpParams)> {
        Ok(self.total_budget(epsilon)?.split(self.eps_split, self.delta_split)?)
    }

    pub fn conditions(&self) -> ConditionConfig {
        ConditionConfig {
            m_rule: self.m_rule,
            gamma: self.gamma,
            c_rho: self.c_rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |msg: String| Err(HarnessError::Usage(msg));
        if self.n == 0 || self.d == 0 || self.n_cls == 0 || self.m == 0 {
            return usage("n, d, n-cls and m must be positive".into());
        }
        if self.epsilon_grid.is_empty() {
            return usage("epsilon-grid is empty".into());
        }
        if self.epsilon_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return usage("epsilon-grid entries must be positive and finite".into());
        }
        if self.epsilon_grid.windows(2).any(|w| w[0] >= w[1]) {
            return usage("epsilon-grid must be strictly increasing".into());
        }
        if !(self.delta_total > 0.0 && self.delta_total < 1.0) {
            return usage(format!("delta must lie in (0, 1), got {}", self.delta_total));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("eps-split", self.eps_split),
            ("delta-split", self.delta_split),
            ("train-fraction", self.train_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return usage(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("sigma", self.sigma),
            ("bound-b", self.bound_b),
            ("c-rho", self.c_rho),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return usage(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return usage(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0 && self.separation.is_finite() && self.separation >= 0.0) {
            return usage("spread and separation must be >= 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.n, cfg.d, cfg.m), (500, 16, 256));
        assert_eq!(cfg.lambda, 10.0);
        assert_eq!(cfg.delta_total, 2e-3);
        assert_eq!(cfg.beta, 1e-6);
    }

    #[test]
    fn file_overrides_and_errors() {
        let mut cfg = ExperimentConfig::default();
        let text = "# sweep\nn = 200\nepsilon-grid = 1, 10,100\nk = 5000\n\nm-rule=composed\n";
        cfg.apply_str(text, Path::new("a.cfg")).unwrap();
        assert_eq!(cfg.n, 200);
        assert_eq!(cfg.epsilon_grid, vec![1.0, 10.0, 100.0]);
        assert_eq!(cfg.k_policy, KPolicy::Fixed(5000));
        assert_eq!(cfg.m_rule, MRule::Composed);
        cfg.apply_str("gamma = 0.05\nc-rho = 2\n", Path::new("a.cfg")).unwrap();
        let cond = cfg.conditions();
        assert_eq!((cond.gamma, cond.c_rho, cond.m_rule), (0.05, 2.0, MRule::Composed));

        let err = cfg.apply_str("n = 3\nbogus = 1\n", Path::new("b.cfg")).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 2, .. }), "{err}");
        let err = cfg.apply_str("n = x\n", Path::new("c.cfg")).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 1, .. }));
        assert!(cfg.apply_str("no equals sign\n", Path::new("d.cfg")).is_err());
    }

    #[test]
    fn grid_must_increase() {
        let mut cfg = ExperimentConfig {
            epsilon_grid: vec![1.0, 1.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.epsilon_grid = vec![10.0, 1.0];
        assert!(cfg.validate().is_err());
        cfg.epsilon_grid = vec![1.0, 2.0];
        cfg.delta_total = 1.0;
        assert!(cfg.validate().is_err());
        cfg.delta_total = 1e-3;
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.01;
        cfg.c_rho = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn split_halves_budget() {
        let cfg = ExperimentConfig::default();
        let (x, a) = cfg.split_budget(4.0).unwrap();
        assert_eq!((x.epsilon(), x.delta()), (2.0, 1e-3));
        assert_eq!((a.epsilon(), a.delta()), (2.0, 1e-3));
    }

    #[test]
    fn k_policy_parsing() {
        assert_eq!("max-k".parse::<KPolicy>().unwrap(), KPolicy::MaxK);
        assert_eq!("12".parse::<KPolicy>().unwrap(), KPolicy::Fixed(12));
        assert!("0".parse::<KPolicy>().is_err());
        assert!("lots".parse::<KPolicy>().is_err());
    }
}
