//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional except
//! `env`; unknown or repeated keys are rejected. See `configs/` for examples.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::env::EnvSpec;
use crate::inner::{StepSettings, Strategy};
use crate::risk::{BetaParam, Spectrum};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("`{key}`: {msg}")]
    Field { key: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn field(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Tabular,
    Practical,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tabular" => Ok(Self::Tabular),
            "practical" => Ok(Self::Practical),
            other => Err(format!("expected tabular or practical, got `{other}`")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tabular => "tabular",
            Self::Practical => "practical",
        })
    }
}

/// Trust-region size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Robbins-Monro in tabular mode, constant in practical mode.
    Auto,
    RobbinsMonro,
    Constant,
}

impl Schedule {
    pub fn eps(&self, eps0: f64, t: usize, mode: Mode) -> f64 {
        let decaying = match self {
            Self::Auto => mode == Mode::Tabular,
            Self::RobbinsMonro => true,
            Self::Constant => false,
        };
        if decaying {
            crate::inner::robbins_monro(eps0, t)
        } else {
            eps0
        }
    }
}

/// How the β grid is built.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// `n` evenly spaced values on [lo, hi], every β entry equal.
    Linspace { lo: f64, hi: f64, n: usize },
    /// `n` evenly spaced values on [0, C_max/(1-γ)] per constraint.
    Uniform(usize),
    /// Explicit per-constraint lists.
    Explicit(Vec<Vec<BetaParam>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub seed: u64,
    pub horizon: Option<usize>,
    pub thresholds: Option<Vec<f64>>,
    /// One per constraint, or a single entry shared by all constraints.
    pub spectra: Vec<Spectrum>,
    pub levels: usize,
    pub beta_grid: GridSpec,
    pub mode: Mode,
    pub step: StepSettings,
    pub eps0: f64,
    pub schedule: Schedule,
    pub inner_steps: usize,
    pub penalty_k: f64,
    pub sampler_lr: f64,
    pub explore_eps: f64,
    pub epochs: usize,
    pub episodes: usize,
    pub updates: usize,
    pub buffer_capacity: usize,
    pub critic_quantiles: usize,
    pub critic_ensembles: usize,
    pub td_lambda: f64,
    pub critic_lr: f64,
    pub stick_init_mean: f64,
    pub stick_std: f64,
    pub state_budget: usize,
    pub out_dir: Option<PathBuf>,
    pub log_every: usize,
}

impl ExperimentConfig {
    /// Defaults for everything but the environment.
    pub fn with_env(env: &str) -> Self {
        Self {
            env: env.to_string(),
            seed: 0,
            horizon: None,
            thresholds: None,
            spectra: vec![Spectrum::Cvar { alpha: 0.75 }],
            levels: 2,
            beta_grid: GridSpec::Uniform(5),
            mode: Mode::Tabular,
            step: StepSettings::default(),
            eps0: 0.001,
            schedule: Schedule::Auto,
            inner_steps: 1,
            penalty_k: 10.0,
            sampler_lr: 1e-3,
            explore_eps: 0.0,
            epochs: 100,
            episodes: 10,
            updates: 10,
            buffer_capacity: 100_000,
            critic_quantiles: 25,
            critic_ensembles: 2,
            td_lambda: 0.95,
            critic_lr: 0.05,
            stick_init_mean: 0.1,
            stick_std: crate::outer::STICK_STD,
            state_budget: 50_000_000,
            out_dir: None,
            log_every: 0,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    /// Spectrum of constraint `i`.
    pub fn spectrum(&self, i: usize) -> &Spectrum {
        if self.spectra.len() == 1 {
            &self.spectra[0]
        } else {
            &self.spectra[i]
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str, sep: char) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split(sep)
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| field(key, format!("`{}`: {e}", v.trim())))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| field(key, format!("`{value}`: {e}")))
}

fn parse_grid(key: &str, value: &str) -> Result<GridSpec, ConfigError> {
    if let Some(n) = value.strip_prefix("uniform:") {
        return Ok(GridSpec::Uniform(parse_one(key, n.trim())?));
    }
    if let Some(args) = value.strip_prefix("linspace:") {
        let parts: Vec<f64> = parse_list(key, args, ':')?;
        if parts.len() != 3 || parts[2].fract() != 0.0 || parts[2] < 1.0 {
            return Err(field(key, "expected linspace:<lo>:<hi>:<count>"));
        }
        return Ok(GridSpec::Linspace {
            lo: parts[0],
            hi: parts[1],
            n: parts[2] as usize,
        });
    }
    // Explicit: constraints separated by `;`, points by `|`, entries by `,`.
    let lists = value
        .split(';')
        .map(|list| {
            list.split('|')
                .map(|point| {
                    let values: Vec<f64> = parse_list(key, point, ',')?;
                    BetaParam::new(values).map_err(|e| field(key, e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GridSpec::Explicit(lists))
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().to_string();
            if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate(key));
            }
        }
        let env = pairs.remove("env").ok_or(ConfigError::Missing("env"))?;
        env.parse::<EnvSpec>().map_err(|e| field("env", e.to_string()))?;
        let mut cfg = Self::with_env(&env);
        for (key, value) in &pairs {
            let (key, value) = (key.as_str(), value.as_str());
            match key {
                "seed" => cfg.seed = parse_one(key, value)?,
                "horizon" => cfg.horizon = Some(parse_one(key, value)?),
                "thresholds" => cfg.thresholds = Some(parse_list(key, value, ',')?),
                "spectrum" => {
                    cfg.spectra = value
                        .split(';')
                        .map(|s| Spectrum::parse(s.trim()).map_err(|e| field(key, e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                "levels" => cfg.levels = parse_one(key, value)?,
                "beta_grid" => cfg.beta_grid = parse_grid(key, value)?,
                "mode" => cfg.mode = parse_one(key, value)?,
                "strategy" => cfg.step.strategy = parse_one::<Strategy>(key, value)?,
                "eps0" => cfg.eps0 = parse_one(key, value)?,
                "schedule" => {
                    cfg.schedule = match value {
                        "auto" => Schedule::Auto,
                        "robbins-monro" => Schedule::RobbinsMonro,
                        "constant" => Schedule::Constant,
                        other => {
                            return Err(field(
                                key,
                                format!("expected auto, robbins-monro or constant, got `{other}`"),
                            ))
                        }
                    }
                }
                "lambda_max" => cfg.step.lambda_max = parse_one(key, value)?,
                "g_min" => cfg.step.g_min = parse_one(key, value)?,
                "g_max" => cfg.step.g_max = parse_one(key, value)?,
                "inner_steps" => cfg.inner_steps = parse_one(key, value)?,
                "penalty_k" => cfg.penalty_k = parse_one(key, value)?,
                "sampler_lr" => cfg.sampler_lr = parse_one(key, value)?,
                "explore_eps" => cfg.explore_eps = parse_one(key, value)?,
                "epochs" => cfg.epochs = parse_one(key, value)?,
                "episodes" => cfg.episodes = parse_one(key, value)?,
                "updates" => cfg.updates = parse_one(key, value)?,
                "buffer_capacity" => cfg.buffer_capacity = parse_one(key, value)?,
                "critic_quantiles" => cfg.critic_quantiles = parse_one(key, value)?,
                "critic_ensembles" => cfg.critic_ensembles = parse_one(key, value)?,
                "td_lambda" => cfg.td_lambda = parse_one(key, value)?,
                "critic_lr" => cfg.critic_lr = parse_one(key, value)?,
                "stick_init_mean" => cfg.stick_init_mean = parse_one(key, value)?,
                "stick_std" => cfg.stick_std = parse_one(key, value)?,
                "state_budget" => cfg.state_budget = parse_one(key, value)?,
                "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
                "log_every" => cfg.log_every = parse_one(key, value)?,
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    /// Range checks that do not need the environment.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(field(key, "must be finite"))
            }
        };
        let non_negative = |key: &str, v: f64| {
            finite(key, v)?;
            if v < 0.0 {
                return Err(field(key, format!("must be non-negative, got {v}")));
            }
            Ok(())
        };
        let positive = |key: &str, v: f64| {
            finite(key, v)?;
            if v <= 0.0 {
                return Err(field(key, format!("must be positive, got {v}")));
            }
            Ok(())
        };
        let unit = |key: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                return Err(field(key, format!("must lie in [0, 1], got {v}")));
            }
            Ok(())
        };
        let at_least_one = |key: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(field(key, "must be at least 1"))
            }
        };

        if self.spectra.is_empty() {
            return Err(field("spectrum", "no spectrum given"));
        }
        at_least_one("levels", self.levels)?;
        if let Some(h) = self.horizon {
            at_least_one("horizon", h)?;
        }
        if let Some(d) = &self.thresholds {
            for &v in d {
                finite("thresholds", v)?;
            }
        }
        non_negative("eps0", self.eps0)?;
        positive("lambda_max", self.step.lambda_max)?;
        positive("g_min", self.step.g_min)?;
        positive("g_max", self.step.g_max)?;
        if self.step.g_min > self.step.g_max {
            return Err(field("g_min", format!("must not exceed g_max ({})", self.step.g_max)));
        }
        at_least_one("inner_steps", self.inner_steps)?;
        non_negative("penalty_k", self.penalty_k)?;
        non_negative("sampler_lr", self.sampler_lr)?;
        unit("explore_eps", self.explore_eps)?;
        at_least_one("epochs", self.epochs)?;
        if self.mode == Mode::Practical {
            at_least_one("episodes", self.episodes)?;
        }
        at_least_one("buffer_capacity", self.buffer_capacity)?;
        at_least_one("critic_quantiles", self.critic_quantiles)?;
        at_least_one("critic_ensembles", self.critic_ensembles)?;
        unit("td_lambda", self.td_lambda)?;
        non_negative("critic_lr", self.critic_lr)?;
        positive("stick_init_mean", self.stick_init_mean)?;
        positive("stick_std", self.stick_std)?;
        at_least_one("state_budget", self.state_budget)?;
        match &self.beta_grid {
            GridSpec::Uniform(n) => at_least_one("beta_grid", *n)?,
            GridSpec::Linspace { lo, hi, n } => {
                at_least_one("beta_grid", *n)?;
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(field("beta_grid", "linspace needs finite lo <= hi"));
                }
            }
            GridSpec::Explicit(_) => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_full() {
        let c: ExperimentConfig = "env = hazard-chain(5)\n".parse().unwrap();
        assert_eq!(c.penalty_k, 10.0);
        let c: ExperimentConfig = "
            # comment
            env = two-hazard-grid
            spectrum = cvar:0.5; pow:0.75
            levels = 3
            beta_grid = 0,1 | 1,2 ; 0,0
            strategy = sdac-qp   # trailing comment
            schedule = constant
        "
        .parse()
        .unwrap();
        assert_eq!(c.spectra.len(), 2);
        assert_eq!(c.step.strategy, Strategy::SdacQp);
        match c.beta_grid {
            GridSpec::Explicit(lists) => assert_eq!(lists[0][1].0, vec![1.0, 2.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            ("seed = 1", "env"),
            ("env = hazard-chain(5)\nfoo = 1", "foo"),
            ("env = hazard-chain(5)\nseed = 1\nseed = 2", "seed"),
            ("env = hazard-chain(5)\ng_min = 5\ng_max = 1", "g_min"),
            ("env = hazard-chain(5)\nexplore_eps = 1.5", "explore_eps"),
            ("env = maze", "env"),
            ("env = hazard-chain(5)\nbeta_grid = linspace:1:0:3", "beta_grid"),
            ("env = hazard-chain(5)\njust words", "line 2"),
        ];
        for (text, needle) in cases {
            let err = text.parse::<ExperimentConfig>().unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} -> {err}");
        }
    }

    #[test]
    fn schedule_modes() {
        assert_eq!(Schedule::Auto.eps(0.1, 3, Mode::Tabular), 0.05);
        assert_eq!(Schedule::Auto.eps(0.1, 3, Mode::Practical), 0.1);
        assert_eq!(Schedule::Constant.eps(0.1, 3, Mode::Tabular), 0.1);
    }
}
