//! TOML experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::market::{MarketParams, NoiseFamily, ParamError, ScenarioDriver, TraderNoise};
use crate::policy::DqnConfig;
use crate::qtable::RLParams;

pub const DEFAULT_STEPS: u64 = 100_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {msg}")]
    Validation { key: String, msg: String },
}

impl ConfigError {
    fn invalid(key: &str, msg: impl Into<String>) -> Self {
        ConfigError::Validation { key: key.to_string(), msg: msg.into() }
    }
}

impl From<ParamError> for ConfigError {
    fn from(e: ParamError) -> Self {
        match e {
            ParamError::OutOfRange { name, value, range } => {
                ConfigError::invalid(name, format!("{value} is outside {range}"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Bayes,
    QTable,
    Dqn,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Bayes, PolicyKind::QTable, PolicyKind::Dqn, PolicyKind::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Bayes => "bayes",
            PolicyKind::QTable => "qtable",
            PolicyKind::Dqn => "dqn",
            PolicyKind::Oracle => "oracle",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown policy {s:?} (expected bayes, qtable, dqn or oracle)"))
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Fixed,
    Jump,
    TwoPointJump,
    Drifting,
    NoisyTrader,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Fixed,
        ScenarioKind::Jump,
        ScenarioKind::TwoPointJump,
        ScenarioKind::Drifting,
        ScenarioKind::NoisyTrader,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Fixed => "fixed",
            ScenarioKind::Jump => "jump",
            ScenarioKind::TwoPointJump => "two_point_jump",
            ScenarioKind::Drifting => "drifting",
            ScenarioKind::NoisyTrader => "noisy_trader",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ScenarioKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            format!("unknown scenario {s:?} (expected fixed, jump, two_point_jump, drifting or noisy_trader)")
        })
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn parse_noise(s: &str) -> Option<NoiseFamily> {
    match s {
        "none" => Some(NoiseFamily::None),
        "gaussian" => Some(NoiseFamily::Gaussian),
        "laplace" => Some(NoiseFamily::Laplace),
        "lognormal" => Some(NoiseFamily::LogNormal),
        _ => None,
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub policy: PolicyKind,
    pub scenario: ScenarioKind,
    pub market: MarketParams,
    pub rl: RLParams,
    /// Trade-history window `H`.
    pub horizon: usize,
    /// Observation noise of traders in the `noisy_trader` scenario.
    pub noise: TraderNoise,
    /// Slots per run, `T`.
    pub steps: u64,
    pub seeds: usize,
    pub base_seed: u64,
    pub initial_price: i64,
    pub jump_size: i64,
    pub jump_at: u64,
    pub jump_low: i64,
    pub jump_high: i64,
    pub jump_low_weight: f64,
    pub drift_step: f64,
    pub out: PathBuf,
    pub dqn: DqnConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        RawConfig::default().validate().expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn driver(&self) -> ScenarioDriver {
        match self.scenario {
            ScenarioKind::Fixed | ScenarioKind::NoisyTrader => ScenarioDriver::Fixed,
            ScenarioKind::Jump => ScenarioDriver::SingleJump { size: self.jump_size, at: self.jump_at },
            ScenarioKind::TwoPointJump => ScenarioDriver::TwoPointJump {
                low: self.jump_low,
                high: self.jump_high,
                low_weight: self.jump_low_weight,
            },
            ScenarioKind::Drifting => ScenarioDriver::DriftingParams { step: self.drift_step },
        }
    }

    pub fn trader_noise(&self) -> TraderNoise {
        match self.scenario {
            ScenarioKind::NoisyTrader => self.noise,
            _ => TraderNoise::NONE,
        }
    }

    /// Seed of run `index` in a multi-seed experiment.
    pub fn run_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub policy: Option<String>,
    pub scenario: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDqn {
    hidden: Option<Vec<usize>>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    replay_capacity: Option<usize>,
    train_every: Option<u64>,
    warmup: Option<u64>,
    /// 0 disables the frozen bootstrap network.
    target_period: Option<u64>,
    /// 0 disables clipping.
    clip_norm: Option<f64>,
    reward_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    alpha: Option<Vec<f64>>,
    sigma: Option<Vec<f64>>,
    #[serde(alias = "lambda")]
    arrival_rate: Option<Vec<f64>>,
    policy: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    policy: Option<String>,
    scenario: Option<String>,
    alpha: Option<f64>,
    sigma: Option<f64>,
    #[serde(alias = "lambda")]
    arrival_rate: Option<f64>,
    mu: Option<f64>,
    epsilon: Option<f64>,
    epsilon_floor: Option<f64>,
    learning_rate: Option<f64>,
    discount: Option<f64>,
    #[serde(rename = "H", alias = "horizon")]
    horizon: Option<usize>,
    noise: Option<String>,
    noise_scale: Option<f64>,
    #[serde(rename = "T", alias = "steps")]
    steps: Option<u64>,
    seeds: Option<usize>,
    base_seed: Option<u64>,
    initial_price: Option<i64>,
    jump_size: Option<i64>,
    jump_at: Option<u64>,
    jump_low: Option<i64>,
    jump_high: Option<i64>,
    jump_low_weight: Option<f64>,
    drift_step: Option<f64>,
    out: Option<PathBuf>,
    dqn: Option<RawDqn>,
    sweep: Option<RawSweep>,
}

fn check(ok: bool, key: &str, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, msg))
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.base_seed = Some(s);
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(p) = &o.policy {
            self.policy = Some(p.clone());
        }
        if let Some(s) = &o.scenario {
            self.scenario = Some(s.clone());
        }
    }

    fn validate(&self) -> Result<ExperimentConfig, ConfigError> {
        let policy = match &self.policy {
            Some(s) => s.parse().map_err(|m| ConfigError::invalid("policy", m))?,
            None => PolicyKind::Bayes,
        };
        let scenario = match &self.scenario {
            Some(s) => s.parse().map_err(|m| ConfigError::invalid("scenario", m))?,
            None => ScenarioKind::Fixed,
        };
        let market = MarketParams::new(
            self.alpha.unwrap_or(0.9),
            self.sigma.unwrap_or(0.5),
            self.arrival_rate.unwrap_or(1.0),
        )?;

        let d = RLParams::default();
        let rl = RLParams {
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            epsilon_floor: self.epsilon_floor.unwrap_or(d.epsilon_floor),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            mu: self.mu.unwrap_or(d.mu),
            discount: self.discount.unwrap_or(d.discount),
        };
        check(unit(rl.epsilon), "epsilon", "must lie in [0, 1]")?;
        check(unit(rl.epsilon_floor), "epsilon_floor", "must lie in [0, 1]")?;
        check(rl.learning_rate > 0.0 && rl.learning_rate <= 1.0, "learning_rate", "must lie in (0, 1]")?;
        check(rl.mu >= 0.0 && rl.mu.is_finite(), "mu", "must be finite and non-negative")?;
        check((0.0..1.0).contains(&rl.discount), "discount", "must lie in [0, 1)")?;

        let horizon = self.horizon.unwrap_or(20);
        check(horizon >= 1, "H", "must be at least 1")?;

        let family = match &self.noise {
            Some(s) => parse_noise(s).ok_or_else(|| {
                ConfigError::invalid("noise", format!("unknown family {s:?} (expected none, gaussian, laplace or lognormal)"))
            })?,
            None if scenario == ScenarioKind::NoisyTrader => NoiseFamily::Gaussian,
            None => NoiseFamily::None,
        };
        check(
            family == NoiseFamily::None || scenario == ScenarioKind::NoisyTrader,
            "noise",
            "trader noise only applies to the noisy_trader scenario",
        )?;
        let noise = TraderNoise::new(family, self.noise_scale.unwrap_or(family.default_scale()))?;

        let steps = match self.steps {
            Some(t) => t,
            None => {
                log::info!("`T` not set, defaulting to {DEFAULT_STEPS}");
                DEFAULT_STEPS
            }
        };
        check(steps >= 1, "T", "must be at least 1")?;
        let seeds = self.seeds.unwrap_or(1);
        check(seeds >= 1, "seeds", "must be at least 1")?;

        let initial_price = self.initial_price.unwrap_or(1000);
        check(initial_price >= 1, "initial_price", "must be positive")?;
        let jump_size = self.jump_size.unwrap_or(20);
        let jump_low = self.jump_low.unwrap_or(initial_price - jump_size.abs() / 2);
        let jump_high = self.jump_high.unwrap_or(initial_price + jump_size.abs() / 2);
        if scenario == ScenarioKind::TwoPointJump {
            check(jump_low < jump_high, "jump_low", "must be below jump_high")?;
            check(jump_low >= 1, "jump_low", "must be positive")?;
        }
        if scenario == ScenarioKind::Jump {
            check(initial_price + jump_size >= 1, "jump_size", "would move the price below 1")?;
        }
        let jump_low_weight = self.jump_low_weight.unwrap_or(0.5);
        check(
            jump_low_weight > 0.0 && jump_low_weight < 1.0,
            "jump_low_weight",
            "must lie in (0, 1)",
        )?;
        let drift_step = self.drift_step.unwrap_or(0.01);
        check(unit(drift_step), "drift_step", "must lie in [0, 1]")?;

        let dqn = self.dqn.clone().unwrap_or_default().validate()?;

        Ok(ExperimentConfig {
            policy,
            scenario,
            market,
            rl,
            horizon,
            noise,
            steps,
            seeds,
            base_seed: self.base_seed.unwrap_or(0),
            initial_price,
            jump_size,
            jump_at: self.jump_at.unwrap_or(0),
            jump_low,
            jump_high,
            jump_low_weight,
            drift_step,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            dqn,
        })
    }
}

impl RawDqn {
    fn validate(self) -> Result<DqnConfig, ConfigError> {
        let d = DqnConfig::default();
        let cfg = DqnConfig {
            hidden: self.hidden.unwrap_or(d.hidden),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            replay_capacity: self.replay_capacity.unwrap_or(d.replay_capacity),
            train_every: self.train_every.unwrap_or(d.train_every),
            warmup: self.warmup.unwrap_or(d.warmup),
            target_period: match self.target_period {
                Some(0) => None,
                Some(p) => Some(p),
                None => d.target_period,
            },
            clip_norm: match self.clip_norm {
                Some(0.0) => None,
                Some(c) => Some(c),
                None => d.clip_norm,
            },
            reward_scale: self.reward_scale.unwrap_or(d.reward_scale),
        };
        check(cfg.hidden.iter().all(|&w| w >= 1), "dqn.hidden", "widths must be positive")?;
        check(
            cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite(),
            "dqn.learning_rate",
            "must be positive",
        )?;
        check(cfg.batch_size >= 1, "dqn.batch_size", "must be at least 1")?;
        check(cfg.replay_capacity >= 1, "dqn.replay_capacity", "must be at least 1")?;
        check(cfg.train_every >= 1, "dqn.train_every", "must be at least 1")?;
        check(cfg.clip_norm.is_none_or(|c| c > 0.0), "dqn.clip_norm", "must be positive")?;
        check(
            cfg.reward_scale > 0.0 && cfg.reward_scale.is_finite(),
            "dqn.reward_scale",
            "must be positive",
        )?;
        Ok(cfg)
    }
}

/// Grid of experiments sharing a base configuration. Empty axes keep the base
/// value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    pub arrival_rate: Vec<f64>,
    pub policy: Vec<PolicyKind>,
}

impl SweepSpec {
    /// Every grid cell, policies varying fastest.
    pub fn cells(&self) -> Result<Vec<ExperimentConfig>, ConfigError> {
        fn or_base<T: Copy>(axis: &[T], base: T) -> Vec<T> {
            if axis.is_empty() {
                vec![base]
            } else {
                axis.to_vec()
            }
        }
        let b = &self.base;
        let mut out = Vec::new();
        for &alpha in &or_base(&self.alpha, b.market.alpha) {
            for &sigma in &or_base(&self.sigma, b.market.sigma) {
                for &rate in &or_base(&self.arrival_rate, b.market.arrival_rate) {
                    for &policy in &or_base(&self.policy, b.policy) {
                        let market = MarketParams::new(alpha, sigma, rate)?;
                        out.push(ExperimentConfig { market, policy, ..b.clone() });
                    }
                }
            }
        }
        Ok(out)
    }
}

const PRESETS: [(&str, &str); 4] = [
    ("fig_fixed", include_str!("../../presets/fig_fixed.toml")),
    ("fig_jump", include_str!("../../presets/fig_jump.toml")),
    ("fig_drifting", include_str!("../../presets/fig_drifting.toml")),
    ("fig_loss_sweep", include_str!("../../presets/fig_loss_sweep.toml")),
];

/// TOML text of a shipped preset.
pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Reads `path`; a path that does not exist but names a preset loads the
/// preset.
fn read_source(path: &Path) -> Result<String, ConfigError> {
    match std::fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => path
            .to_str()
            .and_then(preset)
            .map(str::to_string)
            .ok_or(ConfigError::Io { path: path.to_path_buf(), source: e }),
        Err(e) => Err(ConfigError::Io { path: path.to_path_buf(), source: e }),
    }
}

pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = RawConfig::parse(text)?;
    raw.apply(overrides);
    raw.validate()
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    parse_config(&read_source(path)?, overrides)
}

pub fn parse_sweep(text: &str, overrides: &Overrides) -> Result<SweepSpec, ConfigError> {
    let mut raw = RawConfig::parse(text)?;
    raw.apply(overrides);
    let base = raw.validate()?;
    let sweep = raw.sweep.ok_or_else(|| ConfigError::invalid("sweep", "missing [sweep] table"))?;
    let policy = sweep
        .policy
        .unwrap_or_default()
        .iter()
        .map(|s| s.parse().map_err(|m| ConfigError::invalid("sweep.policy", m)))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SweepSpec {
        base,
        alpha: sweep.alpha.unwrap_or_default(),
        sigma: sweep.sigma.unwrap_or_default(),
        arrival_rate: sweep.arrival_rate.unwrap_or_default(),
        policy,
    };
    check(
        !(spec.alpha.is_empty() && spec.sigma.is_empty() && spec.arrival_rate.is_empty() && spec.policy.is_empty()),
        "sweep",
        "grid is empty",
    )?;
    spec.cells().map_err(|e| match e {
        ConfigError::Validation { key, msg } => ConfigError::Validation { key: format!("sweep.{key}"), msg },
        other => other,
    })?;
    Ok(spec)
}

pub fn load_sweep(path: &Path, overrides: &Overrides) -> Result<SweepSpec, ConfigError> {
    parse_sweep(&read_source(path)?, overrides)
}
