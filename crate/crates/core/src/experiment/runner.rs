//! The per-slot simulation loop and multi-seed orchestration.

use rayon::prelude::*;
use thiserror::Error;

use crate::belief::Belief;
use crate::market::{arrival_at, sim_rng, trader_decision, MarketParams, MarketState, TradeEvent};
use crate::metrics::{monetary_loss, AggregateStats, RunRecord, RunRow};
use crate::policy::{BayesPolicy, DqnPolicy, Policy, PolicyError, QTablePolicy, RewardKind, SlotOutcome};

use super::config::{ExperimentConfig, PolicyKind, ScenarioKind, SweepSpec};

/// RNG stream of the environment (price walk, arrivals, traders).
pub const ENV_STREAM: u64 = 0;
/// RNG stream of the policy (exploration, tie-breaking, network init).
pub const POLICY_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("slot {slot}: {source}")]
pub struct RunError {
    pub slot: u64,
    #[source]
    pub source: PolicyError,
}

/// Model parameters the maker is told about in the current slot.
///
/// After a single jump the maker keeps the pre-jump model: neither the jump
/// nor the frozen price is disclosed.
pub fn maker_view(cfg: &ExperimentConfig, state: &MarketState) -> MarketParams {
    match cfg.scenario {
        ScenarioKind::Jump => cfg.market,
        _ => state.params,
    }
}

/// Prior of the Bayesian maker.
pub fn bayes_prior(cfg: &ExperimentConfig) -> Belief<f64> {
    match cfg.scenario {
        ScenarioKind::TwoPointJump => Belief::two_point(cfg.jump_low, cfg.jump_high, cfg.jump_low_weight)
            .expect("validated two-point prior"),
        _ => Belief::degenerate(cfg.initial_price),
    }
}

pub fn build_policy(cfg: &ExperimentConfig, seed: u64) -> Box<dyn Policy> {
    let rng = sim_rng(seed, POLICY_STREAM);
    match cfg.policy {
        PolicyKind::Bayes => Box::new(BayesPolicy::new(bayes_prior(cfg))),
        PolicyKind::QTable => {
            Box::new(QTablePolicy::new(cfg.initial_price, cfg.horizon, cfg.rl, RewardKind::Imbalance, rng))
        }
        PolicyKind::Oracle => {
            Box::new(QTablePolicy::new(cfg.initial_price, cfg.horizon, cfg.rl, RewardKind::LossOracle, rng))
        }
        PolicyKind::Dqn => Box::new(DqnPolicy::new(cfg.initial_price, cfg.horizon, cfg.rl, cfg.dqn.clone(), rng)),
    }
}

/// Runs `cfg.steps` slots of the configured market against `policy`.
pub fn simulate(cfg: &ExperimentConfig, seed: u64, policy: &mut dyn Policy) -> Result<RunRecord, RunError> {
    let mut state = MarketState::new(cfg.initial_price, cfg.market, sim_rng(seed, ENV_STREAM));
    let driver = cfg.driver();
    let noise = cfg.trader_noise();
    let mut rows = Vec::with_capacity(cfg.steps as usize);
    for t in 0..cfg.steps {
        driver.advance(&mut state);
        let view = maker_view(cfg, &state);
        let quote = policy.quote(&view);
        let event = if arrival_at(t, state.params.arrival_rate) {
            trader_decision(state.p_ext, &quote, &state.params, &noise, &mut state.rng)
        } else {
            TradeEvent::NoTrader
        };
        let loss = monetary_loss(state.p_ext, &quote, event);
        let outcome = SlotOutcome { event, quote, p_ext: state.p_ext, loss, view };
        let reward = policy.observe(&outcome).map_err(|source| RunError { slot: t, source })?;
        rows.push(RunRow { t, p_ext: state.p_ext, ask: quote.ask, bid: quote.bid, event, loss, reward });
        state.step_price();
    }
    Ok(RunRecord { rows })
}

pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord, RunError> {
    let mut policy = build_policy(cfg, seed);
    simulate(cfg, seed, policy.as_mut())
}

/// All `cfg.seeds` runs, in seed order.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, RunError> {
    (0..cfg.seeds)
        .into_par_iter()
        .map(|i| run_experiment(cfg, cfg.run_seed(i)))
        .collect()
}

/// One stats row per grid cell, in [`SweepSpec::cells`] order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<AggregateStats>, RunError> {
    let cells = spec.cells().expect("validated sweep");
    cells
        .iter()
        .map(|cfg| {
            let runs = run_seeds(cfg)?;
            let m = cfg.market;
            Ok(AggregateStats::from_runs(m.alpha, m.sigma, m.arrival_rate, cfg.policy.name(), &runs))
        })
        .collect()
}
