//! Market-making policies driven by the simulation loop.

use std::collections::VecDeque;

use thiserror::Error;

use crate::belief::{Belief, BeliefError};
use crate::challenge::StepClaim;
use crate::dqn::{act_epsilon_greedy, encode_state, train_step, DqnError, ReplayBuffer, SgdConfig, Transition, ValueNet};
use crate::market::{MarketParams, SimRng, TradeEvent};
use crate::qtable::{compute_reward, imbalance, select_action, td_target_value, Action, MakerState, QTable, RLParams};
use crate::quote::Quote;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Dqn(#[from] DqnError),
}

/// What the simulation reports back to the policy after each slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotOutcome {
    pub event: TradeEvent,
    pub quote: Quote<f64>,
    /// Only the loss-oracle baseline may look at this or at `loss`.
    pub p_ext: i64,
    pub loss: f64,
    /// Model parameters disclosed to the maker for this slot.
    pub view: MarketParams,
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Quote for the current slot. `view` holds the model parameters the
    /// maker is told about; model-free policies ignore it.
    fn quote(&mut self, view: &MarketParams) -> Quote<f64>;

    /// Learns from the slot's outcome; returns the reward the policy assigned
    /// to the slot (zero for policies that do not learn from rewards).
    fn observe(&mut self, outcome: &SlotOutcome) -> Result<f64, PolicyError>;
}

/// The exact Bayesian maker: condition on the trade, then diffuse.
#[derive(Debug, Clone)]
pub struct BayesPolicy {
    belief: Belief<f64>,
}

impl BayesPolicy {
    pub fn new(prior: Belief<f64>) -> Self {
        BayesPolicy { belief: prior }
    }

    pub fn belief(&self) -> &Belief<f64> {
        &self.belief
    }
}

impl Policy for BayesPolicy {
    fn name(&self) -> &'static str {
        "bayes"
    }

    fn quote(&mut self, view: &MarketParams) -> Quote<f64> {
        self.belief.solve_quotes(view.alpha)
    }

    fn observe(&mut self, o: &SlotOutcome) -> Result<f64, PolicyError> {
        if o.event != TradeEvent::NoTrader {
            self.belief = self.belief.posterior_trade(o.event, &o.quote, o.view.alpha)?;
        }
        self.belief = self.belief.diffuse(o.view.sigma);
        Ok(0.0)
    }
}

/// Reward signal of a tabular agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    /// `-n^2 - mu * spread^2` from the trade imbalance alone.
    Imbalance,
    /// `-loss - mu * spread^2`, which requires seeing the external price.
    LossOracle,
}

/// Deliberate fault for exercising the challenge protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Publish a non-maximal action on the first greedy step at or after `at`
    /// whose row is not flat.
    Argmax { at: u64 },
    /// Bootstrap on a non-maximal entry at the first step at or after `at`
    /// whose next row is not flat.
    Update { at: u64 },
}

/// Gap under which a row counts as flat for fault injection.
const FAULT_MARGIN: f64 = 1e-6;

/// Tabular Q-learning maker.
#[derive(Debug, Clone)]
pub struct QTablePolicy {
    table: QTable<f64>,
    maker: MakerState<f64>,
    params: RLParams,
    reward: RewardKind,
    rng: SimRng,
    t: u64,
    pending: Option<(i32, Action, bool)>,
    learning: bool,
    claims: Option<Vec<StepClaim<f64>>>,
    fault: Option<Fault>,
    fault_slot: Option<u64>,
}

impl QTablePolicy {
    pub fn new(initial_mid: i64, horizon: usize, params: RLParams, reward: RewardKind, rng: SimRng) -> Self {
        QTablePolicy {
            table: QTable::zeros(horizon),
            maker: MakerState::new(initial_mid as f64, horizon),
            params,
            reward,
            rng,
            t: 0,
            pending: None,
            learning: true,
            claims: None,
            fault: None,
            fault_slot: None,
        }
    }

    pub fn table(&self) -> &QTable<f64> {
        &self.table
    }

    pub fn maker(&self) -> &MakerState<f64> {
        &self.maker
    }

    /// Keep a log of every published step for later auditing.
    pub fn record_claims(&mut self) {
        self.claims = Some(Vec::new());
    }

    pub fn claims(&self) -> &[StepClaim<f64>] {
        self.claims.as_deref().unwrap_or(&[])
    }

    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    /// Slot at which the injected fault actually fired.
    pub fn fault_slot(&self) -> Option<u64> {
        self.fault_slot
    }

    /// Stop updating the table; exploration keeps its schedule.
    pub fn freeze(&mut self) {
        self.learning = false;
    }

    fn take_fault(&mut self, want: fn(&Fault) -> Option<u64>) -> bool {
        self.fault.as_ref().and_then(want).is_some_and(|at| self.t >= at)
    }

    fn fire_fault(&mut self) {
        self.fault = None;
        self.fault_slot = Some(self.t);
    }
}

fn argmax_fault_at(f: &Fault) -> Option<u64> {
    match f {
        Fault::Argmax { at } => Some(*at),
        _ => None,
    }
}

fn update_fault_at(f: &Fault) -> Option<u64> {
    match f {
        Fault::Update { at } => Some(*at),
        _ => None,
    }
}

impl Policy for QTablePolicy {
    fn name(&self) -> &'static str {
        match self.reward {
            RewardKind::Imbalance => "qtable",
            RewardKind::LossOracle => "oracle",
        }
    }

    fn quote(&mut self, _view: &MarketParams) -> Quote<f64> {
        let n = self.maker.imbalance();
        let (mut action, explored) = select_action(&self.table, n, self.t, &self.params, &mut self.rng);
        if !explored && self.take_fault(argmax_fault_at) {
            let best = self.table.max_value(n);
            if let Some(worse) = Action::ALL.into_iter().find(|a| best - self.table.get(n, *a) > FAULT_MARGIN) {
                action = worse;
                self.fire_fault();
            }
        }
        self.pending = Some((n, action, explored));
        self.maker.apply_action(action)
    }

    fn observe(&mut self, o: &SlotOutcome) -> Result<f64, PolicyError> {
        let (n, action, explored) = self.pending.take().expect("observe follows quote");
        self.maker.push(o.event.direction());
        let n_next = self.maker.imbalance();
        let mu = self.params.mu;
        let reward = match self.reward {
            RewardKind::Imbalance => compute_reward(n_next, &o.quote, mu),
            RewardKind::LossOracle => -o.loss - mu * o.quote.spread().powi(2),
        };
        if self.learning {
            let best = self.table.max_value(n_next);
            let mut witness = best;
            if self.take_fault(update_fault_at) {
                if let Some(worse) = self.table.row(n_next).iter().copied().find(|v| best - *v > FAULT_MARGIN) {
                    witness = worse;
                    self.fire_fault();
                }
            }
            let value = td_target_value(&self.table, n, action, reward, witness, &self.params);
            self.table.set(n, action, value);
            if let Some(log) = self.claims.as_mut() {
                log.push(StepClaim { n, action, explored, reward, n_next, new_value: value });
            }
        }
        self.t += 1;
        Ok(reward)
    }
}

/// Settings of the value-network maker.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Gradient steps happen every this many slots.
    pub train_every: u64,
    /// Slots of pure data collection before the first gradient step.
    pub warmup: u64,
    /// Refresh period of a frozen bootstrap network; `None` bootstraps on the
    /// online network.
    pub target_period: Option<u64>,
    pub clip_norm: Option<f64>,
    /// Rewards are multiplied by this before entering the TD targets.
    pub reward_scale: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![32, 32],
            learning_rate: 1e-3,
            batch_size: 32,
            replay_capacity: 10_000,
            train_every: 4,
            warmup: 500,
            target_period: None,
            clip_norm: Some(10.0),
            reward_scale: 0.01,
        }
    }
}

/// Maker whose action values come from a dense network over the last `H + 1`
/// trade directions.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    net: ValueNet<f64>,
    target: Option<ValueNet<f64>>,
    replay: ReplayBuffer<f64>,
    maker: MakerState<f64>,
    window: VecDeque<i8>,
    params: RLParams,
    cfg: DqnConfig,
    rng: SimRng,
    t: u64,
    pending: Option<(Vec<f64>, Action)>,
    learning: bool,
}

impl DqnPolicy {
    pub fn new(initial_mid: i64, horizon: usize, params: RLParams, cfg: DqnConfig, mut rng: SimRng) -> Self {
        let mut sizes = vec![horizon + 1];
        sizes.extend(&cfg.hidden);
        sizes.push(Action::COUNT);
        let mut net = ValueNet::new(&sizes, &mut rng);
        net.zero_output_layer();
        let target = cfg.target_period.map(|_| net.clone());
        DqnPolicy {
            net,
            target,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            maker: MakerState::new(initial_mid as f64, 0),
            window: std::iter::repeat_n(0, horizon + 1).collect(),
            params,
            cfg,
            rng,
            t: 0,
            pending: None,
            learning: true,
        }
    }

    pub fn net(&self) -> &ValueNet<f64> {
        &self.net
    }

    /// Greedy evaluation without further training.
    pub fn freeze(&mut self) {
        self.learning = false;
        self.params.epsilon = 0.0;
        self.params.epsilon_floor = 0.0;
    }

    /// Resets quotes and trade history for a new market, keeping the network.
    pub fn restart(&mut self, initial_mid: i64) {
        self.maker = MakerState::new(initial_mid as f64, 0);
        self.window.iter_mut().for_each(|d| *d = 0);
        self.pending = None;
    }

    fn state(&self) -> Vec<f64> {
        let w: Vec<i8> = self.window.iter().copied().collect();
        encode_state(&w)
    }
}

impl Policy for DqnPolicy {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn quote(&mut self, _view: &MarketParams) -> Quote<f64> {
        let s = self.state();
        let (action, _) = act_epsilon_greedy(&self.net, &s, self.t, &self.params, &mut self.rng);
        self.pending = Some((s, action));
        self.maker.apply_action(action)
    }

    fn observe(&mut self, o: &SlotOutcome) -> Result<f64, PolicyError> {
        let (state, action) = self.pending.take().expect("observe follows quote");
        self.window.pop_front();
        self.window.push_back(o.event.direction());
        let n = imbalance(&self.window);
        let reward = compute_reward(n, &o.quote, self.params.mu);
        if self.learning {
            let next_state = self.state();
            self.replay.push(Transition {
                state,
                action: action.index(),
                reward: reward * self.cfg.reward_scale,
                next_state,
            });
            if self.t >= self.cfg.warmup && self.t.is_multiple_of(self.cfg.train_every) {
                let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng);
                let sgd = SgdConfig { learning_rate: self.cfg.learning_rate, clip_norm: self.cfg.clip_norm };
                train_step(&mut self.net, self.target.as_ref(), &batch, &self.params, &sgd)?;
            }
            if let (Some(period), Some(target)) = (self.cfg.target_period, self.target.as_mut()) {
                if self.t.is_multiple_of(period) {
                    *target = self.net.clone();
                }
            }
        }
        self.t += 1;
        Ok(reward)
    }
}
