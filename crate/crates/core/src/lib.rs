//! Market-making agents for a sequential-trade market with a hidden,
//! randomly walking price: an exact Bayesian maker, a tabular Q-learning
//! maker, a value-network variant, and the harness that simulates and
//! scores them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the simulation
//! harness itself runs in `f64`.

pub mod belief;
pub mod challenge;
pub mod dqn;
pub mod experiment;
pub mod market;
pub mod metrics;
pub mod policy;
pub mod qtable;
pub mod quote;
pub mod scalar;

pub use belief::{two_point_quote_oracle, trade_kl_rate, Belief, BeliefError};
pub use market::{MarketParams, MarketState, NoiseFamily, ScenarioDriver, TradeEvent, TraderNoise};
pub use metrics::{AggregateStats, RunRecord, RunRow};
pub use policy::{BayesPolicy, DqnConfig, DqnPolicy, Policy, QTablePolicy, RewardKind};
pub use qtable::{Action, MakerState, QTable, RLParams};
pub use quote::Quote;
pub use scalar::Scalar;

pub type Belief64 = Belief<f64>;
pub type Belief32 = Belief<f32>;
pub type Quote64 = Quote<f64>;
pub type Quote32 = Quote<f32>;
pub type QTable64 = QTable<f64>;
pub type QTable32 = QTable<f32>;
pub type ValueNet64 = dqn::ValueNet<f64>;
pub type ValueNet32 = dqn::ValueNet<f32>;
