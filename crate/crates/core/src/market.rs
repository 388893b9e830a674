//! Hidden price process, trader arrivals and trader decisions.
//!
//! The external price is an integer-tick random walk. Traders arrive on a
//! deterministic schedule and either follow the binary informed/uninformed
//! model or act on a noisy private observation of the external price.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::quote::Quote;

/// Seeded random stream used by every simulation component.
pub type SimRng = ChaCha8Rng;

/// Builds the stream for `seed`; `stream` separates the environment from
/// policy randomness so that changing a policy never perturbs the market.
pub fn sim_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

fn check_unit(name: &'static str, value: f64) -> Result<(), ParamError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { name, value, range: "[0, 1]" })
    }
}

/// Model parameters of the trading environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Probability that an arriving trader is informed.
    pub alpha: f64,
    /// Probability of a unit price jump per slot.
    pub sigma: f64,
    /// Traders per slot. Zero disables arrivals entirely.
    pub arrival_rate: f64,
}

impl MarketParams {
    pub fn new(alpha: f64, sigma: f64, arrival_rate: f64) -> Result<Self, ParamError> {
        check_unit("alpha", alpha)?;
        check_unit("sigma", sigma)?;
        check_unit("arrival_rate", arrival_rate)?;
        Ok(MarketParams { alpha, sigma, arrival_rate })
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TradeEvent {
    /// No trader arrived. Carries no information about the price.
    NoTrader,
    /// A trader arrived and declined to trade.
    Pass,
    Buy,
    Sell,
}

impl TradeEvent {
    /// Trade direction `d`: +1 buy, -1 sell, 0 otherwise.
    pub fn direction(self) -> i8 {
        match self {
            TradeEvent::Buy => 1,
            TradeEvent::Sell => -1,
            TradeEvent::Pass | TradeEvent::NoTrader => 0,
        }
    }

    pub fn is_trade(self) -> bool {
        matches!(self, TradeEvent::Buy | TradeEvent::Sell)
    }

    pub fn name(self) -> &'static str {
        match self {
            TradeEvent::NoTrader => "none",
            TradeEvent::Pass => "pass",
            TradeEvent::Buy => "buy",
            TradeEvent::Sell => "sell",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "none" => Some(TradeEvent::NoTrader),
            "pass" => Some(TradeEvent::Pass),
            "buy" => Some(TradeEvent::Buy),
            "sell" => Some(TradeEvent::Sell),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    /// Binary informed/uninformed traders.
    None,
    Gaussian,
    Laplace,
    LogNormal,
}

impl NoiseFamily {
    /// Scale used when the configuration does not give one.
    pub fn default_scale(self) -> f64 {
        match self {
            NoiseFamily::None => 0.0,
            NoiseFamily::Gaussian => 2.0,
            NoiseFamily::Laplace => 1.5,
            NoiseFamily::LogNormal => 0.5,
        }
    }
}

/// Observation noise of a trader's private price estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraderNoise {
    pub family: NoiseFamily,
    pub scale: f64,
}

impl TraderNoise {
    pub const NONE: TraderNoise = TraderNoise { family: NoiseFamily::None, scale: 0.0 };

    pub fn new(family: NoiseFamily, scale: f64) -> Result<Self, ParamError> {
        if family != NoiseFamily::None && !(scale > 0.0 && scale.is_finite()) {
            return Err(ParamError::OutOfRange {
                name: "noise_scale",
                value: scale,
                range: "(0, inf)",
            });
        }
        Ok(TraderNoise { family, scale })
    }

    pub fn with_default_scale(family: NoiseFamily) -> Self {
        TraderNoise { family, scale: family.default_scale() }
    }

    /// Draws one zero-mean noise sample. Log-normal noise is shifted by its
    /// mean so the trader's observation stays unbiased.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::None => 0.0,
            NoiseFamily::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.scale * z
            }
            NoiseFamily::Laplace => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                -self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseFamily::LogNormal => {
                let z: f64 = StandardNormal.sample(rng);
                (self.scale * z).exp() - (self.scale * self.scale / 2.0).exp()
            }
        }
    }
}

/// Hidden market state advanced once per slot.
#[derive(Debug, Clone)]
pub struct MarketState {
    pub p_ext: i64,
    pub t: u64,
    pub params: MarketParams,
    pub rng: SimRng,
}

impl MarketState {
    pub fn new(p_ext: i64, params: MarketParams, rng: SimRng) -> Self {
        MarketState { p_ext, t: 0, params, rng }
    }

    /// One step of the price walk: +1 and -1 each with probability sigma/2.
    pub fn step_price(&mut self) {
        let u: f64 = self.rng.random();
        let half = self.params.sigma / 2.0;
        if u < half {
            self.p_ext += 1;
        } else if u < self.params.sigma {
            self.p_ext -= 1;
        }
        self.t += 1;
    }
}

/// True when a trader arrives in slot `t`: every `round(1 / rate)` slots,
/// starting at slot 0.
pub fn arrival_at(t: u64, arrival_rate: f64) -> bool {
    if arrival_rate <= 0.0 {
        return false;
    }
    let period = (1.0 / arrival_rate).round().max(1.0) as u64;
    t.is_multiple_of(period)
}

/// Decision of a trader who has arrived and sees `quote`.
pub fn trader_decision<R: Rng + ?Sized>(
    p_ext: i64,
    quote: &Quote<f64>,
    params: &MarketParams,
    noise: &TraderNoise,
    rng: &mut R,
) -> TradeEvent {
    debug_assert!(quote.ask >= quote.bid);
    let observed = match noise.family {
        NoiseFamily::None => {
            let informed = rng.random::<f64>() < params.alpha;
            if !informed {
                return if rng.random::<bool>() { TradeEvent::Buy } else { TradeEvent::Sell };
            }
            p_ext as f64
        }
        _ => p_ext as f64 + noise.sample(rng),
    };
    threshold_decision(observed, quote)
}

/// Buy strictly above the ask, sell strictly below the bid, pass otherwise.
pub fn threshold_decision(observed: f64, quote: &Quote<f64>) -> TradeEvent {
    if observed > quote.ask {
        TradeEvent::Buy
    } else if observed < quote.bid {
        TradeEvent::Sell
    } else {
        TradeEvent::Pass
    }
}

/// Per-slot mutation of the market beyond the plain random walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScenarioDriver {
    Fixed,
    /// The price jumps by `size` at slot `at` and is frozen afterwards.
    SingleJump { size: i64, at: u64 },
    /// At slot 0 the price moves to `low` with probability `low_weight`,
    /// otherwise to `high`, and is frozen afterwards. The jump law is public.
    TwoPointJump { low: i64, high: i64, low_weight: f64 },
    /// alpha and sigma each take a +-step per slot, reflected into [0, 1].
    DriftingParams { step: f64 },
}

fn reflect_unit(x: f64) -> f64 {
    let x = if x > 1.0 { 2.0 - x } else if x < 0.0 { -x } else { x };
    x.clamp(0.0, 1.0)
}

impl ScenarioDriver {
    /// Applies this slot's scenario mutation. Call before quoting.
    pub fn advance(&self, state: &mut MarketState) {
        match *self {
            ScenarioDriver::Fixed => {}
            ScenarioDriver::SingleJump { size, at } => {
                if state.t == at {
                    state.p_ext += size;
                }
                if state.t >= at {
                    state.params.sigma = 0.0;
                }
            }
            ScenarioDriver::TwoPointJump { low, high, low_weight } => {
                if state.t == 0 {
                    state.p_ext = if state.rng.random::<f64>() < low_weight { low } else { high };
                }
                state.params.sigma = 0.0;
            }
            ScenarioDriver::DriftingParams { step } => {
                let da = if state.rng.random::<bool>() { step } else { -step };
                let ds = if state.rng.random::<bool>() { step } else { -step };
                state.params.alpha = reflect_unit(state.params.alpha + da);
                state.params.sigma = reflect_unit(state.params.sigma + ds);
            }
        }
    }
}
