//! Exact Bayesian market maker over an integer price grid.
//!
//! A [`Belief`] is a probability mass function over consecutive integer
//! prices. The maker conditions it on every observed trade, spreads it with
//! the random-walk kernel every slot, and quotes the zero-profit ask and bid:
//! the expected price given that the next trade is a buy (resp. sell) at that
//! very price.

use std::fmt::Write as _;

use thiserror::Error;

use crate::market::TradeEvent;
use crate::quote::Quote;
use crate::scalar::Scalar;

/// Tail entries lighter than this are dropped after each diffusion step.
pub const TRIM_MASS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("observation has zero likelihood under the current belief")]
    ZeroLikelihood,
    #[error("no self-consistent {side} price")]
    NoFixedPoint { side: &'static str },
    #[error("invalid belief mass: {0}")]
    InvalidMass(String),
}

/// Probability mass over prices `origin, origin + 1, ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief<T: Scalar = f64> {
    origin: i64,
    mass: Vec<T>,
}

impl<T: Scalar> Belief<T> {
    /// Point mass at `price`.
    pub fn degenerate(price: i64) -> Self {
        Belief { origin: price, mass: vec![T::one()] }
    }

    /// `low` with probability `low_weight`, otherwise `high`.
    pub fn two_point(low: i64, high: i64, low_weight: T) -> Result<Self, BeliefError> {
        if low >= high {
            return Err(BeliefError::InvalidMass(format!("two-point prior needs {low} < {high}")));
        }
        let mut mass = vec![T::zero(); (high - low + 1) as usize];
        mass[0] = low_weight;
        *mass.last_mut().unwrap() = T::one() - low_weight;
        Self::from_masses(low, mass)
    }

    /// Uniform over `low..=high`.
    pub fn uniform(low: i64, high: i64) -> Result<Self, BeliefError> {
        if low > high {
            return Err(BeliefError::InvalidMass(format!("empty range {low}..={high}")));
        }
        Self::from_masses(low, vec![T::one(); (high - low + 1) as usize])
    }

    /// Normalizes non-negative weights into a belief.
    pub fn from_masses(origin: i64, mass: Vec<T>) -> Result<Self, BeliefError> {
        if mass.iter().any(|m| !m.is_finite() || *m < T::zero()) {
            return Err(BeliefError::InvalidMass("entries must be finite and non-negative".into()));
        }
        Belief { origin, mass }.normalized().ok_or(BeliefError::ZeroLikelihood)
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn masses(&self) -> &[T] {
        &self.mass
    }

    /// Lowest and highest price of the stored support.
    pub fn support(&self) -> (i64, i64) {
        (self.origin, self.origin + self.mass.len() as i64 - 1)
    }

    /// Mass at `price`, zero outside the support.
    pub fn mass_at(&self, price: i64) -> T {
        let i = price - self.origin;
        if i < 0 {
            return T::zero();
        }
        self.mass.get(i as usize).copied().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        self.mass.iter().enumerate().map(move |(i, &m)| (self.origin + i as i64, m))
    }

    pub fn total_mass(&self) -> T {
        self.mass.iter().copied().sum()
    }

    /// Exact mean and variance of the mass function.
    pub fn stats(&self) -> (T, T) {
        // offsets relative to the origin keep the sums well conditioned
        let mean_off: T = self
            .mass
            .iter()
            .enumerate()
            .map(|(i, &m)| T::of(i as f64) * m)
            .sum();
        let var: T = self
            .mass
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let d = T::of(i as f64) - mean_off;
                d * d * m
            })
            .sum();
        (T::of_int(self.origin) + mean_off, var)
    }

    pub fn mean(&self) -> T {
        self.stats().0
    }

    /// Drops zero entries at both ends and rescales to unit mass.
    fn normalized(mut self) -> Option<Self> {
        self.trim_edges(T::zero(), true);
        let total = self.total_mass();
        if !(total > T::zero()) || !total.is_finite() {
            return None;
        }
        for m in &mut self.mass {
            *m = *m / total;
        }
        Some(self)
    }

    /// Removes edge entries below `floor` (or equal to it when `inclusive`).
    fn trim_edges(&mut self, floor: T, inclusive: bool) {
        let drop = |m: &T| if inclusive { *m <= floor } else { *m < floor };
        let lead = self.mass.iter().take_while(|m| drop(m)).count();
        if lead == self.mass.len() {
            return;
        }
        let tail = self.mass.iter().rev().take_while(|m| drop(m)).count();
        self.mass.truncate(self.mass.len() - tail);
        self.mass.drain(..lead);
        self.origin += lead as i64;
    }

    /// Posterior after observing `event` at `quote`.
    ///
    /// Buys weight each price by `alpha * [p > ask] + (1 - alpha) / 2`, sells
    /// by `alpha * [p < bid] + (1 - alpha) / 2`. A pass keeps only prices
    /// inside `[bid, ask]`; its `alpha` factor cancels on normalization but
    /// `alpha = 0` makes a pass impossible and is reported as zero likelihood.
    /// `NoTrader` carries no information and returns the belief unchanged.
    pub fn posterior_trade(
        &self,
        event: TradeEvent,
        quote: &Quote<T>,
        alpha: T,
    ) -> Result<Self, BeliefError> {
        let noise = (T::one() - alpha) / T::of(2.0);
        let likelihood: Box<dyn Fn(T) -> T> = match event {
            TradeEvent::NoTrader => return Ok(self.clone()),
            TradeEvent::Buy => {
                Box::new(move |p| if p > quote.ask { alpha + noise } else { noise })
            }
            TradeEvent::Sell => {
                Box::new(move |p| if p < quote.bid { alpha + noise } else { noise })
            }
            TradeEvent::Pass => {
                if alpha <= T::zero() {
                    return Err(BeliefError::ZeroLikelihood);
                }
                Box::new(move |p| {
                    if p >= quote.bid && p <= quote.ask {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
            }
        };
        let mass = self
            .iter()
            .map(|(p, m)| likelihood(T::of_int(p)) * m)
            .collect();
        Belief { origin: self.origin, mass }
            .normalized()
            .ok_or(BeliefError::ZeroLikelihood)
    }

    /// One slot of the unit-jump kernel: stay with `1 - sigma`, move one tick
    /// either way with `sigma / 2`. The support grows by one tick per side,
    /// then tails under [`TRIM_MASS`] are cut.
    pub fn diffuse(&self, sigma: T) -> Self {
        let n = self.mass.len();
        let half = sigma / T::of(2.0);
        let stay = T::one() - sigma;
        let mut out = vec![T::zero(); n + 2];
        for (i, &m) in self.mass.iter().enumerate() {
            out[i] = out[i] + half * m;
            out[i + 1] = out[i + 1] + stay * m;
            out[i + 2] = out[i + 2] + half * m;
        }
        let mut b = Belief { origin: self.origin - 1, mass: out };
        b.trim_edges(T::of(TRIM_MASS), false);
        b.normalized().expect("diffusion conserves mass")
    }

    /// Zero-profit quotes under informedness `alpha`, with the fallback rule
    /// when no cut is exactly self-consistent.
    pub fn solve_quotes(&self, alpha: T) -> Quote<T> {
        let ask = self.solve_side(alpha, Side::Ask).price;
        let bid = self.solve_side(alpha, Side::Bid).price;
        Quote { ask, bid }
    }

    /// Like [`solve_quotes`](Self::solve_quotes) but fails instead of falling back.
    pub fn solve_quotes_strict(&self, alpha: T) -> Result<Quote<T>, BeliefError> {
        let ask = self.solve_side(alpha, Side::Ask);
        if !ask.exact {
            return Err(BeliefError::NoFixedPoint { side: "ask" });
        }
        let bid = self.solve_side(alpha, Side::Bid);
        if !bid.exact {
            return Err(BeliefError::NoFixedPoint { side: "bid" });
        }
        Ok(Quote { ask: ask.price, bid: bid.price })
    }

    /// Scans integer cuts. For the ask, cut index `k` stands for every ask in
    /// `[origin + k, origin + k + 1)`, where the buy likelihood is constant,
    /// and is self-consistent when the conditional mean falls in that range.
    /// The bid mirrors this on `(origin + k - 1, origin + k]`.
    fn solve_side(&self, alpha: T, side: Side) -> CutSolution<T> {
        let n = self.mass.len();
        let noise = (T::one() - alpha) / T::of(2.0);
        let total_w: T = self.total_mass();
        let total_m: T = self
            .mass
            .iter()
            .enumerate()
            .map(|(i, &m)| T::of(i as f64) * m)
            .sum();
        let (mean_off, _) = {
            let (m, v) = self.stats();
            (m - T::of_int(self.origin), v)
        };

        // informed mass/moment on the strict side of each cut
        let mut inf_w = vec![T::zero(); n];
        let mut inf_m = vec![T::zero(); n];
        match side {
            Side::Ask => {
                let (mut w, mut mo) = (T::zero(), T::zero());
                for k in (0..n).rev() {
                    inf_w[k] = w;
                    inf_m[k] = mo;
                    w = w + self.mass[k];
                    mo = mo + T::of(k as f64) * self.mass[k];
                }
            }
            Side::Bid => {
                let (mut w, mut mo) = (T::zero(), T::zero());
                for k in 0..n {
                    inf_w[k] = w;
                    inf_m[k] = mo;
                    w = w + self.mass[k];
                    mo = mo + T::of(k as f64) * self.mass[k];
                }
            }
        }

        let mut best_exact: Option<(T, usize, T)> = None; // (|E - mean|, k, E)
        let mut best_any: Option<(T, usize, T)> = None; // (distance, k, E)
        for k in 0..n {
            let den = alpha * inf_w[k] + noise * total_w;
            if !(den > T::zero()) {
                continue;
            }
            let e = (alpha * inf_m[k] + noise * total_m) / den;
            let kf = T::of(k as f64);
            let (lo, hi) = match side {
                Side::Ask => (kf, kf + T::one()),
                Side::Bid => (kf - T::one(), kf),
            };
            let inside = match side {
                Side::Ask => e >= lo && e < hi,
                Side::Bid => e > lo && e <= hi,
            };
            if inside {
                let key = (e - mean_off).abs();
                if best_exact.is_none_or(|(bk, _, _)| key < bk) {
                    best_exact = Some((key, k, e));
                }
            }
            let dist = (lo - e).max(e - hi).max(T::zero());
            if best_any.is_none_or(|(bd, _, _)| dist < bd) {
                best_any = Some((dist, k, e));
            }
        }

        let origin = T::of_int(self.origin);
        if let Some((_, _, e)) = best_exact {
            return CutSolution { price: origin + e, exact: true };
        }
        match best_any {
            Some((_, _, e)) => CutSolution { price: origin + e, exact: false },
            // every cut has zero buy (sell) probability: only possible when
            // alpha = 1 and the informed side is empty, so quote the edge
            None => {
                let (lo, hi) = self.support();
                let edge = match side {
                    Side::Ask => hi,
                    Side::Bid => lo,
                };
                CutSolution { price: T::of_int(edge), exact: false }
            }
        }
    }

    /// `price,mass` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("price,mass\n");
        for (p, m) in self.iter() {
            let _ = writeln!(s, "{p},{m}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
enum Side {
    Ask,
    Bid,
}

struct CutSolution<T> {
    price: T,
    exact: bool,
}

/// Closed-form quotes for a two-point prior (`p_l` with probability
/// `low_weight`, else `p_u`) after `buys` buys and `sells` sells, assuming
/// every quote so far sat strictly between the two points.
pub fn two_point_quote_oracle(
    p_l: i64,
    p_u: i64,
    low_weight: f64,
    alpha: f64,
    buys: u32,
    sells: u32,
) -> Quote<f64> {
    assert!(p_l < p_u, "two-point oracle needs p_l < p_u");
    let q = (1.0 - alpha) / 2.0;
    let r = (1.0 + alpha) / 2.0;
    let (b, s) = (buys as f64, sells as f64);
    let lw = low_weight.ln();
    let uw = (1.0 - low_weight).ln();
    // log posterior weights of p_l and p_u, conditioned on one more trade
    let ask_l = lw + (b + 1.0) * q.ln() + s * (1.0 - q).ln();
    let ask_u = uw + (b + 1.0) * r.ln() + s * (1.0 - r).ln();
    let bid_l = lw + b * q.ln() + (s + 1.0) * (1.0 - q).ln();
    let bid_u = uw + b * r.ln() + (s + 1.0) * (1.0 - r).ln();
    let mix = |wl: f64, wu: f64| {
        let share_u = 1.0 / (1.0 + (wl - wu).exp());
        p_l as f64 + (p_u - p_l) as f64 * share_u
    };
    Quote { ask: mix(ask_l, ask_u), bid: mix(bid_l, bid_u) }
}

/// KL divergence between the buy/sell laws at the two candidate prices,
/// `[(1 - a)/2, (1 + a)/2]` against its reverse: the per-trade rate at which
/// the log posterior odds of the wrong price fall.
pub fn trade_kl_rate(alpha: f64) -> f64 {
    let q = [(1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0];
    let r = [q[1], q[0]];
    q.iter()
        .zip(r.iter())
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, ri)| qi * (qi / ri).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uni3() -> Belief<f64> {
        Belief::uniform(99, 101).unwrap()
    }

    /// Direct enumeration of E[p | buy at ask] for a real-valued ask.
    fn brute_conditional_ask(b: &Belief<f64>, alpha: f64, ask: f64) -> f64 {
        let noise = (1.0 - alpha) / 2.0;
        let (mut num, mut den) = (0.0, 0.0);
        for (p, m) in b.iter() {
            let w = if p as f64 > ask { alpha + noise } else { noise } * m;
            num += p as f64 * w;
            den += w;
        }
        num / den
    }

    #[test]
    fn buy_posterior_by_enumeration() {
        let q = Quote::new(100.0, 99.0);
        let post = uni3().posterior_trade(TradeEvent::Buy, &q, 0.9).unwrap();
        // weights 0.05, 0.05, 0.95 over a total of 1.05
        let expect = [1.0 / 21.0, 1.0 / 21.0, 19.0 / 21.0];
        for (m, e) in post.masses().iter().zip(expect) {
            assert_abs_diff_eq!(*m, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn uninformative_trades_leave_belief() {
        let q = Quote::new(100.5, 99.5);
        for ev in [TradeEvent::Buy, TradeEvent::Sell] {
            let post = uni3().posterior_trade(ev, &q, 0.0).unwrap();
            for (a, b) in post.masses().iter().zip(uni3().masses()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
            }
        }
        assert_eq!(uni3().posterior_trade(TradeEvent::NoTrader, &q, 0.5).unwrap(), uni3());
    }

    #[test]
    fn pass_inside_spread() {
        let b = Belief::<f64>::degenerate(100);
        let post = b.posterior_trade(TradeEvent::Pass, &Quote::new(101.0, 99.0), 0.7).unwrap();
        assert_eq!(post, b);

        let post = uni3().posterior_trade(TradeEvent::Pass, &Quote::new(100.0, 100.0), 0.7).unwrap();
        assert_eq!(post, Belief::degenerate(100));
    }

    #[test]
    fn pass_errors() {
        let b = Belief::<f64>::degenerate(100);
        assert_eq!(
            b.posterior_trade(TradeEvent::Pass, &Quote::new(103.0, 101.0), 0.9),
            Err(BeliefError::ZeroLikelihood)
        );
        assert_eq!(
            b.posterior_trade(TradeEvent::Pass, &Quote::new(101.0, 99.0), 0.0),
            Err(BeliefError::ZeroLikelihood)
        );
    }

    #[test]
    fn diffuse_kernel() {
        let b = Belief::<f64>::degenerate(100).diffuse(0.5);
        assert_eq!(b.support(), (99, 101));
        assert_eq!(b.masses(), &[0.25, 0.5, 0.25]);
        assert_eq!(uni3().diffuse(0.0), uni3());
    }

    #[test]
    fn diffuse_variance_example() {
        let b = Belief::from_masses(99, vec![0.25, 0.5, 0.25]).unwrap();
        let (m, v) = b.diffuse(0.3).stats();
        assert_abs_diff_eq!(m, 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn diffuse_trims_light_tails() {
        let mut b = Belief::<f64>::degenerate(0);
        for _ in 0..2000 {
            b = b.diffuse(0.5);
        }
        let (lo, hi) = b.support();
        assert!(hi - lo < 4001, "support {lo}..{hi} was never trimmed");
        assert!(b.masses()[0] >= TRIM_MASS * 0.5);
        assert_abs_diff_eq!(b.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stats_examples() {
        assert_eq!(Belief::<f64>::degenerate(100).stats(), (100.0, 0.0));
        let (m, v) = Belief::from_masses(99, vec![0.25, 0.5, 0.25]).unwrap().stats();
        assert_abs_diff_eq!(m, 100.0);
        assert_abs_diff_eq!(v, 0.5);
        let (m, v) = Belief::<f64>::uniform(0, 2).unwrap().stats();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn quotes_degenerate() {
        for alpha in [0.0, 0.3, 0.9, 1.0] {
            let q = Belief::<f64>::degenerate(57).solve_quotes_strict(alpha).unwrap_or_else(|_| {
                Belief::<f64>::degenerate(57).solve_quotes(alpha)
            });
            assert_eq!((q.ask, q.bid), (57.0, 57.0), "alpha {alpha}");
        }
    }

    #[test]
    fn quotes_uniform_three_point() {
        let q = uni3().solve_quotes_strict(0.9).unwrap();
        assert_abs_diff_eq!(q.ask, 2118.0 / 21.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.bid, 200.0 - 2118.0 / 21.0, epsilon = 1e-12);
        // the ask is a genuine fixed point of the enumerated conditional mean
        assert_abs_diff_eq!(brute_conditional_ask(&uni3(), 0.9, q.ask), q.ask, epsilon = 1e-12);
    }

    #[test]
    fn quotes_without_information() {
        let b = Belief::from_masses(10, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = b.solve_quotes(0.0);
        assert_abs_diff_eq!(q.ask, b.mean(), epsilon = 1e-12);
        assert_abs_diff_eq!(q.bid, b.mean(), epsilon = 1e-12);
    }

    #[test]
    fn oracle_examples() {
        let q = two_point_quote_oracle(90, 110, 0.5, 0.9, 0, 0);
        assert_abs_diff_eq!(q.ask, 109.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.bid, 91.0, epsilon = 1e-12);
        for (b, s) in [(0, 0), (3, 1), (7, 9)] {
            let q = two_point_quote_oracle(90, 110, 0.3, 0.0, b, s);
            assert_abs_diff_eq!(q.ask, 0.3 * 90.0 + 0.7 * 110.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn oracle_converges_at_kl_rate() {
        // the log odds of p_l inside the ask fall by ln(r/q) per buy
        let alpha = 0.6;
        let log_odds = |b| {
            let gap = 110.0 - two_point_quote_oracle(90, 110, 0.5, alpha, b, 0).ask;
            (gap / (20.0 - gap)).ln()
        };
        let slope = (log_odds(12) - log_odds(2)) / 10.0;
        let r_over_q: f64 = (1.0 + alpha) / (1.0 - alpha);
        assert_abs_diff_eq!(slope, -r_over_q.ln(), epsilon = 1e-6);
        // typical histories mix buys and sells at rates r and q: the drift is
        // the KL divergence between the two trade laws
        let q = (1.0 - alpha) / 2.0;
        let r = (1.0 + alpha) / 2.0;
        let drift = r * r_over_q.ln() - q * r_over_q.ln();
        assert_abs_diff_eq!(drift, trade_kl_rate(alpha), epsilon = 1e-12);
    }

    #[test]
    fn kl_rate_value() {
        assert_abs_diff_eq!(trade_kl_rate(0.9), 0.9 * 19f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(trade_kl_rate(0.9), 2.650, epsilon = 1e-3);
        assert_eq!(trade_kl_rate(0.0), 0.0);
    }

    #[test]
    fn buy_moves_mean_up() {
        let b = Belief::from_masses(95, vec![0.1, 0.3, 0.2, 0.15, 0.25]).unwrap();
        let q = b.solve_quotes(0.5);
        assert!(q.ask >= b.mean() && b.mean() >= q.bid);
        let up = b.posterior_trade(TradeEvent::Buy, &q, 0.5).unwrap();
        let down = b.posterior_trade(TradeEvent::Sell, &q, 0.5).unwrap();
        assert!(up.mean() >= b.mean());
        assert!(down.mean() <= b.mean());
    }

    #[test]
    fn csv_snapshot() {
        let s = Belief::from_masses(99, vec![0.25, 0.5, 0.25]).unwrap().to_csv();
        assert_eq!(s, "price,mass\n99,0.25\n100,0.5\n101,0.25\n");
    }

    #[test]
    fn single_precision_belief() {
        let b = Belief::<f32>::degenerate(100).diffuse(0.5);
        let (m, v) = b.stats();
        assert!((m - 100.0).abs() < 1e-5 && (v - 0.5).abs() < 1e-5);
        let q = Belief::<f32>::uniform(99, 101).unwrap().solve_quotes(0.9);
        assert!((q.ask - 2118.0 / 21.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(Belief::<f64>::from_masses(0, vec![0.5, -0.1]).is_err());
        assert!(Belief::<f64>::from_masses(0, vec![0.0, 0.0]).is_err());
        assert!(Belief::<f64>::two_point(5, 5, 0.5).is_err());
    }
}
