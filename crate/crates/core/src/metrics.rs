//! Loss, spread and tracking metrics over recorded runs, plus the curve fits
//! used to check spread growth and decay laws.

use std::ops::Range;

use thiserror::Error;

use crate::market::TradeEvent;
use crate::quote::Quote;

/// Spreads below this are treated as numerically collapsed in decay fits.
pub const DECAY_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("run contains no trades")]
    NoTrades,
    #[error("series is degenerate for a log fit: {0}")]
    DegenerateSeries(String),
}

/// One slot of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub t: u64,
    pub p_ext: i64,
    pub ask: f64,
    pub bid: f64,
    pub event: TradeEvent,
    pub loss: f64,
    pub reward: f64,
}

impl RunRow {
    pub fn quote(&self) -> Quote<f64> {
        Quote { ask: self.ask, bid: self.bid }
    }

    pub fn spread(&self) -> f64 {
        self.ask - self.bid
    }

    pub fn mid_deviation(&self) -> f64 {
        ((self.ask + self.bid) / 2.0 - self.p_ext as f64).abs()
    }
}

/// Per-slot history of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn trades(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(|r| r.event.is_trade())
    }

    pub fn spreads(&self) -> Vec<f64> {
        self.rows.iter().map(RunRow::spread).collect()
    }

    /// Sub-record over a slot range.
    pub fn slice(&self, range: Range<usize>) -> RunRecord {
        RunRecord { rows: self.rows[range].to_vec() }
    }

    /// The last `fraction` of the slots.
    pub fn tail(&self, fraction: f64) -> RunRecord {
        let n = self.rows.len();
        let start = n - ((n as f64 * fraction).round() as usize).min(n);
        self.slice(start..n)
    }
}

/// Loss of a unit trade against the external price: `p_ext - ask` on a buy,
/// `bid - p_ext` on a sell, zero otherwise.
pub fn monetary_loss(p_ext: i64, quote: &Quote<f64>, event: TradeEvent) -> f64 {
    match event {
        TradeEvent::Buy => p_ext as f64 - quote.ask,
        TradeEvent::Sell => quote.bid - p_ext as f64,
        TradeEvent::Pass | TradeEvent::NoTrader => 0.0,
    }
}

/// Mean over trades of `100 * loss / p_ext`.
pub fn percent_loss_per_trade(record: &RunRecord) -> Result<f64, MetricsError> {
    let (sum, count) = record
        .trades()
        .fold((0.0, 0usize), |(s, c), r| (s + 100.0 * r.loss / r.p_ext as f64, c + 1));
    if count == 0 {
        return Err(MetricsError::NoTrades);
    }
    Ok(sum / count as f64)
}

pub fn mean_spread(record: &RunRecord) -> f64 {
    mean(record.rows.iter().map(RunRow::spread))
}

pub fn mean_mid_deviation(record: &RunRecord) -> f64 {
    mean(record.rows.iter().map(RunRow::mid_deviation))
}

/// Squared distance of both quotes from the external price.
pub fn risk_rho(p_ext: i64, quote: &Quote<f64>) -> f64 {
    let p = p_ext as f64;
    (p - quote.ask).powi(2) + (p - quote.bid).powi(2)
}

pub fn cumulative_risk(record: &RunRecord) -> f64 {
    record.rows.iter().map(|r| risk_rho(r.p_ext, &r.quote())).sum()
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt())
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Slope of `ln series[t]` against `ln t` over `window`, where the index is
/// the slot number. Slot 0 is never part of a log-log fit.
pub fn fit_growth_exponent(series: &[f64], window: Range<usize>) -> Result<f64, MetricsError> {
    let window = window.start.max(1)..window.end.min(series.len());
    if window.len() < 2 {
        return Err(MetricsError::DegenerateSeries("fewer than two points in window".into()));
    }
    let pts = &series[window.clone()];
    if let Some(v) = pts.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(MetricsError::DegenerateSeries(format!("non-positive value {v}")));
    }
    let x: Vec<f64> = window.map(|t| (t as f64).ln()).collect();
    let y: Vec<f64> = pts.iter().map(|v| v.ln()).collect();
    Ok(ols_slope(&x, &y))
}

/// Slope of `ln series[t]` against `t`, using the prefix before the series
/// first drops under [`DECAY_FLOOR`].
pub fn fit_decay_rate(series: &[f64]) -> Result<f64, MetricsError> {
    let end = series.iter().position(|v| !(*v >= DECAY_FLOOR)).unwrap_or(series.len());
    if end < 2 {
        return Err(MetricsError::DegenerateSeries("fewer than two points above the floor".into()));
    }
    let x: Vec<f64> = (0..end).map(|t| t as f64).collect();
    let y: Vec<f64> = series[..end].iter().map(|v| v.ln()).collect();
    Ok(ols_slope(&x, &y))
}

/// Slot-wise arithmetic mean across runs of equal length.
pub fn seed_mean_series(runs: &[Vec<f64>]) -> Vec<f64> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|t| runs.iter().map(|r| r[t]).sum::<f64>() / runs.len() as f64)
        .collect()
}

/// Slot-wise geometric mean across runs, cut where any run reaches the
/// numerical floor.
pub fn seed_geometric_mean_series(runs: &[Vec<f64>]) -> Vec<f64> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .take_while(|&t| runs.iter().all(|r| r[t] >= DECAY_FLOOR))
        .map(|t| (runs.iter().map(|r| r[t].ln()).sum::<f64>() / runs.len() as f64).exp())
        .collect()
}

/// Summary of one (alpha, sigma, arrival rate, policy) cell across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub alpha: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub policy: String,
    pub pct_loss_mean: f64,
    pub pct_loss_std: f64,
    pub spread_mean: f64,
    pub middev_mean: f64,
    pub seeds: usize,
}

pub const STATS_HEADER: &str =
    "alpha,sigma,lambda,policy,pct_loss_mean,pct_loss_std,spread_mean,middev_mean,seeds";

impl AggregateStats {
    /// Aggregates completed runs. Runs without trades are left out of the
    /// loss statistics only.
    pub fn from_runs(alpha: f64, sigma: f64, lambda: f64, policy: &str, runs: &[RunRecord]) -> Self {
        let losses: Vec<f64> = runs.iter().filter_map(|r| percent_loss_per_trade(r).ok()).collect();
        let (pct_loss_mean, pct_loss_std) = mean_std(&losses);
        let spreads: Vec<f64> = runs.iter().map(mean_spread).collect();
        let devs: Vec<f64> = runs.iter().map(mean_mid_deviation).collect();
        AggregateStats {
            alpha,
            sigma,
            lambda,
            policy: policy.to_string(),
            pct_loss_mean,
            pct_loss_std,
            spread_mean: mean_std(&spreads).0,
            middev_mean: mean_std(&devs).0,
            seeds: runs.len(),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.alpha,
            self.sigma,
            self.lambda,
            self.policy,
            self.pct_loss_mean,
            self.pct_loss_std,
            self.spread_mean,
            self.middev_mean,
            self.seeds
        )
    }
}
