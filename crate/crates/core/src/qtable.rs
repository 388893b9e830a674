//! Tabular Q-learning market maker.
//!
//! The agent observes only the trade imbalance over the last `H` slots and
//! moves its mid price and half-spread by at most one tick per slot.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::quote::Quote;
use crate::scalar::Scalar;

/// Largest per-slot change of the mid price or of the half-spread, in ticks.
pub const DELTA_MAX: i8 = 1;

/// A joint move `(mid change, half-spread change)`, each in `{-1, 0, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub mid: i8,
    pub spread: i8,
}

impl Action {
    pub const COUNT: usize = 9;

    /// Lexicographic order on `(mid, spread)`: index 0 is `(-1, -1)`, 8 is `(+1, +1)`.
    pub const ALL: [Action; 9] = {
        let mut all = [Action { mid: 0, spread: 0 }; 9];
        let mut i = 0;
        while i < 9 {
            all[i] = Action { mid: (i / 3) as i8 - 1, spread: (i % 3) as i8 - 1 };
            i += 1;
        }
        all
    };

    pub fn new(mid: i8, spread: i8) -> Option<Self> {
        let ok = |v: i8| (-DELTA_MAX..=DELTA_MAX).contains(&v);
        (ok(mid) && ok(spread)).then_some(Action { mid, spread })
    }

    pub fn index(self) -> usize {
        ((self.mid + 1) * 3 + (self.spread + 1)) as usize
    }

    pub fn from_index(i: usize) -> Self {
        Action::ALL[i]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum QTableError {
    #[error("malformed Q-table snapshot: {0}")]
    Malformed(String),
}

/// Action values indexed by imbalance `n` in `-H..=H` and [`Action`].
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T: Scalar = f64> {
    horizon: usize,
    values: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn zeros(horizon: usize) -> Self {
        QTable { horizon, values: vec![T::zero(); (2 * horizon + 1) * Action::COUNT] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn offset(&self, n: i32) -> usize {
        let h = self.horizon as i32;
        assert!((-h..=h).contains(&n), "imbalance {n} outside -{h}..={h}");
        (n + h) as usize * Action::COUNT
    }

    pub fn row(&self, n: i32) -> &[T] {
        let o = self.offset(n);
        &self.values[o..o + Action::COUNT]
    }

    pub fn get(&self, n: i32, a: Action) -> T {
        self.row(n)[a.index()]
    }

    pub fn set(&mut self, n: i32, a: Action, v: T) {
        let o = self.offset(n);
        self.values[o + a.index()] = v;
    }

    pub fn max_value(&self, n: i32) -> T {
        self.row(n).iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Every action attaining the row maximum.
    pub fn argmax_set(&self, n: i32) -> Vec<Action> {
        let best = self.max_value(n);
        Action::ALL.iter().copied().filter(|a| self.get(n, *a) == best).collect()
    }

    /// Greedy action; ties are broken uniformly at random.
    pub fn argmax<R: Rng + ?Sized>(&self, n: i32, rng: &mut R) -> Action {
        let ties = self.argmax_set(n);
        ties[rng.random_range(0..ties.len())]
    }

    pub fn rows(&self) -> impl Iterator<Item = i32> {
        let h = self.horizon as i32;
        -h..=h
    }

    /// Snapshot with header `n,a1,a2,q`. Values use shortest round-trip
    /// formatting, so parsing the snapshot restores every bit.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,a1,a2,q\n");
        for n in self.rows() {
            for a in Action::ALL {
                let _ = writeln!(s, "{n},{},{},{}", a.mid, a.spread, self.get(n, a));
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, QTableError> {
        let bad = |m: String| QTableError::Malformed(m);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["n", "a1", "a2", "q"] {
            return Err(bad(format!("header must be n,a1,a2,q, got {:?}", headers)));
        }
        let mut entries = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("row {line}: missing field")));
            let n: i32 = field(0)?.parse().map_err(|_| bad(format!("row {line}: bad n")))?;
            let a1: i8 = field(1)?.parse().map_err(|_| bad(format!("row {line}: bad a1")))?;
            let a2: i8 = field(2)?.parse().map_err(|_| bad(format!("row {line}: bad a2")))?;
            let q: T = field(3)?.parse().map_err(|_| bad(format!("row {line}: bad q")))?;
            let a = Action::new(a1, a2).ok_or_else(|| bad(format!("row {line}: bad action")))?;
            entries.push((n, a, q));
        }
        let h = entries.iter().map(|(n, _, _)| n.unsigned_abs()).max().unwrap_or(0) as usize;
        if entries.len() != (2 * h + 1) * Action::COUNT {
            return Err(bad(format!("expected {} rows for H={h}", (2 * h + 1) * Action::COUNT)));
        }
        let mut table = QTable::zeros(h);
        let mut seen = vec![false; table.values.len()];
        for (n, a, q) in entries {
            let i = table.offset(n) + a.index();
            if std::mem::replace(&mut seen[i], true) {
                return Err(bad(format!("duplicate entry n={n} a=({},{})", a.mid, a.spread)));
            }
            table.values[i] = q;
        }
        Ok(table)
    }
}

/// Learning and exploration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RLParams {
    /// Exploration decays as `epsilon^t`.
    pub epsilon: f64,
    /// Exploration never falls below this probability.
    pub epsilon_floor: f64,
    pub learning_rate: f64,
    /// Weight of the squared-spread penalty.
    pub mu: f64,
    pub discount: f64,
}

impl Default for RLParams {
    fn default() -> Self {
        RLParams {
            epsilon: 0.999,
            epsilon_floor: 0.01,
            learning_rate: 0.1,
            mu: 0.1,
            discount: 0.99,
        }
    }
}

impl RLParams {
    /// Probability of a uniformly random action at slot `t`.
    pub fn exploration(&self, t: u64) -> f64 {
        let decayed = if self.epsilon <= 0.0 {
            0.0
        } else {
            self.epsilon.powf(t as f64)
        };
        decayed.max(self.epsilon_floor)
    }
}

/// Sum of trade directions; arrival gaps count as zero.
pub fn imbalance<'a>(window: impl IntoIterator<Item = &'a i8>) -> i32 {
    window.into_iter().map(|&d| d as i32).sum()
}

/// `epsilon^t`-greedy choice in row `n`.
pub fn select_action<T: Scalar, R: Rng + ?Sized>(
    q: &QTable<T>,
    n: i32,
    t: u64,
    params: &RLParams,
    rng: &mut R,
) -> (Action, bool) {
    let explore = rng.random::<f64>() < params.exploration(t);
    if explore {
        (Action::from_index(rng.random_range(0..Action::COUNT)), true)
    } else {
        (q.argmax(n, rng), false)
    }
}

/// Reward `-n^2 - mu * spread^2`.
pub fn compute_reward<T: Scalar>(n: i32, quote: &Quote<T>, mu: T) -> T {
    let n = T::of(n as f64);
    let s = quote.spread();
    -(n * n) - mu * s * s
}

/// One temporal-difference step on entry `(n, a)`, bootstrapping on row
/// `n_next`. Returns the new value.
pub fn td_update<T: Scalar>(
    q: &mut QTable<T>,
    n: i32,
    a: Action,
    reward: T,
    n_next: i32,
    params: &RLParams,
) -> T {
    let v = td_target_value(q, n, a, reward, q.max_value(n_next), params);
    q.set(n, a, v);
    v
}

/// Updated value of `(n, a)` when `witness` stands in for the bootstrap maximum.
pub fn td_target_value<T: Scalar>(
    q: &QTable<T>,
    n: i32,
    a: Action,
    reward: T,
    witness: T,
    params: &RLParams,
) -> T {
    let old = q.get(n, a);
    let lr = T::of(params.learning_rate);
    let gamma = T::of(params.discount);
    old + lr * (reward + gamma * witness - old)
}

/// The maker's own quote state.
#[derive(Debug, Clone, PartialEq)]
pub struct MakerState<T: Scalar = f64> {
    pub mid: T,
    pub half_spread: T,
    window: VecDeque<i8>,
    horizon: usize,
}

impl<T: Scalar> MakerState<T> {
    pub fn new(mid: T, horizon: usize) -> Self {
        MakerState {
            mid,
            half_spread: T::zero(),
            window: VecDeque::with_capacity(horizon),
            horizon,
        }
    }

    pub fn imbalance(&self) -> i32 {
        imbalance(&self.window)
    }

    pub fn window(&self) -> &VecDeque<i8> {
        &self.window
    }

    /// Records a trade direction, evicting the oldest beyond `H` entries.
    pub fn push(&mut self, d: i8) {
        if self.horizon == 0 {
            return;
        }
        if self.window.len() == self.horizon {
            self.window.pop_front();
        }
        self.window.push_back(d);
    }

    pub fn quote(&self) -> Quote<T> {
        Quote::new(self.mid + self.half_spread, self.mid - self.half_spread)
    }

    /// Moves mid and half-spread; the half-spread is clamped at zero.
    pub fn apply_action(&mut self, a: Action) -> Quote<T> {
        self.mid = self.mid + T::of(a.mid as f64);
        self.half_spread = (self.half_spread + T::of(a.spread as f64)).max(T::zero());
        self.quote()
    }
}
