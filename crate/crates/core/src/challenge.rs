//! One-step challenges against a proposer running the tabular agent.
//!
//! A proposer publishes, for every slot, the action it took and the new value
//! it wrote into the Q-table. A challenger disputes a step by naming a single
//! table entry: either an action that beats the claimed greedy action, or a
//! bootstrap witness larger than the one the claimed update implies. Either
//! check needs only table lookups.

use thiserror::Error;

use crate::qtable::{td_target_value, Action, QTable, RLParams};
use crate::scalar::Scalar;

/// Slack on the implied bootstrap witness before an update challenge holds.
pub const UPDATE_TOLERANCE: f64 = 1e-9;

/// Valid iff `challenger` has strictly higher value than `claimed` in row `n`.
/// Ties are legitimate claims.
pub fn verify_argmax_claim<T: Scalar>(q: &QTable<T>, n: i32, claimed: Action, challenger: Action) -> bool {
    q.get(n, challenger) > q.get(n, claimed)
}

/// Valid iff `Q(n_next, challenger)` exceeds the bootstrap maximum implied by
/// `claimed_value` by more than [`UPDATE_TOLERANCE`].
#[allow(clippy::too_many_arguments)]
pub fn verify_update_claim<T: Scalar>(
    q_before: &QTable<T>,
    n: i32,
    a: Action,
    reward: T,
    n_next: i32,
    params: &RLParams,
    claimed_value: T,
    challenger: Action,
) -> bool {
    let scale = params.learning_rate * params.discount;
    if scale <= 0.0 {
        // no bootstrap term to dispute
        return false;
    }
    let implied = implied_witness(q_before, n, a, reward, params, claimed_value);
    q_before.get(n_next, challenger).as_f64() > implied + UPDATE_TOLERANCE
}

/// Solves the update rule for the bootstrap value behind `claimed_value`.
pub fn implied_witness<T: Scalar>(
    q_before: &QTable<T>,
    n: i32,
    a: Action,
    reward: T,
    params: &RLParams,
    claimed_value: T,
) -> f64 {
    let old = q_before.get(n, a).as_f64();
    (old + (claimed_value.as_f64() - old) / params.learning_rate - reward.as_f64()) / params.discount
}

/// One published slot of the proposer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepClaim<T: Scalar = f64> {
    pub n: i32,
    pub action: Action,
    /// Exploration steps are drawn from the public random stream, so only
    /// greedy steps can be disputed on the argmax.
    pub explored: bool,
    pub reward: T,
    pub n_next: i32,
    pub new_value: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Challenge {
    Argmax { challenger: Action },
    Update { challenger: Action },
}

/// First valid challenge against `claim` given the table before the step.
pub fn find_challenge<T: Scalar>(q: &QTable<T>, claim: &StepClaim<T>, params: &RLParams) -> Option<Challenge> {
    if !claim.explored {
        if let Some(c) = Action::ALL
            .into_iter()
            .find(|&c| verify_argmax_claim(q, claim.n, claim.action, c))
        {
            return Some(Challenge::Argmax { challenger: c });
        }
    }
    Action::ALL
        .into_iter()
        .find(|&c| {
            verify_update_claim(q, claim.n, claim.action, claim.reward, claim.n_next, params, claim.new_value, c)
        })
        .map(|c| Challenge::Update { challenger: c })
}

/// Replays `claims` from `initial`, applying each published value, and
/// returns the slots that admit a valid challenge.
pub fn audit_claims<T: Scalar>(
    initial: &QTable<T>,
    claims: &[StepClaim<T>],
    params: &RLParams,
) -> Vec<(usize, Challenge)> {
    let mut q = initial.clone();
    let mut hits = Vec::new();
    for (i, claim) in claims.iter().enumerate() {
        if let Some(ch) = find_challenge(&q, claim, params) {
            hits.push((i, ch));
        }
        q.set(claim.n, claim.action, claim.new_value);
    }
    hits
}

/// A claim read from a claims file for `zeroswap verify`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClaimRecord {
    Argmax { n: i32, claimed: Action, challenger: Action },
    Update {
        n: i32,
        action: Action,
        reward: f64,
        n_next: i32,
        claimed_value: f64,
        challenger: Action,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum ClaimsError {
    #[error("claims file row {row}: {msg}")]
    Malformed { row: usize, msg: String },
}

/// Header of the claims file.
pub const CLAIMS_HEADER: &str = "kind,n,a1,a2,reward,n_next,claimed_value,ch_a1,ch_a2";

/// Parses a claims CSV. `argmax` rows leave `reward`, `n_next` and
/// `claimed_value` empty.
pub fn parse_claims(text: &str) -> Result<Vec<ClaimRecord>, ClaimsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header_ok = rdr
        .headers()
        .map(|h| h.iter().collect::<Vec<_>>().join(",") == CLAIMS_HEADER)
        .unwrap_or(false);
    if !header_ok {
        return Err(ClaimsError::Malformed { row: 0, msg: format!("header must be {CLAIMS_HEADER}") });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let err = |msg: &str| ClaimsError::Malformed { row, msg: msg.to_string() };
        let rec = rec.map_err(|e| err(&e.to_string()))?;
        let f = |k: usize| rec.get(k).unwrap_or("");
        let int = |k: usize, name: &str| f(k).parse::<i32>().map_err(|_| err(&format!("bad {name}")));
        let real = |k: usize, name: &str| f(k).parse::<f64>().map_err(|_| err(&format!("bad {name}")));
        let action = |k1: usize, k2: usize| -> Result<Action, ClaimsError> {
            let a1 = int(k1, "action")?;
            let a2 = int(k2, "action")?;
            Action::new(a1 as i8, a2 as i8)
                .filter(|_| a1.abs() <= 1 && a2.abs() <= 1)
                .ok_or_else(|| err("action component outside -1..=1"))
        };
        let rec = match f(0) {
            "argmax" => ClaimRecord::Argmax { n: int(1, "n")?, claimed: action(2, 3)?, challenger: action(7, 8)? },
            "update" => ClaimRecord::Update {
                n: int(1, "n")?,
                action: action(2, 3)?,
                reward: real(4, "reward")?,
                n_next: int(5, "n_next")?,
                claimed_value: real(6, "claimed_value")?,
                challenger: action(7, 8)?,
            },
            other => return Err(err(&format!("unknown kind `{other}`"))),
        };
        out.push(rec);
    }
    Ok(out)
}

/// Checks each claim record against a fixed table snapshot; `true` marks a
/// valid challenge.
pub fn verify_records(q: &QTable<f64>, records: &[ClaimRecord], params: &RLParams) -> Result<Vec<bool>, ClaimsError> {
    let h = q.horizon() as i32;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let in_range = |n: i32| (-h..=h).contains(&n);
            let row = i + 1;
            match *r {
                ClaimRecord::Argmax { n, claimed, challenger } => {
                    if !in_range(n) {
                        return Err(ClaimsError::Malformed { row, msg: format!("n={n} outside table") });
                    }
                    Ok(verify_argmax_claim(q, n, claimed, challenger))
                }
                ClaimRecord::Update { n, action, reward, n_next, claimed_value, challenger } => {
                    if !in_range(n) || !in_range(n_next) {
                        return Err(ClaimsError::Malformed { row, msg: "imbalance outside table".into() });
                    }
                    Ok(verify_update_claim(q, n, action, reward, n_next, params, claimed_value, challenger))
                }
            }
        })
        .collect()
}

/// Value an honest proposer would publish for `(n, a)` if it bootstrapped on
/// `witness`; used to forge faulty claims in tests and fuzzing.
pub fn forged_update<T: Scalar>(q: &QTable<T>, n: i32, a: Action, reward: T, witness: Action, n_next: i32, params: &RLParams) -> T {
    td_target_value(q, n, a, reward, q.get(n_next, witness), params)
}
