//! Value-network variant of the learning market maker: the raw window of
//! trade directions is fed to a dense network instead of collapsing it into
//! an imbalance row of a table.

mod net;
mod replay;

pub use net::{Dense, Trace, ValueNet};
pub use replay::{ReplayBuffer, Transition};

use rand::Rng;
use thiserror::Error;

use crate::qtable::{Action, RLParams};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DqnError {
    #[error("training loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("empty training batch")]
    EmptyBatch,
}

/// Window of trade directions, oldest first, as network input.
pub fn encode_state<T: Scalar>(window: &[i8]) -> Vec<T> {
    window.iter().map(|&d| T::of(d as f64)).collect()
}

/// Greedy action on network outputs with uniform tie-breaking.
pub fn greedy_action<T: Scalar, R: Rng + ?Sized>(values: &[T], rng: &mut R) -> Action {
    let best = values.iter().copied().fold(T::neg_infinity(), T::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    Action::from_index(ties[rng.random_range(0..ties.len())])
}

/// Same exploration schedule as the table agent, applied to network outputs.
pub fn act_epsilon_greedy<T: Scalar, R: Rng + ?Sized>(
    net: &ValueNet<T>,
    state: &[T],
    t: u64,
    params: &RLParams,
    rng: &mut R,
) -> (Action, bool) {
    if rng.random::<f64>() < params.exploration(t) {
        (Action::from_index(rng.random_range(0..Action::COUNT)), true)
    } else {
        (greedy_action(&net.forward(state), rng), false)
    }
}

/// Optimizer settings for [`train_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

/// Mean squared TD error over `batch` and its parameter gradient.
/// Targets `r + gamma * max_a target(s', a)` are held fixed.
pub fn td_loss_and_grad<T: Scalar>(
    net: &ValueNet<T>,
    target: &ValueNet<T>,
    batch: &[&Transition<T>],
    discount: f64,
) -> (T, ValueNet<T>) {
    let mut grads = net.zeros_like();
    let b = T::of(batch.len() as f64);
    let gamma = T::of(discount);
    let mut loss = T::zero();
    for tr in batch {
        let next_max = target.forward(&tr.next_state).into_iter().fold(T::neg_infinity(), T::max);
        let y = tr.reward + gamma * next_max;
        let trace = net.trace(&tr.state);
        let err = trace.output()[tr.action] - y;
        loss = loss + err * err / b;
        let mut g = vec![T::zero(); net.output_size()];
        g[tr.action] = T::of(2.0) * err / b;
        net.backward(&trace, &g, &mut grads);
    }
    (loss, grads)
}

/// One plain gradient step on the mean squared TD error. `target` is the
/// bootstrap network; pass `None` to bootstrap on `net` itself. Returns the
/// pre-step loss.
pub fn train_step<T: Scalar>(
    net: &mut ValueNet<T>,
    target: Option<&ValueNet<T>>,
    batch: &[&Transition<T>],
    params: &RLParams,
    sgd: &SgdConfig,
) -> Result<T, DqnError> {
    if batch.is_empty() {
        return Err(DqnError::EmptyBatch);
    }
    let (loss, mut grads) = match target {
        Some(t) => td_loss_and_grad(net, t, batch, params.discount),
        None => {
            let frozen = net.clone();
            td_loss_and_grad(net, &frozen, batch, params.discount)
        }
    };
    if !loss.is_finite() {
        return Err(DqnError::NonFiniteLoss(loss.as_f64()));
    }
    if let Some(cap) = sgd.clip_norm {
        let norm = grads.norm();
        let cap = T::of(cap);
        if norm > cap {
            grads.scale(cap / norm);
        }
    }
    net.descend(&grads, T::of(sgd.learning_rate));
    if !net.is_finite() {
        return Err(DqnError::NonFiniteLoss(f64::NAN));
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::sim_rng;
    use crate::qtable::imbalance;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_state::<f64>(&[1, 0, -1]), vec![1.0, 0.0, -1.0]);
        assert!(encode_state::<f64>(&[0; 5]).iter().all(|v| *v == 0.0));
        let w = [1, 1, -1, 0, 1, -1, 1];
        assert_eq!(encode_state::<f64>(&w).iter().sum::<f64>(), imbalance(&w) as f64);
    }

    fn transition(state: Vec<f64>, action: usize, reward: f64) -> Transition<f64> {
        Transition { next_state: state.clone(), state, action, reward }
    }

    #[test]
    fn zero_error_batch_leaves_net() {
        let mut rng = sim_rng(1, 0);
        let mut net = ValueNet::<f64>::new(&[3, 8, 9], &mut rng);
        let x = vec![1.0, -1.0, 0.0];
        let p = RLParams { discount: 0.0, ..RLParams::default() };
        let reward = net.forward(&x)[4];
        let tr = transition(x, 4, reward);
        let before = net.clone();
        let sgd = SgdConfig { learning_rate: 0.1, clip_norm: None };
        train_step(&mut net, None, &[&tr], &p, &sgd).unwrap();
        let change: f64 = net.params().zip(before.params()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(change <= 1e-12, "{change}");
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut rng = sim_rng(2, 0);
        let mut net = ValueNet::<f64>::new(&[3, 8, 9], &mut rng);
        let before = net.clone();
        let tr = transition(vec![1.0, 1.0, 1.0], 2, -7.0);
        let sgd = SgdConfig { learning_rate: 0.0, clip_norm: None };
        train_step(&mut net, None, &[&tr], &RLParams::default(), &sgd).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn myopic_regression_converges() {
        let mut rng = sim_rng(3, 0);
        let mut net = ValueNet::<f64>::new(&[3, 8, 9], &mut rng);
        let p = RLParams { discount: 0.0, ..RLParams::default() };
        let tr = transition(vec![1.0, 0.0, -1.0], 6, -2.5);
        let sgd = SgdConfig { learning_rate: 0.01, clip_norm: None };
        let mut steps = 0;
        while (net.forward(&tr.state)[6] + 2.5).abs() > 1e-3 {
            train_step(&mut net, None, &[&tr], &p, &sgd).unwrap();
            steps += 1;
            assert!(steps <= 10_000, "no convergence");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut net = ValueNet::<f64>::zeros(&[1, 1]);
        let tr = Transition { state: vec![1.0], next_state: vec![1.0], action: 0, reward: f64::INFINITY };
        let err = train_step(&mut net, None, &[&tr], &RLParams::default(), &SgdConfig { learning_rate: 0.1, clip_norm: None });
        assert!(matches!(err, Err(DqnError::NonFiniteLoss(_))));
        assert_eq!(
            train_step(&mut net, None, &[], &RLParams::default(), &SgdConfig { learning_rate: 0.1, clip_norm: None }),
            Err(DqnError::EmptyBatch)
        );
    }

    #[test]
    fn greedy_with_flat_outputs_is_uniform() {
        let mut net = ValueNet::<f64>::zeros(&[3, 4, 9]);
        net.zero_output_layer();
        let p = RLParams { epsilon: 0.0, epsilon_floor: 0.0, ..RLParams::default() };
        let mut rng = sim_rng(4, 0);
        let mut counts = [0usize; 9];
        for t in 0..90_000 {
            let (a, explored) = act_epsilon_greedy(&net, &[0.0, 0.0, 0.0], t, &p, &mut rng);
            assert!(!explored);
            counts[a.index()] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 / 90_000.0 - 1.0 / 9.0).abs() < 0.01));
    }

    #[test]
    fn greedy_picks_unique_max() {
        let mut net = ValueNet::<f64>::zeros(&[1, 9]);
        // bias of output 7 is the 17th parameter (9 weights first)
        net.set_param(9 + 7, 1.0);
        let p = RLParams { epsilon: 0.0, epsilon_floor: 0.0, ..RLParams::default() };
        let mut rng = sim_rng(5, 0);
        for t in 0..100 {
            assert_eq!(act_epsilon_greedy(&net, &[0.5], t, &p, &mut rng).0, Action::from_index(7));
        }
        let explore = RLParams { epsilon: 1.0, ..p };
        assert!(act_epsilon_greedy(&net, &[0.5], 0, &explore, &mut rng).1);
    }
}
