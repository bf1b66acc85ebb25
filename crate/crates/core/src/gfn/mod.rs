//! Forward policy, trajectory balance, replay buffer, and the training loop.

mod buffer;
mod optim;
mod policy;
mod train;

use rand::Rng;

use crate::dag::{ProblemInstance, StateSet, Trajectory};
use crate::par::{map_indexed, Execution};

pub use buffer::{BufferEntry, ReplayBuffer};
pub use optim::{Optimizer, OptimizerKind};
pub use policy::{backward_policy_logprob, ForwardModel, Policy, PolicyError, PolicyShape};
pub use train::{train, Phase, TrainConfig, TrainError, TrainedRun, Variant};

/// Draws an index from a probability vector.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Rolls out a trajectory from the empty state. At each step the action is
/// uniform over the available elements with probability `epsilon`, otherwise
/// drawn from the model.
pub fn sample_trajectory<M, R>(model: &M, instance: &ProblemInstance, epsilon: f64, rng: &mut R) -> Trajectory
where
    M: ForwardModel + ?Sized,
    R: Rng + ?Sized,
{
    let n = instance.num_elements();
    let mut state = StateSet::empty(n);
    let mut additions = Vec::with_capacity(instance.cardinality());
    while additions.len() < instance.cardinality() {
        let a = if epsilon > 0.0 && rng.gen_bool(epsilon.min(1.0)) {
            let k = rng.gen_range(0..n - state.len());
            (0..n).filter(|&e| !state.contains(e)).nth(k).expect("k < available")
        } else {
            sample_categorical(&model.action_probs(&state), rng)
        };
        state.insert(a);
        additions.push(a);
    }
    Trajectory::new(instance, additions).expect("sampled actions are distinct")
}

/// Removes members uniformly at random until empty and returns the reversed
/// sequence as a forward trajectory ending at `terminal`.
pub fn sample_backward_to<R: Rng + ?Sized>(instance: &ProblemInstance, terminal: &StateSet, rng: &mut R) -> Trajectory {
    let mut remaining = terminal.to_vec();
    let mut removed = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let i = rng.gen_range(0..remaining.len());
        removed.push(remaining.swap_remove(i));
    }
    removed.reverse();
    Trajectory::new(instance, removed).expect("terminal has C distinct members")
}

/// Squared trajectory-balance residual and its gradients.
#[derive(Debug, Clone)]
pub struct TbOutput {
    pub loss: f64,
    pub residual: f64,
    pub grad: Vec<f64>,
    pub grad_log_z: f64,
}

/// `(log Z + Σ log P_F - log signal - Σ log P_B)²` with uniform `P_B`,
/// i.e. `Σ log P_B = -log C!`.
pub fn tb_loss(policy: &Policy, trajectory: &Trajectory, signal: f64) -> Result<TbOutput, PolicyError> {
    if !(signal > 0.0) {
        return Err(PolicyError::NonPositiveSignal(signal));
    }
    let mut grad = vec![0.0; policy.params().len()];
    let mut log_pf = 0.0;
    let prefixes = trajectory.prefixes();
    for (s, &a) in prefixes.iter().zip(trajectory.additions()) {
        log_pf += policy.accumulate_logprob_grad(s, a, 1.0, &mut grad);
    }
    let log_pb = log_factorial(trajectory.len());
    let residual = policy.log_z() + log_pf - signal.ln() + log_pb;
    let scale = 2.0 * residual;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(TbOutput {
        loss: residual * residual,
        residual,
        grad,
        grad_log_z: scale,
    })
}

/// `log C!`, the negated backward log-probability of any length-`C` trajectory.
pub fn log_factorial(c: usize) -> f64 {
    (1..=c).map(|i| (i as f64).ln()).sum()
}

/// Mean loss and mean gradients over a batch of `(trajectory, signal)` pairs.
pub fn batch_tb(policy: &Policy, batch: &[(Trajectory, f64)], exec: Execution) -> Result<TbOutput, PolicyError> {
    let outs = map_indexed(exec, batch.len(), |i| tb_loss(policy, &batch[i].0, batch[i].1));
    let mut grad = vec![0.0; policy.params().len()];
    let mut loss = 0.0;
    let mut residual = 0.0;
    let mut grad_log_z = 0.0;
    for o in outs {
        let o = o?;
        loss += o.loss;
        residual += o.residual;
        grad_log_z += o.grad_log_z;
        for (g, x) in grad.iter_mut().zip(&o.grad) {
            *g += x;
        }
    }
    let inv = 1.0 / batch.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(TbOutput {
        loss: loss * inv,
        residual: residual * inv,
        grad,
        grad_log_z: grad_log_z * inv,
    })
}
