use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use super::buffer::{BufferEntry, ReplayBuffer};
use super::optim::{Optimizer, OptimizerKind};
use super::policy::{Policy, PolicyError, PolicyShape};
use super::{batch_tb, sample_backward_to, sample_trajectory};
use crate::bounds::{BoundIndex, BoundsError, ObservationLedger};
use crate::dag::{ProblemInstance, Trajectory};
use crate::metrics::{Evaluator, MetricsRecord};
use crate::par::{map_indexed, Execution};
use crate::rewards::{OracleError, RewardOracle, DEFAULT_EPSILON_REWARD};
use crate::rng::substream;

pub use crate::metrics::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Classical,
    Subo,
    /// Keeps bound filtering on after the budget runs out.
    SuboF,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Classical => "classical",
            Variant::Subo => "subo",
            Variant::SuboF => "subo_f",
        }
    }

    pub fn uses_bounds(self) -> bool {
        self != Variant::Classical
    }

    fn filtering(self, online: bool) -> bool {
        match self {
            Variant::Classical => false,
            Variant::Subo => online,
            Variant::SuboF => true,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "classical" => Ok(Variant::Classical),
            "subo" => Ok(Variant::Subo),
            "subo_f" | "subo-f" => Ok(Variant::SuboF),
            other => Err(TrainError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Distinct oracle queries allowed; `None` is unlimited.
    pub query_budget: Option<u64>,
    pub batch_size: usize,
    pub lr_policy: f64,
    pub lr_log_z: f64,
    pub epsilon: f64,
    pub mix_buffer_fraction: f64,
    /// Steps after the budget runs out (ignored when `total_steps` is set).
    pub offline_steps: u64,
    /// Hard cap on gradient steps across both phases.
    pub total_steps: Option<u64>,
    /// Defaults to the query budget.
    pub buffer_capacity: Option<usize>,
    pub seed: u64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub optimizer: OptimizerKind,
    pub epsilon_reward: f64,
    /// Clamp bounds to the reward's known maximum.
    pub clamp_to_max: bool,
    /// Per-element input features, `N × F` row-major.
    pub features: Option<Vec<f64>>,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Subo,
            query_budget: Some(10_000),
            batch_size: 16,
            lr_policy: 1e-4,
            lr_log_z: 1e-2,
            epsilon: 0.1,
            mix_buffer_fraction: 0.25,
            offline_steps: 1000,
            total_steps: None,
            buffer_capacity: None,
            seed: 0,
            embedding_dim: 128,
            hidden_dim: 128,
            optimizer: OptimizerKind::Sgd,
            epsilon_reward: DEFAULT_EPSILON_REWARD,
            clamp_to_max: false,
            features: None,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, instance: &ProblemInstance) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_policy > 0.0 && self.lr_log_z > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mix_buffer_fraction) {
            return bad("mix_buffer_fraction must lie in [0, 1]");
        }
        if !(self.epsilon_reward > 0.0) {
            return bad("epsilon_reward must be positive");
        }
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return bad("embedding_dim and hidden_dim must be positive");
        }
        if self.query_budget.is_none() && self.total_steps.is_none() {
            return bad("an unlimited budget needs total_steps");
        }
        if let Some(f) = &self.features {
            if f.len() % instance.num_elements() != 0 {
                return bad("feature length is not a multiple of N");
            }
        }
        Ok(())
    }

    fn feature_dim(&self, n: usize) -> usize {
        self.features.as_ref().map_or(0, |f| f.len() / n)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug)]
pub struct TrainedRun {
    pub policy: Policy,
    pub ledger: ObservationLedger,
    pub index: BoundIndex,
    pub buffer: ReplayBuffer,
    pub records: Vec<MetricsRecord>,
    /// Step on which the budget ran out.
    pub transition_step: Option<u64>,
    pub steps: u64,
    pub queries_used: u64,
}

impl TrainedRun {
    pub fn transition_record(&self) -> Option<&MetricsRecord> {
        self.records.iter().find(|r| r.phase == Phase::Transition)
    }

    pub fn final_record(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }
}

/// Queries and records one sampled trajectory. Returns `false` once the
/// budget is exhausted; prefixes queried before that are still recorded.
fn ingest(
    variant: Variant,
    traj: &Trajectory,
    oracle: &mut RewardOracle,
    ledger: &mut ObservationLedger,
    index: &mut BoundIndex,
    buffer: &mut ReplayBuffer,
) -> Result<bool, TrainError> {
    let terminal = traj.terminal();
    if !variant.uses_bounds() {
        return match oracle.query(&terminal) {
            Ok(r) => {
                ledger.insert(&terminal, r)?;
                buffer.push(BufferEntry {
                    trajectory: traj.clone(),
                    reward: r,
                });
                Ok(true)
            }
            Err(OracleError::BudgetExhausted { .. }) => Ok(false),
            Err(e) => Err(e.into()),
        };
    }
    let prefixes = traj.prefixes();
    let mut rewards = Vec::with_capacity(prefixes.len());
    for s in &prefixes {
        match oracle.query(s) {
            Ok(r) => rewards.push(r),
            Err(OracleError::BudgetExhausted { .. }) => {
                for (s, &r) in prefixes.iter().zip(&rewards) {
                    index.observe_state(ledger, s, r)?;
                }
                return Ok(false);
            }
            Err(e) => return Err(e.into()),
        }
    }
    index.record_trajectory(ledger, traj, &rewards)?;
    buffer.push(BufferEntry {
        trajectory: traj.clone(),
        reward: *rewards.last().expect("C >= 1"),
    });
    Ok(true)
}

fn compose_batch<R: Rng + ?Sized>(
    config: &TrainConfig,
    instance: &ProblemInstance,
    online: bool,
    ledger: &ObservationLedger,
    index: &BoundIndex,
    buffer: &ReplayBuffer,
    rng: &mut R,
) -> Vec<(Trajectory, f64)> {
    let floor = config.epsilon_reward;
    let b = config.batch_size;
    let n_bound = if config.variant.uses_bounds() {
        b - (b as f64 * config.mix_buffer_fraction).round() as usize
    } else {
        0
    };
    let filtering = config.variant.filtering(online);
    let mut batch = Vec::with_capacity(b);
    for _ in 0..n_bound {
        match index.sample_active(ledger, filtering, rng) {
            Some(e) => {
                let traj = sample_backward_to(instance, &e.terminal, rng);
                batch.push((traj, e.value.max(floor)));
            }
            None => {
                log::debug!("no active bounds; filling the batch from the buffer");
                break;
            }
        }
    }
    while batch.len() < b {
        match buffer.sample(rng) {
            Some(e) => batch.push((e.trajectory.clone(), e.reward.max(floor))),
            None => break,
        }
    }
    batch
}

/// Runs the online phase until the budget is exhausted, then the offline
/// phase; see [`TrainConfig`] for the stopping rules.
pub fn train(
    config: &TrainConfig,
    instance: &ProblemInstance,
    oracle: &mut RewardOracle,
    evaluator: &mut Evaluator,
) -> Result<TrainedRun, TrainError> {
    config.validate(instance)?;
    let n = instance.num_elements();
    let seed = config.seed;
    let shape = PolicyShape {
        num_elements: n,
        embedding_dim: config.embedding_dim,
        hidden_dim: config.hidden_dim,
        feature_dim: config.feature_dim(n),
    };
    let mut policy = Policy::new(shape, config.features.clone(), &mut substream(seed, &[0]));
    let mut optimizer = Optimizer::new(
        config.optimizer,
        policy.params().len(),
        config.lr_policy,
        config.lr_log_z,
    );
    let clamp = if config.clamp_to_max {
        oracle.unmetered().max_value()
    } else {
        None
    };
    let mut ledger = ObservationLedger::new(instance);
    let mut index = BoundIndex::new(instance, clamp);
    let capacity = config
        .buffer_capacity
        .or(config.query_budget.map(|q| q as usize));
    let mut buffer = ReplayBuffer::new(capacity);

    let interval = evaluator.config().interval;
    let alpha = 2.0 / (interval.max(1) as f64 + 1.0);
    let mut ema: Option<f64> = None;
    let mut records = Vec::new();
    let mut online = true;
    let mut transition_step = None;
    let mut step: u64 = 0;

    loop {
        let done = match (config.total_steps, transition_step) {
            (Some(t), _) => step >= t,
            (None, Some(ts)) => step >= ts + config.offline_steps,
            (None, None) => false,
        };
        if done {
            break;
        }
        step += 1;
        let mut phase = if online { Phase::Online } else { Phase::Offline };

        if online {
            let trajs = map_indexed(config.execution, config.batch_size, |i| {
                let mut rng = substream(seed, &[1, step, i as u64]);
                sample_trajectory(&policy, instance, config.epsilon, &mut rng)
            });
            for traj in &trajs {
                if !ingest(config.variant, traj, oracle, &mut ledger, &mut index, &mut buffer)? {
                    oracle.go_offline();
                    online = false;
                    transition_step = Some(step);
                    phase = Phase::Transition;
                    log::info!("budget exhausted at step {step}");
                    break;
                }
            }
        }

        let mut rng = substream(seed, &[2, step]);
        let batch = compose_batch(config, instance, online, &ledger, &index, &buffer, &mut rng);
        if batch.is_empty() {
            log::warn!("step {step}: nothing to train on");
        } else {
            let out = batch_tb(&policy, &batch, config.execution)?;
            optimizer.step(&mut policy, &out.grad, out.grad_log_z);
            ema = Some(match ema {
                None => out.loss,
                Some(e) => e + alpha * (out.loss - e),
            });
        }

        let last = match (config.total_steps, transition_step) {
            (Some(t), _) => step >= t,
            (None, Some(ts)) => step >= ts + config.offline_steps,
            (None, None) => false,
        };
        if phase == Phase::Transition || last || (interval > 0 && step.is_multiple_of(interval)) {
            let mut mrng = substream(seed, &[3, step]);
            records.push(MetricsRecord {
                step,
                phase,
                queries_used: oracle.queries_used(),
                loss: ema.unwrap_or(f64::NAN),
                fcs: evaluator.fcs(&policy, &mut mrng),
                exact_tv: evaluator.exact_tv(&policy),
                top_k_avg: evaluator.top_k(&ledger),
                num_bounds: index.active_bounds(&ledger, config.variant.filtering(online)).len(),
                coverage: index.coverage_count(),
            });
        }
    }

    Ok(TrainedRun {
        policy,
        ledger,
        index,
        buffer,
        records,
        transition_step,
        steps: step,
        queries_used: oracle.queries_used(),
    })
}
