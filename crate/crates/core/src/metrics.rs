//! Distribution-matching metrics and per-run records.
//!
//! Terminal distributions are vectors indexed by the colexicographic rank of
//! the terminal (see [`SubsetRanker`]).

use std::fmt;
use std::sync::Arc;

use indexmap::IndexSet;
use num_traits::ToPrimitive;
use rand::Rng;
use thiserror::Error;

use crate::bounds::ObservationLedger;
use crate::dag::{binomial, ProblemInstance, StateSet, SubsetRanker};
use crate::gfn::{sample_trajectory, ForwardModel};
use crate::par::{map_chunks, Execution};
use crate::rewards::SetFunction;

/// Default refusal threshold on the number of terminating states.
pub const DEFAULT_TV_CAP: u64 = 10_000_000;

const CHUNK: usize = 2048;
const CHUNKS_PER_ROUND: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{count} terminating states exceed the cap of {cap}")]
    CapExceeded { count: String, cap: u64 },
    #[error("no observed terminating states")]
    NoObservations,
    #[error("k must be at least 1")]
    ZeroK,
}

fn terminal_count(inst: &ProblemInstance, cap: u64) -> Result<usize, MetricsError> {
    let count = binomial(inst.num_elements(), inst.cardinality());
    match count.to_u64() {
        Some(c) if c <= cap => Ok(c as usize),
        _ => Err(MetricsError::CapExceeded {
            count: count.to_string(),
            cap,
        }),
    }
}

/// Terminating state with the given colex rank.
pub fn terminal_at_rank(inst: &ProblemInstance, ranker: &SubsetRanker, rank: u64) -> StateSet {
    StateSet::from_elements(inst.num_elements(), ranker.unrank(rank, inst.cardinality()))
}

/// Probability that the model (without exploration) ends in each terminal.
///
/// Pushes probability mass layer by layer through all states of size
/// `0..C`; every ordering of a terminal is accounted for.
pub fn learned_terminal_distribution<M: ForwardModel + ?Sized>(
    model: &M,
    inst: &ProblemInstance,
    cap: u64,
    exec: Execution,
) -> Result<Vec<f64>, MetricsError> {
    terminal_count(inst, cap)?;
    let n = inst.num_elements();
    let c = inst.cardinality();
    let ranker = SubsetRanker::new(n, c);
    let mut layer = vec![1.0f64];
    for size in 0..c {
        let mut next = vec![0.0f64; ranker.count(size + 1) as usize];
        let round = CHUNK * CHUNKS_PER_ROUND;
        let mut start = 0;
        while start < layer.len() {
            let end = (start + round).min(layer.len());
            let cur = &layer;
            let pushes = map_chunks(exec, end - start, CHUNK, |r| {
                let mut out = Vec::with_capacity(r.len() * (n - size));
                for rank in r.start + start..r.end + start {
                    let w = cur[rank];
                    if w == 0.0 {
                        continue;
                    }
                    let sorted = ranker.unrank(rank as u64, size);
                    let state = StateSet::from_elements(n, sorted.iter().copied());
                    let probs = model.action_probs(&state);
                    for (a, &p) in probs.iter().enumerate() {
                        if p > 0.0 && !state.contains(a) {
                            out.push((ranker.rank_with(&sorted, a) as usize, w * p));
                        }
                    }
                }
                out
            });
            for chunk in pushes {
                for (r, m) in chunk {
                    next[r] += m;
                }
            }
            start = end;
        }
        layer = next;
    }
    Ok(layer)
}

/// `R(x) / Z` over all terminals.
pub fn target_distribution(
    reward: &dyn SetFunction,
    inst: &ProblemInstance,
    cap: u64,
    exec: Execution,
) -> Result<Vec<f64>, MetricsError> {
    let count = terminal_count(inst, cap)?;
    let ranker = SubsetRanker::new(inst.num_elements(), inst.cardinality());
    let parts = map_chunks(exec, count, 1 << 16, |r| {
        r.map(|rank| reward.value(&terminal_at_rank(inst, &ranker, rank as u64)))
            .collect::<Vec<f64>>()
    });
    let mut values: Vec<f64> = parts.into_iter().flatten().collect();
    let z: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= z);
    Ok(values)
}

/// `½ Σ |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Total variation between the learned and target terminal distributions.
pub fn exact_tv<M: ForwardModel + ?Sized>(
    model: &M,
    inst: &ProblemInstance,
    reward: &dyn SetFunction,
    cap: u64,
    exec: Execution,
) -> Result<f64, MetricsError> {
    let target = target_distribution(reward, inst, cap, exec)?;
    let learned = learned_terminal_distribution(model, inst, cap, exec)?;
    Ok(tv_distance(&learned, &target))
}

/// Probability of ending in `x`, summed over all `C!` orderings by a DP over
/// the subsets of `x`.
pub fn terminal_probability<M: ForwardModel + ?Sized>(model: &M, x: &StateSet) -> f64 {
    let members = x.to_vec();
    let c = members.len();
    let n = model.num_elements();
    let full = (1usize << c) - 1;
    let mut mass = vec![0.0f64; 1 << c];
    mass[0] = 1.0;
    // increasing masks visit every subset before its supersets
    for mask in 0..full {
        let w = mass[mask];
        if w == 0.0 {
            continue;
        }
        let state = StateSet::from_elements(n, (0..c).filter(|b| mask >> b & 1 == 1).map(|b| members[b]));
        let probs = model.action_probs(&state);
        for b in 0..c {
            if mask >> b & 1 == 0 {
                mass[mask | 1 << b] += w * probs[members[b]];
            }
        }
    }
    mass[full]
}

/// TV between the learned and target distributions, both restricted to
/// `subset` and renormalized. `None` if fewer than two terminals or if either
/// restriction has no mass.
pub fn fcs_on_subset<M: ForwardModel + ?Sized>(
    model: &M,
    reward: &dyn SetFunction,
    subset: &[StateSet],
) -> Option<f64> {
    if subset.len() < 2 {
        return None;
    }
    let learned: Vec<f64> = subset.iter().map(|x| terminal_probability(model, x)).collect();
    let target: Vec<f64> = subset.iter().map(|x| reward.value(x)).collect();
    let zl: f64 = learned.iter().sum();
    let zt: f64 = target.iter().sum();
    if !(zl > 0.0 && zt > 0.0) {
        return None;
    }
    let p: Vec<f64> = learned.iter().map(|v| v / zl).collect();
    let q: Vec<f64> = target.iter().map(|v| v / zt).collect();
    Some(tv_distance(&p, &q))
}

/// Sample counts for the subgraph TV proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcsConfig {
    pub forward_samples: usize,
    pub backward_samples: usize,
    pub epochs: usize,
}

impl Default for FcsConfig {
    fn default() -> Self {
        Self {
            forward_samples: 128,
            backward_samples: 8,
            epochs: 25,
        }
    }
}

/// Uniformly random terminating state.
pub fn uniform_terminal<R: Rng + ?Sized>(inst: &ProblemInstance, rng: &mut R) -> StateSet {
    let n = inst.num_elements();
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..inst.cardinality() {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    StateSet::from_elements(n, pool[..inst.cardinality()].iter().copied())
}

/// Flow consistency in a sampled subgraph: per epoch, the terminals reached
/// by forward samples of the model plus uniformly drawn terminals form the
/// subset passed to [`fcs_on_subset`]; the result is the mean over epochs.
/// Degenerate epochs are skipped; `None` if all were.
pub fn fcs<M: ForwardModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    inst: &ProblemInstance,
    reward: &dyn SetFunction,
    cfg: &FcsConfig,
    rng: &mut R,
) -> Option<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for epoch in 0..cfg.epochs {
        let mut subset: IndexSet<StateSet> = IndexSet::new();
        for _ in 0..cfg.forward_samples {
            subset.insert(sample_trajectory(model, inst, 0.0, rng).terminal());
        }
        for _ in 0..cfg.backward_samples {
            subset.insert(uniform_terminal(inst, rng));
        }
        let subset: Vec<StateSet> = subset.into_iter().collect();
        match fcs_on_subset(model, reward, &subset) {
            Some(v) => {
                total += v;
                used += 1;
            }
            None => log::debug!("fcs epoch {epoch} skipped: degenerate subgraph of {} terminals", subset.len()),
        }
    }
    (used > 0).then(|| total / used as f64)
}

/// Mean of the `k` best observed terminal rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopK {
    pub value: f64,
    pub count: usize,
    /// Fewer than `k` terminals were observed; `value` averages all of them.
    pub under_k: bool,
}

pub fn top_k_avg(ledger: &ObservationLedger, k: usize) -> Result<TopK, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let mut rewards: Vec<f64> = ledger.terminal_rewards().collect();
    if rewards.is_empty() {
        return Err(MetricsError::NoObservations);
    }
    rewards.sort_by(|a, b| b.total_cmp(a));
    let count = rewards.len().min(k);
    Ok(TopK {
        value: rewards[..count].iter().sum::<f64>() / count as f64,
        count,
        under_k: rewards.len() < k,
    })
}

/// Training phase of a metrics row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Online,
    /// The step on which the query budget ran out.
    Transition,
    Offline,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Online => "online",
            Phase::Transition => "transition",
            Phase::Offline => "offline",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub phase: Phase,
    pub queries_used: u64,
    pub loss: f64,
    pub fcs: Option<f64>,
    pub exact_tv: Option<f64>,
    pub top_k_avg: Option<f64>,
    pub num_bounds: usize,
    pub coverage: usize,
}

pub const CSV_HEADER: &str = "step,phase,queries_used,loss,fcs,exact_tv,top_k_avg,num_bounds,coverage";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            self.phase,
            self.queries_used,
            self.loss,
            opt(self.fcs),
            opt(self.exact_tv),
            opt(self.top_k_avg),
            self.num_bounds,
            self.coverage
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    /// Record every `interval` steps (0 records only the transition and final rows).
    pub interval: u64,
    pub fcs: Option<FcsConfig>,
    pub exact_tv: bool,
    pub tv_cap: u64,
    pub top_k: usize,
    pub execution: Execution,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            interval: 100,
            fcs: Some(FcsConfig::default()),
            exact_tv: true,
            tv_cap: DEFAULT_TV_CAP,
            top_k: 100,
            execution: Execution::default(),
        }
    }
}

/// Evaluation-only view of an instance; caches the target distribution.
#[derive(Debug)]
pub struct Evaluator {
    inst: ProblemInstance,
    reward: Arc<dyn SetFunction>,
    cfg: MetricsConfig,
    target: Option<Vec<f64>>,
}

impl Evaluator {
    pub fn new(inst: ProblemInstance, reward: Arc<dyn SetFunction>, cfg: MetricsConfig) -> Self {
        Self {
            inst,
            reward,
            cfg,
            target: None,
        }
    }

    pub fn config(&self) -> &MetricsConfig {
        &self.cfg
    }

    /// `None` when disabled or when the instance exceeds the cap.
    pub fn exact_tv<M: ForwardModel + ?Sized>(&mut self, model: &M) -> Option<f64> {
        if !self.cfg.exact_tv {
            return None;
        }
        if self.target.is_none() {
            self.target = target_distribution(self.reward.as_ref(), &self.inst, self.cfg.tv_cap, self.cfg.execution).ok();
        }
        let target = self.target.as_ref()?;
        let learned = learned_terminal_distribution(model, &self.inst, self.cfg.tv_cap, self.cfg.execution).ok()?;
        Some(tv_distance(&learned, target))
    }

    pub fn fcs<M: ForwardModel + ?Sized, R: Rng + ?Sized>(&self, model: &M, rng: &mut R) -> Option<f64> {
        let cfg = self.cfg.fcs?;
        fcs(model, &self.inst, self.reward.as_ref(), &cfg, rng)
    }

    pub fn top_k(&self, ledger: &ObservationLedger) -> Option<f64> {
        top_k_avg(ledger, self.cfg.top_k).ok().map(|t| t.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gfn::{Policy, PolicyShape};
    use crate::rewards::{path_graph, ConstantReward, CoverageReward};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Uniform(usize);
    impl ForwardModel for Uniform {
        fn num_elements(&self) -> usize {
            self.0
        }
        fn action_probs(&self, s: &StateSet) -> Vec<f64> {
            let k = (self.0 - s.len()) as f64;
            (0..self.0).map(|a| if s.contains(a) { 0.0 } else { 1.0 / k }).collect()
        }
    }

    fn random_policy(n: usize, seed: u64) -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Policy::new(
            PolicyShape {
                num_elements: n,
                embedding_dim: 3,
                hidden_dim: 4,
                feature_dim: 0,
            },
            None,
            &mut rng,
        );
        for v in p.params_mut() {
            *v = rng.gen_range(-1.5..1.5);
        }
        p
    }

    #[test]
    fn uniform_policy_gives_uniform_terminals() {
        let inst = ProblemInstance::new(8, 3).unwrap();
        let d = learned_terminal_distribution(&Uniform(8), &inst, DEFAULT_TV_CAP, Execution::Parallel).unwrap();
        assert_eq!(d.len(), 56);
        assert!(d.iter().all(|&p| (p - 1.0 / 56.0).abs() < 1e-14));
    }

    #[test]
    fn layered_dp_matches_per_terminal_dp() {
        let inst = ProblemInstance::new(9, 4).unwrap();
        let p = random_policy(9, 7);
        let d = learned_terminal_distribution(&p, &inst, DEFAULT_TV_CAP, Execution::Parallel).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ranker = SubsetRanker::new(9, 4);
        for (r, &pd) in d.iter().enumerate() {
            let x = terminal_at_rank(&inst, &ranker, r as u64);
            assert!((terminal_probability(&p, &x) - pd).abs() < 1e-14);
        }
        let seq = learned_terminal_distribution(&p, &inst, DEFAULT_TV_CAP, Execution::Sequential).unwrap();
        assert_eq!(d, seq);
    }

    #[test]
    fn cap_refuses() {
        let inst = ProblemInstance::new(30, 10).unwrap();
        assert!(learned_terminal_distribution(&Uniform(30), &inst, DEFAULT_TV_CAP, Execution::Parallel).is_err());
    }

    #[test]
    fn tv_examples() {
        let point = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let uniform = [1.0 / 6.0; 6];
        assert!((tv_distance(&point, &uniform) - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(tv_distance(&uniform, &uniform), 0.0);
    }

    #[test]
    fn uniform_policy_vs_path_coverage() {
        // open-neighborhood coverage counts in colex order
        let inst = ProblemInstance::new(4, 2).unwrap();
        let f = CoverageReward::new(&path_graph(4));
        let raw = [3.0, 2.0, 4.0, 2.0, 2.0, 3.0];
        let z: f64 = raw.iter().sum();
        let want: f64 = 0.5 * raw.iter().map(|r| (1.0 / 6.0 - r / z).abs()).sum::<f64>();
        let got = exact_tv(&Uniform(4), &inst, &f, DEFAULT_TV_CAP, Execution::Parallel).unwrap();
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn fcs_full_subset_equals_exact_tv() {
        let inst = ProblemInstance::new(7, 3).unwrap();
        let f = CoverageReward::new(&path_graph(7));
        let p = random_policy(7, 2);
        let all: Vec<StateSet> = inst.terminating_states(u64::MAX).unwrap().collect();
        let a = fcs_on_subset(&p, &f, &all).unwrap();
        let b = exact_tv(&p, &inst, &f, DEFAULT_TV_CAP, Execution::Parallel).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn fcs_in_unit_interval() {
        let inst = ProblemInstance::new(8, 3).unwrap();
        let f = CoverageReward::new(&path_graph(8));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = FcsConfig {
            forward_samples: 16,
            backward_samples: 4,
            epochs: 3,
        };
        for seed in 0..100 {
            let p = random_policy(8, seed);
            let v = fcs(&p, &inst, &f, &cfg, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn fcs_of_exact_policy_is_zero_for_constant_reward() {
        let inst = ProblemInstance::new(8, 3).unwrap();
        let f = ConstantReward::new(8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = fcs(&Uniform(8), &inst, &f, &FcsConfig::default(), &mut rng).unwrap();
        assert!(v < 1e-12);
    }

    #[test]
    fn top_k_examples() {
        let inst = ProblemInstance::new(6, 2).unwrap();
        let mut ledger = ObservationLedger::new(&inst);
        assert_eq!(top_k_avg(&ledger, 2), Err(MetricsError::NoObservations));
        for (x, r) in [([0, 1], 0.2), ([2, 3], 0.5), ([4, 5], 0.9)] {
            ledger.insert(&StateSet::from_elements(6, x), r).unwrap();
        }
        let t = top_k_avg(&ledger, 2).unwrap();
        assert!((t.value - 0.7).abs() < 1e-15 && !t.under_k);
        assert_eq!(top_k_avg(&ledger, 1).unwrap().value, ledger.best_terminal_reward());
        let t = top_k_avg(&ledger, 5).unwrap();
        assert!(t.under_k && (t.value - 1.6 / 3.0).abs() < 1e-15);
        assert_eq!(top_k_avg(&ledger, 0), Err(MetricsError::ZeroK));
    }

    #[test]
    fn csv_row_leaves_missing_values_empty() {
        let r = MetricsRecord {
            step: 3,
            phase: Phase::Transition,
            queries_used: 10,
            loss: 0.5,
            fcs: None,
            exact_tv: Some(0.25),
            top_k_avg: None,
            num_bounds: 4,
            coverage: 2,
        };
        assert_eq!(r.to_csv_row(), "3,transition,10,0.5,,0.25,,4,2");
    }
}
