//! Monte Carlo estimates of bound counts under uniform trajectory sampling.

use std::sync::Arc;

use indexmap::IndexSet;
use num_traits::ToPrimitive;
use rand::Rng;

use super::oracle::classify;
use crate::bounds::{BoundIndex, ObservationLedger};
use crate::dag::{DagError, ProblemInstance, StateSet, Trajectory, DEFAULT_ENUMERATION_CAP};
use crate::par::{map_indexed, Execution};
use crate::rewards::{ConstantReward, SetFunction};
use crate::rng::substream;

#[derive(Debug, Clone)]
pub struct McConfig {
    pub n: usize,
    pub c: usize,
    pub m: u64,
    pub repetitions: usize,
    pub seed: u64,
    pub execution: Execution,
    /// Refuse instances with more trajectories than this.
    pub cap: u64,
}

impl McConfig {
    pub fn new(n: usize, c: usize, m: u64, repetitions: usize, seed: u64) -> Self {
        Self {
            n,
            c,
            m,
            repetitions,
            seed,
            execution: Execution::default(),
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Means and standard errors over repetitions.
///
/// `Q` counts the labelled edges `(a, parent trajectory, compatible trajectory)`
/// of the pairing graph of `x = {0, ..., C-1}` among the distinct sampled
/// trajectories. `coverage` counts terminals with at least one such edge;
/// `ledger_coverage` counts unobserved terminals holding a bound in a
/// [`BoundIndex`] fed the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub m: u64,
    pub repetitions: usize,
    pub mean_q: f64,
    pub se_q: f64,
    pub p_positive: f64,
    pub se_p_positive: f64,
    pub mean_coverage: f64,
    pub se_coverage: f64,
    pub mean_ledger_coverage: f64,
}

#[derive(Debug, Clone, Copy)]
struct Rep {
    q: f64,
    positive: f64,
    coverage: f64,
    ledger_coverage: f64,
}

/// Uniform ordered `C`-permutation of `0..N` by a partial Fisher–Yates shuffle.
pub(crate) fn uniform_additions<R: Rng + ?Sized>(n: usize, c: usize, pool: &mut [usize], rng: &mut R) -> Vec<usize> {
    for i in 0..c {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool[..c].to_vec()
}

/// Number of labelled pairing-graph edges on `x` among `trajectories`.
pub(crate) fn edges_on<'a, I>(trajectories: I, x: &[usize]) -> u64
where
    I: IntoIterator<Item = &'a Vec<usize>>,
{
    let c = x.len();
    let mut parents = vec![0u64; c];
    let mut compat = vec![0u64; c];
    for t in trajectories {
        let r = classify(t, x);
        if let Some(a) = r.parent_of {
            parents[a] += 1;
        }
        for (a, slot) in compat.iter_mut().enumerate() {
            if r.compatible >> a & 1 == 1 {
                *slot += 1;
            }
        }
    }
    parents.iter().zip(&compat).map(|(p, q)| p * q).sum()
}

fn one_rep(inst: &ProblemInstance, cfg: &McConfig, rep: usize, reward: &Arc<dyn SetFunction>) -> Rep {
    let (n, c) = (cfg.n, cfg.c);
    let mut rng = substream(cfg.seed, &[cfg.m, rep as u64]);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut distinct: IndexSet<Vec<usize>> = IndexSet::new();
    for _ in 0..cfg.m {
        distinct.insert(uniform_additions(n, c, &mut pool, &mut rng));
    }
    let x0: Vec<usize> = (0..c).collect();
    let q = edges_on(distinct.iter(), &x0);

    let mut ledger = ObservationLedger::new(inst);
    let mut index = BoundIndex::new(inst, None);
    for adds in &distinct {
        let t = Trajectory::new(inst, adds.clone()).expect("sampled trajectory is valid");
        let rewards: Vec<f64> = t.prefixes().iter().map(|s| reward.value(s)).collect();
        index
            .record_trajectory(&mut ledger, &t, &rewards)
            .expect("constant rewards are consistent");
    }
    let ledger_coverage = index.coverage_count();
    let observed: Vec<StateSet> = ledger.observed_terminals().cloned().collect();
    let observed_covered = observed
        .iter()
        .filter(|x| edges_on(distinct.iter(), &x.to_vec()) > 0)
        .count();
    Rep {
        q: q as f64,
        positive: if q > 0 { 1.0 } else { 0.0 },
        coverage: (ledger_coverage + observed_covered) as f64,
        ledger_coverage: ledger_coverage as f64,
    }
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Samples `m` trajectories uniformly with replacement, `repetitions` times.
pub fn mc_bound_experiment(cfg: &McConfig) -> Result<McSummary, DagError> {
    let inst = ProblemInstance::new(cfg.n, cfg.c)?;
    let t = inst.count_trajectories();
    if t.to_u64().is_none_or(|t| t > cfg.cap) {
        return Err(DagError::CapExceeded {
            count: t.to_string(),
            cap: cfg.cap,
        });
    }
    if cfg.m == 0 || cfg.repetitions == 0 {
        return Ok(McSummary {
            m: cfg.m,
            repetitions: cfg.repetitions,
            mean_q: 0.0,
            se_q: 0.0,
            p_positive: 0.0,
            se_p_positive: 0.0,
            mean_coverage: 0.0,
            se_coverage: 0.0,
            mean_ledger_coverage: 0.0,
        });
    }
    let reward: Arc<dyn SetFunction> = Arc::new(ConstantReward::new(cfg.n, 1.0));
    let reps = map_indexed(cfg.execution, cfg.repetitions, |r| one_rep(&inst, cfg, r, &reward));
    let n = reps.len();
    let (mean_q, se_q) = mean_se(reps.iter().map(|r| r.q), n);
    let (p_positive, se_p_positive) = mean_se(reps.iter().map(|r| r.positive), n);
    let (mean_coverage, se_coverage) = mean_se(reps.iter().map(|r| r.coverage), n);
    let (mean_ledger_coverage, _) = mean_se(reps.iter().map(|r| r.ledger_coverage), n);
    Ok(McSummary {
        m: cfg.m,
        repetitions: cfg.repetitions,
        mean_q,
        se_q,
        p_positive,
        se_p_positive,
        mean_coverage,
        se_coverage,
        mean_ledger_coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::expected_q;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn zero_samples_is_all_zero() {
        let s = mc_bound_experiment(&McConfig::new(4, 2, 0, 100, 1)).unwrap();
        assert_eq!(s.mean_q, 0.0);
        assert_eq!(s.p_positive, 0.0);
        assert_eq!(s.mean_coverage, 0.0);
    }

    #[test]
    fn saturation_at_many_samples() {
        let s = mc_bound_experiment(&McConfig::new(4, 2, 120, 200, 2)).unwrap();
        assert!(s.p_positive > 0.99);
        assert!((s.mean_q - 8.0).abs() < 0.1);
    }

    #[test]
    fn deterministic_and_strategy_independent() {
        let mut cfg = McConfig::new(5, 2, 12, 300, 9);
        let a = mc_bound_experiment(&cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let b = mc_bound_experiment(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_q_near_expectation() {
        let s = mc_bound_experiment(&McConfig::new(4, 2, 12, 3000, 4)).unwrap();
        let e = expected_q(4, 2, 12).unwrap();
        assert!((s.mean_q - e).abs() <= 4.0 * s.se_q, "{} vs {e}", s.mean_q);
    }

    #[test]
    fn uniform_sampler_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pool: Vec<usize> = (0..4).collect();
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..12000 {
            *counts.entry(uniform_additions(4, 2, &mut pool, &mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 12);
        assert!(counts.values().all(|&c| (800..1200).contains(&c)));
    }

    #[test]
    fn ledger_bound_matches_graph_edges_for_unobserved_terminal() {
        let inst = ProblemInstance::new(6, 3).unwrap();
        let f = ConstantReward::new(6, 1.0);
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool: Vec<usize> = (0..6).collect();
            let mut distinct: IndexSet<Vec<usize>> = IndexSet::new();
            for _ in 0..10 {
                distinct.insert(uniform_additions(6, 3, &mut pool, &mut rng));
            }
            let mut ledger = ObservationLedger::new(&inst);
            let mut index = BoundIndex::new(&inst, None);
            for adds in &distinct {
                let t = Trajectory::new(&inst, adds.clone()).unwrap();
                let r: Vec<f64> = t.prefixes().iter().map(|s| f.value(s)).collect();
                index.record_trajectory(&mut ledger, &t, &r).unwrap();
            }
            for x in inst.terminating_states(u64::MAX).unwrap() {
                if ledger.is_terminal_observed(&x) {
                    assert!(index.tightest_bound(&x).is_none());
                    continue;
                }
                let graph = edges_on(distinct.iter(), &x.to_vec()) > 0;
                assert_eq!(graph, index.tightest_bound(&x).is_some(), "seed {seed} x {x:?}");
            }
        }
    }
}
