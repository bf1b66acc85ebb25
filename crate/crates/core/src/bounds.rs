//! Observation ledger and the index of submodular upper bounds.
//!
//! For a terminating state `x`, an element `a ∈ x`, its parent `p = x \ {a}` and
//! any observed `s ⊊ p` whose extension `s ∪ {a}` was also observed,
//! submodularity gives
//!
//! ```text
//! R(x) <= UB(x | s, a) = R(s ∪ {a}) - R(s) + R(p)
//! ```
//!
//! [`BoundIndex`] keeps, for every unobserved `x`, the smallest such value.

use indexmap::{IndexMap, IndexSet};
use rand::Rng;
use thiserror::Error;

use crate::dag::{binomial, Element, ProblemInstance, StateSet, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("state {{{state}}} already recorded with reward {old}, got {new}")]
    Inconsistent { state: String, old: f64, new: f64 },
    #[error("expected {expected} prefix rewards, got {got}")]
    PrefixCount { expected: usize, got: usize },
}

/// Every observed state with its true reward.
#[derive(Debug, Clone)]
pub struct ObservationLedger {
    cardinality: usize,
    observations: IndexMap<StateSet, f64>,
    observed_terminals: IndexSet<StateSet>,
    best_terminal_reward: f64,
}

impl ObservationLedger {
    pub fn new(instance: &ProblemInstance) -> Self {
        Self {
            cardinality: instance.cardinality(),
            observations: IndexMap::new(),
            observed_terminals: IndexSet::new(),
            best_terminal_reward: f64::NEG_INFINITY,
        }
    }

    /// Returns `Ok(true)` if the state was new.
    pub fn insert(&mut self, state: &StateSet, reward: f64) -> Result<bool, BoundsError> {
        if let Some(&old) = self.observations.get(state) {
            if old.to_bits() != reward.to_bits() {
                return Err(BoundsError::Inconsistent {
                    state: state.to_string(),
                    old,
                    new: reward,
                });
            }
            return Ok(false);
        }
        self.observations.insert(state.clone(), reward);
        if state.len() == self.cardinality {
            self.observed_terminals.insert(state.clone());
            self.best_terminal_reward = self.best_terminal_reward.max(reward);
        }
        Ok(true)
    }

    pub fn get(&self, state: &StateSet) -> Option<f64> {
        self.observations.get(state).copied()
    }

    pub fn contains(&self, state: &StateSet) -> bool {
        self.observations.contains_key(state)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn is_terminal_observed(&self, x: &StateSet) -> bool {
        self.observed_terminals.contains(x)
    }

    /// Observed terminating states in observation order.
    pub fn observed_terminals(&self) -> impl ExactSizeIterator<Item = &StateSet> + '_ {
        self.observed_terminals.iter()
    }

    pub fn num_observed_terminals(&self) -> usize {
        self.observed_terminals.len()
    }

    /// Terminal at position `i` of the observation order, with its reward.
    pub fn terminal_at(&self, i: usize) -> Option<(&StateSet, f64)> {
        let x = self.observed_terminals.get_index(i)?;
        Some((x, self.observations[x]))
    }

    pub fn terminal_rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.observed_terminals.iter().map(|x| self.observations[x])
    }

    /// Maximum observed terminal reward, `-inf` before any terminal is seen.
    pub fn best_terminal_reward(&self) -> f64 {
        self.best_terminal_reward
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateSet, f64)> + '_ {
        self.observations.iter().map(|(s, &r)| (s, r))
    }

    /// One line per state: space-separated sorted members, a tab, the reward.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (s, r) in self.iter() {
            out.push_str(&format!("{s}\t{r}\n"));
        }
        out
    }
}

/// The tightest known bound on one terminating state, with its witnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBoundEntry {
    pub terminal: StateSet,
    pub value: f64,
    pub witness_intermediate: StateSet,
    pub witness_action: Element,
    pub witness_parent: StateSet,
}

/// Optimistic partition function and whether every terminal contributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionEstimate {
    pub value: f64,
    pub complete: bool,
}

/// Incrementally maintained upper bounds.
#[derive(Debug, Clone)]
pub struct BoundIndex {
    instance: ProblemInstance,
    clamp_max: Option<f64>,
    tightest: IndexMap<StateSet, UpperBoundEntry>,
    // observed s (|s| < K) with s ∪ {a} observed, keyed by a
    transitions_by_action: Vec<Vec<StateSet>>,
    parents: Vec<StateSet>,
    parents_by_element: Vec<Vec<usize>>,
    derived_total: u64,
}

impl BoundIndex {
    /// `clamp_max`: known maximum of the reward; bounds above it are lowered to it.
    pub fn new(instance: &ProblemInstance, clamp_max: Option<f64>) -> Self {
        let n = instance.num_elements();
        Self {
            instance: *instance,
            clamp_max,
            tightest: IndexMap::new(),
            transitions_by_action: vec![Vec::new(); n],
            parents: Vec::new(),
            parents_by_element: vec![Vec::new(); n],
            derived_total: 0,
        }
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn clamp_max(&self) -> Option<f64> {
        self.clamp_max
    }

    /// Records every prefix of a trajectory; `rewards_by_prefix[t]` is the
    /// reward of the length-`t` prefix. Returns the number of bound entries
    /// created or tightened.
    pub fn record_trajectory(
        &mut self,
        ledger: &mut ObservationLedger,
        trajectory: &Trajectory,
        rewards_by_prefix: &[f64],
    ) -> Result<usize, BoundsError> {
        let prefixes = trajectory.prefixes();
        if rewards_by_prefix.len() != prefixes.len() {
            return Err(BoundsError::PrefixCount {
                expected: prefixes.len(),
                got: rewards_by_prefix.len(),
            });
        }
        let mut changed = 0;
        for (s, &r) in prefixes.iter().zip(rewards_by_prefix) {
            changed += self.observe_state(ledger, s, r)?;
        }
        Ok(changed)
    }

    /// Adds one observation and derives every bound it completes.
    pub fn observe_state(
        &mut self,
        ledger: &mut ObservationLedger,
        state: &StateSet,
        reward: f64,
    ) -> Result<usize, BoundsError> {
        if !ledger.insert(state, reward)? {
            return Ok(0);
        }
        let k = self.instance.parent_size();
        let size = state.len();
        let mut changed = 0;

        if size == self.instance.cardinality() {
            self.tightest.swap_remove(state);
            return Ok(0);
        }

        if size == k {
            let idx = self.parents.len();
            self.parents.push(state.clone());
            for e in state.iter() {
                self.parents_by_element[e].push(idx);
            }
            changed += self.pair_parent(ledger, idx);
        }

        if size <= k && size > 0 {
            // state = s ∪ {a}
            for a in state.iter() {
                let s = state.without(a);
                if ledger.contains(&s) {
                    changed += self.add_transition(ledger, s, a);
                }
            }
        }
        if size < k {
            // state = s, extension observed earlier
            for a in 0..self.instance.num_elements() {
                if !state.contains(a) && ledger.contains(&state.with(a)) {
                    changed += self.add_transition(ledger, state.clone(), a);
                }
            }
        }
        Ok(changed)
    }

    fn add_transition(&mut self, ledger: &ObservationLedger, s: StateSet, a: Element) -> usize {
        let mut changed = 0;
        let candidates: Vec<usize> = match s
            .iter()
            .min_by_key(|&e| self.parents_by_element[e].len())
        {
            Some(e) => self.parents_by_element[e].clone(),
            None => (0..self.parents.len()).collect(),
        };
        for pi in candidates {
            let p = &self.parents[pi];
            if !p.contains(a) && s.is_subset(p) {
                let p = p.clone();
                changed += self.offer(ledger, &s, a, &p);
            }
        }
        self.transitions_by_action[a].push(s);
        changed
    }

    fn pair_parent(&mut self, ledger: &ObservationLedger, pi: usize) -> usize {
        let p = self.parents[pi].clone();
        let mut changed = 0;
        for a in 0..self.instance.num_elements() {
            if p.contains(a) {
                continue;
            }
            let list = std::mem::take(&mut self.transitions_by_action[a]);
            for s in &list {
                if s.is_subset(&p) {
                    changed += self.offer(ledger, s, a, &p);
                }
            }
            self.transitions_by_action[a] = list;
        }
        changed
    }

    /// Bound value from the three ledger rewards, clamped if configured.
    pub fn bound_value(&self, ledger: &ObservationLedger, s: &StateSet, a: Element, p: &StateSet) -> Option<f64> {
        let r_sa = ledger.get(&s.with(a))?;
        let r_s = ledger.get(s)?;
        let r_p = ledger.get(p)?;
        let v = r_sa - r_s + r_p;
        Some(match self.clamp_max {
            Some(m) => v.min(m),
            None => v,
        })
    }

    fn offer(&mut self, ledger: &ObservationLedger, s: &StateSet, a: Element, p: &StateSet) -> usize {
        let x = p.with(a);
        if ledger.is_terminal_observed(&x) {
            return 0;
        }
        let value = self
            .bound_value(ledger, s, a, p)
            .expect("witness states are in the ledger");
        if let Some(cur) = self.tightest.get(&x) {
            if cur.value <= value {
                return 0;
            }
        }
        self.derived_total += 1;
        self.tightest.insert(
            x.clone(),
            UpperBoundEntry {
                terminal: x,
                value,
                witness_intermediate: s.clone(),
                witness_action: a,
                witness_parent: p.clone(),
            },
        );
        1
    }

    pub fn tightest_bound(&self, terminal: &StateSet) -> Option<&UpperBoundEntry> {
        self.tightest.get(terminal)
    }

    /// All current entries in index order.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = &UpperBoundEntry> + '_ {
        self.tightest.values()
    }

    /// Entries with value above the best observed terminal reward when
    /// `filtering` is on; all entries otherwise.
    pub fn active_bounds(&self, ledger: &ObservationLedger, filtering: bool) -> Vec<&UpperBoundEntry> {
        let best = ledger.best_terminal_reward();
        self.tightest
            .values()
            .filter(|e| !filtering || e.value > best)
            .collect()
    }

    /// Draws uniformly from [`active_bounds`](Self::active_bounds).
    pub fn sample_active<R: Rng + ?Sized>(
        &self,
        ledger: &ObservationLedger,
        filtering: bool,
        rng: &mut R,
    ) -> Option<&UpperBoundEntry> {
        let n = self.tightest.len();
        if n == 0 {
            return None;
        }
        if !filtering {
            return self.tightest.get_index(rng.gen_range(0..n)).map(|(_, e)| e);
        }
        let best = ledger.best_terminal_reward();
        for _ in 0..32 {
            let (_, e) = self.tightest.get_index(rng.gen_range(0..n))?;
            if e.value > best {
                return Some(e);
            }
        }
        let active = self.active_bounds(ledger, true);
        if active.is_empty() {
            None
        } else {
            Some(active[rng.gen_range(0..active.len())])
        }
    }

    /// Number of unobserved terminals with at least one bound.
    pub fn coverage_count(&self) -> usize {
        self.tightest.len()
    }

    /// Total number of times an entry was created or tightened.
    pub fn derived_total(&self) -> u64 {
        self.derived_total
    }

    pub fn num_parents(&self) -> usize {
        self.parents.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions_by_action.iter().map(Vec::len).sum()
    }

    /// `sum of UB over bounded terminals + sum of R over observed terminals`.
    pub fn optimistic_partition(&self, ledger: &ObservationLedger) -> PartitionEstimate {
        let value = self.tightest.values().map(|e| e.value).sum::<f64>()
            + ledger.terminal_rewards().sum::<f64>();
        let covered = (self.tightest.len() + ledger.num_observed_terminals()) as u64;
        let total = binomial(self.instance.num_elements(), self.instance.cardinality());
        PartitionEstimate {
            value,
            complete: total == covered.into(),
        }
    }
}

/// Distributions induced by optimistic rewards.
pub mod optimism {
    /// `P(x) = R(x) / Z`.
    pub fn target_distribution(rewards: &[f64]) -> Vec<f64> {
        let z: f64 = rewards.iter().sum();
        rewards.iter().map(|r| r / z).collect()
    }

    /// Replaces `R(x)` by `UB(x)` wherever a bound is given and normalizes by
    /// the optimistic partition function.
    pub fn optimistic_distribution(rewards: &[f64], upper: &[Option<f64>]) -> Vec<f64> {
        let signal: Vec<f64> = rewards
            .iter()
            .zip(upper)
            .map(|(&r, u)| u.unwrap_or(r))
            .collect();
        let z_tilde: f64 = signal.iter().sum();
        signal.iter().map(|s| s / z_tilde).collect()
    }

    /// Optimism gaps `UB(x) - R(x)`, zero where no bound is given.
    pub fn gaps(rewards: &[f64], upper: &[Option<f64>]) -> Vec<f64> {
        rewards
            .iter()
            .zip(upper)
            .map(|(&r, u)| u.map_or(0.0, |u| u - r))
            .collect()
    }

    /// `(1 - P(x)) / P(x) * Δ(x) >= sum_{x' != x} Δ(x')`.
    pub fn oversampling_condition(p: f64, gaps: &[f64], i: usize) -> bool {
        let others: f64 = gaps.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, g)| g).sum();
        (1.0 - p) / p * gaps[i] >= others
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::{path_graph, CoverageReward, ModularReward, SetFunction};

    fn set(n: usize, e: &[usize]) -> StateSet {
        StateSet::from_elements(n, e.iter().copied())
    }

    fn feed(
        index: &mut BoundIndex,
        ledger: &mut ObservationLedger,
        f: &dyn SetFunction,
        inst: &ProblemInstance,
        adds: &[usize],
    ) -> usize {
        let t = Trajectory::new(inst, adds.to_vec()).unwrap();
        let r: Vec<f64> = t.prefixes().iter().map(|s| f.value(s)).collect();
        index.record_trajectory(ledger, &t, &r).unwrap()
    }

    #[test]
    fn two_trajectories_yield_two_bounds() {
        // elements a=0, b=1, c=2 plus extras; C = 3
        let inst = ProblemInstance::new(6, 3).unwrap();
        let f = ModularReward::new(vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]);
        let mut ledger = ObservationLedger::new(&inst);
        let mut index = BoundIndex::new(&inst, None);
        // trajectory through {c}
        feed(&mut index, &mut ledger, &f, &inst, &[2, 3, 4]);
        assert_eq!(index.coverage_count(), 0);
        // trajectory through {a, b}
        feed(&mut index, &mut ledger, &f, &inst, &[0, 1, 5]);
        let x = set(6, &[0, 1, 2]);
        let e = index.tightest_bound(&x).expect("bound on {a,b,c}");
        assert_eq!(e.value, f.value(&set(6, &[2])) - 0.0 + f.value(&set(6, &[0, 1])));
        assert_eq!(e.witness_intermediate, set(6, &[]));
        assert_eq!(e.witness_action, 2);
        // modular rewards make the bound exact
        assert_eq!(e.value, f.value(&x));
    }

    #[test]
    fn minimal_witness_set_gives_one_bound() {
        let inst = ProblemInstance::new(6, 3).unwrap();
        let f = ModularReward::new(vec![1.0; 6]);
        let mut ledger = ObservationLedger::new(&inst);
        let mut index = BoundIndex::new(&inst, None);
        for s in [set(6, &[]), set(6, &[2]), set(6, &[0]), set(6, &[0, 1])] {
            index.observe_state(&mut ledger, &s, f.value(&s)).unwrap();
        }
        assert_eq!(index.coverage_count(), 1);
        assert!(index.tightest_bound(&set(6, &[0, 1, 2])).is_some());
    }

    #[test]
    fn observing_terminal_evicts_bound() {
        let inst = ProblemInstance::new(6, 3).unwrap();
        let f = ModularReward::new(vec![1.0; 6]);
        let mut ledger = ObservationLedger::new(&inst);
        let mut index = BoundIndex::new(&inst, None);
        feed(&mut index, &mut ledger, &f, &inst, &[2, 3, 4]);
        feed(&mut index, &mut ledger, &f, &inst, &[0, 1, 5]);
        // {0,1,2} via (∅, 2) and {0,2,3} via (∅, 0)
        assert_eq!(index.coverage_count(), 2);
        feed(&mut index, &mut ledger, &f, &inst, &[0, 1, 2]);
        assert!(index.tightest_bound(&set(6, &[0, 1, 2])).is_none());
        assert!(index.entries().all(|e| !ledger.is_terminal_observed(&e.terminal)));
    }

    #[test]
    fn inconsistent_reinsertion_is_an_error() {
        let inst = ProblemInstance::new(4, 2).unwrap();
        let mut ledger = ObservationLedger::new(&inst);
        let s = set(4, &[1]);
        assert!(ledger.insert(&s, 0.5).unwrap());
        assert!(!ledger.insert(&s, 0.5).unwrap());
        assert!(ledger.insert(&s, 0.6).is_err());
    }

    #[test]
    fn best_terminal_reward_tracks_max() {
        let inst = ProblemInstance::new(4, 2).unwrap();
        let mut ledger = ObservationLedger::new(&inst);
        assert_eq!(ledger.best_terminal_reward(), f64::NEG_INFINITY);
        ledger.insert(&set(4, &[0]), 9.0).unwrap();
        assert_eq!(ledger.best_terminal_reward(), f64::NEG_INFINITY);
        ledger.insert(&set(4, &[0, 1]), 0.4).unwrap();
        ledger.insert(&set(4, &[2, 1]), 0.7).unwrap();
        ledger.insert(&set(4, &[2, 3]), 0.1).unwrap();
        assert_eq!(ledger.best_terminal_reward(), 0.7);
    }

    #[test]
    fn tightest_keeps_minimum_and_first_witness() {
        let inst = ProblemInstance::new(6, 3).unwrap();
        let mut ledger = ObservationLedger::new(&inst);
        let mut index = BoundIndex::new(&inst, None);
        let obs = [
            (set(6, &[]), 0.0),
            (set(6, &[0, 1]), 0.5),
            (set(6, &[2]), 0.4), // UB({0,1,2}|∅,2) = 0.9
            (set(6, &[0]), 0.3),
            (set(6, &[0, 2]), 0.5), // UB({0,1,2}|{0},2) = 0.5 - 0.3 + 0.5 = 0.7
        ];
        let x = set(6, &[0, 1, 2]);
        let mut seen = Vec::new();
        for (s, r) in obs {
            index.observe_state(&mut ledger, &s, r).unwrap();
            if let Some(e) = index.tightest_bound(&x) {
                seen.push(e.value);
            }
        }
        assert_eq!(seen.first().copied(), Some(0.9));
        assert!((index.tightest_bound(&x).unwrap().value - 0.7).abs() < 1e-12);
        assert!(seen.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn clamping_lowers_to_max() {
        let inst = ProblemInstance::new(4, 2).unwrap();
        let g = path_graph(4);
        let f = CoverageReward::new(&g);
        let mut ledger = ObservationLedger::new(&inst);
        let mut index = BoundIndex::new(&inst, f.max_value());
        feed(&mut index, &mut ledger, &f, &inst, &[1, 0]);
        feed(&mut index, &mut ledger, &f, &inst, &[2, 3]);
        // UB({1,2}|∅,2) = R({2}) + R({1}) = 1.0, clamp keeps 1.0
        // UB({0,2}|∅,0) = 0.25 + 0.5
        for e in index.entries() {
            assert!(e.value <= 1.0);
            assert!(e.value >= f.value(&e.terminal));
        }
    }

    #[test]
    fn active_bounds_filtering() {
        let inst = ProblemInstance::new(6, 3).unwrap();
        let mut ledger = ObservationLedger::new(&inst);
        let mut index = BoundIndex::new(&inst, None);
        for (s, r) in [
            (set(6, &[]), 0.0),
            (set(6, &[0, 1]), 0.5),
            (set(6, &[2]), 0.4),
            (set(6, &[3, 4]), 0.3),
            (set(6, &[5]), 0.4),
        ] {
            index.observe_state(&mut ledger, &s, r).unwrap();
        }
        // bounds: {0,1,2}=0.9, {0,1,5}=0.9, {2,3,4}=0.7, {3,4,5}=0.7
        assert_eq!(index.active_bounds(&ledger, true).len(), 4);
        ledger.insert(&set(6, &[1, 3, 5]), 0.8).unwrap();
        let active = index.active_bounds(&ledger, true);
        assert_eq!(active.len(), 2);
        assert!(active.iter().all(|e| e.value > 0.8));
        assert_eq!(index.active_bounds(&ledger, false).len(), 4);
    }

    #[test]
    fn optimistic_partition_example() {
        // R = (1, 1, 2); x1 bounded by 2, x2 bounded by 1.5, x3 observed.
        let r = [1.0, 1.0, 2.0];
        let ub = [Some(2.0), Some(1.5), None];
        let p = optimism::optimistic_distribution(&r, &ub);
        let z_tilde = 2.0 / p[0];
        assert!((z_tilde - 5.5).abs() < 1e-12);
        assert_eq!(optimism::gaps(&r, &ub), vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn optimistic_partition_all_observed_equals_z() {
        let inst = ProblemInstance::new(4, 2).unwrap();
        let f = CoverageReward::new(&path_graph(4));
        let mut ledger = ObservationLedger::new(&inst);
        let mut index = BoundIndex::new(&inst, None);
        let mut z = 0.0;
        for t in inst.trajectories(u64::MAX).unwrap() {
            let r: Vec<f64> = t.prefixes().iter().map(|s| f.value(s)).collect();
            index.record_trajectory(&mut ledger, &t, &r).unwrap();
        }
        for x in inst.terminating_states(u64::MAX).unwrap() {
            z += f.value(&x);
        }
        let est = index.optimistic_partition(&ledger);
        assert!(est.complete);
        assert_eq!(index.coverage_count(), 0);
        assert!((est.value - z).abs() < 1e-12);
    }
}
