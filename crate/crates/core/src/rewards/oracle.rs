use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use super::SetFunction;
use crate::dag::StateSet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("query budget of {budget} distinct states exhausted")]
    BudgetExhausted { budget: u64 },
    #[error("oracle is offline")]
    Offline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OraclePhase {
    Online,
    Offline,
}

/// Budget-metered, caching access to a reward function.
///
/// Each distinct non-empty state costs one query; cache hits and the empty
/// state are free.
#[derive(Debug)]
pub struct RewardOracle {
    function: Arc<dyn SetFunction>,
    budget: Option<u64>,
    used: u64,
    cache: HashMap<StateSet, f64>,
    phase: OraclePhase,
}

impl RewardOracle {
    /// `budget = None` means unlimited.
    pub fn new(function: Arc<dyn SetFunction>, budget: Option<u64>) -> Self {
        Self {
            function,
            budget,
            used: 0,
            cache: HashMap::new(),
            phase: OraclePhase::Online,
        }
    }

    pub fn query(&mut self, state: &StateSet) -> Result<f64, OracleError> {
        if state.is_empty() {
            return Ok(self.function.value(state));
        }
        if let Some(&r) = self.cache.get(state) {
            return Ok(r);
        }
        if self.phase == OraclePhase::Offline {
            return Err(OracleError::Offline);
        }
        if let Some(budget) = self.budget {
            if self.used >= budget {
                return Err(OracleError::BudgetExhausted { budget });
            }
        }
        let r = self.function.value(state);
        self.used += 1;
        self.cache.insert(state.clone(), r);
        Ok(r)
    }

    /// Cached value without charging or evaluating.
    pub fn cached(&self, state: &StateSet) -> Option<f64> {
        self.cache.get(state).copied()
    }

    pub fn queries_used(&self) -> u64 {
        self.used
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.used))
    }

    pub fn phase(&self) -> OraclePhase {
        self.phase
    }

    pub fn go_offline(&mut self) {
        self.phase = OraclePhase::Offline;
    }

    /// Evaluation-only handle that bypasses metering.
    pub fn unmetered(&self) -> Arc<dyn SetFunction> {
        Arc::clone(&self.function)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::{path_graph, CoverageReward};

    fn oracle(budget: Option<u64>) -> RewardOracle {
        RewardOracle::new(Arc::new(CoverageReward::new(&path_graph(6))), budget)
    }

    fn s(e: &[usize]) -> StateSet {
        StateSet::from_elements(6, e.iter().copied())
    }

    #[test]
    fn cache_hits_are_free() {
        let mut o = oracle(None);
        let a = o.query(&s(&[1])).unwrap();
        let b = o.query(&s(&[1])).unwrap();
        assert_eq!(a, b);
        assert_eq!(o.queries_used(), 1);
    }

    #[test]
    fn empty_state_is_free() {
        let mut o = oracle(Some(0));
        assert_eq!(o.query(&s(&[])).unwrap(), 0.0);
        assert_eq!(o.queries_used(), 0);
    }

    #[test]
    fn budget_exhaustion() {
        let mut o = oracle(Some(2));
        o.query(&s(&[0])).unwrap();
        o.query(&s(&[1])).unwrap();
        assert_eq!(
            o.query(&s(&[2])),
            Err(OracleError::BudgetExhausted { budget: 2 })
        );
        assert_eq!(o.queries_used(), 2);
        // cached states remain available
        assert!(o.query(&s(&[0])).is_ok());
    }

    #[test]
    fn one_trajectory_costs_c_queries() {
        let mut o = oracle(None);
        for prefix in [&[][..], &[3], &[3, 0], &[3, 0, 5]] {
            o.query(&s(prefix)).unwrap();
        }
        assert_eq!(o.queries_used(), 3);
    }

    #[test]
    fn offline_refuses_new_states() {
        let mut o = oracle(None);
        o.query(&s(&[0])).unwrap();
        o.go_offline();
        assert_eq!(o.query(&s(&[1])), Err(OracleError::Offline));
        assert!(o.query(&s(&[0])).is_ok());
    }
}
