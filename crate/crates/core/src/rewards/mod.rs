//! Submodular set functions, graph construction, and the metered reward oracle.

mod graph;
mod oracle;

use std::fmt::Debug;
use std::sync::Arc;

use thiserror::Error;

use crate::dag::StateSet;

pub use graph::{
    generate_ba, generate_er, load_edge_list, parse_edge_list, path_graph, write_edge_list,
    CoverageGraph,
};
pub use oracle::{OracleError, OraclePhase, RewardOracle};

/// Default floor applied to rewards before taking logs.
pub const DEFAULT_EPSILON_REWARD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("edge list contains no vertices")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("vertex {vertex} out of range for {num_vertices} vertices")]
    VertexOutOfRange { vertex: usize, num_vertices: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A set function over element indices `0..N`.
pub trait SetFunction: Send + Sync + Debug {
    fn num_elements(&self) -> usize;

    fn value(&self, state: &StateSet) -> f64;

    /// Known global maximum of the function, if any.
    fn max_value(&self) -> Option<f64> {
        None
    }
}

impl<T: SetFunction + ?Sized> SetFunction for Arc<T> {
    fn num_elements(&self) -> usize {
        (**self).num_elements()
    }
    fn value(&self, state: &StateSet) -> f64 {
        (**self).value(state)
    }
    fn max_value(&self) -> Option<f64> {
        (**self).max_value()
    }
}

/// Number (or fraction) of vertices adjacent to at least one member of the state.
#[derive(Debug, Clone)]
pub struct CoverageReward {
    num_vertices: usize,
    masks: Vec<StateSet>,
    normalized: bool,
}

impl CoverageReward {
    /// Open-neighborhood coverage normalized by `N`.
    pub fn new(graph: &CoverageGraph) -> Self {
        Self::with_options(graph, false, true)
    }

    /// `closed_neighborhood` lets a vertex cover itself; `normalized = false`
    /// returns raw counts, which keeps all arithmetic exact in `f64`.
    pub fn with_options(graph: &CoverageGraph, closed_neighborhood: bool, normalized: bool) -> Self {
        let n = graph.num_vertices();
        let masks = (0..n)
            .map(|v| {
                let mut m = StateSet::from_elements(n, graph.neighbors(v).iter().copied());
                if closed_neighborhood {
                    m.insert(v);
                }
                m
            })
            .collect();
        Self {
            num_vertices: n,
            masks,
            normalized,
        }
    }

    /// `|union of neighborhoods|`.
    pub fn coverage_count(&self, state: &StateSet) -> usize {
        let mut acc = StateSet::empty(self.num_vertices);
        for v in state.iter() {
            acc.union_with(&self.masks[v]);
        }
        acc.len()
    }
}

impl SetFunction for CoverageReward {
    fn num_elements(&self) -> usize {
        self.num_vertices
    }

    fn value(&self, state: &StateSet) -> f64 {
        let c = self.coverage_count(state) as f64;
        if self.normalized {
            c / self.num_vertices as f64
        } else {
            c
        }
    }

    fn max_value(&self) -> Option<f64> {
        Some(if self.normalized {
            1.0
        } else {
            self.num_vertices as f64
        })
    }
}

/// `R(s) = sum of weights`; submodular with equality.
#[derive(Debug, Clone)]
pub struct ModularReward {
    weights: Vec<f64>,
}

impl ModularReward {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }
}

impl SetFunction for ModularReward {
    fn num_elements(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, state: &StateSet) -> f64 {
        state.iter().map(|v| self.weights[v]).sum()
    }
}

/// The same value on every state.
#[derive(Debug, Clone)]
pub struct ConstantReward {
    num_elements: usize,
    value: f64,
}

impl ConstantReward {
    pub fn new(num_elements: usize, value: f64) -> Self {
        Self {
            num_elements,
            value,
        }
    }
}

impl SetFunction for ConstantReward {
    fn num_elements(&self) -> usize {
        self.num_elements
    }

    fn value(&self, _state: &StateSet) -> f64 {
        self.value
    }

    fn max_value(&self) -> Option<f64> {
        Some(self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(n: usize, e: &[usize]) -> StateSet {
        StateSet::from_elements(n, e.iter().copied())
    }

    #[test]
    fn path_graph_coverage() {
        let g = path_graph(4);
        let r = CoverageReward::new(&g);
        assert_eq!(r.value(&set(4, &[1])), 0.5);
        assert_eq!(r.value(&set(4, &[1, 2])), 1.0);
        assert_eq!(r.value(&set(4, &[])), 0.0);
        assert_eq!(r.value(&set(4, &[0])), 0.25);
    }

    #[test]
    fn closed_neighborhood_counts_self() {
        let g = path_graph(4);
        let r = CoverageReward::with_options(&g, true, false);
        assert_eq!(r.value(&set(4, &[0])), 2.0);
        assert_eq!(r.value(&set(4, &[1])), 3.0);
    }

    #[test]
    fn full_set_of_connected_graph_covers_everything() {
        for seed in 0..5 {
            let g = generate_ba(30, 2, seed).unwrap();
            let r = CoverageReward::new(&g);
            assert_eq!(r.value(&set(30, &(0..30).collect::<Vec<_>>())), 1.0);
        }
    }

    #[test]
    fn coverage_is_monotone_and_submodular() {
        let g = generate_er(16, 0.25, 3).unwrap();
        let r = CoverageReward::with_options(&g, false, false);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let small: Vec<usize> = (0..16).filter(|_| rng.gen_bool(0.2)).collect();
            let mut big = set(16, &small);
            for v in 0..16 {
                if rng.gen_bool(0.2) {
                    big.insert(v);
                }
            }
            let s = set(16, &small);
            let a = rng.gen_range(0..16);
            if big.contains(a) {
                continue;
            }
            assert!(r.value(&s) <= r.value(&big));
            let gain_s = r.value(&s.with(a)) - r.value(&s);
            let gain_big = r.value(&big.with(a)) - r.value(&big);
            assert!(gain_s >= gain_big);
        }
    }

    #[test]
    fn modular_and_constant() {
        let m = ModularReward::new(vec![1.0, 2.0, 4.0]);
        assert_eq!(m.value(&set(3, &[0, 2])), 5.0);
        assert_eq!(m.max_value(), None);
        let c = ConstantReward::new(3, 1.0);
        assert_eq!(c.value(&set(3, &[1])), 1.0);
    }
}
