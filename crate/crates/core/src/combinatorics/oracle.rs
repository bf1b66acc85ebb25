//! Exhaustive classification of every trajectory against a fixed terminal.

use num_bigint::{BigInt, BigUint};

use super::PairingGraphStats;
use crate::dag::{DagError, ProblemInstance};

pub const DEFAULT_ORACLE_CAP: u64 = 100_000;

/// Counts obtained by enumeration, plus shared-vertex edge-pair counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleStats {
    pub stats: PairingGraphStats,
    /// Whether λ, β and φ were identical for every parent (pair).
    pub uniform: bool,
    /// Unordered edge pairs of the two types: same parent sharing a vertex,
    /// and different parents sharing a compatible vertex that avoids every
    /// parent.
    pub typed_shared_pairs: BigUint,
    /// Unordered pairs of distinct edges sharing exactly one trajectory.
    pub single_shared_pairs: BigUint,
    /// Unordered pairs of distinct edges joining the same two trajectories.
    pub double_shared_pairs: BigUint,
}

/// Role of one trajectory relative to `x = {0, ..., C-1}`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Roles {
    /// `Some(a)` if the first `K` additions are `x \ {a}` and it does not end in `x`.
    pub parent_of: Option<usize>,
    /// Bitmask over `a ∈ x`: compatible with parent `x \ {a}`.
    pub compatible: u64,
}

/// Classifies a trajectory against the terminal with sorted members `x`.
/// Bits of `compatible` and the value of `parent_of` index into `x`.
pub(crate) fn classify(additions: &[usize], x: &[usize]) -> Roles {
    let c = x.len();
    let k = c - 1;
    let slot = |e: usize| x.binary_search(&e).ok();
    if additions.iter().all(|&e| slot(e).is_some()) {
        return Roles::default();
    }
    let mut roles = Roles::default();
    let mut seen = 0u64;
    for &e in &additions[..k] {
        match slot(e) {
            Some(i) => {
                roles.compatible |= 1 << i;
                seen |= 1 << i;
            }
            None => return roles,
        }
    }
    // the first K additions all lie in x
    let missing = (0..c).find(|&i| seen >> i & 1 == 0).expect("one element of x is missing");
    roles.parent_of = Some(missing);
    roles
}

/// Enumerates all trajectories and counts, for `x = {0, ..., C-1}`, the
/// parent, compatible, and doubly compatible trajectories together with the
/// edge pairs of the pairing graph that share vertices.
pub fn oracle_pairing_stats(n: usize, c: usize, cap: u64) -> Result<OracleStats, DagError> {
    let inst = ProblemInstance::unrestricted(n, c)?;
    if c > 63 {
        return Err(DagError::InvalidCardinality { num_elements: n, cardinality: c });
    }
    let k = c - 1;
    let mut lambda = vec![0u64; c];
    let mut beta = vec![0u64; c];
    // phi[a][b]: compatible with both, not a parent trajectory
    let mut phi = vec![vec![0u64; c]; c];
    // cross[a][b] = |T_a ∩ T~_b|
    let mut cross = vec![vec![0u64; c]; c];
    let x: Vec<usize> = (0..c).collect();
    let mut roles = Vec::new();
    for t in inst.trajectories(cap)? {
        let r = classify(t.additions(), &x);
        if let Some(a) = r.parent_of {
            lambda[a] += 1;
            for b in 0..c {
                if r.compatible >> b & 1 == 1 {
                    cross[a][b] += 1;
                }
            }
        }
        for a in 0..c {
            if r.compatible >> a & 1 == 1 {
                beta[a] += 1;
                if r.parent_of.is_none() {
                    for b in a + 1..c {
                        if r.compatible >> b & 1 == 1 {
                            phi[a][b] += 1;
                        }
                    }
                }
            }
        }
        if r.parent_of.is_some() || r.compatible != 0 {
            roles.push(r);
        }
    }

    let uniform_vec = |v: &[u64]| v.iter().all(|&x| x == v[0]);
    let phi_values: Vec<u64> = (0..c).flat_map(|a| (a + 1..c).map(move |b| (a, b))).map(|(a, b)| phi[a][b]).collect();
    let uniform = uniform_vec(&lambda) && uniform_vec(&beta) && (phi_values.is_empty() || uniform_vec(&phi_values));

    let alpha: u64 = lambda.iter().sum();
    let edges: u128 = (0..c).map(|a| lambda[a] as u128 * beta[a] as u128).sum();

    let choose2 = |x: u128| if x < 2 { 0 } else { x * (x - 1) / 2 };
    let mut typed: u128 = 0;
    for a in 0..c {
        typed += choose2(lambda[a] as u128) * beta[a] as u128 + choose2(beta[a] as u128) * lambda[a] as u128;
        for b in a + 1..c {
            typed += lambda[a] as u128 * lambda[b] as u128 * phi[a][b] as u128;
        }
    }

    // degree of each trajectory in the labelled edge multigraph
    let mut sum_deg_pairs: u128 = 0;
    for r in &roles {
        let mut deg: u128 = 0;
        if let Some(a) = r.parent_of {
            deg += beta[a] as u128;
        }
        for a in 0..c {
            if r.compatible >> a & 1 == 1 {
                deg += lambda[a] as u128;
            }
        }
        sum_deg_pairs += choose2(deg);
    }
    let mut double: u128 = 0;
    for a in 0..c {
        for b in a + 1..c {
            double += cross[a][b] as u128 * cross[b][a] as u128;
        }
    }
    let single = sum_deg_pairs - 2 * double;

    let stats = PairingGraphStats {
        n,
        c,
        k,
        lambda: BigUint::from(lambda[0]),
        alpha: BigUint::from(alpha),
        beta: BigUint::from(beta[0]),
        phi: BigInt::from(if c >= 2 { phi[0][1] } else { 0 }),
        edge_count: BigUint::from(edges),
    };
    Ok(OracleStats {
        stats,
        uniform,
        typed_shared_pairs: BigUint::from(typed),
        single_shared_pairs: BigUint::from(single),
        double_shared_pairs: BigUint::from(double),
    })
}
