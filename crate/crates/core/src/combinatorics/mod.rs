//! Closed-form trajectory counts for the trajectory-pairing graph, the
//! probabilities that bounds appear after `m` uniform samples, and the
//! oracles that check both.
//!
//! Notation: `K = C - 1`, `|T| = N! / (N - C)!`.
//!
//! - `λ`: trajectories through a fixed parent `x \ {a}` not ending in `x`.
//! - `α = C λ`: trajectories through any parent of `x`, not ending in `x`.
//! - `β`: trajectories compatible with a fixed parent.
//! - `φ`: trajectories compatible with two fixed parents that do not pass
//!   through any parent.

mod mc;
mod oracle;

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};

use crate::dag::{binomial, factorial, falling_factorial, DagError, ProblemInstance};

pub use mc::{mc_bound_experiment, McConfig, McSummary};
pub use oracle::{oracle_pairing_stats, OracleStats, DEFAULT_ORACLE_CAP};

/// Exact pairing-graph counts for one `(N, C)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingGraphStats {
    pub n: usize,
    pub c: usize,
    pub k: usize,
    pub lambda: BigUint,
    pub alpha: BigUint,
    pub beta: BigUint,
    pub phi: BigInt,
    pub edge_count: BigUint,
}

// The counting identities hold for any 1 <= C <= N.
fn instance(n: usize, c: usize) -> Result<ProblemInstance, DagError> {
    ProblemInstance::unrestricted(n, c)
}

/// `K! (N - K - 1)`.
pub fn lambda_count(n: usize, c: usize) -> Result<BigUint, DagError> {
    let k = instance(n, c)?.parent_size();
    Ok(factorial(k) * BigUint::from(n - k - 1))
}

/// `(K + 1)! (N - K - 1) = C λ`.
pub fn alpha_count(n: usize, c: usize) -> Result<BigUint, DagError> {
    Ok(lambda_count(n, c)? * BigUint::from(c))
}

/// `N (N-1) ... (N-K+1) - (K + 1)!`.
pub fn beta_count(n: usize, c: usize) -> Result<BigUint, DagError> {
    let k = instance(n, c)?.parent_size();
    Ok(falling_factorial(n, k) - factorial(k + 1))
}

/// `2 (K-1)! [binom(N, K-1) - (N-K) K (K-1) / 2 - K]`, zero for `K = 0`.
pub fn phi_count(n: usize, c: usize) -> Result<BigInt, DagError> {
    let k = instance(n, c)?.parent_size();
    if k == 0 {
        return Ok(BigInt::zero());
    }
    let bracket = BigInt::from(binomial(n, k - 1))
        - BigInt::from((n - k) * k * (k - 1) / 2)
        - BigInt::from(k);
    Ok(BigInt::from(2u32) * BigInt::from(factorial(k - 1)) * bracket)
}

/// The alternative simplified expression
/// `2 prod_{i=0}^{K} (N-i) - K! ((N-K)(K-1) - 2)`, kept only for comparison
/// with [`phi_count`]; the two disagree (e.g. 26 vs 0 at `N = 4, C = 2`).
pub fn phi_final_line(n: usize, c: usize) -> Result<BigInt, DagError> {
    let k = instance(n, c)?.parent_size();
    let prod = BigInt::from(falling_factorial(n, k + 1));
    let inner = BigInt::from(n - k) * BigInt::from(k as i64 - 1) - BigInt::from(2);
    Ok(BigInt::from(2) * prod - BigInt::from(factorial(k)) * inner)
}

pub fn closed_form_stats(n: usize, c: usize) -> Result<PairingGraphStats, DagError> {
    let lambda = lambda_count(n, c)?;
    let alpha = alpha_count(n, c)?;
    let beta = beta_count(n, c)?;
    let edge_count = &alpha * &beta;
    Ok(PairingGraphStats {
        n,
        c,
        k: c - 1,
        lambda,
        alpha,
        beta,
        phi: phi_count(n, c)?,
        edge_count,
    })
}

/// `(K+1) (λ(λ-1)β + β(β-1)λ + K λ² φ)`: ordered pairs of distinct edges
/// sharing a vertex, as counted by the two pair types.
pub fn structural_dependency(n: usize, c: usize) -> Result<BigInt, DagError> {
    let s = closed_form_stats(n, c)?;
    let l = BigInt::from(s.lambda);
    let b = BigInt::from(s.beta);
    let one = BigInt::from(1);
    let k = BigInt::from(s.k);
    let inner = &l * (&l - &one) * &b + &b * (&b - &one) * &l + k * &l * &l * &s.phi;
    Ok(BigInt::from(c) * inner)
}

pub fn num_trajectories(n: usize, c: usize) -> Result<BigUint, DagError> {
    Ok(instance(n, c)?.count_trajectories())
}

fn big_to_f64(x: &BigUint) -> f64 {
    x.to_f64().unwrap_or(f64::INFINITY)
}

/// Probability that `j` specific trajectories all appear among `m` uniform
/// draws (with replacement) from `t` trajectories.
///
/// Evaluated as the `m`-th power of the Markov chain that counts how many of
/// the `j` targets have been seen, which only adds non-negative terms and so
/// stays accurate when `t` is huge and the answer is tiny.
pub fn inclusion_probability(j: usize, m: u64, t: f64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    if (j as f64) > t || m < j as u64 {
        return 0.0;
    }
    let q = 1.0 / t;
    let d = j + 1;
    let mut step = vec![vec![0.0; d]; d];
    for (i, row) in step.iter_mut().enumerate() {
        let left = (j - i) as f64 * q;
        row[i] = 1.0 - left;
        if i + 1 < d {
            row[i + 1] = left;
        }
    }
    let mut acc: Option<Vec<Vec<f64>>> = None;
    let mut e = m;
    while e > 0 {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => step.clone(),
                Some(a) => matmul(&a, &step),
            });
        }
        e >>= 1;
        if e > 0 {
            step = matmul(&step, &step);
        }
    }
    acc.map_or(0.0, |a| a[0][j]).clamp(0.0, 1.0)
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len();
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for k in i..d {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for jj in k..d {
                out[i][jj] += aik * b[k][jj];
            }
        }
    }
    out
}

/// The inclusion–exclusion form `sum_i (-1)^i binom(j, i) (1 - i/t)^m` with
/// each power taken in log space. Loses accuracy to cancellation when the
/// result is much smaller than one.
pub fn inclusion_probability_ie(j: usize, m: u64, t: f64) -> f64 {
    let mut sum = 0.0;
    let mut binom = 1.0;
    for i in 0..=j {
        let term = if i == 0 {
            1.0
        } else if (i as f64) >= t {
            if (i as f64) == t && m == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (m as f64 * (-(i as f64) / t).ln_1p()).exp()
        };
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binom * term;
        binom = binom * (j - i) as f64 / (i + 1) as f64;
    }
    sum
}

/// `E[Q(m)] = α β p_2(m)`.
pub fn expected_q(n: usize, c: usize, m: u64) -> Result<f64, DagError> {
    let s = closed_form_stats(n, c)?;
    let t = big_to_f64(&num_trajectories(n, c)?);
    Ok(big_to_f64(&s.edge_count) * inclusion_probability(2, m, t))
}

/// `ν(m) = (K+1)(λ(λ-1)β + β(β-1)λ + Kλ²φ) p_3(m)`.
pub fn pairwise_dependency(n: usize, c: usize, m: u64) -> Result<f64, DagError> {
    let factor = structural_dependency(n, c)?.to_f64().unwrap_or(f64::INFINITY);
    let t = big_to_f64(&num_trajectories(n, c)?);
    let p3 = inclusion_probability(3, m, t);
    Ok(if p3 == 0.0 { 0.0 } else { factor * p3 })
}

/// `max(0, 1 - min(exp(-μ + ν/2), exp(-μ² / (ν + μ))))`.
pub fn janson_from(mu: f64, nu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let e1 = -mu + nu / 2.0;
    let e2 = -mu * mu / (nu + mu);
    let e = e1.min(e2);
    (-e.exp_m1()).clamp(0.0, 1.0)
}

/// Lower bound on the probability that a fixed terminal has at least one bound.
pub fn janson_lower_bound(n: usize, c: usize, m: u64) -> Result<f64, DagError> {
    Ok(janson_from(expected_q(n, c, m)?, pairwise_dependency(n, c, m)?))
}

/// Janson bound whose dependency sum runs over every dependent pair of edges
/// found by enumeration, including pairs that join the same two trajectories.
pub fn janson_full_dependency(n: usize, c: usize, m: u64, cap: u64) -> Result<f64, DagError> {
    let o = oracle_pairing_stats(n, c, cap)?;
    let t = big_to_f64(&num_trajectories(n, c)?);
    let single = big_to_f64(&o.single_shared_pairs);
    let double = big_to_f64(&o.double_shared_pairs);
    let nu = 2.0 * (single * inclusion_probability(3, m, t) + double * inclusion_probability(2, m, t));
    Ok(janson_from(expected_q(n, c, m)?, nu))
}

/// `binom(N, C)` times the Janson lower bound.
pub fn expected_coverage_lower(n: usize, c: usize, m: u64) -> Result<f64, DagError> {
    let x = big_to_f64(&binomial(n, c));
    Ok(x * janson_lower_bound(n, c, m)?)
}

/// `expected_coverage_lower / (m C)` for each `m`; `None` at `m = 0`.
pub fn coverage_ratio_curve(n: usize, c: usize, ms: &[u64]) -> Result<Vec<(u64, Option<f64>)>, DagError> {
    ms.iter()
        .map(|&m| {
            let ratio = if m == 0 {
                None
            } else {
                Some(expected_coverage_lower(n, c, m)? / (m as f64 * c as f64))
            };
            Ok((m, ratio))
        })
        .collect()
}

/// Asymptotic rate `N (C-1)! (1 - (C-1)/N)^{2(C-1)} (1 - exp(-m / N^C))`.
/// Diagnostic only: it hides constants and is not a numeric bound.
pub fn asymptotic_rate(n: usize, c: usize, m: u64) -> Result<f64, DagError> {
    let k = instance(n, c)?.parent_size();
    let nf = n as f64;
    let kf = factorial(k).to_f64().unwrap_or(f64::INFINITY);
    let base = (1.0 - k as f64 / nf).powi(2 * k as i32);
    let decay = -(-(m as f64) / nf.powi(c as i32)).exp_m1();
    Ok(nf * kf * base * decay)
}

/// Everything needed to evaluate the bound probabilities at one `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundProbabilityReport {
    pub m: u64,
    pub expected_q: f64,
    pub nu: f64,
    pub p_edge: f64,
    pub p_triple: f64,
    pub janson_lower: f64,
    pub expected_coverage_lower: f64,
}

pub fn bound_probability_report(n: usize, c: usize, m: u64) -> Result<BoundProbabilityReport, DagError> {
    let t = big_to_f64(&num_trajectories(n, c)?);
    let expected_q = expected_q(n, c, m)?;
    let nu = pairwise_dependency(n, c, m)?;
    let janson_lower = janson_from(expected_q, nu);
    Ok(BoundProbabilityReport {
        m,
        expected_q,
        nu,
        p_edge: inclusion_probability(2, m, t),
        p_triple: inclusion_probability(3, m, t),
        janson_lower,
        expected_coverage_lower: big_to_f64(&binomial(n, c)) * janson_lower,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_traits::{One, Zero};

    fn u(x: u64) -> BigUint {
        BigUint::from(x)
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(lambda_count(4, 2).unwrap(), u(2));
        assert_eq!(lambda_count(5, 3).unwrap(), u(4));
        assert_eq!(lambda_count(8, 4).unwrap(), u(24));
        assert_eq!(alpha_count(4, 2).unwrap(), u(4));
        assert_eq!(alpha_count(5, 3).unwrap(), u(12));
        assert_eq!(alpha_count(6, 3).unwrap(), u(18));
        assert_eq!(beta_count(4, 2).unwrap(), u(2));
        assert_eq!(beta_count(5, 3).unwrap(), u(14));
        assert_eq!(beta_count(8, 4).unwrap(), u(312));
        assert_eq!(phi_count(4, 2).unwrap(), BigInt::zero());
        assert_eq!(phi_count(6, 3).unwrap(), BigInt::zero());
        assert_eq!(phi_count(7, 4).unwrap(), BigInt::from(24));
        assert_eq!(phi_final_line(4, 2).unwrap(), BigInt::from(26));
    }

    #[test]
    fn n20_values() {
        let s = closed_form_stats(20, 4).unwrap();
        assert_eq!((s.lambda, s.alpha, s.beta), (u(96), u(384), u(6816)));
        assert_eq!(s.phi, BigInt::from(544));
        let s = closed_form_stats(20, 8).unwrap();
        assert_eq!((s.lambda, s.alpha, s.beta), (u(60480), u(483840), u(390660480)));
        assert_eq!(s.phi, BigInt::from(55411200));
    }

    #[test]
    fn invalid_instances_rejected() {
        assert!(lambda_count(3, 4).is_err());
        assert!(phi_count(5, 0).is_err());
    }

    #[test]
    fn structural_factor_n4() {
        assert_eq!(structural_dependency(4, 2).unwrap(), BigInt::from(16));
    }

    /// Exact rational `p_j(m)` by inclusion–exclusion over big integers.
    fn exact_p(j: usize, m: u32, t: u64) -> f64 {
        let tm = BigInt::from(t).pow(m);
        let mut num = BigInt::zero();
        let mut binom = BigInt::one();
        for i in 0..=j {
            let term = BigInt::from(t as i64 - i as i64).pow(m) * &binom;
            if i % 2 == 0 {
                num += term;
            } else {
                num -= term;
            }
            binom = binom * BigInt::from(j - i) / BigInt::from(i + 1);
        }
        // scale to keep 17 significant digits
        let scale = BigInt::from(10u64).pow(30);
        (num * &scale / tm).to_f64().unwrap() / 1e30
    }

    #[test]
    fn inclusion_probability_matches_exact_rationals() {
        for &t in &[12u64, 60, 1680, 1_000_000] {
            for &m in &[0u32, 1, 2, 3, 5, 12, 40, 200] {
                for j in 1..=3 {
                    let want = exact_p(j, m, t);
                    let got = inclusion_probability(j, m as u64, t as f64);
                    assert!(
                        (got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-15,
                        "j={j} m={m} t={t}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn two_evaluation_routes_agree_where_stable() {
        for &t in &[12.0, 120.0, 1680.0] {
            for m in [1u64, 5, 12, 40, 100, 1000] {
                for j in 1..=3 {
                    let a = inclusion_probability(j, m, t);
                    let b = inclusion_probability_ie(j, m, t);
                    assert!((a - b).abs() < 1e-12, "j={j} m={m} t={t}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn huge_trajectory_spaces_stay_accurate() {
        // t = 20!/12!, m = 5: p_2 ≈ binom(5,2) * 2 / t^2
        let t = falling_factorial(20, 8).to_f64().unwrap();
        let p2 = inclusion_probability(2, 5, t);
        let approx = 20.0 / (t * t);
        assert!((p2 / approx - 1.0).abs() < 1e-6);
        // μ ≈ αβ · 20 / t² ≈ 1.5e-4, so the bound is small but positive
        let j = janson_lower_bound(20, 8, 5).unwrap();
        let mu = expected_q(20, 8, 5).unwrap();
        assert!(j > 0.0 && j <= mu, "{j} vs {mu}");
        assert!((mu - 483840.0 * 390660480.0 * 20.0 / (t * t)).abs() < 1e-9);
    }

    #[test]
    fn expected_q_examples() {
        assert_eq!(expected_q(4, 2, 0).unwrap(), 0.0);
        let want = 8.0 * (1.0 - 2.0 * (11f64 / 12.0).powi(12) + (10f64 / 12.0).powi(12));
        assert!((expected_q(4, 2, 12).unwrap() - want).abs() < 1e-12);
        assert!((expected_q(4, 2, 100_000).unwrap() - 8.0).abs() < 1e-9);
        let mut prev = 0.0;
        for m in 0..300 {
            let q = expected_q(6, 3, m).unwrap();
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn dependency_examples() {
        assert_eq!(pairwise_dependency(4, 2, 0).unwrap(), 0.0);
        assert!((pairwise_dependency(4, 2, 1_000_000).unwrap() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn janson_properties() {
        assert_eq!(janson_lower_bound(4, 2, 0).unwrap(), 0.0);
        let j40 = janson_lower_bound(4, 2, 40).unwrap();
        assert!(j40 > 0.0 && j40 < 1.0);
        for (n, c) in [(4, 2), (5, 2), (6, 3), (8, 4)] {
            let mut prev = 0.0;
            for m in 1..=200 {
                let j = janson_lower_bound(n, c, m).unwrap();
                assert!((0.0..=1.0).contains(&j));
                assert!(j >= prev - 1e-15, "n={n} c={c} m={m}");
                prev = j;
            }
        }
        assert_eq!(janson_from(0.0, 5.0), 0.0);
        assert!(janson_from(1e6, 1e3) == 1.0);
    }

    #[test]
    fn coverage_lower_bounded_by_terminal_count() {
        for m in [1, 10, 40, 1000] {
            assert!(expected_coverage_lower(4, 2, m).unwrap() <= 6.0);
        }
        assert_eq!(expected_coverage_lower(4, 2, 0).unwrap(), 0.0);
    }

    #[test]
    fn ratio_curve_shape() {
        let curve = coverage_ratio_curve(100, 5, &[0, 1, 2, 5, 10, 20, 50, 100, 1000]).unwrap();
        assert_eq!(curve[0], (0, None));
        assert!(curve.iter().any(|(_, r)| r.is_some_and(|r| r > 1.0)));
        let far = coverage_ratio_curve(4, 2, &[1_000_000]).unwrap();
        assert!(far[0].1.unwrap() < 1e-5);
    }

    #[test]
    fn asymptotic_rate_is_finite_and_monotone() {
        let a = asymptotic_rate(20, 3, 10).unwrap();
        let b = asymptotic_rate(20, 3, 1000).unwrap();
        assert!(a.is_finite() && b > a);
        assert_eq!(asymptotic_rate(20, 3, 0).unwrap(), 0.0);
    }

    #[test]
    fn report_is_consistent() {
        let r = bound_probability_report(6, 3, 30).unwrap();
        assert!((r.expected_q - 18.0 * (6.0 * 5.0 - 6.0) * r.p_edge).abs() < 1e-9);
        assert!((r.expected_coverage_lower - 20.0 * r.janson_lower).abs() < 1e-12);
        assert!(r.p_triple <= r.p_edge);
    }
}
