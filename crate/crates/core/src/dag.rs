//! The set-construction DAG: problem instances, states, trajectories, and
//! exhaustive enumeration for small instances.
//!
//! A state is the set of elements chosen so far. Every action adds one element
//! that is not yet in the state, and a state with exactly `C` elements is
//! terminating. Trajectories record the order in which elements were added;
//! states do not.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use smallvec::SmallVec;
use thiserror::Error;

/// Dense element index in `0..N`.
pub type Element = usize;

/// Default refusal threshold for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("cardinality {cardinality} is invalid for {num_elements} elements")]
    InvalidCardinality {
        num_elements: usize,
        cardinality: usize,
    },
    #[error("state of size {size} is terminating and cannot be extended")]
    Terminating { size: usize },
    #[error("enumeration of {count} items exceeds the cap of {cap}")]
    CapExceeded { count: String, cap: u64 },
    #[error("element {element} is out of range for {num_elements} elements")]
    ElementOutOfRange { element: usize, num_elements: usize },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
}

/// `N` elements and cardinality constraint `C`, with `C <= N/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ProblemInstance {
    num_elements: usize,
    cardinality: usize,
}

impl ProblemInstance {
    pub fn new(num_elements: usize, cardinality: usize) -> Result<Self, DagError> {
        if cardinality == 0 || 2 * cardinality > num_elements {
            return Err(DagError::InvalidCardinality {
                num_elements,
                cardinality,
            });
        }
        Ok(Self {
            num_elements,
            cardinality,
        })
    }

    /// Accepts any `1 <= C <= N`. Only for counting and enumeration; the
    /// bound probabilities and training assume `C <= N/2`.
    pub fn unrestricted(num_elements: usize, cardinality: usize) -> Result<Self, DagError> {
        if cardinality == 0 || cardinality > num_elements {
            return Err(DagError::InvalidCardinality {
                num_elements,
                cardinality,
            });
        }
        Ok(Self {
            num_elements,
            cardinality,
        })
    }

    /// `N`.
    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    /// `C`.
    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    /// `K = C - 1`, the size of a parent of a terminating state.
    pub fn parent_size(&self) -> usize {
        self.cardinality - 1
    }

    pub fn empty_state(&self) -> StateSet {
        StateSet::empty(self.num_elements)
    }

    pub fn is_terminating(&self, state: &StateSet) -> bool {
        state.len() == self.cardinality
    }

    /// Elements that can still be added to `state`.
    pub fn available_actions(&self, state: &StateSet) -> Result<Vec<Element>, DagError> {
        let size = state.len();
        if size >= self.cardinality {
            return Err(DagError::Terminating { size });
        }
        Ok((0..self.num_elements).filter(|&a| !state.contains(a)).collect())
    }

    /// `N! / (N - C)!`, the number of trajectories.
    pub fn count_trajectories(&self) -> BigUint {
        falling_factorial(self.num_elements, self.cardinality)
    }

    /// `binom(N, C)`, the number of terminating states.
    pub fn count_terminating_states(&self) -> BigUint {
        binomial(self.num_elements, self.cardinality)
    }

    /// Iterates all terminating states in lexicographic order of their sorted members.
    pub fn terminating_states(&self, cap: u64) -> Result<TerminatingStates, DagError> {
        check_cap(&self.count_terminating_states(), cap)?;
        Ok(TerminatingStates {
            num_elements: self.num_elements,
            current: Some((0..self.cardinality).collect()),
        })
    }

    /// Iterates all trajectories (ordered `C`-permutations) in lexicographic order.
    pub fn trajectories(&self, cap: u64) -> Result<Trajectories, DagError> {
        check_cap(&self.count_trajectories(), cap)?;
        Ok(Trajectories {
            num_elements: self.num_elements,
            cardinality: self.cardinality,
            perm: (0..self.num_elements).collect(),
            done: false,
        })
    }
}

fn check_cap(count: &BigUint, cap: u64) -> Result<(), DagError> {
    match count.to_u64() {
        Some(c) if c <= cap => Ok(()),
        _ => Err(DagError::CapExceeded {
            count: count.to_string(),
            cap,
        }),
    }
}

/// `n (n-1) ... (n-k+1)`.
pub fn falling_factorial(n: usize, k: usize) -> BigUint {
    let mut acc = BigUint::one();
    for i in 0..k {
        if i >= n {
            return BigUint::default();
        }
        acc *= (n - i) as u64;
    }
    acc
}

pub fn factorial(n: usize) -> BigUint {
    falling_factorial(n, n)
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::default();
    }
    let k = k.min(n - k);
    falling_factorial(n, k) / factorial(k)
}

/// A set of element indices stored as a fixed-width bit set.
///
/// Equality and hashing are set semantics; insertion order is irrelevant.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateSet {
    words: SmallVec<[u64; 2]>,
}

impl StateSet {
    pub fn empty(num_elements: usize) -> Self {
        let n_words = num_elements.div_ceil(64).max(1);
        Self {
            words: SmallVec::from_elem(0, n_words),
        }
    }

    pub fn from_elements<I>(num_elements: usize, elements: I) -> Self
    where
        I: IntoIterator<Item = Element>,
    {
        let mut s = Self::empty(num_elements);
        for e in elements {
            s.insert(e);
        }
        s
    }

    #[inline]
    pub fn contains(&self, element: Element) -> bool {
        self.words
            .get(element / 64)
            .is_some_and(|w| w & (1u64 << (element % 64)) != 0)
    }

    /// Returns `true` if the element was not already present.
    #[inline]
    pub fn insert(&mut self, element: Element) -> bool {
        let w = &mut self.words[element / 64];
        let bit = 1u64 << (element % 64);
        let fresh = *w & bit == 0;
        *w |= bit;
        fresh
    }

    #[inline]
    pub fn remove(&mut self, element: Element) -> bool {
        let w = &mut self.words[element / 64];
        let bit = 1u64 << (element % 64);
        let present = *w & bit != 0;
        *w &= !bit;
        present
    }

    pub fn with(&self, element: Element) -> Self {
        let mut s = self.clone();
        s.insert(element);
        s
    }

    pub fn without(&self, element: Element) -> Self {
        let mut s = self.clone();
        s.remove(element);
        s
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.words
            .iter()
            .zip(other.words.iter())
            .all(|(a, b)| a & !b == 0)
    }

    pub fn is_proper_subset(&self, other: &StateSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn union_with(&mut self, other: &StateSet) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a |= *b;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Members in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = Element> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let tz = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + tz)
                }
            })
        })
    }

    pub fn to_vec(&self) -> Vec<Element> {
        self.iter().collect()
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for StateSet {
    /// Space-separated sorted members.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for e in self.iter() {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{e}")?;
            first = false;
        }
        Ok(())
    }
}

/// Ordered element additions from the empty set to a terminating state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Trajectory {
    num_elements: usize,
    additions: Vec<Element>,
}

impl Trajectory {
    pub fn new(instance: &ProblemInstance, additions: Vec<Element>) -> Result<Self, DagError> {
        let n = instance.num_elements();
        if additions.len() != instance.cardinality() {
            return Err(DagError::InvalidTrajectory(format!(
                "expected {} additions, got {}",
                instance.cardinality(),
                additions.len()
            )));
        }
        let mut seen = StateSet::empty(n);
        for &a in &additions {
            if a >= n {
                return Err(DagError::ElementOutOfRange {
                    element: a,
                    num_elements: n,
                });
            }
            if !seen.insert(a) {
                return Err(DagError::InvalidTrajectory(format!(
                    "element {a} added twice"
                )));
            }
        }
        Ok(Self {
            num_elements: n,
            additions,
        })
    }

    pub fn additions(&self) -> &[Element] {
        &self.additions
    }

    pub fn len(&self) -> usize {
        self.additions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.additions.is_empty()
    }

    pub fn terminal(&self) -> StateSet {
        StateSet::from_elements(self.num_elements, self.additions.iter().copied())
    }

    /// The `C + 1` states `s_0 = {} ⊂ s_1 ⊂ ... ⊂ s_C`.
    pub fn prefixes(&self) -> Vec<StateSet> {
        let mut out = Vec::with_capacity(self.additions.len() + 1);
        let mut s = StateSet::empty(self.num_elements);
        out.push(s.clone());
        for &a in &self.additions {
            s.insert(a);
            out.push(s.clone());
        }
        out
    }

    /// Prefix of length `t` as a state.
    pub fn prefix(&self, t: usize) -> StateSet {
        StateSet::from_elements(self.num_elements, self.additions[..t].iter().copied())
    }
}

/// Lexicographic iterator over `C`-subsets.
#[derive(Debug, Clone)]
pub struct TerminatingStates {
    num_elements: usize,
    current: Option<Vec<Element>>,
}

impl Iterator for TerminatingStates {
    type Item = StateSet;

    fn next(&mut self) -> Option<StateSet> {
        let comb = self.current.take()?;
        let out = StateSet::from_elements(self.num_elements, comb.iter().copied());
        let mut next = comb;
        if next_combination(&mut next, self.num_elements) {
            self.current = Some(next);
        }
        Some(out)
    }
}

/// Advances a sorted combination to its lexicographic successor.
pub fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Lexicographic iterator over ordered `C`-permutations.
#[derive(Debug, Clone)]
pub struct Trajectories {
    num_elements: usize,
    cardinality: usize,
    perm: Vec<Element>,
    done: bool,
}

impl Iterator for Trajectories {
    type Item = Trajectory;

    fn next(&mut self) -> Option<Trajectory> {
        if self.done {
            return None;
        }
        let out = Trajectory {
            num_elements: self.num_elements,
            additions: self.perm[..self.cardinality].to_vec(),
        };
        // The suffix is ascending after each step; reversing it makes the
        // next full permutation change the prefix.
        self.perm[self.cardinality..].reverse();
        if !next_permutation(&mut self.perm) {
            self.done = true;
        }
        Some(out)
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Binomial coefficients and the colexicographic ranking of `k`-subsets.
///
/// `rank(c_0 < c_1 < ... < c_{k-1}) = sum_i binom(c_i, i + 1)` maps the
/// `k`-subsets of `0..n` bijectively onto `0..binom(n, k)`.
#[derive(Debug, Clone)]
pub struct SubsetRanker {
    n: usize,
    max_k: usize,
    // table[i][j] = binom(i, j), saturating
    table: Vec<Vec<u64>>,
}

impl SubsetRanker {
    pub fn new(n: usize, max_k: usize) -> Self {
        let mut table = vec![vec![0u64; max_k + 2]; n + 1];
        for i in 0..=n {
            table[i][0] = 1;
            for j in 1..=(max_k + 1).min(i) {
                let a = table[i - 1][j - 1];
                let b = if j < i { table[i - 1][j] } else { 0 };
                table[i][j] = a.saturating_add(b);
            }
        }
        Self { n, max_k, table }
    }

    pub fn binom(&self, n: usize, k: usize) -> u64 {
        if k > n {
            0
        } else {
            self.table[n][k]
        }
    }

    pub fn count(&self, k: usize) -> u64 {
        self.binom(self.n, k)
    }

    /// Rank of a sorted subset.
    pub fn rank(&self, sorted: &[usize]) -> u64 {
        sorted
            .iter()
            .enumerate()
            .map(|(i, &c)| self.binom(c, i + 1))
            .sum()
    }

    /// Rank of `sorted ∪ {a}` for `a` not in `sorted`.
    pub fn rank_with(&self, sorted: &[usize], a: usize) -> u64 {
        let mut r = 0;
        let mut pos = 0;
        let mut placed = false;
        for &c in sorted {
            if !placed && a < c {
                r += self.binom(a, pos + 1);
                pos += 1;
                placed = true;
            }
            r += self.binom(c, pos + 1);
            pos += 1;
        }
        if !placed {
            r += self.binom(a, pos + 1);
        }
        r
    }

    /// Inverse of [`rank`](Self::rank) for subsets of size `k`.
    pub fn unrank(&self, mut rank: u64, k: usize) -> Vec<usize> {
        debug_assert!(k <= self.max_k + 1);
        let mut out = vec![0; k];
        let mut hi = self.n;
        for i in (0..k).rev() {
            // largest c < hi with binom(c, i + 1) <= rank
            let mut c = hi - 1;
            while self.binom(c, i + 1) > rank {
                c -= 1;
            }
            out[i] = c;
            rank -= self.binom(c, i + 1);
            hi = c;
        }
        out
    }
}

/// Advances a sorted combination to its colexicographic successor.
pub fn next_colex(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    if k == 0 {
        return false;
    }
    for i in 0..k {
        let limit = if i + 1 < k { comb[i + 1] } else { n };
        if comb[i] + 1 < limit {
            comb[i] += 1;
            for (j, c) in comb.iter_mut().enumerate().take(i) {
                *c = j;
            }
            return true;
        }
    }
    false
}
