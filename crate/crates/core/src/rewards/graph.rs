use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RewardError;

/// Simple undirected graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageGraph {
    adjacency: Vec<Vec<usize>>,
}

impl CoverageGraph {
    /// Builds a graph from an edge list; self-loops and duplicates are dropped.
    pub fn from_edges<I>(num_vertices: usize, edges: I) -> Result<Self, RewardError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut sets = vec![BTreeSet::new(); num_vertices];
        for (u, v) in edges {
            for x in [u, v] {
                if x >= num_vertices {
                    return Err(RewardError::VertexOutOfRange {
                        vertex: x,
                        num_vertices,
                    });
                }
            }
            if u != v {
                sets[u].insert(v);
                sets[v].insert(u);
            }
        }
        Ok(Self {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted open neighborhood.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Edges `(u, v)` with `u < v`, ordered by `v` then `u`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (v, nbrs) in self.adjacency.iter().enumerate() {
            out.extend(nbrs.iter().take_while(|&&u| u < v).map(|&u| (u, v)));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }
}

/// `0 - 1 - ... - (n-1)`.
pub fn path_graph(n: usize) -> CoverageGraph {
    CoverageGraph::from_edges(n, (1..n).map(|v| (v - 1, v))).expect("indices in range")
}

/// Erdős–Rényi `G(n, p)`: every unordered pair independently with probability `p`.
pub fn generate_er(n: usize, edge_prob: f64, seed: u64) -> Result<CoverageGraph, RewardError> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(RewardError::InvalidParameter(format!(
            "edge probability {edge_prob} not in [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(edge_prob) {
                edges.push((u, v));
            }
        }
    }
    CoverageGraph::from_edges(n, edges)
}

/// Barabási–Albert preferential attachment.
///
/// The first `attach_count` vertices form a clique. Each later vertex attaches
/// to `attach_count` distinct earlier vertices, drawn without replacement with
/// probability proportional to current degree (uniformly while all degrees are
/// zero). The result has `binom(m, 2) + m (n - m)` edges.
pub fn generate_ba(n: usize, attach_count: usize, seed: u64) -> Result<CoverageGraph, RewardError> {
    let m = attach_count;
    if m < 1 || m >= n {
        return Err(RewardError::InvalidParameter(format!(
            "attach count {m} must satisfy 1 <= m < n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + m * (n - m));
    // every endpoint of every edge, so a uniform draw is degree-proportional
    let mut targets: Vec<usize> = Vec::new();
    for u in 0..m {
        for v in u + 1..m {
            edges.push((u, v));
            targets.push(u);
            targets.push(v);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for v in m..n {
        chosen.clear();
        if targets.is_empty() {
            let mut pool: Vec<usize> = (0..v).collect();
            pool.shuffle(&mut rng);
            chosen.extend_from_slice(&pool[..m]);
        } else {
            while chosen.len() < m {
                let t = targets[rng.gen_range(0..targets.len())];
                if !chosen.contains(&t) {
                    chosen.push(t);
                }
            }
        }
        for &t in &chosen {
            edges.push((t, v));
            targets.push(t);
            targets.push(v);
        }
    }
    CoverageGraph::from_edges(n, edges)
}

/// Parses a whitespace-separated edge list. Labels are re-indexed densely in
/// order of first appearance; self-loops and duplicate edges are dropped but
/// still introduce their labels.
pub fn parse_edge_list(text: &str) -> Result<CoverageGraph, RewardError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let (a, b) = match (toks.next(), toks.next(), toks.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(RewardError::Parse {
                    line: i + 1,
                    message: format!("expected two labels, got {line:?}"),
                })
            }
        };
        let mut id = |label| {
            let next = index.len();
            *index.entry(label).or_insert(next)
        };
        let u = id(a);
        let v = id(b);
        edges.push((u, v));
    }
    if index.is_empty() {
        return Err(RewardError::Empty);
    }
    CoverageGraph::from_edges(index.len(), edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<CoverageGraph, RewardError> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_list(&text)
}

/// Serializes a graph so that [`parse_edge_list`] reproduces it exactly.
///
/// Edges are written as `u v` lines. When the edge order alone would not
/// introduce vertices as `0, 1, 2, ...` (or some vertex is isolated), the file
/// starts with one `v v` line per vertex to pin the labelling.
pub fn write_edge_list(graph: &CoverageGraph) -> String {
    let edges = graph.edges();
    let mut order = Vec::with_capacity(graph.num_vertices());
    let mut seen = vec![false; graph.num_vertices()];
    for &(u, v) in &edges {
        for x in [u, v] {
            if !seen[x] {
                seen[x] = true;
                order.push(x);
            }
        }
    }
    let natural = order.len() == graph.num_vertices() && order.iter().enumerate().all(|(i, &v)| i == v);
    let mut out = String::new();
    if !natural {
        for v in 0..graph.num_vertices() {
            let _ = writeln!(out, "{v} {v}");
        }
    }
    for (u, v) in edges {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes() {
        assert_eq!(generate_er(10, 0.0, 1).unwrap().num_edges(), 0);
        assert_eq!(generate_er(10, 1.0, 1).unwrap().num_edges(), 45);
        assert!(generate_er(10, 1.5, 1).is_err());
    }

    #[test]
    fn er_deterministic_per_seed() {
        assert_eq!(generate_er(50, 0.1, 7).unwrap(), generate_er(50, 0.1, 7).unwrap());
        assert_ne!(generate_er(50, 0.1, 7).unwrap(), generate_er(50, 0.1, 8).unwrap());
    }

    #[test]
    fn er_mean_edge_count() {
        let n = 1000;
        let p = 0.005;
        let pairs = (n * (n - 1) / 2) as f64;
        let mean = pairs * p;
        let sd = (pairs * p * (1.0 - p)).sqrt();
        let seeds = 100;
        let total: usize = (0..seeds).map(|s| generate_er(n, p, s).unwrap().num_edges()).sum();
        let avg = total as f64 / seeds as f64;
        assert!((avg - mean).abs() < 3.0 * sd / (seeds as f64).sqrt(), "avg {avg}");
    }

    #[test]
    fn ba_edge_count_and_connectivity() {
        let g = generate_ba(100, 3, 5).unwrap();
        assert_eq!(g.num_edges(), 3 + 3 * 97);
        assert!(g.is_connected());
        let g = generate_ba(5, 4, 0).unwrap();
        assert_eq!(g.num_edges(), 6 + 4);
        assert!(g.is_connected());
        let g = generate_ba(20, 1, 2).unwrap();
        assert_eq!(g.num_edges(), 19);
        assert!(g.is_connected());
        assert!(generate_ba(5, 5, 0).is_err());
        assert!(generate_ba(5, 0, 0).is_err());
    }

    #[test]
    fn ba_heavy_tail() {
        for seed in 0..10 {
            let g = generate_ba(1000, 3, seed).unwrap();
            let mut d = g.degrees();
            d.sort_unstable();
            let median = d[d.len() / 2];
            assert!(*d.last().unwrap() > 3 * median, "seed {seed}");
        }
    }

    #[test]
    fn parse_examples() {
        let g = parse_edge_list("0 1\n1 2").unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (3, 2));
        let g = parse_edge_list("# header\n\na b\n# mid\nb c\n").unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (3, 2));
        let g = parse_edge_list("5 7\n7 5\n5 5").unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (2, 1));
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_edge_list(""), Err(RewardError::Empty)));
        assert!(matches!(parse_edge_list("# only\n"), Err(RewardError::Empty)));
        match parse_edge_list("0 1\n2\n") {
            Err(RewardError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_edge_list("0 1 2\n").is_err());
    }

    #[test]
    fn write_round_trip() {
        for g in [
            generate_er(30, 0.1, 4).unwrap(),
            generate_ba(40, 2, 9).unwrap(),
            generate_er(10, 1.0, 0).unwrap(),
            CoverageGraph::from_edges(4, [(2, 3)]).unwrap(),
        ] {
            let text = write_edge_list(&g);
            assert_eq!(parse_edge_list(&text).unwrap(), g);
        }
        assert_eq!(write_edge_list(&generate_er(10, 1.0, 0).unwrap()).lines().count(), 45);
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        std::fs::write(&p, "x y\ny z\n").unwrap();
        let g = load_edge_list(&p).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(load_edge_list(dir.path().join("missing")).is_err());
    }
}
