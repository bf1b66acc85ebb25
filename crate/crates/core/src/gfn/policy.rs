//! Mean-pooled set encoder with a two-layer perceptron head.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::dag::StateSet;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("state of size {size} is terminating")]
    Terminating { size: usize },
    #[error("no available actions")]
    NoActions,
    #[error("state {to} is not a one-element removal from {from}")]
    NotParent { from: String, to: String },
    #[error("non-positive training signal {0}")]
    NonPositiveSignal(f64),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("parameter length {got} does not match shape ({expected})")]
    ParamLength { expected: usize, got: usize },
}

/// Anything that can give forward transition probabilities.
pub trait ForwardModel: Sync {
    fn num_elements(&self) -> usize;

    /// Length-`N` vector; zero on members of `state`, sums to one otherwise.
    fn action_probs(&self, state: &StateSet) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyShape {
    pub num_elements: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    /// Width of the fixed per-element feature channel (0 or more).
    pub feature_dim: usize,
}

impl PolicyShape {
    fn input_dim(&self) -> usize {
        self.embedding_dim + self.feature_dim
    }

    /// Offsets of `emb, w1, b1, w2, b2` and the total length.
    fn layout(&self) -> [usize; 6] {
        let n = self.num_elements;
        let (d, h, i) = (self.embedding_dim, self.hidden_dim, self.input_dim());
        let emb = 0;
        let w1 = emb + n * d;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + n * h;
        let end = b2 + n;
        [emb, w1, b1, w2, b2, end]
    }

    pub fn num_params(&self) -> usize {
        self.layout()[5]
    }
}

/// Forward policy parameters plus `log Z`.
///
/// Flat layout: element embeddings `N×D`, `W1` `H×(D+F)`, `b1` `H`, `W2` `N×H`,
/// `b2` `N`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    shape: PolicyShape,
    params: Vec<f64>,
    log_z: f64,
    features: Vec<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Policy {
    /// Random embeddings and first layer, zero output layer (uniform policy).
    pub fn new<R: Rng + ?Sized>(shape: PolicyShape, features: Option<Vec<f64>>, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape, features);
        let [emb, w1, b1, _, _, _] = shape.layout();
        let s_emb = 1.0 / (shape.embedding_dim.max(1) as f64).sqrt();
        for v in &mut p.params[emb..w1] {
            *v = rng.gen_range(-s_emb..s_emb);
        }
        let s_w1 = 1.0 / (shape.input_dim().max(1) as f64).sqrt();
        for v in &mut p.params[w1..b1] {
            *v = rng.gen_range(-s_w1..s_w1);
        }
        p
    }

    pub fn zeros(shape: PolicyShape, features: Option<Vec<f64>>) -> Self {
        let features = features.unwrap_or_else(|| vec![0.0; shape.num_elements * shape.feature_dim]);
        assert_eq!(features.len(), shape.num_elements * shape.feature_dim);
        Self {
            shape,
            params: vec![0.0; shape.num_params()],
            log_z: 0.0,
            features,
        }
    }

    pub fn from_parts(shape: PolicyShape, params: Vec<f64>, log_z: f64, features: Vec<f64>) -> Result<Self, PolicyError> {
        if params.len() != shape.num_params() {
            return Err(PolicyError::ParamLength {
                expected: shape.num_params(),
                got: params.len(),
            });
        }
        if features.len() != shape.num_elements * shape.feature_dim {
            return Err(PolicyError::ParamLength {
                expected: shape.num_elements * shape.feature_dim,
                got: features.len(),
            });
        }
        Ok(Self {
            shape,
            params,
            log_z,
            features,
        })
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn set_log_z(&mut self, v: f64) {
        self.log_z = v;
    }

    pub(crate) fn forward(&self, state: &StateSet) -> Activations {
        let sh = &self.shape;
        let (n, d, h, f) = (sh.num_elements, sh.embedding_dim, sh.hidden_dim, sh.feature_dim);
        let i_dim = sh.input_dim();
        let [emb, w1, b1, w2, b2, _] = sh.layout();
        let p = &self.params;

        let mut input = vec![0.0; i_dim];
        let size = state.len();
        if size > 0 {
            for e in state.iter() {
                let row = &p[emb + e * d..emb + (e + 1) * d];
                for (x, r) in input[..d].iter_mut().zip(row) {
                    *x += r;
                }
                for (x, r) in input[d..].iter_mut().zip(&self.features[e * f..(e + 1) * f]) {
                    *x += r;
                }
            }
            let inv = 1.0 / size as f64;
            input.iter_mut().for_each(|x| *x *= inv);
        }

        let mut pre = vec![0.0; h];
        for (j, out) in pre.iter_mut().enumerate() {
            let row = &p[w1 + j * i_dim..w1 + (j + 1) * i_dim];
            *out = p[b1 + j] + row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>();
        }
        let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();

        let mut logits = vec![f64::NEG_INFINITY; n];
        let mut max = f64::NEG_INFINITY;
        for (a, l) in logits.iter_mut().enumerate() {
            if state.contains(a) {
                continue;
            }
            let row = &p[w2 + a * h..w2 + (a + 1) * h];
            *l = p[b2 + a] + row.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>();
            max = max.max(*l);
        }
        let mut probs = vec![0.0; n];
        let mut total = 0.0;
        for (pr, &l) in probs.iter_mut().zip(&logits) {
            if l.is_finite() {
                *pr = (l - max).exp();
                total += *pr;
            }
        }
        probs.iter_mut().for_each(|x| *x /= total);
        Activations {
            input,
            pre,
            hidden,
            probs,
        }
    }

    /// Checked variant of [`ForwardModel::action_probs`].
    pub fn forward_policy(&self, state: &StateSet, cardinality: usize) -> Result<Vec<f64>, PolicyError> {
        if state.len() >= cardinality {
            return Err(PolicyError::Terminating { size: state.len() });
        }
        if state.len() >= self.shape.num_elements {
            return Err(PolicyError::NoActions);
        }
        Ok(self.forward(state).probs)
    }

    /// Accumulates `scale * d log P_F(action | state) / dθ` into `grad`.
    pub(crate) fn accumulate_logprob_grad(&self, state: &StateSet, action: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let act = self.forward(state);
        let sh = &self.shape;
        let (n, d, h) = (sh.num_elements, sh.embedding_dim, sh.hidden_dim);
        let i_dim = sh.input_dim();
        let [emb, w1, b1, w2, b2, _] = sh.layout();
        let p = &self.params;

        // d log softmax_a / d logit_j = [j == a] - p_j on available j
        let mut g_hidden = vec![0.0; h];
        for j in 0..n {
            if state.contains(j) {
                continue;
            }
            let g = scale * ((j == action) as u8 as f64 - act.probs[j]);
            if g == 0.0 {
                continue;
            }
            grad[b2 + j] += g;
            let row = w2 + j * h;
            for k in 0..h {
                grad[row + k] += g * act.hidden[k];
                g_hidden[k] += g * p[row + k];
            }
        }
        let mut g_input = vec![0.0; i_dim];
        for k in 0..h {
            if act.pre[k] <= 0.0 {
                continue;
            }
            let g = g_hidden[k];
            grad[b1 + k] += g;
            let row = w1 + k * i_dim;
            for (t, gi) in g_input.iter_mut().enumerate() {
                grad[row + t] += g * act.input[t];
                *gi += g * p[row + t];
            }
        }
        let size = state.len();
        if size > 0 {
            let inv = 1.0 / size as f64;
            for e in state.iter() {
                let row = emb + e * d;
                for t in 0..d {
                    grad[row + t] += g_input[t] * inv;
                }
            }
        }
        act.probs[action].ln()
    }

    /// Text checkpoint: shape line, `log_z`, features, parameters.
    pub fn to_checkpoint(&self) -> String {
        let sh = &self.shape;
        let mut out = String::from("subo-policy v1\n");
        let _ = writeln!(
            out,
            "shape {} {} {} {}",
            sh.num_elements, sh.embedding_dim, sh.hidden_dim, sh.feature_dim
        );
        let _ = writeln!(out, "log_z {:e}", self.log_z);
        let _ = writeln!(out, "features {}", self.features.len());
        for v in &self.features {
            let _ = writeln!(out, "{v:e}");
        }
        let _ = writeln!(out, "params {}", self.params.len());
        for v in &self.params {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, PolicyError> {
        let bad = |m: &str| PolicyError::Checkpoint(m.to_string());
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let mut next = || -> Result<&str, PolicyError> {
            let l = lines.get(pos).copied().ok_or_else(|| bad("truncated"))?;
            pos += 1;
            Ok(l)
        };
        if next()? != "subo-policy v1" {
            return Err(bad("missing header"));
        }
        let ints = |line: &str, name: &str| -> Result<Vec<usize>, PolicyError> {
            let rest = line
                .strip_prefix(name)
                .ok_or_else(|| bad(&format!("expected {name}")))?;
            rest.split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| bad("bad integer")))
                .collect()
        };
        let float = |line: &str| line.trim().parse::<f64>().map_err(|_| bad("bad float"));

        let dims = ints(next()?, "shape")?;
        if dims.len() != 4 {
            return Err(bad("shape needs four integers"));
        }
        let shape = PolicyShape {
            num_elements: dims[0],
            embedding_dim: dims[1],
            hidden_dim: dims[2],
            feature_dim: dims[3],
        };
        let log_z = float(next()?.strip_prefix("log_z").ok_or_else(|| bad("expected log_z"))?)?;
        let n_feat = *ints(next()?, "features")?.first().ok_or_else(|| bad("missing count"))?;
        let features = (0..n_feat).map(|_| float(next()?)).collect::<Result<Vec<_>, _>>()?;
        let n_params = *ints(next()?, "params")?.first().ok_or_else(|| bad("missing count"))?;
        let params = (0..n_params).map(|_| float(next()?)).collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(shape, params, log_z, features)
    }
}

impl ForwardModel for Policy {
    fn num_elements(&self) -> usize {
        self.shape.num_elements
    }

    fn action_probs(&self, state: &StateSet) -> Vec<f64> {
        self.forward(state).probs
    }
}

/// `log P_B(to | from)` for the fixed uniform backward policy.
pub fn backward_policy_logprob(from: &StateSet, to: &StateSet) -> Result<f64, PolicyError> {
    if !(to.is_subset(from) && to.len() + 1 == from.len()) {
        return Err(PolicyError::NotParent {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    Ok(-(from.len() as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(n: usize) -> PolicyShape {
        PolicyShape {
            num_elements: n,
            embedding_dim: 4,
            hidden_dim: 5,
            feature_dim: 1,
        }
    }

    fn random_policy(n: usize, seed: u64) -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut p = Policy::new(shape(n), Some(feats), &mut rng);
        for v in p.params_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        p
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Policy::new(shape(6), None, &mut rng);
        let probs = p.action_probs(&StateSet::empty(6));
        assert!(probs.iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn mask_and_normalization() {
        let p = random_policy(7, 1);
        let s = StateSet::from_elements(7, [2, 5]);
        let probs = p.forward_policy(&s, 3).unwrap();
        assert_eq!(probs[2], 0.0);
        assert_eq!(probs[5], 0.0);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.forward_policy(&StateSet::from_elements(7, [0, 1, 2]), 3).is_err());
    }

    #[test]
    fn permutation_equivariance() {
        let n = 6;
        let p = random_policy(n, 2);
        let perm = [3, 0, 5, 1, 4, 2];
        // build the relabelled policy: element e becomes perm[e]
        let sh = *p.shape();
        let mut q = p.clone();
        let [emb, _, _, w2, b2, _] = sh.layout();
        let (d, h, f) = (sh.embedding_dim, sh.hidden_dim, sh.feature_dim);
        for e in 0..n {
            let t = perm[e];
            q.params[emb + t * d..emb + (t + 1) * d].copy_from_slice(&p.params[emb + e * d..emb + (e + 1) * d]);
            q.params[w2 + t * h..w2 + (t + 1) * h].copy_from_slice(&p.params[w2 + e * h..w2 + (e + 1) * h]);
            q.params[b2 + t] = p.params[b2 + e];
            q.features[t * f..(t + 1) * f].copy_from_slice(&p.features[e * f..(e + 1) * f]);
        }
        let s = StateSet::from_elements(n, [1, 4]);
        let ps = StateSet::from_elements(n, s.iter().map(|e| perm[e]));
        let a = p.action_probs(&s);
        let b = q.action_probs(&ps);
        for e in 0..n {
            assert!((a[e] - b[perm[e]]).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_logprob() {
        let s3 = StateSet::from_elements(5, [0, 1, 2]);
        let s2 = StateSet::from_elements(5, [0, 2]);
        assert!((backward_policy_logprob(&s3, &s2).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        let s1 = StateSet::from_elements(5, [4]);
        assert_eq!(backward_policy_logprob(&s1, &StateSet::empty(5)).unwrap(), 0.0);
        assert!(backward_policy_logprob(&s3, &s1).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut p = random_policy(5, 3);
        p.set_log_z(1.25);
        let text = p.to_checkpoint();
        let q = Policy::from_checkpoint(&text).unwrap();
        assert_eq!(p, q);
        assert!(Policy::from_checkpoint("nonsense").is_err());
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(Policy::from_checkpoint(&truncated).is_err());
    }
}
