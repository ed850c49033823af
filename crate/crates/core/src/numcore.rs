//! Minimal numerical substrate shared by the models: dense row-major
//! matrices, softmax, self-attention pooling, cross-entropy, plain SGD
//! with optional momentum, and a finite-difference gradient checker.
//!
//! Everything is 64-bit. The models are small enough that precision is
//! cheaper than chasing drift.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`. Vectors are stored as `1 x n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * v` where `v` has `cols` entries; returns `rows` entries.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// Rank-one update: `self += scale * u * v^T`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64], scale: f64) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let row = self.row_mut(r);
            for (x, &vc) in row.iter_mut().zip(v) {
                *x += scale * ur * vc;
            }
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable softmax (max subtraction). Entries sum to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-sum-exp that tolerates `-inf` entries (empty mass contributes 0).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Result of attention-pooling a token encoding.
#[derive(Debug, Clone)]
pub struct AttentionPool {
    /// Softmax attention weights over the `n` rows.
    pub weights: Vec<f64>,
    /// Weighted row combination, length `d`.
    pub context: Vec<f64>,
    /// Index of the maximum attention weight (lowest index on ties);
    /// used downstream as the predicted span token.
    pub argmax: usize,
}

/// Pool the rows of `v` (`n x d`) with attention parameter `y` (`d`):
/// `weights = softmax(v y)`, `context = weights^T v`.
pub fn attention_pool(v: &Matrix, y: &[f64]) -> AttentionPool {
    assert!(v.rows() >= 1, "attention over empty encoding");
    let scores = v.matvec(y);
    let weights = softmax(&scores);
    let mut context = vec![0.0; v.cols()];
    for (i, &w) in weights.iter().enumerate() {
        axpy(w, v.row(i), &mut context);
    }
    let argmax = weights
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |best, (i, &w)| if w > best.1 { (i, w) } else { best })
        .0;
    AttentionPool { weights, context, argmax }
}

/// `-ln(pred[gold])`, with `pred[gold]` clamped at `1e-12`.
pub fn cross_entropy(pred: &[f64], gold: usize) -> Result<f64> {
    if gold >= pred.len() {
        return Err(Error::range(format!(
            "cross_entropy class {gold} out of range for {} classes",
            pred.len()
        )));
    }
    Ok(-pred[gold].max(1e-12).ln())
}

/// Gradient of cross-entropy w.r.t. the logits: `probs - onehot(gold)`.
pub fn cross_entropy_logit_grad(probs: &[f64], gold: usize) -> Vec<f64> {
    let mut g = probs.to_vec();
    g[gold] -= 1.0;
    g
}

/// Named parameter tensors with matching gradient tensors.
///
/// Serialization covers the parameters only (the checkpoint format: one
/// JSON document of shape-tagged tensors); gradients are rebuilt on load.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Matrix>,
    #[serde(skip)]
    grads: BTreeMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a parameter initialized to uniform(-r, r) with
    /// r = sqrt(6 / (fan_in + fan_out)), fan_in = cols, fan_out = rows.
    pub fn init_uniform(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        let r = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-r..r)).collect();
        self.insert(name, Matrix::from_vec(rows, cols, data));
    }

    pub fn init_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Matrix::zeros(rows, cols));
    }

    pub fn insert(&mut self, name: &str, m: Matrix) {
        self.grads.insert(name.to_string(), Matrix::zeros(m.rows(), m.cols()));
        self.params.insert(name.to_string(), m);
    }

    pub fn get(&self, name: &str) -> &Matrix {
        self.params.get(name).unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Matrix {
        self.params.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn grad(&self, name: &str) -> &Matrix {
        self.grads.get(name).unwrap_or_else(|| panic!("unknown gradient {name:?}"))
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut Matrix {
        self.grads.get_mut(name).unwrap_or_else(|| panic!("unknown gradient {name:?}"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar parameter count.
    pub fn total_len(&self) -> usize {
        self.params.values().map(|m| m.data().len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Matrix::all_finite)
    }

    /// Rebuild zeroed gradient tensors (needed after deserialization).
    fn ensure_grads(&mut self) {
        for (name, p) in &self.params {
            self.grads
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(p.rows(), p.cols()));
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Load a checkpoint and validate every tensor shape against `expected`
    /// (name -> (rows, cols)). Missing or extra tensors are errors.
    pub fn from_json(json: &str, expected: &BTreeMap<String, (usize, usize)>) -> Result<Self> {
        let mut store: ParamStore = serde_json::from_str(json)?;
        store.ensure_grads();
        for (name, &(r, c)) in expected {
            let m = store
                .params
                .get(name)
                .ok_or_else(|| Error::data(format!("checkpoint missing tensor {name:?}")))?;
            if (m.rows(), m.cols()) != (r, c) {
                return Err(Error::data(format!(
                    "checkpoint tensor {name:?} has shape {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if let Some(extra) = store.params.keys().find(|k| !expected.contains_key(*k)) {
            return Err(Error::data(format!("checkpoint has unexpected tensor {extra:?}")));
        }
        Ok(store)
    }
}

/// Plain SGD, `p <- p - lr * v` with `v = momentum * v + g`.
/// Gradients are zeroed after each step.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: BTreeMap<String, Matrix>,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr, momentum: 0.0, velocity: BTreeMap::new() }
    }

    pub fn with_momentum(lr: f64, momentum: f64) -> Self {
        Sgd { lr, momentum, velocity: BTreeMap::new() }
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in names {
            let g = store.grad(&name).clone();
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
            for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
                *vi = self.momentum * *vi + gi;
            }
            let v = v.clone();
            let p = store.get_mut(&name);
            for (pi, vi) in p.data_mut().iter_mut().zip(v.data()) {
                *pi -= self.lr * vi;
            }
            if !p.all_finite() {
                return Err(Error::NonFinite(format!("parameter {name:?} after SGD step")));
            }
        }
        store.zero_grads();
        Ok(())
    }
}

/// One SGD step without momentum: `p <- p - lr * g`, gradients zeroed.
pub fn sgd_step(store: &mut ParamStore, lr: f64) -> Result<()> {
    Sgd::new(lr).step(store)
}

/// Check analytic gradients against central finite differences.
///
/// `loss_and_grad` must compute the loss for the current parameters and
/// accumulate analytic gradients into the store. Coordinates are sampled
/// (64, or all when the store is smaller) and the maximum relative error
/// `|a - n| / max(1, |a| + |n|)` is returned.
pub fn grad_check<F>(
    mut loss_and_grad: F,
    store: &mut ParamStore,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    store.zero_grads();
    let base = loss_and_grad(store)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss {base}")));
    }
    let analytic: BTreeMap<String, Vec<f64>> = store
        .names()
        .map(|n| (n.to_string(), store.grad(n).data().to_vec()))
        .collect();

    let mut coords: Vec<(String, usize)> = Vec::new();
    for name in analytic.keys() {
        for i in 0..store.get(name).data().len() {
            coords.push((name.clone(), i));
        }
    }
    let sampled: Vec<(String, usize)> = if coords.len() <= 64 {
        coords
    } else {
        rand::seq::index::sample(rng, coords.len(), 64)
            .into_iter()
            .map(|i| coords[i].clone())
            .collect()
    };

    let mut max_rel = 0.0f64;
    for (name, idx) in sampled {
        let orig = store.get(&name).data()[idx];

        store.get_mut(&name).data_mut()[idx] = orig + epsilon;
        store.zero_grads();
        let plus = loss_and_grad(store)?;

        store.get_mut(&name).data_mut()[idx] = orig - epsilon;
        store.zero_grads();
        let minus = loss_and_grad(store)?;

        store.get_mut(&name).data_mut()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("perturbed loss".into()));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[&name][idx];
        let rel = (a - numeric).abs() / 1.0f64.max(a.abs() + numeric.abs());
        max_rel = max_rel.max(rel);
    }
    store.zero_grads();
    Ok(max_rel)
}

/// Forward pass of one self-attentive classification head:
/// `probs = softmax(W [extra, attention_context] + b)`.
///
/// `extra` holds fixed upstream features (probability vectors from other
/// heads); gradients do not flow into it.
#[derive(Debug, Clone)]
pub struct HeadForward {
    pub attention: Vec<f64>,
    pub argmax: usize,
    pub feature: Vec<f64>,
    pub probs: Vec<f64>,
}

fn head_names(prefix: &str) -> (String, String, String) {
    (format!("{prefix}.attn"), format!("{prefix}.w"), format!("{prefix}.b"))
}

/// Register the three tensors of an attentive head:
/// attention vector (1 x emb_dim), weights (classes x (extra_dim + emb_dim)),
/// bias (classes x 1, zero-initialized).
pub fn init_head(
    store: &mut ParamStore,
    prefix: &str,
    classes: usize,
    extra_dim: usize,
    emb_dim: usize,
    rng: &mut ChaCha8Rng,
) {
    let (attn, w, b) = head_names(prefix);
    store.init_uniform(&attn, 1, emb_dim, rng);
    store.init_uniform(&w, classes, extra_dim + emb_dim, rng);
    store.init_zeros(&b, classes, 1);
}

/// Expected tensor shapes for a head, for checkpoint validation.
pub fn head_shapes(
    prefix: &str,
    classes: usize,
    extra_dim: usize,
    emb_dim: usize,
) -> Vec<(String, (usize, usize))> {
    let (attn, w, b) = head_names(prefix);
    vec![(attn, (1, emb_dim)), (w, (classes, extra_dim + emb_dim)), (b, (classes, 1))]
}

pub fn head_forward(store: &ParamStore, prefix: &str, v: &Matrix, extra: &[f64]) -> HeadForward {
    let (attn, w, b) = head_names(prefix);
    let pool = attention_pool(v, store.get(&attn).row(0));
    let mut feature = Vec::with_capacity(extra.len() + pool.context.len());
    feature.extend_from_slice(extra);
    feature.extend_from_slice(&pool.context);
    let weight = store.get(&w);
    let bias = store.get(&b);
    let logits: Vec<f64> = weight
        .matvec(&feature)
        .iter()
        .zip(bias.data())
        .map(|(z, bi)| z + bi)
        .collect();
    HeadForward { attention: pool.weights, argmax: pool.argmax, feature, probs: softmax(&logits) }
}

/// Accumulate gradients for one head given `dL/dlogits`.
/// The `extra` portion of the feature is treated as a constant.
pub fn head_backward(
    store: &mut ParamStore,
    prefix: &str,
    v: &Matrix,
    fwd: &HeadForward,
    dlogits: &[f64],
) {
    let (attn, w, b) = head_names(prefix);
    let extra_len = fwd.feature.len() - v.cols();

    {
        let gb = store.grad_mut(&b);
        for (g, d) in gb.data_mut().iter_mut().zip(dlogits) {
            *g += d;
        }
    }
    store.grad_mut(&w).add_outer(dlogits, &fwd.feature, 1.0);

    // d(feature) = W^T dlogits; only the context part propagates.
    let weight = store.get(&w).clone();
    let mut dcontext = vec![0.0; v.cols()];
    for (r, &dr) in dlogits.iter().enumerate() {
        axpy(dr, &weight.row(r)[extra_len..], &mut dcontext);
    }

    // Through the attention pool: da_i = dcontext . v_i,
    // ds_i = a_i (da_i - sum_j a_j da_j), dy = sum_i ds_i v_i.
    let da: Vec<f64> = (0..v.rows()).map(|i| dot(&dcontext, v.row(i))).collect();
    let mean: f64 = fwd.attention.iter().zip(&da).map(|(a, d)| a * d).sum();
    let gy = store.grad_mut(&attn);
    for i in 0..v.rows() {
        let ds = fwd.attention[i] * (da[i] - mean);
        axpy(ds, v.row(i), gy.row_mut(0));
    }
}
