//! Unsupervised sample representations: TF-IDF-weighted averages of
//! pre-trained word embeddings, plus cosine similarity for the diversity
//! score. TF-IDF weights are fitted separately per corpus source.
//!
//! Tokens are lowercased before both embedding lookup and document
//! frequency counting.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};

/// Token -> dense vector table.
///
/// File format: a header line `<vocab_size> <dim>`, then one line per
/// token: the token followed by `dim` whitespace-separated decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, table: HashMap::new() }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: vector.len() });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for {token:?}")));
        }
        if self.table.insert(token.clone(), vector).is_some() {
            return Err(Error::data(format!("duplicate embedding token {token:?}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Exact lookup of the lowercased token.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.table.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing embedding header"))?;
        let mut parts = header.split_whitespace();
        let vocab: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(1, "bad vocab size"))?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(1, "bad embedding dimension"))?;
        if parts.next().is_some() {
            return Err(Error::parse(1, "trailing fields in header"));
        }
        let mut table = EmbeddingTable::new(dim);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().unwrap();
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>().map_err(|_| Error::parse(lineno + 1, format!("bad value {f:?}"))))
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::parse(
                    lineno + 1,
                    format!("row has {} values, expected {dim}", values.len()),
                ));
            }
            table
                .insert(token, values)
                .map_err(|e| Error::parse(lineno + 1, e.to_string()))?;
        }
        if table.len() != vocab {
            return Err(Error::data(format!(
                "header declares {vocab} tokens, file has {}",
                table.len()
            )));
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        let mut tokens: Vec<&String> = self.table.keys().collect();
        tokens.sort();
        for token in tokens {
            out.push_str(token);
            for v in &self.table[token] {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        Ok(std::fs::write(path, out)?)
    }
}

/// Term-frequency variant: raw counts or 1 + ln(count).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TfMode {
    #[default]
    Raw,
    Lognorm,
}

/// Per-source document frequencies and smoothed IDF weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTfidf {
    pub n_docs: usize,
    pub df: BTreeMap<String, usize>,
    /// idf(t) = ln((1 + N) / (1 + df(t))) + 1 for the fitted vocabulary.
    pub idf: BTreeMap<String, f64>,
}

impl SourceTfidf {
    /// Smoothed IDF; tokens unseen at fit time get df = 0.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((1 + self.n_docs) as f64 / (1 + df) as f64).ln() + 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub tf_mode: TfMode,
    pub sources: BTreeMap<String, SourceTfidf>,
}

impl TfidfModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

fn token_counts(sample: &Sample) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for tok in &sample.tokens {
        *counts.entry(tok.text.to_lowercase()).or_insert(0) += 1;
    }
    counts
}

/// Fit per-source TF-IDF weights: df(t) = number of samples containing t,
/// idf(t) = ln((1+N) / (1+df(t))) + 1. Deterministic and independent of
/// sample order.
pub fn fit_tfidf(samples: &[Sample], tf_mode: TfMode) -> TfidfModel {
    let mut sources: BTreeMap<String, (usize, BTreeMap<String, usize>)> = BTreeMap::new();
    for sample in samples {
        let entry = sources.entry(sample.source.clone()).or_default();
        entry.0 += 1;
        for token in token_counts(sample).keys() {
            *entry.1.entry(token.clone()).or_insert(0) += 1;
        }
    }
    let sources = sources
        .into_iter()
        .map(|(source, (n_docs, df))| {
            let idf = df
                .iter()
                .map(|(t, &d)| (t.clone(), ((1 + n_docs) as f64 / (1 + d) as f64).ln() + 1.0))
                .collect();
            (source, SourceTfidf { n_docs, df, idf })
        })
        .collect();
    TfidfModel { tf_mode: tf_mode, sources }
}

/// TF-IDF weight of a token occurring `count` times in one sample.
fn tf_weight(mode: TfMode, count: usize, idf: f64) -> f64 {
    match mode {
        TfMode::Raw => count as f64 * idf,
        TfMode::Lognorm => (1.0 + (count as f64).ln()) * idf,
    }
}

/// A sample's dense representation with its cached Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVector {
    pub sample_id: String,
    pub vector: Vec<f64>,
    pub norm: f64,
}

impl SampleVector {
    pub fn new(sample_id: impl Into<String>, vector: Vec<f64>) -> Self {
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        SampleVector { sample_id: sample_id.into(), vector, norm }
    }
}

/// TF-IDF-weighted average of the in-vocabulary token embeddings:
/// `v = sum_t w(t) e(t) / sum_t w(t)`. A sample with no in-vocabulary
/// tokens yields the zero vector.
pub fn sample_vector(
    sample: &Sample,
    embeddings: &EmbeddingTable,
    tfidf: &TfidfModel,
) -> Result<SampleVector> {
    let source = tfidf
        .sources
        .get(&sample.source)
        .ok_or_else(|| Error::data(format!("TF-IDF not fitted for source {:?}", sample.source)))?;
    let mut vector = vec![0.0; embeddings.dim()];
    let mut weight_sum = 0.0;
    for (token, count) in token_counts(sample) {
        if let Some(e) = embeddings.get(&token) {
            let w = tf_weight(tfidf.tf_mode, count, source.idf(&token));
            for (vi, ei) in vector.iter_mut().zip(e) {
                *vi += w * ei;
            }
            weight_sum += w;
        }
    }
    if weight_sum > 0.0 {
        for v in &mut vector {
            *v /= weight_sum;
        }
    }
    Ok(SampleVector::new(sample.id.clone(), vector))
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension { expected: u.len(), got: v.len() });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (nu * nv))
}

/// Cosine between two cached sample vectors.
pub fn cosine_cached(u: &SampleVector, v: &SampleVector) -> Result<f64> {
    if u.vector.len() != v.vector.len() {
        return Err(Error::Dimension { expected: u.vector.len(), got: v.vector.len() });
    }
    if u.norm == 0.0 || v.norm == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u.vector.iter().zip(&v.vector).map(|(a, b)| a * b).sum();
    Ok(dot / (u.norm * v.norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parse_embedding_table() {
        let t = EmbeddingTable::parse("1 2\nfoo 1.0 0.0\n").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("foo").unwrap(), &[1.0, 0.0]);
        assert_eq!(t.get("FOO").unwrap(), &[1.0, 0.0]);
        assert!(t.get("bar").is_none());
    }

    #[test]
    fn parse_rejects_arity_mismatch() {
        assert!(EmbeddingTable::parse("1 2\nfoo 1.0 0.0 3.0\n").is_err());
        assert!(EmbeddingTable::parse("1 2\nfoo 1.0\n").is_err());
        assert!(EmbeddingTable::parse("2 2\nfoo 1 0\nfoo 0 1\n").is_err());
        assert!(EmbeddingTable::parse("1 2\nfoo 1.0 nope\n").is_err());
    }

    #[test]
    fn parse_empty_table() {
        let t = EmbeddingTable::parse("0 5\n").unwrap();
        assert_eq!(t.dim(), 5);
        assert!(t.is_empty());
    }

    fn samples(texts: &[(&str, &str)]) -> Vec<Sample> {
        texts
            .iter()
            .enumerate()
            .map(|(i, (source, text))| Sample::new(format!("s{i}"), *source, "SH", *text))
            .collect()
    }

    #[test]
    fn idf_formula() {
        // token in every one of N docs -> idf = ln(1) + 1 = 1
        let model = fit_tfidf(&samples(&[("m", "beer"), ("m", "beer"), ("m", "beer")]), TfMode::Raw);
        let src = &model.sources["m"];
        assert_abs_diff_eq!(src.idf("beer"), 1.0, epsilon = 1e-12);

        // token in 1 of 3 docs -> ln(4/2) + 1
        let model =
            fit_tfidf(&samples(&[("m", "beer"), ("m", "wine"), ("m", "gin")]), TfMode::Raw);
        let src = &model.sources["m"];
        assert_abs_diff_eq!(src.idf("beer"), (4.0f64 / 2.0).ln() + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(src.idf("beer"), 1.6931, epsilon = 1e-4);
    }

    #[test]
    fn sources_fitted_independently() {
        let model = fit_tfidf(
            &samples(&[("m", "beer beer"), ("m", "wine"), ("u", "beer")]),
            TfMode::Raw,
        );
        assert_eq!(model.sources.len(), 2);
        assert_eq!(model.sources["m"].n_docs, 2);
        assert_eq!(model.sources["u"].n_docs, 1);
        assert_eq!(model.sources["m"].df["beer"], 1);
        assert_eq!(model.sources["u"].df["beer"], 1);
        assert!(model.sources["m"].idf("beer") != model.sources["u"].idf("beer"));
    }

    #[test]
    fn fit_is_order_independent() {
        let fwd = samples(&[("m", "a b"), ("m", "b c"), ("u", "a")]);
        let mut rev = fwd.clone();
        rev.reverse();
        assert_eq!(fit_tfidf(&fwd, TfMode::Raw), fit_tfidf(&rev, TfMode::Raw));
    }

    fn embeddings() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![1.0, 0.0]).unwrap();
        t.insert("b", vec![0.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn single_in_vocab_token_is_its_embedding() {
        let ss = samples(&[("m", "a zzz")]);
        let model = fit_tfidf(&ss, TfMode::Raw);
        let v = sample_vector(&ss[0], &embeddings(), &model).unwrap();
        assert_eq!(v.vector, vec![1.0, 0.0]);
        assert_abs_diff_eq!(v.norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_oov_yields_zero_vector() {
        let ss = samples(&[("m", "xxx yyy")]);
        let model = fit_tfidf(&ss, TfMode::Raw);
        let v = sample_vector(&ss[0], &embeddings(), &model).unwrap();
        assert_eq!(v.vector, vec![0.0, 0.0]);
        assert_eq!(v.norm, 0.0);
    }

    #[test]
    fn weighted_average() {
        // "a a b": idf identical for both tokens (each in the sample's own
        // doc), so weights are 2w and w -> [2/3, 1/3].
        let ss = samples(&[("m", "a a b")]);
        let model = fit_tfidf(&ss, TfMode::Raw);
        let v = sample_vector(&ss[0], &embeddings(), &model).unwrap();
        assert_abs_diff_eq!(v.vector[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.vector[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn vector_invariant_to_uniform_weight_scaling() {
        // lognorm vs raw give different weights but the same direction for
        // count-1 tokens; here both tokens occur once so vectors match.
        let ss = samples(&[("m", "a b")]);
        let raw = sample_vector(&ss[0], &embeddings(), &fit_tfidf(&ss, TfMode::Raw)).unwrap();
        let log = sample_vector(&ss[0], &embeddings(), &fit_tfidf(&ss, TfMode::Lognorm)).unwrap();
        for (x, y) in raw.vector.iter().zip(&log.vector) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_source_is_an_error() {
        let ss = samples(&[("m", "a")]);
        let model = fit_tfidf(&ss, TfMode::Raw);
        let other = Sample::new("x", "unknown", "SH", "a");
        assert!(sample_vector(&other, &embeddings(), &model).is_err());
    }

    #[test]
    fn cosine_basics() {
        assert_abs_diff_eq!(cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn cosine_symmetric_and_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.random_range(1..6);
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let c1 = cosine(&u, &v).unwrap();
            let c2 = cosine(&v, &u).unwrap();
            assert_eq!(c1, c2);
            assert!(c1.abs() <= 1.0 + 1e-12);
            let cu = cosine(&u, &u).unwrap();
            if u.iter().any(|&x| x != 0.0) {
                assert_abs_diff_eq!(cu, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cached_cosine_matches() {
        let u = SampleVector::new("u", vec![1.0, 2.0, 3.0]);
        let v = SampleVector::new("v", vec![-1.0, 0.5, 2.0]);
        assert_abs_diff_eq!(
            cosine_cached(&u, &v).unwrap(),
            cosine(&u.vector, &v.vector).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn tfidf_model_json_roundtrip() {
        let ss = samples(&[("m", "a b"), ("u", "c")]);
        let model = fit_tfidf(&ss, TfMode::Lognorm);
        let json = model.to_json().unwrap();
        assert_eq!(TfidfModel::from_json(&json).unwrap(), model);
    }
}
