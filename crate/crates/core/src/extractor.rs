//! Sentence-level event extractor: per-event-type binary trigger heads,
//! labeled-argument heads conditioned on the trigger probabilities, and
//! per-event-type linear-chain CRFs over BIO tags for span-only arguments.
//!
//! Probability features passed between stages (the flattened trigger and
//! labeled-argument distributions) are treated as constants during
//! backpropagation; each head group trains on its own loss terms.
//!
//! The model represents at most one event of a given type per sentence and
//! cannot express overlapping span-only arguments of one type.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::numcore::{
    axpy, cross_entropy, cross_entropy_logit_grad, head_backward, head_forward, head_shapes,
    init_head, log_sum_exp, Matrix, ParamStore, Sgd,
};
use crate::standoff::{
    AnnotationSet, Event, EventSchema, LabeledArgument, SpanOnlyArgument, TokenSpan, Trigger,
};
use crate::surrogate::TrainConfig;
use crate::vectors::EmbeddingTable;

// ---------------------------------------------------------------------------
// Linear-chain CRF with BIO legality masking
// ---------------------------------------------------------------------------

/// BIO tag list for a set of span argument types: `O` first, then
/// `B-x`/`I-x` per type in order.
pub fn bio_labels(span_arg_types: &[String]) -> Vec<String> {
    let mut labels = vec!["O".to_string()];
    for t in span_arg_types {
        labels.push(format!("B-{t}"));
        labels.push(format!("I-{t}"));
    }
    labels
}

/// Additive legality mask: 0 for legal, -inf for illegal.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfMask {
    /// `transition[i][j]` applies to moving from label i to label j.
    pub transition: Matrix,
    /// Applies to the label of the first token.
    pub start: Vec<f64>,
}

/// Build the BIO mask over `labels` (as produced by [`bio_labels`]):
/// `I-x` may only start a span continuation, so `start -> I-x`,
/// `O -> I-x`, `B-y -> I-x` (y != x), and `I-y -> I-x` (y != x) are
/// all illegal.
pub fn bio_mask(labels: &[String]) -> CrfMask {
    let l = labels.len();
    let inside_of = |label: &str| label.strip_prefix("I-").map(str::to_string);
    let span_type = |label: &str| {
        label
            .strip_prefix("B-")
            .or_else(|| label.strip_prefix("I-"))
            .map(str::to_string)
    };
    let mut transition = Matrix::zeros(l, l);
    let mut start = vec![0.0; l];
    for (j, to) in labels.iter().enumerate() {
        if let Some(x) = inside_of(to) {
            start[j] = f64::NEG_INFINITY;
            for (i, from) in labels.iter().enumerate() {
                let legal = span_type(from) == Some(x.clone()) && from != "O";
                if !legal {
                    transition.set(i, j, f64::NEG_INFINITY);
                }
            }
        }
    }
    CrfMask { transition, start }
}

fn masked_transition(transitions: &Matrix, mask: &CrfMask, i: usize, j: usize) -> f64 {
    transitions.get(i, j) + mask.transition.get(i, j)
}

fn forward_alphas(emissions: &Matrix, transitions: &Matrix, mask: &CrfMask) -> Matrix {
    let (n, l) = (emissions.rows(), emissions.cols());
    let mut alpha = Matrix::zeros(n, l);
    for j in 0..l {
        alpha.set(0, j, emissions.get(0, j) + mask.start[j]);
    }
    let mut scratch = vec![0.0; l];
    for t in 1..n {
        for j in 0..l {
            for (i, s) in scratch.iter_mut().enumerate() {
                *s = alpha.get(t - 1, i) + masked_transition(transitions, mask, i, j);
            }
            alpha.set(t, j, emissions.get(t, j) + log_sum_exp(&scratch));
        }
    }
    alpha
}

/// Log partition function of the chain: log of the summed exponentiated
/// scores of every legal tag path.
pub fn crf_log_partition(emissions: &Matrix, transitions: &Matrix, mask: &CrfMask) -> f64 {
    assert!(emissions.rows() >= 1, "CRF over empty sequence");
    let alpha = forward_alphas(emissions, transitions, mask);
    log_sum_exp(alpha.row(alpha.rows() - 1))
}

/// Score of one explicit path (with mask penalties included).
pub fn crf_path_score(
    emissions: &Matrix,
    transitions: &Matrix,
    mask: &CrfMask,
    tags: &[usize],
) -> f64 {
    let mut score = mask.start[tags[0]] + emissions.get(0, tags[0]);
    for t in 1..tags.len() {
        score += masked_transition(transitions, mask, tags[t - 1], tags[t]);
        score += emissions.get(t, tags[t]);
    }
    score
}

/// Negative log-likelihood of the gold path and its gradients.
#[derive(Debug, Clone)]
pub struct CrfGrad {
    pub nll: f64,
    /// d nll / d emissions, same shape as the emissions.
    pub d_emissions: Matrix,
    /// d nll / d transitions (zero on masked entries).
    pub d_transitions: Matrix,
}

/// NLL = logZ - score(gold), with gradients from forward-backward
/// marginals (expected counts minus observed counts).
pub fn crf_nll_and_grad(
    emissions: &Matrix,
    transitions: &Matrix,
    mask: &CrfMask,
    gold: &[usize],
) -> Result<CrfGrad> {
    let (n, l) = (emissions.rows(), emissions.cols());
    if gold.len() != n {
        return Err(Error::data(format!("gold path length {} != {n}", gold.len())));
    }
    if mask.start[gold[0]] == f64::NEG_INFINITY
        || gold.windows(2).any(|w| mask.transition.get(w[0], w[1]) == f64::NEG_INFINITY)
    {
        return Err(Error::data("gold tag sequence violates the BIO mask"));
    }

    let alpha = forward_alphas(emissions, transitions, mask);
    let log_z = log_sum_exp(alpha.row(n - 1));
    let mut beta = Matrix::zeros(n, l);
    let mut scratch = vec![0.0; l];
    for t in (0..n.saturating_sub(1)).rev() {
        for i in 0..l {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = masked_transition(transitions, mask, i, j)
                    + emissions.get(t + 1, j)
                    + beta.get(t + 1, j);
            }
            beta.set(t, i, log_sum_exp(&scratch));
        }
    }

    let mut d_emissions = Matrix::zeros(n, l);
    for t in 0..n {
        for j in 0..l {
            let m = (alpha.get(t, j) + beta.get(t, j) - log_z).exp();
            d_emissions.set(t, j, m - if gold[t] == j { 1.0 } else { 0.0 });
        }
    }
    let mut d_transitions = Matrix::zeros(l, l);
    for t in 1..n {
        for i in 0..l {
            for j in 0..l {
                if mask.transition.get(i, j) == f64::NEG_INFINITY {
                    continue;
                }
                let p = (alpha.get(t - 1, i)
                    + masked_transition(transitions, mask, i, j)
                    + emissions.get(t, j)
                    + beta.get(t, j)
                    - log_z)
                    .exp();
                let observed = if gold[t - 1] == i && gold[t] == j { 1.0 } else { 0.0 };
                *d_transitions.row_mut(i).get_mut(j).unwrap() += p - observed;
            }
        }
    }
    let nll = log_z - crf_path_score(emissions, transitions, mask, gold);
    Ok(CrfGrad { nll, d_emissions, d_transitions })
}

/// Maximum-score legal path; ties break toward the lower label index.
pub fn crf_viterbi(emissions: &Matrix, transitions: &Matrix, mask: &CrfMask) -> Vec<usize> {
    let (n, l) = (emissions.rows(), emissions.cols());
    assert!(n >= 1, "CRF over empty sequence");
    let mut delta = Matrix::zeros(n, l);
    let mut back = vec![vec![0usize; l]; n];
    for j in 0..l {
        delta.set(0, j, emissions.get(0, j) + mask.start[j]);
    }
    for t in 1..n {
        for j in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for i in 0..l {
                let s = delta.get(t - 1, i) + masked_transition(transitions, mask, i, j);
                if s > best {
                    best = s;
                    best_i = i;
                }
            }
            delta.set(t, j, emissions.get(t, j) + best);
            back[t][j] = best_i;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut tag = 0;
    for j in 0..l {
        if delta.get(n - 1, j) > best {
            best = delta.get(n - 1, j);
            tag = j;
        }
    }
    let mut path = vec![tag; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

// ---------------------------------------------------------------------------
// Model structure
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledHeadSpec {
    pub event_type: String,
    pub arg_type: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfSpec {
    pub event_type: String,
    pub span_arg_types: Vec<String>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractorModel {
    pub schema: EventSchema,
    pub event_types: Vec<String>,
    pub labeled_heads: Vec<LabeledHeadSpec>,
    pub crfs: Vec<CrfSpec>,
    pub dim: usize,
    pub params: ParamStore,
}

fn trigger_prefix(event_type: &str) -> String {
    format!("trg.{event_type}")
}

fn labeled_prefix(event_type: &str, arg_type: &str) -> String {
    format!("larg.{event_type}.{arg_type}")
}

impl ExtractorModel {
    pub fn init(schema: &EventSchema, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let event_types = schema.event_type_names();
        let labeled_heads: Vec<LabeledHeadSpec> = schema
            .event_types
            .iter()
            .flat_map(|et| {
                et.labeled_args.iter().map(|la| LabeledHeadSpec {
                    event_type: et.name.clone(),
                    arg_type: la.name.clone(),
                    labels: la.labels.clone(),
                })
            })
            .collect();
        let crfs: Vec<CrfSpec> = schema
            .event_types
            .iter()
            .map(|et| CrfSpec {
                event_type: et.name.clone(),
                span_arg_types: et.span_args.clone(),
                labels: bio_labels(&et.span_args),
            })
            .collect();

        let pt_dim = 2 * event_types.len();
        let ps_dim: usize = labeled_heads.iter().map(|h| h.labels.len()).sum();
        let mut params = ParamStore::new();
        for t in &event_types {
            init_head(&mut params, &trigger_prefix(t), 2, 0, dim, &mut rng);
        }
        for h in &labeled_heads {
            init_head(
                &mut params,
                &labeled_prefix(&h.event_type, &h.arg_type),
                h.labels.len(),
                pt_dim,
                dim,
                &mut rng,
            );
        }
        for c in &crfs {
            let l = c.labels.len();
            params.init_uniform(&format!("crf.{}.emit_w", c.event_type), l, dim + ps_dim, &mut rng);
            params.init_zeros(&format!("crf.{}.emit_b", c.event_type), l, 1);
            params.init_uniform(&format!("crf.{}.trans", c.event_type), l, l, &mut rng);
        }
        ExtractorModel { schema: schema.clone(), event_types, labeled_heads, crfs, dim, params }
    }

    pub fn expected_shapes(&self) -> BTreeMap<String, (usize, usize)> {
        let mut shapes = BTreeMap::new();
        let pt_dim = 2 * self.event_types.len();
        let ps_dim: usize = self.labeled_heads.iter().map(|h| h.labels.len()).sum();
        for t in &self.event_types {
            for (n, s) in head_shapes(&trigger_prefix(t), 2, 0, self.dim) {
                shapes.insert(n, s);
            }
        }
        for h in &self.labeled_heads {
            for (n, s) in
                head_shapes(&labeled_prefix(&h.event_type, &h.arg_type), h.labels.len(), pt_dim, self.dim)
            {
                shapes.insert(n, s);
            }
        }
        for c in &self.crfs {
            let l = c.labels.len();
            shapes.insert(format!("crf.{}.emit_w", c.event_type), (l, self.dim + ps_dim));
            shapes.insert(format!("crf.{}.emit_b", c.event_type), (l, 1));
            shapes.insert(format!("crf.{}.trans", c.event_type), (l, l));
        }
        shapes
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: ExtractorModel = serde_json::from_str(json)?;
        let params =
            ParamStore::from_json(&serde_json::to_string(&model.params)?, &model.expected_shapes())?;
        Ok(ExtractorModel { params, ..model })
    }
}

/// Embedding rows for every token of a sentence; out-of-vocabulary tokens
/// become zero rows so positions stay aligned with token indices.
pub fn sentence_matrix(
    sample: &Sample,
    bounds: (usize, usize),
    embeddings: &EmbeddingTable,
) -> Matrix {
    let dim = embeddings.dim();
    let rows: Vec<Vec<f64>> = sample.tokens[bounds.0..bounds.1]
        .iter()
        .map(|t| embeddings.get(&t.text).map_or_else(|| vec![0.0; dim], <[f64]>::to_vec))
        .collect();
    Matrix::from_rows(&rows)
}

// ---------------------------------------------------------------------------
// Forward passes and assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TriggerPrediction {
    pub event_type: String,
    /// P(present); detection requires strictly more than 0.5.
    pub presence: f64,
    /// Sentence-local argmax-attention token.
    pub token: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabeledPrediction {
    pub event_type: String,
    pub arg_type: String,
    pub probs: Vec<f64>,
    pub token: usize,
}

/// All sentence-level predictions needed to assemble events.
#[derive(Debug, Clone, Serialize)]
pub struct SentencePrediction {
    /// Global token index of the sentence start.
    pub token_offset: usize,
    pub len: usize,
    pub triggers: Vec<TriggerPrediction>,
    pub labeled: Vec<LabeledPrediction>,
    /// Per event type: decoded BIO tag indices of that type's CRF.
    pub bio: Vec<Vec<usize>>,
}

struct SentenceForward {
    trigger_fwds: Vec<crate::numcore::HeadForward>,
    labeled_fwds: Vec<crate::numcore::HeadForward>,
    emissions: Vec<Matrix>,
    emission_features: Matrix,
}

fn forward_sentence(params: &ParamStore, model: &ExtractorModel, v: &Matrix) -> SentenceForward {
    let trigger_fwds: Vec<_> = model
        .event_types
        .iter()
        .map(|t| head_forward(params, &trigger_prefix(t), v, &[]))
        .collect();
    let pt_flat: Vec<f64> = trigger_fwds.iter().flat_map(|f| f.probs.clone()).collect();

    let labeled_fwds: Vec<_> = model
        .labeled_heads
        .iter()
        .map(|h| head_forward(params, &labeled_prefix(&h.event_type, &h.arg_type), v, &pt_flat))
        .collect();
    let ps_flat: Vec<f64> = labeled_fwds.iter().flat_map(|f| f.probs.clone()).collect();

    // Token features for the CRFs: [embedding, ps_flat] per position.
    let n = v.rows();
    let mut feat = Matrix::zeros(n, v.cols() + ps_flat.len());
    for t in 0..n {
        let row = feat.row_mut(t);
        row[..v.cols()].copy_from_slice(v.row(t));
        row[v.cols()..].copy_from_slice(&ps_flat);
    }
    let emissions: Vec<Matrix> = model
        .crfs
        .iter()
        .map(|c| {
            let w = params.get(&format!("crf.{}.emit_w", c.event_type));
            let b = params.get(&format!("crf.{}.emit_b", c.event_type));
            let l = c.labels.len();
            let mut e = Matrix::zeros(n, l);
            for t in 0..n {
                let scores = w.matvec(feat.row(t));
                for j in 0..l {
                    e.set(t, j, scores[j] + b.get(j, 0));
                }
            }
            e
        })
        .collect();
    SentenceForward { trigger_fwds, labeled_fwds, emissions, emission_features: feat }
}

impl ExtractorModel {

    /// Per-type presence probabilities and argmax-attention trigger tokens.
    pub fn trigger_forward(&self, v: &Matrix) -> Vec<TriggerPrediction> {
        self.event_types
            .iter()
            .map(|t| {
                let fwd = head_forward(&self.params, &trigger_prefix(t), v, &[]);
                TriggerPrediction { event_type: t.clone(), presence: fwd.probs[1], token: fwd.argmax }
            })
            .collect()
    }

    /// Labeled-argument distributions given the flattened trigger
    /// probabilities `pt_flat` (length 2m).
    pub fn labeled_arg_forward(&self, v: &Matrix, pt_flat: &[f64]) -> Vec<LabeledPrediction> {
        self.labeled_heads
            .iter()
            .map(|h| {
                let fwd = head_forward(
                    &self.params,
                    &labeled_prefix(&h.event_type, &h.arg_type),
                    v,
                    pt_flat,
                );
                LabeledPrediction {
                    event_type: h.event_type.clone(),
                    arg_type: h.arg_type.clone(),
                    probs: fwd.probs,
                    token: fwd.argmax,
                }
            })
            .collect()
    }

    /// Full prediction for the sentence spanning global token indices
    /// `bounds` of `sample`.
    pub fn predict_sentence(
        &self,
        sample: &Sample,
        bounds: (usize, usize),
        embeddings: &EmbeddingTable,
    ) -> SentencePrediction {
        let v = sentence_matrix(sample, bounds, embeddings);
        let fwd = forward_sentence(&self.params, self, &v);
        let triggers = self
            .event_types
            .iter()
            .zip(&fwd.trigger_fwds)
            .map(|(t, f)| TriggerPrediction {
                event_type: t.clone(),
                presence: f.probs[1],
                token: f.argmax,
            })
            .collect();
        let labeled = self
            .labeled_heads
            .iter()
            .zip(&fwd.labeled_fwds)
            .map(|(h, f)| LabeledPrediction {
                event_type: h.event_type.clone(),
                arg_type: h.arg_type.clone(),
                probs: f.probs.clone(),
                token: f.argmax,
            })
            .collect();
        let bio = self
            .crfs
            .iter()
            .zip(&fwd.emissions)
            .map(|(c, e)| {
                let trans = self.params.get(&format!("crf.{}.trans", c.event_type));
                crf_viterbi(e, trans, &bio_mask(&c.labels))
            })
            .collect();
        SentencePrediction { token_offset: bounds.0, len: bounds.1 - bounds.0, triggers, labeled, bio }
    }

    /// Assemble events from one sentence's predictions: one event per
    /// detected type (presence strictly above 0.5), never more.
    pub fn assemble_events(&self, pred: &SentencePrediction) -> Vec<Event> {
        let mut events = Vec::new();
        for (k, tp) in pred.triggers.iter().enumerate() {
            if tp.presence <= 0.5 {
                continue;
            }
            let mut event = Event {
                trigger: Trigger {
                    event_type: tp.event_type.clone(),
                    span: TokenSpan::single(pred.token_offset + tp.token),
                },
                labeled_args: Vec::new(),
                span_args: Vec::new(),
            };
            for lp in pred.labeled.iter().filter(|l| l.event_type == tp.event_type) {
                let class = lp
                    .probs
                    .iter()
                    .enumerate()
                    .fold((0usize, f64::NEG_INFINITY), |best, (i, &p)| {
                        if p > best.1 {
                            (i, p)
                        } else {
                            best
                        }
                    })
                    .0;
                let spec = self
                    .labeled_heads
                    .iter()
                    .find(|h| h.event_type == lp.event_type && h.arg_type == lp.arg_type)
                    .expect("labeled head spec");
                event.labeled_args.push(LabeledArgument {
                    arg_type: lp.arg_type.clone(),
                    span: TokenSpan::single(pred.token_offset + lp.token),
                    subtype: spec.labels[class].clone(),
                });
            }
            for (arg_type, start, end) in decode_bio_runs(&self.crfs[k].labels, &pred.bio[k]) {
                event.span_args.push(SpanOnlyArgument {
                    arg_type,
                    span: TokenSpan::new(pred.token_offset + start, pred.token_offset + end)
                        .expect("non-empty BIO run"),
                });
            }
            events.push(event);
        }
        events
    }

    /// Predict all events of a sample, sentence by sentence.
    pub fn predict_sample(&self, sample: &Sample, embeddings: &EmbeddingTable) -> Vec<Event> {
        let mut events = Vec::new();
        for &bounds in &sample.sentence_bounds {
            let pred = self.predict_sentence(sample, bounds, embeddings);
            events.extend(self.assemble_events(&pred));
        }
        events
    }

    /// Predictions for a whole corpus as an annotation set.
    pub fn predict_corpus(&self, samples: &[Sample], embeddings: &EmbeddingTable) -> AnnotationSet {
        let mut set = AnnotationSet::new();
        for s in samples {
            set.insert(s.id.clone(), self.predict_sample(s, embeddings));
        }
        set
    }
}

/// Decode contiguous B-x / I-x runs into (arg type, local start, local end).
fn decode_bio_runs(labels: &[String], tags: &[usize]) -> Vec<(String, usize, usize)> {
    let mut runs = Vec::new();
    let mut current: Option<(String, usize)> = None;
    for (t, &tag) in tags.iter().enumerate() {
        let label = labels[tag].as_str();
        if let Some(x) = label.strip_prefix("B-") {
            if let Some((arg, start)) = current.take() {
                runs.push((arg, start, t));
            }
            current = Some((x.to_string(), t));
        } else if label.starts_with("I-") {
            // legal decodes only continue the current run
        } else {
            if let Some((arg, start)) = current.take() {
                runs.push((arg, start, t));
            }
        }
    }
    if let Some((arg, start)) = current.take() {
        runs.push((arg, start, tags.len()));
    }
    runs
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct SentenceGold {
    bounds: (usize, usize),
    presence: Vec<bool>,
    /// Per labeled head: gold class index, present only when the event
    /// type occurs in the sentence and the argument is annotated.
    labeled_gold: Vec<Option<usize>>,
    /// Per event type: gold BIO tag indices.
    bio_gold: Vec<Vec<usize>>,
}

fn derive_sentence_gold(
    sample: &Sample,
    events: &[Event],
    model: &ExtractorModel,
) -> Result<Vec<SentenceGold>> {
    let mut out = Vec::new();
    for &(start, end) in &sample.sentence_bounds {
        let sentence_events: Vec<&Event> = events
            .iter()
            .filter(|e| start <= e.trigger.span.start && e.trigger.span.start < end)
            .collect();
        let presence: Vec<bool> = model
            .event_types
            .iter()
            .map(|t| sentence_events.iter().any(|e| &e.trigger.event_type == t))
            .collect();
        let labeled_gold = model
            .labeled_heads
            .iter()
            .map(|h| {
                let mut of_type: Vec<&&Event> = sentence_events
                    .iter()
                    .filter(|e| e.trigger.event_type == h.event_type)
                    .collect();
                of_type.sort_by_key(|e| e.trigger.span.start);
                of_type.first().and_then(|e| {
                    e.labeled_args
                        .iter()
                        .find(|a| a.arg_type == h.arg_type)
                        .and_then(|a| h.labels.iter().position(|l| l == &a.subtype))
                })
            })
            .collect();
        let mut bio_gold = Vec::new();
        for (k, c) in model.crfs.iter().enumerate() {
            let mut tags = vec![0usize; end - start]; // O
            for e in sentence_events.iter().filter(|e| e.trigger.event_type == model.event_types[k]) {
                for sa in &e.span_args {
                    let b_idx = c
                        .labels
                        .iter()
                        .position(|l| l == &format!("B-{}", sa.arg_type))
                        .ok_or_else(|| {
                            Error::schema(format!(
                                "span argument type {:?} not in CRF labels for {:?}",
                                sa.arg_type, c.event_type
                            ))
                        })?;
                    let clamped: Vec<usize> =
                        sa.span.indices().filter(|&i| start <= i && i < end).collect();
                    if clamped.len() != sa.span.len() {
                        log::warn!(
                            "span argument of sample {:?} crosses sentence bounds; clamped",
                            sample.id
                        );
                    }
                    for (pos, &tok) in clamped.iter().enumerate() {
                        let local = tok - start;
                        if tags[local] != 0 {
                            return Err(Error::data(format!(
                                "overlapping span-only arguments of type {:?} in sample {:?} (token {tok})",
                                c.event_type, sample.id
                            )));
                        }
                        tags[local] = if pos == 0 { b_idx } else { b_idx + 1 };
                    }
                }
            }
            bio_gold.push(tags);
        }
        out.push(SentenceGold { bounds: (start, end), presence, labeled_gold, bio_gold });
    }
    Ok(out)
}

/// A trained extractor plus its training-loss trace (entry 0 = loss at
/// initialization).
#[derive(Debug, Clone)]
pub struct TrainedExtractor {
    pub model: ExtractorModel,
    pub epoch_losses: Vec<f64>,
}

/// Loss of one sentence given its gold: trigger cross-entropies, labeled
/// cross-entropies (masked to sentences where the type is present), and
/// CRF NLLs. When `accumulate` is set the gradients are written into the
/// model's parameter store.
fn sentence_loss(
    params: &mut ParamStore,
    meta: &ExtractorModel,
    v: &Matrix,
    gold: &SentenceGold,
    accumulate: bool,
) -> Result<f64> {
    let fwd = forward_sentence(params, meta, v);

    let mut loss = 0.0;
    for (k, t) in meta.event_types.iter().enumerate() {
        let gold_class = usize::from(gold.presence[k]);
        let f = &fwd.trigger_fwds[k];
        loss += cross_entropy(&f.probs, gold_class)?;
        if accumulate {
            let dlogits = cross_entropy_logit_grad(&f.probs, gold_class);
            head_backward(params, &trigger_prefix(t), v, f, &dlogits);
        }
    }
    for (idx, (spec, f)) in meta.labeled_heads.iter().zip(&fwd.labeled_fwds).enumerate() {
        if let Some(gold_class) = gold.labeled_gold[idx] {
            loss += cross_entropy(&f.probs, gold_class)?;
            if accumulate {
                let dlogits = cross_entropy_logit_grad(&f.probs, gold_class);
                head_backward(params, &labeled_prefix(&spec.event_type, &spec.arg_type), v, f, &dlogits);
            }
        }
    }
    for (k, c) in meta.crfs.iter().enumerate() {
        let mask = bio_mask(&c.labels);
        let trans = params.get(&format!("crf.{}.trans", c.event_type)).clone();
        let grad = crf_nll_and_grad(&fwd.emissions[k], &trans, &mask, &gold.bio_gold[k])?;
        loss += grad.nll;
        if accumulate {
            {
                let gw = params.grad_mut(&format!("crf.{}.emit_w", c.event_type));
                for t in 0..v.rows() {
                    gw.add_outer(grad.d_emissions.row(t), fwd.emission_features.row(t), 1.0);
                }
            }
            {
                let gb = params.grad_mut(&format!("crf.{}.emit_b", c.event_type));
                for t in 0..v.rows() {
                    for (j, g) in grad.d_emissions.row(t).iter().enumerate() {
                        gb.row_mut(j)[0] += g;
                    }
                }
            }
            let gt = params.grad_mut(&format!("crf.{}.trans", c.event_type));
            for i in 0..c.labels.len() {
                axpy(1.0, grad.d_transitions.row(i), gt.row_mut(i));
            }
        }
    }
    Ok(loss)
}

/// Train the extractor on schema-valid gold events with joint SGD over the
/// trigger, labeled-argument, and CRF losses. Deterministic given the seed.
pub fn train_extractor(
    samples: &[&Sample],
    gold: &AnnotationSet,
    embeddings: &EmbeddingTable,
    schema: &EventSchema,
    config: &TrainConfig,
) -> Result<TrainedExtractor> {
    if samples.is_empty() {
        return Err(Error::data("empty training set"));
    }
    let mut model = ExtractorModel::init(schema, embeddings.dim(), config.seed);

    // Pre-derive sentence-level gold and embedding matrices.
    let mut instances: Vec<(Matrix, SentenceGold)> = Vec::new();
    for sample in samples {
        for event in gold.get(&sample.id) {
            schema.validate_event(event, sample.tokens.len())?;
        }
        for g in derive_sentence_gold(sample, gold.get(&sample.id), &model)? {
            if g.bounds.1 > g.bounds.0 {
                instances.push((sentence_matrix(sample, g.bounds, embeddings), g));
            }
        }
    }

    let eval = |params: &mut ParamStore, meta: &ExtractorModel| -> Result<f64> {
        let mut total = 0.0;
        for (v, g) in &instances {
            total += sentence_loss(params, meta, v, g, false)?;
        }
        Ok(total)
    };

    let meta = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut optimizer = Sgd::with_momentum(config.lr, config.momentum);
    let mut epoch_losses = vec![eval(&mut model.params, &meta)?];
    let mut order: Vec<usize> = (0..instances.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (v, g) = &instances[i];
            sentence_loss(&mut model.params, &meta, v, g, true)?;
            optimizer.step(&mut model.params)?;
        }
        epoch_losses.push(eval(&mut model.params, &meta)?);
    }
    Ok(TrainedExtractor { model, epoch_losses })
}
