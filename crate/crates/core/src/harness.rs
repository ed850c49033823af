//! Simulation harness: synthetic keyword-planted corpora stand in for the
//! private clinical data, a closed-loop annotate→train→select cycle runs
//! active and random arms over identical splits, and Welch's t-test plus
//! per-label enrichment ratios compare the arms.
//!
//! Class detectability is controlled per class by a cue-noise rate: with
//! probability `cue_noise` the planted cue token is replaced by a filler,
//! leaving the gold label intact but the text uninformative. Noisy rare
//! classes stay high-entropy, which is what active selection should chase.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::scoring::{score_triggers, ScoreReport, Tally};
use crate::select::{greedy_select, SelectionConfig};
use crate::standoff::{
    AnnotationSet, Event, EventSchema, EventTypeDef, LabeledArgDef, LabeledArgument,
    SpanOnlyArgument, TokenSpan,
};
use crate::surrogate::{
    train_surrogate, LabelMap, ProbProfile, SurrogateModel, SurrogateSpec, TrainConfig,
    ABSENT_CLASS, MULTIPLE_CLASS,
};
use crate::vectors::{fit_tfidf, sample_vector, EmbeddingTable, SampleVector, TfMode};

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub prevalence: f64,
    /// Cue keywords planted in the text; at least one for every class
    /// except `absent` and `multiple`.
    #[serde(default)]
    pub cues: Vec<String>,
    /// Probability that the planted cue is replaced by a random filler.
    #[serde(default)]
    pub cue_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEventType {
    pub name: String,
    #[serde(default = "default_salient_arg")]
    pub salient_arg: String,
    pub classes: Vec<ClassSpec>,
}

fn default_salient_arg() -> String {
    "Status".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub samples: usize,
    pub embedding_dim: usize,
    /// Inclusive range of sentences per sample.
    pub sentences_per_sample: (usize, usize),
    /// Inclusive range of tokens per sentence.
    pub sentence_len: (usize, usize),
    /// Number of distinct filler tokens (`w0`, `w1`, ...).
    pub filler_vocab: usize,
    /// Plant one span-only `Detail` argument next to each trigger.
    #[serde(default)]
    pub plant_span_args: bool,
    pub event_types: Vec<SynthEventType>,
}

impl SyntheticSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: SyntheticSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.embedding_dim == 0 || self.filler_vocab == 0 {
            return Err(Error::data("samples, embedding_dim, and filler_vocab must be positive"));
        }
        let ok_range = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !ok_range(self.sentences_per_sample) || !ok_range(self.sentence_len) {
            return Err(Error::data("sentence ranges must satisfy 1 <= min <= max"));
        }
        for et in &self.event_types {
            let total: f64 = et.classes.iter().map(|c| c.prevalence).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::data(format!(
                    "prevalences for {:?} sum to {total}, expected 1",
                    et.name
                )));
            }
            let real_classes = et
                .classes
                .iter()
                .filter(|c| c.label != ABSENT_CLASS && c.label != MULTIPLE_CLASS)
                .count();
            for c in &et.classes {
                if !(0.0..=1.0).contains(&c.prevalence) || !(0.0..=1.0).contains(&c.cue_noise) {
                    return Err(Error::data("prevalence and cue_noise must lie in [0, 1]"));
                }
                match c.label.as_str() {
                    ABSENT_CLASS => {}
                    MULTIPLE_CLASS => {
                        if real_classes < 2 {
                            return Err(Error::data(format!(
                                "{:?} uses the multiple class but has fewer than two real classes",
                                et.name
                            )));
                        }
                    }
                    _ if c.cues.is_empty() => {
                        return Err(Error::data(format!(
                            "class {:?} of {:?} has no cue keywords",
                            c.label, et.name
                        )));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn detail_keyword(event_type: &str) -> String {
        format!("{}detail", event_type.to_lowercase())
    }

    /// Annotation schema induced by the spec: one required labeled
    /// argument per type (the real class labels), plus a `Detail`
    /// span-only argument when span planting is on.
    pub fn schema(&self) -> EventSchema {
        EventSchema {
            event_types: self
                .event_types
                .iter()
                .map(|et| EventTypeDef {
                    name: et.name.clone(),
                    labeled_args: vec![LabeledArgDef {
                        name: et.salient_arg.clone(),
                        labels: et
                            .classes
                            .iter()
                            .filter(|c| c.label != ABSENT_CLASS && c.label != MULTIPLE_CLASS)
                            .map(|c| c.label.clone())
                            .collect(),
                        required: true,
                    }],
                    span_args: if self.plant_span_args {
                        vec!["Detail".to_string()]
                    } else {
                        Vec::new()
                    },
                })
                .collect(),
        }
    }

    /// Salient-argument overrides for [`SurrogateSpec::from_schema`].
    pub fn salient_overrides(&self) -> BTreeMap<String, String> {
        self.event_types.iter().map(|et| (et.name.clone(), et.salient_arg.clone())).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub samples: Vec<Sample>,
    pub gold: AnnotationSet,
    pub labels: LabelMap,
    pub schema: EventSchema,
}

/// Deterministic random embeddings covering the spec's whole vocabulary
/// (fillers, cues, and detail keywords).
pub fn generate_embeddings(spec: &SyntheticSpec) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut table = EmbeddingTable::new(spec.embedding_dim);
    let mut add = |token: &str, table: &mut EmbeddingTable, rng: &mut ChaCha8Rng| {
        if table.get(token).is_none() {
            let v: Vec<f64> = (0..spec.embedding_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            table.insert(token.to_lowercase(), v).expect("fresh token");
        }
    };
    for i in 0..spec.filler_vocab {
        add(&format!("w{i}"), &mut table, &mut rng);
    }
    for et in &spec.event_types {
        for c in &et.classes {
            for cue in &c.cues {
                add(cue, &mut table, &mut rng);
            }
        }
        if spec.plant_span_args {
            add(&SyntheticSpec::detail_keyword(&et.name), &mut table, &mut rng);
        }
    }
    table
}

/// Generate samples with keyword-planted events, their gold annotations,
/// and the matching sample labels. Deterministic in `spec.seed`.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let schema = spec.schema();
    let mut samples = Vec::with_capacity(spec.samples);
    let mut gold = AnnotationSet::new();
    let mut labels: LabelMap = BTreeMap::new();

    let range = |rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    };

    for i in 0..spec.samples {
        let id = format!("syn{i:05}");
        let n_sentences = range(&mut rng, spec.sentences_per_sample);
        let mut grid: Vec<Vec<String>> = (0..n_sentences)
            .map(|_| {
                let len = range(&mut rng, spec.sentence_len);
                (0..len).map(|_| format!("w{}", rng.random_range(0..spec.filler_vocab))).collect()
            })
            .collect();
        // positions already claimed by a planted token
        let mut used: Vec<Vec<bool>> = grid.iter().map(|s| vec![false; s.len()]).collect();

        let mut events: Vec<Event> = Vec::new();
        let mut per_type_labels: BTreeMap<String, String> = BTreeMap::new();

        for et in &spec.event_types {
            let draw = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut chosen = et.classes.last().expect("validated non-empty classes");
            for c in &et.classes {
                acc += c.prevalence;
                if draw < acc {
                    chosen = c;
                    break;
                }
            }
            per_type_labels.insert(et.name.clone(), chosen.label.clone());
            let planted: Vec<&ClassSpec> = match chosen.label.as_str() {
                ABSENT_CLASS => Vec::new(),
                MULTIPLE_CLASS => {
                    let real: Vec<&ClassSpec> = et
                        .classes
                        .iter()
                        .filter(|c| c.label != ABSENT_CLASS && c.label != MULTIPLE_CLASS)
                        .collect();
                    let mut idx = rand::seq::index::sample(&mut rng, real.len(), 2).into_vec();
                    idx.sort();
                    idx.into_iter().map(|k| real[k]).collect()
                }
                _ => vec![chosen],
            };
            for class in planted {
                let needs_neighbor = spec.plant_span_args;
                let slots: Vec<(usize, usize)> = grid
                    .iter()
                    .enumerate()
                    .flat_map(|(j, sent)| {
                        let used = &used[j];
                        (0..sent.len())
                            .filter(|&p| {
                                !used[p] && (!needs_neighbor || (p + 1 < sent.len() && !used[p + 1]))
                            })
                            .map(move |p| (j, p))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let &(j, p) = slots
                    .get(rng.random_range(0..slots.len().max(1)).min(slots.len().saturating_sub(1)))
                    .ok_or_else(|| {
                        Error::data(format!(
                            "sample {id}: no free token positions left to plant {:?}",
                            et.name
                        ))
                    })?;
                used[j][p] = true;
                let cue = class.cues[rng.random_range(0..class.cues.len())].clone();
                let noisy = rng.random_range(0.0..1.0) < class.cue_noise;
                grid[j][p] = if noisy {
                    format!("w{}", rng.random_range(0..spec.filler_vocab))
                } else {
                    cue
                };
                let global = |j: usize, p: usize, grid: &[Vec<String>]| {
                    grid[..j].iter().map(Vec::len).sum::<usize>() + p
                };
                let trigger_tok = global(j, p, &grid);
                let mut event = Event::trigger_only(et.name.clone(), TokenSpan::single(trigger_tok));
                event.labeled_args.push(LabeledArgument {
                    arg_type: et.salient_arg.clone(),
                    span: TokenSpan::single(trigger_tok),
                    subtype: class.label.clone(),
                });
                if spec.plant_span_args {
                    used[j][p + 1] = true;
                    grid[j][p + 1] = SyntheticSpec::detail_keyword(&et.name);
                    event.span_args.push(SpanOnlyArgument {
                        arg_type: "Detail".to_string(),
                        span: TokenSpan::single(trigger_tok + 1),
                    });
                }
                events.push(event);
            }
        }

        let text = grid.iter().map(|s| s.join(" ")).collect::<Vec<_>>().join("\n");
        let sample = Sample::new(id.clone(), "synth", "SH", text);
        for event in &events {
            schema.validate_event(event, sample.tokens.len())?;
        }
        gold.insert(id.clone(), events);
        labels.insert(id, per_type_labels);
        samples.push(sample);
    }
    Ok(SyntheticCorpus { samples, gold, labels, schema })
}

// ---------------------------------------------------------------------------
// Closed-loop simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Active,
    Random,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(Strategy::Active),
            "random" => Ok(Strategy::Random),
            _ => Err(Error::data(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    /// Random seed-set size for the initial model.
    pub seed_size: usize,
    pub rounds: usize,
    pub batch_per_round: usize,
    /// Held-out evaluation split size.
    pub eval_size: usize,
    pub selection: SelectionConfig,
    pub train: TrainConfig,
    /// Also train the extractor each round and report its trigger F1.
    #[serde(default)]
    pub eval_extractor: bool,
    pub seed: u64,
}

impl CycleConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn validate(&self, corpus_size: usize) -> Result<()> {
        if self.seed_size == 0 || self.eval_size == 0 || self.batch_per_round == 0 {
            return Err(Error::data("seed_size, eval_size, and batch_per_round must be positive"));
        }
        if self.seed_size + self.eval_size > corpus_size {
            return Err(Error::data(format!(
                "splits need {} samples, corpus has {corpus_size}",
                self.seed_size + self.eval_size
            )));
        }
        self.selection.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub labeled_size: usize,
    /// Micro-F1 of argmax surrogate predictions over (sample, type) slots.
    pub surrogate_micro_f1: f64,
    pub per_type_f1: BTreeMap<String, f64>,
    pub extractor_trigger_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: Strategy,
    pub rounds: Vec<RoundMetrics>,
    /// Every id selected across rounds, in pick order.
    pub selected_ids: Vec<String>,
    /// Set when the pool ran out mid-round and the final batch was short.
    pub truncated: bool,
}

impl RunMetrics {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn final_f1(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.surrogate_micro_f1)
    }
}

/// Micro and per-type classification F1 of surrogate argmax predictions
/// against the gold labels.
fn surrogate_f1(
    model: &SurrogateModel,
    samples: &[&Sample],
    labels: &LabelMap,
    embeddings: &EmbeddingTable,
) -> (f64, BTreeMap<String, f64>) {
    let profiles: Vec<ProbProfile> =
        samples.par_iter().map(|s| model.forward(s, embeddings)).collect();
    let mut report = ScoreReport::new();
    let mut per_type: BTreeMap<String, ScoreReport> = BTreeMap::new();
    for (sample, profile) in samples.iter().zip(&profiles) {
        for (slot, entry) in profile.entries.iter().enumerate() {
            let classes = &model.spec.classes[slot];
            let pred = entry
                .probs
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                .0;
            let gold = &labels[&sample.id][&entry.event_type];
            let key = |class: &str| format!("{}/{class}", entry.event_type);
            let type_report = per_type.entry(entry.event_type.clone()).or_default();
            if &classes[pred] == gold {
                report.tally_mut(key(gold)).tp += 1;
                type_report.tally_mut(key(gold)).tp += 1;
            } else {
                report.tally_mut(key(&classes[pred])).fp += 1;
                report.tally_mut(key(gold)).fn_ += 1;
                type_report.tally_mut(key(&classes[pred])).fp += 1;
                type_report.tally_mut(key(gold)).fn_ += 1;
            }
        }
    }
    let per_type_f1 = per_type.into_iter().map(|(t, r)| (t, r.micro().f1())).collect();
    (report.micro().f1(), per_type_f1)
}

/// Run the annotate→train→select loop. The eval split, seed set, and pool
/// depend only on `config.seed`, so active and random arms see identical
/// data; each arm owns an independent RNG stream for its query.
pub fn run_cycle(
    corpus: &SyntheticCorpus,
    embeddings: &EmbeddingTable,
    config: &CycleConfig,
    strategy: Strategy,
) -> Result<RunMetrics> {
    config.validate(corpus.samples.len())?;
    let by_id: BTreeMap<&str, &Sample> =
        corpus.samples.iter().map(|s| (s.id.as_str(), s)).collect();

    // shared split
    let mut ids: Vec<String> = corpus.samples.iter().map(|s| s.id.clone()).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    ids.shuffle(&mut split_rng);
    let eval_ids: Vec<String> = ids[..config.eval_size].to_vec();
    let mut labeled: Vec<String> =
        ids[config.eval_size..config.eval_size + config.seed_size].to_vec();
    let mut pool: Vec<String> = ids[config.eval_size + config.seed_size..].to_vec();
    pool.sort();

    // arm-specific stream for the random query
    let mut arm_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x00c0_ffee);

    let surrogate_spec = SurrogateSpec::from_schema(&corpus.schema, &salient_overrides(&corpus.schema))?;
    let tfidf = fit_tfidf(&corpus.samples, TfMode::Raw);
    let vectors: BTreeMap<String, SampleVector> = corpus
        .samples
        .par_iter()
        .map(|s| sample_vector(s, embeddings, &tfidf).map(|v| (s.id.clone(), v)))
        .collect::<Result<_>>()?;

    let eval_samples: Vec<&Sample> = eval_ids.iter().map(|id| by_id[id.as_str()]).collect();
    let mut metrics = RunMetrics {
        strategy,
        rounds: Vec::new(),
        selected_ids: Vec::new(),
        truncated: false,
    };

    for round in 0..=config.rounds {
        let train_samples: Vec<&Sample> = labeled.iter().map(|id| by_id[id.as_str()]).collect();
        let trained =
            train_surrogate(&train_samples, &corpus.labels, embeddings, &surrogate_spec, &config.train)?;
        let (micro_f1, per_type_f1) =
            surrogate_f1(&trained.model, &eval_samples, &corpus.labels, embeddings);
        let extractor_trigger_f1 = if config.eval_extractor {
            let ext = crate::extractor::train_extractor(
                &train_samples,
                &corpus.gold,
                embeddings,
                &corpus.schema,
                &config.train,
            )?;
            let eval_refs: Vec<Sample> = eval_samples.iter().map(|s| (*s).clone()).collect();
            let pred = ext.model.predict_corpus(&eval_refs, embeddings);
            let mut gold_eval = AnnotationSet::new();
            for id in &eval_ids {
                gold_eval.insert(id.clone(), corpus.gold.get(id).to_vec());
            }
            Some(score_triggers(&gold_eval, &pred).micro().f1())
        } else {
            None
        };
        metrics.rounds.push(RoundMetrics {
            round,
            labeled_size: labeled.len(),
            surrogate_micro_f1: micro_f1,
            per_type_f1,
            extractor_trigger_f1,
        });

        if round == config.rounds || pool.is_empty() {
            break;
        }
        let want = config.batch_per_round;
        let batch_ids: Vec<String> = match strategy {
            Strategy::Active => {
                let pool_samples: Vec<&Sample> = pool.iter().map(|id| by_id[id.as_str()]).collect();
                let profiles: BTreeMap<String, ProbProfile> = pool_samples
                    .par_iter()
                    .map(|s| (s.id.clone(), trained.model.forward(s, embeddings)))
                    .collect();
                let mut cfg = config.selection;
                cfg.batch_size = want;
                greedy_select(&pool, &profiles, &vectors, &cfg)?.ids
            }
            Strategy::Random => {
                let take = want.min(pool.len());
                rand::seq::index::sample(&mut arm_rng, pool.len(), take)
                    .into_iter()
                    .map(|i| pool[i].clone())
                    .collect()
            }
        };
        if batch_ids.len() < want {
            metrics.truncated = true;
        }
        for id in batch_ids {
            pool.retain(|p| p != &id);
            metrics.selected_ids.push(id.clone());
            labeled.push(id);
        }
    }
    Ok(metrics)
}

/// Default salient-argument mapping for a schema: each event type's first
/// labeled argument.
pub fn salient_overrides(schema: &EventSchema) -> BTreeMap<String, String> {
    schema
        .event_types
        .iter()
        .filter_map(|et| et.labeled_args.first().map(|la| (et.name.clone(), la.name.clone())))
        .collect()
}

// ---------------------------------------------------------------------------
// Enrichment statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnrichmentRow {
    pub event_type: String,
    pub label: String,
    pub selected_rate: f64,
    pub baseline_rate: f64,
    /// `None` marks an infinite ratio (label absent from the baseline).
    pub ratio: Option<f64>,
}

/// Per-label frequency ratios between a selected set and a baseline set of
/// per-sample label assignments. Labels absent from both sides are omitted.
pub fn enrichment(
    selected: &[&BTreeMap<String, String>],
    baseline: &[&BTreeMap<String, String>],
) -> Result<Vec<EnrichmentRow>> {
    if selected.is_empty() || baseline.is_empty() {
        return Err(Error::data("enrichment requires non-empty label sets"));
    }
    let count = |labels: &[&BTreeMap<String, String>]| {
        let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
        for per_type in labels {
            for (event_type, label) in per_type.iter() {
                *counts.entry((event_type.clone(), label.clone())).or_insert(0) += 1;
            }
        }
        counts
    };
    let sel = count(selected);
    let base = count(baseline);
    let mut keys: Vec<(String, String)> = sel.keys().chain(base.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    Ok(keys
        .into_iter()
        .map(|key| {
            let selected_rate = sel.get(&key).copied().unwrap_or(0) as f64 / selected.len() as f64;
            let baseline_rate = base.get(&key).copied().unwrap_or(0) as f64 / baseline.len() as f64;
            let ratio = if baseline_rate > 0.0 { Some(selected_rate / baseline_rate) } else { None };
            EnrichmentRow { event_type: key.0, label: key.1, selected_rate, baseline_rate, ratio }
        })
        .collect())
}

/// Label assignments for a set of sample ids.
pub fn labels_for<'a>(labels: &'a LabelMap, ids: &[String]) -> Vec<&'a BTreeMap<String, String>> {
    ids.iter().filter_map(|id| labels.get(id)).collect()
}

// ---------------------------------------------------------------------------
// Welch's t-test
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchT {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's two-sample t-test (unequal variances), two-sided p-value via
/// the regularized incomplete beta function.
pub fn welch_t(sample_a: &[f64], sample_b: &[f64]) -> Result<WelchT> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::Degenerate("each sample needs at least two values".into()));
    }
    let (ma, va) = mean_var(sample_a);
    let (mb, vb) = mean_var(sample_b);
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    if va == 0.0 && vb == 0.0 {
        return Ok(if ma == mb {
            WelchT { t: 0.0, df: na + nb - 2.0, p_two_sided: 1.0 }
        } else {
            log::warn!("both samples have zero variance and different means; p = 0");
            WelchT {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df: na + nb - 2.0,
                p_two_sided: 0.0,
            }
        });
    }
    let sa = va / na;
    let sb = vb / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let x = df / (df + t * t);
    let p = reg_inc_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0);
    Ok(WelchT { t, df, p_two_sided: p })
}

/// ln Γ(x) by the Lanczos approximation (x > 0).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.180091729471457,
        -86.505320329416776,
        24.014098240830911,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz),
/// absolute tolerance 1e-10.
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-10;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}
