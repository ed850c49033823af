//! Surrogate text classifier: one self-attentive softmax head per event
//! type over fixed token embeddings, predicting a sample-level class from
//! the type's salient-argument label set extended with `multiple` (two or
//! more events of the type) and `absent` (no event of the type).
//!
//! Prediction entropy is the uncertainty source for batch selection.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::numcore::{
    cross_entropy, cross_entropy_logit_grad, head_backward, head_forward, head_shapes, init_head,
    Matrix, ParamStore, Sgd,
};
use crate::standoff::{AnnotationSet, Event, EventSchema};
use crate::vectors::EmbeddingTable;

pub const MULTIPLE_CLASS: &str = "multiple";
pub const ABSENT_CLASS: &str = "absent";

/// Head structure of the surrogate: event types in slot order, the class
/// list per type, and the salient argument the sample label derives from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub event_types: Vec<String>,
    /// Parallel to `event_types`: salient labels + `multiple` + `absent`.
    pub classes: Vec<Vec<String>>,
    /// Parallel to `event_types`: the labeled argument whose subtype is
    /// the sample label.
    pub salient_args: Vec<String>,
}

impl SurrogateSpec {
    /// Default structure: one head per schema event type, salient argument
    /// "Status" (overridable per type via `salient_overrides`).
    pub fn from_schema(
        schema: &EventSchema,
        salient_overrides: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut event_types = Vec::new();
        let mut classes = Vec::new();
        let mut salient_args = Vec::new();
        for et in &schema.event_types {
            let salient = salient_overrides
                .get(&et.name)
                .cloned()
                .unwrap_or_else(|| "Status".to_string());
            let def = schema.labeled_arg(&et.name, &salient).ok_or_else(|| {
                Error::schema(format!("no labeled argument {salient:?} for event type {:?}", et.name))
            })?;
            let mut cls = def.labels.clone();
            for reserved in [MULTIPLE_CLASS, ABSENT_CLASS] {
                if cls.iter().any(|c| c == reserved) {
                    return Err(Error::schema(format!(
                        "label set of {}::{salient} already contains {reserved:?}",
                        et.name
                    )));
                }
                cls.push(reserved.to_string());
            }
            event_types.push(et.name.clone());
            classes.push(cls);
            salient_args.push(salient);
        }
        Ok(SurrogateSpec { event_types, classes, salient_args })
    }

    pub fn class_index(&self, type_slot: usize, class: &str) -> Option<usize> {
        self.classes[type_slot].iter().position(|c| c == class)
    }

    pub fn type_slot(&self, event_type: &str) -> Option<usize> {
        self.event_types.iter().position(|t| t == event_type)
    }
}

/// sample_id -> event_type -> class.
pub type LabelMap = BTreeMap<String, BTreeMap<String, String>>;

/// Sample-level class for one event type: `absent` with zero events,
/// the salient-argument subtype with exactly one, `multiple` with two or
/// more. A single event missing the salient argument maps to `absent`
/// with a logged warning.
pub fn derive_sample_label(events: &[Event], event_type: &str, salient_arg: &str) -> String {
    let of_type: Vec<&Event> =
        events.iter().filter(|e| e.trigger.event_type == event_type).collect();
    match of_type.len() {
        0 => ABSENT_CLASS.to_string(),
        1 => match of_type[0].labeled_args.iter().find(|a| a.arg_type == salient_arg) {
            Some(arg) => arg.subtype.clone(),
            None => {
                log::warn!("event of type {event_type:?} lacks salient argument {salient_arg:?}");
                ABSENT_CLASS.to_string()
            }
        },
        _ => MULTIPLE_CLASS.to_string(),
    }
}

/// Derive sample labels for every (sample, event type) slot.
pub fn derive_labels(annotations: &AnnotationSet, sample_ids: &[String], spec: &SurrogateSpec) -> LabelMap {
    sample_ids
        .iter()
        .map(|id| {
            let events = annotations.get(id);
            let per_type = spec
                .event_types
                .iter()
                .zip(&spec.salient_args)
                .map(|(t, s)| (t.clone(), derive_sample_label(events, t, s)))
                .collect();
            (id.clone(), per_type)
        })
        .collect()
}

pub fn labels_to_json(labels: &LabelMap) -> Result<String> {
    Ok(serde_json::to_string_pretty(labels)?)
}

pub fn labels_from_json(json: &str) -> Result<LabelMap> {
    Ok(serde_json::from_str(json)?)
}

/// Per-event-type probability distribution for one sample. Entry order is
/// the model's slot order and drives `loop`-mode uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbProfile {
    pub sample_id: String,
    pub entries: Vec<ProfileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub event_type: String,
    pub probs: Vec<f64>,
}

impl ProbProfile {
    pub fn validate(&self) -> Result<()> {
        for entry in &self.entries {
            let sum: f64 = entry.probs.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || entry.probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::data(format!(
                    "profile {:?}/{} is not a probability distribution",
                    self.sample_id, entry.event_type
                )));
            }
        }
        Ok(())
    }
}

pub fn profiles_to_json(profiles: &[ProbProfile]) -> Result<String> {
    Ok(serde_json::to_string(profiles)?)
}

pub fn profiles_from_json(json: &str) -> Result<Vec<ProbProfile>> {
    let profiles: Vec<ProbProfile> = serde_json::from_str(json)?;
    for p in &profiles {
        p.validate()?;
    }
    Ok(profiles)
}

/// Shannon entropy in nats, with 0 ln 0 = 0.
pub fn entropy(dist: &[f64]) -> f64 {
    dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyMode {
    /// Sum of all per-type entropies.
    Sum,
    /// Entropy of a single type, cycling with the slot index.
    Loop,
}

impl std::str::FromStr for UncertaintyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(UncertaintyMode::Sum),
            "loop" => Ok(UncertaintyMode::Loop),
            _ => Err(Error::data(format!("unknown uncertainty mode {s:?}"))),
        }
    }
}

/// Uncertainty of one sample. In `Sum` mode the slot is ignored; in
/// `Loop` mode the entropy of entry `slot % K` is used.
pub fn sample_uncertainty(profile: &ProbProfile, mode: UncertaintyMode, slot: usize) -> f64 {
    match mode {
        UncertaintyMode::Sum => profile.entries.iter().map(|e| entropy(&e.probs)).sum(),
        UncertaintyMode::Loop => {
            let k = profile.entries.len();
            entropy(&profile.entries[slot % k].probs)
        }
    }
}

/// Trained surrogate: head parameters over a fixed embedding space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub spec: SurrogateSpec,
    pub dim: usize,
    pub params: ParamStore,
}

fn head_prefix(event_type: &str) -> String {
    format!("srg.{event_type}")
}

/// Embedding rows for the in-vocabulary tokens of a sample. `None` when
/// no token is in vocabulary.
pub(crate) fn invocab_matrix(sample: &Sample, embeddings: &EmbeddingTable) -> Option<Matrix> {
    let rows: Vec<Vec<f64>> = sample
        .tokens
        .iter()
        .filter_map(|t| embeddings.get(&t.text).map(<[f64]>::to_vec))
        .collect();
    if rows.is_empty() {
        None
    } else {
        Some(Matrix::from_rows(&rows))
    }
}

impl SurrogateModel {
    pub fn init(spec: SurrogateSpec, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (t, classes) in spec.event_types.iter().zip(&spec.classes) {
            init_head(&mut params, &head_prefix(t), classes.len(), 0, dim, &mut rng);
        }
        SurrogateModel { spec, dim, params }
    }

    pub fn expected_shapes(&self) -> BTreeMap<String, (usize, usize)> {
        expected_shapes(&self.spec, self.dim)
    }

    /// Per-type class distributions for one sample. A sample with no
    /// in-vocabulary tokens gets uniform distributions.
    pub fn forward(&self, sample: &Sample, embeddings: &EmbeddingTable) -> ProbProfile {
        let v = invocab_matrix(sample, embeddings);
        let entries = self
            .spec
            .event_types
            .iter()
            .zip(&self.spec.classes)
            .map(|(t, classes)| {
                let probs = match &v {
                    Some(v) => head_forward(&self.params, &head_prefix(t), v, &[]).probs,
                    None => vec![1.0 / classes.len() as f64; classes.len()],
                };
                ProfileEntry { event_type: t.clone(), probs }
            })
            .collect();
        ProbProfile { sample_id: sample.id.clone(), entries }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: SurrogateModel = serde_json::from_str(json)?;
        let expected = expected_shapes(&model.spec, model.dim);
        // revalidate tensor shapes through the checkpoint loader
        let params = ParamStore::from_json(&serde_json::to_string(&model.params)?, &expected)?;
        Ok(SurrogateModel { params, ..model })
    }
}

fn expected_shapes(spec: &SurrogateSpec, dim: usize) -> BTreeMap<String, (usize, usize)> {
    let mut shapes = BTreeMap::new();
    for (t, classes) in spec.event_types.iter().zip(&spec.classes) {
        for (name, shape) in head_shapes(&head_prefix(t), classes.len(), 0, dim) {
            shapes.insert(name, shape);
        }
    }
    shapes
}

/// Training hyperparameters shared by both models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 0.05, epochs: 100, momentum: 0.0, seed: 0 }
    }
}

/// A trained model plus the training-set loss trace: entry 0 is the loss
/// at initialization, entry k the loss after epoch k.
#[derive(Debug, Clone)]
pub struct TrainedSurrogate {
    pub model: SurrogateModel,
    pub epoch_losses: Vec<f64>,
}

struct LabeledInstance {
    matrix: Option<Matrix>,
    gold: Vec<usize>, // class index per head
}

fn prepare_instances(
    samples: &[&Sample],
    labels: &LabelMap,
    spec: &SurrogateSpec,
    embeddings: &EmbeddingTable,
) -> Result<Vec<LabeledInstance>> {
    samples
        .iter()
        .map(|sample| {
            let per_type = labels
                .get(&sample.id)
                .ok_or_else(|| Error::data(format!("no labels for sample {:?}", sample.id)))?;
            let gold = spec
                .event_types
                .iter()
                .enumerate()
                .map(|(slot, t)| {
                    let class = per_type.get(t).ok_or_else(|| {
                        Error::data(format!("sample {:?} lacks a label for {t:?}", sample.id))
                    })?;
                    spec.class_index(slot, class).ok_or_else(|| {
                        Error::data(format!("unknown class {class:?} for event type {t:?}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LabeledInstance { matrix: invocab_matrix(sample, embeddings), gold })
        })
        .collect()
}

fn dataset_loss(model: &SurrogateModel, instances: &[LabeledInstance]) -> Result<f64> {
    let mut total = 0.0;
    for inst in instances {
        if let Some(v) = &inst.matrix {
            for (slot, t) in model.spec.event_types.iter().enumerate() {
                let fwd = head_forward(&model.params, &head_prefix(t), v, &[]);
                total += cross_entropy(&fwd.probs, inst.gold[slot])?;
            }
        }
    }
    Ok(total)
}

/// Train by SGD on the summed per-head cross-entropy. Deterministic given
/// the seed: initialization, epoch shuffles, and updates all derive from
/// one seeded generator.
pub fn train_surrogate(
    samples: &[&Sample],
    labels: &LabelMap,
    embeddings: &EmbeddingTable,
    spec: &SurrogateSpec,
    config: &TrainConfig,
) -> Result<TrainedSurrogate> {
    if samples.is_empty() {
        return Err(Error::data("empty training set"));
    }
    let instances = prepare_instances(samples, labels, spec, embeddings)?;
    let mut model = SurrogateModel::init(spec.clone(), embeddings.dim(), config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut optimizer = Sgd::with_momentum(config.lr, config.momentum);

    let mut epoch_losses = vec![dataset_loss(&model, &instances)?];
    let mut order: Vec<usize> = (0..instances.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let inst = &instances[i];
            let Some(v) = &inst.matrix else { continue };
            for (slot, t) in model.spec.event_types.iter().enumerate() {
                let prefix = head_prefix(t);
                let fwd = head_forward(&model.params, &prefix, v, &[]);
                let dlogits = cross_entropy_logit_grad(&fwd.probs, inst.gold[slot]);
                head_backward(&mut model.params, &prefix, v, &fwd, &dlogits);
            }
            optimizer.step(&mut model.params)?;
        }
        epoch_losses.push(dataset_loss(&model, &instances)?);
    }
    Ok(TrainedSurrogate { model, epoch_losses })
}
