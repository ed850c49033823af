//! Slot-filling evaluation: trigger alignment by span-center distance,
//! labeled-argument equivalence (type + subtype, spans ignored), token-level
//! span-only scoring, micro-averaged P/R/F1, and sentence-level Cohen's
//! kappa for trigger agreement.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::standoff::{AnnotationSet, Event};

/// TP/FP/FN counts for one report key.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Tally {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Tally { tp, fp, fn_ }
    }

    /// tp / (tp + fp), with 0/0 -> 0.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// tp / (tp + fn), with 0/0 -> 0.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, with 0/0 -> 0.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn add(&mut self, other: &Tally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Tallies keyed by category. Keys are `/`-joined:
/// `event_type`, `event_type/arg_type`, or `event_type/arg_type/subtype`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreReport {
    pub per_key: BTreeMap<String, Tally>,
}

impl ScoreReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tally_mut(&mut self, key: impl Into<String>) -> &mut Tally {
        self.per_key.entry(key.into()).or_default()
    }

    pub fn merge(mut self, other: ScoreReport) -> ScoreReport {
        for (key, tally) in other.per_key {
            self.tally_mut(key).add(&tally);
        }
        self
    }

    /// Micro average: sum counts across keys, then recompute P/R/F1.
    pub fn micro(&self) -> Tally {
        let mut total = Tally::default();
        for tally in self.per_key.values() {
            total.add(&tally.clone());
        }
        total
    }

    /// JSON value with derived precision/recall/F1 per key and micro.
    pub fn to_json_value(&self) -> serde_json::Value {
        let row = |t: &Tally| {
            serde_json::json!({
                "tp": t.tp, "fp": t.fp, "fn": t.fn_,
                "precision": t.precision(), "recall": t.recall(), "f1": t.f1(),
            })
        };
        let keys: serde_json::Map<String, serde_json::Value> =
            self.per_key.iter().map(|(k, t)| (k.clone(), row(t))).collect();
        serde_json::json!({ "per_key": keys, "micro": row(&self.micro()) })
    }
}

/// Micro-average a set of keyed reports into one summary tally.
pub fn micro_average<'a>(reports: impl IntoIterator<Item = &'a ScoreReport>) -> Tally {
    let mut total = Tally::default();
    for report in reports {
        total.add(&report.micro());
    }
    total
}

/// One gold/pred trigger match.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedPair {
    pub gold_index: usize,
    pub pred_index: usize,
    pub event_type: String,
    pub center_distance: f64,
}

/// Align same-type triggers by greedily accepting the closest span-center
/// pairs. Ties break on gold start token, then pred start token. There is
/// no maximum-distance cutoff; min(|gold|, |pred|) pairs are produced.
pub fn align_triggers(gold: &[Event], pred: &[Event], event_type: &str) -> Vec<AlignedPair> {
    let gold_idx: Vec<usize> =
        (0..gold.len()).filter(|&i| gold[i].trigger.event_type == event_type).collect();
    let pred_idx: Vec<usize> =
        (0..pred.len()).filter(|&i| pred[i].trigger.event_type == event_type).collect();

    let mut candidates: Vec<(f64, usize, usize, usize, usize)> = Vec::new();
    for &g in &gold_idx {
        for &p in &pred_idx {
            let d = (gold[g].trigger.span.center() - pred[p].trigger.span.center()).abs();
            candidates.push((d, gold[g].trigger.span.start, pred[p].trigger.span.start, g, p));
        }
    }
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
            .then(a.4.cmp(&b.4))
    });

    let mut gold_used = vec![false; gold.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (d, _, _, g, p) in candidates {
        if !gold_used[g] && !pred_used[p] {
            gold_used[g] = true;
            pred_used[p] = true;
            pairs.push(AlignedPair {
                gold_index: g,
                pred_index: p,
                event_type: event_type.to_string(),
                center_distance: d,
            });
        }
    }
    pairs
}

fn event_types_present(gold: &[Event], pred: &[Event]) -> Vec<String> {
    let mut types: Vec<String> = gold
        .iter()
        .chain(pred)
        .map(|e| e.trigger.event_type.clone())
        .collect();
    types.sort();
    types.dedup();
    types
}

/// Trigger alignment across all event types of one sample.
pub fn aligned_event_pairs(gold: &[Event], pred: &[Event]) -> Vec<AlignedPair> {
    event_types_present(gold, pred)
        .iter()
        .flat_map(|t| align_triggers(gold, pred, t))
        .collect()
}

fn sample_universe<'a>(gold: &'a AnnotationSet, pred: &'a AnnotationSet) -> Vec<&'a str> {
    let mut ids: Vec<&str> = gold.sample_ids().chain(pred.sample_ids()).collect();
    ids.sort();
    ids.dedup();
    ids
}

fn score_samples<F>(gold: &AnnotationSet, pred: &AnnotationSet, per_sample: F) -> ScoreReport
where
    F: Fn(&[Event], &[Event]) -> ScoreReport + Sync,
{
    sample_universe(gold, pred)
        .par_iter()
        .map(|id| per_sample(gold.get(id), pred.get(id)))
        .reduce(ScoreReport::new, ScoreReport::merge)
}

/// Trigger P/R/F1 per event type: a TP is an aligned same-type pair.
pub fn score_triggers(gold: &AnnotationSet, pred: &AnnotationSet) -> ScoreReport {
    score_samples(gold, pred, |g, p| {
        let mut report = ScoreReport::new();
        for event_type in event_types_present(g, p) {
            let pairs = align_triggers(g, p, &event_type) .len() as u64;
            let n_gold = g.iter().filter(|e| e.trigger.event_type == event_type).count() as u64;
            let n_pred = p.iter().filter(|e| e.trigger.event_type == event_type).count() as u64;
            let t = report.tally_mut(event_type);
            t.tp += pairs;
            t.fn_ += n_gold - pairs;
            t.fp += n_pred - pairs;
        }
        report
    })
}

/// Labeled arguments of aligned events match when argument type and
/// subtype both match; spans are ignored. Arguments of unaligned events
/// count wholly against recall (gold) or precision (pred).
/// Keys are `event_type/arg_type/subtype`.
pub fn score_labeled_args(gold: &AnnotationSet, pred: &AnnotationSet) -> ScoreReport {
    score_samples(gold, pred, |g, p| {
        let mut report = ScoreReport::new();
        let pairs = aligned_event_pairs(g, p);
        let mut gold_aligned = vec![false; g.len()];
        let mut pred_aligned = vec![false; p.len()];
        for pair in &pairs {
            gold_aligned[pair.gold_index] = true;
            pred_aligned[pair.pred_index] = true;
            let ge = &g[pair.gold_index];
            let pe = &p[pair.pred_index];
            let et = &pair.event_type;
            for ga in &ge.labeled_args {
                match pe.labeled_args.iter().find(|pa| pa.arg_type == ga.arg_type) {
                    Some(pa) if pa.subtype == ga.subtype => {
                        report.tally_mut(format!("{et}/{}/{}", ga.arg_type, ga.subtype)).tp += 1;
                    }
                    Some(pa) => {
                        report.tally_mut(format!("{et}/{}/{}", ga.arg_type, ga.subtype)).fn_ += 1;
                        report.tally_mut(format!("{et}/{}/{}", pa.arg_type, pa.subtype)).fp += 1;
                    }
                    None => {
                        report.tally_mut(format!("{et}/{}/{}", ga.arg_type, ga.subtype)).fn_ += 1;
                    }
                }
            }
            for pa in &pe.labeled_args {
                if !ge.labeled_args.iter().any(|ga| ga.arg_type == pa.arg_type) {
                    report.tally_mut(format!("{et}/{}/{}", pa.arg_type, pa.subtype)).fp += 1;
                }
            }
        }
        for (i, e) in g.iter().enumerate() {
            if !gold_aligned[i] {
                for ga in &e.labeled_args {
                    report
                        .tally_mut(format!("{}/{}/{}", e.trigger.event_type, ga.arg_type, ga.subtype))
                        .fn_ += 1;
                }
            }
        }
        for (i, e) in p.iter().enumerate() {
            if !pred_aligned[i] {
                for pa in &e.labeled_args {
                    report
                        .tally_mut(format!("{}/{}/{}", e.trigger.event_type, pa.arg_type, pa.subtype))
                        .fp += 1;
                }
            }
        }
        report
    })
}

fn span_token_sets(event: &Event) -> BTreeMap<String, std::collections::BTreeSet<usize>> {
    let mut sets: BTreeMap<String, std::collections::BTreeSet<usize>> = BTreeMap::new();
    for sa in &event.span_args {
        sets.entry(sa.arg_type.clone()).or_default().extend(sa.span.indices());
    }
    sets
}

/// Span-only arguments of aligned events are compared token-by-token
/// (union of spans per argument type) so partial overlaps earn partial
/// credit. Keys are `event_type/arg_type`.
pub fn score_span_args(gold: &AnnotationSet, pred: &AnnotationSet) -> ScoreReport {
    score_samples(gold, pred, |g, p| {
        let mut report = ScoreReport::new();
        let pairs = aligned_event_pairs(g, p);
        let mut gold_aligned = vec![false; g.len()];
        let mut pred_aligned = vec![false; p.len()];
        for pair in &pairs {
            gold_aligned[pair.gold_index] = true;
            pred_aligned[pair.pred_index] = true;
            let gsets = span_token_sets(&g[pair.gold_index]);
            let psets = span_token_sets(&p[pair.pred_index]);
            let mut arg_types: Vec<&String> = gsets.keys().chain(psets.keys()).collect();
            arg_types.sort();
            arg_types.dedup();
            for at in arg_types {
                let empty = std::collections::BTreeSet::new();
                let gs = gsets.get(at).unwrap_or(&empty);
                let ps = psets.get(at).unwrap_or(&empty);
                let t = report.tally_mut(format!("{}/{at}", pair.event_type));
                t.tp += gs.intersection(ps).count() as u64;
                t.fn_ += gs.difference(ps).count() as u64;
                t.fp += ps.difference(gs).count() as u64;
            }
        }
        for (i, e) in g.iter().enumerate() {
            if !gold_aligned[i] {
                for (at, tokens) in span_token_sets(e) {
                    report.tally_mut(format!("{}/{at}", e.trigger.event_type)).fn_ +=
                        tokens.len() as u64;
                }
            }
        }
        for (i, e) in p.iter().enumerate() {
            if !pred_aligned[i] {
                for (at, tokens) in span_token_sets(e) {
                    report.tally_mut(format!("{}/{at}", e.trigger.event_type)).fp +=
                        tokens.len() as u64;
                }
            }
        }
        report
    })
}

/// Sentence-level 2x2 agreement statistics for one event type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaStats {
    /// Both annotators absent.
    pub n00: u64,
    /// A absent, B present.
    pub n01: u64,
    /// A present, B absent.
    pub n10: u64,
    /// Both present.
    pub n11: u64,
    pub p_o: f64,
    pub p_e: f64,
    pub kappa: f64,
    /// Fraction of sentences with zero or one trigger of the type in
    /// either annotation set (the rest are excluded).
    pub coverage_fraction: f64,
}

/// Compute kappa from an explicit 2x2 confusion matrix.
pub fn kappa_from_counts(n00: u64, n01: u64, n10: u64, n11: u64) -> Result<KappaStats> {
    let n = n00 + n01 + n10 + n11;
    if n == 0 {
        return Err(Error::Degenerate("kappa over zero sentences".into()));
    }
    let nf = n as f64;
    let p_o = (n00 + n11) as f64 / nf;
    let a_present = (n10 + n11) as f64 / nf;
    let b_present = (n01 + n11) as f64 / nf;
    let p_e = a_present * b_present + (1.0 - a_present) * (1.0 - b_present);
    let kappa = if p_e >= 1.0 {
        // Degenerate marginals force p_o = 1; perfect agreement.
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(KappaStats { n00, n01, n10, n11, p_o, p_e, kappa, coverage_fraction: 1.0 })
}

/// Cohen's kappa for trigger annotation of `event_type`, over the subset
/// of sentences where neither annotator placed two or more triggers of
/// that type. Sentences are taken from `samples`; a trigger belongs to
/// the sentence containing its first token.
pub fn cohens_kappa(
    ann_a: &AnnotationSet,
    ann_b: &AnnotationSet,
    samples: &[Sample],
    event_type: &str,
) -> Result<KappaStats> {
    let mut counts = [0u64; 4]; // [n00, n01, n10, n11]
    let mut total_sentences = 0u64;
    let mut qualifying = 0u64;
    for sample in samples {
        let count_per_sentence = |events: &[Event]| -> Vec<u64> {
            let mut counts = vec![0u64; sample.sentence_bounds.len()];
            for e in events.iter().filter(|e| e.trigger.event_type == event_type) {
                if let Some(s) = sample.sentence_of(e.trigger.span.start) {
                    counts[s] += 1;
                }
            }
            counts
        };
        let a_counts = count_per_sentence(ann_a.get(&sample.id));
        let b_counts = count_per_sentence(ann_b.get(&sample.id));
        for (a, b) in a_counts.iter().zip(&b_counts) {
            total_sentences += 1;
            if *a >= 2 || *b >= 2 {
                continue;
            }
            qualifying += 1;
            let idx = (*a as usize) * 2 + (*b as usize);
            counts[match idx {
                0 => 0, // absent/absent
                1 => 1, // absent/present
                2 => 2, // present/absent
                _ => 3,
            }] += 1;
        }
    }
    if qualifying == 0 {
        return Err(Error::Degenerate(format!(
            "no sentences with zero or one {event_type:?} trigger in either annotation set"
        )));
    }
    let mut stats = kappa_from_counts(counts[0], counts[1], counts[2], counts[3])?;
    stats.coverage_fraction = qualifying as f64 / total_sentences as f64;
    Ok(stats)
}

/// Kappa per event type. Types for which kappa is undefined (no
/// qualifying sentences) are reported as `None`.
pub fn kappa_report(
    ann_a: &AnnotationSet,
    ann_b: &AnnotationSet,
    samples: &[Sample],
    event_types: &[String],
) -> BTreeMap<String, Option<KappaStats>> {
    event_types
        .iter()
        .map(|t| (t.clone(), cohens_kappa(ann_a, ann_b, samples, t).ok()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::standoff::TokenSpan;
    use approx::assert_abs_diff_eq;

    fn ev(event_type: &str, start: usize, end: usize) -> Event {
        Event::trigger_only(event_type, TokenSpan::new(start, end).unwrap())
    }

    fn set(entries: Vec<(&str, Vec<Event>)>) -> AnnotationSet {
        let mut s = AnnotationSet::new();
        for (id, events) in entries {
            s.insert(id, events);
        }
        s
    }

    #[test]
    fn alignment_overlapping_spans() {
        let gold = vec![ev("Drug", 8, 9)];
        let pred = vec![ev("Drug", 8, 10)];
        let pairs = align_triggers(&gold, &pred, "Drug");
        assert_eq!(pairs.len(), 1);
        assert_abs_diff_eq!(pairs[0].center_distance, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn alignment_empty_pred() {
        let gold = vec![ev("Drug", 8, 9)];
        assert!(align_triggers(&gold, &[], "Drug").is_empty());
    }

    #[test]
    fn alignment_prefers_global_nearest() {
        // gold centers {2, 10}, pred centers {3, 9} -> (2,3) and (10,9),
        // matching the brute-force minimum-total-distance assignment.
        let gold = vec![ev("Drug", 2, 3), ev("Drug", 10, 11)];
        let pred = vec![ev("Drug", 3, 4), ev("Drug", 9, 10)];
        let pairs = align_triggers(&gold, &pred, "Drug");
        assert_eq!(pairs.len(), 2);
        let m: BTreeMap<usize, usize> = pairs.iter().map(|p| (p.gold_index, p.pred_index)).collect();
        assert_eq!(m.get(&0), Some(&0));
        assert_eq!(m.get(&1), Some(&1));
    }

    #[test]
    fn trigger_identity_scores_one() {
        let gold = set(vec![
            ("a", vec![ev("Drug", 0, 1), ev("Alcohol", 4, 5)]),
            ("b", vec![ev("Tobacco", 2, 3)]),
        ]);
        let report = score_triggers(&gold, &gold);
        for tally in report.per_key.values() {
            assert_eq!(tally.precision(), 1.0);
            assert_eq!(tally.recall(), 1.0);
            assert_eq!(tally.f1(), 1.0);
        }
        assert_eq!(report.micro().f1(), 1.0);
    }

    #[test]
    fn trigger_partial_recall() {
        let gold = set(vec![("a", vec![ev("Drug", 0, 1), ev("Drug", 8, 9)])]);
        let pred = set(vec![("a", vec![ev("Drug", 0, 1)])]);
        let report = score_triggers(&gold, &pred);
        let t = report.per_key.get("Drug").unwrap();
        assert_eq!((t.tp, t.fp, t.fn_), (1, 0, 1));
        assert_eq!(t.precision(), 1.0);
        assert_eq!(t.recall(), 0.5);
        assert_abs_diff_eq!(t.f1(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn trigger_type_mismatch_scores_zero() {
        let gold = set(vec![("a", vec![ev("Alcohol", 0, 1)])]);
        let pred = set(vec![("a", vec![ev("Tobacco", 0, 1)])]);
        let report = score_triggers(&gold, &pred);
        assert_eq!(report.micro().tp, 0);
        assert_eq!(report.micro().f1(), 0.0);
        assert_eq!(report.per_key.get("Alcohol").unwrap().fn_, 1);
        assert_eq!(report.per_key.get("Tobacco").unwrap().fp, 1);
    }

    fn with_labeled(mut event: Event, arg_type: &str, span: TokenSpan, subtype: &str) -> Event {
        event.labeled_args.push(crate::standoff::LabeledArgument {
            arg_type: arg_type.into(),
            span,
            subtype: subtype.into(),
        });
        event
    }

    fn with_span_arg(mut event: Event, arg_type: &str, span: TokenSpan) -> Event {
        event.span_args.push(crate::standoff::SpanOnlyArgument { arg_type: arg_type.into(), span });
        event
    }

    #[test]
    fn labeled_args_match_on_type_and_subtype_only() {
        // same subtype on different spans is still a TP
        let gold = set(vec![(
            "a",
            vec![with_labeled(ev("Drug", 8, 9), "Status", TokenSpan::single(9), "current")],
        )]);
        let pred = set(vec![(
            "a",
            vec![with_labeled(ev("Drug", 8, 10), "Status", TokenSpan::single(7), "current")],
        )]);
        let report = score_labeled_args(&gold, &pred);
        let t = report.per_key.get("Drug/Status/current").unwrap();
        assert_eq!((t.tp, t.fp, t.fn_), (1, 0, 0));
    }

    #[test]
    fn labeled_args_subtype_mismatch_is_fp_plus_fn() {
        let gold = set(vec![(
            "a",
            vec![with_labeled(ev("Drug", 8, 9), "Status", TokenSpan::single(9), "current")],
        )]);
        let pred = set(vec![(
            "a",
            vec![with_labeled(ev("Drug", 8, 9), "Status", TokenSpan::single(9), "past")],
        )]);
        let report = score_labeled_args(&gold, &pred);
        assert_eq!(report.per_key.get("Drug/Status/current").unwrap().fn_, 1);
        assert_eq!(report.per_key.get("Drug/Status/past").unwrap().fp, 1);
        assert_eq!(report.micro().tp, 0);
    }

    #[test]
    fn labeled_arg_on_unaligned_gold_event_is_fn() {
        let gold = set(vec![(
            "a",
            vec![with_labeled(ev("Drug", 8, 9), "Status", TokenSpan::single(9), "current")],
        )]);
        let pred = set(vec![("a", vec![])]);
        let report = score_labeled_args(&gold, &pred);
        let t = report.per_key.get("Drug/Status/current").unwrap();
        assert_eq!((t.tp, t.fp, t.fn_), (0, 0, 1));
    }

    #[test]
    fn span_args_token_level() {
        // exact match
        let gold = set(vec![("a", vec![with_span_arg(ev("Drug", 8, 9), "Type", TokenSpan::single(7))])]);
        let report = score_span_args(&gold, &gold);
        let t = report.per_key.get("Drug/Type").unwrap();
        assert_eq!((t.tp, t.fp, t.fn_), (1, 0, 0));
        assert_eq!(t.f1(), 1.0);

        // partial: gold {13,14}, pred {13}
        let gold = set(vec![(
            "a",
            vec![with_span_arg(ev("Employment", 10, 11), "Type", TokenSpan::new(13, 15).unwrap())],
        )]);
        let pred = set(vec![(
            "a",
            vec![with_span_arg(ev("Employment", 10, 11), "Type", TokenSpan::single(13))],
        )]);
        let report = score_span_args(&gold, &pred);
        let t = report.per_key.get("Employment/Type").unwrap();
        assert_eq!((t.tp, t.fp, t.fn_), (1, 0, 1));
        assert_eq!(t.precision(), 1.0);
        assert_eq!(t.recall(), 0.5);
        assert_abs_diff_eq!(t.f1(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn span_args_of_unaligned_pred_event_all_fp() {
        let gold = set(vec![("a", vec![])]);
        let pred = set(vec![(
            "a",
            vec![with_span_arg(ev("Drug", 0, 1), "Amount", TokenSpan::new(2, 5).unwrap())],
        )]);
        let report = score_span_args(&gold, &pred);
        let t = report.per_key.get("Drug/Amount").unwrap();
        assert_eq!((t.tp, t.fp, t.fn_), (0, 3, 0));
    }

    #[test]
    fn swapping_gold_and_pred_swaps_precision_and_recall() {
        let a = set(vec![(
            "s",
            vec![
                with_labeled(ev("Drug", 0, 1), "Status", TokenSpan::single(0), "current"),
                ev("Alcohol", 5, 6),
            ],
        )]);
        let b = set(vec![(
            "s",
            vec![with_labeled(ev("Drug", 0, 2), "Status", TokenSpan::single(1), "past")],
        )]);
        for score in [score_triggers, score_labeled_args, score_span_args] {
            let fwd = score(&a, &b).micro();
            let rev = score(&b, &a).micro();
            assert_eq!(fwd.tp, rev.tp);
            assert_eq!(fwd.fp, rev.fn_);
            assert_eq!(fwd.fn_, rev.fp);
            assert_abs_diff_eq!(fwd.precision(), rev.recall(), epsilon = 1e-15);
            assert_abs_diff_eq!(fwd.f1(), rev.f1(), epsilon = 1e-15);
        }
    }

    #[test]
    fn micro_average_arithmetic() {
        let mut report = ScoreReport::new();
        *report.tally_mut("x") = Tally::new(1, 0, 0);
        assert_eq!(report.micro(), Tally::new(1, 0, 0));

        *report.tally_mut("y") = Tally::new(0, 1, 1);
        let micro = report.micro();
        assert_eq!(micro.precision(), 0.5);
        assert_eq!(micro.recall(), 0.5);

        let zeros = ScoreReport::new();
        let t = zeros.micro();
        assert_eq!((t.precision(), t.recall(), t.f1()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn kappa_worked_examples() {
        let s = kappa_from_counts(4, 1, 1, 4).unwrap();
        assert_abs_diff_eq!(s.p_o, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p_e, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.kappa, 0.6, epsilon = 1e-12);

        let s = kappa_from_counts(25, 25, 25, 25).unwrap();
        assert_abs_diff_eq!(s.p_o, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p_e, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.kappa, 0.0, epsilon = 1e-12);

        // perfect agreement with mixed marginals
        let s = kappa_from_counts(6, 0, 0, 4).unwrap();
        assert_abs_diff_eq!(s.kappa, 1.0, epsilon = 1e-12);

        assert!(kappa_from_counts(0, 0, 0, 0).is_err());
    }

    #[test]
    fn kappa_excludes_multi_trigger_sentences() {
        // two sentences of 3 tokens each
        let sample = Sample::new("s", "unit", "SH", "quit smoking .\ndrinks beer daily");
        assert_eq!(sample.sentence_bounds.len(), 2);
        // annotator A: one Drug trigger in each sentence
        // annotator B: two Drug triggers in sentence 0, one in sentence 1
        let a = set(vec![("s", vec![ev("Drug", 0, 1), ev("Drug", 3, 4)])]);
        let b = set(vec![("s", vec![ev("Drug", 0, 1), ev("Drug", 1, 2), ev("Drug", 4, 5)])]);
        let stats = cohens_kappa(&a, &b, &[sample], "Drug").unwrap();
        // sentence 0 excluded (B has 2); sentence 1 is present/present
        assert_eq!((stats.n00, stats.n01, stats.n10, stats.n11), (0, 0, 0, 1));
        assert_abs_diff_eq!(stats.coverage_fraction, 0.5, epsilon = 1e-12);
        assert_eq!(stats.kappa, 1.0);
    }

    #[test]
    fn kappa_identity_is_one() {
        let sample = Sample::new("s", "unit", "SH", "smokes daily .\nno alcohol use .\nworks retail");
        let a = set(vec![("s", vec![ev("Tobacco", 0, 1), ev("Employment", 7, 8)])]);
        let stats = cohens_kappa(&a, &a, &[sample.clone()], "Tobacco").unwrap();
        assert_eq!(stats.kappa, 1.0);
        let stats = cohens_kappa(&a, &a, &[sample], "Employment").unwrap();
        assert_eq!(stats.kappa, 1.0);
    }

    #[test]
    fn kappa_undefined_without_sentences() {
        assert!(matches!(
            cohens_kappa(&AnnotationSet::new(), &AnnotationSet::new(), &[], "Drug"),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn deleting_pred_events_never_increases_fp() {
        let gold = set(vec![("a", vec![ev("Drug", 0, 1), ev("Drug", 5, 6)])]);
        let full = set(vec![("a", vec![ev("Drug", 0, 1), ev("Drug", 5, 6), ev("Drug", 9, 10)])]);
        let fewer = set(vec![("a", vec![ev("Drug", 0, 1), ev("Drug", 5, 6)])]);
        let fp_full = score_triggers(&gold, &full).micro().fp;
        let fp_fewer = score_triggers(&gold, &fewer).micro().fp;
        assert!(fp_fewer <= fp_full);
    }
}
