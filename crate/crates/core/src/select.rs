//! Batch-mode query function: Q(B) = sum over the batch of
//! (1 - s_i)^alpha * u(i), where u is surrogate-prediction entropy and
//! s_i is the candidate's average or maximum cosine similarity to the
//! batch. Selection greedily picks argmax Q(B + {i}).
//!
//! Per-candidate similarity caches (running sum / running max) make each
//! pick O(|pool|); a brute-force recomputation oracle guards them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::{sample_uncertainty, ProbProfile, UncertaintyMode};
use crate::vectors::{cosine_cached, SampleVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    Average,
    Maximum,
}

impl std::str::FromStr for SimilarityMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(SimilarityMode::Average),
            "maximum" => Ok(SimilarityMode::Maximum),
            _ => Err(Error::data(format!("unknown similarity mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub batch_size: usize,
    pub alpha: f64,
    pub similarity: SimilarityMode,
    pub uncertainty: UncertaintyMode,
    /// When set, the reported total Q rescores every member's similarity
    /// against the final batch instead of summing the frozen per-pick
    /// marginals. Picks are unaffected.
    #[serde(default)]
    pub rescore_final_batch: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::data("batch_size must be at least 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::data("alpha must be positive"));
        }
        Ok(())
    }
}

/// Diagnostics for one greedy pick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PickDiagnostics {
    pub rank: usize,
    pub sample_id: String,
    pub uncertainty: f64,
    pub similarity: f64,
    pub q_marginal: f64,
}

/// An ordered selection with per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Batch {
    pub ids: Vec<String>,
    pub steps: Vec<PickDiagnostics>,
    pub total_q: f64,
}

/// Average or maximum cosine similarity of `candidate` to the batch
/// members, excluding any member with the candidate's id. An empty
/// comparison set yields 0 (full diversity credit for the first pick).
pub fn similarity_to_batch(
    candidate: &SampleVector,
    batch: &[&SampleVector],
    mode: SimilarityMode,
) -> Result<f64> {
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for member in batch {
        if member.sample_id == candidate.sample_id {
            continue;
        }
        let c = cosine_cached(candidate, member)?;
        sum += c;
        max = max.max(c);
        count += 1;
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(match mode {
        SimilarityMode::Average => sum / count as f64,
        SimilarityMode::Maximum => max,
    })
}

/// Diversity factor (1 - s)^alpha, clamping the base at 0 so cosine = 1
/// cannot produce a negative base under fractional alpha.
fn diversity_weight(similarity: f64, alpha: f64) -> f64 {
    (1.0 - similarity).max(0.0).powf(alpha)
}

/// Score a complete batch: Q(B) = sum_i (1 - s_i)^alpha u(i), with each
/// member's similarity taken against the rest of the batch.
pub fn batch_score(
    members: &[(&SampleVector, f64)],
    alpha: f64,
    mode: SimilarityMode,
) -> Result<f64> {
    let vectors: Vec<&SampleVector> = members.iter().map(|(v, _)| *v).collect();
    let mut q = 0.0;
    for (vector, uncertainty) in members {
        let s = similarity_to_batch(vector, &vectors, mode)?;
        q += diversity_weight(s, alpha) * uncertainty;
    }
    Ok(q)
}

struct Candidate<'a> {
    id: &'a str,
    vector: &'a SampleVector,
    profile: &'a ProbProfile,
    sim_sum: f64,
    sim_max: f64,
}

impl Candidate<'_> {
    fn similarity(&self, batch_len: usize, mode: SimilarityMode) -> f64 {
        if batch_len == 0 {
            return 0.0;
        }
        match mode {
            SimilarityMode::Average => self.sim_sum / batch_len as f64,
            SimilarityMode::Maximum => self.sim_max,
        }
    }
}

/// Greedy batch selection: repeatedly pick the candidate maximizing
/// Q(B + {i}), i.e. the largest marginal (1 - s_i)^alpha u(i). Ties break
/// toward the lexicographically smaller sample id. In `loop` uncertainty
/// mode the event-type slot is the batch size at pick time. Stops at the
/// configured batch size or pool exhaustion.
pub fn greedy_select(
    pool: &[String],
    profiles: &BTreeMap<String, ProbProfile>,
    vectors: &BTreeMap<String, SampleVector>,
    config: &SelectionConfig,
) -> Result<Batch> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::data("empty selection pool"));
    }
    let mut ids: Vec<&String> = pool.iter().collect();
    ids.sort();
    ids.dedup();
    let mut candidates: Vec<Candidate> = ids
        .iter()
        .map(|id| {
            let vector = vectors
                .get(*id)
                .ok_or_else(|| Error::data(format!("missing vector for pool member {id:?}")))?;
            let profile = profiles
                .get(*id)
                .ok_or_else(|| Error::data(format!("missing profile for pool member {id:?}")))?;
            Ok(Candidate { id, vector, profile, sim_sum: 0.0, sim_max: f64::NEG_INFINITY })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = config.batch_size.min(candidates.len());
    let mut batch = Batch { ids: Vec::new(), steps: Vec::new(), total_q: 0.0 };
    let mut picked: Vec<(&SampleVector, f64)> = Vec::new();

    for rank in 0..n {
        let slot = batch.ids.len();
        let mut best: Option<(usize, f64, f64, f64)> = None; // (index, marginal, u, s)
        for (i, cand) in candidates.iter().enumerate() {
            let u = sample_uncertainty(cand.profile, config.uncertainty, slot);
            let s = cand.similarity(slot, config.similarity);
            let marginal = diversity_weight(s, config.alpha) * u;
            // candidates are in ascending id order; strict > keeps the
            // lexicographically smallest on ties
            if best.is_none() || marginal > best.unwrap().1 {
                best = Some((i, marginal, u, s));
            }
        }
        let (index, marginal, uncertainty, similarity) = best.expect("non-empty candidate set");
        let chosen = candidates.remove(index);
        for cand in &mut candidates {
            let c = cosine_cached(cand.vector, chosen.vector)?;
            cand.sim_sum += c;
            cand.sim_max = cand.sim_max.max(c);
        }
        picked.push((chosen.vector, uncertainty));
        batch.ids.push(chosen.id.to_string());
        batch.steps.push(PickDiagnostics {
            rank,
            sample_id: chosen.id.to_string(),
            uncertainty,
            similarity,
            q_marginal: marginal,
        });
        batch.total_q += marginal;
    }

    if config.rescore_final_batch {
        batch.total_q = batch_score(&picked, config.alpha, config.similarity)?;
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::ProfileEntry;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vector(id: &str, v: Vec<f64>) -> SampleVector {
        SampleVector::new(id, v)
    }

    fn profile(id: &str, dists: Vec<Vec<f64>>) -> ProbProfile {
        ProbProfile {
            sample_id: id.into(),
            entries: dists
                .into_iter()
                .enumerate()
                .map(|(i, probs)| ProfileEntry { event_type: format!("T{i}"), probs })
                .collect(),
        }
    }

    /// Distribution over two classes with entropy increasing in `p` up to 0.5.
    fn dist(p: f64) -> Vec<f64> {
        vec![p, 1.0 - p]
    }

    fn config(n: usize, alpha: f64, sim: SimilarityMode, unc: UncertaintyMode) -> SelectionConfig {
        SelectionConfig {
            batch_size: n,
            alpha,
            similarity: sim,
            uncertainty: unc,
            rescore_final_batch: false,
            seed: 0,
        }
    }

    #[test]
    fn similarity_empty_batch_is_zero() {
        let c = vector("c", vec![1.0, 0.0]);
        assert_eq!(similarity_to_batch(&c, &[], SimilarityMode::Average).unwrap(), 0.0);
        assert_eq!(similarity_to_batch(&c, &[], SimilarityMode::Maximum).unwrap(), 0.0);
    }

    #[test]
    fn similarity_identical_member_maximum_one() {
        let c = vector("c", vec![1.0, 2.0]);
        let twin = vector("twin", vec![1.0, 2.0]);
        let other = vector("o", vec![2.0, -1.0]);
        let s = similarity_to_batch(&c, &[&twin, &other], SimilarityMode::Maximum).unwrap();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn similarity_average_vs_maximum() {
        // members at cosines 0.2 and 0.8 from the candidate
        let c = vector("c", vec![1.0, 0.0]);
        let m1 = vector("m1", vec![0.2, (1.0f64 - 0.04).sqrt()]);
        let m2 = vector("m2", vec![0.8, (1.0f64 - 0.64).sqrt()]);
        let avg = similarity_to_batch(&c, &[&m1, &m2], SimilarityMode::Average).unwrap();
        let max = similarity_to_batch(&c, &[&m1, &m2], SimilarityMode::Maximum).unwrap();
        assert_abs_diff_eq!(avg, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(max, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn batch_score_examples() {
        // singleton: Q = u
        let v = vector("a", vec![1.0, 0.0]);
        let q = batch_score(&[(&v, 0.7)], 1.0, SimilarityMode::Maximum).unwrap();
        assert_abs_diff_eq!(q, 0.7, epsilon = 1e-12);

        // two members with mutual cosine 0.5, u = 1 each
        let a = vector("a", vec![1.0, 0.0]);
        let b = vector("b", vec![0.5, 0.75f64.sqrt()]);
        let q = batch_score(&[(&a, 1.0), (&b, 1.0)], 1.0, SimilarityMode::Maximum).unwrap();
        assert_abs_diff_eq!(q, 1.0, epsilon = 1e-12);

        let q = batch_score(&[(&a, 1.0), (&b, 1.0)], 0.1, SimilarityMode::Maximum).unwrap();
        assert_abs_diff_eq!(q, 2.0 * 0.5f64.powf(0.1), epsilon = 1e-12);
        assert_abs_diff_eq!(q, 1.8661, epsilon = 1e-4);
    }

    fn pool_of(
        entries: Vec<(&str, Vec<f64>, f64)>,
    ) -> (Vec<String>, BTreeMap<String, ProbProfile>, BTreeMap<String, SampleVector>) {
        let mut ids = Vec::new();
        let mut profiles = BTreeMap::new();
        let mut vectors = BTreeMap::new();
        for (id, v, p) in entries {
            ids.push(id.to_string());
            profiles.insert(id.to_string(), profile(id, vec![dist(p)]));
            vectors.insert(id.to_string(), vector(id, v));
        }
        (ids, profiles, vectors)
    }

    #[test]
    fn n1_picks_max_uncertainty() {
        let (ids, profiles, vectors) = pool_of(vec![
            ("a", vec![1.0, 0.0], 0.9),  // low entropy
            ("b", vec![0.0, 1.0], 0.5),  // max entropy
            ("c", vec![1.0, 1.0], 0.99), // near-zero entropy
        ]);
        let batch = greedy_select(
            &ids,
            &profiles,
            &vectors,
            &config(1, 1.0, SimilarityMode::Maximum, UncertaintyMode::Sum),
        )
        .unwrap();
        assert_eq!(batch.ids, vec!["b"]);
        assert_abs_diff_eq!(batch.steps[0].q_marginal, 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn oversized_batch_returns_whole_pool_in_pick_order() {
        let (ids, profiles, vectors) = pool_of(vec![
            ("a", vec![1.0, 0.0], 0.6),
            ("b", vec![0.0, 1.0], 0.5),
        ]);
        let batch = greedy_select(
            &ids,
            &profiles,
            &vectors,
            &config(10, 1.0, SimilarityMode::Average, UncertaintyMode::Sum),
        )
        .unwrap();
        assert_eq!(batch.ids.len(), 2);
        assert_eq!(batch.ids[0], "b");
    }

    #[test]
    fn missing_vector_is_an_error() {
        let (ids, profiles, mut vectors) = pool_of(vec![("a", vec![1.0], 0.5)]);
        vectors.clear();
        assert!(greedy_select(
            &ids,
            &profiles,
            &vectors,
            &config(1, 1.0, SimilarityMode::Average, UncertaintyMode::Sum)
        )
        .is_err());
    }

    #[test]
    fn duplicate_free_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let entries: Vec<(String, Vec<f64>, f64)> = (0..30)
            .map(|i| {
                let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                (format!("s{i:02}"), v, rng.random_range(0.5..1.0))
            })
            .collect();
        let refs: Vec<(&str, Vec<f64>, f64)> =
            entries.iter().map(|(id, v, p)| (id.as_str(), v.clone(), *p)).collect();
        let (ids, profiles, vectors) = pool_of(refs);
        let cfg = config(8, 0.1, SimilarityMode::Maximum, UncertaintyMode::Sum);
        let a = greedy_select(&ids, &profiles, &vectors, &cfg).unwrap();
        let b = greedy_select(&ids, &profiles, &vectors, &cfg).unwrap();
        assert_eq!(a, b);
        let mut unique = a.ids.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), a.ids.len());
    }

    #[test]
    fn clone_of_selected_sample_contributes_zero_marginal() {
        // "a" and its clone share a vector; maximum-mode similarity makes
        // the clone worthless once "a" is in the batch.
        let (ids, profiles, vectors) = pool_of(vec![
            ("a", vec![1.0, 0.0], 0.5),
            ("a_clone", vec![1.0, 0.0], 0.5),
            ("b", vec![0.0, 1.0], 0.8),
        ]);
        let batch = greedy_select(
            &ids,
            &profiles,
            &vectors,
            &config(2, 0.5, SimilarityMode::Maximum, UncertaintyMode::Sum),
        )
        .unwrap();
        // first pick "a" (ties with clone broken lexicographically), then
        // "b" despite its lower uncertainty
        assert_eq!(batch.ids, vec!["a", "b"]);
    }

    #[test]
    fn greedy_matches_naive_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..12 {
            let n_pool = rng.random_range(5..25);
            let entries: Vec<(String, Vec<f64>, f64)> = (0..n_pool)
                .map(|i| {
                    let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                    (format!("s{i:02}"), v, rng.random_range(0.5..1.0))
                })
                .collect();
            let refs: Vec<(&str, Vec<f64>, f64)> =
                entries.iter().map(|(id, v, p)| (id.as_str(), v.clone(), *p)).collect();
            let (ids, profiles, vectors) = pool_of(refs);
            let cfg = config(
                rng.random_range(1..6),
                [0.1, 1.0, 2.0][trial % 3],
                if trial % 2 == 0 { SimilarityMode::Average } else { SimilarityMode::Maximum },
                if trial % 4 < 2 { UncertaintyMode::Sum } else { UncertaintyMode::Loop },
            );
            let batch = greedy_select(&ids, &profiles, &vectors, &cfg).unwrap();

            // naive per-step recomputation without caches
            let mut remaining: Vec<&String> = {
                let mut v: Vec<&String> = ids.iter().collect();
                v.sort();
                v
            };
            let mut picked_ids: Vec<String> = Vec::new();
            for step in batch.steps.iter() {
                let slot = picked_ids.len();
                let batch_vecs: Vec<&SampleVector> =
                    picked_ids.iter().map(|id| &vectors[id]).collect();
                let mut best: Option<(&String, f64)> = None;
                for id in &remaining {
                    let u = sample_uncertainty(&profiles[*id], cfg.uncertainty, slot);
                    let s =
                        similarity_to_batch(&vectors[*id], &batch_vecs, cfg.similarity).unwrap();
                    let marginal = diversity_weight(s, cfg.alpha) * u;
                    if best.is_none() || marginal > best.unwrap().1 {
                        best = Some((id, marginal));
                    }
                }
                let (expect_id, expect_marginal) = best.unwrap();
                assert_eq!(&step.sample_id, expect_id, "trial {trial}");
                assert_abs_diff_eq!(step.q_marginal, expect_marginal, epsilon = 1e-9);
                picked_ids.push(expect_id.clone());
                remaining.retain(|id| *id != expect_id);
            }
        }
    }

    #[test]
    fn alpha_near_zero_approaches_pure_uncertainty_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let entries: Vec<(String, Vec<f64>, f64)> = (0..12)
            .map(|i| {
                let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                (format!("s{i:02}"), v, 0.5 + 0.04 * i as f64 / 2.0)
            })
            .collect();
        let refs: Vec<(&str, Vec<f64>, f64)> =
            entries.iter().map(|(id, v, p)| (id.as_str(), v.clone(), *p)).collect();
        let (ids, profiles, vectors) = pool_of(refs);
        let cfg = config(12, 1e-6, SimilarityMode::Average, UncertaintyMode::Sum);
        let batch = greedy_select(&ids, &profiles, &vectors, &cfg).unwrap();

        let mut by_uncertainty: Vec<(String, f64)> = ids
            .iter()
            .map(|id| (id.clone(), sample_uncertainty(&profiles[id], UncertaintyMode::Sum, 0)))
            .collect();
        by_uncertainty.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let expected: Vec<String> = by_uncertainty.into_iter().map(|(id, _)| id).collect();
        assert_eq!(batch.ids, expected);
    }

    #[test]
    fn q_monotone_in_uncertainty() {
        let a = vector("a", vec![1.0, 0.2]);
        let b = vector("b", vec![0.3, 1.0]);
        let q_low = batch_score(&[(&a, 0.5), (&b, 0.7)], 1.0, SimilarityMode::Average).unwrap();
        let q_high = batch_score(&[(&a, 0.9), (&b, 0.7)], 1.0, SimilarityMode::Average).unwrap();
        assert!(q_high > q_low);
    }

    #[test]
    fn rescore_final_batch_changes_only_total() {
        let (ids, profiles, vectors) = pool_of(vec![
            ("a", vec![1.0, 0.0], 0.5),
            ("b", vec![0.9, 0.1], 0.55),
            ("c", vec![0.0, 1.0], 0.6),
        ]);
        let mut cfg = config(3, 1.0, SimilarityMode::Average, UncertaintyMode::Sum);
        let frozen = greedy_select(&ids, &profiles, &vectors, &cfg).unwrap();
        cfg.rescore_final_batch = true;
        let rescored = greedy_select(&ids, &profiles, &vectors, &cfg).unwrap();
        assert_eq!(frozen.ids, rescored.ids);
        assert_eq!(frozen.steps, rescored.steps);
        assert!(frozen.total_q != rescored.total_q);
    }
}
