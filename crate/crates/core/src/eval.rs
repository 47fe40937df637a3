//! Retrieval evaluation (mAP and CMC under the same-camera junk rule) and the
//! intra/inter-class distance statistics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::linalg::{dot_slice, seeded_rng, FeatureVector};

/// Above this many instances, distance statistics are estimated from
/// `DISTANCE_SAMPLE_PAIRS` random pairs instead of enumerating all pairs.
pub const EXACT_DISTANCE_LIMIT: usize = 3000;
pub const DISTANCE_SAMPLE_PAIRS: usize = 1_000_000;
const DISTANCE_SAMPLE_SEED: u64 = 0x5eed_d157;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalSplit {
    pub query: Vec<usize>,
    pub gallery: Vec<usize>,
}

impl RetrievalSplit {
    /// Checks that query and gallery are disjoint, refer to real instances,
    /// and that every query has a relevant gallery item (from another camera
    /// when `junk_rule` is on).
    pub fn validate(&self, dataset: &Dataset, junk_rule: bool) -> Result<()> {
        let mut in_gallery = vec![false; dataset.len()];
        for &g in &self.gallery {
            dataset.get(g)?;
            in_gallery[g] = true;
        }
        for &q in &self.query {
            let qi = dataset.get(q)?;
            if in_gallery[q] {
                return Err(Error::invalid(format!("instance {q} is in both query and gallery")));
            }
            let has_match = self.gallery.iter().any(|&g| {
                let gi = &dataset.instances()[g];
                gi.identity() == qi.identity() && (!junk_rule || gi.camera() != qi.camera())
            });
            if !has_match {
                return Err(Error::NoCrossCameraRelevants {
                    identity: qi.identity(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Drop gallery items sharing both identity and camera with the query.
    pub junk_rule: bool,
    pub max_rank: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            junk_rule: true,
            max_rank: 10,
        }
    }
}

/// Identity and camera of one ranked item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemMeta {
    pub id: usize,
    pub identity: usize,
    pub camera: usize,
}

fn meta(dataset: &Dataset, id: usize) -> Result<ItemMeta> {
    let inst = dataset.get(id)?;
    Ok(ItemMeta {
        id,
        identity: inst.identity(),
        camera: inst.camera(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub map: f64,
    pub cmc: Vec<f64>,
    pub evaluated_queries: usize,
    pub skipped_queries: usize,
}

/// Descending score, then ascending id. Adding `0.0` maps `-0.0` to `+0.0`
/// so that equal scores tie regardless of sign.
fn by_score_then_id(scores: &[f64], gallery: &[ItemMeta], a: usize, b: usize) -> std::cmp::Ordering {
    (scores[b] + 0.0)
        .total_cmp(&(scores[a] + 0.0))
        .then(gallery[a].id.cmp(&gallery[b].id))
}

/// Per-query outcome: `None` when the query has no relevant gallery item.
fn score_query(scores: &[f64], query: &ItemMeta, gallery: &[ItemMeta], opts: &EvalOptions) -> Option<(f64, usize)> {
    let mut order: Vec<usize> = (0..gallery.len())
        .filter(|&g| !(opts.junk_rule && gallery[g].identity == query.identity && gallery[g].camera == query.camera))
        .collect();
    order.sort_unstable_by(|&a, &b| by_score_then_id(scores, gallery, a, b));

    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    let mut first_hit = None;
    for (pos, &g) in order.iter().enumerate() {
        if gallery[g].identity == query.identity {
            hits += 1;
            precision_sum += hits as f64 / (pos + 1) as f64;
            first_hit.get_or_insert(pos + 1);
        }
    }
    first_hit.map(|rank| (precision_sum / hits as f64, rank))
}

/// mAP and CMC from a `query x gallery` similarity matrix. Gallery items are
/// ranked by descending score, ties broken by ascending instance id.
pub fn retrieval_metrics(
    scores: &[Vec<f64>],
    queries: &[ItemMeta],
    gallery: &[ItemMeta],
    opts: &EvalOptions,
) -> Result<RetrievalMetrics> {
    if opts.max_rank == 0 {
        return Err(Error::invalid("max_rank must be >= 1"));
    }
    if scores.len() != queries.len() {
        return Err(Error::DimensionMismatch {
            expected: queries.len(),
            got: scores.len(),
        });
    }
    if let Some(row) = scores.iter().find(|r| r.len() != gallery.len()) {
        return Err(Error::DimensionMismatch {
            expected: gallery.len(),
            got: row.len(),
        });
    }

    let outcomes: Vec<Option<(f64, usize)>> = scores
        .par_iter()
        .zip(queries)
        .map(|(row, q)| score_query(row, q, gallery, opts))
        .collect();

    let mut ap_sum = 0.0;
    let mut evaluated = 0usize;
    let mut first_hit_counts = vec![0usize; opts.max_rank];
    for (ap, rank) in outcomes.iter().flatten() {
        ap_sum += ap;
        evaluated += 1;
        if *rank <= opts.max_rank {
            first_hit_counts[rank - 1] += 1;
        }
    }
    let skipped = queries.len() - evaluated;
    if evaluated == 0 {
        return Err(Error::NoValidQueries { skipped });
    }
    let mut cumulative = 0usize;
    let cmc = first_hit_counts
        .iter()
        .map(|c| {
            cumulative += c;
            cumulative as f64 / evaluated as f64
        })
        .collect();
    Ok(RetrievalMetrics {
        map: ap_sum / evaluated as f64,
        cmc,
        evaluated_queries: evaluated,
        skipped_queries: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub intra_mean: Option<f64>,
    pub inter_mean: Option<f64>,
    pub intra_pairs: usize,
    pub inter_pairs: usize,
    pub sampled: bool,
}

/// Mean cosine distance over same-identity and different-identity pairs.
pub fn distance_stats(features: &[FeatureVector], identities: &[usize]) -> Result<DistanceStats> {
    if features.len() != identities.len() {
        return Err(Error::DimensionMismatch {
            expected: identities.len(),
            got: features.len(),
        });
    }
    let n = features.len();
    let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
    let mut add = |i: usize, j: usize| {
        let d = 1.0 - dot_slice(features[i].values(), features[j].values());
        let acc = if identities[i] == identities[j] {
            &mut intra
        } else {
            &mut inter
        };
        acc.0 += d;
        acc.1 += 1;
    };
    let sampled = n > EXACT_DISTANCE_LIMIT;
    if sampled {
        let mut rng = seeded_rng(DISTANCE_SAMPLE_SEED);
        for _ in 0..DISTANCE_SAMPLE_PAIRS {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            add(i, j);
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                add(i, j);
            }
        }
    }
    let mean = |(sum, count): (f64, usize)| (count > 0).then(|| sum / count as f64);
    Ok(DistanceStats {
        intra_mean: mean(intra),
        inter_mean: mean(inter),
        intra_pairs: intra.1,
        inter_pairs: inter.1,
        sampled,
    })
}

pub fn extract_features(enc: &Encoder, dataset: &Dataset) -> Result<Vec<FeatureVector>> {
    dataset
        .instances()
        .par_iter()
        .map(|inst| enc.forward(&inst.raw))
        .collect()
}

pub fn class_distance_stats(enc: &Encoder, dataset: &Dataset) -> Result<DistanceStats> {
    distance_stats(&extract_features(enc, dataset)?, &dataset.identities())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub cmc: Vec<f64>,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
    pub evaluated_queries: usize,
    pub skipped_queries: usize,
    pub intra_mean: Option<f64>,
    pub inter_mean: Option<f64>,
}

fn cmc_at(cmc: &[f64], rank: usize) -> f64 {
    cmc[rank.min(cmc.len()) - 1]
}

fn similarity_matrix(features: &[FeatureVector], split: &RetrievalSplit) -> Vec<Vec<f64>> {
    split
        .query
        .par_iter()
        .map(|&q| {
            split
                .gallery
                .iter()
                .map(|&g| dot_slice(features[q].values(), features[g].values()))
                .collect()
        })
        .collect()
}

/// Retrieval metrics and distance statistics for precomputed features
/// indexed by instance id.
pub fn evaluate_features(
    features: &[FeatureVector],
    dataset: &Dataset,
    split: &RetrievalSplit,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if features.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            got: features.len(),
        });
    }
    let queries = split
        .query
        .iter()
        .map(|&id| meta(dataset, id))
        .collect::<Result<Vec<_>>>()?;
    let gallery = split
        .gallery
        .iter()
        .map(|&id| meta(dataset, id))
        .collect::<Result<Vec<_>>>()?;
    let metrics = retrieval_metrics(&similarity_matrix(features, split), &queries, &gallery, opts)?;
    let dist = distance_stats(features, &dataset.identities())?;
    Ok(EvalReport {
        map: metrics.map,
        top1: cmc_at(&metrics.cmc, 1),
        top5: cmc_at(&metrics.cmc, 5),
        top10: cmc_at(&metrics.cmc, 10),
        cmc: metrics.cmc,
        evaluated_queries: metrics.evaluated_queries,
        skipped_queries: metrics.skipped_queries,
        intra_mean: dist.intra_mean,
        inter_mean: dist.inter_mean,
    })
}

pub fn evaluate(enc: &Encoder, dataset: &Dataset, split: &RetrievalSplit, opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_features(&extract_features(enc, dataset)?, dataset, split, opts)
}

/// One row of the per-query ranking dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMatch {
    pub query: usize,
    pub rank: usize,
    pub gallery: usize,
    pub score: f64,
    pub correct: bool,
}

/// Top `top_k` non-junk gallery items for every query.
pub fn top_k_rankings(
    features: &[FeatureVector],
    dataset: &Dataset,
    split: &RetrievalSplit,
    opts: &EvalOptions,
    top_k: usize,
) -> Result<Vec<RankedMatch>> {
    let scores = similarity_matrix(features, split);
    let mut rows = Vec::new();
    for (row, &q) in scores.iter().zip(&split.query) {
        let qm = meta(dataset, q)?;
        let gallery = split
            .gallery
            .iter()
            .map(|&g| meta(dataset, g))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..gallery.len())
            .filter(|&g| !(opts.junk_rule && gallery[g].identity == qm.identity && gallery[g].camera == qm.camera))
            .collect();
        order.sort_unstable_by(|&a, &b| by_score_then_id(row, &gallery, a, b));
        for (pos, &g) in order.iter().take(top_k).enumerate() {
            rows.push(RankedMatch {
                query: q,
                rank: pos + 1,
                gallery: gallery[g].id,
                score: row[g],
                correct: gallery[g].identity == qm.identity,
            });
        }
    }
    Ok(rows)
}

pub fn rankings_csv(rows: &[RankedMatch]) -> String {
    let mut out = String::from("query,rank,gallery,score,correct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{}\n",
            r.query, r.rank, r.gallery, r.score, r.correct as u8
        ));
    }
    out
}
