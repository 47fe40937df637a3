//! Per-epoch pseudo labels: DBSCAN over cosine distance, plus the
//! ground-truth purity diagnostic.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot_slice, FeatureVector};

/// Cluster assignments for one epoch. Cluster ids are dense in `[0, k)` and
/// numbered by ascending smallest member id; every cluster is non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabeling {
    assignments: BTreeMap<usize, usize>,
    outliers: BTreeSet<usize>,
    k: usize,
}

impl PseudoLabeling {
    /// Builds a labeling from arbitrary (possibly sparse) cluster labels,
    /// renumbering them canonically.
    pub fn from_raw_labels(
        labels: impl IntoIterator<Item = (usize, usize)>,
        outliers: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let labels: BTreeMap<usize, usize> = labels.into_iter().collect();
        let outliers: BTreeSet<usize> = outliers.into_iter().collect();
        if let Some(id) = outliers.iter().find(|id| labels.contains_key(id)) {
            return Err(Error::invalid(format!("instance {id} is both assigned and an outlier")));
        }
        // BTreeMap iterates by ascending instance id, so first sight of a raw
        // label is its smallest member.
        let mut renumber: HashMap<usize, usize> = HashMap::new();
        let mut assignments = BTreeMap::new();
        for (&id, &raw) in &labels {
            let next = renumber.len();
            let c = *renumber.entry(raw).or_insert(next);
            assignments.insert(id, c);
        }
        Ok(PseudoLabeling {
            k: renumber.len(),
            assignments,
            outliers,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &BTreeMap<usize, usize> {
        &self.assignments
    }

    pub fn outliers(&self) -> &BTreeSet<usize> {
        &self.outliers
    }

    pub fn cluster_of(&self, id: usize) -> Option<usize> {
        self.assignments.get(&id).copied()
    }

    pub fn n_clustered(&self) -> usize {
        self.assignments.len()
    }

    /// Member ids per cluster, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (&id, &c) in &self.assignments {
            out[c].push(id);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &c in self.assignments.values() {
            out[c] += 1;
        }
        out
    }

    /// The partition as a set of member sets, independent of numbering.
    pub fn partition(&self) -> BTreeSet<Vec<usize>> {
        self.members().into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanParams {
    /// Cosine-distance radius; the neighborhood is the closed ball `d <= eps`.
    pub eps: f64,
    /// Neighborhood size (counting the point itself) that makes a core point.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 0.5, min_pts: 4 }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("dbscan eps must be > 0"));
        }
        if self.min_pts == 0 {
            return Err(Error::invalid("dbscan min_pts must be >= 1"));
        }
        Ok(())
    }
}

#[inline]
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - dot_slice(a, b)
}

/// DBSCAN with instance ids `0..features.len()`.
pub fn dbscan(features: &[FeatureVector], params: &DbscanParams) -> Result<PseudoLabeling> {
    let ids: Vec<usize> = (0..features.len()).collect();
    dbscan_with_ids(&ids, features, params)
}

/// DBSCAN over `(ids[i], features[i])` pairs.
///
/// Points are scanned by ascending id and every cluster is fully expanded
/// before the next one is seeded, so a border point reachable from several
/// clusters joins the one whose smallest core id is lowest. The result
/// depends only on the set of (id, feature) pairs, not their order.
pub fn dbscan_with_ids(ids: &[usize], features: &[FeatureVector], params: &DbscanParams) -> Result<PseudoLabeling> {
    params.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    if ids.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: ids.len(),
        });
    }
    let dim = features[0].dim();
    for f in features {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.dim(),
            });
        }
        if !f.is_normalized(1e-6) {
            return Err(Error::invalid("dbscan expects L2-normalized features"));
        }
    }

    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_unstable_by_key(|&i| ids[i]);
    let n = order.len();
    if (1..n).any(|r| ids[order[r]] == ids[order[r - 1]]) {
        return Err(Error::invalid("duplicate instance ids"));
    }
    // Work in rank space: rank r is the r-th smallest id.
    let rows: Vec<&[f64]> = order.iter().map(|&i| features[i].values()).collect();

    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|r| {
            (0..n)
                .filter(|&s| cosine_distance(rows[r], rows[s]) <= params.eps)
                .collect()
        })
        .collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next_cluster = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if label[seed].is_some() || !is_core[seed] {
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        label[seed] = Some(c);
        queue.push_back(seed);
        while let Some(r) = queue.pop_front() {
            for &s in &neighbors[r] {
                if label[s].is_none() {
                    label[s] = Some(c);
                    if is_core[s] {
                        queue.push_back(s);
                    }
                }
            }
        }
    }

    let assigned = (0..n).filter_map(|r| label[r].map(|c| (ids[order[r]], c)));
    let noise = (0..n).filter(|&r| label[r].is_none()).map(|r| ids[order[r]]);
    PseudoLabeling::from_raw_labels(assigned, noise)
}

/// Fraction of each cluster taken by its most common ground-truth identity.
pub fn cluster_purity(labeling: &PseudoLabeling, dataset: &Dataset) -> Result<Vec<(usize, f64)>> {
    labeling
        .members()
        .into_iter()
        .enumerate()
        .map(|(c, members)| {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for &id in &members {
                *counts.entry(dataset.get(id)?.identity()).or_default() += 1;
            }
            let dominant = counts.values().copied().max().unwrap_or(0);
            Ok((c, dominant as f64 / members.len() as f64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuritySummary {
    pub mean: f64,
    pub min: f64,
    pub pure_fraction: f64,
}

impl PuritySummary {
    pub fn from_purities(purities: &[(usize, f64)]) -> Option<Self> {
        if purities.is_empty() {
            return None;
        }
        let n = purities.len() as f64;
        Some(PuritySummary {
            mean: purities.iter().map(|p| p.1).sum::<f64>() / n,
            min: purities.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            pure_fraction: purities.iter().filter(|p| p.1 == 1.0).count() as f64 / n,
        })
    }
}
