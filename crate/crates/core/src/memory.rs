//! Memory dictionaries.
//!
//! [`ClusterMemory`] keeps one representative per pseudo-label cluster,
//! initialized to the normalized cluster mean and then moved toward each
//! query of that cluster by momentum. [`InstanceMemory`] is the baseline: it
//! keeps every clustered instance's feature and derives cluster centroids
//! from the stored features on demand.
//!
//! Every stored vector is re-normalized after each update so that dot
//! products with queries stay on the cosine scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::PseudoLabeling;
use crate::error::{Error, Result};
use crate::linalg::{blend, l2_normalize, normalized_mean, FeatureVector};

fn check_momentum(m: f64) -> Result<()> {
    if (0.0..=1.0).contains(&m) {
        Ok(())
    } else {
        Err(Error::invalid(format!("momentum must be in [0, 1], got {m}")))
    }
}

fn feature_dim(features: &[FeatureVector]) -> Result<usize> {
    Ok(features.first().ok_or(Error::EmptyInput)?.dim())
}

fn lookup(features: &[FeatureVector], id: usize) -> Result<&FeatureVector> {
    features.get(id).ok_or(Error::UnknownInstance(id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMemory {
    reps: Vec<FeatureVector>,
    momentum: f64,
}

impl ClusterMemory {
    /// `features` is indexed by instance id. Outliers are ignored.
    pub fn init(features: &[FeatureVector], labeling: &PseudoLabeling, momentum: f64) -> Result<Self> {
        check_momentum(momentum)?;
        let dim = feature_dim(features)?;
        let reps = labeling
            .members()
            .iter()
            .map(|members| {
                let vs = members
                    .iter()
                    .map(|&id| lookup(features, id))
                    .collect::<Result<Vec<_>>>()?;
                normalized_mean(vs, dim)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClusterMemory { reps, momentum })
    }

    /// Wraps existing representatives, normalizing each.
    pub fn from_reps(reps: Vec<FeatureVector>, momentum: f64) -> Result<Self> {
        check_momentum(momentum)?;
        let reps = reps
            .iter()
            .map(|r| l2_normalize(r.values()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClusterMemory { reps, momentum })
    }

    pub fn k(&self) -> usize {
        self.reps.len()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn reps(&self) -> &[FeatureVector] {
        &self.reps
    }

    pub fn rep(&self, cluster: usize) -> Result<&FeatureVector> {
        self.reps.get(cluster).ok_or(Error::ClusterOutOfRange {
            id: cluster,
            k: self.reps.len(),
        })
    }

    /// `rep <- normalize(m * rep + (1 - m) * q)`; other clusters untouched.
    pub fn momentum_update(&mut self, q: &FeatureVector, cluster: usize) -> Result<()> {
        let old = self.rep(cluster)?;
        if old.dim() != q.dim() {
            return Err(Error::DimensionMismatch {
                expected: old.dim(),
                got: q.dim(),
            });
        }
        let updated = l2_normalize(&blend(old.values(), q.values(), self.momentum))?;
        self.reps[cluster] = updated;
        Ok(())
    }

    /// Applies [`Self::momentum_update`] for each `(query, cluster)` in order,
    /// so later queries see the effect of earlier ones. Cluster ids are
    /// checked up front; a bad id leaves the memory unchanged.
    pub fn batch_update<'a, I>(&mut self, batch: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a FeatureVector, usize)>,
    {
        let batch: Vec<_> = batch.into_iter().collect();
        if let Some(&(_, c)) = batch.iter().find(|(_, c)| *c >= self.k()) {
            return Err(Error::ClusterOutOfRange { id: c, k: self.k() });
        }
        for (q, c) in batch {
            self.momentum_update(q, c)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMemory {
    feats: Vec<FeatureVector>,
    slot_of: BTreeMap<usize, usize>,
    owner: Vec<usize>,
    members: Vec<Vec<usize>>,
    momentum: f64,
    dim: usize,
}

impl InstanceMemory {
    /// Stores every clustered instance's feature verbatim; outliers excluded.
    pub fn init(features: &[FeatureVector], labeling: &PseudoLabeling, momentum: f64) -> Result<Self> {
        check_momentum(momentum)?;
        let dim = feature_dim(features)?;
        let mut feats = Vec::with_capacity(labeling.n_clustered());
        let mut slot_of = BTreeMap::new();
        let mut owner = Vec::with_capacity(labeling.n_clustered());
        let mut members = vec![Vec::new(); labeling.k()];
        for (&id, &c) in labeling.assignments() {
            let slot = feats.len();
            feats.push(lookup(features, id)?.clone());
            slot_of.insert(id, slot);
            owner.push(c);
            members[c].push(slot);
        }
        Ok(InstanceMemory {
            feats,
            slot_of,
            owner,
            members,
            momentum,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.feats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feats.is_empty()
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn feature(&self, instance: usize) -> Result<&FeatureVector> {
        let slot = *self.slot_of.get(&instance).ok_or(Error::UnknownInstance(instance))?;
        Ok(&self.feats[slot])
    }

    pub fn owner_cluster(&self, instance: usize) -> Option<usize> {
        self.slot_of.get(&instance).map(|&s| self.owner[s])
    }

    /// Instance id to owning cluster, for every stored instance.
    pub fn owners(&self) -> BTreeMap<usize, usize> {
        self.slot_of.iter().map(|(&id, &slot)| (id, self.owner[slot])).collect()
    }

    /// `feat <- normalize(m * feat + (1 - m) * q)` for one stored instance.
    pub fn instance_update(&mut self, instance: usize, q: &FeatureVector) -> Result<()> {
        let slot = *self.slot_of.get(&instance).ok_or(Error::UnknownInstance(instance))?;
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        self.feats[slot] = l2_normalize(&blend(self.feats[slot].values(), q.values(), self.momentum))?;
        Ok(())
    }

    /// Normalized mean of the cluster's current stored features.
    pub fn centroid(&self, cluster: usize) -> Result<FeatureVector> {
        let slots = self.members.get(cluster).ok_or(Error::ClusterOutOfRange {
            id: cluster,
            k: self.members.len(),
        })?;
        normalized_mean(slots.iter().map(|&s| &self.feats[s]), self.dim)
    }

    pub fn centroids(&self) -> Result<Vec<FeatureVector>> {
        (0..self.k()).map(|c| self.centroid(c)).collect()
    }
}
