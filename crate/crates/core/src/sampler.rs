//! Identity-balanced P x Z batches over pseudo labels, and the cluster-size
//! cap used by the instance-memory ablation.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::PseudoLabeling;
use crate::error::{Error, Result};

/// How the P clusters of a batch are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSelection {
    /// Every cluster equally likely.
    #[default]
    Uniform,
    /// Probability proportional to cluster size.
    SizeWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub p: usize,
    pub z: usize,
    pub cluster_cap: Option<usize>,
    /// Defaults to `ceil(n_clustered / (p * z))` when unset.
    pub iterations_per_epoch: Option<usize>,
    pub selection: ClusterSelection,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            p: 16,
            z: 16,
            cluster_cap: None,
            iterations_per_epoch: None,
            selection: ClusterSelection::Uniform,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.z == 0 {
            return Err(Error::invalid("sampler p and z must be >= 1"));
        }
        if self.cluster_cap == Some(0) {
            return Err(Error::invalid("cluster_cap must be >= 1"));
        }
        if self.iterations_per_epoch == Some(0) {
            return Err(Error::invalid("iterations_per_epoch must be >= 1"));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.p * self.z
    }

    pub fn iterations_for(&self, n_clustered: usize) -> usize {
        self.iterations_per_epoch
            .unwrap_or_else(|| n_clustered.div_ceil(self.batch_size()).max(1))
    }
}

/// `(instance id, cluster id)` pairs, grouped cluster by cluster in draw
/// order: P clusters with Z entries each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub entries: Vec<(usize, usize)>,
}

impl Batch {
    pub fn clusters(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &(_, c) in &self.entries {
            if out.last() != Some(&c) {
                out.push(c);
            }
        }
        out
    }
}

/// Batch sampler bound to one epoch's labeling.
#[derive(Debug, Clone)]
pub struct PkSampler {
    members: Vec<Vec<usize>>,
    cfg: SamplerConfig,
}

impl PkSampler {
    pub fn new(labeling: &PseudoLabeling, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        if labeling.k() < cfg.p {
            return Err(Error::TooFewClusters {
                k: labeling.k(),
                p: cfg.p,
            });
        }
        Ok(PkSampler {
            members: labeling.members(),
            cfg,
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Batch {
        let k = self.members.len();
        let chosen: Vec<usize> = match self.cfg.selection {
            ClusterSelection::Uniform => index::sample(rng, k, self.cfg.p).into_vec(),
            ClusterSelection::SizeWeighted => {
                index::sample_weighted(rng, k, |c| self.members[c].len() as f64, self.cfg.p)
                    .expect("cluster sizes are positive and k >= p")
                    .into_vec()
            }
        };
        let z = self.cfg.z;
        let mut entries = Vec::with_capacity(self.cfg.batch_size());
        for c in chosen {
            let members = &self.members[c];
            if members.len() >= z {
                for i in index::sample(rng, members.len(), z) {
                    entries.push((members[i], c));
                }
            } else {
                for _ in 0..z {
                    entries.push((members[rng.random_range(0..members.len())], c));
                }
            }
        }
        Batch { entries }
    }
}

/// Draws one batch. Fails with `TooFewClusters` when `labeling.k() < p`.
pub fn sample_batch<R: Rng>(labeling: &PseudoLabeling, cfg: &SamplerConfig, rng: &mut R) -> Result<Batch> {
    Ok(PkSampler::new(labeling, *cfg)?.sample(rng))
}

/// Keeps a uniform random subset of `cap` members in every larger cluster;
/// the dropped members become outliers for the epoch.
pub fn cap_clusters<R: Rng>(labeling: &PseudoLabeling, cap: usize, rng: &mut R) -> Result<PseudoLabeling> {
    if cap == 0 {
        return Err(Error::invalid("cluster cap must be >= 1"));
    }
    let mut kept = Vec::with_capacity(labeling.n_clustered());
    let mut dropped: Vec<usize> = labeling.outliers().iter().copied().collect();
    for (c, members) in labeling.members().into_iter().enumerate() {
        if members.len() <= cap {
            kept.extend(members.into_iter().map(|id| (id, c)));
            continue;
        }
        let mut keep = vec![false; members.len()];
        for i in index::sample(rng, members.len(), cap) {
            keep[i] = true;
        }
        for (id, k) in members.into_iter().zip(keep) {
            if k {
                kept.push((id, c));
            } else {
                dropped.push(id);
            }
        }
    }
    PseudoLabeling::from_raw_labels(kept, dropped)
}

/// Mean over clusters of the fraction of members one batch slot of `z`
/// draws can touch: `min(z, size) / size`.
pub fn update_fraction(labeling: &PseudoLabeling, z: usize) -> f64 {
    let sizes = labeling.sizes();
    if sizes.is_empty() {
        return 0.0;
    }
    sizes.iter().map(|&s| z.min(s) as f64 / s as f64).sum::<f64>() / sizes.len() as f64
}
