//! Controlled sweeps: momentum, batch size, cluster-size cap, and the
//! memory-variant ladder (instance baseline, cluster memory, cluster memory
//! with momentum). Each setting trains from scratch and reports the final
//! retrieval metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, EvalReport, RetrievalSplit};
use crate::trainer::{run_training, GroundTruthObserver, TrainConfig, Variant};

pub const MOMENTUM_GRID: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 0.99];
pub const BATCH_SIZE_GRID: [usize; 4] = [16, 32, 64, 128];
pub const CLUSTER_CAP_GRID: [usize; 3] = [20, 8, 4];
/// Instances per identity in the cluster-cap sweep.
pub const CLUSTER_CAP_Z: usize = 4;
/// The instance baseline overwrites stored features with the query.
pub const BASELINE_MOMENTUM: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Momentum,
    BatchSize,
    ClusterCap,
    Variant,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Momentum => "momentum",
            Suite::BatchSize => "batch-size",
            Suite::ClusterCap => "cluster-cap",
            Suite::Variant => "variant",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "momentum" => Ok(Suite::Momentum),
            "batch-size" => Ok(Suite::BatchSize),
            "cluster-cap" => Ok(Suite::ClusterCap),
            "variant" => Ok(Suite::Variant),
            other => Err(Error::invalid(format!("unknown suite {other:?}"))),
        }
    }
}

pub fn baseline(base: &TrainConfig) -> TrainConfig {
    TrainConfig {
        variant: Variant::InstanceBaseline,
        momentum: BASELINE_MOMENTUM,
        ..base.clone()
    }
}

/// `base` with the batch size changed through Z, the instances drawn per
/// cluster, at fixed P. A larger batch then updates more of each cluster.
pub fn with_batch_size(base: &TrainConfig, batch_size: usize) -> Result<TrainConfig> {
    let p = base.sampler.p;
    if batch_size == 0 || !batch_size.is_multiple_of(p) {
        return Err(Error::invalid(format!(
            "batch size {batch_size} is not a positive multiple of p = {p}"
        )));
    }
    let mut cfg = base.clone();
    cfg.sampler.z = batch_size / p;
    Ok(cfg)
}

/// Named configurations of a sweep, in table order.
pub fn suite_settings(suite: Suite, base: &TrainConfig) -> Result<Vec<(String, TrainConfig)>> {
    Ok(match suite {
        Suite::Momentum => MOMENTUM_GRID
            .iter()
            .map(|&m| {
                (
                    format!("m={m}"),
                    TrainConfig {
                        variant: Variant::ClusterContrast,
                        momentum: m,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        Suite::BatchSize => {
            let mut out = Vec::new();
            for bs in BATCH_SIZE_GRID {
                let cfg = with_batch_size(base, bs)?;
                out.push((
                    format!("cluster bs={bs}"),
                    TrainConfig {
                        variant: Variant::ClusterContrast,
                        ..cfg.clone()
                    },
                ));
                out.push((format!("baseline bs={bs}"), baseline(&cfg)));
            }
            out
        }
        Suite::ClusterCap => CLUSTER_CAP_GRID
            .iter()
            .map(|&cap| {
                let mut cfg = baseline(base);
                cfg.sampler.z = CLUSTER_CAP_Z;
                cfg.sampler.cluster_cap = Some(cap);
                let fraction = CLUSTER_CAP_Z as f64 / cap as f64;
                (format!("cap={cap} z={CLUSTER_CAP_Z} fraction={fraction:.1}"), cfg)
            })
            .collect(),
        Suite::Variant => vec![
            ("baseline".to_string(), baseline(base)),
            (
                "+cluster memory".to_string(),
                TrainConfig {
                    variant: Variant::ClusterContrast,
                    momentum: 0.0,
                    ..base.clone()
                },
            ),
            (
                "+cluster memory+momentum".to_string(),
                TrainConfig {
                    variant: Variant::ClusterContrast,
                    ..base.clone()
                },
            ),
        ],
    })
}

/// Trains with `cfg` and evaluates the final encoder.
pub fn final_eval(
    dataset: &Dataset,
    split: &RetrievalSplit,
    opts: &EvalOptions,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    let mut observer = GroundTruthObserver::new(dataset);
    let out = run_training(&dataset.raw_view(), cfg, &mut observer)?;
    crate::eval::evaluate(&out.encoder, dataset, split, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub runs: usize,
    pub map: f64,
    pub top1: f64,
    /// Runs that aborted (e.g. too few clusters); they count as mAP 0.
    pub aborted: usize,
}

/// Runs every setting once per seed and averages. A run that aborts during
/// training scores zero rather than failing the whole sweep.
pub fn run_settings(
    dataset: &Dataset,
    split: &RetrievalSplit,
    opts: &EvalOptions,
    settings: &[(String, TrainConfig)],
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let mut rows = Vec::with_capacity(settings.len());
    for (name, cfg) in settings {
        let (mut map, mut top1, mut aborted) = (0.0, 0.0, 0);
        for &seed in seeds {
            let cfg = TrainConfig { seed, ..cfg.clone() };
            match final_eval(dataset, split, opts, &cfg) {
                Ok(r) => {
                    map += r.map;
                    top1 += r.top1;
                }
                Err(Error::TrainingAborted { .. }) => aborted += 1,
                Err(e) => return Err(e),
            }
        }
        let n = seeds.len() as f64;
        rows.push(AblationRow {
            setting: name.clone(),
            runs: seeds.len(),
            map: map / n,
            top1: top1 / n,
            aborted,
        });
    }
    Ok(rows)
}

pub fn run_suite(
    dataset: &Dataset,
    split: &RetrievalSplit,
    opts: &EvalOptions,
    base: &TrainConfig,
    suite: Suite,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    run_settings(dataset, split, opts, &suite_settings(suite, base)?, seeds)
}

pub fn to_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("setting,mAP,top1,runs,aborted\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            r.setting, r.map, r.top1, r.runs, r.aborted
        ));
    }
    out
}
