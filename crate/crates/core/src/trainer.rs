//! The training loop. Each epoch extracts features for every instance,
//! clusters them into pseudo labels, rebuilds the memory, then runs the
//! iteration loop: sample a P x Z batch, compute the loss of every query
//! against the memory snapshot, update the memory with the same query
//! features, and finally step the encoder.
//!
//! The loop itself only sees raw vectors ([`RawView`]). Ground truth enters
//! through a [`TrainObserver`], which may attach purity and retrieval
//! diagnostics to the per-epoch reports.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_purity, dbscan, DbscanParams, PseudoLabeling, PuritySummary};
use crate::dataset::{Dataset, RawView};
use crate::encoder::{AdamState, Encoder, Gradients, LrSchedule};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport, RetrievalSplit};
use crate::linalg::{seeded_rng, FeatureVector, RngState};
use crate::loss::{nce_against, LossConfig};
use crate::memory::{ClusterMemory, InstanceMemory};
use crate::sampler::{cap_clusters, Batch, PkSampler, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One momentum-updated representative per cluster.
    #[default]
    ClusterContrast,
    /// Per-instance memory; the loss uses centroids of the stored features.
    InstanceBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub momentum: f64,
    pub dbscan: DbscanParams,
    pub sampler: SamplerConfig,
    pub schedule: LrSchedule,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub weight_decay: f64,
    /// Output dimension of the encoder; defaults to the input dimension.
    pub embed_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            momentum: 0.1,
            dbscan: DbscanParams::default(),
            sampler: SamplerConfig::default(),
            schedule: LrSchedule::default(),
            epochs: 50,
            seed: 0,
            variant: Variant::ClusterContrast,
            weight_decay: 5e-4,
            embed_dim: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.dbscan.validate()?;
        self.sampler.validate()?;
        self.schedule.validate()?;
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1]"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if self.embed_dim == Some(0) {
            return Err(Error::invalid("embed_dim must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub map: f64,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        EvalSummary {
            map: r.map,
            top1: r.top1,
            top5: r.top5,
            top10: r.top10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub k: usize,
    pub outliers: usize,
    pub iterations: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub purity: Option<PuritySummary>,
    pub eval: Option<EvalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryBank {
    Cluster(ClusterMemory),
    Instance(InstanceMemory),
}

impl MemoryBank {
    fn init(variant: Variant, features: &[FeatureVector], labeling: &PseudoLabeling, m: f64) -> Result<Self> {
        Ok(match variant {
            Variant::ClusterContrast => MemoryBank::Cluster(ClusterMemory::init(features, labeling, m)?),
            Variant::InstanceBaseline => MemoryBank::Instance(InstanceMemory::init(features, labeling, m)?),
        })
    }

    /// The vectors the loss compares queries against.
    pub fn loss_targets(&self) -> Result<Vec<FeatureVector>> {
        match self {
            MemoryBank::Cluster(m) => Ok(m.reps().to_vec()),
            MemoryBank::Instance(m) => m.centroids(),
        }
    }

    fn update(&mut self, batch: &Batch, queries: &[FeatureVector]) -> Result<()> {
        match self {
            MemoryBank::Cluster(m) => m.batch_update(queries.iter().zip(batch.entries.iter().map(|e| e.1))),
            MemoryBank::Instance(m) => {
                for (&(id, _), q) in batch.entries.iter().zip(queries) {
                    m.instance_update(id, q)?;
                }
                Ok(())
            }
        }
    }
}

/// Everything that happened in one iteration, for observers that check the
/// ordering of loss, memory update and optimizer step.
#[derive(Debug)]
pub struct IterationTrace<'a> {
    pub epoch: usize,
    pub iteration: usize,
    pub batch: &'a Batch,
    /// Query features from the encoder before this iteration's step.
    pub queries: &'a [FeatureVector],
    pub losses: &'a [f64],
    pub encoder_before: &'a Encoder,
    pub encoder_after: &'a Encoder,
    pub memory_before: &'a MemoryBank,
    pub memory_after: &'a MemoryBank,
}

/// Hooks into the training loop. All methods default to doing nothing.
pub trait TrainObserver {
    fn purity(&self, _labeling: &PseudoLabeling) -> Option<PuritySummary> {
        None
    }

    fn evaluate(&self, _epoch: usize, _encoder: &Encoder) -> Result<Option<EvalSummary>> {
        Ok(None)
    }

    /// Returning true makes the loop build an [`IterationTrace`] (which
    /// clones the memory) for every iteration.
    fn wants_traces(&self) -> bool {
        false
    }

    fn on_iteration(&mut self, _trace: &IterationTrace<'_>) {}

    fn on_epoch(&mut self, _report: &EpochReport) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Purity from ground truth and, optionally, retrieval metrics every epoch.
pub struct GroundTruthObserver<'a> {
    pub dataset: &'a Dataset,
    pub split: Option<(&'a RetrievalSplit, EvalOptions)>,
    pub reports: Vec<EpochReport>,
}

impl<'a> GroundTruthObserver<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        GroundTruthObserver {
            dataset,
            split: None,
            reports: Vec::new(),
        }
    }

    pub fn with_eval(dataset: &'a Dataset, split: &'a RetrievalSplit, opts: EvalOptions) -> Self {
        GroundTruthObserver {
            dataset,
            split: Some((split, opts)),
            reports: Vec::new(),
        }
    }
}

impl TrainObserver for GroundTruthObserver<'_> {
    fn purity(&self, labeling: &PseudoLabeling) -> Option<PuritySummary> {
        cluster_purity(labeling, self.dataset)
            .ok()
            .and_then(|p| PuritySummary::from_purities(&p))
    }

    fn evaluate(&self, _epoch: usize, encoder: &Encoder) -> Result<Option<EvalSummary>> {
        match self.split {
            Some((split, opts)) => Ok(Some(EvalSummary::from(&evaluate(encoder, self.dataset, split, &opts)?))),
            None => Ok(None),
        }
    }

    fn on_epoch(&mut self, report: &EpochReport) {
        self.reports.push(report.clone());
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    pub reports: Vec<EpochReport>,
    pub rng: RngState,
    pub optimizer: AdamState,
}

pub fn extract(encoder: &Encoder, view: &RawView<'_>) -> Result<Vec<FeatureVector>> {
    view.rows().par_iter().map(|raw| encoder.forward(raw)).collect()
}

/// Trains on a dataset with purity diagnostics.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(Encoder, Vec<EpochReport>)> {
    let mut observer = GroundTruthObserver::new(dataset);
    let out = run_training(&dataset.raw_view(), cfg, &mut observer)?;
    Ok((out.encoder, out.reports))
}

pub fn run_training<O: TrainObserver + ?Sized>(
    view: &RawView<'_>,
    cfg: &TrainConfig,
    observer: &mut O,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if view.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rng = seeded_rng(cfg.seed);
    let d_out = cfg.embed_dim.unwrap_or(view.d_in());
    let mut encoder = Encoder::init(d_out, view.d_in(), &mut rng)?;
    let mut adam = AdamState::for_encoder(&encoder, cfg.weight_decay);
    let mut reports = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let report = run_epoch(epoch, view, cfg, &mut encoder, &mut adam, &mut rng, observer)?;
        observer.on_epoch(&report);
        reports.push(report);
    }

    Ok(TrainOutcome {
        encoder,
        reports,
        rng: RngState::capture(cfg.seed, &rng),
        optimizer: adam,
    })
}

fn run_epoch<O: TrainObserver + ?Sized>(
    epoch: usize,
    view: &RawView<'_>,
    cfg: &TrainConfig,
    encoder: &mut Encoder,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
    observer: &mut O,
) -> Result<EpochReport> {
    let features = extract(encoder, view)?;
    let mut labeling = dbscan(&features, &cfg.dbscan)?;
    if let Some(cap) = cfg.sampler.cluster_cap {
        labeling = cap_clusters(&labeling, cap, rng)?;
    }
    let needed = cfg.sampler.p.max(1);
    if labeling.k() < needed {
        return Err(Error::TrainingAborted {
            epoch,
            k: labeling.k(),
            needed,
        });
    }
    let purity = observer.purity(&labeling);

    let mut memory = MemoryBank::init(cfg.variant, &features, &labeling, cfg.momentum)?;
    let sampler = PkSampler::new(&labeling, cfg.sampler)?;
    let iterations = cfg.sampler.iterations_for(labeling.n_clustered());
    let lr = cfg.schedule.lr_at(epoch);
    let trace = observer.wants_traces();

    let mut loss_sum = 0.0;
    for iteration in 0..iterations {
        let batch = sampler.sample(rng);
        let targets = memory.loss_targets()?;
        let per_query: Vec<(FeatureVector, f64, Gradients)> = batch
            .entries
            .par_iter()
            .map(|&(id, cluster)| {
                let raw = view.row(id);
                let q = encoder.forward(raw)?;
                let loss = nce_against(&q, &targets, cluster, &cfg.loss)?;
                let grads = encoder.backward(raw, &loss.grad_q)?;
                Ok((q, loss.value, grads))
            })
            .collect::<Result<_>>()?;

        let mut grads = Gradients::zeros_like(encoder);
        let mut queries = Vec::with_capacity(per_query.len());
        let mut losses = Vec::with_capacity(per_query.len());
        for (q, value, g) in per_query {
            grads.add_assign(&g);
            queries.push(q);
            losses.push(value);
        }
        let inv = 1.0 / batch.entries.len() as f64;
        grads.scale(inv);
        loss_sum += losses.iter().sum::<f64>() * inv;

        let memory_before = trace.then(|| memory.clone());
        memory.update(&batch, &queries)?;
        let encoder_before = trace.then(|| encoder.clone());
        adam.step(encoder.params_mut(), &grads.0, lr)?;

        if let (Some(mb), Some(eb)) = (&memory_before, &encoder_before) {
            observer.on_iteration(&IterationTrace {
                epoch,
                iteration,
                batch: &batch,
                queries: &queries,
                losses: &losses,
                encoder_before: eb,
                encoder_after: encoder,
                memory_before: mb,
                memory_after: &memory,
            });
        }
    }

    Ok(EpochReport {
        epoch,
        k: labeling.k(),
        outliers: labeling.outliers().len(),
        iterations,
        mean_loss: loss_sum / iterations as f64,
        lr,
        purity,
        eval: observer.evaluate(epoch, encoder)?,
    })
}
