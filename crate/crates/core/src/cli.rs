//! Command-line front end: dataset generation, training, evaluation and
//! ablation sweeps. Every command writes under its `--out` target and maps
//! failures to a small set of exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::ablation::{run_suite, to_csv, Suite};
use crate::checkpoint::{
    write_json, Checkpoint, EpochLog, RunManifest, CHECKPOINT_FILE, EPOCHS_FILE, EVAL_FILE, MANIFEST_FILE,
};
use crate::clustering::PseudoLabeling;
use crate::datagen::{generate, load_dataset, make_split, save_dataset, GenParams};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::eval::{evaluate, extract_features, rankings_csv, top_k_rankings, EvalOptions, RetrievalSplit};
use crate::linalg::seeded_rng;
use crate::trainer::{run_training, EpochReport, EvalSummary, GroundTruthObserver, TrainConfig, TrainObserver};
use crate::Dataset;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ABORT: u8 = 3;

pub const SPLIT_FILE: &str = "split.json";
pub const RANKINGS_FILE: &str = "rankings.csv";
pub const DEFAULT_QUERY_FRACTION: f64 = 0.2;
pub const DEFAULT_SPLIT_SEED: u64 = 0;
pub const RANKING_DEPTH: usize = 10;

#[derive(Debug, Parser)]
#[command(
    name = "cluster-contrast",
    version,
    about = "Cluster-level contrastive learning on synthetic re-identification data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as TSV.
    Generate(GenerateArgs),
    /// Train an encoder and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a query/gallery split.
    Eval(EvalArgs),
    /// Run an ablation sweep and write a CSV table.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator parameters (JSON).
    #[arg(long)]
    pub params: PathBuf,
    /// Output TSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing output file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset TSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Training config (JSON); omitted fields take their defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluation split (JSON); by default a seeded split is drawn.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Reuse an existing run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset TSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluation split (JSON); by default a seeded split is drawn.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Sweep to run: momentum, batch-size, cluster-cap or variant.
    #[arg(long)]
    pub suite: Suite,
    /// Dataset TSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Base training config (JSON) the sweep varies.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of seeds per setting (seeds 0..N).
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    /// Evaluation split (JSON); by default a seeded split is drawn.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Reuse an existing output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::TrainingAborted { .. } | Error::TooFewClusters { .. } => EXIT_ABORT,
        _ => EXIT_CONFIG,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("CC_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid(format!("CC_THREADS must be a positive integer, got {value:?}")))?;
    // A pool that is already configured is left alone.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        return Err(Error::io(
            dir,
            std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                "already exists (use --force to reuse)",
            ),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_split(dataset: &Dataset, path: Option<&Path>, opts: &EvalOptions) -> Result<RetrievalSplit> {
    let split = match path {
        Some(p) => read_json(p)?,
        None => make_split(
            dataset,
            DEFAULT_QUERY_FRACTION,
            opts.junk_rule,
            &mut seeded_rng(DEFAULT_SPLIT_SEED),
        )?,
    };
    split.validate(dataset, opts.junk_rule)?;
    Ok(split)
}

fn git_stamp() -> Option<String> {
    let out = Process::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct ManifestWriter {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    started_unix: u64,
    clock: Instant,
}

impl ManifestWriter {
    fn new(dir: &Path, command: &str, config: impl Serialize) -> Result<Self> {
        Ok(ManifestWriter {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            started_unix: unix_now(),
            clock: Instant::now(),
        })
    }

    fn finish(&self, outcome: &str) -> Result<()> {
        RunManifest {
            run_dir: self.dir.clone(),
            command: self.command.clone(),
            config: self.config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            git: git_stamp(),
            started_unix: self.started_unix,
            elapsed_seconds: self.clock.elapsed().as_secs_f64(),
            outcome: outcome.to_string(),
        }
        .save(&self.dir.join(MANIFEST_FILE))
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let params: GenParams = read_json(&a.params)?;
    if a.out.exists() && !a.force {
        return Err(Error::io(
            &a.out,
            std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                "already exists (use --force to overwrite)",
            ),
        ));
    }
    let dataset = generate(&params)?;
    save_dataset(&dataset, &a.out)?;
    println!(
        "wrote {}: N={} ids={} cameras={} d_in={}",
        a.out.display(),
        dataset.len(),
        dataset.n_identities(),
        dataset.n_cameras(),
        dataset.d_in()
    );
    Ok(())
}

/// Streams epoch records to disk as training proceeds.
struct StreamingObserver<'a> {
    inner: GroundTruthObserver<'a>,
    log: EpochLog,
    write_error: Option<Error>,
}

impl TrainObserver for StreamingObserver<'_> {
    fn purity(&self, labeling: &PseudoLabeling) -> Option<crate::clustering::PuritySummary> {
        self.inner.purity(labeling)
    }

    fn evaluate(&self, epoch: usize, encoder: &Encoder) -> Result<Option<EvalSummary>> {
        self.inner.evaluate(epoch, encoder)
    }

    fn on_epoch(&mut self, report: &EpochReport) {
        if self.write_error.is_none() {
            if let Err(e) = self.log.append(report) {
                self.write_error = Some(e);
            }
        }
        self.inner.on_epoch(report);
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg: TrainConfig = read_json(&a.config)?;
    cfg.validate()?;
    let dataset = load_dataset(&a.data)?;
    let opts = EvalOptions::default();
    let split = load_split(&dataset, a.split.as_deref(), &opts)?;
    prepare_dir(&a.out, a.force)?;
    let manifest = ManifestWriter::new(&a.out, "train", &cfg)?;
    write_json(&a.out.join(SPLIT_FILE), &split)?;

    let mut observer = StreamingObserver {
        inner: GroundTruthObserver::with_eval(&dataset, &split, opts),
        log: EpochLog::create(&a.out.join(EPOCHS_FILE))?,
        write_error: None,
    };
    let result = run_training(&dataset.raw_view(), &cfg, &mut observer);
    if let Some(e) = observer.write_error.take() {
        return Err(e);
    }
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let msg = format!("failed: {e}");
            write_json(&a.out.join(EVAL_FILE), &serde_json::json!({ "error": e.to_string() }))?;
            manifest.finish(&msg)?;
            return Err(e);
        }
    };

    Checkpoint::from_outcome(&cfg, &outcome).save(&a.out.join(CHECKPOINT_FILE))?;
    let report = evaluate(&outcome.encoder, &dataset, &split, &opts)?;
    write_json(&a.out.join(EVAL_FILE), &report)?;
    manifest.finish("ok")?;
    if let Some(last) = outcome.reports.last() {
        println!(
            "trained {} epochs ({:?}): K={} mAP={:.4} top1={:.4}",
            outcome.reports.len(),
            cfg.variant,
            last.k,
            report.map,
            report.top1
        );
    } else {
        println!("trained 0 epochs: mAP={:.4} top1={:.4}", report.map, report.top1);
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let dataset = load_dataset(&a.data)?;
    let opts = EvalOptions::default();
    let split = load_split(&dataset, a.split.as_deref(), &opts)?;
    prepare_dir(&a.out, a.force)?;
    let manifest = ManifestWriter::new(&a.out, "eval", &ckpt.config)?;

    let features = extract_features(&ckpt.encoder, &dataset)?;
    let report = crate::eval::evaluate_features(&features, &dataset, &split, &opts)?;
    write_json(&a.out.join(EVAL_FILE), &report)?;
    let rankings = top_k_rankings(&features, &dataset, &split, &opts, RANKING_DEPTH)?;
    let path = a.out.join(RANKINGS_FILE);
    fs::write(&path, rankings_csv(&rankings)).map_err(|e| Error::io(&path, e))?;
    manifest.finish("ok")?;
    println!(
        "mAP={:.4} top1={:.4} top5={:.4} top10={:.4}",
        report.map, report.top1, report.top5, report.top10
    );
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let base: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    base.validate()?;
    if a.seeds == 0 {
        return Err(Error::invalid("--seeds must be at least 1"));
    }
    let dataset = load_dataset(&a.data)?;
    let opts = EvalOptions::default();
    let split = load_split(&dataset, a.split.as_deref(), &opts)?;
    prepare_dir(&a.out, a.force)?;
    let manifest = ManifestWriter::new(&a.out, &format!("ablate {}", a.suite), &base)?;

    let seeds: Vec<u64> = (0..a.seeds).collect();
    let rows = run_suite(&dataset, &split, &opts, &base, a.suite, &seeds)?;
    let csv = to_csv(&rows);
    let path = a.out.join(format!("{}.csv", a.suite));
    fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
    manifest.finish("ok")?;
    print!("{csv}");
    Ok(())
}
