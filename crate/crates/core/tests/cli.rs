use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cluster-contrast");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("CC_THREADS", "2").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(out: &Path, config: &Path) -> Output {
    run(&[
        "train",
        "--data",
        s(&fixture("small.tsv")),
        "--config",
        s(config),
        "--out",
        s(out),
    ])
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

#[test]
fn help_output_matches_golden() {
    let out = run(&["train", "--help"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden("train_help.txt"));
    let out = run(&["--help"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden("help.txt"));
}

#[test]
fn flag_errors_exit_with_config_code() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["train", "--data", "x.tsv"]).status.code(), Some(2));
    assert_eq!(
        run(&["ablate", "--suite", "nope", "--data", "x", "--out", "y"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn generate_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.tsv");
    let r = run(&[
        "generate",
        "--params",
        s(&fixture("small_params.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("N=64 ids=8 cameras=2"));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        fs::read_to_string(fixture("small.tsv")).unwrap()
    );
    // Refuses to overwrite without --force.
    let again = run(&[
        "generate",
        "--params",
        s(&fixture("small_params.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(again.status.code(), Some(1));
}

#[test]
fn generate_reports_bad_json_and_unwritable_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let r = run(&["generate", "--params", s(&bad), "--out", s(&dir.path().join("d.tsv"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!r.stderr.is_empty());

    let unwritable = dir.path().join("missing-dir").join("d.tsv");
    let r = run(&[
        "generate",
        "--params",
        s(&fixture("small_params.json")),
        "--out",
        s(&unwritable),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn train_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let r = train(&out, &fixture("small_train.json"));
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for f in [
        "checkpoint.json",
        "epochs.jsonl",
        "manifest.json",
        "eval.json",
        "split.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let epochs = cluster_contrast::checkpoint::read_epochs(&out.join("epochs.jsonl")).unwrap();
    assert_eq!(epochs.len(), 10);
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    for key in ["map", "top1", "top5", "top10", "intra_mean", "inter_mean"] {
        assert!(eval.get(key).is_some(), "eval.json lacks {key}");
    }

    // Existing run directories are refused unless forced.
    assert_eq!(train(&out, &fixture("small_train.json")).status.code(), Some(1));
    let forced = run(&[
        "train",
        "--data",
        s(&fixture("small.tsv")),
        "--config",
        s(&fixture("small_train.json")),
        "--out",
        s(&out),
        "--force",
    ]);
    assert_eq!(forced.status.code(), Some(0));
}

#[test]
fn train_records_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("small_train.json")).unwrap()).unwrap();
    v["variant"] = "instance_baseline".into();
    fs::write(&cfg, v.to_string()).unwrap();
    let out = dir.path().join("run");
    assert_eq!(train(&out, &cfg).status.code(), Some(0));
    let ckpt = cluster_contrast::checkpoint::Checkpoint::load(&out.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.config.variant, cluster_contrast::Variant::InstanceBaseline);
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"instance_baseline\""));
}

#[test]
fn train_abort_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"dbscan": {"eps": 0.15, "min_pts": 3}, "sampler": {"p": 16, "z": 4}, "epochs": 2}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let r = train(&out, &cfg);
    assert_eq!(r.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&r.stderr);
    assert!(msg.contains("epoch 0") && msg.contains("8 clusters"), "{msg}");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn train_rejects_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochz": 3}"#).unwrap();
    assert_eq!(train(&dir.path().join("run"), &cfg).status.code(), Some(2));
    assert_eq!(
        train(&dir.path().join("run2"), &dir.path().join("absent.json"))
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(train(&a, &fixture("small_train.json")).status.code(), Some(0));
    let r = Command::new(BIN)
        .args([
            "train",
            "--data",
            s(&fixture("small.tsv")),
            "--config",
            s(&fixture("small_train.json")),
            "--out",
            s(&b),
        ])
        .env("CC_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0));
    for f in ["epochs.jsonl", "checkpoint.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn eval_writes_metrics_and_rankings() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    assert_eq!(train(&run_dir, &fixture("small_train.json")).status.code(), Some(0));
    let out = dir.path().join("eval");
    let args = |out: &Path, ckpt: &Path| {
        run(&[
            "eval",
            "--data",
            s(&fixture("small.tsv")),
            "--checkpoint",
            s(ckpt),
            "--split",
            s(&run_dir.join("split.json")),
            "--out",
            s(out),
        ])
    };
    let r = args(&out, &run_dir.join("checkpoint.json"));
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        fs::read_to_string(out.join("eval.json")).unwrap(),
        fs::read_to_string(run_dir.join("eval.json")).unwrap()
    );
    let rankings = fs::read_to_string(out.join("rankings.csv")).unwrap();
    assert!(rankings.starts_with("query,rank,gallery,score,correct\n"));

    assert_eq!(
        args(&dir.path().join("e2"), &dir.path().join("nope.json"))
            .status
            .code(),
        Some(1)
    );
    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "[]").unwrap();
    assert_eq!(args(&dir.path().join("e3"), &garbage).status.code(), Some(2));
}

#[test]
fn ablate_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let r = run(&[
        "ablate",
        "--suite",
        "variant",
        "--data",
        s(&fixture("small.tsv")),
        "--config",
        s(&fixture("small_train.json")),
        "--out",
        s(&out),
        "--seeds",
        "1",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("variant.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "setting,mAP,top1,runs,aborted");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("baseline,"));
    assert!(lines[3].starts_with("+cluster memory+momentum,"));
}
