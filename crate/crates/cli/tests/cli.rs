//! End-to-end tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use softforget::dataset::{synthetic_two_class, FeatureSchema};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_softforget"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Write a small synthetic dataset (CSV + matching schema) into `dir`.
fn write_dataset(dir: &Path, rows: usize, seed: u64) -> (PathBuf, PathBuf) {
    let data = synthetic_two_class::<f64>(rows, seed);
    let csv = dir.join("data.csv");
    let schema_path = dir.join("data.schema");
    data.write_csv(&csv).unwrap();
    let schema = FeatureSchema {
        classes: Some(data.class_names().to_vec()),
        ..FeatureSchema::numeric(data.feature_names(), "label", None)
    };
    std::fs::write(&schema_path, schema.to_text()).unwrap();
    (csv, schema_path)
}

#[test]
fn train_on_synthetic_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = run(&[
        "train",
        "--synthetic",
        "300",
        "--trees",
        "3",
        "--depth",
        "3",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("trained"));
    let loaded = softforget::forest::io::load_model::<f64>(&model).unwrap();
    assert_eq!(loaded.trees().len(), 3);
}

#[test]
fn zero_trees_is_a_usage_error_naming_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = run(&[
        "train",
        "--synthetic",
        "50",
        "--trees",
        "0",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--trees"));
    assert!(!model.exists());
}

#[test]
fn training_twice_with_one_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write_dataset(dir.path(), 250, 11);
    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    let m3 = dir.path().join("m3.json");
    for (m, threads) in [(&m1, None), (&m2, None), (&m3, Some("3"))] {
        let mut cmd = bin();
        cmd.args([
            "train",
            "--data",
            csv.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--trees",
            "4",
            "--depth",
            "4",
            "--seed",
            "7",
            "--out",
            m.to_str().unwrap(),
        ]);
        if let Some(t) = threads {
            cmd.env("SOFTFORGET_THREADS", t);
        }
        assert_ok(&cmd.output().expect("binary runs"));
    }
    let first = std::fs::read(&m1).unwrap();
    assert_eq!(first, std::fs::read(&m2).unwrap());
    // the thread-count env override must not change the model
    assert_eq!(first, std::fs::read(&m3).unwrap());
}

/// poison -> unlearn round trip with a zero learning rate: the unlearned
/// model file must be byte-identical to the input model.
#[test]
fn zero_learning_rate_unlearning_reproduces_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write_dataset(dir.path(), 300, 13);
    let input_bytes = std::fs::read(&csv).unwrap();

    let model = dir.path().join("model.json");
    assert_ok(&run(&[
        "train",
        "--data",
        csv.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--trees",
        "3",
        "--depth",
        "3",
        "--out",
        model.to_str().unwrap(),
    ]));

    let poisoned = dir.path().join("poisoned.csv");
    let ids = dir.path().join("poisoned.ids.txt");
    let retain = dir.path().join("retain.csv");
    let forget = dir.path().join("forget.csv");
    assert_ok(&run(&[
        "poison",
        "--data",
        csv.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--fraction",
        "0.05",
        "--out",
        poisoned.to_str().unwrap(),
        "--ids-out",
        ids.to_str().unwrap(),
        "--retain-out",
        retain.to_str().unwrap(),
        "--forget-out",
        forget.to_str().unwrap(),
    ]));
    let encoded_schema = dir.path().join("poisoned.schema");
    assert!(encoded_schema.exists(), "poison writes a matching schema");
    assert_eq!(
        softforget::dataset::read_row_ids(&ids).unwrap().len(),
        15 // 5% of 300
    );

    let cfg = dir.path().join("frozen.cfg");
    std::fs::write(
        &cfg,
        "learning_rate = 0\nepochs = 1\nbatch_size_retain = 64\nbatch_size_forget = 8\n",
    )
    .unwrap();
    let out_model = dir.path().join("unlearned.json");
    let report = dir.path().join("report.csv");
    assert_ok(&run(&[
        "unlearn",
        "--model",
        model.to_str().unwrap(),
        "--schema",
        encoded_schema.to_str().unwrap(),
        "--retain",
        retain.to_str().unwrap(),
        "--forget",
        forget.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_model.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]));

    assert_eq!(
        std::fs::read(&model).unwrap(),
        std::fs::read(&out_model).unwrap(),
        "zero learning rate must be the identity"
    );
    assert_eq!(
        std::fs::read(&csv).unwrap(),
        input_bytes,
        "no subcommand may mutate its input files"
    );

    // one report row per epoch, after the seed echo and the header
    let text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# seed="));
    assert_eq!(
        lines[1],
        "epoch,retain_kl,task_ce,forget_entropy,total,millis"
    );
    assert_eq!(lines.len(), 3); // 1 epoch
    assert!(
        dir.path().join("report.json").exists(),
        "summary JSON written"
    );
}

#[test]
fn missing_forget_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write_dataset(dir.path(), 100, 3);
    let model = dir.path().join("model.json");
    assert_ok(&run(&[
        "train",
        "--data",
        csv.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--trees",
        "2",
        "--depth",
        "2",
        "--out",
        model.to_str().unwrap(),
    ]));
    let out = run(&[
        "unlearn",
        "--model",
        model.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--retain",
        csv.to_str().unwrap(),
        "--forget",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--out",
        dir.path().join("o.json").to_str().unwrap(),
        "--report",
        dir.path().join("r.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn small_experiment(dir: &Path, extra: &[&str]) -> PathBuf {
    let cfg = dir.join("fast.cfg");
    std::fs::write(
        &cfg,
        "epochs = 1\nbatch_size_retain = 64\nbatch_size_forget = 16\n",
    )
    .unwrap();
    let out_dir = dir.join(format!("run{}", extra.len()));
    let mut args = vec![
        "experiment",
        "--synthetic",
        "600",
        "--trees",
        "4",
        "--depth",
        "3",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_ok(&out);
    out_dir.join("results.csv")
}

#[test]
fn experiment_default_fractions_emit_twelve_rows() {
    let dir = tempfile::tempdir().unwrap();
    let results = small_experiment(dir.path(), &[]);
    let text = std::fs::read_to_string(&results).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# seed=42"));
    assert_eq!(
        lines[1],
        "tag,fraction,auc,accuracy,forget_entropy,attack_success,millis"
    );
    assert_eq!(lines.len() - 2, 12, "3 tags x 4 fractions");
    // attack_success column empty outside poison mode
    for line in &lines[2..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[5], "");
    }
}

#[test]
fn poison_experiment_populates_attack_success() {
    let dir = tempfile::tempdir().unwrap();
    let results = small_experiment(
        dir.path(),
        &[
            "--poison",
            "--trigger-feature",
            "f1",
            "--fractions",
            "0.05,0.1",
        ],
    );
    let text = std::fs::read_to_string(&results).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len() - 2, 6);
    for line in &lines[2..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert!(!fields[5].is_empty(), "attack_success populated: {line}");
    }
}

#[test]
fn experiment_reruns_identically_up_to_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let strip_millis = |path: &Path| {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| {
                l.rsplit_once(',')
                    .map(|(head, _)| head)
                    .unwrap_or(l)
                    .to_string()
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = small_experiment(dir.path(), &["--fractions", "0.2"]);
    let first = strip_millis(&a);
    std::fs::remove_file(&a).unwrap();
    let b = small_experiment(dir.path(), &["--fractions", "0.2"]);
    assert_eq!(first, strip_millis(&b));
}
