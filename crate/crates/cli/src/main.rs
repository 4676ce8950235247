//! Command-line frontend: train tree ensembles, plant backdoor poison,
//! unlearn forget sets, evaluate models, and run the full comparison
//! experiment. All outputs are plain CSV/JSON files; every command echoes
//! its seed so results are reproducible from their own metadata.
//!
//! Exit codes: 0 success, 2 configuration error (bad flags, missing or
//! malformed input files), 1 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use softforget::dataset::{
    self, load_csv, synthetic_two_class, FeatureSchema, PoisonSpec, ResolvedTrigger, TabularDataset,
};
use softforget::eval::{self, ExperimentConfig};
use softforget::forest::{io, train, TrainConfig, TrainMethod};
use softforget::unlearn::{run_unlearning, UnlearnConfig};
use softforget::{Error, Result};

#[derive(Parser)]
#[command(
    name = "softforget",
    version,
    about = "Gradient-based unlearning for tree ensembles via soft-forest surrogates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a tree ensemble and write it as a JSON model file.
    Train(TrainArgs),
    /// Unlearn a forget set from a trained model.
    Unlearn(UnlearnArgs),
    /// Evaluate a model on a dataset (AUC, accuracy, mean entropy).
    Eval(EvalArgs),
    /// Plant a backdoor trigger in a fraction of a dataset.
    Poison(PoisonArgs),
    /// Run the full {original, retrain, unlearned} comparison over several
    /// forget fractions and write a results CSV plus summary JSON.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct DataInput {
    /// CSV data file (requires --schema).
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    /// Schema file describing the CSV columns.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Use the bundled synthetic two-class generator with this many rows
    /// instead of a CSV file.
    #[arg(long, conflicts_with_all = ["data", "schema"])]
    synthetic: Option<usize>,
}

impl DataInput {
    fn load(&self, seed: u64) -> Result<TabularDataset<f64>> {
        match (&self.data, self.synthetic) {
            (Some(path), None) => {
                let schema_path = self.schema.as_ref().expect("clap enforces --schema");
                require_file(schema_path)?;
                require_file(path)?;
                let schema = FeatureSchema::from_file(schema_path)?;
                let (data, _) = load_csv(path, &schema)?;
                Ok(data)
            }
            (None, Some(rows)) => {
                if rows == 0 {
                    return Err(Error::Spec("--synthetic needs at least 1 row".into()));
                }
                Ok(synthetic_two_class(rows, seed))
            }
            _ => Err(Error::Spec(
                "provide either --data with --schema, or --synthetic".into(),
            )),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: DataInput,
    /// Training method: random-forest | adaboost | cart.
    #[arg(long, default_value = "random-forest")]
    method: String,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    trees: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    depth: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    min_leaf: u64,
    #[arg(long, default_value_t = 1.0)]
    bag_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Collapse impure leaves to one-hot majority votes.
    #[arg(long)]
    one_hot_leaves: bool,
    /// Worker threads (or set SOFTFORGET_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UnlearnArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Schema for the retain/forget CSVs.
    #[arg(long)]
    schema: PathBuf,
    /// Retain-set CSV.
    #[arg(long)]
    retain: PathBuf,
    /// Forget-set CSV.
    #[arg(long)]
    forget: PathBuf,
    /// Run config (key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output model file for the unlearned ensemble.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss report CSV.
    #[arg(long)]
    report: PathBuf,
    /// Summary JSON (default: the report path with a .json extension).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Measure backdoor attack success for this trigger feature.
    #[arg(long, requires = "trigger_value")]
    trigger_feature: Option<String>,
    /// Trigger value to stamp (use the value stored by `poison`).
    #[arg(long)]
    trigger_value: Option<f64>,
    #[arg(long, default_value_t = 1)]
    target_label: usize,
}

#[derive(Args)]
struct PoisonArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Fraction of rows to poison, in (0, 1).
    #[arg(long)]
    fraction: f64,
    /// Trigger column (encoded name); defaults to the first numeric column.
    #[arg(long)]
    trigger_feature: Option<String>,
    #[arg(long, default_value_t = 1)]
    target_label: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Poisoned dataset CSV (encoded feature space).
    #[arg(long)]
    out: PathBuf,
    /// Row-id list of the poisoned rows (one id per line).
    #[arg(long)]
    ids_out: PathBuf,
    /// Schema matching the written CSVs (default: --out with a .schema
    /// extension).
    #[arg(long)]
    schema_out: Option<PathBuf>,
    /// Also write the clean remainder (retain side for unlearning).
    #[arg(long)]
    retain_out: Option<PathBuf>,
    /// Also write the poisoned rows alone (forget side for unlearning).
    #[arg(long)]
    forget_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    input: DataInput,
    /// Comma-separated forget fractions.
    #[arg(long, default_value = "0.01,0.1,0.2,0.4")]
    fractions: String,
    /// Poison mode: the forget set becomes the poisoned rows.
    #[arg(long)]
    poison: bool,
    #[arg(long)]
    trigger_feature: Option<String>,
    #[arg(long, default_value_t = 1)]
    target_label: usize,
    #[arg(long, default_value = "random-forest")]
    method: String,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    trees: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    depth: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    min_leaf: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Disable min-max feature scaling (fitted on the training split).
    #[arg(long)]
    no_scale: bool,
    /// Unlearning config file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for results.csv and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Unlearn(args) => cmd_unlearn(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Poison(args) => cmd_poison(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Spec(format!(
            "input file {} not found",
            path.display()
        )))
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("SOFTFORGET_THREADS") {
            Ok(v) => v
                .parse()
                .map_err(|_| Error::Spec(format!("bad SOFTFORGET_THREADS value {v:?}")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(Error::Spec("thread count must be >= 1".into()));
    }
    Ok(n)
}

#[allow(clippy::too_many_arguments)]
fn train_config(
    method: &str,
    trees: u64,
    depth: u64,
    min_leaf: u64,
    bag_fraction: f64,
    seed: u64,
    one_hot_leaves: bool,
    threads: usize,
) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        method: TrainMethod::parse(method)?,
        num_trees: trees as usize,
        max_depth: depth as usize,
        min_leaf: min_leaf as usize,
        bag_fraction,
        seed,
        one_hot_leaves,
        threads,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let threads = thread_count(args.threads)?;
    let cfg = train_config(
        &args.method,
        args.trees,
        args.depth,
        args.min_leaf,
        args.bag_fraction,
        args.seed,
        args.one_hot_leaves,
        threads,
    )?;
    let data = args.input.load(args.seed)?;

    let start = Instant::now();
    let model = train(&data, &cfg)?;
    let millis = start.elapsed().as_millis();
    io::save_model(&model, &args.out)?;

    let train_acc = eval::accuracy(&model, &data);
    let train_auc = if data.num_classes() == 2 {
        eval::auc_roc(&eval::positive_scores(&model, &data), data.labels())
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|_| "n/a".into())
    } else {
        "n/a".into()
    };
    println!(
        "trained method={} trees={} depth={} seed={} rows={} train_accuracy={:.4} train_auc={} millis={} out={}",
        args.method,
        args.trees,
        args.depth,
        args.seed,
        data.num_rows(),
        train_acc,
        train_auc,
        millis,
        args.out.display()
    );
    Ok(())
}

fn cmd_unlearn(args: UnlearnArgs) -> Result<()> {
    require_file(&args.model)?;
    require_file(&args.schema)?;
    require_file(&args.retain)?;
    require_file(&args.forget)?;
    let cfg = match &args.config {
        Some(path) => {
            require_file(path)?;
            UnlearnConfig::from_kv_file(path)?
        }
        None => UnlearnConfig::default(),
    };

    let model = io::load_model::<f64>(&args.model)?;
    let schema = FeatureSchema::from_file(&args.schema)?;
    let (retain, fitted) = load_csv::<f64>(&args.retain, &schema)?;
    // encode the forget side under the fitted schema so both sides agree
    let (forget, _) = load_csv::<f64>(&args.forget, &fitted)?;

    let cfg = cfg.clamp_batches(retain.num_rows(), forget.num_rows());
    let (unlearned, report) = run_unlearning(&model, &retain, &forget, &cfg)?;
    io::save_model(&unlearned, &args.out)?;
    report.write_csv(&args.report, cfg.seed)?;

    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| args.report.with_extension("json"));
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&report.summary_json(&cfg)).expect("summary serializes"),
    )?;

    println!(
        "unlearned seed={} epochs_run={} wall_clock_ms={} forget_entropy {:.4} -> {:.4} out={} report={}",
        cfg.seed,
        report.epochs.len(),
        report.wall_clock_ms,
        report.forget_entropy_before,
        report.forget_entropy_after,
        args.out.display(),
        args.report.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    require_file(&args.model)?;
    require_file(&args.schema)?;
    require_file(&args.data)?;
    let model = io::load_model::<f64>(&args.model)?;
    let schema = FeatureSchema::from_file(&args.schema)?;
    let (data, _) = load_csv::<f64>(&args.data, &schema)?;

    let auc = if data.num_classes() == 2 {
        Some(eval::auc_roc(
            &eval::positive_scores(&model, &data),
            data.labels(),
        )?)
    } else {
        None
    };
    let attack = match (&args.trigger_feature, args.trigger_value) {
        (Some(name), Some(value)) => {
            let feature_index = data
                .feature_index(name)
                .ok_or_else(|| Error::Spec(format!("unknown trigger feature {name:?}")))?;
            let trigger = ResolvedTrigger {
                feature_index,
                feature_name: name.clone(),
                value,
            };
            Some(eval::attack_success_rate(
                &model,
                &data,
                &trigger,
                args.target_label,
            )?)
        }
        _ => None,
    };
    let summary = serde_json::json!({
        "rows": data.num_rows(),
        "auc": auc,
        "accuracy": eval::accuracy(&model, &data),
        "mean_entropy": eval::mean_hard_entropy(&model, &data),
        "attack_success_rate": attack,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("serializes")
    );
    Ok(())
}

fn cmd_poison(args: PoisonArgs) -> Result<()> {
    require_file(&args.data)?;
    require_file(&args.schema)?;
    let schema = FeatureSchema::from_file(&args.schema)?;
    let (data, _) = load_csv::<f64>(&args.data, &schema)?;

    let spec = PoisonSpec {
        poison_fraction: args.fraction,
        trigger_feature: args.trigger_feature.clone(),
        target_label: args.target_label,
    };
    let outcome = dataset::poison(&data, &spec, args.seed)?;

    outcome.data.write_csv(&args.out)?;
    dataset::write_row_ids(&args.ids_out, &outcome.poisoned_ids)?;

    // schema matching the encoded CSVs this command writes
    let encoded_schema = FeatureSchema {
        classes: Some(outcome.data.class_names().to_vec()),
        ..FeatureSchema::numeric(outcome.data.feature_names(), "label", None)
    };
    let schema_out = args
        .schema_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("schema"));
    std::fs::write(&schema_out, encoded_schema.to_text())?;

    if args.retain_out.is_some() || args.forget_out.is_some() {
        let (forget, retain) = outcome.data.partition_by_ids(&outcome.poisoned_ids);
        if let Some(path) = &args.retain_out {
            retain.write_csv(path)?;
        }
        if let Some(path) = &args.forget_out {
            forget.write_csv(path)?;
        }
    }

    println!(
        "poisoned seed={} rows={} fraction={} trigger_feature={} trigger_value={} target_label={} out={} ids={}",
        args.seed,
        outcome.poisoned_ids.len(),
        args.fraction,
        outcome.trigger.feature_name,
        outcome.trigger.value,
        args.target_label,
        args.out.display(),
        args.ids_out.display()
    );
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let threads = thread_count(args.threads)?;
    let fractions: Vec<f64> = args
        .fractions
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Spec(format!("bad fraction {s:?}")))
        })
        .collect::<Result<_>>()?;
    let train_cfg = train_config(
        &args.method,
        args.trees,
        args.depth,
        args.min_leaf,
        1.0,
        args.seed,
        false,
        threads,
    )?;
    let mut unlearn_cfg = match &args.config {
        Some(path) => {
            require_file(path)?;
            UnlearnConfig::from_kv_file(path)?
        }
        None => UnlearnConfig::default(),
    };
    unlearn_cfg.seed = args.seed;

    let data = args.input.load(args.seed)?;
    let cfg = ExperimentConfig {
        train: train_cfg,
        unlearn: unlearn_cfg,
        fractions,
        poison: args.poison.then(|| PoisonSpec {
            poison_fraction: 0.05, // per-fraction override applies
            trigger_feature: args.trigger_feature.clone(),
            target_label: args.target_label,
        }),
        test_fraction: args.test_fraction,
        scale: !args.no_scale,
        seed: args.seed,
    };

    std::fs::create_dir_all(&args.out_dir)?;
    let rows = eval::run_experiment(&data, &cfg)?;
    let csv_path = args.out_dir.join("results.csv");
    let json_path = args.out_dir.join("summary.json");
    eval::write_results_csv(&rows, &csv_path, args.seed)?;
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&eval::results_summary_json(&rows, args.seed))
            .expect("summary serializes"),
    )?;

    println!(
        "experiment seed={} rows={} results={} summary={}",
        args.seed,
        rows.len(),
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}
