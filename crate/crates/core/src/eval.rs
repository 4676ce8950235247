//! Metrics and the experiment harness: AUC-ROC, accuracy, forget-set
//! entropy, backdoor attack success, retrain-from-scratch references, and
//! the full {original, retrain, unlearned} comparison across forget
//! fractions.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::dataset::{
    apply_trigger, poison, split_retain_forget, PoisonSpec, ResolvedTrigger, SplitSpec,
    TabularDataset,
};
use crate::forest::{train, Ensemble, TrainConfig};
use crate::unlearn::{run_unlearning, UnlearnConfig};
use crate::{Error, Result, Scalar};

// ---------------------------------------------------------------------------
// Per-model metrics
// ---------------------------------------------------------------------------

/// Normalized output distribution of the hard model: ensemble scores divided
/// by their sum (the sum equals the total vote weight, which is positive).
pub fn hard_distribution<S: Scalar>(g: &Ensemble<S>, x: &[S]) -> Vec<f64> {
    let scores = g.scores(x);
    let total: f64 = scores.iter().map(|s| s.as_f64()).sum();
    scores.iter().map(|s| s.as_f64() / total).collect()
}

/// Mean entropy (nats) of the hard model's normalized output over a dataset.
pub fn mean_hard_entropy<S: Scalar>(g: &Ensemble<S>, data: &TabularDataset<S>) -> f64 {
    if data.num_rows() == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for r in 0..data.num_rows() {
        let p = hard_distribution(g, data.row(r));
        total += p
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| -v * v.ln())
            .sum::<f64>();
    }
    total / data.num_rows() as f64
}

/// Positive-class (class 1) component of the normalized hard scores, used as
/// the ranking score for AUC.
pub fn positive_scores<S: Scalar>(g: &Ensemble<S>, data: &TabularDataset<S>) -> Vec<f64> {
    (0..data.num_rows())
        .map(|r| hard_distribution(g, data.row(r))[1])
        .collect()
}

pub fn accuracy<S: Scalar>(g: &Ensemble<S>, data: &TabularDataset<S>) -> f64 {
    if data.num_rows() == 0 {
        return 0.0;
    }
    let correct = (0..data.num_rows())
        .filter(|&r| g.predict(data.row(r)) == data.label(r))
        .count();
    correct as f64 / data.num_rows() as f64
}

/// AUC-ROC by the Mann-Whitney rank-sum formulation:
/// `(R_pos - P(P+1)/2) / (P * N)` with midranks for ties, which equals
/// `(#concordant + 0.5 * #tied) / (P * N)`.
pub fn auc_roc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract("scores/labels length mismatch".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Metric(format!(
            "AUC is defined for binary labels only, found class {bad}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Contract("non-finite score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(
            "AUC undefined: only one class present".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // midrank over the tie group [i, j] (1-based ranks)
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += rank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Fraction of trigger-stamped test rows, restricted to rows whose true
/// label differs from the target, that the model predicts as the target.
pub fn attack_success_rate<S: Scalar>(
    g: &Ensemble<S>,
    clean_test: &TabularDataset<S>,
    trigger: &ResolvedTrigger<S>,
    target_label: usize,
) -> Result<f64> {
    let eligible: Vec<usize> = (0..clean_test.num_rows())
        .filter(|&r| clean_test.label(r) != target_label)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Metric(
            "no test rows with a label other than the target".into(),
        ));
    }
    let stamped = apply_trigger(&clean_test.subset(&eligible), trigger)?;
    let hits = (0..stamped.num_rows())
        .filter(|&r| g.predict(stamped.row(r)) == target_label)
        .count();
    Ok(hits as f64 / stamped.num_rows() as f64)
}

/// Train from scratch on the retain set, timed end-to-end.
pub fn retrain_reference<S: Scalar>(
    retain: &TabularDataset<S>,
    cfg: &TrainConfig,
) -> Result<(Ensemble<S>, u64)> {
    let start = Instant::now();
    let g = train(retain, cfg)?;
    Ok((g, start.elapsed().as_millis() as u64))
}

// ---------------------------------------------------------------------------
// Experiment harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    /// Binary tasks only; `None` for multiclass.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub mean_forget_entropy: f64,
    /// Present only when the experiment ran in poison mode.
    pub attack_success_rate: Option<f64>,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Original,
    Retrain,
    Unlearned,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelTag::Original => write!(f, "original"),
            ModelTag::Retrain => write!(f, "retrain"),
            ModelTag::Unlearned => write!(f, "unlearned"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub model_tag: ModelTag,
    pub forget_fraction: f64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub unlearn: UnlearnConfig,
    pub fractions: Vec<f64>,
    /// Poison mode: the forget set becomes the poisoned rows and the
    /// per-run fraction overrides `poison.poison_fraction`.
    pub poison: Option<PoisonSpec>,
    pub test_fraction: f64,
    /// Min-max scale features (fitted on the training split).
    pub scale: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            unlearn: UnlearnConfig::default(),
            fractions: vec![0.01, 0.10, 0.20, 0.40],
            poison: None,
            test_fraction: 0.2,
            scale: true,
            seed: 42,
        }
    }
}

/// Run the full protocol: for each forget fraction, train the original
/// model, split (or poison) the training data, retrain on the retain side
/// as the reference, unlearn the forget side, and report all three models.
pub fn run_experiment<S: Scalar>(
    data: &TabularDataset<S>,
    cfg: &ExperimentConfig,
) -> Result<Vec<ComparisonRow>> {
    if cfg.fractions.is_empty() {
        return Err(Error::Spec("no forget fractions given".into()));
    }
    cfg.train.validate()?;
    cfg.unlearn.validate()?;
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(Error::Spec("test_fraction must be in (0, 1)".into()));
    }

    // One train/test split shared by every fraction.
    let (mut train_split, mut test) = split_retain_forget(
        data,
        &SplitSpec {
            forget_fraction: cfg.test_fraction,
            seed: cfg.seed,
            stratified: false,
        },
    )?;
    if cfg.scale {
        let scaler = crate::dataset::MinMaxScaler::fit(&train_split)?;
        train_split = scaler.transform(&train_split)?;
        test = scaler.transform(&test)?;
    }

    let binary = data.num_classes() == 2;
    let mut rows = Vec::with_capacity(3 * cfg.fractions.len());

    for &fraction in &cfg.fractions {
        let run = if let Some(poison_spec) = &cfg.poison {
            run_poison_fraction(&train_split, &test, cfg, poison_spec, fraction, binary)?
        } else {
            run_plain_fraction(&train_split, &test, cfg, fraction, binary)?
        };
        rows.extend(run);
    }
    Ok(rows)
}

fn evaluate<S: Scalar>(
    g: &Ensemble<S>,
    test: &TabularDataset<S>,
    forget: &TabularDataset<S>,
    attack: Option<(&ResolvedTrigger<S>, usize)>,
    binary: bool,
    wall_clock_ms: u64,
) -> Result<MetricsReport> {
    let auc = if binary {
        Some(auc_roc(&positive_scores(g, test), test.labels())?)
    } else {
        None
    };
    let attack_success_rate = match attack {
        Some((trigger, target)) => Some(attack_success_rate(g, test, trigger, target)?),
        None => None,
    };
    Ok(MetricsReport {
        auc,
        accuracy: accuracy(g, test),
        mean_forget_entropy: mean_hard_entropy(g, forget),
        attack_success_rate,
        wall_clock_ms,
    })
}

fn run_plain_fraction<S: Scalar>(
    train_split: &TabularDataset<S>,
    test: &TabularDataset<S>,
    cfg: &ExperimentConfig,
    fraction: f64,
    binary: bool,
) -> Result<Vec<ComparisonRow>> {
    let start = Instant::now();
    let original = train(train_split, &cfg.train)?;
    let train_ms = start.elapsed().as_millis() as u64;

    let (retain, forget) = split_retain_forget(
        train_split,
        &SplitSpec {
            forget_fraction: fraction,
            seed: cfg.seed,
            stratified: false,
        },
    )?;
    let (reference, retrain_ms) = retrain_reference(&retain, &cfg.train)?;
    let unlearn_cfg = cfg
        .unlearn
        .clone()
        .clamp_batches(retain.num_rows(), forget.num_rows());
    let (unlearned, report) = run_unlearning(&original, &retain, &forget, &unlearn_cfg)?;

    Ok(vec![
        ComparisonRow {
            model_tag: ModelTag::Original,
            forget_fraction: fraction,
            metrics: evaluate(&original, test, &forget, None, binary, train_ms)?,
        },
        ComparisonRow {
            model_tag: ModelTag::Retrain,
            forget_fraction: fraction,
            metrics: evaluate(&reference, test, &forget, None, binary, retrain_ms)?,
        },
        ComparisonRow {
            model_tag: ModelTag::Unlearned,
            forget_fraction: fraction,
            metrics: evaluate(
                &unlearned,
                test,
                &forget,
                None,
                binary,
                report.wall_clock_ms,
            )?,
        },
    ])
}

fn run_poison_fraction<S: Scalar>(
    train_split: &TabularDataset<S>,
    test: &TabularDataset<S>,
    cfg: &ExperimentConfig,
    poison_spec: &PoisonSpec,
    fraction: f64,
    binary: bool,
) -> Result<Vec<ComparisonRow>> {
    let spec = PoisonSpec {
        poison_fraction: fraction,
        ..poison_spec.clone()
    };
    let outcome = poison(train_split, &spec, cfg.seed)?;
    let (forget, retain) = outcome.data.partition_by_ids(&outcome.poisoned_ids);
    let attack = Some((&outcome.trigger, spec.target_label));

    let start = Instant::now();
    let original = train(&outcome.data, &cfg.train)?;
    let train_ms = start.elapsed().as_millis() as u64;

    // The retrain reference sees only the clean remainder.
    let (reference, retrain_ms) = retrain_reference(&retain, &cfg.train)?;
    let unlearn_cfg = cfg
        .unlearn
        .clone()
        .clamp_batches(retain.num_rows(), forget.num_rows());
    let (unlearned, report) = run_unlearning(&original, &retain, &forget, &unlearn_cfg)?;

    Ok(vec![
        ComparisonRow {
            model_tag: ModelTag::Original,
            forget_fraction: fraction,
            metrics: evaluate(&original, test, &forget, attack, binary, train_ms)?,
        },
        ComparisonRow {
            model_tag: ModelTag::Retrain,
            forget_fraction: fraction,
            metrics: evaluate(&reference, test, &forget, attack, binary, retrain_ms)?,
        },
        ComparisonRow {
            model_tag: ModelTag::Unlearned,
            forget_fraction: fraction,
            metrics: evaluate(
                &unlearned,
                test,
                &forget,
                attack,
                binary,
                report.wall_clock_ms,
            )?,
        },
    ])
}

// ---------------------------------------------------------------------------
// Result files
// ---------------------------------------------------------------------------

/// Results CSV: a `# seed=` echo line, a header, then one row per
/// ComparisonRow. Optional metrics render as empty fields.
pub fn write_results_csv(rows: &[ComparisonRow], path: impl AsRef<Path>, seed: u64) -> Result<()> {
    let mut out = format!("# seed={seed}\n");
    out.push_str("tag,fraction,auc,accuracy,forget_entropy,attack_success,millis\n");
    for row in rows {
        let m = &row.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.model_tag,
            row.forget_fraction,
            m.auc.map(|v| v.to_string()).unwrap_or_default(),
            m.accuracy,
            m.mean_forget_entropy,
            m.attack_success_rate
                .map(|v| v.to_string())
                .unwrap_or_default(),
            m.wall_clock_ms
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn results_summary_json(rows: &[ComparisonRow], seed: u64) -> serde_json::Value {
    serde_json::json!({ "seed": seed, "rows": rows })
}
