//! Threshold unlearning.
//!
//! The procedure: wrap the hard ensemble in a frozen soft surrogate (the
//! reference), clone it into a trainable student, then minimize
//!
//! ```text
//! retain_kl + alpha * task_ce - beta * forget_entropy
//! ```
//!
//! over mini-batches drawn from the retain and forget sets. `retain_kl`
//! anchors the student to the reference's predictions on retained data,
//! `task_ce` is plain cross-entropy against retained labels, and the entropy
//! term pushes forget-set predictions toward the uniform distribution. Only
//! thresholds move; temperatures, leaf scores, weights, and topology stay
//! frozen. On completion the trained thresholds are copied back into a hard
//! ensemble, which is the delivered model.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::TabularDataset;
use crate::forest::Ensemble;
use crate::softforest::SoftForest;
use crate::{eval, kv, Error, Result, Scalar};

/// Student probabilities are floored at this value inside logarithms.
const PROB_FLOOR: f64 = 1e-12;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnlearnConfig {
    /// Weight of the task (cross-entropy) loss on retained data.
    pub alpha: f64,
    /// Weight of the forget-set entropy reward.
    pub beta: f64,
    /// Split sharpness of the surrogate.
    pub sigma: f64,
    /// Vote temperature of the surrogate.
    pub tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size_retain: usize,
    pub batch_size_forget: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Stop after this many epochs without total-loss improvement.
    pub early_stop_patience: Option<usize>,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            alpha: 1.0,
            beta: 1.0,
            sigma: 10.0,
            tau: 5.0,
            learning_rate: 0.01,
            epochs: 20,
            batch_size_retain: 256,
            batch_size_forget: 256,
            optimizer: OptimizerKind::Adam,
            seed: 42,
            early_stop_patience: None,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Spec(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [("sigma", self.sigma), ("tau", self.tau)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Spec(format!("{name} must be finite and positive")));
            }
        }
        if self.epochs < 1 {
            return Err(Error::Spec("epochs must be >= 1".into()));
        }
        if self.batch_size_retain < 1 || self.batch_size_forget < 1 {
            return Err(Error::Spec("batch sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// Cap batch sizes at the actual split sizes.
    pub fn clamp_batches(mut self, n_retain: usize, n_forget: usize) -> Self {
        self.batch_size_retain = self.batch_size_retain.min(n_retain.max(1));
        self.batch_size_forget = self.batch_size_forget.min(n_forget.max(1));
        self
    }

    /// Parse the `key = value` run-config format; unset keys keep defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = UnlearnConfig::default();
        for (key, value) in kv::parse(text)? {
            let bad = |e: &dyn std::fmt::Display| {
                Error::Spec(format!("bad value for {key}: {value:?} ({e})"))
            };
            match key.as_str() {
                "alpha" => cfg.alpha = value.parse().map_err(|e| bad(&e))?,
                "beta" => cfg.beta = value.parse().map_err(|e| bad(&e))?,
                "sigma" => cfg.sigma = value.parse().map_err(|e| bad(&e))?,
                "tau" => cfg.tau = value.parse().map_err(|e| bad(&e))?,
                "learning_rate" => cfg.learning_rate = value.parse().map_err(|e| bad(&e))?,
                "epochs" => cfg.epochs = value.parse().map_err(|e| bad(&e))?,
                "batch_size_retain" => {
                    cfg.batch_size_retain = value.parse().map_err(|e| bad(&e))?
                }
                "batch_size_forget" => {
                    cfg.batch_size_forget = value.parse().map_err(|e| bad(&e))?
                }
                "optimizer" => {
                    cfg.optimizer = match value.as_str() {
                        "sgd" => OptimizerKind::Sgd,
                        "adam" => OptimizerKind::Adam,
                        other => return Err(Error::Spec(format!("unknown optimizer {other:?}"))),
                    }
                }
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                "early_stop_patience" => {
                    cfg.early_stop_patience = Some(value.parse().map_err(|e| bad(&e))?)
                }
                other => return Err(Error::Spec(format!("unknown config key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Spec(format!(
                "cannot read config file {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Self::from_kv(&text)
    }
}

// ---------------------------------------------------------------------------
// Losses (value + gradient w.r.t. the student distribution)
// ---------------------------------------------------------------------------

fn check_distribution<S: Scalar>(rows: &[Vec<S>]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.iter().any(|p| !p.is_finite() || *p < S::zero()) {
            return Err(Error::Contract(format!(
                "row {i}: probabilities must be finite and non-negative"
            )));
        }
        let total: S = row.iter().copied().sum();
        if (total - S::one()).abs() > S::of(1e-6) {
            return Err(Error::Contract(format!(
                "row {i}: probabilities sum to {total}, not 1"
            )));
        }
    }
    Ok(())
}

/// Mean predictive entropy of a batch of distributions, with its gradient.
/// `0 * log 0` counts as 0 and the gradient at exact zeros is 0.
pub fn entropy_loss<S: Scalar>(probs: &[Vec<S>]) -> Result<(S, Vec<Vec<S>>)> {
    if probs.is_empty() {
        return Err(Error::Contract("entropy of an empty batch".into()));
    }
    check_distribution(probs)?;
    let n = S::of(probs.len() as f64);
    let mut value = S::zero();
    let mut grads = Vec::with_capacity(probs.len());
    for row in probs {
        let mut h = S::zero();
        let mut g = Vec::with_capacity(row.len());
        for &p in row {
            if p > S::zero() {
                h = h - p * p.ln();
                g.push(-(p.ln() + S::one()) / n);
            } else {
                g.push(S::zero());
            }
        }
        value = value + h;
        grads.push(g);
    }
    Ok((value / n, grads))
}

/// Mean `KL(target || student)` over a batch, with the gradient w.r.t. the
/// student. Student probabilities are floored inside the logarithm, and the
/// gradient is 0 wherever the floor is active.
pub fn kl_retain_loss<S: Scalar>(
    target: &[Vec<S>],
    student: &[Vec<S>],
) -> Result<(S, Vec<Vec<S>>)> {
    if target.len() != student.len() || target.iter().zip(student).any(|(t, s)| t.len() != s.len())
    {
        return Err(Error::Contract("KL batch shape mismatch".into()));
    }
    if target.is_empty() {
        return Err(Error::Contract("KL of an empty batch".into()));
    }
    check_distribution(target)?;
    check_distribution(student)?;
    let n = S::of(target.len() as f64);
    let floor = S::of(PROB_FLOOR);
    let mut value = S::zero();
    let mut grads = Vec::with_capacity(target.len());
    for (t_row, s_row) in target.iter().zip(student) {
        let mut g = Vec::with_capacity(s_row.len());
        for (&t, &s) in t_row.iter().zip(s_row) {
            if t > S::zero() {
                value = value + t * (t.ln() - s.max(floor).ln());
                g.push(if s > floor { -t / s / n } else { S::zero() });
            } else {
                g.push(S::zero());
            }
        }
        grads.push(g);
    }
    Ok((value / n, grads))
}

/// Mean cross-entropy of the student against true labels, with gradient.
pub fn task_loss<S: Scalar>(student: &[Vec<S>], labels: &[usize]) -> Result<(S, Vec<Vec<S>>)> {
    if student.len() != labels.len() {
        return Err(Error::Contract("labels/batch length mismatch".into()));
    }
    if student.is_empty() {
        return Err(Error::Contract("cross-entropy of an empty batch".into()));
    }
    check_distribution(student)?;
    let n = S::of(student.len() as f64);
    let floor = S::of(PROB_FLOOR);
    let mut value = S::zero();
    let mut grads = Vec::with_capacity(student.len());
    for (row, &label) in student.iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::Contract(format!(
                "label {label} out of range for {} classes",
                row.len()
            )));
        }
        let s = row[label];
        value = value - s.max(floor).ln();
        let mut g = vec![S::zero(); row.len()];
        if s > floor {
            g[label] = -(S::one() / s) / n;
        }
        grads.push(g);
    }
    Ok((value / n, grads))
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// Reference/student pairing. The reference keeps the original thresholds
/// and supplies the KL targets; only the student's thresholds train.
#[derive(Debug, Clone)]
pub struct UnlearnState<S> {
    pub reference: SoftForest<S>,
    pub student: SoftForest<S>,
}

impl<S: Scalar> UnlearnState<S> {
    pub fn new(g: &Ensemble<S>, sigma: S, tau: S) -> Result<Self> {
        let reference = SoftForest::attach(g, sigma, tau)?;
        let student = reference.clone();
        Ok(UnlearnState { reference, student })
    }
}

/// Loss components of one step; `total = retain_kl + alpha * task_ce -
/// beta * forget_entropy`.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveParts<S> {
    pub retain_kl: S,
    pub task_ce: S,
    pub forget_entropy: S,
    pub total: S,
}

/// Combined loss and its gradient over the student's thresholds for one
/// paired mini-batch.
pub fn objective<S: Scalar>(
    state: &UnlearnState<S>,
    retain_rows: &[&[S]],
    retain_labels: &[usize],
    forget_rows: &[&[S]],
    alpha: S,
    beta: S,
) -> Result<(ObjectiveParts<S>, Vec<S>)> {
    if retain_rows.is_empty() || forget_rows.is_empty() {
        return Err(Error::Contract(
            "objective needs non-empty retain and forget batches".into(),
        ));
    }
    if retain_rows.len() != retain_labels.len() {
        return Err(Error::Contract(
            "retain labels/batch length mismatch".into(),
        ));
    }

    let mut grad = vec![S::zero(); state.student.num_thetas()];

    // Retain side: KL against the frozen reference plus the task loss.
    let targets: Vec<Vec<S>> = retain_rows
        .iter()
        .map(|x| state.reference.predict_proba(x))
        .collect();
    let traces: Vec<_> = retain_rows
        .iter()
        .map(|x| state.student.forward(x))
        .collect();
    let student_probs: Vec<Vec<S>> = traces.iter().map(|t| t.probs.clone()).collect();
    let (retain_kl, kl_grads) = kl_retain_loss(&targets, &student_probs)?;
    let (task_ce, ce_grads) = task_loss(&student_probs, retain_labels)?;
    let mut upstream = Vec::new();
    for i in 0..retain_rows.len() {
        upstream.clear();
        upstream.extend(
            kl_grads[i]
                .iter()
                .zip(&ce_grads[i])
                .map(|(&k, &c)| k + alpha * c),
        );
        state
            .student
            .backward_into(&traces[i], &upstream, &mut grad);
    }

    // Forget side: entropy reward (subtracted from the objective).
    let f_traces: Vec<_> = forget_rows
        .iter()
        .map(|x| state.student.forward(x))
        .collect();
    let f_probs: Vec<Vec<S>> = f_traces.iter().map(|t| t.probs.clone()).collect();
    let (forget_entropy, h_grads) = entropy_loss(&f_probs)?;
    for i in 0..forget_rows.len() {
        upstream.clear();
        upstream.extend(h_grads[i].iter().map(|&h| -beta * h));
        state
            .student
            .backward_into(&f_traces[i], &upstream, &mut grad);
    }

    let total = retain_kl + alpha * task_ce - beta * forget_entropy;
    Ok((
        ObjectiveParts {
            retain_kl,
            task_ce,
            forget_entropy,
            total,
        },
        grad,
    ))
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct Optimizer<S> {
    kind: OptimizerKind,
    m: Vec<S>,
    v: Vec<S>,
    t: u32,
}

impl<S: Scalar> Optimizer<S> {
    fn new(kind: OptimizerKind, len: usize) -> Self {
        Optimizer {
            kind,
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            t: 0,
        }
    }

    fn step(&mut self, thetas: &mut [S], grad: &[S], lr: S) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (t, &g) in thetas.iter_mut().zip(grad) {
                    *t = *t - lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let b1 = S::of(ADAM_BETA1);
                let b2 = S::of(ADAM_BETA2);
                let eps = S::of(ADAM_EPS);
                let bias1 = S::one() - S::of(ADAM_BETA1.powi(self.t as i32));
                let bias2 = S::one() - S::of(ADAM_BETA2.powi(self.t as i32));
                for (k, (t, &g)) in thetas.iter_mut().zip(grad).enumerate() {
                    self.m[k] = b1 * self.m[k] + (S::one() - b1) * g;
                    self.v[k] = b2 * self.v[k] + (S::one() - b2) * g * g;
                    let m_hat = self.m[k] / bias1;
                    let v_hat = self.v[k] / bias2;
                    *t = *t - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub retain_kl: f64,
    pub task_ce: f64,
    pub forget_entropy: f64,
    pub total: f64,
    pub millis: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnlearnReport {
    pub epochs: Vec<EpochStats>,
    pub wall_clock_ms: u64,
    /// Mean hard-model entropy on the forget set before/after unlearning.
    pub forget_entropy_before: f64,
    pub forget_entropy_after: f64,
}

impl UnlearnReport {
    /// One CSV row per epoch, preceded by a `# seed=` echo line.
    pub fn write_csv(&self, path: impl AsRef<Path>, seed: u64) -> Result<()> {
        let mut out = format!("# seed={seed}\n");
        out.push_str("epoch,retain_kl,task_ce,forget_entropy,total,millis\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.retain_kl, e.task_ce, e.forget_entropy, e.total, e.millis
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn summary_json(&self, cfg: &UnlearnConfig) -> serde_json::Value {
        serde_json::json!({
            "config": cfg,
            "epochs_run": self.epochs.len(),
            "wall_clock_ms": self.wall_clock_ms,
            "forget_entropy_before": self.forget_entropy_before,
            "forget_entropy_after": self.forget_entropy_after,
            "final": self.epochs.last(),
        })
    }
}

// ---------------------------------------------------------------------------
// The unlearning loop
// ---------------------------------------------------------------------------

/// Unlearn `forget` from `g` while preserving behavior on `retain`.
///
/// Attaches the surrogate pair, runs `epochs` of paired mini-batch steps
/// (the longer split defines the steps per epoch; the shorter one cycles),
/// and copies the trained thresholds back into a hard ensemble. Fully
/// deterministic given the config seed.
pub fn run_unlearning<S: Scalar>(
    g: &Ensemble<S>,
    retain: &TabularDataset<S>,
    forget: &TabularDataset<S>,
    cfg: &UnlearnConfig,
) -> Result<(Ensemble<S>, UnlearnReport)> {
    cfg.validate()?;
    if retain.num_rows() == 0 || forget.num_rows() == 0 {
        return Err(Error::Contract(
            "retain and forget sets must be non-empty".into(),
        ));
    }
    for (name, data) in [("retain", retain), ("forget", forget)] {
        if data.num_features() != g.num_features() {
            return Err(Error::Contract(format!(
                "{name} set has {} features, model expects {}",
                data.num_features(),
                g.num_features()
            )));
        }
    }
    let n_retain = retain.num_rows();
    let n_forget = forget.num_rows();
    if cfg.batch_size_retain > n_retain || cfg.batch_size_forget > n_forget {
        return Err(Error::Contract(format!(
            "batch sizes ({}, {}) exceed split sizes ({n_retain}, {n_forget})",
            cfg.batch_size_retain, cfg.batch_size_forget
        )));
    }

    let start = Instant::now();
    let forget_entropy_before = eval::mean_hard_entropy(g, forget);

    let state_sigma = S::of(cfg.sigma);
    let state_tau = S::of(cfg.tau);
    let mut state = UnlearnState::new(g, state_sigma, state_tau)?;
    let mut optimizer = Optimizer::new(cfg.optimizer, state.student.num_thetas());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let alpha = S::of(cfg.alpha);
    let beta = S::of(cfg.beta);
    let lr = S::of(cfg.learning_rate);

    let steps =
        (n_retain.div_ceil(cfg.batch_size_retain)).max(n_forget.div_ceil(cfg.batch_size_forget));
    let mut retain_order: Vec<usize> = (0..n_retain).collect();
    let mut forget_order: Vec<usize> = (0..n_forget).collect();

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best_total = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        retain_order.shuffle(&mut rng);
        forget_order.shuffle(&mut rng);

        let mut sums = [0.0f64; 3]; // kl, ce, entropy
        for step in 0..steps {
            let retain_batch: Vec<usize> = (0..cfg.batch_size_retain)
                .map(|j| retain_order[(step * cfg.batch_size_retain + j) % n_retain])
                .collect();
            let forget_batch: Vec<usize> = (0..cfg.batch_size_forget)
                .map(|j| forget_order[(step * cfg.batch_size_forget + j) % n_forget])
                .collect();

            let retain_rows: Vec<&[S]> = retain_batch.iter().map(|&p| retain.row(p)).collect();
            let retain_labels: Vec<usize> = retain_batch.iter().map(|&p| retain.label(p)).collect();
            let forget_rows: Vec<&[S]> = forget_batch.iter().map(|&p| forget.row(p)).collect();

            // Shape contracts were validated up front, so an error here means
            // the numbers blew up mid-training (e.g. NaN probabilities).
            let (parts, grad) = objective(
                &state,
                &retain_rows,
                &retain_labels,
                &forget_rows,
                alpha,
                beta,
            )
            .map_err(|e| Error::Diverged {
                epoch,
                step,
                detail: e.to_string(),
            })?;
            if !parts.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: format!(
                        "kl={:?} ce={:?} entropy={:?}",
                        parts.retain_kl, parts.task_ce, parts.forget_entropy
                    ),
                });
            }
            optimizer.step(state.student.thetas_mut(), &grad, lr);

            sums[0] += parts.retain_kl.as_f64();
            sums[1] += parts.task_ce.as_f64();
            sums[2] += parts.forget_entropy.as_f64();
        }

        let div = steps as f64;
        let (retain_kl, task_ce, forget_entropy) = (sums[0] / div, sums[1] / div, sums[2] / div);
        let total = retain_kl + cfg.alpha * task_ce - cfg.beta * forget_entropy;
        epochs.push(EpochStats {
            epoch,
            retain_kl,
            task_ce,
            forget_entropy,
            total,
            millis: epoch_start.elapsed().as_millis() as u64,
        });

        if let Some(patience) = cfg.early_stop_patience {
            if total < best_total - 1e-12 {
                best_total = total;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }

    let unlearned = state.student.detach();
    let forget_entropy_after = eval::mean_hard_entropy(&unlearned, forget);
    let report = UnlearnReport {
        epochs,
        wall_clock_ms: start.elapsed().as_millis() as u64,
        forget_entropy_before,
        forget_entropy_after,
    };
    Ok((unlearned, report))
}
