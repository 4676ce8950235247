//! Trainers for the hard model: greedy CART, bagged random forests, and
//! SAMME-style boosting. Everything is deterministic given the config seed;
//! random-forest trees draw from per-tree RNG streams so parallel and
//! sequential training produce identical models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::TabularDataset;
use crate::{Error, Result, Scalar};

use super::{Ensemble, Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMethod {
    RandomForest,
    AdaboostSamme,
    SingleCart,
}

impl TrainMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random-forest" | "random_forest" | "rf" => Ok(TrainMethod::RandomForest),
            "adaboost" | "adaboost-samme" | "adaboost_samme" | "samme" => {
                Ok(TrainMethod::AdaboostSamme)
            }
            "cart" | "single-cart" | "single_cart" => Ok(TrainMethod::SingleCart),
            other => Err(Error::Spec(format!("unknown training method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitCriterion {
    #[default]
    Gini,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub method: TrainMethod,
    pub num_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub split_criterion: SplitCriterion,
    /// Bootstrap sample size as a fraction of the training set (RF only).
    pub bag_fraction: f64,
    pub seed: u64,
    /// Collapse impure leaves to a one-hot of their majority class.
    pub one_hot_leaves: bool,
    /// Worker threads for per-tree RF training; 1 = sequential.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: TrainMethod::RandomForest,
            num_trees: 50,
            max_depth: 8,
            min_leaf: 1,
            split_criterion: SplitCriterion::Gini,
            bag_fraction: 1.0,
            seed: 42,
            one_hot_leaves: false,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees < 1 {
            return Err(Error::Spec("num_trees must be >= 1".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::Spec("max_depth must be >= 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::Spec("min_leaf must be >= 1".into()));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(Error::Spec("bag_fraction must be in (0, 1]".into()));
        }
        if self.threads < 1 {
            return Err(Error::Spec("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Train per `cfg.method`.
pub fn train<S: Scalar>(data: &TabularDataset<S>, cfg: &TrainConfig) -> Result<Ensemble<S>> {
    match cfg.method {
        TrainMethod::RandomForest => train_random_forest(data, cfg),
        TrainMethod::AdaboostSamme => train_boosted(data, cfg),
        TrainMethod::SingleCart => {
            let tree = train_cart(data, cfg)?;
            Ensemble::new(
                vec![tree],
                vec![S::one()],
                data.num_classes(),
                data.feature_names().to_vec(),
            )
        }
    }
}

/// Greedy top-down CART with Gini impurity on uniform row weights.
///
/// Candidate thresholds are midpoints between consecutive distinct sorted
/// feature values; equal-gain ties break to the lowest feature index, then
/// the lowest threshold. Leaves carry the empirical class distribution.
pub fn train_cart<S: Scalar>(data: &TabularDataset<S>, cfg: &TrainConfig) -> Result<Tree<S>> {
    cfg.validate()?;
    check_trainable(data)?;
    let rows: Vec<usize> = (0..data.num_rows()).collect();
    let weights = vec![S::one(); data.num_rows()];
    grow_tree(data, &rows, &weights, cfg)
}

/// Bagged random forest: `num_trees` CARTs on bootstrap samples, uniform
/// vote weights `1/M`.
pub fn train_random_forest<S: Scalar>(
    data: &TabularDataset<S>,
    cfg: &TrainConfig,
) -> Result<Ensemble<S>> {
    cfg.validate()?;
    check_trainable(data)?;
    let n = data.num_rows();
    let bag = ((cfg.bag_fraction * n as f64).round() as usize).max(1);
    let weights = vec![S::one(); n];

    let build = |i: usize| -> Result<Tree<S>> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let rows: Vec<usize> = (0..bag).map(|_| rng.gen_range(0..n)).collect();
        grow_tree(data, &rows, &weights, cfg)
    };

    let trees = if cfg.threads <= 1 || cfg.num_trees == 1 {
        (0..cfg.num_trees).map(build).collect::<Result<Vec<_>>>()?
    } else {
        parallel_map(cfg.num_trees, cfg.threads, build)?
    };

    let w = S::one() / S::of(cfg.num_trees as f64);
    Ensemble::new(
        trees,
        vec![w; cfg.num_trees],
        data.num_classes(),
        data.feature_names().to_vec(),
    )
}

/// SAMME boosting: each round fits a CART on the current row-weight
/// distribution, votes get weight `ln((1-e)/e) + ln(K-1)`, and misclassified
/// rows are upweighted by `exp(weight)`. Rounds whose weighted error reaches
/// the random-guessing bound `1 - 1/K` are discarded and boosting stops.
pub fn train_boosted<S: Scalar>(
    data: &TabularDataset<S>,
    cfg: &TrainConfig,
) -> Result<Ensemble<S>> {
    cfg.validate()?;
    check_trainable(data)?;
    let n = data.num_rows();
    let k = data.num_classes();
    if k < 2 {
        return Err(Error::Train("boosting needs at least 2 classes".into()));
    }

    let uniform = S::one() / S::of(n as f64);
    let mut dist = vec![uniform; n];
    let rows: Vec<usize> = (0..n).collect();
    let guess_bound = 1.0 - 1.0 / k as f64;

    let mut trees = Vec::new();
    let mut tree_weights: Vec<S> = Vec::new();
    for _round in 0..cfg.num_trees {
        let tree = grow_tree(data, &rows, &dist, cfg)?;
        let misclassified: Vec<bool> = (0..n)
            .map(|r| super::argmax(tree.predict(data.row(r))) != data.label(r))
            .collect();
        let eps: f64 = dist
            .iter()
            .zip(&misclassified)
            .filter(|(_, &m)| m)
            .map(|(d, _)| d.as_f64())
            .sum();

        if eps >= guess_bound {
            if trees.is_empty() {
                return Err(Error::Train(format!(
                    "first boosting round is no better than guessing (error {eps:.4})"
                )));
            }
            break;
        }
        let eps = eps.max(1e-10);
        let alpha = ((1.0 - eps) / eps).ln() + ((k - 1) as f64).ln();
        trees.push(tree);
        tree_weights.push(S::of(alpha));

        let boost = S::of(alpha.exp());
        for (d, &m) in dist.iter_mut().zip(&misclassified) {
            if m {
                *d = *d * boost;
            }
        }
        let total: S = dist.iter().copied().sum();
        for d in dist.iter_mut() {
            *d = *d / total;
        }
    }

    Ensemble::new(
        trees,
        tree_weights,
        data.num_classes(),
        data.feature_names().to_vec(),
    )
}

fn check_trainable<S: Scalar>(data: &TabularDataset<S>) -> Result<()> {
    if data.num_rows() == 0 {
        return Err(Error::Train("cannot train on an empty dataset".into()));
    }
    if data.num_features() == 0 {
        return Err(Error::Train("cannot train with zero features".into()));
    }
    Ok(())
}

/// Map `build` over `0..count` on `threads` workers, preserving order.
fn parallel_map<S: Scalar>(
    count: usize,
    threads: usize,
    build: impl Fn(usize) -> Result<Tree<S>> + Sync,
) -> Result<Vec<Tree<S>>> {
    let mut slots: Vec<Option<Result<Tree<S>>>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(threads);
    std::thread::scope(|scope| {
        for piece in slots.chunks_mut(chunk).enumerate() {
            let (w, out) = piece;
            let build = &build;
            scope.spawn(move || {
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = Some(build(w * chunk + j));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}

/// Grow one tree on `rows` (indices into `data`, duplicates allowed for
/// bootstrap samples) weighted by `row_weights` (aligned to data rows).
fn grow_tree<S: Scalar>(
    data: &TabularDataset<S>,
    rows: &[usize],
    row_weights: &[S],
    cfg: &TrainConfig,
) -> Result<Tree<S>> {
    let mut nodes = Vec::new();
    grow_node(data, rows.to_vec(), row_weights, 0, cfg, &mut nodes);
    Tree::from_nodes(nodes)
}

fn grow_node<S: Scalar>(
    data: &TabularDataset<S>,
    rows: Vec<usize>,
    row_weights: &[S],
    depth: usize,
    cfg: &TrainConfig,
    nodes: &mut Vec<Node<S>>,
) -> usize {
    let k = data.num_classes();
    let mut class_w = vec![S::zero(); k];
    for &r in &rows {
        class_w[data.label(r)] = class_w[data.label(r)] + row_weights[r];
    }
    let pure = class_w.iter().filter(|w| **w > S::zero()).count() <= 1;

    let split = if pure || depth >= cfg.max_depth || rows.len() < 2 * cfg.min_leaf {
        None
    } else {
        best_split(data, &rows, row_weights, &class_w, cfg.min_leaf)
    };

    match split {
        None => {
            let id = nodes.len();
            nodes.push(Node::Leaf {
                scores: leaf_scores(&class_w, cfg.one_hot_leaves),
            });
            id
        }
        Some((feature, threshold)) => {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                .into_iter()
                .partition(|&r| data.row(r)[feature] < threshold);
            let id = nodes.len();
            // placeholder; children ids are known only after recursion
            nodes.push(Node::Decision {
                feature,
                threshold,
                left: 0,
                right: 0,
            });
            let left = grow_node(data, left_rows, row_weights, depth + 1, cfg, nodes);
            let right = grow_node(data, right_rows, row_weights, depth + 1, cfg, nodes);
            if let Node::Decision {
                left: l, right: r, ..
            } = &mut nodes[id]
            {
                *l = left;
                *r = right;
            }
            id
        }
    }
}

fn leaf_scores<S: Scalar>(class_w: &[S], one_hot: bool) -> Vec<S> {
    let total: S = class_w.iter().copied().sum();
    if one_hot {
        let mut out = vec![S::zero(); class_w.len()];
        out[super::argmax(class_w)] = S::one();
        out
    } else {
        class_w.iter().map(|&w| w / total).collect()
    }
}

fn gini<S: Scalar>(class_w: &[S], total: S) -> S {
    let mut sum_sq = S::zero();
    for &w in class_w {
        let p = w / total;
        sum_sq = sum_sq + p * p;
    }
    S::one() - sum_sq
}

/// Best (feature, midpoint-threshold) by Gini gain over all candidates with
/// both sides holding at least `min_leaf` rows. Returns `None` when no valid
/// candidate exists.
fn best_split<S: Scalar>(
    data: &TabularDataset<S>,
    rows: &[usize],
    row_weights: &[S],
    class_w: &[S],
    min_leaf: usize,
) -> Option<(usize, S)> {
    let k = class_w.len();
    let total: S = class_w.iter().copied().sum();
    let parent_impurity = gini(class_w, total);
    let n = rows.len();

    let mut best: Option<(S, usize, S)> = None; // (gain, feature, threshold)
    let mut sorted: Vec<(S, usize, S)> = Vec::with_capacity(n); // (value, class, weight)
    let mut left_w = vec![S::zero(); k];

    for feature in 0..data.num_features() {
        sorted.clear();
        sorted.extend(
            rows.iter()
                .map(|&r| (data.row(r)[feature], data.label(r), row_weights[r])),
        );
        sorted.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));

        left_w.iter_mut().for_each(|w| *w = S::zero());
        let mut left_total = S::zero();
        for i in 0..n - 1 {
            let (value, class, w) = sorted[i];
            left_w[class] = left_w[class] + w;
            left_total = left_total + w;
            let next = sorted[i + 1].0;
            if value == next {
                continue;
            }
            if i + 1 < min_leaf || n - i - 1 < min_leaf {
                continue;
            }
            let two = S::of(2.0);
            let mid = (value + next) / two;
            // Guard against midpoints that collapse onto an endpoint for
            // adjacent floats; `x >= mid` must separate the two sides.
            if !(value < mid && mid <= next) {
                continue;
            }
            let right_total = total - left_total;
            let mut right_w_sq = S::zero();
            let mut left_w_sq = S::zero();
            for c in 0..k {
                let lw = left_w[c];
                let rw = class_w[c] - lw;
                left_w_sq = left_w_sq + lw * lw;
                right_w_sq = right_w_sq + rw * rw;
            }
            let left_imp = S::one() - left_w_sq / (left_total * left_total);
            let right_imp = S::one() - right_w_sq / (right_total * right_total);
            let gain = parent_impurity - (left_total * left_imp + right_total * right_imp) / total;
            let better = match &best {
                None => true,
                Some((g, f, t)) => gain > *g || (gain == *g && (feature, mid) < (*f, *t)),
            };
            if better {
                best = Some((gain, feature, mid));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
