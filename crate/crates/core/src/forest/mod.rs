//! Hard tree-ensemble model: trees, weighted-vote ensembles, deterministic
//! inference, trainers, and the JSON model format.
//!
//! Routing convention: at a decision node with feature `f` and threshold `t`,
//! an input goes RIGHT when `x[f] >= t` and LEFT when `x[f] < t`. The
//! boundary case is inclusive-right everywhere in this crate.

pub mod io;
mod train;

pub use train::{
    train, train_boosted, train_cart, train_random_forest, SplitCriterion, TrainConfig, TrainMethod,
};

use crate::{Error, Result, Scalar};

/// One node of a binary decision tree, stored in a flat preorder arena.
/// Node ids are indices into the arena.
#[derive(Debug, Clone, PartialEq)]
pub enum Node<S> {
    Decision {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Length-K class score vector. Trainers in this crate emit
        /// empirical class distributions (one-hot when the leaf is pure).
        scores: Vec<S>,
    },
}

impl<S> Node<S> {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// A proper binary decision tree in preorder arena form; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tree<S> {
    /// Build a tree from a preorder node arena, validating shape.
    pub fn from_nodes(nodes: Vec<Node<S>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        // A proper preorder arena visits ids 0..n in order.
        let mut expected = 0usize;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if id != expected {
                return Err(Error::Model(format!(
                    "node ids are not preorder: expected {expected}, found {id}"
                )));
            }
            expected += 1;
            match &nodes[id] {
                Node::Leaf { .. } => {}
                Node::Decision { left, right, .. } => {
                    if *left >= nodes.len() || *right >= nodes.len() {
                        return Err(Error::Model(format!(
                            "node {id} references a child outside the arena"
                        )));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        if expected != nodes.len() {
            return Err(Error::Model(format!(
                "{} of {} nodes unreachable from the root",
                nodes.len() - expected,
                nodes.len()
            )));
        }
        Ok(Tree { nodes })
    }

    /// Single-leaf tree.
    pub fn leaf(scores: Vec<S>) -> Self {
        Tree {
            nodes: vec![Node::Leaf { scores }],
        }
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_decision_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Depth in decision levels; a single-leaf tree has depth 0.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, d)) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { .. } => max = max.max(d),
                Node::Decision { left, right, .. } => {
                    stack.push((*left, d + 1));
                    stack.push((*right, d + 1));
                }
            }
        }
        max
    }

    /// Route `x` to its unique leaf and return the leaf's node id.
    pub fn hard_activation(&self, x: &[S]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Decision {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[*feature] >= *threshold {
                        *right
                    } else {
                        *left
                    };
                }
            }
        }
    }

    /// Score vector of the leaf activated by `x`.
    pub fn predict(&self, x: &[S]) -> &[S] {
        match &self.nodes[self.hard_activation(x)] {
            Node::Leaf { scores } => scores,
            Node::Decision { .. } => unreachable!("hard_activation returns a leaf"),
        }
    }

    fn validate(&self, num_features: usize, num_classes: usize) -> Result<()> {
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Decision {
                    feature, threshold, ..
                } => {
                    if *feature >= num_features {
                        return Err(Error::Model(format!(
                            "node {id}: feature index {feature} out of range (width {num_features})"
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Model(format!("node {id}: non-finite threshold")));
                    }
                }
                Node::Leaf { scores } => {
                    if scores.len() != num_classes {
                        return Err(Error::Model(format!(
                            "node {id}: leaf has {} scores, expected {num_classes}",
                            scores.len()
                        )));
                    }
                    if scores.iter().any(|s| !s.is_finite()) {
                        return Err(Error::Model(format!("node {id}: non-finite leaf score")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Weighted-vote tree ensemble: the hard model.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<S> {
    trees: Vec<Tree<S>>,
    weights: Vec<S>,
    num_classes: usize,
    feature_names: Vec<String>,
}

impl<S: Scalar> Ensemble<S> {
    pub fn new(
        trees: Vec<Tree<S>>,
        weights: Vec<S>,
        num_classes: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Model("ensemble has no trees".into()));
        }
        if trees.len() != weights.len() {
            return Err(Error::Model(format!(
                "{} trees but {} weights",
                trees.len(),
                weights.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Model("ensemble needs at least 2 classes".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < S::zero()) {
            return Err(Error::Model(
                "tree weights must be finite and non-negative".into(),
            ));
        }
        if !weights.iter().any(|w| *w > S::zero()) {
            return Err(Error::Model(
                "at least one tree weight must be positive".into(),
            ));
        }
        for tree in &trees {
            tree.validate(feature_names.len(), num_classes)?;
        }
        Ok(Ensemble {
            trees,
            weights,
            num_classes,
            feature_names,
        })
    }

    pub fn trees(&self) -> &[Tree<S>] {
        &self.trees
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn num_decision_nodes(&self) -> usize {
        self.trees.iter().map(Tree::num_decision_nodes).sum()
    }

    /// Weighted sum of per-tree score vectors.
    pub fn scores(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.num_features(), "feature width mismatch");
        let mut out = vec![S::zero(); self.num_classes];
        for (tree, &w) in self.trees.iter().zip(&self.weights) {
            for (acc, &s) in out.iter_mut().zip(tree.predict(x)) {
                *acc = *acc + w * s;
            }
        }
        out
    }

    /// Argmax class of [`Ensemble::scores`]; ties break to the lowest index.
    pub fn predict(&self, x: &[S]) -> usize {
        argmax(&self.scores(x))
    }

    /// Replace every decision threshold from a flat vector ordered by
    /// (tree, preorder node). Used by the surrogate's copy-back.
    pub(crate) fn with_thresholds(&self, thetas: &[S]) -> Result<Ensemble<S>> {
        if thetas.len() != self.num_decision_nodes() {
            return Err(Error::Contract(format!(
                "{} thresholds supplied for {} decision nodes",
                thetas.len(),
                self.num_decision_nodes()
            )));
        }
        let mut out = self.clone();
        let mut k = 0;
        for tree in &mut out.trees {
            for node in &mut tree.nodes {
                if let Node::Decision { threshold, .. } = node {
                    *threshold = thetas[k];
                    k += 1;
                }
            }
        }
        Ok(out)
    }

    /// Flat threshold vector ordered by (tree, preorder node).
    pub(crate) fn thresholds(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_decision_nodes());
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Decision { threshold, .. } = node {
                    out.push(*threshold);
                }
            }
        }
        out
    }
}

/// Index of the largest element; ties break to the lowest index.
pub fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// depth-1 stump: root on `feature` at `threshold`, leaves (left, right).
    pub(crate) fn stump(
        feature: usize,
        threshold: f64,
        left: Vec<f64>,
        right: Vec<f64>,
    ) -> Tree<f64> {
        Tree::from_nodes(vec![
            Node::Decision {
                feature,
                threshold,
                left: 1,
                right: 2,
            },
            Node::Leaf { scores: left },
            Node::Leaf { scores: right },
        ])
        .unwrap()
    }

    #[test]
    fn single_leaf_tree_activates_root() {
        let t = Tree::leaf(vec![1.0, 0.0]);
        assert_eq!(t.hard_activation(&[123.0]), 0);
        assert_eq!(t.predict(&[123.0]), &[1.0, 0.0]);
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn boundary_routes_right() {
        let t = stump(0, 0.5, vec![1.0, 0.0], vec![0.0, 1.0]);
        assert_eq!(t.hard_activation(&[0.5]), 2);
        assert_eq!(t.hard_activation(&[0.49999]), 1);
    }

    #[test]
    fn depth_two_trace() {
        // root: f0 >= 0.5; left child: f0 >= 0.2. x = [0.3] goes left, then right.
        let t = Tree::from_nodes(vec![
            Node::Decision {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 4,
            },
            Node::Decision {
                feature: 0,
                threshold: 0.2,
                left: 2,
                right: 3,
            },
            Node::Leaf {
                scores: vec![1.0, 0.0, 0.0, 0.0],
            },
            Node::Leaf {
                scores: vec![0.0, 1.0, 0.0, 0.0],
            },
            Node::Leaf {
                scores: vec![0.0, 0.0, 1.0, 0.0],
            },
        ])
        .unwrap();
        assert_eq!(t.hard_activation(&[0.3]), 3);
        assert_eq!(t.predict(&[0.3]), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn tree_predict_equals_activated_leaf_scores() {
        let t = stump(0, 0.5, vec![0.9, 0.1], vec![0.2, 0.8]);
        let mut state = 0x2545f4914f6cdd1du64;
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let x = [(state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 0.5];
            let leaf = t.hard_activation(&x);
            match &t.nodes()[leaf] {
                Node::Leaf { scores } => assert_eq!(t.predict(&x), scores.as_slice()),
                _ => panic!("activation must be a leaf"),
            }
        }
    }

    #[test]
    fn ensemble_scores_weighted_sum() {
        let t1 = Tree::leaf(vec![1.0, 0.0]);
        let t2 = Tree::leaf(vec![0.0, 1.0]);
        let g = Ensemble::new(vec![t1.clone(), t2], vec![0.5, 0.5], 2, vec!["a".into()]).unwrap();
        assert_eq!(g.scores(&[0.0]), vec![0.5, 0.5]);

        let g1 = Ensemble::new(vec![t1.clone()], vec![1.0], 2, vec!["a".into()]).unwrap();
        assert_eq!(g1.scores(&[0.0]), g1.trees()[0].predict(&[0.0]).to_vec());

        let all = Ensemble::new(
            vec![t1.clone(), t1.clone(), t1],
            vec![1.0, 2.0, 3.0],
            2,
            vec!["a".into()],
        )
        .unwrap();
        assert_eq!(all.scores(&[0.0]), vec![6.0, 0.0]);
    }

    #[test]
    fn predict_tie_breaks_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[6.0, 0.0]), 0);
        assert_eq!(argmax(&[0.2, 0.8]), 1);
    }

    #[test]
    fn rejects_malformed_arenas() {
        // child index out of range
        assert!(Tree::from_nodes(vec![Node::Decision {
            feature: 0,
            threshold: 0.0,
            left: 1,
            right: 9,
        }])
        .is_err());
        // not preorder: children swapped
        assert!(Tree::<f64>::from_nodes(vec![
            Node::Decision {
                feature: 0,
                threshold: 0.0,
                left: 2,
                right: 1,
            },
            Node::Leaf { scores: vec![1.0] },
            Node::Leaf { scores: vec![1.0] },
        ])
        .is_err());
    }

    #[test]
    fn ensemble_validation() {
        let t = Tree::leaf(vec![1.0, 0.0]);
        assert!(Ensemble::new(vec![t.clone()], vec![-1.0], 2, vec!["a".into()]).is_err());
        assert!(Ensemble::new(vec![t.clone()], vec![0.0], 2, vec!["a".into()]).is_err());
        assert!(Ensemble::new(vec![t.clone()], vec![1.0, 1.0], 2, vec!["a".into()]).is_err());
        assert!(Ensemble::new(vec![t], vec![1.0], 2, vec!["a".into()]).is_ok());
    }
}
