//! Differentiable surrogate of a hard ensemble.
//!
//! Structure, feature indices, leaf scores, and vote weights are frozen;
//! only the split thresholds are trainable, held in one flat vector ordered
//! by (tree, preorder node). Each hard split indicator `x[f] >= t` becomes a
//! sigmoid with sharpness `sigma`, each leaf gets a reach probability (the
//! product of its path's edge factors), and the ensemble argmax becomes a
//! softmax with temperature `tau`. As both temperatures grow the surrogate
//! converges to the hard model, at the price of vanishing gradients.
//!
//! Gradients with respect to the thresholds are analytical: one reverse
//! traversal per tree, linear in node count.

use crate::forest::{Ensemble, Node};
use crate::{Error, Result, Scalar};

/// Numerically stable `1 / (1 + exp(-sigma * z))`; no overflow for any
/// finite argument (extreme inputs saturate to 0 or 1).
pub fn soft_sigmoid<S: Scalar>(z: S, sigma: S) -> S {
    let t = sigma * z;
    if t >= S::zero() {
        S::one() / (S::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (S::one() + e)
    }
}

/// Everything one forward pass produces, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    /// Per tree, per node: soft activation (reach probability). Leaf entries
    /// are the leaf reach probabilities; the root entry is always 1.
    pub activations: Vec<Vec<S>>,
    /// Per tree, per node: the right-edge sigmoid factor at decision nodes
    /// (leaf entries are unused). Cached so backward needs no exp calls.
    pub edges: Vec<Vec<S>>,
    /// Pre-softmax aggregate `z[y] = sum_i w_i * T_i(y|x)`.
    pub aggregate: Vec<S>,
    /// Output distribution `softmax(tau * z)`.
    pub probs: Vec<S>,
}

/// Soft decision forest sharing structure with a hard [`Ensemble`].
#[derive(Debug, Clone)]
pub struct SoftForest<S> {
    base: Ensemble<S>,
    thetas: Vec<S>,
    /// Per tree, per node: index into `thetas` (valid for decision nodes).
    slots: Vec<Vec<usize>>,
    sigma: S,
    tau: S,
}

impl<S: Scalar> SoftForest<S> {
    /// Wrap an ensemble, copying its thresholds into the trainable vector.
    /// The ensemble itself is never modified.
    pub fn attach(base: &Ensemble<S>, sigma: S, tau: S) -> Result<Self> {
        if !(sigma.is_finite() && sigma > S::zero()) {
            return Err(Error::Contract("sigma must be finite and positive".into()));
        }
        if !(tau.is_finite() && tau > S::zero()) {
            return Err(Error::Contract("tau must be finite and positive".into()));
        }
        let mut slots = Vec::with_capacity(base.trees().len());
        let mut next = 0usize;
        for tree in base.trees() {
            let mut tree_slots = vec![usize::MAX; tree.num_nodes()];
            for (id, node) in tree.nodes().iter().enumerate() {
                if !node.is_leaf() {
                    tree_slots[id] = next;
                    next += 1;
                }
            }
            slots.push(tree_slots);
        }
        Ok(SoftForest {
            thetas: base.thresholds(),
            base: base.clone(),
            slots,
            sigma,
            tau,
        })
    }

    /// Write the current thresholds back into a structural clone of the base
    /// ensemble. Weights, leaves, and topology are untouched.
    pub fn detach(&self) -> Ensemble<S> {
        self.base
            .with_thresholds(&self.thetas)
            .expect("theta vector matches base structure")
    }

    pub fn base(&self) -> &Ensemble<S> {
        &self.base
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    pub fn tau(&self) -> S {
        self.tau
    }

    pub fn num_thetas(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[S] {
        &self.thetas
    }

    pub fn thetas_mut(&mut self) -> &mut [S] {
        &mut self.thetas
    }

    /// Soft activation of every node of one tree; the root is 1 and each
    /// child multiplies its parent by the sigmoid edge factor.
    pub fn soft_activations(&self, tree: usize, x: &[S]) -> Vec<S> {
        let (act, _) = self.tree_pass(tree, x);
        act
    }

    /// One tree's activations plus the per-node right-edge factors.
    fn tree_pass(&self, tree: usize, x: &[S]) -> (Vec<S>, Vec<S>) {
        let nodes = self.base.trees()[tree].nodes();
        let slots = &self.slots[tree];
        let mut act = vec![S::zero(); nodes.len()];
        let mut edges = vec![S::zero(); nodes.len()];
        act[0] = S::one();
        for (id, node) in nodes.iter().enumerate() {
            if let Node::Decision {
                feature,
                left,
                right,
                ..
            } = node
            {
                let s_right = soft_sigmoid(x[*feature] - self.thetas[slots[id]], self.sigma);
                edges[id] = s_right;
                act[*right] = act[id] * s_right;
                act[*left] = act[id] * (S::one() - s_right);
            }
        }
        (act, edges)
    }

    /// Convex combination of leaf score vectors weighted by reach
    /// probability.
    pub fn soft_tree_predict(&self, tree: usize, x: &[S]) -> Vec<S> {
        let act = self.soft_activations(tree, x);
        self.mix_leaves(tree, &act)
    }

    fn mix_leaves(&self, tree: usize, act: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.base.num_classes()];
        for (id, node) in self.base.trees()[tree].nodes().iter().enumerate() {
            if let Node::Leaf { scores } = node {
                for (o, &s) in out.iter_mut().zip(scores) {
                    *o = *o + act[id] * s;
                }
            }
        }
        out
    }

    /// Full forward pass; the trace feeds [`SoftForest::backward`].
    pub fn forward(&self, x: &[S]) -> ForwardTrace<S> {
        assert_eq!(x.len(), self.base.num_features(), "feature width mismatch");
        let k = self.base.num_classes();
        let mut activations = Vec::with_capacity(self.base.trees().len());
        let mut edges = Vec::with_capacity(self.base.trees().len());
        let mut aggregate = vec![S::zero(); k];
        for (i, (tree, &w)) in self
            .base
            .trees()
            .iter()
            .zip(self.base.weights())
            .enumerate()
        {
            let (act, edge) = self.tree_pass(i, x);
            for (id, node) in tree.nodes().iter().enumerate() {
                if let Node::Leaf { scores } = node {
                    for (agg, &s) in aggregate.iter_mut().zip(scores) {
                        *agg = *agg + w * act[id] * s;
                    }
                }
            }
            activations.push(act);
            edges.push(edge);
        }
        let probs = softmax_scaled(&aggregate, self.tau);
        ForwardTrace {
            activations,
            edges,
            aggregate,
            probs,
        }
    }

    /// Output distribution `p(y|x)` of the surrogate.
    pub fn predict_proba(&self, x: &[S]) -> Vec<S> {
        self.forward(x).probs
    }

    /// Gradient of a scalar loss with respect to every threshold, given a
    /// forward trace and the upstream gradient dL/dp at the softmax output.
    pub fn backward(&self, trace: &ForwardTrace<S>, upstream: &[S]) -> Vec<S> {
        let mut grad = vec![S::zero(); self.thetas.len()];
        self.backward_into(trace, upstream, &mut grad);
        grad
    }

    /// As [`SoftForest::backward`], accumulating into `grad`.
    ///
    /// Chains the softmax Jacobian `tau * (diag(p) - p p^T)` into per-tree
    /// leaf gradients, then one reverse sweep per tree: with `A[j]` the sum
    /// over leaves below `j` of `dL/d(reach) * reach`, a decision node with
    /// edge factors `s_l`, `s_r` contributes
    /// `sigma * (s_r * A[left] - s_l * A[right])` to its threshold.
    pub fn backward_into(&self, trace: &ForwardTrace<S>, upstream: &[S], grad: &mut [S]) {
        let k = self.base.num_classes();
        assert_eq!(upstream.len(), k, "upstream gradient width mismatch");
        assert_eq!(grad.len(), self.thetas.len(), "gradient buffer mismatch");

        let p = &trace.probs;
        let mixed: S = upstream.iter().zip(p).map(|(u, q)| *u * *q).sum();
        let dz: Vec<S> = (0..k)
            .map(|y| self.tau * p[y] * (upstream[y] - mixed))
            .collect();

        let mut below: Vec<S> = Vec::new();
        for (i, (tree, &w)) in self
            .base
            .trees()
            .iter()
            .zip(self.base.weights())
            .enumerate()
        {
            let nodes = tree.nodes();
            let act = &trace.activations[i];
            let edges = &trace.edges[i];
            let slots = &self.slots[i];
            below.clear();
            below.resize(nodes.len(), S::zero());
            for id in (0..nodes.len()).rev() {
                match &nodes[id] {
                    Node::Leaf { scores } => {
                        let leaf_grad: S =
                            dz.iter().zip(scores).map(|(d, s)| *d * *s).sum::<S>() * w;
                        below[id] = leaf_grad * act[id];
                    }
                    Node::Decision { left, right, .. } => {
                        below[id] = below[*left] + below[*right];
                        let s_right = edges[id];
                        let s_left = S::one() - s_right;
                        grad[slots[id]] = grad[slots[id]]
                            + self.sigma * (s_right * below[*left] - s_left * below[*right]);
                    }
                }
            }
        }
    }
}

/// Softmax of `scale * z` with max-subtraction for stability.
fn softmax_scaled<S: Scalar>(z: &[S], scale: S) -> Vec<S> {
    let mut hottest = scale * z[0];
    for &v in &z[1..] {
        let t = scale * v;
        if t > hottest {
            hottest = t;
        }
    }
    let mut out: Vec<S> = z.iter().map(|&v| (scale * v - hottest).exp()).collect();
    let total: S = out.iter().copied().sum();
    for o in out.iter_mut() {
        *o = *o / total;
    }
    out
}
