//! Shared helpers for integration tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softforget::forest::{Ensemble, Node, Tree};

/// Random proper binary tree over `width` features; thresholds in (0, 1),
/// leaves carry random class distributions.
pub fn random_tree(
    rng: &mut ChaCha8Rng,
    max_depth: usize,
    width: usize,
    classes: usize,
) -> Tree<f64> {
    fn grow(
        rng: &mut ChaCha8Rng,
        depth: usize,
        width: usize,
        classes: usize,
        nodes: &mut Vec<Node<f64>>,
    ) -> usize {
        if depth == 0 || rng.gen_bool(0.25) {
            let mut scores: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = scores.iter().sum();
            scores.iter_mut().for_each(|s| *s /= total);
            let id = nodes.len();
            nodes.push(Node::Leaf { scores });
            return id;
        }
        let id = nodes.len();
        nodes.push(Node::Decision {
            feature: rng.gen_range(0..width),
            threshold: rng.gen_range(0.0..1.0),
            left: 0,
            right: 0,
        });
        let left = grow(rng, depth - 1, width, classes, nodes);
        let right = grow(rng, depth - 1, width, classes, nodes);
        if let Node::Decision {
            left: l, right: r, ..
        } = &mut nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }
    let mut nodes = Vec::new();
    grow(rng, max_depth, width, classes, &mut nodes);
    Tree::from_nodes(nodes).expect("generated arena is preorder")
}

pub fn random_ensemble(
    seed: u64,
    trees: usize,
    max_depth: usize,
    width: usize,
    classes: usize,
) -> Ensemble<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees: Vec<Tree<f64>> = (0..trees)
        .map(|_| random_tree(&mut rng, max_depth, width, classes))
        .collect();
    let weights: Vec<f64> = (0..trees.len()).map(|_| rng.gen_range(0.2..2.0)).collect();
    let names = (0..width).map(|i| format!("f{i}")).collect();
    Ensemble::new(trees, weights, classes, names).expect("valid random ensemble")
}
