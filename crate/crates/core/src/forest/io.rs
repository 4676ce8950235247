//! JSON model files.
//!
//! A model is a single JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "num_classes": 2,
//!   "feature_names": ["age", "hours"],
//!   "trees": [
//!     {
//!       "weight": 0.5,
//!       "nodes": [
//!         {"id": 0, "kind": "decision", "feature": 0, "threshold": 37.5,
//!          "left": 1, "right": 2},
//!         {"id": 1, "kind": "leaf", "scores": [1.0, 0.0]},
//!         {"id": 2, "kind": "leaf", "scores": [0.25, 0.75]}
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! Node ids are preorder positions; `left`/`right` reference ids in the same
//! tree. Numbers are written in shortest round-trip decimal form, so
//! save/load preserves thresholds, scores, and weights bit-exactly. This
//! format is also the ingestion point for externally trained ensembles: any
//! weighted-vote ensemble with per-leaf class score vectors can be expressed
//! in it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

use super::{Ensemble, Node, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile<S> {
    version: u32,
    num_classes: usize,
    feature_names: Vec<String>,
    trees: Vec<TreeRecord<S>>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord<S> {
    weight: S,
    nodes: Vec<NodeRecord<S>>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord<S> {
    id: usize,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<S>>,
}

/// Serialize an ensemble to the documented JSON schema.
pub fn to_json<S: Scalar>(g: &Ensemble<S>) -> String {
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        num_classes: g.num_classes(),
        feature_names: g.feature_names().to_vec(),
        trees: g
            .trees()
            .iter()
            .zip(g.weights())
            .map(|(tree, &weight)| TreeRecord {
                weight,
                nodes: tree
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(id, node)| match node {
                        Node::Decision {
                            feature,
                            threshold,
                            left,
                            right,
                        } => NodeRecord {
                            id,
                            kind: "decision".into(),
                            feature: Some(*feature),
                            threshold: Some(*threshold),
                            left: Some(*left),
                            right: Some(*right),
                            scores: None,
                        },
                        Node::Leaf { scores } => NodeRecord {
                            id,
                            kind: "leaf".into(),
                            feature: None,
                            threshold: None,
                            left: None,
                            right: None,
                            scores: Some(scores.clone()),
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

/// Parse an ensemble from the documented JSON schema.
pub fn from_json<S: Scalar>(text: &str) -> Result<Ensemble<S>> {
    let file: ModelFile<S> =
        serde_json::from_str(text).map_err(|e| Error::Model(format!("malformed model: {e}")))?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            file.version
        )));
    }
    let mut trees = Vec::with_capacity(file.trees.len());
    let mut weights = Vec::with_capacity(file.trees.len());
    for (ti, rec) in file.trees.into_iter().enumerate() {
        let mut nodes = Vec::with_capacity(rec.nodes.len());
        for (pos, node) in rec.nodes.into_iter().enumerate() {
            if node.id != pos {
                return Err(Error::Model(format!(
                    "tree {ti}: node at position {pos} has id {}",
                    node.id
                )));
            }
            let parsed = match node.kind.as_str() {
                "decision" => Node::Decision {
                    feature: node.feature.ok_or_else(|| miss(ti, pos, "feature"))?,
                    threshold: node.threshold.ok_or_else(|| miss(ti, pos, "threshold"))?,
                    left: node.left.ok_or_else(|| miss(ti, pos, "left"))?,
                    right: node.right.ok_or_else(|| miss(ti, pos, "right"))?,
                },
                "leaf" => Node::Leaf {
                    scores: node.scores.ok_or_else(|| miss(ti, pos, "scores"))?,
                },
                other => {
                    return Err(Error::Model(format!(
                        "tree {ti}: node {pos} has unknown kind {other:?}"
                    )))
                }
            };
            nodes.push(parsed);
        }
        trees.push(Tree::from_nodes(nodes)?);
        weights.push(rec.weight);
    }
    Ensemble::new(trees, weights, file.num_classes, file.feature_names)
}

fn miss(tree: usize, node: usize, field: &str) -> Error {
    Error::Model(format!("tree {tree}: node {node} is missing {field:?}"))
}

pub fn save_model<S: Scalar>(g: &Ensemble<S>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(g))?;
    Ok(())
}

pub fn load_model<S: Scalar>(path: impl AsRef<Path>) -> Result<Ensemble<S>> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::Model(format!(
            "cannot read model file {}: {e}",
            path.as_ref().display()
        ))
    })?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TabularDataset;
    use crate::forest::{train_random_forest, TrainConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_forest() -> Ensemble<f64> {
        let data = TabularDataset::from_parts(
            vec![0.1, 0.9, 0.2, 0.8, 0.35, 0.6, 0.8, 0.2, 0.9, 0.15, 0.7, 0.3],
            vec![0, 0, 0, 1, 1, 1],
            vec!["a".into(), "b".into()],
            2,
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        train_random_forest(
            &data,
            &TrainConfig {
                num_trees: 5,
                max_depth: 3,
                ..TrainConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_scores_everywhere() {
        let g = small_forest();
        let back: Ensemble<f64> = from_json(&to_json(&g)).unwrap();
        assert_eq!(g, back);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0)];
            assert_eq!(g.scores(&x), back.scores(&x));
        }
    }

    #[test]
    fn truncated_file_fails_to_load() {
        let text = to_json(&small_forest());
        let truncated = &text[..text.len() / 2];
        assert!(matches!(from_json::<f64>(truncated), Err(Error::Model(_))));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let text = to_json(&small_forest()).replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(from_json::<f64>(&text), Err(Error::Model(_))));
    }

    #[test]
    fn externally_authored_document_loads_and_predicts() {
        let text = r#"{
            "version": 1,
            "num_classes": 2,
            "feature_names": ["x"],
            "trees": [
                {"weight": 1.0, "nodes": [
                    {"id": 0, "kind": "decision", "feature": 0, "threshold": 0.5, "left": 1, "right": 2},
                    {"id": 1, "kind": "leaf", "scores": [1.0, 0.0]},
                    {"id": 2, "kind": "leaf", "scores": [0.0, 1.0]}
                ]}
            ]
        }"#;
        let g: Ensemble<f64> = from_json(text).unwrap();
        assert_eq!(g.predict(&[0.0]), 0);
        assert_eq!(g.predict(&[0.5]), 1);
    }
}
