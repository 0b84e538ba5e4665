//! JSON tree documents (`quadhedge-tree/1`).
//!
//! ```json
//! {"version": "quadhedge-tree/1", "num_periods": 1, "num_assets": 1,
//!  "nodes": [{"id": 0, "time": 0, "parent": null, "cond_prob": 1,
//!             "prices": [1.0], "claim": 0, "weight": 0}, ...]}
//! ```
//!
//! Reals may be JSON numbers or decimal strings.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{Node, ScenarioTree};

pub const TREE_VERSION: &str = "quadhedge-tree/1";

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Real {
    Number(f64),
    Text(String),
}

impl Real {
    fn value(&self, field: &str, node: usize) -> Result<f64> {
        match self {
            Real::Number(x) => Ok(*x),
            Real::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("node {node}: field '{field}' is not a real: {s:?}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecordIn {
    id: usize,
    time: usize,
    parent: Option<usize>,
    cond_prob: Real,
    prices: Vec<Real>,
    claim: Real,
    weight: Real,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDocIn {
    version: String,
    num_periods: usize,
    num_assets: usize,
    nodes: Vec<NodeRecordIn>,
}

#[derive(Debug, Serialize)]
struct NodeRecordOut<'a> {
    id: usize,
    time: usize,
    parent: Option<usize>,
    cond_prob: f64,
    prices: &'a [f64],
    claim: f64,
    weight: f64,
}

#[derive(Debug, Serialize)]
struct TreeDocOut<'a> {
    version: &'static str,
    num_periods: usize,
    num_assets: usize,
    nodes: Vec<NodeRecordOut<'a>>,
}

pub fn load_tree<R: Read>(reader: R) -> Result<ScenarioTree> {
    let doc: TreeDocIn = serde_json::from_reader(reader).map_err(|e| Error::Parse(e.to_string()))?;
    tree_from_doc(doc)
}

pub fn load_tree_str(text: &str) -> Result<ScenarioTree> {
    let doc: TreeDocIn = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    tree_from_doc(doc)
}

fn tree_from_doc(doc: TreeDocIn) -> Result<ScenarioTree> {
    if doc.version != TREE_VERSION {
        return Err(Error::Parse(format!("unsupported version {:?}, expected {TREE_VERSION:?}", doc.version)));
    }
    let nodes = doc
        .nodes
        .into_iter()
        .map(|rec| {
            let id = rec.id;
            let prices = rec
                .prices
                .iter()
                .map(|p| p.value("prices", id))
                .collect::<Result<Vec<_>>>()?;
            Ok(Node {
                id,
                time: rec.time,
                parent: rec.parent,
                cond_prob: rec.cond_prob.value("cond_prob", id)?,
                prices,
                claim: rec.claim.value("claim", id)?,
                weight: rec.weight.value("weight", id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ScenarioTree::new(doc.num_periods, doc.num_assets, nodes)
}

/// Serializes a tree as a pretty-printed document. Floats use the shortest
/// representation that round-trips.
pub fn save_tree(tree: &ScenarioTree) -> String {
    let doc = TreeDocOut {
        version: TREE_VERSION,
        num_periods: tree.num_periods(),
        num_assets: tree.num_assets(),
        nodes: tree
            .nodes()
            .iter()
            .map(|n| NodeRecordOut {
                id: n.id,
                time: n.time,
                parent: n.parent,
                cond_prob: n.cond_prob,
                prices: &n.prices,
                claim: n.claim,
                weight: n.weight,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("tree document serializes");
    text.push('\n');
    text
}

pub fn write_tree<W: Write>(tree: &ScenarioTree, mut writer: W) -> std::io::Result<()> {
    writer.write_all(save_tree(tree).as_bytes())
}
