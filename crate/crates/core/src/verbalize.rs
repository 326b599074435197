//! Incident-style text encoding of factual/counterfactual graph pairs and
//! the prompts built from it.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::words_for_node;
use crate::error::{Error, Result};
use crate::explain::{counterfactual_view, CounterfactualResult};
use crate::extract::RECORD_KEYS;
use crate::graph::{khop_nodes, Graph, GraphLike};
use crate::metrics::GroundTruth;

/// Bumped whenever any template text below changes.
pub const TEMPLATE_VERSION: &str = "incident-v1";

const SYSTEM_PROMPT: &str = "\
You are an expert in graph machine learning and explainable AI. You help people understand \
why a graph neural network classifies a node the way it does.

A counterfactual explanation for a graph answers the question: what is the smallest change to \
the input graph that makes the model change its prediction? For node classification, the \
original input is the factual graph G and the minimally changed input is the counterfactual \
graph G'. The change is either the removal of edges between nodes or the removal of words from \
a node's feature set. Comparing G and G' reveals which connections or words the model relied on.

The task is node classification on a citation network: each node is a scientific publication, \
edges are citation links, each node is described by the set of words that appear in it, and \
each node belongs to one research-topic class. One node is marked as the target; its predicted \
class differs between G and G'. Explain the difference clearly, accurately and without \
inventing nodes, edges or words that are not in the graphs.";

pub fn build_system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

/// One connection line and one word line per node, ascending ids.
/// Neighbor lists are restricted to `nodes`. Every node shows its dataset
/// class except the target, which shows `target_class`.
pub fn serialize_incident(
    view: &impl GraphLike,
    nodes: &BTreeSet<usize>,
    target: usize,
    target_class: usize,
) -> Result<String> {
    if !nodes.contains(&target) {
        return Err(Error::Config(format!("target {target} is not in the serialized node set")));
    }
    let base = view.base();
    let class_name = |c: usize| {
        base.class_names()
            .get(c)
            .ok_or_else(|| Error::Config(format!("class {c} out of range")))
    };
    let mut out = String::new();
    for &v in nodes {
        let class = class_name(if v == target { target_class } else { base.labels()[v] })?;
        let adj: Vec<String> = view
            .neighbors(v)?
            .into_iter()
            .filter(|u| nodes.contains(u))
            .map(|u| u.to_string())
            .collect();
        let prefix = if v == target { "[TARGET] " } else { "" };
        if adj.is_empty() {
            let _ = writeln!(out, "{prefix}Node {v} (class: {class}) is connected to no other nodes.");
        } else {
            let _ = writeln!(out, "{prefix}Node {v} (class: {class}) is connected to nodes {}.", adj.join(", "));
        }
        let words = words_for_node(view, v)?;
        if words.is_empty() {
            let _ = writeln!(out, "Node {v} has no words.");
        } else {
            let _ = writeln!(out, "Node {v} has words: {}.", words.join(", "));
        }
    }
    Ok(out)
}

/// Everything sent to (and checked against) the model for one counterfactual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub template_version: String,
    pub system_text: String,
    pub user_text: String,
    pub target: usize,
    /// Carried for scoring and the offline backend; never part of the text.
    pub ground_truth: GroundTruth,
}

impl PromptBundle {
    /// SHA-256 over version, system and user text.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.template_version, &self.system_text, &self.user_text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn record_skeleton() -> String {
    let hint = |k: &str| match k {
        "target_node" => "<id of the target node>",
        "factual_class" => "<class of the target node in G>",
        "counterfactual_class" => "<class of the target node in G'>",
        "factual_neighbors" => "[<ids of the target's neighbors in G>]",
        "counterfactual_neighbors" => "[<ids of the target's neighbors in G'>]",
        "factual_features" => "[<words of the target node in G>]",
        _ => "[<words of the target node in G'>]",
    };
    let fields: Vec<String> = RECORD_KEYS
        .iter()
        .map(|k| {
            let h = hint(k);
            if h.starts_with('[') {
                format!("  \"{k}\": {h}")
            } else {
                format!("  \"{k}\": \"{h}\"")
            }
        })
        .collect();
    format!("{{\n{}\n}}", fields.join(",\n"))
}

/// Counterfactual prompt for `result`: the target's 2-hop neighborhood in
/// `G`, the same nodes in `G′`, the explanation request, and the record
/// request.
pub fn build_cf_prompt(g: &Graph, result: &CounterfactualResult) -> Result<PromptBundle> {
    g.check_node(result.target)?;
    if result.distance == 0 || result.factual_class == result.counterfactual_class {
        return Err(Error::InvalidCounterfactual("result changes nothing".into()));
    }
    let cf = counterfactual_view(g, result)?;
    let v = result.target;
    let nodes: BTreeSet<usize> = khop_nodes(g, v, 2)?.into_iter().collect();
    let factual_text = serialize_incident(g, &nodes, v, result.factual_class)?;
    let cf_text = serialize_incident(&cf, &nodes, v, result.counterfactual_class)?;
    let change = match result.kind {
        crate::explain::CfKind::Structure => "some edges were removed",
        crate::explain::CfKind::Feature => "some words were removed from node features",
    };

    let mut user = String::new();
    let _ = writeln!(user, "Factual graph G:");
    user.push_str(&factual_text);
    let _ = writeln!(user, "\nCounterfactual graph G' ({change}):");
    user.push_str(&cf_text);
    let _ = writeln!(
        user,
        "\nExplain in plain language why the change from G to G' makes the target node change \
         its class. Refer to the specific nodes, edges and words involved."
    );
    let _ = writeln!(
        user,
        "\nAfter the explanation, output a fenced JSON block (```json ... ```) containing exactly \
         the keys {} with this shape:\n```json\n{}\n```",
        RECORD_KEYS.join(", "),
        record_skeleton()
    );

    Ok(PromptBundle {
        template_version: TEMPLATE_VERSION.into(),
        system_text: SYSTEM_PROMPT.into(),
        user_text: user,
        target: v,
        ground_truth: GroundTruth::from_result(g, result)?,
    })
}
