//! Browser bindings. [`Session`] holds a synthetic graph and its trained
//! oracle; every method returns a JSON string for the page to render.

use cfexplain_core::dataset::{make_split, make_synthetic, Synthetic};
use cfexplain_core::explain::{explain, CfKind, ExplainOutcome, ExplainerParams};
use cfexplain_core::extract::parse_extraction;
use cfexplain_core::gcn::{accuracy, predict_all, train, GcnModel, TrainConfig};
use cfexplain_core::graph::Graph;
use cfexplain_core::llm::{mock_complete, CorruptionSpec};
use cfexplain_core::metrics::{score, METRIC_NAMES};
use cfexplain_core::verbalize::build_cf_prompt;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Plain-Rust core of the demo, usable off the browser.
pub struct Session {
    graph: Graph,
    model: GcnModel,
    train_accuracy: f64,
    test_accuracy: f64,
}

#[derive(Serialize)]
struct NodeView {
    id: usize,
    label: String,
    predicted: String,
    words: Vec<String>,
}

#[derive(Serialize)]
struct GraphView {
    nodes: Vec<NodeView>,
    edges: Vec<(usize, usize)>,
    classes: Vec<String>,
    train_accuracy: f64,
    test_accuracy: f64,
}

#[derive(Serialize)]
struct ExplainView {
    found: bool,
    target: usize,
    kind: &'static str,
    factual_class: String,
    counterfactual_class: Option<String>,
    deleted_edges: Vec<(usize, usize)>,
    removed_words: Vec<String>,
    distance: usize,
    iterations: usize,
}

#[derive(Serialize)]
struct VerbalizeView {
    system_prompt: String,
    user_prompt: String,
    response: String,
    parse_error: Option<String>,
    metrics: Vec<(&'static str, u8)>,
    passed_5_of_6: bool,
}

fn parse_kind(kind: &str) -> Result<CfKind, String> {
    match kind {
        "structure" => Ok(CfKind::Structure),
        "feature" => Ok(CfKind::Feature),
        other => Err(format!("unknown explainer `{other}` (structure | feature)")),
    }
}

impl Session {
    pub fn new(nodes: usize, p_in: f64, p_out: f64, epochs: usize, seed: u64) -> Result<Self, String> {
        let graph = make_synthetic(&Synthetic::two_community(nodes, p_in, p_out), seed).map_err(|e| e.to_string())?;
        let masks = make_split(&graph, 0.8, seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            epochs,
            seed,
            // a short in-browser schedule needs a faster step than the default
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let (model, _) = train(&graph, &masks, &cfg).map_err(|e| e.to_string())?;
        let preds = predict_all(&model, &graph).map_err(|e| e.to_string())?;
        Ok(Self {
            train_accuracy: accuracy(&preds, graph.labels(), &masks.train_nodes()),
            test_accuracy: accuracy(&preds, graph.labels(), &masks.test_nodes()),
            graph,
            model,
        })
    }

    pub fn graph_json(&self) -> Result<String, String> {
        let g = &self.graph;
        let preds = predict_all(&self.model, g).map_err(|e| e.to_string())?;
        let names = g.class_names();
        let view = GraphView {
            nodes: (0..g.node_count())
                .map(|v| NodeView {
                    id: v,
                    label: names[g.labels()[v]].clone(),
                    predicted: names[preds[v]].clone(),
                    words: g.feature_rows()[v].iter().map(|&w| g.vocabulary()[w].clone()).collect(),
                })
                .collect(),
            edges: g.edges().iter().copied().collect(),
            classes: names.to_vec(),
            train_accuracy: self.train_accuracy,
            test_accuracy: self.test_accuracy,
        };
        serde_json::to_string(&view).map_err(|e| e.to_string())
    }

    fn outcome(&self, node: usize, kind: &str) -> Result<ExplainOutcome, String> {
        explain(&self.model, &self.graph, node, parse_kind(kind)?, &ExplainerParams::default()).map_err(|e| e.to_string())
    }

    pub fn explain_json(&self, node: usize, kind: &str) -> Result<String, String> {
        let names = self.graph.class_names();
        let view = match self.outcome(node, kind)? {
            ExplainOutcome::Found(r) => ExplainView {
                found: true,
                target: r.target,
                kind: r.kind.as_str(),
                factual_class: names[r.factual_class].clone(),
                counterfactual_class: Some(names[r.counterfactual_class].clone()),
                deleted_edges: r.deleted_edges.clone(),
                removed_words: r.removed_words.iter().map(|&w| self.graph.vocabulary()[w].clone()).collect(),
                distance: r.distance,
                iterations: r.iterations_used,
            },
            ExplainOutcome::NotFound {
                target,
                kind,
                factual_class,
                iterations_used,
            } => ExplainView {
                found: false,
                target,
                kind: kind.as_str(),
                factual_class: names[factual_class].clone(),
                counterfactual_class: None,
                deleted_edges: Vec::new(),
                removed_words: Vec::new(),
                distance: 0,
                iterations: iterations_used,
            },
        };
        serde_json::to_string(&view).map_err(|e| e.to_string())
    }

    /// Prompt for the node's counterfactual, the mock model's answer with
    /// `field` corrupted at `probability` (empty field = faithful echo),
    /// and its metrics.
    pub fn verbalize_json(
        &self,
        node: usize,
        kind: &str,
        field: &str,
        probability: f64,
        seed: u64,
    ) -> Result<String, String> {
        let result = self
            .outcome(node, kind)?
            .into_result()
            .ok_or_else(|| format!("no {kind} counterfactual for node {node}"))?;
        let bundle = build_cf_prompt(&self.graph, &result).map_err(|e| e.to_string())?;
        let corruption = if field.is_empty() {
            CorruptionSpec::echo()
        } else {
            CorruptionSpec::single(field, probability)
        };
        let resp = mock_complete(&bundle, &corruption, seed).map_err(|e| e.to_string())?;
        let parsed = parse_extraction(&resp.raw_text);
        let metrics = score(&parsed, &bundle.ground_truth);
        let view = VerbalizeView {
            system_prompt: bundle.system_text.clone(),
            user_prompt: bundle.user_text.clone(),
            response: resp.raw_text,
            parse_error: parsed.err().map(|e| e.to_string()),
            metrics: METRIC_NAMES.iter().copied().zip(metrics.values()).collect(),
            passed_5_of_6: metrics.passed_5_of_6,
        };
        serde_json::to_string(&view).map_err(|e| e.to_string())
    }
}

/// JavaScript handle around [`Session`].
#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    /// Generates a two-community graph and trains the oracle on it.
    #[wasm_bindgen(constructor)]
    pub fn new(nodes: usize, p_in: f64, p_out: f64, epochs: usize, seed: u32) -> Result<Demo, JsError> {
        Session::new(nodes, p_in, p_out, epochs, u64::from(seed))
            .map(|inner| Demo { inner })
            .map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = graphJson)]
    pub fn graph_json(&self) -> Result<String, JsError> {
        self.inner.graph_json().map_err(|e| JsError::new(&e))
    }

    pub fn explain(&self, node: usize, kind: &str) -> Result<String, JsError> {
        self.inner.explain_json(node, kind).map_err(|e| JsError::new(&e))
    }

    pub fn verbalize(&self, node: usize, kind: &str, field: &str, probability: f64, seed: u32) -> Result<String, JsError> {
        self.inner
            .verbalize_json(node, kind, field, probability, u64::from(seed))
            .map_err(|e| JsError::new(&e))
    }
}
