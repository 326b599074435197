//! Counterfactual search for a target node.
//!
//! * Structure: a sigmoid-relaxed mask over the target's receptive-field
//!   edges, trained to push the factual class down while keeping as many
//!   edges as possible; binarized masks are tested for a flip each step.
//! * Features: a `[0, 1]` multiplicative mask over the target's active words
//!   (optionally every word in the receptive field), trained the same way.
//!
//! Both only ever remove: edges are multiplied by the mask, words by the
//! feature mask, so the counterfactual is a sparsification of the factual.
//! Every emitted result is re-checked against the full graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{argmax, cross_entropy, predict, GcnModel, GradRequest};
use crate::graph::{
    edge_key, khop_subgraph, weighted_degrees, weighted_normalized_adjacency, Edge, Graph, GraphLike,
    GraphView, Subgraph,
};
use crate::matrix::{CsrMatrix, DenseMatrix, Operand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfKind {
    Structure,
    Feature,
}

impl CfKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CfKind::Structure => "structure",
            CfKind::Feature => "feature",
        }
    }
}

/// Which feature rows the feature explainer may edit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScope {
    #[default]
    TargetOnly,
    Subgraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerParams {
    pub max_iters: usize,
    pub mask_learning_rate: f64,
    /// Weight of the edit-count term.
    pub beta: f64,
    pub binarize_threshold: f64,
    /// Receptive-field radius; must equal the oracle depth (2).
    pub khop: usize,
    /// Initial structure-mask logit; `σ(3) ≈ 0.95`.
    pub mask_init: f64,
    pub feature_scope: FeatureScope,
}

impl Default for ExplainerParams {
    fn default() -> Self {
        Self {
            max_iters: 500,
            mask_learning_rate: 1.0,
            beta: 0.05,
            binarize_threshold: 0.5,
            khop: 2,
            mask_init: 3.0,
            feature_scope: FeatureScope::TargetOnly,
        }
    }
}

impl ExplainerParams {
    pub fn validate(&self) -> Result<()> {
        if self.khop != 2 {
            return Err(Error::Config(format!("khop must equal the oracle depth 2, got {}", self.khop)));
        }
        if !(self.mask_learning_rate > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config("mask_learning_rate must be positive and beta non-negative".into()));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Config("binarize_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// A perturbation that flips the oracle's prediction for `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub target: usize,
    pub kind: CfKind,
    /// Deleted edges as `(min, max)` global id pairs, ascending.
    pub deleted_edges: Vec<Edge>,
    /// Word indices removed from the target's own feature row, ascending.
    pub removed_words: Vec<usize>,
    /// Word removals on other nodes (subgraph feature scope only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub neighbor_removals: BTreeMap<usize, Vec<usize>>,
    pub factual_class: usize,
    pub counterfactual_class: usize,
    pub distance: usize,
    pub iterations_used: usize,
}

impl CounterfactualResult {
    fn edit_count(&self) -> usize {
        self.deleted_edges.len()
            + self.removed_words.len()
            + self.neighbor_removals.values().map(Vec::len).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ExplainOutcome {
    Found(CounterfactualResult),
    NotFound {
        target: usize,
        kind: CfKind,
        factual_class: usize,
        iterations_used: usize,
    },
}

impl ExplainOutcome {
    pub fn result(&self) -> Option<&CounterfactualResult> {
        match self {
            ExplainOutcome::Found(r) => Some(r),
            ExplainOutcome::NotFound { .. } => None,
        }
    }

    pub fn into_result(self) -> Option<CounterfactualResult> {
        match self {
            ExplainOutcome::Found(r) => Some(r),
            ExplainOutcome::NotFound { .. } => None,
        }
    }
}

/// `G′` for a result: the base graph with the result's edits applied.
pub fn counterfactual_view<'a>(g: &'a Graph, result: &CounterfactualResult) -> Result<GraphView<'a>> {
    let mut view = g.view().with_deleted_edges(result.deleted_edges.iter().copied())?;
    let mut removals: BTreeMap<usize, &[usize]> = result
        .neighbor_removals
        .iter()
        .map(|(&v, w)| (v, w.as_slice()))
        .collect();
    if !result.removed_words.is_empty() {
        removals.insert(result.target, &result.removed_words);
    }
    for (v, removed) in removals {
        let row = g.feature_row(v)?;
        if let Some(w) = removed.iter().find(|w| row.binary_search(w).is_err()) {
            return Err(Error::InvalidCounterfactual(format!("word {w} is not present on node {v}")));
        }
        let kept = row.iter().copied().filter(|w| !removed.contains(w)).collect();
        view.override_features(v, kept)?;
    }
    Ok(view)
}

/// Re-runs the oracle on the full perturbed graph. True iff the result has
/// at least one edit, its bookkeeping is consistent, the factual class is
/// the oracle's factual prediction, and the perturbed prediction differs
/// from it and equals the recorded counterfactual class.
pub fn validate_counterfactual(model: &GcnModel, g: &Graph, result: &CounterfactualResult) -> bool {
    let check = || -> Result<bool> {
        let edits = result.edit_count();
        if edits == 0 || edits != result.distance {
            return Ok(false);
        }
        let kind_ok = match result.kind {
            CfKind::Structure => result.removed_words.is_empty() && result.neighbor_removals.is_empty(),
            CfKind::Feature => result.deleted_edges.is_empty(),
        };
        if !kind_ok || result.factual_class == result.counterfactual_class {
            return Ok(false);
        }
        if predict(model, g, result.target)? != result.factual_class {
            return Ok(false);
        }
        let view = counterfactual_view(g, result)?;
        let cf = predict(model, &view, result.target)?;
        Ok(cf != result.factual_class && cf == result.counterfactual_class)
    };
    check().unwrap_or(false)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Storage slots of the subgraph operator, fixed for every mask value.
struct SlotMap {
    diag: Vec<usize>,
    /// `(slot(a,b), slot(b,a))` per edge
    edge: Vec<(usize, usize)>,
}

impl SlotMap {
    fn new(a_hat: &CsrMatrix, n: usize, edges: &[Edge]) -> Self {
        Self {
            diag: (0..n).map(|i| a_hat.slot(i, i).expect("diagonal stored")).collect(),
            edge: edges
                .iter()
                .map(|&(a, b)| {
                    (
                        a_hat.slot(a, b).expect("edge stored"),
                        a_hat.slot(b, a).expect("edge stored"),
                    )
                })
                .collect(),
        }
    }
}

/// Chain rule from per-slot `∂L/∂Â` to per-edge `∂L/∂w` through the
/// symmetric normalization `Â = D̃^{-1/2}(W + I)D̃^{-1/2}`.
fn edge_weight_grad(
    a_hat: &CsrMatrix,
    slots: &SlotMap,
    edges: &[Edge],
    degree: &[f64],
    d_a_hat: &[f64],
) -> Vec<f64> {
    let vals = a_hat.values();
    // ∂L/∂d_k = −(Σ_row + Σ_col of G⊙Â at k) / (2 d_k)
    let mut d_degree: Vec<f64> = slots
        .diag
        .iter()
        .map(|&s| 2.0 * d_a_hat[s] * vals[s])
        .collect();
    for (&(a, b), &(ab, ba)) in edges.iter().zip(&slots.edge) {
        let t = d_a_hat[ab] * vals[ab] + d_a_hat[ba] * vals[ba];
        d_degree[a] += t;
        d_degree[b] += t;
    }
    for (dd, d) in d_degree.iter_mut().zip(degree) {
        *dd *= -0.5 / d;
    }
    edges
        .iter()
        .zip(&slots.edge)
        .map(|(&(a, b), &(ab, ba))| {
            (d_a_hat[ab] + d_a_hat[ba]) / (degree[a] * degree[b]).sqrt() + d_degree[a] + d_degree[b]
        })
        .collect()
}

/// Objective of the structure search as a function of the mask logits:
/// `gate · log p_factual(center) + β Σ (1 − σ(m))`. Returns the value and
/// its gradient w.r.t. the logits.
pub(crate) struct StructureObjective<'a> {
    model: &'a GcnModel,
    sub: &'a Subgraph,
    edges: Vec<Edge>,
    xw1: DenseMatrix,
    factual: usize,
    beta: f64,
    slots: SlotMap,
}

impl<'a> StructureObjective<'a> {
    pub(crate) fn new(model: &'a GcnModel, sub: &'a Subgraph, factual: usize, beta: f64) -> Result<Self> {
        let edges = sub.local_edges();
        let xw1 = sub.graph.feature_matrix().mul(&model.w1)?;
        let ones = vec![1.0; edges.len()];
        let probe = weighted_normalized_adjacency(sub.graph.node_count(), &edges, &ones, Some(&sub.outside_degree));
        let slots = SlotMap::new(&probe, sub.graph.node_count(), &edges);
        Ok(Self {
            model,
            sub,
            edges,
            xw1,
            factual,
            beta,
            slots,
        })
    }

    pub(crate) fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn operator(&self, weights: &[f64]) -> CsrMatrix {
        weighted_normalized_adjacency(
            self.sub.graph.node_count(),
            &self.edges,
            weights,
            Some(&self.sub.outside_degree),
        )
    }

    /// Center prediction with the given (binary or relaxed) edge weights.
    pub(crate) fn predict(&self, weights: &[f64]) -> Result<usize> {
        let pass = self.model.forward_from_xw1(&self.operator(weights), self.xw1.clone())?;
        Ok(argmax(pass.probs.row(self.sub.center)))
    }

    pub(crate) fn value_and_grad(&self, logits: &[f64], gated: bool) -> Result<(f64, Vec<f64>)> {
        let w: Vec<f64> = logits.iter().map(|&m| sigmoid(m)).collect();
        let dist: f64 = self.beta * w.iter().map(|wi| 1.0 - wi).sum::<f64>();
        let mut d_w = vec![-self.beta; w.len()];
        let mut value = dist;
        if gated {
            let a_hat = self.operator(&w);
            let pass = self.model.forward_from_xw1(&a_hat, self.xw1.clone())?;
            let mut target = DenseMatrix::zeros(1, self.model.class_count());
            target.set(0, self.factual, -1.0);
            let (flip, d_logits) = cross_entropy(&pass, &[self.sub.center], &target)?;
            value += flip;
            let (d_a, _, _) = self.model.backward(
                &pass,
                &a_hat,
                None,
                &d_logits,
                GradRequest { a_hat: true, ..Default::default() },
            )?;
            let degree = weighted_degrees(
                self.sub.graph.node_count(),
                &self.edges,
                &w,
                Some(&self.sub.outside_degree),
            );
            let g = edge_weight_grad(&a_hat, &self.slots, &self.edges, &degree, &d_a.expect("requested"));
            for (dw, gi) in d_w.iter_mut().zip(g) {
                *dw += gi;
            }
        }
        let grad = d_w.iter().zip(&w).map(|(dw, wi)| dw * wi * (1.0 - wi)).collect();
        Ok((value, grad))
    }
}

fn not_found(target: usize, kind: CfKind, factual_class: usize, iterations_used: usize) -> ExplainOutcome {
    ExplainOutcome::NotFound {
        target,
        kind,
        factual_class,
        iterations_used,
    }
}

/// Keeps the smallest flip seen so far (first one wins ties) after checking
/// it against the full graph.
struct BestCandidate<'a> {
    model: &'a GcnModel,
    g: &'a Graph,
    best: Option<CounterfactualResult>,
}

impl BestCandidate<'_> {
    fn offer(&mut self, cand: CounterfactualResult) {
        if self.best.as_ref().is_some_and(|b| b.distance <= cand.distance) {
            return;
        }
        if validate_counterfactual(self.model, self.g, &cand) {
            self.best = Some(cand);
        } else {
            log::warn!(
                "subgraph flip for node {} did not reproduce on the full graph",
                cand.target
            );
        }
    }
}

/// Edge-deletion counterfactual for node `v`.
pub fn explain_structure(model: &GcnModel, g: &Graph, v: usize, params: &ExplainerParams) -> Result<ExplainOutcome> {
    params.validate()?;
    g.check_node(v)?;
    let factual = predict(model, g, v)?;
    let sub = khop_subgraph(g, v, params.khop)?;
    let objective = StructureObjective::new(model, &sub, factual, params.beta)?;
    let m = objective.edges().len();
    if m == 0 {
        return Ok(not_found(v, CfKind::Structure, factual, 0));
    }

    let mut logits = vec![params.mask_init; m];
    let mut best = BestCandidate { model, g, best: None };
    let mut current_pred = factual;
    let mut last_deleted: Option<Vec<usize>> = None;
    let mut iterations = 0;
    for it in 1..=params.max_iters {
        iterations = it;
        let (_, grad) = objective.value_and_grad(&logits, current_pred == factual)?;
        for (l, gi) in logits.iter_mut().zip(&grad) {
            *l -= params.mask_learning_rate * gi;
        }
        let deleted: Vec<usize> = (0..m)
            .filter(|&e| sigmoid(logits[e]) < params.binarize_threshold)
            .collect();
        if last_deleted.as_ref() == Some(&deleted) {
            continue;
        }
        current_pred = if deleted.is_empty() {
            factual
        } else {
            let mut w = vec![1.0; m];
            for &e in &deleted {
                w[e] = 0.0;
            }
            objective.predict(&w)?
        };
        if current_pred != factual {
            let mut deleted_edges: Vec<Edge> = deleted
                .iter()
                .map(|&e| sub.to_global_edge(objective.edges()[e]))
                .collect();
            deleted_edges.sort_unstable();
            best.offer(CounterfactualResult {
                target: v,
                kind: CfKind::Structure,
                distance: deleted_edges.len(),
                deleted_edges,
                removed_words: Vec::new(),
                neighbor_removals: BTreeMap::new(),
                factual_class: factual,
                counterfactual_class: current_pred,
                iterations_used: it,
            });
        }
        last_deleted = Some(deleted);
    }
    Ok(match best.best {
        Some(r) => ExplainOutcome::Found(r),
        None => not_found(v, CfKind::Structure, factual, iterations),
    })
}

/// Word-removal counterfactual for node `v`.
pub fn explain_features(model: &GcnModel, g: &Graph, v: usize, params: &ExplainerParams) -> Result<ExplainOutcome> {
    params.validate()?;
    g.check_node(v)?;
    let factual = predict(model, g, v)?;
    let sub = khop_subgraph(g, v, params.khop)?;
    let n = sub.graph.node_count();
    let edges = sub.local_edges();
    let a_hat = weighted_normalized_adjacency(n, &edges, &vec![1.0; edges.len()], Some(&sub.outside_degree));
    let x = sub.graph.feature_matrix();

    // X slots the mask may move: (slot, local node, word)
    let editable: Vec<(usize, usize, usize)> = x
        .coords()
        .enumerate()
        .filter(|&(_, (r, _))| params.feature_scope == FeatureScope::Subgraph || r == sub.center)
        .map(|(slot, (r, c))| (slot, r, c))
        .collect();
    if editable.is_empty() {
        return Ok(not_found(v, CfKind::Feature, factual, 0));
    }

    let center_pred = |xm: &CsrMatrix| -> Result<usize> {
        let pass = model.forward_pass(&a_hat, xm)?;
        Ok(argmax(pass.probs.row(sub.center)))
    };
    let mut target = DenseMatrix::zeros(1, model.class_count());
    target.set(0, factual, -1.0);

    let mut mask = vec![1.0; editable.len()];
    let mut best = BestCandidate { model, g, best: None };
    let mut current_pred = factual;
    let mut last_removed: Option<Vec<usize>> = None;
    let mut iterations = 0;
    let mut xm = x.clone();
    for it in 1..=params.max_iters {
        iterations = it;
        // distance term β Σ (1 − p) has gradient −β on every editable entry
        let mut grad = vec![-params.beta; mask.len()];
        if current_pred == factual {
            for (&(slot, _, _), &p) in editable.iter().zip(&mask) {
                xm.values_mut()[slot] = p;
            }
            let pass = model.forward_pass(&a_hat, &xm)?;
            let (_, d_logits) = cross_entropy(&pass, &[sub.center], &target)?;
            let (_, d_x, _) = model.backward(
                &pass,
                &a_hat,
                Some(&xm),
                &d_logits,
                GradRequest { x: true, ..Default::default() },
            )?;
            let d_x = d_x.expect("requested");
            for (gi, &(slot, _, _)) in grad.iter_mut().zip(&editable) {
                *gi += d_x[slot];
            }
        }
        // projected step keeps the mask in [0, 1]
        for (p, gi) in mask.iter_mut().zip(&grad) {
            *p = (*p - params.mask_learning_rate * gi).clamp(0.0, 1.0);
        }

        let removed: Vec<usize> = (0..mask.len())
            .filter(|&k| mask[k] < params.binarize_threshold)
            .collect();
        if last_removed.as_ref() == Some(&removed) {
            continue;
        }
        current_pred = if removed.is_empty() {
            factual
        } else {
            let mut xb = x.clone();
            for &k in &removed {
                xb.values_mut()[editable[k].0] = 0.0;
            }
            center_pred(&xb)?
        };
        if current_pred != factual {
            let mut removed_words = Vec::new();
            let mut neighbor_removals: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &k in &removed {
                let (_, local, word) = editable[k];
                if local == sub.center {
                    removed_words.push(word);
                } else {
                    neighbor_removals.entry(sub.local_to_global[local]).or_default().push(word);
                }
            }
            best.offer(CounterfactualResult {
                target: v,
                kind: CfKind::Feature,
                deleted_edges: Vec::new(),
                distance: removed.len(),
                removed_words,
                neighbor_removals,
                factual_class: factual,
                counterfactual_class: current_pred,
                iterations_used: it,
            });
        }
        last_removed = Some(removed);
    }
    Ok(match best.best {
        Some(r) => ExplainOutcome::Found(r),
        None => not_found(v, CfKind::Feature, factual, iterations),
    })
}

/// Dispatches on `kind`.
pub fn explain(model: &GcnModel, g: &Graph, v: usize, kind: CfKind, params: &ExplainerParams) -> Result<ExplainOutcome> {
    match kind {
        CfKind::Structure => explain_structure(model, g, v, params),
        CfKind::Feature => explain_features(model, g, v, params),
    }
}

pub const BRUTE_FORCE_MAX_EDGES: usize = 20;
pub const BRUTE_FORCE_MAX_WORDS: usize = 16;
pub const BRUTE_FORCE_MAX_BUDGET: usize = 2;

/// Exhaustive minimum-distance counterfactual for tiny instances: every
/// edge-deletion set (structure) or target word-removal set (feature) of
/// size `1..=budget`, in lexicographic order, checked with full-graph
/// predictions.
pub fn brute_force_counterfactual(
    model: &GcnModel,
    g: &Graph,
    v: usize,
    kind: CfKind,
    budget: usize,
) -> Result<ExplainOutcome> {
    g.check_node(v)?;
    if budget > BRUTE_FORCE_MAX_BUDGET {
        return Err(Error::Refused(format!("budget {budget} exceeds {BRUTE_FORCE_MAX_BUDGET}")));
    }
    let factual = predict(model, g, v)?;
    let items: Vec<usize> = match kind {
        CfKind::Structure => {
            if g.edge_count() > BRUTE_FORCE_MAX_EDGES {
                return Err(Error::Refused(format!(
                    "{} edges exceed {BRUTE_FORCE_MAX_EDGES}",
                    g.edge_count()
                )));
            }
            (0..g.edge_count()).collect()
        }
        CfKind::Feature => {
            let row = g.feature_row(v)?;
            if row.len() > BRUTE_FORCE_MAX_WORDS {
                return Err(Error::Refused(format!(
                    "{} words exceed {BRUTE_FORCE_MAX_WORDS}",
                    row.len()
                )));
            }
            row.to_vec()
        }
    };
    let edges: Vec<Edge> = g.edges().iter().copied().collect();
    let mut checked = 0;
    for size in 1..=budget.min(items.len()) {
        for subset in combinations(items.len(), size) {
            checked += 1;
            let picked: Vec<usize> = subset.iter().map(|&i| items[i]).collect();
            let mut view = g.view();
            let result_base = match kind {
                CfKind::Structure => {
                    for &e in &picked {
                        let (a, b) = edges[e];
                        view.delete_edge(a, b)?;
                    }
                    (picked.iter().map(|&e| edge_key(edges[e].0, edges[e].1)).collect(), Vec::new())
                }
                CfKind::Feature => {
                    let removed: BTreeSet<usize> = picked.iter().copied().collect();
                    let kept = g.feature_row(v)?.iter().copied().filter(|w| !removed.contains(w)).collect();
                    view.override_features(v, kept)?;
                    (Vec::new(), picked.clone())
                }
            };
            let cf = predict(model, &view, v)?;
            if cf != factual {
                return Ok(ExplainOutcome::Found(CounterfactualResult {
                    target: v,
                    kind,
                    deleted_edges: result_base.0,
                    removed_words: result_base.1,
                    neighbor_removals: BTreeMap::new(),
                    factual_class: factual,
                    counterfactual_class: cf,
                    distance: size,
                    iterations_used: checked,
                }));
            }
        }
    }
    Ok(not_found(v, kind, factual, checked))
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}
