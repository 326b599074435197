//! Two-layer graph convolutional classifier with hand-written backprop.
//!
//! `P = softmax(Â · relu(Â X W1 + b1) · W2 + b2)`
//!
//! The same backward pass serves training (gradients on weights) and both
//! explainers (gradients on entries of `Â` or `X`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency_sparse, GraphLike};
use crate::matrix::{axpy, DenseMatrix, Operand};
use crate::dataset::SplitMasks;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    /// Multiplier on the Glorot-uniform bound.
    pub weight_init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.001,
            hidden_dim: 16,
            weight_init_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

/// Which inputs of [`loss_and_grad`] to differentiate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradRequest {
    pub a_hat: bool,
    pub x: bool,
    pub weights: bool,
}

/// Gradients of the four parameter blocks, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrads {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// Per stored entry of `Â`, in its storage order.
    pub a_hat: Option<Vec<f64>>,
    /// Per stored entry of `X`, in its storage order.
    pub x: Option<Vec<f64>>,
    pub weights: Option<WeightGrads>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    xw1: DenseMatrix,
    pre1: DenseMatrix,
    h1: DenseMatrix,
    hw2: DenseMatrix,
    pub logits: DenseMatrix,
    pub probs: DenseMatrix,
}

impl GcnModel {
    pub fn zeros(feature_dim: usize, hidden_dim: usize, class_count: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(feature_dim, hidden_dim),
            b1: vec![0.0; hidden_dim],
            w2: DenseMatrix::zeros(hidden_dim, class_count),
            b2: vec![0.0; class_count],
        }
    }

    /// Glorot-uniform weights scaled by `scale`, zero biases.
    pub fn init(feature_dim: usize, hidden_dim: usize, class_count: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(feature_dim, hidden_dim, class_count);
        for (w, fan_in, fan_out) in [
            (&mut m.w1, feature_dim, hidden_dim),
            (&mut m.w2, hidden_dim, class_count),
        ] {
            let bound = scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
            if bound > 0.0 {
                for v in w.as_mut_slice() {
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
        m
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn class_count(&self) -> usize {
        self.w2.cols()
    }

    fn check_shapes(&self) -> Result<()> {
        let h = self.hidden_dim();
        if self.b1.len() != h || self.w2.rows() != h || self.b2.len() != self.class_count() {
            return Err(Error::Dimension("inconsistent model parameter shapes".into()));
        }
        Ok(())
    }

    /// Full forward pass.
    pub fn forward_pass(&self, a_hat: &dyn Operand, x: &dyn Operand) -> Result<ForwardPass> {
        let (n, d) = x.shape();
        if d != self.feature_dim() {
            return Err(Error::Dimension(format!(
                "features have {d} columns, model expects {}",
                self.feature_dim()
            )));
        }
        if a_hat.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "Â is {:?}, expected {n}x{n}",
                a_hat.shape()
            )));
        }
        self.forward_from_xw1(a_hat, x.mul(&self.w1)?)
    }

    /// Forward pass given a precomputed `X · W1`.
    pub fn forward_from_xw1(&self, a_hat: &dyn Operand, xw1: DenseMatrix) -> Result<ForwardPass> {
        self.check_shapes()?;
        let mut pre1 = a_hat.mul(&xw1)?;
        for r in 0..pre1.rows() {
            axpy(pre1.row_mut(r), 1.0, &self.b1);
        }
        let mut h1 = pre1.clone();
        for v in h1.as_mut_slice() {
            *v = v.max(0.0);
        }
        let hw2 = h1.matmul(&self.w2)?;
        let mut logits = a_hat.mul(&hw2)?;
        for r in 0..logits.rows() {
            axpy(logits.row_mut(r), 1.0, &self.b2);
        }
        let mut probs = logits.clone();
        for r in 0..probs.rows() {
            softmax_in_place(probs.row_mut(r));
        }
        Ok(ForwardPass {
            xw1,
            pre1,
            h1,
            hw2,
            logits,
            probs,
        })
    }

    /// Per-node class probabilities.
    pub fn forward(&self, a_hat: &dyn Operand, x: &dyn Operand) -> Result<DenseMatrix> {
        Ok(self.forward_pass(a_hat, x)?.probs)
    }

    /// Backpropagates `d_logits` (gradient of the loss w.r.t. the logits).
    pub fn backward(
        &self,
        pass: &ForwardPass,
        a_hat: &dyn Operand,
        x: Option<&dyn Operand>,
        d_logits: &DenseMatrix,
        wrt: GradRequest,
    ) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>, Option<WeightGrads>)> {
        let mut d_a = wrt.a_hat.then(|| vec![0.0; a_hat.stored_len()]);

        let d_hw2 = a_hat.t_mul(d_logits)?;
        if let Some(d_a) = d_a.as_mut() {
            a_hat.accumulate_entry_grad(d_logits, &pass.hw2, d_a);
        }
        let mut d_pre1 = d_hw2.matmul(&self.w2.transpose())?;
        for (g, &p) in d_pre1.as_mut_slice().iter_mut().zip(pass.pre1.as_slice()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        if let Some(d_a) = d_a.as_mut() {
            a_hat.accumulate_entry_grad(&d_pre1, &pass.xw1, d_a);
        }
        let need_dxw1 = wrt.weights || wrt.x;
        let d_xw1 = if need_dxw1 { Some(a_hat.t_mul(&d_pre1)?) } else { None };

        let d_x = match (wrt.x, x) {
            (true, Some(x)) => {
                let mut out = vec![0.0; x.stored_len()];
                x.accumulate_entry_grad(d_xw1.as_ref().expect("computed"), &self.w1, &mut out);
                Some(out)
            }
            (true, None) => return Err(Error::Config("feature gradient requested without X".into())),
            _ => None,
        };

        let weights = if wrt.weights {
            let x = x.ok_or_else(|| Error::Config("weight gradient requested without X".into()))?;
            Some(WeightGrads {
                w1: x.t_mul(d_xw1.as_ref().expect("computed"))?,
                b1: column_sums(&d_pre1),
                w2: pass.h1.t_matmul(&d_hw2)?,
                b2: column_sums(d_logits),
            })
        } else {
            None
        };
        Ok((d_a, d_x, weights))
    }

    pub fn save_json(&self, config: &TrainConfig) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint::new(self.clone(), config.clone()))?)
    }

    pub fn load_json(text: &str) -> Result<(GcnModel, TrainConfig)> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.into_model()
    }
}

fn column_sums(m: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        axpy(&mut out, 1.0, m.row(r));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// First index of the maximum; ties go to the lowest class id.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `L = (1/|S|) Σ_{v∈S} −Σ_c t_vc · log P_vc`, and its gradient w.r.t. the
/// logits. `targets` has one row per entry of `nodes`.
pub fn cross_entropy(pass: &ForwardPass, nodes: &[usize], targets: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    let classes = pass.logits.cols();
    if targets.rows() != nodes.len() || targets.cols() != classes {
        return Err(Error::Dimension(format!(
            "targets are {}x{}, expected {}x{classes}",
            targets.rows(),
            targets.cols(),
            nodes.len()
        )));
    }
    if nodes.is_empty() {
        return Err(Error::Dimension("empty node set".into()));
    }
    let scale = 1.0 / nodes.len() as f64;
    let mut loss = 0.0;
    let mut d = DenseMatrix::zeros(pass.logits.rows(), classes);
    for (k, &v) in nodes.iter().enumerate() {
        if v >= pass.logits.rows() {
            return Err(Error::NodeOutOfRange {
                node: v,
                node_count: pass.logits.rows(),
            });
        }
        let t = targets.row(k);
        let logp = log_softmax(pass.logits.row(v));
        loss -= scale * t.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
        let t_sum: f64 = t.iter().sum();
        let p = pass.probs.row(v);
        let drow = d.row_mut(v);
        for c in 0..classes {
            drow[c] += scale * (p[c] * t_sum - t[c]);
        }
    }
    Ok((loss, d))
}

/// Cross-entropy of the nodes in `nodes` against `targets`, with gradients
/// for whichever inputs `wrt` designates.
pub fn loss_and_grad(
    model: &GcnModel,
    a_hat: &dyn Operand,
    x: &dyn Operand,
    nodes: &[usize],
    targets: &DenseMatrix,
    wrt: GradRequest,
) -> Result<LossGrad> {
    let pass = model.forward_pass(a_hat, x)?;
    let (loss, d_logits) = cross_entropy(&pass, nodes, targets)?;
    let (a, xg, weights) = model.backward(&pass, a_hat, Some(x), &d_logits, wrt)?;
    Ok(LossGrad {
        loss,
        a_hat: a,
        x: xg,
        weights,
    })
}

/// One-hot rows for `classes`.
pub fn one_hot(classes: &[usize], class_count: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(classes.len(), class_count);
    for (r, &c) in classes.iter().enumerate() {
        m.set(r, c, 1.0);
    }
    m
}

/// Class probabilities for every node of `g` (after any edits in a view).
pub fn predict_proba(model: &GcnModel, g: &impl GraphLike) -> Result<DenseMatrix> {
    let a_hat = normalized_adjacency_sparse(g);
    model.forward(&a_hat, &g.feature_matrix())
}

/// Predicted class of every node.
pub fn predict_all(model: &GcnModel, g: &impl GraphLike) -> Result<Vec<usize>> {
    let probs = predict_proba(model, g)?;
    Ok((0..probs.rows()).map(|v| argmax(probs.row(v))).collect())
}

/// Predicted class of `v`: argmax of its probability row, lowest id on ties.
pub fn predict(model: &GcnModel, g: &impl GraphLike, v: usize) -> Result<usize> {
    g.base().check_node(v)?;
    let probs = predict_proba(model, g)?;
    Ok(argmax(probs.row(v)))
}

/// Fraction of `nodes` whose prediction equals their label.
pub fn accuracy(predictions: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    nodes.iter().filter(|&&v| predictions[v] == labels[v]).count() as f64 / nodes.len() as f64
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, len: usize) -> Self {
        Self {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pi, &gi) in p.iter_mut().zip(g.iter()) {
                self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * gi;
                self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * gi * gi;
                *pi -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

/// Full-batch training on the train mask with Adam.
pub fn train(g: &impl GraphLike, masks: &SplitMasks, cfg: &TrainConfig) -> Result<(GcnModel, TrainHistory)> {
    if cfg.hidden_dim == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("hidden_dim and learning_rate must be positive".into()));
    }
    let n = g.node_count();
    if masks.train.len() != n || masks.test.len() != n {
        return Err(Error::Dimension("split masks do not match node count".into()));
    }
    let train_nodes = masks.train_nodes();
    if train_nodes.is_empty() {
        return Err(Error::Split("no training nodes".into()));
    }
    let labels = g.base().labels();
    let class_count = g.class_count();
    for c in 0..class_count {
        if !train_nodes.iter().any(|&v| labels[v] == c) {
            log::warn!("class {c} has no training nodes");
        }
    }

    let mut model = GcnModel::init(g.feature_dim(), cfg.hidden_dim, class_count, cfg.weight_init_scale, cfg.seed);
    let a_hat = normalized_adjacency_sparse(g);
    let x = g.feature_matrix();
    let targets = one_hot(&train_nodes.iter().map(|&v| labels[v]).collect::<Vec<_>>(), class_count);
    let wrt = GradRequest {
        weights: true,
        ..Default::default()
    };
    let n_params = model.w1.as_slice().len() + model.b1.len() + model.w2.as_slice().len() + model.b2.len();
    let mut adam = Adam::new(cfg.learning_rate, n_params);
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let pass = model.forward_pass(&a_hat, &x)?;
        let (loss, d_logits) = cross_entropy(&pass, &train_nodes, &targets)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        let preds: Vec<usize> = (0..n).map(|v| argmax(pass.probs.row(v))).collect();
        history.loss.push(loss);
        history.accuracy.push(accuracy(&preds, labels, &train_nodes));

        let (_, _, grads) = model.backward(&pass, &a_hat, Some(&x), &d_logits, wrt)?;
        let grads = grads.expect("weights requested");
        adam.step(
            &mut [
                model.w1.as_mut_slice(),
                &mut model.b1,
                model.w2.as_mut_slice(),
                &mut model.b2,
            ],
            &[grads.w1.as_slice(), &grads.b1, grads.w2.as_slice(), &grads.b2],
        );
    }
    Ok((model, history))
}

const CHECKPOINT_FORMAT: &str = "cfexplain-gcn-checkpoint";

/// On-disk model: dimensions, the training configuration (including seed)
/// and row-major weights. Floats are written in shortest round-trip form so
/// a reload is bitwise identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub class_count: usize,
    pub config: TrainConfig,
    pub model: GcnModel,
}

impl Checkpoint {
    pub fn new(model: GcnModel, config: TrainConfig) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            feature_dim: model.feature_dim(),
            hidden_dim: model.hidden_dim(),
            class_count: model.class_count(),
            config,
            model,
        }
    }

    pub fn into_model(self) -> Result<(GcnModel, TrainConfig)> {
        if self.format != CHECKPOINT_FORMAT || self.version != 1 {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let m = &self.model;
        if m.feature_dim() != self.feature_dim
            || m.hidden_dim() != self.hidden_dim
            || m.class_count() != self.class_count
        {
            return Err(Error::Checkpoint("header dimensions disagree with weights".into()));
        }
        m.check_shapes()?;
        let all_finite = [m.w1.as_slice(), &m.b1, m.w2.as_slice(), &m.b2]
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite("checkpoint weights".into()));
        }
        Ok((self.model, self.config))
    }
}
