//! The six exact-match understanding metrics, the 5-of-6 selection rule,
//! and grouped means for report tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{counterfactual_view, CounterfactualResult};
use crate::extract::{normalize_text, ExtractionRecord};
use crate::graph::{Graph, GraphLike};
use crate::dataset::words_for_node;

/// Reference values for one counterfactual, recomputed from the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub target_node: u64,
    pub factual_class: String,
    pub counterfactual_class: String,
    pub factual_class_id: usize,
    pub counterfactual_class_id: usize,
    pub factual_neighbors: BTreeSet<u64>,
    pub counterfactual_neighbors: BTreeSet<u64>,
    pub factual_features: BTreeSet<String>,
    pub counterfactual_features: BTreeSet<String>,
}

impl GroundTruth {
    pub fn from_result(g: &Graph, result: &CounterfactualResult) -> Result<Self> {
        let v = result.target;
        let cf = counterfactual_view(g, result)?;
        let ids = |s: BTreeSet<usize>| s.into_iter().map(|u| u as u64).collect();
        let names = g.class_names();
        let class = |c: usize| {
            names
                .get(c)
                .cloned()
                .ok_or_else(|| Error::InvalidCounterfactual(format!("class {c} out of range")))
        };
        Ok(Self {
            target_node: v as u64,
            factual_class: class(result.factual_class)?,
            counterfactual_class: class(result.counterfactual_class)?,
            factual_class_id: result.factual_class,
            counterfactual_class_id: result.counterfactual_class,
            factual_neighbors: ids(g.neighbors(v)?),
            counterfactual_neighbors: ids(cf.neighbors(v)?),
            factual_features: words_for_node(g, v)?.into_iter().collect(),
            counterfactual_features: words_for_node(&cf, v)?.into_iter().collect(),
        })
    }

    /// The record a perfect answer would contain.
    pub fn as_record(&self) -> ExtractionRecord {
        ExtractionRecord {
            target_node: self.target_node,
            factual_class: self.factual_class.clone(),
            counterfactual_class: self.counterfactual_class.clone(),
            factual_neighbors: self.factual_neighbors.clone(),
            counterfactual_neighbors: self.counterfactual_neighbors.clone(),
            factual_features: self.factual_features.clone(),
            counterfactual_features: self.counterfactual_features.clone(),
        }
    }
}

/// Binary outcomes of the six metrics for one explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricVector {
    pub tni: u8,
    pub tnnu: u8,
    pub cci: u8,
    pub ftnf: u8,
    pub cftnf: u8,
    pub cftnn: u8,
    pub passed_5_of_6: bool,
}

pub const METRIC_NAMES: [&str; 6] = ["TNI", "TNNU", "CCI", "FTNF", "CFTNF", "CFTNN"];

impl MetricVector {
    pub fn from_bits(bits: [bool; 6]) -> Self {
        let [tni, tnnu, cci, ftnf, cftnf, cftnn] = bits.map(u8::from);
        Self {
            tni,
            tnnu,
            cci,
            ftnf,
            cftnf,
            cftnn,
            passed_5_of_6: bits.iter().filter(|&&b| b).count() >= 5,
        }
    }

    /// Score for an answer whose record could not be parsed.
    pub fn zero() -> Self {
        Self::from_bits([false; 6])
    }

    pub fn values(&self) -> [u8; 6] {
        [self.tni, self.tnnu, self.cci, self.ftnf, self.cftnf, self.cftnn]
    }

    pub fn sum(&self) -> u8 {
        self.values().iter().sum()
    }
}


fn words(set: &BTreeSet<String>) -> BTreeSet<String> {
    set.iter().map(|w| normalize_text(w)).collect()
}

pub fn compute_metrics(rec: &ExtractionRecord, truth: &GroundTruth) -> MetricVector {
    MetricVector::from_bits([
        rec.target_node == truth.target_node,
        rec.factual_neighbors == truth.factual_neighbors,
        normalize_text(&rec.counterfactual_class) == normalize_text(&truth.counterfactual_class),
        words(&rec.factual_features) == words(&truth.factual_features),
        words(&rec.counterfactual_features) == words(&truth.counterfactual_features),
        rec.counterfactual_neighbors == truth.counterfactual_neighbors,
    ])
}

/// Scores a parse outcome: a parse failure is the all-zero vector.
pub fn score<E>(parsed: &std::result::Result<ExtractionRecord, E>, truth: &GroundTruth) -> MetricVector {
    match parsed {
        Ok(rec) => compute_metrics(rec, truth),
        Err(_) => MetricVector::zero(),
    }
}

/// Ids of the explanations passing the 5-of-6 rule, input order kept.
pub fn select_for_human_eval<K: Clone>(records: &[(K, MetricVector)]) -> Vec<K> {
    records
        .iter()
        .filter(|(_, m)| m.passed_5_of_6)
        .map(|(k, _)| k.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub model_name: String,
    pub dataset: String,
    pub explainer: String,
}

/// One scored attempt as seen by [`aggregate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub key: GroupKey,
    /// `None` when the backend call itself failed.
    pub metrics: Option<MetricVector>,
    pub parse_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: GroupKey,
    /// Attempts that produced a response (parse failures included).
    pub count: usize,
    pub means: [f64; 6],
    pub parse_failure_rate: f64,
    pub backend_errors: usize,
}

/// Per-group metric means. Parse failures count as zeros; backend errors
/// are counted separately and left out of the means.
pub fn aggregate(records: &[Scored]) -> Result<Vec<ReportRow>> {
    if records.is_empty() {
        return Err(Error::RunLog("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<&GroupKey, Vec<&Scored>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.key).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(key, rs)| {
            let answered: Vec<&Scored> = rs.iter().copied().filter(|r| r.metrics.is_some()).collect();
            let count = answered.len();
            let mut sums = [0.0; 6];
            for r in &answered {
                for (s, v) in sums.iter_mut().zip(r.metrics.expect("answered").values()) {
                    *s += f64::from(v);
                }
            }
            let denom = count.max(1) as f64;
            ReportRow {
                key: key.clone(),
                count,
                means: sums.map(|s| s / denom),
                parse_failure_rate: answered.iter().filter(|r| r.parse_failed).count() as f64 / denom,
                backend_errors: rs.len() - count,
            }
        })
        .collect())
}

/// Markdown table with three-decimal means.
pub fn render_report(rows: &[ReportRow]) -> String {
    let header = [
        "Model", "Dataset", "Explainer", "N", "TNI", "TNNU", "CCI", "FTNF", "CFTNF", "CFTNN", "ParseFail", "Errors",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![
                r.key.model_name.clone(),
                r.key.dataset.clone(),
                r.key.explainer.clone(),
                r.count.to_string(),
            ];
            cells.extend(r.means.iter().map(|m| format!("{m:.3}")));
            cells.push(format!("{:.3}", r.parse_failure_rate));
            cells.push(r.backend_errors.to_string());
            cells
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|row| row[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |", padded.join(" | "))
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(&header.map(String::from)));
    let _ = writeln!(
        out,
        "|{}|",
        widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")
    );
    for row in &body {
        let _ = writeln!(out, "{}", line(row));
    }
    out
}
