//! Acceptance suite: one status line per criterion. Runs without the libtest
//! harness so the lines are always printed; exits nonzero if any gating
//! criterion fails.
//!
//! Real citation data is read from `$CFEXPLAIN_DATA_DIR` (default
//! `<workspace>/data`) as `cora.{content,cites}` and
//! `citeseer.{content,cites}`.

mod support;

use std::cell::OnceCell;
use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cfexplain_core::dataset::{load_citation_dataset, make_split, make_synthetic, DatasetSpec, Synthetic};
use cfexplain_core::explain::{
    brute_force_counterfactual, counterfactual_view, explain, validate_counterfactual, CfKind, CounterfactualResult,
    ExplainOutcome, ExplainerParams, FeatureScope,
};
use cfexplain_core::extract::ExtractionRecord;
use cfexplain_core::gcn::{
    accuracy, cross_entropy, loss_and_grad, one_hot, predict_all, train, GcnModel, GradRequest, TrainConfig,
};
use cfexplain_core::graph::{Graph, GraphLike};
use cfexplain_core::llm::{CorruptionSpec, MockBackend};
use cfexplain_core::matrix::DenseMatrix;
use cfexplain_core::metrics::{compute_metrics, GroundTruth, METRIC_NAMES};
use cfexplain_core::pipeline::{
    cmd_explain, cmd_run, cmd_train, read_jsonl, DatasetSource, ExplainRecord, ExplainerChoice, RunConfig, RunRecord,
    CHECKPOINT_FILE, EXPLAIN_LOG, HISTORY_FILE, RUN_LOG,
};
use cfexplain_core::verbalize::build_cf_prompt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    NotVerified,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        status: Status::Pass,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        status: Status::Fail,
        detail: detail.into(),
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn data_dir() -> PathBuf {
    std::env::var_os("CFEXPLAIN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn citation(name: &str) -> Option<Graph> {
    let spec = DatasetSpec::in_dir(data_dir(), name);
    if !spec.content_path.exists() || !spec.cites_path.exists() {
        return None;
    }
    Some(load_citation_dataset(&spec).unwrap_or_else(|e| panic!("{name}: {e}")))
}

fn trained(g: &Graph, seed: u64) -> (GcnModel, f64) {
    let masks = make_split(g, 0.8, seed).unwrap();
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let (model, _) = train(g, &masks, &cfg).unwrap();
    let preds = predict_all(&model, g).unwrap();
    let acc = accuracy(&preds, g.labels(), &masks.test_nodes());
    (model, acc)
}

// ---------------------------------------------------------------- C1

fn c1_oracle_sanity() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut missing = Vec::new();
    for (name, threshold) in [("cora", 0.70), ("citeseer", 0.60)] {
        let Some(g) = citation(name) else {
            missing.push(name);
            continue;
        };
        let start = Instant::now();
        let (model, acc) = trained(&g, 0);
        let secs = start.elapsed().as_secs_f64();
        let (again, _) = trained(&g, 0);
        let deterministic = model == again;
        let good = acc >= threshold && secs <= 120.0 && deterministic;
        ok &= good;
        lines.push(format!(
            "{name}: test acc {acc:.3} (need {threshold:.2}), {secs:.1}s, deterministic={deterministic}"
        ));
    }
    // Cora-sized stand-in so the runtime bound is exercised even without data.
    let stand_in = Synthetic::TwoCommunity {
        n: 2708,
        p_in: 0.003,
        p_out: 0.0004,
        words_per_class: 700,
        shared_words: 33,
        signal_prob: 0.02,
        noise_prob: 0.1,
    };
    let g = make_synthetic(&stand_in, 0).unwrap();
    let start = Instant::now();
    let (_, acc) = trained(&g, 0);
    lines.push(format!(
        "2708-node/1433-word synthetic: 500 epochs in {:.1}s, test acc {acc:.3}",
        start.elapsed().as_secs_f64()
    ));
    if !missing.is_empty() {
        return Outcome {
            status: if ok { Status::NotVerified } else { Status::Fail },
            detail: format!(
                "dataset files for {} not found in {}; {}",
                missing.join(", "),
                data_dir().display(),
                lines.join("; ")
            ),
        };
    }
    verdict(ok, lines.join("; "))
}

// ---------------------------------------------------------------- C2

/// Symmetric normalization with self-loops, written out directly.
fn reference_a_hat(n: usize, edges: &[(usize, usize)]) -> DenseMatrix {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(i, j) in edges {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, a[i][j] / (d[i] * d[j]).sqrt());
        }
    }
    out
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn c2_gradients() -> Outcome {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.gen_range(2..=6);
        let d = rng.gen_range(2..=5);
        let c = rng.gen_range(2..=3);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        let a_hat = reference_a_hat(n, &edges);
        let x = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let model = GcnModel::init(d, 4, c, 1.5, seed);
        let nodes: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
        let nodes = if nodes.is_empty() { vec![0] } else { nodes };
        let labels: Vec<usize> = nodes.iter().map(|_| rng.gen_range(0..c)).collect();
        let targets = one_hot(&labels, c);
        let wrt = GradRequest {
            a_hat: true,
            x: true,
            weights: true,
        };
        let grads = loss_and_grad(&model, &a_hat, &x, &nodes, &targets, wrt).unwrap();
        let loss = |m: &GcnModel, a: &DenseMatrix, x: &DenseMatrix| {
            cross_entropy(&m.forward_pass(a, x).unwrap(), &nodes, &targets).unwrap().0
        };
        let mut check = |analytic: f64, plus: f64, minus: f64| {
            worst = worst.max(rel_err(analytic, (plus - minus) / (2.0 * H)));
            checked += 1;
        };
        let ga = grads.a_hat.as_ref().unwrap();
        for i in 0..n * n {
            let (mut p, mut m) = (a_hat.clone(), a_hat.clone());
            p.as_mut_slice()[i] += H;
            m.as_mut_slice()[i] -= H;
            check(ga[i], loss(&model, &p, &x), loss(&model, &m, &x));
        }
        let gx = grads.x.as_ref().unwrap();
        for i in 0..n * d {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.as_mut_slice()[i] += H;
            m.as_mut_slice()[i] -= H;
            check(gx[i], loss(&model, &a_hat, &p), loss(&model, &a_hat, &m));
        }
        let gw = grads.weights.as_ref().unwrap();
        let params: [(&[f64], fn(&mut GcnModel) -> &mut [f64]); 4] = [
            (gw.w1.as_slice(), |m| m.w1.as_mut_slice()),
            (&gw.b1, |m| &mut m.b1),
            (gw.w2.as_slice(), |m| m.w2.as_mut_slice()),
            (&gw.b2, |m| &mut m.b2),
        ];
        for (grad, field) in params {
            for (i, &g) in grad.iter().enumerate() {
                let (mut p, mut m) = (model.clone(), model.clone());
                field(&mut p)[i] += H;
                field(&mut m)[i] -= H;
                check(g, loss(&p, &a_hat, &x), loss(&m, &a_hat, &x));
            }
        }
    }
    verdict(
        worst < 1e-4,
        format!("50 instances, {checked} partials (Â, X, W1, b1, W2, b2), max relative error {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- C3 / C4

struct Emitted {
    source: String,
    graph: Graph,
    model: GcnModel,
    results: Vec<CounterfactualResult>,
    attempts: usize,
}

fn explain_all(source: String, graph: Graph, model: GcnModel, nodes: &[usize]) -> Emitted {
    let subgraph_scope = ExplainerParams {
        feature_scope: FeatureScope::Subgraph,
        ..ExplainerParams::default()
    };
    let mut results = Vec::new();
    let mut attempts = 0;
    for &v in nodes {
        for (kind, params) in [
            (CfKind::Structure, ExplainerParams::default()),
            (CfKind::Feature, ExplainerParams::default()),
            (CfKind::Feature, subgraph_scope.clone()),
        ] {
            attempts += 1;
            if let ExplainOutcome::Found(r) = explain(&model, &graph, v, kind, &params).unwrap() {
                results.push(r);
            }
        }
    }
    Emitted {
        source,
        graph,
        model,
        results,
        attempts,
    }
}

fn correctly_classified(model: &GcnModel, g: &Graph, limit: usize, seed: u64) -> Vec<usize> {
    let preds = predict_all(model, g).unwrap();
    let mut ok: Vec<usize> = (0..g.node_count()).filter(|&v| preds[v] == g.labels()[v]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..ok.len()).rev() {
        ok.swap(i, rng.gen_range(0..=i));
    }
    ok.truncate(limit);
    ok.sort_unstable();
    ok
}

fn emitted_counterfactuals() -> (Vec<Emitted>, Vec<String>) {
    let mut out = Vec::new();
    let families = [
        ("two_community(30)", Synthetic::two_community(30, 0.12, 0.06), 0..4u64),
        ("two_community(60)", Synthetic::two_community(60, 0.06, 0.03), 0..2),
        ("barbell(5)", Synthetic::Barbell { m: 5 }, 0..1),
        ("random_er(30)", Synthetic::RandomEr { n: 30, p: 0.1 }, 0..2),
    ];
    for (name, kind, seeds) in families {
        for seed in seeds {
            let g = make_synthetic(&kind, seed).unwrap();
            let (model, _) = trained(&g, seed);
            let nodes = correctly_classified(&model, &g, 40, seed);
            out.push(explain_all(format!("{name}#{seed}"), g, model, &nodes));
        }
    }
    let mut missing = Vec::new();
    for name in ["cora", "citeseer"] {
        match citation(name) {
            Some(g) => {
                let (model, _) = trained(&g, 0);
                let nodes = correctly_classified(&model, &g, 20, 0);
                out.push(explain_all(name.to_string(), g, model, &nodes));
            }
            None => missing.push(name.to_string()),
        }
    }
    (out, missing)
}

fn source_note(emitted: &[Emitted], missing: &[String]) -> String {
    let mut s = format!("{} graphs", emitted.len());
    if !missing.is_empty() {
        s.push_str(&format!(" ({} absent: synthetic only)", missing.join(", ")));
    }
    s
}

fn c3_validity(emitted: &[Emitted], missing: &[String]) -> Outcome {
    let total: usize = emitted.iter().map(|e| e.results.len()).sum();
    let attempts: usize = emitted.iter().map(|e| e.attempts).sum();
    let invalid: Vec<String> = emitted
        .iter()
        .flat_map(|e| {
            e.results
                .iter()
                .filter(|r| !validate_counterfactual(&e.model, &e.graph, r))
                .map(move |r| format!("{} node {} {}", e.source, r.target, r.kind.as_str()))
        })
        .collect();
    let per_kind = |k: CfKind| emitted.iter().flat_map(|e| &e.results).filter(|r| r.kind == k).count();
    let detail = format!(
        "{}/{total} emitted counterfactuals flip the full-graph prediction ({} structure, {} feature; {attempts} attempts) on {}",
        total - invalid.len(),
        per_kind(CfKind::Structure),
        per_kind(CfKind::Feature),
        source_note(emitted, missing)
    );
    let ok = invalid.is_empty() && per_kind(CfKind::Structure) > 0 && per_kind(CfKind::Feature) > 0;
    verdict(ok, if invalid.is_empty() { detail } else { format!("{detail}; invalid: {invalid:?}") })
}

fn subset_violation(e: &Emitted, r: &CounterfactualResult) -> Option<String> {
    let g = &e.graph;
    let cf = counterfactual_view(g, r).ok()?;
    let edges_after: BTreeSet<(usize, usize)> = cf.current_edges().into_iter().collect();
    if !edges_after.is_subset(g.edges()) {
        return Some("counterfactual edges not a subset".into());
    }
    if r.deleted_edges.iter().any(|e| !g.edges().contains(e)) {
        return Some("deleted an edge that does not exist".into());
    }
    for u in 0..g.node_count() {
        let before: BTreeSet<usize> = g.feature_row(u).ok()?.iter().copied().collect();
        let after: BTreeSet<usize> = cf.feature_row(u).ok()?.iter().copied().collect();
        if !after.is_subset(&before) {
            return Some(format!("node {u} gained words"));
        }
        if r.kind == CfKind::Structure && after != before {
            return Some("structure counterfactual changed words".into());
        }
    }
    if r.kind == CfKind::Feature && edges_after != *g.edges() {
        return Some("feature counterfactual changed edges".into());
    }
    None
}

fn c4_inclusion(emitted: &[Emitted], missing: &[String]) -> Outcome {
    let mut violations = Vec::new();
    let mut counts = [0usize; 2];
    for e in emitted {
        for r in &e.results {
            counts[usize::from(r.kind == CfKind::Feature)] += 1;
            if let Some(why) = subset_violation(e, r) {
                violations.push(format!("{} node {}: {why}", e.source, r.target));
            }
        }
    }
    verdict(
        violations.is_empty(),
        format!(
            "{} structure counterfactuals keep E' ⊆ E, {} feature counterfactuals keep words' ⊆ words, on {}{}",
            counts[0],
            counts[1],
            source_note(emitted, missing),
            if violations.is_empty() {
                String::new()
            } else {
                format!("; violations: {violations:?}")
            }
        ),
    )
}

// ---------------------------------------------------------------- C5

fn c5_near_minimal() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in [CfKind::Structure, CfKind::Feature] {
        let (mut instances, mut good, mut seed) = (0, 0, 0u64);
        while instances < 50 && seed < 5000 {
            seed += 1;
            let g = make_synthetic(&Synthetic::two_community(12, 0.45, 0.05), seed).unwrap();
            if g.edge_count() > 20 {
                continue;
            }
            let (model, _) = trained(&g, seed);
            let v = (seed % 12) as usize;
            let Ok(ExplainOutcome::Found(bf)) = brute_force_counterfactual(&model, &g, v, kind, 1) else {
                continue;
            };
            assert_eq!(bf.distance, 1);
            instances += 1;
            if let ExplainOutcome::Found(r) = explain(&model, &g, v, kind, &ExplainerParams::default()).unwrap() {
                if r.distance <= 3 && validate_counterfactual(&model, &g, &r) {
                    good += 1;
                }
            }
        }
        let rate = good as f64 / instances.max(1) as f64;
        ok &= instances == 50 && rate >= 0.8;
        lines.push(format!("{}: {good}/{instances} within distance 3", kind.as_str()));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 60.0;
    verdict(ok, format!("{} ({secs:.1}s incl. training)", lines.join(", ")))
}

// ---------------------------------------------------------------- C6

fn oracle_norm(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Field-by-field comparison written independently of the library.
fn oracle_metrics(rec: &ExtractionRecord, t: &GroundTruth) -> [u8; 6] {
    let words = |s: &BTreeSet<String>| s.iter().map(|w| oracle_norm(w)).collect::<BTreeSet<_>>();
    let class_ok = oracle_norm(&rec.counterfactual_class) == oracle_norm(&t.counterfactual_class);
    [
        rec.target_node == t.target_node,
        rec.factual_neighbors.len() == t.factual_neighbors.len()
            && rec.factual_neighbors.iter().all(|n| t.factual_neighbors.contains(n)),
        class_ok,
        words(&rec.factual_features) == words(&t.factual_features),
        words(&rec.counterfactual_features) == words(&t.counterfactual_features),
        rec.counterfactual_neighbors.len() == t.counterfactual_neighbors.len()
            && rec.counterfactual_neighbors.iter().all(|n| t.counterfactual_neighbors.contains(n)),
    ]
    .map(u8::from)
}

fn random_ids(rng: &mut ChaCha8Rng) -> BTreeSet<u64> {
    (0..rng.gen_range(0..5)).map(|_| rng.gen_range(0..12)).collect()
}

fn random_words(rng: &mut ChaCha8Rng) -> BTreeSet<String> {
    const POOL: [&str; 6] = ["graph", "neural", "kernel", "protein", "data", "model"];
    (0..rng.gen_range(0..4)).map(|_| POOL[rng.gen_range(0..POOL.len())].to_string()).collect()
}

fn mutate_ids(rng: &mut ChaCha8Rng, s: &BTreeSet<u64>) -> BTreeSet<u64> {
    let mut s = s.clone();
    match rng.gen_range(0..4) {
        0 => {}
        1 => {
            let first = s.iter().next().copied();
            if let Some(x) = first {
                s.remove(&x);
            }
        }
        2 => {
            s.insert(rng.gen_range(0..14));
        }
        _ => s = random_ids(rng),
    }
    s
}

fn mutate_words(rng: &mut ChaCha8Rng, s: &BTreeSet<String>) -> BTreeSet<String> {
    match rng.gen_range(0..4) {
        0 => s.clone(),
        1 => s.iter().map(|w| format!(" {} ", w.to_uppercase())).collect(),
        2 => {
            let mut s = s.clone();
            s.insert("extra".into());
            s
        }
        _ => random_words(rng),
    }
}

fn c6_metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let classes = ["Theory", "Neural_Networks", "Genetic_Algorithms"];
    let mut agree = 0;
    let mut per_metric_ones = [0usize; 6];
    for _ in 0..1000 {
        let (fc, cc) = (rng.gen_range(0..3), rng.gen_range(0..3));
        let truth = GroundTruth {
            target_node: rng.gen_range(0..12),
            factual_class: classes[fc].into(),
            counterfactual_class: classes[cc].into(),
            factual_class_id: fc,
            counterfactual_class_id: cc,
            factual_neighbors: random_ids(&mut rng),
            counterfactual_neighbors: random_ids(&mut rng),
            factual_features: random_words(&mut rng),
            counterfactual_features: random_words(&mut rng),
        };
        let class_answer = match rng.gen_range(0..5) {
            0 => truth.counterfactual_class.clone(),
            1 => format!("  {}\t", truth.counterfactual_class.to_uppercase()),
            2 => cc.to_string(),
            3 => classes[rng.gen_range(0..3)].to_string(),
            _ => rng.gen_range(0..4).to_string(),
        };
        let rec = ExtractionRecord {
            target_node: if rng.gen_bool(0.6) {
                truth.target_node
            } else {
                rng.gen_range(0..12)
            },
            factual_class: classes[rng.gen_range(0..3)].into(),
            counterfactual_class: class_answer,
            factual_neighbors: mutate_ids(&mut rng, &truth.factual_neighbors),
            counterfactual_neighbors: mutate_ids(&mut rng, &truth.counterfactual_neighbors),
            factual_features: mutate_words(&mut rng, &truth.factual_features),
            counterfactual_features: mutate_words(&mut rng, &truth.counterfactual_features),
        };
        let got = compute_metrics(&rec, &truth);
        let want = oracle_metrics(&rec, &truth);
        let consistent = got.passed_5_of_6 == (want.iter().map(|&b| b as u32).sum::<u32>() >= 5);
        if got.values() == want && consistent {
            agree += 1;
        }
        for (k, &b) in want.iter().enumerate() {
            per_metric_ones[k] += b as usize;
        }
    }
    let mix: Vec<String> = METRIC_NAMES
        .iter()
        .zip(per_metric_ones)
        .map(|(n, c)| format!("{n}={c}"))
        .collect();
    verdict(
        agree == 1000,
        format!("{agree}/1000 randomized pairs agree (ones per metric: {})", mix.join(" ")),
    )
}

// ---------------------------------------------------------------- C7

fn run_config(dir: &Path, generator: Synthetic, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        dataset: DatasetSource::Synthetic { generator, seed },
        explainer: ExplainerChoice::Both,
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.set_seed(seed);
    cfg
}

fn metric_means(records: &[RunRecord]) -> [f64; 6] {
    let mut sums = [0.0; 6];
    for r in records {
        for (s, v) in sums.iter_mut().zip(r.metrics.expect("scored").values()) {
            *s += f64::from(v);
        }
    }
    sums.map(|s| s / records.len() as f64)
}

const FIELD_FOR_METRIC: [&str; 6] = [
    "target_node",
    "factual_neighbors",
    "counterfactual_class",
    "factual_features",
    "counterfactual_features",
    "counterfactual_neighbors",
];

fn c7_end_to_end() -> Outcome {
    // echo on a 30-node graph
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), Synthetic::two_community(30, 0.12, 0.06), 1);
    cmd_run(&cfg, &MockBackend::new(CorruptionSpec::echo(), 0).unwrap()).unwrap();
    let echo: Vec<RunRecord> = read_jsonl(&cfg.path(RUN_LOG)).unwrap();
    let echo_means = metric_means(&echo);
    let mut ok = !echo.is_empty() && echo_means.iter().all(|&m| m == 1.0);
    let mut lines = vec![format!("echo: {} records, means {:?}", echo.len(), echo_means)];

    // corruption sweeps over a shared explanation log with >= 1000 counterfactuals
    let base = tempfile::tempdir().unwrap();
    let mut big = run_config(base.path(), Synthetic::two_community(3000, 0.0014, 0.0007), 7);
    big.sample_size = 3000;
    cmd_train(&big).unwrap();
    cmd_explain(&big).unwrap();
    let mut worst = 0.0f64;
    for (metric, field) in FIELD_FOR_METRIC.iter().enumerate() {
        for rho in [0.3, 0.7] {
            let run_dir = tempfile::tempdir().unwrap();
            let cfg = RunConfig {
                output_dir: run_dir.path().to_path_buf(),
                ..big.clone()
            };
            for f in [CHECKPOINT_FILE, HISTORY_FILE, EXPLAIN_LOG] {
                fs::copy(big.path(f), cfg.path(f)).unwrap();
            }
            let backend = MockBackend::new(CorruptionSpec::single(field, rho), 11).unwrap();
            cmd_run(&cfg, &backend).unwrap();
            let records: Vec<RunRecord> = read_jsonl(&cfg.path(RUN_LOG)).unwrap();
            if records.len() < 1000 {
                return fail(format!("only {} counterfactuals for the corruption sweep", records.len()));
            }
            let means = metric_means(&records[..1000]);
            let dev = (means[metric] - (1.0 - rho)).abs();
            worst = worst.max(dev);
            let others_perfect = means.iter().enumerate().all(|(k, &m)| k == metric || m == 1.0);
            if dev > 0.05 || !others_perfect {
                ok = false;
                lines.push(format!("{field}@{rho}: means {means:?}"));
            }
        }
    }
    lines.push(format!(
        "12 corruption runs x 1000 records: max |mean - (1-rho)| = {worst:.3}, untouched metrics 1.000"
    ));
    verdict(ok, lines.join("; "))
}

// ---------------------------------------------------------------- C8

fn c8_golden() -> Outcome {
    let results = support::run_golden_suite();
    let failures: Vec<String> = results
        .iter()
        .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}")))
        .collect();
    verdict(
        results.len() >= 10 && failures.is_empty(),
        format!(
            "{}/{} golden responses parsed as expected{}",
            results.len() - failures.len(),
            results.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {failures:?}")
            }
        ),
    )
}

// ---------------------------------------------------------------- C9

fn c9_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let gen = Synthetic::two_community(30, 0.12, 0.06);
    let (ca, cb) = (run_config(a.path(), gen.clone(), 5), run_config(b.path(), gen, 5));
    cmd_train(&ca).unwrap();
    cmd_train(&cb).unwrap();
    let same_ckpt = fs::read(ca.path(CHECKPOINT_FILE)).unwrap() == fs::read(cb.path(CHECKPOINT_FILE)).unwrap();
    cmd_explain(&ca).unwrap();
    cmd_explain(&cb).unwrap();
    let prompts = |cfg: &RunConfig| -> Vec<(String, String, String)> {
        let g = cfg.dataset.load().unwrap();
        read_jsonl::<ExplainRecord>(&cfg.path(EXPLAIN_LOG))
            .unwrap()
            .iter()
            .filter_map(|r| r.outcome.result())
            .map(|r| {
                let p = build_cf_prompt(&g, r).unwrap();
                (p.system_text.clone(), p.user_text.clone(), p.hash())
            })
            .collect()
    };
    let (pa, pb) = (prompts(&ca), prompts(&cb));
    let same_prompts = !pa.is_empty() && pa == pb;

    // uninterrupted vs. killed-after-3.5-records-then-resumed
    let backend = MockBackend::new(CorruptionSpec::single("counterfactual_features", 0.5), 2).unwrap();
    cmd_run(&ca, &backend).unwrap();
    let complete = fs::read_to_string(ca.path(RUN_LOG)).unwrap();
    let lines: Vec<&str> = complete.split_inclusive('\n').collect();
    let resumed_equal = if lines.len() >= 4 {
        let torn = format!("{}{}{}{}", lines[0], lines[1], lines[2], &lines[3][..lines[3].len() / 2]);
        fs::write(cb.path(RUN_LOG), torn).unwrap();
        let s = cmd_run(&cb, &backend).unwrap();
        s.skipped_existing == 3 && fs::read_to_string(cb.path(RUN_LOG)).unwrap() == complete
    } else {
        false
    };
    verdict(
        same_ckpt && same_prompts && resumed_equal,
        format!(
            "bitwise-identical checkpoints: {same_ckpt}; {} prompts byte-identical: {same_prompts}; resumed run log ({} records) equals uninterrupted: {resumed_equal}",
            pa.len(),
            lines.len()
        ),
    )
}

// ----------------------------------------------------------------

fn run(id: u8, title: &str, check: impl FnOnce() -> Outcome) -> Status {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        fail(format!("panicked: {msg}"))
    });
    let label = match outcome.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::NotVerified => "NOT VERIFIED",
    };
    println!(
        "[C{id}] {label:<12} {title} — {} [{:.1}s]",
        outcome.detail,
        start.elapsed().as_secs_f64()
    );
    outcome.status
}

fn main() {
    // `cargo test -- --list` and filtered runs from the libtest harness
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut statuses = vec![
        run(1, "oracle sanity on citation data", c1_oracle_sanity),
        run(2, "gradient correctness", c2_gradients),
    ];
    let shared = OnceCell::new();
    statuses.push(run(3, "counterfactual validity", || {
        let (emitted, missing) = shared.get_or_init(emitted_counterfactuals);
        c3_validity(emitted, missing)
    }));
    statuses.push(run(4, "sparsification inclusion", || {
        let (emitted, missing) = shared.get_or_init(emitted_counterfactuals);
        c4_inclusion(emitted, missing)
    }));
    statuses.push(run(5, "near-minimality vs brute force", c5_near_minimal));
    statuses.push(run(6, "metric oracle equivalence", c6_metric_oracle));
    statuses.push(run(7, "end-to-end mock pipeline", c7_end_to_end));
    statuses.push(run(8, "parser golden suite", c8_golden));
    statuses.push(run(9, "determinism and resumability", c9_determinism));
    let failed = statuses.iter().filter(|s| **s == Status::Fail).count();
    let unverified = statuses.iter().filter(|s| **s == Status::NotVerified).count();
    println!(
        "acceptance: {} passed, {failed} failed, {unverified} not verified",
        statuses.len() - failed - unverified
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
