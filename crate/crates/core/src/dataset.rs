//! Planetoid-style citation data (`<name>.content` / `<name>.cites`),
//! vocabularies, train/test splits and small synthetic fixtures.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edge_key, Edge, Graph, GraphLike};

/// Where a citation dataset lives on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub content_path: PathBuf,
    pub cites_path: PathBuf,
    #[serde(default)]
    pub vocab_path: Option<PathBuf>,
    #[serde(default)]
    pub class_names_path: Option<PathBuf>,
}

impl DatasetSpec {
    /// `<dir>/<name>.content` and `<dir>/<name>.cites`, plus `<name>.vocab`
    /// and `<name>.classes` when those files exist.
    pub fn in_dir(dir: impl AsRef<Path>, name: &str) -> Self {
        let dir = dir.as_ref();
        let optional = |ext: &str| {
            let p = dir.join(format!("{name}.{ext}"));
            p.exists().then_some(p)
        };
        Self {
            content_path: dir.join(format!("{name}.content")),
            cites_path: dir.join(format!("{name}.cites")),
            vocab_path: optional("vocab"),
            class_names_path: optional("classes"),
        }
    }

    fn validate(&self) -> Result<()> {
        let empty = |p: &Path| p.as_os_str().is_empty();
        if empty(&self.content_path)
            || empty(&self.cites_path)
            || self.vocab_path.as_deref().is_some_and(empty)
            || self.class_names_path.as_deref().is_some_and(empty)
        {
            return Err(Error::Config("dataset paths must be nonempty".into()));
        }
        Ok(())
    }
}

/// Lines the loader dropped while reading the cites file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub unknown_id_links: usize,
    pub self_links: usize,
    pub duplicate_links: usize,
}

fn fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.to_owned(),
        line: 0,
        message: e.to_string(),
    })
}

/// Loads a citation graph. See [`load_citation_dataset_with_report`].
pub fn load_citation_dataset(spec: &DatasetSpec) -> Result<Graph> {
    let (graph, report) = load_citation_dataset_with_report(spec)?;
    if report != LoadReport::default() {
        log::warn!(
            "cites: skipped {} links to unknown ids, {} self-links, {} duplicates",
            report.unknown_id_links,
            report.self_links,
            report.duplicate_links
        );
    }
    Ok(graph)
}

/// Loads a citation graph: nodes are numbered in content-file order,
/// citation direction is dropped, and links naming unknown paper ids are
/// skipped and counted.
pub fn load_citation_dataset_with_report(spec: &DatasetSpec) -> Result<(Graph, LoadReport)> {
    spec.validate()?;
    let content = read(&spec.content_path)?;
    let load_err = |line: usize, message: String| Error::Load {
        path: spec.content_path.clone(),
        line,
        message,
    };

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut feature_dim: Option<usize> = None;
    for (lineno, line) in content.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line);
        if f.len() < 3 {
            return Err(load_err(lineno, format!("expected id, features, label; got {} fields", f.len())));
        }
        let dim = f.len() - 2;
        match feature_dim {
            None => feature_dim = Some(dim),
            Some(d) if d != dim => {
                return Err(load_err(lineno, format!("{dim} features, earlier lines have {d}")))
            }
            _ => {}
        }
        let mut active = Vec::new();
        for (i, tok) in f[1..=dim].iter().enumerate() {
            match *tok {
                "0" => {}
                "1" => active.push(i),
                other => {
                    return Err(load_err(lineno, format!("non-binary feature `{other}` at column {}", i + 1)))
                }
            }
        }
        let id = f[0].to_string();
        if ids.insert(id.clone(), features.len()).is_some() {
            return Err(load_err(lineno, format!("duplicate paper id `{id}`")));
        }
        features.push(active);
        raw_labels.push(f[dim + 1].to_string());
    }
    let feature_dim = feature_dim.unwrap_or(0);

    let class_names = match &spec.class_names_path {
        Some(path) => load_class_names(path)?,
        None => raw_labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let class_ids: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(v, l)| {
            class_ids
                .get(l.as_str())
                .copied()
                .ok_or_else(|| load_err(v + 1, format!("label `{l}` not among class names")))
        })
        .collect::<Result<Vec<_>>>()?;

    let cites = read(&spec.cites_path)?;
    let mut report = LoadReport::default();
    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    for (lineno, line) in cites.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line);
        if f.len() != 2 {
            return Err(Error::Load {
                path: spec.cites_path.clone(),
                line: lineno,
                message: format!("expected 2 ids, got {} fields", f.len()),
            });
        }
        match (ids.get(f[0]), ids.get(f[1])) {
            (Some(&a), Some(&b)) if a == b => report.self_links += 1,
            (Some(&a), Some(&b)) => {
                if !edges.insert(edge_key(a, b)) {
                    report.duplicate_links += 1;
                }
            }
            _ => report.unknown_id_links += 1,
        }
    }

    let vocabulary = load_vocabulary(spec.vocab_path.as_deref(), feature_dim)?;
    let graph = Graph::new(
        features.len(),
        edges,
        features,
        feature_dim,
        labels,
        vocabulary,
        class_names,
    )?;
    Ok((graph, report))
}

fn load_class_names(path: &Path) -> Result<Vec<String>> {
    let names: Vec<String> = read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
        return Err(Error::Load {
            path: path.to_owned(),
            line: 0,
            message: "duplicate class names".into(),
        });
    }
    Ok(names)
}

/// One word per line, exactly `feature_dim` distinct words. Without a path
/// the vocabulary is `word_0 .. word_{d-1}`.
pub fn load_vocabulary(path: Option<&Path>, feature_dim: usize) -> Result<Vec<String>> {
    let Some(path) = path else {
        return Ok((0..feature_dim).map(|i| format!("word_{i}")).collect());
    };
    let text = read(path)?;
    let words: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if words.len() != feature_dim {
        return Err(Error::Vocabulary(format!(
            "{} has {} words, feature_dim is {feature_dim}",
            path.display(),
            words.len()
        )));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = words.iter().find(|w| !seen.insert(w.as_str())) {
        return Err(Error::Vocabulary(format!("duplicate word `{dup}`")));
    }
    Ok(words)
}

/// Words present on node `v`, in vocabulary order.
pub fn words_for_node(g: &impl GraphLike, v: usize) -> Result<Vec<String>> {
    let vocab = g.base().vocabulary();
    Ok(g.feature_row(v)?.iter().map(|&i| vocab[i].clone()).collect())
}

/// Writes `g` back out in the layout [`load_citation_dataset`] reads, using
/// node indices as paper ids. Also writes `<name>.vocab` and `<name>.classes`
/// so a reload reproduces the same graph.
pub fn write_citation_dataset(g: &Graph, dir: impl AsRef<Path>, name: &str) -> Result<DatasetSpec> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut content = String::new();
    for v in 0..g.node_count() {
        let mut row = vec!["0"; g.feature_dim()];
        for &w in &g.feature_rows()[v] {
            row[w] = "1";
        }
        let _ = writeln!(content, "{v}\t{}\t{}", row.join("\t"), g.class_names()[g.labels()[v]]);
    }
    let mut cites = String::new();
    for &(a, b) in g.edges() {
        let _ = writeln!(cites, "{a}\t{b}");
    }
    let spec = DatasetSpec {
        content_path: dir.join(format!("{name}.content")),
        cites_path: dir.join(format!("{name}.cites")),
        vocab_path: Some(dir.join(format!("{name}.vocab"))),
        class_names_path: Some(dir.join(format!("{name}.classes"))),
    };
    fs::write(&spec.content_path, content)?;
    fs::write(&spec.cites_path, cites)?;
    fs::write(spec.vocab_path.as_ref().unwrap(), g.vocabulary().join("\n") + "\n")?;
    fs::write(spec.class_names_path.as_ref().unwrap(), g.class_names().join("\n") + "\n")?;
    Ok(spec)
}

/// Disjoint train/test node masks covering every node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMasks {
    pub fn train_nodes(&self) -> Vec<usize> {
        indices(&self.train)
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        indices(&self.test)
    }
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// Seeded random split with `round(train_fraction · n)` training nodes.
pub fn make_split(g: &Graph, train_fraction: f64, seed: u64) -> Result<SplitMasks> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 nodes, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Split(format!(
            "fraction {train_fraction} of {n} nodes leaves an empty train or test set"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = vec![false; n];
    for &v in &order[..n_train] {
        train[v] = true;
    }
    let test = train.iter().map(|t| !t).collect();
    Ok(SplitMasks { train, test })
}

/// Synthetic fixture families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Synthetic {
    /// Two dense blocks (nodes `0..n/2` and `n/2..n`) joined by sparse
    /// cross edges. Labels are the block id; each node carries its block's
    /// topic words with probability `signal_prob` and shared words with
    /// probability `noise_prob`.
    TwoCommunity {
        n: usize,
        p_in: f64,
        p_out: f64,
        #[serde(default = "default_words_per_class")]
        words_per_class: usize,
        #[serde(default = "default_shared_words")]
        shared_words: usize,
        #[serde(default = "default_signal_prob")]
        signal_prob: f64,
        #[serde(default = "default_noise_prob")]
        noise_prob: f64,
    },
    /// Two `m`-cliques joined by the single bridge `(m-1, m)`; each clique's
    /// nodes carry that clique's indicator word.
    Barbell { m: usize },
    /// Erdős–Rényi graph with random binary labels and sparse random words.
    RandomEr { n: usize, p: f64 },
}

fn default_words_per_class() -> usize {
    4
}
fn default_shared_words() -> usize {
    4
}
fn default_signal_prob() -> f64 {
    0.6
}
fn default_noise_prob() -> f64 {
    0.15
}

impl Synthetic {
    pub fn two_community(n: usize, p_in: f64, p_out: f64) -> Self {
        Synthetic::TwoCommunity {
            n,
            p_in,
            p_out,
            words_per_class: default_words_per_class(),
            shared_words: default_shared_words(),
            signal_prob: default_signal_prob(),
            noise_prob: default_noise_prob(),
        }
    }
}

const TOPIC_WORDS: [[&str; 6]; 2] = [
    ["neural", "network", "gradient", "learning", "layer", "training"],
    ["protein", "gene", "cell", "enzyme", "membrane", "receptor"],
];
const SHARED_WORDS: [&str; 6] = ["data", "model", "method", "result", "analysis", "study"];

fn topic_word(class: usize, i: usize) -> String {
    TOPIC_WORDS[class]
        .get(i)
        .map_or_else(|| format!("topic{class}_term{i}"), |w| w.to_string())
}

fn shared_word(i: usize) -> String {
    SHARED_WORDS
        .get(i)
        .map_or_else(|| format!("shared_term{i}"), |w| w.to_string())
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Synthetic(format!("{name} = {p} is not a probability")))
    }
}

/// Deterministic (per seed) synthetic graph.
pub fn make_synthetic(kind: &Synthetic, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *kind {
        Synthetic::TwoCommunity {
            n,
            p_in,
            p_out,
            words_per_class,
            shared_words,
            signal_prob,
            noise_prob,
        } => {
            if n < 2 {
                return Err(Error::Synthetic("two_community needs n >= 2".into()));
            }
            if words_per_class == 0 {
                return Err(Error::Synthetic("words_per_class must be positive".into()));
            }
            for (name, p) in [("p_in", p_in), ("p_out", p_out), ("signal_prob", signal_prob), ("noise_prob", noise_prob)] {
                check_prob(name, p)?;
            }
            let half = n / 2;
            let block = |v: usize| usize::from(v >= half);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    let p = if block(a) == block(b) { p_in } else { p_out };
                    if rng.gen_bool(p) {
                        edges.push((a, b));
                    }
                }
            }
            let dim = 2 * words_per_class + shared_words;
            let features = (0..n)
                .map(|v| {
                    let c = block(v);
                    let mut row: Vec<usize> = (0..words_per_class)
                        .filter(|_| rng.gen_bool(signal_prob))
                        .map(|i| c * words_per_class + i)
                        .collect();
                    row.extend(
                        (0..shared_words)
                            .filter(|_| rng.gen_bool(noise_prob))
                            .map(|i| 2 * words_per_class + i),
                    );
                    row
                })
                .collect();
            let vocabulary = (0..2)
                .flat_map(|c| (0..words_per_class).map(move |i| topic_word(c, i)))
                .chain((0..shared_words).map(shared_word))
                .collect();
            Graph::new(
                n,
                edges,
                features,
                dim,
                (0..n).map(block).collect(),
                vocabulary,
                vec!["community_a".into(), "community_b".into()],
            )
        }
        Synthetic::Barbell { m } => {
            if m < 2 {
                return Err(Error::Synthetic("barbell needs m >= 2".into()));
            }
            let mut edges = Vec::new();
            for side in 0..2 {
                let off = side * m;
                for a in 0..m {
                    for b in a + 1..m {
                        edges.push((off + a, off + b));
                    }
                }
            }
            edges.push((m - 1, m));
            let labels: Vec<usize> = (0..2 * m).map(|v| usize::from(v >= m)).collect();
            Graph::new(
                2 * m,
                edges,
                labels.iter().map(|&c| vec![c]).collect(),
                2,
                labels,
                vec!["left".into(), "right".into()],
                vec!["left_clique".into(), "right_clique".into()],
            )
        }
        Synthetic::RandomEr { n, p } => {
            check_prob("p", p)?;
            if n == 0 {
                return Err(Error::Synthetic("random_er needs n >= 1".into()));
            }
            let mut edges = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    if rng.gen_bool(p) {
                        edges.push((a, b));
                    }
                }
            }
            let dim = 8;
            let features = (0..n)
                .map(|_| (0..dim).filter(|_| rng.gen_bool(0.3)).collect())
                .collect();
            let labels = (0..n).map(|_| rng.gen_range(0..2)).collect();
            Graph::new(
                n,
                edges,
                features,
                dim,
                labels,
                (0..dim).map(shared_word).collect(),
                vec!["class_0".into(), "class_1".into()],
            )
        }
    }
}

/// Class histogram, handy for sanity output.
pub fn class_counts(g: &Graph) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for &c in g.labels() {
        *counts.entry(g.class_names()[c].clone()).or_default() += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn spec(dir: &Path, content: &str, cites: &str) -> DatasetSpec {
        DatasetSpec {
            content_path: write(dir, "d.content", content),
            cites_path: write(dir, "d.cites", cites),
            vocab_path: None,
            class_names_path: None,
        }
    }

    #[test]
    fn two_line_content_without_cites_gives_isolated_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_citation_dataset(&spec(dir.path(), "p1\t1\t0\tB\np2\t0\t1\tA\n", "")).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.class_names(), &["A".to_string(), "B".to_string()]);
        assert_eq!(g.labels(), &[1, 0]);
        assert_eq!(g.vocabulary(), &["word_0".to_string(), "word_1".to_string()]);
    }

    #[test]
    fn cites_are_undirected_and_unknown_ids_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(
            dir.path(),
            "10\t1\tA\n20\t0\tA\n30\t1\tB\n",
            "20\t10\n10\t20\n30\t99\n30\t30\n30\t10\n",
        );
        let (g, report) = load_citation_dataset_with_report(&s).unwrap();
        assert_eq!(g.edges().iter().copied().collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);
        assert_eq!(
            report,
            LoadReport { unknown_id_links: 1, self_links: 1, duplicate_links: 1 }
        );
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_citation_dataset(&spec(dir.path(), "a\t1\t0\tA\nb\t1\t2\tA\n", "")).unwrap_err();
        assert!(matches!(err, Error::Load { line: 2, .. }), "{err}");
        let err = load_citation_dataset(&spec(dir.path(), "a\t1\t0\tA\nb\t1\tA\n", "")).unwrap_err();
        assert!(matches!(err, Error::Load { line: 2, .. }), "{err}");
        let err = load_citation_dataset(&spec(dir.path(), "a\tA\n", "")).unwrap_err();
        assert!(matches!(err, Error::Load { line: 1, .. }), "{err}");
        let err = load_citation_dataset(&spec(dir.path(), "a\t1\tA\n", "a\n")).unwrap_err();
        assert!(matches!(err, Error::Load { line: 1, .. }), "{err}");
    }

    #[test]
    fn vocabulary_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "v", "cat\ndog\nfox");
        assert_eq!(load_vocabulary(Some(&p), 3).unwrap(), vec!["cat", "dog", "fox"]);
        assert_eq!(load_vocabulary(None, 2).unwrap(), vec!["word_0", "word_1"]);
        let p = write(dir.path(), "v2", "cat\ndog\n");
        assert!(load_vocabulary(Some(&p), 3).is_err());
        let p = write(dir.path(), "v3", "cat\ncat\n");
        assert!(load_vocabulary(Some(&p), 2).is_err());
    }

    fn three_word_graph() -> Graph {
        Graph::new(
            2,
            [(0, 1)],
            vec![vec![0, 2], vec![]],
            3,
            vec![0, 0],
            vec!["a".into(), "b".into(), "c".into()],
            vec!["C0".into()],
        )
        .unwrap()
    }

    #[test]
    fn words_for_node_examples() {
        let g = three_word_graph();
        assert_eq!(words_for_node(&g, 0).unwrap(), vec!["a", "c"]);
        assert!(words_for_node(&g, 1).unwrap().is_empty());
        let mut view = g.view();
        view.override_binary_row(0, &[1, 1, 0]).unwrap();
        assert_eq!(words_for_node(&view, 0).unwrap(), vec!["a", "b"]);
        assert!(words_for_node(&g, 2).is_err());
    }

    #[test]
    fn split_examples() {
        let g = make_synthetic(&Synthetic::RandomEr { n: 10, p: 0.2 }, 0).unwrap();
        let s = make_split(&g, 0.8, 7).unwrap();
        assert_eq!(s.train_nodes().len(), 8);
        assert_eq!(s.test_nodes().len(), 2);
        assert_eq!(s, make_split(&g, 0.8, 7).unwrap());
        let tiny = make_synthetic(&Synthetic::RandomEr { n: 2, p: 0.0 }, 0).unwrap();
        assert!(make_split(&tiny, 0.999, 1).is_err());
        assert!(make_split(&g, 1.0, 1).is_err());
    }

    #[test]
    fn two_community_statistics_recount() {
        let kind = Synthetic::two_community(12, 0.8, 0.1);
        let g = make_synthetic(&kind, 1).unwrap();
        assert_eq!(g.node_count(), 12);
        assert_eq!(g, make_synthetic(&kind, 1).unwrap());
        // labels are block ids
        assert_eq!(g.labels(), &[0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
        // recount within/cross edges independently of the generator
        let within = g.edges().iter().filter(|(a, b)| (a < &6) == (b < &6)).count();
        let cross = g.edge_count() - within;
        // 30 within-block pairs at 0.8, 36 cross pairs at 0.1
        assert!(within >= 18, "within = {within}");
        assert!(cross <= 10, "cross = {cross}");
        // topic words only come from the node's own block
        for v in 0..12 {
            let c = g.labels()[v];
            for &w in &g.feature_rows()[v] {
                assert!(w >= 8 || w / 4 == c, "node {v} word {w}");
            }
        }
        assert!(make_synthetic(&Synthetic::two_community(12, 1.5, 0.1), 1).is_err());
    }

    #[test]
    fn barbell_and_empty_er() {
        let g = make_synthetic(&Synthetic::Barbell { m: 4 }, 0).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.edge_count(), 2 * 6 + 1);
        assert!(g.edges().contains(&(3, 4)));
        let er = make_synthetic(&Synthetic::RandomEr { n: 5, p: 0.0 }, 3).unwrap();
        assert_eq!(er.node_count(), 5);
        assert_eq!(er.edge_count(), 0);
        assert!(make_synthetic(&Synthetic::Barbell { m: 1 }, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn write_then_load_round_trips(seed in 0u64..1000, n in 2usize..20, p in 0.0f64..0.6) {
            let g = make_synthetic(&Synthetic::two_community(n, p, p / 4.0), seed).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let s = write_citation_dataset(&g, dir.path(), "rt").unwrap();
            let back = load_citation_dataset(&s).unwrap();
            prop_assert_eq!(&back, &g);
            for v in 0..n {
                prop_assert_eq!(words_for_node(&back, v).unwrap().len(), g.feature_rows()[v].len());
            }
        }

        #[test]
        fn split_is_partition(seed in 0u64..500, n in 2usize..60, f in 0.05f64..0.95) {
            let g = make_synthetic(&Synthetic::RandomEr { n, p: 0.0 }, 0).unwrap();
            if let Ok(s) = make_split(&g, f, seed) {
                for v in 0..n {
                    prop_assert!(s.train[v] ^ s.test[v]);
                }
                prop_assert_eq!(s.train_nodes().len(), (f * n as f64).round() as usize);
            }
        }
    }
}
