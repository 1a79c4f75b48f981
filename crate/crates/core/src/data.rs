//! Dataset ingestion and synthesis: TSV node-graph directories, KG triple
//! files, balanced-tree generation, and split management.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {details}")]
    Malformed {
        file: String,
        line: usize,
        details: String,
    },
    #[error("feature dimension mismatch: node {node} has {got} values, expected {want}")]
    DimMismatch {
        node: usize,
        got: usize,
        want: usize,
    },
    #[error("edge endpoint {0} out of range for {1} nodes")]
    BadEndpoint(usize, usize),
    #[error("class {class} has {members} members, fewer than the {slots} split slots")]
    TinyClass {
        class: i64,
        members: usize,
        slots: usize,
    },
    #[error("split fractions sum to {0}, must be <= 1")]
    BadFractions(f64),
    #[error("tree size overflows: b={0}, d={1}")]
    TreeOverflow(u64, u32),
    #[error("train/test leakage: {0} shared triples")]
    Leakage(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Undirected node-classification graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub n: usize,
    /// Deduplicated with u < v.
    pub edges: Vec<(usize, usize)>,
    /// Row-major n×d.
    pub features: Vec<Vec<f64>>,
    /// −1 marks unlabeled nodes.
    pub labels: Vec<i64>,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl Graph {
    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l >= 0)
            .max()
            .map_or(0, |m| *m as usize + 1)
    }

    fn check(&self) -> Result<(), DataError> {
        for &(u, v) in &self.edges {
            if u >= self.n || v >= self.n {
                return Err(DataError::BadEndpoint(u.max(v), self.n));
            }
        }
        for (i, m) in self
            .train_mask
            .iter()
            .zip(&self.val_mask)
            .map(|(a, b)| (*a, *b))
            .zip(&self.test_mask)
            .enumerate()
        {
            let ((t, v), s) = m;
            if (t && v) || (t && *s) || (v && *s) {
                return Err(DataError::Invalid(format!("node {i} in multiple splits")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
}

#[derive(Debug, Clone)]
pub struct KGDataset {
    pub entities: BTreeMap<String, usize>,
    pub relations: BTreeMap<String, usize>,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl KGDataset {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text.lines().map(|s| s.to_string()).collect())
}

fn malformed(path: &Path, line: usize, details: impl Into<String>) -> DataError {
    DataError::Malformed {
        file: path.display().to_string(),
        line,
        details: details.into(),
    }
}

/// Sort endpoints, dedupe, drop self-loops.
fn symmetrize(edges: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut set: Vec<(usize, usize)> = edges
        .into_iter()
        .filter(|&(u, v)| u != v)
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect();
    set.sort_unstable();
    set.dedup();
    set
}

/// Load the TSV layout: edges.tsv, features.tsv, labels.tsv, and an
/// optional split.tsv. Node count is the feature-file row count.
pub fn load_node_graph(dir: &Path) -> Result<Graph, DataError> {
    let feat_path = dir.join("features.tsv");
    let mut features: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in read_lines(&feat_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let node: usize = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| malformed(&feat_path, i + 1, "bad node id"))?;
        let vals: Result<Vec<f64>, _> = parts.map(|p| p.parse::<f64>()).collect();
        let vals = vals.map_err(|_| malformed(&feat_path, i + 1, "bad float"))?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(malformed(&feat_path, i + 1, "non-finite feature"));
        }
        match dim {
            None => dim = Some(vals.len()),
            Some(d) if d != vals.len() => {
                return Err(DataError::DimMismatch {
                    node,
                    got: vals.len(),
                    want: d,
                })
            }
            _ => {}
        }
        features.insert(node, vals);
    }
    let n = features.keys().next_back().map_or(0, |k| k + 1);
    let d = dim.unwrap_or(0);
    let feature_rows: Vec<Vec<f64>> = (0..n)
        .map(|i| features.remove(&i).unwrap_or_else(|| vec![0.0; d]))
        .collect();

    let edge_path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (i, line) in read_lines(&edge_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let u: usize = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| malformed(&edge_path, i + 1, "bad endpoint"))?;
        let v: usize = parts
            .next()
            .ok_or_else(|| malformed(&edge_path, i + 1, "missing second endpoint"))?
            .parse()
            .map_err(|_| malformed(&edge_path, i + 1, "bad endpoint"))?;
        if u >= n || v >= n {
            return Err(DataError::BadEndpoint(u.max(v), n));
        }
        edges.push((u, v));
    }
    let edges = symmetrize(edges);

    let label_path = dir.join("labels.tsv");
    let mut labels = vec![-1i64; n];
    for (i, line) in read_lines(&label_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let node: usize = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| malformed(&label_path, i + 1, "bad node id"))?;
        let class: i64 = parts
            .next()
            .ok_or_else(|| malformed(&label_path, i + 1, "missing class"))?
            .parse()
            .map_err(|_| malformed(&label_path, i + 1, "bad class"))?;
        if node >= n {
            return Err(DataError::BadEndpoint(node, n));
        }
        labels[node] = class;
    }

    // split.tsv is optional; callers split unlabeled masks themselves
    let split_path = dir.join("split.tsv");
    let mut train_mask = vec![false; n];
    let mut val_mask = vec![false; n];
    let mut test_mask = vec![false; n];
    let split_lines = if split_path.exists() {
        read_lines(&split_path)?
    } else {
        Vec::new()
    };
    for (i, line) in split_lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let node: usize = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| malformed(&split_path, i + 1, "bad node id"))?;
        if node >= n {
            return Err(DataError::BadEndpoint(node, n));
        }
        match parts
            .next()
            .ok_or_else(|| malformed(&split_path, i + 1, "missing split name"))?
        {
            "train" => train_mask[node] = true,
            "val" => val_mask[node] = true,
            "test" => test_mask[node] = true,
            other => {
                return Err(malformed(
                    &split_path,
                    i + 1,
                    format!("unknown split `{other}`"),
                ))
            }
        }
    }

    let g = Graph {
        n,
        edges,
        features: feature_rows,
        labels,
        train_mask,
        val_mask,
        test_mask,
    };
    g.check()?;
    Ok(g)
}

/// Write a graph back to the four-file layout. Inverse of
/// `load_node_graph` up to line ordering.
pub fn save_node_graph(g: &Graph, dir: &Path) -> Result<(), DataError> {
    let io_err = |p: &Path, source| DataError::Io {
        path: p.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut edges = String::new();
    for &(u, v) in &g.edges {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    fs::write(dir.join("edges.tsv"), edges).map_err(|e| io_err(&dir.join("edges.tsv"), e))?;
    let mut feats = String::new();
    for (i, row) in g.features.iter().enumerate() {
        feats.push_str(&i.to_string());
        for v in row {
            feats.push_str(&format!("\t{v}"));
        }
        feats.push('\n');
    }
    fs::write(dir.join("features.tsv"), feats).map_err(|e| io_err(&dir.join("features.tsv"), e))?;
    let mut labels = String::new();
    for (i, l) in g.labels.iter().enumerate() {
        if *l >= 0 {
            labels.push_str(&format!("{i}\t{l}\n"));
        }
    }
    fs::write(dir.join("labels.tsv"), labels).map_err(|e| io_err(&dir.join("labels.tsv"), e))?;
    let mut split = String::new();
    for i in 0..g.n {
        if g.train_mask[i] {
            split.push_str(&format!("{i}\ttrain\n"));
        } else if g.val_mask[i] {
            split.push_str(&format!("{i}\tval\n"));
        } else if g.test_mask[i] {
            split.push_str(&format!("{i}\ttest\n"));
        }
    }
    fs::write(dir.join("split.tsv"), split).map_err(|e| io_err(&dir.join("split.tsv"), e))?;
    Ok(())
}

/// Load h⟨TAB⟩r⟨TAB⟩t triple files; vocabularies are built from the
/// union of all three splits.
pub fn load_kg(dir: &Path) -> Result<KGDataset, DataError> {
    let mut entities: BTreeMap<String, usize> = BTreeMap::new();
    let mut relations: BTreeMap<String, usize> = BTreeMap::new();
    let mut splits: Vec<Vec<Triple>> = Vec::new();
    let mut raw: Vec<Vec<(String, String, String)>> = Vec::new();
    for file in ["train.tsv", "valid.tsv", "test.tsv"] {
        let path = dir.join(file);
        let mut triples = Vec::new();
        for (i, line) in read_lines(&path)?.iter().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(malformed(&path, i + 1, "expected h\\tr\\tt"));
            }
            triples.push((
                parts[0].to_string(),
                parts[1].to_string(),
                parts[2].to_string(),
            ));
        }
        raw.push(triples);
    }
    for triples in &raw {
        for (h, r, t) in triples {
            let next = entities.len();
            entities.entry(h.clone()).or_insert(next);
            let next = entities.len();
            entities.entry(t.clone()).or_insert(next);
            let next = relations.len();
            relations.entry(r.clone()).or_insert(next);
        }
    }
    for triples in raw {
        splits.push(
            triples
                .into_iter()
                .map(|(h, r, t)| Triple {
                    head: entities[&h],
                    rel: relations[&r],
                    tail: entities[&t],
                })
                .collect(),
        );
    }
    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    let train_set: HashSet<&Triple> = train.iter().collect();
    let leaked = test.iter().filter(|t| train_set.contains(t)).count();
    if leaked > 0 {
        return Err(DataError::Leakage(leaked));
    }
    Ok(KGDataset {
        entities,
        relations,
        train,
        valid,
        test,
    })
}

/// Balanced b-ary tree of the given depth. Labels are node depths;
/// features are a truncated or padded one-hot of the node id plus small
/// seeded noise so no two nodes collide after truncation.
pub fn gen_balanced_tree(
    branching: u64,
    depth: u32,
    feature_dim: usize,
    seed: u64,
) -> Result<Graph, DataError> {
    if branching < 1 || depth < 1 {
        return Err(DataError::Invalid(format!(
            "need b >= 1 and d >= 1, got b={branching}, d={depth}"
        )));
    }
    let mut n_u64: u64 = 0;
    let mut level: u64 = 1;
    for _ in 0..=depth {
        n_u64 = n_u64
            .checked_add(level)
            .ok_or(DataError::TreeOverflow(branching, depth))?;
        level = level
            .checked_mul(branching)
            .ok_or(DataError::TreeOverflow(branching, depth))?;
    }
    if n_u64 > 5_000_000 {
        return Err(DataError::TreeOverflow(branching, depth));
    }
    let n = n_u64 as usize;
    let b = branching as usize;

    let mut edges = Vec::with_capacity(n - 1);
    let mut labels = vec![0i64; n];
    // breadth-first layout: children of node i are b·i+1 .. b·i+b
    let mut level_start = 0usize;
    let mut level_size = 1usize;
    let mut next = 1usize;
    let mut d = 0i64;
    while next < n {
        for parent in level_start..level_start + level_size {
            for _ in 0..b {
                if next >= n {
                    break;
                }
                edges.push((parent, next));
                labels[next] = d + 1;
                next += 1;
            }
        }
        level_start += level_size;
        level_size *= b;
        d += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = (0..n)
        .map(|i| {
            let mut f = vec![0.0; feature_dim];
            if feature_dim > 0 {
                f[i % feature_dim] = 1.0;
                for v in f.iter_mut() {
                    *v += rng.gen_range(-0.01..0.01);
                }
            }
            f
        })
        .collect();

    Ok(Graph {
        n,
        edges,
        features,
        labels,
        train_mask: vec![false; n],
        val_mask: vec![false; n],
        test_mask: vec![false; n],
    })
}

/// Stratified node splits, deterministic per seed. Fractions are
/// (train, val, test) of the labeled nodes per class.
pub fn make_splits(
    graph: &Graph,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<Graph, DataError> {
    let (ft, fv, fs) = fractions;
    let total = ft + fv + fs;
    if !(0.0..=1.0 + 1e-9).contains(&total) || ft < 0.0 || fv < 0.0 || fs < 0.0 {
        return Err(DataError::BadFractions(total));
    }
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in graph.labels.iter().enumerate() {
        if l >= 0 {
            by_class.entry(l).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = graph.clone();
    out.train_mask = vec![false; graph.n];
    out.val_mask = vec![false; graph.n];
    out.test_mask = vec![false; graph.n];
    let slots = [ft, fv, fs].iter().filter(|&&f| f > 0.0).count();
    for (class, mut members) in by_class {
        members.shuffle(&mut rng);
        let m = members.len();
        if m < slots {
            return Err(DataError::TinyClass {
                class,
                members: m,
                slots,
            });
        }
        // cumulative rounding cannot over-allocate and keeps each split
        // within one node of its target
        let b1 = (ft * m as f64).round() as usize;
        let b2 = ((ft + fv) * m as f64).round() as usize;
        let b3 = ((ft + fv + fs) * m as f64).round() as usize;
        for (k, &node) in members.iter().enumerate() {
            if k < b1 {
                out.train_mask[node] = true;
            } else if k < b2 {
                out.val_mask[node] = true;
            } else if k < b3 {
                out.test_mask[node] = true;
            }
        }
    }
    out.check()?;
    Ok(out)
}

/// Edge split for link prediction: positives split 85/5/10 by default,
/// negatives sampled uniformly from non-edges, one per positive.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

pub fn split_edges(
    graph: &Graph,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<EdgeSplit, DataError> {
    let (ft, fv, fs) = fractions;
    if (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(ft + fv + fs));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = graph.edges.clone();
    edges.shuffle(&mut rng);
    let m = edges.len();
    let nv = (fv * m as f64).round() as usize;
    let ns = (fs * m as f64).round() as usize;
    let test_pos: Vec<_> = edges.split_off(m - ns);
    let val_pos: Vec<_> = edges.split_off(edges.len() - nv);
    let train_pos = edges;

    let edge_set: HashSet<(usize, usize)> = graph.edges.iter().copied().collect();
    let mut sample_negs = |count: usize| -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(count);
        let mut seen = HashSet::new();
        while out.len() < count {
            let u = rng.gen_range(0..graph.n);
            let v = rng.gen_range(0..graph.n);
            if u == v {
                continue;
            }
            let e = (u.min(v), u.max(v));
            if edge_set.contains(&e) || seen.contains(&e) {
                continue;
            }
            seen.insert(e);
            out.push(e);
        }
        out
    };
    let val_neg = sample_negs(val_pos.len());
    let test_neg = sample_negs(test_pos.len());
    Ok(EdgeSplit {
        train_pos,
        val_pos,
        test_pos,
        val_neg,
        test_neg,
    })
}

/// BFS distances from a source over the undirected edge list.
pub fn bfs_distances(n: usize, edges: &[(usize, usize)], source: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut dist = vec![usize::MAX; n];
    dist[source] = 0;
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}
