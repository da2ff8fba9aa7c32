//! Reader for the TU benchmark flat-file layout: `DS_A.txt`,
//! `DS_graph_indicator.txt`, `DS_graph_labels.txt` and the optional
//! `DS_node_labels.txt` / `DS_node_attributes.txt`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use graphaug_core::datasets::Dataset;
use graphaug_core::{Graph, LabeledGraph, Matrix};

use crate::error::{Error, Result};

/// Default cap on the one-hot degree features used when a dataset ships
/// neither node labels nor attributes.
pub const DEFAULT_DEGREE_CAP: usize = 64;

#[derive(Clone, Debug)]
pub struct TuDataset {
    pub dataset: Dataset,
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
    /// Original graph label values, ordered; value `i` became label `i + 1`.
    pub label_values: Vec<i64>,
    pub degree_features: bool,
}

struct Lines {
    file: String,
    text: String,
}

impl Lines {
    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file = path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned());
        Ok(Self { file, text })
    }

    /// Non-blank lines with their 1-based line numbers, split on commas.
    fn records(&self) -> impl Iterator<Item = (usize, Vec<&str>)> {
        self.text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
    }

    fn ints(&self) -> Result<Vec<i64>> {
        self.records()
            .map(|(line, fields)| {
                if fields.len() != 1 {
                    return Err(Error::parse(&self.file, line, format!("expected one value, found {}", fields.len())));
                }
                fields[0]
                    .parse::<i64>()
                    .map_err(|_| Error::parse(&self.file, line, format!("`{}` is not an integer", fields[0])))
            })
            .collect()
    }
}

/// Finds the `DS` prefix of the `DS_A.txt` file in `dir`.
pub fn dataset_name(dir: &Path) -> Result<String> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("_A.txt")).map(str::to_owned))
        .collect();
    names.sort();
    names.into_iter().next().ok_or_else(|| Error::io(dir.join("DS_A.txt"), std::io::ErrorKind::NotFound.into()))
}

fn required(dir: &Path, name: &str, suffix: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    if !path.is_file() {
        return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
    }
    Ok(path)
}

fn optional(dir: &Path, name: &str, suffix: &str) -> Option<PathBuf> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    path.is_file().then_some(path)
}

/// Parses the TU dataset in `dir`. Node labels become one-hot columns (in
/// sorted order of the distinct values), attributes are appended as real
/// columns, and graphs without either get one-hot degrees clipped at
/// `degree_cap`. Graph labels are remapped to `1..=k` in sorted order.
pub fn parse_tu_dataset(dir: &Path, degree_cap: usize) -> Result<TuDataset> {
    let name = dataset_name(dir)?;
    let indicator = Lines::read(&required(dir, &name, "graph_indicator")?)?;
    let graph_of = indicator.ints()?;
    let graph_labels = Lines::read(&required(dir, &name, "graph_labels")?)?;
    let raw_labels = graph_labels.ints()?;
    let num_graphs = raw_labels.len();
    let num_nodes = graph_of.len();

    let mut nodes_of: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    for (line, &gid) in indicator.records().map(|(l, _)| l).zip(&graph_of) {
        if gid < 1 || gid as usize > num_graphs {
            return Err(Error::parse(&indicator.file, line, format!("graph id {gid} outside 1..={num_graphs}")));
        }
    }
    for (v, &gid) in graph_of.iter().enumerate() {
        nodes_of[gid as usize - 1].push(v);
    }
    // local index of every global node inside its graph
    let mut local = vec![0usize; num_nodes];
    for nodes in &nodes_of {
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
    }

    let adjacency = Lines::read(&required(dir, &name, "A")?)?;
    let mut edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_graphs];
    let (mut self_loops, mut entries) = (0usize, 0usize);
    for (line, fields) in adjacency.records() {
        if fields.len() != 2 {
            return Err(Error::parse(&adjacency.file, line, format!("expected `u, v`, found {} fields", fields.len())));
        }
        let mut ends = [0usize; 2];
        for (k, f) in fields.iter().enumerate() {
            let x: usize =
                f.parse().map_err(|_| Error::parse(&adjacency.file, line, format!("`{f}` is not a node index")))?;
            if x < 1 || x > num_nodes {
                return Err(Error::parse(&adjacency.file, line, format!("node {x} outside 1..={num_nodes}")));
            }
            ends[k] = x - 1;
        }
        let [u, v] = ends;
        if graph_of[u] != graph_of[v] {
            return Err(Error::parse(
                &adjacency.file,
                line,
                format!("edge joins graphs {} and {}", graph_of[u], graph_of[v]),
            ));
        }
        if u == v {
            self_loops += 1;
            continue;
        }
        entries += 1;
        let (a, b) = (local[u].min(local[v]), local[u].max(local[v]));
        edges[graph_of[u] as usize - 1].insert((a, b));
    }
    if self_loops > 0 {
        log::warn!("{name}: dropped {self_loops} self-loops");
    }
    let unique: usize = edges.iter().map(BTreeSet::len).sum();

    let mut columns: Vec<Vec<f32>> = Vec::new();
    if let Some(path) = optional(dir, &name, "node_labels") {
        let lines = Lines::read(&path)?;
        let labels = lines.ints()?;
        if labels.len() != num_nodes {
            return Err(Error::parse(
                &lines.file,
                labels.len() + 1,
                format!("{} node labels for {num_nodes} nodes", labels.len()),
            ));
        }
        let values: BTreeMap<i64, usize> =
            labels.iter().copied().collect::<BTreeSet<_>>().into_iter().enumerate().map(|(i, v)| (v, i)).collect();
        for _ in 0..values.len() {
            columns.push(vec![0.0; num_nodes]);
        }
        for (v, l) in labels.iter().enumerate() {
            columns[values[l]][v] = 1.0;
        }
    }
    if let Some(path) = optional(dir, &name, "node_attributes") {
        let lines = Lines::read(&path)?;
        let mut rows = 0;
        let first = columns.len();
        for (line, fields) in lines.records() {
            if rows == 0 {
                columns.extend((0..fields.len()).map(|_| vec![0.0; num_nodes]));
            } else if fields.len() != columns.len() - first {
                return Err(Error::parse(&lines.file, line, format!("expected {} attributes", columns.len() - first)));
            }
            if rows >= num_nodes {
                return Err(Error::parse(&lines.file, line, format!("more attribute rows than {num_nodes} nodes")));
            }
            for (k, f) in fields.iter().enumerate() {
                columns[first + k][rows] =
                    f.parse().map_err(|_| Error::parse(&lines.file, line, format!("`{f}` is not a number")))?;
            }
            rows += 1;
        }
        if rows != num_nodes {
            return Err(Error::parse(&lines.file, rows + 1, format!("{rows} attribute rows for {num_nodes} nodes")));
        }
    }
    let degree_features = columns.is_empty();
    if degree_features {
        let mut degree = vec![0usize; num_nodes];
        for (gid, set) in edges.iter().enumerate() {
            for &(a, b) in set {
                degree[nodes_of[gid][a]] += 1;
                degree[nodes_of[gid][b]] += 1;
            }
        }
        let width = degree.iter().copied().max().unwrap_or(0).min(degree_cap) + 1;
        columns = vec![vec![0.0; num_nodes]; width];
        for (v, &d) in degree.iter().enumerate() {
            columns[d.min(degree_cap)][v] = 1.0;
        }
    }
    let dim = columns.len();

    let label_values: Vec<i64> = raw_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut graphs = Vec::with_capacity(num_graphs);
    for (gid, nodes) in nodes_of.iter().enumerate() {
        let mut x = Matrix::zeros(nodes.len(), dim);
        for (i, &v) in nodes.iter().enumerate() {
            for (c, col) in columns.iter().enumerate() {
                x.set(i, c, col[v]);
            }
        }
        let graph = Graph::new(nodes.len(), edges[gid].iter().copied(), x)?;
        let label = label_values.binary_search(&raw_labels[gid]).expect("label value present") + 1;
        graphs.push(LabeledGraph { graph, label });
    }
    let dataset = Dataset::new(name, graphs, label_values.len(), dim)?;
    Ok(TuDataset {
        dataset,
        self_loops_dropped: self_loops,
        duplicate_edges: entries - unique,
        label_values,
        degree_features,
    })
}
