//! Line-oriented dataset format.
//!
//! ```text
//! # graphaug dataset v1
//! dataset colors 2000 10 4      name, graphs, classes, feature columns
//! graph 5 4 3                   nodes, edges, label
//! e 0 1                         one line per edge
//! x 0 1 0 0.25                  one line per node
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use graphaug_core::datasets::Dataset;
use graphaug_core::{Graph, LabeledGraph, Matrix};

use crate::error::{Error, Result};

pub const HEADER: &str = "# graphaug dataset v1";

pub fn to_text(dataset: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "dataset {} {} {} {}", dataset.name, dataset.len(), dataset.num_classes, dataset.feature_dim);
    for lg in &dataset.graphs {
        let g = &lg.graph;
        let _ = writeln!(out, "graph {} {} {}", g.num_nodes(), g.num_edges(), lg.label);
        for &(u, v) in g.edges() {
            let _ = writeln!(out, "e {u} {v}");
        }
        for row in g.features().iter_rows() {
            out.push('x');
            for x in row {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
    }
    out
}

struct Cursor<'a> {
    file: &'a str,
    lines: std::iter::Skip<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        loop {
            let Some((i, line)) = self.lines.next() else {
                return Err(Error::parse(self.file, 0, format!("unexpected end of file, expected `{tag}`")));
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0].starts_with('#') {
                continue;
            }
            if fields[0] != tag {
                return Err(Error::parse(self.file, i + 1, format!("expected `{tag}`, found `{}`", fields[0])));
            }
            return Ok((i + 1, fields[1..].to_vec()));
        }
    }

    fn num<T: std::str::FromStr>(&self, line: usize, field: &str) -> Result<T> {
        field.parse().map_err(|_| Error::parse(self.file, line, format!("`{field}` is not a number")))
    }
}

/// Parses [`to_text`] output. `file` names the source in error messages.
pub fn from_text(text: &str, file: &str) -> Result<Dataset> {
    if text.lines().next() != Some(HEADER) {
        return Err(Error::parse(file, 1, format!("missing `{HEADER}` header")));
    }
    let mut c = Cursor { file, lines: text.lines().enumerate().skip(1) };
    let (line, head) = c.next("dataset")?;
    if head.len() != 4 {
        return Err(Error::parse(file, line, "expected `dataset NAME GRAPHS CLASSES FEATURES`"));
    }
    let name = head[0].to_owned();
    let (n, classes, dim): (usize, usize, usize) =
        (c.num(line, head[1])?, c.num(line, head[2])?, c.num(line, head[3])?);
    let mut graphs = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, g) = c.next("graph")?;
        if g.len() != 3 {
            return Err(Error::parse(file, line, "expected `graph NODES EDGES LABEL`"));
        }
        let (nodes, m, label): (usize, usize, usize) = (c.num(line, g[0])?, c.num(line, g[1])?, c.num(line, g[2])?);
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (line, e) = c.next("e")?;
            if e.len() != 2 {
                return Err(Error::parse(file, line, "expected `e U V`"));
            }
            edges.push((c.num::<usize>(line, e[0])?, c.num::<usize>(line, e[1])?));
        }
        let mut x = Vec::with_capacity(nodes * dim);
        for _ in 0..nodes {
            let (line, row) = c.next("x")?;
            if row.len() != dim {
                return Err(Error::parse(file, line, format!("expected {dim} features, found {}", row.len())));
            }
            for f in row {
                x.push(c.num::<f32>(line, f)?);
            }
        }
        let graph = Graph::new(nodes, edges, Matrix::from_vec(nodes, dim, x)?)
            .map_err(|e| Error::parse(file, line, e.to_string()))?;
        graphs.push(LabeledGraph { graph, label });
    }
    let dataset = Dataset::new(name, graphs, classes, dim)?;
    if let Some(kind) = dataset.synthetic_kind() {
        for (i, lg) in dataset.graphs.iter().enumerate() {
            let truth = kind.oracle(&lg.graph)?;
            if truth != lg.label {
                return Err(Error::parse(
                    file,
                    0,
                    format!("graph {i} is labelled {} but its {} count is {truth}", lg.label, kind.name()),
                ));
            }
        }
    }
    Ok(dataset)
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    fs::write(path, to_text(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphaug_core::datasets::{gen_colors, gen_triangles, SyntheticConfig};

    #[test]
    fn round_trip_is_exact() {
        for ds in [
            gen_colors(&SyntheticConfig::with_size(20), 3).unwrap(),
            gen_triangles(&SyntheticConfig::with_size(20), 3).unwrap(),
        ] {
            let text = to_text(&ds);
            assert_eq!(from_text(&text, "mem").unwrap(), ds);
        }
    }

    #[test]
    fn mislabelled_graphs_are_rejected() {
        let ds = gen_triangles(&SyntheticConfig::with_size(3), 4).unwrap();
        let text = to_text(&ds);
        let first = ds.graphs[0].graph.num_nodes();
        let label = ds.graphs[0].label;
        let wrong = if label == 1 { 2 } else { 1 };
        let edges = ds.graphs[0].graph.num_edges();
        let bad =
            text.replacen(&format!("graph {first} {edges} {label}"), &format!("graph {first} {edges} {wrong}"), 1);
        let err = from_text(&bad, "mem").unwrap_err().to_string();
        assert!(err.contains("triangles count"), "{err}");
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = from_text("# graphaug dataset v1\ndataset colors 1 10 4\ngraph 1 0 q\n", "f.txt").unwrap_err();
        assert_eq!(err.to_string(), "f.txt:3: `q` is not a number");
    }
}
