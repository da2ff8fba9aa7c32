use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Colour one-hot occupies the first three feature columns (red, green, blue).
pub const NUM_COLORS: usize = 3;
/// Green is the second feature.
pub const GREEN_COLUMN: usize = 1;

/// Number of 3-cliques, by enumerating node triples `u < v < w` that are
/// pairwise adjacent.
pub fn count_triangles(g: &Graph) -> usize {
    let adj = g.neighbors();
    let mut count = 0;
    for &(u, v) in g.edges() {
        // u < v; count w > v adjacent to both
        let (a, b) = (&adj[u], &adj[v]);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    if a[i] > v {
                        count += 1;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    count
}

/// `true` for every node that belongs to at least one triangle.
pub fn triangle_nodes(g: &Graph) -> Vec<bool> {
    let mut member = vec![false; g.num_nodes()];
    for &(u, v, w) in &triangles(g) {
        member[u] = true;
        member[v] = true;
        member[w] = true;
    }
    member
}

/// `true` for every edge (in `g.edges()` order) that lies on a triangle.
pub fn triangle_edges(g: &Graph) -> Vec<bool> {
    let adj = g.neighbors();
    g.edges().iter().map(|&(u, v)| adj[u].iter().any(|w| adj[v].binary_search(w).is_ok())).collect()
}

/// Would adding the non-edge `(u, v)` create a triangle?
pub fn closes_triangle(g: &Graph, u: usize, v: usize) -> bool {
    let adj = g.neighbors();
    adj[u].iter().any(|w| adj[v].binary_search(w).is_ok())
}

fn triangles(g: &Graph) -> Vec<(usize, usize, usize)> {
    let adj = g.neighbors();
    let mut out = Vec::new();
    for &(u, v) in g.edges() {
        for &w in &adj[u] {
            if w > v && adj[v].binary_search(&w).is_ok() {
                out.push((u, v, w));
            }
        }
    }
    out
}

/// Number of nodes whose colour one-hot marks them green.
///
/// Colour rows must be one-hot over the first [`NUM_COLORS`] columns or
/// entirely zero (a fully masked colour); anything else is an
/// invalid-feature error.
pub fn count_green(g: &Graph) -> Result<usize> {
    if g.feature_dim() < NUM_COLORS {
        return Err(Error::InvalidFeature(format!(
            "colour features need {NUM_COLORS} columns, graph has {}",
            g.feature_dim()
        )));
    }
    let mut green = 0;
    for (v, row) in g.features().iter_rows().enumerate() {
        let colors = &row[..NUM_COLORS];
        let ones = colors.iter().filter(|&&x| x == 1.0).count();
        let zeros = colors.iter().filter(|&&x| x == 0.0).count();
        if ones + zeros != NUM_COLORS || ones > 1 {
            return Err(Error::InvalidFeature(format!("node {v} colour row {colors:?} is not one-hot")));
        }
        if colors[GREEN_COLUMN] == 1.0 {
            green += 1;
        }
    }
    Ok(green)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn colored(colors: &[usize]) -> Graph {
        let mut x = Matrix::zeros(colors.len(), 4);
        for (v, &c) in colors.iter().enumerate() {
            x.set(v, c, 1.0);
            x.set(v, 3, 0.37);
        }
        Graph::new(colors.len(), [], x).unwrap()
    }

    #[test]
    fn triangle_examples() {
        assert_eq!(count_triangles(&Graph::complete(3, 1)), 1);
        assert_eq!(count_triangles(&Graph::complete(4, 1)), 4);
        assert_eq!(count_triangles(&Graph::complete(6, 1)), 20);
        let path = Graph::unfeatured(3, [(0, 1), (1, 2)], 1).unwrap();
        assert_eq!(count_triangles(&path), 0);
        assert!(!closes_triangle(&Graph::unfeatured(3, [(0, 1)], 1).unwrap(), 0, 2));
        assert!(closes_triangle(&path, 0, 2));
    }

    #[test]
    fn triangle_membership() {
        // triangle 0-1-2 with a pendant 3 on node 2
        let g = Graph::unfeatured(4, [(0, 1), (1, 2), (0, 2), (2, 3)], 1).unwrap();
        assert_eq!(triangle_nodes(&g), vec![true, true, true, false]);
        assert_eq!(triangle_edges(&g), vec![true, true, true, false]);
    }

    #[test]
    fn green_examples() {
        assert_eq!(count_green(&colored(&[1, 1, 1, 1, 1])).unwrap(), 5);
        assert_eq!(count_green(&colored(&[0, 2, 0])).unwrap(), 0);
        assert_eq!(count_green(&colored(&[0, 1, 2, 1, 0, 1, 2])).unwrap(), 3);
    }

    #[test]
    fn green_rejects_malformed_colors() {
        let mut x = Matrix::zeros(1, 4);
        x.set(0, 0, 1.0);
        x.set(0, 1, 1.0);
        assert!(matches!(count_green(&Graph::new(1, [], x).unwrap()), Err(Error::InvalidFeature(_))));
        let mut x = Matrix::zeros(1, 4);
        x.set(0, 1, 0.5);
        assert!(count_green(&Graph::new(1, [], x).unwrap()).is_err());
        assert!(count_green(&Graph::unfeatured(1, [], 2).unwrap()).is_err());
        // a fully masked colour is simply not green
        assert_eq!(count_green(&Graph::unfeatured(2, [], 4).unwrap()).unwrap(), 0);
    }
}
