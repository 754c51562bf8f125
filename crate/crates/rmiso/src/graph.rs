//! Undirected graph topologies for random-walk sampling.
//!
//! Graphs are loaded from whitespace-separated edge lists (`u v` per line,
//! 0-based) or produced by the built-in generators `cycle`, `complete`, and
//! `lonely` (a clique of `n - 1` vertices plus one pendant vertex).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph on `n` vertices from an undirected edge list.
    /// Duplicate edges are collapsed; self-loops are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        if n == 0 {
            return Err(Error::config("graph must have at least one vertex"));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::config(format!(
                    "edge ({u}, {v}) out of range for {n} vertices"
                )));
            }
            if u == v {
                return Err(Error::config(format!("self-loop at vertex {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Graph { adj })
    }

    pub fn cycle(n: usize) -> Graph {
        assert!(n >= 2, "cycle graph needs at least 2 vertices");
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n, &edges).expect("cycle edges are valid")
    }

    pub fn complete(n: usize) -> Graph {
        assert!(n >= 2, "complete graph needs at least 2 vertices");
        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Graph::from_edges(n, &edges).expect("complete edges are valid")
    }

    /// Clique on vertices `0..n-1` with vertex `n-1` attached to vertex 0 by
    /// a single edge.
    pub fn lonely(n: usize) -> Graph {
        assert!(n >= 3, "lonely graph needs at least 3 vertices");
        let mut edges = Vec::new();
        for i in 0..(n - 1) {
            for j in (i + 1)..(n - 1) {
                edges.push((i, j));
            }
        }
        edges.push((0, n - 1));
        Graph::from_edges(n, &edges).expect("lonely edges are valid")
    }

    /// Reads an edge list (one `u v` pair per line, 0-based, whitespace
    /// separated; blank lines and `#` comments ignored). Vertex count is
    /// `max index + 1`.
    pub fn from_edge_list_file(path: impl AsRef<Path>) -> Result<Graph> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut edges = Vec::new();
        let mut max_vertex = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: "expected two vertex indices".into(),
                })
                .and_then(|t| {
                    t.parse::<usize>().map_err(|_| Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: format!("invalid vertex index {t:?}"),
                    })
                })
            };
            let u = parse(parts.next())?;
            let v = parse(parts.next())?;
            max_vertex = max_vertex.max(u).max(v);
            edges.push((u, v));
        }
        if edges.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 0,
                message: "edge list is empty".into(),
            });
        }
        Graph::from_edges(max_vertex + 1, &edges)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(|l| l.len()).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &w in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    /// Stationary distribution of the simple random walk: degree / (2 |E|).
    pub fn walk_stationary(&self) -> Vec<f64> {
        let two_e = 2.0 * self.num_edges() as f64;
        (0..self.len()).map(|v| self.degree(v) as f64 / two_e).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn generators_have_expected_degrees() {
        let c = Graph::cycle(5);
        assert!(c.is_connected());
        assert!((0..5).all(|v| c.degree(v) == 2));

        let k = Graph::complete(6);
        assert!((0..6).all(|v| k.degree(v) == 5));

        let l = Graph::lonely(8);
        assert!(l.is_connected());
        assert_eq!(l.degree(7), 1);
        assert_eq!(l.degree(0), 7);
        assert!((1..7).all(|v| l.degree(v) == 6));
    }

    #[test]
    fn disconnected_detected() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!g.is_connected());
    }

    #[test]
    fn self_loop_rejected() {
        assert!(Graph::from_edges(3, &[(0, 0)]).is_err());
    }

    #[test]
    fn edge_list_roundtrip() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# triangle\n0 1\n1 2\n2 0").unwrap();
        let g = Graph::from_edge_list_file(file.path()).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.num_edges(), 3);
        assert!(g.is_connected());
    }
}
