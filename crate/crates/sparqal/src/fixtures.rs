//! Bundled fixture graphs and deterministic random-graph generation.
//!
//! The generators return both N-Triples text and the raw edge list so tests
//! can feed the same graph to the engine and to an independent oracle.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::fmt::Write;

/// Citation-network fixture: five articles, five citation edges, typed and
/// tagged with a topic, plus three authors.
pub fn zika_fig2() -> &'static str {
    include_str!("../assets/fixtures/zika.nt")
}

/// A 6x6 metro grid with row and column lines.
pub fn metro_grid() -> &'static str {
    include_str!("../assets/fixtures/metro_grid.nt")
}

pub const EDGE_PRED: &str = "http://example.org/p/edge";
pub const LABEL_PRED: &str = "http://www.w3.org/2000/01/rdf-schema#label";
pub const GRAPH_NS: &str = "http://example.org/g/";

pub fn node_iri(i: usize) -> String {
    format!("{GRAPH_NS}n{i}")
}

/// A generated digraph: its edge list and its N-Triples rendering.
#[derive(Debug, Clone)]
pub struct GeneratedGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub triples: String,
}

impl GeneratedGraph {
    fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut triples = String::new();
        for &(u, v) in &edges {
            writeln!(triples, "<{}> <{EDGE_PRED}> <{}> .", node_iri(u), node_iri(v)).unwrap();
        }
        GeneratedGraph { n, edges, triples }
    }

    /// Nodes incident to at least one edge, which is the node set the
    /// procedures operate on.
    pub fn touched_nodes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        for &(u, v) in &self.edges {
            seen[u] = true;
            seen[v] = true;
        }
        (0..self.n).filter(|&i| seen[i]).collect()
    }

    /// N-Triples with an `rdfs:label` per touched node. `uniform` gives every
    /// node the same label, otherwise nodes are labelled by their index
    /// modulo `classes`.
    pub fn with_labels(&self, uniform: bool, classes: usize) -> String {
        let mut out = self.triples.clone();
        for i in self.touched_nodes() {
            let label = if uniform {
                "L".to_string()
            } else {
                format!("L{}", i % classes.max(1))
            };
            writeln!(out, "<{}> <{LABEL_PRED}> \"{label}\" .", node_iri(i)).unwrap();
        }
        out
    }
}

/// Erdos-Renyi-style digraph without self loops, with at least one edge.
pub fn random_digraph(seed: u64, n: usize, edge_prob: f64) -> GeneratedGraph {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random_bool(edge_prob) {
                edges.push((u, v));
            }
        }
    }
    if edges.is_empty() && n >= 2 {
        edges.push((0, 1));
    }
    GeneratedGraph::from_edges(n, edges)
}

/// Directed path 0 -> 1 -> ... -> n-1 (diameter n-1).
pub fn path_graph(n: usize) -> GeneratedGraph {
    GeneratedGraph::from_edges(n, (1..n).map(|i| (i - 1, i)).collect())
}

/// Directed cycle over n nodes.
pub fn cycle_graph(n: usize) -> GeneratedGraph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    if n > 1 {
        edges.push((n - 1, 0));
    }
    GeneratedGraph::from_edges(n, edges)
}

/// Two disjoint directed triangles.
pub fn two_triangles() -> GeneratedGraph {
    GeneratedGraph::from_edges(
        6,
        vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)],
    )
}

/// A reified weighted digraph for the weighted shortest-path variant.
pub const EDGE_SRC_PRED: &str = "http://example.org/p/src";
pub const EDGE_DST_PRED: &str = "http://example.org/p/dst";
pub const WEIGHT_PRED: &str = "http://example.org/p/weight";

pub fn weighted_triples(edges: &[(usize, usize, u64)]) -> String {
    let mut out = String::new();
    for (i, &(u, v, w)) in edges.iter().enumerate() {
        let e = format!("http://example.org/g/e{i}");
        writeln!(out, "<{e}> <{EDGE_SRC_PRED}> <{}> .", node_iri(u)).unwrap();
        writeln!(out, "<{e}> <{EDGE_DST_PRED}> <{}> .", node_iri(v)).unwrap();
        writeln!(out, "<{e}> <{WEIGHT_PRED}> \"{w}.0\"^^<http://www.w3.org/2001/XMLSchema#decimal> .").unwrap();
    }
    out
}
