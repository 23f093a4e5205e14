//! Shared test infrastructure: independent oracles and run helpers.
//!
//! Every oracle here is implemented directly over edge lists, with no code
//! shared with the interpreter or the templates it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use sparqal::backend::{Dataset, RdfFormat};
use sparqal::fixtures::{node_iri, GeneratedGraph};
use sparqal::interpreter::{run_procedure, RunConfig, RunTrace};
use sparqal::parser::parse_procedure;
use sparqal::solutions::SolutionSequence;
use sparqal::stdlib::tm::{TapeSymbol, TmDirection, TuringMachineSpec};
use sparqal::stdlib::{self};
use sparqal::term::RdfTerm;

pub fn dataset_from(triples: &str) -> Dataset {
    let mut ds = Dataset::empty().unwrap();
    ds.load_reader("test.nt", RdfFormat::NTriples, triples.as_bytes())
        .unwrap();
    ds
}

pub fn run_source(ds: &Dataset, source: &str, cfg: &RunConfig) -> (SolutionSequence, RunTrace) {
    let ast = parse_procedure(source).unwrap_or_else(|e| panic!("{e}\n{source}"));
    run_procedure(&ast, ds, cfg).unwrap_or_else(|e| panic!("{e}\n{source}"))
}

pub fn run_stdlib(
    ds: &Dataset,
    name: &str,
    params: &[(&str, &str)],
    cfg: &RunConfig,
) -> (SolutionSequence, RunTrace) {
    let params: BTreeMap<String, String> = params
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let source = stdlib::get_procedure(name, &params).unwrap();
    run_source(ds, &source, cfg)
}

/// Extracts `(iri-of var_a, f64-of var_b)` pairs from a sequence.
pub fn iri_number_pairs(seq: &SolutionSequence, iri_var: &str, num_var: &str) -> HashMap<String, f64> {
    let mut out = HashMap::new();
    for row in seq.iter() {
        let iri = match row.get(iri_var) {
            Some(RdfTerm::Iri(iri)) => iri.clone(),
            other => panic!("expected IRI for ?{iri_var}, got {other:?}"),
        };
        let value = row
            .get(num_var)
            .and_then(|t| t.as_f64())
            .unwrap_or_else(|| panic!("expected number for ?{num_var}"));
        out.insert(iri, value);
    }
    out
}

/// Extracts `(iri, string)` pairs, e.g. component or community labels.
pub fn iri_string_pairs(seq: &SolutionSequence, iri_var: &str, str_var: &str) -> HashMap<String, String> {
    let mut out = HashMap::new();
    for row in seq.iter() {
        let iri = match row.get(iri_var) {
            Some(RdfTerm::Iri(iri)) => iri.clone(),
            other => panic!("expected IRI for ?{iri_var}, got {other:?}"),
        };
        let value = match row.get(str_var) {
            Some(RdfTerm::Literal { lexical, .. }) => lexical.clone(),
            other => panic!("expected literal for ?{str_var}, got {other:?}"),
        };
        out.insert(iri, value);
    }
    out
}

pub fn iri_set(seq: &SolutionSequence, var: &str) -> HashSet<String> {
    seq.iter()
        .filter_map(|row| match row.get(var) {
            Some(RdfTerm::Iri(iri)) => Some(iri.clone()),
            _ => None,
        })
        .collect()
}

/// Canonicalizes a labelling into a partition keyed by the smallest member,
/// so two labellings can be compared as partitions.
pub fn partition_of<L: Clone + Eq + std::hash::Hash>(labels: &HashMap<String, L>) -> BTreeMap<String, Vec<String>> {
    let mut classes: HashMap<&L, Vec<String>> = HashMap::new();
    for (node, label) in labels {
        classes.entry(label).or_default().push(node.clone());
    }
    let mut out = BTreeMap::new();
    for (_, mut members) in classes {
        members.sort();
        out.insert(members[0].clone(), members);
    }
    out
}

// ---------------------------------------------------------------------------
// Graph oracles. All operate on dedup'd directed edge lists over 0..n.

pub fn dedup_edges(graph: &GeneratedGraph) -> Vec<(usize, usize)> {
    let set: HashSet<(usize, usize)> = graph.edges.iter().copied().collect();
    let mut edges: Vec<_> = set.into_iter().collect();
    edges.sort();
    edges
}

fn out_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
    }
    adj
}

fn sym_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<HashSet<usize>> {
    let mut adj = vec![HashSet::new(); n];
    for &(u, v) in edges {
        adj[u].insert(v);
        adj[v].insert(u);
    }
    adj
}

/// BFS distances from `source` along directed edges; unreached nodes absent.
pub fn bfs_oracle(graph: &GeneratedGraph, source: usize) -> HashMap<usize, u64> {
    let edges = dedup_edges(graph);
    let adj = out_adjacency(graph.n, &edges);
    let mut dist = HashMap::new();
    dist.insert(source, 0u64);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for &v in &adj[u] {
            if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(v) {
                slot.insert(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Dijkstra over reified weighted edges.
pub fn dijkstra_oracle(n: usize, edges: &[(usize, usize, u64)], source: usize) -> HashMap<usize, u64> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        adj[u].push((v, w));
    }
    let mut dist: HashMap<usize, u64> = HashMap::new();
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(std::cmp::Reverse((0u64, source)));
    while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
        if dist.contains_key(&u) {
            continue;
        }
        dist.insert(u, d);
        for &(v, w) in &adj[u] {
            if !dist.contains_key(&v) {
                heap.push(std::cmp::Reverse((d + w, v)));
            }
        }
    }
    dist
}

/// Per-iteration PageRank vectors with uniform redistribution of the rank
/// mass not shared along edges (dangling mass plus the undamped remainder).
/// Nodes are the edge-touched nodes only. Returns `iterations + 1` vectors,
/// the first being the uniform initial assignment.
pub fn pagerank_oracle(
    graph: &GeneratedGraph,
    damping: f64,
    iterations: usize,
) -> Vec<HashMap<usize, f64>> {
    let edges = dedup_edges(graph);
    let nodes = graph.touched_nodes();
    let n = nodes.len() as f64;
    let adj = out_adjacency(graph.n, &edges);
    let mut rank: HashMap<usize, f64> = nodes.iter().map(|&v| (v, 1.0 / n)).collect();
    let mut history = vec![rank.clone()];
    for _ in 0..iterations {
        let mut rank_edge: HashMap<usize, f64> = HashMap::new();
        for &u in &nodes {
            let degree = adj[u].len();
            if degree > 0 {
                let share = damping * rank[&u] / degree as f64;
                for &v in &adj[u] {
                    *rank_edge.entry(v).or_insert(0.0) += share;
                }
            }
        }
        let unshared = 1.0 - rank_edge.values().sum::<f64>();
        let mut next = HashMap::new();
        for &v in &nodes {
            next.insert(v, rank_edge.get(&v).copied().unwrap_or(0.0) + unshared / n);
        }
        rank = next;
        history.push(rank.clone());
    }
    history
}

/// Weakly connected components by union-find; returns the partition.
pub fn wcc_oracle(graph: &GeneratedGraph) -> BTreeMap<String, Vec<String>> {
    let mut parent: Vec<usize> = (0..graph.n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for &(u, v) in &graph.edges {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
        }
    }
    let mut labels = HashMap::new();
    for v in graph.touched_nodes() {
        let root = find(&mut parent, v);
        labels.insert(node_iri(v), root);
    }
    partition_of(&labels)
}

/// Colour-refinement partitions after each round, starting from the given
/// labels. Neighbourhoods are the distinct symmetric closure.
pub fn wl_oracle(
    graph: &GeneratedGraph,
    initial: &HashMap<usize, String>,
    rounds: usize,
) -> Vec<BTreeMap<String, Vec<String>>> {
    let edges = dedup_edges(graph);
    let adj = sym_adjacency(graph.n, &edges);
    let nodes = graph.touched_nodes();
    let mut labels: HashMap<usize, u64> = HashMap::new();
    let mut intern: BTreeMap<String, u64> = BTreeMap::new();
    for &v in &nodes {
        let next = intern.len() as u64;
        let id = *intern.entry(initial[&v].clone()).or_insert(next);
        labels.insert(v, id);
    }
    let mut history = Vec::new();
    for _ in 0..rounds {
        let mut signatures: BTreeMap<(u64, Vec<u64>), u64> = BTreeMap::new();
        let mut next_labels = HashMap::new();
        for &v in &nodes {
            let mut neighbour_labels: Vec<u64> = adj[v].iter().map(|&u| labels[&u]).collect();
            neighbour_labels.sort_unstable();
            let signature = (labels[&v], neighbour_labels);
            let fresh = signatures.len() as u64;
            let id = *signatures.entry(signature).or_insert(fresh);
            next_labels.insert(v, id);
        }
        labels = next_labels;
        let named: HashMap<String, u64> = labels.iter().map(|(&v, &l)| (node_iri(v), l)).collect();
        history.push(partition_of(&named));
    }
    history
}

/// Synchronous label propagation: each round a node adopts the most frequent
/// label among its in- and out-neighbours (a two-way edge counts twice),
/// smallest label on ties; isolated nodes keep their label.
pub fn cdlp_oracle(graph: &GeneratedGraph, rounds: usize) -> HashMap<String, String> {
    let edges = dedup_edges(graph);
    let nodes = graph.touched_nodes();
    let mut labels: HashMap<usize, String> = nodes.iter().map(|&v| (v, node_iri(v))).collect();
    for _ in 0..rounds {
        let mut incoming: HashMap<usize, Vec<String>> = HashMap::new();
        for &(u, v) in &edges {
            incoming.entry(v).or_default().push(labels[&u].clone());
            incoming.entry(u).or_default().push(labels[&v].clone());
        }
        let mut next = HashMap::new();
        for &v in &nodes {
            let received = incoming.get(&v);
            let label = match received {
                None => labels[&v].clone(),
                Some(received) => {
                    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
                    for l in received {
                        *counts.entry(l).or_insert(0) += 1;
                    }
                    let best = counts.values().copied().max().unwrap();
                    counts
                        .iter()
                        .filter(|(_, &c)| c == best)
                        .map(|(l, _)| (*l).clone())
                        .min()
                        .unwrap()
                }
            };
            next.insert(v, label);
        }
        labels = next;
    }
    labels.into_iter().map(|(v, l)| (node_iri(v), l)).collect()
}

/// Local clustering coefficient per Graphalytics: directed edges between
/// distinct neighbours over k(k-1).
pub fn lcc_oracle(graph: &GeneratedGraph) -> HashMap<String, f64> {
    let edges = dedup_edges(graph);
    let edge_set: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let adj = sym_adjacency(graph.n, &edges);
    let mut out = HashMap::new();
    for v in graph.touched_nodes() {
        let mut neighbours: Vec<usize> = adj[v].iter().copied().filter(|&u| u != v).collect();
        neighbours.sort_unstable();
        let k = neighbours.len();
        let coef = if k < 2 {
            0.0
        } else {
            let mut t = 0usize;
            for &x in &neighbours {
                for &y in &neighbours {
                    if x != y && edge_set.contains(&(x, y)) {
                        t += 1;
                    }
                }
            }
            t as f64 / (k as f64 * (k as f64 - 1.0))
        };
        out.insert(node_iri(v), coef);
    }
    out
}

/// Nodes reachable from `source` (inclusive) in the symmetric-free directed
/// sense, for frontier-procedure checks.
pub fn reachable_oracle(graph: &GeneratedGraph, source: usize) -> HashSet<usize> {
    bfs_oracle(graph, source).into_keys().collect()
}

// ---------------------------------------------------------------------------
// Direct Turing-machine simulation.

/// Runs the machine on its input; `true` means it halts in the final state.
/// Panics if the machine exceeds `max_steps`, which bundled machines never do.
pub fn tm_simulate(spec: &TuringMachineSpec, max_steps: usize) -> bool {
    let table: HashMap<(&str, TapeSymbol), (&str, TapeSymbol, TmDirection)> = spec
        .transitions
        .iter()
        .map(|t| ((t.from_state, t.read), (t.to_state, t.write, t.direction)))
        .collect();
    let mut tape: HashMap<i64, TapeSymbol> = spec
        .input
        .chars()
        .enumerate()
        .map(|(i, c)| {
            (
                i as i64,
                if c == '0' { TapeSymbol::Zero } else { TapeSymbol::One },
            )
        })
        .collect();
    let mut head: i64 = 0;
    let mut state = spec.initial_state;
    for _ in 0..max_steps {
        let read = tape.get(&head).copied().unwrap_or(TapeSymbol::Blank);
        match table.get(&(state, read)) {
            None => return state == spec.final_state,
            Some(&(next, write, direction)) => {
                tape.insert(head, write);
                head += match direction {
                    TmDirection::Left => -1,
                    TmDirection::Right => 1,
                };
                state = next;
            }
        }
    }
    panic!("machine {} exceeded {max_steps} steps", spec.name);
}

/// All binary words with length in `0..=max_len`.
pub fn binary_words(max_len: usize) -> Vec<String> {
    let mut words = vec![String::new()];
    for len in 1..=max_len {
        for bits in 0..(1u64 << len) {
            let word: String = (0..len)
                .map(|i| if bits >> (len - 1 - i) & 1 == 1 { '1' } else { '0' })
                .collect();
            words.push(word);
        }
    }
    words
}
