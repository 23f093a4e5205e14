//! Interpreter semantics against the embedded engine.

mod common;

use common::*;
use sparqal::backend::Dataset;
use sparqal::fixtures::{self, node_iri, EDGE_PRED};
use sparqal::interpreter::{
    instantiate_query, run_procedure, run_procedure_with_observer, RunConfig, RunError,
    RunObserver, StatementRecord,
};
use sparqal::parser::{parse_procedure, QueryKind, QueryTemplate, Span, StatementKind};
use sparqal::solutions::{
    sequences_equal_as_multisets, Environment, SolutionMapping, SolutionSequence,
};
use sparqal::term::RdfTerm;

const WDT_CITE: &str = "http://www.wikidata.org/prop/direct/P2860";

fn zika_dataset() -> Dataset {
    dataset_from(fixtures::zika_fig2())
}

fn seq_of(vars: &[&str], rows: Vec<Vec<(&str, RdfTerm)>>) -> SolutionSequence {
    SolutionSequence::from_rows(
        vars.iter().map(|v| v.to_string()).collect(),
        rows.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect::<SolutionMapping>()
            })
            .collect(),
    )
}

#[test]
fn instantiate_single_site() {
    let tpl = QueryTemplate::parse("SELECT ?s WHERE { { QVALUES(r) } }", QueryKind::Select).unwrap();
    let mut env = Environment::new();
    env.assign("r", seq_of(&["s"], vec![vec![("s", RdfTerm::iri("http://e/a"))]]));
    let text = instantiate_query(&tpl, &env).unwrap();
    assert_eq!(text, "SELECT ?s WHERE { { VALUES (?s) { (<http://e/a>) } } }");
}

#[test]
fn instantiate_without_sites_is_identity() {
    let raw = "SELECT ?s WHERE { ?s ?p ?o . # QVALUES(x) in comment\n }";
    let tpl = QueryTemplate::parse(raw, QueryKind::Select).unwrap();
    let text = instantiate_query(&tpl, &Environment::new()).unwrap();
    assert_eq!(text, raw);
}

#[test]
fn instantiate_substitutes_every_site_afresh() {
    let tpl = QueryTemplate::parse(
        "SELECT ?s WHERE { { QVALUES(a) } UNION { QVALUES(a) } }",
        QueryKind::Select,
    )
    .unwrap();
    let mut env = Environment::new();
    env.assign("a", seq_of(&["s"], vec![vec![("s", RdfTerm::integer(1))]]));
    let text = instantiate_query(&tpl, &env).unwrap();
    assert_eq!(text.matches("VALUES (?s) { (\"1\"").count(), 2);
}

#[test]
fn trivial_values_procedure() {
    let ds = Dataset::empty().unwrap();
    let (seq, _) = run_source(
        &ds,
        "LET x = (SELECT * WHERE { VALUES (?a) { (1) } });\nRETURN(x);",
        &RunConfig::default(),
    );
    let rows: Vec<_> = seq.iter().collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].get("a"), Some(&RdfTerm::integer(1)));
}

#[test]
fn fig1_node_count_on_fixture_is_five() {
    let ds = zika_dataset();
    let source = format!(
        "LET zika = (SELECT ?node ?cite WHERE {{ ?node <{WDT_CITE}> ?cite }});\n\
         LET nodes = (SELECT DISTINCT ?node WHERE {{ {{ QVALUES(zika) }} UNION {{ SELECT (?c AS ?node) WHERE {{ {{ SELECT (?cite AS ?c) WHERE {{ QVALUES(zika) }} }} }} }} }});\n\
         LET n = (SELECT (COUNT(*) AS ?n) WHERE {{ QVALUES(nodes) }});\n\
         RETURN(n);"
    );
    let (seq, _) = run_source(&ds, &source, &RunConfig::default());
    let rows: Vec<_> = seq.iter().collect();
    assert_eq!(rows[0].get("n"), Some(&RdfTerm::integer(5)));
}

#[test]
fn reassignment_replaces_previous_binding() {
    let ds = Dataset::empty().unwrap();
    let (seq, _) = run_source(
        &ds,
        "LET x = (SELECT * WHERE { VALUES (?a) { (1) } });\n\
         LET x = (SELECT * WHERE { VALUES (?a) { (2) (3) } });\n\
         RETURN(x);",
        &RunConfig::default(),
    );
    let values: Vec<_> = seq.iter().map(|r| r.get("a").cloned().unwrap()).collect();
    assert_eq!(values, vec![RdfTerm::integer(2), RdfTerm::integer(3)]);
}

#[test]
fn times_loop_runs_exactly_t_iterations() {
    let ds = Dataset::empty().unwrap();
    let source = "LET x = (SELECT * WHERE { VALUES (?a) { (0) } });\n\
                  DO ( LET x = (SELECT ((?a0 + 1) AS ?a) WHERE { { SELECT (?a AS ?a0) WHERE { QVALUES(x) } } }); ) WHILE (TIMES 10);\n\
                  RETURN(x);";
    let (seq, trace) = run_source(&ds, source, &RunConfig::default());
    let rows: Vec<_> = seq.iter().collect();
    assert_eq!(rows[0].get("a"), Some(&RdfTerm::integer(10)));
    assert_eq!(trace.loops.len(), 1);
    assert_eq!(trace.loops[0].iterations, 10);
    // one record per body statement per iteration, plus the initial LET
    assert_eq!(trace.statements.len(), 11);
}

#[test]
fn immediate_fixpoint_runs_body_once() {
    let ds = Dataset::empty().unwrap();
    let source = "LET x = (SELECT * WHERE { VALUES (?a) { (7) } });\n\
                  DO ( LET x = (SELECT * WHERE { VALUES (?a) { (7) } }); ) WHILE (FIXPOINT(x));\n\
                  RETURN(x);";
    let (_, trace) = run_source(&ds, source, &RunConfig::default());
    assert_eq!(trace.loops[0].iterations, 1);
}

#[test]
fn fixpoint_ignores_duplicates_and_order() {
    let ds = Dataset::empty().unwrap();
    // The body produces the same SET with different multiplicity each pass.
    let source = "LET x = (SELECT * WHERE { VALUES (?a) { (1) (1) } });\n\
                  DO ( LET x = (SELECT * WHERE { VALUES (?a) { (1) (1) (1) } }); ) WHILE (FIXPOINT(x));\n\
                  RETURN(x);";
    let (_, trace) = run_source(&ds, source, &RunConfig::default());
    assert_eq!(trace.loops[0].iterations, 1);
}

#[test]
fn ask_condition_terminates_on_true() {
    let ds = Dataset::empty().unwrap();
    let source = "LET x = (SELECT * WHERE { VALUES (?a) { (0) } });\n\
                  DO ( LET x = (SELECT ((?a0 + 1) AS ?a) WHERE { { SELECT (?a AS ?a0) WHERE { QVALUES(x) } } }); ) WHILE (ASK { QVALUES(x) FILTER(?a >= 3) });\n\
                  RETURN(x);";
    let (seq, trace) = run_source(&ds, source, &RunConfig::default());
    let rows: Vec<_> = seq.iter().collect();
    assert_eq!(rows[0].get("a"), Some(&RdfTerm::integer(3)));
    assert_eq!(trace.loops[0].iterations, 3);
}

#[test]
fn loop_guard_stops_nonterminating_procedures() {
    let ds = Dataset::empty().unwrap();
    let source = "LET x = (SELECT * WHERE { VALUES (?a) { (0) } });\n\
                  DO ( LET x = (SELECT ((?a0 + 1) AS ?a) WHERE { { SELECT (?a AS ?a0) WHERE { QVALUES(x) } } }); ) WHILE (FIXPOINT(x));\n\
                  RETURN(x);";
    let ast = parse_procedure(source).unwrap();
    let cfg = RunConfig {
        max_loop_iterations: Some(25),
        ..RunConfig::default()
    };
    match run_procedure(&ast, &ds, &cfg) {
        Err(RunError::LoopGuardExceeded { iterations, .. }) => assert_eq!(iterations, 25),
        other => panic!("expected guard error, got {other:?}"),
    }
}

#[test]
fn example1_loop_computes_transitive_closure_of_citations() {
    // The citation fixture reinterpreted as an adjacency graph, seeded at a4.
    let ds = zika_dataset();
    let seed = "http://example.org/zika/a4";
    let source = format!(
        "LET reachable = (SELECT ?s WHERE {{ <{seed}> <{WDT_CITE}> ?s }});\n\
         DO (\n\
           LET adjacent = (SELECT ?s WHERE {{ ?prev <{WDT_CITE}> ?s . {{ SELECT (?s AS ?prev) WHERE {{ QVALUES(reachable) }} }} }});\n\
           LET reachable = (SELECT DISTINCT ?s WHERE {{ {{ QVALUES(adjacent) }} UNION {{ QVALUES(reachable) }} }});\n\
         ) WHILE ( FIXPOINT(reachable) );\n\
         RETURN(reachable);"
    );
    let (seq, _) = run_source(&ds, &source, &RunConfig::default());
    // a4 -> {a1, a5}, a1 -> a5; transitive closure from a4 is {a1, a5}.
    let got = iri_set(&seq, "s");
    let expect: std::collections::HashSet<String> = ["a1", "a5"]
        .iter()
        .map(|a| format!("http://example.org/zika/{a}"))
        .collect();
    assert_eq!(got, expect);
}

struct RankWatcher {
    sums: Vec<f64>,
}

impl RunObserver for RankWatcher {
    fn after_loop_iteration(&mut self, _span: Span, _iteration: u64, env: &Environment) {
        if let Some(rank) = env.get("rank") {
            let sum: f64 = rank
                .iter()
                .filter_map(|row| row.get("rank").and_then(|t| t.as_f64()))
                .sum();
            self.sums.push(sum);
        }
    }
}

#[test]
fn fig1_loop_conserves_total_rank() {
    let ds = zika_dataset();
    let mut params = std::collections::BTreeMap::new();
    params.insert("iterations".to_string(), "10".to_string());
    let source = sparqal::stdlib::get_procedure("zika-pindex", &params).unwrap();
    let ast = parse_procedure(&source).unwrap();
    let mut watcher = RankWatcher { sums: Vec::new() };
    run_procedure_with_observer(&ast, &ds, &RunConfig::default(), &mut watcher).unwrap();
    assert_eq!(watcher.sums.len(), 10);
    for sum in watcher.sums {
        assert!((sum - 1.0).abs() <= 1e-9, "rank sum {sum} deviates from 1");
    }
}

#[test]
fn zika_pindex_matches_oracle_on_fixture() {
    let ds = zika_dataset();
    let (seq, _) = run_stdlib(&ds, "zika-pindex", &[], &RunConfig::default());
    let rows: Vec<_> = seq.iter().collect();
    assert_eq!(rows.len(), 1, "LIMIT 1 returns the single top author");

    // Oracle: PageRank on the five-node citation graph, then p-index per
    // author from the fixture's authorship triples.
    let graph = fixtures::GeneratedGraph {
        n: 5,
        edges: vec![(1, 0), (2, 0), (3, 0), (3, 4), (0, 4)],
        triples: String::new(),
    };
    let ranks = pagerank_oracle(&graph, 0.85, 10);
    let last = ranks.last().unwrap();
    // authorX: a1+a2 (ids 0, 1); authorZ: a3+a4 (ids 2, 3); authorY: a5 (id 4)
    let authors = [
        ("authorX", last[&0] + last[&1]),
        ("authorZ", last[&2] + last[&3]),
        ("authorY", last[&4]),
    ];
    let (best_author, best_p) = authors
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let got_author = match rows[0].get("author") {
        Some(RdfTerm::Iri(iri)) => iri.clone(),
        other => panic!("expected author IRI, got {other:?}"),
    };
    let got_p = rows[0].get("p_index").and_then(|t| t.as_f64()).unwrap();
    assert_eq!(got_author, format!("http://example.org/zika/{best_author}"));
    assert!((got_p - best_p).abs() <= 1e-9, "{got_p} vs {best_p}");
}

#[test]
fn determinism_two_runs_are_multiset_equal() {
    let ds = zika_dataset();
    let (a, _) = run_stdlib(&ds, "PR", &[("edge", WDT_CITE)], &RunConfig::default());
    let (b, _) = run_stdlib(&ds, "PR", &[("edge", WDT_CITE)], &RunConfig::default());
    assert!(sequences_equal_as_multisets(&a, &b));
}

#[test]
fn spilled_sequences_flow_through_a_run() {
    let graph = fixtures::random_digraph(11, 30, 0.15);
    let ds = dataset_from(&graph.triples);
    let cfg = RunConfig {
        spill_threshold: 4,
        ..RunConfig::default()
    };
    let (spilled, _) = run_stdlib(&ds, "BFS", &[("edge", EDGE_PRED), ("source", &node_iri(0))], &cfg);
    let (mem, _) = run_stdlib(
        &ds,
        "BFS",
        &[("edge", EDGE_PRED), ("source", &node_iri(0))],
        &RunConfig::default(),
    );
    assert!(sequences_equal_as_multisets(&spilled, &mem));
}

#[test]
fn environment_domain_only_grows() {
    struct DomainWatcher {
        sizes: Vec<usize>,
    }
    impl RunObserver for DomainWatcher {
        fn after_statement(&mut self, _record: &StatementRecord, env: &Environment) {
            self.sizes.push(env.len());
        }
    }
    let ds = zika_dataset();
    let source = sparqal::stdlib::get_procedure("zika-pindex", &Default::default()).unwrap();
    let ast = parse_procedure(&source).unwrap();
    let mut watcher = DomainWatcher { sizes: Vec::new() };
    run_procedure_with_observer(&ast, &ds, &RunConfig::default(), &mut watcher).unwrap();
    assert!(watcher.sizes.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn prologue_prefixes_apply_to_every_query() {
    let ds = zika_dataset();
    let source = "PREFIX wdt: <http://www.wikidata.org/prop/direct/>\n\
                  LET x = (SELECT ?s WHERE { ?s wdt:P2860 ?o });\n\
                  RETURN(x);";
    let (seq, _) = run_source(&ds, source, &RunConfig::default());
    assert_eq!(seq.len(), 5);
}

#[test]
fn backend_errors_carry_statement_context() {
    let ds = Dataset::empty().unwrap();
    let ast = parse_procedure("LET x = (SELECT ?s WHERE { broken });\nRETURN(x);").unwrap();
    match run_procedure(&ast, &ds, &RunConfig::default()) {
        Err(RunError::Backend { .. }) => {}
        other => panic!("expected backend error, got {other:?}"),
    }
}

#[test]
fn unvalidated_procedures_are_rejected() {
    let ds = Dataset::empty().unwrap();
    let ast = parse_procedure("LET x = (SELECT ?s WHERE { QVALUES(y) });\nRETURN(x);").unwrap();
    assert!(matches!(
        run_procedure(&ast, &ds, &RunConfig::default()),
        Err(RunError::Invalid(_))
    ));
}

#[test]
fn let_statements_inside_loops_see_fresh_values() {
    // Frontier patterns depend on QVALUES re-substitution each iteration.
    let graph = fixtures::path_graph(5);
    let ds = dataset_from(&graph.triples);
    let (seq, trace) = run_stdlib(
        &ds,
        "BFS",
        &[("edge", EDGE_PRED), ("source", &node_iri(0))],
        &RunConfig::default(),
    );
    let dist = iri_number_pairs(&seq, "s", "d");
    for (i, d) in [(0usize, 0.0), (1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0)] {
        assert_eq!(dist[&node_iri(i)], d);
    }
    // diameter 4: the loop stabilizes after 5 body executions
    assert_eq!(trace.loops[0].iterations, 5);
}

#[test]
fn statement_kinds_shape_check() {
    // guard against accidental template drift
    let source = sparqal::stdlib::get_procedure("zika-pindex", &Default::default()).unwrap();
    let ast = parse_procedure(&source).unwrap();
    assert!(matches!(
        ast.statements[5].kind,
        StatementKind::Loop { ref body, .. } if body.len() == 3
    ));
}

#[test]
fn blank_nodes_cannot_feed_qvalues() {
    let ds = Dataset::empty().unwrap();
    let ast = parse_procedure(
        "LET b = (SELECT ?x WHERE { BIND(BNODE() AS ?x) });\n\
         LET y = (SELECT ?x WHERE { QVALUES(b) });\n\
         RETURN(y);",
    )
    .unwrap();
    match run_procedure(&ast, &ds, &RunConfig::default()) {
        Err(RunError::Values { source, .. }) => {
            assert!(source.to_string().contains("blank node"));
        }
        other => panic!("expected a blank-node error, got {other:?}"),
    }
}

#[test]
fn per_query_timeout_flags_slow_queries() {
    let ds = zika_dataset();
    let cfg = RunConfig {
        per_query_timeout: Some(std::time::Duration::ZERO),
        ..RunConfig::default()
    };
    let ast = parse_procedure(&format!(
        "LET x = (SELECT ?s ?o WHERE {{ ?s <{WDT_CITE}> ?o }});\nRETURN(x);"
    ))
    .unwrap();
    assert!(matches!(
        run_procedure(&ast, &ds, &cfg),
        Err(RunError::QueryTimeout { .. })
    ));
}

#[test]
fn run_deadline_aborts_between_queries() {
    let ds = zika_dataset();
    let cfg = RunConfig {
        run_deadline: Some(std::time::Duration::ZERO),
        ..RunConfig::default()
    };
    let ast = parse_procedure(&format!(
        "LET x = (SELECT ?s ?o WHERE {{ ?s <{WDT_CITE}> ?o }});\nRETURN(x);"
    ))
    .unwrap();
    assert!(matches!(
        run_procedure(&ast, &ds, &cfg),
        Err(RunError::DeadlineExceeded { .. })
    ));
}

#[test]
fn zika_rank_edge_body_has_three_sites() {
    let source = sparqal::stdlib::get_procedure("zika-pindex", &Default::default()).unwrap();
    let ast = parse_procedure(&source).unwrap();
    let StatementKind::Loop { body, .. } = &ast.statements[5].kind else {
        panic!("expected loop");
    };
    let StatementKind::Let { query, .. } = &body[0].kind else {
        panic!("expected rank_edge LET");
    };
    assert_eq!(query.referenced_variables(), vec!["degree", "rank", "zika"]);
}

#[test]
fn single_assignment_selects_unexcluded_neighbours() {
    let ds = dataset_from(fixtures::metro_grid());
    let source = "LET reachable = (\n\
                    SELECT ?s WHERE {\n\
                      <http://example.org/metro/s0_0> <http://www.wikidata.org/prop/direct/P197> ?s .\n\
                      MINUS { ?s <http://www.wikidata.org/prop/direct/P81> <http://example.org/metro/colline1> }\n\
                    }\n\
                  );\nRETURN(reachable);";
    let (seq, _) = run_source(&ds, source, &RunConfig::default());
    // Brute force over the grid adjacency: s0_0's neighbours are s0_1 and
    // s1_0; closing column 1 removes s0_1.
    let got = iri_set(&seq, "s");
    let expect: std::collections::HashSet<String> =
        [String::from("http://example.org/metro/s1_0")].into();
    assert_eq!(got, expect);
}

#[test]
fn nested_loops_multiply_iterations() {
    let ds = Dataset::empty().unwrap();
    let source = "LET x = (SELECT * WHERE { VALUES (?a) { (0) } });\n\
                  DO (\n\
                    DO ( LET x = (SELECT ((?a0 + 1) AS ?a) WHERE { { SELECT (?a AS ?a0) WHERE { QVALUES(x) } } }); ) WHILE (TIMES 3);\n\
                  ) WHILE (TIMES 2);\n\
                  RETURN(x);";
    let (seq, trace) = run_source(&ds, source, &RunConfig::default());
    let rows: Vec<_> = seq.iter().collect();
    assert_eq!(rows[0].get("a"), Some(&RdfTerm::integer(6)));
    // the inner loop completes once per outer iteration
    let inner_records = trace.loops.iter().filter(|l| l.iterations == 3).count();
    assert_eq!(inner_records, 2);
}
