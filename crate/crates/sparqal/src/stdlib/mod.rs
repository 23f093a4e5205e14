//! Bundled, parameterized procedures.
//!
//! Each template is a text asset with `__PLACEHOLDER__` slots; rendering with
//! a complete parameter set yields a procedure that passes validation. The
//! catalogue covers the two worked examples (metro reachability, topic
//! p-index), the graph-analytics suite (BFS, SSSP, PR, WCC, LCC, CDLP), the
//! colour-refinement procedure (WL) and a Turing-machine construction.

pub mod tm;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::backend::QueryBackend;
use crate::interpreter::{run_procedure, RunConfig, RunError};
use crate::parser::{parse_procedure, validate_procedure};
use crate::solutions::SolutionSequence;

#[derive(Debug, Error)]
pub enum StdlibError {
    #[error("unknown procedure '{0}'")]
    UnknownProcedure(String),
    #[error("missing parameter '{0}'")]
    MissingParameter(&'static str),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameter '{key}' is not a valid {expected}: {value}")]
    BadParameter {
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("rendered procedure failed to parse: {0}")]
    Render(String),
    #[error("dataset is missing labels: {0} node(s) touched by the edge predicate have no label")]
    MissingLabels(u64),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Backend(#[from] crate::backend::BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Iri,
    PositiveInt,
    Decimal,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: ParamKind,
    pub default: Option<&'static str>,
    pub description: &'static str,
}

/// A named procedure template with its parameter slots.
#[derive(Debug, Clone, Copy)]
pub struct ProcedureTemplate {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static [ParamSpec],
    source: &'static str,
}

macro_rules! iri_param {
    ($key:literal, $desc:literal) => {
        ParamSpec { key: $key, kind: ParamKind::Iri, default: None, description: $desc }
    };
    ($key:literal, $desc:literal, $default:expr) => {
        ParamSpec { key: $key, kind: ParamKind::Iri, default: Some($default), description: $desc }
    };
}

const METRO_PARAMS: &[ParamSpec] = &[
    iri_param!("source", "station whose reachable set is computed", "http://www.wikidata.org/entity/Q3296629"),
    iri_param!("adjacent", "adjacency predicate between stations", "http://www.wikidata.org/prop/direct/P197"),
    iri_param!("line_pred", "predicate assigning stations to lines", "http://www.wikidata.org/prop/direct/P81"),
    iri_param!("excluded_line", "line whose stations are closed", "http://www.wikidata.org/entity/Q1157050"),
];

const ZIKA_PARAMS: &[ParamSpec] = &[
    iri_param!("type_pred", "instance-of predicate", "http://www.wikidata.org/prop/direct/P31"),
    iri_param!("type_class", "article class", "http://www.wikidata.org/entity/Q13442814"),
    iri_param!("topic_pred", "main-subject predicate", "http://www.wikidata.org/prop/direct/P921"),
    iri_param!("topic", "topic entity", "http://www.wikidata.org/entity/Q202864"),
    iri_param!("cite_pred", "citation predicate", "http://www.wikidata.org/prop/direct/P2860"),
    iri_param!("author_pred", "author predicate", "http://www.wikidata.org/prop/direct/P50"),
    ParamSpec { key: "iterations", kind: ParamKind::PositiveInt, default: Some("10"), description: "PageRank rounds" },
    ParamSpec { key: "damping", kind: ParamKind::Decimal, default: Some("0.85"), description: "PageRank damping factor" },
];

const PR_PARAMS: &[ParamSpec] = &[
    iri_param!("edge", "edge predicate"),
    ParamSpec { key: "iterations", kind: ParamKind::PositiveInt, default: Some("10"), description: "PageRank rounds" },
    ParamSpec { key: "damping", kind: ParamKind::Decimal, default: Some("0.85"), description: "PageRank damping factor" },
];

const BFS_PARAMS: &[ParamSpec] = &[
    iri_param!("edge", "edge predicate"),
    iri_param!("source", "source node"),
];

const SSSP_WEIGHTED_PARAMS: &[ParamSpec] = &[
    iri_param!("edge_src", "edge-resource source predicate"),
    iri_param!("edge_dst", "edge-resource target predicate"),
    iri_param!("weight_pred", "edge-resource numeric weight predicate"),
    iri_param!("source", "source node"),
];

const EDGE_ONLY_PARAMS: &[ParamSpec] = &[iri_param!("edge", "edge predicate")];

const CDLP_PARAMS: &[ParamSpec] = &[
    iri_param!("edge", "edge predicate"),
    ParamSpec { key: "rounds", kind: ParamKind::PositiveInt, default: Some("10"), description: "propagation rounds" },
];

const WL_PARAMS: &[ParamSpec] = &[
    iri_param!("edge", "edge predicate"),
    iri_param!("label_pred", "initial node label predicate", "http://www.w3.org/2000/01/rdf-schema#label"),
    ParamSpec { key: "rounds", kind: ParamKind::PositiveInt, default: Some("3"), description: "refinement rounds" },
];

const TEMPLATES: &[ProcedureTemplate] = &[
    ProcedureTemplate {
        name: "metro-reachability",
        description: "stations still reachable from a source when one line is closed",
        params: METRO_PARAMS,
        source: include_str!("../../assets/templates/metro-reachability.sparqal"),
    },
    ProcedureTemplate {
        name: "zika-pindex",
        description: "top author of a topic's citation network by p-index",
        params: ZIKA_PARAMS,
        source: include_str!("../../assets/templates/zika-pindex.sparqal"),
    },
    ProcedureTemplate {
        name: "BFS",
        description: "hop distances from a source node",
        params: BFS_PARAMS,
        source: include_str!("../../assets/templates/BFS.sparqal"),
    },
    ProcedureTemplate {
        name: "SSSP",
        description: "single-source shortest path (unit weights; weighted via edge_src/edge_dst/weight_pred)",
        params: BFS_PARAMS,
        source: include_str!("../../assets/templates/SSSP.sparqal"),
    },
    ProcedureTemplate {
        name: "PR",
        description: "PageRank scores per node",
        params: PR_PARAMS,
        source: include_str!("../../assets/templates/PR.sparqal"),
    },
    ProcedureTemplate {
        name: "WCC",
        description: "weakly connected component id per node",
        params: EDGE_ONLY_PARAMS,
        source: include_str!("../../assets/templates/WCC.sparqal"),
    },
    ProcedureTemplate {
        name: "LCC",
        description: "local clustering coefficient per node",
        params: EDGE_ONLY_PARAMS,
        source: include_str!("../../assets/templates/LCC.sparqal"),
    },
    ProcedureTemplate {
        name: "CDLP",
        description: "community labels by synchronous label propagation",
        params: CDLP_PARAMS,
        source: include_str!("../../assets/templates/CDLP.sparqal"),
    },
    ProcedureTemplate {
        name: "WL",
        description: "colour-refinement labels after a fixed number of rounds",
        params: WL_PARAMS,
        source: include_str!("../../assets/templates/WL.sparqal"),
    },
];

const SSSP_WEIGHTED: ProcedureTemplate = ProcedureTemplate {
    name: "SSSP",
    description: "single-source shortest path over reified weighted edges",
    params: SSSP_WEIGHTED_PARAMS,
    source: include_str!("../../assets/templates/SSSP-weighted.sparqal"),
};

pub fn templates() -> &'static [ProcedureTemplate] {
    TEMPLATES
}

pub fn find_template(name: &str) -> Option<&'static ProcedureTemplate> {
    TEMPLATES.iter().find(|t| t.name.eq_ignore_ascii_case(name))
}

/// Renders the named procedure with the given parameters (defaults fill the
/// gaps). The rendered source always parses and validates cleanly.
pub fn get_procedure(name: &str, params: &BTreeMap<String, String>) -> Result<String, StdlibError> {
    let template = find_template(name).ok_or_else(|| StdlibError::UnknownProcedure(name.to_string()))?;
    // SSSP switches to the reified weighted form when weight parameters are
    // supplied.
    let template: &ProcedureTemplate =
        if template.name == "SSSP" && params.contains_key("weight_pred") {
            &SSSP_WEIGHTED
        } else {
            template
        };
    for key in params.keys() {
        if !template.params.iter().any(|p| p.key == key) {
            return Err(StdlibError::UnknownParameter(key.clone()));
        }
    }
    let mut source = template.source.to_string();
    for spec in template.params {
        let value = match params.get(spec.key) {
            Some(v) => v.as_str(),
            None => spec.default.ok_or(StdlibError::MissingParameter(spec.key))?,
        };
        check_param(spec, value)?;
        let placeholder = format!("__{}__", spec.key.to_ascii_uppercase());
        source = source.replace(&placeholder, value);
    }
    if let Some(at) = source.find("__") {
        let tail: String = source[at..].chars().take(30).collect();
        return Err(StdlibError::Render(format!("unsubstituted placeholder near '{tail}'")));
    }
    debug_assert!(
        {
            let ast = parse_procedure(&source).expect("rendered template parses");
            validate_procedure(&ast).is_empty()
        },
        "rendered template must validate"
    );
    Ok(source)
}

fn check_param(spec: &ParamSpec, value: &str) -> Result<(), StdlibError> {
    let bad = |expected| StdlibError::BadParameter {
        key: spec.key.to_string(),
        expected,
        value: value.to_string(),
    };
    match spec.kind {
        ParamKind::Iri => {
            if value.is_empty()
                || value.contains(|c: char| c.is_whitespace() || c == '<' || c == '>' || c == '"')
            {
                return Err(bad("IRI"));
            }
        }
        ParamKind::PositiveInt => {
            let parsed: u64 = value.parse().map_err(|_| bad("positive integer"))?;
            if parsed == 0 {
                return Err(bad("positive integer"));
            }
        }
        ParamKind::Decimal => {
            if value.parse::<f64>().is_err()
                || !value.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '-')
            {
                return Err(bad("decimal literal"));
            }
        }
    }
    Ok(())
}

/// Runs the colour-refinement procedure for `rounds` rounds over the graph
/// spanned by `edge_pred`, returning the `(?v, ?lab)` sequence. Every node
/// touched by the edge predicate must carry an initial label.
pub fn wl_refinement(
    backend: &dyn QueryBackend,
    edge_pred: &str,
    label_pred: &str,
    rounds: u64,
    cfg: &RunConfig,
) -> Result<SolutionSequence, StdlibError> {
    let unlabeled = format!(
        "SELECT (COUNT(*) AS ?n) WHERE {{ {{ SELECT DISTINCT ?v WHERE {{ {{ ?v <{edge}> ?x }} UNION {{ ?x <{edge}> ?v }} }} }} FILTER NOT EXISTS {{ ?v <{label}> ?l }} }}",
        edge = edge_pred,
        label = label_pred,
    );
    let missing = backend
        .eval_select(&unlabeled)?
        .iter()
        .next()
        .and_then(|row| row.get("n").and_then(|t| t.as_f64()))
        .unwrap_or(0.0) as u64;
    if missing > 0 {
        return Err(StdlibError::MissingLabels(missing));
    }
    let mut params = BTreeMap::new();
    params.insert("edge".to_string(), edge_pred.to_string());
    params.insert("label_pred".to_string(), label_pred.to_string());
    params.insert("rounds".to_string(), rounds.to_string());
    let source = get_procedure("WL", &params)?;
    let ast = parse_procedure(&source).map_err(|e| StdlibError::Render(e.to_string()))?;
    let (seq, _) = run_procedure(&ast, backend, cfg)?;
    Ok(seq)
}
