//! SPARQL evaluation backends.
//!
//! The interpreter talks to a [`QueryBackend`]: the only place query text is
//! actually executed. The required binding is [`Dataset`], an embedded
//! in-memory SPARQL 1.1 engine over a loaded RDF dataset; [`SparqlEndpoint`]
//! is an optional binding to a remote SPARQL protocol endpoint.

mod compat;
mod http;

pub use http::SparqlEndpoint;

use std::io::{BufReader, Read};
use std::path::Path;

use oxigraph::model::Term;
use oxigraph::sparql::{QueryResults, SparqlEvaluator};
use oxigraph::store::Store;
use thiserror::Error;

use crate::solutions::{SequenceBuilder, SolutionMapping, SolutionSequence, DEFAULT_SPILL_THRESHOLD};
use crate::term::RdfTerm;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("RDF parse error in {path}: {message}")]
    RdfParse { path: String, message: String },
    #[error("SPARQL syntax error: {message}\nin query:\n{query}")]
    Syntax { message: String, query: String },
    #[error("query evaluation failed: {message}\nin query:\n{query}")]
    Evaluation { message: String, query: String },
    #[error("SPARQL endpoint error: {0}")]
    Endpoint(String),
    #[error("query returned {0} results where a boolean was expected")]
    NotBoolean(&'static str),
    #[error(transparent)]
    Spill(#[from] crate::solutions::SpillError),
}

/// RDF serializations accepted by [`Dataset::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdfFormat {
    NTriples,
    Turtle,
}

impl RdfFormat {
    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "nt" => Some(RdfFormat::NTriples),
            "ttl" | "turtle" => Some(RdfFormat::Turtle),
            _ => None,
        }
    }

    fn to_oxigraph(self) -> oxigraph::io::RdfFormat {
        match self {
            RdfFormat::NTriples => oxigraph::io::RdfFormat::NTriples,
            RdfFormat::Turtle => oxigraph::io::RdfFormat::Turtle,
        }
    }
}

/// A streaming SELECT result: the projection plus a row iterator.
pub struct SelectStream {
    pub vars: Vec<String>,
    pub rows: Box<dyn Iterator<Item = Result<SolutionMapping, BackendError>>>,
}

/// An engine that can evaluate SPARQL 1.1 SELECT and ASK queries.
///
/// Row order is engine-defined; callers compare results as sets or multisets,
/// never by order.
pub trait QueryBackend: Send + Sync {
    fn select_stream(&self, query: &str) -> Result<SelectStream, BackendError>;

    fn eval_ask(&self, query: &str) -> Result<bool, BackendError>;

    /// Evaluates a SELECT and materializes the sequence, spilling to disk
    /// above `spill_threshold` rows.
    fn eval_select_spilling(
        &self,
        query: &str,
        spill_threshold: usize,
    ) -> Result<SolutionSequence, BackendError> {
        let stream = self.select_stream(query)?;
        let mut builder = SequenceBuilder::new(stream.vars, spill_threshold);
        for row in stream.rows {
            builder.push(row?)?;
        }
        Ok(builder.finish()?)
    }

    fn eval_select(&self, query: &str) -> Result<SolutionSequence, BackendError> {
        self.eval_select_spilling(query, DEFAULT_SPILL_THRESHOLD)
    }
}

/// An opened RDF dataset with an embedded query engine. Read-only once
/// loading is done; shareable across threads.
pub struct Dataset {
    store: Store,
    triple_count: u64,
}

impl Dataset {
    pub fn empty() -> Result<Self, BackendError> {
        Ok(Dataset {
            store: new_store()?,
            triple_count: 0,
        })
    }

    /// Loads one file in the given serialization.
    pub fn load(path: impl AsRef<Path>, format: RdfFormat) -> Result<Self, BackendError> {
        let mut dataset = Dataset::empty()?;
        dataset.load_into(path, format)?;
        Ok(dataset)
    }

    /// Parses RDF from a reader into the dataset; `name` is used in errors.
    pub fn load_reader(
        &mut self,
        name: &str,
        format: RdfFormat,
        reader: impl Read,
    ) -> Result<(), BackendError> {
        self.store
            .load_from_reader(format.to_oxigraph(), BufReader::new(reader))
            .map_err(|e| BackendError::RdfParse {
                path: name.to_string(),
                message: e.to_string(),
            })?;
        self.triple_count = self.store.len().map_err(storage_error)? as u64;
        Ok(())
    }

    pub fn load_into(&mut self, path: impl AsRef<Path>, format: RdfFormat) -> Result<(), BackendError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| BackendError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.load_reader(&path.display().to_string(), format, file)
    }

    pub fn triple_count(&self) -> u64 {
        self.triple_count
    }

    fn prepare(&self, query: &str) -> Result<spargebra::Query, BackendError> {
        let mut parsed = spargebra::SparqlParser::new()
            .parse_query(query)
            .map_err(|e| BackendError::Syntax {
                message: e.to_string(),
                query: query.to_string(),
            })?;
        compat::rewrite_empty_group_defaults(&mut parsed);
        Ok(parsed)
    }
}

fn new_store() -> Result<Store, BackendError> {
    Store::new().map_err(storage_error)
}

fn storage_error(e: oxigraph::store::StorageError) -> BackendError {
    BackendError::Evaluation {
        message: e.to_string(),
        query: String::new(),
    }
}

impl QueryBackend for Dataset {
    fn select_stream(&self, query: &str) -> Result<SelectStream, BackendError> {
        let prepared = self.prepare(query)?;
        let results = SparqlEvaluator::new()
            .for_query(prepared)
            .on_store(&self.store)
            .execute()
            .map_err(|e| BackendError::Evaluation {
                message: e.to_string(),
                query: query.to_string(),
            })?;
        match results {
            QueryResults::Solutions(solutions) => {
                let vars: Vec<String> = solutions
                    .variables()
                    .iter()
                    .map(|v| v.as_str().to_string())
                    .collect();
                let query = query.to_string();
                let rows = solutions.map(move |solution| {
                    let solution = solution.map_err(|e| BackendError::Evaluation {
                        message: e.to_string(),
                        query: query.clone(),
                    })?;
                    Ok(solution
                        .iter()
                        .map(|(var, term)| (var.as_str().to_string(), convert_term(term)))
                        .collect())
                });
                Ok(SelectStream {
                    vars,
                    rows: Box::new(rows),
                })
            }
            QueryResults::Boolean(_) => Err(BackendError::NotBoolean("boolean")),
            QueryResults::Graph(_) => Err(BackendError::NotBoolean("graph")),
        }
    }

    fn eval_ask(&self, query: &str) -> Result<bool, BackendError> {
        let prepared = self.prepare(query)?;
        let results = SparqlEvaluator::new()
            .for_query(prepared)
            .on_store(&self.store)
            .execute()
            .map_err(|e| BackendError::Evaluation {
                message: e.to_string(),
                query: query.to_string(),
            })?;
        match results {
            QueryResults::Boolean(b) => Ok(b),
            _ => Err(BackendError::NotBoolean("solution")),
        }
    }
}

pub(crate) fn convert_term(term: &Term) -> RdfTerm {
    match term {
        Term::NamedNode(n) => RdfTerm::Iri(n.as_str().to_string()),
        Term::BlankNode(b) => RdfTerm::BlankNode(b.as_str().to_string()),
        Term::Literal(l) => {
            if let Some(lang) = l.language() {
                RdfTerm::lang(l.value(), lang)
            } else {
                RdfTerm::typed(l.value(), l.datatype().as_str())
            }
        }
        #[allow(unreachable_patterns)]
        _ => unreachable!("triple terms are not produced without RDF-star"),
    }
}
