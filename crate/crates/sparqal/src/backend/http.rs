//! SPARQL protocol binding: query evaluation over HTTP.
//!
//! Queries are POSTed with `Content-Type: application/sparql-query` and
//! results are read in the SPARQL JSON results format.

use sparesults::{QueryResultsFormat, QueryResultsParser, ReaderQueryResultsParserOutput};

use super::{convert_term, BackendError, QueryBackend, SelectStream};

pub struct SparqlEndpoint {
    url: String,
    agent: ureq::Agent,
}

impl SparqlEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        SparqlEndpoint {
            url: url.into(),
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn request(&self, query: &str) -> Result<Box<dyn std::io::Read + Send + Sync>, BackendError> {
        let response = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/sparql-query")
            .set("Accept", "application/sparql-results+json")
            .send_string(query)
            .map_err(|e| BackendError::Endpoint(e.to_string()))?;
        Ok(response.into_reader())
    }
}

impl QueryBackend for SparqlEndpoint {
    fn select_stream(&self, query: &str) -> Result<SelectStream, BackendError> {
        let reader = self.request(query)?;
        let parser = QueryResultsParser::from_format(QueryResultsFormat::Json);
        match parser
            .for_reader(reader)
            .map_err(|e| BackendError::Endpoint(e.to_string()))?
        {
            ReaderQueryResultsParserOutput::Solutions(solutions) => {
                let vars: Vec<String> = solutions
                    .variables()
                    .iter()
                    .map(|v| v.as_str().to_string())
                    .collect();
                let rows = solutions.map(|solution| {
                    let solution = solution.map_err(|e| BackendError::Endpoint(e.to_string()))?;
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
            ReaderQueryResultsParserOutput::Boolean(_) => Err(BackendError::NotBoolean("boolean")),
        }
    }

    fn eval_ask(&self, query: &str) -> Result<bool, BackendError> {
        let reader = self.request(query)?;
        let parser = QueryResultsParser::from_format(QueryResultsFormat::Json);
        match parser
            .for_reader(reader)
            .map_err(|e| BackendError::Endpoint(e.to_string()))?
        {
            ReaderQueryResultsParserOutput::Boolean(b) => Ok(b),
            ReaderQueryResultsParserOutput::Solutions(_) => Err(BackendError::NotBoolean("solution")),
        }
    }
}
