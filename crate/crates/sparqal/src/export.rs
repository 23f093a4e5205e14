//! Result export: SPARQL-results-compatible TSV and JSON documents.
//!
//! Both formats parse back into sequences, and a run exported both ways
//! yields multiset-equal sequences after parsing.

use std::io;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::solutions::{SequenceBuilder, SolutionSequence};
use crate::term::{RdfTerm, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("malformed TSV at line {line}: {message}")]
    Tsv { line: usize, message: String },
    #[error("malformed results JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Tab-separated export: header of `?`-prefixed variables, terms in SPARQL
/// surface syntax, empty cells for unbound variables.
pub fn write_tsv(seq: &SolutionSequence, out: &mut impl io::Write) -> io::Result<()> {
    let header: Vec<String> = seq.projected_vars().iter().map(|v| format!("?{v}")).collect();
    writeln!(out, "{}", header.join("\t"))?;
    for row in seq.iter() {
        let cells: Vec<String> = seq
            .projected_vars()
            .iter()
            .map(|var| row.get(var).map(RdfTerm::to_sparql).unwrap_or_default())
            .collect();
        writeln!(out, "{}", cells.join("\t"))?;
    }
    Ok(())
}

pub fn to_tsv_string(seq: &SolutionSequence) -> String {
    let mut buf = Vec::new();
    write_tsv(seq, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("terms are UTF-8")
}

/// SPARQL 1.1 query results JSON document.
pub fn to_json_value(seq: &SolutionSequence) -> Value {
    let bindings: Vec<Value> = seq
        .iter()
        .map(|row| {
            let mut obj = Map::new();
            for (var, term) in row.iter() {
                obj.insert(var.to_string(), term_to_json(term));
            }
            Value::Object(obj)
        })
        .collect();
    json!({
        "head": { "vars": seq.projected_vars() },
        "results": { "bindings": bindings }
    })
}

pub fn write_json(seq: &SolutionSequence, out: &mut impl io::Write) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, &to_json_value(seq))?;
    writeln!(out)
}

fn term_to_json(term: &RdfTerm) -> Value {
    match term {
        RdfTerm::Iri(iri) => json!({ "type": "uri", "value": iri }),
        RdfTerm::Literal { lexical, datatype, lang } => {
            let mut obj = Map::new();
            obj.insert("type".into(), "literal".into());
            obj.insert("value".into(), lexical.clone().into());
            if let Some(tag) = lang {
                obj.insert("xml:lang".into(), tag.clone().into());
            } else if datatype != XSD_STRING {
                obj.insert("datatype".into(), datatype.clone().into());
            }
            Value::Object(obj)
        }
        RdfTerm::BlankNode(label) => json!({ "type": "bnode", "value": label }),
    }
}

pub fn parse_json(text: &str) -> Result<SolutionSequence, ExportError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ExportError::Json(e.to_string()))?;
    let vars: Vec<String> = doc["head"]["vars"]
        .as_array()
        .ok_or_else(|| ExportError::Json("missing head.vars".into()))?
        .iter()
        .map(|v| v.as_str().unwrap_or_default().to_string())
        .collect();
    let mut builder = SequenceBuilder::new(vars, usize::MAX);
    for binding in doc["results"]["bindings"]
        .as_array()
        .ok_or_else(|| ExportError::Json("missing results.bindings".into()))?
    {
        let obj = binding
            .as_object()
            .ok_or_else(|| ExportError::Json("binding is not an object".into()))?;
        let mut row = Vec::new();
        for (var, term) in obj {
            row.push((var.clone(), json_to_term(term)?));
        }
        builder
            .push(row.into_iter().collect())
            .map_err(|e| ExportError::Json(e.to_string()))?;
    }
    builder.finish().map_err(|e| ExportError::Json(e.to_string()))
}

fn json_to_term(value: &Value) -> Result<RdfTerm, ExportError> {
    let kind = value["type"]
        .as_str()
        .ok_or_else(|| ExportError::Json("binding without type".into()))?;
    let lexical = value["value"]
        .as_str()
        .ok_or_else(|| ExportError::Json("binding without value".into()))?;
    Ok(match kind {
        "uri" => RdfTerm::iri(lexical),
        "bnode" => RdfTerm::BlankNode(lexical.to_string()),
        "literal" | "typed-literal" => {
            if let Some(lang) = value["xml:lang"].as_str() {
                RdfTerm::lang(lexical, lang)
            } else if let Some(dt) = value["datatype"].as_str() {
                RdfTerm::typed(lexical, dt)
            } else {
                RdfTerm::string(lexical)
            }
        }
        other => return Err(ExportError::Json(format!("unknown binding type {other}"))),
    })
}

pub fn parse_tsv(text: &str) -> Result<SolutionSequence, ExportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ExportError::Tsv { line: 1, message: "empty document".into() })?;
    let vars: Vec<String> = if header.trim().is_empty() {
        Vec::new()
    } else {
        header
            .split('\t')
            .map(|h| h.trim().trim_start_matches('?').to_string())
            .collect()
    };
    let mut builder = SequenceBuilder::new(vars.clone(), usize::MAX);
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let mut row: Vec<(String, RdfTerm)> = Vec::new();
        for (var, cell) in vars.iter().zip(cells.iter()) {
            if cell.is_empty() {
                continue;
            }
            let term = parse_term(cell).map_err(|message| ExportError::Tsv {
                line: idx + 1,
                message,
            })?;
            row.push((var.clone(), term));
        }
        builder
            .push(row.into_iter().collect())
            .map_err(|e| ExportError::Tsv { line: idx + 1, message: e.to_string() })?;
    }
    builder
        .finish()
        .map_err(|e| ExportError::Tsv { line: 0, message: e.to_string() })
}

/// Parses one term in SPARQL surface syntax (as emitted in TSV cells).
pub fn parse_term(cell: &str) -> Result<RdfTerm, String> {
    let cell = cell.trim();
    if let Some(iri) = cell.strip_prefix('<').and_then(|s| s.strip_suffix('>')) {
        return Ok(RdfTerm::iri(iri));
    }
    if let Some(label) = cell.strip_prefix("_:") {
        return Ok(RdfTerm::BlankNode(label.to_string()));
    }
    if cell.starts_with('"') {
        let (lexical, rest) = parse_quoted(cell)?;
        return if let Some(dt) = rest.strip_prefix("^^") {
            let dt = dt
                .strip_prefix('<')
                .and_then(|s| s.strip_suffix('>'))
                .ok_or_else(|| format!("malformed datatype in {cell}"))?;
            Ok(RdfTerm::typed(lexical, dt))
        } else if let Some(lang) = rest.strip_prefix('@') {
            Ok(RdfTerm::lang(lexical, lang))
        } else if rest.is_empty() {
            Ok(RdfTerm::string(lexical))
        } else {
            Err(format!("trailing content after literal: {rest}"))
        };
    }
    match cell {
        "true" | "false" => return Ok(RdfTerm::typed(cell, XSD_BOOLEAN)),
        _ => {}
    }
    if cell.parse::<i64>().is_ok() {
        return Ok(RdfTerm::typed(cell, XSD_INTEGER));
    }
    if cell.parse::<f64>().is_ok() {
        let datatype = if cell.contains(['e', 'E']) { XSD_DOUBLE } else { XSD_DECIMAL };
        return Ok(RdfTerm::typed(cell, datatype));
    }
    Err(format!("unrecognized term syntax: {cell}"))
}

fn parse_quoted(text: &str) -> Result<(String, &str), String> {
    let bytes = text.as_bytes();
    let mut lexical = String::new();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => {
                let escaped = *bytes.get(i + 1).ok_or("dangling escape")?;
                lexical.push(match escaped {
                    b'n' => '\n',
                    b'r' => '\r',
                    b't' => '\t',
                    b'b' => '\u{8}',
                    b'f' => '\u{c}',
                    b'"' => '"',
                    b'\\' => '\\',
                    other => return Err(format!("unknown escape \\{}", other as char)),
                });
                i += 2;
            }
            b'"' => return Ok((lexical, &text[i + 1..])),
            _ => {
                let ch = text[i..].chars().next().unwrap();
                lexical.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    Err("unterminated string".into())
}
