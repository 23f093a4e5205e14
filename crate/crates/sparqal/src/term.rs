//! RDF term model used by solution mappings.
//!
//! Terms are kept in lexical form: two literals are equal iff they share the
//! same lexical form, datatype and language tag. This makes fixpoint checks
//! independent of any engine's value-space coercions (`"1"^^xsd:decimal` and
//! `"1.0"^^xsd:decimal` are distinct terms here).

use std::fmt;

pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
pub const RDF_LANG_STRING: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";

/// An RDF term bound to a variable in a solution mapping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RdfTerm {
    Iri(String),
    Literal {
        lexical: String,
        datatype: String,
        lang: Option<String>,
    },
    BlankNode(String),
}

impl RdfTerm {
    pub fn iri(value: impl Into<String>) -> Self {
        RdfTerm::Iri(value.into())
    }

    /// A plain string literal (`xsd:string`).
    pub fn string(lexical: impl Into<String>) -> Self {
        RdfTerm::Literal {
            lexical: lexical.into(),
            datatype: XSD_STRING.to_string(),
            lang: None,
        }
    }

    pub fn typed(lexical: impl Into<String>, datatype: impl Into<String>) -> Self {
        RdfTerm::Literal {
            lexical: lexical.into(),
            datatype: datatype.into(),
            lang: None,
        }
    }

    /// A language-tagged literal; the datatype is forced to `rdf:langString`.
    pub fn lang(lexical: impl Into<String>, tag: impl Into<String>) -> Self {
        RdfTerm::Literal {
            lexical: lexical.into(),
            datatype: RDF_LANG_STRING.to_string(),
            lang: Some(tag.into()),
        }
    }

    pub fn integer(value: i64) -> Self {
        Self::typed(value.to_string(), XSD_INTEGER)
    }

    pub fn decimal(lexical: impl Into<String>) -> Self {
        Self::typed(lexical, XSD_DECIMAL)
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, RdfTerm::BlankNode(_))
    }

    /// Numeric interpretation of the lexical form, when the datatype is numeric.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            RdfTerm::Literal { lexical, datatype, .. }
                if datatype == XSD_INTEGER
                    || datatype == XSD_DECIMAL
                    || datatype == XSD_DOUBLE
                    || datatype == "http://www.w3.org/2001/XMLSchema#float"
                    || datatype == "http://www.w3.org/2001/XMLSchema#long"
                    || datatype == "http://www.w3.org/2001/XMLSchema#int" =>
            {
                lexical.parse().ok()
            }
            _ => None,
        }
    }

    /// SPARQL surface syntax for this term, as used inside `VALUES` rows.
    ///
    /// Blank nodes have no data-block syntax; callers that need one must
    /// reject them first (see `serialize_values_block`).
    pub fn to_sparql(&self) -> String {
        match self {
            RdfTerm::Iri(iri) => format!("<{iri}>"),
            RdfTerm::Literal { lexical, datatype, lang } => {
                let quoted = quote_string(lexical);
                if let Some(tag) = lang {
                    format!("{quoted}@{tag}")
                } else if datatype == XSD_STRING {
                    quoted
                } else {
                    format!("{quoted}^^<{datatype}>")
                }
            }
            RdfTerm::BlankNode(label) => format!("_:{label}"),
        }
    }
}

impl fmt::Display for RdfTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sparql())
    }
}

/// Quotes a string with SPARQL short-string escapes.
pub fn quote_string(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
