//! Solution mappings, solution sequences and the interpreter environment.
//!
//! A solution sequence is an ordered list of mappings with duplicates allowed,
//! as produced by a `SELECT` query. Sequences above a configurable row
//! threshold spill to a temporary file so that large intermediate results do
//! not have to fit in memory; the on-disk framing is internal and unstable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::sync::Arc;

use tempfile::NamedTempFile;
use thiserror::Error;

use crate::term::RdfTerm;

/// Rows per sequence kept in memory before spilling to disk.
pub const DEFAULT_SPILL_THRESHOLD: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum ValuesError {
    /// Blank nodes cannot appear in a `VALUES` data block; a procedure must
    /// not project blank nodes into a variable that feeds `QVALUES`.
    #[error("blank node _:{0} is not representable in a VALUES block")]
    BlankNodeNotRepresentable(String),
}

#[derive(Debug, Error)]
#[error("sequence spill I/O failed: {0}")]
pub struct SpillError(#[from] io::Error);

/// A partial assignment of variable names to RDF terms; one result row.
///
/// Unbound variables are simply absent from the map. Variable names are
/// stored without the leading `?`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SolutionMapping(BTreeMap<String, RdfTerm>);

impl SolutionMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, var: impl Into<String>, term: RdfTerm) -> Self {
        self.0.insert(var.into(), term);
        self
    }

    pub fn get(&self, var: &str) -> Option<&RdfTerm> {
        self.0.get(var)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &RdfTerm)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, RdfTerm)> for SolutionMapping {
    fn from_iter<T: IntoIterator<Item = (String, RdfTerm)>>(iter: T) -> Self {
        SolutionMapping(iter.into_iter().collect())
    }
}

enum RowStore {
    Mem(Vec<SolutionMapping>),
    Spilled { file: Arc<NamedTempFile>, rows: usize },
}

impl std::fmt::Debug for RowStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowStore::Mem(rows) => write!(f, "Mem({} rows)", rows.len()),
            RowStore::Spilled { rows, .. } => write!(f, "Spilled({rows} rows)"),
        }
    }
}

/// An ordered sequence of solution mappings over a fixed projection.
///
/// Immutable after construction and cheap to clone (spilled row stores are
/// shared). Every mapping's domain is a subset of `projected_vars`.
#[derive(Debug)]
pub struct SolutionSequence {
    projected_vars: Vec<String>,
    rows: Arc<RowStore>,
}

impl Clone for SolutionSequence {
    fn clone(&self) -> Self {
        SolutionSequence {
            projected_vars: self.projected_vars.clone(),
            rows: Arc::clone(&self.rows),
        }
    }
}

impl SolutionSequence {
    /// Builds an in-memory sequence. Panics if a mapping binds a variable
    /// outside the projection; backends and tests construct rows from the
    /// projection so this indicates a bug.
    pub fn from_rows(projected_vars: Vec<String>, rows: Vec<SolutionMapping>) -> Self {
        for row in &rows {
            for var in row.variables() {
                assert!(
                    projected_vars.iter().any(|v| v == var),
                    "row binds {var} outside projection {projected_vars:?}"
                );
            }
        }
        SolutionSequence {
            projected_vars,
            rows: Arc::new(RowStore::Mem(rows)),
        }
    }

    pub fn empty(projected_vars: Vec<String>) -> Self {
        Self::from_rows(projected_vars, Vec::new())
    }

    pub fn projected_vars(&self) -> &[String] {
        &self.projected_vars
    }

    pub fn len(&self) -> usize {
        match &*self.rows {
            RowStore::Mem(rows) => rows.len(),
            RowStore::Spilled { rows, .. } => *rows,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_spilled(&self) -> bool {
        matches!(&*self.rows, RowStore::Spilled { .. })
    }

    pub fn iter(&self) -> RowIter<'_> {
        match &*self.rows {
            RowStore::Mem(rows) => RowIter::Mem(rows.iter()),
            RowStore::Spilled { file, rows } => {
                // Fresh handle per iterator; the file is immutable once built.
                let handle = file.reopen().expect("reopen spill file");
                RowIter::Spilled {
                    reader: BufReader::new(handle),
                    remaining: *rows,
                }
            }
        }
    }

    /// True iff any row binds `var`.
    pub fn binds(&self, var: &str) -> bool {
        self.iter().any(|row| row.get(var).is_some())
    }

    /// The set of distinct mappings in this sequence.
    pub fn distinct_set(&self) -> HashSet<SolutionMapping> {
        self.iter().collect()
    }

    fn multiset(&self) -> HashMap<SolutionMapping, usize> {
        let mut counts = HashMap::new();
        for row in self.iter() {
            *counts.entry(row).or_insert(0) += 1;
        }
        counts
    }
}

pub enum RowIter<'a> {
    Mem(std::slice::Iter<'a, SolutionMapping>),
    Spilled {
        reader: BufReader<File>,
        remaining: usize,
    },
}

impl Iterator for RowIter<'_> {
    type Item = SolutionMapping;

    fn next(&mut self) -> Option<SolutionMapping> {
        match self {
            RowIter::Mem(iter) => iter.next().cloned(),
            RowIter::Spilled { reader, remaining } => {
                if *remaining == 0 {
                    return None;
                }
                *remaining -= 1;
                Some(read_row(reader).expect("spill file truncated or corrupt"))
            }
        }
    }
}

/// Incremental sequence builder that spills to a temporary file once the row
/// count exceeds `threshold`.
pub struct SequenceBuilder {
    projected_vars: Vec<String>,
    threshold: usize,
    mem: Vec<SolutionMapping>,
    spill: Option<(NamedTempFile, BufWriter<File>, usize)>,
}

impl SequenceBuilder {
    pub fn new(projected_vars: Vec<String>, threshold: usize) -> Self {
        SequenceBuilder {
            projected_vars,
            threshold: threshold.max(1),
            mem: Vec::new(),
            spill: None,
        }
    }

    pub fn push(&mut self, row: SolutionMapping) -> Result<(), SpillError> {
        if let Some((_, writer, rows)) = &mut self.spill {
            write_row(writer, &row)?;
            *rows += 1;
            return Ok(());
        }
        self.mem.push(row);
        if self.mem.len() > self.threshold {
            let file = NamedTempFile::new()?;
            let mut writer = BufWriter::new(file.reopen()?);
            let mut rows = 0usize;
            for row in self.mem.drain(..) {
                write_row(&mut writer, &row)?;
                rows += 1;
            }
            self.spill = Some((file, writer, rows));
        }
        Ok(())
    }

    pub fn rows_so_far(&self) -> usize {
        match &self.spill {
            Some((_, _, rows)) => *rows,
            None => self.mem.len(),
        }
    }

    pub fn finish(self) -> Result<SolutionSequence, SpillError> {
        let rows = match self.spill {
            Some((file, mut writer, rows)) => {
                writer.flush()?;
                drop(writer);
                let mut handle = file.reopen()?;
                handle.seek(SeekFrom::Start(0))?;
                RowStore::Spilled {
                    file: Arc::new(file),
                    rows,
                }
            }
            None => RowStore::Mem(self.mem),
        };
        Ok(SolutionSequence {
            projected_vars: self.projected_vars,
            rows: Arc::new(rows),
        })
    }
}

// Row framing: [u32 pair count] then per pair a length-prefixed var name and
// term. Terms: kind byte (0 iri, 1 literal, 2 blank), then its fields.
fn write_row(w: &mut impl Write, row: &SolutionMapping) -> io::Result<()> {
    w.write_all(&(row.len() as u32).to_le_bytes())?;
    for (var, term) in row.iter() {
        write_str(w, var)?;
        match term {
            RdfTerm::Iri(iri) => {
                w.write_all(&[0])?;
                write_str(w, iri)?;
            }
            RdfTerm::Literal { lexical, datatype, lang } => {
                w.write_all(&[1])?;
                write_str(w, lexical)?;
                write_str(w, datatype)?;
                write_str(w, lang.as_deref().unwrap_or(""))?;
            }
            RdfTerm::BlankNode(label) => {
                w.write_all(&[2])?;
                write_str(w, label)?;
            }
        }
    }
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_row(r: &mut impl Read) -> io::Result<SolutionMapping> {
    let pairs = read_u32(r)?;
    let mut row = BTreeMap::new();
    for _ in 0..pairs {
        let var = read_str(r)?;
        let mut kind = [0u8];
        r.read_exact(&mut kind)?;
        let term = match kind[0] {
            0 => RdfTerm::Iri(read_str(r)?),
            1 => {
                let lexical = read_str(r)?;
                let datatype = read_str(r)?;
                let lang = read_str(r)?;
                RdfTerm::Literal {
                    lexical,
                    datatype,
                    lang: if lang.is_empty() { None } else { Some(lang) },
                }
            }
            2 => RdfTerm::BlankNode(read_str(r)?),
            other => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("bad term kind {other}"),
                ))
            }
        };
        row.insert(var, term);
    }
    Ok(SolutionMapping(row))
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read) -> io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// True iff `a` and `b` contain the same set of distinct mappings, ignoring
/// order and multiplicity. This is the comparison `FIXPOINT` uses.
pub fn sequences_equal_as_sets(a: &SolutionSequence, b: &SolutionSequence) -> bool {
    a.distinct_set() == b.distinct_set()
}

/// True iff `a` and `b` contain the same mappings with the same
/// multiplicities, ignoring order.
pub fn sequences_equal_as_multisets(a: &SolutionSequence, b: &SolutionSequence) -> bool {
    a.multiset() == b.multiset()
}

/// Renders a sequence as an inline `VALUES` block over its projected
/// variables, one row per mapping in order, `UNDEF` for unbound variables.
pub fn serialize_values_block(seq: &SolutionSequence) -> Result<String, ValuesError> {
    let mut out = String::from("VALUES (");
    for (i, var) in seq.projected_vars().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push('?');
        out.push_str(var);
    }
    out.push_str(") { ");
    for row in seq.iter() {
        out.push('(');
        for (i, var) in seq.projected_vars().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match row.get(var) {
                Some(RdfTerm::BlankNode(label)) => {
                    return Err(ValuesError::BlankNodeNotRepresentable(label.clone()))
                }
                Some(term) => out.push_str(&term.to_sparql()),
                None => out.push_str("UNDEF"),
            }
        }
        out.push_str(") ");
    }
    out.push('}');
    Ok(out)
}

/// The interpreter environment: the value of every solution variable assigned
/// so far. Reassignment replaces the previous sequence in place.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    bindings: BTreeMap<String, SolutionSequence>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, var: impl Into<String>, seq: SolutionSequence) {
        self.bindings.insert(var.into(), seq);
    }

    pub fn get(&self, var: &str) -> Option<&SolutionSequence> {
        self.bindings.get(var)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.bindings.contains_key(var)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(vars: &[&str], rows: Vec<SolutionMapping>) -> SolutionSequence {
        SolutionSequence::from_rows(vars.iter().map(|v| v.to_string()).collect(), rows)
    }

    fn m(pairs: &[(&str, RdfTerm)]) -> SolutionMapping {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn set_equality_is_reflexive() {
        let a = seq(
            &["s"],
            vec![m(&[("s", RdfTerm::iri("http://e/x"))]), m(&[("s", RdfTerm::iri("http://e/y"))])],
        );
        assert!(sequences_equal_as_sets(&a, &a));
    }

    #[test]
    fn set_equality_ignores_order_and_multiplicity() {
        let x = RdfTerm::iri("http://e/x");
        let y = RdfTerm::iri("http://e/y");
        let a = seq(&["s"], vec![m(&[("s", x.clone())]), m(&[("s", y.clone())])]);
        let b = seq(
            &["s"],
            vec![m(&[("s", y)]), m(&[("s", x.clone())]), m(&[("s", x)])],
        );
        assert!(sequences_equal_as_sets(&a, &b));
        assert!(!sequences_equal_as_multisets(&a, &b));
    }

    #[test]
    fn set_equality_compares_mapping_domains() {
        let a = seq(&["s"], vec![m(&[("s", RdfTerm::iri("http://e/x"))])]);
        let b = seq(
            &["s", "t"],
            vec![m(&[("s", RdfTerm::iri("http://e/x")), ("t", RdfTerm::iri("http://e/y"))])],
        );
        // Brute-force oracle: pairwise containment both ways.
        let brute = |p: &SolutionSequence, q: &SolutionSequence| {
            p.iter().all(|r| q.iter().any(|s| s == r)) && q.iter().all(|r| p.iter().any(|s| s == r))
        };
        assert!(!brute(&a, &b));
        assert_eq!(sequences_equal_as_sets(&a, &b), brute(&a, &b));
    }

    #[test]
    fn multiset_equality_counts_duplicates() {
        let x = RdfTerm::iri("http://e/x");
        let a = seq(&["s"], vec![m(&[("s", x.clone())]), m(&[("s", x.clone())])]);
        let b = seq(&["s"], vec![m(&[("s", x)])]);
        assert!(!sequences_equal_as_multisets(&a, &b));
        assert!(sequences_equal_as_sets(&a, &b));
    }

    #[test]
    fn values_block_rendering() {
        let a1 = RdfTerm::iri("http://e/a1");
        let rows = vec![
            m(&[("node", RdfTerm::iri("http://e/a2")), ("cite", a1.clone())]),
            m(&[("node", RdfTerm::iri("http://e/a3")), ("cite", a1.clone())]),
            m(&[("node", RdfTerm::iri("http://e/a4")), ("cite", a1)]),
        ];
        let block = serialize_values_block(&seq(&["node", "cite"], rows)).unwrap();
        assert_eq!(
            block,
            "VALUES (?node ?cite) { (<http://e/a2> <http://e/a1>) (<http://e/a3> <http://e/a1>) (<http://e/a4> <http://e/a1>) }"
        );
    }

    #[test]
    fn values_block_empty_and_undef() {
        assert_eq!(
            serialize_values_block(&seq(&["s"], vec![])).unwrap(),
            "VALUES (?s) { }"
        );
        let block = serialize_values_block(&seq(
            &["a", "b"],
            vec![m(&[("a", RdfTerm::iri("http://e/x"))])],
        ))
        .unwrap();
        assert_eq!(block, "VALUES (?a ?b) { (<http://e/x> UNDEF) }");
    }

    #[test]
    fn values_block_rejects_blank_nodes() {
        let err = serialize_values_block(&seq(
            &["s"],
            vec![m(&[("s", RdfTerm::BlankNode("b0".into()))])],
        ))
        .unwrap_err();
        assert!(matches!(err, ValuesError::BlankNodeNotRepresentable(_)));
    }

    #[test]
    fn spilled_sequences_round_trip() {
        let mut builder = SequenceBuilder::new(vec!["s".into(), "n".into()], 8);
        let mut expect = Vec::new();
        for i in 0..100 {
            let row = m(&[
                ("s", RdfTerm::iri(format!("http://e/n{i}"))),
                ("n", RdfTerm::integer(i)),
            ]);
            builder.push(row.clone()).unwrap();
            expect.push(row);
        }
        let spilled = builder.finish().unwrap();
        assert!(spilled.is_spilled());
        assert_eq!(spilled.len(), 100);
        let back: Vec<_> = spilled.iter().collect();
        assert_eq!(back, expect);
        let mem = seq(&["s", "n"], expect);
        assert!(sequences_equal_as_multisets(&spilled, &mem));
    }

    #[test]
    fn environment_reassignment_replaces() {
        let mut env = Environment::new();
        env.assign("x", seq(&["s"], vec![m(&[("s", RdfTerm::integer(1))])]));
        env.assign("x", seq(&["s"], vec![m(&[("s", RdfTerm::integer(2))])]));
        assert_eq!(env.len(), 1);
        let rows: Vec<_> = env.get("x").unwrap().iter().collect();
        assert_eq!(rows[0].get("s"), Some(&RdfTerm::integer(2)));
    }
}
