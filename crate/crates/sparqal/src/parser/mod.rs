//! Parsing of procedure source into an AST.
//!
//! The procedure language has three statement forms (assignment, loop,
//! return) plus an optional batching annotation on assignments. Embedded
//! SPARQL is captured verbatim between balanced parentheses and is not parsed
//! beyond `QVALUES` site detection; the backend owns the SPARQL grammar.

pub mod scan;
mod pretty;
mod validate;

pub use pretty::pretty_print;
pub use validate::{validate_procedure, ValidationReport, Violation, ViolationKind};


use thiserror::Error;

use crate::batcher::{MapSpec, ReduceSpec, SelectorQuery};
use scan::{find_balanced_end, line_col, scan_qvalues, QvaluesSite, ScanError};

#[derive(Debug, Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Byte range of a statement in the original source, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn to_line_col(self, source: &str) -> (usize, usize) {
        line_col(source, self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryKind {
    Select,
    Ask,
}

/// Embedded SPARQL text with its `QVALUES` sites located.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTemplate {
    pub raw_text: String,
    pub qvalues_sites: Vec<QvaluesSite>,
    pub kind: QueryKind,
}

impl QueryTemplate {
    pub fn parse(raw_text: impl Into<String>, kind: QueryKind) -> Result<Self, ScanError> {
        let raw_text = raw_text.into();
        let qvalues_sites = scan_qvalues(&raw_text)?;
        Ok(QueryTemplate {
            raw_text,
            qvalues_sites,
            kind,
        })
    }

    /// Distinct solution variables referenced by `QVALUES` sites, in order of
    /// first occurrence.
    pub fn referenced_variables(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for site in &self.qvalues_sites {
            if !seen.contains(&site.variable.as_str()) {
                seen.push(site.variable.as_str());
            }
        }
        seen
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchAnnotation {
    pub map: MapSpec,
    pub reduce: ReduceSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    Times(u64),
    Fixpoint(String),
    Ask(QueryTemplate),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatementKind {
    Let {
        target: String,
        query: QueryTemplate,
        batch: Option<BatchAnnotation>,
    },
    Loop {
        body: Vec<Statement>,
        condition: Condition,
    },
    Return {
        variable: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub kind: StatementKind,
    pub span: Span,
}

/// A parsed procedure: an optional `PREFIX`/`BASE` prologue shared by every
/// embedded query, followed by the statement list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcedureAst {
    pub prologue: String,
    pub statements: Vec<Statement>,
}

pub fn parse_procedure(source: &str) -> Result<ProcedureAst, ParseError> {
    Parser { src: source, pos: 0 }.procedure()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error_at(&self, pos: usize, message: impl Into<String>) -> ParseError {
        let (line, column) = line_col(self.src, pos);
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.pos, message)
    }

    fn scan_error(&self, base: usize, err: ScanError) -> ParseError {
        let pos = match err {
            ScanError::UnterminatedString(p) => base + p,
            ScanError::Unbalanced { pos, .. } => base + pos,
            ScanError::MalformedQvalues { pos, .. } => base + pos,
        };
        self.error_at(pos, err.to_string())
    }

    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn skip_trivia(&mut self) {
        let bytes = self.bytes();
        while self.pos < bytes.len() {
            let b = bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < bytes.len() && bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_trivia();
        self.pos >= self.src.len()
    }

    fn peek_char(&mut self) -> Option<u8> {
        self.skip_trivia();
        self.bytes().get(self.pos).copied()
    }

    fn expect_char(&mut self, c: u8) -> Result<usize, ParseError> {
        self.skip_trivia();
        if self.bytes().get(self.pos) == Some(&c) {
            let at = self.pos;
            self.pos += 1;
            Ok(at)
        } else {
            Err(self.error(format!(
                "expected '{}'{}",
                c as char,
                match self.bytes().get(self.pos) {
                    Some(&b) => format!(", found '{}'", b as char),
                    None => ", found end of input".to_string(),
                }
            )))
        }
    }

    fn read_ident(&mut self) -> Result<String, ParseError> {
        self.skip_trivia();
        let bytes = self.bytes();
        let start = self.pos;
        if start >= bytes.len() || !(bytes[start].is_ascii_alphabetic() || bytes[start] == b'_') {
            return Err(self.error("expected an identifier"));
        }
        let mut end = start + 1;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        self.pos = end;
        Ok(self.src[start..end].to_string())
    }

    /// Peeks the next identifier without consuming, upper-cased.
    fn peek_keyword(&mut self) -> Option<String> {
        self.skip_trivia();
        let bytes = self.bytes();
        let start = self.pos;
        if start >= bytes.len() || !(bytes[start].is_ascii_alphabetic() || bytes[start] == b'_') {
            return None;
        }
        let mut end = start + 1;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        Some(self.src[start..end].to_ascii_uppercase())
    }

    fn read_integer(&mut self) -> Result<u64, ParseError> {
        self.skip_trivia();
        let bytes = self.bytes();
        let start = self.pos;
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end == start {
            return Err(self.error("expected an integer"));
        }
        self.pos = end;
        self.src[start..end]
            .parse()
            .map_err(|_| self.error_at(start, "integer out of range"))
    }

    fn procedure(mut self) -> Result<ProcedureAst, ParseError> {
        let prologue = self.prologue()?;
        let mut statements = Vec::new();
        while !self.at_end() {
            statements.push(self.statement()?);
        }
        if statements.is_empty() {
            return Err(self.error("expected at least one statement"));
        }
        Ok(ProcedureAst { prologue, statements })
    }

    fn prologue(&mut self) -> Result<String, ParseError> {
        let mut out = String::new();
        loop {
            self.skip_trivia();
            let start = self.pos;
            match self.peek_keyword().as_deref() {
                Some("PREFIX") => {
                    self.read_ident()?;
                    // pname: may be empty before the colon
                    self.skip_trivia();
                    let bytes = self.bytes();
                    while self.pos < bytes.len() && bytes[self.pos] != b':' {
                        self.pos += 1;
                    }
                    if self.pos >= bytes.len() {
                        return Err(self.error_at(start, "malformed PREFIX declaration"));
                    }
                    self.pos += 1; // ':'
                    self.read_iri_ref(start)?;
                }
                Some("BASE") => {
                    self.read_ident()?;
                    self.read_iri_ref(start)?;
                }
                _ => break,
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(self.src[start..self.pos].trim());
        }
        Ok(out)
    }

    fn read_iri_ref(&mut self, decl_start: usize) -> Result<(), ParseError> {
        self.skip_trivia();
        let bytes = self.bytes();
        if bytes.get(self.pos) != Some(&b'<') {
            return Err(self.error_at(decl_start, "expected <iri> in prologue declaration"));
        }
        while self.pos < bytes.len() && bytes[self.pos] != b'>' {
            self.pos += 1;
        }
        if self.pos >= bytes.len() {
            return Err(self.error_at(decl_start, "unterminated <iri> in prologue declaration"));
        }
        self.pos += 1;
        Ok(())
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        self.skip_trivia();
        let start = self.pos;
        let keyword = self
            .peek_keyword()
            .ok_or_else(|| self.error("expected a statement (LET, DO or RETURN)"))?;
        match keyword.as_str() {
            "LET" => self.let_statement(start),
            "DO" => self.loop_statement(start),
            "RETURN" => self.return_statement(start),
            other => Err(self.error(format!(
                "unknown keyword '{other}'; expected LET, DO or RETURN"
            ))),
        }
    }

    fn let_statement(&mut self, start: usize) -> Result<Statement, ParseError> {
        self.read_ident()?; // LET
        let target = self.read_ident()?;
        self.expect_char(b'=')?;
        let open = self.expect_char(b'(')?;
        let close = find_balanced_end(self.src, open).map_err(|e| self.scan_error(0, e))?;
        let body = self.src[open + 1..close].trim().to_string();
        let query = QueryTemplate::parse(body, QueryKind::Select)
            .map_err(|e| self.scan_error(open + 1, e))?;
        self.pos = close + 1;
        let batch = self.batch_annotation()?;
        let end = self.expect_char(b';')? + 1;
        Ok(Statement {
            kind: StatementKind::Let { target, query, batch },
            span: Span { start, end },
        })
    }

    fn batch_annotation(&mut self) -> Result<Option<BatchAnnotation>, ParseError> {
        match self.peek_keyword().as_deref() {
            Some("MAP") => {}
            Some("REDUCE") => {
                return Err(self.error("REDUCE requires a preceding MAP annotation"));
            }
            _ => return Ok(None),
        }
        self.read_ident()?; // MAP
        self.expect_char(b'(')?;
        self.expect_char(b'?')?;
        let split_var = self.read_ident()?;
        let mut selectors = Vec::new();
        if self.peek_char() == Some(b',') {
            self.pos += 1;
            let bracket = self.expect_char(b'[')?;
            self.skip_trivia();
            if self.bytes().get(self.pos) == Some(&b']') {
                self.pos += 1;
            } else {
                let (parts, close) = scan::split_selector_list(self.src, bracket + 1)
                    .map_err(|e| self.scan_error(0, e))?;
                for part in parts {
                    let text = self.src[part.clone()].trim().to_string();
                    if text.is_empty() {
                        return Err(self.error_at(part.start, "empty selector in MAP annotation"));
                    }
                    let selector = self.selector(&text, part.start, &split_var)?;
                    selectors.push(selector);
                }
                self.pos = close + 1;
            }
        }
        self.expect_char(b')')?;
        let reduce = if self.peek_keyword().as_deref() == Some("REDUCE") {
            self.read_ident()?;
            self.expect_char(b'(')?;
            let strategy = self.read_ident()?;
            self.expect_char(b')')?;
            match strategy.to_ascii_uppercase().as_str() {
                "UNION" => ReduceSpec::Union,
                other => {
                    return Err(self.error(format!("unknown REDUCE strategy '{other}'")));
                }
            }
        } else {
            ReduceSpec::Union
        };
        Ok(Some(BatchAnnotation {
            map: MapSpec { split_var, selectors },
            reduce,
        }))
    }

    fn selector(&mut self, text: &str, at: usize, split_var: &str) -> Result<SelectorQuery, ParseError> {
        if !scan_qvalues(text)
            .map_err(|e| self.scan_error(at, e))?
            .is_empty()
        {
            return Err(self.error_at(at, "MAP selectors must not contain QVALUES"));
        }
        let projected = selector_projection(text)
            .map_err(|e| self.scan_error(at, e))?
            .ok_or_else(|| {
                self.error_at(at, "MAP selector must be a SELECT projecting exactly one variable")
            })?;
        let mentions = scan::replace_variable(text, split_var, "\u{0}")
            .map_err(|e| self.scan_error(at, e))?
            .contains('\u{0}');
        if !mentions {
            return Err(self.error_at(at, format!("MAP selector must mention ?{split_var}")));
        }
        Ok(SelectorQuery {
            text: text.to_string(),
            projected_var: projected,
        })
    }

    fn loop_statement(&mut self, start: usize) -> Result<Statement, ParseError> {
        self.read_ident()?; // DO
        self.expect_char(b'(')?;
        let mut body = Vec::new();
        loop {
            if self.peek_char() == Some(b')') {
                break;
            }
            if self.at_end() {
                return Err(self.error("unterminated loop body; expected ')'"));
            }
            body.push(self.statement()?);
        }
        if body.is_empty() {
            return Err(self.error("loop body must contain at least one statement"));
        }
        self.expect_char(b')')?;
        match self.peek_keyword().as_deref() {
            Some("WHILE") => {
                self.read_ident()?;
            }
            _ => return Err(self.error("expected WHILE after loop body")),
        }
        let open = self.expect_char(b'(')?;
        let condition = self.condition(open)?;
        let end = self.expect_char(b';')? + 1;
        Ok(Statement {
            kind: StatementKind::Loop { body, condition },
            span: Span { start, end },
        })
    }

    fn condition(&mut self, open: usize) -> Result<Condition, ParseError> {
        self.skip_trivia();
        match self.peek_keyword().as_deref() {
            Some("TIMES") => {
                self.read_ident()?;
                let at = self.pos;
                let t = self.read_integer()?;
                if t == 0 {
                    return Err(self.error_at(at, "TIMES requires an integer greater than 0"));
                }
                self.expect_char(b')')?;
                Ok(Condition::Times(t))
            }
            Some("FIXPOINT") => {
                self.read_ident()?;
                self.expect_char(b'(')?;
                let var = self.read_ident()?;
                self.expect_char(b')')?;
                self.expect_char(b')')?;
                Ok(Condition::Fixpoint(var))
            }
            _ => {
                let close = find_balanced_end(self.src, open).map_err(|e| self.scan_error(0, e))?;
                let body_start = open + 1;
                let body = self.src[body_start..close].trim();
                match scan::first_keyword(body, 0).map_err(|e| self.scan_error(body_start, e))? {
                    Some((_, kw)) if kw == "ASK" => {}
                    _ => {
                        return Err(self.error_at(
                            body_start,
                            "malformed condition: expected TIMES, FIXPOINT or an ASK query",
                        ))
                    }
                }
                let query = QueryTemplate::parse(body, QueryKind::Ask)
                    .map_err(|e| self.scan_error(body_start, e))?;
                self.pos = close + 1;
                Ok(Condition::Ask(query))
            }
        }
    }

    fn return_statement(&mut self, start: usize) -> Result<Statement, ParseError> {
        self.read_ident()?; // RETURN
        self.expect_char(b'(')?;
        let variable = self.read_ident()?;
        self.expect_char(b')')?;
        let end = self.expect_char(b';')? + 1;
        Ok(Statement {
            kind: StatementKind::Return { variable },
            span: Span { start, end },
        })
    }
}

/// Determines the single projected variable of a selector `SELECT`, if it is
/// unary. Handles bare variables and `(expr AS ?v)` forms.
fn selector_projection(text: &str) -> Result<Option<String>, ScanError> {
    let Some((select_pos, kw)) = scan::first_keyword(text, 0)? else {
        return Ok(None);
    };
    if kw != "SELECT" {
        return Ok(None);
    }
    let bytes = text.as_bytes();
    let mut vars: Vec<String> = Vec::new();
    let mut depth = 0usize;
    let mut after_as = false;
    let mut i = select_pos + "SELECT".len();
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'{' => break,
            b'(' => {
                depth += 1;
                i += 1;
            }
            b')' => {
                depth = depth.saturating_sub(1);
                i += 1;
            }
            b'?' | b'$' => {
                let start = i + 1;
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                let name = text[start..end].to_string();
                if depth == 0 || after_as {
                    vars.push(name);
                }
                after_as = false;
                i = end;
            }
            _ if b.is_ascii_alphabetic() => {
                let start = i;
                let mut end = i;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                let word = text[start..end].to_ascii_uppercase();
                if word == "WHERE" && depth == 0 {
                    break;
                }
                after_as = word == "AS";
                i = end;
            }
            _ => i += 1,
        }
    }
    if vars.len() == 1 {
        Ok(Some(vars.pop().unwrap()))
    } else {
        Ok(None)
    }
}
