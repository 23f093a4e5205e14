//! Well-formedness validation.
//!
//! Two conditions make a statement sequence a procedure: the last statement
//! (and only the last) is a return statement, and every solution variable
//! used in `QVALUES`, `FIXPOINT` or `RETURN` was assigned by a lexically
//! earlier `LET`. Loop conditions sit lexically after the loop body, so
//! assignments inside the body count for them.

use std::collections::HashSet;

use super::{Condition, ProcedureAst, QueryTemplate, Span, Statement, StatementKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// A return statement that is not the final top-level statement.
    ReturnNotLast,
    /// The procedure does not end with a return statement.
    MissingReturn,
    /// A variable used before any `LET` assigns it.
    UnassignedVariable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub span: Span,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}", v.message)?;
        }
        Ok(())
    }
}

pub fn validate_procedure(ast: &ProcedureAst) -> ValidationReport {
    let mut ctx = Context {
        assigned: HashSet::new(),
        violations: Vec::new(),
    };
    ctx.visit_block(&ast.statements, true);
    match ast.statements.last() {
        Some(s) if matches!(s.kind, StatementKind::Return { .. }) => {}
        Some(s) => ctx.violations.push(Violation {
            kind: ViolationKind::MissingReturn,
            span: s.span,
            message: "return not last: the final statement must be RETURN".into(),
        }),
        None => {}
    }
    ValidationReport {
        violations: ctx.violations,
    }
}

struct Context {
    assigned: HashSet<String>,
    violations: Vec<Violation>,
}

impl Context {
    fn visit_block(&mut self, statements: &[Statement], top_level: bool) {
        let last = statements.len().saturating_sub(1);
        for (i, statement) in statements.iter().enumerate() {
            let return_allowed = top_level && i == last;
            self.visit(statement, return_allowed);
        }
    }

    fn visit(&mut self, statement: &Statement, return_allowed: bool) {
        match &statement.kind {
            StatementKind::Let { target, query, .. } => {
                self.check_query(query, statement.span);
                self.assigned.insert(target.clone());
            }
            StatementKind::Loop { body, condition } => {
                self.visit_block(body, false);
                match condition {
                    Condition::Times(_) => {}
                    Condition::Fixpoint(var) => self.check_var(var, statement.span, "FIXPOINT"),
                    Condition::Ask(query) => self.check_query(query, statement.span),
                }
            }
            StatementKind::Return { variable } => {
                self.check_var(variable, statement.span, "RETURN");
                if !return_allowed {
                    self.violations.push(Violation {
                        kind: ViolationKind::ReturnNotLast,
                        span: statement.span,
                        message: "return not last: RETURN may only appear as the final statement"
                            .into(),
                    });
                }
            }
        }
    }

    fn check_query(&mut self, query: &QueryTemplate, span: Span) {
        for site in &query.qvalues_sites {
            self.check_var(&site.variable, span, "QVALUES");
        }
    }

    fn check_var(&mut self, var: &str, span: Span, context: &str) {
        if !self.assigned.contains(var) {
            self.violations.push(Violation {
                kind: ViolationKind::UnassignedVariable(var.to_string()),
                span,
                message: format!(
                    "unassigned variable: {context}({var}) is not assigned by any earlier LET"
                ),
            });
        }
    }
}
