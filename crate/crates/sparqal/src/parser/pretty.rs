//! Pretty-printing of a parsed procedure back to source text.
//!
//! Query bodies are emitted verbatim, so re-parsing the output yields a
//! structurally identical AST (spans aside).

use std::fmt::Write;

use crate::batcher::ReduceSpec;

use super::{Condition, ProcedureAst, Statement, StatementKind};

pub fn pretty_print(ast: &ProcedureAst) -> String {
    let mut out = String::new();
    if !ast.prologue.is_empty() {
        out.push_str(&ast.prologue);
        out.push('\n');
    }
    for statement in &ast.statements {
        write_statement(&mut out, statement, 0);
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_statement(out: &mut String, statement: &Statement, depth: usize) {
    indent(out, depth);
    match &statement.kind {
        StatementKind::Let { target, query, batch } => {
            write!(out, "LET {target} = ({})", query.raw_text).unwrap();
            if let Some(batch) = batch {
                write!(out, " MAP(?{}", batch.map.split_var).unwrap();
                if !batch.map.selectors.is_empty() {
                    out.push_str(", [");
                    for (i, sel) in batch.map.selectors.iter().enumerate() {
                        if i > 0 {
                            out.push_str(" | ");
                        }
                        out.push_str(&sel.text);
                    }
                    out.push(']');
                }
                out.push(')');
                match batch.reduce {
                    ReduceSpec::Union => out.push_str(" REDUCE(UNION)"),
                }
            }
            out.push_str(";\n");
        }
        StatementKind::Loop { body, condition } => {
            out.push_str("DO (\n");
            for inner in body {
                write_statement(out, inner, depth + 1);
            }
            indent(out, depth);
            out.push_str(") WHILE (");
            match condition {
                Condition::Times(t) => write!(out, "TIMES {t}").unwrap(),
                Condition::Fixpoint(var) => write!(out, "FIXPOINT({var})").unwrap(),
                Condition::Ask(query) => out.push_str(&query.raw_text),
            }
            out.push_str(");\n");
        }
        StatementKind::Return { variable } => {
            writeln!(out, "RETURN({variable});").unwrap();
        }
    }
}
