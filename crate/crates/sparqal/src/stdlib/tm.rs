//! Deterministic Turing machines compiled to procedures.
//!
//! The generated procedure stores the transition table, the current
//! state/symbol pair and the visited tape cells in solution variables. Cell
//! positions are kept relative to the head: `positive_cells` holds cells to
//! the right (positions 1, 2, ...), `negative_cells` cells to the left
//! (-1, -2, ...). Each loop iteration applies the unique applicable
//! transition by shifting both stores, and the loop ends when no transition
//! applies; the run returns a non-empty sequence iff the machine halts in its
//! accepting state.
//!
//! When no transition applies, the update statements preserve the
//! configuration unchanged instead of wiping it, so a machine that halts
//! immediately (including one whose initial state is accepting) still
//! returns the right answer.

use std::fmt::Write;

use thiserror::Error;

const NS: &str = "http://example.org/tm/";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TmError {
    #[error("nondeterministic transition table: two transitions for ({state}, {symbol:?})")]
    Nondeterministic { state: String, symbol: TapeSymbol },
    #[error("transition out of the final state {0}")]
    TransitionFromFinal(String),
    #[error("input word may only contain '0' and '1', found {0:?}")]
    BadInput(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TapeSymbol {
    Zero,
    One,
    Blank,
}

impl TapeSymbol {
    fn iri(self) -> String {
        match self {
            TapeSymbol::Zero => format!("{NS}sym0"),
            TapeSymbol::One => format!("{NS}sym1"),
            TapeSymbol::Blank => format!("{NS}symB"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmDirection {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct TmTransition {
    pub from_state: &'static str,
    pub read: TapeSymbol,
    pub to_state: &'static str,
    pub write: TapeSymbol,
    pub direction: TmDirection,
}

/// A deterministic single-tape machine over {0, 1} with one accepting state.
#[derive(Debug, Clone)]
pub struct TuringMachineSpec {
    pub name: &'static str,
    pub initial_state: &'static str,
    pub final_state: &'static str,
    pub transitions: Vec<TmTransition>,
    /// The input word, a string over {0, 1}.
    pub input: String,
}

impl TuringMachineSpec {
    pub fn validate(&self) -> Result<(), TmError> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.transitions {
            if t.from_state == self.final_state {
                return Err(TmError::TransitionFromFinal(self.final_state.to_string()));
            }
            if !seen.insert((t.from_state, t.read)) {
                return Err(TmError::Nondeterministic {
                    state: t.from_state.to_string(),
                    symbol: t.read,
                });
            }
        }
        for c in self.input.chars() {
            if c != '0' && c != '1' {
                return Err(TmError::BadInput(c));
            }
        }
        Ok(())
    }

    pub fn with_input(&self, input: impl Into<String>) -> Self {
        let mut spec = self.clone();
        spec.input = input.into();
        spec
    }
}

fn state_iri(state: &str) -> String {
    format!("{NS}state-{state}")
}

fn dir_iri(direction: TmDirection) -> &'static str {
    match direction {
        TmDirection::Left => "left",
        TmDirection::Right => "right",
    }
}

/// The join of the transition table with the current configuration, shared
/// by every update statement.
fn applicable(extra_filter: &str) -> String {
    format!(
        "      {{ QVALUES(transition) }}\n\
         \x20     {{ SELECT (?c_state AS ?cur_state) (?c_symbol AS ?cur_symbol) WHERE {{ QVALUES(current) }} }}\n\
         \x20     FILTER(?oldstate = ?cur_state && ?oldsymbol = ?cur_symbol)\n\
         {extra_filter}"
    )
}

fn no_transition_applies() -> String {
    "      FILTER NOT EXISTS {\n\
     \x20       { QVALUES(transition) }\n\
     \x20       { SELECT (?c_state AS ?h_state) (?c_symbol AS ?h_symbol) WHERE { QVALUES(current) } }\n\
     \x20       FILTER(?oldstate = ?h_state && ?oldsymbol = ?h_symbol)\n\
     \x20     }\n"
        .to_string()
}

/// Renders the machine (with its input word) as a procedure.
pub fn tm_to_procedure(tm: &TuringMachineSpec) -> Result<String, TmError> {
    tm.validate()?;
    let mut out = String::new();

    // Transition table.
    let mut rows = String::new();
    for t in &tm.transitions {
        write!(
            rows,
            " (<{}> <{}> <{}> <{}> <{NS}{}>)",
            state_iri(t.from_state),
            t.read.iri(),
            state_iri(t.to_state),
            t.write.iri(),
            dir_iri(t.direction),
        )
        .unwrap();
    }
    writeln!(
        out,
        "LET transition = (\n  SELECT ?oldstate ?oldsymbol ?newstate ?newsymbol ?direction WHERE {{\n    VALUES (?oldstate ?oldsymbol ?newstate ?newsymbol ?direction) {{{rows} }}\n  }}\n);"
    )
    .unwrap();

    // Head over the first input symbol (blank for the empty word).
    let symbols: Vec<TapeSymbol> = tm
        .input
        .chars()
        .map(|c| if c == '0' { TapeSymbol::Zero } else { TapeSymbol::One })
        .collect();
    let head = symbols.first().copied().unwrap_or(TapeSymbol::Blank);
    writeln!(
        out,
        "LET current = (\n  SELECT ?c_symbol ?c_state WHERE {{\n    VALUES (?c_symbol ?c_state) {{ (<{}> <{}>) }}\n  }}\n);",
        head.iri(),
        state_iri(tm.initial_state),
    )
    .unwrap();

    let mut cells = String::new();
    for (i, symbol) in symbols.iter().enumerate().skip(1) {
        write!(cells, " ({} <{}>)", i, symbol.iri()).unwrap();
    }
    writeln!(
        out,
        "LET positive_cells = (\n  SELECT ?p_pos ?p_symbol WHERE {{\n    VALUES (?p_pos ?p_symbol) {{{cells} }}\n  }}\n);"
    )
    .unwrap();
    writeln!(
        out,
        "LET negative_cells = (\n  SELECT ?n_pos ?n_symbol WHERE {{\n    VALUES (?n_pos ?n_symbol) {{ }}\n  }}\n);"
    )
    .unwrap();

    out.push_str("DO (\n");
    out.push_str(&statement_new_current());
    out.push_str(&statement_positive_cells());
    out.push_str(&statement_negative_cells());
    out.push_str(
        "  LET current = (\n    SELECT ?c_symbol ?c_state WHERE { QVALUES(new_current) }\n  );\n",
    );
    // Terminate once no transition applies to the (new) configuration.
    writeln!(
        out,
        ") WHILE ( ASK {{\n  {{ QVALUES(current) }}\n{} }} );",
        no_transition_applies()
    )
    .unwrap();

    writeln!(
        out,
        "LET state = (\n  SELECT (?c_state AS ?state) WHERE {{ QVALUES(current) FILTER(?c_state = <{}>) }}\n);",
        state_iri(tm.final_state),
    )
    .unwrap();
    out.push_str("RETURN(state);\n");
    Ok(out)
}

/// New configuration head: the transition's target state paired with the
/// symbol of the cell the head moves onto (blank if unvisited); the whole
/// configuration is preserved when the machine has halted.
fn statement_new_current() -> String {
    format!(
        "  LET new_current = (\n    SELECT ?c_symbol ?c_state WHERE {{\n      {{\n        SELECT (?next AS ?c_state) (COALESCE(?cell, <{blank}>) AS ?c_symbol) WHERE {{\n          {{\n            SELECT (?newstate AS ?next) (IF(?direction = <{NS}right>, 1, -1) AS ?npos) WHERE {{\n{applicable}            }}\n          }}\n          OPTIONAL {{\n            {{\n              {{ SELECT (?p_pos AS ?cpos) (?p_symbol AS ?cell) WHERE {{ QVALUES(positive_cells) }} }}\n              UNION\n              {{ SELECT (?n_pos AS ?cpos) (?n_symbol AS ?cell) WHERE {{ QVALUES(negative_cells) }} }}\n            }}\n            FILTER(?cpos = ?npos)\n          }}\n        }}\n      }}\n      UNION\n      {{\n        SELECT ?c_symbol ?c_state WHERE {{\n          {{ QVALUES(current) }}\n{halted}        }}\n      }}\n    }}\n  );\n",
        blank = TapeSymbol::Blank.iri(),
        applicable = applicable(""),
        halted = no_transition_applies(),
    )
}

/// Cells right of the head: on a right move they shift one closer (the cell
/// at 1 becomes the head), on a left move they shift away and the written
/// symbol lands at 1; unchanged when halted.
fn statement_positive_cells() -> String {
    format!(
        "  LET positive_cells = (\n    SELECT ?p_pos ?p_symbol WHERE {{\n      {{\n        SELECT (?opos - 1 AS ?p_pos) (?osym AS ?p_symbol) WHERE {{\n          {{ SELECT (?p_pos AS ?opos) (?p_symbol AS ?osym) WHERE {{ QVALUES(positive_cells) }} }}\n{right}          FILTER(?opos > 1)\n        }}\n      }}\n      UNION\n      {{\n        SELECT (?opos + 1 AS ?p_pos) (?osym AS ?p_symbol) WHERE {{\n          {{ SELECT (?p_pos AS ?opos) (?p_symbol AS ?osym) WHERE {{ QVALUES(positive_cells) }} }}\n{left}        }}\n      }}\n      UNION\n      {{\n        SELECT (1 AS ?p_pos) (?newsymbol AS ?p_symbol) WHERE {{\n{left}        }}\n      }}\n      UNION\n      {{\n        SELECT ?p_pos ?p_symbol WHERE {{\n          {{ QVALUES(positive_cells) }}\n{halted}        }}\n      }}\n    }}\n  );\n",
        right = applicable(&format!("          FILTER(?direction = <{NS}right>)\n")),
        left = applicable(&format!("          FILTER(?direction = <{NS}left>)\n")),
        halted = no_transition_applies(),
    )
}

/// Mirror image for cells left of the head.
fn statement_negative_cells() -> String {
    format!(
        "  LET negative_cells = (\n    SELECT ?n_pos ?n_symbol WHERE {{\n      {{\n        SELECT (?opos + 1 AS ?n_pos) (?osym AS ?n_symbol) WHERE {{\n          {{ SELECT (?n_pos AS ?opos) (?n_symbol AS ?osym) WHERE {{ QVALUES(negative_cells) }} }}\n{left}          FILTER(?opos < -1)\n        }}\n      }}\n      UNION\n      {{\n        SELECT (?opos - 1 AS ?n_pos) (?osym AS ?n_symbol) WHERE {{\n          {{ SELECT (?n_pos AS ?opos) (?n_symbol AS ?osym) WHERE {{ QVALUES(negative_cells) }} }}\n{right}        }}\n      }}\n      UNION\n      {{\n        SELECT (-1 AS ?n_pos) (?newsymbol AS ?n_symbol) WHERE {{\n{right}        }}\n      }}\n      UNION\n      {{\n        SELECT ?n_pos ?n_symbol WHERE {{\n          {{ QVALUES(negative_cells) }}\n{halted}        }}\n      }}\n    }}\n  );\n",
        right = applicable(&format!("          FILTER(?direction = <{NS}right>)\n")),
        left = applicable(&format!("          FILTER(?direction = <{NS}left>)\n")),
        halted = no_transition_applies(),
    )
}

/// Accepts any first symbol and halts in the final state in one step.
pub fn machine_immediate_accept() -> TuringMachineSpec {
    use TapeSymbol::*;
    use TmDirection::*;
    let step = |read| TmTransition {
        from_state: "q0",
        read,
        to_state: "qm",
        write: read,
        direction: Right,
    };
    TuringMachineSpec {
        name: "immediate-accept",
        initial_state: "q0",
        final_state: "qm",
        transitions: vec![step(Zero), step(One), step(Blank)],
        input: String::new(),
    }
}

/// Accepts words with an even number of ones: scans right flipping a parity
/// state, accepting on the trailing blank iff the parity is even.
pub fn machine_even_ones() -> TuringMachineSpec {
    use TapeSymbol::*;
    use TmDirection::*;
    let t = |from_state, read, to_state, write, direction| TmTransition {
        from_state,
        read,
        to_state,
        write,
        direction,
    };
    TuringMachineSpec {
        name: "even-ones",
        initial_state: "q0",
        final_state: "qm",
        transitions: vec![
            t("q0", Zero, "q0", Zero, Right),
            t("q0", One, "q1", One, Right),
            t("q1", Zero, "q1", Zero, Right),
            t("q1", One, "q0", One, Right),
            t("q0", Blank, "qm", Blank, Right),
            // halt without accepting in q1 on blank: no transition
        ],
        input: String::new(),
    }
}

/// A three-state machine that bounces off the left edge, scans right
/// flipping every bit, then checks the (flipped) last symbol: accepts iff
/// the original word ends in 0. Exercises left moves and both tape sides.
pub fn machine_flip_then_check() -> TuringMachineSpec {
    use TapeSymbol::*;
    use TmDirection::*;
    let t = |from_state, read, to_state, write, direction| TmTransition {
        from_state,
        read,
        to_state,
        write,
        direction,
    };
    TuringMachineSpec {
        name: "flip-then-check",
        initial_state: "q0",
        final_state: "qm",
        transitions: vec![
            // step left into the blanks, then bounce back
            t("q0", Zero, "q1", Zero, Left),
            t("q0", One, "q1", One, Left),
            t("q1", Blank, "q2", Blank, Right),
            // scan right, flipping bits
            t("q2", Zero, "q2", One, Right),
            t("q2", One, "q2", Zero, Right),
            // at the trailing blank, step back onto the last (flipped) bit
            t("q2", Blank, "q3", Blank, Left),
            // original last symbol was 0 iff it is now 1
            t("q3", One, "qm", One, Right),
            // on 0 (original 1) or blank (empty word): no transition, reject
        ],
        input: String::new(),
    }
}

/// The three machines bundled for differential testing.
pub fn bundled_machines() -> Vec<TuringMachineSpec> {
    vec![
        machine_immediate_accept(),
        machine_even_ones(),
        machine_flip_then_check(),
    ]
}
