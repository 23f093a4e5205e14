//! Procedure execution.
//!
//! Statements run in order against a single environment. Assignments bind the
//! result of the instantiated query; loops re-execute their body until the
//! termination condition is met (do-while: the body always runs at least
//! once). `QVALUES` sites are re-substituted from the current environment on
//! every execution, which is what makes self-referential frontier updates
//! work.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::backend::{BackendError, QueryBackend};
use crate::batcher;
use crate::parser::{
    validate_procedure, Condition, ProcedureAst, QueryTemplate, Span, Statement, StatementKind,
    ValidationReport,
};
use crate::solutions::{
    serialize_values_block, Environment, SolutionMapping, SolutionSequence, ValuesError,
    DEFAULT_SPILL_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    InMemory,
    Batched,
}

/// Execution knobs for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub strategy: Strategy,
    /// Safety guard against non-terminating loops.
    pub max_loop_iterations: Option<u64>,
    /// Flags a single query exceeding this duration (checked after the
    /// query returns; queries are not interrupted mid-flight).
    pub per_query_timeout: Option<Duration>,
    /// Whole-run deadline, checked at query and loop boundaries.
    pub run_deadline: Option<Duration>,
    /// Above this instantiated-query size an unannotated statement falls
    /// back to batched evaluation with a derived Map.
    pub values_byte_limit: Option<usize>,
    /// QDom keys per physical batch query.
    pub batch_width: usize,
    /// Concurrent batch evaluations.
    pub parallelism: usize,
    /// Rows per sequence kept in memory before spilling.
    pub spill_threshold: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: Strategy::InMemory,
            max_loop_iterations: Some(1_000_000),
            per_query_timeout: None,
            run_deadline: None,
            values_byte_limit: None,
            batch_width: 64,
            parallelism: 1,
            spill_threshold: DEFAULT_SPILL_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecStrategy {
    InMemory,
    Batched { width: usize, batches: usize },
    /// Batched because the in-memory instantiation exceeded the byte limit;
    /// the Map was derived heuristically.
    FallbackBatched { width: usize, batches: usize },
}

/// One record per executed statement instance.
#[derive(Debug, Clone)]
pub struct StatementRecord {
    pub span: Span,
    pub target: Option<String>,
    /// Size of the instantiated query text sent to the backend; for batched
    /// statements, the largest per-batch instantiation.
    pub query_bytes: usize,
    pub result_rows: usize,
    pub wall: Duration,
    pub strategy: ExecStrategy,
    pub loop_iteration: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct LoopRecord {
    pub span: Span,
    pub iterations: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub statements: Vec<StatementRecord>,
    pub loops: Vec<LoopRecord>,
}

impl RunTrace {
    pub fn peak_rows(&self) -> usize {
        self.statements.iter().map(|s| s.result_rows).max().unwrap_or(0)
    }

    pub fn used_fallback(&self) -> bool {
        self.statements
            .iter()
            .any(|s| matches!(s.strategy, ExecStrategy::FallbackBatched { .. }))
    }

    pub fn loop_iterations(&self, span: Span) -> Option<u64> {
        self.loops.iter().find(|l| l.span == span).map(|l| l.iterations)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("procedure failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("statement at byte {}..{}: {source}", span.start, span.end)]
    Backend {
        span: Span,
        #[source]
        source: BackendError,
    },
    #[error("statement at byte {}..{}: {source}", span.start, span.end)]
    Values {
        span: Span,
        #[source]
        source: ValuesError,
    },
    #[error("solution variable '{var}' is not assigned")]
    UnassignedVariable { var: String, span: Span },
    #[error("loop at byte {} exceeded the iteration guard after {iterations} iterations", span.start)]
    LoopGuardExceeded { span: Span, iterations: u64 },
    #[error("run deadline exceeded after {elapsed:?}")]
    DeadlineExceeded { elapsed: Duration },
    #[error("query at byte {} took {elapsed:?}, over the per-query timeout", span.start)]
    QueryTimeout { span: Span, elapsed: Duration },
    #[error("batch for key {key} failed: {source}")]
    BatchFailed {
        key: String,
        #[source]
        source: Box<RunError>,
    },
    #[error("batch key {key} is a blank node and cannot be substituted into a selector")]
    BlankBatchKey { key: String },
}

/// Hooks for observing a run; all methods default to no-ops.
pub trait RunObserver {
    fn after_statement(&mut self, _record: &StatementRecord, _env: &Environment) {}
    fn after_loop_iteration(&mut self, _loop_span: Span, _iteration: u64, _env: &Environment) {}
}

pub struct NoopObserver;

impl RunObserver for NoopObserver {}

/// Replaces each `QVALUES(v)` site with the `VALUES` block of `env[v]`; all
/// other bytes are preserved verbatim.
pub fn instantiate_query(tpl: &QueryTemplate, env: &Environment) -> Result<String, RunError> {
    let mut out = String::with_capacity(tpl.raw_text.len());
    let mut last = 0usize;
    for site in &tpl.qvalues_sites {
        let seq = env.get(&site.variable).ok_or_else(|| RunError::UnassignedVariable {
            var: site.variable.clone(),
            span: Span::default(),
        })?;
        let block = serialize_values_block(seq).map_err(|source| RunError::Values {
            span: Span::default(),
            source,
        })?;
        out.push_str(&tpl.raw_text[last..site.range.start]);
        out.push_str(&block);
        last = site.range.end;
    }
    out.push_str(&tpl.raw_text[last..]);
    Ok(out)
}

/// Shared execution context: backend, prologue and configuration.
pub struct ExecCtx<'a> {
    pub backend: &'a dyn QueryBackend,
    pub prologue: &'a str,
    pub cfg: &'a RunConfig,
    started: Instant,
}

impl<'a> ExecCtx<'a> {
    pub fn new(backend: &'a dyn QueryBackend, prologue: &'a str, cfg: &'a RunConfig) -> Self {
        ExecCtx {
            backend,
            prologue,
            cfg,
            started: Instant::now(),
        }
    }

    fn with_prologue(&self, text: &str) -> String {
        if self.prologue.is_empty() {
            text.to_string()
        } else {
            format!("{}\n{}", self.prologue, text)
        }
    }

    pub fn check_deadline(&self) -> Result<(), RunError> {
        if let Some(deadline) = self.cfg.run_deadline {
            let elapsed = self.started.elapsed();
            if elapsed > deadline {
                return Err(RunError::DeadlineExceeded { elapsed });
            }
        }
        Ok(())
    }

    pub fn select(&self, text: &str, span: Span) -> Result<SolutionSequence, RunError> {
        self.check_deadline()?;
        let started = Instant::now();
        let result = self
            .backend
            .eval_select_spilling(&self.with_prologue(text), self.cfg.spill_threshold)
            .map_err(|source| RunError::Backend { span, source })?;
        self.check_query_timeout(started, span)?;
        Ok(result)
    }

    pub fn ask(&self, text: &str, span: Span) -> Result<bool, RunError> {
        self.check_deadline()?;
        let started = Instant::now();
        let result = self
            .backend
            .eval_ask(&self.with_prologue(text))
            .map_err(|source| RunError::Backend { span, source })?;
        self.check_query_timeout(started, span)?;
        Ok(result)
    }

    fn check_query_timeout(&self, started: Instant, span: Span) -> Result<(), RunError> {
        if let Some(timeout) = self.cfg.per_query_timeout {
            let elapsed = started.elapsed();
            if elapsed > timeout {
                return Err(RunError::QueryTimeout { span, elapsed });
            }
        }
        Ok(())
    }
}

/// Runs a validated procedure, returning the sequence named by its `RETURN`
/// and the execution trace.
pub fn run_procedure(
    ast: &ProcedureAst,
    backend: &dyn QueryBackend,
    cfg: &RunConfig,
) -> Result<(SolutionSequence, RunTrace), RunError> {
    run_procedure_with_observer(ast, backend, cfg, &mut NoopObserver)
}

pub fn run_procedure_with_observer(
    ast: &ProcedureAst,
    backend: &dyn QueryBackend,
    cfg: &RunConfig,
    observer: &mut dyn RunObserver,
) -> Result<(SolutionSequence, RunTrace), RunError> {
    let report = validate_procedure(ast);
    if !report.is_empty() {
        return Err(RunError::Invalid(report));
    }
    let ctx = ExecCtx::new(backend, &ast.prologue, cfg);
    let mut runner = Runner {
        ctx,
        env: Environment::new(),
        trace: RunTrace::default(),
        observer,
    };
    for statement in &ast.statements {
        if let StatementKind::Return { variable } = &statement.kind {
            let seq = runner
                .env
                .get(variable)
                .cloned()
                .ok_or_else(|| RunError::UnassignedVariable {
                    var: variable.clone(),
                    span: statement.span,
                })?;
            return Ok((seq, runner.trace));
        }
        runner.exec_statement(statement, None)?;
    }
    unreachable!("validated procedures end with RETURN")
}

struct Runner<'a> {
    ctx: ExecCtx<'a>,
    env: Environment,
    trace: RunTrace,
    observer: &'a mut dyn RunObserver,
}

impl Runner<'_> {
    fn exec_statement(&mut self, statement: &Statement, loop_iteration: Option<u64>) -> Result<(), RunError> {
        match &statement.kind {
            StatementKind::Let { target, query, batch } => {
                self.exec_let(statement.span, target, query, batch.as_ref(), loop_iteration)
            }
            StatementKind::Loop { body, condition } => self.exec_loop(statement.span, body, condition),
            StatementKind::Return { .. } => {
                // Only reachable for non-final returns, which validation rejects.
                unreachable!("RETURN inside statement execution")
            }
        }
    }

    fn exec_let(
        &mut self,
        span: Span,
        target: &str,
        query: &QueryTemplate,
        batch: Option<&crate::parser::BatchAnnotation>,
        loop_iteration: Option<u64>,
    ) -> Result<(), RunError> {
        let started = Instant::now();
        let batchable = batch.filter(|_| {
            self.ctx.cfg.strategy == Strategy::Batched && !query.qvalues_sites.is_empty()
        });
        let (seq, query_bytes, strategy) = if let Some(annotation) = batchable {
            let outcome = batcher::eval_batched(query, &self.env, annotation, &self.ctx, span)?;
            (
                outcome.sequence,
                outcome.max_query_bytes,
                ExecStrategy::Batched {
                    width: self.ctx.cfg.batch_width,
                    batches: outcome.batches,
                },
            )
        } else {
            let text = instantiate_query(query, &self.env).map_err(|e| at_span(e, span))?;
            let over_limit = self
                .ctx
                .cfg
                .values_byte_limit
                .is_some_and(|limit| text.len() > limit);
            if over_limit && !query.qvalues_sites.is_empty() {
                // Prefer the statement's own annotation; derive a split
                // variable only for unannotated statements.
                let annotation = batch.cloned().or_else(|| {
                    batcher::derive_fallback_map(query, &self.env).map(|map| {
                        crate::parser::BatchAnnotation {
                            map,
                            reduce: crate::batcher::ReduceSpec::Union,
                        }
                    })
                });
                match annotation {
                    Some(annotation) => {
                        let outcome =
                            batcher::eval_batched(query, &self.env, &annotation, &self.ctx, span)?;
                        (
                            outcome.sequence,
                            outcome.max_query_bytes,
                            ExecStrategy::FallbackBatched {
                                width: self.ctx.cfg.batch_width,
                                batches: outcome.batches,
                            },
                        )
                    }
                    None => {
                        let bytes = text.len();
                        (self.ctx.select(&text, span)?, bytes, ExecStrategy::InMemory)
                    }
                }
            } else {
                let bytes = text.len();
                (self.ctx.select(&text, span)?, bytes, ExecStrategy::InMemory)
            }
        };
        let record = StatementRecord {
            span,
            target: Some(target.to_string()),
            query_bytes,
            result_rows: seq.len(),
            wall: started.elapsed(),
            strategy,
            loop_iteration,
        };
        self.env.assign(target, seq);
        self.observer.after_statement(&record, &self.env);
        self.trace.statements.push(record);
        Ok(())
    }

    fn exec_loop(&mut self, span: Span, body: &[Statement], condition: &Condition) -> Result<(), RunError> {
        let mut iterations = 0u64;
        loop {
            self.ctx.check_deadline()?;
            let snapshot = match condition {
                Condition::Fixpoint(var) => Some(
                    self.env
                        .get(var)
                        .map(|s| s.distinct_set())
                        .unwrap_or_default(),
                ),
                _ => None,
            };
            for statement in body {
                self.exec_statement(statement, Some(iterations + 1))?;
            }
            iterations += 1;
            self.observer.after_loop_iteration(span, iterations, &self.env);
            if evaluate_condition(condition, snapshot.as_ref(), &self.env, iterations, &self.ctx, span)? {
                break;
            }
            if let Some(max) = self.ctx.cfg.max_loop_iterations {
                if iterations >= max {
                    return Err(RunError::LoopGuardExceeded { span, iterations });
                }
            }
        }
        self.trace.loops.push(LoopRecord { span, iterations });
        Ok(())
    }
}

/// Decides whether a loop terminates after a completed body execution.
///
/// `TIMES t` terminates once the body has run `t` times; `FIXPOINT(v)`
/// terminates when `v` holds the same set of distinct mappings as at body
/// start; an ASK condition terminates when the instantiated query evaluates
/// to true against the post-body environment.
pub fn evaluate_condition(
    condition: &Condition,
    fixpoint_snapshot: Option<&HashSet<SolutionMapping>>,
    env_at_body_end: &Environment,
    completed_iterations: u64,
    ctx: &ExecCtx<'_>,
    span: Span,
) -> Result<bool, RunError> {
    match condition {
        Condition::Times(t) => Ok(completed_iterations >= *t),
        Condition::Fixpoint(var) => {
            let before = fixpoint_snapshot.expect("fixpoint snapshot taken at body start");
            let after = env_at_body_end
                .get(var)
                .map(|s| s.distinct_set())
                .unwrap_or_default();
            Ok(*before == after)
        }
        Condition::Ask(query) => {
            let text = instantiate_query(query, env_at_body_end).map_err(|e| at_span(e, span))?;
            ctx.ask(&text, span)
        }
    }
}

fn at_span(err: RunError, span: Span) -> RunError {
    match err {
        RunError::UnassignedVariable { var, .. } => RunError::UnassignedVariable { var, span },
        RunError::Values { source, .. } => RunError::Values { span, source },
        other => other,
    }
}
