//! Batched evaluation of `QVALUES`-bearing queries.
//!
//! A `MAP(?v, [I_1 | ... | I_m])` annotation splits the solution sequences a
//! query references by the values bound to `?v` (its *QDom*); the query is
//! then evaluated once per batch of keys against the restricted sequences and
//! the per-batch results are merged by the `REDUCE` strategy. For each
//! referenced sequence `r` and key `c`:
//!
//! 1. if any mapping of `r` binds `?v`, the batch keeps exactly the mappings
//!    binding `?v` to `c`;
//! 2. otherwise, if `r` binds a selector-projected variable, the batch keeps
//!    the mappings whose value for it lies in the selector's result with `?v`
//!    replaced by `c`;
//! 3. otherwise `r` passes through unchanged.
//!
//! `UNION` reduction is only equivalent to unbatched evaluation for queries
//! whose result decomposes per key (grouping keys functionally determined by
//! `?v`); annotations assert that property, they do not prove it. Multiple
//! keys per physical query (the batch width) cut the query count; width 1 is
//! the one-query-per-value scheme.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::interpreter::{instantiate_query, ExecCtx, RunError};
use crate::parser::{BatchAnnotation, QueryTemplate, Span};
use crate::solutions::{Environment, SequenceBuilder, SolutionSequence};
use crate::term::RdfTerm;

/// How to split the referenced sequences: the split variable and the selector
/// queries, each a unary `SELECT` mentioning the split variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapSpec {
    pub split_var: String,
    pub selectors: Vec<SelectorQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorQuery {
    pub text: String,
    pub projected_var: String,
}

/// How per-batch results are merged. `Union` concatenates them (multiset
/// semantics); other strategies are future enumeration points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceSpec {
    Union,
}

/// The union of all values bound to `split_var` across the sequences named by
/// `qvalues_vars`. Returned sorted for deterministic batch order.
pub fn compute_qdom(
    env: &Environment,
    qvalues_vars: &[&str],
    split_var: &str,
) -> BTreeSet<RdfTerm> {
    let mut dom = BTreeSet::new();
    for name in qvalues_vars {
        if let Some(seq) = env.get(name) {
            for row in seq.iter() {
                if let Some(term) = row.get(split_var) {
                    dom.insert(term.clone());
                }
            }
        }
    }
    dom
}

enum SplitPlan {
    /// Some mapping binds the split variable.
    ByKey,
    /// Bound selector-projected variables, as (selector index, variable).
    BySelectors(Vec<(usize, String)>),
    Passthrough,
}

fn classify(seq: &SolutionSequence, spec: &MapSpec, split_var: &str) -> SplitPlan {
    if seq.binds(split_var) {
        return SplitPlan::ByKey;
    }
    let bound: Vec<(usize, String)> = spec
        .selectors
        .iter()
        .enumerate()
        .filter(|(_, sel)| seq.binds(&sel.projected_var))
        .map(|(i, sel)| (i, sel.projected_var.clone()))
        .collect();
    if bound.is_empty() {
        SplitPlan::Passthrough
    } else {
        SplitPlan::BySelectors(bound)
    }
}

/// Evaluates one selector with the split variable replaced by `key`,
/// returning the set of terms bound to its projected variable.
fn selector_values(
    selector: &SelectorQuery,
    split_var: &str,
    key: &RdfTerm,
    ctx: &ExecCtx<'_>,
    span: Span,
) -> Result<HashSet<RdfTerm>, RunError> {
    if key.is_blank() {
        return Err(RunError::BlankBatchKey {
            key: key.to_sparql(),
        });
    }
    let text = crate::parser::scan::replace_variable(&selector.text, split_var, &key.to_sparql())
        .map_err(|_| RunError::BlankBatchKey {
            key: key.to_sparql(),
        })?;
    let result = ctx.select(&text, span)?;
    Ok(result
        .iter()
        .filter_map(|row| row.get(&selector.projected_var).cloned())
        .collect())
}

type SelectorCache = HashMap<(usize, RdfTerm), HashSet<RdfTerm>>;

fn restrict_sequences(
    env: &Environment,
    referenced: &[&str],
    spec: &MapSpec,
    keys: &[RdfTerm],
    selector_cache: &SelectorCache,
    spill_threshold: usize,
) -> Result<Environment, RunError> {
    let key_set: HashSet<&RdfTerm> = keys.iter().collect();
    let mut batch_env = Environment::new();
    for name in referenced {
        let seq = env.get(name).ok_or_else(|| RunError::UnassignedVariable {
            var: name.to_string(),
            span: Span::default(),
        })?;
        let restricted = match classify(seq, spec, &spec.split_var) {
            SplitPlan::ByKey => {
                let mut builder =
                    SequenceBuilder::new(seq.projected_vars().to_vec(), spill_threshold);
                for row in seq.iter() {
                    if row.get(&spec.split_var).is_some_and(|t| key_set.contains(t)) {
                        builder.push(row).map_err(|e| RunError::Backend {
                            span: Span::default(),
                            source: e.into(),
                        })?;
                    }
                }
                builder.finish().map_err(|e| RunError::Backend {
                    span: Span::default(),
                    source: e.into(),
                })?
            }
            SplitPlan::BySelectors(bound) => {
                // Allowed values per bound selector variable: union over the
                // group's keys.
                let mut allowed: Vec<(&String, HashSet<&RdfTerm>)> = Vec::new();
                for (idx, var) in &bound {
                    let mut values: HashSet<&RdfTerm> = HashSet::new();
                    for key in keys {
                        if let Some(set) = selector_cache.get(&(*idx, key.clone())) {
                            values.extend(set.iter());
                        }
                    }
                    allowed.push((var, values));
                }
                let mut builder =
                    SequenceBuilder::new(seq.projected_vars().to_vec(), spill_threshold);
                for row in seq.iter() {
                    let keep = allowed.iter().any(|(var, values)| {
                        row.get(var).is_some_and(|t| values.contains(t))
                    });
                    if keep {
                        builder.push(row).map_err(|e| RunError::Backend {
                            span: Span::default(),
                            source: e.into(),
                        })?;
                    }
                }
                builder.finish().map_err(|e| RunError::Backend {
                    span: Span::default(),
                    source: e.into(),
                })?
            }
            SplitPlan::Passthrough => seq.clone(),
        };
        batch_env.assign(*name, restricted);
    }
    Ok(batch_env)
}

/// Builds the batch environment for a single QDom value, exactly as the
/// splitting rules describe. Width-grouped evaluation generalizes this to a
/// slice of keys.
pub fn build_batch_env(
    env: &Environment,
    key: &RdfTerm,
    referenced: &[&str],
    spec: &MapSpec,
    ctx: &ExecCtx<'_>,
) -> Result<Environment, RunError> {
    let mut cache = SelectorCache::new();
    prefill_selector_cache(env, referenced, spec, std::slice::from_ref(key), ctx, &mut cache)?;
    restrict_sequences(
        env,
        referenced,
        spec,
        std::slice::from_ref(key),
        &cache,
        ctx.cfg.spill_threshold,
    )
}

fn prefill_selector_cache(
    env: &Environment,
    referenced: &[&str],
    spec: &MapSpec,
    keys: &[RdfTerm],
    ctx: &ExecCtx<'_>,
    cache: &mut SelectorCache,
) -> Result<(), RunError> {
    // Selectors are only consulted for rule-2 sequences; skip evaluation
    // entirely when no referenced sequence needs them.
    let mut needed: BTreeSet<usize> = BTreeSet::new();
    for name in referenced {
        if let Some(seq) = env.get(name) {
            if let SplitPlan::BySelectors(bound) = classify(seq, spec, &spec.split_var) {
                needed.extend(bound.iter().map(|(i, _)| *i));
            }
        }
    }
    for idx in needed {
        let selector = &spec.selectors[idx];
        for key in keys {
            if cache.contains_key(&(idx, key.clone())) {
                continue;
            }
            let values = selector_values(selector, &spec.split_var, key, ctx, Span::default())
                .map_err(|e| group_error(std::slice::from_ref(key), e))?;
            cache.insert((idx, key.clone()), values);
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct BatchOutcome {
    pub sequence: SolutionSequence,
    pub batches: usize,
    /// Largest instantiated query size across batches.
    pub max_query_bytes: usize,
    /// True when QDom was empty and the statement ran unbatched instead.
    pub fell_back_unbatched: bool,
}

/// Evaluates an annotated statement in batches and merges the results.
///
/// An empty QDom means no referenced sequence binds the split variable at
/// all (or they are all empty); zero batches would silently drop whatever
/// the query produces from the dataset itself, so the statement falls back
/// to plain evaluation instead.
pub fn eval_batched(
    tpl: &QueryTemplate,
    env: &Environment,
    annotation: &BatchAnnotation,
    ctx: &ExecCtx<'_>,
    span: Span,
) -> Result<BatchOutcome, RunError> {
    let referenced = tpl.referenced_variables();
    let spec = &annotation.map;
    let qdom = compute_qdom(env, &referenced, &spec.split_var);
    if qdom.is_empty() {
        let text = instantiate_query(tpl, env)?;
        let bytes = text.len();
        let sequence = ctx.select(&text, span)?;
        return Ok(BatchOutcome {
            sequence,
            batches: 0,
            max_query_bytes: bytes,
            fell_back_unbatched: true,
        });
    }

    let keys: Vec<RdfTerm> = qdom.into_iter().collect();
    let mut cache = SelectorCache::new();
    prefill_selector_cache(env, &referenced, spec, &keys, ctx, &mut cache)?;

    let width = ctx.cfg.batch_width.max(1);
    let groups: Vec<&[RdfTerm]> = keys.chunks(width).collect();
    let parallelism = ctx.cfg.parallelism.max(1).min(groups.len());

    let results: Vec<Option<(SolutionSequence, usize)>> = vec![None; groups.len()];
    let results = Mutex::new(results);
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<RunError>> = Mutex::new(None);

    let eval_group = |group_index: usize| -> Result<(), RunError> {
        let group = groups[group_index];
        let batch_env = restrict_sequences(
            env,
            &referenced,
            spec,
            group,
            &cache,
            ctx.cfg.spill_threshold,
        )
        .map_err(|e| group_error(group, e))?;
        let text = instantiate_query(tpl, &batch_env).map_err(|e| group_error(group, e))?;
        let bytes = text.len();
        let seq = ctx.select(&text, span).map_err(|e| group_error(group, e))?;
        results.lock().unwrap()[group_index] = Some((seq, bytes));
        Ok(())
    };

    if parallelism <= 1 {
        for i in 0..groups.len() {
            eval_group(i)?;
        }
    } else {
        std::thread::scope(|scope| {
            for _ in 0..parallelism {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= groups.len() || failure.lock().unwrap().is_some() {
                        break;
                    }
                    if let Err(e) = eval_group(i) {
                        *failure.lock().unwrap() = Some(e);
                        break;
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
    }

    // Merge in group order so repeated runs produce identical sequences
    // regardless of scheduling.
    let collected = results.into_inner().unwrap();
    let mut max_query_bytes = 0usize;
    let mut merged: Option<SequenceBuilder> = None;
    for entry in collected {
        let (seq, bytes) = entry.expect("all groups evaluated");
        max_query_bytes = max_query_bytes.max(bytes);
        match annotation.reduce {
            ReduceSpec::Union => {
                let builder = merged.get_or_insert_with(|| {
                    SequenceBuilder::new(seq.projected_vars().to_vec(), ctx.cfg.spill_threshold)
                });
                for row in seq.iter() {
                    builder.push(row).map_err(|e| RunError::Backend {
                        span,
                        source: e.into(),
                    })?;
                }
            }
        }
    }
    let sequence = merged
        .expect("at least one batch")
        .finish()
        .map_err(|e| RunError::Backend {
            span,
            source: e.into(),
        })?;
    Ok(BatchOutcome {
        sequence,
        batches: groups.len(),
        max_query_bytes,
        fell_back_unbatched: false,
    })
}

fn group_error(group: &[RdfTerm], source: RunError) -> RunError {
    if matches!(source, RunError::BatchFailed { .. }) {
        return source;
    }
    let key = group
        .iter()
        .map(RdfTerm::to_sparql)
        .collect::<Vec<_>>()
        .join(", ");
    RunError::BatchFailed {
        key,
        source: Box::new(source),
    }
}

/// Derives the Map used when an unannotated statement exceeds the
/// instantiated-query byte limit: split on the first projected variable of
/// the first `QVALUES` sequence, with no selectors. A heuristic; the trace
/// flags statements evaluated this way.
pub fn derive_fallback_map(tpl: &QueryTemplate, env: &Environment) -> Option<MapSpec> {
    let first = tpl.qvalues_sites.first()?;
    let seq = env.get(&first.variable)?;
    let split_var = seq.projected_vars().first()?.clone();
    Some(MapSpec {
        split_var,
        selectors: Vec::new(),
    })
}
