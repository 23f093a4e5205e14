//! Aggregate-over-empty-group compatibility rewrite.
//!
//! SPARQL defines `SELECT (COUNT(*) AS ?n) WHERE { ... }` with no `GROUP BY`
//! to produce exactly one row even when the pattern matches nothing (COUNT
//! and SUM default to 0, GROUP_CONCAT to ""). The embedded engine
//! short-circuits statically empty patterns (an empty `VALUES` block, a
//! constant-false filter) and drops that row. Rewriting
//!
//! ```text
//! Group([], aggs, P)
//! ```
//!
//! into
//!
//! ```text
//! Union(Group([], aggs, P), Extend(defaults, Filter(!Exists(P), {})))
//! ```
//!
//! restores the row: when `P` has solutions the right branch is empty, and
//! when `P` is empty the right branch contributes the defaults row. Grouped
//! aggregations (non-empty `GROUP BY`) correctly yield no rows over empty
//! input and are left untouched.

use spargebra::algebra::{AggregateExpression, AggregateFunction, Expression, GraphPattern};
use spargebra::term::Literal;
use spargebra::Query;

/// Applies the rewrite to every ungrouped aggregation in the query.
pub fn rewrite_empty_group_defaults(query: &mut Query) {
    match query {
        Query::Select { pattern, .. }
        | Query::Describe { pattern, .. }
        | Query::Construct { pattern, .. }
        | Query::Ask { pattern, .. } => rewrite_pattern(pattern),
    }
}

fn default_for(agg: &AggregateExpression) -> Option<Expression> {
    let literal = match agg {
        AggregateExpression::CountSolutions { .. } => Literal::from(0),
        AggregateExpression::FunctionCall { name, .. } => match name {
            AggregateFunction::Count | AggregateFunction::Sum | AggregateFunction::Avg => {
                Literal::from(0)
            }
            AggregateFunction::GroupConcat { .. } => Literal::from(""),
            // MIN, MAX and SAMPLE are errors over the empty group: unbound.
            _ => return None,
        },
    };
    Some(Expression::Literal(literal))
}

fn rewrite_pattern(pattern: &mut GraphPattern) {
    match pattern {
        GraphPattern::Join { left, right }
        | GraphPattern::Union { left, right }
        | GraphPattern::Minus { left, right }
        | GraphPattern::Lateral { left, right } => {
            rewrite_pattern(left);
            rewrite_pattern(right);
        }
        GraphPattern::LeftJoin { left, right, .. } => {
            rewrite_pattern(left);
            rewrite_pattern(right);
        }
        GraphPattern::Filter { inner, expr } => {
            rewrite_expression(expr);
            rewrite_pattern(inner);
        }
        GraphPattern::Extend { inner, .. }
        | GraphPattern::Graph { inner, .. }
        | GraphPattern::Project { inner, .. }
        | GraphPattern::Distinct { inner }
        | GraphPattern::Reduced { inner }
        | GraphPattern::Slice { inner, .. }
        | GraphPattern::OrderBy { inner, .. }
        | GraphPattern::Service { inner, .. } => rewrite_pattern(inner),
        GraphPattern::Group { inner, .. } => rewrite_pattern(inner),
        _ => {}
    }
    let GraphPattern::Group {
        inner,
        variables,
        aggregates,
    } = pattern
    else {
        return;
    };
    if !variables.is_empty() {
        return;
    }
    let mut fallback = GraphPattern::Filter {
        expr: Expression::Not(Box::new(Expression::Exists(inner.clone()))),
        inner: Box::new(GraphPattern::Bgp { patterns: vec![] }),
    };
    for (variable, aggregate) in aggregates.iter() {
        if let Some(expression) = default_for(aggregate) {
            fallback = GraphPattern::Extend {
                inner: Box::new(fallback),
                variable: variable.clone(),
                expression,
            };
        }
    }
    let group = pattern.clone();
    *pattern = GraphPattern::Union {
        left: Box::new(group),
        right: Box::new(fallback),
    };
}

fn rewrite_expression(expr: &mut Expression) {
    match expr {
        Expression::Exists(pattern) => rewrite_pattern(pattern),
        Expression::Or(a, b)
        | Expression::And(a, b)
        | Expression::Equal(a, b)
        | Expression::SameTerm(a, b)
        | Expression::Greater(a, b)
        | Expression::GreaterOrEqual(a, b)
        | Expression::Less(a, b)
        | Expression::LessOrEqual(a, b)
        | Expression::Add(a, b)
        | Expression::Subtract(a, b)
        | Expression::Multiply(a, b)
        | Expression::Divide(a, b) => {
            rewrite_expression(a);
            rewrite_expression(b);
        }
        Expression::In(a, list) => {
            rewrite_expression(a);
            list.iter_mut().for_each(rewrite_expression);
        }
        Expression::UnaryPlus(a) | Expression::UnaryMinus(a) | Expression::Not(a) => {
            rewrite_expression(a)
        }
        Expression::If(a, b, c) => {
            rewrite_expression(a);
            rewrite_expression(b);
            rewrite_expression(c);
        }
        Expression::Coalesce(list) | Expression::FunctionCall(_, list) => {
            list.iter_mut().for_each(rewrite_expression)
        }
        Expression::Bound(_) | Expression::NamedNode(_) | Expression::Literal(_) | Expression::Variable(_) => {}
    }
}

