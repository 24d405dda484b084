//! Numeric values of nodes in a given scenario (one state per discrete
//! variable).

use std::collections::BTreeMap;

use crate::idiag::{expand_time_series, Diagram, Expr, NodeId, Payload, TimeSeries};

use super::{npv, Discounting, SolveError};

/// A scalar or a per-period series of length `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub enum NumValue {
    Scalar(f64),
    Series(Vec<f64>),
}

impl NumValue {
    fn zip(&self, other: &NumValue, f: impl Fn(f64, f64) -> f64) -> NumValue {
        match (self, other) {
            (NumValue::Scalar(a), NumValue::Scalar(b)) => NumValue::Scalar(f(*a, *b)),
            (NumValue::Scalar(a), NumValue::Series(b)) => NumValue::Series(b.iter().map(|y| f(*a, *y)).collect()),
            (NumValue::Series(a), NumValue::Scalar(b)) => NumValue::Series(a.iter().map(|x| f(*x, *b)).collect()),
            (NumValue::Series(a), NumValue::Series(b)) => {
                NumValue::Series(a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            }
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> NumValue {
        match self {
            NumValue::Scalar(a) => NumValue::Scalar(f(*a)),
            NumValue::Series(a) => NumValue::Series(a.iter().map(|x| f(*x)).collect()),
        }
    }

    /// Present value: series are discounted, scalars are taken as already
    /// present amounts.
    pub fn present_value(&self, rate: f64) -> Result<f64, SolveError> {
        match self {
            NumValue::Scalar(v) => Ok(*v),
            NumValue::Series(flows) => npv(flows, rate),
        }
    }
}

/// Where expression evaluation reads predecessor values from.
pub(crate) trait Scenario {
    /// State index of a discrete node.
    fn outcome(&self, id: NodeId) -> Result<usize, SolveError>;
    /// Value of a functional node.
    fn computed(&self, id: NodeId) -> Result<NumValue, SolveError>;
}

/// Value of any node in the scenario.
pub(crate) fn node_value(
    d: &Diagram,
    id: NodeId,
    scenario: &dyn Scenario,
) -> Result<NumValue, SolveError> {
    let node = d.node(id)?;
    match &node.payload {
        Some(Payload::Cpt(_)) => {
            let state = scenario.outcome(id)?;
            node.possibilities
                .get(state)
                .and_then(|p| p.value)
                .map(NumValue::Scalar)
                .ok_or(SolveError::NonNumeric(id))
        }
        Some(Payload::Function(_)) | Some(Payload::Series(_)) => scenario.computed(id),
        _ => Err(SolveError::NonNumeric(id)),
    }
}

/// Compute a functional node's value from its predecessors.
pub(crate) fn compute_functional(
    d: &Diagram,
    id: NodeId,
    scenario: &dyn Scenario,
    disc: &Discounting,
) -> Result<NumValue, SolveError> {
    match &d.node(id)?.payload {
        Some(Payload::Function(f)) => eval_expr(d, &f.expr, scenario, disc),
        Some(Payload::Series(ts)) => {
            let mut params = BTreeMap::new();
            for p in ts.parameter_nodes() {
                match node_value(d, p, scenario)? {
                    NumValue::Scalar(v) => {
                        params.insert(p, v);
                    }
                    NumValue::Series(_) => return Err(SolveError::NonNumeric(p)),
                }
            }
            let mut resolved = ts.clone();
            resolved.start = effective_start(d, ts)?;
            let flows = expand_time_series(&resolved, &params, disc.horizon)
                .map_err(|source| SolveError::Series { node: id, source })?;
            Ok(NumValue::Series(flows.0))
        }
        Some(_) => Err(SolveError::NonNumeric(id)),
        None => Err(SolveError::Unassessed(vec![id])),
    }
}

/// Start period after following any `follows` chain.
pub(crate) fn effective_start(d: &Diagram, ts: &TimeSeries) -> Result<u32, SolveError> {
    let mut start = ts.start;
    let mut cursor = ts.follows;
    let mut hops = 0;
    while let Some(prev) = cursor {
        hops += 1;
        if hops > d.node_count() {
            return Err(SolveError::Precondition("cyclic series sequencing".into()));
        }
        match &d.node(prev)?.payload {
            Some(Payload::Series(p)) => {
                start += p.start - 1 + p.duration;
                cursor = p.follows;
            }
            _ => return Err(SolveError::Unassessed(vec![prev])),
        }
    }
    Ok(start)
}

fn eval_expr(d: &Diagram, e: &Expr, s: &dyn Scenario, disc: &Discounting) -> Result<NumValue, SolveError> {
    Ok(match e {
        Expr::Var(id) => node_value(d, *id, s)?,
        Expr::Const(c) => NumValue::Scalar(*c),
        Expr::Sum(xs) => {
            let mut acc = NumValue::Scalar(0.0);
            for x in xs {
                acc = acc.zip(&eval_expr(d, x, s, disc)?, |a, b| a + b);
            }
            acc
        }
        Expr::Product(xs) => {
            let mut acc = NumValue::Scalar(1.0);
            for x in xs {
                acc = acc.zip(&eval_expr(d, x, s, disc)?, |a, b| a * b);
            }
            acc
        }
        Expr::Difference(a, b) => eval_expr(d, a, s, disc)?.zip(&eval_expr(d, b, s, disc)?, |x, y| x - y),
        Expr::Quotient(a, b) => {
            let (num, den) = (eval_expr(d, a, s, disc)?, eval_expr(d, b, s, disc)?);
            let out = num.zip(&den, |x, y| x / y);
            let finite = match &out {
                NumValue::Scalar(v) => v.is_finite(),
                NumValue::Series(v) => v.iter().all(|x| x.is_finite()),
            };
            if !finite {
                return Err(SolveError::Precondition("division by zero in a deterministic function".into()));
            }
            out
        }
        Expr::Negate(a) => eval_expr(d, a, s, disc)?.map(|x| -x),
        Expr::Threshold { value, cmp, threshold } => {
            eval_expr(d, value, s, disc)?.map(|x| if cmp.passes(x, *threshold) { 1.0 } else { 0.0 })
        }
        Expr::PresentValue(a) => NumValue::Scalar(eval_expr(d, a, s, disc)?.present_value(disc.rate)?),
        Expr::Gate { node, label, then } => {
            let idx = d
                .node(*node)?
                .possibility_index(label)
                .ok_or_else(|| SolveError::Precondition(format!("{node} has no outcome `{label}`")))?;
            let inner = eval_expr(d, then, s, disc)?;
            if s.outcome(*node)? == idx {
                inner
            } else {
                inner.map(|_| 0.0)
            }
        }
    })
}
