//! Deterministic functions: expression trees over a node's direct predecessors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::units::{Dimension, Unit, UnitViolation};
use super::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    AtLeast,
    AtMost,
}

impl Comparison {
    pub fn passes(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtLeast => value >= threshold,
            Comparison::AtMost => value <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expr {
    /// The value of a predecessor node.
    Var(NodeId),
    /// Dimensionless constant (conversion factors, signs).
    Const(f64),
    Sum(Vec<Expr>),
    Difference(Box<Expr>, Box<Expr>),
    Product(Vec<Expr>),
    Quotient(Box<Expr>, Box<Expr>),
    Negate(Box<Expr>),
    /// 1 when `value` passes `threshold` in direction `cmp`, else 0.
    Threshold { value: Box<Expr>, cmp: Comparison, threshold: f64 },
    /// Present value of a per-period series at the project discount rate.
    PresentValue(Box<Expr>),
    /// `then` when predecessor `node` takes outcome `label`, else 0.
    Gate { node: NodeId, label: String, then: Box<Expr> },
}

impl Expr {
    pub fn var(id: NodeId) -> Expr {
        Expr::Var(id)
    }

    pub fn sum_of(ids: impl IntoIterator<Item = NodeId>) -> Expr {
        Expr::Sum(ids.into_iter().map(Expr::Var).collect())
    }

    pub fn pv(inner: Expr) -> Expr {
        Expr::PresentValue(Box::new(inner))
    }

    /// Every node the expression reads.
    pub fn references(&self) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut BTreeSet<NodeId>) {
        match self {
            Expr::Var(id) => {
                out.insert(*id);
            }
            Expr::Const(_) => {}
            Expr::Sum(xs) | Expr::Product(xs) => xs.iter().for_each(|x| x.collect_refs(out)),
            Expr::Difference(a, b) | Expr::Quotient(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            Expr::Negate(a) | Expr::PresentValue(a) => a.collect_refs(out),
            Expr::Threshold { value, .. } => value.collect_refs(out),
            Expr::Gate { node, then, .. } => {
                out.insert(*node);
                then.collect_refs(out);
            }
        }
    }

    /// Infer the dimension of the expression, reporting the first
    /// additive mismatch.
    pub fn dimension(&self, unit_of: &dyn Fn(NodeId) -> Option<Unit>) -> Result<Dimension, UnitViolation> {
        match self {
            Expr::Var(id) => Ok(unit_of(*id).map(|u| u.dimension).unwrap_or(Dimension::NONE)),
            Expr::Const(_) => Ok(Dimension::NONE),
            Expr::Sum(xs) => {
                let mut dims = xs.iter().map(|x| x.dimension(unit_of));
                let first = match dims.next() {
                    Some(d) => d?,
                    None => return Ok(Dimension::NONE),
                };
                for d in dims {
                    let d = d?;
                    if d != first {
                        return Err(UnitViolation::Incompatible { left: first, right: d });
                    }
                }
                Ok(first)
            }
            Expr::Difference(a, b) => {
                let (da, db) = (a.dimension(unit_of)?, b.dimension(unit_of)?);
                if da != db {
                    return Err(UnitViolation::Incompatible { left: da, right: db });
                }
                Ok(da)
            }
            Expr::Product(xs) => xs
                .iter()
                .try_fold(Dimension::NONE, |acc, x| Ok(acc * x.dimension(unit_of)?)),
            Expr::Quotient(a, b) => Ok(a.dimension(unit_of)? / b.dimension(unit_of)?),
            Expr::Negate(a) => a.dimension(unit_of),
            Expr::Threshold { value, .. } => {
                value.dimension(unit_of)?;
                Ok(Dimension::NONE)
            }
            Expr::PresentValue(a) => Ok(a.dimension(unit_of)? * Dimension::TIME),
            Expr::Gate { then, .. } => then.dimension(unit_of),
        }
    }
}

/// A deterministic node's function together with its declared result unit
/// (taken from the owning node).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetFunction {
    pub expr: Expr,
}

impl DetFunction {
    pub fn new(expr: Expr) -> Self {
        DetFunction { expr }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn references_include_gate_nodes() {
        let e = Expr::Gate {
            node: NodeId(1),
            label: "success".into(),
            then: Box::new(Expr::Product(vec![Expr::Var(NodeId(2)), Expr::Const(2.0)])),
        };
        assert_eq!(e.references().into_iter().collect::<Vec<_>>(), vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn pv_multiplies_by_time() {
        let unit = |_| Some(Unit::currency_per_period());
        let d = Expr::pv(Expr::Var(NodeId(0))).dimension(&unit).unwrap();
        assert_eq!(d, Dimension::CURRENCY);
    }
}
