//! Units of measure over the three base dimensions used by project models:
//! currency, item and time.

use std::fmt;
use std::ops::{Div, Mul};

use serde::{Deserialize, Serialize};

/// Exponents over the base dimensions `{currency, item, time}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Dimension {
    pub currency: i8,
    pub item: i8,
    pub time: i8,
}

impl Dimension {
    pub const NONE: Dimension = Dimension { currency: 0, item: 0, time: 0 };
    pub const CURRENCY: Dimension = Dimension { currency: 1, item: 0, time: 0 };
    pub const ITEM: Dimension = Dimension { currency: 0, item: 1, time: 0 };
    pub const TIME: Dimension = Dimension { currency: 0, item: 0, time: 1 };

    pub fn is_dimensionless(&self) -> bool {
        *self == Self::NONE
    }
}

impl Mul for Dimension {
    type Output = Dimension;
    fn mul(self, rhs: Dimension) -> Dimension {
        Dimension {
            currency: self.currency + rhs.currency,
            item: self.item + rhs.item,
            time: self.time + rhs.time,
        }
    }
}

impl Div for Dimension {
    type Output = Dimension;
    fn div(self, rhs: Dimension) -> Dimension {
        Dimension {
            currency: self.currency - rhs.currency,
            item: self.item - rhs.item,
            time: self.time - rhs.time,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("1");
        }
        let mut num = Vec::new();
        let mut den = Vec::new();
        for (name, exp) in [("currency", self.currency), ("item", self.item), ("time", self.time)] {
            match exp {
                0 => {}
                1 => num.push(name.to_string()),
                e if e > 1 => num.push(format!("{name}^{e}")),
                -1 => den.push(name.to_string()),
                e => den.push(format!("{name}^{}", -e)),
            }
        }
        let num = if num.is_empty() { "1".to_string() } else { num.join("·") };
        if den.is_empty() {
            f.write_str(&num)
        } else {
            write!(f, "{num}/{}", den.join("·"))
        }
    }
}

/// A unit: a dimension plus a scale relative to the base unit of that
/// dimension (1000.0 for "thousands of items").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub dimension: Dimension,
    pub scale: f64,
}

impl Default for Unit {
    fn default() -> Self {
        Unit::dimensionless()
    }
}

impl Unit {
    pub fn new(dimension: Dimension, scale: f64) -> Self {
        Unit { dimension, scale }
    }

    pub fn dimensionless() -> Self {
        Unit::new(Dimension::NONE, 1.0)
    }

    pub fn currency() -> Self {
        Unit::new(Dimension::CURRENCY, 1.0)
    }

    pub fn items() -> Self {
        Unit::new(Dimension::ITEM, 1.0)
    }

    pub fn periods() -> Self {
        Unit::new(Dimension::TIME, 1.0)
    }

    /// Currency per period, the unit of a cash-flow series.
    pub fn currency_per_period() -> Self {
        Unit::currency() / Unit::periods()
    }

    pub fn scaled(self, scale: f64) -> Self {
        Unit { scale: self.scale * scale, ..self }
    }

    pub fn same_dimension(&self, other: &Unit) -> bool {
        self.dimension == other.dimension
    }

    /// Factor converting a quantity in `self` into `target`.
    pub fn factor_to(&self, target: &Unit) -> Result<f64, UnitViolation> {
        if !self.same_dimension(target) {
            return Err(UnitViolation::Incompatible { left: self.dimension, right: target.dimension });
        }
        Ok(self.scale / target.scale)
    }
}

impl Mul for Unit {
    type Output = Unit;
    fn mul(self, rhs: Unit) -> Unit {
        Unit::new(self.dimension * rhs.dimension, self.scale * rhs.scale)
    }
}

impl Div for Unit {
    type Output = Unit;
    fn div(self, rhs: Unit) -> Unit {
        Unit::new(self.dimension / rhs.dimension, self.scale / rhs.scale)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 1.0 {
            write!(f, "{}", self.dimension)
        } else {
            write!(f, "{}×{}", self.scale, self.dimension)
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum UnitViolation {
    #[error("cannot combine {left} with {right}")]
    Incompatible { left: Dimension, right: Dimension },
    #[error("result has dimension {found}, node declares {declared}")]
    ResultMismatch { declared: Dimension, found: Dimension },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitOp {
    Add,
    Subtract,
    Multiply,
    Divide,
}

/// How operand values map onto the result unit.
#[derive(Debug, Clone, PartialEq)]
pub enum Conversion {
    /// Multiplicative ops: one factor applied to the raw product/quotient.
    Factor(f64),
    /// Additive ops: one factor per operand.
    PerOperand(Vec<f64>),
}

/// Reconcile operand units for `op` against the desired result unit.
pub fn reconcile(op: UnitOp, operands: &[Unit], target: &Unit) -> Result<Conversion, UnitViolation> {
    match op {
        UnitOp::Add | UnitOp::Subtract => {
            let factors = operands
                .iter()
                .map(|u| u.factor_to(target))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Conversion::PerOperand(factors))
        }
        UnitOp::Multiply | UnitOp::Divide => {
            let mut acc = match operands.first() {
                Some(u) => *u,
                None => Unit::dimensionless(),
            };
            for u in operands.iter().skip(1) {
                acc = if op == UnitOp::Multiply { acc * *u } else { acc / *u };
            }
            if acc.dimension != target.dimension {
                return Err(UnitViolation::ResultMismatch { declared: target.dimension, found: acc.dimension });
            }
            Ok(Conversion::Factor(acc.scale / target.scale))
        }
    }
}
