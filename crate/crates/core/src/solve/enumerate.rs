//! Brute-force joint enumeration. Exponential, used as the reference that
//! reduction results are checked against.

use std::cell::RefCell;
use std::collections::BTreeMap;

use crate::idiag::{Diagram, NodeId, NodeKind, Payload};

use super::factor::Assignments;
use super::reduce::unassessed;
use super::values::{compute_functional, NumValue, Scenario};
use super::{Discounting, SolveError};

pub const MAX_JOINT_STATES: usize = 1_000_000;

/// Every joint state of the diagram's chance variables with its
/// probability, by the chain rule over a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    /// Variables in topological order; each entry's states follow it.
    pub nodes: Vec<NodeId>,
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl JointDistribution {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Marginal distribution of one variable.
    pub fn marginal(&self, id: NodeId, card: usize) -> Option<Vec<f64>> {
        let pos = self.nodes.iter().position(|n| *n == id)?;
        let mut out = vec![0.0; card];
        for (states, p) in &self.entries {
            out[states[pos]] += p;
        }
        Some(out)
    }

    pub fn assignment(&self, states: &[usize]) -> BTreeMap<NodeId, usize> {
        self.nodes.iter().copied().zip(states.iter().copied()).collect()
    }
}

pub fn joint_enumeration(d: &Diagram) -> Result<JointDistribution, SolveError> {
    let pending = unassessed(d, None);
    if !pending.is_empty() {
        return Err(SolveError::Unassessed(pending));
    }
    let order = d.topological_order().ok_or_else(|| SolveError::Precondition("diagram has a cycle".into()))?;
    let nodes: Vec<NodeId> = order
        .into_iter()
        .filter(|id| d.node(*id).map(|n| n.kind == NodeKind::Chance && n.cpt().is_some()).unwrap_or(false))
        .collect();
    let cards: Vec<usize> = nodes.iter().map(|id| d.node(*id).map(|n| n.possibilities.len())).collect::<Result<_, _>>()?;
    let total = cards.iter().try_fold(1usize, |acc, c| acc.checked_mul(*c));
    match total {
        Some(t) if t <= MAX_JOINT_STATES => {}
        _ => return Err(SolveError::StateSpaceOverflow { limit: MAX_JOINT_STATES }),
    }
    let card_of: BTreeMap<NodeId, usize> = d
        .nodes()
        .filter(|n| n.is_discrete())
        .map(|n| (n.id, n.possibilities.len()))
        .collect();
    let mut entries = Vec::new();
    for states in Assignments::new(&cards) {
        let assign: BTreeMap<NodeId, usize> = nodes.iter().copied().zip(states.iter().copied()).collect();
        let mut p = 1.0;
        for (id, s) in nodes.iter().zip(&states) {
            let cpt = d.node(*id)?.cpt().expect("assessed");
            let ps: Vec<usize> = cpt.parents.iter().map(|q| assign[q]).collect();
            let pc: Vec<usize> = cpt.parents.iter().map(|q| card_of[q]).collect();
            p *= cpt.row(&ps, &pc)[*s];
        }
        entries.push((states, p));
    }
    Ok(JointDistribution { nodes, entries })
}

/// The three expectations evaluation needs, computed by enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumeratedExpectations {
    pub p_ta: f64,
    pub e_invest_pv: f64,
    /// E[PV(contribution)·1{TA = success}].
    pub e_contrib_pv_joint: f64,
}

impl EnumeratedExpectations {
    pub fn e_npv_fund(&self) -> f64 {
        self.e_contrib_pv_joint - self.e_invest_pv
    }
}

struct FullScenario<'a> {
    d: &'a Diagram,
    disc: &'a Discounting,
    outcomes: BTreeMap<NodeId, usize>,
    memo: RefCell<BTreeMap<NodeId, NumValue>>,
}

impl Scenario for FullScenario<'_> {
    fn outcome(&self, id: NodeId) -> Result<usize, SolveError> {
        self.outcomes.get(&id).copied().ok_or(SolveError::Unassessed(vec![id]))
    }

    fn computed(&self, id: NodeId) -> Result<NumValue, SolveError> {
        if let Some(v) = self.memo.borrow().get(&id) {
            return Ok(v.clone());
        }
        let v = compute_functional(self.d, id, self, self.disc)?;
        self.memo.borrow_mut().insert(id, v.clone());
        Ok(v)
    }
}

/// Value of a core quantity node in a scenario, as a present value.
fn core_pv(s: &FullScenario<'_>, id: NodeId) -> Result<f64, SolveError> {
    let node = s.d.node(id)?;
    let v = match &node.payload {
        Some(Payload::Cpt(_)) => node.possibilities[s.outcome(id)?]
            .value
            .map(NumValue::Scalar)
            .ok_or(SolveError::NonNumeric(id))?,
        Some(Payload::Function(_)) | Some(Payload::Series(_)) => s.computed(id)?,
        _ => return Err(SolveError::Unassessed(vec![id])),
    };
    v.present_value(s.disc.rate)
}

pub fn enumerated_expectations(d: &Diagram, disc: &Discounting) -> Result<EnumeratedExpectations, SolveError> {
    let core = d.core().ok_or(SolveError::NoCore)?;
    let joint = joint_enumeration(d)?;
    let success = d.node(core.technical)?.possibility_index(crate::idiag::SUCCESS).ok_or(SolveError::NoCore)?;
    let mut out = EnumeratedExpectations { p_ta: 0.0, e_invest_pv: 0.0, e_contrib_pv_joint: 0.0 };
    for (states, p) in &joint.entries {
        let s = FullScenario { d, disc, outcomes: joint.assignment(states), memo: RefCell::new(BTreeMap::new()) };
        let ta = if s.outcome(core.technical)? == success { 1.0 } else { 0.0 };
        out.p_ta += p * ta;
        out.e_invest_pv += p * core_pv(&s, core.investment)?;
        out.e_contrib_pv_joint += p * ta * core_pv(&s, core.contribution)?;
    }
    Ok(out)
}
