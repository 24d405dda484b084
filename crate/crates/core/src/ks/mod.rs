//! Knowledge sources: a condition saying when a source applies and a
//! dialog-driven action that turns the user's answers into a blackboard
//! delta.

pub mod dialog;
mod specialists;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::board::{AssessmentStatus, Blackboard, BoardError, Change, Delta};
use crate::idiag::{
    reconcile, Comparison, Conversion, Cpt, NodeId, Requirement, ThreePoint, Unit, UnitOp, UnitViolation,
};

pub use dialog::{Answer, AnswerError, Answers, ChoiceOption, DialogProgram, DialogStep, Guard, InputSpec};
pub use specialists::MAX_CRITERIA_DEPTH;

/// Weights on the 10th/50th/90th fractile estimates.
pub const THREE_POINT_WEIGHTS: [f64; 3] = [0.25, 0.5, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KsKind {
    Specialist,
    Utility,
    ControlSpecialist,
}

pub type Condition = fn(&Blackboard, Option<NodeId>) -> bool;
pub type ProgramFn = fn(&Blackboard, Option<NodeId>) -> DialogProgram;
pub type ActionFn = fn(&Blackboard, Option<NodeId>, &Answers) -> Result<Delta, KsError>;

pub struct KnowledgeSource {
    pub id: &'static str,
    pub kind: KsKind,
    pub title: &'static str,
    pub condition: Condition,
    pub program: ProgramFn,
    pub action: ActionFn,
}

impl std::fmt::Debug for KnowledgeSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeSource").field("id", &self.id).field("kind", &self.kind).finish()
    }
}

impl KnowledgeSource {
    pub fn applies(&self, bb: &Blackboard, target: Option<NodeId>) -> bool {
        (self.condition)(bb, target)
    }

    pub fn program(&self, bb: &Blackboard, target: Option<NodeId>) -> DialogProgram {
        (self.program)(bb, target)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KsError {
    #[error("{ks} does not apply to {target:?}")]
    NotApplicable { ks: String, target: Option<NodeId> },
    #[error("no knowledge source applies to {0}")]
    NoSource(NodeId),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error("{0}")]
    Rejected(String),
    #[error(transparent)]
    Board(#[from] BoardError),
}

/// Every knowledge source, in priority order.
pub fn registry() -> &'static [KnowledgeSource] {
    specialists::REGISTRY
}

pub fn find(id: &str) -> Option<&'static KnowledgeSource> {
    registry().iter().find(|k| k.id == id)
}

/// All knowledge sources whose condition holds for `target`. With no
/// target only utilities and control specialists are considered.
pub fn eligible_ks(bb: &Blackboard, target: Option<NodeId>) -> Vec<&'static KnowledgeSource> {
    registry()
        .iter()
        .filter(|k| (k.kind == KsKind::Specialist) == target.is_some() && k.applies(bb, target))
        .collect()
}

/// The specialist that handles `target`, if any.
pub fn specialist_for(bb: &Blackboard, target: NodeId) -> Option<&'static KnowledgeSource> {
    eligible_ks(bb, Some(target)).into_iter().next()
}

/// Run a knowledge source: check its condition and the answers, build the
/// delta and apply it. On any error the blackboard is untouched.
pub fn execute_ks(
    bb: &mut Blackboard,
    ks: &KnowledgeSource,
    target: Option<NodeId>,
    answers: &Answers,
) -> Result<Delta, KsError> {
    if !ks.applies(bb, target) {
        return Err(KsError::NotApplicable { ks: ks.id.into(), target });
    }
    ks.program(bb, target).check(answers)?;
    let delta = (ks.action)(bb, target, answers)?;
    bb.apply(delta.clone())?;
    Ok(delta)
}

/// Every prompt id any program can ask.
pub fn prompt_catalog() -> BTreeSet<String> {
    specialists::all_prompt_ids()
}

/// Probabilities of the low, base and high settings.
pub fn discretize_three_point(tp: &ThreePoint) -> Result<[(f64, f64); 3], KsError> {
    if !tp.is_valid() {
        return Err(KsError::Rejected("estimates must be finite with low <= base <= high".into()));
    }
    let [wl, wb, wh] = THREE_POINT_WEIGHTS;
    Ok([(tp.low, wl), (tp.base, wb), (tp.high, wh)])
}

/// Probability that a performance measure meets its threshold. Values
/// exactly at the threshold pass.
pub fn performance_to_hurdle(threshold: f64, direction: Comparison, tp: &ThreePoint) -> Result<f64, KsError> {
    Ok(discretize_three_point(tp)?
        .iter()
        .filter(|(v, _)| direction.passes(*v, threshold))
        .map(|(_, p)| p)
        .sum())
}

/// Table for a task (or decomposed hurdle) given its binary criteria:
/// success with probability `residual` when every criterion succeeds,
/// certain failure otherwise.
pub fn build_task_cpt(criteria: &[NodeId], residual: f64) -> Result<Cpt, KsError> {
    let passing = vec![vec![0usize]; criteria.len()];
    build_criteria_cpt(criteria, &vec![2; criteria.len()], &passing, residual)
}

/// As [`build_task_cpt`] for criteria with any number of outcomes, each
/// with its own set of passing outcome indices.
pub fn build_criteria_cpt(
    criteria: &[NodeId],
    cards: &[usize],
    passing: &[Vec<usize>],
    residual: f64,
) -> Result<Cpt, KsError> {
    if criteria.is_empty() {
        return Err(KsError::Rejected("a decomposed node needs at least one criterion".into()));
    }
    if !(0.0..=1.0).contains(&residual) {
        return Err(KsError::Rejected(format!("{residual} is not a probability")));
    }
    let rows = cartesian(cards)
        .map(|states| {
            let all_pass = states.iter().zip(passing).all(|(s, ok)| ok.contains(s));
            if all_pass {
                vec![residual, 1.0 - residual]
            } else {
                vec![0.0, 1.0]
            }
        })
        .collect();
    Ok(Cpt::new(criteria.to_vec(), rows))
}

/// Deterministic AND / OR of task outcomes.
pub fn combine_tasks_cpt(tasks: &[NodeId], mode: Requirement) -> Result<Cpt, KsError> {
    if tasks.is_empty() {
        return Err(KsError::Rejected("technical achievement needs at least one task".into()));
    }
    let rows = cartesian(&vec![2; tasks.len()])
        .map(|states| {
            let ok = match mode {
                Requirement::AllRequired => states.iter().all(|s| *s == 0),
                Requirement::AtLeastOne => states.contains(&0),
            };
            if ok {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        })
        .collect();
    Ok(Cpt::new(tasks.to_vec(), rows))
}

/// Scale factor that makes `op` over `operands` land in `target`.
pub fn units_reconcile(op: UnitOp, operands: &[Unit], target: &Unit) -> Result<Conversion, UnitViolation> {
    reconcile(op, operands, target)
}

/// Joint states in table-row order, first position most significant.
fn cartesian(cards: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = cards.iter().product();
    (0..total).map(move |mut k| {
        let mut out = vec![0; cards.len()];
        for i in (0..cards.len()).rev() {
            out[i] = k % cards[i];
            k /= cards[i];
        }
        out
    })
}

/// Whether `id` is still open for assessment.
pub(crate) fn is_open(bb: &Blackboard, id: NodeId) -> bool {
    matches!(bb.status(id), Some(AssessmentStatus::Unassessed | AssessmentStatus::Defined))
}

/// Pop the focus while its top is fully assessed.
pub fn control_pops(bb: &Blackboard) -> Delta {
    let mut stack = bb.focus().as_slice().to_vec();
    let mut out = Vec::new();
    while stack.len() > 1 && bb.fully_assessed(*stack.last().expect("nonempty")) {
        stack.pop();
        out.push(Change::FocusPopped);
    }
    out
}

#[cfg(test)]
mod tests;
