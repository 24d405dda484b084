//! The blackboard: the growing diagram plus all consultation state, kept as
//! an append-only log of changes so any earlier state can be rebuilt.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::idiag::{
    Annotations, Diagram, DiagramError, NodeId, NodeKind, Payload, Possibility, Unit, UnitIssue, VariableType,
};
use crate::solve::Discounting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssessmentStatus {
    Unassessed,
    /// Structure chosen, numbers pending.
    Defined,
    Assessed,
    /// Completed by the system; never changes.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectGlobals {
    pub project_name: String,
    pub rate: f64,
    pub horizon: u32,
    pub currency: String,
    /// Free-form category tags used by the portfolio.
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl Default for ProjectGlobals {
    fn default() -> Self {
        ProjectGlobals {
            project_name: "Untitled project".into(),
            rate: 0.10,
            horizon: 10,
            currency: "USD".into(),
            attributes: BTreeMap::new(),
        }
    }
}

impl ProjectGlobals {
    pub fn validate(&self) -> Result<(), BoardError> {
        if !self.rate.is_finite() || self.rate <= -1.0 {
            return Err(BoardError::InvalidGlobals(format!("discount rate {} must exceed -1", self.rate)));
        }
        if self.horizon < 1 {
            return Err(BoardError::InvalidGlobals("horizon must be at least one period".into()));
        }
        if self.currency.trim().is_empty() {
            return Err(BoardError::InvalidGlobals("currency label is empty".into()));
        }
        Ok(())
    }

    pub fn discounting(&self) -> Discounting {
        Discounting { rate: self.rate, horizon: self.horizon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expertise {
    #[default]
    Novice,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ControlSettings {
    pub expertise: Expertise,
    pub auto_bypass: bool,
}

/// Attention focus. The bottom is the value node; each entry is a
/// contributor of the one beneath it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FocusStack(Vec<NodeId>);

impl FocusStack {
    pub fn top(&self) -> NodeId {
        *self.0.last().expect("focus stack is never empty")
    }

    pub fn bottom(&self) -> NodeId {
        self.0[0]
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0.contains(&id)
    }

    /// Bottom first.
    pub fn as_slice(&self) -> &[NodeId] {
        &self.0
    }
}

/// One blackboard mutation. A knowledge source's contribution is an
/// ordered list of these, applied all-or-nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Change {
    Initialized { globals: ProjectGlobals, settings: ControlSettings },
    NodeAdded { id: NodeId, node_kind: NodeKind, vtype: VariableType, name: String, possibilities: Vec<Possibility>, unit: Unit },
    ArcAdded { from: NodeId, to: NodeId },
    NodeDeleted { id: NodeId },
    PossibilitiesSet { id: NodeId, possibilities: Vec<Possibility> },
    PayloadSet { id: NodeId, payload: Payload },
    AnnotationsSet { id: NodeId, annotations: Annotations },
    StatusChanged { id: NodeId, status: AssessmentStatus },
    FocusPushed { id: NodeId },
    FocusPopped,
    FocusReplaced { stack: Vec<NodeId> },
    SettingChanged { settings: ControlSettings },
    GlobalChanged { globals: ProjectGlobals },
    UnitRegistered { name: String, unit: Unit },
    Checkpoint { label: String },
}

pub type Delta = Vec<Change>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoardError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error("invalid project globals: {0}")]
    InvalidGlobals(String),
    #[error("{0} is completed by the system and cannot change status")]
    AutoImmutable(NodeId),
    #[error("{0} cannot be marked assessed without a probability table or function")]
    NotAssessable(NodeId),
    #[error("{id} is not a contributor of the focus node {focus}")]
    NotContributor { id: NodeId, focus: NodeId },
    #[error("{0} is already on the focus stack")]
    AlreadyFocused(NodeId),
    #[error("the value node cannot be popped from the focus stack")]
    PopAtBottom,
    #[error("invalid focus stack: {0}")]
    InvalidStack(String),
    #[error("no event with sequence number {0}")]
    UnknownSeq(u64),
    #[error("the log can only be started once")]
    AlreadyInitialized,
    #[error("change would introduce unit inconsistencies: {0:?}")]
    Units(Vec<UnitIssue>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("event log is empty or does not start with an initialization")]
    MissingStart,
    #[error("event {found} out of sequence, expected {expected}")]
    Gap { expected: u64, found: u64 },
    #[error("event {seq} cannot be applied: {source}")]
    Rejected { seq: u64, source: BoardError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blackboard {
    diagram: Diagram,
    statuses: BTreeMap<NodeId, AssessmentStatus>,
    focus: FocusStack,
    globals: ProjectGlobals,
    units: BTreeMap<String, Unit>,
    settings: ControlSettings,
    log: Vec<Event>,
}

impl Blackboard {
    pub fn new(globals: ProjectGlobals) -> Result<Blackboard, BoardError> {
        Blackboard::with_settings(globals, ControlSettings::default())
    }

    pub fn with_settings(globals: ProjectGlobals, settings: ControlSettings) -> Result<Blackboard, BoardError> {
        globals.validate()?;
        Ok(Blackboard::initial(Event { seq: 0, change: Change::Initialized { globals, settings } }))
    }

    fn initial(event: Event) -> Blackboard {
        let Change::Initialized { globals, settings } = &event.change else { unreachable!("initial event") };
        let diagram = Diagram::new_core();
        let core = diagram.core().expect("core diagram");
        let mut statuses = BTreeMap::new();
        for id in core.all() {
            statuses.insert(id, AssessmentStatus::Unassessed);
        }
        statuses.insert(core.value, AssessmentStatus::Auto);
        statuses.insert(core.decision, AssessmentStatus::Auto);
        Blackboard {
            diagram,
            statuses,
            focus: FocusStack(vec![core.value]),
            globals: globals.clone(),
            units: BTreeMap::new(),
            settings: *settings,
            log: vec![event],
        }
    }

    pub fn diagram(&self) -> &Diagram {
        &self.diagram
    }

    pub fn focus(&self) -> &FocusStack {
        &self.focus
    }

    pub fn globals(&self) -> &ProjectGlobals {
        &self.globals
    }

    pub fn settings(&self) -> ControlSettings {
        self.settings
    }

    pub fn units(&self) -> &BTreeMap<String, Unit> {
        &self.units
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn statuses(&self) -> &BTreeMap<NodeId, AssessmentStatus> {
        &self.statuses
    }

    pub fn status(&self, id: NodeId) -> Option<AssessmentStatus> {
        self.statuses.get(&id).copied()
    }

    /// Whether every contributor of `id` is Assessed or Auto.
    pub fn fully_assessed(&self, id: NodeId) -> bool {
        self.diagram.contributors(id).is_ok_and(|c| {
            c.iter().all(|n| matches!(self.status(*n), Some(AssessmentStatus::Assessed | AssessmentStatus::Auto)))
        })
    }

    /// Apply a delta atomically: either every change lands and is logged,
    /// or the blackboard is left exactly as it was.
    pub fn apply(&mut self, delta: Delta) -> Result<(), BoardError> {
        if delta.is_empty() {
            return Ok(());
        }
        let log = std::mem::take(&mut self.log);
        let mut next = self.clone();
        self.log = log;
        let issues_before = next.diagram.check_units().len();
        for change in &delta {
            if matches!(change, Change::Initialized { .. }) {
                return Err(BoardError::AlreadyInitialized);
            }
            next.apply_one(change)?;
        }
        let issues = next.diagram.check_units();
        if issues.len() > issues_before {
            return Err(BoardError::Units(issues));
        }
        next.log = std::mem::take(&mut self.log);
        for change in delta {
            let seq = next.log.len() as u64;
            next.log.push(Event { seq, change });
        }
        *self = next;
        Ok(())
    }

    pub fn push_focus(&mut self, id: NodeId) -> Result<(), BoardError> {
        self.apply(vec![Change::FocusPushed { id }])
    }

    pub fn pop_focus(&mut self) -> Result<NodeId, BoardError> {
        let top = self.focus.top();
        self.apply(vec![Change::FocusPopped])?;
        Ok(top)
    }

    pub fn mark_status(&mut self, id: NodeId, status: AssessmentStatus) -> Result<(), BoardError> {
        self.apply(vec![Change::StatusChanged { id, status }])
    }

    pub fn checkpoint(&mut self, label: impl Into<String>) -> Result<(), BoardError> {
        self.apply(vec![Change::Checkpoint { label: label.into() }])
    }

    /// Checkpoints, newest first, with the initial state as the oldest.
    pub fn checkpoints(&self) -> Vec<(u64, String)> {
        let mut out: Vec<(u64, String)> = self
            .log
            .iter()
            .filter_map(|e| match &e.change {
                Change::Initialized { .. } => Some((e.seq, "start of consultation".to_string())),
                Change::Checkpoint { label } => Some((e.seq, label.clone())),
                _ => None,
            })
            .collect();
        out.reverse();
        out
    }

    pub fn replay(events: &[Event]) -> Result<Blackboard, ReplayError> {
        let first = events.first().ok_or(ReplayError::MissingStart)?;
        if first.seq != 0 {
            return Err(ReplayError::Gap { expected: 0, found: first.seq });
        }
        let Change::Initialized { globals, .. } = &first.change else {
            return Err(ReplayError::MissingStart);
        };
        globals.validate().map_err(|source| ReplayError::Rejected { seq: 0, source })?;
        let mut bb = Blackboard::initial(first.clone());
        for (i, e) in events.iter().enumerate().skip(1) {
            if e.seq != i as u64 {
                return Err(ReplayError::Gap { expected: i as u64, found: e.seq });
            }
            bb.apply(vec![e.change.clone()]).map_err(|source| ReplayError::Rejected { seq: e.seq, source })?;
        }
        Ok(bb)
    }

    /// The blackboard as it stood right after event `seq`.
    pub fn truncate_to(&self, seq: u64) -> Result<Blackboard, BoardError> {
        if seq as usize >= self.log.len() {
            return Err(BoardError::UnknownSeq(seq));
        }
        Blackboard::replay(&self.log[..=seq as usize]).map_err(|e| match e {
            ReplayError::Rejected { source, .. } => source,
            other => BoardError::InvalidStack(other.to_string()),
        })
    }

    fn apply_one(&mut self, change: &Change) -> Result<(), BoardError> {
        match change {
            Change::Initialized { .. } => return Err(BoardError::AlreadyInitialized),
            Change::NodeAdded { id, node_kind, vtype, name, possibilities, unit } => {
                self.diagram.insert_node(*id, *node_kind, *vtype, name, possibilities.clone(), *unit)?;
                self.statuses.insert(*id, AssessmentStatus::Unassessed);
            }
            Change::ArcAdded { from, to } => {
                self.diagram.add_arc(*from, *to)?;
                self.demote_structurally_changed(&[*to]);
            }
            Change::NodeDeleted { id } => {
                let affected: Vec<NodeId> = self.diagram.delete_node(*id)?.into_iter().collect();
                self.statuses.remove(id);
                self.drop_from_focus(*id);
                self.demote_structurally_changed(&affected);
            }
            Change::PossibilitiesSet { id, possibilities } => {
                self.diagram.set_possibilities(*id, possibilities.clone())?;
            }
            Change::PayloadSet { id, payload } => match payload {
                Payload::Cpt(c) => self.diagram.set_cpt(*id, c.clone())?,
                Payload::Function(f) => self.diagram.set_function(*id, f.clone())?,
                Payload::Series(ts) => self.diagram.set_series(*id, ts.clone())?,
                Payload::Alternatives | Payload::NpvValue => {
                    return Err(BoardError::AutoImmutable(*id));
                }
            },
            Change::AnnotationsSet { id, annotations } => {
                self.diagram.set_annotations(*id, annotations.clone())?;
            }
            Change::StatusChanged { id, status } => self.set_status(*id, *status)?,
            Change::FocusPushed { id } => self.push(*id)?,
            Change::FocusPopped => {
                if self.focus.depth() < 2 {
                    return Err(BoardError::PopAtBottom);
                }
                self.focus.0.pop();
            }
            Change::FocusReplaced { stack } => {
                self.check_stack(stack)?;
                self.focus = FocusStack(stack.clone());
            }
            Change::SettingChanged { settings } => self.settings = *settings,
            Change::GlobalChanged { globals } => {
                globals.validate()?;
                self.globals = globals.clone();
            }
            Change::UnitRegistered { name, unit } => {
                if name.trim().is_empty() || !(unit.scale.is_finite() && unit.scale > 0.0) {
                    return Err(BoardError::InvalidGlobals(format!("unit `{name}` is not usable")));
                }
                self.units.insert(name.clone(), *unit);
            }
            Change::Checkpoint { .. } => {}
        }
        // anything assessed that lost its payload goes back to Defined
        let stale: Vec<NodeId> = self
            .statuses
            .iter()
            .filter(|(id, s)| **s == AssessmentStatus::Assessed && self.diagram.node(**id).is_ok_and(|n| n.payload.is_none()))
            .map(|(id, _)| *id)
            .collect();
        for id in stale {
            self.statuses.insert(id, AssessmentStatus::Defined);
        }
        Ok(())
    }

    fn demote_structurally_changed(&mut self, ids: &[NodeId]) {
        for id in ids {
            if let Some(s) = self.statuses.get_mut(id) {
                if *s == AssessmentStatus::Assessed {
                    *s = AssessmentStatus::Defined;
                }
            }
        }
    }

    fn set_status(&mut self, id: NodeId, status: AssessmentStatus) -> Result<(), BoardError> {
        let current = self.status(id).ok_or(DiagramError::UnknownNode(id))?;
        if current == AssessmentStatus::Auto || status == AssessmentStatus::Auto {
            return Err(BoardError::AutoImmutable(id));
        }
        if status == AssessmentStatus::Assessed {
            let node = self.diagram.node(id)?;
            let ok = match &node.payload {
                None => false,
                Some(Payload::Cpt(_)) => true,
                Some(_) => node.possibilities.is_empty(),
            };
            if !ok {
                return Err(BoardError::NotAssessable(id));
            }
        }
        self.statuses.insert(id, status);
        Ok(())
    }

    fn push(&mut self, id: NodeId) -> Result<(), BoardError> {
        let focus = self.focus.top();
        if self.focus.contains(id) {
            return Err(BoardError::AlreadyFocused(id));
        }
        if self.status(id) == Some(AssessmentStatus::Auto) || !self.diagram.contributors(focus)?.contains(&id) {
            return Err(BoardError::NotContributor { id, focus });
        }
        self.focus.0.push(id);
        Ok(())
    }

    /// A valid stack starts at the value node, has no repeats, contains no
    /// other Auto node and each entry contributes to the one below.
    pub fn check_stack(&self, stack: &[NodeId]) -> Result<(), BoardError> {
        let value = self.focus.bottom();
        if stack.first() != Some(&value) {
            return Err(BoardError::InvalidStack(format!("the bottom must be the value node {value}")));
        }
        for (i, id) in stack.iter().enumerate().skip(1) {
            self.diagram.node(*id)?;
            if stack[..i].contains(id) {
                return Err(BoardError::InvalidStack(format!("{id} appears twice")));
            }
            if self.status(*id) == Some(AssessmentStatus::Auto) {
                return Err(BoardError::InvalidStack(format!("{id} is completed by the system")));
            }
            let below = stack[i - 1];
            if !self.diagram.reaches(*id, below) {
                return Err(BoardError::InvalidStack(format!("{id} does not contribute to {below}")));
            }
        }
        Ok(())
    }

    /// Remove a deleted node from the stack, then cut the stack where the
    /// chain no longer holds.
    fn drop_from_focus(&mut self, id: NodeId) {
        self.focus.0.retain(|n| *n != id);
        let mut keep = 1;
        while keep < self.focus.0.len() && self.diagram.reaches(self.focus.0[keep], self.focus.0[keep - 1]) {
            keep += 1;
        }
        self.focus.0.truncate(keep);
    }
}
