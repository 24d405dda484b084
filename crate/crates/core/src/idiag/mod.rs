//! Influence diagrams extended with project-modeling information: typed
//! nodes, arcs, conditional probability tables, deterministic functions,
//! time series and units.

mod expr;
mod series;
pub mod units;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use expr::{Comparison, DetFunction, Expr};
pub use series::{expand_time_series, CashFlowVector, ParamSource, SeriesError, SeriesForm, TimeSeries};
pub use units::{reconcile, Conversion, Dimension, Unit, UnitOp, UnitViolation};

/// Tolerance for probability rows summing to one.
pub const ROW_TOLERANCE: f64 = 1e-9;

pub const SUCCESS: &str = "success";
pub const FAILURE: &str = "failure";

/// Stable node identifier. Ids are allocated monotonically and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Decision,
    Chance,
    Deterministic,
    Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableType {
    TechnicalAchievement,
    Task,
    Hurdle,
    GeneralUncertainty,
    PerformanceVariable,
    TaskInvestment,
    Parameter,
    Contribution,
    Profit,
    Revenue,
    Cost,
    UnitsSold,
    Price,
    CapitalInvestment,
    RelatedProductProfit,
    FundingDecision,
    NetPresentValue,
    Generic,
}

impl VariableType {
    /// Binary success/failure variables.
    pub fn is_binary_success(self) -> bool {
        matches!(self, VariableType::Task | VariableType::Hurdle)
    }

    /// Variables that can be success criteria of a task or hurdle.
    pub fn is_criterion(self) -> bool {
        matches!(
            self,
            VariableType::Hurdle | VariableType::GeneralUncertainty | VariableType::PerformanceVariable
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Possibility {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Possibility {
    pub fn label(label: impl Into<String>) -> Self {
        Possibility { label: label.into(), value: None }
    }

    pub fn valued(label: impl Into<String>, value: f64) -> Self {
        Possibility { label: label.into(), value: Some(value) }
    }
}

pub fn success_failure() -> Vec<Possibility> {
    vec![Possibility::label(SUCCESS), Possibility::label(FAILURE)]
}

/// Low/base/high estimates at the 10th/50th/90th fractiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePoint {
    pub low: f64,
    pub base: f64,
    pub high: f64,
}

impl ThreePoint {
    pub fn new(low: f64, base: f64, high: f64) -> Self {
        ThreePoint { low, base, high }
    }

    pub fn certain(v: f64) -> Self {
        ThreePoint::new(v, v, v)
    }

    pub fn is_valid(&self) -> bool {
        [self.low, self.base, self.high].iter().all(|v| v.is_finite()) && self.low <= self.base && self.base <= self.high
    }

    pub fn scaled(&self, k: f64) -> Self {
        ThreePoint::new(self.low * k, self.base * k, self.high * k)
    }
}

/// Conditional probability table. Rows are indexed in mixed radix over
/// the parents' possibility counts, first parent most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub parents: Vec<NodeId>,
    pub rows: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn new(parents: Vec<NodeId>, rows: Vec<Vec<f64>>) -> Self {
        Cpt { parents, rows }
    }

    /// Unconditional distribution.
    pub fn marginal(dist: Vec<f64>) -> Self {
        Cpt { parents: Vec::new(), rows: vec![dist] }
    }

    pub fn row_index(parent_states: &[usize], parent_cards: &[usize]) -> usize {
        parent_states
            .iter()
            .zip(parent_cards)
            .fold(0, |acc, (s, c)| acc * c + s)
    }

    pub fn row(&self, parent_states: &[usize], parent_cards: &[usize]) -> &[f64] {
        &self.rows[Self::row_index(parent_states, parent_cards)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Requirement {
    AllRequired,
    AtLeastOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Parallel,
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCriterion {
    pub threshold: f64,
    pub direction: Comparison,
}

/// Domain information kept on the node it describes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<Requirement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    /// Tasks in their declared order (technical achievement node).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ordered: Vec<NodeId>,
    /// The elicited estimate behind a discretised quantity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<ThreePoint>,
    /// Outcomes of a general-uncertainty criterion that count as passing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passing: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance: Option<PerformanceCriterion>,
    /// The task a task-investment node belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Payload {
    Cpt(Cpt),
    Function(DetFunction),
    Series(TimeSeries),
    /// Decision alternatives are the node's possibilities.
    Alternatives,
    /// NPV(fund) = PV(contribution)·1{TA = success} − PV(investment); NPV(no-fund) = 0.
    NpvValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub vtype: VariableType,
    pub name: String,
    pub possibilities: Vec<Possibility>,
    pub payload: Option<Payload>,
    pub unit: Unit,
    #[serde(default)]
    pub annotations: Annotations,
}

impl Node {
    pub fn is_discrete(&self) -> bool {
        !self.possibilities.is_empty() && matches!(self.kind, NodeKind::Chance | NodeKind::Decision)
    }

    pub fn cpt(&self) -> Option<&Cpt> {
        match &self.payload {
            Some(Payload::Cpt(c)) => Some(c),
            _ => None,
        }
    }

    pub fn possibility_index(&self, label: &str) -> Option<usize> {
        self.possibilities.iter().position(|p| p.label == label)
    }

    pub fn has_numeric_possibilities(&self) -> bool {
        !self.possibilities.is_empty() && self.possibilities.iter().all(|p| p.value.is_some())
    }
}

/// The five permanent nodes every model starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreNodes {
    pub value: NodeId,
    pub decision: NodeId,
    pub technical: NodeId,
    pub investment: NodeId,
    pub contribution: NodeId,
}

impl CoreNodes {
    pub fn all(&self) -> [NodeId; 5] {
        [self.value, self.decision, self.technical, self.investment, self.contribution]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.all().contains(&id)
    }
}

pub const NPV_NAME: &str = "Net Present Value";
pub const DECISION_NAME: &str = "Funding Decision";
pub const TECHNICAL_NAME: &str = "Technical Achievement";
pub const INVESTMENT_NAME: &str = "R&D Investment";
pub const CONTRIBUTION_NAME: &str = "Contribution";

pub const FUND: &str = "fund";
pub const NO_FUND: &str = "no-fund";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagramError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node name must not be empty")]
    EmptyName,
    #[error("node id {0} was already allocated")]
    IdReused(NodeId),
    #[error("a diagram has exactly one value node")]
    SecondValueNode,
    #[error("{vtype:?} nodes must have exactly the possibilities success/failure")]
    InvalidPossibilities { vtype: VariableType },
    #[error("possibility labels must be unique and nonempty")]
    BadPossibilityLabels,
    #[error("self-arc on {0}")]
    SelfArc(NodeId),
    #[error("arc {from} -> {to} already present")]
    DuplicateArc { from: NodeId, to: NodeId },
    #[error("no arc {from} -> {to}")]
    MissingArc { from: NodeId, to: NodeId },
    #[error("arc {from} -> {to} would create a cycle")]
    Cycle { from: NodeId, to: NodeId },
    #[error("the value node cannot have successors")]
    ArcFromValue,
    #[error("{parent} already has a predecessor named `{name}`")]
    DuplicateSiblingName { parent: NodeId, name: String },
    #[error("core node {0} is permanent")]
    CoreNode(NodeId),
    #[error("node {node}: {reason}")]
    InvalidPayload { node: NodeId, reason: String },
    #[error("node {node}: conditioning parents {given:?} do not match predecessors {actual:?}")]
    ParentMismatch { node: NodeId, given: Vec<NodeId>, actual: Vec<NodeId> },
    #[error("node {node}: row {row} sums to {sum}")]
    RowNotNormalized { node: NodeId, row: usize, sum: f64 },
}

/// A unit inconsistency found in a node's function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitIssue {
    pub node: NodeId,
    pub violation: UnitViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagram {
    nodes: BTreeMap<NodeId, Node>,
    arcs: BTreeSet<(NodeId, NodeId)>,
    next_id: u32,
    core: Option<CoreNodes>,
}

impl Default for Diagram {
    fn default() -> Self {
        Diagram::empty()
    }
}

impl Diagram {
    pub fn empty() -> Self {
        Diagram { nodes: BTreeMap::new(), arcs: BTreeSet::new(), next_id: 0, core: None }
    }

    /// Value node, funding decision and the three core uncertainties, each
    /// feeding the value node directly.
    pub fn new_core() -> Self {
        let mut d = Diagram::empty();
        let value = d
            .add_node(NodeKind::Value, VariableType::NetPresentValue, NPV_NAME, vec![], Unit::currency())
            .expect("core value node");
        let decision = d
            .add_node(
                NodeKind::Decision,
                VariableType::FundingDecision,
                DECISION_NAME,
                vec![Possibility::label(FUND), Possibility::label(NO_FUND)],
                Unit::dimensionless(),
            )
            .expect("core decision node");
        let technical = d
            .add_node(
                NodeKind::Chance,
                VariableType::TechnicalAchievement,
                TECHNICAL_NAME,
                success_failure(),
                Unit::dimensionless(),
            )
            .expect("core technical node");
        let investment = d
            .add_node(NodeKind::Chance, VariableType::TaskInvestment, INVESTMENT_NAME, vec![], Unit::currency())
            .expect("core investment node");
        let contribution = d
            .add_node(NodeKind::Chance, VariableType::Contribution, CONTRIBUTION_NAME, vec![], Unit::currency())
            .expect("core contribution node");
        for id in [decision, technical, investment, contribution] {
            d.add_arc(id, value).expect("core arc");
        }
        d.node_mut(value).expect("value").payload = Some(Payload::NpvValue);
        d.node_mut(decision).expect("decision").payload = Some(Payload::Alternatives);
        d.core = Some(CoreNodes { value, decision, technical, investment, contribution });
        d
    }

    pub fn core(&self) -> Option<CoreNodes> {
        self.core
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, DiagramError> {
        self.nodes.get(&id).ok_or(DiagramError::UnknownNode(id))
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Result<&mut Node, DiagramError> {
        self.nodes.get_mut(&id).ok_or(DiagramError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arcs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.arcs.iter().copied()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn has_arc(&self, from: NodeId, to: NodeId) -> bool {
        self.arcs.contains(&(from, to))
    }

    /// The id the next added node will receive.
    pub fn next_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    pub fn value_node(&self) -> Option<NodeId> {
        self.nodes.values().find(|n| n.kind == NodeKind::Value).map(|n| n.id)
    }

    pub fn find_by_name(&self, name: &str) -> Vec<NodeId> {
        self.nodes.values().filter(|n| n.name == name).map(|n| n.id).collect()
    }

    /// Direct predecessors in id order.
    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.arcs.iter().filter(|(_, t)| *t == id).map(|(f, _)| *f).collect()
    }

    /// Direct successors in id order.
    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.arcs.iter().filter(|(f, _)| *f == id).map(|(_, t)| *t).collect()
    }

    pub fn add_node(
        &mut self,
        kind: NodeKind,
        vtype: VariableType,
        name: &str,
        possibilities: Vec<Possibility>,
        unit: Unit,
    ) -> Result<NodeId, DiagramError> {
        let id = self.next_id();
        self.insert_node(id, kind, vtype, name, possibilities, unit)?;
        Ok(id)
    }

    /// Add a node under a caller-chosen id (log replay, pre-allocated
    /// deltas). The id must not have been handed out before.
    pub fn insert_node(
        &mut self,
        id: NodeId,
        kind: NodeKind,
        vtype: VariableType,
        name: &str,
        possibilities: Vec<Possibility>,
        unit: Unit,
    ) -> Result<(), DiagramError> {
        if id.0 < self.next_id {
            return Err(DiagramError::IdReused(id));
        }
        if name.trim().is_empty() {
            return Err(DiagramError::EmptyName);
        }
        if kind == NodeKind::Value && self.value_node().is_some() {
            return Err(DiagramError::SecondValueNode);
        }
        let possibilities = if vtype.is_binary_success() {
            if possibilities.is_empty() {
                success_failure()
            } else {
                let labels: Vec<&str> = possibilities.iter().map(|p| p.label.as_str()).collect();
                if labels != [SUCCESS, FAILURE] {
                    return Err(DiagramError::InvalidPossibilities { vtype });
                }
                possibilities
            }
        } else {
            possibilities
        };
        validate_labels(&possibilities)?;
        self.nodes.insert(
            id,
            Node {
                id,
                kind,
                vtype,
                name: name.to_string(),
                possibilities,
                payload: None,
                unit,
                annotations: Annotations::default(),
            },
        );
        self.next_id = id.0 + 1;
        Ok(())
    }

    /// Add `from -> to`. Returns true when `to` lost a payload that must be
    /// reassessed.
    pub fn add_arc(&mut self, from: NodeId, to: NodeId) -> Result<bool, DiagramError> {
        let from_node = self.node(from)?;
        let to_node = self.node(to)?;
        if from == to {
            return Err(DiagramError::SelfArc(from));
        }
        if from_node.kind == NodeKind::Value {
            return Err(DiagramError::ArcFromValue);
        }
        if self.arcs.contains(&(from, to)) {
            return Err(DiagramError::DuplicateArc { from, to });
        }
        if self.reaches(to, from) {
            return Err(DiagramError::Cycle { from, to });
        }
        let name = from_node.name.clone();
        if self.parents(to).iter().any(|p| self.nodes[p].name == name) {
            return Err(DiagramError::DuplicateSiblingName { parent: to, name });
        }
        let _ = to_node;
        self.arcs.insert((from, to));
        Ok(self.invalidate(to))
    }

    /// Remove an arc without touching payloads (reduction bookkeeping).
    pub(crate) fn remove_arc_raw(&mut self, from: NodeId, to: NodeId) -> Result<(), DiagramError> {
        if !self.arcs.remove(&(from, to)) {
            return Err(DiagramError::MissingArc { from, to });
        }
        Ok(())
    }

    pub(crate) fn add_arc_raw(&mut self, from: NodeId, to: NodeId) {
        self.arcs.insert((from, to));
    }

    /// Remove a node and its incident arcs. Returns the former direct
    /// successors, whose payloads are invalidated.
    pub fn delete_node(&mut self, id: NodeId) -> Result<BTreeSet<NodeId>, DiagramError> {
        self.node(id)?;
        if self.core.is_some_and(|c| c.contains(id)) {
            return Err(DiagramError::CoreNode(id));
        }
        let mut affected: BTreeSet<NodeId> = self.children(id).into_iter().collect();
        // series scheduled after the deleted one lose their anchor
        affected.extend(
            self.nodes
                .values()
                .filter(|n| matches!(&n.payload, Some(Payload::Series(ts)) if ts.follows == Some(id)))
                .map(|n| n.id),
        );
        self.remove_node_raw(id);
        for s in &affected {
            self.invalidate(*s);
        }
        Ok(affected)
    }

    pub(crate) fn remove_node_raw(&mut self, id: NodeId) {
        self.nodes.remove(&id);
        self.arcs.retain(|(f, t)| *f != id && *t != id);
    }

    fn invalidate(&mut self, id: NodeId) -> bool {
        let node = self.nodes.get_mut(&id).expect("existing node");
        match node.payload {
            Some(Payload::NpvValue) | Some(Payload::Alternatives) | None => false,
            _ => {
                node.payload = None;
                true
            }
        }
    }

    /// Whether a directed path leads from `from` to `to` (reflexive).
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            for c in self.children(n) {
                if c == to {
                    return true;
                }
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        false
    }

    /// The node itself and all its direct and indirect predecessors.
    pub fn contributors(&self, id: NodeId) -> Result<BTreeSet<NodeId>, DiagramError> {
        self.node(id)?;
        let mut out = BTreeSet::from([id]);
        let mut queue = VecDeque::from([id]);
        while let Some(n) = queue.pop_front() {
            for p in self.parents(n) {
                if out.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        Ok(out)
    }

    /// Kahn's algorithm with id-order tie breaking. `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let mut indeg: BTreeMap<NodeId, usize> = self.nodes.keys().map(|k| (*k, 0)).collect();
        for (_, t) in &self.arcs {
            *indeg.get_mut(t)? += 1;
        }
        let mut ready: BTreeSet<NodeId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for c in self.children(n) {
                let d = indeg.get_mut(&c)?;
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn set_possibilities(&mut self, id: NodeId, possibilities: Vec<Possibility>) -> Result<(), DiagramError> {
        let node = self.node(id)?;
        if node.vtype.is_binary_success() {
            let labels: Vec<&str> = possibilities.iter().map(|p| p.label.as_str()).collect();
            if labels != [SUCCESS, FAILURE] {
                return Err(DiagramError::InvalidPossibilities { vtype: node.vtype });
            }
        }
        validate_labels(&possibilities)?;
        let changed_shape = node.possibilities.len() != possibilities.len()
            || node.possibilities.iter().zip(&possibilities).any(|(a, b)| a.label != b.label);
        let node = self.node_mut(id)?;
        node.possibilities = possibilities;
        if changed_shape {
            if matches!(node.payload, Some(Payload::Cpt(_))) {
                node.payload = None;
            }
            for c in self.children(id) {
                self.invalidate(c);
            }
        }
        Ok(())
    }

    pub fn set_cpt(&mut self, id: NodeId, cpt: Cpt) -> Result<(), DiagramError> {
        let node = self.node(id)?;
        if node.kind != NodeKind::Chance {
            return Err(invalid(id, "only chance nodes carry probability tables"));
        }
        if node.possibilities.is_empty() {
            return Err(invalid(id, "node has no possibilities"));
        }
        self.check_parents(id, &cpt.parents)?;
        let mut cards = Vec::with_capacity(cpt.parents.len());
        for p in &cpt.parents {
            let pn = self.node(*p)?;
            if !pn.is_discrete() {
                return Err(invalid(id, &format!("parent {p} is not a discrete variable")));
            }
            cards.push(pn.possibilities.len());
        }
        let expected_rows: usize = cards.iter().product();
        if cpt.rows.len() != expected_rows {
            return Err(invalid(id, &format!("expected {expected_rows} rows, got {}", cpt.rows.len())));
        }
        let width = node.possibilities.len();
        for (r, row) in cpt.rows.iter().enumerate() {
            if row.len() != width {
                return Err(invalid(id, &format!("row {r} has {} entries, expected {width}", row.len())));
            }
            if row.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
                return Err(invalid(id, &format!("row {r} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(DiagramError::RowNotNormalized { node: id, row: r, sum });
            }
        }
        self.node_mut(id)?.payload = Some(Payload::Cpt(cpt));
        Ok(())
    }

    pub fn set_function(&mut self, id: NodeId, f: DetFunction) -> Result<(), DiagramError> {
        let node = self.node(id)?;
        if !matches!(node.kind, NodeKind::Deterministic | NodeKind::Chance) {
            return Err(invalid(id, "functions belong on deterministic or chance nodes"));
        }
        let parents: BTreeSet<NodeId> = self.parents(id).into_iter().collect();
        for r in f.expr.references() {
            if !parents.contains(&r) {
                return Err(invalid(id, &format!("function reads {r}, which is not a direct predecessor")));
            }
        }
        check_gates(self, id, &f.expr)?;
        self.node_mut(id)?.payload = Some(Payload::Function(f));
        Ok(())
    }

    pub fn set_series(&mut self, id: NodeId, ts: TimeSeries) -> Result<(), DiagramError> {
        let node = self.node(id)?;
        if !matches!(node.kind, NodeKind::Deterministic | NodeKind::Chance) {
            return Err(invalid(id, "time series belong on deterministic or chance nodes"));
        }
        if ts.duration < 1 {
            return Err(invalid(id, "series duration must be at least one period"));
        }
        if ts.start < 1 {
            return Err(invalid(id, "series must start at period 1 or later"));
        }
        let parents: BTreeSet<NodeId> = self.parents(id).into_iter().collect();
        for name in ts.form.parameters() {
            match ts.params.get(*name) {
                None => return Err(invalid(id, &format!("missing series parameter `{name}`"))),
                Some(ParamSource::Fixed(v)) if !v.is_finite() => {
                    return Err(invalid(id, &format!("series parameter `{name}` is not finite")))
                }
                Some(ParamSource::Node(p)) => {
                    if !parents.contains(p) {
                        return Err(invalid(id, &format!("parameter node {p} is not a direct predecessor")));
                    }
                    if !self.node(*p)?.has_numeric_possibilities() {
                        return Err(invalid(id, &format!("parameter node {p} has no numeric outcomes")));
                    }
                }
                Some(ParamSource::Fixed(_)) => {}
            }
        }
        if let Some(prev) = ts.follows {
            let prev_node = self.node(prev)?;
            if !matches!(prev_node.payload, Some(Payload::Series(_)) | None) || prev == id || self.reaches(id, prev) {
                return Err(invalid(id, &format!("cannot follow {prev}")));
            }
        }
        self.node_mut(id)?.payload = Some(Payload::Series(ts));
        Ok(())
    }

    pub fn set_annotations(&mut self, id: NodeId, annotations: Annotations) -> Result<(), DiagramError> {
        self.node_mut(id)?.annotations = annotations;
        Ok(())
    }

    fn check_parents(&self, id: NodeId, given: &[NodeId]) -> Result<(), DiagramError> {
        let actual = self.parents(id);
        let mut sorted = given.to_vec();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != given.len() || sorted != actual {
            return Err(DiagramError::ParentMismatch { node: id, given: given.to_vec(), actual });
        }
        Ok(())
    }

    /// Dimensional consistency of every deterministic function. Empty iff
    /// consistent.
    pub fn check_units(&self) -> Vec<UnitIssue> {
        let unit_of = |id: NodeId| self.nodes.get(&id).map(|n| n.unit);
        let mut issues = Vec::new();
        for node in self.nodes.values() {
            match &node.payload {
                Some(Payload::Function(f)) => match f.expr.dimension(&unit_of) {
                    Ok(d) if d != node.unit.dimension => issues.push(UnitIssue {
                        node: node.id,
                        violation: UnitViolation::ResultMismatch { declared: node.unit.dimension, found: d },
                    }),
                    Ok(_) => {}
                    Err(violation) => issues.push(UnitIssue { node: node.id, violation }),
                },
                Some(Payload::Series(ts)) => {
                    for (name, src) in &ts.params {
                        if let ParamSource::Node(p) = src {
                            let want = if ts.form.parameter_is_amount(name) {
                                node.unit.dimension
                            } else {
                                Dimension::NONE
                            };
                            if let Some(pu) = unit_of(*p) {
                                if pu.dimension != want {
                                    issues.push(UnitIssue {
                                        node: node.id,
                                        violation: UnitViolation::Incompatible { left: want, right: pu.dimension },
                                    });
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        issues
    }

    /// Ids referenced by arcs or payloads that do not exist. Empty for any
    /// diagram built through the editing operations.
    pub fn dangling_references(&self) -> Vec<NodeId> {
        let mut out = BTreeSet::new();
        for (f, t) in &self.arcs {
            for id in [f, t] {
                if !self.nodes.contains_key(id) {
                    out.insert(*id);
                }
            }
        }
        for node in self.nodes.values() {
            let refs: Vec<NodeId> = match &node.payload {
                Some(Payload::Cpt(c)) => c.parents.clone(),
                Some(Payload::Function(f)) => f.expr.references().into_iter().collect(),
                Some(Payload::Series(ts)) => ts.parameter_nodes().chain(ts.follows).collect(),
                _ => Vec::new(),
            };
            for id in refs {
                if !self.nodes.contains_key(&id) {
                    out.insert(id);
                }
            }
        }
        out.into_iter().collect()
    }
}

fn invalid(node: NodeId, reason: &str) -> DiagramError {
    DiagramError::InvalidPayload { node, reason: reason.to_string() }
}

fn validate_labels(possibilities: &[Possibility]) -> Result<(), DiagramError> {
    let mut seen = BTreeSet::new();
    for p in possibilities {
        if p.label.trim().is_empty() || !seen.insert(p.label.as_str()) {
            return Err(DiagramError::BadPossibilityLabels);
        }
        if p.value.is_some_and(|v| !v.is_finite()) {
            return Err(DiagramError::BadPossibilityLabels);
        }
    }
    Ok(())
}

fn check_gates(d: &Diagram, id: NodeId, e: &Expr) -> Result<(), DiagramError> {
    match e {
        Expr::Gate { node, label, then } => {
            if d.node(*node)?.possibility_index(label).is_none() {
                return Err(invalid(id, &format!("{node} has no outcome `{label}`")));
            }
            check_gates(d, id, then)
        }
        Expr::Sum(xs) | Expr::Product(xs) => xs.iter().try_for_each(|x| check_gates(d, id, x)),
        Expr::Difference(a, b) | Expr::Quotient(a, b) => {
            check_gates(d, id, a)?;
            check_gates(d, id, b)
        }
        Expr::Negate(a) | Expr::PresentValue(a) => check_gates(d, id, a),
        Expr::Threshold { value, .. } => check_gates(d, id, value),
        Expr::Var(_) | Expr::Const(_) => Ok(()),
    }
}
