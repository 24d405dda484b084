//! Normative evaluation. The constructed diagram is reduced back to the
//! core: functional nodes are composed into the value function, chance
//! nodes are removed by expectation (reversing arcs where needed) and the
//! funding decision is chosen by maximising expected NPV.

mod enumerate;
mod factor;
mod reduce;
mod values;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::idiag::{Cpt, Diagram, DiagramError, NodeId, NodeKind, Payload, SeriesError, FUND, SUCCESS};

pub use enumerate::{enumerated_expectations, joint_enumeration, EnumeratedExpectations, JointDistribution, MAX_JOINT_STATES};
pub use reduce::{remove_chance_node, reverse_arc};
pub use values::NumValue;

use factor::{Assignments, Factor};
use reduce::{unassessed, Network};
use values::{compute_functional, Scenario};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error("nodes not yet assessed: {0:?}")]
    Unassessed(Vec<NodeId>),
    #[error("joint state space exceeds {limit} states")]
    StateSpaceOverflow { limit: usize },
    #[error("{0} is not an assessed chance node")]
    NotChance(NodeId),
    #[error("{0} has no numeric value")]
    NonNumeric(NodeId),
    #[error("node {node}: {source}")]
    Series { node: NodeId, source: SeriesError },
    #[error("discount rate must exceed -1 (got {0})")]
    InvalidRate(f64),
    #[error("diagram has no core nodes")]
    NoCore,
    #[error("{0}")]
    Precondition(String),
}

/// Discount rate per period and number of periods modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discounting {
    pub rate: f64,
    pub horizon: u32,
}

impl Default for Discounting {
    fn default() -> Self {
        Discounting { rate: 0.10, horizon: 10 }
    }
}

/// Present value of end-of-period flows, the first at t = 1.
pub fn npv(flows: &[f64], rate: f64) -> Result<f64, SolveError> {
    if rate.is_nan() || rate <= -1.0 {
        return Err(SolveError::InvalidRate(rate));
    }
    let mut factor = 1.0;
    let mut total = 0.0;
    for cf in flows {
        factor /= 1.0 + rate;
        total += cf * factor;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FundingChoice {
    Fund,
    NoFund,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TornadoEntry {
    pub node: NodeId,
    pub name: String,
    pub low: f64,
    pub base: f64,
    pub high: f64,
    pub npv_low: f64,
    pub npv_base: f64,
    pub npv_high: f64,
    pub swing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub p_ta: f64,
    pub e_invest_pv: f64,
    pub e_contrib_pv_given_success: f64,
    pub e_npv_fund: f64,
    pub decision: FundingChoice,
    pub tornado: Vec<TornadoEntry>,
}

/// Functional node values tabulated over the discrete chance variables
/// they depend on.
/// Scope, cardinalities and one value per joint state of the scope.
type Table = (Vec<NodeId>, Vec<usize>, Vec<NumValue>);

struct FunctionalTables {
    tables: BTreeMap<NodeId, Table>,
}

struct TableScenario<'a> {
    outcomes: &'a BTreeMap<NodeId, usize>,
    tables: &'a FunctionalTables,
}

impl Scenario for TableScenario<'_> {
    fn outcome(&self, id: NodeId) -> Result<usize, SolveError> {
        self.outcomes.get(&id).copied().ok_or(SolveError::Unassessed(vec![id]))
    }

    fn computed(&self, id: NodeId) -> Result<NumValue, SolveError> {
        let (vars, cards, vals) = self.tables.tables.get(&id).ok_or(SolveError::Unassessed(vec![id]))?;
        let mut idx = 0;
        for (v, c) in vars.iter().zip(cards) {
            idx = idx * c + self.outcome(*v)?;
        }
        Ok(vals[idx].clone())
    }
}

impl FunctionalTables {
    /// Tabulate every functional node in `scope`, in topological order.
    fn build(d: &Diagram, scope: &BTreeSet<NodeId>, disc: &Discounting) -> Result<Self, SolveError> {
        let order = d.topological_order().ok_or_else(|| SolveError::Precondition("diagram has a cycle".into()))?;
        let mut out = FunctionalTables { tables: BTreeMap::new() };
        let mut scopes: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for id in order.into_iter().filter(|i| scope.contains(i)) {
            let node = d.node(id)?;
            if !matches!(node.payload, Some(Payload::Function(_)) | Some(Payload::Series(_))) {
                continue;
            }
            let mut vars = BTreeSet::new();
            for p in d.parents(id) {
                let pn = d.node(p)?;
                match (&pn.kind, &pn.payload) {
                    (NodeKind::Chance, Some(Payload::Cpt(_))) => {
                        vars.insert(p);
                    }
                    (_, Some(Payload::Function(_))) | (_, Some(Payload::Series(_))) => {
                        vars.extend(scopes[&p].iter().copied());
                    }
                    (NodeKind::Decision, _) => {
                        return Err(SolveError::Precondition(format!(
                            "{id} depends on a decision; only the value node may"
                        )))
                    }
                    _ => return Err(SolveError::Unassessed(vec![p])),
                }
            }
            let vars: Vec<NodeId> = vars.into_iter().collect();
            let cards: Vec<usize> = vars.iter().map(|v| d.node(*v).map(|n| n.possibilities.len())).collect::<Result<_, _>>()?;
            let mut vals = Vec::new();
            for states in Assignments::new(&cards) {
                let outcomes: BTreeMap<NodeId, usize> = vars.iter().copied().zip(states).collect();
                let s = TableScenario { outcomes: &outcomes, tables: &out };
                vals.push(compute_functional(d, id, &s, disc)?);
            }
            scopes.insert(id, vars.iter().copied().collect());
            out.tables.insert(id, (vars, cards, vals));
        }
        Ok(out)
    }

    /// Present value of a core quantity as a factor over its scope.
    fn pv_factor(&self, d: &Diagram, id: NodeId, rate: f64) -> Result<Factor, SolveError> {
        let node = d.node(id)?;
        match &node.payload {
            Some(Payload::Cpt(_)) => {
                let data = node
                    .possibilities
                    .iter()
                    .map(|p| p.value.ok_or(SolveError::NonNumeric(id)))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Factor::new(vec![id], vec![data.len()], data))
            }
            Some(Payload::Function(_)) | Some(Payload::Series(_)) => {
                let (vars, cards, vals) = &self.tables[&id];
                let data = vals.iter().map(|v| v.present_value(rate)).collect::<Result<Vec<_>, _>>()?;
                Ok(Factor::new(vars.clone(), cards.clone(), data))
            }
            _ => Err(SolveError::Unassessed(vec![id])),
        }
    }
}

fn indicator(d: &Diagram, id: NodeId, label: &str) -> Result<Factor, SolveError> {
    let node = d.node(id)?;
    let idx = node
        .possibility_index(label)
        .ok_or_else(|| SolveError::Precondition(format!("{id} has no outcome `{label}`")))?;
    if node.cpt().is_none() {
        return Err(SolveError::Unassessed(vec![id]));
    }
    let data = (0..node.possibilities.len()).map(|i| if i == idx { 1.0 } else { 0.0 }).collect();
    Ok(Factor::new(vec![id], vec![node.possibilities.len()], data))
}

fn scalar_of(f: Factor) -> f64 {
    debug_assert!(f.vars.is_empty());
    f.data[0]
}

/// Nodes (other than value and decision) still lacking a payload.
fn incomplete(d: &Diagram) -> Vec<NodeId> {
    d.nodes()
        .filter(|n| !matches!(n.kind, NodeKind::Value | NodeKind::Decision) && n.payload.is_none())
        .map(|n| n.id)
        .collect()
}

/// Exact probability of technical success implied by the technical model.
pub fn prob_ta(d: &Diagram) -> Result<f64, SolveError> {
    let core = d.core().ok_or(SolveError::NoCore)?;
    let scope = d.contributors(core.technical)?;
    let pending = unassessed(d, Some(&scope));
    if !pending.is_empty() {
        return Err(SolveError::Unassessed(pending));
    }
    let net = Network::from_diagram(d, Some(&scope));
    Ok(scalar_of(net.expectation(indicator(d, core.technical, SUCCESS)?)?))
}

/// Reduce the complete diagram to the core quantities and the funding
/// recommendation. Tornado entries are left empty; see [`tornado`].
pub fn evaluate_core(d: &Diagram, disc: &Discounting) -> Result<Evaluation, SolveError> {
    if disc.rate.is_nan() || disc.rate <= -1.0 {
        return Err(SolveError::InvalidRate(disc.rate));
    }
    let core = d.core().ok_or(SolveError::NoCore)?;
    let mut pending = incomplete(d);
    pending.extend(unassessed(d, None));
    pending.sort();
    pending.dedup();
    if !pending.is_empty() {
        return Err(SolveError::Unassessed(pending));
    }
    let all: BTreeSet<NodeId> = d.node_ids().collect();
    let tables = FunctionalTables::build(d, &all, disc)?;
    let net = Network::from_diagram(d, None);

    let ta = indicator(d, core.technical, SUCCESS)?;
    let invest = tables.pv_factor(d, core.investment, disc.rate)?;
    let contrib = tables.pv_factor(d, core.contribution, disc.rate)?.product(&ta);

    let p_ta = scalar_of(net.clone().expectation(ta)?);
    let e_invest_pv = scalar_of(net.clone().expectation(invest.clone())?);
    let e_contrib_joint = scalar_of(net.clone().expectation(contrib.clone())?);

    // value function over the decision and the chance variables it reads
    let decision = d.node(core.decision)?;
    let fund_idx = decision.possibility_index(FUND).ok_or(SolveError::NoCore)?;
    let card = decision.possibilities.len();
    let gate = Factor::new(
        vec![core.decision],
        vec![card],
        (0..card).map(|i| if i == fund_idx { 1.0 } else { 0.0 }).collect(),
    );
    let npv_fund = contrib.combine(&invest, |c, i| c - i);
    let value = gate.product(&npv_fund);
    let by_decision = net.expectation(value)?;
    let e_npv_fund = by_decision.get(&BTreeMap::from([(core.decision, fund_idx)]));
    let best = by_decision.max_out(core.decision).data[0];
    // ties go to not funding
    let decision = if e_npv_fund > 0.0 && e_npv_fund >= best { FundingChoice::Fund } else { FundingChoice::NoFund };

    let e_contrib_pv_given_success = if p_ta > 0.0 {
        e_contrib_joint / p_ta
    } else {
        net_expectation_unconditional(d, &tables, core.contribution, disc)?
    };
    Ok(Evaluation { p_ta, e_invest_pv, e_contrib_pv_given_success, e_npv_fund, decision, tornado: Vec::new() })
}

fn net_expectation_unconditional(
    d: &Diagram,
    tables: &FunctionalTables,
    id: NodeId,
    disc: &Discounting,
) -> Result<f64, SolveError> {
    let f = tables.pv_factor(d, id, disc.rate)?;
    Ok(scalar_of(Network::from_diagram(d, None).expectation(f)?))
}

/// Full evaluation including the tornado table.
pub fn evaluate(d: &Diagram, disc: &Discounting) -> Result<Evaluation, SolveError> {
    let mut ev = evaluate_core(d, disc)?;
    ev.tornado = tornado(d, disc)?;
    Ok(ev)
}

/// Three-point quantities: root chance nodes with an elicited estimate and
/// low/base/high outcomes.
pub fn sensitivity_variables(d: &Diagram) -> Vec<NodeId> {
    d.nodes()
        .filter(|n| {
            n.kind == NodeKind::Chance
                && n.cpt().is_some_and(|c| c.parents.is_empty())
                && n.annotations.estimate.is_some()
                && n.possibilities.len() == 3
                && n.has_numeric_possibilities()
        })
        .map(|n| n.id)
        .collect()
}

fn fix_at(d: &mut Diagram, id: NodeId, state: usize) -> Result<(), SolveError> {
    let width = d.node(id)?.possibilities.len();
    let row = (0..width).map(|i| if i == state { 1.0 } else { 0.0 }).collect();
    d.set_cpt(id, Cpt::marginal(row))?;
    Ok(())
}

/// One-way sensitivity: each three-point quantity is swept over its low and
/// high settings with all others held at base. Sorted by descending swing.
pub fn tornado(d: &Diagram, disc: &Discounting) -> Result<Vec<TornadoEntry>, SolveError> {
    let vars = sensitivity_variables(d);
    if vars.is_empty() {
        return Ok(Vec::new());
    }
    let mut at_base = d.clone();
    for v in &vars {
        fix_at(&mut at_base, *v, 1)?;
    }
    let npv_base = evaluate_core(&at_base, disc)?.e_npv_fund;
    let mut entries = Vec::with_capacity(vars.len());
    for v in vars {
        let node = d.node(v)?;
        let setting = |i: usize| node.possibilities[i].value.expect("numeric");
        let run = |state: usize| -> Result<f64, SolveError> {
            let mut m = at_base.clone();
            fix_at(&mut m, v, state)?;
            Ok(evaluate_core(&m, disc)?.e_npv_fund)
        };
        let npv_low = run(0)?;
        let npv_high = run(2)?;
        entries.push(TornadoEntry {
            node: v,
            name: node.name.clone(),
            low: setting(0),
            base: setting(1),
            high: setting(2),
            npv_low,
            npv_base,
            npv_high,
            swing: (npv_high - npv_low).abs(),
        });
    }
    entries.sort_by(|a, b| b.swing.total_cmp(&a.swing).then(a.node.cmp(&b.node)));
    Ok(entries)
}
