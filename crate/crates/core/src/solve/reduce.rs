//! Exact evaluation by diagram reduction: barren-node removal, arc reversal
//! and chance-node removal into the value function.

use std::collections::{BTreeMap, BTreeSet};

use crate::idiag::{Diagram, DiagramError, NodeId, NodeKind, Payload};

use super::factor::Factor;
use super::SolveError;

/// The probabilistic part of a diagram: discrete chance nodes and their
/// tables.
#[derive(Debug, Clone)]
pub(crate) struct Network {
    pub cards: BTreeMap<NodeId, usize>,
    /// Each table has scope `parents ++ [node]`.
    pub tables: BTreeMap<NodeId, Factor>,
    pub decisions: BTreeSet<NodeId>,
}

/// Discrete chance nodes (within `scope`, when given) still lacking a
/// probability table.
pub(crate) fn unassessed(d: &Diagram, scope: Option<&BTreeSet<NodeId>>) -> Vec<NodeId> {
    d.nodes()
        .filter(|n| scope.is_none_or(|s| s.contains(&n.id)))
        .filter(|n| n.kind == NodeKind::Chance && !n.possibilities.is_empty() && n.cpt().is_none())
        .map(|n| n.id)
        .collect()
}

impl Network {
    /// Every chance node carrying a table, restricted to `within` when
    /// given. Unassessed chance nodes are left out; see [`unassessed`].
    pub fn from_diagram(d: &Diagram, within: Option<&BTreeSet<NodeId>>) -> Network {
        let mut cards = BTreeMap::new();
        let mut decisions = BTreeSet::new();
        for n in d.nodes() {
            if n.is_discrete() {
                cards.insert(n.id, n.possibilities.len());
            }
            if n.kind == NodeKind::Decision {
                decisions.insert(n.id);
            }
        }
        let mut tables = BTreeMap::new();
        for n in d.nodes() {
            if within.is_some_and(|w| !w.contains(&n.id)) {
                continue;
            }
            if let (NodeKind::Chance, Some(Payload::Cpt(c))) = (n.kind, &n.payload) {
                tables.insert(n.id, Factor::from_cpt(n.id, c, &cards));
            }
        }
        Network { cards, tables, decisions }
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        let t = &self.tables[&id];
        t.vars[..t.vars.len() - 1].to_vec()
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.tables
            .iter()
            .filter(|(c, t)| **c != id && t.vars.contains(&id))
            .map(|(c, _)| *c)
            .collect()
    }

    fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.children(n));
            }
        }
        false
    }

    /// Topological order of the chance nodes.
    pub fn order(&self) -> Vec<NodeId> {
        let mut placed = BTreeSet::new();
        let mut out = Vec::new();
        while out.len() < self.tables.len() {
            let before = out.len();
            for id in self.tables.keys() {
                if !placed.contains(id)
                    && self.parents(*id).iter().all(|p| placed.contains(p) || !self.tables.contains_key(p))
                {
                    placed.insert(*id);
                    out.push(*id);
                }
            }
            assert!(out.len() > before, "chance network has a cycle");
        }
        out
    }

    /// Reverse `from -> to`, rewriting both tables by Bayes' rule so the
    /// joint distribution is unchanged.
    pub fn reverse(&mut self, from: NodeId, to: NodeId) -> Result<(), SolveError> {
        if !self.tables.get(&to).is_some_and(|t| t.vars[..t.vars.len() - 1].contains(&from)) {
            return Err(DiagramError::MissingArc { from, to }.into());
        }
        // another directed path from -> .. -> to would close a cycle
        let others: Vec<NodeId> = self.children(from).into_iter().filter(|c| *c != to).collect();
        if others.iter().any(|c| self.reaches(*c, to)) {
            return Err(DiagramError::Cycle { from: to, to: from }.into());
        }
        let px = self.tables[&from].clone();
        let py = self.tables[&to].clone();
        let joint = px.product(&py);
        let marg_y = joint.sum_out(from);
        let card_x = self.cards[&from] as f64;
        let cond_x = joint.combine(&marg_y, |j, m| if m > 0.0 { j / m } else { 1.0 / card_x });

        let mut y_order: Vec<NodeId> = marg_y.vars.iter().copied().filter(|v| *v != to).collect();
        y_order.push(to);
        let mut x_order: Vec<NodeId> = cond_x.vars.iter().copied().filter(|v| *v != from).collect();
        x_order.push(from);
        self.tables.insert(to, marg_y.reorder(&y_order));
        self.tables.insert(from, cond_x.reorder(&x_order));
        Ok(())
    }

    /// Sum `id` out into its only child.
    pub fn absorb_into_child(&mut self, id: NodeId, child: NodeId) {
        let p = self.tables.remove(&id).expect("node present");
        let merged = p.product(&self.tables[&child]).sum_out(id);
        let mut order: Vec<NodeId> = merged.vars.iter().copied().filter(|v| *v != child).collect();
        order.push(child);
        self.tables.insert(child, merged.reorder(&order));
    }

    /// Remove a chance node, preserving the distribution of every other
    /// node: arcs to all but the last child are reversed, then the node is
    /// summed into that child.
    pub fn remove(&mut self, id: NodeId) -> Result<(), SolveError> {
        if !self.tables.contains_key(&id) {
            return Err(SolveError::NotChance(id));
        }
        self.reverse_all_but_last(id)?;
        match self.children(id).as_slice() {
            [] => {
                self.tables.remove(&id);
            }
            [child] => self.absorb_into_child(id, *child),
            _ => unreachable!("all but one child reversed"),
        }
        Ok(())
    }

    fn reverse_all_but_last(&mut self, id: NodeId) -> Result<(), SolveError> {
        loop {
            let kids = self.children(id);
            if kids.len() <= 1 {
                return Ok(());
            }
            let first = self.first_reversible_child(id, &kids);
            self.reverse(id, first)?;
        }
    }

    /// The child with no other directed path from `id` to it.
    fn first_reversible_child(&self, id: NodeId, kids: &[NodeId]) -> NodeId {
        let order = self.order();
        *kids
            .iter()
            .min_by_key(|k| order.iter().position(|o| o == *k))
            .unwrap_or_else(|| panic!("{id} has children"))
    }

    /// Expected value of `value` with every chance node summed out. The
    /// result's scope holds only non-chance variables (decisions).
    pub fn expectation(mut self, mut value: Factor) -> Result<Factor, SolveError> {
        loop {
            // barren nodes contribute nothing
            loop {
                let barren: Vec<NodeId> = self
                    .tables
                    .keys()
                    .copied()
                    .filter(|n| self.children(*n).is_empty() && !value.vars.contains(n))
                    .collect();
                if barren.is_empty() {
                    break;
                }
                for b in barren {
                    self.tables.remove(&b);
                }
            }
            let candidates: Vec<NodeId> = value.vars.iter().copied().filter(|v| self.tables.contains_key(v)).collect();
            if candidates.is_empty() {
                if let Some(v) = value.vars.iter().find(|v| !self.decisions.contains(v)) {
                    return Err(SolveError::Unassessed(vec![*v]));
                }
                return Ok(value);
            }
            // a node with no chance successors folds straight into the
            // value; among those take the one leaving the smallest table
            let direct = candidates.iter().filter(|c| self.children(**c).is_empty()).min_by_key(|c| {
                let mut scope: BTreeSet<NodeId> = value.vars.iter().copied().collect();
                scope.extend(self.tables[*c].vars.iter().copied());
                scope.remove(*c);
                scope.iter().map(|v| self.cards.get(v).copied().unwrap_or(1).max(1)).fold(1usize, usize::saturating_mul)
            });
            let order = self.order();
            let x = match direct {
                Some(x) => *x,
                None => *candidates
                    .iter()
                    .max_by_key(|c| order.iter().position(|o| o == *c))
                    .expect("nonempty"),
            };
            loop {
                let kids = self.children(x);
                if kids.is_empty() {
                    break;
                }
                let first = self.first_reversible_child(x, &kids);
                self.reverse(x, first)?;
            }
            let px = self.tables.remove(&x).expect("present");
            value = px.product(&value).sum_out(x);
        }
    }
}

fn write_back(d: &Diagram, net: &Network, touched: &[NodeId]) -> Result<Diagram, SolveError> {
    let mut out = d.clone();
    for id in touched {
        let new_parents = net.parents(*id);
        for p in out.parents(*id) {
            out.remove_arc_raw(p, *id)?;
        }
        for p in &new_parents {
            out.add_arc_raw(*p, *id);
        }
    }
    for id in touched {
        out.set_cpt(*id, net.tables[id].to_cpt(*id))?;
    }
    if out.topological_order().is_none() {
        return Err(SolveError::Precondition("reduction produced a cycle".into()));
    }
    Ok(out)
}

/// Reverse the arc `from -> to` between two assessed chance nodes.
pub fn reverse_arc(d: &Diagram, from: NodeId, to: NodeId) -> Result<Diagram, SolveError> {
    if !d.has_arc(from, to) {
        return Err(DiagramError::MissingArc { from, to }.into());
    }
    for id in [from, to] {
        let n = d.node(id)?;
        if n.kind != NodeKind::Chance || n.cpt().is_none() {
            return Err(SolveError::NotChance(id));
        }
    }
    let scope: BTreeSet<NodeId> = [from, to].into_iter().chain(d.parents(from)).chain(d.parents(to)).collect();
    let mut net = Network::from_diagram(d, Some(&scope));
    // parents that are not assessed chance nodes cannot take part
    for p in d.parents(from).into_iter().chain(d.parents(to)) {
        if !net.cards.contains_key(&p) {
            return Err(SolveError::Precondition(format!("{p} is not a discrete predecessor")));
        }
    }
    if d.children(from).iter().any(|c| *c != to && d.reaches(*c, to)) {
        return Err(DiagramError::Cycle { from: to, to: from }.into());
    }
    net.reverse(from, to)?;
    write_back(d, &net, &[from, to])
}

/// Remove a chance node whose successors are all assessed chance nodes,
/// keeping the joint distribution of the remaining nodes.
pub fn remove_chance_node(d: &Diagram, id: NodeId) -> Result<Diagram, SolveError> {
    let node = d.node(id)?;
    if node.kind != NodeKind::Chance || node.cpt().is_none() {
        return Err(SolveError::NotChance(id));
    }
    for c in d.children(id) {
        let cn = d.node(c)?;
        if cn.kind != NodeKind::Chance || cn.cpt().is_none() {
            return Err(SolveError::Precondition(format!(
                "successor {c} does not carry a probability table"
            )));
        }
    }
    let descendants: BTreeSet<NodeId> = d.node_ids().filter(|n| *n != id && d.reaches(id, *n)).collect();
    let pending = unassessed(d, Some(&descendants));
    if !pending.is_empty() {
        return Err(SolveError::Unassessed(pending));
    }
    let mut net = Network::from_diagram(d, None);
    let before_children = d.children(id);
    net.remove(id)?;
    let mut out = d.clone();
    out.remove_node_raw(id);
    let touched: Vec<NodeId> = net
        .tables
        .keys()
        .copied()
        .filter(|k| before_children.contains(k))
        .collect();
    write_back(&out, &net, &touched)
}
