//! Dense tables over discrete variables. The last variable varies fastest,
//! so a probability table for `child` stored with scope `parents ++ [child]`
//! has the same layout as the diagram's row-per-parent-combination form.

use std::collections::BTreeMap;

use crate::idiag::{Cpt, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Factor {
    pub vars: Vec<NodeId>,
    pub cards: Vec<usize>,
    pub data: Vec<f64>,
}

impl Factor {
    pub fn new(vars: Vec<NodeId>, cards: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(cards.iter().product::<usize>(), data.len());
        Factor { vars, cards, data }
    }

    /// Scope `parents ++ [child]`.
    pub fn from_cpt(child: NodeId, cpt: &Cpt, card_of: &BTreeMap<NodeId, usize>) -> Self {
        let mut vars = cpt.parents.clone();
        vars.push(child);
        let cards = vars.iter().map(|v| card_of[v]).collect();
        let data = cpt.rows.iter().flatten().copied().collect();
        Factor::new(vars, cards, data)
    }

    /// Back to a table for `child`, which must be in scope.
    pub fn to_cpt(&self, child: NodeId) -> Cpt {
        let mut order: Vec<NodeId> = self.vars.iter().copied().filter(|v| *v != child).collect();
        order.push(child);
        let f = self.reorder(&order);
        let width = *f.cards.last().expect("child in scope");
        // round-off from Bayes' rule can push entries a hair outside [0, 1]
        let rows = f
            .data
            .chunks(width)
            .map(|c| {
                let clamped: Vec<f64> = c.iter().map(|p| p.clamp(0.0, 1.0)).collect();
                let total: f64 = clamped.iter().sum();
                clamped.iter().map(|p| p / total).collect()
            })
            .collect();
        Cpt::new(order[..order.len() - 1].to_vec(), rows)
    }

    pub fn card(&self, var: NodeId) -> Option<usize> {
        self.vars.iter().position(|v| *v == var).map(|i| self.cards[i])
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.cards[i + 1];
        }
        strides
    }

    pub fn index_of(&self, assignment: &BTreeMap<NodeId, usize>) -> usize {
        self.vars
            .iter()
            .zip(self.strides())
            .map(|(v, s)| assignment[v] * s)
            .sum()
    }

    pub fn get(&self, assignment: &BTreeMap<NodeId, usize>) -> f64 {
        self.data[self.index_of(assignment)]
    }

    /// Same table, variables permuted into `order`.
    pub fn reorder(&self, order: &[NodeId]) -> Factor {
        if order == self.vars.as_slice() {
            return self.clone();
        }
        let cards: Vec<usize> = order.iter().map(|v| self.card(*v).expect("var in scope")).collect();
        let strides = self.strides_for(order);
        let data = offsets(&cards, &strides).map(|i| self.data[i]).collect();
        Factor::new(order.to_vec(), cards, data)
    }

    /// Strides of `vars` within this table; zero for variables not in scope.
    fn strides_for(&self, vars: &[NodeId]) -> Vec<usize> {
        let own = self.strides();
        vars.iter()
            .map(|v| self.vars.iter().position(|x| x == v).map_or(0, |i| own[i]))
            .collect()
    }

    /// Pointwise combination over the union of both scopes.
    pub fn combine(&self, other: &Factor, f: impl Fn(f64, f64) -> f64) -> Factor {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (v, c) in other.vars.iter().zip(&other.cards) {
            if !vars.contains(v) {
                vars.push(*v);
                cards.push(*c);
            }
        }
        let (mine, theirs) = (self.strides_for(&vars), other.strides_for(&vars));
        let (mine, theirs) = (offsets(&cards, &mine), offsets(&cards, &theirs));
        let data = mine.zip(theirs).map(|(i, j)| f(self.data[i], other.data[j])).collect();
        Factor::new(vars, cards, data)
    }

    pub fn product(&self, other: &Factor) -> Factor {
        self.combine(other, |a, b| a * b)
    }

    pub fn sum_out(&self, var: NodeId) -> Factor {
        self.eliminate(var, |xs| xs.iter().sum())
    }

    pub fn max_out(&self, var: NodeId) -> Factor {
        self.eliminate(var, |xs| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn eliminate(&self, var: NodeId, reduce: impl Fn(&[f64]) -> f64) -> Factor {
        let Some(pos) = self.vars.iter().position(|v| *v == var) else {
            return self.clone();
        };
        let mut order: Vec<NodeId> = self.vars.iter().copied().filter(|v| *v != var).collect();
        order.push(var);
        let f = self.reorder(&order);
        let width = self.cards[pos];
        let data = f.data.chunks(width).map(&reduce).collect();
        let cards = order[..order.len() - 1].iter().map(|v| self.card(*v).unwrap()).collect();
        Factor::new(order[..order.len() - 1].to_vec(), cards, data)
    }
}

/// Flat offsets into a table with the given strides, visiting the joint
/// states of `cards` in odometer order.
fn offsets<'a>(cards: &'a [usize], strides: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
    let total: usize = cards.iter().product();
    let mut states = vec![0usize; cards.len()];
    let mut at = 0usize;
    (0..total).map(move |k| {
        if k > 0 {
            for i in (0..cards.len()).rev() {
                states[i] += 1;
                at += strides[i];
                if states[i] < cards[i] {
                    break;
                }
                at -= strides[i] * cards[i];
                states[i] = 0;
            }
        }
        at
    })
}

/// Odometer over all joint states, last position fastest.
pub(crate) struct Assignments {
    cards: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Assignments {
    pub fn new(cards: &[usize]) -> Self {
        let next = if cards.contains(&0) { None } else { Some(vec![0; cards.len()]) };
        Assignments { cards: cards.to_vec(), next }
    }
}

impl Iterator for Assignments {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut i = succ.len();
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            succ[i] += 1;
            if succ[i] < self.cards[i] {
                self.next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    }
}
