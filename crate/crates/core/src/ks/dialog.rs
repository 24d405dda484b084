//! Declarative dialog programs. A program is an ordered list of prompts,
//! each shown only when its guards hold; the same data drives scripted
//! runs and interactive front ends.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::idiag::{NodeId, ThreePoint, ROW_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub id: String,
    pub label: String,
}

impl ChoiceOption {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        ChoiceOption { id: id.into(), label: label.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InputSpec {
    Choice { options: Vec<ChoiceOption> },
    /// A list of distinct, non-empty names.
    Names { min: usize, max: usize },
    Number {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
        #[serde(default)]
        integer: bool,
    },
    Probability,
    ThreePoint {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
    /// Probabilities over the names entered at another prompt.
    Distribution { over: String },
    /// Some of the names entered at another prompt.
    Subset { of: String },
    Text,
    /// Node ids, in order.
    Nodes,
}

impl InputSpec {
    pub fn choice(options: &[(&str, &str)]) -> Self {
        InputSpec::Choice { options: options.iter().map(|(id, label)| ChoiceOption::new(*id, *label)).collect() }
    }

    pub fn number(unit: Option<&str>) -> Self {
        InputSpec::Number { unit: unit.map(String::from), min: None, max: None, integer: false }
    }

    pub fn non_negative(unit: Option<&str>) -> Self {
        InputSpec::Number { unit: unit.map(String::from), min: Some(0.0), max: None, integer: false }
    }

    pub fn periods(min: f64) -> Self {
        InputSpec::Number { unit: Some("periods".into()), min: Some(min), max: None, integer: true }
    }
}

/// Show the step only if the answer to `prompt` is one of `any_of`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub prompt: String,
    pub any_of: Vec<String>,
}

impl Guard {
    pub fn is(prompt: &str, value: &str) -> Self {
        Guard { prompt: prompt.into(), any_of: vec![value.into()] }
    }

    pub fn any(prompt: &str, values: &[&str]) -> Self {
        Guard { prompt: prompt.into(), any_of: values.iter().map(|v| v.to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogStep {
    pub id: String,
    pub prompt: String,
    pub explanation: String,
    pub input: InputSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub when: Vec<Guard>,
}

impl DialogStep {
    pub fn new(id: &str, prompt: impl Into<String>, explanation: &str, input: InputSpec) -> Self {
        DialogStep { id: id.into(), prompt: prompt.into(), explanation: explanation.into(), input, when: Vec::new() }
    }

    pub fn when(mut self, guard: Guard) -> Self {
        self.when.push(guard);
        self
    }

    pub fn when_all(mut self, guards: &[Guard]) -> Self {
        self.when.extend_from_slice(guards);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DialogProgram {
    pub steps: Vec<DialogStep>,
}

/// A user's reply. Untagged so scripts can write plain JSON values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Number(f64),
    Text(String),
    Numbers(Vec<f64>),
    Texts(Vec<String>),
    Estimate(ThreePoint),
}

impl Answer {
    pub fn text(s: &str) -> Self {
        Answer::Text(s.into())
    }

    pub fn names(xs: &[&str]) -> Self {
        Answer::Texts(xs.iter().map(|x| x.to_string()).collect())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Answer::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Answer::Number(v) => Some(*v),
            _ => None,
        }
    }

    /// Names; an empty JSON list reads as an empty list of names.
    pub fn as_names(&self) -> Option<Vec<String>> {
        match self {
            Answer::Texts(xs) => Some(xs.clone()),
            Answer::Numbers(xs) if xs.is_empty() => Some(Vec::new()),
            _ => None,
        }
    }

    pub fn as_numbers(&self) -> Option<Vec<f64>> {
        match self {
            Answer::Numbers(xs) => Some(xs.clone()),
            _ => None,
        }
    }

    pub fn as_three_point(&self) -> Option<ThreePoint> {
        match self {
            Answer::Estimate(tp) => Some(*tp),
            Answer::Numbers(xs) if xs.len() == 3 => Some(ThreePoint::new(xs[0], xs[1], xs[2])),
            _ => None,
        }
    }

    pub fn as_nodes(&self) -> Option<Vec<NodeId>> {
        let xs = self.as_numbers()?;
        xs.iter()
            .map(|x| (x.fract() == 0.0 && *x >= 0.0 && *x <= f64::from(u32::MAX)).then_some(NodeId(*x as u32)))
            .collect()
    }
}

pub type Answers = BTreeMap<String, Answer>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnswerError {
    #[error("no answer for prompt `{0}`")]
    Missing(String),
    #[error("prompt `{0}` is not part of this dialog")]
    Unknown(String),
    #[error("prompt `{0}` is not asked given the earlier answers")]
    NotAsked(String),
    #[error("answer to `{prompt}` rejected: {reason}")]
    Invalid { prompt: String, reason: String },
}

fn invalid(prompt: &str, reason: impl Into<String>) -> AnswerError {
    AnswerError::Invalid { prompt: prompt.into(), reason: reason.into() }
}

impl DialogProgram {
    pub fn new(steps: Vec<DialogStep>) -> Self {
        DialogProgram { steps }
    }

    pub fn step(&self, id: &str) -> Option<&DialogStep> {
        self.steps.iter().find(|s| s.id == id)
    }

    fn active(&self, step: &DialogStep, answers: &Answers) -> bool {
        step.when.iter().all(|g| {
            answers
                .get(&g.prompt)
                .and_then(Answer::as_str)
                .is_some_and(|a| g.any_of.iter().any(|v| v == a))
        })
    }

    /// The first active prompt still unanswered.
    pub fn next_prompt(&self, answers: &Answers) -> Option<&DialogStep> {
        self.steps.iter().find(|s| !answers.contains_key(&s.id) && self.active(s, answers))
    }

    /// Check one answer against its prompt, given the answers before it.
    pub fn check_one(&self, id: &str, answer: &Answer, earlier: &Answers) -> Result<(), AnswerError> {
        let step = self.step(id).ok_or_else(|| AnswerError::Unknown(id.into()))?;
        validate(step, answer, earlier)
    }

    /// A complete answer set: every active prompt answered validly and
    /// nothing else answered.
    pub fn check(&self, answers: &Answers) -> Result<(), AnswerError> {
        for key in answers.keys() {
            if self.step(key).is_none() {
                return Err(AnswerError::Unknown(key.clone()));
            }
        }
        let mut seen = Answers::new();
        for step in &self.steps {
            let active = self.active(step, &seen);
            match (active, answers.get(&step.id)) {
                (true, Some(a)) => {
                    validate(step, a, &seen)?;
                    seen.insert(step.id.clone(), a.clone());
                }
                (true, None) => return Err(AnswerError::Missing(step.id.clone())),
                (false, Some(_)) => return Err(AnswerError::NotAsked(step.id.clone())),
                (false, None) => {}
            }
        }
        Ok(())
    }
}

fn names_of(earlier: &Answers, prompt: &str) -> Vec<String> {
    earlier.get(prompt).and_then(Answer::as_names).unwrap_or_default()
}

fn validate(step: &DialogStep, answer: &Answer, earlier: &Answers) -> Result<(), AnswerError> {
    let id = step.id.as_str();
    match &step.input {
        InputSpec::Choice { options } => {
            let a = answer.as_str().ok_or_else(|| invalid(id, "expected one of the offered choices"))?;
            if !options.iter().any(|o| o.id == a) {
                return Err(invalid(id, format!("`{a}` is not one of the offered choices")));
            }
        }
        InputSpec::Names { min, max } => {
            let names = answer.as_names().ok_or_else(|| invalid(id, "expected a list of names"))?;
            if names.len() < *min || names.len() > *max {
                return Err(invalid(id, format!("expected between {min} and {max} names")));
            }
            let mut distinct = BTreeSet::new();
            for n in &names {
                if n.trim().is_empty() {
                    return Err(invalid(id, "names must not be blank"));
                }
                if !distinct.insert(n.trim()) {
                    return Err(invalid(id, format!("`{n}` is listed twice")));
                }
            }
        }
        InputSpec::Number { min, max, integer, .. } => {
            let v = answer.as_number().ok_or_else(|| invalid(id, "expected a number"))?;
            if !v.is_finite() {
                return Err(invalid(id, "expected a finite number"));
            }
            if min.is_some_and(|m| v < m) || max.is_some_and(|m| v > m) {
                return Err(invalid(id, format!("{v} is out of range")));
            }
            if *integer && v.fract() != 0.0 {
                return Err(invalid(id, "expected a whole number"));
            }
        }
        InputSpec::Probability => {
            let v = answer.as_number().ok_or_else(|| invalid(id, "expected a probability"))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(id, format!("{v} is not a probability")));
            }
        }
        InputSpec::ThreePoint { .. } => {
            let tp = answer.as_three_point().ok_or_else(|| invalid(id, "expected low, base and high values"))?;
            if !tp.is_valid() {
                return Err(invalid(id, "estimates must be finite with low <= base <= high"));
            }
        }
        InputSpec::Distribution { over } => {
            let ps = answer.as_numbers().ok_or_else(|| invalid(id, "expected a list of probabilities"))?;
            let n = names_of(earlier, over).len();
            if ps.len() != n {
                return Err(invalid(id, format!("expected {n} probabilities")));
            }
            if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid(id, "probabilities must lie in [0, 1]"));
            }
            let total: f64 = ps.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return Err(invalid(id, format!("probabilities sum to {total}, not 1")));
            }
        }
        InputSpec::Subset { of } => {
            let picked = answer.as_names().ok_or_else(|| invalid(id, "expected a list of names"))?;
            let pool = names_of(earlier, of);
            let mut distinct = BTreeSet::new();
            for p in &picked {
                if !pool.contains(p) {
                    return Err(invalid(id, format!("`{p}` is not one of the listed outcomes")));
                }
                if !distinct.insert(p) {
                    return Err(invalid(id, format!("`{p}` is listed twice")));
                }
            }
        }
        InputSpec::Text => {
            let s = answer.as_str().ok_or_else(|| invalid(id, "expected text"))?;
            if s.trim().is_empty() {
                return Err(invalid(id, "text must not be blank"));
            }
        }
        InputSpec::Nodes => {
            answer.as_nodes().ok_or_else(|| invalid(id, "expected a list of node ids"))?;
        }
    }
    Ok(())
}
