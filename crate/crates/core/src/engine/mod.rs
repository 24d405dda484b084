//! The control cycle: screen the diagram for nodes worth assessing next,
//! run the knowledge source the user picks, tidy the focus stack and
//! record a checkpoint.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::board::{AssessmentStatus, Blackboard, BoardError, Change, ProjectGlobals};
use crate::idiag::{NodeId, VariableType};
use crate::ks::{
    self, control_pops, execute_ks, specialist_for, Answer, Answers, DialogProgram, DialogStep, InputSpec,
    KsError,
};
use crate::solve::{self, SolveError};

/// The options menu offered alongside the eligible nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MenuOption {
    Save,
    UserProfile,
    ProjectGlobals,
    ProjectAttributes,
    ProjectUnits,
    RedefineProject,
    EvaluateTa,
    ChangeTopic,
    Backtrack,
    ExitConsultation,
}

impl MenuOption {
    pub const ALL: [MenuOption; 10] = [
        MenuOption::Save,
        MenuOption::UserProfile,
        MenuOption::ProjectGlobals,
        MenuOption::ProjectAttributes,
        MenuOption::ProjectUnits,
        MenuOption::RedefineProject,
        MenuOption::EvaluateTa,
        MenuOption::ChangeTopic,
        MenuOption::Backtrack,
        MenuOption::ExitConsultation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MenuOption::Save => "Save",
            MenuOption::UserProfile => "User profile",
            MenuOption::ProjectGlobals => "Project globals",
            MenuOption::ProjectAttributes => "Project attributes",
            MenuOption::ProjectUnits => "Project units",
            MenuOption::RedefineProject => "Redefine project",
            MenuOption::EvaluateTa => "Evaluate technical achievement",
            MenuOption::ChangeTopic => "Change topic",
            MenuOption::Backtrack => "Backtrack",
            MenuOption::ExitConsultation => "Exit consultation",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            MenuOption::Save => "Save the current state of the consultation.",
            MenuOption::UserProfile => "Inspect and change your experience level and assistance settings.",
            MenuOption::ProjectGlobals => "Inspect and change the discount rate, horizon and currency.",
            MenuOption::ProjectAttributes => "Record descriptive attributes used by the portfolio.",
            MenuOption::ProjectUnits => "Define a unit of measure for use in the model.",
            MenuOption::RedefineProject => "Return to the project introduction.",
            MenuOption::EvaluateTa => "Calculate the probability of success implied by the current technical model.",
            MenuOption::ChangeTopic => "Inspect and modify the current focus node stack.",
            MenuOption::Backtrack => "Delete or modify part of the existing model.",
            MenuOption::ExitConsultation => "End the consultation.",
        }
    }
}

impl std::fmt::Display for MenuOption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for MenuOption {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown option `{s}`"))
    }
}

/// What the user picked from the agenda.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Choice {
    Node(NodeId),
    Option(MenuOption),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibleNode {
    pub id: NodeId,
    pub name: String,
    pub vtype: VariableType,
    /// The knowledge source that would handle it.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionEntry {
    pub option: MenuOption,
    pub label: String,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agenda {
    pub focus: NodeId,
    pub eligible: Vec<EligibleNode>,
    pub options: Vec<OptionEntry>,
}

impl Agenda {
    pub fn eligible_ids(&self) -> Vec<NodeId> {
        self.eligible.iter().map(|e| e.id).collect()
    }

    pub fn offers(&self, choice: Choice) -> bool {
        match choice {
            Choice::Node(id) => self.eligible.iter().any(|e| e.id == id),
            Choice::Option(o) => self.options.iter().any(|e| e.option == o && e.enabled),
        }
    }
}

/// Side effects of a step that the caller has to carry out or report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Effect {
    Assessed { node: NodeId, source: String },
    Updated,
    SaveRequested,
    ProbabilityOfSuccess { p_ta: f64 },
    FocusChanged { stack: Vec<NodeId> },
    BacktrackedTo { seq: u64, label: String },
    Exited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub effect: Effect,
    pub agenda: Agenda,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("{0:?} is not on the current agenda")]
    NotOnAgenda(Choice),
    #[error(transparent)]
    Ks(#[from] KsError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error("the technical model cannot be evaluated yet: {0}")]
    Evaluation(#[from] SolveError),
}

impl From<ks::AnswerError> for EngineError {
    fn from(e: ks::AnswerError) -> Self {
        EngineError::Ks(KsError::Answer(e))
    }
}

/// Nodes the user may assess next. Only open contributors of the focus
/// node are considered; R&D investment waits until the technical model is
/// complete, and nodes no specialist can handle yet are left out.
pub fn agenda(bb: &Blackboard) -> Agenda {
    let focus = bb.focus().top();
    let core = bb.diagram().core();
    let technical_done = core.is_some_and(|c| bb.fully_assessed(c.technical));
    let eligible = bb
        .diagram()
        .contributors(focus)
        .unwrap_or_default()
        .into_iter()
        .filter(|id| matches!(bb.status(*id), Some(AssessmentStatus::Unassessed | AssessmentStatus::Defined)))
        .filter(|id| technical_done || core.is_none_or(|c| c.investment != *id))
        .filter_map(|id| {
            let ks = specialist_for(bb, id)?;
            let node = bb.diagram().node(id).ok()?;
            Some(EligibleNode { id, name: node.name.clone(), vtype: node.vtype, source: ks.id.to_string() })
        })
        .collect();
    let options = MenuOption::ALL
        .iter()
        .map(|&option| OptionEntry { option, label: option.label().to_string(), enabled: option_enabled(bb, option) })
        .collect();
    Agenda { focus, eligible, options }
}

fn option_enabled(bb: &Blackboard, option: MenuOption) -> bool {
    match option {
        MenuOption::EvaluateTa => bb.diagram().core().is_some_and(|c| {
            bb.diagram()
                .contributors(c.technical)
                .is_ok_and(|ids| ids.iter().all(|id| bb.diagram().node(*id).is_ok_and(|n| n.payload.is_some())))
        }),
        MenuOption::Backtrack => bb.log().len() > 1,
        _ => true,
    }
}

/// The single eligible node, when the user has asked the coach to skip
/// the menu in that situation.
pub fn maybe_bypass(bb: &Blackboard, agenda: &Agenda) -> Option<NodeId> {
    match agenda.eligible.as_slice() {
        [only] if bb.settings().auto_bypass => Some(only.id),
        _ => None,
    }
}

/// Only the value node is in focus and nothing is left to assess.
pub fn is_complete(bb: &Blackboard) -> bool {
    bb.focus().depth() == 1 && agenda(bb).eligible.is_empty()
}

/// The dialog the user answers for `choice`.
pub fn program_for(bb: &Blackboard, choice: Choice) -> Result<DialogProgram, EngineError> {
    match choice {
        Choice::Node(id) => Ok(specialist_for(bb, id).ok_or(KsError::NoSource(id))?.program(bb, Some(id))),
        Choice::Option(o) => Ok(option_program(bb, o)),
    }
}

/// One turn of the control cycle.
pub fn step(bb: &mut Blackboard, choice: Choice, answers: &Answers) -> Result<StepOutcome, EngineError> {
    if !agenda(bb).offers(choice) {
        return Err(EngineError::NotOnAgenda(choice));
    }
    let effect = match choice {
        Choice::Node(id) => {
            let ks = specialist_for(bb, id).ok_or(KsError::NoSource(id))?;
            let mut next = bb.clone();
            execute_ks(&mut next, ks, Some(id), answers)?;
            let name = next.diagram().node(id).map(|n| n.name.clone()).unwrap_or_else(|_| id.to_string());
            let mut tail = control_pops(&next);
            tail.push(Change::Checkpoint { label: format!("{}: {}", ks.title, name) });
            next.apply(tail)?;
            *bb = next;
            Effect::Assessed { node: id, source: ks.id.to_string() }
        }
        Choice::Option(o) => handle_option(bb, o, answers)?,
    };
    Ok(StepOutcome { effect, agenda: agenda(bb) })
}

/// Carry out a menu command. Commands that change the blackboard add a
/// checkpoint; Backtrack rewinds to one.
pub fn handle_option(bb: &mut Blackboard, option: MenuOption, answers: &Answers) -> Result<Effect, EngineError> {
    option_program(bb, option).check(answers)?;
    let text = |id: &str| answers.get(id).and_then(Answer::as_str).unwrap_or_default().trim().to_string();
    let number = |id: &str| answers.get(id).and_then(Answer::as_number).unwrap_or_default();
    let mut globals = bb.globals().clone();
    let delta = match option {
        MenuOption::Save => return Ok(Effect::SaveRequested),
        MenuOption::ExitConsultation => return Ok(Effect::Exited),
        MenuOption::EvaluateTa => return Ok(Effect::ProbabilityOfSuccess { p_ta: solve::prob_ta(bb.diagram())? }),
        MenuOption::Backtrack => {
            let seq: u64 = text("backtrack.checkpoint").parse().map_err(|_| BoardError::UnknownSeq(u64::MAX))?;
            let label = bb
                .checkpoints()
                .into_iter()
                .find(|(s, _)| *s == seq)
                .map(|(_, l)| l)
                .ok_or(BoardError::UnknownSeq(seq))?;
            *bb = bb.truncate_to(seq)?;
            return Ok(Effect::BacktrackedTo { seq, label });
        }
        MenuOption::UserProfile => utility_delta(bb, "assessment-coach", answers)?,
        MenuOption::ProjectUnits => utility_delta(bb, "units-manager", answers)?,
        MenuOption::ChangeTopic => {
            let stack = answers.get("topic.stack").and_then(Answer::as_nodes).unwrap_or_default();
            bb.check_stack(&stack)?;
            vec![Change::FocusReplaced { stack }]
        }
        MenuOption::ProjectGlobals | MenuOption::RedefineProject => {
            if option == MenuOption::RedefineProject {
                globals.project_name = text("project.name");
            }
            globals.rate = number("globals.rate");
            globals.horizon = number("globals.horizon") as u32;
            globals.currency = text("globals.currency");
            globals.validate()?;
            vec![Change::GlobalChanged { globals }]
        }
        MenuOption::ProjectAttributes => {
            globals.attributes = parse_attributes(answers.get("attributes.entries"))?;
            vec![Change::GlobalChanged { globals }]
        }
    };
    let mut delta = delta;
    delta.push(Change::Checkpoint { label: option.label().to_string() });
    bb.apply(delta)?;
    Ok(match option {
        MenuOption::ChangeTopic => Effect::FocusChanged { stack: bb.focus().as_slice().to_vec() },
        _ => Effect::Updated,
    })
}

fn utility_delta(bb: &Blackboard, id: &str, answers: &Answers) -> Result<Vec<Change>, EngineError> {
    let ks = ks::find(id).expect("registered utility");
    Ok((ks.action)(bb, None, answers)?)
}

fn parse_attributes(answer: Option<&Answer>) -> Result<BTreeMap<String, String>, EngineError> {
    let entries = answer.and_then(Answer::as_names).unwrap_or_default();
    let mut out = BTreeMap::new();
    for entry in entries {
        let (k, v) = entry.split_once('=').ok_or_else(|| ks::AnswerError::Invalid {
            prompt: "attributes.entries".into(),
            reason: format!("`{entry}` is not of the form name=value"),
        })?;
        if k.trim().is_empty() {
            return Err(ks::AnswerError::Invalid {
                prompt: "attributes.entries".into(),
                reason: format!("`{entry}` has an empty name"),
            }
            .into());
        }
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn globals_steps(g: &ProjectGlobals) -> Vec<DialogStep> {
    vec![
        DialogStep::new(
            "globals.rate",
            format!("Discount rate per period (currently {})?", g.rate),
            "Enter 0.1 for ten percent.",
            InputSpec::Number { unit: None, min: Some(-0.99), max: None, integer: false },
        ),
        DialogStep::new(
            "globals.horizon",
            format!("Planning horizon in periods (currently {})?", g.horizon),
            "",
            InputSpec::periods(1.0),
        ),
        DialogStep::new(
            "globals.currency",
            format!("Currency label (currently {})?", g.currency),
            "",
            InputSpec::Text,
        ),
    ]
}

/// The dialog behind a menu command.
pub fn option_program(bb: &Blackboard, option: MenuOption) -> DialogProgram {
    let utility = |id| ks::find(id).expect("registered utility").program(bb, None);
    match option {
        MenuOption::Save | MenuOption::EvaluateTa | MenuOption::ExitConsultation => DialogProgram::default(),
        MenuOption::UserProfile => utility("assessment-coach"),
        MenuOption::ProjectUnits => utility("units-manager"),
        MenuOption::Backtrack => utility("revision-manager"),
        MenuOption::ProjectGlobals => DialogProgram::new(globals_steps(bb.globals())),
        MenuOption::RedefineProject => {
            let mut steps = vec![DialogStep::new(
                "project.name",
                format!("Project name (currently {})?", bb.globals().project_name),
                "",
                InputSpec::Text,
            )];
            steps.extend(globals_steps(bb.globals()));
            DialogProgram::new(steps)
        }
        MenuOption::ProjectAttributes => DialogProgram::new(vec![DialogStep::new(
            "attributes.entries",
            "List the project's attributes as name=value.",
            "For example business=consumer or stage=applied.",
            InputSpec::Names { min: 0, max: 32 },
        )]),
        MenuOption::ChangeTopic => DialogProgram::new(vec![DialogStep::new(
            "topic.stack",
            "Enter the new focus stack, from the value node upward.",
            "Each node must contribute to the one before it.",
            InputSpec::Nodes,
        )]),
    }
}

/// Every prompt id any dialog, specialist or menu, can ask.
pub fn prompt_catalog() -> BTreeSet<String> {
    let bb = Blackboard::new(ProjectGlobals::default()).expect("default globals");
    let mut out = ks::prompt_catalog();
    for o in MenuOption::ALL {
        out.extend(option_program(&bb, o).steps.into_iter().map(|s| s.id));
    }
    out
}

