//! Scripted consultations: a list of agenda choices with the answers to give
//! at each, replayed through the control cycle without a user.

use std::collections::BTreeSet;

use idcoach_core::board::{Blackboard, BoardError, ProjectGlobals};
use idcoach_core::engine::{self, Choice, Effect, EngineError};
use idcoach_core::ks::Answers;
use idcoach_core::solve::{self, Evaluation, SolveError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    /// A node id or a menu option name.
    pub choice: Choice,
    #[serde(default)]
    pub answers: Answers,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsultationScript {
    /// Globals for a fresh session; ignored when running against an
    /// existing one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub globals: Option<ProjectGlobals>,
    #[serde(default)]
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("step {step} answers unknown prompt `{prompt}`")]
    UnknownPrompt { step: usize, prompt: String },
    #[error(transparent)]
    Globals(#[from] BoardError),
}

/// A rejected step, numbered from 1, with the state reached before it.
#[derive(Debug, thiserror::Error)]
#[error("script aborted at step {step}: {error}")]
pub struct ScriptAbort {
    pub step: usize,
    pub error: EngineError,
    pub partial: Box<Blackboard>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub blackboard: Blackboard,
    pub effects: Vec<Effect>,
    /// Present when the model is complete.
    pub evaluation: Option<Evaluation>,
    /// Whether the script ended the consultation.
    pub exited: bool,
}

impl ConsultationScript {
    /// Parse and check every answer key against the known prompt ids.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let script: ConsultationScript = serde_json::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        let catalog: BTreeSet<String> = engine::prompt_catalog();
        for (i, step) in self.steps.iter().enumerate() {
            if let Some(prompt) = step.answers.keys().find(|k| !catalog.contains(*k)) {
                return Err(ScriptError::UnknownPrompt { step: i + 1, prompt: prompt.clone() });
            }
        }
        if let Some(g) = &self.globals {
            g.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

/// Run a script from a fresh session.
pub fn run_script(script: &ConsultationScript) -> Result<RunOutcome, ScriptAbort> {
    let globals = script.globals.clone().unwrap_or_default();
    let bb = Blackboard::new(globals).map_err(|e| ScriptAbort {
        step: 0,
        error: e.into(),
        partial: Box::new(Blackboard::new(ProjectGlobals::default()).expect("default globals")),
    })?;
    run_script_on(bb, script)
}

/// Run a script against an existing session. Stops early at an exit.
pub fn run_script_on(mut bb: Blackboard, script: &ConsultationScript) -> Result<RunOutcome, ScriptAbort> {
    let mut effects = Vec::new();
    let mut exited = false;
    for (i, step) in script.steps.iter().enumerate() {
        match engine::step(&mut bb, step.choice, &step.answers) {
            Ok(out) => {
                exited = out.effect == Effect::Exited;
                effects.push(out.effect);
                if exited {
                    break;
                }
            }
            Err(error) => return Err(ScriptAbort { step: i + 1, error, partial: Box::new(bb) }),
        }
    }
    let evaluation = evaluate_if_complete(&bb).map_err(|e| ScriptAbort {
        step: script.steps.len(),
        error: EngineError::Evaluation(e),
        partial: Box::new(bb.clone()),
    })?;
    Ok(RunOutcome { blackboard: bb, effects, evaluation, exited })
}

pub fn evaluate_if_complete(bb: &Blackboard) -> Result<Option<Evaluation>, SolveError> {
    if !engine::is_complete(bb) {
        return Ok(None);
    }
    solve::evaluate(bb.diagram(), &bb.globals().discounting()).map(Some)
}
