//! Portfolio store: one JSON summary per line, appended as projects are
//! completed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use idcoach_core::board::Blackboard;
use idcoach_core::engine;
use idcoach_core::solve::{self, FundingChoice, SolveError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSummary {
    pub project_name: String,
    pub attributes: BTreeMap<String, String>,
    pub p_ta: f64,
    pub e_invest_pv: f64,
    pub e_contrib_pv_given_success: f64,
    pub e_npv_fund: f64,
    pub decision: FundingChoice,
    /// RFC 3339, UTC.
    pub recorded_at: String,
}

#[derive(Debug, thiserror::Error)]
pub enum PortfolioError {
    #[error("the model is not complete, so it cannot be added to the portfolio")]
    Incomplete,
    #[error(transparent)]
    Evaluation(#[from] SolveError),
    #[error("cannot access portfolio store: {0}")]
    Io(#[from] std::io::Error),
    #[error("portfolio store line {line} is corrupt: {source}")]
    Corrupt { line: usize, source: serde_json::Error },
}

impl PortfolioSummary {
    pub fn of(bb: &Blackboard, recorded_at: String) -> Result<Self, PortfolioError> {
        if !engine::is_complete(bb) {
            return Err(PortfolioError::Incomplete);
        }
        let ev = solve::evaluate_core(bb.diagram(), &bb.globals().discounting())?;
        Ok(PortfolioSummary {
            project_name: bb.globals().project_name.clone(),
            attributes: bb.globals().attributes.clone(),
            p_ta: ev.p_ta,
            e_invest_pv: ev.e_invest_pv,
            e_contrib_pv_given_success: ev.e_contrib_pv_given_success,
            e_npv_fund: ev.e_npv_fund,
            decision: ev.decision,
            recorded_at,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PortfolioStore {
    path: PathBuf,
}

impl PortfolioStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        PortfolioStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Summarize a complete session and append it to the store.
    pub fn record(&self, bb: &Blackboard) -> Result<PortfolioSummary, PortfolioError> {
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let summary = PortfolioSummary::of(bb, now)?;
        self.append(&summary)?;
        Ok(summary)
    }

    pub fn append(&self, summary: &PortfolioSummary) -> Result<(), PortfolioError> {
        let mut text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(&serde_json::to_string(summary).expect("summary serializes"));
        text.push('\n');
        crate::write_atomically(&self.path, text.as_bytes())?;
        Ok(())
    }

    /// Every summary recorded so far, oldest first. A missing store is empty.
    pub fn list(&self) -> Result<Vec<PortfolioSummary>, PortfolioError> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|source| PortfolioError::Corrupt { line: i + 1, source }))
            .collect()
    }
}
