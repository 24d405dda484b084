//! Session files: the project globals and the full event log, plus a digest
//! of the state the log replays to so corruption is caught on load.

use std::path::Path;

use idcoach_core::board::{Blackboard, Event, ProjectGlobals, ReplayError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT: &str = "idcoach-session";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDocument {
    pub format: String,
    pub version: u32,
    pub globals: ProjectGlobals,
    pub events: Vec<Event>,
    /// SHA-256 of the serialized blackboard the events replay to.
    pub digest: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("cannot access session file: {0}")]
    Io(#[from] std::io::Error),
    #[error("session file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("not a session file (format `{0}`)")]
    Format(String),
    #[error("session format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("session log does not replay: {0}")]
    Replay(#[from] ReplayError),
    #[error("session digest mismatch: file says {stored}, log replays to {actual}")]
    Digest { stored: String, actual: String },
    #[error("stored project globals differ from those in the log")]
    Globals,
}

/// Hex SHA-256 of the blackboard's canonical JSON form.
pub fn digest(bb: &Blackboard) -> String {
    let bytes = serde_json::to_vec(bb).expect("blackboard serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl SessionDocument {
    pub fn from_blackboard(bb: &Blackboard) -> Self {
        SessionDocument {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            globals: bb.globals().clone(),
            events: bb.log().to_vec(),
            digest: digest(bb),
        }
    }

    /// Rebuild the blackboard, checking format, version and digest.
    pub fn into_blackboard(self) -> Result<Blackboard, SessionError> {
        if self.format != FORMAT {
            return Err(SessionError::Format(self.format));
        }
        if self.version != FORMAT_VERSION {
            return Err(SessionError::Version { found: self.version, expected: FORMAT_VERSION });
        }
        let bb = Blackboard::replay(&self.events)?;
        let actual = digest(&bb);
        if actual != self.digest {
            return Err(SessionError::Digest { stored: self.digest, actual });
        }
        if bb.globals() != &self.globals {
            return Err(SessionError::Globals);
        }
        Ok(bb)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let doc: SessionDocument = serde_json::from_str(text)?;
        Ok(doc)
    }
}

pub fn save_session(bb: &Blackboard, path: &Path) -> Result<(), SessionError> {
    let mut text = SessionDocument::from_blackboard(bb).to_json();
    text.push('\n');
    crate::write_atomically(path, text.as_bytes())?;
    Ok(())
}

pub fn load_session(path: &Path) -> Result<Blackboard, SessionError> {
    let text = std::fs::read_to_string(path)?;
    SessionDocument::from_json(&text)?.into_blackboard()
}
