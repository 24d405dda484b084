//! Everything around the consultation engine that makes it usable: session
//! files, scripted consultations, the portfolio store and the HTTP service
//! the coach front end talks to.

pub mod portfolio;
pub mod script;
pub mod service;
pub mod session;

pub use portfolio::{PortfolioError, PortfolioStore, PortfolioSummary};
pub use script::{run_script, run_script_on, ConsultationScript, RunOutcome, ScriptAbort, ScriptError, ScriptStep};
pub use service::{router, AppState};
pub use session::{load_session, save_session, SessionDocument, SessionError, FORMAT, FORMAT_VERSION};

/// Write `contents` to `path` via a sibling temporary file and a rename, so
/// readers never see a half-written file.
pub(crate) fn write_atomically(path: &std::path::Path, contents: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", uuid::Uuid::new_v4().simple()));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(contents)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
