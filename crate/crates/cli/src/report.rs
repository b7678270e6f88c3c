//! Report plumbing: deterministic JSON/CSV writing and stage-tagged errors.

use std::path::Path;

use serde::Serialize;

/// Library error tagged with the pipeline stage it came from.
#[derive(Debug)]
pub struct CmdError {
    pub stage: &'static str,
    pub source: repcap_core::Error,
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.stage, self.source)
    }
}

pub type CmdResult<T> = Result<T, CmdError>;

pub trait Stage<T> {
    fn stage(self, name: &'static str) -> CmdResult<T>;
}

impl<T> Stage<T> for repcap_core::Result<T> {
    fn stage(self, name: &'static str) -> CmdResult<T> {
        self.map_err(|source| CmdError {
            stage: name,
            source,
        })
    }
}

pub fn usage(stage: &'static str, msg: String) -> CmdError {
    CmdError {
        stage,
        source: repcap_core::Error::InvalidConfig(msg),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: &'static str) -> CmdResult<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| usage(stage, format!("serialize: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| usage(stage, format!("write {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str, stage: &'static str) -> CmdResult<()> {
    std::fs::write(path, text)
        .map_err(|e| usage(stage, format!("write {}: {e}", path.display())))?;
    Ok(())
}
