use std::fs;
use std::path::Path;

use thiserror::Error;

pub const DEFAULT_CUES: &str = include_str!("../../data/rubric_cues.txt");

#[derive(Debug, Error)]
pub enum CueError {
    #[error("line {line}: cue outside of any [section]")]
    NoSection { line: usize },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("cannot read cue file: {0}")]
    Io(#[from] std::io::Error),
}

/// Keyword lists driving the rubric detectors. Stored lowercased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueConfig {
    pub hypothesis: Vec<String>,
    pub interpretation: Vec<String>,
    pub step_verbs: Vec<String>,
}

impl Default for CueConfig {
    fn default() -> Self {
        CueConfig::parse(DEFAULT_CUES).expect("bundled cue file parses")
    }
}

impl CueConfig {
    pub fn parse(text: &str) -> Result<Self, CueError> {
        let mut sections: [(&'static str, Option<Vec<String>>); 3] =
            [("hypothesis", None), ("interpretation", None), ("step_verbs", None)];
        let mut current: Option<usize> = None;
        for (index, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                let slot = sections.iter().position(|(n, _)| *n == name).ok_or_else(|| {
                    CueError::UnknownSection { line: index + 1, name: name.to_string() }
                })?;
                sections[slot].1.get_or_insert_with(Vec::new);
                current = Some(slot);
                continue;
            }
            let slot = current.ok_or(CueError::NoSection { line: index + 1 })?;
            sections[slot].1.get_or_insert_with(Vec::new).push(line.to_lowercase());
        }
        let [(_, h), (_, i), (_, s)] = sections;
        Ok(CueConfig {
            hypothesis: h.ok_or(CueError::MissingSection("hypothesis"))?,
            interpretation: i.ok_or(CueError::MissingSection("interpretation"))?,
            step_verbs: s.ok_or(CueError::MissingSection("step_verbs"))?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CueError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
