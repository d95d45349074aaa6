//! Rubric scoring of inquiry text.
//!
//! Four ordered categories: Null < Naïve < Emerging < Informed. The engine
//! derives a category from four detectors over the inquiry's title,
//! description, notes and slot labels; a coder can override the result.
//!
//! | features present                              | category  |
//! |-----------------------------------------------|-----------|
//! | none                                          | Null      |
//! | hypothesis + method steps + interpretation    | Informed  |
//! | hypothesis or interpretation                  | Emerging  |
//! | anything else (labels and/or steps only)      | Naïve     |

mod cues;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use cues::{CueConfig, CueError, DEFAULT_CUES};

use crate::error::DomainError;
use crate::model::{Inquiry, Role, ScoreOverride, UserAccount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCategory {
    Null,
    Naive,
    Emerging,
    Informed,
}

impl ScoreCategory {
    pub const ALL: [ScoreCategory; 4] =
        [ScoreCategory::Null, ScoreCategory::Naive, ScoreCategory::Emerging, ScoreCategory::Informed];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreCategory::Null => "null",
            ScoreCategory::Naive => "naive",
            ScoreCategory::Emerging => "emerging",
            ScoreCategory::Informed => "informed",
        }
    }
}

impl fmt::Display for ScoreCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreCategory::Null => "Null",
            ScoreCategory::Naive => "Naïve",
            ScoreCategory::Emerging => "Emerging",
            ScoreCategory::Informed => "Informed",
        })
    }
}

impl std::str::FromStr for ScoreCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "null" => Ok(ScoreCategory::Null),
            "naive" | "naïve" => Ok(ScoreCategory::Naive),
            "emerging" => Ok(ScoreCategory::Emerging),
            "informed" => Ok(ScoreCategory::Informed),
            _ => Err(format!("unknown score category `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feature {
    LabeledMeasurements,
    HypothesisMarker,
    MethodSteps,
    Interpretation,
}

impl Feature {
    /// Rule identifier recorded as evidence.
    pub fn rule_id(self) -> &'static str {
        match self {
            Feature::LabeledMeasurements => "labeled-measurements",
            Feature::HypothesisMarker => "hypothesis-marker",
            Feature::MethodSteps => "method-steps",
            Feature::Interpretation => "interpretation",
        }
    }
}

pub type FeatureSet = BTreeSet<Feature>;

pub const OVERRIDE_RULE: &str = "manual-override";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InquiryScore {
    pub category: ScoreCategory,
    pub evidence: Vec<String>,
    pub overridden: bool,
}

/// True when `cue` occurs in `text` starting at a word boundary. Both sides
/// are expected lowercased.
fn has_cue(text: &str, cue: &str) -> bool {
    text.match_indices(cue).any(|(at, _)| {
        text[..at].chars().next_back().is_none_or(|c| !c.is_alphanumeric())
    })
}

fn is_step_line(line: &str, cues: &CueConfig) -> bool {
    let line = line.trim_start();
    if let Some(rest) = line.strip_prefix(['-', '*', '•']) {
        return !rest.trim().is_empty();
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && matches!(line.as_bytes().get(digits), Some(b'.' | b')' | b':')) {
        return !line[digits + 1..].trim().is_empty();
    }
    let lower = line.to_lowercase();
    if let Some(rest) = lower.strip_prefix("step") {
        let rest = rest.trim_start();
        if rest.starts_with(|c: char| c.is_ascii_digit()) {
            return true;
        }
    }
    let first = lower.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("");
    !first.is_empty() && cues.step_verbs.iter().any(|v| v == first)
}

/// Runs the four detectors over an inquiry.
pub fn extract_features(inquiry: &Inquiry, cues: &CueConfig) -> FeatureSet {
    let mut features = FeatureSet::new();

    let labels: BTreeSet<String> = inquiry
        .slots
        .iter()
        .map(|s| s.label.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect();
    if labels.len() >= 2 {
        features.insert(Feature::LabeledMeasurements);
    }

    let body = format!("{}\n{}", inquiry.description, inquiry.notes).to_lowercase();
    let mut combined = format!("{}\n{}", inquiry.title.to_lowercase(), body);
    for slot in &inquiry.slots {
        combined.push('\n');
        combined.push_str(&slot.label.to_lowercase());
    }

    if cues.hypothesis.iter().any(|c| has_cue(&combined, c)) {
        features.insert(Feature::HypothesisMarker);
    }
    let steps = inquiry
        .description
        .lines()
        .chain(inquiry.notes.lines())
        .filter(|l| is_step_line(l, cues))
        .count();
    if steps >= 2 {
        features.insert(Feature::MethodSteps);
    }
    if cues.interpretation.iter().any(|c| has_cue(&body, c)) {
        features.insert(Feature::Interpretation);
    }
    features
}

pub fn categorize(features: &FeatureSet) -> ScoreCategory {
    let has = |f| features.contains(&f);
    let hypothesis = has(Feature::HypothesisMarker);
    let interpretation = has(Feature::Interpretation);
    if features.is_empty() {
        ScoreCategory::Null
    } else if hypothesis && interpretation && has(Feature::MethodSteps) {
        ScoreCategory::Informed
    } else if hypothesis || interpretation {
        ScoreCategory::Emerging
    } else {
        ScoreCategory::Naive
    }
}

/// Deterministic first-pass coder with the bundled or a custom cue list.
#[derive(Debug, Clone, Default)]
pub struct ScoringEngine {
    cues: CueConfig,
}

impl ScoringEngine {
    pub fn new(cues: CueConfig) -> Self {
        ScoringEngine { cues }
    }

    pub fn cues(&self) -> &CueConfig {
        &self.cues
    }

    pub fn features(&self, inquiry: &Inquiry) -> FeatureSet {
        extract_features(inquiry, &self.cues)
    }

    /// Engine verdict, ignoring any stored override.
    pub fn engine_score(&self, inquiry: &Inquiry) -> InquiryScore {
        let features = self.features(inquiry);
        InquiryScore {
            category: categorize(&features),
            evidence: features.iter().map(|f| f.rule_id().to_string()).collect(),
            overridden: false,
        }
    }

    /// Final score: a stored override wins over the engine.
    pub fn score(&self, inquiry: &Inquiry) -> InquiryScore {
        let mut score = self.engine_score(inquiry);
        if let Some(ov) = &inquiry.manual_score_override {
            score.category = ov.category;
            score.evidence.push(OVERRIDE_RULE.to_string());
            score.overridden = true;
        }
        score
    }
}

/// Validates a manual re-coding. Only teachers may override; a reason is
/// mandatory for the audit trail.
pub fn override_score(
    inquiry: &Inquiry,
    coder: &UserAccount,
    category: ScoreCategory,
    reason: &str,
    at: chrono::DateTime<chrono::Utc>,
) -> Result<Inquiry, DomainError> {
    if coder.role != Role::Teacher {
        return Err(DomainError::Forbidden("only teachers can re-code an inquiry".into()));
    }
    if reason.trim().is_empty() {
        return Err(DomainError::validation("reason"));
    }
    let mut next = inquiry.clone();
    next.manual_score_override =
        Some(ScoreOverride { category, reason: reason.trim().to_string(), by: coder.id, at });
    Ok(next)
}
