//! Records exchanged with participants, and their validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ITEM_COUNT: usize = 8;
pub const SCORE_MIN: i64 = 1;
pub const SCORE_MAX: i64 = 5;

const BUILTIN_QUESTIONNAIRE: &str = include_str!("../data/questionnaire.txt");
const QUESTIONNAIRE_HEADER: &str = "# navex questionnaire v1";

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("no battery manifests loaded")]
    NoBatteries,
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {session} has no trial {index}")]
    UnknownTrial { session: String, index: usize },
    #[error("trial {index} of session {session} was already answered differently")]
    DuplicateTrial { session: String, index: usize },
    #[error("invalid satisfaction scores: {0}")]
    InvalidScores(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("{file}, line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl StudyError {
    /// Short machine-readable tag used in HTTP error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            StudyError::NoBatteries => "NoBatteries",
            StudyError::UnknownSession(_) => "UnknownSession",
            StudyError::UnknownTrial { .. } => "UnknownTrial",
            StudyError::DuplicateTrial { .. } => "DuplicateTrial",
            StudyError::InvalidScores(_) => "InvalidScores",
            StudyError::InvalidRecord(_) => "InvalidRecord",
            StudyError::Corrupt { .. } => "Corrupt",
            StudyError::Io(_) => "Io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatisfactionResponse {
    /// One Likert score per questionnaire item, in item order.
    pub item_scores: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

impl SatisfactionResponse {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.item_scores.len() != ITEM_COUNT {
            return Err(StudyError::InvalidScores(format!(
                "expected {ITEM_COUNT} scores, got {}",
                self.item_scores.len()
            )));
        }
        if let Some((i, s)) = self.item_scores.iter().enumerate().find(|(_, s)| !(SCORE_MIN..=SCORE_MAX).contains(*s)) {
            return Err(StudyError::InvalidScores(format!(
                "item {} scored {s}, expected {SCORE_MIN}..={SCORE_MAX}",
                i + 1
            )));
        }
        Ok(())
    }
}

/// One answered trial. Only the chosen variant is rated; the other shown
/// variants stay unrated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub session_id: String,
    pub participant_id: String,
    pub trial_index: usize,
    pub battery_id: String,
    pub shown_variant_ids: Vec<String>,
    pub chosen_variant_id: String,
    pub satisfaction: SatisfactionResponse,
    /// UTC milliseconds when the trial was served.
    pub issued_ms: u64,
    /// UTC milliseconds when the participant submitted.
    pub submitted_ms: u64,
}

impl StudyRecord {
    /// Checks the record's own invariants.
    pub fn validate(&self) -> Result<(), StudyError> {
        self.satisfaction.validate()?;
        if !self.shown_variant_ids.contains(&self.chosen_variant_id) {
            return Err(StudyError::InvalidRecord(format!(
                "chosen variant {} was not shown",
                self.chosen_variant_id
            )));
        }
        if self.submitted_ms < self.issued_ms {
            return Err(StudyError::InvalidRecord("submitted before issued".into()));
        }
        Ok(())
    }
}

/// Questionnaire item wording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Questionnaire {
    pub items: Vec<String>,
}

impl Questionnaire {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_QUESTIONNAIRE).expect("built-in questionnaire is valid")
    }

    pub fn parse(text: &str) -> Result<Self, StudyError> {
        let corrupt = |line, message: String| StudyError::Corrupt { file: "questionnaire".into(), line, message };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == QUESTIONNAIRE_HEADER => {}
            _ => return Err(corrupt(1, format!("expected header {QUESTIONNAIRE_HEADER:?}"))),
        }
        let items: Vec<String> = lines
            .map(|(_, l)| l.trim())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        if items.len() != ITEM_COUNT {
            return Err(corrupt(0, format!("expected {ITEM_COUNT} items, found {}", items.len())));
        }
        Ok(Self { items })
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl Default for Questionnaire {
    fn default() -> Self {
        Self::builtin()
    }
}
