//! The single-line follow-up question format:
//! `question;type;[option,option,...]`.

use thiserror::Error;

use crate::domain::{AnswerType, FollowUpTurn};

/// Literal the provider emits when it needs no further information.
pub const NO_QUESTION: &str = "NO_QUESTION";

/// Upper bound on select options.
pub const MAX_OPTIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("expected 3 `;`-separated fields, found {0}")]
    FieldCount(usize),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("unknown answer type `{0}`")]
    UnknownType(String),
    #[error("options must be wrapped in a single pair of brackets: `{0}`")]
    UnbalancedBrackets(String),
    #[error("select question has no options")]
    EmptySelect,
    #[error("text question must have `[]` options, got {0} option(s)")]
    TextWithOptions(usize),
    #[error("empty option in list")]
    EmptyOption,
    #[error("{0} options exceeds the maximum of {MAX_OPTIONS}")]
    TooManyOptions(usize),
}

/// Parses one follow-up line into an unanswered turn (index 0; callers renumber).
pub fn parse_follow_up_line(line: &str) -> Result<FollowUpTurn, WireError> {
    let line = line.trim().trim_matches('`').trim();
    let fields: Vec<&str> = line.split(';').collect();
    if fields.len() != 3 {
        return Err(WireError::FieldCount(fields.len()));
    }
    let question = fields[0].trim();
    if question.is_empty() {
        return Err(WireError::EmptyQuestion);
    }
    let answer_type = match fields[1].trim().to_ascii_lowercase().as_str() {
        "text" => AnswerType::Text,
        "select" => AnswerType::Select,
        _ => return Err(WireError::UnknownType(fields[1].trim().to_string())),
    };
    let raw = fields[2].trim();
    let inner = raw
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .filter(|s| !s.contains('[') && !s.contains(']'))
        .ok_or_else(|| WireError::UnbalancedBrackets(raw.to_string()))?;
    let options: Vec<String> = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|o| {
                let o = o.trim();
                if o.is_empty() {
                    Err(WireError::EmptyOption)
                } else {
                    Ok(o.to_string())
                }
            })
            .collect::<Result<_, _>>()?
    };
    match answer_type {
        AnswerType::Text if !options.is_empty() => {
            return Err(WireError::TextWithOptions(options.len()))
        }
        AnswerType::Select if options.is_empty() => return Err(WireError::EmptySelect),
        _ => {}
    }
    if options.len() > MAX_OPTIONS {
        return Err(WireError::TooManyOptions(options.len()));
    }
    Ok(FollowUpTurn {
        turn_index: 0,
        question: question.to_string(),
        answer_type,
        options,
        answer: None,
        skipped: false,
    })
}

/// Inverse of [`parse_follow_up_line`].
pub fn format_follow_up_line(turn: &FollowUpTurn) -> String {
    format!(
        "{};{};[{}]",
        turn.question,
        turn.answer_type.as_str(),
        turn.options.join(",")
    )
}
