//! Where follow-up answers come from during evaluation.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::sync::Mutex;

use nutrilog_core::domain::{AnswerType, FollowUpTurn};
use thiserror::Error;

use crate::condition::FollowUpMode;
use crate::dataset::AnswerRecord;

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("no scripted answer for dish `{0}`")]
    Missing(String),
    #[error("terminal input: {0}")]
    Io(#[from] io::Error),
}

pub trait AnswerSource: Send + Sync {
    fn mode(&self) -> FollowUpMode;

    /// A previously answered question to use instead of generating one.
    fn recorded_question(&self, _dish_id: &str) -> Option<String> {
        None
    }

    /// The answer to `turn`, or `None` to leave the question unanswered.
    fn answer(&self, dish_id: &str, turn: &FollowUpTurn) -> Result<Option<String>, AnswerError>;

    /// Dish ids from `required` this source cannot answer.
    fn missing(&self, _required: &[&str]) -> Vec<String> {
        Vec::new()
    }
}

/// Answers nothing; follow-up conditions then reduce to their base prompt.
#[derive(Debug, Default)]
pub struct NoAnswers;

impl AnswerSource for NoAnswers {
    fn mode(&self) -> FollowUpMode {
        FollowUpMode::Off
    }

    fn answer(&self, _dish_id: &str, _turn: &FollowUpTurn) -> Result<Option<String>, AnswerError> {
        Ok(None)
    }
}

/// Answers read from a file, keyed by dish id.
#[derive(Debug, Default)]
pub struct ScriptedAnswers {
    answers: HashMap<String, AnswerRecord>,
}

impl ScriptedAnswers {
    pub fn new(answers: HashMap<String, AnswerRecord>) -> Self {
        ScriptedAnswers { answers }
    }

    pub fn from_records(records: impl IntoIterator<Item = AnswerRecord>) -> Self {
        Self::new(records.into_iter().map(|r| (r.dish_id.clone(), r)).collect())
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn dish_ids(&self) -> impl Iterator<Item = &str> {
        self.answers.keys().map(String::as_str)
    }
}

impl AnswerSource for ScriptedAnswers {
    fn mode(&self) -> FollowUpMode {
        FollowUpMode::Scripted
    }

    fn recorded_question(&self, dish_id: &str) -> Option<String> {
        self.answers.get(dish_id).and_then(|a| a.question.clone())
    }

    fn answer(&self, dish_id: &str, _turn: &FollowUpTurn) -> Result<Option<String>, AnswerError> {
        self.answers
            .get(dish_id)
            .map(|a| Some(a.answer.clone()))
            .ok_or_else(|| AnswerError::Missing(dish_id.to_string()))
    }

    fn missing(&self, required: &[&str]) -> Vec<String> {
        required
            .iter()
            .filter(|id| !self.answers.contains_key(**id))
            .map(|id| id.to_string())
            .collect()
    }
}

/// Shows each question on a terminal and reads the reply. An empty line
/// leaves the question unanswered; for select questions a number picks
/// the matching option.
pub struct TerminalAnswers<R, W> {
    io: Mutex<(R, W)>,
}

/// Terminal answers over standard input and standard error.
pub type StdioAnswers = TerminalAnswers<io::BufReader<io::Stdin>, io::Stderr>;

impl StdioAnswers {
    pub fn stdio() -> Self {
        Self::new(io::BufReader::new(io::stdin()), io::stderr())
    }
}

impl<R: BufRead, W: Write> TerminalAnswers<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        TerminalAnswers {
            io: Mutex::new((reader, writer)),
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> AnswerSource for TerminalAnswers<R, W> {
    fn mode(&self) -> FollowUpMode {
        FollowUpMode::Interactive
    }

    fn answer(&self, dish_id: &str, turn: &FollowUpTurn) -> Result<Option<String>, AnswerError> {
        let mut guard = self.io.lock().unwrap_or_else(|e| e.into_inner());
        let (reader, writer) = &mut *guard;
        writeln!(writer, "[{dish_id}] {}", turn.question)?;
        if turn.answer_type == AnswerType::Select {
            for (i, opt) in turn.options.iter().enumerate() {
                writeln!(writer, "  {}. {opt}", i + 1)?;
            }
        }
        write!(writer, "> ")?;
        writer.flush()?;
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim();
        if line.is_empty() {
            return Ok(None);
        }
        if turn.answer_type == AnswerType::Select {
            if let Ok(n) = line.parse::<usize>() {
                if (1..=turn.options.len()).contains(&n) {
                    return Ok(Some(turn.options[n - 1].clone()));
                }
            }
        }
        Ok(Some(line.to_string()))
    }
}
