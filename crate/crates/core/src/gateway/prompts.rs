//! Versioned prompt templates with named `{placeholder}` slots.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::HistoryEntry;
use crate::domain::EXAMPLE_FOOD_LOG_JSON;

pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{template}` needs a value for `{{{placeholder}}}`")]
    Missing {
        template: String,
        placeholder: String,
    },
    #[error("cannot read prompt template `{name}`: {source}")]
    Io {
        name: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: &'static str, text: impl Into<String>) -> Self {
        PromptTemplate {
            name,
            text: text.into(),
        }
    }

    /// Placeholder names appearing in the template.
    pub fn placeholders(&self) -> BTreeSet<&str> {
        scan(&self.text)
            .into_iter()
            .filter_map(|piece| match piece {
                Piece::Slot(name) => Some(name),
                Piece::Literal(_) => None,
            })
            .collect()
    }

    /// Fills every placeholder. Values are inserted verbatim and never
    /// re-scanned. Runs of blank lines left by empty values collapse to one.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        for piece in scan(&self.text) {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(name) => {
                    let value = vars
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::Missing {
                            template: self.name.to_string(),
                            placeholder: name.to_string(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(collapse_blank_lines(&out))
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

fn scan(text: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let bytes = text.as_bytes();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                if literal_start < i {
                    pieces.push(Piece::Literal(&text[literal_start..i]));
                }
                pieces.push(Piece::Slot(&text[i + 1..j]));
                i = j + 1;
                literal_start = i;
                continue;
            }
        }
        i += 1;
    }
    if literal_start < text.len() {
        pieces.push(Piece::Literal(&text[literal_start..]));
    }
    pieces
}

fn collapse_blank_lines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut blank_run = 0;
    for line in text.trim_end().split('\n') {
        if line.trim().is_empty() {
            blank_run += 1;
            if blank_run > 1 {
                continue;
            }
        } else {
            blank_run = 0;
        }
        out.push_str(line);
        out.push('\n');
    }
    out.truncate(out.trim_end().len());
    out
}

/// Optional context blocks appended to generation prompts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextSections {
    pub personalized_prompt: Option<String>,
    pub rag_context: Option<String>,
    pub receipt_context: Option<String>,
    pub chat_history: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PromptCatalog {
    pub food_log: PromptTemplate,
    pub follow_up: PromptTemplate,
    pub classify_question: PromptTemplate,
    pub parse_receipt: PromptTemplate,
    pub item_nutrition: PromptTemplate,
    pub repair: PromptTemplate,
    pub example_output: String,
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptCatalog {
    /// Templates compiled into the binary.
    pub fn builtin() -> Self {
        PromptCatalog {
            food_log: PromptTemplate::new("food_log", include_str!("../../prompts/v1/food_log.txt")),
            follow_up: PromptTemplate::new(
                "follow_up",
                include_str!("../../prompts/v1/follow_up.txt"),
            ),
            classify_question: PromptTemplate::new(
                "classify_question",
                include_str!("../../prompts/v1/classify_question.txt"),
            ),
            parse_receipt: PromptTemplate::new(
                "parse_receipt",
                include_str!("../../prompts/v1/parse_receipt.txt"),
            ),
            item_nutrition: PromptTemplate::new(
                "item_nutrition",
                include_str!("../../prompts/v1/item_nutrition.txt"),
            ),
            repair: PromptTemplate::new("repair", include_str!("../../prompts/v1/repair.txt")),
            example_output: EXAMPLE_FOOD_LOG_JSON.trim().to_string(),
        }
    }

    /// Loads templates from a directory laid out like `prompts/v1`, falling
    /// back to the built-in text for any file that is absent.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut catalog = Self::builtin();
        let slots: [(&'static str, &mut PromptTemplate); 6] = [
            ("food_log", &mut catalog.food_log),
            ("follow_up", &mut catalog.follow_up),
            ("classify_question", &mut catalog.classify_question),
            ("parse_receipt", &mut catalog.parse_receipt),
            ("item_nutrition", &mut catalog.item_nutrition),
            ("repair", &mut catalog.repair),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    name: name.to_string(),
                    source,
                })?;
                *slot = PromptTemplate::new(name, text);
            }
        }
        let example = dir.join("example_food_log.json");
        if example.exists() {
            catalog.example_output = fs::read_to_string(&example)
                .map_err(|source| TemplateError::Io {
                    name: "example_food_log".into(),
                    source,
                })?
                .trim()
                .to_string();
        }
        Ok(catalog)
    }

    pub fn food_log_prompt(&self, sections: &ContextSections) -> Result<String, TemplateError> {
        self.food_log.render(&[
            ("example_output", &self.example_output),
            (
                "personalized_prompt",
                sections.personalized_prompt.as_deref().unwrap_or(""),
            ),
            ("rag_context", sections.rag_context.as_deref().unwrap_or("")),
            (
                "receipt_context",
                sections.receipt_context.as_deref().unwrap_or(""),
            ),
            ("chat_history", sections.chat_history.as_deref().unwrap_or("")),
        ])
    }

    pub fn follow_up_prompt(
        &self,
        personalized_prompt: Option<&str>,
        receipt_context: Option<&str>,
    ) -> Result<String, TemplateError> {
        self.follow_up.render(&[
            ("personalized_prompt", personalized_prompt.unwrap_or("")),
            ("receipt_context", receipt_context.unwrap_or("")),
        ])
    }

    pub fn classify_prompt(&self, question: &str) -> Result<String, TemplateError> {
        self.classify_question.render(&[("question", question)])
    }

    pub fn receipt_prompt(&self) -> Result<String, TemplateError> {
        self.parse_receipt.render(&[])
    }

    pub fn item_nutrition_prompt(
        &self,
        name: &str,
        quantity: &str,
        source: &str,
    ) -> Result<String, TemplateError> {
        self.item_nutrition.render(&[
            ("item_name", name),
            ("item_quantity", quantity),
            ("item_source", source),
        ])
    }

    pub fn repair_prompt(&self, errors: &[String]) -> Result<String, TemplateError> {
        let list = errors
            .iter()
            .map(|e| format!("- {e}"))
            .collect::<Vec<_>>()
            .join("\n");
        self.repair.render(&[("validation_errors", &list)])
    }
}

/// Serializes a conversation as a role-tagged transcript block.
pub fn format_chat_history(history: &[HistoryEntry]) -> String {
    let mut out = String::from("Chat history:");
    for entry in history {
        out.push('\n');
        out.push_str(entry.role.as_str());
        out.push_str(": ");
        out.push_str(&entry.text);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_placeholders() {
        let c = PromptCatalog::builtin();
        let names: Vec<_> = c.food_log.placeholders().into_iter().collect();
        assert_eq!(
            names,
            [
                "chat_history",
                "example_output",
                "personalized_prompt",
                "rag_context",
                "receipt_context"
            ]
        );
        assert!(c.classify_question.placeholders().contains("question"));
    }

    #[test]
    fn food_log_prompt_embeds_example_and_sections() {
        let c = PromptCatalog::builtin();
        let prompt = c
            .food_log_prompt(&ContextSections {
                rag_context: Some("RAG BLOCK".into()),
                ..Default::default()
            })
            .unwrap();
        assert!(prompt.starts_with("Analyze the nutritional content"));
        assert!(prompt.contains("\"meal_name\": \"Peanut butter and celery\""));
        assert!(prompt.contains("Do not output anything except the JSON.\n\nRAG BLOCK"));
        assert!(!prompt.contains("\n\n\n"));
        assert!(!prompt.contains("{example_output}"));
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::new("t", "a {x} b");
        assert_eq!(t.render(&[("x", "{x}")]).unwrap(), "a {x} b");
    }

    #[test]
    fn missing_value_is_an_error() {
        let t = PromptTemplate::new("t", "hello {name}");
        assert!(matches!(t.render(&[]), Err(TemplateError::Missing { .. })));
    }

    #[test]
    fn transcript_is_role_tagged() {
        let h = vec![HistoryEntry::assistant("How many?"), HistoryEntry::user("3")];
        assert_eq!(
            format_chat_history(&h),
            "Chat history:\nassistant: How many?\nuser: 3"
        );
    }
}
