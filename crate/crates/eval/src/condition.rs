//! Ablation conditions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const DEFAULT_RAG_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FollowUpMode {
    Interactive,
    Scripted,
    Off,
}

/// Which context sources a run adds to the base prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationCondition {
    pub rag: bool,
    pub receipt: bool,
    pub follow_up: bool,
    pub rag_k: usize,
    pub follow_up_mode: FollowUpMode,
}

impl AblationCondition {
    /// A condition with default `rag_k`. Follow-ups default to scripted mode;
    /// without follow-ups the mode is always off.
    pub fn new(rag: bool, receipt: bool, follow_up: bool) -> Self {
        AblationCondition {
            rag,
            receipt,
            follow_up,
            rag_k: DEFAULT_RAG_K,
            follow_up_mode: if follow_up {
                FollowUpMode::Scripted
            } else {
                FollowUpMode::Off
            },
        }
    }

    pub fn vanilla() -> Self {
        Self::new(false, false, false)
    }

    pub fn with_rag_k(mut self, k: usize) -> Self {
        self.rag_k = k;
        self
    }

    /// Sets the follow-up mode; ignored when follow-ups are disabled.
    pub fn with_follow_up_mode(mut self, mode: FollowUpMode) -> Self {
        if self.follow_up {
            self.follow_up_mode = if mode == FollowUpMode::Off {
                FollowUpMode::Scripted
            } else {
                mode
            };
        }
        self
    }

    /// The eight conditions of the full ablation, in table order.
    pub fn full_ablation() -> Vec<AblationCondition> {
        [
            (false, false, false),
            (false, true, false),
            (true, false, false),
            (false, false, true),
            (true, false, true),
            (false, true, true),
            (true, true, false),
            (true, true, true),
        ]
        .into_iter()
        .map(|(r, c, f)| Self::new(r, c, f))
        .collect()
    }

    /// Table label, e.g. `RAG + receipt + follow-up`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.rag {
            parts.push("RAG");
        }
        if self.receipt {
            parts.push("receipt");
        }
        if self.follow_up {
            parts.push("follow-up");
        }
        if parts.is_empty() {
            "vanilla".to_string()
        } else {
            parts.join(" + ")
        }
    }

    /// Parses a comma-separated list. `all` expands to the full ablation.
    pub fn parse_list(s: &str) -> Result<Vec<AblationCondition>, String> {
        let mut out: Vec<AblationCondition> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let conds = if part.eq_ignore_ascii_case("all") {
                Self::full_ablation()
            } else {
                vec![part.parse()?]
            };
            for c in conds {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        if out.is_empty() {
            return Err("no conditions given".into());
        }
        Ok(out)
    }
}

impl fmt::Display for AblationCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for AblationCondition {
    type Err = String;

    /// Accepts `vanilla` or `+`-joined parts from `rag`, `receipt`, `follow-up`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "vanilla" {
            return Ok(Self::vanilla());
        }
        let (mut rag, mut receipt, mut follow_up) = (false, false, false);
        for part in s.split('+').map(str::trim) {
            let flag = match part {
                "rag" => &mut rag,
                "receipt" | "ingredients" => &mut receipt,
                "follow-up" | "followup" | "follow_up" => &mut follow_up,
                other => return Err(format!("unknown condition part `{other}`")),
            };
            if *flag {
                return Err(format!("`{part}` repeated in `{s}`"));
            }
            *flag = true;
        }
        Ok(Self::new(rag, receipt, follow_up))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_in_table_order() {
        let labels: Vec<String> = AblationCondition::full_ablation().iter().map(|c| c.label()).collect();
        assert_eq!(
            labels,
            vec![
                "vanilla",
                "receipt",
                "RAG",
                "follow-up",
                "RAG + follow-up",
                "receipt + follow-up",
                "RAG + receipt",
                "RAG + receipt + follow-up"
            ]
        );
    }

    #[test]
    fn labels_parse_back() {
        for c in AblationCondition::full_ablation() {
            assert_eq!(c.label().parse::<AblationCondition>().unwrap(), c);
        }
    }

    #[test]
    fn mode_off_without_follow_up() {
        let c = AblationCondition::new(true, false, false).with_follow_up_mode(FollowUpMode::Interactive);
        assert_eq!(c.follow_up_mode, FollowUpMode::Off);
        let c = AblationCondition::new(false, false, true).with_follow_up_mode(FollowUpMode::Interactive);
        assert_eq!(c.follow_up_mode, FollowUpMode::Interactive);
    }

    #[test]
    fn list_parsing() {
        assert_eq!(AblationCondition::parse_list("all").unwrap().len(), 8);
        assert_eq!(AblationCondition::parse_list("vanilla, rag, vanilla").unwrap().len(), 2);
        assert!(AblationCondition::parse_list("rag+rag").is_err());
        assert!(AblationCondition::parse_list("magic").is_err());
        assert!(AblationCondition::parse_list("").is_err());
    }
}
