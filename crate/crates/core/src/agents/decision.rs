//! Parser for the line-oriented decision format agents are asked to emit:
//!
//! ```text
//! DECISION: like, reply
//! TEXT: the reply body, possibly
//! spanning lines
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AgentAction;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub actions: BTreeSet<AgentAction>,
    pub reply_text: Option<String>,
}

impl Decision {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_none(&self) -> bool {
        self.actions.is_empty()
    }
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let line = line.trim_start();
    let head = line.get(..label.len())?;
    head.eq_ignore_ascii_case(label)
        .then(|| &line[label.len()..])
}

/// Anything that does not follow the format yields no action.
pub fn parse_decision(raw: &str) -> Decision {
    let lines: Vec<&str> = raw.lines().collect();
    let Some((idx, list)) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| strip_label(l, "DECISION:").map(|rest| (i, rest)))
    else {
        return Decision::none();
    };
    let mut actions = BTreeSet::new();
    let mut saw_none = false;
    for item in list.split(',').map(|s| s.trim().to_ascii_lowercase()) {
        match item.as_str() {
            "like" => {
                actions.insert(AgentAction::Like);
            }
            "repost" => {
                actions.insert(AgentAction::Repost);
            }
            "reply" => {
                actions.insert(AgentAction::Reply);
            }
            "none" => saw_none = true,
            _ => return Decision::none(),
        }
    }
    if saw_none {
        return Decision::none();
    }
    let reply_text = lines[idx + 1..]
        .iter()
        .position(|l| strip_label(l, "TEXT:").is_some())
        .map(|pos| {
            let at = idx + 1 + pos;
            let first = strip_label(lines[at], "TEXT:").unwrap_or_default();
            std::iter::once(first)
                .chain(lines[at + 1..].iter().copied())
                .collect::<Vec<_>>()
                .join("\n")
                .trim()
                .to_string()
        })
        .filter(|t| !t.is_empty());
    if actions.contains(&AgentAction::Reply) && reply_text.is_none() {
        return Decision::none();
    }
    Decision {
        reply_text: if actions.contains(&AgentAction::Reply) {
            reply_text
        } else {
            None
        },
        actions,
    }
}
