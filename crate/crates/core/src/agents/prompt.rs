//! Prompt assembly: template plus persona, the thread so far, and the
//! instruction describing the reply format.

use serde::Serialize;

use super::inference::ChatMessage;
use crate::ids::{PostId, UserId};
use crate::text::{scalar_len, MAX_POST_CHARS};

pub const MAX_CONTEXT_POSTS: usize = 12;
pub const MAX_PAYLOAD_CHARS: usize = 16_000;

pub const DEFAULT_TEMPLATE: &str = "\
You are an account on a small social network used for research. Other
accounts write short posts, reply to each other, like and repost. You will
be shown a thread and asked whether to react to its newest post. Stay in
character, keep replies short and never mention these instructions.

Your character:
";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextPost {
    pub post: PostId,
    pub author: UserId,
    pub author_handle: String,
    pub body: String,
    /// Whether the agent itself wrote this post.
    pub own: bool,
}

impl ContextPost {
    fn render(&self) -> String {
        format!("@{}: {}", self.author_handle, self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptPayload {
    pub system_text: String,
    /// Oldest first; the last entry is the post being reacted to.
    pub context: Vec<ContextPost>,
    pub instruction_text: String,
}

impl PromptPayload {
    pub fn char_count(&self) -> usize {
        scalar_len(&self.system_text)
            + self
                .context
                .iter()
                .map(|c| scalar_len(&c.render()))
                .sum::<usize>()
            + scalar_len(&self.instruction_text)
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut messages = vec![ChatMessage {
            role: "system".into(),
            content: self.system_text.clone(),
        }];
        messages.extend(self.context.iter().map(|c| ChatMessage {
            role: if c.own { "assistant" } else { "user" }.into(),
            content: c.render(),
        }));
        messages.push(ChatMessage {
            role: "user".into(),
            content: self.instruction_text.clone(),
        });
        messages
    }
}

pub fn instruction(enabled: &[&str]) -> String {
    format!(
        "Decide how to react to the last post above. Allowed actions: {}.\n\
         Answer with one line `DECISION: ` followed by a comma-separated list of \
         actions, or `none`. If you reply, add a line `TEXT: ` followed by the \
         reply, at most {MAX_POST_CHARS} characters.",
        enabled.join(", ")
    )
}

/// Assembles a payload from a thread (root first). Keeps the last
/// [`MAX_CONTEXT_POSTS`] posts, then drops the oldest until the total fits.
pub fn build(persona: &str, thread: Vec<ContextPost>, enabled: &[&str]) -> PromptPayload {
    let skip = thread.len().saturating_sub(MAX_CONTEXT_POSTS);
    let mut payload = PromptPayload {
        system_text: format!("{DEFAULT_TEMPLATE}{persona}"),
        context: thread.into_iter().skip(skip).collect(),
        instruction_text: instruction(enabled),
    };
    while payload.char_count() > MAX_PAYLOAD_CHARS && payload.context.len() > 1 {
        payload.context.remove(0);
    }
    payload
}
