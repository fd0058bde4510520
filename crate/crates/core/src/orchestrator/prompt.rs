use crate::llm::ChatMessage;

use super::action::format_rules;
use super::episode::{EpisodeConfig, InteractionRecord};

pub const ELIDED_RESPONSE: &str = "[response elided]";
pub const NULL_RESPONSE: &str = "[null response]";

/// The newest interactions that are never elided.
pub const KEEP_RECENT: usize = 3;

pub const DEFAULT_SYSTEM_PROMPT: &str = "You solve user queries by searching an unfamiliar Python code base and \
writing code that uses it. Search for the functions and classes you need, import them, and run code to build \
the solution step by step. Read execution results carefully and fix errors as they come up.";

/// Assemble the chat for the next agent call.
///
/// Order: system prompt with the action rules, library description, query,
/// then one (agent output, environment response) pair per record, oldest
/// first. When `config.prompt_char_budget` is exceeded, responses are replaced
/// by a placeholder starting from the oldest, sparing the newest three.
pub fn build_prompt(system_text: &str, config: &EpisodeConfig, records: &[InteractionRecord]) -> Vec<ChatMessage> {
    let rules = format_rules(&config.action_types);
    let system = if system_text.trim().is_empty() {
        rules
    } else {
        format!("{}\n\n{rules}", system_text.trim_end())
    };
    let mut messages = vec![
        ChatMessage::system(system),
        ChatMessage::user(format!("Library description:\n{}", config.library_description)),
        ChatMessage::user(format!("Query:\n{}", config.query)),
    ];
    for r in records {
        messages.push(ChatMessage::assistant(r.raw_output.clone()));
        let response = if r.formatted_response.is_empty() {
            NULL_RESPONSE.to_string()
        } else {
            r.formatted_response.clone()
        };
        messages.push(ChatMessage::user(response));
    }

    if let Some(budget) = config.prompt_char_budget {
        let mut total: usize = messages.iter().map(|m| m.content.chars().count()).sum();
        let elidable = records.len().saturating_sub(KEEP_RECENT);
        for i in 0..elidable {
            if total <= budget {
                break;
            }
            let msg = &mut messages[3 + 2 * i + 1];
            let before = msg.content.chars().count();
            if before > ELIDED_RESPONSE.len() {
                msg.content = ELIDED_RESPONSE.to_string();
                total = total - before + ELIDED_RESPONSE.len();
            }
        }
    }
    messages
}
