use serde::{Deserialize, Serialize};

use super::client::ExecutionResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputLimits {
    pub max_stdout_chars: usize,
    pub max_var_chars: usize,
}

impl Default for OutputLimits {
    fn default() -> Self {
        OutputLimits {
            max_stdout_chars: 2000,
            max_var_chars: 500,
        }
    }
}

pub fn truncation_marker(dropped: usize) -> String {
    format!("\n...[{dropped} chars truncated]...\n")
}

/// Keep the first ⌈L/2⌉ and last ⌊L/2⌋ characters of `text`, where L = `max_chars`.
pub fn truncate_middle(text: &str, max_chars: usize) -> String {
    let total = text.chars().count();
    if total <= max_chars {
        return text.to_string();
    }
    let head = max_chars.div_ceil(2);
    let tail = max_chars / 2;
    let mut out: String = text.chars().take(head).collect();
    out.push_str(&truncation_marker(total - max_chars));
    out.extend(text.chars().skip(total - tail));
    out
}

fn truncate_value(repr: &str, max_chars: usize, already_truncated: bool) -> String {
    let len = repr.chars().count();
    if len > max_chars {
        let kept: String = repr.chars().take(max_chars).collect();
        format!("{kept}... (truncated)")
    } else if already_truncated {
        format!("{repr}... (truncated)")
    } else {
        repr.to_string()
    }
}

/// Render an execution result as the text shown to the agent.
pub fn format_execution_response(resp: &ExecutionResponse, limits: &OutputLimits) -> String {
    let mut sections: Vec<String> = Vec::new();
    if !resp.stdout.is_empty() {
        sections.push(format!(
            "STDOUT:\n{}",
            truncate_middle(&resp.stdout, limits.max_stdout_chars)
        ));
    }
    if !resp.updated_vars.is_empty() {
        let lines: Vec<String> = resp
            .updated_vars
            .iter()
            .map(|v| {
                format!(
                    "{} = {}",
                    v.name,
                    truncate_value(&v.value_repr, limits.max_var_chars, v.truncated)
                )
            })
            .collect();
        sections.push(format!("UPDATED VARIABLES:\n{}", lines.join("\n")));
    }
    if !resp.deleted_vars.is_empty() {
        sections.push(format!("DELETED:\n{}", resp.deleted_vars.join("\n")));
    }
    if let Some(err) = &resp.error {
        let location = match err.line {
            Some(line) => format!("{} (line {line})", err.kind.as_str()),
            None => err.kind.as_str().to_string(),
        };
        sections.push(format!("ERROR:\n{location}: {}", err.message));
    }
    if sections.is_empty() {
        return "Code ran successfully with no output and no variable changes.".to_string();
    }
    let mut out = String::new();
    for s in sections {
        if !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
        out.push_str(&s);
    }
    out
}
