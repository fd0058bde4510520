use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Search,
    Code,
    Done,
    CodeSummary,
}

impl ActionType {
    pub const ALL: [ActionType; 4] = [ActionType::Search, ActionType::Code, ActionType::Done, ActionType::CodeSummary];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Search => "search",
            ActionType::Code => "code",
            ActionType::Done => "done",
            ActionType::CodeSummary => "code_summary",
        }
    }

    pub fn needs_content(self) -> bool {
        self != ActionType::Done
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown action type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAction {
    pub thought: String,
    #[serde(rename = "type")]
    pub action_type: ActionType,
    pub content: String,
}

/// A broken action-format rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// R1
    MissingThought,
    /// R2
    MissingType,
    /// R3
    UnknownType { got: String, allowed: Vec<ActionType> },
    /// R4
    MissingContent(ActionType),
    /// R5
    MultipleActions,
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::MissingThought => "R1",
            Violation::MissingType => "R2",
            Violation::UnknownType { .. } => "R3",
            Violation::MissingContent(_) => "R4",
            Violation::MultipleActions => "R5",
        }
    }

    pub fn description(&self) -> String {
        match self {
            Violation::MissingThought => {
                "Every output must contain a non-empty <thought>...</thought> block.".to_string()
            }
            Violation::MissingType => {
                "Every output must contain a <type>...</type> block naming the action type.".to_string()
            }
            Violation::UnknownType { got, allowed } => {
                let names: Vec<&str> = allowed.iter().map(|t| t.as_str()).collect();
                format!("The action type `{got}` is not available. <type> must be one of: {}.", names.join(", "))
            }
            Violation::MissingContent(t) => {
                format!("A {t} action must contain a non-empty <content>...</content> block.")
            }
            Violation::MultipleActions => {
                "Each output must contain exactly one action: one <thought>, one <type> and at most one <content> block."
                    .to_string()
            }
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.description())
    }
}

/// Inner text of every `<tag>...</tag>` pair, plus whether an opening tag was left unclosed.
fn tag_blocks<'a>(raw: &'a str, tag: &str) -> (Vec<&'a str>, bool) {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut blocks = Vec::new();
    let mut rest = raw;
    while let Some(start) = rest.find(&open) {
        let after = &rest[start + open.len()..];
        match after.find(&close) {
            Some(end) => {
                blocks.push(&after[..end]);
                rest = &after[end + close.len()..];
            }
            None => return (blocks, true),
        }
    }
    (blocks, false)
}

/// Drop blank leading lines and trailing whitespace, keeping first-line indentation.
fn clean_content(s: &str) -> String {
    let trimmed = s.trim_end();
    let mut start = 0;
    for line in trimmed.split_inclusive('\n') {
        if line.trim().is_empty() {
            start += line.len();
        } else {
            break;
        }
    }
    trimmed[start..].to_string()
}

/// Extract and validate one action. Rules are checked in the order R5, R1, R2, R3, R4.
pub fn parse_and_validate_action(raw: &str, registered: &[ActionType]) -> Result<AgentAction, Violation> {
    let (thoughts, _) = tag_blocks(raw, "thought");
    let (types, _) = tag_blocks(raw, "type");
    let (contents, _) = tag_blocks(raw, "content");
    if thoughts.len() > 1 || types.len() > 1 || contents.len() > 1 {
        return Err(Violation::MultipleActions);
    }
    let thought = thoughts.first().map(|t| t.trim()).unwrap_or("");
    if thought.is_empty() {
        return Err(Violation::MissingThought);
    }
    let type_name = types.first().map(|t| t.trim()).unwrap_or("");
    if type_name.is_empty() {
        return Err(Violation::MissingType);
    }
    let action_type = type_name
        .parse::<ActionType>()
        .ok()
        .filter(|t| registered.contains(t))
        .ok_or_else(|| Violation::UnknownType {
            got: type_name.to_string(),
            allowed: registered.to_vec(),
        })?;
    let content = contents.first().map(|c| clean_content(c)).unwrap_or_default();
    if action_type.needs_content() && content.trim().is_empty() {
        return Err(Violation::MissingContent(action_type));
    }
    Ok(AgentAction {
        thought: thought.to_string(),
        action_type,
        content,
    })
}

/// The action-format section of the system prompt.
pub fn format_rules(registered: &[ActionType]) -> String {
    let names: Vec<&str> = registered.iter().map(|t| t.as_str()).collect();
    let mut out = String::from(
        "Respond with exactly one action per message, in this format:\n\
         <thought>your reasoning</thought>\n\
         <type>action type</type>\n\
         <content>action content</content>\n\n\
         Rules:\n",
    );
    let rules = [
        Violation::MissingThought.description(),
        Violation::MissingType.description(),
        format!("<type> must be one of: {}.", names.join(", ")),
        "<content> may be omitted only for the done action.".to_string(),
        Violation::MultipleActions.description(),
    ];
    for (i, r) in rules.iter().enumerate() {
        out.push_str(&format!("R{}. {r}\n", i + 1));
    }
    out.push_str("\nAction types:\n");
    for t in registered {
        let what = match t {
            ActionType::Search => "query the code search index, e.g. `(type: FUNCTION) AND (text: detect)`. Fields are text, type and path; combine with AND, OR, NOT and parentheses. Repeating a query shows the next matches.",
            ActionType::Code => "run Python code in a persistent interpreter; variables survive between code actions.",
            ActionType::CodeSummary => "record a cleaned-up version of the solution code.",
            ActionType::Done => "end the episode.",
        };
        out.push_str(&format!("- {t}: {what}\n"));
    }
    out
}
