//! Render a persisted episode as a self-contained HTML page or a markdown file.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::orchestrator::{load_trajectory, EpisodeMeta, LoadedLine, RecordedAction, ResponseKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Html,
    Markdown,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "html" => Ok(ExportFormat::Html),
            "md" | "markdown" => Ok(ExportFormat::Markdown),
            other => Err(format!("unknown export format `{other}` (expected html or md)")),
        }
    }
}

enum Card<'a> {
    Step {
        step: usize,
        thought: &'a str,
        action_type: &'a str,
        content: &'a str,
        response_kind: ResponseKind,
        response: &'a str,
    },
    Invalid {
        step: usize,
        raw: &'a str,
        response: &'a str,
    },
    Corrupt {
        line: usize,
        raw: &'a str,
        error: &'a str,
    },
}

struct View<'a> {
    query: &'a str,
    library_description: &'a str,
    cards: Vec<Card<'a>>,
    termination: String,
    error: Option<&'a str>,
    summary: Option<&'a str>,
}

fn view<'a>(meta: Option<&'a EpisodeMeta>, lines: &'a [LoadedLine]) -> View<'a> {
    let cards = lines
        .iter()
        .enumerate()
        .map(|(i, line)| match line {
            Ok(r) => match &r.action {
                RecordedAction::Valid(a) => Card::Step {
                    step: r.step,
                    thought: &a.thought,
                    action_type: a.action_type.as_str(),
                    content: &a.content,
                    response_kind: r.response_kind,
                    response: &r.formatted_response,
                },
                RecordedAction::Invalid { .. } => Card::Invalid {
                    step: r.step,
                    raw: &r.raw_output,
                    response: &r.formatted_response,
                },
            },
            Err((raw, error)) => Card::Corrupt { line: i + 1, raw, error },
        })
        .collect();
    View {
        query: meta.map(|m| m.config.query.as_str()).unwrap_or(""),
        library_description: meta.map(|m| m.config.library_description.as_str()).unwrap_or(""),
        cards,
        termination: match meta.and_then(|m| m.termination) {
            Some(t) => serde_json::to_value(t).unwrap().as_str().unwrap_or("UNKNOWN").to_string(),
            None => "UNKNOWN".to_string(),
        },
        error: meta.and_then(|m| m.error.as_deref()),
        summary: meta.and_then(|m| m.final_code_summary.as_deref()),
    }
}

fn kind_name(k: ResponseKind) -> String {
    serde_json::to_value(k).unwrap().as_str().unwrap_or("").to_string()
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:system-ui,sans-serif;max-width:960px;margin:2em auto;padding:0 1em;color:#222}\
pre{background:#f6f8fa;padding:.75em;overflow-x:auto;white-space:pre-wrap}\
.card{border:1px solid #ddd;border-radius:6px;padding:.5em 1em;margin:1em 0}\
.card.invalid{border-color:#e0a800}.card.error{border-color:#d33;background:#fff5f5}\
.badge{display:inline-block;padding:0 .5em;border-radius:4px;background:#0366d6;color:#fff;font-size:.85em}\
.banner{padding:.5em 1em;border-radius:6px;background:#eef;font-weight:bold}";

fn render_html(v: &View) -> String {
    let mut o = String::new();
    o.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Episode trajectory</title>\n");
    let _ = writeln!(o, "<style>{STYLE}</style>\n</head>\n<body>");
    let _ = writeln!(o, "<h1>Episode trajectory</h1>");
    let _ = writeln!(o, "<h2>Query</h2>\n<pre>{}</pre>", escape(v.query));
    let _ = writeln!(o, "<h2>Library description</h2>\n<pre>{}</pre>", escape(v.library_description));
    for card in &v.cards {
        match card {
            Card::Step { step, thought, action_type, content, response_kind, response } => {
                let _ = writeln!(o, "<section class=\"card step\">");
                let _ = writeln!(o, "<h3>Step {step} <span class=\"badge\">{}</span></h3>", escape(action_type));
                let _ = writeln!(o, "<p><b>Thought:</b> {}</p>", escape(thought));
                if !content.is_empty() {
                    let _ = writeln!(o, "<pre><code>{}</code></pre>", escape(content));
                }
                let _ = writeln!(o, "<p><b>Response</b> ({}):</p>", kind_name(*response_kind));
                let _ = writeln!(o, "<pre>{}</pre>", escape(response));
                o.push_str("</section>\n");
            }
            Card::Invalid { step, raw, response } => {
                let _ = writeln!(o, "<section class=\"card step invalid\">");
                let _ = writeln!(o, "<h3>Step {step} <span class=\"badge\">invalid</span></h3>");
                let _ = writeln!(o, "<pre>{}</pre>", escape(raw));
                let _ = writeln!(o, "<p><b>Response</b> (invalid_action):</p>\n<pre>{}</pre>", escape(response));
                o.push_str("</section>\n");
            }
            Card::Corrupt { line, raw, error } => {
                let _ = writeln!(o, "<section class=\"card error\">");
                let _ = writeln!(o, "<h3>Unreadable record (line {line})</h3>");
                let _ = writeln!(o, "<p>{}</p>\n<pre>{}</pre>", escape(error), escape(raw));
                o.push_str("</section>\n");
            }
        }
    }
    let _ = write!(o, "<div class=\"banner\">Termination: {}", escape(&v.termination));
    if let Some(e) = v.error {
        let _ = write!(o, " ({})", escape(e));
    }
    o.push_str("</div>\n");
    if let Some(s) = v.summary {
        let _ = writeln!(o, "<h2>Code summary</h2>\n<pre><code>{}</code></pre>", escape(s));
    }
    o.push_str("</body>\n</html>\n");
    o
}

/// A code fence longer than any backtick run in `text`.
fn fence(text: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in text.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat(longest.max(2) + 1)
}

fn md_block(o: &mut String, lang: &str, text: &str) {
    let f = fence(text);
    let _ = writeln!(o, "{f}{lang}\n{text}\n{f}\n");
}

fn render_markdown(v: &View) -> String {
    let mut o = String::from("# Episode trajectory\n\n## Query\n\n");
    md_block(&mut o, "", v.query);
    o.push_str("## Library description\n\n");
    md_block(&mut o, "", v.library_description);
    for card in &v.cards {
        match card {
            Card::Step { step, thought, action_type, content, response_kind, response } => {
                let _ = writeln!(o, "## Step {step}: `{action_type}`\n\n**Thought:** {thought}\n");
                if !content.is_empty() {
                    md_block(&mut o, if *action_type == "search" { "" } else { "python" }, content);
                }
                let _ = writeln!(o, "**Response** ({}):\n", kind_name(*response_kind));
                md_block(&mut o, "", response);
            }
            Card::Invalid { step, raw, response } => {
                let _ = writeln!(o, "## Step {step}: invalid\n");
                md_block(&mut o, "", raw);
                o.push_str("**Response** (invalid_action):\n\n");
                md_block(&mut o, "", response);
            }
            Card::Corrupt { line, raw, error } => {
                let _ = writeln!(o, "## Unreadable record (line {line})\n\n{error}\n");
                md_block(&mut o, "", raw);
            }
        }
    }
    let _ = write!(o, "**Termination: {}**", v.termination);
    if let Some(e) = v.error {
        let _ = write!(o, " ({e})");
    }
    o.push('\n');
    if let Some(s) = v.summary {
        o.push_str("\n## Code summary\n\n");
        md_block(&mut o, "python", s);
    }
    o
}

pub fn render_trajectory(meta: Option<&EpisodeMeta>, lines: &[LoadedLine], format: ExportFormat) -> String {
    let v = view(meta, lines);
    match format {
        ExportFormat::Html => render_html(&v),
        ExportFormat::Markdown => render_markdown(&v),
    }
}

/// Load the episode in `dir` and render it.
pub fn export_trajectory(dir: &Path, format: ExportFormat) -> anyhow::Result<String> {
    let (meta, lines) = load_trajectory(dir)?;
    Ok(render_trajectory(meta.as_ref(), &lines, format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::{AgentAction, ActionType, EpisodeConfig, InteractionRecord, Termination};

    fn meta(termination: Termination) -> EpisodeMeta {
        EpisodeMeta {
            config: EpisodeConfig { query: "count <objects>".into(), ..EpisodeConfig::default() },
            termination: Some(termination),
            final_code_summary: None,
            steps: 0,
            error: None,
        }
    }

    fn step(n: usize) -> LoadedLine {
        Ok(InteractionRecord {
            step: n,
            raw_output: String::new(),
            action: RecordedAction::Valid(AgentAction {
                thought: "t".into(),
                action_type: ActionType::Code,
                content: "print('```')".into(),
            }),
            response_kind: ResponseKind::Execution,
            formatted_response: "STDOUT:\n```".into(),
            duration_s: 0.0,
        })
    }

    #[test]
    fn empty_trajectory_has_banner_only() {
        let m = meta(Termination::Fatal);
        let html = render_trajectory(Some(&m), &[], ExportFormat::Html);
        assert!(html.contains("Termination: FATAL"));
        assert_eq!(html.matches("class=\"card").count(), 0);
        assert!(html.contains("count &lt;objects&gt;"));
    }

    #[test]
    fn corrupt_lines_become_error_cards() {
        let m = meta(Termination::Done);
        let lines = vec![step(1), Err(("{oops".to_string(), "EOF".to_string()))];
        let html = render_trajectory(Some(&m), &lines, ExportFormat::Html);
        assert_eq!(html.matches("class=\"card step").count(), 1);
        assert_eq!(html.matches("class=\"card error").count(), 1);
    }

    #[test]
    fn markdown_fences_outgrow_content() {
        let m = meta(Termination::Done);
        let md = render_trajectory(Some(&m), &[step(1)], ExportFormat::Markdown);
        assert!(md.contains("````python\nprint('```')\n````"));
        assert_eq!(md.matches("\n## Step ").count(), 1);
    }
}
