use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::execution::{format_execution_response, ExecutionRequest, KernelClient, KernelTransport};
use crate::execution::ExecutionOptions;
use crate::llm::{Agent, ModelParams};
use crate::retrieval::{format_retrieval_response, RetrievalEnv, RetrievalLimits};

use super::action::{parse_and_validate_action, ActionType, AgentAction, Violation};
use super::prompt::build_prompt;

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    /// Key into the gold file at evaluation time.
    pub query_id: String,
    pub query: String,
    pub library_description: String,
    pub max_steps: usize,
    pub action_types: Vec<ActionType>,
    pub retrieval: RetrievalLimits,
    /// Character budget for one formatted search response.
    pub response_char_budget: usize,
    pub execution: ExecutionOptions,
    /// Character budget for the whole prompt; `None` disables elision.
    pub prompt_char_budget: Option<usize>,
    pub model: ModelParams,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            query_id: String::new(),
            query: String::new(),
            library_description: String::new(),
            max_steps: 20,
            action_types: ActionType::ALL.to_vec(),
            retrieval: RetrievalLimits::default(),
            response_char_budget: 8000,
            execution: ExecutionOptions::default(),
            prompt_char_budget: Some(400_000),
            model: ModelParams::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self, envs: &Environments) -> Result<(), String> {
        if self.max_steps < 1 {
            return Err("max_steps must be at least 1".into());
        }
        if self.query.trim().is_empty() {
            return Err("query is empty".into());
        }
        if !self.action_types.contains(&ActionType::Done) {
            return Err("the done action must be registered".into());
        }
        if envs.retrieval.is_some() && !self.action_types.contains(&ActionType::Search) {
            return Err("a search environment exists but the search action is not registered".into());
        }
        if envs.execution.is_some() && !self.action_types.contains(&ActionType::Code) {
            return Err("an execution environment exists but the code action is not registered".into());
        }
        let r = &self.retrieval;
        if r.max_matches == 0 || r.expanded == 0 || self.response_char_budget == 0 {
            return Err("retrieval limits must be positive".into());
        }
        if self.execution.max_stdout_chars == 0 || self.execution.max_var_chars == 0 {
            return Err("execution output limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Retrieval,
    Execution,
    InvalidAction,
    CodeSummary,
    Done,
    /// The action was well formed but its environment is not available.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentResponse {
    pub kind: ResponseKind,
    pub text: String,
}

impl EnvironmentResponse {
    pub fn invalid(v: &Violation) -> Self {
        EnvironmentResponse {
            kind: ResponseKind::InvalidAction,
            text: format!("InvalidAction: {}", v.description()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordedAction {
    Valid(AgentAction),
    Invalid { rule: String, violation: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub step: usize,
    pub raw_output: String,
    pub action: RecordedAction,
    pub response_kind: ResponseKind,
    pub formatted_response: String,
    pub duration_s: f64,
}

impl InteractionRecord {
    pub fn valid_action(&self) -> Option<&AgentAction> {
        match &self.action {
            RecordedAction::Valid(a) => Some(a),
            RecordedAction::Invalid { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    Done,
    MaxSteps,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrajectory {
    pub config: EpisodeConfig,
    pub records: Vec<InteractionRecord>,
    pub termination: Termination,
    pub final_code_summary: Option<String>,
    /// Set when the episode ended FATAL.
    pub error: Option<String>,
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub config: EpisodeConfig,
    /// `None` while the episode is still running.
    pub termination: Option<Termination>,
    pub final_code_summary: Option<String>,
    pub steps: usize,
    #[serde(default)]
    pub error: Option<String>,
}

pub type ExecutionEnv = KernelClient<Box<dyn KernelTransport>>;

/// The environments an episode can act on.
#[derive(Default)]
pub struct Environments {
    pub retrieval: Option<RetrievalEnv>,
    pub execution: Option<ExecutionEnv>,
}

/// Mutable episode state: environments plus what has happened so far.
pub struct Episode {
    pub config: EpisodeConfig,
    pub envs: Environments,
    pub records: Vec<InteractionRecord>,
    pub final_code_summary: Option<String>,
    pub termination: Option<Termination>,
    zero_durations: bool,
}

impl Episode {
    pub fn new(config: EpisodeConfig, envs: Environments) -> Self {
        Episode {
            config,
            envs,
            records: Vec::new(),
            final_code_summary: None,
            termination: None,
            zero_durations: false,
        }
    }

    /// Record `0.0` for every duration so persisted output is reproducible.
    pub fn with_zero_durations(mut self, zero: bool) -> Self {
        self.zero_durations = zero;
        self
    }

    /// Route a valid action to its environment.
    pub fn step(&mut self, action: &AgentAction) -> EnvironmentResponse {
        match action.action_type {
            ActionType::Search => match self.envs.retrieval.as_mut() {
                None => unavailable("search"),
                Some(env) => match env.search(&action.content) {
                    Ok(resp) => EnvironmentResponse {
                        kind: ResponseKind::Retrieval,
                        text: format_retrieval_response(&resp, self.config.response_char_budget),
                    },
                    Err(e) => EnvironmentResponse {
                        kind: ResponseKind::InvalidAction,
                        text: format!("InvalidAction: {e}"),
                    },
                },
            },
            ActionType::Code => match self.envs.execution.as_mut() {
                None => unavailable("code"),
                Some(kernel) => {
                    let req = ExecutionRequest {
                        code: action.content.clone(),
                        options: self.config.execution,
                    };
                    let resp = kernel.execute_code(&req);
                    EnvironmentResponse {
                        kind: ResponseKind::Execution,
                        text: format_execution_response(&resp, &self.config.execution.limits()),
                    }
                }
            },
            ActionType::CodeSummary => {
                self.final_code_summary = Some(action.content.clone());
                EnvironmentResponse {
                    kind: ResponseKind::CodeSummary,
                    text: "Code summary saved.".into(),
                }
            }
            ActionType::Done => {
                self.termination = Some(Termination::Done);
                EnvironmentResponse {
                    kind: ResponseKind::Done,
                    text: String::new(),
                }
            }
        }
    }

    /// Parse one raw agent output, act on it, and append the record.
    pub fn advance(&mut self, raw_output: &str) -> &InteractionRecord {
        let started = Instant::now();
        let (action, response) = match parse_and_validate_action(raw_output, &self.config.action_types) {
            Ok(action) => {
                let response = self.step(&action);
                (RecordedAction::Valid(action), response)
            }
            Err(v) => (
                RecordedAction::Invalid {
                    rule: v.rule().to_string(),
                    violation: v.description(),
                },
                EnvironmentResponse::invalid(&v),
            ),
        };
        let duration_s = if self.zero_durations { 0.0 } else { started.elapsed().as_secs_f64() };
        self.records.push(InteractionRecord {
            step: self.records.len() + 1,
            raw_output: raw_output.to_string(),
            action,
            response_kind: response.kind,
            formatted_response: response.text,
            duration_s,
        });
        self.records.last().unwrap()
    }

    pub fn is_finished(&self) -> bool {
        self.termination.is_some()
    }

    fn meta(&self, error: Option<String>) -> EpisodeMeta {
        EpisodeMeta {
            config: self.config.clone(),
            termination: self.termination,
            final_code_summary: self.final_code_summary.clone(),
            steps: self.records.len(),
            error,
        }
    }
}

fn unavailable(kind: &str) -> EnvironmentResponse {
    EnvironmentResponse {
        kind: ResponseKind::Unavailable,
        text: format!("No {kind} environment is available in this episode."),
    }
}

/// Appends records to `trajectory.jsonl` as they happen and rewrites `meta.json`.
pub struct TrajectoryWriter {
    dir: PathBuf,
    lines: BufWriter<File>,
}

impl TrajectoryWriter {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let file = File::create(dir.join(TRAJECTORY_FILE))?;
        Ok(TrajectoryWriter {
            dir: dir.to_path_buf(),
            lines: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, record: &InteractionRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.lines, record)?;
        self.lines.write_all(b"\n")?;
        self.lines.flush()?;
        self.lines.get_ref().sync_data()
    }

    pub fn write_meta(&self, meta: &EpisodeMeta) -> io::Result<()> {
        let tmp = self.dir.join(format!("{META_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(meta)?;
        text.push('\n');
        fs::write(&tmp, text)?;
        fs::rename(tmp, self.dir.join(META_FILE))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Persist the trajectory here as it grows.
    pub out_dir: Option<PathBuf>,
    /// Zero all durations (reproducible output).
    pub zero_durations: bool,
}

/// Run one episode to completion.
///
/// Returns `Err` only for invalid configuration or persistence failures; agent
/// failures end the episode as FATAL with the partial trajectory kept.
pub fn run_episode(
    config: EpisodeConfig,
    system_text: &str,
    agent: &mut dyn Agent,
    envs: Environments,
    opts: &RunOptions,
) -> anyhow::Result<EpisodeTrajectory> {
    config.validate(&envs).map_err(anyhow::Error::msg)?;
    let mut episode = Episode::new(config, envs).with_zero_durations(opts.zero_durations);
    let mut writer = opts.out_dir.as_deref().map(TrajectoryWriter::create).transpose()?;
    if let Some(w) = &writer {
        w.write_meta(&episode.meta(None))?;
    }

    let mut error = None;
    while episode.records.len() < episode.config.max_steps {
        let step = episode.records.len() + 1;
        let messages = build_prompt(system_text, &episode.config, &episode.records);
        let raw = match agent.next_output(step, &messages) {
            Ok(raw) => raw,
            Err(e) => {
                log::error!("agent failed at step {step}: {e}");
                episode.termination = Some(Termination::Fatal);
                error = Some(e.to_string());
                break;
            }
        };
        let record = episode.advance(&raw);
        if let Some(w) = writer.as_mut() {
            w.append(record)?;
        }
        if episode.is_finished() {
            break;
        }
    }
    if episode.termination.is_none() {
        episode.termination = Some(Termination::MaxSteps);
    }
    if let Some(kernel) = episode.envs.execution.as_mut() {
        if let Err(e) = kernel.shutdown() {
            log::warn!("kernel shutdown failed: {e}");
        }
    }
    if let Some(w) = &writer {
        w.write_meta(&episode.meta(error.clone()))?;
    }
    Ok(EpisodeTrajectory {
        termination: episode.termination.expect("set above"),
        config: episode.config,
        records: episode.records,
        final_code_summary: episode.final_code_summary,
        error,
    })
}

/// One `trajectory.jsonl` line: a record, or the raw text and why it failed to parse.
pub type LoadedLine = Result<InteractionRecord, (String, String)>;

/// Read a persisted episode. Corrupt lines are returned as errors rather than failing the load.
pub fn load_trajectory(dir: &Path) -> anyhow::Result<(Option<EpisodeMeta>, Vec<LoadedLine>)> {
    let traj_path = dir.join(TRAJECTORY_FILE);
    let text = fs::read_to_string(&traj_path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", traj_path.display()))?;
    let lines = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<InteractionRecord>(l).map_err(|e| (l.to_string(), e.to_string())))
        .collect();
    let meta_path = dir.join(META_FILE);
    let meta = if meta_path.exists() {
        Some(serde_json::from_str(&fs::read_to_string(&meta_path)?)?)
    } else {
        None
    };
    Ok((meta, lines))
}
