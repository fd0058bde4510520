//! The TOML run configuration and turning it into live environments.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::execution::{ExecutionOptions, FakeKernel, KernelClient, ProcessKernel};
use crate::indexer::load_store;
use crate::llm::{Agent, ChatClient, LlmAgent, LlmSummarizer, ModelParams, ScriptedAgent};
use crate::orchestrator::{EpisodeConfig, Environments, ExecutionEnv, DEFAULT_SYSTEM_PROMPT};
use crate::retrieval::{
    CachedSummarizer, DocstringSummarizer, RetrievalEnv, RetrievalLimits, SummaryError, Summarizer,
};
use crate::search::SearchIndex;
use crate::snippet::SnippetDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummarizerKind {
    /// Prototype plus the definition's own docstring.
    #[default]
    Docstring,
    /// Always show code.
    None,
    /// Ask the model for a docstring (cached next to the index).
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_matches: usize,
    pub expanded: usize,
    pub prototypes: usize,
    pub max_stdout_chars: usize,
    pub max_var_chars: usize,
    pub response_char_budget: usize,
    pub prompt_char_budget: Option<usize>,
    pub timeout_seconds: u64,
}

impl Default for Limits {
    fn default() -> Self {
        let r = RetrievalLimits::default();
        let e = ExecutionOptions::default();
        let c = EpisodeConfig::default();
        Limits {
            max_matches: r.max_matches,
            expanded: r.expanded,
            prototypes: r.prototypes,
            max_stdout_chars: e.max_stdout_chars,
            max_var_chars: e.max_var_chars,
            response_char_budget: c.response_char_budget,
            prompt_char_budget: c.prompt_char_budget,
            timeout_seconds: e.timeout_seconds,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    /// Command line for the interpreter kernel process.
    pub command: Vec<String>,
    /// Use the in-process stand-in kernel instead of a subprocess.
    pub fake: bool,
    pub lint: bool,
    pub typecheck: bool,
    pub format: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub index: PathBuf,
    pub library_description: PathBuf,
    pub query: Option<String>,
    pub query_file: Option<PathBuf>,
    pub query_id: String,
    pub max_steps: usize,
    pub system_prompt_file: Option<PathBuf>,
    /// JSON list of raw agent outputs; replaces the LLM when set.
    pub agent_script: Option<PathBuf>,
    pub summarizer: SummarizerKind,
    pub limits: Limits,
    pub model: ModelParams,
    pub kernel: KernelSection,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        RunConfigFile {
            index: PathBuf::new(),
            library_description: PathBuf::new(),
            query: None,
            query_file: None,
            query_id: String::new(),
            max_steps: EpisodeConfig::default().max_steps,
            system_prompt_file: None,
            agent_script: None,
            summarizer: SummarizerKind::default(),
            limits: Limits::default(),
            model: ModelParams::default(),
            kernel: KernelSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfigFile {
    /// Parse a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfigFile =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.index = resolve(base, &cfg.index);
        cfg.library_description = resolve(base, &cfg.library_description);
        for p in [&mut cfg.query_file, &mut cfg.system_prompt_file, &mut cfg.agent_script].into_iter().flatten() {
            *p = resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !self.index.is_dir() {
            bail!("index directory {} does not exist", self.index.display());
        }
        if !self.library_description.is_file() {
            bail!("library description {} does not exist", self.library_description.display());
        }
        for p in [&self.query_file, &self.system_prompt_file, &self.agent_script].into_iter().flatten() {
            if !p.is_file() {
                bail!("{} does not exist", p.display());
            }
        }
        if self.query.is_some() && self.query_file.is_some() {
            bail!("set either query or query_file, not both");
        }
        let l = &self.limits;
        if [l.max_matches, l.expanded, l.max_stdout_chars, l.max_var_chars, l.response_char_budget]
            .contains(&0)
            || l.timeout_seconds == 0
            || l.prompt_char_budget == Some(0)
        {
            bail!("limits must be positive");
        }
        if self.max_steps == 0 {
            bail!("max_steps must be at least 1");
        }
        if !self.kernel.fake && self.kernel.command.is_empty() {
            bail!("set kernel.command or kernel.fake = true");
        }
        self.model.validate().map_err(anyhow::Error::msg)?;
        Ok(())
    }

    pub fn query_text(&self) -> anyhow::Result<Option<String>> {
        match (&self.query, &self.query_file) {
            (Some(q), _) => Ok(Some(q.clone())),
            (None, Some(p)) => Ok(Some(fs::read_to_string(p)?.trim().to_string())),
            (None, None) => Ok(None),
        }
    }

    pub fn system_prompt(&self) -> anyhow::Result<String> {
        match &self.system_prompt_file {
            Some(p) => Ok(fs::read_to_string(p)?),
            None => Ok(DEFAULT_SYSTEM_PROMPT.to_string()),
        }
    }

    /// Episode config for one query.
    pub fn episode_config(&self, query_id: &str, query: &str) -> anyhow::Result<EpisodeConfig> {
        let l = &self.limits;
        Ok(EpisodeConfig {
            query_id: query_id.to_string(),
            query: query.to_string(),
            library_description: fs::read_to_string(&self.library_description)?.trim_end().to_string(),
            max_steps: self.max_steps,
            retrieval: RetrievalLimits {
                max_matches: l.max_matches,
                expanded: l.expanded,
                prototypes: l.prototypes,
            },
            response_char_budget: l.response_char_budget,
            execution: ExecutionOptions {
                lint: self.kernel.lint,
                typecheck: self.kernel.typecheck,
                format: self.kernel.format,
                max_stdout_chars: l.max_stdout_chars,
                max_var_chars: l.max_var_chars,
                timeout_seconds: l.timeout_seconds,
            },
            prompt_char_budget: l.prompt_char_budget,
            model: self.model.clone(),
            ..EpisodeConfig::default()
        })
    }

    pub fn load_index(&self) -> anyhow::Result<Arc<SearchIndex>> {
        let (_, docs) = load_store(&self.index)?;
        Ok(Arc::new(SearchIndex::new(docs)))
    }

    pub fn summarizer(&self) -> anyhow::Result<Arc<dyn Summarizer>> {
        Ok(match self.summarizer {
            SummarizerKind::Docstring => Arc::new(DocstringSummarizer),
            SummarizerKind::None => Arc::new(NoSummarizer),
            SummarizerKind::Llm => {
                let inner = Arc::new(LlmSummarizer { client: ChatClient::from_env()?, params: self.model.clone() });
                Arc::new(CachedSummarizer::with_sidecar(inner, &self.index)?)
            }
        })
    }

    /// Fresh environments for one episode, sharing the loaded index.
    pub fn environments(&self, index: Arc<SearchIndex>, summarizer: Arc<dyn Summarizer>) -> anyhow::Result<Environments> {
        let limits = RetrievalLimits {
            max_matches: self.limits.max_matches,
            expanded: self.limits.expanded,
            prototypes: self.limits.prototypes,
        };
        let mut kernel: ExecutionEnv = if self.kernel.fake {
            KernelClient::new(Box::new(FakeKernel::new()))
        } else {
            KernelClient::new(Box::new(ProcessKernel::new(self.kernel.command.clone())))
        };
        kernel.connect().map_err(|e| anyhow::anyhow!("kernel failed to start: {e}"))?;
        Ok(Environments {
            retrieval: Some(RetrievalEnv::new(index, limits, summarizer)),
            execution: Some(kernel),
        })
    }

    pub fn agent(&self) -> anyhow::Result<Box<dyn Agent>> {
        match &self.agent_script {
            Some(p) => {
                let text = fs::read_to_string(p)?;
                let script: Vec<String> =
                    serde_json::from_str(&text).with_context(|| format!("invalid agent script {}", p.display()))?;
                Ok(Box::new(ScriptedAgent::new(script)))
            }
            None => Ok(Box::new(LlmAgent { client: ChatClient::from_env()?, params: self.model.clone() })),
        }
    }
}

/// Never summarizes, so expanded matches always show code.
pub struct NoSummarizer;

impl Summarizer for NoSummarizer {
    fn id(&self) -> &str {
        "none"
    }

    fn summarize(&self, _doc: &SnippetDocument) -> Result<String, SummaryError> {
        Err(SummaryError::Failed("summaries disabled".into()))
    }
}
