//! The single-agent loop: prompt, parse the action, route it, record the result.

pub mod action;
pub mod episode;
pub mod prompt;

pub use action::{format_rules, parse_and_validate_action, ActionType, AgentAction, Violation};
pub use episode::{
    load_trajectory, run_episode, EnvironmentResponse, Environments, Episode, EpisodeConfig, EpisodeMeta,
    EpisodeTrajectory, ExecutionEnv, InteractionRecord, LoadedLine, RecordedAction, ResponseKind, RunOptions,
    Termination, TrajectoryWriter, META_FILE, TRAJECTORY_FILE,
};
pub use prompt::{build_prompt, DEFAULT_SYSTEM_PROMPT, ELIDED_RESPONSE};
