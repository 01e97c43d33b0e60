//! Episode logs and offline evaluation of logged interfaces.

mod log;
mod score;
mod synth;

pub use self::log::{
    append_episode, episodes_to_string, load_episodes, parse_episodes, save_episodes, write_episodes,
    EpisodeLog, EpisodeMeta, LogHeader, Outcome, StepRecord, Widths, SCHEMA_VERSION,
};
pub use self::score::{
    average_ranks, delta_sweep, delta_sweep_with, group_episodes, score_conditions, score_conditions_with,
    spearman_rho, CorrelationReport, DeltaSweep, DroppedGroup, GroupScore,
};
pub use self::synth::{
    assistance_level, cursor_theta_grid, interventionist_corpus, ASSIST_ARENA_RADIUS, ASSIST_GOAL_DISTANCE, ASSIST_MAX_LEVEL,
    ASSIST_STEPS, ASSIST_USER_NOISE,
};
