//! The aggregation-weight agent: soft actor-critic, state construction,
//! rewards, and the episode loop.

mod agent;
mod episode;
mod reward;
mod state;

pub use agent::{entropy_estimate, Sac, SacConfig, UpdateStats, LOG_STD_MAX, LOG_STD_MIN};
pub use episode::{
    round_rewards, AgentEnvConfig, DrlAgent, EpisodeReport, PolicyStrategy, RoundLog,
};
pub use reward::{
    compound_reward, discounted_return, quality_targets, reward_r1, reward_r2, reward_r3,
    RewardConfig, RewardParts,
};
pub use state::{build_state, pool, state_dim, StateEncoder};
