//! Running FL episodes with the agent choosing aggregation weights.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::defects::DefectPlan;
use crate::error::Result;
use crate::fed::{Federation, RoundContext, RoundResult, Uploads, WeightStrategy};
use crate::qeen::{normalize_scores, Qeen};
use crate::replay::{ReplayBuffer, Transition};
use crate::seed::{self, Rng};
use crate::simplex::SimplexAction;

use super::agent::{Sac, UpdateStats};
use super::reward::{
    compound_reward, discounted_return, reward_r1, reward_r2, reward_r3, RewardConfig, RewardParts,
};
use super::state::{build_state, StateEncoder};

/// Computes the three sub-rewards for one finished round. `r2` is zero when
/// no quality scorer is available.
pub fn round_rewards(
    result: &RoundResult,
    uploads: &Uploads,
    scorer: Option<&Qeen>,
    cfg: &RewardConfig,
) -> Result<RewardParts> {
    let r1 = reward_r1(
        result.global_accuracy,
        result.fedavg_shadow_accuracy,
        cfg.target_accuracy,
        cfg.kappa,
    );
    let r2 = match scorer {
        Some(q) => {
            let refs: Vec<_> = uploads.params.iter().collect();
            reward_r2(&normalize_scores(&q.score_models(&refs)?), &result.weights)
        }
        None => 0.0,
    };
    let r3 = reward_r3(&result.previous_global, &result.global_params);
    Ok(compound_reward(r1, r2, r3, cfg.beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentEnvConfig {
    pub loss_clip: f64,
    pub reward: RewardConfig,
    /// Store the last round of an episode as terminal. When false the
    /// episode end is treated as a time limit: the last round has no
    /// successor state and is not stored, so every stored transition
    /// bootstraps.
    pub terminal_at_end: bool,
}

impl Default for AgentEnvConfig {
    fn default() -> Self {
        Self {
            loss_clip: 5.0,
            reward: RewardConfig::default(),
            terminal_at_end: true,
        }
    }
}

/// Everything the learner owns across episodes.
#[derive(Debug, Clone)]
pub struct DrlAgent {
    pub sac: Sac,
    pub replay: ReplayBuffer,
    pub encoder: StateEncoder,
    /// Source of predicted quality marks for `r2`.
    pub scorer: Option<Arc<Qeen>>,
    pub env: AgentEnvConfig,
}

#[derive(Debug, Clone)]
pub struct RoundLog {
    pub result: RoundResult,
    pub rewards: RewardParts,
}

#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub episode: u64,
    /// Discounted compound return G.
    pub ret: f64,
    pub rounds: Vec<RoundLog>,
    pub updates: usize,
    pub mean_stats: UpdateStats,
}

impl EpisodeReport {
    pub fn final_accuracy(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.result.global_accuracy)
    }

    pub fn final_test_accuracy(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.result.test_accuracy)
    }
}

impl DrlAgent {
    fn state(&self, fed: &Federation, uploads: &Uploads, prev: &SimplexAction) -> Result<Vec<f64>> {
        build_state(
            &self.encoder,
            fed.global(),
            &uploads.params,
            &uploads.losses,
            prev,
            self.env.loss_clip,
        )
    }

    /// Runs `rounds` FL rounds on `fed` under `plan`.
    ///
    /// With `learn`, actions are sampled, transitions stored, and
    /// `updates_per_round` gradient updates follow every round once the buffer
    /// holds a full batch. Without it, the policy mean is used and nothing is
    /// stored.
    pub fn run_episode(
        &mut self,
        fed: &mut Federation,
        plan: &DefectPlan,
        rounds: usize,
        learn: bool,
        seed: u64,
        episode: u64,
    ) -> Result<EpisodeReport> {
        let k = fed.k;
        let mut act_rng = seed::stream(seed, "sac/act", &[episode]);
        let mut prev = SimplexAction::uniform(k);
        let mut pending: Option<(Vec<f64>, SimplexAction, f64)> = None;
        let mut logs = Vec::with_capacity(rounds);
        let total_updates = rounds * self.sac.cfg.updates_per_round;
        let mut t_update = 0usize;
        let mut stats_sum = UpdateStats::default();
        for round in 0..rounds {
            let uploads = fed.collect_uploads(plan)?;
            let state = self.state(fed, &uploads, &prev)?;
            if let Some((s, a, r)) = pending.take() {
                self.replay.push(Transition {
                    state: s,
                    action: a,
                    reward: r,
                    next_state: state.clone(),
                    done: false,
                });
            }
            let (action, _) = self.sac.act(&state, !learn, &mut act_rng)?;
            let result = fed.apply(&uploads, action.clone())?;
            let rewards =
                round_rewards(&result, &uploads, self.scorer.as_deref(), &self.env.reward)?;
            if learn {
                if round + 1 == rounds {
                    if self.env.terminal_at_end {
                        self.replay.push(Transition {
                            next_state: state.clone(),
                            state,
                            action: action.clone(),
                            reward: rewards.total,
                            done: true,
                        });
                    }
                } else {
                    pending = Some((state, action.clone(), rewards.total));
                }
                for _ in 0..self.sac.cfg.updates_per_round {
                    if self.replay.len() < self.sac.cfg.batch_size {
                        break;
                    }
                    t_update += 1;
                    let mut rng = seed::stream(seed, "sac/update", &[episode, t_update as u64]);
                    let stats = self.update_once(t_update, total_updates, &mut rng)?;
                    stats_sum.critic_loss += stats.critic_loss;
                    stats_sum.actor_loss += stats.actor_loss;
                    stats_sum.alpha += stats.alpha;
                    stats_sum.entropy += stats.entropy;
                }
            }
            prev = action;
            logs.push(RoundLog { result, rewards });
        }
        let rewards: Vec<f64> = logs.iter().map(|l| l.rewards.total).collect();
        let n = t_update.max(1) as f64;
        Ok(EpisodeReport {
            episode,
            ret: discounted_return(&rewards, self.sac.cfg.gamma),
            rounds: logs,
            updates: t_update,
            mean_stats: UpdateStats {
                critic_loss: stats_sum.critic_loss / n,
                actor_loss: stats_sum.actor_loss / n,
                alpha: stats_sum.alpha / n,
                entropy: stats_sum.entropy / n,
            },
        })
    }

    fn update_once(&mut self, t: usize, total: usize, rng: &mut Rng) -> Result<UpdateStats> {
        let sample = self.replay.sample(self.sac.cfg.batch_size, t, total, rng)?;
        let (stats, td) = self
            .sac
            .update(&sample.transitions, &sample.is_weights, rng)?;
        let eps = self.replay.config().eps;
        let priorities: Vec<f64> = td
            .iter()
            .map(|&(a, b)| crate::replay::priority_from_td(a, b, eps))
            .collect();
        self.replay.update_priorities(&sample.ids, &priorities);
        Ok(stats)
    }
}

/// A frozen policy used as an aggregation strategy (mean action, no learning).
pub struct PolicyStrategy {
    pub sac: Arc<Sac>,
    pub encoder: StateEncoder,
    pub loss_clip: f64,
    prev: Option<SimplexAction>,
    rng: Rng,
}

impl PolicyStrategy {
    pub fn new(sac: Arc<Sac>, encoder: StateEncoder, loss_clip: f64) -> Self {
        Self {
            sac,
            encoder,
            loss_clip,
            prev: None,
            rng: seed::stream(0, "sac/policy", &[]),
        }
    }
}

impl WeightStrategy for PolicyStrategy {
    fn name(&self) -> &str {
        "dearfsac"
    }

    fn weights(&mut self, ctx: &RoundContext<'_>) -> Result<SimplexAction> {
        let k = ctx.uploads.ids.len();
        let prev = self
            .prev
            .take()
            .filter(|p| p.len() == k)
            .unwrap_or_else(|| SimplexAction::uniform(k));
        let state = build_state(
            &self.encoder,
            ctx.global,
            &ctx.uploads.params,
            &ctx.uploads.losses,
            &prev,
            self.loss_clip,
        )?;
        let (a, _) = self.sac.act(&state, true, &mut self.rng)?;
        self.prev = Some(a.clone());
        Ok(a)
    }
}
