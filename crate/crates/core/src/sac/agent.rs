//! Soft actor-critic over simplex actions.
//!
//! The actor outputs a diagonal Gaussian over a pre-action `z ∈ R^K`; the
//! action is `softmax(z)`. The reported log-probability is the Gaussian
//! density of `z` and ignores the softmax change of variables.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    backward, chain, forward, forward_trace, read_checkpoint, write_checkpoint, Activation, Adam,
    FlatParams, Matrix, Section,
};
use crate::replay::Transition;
use crate::seed::{self, Rng};
use crate::simplex::SimplexAction;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `Σ_j log softmax(z)_j`, computed without forming the softmax.
fn sum_log_softmax(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub gamma: f64,
    pub rho: f64,
    pub init_alpha: f64,
    pub auto_alpha: bool,
    /// Defaults to `−K`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    /// Gradient updates per FL round.
    pub updates_per_round: usize,
    /// Multiplies rewards inside the critic target. The compound reward
    /// lives in [−1, 0] and differences between actions are often a few
    /// hundredths, which a freshly initialised critic cannot resolve.
    pub reward_scale: f64,
    /// Adds the softmax change of variables to `log π`, so the density is
    /// taken over the simplex rather than over the Gaussian logits. Without
    /// it the entropy bonus pays for saturated logits and the policy drifts
    /// to the vertices.
    pub simplex_jacobian: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            gamma: 0.99,
            rho: 0.995,
            init_alpha: 0.2,
            auto_alpha: true,
            target_entropy: None,
            batch_size: 64,
            updates_per_round: 1,
            reward_scale: 1.0,
            simplex_jacobian: false,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("sac.gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config("sac.rho", "must lie in [0, 1]"));
        }
        if !(self.init_alpha > 0.0) {
            return Err(Error::config("sac.init_alpha", "must be positive"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::config(
                "sac.reward_scale",
                "must be positive and finite",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("sac.batch_size", "must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("sac.hidden", "widths must be positive"));
        }
        Ok(())
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct Sac {
    pub k: usize,
    pub state_dim: usize,
    pub cfg: SacConfig,
    pub actor: FlatParams,
    pub critics: [FlatParams; 2],
    pub targets: [FlatParams; 2],
    pub log_alpha: f64,
    actor_opt: Adam,
    critic_opt: [Adam; 2],
    alpha_opt: Adam,
    pub updates: usize,
}

/// Output of one policy evaluation for a batch of states.
struct PolicySample {
    trace: crate::nn::ForwardTrace,
    /// Clamped log-std per row.
    log_std: Matrix,
    /// Whether the clamp was active, per element.
    clamped: Vec<bool>,
    eps: Matrix,
    actions: Matrix,
    log_prob: Vec<f64>,
}

impl Sac {
    pub fn new(state_dim: usize, k: usize, cfg: SacConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if k == 0 || state_dim == 0 {
            return Err(Error::config(
                "sac",
                "state and action dimensions must be positive",
            ));
        }
        let dims = |input: usize, output: usize| {
            let mut d = vec![input];
            d.extend(&cfg.hidden);
            d.push(output);
            d
        };
        let mut actor = FlatParams::init(
            chain(
                &dims(state_dim, 2 * k),
                Activation::Relu,
                Activation::Identity,
            ),
            seed::derive(seed, "sac/actor", &[]),
        )?;
        // Zero mean and unit std at initialization: symmetric over the simplex.
        actor.zero_last_layer();
        let critic = |i: u64| {
            FlatParams::init(
                chain(
                    &dims(state_dim + k, 1),
                    Activation::Relu,
                    Activation::Identity,
                ),
                seed::derive(seed, "sac/critic", &[i]),
            )
        };
        let critics = [critic(0)?, critic(1)?];
        let targets = critics.clone();
        Ok(Self {
            k,
            state_dim,
            actor_opt: Adam::new(actor.d(), cfg.actor_lr),
            critic_opt: [
                Adam::new(critics[0].d(), cfg.critic_lr),
                Adam::new(critics[1].d(), cfg.critic_lr),
            ],
            alpha_opt: Adam::new(1, cfg.alpha_lr),
            log_alpha: cfg.init_alpha.ln(),
            actor,
            critics,
            targets,
            cfg,
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.cfg.target_entropy.unwrap_or(-(self.k as f64))
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim {
            return Err(Error::Shape {
                context: "agent state",
                expected: self.state_dim,
                actual: s.len(),
            });
        }
        Ok(())
    }

    fn stack_states<'a>(&self, states: impl Iterator<Item = &'a [f64]>) -> Result<Matrix> {
        let mut data = Vec::new();
        let mut n = 0;
        for s in states {
            self.check_state(s)?;
            data.extend_from_slice(s);
            n += 1;
        }
        Matrix::from_vec(n, self.state_dim, data)
    }

    /// Mean and clamped log-std of the pre-action for one state.
    pub fn policy_params(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.stack_states(std::iter::once(state))?;
        let out = forward(&self.actor, &x)?;
        let row = out.row(0);
        let mean = row[..self.k].to_vec();
        let log_std = row[self.k..]
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok((mean, log_std))
    }

    /// Samples (or, when `deterministic`, takes the mean of) the policy.
    pub fn act(
        &self,
        state: &[f64],
        deterministic: bool,
        rng: &mut Rng,
    ) -> Result<(SimplexAction, f64)> {
        let (mean, log_std) = self.policy_params(state)?;
        let mut z = mean.clone();
        let mut log_prob = 0.0;
        for j in 0..self.k {
            let e: f64 = if deterministic {
                0.0
            } else {
                StandardNormal.sample(rng)
            };
            z[j] += log_std[j].exp() * e;
            log_prob += -0.5 * e * e - log_std[j] - HALF_LN_2PI;
        }
        if self.cfg.simplex_jacobian {
            log_prob -= sum_log_softmax(&z);
        }
        Ok((SimplexAction::from_logits(&z), log_prob))
    }

    fn sample_policy(&self, states: &Matrix, rng: &mut Rng) -> Result<PolicySample> {
        let k = self.k;
        let trace = forward_trace(&self.actor, states)?;
        let b = states.rows();
        let mut log_std = Matrix::zeros(b, k);
        let mut clamped = vec![false; b * k];
        let mut eps = Matrix::zeros(b, k);
        let mut actions = Matrix::zeros(b, k);
        let mut log_prob = vec![0.0; b];
        for r in 0..b {
            let out = trace.output.row(r);
            let mut z = vec![0.0; k];
            for j in 0..k {
                let raw = out[k + j];
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                clamped[r * k + j] = raw != ls;
                let e: f64 = StandardNormal.sample(rng);
                log_std.row_mut(r)[j] = ls;
                eps.row_mut(r)[j] = e;
                z[j] = out[j] + ls.exp() * e;
                log_prob[r] += -0.5 * e * e - ls - HALF_LN_2PI;
            }
            if self.cfg.simplex_jacobian {
                log_prob[r] -= sum_log_softmax(&z);
            }
            crate::nn::softmax_row(&mut z);
            actions.row_mut(r).copy_from_slice(&z);
        }
        Ok(PolicySample {
            trace,
            log_std,
            clamped,
            eps,
            actions,
            log_prob,
        })
    }

    /// Soft TD targets `s·r + γ(1−done)(min Q̄(s′,a′) − α·log π(a′|s′))`, `s` the reward scale.
    pub fn td_targets(&self, batch: &[Transition], rng: &mut Rng) -> Result<Vec<f64>> {
        let next = self.stack_states(batch.iter().map(|t| t.next_state.as_slice()))?;
        let pol = self.sample_policy(&next, rng)?;
        let input = next.hstack(&pol.actions)?;
        let q1 = forward(&self.targets[0], &input)?;
        let q2 = forward(&self.targets[1], &input)?;
        let alpha = self.alpha();
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let soft = q1.get(i, 0).min(q2.get(i, 0)) - alpha * pol.log_prob[i];
                let cont = if t.done { 0.0 } else { 1.0 };
                self.cfg.reward_scale * t.reward + self.cfg.gamma * cont * soft
            })
            .collect())
    }

    /// Regresses both critics onto the soft TD target with importance
    /// weights. Returns the mean weighted loss and per-item TD errors.
    pub fn critic_update(
        &mut self,
        batch: &[Transition],
        is_weights: &[f64],
        rng: &mut Rng,
    ) -> Result<(f64, Vec<(f64, f64)>)> {
        if batch.len() != is_weights.len() || batch.is_empty() {
            return Err(Error::Shape {
                context: "critic batch weights",
                expected: batch.len(),
                actual: is_weights.len(),
            });
        }
        let y = self.td_targets(batch, rng)?;
        let states = self.stack_states(batch.iter().map(|t| t.state.as_slice()))?;
        let mut acts = Vec::with_capacity(batch.len() * self.k);
        for t in batch {
            if t.action.len() != self.k {
                return Err(Error::Shape {
                    context: "stored action",
                    expected: self.k,
                    actual: t.action.len(),
                });
            }
            acts.extend_from_slice(t.action.weights());
        }
        let input = states.hstack(&Matrix::from_vec(batch.len(), self.k, acts)?)?;
        let n = batch.len() as f64;
        let mut td = vec![(0.0, 0.0); batch.len()];
        let mut total = 0.0;
        for c in 0..2 {
            let trace = forward_trace(&self.critics[c], &input)?;
            let mut g = Matrix::zeros(batch.len(), 1);
            for i in 0..batch.len() {
                let err = trace.output.get(i, 0) - y[i];
                total += is_weights[i] * err * err / n;
                g.row_mut(i)[0] = 2.0 * is_weights[i] * err / n;
                if c == 0 {
                    td[i].0 = y[i] - trace.output.get(i, 0);
                } else {
                    td[i].1 = y[i] - trace.output.get(i, 0);
                }
            }
            let (grads, _) = backward(&self.critics[c], &trace, &g, false)?;
            self.critic_opt[c].step(self.critics[c].values_mut(), &grads.values);
        }
        if !total.is_finite() {
            return Err(Error::Diverged {
                step: self.updates,
                what: "critic loss",
            });
        }
        Ok((total, td))
    }

    /// Gradient step on `E[α·log π(a|s) − min Q(s,a)]` with reparameterized
    /// actions; then, if enabled, on the temperature. Returns the actor loss
    /// and the batch entropy estimate `−mean log π`.
    pub fn actor_update(&mut self, batch: &[Transition], rng: &mut Rng) -> Result<(f64, f64)> {
        let (loss, grads, entropy) = self.actor_loss_and_grad(batch, rng)?;
        self.actor_opt.step(self.actor.values_mut(), &grads);
        if self.cfg.auto_alpha {
            // d/dlogα of −logα·(log π + H̄) averaged over the batch.
            let g = entropy - self.target_entropy();
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[g]);
            self.log_alpha = la[0].clamp(-20.0, 5.0);
        }
        Ok((loss, entropy))
    }

    /// Actor loss, its gradient w.r.t. the actor parameters, and the entropy
    /// estimate, for a fixed draw of the reparameterization noise from `rng`.
    pub fn actor_loss_and_grad(
        &self,
        batch: &[Transition],
        rng: &mut Rng,
    ) -> Result<(f64, Vec<f64>, f64)> {
        let k = self.k;
        let states = self.stack_states(batch.iter().map(|t| t.state.as_slice()))?;
        let b = states.rows();
        let pol = self.sample_policy(&states, rng)?;
        let input = states.hstack(&pol.actions)?;
        let t1 = forward_trace(&self.critics[0], &input)?;
        let t2 = forward_trace(&self.critics[1], &input)?;
        let alpha = self.alpha();
        let n = b as f64;
        let mut loss = 0.0;
        let mut g1 = Matrix::zeros(b, 1);
        let mut g2 = Matrix::zeros(b, 1);
        for i in 0..b {
            let (q1, q2) = (t1.output.get(i, 0), t2.output.get(i, 0));
            loss += (alpha * pol.log_prob[i] - q1.min(q2)) / n;
            if q1 <= q2 {
                g1.row_mut(i)[0] = -1.0 / n;
            } else {
                g2.row_mut(i)[0] = -1.0 / n;
            }
        }
        let (_, gi1) = backward(&self.critics[0], &t1, &g1, true)?;
        let (_, gi2) = backward(&self.critics[1], &t2, &g2, true)?;
        let (gi1, gi2) = (gi1.expect("input grad"), gi2.expect("input grad"));
        // Gradient w.r.t. the actor's raw outputs (mean, log-std).
        let mut gout = Matrix::zeros(b, 2 * k);
        for i in 0..b {
            let ga: Vec<f64> = (0..k)
                .map(|j| gi1.get(i, self.state_dim + j) + gi2.get(i, self.state_dim + j))
                .collect();
            let a = pol.actions.row(i);
            let dot: f64 = a.iter().zip(&ga).map(|(x, y)| x * y).sum();
            let row = gout.row_mut(i);
            for j in 0..k {
                let mut gz = a[j] * (ga[j] - dot);
                if self.cfg.simplex_jacobian {
                    // d/dz_j of −Σ log a = K·a_j − 1, scaled by α/n in the loss.
                    gz += alpha / n * (k as f64 * a[j] - 1.0);
                }
                row[j] = gz;
                let sigma = pol.log_std.get(i, j).exp();
                // z = μ + σε, and log π has −log σ per coordinate.
                let g = gz * sigma * pol.eps.get(i, j) - alpha / n;
                // A clamped log-std only receives gradient that moves it back
                // inside the range; otherwise a saturated unit could never leave.
                let raw = pol.trace.output.get(i, k + j);
                let inward = (raw > LOG_STD_MAX && g > 0.0) || (raw < LOG_STD_MIN && g < 0.0);
                if !pol.clamped[i * k + j] || inward {
                    row[k + j] = g;
                }
            }
        }
        // The output layer is linear, so this is also the pre-activation gradient.
        let (grads, _) = backward(&self.actor, &pol.trace, &gout, false)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step: self.updates,
                what: "actor loss",
            });
        }
        let entropy = -pol.log_prob.iter().sum::<f64>() / n;
        Ok((loss, grads.values, entropy))
    }

    /// `target ← ρ·target + (1−ρ)·online`.
    pub fn soft_target_update(&mut self, rho: f64) -> Result<()> {
        for c in 0..2 {
            self.targets[c].blend_from(&self.critics[c], rho)?;
        }
        Ok(())
    }

    /// One full update: critics, actor and temperature, then target smoothing.
    pub fn update(
        &mut self,
        batch: &[Transition],
        is_weights: &[f64],
        rng: &mut Rng,
    ) -> Result<(UpdateStats, Vec<(f64, f64)>)> {
        let (critic_loss, td) = self.critic_update(batch, is_weights, rng)?;
        let (actor_loss, entropy) = self.actor_update(batch, rng)?;
        self.soft_target_update(self.cfg.rho)?;
        self.updates += 1;
        Ok((
            UpdateStats {
                critic_loss,
                actor_loss,
                alpha: self.alpha(),
                entropy,
            },
            td,
        ))
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let meta = serde_json::json!({
            "k": self.k,
            "state_dim": self.state_dim,
            "log_alpha": self.log_alpha,
            "updates": self.updates,
            "config": self.cfg,
        });
        let sections = [
            Section::new("sac/actor", self.actor.clone(), seed).with_meta(meta),
            Section::new("sac/critic1", self.critics[0].clone(), seed),
            Section::new("sac/critic2", self.critics[1].clone(), seed),
            Section::new("sac/target1", self.targets[0].clone(), seed),
            Section::new("sac/target2", self.targets[1].clone(), seed),
        ];
        write_checkpoint(BufWriter::new(File::create(path)?), &sections)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let sections = read_checkpoint(BufReader::new(File::open(path)?))?;
        let names: Vec<Option<&str>> = sections.iter().map(|s| s.header.name.as_deref()).collect();
        let expected = [
            "sac/actor",
            "sac/critic1",
            "sac/critic2",
            "sac/target1",
            "sac/target2",
        ];
        if names.len() != 5 || names.iter().zip(expected).any(|(n, e)| *n != Some(e)) {
            return Err(Error::Checkpoint(format!(
                "unexpected SAC sections {names:?}"
            )));
        }
        let meta = sections[0]
            .header
            .meta
            .clone()
            .ok_or_else(|| Error::Checkpoint("actor section lacks metadata".into()))?;
        let field = |name: &str| {
            meta.get(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("actor metadata lacks `{name}`")))
        };
        let bad = |e: serde_json::Error| Error::Checkpoint(e.to_string());
        let k: usize = serde_json::from_value(field("k")?).map_err(bad)?;
        let state_dim: usize = serde_json::from_value(field("state_dim")?).map_err(bad)?;
        let cfg: SacConfig = serde_json::from_value(field("config")?).map_err(bad)?;
        let mut sac = Sac::new(state_dim, k, cfg, 0)?;
        let mut it = sections.into_iter().map(|s| s.params);
        let mut take = |want: &FlatParams| -> Result<FlatParams> {
            let p = it.next().expect("five sections");
            want.ensure_same_layout(&p)?;
            Ok(p)
        };
        sac.actor = take(&sac.actor.clone())?;
        sac.critics = [
            take(&sac.critics[0].clone())?,
            take(&sac.critics[1].clone())?,
        ];
        sac.targets = [
            take(&sac.targets[0].clone())?,
            take(&sac.targets[1].clone())?,
        ];
        sac.log_alpha = serde_json::from_value(field("log_alpha")?).map_err(bad)?;
        sac.updates = serde_json::from_value(field("updates")?).map_err(bad)?;
        Ok(sac)
    }
}

/// Policy entropy estimate `E[−log π]` at one state from `n` samples.
pub fn entropy_estimate(sac: &Sac, state: &[f64], n: usize, s: u64) -> Result<f64> {
    let mut rng = seed::stream(s, "sac/entropy", &[]);
    let mut total = 0.0;
    for _ in 0..n {
        total -= sac.act(state, false, &mut rng)?.1;
    }
    Ok(total / n as f64)
}
