//! Replay buffer with recency windows and prioritized sampling.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::simplex::SimplexAction;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: SimplexAction,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BufferConfig {
    pub capacity: usize,
    pub eta: f64,
    pub c_min: usize,
    /// Priority exponent; also used for the importance-sampling weights.
    pub nu: f64,
    pub eps: f64,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            capacity: 100_000,
            eta: 0.996,
            c_min: 2500,
            nu: 0.6,
            eps: 1e-3,
        }
    }
}

impl BufferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::config("replay.capacity", "must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::config("replay.eta", "must lie in (0, 1]"));
        }
        if self.c_min == 0 || self.c_min > self.capacity {
            return Err(Error::config("replay.c_min", "must lie in 1..=capacity"));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::config(
                "replay.nu",
                "must be finite and non-negative",
            ));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("replay.eps", "must be positive"));
        }
        Ok(())
    }
}

/// Size of the recent-experience window for update `t` of `total`.
///
/// `max(⌊capacity·η^(t·1000/total)⌋, c_min)`, clamped to `buffer_len`.
pub fn ere_window(cfg: &BufferConfig, t: usize, total: usize, buffer_len: usize) -> usize {
    let total = total.max(1);
    let exponent = t as f64 * 1000.0 / total as f64;
    let c = (cfg.capacity as f64 * cfg.eta.powf(exponent)).floor() as usize;
    c.max(cfg.c_min).min(buffer_len)
}

/// Mean absolute TD error of the two critics plus `eps`.
pub fn priority_from_td(td1: f64, td2: f64, eps: f64) -> f64 {
    0.5 * (td1.abs() + td2.abs()) + eps
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub transitions: Vec<Transition>,
    /// Max-normalized, each in `(0, 1]`.
    pub is_weights: Vec<f64>,
    /// Stable insertion ids, for [`ReplayBuffer::update_priorities`].
    pub ids: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    cfg: BufferConfig,
    items: VecDeque<(Transition, f64)>,
    /// Insertion id of `items[0]`.
    first_id: u64,
    max_priority: f64,
    skipped: u64,
}

impl ReplayBuffer {
    pub fn new(cfg: BufferConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            items: VecDeque::with_capacity(cfg.capacity.min(1 << 16)),
            cfg,
            first_id: 0,
            max_priority: 0.0,
            skipped: 0,
        })
    }

    pub fn config(&self) -> &BufferConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Priority updates that targeted evicted transitions.
    pub fn skipped_updates(&self) -> u64 {
        self.skipped
    }

    /// Appends with the current max priority (1 on an empty buffer); evicts
    /// the oldest item when full. Returns the new item's id.
    pub fn push(&mut self, t: Transition) -> u64 {
        let p = if self.items.is_empty() {
            1.0
        } else {
            self.max_priority
        };
        if self.items.len() == self.cfg.capacity {
            self.items.pop_front();
            self.first_id += 1;
        }
        self.items.push_back((t, p));
        self.max_priority = self.max_priority.max(p);
        self.first_id + self.items.len() as u64 - 1
    }

    fn position(&self, id: u64) -> Option<usize> {
        let pos = id.checked_sub(self.first_id)? as usize;
        (pos < self.items.len()).then_some(pos)
    }

    pub fn get(&self, id: u64) -> Option<(&Transition, f64)> {
        self.position(id)
            .map(|i| (&self.items[i].0, self.items[i].1))
    }

    /// Sampling probabilities over the most recent `window` items, oldest first.
    pub fn window_probabilities(&self, window: usize) -> Vec<f64> {
        let start = self.items.len() - window.min(self.items.len());
        let w: Vec<f64> = self
            .items
            .range(start..)
            .map(|(_, p)| p.powf(self.cfg.nu))
            .collect();
        let sum: f64 = w.iter().sum();
        w.into_iter().map(|x| x / sum).collect()
    }

    /// Draws `batch_size` items (with replacement) from the window for update
    /// `t` of `total`, proportionally to `priority^ν`.
    pub fn sample(
        &self,
        batch_size: usize,
        t: usize,
        total: usize,
        rng: &mut Rng,
    ) -> Result<Sample> {
        if self.items.len() < batch_size || batch_size == 0 {
            return Err(Error::Underfull {
                len: self.items.len(),
                needed: batch_size.max(1),
            });
        }
        let window = ere_window(&self.cfg, t, total, self.items.len()).max(1);
        self.sample_window(batch_size, window, rng)
    }

    /// As [`sample`](Self::sample) with an explicit window size.
    pub fn sample_window(&self, batch_size: usize, window: usize, rng: &mut Rng) -> Result<Sample> {
        if self.items.len() < batch_size || window == 0 {
            return Err(Error::Underfull {
                len: self.items.len(),
                needed: batch_size,
            });
        }
        let window = window.min(self.items.len());
        let start = self.items.len() - window;
        let probs = self.window_probabilities(window);
        let mut cdf = Vec::with_capacity(window);
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        let mut picks = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let u: f64 = rng.gen::<f64>() * acc;
            let i = cdf.partition_point(|&c| c <= u).min(window - 1);
            picks.push(i);
        }
        let raw: Vec<f64> = picks
            .iter()
            .map(|&i| (1.0 / (window as f64 * probs[i])).powf(self.cfg.nu))
            .collect();
        let max = raw.iter().copied().fold(0.0, f64::max);
        Ok(Sample {
            transitions: picks
                .iter()
                .map(|&i| self.items[start + i].0.clone())
                .collect(),
            is_weights: raw.iter().map(|w| w / max).collect(),
            ids: picks
                .iter()
                .map(|&i| self.first_id + (start + i) as u64)
                .collect(),
        })
    }

    /// Replaces priorities (floored at `eps`); evicted ids are counted and skipped.
    pub fn update_priorities(&mut self, ids: &[u64], priorities: &[f64]) {
        for (&id, &p) in ids.iter().zip(priorities) {
            match self.position(id) {
                Some(i) => {
                    let p = if p.is_finite() {
                        p.max(self.cfg.eps)
                    } else {
                        self.cfg.eps
                    };
                    self.items[i].1 = p;
                    self.max_priority = self.max_priority.max(p);
                }
                None => self.skipped += 1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn tr(x: f64) -> Transition {
        Transition {
            state: vec![x],
            action: SimplexAction::uniform(2),
            reward: x,
            next_state: vec![x + 1.0],
            done: false,
        }
    }

    fn cfg(capacity: usize) -> BufferConfig {
        BufferConfig {
            capacity,
            c_min: 1,
            ..Default::default()
        }
    }

    #[test]
    fn push_evicts_oldest() {
        let mut b = ReplayBuffer::new(cfg(3)).unwrap();
        let id = b.push(tr(0.0));
        assert_eq!(b.get(id).unwrap().1, 1.0);
        assert_eq!(b.get(id).unwrap().0, &tr(0.0));
        for i in 1..4 {
            b.push(tr(i as f64));
        }
        assert_eq!(b.len(), 3);
        assert!(b.get(0).is_none());
        assert_eq!(b.get(1).unwrap().0.reward, 1.0);
    }

    #[test]
    fn new_items_get_max_priority() {
        let mut b = ReplayBuffer::new(cfg(10)).unwrap();
        let a = b.push(tr(0.0));
        b.update_priorities(&[a], &[5.0]);
        let c = b.push(tr(1.0));
        assert_eq!(b.get(c).unwrap().1, 5.0);
    }

    #[test]
    fn priority_updates() {
        let mut b = ReplayBuffer::new(cfg(2)).unwrap();
        let a = b.push(tr(0.0));
        b.update_priorities(&[a], &[0.3]);
        assert_eq!(b.get(a).unwrap().1, 0.3);
        b.update_priorities(&[a], &[-2.0]);
        assert_eq!(b.get(a).unwrap().1, b.config().eps);
        b.push(tr(1.0));
        b.push(tr(2.0));
        b.update_priorities(&[a], &[1.0]);
        assert_eq!(b.skipped_updates(), 1);
    }

    #[test]
    fn td_priority_arithmetic() {
        assert_eq!(priority_from_td(0.0, 0.0, 0.01), 0.01);
        assert_eq!(priority_from_td(1.0, -3.0, 0.0), 2.0);
    }

    #[test]
    fn window_formula() {
        let c = BufferConfig {
            capacity: 10_000,
            eta: 0.996,
            c_min: 500,
            ..Default::default()
        };
        assert_eq!(ere_window(&c, 1000, 1000, 10_000), 500);
        assert_eq!(ere_window(&c, 1, 1000, 300), 300);
        let flat = BufferConfig { eta: 1.0, ..c };
        assert_eq!(ere_window(&flat, 17, 1000, 10_000), 10_000);
    }

    #[test]
    fn window_restricts_to_recent_items() {
        let mut b = ReplayBuffer::new(cfg(10)).unwrap();
        for i in 0..6 {
            b.push(tr(i as f64));
        }
        let mut rng = seed::stream(0, "t", &[]);
        for _ in 0..200 {
            let s = b.sample_window(3, 2, &mut rng).unwrap();
            assert!(s.ids.iter().all(|&id| id >= 4));
        }
    }

    #[test]
    fn underfull_sampling_fails() {
        let mut b = ReplayBuffer::new(cfg(10)).unwrap();
        b.push(tr(0.0));
        assert!(matches!(
            b.sample(2, 1, 10, &mut seed::stream(0, "t", &[])),
            Err(Error::Underfull { .. })
        ));
    }

    #[test]
    fn zero_exponent_gives_unit_weights() {
        let mut b = ReplayBuffer::new(BufferConfig { nu: 0.0, ..cfg(8) }).unwrap();
        for i in 0..8 {
            let id = b.push(tr(i as f64));
            b.update_priorities(&[id], &[1.0 + i as f64]);
        }
        let s = b
            .sample_window(8, 8, &mut seed::stream(1, "t", &[]))
            .unwrap();
        assert!(s.is_weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(BufferConfig {
            c_min: 20,
            ..cfg(10)
        }
        .validate()
        .is_err());
        assert!(BufferConfig {
            eta: 0.0,
            ..cfg(10)
        }
        .validate()
        .is_err());
        assert!(BufferConfig {
            eps: 0.0,
            ..cfg(10)
        }
        .validate()
        .is_err());
    }
}
