use serde::{Deserialize, Serialize};

use super::{choose, Learner, MdpModel, PolicyTable, RlError, Transition};
use crate::network::{Action, StateId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UcbQParams {
    /// Bonus scale.
    pub c: f64,
    pub delta: f64,
    /// Episode budget entering the log term.
    pub k_max: usize,
    pub r_max: f64,
}

impl Default for UcbQParams {
    fn default() -> Self {
        UcbQParams { c: 1.0, delta: 1.0, k_max: 170, r_max: 1.0 }
    }
}

/// Episodic Q-learning with Hoeffding-style exploration bonus.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbQLearner {
    params: UcbQParams,
    n_states: usize,
    horizon: usize,
    n_pairs: usize,
    iota: f64,
    /// `[t * n_pairs + sa]`
    q: Vec<f64>,
    n: Vec<u64>,
    /// `[t * n_states + s]`, `t` in `0..=H`.
    v: Vec<f64>,
    policy: PolicyTable,
    episodes: usize,
}

impl UcbQLearner {
    pub fn new(model: &MdpModel, params: UcbQParams) -> Result<Self, RlError> {
        if !(params.delta > 0.0 && params.delta <= 1.0) {
            return Err(RlError::Delta(params.delta));
        }
        if !(params.r_max > 0.0 && params.r_max.is_finite()) {
            return Err(RlError::RMax(params.r_max));
        }
        let (s, h, sa) = (model.n_states(), model.horizon(), model.n_pairs());
        let v_max = h as f64 * params.r_max;
        let iota = (s as f64 * model.max_actions() as f64 * h as f64 * params.k_max.max(1) as f64 / params.delta).ln();
        let mut v = vec![v_max; (h + 1) * s];
        v[h * s..].iter_mut().for_each(|x| *x = 0.0);
        Ok(UcbQLearner {
            params,
            n_states: s,
            horizon: h,
            n_pairs: sa,
            iota,
            q: vec![v_max; h * sa],
            n: vec![0; h * sa],
            v,
            policy: PolicyTable::uniform(s, h, &vec![Action::Stay; s]),
            episodes: 0,
        })
    }

    pub fn v_max(&self) -> f64 {
        self.horizon as f64 * self.params.r_max
    }

    pub fn learning_rate(&self, k: u64) -> f64 {
        (self.horizon as f64 + 1.0) / (self.horizon as f64 + k as f64)
    }

    pub fn bonus(&self, k: u64) -> f64 {
        let h = self.horizon as f64;
        self.params.c * (h * h * h * self.iota / k as f64).sqrt()
    }

    pub fn q_value(&self, sa: usize, t: usize) -> f64 {
        self.q[t * self.n_pairs + sa]
    }

    pub fn value(&self, s: StateId, t: usize) -> f64 {
        self.v[t * self.n_states + s]
    }

    pub fn count(&self, sa: usize, t: usize) -> u64 {
        self.n[t * self.n_pairs + sa]
    }

    /// One update of `Q(s, a, t)` after observing `reward` and `next`.
    pub fn update(&mut self, model: &MdpModel, s: StateId, t: usize, sa: usize, reward: f64, next: StateId) {
        let k = t * self.n_pairs + sa;
        self.n[k] += 1;
        let visits = self.n[k];
        let alpha = self.learning_rate(visits);
        let target = reward + self.v[(t + 1) * self.n_states + next] + self.bonus(visits);
        self.q[k] = (1.0 - alpha) * self.q[k] + alpha * target;
        let best = model
            .slots(s)
            .map(|j| self.q[t * self.n_pairs + j])
            .fold(f64::NEG_INFINITY, f64::max);
        self.v[t * self.n_states + s] = self.v_max().min(best);
    }

    /// Greedy policy over the current Q table.
    pub fn extract_policy(&mut self, model: &MdpModel, shortest: &[Action]) {
        let mut row = Vec::with_capacity(8);
        for t in 0..self.horizon {
            for s in 0..self.n_states {
                let slots = model.slots(s);
                row.clear();
                row.extend(slots.clone().map(|sa| self.q[t * self.n_pairs + sa]));
                let acts = &model.actions[slots];
                let i = choose(&row, acts, shortest[s]);
                self.policy.set(s, t, acts[i]);
            }
        }
    }
}

impl Learner for UcbQLearner {
    fn prepare(&mut self, model: &MdpModel, shortest: &[Action]) {
        self.extract_policy(model, shortest);
    }

    fn policy(&self) -> &PolicyTable {
        &self.policy
    }

    /// Trajectories are replayed token by token, each in epoch order.
    fn absorb(&mut self, model: &MdpModel, transitions: &[Transition]) {
        let mut order: Vec<&Transition> = transitions.iter().collect();
        order.sort_by_key(|tr| (tr.token, tr.t));
        for tr in order {
            self.update(model, tr.state, tr.t, tr.slot, tr.reward, tr.next);
        }
        self.episodes += 1;
    }

    fn episodes(&self) -> usize {
        self.episodes
    }
}
