use super::{choose, Learner, MdpModel, PolicyTable, RlError, Transition};
use crate::network::{Action, StateId};

/// Absolute tolerance for treating Q entries as equal.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Optimistic backward-induction learner with shortest-path tie-breaking and
/// stationary multi-token accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct MubevLearner {
    n_states: usize,
    horizon: usize,
    n_pairs: usize,
    delta: f64,
    r_max: f64,
    /// `[t * n_pairs + sa]`
    n: Vec<u64>,
    r: Vec<f64>,
    q: Vec<f64>,
    /// `[t * n_states + s]`, `t` in `0..=H`; the last row stays zero.
    v: Vec<f64>,
    policy: PolicyTable,
    episodes: usize,
}

impl MubevLearner {
    pub fn new(model: &MdpModel, delta: f64, r_max: f64) -> Result<Self, RlError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(RlError::Delta(delta));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(RlError::RMax(r_max));
        }
        let (s, h, sa) = (model.n_states(), model.horizon(), model.n_pairs());
        Ok(MubevLearner {
            n_states: s,
            horizon: h,
            n_pairs: sa,
            delta,
            r_max,
            n: vec![0; h * sa],
            r: vec![0.0; h * sa],
            q: vec![0.0; h * sa],
            v: vec![0.0; (h + 1) * s],
            policy: PolicyTable::uniform(s, h, &vec![Action::Stay; s]),
            episodes: 0,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta / 9.0
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn v_max(&self) -> f64 {
        self.horizon as f64 * self.r_max
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn count(&self, sa: usize, t: usize) -> u64 {
        self.n[t * self.n_pairs + sa]
    }

    pub fn reward_sum(&self, sa: usize, t: usize) -> f64 {
        self.r[t * self.n_pairs + sa]
    }

    /// Overwrite one (s, a, t) cell's statistics.
    pub fn set_stats(&mut self, sa: usize, t: usize, n: u64, r: f64) {
        self.n[t * self.n_pairs + sa] = n;
        self.r[t * self.n_pairs + sa] = r;
    }

    pub fn counts(&self) -> &[u64] {
        &self.n
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.r
    }

    pub(crate) fn restore(&mut self, episodes: usize, n: Vec<u64>, r: Vec<f64>) {
        self.episodes = episodes;
        self.n = n;
        self.r = r;
    }

    /// `V̂(s, t)`, `t` zero-based in `0..=H`.
    pub fn value(&self, s: StateId, t: usize) -> f64 {
        self.v[t * self.n_states + s]
    }

    pub fn q_value(&self, sa: usize, t: usize) -> f64 {
        self.q[t * self.n_pairs + sa]
    }

    /// Confidence width for `n` visits of a pair at a state with `a_s` actions.
    pub fn phi(&self, n: u64, a_s: usize) -> f64 {
        let nf = n as f64;
        let eta1 = 2.0 * nf.max(std::f64::consts::E).ln().ln();
        let eta2 = (18.0 * self.n_states as f64 * self.horizon as f64 / self.delta_prime() * a_s as f64).ln();
        ((eta1 + eta2) / nf).sqrt()
    }

    /// Optimistic backward induction; refreshes V̂, Q̂ and the policy.
    pub fn plan(&mut self, model: &MdpModel, shortest: &[Action]) {
        let (ns, np, h) = (self.n_states, self.n_pairs, self.horizon);
        let v_max = self.v_max();
        let scale = 18.0 * ns as f64 * h as f64 / self.delta_prime();
        let phi = |n: u64, a_s: usize| {
            let nf = n as f64;
            let eta1 = 2.0 * nf.max(std::f64::consts::E).ln().ln();
            let eta2 = (scale * a_s as f64).ln();
            ((eta1 + eta2) / nf).sqrt()
        };
        let mut row = Vec::with_capacity(8);
        for t in (0..h).rev() {
            let (cur, next) = self.v.split_at_mut((t + 1) * ns);
            let v_cur = &mut cur[t * ns..];
            let v_next = &next[..ns];
            let top = v_next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v_tilde = top.min(v_max);
            // epoch number t + 1, so H - t_epoch = h - 1 - t
            let remaining = (h - 1 - t) as f64;
            for s in 0..ns {
                let slots = model.slots(s);
                let a_s = slots.len();
                row.clear();
                for sa in slots.clone() {
                    let k = t * np + sa;
                    let n = self.n[k];
                    let (mut r, mut ev) = (self.r_max, v_tilde);
                    if n > 0 {
                        let phi = phi(n, a_s);
                        let v_hat_next = v_next[model.slot_next(sa)];
                        ev = v_tilde.min(v_hat_next + remaining * phi);
                        let r_hat = self.r[k] / n as f64;
                        r = self.r_max.min(r_hat + phi);
                    }
                    let qv = r + ev;
                    self.q[k] = qv;
                    row.push(qv);
                }
                let acts = &model.actions[slots.clone()];
                let i = choose(&row, acts, shortest[s]);
                self.policy.set(s, t, acts[i]);
                v_cur[s] = row[i];
            }
        }
    }

    /// Add one transition's reward to every epoch's statistics.
    pub fn record(&mut self, sa: usize, reward: f64) {
        for t in 0..self.horizon {
            self.n[t * self.n_pairs + sa] += 1;
            self.r[t * self.n_pairs + sa] += reward;
        }
    }
}

impl Learner for MubevLearner {
    fn prepare(&mut self, model: &MdpModel, shortest: &[Action]) {
        self.plan(model, shortest);
    }

    fn policy(&self) -> &PolicyTable {
        &self.policy
    }

    fn absorb(&mut self, _model: &MdpModel, transitions: &[Transition]) {
        let mut dn = vec![0u64; self.n_pairs];
        let mut dr = vec![0.0f64; self.n_pairs];
        for tr in transitions {
            dn[tr.slot] += 1;
            dr[tr.slot] += tr.reward;
        }
        for t in 0..self.horizon {
            let base = t * self.n_pairs;
            for sa in 0..self.n_pairs {
                if dn[sa] > 0 {
                    self.n[base + sa] += dn[sa];
                    self.r[base + sa] += dr[sa];
                }
            }
        }
        self.episodes += 1;
    }

    fn episodes(&self) -> usize {
        self.episodes
    }
}

/// Finite-horizon value of a deterministic policy under per-(sa, t) rewards,
/// `V(s, t) = r(s, π(s,t), t) + V(next, t + 1)`. Indexing as in the learner.
pub fn evaluate_policy(model: &MdpModel, policy: &PolicyTable, reward: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let (ns, h) = (model.n_states(), model.horizon());
    let mut v = vec![0.0; (h + 1) * ns];
    for t in (0..h).rev() {
        for s in 0..ns {
            let sa = model.slot(s, policy.get(s, t)).expect("policy action allowed");
            v[t * ns + s] = reward(sa, t) + v[(t + 1) * ns + model.slot_next(sa)];
        }
    }
    v
}
