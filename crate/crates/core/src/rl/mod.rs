//! Finite-horizon tabular learners over the merged state graph.

mod checkpoint;
mod episode;
mod mubev;
mod reward;
mod ucbq;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Action, MergedGraph, StateId};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use episode::{
    run_episode, sample_origins, EpisodeOutcome, EpisodeRecord, TokenMove, TokenWorld, TrafficWorld, Transition,
};
pub use mubev::{evaluate_policy, MubevLearner, TIE_TOLERANCE};
pub use reward::{RewardBreakdown, RewardModel, RewardParams};
pub use ucbq::{UcbQLearner, UcbQParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RlError {
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("state {0} has no stay action")]
    MissingStay(StateId),
    #[error("state {0}: stay action must map to itself")]
    StayNotSelf(StateId),
    #[error("state {state}: action {action:?} listed twice")]
    DuplicateAction { state: StateId, action: Action },
    #[error("state {state}: successor {next} out of range")]
    UnknownSuccessor { state: StateId, next: StateId },
    #[error("delta {0} outside (0, 1]")]
    Delta(f64),
    #[error("r_max {0} must be positive")]
    RMax(f64),
    #[error("{tokens} tokens need distinct origins but only {states} states exist")]
    TooManyTokens { tokens: usize, states: usize },
    #[error("{given} fixed origins for {tokens} tokens")]
    OriginCount { given: usize, tokens: usize },
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("invalid reward parameter {name}: {value}")]
    RewardParam { name: &'static str, value: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("environment: {0}")]
    World(String),
}

/// Deterministic MDP structure: per state, the allowed actions (alphabet
/// order) and their unique successors.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    horizon: usize,
    offsets: Vec<usize>,
    actions: Vec<Action>,
    next: Vec<StateId>,
}

impl MdpModel {
    /// `rows[s]` lists `(action, successor)`; must contain `(Stay, s)`.
    pub fn from_rows(rows: Vec<Vec<(Action, StateId)>>, horizon: usize) -> Result<Self, RlError> {
        if horizon == 0 {
            return Err(RlError::Horizon);
        }
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut actions = Vec::new();
        let mut next = Vec::new();
        offsets.push(0);
        for (s, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|(a, _)| a.index());
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(RlError::DuplicateAction { state: s, action: w[0].0 });
                }
            }
            match row.iter().find(|(a, _)| *a == Action::Stay) {
                None => return Err(RlError::MissingStay(s)),
                Some(&(_, t)) if t != s => return Err(RlError::StayNotSelf(s)),
                _ => {}
            }
            for &(a, t) in &row {
                if t >= n {
                    return Err(RlError::UnknownSuccessor { state: s, next: t });
                }
                actions.push(a);
                next.push(t);
            }
            offsets.push(actions.len());
        }
        Ok(MdpModel { horizon, offsets, actions, next })
    }

    pub fn from_graph(graph: &MergedGraph, horizon: usize) -> Result<Self, RlError> {
        let rows = graph
            .states
            .iter()
            .map(|st| st.out_actions.iter().map(|(&a, &t)| (a, t)).collect())
            .collect();
        MdpModel::from_rows(rows, horizon)
    }

    pub fn n_states(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Total number of (state, action) slots.
    pub fn n_pairs(&self) -> usize {
        self.actions.len()
    }

    /// Largest per-state action count.
    pub fn max_actions(&self) -> usize {
        (0..self.n_states()).map(|s| self.action_count(s)).max().unwrap_or(0)
    }

    pub fn slots(&self, s: StateId) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn action_count(&self, s: StateId) -> usize {
        self.offsets[s + 1] - self.offsets[s]
    }

    pub fn slot_action(&self, sa: usize) -> Action {
        self.actions[sa]
    }

    pub fn slot_next(&self, sa: usize) -> StateId {
        self.next[sa]
    }

    pub fn slot(&self, s: StateId, a: Action) -> Option<usize> {
        self.slots(s).find(|&sa| self.actions[sa] == a)
    }

    pub fn next(&self, s: StateId, a: Action) -> Option<StateId> {
        self.slot(s, a).map(|sa| self.next[sa])
    }

    pub fn allows(&self, s: StateId, a: Action) -> bool {
        self.slot(s, a).is_some()
    }
}

/// Action table π(s, t), `t` zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    horizon: usize,
    actions: Vec<Action>,
}

/// JSON form: one string of `H` action symbols per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub episode: usize,
    pub horizon: usize,
    pub actions: Vec<String>,
}

impl PolicyTable {
    pub fn uniform(n_states: usize, horizon: usize, fill: &[Action]) -> Self {
        let mut actions = Vec::with_capacity(n_states * horizon);
        for _ in 0..horizon {
            actions.extend_from_slice(&fill[..n_states]);
        }
        PolicyTable { n_states, horizon, actions }
    }

    pub fn get(&self, s: StateId, t: usize) -> Action {
        self.actions[t * self.n_states + s]
    }

    pub fn set(&mut self, s: StateId, t: usize, a: Action) {
        self.actions[t * self.n_states + s] = a;
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Follow the policy from `origin` starting at epoch 0. Returns the
    /// visited states up to the first arrival at `destination`, or `None` if
    /// it is not reached within the horizon.
    pub fn rollout(&self, model: &MdpModel, origin: StateId, destination: StateId) -> Option<Vec<StateId>> {
        let mut route = vec![origin];
        let mut s = origin;
        if s == destination {
            return Some(route);
        }
        for t in 0..self.horizon {
            let next = model.next(s, self.get(s, t))?;
            if next != s {
                route.push(next);
            }
            s = next;
            if s == destination {
                return Some(route);
            }
        }
        None
    }

    pub fn snapshot(&self, episode: usize) -> PolicySnapshot {
        let actions = (0..self.n_states)
            .map(|s| (0..self.horizon).map(|t| self.get(s, t).symbol()).collect())
            .collect();
        PolicySnapshot { episode, horizon: self.horizon, actions }
    }

    pub fn from_snapshot(snap: &PolicySnapshot) -> Option<Self> {
        let n_states = snap.actions.len();
        let mut table = PolicyTable {
            n_states,
            horizon: snap.horizon,
            actions: vec![Action::Stay; n_states * snap.horizon],
        };
        for (s, row) in snap.actions.iter().enumerate() {
            let syms: Vec<char> = row.chars().collect();
            if syms.len() != snap.horizon {
                return None;
            }
            for (t, c) in syms.into_iter().enumerate() {
                table.set(s, t, Action::from_symbol(c)?);
            }
        }
        Some(table)
    }
}

/// Common face of the episodic learners.
pub trait Learner {
    /// Recompute the policy used for the coming episode.
    fn prepare(&mut self, model: &MdpModel, shortest: &[Action]);
    fn policy(&self) -> &PolicyTable;
    /// Fold one finished episode's transitions into the statistics.
    fn absorb(&mut self, model: &MdpModel, transitions: &[Transition]);
    /// Episodes absorbed so far.
    fn episodes(&self) -> usize;
}

/// Index of the chosen entry in a Q row: shortest-path action when every
/// entry ties, else the first entry within tolerance of the maximum.
pub(crate) fn choose(q: &[f64], actions: &[Action], shortest: Action) -> usize {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in q {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo <= TIE_TOLERANCE {
        if let Some(i) = actions.iter().position(|&a| a == shortest) {
            return i;
        }
    }
    q.iter().position(|&v| v >= hi - TIE_TOLERANCE).unwrap_or(0)
}
