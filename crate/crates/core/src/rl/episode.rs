use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Learner, MdpModel, RlError};
use crate::network::{Action, StateId};
use crate::traffic::{Environment, TraversalTraceRow};

/// One token step as fed back to the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub token: usize,
    /// Zero-based epoch.
    pub t: usize,
    pub state: StateId,
    pub slot: usize,
    pub next: StateId,
    pub reward: f64,
    /// Seconds; zero for stays.
    pub tau: f64,
}

/// A token leaving `from` for `to` during epoch `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenMove {
    pub token: usize,
    pub t: usize,
    pub from: StateId,
    pub to: StateId,
    pub action: Action,
    /// Where the token wants to go after arriving, per the current policy.
    pub next_target: StateId,
}

/// Everything tokens interact with while driving. The learner never writes
/// to it.
pub trait TokenWorld {
    /// `targets[m]` is token `m`'s first requested move (its origin if it stays).
    fn begin_episode(&mut self, _episode: usize, _origins: &[StateId], _targets: &[StateId]) -> Result<(), RlError> {
        Ok(())
    }

    /// Travel time of each move, in the order given.
    fn step(&mut self, t: usize, moves: &[TokenMove]) -> Result<Vec<f64>, RlError>;

    fn end_episode(&mut self, _positions: &[StateId]) -> Result<(), RlError> {
        Ok(())
    }
}

/// Bare traffic: travel times straight from the environment.
#[derive(Debug)]
pub struct TrafficWorld<'a> {
    pub env: &'a Environment,
    pub trace: Option<Vec<TraversalTraceRow>>,
}

impl<'a> TrafficWorld<'a> {
    pub fn new(env: &'a Environment) -> Self {
        TrafficWorld { env, trace: None }
    }

    pub fn traced(env: &'a Environment) -> Self {
        TrafficWorld { env, trace: Some(Vec::new()) }
    }
}

impl TokenWorld for TrafficWorld<'_> {
    fn step(&mut self, t: usize, moves: &[TokenMove]) -> Result<Vec<f64>, RlError> {
        Ok(moves
            .iter()
            .map(|m| {
                let out = self.env.traverse(m.to, t as u64);
                if let Some(trace) = self.trace.as_mut() {
                    trace.push(TraversalTraceRow {
                        episode: self.env.episode(),
                        t,
                        state: m.to,
                        tau: out.travel_time,
                        mode: out.mode,
                    });
                }
                out.travel_time
            })
            .collect())
    }
}

/// Per-token trip summary, travel counted up to the first arrival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub realization: usize,
    pub episode: usize,
    pub token_id: usize,
    pub travel_time_s: f64,
    pub travel_distance_m: f64,
    pub completed: bool,
    pub route: Vec<StateId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub origins: Vec<StateId>,
    pub records: Vec<EpisodeRecord>,
    pub transitions: Vec<Transition>,
}

/// `m` distinct states drawn uniformly.
pub fn sample_origins<R: Rng + ?Sized>(rng: &mut R, n_states: usize, m: usize) -> Result<Vec<StateId>, RlError> {
    if m > n_states {
        return Err(RlError::TooManyTokens { tokens: m, states: n_states });
    }
    Ok(sample(rng, n_states, m).into_vec())
}

/// Drive `tokens` tokens for one episode against the learner's current
/// policy, then fold the transitions into the learner.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<L, W, F, R>(
    learner: &mut L,
    model: &MdpModel,
    world: &mut W,
    reward: F,
    destination: StateId,
    lengths: &[f64],
    episode: usize,
    tokens: usize,
    fixed_origins: Option<&[StateId]>,
    rng: &mut R,
) -> Result<EpisodeOutcome, RlError>
where
    L: Learner + ?Sized,
    W: TokenWorld + ?Sized,
    F: Fn(StateId, StateId, f64) -> f64,
    R: Rng + ?Sized,
{
    let ns = model.n_states();
    if destination >= ns {
        return Err(RlError::UnknownState(destination));
    }
    let origins = match fixed_origins {
        Some(o) if o.len() != tokens => return Err(RlError::OriginCount { given: o.len(), tokens }),
        Some(o) => {
            if let Some(&bad) = o.iter().find(|&&s| s >= ns) {
                return Err(RlError::UnknownState(bad));
            }
            o.to_vec()
        }
        None => sample_origins(rng, ns, tokens)?,
    };
    let h = model.horizon();
    let policy = learner.policy().clone();
    let target_of = |s: StateId, t: usize| -> StateId {
        if t < h {
            model.next(s, policy.get(s, t)).unwrap_or(s)
        } else {
            s
        }
    };

    let first_targets: Vec<StateId> = origins.iter().map(|&s| target_of(s, 0)).collect();
    world.begin_episode(episode, &origins, &first_targets)?;

    let mut pos = origins.clone();
    let mut records: Vec<EpisodeRecord> = origins
        .iter()
        .enumerate()
        .map(|(m, &o)| EpisodeRecord {
            realization: 0,
            episode,
            token_id: m,
            travel_time_s: 0.0,
            travel_distance_m: 0.0,
            completed: o == destination,
            route: vec![o],
        })
        .collect();
    let mut transitions = Vec::with_capacity(tokens * h);
    let mut moves = Vec::with_capacity(tokens);
    let mut slots = vec![0usize; tokens];

    for t in 0..h {
        moves.clear();
        for m in 0..tokens {
            let s = pos[m];
            let a = policy.get(s, t);
            let sa = model.slot(s, a).expect("policy picks allowed actions");
            slots[m] = sa;
            let next = model.slot_next(sa);
            if next != s {
                moves.push(TokenMove { token: m, t, from: s, to: next, action: a, next_target: target_of(next, t + 1) });
            }
        }
        let taus = world.step(t, &moves)?;
        if taus.len() != moves.len() {
            return Err(RlError::World(format!("{} travel times for {} moves", taus.len(), moves.len())));
        }
        let mut mi = 0;
        for m in 0..tokens {
            let s = pos[m];
            let sa = slots[m];
            let next = model.slot_next(sa);
            let tau = if next != s {
                mi += 1;
                taus[mi - 1]
            } else {
                0.0
            };
            let r = reward(s, next, tau);
            transitions.push(Transition { token: m, t, state: s, slot: sa, next, reward: r, tau });
            let rec = &mut records[m];
            if !rec.completed && next != s {
                rec.travel_time_s += tau;
                rec.travel_distance_m += lengths[next];
                rec.route.push(next);
                rec.completed = next == destination;
            }
            pos[m] = next;
        }
    }
    world.end_episode(&pos)?;
    learner.absorb(model, &transitions);
    Ok(EpisodeOutcome { origins, records, transitions })
}
