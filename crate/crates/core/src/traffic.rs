//! Mesoscopic traffic environment: per-state speed regimes, a congestion
//! schedule, and seeded travel-time noise.
//!
//! Noise is drawn from a counter-based generator keyed by
//! `(seed, episode, state, draw)`, so the travel time a traversal sees never
//! depends on how many other traversals happened before it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{MergedGraph, StateId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("jam speed {0} must be positive")]
    JamSpeed(f64),
    #[error("noise sigma {0} must be finite and non-negative")]
    Noise(f64),
    #[error("schedule entry {index}: start {start} after end {end}")]
    Window { index: usize, start: usize, end: usize },
    #[error("schedule entry {index}: unknown state {state}")]
    UnknownState { index: usize, state: StateId },
    #[error("state {state}: jam speed {jam} not below free speed {free}")]
    JamNotSlower { state: StateId, jam: f64, free: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    Free,
    Congested,
}

/// Speed regime of one merged state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTrafficState {
    pub state: StateId,
    pub mode: TrafficMode,
    /// Effective free-flow speed, `length / min_travel_time`.
    pub free_speed: f64,
    pub jam_speed: f64,
    pub noise_sigma: f64,
}

/// Inclusive episode interval during which a state is jammed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CongestionWindow {
    pub state: StateId,
    pub start: usize,
    pub end: usize,
}

impl CongestionWindow {
    pub fn active(&self, episode: usize) -> bool {
        self.start <= episode && episode <= self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CongestionSchedule {
    pub entries: Vec<CongestionWindow>,
}

impl CongestionSchedule {
    pub fn new(entries: Vec<CongestionWindow>) -> Self {
        CongestionSchedule { entries }
    }

    pub fn validate(&self, n_states: usize) -> Result<(), TrafficError> {
        for (index, w) in self.entries.iter().enumerate() {
            if w.start > w.end {
                return Err(TrafficError::Window { index, start: w.start, end: w.end });
            }
            if w.state >= n_states {
                return Err(TrafficError::UnknownState { index, state: w.state });
            }
        }
        Ok(())
    }

    /// States jammed during `episode`; any active entry suffices.
    pub fn congested_at(&self, episode: usize) -> BTreeSet<StateId> {
        self.entries.iter().filter(|w| w.active(episode)).map(|w| w.state).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    /// m/s.
    pub jam_speed: f64,
    pub noise_sigma: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig { jam_speed: 1.7, noise_sigma: 0.15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraversalOutcome {
    pub state: StateId,
    /// Seconds.
    pub travel_time: f64,
    /// Meters.
    pub distance: f64,
    pub mode: TrafficMode,
}

/// One traversal row of the trace output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalTraceRow {
    pub episode: usize,
    pub t: usize,
    pub state: StateId,
    pub tau: f64,
    pub mode: TrafficMode,
}

/// What the environment looked like in one episode, independent of who drove.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSnapshot {
    pub episode: usize,
    pub congested: Vec<StateId>,
    /// Background noise draw `u` of every state at draw index 0, as raw bits.
    pub background: Vec<u64>,
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform [0, 1) sample addressed by a key tuple.
pub fn keyed_uniform(seed: u64, episode: u64, state: u64, draw: u64) -> f64 {
    let mut h = mix64(seed);
    h = mix64(h ^ episode);
    h = mix64(h ^ state);
    h = mix64(h ^ draw);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Free-mode travel time for a state of `length` at `speed` (no noise, no RY).
pub fn base_travel_time(length: f64, speed: f64) -> f64 {
    length / speed
}

/// `(L / v) * (1 + u) + ry` with `u = noise_sigma * unit`.
pub fn travel_time(length: f64, speed: f64, ry: f64, noise_sigma: f64, unit: f64) -> f64 {
    (length / speed) * (1.0 + noise_sigma * unit) + ry
}

/// One realization's traffic. Owns no learner state; tokens only read it.
#[derive(Debug, Clone)]
pub struct Environment {
    seed: u64,
    config: TrafficConfig,
    schedule: CongestionSchedule,
    lengths: Vec<f64>,
    free_times: Vec<f64>,
    ry: Vec<f64>,
    modes: Vec<TrafficMode>,
    episode: usize,
    record_snapshots: bool,
    snapshots: Vec<EnvironmentSnapshot>,
}

impl Environment {
    pub fn new(
        graph: &MergedGraph,
        config: TrafficConfig,
        schedule: CongestionSchedule,
        seed: u64,
    ) -> Result<Self, TrafficError> {
        if !(config.jam_speed > 0.0 && config.jam_speed.is_finite()) {
            return Err(TrafficError::JamSpeed(config.jam_speed));
        }
        if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
            return Err(TrafficError::Noise(config.noise_sigma));
        }
        schedule.validate(graph.len())?;
        let lengths: Vec<f64> = graph.states.iter().map(|s| s.length).collect();
        let free_times: Vec<f64> = graph.states.iter().map(|s| s.min_travel_time).collect();
        for (s, (&l, &t)) in lengths.iter().zip(&free_times).enumerate() {
            let free = l / t;
            if config.jam_speed >= free {
                return Err(TrafficError::JamNotSlower { state: s, jam: config.jam_speed, free });
            }
        }
        Ok(Environment {
            seed,
            config,
            schedule,
            ry: graph.states.iter().map(|s| s.ry).collect(),
            modes: vec![TrafficMode::Free; lengths.len()],
            lengths,
            free_times,
            episode: 0,
            record_snapshots: false,
            snapshots: Vec::new(),
        })
    }

    /// Keep an [`EnvironmentSnapshot`] for every scheduled episode.
    pub fn with_snapshots(mut self, on: bool) -> Self {
        self.record_snapshots = on;
        self
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.config
    }

    pub fn schedule(&self) -> &CongestionSchedule {
        &self.schedule
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn mode(&self, s: StateId) -> TrafficMode {
        self.modes[s]
    }

    pub fn modes(&self) -> &[TrafficMode] {
        &self.modes
    }

    /// Free-flow time of a state: per-member `length / free_speed` summed.
    pub fn min_travel_time(&self, s: StateId) -> f64 {
        self.free_times[s]
    }

    pub fn link_state(&self, s: StateId) -> LinkTrafficState {
        LinkTrafficState {
            state: s,
            mode: self.modes[s],
            free_speed: self.lengths[s] / self.free_times[s],
            jam_speed: self.config.jam_speed,
            noise_sigma: self.config.noise_sigma,
        }
    }

    /// Append a window; takes effect from the next [`Environment::step_schedule`].
    pub fn add_window(&mut self, w: CongestionWindow) -> Result<(), TrafficError> {
        let index = self.schedule.entries.len();
        if w.start > w.end {
            return Err(TrafficError::Window { index, start: w.start, end: w.end });
        }
        if w.state >= self.modes.len() {
            return Err(TrafficError::UnknownState { index, state: w.state });
        }
        self.schedule.entries.push(w);
        Ok(())
    }

    /// Apply the schedule for `episode`.
    pub fn step_schedule(&mut self, episode: usize) -> &[TrafficMode] {
        self.episode = episode;
        let jammed = self.schedule.congested_at(episode);
        for (s, m) in self.modes.iter_mut().enumerate() {
            *m = if jammed.contains(&s) { TrafficMode::Congested } else { TrafficMode::Free };
        }
        if self.record_snapshots {
            let background = (0..self.modes.len())
                .map(|s| keyed_uniform(self.seed, episode as u64, s as u64, 0).to_bits())
                .collect();
            self.snapshots.push(EnvironmentSnapshot {
                episode,
                congested: jammed.into_iter().collect(),
                background,
            });
        }
        &self.modes
    }

    /// Expected travel time under the current modes (noise at its mean).
    pub fn expected_travel_time(&self, s: StateId) -> f64 {
        let base = match self.modes[s] {
            TrafficMode::Free => self.free_times[s],
            TrafficMode::Congested => self.lengths[s] / self.config.jam_speed,
        };
        base * (1.0 + self.config.noise_sigma / 2.0) + self.ry[s]
    }

    /// Traverse state `s` in the current episode. `draw` distinguishes
    /// traversals of the same state within an episode.
    pub fn traverse(&self, s: StateId, draw: u64) -> TraversalOutcome {
        let unit = keyed_uniform(self.seed, self.episode as u64, s as u64, draw);
        let mode = self.modes[s];
        let tau = match mode {
            TrafficMode::Free => self.free_times[s] * (1.0 + self.config.noise_sigma * unit) + self.ry[s],
            TrafficMode::Congested => {
                travel_time(self.lengths[s], self.config.jam_speed, self.ry[s], self.config.noise_sigma, unit)
            }
        };
        TraversalOutcome { state: s, travel_time: tau, distance: self.lengths[s], mode }
    }

    pub fn snapshots(&self) -> &[EnvironmentSnapshot] {
        &self.snapshots
    }

    pub fn take_snapshots(&mut self) -> Vec<EnvironmentSnapshot> {
        std::mem::take(&mut self.snapshots)
    }
}
