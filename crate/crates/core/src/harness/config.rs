use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::apow::Norm;
use crate::network::{generate_grid, GridSpec, MergedGraph, RoadNetwork, StateId, TurnThresholds};
use crate::rl::{RewardParams, UcbQParams};
use crate::token::DEFAULT_TTL;
use crate::traffic::TrafficConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Exp1 => "exp1",
            ExperimentKind::Exp2 => "exp2",
            ExperimentKind::Exp3 => "exp3",
            ExperimentKind::Exp4 => "exp4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Mubev,
    Ucbq,
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mubev" => Ok(Algorithm::Mubev),
            "ucbq" => Ok(Algorithm::Ucbq),
            other => Err(format!("unknown algorithm '{other}' (expected mubev or ucbq)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkSource {
    Grid(GridSpec),
    File(PathBuf),
}

impl Default for NetworkSource {
    fn default() -> Self {
        NetworkSource::Grid(GridSpec::default())
    }
}

/// A merged state named by id or by one of its member links `(from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateRef {
    State(StateId),
    Link([u32; 2]),
}

impl StateRef {
    pub fn resolve(&self, network: &RoadNetwork, graph: &MergedGraph) -> Option<StateId> {
        match *self {
            StateRef::State(s) => (s < graph.len()).then_some(s),
            StateRef::Link([from, to]) => network
                .links()
                .iter()
                .find(|l| l.from == from && l.to == to)
                .and_then(|l| graph.state_of_link(l.id)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JamSpec {
    pub state: StateRef,
    pub start: usize,
    pub end: usize,
}

/// A jam placed, per realization, on the first off-shortest-path state of
/// the route the token drove in the episode before `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetourJamSpec {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "model")]
pub enum RelayModel {
    /// A carrier is always waiting when a token is deposited.
    #[default]
    Instant,
    /// Carrier arrivals at each observer are Poisson with `rate` per second.
    Poisson { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApowSimConfig {
    pub d0: f64,
    pub alpha: f64,
    pub norm: Norm,
    /// Cap on per-site bits so simulated work stays cheap.
    pub max_bits: u8,
}

impl Default for ApowSimConfig {
    fn default() -> Self {
        ApowSimConfig { d0: 2.0, alpha: 0.05, norm: Norm::L2, max_bits: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LedgerConfig {
    pub enabled: bool,
    /// Site difficulty when no adaptive round is configured.
    pub difficulty_bits: u8,
    pub apow: Option<ApowSimConfig>,
    pub ttl: f64,
    /// Fraction of states with an observer; origins and the destination are
    /// always observed.
    pub observer_coverage: f64,
    pub relay: RelayModel,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            enabled: true,
            difficulty_bits: 4,
            apow: None,
            ttl: DEFAULT_TTL,
            observer_coverage: 1.0,
            relay: RelayModel::Instant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnCriterion {
    /// Relative slack over the oracle travel time.
    pub tolerance: f64,
    /// Consecutive episodes the criterion must hold.
    pub persistence: usize,
    /// Episodes after a change within which learning counts as timely.
    pub budget: usize,
    /// Episodes at each end of the run compared for incomplete trips.
    pub edge_window: usize,
}

impl Default for LearnCriterion {
    fn default() -> Self {
        LearnCriterion { tolerance: 0.10, persistence: 3, budget: 30, edge_window: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub network: NetworkSource,
    pub thresholds: TurnThresholds,
    pub origin: StateRef,
    pub destination: StateRef,
    pub jams: Vec<JamSpec>,
    pub detour_jam: Option<DetourJamSpec>,
    pub traffic: TrafficConfig,
    pub reward: RewardParams,
    pub horizon: usize,
    pub delta: f64,
    pub tokens: Vec<usize>,
    /// Start every token at `origin` (requires one token); otherwise origins
    /// are drawn without repetition each episode.
    pub fixed_origin: bool,
    pub episodes: usize,
    pub realizations: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub ucbq: UcbQParams,
    pub ledger: LedgerConfig,
    /// Release a non-learning vehicle from `origin` after every episode.
    pub test_vehicle: bool,
    pub learn: LearnCriterion,
    /// Keep per-episode environment snapshots (for trace comparison).
    pub record_environment: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::base_on(GridSpec::default(), 60)
    }
}

/// Landmarks on a grid: origin, destination and two jam sites along the
/// middle row, all as links `(from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLandmarks {
    pub origin: [u32; 2],
    pub destination: [u32; 2],
    pub first_jam: [u32; 2],
    pub second_jam: [u32; 2],
}

impl GridLandmarks {
    pub fn of(grid: &GridSpec) -> Self {
        let row = grid.rows / 2 - 1;
        let mid = grid.cols / 2 - 1;
        let link = |a: u32, b: u32| [grid.junction(row, a), grid.junction(row, b)];
        GridLandmarks {
            origin: link(1, 2),
            destination: link(grid.cols - 3, grid.cols - 2),
            first_jam: link(mid, mid + 1),
            second_jam: link((mid + 2).min(grid.cols - 4), (mid + 3).min(grid.cols - 3)),
        }
    }
}

/// Objects merge key by key; a single-key object (an enum variant) is replaced
/// when the override names a different variant; anything else is replaced.
fn merge_json(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let variant_switch = b.len() == 1 && !o.is_empty() && o.keys().all(|k| !b.contains_key(k));
            if variant_switch {
                *b = o.clone();
                return;
            }
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn field(path: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config { path: path.to_string(), message: msg.into() }
}

impl ExperimentConfig {
    /// Single token from a fixed origin, one jam on the shortest path for
    /// episodes 30 to 99 of 170.
    pub fn base_on(grid: GridSpec, horizon: usize) -> Self {
        let marks = GridLandmarks::of(&grid);
        ExperimentConfig {
            experiment: ExperimentKind::Exp1,
            origin: StateRef::Link(marks.origin),
            destination: StateRef::Link(marks.destination),
            jams: vec![JamSpec { state: StateRef::Link(marks.first_jam), start: 30, end: 99 }],
            detour_jam: None,
            network: NetworkSource::Grid(grid),
            thresholds: TurnThresholds::default(),
            traffic: TrafficConfig::default(),
            reward: RewardParams::default(),
            horizon,
            delta: 1.0,
            tokens: vec![1],
            fixed_origin: true,
            episodes: 170,
            realizations: 50,
            seed: 2020,
            algorithm: Algorithm::Mubev,
            ucbq: UcbQParams::default(),
            ledger: LedgerConfig::default(),
            test_vehicle: false,
            learn: LearnCriterion::default(),
            record_environment: false,
        }
    }

    /// Built-in defaults for each experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        Self::preset_on(kind, GridSpec::default(), 60)
    }

    pub fn preset_on(kind: ExperimentKind, grid: GridSpec, horizon: usize) -> Self {
        let c2 = StateRef::Link(GridLandmarks::of(&grid).second_jam);
        let base = ExperimentConfig::base_on(grid, horizon);
        match kind {
            ExperimentKind::Exp1 => ExperimentConfig { experiment: kind, ..base },
            ExperimentKind::Exp2 => ExperimentConfig {
                experiment: kind,
                detour_jam: Some(DetourJamSpec { start: 60, end: 99 }),
                ..base
            },
            ExperimentKind::Exp3 => ExperimentConfig {
                experiment: kind,
                jams: vec![
                    JamSpec { state: base.jams[0].state, start: 30, end: 99 },
                    JamSpec { state: c2, start: 30, end: 99 },
                ],
                tokens: vec![1, 5, 10, 20],
                fixed_origin: false,
                test_vehicle: true,
                ledger: LedgerConfig { enabled: false, ..LedgerConfig::default() },
                ..base
            },
            ExperimentKind::Exp4 => ExperimentConfig {
                experiment: kind,
                algorithm: Algorithm::Ucbq,
                ucbq: UcbQParams { c: 0.001, ..UcbQParams::default() },
                tokens: vec![1, 10],
                fixed_origin: false,
                test_vehicle: true,
                ..base
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| field("<file>", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| field("<json>", e.to_string()))
    }

    /// Preset for `kind` with a partial JSON object laid over it. A grid given
    /// under `network.grid` (and `horizon`) re-derives the preset landmarks first.
    pub fn preset_with(kind: ExperimentKind, overrides: &Value) -> Result<Self, HarnessError> {
        if !overrides.is_object() {
            return Err(field("<json>", "config must be a JSON object"));
        }
        let mut grid = serde_json::to_value(GridSpec::default())?;
        if let Some(g) = overrides.pointer("/network/grid") {
            merge_json(&mut grid, g);
        }
        let grid: GridSpec = serde_json::from_value(grid).map_err(|e| field("network.grid", e.to_string()))?;
        let horizon = match overrides.get("horizon") {
            None => 60,
            Some(h) => h.as_u64().ok_or_else(|| field("horizon", "must be a non-negative integer"))? as usize,
        };
        let mut value = serde_json::to_value(Self::preset_on(kind, grid, horizon))?;
        merge_json(&mut value, overrides);
        let mut cfg: Self = serde_json::from_value(value).map_err(|e| field("<json>", e.to_string()))?;
        cfg.experiment = kind;
        Ok(cfg)
    }

    /// [`preset_with`](Self::preset_with) reading the overrides from a file.
    pub fn load_for(kind: ExperimentKind, path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| field("<file>", format!("{}: {e}", path.display())))?;
        let overrides: Value = serde_json::from_str(&text).map_err(|e| field("<json>", e.to_string()))?;
        Self::preset_with(kind, &overrides)
    }

    /// Structural checks that need no network.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(field("episodes", "must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(field("realizations", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(field("horizon", "must be at least 1"));
        }
        if self.tokens.is_empty() {
            return Err(field("tokens", "needs at least one token count"));
        }
        for (i, &m) in self.tokens.iter().enumerate() {
            if m == 0 {
                return Err(field(&format!("tokens[{i}]"), "must be at least 1"));
            }
            if self.fixed_origin && m != 1 {
                return Err(field(&format!("tokens[{i}]"), "fixed_origin runs use exactly one token"));
            }
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(field("delta", "must lie in (0, 1]"));
        }
        self.reward
            .validate()
            .map_err(|e| field("reward", e.to_string()))?;
        if !(self.traffic.jam_speed > 0.0) {
            return Err(field("traffic.jam_speed", "must be positive"));
        }
        if !(self.traffic.noise_sigma >= 0.0) {
            return Err(field("traffic.noise_sigma", "must be non-negative"));
        }
        for (i, j) in self.jams.iter().enumerate() {
            if j.start > j.end {
                return Err(field(&format!("jams[{i}]"), "start after end"));
            }
        }
        if let Some(d) = &self.detour_jam {
            if d.start > d.end {
                return Err(field("detour_jam", "start after end"));
            }
            if d.start == 0 {
                return Err(field("detour_jam.start", "needs a preceding episode"));
            }
            if !self.fixed_origin {
                return Err(field("detour_jam", "requires fixed_origin"));
            }
        }
        if !(self.ucbq.c >= 0.0) {
            return Err(field("ucbq.c", "must be non-negative"));
        }
        if !(self.ucbq.delta > 0.0 && self.ucbq.delta <= 1.0) {
            return Err(field("ucbq.delta", "must lie in (0, 1]"));
        }
        let l = &self.ledger;
        if !(1..=32).contains(&l.difficulty_bits) {
            return Err(field("ledger.difficulty_bits", "must lie in [1, 32]"));
        }
        if !(l.ttl > 0.0) {
            return Err(field("ledger.ttl", "must be positive"));
        }
        if !(l.observer_coverage > 0.0 && l.observer_coverage <= 1.0) {
            return Err(field("ledger.observer_coverage", "must lie in (0, 1]"));
        }
        if let RelayModel::Poisson { rate } = l.relay {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(field("ledger.relay.rate", "must be positive"));
            }
        }
        if let Some(a) = &l.apow {
            if !(a.d0 > 0.0) {
                return Err(field("ledger.apow.d0", "must be positive"));
            }
            if !(a.alpha > 0.0) {
                return Err(field("ledger.apow.alpha", "must be positive"));
            }
            if !(1..=32).contains(&a.max_bits) {
                return Err(field("ledger.apow.max_bits", "must lie in [1, 32]"));
            }
        }
        if !(self.learn.tolerance >= 0.0) {
            return Err(field("learn.tolerance", "must be non-negative"));
        }
        Ok(())
    }

    pub fn load_network(&self) -> Result<RoadNetwork, HarnessError> {
        match &self.network {
            NetworkSource::Grid(spec) => {
                if spec.rows < 2 || spec.cols < 2 {
                    return Err(field("network.grid", "needs at least 2x2 junctions"));
                }
                if !(spec.spacing > 0.0 && spec.free_speed > 0.0) {
                    return Err(field("network.grid", "spacing and free_speed must be positive"));
                }
                Ok(generate_grid(spec))
            }
            NetworkSource::File(p) => RoadNetwork::load(p).map_err(|e| field("network.file", e.to_string())),
        }
    }
}
