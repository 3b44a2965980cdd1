use std::collections::BTreeSet;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::network::{dijkstra_to, merge_states, MergedGraph, RoadNetwork, ShortestPathPolicy, StateId};
use crate::rl::{MdpModel, RewardModel};
use crate::traffic::{CongestionSchedule, CongestionWindow, Environment};

/// Everything fixed across realizations of one experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub network: RoadNetwork,
    pub graph: MergedGraph,
    pub model: MdpModel,
    pub origin: StateId,
    pub destination: StateId,
    pub shortest: ShortestPathPolicy,
    /// Origin to destination under the shortest-path policy.
    pub sp_route: Vec<StateId>,
    pub reward: RewardModel,
    pub lengths: Vec<f64>,
    pub windows: Vec<CongestionWindow>,
}

fn bad(path: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { path: path.to_string(), message: message.into() }
}

impl Scenario {
    pub fn build(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let network = config.load_network()?;
        let (graph, _) = merge_states(&network, &config.thresholds);
        let origin = config.origin.resolve(&network, &graph).ok_or_else(|| bad("origin", "no such state or link"))?;
        let destination = config
            .destination
            .resolve(&network, &graph)
            .ok_or_else(|| bad("destination", "no such state or link"))?;
        let mut windows = Vec::new();
        for (i, j) in config.jams.iter().enumerate() {
            let state = j.state.resolve(&network, &graph).ok_or_else(|| bad(&format!("jams[{i}].state"), "no such state or link"))?;
            if state == destination {
                return Err(bad(&format!("jams[{i}].state"), "cannot jam the destination"));
            }
            windows.push(CongestionWindow { state, start: j.start, end: j.end });
        }
        let shortest = ShortestPathPolicy::new(&graph, destination);
        if !shortest.is_reachable(origin) {
            return Err(bad("destination", "unreachable from origin"));
        }
        let sp_route = shortest.route(&graph, origin, graph.len());
        if sp_route.len() - 1 > config.horizon {
            return Err(bad("horizon", format!("shortest route needs {} moves", sp_route.len() - 1)));
        }
        if let Some(i) = config.tokens.iter().position(|&m| m > graph.len()) {
            return Err(bad(&format!("tokens[{i}]"), format!("more tokens than the {} states", graph.len())));
        }
        let model = MdpModel::from_graph(&graph, config.horizon).map_err(|e| bad("network", e.to_string()))?;
        let reward = RewardModel::new(&graph, &shortest, config.reward.clone()).map_err(|e| bad("reward", e.to_string()))?;
        let lengths = graph.states.iter().map(|s| s.length).collect();
        // probe the traffic parameters against every state once
        Environment::new(&graph, config.traffic.clone(), CongestionSchedule::new(windows.clone()), 0)
            .map_err(|e| bad("traffic", e.to_string()))?;
        Ok(Scenario { config, network, graph, model, origin, destination, shortest, sp_route, reward, lengths, windows })
    }

    pub fn schedule(&self) -> CongestionSchedule {
        CongestionSchedule::new(self.windows.clone())
    }

    /// Episodes at which the jam set changes, with the first episode of
    /// the following era (exclusive end), clipped to the run length.
    pub fn change_points(windows: &[CongestionWindow], episodes: usize) -> Vec<(usize, usize)> {
        let mut marks: BTreeSet<usize> = BTreeSet::new();
        for w in windows {
            marks.insert(w.start);
            marks.insert(w.end + 1);
        }
        let sched = CongestionSchedule::new(windows.to_vec());
        let mut points: Vec<usize> = marks
            .into_iter()
            .filter(|&e| e > 0 && e < episodes && sched.congested_at(e) != sched.congested_at(e - 1))
            .collect();
        points.dedup();
        let mut out = Vec::new();
        for (i, &p) in points.iter().enumerate() {
            let end = points.get(i + 1).copied().unwrap_or(episodes);
            out.push((p, end));
        }
        out
    }

    /// Least expected origin-to-destination travel time with `jammed`
    /// congested, excluding the origin itself.
    pub fn oracle_travel_time(&self, jammed: &BTreeSet<StateId>) -> f64 {
        let cfg = &self.config.traffic;
        let cost = |s: StateId| {
            let st = &self.graph.states[s];
            let base = if jammed.contains(&s) { st.length / cfg.jam_speed } else { st.min_travel_time };
            base * (1.0 + cfg.noise_sigma / 2.0) + st.ry
        };
        let d = dijkstra_to(&self.graph, self.destination, cost);
        d[self.origin] - cost(self.origin)
    }
}
