use serde::{Deserialize, Serialize};

use super::RlError;
use crate::network::{MergedGraph, ShortestPathPolicy, StateId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub alpha_time: f64,
    pub beta: f64,
    pub w_d: f64,
    pub w_t: f64,
    pub omega: f64,
    pub r_max: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { alpha_time: 1.2, beta: 1.3, w_d: 1.0, w_t: 1.0, omega: 20.0, r_max: 1.0 }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), RlError> {
        let checks = [
            ("alpha_time", self.alpha_time, self.alpha_time >= 1.0),
            ("beta", self.beta, self.beta > 0.0),
            ("w_d", self.w_d, self.w_d >= 0.0),
            ("w_t", self.w_t, self.w_t >= 0.0),
            ("omega", self.omega, self.omega >= 0.0),
            ("r_max", self.r_max, self.r_max > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(RlError::RewardParam { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub r_d: f64,
    pub r_t: f64,
    pub total: f64,
}

/// Per-state aggregates the reward reads, frozen for one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub params: RewardParams,
    pub destination: StateId,
    /// Mean state length over all states.
    pub mean_length: f64,
    length: Vec<f64>,
    ry: Vec<f64>,
    tau_min: Vec<f64>,
    distance: Vec<f64>,
}

impl RewardModel {
    pub fn new(graph: &MergedGraph, shortest: &ShortestPathPolicy, params: RewardParams) -> Result<Self, RlError> {
        params.validate()?;
        let mean_length = graph.mean_length();
        if !(mean_length > 0.0) {
            return Err(RlError::RewardParam { name: "mean_state_length", value: mean_length });
        }
        Ok(RewardModel {
            params,
            destination: shortest.destination,
            mean_length,
            length: graph.states.iter().map(|s| s.length).collect(),
            ry: graph.states.iter().map(|s| s.ry).collect(),
            tau_min: graph.states.iter().map(|s| s.min_travel_time).collect(),
            distance: (0..graph.len()).map(|s| shortest.distance(s)).collect(),
        })
    }

    /// Build from raw per-state vectors (length, ry, tau_min, D).
    pub fn from_parts(
        params: RewardParams,
        destination: StateId,
        length: Vec<f64>,
        ry: Vec<f64>,
        tau_min: Vec<f64>,
        distance: Vec<f64>,
    ) -> Result<Self, RlError> {
        params.validate()?;
        let mean_length = length.iter().sum::<f64>() / length.len() as f64;
        Ok(RewardModel { params, destination, mean_length, length, ry, tau_min, distance })
    }

    pub fn edge_coefficient(&self, s: StateId) -> f64 {
        (self.length[s] / self.mean_length).powi(4).min(1.0)
    }

    pub fn tau_ref(&self, s: StateId) -> f64 {
        self.ry[s] + self.params.alpha_time * self.tau_min[s]
    }

    pub fn evaluate(&self, s: StateId, next: StateId, tau: f64) -> Result<RewardBreakdown, RlError> {
        let n = self.length.len();
        if s >= n {
            return Err(RlError::UnknownState(s));
        }
        if next >= n {
            return Err(RlError::UnknownState(next));
        }
        Ok(self.breakdown(s, next, tau))
    }

    pub fn breakdown(&self, s: StateId, next: StateId, tau: f64) -> RewardBreakdown {
        let p = &self.params;
        if next == s {
            let total = if s == self.destination { p.r_max } else { -p.omega };
            return RewardBreakdown { r_d: 0.0, r_t: 0.0, total };
        }
        let d = self.distance[s] - self.length[s];
        let dn = self.distance[next];
        let r_d = if d == 0.0 {
            p.r_max
        } else if !dn.is_finite() {
            -p.omega
        } else if !d.is_finite() {
            p.r_max
        } else {
            p.r_max - dn / d
        };
        let tau_ref = self.tau_ref(next);
        let mut r_t = 0.0;
        if !(tau <= tau_ref || next == self.destination) {
            r_t = -p.beta * tau / tau_ref;
            if self.ry[next] == 0.0 {
                r_t *= self.edge_coefficient(next);
            }
        }
        RewardBreakdown { r_d, r_t, total: p.w_d * r_d + p.w_t * r_t }
    }

    pub fn reward(&self, s: StateId, next: StateId, tau: f64) -> f64 {
        self.breakdown(s, next, tau).total
    }
}
