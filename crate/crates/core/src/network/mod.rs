//! Road graph ingestion and its contraction into the RL state graph.

mod grid;
mod merge;
mod paths;
mod turn;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{generate_grid, GridSpec};
pub use merge::{contract_chains, merge_states, MergeReport, MergedGraph, MergedState, StateId};
pub use paths::{dijkstra_to, ShortestPathPolicy, UNREACHABLE};
pub use turn::{classify_turn, signed_turn_angle, Action, TurnClass, TurnThresholds};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("link {0}: length must be > 0")]
    Length(u32),
    #[error("link {0}: free speed must be > 0")]
    Speed(u32),
    #[error("link {0}: tls_ry must be >= 0")]
    RedYellow(u32),
    #[error("link {link}: unknown node {node}")]
    UnknownNode { link: u32, node: u32 },
    #[error("duplicate {kind} id {id}")]
    Duplicate { kind: &'static str, id: u32 },
    #[error("link {0} starts and ends at the same node")]
    SelfLoop(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

/// Directed road segment between two junctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLink {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    /// Meters.
    pub length: f64,
    /// m/s.
    pub free_speed: f64,
    /// Red + yellow seconds of the controlling signal, 0 when uncontrolled.
    #[serde(default)]
    pub tls_ry: f64,
}

/// Validated road network. Links are stored in file order and addressed by
/// position (`usize`) internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<RoadLink>,
    node_index: HashMap<u32, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawNetwork {
    nodes: Vec<Node>,
    links: Vec<RoadLink>,
}

impl TryFrom<RawNetwork> for RoadNetwork {
    type Error = NetworkError;

    fn try_from(raw: RawNetwork) -> Result<Self, Self::Error> {
        RoadNetwork::new(raw.nodes, raw.links)
    }
}

impl From<RoadNetwork> for RawNetwork {
    fn from(n: RoadNetwork) -> Self {
        RawNetwork { nodes: n.nodes, links: n.links }
    }
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, links: Vec<RoadLink>) -> Result<Self, NetworkError> {
        let mut node_index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id, i).is_some() {
                return Err(NetworkError::Duplicate { kind: "node", id: n.id });
            }
        }
        let mut link_ids = HashMap::new();
        for l in &links {
            if link_ids.insert(l.id, ()).is_some() {
                return Err(NetworkError::Duplicate { kind: "link", id: l.id });
            }
            if !(l.length > 0.0) {
                return Err(NetworkError::Length(l.id));
            }
            if !(l.free_speed > 0.0) {
                return Err(NetworkError::Speed(l.id));
            }
            if !(l.tls_ry >= 0.0) {
                return Err(NetworkError::RedYellow(l.id));
            }
            for node in [l.from, l.to] {
                if !node_index.contains_key(&node) {
                    return Err(NetworkError::UnknownNode { link: l.id, node });
                }
            }
            if l.from == l.to {
                return Err(NetworkError::SelfLoop(l.id));
            }
        }
        Ok(RoadNetwork { nodes, links, node_index })
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[RoadLink] {
        &self.links
    }

    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[self.node_index[&id]]
    }

    /// Unit-free direction vector of a link.
    pub fn heading(&self, link: &RoadLink) -> (f64, f64) {
        let a = self.node(link.from);
        let b = self.node(link.to);
        (b.x - a.x, b.y - a.y)
    }
}
