use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::merge::{MergedGraph, StateId};
use super::turn::Action;

/// Distance reported for states that cannot reach the destination.
pub const UNREACHABLE: f64 = f64::INFINITY;

#[derive(PartialEq)]
struct Entry(f64, StateId);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Cost-to-go toward `dest` where entering-and-completing state `s` costs
/// `cost(s)`. The destination's own cost is included, so
/// `dist[dest] = cost(dest)` and `dist[s] = cost(s) + min dist[next]`.
pub fn dijkstra_to(graph: &MergedGraph, dest: StateId, cost: impl Fn(StateId) -> f64) -> Vec<f64> {
    let mut dist = vec![UNREACHABLE; graph.len()];
    dist[dest] = cost(dest);
    let mut heap = BinaryHeap::from([Entry(dist[dest], dest)]);
    while let Some(Entry(d, s)) = heap.pop() {
        if d > dist[s] {
            continue;
        }
        for &p in graph.predecessors(s) {
            let nd = d + cost(p);
            if nd < dist[p] {
                dist[p] = nd;
                heap.push(Entry(nd, p));
            }
        }
    }
    dist
}

/// Length-shortest route policy toward one destination state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortestPathPolicy {
    pub destination: StateId,
    actions: Vec<Action>,
    distance: Vec<f64>,
}

impl ShortestPathPolicy {
    pub fn new(graph: &MergedGraph, destination: StateId) -> Self {
        let distance = dijkstra_to(graph, destination, |s| graph.state(s).length);
        let actions = (0..graph.len())
            .map(|s| {
                if s == destination {
                    return Action::Stay;
                }
                let mut best = (UNREACHABLE, Action::Stay);
                for a in graph.actions(s) {
                    if a == Action::Stay {
                        continue;
                    }
                    let d = distance[graph.successor(s, a).unwrap()];
                    if d < best.0 {
                        best = (d, a);
                    }
                }
                best.1
            })
            .collect();
        ShortestPathPolicy { destination, actions, distance }
    }

    pub fn action(&self, s: StateId) -> Action {
        self.actions[s]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Member-inclusive remaining length `D(s)`; `D(dest) = L(dest)`.
    pub fn distance(&self, s: StateId) -> f64 {
        self.distance[s]
    }

    pub fn is_reachable(&self, s: StateId) -> bool {
        self.distance[s].is_finite()
    }

    /// States visited from `origin` (inclusive) until the destination or
    /// `max_steps` moves.
    pub fn route(&self, graph: &MergedGraph, origin: StateId, max_steps: usize) -> Vec<StateId> {
        let mut route = vec![origin];
        let mut s = origin;
        for _ in 0..max_steps {
            if s == self.destination || !self.is_reachable(s) {
                break;
            }
            s = graph.successor(s, self.actions[s]).unwrap();
            route.push(s);
        }
        route
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_grid, merge_states, GridSpec, Node, RoadLink, RoadNetwork, TurnThresholds};

    #[test]
    fn destination_stays() {
        let (g, _) = merge_states(&generate_grid(&GridSpec::small(3, 3)), &TurnThresholds::default());
        let sp = ShortestPathPolicy::new(&g, 4);
        assert_eq!(sp.action(4), Action::Stay);
        assert_eq!(sp.distance(4), g.state(4).length);
    }

    #[test]
    fn two_state_line() {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0 },
            Node { id: 1, x: 50.0, y: 0.0 },
            Node { id: 2, x: 100.0, y: 0.0 },
            Node { id: 3, x: 100.0, y: 20.0 },
        ];
        let mk = |id, from, to, length| RoadLink { id, from, to, length, free_speed: 10.0, tls_ry: 0.0 };
        // O = 0->1 branches to 1->2 (straight) and 1->3 (left); D = 1->3.
        let net = RoadNetwork::new(nodes, vec![mk(0, 0, 1, 50.0), mk(1, 1, 2, 50.0), mk(2, 1, 3, 20.0)]).unwrap();
        let (g, _) = merge_states(&net, &TurnThresholds::default());
        let o = g.state_of_link(0).unwrap();
        let d = g.state_of_link(2).unwrap();
        let sp = ShortestPathPolicy::new(&g, d);
        assert_eq!(g.successor(o, sp.action(o)), Some(d));
        assert_eq!(sp.distance(o), 70.0);
        let other = g.state_of_link(1).unwrap();
        assert!(!sp.is_reachable(other));
        assert_eq!(sp.action(other), Action::Stay);
        assert_eq!(sp.distance(other), UNREACHABLE);
    }
}
