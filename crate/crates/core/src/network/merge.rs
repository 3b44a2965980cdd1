use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::turn::{assign_actions, signed_turn_angle, Action, TurnThresholds};
use super::RoadNetwork;

pub type StateId = usize;

/// A maximal one-in/one-out chain of links, the unit the learner reasons about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedState {
    pub id: StateId,
    /// Link ids, head to tail.
    pub member_links: Vec<u32>,
    /// Meters.
    pub length: f64,
    /// Sum of member red+yellow seconds.
    pub ry: f64,
    /// Free-flow traversal time, sum of member `length / free_speed`.
    pub min_travel_time: f64,
    /// Deterministic successor per allowed action; `u` maps to the state itself.
    pub out_actions: BTreeMap<Action, StateId>,
}

/// Diagnostics from [`merge_states`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub links: usize,
    pub states: usize,
    /// Connections removed as U-turns (geometric or twin reversal).
    pub uturns_removed: usize,
    /// Connections dropped because a junction offered more than five moves.
    pub overflow_dropped: usize,
    /// Weakly connected components of the state graph.
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedGraph {
    pub states: Vec<MergedState>,
    link_state: BTreeMap<u32, StateId>,
    mean_length: f64,
    #[serde(skip)]
    predecessors: Vec<Vec<StateId>>,
}

impl MergedGraph {
    /// Build directly from a list of states (ids must equal positions).
    pub fn from_states(states: Vec<MergedState>) -> Self {
        let mut link_state = BTreeMap::new();
        for s in &states {
            debug_assert_eq!(s.id, states.iter().position(|x| x.id == s.id).unwrap());
            for &l in &s.member_links {
                link_state.insert(l, s.id);
            }
        }
        let mean_length = if states.is_empty() {
            0.0
        } else {
            states.iter().map(|s| s.length).sum::<f64>() / states.len() as f64
        };
        let mut g = MergedGraph { states, link_state, mean_length, predecessors: Vec::new() };
        g.rebuild_predecessors();
        g
    }

    fn rebuild_predecessors(&mut self) {
        let mut pred = vec![Vec::new(); self.states.len()];
        for s in &self.states {
            for (&a, &t) in &s.out_actions {
                if a != Action::Stay {
                    pred[t].push(s.id);
                }
            }
        }
        for p in &mut pred {
            p.sort_unstable();
            p.dedup();
        }
        self.predecessors = pred;
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, s: StateId) -> &MergedState {
        &self.states[s]
    }

    pub fn state_of_link(&self, link: u32) -> Option<StateId> {
        self.link_state.get(&link).copied()
    }

    /// Mean state length over all states (L-bar).
    pub fn mean_length(&self) -> f64 {
        self.mean_length
    }

    pub fn successor(&self, s: StateId, a: Action) -> Option<StateId> {
        self.states[s].out_actions.get(&a).copied()
    }

    /// Allowed actions of a state in canonical order.
    pub fn actions(&self, s: StateId) -> impl Iterator<Item = Action> + '_ {
        self.states[s].out_actions.keys().copied()
    }

    pub fn action_count(&self, s: StateId) -> usize {
        self.states[s].out_actions.len()
    }

    /// Action leading from `s` to `t`, if any (Stay when `s == t`).
    pub fn action_between(&self, s: StateId, t: StateId) -> Option<Action> {
        self.states[s].out_actions.iter().find(|(_, &n)| n == t).map(|(&a, _)| a)
    }

    pub fn predecessors(&self, s: StateId) -> &[StateId] {
        &self.predecessors[s]
    }

    /// `P(next | s, a)`: a point mass on the unique successor.
    pub fn transition_probability(&self, s: StateId, a: Action, next: StateId) -> f64 {
        match self.successor(s, a) {
            Some(t) if t == next => 1.0,
            _ => 0.0,
        }
    }

    /// Successor lists without the Stay self-loop.
    pub fn move_successors(&self) -> Vec<Vec<usize>> {
        self.states
            .iter()
            .map(|s| {
                s.out_actions
                    .iter()
                    .filter(|(&a, _)| a != Action::Stay)
                    .map(|(_, &t)| t)
                    .collect()
            })
            .collect()
    }

    /// Re-index after deserialization.
    pub fn finish_load(&mut self) {
        self.rebuild_predecessors();
    }
}

/// Group nodes of a successor graph into maximal chains where each step
/// `a -> b` has `succ(a) = {b}` and `pred(b) = {a}`. Chains come back ordered
/// by their first element; pure cycles are cut at their smallest element.
pub fn contract_chains(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut pred = vec![Vec::new(); n];
    for (a, outs) in succ.iter().enumerate() {
        for &b in outs {
            pred[b].push(a);
        }
    }
    let mergeable = |a: usize, b: usize| -> bool {
        a != b && succ[a].len() == 1 && succ[a][0] == b && pred[b].len() == 1
    };
    let is_head = |x: usize| !(pred[x].len() == 1 && mergeable(pred[x][0], x));

    let mut visited = vec![false; n];
    let mut chains = Vec::new();
    let grow = |start: usize, visited: &mut Vec<bool>| {
        let mut chain = vec![start];
        visited[start] = true;
        let mut cur = start;
        while succ[cur].len() == 1 {
            let next = succ[cur][0];
            if visited[next] || !mergeable(cur, next) {
                break;
            }
            visited[next] = true;
            chain.push(next);
            cur = next;
        }
        chain
    };
    for x in 0..n {
        if !visited[x] && is_head(x) {
            chains.push(grow(x, &mut visited));
        }
    }
    for x in 0..n {
        if !visited[x] {
            chains.push(grow(x, &mut visited));
        }
    }
    chains.sort_by_key(|c| c[0]);
    chains
}

/// Remove U-turns, label every link-to-link connection with an action, and
/// contract one-in/one-out chains into states.
pub fn merge_states(network: &RoadNetwork, thresholds: &TurnThresholds) -> (MergedGraph, MergeReport) {
    let links = network.links();
    let mut outgoing: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, l) in links.iter().enumerate() {
        outgoing.entry(l.from).or_default().push(i);
    }

    let mut report = MergeReport { links: links.len(), ..Default::default() };
    let mut connections: Vec<Vec<(Action, usize)>> = Vec::with_capacity(links.len());
    for a in links {
        let h_in = network.heading(a);
        let mut cands = Vec::new();
        let mut angles = Vec::new();
        for &j in outgoing.get(&a.to).map(Vec::as_slice).unwrap_or(&[]) {
            let b = &links[j];
            if b.to == a.from {
                report.uturns_removed += 1;
                continue;
            }
            cands.push(j);
            angles.push(signed_turn_angle(h_in, network.heading(b)));
        }
        let assigned = assign_actions(&angles, thresholds);
        let mut conn = Vec::new();
        for ((j, act), theta) in cands.into_iter().zip(assigned).zip(&angles) {
            match act {
                Some(act) => conn.push((act, j)),
                None if theta.abs() > thresholds.sharp => report.uturns_removed += 1,
                None => report.overflow_dropped += 1,
            }
        }
        conn.sort();
        connections.push(conn);
    }

    let succ: Vec<Vec<usize>> =
        connections.iter().map(|c| c.iter().map(|&(_, j)| j).collect()).collect();
    let chains = contract_chains(&succ);
    let mut link_to_state = vec![0usize; links.len()];
    for (sid, chain) in chains.iter().enumerate() {
        for &l in chain {
            link_to_state[l] = sid;
        }
    }

    let states: Vec<MergedState> = chains
        .iter()
        .enumerate()
        .map(|(sid, chain)| {
            let tail = *chain.last().unwrap();
            let mut out_actions: BTreeMap<Action, StateId> = connections[tail]
                .iter()
                .map(|&(act, j)| (act, link_to_state[j]))
                .collect();
            out_actions.insert(Action::Stay, sid);
            MergedState {
                id: sid,
                member_links: chain.iter().map(|&l| links[l].id).collect(),
                length: chain.iter().map(|&l| links[l].length).sum(),
                ry: chain.iter().map(|&l| links[l].tls_ry).sum(),
                min_travel_time: chain.iter().map(|&l| links[l].length / links[l].free_speed).sum(),
                out_actions,
            }
        })
        .collect();

    let graph = MergedGraph::from_states(states);
    report.states = graph.len();
    report.components = weak_components(&graph.move_successors());
    (graph, report)
}

fn weak_components(succ: &[Vec<usize>]) -> usize {
    let mut parent: Vec<usize> = (0..succ.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for (a, outs) in succ.iter().enumerate() {
        for &b in outs {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    (0..succ.len()).filter(|&x| find(&mut parent, x) == x).count()
}
