//! Tokens driving on the traffic environment while every traversal is
//! written to the ledger through the token registry.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::config::{LedgerConfig, RelayModel};
use crate::apow::{difficulty_to_bits, run_round, ApowRound, DataPoint};
use crate::ledger::{Ledger, SiteDraft};
use crate::network::StateId;
use crate::rl::{RlError, TokenMove, TokenWorld};
use crate::token::{
    audit_write_gating, Measurement, PositionProof, TokenError, TokenId, TokenRegistry, Vehicle, VehicleId,
};
use crate::traffic::Environment;

fn world_err(e: impl std::fmt::Display) -> RlError {
    RlError::World(e.to_string())
}

/// Counters for one realization's ledger activity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerStats {
    pub sites: usize,
    pub deposits: usize,
    pub collects: usize,
    pub relay_expiries: usize,
    pub apow_rounds: usize,
    pub difficulty_bits_total: u64,
    /// Traversals that ended at an unobserved state.
    pub carried_through: usize,
    pub max_tips: usize,
}

/// A traversal the ledger confirmed: token slot, epoch, state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositMark {
    pub episode: usize,
    pub token: usize,
    pub t: usize,
    pub state: StateId,
}

#[derive(Debug, Clone)]
struct Slot {
    id: TokenId,
    clock: f64,
    /// Vehicle carrying the token through unobserved states, if any.
    carrier: Option<VehicleId>,
    pending: Vec<Measurement>,
}

pub struct LedgerWorld {
    env: Environment,
    config: LedgerConfig,
    destination: StateId,
    pub registry: TokenRegistry,
    pub ledger: Ledger,
    rng: ChaCha8Rng,
    relay_rng: ChaCha8Rng,
    slots: Vec<Slot>,
    time_base: f64,
    next_vehicle: VehicleId,
    episode: usize,
    pub stats: LedgerStats,
    pub marks: Vec<DepositMark>,
    keep_marks: bool,
}

impl LedgerWorld {
    /// `observed` lists states that get an observer up front; origins and
    /// the destination are added when needed.
    pub fn new(
        env: Environment,
        config: LedgerConfig,
        destination: StateId,
        observed: impl IntoIterator<Item = StateId>,
        rng: ChaCha8Rng,
        relay_rng: ChaCha8Rng,
    ) -> Self {
        let mut registry = TokenRegistry::with_observers(config.ttl, observed);
        if registry.observer_at(destination).is_none() {
            registry.add_observer(destination);
        }
        LedgerWorld {
            env,
            config,
            destination,
            registry,
            ledger: Ledger::new(),
            rng,
            relay_rng,
            slots: Vec::new(),
            time_base: 0.0,
            next_vehicle: 0,
            episode: 0,
            stats: LedgerStats::default(),
            marks: Vec::new(),
            keep_marks: false,
        }
    }

    pub fn keep_marks(mut self, on: bool) -> Self {
        self.keep_marks = on;
        self
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut Environment {
        &mut self.env
    }

    pub fn into_env(self) -> Environment {
        self.env
    }

    pub fn destination(&self) -> StateId {
        self.destination
    }

    /// Every accepted site checked against the collect/deposit log.
    pub fn audit(&self) -> Result<usize, RlError> {
        audit_write_gating(self.registry.events(), &self.ledger).map_err(world_err)
    }

    fn relay_wait(&mut self) -> f64 {
        match self.config.relay {
            RelayModel::Instant => 0.0,
            RelayModel::Poisson { rate } => Exp::new(rate).map(|d| d.sample(&mut self.relay_rng)).unwrap_or(0.0),
        }
    }

    fn new_vehicle(&mut self) -> VehicleId {
        let v = self.next_vehicle;
        self.next_vehicle += 1;
        v
    }

    /// Hand the resting token of slot `m` to a fresh vehicle heading for `to`.
    fn hand_over(&mut self, m: usize, from: StateId, to: StateId) -> Result<VehicleId, RlError> {
        let wait = self.relay_wait();
        let now = self.slots[m].clock + wait;
        let vehicle = Vehicle { id: self.new_vehicle(), location: from, next_state: to };
        let observer = self.registry.observer_at(from).ok_or_else(|| world_err(format!("no observer at {from}")))?;
        self.registry.retarget(self.slots[m].id, to).map_err(world_err)?;
        match self.registry.collect(self.slots[m].id, &vehicle, observer, now) {
            Ok(()) => {}
            Err(TokenError::Expired { .. }) => {
                // the stale token went home; replace it where the trip stands
                self.stats.relay_expiries += 1;
                let old = self.slots[m].id;
                self.registry.retire(old, now).map_err(world_err)?;
                let id = self.registry.issue(from, self.destination, to, now).map_err(world_err)?;
                self.slots[m].id = id;
                self.registry.collect(id, &vehicle, observer, now).map_err(world_err)?;
            }
            Err(e) => return Err(world_err(e)),
        }
        self.stats.collects += 1;
        self.slots[m].clock = now;
        Ok(vehicle.id)
    }
}

impl TokenWorld for LedgerWorld {
    fn begin_episode(&mut self, episode: usize, origins: &[StateId], targets: &[StateId]) -> Result<(), RlError> {
        self.episode = episode;
        self.slots.clear();
        for (&o, &target) in origins.iter().zip(targets) {
            if self.registry.observer_at(o).is_none() {
                self.registry.add_observer(o);
            }
            let id = self.registry.issue(o, self.destination, target, self.time_base).map_err(world_err)?;
            self.slots.push(Slot { id, clock: self.time_base, carrier: None, pending: Vec::new() });
        }
        Ok(())
    }

    fn step(&mut self, t: usize, moves: &[TokenMove]) -> Result<Vec<f64>, RlError> {
        let mut taus = Vec::with_capacity(moves.len());
        let mut ready = Vec::new();
        for (i, mv) in moves.iter().enumerate() {
            let m = mv.token;
            let vehicle = match self.slots[m].carrier {
                Some(v) => {
                    // the deposit names the observed state the carrier reached
                    if self.registry.observer_at(mv.to).is_some() {
                        self.registry.retarget(self.slots[m].id, mv.to).map_err(world_err)?;
                    }
                    v
                }
                None => self.hand_over(m, mv.from, mv.to)?,
            };
            let tau = self.env.traverse(mv.to, t as u64).travel_time;
            taus.push(tau);
            let slot = &mut self.slots[m];
            let entry = slot.clock;
            slot.clock += tau;
            slot.pending.push(Measurement { state: mv.to, entry, exit: slot.clock, tau });
            match self.registry.observer_at(mv.to) {
                Some(observer) => {
                    slot.carrier = None;
                    let proof = PositionProof {
                        token_id: slot.id,
                        observer_id: observer,
                        vehicle_id: vehicle,
                        state_traversed: mv.to,
                        entry_time: entry,
                        exit_time: slot.clock,
                    };
                    ready.push((i, vehicle, observer, proof));
                }
                None => {
                    slot.carrier = Some(vehicle);
                    self.stats.carried_through += 1;
                }
            }
        }
        if ready.is_empty() {
            return Ok(taus);
        }

        let mut bits: BTreeMap<usize, u8> = BTreeMap::new();
        match &self.config.apow {
            Some(a) => {
                let names: Vec<String> = ready.iter().map(|(i, ..)| format!("v{}", moves[*i].token)).collect();
                let data = ready
                    .iter()
                    .zip(&names)
                    .map(|((i, ..), n)| (n.clone(), DataPoint::from_real(&[taus[*i]])))
                    .collect();
                let round = ApowRound { participants: names.clone(), data, d0: a.d0, alpha_pow: a.alpha, norm: a.norm };
                let out = run_round(&round, &mut self.rng).map_err(world_err)?;
                self.stats.apow_rounds += 1;
                for ((i, ..), n) in ready.iter().zip(&names) {
                    bits.insert(*i, difficulty_to_bits(out.parties[n].total()).min(a.max_bits));
                }
            }
            None => {
                for (i, ..) in &ready {
                    bits.insert(*i, self.config.difficulty_bits);
                }
            }
        }

        // every writer of this step sees the same snapshot
        let mut prepared = Vec::with_capacity(ready.len());
        for (i, vehicle, observer, proof) in &ready {
            let m = moves[*i].token;
            let payload = serde_json::to_vec(&self.slots[m].pending).map_err(world_err)?;
            let draft: SiteDraft = self
                .registry
                .deposit_draft(self.slots[m].id, *vehicle, *observer, proof, payload, bits[i])
                .map_err(world_err)?;
            let site = self.ledger.prepare(&draft, &mut self.rng).map_err(world_err)?;
            prepared.push(site);
        }
        for ((i, vehicle, observer, proof), site) in ready.iter().zip(prepared) {
            let mv = &moves[*i];
            let bits = site.difficulty_bits;
            self.registry
                .commit_deposit(self.slots[mv.token].id, *vehicle, *observer, proof, site, &mut self.ledger, mv.next_target)
                .map_err(world_err)?;
            self.slots[mv.token].pending.clear();
            self.stats.deposits += 1;
            self.stats.difficulty_bits_total += u64::from(bits);
            if self.keep_marks {
                self.marks.push(DepositMark { episode: self.episode, token: mv.token, t, state: mv.to });
            }
        }
        self.stats.sites = self.ledger.len();
        self.stats.max_tips = self.stats.max_tips.max(self.ledger.tips().len());
        Ok(taus)
    }

    fn end_episode(&mut self, _positions: &[StateId]) -> Result<(), RlError> {
        let end = self.slots.iter().map(|s| s.clock).fold(self.time_base, f64::max);
        for slot in &self.slots {
            let live = self.registry.token(slot.id).is_some_and(|t| !t.retired);
            if live {
                self.registry.retire(slot.id, end).map_err(world_err)?;
            }
        }
        self.time_base = end + 1.0;
        self.registry.expire_sweep(self.time_base);
        Ok(())
    }
}

/// States that get an observer for a given coverage fraction.
pub fn choose_observed<R: Rng + ?Sized>(rng: &mut R, n_states: usize, coverage: f64) -> Vec<StateId> {
    if coverage >= 1.0 {
        return (0..n_states).collect();
    }
    let k = ((n_states as f64) * coverage).round() as usize;
    let mut v = rand::seq::index::sample(rng, n_states, k.min(n_states)).into_vec();
    v.sort_unstable();
    v
}
