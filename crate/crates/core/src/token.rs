//! Token lifecycle and proof-of-position gating of ledger writes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ledger::{Ledger, LedgerError, PowError, Site, SiteDraft, SiteId};
use crate::network::StateId;

pub type TokenId = u64;
pub type VehicleId = u64;
pub type ObserverId = u64;

pub const DEFAULT_TTL: f64 = 600.0;

/// Vehicle account ids are offset so they never collide with observer ids in
/// the ledger's issuer field.
pub const VEHICLE_ISSUER_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenError {
    #[error("unknown token {0}")]
    UnknownToken(TokenId),
    #[error("unknown observer {0}")]
    UnknownObserver(ObserverId),
    #[error("no observer at state {0}")]
    NoObserver(StateId),
    #[error("token {token} is not held by observer {observer}")]
    NotAtObserver { token: TokenId, observer: ObserverId },
    #[error("vehicle {vehicle} is at state {at}, observer {observer} is at {expected}")]
    NotColocated { vehicle: VehicleId, observer: ObserverId, at: StateId, expected: StateId },
    #[error("vehicle {vehicle} heads to {next}, token {token} targets {target}")]
    TrajectoryMismatch { token: TokenId, vehicle: VehicleId, next: StateId, target: StateId },
    #[error("token {token} expired at {now}s (idle since {since}s, ttl {ttl}s)")]
    Expired { token: TokenId, now: f64, since: f64, ttl: f64 },
    #[error("token {token} is retired")]
    Retired { token: TokenId },
    #[error("position proof rejected: {0}")]
    Proof(#[from] PopFailure),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl From<PowError> for TokenError {
    fn from(e: PowError) -> Self {
        TokenError::Ledger(LedgerError::Pow(e))
    }
}

/// Why a deposit failed proof of position.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopFailure {
    #[error("vehicle {vehicle} does not hold token {token}")]
    NotHolder { token: TokenId, vehicle: VehicleId },
    #[error("proof names token {proof}, deposit is for {token}")]
    TokenMismatch { token: TokenId, proof: TokenId },
    #[error("proof names vehicle {proof}, depositor is {vehicle}")]
    VehicleMismatch { vehicle: VehicleId, proof: VehicleId },
    #[error("proof names observer {proof}, deposit goes to {observer}")]
    ObserverMismatch { observer: ObserverId, proof: ObserverId },
    #[error("observer {observer} sits at {at}, proof traversed {state}")]
    WrongObserver { observer: ObserverId, at: StateId, state: StateId },
    #[error("proof traversed {state}, token targeted {target}")]
    WrongState { state: StateId, target: StateId },
    #[error("exit {exit}s not after entry {entry}s")]
    Times { entry: f64, exit: f64 },
    #[error("entry {entry}s precedes collection at {collected}s")]
    BeforeCollect { entry: f64, collected: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum Holder {
    Observer(ObserverId),
    Vehicle(VehicleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub origin: StateId,
    pub destination: StateId,
    /// The next state the token wants traversed.
    pub target: StateId,
}

/// One travel-time observation carried by a token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub state: StateId,
    pub entry: f64,
    pub exit: f64,
    pub tau: f64,
}

impl Measurement {
    pub fn to_payload(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("measurement serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub route: RoutePlan,
    pub holder: Holder,
    /// State the token currently sits at (end of).
    pub position: StateId,
    pub issuing_observer: ObserverId,
    pub issued_at: f64,
    pub last_transfer_at: f64,
    pub ttl: f64,
    pub carried_data: Vec<Measurement>,
    pub retired: bool,
    collected_at: Option<f64>,
}

impl Token {
    pub fn is_expired(&self, now: f64) -> bool {
        now - self.last_transfer_at > self.ttl
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    pub id: ObserverId,
    /// The observer watches the downstream end of this state.
    pub location: StateId,
    pub held_tokens: BTreeSet<TokenId>,
}

/// A vehicle as the registry sees it: where it is and where it goes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub location: StateId,
    pub next_state: StateId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionProof {
    pub token_id: TokenId,
    pub observer_id: ObserverId,
    pub vehicle_id: VehicleId,
    pub state_traversed: StateId,
    pub entry_time: f64,
    pub exit_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Issue,
    Collect,
    Deposit,
    Expire,
    Retire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEvent {
    pub time: f64,
    pub event: EventKind,
    pub token_id: TokenId,
    pub vehicle_id: Option<VehicleId>,
    pub observer_id: Option<ObserverId>,
    pub state: StateId,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub site: Option<SiteId>,
}

/// Write the event log as line-delimited JSON.
pub fn write_events<W: Write>(mut out: W, events: &[RegistryEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Tokens, observers, and the audit trail.
#[derive(Debug, Clone, Default)]
pub struct TokenRegistry {
    tokens: BTreeMap<TokenId, Token>,
    observers: BTreeMap<ObserverId, Observer>,
    observer_at: HashMap<StateId, ObserverId>,
    events: Vec<RegistryEvent>,
    next_token: TokenId,
    roster_digest: [u8; 32],
    default_ttl: f64,
}

impl TokenRegistry {
    pub fn new(default_ttl: f64) -> Self {
        TokenRegistry { default_ttl, roster_digest: Sha256::digest([]).into(), ..Default::default() }
    }

    /// An observer at every listed state, ids in list order.
    pub fn with_observers<I: IntoIterator<Item = StateId>>(default_ttl: f64, states: I) -> Self {
        let mut r = TokenRegistry::new(default_ttl);
        for s in states {
            r.add_observer(s);
        }
        r
    }

    pub fn add_observer(&mut self, location: StateId) -> ObserverId {
        if let Some(&id) = self.observer_at.get(&location) {
            return id;
        }
        let id = self.observers.len() as ObserverId;
        self.observers.insert(id, Observer { id, location, held_tokens: BTreeSet::new() });
        self.observer_at.insert(location, id);
        let mut h = Sha256::new();
        for o in self.observers.values() {
            h.update(o.id.to_be_bytes());
            h.update((o.location as u64).to_be_bytes());
        }
        self.roster_digest = h.finalize().into();
        id
    }

    pub fn observer_set_digest(&self) -> [u8; 32] {
        self.roster_digest
    }

    pub fn observer(&self, id: ObserverId) -> Option<&Observer> {
        self.observers.get(&id)
    }

    pub fn observer_at(&self, s: StateId) -> Option<ObserverId> {
        self.observer_at.get(&s).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(&id)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> + '_ {
        self.tokens.values()
    }

    pub fn live_tokens(&self) -> usize {
        self.tokens.values().filter(|t| !t.retired).count()
    }

    pub fn events(&self) -> &[RegistryEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<RegistryEvent> {
        std::mem::take(&mut self.events)
    }

    fn log(&mut self, time: f64, event: EventKind, token: &Token, vehicle: Option<VehicleId>, site: Option<SiteId>) {
        let observer_id = match token.holder {
            Holder::Observer(o) => Some(o),
            Holder::Vehicle(_) => None,
        };
        self.events.push(RegistryEvent {
            time,
            event,
            token_id: token.id,
            vehicle_id: vehicle,
            observer_id,
            state: token.position,
            site,
        });
    }

    /// Create a token at the observer of `origin`.
    pub fn issue(&mut self, origin: StateId, destination: StateId, target: StateId, now: f64) -> Result<TokenId, TokenError> {
        self.issue_with_ttl(origin, destination, target, now, self.default_ttl)
    }

    pub fn issue_with_ttl(
        &mut self,
        origin: StateId,
        destination: StateId,
        target: StateId,
        now: f64,
        ttl: f64,
    ) -> Result<TokenId, TokenError> {
        let obs = self.observer_at(origin).ok_or(TokenError::NoObserver(origin))?;
        let id = self.next_token;
        self.next_token += 1;
        let token = Token {
            id,
            route: RoutePlan { origin, destination, target },
            holder: Holder::Observer(obs),
            position: origin,
            issuing_observer: obs,
            issued_at: now,
            last_transfer_at: now,
            ttl,
            carried_data: Vec::new(),
            retired: false,
            collected_at: None,
        };
        self.observers.get_mut(&obs).unwrap().held_tokens.insert(id);
        self.log(now, EventKind::Issue, &token, None, None);
        self.tokens.insert(id, token);
        Ok(id)
    }

    /// Change where a resting token wants to go next.
    pub fn retarget(&mut self, token: TokenId, target: StateId) -> Result<(), TokenError> {
        let t = self.tokens.get_mut(&token).ok_or(TokenError::UnknownToken(token))?;
        t.route.target = target;
        Ok(())
    }

    /// Take a token off the books, wherever it is.
    pub fn retire(&mut self, token: TokenId, now: f64) -> Result<(), TokenError> {
        let t = self.tokens.get_mut(&token).ok_or(TokenError::UnknownToken(token))?;
        if t.retired {
            return Err(TokenError::Retired { token });
        }
        t.retired = true;
        if let Holder::Observer(o) = t.holder {
            self.observers.get_mut(&o).unwrap().held_tokens.remove(&token);
        }
        let t = t.clone();
        self.log(now, EventKind::Retire, &t, None, None);
        Ok(())
    }

    fn return_home(&mut self, token: TokenId, now: f64) {
        let t = self.tokens.get_mut(&token).unwrap();
        if let Holder::Observer(o) = t.holder {
            self.observers.get_mut(&o).unwrap().held_tokens.remove(&token);
        }
        let home = t.issuing_observer;
        t.holder = Holder::Observer(home);
        t.position = self.observers[&home].location;
        t.route.target = t.route.origin;
        t.last_transfer_at = now;
        t.collected_at = None;
        self.observers.get_mut(&home).unwrap().held_tokens.insert(token);
        let t = t.clone();
        self.log(now, EventKind::Expire, &t, None, None);
    }

    /// Hand a resting token to a passing vehicle.
    pub fn collect(&mut self, token: TokenId, vehicle: &Vehicle, observer: ObserverId, now: f64) -> Result<(), TokenError> {
        let obs = self.observers.get(&observer).ok_or(TokenError::UnknownObserver(observer))?;
        let t = self.tokens.get(&token).ok_or(TokenError::UnknownToken(token))?;
        if t.retired {
            return Err(TokenError::Retired { token });
        }
        if t.holder != Holder::Observer(observer) {
            return Err(TokenError::NotAtObserver { token, observer });
        }
        if t.is_expired(now) {
            let err = TokenError::Expired { token, now, since: t.last_transfer_at, ttl: t.ttl };
            self.return_home(token, now);
            return Err(err);
        }
        if vehicle.location != obs.location {
            return Err(TokenError::NotColocated {
                vehicle: vehicle.id,
                observer,
                at: vehicle.location,
                expected: obs.location,
            });
        }
        if vehicle.next_state != t.route.target {
            return Err(TokenError::TrajectoryMismatch {
                token,
                vehicle: vehicle.id,
                next: vehicle.next_state,
                target: t.route.target,
            });
        }
        self.observers.get_mut(&observer).unwrap().held_tokens.remove(&token);
        let t = self.tokens.get_mut(&token).unwrap();
        t.holder = Holder::Vehicle(vehicle.id);
        t.last_transfer_at = now;
        t.collected_at = Some(now);
        let t = t.clone();
        self.log(now, EventKind::Collect, &t, Some(vehicle.id), None);
        Ok(())
    }

    /// Proof-of-position check for a deposit; no state changes.
    pub fn check_deposit(
        &self,
        token: TokenId,
        vehicle: VehicleId,
        observer: ObserverId,
        proof: &PositionProof,
    ) -> Result<(), TokenError> {
        let t = self.tokens.get(&token).ok_or(TokenError::UnknownToken(token))?;
        let obs = self.observers.get(&observer).ok_or(TokenError::UnknownObserver(observer))?;
        if t.retired {
            return Err(TokenError::Retired { token });
        }
        if t.holder != Holder::Vehicle(vehicle) {
            return Err(PopFailure::NotHolder { token, vehicle }.into());
        }
        if proof.token_id != token {
            return Err(PopFailure::TokenMismatch { token, proof: proof.token_id }.into());
        }
        if proof.vehicle_id != vehicle {
            return Err(PopFailure::VehicleMismatch { vehicle, proof: proof.vehicle_id }.into());
        }
        if proof.observer_id != observer {
            return Err(PopFailure::ObserverMismatch { observer, proof: proof.observer_id }.into());
        }
        if obs.location != proof.state_traversed {
            return Err(PopFailure::WrongObserver { observer, at: obs.location, state: proof.state_traversed }.into());
        }
        if proof.state_traversed != t.route.target {
            return Err(PopFailure::WrongState { state: proof.state_traversed, target: t.route.target }.into());
        }
        if !(proof.exit_time > proof.entry_time) {
            return Err(PopFailure::Times { entry: proof.entry_time, exit: proof.exit_time }.into());
        }
        let collected = t.collected_at.unwrap_or(f64::INFINITY);
        if proof.entry_time < collected {
            return Err(PopFailure::BeforeCollect { entry: proof.entry_time, collected }.into());
        }
        Ok(())
    }

    /// The ledger draft a valid deposit would write.
    pub fn deposit_draft(
        &self,
        token: TokenId,
        vehicle: VehicleId,
        observer: ObserverId,
        proof: &PositionProof,
        payload: Vec<u8>,
        difficulty_bits: u8,
    ) -> Result<SiteDraft, TokenError> {
        self.check_deposit(token, vehicle, observer, proof)?;
        Ok(SiteDraft {
            issuer_id: VEHICLE_ISSUER_BASE + vehicle,
            token_id: Some(token),
            observer_id: Some(observer),
            observer_set: self.roster_digest,
            payload,
            timestamp: (proof.exit_time * 1000.0).round() as u64,
            difficulty_bits,
        })
    }

    /// Attach an already prepared deposit site and hand the token to the
    /// observer. Rechecks proof of position first, so a stale or duplicate
    /// deposit never reaches the ledger.
    #[allow(clippy::too_many_arguments)]
    pub fn commit_deposit(
        &mut self,
        token: TokenId,
        vehicle: VehicleId,
        observer: ObserverId,
        proof: &PositionProof,
        site: Site,
        ledger: &mut Ledger,
        next_target: StateId,
    ) -> Result<SiteId, TokenError> {
        self.check_deposit(token, vehicle, observer, proof)?;
        if site.token_id != Some(token) || site.observer_id != Some(observer) {
            return Err(PopFailure::TokenMismatch { token, proof: site.token_id.unwrap_or(u64::MAX) }.into());
        }
        let id = ledger.attach(site)?;
        let t = self.tokens.get_mut(&token).unwrap();
        t.holder = Holder::Observer(observer);
        t.position = proof.state_traversed;
        t.last_transfer_at = proof.exit_time;
        t.collected_at = None;
        t.carried_data.push(Measurement {
            state: proof.state_traversed,
            entry: proof.entry_time,
            exit: proof.exit_time,
            tau: proof.exit_time - proof.entry_time,
        });
        t.route.target = next_target;
        self.observers.get_mut(&observer).unwrap().held_tokens.insert(token);
        let t = t.clone();
        self.log(proof.exit_time, EventKind::Deposit, &t, Some(vehicle), Some(id));
        Ok(id)
    }

    /// Validate, write a site, and hand the token to the observer.
    #[allow(clippy::too_many_arguments)]
    pub fn deposit<R: Rng + ?Sized>(
        &mut self,
        token: TokenId,
        vehicle: VehicleId,
        observer: ObserverId,
        proof: &PositionProof,
        payload: Vec<u8>,
        ledger: &mut Ledger,
        difficulty_bits: u8,
        next_target: StateId,
        rng: &mut R,
    ) -> Result<Site, TokenError> {
        let draft = self.deposit_draft(token, vehicle, observer, proof, payload, difficulty_bits)?;
        let site = ledger.prepare(&draft, rng)?;
        self.commit_deposit(token, vehicle, observer, proof, site.clone(), ledger, next_target)?;
        Ok(site)
    }

    /// Return every live token idle longer than its ttl to its issuing
    /// observer. Tokens already resting there are left alone.
    pub fn expire_sweep(&mut self, now: f64) -> Vec<TokenId> {
        let due: Vec<TokenId> = self
            .tokens
            .values()
            .filter(|t| !t.retired && t.is_expired(now) && t.holder != Holder::Observer(t.issuing_observer))
            .map(|t| t.id)
            .collect();
        for &id in &due {
            self.return_home(id, now);
        }
        due
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatingViolation {
    #[error("site {0} carries no token")]
    Untokened(SiteId),
    #[error("site {0} has no deposit event")]
    Orphan(SiteId),
    #[error("deposit event {index} names site {site} missing from the ledger")]
    MissingSite { index: usize, site: SiteId },
    #[error("deposit event {index} for token {token} without a matching collect")]
    NoCollect { index: usize, token: TokenId },
    #[error("site {0} is referenced by more than one deposit")]
    Reused(SiteId),
    #[error("site {site} does not match its deposit event {index}")]
    Inconsistent { index: usize, site: SiteId },
}

/// Replay the event log against the ledger: every non-genesis site must be
/// the product of exactly one collect then deposit by the same vehicle.
/// Returns the number of audited sites.
pub fn audit_write_gating(events: &[RegistryEvent], ledger: &Ledger) -> Result<usize, GatingViolation> {
    let mut held_by: HashMap<TokenId, (VehicleId, StateId)> = HashMap::new();
    let mut seen: HashMap<SiteId, usize> = HashMap::new();
    for (index, e) in events.iter().enumerate() {
        match e.event {
            EventKind::Collect => {
                if let Some(v) = e.vehicle_id {
                    held_by.insert(e.token_id, (v, e.state));
                }
            }
            EventKind::Deposit => {
                let site_id = e.site.ok_or(GatingViolation::NoCollect { index, token: e.token_id })?;
                let (v, _) = held_by
                    .remove(&e.token_id)
                    .ok_or(GatingViolation::NoCollect { index, token: e.token_id })?;
                if e.vehicle_id != Some(v) {
                    return Err(GatingViolation::NoCollect { index, token: e.token_id });
                }
                let site = ledger.get(&site_id).ok_or(GatingViolation::MissingSite { index, site: site_id })?;
                if site.token_id != Some(e.token_id)
                    || site.observer_id != e.observer_id
                    || site.issuer_id != VEHICLE_ISSUER_BASE + v
                {
                    return Err(GatingViolation::Inconsistent { index, site: site_id });
                }
                if seen.insert(site_id, index).is_some() {
                    return Err(GatingViolation::Reused(site_id));
                }
            }
            EventKind::Expire | EventKind::Retire => {
                held_by.remove(&e.token_id);
            }
            EventKind::Issue => {}
        }
    }
    let genesis = ledger.genesis_id();
    for site in ledger.iter() {
        if site.id == genesis {
            continue;
        }
        if site.token_id.is_none() {
            return Err(GatingViolation::Untokened(site.id));
        }
        if !seen.contains_key(&site.id) {
            return Err(GatingViolation::Orphan(site.id));
        }
    }
    Ok(seen.len())
}
