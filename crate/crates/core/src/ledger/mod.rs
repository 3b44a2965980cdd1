//! Append-only DAG ledger. Every new site approves one or two current tips
//! and carries a proof of work over its canonical serialization.

mod log;
mod pow;
mod site;

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{read_log, write_log_record, LedgerLog, LogError};
pub use pow::{
    leading_zero_bits, meets_difficulty, pow_digest, solve_pow, solve_pow_bounded, PowError,
    PowSolution, MAX_DIFFICULTY_BITS,
};
pub use site::{DecodeError, Site, SiteDraft, SiteId, SITE_FORMAT_VERSION};

/// Reason a site fails validation against a ledger.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SiteFault {
    #[error("stored id does not match content hash")]
    IdMismatch,
    #[error("unknown parent {0}")]
    UnknownParent(SiteId),
    #[error("parent {0} is newer than the site")]
    ParentTimestamp(SiteId),
    #[error("digest has fewer than {0} leading zero bits")]
    InsufficientWork(u8),
    #[error("site has {0} parents")]
    ParentCount(usize),
    #[error("parent {0} listed twice")]
    DuplicateParent(SiteId),
    #[error("difficulty {0} out of range")]
    DifficultyRange(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("site {0} already in ledger")]
    Duplicate(SiteId),
    #[error(transparent)]
    Invalid(#[from] SiteFault),
    #[error(transparent)]
    Pow(#[from] PowError),
    #[error("first logged site is not the genesis site")]
    BadGenesis,
}

/// A structural invariant found broken by [`Ledger::check_invariants`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvariantViolation {
    #[error("approval graph contains a cycle")]
    Cycle,
    #[error("tip set differs from full scan")]
    TipMismatch,
    #[error("site {0} does not reach genesis")]
    Unreachable(SiteId),
    #[error("site {0} fails validation: {1}")]
    BadSite(SiteId, SiteFault),
}

/// Line-delimited JSON view of one site, as emitted by `ledger dump`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub id: SiteId,
    pub parents: Vec<SiteId>,
    pub issuer: u64,
    pub token: Option<u64>,
    pub timestamp: u64,
    pub difficulty_bits: u8,
}

impl From<&Site> for DumpRecord {
    fn from(s: &Site) -> Self {
        DumpRecord {
            id: s.id,
            parents: s.parent_ids.clone(),
            issuer: s.issuer_id,
            token: s.token_id,
            timestamp: s.timestamp,
            difficulty_bits: s.difficulty_bits,
        }
    }
}

/// The bootstrap site: no parents, difficulty 1, empty payload, timestamp 0.
pub fn genesis() -> Site {
    let mut site = Site {
        id: SiteId([0; 32]),
        parent_ids: Vec::new(),
        issuer_id: 0,
        token_id: None,
        observer_id: None,
        observer_set: [0; 32],
        payload: Vec::new(),
        timestamp: 0,
        difficulty_bits: 1,
        nonce: 0,
    };
    site.nonce = solve_pow(&site.canonical_bytes(), 1)
        .expect("one bit is always reachable")
        .nonce;
    site.id = site.compute_id();
    site
}

#[derive(Debug, Clone)]
pub struct Ledger {
    sites: HashMap<SiteId, Site>,
    order: Vec<SiteId>,
    tips: BTreeSet<SiteId>,
    genesis_id: SiteId,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        let g = genesis();
        let id = g.id;
        let mut sites = HashMap::new();
        sites.insert(id, g);
        Ledger {
            sites,
            order: vec![id],
            tips: BTreeSet::from([id]),
            genesis_id: id,
        }
    }

    /// Rebuild a ledger from sites in append order; the first must be genesis.
    pub fn from_sites<I: IntoIterator<Item = Site>>(sites: I) -> Result<Self, LedgerError> {
        let mut iter = sites.into_iter();
        let mut ledger = Ledger::new();
        match iter.next() {
            Some(first) if first.id == ledger.genesis_id && first == ledger.sites[&first.id] => {}
            _ => return Err(LedgerError::BadGenesis),
        }
        for site in iter {
            ledger.attach(site)?;
        }
        Ok(ledger)
    }

    pub fn genesis_id(&self) -> SiteId {
        self.genesis_id
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, id: &SiteId) -> Option<&Site> {
        self.sites.get(id)
    }

    pub fn contains(&self, id: &SiteId) -> bool {
        self.sites.contains_key(id)
    }

    pub fn tips(&self) -> &BTreeSet<SiteId> {
        &self.tips
    }

    /// Sites in the order they were attached, genesis first.
    pub fn iter(&self) -> impl Iterator<Item = &Site> + '_ {
        self.order.iter().map(move |id| &self.sites[id])
    }

    /// Two distinct tips drawn uniformly, or the single tip when only one exists.
    pub fn select_tips<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<SiteId> {
        let tips: Vec<SiteId> = self.tips.iter().copied().collect();
        if tips.len() < 2 {
            return tips;
        }
        sample(rng, tips.len(), 2).into_iter().map(|i| tips[i]).collect()
    }

    /// Select parents and solve the proof of work for a draft. The site
    /// timestamp is raised to the newest parent's if needed so causal order
    /// holds. Does not modify the ledger.
    pub fn prepare<R: Rng + ?Sized>(&self, draft: &SiteDraft, rng: &mut R) -> Result<Site, PowError> {
        let parents = self.select_tips(rng);
        let timestamp = parents
            .iter()
            .map(|p| self.sites[p].timestamp)
            .fold(draft.timestamp, u64::max);
        let bytes = draft.canonical_bytes(&parents, timestamp);
        let sol = solve_pow(&bytes, draft.difficulty_bits)?;
        let mut site = Site {
            id: SiteId([0; 32]),
            parent_ids: parents,
            issuer_id: draft.issuer_id,
            token_id: draft.token_id,
            observer_id: draft.observer_id,
            observer_set: draft.observer_set,
            payload: draft.payload.clone(),
            timestamp,
            difficulty_bits: draft.difficulty_bits,
            nonce: sol.nonce,
        };
        site.id = site.compute_id();
        Ok(site)
    }

    /// Prepare and attach in one step.
    pub fn issue<R: Rng + ?Sized>(&mut self, draft: &SiteDraft, rng: &mut R) -> Result<Site, LedgerError> {
        let site = self.prepare(draft, rng)?;
        self.attach(site.clone())?;
        Ok(site)
    }

    /// Validate then insert. The only mutation path.
    pub fn attach(&mut self, site: Site) -> Result<SiteId, LedgerError> {
        if self.sites.contains_key(&site.id) {
            return Err(LedgerError::Duplicate(site.id));
        }
        self.verify_site(&site)?;
        for p in &site.parent_ids {
            self.tips.remove(p);
        }
        let id = site.id;
        self.tips.insert(id);
        self.order.push(id);
        self.sites.insert(id, site);
        Ok(id)
    }

    /// Structural and work checks of a site against the current ledger.
    pub fn verify_site(&self, site: &Site) -> Result<(), SiteFault> {
        if site.difficulty_bits == 0 || site.difficulty_bits > MAX_DIFFICULTY_BITS {
            return Err(SiteFault::DifficultyRange(site.difficulty_bits));
        }
        let digest = pow_digest(&site.canonical_bytes(), site.nonce);
        if SiteId(digest) != site.id {
            return Err(SiteFault::IdMismatch);
        }
        if leading_zero_bits(&digest) < u32::from(site.difficulty_bits) {
            return Err(SiteFault::InsufficientWork(site.difficulty_bits));
        }
        if site.id == self.genesis_id {
            return Ok(());
        }
        match site.parent_ids.len() {
            1 | 2 => {}
            n => return Err(SiteFault::ParentCount(n)),
        }
        if site.parent_ids.len() == 2 && site.parent_ids[0] == site.parent_ids[1] {
            return Err(SiteFault::DuplicateParent(site.parent_ids[0]));
        }
        for p in &site.parent_ids {
            let parent = self.sites.get(p).ok_or(SiteFault::UnknownParent(*p))?;
            if parent.timestamp > site.timestamp {
                return Err(SiteFault::ParentTimestamp(*p));
            }
        }
        Ok(())
    }

    pub fn is_valid(&self, site: &Site) -> bool {
        self.verify_site(site).is_ok()
    }

    /// Full-scan audit: acyclicity, tip-set agreement, genesis reachability
    /// and re-verification of every stored site.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let index: HashMap<SiteId, usize> =
            self.order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let n = self.order.len();
        let mut approvers: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for (i, id) in self.order.iter().enumerate() {
            let site = &self.sites[id];
            if let Err(f) = self.verify_site(site) {
                return Err(InvariantViolation::BadSite(*id, f));
            }
            for p in &site.parent_ids {
                let j = index[p];
                approvers[j].push(i);
                indegree[i] += 1;
            }
        }

        // Kahn over parent -> child edges.
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut remaining = indegree.clone();
        let mut seen = 0;
        while let Some(i) = queue.pop_front() {
            seen += 1;
            for &c in &approvers[i] {
                remaining[c] -= 1;
                if remaining[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if seen != n {
            return Err(InvariantViolation::Cycle);
        }

        let scanned: BTreeSet<SiteId> = (0..n)
            .filter(|&i| approvers[i].is_empty())
            .map(|i| self.order[i])
            .collect();
        if scanned != self.tips {
            return Err(InvariantViolation::TipMismatch);
        }

        // Everything reachable forward from genesis reaches genesis backward.
        let g = index[&self.genesis_id];
        let mut reached = vec![false; n];
        reached[g] = true;
        let mut stack = vec![g];
        while let Some(i) = stack.pop() {
            for &c in &approvers[i] {
                if !reached[c] {
                    reached[c] = true;
                    stack.push(c);
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(InvariantViolation::Unreachable(self.order[i]));
        }
        Ok(())
    }

    pub fn dump_records(&self) -> impl Iterator<Item = DumpRecord> + '_ {
        self.iter().map(DumpRecord::from)
    }
}
