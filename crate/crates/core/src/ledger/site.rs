use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::pow::pow_digest;

/// Version byte leading every canonical serialization.
pub const SITE_FORMAT_VERSION: u8 = 1;

/// Content hash identifying a site. Equal to the proof-of-work digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteId(pub [u8; 32]);

impl SiteId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(SiteId(out))
    }
}

impl fmt::Debug for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SiteId({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for SiteId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for SiteId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        SiteId::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Everything a writer supplies before parents are chosen and work is done.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteDraft {
    pub issuer_id: u64,
    pub token_id: Option<u64>,
    pub observer_id: Option<u64>,
    /// Digest of the observer roster the write was authorised against.
    pub observer_set: [u8; 32],
    pub payload: Vec<u8>,
    pub timestamp: u64,
    pub difficulty_bits: u8,
}

/// One transaction in the DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub id: SiteId,
    pub parent_ids: Vec<SiteId>,
    pub issuer_id: u64,
    pub token_id: Option<u64>,
    pub observer_id: Option<u64>,
    pub observer_set: [u8; 32],
    pub payload: Vec<u8>,
    /// Milliseconds since epoch.
    pub timestamp: u64,
    pub difficulty_bits: u8,
    pub nonce: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("record truncated at byte {0}")]
    Truncated(usize),
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("invalid option tag {0}")]
    OptionTag(u8),
    #[error("{0} trailing bytes after record")]
    Trailing(usize),
}

impl Site {
    /// Fixed field order, big-endian integers, length-prefixed byte strings:
    /// version, timestamp, issuer, token, observer, observer roster digest,
    /// payload, parents, difficulty.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        encode_canonical(
            self.timestamp,
            self.issuer_id,
            self.token_id,
            self.observer_id,
            &self.observer_set,
            &self.payload,
            &self.parent_ids,
            self.difficulty_bits,
        )
    }

    /// Hash of the canonical bytes followed by the nonce.
    pub fn compute_id(&self) -> SiteId {
        SiteId(pow_digest(&self.canonical_bytes(), self.nonce))
    }

    /// Log/wire form: canonical bytes then the 8-byte nonce. The id is implied.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.canonical_bytes();
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Site, DecodeError> {
        let mut r = Reader { bytes, pos: 0 };
        let version = r.u8()?;
        if version != SITE_FORMAT_VERSION {
            return Err(DecodeError::Version(version));
        }
        let timestamp = r.u64()?;
        let issuer_id = r.u64()?;
        let token_id = r.opt_u64()?;
        let observer_id = r.opt_u64()?;
        let observer_set = r.array32()?;
        let payload_len = r.u32()? as usize;
        let payload = r.take(payload_len)?.to_vec();
        let n_parents = r.u8()? as usize;
        let mut parent_ids = Vec::with_capacity(n_parents);
        for _ in 0..n_parents {
            parent_ids.push(SiteId(r.array32()?));
        }
        let difficulty_bits = r.u8()?;
        let nonce = r.u64()?;
        if r.pos != bytes.len() {
            return Err(DecodeError::Trailing(bytes.len() - r.pos));
        }
        let mut site = Site {
            id: SiteId([0; 32]),
            parent_ids,
            issuer_id,
            token_id,
            observer_id,
            observer_set,
            payload,
            timestamp,
            difficulty_bits,
            nonce,
        };
        site.id = site.compute_id();
        Ok(site)
    }
}

impl SiteDraft {
    pub fn canonical_bytes(&self, parent_ids: &[SiteId], timestamp: u64) -> Vec<u8> {
        encode_canonical(
            timestamp,
            self.issuer_id,
            self.token_id,
            self.observer_id,
            &self.observer_set,
            &self.payload,
            parent_ids,
            self.difficulty_bits,
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn encode_canonical(
    timestamp: u64,
    issuer_id: u64,
    token_id: Option<u64>,
    observer_id: Option<u64>,
    observer_set: &[u8; 32],
    payload: &[u8],
    parent_ids: &[SiteId],
    difficulty_bits: u8,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(96 + payload.len() + 32 * parent_ids.len());
    out.push(SITE_FORMAT_VERSION);
    out.extend_from_slice(&timestamp.to_be_bytes());
    out.extend_from_slice(&issuer_id.to_be_bytes());
    push_opt(&mut out, token_id);
    push_opt(&mut out, observer_id);
    out.extend_from_slice(observer_set);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out.push(parent_ids.len() as u8);
    for p in parent_ids {
        out.extend_from_slice(&p.0);
    }
    out.push(difficulty_bits);
    out
}

fn push_opt(out: &mut Vec<u8>, v: Option<u64>) {
    match v {
        Some(v) => {
            out.push(1);
            out.extend_from_slice(&v.to_be_bytes());
        }
        None => out.push(0),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated(self.pos))?;
        let slice = self.bytes.get(self.pos..end).ok_or(DecodeError::Truncated(self.pos))?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn array32(&mut self) -> Result<[u8; 32], DecodeError> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn opt_u64(&mut self) -> Result<Option<u64>, DecodeError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.u64()?)),
            t => Err(DecodeError::OptionTag(t)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Site {
        let mut s = Site {
            id: SiteId([0; 32]),
            parent_ids: vec![SiteId([7; 32]), SiteId([9; 32])],
            issuer_id: 42,
            token_id: Some(3),
            observer_id: None,
            observer_set: [1; 32],
            payload: b"travel time".to_vec(),
            timestamp: 1_000,
            difficulty_bits: 4,
            nonce: 17,
        };
        s.id = s.compute_id();
        s
    }

    #[test]
    fn canonical_layout_is_fixed() {
        let s = sample();
        let bytes = s.canonical_bytes();
        assert_eq!(bytes[0], SITE_FORMAT_VERSION);
        assert_eq!(&bytes[1..9], &1_000u64.to_be_bytes());
        assert_eq!(&bytes[9..17], &42u64.to_be_bytes());
        assert_eq!(bytes[17], 1);
        assert_eq!(&bytes[18..26], &3u64.to_be_bytes());
        assert_eq!(bytes[26], 0);
        // 1 + 8 + 8 + 9 + 1 + 32 + 4 + 11 + 1 + 64 + 1
        assert_eq!(bytes.len(), 140);
        assert_eq!(*bytes.last().unwrap(), 4);
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Site::from_bytes(&bytes[..bytes.len() - 1]),
            Err(DecodeError::Truncated(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(Site::from_bytes(&long), Err(DecodeError::Trailing(1)));
        let mut bad = bytes;
        bad[0] = 9;
        assert_eq!(Site::from_bytes(&bad), Err(DecodeError::Version(9)));
    }

    #[test]
    fn hex_id_round_trip() {
        let id = sample().id;
        assert_eq!(SiteId::from_hex(&id.to_hex()).unwrap(), id);
        let json = serde_json::to_string(&id).unwrap();
        assert_eq!(serde_json::from_str::<SiteId>(&json).unwrap(), id);
    }

    proptest! {
        #[test]
        fn wire_round_trip(
            issuer in any::<u64>(),
            token in proptest::option::of(any::<u64>()),
            observer in proptest::option::of(any::<u64>()),
            payload in proptest::collection::vec(any::<u8>(), 0..64),
            parents in proptest::collection::vec(any::<[u8; 32]>(), 0..3),
            ts in any::<u64>(),
            bits in 1u8..=32,
            nonce in any::<u64>(),
        ) {
            let mut s = Site {
                id: SiteId([0; 32]),
                parent_ids: parents.into_iter().map(SiteId).collect(),
                issuer_id: issuer,
                token_id: token,
                observer_id: observer,
                observer_set: [5; 32],
                payload,
                timestamp: ts,
                difficulty_bits: bits,
                nonce,
            };
            s.id = s.compute_id();
            let back = Site::from_bytes(&s.to_bytes()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
