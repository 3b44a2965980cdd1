//! Versioned binary learner checkpoint.
//!
//! Layout, all integers big-endian: magic `SPTK`, u16 version, u32 states,
//! u32 pairs, u32 horizon, u64 episodes, f64 delta, f64 r_max, one u8 action
//! count per state, then `H * pairs` u64 counts and `H * pairs` f64 sums.

use std::io::{Read, Write};

use super::{MdpModel, MubevLearner, RlError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SPTK";
pub const CHECKPOINT_VERSION: u16 = 1;

fn io_err(e: std::io::Error) -> RlError {
    RlError::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(mut out: W, model: &MdpModel, learner: &MubevLearner) -> Result<(), RlError> {
    use super::Learner;
    let mut buf = Vec::with_capacity(64 + learner.counts().len() * 16);
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_be_bytes());
    buf.extend_from_slice(&(model.n_states() as u32).to_be_bytes());
    buf.extend_from_slice(&(model.n_pairs() as u32).to_be_bytes());
    buf.extend_from_slice(&(model.horizon() as u32).to_be_bytes());
    buf.extend_from_slice(&(learner.episodes() as u64).to_be_bytes());
    buf.extend_from_slice(&learner.delta().to_be_bytes());
    buf.extend_from_slice(&learner.r_max().to_be_bytes());
    for s in 0..model.n_states() {
        buf.push(model.action_count(s) as u8);
    }
    for &n in learner.counts() {
        buf.extend_from_slice(&n.to_be_bytes());
    }
    for &r in learner.reward_sums() {
        buf.extend_from_slice(&r.to_be_bytes());
    }
    out.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], RlError> {
        let end = self.at + N;
        let s = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| RlError::Checkpoint(format!("truncated at byte {}", self.at)))?;
        self.at = end;
        Ok(s.try_into().unwrap())
    }
}

/// Load a checkpoint written for the same model shape.
pub fn read_checkpoint<Rd: Read>(mut input: Rd, model: &MdpModel) -> Result<MubevLearner, RlError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    if c.take::<4>()? != CHECKPOINT_MAGIC {
        return Err(RlError::Checkpoint("bad magic".into()));
    }
    let version = u16::from_be_bytes(c.take()?);
    if version != CHECKPOINT_VERSION {
        return Err(RlError::Checkpoint(format!("unsupported version {version}")));
    }
    let states = u32::from_be_bytes(c.take()?) as usize;
    let pairs = u32::from_be_bytes(c.take()?) as usize;
    let horizon = u32::from_be_bytes(c.take()?) as usize;
    if (states, pairs, horizon) != (model.n_states(), model.n_pairs(), model.horizon()) {
        return Err(RlError::Checkpoint(format!(
            "shape {states}x{pairs}x{horizon} does not match model {}x{}x{}",
            model.n_states(),
            model.n_pairs(),
            model.horizon()
        )));
    }
    let episodes = u64::from_be_bytes(c.take()?) as usize;
    let delta = f64::from_be_bytes(c.take()?);
    let r_max = f64::from_be_bytes(c.take()?);
    for s in 0..states {
        let [k] = c.take::<1>()?;
        if k as usize != model.action_count(s) {
            return Err(RlError::Checkpoint(format!("state {s}: {k} actions, model has {}", model.action_count(s))));
        }
    }
    let cells = horizon * pairs;
    let mut n = Vec::with_capacity(cells);
    for _ in 0..cells {
        n.push(u64::from_be_bytes(c.take()?));
    }
    let mut r = Vec::with_capacity(cells);
    for _ in 0..cells {
        r.push(f64::from_be_bytes(c.take()?));
    }
    if c.at != bytes.len() {
        return Err(RlError::Checkpoint(format!("{} trailing bytes", bytes.len() - c.at)));
    }
    let mut learner = MubevLearner::new(model, delta, r_max)?;
    learner.restore(episodes, n, r);
    Ok(learner)
}
