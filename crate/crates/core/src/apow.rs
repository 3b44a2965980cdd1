//! Adaptive proof-of-work.
//!
//! A writer whose data point sits far from the round mean pays more work:
//! `d_w(x, mean, d0) = d0 + alpha * ||x - mean||`. The mean is obtained with an
//! additive fragment exchange so no participant learns another's raw point.
//!
//! Data points are fixed-point (scale 10^6) so fragment sums are exact.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed-point scale of [`DataPoint`] coordinates.
pub const FIXED_POINT_SCALE: i64 = 1_000_000;

/// Largest accepted coordinate magnitude (fixed-point units).
pub const MAX_COORDINATE: i64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApowError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("fragment count must be at least 1")]
    NoFragments,
    #[error("round has no participants")]
    NoParticipants,
    #[error("participant {0} listed twice")]
    DuplicateParticipant(String),
    #[error("no data for participant {0}")]
    MissingData(String),
    #[error("data supplied for non-participant {0}")]
    UnknownParticipant(String),
    #[error("d0 must be > 0, got {0}")]
    BaseDifficulty(f64),
    #[error("alpha must be > 0, got {0}")]
    Alpha(f64),
    #[error("coordinate {0} outside supported range")]
    Range(i64),
    #[error("data point must have at least one coordinate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Norm {
    #[serde(alias = "l1")]
    L1,
    #[default]
    #[serde(alias = "l2")]
    L2,
    #[serde(alias = "linf")]
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];

    fn of_f64(self, v: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::L1 => v.map(f64::abs).sum(),
            Norm::L2 => v.map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.map(f64::abs).fold(0.0, f64::max),
        }
    }
}

/// Point in R^n stored as fixed-point integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataPoint(pub Vec<i64>);

impl DataPoint {
    pub fn from_real(values: &[f64]) -> Self {
        DataPoint(
            values
                .iter()
                .map(|v| (v * FIXED_POINT_SCALE as f64).round() as i64)
                .collect(),
        )
    }

    pub fn zeros(dim: usize) -> Self {
        DataPoint(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_real(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64 / FIXED_POINT_SCALE as f64).collect()
    }

    fn check_dim(&self, other: &DataPoint) -> Result<(), ApowError> {
        if self.dim() != other.dim() {
            return Err(ApowError::Dimension(self.dim(), other.dim()));
        }
        Ok(())
    }
}

/// Mean kept as an exact rational: `sum / count` per coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactMean {
    pub sum: Vec<i128>,
    pub count: u64,
}

impl ExactMean {
    pub fn of<'a, I: IntoIterator<Item = &'a DataPoint>>(points: I, dim: usize) -> Self {
        let mut sum = vec![0i128; dim];
        let mut count = 0;
        for p in points {
            for (s, &v) in sum.iter_mut().zip(&p.0) {
                *s += i128::from(v);
            }
            count += 1;
        }
        ExactMean { sum, count }
    }

    /// This mean divided by `n` (still exact).
    pub fn scaled_down(&self, n: u64) -> Self {
        ExactMean { sum: self.sum.clone(), count: self.count * n }
    }

    pub fn to_real(&self) -> Vec<f64> {
        self.sum
            .iter()
            .map(|&s| s as f64 / (self.count as f64 * FIXED_POINT_SCALE as f64))
            .collect()
    }

    /// `count * x - sum`, the deviation of `x` scaled by the denominator.
    fn scaled_deviation(&self, x: &DataPoint) -> Vec<i128> {
        x.0.iter()
            .zip(&self.sum)
            .map(|(&v, &s)| i128::from(v) * i128::from(self.count) - s)
            .collect()
    }
}

/// `d0 + alpha * ||x - mean||` in real units.
pub fn difficulty(
    x: &DataPoint,
    mean: &DataPoint,
    d0: f64,
    alpha_pow: f64,
    norm: Norm,
) -> Result<f64, ApowError> {
    x.check_dim(mean)?;
    let dist = norm.of_f64(
        x.0.iter()
            .zip(&mean.0)
            .map(|(&a, &b)| (a - b) as f64 / FIXED_POINT_SCALE as f64),
    );
    Ok(d0 + alpha_pow * dist)
}

/// [`difficulty`] against an exact rational mean.
pub fn difficulty_exact(
    x: &DataPoint,
    mean: &ExactMean,
    d0: f64,
    alpha_pow: f64,
    norm: Norm,
) -> Result<f64, ApowError> {
    if x.dim() != mean.sum.len() {
        return Err(ApowError::Dimension(x.dim(), mean.sum.len()));
    }
    let denom = mean.count as f64 * FIXED_POINT_SCALE as f64;
    let dist = norm.of_f64(mean.scaled_deviation(x).into_iter().map(|v| v as f64 / denom));
    Ok(d0 + alpha_pow * dist)
}

/// Real difficulty to whole leading-zero bits: round half away from zero,
/// clamped to [1, 32].
pub fn difficulty_to_bits(d: f64) -> u8 {
    if !(d > 0.0) {
        return 1;
    }
    d.round().clamp(1.0, 32.0) as u8
}

/// The `n` additive shares of one participant's point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentSet {
    pub owner: String,
    pub fragments: Vec<DataPoint>,
}

impl FragmentSet {
    pub fn sum(&self) -> DataPoint {
        let dim = self.fragments.first().map_or(0, DataPoint::dim);
        let mut out = vec![0i64; dim];
        for f in &self.fragments {
            for (o, v) in out.iter_mut().zip(&f.0) {
                *o += v;
            }
        }
        DataPoint(out)
    }
}

/// Split `x` into `n` integer shares. The first `n - 1` are uniform on
/// `[-(2|x_c| + 2^20), 2|x_c| + 2^20]` per coordinate, the last is the
/// residual. An all-equal split is redrawn.
pub fn fragment<R: Rng + ?Sized>(
    owner: &str,
    x: &DataPoint,
    n: usize,
    rng: &mut R,
) -> Result<FragmentSet, ApowError> {
    if n < 1 {
        return Err(ApowError::NoFragments);
    }
    if let Some(&bad) = x.0.iter().find(|v| v.abs() > MAX_COORDINATE) {
        return Err(ApowError::Range(bad));
    }
    if n == 1 {
        return Ok(FragmentSet { owner: owner.to_string(), fragments: vec![x.clone()] });
    }
    loop {
        let mut fragments = Vec::with_capacity(n);
        let mut residual = x.0.clone();
        for _ in 0..n - 1 {
            let f: Vec<i64> = x
                .0
                .iter()
                .map(|&c| {
                    let bound = 2 * c.abs() + (1 << 20);
                    rng.gen_range(-bound..=bound)
                })
                .collect();
            for (r, v) in residual.iter_mut().zip(&f) {
                *r -= v;
            }
            fragments.push(DataPoint(f));
        }
        fragments.push(DataPoint(residual));
        if fragments.windows(2).any(|w| w[0] != w[1]) {
            return Ok(FragmentSet { owner: owner.to_string(), fragments });
        }
    }
}

/// Input of one adaptive proof-of-work round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApowRound {
    pub participants: Vec<String>,
    pub data: BTreeMap<String, DataPoint>,
    pub d0: f64,
    #[serde(rename = "alpha")]
    pub alpha_pow: f64,
    #[serde(default)]
    pub norm: Norm,
}

impl ApowRound {
    pub fn validate(&self) -> Result<usize, ApowError> {
        if self.participants.is_empty() {
            return Err(ApowError::NoParticipants);
        }
        if !(self.d0 > 0.0) {
            return Err(ApowError::BaseDifficulty(self.d0));
        }
        if !(self.alpha_pow > 0.0) {
            return Err(ApowError::Alpha(self.alpha_pow));
        }
        let mut seen = HashSet::new();
        for p in &self.participants {
            if !seen.insert(p) {
                return Err(ApowError::DuplicateParticipant(p.clone()));
            }
        }
        if let Some(extra) = self.data.keys().find(|k| !seen.contains(k)) {
            return Err(ApowError::UnknownParticipant(extra.clone()));
        }
        let first = self
            .data
            .get(&self.participants[0])
            .ok_or_else(|| ApowError::MissingData(self.participants[0].clone()))?;
        if first.dim() == 0 {
            return Err(ApowError::Empty);
        }
        for p in &self.participants {
            let x = self.data.get(p).ok_or_else(|| ApowError::MissingData(p.clone()))?;
            first.check_dim(x)?;
            if let Some(&bad) = x.0.iter().find(|v| v.abs() > MAX_COORDINATE) {
                return Err(ApowError::Range(bad));
            }
        }
        Ok(first.dim())
    }
}

/// One entry of the simulated exchange, in the order it happened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    /// Step 1: share `x_{from,to}` sent privately.
    Fragment { from: String, to: String, value: DataPoint },
    /// Step 2: partial sum `c_from` broadcast to everyone.
    PartialSum { from: String, value: DataPoint },
    /// Step 4: `certifier` vouches that `subject` finished its `step`-th sub-puzzle.
    Attestation { certifier: String, subject: String, step: usize, completed: bool },
}

/// What one participant ends the round with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyOutcome {
    pub mean: ExactMean,
    pub mean_real: Vec<f64>,
    /// `d_w(x_ik, mean/N, d0/N)` for k = 1..N.
    pub sub_difficulties: Vec<f64>,
    /// Single-step reference `d_w(x_i, mean, d0)`.
    pub single_step: f64,
    /// Own shares, kept so the split bound can be audited.
    #[serde(skip)]
    pub fragments: Vec<DataPoint>,
}

impl PartyOutcome {
    pub fn total(&self) -> f64 {
        self.sub_difficulties.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub transcript: Vec<Message>,
    pub parties: BTreeMap<String, PartyOutcome>,
}

/// Simulate the fragment exchange for every participant and hand each one
/// its N sub-difficulties.
pub fn run_round<R: Rng + ?Sized>(round: &ApowRound, rng: &mut R) -> Result<RoundResult, ApowError> {
    let dim = round.validate()?;
    let n = round.participants.len();
    let mut transcript = Vec::new();

    let sets: Vec<FragmentSet> = round
        .participants
        .iter()
        .map(|p| fragment(p, &round.data[p], n, rng))
        .collect::<Result<_, _>>()?;
    for (i, set) in sets.iter().enumerate() {
        for (j, to) in round.participants.iter().enumerate() {
            if i != j {
                transcript.push(Message::Fragment {
                    from: set.owner.clone(),
                    to: to.clone(),
                    value: set.fragments[j].clone(),
                });
            }
        }
    }

    // c_j = sum over senders k of x_{kj}
    let partial: Vec<DataPoint> = (0..n)
        .map(|j| {
            let mut c = vec![0i64; dim];
            for set in &sets {
                for (acc, v) in c.iter_mut().zip(&set.fragments[j].0) {
                    *acc += v;
                }
            }
            DataPoint(c)
        })
        .collect();
    for (j, c) in partial.iter().enumerate() {
        transcript.push(Message::PartialSum { from: round.participants[j].clone(), value: c.clone() });
    }

    let mean = ExactMean::of(partial.iter(), dim);
    let mean_over_n = mean.scaled_down(n as u64);
    let d0_over_n = round.d0 / n as f64;

    let mut parties = BTreeMap::new();
    for (i, set) in sets.iter().enumerate() {
        let sub_difficulties = set
            .fragments
            .iter()
            .map(|f| difficulty_exact(f, &mean_over_n, d0_over_n, round.alpha_pow, round.norm))
            .collect::<Result<Vec<_>, _>>()?;
        let single_step =
            difficulty_exact(&round.data[&set.owner], &mean, round.d0, round.alpha_pow, round.norm)?;
        for (k, certifier) in round.participants.iter().enumerate() {
            if k != i {
                transcript.push(Message::Attestation {
                    certifier: certifier.clone(),
                    subject: set.owner.clone(),
                    step: k,
                    completed: true,
                });
            }
        }
        parties.insert(
            set.owner.clone(),
            PartyOutcome {
                mean_real: mean.to_real(),
                mean: mean.clone(),
                sub_difficulties,
                single_step,
                fragments: set.fragments.clone(),
            },
        );
    }
    Ok(RoundResult { transcript, parties })
}

/// Exact check that splitting into N sub-puzzles never lowers the total
/// work: `sum_k ||x_ik - mean/N|| >= ||x_i - mean||`.
///
/// Both sides are scaled by N^2 so every deviation is an integer vector; the
/// `d0` terms cancel (`N * d0/N = d0`). L1 and L-infinity are then compared in
/// integers. L2 uses integer square-root bounds and only falls back to
/// floating point when those bounds are inconclusive.
pub fn split_bound_holds(fragments: &[DataPoint], x: &DataPoint, mean: &ExactMean, norm: Norm) -> bool {
    let n = fragments.len() as i128;
    let count = i128::from(mean.count);
    // x_ik - S/(count*N)  ->  (count*N) * x_ik - S
    let lhs_vecs: Vec<Vec<i128>> = fragments
        .iter()
        .map(|f| f.0.iter().zip(&mean.sum).map(|(&v, &s)| count * n * i128::from(v) - s).collect())
        .collect();
    // x_i - S/count  ->  (count*N) * x_i - N*S
    let rhs_vec: Vec<i128> =
        x.0.iter().zip(&mean.sum).map(|(&v, &s)| count * n * i128::from(v) - n * s).collect();
    match norm {
        Norm::L1 => {
            let lhs: i128 = lhs_vecs.iter().map(|v| v.iter().map(|c| c.abs()).sum::<i128>()).sum();
            lhs >= rhs_vec.iter().map(|c| c.abs()).sum()
        }
        Norm::Linf => {
            let lhs: i128 = lhs_vecs
                .iter()
                .map(|v| v.iter().map(|c| c.abs()).max().unwrap_or(0))
                .sum();
            lhs >= rhs_vec.iter().map(|c| c.abs()).max().unwrap_or(0)
        }
        Norm::L2 => {
            let sq = |v: &[i128]| -> u128 { v.iter().map(|&c| (c * c) as u128).sum() };
            let lo: u128 = lhs_vecs.iter().map(|v| isqrt_floor(sq(v))).sum();
            let hi = isqrt_ceil(sq(&rhs_vec));
            if lo >= hi {
                return true;
            }
            let lhs: f64 = lhs_vecs.iter().map(|v| (sq(v) as f64).sqrt()).sum();
            lhs >= (sq(&rhs_vec) as f64).sqrt()
        }
    }
}

fn isqrt_floor(v: u128) -> u128 {
    if v < 2 {
        return v;
    }
    let mut x = (v as f64).sqrt() as u128;
    while x.checked_mul(x).is_none_or(|s| s > v) {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).is_some_and(|s| s <= v) {
        x += 1;
    }
    x
}

fn isqrt_ceil(v: u128) -> u128 {
    let f = isqrt_floor(v);
    if f * f == v {
        f
    } else {
        f + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(v: &[f64]) -> DataPoint {
        DataPoint::from_real(v)
    }

    #[test]
    fn zero_distance_gives_base() {
        let x = pt(&[1.5, -2.0]);
        assert_eq!(difficulty(&x, &x, 3.25, 7.0, Norm::L2).unwrap(), 3.25);
    }

    #[test]
    fn l2_scalar_example() {
        assert_eq!(difficulty(&pt(&[3.0]), &pt(&[1.0]), 1.0, 1.0, Norm::L2).unwrap(), 3.0);
    }

    #[test]
    fn l1_example() {
        let d = difficulty(&pt(&[1.0, -1.0]), &pt(&[0.0, 0.0]), 2.0, 0.5, Norm::L1).unwrap();
        assert_eq!(d, 3.0);
    }

    #[test]
    fn linf_picks_largest() {
        let d = difficulty(&pt(&[1.0, -4.0]), &pt(&[0.0, 0.0]), 0.0, 1.0, Norm::Linf).unwrap();
        assert_eq!(d, 4.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert_eq!(
            difficulty(&pt(&[1.0]), &pt(&[1.0, 2.0]), 1.0, 1.0, Norm::L2),
            Err(ApowError::Dimension(1, 2))
        );
    }

    #[test]
    fn bits_rounding_and_clamp() {
        assert_eq!(difficulty_to_bits(1.2), 1);
        assert_eq!(difficulty_to_bits(8.5), 9);
        assert_eq!(difficulty_to_bits(100.0), 32);
        assert_eq!(difficulty_to_bits(0.3), 1);
        assert_eq!(difficulty_to_bits(f64::NAN), 1);
    }

    #[test]
    fn single_fragment_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = pt(&[4.2, -1.0]);
        let set = fragment("a", &x, 1, &mut rng).unwrap();
        assert_eq!(set.fragments, vec![x]);
    }

    #[test]
    fn zero_fragments_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(fragment("a", &pt(&[1.0]), 0, &mut rng), Err(ApowError::NoFragments));
    }

    #[test]
    fn three_unequal_shares_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = DataPoint(vec![FIXED_POINT_SCALE]);
        let set = fragment("a", &x, 3, &mut rng).unwrap();
        assert_eq!(set.fragments.len(), 3);
        assert_eq!(set.sum(), x);
        let v: Vec<i64> = set.fragments.iter().map(|f| f.0[0]).collect();
        assert!(v[0] != v[1] || v[1] != v[2]);
        let bound = 2 * FIXED_POINT_SCALE + (1 << 20);
        assert!(v[..2].iter().all(|c| c.abs() <= bound));
    }

    #[test]
    fn degenerate_round_returns_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let round = ApowRound {
            participants: vec!["a".into()],
            data: BTreeMap::from([("a".to_string(), pt(&[2.5, 1.0]))]),
            d0: 4.0,
            alpha_pow: 2.0,
            norm: Norm::L2,
        };
        let res = run_round(&round, &mut rng).unwrap();
        let a = &res.parties["a"];
        assert_eq!(a.sub_difficulties, vec![4.0]);
        assert_eq!(a.single_step, 4.0);
        assert!(res.transcript.iter().all(|m| matches!(m, Message::PartialSum { .. })));
    }

    #[test]
    fn two_party_example_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let round = ApowRound {
            participants: vec!["1".into(), "2".into()],
            data: BTreeMap::from([
                ("1".to_string(), pt(&[0.0])),
                ("2".to_string(), pt(&[4.0])),
            ]),
            d0: 1.0,
            alpha_pow: 1.0,
            norm: Norm::L2,
        };
        let res = run_round(&round, &mut rng).unwrap();
        let p1 = &res.parties["1"];
        assert_eq!(p1.mean_real, vec![2.0]);
        assert_eq!(p1.single_step, 3.0);
        // Independent evaluation of every sub-puzzle from the shares.
        let expected: Vec<f64> = p1
            .fragments
            .iter()
            .map(|f| 0.5 + (f.0[0] as f64 / 1e6 - 1.0).abs())
            .collect();
        for (got, want) in p1.sub_difficulties.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(p1.total() >= 3.0);
        assert!(split_bound_holds(&p1.fragments, &round.data["1"], &p1.mean, Norm::L2));
    }

    #[test]
    fn equal_points_give_mean_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = pt(&[1.0, 2.0]);
        let round = ApowRound {
            participants: vec!["a".into(), "b".into(), "c".into()],
            data: ["a", "b", "c"].iter().map(|k| (k.to_string(), x.clone())).collect(),
            d0: 2.0,
            alpha_pow: 1.0,
            norm: Norm::L1,
        };
        let res = run_round(&round, &mut rng).unwrap();
        for p in res.parties.values() {
            assert_eq!(p.mean_real, x.to_real());
            assert_eq!(p.single_step, 2.0);
            // Shares are unequal, so the work-dependent part is strictly positive.
            assert!(p.total() > 2.0);
        }
    }

    #[test]
    fn transcript_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let round = ApowRound {
            participants: vec!["a".into(), "b".into(), "c".into()],
            data: [("a", 1.0), ("b", 2.0), ("c", 6.0)]
                .iter()
                .map(|(k, v)| (k.to_string(), pt(&[*v])))
                .collect(),
            d0: 1.0,
            alpha_pow: 1.0,
            norm: Norm::L2,
        };
        let res = run_round(&round, &mut rng).unwrap();
        let frags = res.transcript.iter().filter(|m| matches!(m, Message::Fragment { .. })).count();
        let sums = res.transcript.iter().filter(|m| matches!(m, Message::PartialSum { .. })).count();
        let att = res.transcript.iter().filter(|m| matches!(m, Message::Attestation { .. })).count();
        assert_eq!((frags, sums, att), (6, 3, 6));
        // Nobody receives its own share.
        for m in &res.transcript {
            if let Message::Fragment { from, to, .. } = m {
                assert_ne!(from, to);
            }
        }
        assert_eq!(res.parties["a"].mean_real, vec![3.0]);
    }

    #[test]
    fn validation_errors() {
        let mut round = ApowRound {
            participants: vec!["a".into(), "b".into()],
            data: BTreeMap::from([("a".to_string(), pt(&[1.0])), ("b".to_string(), pt(&[1.0, 2.0]))]),
            d0: 1.0,
            alpha_pow: 1.0,
            norm: Norm::L2,
        };
        assert_eq!(round.validate(), Err(ApowError::Dimension(1, 2)));
        round.data.insert("b".into(), pt(&[3.0]));
        round.d0 = 0.0;
        assert_eq!(round.validate(), Err(ApowError::BaseDifficulty(0.0)));
        round.d0 = 1.0;
        round.participants.push("a".into());
        assert_eq!(round.validate(), Err(ApowError::DuplicateParticipant("a".into())));
        round.participants.pop();
        round.data.remove("b");
        assert_eq!(round.validate(), Err(ApowError::MissingData("b".into())));
    }

    #[test]
    fn isqrt_bounds() {
        for v in [0u128, 1, 2, 3, 4, 15, 16, 17, 1 << 100, (1 << 100) + 1] {
            let f = isqrt_floor(v);
            assert!(f * f <= v && (f + 1) * (f + 1) > v);
            let c = isqrt_ceil(v);
            assert!(c * c >= v);
        }
    }
}
