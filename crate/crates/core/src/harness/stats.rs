//! Order-statistic median intervals, mean intervals, curve fits, ranks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianCi {
    pub lo: f64,
    pub median: f64,
    pub hi: f64,
    /// Too few samples for the requested coverage; bounds are min and max.
    pub degenerate: bool,
}

fn median_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        (x[n / 2 - 1] + x[n / 2]) / 2.0
    }
}

/// `P(B <= i)` for `B ~ Binomial(n, 1/2)`, for every `i` in `0..=n`.
fn half_binomial_cdf(n: usize) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let mut ln_c = 0.0f64;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        acc += (ln_c - n as f64 * ln2).exp();
        out.push(acc.min(1.0));
    }
    out
}

/// Distribution-free interval for the median from order statistics
/// `X_(j)` and `X_(n-j+1)`, with the largest `j` whose binomial coverage
/// is at least `level`.
pub fn median_ci(samples: &[f64], level: f64) -> Option<MedianCi> {
    if samples.is_empty() {
        return None;
    }
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len();
    let median = median_sorted(&x);
    let cdf = half_binomial_cdf(n);
    // coverage of [X_(j), X_(n-j+1)] is 1 - 2 P(B <= j-1)
    let mut best = None;
    for j in 1..=n / 2 {
        let coverage = 1.0 - 2.0 * cdf[j - 1];
        if coverage >= level {
            best = Some(j);
        } else {
            break;
        }
    }
    Some(match best {
        Some(j) => MedianCi { lo: x[j - 1], median, hi: x[n - j], degenerate: false },
        None => MedianCi { lo: x[0], median, hi: x[n - 1], degenerate: true },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Student-t interval for the mean.
pub fn mean_ci(samples: &[f64], level: f64) -> Option<MeanCi> {
    let n = samples.len();
    if n == 0 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some(MeanCi { mean, lo: mean, hi: mean, n });
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map(|d| d.inverse_cdf(0.5 + level / 2.0))
        .unwrap_or(1.96);
    let half = t * (var / n as f64).sqrt();
    Some(MeanCi { mean, lo: mean - half, hi: mean + half, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub rss: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Some(LinearFit { intercept, slope, rss })
}

/// `y ≈ a·exp(−b·x) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rss: f64,
}

fn exp_given_rate(x: &[f64], y: &[f64], b: f64) -> Option<ExpFit> {
    let z: Vec<f64> = x.iter().map(|v| (-b * v).exp()).collect();
    let lf = linear_fit(&z, y)?;
    Some(ExpFit { a: lf.slope, b, c: lf.intercept, rss: lf.rss })
}

/// Least squares with `(a, c)` solved exactly for each decay rate and the
/// rate found by a log-spaced scan refined with golden-section search.
pub fn exponential_fit(x: &[f64], y: &[f64]) -> Option<ExpFit> {
    if x.len() < 3 || x.len() != y.len() {
        return None;
    }
    let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return None;
    }
    let (lo_b, hi_b) = ((1e-4 / span).ln(), (50.0 / span).ln());
    let steps = 400;
    let mut best: Option<(f64, ExpFit)> = None;
    for i in 0..=steps {
        let lb = lo_b + (hi_b - lo_b) * i as f64 / steps as f64;
        if let Some(f) = exp_given_rate(x, y, lb.exp()) {
            if best.is_none_or(|(_, g)| f.rss < g.rss) {
                best = Some((lb, f));
            }
        }
    }
    let (center, mut fit) = best?;
    let h = (hi_b - lo_b) / steps as f64;
    let (mut a, mut b) = (center - h, center + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c1 = b - g * (b - a);
        let c2 = a + g * (b - a);
        let f1 = exp_given_rate(x, y, c1.exp()).map_or(f64::INFINITY, |f| f.rss);
        let f2 = exp_given_rate(x, y, c2.exp()).map_or(f64::INFINITY, |f| f.rss);
        if f1 < f2 {
            b = c2;
        } else {
            a = c1;
        }
    }
    if let Some(f) = exp_given_rate(x, y, ((a + b) / 2.0).exp()) {
        if f.rss < fit.rss {
            fit = f;
        }
    }
    Some(fit)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Offset from the first index at which `ok` holds for `persistence`
/// consecutive entries, or `None`.
pub fn episodes_to_learn(ok: &[bool], persistence: usize) -> Option<usize> {
    let p = persistence.max(1);
    if ok.len() < p {
        return None;
    }
    (0..=ok.len() - p).find(|&i| ok[i..i + p].iter().all(|&b| b))
}
