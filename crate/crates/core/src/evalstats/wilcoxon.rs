use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

/// Largest number of nonzero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

/// Relative tolerance under which magnitudes count as tied (or as zero).
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(w_plus, w_minus)`.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks of `mags` (ascending ranks from 1), doubled so they stay integral.
fn doubled_midranks(mags: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..mags.len()).collect();
    order.sort_by(|&a, &b| mags[a].total_cmp(&mags[b]));
    let mut ranks = vec![0u64; mags.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && tied(mags[order[j]], mags[order[i]]) {
            j += 1;
        }
        // ranks i+1 ..= j, doubled midrank = i + 1 + j
        for &k in &order[i..j] {
            ranks[k] = (i + 1 + j) as u64;
        }
        i = j;
    }
    ranks
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs())
}

/// Two-sided paired signed-rank test on `a - b`.
///
/// Zero differences are dropped. Up to [`EXACT_MAX_N`] nonzero pairs the
/// null distribution of `W+` is counted over all `2^n` sign assignments
/// (by dynamic programming over the doubled ranks); larger samples use the
/// tie-corrected normal approximation with continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Argument(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(StatsError::Empty("no pairs".into()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| !tied(**x, **y))
        .map(|(x, y)| x - y)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::Degenerate("all paired differences are zero".into()));
    }
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&mags);
    let w2_plus: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = ranks.iter().sum();
    let w2_minus = total2 - w2_plus;
    let w2 = w2_plus.min(w2_minus);
    let n = diffs.len();

    let (p, exact) = if n <= EXACT_MAX_N {
        // counts[s] = number of sign assignments with doubled W+ = s
        let mut counts = vec![0f64; total2 as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                let c = counts[s];
                if c != 0.0 {
                    counts[s + r] += c;
                }
            }
            reach += r;
        }
        let tail: f64 = counts[..=w2 as usize].iter().sum::<f64>() / 2f64.powi(n as i32);
        ((2.0 * tail.min(0.5)).min(1.0), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        for group in sorted.chunk_by(|x, y| x == y) {
            let t = group.len() as f64;
            tie_term += t * t * t - t;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let w = w2 as f64 / 2.0;
        let z = ((w - mean + 0.5) / var.sqrt()).min(0.0);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        ((2.0 * normal.cdf(z)).min(1.0), false)
    };
    Ok(WilcoxonResult {
        n,
        w_plus: w2_plus as f64 / 2.0,
        w_minus: w2_minus as f64 / 2.0,
        statistic: w2 as f64 / 2.0,
        p_value: p,
        exact,
    })
}
