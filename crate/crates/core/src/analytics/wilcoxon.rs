use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{count, real, Real};
use crate::error::AnalyticsError;

/// Largest non-zero pair count that gets an exact p-value.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample<T> {
    pub labels: Vec<String>,
    pub condition_a: Vec<T>,
    pub condition_b: Vec<T>,
}

impl<T: Real> PairedSample<T> {
    pub fn new(condition_a: Vec<T>, condition_b: Vec<T>) -> Result<Self, AnalyticsError> {
        let labels = (1..=condition_a.len()).map(|i| format!("P{i}")).collect();
        Self::labelled(labels, condition_a, condition_b)
    }

    pub fn labelled(labels: Vec<String>, condition_a: Vec<T>, condition_b: Vec<T>) -> Result<Self, AnalyticsError> {
        if condition_a.len() != condition_b.len() {
            return Err(AnalyticsError::LengthMismatch(condition_a.len(), condition_b.len()));
        }
        if labels.len() != condition_a.len() {
            return Err(AnalyticsError::LengthMismatch(labels.len(), condition_a.len()));
        }
        if condition_a.is_empty() {
            return Err(AnalyticsError::EmptySample);
        }
        Ok(Self { labels, condition_a, condition_b })
    }

    pub fn swapped(&self) -> Self {
        Self {
            labels: self.labels.clone(),
            condition_a: self.condition_b.clone(),
            condition_b: self.condition_a.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult<T> {
    /// min(W+, W-).
    pub w: T,
    pub w_plus: T,
    pub w_minus: T,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub dropped_zeros: usize,
    /// Normal-approximation z with continuity and tie correction.
    pub z: T,
    pub p: T,
    pub effect_size_r: T,
    pub method: PValueMethod,
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks<T: Real>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 averaged
        let avg = count::<T>(i + j + 2) / real(2.0);
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments per achievable W+ on the doubled-rank grid.
fn sign_sum_counts(doubled_ranks: &[u64]) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in doubled_ranks {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    counts
}

/// Exact two-sided p from doubled ranks and the doubled observed statistic:
/// P(min(W+, W-) <= w) under random signs.
pub fn exact_p(doubled_ranks: &[u64], doubled_w: u64) -> f64 {
    let counts = sign_sum_counts(doubled_ranks);
    let at_most: u64 = counts.iter().take(doubled_w as usize + 1).sum();
    let total = 2f64.powi(doubled_ranks.len() as i32);
    (2.0 * at_most as f64 / total).min(1.0)
}

pub fn wilcoxon_signed_rank<T: Real>(sample: &PairedSample<T>) -> Result<WilcoxonResult<T>, AnalyticsError> {
    if sample.condition_a.len() != sample.condition_b.len() {
        return Err(AnalyticsError::LengthMismatch(sample.condition_a.len(), sample.condition_b.len()));
    }
    if sample.condition_a.is_empty() {
        return Err(AnalyticsError::EmptySample);
    }
    let diffs: Vec<T> = sample
        .condition_a
        .iter()
        .zip(&sample.condition_b)
        .map(|(a, b)| *a - *b)
        .filter(|d| *d != T::zero())
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(AnalyticsError::AllZeroDifferences);
    }
    let abs: Vec<T> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let (mut w_plus, mut w_minus) = (T::zero(), T::zero());
    for (d, r) in diffs.iter().zip(&ranks) {
        if *d > T::zero() {
            w_plus = w_plus + *r;
        } else {
            w_minus = w_minus + *r;
        }
    }
    let w = w_plus.min(w_minus);

    // tie correction: sum of t^3 - t over groups of equal |d|
    let mut sorted = abs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let wf = w.to_f64().expect("finite statistic");
    let z = if var > 0.0 {
        -((mean - wf).abs() - 0.5).max(0.0) / var.sqrt()
    } else {
        0.0
    };

    let (p, method) = if n <= EXACT_MAX_N {
        let doubled: Vec<u64> = ranks
            .iter()
            .map(|r| (r.to_f64().expect("finite rank") * 2.0).round() as u64)
            .collect();
        (exact_p(&doubled, (wf * 2.0).round() as u64), PValueMethod::Exact)
    } else {
        let normal = Normal::standard();
        ((2.0 * normal.cdf(z)).min(1.0), PValueMethod::Normal)
    };

    Ok(WilcoxonResult {
        w,
        w_plus,
        w_minus,
        n,
        dropped_zeros: sample.condition_a.len() - n,
        z: real(z),
        p: real(p),
        effect_size_r: real(z.abs() / nf.sqrt()),
        method,
    })
}

/// The normal-approximation p for the same sample, whatever its size.
pub fn normal_p<T: Real>(result: &WilcoxonResult<T>) -> f64 {
    let z = result.z.to_f64().expect("finite z");
    (2.0 * Normal::standard().cdf(z)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn known_small_case() {
        // differences 1..=5 all positive: W = 0, p = 2/32
        let s = PairedSample::new(vec![2.0, 3.0, 4.0, 5.0, 6.0], vec![1.0; 5]).unwrap();
        let r = wilcoxon_signed_rank(&s).unwrap();
        assert_eq!(r.w, 0.0);
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(r.p, 0.0625);
        assert_eq!(r.method, PValueMethod::Exact);
    }

    #[test]
    fn zeros_dropped_and_all_zero_rejected() {
        let s = PairedSample::new(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]).unwrap();
        let r = wilcoxon_signed_rank(&s).unwrap();
        assert_eq!((r.n, r.dropped_zeros), (2, 1));
        let z = PairedSample::new(vec![1.0, 2.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(wilcoxon_signed_rank(&z), Err(AnalyticsError::AllZeroDifferences));
        assert_eq!(
            PairedSample::new(vec![1.0], vec![1.0, 2.0]).unwrap_err(),
            AnalyticsError::LengthMismatch(1, 2)
        );
    }

    #[test]
    fn large_sample_uses_normal() {
        let a: Vec<f64> = (1..=20).map(|i| i as f64 * 1.5).collect();
        let b: Vec<f64> = (1..=20).map(|i| i as f64 + if i % 3 == 0 { 4.0 } else { 0.0 }).collect();
        let r = wilcoxon_signed_rank(&PairedSample::new(a, b).unwrap()).unwrap();
        assert_eq!(r.method, PValueMethod::Normal);
        assert!(r.p > 0.0 && r.p <= 1.0);
        assert!((r.effect_size_r - r.z.abs() / (r.n as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn works_in_f32() {
        let s = PairedSample::<f32>::new(vec![2.0, 3.0, 4.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(wilcoxon_signed_rank(&s).unwrap().p, 0.25);
    }
}
