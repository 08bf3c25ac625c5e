//! Finite discrete distributions and the truncated geometric family.
//!
//! [`DiscreteDistribution`] is the common currency of the crate: quantizer
//! output laws, privacy oracles and divergences are all expressed with it.

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Probability masses over a strictly increasing list of integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<i64>,
    masses: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<i64>, masses: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::param("support", "must not be empty"));
        }
        if support.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                actual: masses.len(),
            });
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("support", "labels must be strictly increasing"));
        }
        if let Some(m) = masses.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::param("masses", format!("invalid mass {m}")));
        }
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for &m in &masses {
            acc += m;
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::param("masses", format!("sum to {acc}, not 1")));
        }
        Ok(Self {
            support,
            masses,
            cumulative,
        })
    }

    /// Point mass at `label`.
    pub fn point(label: i64) -> Self {
        Self {
            support: vec![label],
            masses: vec![1.0],
            cumulative: vec![1.0],
        }
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Mass at `label`, zero if the label is not in the support.
    pub fn mass(&self, label: i64) -> f64 {
        self.support
            .binary_search(&label)
            .map(|i| self.masses[i])
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.support.iter().copied().zip(self.masses.iter().copied())
    }

    /// The distribution of `offset - X`.
    pub fn reflected(&self, offset: i64) -> Self {
        let support = self.support.iter().rev().map(|&k| offset - k).collect();
        let masses: Vec<f64> = self.masses.iter().rev().copied().collect();
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for &m in &masses {
            acc += m;
            cumulative.push(acc);
        }
        Self {
            support,
            masses,
            cumulative,
        }
    }

    /// Exact first two moments by direct summation: `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        let mean: f64 = self.iter().map(|(k, m)| k as f64 * m).sum();
        let variance = self
            .iter()
            .map(|(k, m)| {
                let d = k as f64 - mean;
                d * d * m
            })
            .sum();
        (mean, variance)
    }

    /// Inverse-CDF lookup for a uniform draw `u` in `[0, 1)`.
    ///
    /// Returns the first label whose cumulative mass exceeds `u`; labels with
    /// zero mass are never returned.
    pub fn inverse_cdf(&self, u: f64) -> i64 {
        let idx = self.cumulative.partition_point(|&c| c <= u);
        if idx < self.support.len() {
            return self.support[idx];
        }
        // u beyond the rounded total: last label with positive mass.
        let last = self
            .masses
            .iter()
            .rposition(|&m| m > 0.0)
            .unwrap_or(self.support.len() - 1);
        self.support[last]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.inverse_cdf(rng.gen::<f64>())
    }

    /// Total-variation distance to another distribution (labels outside one
    /// support count as zero mass there).
    pub fn total_variation(&self, other: &Self) -> f64 {
        let mut labels: Vec<i64> = self.support.iter().chain(&other.support).copied().collect();
        labels.sort_unstable();
        labels.dedup();
        0.5 * labels
            .into_iter()
            .map(|k| (self.mass(k) - other.mass(k)).abs())
            .sum::<f64>()
    }
}

/// Moments of a distribution by direct summation.
pub fn moments_bruteforce(dist: &DiscreteDistribution) -> (f64, f64) {
    dist.moments()
}

/// Truncated geometric law on `{1, ..., support_size}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TGeoParams {
    p: f64,
    support_size: usize,
}

impl TGeoParams {
    pub fn new(p: f64, support_size: usize) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::param("p", format!("{p} not in (0, 1]")));
        }
        if support_size == 0 {
            return Err(Error::param("support_size", "must be at least 1"));
        }
        Ok(Self { p, support_size })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn support_size(&self) -> usize {
        self.support_size
    }

    /// The truncation point `b`: the support is `{1, ..., b - 1}`.
    pub fn truncation_point(&self) -> usize {
        self.support_size + 1
    }
}

/// Unnormalized-then-normalized masses `p q^{k-1} / (1 - q^m)` for `k = 1..=m`.
pub(crate) fn tgeo_masses(p: f64, m: usize) -> Vec<f64> {
    if p >= 1.0 || m == 1 {
        let mut v = vec![0.0; m];
        v[0] = 1.0;
        return v;
    }
    let q = 1.0 - p;
    // 1 - q^m without cancellation for q near 1.
    let normalizer = -(m as f64 * q.ln()).exp_m1();
    let mut masses = Vec::with_capacity(m);
    let mut w = p / normalizer;
    for _ in 0..m {
        masses.push(w);
        w *= q;
    }
    masses
}

pub fn tgeo_pmf(params: TGeoParams) -> DiscreteDistribution {
    let m = params.support_size;
    let masses = tgeo_masses(params.p, m);
    let support = (1..=m as i64).collect();
    let mut cumulative = Vec::with_capacity(m);
    let mut acc = 0.0;
    for &w in &masses {
        acc += w;
        cumulative.push(acc);
    }
    DiscreteDistribution {
        support,
        masses,
        cumulative,
    }
}

/// Closed-form mean of the truncated geometric law with truncation point
/// `b = support_size + 1`; falls back to the exact value 1 at `p = 1`.
pub fn tgeo_mean_closed_form(params: TGeoParams) -> f64 {
    if params.p >= 1.0 {
        return 1.0;
    }
    let p = params.p;
    let q = 1.0 - p;
    let b = params.truncation_point() as f64;
    let qb1 = q.powf(b - 1.0);
    let qb = qb1 * q;
    (1.0 - b * qb1 + (b - 1.0) * qb) / (p * (1.0 - qb1))
}

/// The published variance expression, evaluated verbatim.
///
/// It is not a variance: it goes negative for ordinary parameters (e.g.
/// `p = 0.5, b = 4` gives about -1.271). Kept only so the discrepancy can be
/// reported; use [`moments_bruteforce`] for the actual variance.
pub fn tgeo_variance_printed(params: TGeoParams) -> f64 {
    let q = 1.0 - params.p;
    let b = params.truncation_point() as f64;
    let num = (1.0 + q.powf(2.0 * b)) * q - q.powf(b) * (1.0 + q * q) * b * b
        + q.powf(b + 1.0) * (b * b - 1.0);
    let den = (1.0 - q).powi(2) * (1.0 - q.powf(b)).powi(2);
    num / den
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Order-`alpha` Rényi divergence `D_alpha(P || Q)` in nats.
///
/// Accumulated in the log domain so that extreme mass ratios do not
/// overflow. Returns `+inf` when `P` charges a label that `Q` does not.
pub fn renyi_divergence(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::param("alpha", format!("{alpha} must be finite and > 1")));
    }
    if p.support != q.support {
        return Err(Error::SupportMismatch);
    }
    if p.masses == q.masses {
        return Ok(0.0);
    }
    let mut log_terms = Vec::with_capacity(p.len());
    for (&pm, &qm) in p.masses.iter().zip(&q.masses) {
        if pm == 0.0 {
            continue;
        }
        if qm == 0.0 {
            return Ok(f64::INFINITY);
        }
        log_terms.push(alpha * pm.ln() - (alpha - 1.0) * qm.ln());
    }
    let d = log_sum_exp(log_terms.into_iter()) / (alpha - 1.0);
    // Rounding can leave -1e-17 for identical inputs.
    Ok(d.max(0.0))
}
