//! QMGeo: stochastic quantization with a mixture of truncated geometric laws.
//!
//! An input `w` in `[-w_max, w_max]` falls in the interval
//! `[Bin(r), Bin(r+1))`. With probability `mu` the output walks down from
//! level `r` by a truncated geometric number of steps, otherwise it walks up
//! from level `r+1`. Every level in `0..R` is reachable, which is what gives
//! the mechanism a finite privacy loss.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{tgeo_masses, DiscreteDistribution};
use crate::stream::StreamKey;

/// Default floor on the mixture weight in [`MixtureMode::DpSafe`].
pub const DEFAULT_GAMMA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureMode {
    /// Mixture weight used as computed; exact bin inputs silence one component.
    PaperLiteral,
    /// Mixture weight clamped to `[gamma, 1 - gamma]`.
    DpSafe,
}

impl fmt::Display for MixtureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixtureMode::PaperLiteral => "paper-literal",
            MixtureMode::DpSafe => "dp-safe",
        })
    }
}

fn default_mode() -> MixtureMode {
    MixtureMode::DpSafe
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuantizerConfig {
    #[serde(rename = "R")]
    levels: usize,
    p: f64,
    w_max: f64,
    #[serde(default = "default_mode")]
    mode: MixtureMode,
    #[serde(default = "default_gamma")]
    gamma: f64,
}

/// Everything that determines the mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantizerConfig")]
pub struct QuantizerConfig {
    #[serde(rename = "R")]
    levels: usize,
    p: f64,
    w_max: f64,
    mode: MixtureMode,
    gamma: f64,
}

impl TryFrom<RawQuantizerConfig> for QuantizerConfig {
    type Error = Error;

    fn try_from(raw: RawQuantizerConfig) -> Result<Self> {
        QuantizerConfig::new(raw.levels, raw.p, raw.w_max, raw.mode, raw.gamma)
    }
}

impl QuantizerConfig {
    pub fn new(levels: usize, p: f64, w_max: f64, mode: MixtureMode, gamma: f64) -> Result<Self> {
        if levels < 2 {
            return Err(Error::param("R", format!("{levels} levels; need at least 2")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::param("p", format!("{p} not in (0, 1]")));
        }
        if !(w_max > 0.0 && w_max.is_finite()) {
            return Err(Error::param("w_max", format!("{w_max} must be positive")));
        }
        if !(0.0..0.5).contains(&gamma) {
            return Err(Error::param("gamma", format!("{gamma} not in [0, 0.5)")));
        }
        Ok(Self {
            levels,
            p,
            w_max,
            mode,
            gamma,
        })
    }

    pub fn paper_literal(levels: usize, p: f64, w_max: f64) -> Result<Self> {
        Self::new(levels, p, w_max, MixtureMode::PaperLiteral, 0.0)
    }

    pub fn dp_safe(levels: usize, p: f64, w_max: f64, gamma: f64) -> Result<Self> {
        Self::new(levels, p, w_max, MixtureMode::DpSafe, gamma)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn mode(&self) -> MixtureMode {
        self.mode
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Spacing between adjacent levels.
    pub fn step(&self) -> f64 {
        2.0 * self.w_max / (self.levels - 1) as f64
    }

    fn check_domain(&self, w: f64) -> Result<()> {
        if w.abs() <= self.w_max {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                value: w,
                bound: self.w_max,
            })
        }
    }
}

/// A transmitted level and the value it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizedValue {
    pub level_index: usize,
    pub value: f64,
}

impl QuantizedValue {
    fn at(level_index: usize, cfg: &QuantizerConfig) -> Self {
        Self {
            level_index,
            value: level_value(level_index, cfg),
        }
    }
}

fn level_value(r: usize, cfg: &QuantizerConfig) -> f64 {
    -cfg.w_max + 2.0 * r as f64 * cfg.w_max / (cfg.levels - 1) as f64
}

/// Value of level `r`: `-w_max + 2 r w_max / (R - 1)`.
pub fn bin_value(r: usize, cfg: &QuantizerConfig) -> Result<f64> {
    if r >= cfg.levels {
        return Err(Error::IndexOutOfRange {
            index: r,
            len: cfg.levels,
        });
    }
    Ok(level_value(r, cfg))
}

/// Element-wise saturation to `[-w_max, w_max]`.
pub fn clip_elementwise(g: &[f64], w_max: f64) -> Vec<f64> {
    g.iter().map(|x| x.clamp(-w_max, w_max)).collect()
}

/// Index `r` of the half-open interval `[Bin(r), Bin(r+1))` holding `w`;
/// `w = w_max` belongs to the last interval.
pub fn interval_index(w: f64, cfg: &QuantizerConfig) -> Result<usize> {
    cfg.check_domain(w)?;
    let last = cfg.levels - 2;
    let t = (w + cfg.w_max) * (cfg.levels - 1) as f64 / (2.0 * cfg.w_max);
    let mut r = (t.floor().max(0.0) as usize).min(last);
    // Agree exactly with `bin_value` at the boundaries despite rounding in t.
    if r < last && w >= level_value(r + 1, cfg) {
        r += 1;
    } else if r > 0 && w < level_value(r, cfg) {
        r -= 1;
    }
    Ok(r)
}

fn weight_in_interval(w: f64, r: usize, cfg: &QuantizerConfig) -> f64 {
    let lo = level_value(r, cfg);
    let hi = level_value(r + 1, cfg);
    let mu = ((hi - w) / (hi - lo)).clamp(0.0, 1.0);
    match cfg.mode {
        MixtureMode::PaperLiteral => mu,
        MixtureMode::DpSafe => mu.clamp(cfg.gamma, 1.0 - cfg.gamma),
    }
}

/// Probability of the lower (downward) component.
pub fn mixture_weight(w: f64, cfg: &QuantizerConfig) -> Result<f64> {
    let r = interval_index(w, cfg)?;
    Ok(weight_in_interval(w, r, cfg))
}

/// Exact law of the output level index for input `w`.
pub fn output_distribution(w: f64, cfg: &QuantizerConfig) -> Result<DiscreteDistribution> {
    let r = interval_index(w, cfg)?;
    let mu = weight_in_interval(w, r, cfg);
    let levels = cfg.levels;
    let mut masses = vec![0.0; levels];
    // Lower component: level r - (k - 1) for k = 1..=r+1.
    for (k, m) in tgeo_masses(cfg.p, r + 1).into_iter().enumerate() {
        masses[r - k] += mu * m;
    }
    // Upper component: level r + k for k = 1..=R-1-r.
    for (k, m) in tgeo_masses(cfg.p, levels - 1 - r).into_iter().enumerate() {
        masses[r + 1 + k] += (1.0 - mu) * m;
    }
    DiscreteDistribution::new((0..levels as i64).collect(), masses)
}

/// Conventional stochastic rounding to the two neighbouring levels.
pub fn klevel_output_distribution(w: f64, cfg: &QuantizerConfig) -> Result<DiscreteDistribution> {
    let r = interval_index(w, cfg)?;
    let lo = level_value(r, cfg);
    let hi = level_value(r + 1, cfg);
    let up = ((w - lo) / (hi - lo)).clamp(0.0, 1.0);
    let mut masses = vec![0.0; cfg.levels];
    masses[r] = 1.0 - up;
    masses[r + 1] = up;
    DiscreteDistribution::new((0..cfg.levels as i64).collect(), masses)
}

pub fn quantize_scalar<R: Rng + ?Sized>(
    w: f64,
    cfg: &QuantizerConfig,
    rng: &mut R,
) -> Result<QuantizedValue> {
    let level = output_distribution(w, cfg)?.sample(rng);
    Ok(QuantizedValue::at(level as usize, cfg))
}

/// Quantizes each element independently; element `i` draws from
/// `key.indexed_rng(i)`, so the result does not depend on evaluation order.
pub fn quantize_vector(
    g: &[f64],
    cfg: &QuantizerConfig,
    key: StreamKey,
) -> Result<Vec<QuantizedValue>> {
    g.iter()
        .enumerate()
        .map(|(i, &w)| quantize_scalar(w, cfg, &mut key.indexed_rng(i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lit(levels: usize, p: f64) -> QuantizerConfig {
        QuantizerConfig::paper_literal(levels, p, 1.0).unwrap()
    }

    fn safe(levels: usize, p: f64, gamma: f64) -> QuantizerConfig {
        QuantizerConfig::dp_safe(levels, p, 1.0, gamma).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(QuantizerConfig::paper_literal(1, 0.5, 1.0).is_err());
        assert!(QuantizerConfig::paper_literal(4, 0.0, 1.0).is_err());
        assert!(QuantizerConfig::paper_literal(4, 0.5, 0.0).is_err());
        assert!(QuantizerConfig::dp_safe(4, 0.5, 1.0, 0.5).is_err());
        assert!(QuantizerConfig::dp_safe(4, 0.5, 1.0, -0.1).is_err());
    }

    #[test]
    fn config_json_is_strict() {
        let cfg: QuantizerConfig =
            serde_json::from_str(r#"{"R": 8, "p": 0.9, "w_max": 0.05}"#).unwrap();
        assert_eq!(cfg.mode(), MixtureMode::DpSafe);
        assert_eq!(cfg.gamma(), DEFAULT_GAMMA);
        assert!(serde_json::from_str::<QuantizerConfig>(
            r#"{"R": 8, "p": 0.9, "w_max": 0.05, "pp": 1}"#
        )
        .is_err());
        assert!(serde_json::from_str::<QuantizerConfig>(r#"{"R": 1, "p": 0.9, "w_max": 0.05}"#)
            .is_err());
        let back: QuantizerConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bins() {
        let cfg = QuantizerConfig::paper_literal(7, 0.5, 0.05).unwrap();
        assert_eq!(bin_value(0, &cfg).unwrap(), -0.05);
        assert!((bin_value(6, &cfg).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(bin_value(2, &lit(5, 0.5)).unwrap(), 0.0);
        assert!(matches!(bin_value(7, &cfg), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn clipping() {
        assert_eq!(
            clip_elementwise(&[0.07, -0.2, 0.01], 0.05),
            vec![0.05, -0.05, 0.01]
        );
        assert_eq!(clip_elementwise(&[0.01, -0.02], 0.05), vec![0.01, -0.02]);
    }

    #[test]
    fn intervals() {
        let cfg = lit(5, 0.5);
        assert_eq!(interval_index(-1.0, &cfg).unwrap(), 0);
        assert_eq!(interval_index(1.0, &cfg).unwrap(), 3);
        assert_eq!(interval_index(0.1, &cfg).unwrap(), 2);
        assert_eq!(interval_index(0.0, &cfg).unwrap(), 2);
        assert!(matches!(
            interval_index(1.01, &cfg),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(interval_index(f64::NAN, &cfg).is_err());
        // Exact grid points land in the interval to their right.
        for levels in [3usize, 7, 8, 16, 33] {
            let cfg = QuantizerConfig::paper_literal(levels, 0.5, 0.05).unwrap();
            for r in 0..levels - 1 {
                let w = bin_value(r, &cfg).unwrap();
                assert_eq!(interval_index(w, &cfg).unwrap(), r);
            }
        }
    }

    #[test]
    fn weights() {
        let cfg = lit(5, 0.5);
        assert!((mixture_weight(0.25, &cfg).unwrap() - 0.5).abs() < 1e-15);
        assert!((mixture_weight(0.25, &safe(5, 0.5, 0.25)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(mixture_weight(-1.0, &safe(5, 0.5, 0.25)).unwrap(), 0.75);
        assert_eq!(mixture_weight(-1.0, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn output_distribution_examples() {
        // R=3, w=0=Bin(1): lower component over levels {1, 0}.
        let d = output_distribution(0.0, &lit(3, 0.5)).unwrap();
        let want = [1.0 / 3.0, 2.0 / 3.0, 0.0];
        for (got, want) in d.masses().iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
        // p = 1 collapses to stochastic rounding between r and r+1.
        let cfg = lit(8, 1.0);
        let w = 0.1;
        let d = output_distribution(w, &cfg).unwrap();
        let k = klevel_output_distribution(w, &cfg).unwrap();
        assert!(d.total_variation(&k) < 1e-15);
        let r = interval_index(w, &cfg).unwrap() as i64;
        assert_eq!(d.iter().filter(|(_, m)| *m > 0.0).count(), 2);
        assert!((d.mass(r) - mixture_weight(w, &cfg).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn klevel_examples() {
        let cfg = lit(5, 0.5);
        let d = klevel_output_distribution(0.0, &cfg).unwrap();
        assert_eq!(d.mass(2), 1.0);
        let d = klevel_output_distribution(0.25, &cfg).unwrap();
        assert!((d.mass(2) - 0.5).abs() < 1e-15 && (d.mass(3) - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let w: f64 = rng.gen_range(-1.0..=1.0);
            let d = klevel_output_distribution(w, &cfg).unwrap();
            let mean: f64 = d
                .iter()
                .map(|(k, m)| m * bin_value(k as usize, &cfg).unwrap())
                .sum();
            assert!((mean - w).abs() < 1e-14, "w={w} mean={mean}");
        }
    }

    #[test]
    fn dp_safe_is_full_support() {
        for levels in [2usize, 3, 4, 8, 16] {
            for p in [0.1, 0.5, 0.9, 0.99] {
                let cfg = safe(levels, p, 0.25);
                for i in 0..=400 {
                    let w = -1.0 + 2.0 * i as f64 / 400.0;
                    let d = output_distribution(w, &cfg).unwrap();
                    let min = d.masses().iter().copied().fold(f64::INFINITY, f64::min);
                    assert!(min > 0.0, "R={levels} p={p} w={w}");
                }
            }
        }
    }

    #[test]
    fn concentration_grows_with_p() {
        for levels in [4usize, 8, 16] {
            for &w in &[-0.93, -0.3, 0.01, 0.44, 0.97] {
                let mut prev = 0.0;
                for i in 1..=99 {
                    let p = i as f64 / 100.0;
                    for cfg in [lit(levels, p), safe(levels, p, 0.25)] {
                        let r = interval_index(w, &cfg).unwrap() as i64;
                        let d = output_distribution(w, &cfg).unwrap();
                        let adj = d.mass(r) + d.mass(r + 1);
                        if cfg.mode() == MixtureMode::PaperLiteral {
                            assert!(adj + 1e-12 >= prev, "R={levels} w={w} p={p}");
                            prev = adj;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sampler_matches_distribution() {
        let cfg = QuantizerConfig::dp_safe(8, 0.5, 0.05, 0.25).unwrap();
        let w = 0.3 * 0.05;
        let exact = output_distribution(w, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let mut counts = vec![0usize; 8];
        for _ in 0..n {
            counts[quantize_scalar(w, &cfg, &mut rng).unwrap().level_index] += 1;
        }
        let emp = DiscreteDistribution::new(
            (0..8).collect(),
            counts.iter().map(|&c| c as f64 / n as f64).collect(),
        )
        .unwrap();
        assert!(emp.total_variation(&exact) < 0.005);
    }

    #[test]
    fn scalar_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = lit(8, 1.0);
        let w = bin_value(5, &cfg).unwrap();
        for _ in 0..200 {
            assert_eq!(quantize_scalar(w, &cfg, &mut rng).unwrap().level_index, 5);
        }
        let two = QuantizerConfig::dp_safe(2, 0.3, 0.05, 0.25).unwrap();
        for _ in 0..200 {
            let v = quantize_scalar(rng.gen_range(-0.05..=0.05), &two, &mut rng).unwrap();
            assert!(v.value == -0.05 || v.value == 0.05);
        }
    }

    #[test]
    fn vector_quantization() {
        let cfg = safe(8, 0.5, 0.25);
        let key = StreamKey::new(42);
        assert!(quantize_vector(&[], &cfg, key).unwrap().is_empty());
        let one = quantize_vector(&[0.3], &cfg, key).unwrap();
        let direct = quantize_scalar(0.3, &cfg, &mut key.indexed_rng(0)).unwrap();
        assert_eq!(one[0], direct);
        assert!(matches!(
            quantize_vector(&[0.1, 2.0], &cfg, key),
            Err(Error::OutOfDomain { .. })
        ));
    }

    fn grid_input() -> impl Strategy<Value = f64> {
        -1.0f64..=1.0
    }

    proptest! {
        #[test]
        fn clip_is_idempotent(g in prop::collection::vec(-1.0f64..1.0, 0..40), w_max in 0.001f64..0.5) {
            let once = clip_elementwise(&g, w_max);
            prop_assert_eq!(clip_elementwise(&once, w_max), once.clone());
            prop_assert!(once.iter().all(|x| x.abs() <= w_max));
        }

        #[test]
        fn masses_sum_to_one(w in grid_input(), levels in 2usize..40, p in 0.01f64..=1.0, gamma in 0.0f64..0.49) {
            for cfg in [lit(levels, p), safe(levels, p, gamma)] {
                let d = output_distribution(w, &cfg).unwrap();
                let total: f64 = d.masses().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn p_one_reduces_to_stochastic_rounding(w in grid_input(), levels in 2usize..20) {
            let cfg = lit(levels, 1.0);
            let d = output_distribution(w, &cfg).unwrap();
            let k = klevel_output_distribution(w, &cfg).unwrap();
            prop_assert!(d.total_variation(&k) < 1e-12);
        }

        #[test]
        fn negation_reflects_levels(w in grid_input(), levels in 2usize..20, p in 0.05f64..0.99) {
            let cfg = safe(levels, p, 0.2);
            // Exact bin points are excluded: half-open intervals break the symmetry there.
            let on_grid = (0..levels).any(|r| (bin_value(r, &cfg).unwrap() - w).abs() < 1e-9);
            prop_assume!(!on_grid);
            let d = output_distribution(w, &cfg).unwrap();
            let m = output_distribution(-w, &cfg).unwrap();
            let reflected = d.reflected(levels as i64 - 1);
            prop_assert!(m.total_variation(&reflected) < 1e-12);
        }

        #[test]
        fn vector_is_order_independent(
            g in prop::collection::vec(-1.0f64..=1.0, 1..30),
            seed in any::<u64>(),
        ) {
            let cfg = safe(8, 0.6, 0.25);
            let key = StreamKey::new(seed);
            let out = quantize_vector(&g, &cfg, key).unwrap();
            // Evaluate in reverse order with the same per-index streams.
            let mut rev: Vec<QuantizedValue> = (0..g.len())
                .rev()
                .map(|i| quantize_scalar(g[i], &cfg, &mut key.indexed_rng(i as u64)).unwrap())
                .collect();
            rev.reverse();
            prop_assert_eq!(out.clone(), rev);
            for q in out {
                prop_assert_eq!(q.value, bin_value(q.level_index, &cfg).unwrap());
            }
        }
    }
}
