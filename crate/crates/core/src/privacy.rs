//! Privacy accounting for the quantizer.
//!
//! Two kinds of numbers live here and are never mixed up:
//!
//! * closed-form bounds (`*_paper`): the published pure-DP and RDP
//!   expressions, subsampling and dimension composition included;
//! * oracles (`*_oracle_*`): exact quantities computed from the output
//!   distributions of whichever mechanism is actually configured.
//!
//! [`PrivacyReport`] carries both side by side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{renyi_divergence, tgeo_pmf, TGeoParams};
use crate::quantizer::{
    bin_value, klevel_output_distribution, output_distribution, QuantizerConfig,
};

/// Default number of uniform grid points for the pure-DP oracle.
pub const DEFAULT_ORACLE_GRID: usize = 512;

fn check_closed_form_domain(levels: usize, p: f64) -> Result<()> {
    if levels < 2 {
        return Err(Error::param("R", format!("{levels} levels; need at least 2")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(
            "p",
            format!("{p} not in (0, 1); the closed-form bound is infinite or undefined there"),
        ));
    }
    Ok(())
}

fn check_composition(dimension: usize, sampling_rate: f64) -> Result<()> {
    if dimension == 0 {
        return Err(Error::param("d", "dimension must be at least 1"));
    }
    if !(sampling_rate > 0.0 && sampling_rate <= 1.0) {
        return Err(Error::param("kappa", format!("{sampling_rate} not in (0, 1]")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} must be finite and > 1")))
    }
}

/// Validated inputs to the closed-form accountant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    #[serde(rename = "R")]
    pub levels: usize,
    pub p: f64,
    pub d: usize,
    pub kappa: f64,
    pub alpha: f64,
}

impl PrivacyParams {
    pub fn new(levels: usize, p: f64, d: usize, kappa: f64, alpha: f64) -> Result<Self> {
        check_closed_form_domain(levels, p)?;
        check_composition(d, kappa)?;
        check_alpha(alpha)?;
        Ok(Self {
            levels,
            p,
            d,
            kappa,
            alpha,
        })
    }
}

/// Worst-case pure-DP loss of one scalar: `-(ln p + (R - 2) ln(1 - p))`.
pub fn eps_scalar_paper(levels: usize, p: f64) -> Result<f64> {
    check_closed_form_domain(levels, p)?;
    Ok(-(p.ln() + (levels as f64 - 2.0) * (-p).ln_1p()))
}

/// Scalar bound composed over `d` coordinates with the linear `kappa` factor.
pub fn eps_vector_paper(levels: usize, p: f64, d: usize, kappa: f64) -> Result<f64> {
    check_composition(d, kappa)?;
    Ok(d as f64 * kappa * eps_scalar_paper(levels, p)?)
}

/// Closed-form RDP of one scalar between the extremal inputs.
///
/// Uses the `1 / (alpha - 1)` prefactor, evaluated in the log domain:
///
/// ```text
/// log{ p q^(-2a + (1-a)R + 1) / (1 - q^(R-1)) * a (q^((2a-1)R) - 1) / (q^(2a-1) - 1) } / (a - 1)
/// ```
pub fn rdp_scalar_paper(levels: usize, p: f64, alpha: f64) -> Result<f64> {
    check_closed_form_domain(levels, p)?;
    check_alpha(alpha)?;
    let ln_q = (-p).ln_1p();
    let r = levels as f64;
    let a = alpha;
    // ln(1 - q^x) for x > 0.
    let ln_one_minus_qpow = |x: f64| (-(x * ln_q).exp()).ln_1p();
    let ln_inner = p.ln() + (-2.0 * a + (1.0 - a) * r + 1.0) * ln_q - ln_one_minus_qpow(r - 1.0)
        + a.ln()
        + ln_one_minus_qpow((2.0 * a - 1.0) * r)
        - ln_one_minus_qpow(2.0 * a - 1.0);
    Ok(ln_inner / (alpha - 1.0))
}

/// Subsampled, `d`-fold composed RDP: `kappa^2 d rdp_scalar_paper`.
///
/// The quadratic amplification is only claimed for `alpha <= 2`; larger
/// orders are refused.
pub fn rdp_vector_paper(levels: usize, p: f64, alpha: f64, d: usize, kappa: f64) -> Result<f64> {
    check_composition(d, kappa)?;
    if alpha > 2.0 {
        return Err(Error::param(
            "alpha",
            format!("{alpha} > 2: the kappa^2 subsampling amplification only holds for alpha <= 2"),
        ));
    }
    Ok(kappa * kappa * d as f64 * rdp_scalar_paper(levels, p, alpha)?)
}

/// A scalar randomizer whose output law the oracle can enumerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarMechanism {
    Qmgeo(QuantizerConfig),
    /// Stochastic rounding to the two neighbouring levels; `p` and the
    /// mixture settings of the config are ignored.
    KLevel(QuantizerConfig),
}

impl ScalarMechanism {
    pub fn config(&self) -> &QuantizerConfig {
        match self {
            ScalarMechanism::Qmgeo(c) | ScalarMechanism::KLevel(c) => c,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScalarMechanism::Qmgeo(c) => format!("qmgeo/{}", c.mode()),
            ScalarMechanism::KLevel(_) => "k-level".to_string(),
        }
    }

    pub fn output_masses(&self, w: f64) -> Result<Vec<f64>> {
        let d = match self {
            ScalarMechanism::Qmgeo(c) => output_distribution(w, c)?,
            ScalarMechanism::KLevel(c) => klevel_output_distribution(w, c)?,
        };
        Ok(d.masses().to_vec())
    }
}

/// The oracle input grid: `grid_points` uniform points over
/// `[-w_max, w_max]` merged with every level value.
pub fn oracle_grid(cfg: &QuantizerConfig, grid_points: usize) -> Vec<f64> {
    let w_max = cfg.w_max();
    let mut grid: Vec<f64> = (0..grid_points)
        .map(|i| {
            if grid_points == 1 {
                0.0
            } else {
                (-w_max + 2.0 * w_max * i as f64 / (grid_points - 1) as f64).clamp(-w_max, w_max)
            }
        })
        .chain((0..cfg.levels()).map(|r| bin_value(r, cfg).expect("r < R")))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Largest log-ratio `|ln Pr[M(w) = v] - ln Pr[M(w') = v]|` over all pairs
/// of inputs in `grid` and all output levels; `+inf` if some level is
/// reachable from one input and unreachable from another.
pub fn eps_oracle_on_grid(mech: &ScalarMechanism, grid: &[f64]) -> Result<f64> {
    let levels = mech.config().levels();
    let mut max = vec![0.0f64; levels];
    let mut min = vec![f64::INFINITY; levels];
    for &w in grid {
        for (v, m) in mech.output_masses(w)?.into_iter().enumerate() {
            max[v] = max[v].max(m);
            min[v] = min[v].min(m);
        }
    }
    let mut eps = 0.0f64;
    for v in 0..levels {
        if max[v] == 0.0 {
            continue;
        }
        if min[v] == 0.0 {
            return Ok(f64::INFINITY);
        }
        eps = eps.max(max[v].ln() - min[v].ln());
    }
    Ok(eps)
}

pub fn eps_oracle_scalar(mech: &ScalarMechanism, grid_points: usize) -> Result<f64> {
    let levels = mech.config().levels();
    if grid_points < levels {
        return Err(Error::param(
            "grid_points",
            format!("{grid_points} < R = {levels}"),
        ));
    }
    eps_oracle_on_grid(mech, &oracle_grid(mech.config(), grid_points))
}

/// Direct-summation RDP between the extremal output laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpOracle {
    /// `D_alpha(P || P')`, `P` truncated geometric on `{1..R}` normalized by
    /// `1 - q^R`, `P'(k) = P(R + 1 - k)`.
    pub exact: f64,
    /// The published summand evaluated term by term: normalizer
    /// `1 - q^(R-1)` and denominator mass `p q^(R+1-i)`. `None` for `R < 2`.
    pub paper_literal: Option<f64>,
}

pub fn rdp_oracle_scalar(levels: usize, p: f64, alpha: f64) -> Result<RdpOracle> {
    check_alpha(alpha)?;
    let params = TGeoParams::new(p, levels.max(1))?;
    let forward = tgeo_pmf(params);
    let backward = forward.reflected(levels as i64 + 1);
    let exact = renyi_divergence(&forward, &backward, alpha)?;

    let paper_literal = if levels >= 2 && p < 1.0 {
        let ln_p = p.ln();
        let ln_q = (-p).ln_1p();
        let ln_z = (-((levels as f64 - 1.0) * ln_q).exp()).ln_1p();
        let terms = (1..=levels).map(|i| {
            let i = i as f64;
            let num = ln_p + (i - 1.0) * ln_q - ln_z;
            let den = ln_p + (levels as f64 + 1.0 - i) * ln_q - ln_z;
            alpha * num - (alpha - 1.0) * den
        });
        Some(log_sum_exp(terms) / (alpha - 1.0))
    } else {
        None
    };
    Ok(RdpOracle {
        exact,
        paper_literal,
    })
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Linear composition across rounds (pure DP, or RDP at a fixed order).
pub fn compose_rounds(per_round_eps: f64, rounds: usize) -> Result<f64> {
    if !(per_round_eps >= 0.0) {
        return Err(Error::param("per_round_eps", format!("{per_round_eps} < 0")));
    }
    if rounds == 0 {
        return Err(Error::param("rounds", "must be at least 1"));
    }
    Ok(per_round_eps * rounds as f64)
}

/// Standard conversion of an RDP guarantee to `(eps, delta)`-DP.
pub fn rdp_to_dp(eps_rdp: f64, alpha: f64, delta: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param("delta", format!("{delta} not in (0, 1]")));
    }
    Ok(eps_rdp + (1.0 / delta).ln() / (alpha - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSeries {
    /// Scalar pure-DP bound against `p` at fixed `R`.
    EpsVsP,
    /// Scalar RDP bound against `alpha` at fixed `(R, p)`.
    RdpVsAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub eps_paper: f64,
    /// Direct-sum oracle (true reversal); only for `RdpVsAlpha`.
    pub eps_oracle: Option<f64>,
}

/// Tabulates a closed-form curve. `p` is ignored for `EpsVsP`.
pub fn sweep(series: SweepSeries, levels: usize, p: f64, grid: &[f64]) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|&x| match series {
            SweepSeries::EpsVsP => Ok(SweepRow {
                x,
                eps_paper: eps_scalar_paper(levels, x)?,
                eps_oracle: None,
            }),
            SweepSeries::RdpVsAlpha => Ok(SweepRow {
                x,
                eps_paper: rdp_scalar_paper(levels, p, x)?,
                eps_oracle: Some(rdp_oracle_scalar(levels, p, x)?.exact),
            }),
        })
        .collect()
}

/// Closed-form and oracle epsilons for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyReport {
    pub eps_pure_scalar: f64,
    pub eps_pure_vector: f64,
    pub eps_rdp_scalar: f64,
    pub eps_rdp_vector: f64,
    /// Sup log-ratio of the configured mechanism; may be `+inf`.
    pub eps_oracle_scalar: f64,
    /// Exact extremal-pair RDP (true reversal).
    pub rdp_oracle_scalar: f64,
    /// Published summand evaluated directly; differs from `eps_rdp_scalar`
    /// by `ln(alpha q^-(2 alpha - 1)) / (alpha - 1)`.
    pub rdp_oracle_scalar_paper_literal: f64,
    pub params: PrivacyParams,
    pub mechanism_mode: String,
    pub oracle_grid_points: usize,
    pub notes: Vec<String>,
}

impl PrivacyReport {
    pub fn build(params: PrivacyParams, mech: &ScalarMechanism, grid_points: usize) -> Result<Self> {
        let PrivacyParams {
            levels,
            p,
            d,
            kappa,
            alpha,
        } = params;
        let rdp = rdp_oracle_scalar(levels, p, alpha)?;
        let mut notes = vec![
            "eps_pure_vector applies a linear kappa factor, not the log(1 + kappa(e^eps - 1)) amplification form".to_string(),
            "eps_rdp_vector takes the O(kappa^2) subsampling constant as 1".to_string(),
        ];
        if mech.config().levels() != levels {
            notes.push(format!(
                "oracle mechanism uses R = {}, closed forms use R = {levels}",
                mech.config().levels()
            ));
        }
        Ok(Self {
            eps_pure_scalar: eps_scalar_paper(levels, p)?,
            eps_pure_vector: eps_vector_paper(levels, p, d, kappa)?,
            eps_rdp_scalar: rdp_scalar_paper(levels, p, alpha)?,
            eps_rdp_vector: rdp_vector_paper(levels, p, alpha, d, kappa)?,
            eps_oracle_scalar: eps_oracle_scalar(mech, grid_points)?,
            rdp_oracle_scalar: rdp.exact,
            rdp_oracle_scalar_paper_literal: rdp.paper_literal.unwrap_or(f64::NAN),
            params,
            mechanism_mode: mech.label(),
            oracle_grid_points: grid_points,
            notes,
        })
    }
}
