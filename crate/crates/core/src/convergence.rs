//! Optimality-gap recursion under L-smoothness and the PL condition.
//!
//! One step `w_{t+1} = w_t - eta (grad F(w_t) + delta_t)` satisfies
//!
//! ```text
//! F(w_{t+1}) - F* <= X (F(w_t) - F*) + Y_t + Z_t
//! X   = 1 - 2 mu eta (1 - eta L / 2)
//! Y_t = eta^2 (L / 2) |delta_t|^2
//! Z_t = eta (eta L - 1) grad F(w_t)^T delta_t
//! ```
//!
//! whenever `eta <= 2 / L`. Unrolling from `G_0 = F(w_0) - F*` gives
//! `G_T = X^T G_0 + sum_{a=0}^{T-1} (Y_a + Z_a) X^{T-1-a}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flsim::RoundMetrics;

/// Relative slack when comparing the two sides of the descent inequality.
pub const RELATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    #[serde(rename = "L")]
    pub smoothness: f64,
    pub mu: f64,
    pub eta: f64,
    /// `F(w_0) - F*`.
    pub f0_gap: f64,
    #[serde(rename = "T")]
    pub rounds: usize,
}

impl BoundParams {
    pub fn new(smoothness: f64, mu: f64, eta: f64, f0_gap: f64, rounds: usize) -> Result<Self> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} must be finite and > 0")))
            }
        };
        positive("L", smoothness)?;
        positive("mu", mu)?;
        positive("eta", eta)?;
        if mu > smoothness {
            return Err(Error::param("mu", format!("{mu} exceeds L = {smoothness}")));
        }
        if !(f0_gap >= 0.0 && f0_gap.is_finite()) {
            return Err(Error::param("F0_gap", format!("{f0_gap} must be finite and >= 0")));
        }
        Ok(Self {
            smoothness,
            mu,
            eta,
            f0_gap,
            rounds,
        })
    }

    /// The per-step contraction factor `X`.
    pub fn contraction(&self) -> f64 {
        1.0 - 2.0 * self.mu * self.eta * (1.0 - self.eta * self.smoothness / 2.0)
    }

    /// True when `0 < X < 1`.
    pub fn contracts(&self) -> bool {
        let x = self.contraction();
        x > 0.0 && x < 1.0
    }
}

/// `(X, Y, Z)` for one step.
pub fn step_terms(bp: &BoundParams, delta_norm_sq: f64, grad_dot_delta: f64) -> (f64, f64, f64) {
    let (l, eta) = (bp.smoothness, bp.eta);
    let x = bp.contraction();
    let y = eta * eta * (l / 2.0) * delta_norm_sq;
    let z = eta * (-1.0 + eta * l) * grad_dot_delta;
    (x, y, z)
}

/// Per-step perturbation statistics; entry `a` describes the step from
/// `w_a` to `w_{a+1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepTrace {
    pub delta_norm_sq: Vec<f64>,
    pub grad_dot_delta: Vec<f64>,
    /// `F(w_t) - F*` for `t = 0..=steps`.
    pub loss_gap: Vec<f64>,
}

impl StepTrace {
    pub fn new(delta_norm_sq: Vec<f64>, grad_dot_delta: Vec<f64>, loss_gap: Vec<f64>) -> Result<Self> {
        if grad_dot_delta.len() != delta_norm_sq.len() {
            return Err(Error::DimensionMismatch {
                expected: delta_norm_sq.len(),
                actual: grad_dot_delta.len(),
            });
        }
        if loss_gap.len() != delta_norm_sq.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: delta_norm_sq.len() + 1,
                actual: loss_gap.len(),
            });
        }
        if let Some(v) = delta_norm_sq.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::param("delta_norm_sq", format!("{v} < 0")));
        }
        Ok(Self {
            delta_norm_sq,
            grad_dot_delta,
            loss_gap,
        })
    }

    /// A trace with no perturbation at all.
    pub fn noiseless(steps: usize) -> Self {
        Self {
            delta_norm_sq: vec![0.0; steps],
            grad_dot_delta: vec![0.0; steps],
            loss_gap: vec![0.0; steps + 1],
        }
    }

    pub fn steps(&self) -> usize {
        self.delta_norm_sq.len()
    }
}

/// Loss values and perturbations recorded by an instrumented run.
///
/// `losses[t] = F(w_t)` for `t = 0..=T`; `delta_norm[a]` and
/// `grad_dot_delta[a]` belong to the step `w_a -> w_{a+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentedRun {
    pub losses: Vec<f64>,
    pub delta_norm: Vec<f64>,
    pub grad_dot_delta: Vec<f64>,
    pub f_star: Option<f64>,
}

impl InstrumentedRun {
    /// From simulator rows: row `t` holds `F(w_t)` and the perturbation of
    /// the step that produced `w_t`.
    pub fn from_metrics(rows: &[RoundMetrics], f_star: Option<f64>) -> Self {
        Self {
            losses: rows.iter().map(|r| r.train_loss).collect(),
            delta_norm: rows.iter().skip(1).map(|r| r.delta_norm).collect(),
            grad_dot_delta: rows.iter().skip(1).map(|r| r.grad_dot_delta).collect(),
            f_star,
        }
    }

    pub fn trace(&self) -> Result<StepTrace> {
        let f_star = self
            .f_star
            .ok_or_else(|| Error::param("F*", "the optimal loss must be supplied"))?;
        StepTrace::new(
            self.delta_norm.iter().map(|n| n * n).collect(),
            self.grad_dot_delta.clone(),
            self.losses.iter().map(|f| f - f_star).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapBound {
    /// `G_0 ..= G_T`.
    pub values: Vec<f64>,
    pub contraction: f64,
    /// Set when `X` is outside `(0, 1)`: the recursion does not contract.
    pub warning: bool,
}

/// `G_t` for `t = 0..=T` from the per-step `Y_a + Z_a` in `trace`.
pub fn gap_bound(bp: &BoundParams, trace: &StepTrace) -> Result<GapBound> {
    if trace.steps() < bp.rounds {
        return Err(Error::param(
            "trace",
            format!("{} steps recorded, T = {}", trace.steps(), bp.rounds),
        ));
    }
    let mut values = Vec::with_capacity(bp.rounds + 1);
    let mut g = bp.f0_gap;
    values.push(g);
    let mut x = bp.contraction();
    for a in 0..bp.rounds {
        let (xa, y, z) = step_terms(bp, trace.delta_norm_sq[a], trace.grad_dot_delta[a]);
        x = xa;
        g = x * g + y + z;
        values.push(g);
    }
    Ok(GapBound {
        values,
        contraction: x,
        warning: !bp.contracts(),
    })
}

/// The unrolled sum with index range `a = 1..T-1` and weights
/// `X^{T-a-1}`, which leaves out the first step's perturbation. Kept for
/// comparison only; it is not an upper bound in general.
pub fn gap_bound_as_printed(bp: &BoundParams, trace: &StepTrace) -> Result<f64> {
    let t = bp.rounds;
    if trace.steps() < t {
        return Err(Error::param(
            "trace",
            format!("{} steps recorded, T = {t}", trace.steps()),
        ));
    }
    let x = bp.contraction();
    let mut sum = 0.0;
    for a in 1..t {
        let (_, y, z) = step_terms(bp, trace.delta_norm_sq[a], trace.grad_dot_delta[a]);
        sum += (y + z) * x.powi((t - a - 1) as i32);
    }
    Ok(x.powi(t as i32) * bp.f0_gap + sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentCheck {
    /// Index of the model after the step, `t + 1`.
    pub round: usize,
    /// `F(w_{t+1}) - F*`.
    pub lhs: f64,
    /// `X (F(w_t) - F*) + Y_t + Z_t`.
    pub rhs: f64,
    pub holds: bool,
}

/// Checks the one-step inequality for every recorded step. The comparison
/// allows [`RELATIVE_TOLERANCE`] of the terms involved plus a few ulps of
/// the loss magnitude, since gaps are differences of rounded losses.
pub fn verify_descent_inequality(bp: &BoundParams, run: &InstrumentedRun) -> Result<Vec<DescentCheck>> {
    let trace = run.trace()?;
    let loss_scale = run.losses.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    Ok((0..trace.steps())
        .map(|a| {
            let (x, y, z) = step_terms(bp, trace.delta_norm_sq[a], trace.grad_dot_delta[a]);
            let lhs = trace.loss_gap[a + 1];
            let head = x * trace.loss_gap[a];
            let rhs = head + y + z;
            let slack = RELATIVE_TOLERANCE * (lhs.abs() + head.abs() + y.abs() + z.abs())
                + 4.0 * f64::EPSILON * loss_scale;
            DescentCheck {
                round: a + 1,
                lhs,
                rhs,
                holds: lhs <= rhs + slack,
            }
        })
        .collect())
}
