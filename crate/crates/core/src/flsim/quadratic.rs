//! Separable quadratic objective with known smoothness, PL constant and
//! optimum, used to exercise the convergence machinery end to end.
//!
//! Client `n` holds `F_n(w) = 1/2 sum_i lambda_i (w_i - c_{n,i})^2`; with
//! equal client weights the global objective is the client mean, whose
//! minimum value is `1/2 sum_i lambda_i Var_n(c_{n,i})`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    /// Smallest curvature; this is the PL constant.
    pub curvature_min: f64,
    /// Largest curvature; this is the smoothness constant.
    pub curvature_max: f64,
    /// Client centres are drawn uniformly from `[-spread, spread]`.
    pub center_spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    curvatures: Vec<f64>,
    centers: Vec<Vec<f64>>,
}

impl QuadraticProblem {
    pub fn new(spec: &QuadraticSpec, clients: usize, key: StreamKey) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if !(spec.curvature_min > 0.0 && spec.curvature_min <= spec.curvature_max) {
            return Err(Error::param(
                "curvature_min",
                "need 0 < curvature_min <= curvature_max",
            ));
        }
        if !(spec.center_spread >= 0.0) {
            return Err(Error::param("center_spread", "must be non-negative"));
        }
        let curvatures = (0..spec.dim)
            .map(|i| {
                if spec.dim == 1 {
                    spec.curvature_max
                } else {
                    let t = i as f64 / (spec.dim - 1) as f64;
                    spec.curvature_min + t * (spec.curvature_max - spec.curvature_min)
                }
            })
            .collect();
        let mut rng = key.rng();
        let centers = (0..clients)
            .map(|_| {
                (0..spec.dim)
                    .map(|_| {
                        if spec.center_spread == 0.0 {
                            0.0
                        } else {
                            rng.gen_range(-spec.center_spread..=spec.center_spread)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            curvatures,
            centers,
        })
    }

    pub fn dimension(&self) -> usize {
        self.curvatures.len()
    }

    pub fn clients(&self) -> usize {
        self.centers.len()
    }

    pub fn smoothness(&self) -> f64 {
        self.curvatures.iter().copied().fold(0.0, f64::max)
    }

    pub fn pl_constant(&self) -> f64 {
        self.curvatures.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn client_loss(&self, client: usize, w: &[f64]) -> f64 {
        0.5 * self
            .curvatures
            .iter()
            .zip(w)
            .zip(&self.centers[client])
            .map(|((l, x), c)| l * (x - c) * (x - c))
            .sum::<f64>()
    }

    pub fn client_gradient(&self, client: usize, w: &[f64]) -> Vec<f64> {
        self.curvatures
            .iter()
            .zip(w)
            .zip(&self.centers[client])
            .map(|((l, x), c)| l * (x - c))
            .collect()
    }

    pub fn mean_center(&self) -> Vec<f64> {
        let n = self.clients() as f64;
        (0..self.dimension())
            .map(|i| self.centers.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect()
    }

    /// Minimum of the client-averaged objective.
    pub fn optimum(&self) -> f64 {
        let mean = self.mean_center();
        let n = self.clients() as f64;
        0.5 * (0..self.dimension())
            .map(|i| {
                let var = self.centers.iter().map(|c| (c[i] - mean[i]).powi(2)).sum::<f64>() / n;
                self.curvatures[i] * var
            })
            .sum::<f64>()
    }
}
