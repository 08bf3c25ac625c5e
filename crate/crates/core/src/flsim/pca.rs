//! Principal component projection by deflated power iteration.

use rand::Rng;

use super::data::{Dataset, LabeledData};
use crate::error::{Error, Result};
use crate::stream::StreamKey;

const MAX_ITERATIONS: usize = 20_000;
const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Fitted projection: mean and the top-k covariance eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    total_variance: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

impl Pca {
    /// Fits on the given rows of `data`.
    pub fn fit(data: &LabeledData, rows: &[usize], k: usize, key: StreamKey) -> Result<Self> {
        let n = data.input_dim();
        if k == 0 || k > n {
            return Err(Error::param("k", format!("{k} not in 1..={n}")));
        }
        if rows.len() < 2 {
            return Err(Error::param("rows", "need at least two samples"));
        }
        let mut mean = vec![0.0; n];
        for &i in rows {
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows.len() as f64);

        let mut cov = vec![0.0; n * n];
        for &i in rows {
            let c: Vec<f64> = data.row(i).iter().zip(&mean).map(|(x, m)| x - m).collect();
            for a in 0..n {
                for b in a..n {
                    cov[a * n + b] += c[a] * c[b];
                }
            }
        }
        let denom = (rows.len() - 1) as f64;
        for a in 0..n {
            for b in a..n {
                let v = cov[a * n + b] / denom;
                cov[a * n + b] = v;
                cov[b * n + a] = v;
            }
        }
        let total_variance: f64 = (0..n).map(|a| cov[a * n + a]).sum();
        let scale = total_variance.max(f64::MIN_POSITIVE);

        let mut rng = key.rng();
        let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut eigenvalues = Vec::with_capacity(k);
        for _ in 0..k {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut lambda = 0.0;
            let mut residual = f64::INFINITY;
            for _ in 0..MAX_ITERATIONS {
                // Keep the iterate orthogonal to what has been found already.
                for c in &components {
                    let proj = dot(&v, c);
                    v.iter_mut().zip(c).for_each(|(x, y)| *x -= proj * y);
                }
                let len = norm(&v);
                if len == 0.0 {
                    break;
                }
                v.iter_mut().for_each(|x| *x /= len);
                let w = mat_vec(&cov, n, &v);
                lambda = dot(&v, &w);
                residual = w
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - lambda * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if residual <= RESIDUAL_TOLERANCE * scale {
                    break;
                }
                v = w;
            }
            // A numerically zero remaining spectrum makes any direction valid.
            if residual > RESIDUAL_TOLERANCE * scale && lambda.abs() > RESIDUAL_TOLERANCE * scale {
                return Err(Error::Numerical {
                    message: format!(
                        "power iteration for component {} did not converge",
                        components.len() + 1
                    ),
                    residual,
                });
            }
            // Deflation: subsequent iterations see cov - lambda v v^T.
            for a in 0..n {
                for b in 0..n {
                    cov[a * n + b] -= lambda * v[a] * v[b];
                }
            }
            components.push(v);
            eigenvalues.push(lambda.max(0.0));
        }
        Ok(Self {
            mean,
            components,
            eigenvalues,
            total_variance,
        })
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance == 0.0 {
            return 1.0;
        }
        self.eigenvalues.iter().sum::<f64>() / self.total_variance
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centred: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components.iter().map(|c| dot(c, &centred)).collect()
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, &coef) in self.components.iter().zip(z) {
            x.iter_mut().zip(c).for_each(|(a, b)| *a += coef * b);
        }
        x
    }

    pub fn transform(&self, data: &LabeledData) -> Result<LabeledData> {
        let mut features = Vec::with_capacity(data.len() * self.components.len());
        for i in 0..data.len() {
            features.extend(self.project(data.row(i)));
        }
        LabeledData::new(features, data.labels().to_vec(), self.components.len())
    }
}

/// Fits on the training partitions only and projects every row with that
/// basis; partitions and holdout are preserved.
pub fn pca_reduce(dataset: &Dataset, k: usize, key: StreamKey) -> Result<(Dataset, Pca)> {
    let train: Vec<usize> = dataset.training_indices().collect();
    let pca = Pca::fit(&dataset.data, &train, k, key)?;
    let reduced = Dataset {
        data: pca.transform(&dataset.data)?,
        partitions: dataset.partitions.clone(),
        holdout: dataset.holdout.clone(),
    };
    Ok((reduced, pca))
}
