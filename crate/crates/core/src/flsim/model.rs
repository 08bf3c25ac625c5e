//! One-hidden-layer perceptron: affine, ReLU, affine, softmax cross-entropy.
//!
//! Parameters are a single flat vector in the order
//! `W1 (hidden x input, row-major) | b1 | W2 (classes x hidden) | b2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::LabeledData;
use crate::error::{Error, Result};
use crate::stream::StreamKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams(pub Vec<f64>);

impl ModelParams {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl MlpShape {
    pub fn new(input_dim: usize, hidden_dim: usize, classes: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || classes < 2 {
            return Err(Error::param(
                "model",
                format!("shape ({input_dim}, {hidden_dim}, {classes}) needs positive sizes and >= 2 classes"),
            ));
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            classes,
        })
    }

    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = w1 + self.hidden_dim * self.input_dim;
        let w2 = b1 + self.hidden_dim;
        let b2 = w2 + self.classes * self.hidden_dim;
        Layout {
            w1,
            b1,
            w2,
            b2,
            end: b2 + self.classes,
        }
    }

    /// Flat parameter count.
    pub fn dimension(&self) -> usize {
        self.layout().end
    }

    /// Weights uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init(&self, key: StreamKey) -> ModelParams {
        let l = self.layout();
        let mut rng = key.rng();
        let mut w = vec![0.0; l.end];
        let a1 = 1.0 / (self.input_dim as f64).sqrt();
        let a2 = 1.0 / (self.hidden_dim as f64).sqrt();
        for x in &mut w[l.w1..l.b1] {
            *x = rng.gen_range(-a1..a1);
        }
        for x in &mut w[l.w2..l.b2] {
            *x = rng.gen_range(-a2..a2);
        }
        ModelParams(w)
    }

    fn check(&self, params: &ModelParams, data: &LabeledData) -> Result<()> {
        if params.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: params.dimension(),
            });
        }
        if data.input_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: data.input_dim(),
            });
        }
        Ok(())
    }

    /// Hidden activations and output logits for one input.
    fn forward(&self, w: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout();
        let hidden: Vec<f64> = (0..self.hidden_dim)
            .map(|j| {
                let row = &w[l.w1 + j * self.input_dim..l.w1 + (j + 1) * self.input_dim];
                let z = w[l.b1 + j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        let logits = (0..self.classes)
            .map(|c| {
                let row = &w[l.w2 + c * self.hidden_dim..l.w2 + (c + 1) * self.hidden_dim];
                w[l.b2 + c] + row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        (hidden, logits)
    }

    /// Softmax probabilities and `-ln p[label]`.
    fn softmax_xent(logits: &[f64], label: usize) -> (Vec<f64>, f64) {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let loss = sum.ln() - (logits[label] - max);
        (exps.into_iter().map(|e| e / sum).collect(), loss)
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.classes {
            return Err(Error::IndexOutOfRange {
                index: label,
                len: self.classes,
            });
        }
        Ok(())
    }

    /// Mean cross-entropy over `rows`.
    pub fn loss(&self, params: &ModelParams, data: &LabeledData, rows: &[usize]) -> Result<f64> {
        self.check(params, data)?;
        if rows.is_empty() {
            return Err(Error::param("batch", "must not be empty"));
        }
        let mut total = 0.0;
        for &i in rows {
            self.check_label(data.label(i))?;
            let (_, logits) = self.forward(&params.0, data.row(i));
            total += Self::softmax_xent(&logits, data.label(i)).1;
        }
        Ok(total / rows.len() as f64)
    }

    /// Mean cross-entropy and its gradient over `rows`.
    pub fn loss_and_gradient(
        &self,
        params: &ModelParams,
        data: &LabeledData,
        rows: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        self.check(params, data)?;
        if rows.is_empty() {
            return Err(Error::param("batch", "must not be empty"));
        }
        let l = self.layout();
        let w = &params.0;
        let mut grad = vec![0.0; l.end];
        let mut total = 0.0;
        for &i in rows {
            let label = data.label(i);
            self.check_label(label)?;
            let x = data.row(i);
            let (hidden, logits) = self.forward(w, x);
            let (mut delta_out, loss) = Self::softmax_xent(&logits, label);
            total += loss;
            delta_out[label] -= 1.0;

            let mut delta_hidden = vec![0.0; self.hidden_dim];
            for (c, &dc) in delta_out.iter().enumerate() {
                grad[l.b2 + c] += dc;
                let base = l.w2 + c * self.hidden_dim;
                for j in 0..self.hidden_dim {
                    grad[base + j] += dc * hidden[j];
                    delta_hidden[j] += dc * w[base + j];
                }
            }
            for (j, dh) in delta_hidden.into_iter().enumerate() {
                // ReLU derivative taken as 0 at the kink.
                if hidden[j] <= 0.0 {
                    continue;
                }
                grad[l.b1 + j] += dh;
                let base = l.w1 + j * self.input_dim;
                for (g, xk) in grad[base..base + self.input_dim].iter_mut().zip(x) {
                    *g += dh * xk;
                }
            }
        }
        let n = rows.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }

    pub fn local_gradient(
        &self,
        params: &ModelParams,
        data: &LabeledData,
        batch: &[usize],
    ) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(params, data, batch)?.1)
    }

    pub fn predict(&self, params: &ModelParams, x: &[f64]) -> usize {
        let (_, logits) = self.forward(&params.0, x);
        logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(c, _)| c)
    }

    /// Fraction of `rows` classified correctly; 0 for an empty set.
    pub fn accuracy(&self, params: &ModelParams, data: &LabeledData, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let correct = rows
            .iter()
            .filter(|&&i| self.predict(params, data.row(i)) == data.label(i))
            .count();
        correct as f64 / rows.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_shape_dimension() {
        assert_eq!(MlpShape::new(100, 32, 10).unwrap().dimension(), 3562);
        assert!(MlpShape::new(0, 32, 10).is_err());
        assert!(MlpShape::new(4, 32, 1).is_err());
    }

    #[test]
    fn zero_network_output_bias_gradient() {
        let shape = MlpShape::new(3, 4, 3).unwrap();
        let data = LabeledData::new(
            vec![1.0, 0.5, -0.2, 0.3, 0.1, 0.9, -1.0, 2.0, 0.0],
            vec![0, 1, 2],
            3,
        )
        .unwrap();
        let params = ModelParams::zeros(shape.dimension());
        let (loss, g) = shape.loss_and_gradient(&params, &data, &[0, 1, 2]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        let b2 = shape.dimension() - 3;
        // softmax(0) = 1/3 everywhere; one-hot averages are 1/3 per class.
        for c in 0..3 {
            assert!(g[b2 + c].abs() < 1e-15);
        }
        let (_, g) = shape.loss_and_gradient(&params, &data, &[0, 0, 1]).unwrap();
        assert!((g[b2] - (1.0 / 3.0 - 2.0 / 3.0)).abs() < 1e-15);
        assert!((g[b2 + 1] - 0.0).abs() < 1e-15);
        assert!((g[b2 + 2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let shape = MlpShape::new(2, 3, 2).unwrap();
        let data = LabeledData::new(vec![0.2, -0.4, 1.0, 0.3], vec![0, 1], 2).unwrap();
        let params = shape.init(StreamKey::new(5));
        let a = shape.local_gradient(&params, &data, &[0, 1]).unwrap();
        let b = shape.local_gradient(&params, &data, &[0, 0, 1, 1]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_mismatches() {
        let shape = MlpShape::new(2, 3, 2).unwrap();
        let data = LabeledData::new(vec![0.2, -0.4], vec![5], 2).unwrap();
        let params = shape.init(StreamKey::new(5));
        assert!(shape.loss(&params, &data, &[0]).is_err());
        assert!(shape.loss(&params, &data, &[]).is_err());
        assert!(shape.loss(&ModelParams::zeros(3), &data, &[0]).is_err());
    }
}
