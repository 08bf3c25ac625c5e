//! Labelled feature matrices, client partitioning and CSV ingestion.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stream::StreamKey;

/// Fraction of samples reserved at the server for evaluation.
pub const HOLDOUT_FRACTION: f64 = 0.1;

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    feature_names: Vec<String>,
}

impl LabeledData {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::param("input_dim", "must be at least 1"));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * input_dim,
                actual: features.len(),
            });
        }
        let feature_names = (0..input_dim).map(|j| format!("x{j}")).collect();
        Ok(Self {
            features,
            labels,
            input_dim,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Number of classes implied by the largest label.
    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Labelled data split into client partitions plus a server holdout set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub data: LabeledData,
    pub partitions: Vec<Vec<usize>>,
    pub holdout: Vec<usize>,
}

impl Dataset {
    /// Shuffles all rows, reserves `holdout_fraction` of them (rounded) for
    /// the server and deals the rest round-robin to `clients` partitions.
    pub fn split(
        data: LabeledData,
        clients: usize,
        holdout_fraction: f64,
        key: StreamKey,
    ) -> Result<Self> {
        if clients == 0 {
            return Err(Error::param("clients", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::param(
                "holdout_fraction",
                format!("{holdout_fraction} not in [0, 1)"),
            ));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut key.rng());
        let n_holdout = (data.len() as f64 * holdout_fraction).round() as usize;
        let holdout = order[..n_holdout].to_vec();
        let mut partitions = vec![Vec::new(); clients];
        for (j, &i) in order[n_holdout..].iter().enumerate() {
            partitions[j % clients].push(i);
        }
        if partitions.iter().any(Vec::is_empty) {
            return Err(Error::param(
                "clients",
                format!("{clients} clients but only {} training rows", data.len() - n_holdout),
            ));
        }
        Ok(Self {
            data,
            partitions,
            holdout,
        })
    }

    pub fn training_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.partitions.iter().flatten().copied()
    }

    pub fn training_len(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }
}

/// Gaussian class blobs: each class centre is a random direction scaled to
/// norm `separation`; samples add unit-variance isotropic noise. Labels
/// cycle through the classes so every class is represented.
pub fn synth_data(
    key: StreamKey,
    samples: usize,
    input_dim: usize,
    classes: usize,
    separation: f64,
) -> Result<LabeledData> {
    if classes == 0 || samples < classes {
        return Err(Error::param(
            "samples",
            format!("{samples} samples for {classes} classes"),
        ));
    }
    let mut rng = key.rng();
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..input_dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x * separation / norm).collect()
        })
        .collect();
    let mut features = Vec::with_capacity(samples * input_dim);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let c = i % classes;
        labels.push(c);
        for centre in &centres[c] {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(centre + noise);
        }
    }
    LabeledData::new(features, labels, input_dim)
}

/// Synthetic blobs split 90/10 and dealt evenly to `clients`.
pub fn synth_dataset(
    key: StreamKey,
    samples: usize,
    input_dim: usize,
    classes: usize,
    separation: f64,
    clients: usize,
) -> Result<Dataset> {
    let data = synth_data(key.named("blobs"), samples, input_dim, classes, separation)?;
    Dataset::split(data, clients, HOLDOUT_FRACTION, key.named("split"))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a headed numeric CSV; `label_column` names the integral class
/// label, every other column is a feature.
pub fn load_csv(path: &Path, label_column: &str) -> Result<LabeledData> {
    let file = File::open(path).map_err(|source| Error::Io {
        context: format!("opening {}", path.display()),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| parse_error(path, 1, format!("no column named `{label_column}`")))?;
    let input_dim = headers.len() - 1;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths {
                    expected_len, len, ..
                } => format!("ragged row: {len} fields, header has {expected_len}"),
                _ => e.to_string(),
            };
            parse_error(path, line, message)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                let label: f64 = field
                    .parse()
                    .map_err(|_| parse_error(path, line, format!("label `{field}` is not numeric")))?;
                if label < 0.0 || label.fract() != 0.0 || !label.is_finite() {
                    return Err(parse_error(path, line, format!("label `{field}` is not a class index")));
                }
                labels.push(label as usize);
            } else {
                let x: f64 = field.parse().map_err(|_| {
                    parse_error(path, line, format!("field `{field}` in column {} is not numeric", j + 1))
                })?;
                features.push(x);
            }
        }
    }
    let mut data = LabeledData::new(features, labels, input_dim)?;
    data.feature_names = feature_names;
    Ok(data)
}

/// Writes `data` in the format read by [`load_csv`], label column last.
pub fn write_csv(data: &LabeledData, path: &Path, label_column: &str) -> Result<()> {
    let io = |source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    };
    let file = File::create(path).map_err(io)?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let to_io = |e: csv::Error| Error::Io {
        context: format!("writing {}", path.display()),
        source: e.into(),
    };
    let mut header = data.feature_names.clone();
    header.push(label_column.to_string());
    writer.write_record(&header).map_err(to_io)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.row(i).iter().map(|x| format!("{x:?}")).collect();
        row.push(data.label(i).to_string());
        writer.write_record(&row).map_err(to_io)?;
    }
    writer.flush().map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic() {
        let a = synth_dataset(StreamKey::new(1), 100, 4, 3, 3.0, 5).unwrap();
        let b = synth_dataset(StreamKey::new(1), 100, 4, 3, 3.0, 5).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(StreamKey::new(2), 100, 4, 3, 3.0, 5).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn split_is_disjoint_and_even() {
        let ds = synth_dataset(StreamKey::new(9), 100, 2, 3, 1.0, 3).unwrap();
        assert_eq!(ds.holdout.len(), 10);
        let sizes: Vec<usize> = ds.partitions.iter().map(Vec::len).collect();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1, "{sizes:?}");
        let mut all: Vec<usize> = ds.training_indices().chain(ds.holdout.iter().copied()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_samples() {
        assert!(synth_data(StreamKey::new(0), 2, 2, 3, 1.0).is_err());
        assert!(synth_dataset(StreamKey::new(0), 4, 2, 2, 1.0, 10).is_err());
    }
}
