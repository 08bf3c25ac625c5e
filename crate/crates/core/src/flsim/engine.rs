use std::fmt;
use std::path::PathBuf;

use rand::seq::index;
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::data::{load_csv, synth_data, Dataset, HOLDOUT_FRACTION};
use super::model::{MlpShape, ModelParams};
use super::pca::pca_reduce;
use super::quadratic::{QuadraticProblem, QuadraticSpec};
use crate::error::{Error, Result};
use crate::privacy::{compose_rounds, eps_vector_paper, rdp_vector_paper};
use crate::quantizer::{clip_elementwise, quantize_vector, QuantizerConfig};
use crate::stream::StreamKey;

/// Either no quantization (`"none"` in JSON) or a QMGeo configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum QuantizerSetting {
    #[default]
    None,
    Qmgeo(QuantizerConfig),
}

impl QuantizerSetting {
    pub fn config(&self) -> Option<&QuantizerConfig> {
        match self {
            QuantizerSetting::None => None,
            QuantizerSetting::Qmgeo(c) => Some(c),
        }
    }
}

impl Serialize for QuantizerSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QuantizerSetting::None => s.serialize_str("none"),
            QuantizerSetting::Qmgeo(c) => c.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for QuantizerSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct SettingVisitor;

        impl<'de> Visitor<'de> for SettingVisitor {
            type Value = QuantizerSetting;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"none\" or a quantizer object")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                if v == "none" {
                    Ok(QuantizerSetting::None)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> std::result::Result<Self::Value, A::Error> {
                QuantizerConfig::deserialize(de::value::MapAccessDeserializer::new(map))
                    .map(QuantizerSetting::Qmgeo)
            }
        }

        d.deserialize_any(SettingVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `w <- w - eta * sum_n update_n`.
    #[default]
    Sum,
    /// `w <- w - eta * sum_n (|B_n| / B) update_n`.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Mlp {
        input_dim: usize,
        hidden_dim: usize,
        classes: usize,
    },
    Quadratic {
        dim: usize,
        curvature_min: f64,
        curvature_max: f64,
        center_spread: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        samples: usize,
        input_dim: usize,
        classes: usize,
        separation: f64,
        /// Defaults to the run's master seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
}

fn default_alpha() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlConfig {
    pub clients: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub quantizer: QuantizerSetting,
    /// Element-wise clip bound for unquantized runs; quantized runs clip at
    /// the quantizer's `w_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_threshold: Option<f64>,
    /// Rényi order for per-round reporting.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub master_seed: u64,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_dim: Option<usize>,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Sampling rate used for accounting instead of `batch_size / |B_n|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_override: Option<f64>,
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::param("clients", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(Error::param("rounds", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::param("alpha", "must be > 1"));
        }
        if let Some(c) = self.quantizer.config() {
            if self.alpha > 2.0 {
                return Err(Error::param(
                    "alpha",
                    "subsampled RDP accounting needs alpha <= 2",
                ));
            }
            if let Some(t) = self.clip_threshold {
                if t != c.w_max() {
                    return Err(Error::param(
                        "clip_threshold",
                        "conflicts with quantizer w_max; omit it for quantized runs",
                    ));
                }
            }
        }
        if let Some(t) = self.clip_threshold {
            if !(t > 0.0) {
                return Err(Error::param("clip_threshold", "must be positive"));
            }
        }
        if let Some(k) = self.kappa_override {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::param("kappa_override", "must be in (0, 1]"));
            }
        }
        match &self.model {
            ModelSpec::Mlp { .. } if self.dataset.is_none() => {
                Err(Error::param("dataset", "required for the mlp model"))
            }
            _ => Ok(()),
        }
    }

    fn clip_bound(&self) -> Option<f64> {
        self.quantizer
            .config()
            .map(QuantizerConfig::w_max)
            .or(self.clip_threshold)
    }
}

/// Per-round telemetry. Row 0 describes the initial model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Client-weighted global loss at the model after this round.
    pub train_loss: f64,
    /// `None` for objectives without a classifier.
    pub holdout_accuracy: Option<f64>,
    /// Norm of aggregate transmitted update minus aggregate clipped update.
    pub delta_norm: f64,
    /// Inner product of the aggregate clipped update with that difference.
    pub grad_dot_delta: f64,
    pub eps_round_pure: f64,
    pub eps_round_rdp: f64,
    /// Linear composition of `eps_round_rdp` up to this round.
    pub eps_cumulative: f64,
    pub client_delta_norms: Vec<f64>,
}

/// Run-level summary; `config` reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config: FlConfig,
    pub dimension: usize,
    pub sampling_rate: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub eps_round_pure: f64,
    pub eps_round_rdp: f64,
    pub eps_cumulative: f64,
    pub clipped_entries: u64,
    /// Known only for the quadratic objective.
    pub optimum: Option<f64>,
    pub smoothness: Option<f64>,
    pub pl_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Vec<RoundMetrics>,
    pub summary: RunSummary,
}

/// What the clients hold.
#[derive(Debug, Clone)]
pub enum Task {
    Classifier { shape: MlpShape, dataset: Dataset },
    Quadratic(QuadraticProblem),
}

impl Task {
    /// Builds the task described by `cfg`, loading or synthesizing data.
    pub fn from_config(cfg: &FlConfig) -> Result<Self> {
        cfg.validate()?;
        let root = StreamKey::new(cfg.master_seed);
        match &cfg.model {
            ModelSpec::Quadratic {
                dim,
                curvature_min,
                curvature_max,
                center_spread,
            } => {
                let spec = QuadraticSpec {
                    dim: *dim,
                    curvature_min: *curvature_min,
                    curvature_max: *curvature_max,
                    center_spread: *center_spread,
                };
                Ok(Task::Quadratic(QuadraticProblem::new(
                    &spec,
                    cfg.clients,
                    root.named("quadratic"),
                )?))
            }
            ModelSpec::Mlp {
                input_dim,
                hidden_dim,
                classes,
            } => {
                let source = cfg.dataset.as_ref().expect("validated");
                let (data, split_key) = match source {
                    DatasetSource::Synthetic {
                        samples,
                        input_dim,
                        classes,
                        separation,
                        seed,
                    } => {
                        let key = StreamKey::new(seed.unwrap_or(cfg.master_seed));
                        (
                            synth_data(key.named("blobs"), *samples, *input_dim, *classes, *separation)?,
                            key.named("split"),
                        )
                    }
                    DatasetSource::Csv { path, label_column } => {
                        (load_csv(path, label_column)?, root.named("split"))
                    }
                };
                let mut dataset = Dataset::split(data, cfg.clients, HOLDOUT_FRACTION, split_key)?;
                if let Some(k) = cfg.pca_dim {
                    dataset = pca_reduce(&dataset, k, root.named("pca"))?.0;
                }
                let shape = MlpShape::new(*input_dim, *hidden_dim, *classes)?;
                if dataset.data.input_dim() != shape.input_dim {
                    return Err(Error::param(
                        "model.input_dim",
                        format!(
                            "{} but the (reduced) data has {} features",
                            shape.input_dim,
                            dataset.data.input_dim()
                        ),
                    ));
                }
                if dataset.data.classes() > shape.classes {
                    return Err(Error::param(
                        "model.classes",
                        format!("{} but labels go up to {}", shape.classes, dataset.data.classes() - 1),
                    ));
                }
                Ok(Task::Classifier { shape, dataset })
            }
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Task::Classifier { shape, .. } => shape.dimension(),
            Task::Quadratic(q) => q.dimension(),
        }
    }

    fn clients(&self) -> usize {
        match self {
            Task::Classifier { dataset, .. } => dataset.partitions.len(),
            Task::Quadratic(q) => q.clients(),
        }
    }

    /// `|B_n| / B` for each client.
    pub fn client_weights(&self) -> Vec<f64> {
        match self {
            Task::Classifier { dataset, .. } => {
                let total = dataset.training_len() as f64;
                dataset.partitions.iter().map(|p| p.len() as f64 / total).collect()
            }
            Task::Quadratic(q) => vec![1.0 / q.clients() as f64; q.clients()],
        }
    }

    fn init(&self, key: StreamKey) -> ModelParams {
        match self {
            Task::Classifier { shape, .. } => shape.init(key),
            Task::Quadratic(q) => ModelParams::zeros(q.dimension()),
        }
    }

    /// Global loss `sum_n (|B_n| / B) F_n(w)`.
    pub fn global_loss(&self, params: &ModelParams) -> Result<f64> {
        let weights = self.client_weights();
        let mut total = 0.0;
        for (n, a) in weights.iter().enumerate() {
            total += a * match self {
                Task::Classifier { shape, dataset } => {
                    shape.loss(params, &dataset.data, &dataset.partitions[n])?
                }
                Task::Quadratic(q) => q.client_loss(n, &params.0),
            };
        }
        Ok(total)
    }

    fn holdout_accuracy(&self, params: &ModelParams) -> Option<f64> {
        match self {
            Task::Classifier { shape, dataset } => {
                Some(shape.accuracy(params, &dataset.data, &dataset.holdout))
            }
            Task::Quadratic(_) => None,
        }
    }

    /// `batch_size / |B_n|` for each client (1 for the full-gradient quadratic).
    pub fn sampling_rates(&self, batch_size: usize) -> Vec<f64> {
        match self {
            Task::Classifier { dataset, .. } => dataset
                .partitions
                .iter()
                .map(|p| batch_size as f64 / p.len() as f64)
                .collect(),
            Task::Quadratic(q) => vec![1.0; q.clients()],
        }
    }

    fn raw_gradient(
        &self,
        params: &ModelParams,
        client: usize,
        batch_size: usize,
        key: StreamKey,
    ) -> Result<Vec<f64>> {
        match self {
            Task::Classifier { shape, dataset } => {
                let part = &dataset.partitions[client];
                if batch_size > part.len() {
                    return Err(Error::param(
                        "batch_size",
                        format!("{batch_size} exceeds client {client}'s {} samples", part.len()),
                    ));
                }
                let batch: Vec<usize> = index::sample(&mut key.rng(), part.len(), batch_size)
                    .into_iter()
                    .map(|j| part[j])
                    .collect();
                shape.local_gradient(params, &dataset.data, &batch)
            }
            Task::Quadratic(q) => Ok(q.client_gradient(client, &params.0)),
        }
    }
}

/// One client's contribution in a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    /// What goes over the wire: quantized values, or the clipped gradient.
    pub transmitted: Vec<f64>,
    /// Clipped, unquantized gradient.
    pub clipped: Vec<f64>,
    pub entries_clipped: u64,
    pub sampling_rate: f64,
}

/// Mini-batch gradient, element-wise clip, then quantization. Randomness
/// comes from `key` only: `key.named("batch")` for the mini-batch and
/// `key.named("quantize")` for the per-element quantizer streams.
pub fn client_update(
    task: &Task,
    params: &ModelParams,
    client: usize,
    cfg: &FlConfig,
    key: StreamKey,
) -> Result<ClientUpdate> {
    let raw = task.raw_gradient(params, client, cfg.batch_size, key.named("batch"))?;
    let (clipped, entries_clipped) = match cfg.clip_bound() {
        Some(bound) => {
            let c = clip_elementwise(&raw, bound);
            let n = raw.iter().zip(&c).filter(|(a, b)| a != b).count() as u64;
            (c, n)
        }
        None => (raw, 0),
    };
    let transmitted = match cfg.quantizer.config() {
        Some(q) => quantize_vector(&clipped, q, key.named("quantize"))?
            .into_iter()
            .map(|v| v.value)
            .collect(),
        None => clipped.clone(),
    };
    Ok(ClientUpdate {
        transmitted,
        clipped,
        entries_clipped,
        sampling_rate: task.sampling_rates(cfg.batch_size)[client],
    })
}

/// `w - eta * sum_n weight_n * update_n`; `weights = None` means all ones.
pub fn server_aggregate(
    params: &ModelParams,
    updates: &[Vec<f64>],
    weights: Option<&[f64]>,
    eta: f64,
) -> Result<ModelParams> {
    let d = params.dimension();
    let mut next = params.0.clone();
    for (n, u) in updates.iter().enumerate() {
        if u.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: u.len(),
            });
        }
        let a = weights.map_or(1.0, |w| w[n]);
        next.iter_mut().zip(u).for_each(|(w, x)| *w -= eta * a * x);
    }
    Ok(ModelParams(next))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-round pure-DP and RDP epsilons of the configured quantizer.
fn round_epsilons(cfg: &FlConfig, dimension: usize, kappa: f64) -> Result<(f64, f64)> {
    match cfg.quantizer.config() {
        Some(q) if q.p() < 1.0 => Ok((
            eps_vector_paper(q.levels(), q.p(), dimension, kappa)?,
            rdp_vector_paper(q.levels(), q.p(), cfg.alpha, dimension, kappa)?,
        )),
        _ => Ok((f64::INFINITY, f64::INFINITY)),
    }
}

/// Runs `cfg.rounds` rounds on a prepared task.
pub fn run_on(cfg: &FlConfig, task: &Task) -> Result<RunOutput> {
    cfg.validate()?;
    if task.clients() != cfg.clients {
        return Err(Error::param("clients", "task was built for a different client count"));
    }
    let root = StreamKey::new(cfg.master_seed);
    let dimension = task.dimension();
    let client_weights = task.client_weights();
    let agg_weights: Option<&[f64]> = match cfg.aggregation {
        Aggregation::Sum => None,
        Aggregation::Weighted => Some(&client_weights),
    };
    let kappa = cfg.kappa_override.unwrap_or_else(|| {
        task.sampling_rates(cfg.batch_size)
            .into_iter()
            .fold(0.0, f64::max)
            .min(1.0)
    });
    let (eps_pure, eps_rdp) = round_epsilons(cfg, dimension, kappa)?;

    let mut params = task.init(root.named("init"));
    let initial_loss = task.global_loss(&params)?;
    let mut metrics = Vec::with_capacity(cfg.rounds + 1);
    metrics.push(RoundMetrics {
        round: 0,
        train_loss: initial_loss,
        holdout_accuracy: task.holdout_accuracy(&params),
        delta_norm: 0.0,
        grad_dot_delta: 0.0,
        eps_round_pure: 0.0,
        eps_round_rdp: 0.0,
        eps_cumulative: 0.0,
        client_delta_norms: vec![0.0; cfg.clients],
    });
    let mut clipped_entries = 0u64;

    for t in 0..cfg.rounds {
        let round_key = root.named("round").child(t as u64);
        let updates = (0..cfg.clients)
            .map(|n| client_update(task, &params, n, cfg, round_key.child(n as u64)))
            .collect::<Result<Vec<_>>>()?;

        let mut raw = vec![0.0; dimension];
        let mut sent = vec![0.0; dimension];
        let mut client_delta_norms = Vec::with_capacity(cfg.clients);
        for (n, u) in updates.iter().enumerate() {
            let a = agg_weights.map_or(1.0, |w| w[n]);
            for i in 0..dimension {
                raw[i] += a * u.clipped[i];
                sent[i] += a * u.transmitted[i];
            }
            let diff: Vec<f64> = u.transmitted.iter().zip(&u.clipped).map(|(x, y)| x - y).collect();
            client_delta_norms.push(norm(&diff));
            clipped_entries += u.entries_clipped;
        }
        let delta: Vec<f64> = sent.iter().zip(&raw).map(|(s, r)| s - r).collect();
        let grad_dot_delta = raw.iter().zip(&delta).map(|(g, d)| g * d).sum();

        let transmitted: Vec<Vec<f64>> = updates.into_iter().map(|u| u.transmitted).collect();
        params = server_aggregate(&params, &transmitted, agg_weights, cfg.learning_rate)?;

        let cumulative = if eps_rdp.is_finite() {
            compose_rounds(eps_rdp, t + 1)?
        } else {
            f64::INFINITY
        };
        metrics.push(RoundMetrics {
            round: t + 1,
            train_loss: task.global_loss(&params)?,
            holdout_accuracy: task.holdout_accuracy(&params),
            delta_norm: norm(&delta),
            grad_dot_delta,
            eps_round_pure: eps_pure,
            eps_round_rdp: eps_rdp,
            eps_cumulative: cumulative,
            client_delta_norms,
        });
    }

    let last = metrics.last().expect("at least one row");
    let (optimum, smoothness, pl_constant) = match task {
        Task::Quadratic(q) => (Some(q.optimum()), Some(q.smoothness()), Some(q.pl_constant())),
        Task::Classifier { .. } => (None, None, None),
    };
    let summary = RunSummary {
        config: cfg.clone(),
        dimension,
        sampling_rate: kappa,
        initial_loss,
        final_loss: last.train_loss,
        final_accuracy: last.holdout_accuracy,
        eps_round_pure: eps_pure,
        eps_round_rdp: eps_rdp,
        eps_cumulative: last.eps_cumulative,
        clipped_entries,
        optimum,
        smoothness,
        pl_constant,
    };
    Ok(RunOutput { metrics, summary })
}

/// Builds the task from `cfg` and runs it.
pub fn run_training(cfg: &FlConfig) -> Result<RunOutput> {
    let task = Task::from_config(cfg)?;
    run_on(cfg, &task)
}
