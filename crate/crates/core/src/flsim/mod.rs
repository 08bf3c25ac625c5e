//! Federated learning simulator: data, model, client and server loops.

pub mod data;
pub mod engine;
pub mod model;
pub mod pca;
pub mod quadratic;

pub use data::{Dataset, LabeledData};
pub use engine::{
    client_update, run_on, run_training, server_aggregate, Aggregation, ClientUpdate,
    DatasetSource, FlConfig, ModelSpec, QuantizerSetting, RoundMetrics, RunOutput, RunSummary,
    Task,
};
pub use model::{MlpShape, ModelParams};
pub use pca::Pca;
pub use quadratic::{QuadraticProblem, QuadraticSpec};
