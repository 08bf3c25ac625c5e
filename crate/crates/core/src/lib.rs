//! Differentially private stochastic quantization with mixed truncated
//! geometric distributions, together with the accounting, simulation and
//! convergence tooling around it.
//!
//! * [`geom`]: finite discrete distributions, truncated geometric laws,
//!   Rényi divergence.
//! * [`quantizer`]: the QMGeo mechanism, clipping and the stochastic
//!   k-level baseline.
//! * [`privacy`]: closed-form bounds and exact numerical oracles.
//! * [`flsim`]: a deterministic federated-learning simulator.
//! * [`convergence`]: optimality-gap recursion and descent checks.

pub mod convergence;
pub mod error;
pub mod flsim;
pub mod geom;
pub mod privacy;
pub mod quantizer;
pub mod stream;

pub use error::{Error, Result};
pub use geom::{DiscreteDistribution, TGeoParams};
pub use quantizer::{MixtureMode, QuantizedValue, QuantizerConfig};
pub use stream::StreamKey;
