//! Continuous-variable quantum key distribution with gaussian-modulated
//! states: closed-form secret rates, a Monte Carlo channel simulator,
//! sliced reconciliation and privacy amplification.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod channel;
pub mod error;
pub mod model;
pub mod par;
pub mod privacy;
pub mod rates;
pub mod report;
pub mod reconcile;
pub mod sampler;
pub mod stats;

pub use channel::{ChannelParams, DetectorModel, SiftedFrame};
pub use error::{Error, Result};
pub use model::{ModulationConfig, Quadrature, Variant};
pub use privacy::BinaryKey;
pub use rates::RateReport;
pub use sampler::GaussianSampler;
