//! Preference-guided debiasing for no-reference quality assessment of
//! enhanced images.
//!
//! The crate is organised bottom-up:
//!
//! * [`synthdata`] builds a synthetic low-light dataset where the
//!   enhancement algorithm's colour style is a pure nuisance for MOS.
//! * [`metrics`] holds SRCC / PLCC / KRCC and the cross-algorithm drop.
//! * [`sampler`] plans mini-batches (random, algorithm-balanced and
//!   content-controlled).
//! * [`nn`] and [`models`] implement the four learnable components with
//!   hand-written backpropagation.
//! * [`losses`] holds the supervised contrastive, Huber and PLCC objectives.
//! * [`train`] runs the two-stage schedule and the ablation variants.
//! * [`evalproto`] builds splits and evaluates trained models.

pub mod error;
pub mod evalproto;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod synthdata;
pub mod train;

pub use error::{Error, Result};
pub use evalproto::{DropReport, EvalReport, PredictionRecord, Protocol, SplitPlan};
pub use image::Image;
pub use losses::{RegressionInputs, SupConInputs};
pub use metrics::ScorePair;
pub use models::{
    BiasVector, DebiasedFeature, ModelConfig, ModelState, PreferenceEmbedding, QualityFeature, QualityPredictor,
};
pub use sampler::{Batch, SamplerConfig, Strategy};
pub use synthdata::{EnhancementOperator, Manifest, RawScene, SampleRecord};
pub use train::{TrainConfig, TrainLog, Variant};
