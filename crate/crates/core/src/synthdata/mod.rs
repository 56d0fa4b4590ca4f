//! Bias-controlled synthetic dataset.
//!
//! Each scene is a procedural low-light image. `K` parametric enhancers
//! brighten it, each with its own colour style. MOS is a closed form of
//! luma statistics only, so an enhancer's tint and saturation are a
//! nuisance that a quality model should learn to ignore.

pub mod dataset;
pub mod manifest;
pub mod mos;
pub mod operator;
pub mod scene;

pub use dataset::{build_dataset, generate, BuildConfig, Dataset, MANIFEST_FILE};
pub use manifest::{load_manifest, save_manifest, Manifest, SampleRecord};
pub use mos::{quality_factors, synth_mos, QualityFactors, MOS_MAX};
pub use operator::{apply_enhancement, luma_neutral, sample_operators, EnhancementOperator, StyleParams};
pub use scene::{generate_scene, RawScene};
