//! The four learnable components and their composition.
//!
//! ```text
//! e     = E_p(x)          preference encoder, unit-norm
//! q_raw = E_q(x)          quality encoder
//! b     = g(e)            bias predictor
//! q     = q_raw - b
//! y     = R(q)            regressor, normalised MOS
//! ```
//!
//! Both encoders are small convolutional stacks with global average
//! pooling; the forward contracts are independent of the backbone.

use std::collections::BTreeMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{
    l2_normalize, l2_normalize_backward, ConvEncoder, EncoderCache, Linear, Mlp, MlpCache, Module, Param,
    Tensor3,
};
use crate::rng::{rng_for, stream};

pub const CHECKPOINT_FORMAT: &str = "eiqa-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

macro_rules! feature_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

feature_newtype!(
    /// Unit-norm enhancement-style embedding.
    PreferenceEmbedding
);
feature_newtype!(QualityFeature);
feature_newtype!(BiasVector);
feature_newtype!(DebiasedFeature);

/// How the preference branch reaches the regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// `R(q_raw - g(e))`.
    Debias,
    /// `R(q_raw)`; the preference branch is unused.
    NoPreference,
    /// `R([q_raw; e])`, no subtraction.
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Side of the stored dataset images.
    pub image_size: usize,
    /// Side of the square crop the encoders consume.
    pub input_size: usize,
    pub pref_dim: usize,
    pub quality_dim: usize,
    pub pref_widths: Vec<usize>,
    pub quality_widths: Vec<usize>,
    pub proj_hidden: usize,
    pub regressor_hidden: usize,
    pub head: HeadKind,
    /// Width of the algorithm-classification head; zero when absent.
    pub num_algorithms: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            input_size: 48,
            pref_dim: 64,
            quality_dim: 128,
            pref_widths: vec![8, 16, 32, 32],
            quality_widths: vec![8, 16, 32, 32],
            proj_hidden: 64,
            regressor_hidden: 64,
            head: HeadKind::Debias,
            num_algorithms: 0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn bias_hidden(&self) -> usize {
        self.pref_dim.max(self.quality_dim)
    }

    pub fn regressor_input(&self) -> usize {
        match self.head {
            HeadKind::Concat => self.quality_dim + self.pref_dim,
            _ => self.quality_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size > self.image_size {
            return Err(Error::Config(format!(
                "input size {} must be in 1..={}",
                self.input_size, self.image_size
            )));
        }
        if self.pref_dim == 0 || self.quality_dim == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if self.pref_widths.is_empty() || self.quality_widths.is_empty() {
            return Err(Error::Config("encoders need at least one block".into()));
        }
        Ok(())
    }

    /// Checks the shape-defining fields against another configuration.
    pub fn check_compatible(&self, other: &ModelConfig) -> Result<()> {
        let pairs = [
            ("image_size", self.image_size, other.image_size),
            ("input_size", self.input_size, other.input_size),
            ("pref_dim", self.pref_dim, other.pref_dim),
            ("quality_dim", self.quality_dim, other.quality_dim),
        ];
        for (name, a, b) in pairs {
            if a != b {
                return Err(Error::Config(format!("{name} mismatch: checkpoint {a}, expected {b}")));
            }
        }
        Ok(())
    }
}

/// Output of the preference encoder before and after normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceOutput {
    pub embedding: PreferenceEmbedding,
    /// Projection-head output before L2 normalisation.
    pub projection: Vec<f64>,
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct PreferenceCache {
    backbone: EncoderCache,
    head: MlpCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceEncoder {
    pub backbone: ConvEncoder,
    pub head: Mlp,
}

impl PreferenceEncoder {
    fn new(cfg: &ModelConfig) -> Self {
        let mut rng = rng_for(cfg.seed, stream::INIT, 1);
        let backbone = ConvEncoder::new(3, &cfg.pref_widths, &mut rng);
        let head = Mlp::new(backbone.out_channels(), cfg.proj_hidden, cfg.pref_dim, &mut rng);
        Self { backbone, head }
    }

    fn finish(z: Vec<f64>) -> PreferenceOutput {
        let (e, norm) = l2_normalize(&z);
        PreferenceOutput {
            embedding: PreferenceEmbedding(e),
            projection: z,
            norm,
        }
    }

    pub fn forward(&self, x: &Tensor3) -> PreferenceOutput {
        Self::finish(self.head.forward(&self.backbone.forward(x)))
    }

    pub fn forward_cached(&self, x: &Tensor3) -> (PreferenceOutput, PreferenceCache) {
        let (pooled, backbone) = self.backbone.forward_cached(x);
        let (z, head) = self.head.forward_cached(&pooled);
        (Self::finish(z), PreferenceCache { backbone, head })
    }

    /// Backpropagates a gradient on the embedding plus an optional gradient
    /// on the un-normalised projection.
    pub fn backward(
        &mut self,
        cache: &PreferenceCache,
        out: &PreferenceOutput,
        grad_embedding: &[f64],
        grad_projection: Option<&[f64]>,
        need_input_grad: bool,
    ) -> Option<Tensor3> {
        let mut gz = l2_normalize_backward(out.embedding.as_slice(), out.norm, grad_embedding);
        if let Some(extra) = grad_projection {
            gz.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
        }
        let gpool = self.head.backward(&cache.head, &gz);
        self.backbone.backward(&cache.backbone, &gpool, need_input_grad)
    }
}

impl Module for PreferenceEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.backbone.visit(&crate::nn::join(prefix, "backbone"), f);
        self.head.visit(&crate::nn::join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.backbone.visit_mut(&crate::nn::join(prefix, "backbone"), f);
        self.head.visit_mut(&crate::nn::join(prefix, "head"), f);
    }
}

#[derive(Debug, Clone)]
pub struct QualityCache {
    backbone: EncoderCache,
    pooled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityEncoder {
    pub backbone: ConvEncoder,
    pub proj: Linear,
}

impl QualityEncoder {
    fn new(cfg: &ModelConfig) -> Self {
        let mut rng = rng_for(cfg.seed, stream::INIT, 2);
        let backbone = ConvEncoder::new(3, &cfg.quality_widths, &mut rng);
        let proj = Linear::new(backbone.out_channels(), cfg.quality_dim, 1.0, &mut rng);
        Self { backbone, proj }
    }

    pub fn forward(&self, x: &Tensor3) -> QualityFeature {
        QualityFeature(self.proj.forward(&self.backbone.forward(x)))
    }

    pub fn forward_cached(&self, x: &Tensor3) -> (QualityFeature, QualityCache) {
        let (pooled, backbone) = self.backbone.forward_cached(x);
        (
            QualityFeature(self.proj.forward(&pooled)),
            QualityCache { backbone, pooled },
        )
    }

    pub fn backward(&mut self, cache: &QualityCache, grad: &[f64], need_input_grad: bool) -> Option<Tensor3> {
        let gpool = self.proj.backward(&cache.pooled, grad);
        self.backbone.backward(&cache.backbone, &gpool, need_input_grad)
    }
}

impl Module for QualityEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.backbone.visit(&crate::nn::join(prefix, "backbone"), f);
        self.proj.visit(&crate::nn::join(prefix, "proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.backbone.visit_mut(&crate::nn::join(prefix, "backbone"), f);
        self.proj.visit_mut(&crate::nn::join(prefix, "proj"), f);
    }
}

/// Which components an optimisation step may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrozenFlags {
    pub preference: bool,
    pub quality: bool,
    pub bias: bool,
    pub regressor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub preference: PreferenceEncoder,
    pub quality: QualityEncoder,
    /// `g`: two affine layers with one GELU, `d -> max(d, D) -> D`.
    pub bias: Mlp,
    /// `R`: two affine layers with one GELU, output scalar.
    pub regressor: Mlp,
    /// Algorithm-classification head on the projection (classification
    /// ablation only).
    pub cls_head: Option<Linear>,
    pub frozen: FrozenFlags,
    /// Train-split MOS range used to (de)normalise targets.
    pub mos_range: (f64, f64),
}

/// Anything that scores an enhanced image on the raw MOS scale.
pub trait QualityPredictor {
    /// Side of the stored images the predictor expects, if it cares.
    fn image_size(&self) -> Option<usize> {
        None
    }

    fn predict_mos(&self, image: &Image) -> Result<f64>;
}

pub fn debias(q_raw: &QualityFeature, b: &BiasVector) -> Result<DebiasedFeature> {
    if q_raw.len() != b.len() {
        return Err(Error::invalid(format!(
            "quality feature has {} entries, bias {}",
            q_raw.len(),
            b.len()
        )));
    }
    Ok(DebiasedFeature(
        q_raw.0.iter().zip(&b.0).map(|(q, b)| q - b).collect(),
    ))
}

impl ModelState {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, stream::INIT, 3);
        let bias = Mlp::new(config.pref_dim, config.bias_hidden(), config.quality_dim, &mut rng);
        let mut rng = rng_for(config.seed, stream::INIT, 4);
        let regressor = Mlp::new(config.regressor_input(), config.regressor_hidden, 1, &mut rng);
        let cls_head = (config.num_algorithms > 0).then(|| {
            let mut rng = rng_for(config.seed, stream::INIT, 5);
            Linear::new(config.pref_dim, config.num_algorithms, 1.0, &mut rng)
        });
        Ok(Self {
            preference: PreferenceEncoder::new(&config),
            quality: QualityEncoder::new(&config),
            bias,
            regressor,
            cls_head,
            frozen: FrozenFlags::default(),
            mos_range: (0.0, 100.0),
            config,
        })
    }

    /// Converts an image of the configured input size to encoder layout.
    pub fn input_tensor(&self, image: &Image) -> Result<Tensor3> {
        let s = self.config.input_size;
        if image.shape() != (s, s) {
            return Err(Error::invalid(format!(
                "model expects {s}x{s} input, got {:?}",
                image.shape()
            )));
        }
        Ok(Tensor3::from_vec(3, s, s, image.to_chw()))
    }

    pub fn preference_forward(&self, image: &Image) -> Result<PreferenceEmbedding> {
        Ok(self.preference.forward(&self.input_tensor(image)?).embedding)
    }

    pub fn quality_forward(&self, image: &Image) -> Result<QualityFeature> {
        Ok(self.quality.forward(&self.input_tensor(image)?))
    }

    pub fn bias_predict(&self, e: &PreferenceEmbedding) -> Result<BiasVector> {
        if e.len() != self.config.pref_dim {
            return Err(Error::invalid(format!(
                "embedding has {} entries, expected {}",
                e.len(),
                self.config.pref_dim
            )));
        }
        Ok(BiasVector(self.bias.forward(e.as_slice())))
    }

    pub fn regress(&self, q: &DebiasedFeature) -> Result<f64> {
        if q.len() != self.regressor.in_dim() {
            return Err(Error::invalid(format!(
                "regressor expects {} inputs, got {}",
                self.regressor.in_dim(),
                q.len()
            )));
        }
        Ok(self.regressor.forward(q.as_slice())[0])
    }

    /// Regressor input for the configured head.
    pub fn regressor_input(&self, q_raw: &QualityFeature, e: Option<&PreferenceEmbedding>) -> Result<DebiasedFeature> {
        match self.config.head {
            HeadKind::NoPreference => Ok(DebiasedFeature(q_raw.0.clone())),
            HeadKind::Debias => {
                let e = e.ok_or_else(|| Error::invalid("debiasing head needs an embedding"))?;
                debias(q_raw, &self.bias_predict(e)?)
            }
            HeadKind::Concat => {
                let e = e.ok_or_else(|| Error::invalid("concat head needs an embedding"))?;
                Ok(DebiasedFeature(q_raw.0.iter().chain(e.as_slice()).copied().collect()))
            }
        }
    }

    /// Normalised quality prediction from the enhanced image alone.
    pub fn predict(&self, image: &Image) -> Result<f64> {
        let q_raw = self.quality_forward(image)?;
        let e = match self.config.head {
            HeadKind::NoPreference => None,
            _ => Some(self.preference_forward(image)?),
        };
        self.regress(&self.regressor_input(&q_raw, e.as_ref())?)
    }

    pub fn normalize_mos(&self, mos: f64) -> f64 {
        let (lo, hi) = self.mos_range;
        (mos - lo) / (hi - lo).max(1e-12)
    }

    pub fn denormalize_mos(&self, y: f64) -> f64 {
        let (lo, hi) = self.mos_range;
        lo + y * (hi - lo)
    }

    pub fn visit_params<'a>(&'a self, f: &mut dyn FnMut(String, &'a Param)) {
        self.preference.visit("preference", f);
        self.quality.visit("quality", f);
        self.bias.visit("bias", f);
        self.regressor.visit("regressor", f);
        if let Some(h) = &self.cls_head {
            h.visit("cls_head", f);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        self.preference.visit_mut("preference", f);
        self.quality.visit_mut("quality", f);
        self.bias.visit_mut("bias", f);
        self.regressor.visit_mut("regressor", f);
        if let Some(h) = &mut self.cls_head {
            h.visit_mut("cls_head", f);
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |_, p| p.zero_grad());
    }

    /// Hash of the exact bit patterns of the preference-encoder parameters.
    pub fn preference_checksum(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.preference.visit("", &mut |name, p| {
            name.hash(&mut h);
            for v in &p.value {
                v.to_bits().hash(&mut h);
            }
        });
        h.finish()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut tensors = Vec::new();
        self.visit_params(&mut |name, p| {
            tensors.push(NamedTensor {
                name,
                shape: p.shape.clone(),
                data: p.value.clone(),
            })
        });
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            mos_range: [self.mos_range.0, self.mos_range.1],
            frozen: self.frozen,
            tensors,
        };
        Ok(serde_json::to_string(&ckpt)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut state = ModelState::new(ckpt.config)?;
        state.mos_range = (ckpt.mos_range[0], ckpt.mos_range[1]);
        state.frozen = ckpt.frozen;
        let mut by_name: BTreeMap<String, NamedTensor> =
            ckpt.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        let mut problem = None;
        state.visit_params_mut(&mut |name, p| {
            match by_name.remove(&name) {
                Some(t) if t.shape == p.shape && t.data.len() == p.len() => p.value = t.data,
                Some(t) => {
                    problem.get_or_insert(format!("tensor {name} has shape {:?}, expected {:?}", t.shape, p.shape));
                }
                None => {
                    problem.get_or_insert(format!("tensor {name} missing"));
                }
            }
        });
        if let Some(extra) = by_name.keys().next() {
            problem.get_or_insert(format!("unexpected tensor {extra}"));
        }
        match problem {
            Some(msg) => Err(Error::Config(msg)),
            None => Ok(state),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Loads a checkpoint and rejects it unless its shape-defining
    /// configuration matches `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let state = Self::load(path)?;
        state.config.check_compatible(expected)?;
        Ok(state)
    }
}

/// Intermediate values of one prediction, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct PredictTrace {
    pub quality: QualityFeature,
    quality_cache: QualityCache,
    pub preference: Option<PreferenceOutput>,
    preference_cache: Option<PreferenceCache>,
    pub bias: Option<BiasVector>,
    bias_cache: Option<MlpCache>,
    pub output: f64,
    regressor_cache: MlpCache,
}

impl ModelState {
    /// `predict` on an encoder-layout tensor, keeping every cache.
    pub fn predict_traced(&self, x: &Tensor3) -> PredictTrace {
        let (quality, quality_cache) = self.quality.forward_cached(x);
        let (preference, preference_cache) = match self.config.head {
            HeadKind::NoPreference => (None, None),
            _ => {
                let (o, c) = self.preference.forward_cached(x);
                (Some(o), Some(c))
            }
        };
        let mut bias = None;
        let mut bias_cache = None;
        let rin: Vec<f64> = match (&self.config.head, &preference) {
            (HeadKind::Concat, Some(p)) => quality.0.iter().chain(p.embedding.as_slice()).copied().collect(),
            (HeadKind::Debias, Some(p)) => {
                let (b, c) = self.bias.forward_cached(p.embedding.as_slice());
                let rin = quality.0.iter().zip(&b).map(|(q, b)| q - b).collect();
                bias = Some(BiasVector(b));
                bias_cache = Some(c);
                rin
            }
            _ => quality.0.clone(),
        };
        let (y, regressor_cache) = self.regressor.forward_cached(&rin);
        PredictTrace {
            quality,
            quality_cache,
            preference,
            preference_cache,
            bias,
            bias_cache,
            output: y[0],
            regressor_cache,
        }
    }

    /// Accumulates parameter gradients of `dy * prediction`. The preference
    /// encoder receives gradient only when it is not frozen.
    pub fn predict_backward(&mut self, trace: &PredictTrace, dy: f64) {
        let g_in = self.regressor.backward(&trace.regressor_cache, &[dy]);
        let dq = self.config.quality_dim;
        let g_e = match self.config.head {
            HeadKind::NoPreference => None,
            HeadKind::Concat => Some(g_in[dq..].to_vec()),
            HeadKind::Debias => {
                let neg: Vec<f64> = g_in.iter().map(|v| -v).collect();
                trace.bias_cache.as_ref().map(|c| self.bias.backward(c, &neg))
            }
        };
        self.quality.backward(&trace.quality_cache, &g_in[..dq], false);
        if self.frozen.preference {
            return;
        }
        if let (Some(g_e), Some(out), Some(cache)) = (g_e, &trace.preference, &trace.preference_cache) {
            self.preference.backward(cache, out, &g_e, None, false);
        }
    }
}

impl QualityPredictor for ModelState {
    fn image_size(&self) -> Option<usize> {
        Some(self.config.image_size)
    }

    /// Centre-crops a stored image to the input size and returns MOS on the
    /// raw scale.
    fn predict_mos(&self, image: &Image) -> Result<f64> {
        let crop = image.center_crop(self.config.input_size)?;
        Ok(self.denormalize_mos(self.predict(&crop)?))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    mos_range: [f64; 2],
    frozen: FrozenFlags,
    tensors: Vec<NamedTensor>,
}
