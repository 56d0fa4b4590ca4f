//! Two-stage training and the ablation variants.
//!
//! Stage 1 fits the preference encoder with the supervised contrastive loss
//! (or algorithm classification for [`Variant::ClsPreference`]). Stage 2
//! freezes it and fits the quality encoder, bias predictor and regressor on
//! the combined Huber + PLCC loss.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalproto::{evaluate, EvalReport, SplitPlan};
use crate::image::Image;
use crate::losses::{cross_entropy, mos_loss, supcon_loss, RegressionInputs, RegressionParams, SupConInputs};
use crate::models::{HeadKind, ModelConfig, ModelState, PredictTrace, PreferenceCache, PreferenceOutput};
use crate::nn::{Adam, Tensor3};
use crate::rng::{derive_seed, rng_for, stream};
use crate::sampler::{epoch_batches, SamplerConfig, Strategy};
use crate::synthdata::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoPreference,
    PreferenceConcat,
    ClsPreference,
    Joint,
    TwoStageNoFreeze,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoPreference,
        Variant::PreferenceConcat,
        Variant::ClsPreference,
        Variant::Joint,
        Variant::TwoStageNoFreeze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPreference => "no_preference",
            Variant::PreferenceConcat => "preference_concat",
            Variant::ClsPreference => "cls_preference",
            Variant::Joint => "joint",
            Variant::TwoStageNoFreeze => "two_stage_no_freeze",
        }
    }

    pub fn head(self) -> HeadKind {
        match self {
            Variant::NoPreference => HeadKind::NoPreference,
            Variant::PreferenceConcat => HeadKind::Concat,
            _ => HeadKind::Debias,
        }
    }

    /// Whether stage 2 expects a pretrained preference encoder.
    pub fn needs_pretraining(self) -> bool {
        !matches!(self, Variant::NoPreference | Variant::Joint)
    }

    fn freezes_preference(self) -> bool {
        !matches!(self, Variant::TwoStageNoFreeze | Variant::Joint)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub optimizer: Optimizer,
    pub crop_size: usize,
    pub rotation: bool,
    pub hflip: bool,
    pub seed: u64,
    pub variant: Variant,
    pub stage1_sampler: Strategy,
    pub stage2_sampler: Strategy,
    pub scenes_per_batch: usize,
    pub algos_per_scene: usize,
    pub temperature: f64,
    pub huber_delta: f64,
    pub lambda_plcc: f64,
    pub pref_dim: usize,
    pub quality_dim: usize,
    pub pref_widths: Vec<usize>,
    pub quality_widths: Vec<usize>,
    pub proj_hidden: usize,
    pub regressor_hidden: usize,
    /// Run every per-sample computation sequentially and zero wall-clock
    /// fields in logs.
    pub strict_determinism: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            lr: 1e-4,
            batch_size: 32,
            epochs_stage1: 15,
            epochs_stage2: 15,
            optimizer: Optimizer::Adam,
            crop_size: 48,
            rotation: true,
            hflip: true,
            seed: 0,
            variant: Variant::Full,
            stage1_sampler: Strategy::ContentControlled,
            stage2_sampler: Strategy::Random,
            scenes_per_batch: 8,
            algos_per_scene: 4,
            temperature: 0.07,
            huber_delta: 1.0,
            lambda_plcc: 1.0,
            pref_dim: m.pref_dim,
            quality_dim: m.quality_dim,
            pref_widths: m.pref_widths,
            quality_widths: m.quality_widths,
            proj_hidden: m.proj_hidden,
            regressor_hidden: m.regressor_hidden,
            strict_determinism: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, image_size: usize) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr = {} must be positive", self.lr)));
        }
        if self.batch_size < 4 {
            return Err(Error::Config(format!("batch size {} is below 4", self.batch_size)));
        }
        if self.crop_size == 0 || self.crop_size > image_size {
            return Err(Error::Config(format!(
                "crop size {} must be in 1..={image_size}",
                self.crop_size
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, image_size: usize, k_algorithms: usize) -> ModelConfig {
        ModelConfig {
            image_size,
            input_size: self.crop_size,
            pref_dim: self.pref_dim,
            quality_dim: self.quality_dim,
            pref_widths: self.pref_widths.clone(),
            quality_widths: self.quality_widths.clone(),
            proj_hidden: self.proj_hidden,
            regressor_hidden: self.regressor_hidden,
            head: self.variant.head(),
            num_algorithms: if self.variant == Variant::ClsPreference { k_algorithms } else { 0 },
            seed: self.seed,
        }
    }

    fn sampler(&self, strategy: Strategy, stage: u64, epoch: usize) -> SamplerConfig {
        SamplerConfig {
            batch_size: self.batch_size,
            scenes_per_batch: self.scenes_per_batch,
            algos_per_scene: self.algos_per_scene,
            seed: derive_seed(self.seed, (stage << 32) | epoch as u64),
            strategy,
        }
    }

    fn regression(&self) -> RegressionParams {
        RegressionParams {
            huber_delta: self.huber_delta,
            lambda_plcc: self.lambda_plcc,
        }
    }
}

/// One line of a training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Epoch {
        stage: u8,
        epoch: usize,
        loss: f64,
        /// Named loss components averaged over the epoch's batches.
        components: Vec<(String, f64)>,
        batches: usize,
        elapsed_ms: u64,
    },
    Summary {
        variant: Variant,
        seed: u64,
        wall_clock_ms: u64,
        report: Option<EvalReport>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    /// Per-epoch losses of one stage, in order.
    pub fn losses(&self, stage: u8) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Epoch { stage: s, loss, .. } if *s == stage => Some(*loss),
                _ => None,
            })
            .collect()
    }

    pub fn report(&self) -> Option<EvalReport> {
        self.records.iter().rev().find_map(|r| match r {
            LogRecord::Summary { report, .. } => *report,
            _ => None,
        })
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.records.extend(other.records);
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Clock {
    start: Instant,
    strict: bool,
}

impl Clock {
    fn new(strict: bool) -> Self {
        Self { start: Instant::now(), strict }
    }

    fn ms(&self) -> u64 {
        if self.strict {
            0
        } else {
            self.start.elapsed().as_millis() as u64
        }
    }
}

/// Random crop plus optional quarter-turn rotation and horizontal flip.
pub fn augment(image: &Image, crop: usize, rotation: bool, hflip: bool, rng: &mut impl Rng) -> Result<Image> {
    let (h, w) = image.shape();
    if crop > h || crop > w {
        return Err(Error::invalid(format!("crop {crop} exceeds image {h}x{w}")));
    }
    let top = rng.gen_range(0..=h - crop);
    let left = rng.gen_range(0..=w - crop);
    let mut out = image.crop(top, left, crop)?;
    if rotation {
        out = out.rot90(rng.gen_range(0..4u8));
    }
    if hflip && rng.gen_bool(0.5) {
        out = out.hflip();
    }
    Ok(out)
}

fn augmented_inputs(
    data: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
    stage: u64,
    epoch: usize,
    batch: usize,
) -> Result<Vec<Tensor3>> {
    let base = derive_seed(cfg.seed, (stage << 48) | ((epoch as u64) << 24) | batch as u64);
    let one = |(pos, &i): (usize, &usize)| -> Result<Tensor3> {
        let mut rng = rng_for(base, stream::AUGMENT, pos as u64);
        let img = augment(&data.images[i], cfg.crop_size, cfg.rotation, cfg.hflip, &mut rng)?;
        Ok(Tensor3::from_vec(3, cfg.crop_size, cfg.crop_size, img.to_chw()))
    };
    if cfg.strict_determinism {
        indices.iter().enumerate().map(one).collect()
    } else {
        indices.par_iter().enumerate().map(one).collect()
    }
}

/// Order-preserving map that runs in parallel unless strict mode is on.
fn map_samples<T: Send, U: Sync>(strict: bool, items: &[U], f: impl Fn(&U) -> T + Sync + Send) -> Vec<T> {
    if strict {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}

/// Batches for one epoch, translated from subset positions to dataset
/// indices.
fn split_batches(
    data: &Dataset,
    split: &SplitPlan,
    sampler: &SamplerConfig,
) -> Result<Vec<Vec<usize>>> {
    let sub = data.manifest.subset(&split.train_indices)?;
    Ok(epoch_batches(&sub, sampler)?
        .into_iter()
        .map(|b| b.indices.iter().map(|&j| split.train_indices[j]).collect())
        .collect())
}

/// Sampler infeasibility surfaces as a configuration error here, before any
/// optimisation step.
fn feasible(sampler: SamplerConfig, manifest: &crate::synthdata::Manifest) -> Result<()> {
    sampler.check_feasible(manifest).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })
}

fn check_finite(loss: f64, stage: u8, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { stage, epoch })
    }
}

fn check_split(data: &Dataset, split: &SplitPlan, cfg: &TrainConfig) -> Result<()> {
    cfg.validate(data.image_size())?;
    split.validate(&data.manifest)?;
    if split.train_indices.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "{} training records cannot fill a batch of {}",
            split.train_indices.len(),
            cfg.batch_size
        )));
    }
    Ok(())
}

/// Stage-1 objective on one batch: accumulates preference-encoder (and
/// classification-head) gradients and returns the loss.
fn preference_step(
    state: &mut ModelState,
    inputs: &[Tensor3],
    labels: &[u32],
    cfg: &TrainConfig,
    scale: f64,
) -> Result<f64> {
    let fwd: Vec<(PreferenceOutput, PreferenceCache)> =
        map_samples(cfg.strict_determinism, inputs, |x| state.preference.forward_cached(x));
    if cfg.variant == Variant::ClsPreference {
        let head = state
            .cls_head
            .as_mut()
            .ok_or_else(|| Error::Config("classification variant without a head".into()))?;
        let logits: Vec<Vec<f64>> = fwd.iter().map(|(o, _)| head.forward(&o.projection)).collect();
        if !logits.iter().flatten().all(|v| v.is_finite()) {
            return Ok(f64::NAN);
        }
        let targets: Vec<usize> = labels.iter().map(|&a| a as usize).collect();
        let (loss, grads) = cross_entropy(&logits, &targets)?;
        let zero = vec![0.0; state.config.pref_dim];
        for ((out, cache), g) in fwd.iter().zip(&grads) {
            let g: Vec<f64> = g.iter().map(|v| v * scale).collect();
            let gz = head.backward(&out.projection, &g);
            state.preference.backward(cache, out, &zero, Some(&gz), false);
        }
        return Ok(loss * scale);
    }
    let emb: Vec<Vec<f64>> = fwd.iter().map(|(o, _)| o.embedding.0.clone()).collect();
    // blown-up weights: reported by the caller as divergence
    if !emb.iter().flatten().all(|v| v.is_finite()) || fwd.iter().any(|(o, _)| !(o.norm > 0.0) || !o.norm.is_finite()) {
        return Ok(f64::NAN);
    }
    let sc = supcon_loss(&SupConInputs {
        embeddings: &emb,
        labels,
        temperature: cfg.temperature,
    })?;
    for ((out, cache), g) in fwd.iter().zip(&sc.grad) {
        let g: Vec<f64> = g.iter().map(|v| v * scale).collect();
        state.preference.backward(cache, out, &g, None, false);
    }
    Ok(sc.loss * scale)
}

fn update_preference(state: &mut ModelState, opt: &mut Adam) {
    opt.update("preference", &mut state.preference);
    if let Some(h) = state.cls_head.as_mut() {
        opt.update("cls_head", h);
    }
}

/// Stage 1: fits only the preference encoder (and, for the classification
/// ablation, its head).
pub fn pretrain_preference(data: &Dataset, split: &SplitPlan, cfg: &TrainConfig) -> Result<(ModelState, TrainLog)> {
    check_split(data, split, cfg)?;
    let sub = data.manifest.subset(&split.train_indices)?;
    feasible(cfg.sampler(cfg.stage1_sampler, 1, 0), &sub)?;
    let mut state = ModelState::new(cfg.model_config(data.image_size(), data.manifest.k_algorithms))?;
    let log = continue_pretraining(&mut state, data, split, cfg)?;
    Ok((state, log))
}

/// Runs stage-1 epochs on an existing state.
pub fn continue_pretraining(
    state: &mut ModelState,
    data: &Dataset,
    split: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    let clock = Clock::new(cfg.strict_determinism);
    let mut opt = Adam::new(cfg.lr);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs_stage1 {
        let batches = split_batches(data, split, &cfg.sampler(cfg.stage1_sampler, 1, epoch))?;
        let mut total = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let inputs = augmented_inputs(data, idx, cfg, 1, epoch, b)?;
            let labels: Vec<u32> = idx.iter().map(|&i| data.manifest.records[i].algo_id).collect();
            state.zero_grad();
            let loss = preference_step(state, &inputs, &labels, cfg, 1.0)?;
            check_finite(loss, 1, epoch)?;
            opt.begin_step();
            update_preference(state, &mut opt);
            total += loss;
        }
        let loss = total / batches.len().max(1) as f64;
        check_finite(loss, 1, epoch)?;
        let name = if cfg.variant == Variant::ClsPreference { "cross_entropy" } else { "supcon" };
        log.records.push(LogRecord::Epoch {
            stage: 1,
            epoch,
            loss,
            components: vec![(name.into(), loss)],
            batches: batches.len(),
            elapsed_ms: clock.ms(),
        });
    }
    Ok(log)
}

fn regression_step(
    state: &mut ModelState,
    inputs: &[Tensor3],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<(f64, f64, f64)> {
    let st: &ModelState = state;
    let fwd: Vec<PredictTrace> = map_samples(cfg.strict_determinism, inputs, |x| st.predict_traced(x));
    let preds: Vec<f64> = fwd.iter().map(|f| f.output).collect();
    if !preds.iter().all(|p| p.is_finite()) {
        return Ok((f64::NAN, f64::NAN, f64::NAN));
    }
    let loss = mos_loss(&RegressionInputs::new(&preds, targets, cfg.regression()))?;
    for (f, &dy) in fwd.iter().zip(&loss.total.grad) {
        state.predict_backward(f, dy);
    }
    Ok((loss.total.value, loss.huber, loss.plcc))
}

fn update_quality_branch(state: &mut ModelState, opt: &mut Adam) {
    if !state.frozen.quality {
        opt.update("quality", &mut state.quality);
    }
    if state.config.head == HeadKind::Debias && !state.frozen.bias {
        opt.update("bias", &mut state.bias);
    }
    if !state.frozen.regressor {
        opt.update("regressor", &mut state.regressor);
    }
    if state.config.head != HeadKind::NoPreference && !state.frozen.preference {
        opt.update("preference", &mut state.preference);
    }
}

fn train_mos_range(data: &Dataset, split: &SplitPlan) -> (f64, f64) {
    split
        .train_indices
        .iter()
        .map(|&i| data.manifest.records[i].mos)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)))
}

/// Stage 2: fits E_q, g and R on the MOS loss. The preference encoder is
/// frozen unless the variant says otherwise.
pub fn train_quality(
    data: &Dataset,
    split: &SplitPlan,
    pretrained: Option<ModelState>,
    cfg: &TrainConfig,
) -> Result<(ModelState, TrainLog)> {
    check_split(data, split, cfg)?;
    let expected = cfg.model_config(data.image_size(), data.manifest.k_algorithms);
    let mut state = match pretrained {
        Some(pre) => {
            pre.config.check_compatible(&expected)?;
            if pre.config.pref_widths != expected.pref_widths || pre.config.proj_hidden != expected.proj_hidden {
                return Err(Error::Config("pretrained preference encoder has a different architecture".into()));
            }
            // Stage 1 only touches E_p, so the rest starts from the
            // variant's own seeded init.
            let mut s = ModelState::new(expected)?;
            s.preference = pre.preference;
            s.zero_grad();
            s
        }
        None if cfg.variant.needs_pretraining() => {
            return Err(Error::Config(format!(
                "variant {} needs a pretrained preference encoder",
                cfg.variant.name()
            )))
        }
        None => ModelState::new(expected)?,
    };
    state.frozen.preference = cfg.variant.freezes_preference();
    let (lo, hi) = train_mos_range(data, split);
    if !(hi > lo) {
        return Err(Error::Degenerate("training MOS has zero range".into()));
    }
    state.mos_range = (lo, hi);
    let clock = Clock::new(cfg.strict_determinism);
    let mut opt = Adam::new(cfg.lr);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs_stage2 {
        let batches = split_batches(data, split, &cfg.sampler(cfg.stage2_sampler, 2, epoch))?;
        let mut sums = [0.0; 3];
        for (b, idx) in batches.iter().enumerate() {
            let inputs = augmented_inputs(data, idx, cfg, 2, epoch, b)?;
            let targets: Vec<f64> = idx.iter().map(|&i| state.normalize_mos(data.manifest.records[i].mos)).collect();
            state.zero_grad();
            let (total, huber, plcc) = regression_step(&mut state, &inputs, &targets, cfg)?;
            check_finite(total, 2, epoch)?;
            opt.begin_step();
            update_quality_branch(&mut state, &mut opt);
            sums[0] += total;
            sums[1] += huber;
            sums[2] += plcc;
        }
        let n = batches.len().max(1) as f64;
        let loss = sums[0] / n;
        check_finite(loss, 2, epoch)?;
        log.records.push(LogRecord::Epoch {
            stage: 2,
            epoch,
            loss,
            components: vec![("huber".into(), sums[1] / n), ("plcc".into(), sums[2] / n)],
            batches: batches.len(),
            elapsed_ms: clock.ms(),
        });
    }
    Ok((state, log))
}

/// All modules optimised together from scratch on MOS loss plus the
/// batch-mean contrastive loss, for `epochs_stage1 + epochs_stage2` epochs.
pub fn train_joint(data: &Dataset, split: &SplitPlan, cfg: &TrainConfig) -> Result<(ModelState, TrainLog)> {
    check_split(data, split, cfg)?;
    let sub = data.manifest.subset(&split.train_indices)?;
    feasible(cfg.sampler(cfg.stage1_sampler, 3, 0), &sub)?;
    let mut state = ModelState::new(cfg.model_config(data.image_size(), data.manifest.k_algorithms))?;
    state.frozen.preference = false;
    let (lo, hi) = train_mos_range(data, split);
    if !(hi > lo) {
        return Err(Error::Degenerate("training MOS has zero range".into()));
    }
    state.mos_range = (lo, hi);
    let clock = Clock::new(cfg.strict_determinism);
    let mut opt = Adam::new(cfg.lr);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs_stage1 + cfg.epochs_stage2 {
        let batches = split_batches(data, split, &cfg.sampler(cfg.stage1_sampler, 3, epoch))?;
        let mut sums = [0.0; 2];
        for (b, idx) in batches.iter().enumerate() {
            let inputs = augmented_inputs(data, idx, cfg, 3, epoch, b)?;
            let labels: Vec<u32> = idx.iter().map(|&i| data.manifest.records[i].algo_id).collect();
            let targets: Vec<f64> = idx.iter().map(|&i| state.normalize_mos(data.manifest.records[i].mos)).collect();
            state.zero_grad();
            let (mos, _, _) = regression_step(&mut state, &inputs, &targets, cfg)?;
            let sc = preference_step(&mut state, &inputs, &labels, cfg, 1.0 / idx.len() as f64)?;
            check_finite(mos + sc, 3, epoch)?;
            opt.begin_step();
            update_quality_branch(&mut state, &mut opt);
            sums[0] += mos;
            sums[1] += sc;
        }
        let n = batches.len().max(1) as f64;
        let loss = (sums[0] + sums[1]) / n;
        check_finite(loss, 3, epoch)?;
        log.records.push(LogRecord::Epoch {
            stage: 3,
            epoch,
            loss,
            components: vec![("mos".into(), sums[0] / n), ("supcon_mean".into(), sums[1] / n)],
            batches: batches.len(),
            elapsed_ms: clock.ms(),
        });
    }
    Ok((state, log))
}

/// Trains a model for `cfg.variant` on the split's train side without
/// evaluating it.
pub fn fit_variant(data: &Dataset, split: &SplitPlan, cfg: &TrainConfig) -> Result<(ModelState, TrainLog)> {
    match cfg.variant {
        Variant::Joint => train_joint(data, split, cfg),
        Variant::NoPreference => train_quality(data, split, None, cfg),
        _ => {
            let (pre, mut log) = pretrain_preference(data, split, cfg)?;
            let (state, l2) = train_quality(data, split, Some(pre), cfg)?;
            log.extend(l2);
            Ok((state, log))
        }
    }
}

/// Full pipeline for one variant, evaluated on the split's test side.
pub fn run_variant(data: &Dataset, split: &SplitPlan, cfg: &TrainConfig) -> Result<(ModelState, TrainLog, EvalReport)> {
    let clock = Clock::new(cfg.strict_determinism);
    let (state, mut log) = fit_variant(data, split, cfg)?;
    let report = evaluate(&state, data, split)?;
    log.records.push(LogRecord::Summary {
        variant: cfg.variant,
        seed: cfg.seed,
        wall_clock_ms: clock.ms(),
        report: Some(report),
    });
    Ok((state, log, report))
}
