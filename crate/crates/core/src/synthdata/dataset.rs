use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{derive_seed, stream};

use super::manifest::{round_mos, Manifest, SampleRecord};
use super::mos::synth_mos;
use super::operator::{apply_enhancement, sample_operators, EnhancementOperator};
use super::scene::generate_scene;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const IMAGE_DIR: &str = "images";
/// Scenes per environment group.
pub const SCENES_PER_ENV: u64 = 10;
/// Minimum pairwise operator separation, as a fraction of each style
/// parameter's range.
pub const OPERATOR_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub n_scenes: usize,
    pub k_algorithms: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            n_scenes: 100,
            k_algorithms: 10,
            size: 64,
            seed: 0,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scenes < 10 {
            return Err(Error::invalid(format!("n_scenes {} < 10", self.n_scenes)));
        }
        if self.k_algorithms < 4 {
            return Err(Error::invalid(format!("k_algorithms {} < 4", self.k_algorithms)));
        }
        if self.size < super::scene::MIN_SCENE_SIZE {
            return Err(Error::invalid(format!("image size {} < 16", self.size)));
        }
        Ok(())
    }

    pub fn scene_seed(&self, scene_id: u64) -> u64 {
        derive_seed(self.seed, stream::SCENE ^ scene_id)
    }

    pub fn operators(&self) -> Result<Vec<EnhancementOperator>> {
        sample_operators(self.k_algorithms, self.seed, OPERATOR_MARGIN)
    }
}

/// A manifest with its images decoded in memory, index-aligned with
/// `manifest.records`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub images: Vec<Image>,
}

impl Dataset {
    pub fn image_size(&self) -> usize {
        self.manifest.image_size
    }

    pub fn mos(&self) -> Vec<f64> {
        self.manifest.records.iter().map(|r| r.mos).collect()
    }

    /// Loads every image referenced by `manifest`, resolved against `root`.
    pub fn load(manifest: Manifest, root: &Path) -> Result<Dataset> {
        let images = manifest
            .records
            .par_iter()
            .map(|r| {
                let img = Image::load_png(&root.join(&r.enhanced_path))?;
                if img.shape() != (manifest.image_size, manifest.image_size) {
                    return Err(Error::invalid(format!(
                        "{} is {:?}, manifest declares size {}",
                        r.enhanced_path.display(),
                        img.shape(),
                        manifest.image_size
                    )));
                }
                Ok(img)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, images })
    }

    pub fn load_from_manifest(path: &Path) -> Result<Dataset> {
        let manifest = Manifest::load(path)?;
        Dataset::load(manifest, path.parent().unwrap_or(Path::new(".")))
    }
}

pub fn image_rel_path(scene_id: u64, algo_id: u32) -> PathBuf {
    Path::new(IMAGE_DIR).join(format!("s{scene_id:05}_a{algo_id:02}.png"))
}

/// Generates the dataset without touching disk. Images are returned on the
/// 16-bit grid they would be stored on; MOS is scored on the unquantised
/// enhancement and rounded to manifest precision.
pub fn generate(cfg: &BuildConfig) -> Result<Dataset> {
    cfg.validate()?;
    let ops = cfg.operators()?;
    let per_scene: Vec<Vec<(SampleRecord, Image)>> = (0..cfg.n_scenes as u64)
        .into_par_iter()
        .map(|scene_id| {
            let env_id = scene_id / SCENES_PER_ENV;
            let raw = generate_scene(cfg.scene_seed(scene_id), cfg.size, env_id)?.with_id(scene_id);
            ops.iter()
                .map(|op| {
                    let enhanced = apply_enhancement(&raw, op);
                    let mos = round_mos(synth_mos(&raw, &enhanced)?);
                    Ok((
                        SampleRecord {
                            scene_id,
                            env_id,
                            algo_id: op.algo_id,
                            enhanced_path: image_rel_path(scene_id, op.algo_id),
                            mos,
                        },
                        enhanced.quantized(),
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let (records, images): (Vec<_>, Vec<_>) = per_scene.into_iter().flatten().unzip();
    let manifest = Manifest::new(records, cfg.seed, cfg.size)?;
    Ok(Dataset { manifest, images })
}

/// Generates the dataset and writes `images/*.png` plus `manifest.tsv`
/// under `out_dir`.
pub fn build_dataset(cfg: &BuildConfig, out_dir: &Path) -> Result<Dataset> {
    let data = generate(cfg)?;
    let img_dir = out_dir.join(IMAGE_DIR);
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    data.manifest
        .records
        .par_iter()
        .zip(data.images.par_iter())
        .try_for_each(|(r, img)| img.save_png(&out_dir.join(&r.enhanced_path)))?;
    data.manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(data)
}
