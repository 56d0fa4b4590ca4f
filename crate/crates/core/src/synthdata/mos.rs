//! Closed-form synthetic MOS.
//!
//! The score depends on four luma statistics of the enhanced image:
//!
//! | factor | statistic | penalty `p` in [0, 1] | weight `w` |
//! |---|---|---|---|
//! | brightness | mean luma `L` | `min(1, dist(L, [0.40, 0.60]) / 0.30)` | 0.6 |
//! | clipping | fraction `c` of pixels with luma at 0 or 1 | `min(1, c / 0.10)` | 0.3 |
//! | noise | Immerkaer estimate `s` | `min(1, max(0, s - 0.002) / 0.06)` | 0.5 |
//! | contrast | RMS contrast `k` (luma std) | `min(1, max(0, 0.12 - k) / 0.12)` | 0.3 |
//!
//! `MOS = 100 * prod(1 - w * p)`.
//!
//! Every statistic is computed from luma, which tint and saturation never
//! change, so the score is blind to an operator's colour style.

use crate::error::{Error, Result};
use crate::image::Image;

use super::scene::RawScene;

pub const MOS_MAX: f64 = 100.0;

const BRIGHT_BAND: (f64, f64) = (0.40, 0.60);
const BRIGHT_SPAN: f64 = 0.30;
const CLIP_SPAN: f64 = 0.10;
const CLIP_EPS: f64 = 1e-6;
const NOISE_DEADZONE: f64 = 0.002;
const NOISE_SPAN: f64 = 0.06;
const CONTRAST_TARGET: f64 = 0.12;

const W_BRIGHT: f64 = 0.6;
const W_CLIP: f64 = 0.3;
const W_NOISE: f64 = 0.5;
const W_CONTRAST: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityFactors {
    pub mean_luma: f64,
    pub clip_fraction: f64,
    pub noise_sigma: f64,
    pub contrast: f64,
}

/// Immerkaer's fast noise variance estimator on a luma plane.
pub fn estimate_noise(luma: &[f64], h: usize, w: usize) -> f64 {
    if h < 3 || w < 3 {
        return 0.0;
    }
    const K: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];
    let mut acc = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut r = 0.0;
            for (ky, row) in K.iter().enumerate() {
                for (kx, k) in row.iter().enumerate() {
                    r += k * luma[(y + ky - 1) * w + (x + kx - 1)];
                }
            }
            acc += r.abs();
        }
    }
    (std::f64::consts::FRAC_PI_2).sqrt() * acc / (6.0 * (w - 2) as f64 * (h - 2) as f64)
}

pub fn quality_factors(img: &Image) -> QualityFactors {
    let (h, w) = img.shape();
    let luma = img.luma();
    let n = luma.len() as f64;
    let mean = luma.iter().sum::<f64>() / n;
    let var = luma.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let clipped = luma
        .iter()
        .filter(|&&v| v <= CLIP_EPS || v >= 1.0 - CLIP_EPS)
        .count();
    QualityFactors {
        mean_luma: mean,
        clip_fraction: clipped as f64 / n,
        noise_sigma: estimate_noise(&luma, h, w),
        contrast: var.sqrt(),
    }
}

pub fn mos_from_factors(f: &QualityFactors) -> f64 {
    let band_dist = (BRIGHT_BAND.0 - f.mean_luma)
        .max(f.mean_luma - BRIGHT_BAND.1)
        .max(0.0);
    let p_bright = (band_dist / BRIGHT_SPAN).min(1.0);
    let p_clip = (f.clip_fraction / CLIP_SPAN).min(1.0);
    let p_noise = ((f.noise_sigma - NOISE_DEADZONE).max(0.0) / NOISE_SPAN).min(1.0);
    let p_contrast = ((CONTRAST_TARGET - f.contrast).max(0.0) / CONTRAST_TARGET).min(1.0);
    MOS_MAX
        * (1.0 - W_BRIGHT * p_bright)
        * (1.0 - W_CLIP * p_clip)
        * (1.0 - W_NOISE * p_noise)
        * (1.0 - W_CONTRAST * p_contrast)
}

/// Synthetic MOS of an enhanced image. The raw scene only fixes the
/// expected shape; the score itself is no-reference.
pub fn synth_mos(raw: &RawScene, enhanced: &Image) -> Result<f64> {
    if raw.pixels.shape() != enhanced.shape() {
        return Err(Error::invalid(format!(
            "raw {:?} and enhanced {:?} shapes differ",
            raw.pixels.shape(),
            enhanced.shape()
        )));
    }
    Ok(mos_from_factors(&quality_factors(enhanced)))
}
