use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{luma_of, Image, LUMA};
use crate::rng::{rng_for, stream};

use super::scene::RawScene;

/// Abscissae of the interior tone-curve knots; the curve is pinned at
/// (0, 0) and (1, 1).
pub const TONE_KNOT_X: [f64; 3] = [0.25, 0.5, 0.75];

/// Parameters of one synthetic enhancer.
///
/// `gamma`, `tone_knots`, `noise_sigma` and `sharpen` change luma and hence
/// quality. `tint` and `saturation` act on chroma only and never reach the
/// MOS model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub gamma: f64,
    pub tone_knots: [f64; 3],
    /// Additive RGB offset; projected onto the luma-neutral plane before use.
    pub tint: [f64; 3],
    pub saturation: f64,
    pub sharpen: f64,
    pub noise_sigma: f64,
}

impl StyleParams {
    pub const IDENTITY: StyleParams = StyleParams {
        gamma: 1.0,
        tone_knots: TONE_KNOT_X,
        tint: [0.0; 3],
        saturation: 1.0,
        sharpen: 0.0,
        noise_sigma: 0.0,
    };

    pub fn named(&self) -> [(&'static str, f64); 10] {
        [
            ("gamma", self.gamma),
            ("tone_q1", self.tone_knots[0]),
            ("tone_mid", self.tone_knots[1]),
            ("tone_q3", self.tone_knots[2]),
            ("tint_r", self.tint[0]),
            ("tint_g", self.tint[1]),
            ("tint_b", self.tint[2]),
            ("saturation", self.saturation),
            ("sharpen", self.sharpen),
            ("noise_sigma", self.noise_sigma),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementOperator {
    pub algo_id: u32,
    pub style: StyleParams,
}

/// Removes the luma component of an RGB offset so that adding it to a
/// pixel leaves the pixel's luma unchanged.
pub fn luma_neutral(offset: [f64; 3]) -> [f64; 3] {
    let y = luma_of(&offset);
    offset.map(|v| v - y)
}

/// Per-parameter sampling ranges. The minimum pairwise margin is expressed
/// as a fraction of these widths.
const GAMMA_RANGE: (f64, f64) = (0.35, 0.8);
const TONE_RANGE: (f64, f64) = (-0.1, 0.12);
const TINT_MAG_RANGE: (f64, f64) = (0.08, 0.14);
const SAT_RANGE: (f64, f64) = (0.55, 1.6);
const SHARPEN_RANGE: (f64, f64) = (0.0, 1.5);
const NOISE_RANGE: (f64, f64) = (0.0, 0.05);

fn widths() -> [f64; 10] {
    let tone = TONE_RANGE.1 - TONE_RANGE.0;
    let tint = 2.0 * TINT_MAG_RANGE.1;
    [
        GAMMA_RANGE.1 - GAMMA_RANGE.0,
        tone,
        tone,
        tone,
        tint,
        tint,
        tint,
        SAT_RANGE.1 - SAT_RANGE.0,
        SHARPEN_RANGE.1 - SHARPEN_RANGE.0,
        NOISE_RANGE.1 - NOISE_RANGE.0,
    ]
}

/// Number of style parameters on which two operators differ by at least
/// `margin` (relative to each parameter's sampling range).
pub fn separated_params(a: &StyleParams, b: &StyleParams, margin: f64) -> usize {
    let w = widths();
    a.named()
        .iter()
        .zip(b.named().iter())
        .zip(w.iter())
        .filter(|((pa, pb), w)| (pa.1 - pb.1).abs() >= margin * **w)
        .count()
}

fn tone_knots(strength: f64, rng: &mut impl Rng) -> [f64; 3] {
    let mut k = TONE_KNOT_X.map(|x| {
        x + strength * (std::f64::consts::PI * x).sin() + rng.gen_range(-0.01..0.01)
    });
    // keep the curve strictly increasing and inside (0, 1)
    k[0] = k[0].clamp(0.05, 0.6);
    k[1] = k[1].clamp(k[0] + 0.05, 0.8);
    k[2] = k[2].clamp(k[1] + 0.05, 0.95);
    k
}

/// Samples `k` operators whose style parameters are pairwise separated: any
/// two differ in at least two parameters by `margin` of the parameter's
/// range. Tint hues are spread evenly around the colour wheel.
pub fn sample_operators(k: usize, seed: u64, margin: f64) -> Result<Vec<EnhancementOperator>> {
    if k == 0 {
        return Err(Error::invalid("operator count must be positive"));
    }
    let mut rng = rng_for(seed, stream::OPERATORS, k as u64);
    let mut ops: Vec<EnhancementOperator> = Vec::with_capacity(k);
    let hue_offset: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    for algo_id in 0..k {
        let mut accepted = None;
        for _attempt in 0..10_000 {
            let hue = hue_offset
                + std::f64::consts::TAU * algo_id as f64 / k as f64
                + rng.gen_range(-0.15..0.15);
            let mag = rng.gen_range(TINT_MAG_RANGE.0..TINT_MAG_RANGE.1);
            let third = std::f64::consts::TAU / 3.0;
            let tint = luma_neutral([
                mag * hue.cos(),
                mag * (hue - third).cos(),
                mag * (hue + third).cos(),
            ]);
            let style = StyleParams {
                gamma: rng.gen_range(GAMMA_RANGE.0..GAMMA_RANGE.1),
                tone_knots: tone_knots(rng.gen_range(TONE_RANGE.0..TONE_RANGE.1), &mut rng),
                tint,
                saturation: rng.gen_range(SAT_RANGE.0..SAT_RANGE.1),
                sharpen: rng.gen_range(SHARPEN_RANGE.0..SHARPEN_RANGE.1),
                noise_sigma: rng.gen_range(NOISE_RANGE.0..NOISE_RANGE.1),
            };
            if ops
                .iter()
                .all(|o| separated_params(&o.style, &style, margin) >= 2)
            {
                accepted = Some(style);
                break;
            }
        }
        let style = accepted.ok_or_else(|| {
            Error::invalid(format!(
                "could not place {k} operators with pairwise margin {margin}"
            ))
        })?;
        ops.push(EnhancementOperator {
            algo_id: algo_id as u32,
            style,
        });
    }
    Ok(ops)
}

fn tone_map(v: f64, knots: &[f64; 3]) -> f64 {
    let xs = [0.0, TONE_KNOT_X[0], TONE_KNOT_X[1], TONE_KNOT_X[2], 1.0];
    let ys = [0.0, knots[0], knots[1], knots[2], 1.0];
    if v <= 0.0 {
        return v * (ys[1] / xs[1]);
    }
    if v >= 1.0 {
        return 1.0 + (v - 1.0) * (1.0 - ys[3]) / (1.0 - xs[3]);
    }
    let seg = xs.windows(2).position(|w| v < w[1]).unwrap_or(3);
    let t = (v - xs[seg]) / (xs[seg + 1] - xs[seg]);
    ys[seg] + t * (ys[seg + 1] - ys[seg])
}

fn box_blur3(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    acc += plane[yy * w + xx];
                }
            }
            out[y * w + x] = acc / 9.0;
        }
    }
    out
}

/// Maps an RGB triple into the unit cube without changing its luma (other
/// than clamping luma itself to [0, 1]). In-range pixels are untouched.
fn luma_preserving_clip(p: &mut [f64]) {
    if p.iter().all(|v| (0.0..=1.0).contains(v)) {
        return;
    }
    let y = luma_of(p);
    let yc = y.clamp(0.0, 1.0);
    let mut alpha: f64 = 1.0;
    for &v in p.iter() {
        let c = v - y;
        if c > 0.0 {
            alpha = alpha.min((1.0 - yc) / c);
        } else if c < 0.0 {
            alpha = alpha.min(yc / -c);
        }
    }
    for v in p.iter_mut() {
        *v = (yc + alpha * (*v - y)).clamp(0.0, 1.0);
    }
}

/// Applies the operator in a fixed order: gamma, tone curve, tint,
/// saturation, sharpening, noise, clip.
///
/// Tint and saturation move chroma around each pixel's luma, sharpening and
/// noise add the same offset to all three channels, and the final clip keeps
/// luma. Two operators that share gamma, tone, sharpening and noise
/// therefore produce identical luma planes.
pub fn apply_enhancement(raw: &RawScene, op: &EnhancementOperator) -> Image {
    let s = &op.style;
    let (h, w) = raw.pixels.shape();
    let mut img = raw.pixels.clone();

    if s.gamma != 1.0 {
        for v in img.data_mut() {
            *v = v.max(0.0).powf(s.gamma);
        }
    }
    if s.tone_knots != TONE_KNOT_X {
        for v in img.data_mut() {
            *v = tone_map(*v, &s.tone_knots);
        }
    }
    let tint = luma_neutral(s.tint);
    if tint != [0.0; 3] {
        for p in img.data_mut().chunks_exact_mut(3) {
            for c in 0..3 {
                p[c] += tint[c];
            }
        }
    }
    if s.saturation != 1.0 {
        for p in img.data_mut().chunks_exact_mut(3) {
            let y = luma_of(p);
            for v in p.iter_mut() {
                *v = y + s.saturation * (*v - y);
            }
        }
    }
    if s.sharpen != 0.0 {
        let luma = img.luma();
        let blurred = box_blur3(&luma, h, w);
        for (i, p) in img.data_mut().chunks_exact_mut(3).enumerate() {
            let d = s.sharpen * (luma[i] - blurred[i]);
            p.iter_mut().for_each(|v| *v += d);
        }
    }
    if s.noise_sigma != 0.0 {
        let mut rng = rng_for(raw.noise_seed, stream::NOISE, 0);
        for p in img.data_mut().chunks_exact_mut(3) {
            let n: f64 = rng.sample(StandardNormal);
            let d = s.noise_sigma * n;
            p.iter_mut().for_each(|v| *v += d);
        }
    }
    for p in img.data_mut().chunks_exact_mut(3) {
        luma_preserving_clip(p);
    }
    debug_assert!(LUMA.iter().sum::<f64>() > 0.999);
    img
}
