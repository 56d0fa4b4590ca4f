use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{derive_seed, rng_for, stream};

/// Bounds on the mean luma of a generated low-light scene.
pub const LOW_LIGHT_RANGE: (f64, f64) = (0.02, 0.25);

pub const MIN_SCENE_SIZE: usize = 16;

/// A simulated low-light capture; the source content shared by all
/// enhanced versions of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScene {
    pub scene_id: u64,
    pub env_id: u64,
    pub pixels: Image,
    /// Seeds the sensor/processing noise field so every operator applied to
    /// this scene sees the same realisation.
    pub noise_seed: u64,
}

impl RawScene {
    pub fn with_id(mut self, scene_id: u64) -> Self {
        self.scene_id = scene_id;
        self
    }
}

struct Environment {
    cast: [f64; 3],
    light: f64,
}

fn environment(env_id: u64) -> Environment {
    let mut rng = rng_for(0, stream::ENV, env_id);
    Environment {
        cast: [
            rng.gen_range(0.85..1.15),
            rng.gen_range(0.85..1.15),
            rng.gen_range(0.85..1.15),
        ],
        light: rng.gen_range(0.55..1.0),
    }
}

/// Chroma is damped towards a random grey, so the palette of a scene does
/// not drown out an operator's tint.
const PALETTE_CHROMA: f64 = 0.35;

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    let grey: f64 = rng.gen_range(0.1..1.0);
    let mut c = [0.0; 3];
    for v in &mut c {
        *v = grey + PALETTE_CHROMA * (rng.gen_range(0.1..1.0) - grey);
    }
    c
}

/// Bilinearly interpolated value noise on a `cells x cells` lattice.
fn value_noise(rng: &mut impl Rng, size: usize, cells: usize) -> Vec<f64> {
    let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1))
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let at = |gy: usize, gx: usize| lattice[gy * (cells + 1) + gx];
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let fy = y as f64 / size as f64 * cells as f64;
        let (gy, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..size {
            let fx = x as f64 / size as f64 * cells as f64;
            let (gx, tx) = (fx.floor() as usize, fx.fract());
            let top = at(gy, gx) * (1.0 - tx) + at(gy, gx + 1) * tx;
            let bottom = at(gy + 1, gx) * (1.0 - tx) + at(gy + 1, gx + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

enum Shape {
    Disc { cy: f64, cx: f64, r: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
        }
    }
}

/// Procedural scene: a two-colour gradient field, a handful of flat
/// geometric shapes and a two-octave luminance texture, tinted by the
/// environment's illuminant and scaled down to low light.
pub fn generate_scene(seed: u64, size: usize, env_id: u64) -> Result<RawScene> {
    if size < MIN_SCENE_SIZE {
        return Err(Error::invalid(format!(
            "scene size {size} below minimum {MIN_SCENE_SIZE}"
        )));
    }
    let env = environment(env_id);
    let mut rng = rng_for(seed, stream::SCENE, 0);

    let c0 = random_color(&mut rng);
    let c1 = random_color(&mut rng);
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = theta.sin_cos();

    let n_shapes = rng.gen_range(3..=7);
    let shapes: Vec<(Shape, [f64; 3], f64)> = (0..n_shapes)
        .map(|_| {
            let s = size as f64;
            let shape = if rng.gen_bool(0.5) {
                Shape::Disc {
                    cy: rng.gen_range(0.0..s),
                    cx: rng.gen_range(0.0..s),
                    r: rng.gen_range(0.08..0.3) * s,
                }
            } else {
                let (y0, x0) = (rng.gen_range(0.0..0.8 * s), rng.gen_range(0.0..0.8 * s));
                Shape::Rect {
                    y0,
                    x0,
                    y1: y0 + rng.gen_range(0.1..0.45) * s,
                    x1: x0 + rng.gen_range(0.1..0.45) * s,
                }
            };
            (shape, random_color(&mut rng), rng.gen_range(0.7..1.0))
        })
        .collect();

    let coarse = value_noise(&mut rng, size, 4);
    let fine = value_noise(&mut rng, size, 16);
    let (coarse_amp, fine_amp) = (rng.gen_range(0.05..0.2), rng.gen_range(0.02..0.08));

    let half = (size as f64 - 1.0) / 2.0;
    let mut img = Image::from_fn(size, size, |y, x| {
        let (fy, fx) = (y as f64, x as f64);
        let t = (((fx - half) * dx + (fy - half) * dy) / (size as f64) + 0.5).clamp(0.0, 1.0);
        let mut rgb = [0.0; 3];
        for c in 0..3 {
            rgb[c] = c0[c] * (1.0 - t) + c1[c] * t;
        }
        for (shape, color, alpha) in &shapes {
            if shape.contains(fy + 0.5, fx + 0.5) {
                for c in 0..3 {
                    rgb[c] = rgb[c] * (1.0 - alpha) + color[c] * alpha;
                }
            }
        }
        let tex = coarse_amp * coarse[y * size + x] + fine_amp * fine[y * size + x];
        for c in 0..3 {
            rgb[c] = ((rgb[c] + tex) * env.cast[c]).clamp(0.0, 1.0);
        }
        rgb
    });

    // Dim to a low-light exposure. The scale factor is below one, so the
    // result stays inside [0, 1] and the mean luma lands on the target.
    let target = rng.gen_range(0.04..0.2) * env.light;
    let mean = img.mean_luma();
    let scale = if mean > target { target / mean } else { 1.0 };
    for v in img.data_mut() {
        *v *= scale;
    }

    Ok(RawScene {
        scene_id: 0,
        env_id,
        pixels: img,
        noise_seed: derive_seed(seed, stream::NOISE),
    })
}
