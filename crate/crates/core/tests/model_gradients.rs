use eiqa_core::models::{debias, HeadKind, ModelConfig, ModelState};
use eiqa_core::nn::{Module, Tensor3};
use eiqa_core::{DebiasedFeature, Image, PreferenceEmbedding};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn config(seed: u64, head: HeadKind) -> ModelConfig {
    ModelConfig {
        image_size: 12,
        input_size: 12,
        pref_dim: 6,
        quality_dim: 8,
        pref_widths: vec![3, 4],
        quality_widths: vec![3, 4],
        proj_hidden: 7,
        regressor_hidden: 5,
        head,
        num_algorithms: 0,
        seed,
    }
}

fn random_image(rng: &mut ChaCha8Rng, size: usize) -> Image {
    Image::from_fn(size, size, |_, _| [rng.gen(), rng.gen(), rng.gen()])
}

fn tensor(img: &Image) -> Tensor3 {
    Tensor3::from_vec(3, img.height(), img.width(), img.to_chw())
}

fn set_param(m: &mut ModelState, target: &str, idx: usize, value: f64) {
    m.visit_params_mut(&mut |name, p| {
        if name == target {
            p.value[idx] = value;
        }
    });
}

/// Analytic d predict / d theta against central differences, on 20 random
/// parameters per component.
#[test]
fn predict_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20u64 {
        let head = [HeadKind::Debias, HeadKind::Concat, HeadKind::NoPreference][case as usize % 3];
        let mut m = ModelState::new(config(case, head)).unwrap();
        let img = random_image(&mut rng, 12);
        let x = tensor(&img);
        m.zero_grad();
        let trace = m.predict_traced(&x);
        assert_eq!(trace.output, m.predict(&img).unwrap());
        m.predict_backward(&trace, 1.0);

        let mut params: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
        m.visit_params(&mut |name, p| params.push((name, p.value.clone(), p.grad.clone())));
        for comp in ["preference", "quality", "bias", "regressor"] {
            if head == HeadKind::NoPreference && (comp == "preference" || comp == "bias") {
                continue;
            }
            if head == HeadKind::Concat && comp == "bias" {
                continue;
            }
            let flat: Vec<(usize, usize)> = params
                .iter()
                .enumerate()
                .filter(|(_, (n, _, _))| n.starts_with(comp))
                .flat_map(|(pi, (_, v, _))| (0..v.len()).map(move |k| (pi, k)))
                .collect();
            for s in sample(&mut rng, flat.len(), 20.min(flat.len())) {
                let (pi, k) = flat[s];
                let (name, value, grad) = &params[pi];
                let orig = value[k];
                set_param(&mut m, name, k, orig + H);
                let up = m.predict(&img).unwrap();
                set_param(&mut m, name, k, orig - H);
                let down = m.predict(&img).unwrap();
                set_param(&mut m, name, k, orig);
                let num = (up - down) / (2.0 * H);
                assert!(rel_err(grad[k], num) < 1e-3, "case {case} {name}[{k}]: {} vs {num}", grad[k]);
            }
        }
    }
}

#[test]
fn quality_forward_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..5u64 {
        let mut m = ModelState::new(config(case, HeadKind::Debias)).unwrap();
        let img = random_image(&mut rng, 12);
        let out = rng.gen_range(0..8);
        let (_, cache) = m.quality.forward_cached(&tensor(&img));
        let mut g = vec![0.0; 8];
        g[out] = 1.0;
        let gx = m.quality.backward(&cache, &g, true).unwrap();
        for _ in 0..10 {
            let (y, x, c) = (rng.gen_range(0..12), rng.gen_range(0..12), rng.gen_range(0..3));
            let eval = |d: f64| {
                let mut im = img.clone();
                let mut px = im.pixel(y, x);
                px[c] += d;
                im.set_pixel(y, x, px);
                m.quality_forward(&im).unwrap().0[out]
            };
            let num = (eval(H) - eval(-H)) / (2.0 * H);
            let ana = gx.data[c * 144 + y * 12 + x];
            assert!(rel_err(ana, num) < 1e-3, "pixel ({y},{x},{c}): {ana} vs {num}");
        }
    }
}

#[test]
fn bias_jacobian_and_regressor_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20u64 {
        let mut m = ModelState::new(config(case, HeadKind::Debias)).unwrap();
        let e: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let row = rng.gen_range(0..8);
        let (_, cache) = m.bias.forward_cached(&e);
        let mut g = vec![0.0; 8];
        g[row] = 1.0;
        let ge = m.bias.backward(&cache, &g);
        for k in 0..6 {
            let f = |d: f64| {
                let mut v = e.clone();
                v[k] += d;
                m.bias_predict(&PreferenceEmbedding(v)).unwrap().0[row]
            };
            let num = (f(H) - f(-H)) / (2.0 * H);
            assert!(rel_err(ge[k], num) < 1e-3);
        }
        let q: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, cache) = m.regressor.forward_cached(&q);
        let gq = m.regressor.backward(&cache, &[1.0]);
        for k in 0..8 {
            let f = |d: f64| {
                let mut v = q.clone();
                v[k] += d;
                m.regress(&DebiasedFeature(v)).unwrap()
            };
            let num = (f(H) - f(-H)) / (2.0 * H);
            assert!(rel_err(gq[k], num) < 1e-3);
        }
    }
}

#[test]
fn composition_law_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = ModelState::new(config(9, HeadKind::Debias)).unwrap();
    for _ in 0..100 {
        let x = random_image(&mut rng, 12);
        let e = m.preference_forward(&x).unwrap();
        let explicit = m
            .regress(&debias(&m.quality_forward(&x).unwrap(), &m.bias_predict(&e).unwrap()).unwrap())
            .unwrap();
        assert_eq!(m.predict(&x).unwrap(), explicit);
        let n: f64 = e.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-5);
    }
}

#[test]
fn frozen_preference_receives_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut m = ModelState::new(config(1, HeadKind::Debias)).unwrap();
    m.frozen.preference = true;
    m.zero_grad();
    let trace = m.predict_traced(&tensor(&random_image(&mut rng, 12)));
    m.predict_backward(&trace, 1.0);
    m.preference.visit("", &mut |_, p| assert!(p.grad.iter().all(|&g| g == 0.0)));
    let mut touched = false;
    m.quality.visit("", &mut |_, p| touched |= p.grad.iter().any(|&g| g != 0.0));
    assert!(touched);
}
