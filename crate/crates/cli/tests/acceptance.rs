//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use eiqa_core::evalproto::{algo_disjoint_split, evaluate, standard_split};
use eiqa_core::losses::{huber_loss, mos_loss, plcc_loss, supcon_loss, RegressionParams};
use eiqa_core::metrics::{krcc, plcc, srcc};
use eiqa_core::models::{debias, HeadKind};
use eiqa_core::nn::Tensor3;
use eiqa_core::sampler::{epoch_batches, verify_batch, Strategy};
use eiqa_core::synthdata::{generate, BuildConfig, Dataset, Manifest, SampleRecord};
use eiqa_core::train::{pretrain_preference, train_quality};
use eiqa_core::{
    Image, ModelConfig, ModelState, RegressionInputs, Result, SamplerConfig, ScorePair, SplitPlan, SupConInputs,
    TrainConfig, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Line {
    id: u8,
    pass: bool,
    text: String,
}

fn line(id: u8, pass: bool, text: impl Into<String>) -> Line {
    let l = Line { id, pass, text: text.into() };
    println!("ACCEPTANCE {:>2} {}: {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.text);
    l
}

// ---------------------------------------------------------------- 1

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ab += (a[i] - ma) * (b[i] - mb);
        aa += (a[i] - ma).powi(2);
        bb += (b[i] - mb).powi(2);
    }
    (aa > 0.0 && bb > 0.0).then(|| ab / (aa * bb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let eq = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn tau_b(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    let (mut s, mut ta, mut tb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let da = if a[i] == a[j] { 0.0 } else { (a[i] - a[j]).signum() };
            let db = if b[i] == b[j] { 0.0 } else { (b[i] - b[j]).signum() };
            s += da * db;
            ta += (da == 0.0) as u8 as f64;
            tb += (db == 0.0) as u8 as f64;
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let den = ((n0 - ta) * (n0 - tb)).sqrt();
    (den > 0.0).then(|| s / den)
}

fn criterion_1() -> Line {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for case in 0..200 {
        let n = rng.gen_range(2..=12);
        let gen = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| if case % 2 == 0 { rng.gen_range(0..4) as f64 } else { rng.gen_range(-5.0..5.0) })
                .collect()
        };
        let a = gen(&mut rng);
        let b = gen(&mut rng);
        let p = ScorePair::new(&a, &b).unwrap();
        let pairs = [
            (plcc(p).ok(), pearson(&a, &b)),
            (srcc(p).ok(), pearson(&ranks(&a), &ranks(&b))),
            (krcc(p).ok(), tau_b(&a, &b)),
        ];
        for (got, want) in pairs {
            match (got, want) {
                (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                (None, None) => {}
                _ => mismatched += 1,
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    line(
        1,
        worst < 1e-12 && mismatched == 0 && secs < 5.0,
        format!("metric oracles: max |err| {worst:.2e} over 200 vectors, {mismatched} degenerate mismatches, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Line {
    let mut worst: f64 = 0.0;
    let mut distinct_ok = true;
    for b in [4usize, 8, 32] {
        let e = vec![vec![0.6, 0.8]; b];
        let l = supcon_loss(&SupConInputs { embeddings: &e, labels: &vec![1; b], temperature: 0.07 }).unwrap();
        worst = worst.max((l.loss - b as f64 * ((b - 1) as f64).ln()).abs());
        let labels: Vec<u32> = (0..b as u32).collect();
        let l = supcon_loss(&SupConInputs { embeddings: &e, labels: &labels, temperature: 0.07 }).unwrap();
        distinct_ok &= l.loss == 0.0;
    }
    line(
        2,
        worst < 1e-6 && distinct_ok,
        format!("SupCon closed form: max |L - |B| log(|B|-1)| {worst:.2e}; all-distinct labels give 0: {distinct_ok}"),
    )
}

// ---------------------------------------------------------------- 3

const H: f64 = 1e-4;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn loss_gradient_error(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let mut worst = [0.0f64; 4];
    for case in 0..20 {
        let b = rng.gen_range(2..10);
        let d = rng.gen_range(2..6);
        let tau = [0.05, 0.07, 0.1, 0.5][case % 4];
        let e: Vec<Vec<f64>> = (0..b)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let labels: Vec<u32> = (0..b).map(|_| rng.gen_range(0..3)).collect();
        let f = |e: &[Vec<f64>]| supcon_loss(&SupConInputs { embeddings: e, labels: &labels, temperature: tau }).unwrap();
        let g = f(&e).grad;
        for i in 0..b {
            for k in 0..d {
                let mut up = e.clone();
                let mut dn = e.clone();
                up[i][k] += H;
                dn[i][k] -= H;
                let num = (f(&up).loss - f(&dn).loss) / (2.0 * H);
                worst[0] = worst[0].max(rel(g[i][k], num));
            }
        }

        let n = rng.gen_range(2..12);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..2.5)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let params = RegressionParams { huber_delta: rng.gen_range(0.3..1.5), lambda_plcc: rng.gen_range(0.0..2.0) };
        let fns: [(usize, Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)>); 3] = [
            (1, Box::new(|x| { let l = huber_loss(&RegressionInputs::new(x, &t, params)).unwrap(); (l.value, l.grad) })),
            (2, Box::new(|x| { let l = plcc_loss(x, &t).unwrap(); (l.value, l.grad) })),
            (3, Box::new(|x| { let l = mos_loss(&RegressionInputs::new(x, &t, params)).unwrap(); (l.total.value, l.total.grad) })),
        ];
        for (slot, f) in fns.iter() {
            let (_, g) = f(&p);
            for i in 0..n {
                let mut up = p.clone();
                let mut dn = p.clone();
                up[i] += H;
                dn[i] -= H;
                let num = (f(&up).0 - f(&dn).0) / (2.0 * H);
                worst[*slot] = worst[*slot].max(rel(g[i], num));
            }
        }
    }
    worst
}

fn small_model(seed: u64, head: HeadKind) -> ModelConfig {
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

fn network_gradient_error(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let mut m = ModelState::new(small_model(case, HeadKind::Debias)).unwrap();
        let img = random_image(rng, 12);
        m.zero_grad();
        let trace = m.predict_traced(&Tensor3::from_vec(3, 12, 12, img.to_chw()));
        m.predict_backward(&trace, 1.0);
        let mut params: Vec<(String, usize, f64)> = Vec::new();
        m.visit_params(&mut |name, p| {
            for k in 0..p.len() {
                params.push((name.clone(), k, p.grad[k]));
            }
        });
        for comp in ["preference", "quality", "bias", "regressor"] {
            let pool: Vec<&(String, usize, f64)> = params.iter().filter(|p| p.0.starts_with(comp)).collect();
            for _ in 0..20 {
                let (name, k, g) = pool[rng.gen_range(0..pool.len())];
                let mut eval = |d: f64| {
                    m.visit_params_mut(&mut |n, p| {
                        if n == *name {
                            p.value[*k] += d;
                        }
                    });
                    let y = m.predict(&img).unwrap();
                    m.visit_params_mut(&mut |n, p| {
                        if n == *name {
                            p.value[*k] -= d;
                        }
                    });
                    y
                };
                let num = (eval(H) - eval(-H)) / (2.0 * H);
                worst = worst.max(rel(*g, num));
            }
        }
    }
    worst
}

fn criterion_3() -> Line {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let l = loss_gradient_error(&mut rng);
    let net = network_gradient_error(&mut rng);
    let secs = t.elapsed().as_secs_f64();
    let pass = l.iter().all(|&e| e < 1e-4) && net < 1e-3 && secs < 120.0;
    line(
        3,
        pass,
        format!(
            "gradients: max rel err supcon {:.1e}, huber {:.1e}, plcc {:.1e}, mos {:.1e}, predict {net:.1e}; {secs:.1}s",
            l[0], l[1], l[2], l[3]
        ),
    )
}

// ---------------------------------------------------------------- 4

fn grid_manifest(scenes: u64, k: u32) -> Manifest {
    let records = (0..scenes)
        .flat_map(|s| {
            (0..k).map(move |a| SampleRecord {
                scene_id: s,
                env_id: s / 10,
                algo_id: a,
                enhanced_path: format!("images/s{s:05}_a{a:02}.png").into(),
                mos: 50.0,
            })
        })
        .collect();
    Manifest::new(records, 0, 64).unwrap()
}

fn criterion_4() -> Line {
    let m = grid_manifest(100, 10);
    let mut structure_ok = true;
    let mut pairs_ok = true;
    let (mut empty, mut total) = (0usize, 0usize);
    for epoch in 0..100 {
        let cfg = SamplerConfig { seed: epoch, strategy: Strategy::ContentControlled, ..SamplerConfig::default() };
        let expected_pairs = cfg.scenes_per_batch * cfg.algos_per_scene * (cfg.algos_per_scene - 1) / 2;
        for b in epoch_batches(&m, &cfg).unwrap() {
            let d = verify_batch(&b, &m, &cfg);
            structure_ok &= d.scene_groups_valid && d.size == cfg.batch_size;
            pairs_ok &= d.hard_negative_pairs == expected_pairs;
            empty += d.empty_positive_sets();
            total += d.size;
        }
    }
    let rate = empty as f64 / total as f64;
    line(
        4,
        structure_ok && pairs_ok && rate < 0.05,
        format!("sampler over 100 epochs: scene groups valid {structure_ok}, hard-negative pairs exact {pairs_ok}, empty P(i) rate {:.2}%", rate * 100.0),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Line {
    let data = generate(&BuildConfig { n_scenes: 20, k_algorithms: 4, size: 20, seed: 5 }).unwrap();
    let split = standard_split(&data.manifest, 0.2, 5).unwrap();
    let cfg = TrainConfig {
        batch_size: 8,
        epochs_stage1: 1,
        epochs_stage2: 2,
        crop_size: 16,
        scenes_per_batch: 4,
        algos_per_scene: 2,
        pref_dim: 8,
        quality_dim: 12,
        pref_widths: vec![4, 6],
        quality_widths: vec![4, 6],
        proj_hidden: 8,
        regressor_hidden: 8,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let (pre, _) = pretrain_preference(&data, &split, &cfg).unwrap();
    let (after, _) = train_quality(&data, &split, Some(pre.clone()), &cfg).unwrap();
    let frozen = after.preference == pre.preference && after.preference_checksum() == pre.preference_checksum();

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let composed = (0..100).all(|_| {
        let x = random_image(&mut rng, 16);
        let e = after.preference_forward(&x).unwrap();
        let q = debias(&after.quality_forward(&x).unwrap(), &after.bias_predict(&e).unwrap()).unwrap();
        after.predict(&x).unwrap() == after.regress(&q).unwrap()
    });
    // The inference entry point takes the enhanced image and nothing else.
    let _signature: fn(&ModelState, &Image) -> Result<f64> = ModelState::predict;
    line(
        5,
        frozen && composed,
        format!("E_p bit-identical after stage 2: {frozen}; predict == explicit composition on 100 inputs: {composed}; predict(&self, &Image) only"),
    )
}

// ---------------------------------------------------------------- 6-9

fn preference_gap(state: &ModelState, data: &Dataset, idx: &[usize]) -> f64 {
    let embs: Vec<(u32, Vec<f64>)> = idx
        .iter()
        .map(|&i| {
            let img = data.images[i].center_crop(state.config.input_size).unwrap();
            (data.manifest.records[i].algo_id, state.preference_forward(&img).unwrap().0)
        })
        .collect();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..embs.len() {
        for j in i + 1..embs.len() {
            let c: f64 = embs[i].1.iter().zip(&embs[j].1).map(|(a, b)| a * b).sum();
            if embs[i].0 == embs[j].0 {
                intra += c;
                ni += 1.0;
            } else {
                inter += c;
                nx += 1.0;
            }
        }
    }
    intra / ni - inter / nx
}

struct SeedResult {
    gap: f64,
    pretrain_secs: f64,
    full: f64,
    concat: f64,
    no_pref: f64,
    balanced: f64,
    random: f64,
    drop_full: f64,
    drop_no_pref: f64,
    disjoint_secs: f64,
}

fn stage_two(data: &Dataset, split: &SplitPlan, cfg: &TrainConfig, variant: Variant, pre: Option<ModelState>) -> f64 {
    let c = TrainConfig { variant, ..cfg.clone() };
    let (state, _) = train_quality(data, split, pre, &c).unwrap();
    evaluate(&state, data, split).unwrap().srcc
}

fn run_seed(seed: u64) -> SeedResult {
    let data = generate(&BuildConfig { seed, ..BuildConfig::default() }).unwrap();
    let standard = standard_split(&data.manifest, 0.2, seed).unwrap();
    let disjoint = algo_disjoint_split(&data.manifest, 8, seed).unwrap();
    let cfg = TrainConfig { seed, ..TrainConfig::default() };

    let t = Instant::now();
    let (pre, _) = pretrain_preference(&data, &standard, &cfg).unwrap();
    let pretrain_secs = t.elapsed().as_secs_f64();
    let gap = preference_gap(&pre, &data, &standard.test_indices);
    let full = stage_two(&data, &standard, &cfg, Variant::Full, Some(pre.clone()));
    let concat = stage_two(&data, &standard, &cfg, Variant::PreferenceConcat, Some(pre));
    let no_pref = stage_two(&data, &standard, &cfg, Variant::NoPreference, None);
    let mut by_sampler = Vec::new();
    for s in [Strategy::AlgoBalanced, Strategy::Random] {
        let c = TrainConfig { stage1_sampler: s, ..cfg.clone() };
        let (p, _) = pretrain_preference(&data, &standard, &c).unwrap();
        by_sampler.push(stage_two(&data, &standard, &cfg, Variant::Full, Some(p)));
    }
    let t = Instant::now();
    let (pd, _) = pretrain_preference(&data, &disjoint, &cfg).unwrap();
    let unseen_full = stage_two(&data, &disjoint, &cfg, Variant::Full, Some(pd));
    let unseen_no_pref = stage_two(&data, &disjoint, &cfg, Variant::NoPreference, None);
    let disjoint_secs = t.elapsed().as_secs_f64();
    let r = SeedResult {
        gap,
        pretrain_secs,
        full,
        concat,
        no_pref,
        balanced: by_sampler[0],
        random: by_sampler[1],
        drop_full: full - unseen_full,
        drop_no_pref: no_pref - unseen_no_pref,
        disjoint_secs,
    };
    println!(
        "  seed {seed}: gap {:.4} | SRCC full {:.4} concat {:.4} w/o-pref {:.4} | balanced {:.4} random {:.4} | drop full {:.4} w/o-pref {:.4}",
        r.gap, r.full, r.concat, r.no_pref, r.balanced, r.random, r.drop_full, r.drop_no_pref
    );
    r
}

fn temperature_sweep() {
    let data = generate(&BuildConfig::default()).unwrap();
    let split = standard_split(&data.manifest, 0.2, 0).unwrap();
    let mut parts = Vec::new();
    for tau in [0.05, 0.07, 0.1] {
        let cfg = TrainConfig { temperature: tau, ..TrainConfig::default() };
        let (pre, _) = pretrain_preference(&data, &split, &cfg).unwrap();
        parts.push(format!("tau {tau}: gap {:.4}", preference_gap(&pre, &data, &split.test_indices)));
    }
    println!("  temperature sweep (seed 0): {}", parts.join(", "));
}

fn criteria_6_to_9() -> Vec<Line> {
    let seeds: Vec<SeedResult> = (0..5).map(run_seed).collect();
    temperature_sweep();
    let n = seeds.len() as f64;
    let avg = |f: fn(&SeedResult) -> f64| seeds.iter().map(f).sum::<f64>() / n;
    let count = |f: fn(&SeedResult) -> bool| seeds.iter().filter(|s| f(s)).count();

    let gap_ok = count(|s| s.gap > 0.1);
    let max_pre = seeds.iter().map(|s| s.pretrain_secs).fold(0.0, f64::max);
    let c6 = line(
        6,
        gap_ok >= 4 && max_pre <= 600.0,
        format!("intra - inter cosine > 0.1 on {gap_ok}/5 seeds (mean {:.4}); slowest stage 1 {max_pre:.0}s", avg(|s| s.gap)),
    );

    let fewer = count(|s| s.drop_full < s.drop_no_pref);
    let (mdf, mdn) = (avg(|s| s.drop_full), avg(|s| s.drop_no_pref));
    let ratio = if mdn > 0.0 { Some(mdf / mdn) } else { None };
    let max_dis = seeds.iter().map(|s| s.disjoint_secs).fold(0.0, f64::max);
    let ratio_text = ratio.map_or("undefined (baseline mean drop <= 0)".to_string(), |r| format!("{r:.3}"));
    let c7 = line(
        7,
        fewer >= 4 && ratio.is_some_and(|r| r < 0.75) && max_dis <= 1800.0,
        format!(
            "drop(SRCC) full < w/o-pref on {fewer}/5 seeds; mean drops {mdf:.4} vs {mdn:.4}, ratio {ratio_text}; slowest seed {max_dis:.0}s"
        ),
    );

    let (f, c, np) = (avg(|s| s.full), avg(|s| s.concat), avg(|s| s.no_pref));
    let better = count(|s| s.full - s.no_pref > 0.0);
    let c8 = line(
        8,
        f >= c && c >= np && better >= 4,
        format!("mean SRCC full {f:.4} >= concat {c:.4} >= w/o-pref {np:.4}; full > w/o-pref on {better}/5 seeds"),
    );

    let (cc, bal, rnd) = (f, avg(|s| s.balanced), avg(|s| s.random));
    let c9 = line(
        9,
        cc >= bal && bal >= rnd,
        format!("mean SRCC content-controlled {cc:.4} >= algorithm-balanced {bal:.4} >= random {rnd:.4}"),
    );
    vec![c6, c7, c8, c9]
}

// ---------------------------------------------------------------- 10

const DETERMINISM_CFG: &str = "\
scenes = 20
algos = 4
size = 32
crop_size = 24
batch_size = 8
scenes_per_batch = 4
algos_per_scene = 2
epochs_stage1 = 2
epochs_stage2 = 2
";

fn pipeline(root: &Path) -> std::io::Result<bool> {
    let cfg = root.join("run.cfg");
    fs::write(&cfg, DETERMINISM_CFG)?;
    let out = root.join("out");
    for cmd in ["gen-data", "pretrain", "train", "eval"] {
        let status = Command::new(env!("CARGO_BIN_EXE_eiqa"))
            .arg("--config")
            .arg(&cfg)
            .arg("--strict-determinism")
            .arg(cmd)
            .arg("--out")
            .arg(&out)
            .env_remove("EIQA_SEED")
            .stdout(std::process::Stdio::null())
            .status()?;
        if !status.success() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn criterion_10() -> Line {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ran = pipeline(a.path()).unwrap_or(false) && pipeline(b.path()).unwrap_or(false);
    let files = [
        "data/manifest.tsv",
        "pretrain/preference.json",
        "pretrain/train_log.jsonl",
        "train/model.json",
        "train/train_log.jsonl",
        "eval/report.tsv",
        "eval/report.json",
        "eval/predictions.tsv",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(a.path().join("out").join(f)).ok() != fs::read(b.path().join("out").join(f)).ok())
        .collect();
    let images_same = {
        let list = |root: &Path| -> Vec<(String, Vec<u8>)> {
            let mut v: Vec<_> = fs::read_dir(root.join("out/data/images"))
                .map(|d| {
                    d.filter_map(|e| e.ok())
                        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default()))
                        .collect()
                })
                .unwrap_or_default();
            v.sort();
            v
        };
        let la = list(a.path());
        !la.is_empty() && la == list(b.path())
    };
    line(
        10,
        ran && differing.is_empty() && images_same,
        format!(
            "strict reruns of gen-data/pretrain/train/eval: completed {ran}, images identical {images_same}, differing artifacts {differing:?}"
        ),
    )
}

fn main() {
    let filter: Option<Vec<u8>> = std::env::var("EIQA_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |id: u8| filter.as_ref().map_or(true, |f| f.contains(&id));
    let t = Instant::now();
    let mut lines = Vec::new();
    let quick: [(u8, fn() -> Line); 6] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (10, criterion_10),
    ];
    for (id, f) in quick {
        if wanted(id) {
            lines.push(f());
        }
    }
    if (6..=9).any(wanted) {
        lines.extend(criteria_6_to_9().into_iter().filter(|l| wanted(l.id)));
    }
    lines.sort_by_key(|l| l.id);
    let failed: Vec<u8> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!("acceptance summary ({:.0}s):", t.elapsed().as_secs_f64());
    for l in &lines {
        println!("  [{}] criterion {:>2}: {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.text);
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
