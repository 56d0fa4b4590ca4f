use eiqa_core::metrics::{self, krcc, plcc, srcc, ScorePair};
use eiqa_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Rank = 1 + (#smaller) + (#equal others) / 2.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let eq = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn brute_tau_b(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    let (mut s, mut ta, mut tb) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).signum() as i64 * (a[i] != a[j]) as i64;
            let db = (b[i] - b[j]).signum() as i64 * (b[i] != b[j]) as i64;
            s += da * db;
            ta += (da == 0) as i64;
            tb += (db == 0) as i64;
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let den = ((n0 - ta) as f64 * (n0 - tb) as f64).sqrt();
    (den > 0.0).then(|| s as f64 / den)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> Vec<f64> {
    (0..n)
        .map(|_| if ties { rng.gen_range(0..4) as f64 } else { rng.gen::<f64>() * 10.0 - 5.0 })
        .collect()
}

fn check(got: eiqa_core::Result<f64>, want: Option<f64>) {
    match (got, want) {
        (Ok(g), Some(w)) => assert!((g - w).abs() < 1e-12, "{g} vs {w}"),
        (Err(Error::Degenerate(_)), None) => {}
        (g, w) => panic!("metric {g:?}, oracle {w:?}"),
    }
}

#[test]
fn two_hundred_random_vectors_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let n = rng.gen_range(2..=12);
        let ties = case % 2 == 0;
        let a = random_vec(&mut rng, n, ties);
        let b = random_vec(&mut rng, n, ties);
        let p = ScorePair::new(&a, &b).unwrap();
        check(plcc(p), pearson(&a, &b));
        check(srcc(p), pearson(&brute_ranks(&a), &brute_ranks(&b)));
        check(krcc(p), brute_tau_b(&a, &b));
    }
}

#[test]
fn spec_examples() {
    let p = [1.0, 2.0, 4.0];
    let g = [2.0, 2.9, 8.1];
    let got = plcc(ScorePair::new(&p, &g).unwrap()).unwrap();
    assert!((got - pearson(&p, &g).unwrap()).abs() < 1e-12);

    let a = [10.0, 20.0, 30.0, 40.0];
    let b = [40.0, 30.0, 20.0, 10.0];
    assert!((srcc(ScorePair::new(&a, &b).unwrap()).unwrap() + 1.0).abs() < 1e-12);

    let k = krcc(ScorePair::new(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap()).unwrap();
    assert!((k - 4.0 / 6.0).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut a8 = random_vec(&mut rng, 8, false);
    a8[3] = a8[6];
    let b8 = random_vec(&mut rng, 8, false);
    check(srcc(ScorePair::new(&a8, &b8).unwrap()), pearson(&brute_ranks(&a8), &brute_ranks(&b8)));
    let a7: Vec<f64> = [1.0, 2.0, 2.0, 3.0, 5.0, 5.0, 0.0].to_vec();
    let b7: Vec<f64> = [2.0, 1.0, 3.0, 3.0, 4.0, 0.0, 0.0].to_vec();
    check(krcc(ScorePair::new(&a7, &b7).unwrap()), brute_tau_b(&a7, &b7));

    assert!((metrics::drop(0.8305, 0.7616) - 0.0689).abs() < 1e-12);
    assert!(matches!(srcc(ScorePair::new(&[1.0, 1.0], &[1.0, 2.0]).unwrap()), Err(Error::Degenerate(_))));
}

fn distinct(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[0] != w[1])
}

proptest! {
    #[test]
    fn rank_metrics_ignore_monotone_transforms(
        a in prop::collection::vec(-3.0f64..3.0, 3..12),
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.gen_range(-3.0..3.0)).collect();
        prop_assume!(distinct(&a) && distinct(&b));
        let base = ScorePair::new(&a, &b).unwrap();
        let (s0, k0) = (srcc(base).unwrap(), krcc(base).unwrap());
        for f in [|x: f64| x.exp(), |x: f64| 3.0 * x + 7.0, |x: f64| x * x * x] {
            let t: Vec<f64> = a.iter().map(|&x| f(x)).collect();
            prop_assume!(distinct(&t));
            let p = ScorePair::new(&t, &b).unwrap();
            prop_assert!((srcc(p).unwrap() - s0).abs() < 1e-12);
            prop_assert!((krcc(p).unwrap() - k0).abs() < 1e-12);
        }
    }

    #[test]
    fn plcc_affine_and_symmetry(
        a in prop::collection::vec(-3.0f64..3.0, 3..12),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * x - i as f64 * 0.3).collect();
        prop_assume!(distinct(&a) && distinct(&b));
        let p0 = plcc(ScorePair::new(&a, &b).unwrap()).unwrap();
        let t: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
        let n: Vec<f64> = a.iter().map(|x| -scale * x + shift).collect();
        prop_assert!((plcc(ScorePair::new(&t, &b).unwrap()).unwrap() - p0).abs() < 1e-9);
        prop_assert!((plcc(ScorePair::new(&n, &b).unwrap()).unwrap() + p0).abs() < 1e-9);
        let ab = ScorePair::new(&a, &b).unwrap();
        let ba = ScorePair::new(&b, &a).unwrap();
        prop_assert!((plcc(ab).unwrap() - plcc(ba).unwrap()).abs() < 1e-12);
        prop_assert!((srcc(ab).unwrap() - srcc(ba).unwrap()).abs() < 1e-12);
        prop_assert!((krcc(ab).unwrap() - krcc(ba).unwrap()).abs() < 1e-12);
        prop_assert!(p0.abs() <= 1.0 + 1e-12);
    }
}
