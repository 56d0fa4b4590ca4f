//! Train/test split protocols and the evaluation harness.
//!
//! * `standard`: scene-level random split, every version of a scene on
//!   one side.
//! * `kfold_env`: environments partitioned into `k` contiguous groups.
//! * `algo_disjoint`: whole algorithms held out for testing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, ScorePair};
use crate::models::QualityPredictor;
use crate::rng::{rng_for, stream};
use crate::synthdata::{Dataset, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Standard,
    KfoldEnv,
    AlgoDisjoint,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Standard => "standard",
            Protocol::KfoldEnv => "kfold_env",
            Protocol::AlgoDisjoint => "algo_disjoint",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Protocol::Standard, Protocol::KfoldEnv, Protocol::AlgoDisjoint]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown protocol `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub fold_id: Option<usize>,
    /// Held-out algorithms for `AlgoDisjoint` plans.
    pub test_algos: Vec<u32>,
    pub seed: u64,
}

impl SplitPlan {
    /// Checks disjointness, bounds and the protocol's leakage invariant.
    pub fn validate(&self, manifest: &Manifest) -> Result<()> {
        let n = manifest.records.len();
        let train: BTreeSet<usize> = self.train_indices.iter().copied().collect();
        let test: BTreeSet<usize> = self.test_indices.iter().copied().collect();
        if train.len() != self.train_indices.len() || test.len() != self.test_indices.len() {
            return Err(Error::invalid("split contains duplicate indices"));
        }
        if let Some(&i) = train.iter().chain(&test).find(|&&i| i >= n) {
            return Err(Error::invalid(format!("split index {i} out of range for {n} records")));
        }
        if train.intersection(&test).next().is_some() {
            return Err(Error::invalid("train and test indices overlap"));
        }
        let side_keys = |idx: &BTreeSet<usize>, key: &dyn Fn(usize) -> u64| -> BTreeSet<u64> {
            idx.iter().map(|&i| key(i)).collect()
        };
        let (what, key): (&str, Box<dyn Fn(usize) -> u64>) = match self.protocol {
            Protocol::Standard => ("scene", Box::new(|i| manifest.records[i].scene_id)),
            Protocol::KfoldEnv => ("environment", Box::new(|i| manifest.records[i].env_id)),
            Protocol::AlgoDisjoint => ("algorithm", Box::new(|i| manifest.records[i].algo_id as u64)),
        };
        let a = side_keys(&train, &*key);
        let b = side_keys(&test, &*key);
        if let Some(k) = a.intersection(&b).next() {
            return Err(Error::invalid(format!("{what} {k} appears in both train and test")));
        }
        Ok(())
    }
}

/// Scene-level random split with `round(test_fraction * scenes)` test scenes.
pub fn standard_split(manifest: &Manifest, test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} must lie in (0, 1)")));
    }
    let groups = manifest.scene_groups();
    let mut scenes: Vec<u64> = groups.keys().copied().collect();
    if scenes.len() < 2 {
        return Err(Error::invalid("standard split needs at least two scenes"));
    }
    scenes.shuffle(&mut rng_for(seed, stream::SPLIT, 0));
    let n_test = ((test_fraction * scenes.len() as f64).round() as usize).clamp(1, scenes.len() - 1);
    let test_scenes: BTreeSet<u64> = scenes[..n_test].iter().copied().collect();
    let (test, train) = partition(manifest, |r| test_scenes.contains(&r.scene_id));
    Ok(SplitPlan {
        protocol: Protocol::Standard,
        train_indices: train,
        test_indices: test,
        fold_id: None,
        test_algos: Vec::new(),
        seed,
    })
}

/// `k` folds over contiguous, size-balanced groups of sorted environment ids.
pub fn kfold_env_split(manifest: &Manifest, k: usize) -> Result<Vec<SplitPlan>> {
    let envs: Vec<u64> = manifest.env_ids().into_iter().collect();
    if k < 2 {
        return Err(Error::invalid(format!("k = {k}, need at least 2 folds")));
    }
    if envs.len() < k {
        return Err(Error::invalid(format!(
            "{} environments cannot fill {k} folds",
            envs.len()
        )));
    }
    Ok((0..k)
        .map(|fold| {
            let lo = fold * envs.len() / k;
            let hi = (fold + 1) * envs.len() / k;
            let held: BTreeSet<u64> = envs[lo..hi].iter().copied().collect();
            let (test, train) = partition(manifest, |r| held.contains(&r.env_id));
            SplitPlan {
                protocol: Protocol::KfoldEnv,
                train_indices: train,
                test_indices: test,
                fold_id: Some(fold),
                test_algos: Vec::new(),
                seed: 0,
            }
        })
        .collect())
}

/// Holds out `K - n_train_algos` algorithms chosen by `seed`.
pub fn algo_disjoint_split(manifest: &Manifest, n_train_algos: usize, seed: u64) -> Result<SplitPlan> {
    let mut algos: Vec<u32> = manifest.algo_ids().into_iter().collect();
    if n_train_algos == 0 || n_train_algos >= algos.len() {
        return Err(Error::invalid(format!(
            "n_train_algos = {n_train_algos} must lie in 1..{}",
            algos.len()
        )));
    }
    algos.shuffle(&mut rng_for(seed, stream::SPLIT, 1));
    let mut test_algos = algos[n_train_algos..].to_vec();
    test_algos.sort_unstable();
    let mut plan = algo_disjoint_with(manifest, &test_algos)?;
    plan.seed = seed;
    Ok(plan)
}

/// Holds out exactly the given algorithms.
pub fn algo_disjoint_with(manifest: &Manifest, test_algos: &[u32]) -> Result<SplitPlan> {
    let present = manifest.algo_ids();
    let held: BTreeSet<u32> = test_algos.iter().copied().collect();
    if held.is_empty() || held.len() >= present.len() {
        return Err(Error::invalid("held-out algorithms must be a non-empty proper subset"));
    }
    if let Some(a) = held.iter().find(|a| !present.contains(a)) {
        return Err(Error::invalid(format!("algorithm {a} not in manifest")));
    }
    let (test, train) = partition(manifest, |r| held.contains(&r.algo_id));
    Ok(SplitPlan {
        protocol: Protocol::AlgoDisjoint,
        train_indices: train,
        test_indices: test,
        fold_id: None,
        test_algos: held.into_iter().collect(),
        seed: 0,
    })
}

/// A seeded sample of `n` distinct held-out algorithm pairs out of `k`.
pub fn held_out_pairs(k: u32, n: usize, seed: u64) -> Vec<[u32; 2]> {
    let mut pairs: Vec<[u32; 2]> = (0..k).flat_map(|a| (a + 1..k).map(move |b| [a, b])).collect();
    pairs.shuffle(&mut rng_for(seed, stream::SPLIT, 2));
    pairs.truncate(n);
    pairs
}

fn partition(manifest: &Manifest, is_test: impl Fn(&crate::synthdata::SampleRecord) -> bool) -> (Vec<usize>, Vec<usize>) {
    let (test, train): (Vec<_>, Vec<_>) = (0..manifest.records.len()).partition(|&i| is_test(&manifest.records[i]));
    (test, train)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub n: usize,
}

/// One test-set prediction on the raw MOS scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub index: usize,
    pub scene_id: u64,
    pub algo_id: u32,
    pub mos: f64,
    pub predicted: f64,
}

pub fn report_from_scores(predicted: &[f64], truth: &[f64]) -> Result<EvalReport> {
    let c = metrics::all(ScorePair::new(predicted, truth)?)?;
    Ok(EvalReport {
        srcc: c.srcc,
        plcc: c.plcc,
        krcc: c.krcc,
        n: predicted.len(),
    })
}

/// Scores every test record from its enhanced image alone.
pub fn predict_split<P: QualityPredictor + Sync + ?Sized>(
    model: &P,
    data: &Dataset,
    plan: &SplitPlan,
) -> Result<Vec<PredictionRecord>> {
    if let Some(size) = model.image_size() {
        if size != data.image_size() {
            return Err(Error::Config(format!(
                "model expects {size}px images, dataset has {}px",
                data.image_size()
            )));
        }
    }
    plan.test_indices
        .par_iter()
        .map(|&i| {
            let r = data
                .manifest
                .records
                .get(i)
                .ok_or_else(|| Error::invalid(format!("test index {i} out of range")))?;
            let predicted = model.predict_mos(&data.images[i])?;
            Ok(PredictionRecord {
                index: i,
                scene_id: r.scene_id,
                algo_id: r.algo_id,
                mos: r.mos,
                predicted,
            })
        })
        .collect()
}

pub fn evaluate_predictions(preds: &[PredictionRecord]) -> Result<EvalReport> {
    let p: Vec<f64> = preds.iter().map(|r| r.predicted).collect();
    let t: Vec<f64> = preds.iter().map(|r| r.mos).collect();
    report_from_scores(&p, &t)
}

pub fn evaluate<P: QualityPredictor + Sync + ?Sized>(model: &P, data: &Dataset, plan: &SplitPlan) -> Result<EvalReport> {
    evaluate_predictions(&predict_split(model, data, plan)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub standard: EvalReport,
    pub unseen: EvalReport,
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
}

pub fn drop_report(standard: &EvalReport, unseen: &EvalReport) -> DropReport {
    DropReport {
        standard: *standard,
        unseen: *unseen,
        srcc: metrics::drop(standard.srcc, unseen.srcc),
        plcc: metrics::drop(standard.plcc, unseen.plcc),
        krcc: metrics::drop(standard.krcc, unseen.krcc),
    }
}

/// Element-wise mean of several reports (`n` is summed).
pub fn mean_report(reports: &[EvalReport]) -> Option<EvalReport> {
    if reports.is_empty() {
        return None;
    }
    let k = reports.len() as f64;
    Some(EvalReport {
        srcc: reports.iter().map(|r| r.srcc).sum::<f64>() / k,
        plcc: reports.iter().map(|r| r.plcc).sum::<f64>() / k,
        krcc: reports.iter().map(|r| r.krcc).sum::<f64>() / k,
        n: reports.iter().map(|r| r.n).sum(),
    })
}

/// Tab-separated table, rows = methods, columns = SRCC/PLCC/KRCC.
pub fn report_table(rows: &[(String, EvalReport)]) -> String {
    let mut out = String::from("Method\tSRCC\tPLCC\tKRCC\n");
    for (name, r) in rows {
        let _ = writeln!(out, "{name}\t{:.4}\t{:.4}\t{:.4}", r.srcc, r.plcc, r.krcc);
    }
    out
}

/// Tab-separated table with Standard/Unseen/Drop columns per metric.
pub fn drop_table(rows: &[(String, DropReport)]) -> String {
    let mut out = String::from("Method");
    for m in ["SRCC", "PLCC", "KRCC"] {
        for c in ["Standard", "Unseen", "Drop"] {
            let _ = write!(out, "\t{m} {c}");
        }
    }
    out.push('\n');
    for (name, d) in rows {
        let _ = writeln!(
            out,
            "{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            d.standard.srcc, d.unseen.srcc, d.srcc, d.standard.plcc, d.unseen.plcc, d.plcc, d.standard.krcc,
            d.unseen.krcc, d.krcc
        );
    }
    out
}

/// Mean absolute prediction error per algorithm.
pub fn per_algorithm_error(preds: &[PredictionRecord]) -> BTreeMap<u32, (f64, f64, usize)> {
    let mut by: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for p in preds {
        by.entry(p.algo_id).or_default().push(p.predicted - p.mos);
    }
    by.into_iter()
        .map(|(a, errs)| {
            let n = errs.len() as f64;
            let mean = errs.iter().map(|e| e.abs()).sum::<f64>() / n;
            let sd = (errs.iter().map(|e| (e.abs() - mean).powi(2)).sum::<f64>() / n).sqrt();
            (a, (mean, sd, errs.len()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::synthdata::SampleRecord;

    fn grid(scenes: u64, k: u32) -> Manifest {
        let records = (0..scenes)
            .flat_map(|s| {
                (0..k).map(move |a| SampleRecord {
                    scene_id: s,
                    env_id: s / 10,
                    algo_id: a,
                    enhanced_path: format!("images/s{s}_a{a}.png").into(),
                    mos: ((s * 7 + a as u64 * 13) % 100) as f64,
                })
            })
            .collect();
        Manifest::new(records, 0, 16).unwrap()
    }

    #[test]
    fn standard_counts_and_leakage() {
        let m = grid(290, 10);
        let plan = standard_split(&m, 0.2, 3).unwrap();
        assert_eq!(plan.test_indices.len(), 580);
        plan.validate(&m).unwrap();
        assert_eq!(plan, standard_split(&m, 0.2, 3).unwrap());
        assert_ne!(plan, standard_split(&m, 0.2, 4).unwrap());
        for bad in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(standard_split(&m, bad, 0), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn kfold_partitions_environments() {
        let m = grid(100, 4);
        let folds = kfold_env_split(&m, 5).unwrap();
        let mut seen = vec![0; m.records.len()];
        for f in &folds {
            f.validate(&m).unwrap();
            let envs: BTreeSet<u64> = f.test_indices.iter().map(|&i| m.records[i].env_id).collect();
            assert_eq!(envs.len(), 2);
            f.test_indices.iter().for_each(|&i| seen[i] += 1);
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(kfold_env_split(&m, 11).is_err());
        assert!(kfold_env_split(&m, 1).is_err());
    }

    #[test]
    fn algo_disjoint_counts() {
        let m = grid(290, 10);
        let plan = algo_disjoint_split(&m, 8, 0).unwrap();
        plan.validate(&m).unwrap();
        assert_eq!(plan.test_algos.len(), 2);
        assert_eq!((plan.train_indices.len(), plan.test_indices.len()), (2320, 580));
        assert!(algo_disjoint_split(&m, 10, 0).is_err());
        let pairs = held_out_pairs(10, 10, 1);
        assert_eq!(pairs.len(), 10);
        assert_eq!(held_out_pairs(10, 100, 1).len(), 45);
    }

    struct Oracle(Vec<f64>);
    impl QualityPredictor for Oracle {
        fn predict_mos(&self, image: &Image) -> Result<f64> {
            Ok(self.0[image.data()[0] as usize])
        }
    }

    fn tagged_dataset(m: Manifest) -> Dataset {
        let images = (0..m.records.len()).map(|i| Image::filled(2, 2, i as f64)).collect();
        Dataset { manifest: m, images }
    }

    #[test]
    fn oracle_and_constant_predictors() {
        let data = tagged_dataset(grid(20, 4));
        let plan = standard_split(&data.manifest, 0.25, 0).unwrap();
        let truth = Oracle(data.mos());
        let r = evaluate(&truth, &data, &plan).unwrap();
        assert_eq!((r.srcc, r.plcc, r.krcc), (1.0, 1.0, 1.0));
        let constant = Oracle(vec![50.0; data.images.len()]);
        assert!(matches!(evaluate(&constant, &data, &plan), Err(Error::Degenerate(_))));
    }

    #[test]
    fn drops_match_table() {
        let s = EvalReport { srcc: 0.8726, plcc: 0.8913, krcc: 0.7, n: 1 };
        let u = EvalReport { srcc: 0.8622, plcc: 0.8804, krcc: 0.7, n: 1 };
        let d = drop_report(&s, &u);
        assert!((d.srcc - 0.0104).abs() < 1e-12);
        assert!((d.plcc - 0.0109).abs() < 1e-12);
        assert_eq!(drop_report(&s, &s).srcc, 0.0);
        let t = drop_table(&[("ours".into(), d)]);
        assert!(t.starts_with("Method\tSRCC Standard\tSRCC Unseen\tSRCC Drop\t"));
    }
}
