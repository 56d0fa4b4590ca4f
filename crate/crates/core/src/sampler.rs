//! Mini-batch planning for preference pretraining.
//!
//! `ContentControlled` batches are unions of scene groups: each group holds
//! several enhancements of one scene under distinct algorithms, so every
//! batch carries same-content, different-style hard negatives. Group
//! algorithms follow a rotating window over a shuffled algorithm order, which
//! spreads each algorithm across several groups and keeps positive sets
//! non-empty.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::synthdata::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    AlgoBalanced,
    ContentControlled,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::Random,
        Strategy::AlgoBalanced,
        Strategy::ContentControlled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::AlgoBalanced => "algo_balanced",
            Strategy::ContentControlled => "content_controlled",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown sampling strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub scenes_per_batch: usize,
    pub algos_per_scene: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            scenes_per_batch: 8,
            algos_per_scene: 4,
            seed: 0,
            strategy: Strategy::ContentControlled,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks the configuration against a manifest before any batch is
    /// planned.
    pub fn check_feasible(&self, manifest: &Manifest) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid(format!("batch size {} < 2", self.batch_size)));
        }
        if self.strategy != Strategy::ContentControlled {
            if manifest.len() < self.batch_size {
                return Err(Error::invalid(format!(
                    "{} records cannot fill one batch of {}",
                    manifest.len(),
                    self.batch_size
                )));
            }
            return Ok(());
        }
        if self.algos_per_scene < 2 {
            return Err(Error::invalid("content-controlled sampling needs algos_per_scene >= 2"));
        }
        if self.scenes_per_batch * self.algos_per_scene != self.batch_size {
            return Err(Error::invalid(format!(
                "batch size {} is not scenes_per_batch ({}) x algos_per_scene ({})",
                self.batch_size, self.scenes_per_batch, self.algos_per_scene
            )));
        }
        let groups = manifest.scene_groups();
        if let Some((scene, idx)) = groups.iter().find(|(_, v)| v.len() < self.algos_per_scene) {
            return Err(Error::invalid(format!(
                "scene {scene} has {} enhanced versions, content-controlled sampling needs {}",
                idx.len(),
                self.algos_per_scene
            )));
        }
        if groups.len() < self.scenes_per_batch {
            return Err(Error::invalid(format!(
                "{} scenes cannot fill {} scene groups per batch",
                groups.len(),
                self.scenes_per_batch
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

/// Plans one epoch. Every record appears at most once; a trailing partial
/// batch is dropped.
pub fn epoch_batches(manifest: &Manifest, cfg: &SamplerConfig) -> Result<Vec<Batch>> {
    cfg.check_feasible(manifest)?;
    let mut rng = rng_for(cfg.seed, stream::SAMPLER, cfg.strategy as u64);
    Ok(match cfg.strategy {
        Strategy::Random => random_batches(manifest, cfg, &mut rng),
        Strategy::AlgoBalanced => balanced_batches(manifest, cfg, &mut rng),
        Strategy::ContentControlled => content_batches(manifest, cfg, &mut rng),
    })
}

fn random_batches(manifest: &Manifest, cfg: &SamplerConfig, rng: &mut impl Rng) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.shuffle(rng);
    order
        .chunks_exact(cfg.batch_size)
        .map(|c| Batch { indices: c.to_vec() })
        .collect()
}

fn balanced_batches(manifest: &Manifest, cfg: &SamplerConfig, rng: &mut impl Rng) -> Vec<Batch> {
    let mut queues: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        queues.entry(r.algo_id).or_default().push(i);
    }
    for q in queues.values_mut() {
        q.shuffle(rng);
    }
    let mut algos: Vec<u32> = queues.keys().copied().collect();
    algos.shuffle(rng);
    let k = algos.len();
    let base = cfg.batch_size / k;
    let extra = cfg.batch_size % k;

    let mut batches = Vec::new();
    loop {
        // the `extra` algorithms with the longest queues get one more slot;
        // ties resolved by the shuffled order
        let mut by_len = algos.clone();
        by_len.sort_by_key(|a| std::cmp::Reverse(queues[a].len()));
        let bonus: HashSet<u32> = by_len[..extra].iter().copied().collect();
        let feasible = algos
            .iter()
            .all(|a| queues[a].len() >= base + bonus.contains(a) as usize);
        if !feasible {
            break;
        }
        let mut indices = Vec::with_capacity(cfg.batch_size);
        for a in &algos {
            let take = base + bonus.contains(a) as usize;
            let q = queues.get_mut(a).expect("known algorithm");
            indices.extend(q.drain(q.len() - take..));
        }
        indices.shuffle(rng);
        batches.push(Batch { indices });
    }
    batches
}

fn content_batches(manifest: &Manifest, cfg: &SamplerConfig, rng: &mut impl Rng) -> Vec<Batch> {
    let mut sigma: Vec<u32> = manifest.algo_ids().into_iter().collect();
    sigma.shuffle(rng);
    let k = sigma.len();
    let aps = cfg.algos_per_scene;

    // per scene: algo -> record index still unused this epoch
    let mut scenes: Vec<BTreeMap<u32, usize>> = manifest
        .scene_groups()
        .into_values()
        .map(|idx| idx.into_iter().map(|i| (manifest.records[i].algo_id, i)).collect())
        .collect();
    scenes.shuffle(rng);

    let mut cursor = rng.gen_range(0..k);
    let mut batches = Vec::new();
    'epoch: loop {
        let mut indices = Vec::with_capacity(cfg.batch_size);
        let mut used = vec![false; scenes.len()];
        for _ in 0..cfg.scenes_per_batch {
            let window: Vec<u32> = (0..aps).map(|j| sigma[(cursor + j) % k]).collect();
            cursor = (cursor + aps) % k;
            let best = scenes
                .iter()
                .enumerate()
                .filter(|(s, rem)| !used[*s] && rem.len() >= aps)
                .map(|(s, rem)| {
                    let overlap = window.iter().filter(|a| rem.contains_key(a)).count();
                    (s, (overlap, rem.len()))
                })
                // max_by_key keeps the last maximum; reverse to keep the first
                .rev()
                .max_by_key(|&(_, key)| key)
                .map(|(s, _)| s);
            let Some(s) = best else {
                break 'epoch;
            };
            used[s] = true;
            let rem = &mut scenes[s];
            let mut chosen: Vec<u32> = window.iter().copied().filter(|a| rem.contains_key(a)).collect();
            if chosen.len() < aps {
                let mut others: Vec<u32> = rem.keys().copied().filter(|a| !chosen.contains(a)).collect();
                others.shuffle(rng);
                chosen.extend(others.into_iter().take(aps - chosen.len()));
            }
            for a in chosen {
                indices.push(rem.remove(&a).expect("chosen from remaining"));
            }
        }
        batches.push(Batch { indices });
    }
    batches
}

/// Per-batch structure summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDiagnostics {
    pub size: usize,
    pub distinct_scenes: usize,
    pub distinct_algorithms: usize,
    /// Unordered pairs sharing a scene but not an algorithm.
    pub hard_negative_pairs: usize,
    /// |P(i)| for each batch position.
    pub positive_set_sizes: Vec<usize>,
    /// Whether the batch decomposes into `scenes_per_batch` groups of
    /// `algos_per_scene` distinct algorithms from a single scene.
    pub scene_groups_valid: bool,
}

impl BatchDiagnostics {
    pub fn empty_positive_sets(&self) -> usize {
        self.positive_set_sizes.iter().filter(|&&s| s == 0).count()
    }
}

pub fn verify_batch(batch: &Batch, manifest: &Manifest, cfg: &SamplerConfig) -> BatchDiagnostics {
    let recs: Vec<_> = batch.indices.iter().map(|&i| &manifest.records[i]).collect();
    let mut hard = 0;
    for i in 0..recs.len() {
        for j in i + 1..recs.len() {
            if recs[i].scene_id == recs[j].scene_id && recs[i].algo_id != recs[j].algo_id {
                hard += 1;
            }
        }
    }
    let positive_set_sizes = recs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            recs.iter()
                .enumerate()
                .filter(|(j, o)| *j != i && o.algo_id == r.algo_id)
                .count()
        })
        .collect();
    let scene_groups_valid = batch.indices.len() == cfg.scenes_per_batch * cfg.algos_per_scene
        && batch
            .indices
            .chunks(cfg.algos_per_scene.max(1))
            .all(|group| {
                let scenes: BTreeSet<u64> = group.iter().map(|&i| manifest.records[i].scene_id).collect();
                let algos: BTreeSet<u32> = group.iter().map(|&i| manifest.records[i].algo_id).collect();
                scenes.len() == 1 && algos.len() == cfg.algos_per_scene
            });
    BatchDiagnostics {
        size: recs.len(),
        distinct_scenes: recs.iter().map(|r| r.scene_id).collect::<BTreeSet<_>>().len(),
        distinct_algorithms: recs.iter().map(|r| r.algo_id).collect::<BTreeSet<_>>().len(),
        hard_negative_pairs: hard,
        positive_set_sizes,
        scene_groups_valid,
    }
}

/// Fraction of batch positions with an empty positive set over an epoch.
pub fn empty_positive_rate(batches: &[Batch], manifest: &Manifest, cfg: &SamplerConfig) -> f64 {
    let (mut empty, mut total) = (0usize, 0usize);
    for b in batches {
        let d = verify_batch(b, manifest, cfg);
        empty += d.empty_positive_sets();
        total += d.size;
    }
    if total == 0 {
        0.0
    } else {
        empty as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{Manifest, SampleRecord};
    use std::path::PathBuf;

    pub(crate) fn grid_manifest(scenes: u64, k: u32) -> Manifest {
        let recs = (0..scenes)
            .flat_map(|s| {
                (0..k).map(move |a| SampleRecord {
                    scene_id: s,
                    env_id: s / 10,
                    algo_id: a,
                    enhanced_path: PathBuf::from(format!("{s}_{a}.png")),
                    mos: 50.0,
                })
            })
            .collect();
        Manifest::new(recs, 0, 64).unwrap()
    }

    fn cfg(strategy: Strategy) -> SamplerConfig {
        SamplerConfig {
            strategy,
            seed: 5,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn content_controlled_structure() {
        let m = grid_manifest(100, 10);
        let c = cfg(Strategy::ContentControlled);
        let batches = epoch_batches(&m, &c).unwrap();
        assert!(!batches.is_empty());
        for b in &batches {
            assert_eq!(b.size(), 32);
            let d = verify_batch(b, &m, &c);
            assert!(d.scene_groups_valid);
            assert_eq!(d.distinct_scenes, 8);
            assert_eq!(d.hard_negative_pairs, 8 * 6);
            assert!(d.distinct_algorithms >= 8);
        }
    }

    #[test]
    fn records_used_at_most_once() {
        let m = grid_manifest(40, 10);
        for s in Strategy::ALL {
            let batches = epoch_batches(&m, &cfg(s)).unwrap();
            let mut seen = HashSet::new();
            for b in &batches {
                for &i in &b.indices {
                    assert!(seen.insert(i), "{s:?} repeats {i}");
                }
            }
        }
    }

    #[test]
    fn random_and_balanced_drop_less_than_a_batch() {
        let m = grid_manifest(100, 10);
        for s in [Strategy::Random, Strategy::AlgoBalanced] {
            let used: usize = epoch_batches(&m, &cfg(s)).unwrap().iter().map(Batch::size).sum();
            assert!(m.len() - used < 32, "{s:?} dropped {}", m.len() - used);
        }
    }

    #[test]
    fn balanced_histogram_within_one() {
        let m = grid_manifest(100, 10);
        let c = cfg(Strategy::AlgoBalanced);
        for b in epoch_batches(&m, &c).unwrap() {
            let mut hist = BTreeMap::new();
            for &i in &b.indices {
                *hist.entry(m.records[i].algo_id).or_insert(0usize) += 1;
            }
            assert_eq!(hist.len(), 10);
            assert!(hist.values().all(|&n| n == 3 || n == 4), "{hist:?}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let m = grid_manifest(30, 10);
        for s in Strategy::ALL {
            assert_eq!(epoch_batches(&m, &cfg(s)).unwrap(), epoch_batches(&m, &cfg(s)).unwrap());
        }
        let a = epoch_batches(&m, &cfg(Strategy::Random)).unwrap();
        let b = epoch_batches(&m, &cfg(Strategy::Random).with_seed(6)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let m = grid_manifest(20, 10);
        let mut c = cfg(Strategy::ContentControlled);
        c.batch_size = 30;
        assert!(matches!(epoch_batches(&m, &c), Err(Error::InvalidArgument(_))));
        let mut c = cfg(Strategy::ContentControlled);
        c.algos_per_scene = 1;
        c.scenes_per_batch = 32;
        assert!(epoch_batches(&m, &c).is_err());
        let thin = grid_manifest(20, 3);
        assert!(epoch_batches(&thin, &cfg(Strategy::ContentControlled)).is_err());
    }

    #[test]
    fn positives_rarely_empty() {
        let m = grid_manifest(100, 10);
        let c = cfg(Strategy::ContentControlled);
        let b = epoch_batches(&m, &c).unwrap();
        assert!(empty_positive_rate(&b, &m, &c) < 0.05);
    }
}
