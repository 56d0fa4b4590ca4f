//! Resolved run settings: defaults, then a flat `key = value` file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use eiqa_core::evalproto::Protocol;
use eiqa_core::sampler::Strategy;
use eiqa_core::{Error, Result, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub scenes: usize,
    pub algos: usize,
    pub size: usize,
    pub seed: u64,
    pub protocol: Protocol,
    pub test_fraction: f64,
    pub train_algos: usize,
    pub folds: usize,
    pub fold: usize,
    pub seeds: usize,
    pub train: TrainConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            scenes: 100,
            algos: 10,
            size: 64,
            seed: 0,
            protocol: Protocol::Standard,
            test_fraction: 0.2,
            train_algos: 8,
            folds: 5,
            fold: 0,
            seeds: 5,
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_enum<T: FromStr<Err = Error>>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Settings {
    /// Every recognised key, in file order.
    pub const KEYS: &'static [&'static str] = &[
        "scenes", "algos", "size", "seed", "protocol", "test_fraction", "train_algos", "folds", "fold", "seeds",
        "lr", "batch_size", "epochs_stage1", "epochs_stage2", "crop_size", "rotation", "hflip", "variant",
        "stage1_sampler", "stage2_sampler", "scenes_per_batch", "algos_per_scene", "temperature", "huber_delta",
        "lambda_plcc", "pref_dim", "quality_dim", "pref_widths", "quality_widths", "proj_hidden",
        "regressor_hidden", "strict_determinism",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "scenes" => self.scenes = parse(key, value)?,
            "algos" => self.algos = parse(key, value)?,
            "size" => self.size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "protocol" => self.protocol = parse_enum(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "train_algos" => self.train_algos = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "fold" => self.fold = parse(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs_stage1" => t.epochs_stage1 = parse(key, value)?,
            "epochs_stage2" => t.epochs_stage2 = parse(key, value)?,
            "crop_size" => t.crop_size = parse(key, value)?,
            "rotation" => t.rotation = parse_bool(key, value)?,
            "hflip" => t.hflip = parse_bool(key, value)?,
            "variant" => t.variant = parse_enum::<Variant>(key, value)?,
            "stage1_sampler" => t.stage1_sampler = parse_enum::<Strategy>(key, value)?,
            "stage2_sampler" => t.stage2_sampler = parse_enum::<Strategy>(key, value)?,
            "scenes_per_batch" => t.scenes_per_batch = parse(key, value)?,
            "algos_per_scene" => t.algos_per_scene = parse(key, value)?,
            "temperature" => t.temperature = parse(key, value)?,
            "huber_delta" => t.huber_delta = parse(key, value)?,
            "lambda_plcc" => t.lambda_plcc = parse(key, value)?,
            "pref_dim" => t.pref_dim = parse(key, value)?,
            "quality_dim" => t.quality_dim = parse(key, value)?,
            "pref_widths" => t.pref_widths = parse_list(key, value)?,
            "quality_widths" => t.quality_widths = parse_list(key, value)?,
            "proj_hidden" => t.proj_hidden = parse(key, value)?,
            "regressor_hidden" => t.regressor_hidden = parse(key, value)?,
            "strict_determinism" => t.strict_determinism = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        let t = &self.train;
        match key {
            "scenes" => self.scenes.to_string(),
            "algos" => self.algos.to_string(),
            "size" => self.size.to_string(),
            "seed" => self.seed.to_string(),
            "protocol" => self.protocol.name().into(),
            "test_fraction" => self.test_fraction.to_string(),
            "train_algos" => self.train_algos.to_string(),
            "folds" => self.folds.to_string(),
            "fold" => self.fold.to_string(),
            "seeds" => self.seeds.to_string(),
            "lr" => t.lr.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "epochs_stage1" => t.epochs_stage1.to_string(),
            "epochs_stage2" => t.epochs_stage2.to_string(),
            "crop_size" => t.crop_size.to_string(),
            "rotation" => t.rotation.to_string(),
            "hflip" => t.hflip.to_string(),
            "variant" => t.variant.name().into(),
            "stage1_sampler" => t.stage1_sampler.name().into(),
            "stage2_sampler" => t.stage2_sampler.name().into(),
            "scenes_per_batch" => t.scenes_per_batch.to_string(),
            "algos_per_scene" => t.algos_per_scene.to_string(),
            "temperature" => t.temperature.to_string(),
            "huber_delta" => t.huber_delta.to_string(),
            "lambda_plcc" => t.lambda_plcc.to_string(),
            "pref_dim" => t.pref_dim.to_string(),
            "quality_dim" => t.quality_dim.to_string(),
            "pref_widths" => join(&t.pref_widths),
            "quality_widths" => join(&t.quality_widths),
            "proj_hidden" => t.proj_hidden.to_string(),
            "regressor_hidden" => t.regressor_hidden.to_string(),
            "strict_determinism" => t.strict_determinism.to_string(),
            _ => String::new(),
        }
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text)
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        Self::KEYS.iter().map(|k| (k.to_string(), self.get(k))).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k));
        }
        out
    }

    /// Training configuration with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_covers_every_key() {
        let mut s = Settings::default();
        s.apply_text("lr = 0.001\npref_widths = 4,8\nvariant = joint # comment\n").unwrap();
        assert_eq!(s.train.lr, 0.001);
        assert_eq!(s.train.pref_widths, vec![4, 8]);
        let mut back = Settings::default();
        back.apply_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_lines_are_reported() {
        let mut s = Settings::default();
        assert!(matches!(s.apply_text("lr 3"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(s.apply_text("\nbogus = 1"), Err(Error::Parse { line: 2, .. })));
        assert!(s.apply_text("variant = nope").is_err());
    }
}
