//! Line-oriented dataset index.
//!
//! ```text
//! #eiqa-manifest v1 seed=<int> k=<int> size=<int>
//! scene_id<TAB>env_id<TAB>algo_id<TAB>relative_path<TAB>mos
//! ```
//!
//! MOS is written with four decimals; in-memory manifests store the rounded
//! value so save/load is an identity.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const HEADER_TAG: &str = "#eiqa-manifest v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub scene_id: u64,
    pub env_id: u64,
    pub algo_id: u32,
    /// Relative to the directory holding the manifest.
    pub enhanced_path: PathBuf,
    pub mos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
    pub k_algorithms: usize,
    pub generation_seed: u64,
    pub image_size: usize,
}

/// Rounds to the four decimals used on disk.
pub fn round_mos(mos: f64) -> f64 {
    format!("{mos:.4}").parse().expect("formatted float parses")
}

impl Manifest {
    /// Builds a manifest and checks its invariants; `k_algorithms` is taken
    /// from the records.
    pub fn new(records: Vec<SampleRecord>, generation_seed: u64, image_size: usize) -> Result<Self> {
        let k = records.iter().map(|r| r.algo_id).collect::<BTreeSet<_>>().len();
        let m = Manifest {
            records,
            k_algorithms: k,
            generation_seed,
            image_size,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::invalid("manifest has no records"));
        }
        let mut seen = HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if !(0.0..=100.0).contains(&r.mos) {
                return Err(Error::Field {
                    line: i + 2,
                    field: "mos",
                    message: format!("{} outside [0, 100]", r.mos),
                });
            }
            if !seen.insert((r.scene_id, r.algo_id)) {
                return Err(Error::invalid(format!(
                    "duplicate (scene {}, algo {}) record",
                    r.scene_id, r.algo_id
                )));
            }
        }
        let distinct = self.algo_ids().len();
        if distinct != self.k_algorithms {
            return Err(Error::invalid(format!(
                "header declares k={} but records use {distinct} algorithms",
                self.k_algorithms
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn algo_ids(&self) -> BTreeSet<u32> {
        self.records.iter().map(|r| r.algo_id).collect()
    }

    pub fn env_ids(&self) -> BTreeSet<u64> {
        self.records.iter().map(|r| r.env_id).collect()
    }

    /// Record indices grouped by scene, in ascending scene order.
    pub fn scene_groups(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            groups.entry(r.scene_id).or_default().push(i);
        }
        groups
    }

    /// A manifest over the given record indices (in that order).
    pub fn subset(&self, indices: &[usize]) -> Result<Manifest> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("record index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Manifest::new(records, self.generation_seed, self.image_size)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{HEADER_TAG} seed={} k={} size={}\n",
            self.generation_seed, self.k_algorithms, self.image_size
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.4}",
                r.scene_id,
                r.env_id,
                r.algo_id,
                r.enhanced_path.display(),
                r.mos
            );
        }
        out
    }

    /// Parses manifest text without touching the filesystem.
    pub fn parse(text: &str) -> Result<Manifest> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty manifest".into(),
        })?;
        let rest = header.strip_prefix(HEADER_TAG).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("expected header starting with `{HEADER_TAG}`"),
        })?;
        let mut seed = None;
        let mut k = None;
        let mut size = None;
        for kv in rest.split_whitespace() {
            let (key, value) = kv.split_once('=').ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("malformed header field `{kv}`"),
            })?;
            let parsed: u64 = value.parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("header field `{key}` is not an integer"),
            })?;
            match key {
                "seed" => seed = Some(parsed),
                "k" => k = Some(parsed as usize),
                "size" => size = Some(parsed as usize),
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("unknown header field `{key}`"),
                    })
                }
            }
        }
        let missing = |name: &str| Error::Parse {
            line: 1,
            message: format!("header lacks `{name}`"),
        };
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let k = k.ok_or_else(|| missing("k"))?;
        let size = size.ok_or_else(|| missing("size"))?;

        let mut records = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 5 tab-separated fields, found {}", fields.len()),
                });
            }
            fn int<T: std::str::FromStr>(line: usize, field: &'static str, s: &str) -> Result<T> {
                s.parse().map_err(|_| Error::Field {
                    line,
                    field,
                    message: format!("`{s}` is not a non-negative integer"),
                })
            }
            let mos: f64 = fields[4].parse().map_err(|_| Error::Field {
                line: line_no,
                field: "mos",
                message: format!("`{}` is not a number", fields[4]),
            })?;
            if !(0.0..=100.0).contains(&mos) {
                return Err(Error::Field {
                    line: line_no,
                    field: "mos",
                    message: format!("{mos} outside [0, 100]"),
                });
            }
            if fields[3].is_empty() {
                return Err(Error::Field {
                    line: line_no,
                    field: "relative_path",
                    message: "empty path".into(),
                });
            }
            records.push(SampleRecord {
                scene_id: int(line_no, "scene_id", fields[0])?,
                env_id: int(line_no, "env_id", fields[1])?,
                algo_id: int(line_no, "algo_id", fields[2])?,
                enhanced_path: PathBuf::from(fields[3]),
                mos,
            });
        }
        let m = Manifest {
            records,
            k_algorithms: k,
            generation_seed: seed,
            image_size: size,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Loads and validates a manifest, including that every referenced image
    /// exists next to it.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m = Manifest::parse(&text)?;
        let root = path.parent().unwrap_or(Path::new("."));
        let missing: Vec<PathBuf> = m
            .records
            .iter()
            .map(|r| root.join(&r.enhanced_path))
            .filter(|p| !p.is_file())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingImages(missing));
        }
        Ok(m)
    }
}

pub fn save_manifest(m: &Manifest, path: &Path) -> Result<()> {
    m.save(path)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path)
}
