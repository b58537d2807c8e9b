//! Pipeline configuration: `key = value` files with command-line overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may also be
//! given as a same-named flag (`--seed 7`), which wins over the file.
//!
//! | key                   | default        | meaning |
//! |-----------------------|----------------|---------|
//! | seed                  | (required)     | master seed |
//! | input_dir             | `input`        | clean `*.ndt` samples |
//! | output_dir            | `out`          | generated files |
//! | external_dir          | unset          | external `*.ndt` images for inter-dataset blending |
//! | tasks                 | all five       | comma-separated task names, paired with folds in order |
//! | folds                 | task count     | data folds F, one per task |
//! | train_tasks           | 1              | tasks per training split T |
//! | split_mode            | `paired`       | `paired` or `full_product` |
//! | sigma                 | 0.2            | labeller width |
//! | foreground_threshold  | 0.0            | foreground is intensity above this |
//! | zscore                | false          | z-score each sample over its foreground on load |
//! | mask_size_min/max     | 0.04 / 0.28    | semi-axis range, fraction of axis extent |
//! | max_attempts          | 100            | placement rejection budget |
//! | max_anomalies         | 4              | cap on anomalies per image |
//! | exponent_min/max      | 1.0 / 4.0      | sink/source exponent range (min, max] |
//! | magnitude_min/max     | 0.25 / 1.0     | intensity change, multiples of the foreground IQR |
//! | ramp_min/max          | 0.1 / 0.5      | ramp distance, fraction of smallest semi-axis |
//! | reducer               | `mean`         | slice/sample score reducer, `mean` or `max` |
//! | slice_axis            | 0              | axis for slice-level evaluation |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mask::PlacementConfig;
use crate::metrics::Reducer;
use crate::tasks::{TaskConfig, TaskKind};

pub const KEYS: &[&str] = &[
    "seed",
    "input_dir",
    "output_dir",
    "external_dir",
    "tasks",
    "folds",
    "train_tasks",
    "split_mode",
    "sigma",
    "foreground_threshold",
    "zscore",
    "mask_size_min",
    "mask_size_max",
    "max_attempts",
    "max_anomalies",
    "exponent_min",
    "exponent_max",
    "magnitude_min",
    "magnitude_max",
    "ramp_min",
    "ramp_max",
    "reducer",
    "slice_axis",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Paired,
    FullProduct,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub external_dir: Option<PathBuf>,
    pub tasks: Vec<TaskKind>,
    pub folds: usize,
    pub train_tasks: usize,
    pub split_mode: SplitMode,
    pub zscore: bool,
    pub task: TaskConfig,
    pub reducer: Reducer,
    pub slice_axis: usize,
}

/// Parse `key = value` lines.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key {key:?}", n + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
        }
    }
    Ok(map)
}

fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse {key} = {v:?}"))),
    }
}

impl PipelineConfig {
    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        let seed = map
            .get("seed")
            .ok_or_else(|| Error::Config("seed is mandatory".into()))?
            .parse()
            .map_err(|_| Error::Config("seed must be a non-negative 64-bit integer".into()))?;
        let tasks = match map.get("tasks") {
            None => TaskKind::ALL.to_vec(),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<TaskKind>().map_err(|e| Error::Config(e.to_string())))
                .collect::<Result<Vec<_>>>()?,
        };
        let split_mode = match map.get("split_mode").map(String::as_str) {
            None | Some("paired") => SplitMode::Paired,
            Some("full_product") => SplitMode::FullProduct,
            Some(other) => return Err(Error::Config(format!("unknown split_mode {other:?}"))),
        };
        let reducer = match map.get("reducer") {
            None => Reducer::Mean,
            Some(v) => v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
        };
        let defaults = TaskConfig::default();
        let task = TaskConfig {
            max_anomalies: get(map, "max_anomalies", defaults.max_anomalies)?,
            force_count: None,
            placement: PlacementConfig {
                size_range: (
                    get(map, "mask_size_min", defaults.placement.size_range.0)?,
                    get(map, "mask_size_max", defaults.placement.size_range.1)?,
                ),
                max_attempts: get(map, "max_attempts", defaults.placement.max_attempts)?,
                min_overlap: defaults.placement.min_overlap,
            },
            foreground_threshold: get(map, "foreground_threshold", defaults.foreground_threshold)?,
            exponent_range: (
                get(map, "exponent_min", defaults.exponent_range.0)?,
                get(map, "exponent_max", defaults.exponent_range.1)?,
            ),
            magnitude_range: (
                get(map, "magnitude_min", defaults.magnitude_range.0)?,
                get(map, "magnitude_max", defaults.magnitude_range.1)?,
            ),
            ramp_range: (
                get(map, "ramp_min", defaults.ramp_range.0)?,
                get(map, "ramp_max", defaults.ramp_range.1)?,
            ),
            sigma: get(map, "sigma", defaults.sigma)?,
        };
        let folds = get(map, "folds", tasks.len())?;
        let cfg = Self {
            seed,
            input_dir: get(map, "input_dir", PathBuf::from("input"))?,
            output_dir: get(map, "output_dir", PathBuf::from("out"))?,
            external_dir: map.get("external_dir").map(PathBuf::from),
            tasks,
            folds,
            train_tasks: get(map, "train_tasks", 1)?,
            split_mode,
            zscore: get(map, "zscore", false)?,
            task,
            reducer,
            slice_axis: get(map, "slice_axis", 0)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file (if any) and apply overrides on top.
    pub fn load(path: Option<&Path>, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut map = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                parse_pairs(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_pairs(&map)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tasks.len();
        if n < 2 {
            return Err(Error::Config("need at least two tasks".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("need at least two folds".into()));
        }
        if self.folds != n {
            return Err(Error::Config(format!(
                "each task is paired with one fold ({n} tasks, {} folds)",
                self.folds
            )));
        }
        if self.train_tasks == 0 {
            return Err(Error::Config("train_tasks = 0 leaves no training tasks".into()));
        }
        if self.train_tasks >= n {
            return Err(Error::Config(format!(
                "train_tasks = {} leaves no validation tasks",
                self.train_tasks
            )));
        }
        self.task.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_defaults() {
        let map = parse_pairs("# comment\nseed = 42\n\nsigma = 0.3\ntasks = sink, source\nfolds=2\n").unwrap();
        let cfg = PipelineConfig::from_pairs(&map).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.task.sigma, 0.3);
        assert_eq!(cfg.tasks, vec![TaskKind::Sink, TaskKind::Source]);
        assert_eq!(cfg.task.placement.size_range, (0.04, 0.28));
        assert_eq!(cfg.reducer, Reducer::Mean);
    }

    #[test]
    fn default_sigma_is_point_two() {
        let map = parse_pairs("seed = 1").unwrap();
        assert_eq!(PipelineConfig::from_pairs(&map).unwrap().task.sigma, 0.2);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = PipelineConfig::from_pairs(&BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_pairs("seed").is_err());
        assert!(parse_pairs("colour = red").is_err());
        assert!(parse_pairs("seed = 1\nseed = 2").is_err());
        for bad in ["train_tasks = 5", "train_tasks = 0", "sigma = 0", "folds = 4", "reducer = median"] {
            let map = parse_pairs(&format!("seed = 1\n{bad}")).unwrap();
            assert!(PipelineConfig::from_pairs(&map).is_err(), "{bad}");
        }
    }

    #[test]
    fn no_validation_tasks_message() {
        let map = parse_pairs("seed = 1\ntrain_tasks = 5").unwrap();
        let msg = PipelineConfig::from_pairs(&map).unwrap_err().to_string();
        assert!(msg.contains("no validation tasks"), "{msg}");
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "seed = 1\nfolds = 5\n").unwrap();
        let mut o = BTreeMap::new();
        o.insert("seed".to_string(), "9".to_string());
        assert_eq!(PipelineConfig::load(Some(&path), &o).unwrap().seed, 9);
    }
}
