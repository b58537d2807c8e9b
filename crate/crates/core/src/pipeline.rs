//! File-based batch pipeline behind the `synthanom` binary.
//!
//! Layout under `output_dir`:
//!
//! ```text
//! manifest.json
//! iter_<id>/<role>/images/<sample>.ndt
//! iter_<id>/<role>/labels/<sample>.ndt
//! iter_<id>/<role>/records.jsonl
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SplitMode};
use crate::crossval::{assign_folds, emit_manifest, enumerate_full_product, enumerate_splits, Manifest, TaskFoldAssignment};
use crate::error::{Error, Result};
use crate::io::{list_ndt, read_ndt, sample_id, write_atomic, write_ndt, NDT_EXTENSION};
use crate::labelling::label_map;
use crate::mask::{foreground_of, MaskSpec};
use crate::metrics::{auroc, average_precision, reduce_sample, reduce_to_slices, Reducer, ScoredSet};
use crate::rng::{sample_stream_id, stable_hash, RngStream};
use crate::tasks::{apply_random_anomalies, replay_anomalies, DonorPool, NamedTensor, TaskKind, TaskParams};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
const EXTERNAL_PREFIX: &str = "external/";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Val => "val",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            _ => Err(Error::invalid(format!("unknown role {s:?} (expected train or val)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedAnomaly {
    pub mask: MaskSpec,
    pub params: TaskParams,
}

/// One line of `records.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub sample: String,
    pub iteration: usize,
    pub role: Role,
    pub task: TaskKind,
    pub seed: u64,
    pub stream: u64,
    pub zscore: bool,
    pub foreground_threshold: f64,
    pub sigma: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub anomalies: Vec<LoggedAnomaly>,
}

pub fn role_dir(output_dir: &Path, iteration: usize, role: Role) -> PathBuf {
    output_dir.join(format!("iter_{iteration:03}")).join(role.to_string())
}

fn ndt_name(id: &str) -> String {
    format!("{id}.{NDT_EXTENSION}")
}

/// Subtract the foreground mean and divide by the foreground standard
/// deviation. Falls back to the whole image without foreground, and to unit
/// scale for constant images.
pub fn zscore(x: &Tensor, threshold: f64) -> Tensor {
    let fg = foreground_of(x, threshold);
    let mut values: Vec<f64> = x
        .data()
        .iter()
        .zip(fg.data())
        .filter(|(_, &f)| f)
        .map(|(&v, _)| v)
        .collect();
    if values.is_empty() {
        values = x.data().to_vec();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    x.map(|&v| (v - mean) / std)
}

fn load_sample(path: &Path, zscore_on: bool, threshold: f64) -> Result<Tensor> {
    let t = read_ndt(path)?;
    Ok(if zscore_on { zscore(&t, threshold) } else { t })
}

/// Assign folds to the samples in `input_dir` and write `manifest.json`.
pub fn plan(cfg: &PipelineConfig) -> Result<(PathBuf, Manifest)> {
    let paths = list_ndt(&cfg.input_dir)
        .map_err(|e| Error::Data(format!("cannot list {}: {e}", cfg.input_dir.display())))?;
    if paths.is_empty() {
        return Err(Error::Data(format!("no .ndt samples in {}", cfg.input_dir.display())));
    }
    for p in &paths {
        read_ndt(p)?;
    }
    let ids: Vec<String> = paths.iter().map(|p| sample_id(p)).collect();
    let mut rng = RngStream::new(cfg.seed, stable_hash(&[b"assign"]));
    let samples = assign_folds(&ids, cfg.folds, &mut rng)?;
    let assignment = TaskFoldAssignment::new(cfg.tasks.clone(), samples.clone())?;
    let split = match cfg.split_mode {
        SplitMode::Paired => enumerate_splits(&assignment, cfg.train_tasks)?,
        SplitMode::FullProduct => enumerate_full_product(&assignment, cfg.train_tasks)?,
    };
    let manifest = emit_manifest(&split, &samples, cfg.seed)?;
    let path = cfg.output_dir.join(MANIFEST_FILE);
    write_atomic(&path, manifest.to_json()?.as_bytes())?;
    Ok((path, manifest))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    Manifest::from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn load_external(cfg: &PipelineConfig) -> Result<Vec<NamedTensor>> {
    let Some(dir) = &cfg.external_dir else {
        return Ok(Vec::new());
    };
    list_ndt(dir)?
        .iter()
        .map(|p| {
            Ok(NamedTensor {
                id: format!("{EXTERNAL_PREFIX}{}", sample_id(p)),
                tensor: load_sample(p, cfg.zscore, cfg.task.foreground_threshold)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSummary {
    pub dir: PathBuf,
    pub written: usize,
    pub failed: Vec<(String, String)>,
}

/// Corrupt every sample of one role of one iteration.
///
/// Each sample draws its task and anomalies from streams keyed by its id and
/// the iteration, so output does not depend on thread scheduling. Samples
/// whose placements all fail are logged as failed and skipped.
pub fn generate(cfg: &PipelineConfig, manifest: &Manifest, iteration: usize, role: Role) -> Result<GenerateSummary> {
    let it = manifest.iteration(iteration)?;
    let (ids, tasks) = match role {
        Role::Train => (&it.train_samples, &it.train_tasks),
        Role::Val => (&it.val_samples, &it.val_tasks),
    };
    if tasks.is_empty() {
        return Err(Error::Config(format!("iteration {iteration} has no {role} tasks")));
    }
    let threshold = cfg.task.foreground_threshold;
    let samples: Vec<NamedTensor> = ids
        .par_iter()
        .map(|id| {
            Ok(NamedTensor {
                id: id.clone(),
                tensor: load_sample(&cfg.input_dir.join(ndt_name(id)), cfg.zscore, threshold)?,
            })
        })
        .collect::<Result<_>>()?;
    let external = load_external(cfg)?;
    if tasks.contains(&TaskKind::InterBlend) && external.is_empty() {
        return Err(Error::Config("inter_blend needs external_dir with at least one .ndt image".into()));
    }

    let dir = role_dir(&cfg.output_dir, iteration, role);
    let seed = manifest.seed;
    let entries: Vec<LogEntry> = samples
        .par_iter()
        .map(|sample| {
            let mut task_rng = RngStream::new(seed, sample_stream_id(&sample.id, iteration, "task"));
            let task = tasks[task_rng.gen_range(0..tasks.len())];
            let stream = sample_stream_id(&sample.id, iteration, "anomalies");
            let mut rng = RngStream::new(seed, stream);
            let donors = DonorPool {
                intra: &samples,
                external: &external,
                exclude: Some(&sample.id),
            };
            let mut entry = LogEntry {
                sample: sample.id.clone(),
                iteration,
                role,
                task,
                seed,
                stream,
                zscore: cfg.zscore,
                foreground_threshold: threshold,
                sigma: cfg.task.sigma,
                status: Status::Ok,
                error: None,
                anomalies: Vec::new(),
            };
            match apply_random_anomalies(&sample.tensor, task, &donors, &mut rng, &cfg.task) {
                Ok((corrupted, records)) => {
                    let label = label_map(&sample.tensor, &corrupted, cfg.task.sigma)?;
                    write_pair(&dir, &sample.id, &corrupted, &label)?;
                    entry.anomalies = records
                        .into_iter()
                        .map(|r| LoggedAnomaly {
                            mask: r.mask.spec,
                            params: r.params,
                        })
                        .collect();
                }
                Err(e @ (Error::TaskFailure(_) | Error::InvalidArgument(_))) => {
                    entry.status = Status::Failed;
                    entry.error = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
            Ok(entry)
        })
        .collect::<Result<_>>()?;

    write_log(&dir.join(RECORDS_FILE), &entries)?;
    let failed: Vec<(String, String)> = entries
        .iter()
        .filter(|e| e.status == Status::Failed)
        .map(|e| (e.sample.clone(), e.error.clone().unwrap_or_default()))
        .collect();
    Ok(GenerateSummary {
        dir,
        written: entries.len() - failed.len(),
        failed,
    })
}

fn write_pair(dir: &Path, id: &str, corrupted: &Tensor, label: &Tensor) -> Result<()> {
    write_ndt(&dir.join("images").join(ndt_name(id)), corrupted)?;
    write_ndt(&dir.join("labels").join(ndt_name(id)), label)
}

fn write_log(path: &Path, entries: &[LogEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// Clean sample, corrupted sample and label map rebuilt from a log entry.
pub fn replay_entry(cfg: &PipelineConfig, entry: &LogEntry) -> Result<(Tensor, Tensor, Tensor)> {
    if entry.status != Status::Ok {
        return Err(Error::invalid(format!("sample {} failed during generation", entry.sample)));
    }
    let load = |p: PathBuf| load_sample(&p, entry.zscore, entry.foreground_threshold);
    let clean = load(cfg.input_dir.join(ndt_name(&entry.sample)))?;
    let mut intra = Vec::new();
    let mut external = Vec::new();
    for a in &entry.anomalies {
        let TaskParams::Blend { donor, .. } = &a.params else {
            continue;
        };
        if intra.iter().chain(&external).any(|d: &NamedTensor| &d.id == donor) {
            continue;
        }
        if let Some(stem) = donor.strip_prefix(EXTERNAL_PREFIX) {
            let dir = cfg
                .external_dir
                .as_ref()
                .ok_or_else(|| Error::Config(format!("donor {donor} needs external_dir")))?;
            external.push(NamedTensor {
                id: donor.clone(),
                tensor: load(dir.join(ndt_name(stem)))?,
            });
        } else {
            intra.push(NamedTensor {
                id: donor.clone(),
                tensor: load(cfg.input_dir.join(ndt_name(donor)))?,
            });
        }
    }
    let donors = DonorPool {
        intra: &intra,
        external: &external,
        exclude: Some(&entry.sample),
    };
    let logged: Vec<(MaskSpec, TaskParams)> = entry
        .anomalies
        .iter()
        .map(|a| (a.mask.clone(), a.params.clone()))
        .collect();
    let corrupted = replay_anomalies(&clean, entry.task, &logged, &donors)?;
    let label = label_map(&clean, &corrupted, entry.sigma)?;
    Ok((clean, corrupted, label))
}

/// Rebuild every successful sample of a record log into `out_dir`.
pub fn replay(cfg: &PipelineConfig, records: &Path, out_dir: &Path) -> Result<usize> {
    let entries = read_log(records)?;
    let ok: Vec<&LogEntry> = entries.iter().filter(|e| e.status == Status::Ok).collect();
    ok.par_iter()
        .map(|e| {
            let (_, corrupted, label) = replay_entry(cfg, e)?;
            write_pair(out_dir, &e.sample, &corrupted, &label)
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(ok.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Pixel,
    Slice,
    Sample,
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel" => Ok(Level::Pixel),
            "slice" => Ok(Level::Slice),
            "sample" => Ok(Level::Sample),
            _ => Err(Error::invalid(format!("unknown level {s:?} (expected pixel, slice or sample)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    pub reducer: Reducer,
    pub slice_axis: usize,
    pub files: usize,
    pub points: usize,
    pub positives: usize,
    pub average_precision: Option<f64>,
    pub auroc: Option<f64>,
    pub skipped: Vec<SkippedFile>,
    pub notes: Vec<String>,
}

/// Score predictions against label maps with matching file names.
pub fn evaluate(predictions: &Path, labels: &Path, level: Level, reducer: Reducer, slice_axis: usize) -> Result<EvalReport> {
    let label_files: BTreeMap<String, PathBuf> = list_ndt(labels)?
        .into_iter()
        .map(|p| (sample_id(&p), p))
        .collect();
    let mut skipped = Vec::new();
    let mut set = ScoredSet::new(Vec::new(), Vec::new())?;
    let mut files = 0;
    for pred_path in list_ndt(predictions)? {
        let id = sample_id(&pred_path);
        let Some(label_path) = label_files.get(&id) else {
            skipped.push(SkippedFile {
                file: id,
                reason: "no label file".into(),
            });
            continue;
        };
        let scores = read_ndt(&pred_path)?;
        let targets = read_ndt(label_path)?;
        if scores.shape() != targets.shape() {
            skipped.push(SkippedFile {
                file: id,
                reason: format!("shape {:?} vs label {:?}", scores.shape(), targets.shape()),
            });
            continue;
        }
        match level {
            Level::Pixel => set.extend(ScoredSet::from_maps(&scores, &targets)?),
            Level::Slice => set.extend(reduce_to_slices(&scores, &targets, slice_axis, reducer)?),
            Level::Sample => {
                let (s, t) = reduce_sample(&scores, &targets, reducer)?;
                set.push(s, t);
            }
        }
        files += 1;
    }
    if files == 0 {
        return Err(Error::Data(format!(
            "no prediction in {} matches a label in {}",
            predictions.display(),
            labels.display()
        )));
    }
    let mut notes = Vec::new();
    let mut metric = |r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    let ap = metric(average_precision(&set));
    let roc = metric(auroc(&set));
    Ok(EvalReport {
        level,
        reducer,
        slice_axis,
        files,
        points: set.len(),
        positives: set.positives(),
        average_precision: ap,
        auroc: roc,
        skipped,
        notes,
    })
}
