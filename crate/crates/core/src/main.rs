use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synthanom::config::{parse_pairs, PipelineConfig};
use synthanom::io::write_atomic;
use synthanom::metrics::Reducer;
use synthanom::pipeline::{self, Level, Role, MANIFEST_FILE};
use synthanom::preview;
use synthanom::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "synthanom", version, about = "Synthetic anomaly generation and evaluation")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

macro_rules! overrides {
    ($($field:ident $(=> $kebab:literal)?),* $(,)?) => {
        /// Per-key overrides of the configuration file.
        #[derive(Args, Debug, Default)]
        struct Overrides {
            $(
                #[arg(long = stringify!($field), $(alias = $kebab,)? global = true, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> BTreeMap<String, String> {
                let mut map = BTreeMap::new();
                $(
                    if let Some(v) = &self.$field {
                        map.insert(stringify!($field).to_string(), v.clone());
                    }
                )*
                map
            }
        }
    };
}

overrides! {
    seed,
    input_dir => "input-dir",
    output_dir => "output-dir",
    external_dir => "external-dir",
    tasks,
    folds,
    train_tasks => "train-tasks",
    split_mode => "split-mode",
    sigma,
    foreground_threshold => "foreground-threshold",
    zscore,
    mask_size_min => "mask-size-min",
    mask_size_max => "mask-size-max",
    max_attempts => "max-attempts",
    max_anomalies => "max-anomalies",
    exponent_min => "exponent-min",
    exponent_max => "exponent-max",
    magnitude_min => "magnitude-min",
    magnitude_max => "magnitude-max",
    ramp_min => "ramp-min",
    ramp_max => "ramp-max",
    reducer,
    slice_axis => "slice-axis",
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assign folds and write the split manifest.
    Plan,
    /// Corrupt the samples of one role of one iteration.
    Generate {
        /// Manifest path (default: <output_dir>/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        iteration: usize,
        /// `train` or `val`.
        #[arg(long)]
        role: String,
    },
    /// Rebuild outputs from a record log.
    Replay {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// AP and AUROC of predictions against label maps.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// `pixel`, `slice` or `sample`.
        #[arg(long, default_value = "pixel")]
        level: String,
        /// JSON report path (default: <predictions>/eval_<level>.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Montage and intensity profile of one generated sample.
    Preview {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        sample: String,
        /// Index along axis 0 for 3-d samples (default: anomaly centre).
        #[arg(long)]
        slice: Option<usize>,
        /// Output prefix; writes <out>_montage.pgm and <out>_profile.ppm.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    PipelineConfig::load(cli.config.as_deref(), &cli.overrides.pairs())
}

/// Reducer and slice axis without requiring a full pipeline configuration.
fn eval_settings(cli: &Cli) -> Result<(Reducer, usize)> {
    let mut map = match &cli.config {
        Some(p) => parse_pairs(
            &std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        )?,
        None => BTreeMap::new(),
    };
    map.extend(cli.overrides.pairs());
    let reducer = match map.get("reducer") {
        Some(v) => v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
        None => Reducer::Mean,
    };
    let axis = match map.get("slice_axis") {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse slice_axis = {v:?}")))?,
        None => 0,
    };
    Ok((reducer, axis))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Plan => {
            let cfg = config(&cli)?;
            let (path, m) = pipeline::plan(&cfg)?;
            println!("wrote {} ({} iterations)", path.display(), m.iterations.len());
        }
        Command::Generate {
            manifest,
            iteration,
            role,
        } => {
            let cfg = config(&cli)?;
            let role: Role = role.parse()?;
            let path = manifest.clone().unwrap_or_else(|| cfg.output_dir.join(MANIFEST_FILE));
            let m = pipeline::read_manifest(&path)?;
            let s = pipeline::generate(&cfg, &m, *iteration, role)?;
            for (id, why) in &s.failed {
                eprintln!("skipped {id}: {why}");
            }
            println!("wrote {} samples to {} ({} failed)", s.written, s.dir.display(), s.failed.len());
        }
        Command::Replay { records, out } => {
            let cfg = config(&cli)?;
            let n = pipeline::replay(&cfg, records, out)?;
            println!("replayed {n} samples into {}", out.display());
        }
        Command::Eval {
            predictions,
            labels,
            level,
            report,
        } => {
            let (reducer, axis) = eval_settings(&cli)?;
            let level: Level = level.parse()?;
            let r = pipeline::evaluate(predictions, labels, level, reducer, axis)?;
            for s in &r.skipped {
                eprintln!("skipped {}: {}", s.file, s.reason);
            }
            let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{:.2}", 100.0 * v));
            println!("AP    {}", show(r.average_precision));
            println!("AUROC {}", show(r.auroc));
            for n in &r.notes {
                eprintln!("note: {n}");
            }
            let path = report.clone().unwrap_or_else(|| {
                predictions.join(format!("eval_{}.json", serde_json::to_value(level).unwrap().as_str().unwrap()))
            });
            let mut text = serde_json::to_string_pretty(&r)?;
            text.push('\n');
            write_atomic(&path, text.as_bytes())?;
        }
        Command::Preview {
            records,
            sample,
            slice,
            out,
        } => {
            let cfg = config(&cli)?;
            run_preview(&cfg, records, sample, *slice, out)?;
        }
    }
    Ok(())
}

fn run_preview(cfg: &PipelineConfig, records: &Path, sample: &str, slice: Option<usize>, out: &Path) -> Result<()> {
    let entries = pipeline::read_log(records)?;
    let entry = entries
        .iter()
        .find(|e| e.sample == sample)
        .ok_or_else(|| Error::InvalidArgument(format!("sample {sample:?} not in {}", records.display())))?;
    let (clean, corrupted, label) = pipeline::replay_entry(cfg, entry)?;
    let centre: Vec<usize> = entry
        .anomalies
        .first()
        .map(|a| {
            a.mask
                .center
                .iter()
                .zip(clean.shape())
                .map(|(&c, &n)| (c.round().max(0.0) as usize).min(n - 1))
                .collect()
        })
        .unwrap_or_else(|| clean.shape().iter().map(|&n| n / 2).collect());
    let slice = slice.or(if clean.ndim() == 3 { Some(centre[0]) } else { None });
    let planes = [
        preview::plane(&clean, slice)?,
        preview::plane(&corrupted, slice)?,
        preview::plane(&label, slice)?,
    ];
    let montage = preview::montage(&planes[0], &planes[1], &planes[2])?;
    let row = if clean.ndim() == 1 { 0 } else { centre[centre.len() - 2] };
    let prof = |t: &synthanom::Tensor| preview::line_profile(t, &[row, 0], 1);
    let plot = preview::profile_plot(&prof(&planes[0])?, &prof(&planes[1])?, &prof(&planes[2])?)?;
    let stem = out.display().to_string();
    let montage_path = PathBuf::from(format!("{stem}_montage.pgm"));
    let profile_path = PathBuf::from(format!("{stem}_profile.ppm"));
    write_atomic(&montage_path, &montage.to_netpbm())?;
    write_atomic(&profile_path, &plot.to_netpbm())?;
    println!("wrote {} and {}", montage_path.display(), profile_path.display());
    Ok(())
}
