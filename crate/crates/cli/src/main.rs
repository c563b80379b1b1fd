use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use aquascan::eval::{self, DetectionReport};
use aquascan::pipeline::{self, FusionMode, PipelineConfig};
use aquascan::residual::ModeVariant;
use aquascan::synth::{self, Manifest, SynthConfig};
use aquascan::video_io::{self, GrayImage};
use aquascan::Label;

#[derive(Parser)]
#[command(name = "aquascan", version, about = "Detect water regions in videos")]
struct Cli {
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        /// Frame size, e.g. 160x120.
        #[arg(long, default_value = "160x120")]
        size: String,
        #[arg(long, default_value_t = 260)]
        frames: usize,
    },
    /// Write the temporal mode frame and residual frames of a video.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Train forest(s) on a labeled dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Manifest listing the videos and labels (default: <data>/manifest.json).
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<FusionMode>,
        /// Also write the sampled descriptors as CSV.
        #[arg(long)]
        dump_csv: Option<PathBuf>,
        #[command(flatten)]
        mode_args: ModeArgs,
    },
    /// Detect water in one video and write per-frame masks.
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        /// One model, or two for late fusion.
        #[arg(long = "model", required = true, num_args = 1..=2)]
        models: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        /// Write the probability volume to this file.
        #[arg(long)]
        dump_probs: Option<PathBuf>,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Score predicted masks against ground truth.
    Eval {
        /// Mask directory of one video, or a directory of per-video mask directories.
        #[arg(long)]
        pred: PathBuf,
        /// Mask file or directory, or a dataset directory with a manifest.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Split a dataset, train, detect and report all fusion modes.
    Experiment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed of the train/test split (default: --seed).
        #[arg(long)]
        split_seed: Option<u64>,
    },
}

#[derive(Args)]
struct ModeArgs {
    #[arg(long, conflicts_with = "direct")]
    kde: bool,
    /// Use the most frequent intensity instead of the KDE mode.
    #[arg(long)]
    direct: bool,
    /// Fixed KDE bandwidth in intensity units.
    #[arg(long)]
    bandwidth: Option<f64>,
}

impl ModeArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.direct {
            cfg.mode_variant = ModeVariant::Direct;
        } else if self.kde {
            cfg.mode_variant = ModeVariant::Kde;
        }
        if self.bandwidth.is_some() {
            cfg.bandwidth = self.bandwidth;
        }
    }
}

/// Written next to detected masks.
#[derive(Serialize, serde::Deserialize)]
struct DetectionInfo {
    frames: usize,
    width: usize,
    height: usize,
    evaluated_frames: (usize, usize),
    grid: aquascan::mrf::GridGeometry,
    lambda: f64,
}

const DETECTION_FILE: &str = "detection.json";

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("size {:?} is not WxH", s))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("loading configuration {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    match cli.command {
        Command::Synth {
            out,
            per_class,
            size,
            frames,
        } => {
            let (width, height) = parse_size(&size)?;
            let template = SynthConfig {
                width,
                height,
                frames,
                ..SynthConfig::default()
            };
            let manifest = synth::generate_dataset(&out, per_class, &template, cfg.seed)?;
            println!(
                "wrote {} videos to {}",
                manifest.videos.len(),
                out.display()
            );
        }
        Command::Preprocess { input, out, mode } => {
            mode.apply(&mut cfg);
            let video = video_io::load_frame_sequence(&input, None)?;
            let pre = pipeline::preprocess(&video, &cfg)?;
            fs::create_dir_all(&out)?;
            video_io::pnm::write_pgm(&out.join("mode.pgm"), &pre.mode.to_image())?;
            video_io::save_frame_sequence(&pre.residual, &out.join("residual"))?;
            println!(
                "mode frame and {} residual frames ({}x{}) written to {}",
                pre.residual.frame_count(),
                pre.residual.width(),
                pre.residual.height(),
                out.display()
            );
        }
        Command::Train {
            data,
            labels,
            out,
            mode,
            dump_csv,
            mode_args,
        } => {
            mode_args.apply(&mut cfg);
            if let Some(mode) = mode {
                cfg.fusion = mode;
            }
            let manifest_path = labels.unwrap_or_else(|| data.join(synth::MANIFEST_FILE));
            let manifest: Manifest = serde_json::from_slice(
                &fs::read(&manifest_path)
                    .with_context(|| format!("reading {}", manifest_path.display()))?,
            )?;
            let (models, ds) = pipeline::train_pipeline(&data, &manifest, &cfg)?;
            if let Some(csv) = dump_csv {
                ds.write_csv(&csv)?;
            }
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            for path in pipeline::save_models(&models, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Detect {
            input,
            models,
            out,
            lambda,
            dump_probs,
            mode,
        } => {
            mode.apply(&mut cfg);
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            let models = pipeline::load_models(&models, cfg.m)?;
            cfg.fusion = models.mode(cfg.m)?;
            let video = video_io::load_frame_sequence(&input, None)?;
            let det = pipeline::detect(&video, &models, &cfg)?;
            video_io::save_mask_sequence(&det.masks, &out)?;
            if let Some(path) = dump_probs {
                det.probabilities.write_dump(&path)?;
            }
            write_json(
                &out.join(DETECTION_FILE),
                &DetectionInfo {
                    frames: det.masks.len(),
                    width: det.masks.width(),
                    height: det.masks.height(),
                    evaluated_frames: det.evaluated_frames,
                    grid: det.probabilities.geometry.clone(),
                    lambda: cfg.lambda,
                },
            )?;
            println!(
                "{} masks written to {} (frames {}..{} evaluated)",
                det.masks.len(),
                out.display(),
                det.evaluated_frames.0,
                det.evaluated_frames.1
            );
        }
        Command::Eval {
            pred,
            truth,
            report,
        } => run_eval(&pred, &truth, report.as_deref())?,
        Command::Experiment {
            data,
            out,
            split_seed,
        } => {
            let split_seed = split_seed.unwrap_or(cfg.seed);
            let report = pipeline::run_experiment(&data, split_seed, &cfg, &out)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct VideoEval {
    id: String,
    label: Option<Label>,
    #[serde(flatten)]
    report: DetectionReport,
}

#[derive(Serialize)]
struct EvalReport {
    videos: Vec<VideoEval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<eval::ClassTable>,
}

fn has_masks(dir: &Path) -> bool {
    dir.join("mask.pgm").is_file()
        || fs::read_dir(dir)
            .map(|rd| {
                rd.flatten()
                    .any(|e| e.file_name().to_string_lossy().starts_with("mask_"))
            })
            .unwrap_or(false)
}

fn eval_one(pred_dir: &Path, truth: &Path) -> Result<DetectionReport> {
    let pred = video_io::load_mask_sequence(pred_dir, probe_dims(pred_dir)?)?;
    let truth = video_io::load_mask_sequence(truth, (pred.width(), pred.height()))
        .with_context(|| format!("loading ground truth {}", truth.display()))?;
    let info_path = pred_dir.join(DETECTION_FILE);
    let evaluated = if info_path.is_file() {
        let info: DetectionInfo = serde_json::from_slice(&fs::read(&info_path)?)?;
        info.evaluated_frames
    } else {
        (0, pred.len())
    };
    Ok(pipeline::evaluate_detection(&pred, &truth, evaluated)?)
}

fn probe_dims(mask_dir: &Path) -> Result<(usize, usize)> {
    let first = if mask_dir.join("mask.pgm").is_file() {
        mask_dir.join("mask.pgm")
    } else {
        let mut names: Vec<PathBuf> = fs::read_dir(mask_dir)
            .with_context(|| format!("reading {}", mask_dir.display()))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("mask_"))
            })
            .collect();
        names.sort();
        names
            .into_iter()
            .next()
            .with_context(|| format!("no masks in {}", mask_dir.display()))?
    };
    let img: GrayImage = video_io::pnm::read_image(&first)?;
    Ok((img.width, img.height))
}

fn run_eval(pred: &Path, truth: &Path, report_path: Option<&Path>) -> Result<()> {
    let mut videos = Vec::new();
    let mut table = None;
    if has_masks(pred) {
        videos.push(VideoEval {
            id: pred.display().to_string(),
            label: None,
            report: eval_one(pred, truth)?,
        });
    } else {
        let manifest = Manifest::load(truth).with_context(|| {
            format!(
                "{} holds no masks and {} no manifest",
                pred.display(),
                truth.display()
            )
        })?;
        let mut scores = Vec::new();
        for entry in &manifest.videos {
            let dir = pred.join(&entry.id);
            if !dir.is_dir() {
                continue;
            }
            let report = eval_one(&dir, &truth.join(&entry.id))?;
            scores.push((entry.label, report.video_fit));
            videos.push(VideoEval {
                id: entry.id.clone(),
                label: Some(entry.label),
                report,
            });
        }
        if videos.is_empty() {
            bail!("no predictions under {} match the manifest", pred.display());
        }
        table = Some(eval::per_class_report(&scores));
    }
    for v in &videos {
        println!(
            "{}: detection fit {:.1}% over frames {}..{}",
            v.id,
            eval::percent(v.report.video_fit),
            v.report.evaluated_frames.0,
            v.report.evaluated_frames.1
        );
    }
    if let Some(t) = &table {
        print!("{}", t.to_text());
    }
    if let Some(path) = report_path {
        write_json(path, &EvalReport { videos, table })?;
    }
    Ok(())
}
