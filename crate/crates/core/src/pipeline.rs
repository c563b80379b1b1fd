//! End-to-end detection: preprocessing, dense sampling, classification,
//! regularisation and mask rendering, plus the train/test experiment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{
    accumulate_lbp, lbp_volume_histogram, patch_trace, FourierDescriber, FrameView, Region,
    LBP_BINS,
};
use crate::error::{Error, Result};
use crate::eval::{self, ClassTable, DetectionReport};
use crate::forest::{self, Dataset, ForestConfig, ForestModel, Provenance, Sample};
use crate::mrf::{self, GridGeometry, ProbabilityVolume};
use crate::residual::{self, KdeConfig, ModeFrame, ModeVariant};
use crate::synth::Manifest;
use crate::video_io::{self, FrameSequence, MaskSequence};
use crate::Label;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Early,
    Late,
    Temporal,
    Spatial,
}

impl FusionMode {
    /// Table column order.
    pub const ALL: [FusionMode; 4] = [
        FusionMode::Temporal,
        FusionMode::Spatial,
        FusionMode::Late,
        FusionMode::Early,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::Early => "early",
            FusionMode::Late => "late",
            FusionMode::Temporal => "temporal",
            FusionMode::Spatial => "spatial",
        }
    }

    fn title(&self) -> &'static str {
        match self {
            FusionMode::Early => "Early Fusion",
            FusionMode::Late => "Late Fusion",
            FusionMode::Temporal => "Temporal",
            FusionMode::Spatial => "Spatial",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown fusion mode {:?}", s)))
    }
}

/// Descriptor block a single forest consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSet {
    Temporal,
    Spatial,
    Hybrid,
}

impl FeatureSet {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureSet::Temporal => "temporal",
            FeatureSet::Spatial => "spatial",
            FeatureSet::Hybrid => "hybrid",
        }
    }

    /// Columns of the hybrid descriptor this set uses.
    pub fn columns(&self, m: usize) -> Range<usize> {
        match self {
            FeatureSet::Temporal => 0..m,
            FeatureSet::Spatial => m..m + LBP_BINS,
            FeatureSet::Hybrid => 0..m + LBP_BINS,
        }
    }

    fn parse(s: &str) -> Option<FeatureSet> {
        [
            FeatureSet::Temporal,
            FeatureSet::Spatial,
            FeatureSet::Hybrid,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Signal length in frames.
    pub m: usize,
    /// Patch side in pixels (odd).
    pub n: usize,
    /// Lattice spacing of detection nodes, in (downsampled) pixels.
    pub test_stride: usize,
    pub per_frame_train_samples: usize,
    pub lambda: f64,
    pub fusion: FusionMode,
    pub mode_variant: ModeVariant,
    /// Fixed KDE bandwidth; `None` uses Scott's rule per pixel.
    pub bandwidth: Option<f64>,
    /// Quarter-resolution processing.
    pub downsample: bool,
    /// Forest hyperparameters. Its seed is replaced by `seed`.
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            m: 200,
            n: 5,
            test_stride: 11,
            per_frame_train_samples: 10,
            lambda: 1.0,
            fusion: FusionMode::Early,
            mode_variant: ModeVariant::Kde,
            bandwidth: None,
            downsample: true,
            forest: ForestConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Invalid(format!("m must be >= 2, got {}", self.m)));
        }
        if self.n < 3 || self.n.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "patch side must be odd and >= 3, got {}",
                self.n
            )));
        }
        if self.test_stride == 0 || self.per_frame_train_samples == 0 {
            return Err(Error::Invalid(
                "stride and samples per frame must be >= 1".into(),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_slice(&bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hybrid_len(&self) -> usize {
        self.m + LBP_BINS
    }

    fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            seed: self.seed,
            ..self.forest.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub mode: ModeFrame,
    pub residual: FrameSequence,
}

/// Optional quarter downsampling, temporal mode, absolute residual.
pub fn preprocess(video: &FrameSequence, cfg: &PipelineConfig) -> Result<Preprocessed> {
    let scaled;
    let video = if cfg.downsample {
        scaled = video_io::downsample_quarter(video)?;
        &scaled
    } else {
        video
    };
    let kde = KdeConfig {
        bandwidth: cfg.bandwidth,
    };
    let mode = residual::temporal_mode(video, cfg.mode_variant, &kde)?;
    let residual = residual::residual_video(video, &mode)?;
    Ok(Preprocessed { mode, residual })
}

/// Detection nodes for a `width`×`height`×`frames` residual video: every
/// `stride`-th pixel starting at the first position whose patch fits, and
/// one temporal layer per full window.
pub fn lattice(
    width: usize,
    height: usize,
    frames: usize,
    cfg: &PipelineConfig,
) -> Result<GridGeometry> {
    cfg.validate()?;
    if width < cfg.n || height < cfg.n {
        return Err(Error::Dimension(format!(
            "{}x{} frames are smaller than the {}x{} patch",
            width, height, cfg.n, cfg.n
        )));
    }
    if frames < cfg.m {
        return Err(Error::Invalid(format!(
            "video has {} frames, needs at least m = {}",
            frames, cfg.m
        )));
    }
    let r = cfg.n / 2;
    Ok(GridGeometry {
        grid_w: (width - cfg.n) / cfg.test_stride + 1,
        grid_h: (height - cfg.n) / cfg.test_stride + 1,
        grid_t: frames - cfg.m + 1,
        stride: cfg.test_stride,
        origin: (r, r),
    })
}

/// Hybrid descriptor of the n×n×m volume centred at (x, y) starting at t0.
pub fn hybrid_descriptor(
    res: &FrameSequence,
    x: usize,
    y: usize,
    t0: usize,
    cfg: &PipelineConfig,
    describer: &FourierDescriber,
) -> Result<Vec<f64>> {
    let region = Region::centered(x, y, cfg.n)
        .ok_or_else(|| Error::Invalid(format!("patch at ({}, {}) leaves the frame", x, y)))?;
    let trace = window_trace(res, &region, t0, cfg.m)?;
    let mut values = describer.describe(&trace)?.bins;
    values.extend(lbp_volume_histogram(res, &region, t0, cfg.m)?.bins);
    Ok(values)
}

fn window_trace(res: &FrameSequence, region: &Region, t0: usize, m: usize) -> Result<Vec<f64>> {
    if t0 + m > res.frame_count()
        || region.x + region.width > res.width()
        || region.y + region.height > res.height()
    {
        return Err(Error::Invalid("sample volume leaves the video".into()));
    }
    let w = res.width();
    let area = (region.width * region.height) as f64;
    Ok((t0..t0 + m)
        .map(|t| {
            let f = res.frame(t);
            let sum: u32 = (region.y..region.y + region.height)
                .map(|y| {
                    f[y * w + region.x..y * w + region.x + region.width]
                        .iter()
                        .map(|&v| v as u32)
                        .sum::<u32>()
                })
                .sum();
            sum as f64 / area
        })
        .collect())
}

/// A preprocessed video with its (processing-resolution) ground truth.
#[derive(Clone, Debug)]
pub struct LabeledVideo {
    pub id: String,
    pub label: Label,
    pub residual: FrameSequence,
    pub truth: MaskSequence,
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// For every full window of every video, `per_frame_train_samples` uniformly
/// drawn patch centres. Each sample is labelled by the ground-truth mask at
/// its centre pixel in the window's first frame. Videos shorter than `m` are
/// skipped with a warning. Rows carry hybrid descriptors.
pub fn sample_training_set(videos: &[LabeledVideo], cfg: &PipelineConfig) -> Result<Dataset> {
    cfg.validate()?;
    let describer = FourierDescriber::new(cfg.m)?;
    let r = cfg.n / 2;
    let mut ds = Dataset::new();
    for (vi, video) in videos.iter().enumerate() {
        let res = &video.residual;
        if res.frame_count() < cfg.m {
            log::warn!(
                "skipping {}: {} frames is shorter than m = {}",
                video.id,
                res.frame_count(),
                cfg.m
            );
            continue;
        }
        if res.width() < cfg.n || res.height() < cfg.n {
            log::warn!("skipping {}: frames smaller than the patch", video.id);
            continue;
        }
        if (video.truth.width(), video.truth.height()) != (res.width(), res.height()) {
            return Err(Error::Dimension(format!(
                "{}: mask is {}x{}, residual is {}x{}",
                video.id,
                video.truth.width(),
                video.truth.height(),
                res.width(),
                res.height()
            )));
        }
        let mut rng = substream(cfg.seed, vi as u64 + 1);
        let windows = res.frame_count() - cfg.m + 1;
        let spots: Vec<(usize, usize, usize)> = (0..windows)
            .flat_map(|t0| std::iter::repeat_n(t0, cfg.per_frame_train_samples))
            .map(|t0| {
                let x = rng.gen_range(r..res.width() - r);
                let y = rng.gen_range(r..res.height() - r);
                (x, y, t0)
            })
            .collect();
        let rows: Vec<Sample> = spots
            .par_iter()
            .map(|&(x, y, t0)| {
                Ok(Sample {
                    values: hybrid_descriptor(res, x, y, t0, cfg, &describer)?,
                    label: Label::from_bit(video.truth.get(t0, x, y)),
                    provenance: Provenance {
                        video: video.id.clone(),
                        x,
                        y,
                        t0,
                    },
                })
            })
            .collect::<Result<_>>()?;
        for row in rows {
            ds.push(row)?;
        }
    }
    Ok(ds)
}

/// Forest(s) backing one fusion mode.
#[derive(Clone, Debug, PartialEq)]
pub enum Models {
    Single(ForestModel),
    Late {
        temporal: ForestModel,
        spatial: ForestModel,
    },
}

fn feature_set_of(model: &ForestModel, m: usize) -> Result<FeatureSet> {
    let set = match model.feature_set.as_deref() {
        Some(s) => FeatureSet::parse(s)
            .ok_or_else(|| Error::Model(format!("unknown feature set {:?}", s)))?,
        None if model.descriptor_len == m + LBP_BINS => FeatureSet::Hybrid,
        None if model.descriptor_len == m && m != LBP_BINS => FeatureSet::Temporal,
        None if model.descriptor_len == LBP_BINS && m != LBP_BINS => FeatureSet::Spatial,
        None => {
            return Err(Error::Model(format!(
                "cannot tell which descriptor a model of length {} expects",
                model.descriptor_len
            )))
        }
    };
    let cols = set.columns(m);
    if cols.len() != model.descriptor_len {
        return Err(Error::Model(format!(
            "{} model has descriptor length {}, configuration (m = {}) implies {}",
            set.as_str(),
            model.descriptor_len,
            m,
            cols.len()
        )));
    }
    Ok(set)
}

impl Models {
    pub fn mode(&self, m: usize) -> Result<FusionMode> {
        match self {
            Models::Late { temporal, spatial } => {
                if feature_set_of(temporal, m)? != FeatureSet::Temporal
                    || feature_set_of(spatial, m)? != FeatureSet::Spatial
                {
                    return Err(Error::Model(
                        "late fusion needs a temporal and a spatial model".into(),
                    ));
                }
                Ok(FusionMode::Late)
            }
            Models::Single(model) => Ok(match feature_set_of(model, m)? {
                FeatureSet::Hybrid => FusionMode::Early,
                FeatureSet::Temporal => FusionMode::Temporal,
                FeatureSet::Spatial => FusionMode::Spatial,
            }),
        }
    }

    /// Water probability of one hybrid descriptor.
    pub fn predict(&self, hybrid: &[f64], m: usize) -> Result<f64> {
        match self {
            Models::Single(model) => {
                let cols = feature_set_of(model, m)?.columns(m);
                forest::predict_proba(model, &hybrid[cols])
            }
            Models::Late { temporal, spatial } => {
                let pt = forest::predict_proba(temporal, &hybrid[FeatureSet::Temporal.columns(m)])?;
                let ps = forest::predict_proba(spatial, &hybrid[FeatureSet::Spatial.columns(m)])?;
                crate::descriptors::fuse_late(pt, ps)
            }
        }
    }
}

fn train_set(ds: &Dataset, set: FeatureSet, cfg: &PipelineConfig) -> Result<ForestModel> {
    let projected;
    let data = if set == FeatureSet::Hybrid {
        ds
    } else {
        projected = ds.project(set.columns(cfg.m))?;
        &projected
    };
    let mut model = forest::train(data, &cfg.forest_config())?;
    model.feature_set = Some(set.as_str().to_string());
    Ok(model)
}

/// Trains the forest(s) for `cfg.fusion` on a hybrid dataset.
pub fn train_models(ds: &Dataset, cfg: &PipelineConfig) -> Result<Models> {
    if ds.descriptor_len() != cfg.hybrid_len() {
        return Err(Error::Dimension(format!(
            "dataset rows have {} values, expected {}",
            ds.descriptor_len(),
            cfg.hybrid_len()
        )));
    }
    Ok(match cfg.fusion {
        FusionMode::Early => Models::Single(train_set(ds, FeatureSet::Hybrid, cfg)?),
        FusionMode::Temporal => Models::Single(train_set(ds, FeatureSet::Temporal, cfg)?),
        FusionMode::Spatial => Models::Single(train_set(ds, FeatureSet::Spatial, cfg)?),
        FusionMode::Late => Models::Late {
            temporal: train_set(ds, FeatureSet::Temporal, cfg)?,
            spatial: train_set(ds, FeatureSet::Spatial, cfg)?,
        },
    })
}

/// Model file paths for `models` given the requested output path: late
/// fusion writes `<stem>_temporal.json` and `<stem>_spatial.json` next to it.
pub fn model_paths(out: &Path, late: bool) -> Vec<PathBuf> {
    if !late {
        return vec![out.to_path_buf()];
    }
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let dir = out.parent().unwrap_or_else(|| Path::new(""));
    vec![
        dir.join(format!("{}_temporal.json", stem)),
        dir.join(format!("{}_spatial.json", stem)),
    ]
}

pub fn save_models(models: &Models, out: &Path) -> Result<Vec<PathBuf>> {
    let paths = model_paths(out, matches!(models, Models::Late { .. }));
    match models {
        Models::Single(m) => forest::save_model(m, &paths[0])?,
        Models::Late { temporal, spatial } => {
            forest::save_model(temporal, &paths[0])?;
            forest::save_model(spatial, &paths[1])?;
        }
    }
    Ok(paths)
}

/// One path loads a single model; two paths load a late-fusion pair in
/// either order.
pub fn load_models(paths: &[PathBuf], m: usize) -> Result<Models> {
    match paths {
        [p] => {
            let models = Models::Single(forest::load_model(p)?);
            models.mode(m)?;
            Ok(models)
        }
        [a, b] => {
            let (a, b) = (forest::load_model(a)?, forest::load_model(b)?);
            let (temporal, spatial) = if feature_set_of(&a, m)? == FeatureSet::Temporal {
                (a, b)
            } else {
                (b, a)
            };
            let models = Models::Late { temporal, spatial };
            models.mode(m)?;
            Ok(models)
        }
        _ => Err(Error::Invalid(format!(
            "expected 1 or 2 model files, got {}",
            paths.len()
        ))),
    }
}

/// Loads and preprocesses the manifest's videos found under `dir`
/// (restricted to `ids` when given).
pub fn load_labeled_videos(
    dir: &Path,
    manifest: &Manifest,
    ids: Option<&[String]>,
    cfg: &PipelineConfig,
) -> Result<Vec<LabeledVideo>> {
    let entries: Vec<_> = manifest
        .videos
        .iter()
        .filter(|e| ids.is_none_or(|ids| ids.contains(&e.id)))
        .collect();
    entries
        .iter()
        .map(|e| {
            let vdir = dir.join(&e.id);
            let frames = video_io::load_frame_sequence(&vdir, None)?;
            let pre = preprocess(&frames, cfg)?;
            let dims = (pre.residual.width(), pre.residual.height());
            let truth = video_io::load_mask_sequence(&vdir, dims)?;
            Ok(LabeledVideo {
                id: e.id.clone(),
                label: e.label,
                residual: pre.residual,
                truth,
            })
        })
        .collect()
}

/// Preprocesses, samples and trains on every video of a dataset directory.
pub fn train_pipeline(
    train_dir: &Path,
    manifest: &Manifest,
    cfg: &PipelineConfig,
) -> Result<(Models, Dataset)> {
    cfg.validate()?;
    let videos = load_labeled_videos(train_dir, manifest, None, cfg)?;
    for label in [Label::Water, Label::NonWater] {
        if !videos.iter().any(|v| v.label == label) {
            return Err(Error::Invalid(format!(
                "training set has no {} video",
                label
            )));
        }
    }
    let ds = sample_training_set(&videos, cfg)?;
    let models = train_models(&ds, cfg)?;
    Ok((models, ds))
}

/// Hybrid descriptors of every lattice node, in probability-volume order.
pub fn node_descriptors(
    res: &FrameSequence,
    cfg: &PipelineConfig,
) -> Result<(GridGeometry, Vec<Vec<f64>>)> {
    let geom = lattice(res.width(), res.height(), res.frame_count(), cfg)?;
    let describer = FourierDescriber::new(cfg.m)?;
    let sites: Vec<(usize, usize)> = (0..geom.grid_h)
        .flat_map(|gy| (0..geom.grid_w).map(move |gx| (gx, gy)))
        .collect();
    // Per site: descriptors for every window start.
    let per_site: Vec<Vec<Vec<f64>>> = sites
        .par_iter()
        .map(|&(gx, gy)| {
            let x = geom.origin.0 + gx * geom.stride;
            let y = geom.origin.1 + gy * geom.stride;
            site_descriptors(res, x, y, geom.grid_t, cfg, &describer)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(geom.node_count());
    for t in 0..geom.grid_t {
        for site in &per_site {
            out.push(site[t].clone());
        }
    }
    Ok((geom, out))
}

fn site_descriptors(
    res: &FrameSequence,
    x: usize,
    y: usize,
    windows: usize,
    cfg: &PipelineConfig,
    describer: &FourierDescriber,
) -> Result<Vec<Vec<f64>>> {
    let m = cfg.m;
    let region = Region::centered(x, y, cfg.n).expect("lattice keeps patches inside");
    let trace = patch_trace(res, x, y, cfg.n)?;
    let per_frame: Vec<[u32; LBP_BINS]> = (0..res.frame_count())
        .map(|t| {
            let mut c = [0u32; LBP_BINS];
            accumulate_lbp(&FrameView::of_sequence(res, t), &region, &mut c).map(|_| c)
        })
        .collect::<Result<_>>()?;
    let mut counts = [0u32; LBP_BINS];
    for c in &per_frame[..m] {
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    let mut out = Vec::with_capacity(windows);
    for t0 in 0..windows {
        if t0 > 0 {
            let (old, new) = (&per_frame[t0 - 1], &per_frame[t0 + m - 1]);
            for i in 0..LBP_BINS {
                counts[i] = counts[i] - old[i] + new[i];
            }
        }
        let mut values = describer.describe(&trace[t0..t0 + m])?.bins;
        values.extend(crate::descriptors::lbp::normalize_counts(&counts).bins);
        out.push(values);
    }
    Ok(out)
}

pub fn probability_volume(
    geom: &GridGeometry,
    descriptors: &[Vec<f64>],
    models: &Models,
    cfg: &PipelineConfig,
) -> Result<ProbabilityVolume> {
    let probs = descriptors
        .par_iter()
        .map(|d| models.predict(d, cfg.m))
        .collect::<Result<Vec<f64>>>()?;
    ProbabilityVolume::new(geom.clone(), probs)
}

/// Labels the volume (regularised with `lambda`, or thresholded) and renders
/// one mask per input frame; frames past the last full window repeat the
/// final computed mask.
pub fn render_masks(
    pv: &ProbabilityVolume,
    lambda: Option<f64>,
    width: usize,
    height: usize,
    frames: usize,
) -> Result<MaskSequence> {
    let labels = match lambda {
        Some(l) => mrf::regularize(pv, l)?,
        None => mrf::threshold(pv),
    };
    let masks = mrf::labels_to_masks(&labels, width, height)?;
    let mut all = masks.masks().to_vec();
    let last = all.last().cloned().expect("at least one window");
    all.resize(frames.max(all.len()), last);
    MaskSequence::new(width, height, all)
}

#[derive(Clone, Debug)]
pub struct Detection {
    pub probabilities: ProbabilityVolume,
    /// One mask per input frame at processing resolution.
    pub masks: MaskSequence,
    /// Frames whose masks come from their own window.
    pub evaluated_frames: (usize, usize),
}

/// Full detection on a raw video.
pub fn detect(video: &FrameSequence, models: &Models, cfg: &PipelineConfig) -> Result<Detection> {
    cfg.validate()?;
    models.mode(cfg.m)?;
    if video.frame_count() < cfg.m {
        return Err(Error::Invalid(format!(
            "video has {} frames, needs at least m = {}",
            video.frame_count(),
            cfg.m
        )));
    }
    let pre = preprocess(video, cfg)?;
    detect_residual(&pre.residual, models, cfg)
}

pub fn detect_residual(
    res: &FrameSequence,
    models: &Models,
    cfg: &PipelineConfig,
) -> Result<Detection> {
    let (geom, descs) = node_descriptors(res, cfg)?;
    let pv = probability_volume(&geom, &descs, models, cfg)?;
    let masks = render_masks(
        &pv,
        Some(cfg.lambda),
        res.width(),
        res.height(),
        res.frame_count(),
    )?;
    Ok(Detection {
        evaluated_frames: (0, geom.grid_t),
        probabilities: pv,
        masks,
    })
}

/// Fit of a full-length prediction against the truth over the evaluated
/// frames only.
pub fn evaluate_detection(
    pred: &MaskSequence,
    truth: &MaskSequence,
    evaluated: (usize, usize),
) -> Result<DetectionReport> {
    let (start, end) = evaluated;
    let pred = pred.slice(start, end)?;
    let truth = truth.slice(start, end)?;
    DetectionReport::compute(&pred, &truth, start)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Halves every subcategory at random. Odd leftovers alternate between
/// train and test so that the two sides stay balanced.
pub fn stratified_split(manifest: &Manifest, seed: u64) -> Split {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &manifest.videos {
        groups
            .entry(e.category.as_str())
            .or_default()
            .push(e.id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut odd = 0usize;
    for (category, mut ids) in groups {
        if ids.len() < 2 {
            log::warn!(
                "category {} has {} video(s); split is best effort",
                category,
                ids.len()
            );
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let mut k = ids.len() / 2;
        if ids.len() % 2 == 1 {
            if odd.is_multiple_of(2) {
                k += 1;
            }
            odd += 1;
        }
        train.extend(ids[..k].iter().map(|s| s.to_string()));
        test.extend(ids[k..].iter().map(|s| s.to_string()));
    }
    train.sort();
    test.sort();
    Split { train, test }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mode: FusionMode,
    pub regularized: bool,
    pub table: ClassTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub id: String,
    pub label: Label,
    /// Detection fit keyed by `<mode>` or `<mode>+mrf`.
    pub fits: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub split_seed: u64,
    pub config: PipelineConfig,
    pub split: Split,
    pub training_rows: usize,
    pub evaluated_frames: BTreeMap<String, (usize, usize)>,
    pub cells: Vec<Cell>,
    pub videos: Vec<VideoResult>,
}

fn cell_key(mode: FusionMode, regularized: bool) -> String {
    if regularized {
        format!("{}+mrf", mode.as_str())
    } else {
        mode.as_str().to_string()
    }
}

impl ExperimentReport {
    pub fn cell(&self, mode: FusionMode, regularized: bool) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.mode == mode && c.regularized == regularized)
    }

    /// Average detection fit of one cell.
    pub fn average(&self, mode: FusionMode, regularized: bool) -> Option<f64> {
        self.cell(mode, regularized).and_then(|c| c.table.average)
    }

    /// Detection-accuracy table with one column per mode, without and with
    /// regularisation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for regularized in [false, true] {
            let _ = writeln!(
                s,
                "Detection fit (%), {}",
                if regularized {
                    format!("with regularisation (lambda = {})", self.config.lambda)
                } else {
                    "without regularisation".to_string()
                }
            );
            let _ = write!(s, "{:<10}", "");
            for mode in FusionMode::ALL {
                let _ = write!(s, " {:>12}", mode.title());
            }
            s.push('\n');
            for row in 0..3 {
                let name = ["Water", "Non-water", "Average"][row];
                let _ = write!(s, "{:<10}", name);
                for mode in FusionMode::ALL {
                    let v = self
                        .cell(mode, regularized)
                        .and_then(|c| c.table.rows()[row].1);
                    let cell = v.map_or("-".to_string(), |v| format!("{:.1}", eval::percent(v)));
                    let _ = write!(s, " {:>12}", cell);
                }
                s.push('\n');
            }
            s.push('\n');
        }
        s
    }
}

/// Stratified split, training of temporal, spatial and hybrid forests,
/// detection on the test half in all four modes with and without
/// regularisation. Writes models, predicted masks and the report to
/// `out_dir`.
pub fn run_experiment(
    dataset_dir: &Path,
    split_seed: u64,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let manifest = Manifest::load(dataset_dir)?;
    let split = stratified_split(&manifest, split_seed);
    log::info!(
        "split: {} train, {} test videos",
        split.train.len(),
        split.test.len()
    );

    let train_videos = load_labeled_videos(dataset_dir, &manifest, Some(&split.train), cfg)?;
    let ds = sample_training_set(&train_videos, cfg)?;
    drop(train_videos);
    log::info!("sampled {} training rows", ds.len());

    let mut by_set = BTreeMap::new();
    for set in [
        FeatureSet::Temporal,
        FeatureSet::Spatial,
        FeatureSet::Hybrid,
    ] {
        log::info!("training {} forest", set.as_str());
        by_set.insert(set, train_set(&ds, set, cfg)?);
    }
    let models_dir = out_dir.join("models");
    fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    for (set, model) in &by_set {
        forest::save_model(model, &models_dir.join(format!("{}.json", set.as_str())))?;
    }
    let mode_models = |mode: FusionMode| match mode {
        FusionMode::Early => Models::Single(by_set[&FeatureSet::Hybrid].clone()),
        FusionMode::Temporal => Models::Single(by_set[&FeatureSet::Temporal].clone()),
        FusionMode::Spatial => Models::Single(by_set[&FeatureSet::Spatial].clone()),
        FusionMode::Late => Models::Late {
            temporal: by_set[&FeatureSet::Temporal].clone(),
            spatial: by_set[&FeatureSet::Spatial].clone(),
        },
    };
    let all_models: Vec<(FusionMode, Models)> = FusionMode::ALL
        .iter()
        .map(|&m| (m, mode_models(m)))
        .collect();

    let test_videos = load_labeled_videos(dataset_dir, &manifest, Some(&split.test), cfg)?;
    let mut videos = Vec::new();
    let mut evaluated_frames = BTreeMap::new();
    for video in &test_videos {
        let res = &video.residual;
        if res.frame_count() < cfg.m {
            log::warn!(
                "skipping test video {}: shorter than m = {}",
                video.id,
                cfg.m
            );
            continue;
        }
        log::info!("detecting {}", video.id);
        let (geom, descs) = node_descriptors(res, cfg)?;
        let evaluated = (0, geom.grid_t);
        evaluated_frames.insert(video.id.clone(), evaluated);
        let mut fits = BTreeMap::new();
        for (mode, models) in &all_models {
            let pv = probability_volume(&geom, &descs, models, cfg)?;
            for regularized in [false, true] {
                let lambda = regularized.then_some(cfg.lambda);
                let masks =
                    render_masks(&pv, lambda, res.width(), res.height(), res.frame_count())?;
                let report = evaluate_detection(&masks, &video.truth, evaluated)?;
                let key = cell_key(*mode, regularized);
                video_io::save_mask_sequence(
                    &masks,
                    &out_dir.join("masks").join(&key).join(&video.id),
                )?;
                fits.insert(key, report.video_fit);
            }
        }
        videos.push(VideoResult {
            id: video.id.clone(),
            label: video.label,
            fits,
        });
    }

    let mut cells = Vec::new();
    for regularized in [false, true] {
        for mode in FusionMode::ALL {
            let key = cell_key(mode, regularized);
            let scores: Vec<(Label, f64)> =
                videos.iter().map(|v| (v.label, v.fits[&key])).collect();
            cells.push(Cell {
                mode,
                regularized,
                table: eval::per_class_report(&scores),
            });
        }
    }
    let report = ExperimentReport {
        split_seed,
        config: cfg.clone(),
        split,
        training_rows: ds.len(),
        evaluated_frames,
        cells,
        videos,
    };
    write_report(&report, out_dir)?;
    Ok(report)
}

pub fn write_report(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let json = out_dir.join("report.json");
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    fs::write(&json, bytes).map_err(|e| Error::io(&json, e))?;
    let txt = out_dir.join("report.txt");
    fs::write(&txt, report.to_text()).map_err(|e| Error::io(&txt, e))
}
