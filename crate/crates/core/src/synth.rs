//! Synthetic labeled videos for training and end-to-end checks.
//!
//! Water is a static base (colour gradient plus a reflection pattern) with
//! superposed travelling sinusoids: smooth, repetitive and regular in time.
//! The non-water kinds each break one of those properties: a waving flag
//! drifts aperiodically, noise is temporally white, a static scene does not
//! move, and flicker jumps globally between brightness levels.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::{self, FrameSequence, MaskSequence};
use crate::Label;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaterParams {
    pub waves: usize,
    /// Temporal frequency in cycles per frame.
    pub frequency_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    /// Spatial wavelength in pixels.
    pub wavelength_range: (f64, f64),
    /// Main travel direction in radians.
    pub direction: f64,
    /// Maximum deviation of each wave from `direction`.
    pub direction_spread: f64,
    /// Peak brightness of the static reflection streaks.
    pub reflection_strength: f64,
}

impl Default for WaterParams {
    fn default() -> Self {
        WaterParams {
            waves: 8,
            frequency_range: (0.01, 0.2),
            amplitude_range: (4.0, 12.0),
            wavelength_range: (40.0, 160.0),
            direction: 0.5,
            direction_spread: 0.8,
            reflection_strength: 40.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonWaterKind {
    #[default]
    Flag,
    Noise,
    Static,
    Flicker,
}

impl NonWaterKind {
    pub const ALL: [NonWaterKind; 4] = [
        NonWaterKind::Flag,
        NonWaterKind::Noise,
        NonWaterKind::Static,
        NonWaterKind::Flicker,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NonWaterKind::Flag => "flag",
            NonWaterKind::Noise => "noise",
            NonWaterKind::Static => "static",
            NonWaterKind::Flicker => "flicker",
        }
    }
}

impl std::str::FromStr for NonWaterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NonWaterKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown non-water kind {:?}", s)))
    }
}

/// Water region of a water video. Rectangle edges are fractions of the frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskGeometry {
    #[default]
    Full,
    /// Right half is water.
    Half,
    Rect {
        left: f64,
        top: f64,
        right: f64,
        bottom: f64,
    },
}

impl MaskGeometry {
    fn contains(&self, x: usize, y: usize, w: usize, h: usize) -> bool {
        match *self {
            MaskGeometry::Full => true,
            MaskGeometry::Half => x >= w / 2,
            MaskGeometry::Rect {
                left,
                top,
                right,
                bottom,
            } => {
                let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
                fx >= left && fx < right && fy >= top && fy < bottom
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub water: WaterParams,
    /// Texture of non-water videos, and of the area outside the mask in
    /// mixed water videos.
    pub nonwater_kind: NonWaterKind,
    pub mask: MaskGeometry,
    /// Gaussian camera noise added to every moving texture. Static scenes
    /// stay exactly constant.
    pub sensor_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 160,
            height: 120,
            frames: 260,
            seed: 0,
            water: WaterParams::default(),
            nonwater_kind: NonWaterKind::Flag,
            mask: MaskGeometry::Full,
            sensor_noise: 1.5,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.width < 20 || self.height < 20 {
            return Err(Error::Invalid(format!(
                "synthetic videos need at least 20x20 pixels, got {}x{}",
                self.width, self.height
            )));
        }
        if self.frames < 2 {
            return Err(Error::Invalid(
                "synthetic videos need at least 2 frames".into(),
            ));
        }
        let w = &self.water;
        let ordered = |r: (f64, f64)| r.0 <= r.1 && r.0 >= 0.0;
        if !(self.sensor_noise >= 0.0 && self.sensor_noise.is_finite()) {
            return Err(Error::Invalid(
                "sensor noise must be finite and >= 0".into(),
            ));
        }
        if !ordered(w.frequency_range)
            || !ordered(w.amplitude_range)
            || !ordered(w.wavelength_range)
            || w.wavelength_range.0 <= 0.0
        {
            return Err(Error::Invalid(
                "water parameter ranges must be ordered and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Intensity field generator evaluated frame by frame.
trait Texture {
    fn render(&mut self, t: usize, out: &mut [f64]);

    /// Whether camera noise applies.
    fn moving(&self) -> bool {
        true
    }
}

fn base_field(rng: &mut ChaCha8Rng, w: usize, h: usize, reflection: f64) -> Vec<f64> {
    let colour = rng.gen_range(70.0..150.0);
    let grad = rng.gen_range(-30.0..30.0);
    let period = rng.gen_range(12.0..40.0);
    let phase = rng.gen_range(0.0..TAU);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let streak = ((TAU * x as f64 / period + phase).sin() - 0.3).max(0.0) / 0.7;
            out.push(colour + grad * y as f64 / h as f64 + reflection * streak);
        }
    }
    out
}

/// Static random texture: a few low-frequency gratings.
fn static_texture(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<f64> {
    let mut out = base_field(rng, w, h, 0.0);
    for _ in 0..4 {
        let amp = rng.gen_range(5.0..25.0);
        let theta = rng.gen_range(0.0..TAU);
        let lambda = rng.gen_range(6.0..30.0);
        let phase = rng.gen_range(0.0..TAU);
        let (kx, ky) = (theta.cos() * TAU / lambda, theta.sin() * TAU / lambda);
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] += amp * (kx * x as f64 + ky * y as f64 + phase).sin();
            }
        }
    }
    out
}

struct Wave {
    amp: f64,
    freq: f64,
    /// sin/cos of the spatial phase per pixel.
    sin_s: Vec<f64>,
    cos_s: Vec<f64>,
}

struct WaterTexture {
    base: Vec<f64>,
    waves: Vec<Wave>,
}

impl WaterTexture {
    fn new(p: &WaterParams, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Self {
        let base = base_field(rng, w, h, p.reflection_strength);
        let waves = (0..p.waves)
            .map(|_| {
                let amp = sample_range(rng, p.amplitude_range);
                let freq = sample_range(rng, p.frequency_range);
                let lambda = sample_range(rng, p.wavelength_range);
                let theta = p.direction + rng.gen_range(-1.0..=1.0) * p.direction_spread;
                let phase0 = rng.gen_range(0.0..TAU);
                let (kx, ky) = (theta.cos() * TAU / lambda, theta.sin() * TAU / lambda);
                let mut sin_s = Vec::with_capacity(w * h);
                let mut cos_s = Vec::with_capacity(w * h);
                for y in 0..h {
                    for x in 0..w {
                        let s = phase0 - (kx * x as f64 + ky * y as f64);
                        sin_s.push(s.sin());
                        cos_s.push(s.cos());
                    }
                }
                Wave {
                    amp,
                    freq,
                    sin_s,
                    cos_s,
                }
            })
            .collect();
        WaterTexture { base, waves }
    }
}

impl Texture for WaterTexture {
    fn render(&mut self, t: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.base);
        for wave in &self.waves {
            // sin(2π f t + s) = sin(2π f t)·cos s + cos(2π f t)·sin s
            let a = TAU * wave.freq * t as f64;
            let (st, ct) = (wave.amp * a.sin(), wave.amp * a.cos());
            for ((o, &ss), &cs) in out.iter_mut().zip(&wave.sin_s).zip(&wave.cos_s) {
                *o += st * cs + ct * ss;
            }
        }
    }
}

struct FlagTexture {
    base: Vec<f64>,
    /// Fold coordinate per pixel (radians at zero drift).
    fold: Vec<f64>,
    amp: f64,
    phases: Vec<f64>,
    envelope: Vec<f64>,
}

impl FlagTexture {
    fn new(frames: usize, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Self {
        let base = static_texture(rng, w, h);
        let lambda: f64 = rng.gen_range(40.0..120.0);
        let theta: f64 = rng.gen_range(-0.4..0.4);
        let bend = rng.gen_range(0.5..2.0);
        let (kx, ky) = (theta.cos() * TAU / lambda, theta.sin() * TAU / lambda);
        let fold = (0..h)
            .flat_map(|y| {
                (0..w).map(move |x| {
                    kx * x as f64 + ky * y as f64 + bend * (TAU * y as f64 / h as f64).sin()
                })
            })
            .collect();
        // Phase drifts with an AR(1) velocity: aperiodic, low frequency.
        let jitter = Normal::new(0.0, 0.04).expect("finite sigma");
        let mean_speed = rng.gen_range(0.02..0.12);
        let (mut v, mut phi) = (mean_speed, rng.gen_range(0.0..TAU));
        let mut env: f64 = rng.gen_range(0.6..1.0);
        let mut phases = Vec::with_capacity(frames);
        let mut envelope = Vec::with_capacity(frames);
        for _ in 0..frames {
            phases.push(phi);
            envelope.push(env);
            v = mean_speed + 0.9 * (v - mean_speed) + jitter.sample(rng);
            phi += v;
            env = (env + rng.gen_range(-0.03..0.03)).clamp(0.4, 1.0);
        }
        FlagTexture {
            base,
            fold,
            amp: rng.gen_range(15.0..35.0),
            phases,
            envelope,
        }
    }
}

impl Texture for FlagTexture {
    fn render(&mut self, t: usize, out: &mut [f64]) {
        let (phi, a) = (self.phases[t], self.amp * self.envelope[t]);
        for ((o, &b), &f) in out.iter_mut().zip(&self.base).zip(&self.fold) {
            *o = b + a * (f - phi).sin();
        }
    }
}

struct NoiseTexture {
    base: Vec<f64>,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
}

impl Texture for NoiseTexture {
    fn render(&mut self, _t: usize, out: &mut [f64]) {
        for (o, &b) in out.iter_mut().zip(&self.base) {
            *o = b + self.noise.sample(&mut self.rng);
        }
    }
}

struct StaticTexture {
    base: Vec<f64>,
}

impl Texture for StaticTexture {
    fn render(&mut self, _t: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.base);
    }

    fn moving(&self) -> bool {
        false
    }
}

struct FlickerTexture {
    base: Vec<f64>,
    levels: Vec<f64>,
}

impl FlickerTexture {
    fn new(frames: usize, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Self {
        let base = static_texture(rng, w, h);
        let mut levels = Vec::with_capacity(frames);
        while levels.len() < frames {
            let level = rng.gen_range(-40.0..40.0);
            let hold = rng.gen_range(4..30);
            levels.extend(std::iter::repeat_n(level, hold));
        }
        levels.truncate(frames);
        FlickerTexture { base, levels }
    }
}

impl Texture for FlickerTexture {
    fn render(&mut self, t: usize, out: &mut [f64]) {
        let j = self.levels[t];
        for (o, &b) in out.iter_mut().zip(&self.base) {
            *o = b + j;
        }
    }
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn nonwater_texture(
    kind: NonWaterKind,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Box<dyn Texture> {
    let (w, h) = (cfg.width, cfg.height);
    match kind {
        NonWaterKind::Flag => Box::new(FlagTexture::new(cfg.frames, w, h, rng)),
        NonWaterKind::Noise => Box::new(NoiseTexture {
            base: static_texture(rng, w, h),
            noise: Normal::new(0.0, rng.gen_range(8.0..20.0)).expect("finite sigma"),
            rng: ChaCha8Rng::from_rng(&mut *rng).expect("seeded"),
        }),
        NonWaterKind::Static => Box::new(StaticTexture {
            base: static_texture(rng, w, h),
        }),
        NonWaterKind::Flicker => Box::new(FlickerTexture::new(cfg.frames, w, h, rng)),
    }
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn render(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    inside: &mut dyn Texture,
    mut outside: Option<(&mut dyn Texture, &[u8])>,
) -> Result<FrameSequence> {
    let n = cfg.width * cfg.height;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let noise = Normal::new(0.0, cfg.sensor_noise).expect("validated sigma");
    let mut noise_rng = ChaCha8Rng::from_rng(rng).expect("seeded");
    let noisy_in = inside.moving() && cfg.sensor_noise > 0.0;
    let noisy_out = outside.as_ref().is_some_and(|(t, _)| t.moving()) && cfg.sensor_noise > 0.0;
    let mut frames = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        inside.render(t, &mut a);
        let mut frame = Vec::with_capacity(n);
        match outside.as_mut() {
            Some((tex, mask)) => {
                tex.render(t, &mut b);
                for ((&w, &o), &m) in a.iter().zip(&b).zip(mask.iter()) {
                    let (v, noisy) = if m == 1 {
                        (w, noisy_in)
                    } else {
                        (o, noisy_out)
                    };
                    let e = if noisy {
                        noise.sample(&mut noise_rng)
                    } else {
                        0.0
                    };
                    frame.push(quantize(v + e));
                }
            }
            None => {
                for &v in &a {
                    let e = if noisy_in {
                        noise.sample(&mut noise_rng)
                    } else {
                        0.0
                    };
                    frame.push(quantize(v + e));
                }
            }
        }
        frames.push(frame);
    }
    FrameSequence::new(cfg.width, cfg.height, frames)
}

/// Water inside `cfg.mask`, `cfg.nonwater_kind` texture outside it.
pub fn generate_water(cfg: &SynthConfig) -> Result<(FrameSequence, MaskSequence)> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mask: Vec<u8> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| cfg.mask.contains(x, y, w, h) as u8)
        .collect();
    let mut water = WaterTexture::new(&cfg.water, w, h, &mut rng);
    let frames = if mask.iter().all(|&m| m == 1) {
        render(cfg, &mut rng, &mut water, None)?
    } else {
        let mut outside = nonwater_texture(cfg.nonwater_kind, cfg, &mut rng);
        render(cfg, &mut rng, &mut water, Some((outside.as_mut(), &mask)))?
    };
    Ok((frames, MaskSequence::new(w, h, vec![mask])?))
}

pub fn generate_nonwater(cfg: &SynthConfig) -> Result<(FrameSequence, MaskSequence)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tex = nonwater_texture(cfg.nonwater_kind, cfg, &mut rng);
    let frames = render(cfg, &mut rng, tex.as_mut(), None)?;
    Ok((frames, MaskSequence::constant(cfg.width, cfg.height, false)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Label,
    /// `<label>/<subcategory>`, used for stratified splits.
    pub category: String,
    pub params: SynthConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub videos: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_slice(&bytes)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Invalid(format!(
                "manifest version {} unsupported",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }
}

/// Water subcategories: name, mask geometry, texture outside the mask,
/// water parameter overrides.
fn water_variant(
    i: usize,
    template: &WaterParams,
) -> (&'static str, MaskGeometry, NonWaterKind, WaterParams) {
    let mut p = template.clone();
    match i % 4 {
        0 => ("waves", MaskGeometry::Full, NonWaterKind::Flag, p),
        1 => {
            p.amplitude_range = (p.amplitude_range.0 * 0.5, p.amplitude_range.1 * 0.6);
            p.wavelength_range = (p.wavelength_range.0, p.wavelength_range.1 * 0.6);
            p.waves += 1;
            ("ripples", MaskGeometry::Full, NonWaterKind::Flag, p)
        }
        2 => ("shore", MaskGeometry::Half, NonWaterKind::Flag, p),
        _ => ("canal", MaskGeometry::Half, NonWaterKind::Static, p),
    }
}

fn video_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng.gen()
}

/// Writes `n_per_class` water and non-water videos plus `manifest.json`.
///
/// Water videos cycle through full-frame waves and ripples and half-frame
/// shore/canal scenes; non-water videos cycle through the four kinds.
pub fn generate_dataset(
    out: &Path,
    n_per_class: usize,
    template: &SynthConfig,
    seed: u64,
) -> Result<Manifest> {
    if n_per_class == 0 {
        return Err(Error::Invalid("need at least one video per class".into()));
    }
    template.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut videos = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        let (sub, mask, outside, water) = water_variant(i, &template.water);
        let params = SynthConfig {
            seed: video_seed(seed, 2 * i),
            water,
            nonwater_kind: outside,
            mask,
            ..template.clone()
        };
        videos.push(ManifestEntry {
            id: format!("water_{:03}", i),
            label: Label::Water,
            category: format!("water/{}", sub),
            params,
        });
    }
    for i in 0..n_per_class {
        let kind = NonWaterKind::ALL[i % NonWaterKind::ALL.len()];
        let params = SynthConfig {
            seed: video_seed(seed, 2 * i + 1),
            nonwater_kind: kind,
            mask: MaskGeometry::Full,
            ..template.clone()
        };
        videos.push(ManifestEntry {
            id: format!("nonwater_{:03}", i),
            label: Label::NonWater,
            category: format!("nonwater/{}", kind.as_str()),
            params,
        });
    }
    for entry in &videos {
        let (frames, mask) = match entry.label {
            Label::Water => generate_water(&entry.params)?,
            Label::NonWater => generate_nonwater(&entry.params)?,
        };
        let dir = out.join(&entry.id);
        video_io::save_frame_sequence(&frames, &dir)?;
        video_io::save_mask_sequence(&mask, &dir)?;
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed,
        videos,
    };
    manifest.save(out)?;
    Ok(manifest)
}
