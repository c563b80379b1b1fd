//! Temporal mode frames and residual videos.
//!
//! The dominant intensity of each pixel over time captures static
//! reflections and water colour; subtracting it leaves the moving part.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::{FrameSequence, GrayImage};

/// Densities within this relative distance of the maximum count as tied.
pub const DENSITY_TIE_RTOL: f64 = 1e-12;

/// Bandwidth used when a pixel never changes.
pub const FALLBACK_BANDWIDTH: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl ModeFrame {
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.values.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    /// Fixed bandwidth in intensity units; `None` applies Scott's rule per pixel.
    pub bandwidth: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeVariant {
    #[default]
    Kde,
    Direct,
}

/// Index of the largest value; near-equal maxima resolve to the smallest index.
pub fn argmax_smallest(values: &[f64]) -> usize {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = max - DENSITY_TIE_RTOL * max.abs();
    values
        .iter()
        .position(|&v| v >= floor)
        .expect("non-empty density")
}

fn pixel_histogram(seq: &FrameSequence, idx: usize) -> [u32; 256] {
    let mut counts = [0u32; 256];
    for f in seq.frames() {
        counts[f[idx] as usize] += 1;
    }
    counts
}

/// Most frequent intensity per pixel; ties go to the smallest intensity.
pub fn temporal_mode_direct(seq: &FrameSequence) -> ModeFrame {
    let (w, h) = (seq.width(), seq.height());
    let values = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let counts = pixel_histogram(seq, idx);
            let mut best = 0usize;
            for i in 1..256 {
                if counts[i] > counts[best] {
                    best = i;
                }
            }
            best as u8
        })
        .collect();
    ModeFrame {
        width: w,
        height: h,
        values,
    }
}

/// Scott's rule: sample standard deviation times `t^(-1/5)`.
pub fn scott_bandwidth(history: &[f64]) -> Result<f64> {
    let t = history.len();
    if t < 2 {
        return Err(Error::Invalid(format!(
            "Scott's rule needs at least 2 samples, got {}",
            t
        )));
    }
    let n = t as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return Ok(FALLBACK_BANDWIDTH);
    }
    Ok(sigma * n.powf(-0.2))
}

fn kde_mode_of_counts(counts: &[u32; 256], h: f64) -> u8 {
    // Kernel weights by absolute intensity distance; the Gaussian
    // normalisation constant does not move the argmax.
    let inv = 1.0 / (2.0 * h * h);
    let mut kernel = [0f64; 256];
    for (d, k) in kernel.iter_mut().enumerate() {
        *k = (-((d * d) as f64) * inv).exp();
    }
    let occupied: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(v, &c)| (v, c as f64))
        .collect();
    let mut density = [0f64; 256];
    for (i, d) in density.iter_mut().enumerate() {
        *d = occupied
            .iter()
            .map(|&(v, c)| c * kernel[i.abs_diff(v)])
            .sum();
    }
    argmax_smallest(&density) as u8
}

/// Per-pixel mode of a Gaussian kernel density estimate evaluated on the 256
/// integer intensities.
///
/// The estimate is evaluated through each pixel's intensity histogram, which
/// gives the same grid values as summing one kernel per frame.
pub fn temporal_mode_kde(seq: &FrameSequence, cfg: &KdeConfig) -> Result<ModeFrame> {
    if seq.frame_count() < 2 {
        return Err(Error::Invalid(
            "KDE mode estimation needs at least 2 frames".into(),
        ));
    }
    if let Some(h) = cfg.bandwidth {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Invalid(format!(
                "bandwidth must be positive, got {}",
                h
            )));
        }
    }
    let (w, h) = (seq.width(), seq.height());
    let values = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let counts = pixel_histogram(seq, idx);
            let bw = match cfg.bandwidth {
                Some(bw) => bw,
                None => {
                    let hist: Vec<f64> = seq.frames().iter().map(|f| f[idx] as f64).collect();
                    scott_bandwidth(&hist)?
                }
            };
            Ok(kde_mode_of_counts(&counts, bw))
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(ModeFrame {
        width: w,
        height: h,
        values,
    })
}

pub fn temporal_mode(
    seq: &FrameSequence,
    variant: ModeVariant,
    cfg: &KdeConfig,
) -> Result<ModeFrame> {
    match variant {
        ModeVariant::Kde => temporal_mode_kde(seq, cfg),
        ModeVariant::Direct => Ok(temporal_mode_direct(seq)),
    }
}

/// Absolute difference of every frame with the mode frame.
pub fn residual_video(seq: &FrameSequence, mode: &ModeFrame) -> Result<FrameSequence> {
    if seq.width() != mode.width || seq.height() != mode.height {
        return Err(Error::Dimension(format!(
            "video is {}x{} but mode frame is {}x{}",
            seq.width(),
            seq.height(),
            mode.width,
            mode.height
        )));
    }
    let frames = seq
        .frames()
        .iter()
        .map(|f| {
            f.iter()
                .zip(&mode.values)
                .map(|(&v, &m)| v.abs_diff(m))
                .collect()
        })
        .collect();
    FrameSequence::new(seq.width(), seq.height(), frames)
}
