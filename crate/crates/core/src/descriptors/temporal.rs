//! Fourier magnitude descriptor of local mean-brightness signals.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::video_io::FrameSequence;

/// Below this ℓ1 mass (after dropping DC) a spectrum counts as empty.
pub const DEGENERATE_L1: f64 = 1e-12;

/// Mean residual brightness of an n×n patch over m consecutive frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub values: Vec<f64>,
    /// (x, y, t0) of the patch centre and first frame.
    pub origin: (usize, usize, usize),
    pub n: usize,
}

impl Signal {
    pub fn m(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalDescriptor {
    pub bins: Vec<f64>,
}

fn check_patch(seq: &FrameSequence, x: usize, y: usize, n: usize) -> Result<usize> {
    if n == 0 || n.is_multiple_of(2) {
        return Err(Error::Invalid(format!("patch side must be odd, got {}", n)));
    }
    let r = n / 2;
    if x < r || y < r || x + r >= seq.width() || y + r >= seq.height() {
        return Err(Error::Invalid(format!(
            "{}x{} patch at ({}, {}) leaves the {}x{} frame",
            n,
            n,
            x,
            y,
            seq.width(),
            seq.height()
        )));
    }
    Ok(r)
}

/// Patch means for every frame of the sequence.
pub fn patch_trace(res: &FrameSequence, x: usize, y: usize, n: usize) -> Result<Vec<f64>> {
    let r = check_patch(res, x, y, n)?;
    let w = res.width();
    let area = (n * n) as f64;
    Ok(res
        .frames()
        .iter()
        .map(|f| {
            let mut sum = 0u32;
            for py in y - r..=y + r {
                sum += f[py * w + x - r..=py * w + x + r]
                    .iter()
                    .map(|&v| v as u32)
                    .sum::<u32>();
            }
            sum as f64 / area
        })
        .collect())
}

pub fn extract_signal(
    res: &FrameSequence,
    x: usize,
    y: usize,
    t0: usize,
    n: usize,
    m: usize,
) -> Result<Signal> {
    if m == 0 || t0 + m > res.frame_count() {
        return Err(Error::Invalid(format!(
            "window [{}, {}) exceeds {} frames",
            t0,
            t0 + m,
            res.frame_count()
        )));
    }
    let trace = patch_trace(res, x, y, n)?;
    Ok(Signal {
        values: trace[t0..t0 + m].to_vec(),
        origin: (x, y, t0),
        n,
    })
}

/// Reusable FFT plan for signals of one length.
#[derive(Clone)]
pub struct FourierDescriber {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierDescriber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierDescriber")
            .field("m", &self.m)
            .finish()
    }
}

impl FourierDescriber {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Invalid(format!(
                "signal length must be >= 2, got {}",
                m
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(m);
        Ok(FourierDescriber { m, fft })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Magnitude spectrum with the DC bin zeroed, ℓ1-normalised.
    ///
    /// Dropping DC is what makes the result independent of a constant
    /// brightness offset. A signal with no energy outside DC maps to the
    /// all-zero descriptor.
    pub fn describe(&self, values: &[f64]) -> Result<TemporalDescriptor> {
        if values.len() != self.m {
            return Err(Error::Dimension(format!(
                "signal has {} samples, describer expects {}",
                values.len(),
                self.m
            )));
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if lo == hi {
            return Ok(TemporalDescriptor {
                bins: vec![0.0; self.m],
            });
        }
        // Centring only changes the DC bin, which is discarded anyway, and
        // keeps large offsets from leaking rounding noise into other bins.
        let mean = values.iter().sum::<f64>() / self.m as f64;
        let mut buf: Vec<Complex<f64>> = values
            .iter()
            .map(|&v| Complex::new(v - mean, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let mut bins: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
        bins[0] = 0.0;
        let total: f64 = bins.iter().sum();
        if total < DEGENERATE_L1 {
            bins.iter_mut().for_each(|b| *b = 0.0);
        } else {
            bins.iter_mut().for_each(|b| *b /= total);
        }
        Ok(TemporalDescriptor { bins })
    }
}

pub fn temporal_descriptor(sig: &Signal) -> Result<TemporalDescriptor> {
    FourierDescriber::new(sig.m())?.describe(&sig.values)
}
