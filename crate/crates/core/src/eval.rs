//! Detection fit, classification-by-selection, and per-class tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::MaskSequence;
use crate::Label;

/// `1 − mean |pred − truth|` over the pixels of one frame.
pub fn frame_fit(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Dimension(format!(
            "prediction has {} pixels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(1.0 - wrong as f64 / pred.len() as f64)
}

fn frame_count(pred: &MaskSequence, truth: &MaskSequence) -> Result<usize> {
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    match (pred.is_static(), truth.is_static()) {
        (false, false) if pred.len() != truth.len() => Err(Error::Dimension(format!(
            "{} predicted frames vs {} ground-truth frames",
            pred.len(),
            truth.len()
        ))),
        _ => Ok(pred.len().max(truth.len())),
    }
}

/// Fit of every frame; a static mask on either side applies to all frames.
pub fn per_frame_fits(pred: &MaskSequence, truth: &MaskSequence) -> Result<Vec<f64>> {
    let n = frame_count(pred, truth)?;
    (0..n)
        .map(|t| frame_fit(pred.for_frame(t), truth.for_frame(t)))
        .collect()
}

pub fn detection_fit(pred: &MaskSequence, truth: &MaskSequence) -> Result<f64> {
    let fits = per_frame_fits(pred, truth)?;
    Ok(fits.iter().sum::<f64>() / fits.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// First and one-past-last frame index covered by `per_frame_fit`.
    pub evaluated_frames: (usize, usize),
    pub per_frame_fit: Vec<f64>,
    pub video_fit: f64,
}

impl DetectionReport {
    pub fn compute(pred: &MaskSequence, truth: &MaskSequence, first_frame: usize) -> Result<Self> {
        let per_frame_fit = per_frame_fits(pred, truth)?;
        let video_fit = per_frame_fit.iter().sum::<f64>() / per_frame_fit.len() as f64;
        Ok(DetectionReport {
            evaluated_frames: (first_frame, first_frame + per_frame_fit.len()),
            per_frame_fit,
            video_fit,
        })
    }
}

/// Water iff at least half of the selected pixels are predicted water,
/// pooled over all predicted frames.
pub fn classify_by_selection(pred: &MaskSequence, selection: &[u8]) -> Result<Label> {
    if selection.len() != pred.width() * pred.height() {
        return Err(Error::Dimension(
            "selection and prediction sizes differ".into(),
        ));
    }
    let size = selection.iter().filter(|&&s| s != 0).count();
    if size == 0 {
        return Err(Error::Invalid("empty selection".into()));
    }
    let water: usize = pred
        .masks()
        .iter()
        .map(|m| {
            m.iter()
                .zip(selection)
                .filter(|(&p, &s)| s != 0 && p == 1)
                .count()
        })
        .sum();
    let total = size * pred.len();
    Ok(if 2 * water >= total {
        Label::Water
    } else {
        Label::NonWater
    })
}

/// Percentage rounded half-up to one decimal, immune to float noise.
pub fn percent(x: f64) -> f64 {
    ((x * 1000.0 * 1e6).round() / 1e6).round() / 10.0
}

/// Mean score per class and their unweighted average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTable {
    pub water: Option<f64>,
    pub nonwater: Option<f64>,
    pub average: Option<f64>,
    pub water_count: usize,
    pub nonwater_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ClassTable {
    pub fn rows(&self) -> [(&'static str, Option<f64>); 3] {
        [
            ("Water", self.water),
            ("Non-water", self.nonwater),
            ("Average", self.average),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, v) in self.rows() {
            let cell = v.map_or("-".to_string(), |v| format!("{:.1}", percent(v)));
            let _ = writeln!(s, "{:<10} {:>6}", name, cell);
        }
        s
    }
}

/// Scores are fits or 0/1 correctness, in [0, 1].
pub fn per_class_report(results: &[(Label, f64)]) -> ClassTable {
    let mean_of = |label: Label| {
        let v: Vec<f64> = results
            .iter()
            .filter(|(l, _)| *l == label)
            .map(|&(_, s)| s)
            .collect();
        let mean = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        (mean, v.len())
    };
    let (water, water_count) = mean_of(Label::Water);
    let (nonwater, nonwater_count) = mean_of(Label::NonWater);
    let mut warnings = Vec::new();
    let average = match (water, nonwater) {
        (Some(w), Some(n)) => Some((w + n) / 2.0),
        _ => {
            let missing = if water.is_none() {
                "water"
            } else {
                "non-water"
            };
            let msg = format!("no {} results; average omitted", missing);
            log::warn!("{}", msg);
            warnings.push(msg);
            None
        }
    };
    ClassTable {
        water,
        nonwater,
        average,
        water_count,
        nonwater_count,
        warnings,
    }
}
