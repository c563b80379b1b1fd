//! Water detection in videos.
//!
//! Frames are reduced to residuals against their per-pixel temporal mode,
//! described locally by a shift/offset/amplitude invariant Fourier signature
//! of the patch brightness and by LBP histograms, classified with a random
//! forest, and regularised into binary masks with a spatio-temporal Potts
//! MRF solved exactly by min-cut.

pub mod descriptors;
pub mod error;
pub mod eval;
pub mod forest;
pub mod mrf;
pub mod pipeline;
pub mod residual;
pub mod synth;
pub mod video_io;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    NonWater = 0,
    Water = 1,
}

impl Label {
    pub fn from_bit(bit: u8) -> Label {
        if bit != 0 {
            Label::Water
        } else {
            Label::NonWater
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Water => "water",
            Label::NonWater => "nonwater",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
