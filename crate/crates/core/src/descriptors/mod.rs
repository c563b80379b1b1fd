//! Local descriptors of residual video volumes and their fusion.

pub mod lbp;
pub mod shift_distance;
pub mod temporal;

pub use lbp::{
    accumulate_lbp, lbp_histogram, lbp_value, lbp_volume_histogram, FrameView, LbpHistogram,
    Region, LBP_BINS,
};
pub use shift_distance::min_shift_distance;
pub use temporal::{
    extract_signal, patch_trace, temporal_descriptor, FourierDescriber, Signal, TemporalDescriptor,
};

use crate::error::{Error, Result};

/// Temporal bins followed by the 256 LBP bins.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridDescriptor {
    pub values: Vec<f64>,
}

pub fn fuse_early(td: &TemporalDescriptor, sd: &LbpHistogram) -> HybridDescriptor {
    let mut values = Vec::with_capacity(td.bins.len() + sd.bins.len());
    values.extend_from_slice(&td.bins);
    values.extend_from_slice(&sd.bins);
    HybridDescriptor { values }
}

/// Mean of the two per-descriptor water probabilities.
pub fn fuse_late(p_temporal: f64, p_spatial: f64) -> Result<f64> {
    for p in [p_temporal, p_spatial] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Invalid(format!("probability {} outside [0, 1]", p)));
        }
    }
    Ok((p_temporal + p_spatial) / 2.0)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
