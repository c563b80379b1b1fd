//! 8-neighbour local binary patterns and their region histograms.

use crate::error::{Error, Result};
use crate::video_io::{FrameSequence, GrayImage};

pub const LBP_BINS: usize = 256;

/// Borrowed view of one grayscale frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameView<'a> {
    pub data: &'a [u8],
    pub width: usize,
    pub height: usize,
}

impl<'a> FrameView<'a> {
    pub fn of_sequence(seq: &'a FrameSequence, t: usize) -> Self {
        FrameView {
            data: seq.frame(t),
            width: seq.width(),
            height: seq.height(),
        }
    }

    pub fn of_image(img: &'a GrayImage) -> Self {
        FrameView {
            data: &img.data,
            width: img.width,
            height: img.height,
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Axis-aligned pixel rectangle with top-left corner `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    /// Square of side `n` centred on `(cx, cy)`.
    pub fn centered(cx: usize, cy: usize, n: usize) -> Option<Region> {
        let r = n / 2;
        Some(Region {
            x: cx.checked_sub(r)?,
            y: cy.checked_sub(r)?,
            width: n,
            height: n,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbpHistogram {
    pub bins: Vec<f64>,
}

/// Neighbours in bit order: east, then counter-clockwise
/// (NE, N, NW, W, SW, S, SE), with y growing downwards.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Bit p is set when neighbour p is at least as bright as the centre.
#[inline]
pub fn lbp_value(center: u8, neighbors: [u8; 8]) -> u8 {
    neighbors
        .iter()
        .enumerate()
        .fold(0u8, |acc, (p, &g)| acc | (((g >= center) as u8) << p))
}

#[inline]
fn lbp_at(frame: &FrameView, x: usize, y: usize) -> u8 {
    let mut nb = [0u8; 8];
    for (slot, (dx, dy)) in nb.iter_mut().zip(NEIGHBOR_OFFSETS) {
        *slot = frame.at((x as isize + dx) as usize, (y as isize + dy) as usize);
    }
    lbp_value(frame.at(x, y), nb)
}

fn check_region(frame: &FrameView, region: &Region) -> Result<()> {
    if region.x + region.width > frame.width || region.y + region.height > frame.height {
        return Err(Error::Invalid(format!(
            "region {:?} exceeds the {}x{} frame",
            region, frame.width, frame.height
        )));
    }
    if region.width < 3 || region.height < 3 {
        return Err(Error::Invalid(format!(
            "region {}x{} has no interior pixels",
            region.width, region.height
        )));
    }
    Ok(())
}

/// Adds the codes of the region's interior (border ring excluded) to `counts`.
pub fn accumulate_lbp(
    frame: &FrameView,
    region: &Region,
    counts: &mut [u32; LBP_BINS],
) -> Result<()> {
    check_region(frame, region)?;
    for y in region.y + 1..region.y + region.height - 1 {
        for x in region.x + 1..region.x + region.width - 1 {
            counts[lbp_at(frame, x, y) as usize] += 1;
        }
    }
    Ok(())
}

pub fn normalize_counts(counts: &[u32; LBP_BINS]) -> LbpHistogram {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    let bins = if total == 0 {
        vec![0.0; LBP_BINS]
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    LbpHistogram { bins }
}

pub fn lbp_histogram(frame: &FrameView, region: &Region) -> Result<LbpHistogram> {
    let mut counts = [0u32; LBP_BINS];
    accumulate_lbp(frame, region, &mut counts)?;
    Ok(normalize_counts(&counts))
}

/// Histogram of the region pooled over frames `[t0, t0 + m)`.
pub fn lbp_volume_histogram(
    res: &FrameSequence,
    region: &Region,
    t0: usize,
    m: usize,
) -> Result<LbpHistogram> {
    if m == 0 || t0 + m > res.frame_count() {
        return Err(Error::Invalid(format!(
            "window [{}, {}) exceeds {} frames",
            t0,
            t0 + m,
            res.frame_count()
        )));
    }
    let mut counts = [0u32; LBP_BINS];
    for t in t0..t0 + m {
        accumulate_lbp(&FrameView::of_sequence(res, t), region, &mut counts)?;
    }
    Ok(normalize_counts(&counts))
}
