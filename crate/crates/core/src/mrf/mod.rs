//! Spatio-temporal binary Potts regularisation of water probabilities.
//!
//! Nodes sit on a `grid_t × grid_h × grid_w` lattice. Each node pays
//! `1 − P` for a water label and `P` otherwise; each pair of 6-neighbours
//! (4 in-frame, 2 across consecutive frames) with different labels pays
//! `λ`. The energy is submodular, so one s-t minimum cut gives the exact
//! optimum.

pub mod maxflow;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::MaskSequence;
use maxflow::FlowGraph;

/// Unary probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub grid_w: usize,
    pub grid_h: usize,
    pub grid_t: usize,
    /// Pixels between neighbouring nodes.
    pub stride: usize,
    /// Pixel position of node (0, 0).
    pub origin: (usize, usize),
}

impl GridGeometry {
    pub fn node_count(&self) -> usize {
        self.grid_w * self.grid_h * self.grid_t
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize) -> usize {
        (t * self.grid_h + y) * self.grid_w + x
    }

    /// Forward neighbour pairs: +x, +y, +t.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (w, h, tt) = (self.grid_w, self.grid_h, self.grid_t);
        (0..tt).flat_map(move |t| {
            (0..h).flat_map(move |y| {
                (0..w).flat_map(move |x| {
                    let p = self.index(t, y, x);
                    let right = (x + 1 < w).then(|| (p, self.index(t, y, x + 1)));
                    let down = (y + 1 < h).then(|| (p, self.index(t, y + 1, x)));
                    let next = (t + 1 < tt).then(|| (p, self.index(t + 1, y, x)));
                    [right, down, next].into_iter().flatten()
                })
            })
        })
    }
}

/// Water probabilities, t-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    pub geometry: GridGeometry,
    pub probs: Vec<f64>,
}

impl ProbabilityVolume {
    pub fn new(geometry: GridGeometry, probs: Vec<f64>) -> Result<Self> {
        if geometry.node_count() == 0 || geometry.stride == 0 {
            return Err(Error::Invalid("empty probability grid".into()));
        }
        if probs.len() != geometry.node_count() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} grid nodes",
                probs.len(),
                geometry.node_count()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Invalid(format!("probability {} outside [0, 1]", p)));
        }
        Ok(ProbabilityVolume { geometry, probs })
    }

    /// Simple volume with unit stride and zero origin.
    pub fn from_grid(grid_w: usize, grid_h: usize, grid_t: usize, probs: Vec<f64>) -> Result<Self> {
        ProbabilityVolume::new(
            GridGeometry {
                grid_w,
                grid_h,
                grid_t,
                stride: 1,
                origin: (0, 0),
            },
            probs,
        )
    }

    /// Debug dump: one JSON header line, then little-endian f64 values.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut out = serde_json::to_vec(&DumpHeader {
            dtype: "f64le".into(),
            geometry: self.geometry.clone(),
        })?;
        out.push(b'\n');
        for p in &self.probs {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        let header: DumpHeader = serde_json::from_str(line.trim_end())?;
        if header.dtype != "f64le" {
            return Err(Error::format(
                path,
                format!("unsupported dtype {}", header.dtype),
            ));
        }
        let mut raw = Vec::new();
        reader
            .read_to_end(&mut raw)
            .map_err(|e| Error::io(path, e))?;
        if raw.len() != header.geometry.node_count() * 8 {
            return Err(Error::format(path, "payload size does not match header"));
        }
        let probs = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        ProbabilityVolume::new(header.geometry, probs)
    }
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    dtype: String,
    geometry: GridGeometry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    pub geometry: GridGeometry,
    /// 1 = water, 0 = non-water.
    pub labels: Vec<u8>,
}

impl LabelVolume {
    pub fn disagreeing_pairs(&self) -> usize {
        self.geometry
            .edges()
            .filter(|&(p, q)| self.labels[p] != self.labels[q])
            .count()
    }
}

fn same_grid(a: &GridGeometry, b: &GridGeometry) -> Result<()> {
    if (a.grid_w, a.grid_h, a.grid_t) != (b.grid_w, b.grid_h, b.grid_t) {
        return Err(Error::Dimension(format!(
            "grid {}x{}x{} vs {}x{}x{}",
            a.grid_w, a.grid_h, a.grid_t, b.grid_w, b.grid_h, b.grid_t
        )));
    }
    Ok(())
}

pub fn energy(pv: &ProbabilityVolume, lv: &LabelVolume, lambda: f64) -> Result<f64> {
    same_grid(&pv.geometry, &lv.geometry)?;
    if lv.labels.len() != pv.probs.len() {
        return Err(Error::Dimension(
            "label count differs from probability count".into(),
        ));
    }
    let unary: f64 = pv
        .probs
        .iter()
        .zip(&lv.labels)
        .map(|(&p, &l)| if l == 1 { 1.0 - p } else { p })
        .sum();
    let cuts = lv.disagreeing_pairs();
    Ok(unary + lambda * cuts as f64)
}

/// Exact minimiser of [`energy`] via one minimum cut.
///
/// Among equally good labelings, the one with the fewest water nodes that the
/// residual graph admits is returned: a node is water iff it is reachable from
/// the source after max-flow. With `λ = 0` this is `P > 0.5`.
pub fn regularize(pv: &ProbabilityVolume, lambda: f64) -> Result<LabelVolume> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!(
            "lambda must be >= 0, got {}",
            lambda
        )));
    }
    let n = pv.probs.len();
    let (source, sink) = (n, n + 1);
    let mut g = FlowGraph::new(n + 2);
    for (p, &prob) in pv.probs.iter().enumerate() {
        let prob = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        // Cutting source->p labels p non-water (cost P); cutting p->sink
        // labels it water (cost 1 − P). Only the difference matters.
        let diff = prob - (1.0 - prob);
        if diff > 0.0 {
            g.add_edge(source, p, diff, 0.0);
        } else if diff < 0.0 {
            g.add_edge(p, sink, -diff, 0.0);
        }
    }
    if lambda > 0.0 {
        for (p, q) in pv.geometry.edges() {
            g.add_edge(p, q, lambda, lambda);
        }
    }
    g.max_flow(source, sink);
    let side = g.source_side(source);
    Ok(LabelVolume {
        geometry: pv.geometry.clone(),
        labels: side[..n].iter().map(|&s| s as u8).collect(),
    })
}

/// Independent per-node decision, `P > 0.5` is water.
pub fn threshold(pv: &ProbabilityVolume) -> LabelVolume {
    LabelVolume {
        geometry: pv.geometry.clone(),
        labels: pv.probs.iter().map(|&p| (p > 0.5) as u8).collect(),
    }
}

fn nearest_node(coord: usize, origin: usize, stride: usize, count: usize) -> usize {
    if coord <= origin {
        return 0;
    }
    let off = coord - origin;
    let (k, r) = (off / stride, off % stride);
    let k = if 2 * r > stride { k + 1 } else { k };
    k.min(count - 1)
}

/// Paints each pixel with the label of its nearest grid node, ties towards
/// the smaller coordinate. One mask per grid frame.
pub fn labels_to_masks(lv: &LabelVolume, frame_w: usize, frame_h: usize) -> Result<MaskSequence> {
    let g = &lv.geometry;
    if g.origin.0 + (g.grid_w - 1) * g.stride >= frame_w
        || g.origin.1 + (g.grid_h - 1) * g.stride >= frame_h
    {
        return Err(Error::Dimension(format!(
            "grid {}x{} (stride {}, origin {:?}) does not fit a {}x{} frame",
            g.grid_w, g.grid_h, g.stride, g.origin, frame_w, frame_h
        )));
    }
    let xs: Vec<usize> = (0..frame_w)
        .map(|x| nearest_node(x, g.origin.0, g.stride, g.grid_w))
        .collect();
    let ys: Vec<usize> = (0..frame_h)
        .map(|y| nearest_node(y, g.origin.1, g.stride, g.grid_h))
        .collect();
    let masks = (0..g.grid_t)
        .map(|t| {
            let mut m = Vec::with_capacity(frame_w * frame_h);
            for &gy in &ys {
                m.extend(xs.iter().map(|&gx| lv.labels[g.index(t, gy, gx)]));
            }
            m
        })
        .collect();
    MaskSequence::new(frame_w, frame_h, masks)
}
