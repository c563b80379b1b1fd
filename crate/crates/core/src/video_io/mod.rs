//! Frame sequences and ground-truth masks on disk.
//!
//! A video is a directory of `frame_%06d.pgm` files (binary P5, maxval 255);
//! lexicographic filename order is temporal order. Ground truth is either a
//! static `mask.pgm` or one `mask_%06d.pgm` per frame, stored with values
//! {0, 255} and held in memory as {0, 1}.

pub mod pnm;

use std::fs;
use std::path::{Path, PathBuf};

pub use pnm::GrayImage;

use crate::error::{Error, Result};

/// Ordered grayscale frames of one video. All frames share one size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameSequence {
    width: usize,
    height: usize,
    frames: Vec<Vec<u8>>,
}

impl FrameSequence {
    pub fn new(width: usize, height: usize, frames: Vec<Vec<u8>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid("frame dimensions must be non-zero".into()));
        }
        if frames.is_empty() {
            return Err(Error::Invalid(
                "a frame sequence needs at least one frame".into(),
            ));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.len() != width * height {
                return Err(Error::Dimension(format!(
                    "frame {} has {} samples, expected {}x{}",
                    t,
                    f.len(),
                    width,
                    height
                )));
            }
        }
        Ok(FrameSequence {
            width,
            height,
            frames,
        })
    }

    pub fn from_images(images: Vec<GrayImage>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Invalid("a frame sequence needs at least one frame".into()))?;
        let (w, h) = (first.width, first.height);
        let mut frames = Vec::with_capacity(images.len());
        for (t, img) in images.into_iter().enumerate() {
            if img.width != w || img.height != h {
                return Err(Error::Dimension(format!(
                    "frame {} is {}x{}, expected {}x{}",
                    t, img.width, img.height, w, h
                )));
            }
            frames.push(img.data);
        }
        FrameSequence::new(w, h, frames)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Vec<u8>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        &self.frames[t]
    }

    #[inline]
    pub fn pixel(&self, t: usize, x: usize, y: usize) -> u8 {
        self.frames[t][y * self.width + x]
    }

    pub fn frame_image(&self, t: usize) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.frames[t].clone(),
        }
    }

    /// Intensity history of one pixel across all frames.
    pub fn history(&self, x: usize, y: usize) -> Vec<u8> {
        let idx = y * self.width + x;
        self.frames.iter().map(|f| f[idx]).collect()
    }

    pub fn into_frames(self) -> Vec<Vec<u8>> {
        self.frames
    }
}

/// Binary ground-truth or predicted masks; 0 = non-water, 1 = water.
///
/// A single mask is static and applies to every frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSequence {
    width: usize,
    height: usize,
    masks: Vec<Vec<u8>>,
}

impl MaskSequence {
    pub fn new(width: usize, height: usize, masks: Vec<Vec<u8>>) -> Result<Self> {
        if width == 0 || height == 0 || masks.is_empty() {
            return Err(Error::Invalid("empty mask sequence".into()));
        }
        for (t, m) in masks.iter().enumerate() {
            if m.len() != width * height {
                return Err(Error::Dimension(format!(
                    "mask {} has {} samples, expected {}x{}",
                    t,
                    m.len(),
                    width,
                    height
                )));
            }
            if m.iter().any(|&v| v > 1) {
                return Err(Error::Invalid(format!("mask {} is not binary", t)));
            }
        }
        Ok(MaskSequence {
            width,
            height,
            masks,
        })
    }

    pub fn constant(width: usize, height: usize, value: bool) -> Self {
        MaskSequence {
            width,
            height,
            masks: vec![vec![value as u8; width * height]],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_static(&self) -> bool {
        self.masks.len() == 1
    }

    /// Number of stored masks (1 for a static mask).
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[Vec<u8>] {
        &self.masks
    }

    /// Mask that applies to frame `t`; static masks apply everywhere.
    pub fn for_frame(&self, t: usize) -> &[u8] {
        if self.is_static() {
            &self.masks[0]
        } else {
            &self.masks[t]
        }
    }

    #[inline]
    pub fn get(&self, t: usize, x: usize, y: usize) -> u8 {
        self.for_frame(t)[y * self.width + x]
    }

    /// Keeps frames `[start, end)`; a static mask is returned unchanged.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if self.is_static() {
            return Ok(self.clone());
        }
        if start >= end || end > self.masks.len() {
            return Err(Error::Invalid(format!(
                "mask range {}..{} outside 0..{}",
                start,
                end,
                self.masks.len()
            )));
        }
        MaskSequence::new(self.width, self.height, self.masks[start..end].to_vec())
    }
}

fn sorted_entries(dir: &Path, prefix: &str, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.starts_with(prefix) && exts.iter().any(|ext| name.ends_with(ext)) {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// Loads `frame_*.pgm` (or color `frame_*.ppm`) files from `dir` in
/// lexicographic order, keeping at most `limit` frames.
pub fn load_frame_sequence(dir: &Path, limit: Option<usize>) -> Result<FrameSequence> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut paths = sorted_entries(dir, "frame_", &[".pgm", ".ppm"])?;
    if let Some(limit) = limit {
        paths.truncate(limit);
    }
    if paths.is_empty() {
        return Err(Error::Invalid(format!(
            "no frame_*.pgm files in {}",
            dir.display()
        )));
    }
    let mut images = Vec::with_capacity(paths.len());
    for path in &paths {
        let img = pnm::read_image(path)?;
        if let Some(first) = images.first() {
            let first: &GrayImage = first;
            if first.width != img.width || first.height != img.height {
                return Err(Error::format(
                    path,
                    format!(
                        "frame is {}x{} but the sequence is {}x{}",
                        img.width, img.height, first.width, first.height
                    ),
                ));
            }
        }
        images.push(img);
    }
    FrameSequence::from_images(images)
}

pub fn save_frame_sequence(seq: &FrameSequence, dir: &Path) -> Result<()> {
    save_frames_with_prefix(seq, dir, "frame")
}

pub(crate) fn save_frames_with_prefix(seq: &FrameSequence, dir: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in 0..seq.frame_count() {
        let path = dir.join(format!("{}_{:06}.pgm", prefix, t));
        pnm::write_pgm(&path, &seq.frame_image(t))?;
    }
    Ok(())
}

/// Block means over `factor`×`factor` tiles, clipped at the right and
/// bottom borders, rounded half up.
pub fn downsample_blocks(seq: &FrameSequence, factor: usize) -> Result<FrameSequence> {
    if factor == 0 {
        return Err(Error::Invalid(
            "downsampling factor must be positive".into(),
        ));
    }
    let (w, h) = (seq.width(), seq.height());
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let frames = seq
        .frames()
        .iter()
        .map(|frame| {
            let mut out = vec![0u8; ow * oh];
            for by in 0..oh {
                let y1 = ((by + 1) * factor).min(h);
                for bx in 0..ow {
                    let x1 = ((bx + 1) * factor).min(w);
                    let mut sum = 0u32;
                    for y in by * factor..y1 {
                        let row = &frame[y * w..];
                        sum += row[bx * factor..x1].iter().map(|&v| v as u32).sum::<u32>();
                    }
                    let count = ((y1 - by * factor) * (x1 - bx * factor)) as u32;
                    out[by * ow + bx] = ((sum + count / 2) / count) as u8;
                }
            }
            out
        })
        .collect();
    FrameSequence::new(ow, oh, frames)
}

/// Shrinks a sequence to a quarter of its width and height.
pub fn downsample_quarter(seq: &FrameSequence) -> Result<FrameSequence> {
    if seq.width() < 4 || seq.height() < 4 {
        return Err(Error::Invalid(format!(
            "cannot quarter a {}x{} video",
            seq.width(),
            seq.height()
        )));
    }
    downsample_blocks(seq, 4)
}

fn binary_from_storage(img: GrayImage, path: &Path) -> Result<Vec<u8>> {
    img.data
        .into_iter()
        .map(|v| match v {
            0 => Ok(0),
            255 => Ok(1),
            other => Err(Error::format(
                path,
                format!("mask value {} is neither 0 nor 255", other),
            )),
        })
        .collect()
}

/// Majority vote over `factor`×`factor` blocks; ties go to non-water.
pub fn downsample_mask_blocks(mask: &MaskSequence, factor: usize) -> Result<MaskSequence> {
    if factor == 0 {
        return Err(Error::Invalid(
            "downsampling factor must be positive".into(),
        ));
    }
    let (w, h) = (mask.width(), mask.height());
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let masks = mask
        .masks()
        .iter()
        .map(|m| {
            let mut out = vec![0u8; ow * oh];
            for by in 0..oh {
                let y1 = ((by + 1) * factor).min(h);
                for bx in 0..ow {
                    let x1 = ((bx + 1) * factor).min(w);
                    let mut water = 0usize;
                    for y in by * factor..y1 {
                        water += m[y * w + bx * factor..y * w + x1]
                            .iter()
                            .filter(|&&v| v == 1)
                            .count();
                    }
                    let count = (y1 - by * factor) * (x1 - bx * factor);
                    out[by * ow + bx] = (2 * water > count) as u8;
                }
            }
            out
        })
        .collect();
    MaskSequence::new(ow, oh, masks)
}

/// Brings a mask to `target` dimensions by an integer block factor.
pub fn resize_mask(mask: MaskSequence, target: (usize, usize)) -> Result<MaskSequence> {
    let (w, h) = (mask.width(), mask.height());
    if (w, h) == target {
        return Ok(mask);
    }
    let factor = (2..=w.max(h))
        .find(|&k| w.div_ceil(k) == target.0 && h.div_ceil(k) == target.1)
        .ok_or_else(|| {
            Error::Dimension(format!(
                "{}x{} mask cannot be block-reduced to {}x{}",
                w, h, target.0, target.1
            ))
        })?;
    downsample_mask_blocks(&mask, factor)
}

/// Loads a mask from a single file (static) or from a directory holding
/// `mask.pgm` or `mask_*.pgm`, then reduces it to `target_dims`.
pub fn load_mask_sequence(path: &Path, target_dims: (usize, usize)) -> Result<MaskSequence> {
    let files = if path.is_dir() {
        let single = path.join("mask.pgm");
        if single.is_file() {
            vec![single]
        } else {
            sorted_entries(path, "mask_", &[".pgm"])?
        }
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Invalid(format!(
            "no mask files under {}",
            path.display()
        )));
    }
    let mut masks = Vec::with_capacity(files.len());
    let mut dims = None;
    for file in &files {
        let img = pnm::read_image(file)?;
        let d = (img.width, img.height);
        if *dims.get_or_insert(d) != d {
            return Err(Error::format(
                file,
                "mask dimensions differ within sequence",
            ));
        }
        masks.push(binary_from_storage(img, file)?);
    }
    let (w, h) = dims.expect("at least one mask");
    resize_mask(MaskSequence::new(w, h, masks)?, target_dims)
}

/// Writes `mask.pgm` for a static mask, `mask_%06d.pgm` otherwise.
pub fn save_mask_sequence(mask: &MaskSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: String, m: &[u8]| {
        let img = GrayImage {
            width: mask.width(),
            height: mask.height(),
            data: m.iter().map(|&v| v * 255).collect(),
        };
        pnm::write_pgm(&dir.join(name), &img)
    };
    if mask.is_static() {
        write("mask.pgm".to_string(), &mask.masks()[0])
    } else {
        for (t, m) in mask.masks().iter().enumerate() {
            write(format!("mask_{:06}.pgm", t), m)?;
        }
        Ok(())
    }
}
