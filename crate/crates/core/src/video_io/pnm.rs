//! Minimal binary Netpbm support: P5 (graymap) read/write, P6 (pixmap) read.
//! https://netpbm.sourceforge.net/doc/pgm.html

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A single 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid("image dimensions must be non-zero".into()));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{}x{} image needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// BT.601 luma, rounded to the nearest integer.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::format(path, "missing Netpbm magic number"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format(path, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "header field out of range"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(path, "missing whitespace after maxval")),
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_offset: pos,
    })
}

/// Decodes a P5 or P6 file from memory. Color rasters are converted with [`luma`].
pub fn decode(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let header = parse_header(bytes, path)?;
    let channels = match &header.magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::format(
                path,
                format!(
                    "unsupported Netpbm variant {}",
                    String::from_utf8_lossy(other)
                ),
            ))
        }
    };
    if header.maxval != 255 {
        return Err(Error::format(
            path,
            format!("maxval must be 255, found {}", header.maxval),
        ));
    }
    if header.width == 0 || header.height == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    let expected = header.width * header.height * channels;
    let raster = &bytes[header.data_offset..];
    if raster.len() < expected {
        return Err(Error::format(
            path,
            format!("raster truncated: {} of {} bytes", raster.len(), expected),
        ));
    }
    let data = if channels == 1 {
        raster[..expected].to_vec()
    } else {
        raster[..expected]
            .chunks_exact(3)
            .map(|px| luma(px[0], px[1], px[2]))
            .collect()
    };
    GrayImage::new(header.width, header.height, data)
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_pgm(img))
        .map_err(|e| Error::io(path, e))
}
