use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Label;

/// Where a sample came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub video: String,
    pub x: usize,
    pub y: usize,
    pub t0: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub label: Label,
    pub provenance: Provenance,
}

/// Labeled descriptor rows sharing one length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    rows: Vec<Sample>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn from_rows(rows: Vec<Sample>) -> Result<Self> {
        let mut ds = Dataset::new();
        for r in rows {
            ds.push(r)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if let Some(first) = self.rows.first() {
            if first.values.len() != sample.values.len() {
                return Err(Error::Dimension(format!(
                    "row has {} values, dataset rows have {}",
                    sample.values.len(),
                    first.values.len()
                )));
            }
        }
        self.rows.push(sample);
        Ok(())
    }

    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        for r in other.rows {
            self.push(r)?;
        }
        Ok(())
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn descriptor_len(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }

    /// (non-water, water) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let water = self.rows.iter().filter(|r| r.label == Label::Water).count();
        (self.rows.len() - water, water)
    }

    /// Keeps only the columns in `cols`.
    pub fn project(&self, cols: Range<usize>) -> Result<Dataset> {
        if cols.end > self.descriptor_len() || cols.is_empty() {
            return Err(Error::Dimension(format!(
                "column range {:?} outside descriptor length {}",
                cols,
                self.descriptor_len()
            )));
        }
        Ok(Dataset {
            rows: self
                .rows
                .iter()
                .map(|r| Sample {
                    values: r.values[cols.clone()].to_vec(),
                    label: r.label,
                    provenance: r.provenance.clone(),
                })
                .collect(),
        })
    }

    /// One CSV row per sample: `x, y, t0, label, v0, v1, ...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["x".to_string(), "y".into(), "t0".into(), "label".into()];
        header.extend((0..self.descriptor_len()).map(|i| format!("v{}", i)));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.provenance.x.to_string(),
                r.provenance.y.to_string(),
                r.provenance.t0.to_string(),
                (r.label as u8).to_string(),
            ];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
