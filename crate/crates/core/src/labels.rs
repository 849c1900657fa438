//! Human label files.
//!
//! Binary sets are `image_id,label` with one row per judgment (an image may
//! repeat). Spectrum sets are `image_id,votes_real,raters`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Human judgments for one image: `votes_real` of `raters` said "real".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub image_id: String,
    pub votes_real: u32,
    pub raters: u32,
}

impl LabelRecord {
    pub fn binary(image_id: impl Into<String>, real: bool) -> Self {
        Self {
            image_id: image_id.into(),
            votes_real: u32::from(real),
            raters: 1,
        }
    }

    pub fn spectrum(image_id: impl Into<String>, votes_real: u32, raters: u32) -> Result<Self> {
        if raters == 0 || votes_real > raters {
            return Err(Error::Parse(format!(
                "invalid vote count {votes_real}/{raters}"
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            votes_real,
            raters,
        })
    }

    /// Fraction of raters who judged the image real.
    pub fn score(&self) -> f64 {
        f64::from(self.votes_real) / f64::from(self.raters)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Binary,
    Spectrum,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub kind: LabelKind,
    pub records: Vec<LabelRecord>,
}

impl LabelSet {
    pub fn new(kind: LabelKind, records: Vec<LabelRecord>) -> Self {
        Self { kind, records }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.kind {
            LabelKind::Binary => {
                out.push_str("image_id,label\n");
                for r in &self.records {
                    out.push_str(&format!("{},{}\n", r.image_id, r.votes_real));
                }
            }
            LabelKind::Spectrum => {
                out.push_str("image_id,votes_real,raters\n");
                for r in &self.records {
                    out.push_str(&format!("{},{},{}\n", r.image_id, r.votes_real, r.raters));
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        let kind = match cols.as_slice() {
            ["image_id", "label"] => LabelKind::Binary,
            ["image_id", "votes_real", "raters"] => LabelKind::Spectrum,
            _ => {
                return Err(Error::Parse(format!(
                    "label header must be image_id,label or image_id,votes_real,raters; got {:?}",
                    cols.join(",")
                )))
            }
        };
        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let line = i + 2;
            let num = |k: usize| -> Result<u32> {
                rec[k].trim().parse().map_err(|_| {
                    Error::Parse(format!("label row {line}: bad integer {:?}", &rec[k]))
                })
            };
            let id = rec[0].trim();
            if id.is_empty() {
                return Err(Error::Parse(format!("label row {line}: empty image id")));
            }
            records.push(match kind {
                LabelKind::Binary => match num(1)? {
                    0 => LabelRecord::binary(id, false),
                    1 => LabelRecord::binary(id, true),
                    other => {
                        return Err(Error::Parse(format!(
                            "label row {line}: label {other} is not 0 or 1"
                        )))
                    }
                },
                LabelKind::Spectrum => LabelRecord::spectrum(id, num(1)?, num(2)?)
                    .map_err(|e| Error::Parse(format!("label row {line}: {e}")))?,
            });
        }
        if records.is_empty() {
            return Err(Error::Empty("label file has no rows".into()));
        }
        Ok(Self { kind, records })
    }

    /// Distinct image ids in first-appearance order.
    pub fn image_ids(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.image_id.as_str()))
            .map(|r| r.image_id.as_str())
            .collect()
    }

    /// Per-image (image id, votes_real, raters) totals in first-appearance order.
    pub fn per_image(&self) -> Vec<(String, u32, u32)> {
        let mut order: Vec<(String, u32, u32)> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for r in &self.records {
            let i = *index.entry(r.image_id.clone()).or_insert_with(|| {
                order.push((r.image_id.clone(), 0, 0));
                order.len() - 1
            });
            order[i].1 += r.votes_real;
            order[i].2 += r.raters;
        }
        order
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LabelSet::from_csv(&text)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, labels.to_csv()).map_err(|e| Error::io(path, e))
}
