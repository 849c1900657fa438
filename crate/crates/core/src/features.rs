//! Nearest-neighbor distance features.
//!
//! For one layer, each spatial location's channel vector is compared with the
//! layer's reference pool and the Euclidean distance to its nearest pool
//! vector is taken. The per-location distances are summed in row-major
//! (u, v) order to one number per layer; the layers together form the
//! image's feature vector.
//!
//! Storage is f32, arithmetic is f64. The inner loop keeps squared distances
//! and takes one square root per location, which gives the same value as the
//! minimum of the square roots since `sqrt` is monotone and correctly rounded.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::format_sig9;
use crate::pool::ReferencePool;
use crate::tensor_io::{ActivationBundle, ActivationTensor};

/// How per-location distances are combined into one layer value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::Config(format!("unknown aggregation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub image_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(image_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            image_id: image_id.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[inline]
fn squared_distance(query: &[f64], candidate: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (q, p) in query.iter().zip(candidate) {
        let d = q - f64::from(*p);
        acc += d * d;
    }
    acc
}

/// Smallest squared distance from `query` to any `channels`-sized chunk of `flat`.
fn min_squared_distance(query: &[f64], flat: &[f32], channels: usize) -> f64 {
    flat.chunks_exact(channels)
        .map(|p| squared_distance(query, p))
        .fold(f64::INFINITY, f64::min)
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Exact Euclidean distance from `query` to its nearest vector in `pool`.
///
/// For a location-matched pool this scans every stored vector regardless of
/// origin; use [`layer_feature`] for location-restricted queries.
pub fn nn_distance(query: &[f32], pool: &ReferencePool) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::Empty("reference pool".into()));
    }
    if query.len() != pool.channels() {
        return Err(Error::DimensionMismatch {
            expected: pool.channels(),
            found: query.len(),
        });
    }
    Ok(min_squared_distance(&widen(query), pool.flat(), pool.channels()).sqrt())
}

/// Per-location nearest-neighbor distances in row-major (u, v) order.
pub fn location_distances(tensor: &ActivationTensor, pool: &ReferencePool) -> Result<Vec<f64>> {
    let c = tensor.channels();
    if c != pool.channels() {
        return Err(Error::DimensionMismatch {
            expected: pool.channels(),
            found: c,
        });
    }
    if pool.is_empty() {
        return Err(Error::Empty("reference pool".into()));
    }
    if let Some(g) = pool.grid() {
        if (g.width, g.height) != (tensor.width(), tensor.height()) {
            return Err(Error::Shape(format!(
                "tensor grid {}x{} does not match location-matched pool grid {}x{}",
                tensor.width(),
                tensor.height(),
                g.width,
                g.height
            )));
        }
    }
    let h = tensor.height();
    (0..tensor.locations())
        .into_par_iter()
        .with_min_len(8)
        .map(|loc| {
            let (u, v) = (loc / h, loc % h);
            let candidates = pool.candidates_at(u, v)?;
            let q = widen(tensor.at(u, v));
            Ok(min_squared_distance(&q, candidates, c).sqrt())
        })
        .collect()
}

/// Sum over all spatial locations of the nearest-neighbor distance.
pub fn layer_feature(tensor: &ActivationTensor, pool: &ReferencePool) -> Result<f64> {
    layer_feature_with(tensor, pool, Aggregation::Sum)
}

pub fn layer_feature_with(
    tensor: &ActivationTensor,
    pool: &ReferencePool,
    aggregation: Aggregation,
) -> Result<f64> {
    let distances = location_distances(tensor, pool)?;
    // sequential sum keeps the result independent of thread count
    let total: f64 = distances.iter().sum();
    Ok(match aggregation {
        Aggregation::Sum => total,
        Aggregation::Mean => total / distances.len() as f64,
    })
}

/// One aggregated distance per layer, in pool order.
pub fn featurize(bundle: &ActivationBundle, pools: &[ReferencePool]) -> Result<FeatureVector> {
    featurize_with(bundle, pools, Aggregation::Sum)
}

pub fn featurize_with(
    bundle: &ActivationBundle,
    pools: &[ReferencePool],
    aggregation: Aggregation,
) -> Result<FeatureVector> {
    let tensors = bundle.tensors();
    if tensors.len() != pools.len() {
        return Err(Error::LayerMismatch(format!(
            "bundle {:?} has {} layers, {} pools given",
            bundle.image_id(),
            tensors.len(),
            pools.len()
        )));
    }
    let values = tensors
        .iter()
        .zip(pools)
        .map(|(t, p)| {
            if t.layer_name() != p.layer_name() {
                return Err(Error::LayerMismatch(format!(
                    "bundle layer {:?} paired with pool {:?}",
                    t.layer_name(),
                    p.layer_name()
                )));
            }
            layer_feature_with(t, p, aggregation)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureVector::new(bundle.image_id(), values))
}

/// Feature vectors for a set of images sharing one layer list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub layers: Vec<String>,
    pub rows: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn new(layers: Vec<String>) -> Self {
        Self {
            layers,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: FeatureVector) -> Result<()> {
        if row.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layers.len(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Option<&FeatureVector> {
        self.rows.iter().find(|r| r.image_id == image_id)
    }

    /// Image id to row index.
    pub fn index(&self) -> std::collections::HashMap<&str, usize> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.as_str(), i))
            .collect()
    }

    /// Concatenate rows from tables with identical layer lists.
    pub fn merge(tables: Vec<FeatureTable>) -> Result<FeatureTable> {
        let mut iter = tables.into_iter();
        let mut out = iter
            .next()
            .ok_or_else(|| Error::Empty("no feature tables".into()))?;
        for t in iter {
            if t.layers != out.layers {
                return Err(Error::LayerMismatch(format!(
                    "{:?} vs {:?}",
                    t.layers, out.layers
                )));
            }
            out.rows.extend(t.rows);
        }
        let mut seen = std::collections::HashSet::new();
        for r in &out.rows {
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::IdMismatch(format!(
                    "image {:?} appears twice in features",
                    r.image_id
                )));
            }
        }
        Ok(out)
    }

    /// CSV with header `image_id,<layers>`, values to 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id");
        for l in &self.layers {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.image_id);
            for v in &r.values {
                out.push(',');
                out.push_str(&format_sig9(*v));
            }
            out.push('\n');
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
        if header.get(0) != Some("image_id") || header.len() < 2 {
            return Err(Error::Parse(
                "feature header must be image_id,<layer>...".into(),
            ));
        }
        let mut table = FeatureTable::new(header.iter().skip(1).map(str::to_string).collect());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let values = rec
                .iter()
                .skip(1)
                .map(|s| {
                    let v: f64 = s.trim().parse().map_err(|_| {
                        Error::Parse(format!("feature row {}: bad number {s:?}", line + 2))
                    })?;
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::Parse(format!(
                            "feature row {}: invalid distance {s:?}",
                            line + 2
                        )));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<_>>>()?;
            table.push(FeatureVector::new(&rec[0], values))?;
        }
        Ok(table)
    }
}

pub fn write_features(path: impl AsRef<Path>, table: &FeatureTable) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FeatureTable::from_csv(&text)
}
