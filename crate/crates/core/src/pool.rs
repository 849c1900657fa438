//! Per-layer reference pools of real-image activation vectors.
//!
//! Every spatial location of every contributing image is one candidate
//! vector. A pool keeps a uniform sample of at most `pool_cap` candidates,
//! drawn without replacement by the seeded reservoir in [`crate::sampling`],
//! and stores them in candidate order (image index, u, v).
//!
//! With [`PoolScope::LocationMatched`] each spatial location gets its own
//! reservoir of up to `pool_cap` vectors, and queries at (u, v) only see the
//! vectors taken from (u, v).

use std::borrow::Borrow;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::default_layers;
use crate::sampling::Reservoir;
use crate::tensor_io::{decode_tensor, encode_tensor, ActivationBundle, ActivationTensor};

pub const DEFAULT_POOL_CAP: usize = 10_000;
pub const POOL_MAGIC: &str = "RPOOL1";
pub const POOL_EXTENSION: &str = "pool";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolScope {
    /// One sample per layer shared by all spatial locations.
    #[default]
    Pooled,
    /// One sample per spatial location.
    LocationMatched,
}

impl PoolScope {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolScope::Pooled => "pooled",
            PoolScope::LocationMatched => "location",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(PoolScope::Pooled),
            "location" => Ok(PoolScope::LocationMatched),
            other => Err(Error::Config(format!("unknown pool scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolConfig {
    pub pool_cap: usize,
    pub seed: u64,
    pub layers: Vec<String>,
    pub scope: PoolScope,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            pool_cap: DEFAULT_POOL_CAP,
            seed: 0,
            layers: default_layers(),
            scope: PoolScope::Pooled,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_cap == 0 {
            return Err(Error::Config("pool_cap must be at least 1".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("layer list is empty".into()));
        }
        Ok(())
    }
}

/// Spatial grid of a location-matched pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocationGrid {
    pub width: usize,
    pub height: usize,
    pub per_location: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePool {
    layer_name: String,
    channels: usize,
    vectors: Vec<f32>,
    source_count: u64,
    seed: u64,
    grid: Option<LocationGrid>,
}

impl ReferencePool {
    /// A pooled-scope pool from explicit vectors (flat, `channels` per vector).
    pub fn from_vectors(
        layer_name: impl Into<String>,
        channels: usize,
        vectors: Vec<f32>,
        source_count: u64,
        seed: u64,
    ) -> Result<Self> {
        Self::checked(
            layer_name.into(),
            channels,
            vectors,
            source_count,
            seed,
            None,
        )
    }

    fn checked(
        layer_name: String,
        channels: usize,
        vectors: Vec<f32>,
        source_count: u64,
        seed: u64,
        grid: Option<LocationGrid>,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Shape("pool channels must be positive".into()));
        }
        if vectors.is_empty() {
            return Err(Error::Empty(format!(
                "pool for layer {layer_name:?} has no vectors"
            )));
        }
        if !vectors.len().is_multiple_of(channels) {
            return Err(Error::DimensionMismatch {
                expected: channels,
                found: vectors.len() % channels,
            });
        }
        if let Some(index) = vectors.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(g) = grid {
            if g.width * g.height * g.per_location * channels != vectors.len()
                || g.per_location == 0
            {
                return Err(Error::Shape(
                    "location grid does not match vector count".into(),
                ));
            }
        }
        if layer_name.contains('\n') {
            return Err(Error::Shape("layer name contains a newline".into()));
        }
        Ok(Self {
            layer_name,
            channels,
            vectors,
            source_count,
            seed,
            grid,
        })
    }

    pub fn layer_name(&self) -> &str {
        &self.layer_name
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of stored vectors, K.
    pub fn len(&self) -> usize {
        self.vectors.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn source_count(&self) -> u64 {
        self.source_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scope(&self) -> PoolScope {
        match self.grid {
            Some(_) => PoolScope::LocationMatched,
            None => PoolScope::Pooled,
        }
    }

    pub fn grid(&self) -> Option<LocationGrid> {
        self.grid
    }

    /// All vectors, flattened.
    pub fn flat(&self) -> &[f32] {
        &self.vectors
    }

    pub fn vectors(&self) -> std::slice::ChunksExact<'_, f32> {
        self.vectors.chunks_exact(self.channels)
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.channels..(i + 1) * self.channels]
    }

    /// The flat candidate set a query at (u, v) is compared against.
    pub fn candidates_at(&self, u: usize, v: usize) -> Result<&[f32]> {
        match self.grid {
            None => Ok(&self.vectors),
            Some(g) => {
                if u >= g.width || v >= g.height {
                    return Err(Error::Shape(format!(
                        "location ({u}, {v}) outside pool grid {}x{}",
                        g.width, g.height
                    )));
                }
                let block = g.per_location * self.channels;
                let start = (u * g.height + v) * block;
                Ok(&self.vectors[start..start + block])
            }
        }
    }
}

enum Sampler {
    Pooled(Reservoir<Vec<f32>>),
    Location {
        width: usize,
        height: usize,
        reservoirs: Vec<Reservoir<Vec<f32>>>,
    },
}

/// Incremental pool construction for one layer.
pub struct PoolBuilder {
    layer_name: String,
    cap: usize,
    seed: u64,
    channels: Option<usize>,
    images: u64,
    sampler: Option<Sampler>,
    scope: PoolScope,
}

/// Seed of the reservoir for location `index` in location-matched mode.
fn location_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl PoolBuilder {
    pub fn new(layer_name: impl Into<String>, config: &PoolConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            layer_name: layer_name.into(),
            cap: config.pool_cap,
            seed: config.seed,
            channels: None,
            images: 0,
            sampler: None,
            scope: config.scope,
        })
    }

    pub fn layer_name(&self) -> &str {
        &self.layer_name
    }

    /// Offer every location vector of one image's tensor.
    pub fn push(&mut self, tensor: &ActivationTensor) -> Result<()> {
        let c = tensor.channels();
        match self.channels {
            Some(expected) if expected != c => {
                return Err(Error::DimensionMismatch { expected, found: c });
            }
            _ => self.channels = Some(c),
        }
        let (w, h) = (tensor.width(), tensor.height());
        let sampler = self.sampler.get_or_insert_with(|| match self.scope {
            PoolScope::Pooled => Sampler::Pooled(Reservoir::new(self.cap, self.seed)),
            PoolScope::LocationMatched => Sampler::Location {
                width: w,
                height: h,
                reservoirs: (0..w * h)
                    .map(|i| Reservoir::new(self.cap, location_seed(self.seed, i)))
                    .collect(),
            },
        });
        match sampler {
            Sampler::Pooled(r) => {
                for v in tensor.location_vectors() {
                    r.offer_with(|| v.to_vec());
                }
            }
            Sampler::Location {
                width,
                height,
                reservoirs,
            } => {
                if (*width, *height) != (w, h) {
                    return Err(Error::Shape(format!(
                        "location-matched pool needs a constant grid: {}x{} vs {w}x{h}",
                        width, height
                    )));
                }
                for (r, v) in reservoirs.iter_mut().zip(tensor.location_vectors()) {
                    r.offer_with(|| v.to_vec());
                }
            }
        }
        self.images += 1;
        Ok(())
    }

    pub fn push_bundle(&mut self, bundle: &ActivationBundle) -> Result<()> {
        let tensor = bundle.layer(&self.layer_name).ok_or_else(|| {
            Error::LayerMismatch(format!(
                "bundle {:?} has no layer {:?}",
                bundle.image_id(),
                self.layer_name
            ))
        })?;
        self.push(tensor)
    }

    pub fn finish(self) -> Result<ReferencePool> {
        let (Some(channels), Some(sampler)) = (self.channels, self.sampler) else {
            return Err(Error::Empty(format!(
                "no bundles for layer {:?}",
                self.layer_name
            )));
        };
        let (vectors, grid) = match sampler {
            Sampler::Pooled(r) => (r.finish().into_iter().flat_map(|(_, v)| v).collect(), None),
            Sampler::Location {
                width,
                height,
                reservoirs,
            } => {
                let per_location = self.cap.min(self.images as usize);
                let vectors = reservoirs
                    .into_iter()
                    .flat_map(|r| r.finish().into_iter().flat_map(|(_, v)| v))
                    .collect();
                (
                    vectors,
                    Some(LocationGrid {
                        width,
                        height,
                        per_location,
                    }),
                )
            }
        };
        ReferencePool::checked(
            self.layer_name,
            channels,
            vectors,
            self.images,
            self.seed,
            grid,
        )
    }
}

/// Build the pool for one layer from a stream of bundles.
pub fn build_pool<B: Borrow<ActivationBundle>>(
    bundles: impl IntoIterator<Item = B>,
    layer: &str,
    config: &PoolConfig,
) -> Result<ReferencePool> {
    let mut builder = PoolBuilder::new(layer, config)?;
    for b in bundles {
        builder.push_bundle(b.borrow())?;
    }
    builder.finish()
}

/// Build pools for every configured layer in one pass over the bundles.
pub fn build_pools<I>(bundles: I, config: &PoolConfig) -> Result<Vec<ReferencePool>>
where
    I: IntoIterator<Item = Result<ActivationBundle>>,
{
    let mut builders = config
        .layers
        .iter()
        .map(|l| PoolBuilder::new(l.clone(), config))
        .collect::<Result<Vec<_>>>()?;
    for bundle in bundles {
        let bundle = bundle?;
        for b in &mut builders {
            b.push_bundle(&bundle)?;
        }
    }
    builders.into_iter().map(PoolBuilder::finish).collect()
}

pub fn encode_pool(pool: &ReferencePool) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "{POOL_MAGIC}").unwrap();
    writeln!(out, "layer={}", pool.layer_name).unwrap();
    writeln!(out, "channels={}", pool.channels).unwrap();
    writeln!(out, "count={}", pool.len()).unwrap();
    writeln!(out, "sources={}", pool.source_count).unwrap();
    writeln!(out, "seed={}", pool.seed).unwrap();
    writeln!(out, "scope={}", pool.scope().as_str()).unwrap();
    if let Some(g) = pool.grid {
        writeln!(out, "grid={},{}", g.width, g.height).unwrap();
        writeln!(out, "per_location={}", g.per_location).unwrap();
    }
    writeln!(out, "end").unwrap();
    let payload = ActivationTensor::new(
        pool.layer_name.clone(),
        1,
        pool.len(),
        pool.channels,
        pool.vectors.clone(),
    )
    .expect("pool invariants imply a valid tensor");
    out.extend_from_slice(&encode_tensor(&payload));
    out
}

pub fn decode_pool(bytes: &[u8]) -> Result<ReferencePool> {
    let mut fields = std::collections::BTreeMap::new();
    let mut rest = bytes;
    let mut first = true;
    loop {
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("pool header is not terminated".into()))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::Parse("pool header is not UTF-8".into()))?;
        rest = &rest[nl + 1..];
        if first {
            if line != POOL_MAGIC {
                return Err(Error::BadMagic {
                    expected: POOL_MAGIC.into(),
                    found: line.chars().take(16).collect(),
                });
            }
            first = false;
            continue;
        }
        if line == "end" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad pool header line {line:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Parse(format!("pool header missing {k:?}")))
    };
    let num = |k: &str| -> Result<u64> {
        get(k)?
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("pool header {k:?} is not an integer")))
    };
    let layer = get("layer")?.to_string();
    let channels = num("channels")? as usize;
    let count = num("count")? as usize;
    let sources = num("sources")?;
    let seed = num("seed")?;
    let grid = match PoolScope::parse(get("scope")?)? {
        PoolScope::Pooled => None,
        PoolScope::LocationMatched => {
            let (w, h) = get("grid")?
                .split_once(',')
                .ok_or_else(|| Error::Parse("bad pool grid".into()))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Parse("bad pool grid".into()))
            };
            Some(LocationGrid {
                width: parse(w)?,
                height: parse(h)?,
                per_location: num("per_location")? as usize,
            })
        }
    };
    let tensor = decode_tensor(rest, &layer)?;
    if tensor.shape() != (1, count, channels) {
        return Err(Error::Shape(format!(
            "pool payload {:?} does not match header 1x{count}x{channels}",
            tensor.shape()
        )));
    }
    ReferencePool::checked(layer, channels, tensor.into_data(), sources, seed, grid)
}

pub fn save_pool(path: impl AsRef<Path>, pool: &ReferencePool) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pool(pool)).map_err(|e| Error::io(path, e))
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<ReferencePool> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pool(&bytes)
}

/// Conventional pool file location for a layer.
pub fn pool_path(dir: impl AsRef<Path>, layer: &str) -> std::path::PathBuf {
    dir.as_ref().join(format!("{layer}.{POOL_EXTENSION}"))
}
