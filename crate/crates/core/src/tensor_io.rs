//! ATN1 activation tensor files and per-image activation bundles.
//!
//! An ATN1 file is an 18 byte little-endian header followed by the payload:
//!
//! ```text
//! 0..4    magic "ATN1"
//! 4       dtype code, 0x01 = f32
//! 5       ndim, always 3
//! 6..18   u32 dims W, H, C
//! 18..    W*H*C f32 values, u outer, v middle, c inner
//! ```
//!
//! Bundles live at `<dir>/<image_id>/<layer_name>.atn`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::layers::layer_aliases;

pub const MAGIC: &[u8; 4] = b"ATN1";
pub const DTYPE_F32: u8 = 0x01;
pub const HEADER_LEN: usize = 18;
pub const FILE_EXTENSION: &str = "atn";

/// One layer's activation for one image, W x H x C.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    layer_name: String,
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ActivationTensor {
    pub fn new(
        layer_name: impl Into<String>,
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        for dim in [width, height, channels] {
            if u32::try_from(dim).is_err() {
                return Err(Error::Shape(format!("dimension {dim} exceeds u32")));
            }
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Shape("element count overflows".into()))?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self {
            layer_name: layer_name.into(),
            width,
            height,
            channels,
            data,
        })
    }

    pub fn layer_name(&self) -> &str {
        &self.layer_name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Number of spatial locations, W * H.
    pub fn locations(&self) -> usize {
        self.width * self.height
    }

    /// Channel vector at spatial location (u, v).
    pub fn at(&self, u: usize, v: usize) -> &[f32] {
        assert!(u < self.width && v < self.height, "location out of range");
        let start = (u * self.height + v) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Channel vectors in row-major (u, v) order.
    pub fn location_vectors(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.channels)
    }

    pub fn with_layer_name(mut self, name: impl Into<String>) -> Self {
        self.layer_name = name.into();
        self
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Serialize a tensor to ATN1 bytes.
pub fn encode_tensor(tensor: &ActivationTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * tensor.data.len());
    out.extend_from_slice(MAGIC);
    out.push(DTYPE_F32);
    out.push(3);
    for dim in [tensor.width, tensor.height, tensor.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for value in &tensor.data {
        out.extend_from_slice(&value.to_le_bytes());
    }
    out
}

/// Parse ATN1 bytes. The whole slice must be consumed.
pub fn decode_tensor(bytes: &[u8], layer_name: &str) -> Result<ActivationTensor> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(bad_magic(&bytes[..4]));
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(bad_magic(&bytes[..4]));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(bytes[4]));
    }
    if bytes[5] != 3 {
        return Err(Error::UnsupportedRank(bytes[5]));
    }
    let dim = |i: usize| {
        let off = 6 + 4 * i;
        u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
    };
    let (width, height, channels) = (dim(0), dim(1), dim(2));
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::Shape(format!(
            "dimensions must be positive, got {width}x{height}x{channels}"
        )));
    }
    let payload_len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Shape("element count overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < payload_len {
        return Err(Error::Truncated {
            expected: payload_len,
            found: payload.len(),
        });
    }
    if payload.len() > payload_len {
        return Err(Error::TrailingBytes {
            found: payload.len() - payload_len,
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ActivationTensor::new(layer_name, width, height, channels, data)
}

fn bad_magic(found: &[u8]) -> Error {
    Error::BadMagic {
        expected: String::from_utf8_lossy(MAGIC).into_owned(),
        found: String::from_utf8_lossy(found).into_owned(),
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &ActivationTensor) -> Result<()> {
    let path = path.as_ref();
    check_finite(&tensor.data)?;
    fs::write(path, encode_tensor(tensor)).map_err(|e| Error::io(path, e))
}

/// Read an ATN1 file. The layer name is taken from the file stem.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<ActivationTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_tensor(&bytes, &name)
}

/// All activations of one image, one tensor per configured layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBundle {
    image_id: String,
    tensors: Vec<ActivationTensor>,
}

impl ActivationBundle {
    pub fn new(image_id: impl Into<String>, tensors: Vec<ActivationTensor>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &tensors {
            if !seen.insert(t.layer_name()) {
                return Err(Error::DuplicateLayer(t.layer_name().to_string()));
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            tensors,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn tensors(&self) -> &[ActivationTensor] {
        &self.tensors
    }

    pub fn layer(&self, name: &str) -> Option<&ActivationTensor> {
        self.tensors.iter().find(|t| t.layer_name() == name)
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.tensors.iter().map(|t| t.layer_name()).collect()
    }
}

/// Path of the tensor file for `layer`, falling back to known aliases of the
/// layer name when the canonical file is absent.
pub fn layer_path(dir: &Path, image_id: &str, layer: &str) -> Result<PathBuf> {
    let image_dir = dir.join(image_id);
    let primary = image_dir.join(format!("{layer}.{FILE_EXTENSION}"));
    if primary.is_file() {
        return Ok(primary);
    }
    for alias in layer_aliases(layer) {
        let p = image_dir.join(format!("{alias}.{FILE_EXTENSION}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::MissingLayer(primary))
}

fn check_unique_layers(layers: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for l in layers {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLayer(l.clone()));
        }
    }
    Ok(())
}

/// Load the bundle for `image_id`, tensors in the order of `layers`.
pub fn read_bundle(
    dir: impl AsRef<Path>,
    image_id: &str,
    layers: &[String],
) -> Result<ActivationBundle> {
    let dir = dir.as_ref();
    check_unique_layers(layers)?;
    let mut tensors = Vec::with_capacity(layers.len());
    for layer in layers {
        let path = layer_path(dir, image_id, layer)?;
        tensors.push(read_tensor(&path)?.with_layer_name(layer.clone()));
    }
    ActivationBundle::new(image_id, tensors)
}

/// Write a bundle under the naming convention, creating the image directory.
pub fn write_bundle(dir: impl AsRef<Path>, bundle: &ActivationBundle) -> Result<()> {
    let image_dir = dir.as_ref().join(bundle.image_id());
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    for t in bundle.tensors() {
        write_tensor(
            image_dir.join(format!("{}.{FILE_EXTENSION}", t.layer_name())),
            t,
        )?;
    }
    Ok(())
}

/// Image ids (subdirectory names) under a bundle directory, sorted.
pub fn list_bundle_ids(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let is_dir = entry
            .file_type()
            .map_err(|e| Error::io(entry.path(), e))?
            .is_dir();
        if is_dir {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Verify every (image, layer) file exists without reading any payload.
pub fn check_bundle_files(
    dir: impl AsRef<Path>,
    image_ids: &[String],
    layers: &[String],
) -> Result<()> {
    let dir = dir.as_ref();
    check_unique_layers(layers)?;
    for id in image_ids {
        for layer in layers {
            layer_path(dir, id, layer)?;
        }
    }
    Ok(())
}
