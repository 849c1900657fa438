//! Test-only helpers: a naive nearest-neighbor oracle written independently
//! of the library's feature path, and a seeded synthetic corpus generator.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, StandardNormal};

use realism::tensor_io::write_bundle;
use realism::{ActivationBundle, ActivationTensor};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Nearest-neighbor distance by a plain double loop, one square root per
/// candidate.
pub fn naive_nn(query: &[f32], pool: &[Vec<f32>]) -> f64 {
    let mut best = f64::INFINITY;
    for p in pool {
        assert_eq!(p.len(), query.len());
        let mut s = 0.0f64;
        for c in 0..query.len() {
            let d = query[c] as f64 - p[c] as f64;
            s += d * d;
        }
        let dist = s.sqrt();
        if dist < best {
            best = dist;
        }
    }
    best
}

/// Sum over locations, u outer and v inner, of `naive_nn`.
pub fn naive_layer_feature(tensor: &ActivationTensor, pool: &[Vec<f32>]) -> f64 {
    let mut total = 0.0;
    for u in 0..tensor.width() {
        for v in 0..tensor.height() {
            let start = (u * tensor.height() + v) * tensor.channels();
            total += naive_nn(&tensor.data()[start..start + tensor.channels()], pool);
        }
    }
    total
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn random_vec(rng: &mut StdRng, n: usize, scale: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let x: f32 = StandardNormal.sample(rng);
            x * scale
        })
        .collect()
}

pub fn random_tensor(
    rng: &mut StdRng,
    name: &str,
    w: usize,
    h: usize,
    c: usize,
) -> ActivationTensor {
    ActivationTensor::new(name, w, h, c, random_vec(rng, w * h * c, 1.0)).unwrap()
}

pub fn realism_bin() -> &'static str {
    env!("CARGO_BIN_EXE_realism")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(realism_bin())
        .args(args)
        .output()
        .expect("failed to spawn realism binary")
}

pub fn run_ok(args: &[&str]) -> String {
    let out = run_cli(args);
    assert!(
        out.status.success(),
        "realism {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Layers of the synthetic corpus: (name, W, H, C).
pub const SYNTH_LAYERS: [(&str, usize, usize, usize); 3] =
    [("conv", 4, 4, 8), ("mixed", 2, 2, 16), ("FC", 1, 1, 12)];

pub fn synth_layer_list() -> String {
    SYNTH_LAYERS
        .iter()
        .map(|l| l.0)
        .collect::<Vec<_>>()
        .join(",")
}

/// A synthetic corpus of real-image reference bundles and test bundles.
///
/// Every layer has a handful of prototype vectors. Real images place a
/// prototype plus small noise at each location. A test image with quality
/// `q` in [0, 1] adds an offset scaled by `1 - q` on top of that, so low
/// quality images sit far from the reference activations.
pub struct Corpus {
    pub reference_dir: PathBuf,
    pub test_dir: PathBuf,
    pub qualities: Vec<(String, f64)>,
}

pub fn make_corpus(root: &Path, n_reference: usize, n_test: usize, seed: u64) -> Corpus {
    let mut r = rng(seed);
    let prototypes: Vec<Vec<Vec<f32>>> = SYNTH_LAYERS
        .iter()
        .map(|&(_, _, _, c)| (0..12).map(|_| random_vec(&mut r, c, 1.0)).collect())
        .collect();
    let noise = Normal::new(0.0f32, 0.1).unwrap();

    let image = |r: &mut StdRng, id: String, offset_scale: f32| -> ActivationBundle {
        let tensors = SYNTH_LAYERS
            .iter()
            .zip(&prototypes)
            .map(|(&(name, w, h, c), protos)| {
                let direction = random_vec(r, c, 1.0);
                let mut data = Vec::with_capacity(w * h * c);
                for _ in 0..w * h {
                    let p = &protos[r.random_range(0..protos.len())];
                    for k in 0..c {
                        data.push(p[k] + noise.sample(r) + offset_scale * direction[k]);
                    }
                }
                ActivationTensor::new(name, w, h, c, data).unwrap()
            })
            .collect();
        ActivationBundle::new(id, tensors).unwrap()
    };

    let reference_dir = root.join("reference");
    let test_dir = root.join("test");
    for i in 0..n_reference {
        write_bundle(&reference_dir, &image(&mut r, format!("ref{i:05}"), 0.0)).unwrap();
    }
    let mut qualities = Vec::with_capacity(n_test);
    for i in 0..n_test {
        let q: f64 = r.random();
        let id = format!("img{i:05}");
        write_bundle(
            &test_dir,
            &image(&mut r, id.clone(), (1.0 - q as f32) * 1.5),
        )
        .unwrap();
        qualities.push((id, q));
    }
    Corpus {
        reference_dir,
        test_dir,
        qualities,
    }
}
