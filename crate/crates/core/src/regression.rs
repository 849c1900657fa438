//! Logistic regression from feature vectors to the probability that a human
//! labels the image "real".
//!
//! Features are z-scored with training statistics that travel with the
//! model. The fit minimizes the row-weighted mean binomial negative
//! log-likelihood plus `lambda/2 * |w|^2` (intercept not penalized) with a
//! damped Newton iteration, stopping once the gradient's max-norm drops
//! below `tol`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::format::{f64_from_hex, f64_to_hex};

pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const MODEL_MAGIC: &str = "RSM1";

/// Logistic function, stable for large |t| and clamped to the open interval.
pub fn sigmoid(t: f64) -> f64 {
    let p = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Per-dimension z-scoring statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Dimensions with a single distinct value; their std is recorded as 1.
    pub degenerate: Vec<bool>,
}

impl Standardization {
    /// Mean and population standard deviation of each column.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        Self::fit_weighted(rows, &vec![1.0; rows.len()])
    }

    /// Like [`Standardization::fit`] with row `i` counted `weights[i]` times.
    pub fn fit_weighted(rows: &[&[f64]], weights: &[f64]) -> Result<Self> {
        let live: Vec<(&[f64], f64)> = rows
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(r, w)| (*r, *w))
            .collect();
        let first = live
            .first()
            .ok_or_else(|| Error::Empty("no feature rows to standardize".into()))?
            .0;
        let m = first.len();
        if let Some((r, _)) = live.iter().find(|(r, _)| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: r.len(),
            });
        }
        let total: f64 = live.iter().map(|(_, w)| w).sum();
        let mut means = vec![0.0; m];
        let mut stds = vec![1.0; m];
        let mut degenerate = vec![false; m];
        for j in 0..m {
            let mean = live.iter().map(|(r, w)| w * r[j]).sum::<f64>() / total;
            means[j] = mean;
            if live.iter().all(|(r, _)| r[j] == first[j]) {
                degenerate[j] = true;
                continue;
            }
            let var = live
                .iter()
                .map(|(r, w)| w * (r[j] - mean).powi(2))
                .sum::<f64>()
                / total;
            stds[j] = var.sqrt();
        }
        Ok(Self {
            means,
            stds,
            degenerate,
        })
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Standardized rows and the statistics used.
pub fn standardize(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Standardization)> {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let stats = Standardization::fit(&refs)?;
    let out = rows.iter().map(|r| stats.apply(r)).collect();
    Ok((out, stats))
}

/// One training row: raw features, target in [0, 1] and a nonnegative weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub values: Vec<f64>,
    pub target: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSet {
    pub layers: Vec<String>,
    pub rows: Vec<TrainRow>,
}

impl TrainSet {
    pub fn new(layers: Vec<String>) -> Self {
        Self {
            layers,
            rows: Vec::new(),
        }
    }

    /// One row per binary label.
    pub fn push_label(&mut self, values: Vec<f64>, label: bool) {
        self.rows.push(TrainRow {
            values,
            target: if label { 1.0 } else { 0.0 },
            weight: 1.0,
        });
    }

    fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        let m = self.layers.len();
        for r in &self.rows {
            if r.values.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: r.values.len(),
                });
            }
            if !(0.0..=1.0).contains(&r.target) || !(r.weight >= 0.0) || !r.weight.is_finite() {
                return Err(Error::Degenerate(format!(
                    "invalid target {} or weight {}",
                    r.target, r.weight
                )));
            }
            if r.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Degenerate("non-finite feature value".into()));
            }
        }
        let live = || self.rows.iter().filter(|r| r.weight > 0.0);
        if !live().any(|r| r.target > 0.0) || !live().any(|r| r.target < 1.0) {
            return Err(Error::Degenerate(
                "training labels contain a single class".into(),
            ));
        }
        Ok(())
    }
}

/// Penalized mean negative log-likelihood over standardized rows.
///
/// Parameters are laid out as `[w_0, .., w_{m-1}, b]`.
pub struct LogisticObjective {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    weights: Vec<f64>,
    total_weight: f64,
    lambda: f64,
}

impl LogisticObjective {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>, weights: Vec<f64>, lambda: f64) -> Self {
        let total_weight = weights.iter().sum();
        Self {
            xs,
            ys,
            weights,
            total_weight,
            lambda,
        }
    }

    pub fn dims(&self) -> usize {
        self.xs.first().map_or(0, Vec::len)
    }

    fn logit(x: &[f64], params: &[f64]) -> f64 {
        let m = x.len();
        x.iter().zip(&params[..m]).map(|(a, b)| a * b).sum::<f64>() + params[m]
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let m = self.dims();
        let nll: f64 = self
            .xs
            .iter()
            .zip(&self.ys)
            .zip(&self.weights)
            .map(|((x, y), w)| {
                let t = Self::logit(x, params);
                w * (softplus(t) - y * t)
            })
            .sum();
        let penalty: f64 = params[..m].iter().map(|w| w * w).sum();
        nll / self.total_weight + 0.5 * self.lambda * penalty
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let m = self.dims();
        let mut g = vec![0.0; m + 1];
        for ((x, y), w) in self.xs.iter().zip(&self.ys).zip(&self.weights) {
            let r = w * (sigmoid(Self::logit(x, params)) - y);
            for j in 0..m {
                g[j] += r * x[j];
            }
            g[m] += r;
        }
        for gj in g.iter_mut() {
            *gj /= self.total_weight;
        }
        for j in 0..m {
            g[j] += self.lambda * params[j];
        }
        g
    }

    pub fn hessian(&self, params: &[f64]) -> DMatrix<f64> {
        let m = self.dims();
        let mut h = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut aug = vec![1.0; m + 1];
        for (x, w) in self.xs.iter().zip(&self.weights) {
            let p = sigmoid(Self::logit(x, params));
            let s = w * p * (1.0 - p);
            aug[..m].copy_from_slice(x);
            for a in 0..=m {
                for b in 0..=a {
                    h[(a, b)] += s * aug[a] * aug[b];
                }
            }
        }
        for a in 0..=m {
            for b in 0..=a {
                h[(a, b)] /= self.total_weight;
                h[(b, a)] = h[(a, b)];
            }
        }
        for j in 0..m {
            h[(j, j)] += self.lambda;
        }
        h
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solve `h * step = g`, adding diagonal damping when `h` is not positive definite.
fn newton_step(h: DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_column_slice(g);
    let scale = h.diagonal().amax().max(1.0);
    let mut damping = 0.0;
    for _ in 0..20 {
        let mut hd = h.clone();
        for i in 0..hd.nrows() {
            hd[(i, i)] += damping;
        }
        if let Some(chol) = hd.cholesky() {
            return Some(chol.solve(&rhs).iter().copied().collect());
        }
        damping = if damping == 0.0 {
            1e-12 * scale
        } else {
            damping * 10.0
        };
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub params: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Damped Newton minimization of a [`LogisticObjective`] from the origin.
pub fn minimize(obj: &LogisticObjective, options: &FitOptions) -> Optimum {
    let m = obj.dims();
    let mut params = vec![0.0; m + 1];
    let mut loss = obj.loss(&params);
    let mut grad = obj.gradient(&params);
    let mut iterations = 0;
    while max_abs(&grad) >= options.tol && iterations < options.max_iter {
        iterations += 1;
        let Some(step) = newton_step(obj.hessian(&params), &grad) else {
            break;
        };
        let slope: f64 = -step.iter().zip(&grad).map(|(s, g)| s * g).sum::<f64>();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p - t * s).collect();
            let trial_loss = obj.loss(&trial);
            if trial_loss <= loss + 1e-4 * t * slope {
                params = trial;
                loss = trial_loss;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no decrease representable in floating point; the gradient
            // below reports how close we got
            break;
        }
        grad = obj.gradient(&params);
    }
    let grad_norm = max_abs(&grad);
    Optimum {
        params,
        iterations,
        grad_norm,
        converged: grad_norm < options.tol,
    }
}

/// How a model's training rows were derived from human labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// One row per human judgment.
    #[default]
    Rows,
    /// One row per image with the mean judgment as a fractional target.
    Mean,
}

impl LabelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::Rows => "rows",
            LabelMode::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rows" => Ok(LabelMode::Rows),
            "mean" => Ok(LabelMode::Mean),
            other => Err(Error::Config(format!(
                "unknown label aggregation {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    pub dataset: String,
    pub seed: u64,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub rows: usize,
    pub label_mode: LabelMode,
}

impl Default for TrainMeta {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            seed: 0,
            lambda: DEFAULT_LAMBDA,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            iterations: 0,
            converged: true,
            grad_norm: 0.0,
            rows: 0,
            label_mode: LabelMode::Rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealismModel {
    pub layer_names: Vec<String>,
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardization: Standardization,
    pub meta: TrainMeta,
}

impl RealismModel {
    /// Model with identity standardization, mostly useful for tests.
    pub fn from_parts(layer_names: Vec<String>, weights: Vec<f64>, intercept: f64) -> Result<Self> {
        let m = layer_names.len();
        if weights.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: weights.len(),
            });
        }
        Ok(Self {
            layer_names,
            weights,
            intercept,
            standardization: Standardization {
                means: vec![0.0; m],
                stds: vec![1.0; m],
                degenerate: vec![false; m],
            },
            meta: TrainMeta::default(),
        })
    }

    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    pub fn check_layers(&self, layers: &[String]) -> Result<()> {
        if layers != self.layer_names.as_slice() {
            return Err(Error::LayerMismatch(format!(
                "model layers {:?}, features {:?}",
                self.layer_names, layers
            )));
        }
        Ok(())
    }

    pub fn logit(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: values.len(),
            });
        }
        let z = self.standardization.apply(values);
        Ok(z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
    }

    pub fn predict_proba(&self, values: &[f64]) -> Result<f64> {
        self.logit(values).map(sigmoid)
    }

    /// 1 ("real") iff the probability is at least one half.
    ///
    /// Decided on the logit's sign, which is the same rule but does not
    /// depend on how `sigmoid` rounds logits within 1e-16 of zero.
    pub fn predict_label(&self, values: &[f64]) -> Result<u8> {
        self.logit(values).map(label_from_logit)
    }

    /// Weights and intercept expressed on the raw (unstandardized) features.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let s = &self.standardization;
        let w: Vec<f64> = self
            .weights
            .iter()
            .zip(&s.stds)
            .map(|(w, sd)| w / sd)
            .collect();
        let b = self.intercept - w.iter().zip(&s.means).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.weights.iter_mut().for_each(|w| *w *= factor);
        m.intercept *= factor;
        m
    }
}

/// Decision rule at 50%; an exact tie counts as real.
pub fn label_from_proba(p: f64) -> u8 {
    u8::from(p >= 0.5)
}

/// The 50% rule on the logit scale: 1 iff `t >= 0`.
pub fn label_from_logit(t: f64) -> u8 {
    u8::from(t >= 0.0)
}

/// Fit a model. Non-convergence is not an error: the model comes back with
/// `meta.converged == false` and the final gradient norm.
pub fn fit(train: &TrainSet, options: &FitOptions) -> Result<RealismModel> {
    if !(options.lambda >= 0.0) || !options.lambda.is_finite() {
        return Err(Error::Config(format!(
            "lambda must be nonnegative, got {}",
            options.lambda
        )));
    }
    train.validate()?;
    let refs: Vec<&[f64]> = train.rows.iter().map(|r| r.values.as_slice()).collect();
    let row_weights: Vec<f64> = train.rows.iter().map(|r| r.weight).collect();
    let standardization = Standardization::fit_weighted(&refs, &row_weights)?;
    let xs = train
        .rows
        .iter()
        .map(|r| standardization.apply(&r.values))
        .collect();
    let ys = train.rows.iter().map(|r| r.target).collect();
    let obj = LogisticObjective::new(xs, ys, row_weights, options.lambda);
    let opt = minimize(&obj, options);
    let m = train.layers.len();
    Ok(RealismModel {
        layer_names: train.layers.clone(),
        weights: opt.params[..m].to_vec(),
        intercept: opt.params[m],
        standardization,
        meta: TrainMeta {
            lambda: options.lambda,
            tol: options.tol,
            max_iter: options.max_iter,
            iterations: opt.iterations,
            converged: opt.converged,
            grad_norm: opt.grad_norm,
            rows: train.rows.len(),
            ..TrainMeta::default()
        },
    })
}

fn float_line(out: &mut String, key: &str, x: f64) {
    writeln!(out, "{key}={x:e} {}", f64_to_hex(x)).unwrap();
}

pub fn encode_model(model: &RealismModel) -> String {
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    writeln!(out, "layers={}", model.layer_names.join(",")).unwrap();
    writeln!(out, "m={}", model.dims()).unwrap();
    float_line(&mut out, "intercept", model.intercept);
    for (j, w) in model.weights.iter().enumerate() {
        float_line(&mut out, &format!("weight.{j}"), *w);
    }
    let s = &model.standardization;
    for j in 0..model.dims() {
        float_line(&mut out, &format!("mean.{j}"), s.means[j]);
        float_line(&mut out, &format!("std.{j}"), s.stds[j]);
        writeln!(out, "degenerate.{j}={}", u8::from(s.degenerate[j])).unwrap();
    }
    let meta = &model.meta;
    writeln!(out, "dataset={}", meta.dataset).unwrap();
    writeln!(out, "seed={}", meta.seed).unwrap();
    float_line(&mut out, "lambda", meta.lambda);
    float_line(&mut out, "tol", meta.tol);
    writeln!(out, "max_iter={}", meta.max_iter).unwrap();
    writeln!(out, "iterations={}", meta.iterations).unwrap();
    writeln!(out, "converged={}", meta.converged).unwrap();
    float_line(&mut out, "grad_norm", meta.grad_norm);
    writeln!(out, "rows={}", meta.rows).unwrap();
    writeln!(out, "label_mode={}", meta.label_mode.as_str()).unwrap();
    writeln!(out, "end").unwrap();
    out
}

pub fn decode_model(text: &str) -> Result<RealismModel> {
    let mut lines = text.lines();
    match lines.next() {
        Some(MODEL_MAGIC) => {}
        other => {
            return Err(Error::BadMagic {
                expected: MODEL_MAGIC.into(),
                found: other.unwrap_or("").chars().take(16).collect(),
            })
        }
    }
    let mut fields = std::collections::HashMap::new();
    let mut terminated = false;
    for line in lines {
        if line == "end" {
            terminated = true;
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad model line {line:?}")))?;
        fields.insert(k, v);
    }
    if !terminated {
        return Err(Error::Parse("model file is not terminated".into()));
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Parse(format!("model file missing {k:?}")))
    };
    let float = |k: &str| -> Result<f64> {
        let v = get(k)?;
        let hex = v.split_whitespace().nth(1).unwrap_or("");
        f64_from_hex(hex)
            .ok_or_else(|| Error::Parse(format!("model field {k:?} lacks a hex bit pattern")))
    };
    let int = |k: &str| -> Result<u64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Parse(format!("model field {k:?} is not an integer")))
    };
    let layer_names: Vec<String> = get("layers")?.split(',').map(str::to_string).collect();
    let m = int("m")? as usize;
    if layer_names.len() != m {
        return Err(Error::Parse(format!(
            "model declares m={m} but lists {} layers",
            layer_names.len()
        )));
    }
    let mut weights = Vec::with_capacity(m);
    let mut means = Vec::with_capacity(m);
    let mut stds = Vec::with_capacity(m);
    let mut degenerate = Vec::with_capacity(m);
    for j in 0..m {
        weights.push(float(&format!("weight.{j}"))?);
        means.push(float(&format!("mean.{j}"))?);
        let sd = float(&format!("std.{j}"))?;
        if !(sd > 0.0) {
            return Err(Error::Parse(format!("std.{j} must be positive")));
        }
        stds.push(sd);
        degenerate.push(match get(&format!("degenerate.{j}"))? {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse(format!("bad degenerate flag {other:?}"))),
        });
    }
    let converged = match get("converged")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::Parse(format!("bad converged flag {other:?}"))),
    };
    Ok(RealismModel {
        layer_names,
        weights,
        intercept: float("intercept")?,
        standardization: Standardization {
            means,
            stds,
            degenerate,
        },
        meta: TrainMeta {
            dataset: get("dataset")?.to_string(),
            seed: int("seed")?,
            lambda: float("lambda")?,
            tol: float("tol")?,
            max_iter: int("max_iter")? as usize,
            iterations: int("iterations")? as usize,
            converged,
            grad_norm: float("grad_norm")?,
            rows: int("rows")? as usize,
            label_mode: LabelMode::parse(get("label_mode")?)?,
        },
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &RealismModel) -> Result<()> {
    let path = path.as_ref();
    if model
        .layer_names
        .iter()
        .any(|l| l.contains(',') || l.contains('\n'))
        || model.meta.dataset.contains('\n')
    {
        return Err(Error::Config(
            "layer names and dataset id must not contain ',' or newlines".into(),
        ));
    }
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RealismModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_model(&text)
}
