//! Pipeline defaults, optionally read from a flat `key=value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Command line flags
//! take precedence over file values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_TEST_FRACTION;
use crate::features::Aggregation;
use crate::layers::{default_layers, parse_layer_list};
use crate::pool::{PoolScope, DEFAULT_POOL_CAP};
use crate::regression::{LabelMode, DEFAULT_LAMBDA, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub layers: Vec<String>,
    pub pool_cap: usize,
    pub seed: u64,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub test_fraction: f64,
    pub aggregation: Aggregation,
    pub scope: PoolScope,
    pub label_mode: LabelMode,
    pub bundles: Option<PathBuf>,
    pub pools: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            layers: default_layers(),
            pool_cap: DEFAULT_POOL_CAP,
            seed: 0,
            lambda: DEFAULT_LAMBDA,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            test_fraction: DEFAULT_TEST_FRACTION,
            aggregation: Aggregation::Sum,
            scope: PoolScope::Pooled,
            label_mode: LabelMode::Rows,
            bundles: None,
            pools: None,
            features: None,
            labels: None,
            model: None,
            report: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl PipelineConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "layers" => {
                self.layers = parse_layer_list(value)
                    .ok_or_else(|| Error::Config(format!("layers: bad list {value:?}")))?
            }
            "pool_cap" => self.pool_cap = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "max_iter" => self.max_iter = parse_num(key, value)?,
            "test_fraction" => self.test_fraction = parse_num(key, value)?,
            "aggregation" => self.aggregation = Aggregation::parse(value)?,
            "scope" => self.scope = PoolScope::parse(value)?,
            "label_mode" => self.label_mode = LabelMode::parse(value)?,
            "bundles" => self.bundles = Some(value.into()),
            "pools" => self.pools = Some(value.into()),
            "features" => self.features = Some(value.into()),
            "labels" => self.labels = Some(value.into()),
            "model" => self.model = Some(value.into()),
            "report" => self.report = Some(value.into()),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("layers must not be empty".into()));
        }
        if self.pool_cap == 0 {
            return Err(Error::Config("pool_cap must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be a nonnegative number".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// `key=value` lines describing the settings, for logs.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        writeln!(out, "layers={}", self.layers.join(",")).unwrap();
        writeln!(out, "pool_cap={}", self.pool_cap).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out, "lambda={:e}", self.lambda).unwrap();
        writeln!(out, "tol={:e}", self.tol).unwrap();
        writeln!(out, "max_iter={}", self.max_iter).unwrap();
        writeln!(out, "test_fraction={}", self.test_fraction).unwrap();
        writeln!(out, "aggregation={}", self.aggregation.as_str()).unwrap();
        writeln!(out, "scope={}", self.scope.as_str()).unwrap();
        writeln!(out, "label_mode={}", self.label_mode.as_str()).unwrap();
        out
    }
}
