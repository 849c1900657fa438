//! Train/test splitting and the two evaluation protocols: binary accuracy
//! against individual human labels and Spearman's rho against per-image mean
//! realism scores.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::format::format_sig9;
use crate::labels::{LabelKind, LabelRecord, LabelSet};
use crate::regression::{label_from_logit, sigmoid, LabelMode, RealismModel, TrainRow, TrainSet};
use crate::sampling::{rng_from_seed, shuffle};

pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    /// Split images with majority-real and majority-fake labels separately.
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
            stratified: false,
        }
    }
}

/// `round(fraction * n)` with halves rounded up.
pub fn test_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 0.5).floor() as usize
}

/// Split label records by image into (train, test).
///
/// Distinct image ids are sorted, shuffled with the seeded generator and the
/// first `round(test_fraction * images)` go to the test side. All records of
/// an image stay together, and each side keeps the input record order.
pub fn split(
    records: &[LabelRecord],
    spec: &SplitSpec,
) -> Result<(Vec<LabelRecord>, Vec<LabelRecord>)> {
    if records.is_empty() {
        return Err(Error::Empty("no label records to split".into()));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let mut totals: HashMap<&str, (u64, u64)> = HashMap::new();
    for r in records {
        let e = totals.entry(r.image_id.as_str()).or_default();
        e.0 += u64::from(r.votes_real);
        e.1 += u64::from(r.raters);
    }
    let mut ids: Vec<&str> = totals.keys().copied().collect();
    ids.sort_unstable();

    let mut rng = rng_from_seed(spec.seed);
    let strata: Vec<Vec<&str>> = if spec.stratified {
        let (real, fake): (Vec<&str>, Vec<&str>) = ids.iter().partition(|id| {
            let (v, r) = totals[*id];
            2 * v >= r
        });
        vec![fake, real]
    } else {
        vec![ids]
    };
    let mut test_ids = HashSet::new();
    let mut n_images = 0;
    for mut stratum in strata {
        n_images += stratum.len();
        let k = test_count(spec.test_fraction, stratum.len());
        shuffle(&mut rng, &mut stratum);
        test_ids.extend(stratum.into_iter().take(k));
    }
    if test_ids.is_empty() || test_ids.len() == n_images {
        return Err(Error::Degenerate(format!(
            "too few distinct images ({n_images}) for test fraction {}",
            spec.test_fraction
        )));
    }
    let (test, train): (Vec<LabelRecord>, Vec<LabelRecord>) = records
        .iter()
        .cloned()
        .partition(|r| test_ids.contains(r.image_id.as_str()));
    Ok((train, test))
}

/// Fraction of positions where `preds` and `truth` agree.
pub fn binary_accuracy(preds: &[u8], truth: &[u8]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    let correct = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Spearman's rank correlation with tie-averaged ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Empty("spearman needs at least two pairs".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Degenerate("NaN in spearman input".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::Degenerate("spearman input is constant".into()));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

fn lookup<'a>(
    table: &'a FeatureTable,
    index: &HashMap<&str, usize>,
    id: &str,
) -> Result<&'a [f64]> {
    index
        .get(id)
        .map(|&i| table.rows[i].values.as_slice())
        .ok_or_else(|| Error::IdMismatch(format!("image {id:?} has labels but no features")))
}

/// Training rows from features and labels.
///
/// `LabelMode::Rows` gives each human judgment unit weight (an image with
/// five votes counts five times); `LabelMode::Mean` gives each image one row
/// whose target is its mean judgment.
pub fn build_train_set(
    features: &FeatureTable,
    labels: &LabelSet,
    mode: LabelMode,
) -> Result<TrainSet> {
    let index = features.index();
    let mut set = TrainSet::new(features.layers.clone());
    match mode {
        LabelMode::Rows => {
            for r in &labels.records {
                let values = lookup(features, &index, &r.image_id)?;
                let fake = r.raters - r.votes_real;
                for (target, weight) in [(1.0, r.votes_real), (0.0, fake)] {
                    if weight > 0 {
                        set.rows.push(TrainRow {
                            values: values.to_vec(),
                            target,
                            weight: f64::from(weight),
                        });
                    }
                }
            }
        }
        LabelMode::Mean => {
            for (id, votes, raters) in labels.per_image() {
                let values = lookup(features, &index, &id)?;
                set.rows.push(TrainRow {
                    values: values.to_vec(),
                    target: f64::from(votes) / f64::from(raters),
                    weight: 1.0,
                });
            }
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Binary,
    Spectrum,
    Both,
}

impl EvalMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(EvalMode::Binary),
            "spectrum" => Ok(EvalMode::Spectrum),
            "both" => Ok(EvalMode::Both),
            other => Err(Error::Config(format!("unknown evaluation mode {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Binary => "binary",
            EvalMode::Spectrum => "spectrum",
            EvalMode::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    pub proba: f64,
    pub label: u8,
    /// Mean human score for the image.
    pub human_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub train_dataset: String,
    pub test_dataset: String,
    pub mode: EvalMode,
    /// Number of individual human labels.
    pub n_test: u64,
    pub n_correct: u64,
    pub binary_accuracy: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub predictions: Vec<Prediction>,
}

/// Score `model` on labelled images.
pub fn evaluate(
    model: &RealismModel,
    features: &FeatureTable,
    labels: &LabelSet,
    mode: EvalMode,
    test_dataset: &str,
) -> Result<EvalReport> {
    model.check_layers(&features.layers)?;
    let index = features.index();
    let mut predictions = Vec::new();
    let mut n_test = 0u64;
    let mut n_correct = 0u64;
    for (id, votes, raters) in labels.per_image() {
        let logit = model.logit(lookup(features, &index, &id)?)?;
        let (proba, label) = (sigmoid(logit), label_from_logit(logit));
        n_test += u64::from(raters);
        n_correct += u64::from(if label == 1 { votes } else { raters - votes });
        predictions.push(Prediction {
            image_id: id,
            proba,
            label,
            human_score: f64::from(votes) / f64::from(raters),
        });
    }
    let binary_accuracy =
        matches!(mode, EvalMode::Binary | EvalMode::Both).then(|| n_correct as f64 / n_test as f64);
    let spearman_rho = if matches!(mode, EvalMode::Spectrum | EvalMode::Both) {
        let p: Vec<f64> = predictions.iter().map(|p| p.proba).collect();
        let h: Vec<f64> = predictions.iter().map(|p| p.human_score).collect();
        Some(spearman_rho(&p, &h)?)
    } else {
        None
    };
    Ok(EvalReport {
        train_dataset: model.meta.dataset.clone(),
        test_dataset: test_dataset.to_string(),
        mode,
        n_test,
        n_correct,
        binary_accuracy,
        spearman_rho,
        predictions,
    })
}

/// Machine-readable key/value form of a list of reports.
pub fn encode_reports(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    writeln!(out, "reports={}", reports.len()).unwrap();
    for (i, r) in reports.iter().enumerate() {
        let p = format!("report.{i}");
        writeln!(out, "{p}.train={}", r.train_dataset).unwrap();
        writeln!(out, "{p}.test={}", r.test_dataset).unwrap();
        writeln!(out, "{p}.mode={}", r.mode.as_str()).unwrap();
        writeln!(out, "{p}.n_test={}", r.n_test).unwrap();
        writeln!(out, "{p}.n_images={}", r.predictions.len()).unwrap();
        if let Some(a) = r.binary_accuracy {
            writeln!(out, "{p}.n_correct={}", r.n_correct).unwrap();
            writeln!(out, "{p}.binary_accuracy={}", format_sig9(a)).unwrap();
        }
        if let Some(rho) = r.spearman_rho {
            writeln!(out, "{p}.spearman_rho={}", format_sig9(rho)).unwrap();
        }
        for pred in &r.predictions {
            writeln!(
                out,
                "{p}.pred.{}={} {} {}",
                pred.image_id,
                format_sig9(pred.proba),
                pred.label,
                format_sig9(pred.human_score)
            )
            .unwrap();
        }
    }
    out
}

fn unique_in_order<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    items.filter(|s| seen.insert(*s)).collect()
}

/// Aligned text table: one row per training set, binary accuracy and
/// Spearman's rho column groups with one column per test set.
pub fn render_table(reports: &[EvalReport]) -> String {
    let trains = unique_in_order(reports.iter().map(|r| r.train_dataset.as_str()));
    let tests = unique_in_order(reports.iter().map(|r| r.test_dataset.as_str()));
    let cell = |train: &str, test: &str, pick: &dyn Fn(&EvalReport) -> Option<String>| {
        reports
            .iter()
            .filter(|r| r.train_dataset == train && r.test_dataset == test)
            .find_map(pick)
            .unwrap_or_else(|| "-".to_string())
    };
    let row_labels: Vec<String> = trains
        .iter()
        .map(|t| format!("Trained on {t} data"))
        .collect();
    let col_labels: Vec<String> = tests.iter().map(|t| format!("{t} Test")).collect();
    let mut grid: Vec<Vec<String>> = Vec::new();
    for t in &trains {
        let mut row = Vec::new();
        for s in &tests {
            row.push(cell(t, s, &|r| {
                r.binary_accuracy.map(|a| format!("{:.1}%", 100.0 * a))
            }));
        }
        for s in &tests {
            row.push(cell(t, s, &|r| r.spearman_rho.map(|x| format!("{x:.2}"))));
        }
        grid.push(row);
    }
    let first_w = row_labels.iter().map(String::len).max().unwrap_or(0);
    let col_w = col_labels
        .iter()
        .map(String::len)
        .chain(grid.iter().flatten().map(String::len))
        .max()
        .unwrap_or(1)
        .max(6);
    let group_w = tests.len() * (col_w + 2);

    let mut out = String::new();
    let pad = " ".repeat(first_w + 2);
    writeln!(
        out,
        "{pad}{:<gw$}Spearman's rho",
        "Binary Accuracy",
        gw = group_w
    )
    .unwrap();
    let mut header = pad.clone();
    for _ in 0..2 {
        for c in &col_labels {
            write!(header, "{c:<w$}  ", w = col_w).unwrap();
        }
    }
    writeln!(out, "{}", header.trim_end()).unwrap();
    let rule_len = first_w + 2 + 2 * group_w - 2;
    writeln!(out, "{}", "-".repeat(rule_len)).unwrap();
    for (label, row) in row_labels.iter().zip(&grid) {
        let mut line = format!("{label:<first_w$}  ");
        for v in row {
            write!(line, "{v:<w$}  ", w = col_w).unwrap();
        }
        writeln!(out, "{}", line.trim_end()).unwrap();
    }
    writeln!(out, "{}", "-".repeat(rule_len)).unwrap();
    out
}

/// Kind-appropriate default mode for a label file.
pub fn default_mode(kind: LabelKind) -> EvalMode {
    match kind {
        LabelKind::Binary => EvalMode::Binary,
        LabelKind::Spectrum => EvalMode::Spectrum,
    }
}
