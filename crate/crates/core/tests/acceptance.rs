//! Acceptance criteria. Each criterion runs at its pinned tolerance and
//! runtime budget and prints one PASS/FAIL line; any failure makes the
//! process exit non-zero.

mod common;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use common::*;
use realism::evaluation::{average_ranks, spearman_rho};
use realism::features::{featurize, layer_feature, nn_distance};
use realism::labels::{LabelKind, LabelRecord, LabelSet};
use realism::pool::{build_pool, decode_pool, encode_pool, PoolConfig, PoolScope, ReferencePool};
use realism::regression::{
    decode_model, encode_model, fit, sigmoid, FitOptions, LabelMode, LogisticObjective,
    RealismModel, Standardization, TrainMeta, TrainSet,
};
use realism::sampling::sample_indices;
use realism::tensor_io::{decode_tensor, encode_tensor};
use realism::{ActivationBundle, ActivationTensor};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------

fn feature_oracle_equivalence() -> Check {
    let mut r = rng(0xFEA7);
    let mut worst = 0.0f64;
    let mut layers_checked = 0;
    for instance in 0..200 {
        let n_layers = r.random_range(1..=3);
        let mut tensors = Vec::new();
        let mut pools = Vec::new();
        let mut pool_vectors = Vec::new();
        for l in 0..n_layers {
            let (w, h, c) = (
                r.random_range(1..=8),
                r.random_range(1..=8),
                r.random_range(1..=64),
            );
            let k = r.random_range(1..=512);
            let name = format!("layer{l}");
            tensors.push(random_tensor(&mut r, &name, w, h, c));
            let vecs: Vec<Vec<f32>> = (0..k).map(|_| random_vec(&mut r, c, 1.0)).collect();
            pools.push(
                ReferencePool::from_vectors(&name, c, vecs.concat(), k as u64, 0)
                    .map_err(|e| e.to_string())?,
            );
            pool_vectors.push(vecs);
        }
        let bundle =
            ActivationBundle::new(format!("i{instance}"), tensors).map_err(|e| e.to_string())?;
        let fv = featurize(&bundle, &pools).map_err(|e| e.to_string())?;
        ensure(fv.values.len() == n_layers, || {
            "feature length != layer count".into()
        })?;
        for (j, value) in fv.values.iter().enumerate() {
            let oracle = naive_layer_feature(&bundle.tensors()[j], &pool_vectors[j]);
            let err = relative_error(*value, oracle);
            worst = worst.max(err);
            ensure(err <= 1e-9, || {
                format!("instance {instance} layer {j}: {value} vs oracle {oracle}")
            })?;
            layers_checked += 1;
        }
    }
    Ok(format!(
        "200 instances, {layers_checked} layers, max rel err {worst:.1e} (tol 1e-9)"
    ))
}

fn nn_invariants() -> Check {
    let mut r = rng(0x1A7);
    let cases = 1000;
    let mut zero_hits = 0;
    for case in 0..cases {
        let c = r.random_range(1..=32);
        let k = r.random_range(1..=64);
        let vecs: Vec<Vec<f32>> = (0..k).map(|_| random_vec(&mut r, c, 1.0)).collect();
        let pool = ReferencePool::from_vectors("l", c, vecs.concat(), 1, 0).unwrap();
        let query = random_vec(&mut r, c, 1.5);

        // nonnegativity
        let d = nn_distance(&query, &pool).unwrap();
        ensure(d >= 0.0 && d.is_finite(), || {
            format!("case {case}: distance {d}")
        })?;

        // zero on exact match, positive otherwise
        let member = &vecs[r.random_range(0..k)];
        ensure(nn_distance(member, &pool).unwrap() == 0.0, || {
            format!("case {case}: member distance nonzero")
        })?;
        if !vecs.iter().any(|v| v == &query) {
            ensure(d > 0.0, || format!("case {case}: non-member at distance 0"))?;
        }
        let (w, h) = (r.random_range(1..=3), r.random_range(1..=3));
        let inside: Vec<f32> = (0..w * h)
            .flat_map(|_| vecs[r.random_range(0..k)].clone())
            .collect();
        let t_inside = ActivationTensor::new("l", w, h, c, inside).unwrap();
        ensure(layer_feature(&t_inside, &pool).unwrap() == 0.0, || {
            format!("case {case}: in-pool tensor nonzero")
        })?;
        zero_hits += 1;

        // pool growth never increases distances
        let extra = r.random_range(1..=32);
        let mut grown = vecs.clone();
        grown.extend((0..extra).map(|_| random_vec(&mut r, c, 1.0)));
        let grown_pool = ReferencePool::from_vectors("l", c, grown.concat(), 1, 0).unwrap();
        let d_grown = nn_distance(&query, &grown_pool).unwrap();
        ensure(d_grown <= d, || {
            format!("case {case}: growth raised distance {d} -> {d_grown}")
        })?;
        let t = random_tensor(&mut r, "l", w, h, c);
        ensure(
            layer_feature(&t, &grown_pool).unwrap() <= layer_feature(&t, &pool).unwrap(),
            || format!("case {case}: growth raised layer feature"),
        )?;

        // pool order is irrelevant
        let mut shuffled = vecs.clone();
        shuffled.shuffle(&mut r);
        let shuffled_pool = ReferencePool::from_vectors("l", c, shuffled.concat(), 1, 0).unwrap();
        ensure(nn_distance(&query, &shuffled_pool).unwrap() == d, || {
            format!("case {case}: permutation changed distance")
        })?;
        ensure(
            layer_feature(&t, &shuffled_pool).unwrap() == layer_feature(&t, &pool).unwrap(),
            || format!("case {case}: permutation changed layer feature"),
        )?;
    }
    Ok(format!(
        "{cases} cases each: nonnegativity, zero-on-match ({zero_hits}), growth monotonicity, permutation invariance"
    ))
}

fn subsampling_correctness() -> Check {
    let mut r = rng(0x5AB);
    let mut cases = 0;
    for case in 0..400 {
        let (w, h) = (r.random_range(1..=3), r.random_range(1..=3));
        let max_images = (200 / (w * h)).max(1);
        let n = r.random_range(1..=max_images.min(25));
        let c = r.random_range(1..=4);
        let cap = r.random_range(1..=220);
        let seed: u64 = r.random();
        let bundles: Vec<ActivationBundle> = (0..n)
            .map(|i| {
                ActivationBundle::new(format!("b{i}"), vec![random_tensor(&mut r, "l", w, h, c)])
                    .unwrap()
            })
            .collect();
        // candidate multiset in (image, u, v) order
        let candidates: Vec<&[f32]> = bundles
            .iter()
            .flat_map(|b| b.tensors()[0].location_vectors())
            .collect();
        let count = candidates.len();
        ensure(count <= 200, || "candidate count above 200".into())?;
        let distinct: HashSet<Vec<u32>> = candidates
            .iter()
            .map(|v| v.iter().map(|x| x.to_bits()).collect())
            .collect();
        if distinct.len() != count {
            continue;
        }
        let config = PoolConfig {
            pool_cap: cap,
            seed,
            layers: vec!["l".into()],
            scope: PoolScope::Pooled,
        };
        let pool = build_pool(&bundles, "l", &config).map_err(|e| e.to_string())?;
        ensure(pool.len() == cap.min(count), || {
            format!(
                "case {case}: pool size {} for cap {cap}, count {count}",
                pool.len()
            )
        })?;

        let mut drawn = Vec::new();
        for v in pool.vectors() {
            let idx = candidates
                .iter()
                .position(|c| *c == v)
                .ok_or_else(|| format!("case {case}: pool vector not among candidates"))?;
            drawn.push(idx as u64);
        }
        let unique: HashSet<u64> = drawn.iter().copied().collect();
        ensure(unique.len() == drawn.len(), || {
            format!("case {case}: candidate drawn twice")
        })?;
        ensure(drawn.windows(2).all(|p| p[0] < p[1]), || {
            format!("case {case}: pool not in candidate order")
        })?;
        ensure(drawn == sample_indices(count as u64, cap, seed), || {
            format!("case {case}: pool differs from the documented index sample")
        })?;
        if count <= cap {
            ensure(drawn == (0..count as u64).collect::<Vec<_>>(), || {
                format!("case {case}: under-cap pool incomplete")
            })?;
        }
        let again = build_pool(&bundles, "l", &config).map_err(|e| e.to_string())?;
        ensure(again == pool, || format!("case {case}: not deterministic"))?;
        cases += 1;
    }
    ensure(cases >= 300, || format!("only {cases} usable cases"))?;
    Ok(format!(
        "{cases} brute-force cases with candidate counts <= 200: subset, no repeats, deterministic"
    ))
}

const TRUE_W: [f64; 7] = [1.0, -0.8, 0.7, 1.2, -1.0, 0.9, -0.7];
const TRUE_B: f64 = 0.5;

fn synthetic_regression(n: usize, seed: u64) -> TrainSet {
    let mut r = rng(seed);
    let mut set = TrainSet::new((0..7).map(|j| format!("f{j}")).collect());
    for _ in 0..n {
        let x: Vec<f64> = (0..7).map(|_| StandardNormal.sample(&mut r)).collect();
        let t = x.iter().zip(TRUE_W).map(|(a, b)| a * b).sum::<f64>() + TRUE_B;
        let label = r.random::<f64>() < 1.0 / (1.0 + (-t).exp());
        set.push_label(x, label);
    }
    set
}

fn regression_fit_quality() -> Check {
    let set = synthetic_regression(100_000, 0x2E6);
    let opts = FitOptions {
        lambda: 1e-6,
        ..FitOptions::default()
    };
    let model = fit(&set, &opts).map_err(|e| e.to_string())?;
    ensure(model.meta.converged, || {
        format!("fit did not converge: grad {:e}", model.meta.grad_norm)
    })?;
    let (w, b) = model.raw_coefficients();
    let mut worst = 0.0f64;
    for (j, (got, want)) in w.iter().zip(TRUE_W).enumerate() {
        let rel = (got - want).abs() / want.abs();
        worst = worst.max(rel);
        ensure(rel <= 0.05, || format!("weight {j}: {got} vs {want}"))?;
    }
    let rel_b = (b - TRUE_B).abs() / TRUE_B.abs();
    worst = worst.max(rel_b);
    ensure(rel_b <= 0.05, || format!("intercept {b} vs {TRUE_B}"))?;

    // objective on the standardized rows, as seen by the optimizer
    let refs: Vec<&[f64]> = set.rows.iter().map(|r| r.values.as_slice()).collect();
    let stats = Standardization::fit(&refs).map_err(|e| e.to_string())?;
    let xs: Vec<Vec<f64>> = set.rows.iter().map(|r| stats.apply(&r.values)).collect();
    let ys: Vec<f64> = set.rows.iter().map(|r| r.target).collect();
    let obj = LogisticObjective::new(xs, ys, vec![1.0; set.rows.len()], opts.lambda);

    let mut optimum = model.weights.clone();
    optimum.push(model.intercept);
    let (loss_opt, loss_zero) = (obj.loss(&optimum), obj.loss(&[0.0; 8]));
    ensure(loss_opt <= loss_zero, || {
        format!("loss at optimum {loss_opt} > loss at zero {loss_zero}")
    })?;

    let mut r = rng(0x6AD);
    let mut worst_grad = 0.0f64;
    let h = 1e-5;
    for point in 0..10 {
        let params: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut r)).collect();
        let analytic = obj.gradient(&params);
        let mut numeric = vec![0.0; 8];
        for j in 0..8 {
            let mut up = params.clone();
            let mut down = params.clone();
            up[j] += h;
            down[j] -= h;
            numeric[j] = (obj.loss(&up) - obj.loss(&down)) / (2.0 * h);
        }
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let diff = analytic
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
        let rel = diff / scale;
        worst_grad = worst_grad.max(rel);
        ensure(rel <= 1e-6, || {
            format!("gradient check at point {point}: relative error {rel:e}")
        })?;
    }
    Ok(format!(
        "max coef rel err {:.2}% (tol 5%), grad-check max rel err {worst_grad:.1e} (tol 1e-6), loss {loss_opt:.5} <= {loss_zero:.5}",
        100.0 * worst
    ))
}

fn decision_rule_invariance() -> Check {
    let model = fit(&synthetic_regression(2_000, 0xD1), &FitOptions::default())
        .map_err(|e| e.to_string())?;
    let mut r = rng(0xD2);
    let mut random_model = RealismModel::from_parts(
        (0..7).map(|j| format!("f{j}")).collect(),
        (0..7).map(|_| StandardNormal.sample(&mut r)).collect(),
        StandardNormal.sample(&mut r),
    )
    .unwrap();
    random_model.meta = TrainMeta::default();
    let mut flips = 0;
    for m in [&model, &random_model] {
        for _ in 0..1000 {
            let fv: Vec<f64> = (0..7)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut r);
                    2.0 * x
                })
                .collect();
            let base = m.predict_label(&fv).unwrap();
            for factor in [1e-3, 0.5, 2.0, 37.0, 1e3] {
                if m.scaled(factor).predict_label(&fv).unwrap() != base {
                    flips += 1;
                }
            }
        }
    }
    ensure(flips == 0, || {
        format!("{flips} labels changed under positive scaling")
    })?;
    Ok("2 models x 1000 feature vectors x 5 scale factors, no label changed".into())
}

fn spearman_correctness() -> Check {
    let mut r = rng(0x5BE);
    for _ in 0..100 {
        let n = r.random_range(2..=60);
        let mut x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        x.sort_by(f64::total_cmp);
        x.dedup();
        if x.len() < 2 {
            continue;
        }
        x.shuffle(&mut r);
        let y: Vec<f64> = x.iter().map(|v| v * v * v + v).collect();
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        let up = spearman_rho(&x, &y).map_err(|e| e.to_string())?;
        let down = spearman_rho(&x, &rev).map_err(|e| e.to_string())?;
        ensure((up - 1.0).abs() < 1e-12, || {
            format!("monotone pair gave {up}")
        })?;
        ensure((down + 1.0).abs() < 1e-12, || {
            format!("reversed pair gave {down}")
        })?;
    }

    // hand-derived: ranks (1,2,3,4) vs (1.5,1.5,3,4), sxy = 4.5, sxx = 5, syy = 4.5
    let tie =
        spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
    let hand = 4.5 / (5.0f64 * 4.5).sqrt();
    ensure(
        average_ranks(&[1.0, 1.0, 3.0, 4.0]) == vec![1.5, 1.5, 3.0, 4.0],
        || "tie ranks".into(),
    )?;
    ensure(
        (tie - 0.9487).abs() <= 1e-3 && (tie - hand).abs() <= 1e-12,
        || format!("tie case gave {tie}"),
    )?;

    type Transform = (&'static str, fn(f64) -> f64);
    let transforms: [Transform; 4] = [
        ("exp", f64::exp),
        ("cube", |v| v * v * v),
        ("affine", |v| 3.0 * v + 7.0),
        ("atan", f64::atan),
    ];
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(3..=80);
        // human-score-like ties on one side
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0..=5) as f64 / 5.0).collect();
        let Ok(base) = spearman_rho(&x, &y) else {
            continue;
        };
        for (name, f) in &transforms {
            let fx: Vec<f64> = x.iter().map(|v| f(*v)).collect();
            let fy: Vec<f64> = y.iter().map(|v| f(*v)).collect();
            for (a, b) in [(&fx, &y), (&x, &fy), (&fx, &fy)] {
                let rho = spearman_rho(a, b).map_err(|e| e.to_string())?;
                worst = worst.max((rho - base).abs());
                ensure((rho - base).abs() <= 1e-12, || {
                    format!("{name} changed rho {base} -> {rho}")
                })?;
            }
        }
    }
    Ok(format!(
        "monotone=1, reversed=-1, tie case {tie:.4} (hand {hand:.4}), transform max drift {worst:.1e} (tol 1e-12)"
    ))
}

// ---------------------------------------------------------------------------

struct PipelineOutcome {
    accuracy: f64,
    majority: f64,
    rho: f64,
    artifacts: Vec<(String, Vec<u8>)>,
}

fn kv(report: &str) -> HashMap<String, String> {
    report
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn run_pipeline(root: &Path) -> Result<PipelineOutcome, String> {
    let corpus = make_corpus(root, 300, 2000, 0xC0FFEE);
    let layers = synth_layer_list();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let (pools, features, model) = (p("pools"), p("features.csv"), p("model.rsm"));
    let reference = corpus.reference_dir.to_string_lossy().into_owned();
    let test = corpus.test_dir.to_string_lossy().into_owned();

    run_ok(&[
        "build-ref",
        "--bundles",
        &reference,
        "--layers",
        &layers,
        "--cap",
        "500",
        "--seed",
        "7",
        "--out",
        &pools,
    ]);
    run_ok(&[
        "featurize",
        "--bundles",
        &test,
        "--pools",
        &pools,
        "--layers",
        &layers,
        "--out",
        &features,
    ]);

    // human labels drawn from a known logistic model on z-scored features
    let table = realism::features::read_features(&features).map_err(|e| e.to_string())?;
    let refs: Vec<&[f64]> = table.rows.iter().map(|r| r.values.as_slice()).collect();
    let stats = Standardization::fit(&refs).map_err(|e| e.to_string())?;
    let true_w = [-1.5, -1.5, -1.5];
    let mut r = rng(0x1ABE1);
    let mut binary = Vec::new();
    let mut spectrum = Vec::new();
    for row in &table.rows {
        let z = stats.apply(&row.values);
        let prob = sigmoid(z.iter().zip(true_w).map(|(a, b)| a * b).sum());
        binary.push(LabelRecord::binary(&row.image_id, r.random::<f64>() < prob));
        let votes = (0..5).filter(|_| r.random::<f64>() < prob).count() as u32;
        spectrum.push(LabelRecord::spectrum(&row.image_id, votes, 5).unwrap());
    }
    let binary_path = p("labels_binary.csv");
    realism::labels::write_labels(&binary_path, &LabelSet::new(LabelKind::Binary, binary))
        .map_err(|e| e.to_string())?;

    let (train, held_out) = (p("train.csv"), p("test.csv"));
    run_ok(&[
        "split",
        "--labels",
        &binary_path,
        "--frac",
        "0.1",
        "--seed",
        "11",
        "--train-out",
        &train,
        "--test-out",
        &held_out,
    ]);
    run_ok(&[
        "train",
        "--features",
        &features,
        "--labels",
        &train,
        "--lambda",
        "1e-4",
        "--out",
        &model,
        "--dataset-id",
        "synthetic",
        "--seed",
        "11",
    ]);

    let test_labels = realism::labels::read_labels(&held_out).map_err(|e| e.to_string())?;
    let test_ids: HashSet<&str> = test_labels.image_ids().into_iter().collect();
    let spectrum_test: Vec<LabelRecord> = spectrum
        .into_iter()
        .filter(|l| test_ids.contains(l.image_id.as_str()))
        .collect();
    let spectrum_path = p("spectrum_test.csv");
    realism::labels::write_labels(
        &spectrum_path,
        &LabelSet::new(LabelKind::Spectrum, spectrum_test),
    )
    .map_err(|e| e.to_string())?;

    let (report, table_path) = (p("report.kv"), p("table.txt"));
    run_ok(&[
        "evaluate",
        "--model",
        &model,
        "--features",
        &features,
        "--labels",
        &held_out,
        "--labels",
        &spectrum_path,
        "--test-id",
        "binary",
        "--test-id",
        "spectrum",
        "--out",
        &report,
        "--table",
        &table_path,
    ]);

    let report_text = fs::read_to_string(&report).map_err(|e| e.to_string())?;
    let fields = kv(&report_text);
    let get = |k: &str| -> Result<f64, String> {
        fields
            .get(k)
            .ok_or_else(|| format!("report lacks {k}"))?
            .parse::<f64>()
            .map_err(|e| e.to_string())
    };
    let real = test_labels
        .records
        .iter()
        .filter(|l| l.votes_real == 1)
        .count() as f64;
    let n = test_labels.records.len() as f64;

    let mut artifacts = Vec::new();
    for name in [
        "features.csv",
        "train.csv",
        "test.csv",
        "model.rsm",
        "report.kv",
        "table.txt",
    ] {
        artifacts.push((
            name.to_string(),
            fs::read(root.join(name)).map_err(|e| e.to_string())?,
        ));
    }
    for layer in layers.split(',') {
        let name = format!("pools/{layer}.pool");
        artifacts.push((
            name.clone(),
            fs::read(root.join(&name)).map_err(|e| e.to_string())?,
        ));
    }
    Ok(PipelineOutcome {
        accuracy: get("report.0.binary_accuracy")?,
        majority: real.max(n - real) / n,
        rho: get("report.1.spearman_rho")?,
        artifacts,
    })
}

fn end_to_end_pipeline() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    ensure(first.accuracy > first.majority + 0.10, || {
        format!(
            "accuracy {:.3} not above majority {:.3} + 0.10",
            first.accuracy, first.majority
        )
    })?;
    ensure(first.rho > 0.5, || {
        format!("spectrum rho {:.3} <= 0.5", first.rho)
    })?;
    for ((name, x), (_, y)) in first.artifacts.iter().zip(&second.artifacts) {
        ensure(x == y, || format!("{name} differs between identical runs"))?;
    }
    Ok(format!(
        "2000 images: accuracy {:.3} vs majority {:.3} (+0.10 required), rho {:.3} (> 0.5), {} artifacts byte-identical across runs",
        first.accuracy,
        first.majority,
        first.rho,
        first.artifacts.len()
    ))
}

fn format_round_trips() -> Check {
    let mut r = rng(0xF0F0);
    for i in 0..100 {
        let (w, h, c) = (
            r.random_range(1..=6),
            r.random_range(1..=6),
            r.random_range(1..=16),
        );
        let data: Vec<f32> = (0..w * h * c)
            .map(|_| loop {
                let x = f32::from_bits(r.random());
                if x.is_finite() {
                    break x;
                }
            })
            .collect();
        let t = ActivationTensor::new("t", w, h, c, data).unwrap();
        let back = decode_tensor(&encode_tensor(&t), "t").map_err(|e| e.to_string())?;
        let same = back.shape() == t.shape()
            && back
                .data()
                .iter()
                .zip(t.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("ATN1 instance {i} not bit-exact"))?;
    }
    for i in 0..100 {
        let n = r.random_range(1..=6);
        let (w, h, c) = (
            r.random_range(1..=4),
            r.random_range(1..=4),
            r.random_range(1..=8),
        );
        let bundles: Vec<ActivationBundle> = (0..n)
            .map(|k| {
                ActivationBundle::new(
                    format!("b{k}"),
                    vec![random_tensor(&mut r, "Mixed_6e", w, h, c)],
                )
                .unwrap()
            })
            .collect();
        let config = PoolConfig {
            pool_cap: r.random_range(1..=40),
            seed: r.random(),
            layers: vec!["Mixed_6e".into()],
            scope: if i % 4 == 0 {
                PoolScope::LocationMatched
            } else {
                PoolScope::Pooled
            },
        };
        let pool = build_pool(&bundles, "Mixed_6e", &config).map_err(|e| e.to_string())?;
        let bytes = encode_pool(&pool);
        let back = decode_pool(&bytes).map_err(|e| e.to_string())?;
        ensure(back == pool && encode_pool(&back) == bytes, || {
            format!("pool instance {i} not bit-exact")
        })?;
    }
    for i in 0..100 {
        let m = r.random_range(1..=7);
        let finite = |r: &mut rand::rngs::StdRng| loop {
            let x = f64::from_bits(r.random());
            if x.is_finite() {
                break x;
            }
        };
        let mut model = RealismModel::from_parts(
            (0..m).map(|j| format!("layer_{j}")).collect(),
            (0..m).map(|_| finite(&mut r)).collect(),
            finite(&mut r),
        )
        .unwrap();
        model.standardization = Standardization {
            means: (0..m).map(|_| finite(&mut r)).collect(),
            stds: (0..m)
                .map(|_| finite(&mut r).abs().max(f64::MIN_POSITIVE))
                .collect(),
            degenerate: (0..m).map(|_| r.random()).collect(),
        };
        model.meta = TrainMeta {
            dataset: format!("set{i}"),
            seed: r.random(),
            lambda: r.random::<f64>(),
            tol: 1e-8,
            max_iter: r.random_range(1..1000),
            iterations: r.random_range(0..1000),
            converged: r.random(),
            grad_norm: finite(&mut r).abs(),
            rows: r.random_range(1..100_000),
            label_mode: if r.random() {
                LabelMode::Rows
            } else {
                LabelMode::Mean
            },
        };
        let text = encode_model(&model);
        let back = decode_model(&text).map_err(|e| e.to_string())?;
        let bits = |m: &RealismModel| -> Vec<u64> {
            m.weights
                .iter()
                .chain([m.intercept].iter())
                .chain(&m.standardization.means)
                .chain(&m.standardization.stds)
                .map(|x| x.to_bits())
                .collect()
        };
        ensure(back == model && bits(&back) == bits(&model), || {
            format!("model instance {i} not bit-exact")
        })?;
    }
    Ok("100 ATN1 tensors, 100 pools, 100 models bit-exact".into())
}

// ---------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            name: "feature oracle equivalence",
            budget: Some(Duration::from_secs(30)),
            run: feature_oracle_equivalence,
        },
        Criterion {
            name: "nn-distance invariants",
            budget: Some(Duration::from_secs(10)),
            run: nn_invariants,
        },
        Criterion {
            name: "subsampling correctness",
            budget: None,
            run: subsampling_correctness,
        },
        Criterion {
            name: "regression fit quality",
            budget: Some(Duration::from_secs(60)),
            run: regression_fit_quality,
        },
        Criterion {
            name: "decision-rule invariance",
            budget: None,
            run: decision_rule_invariance,
        },
        Criterion {
            name: "spearman correctness",
            budget: None,
            run: spearman_correctness,
        },
        Criterion {
            name: "end-to-end synthetic pipeline",
            budget: Some(Duration::from_secs(300)),
            run: end_to_end_pipeline,
        },
        Criterion {
            name: "format round-trips",
            budget: None,
            run: format_round_trips,
        },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(budget)) if elapsed > budget => Err(format!(
                "took {:.1}s, budget {:.0}s",
                elapsed.as_secs_f64(),
                budget.as_secs_f64()
            )),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!(
                "PASS  {:<32} {detail} [{:.2}s]",
                c.name,
                elapsed.as_secs_f64()
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "FAIL  {:<32} {detail} [{:.2}s]",
                    c.name,
                    elapsed.as_secs_f64()
                );
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
