//! Acceptance criteria, one line each. Run with `cargo test --test acceptance`.

use std::path::Path;
use std::time::Instant;

use nio::data::{gen_blobs, load_cifar10_bin, load_idx, BatchIterator, Dataset, CIFAR_RECORD};
use nio::gradmetrics::{grad_cosine, grad_norm_avg, metric_report, split_batch};
use nio::harness::cli::{self, BLOB_CLASSES, BLOB_DIM, BLOB_PER_CLASS, BLOB_SEED, BLOB_SPREAD};
use nio::harness::{decode, diagnostics, encode, load_checkpoint, save_checkpoint, train, DiagReport, TrainConfig};
use nio::nio::{default_gamma, default_iterations, finite_diff_gradient, nio_run, objective, Branch, NIOConfig, ScaleSet};
use nio::oracle::{
    contrast_fixture, psi, sweep, theorem2_check, theorem3_check, theta_exact, OracleInstance, QuadLandscape,
};
use nio::{build_params, DType, InitScheme, LayerSpec, ModelSpec, ParamSet, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

/// An MLP with 1 to 3 weighted layers, random widths and activation, and
/// small nonzero biases.
fn random_mlp(rng: &mut ChaCha8Rng) -> (ModelSpec, ParamSet) {
    let depth = rng.random_range(1..=3);
    let input = rng.random_range(2..=6);
    let classes = rng.random_range(2..=4);
    let act = if rng.random_bool(0.5) { LayerSpec::Tanh } else { LayerSpec::Relu };
    let mut layers = Vec::new();
    let mut width = input;
    for k in 0..depth {
        let out = if k + 1 == depth { classes } else { rng.random_range(3..=7) };
        layers.push(LayerSpec::Linear { fan_in: width, fan_out: out });
        layers.push(LayerSpec::Bias { channels: out });
        if k + 1 < depth {
            layers.push(act.clone());
        }
        width = out;
    }
    let spec = ModelSpec::new(vec![input], layers, classes).unwrap();
    let base = build_params(&spec, InitScheme::Kaiming, rng.random()).unwrap();
    let tensors = base
        .iter()
        .map(|(name, t)| {
            if name.ends_with(".bias") {
                Tensor::new(t.shape(), gauss(rng, t.numel()).iter().map(|v| 0.1 * v).collect()).unwrap()
            } else {
                t.clone()
            }
        })
        .collect();
    (spec.clone(), base.with_tensors(tensors).unwrap())
}

fn random_batch(rng: &mut ChaCha8Rng, spec: &ModelSpec, b: usize) -> nio::data::Batch {
    let dim = spec.input_shape[0];
    nio::data::Batch {
        inputs: Tensor::new(&[b, dim], gauss(rng, b * dim)).unwrap(),
        labels: (0..b).map(|_| rng.random_range(0..spec.num_classes)).collect(),
    }
}

fn c1_gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for m in 0..20 {
        let (spec, params) = random_mlp(&mut rng);
        let batch = random_batch(&mut rng, &spec, 8);
        let (d, r) = [(2, 0.0), (2, 0.5), (4, 0.0), (4, 0.5)][m % 4];
        let plan = split_batch(8, d, r).unwrap();
        let scales = ScaleSet { coeffs: (0..params.len()).map(|_| rng.random_range(0.5..1.5)).collect() };
        let obj = objective(&spec, &params, &scales, &batch, &plan).map_err(|e| e.to_string())?;
        for branch in [Branch::Ascend, Branch::Constrain] {
            let analytic = obj.gradient(branch).map_err(|e| e.to_string())?;
            let numeric = finite_diff_gradient(&spec, &params, &scales, &batch, &plan, branch, 1e-6)
                .map_err(|e| e.to_string())?;
            for (a, n) in analytic.iter().zip(&numeric) {
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-8));
            }
        }
    }
    if worst < 1e-4 {
        Ok(format!("max relative error {worst:.2e} over 20 models, both branches"))
    } else {
        Err(format!("max relative error {worst:.2e} >= 1e-4"))
    }
}

/// Sample-wise GC and GN written out directly: one backward pass per sample.
fn samplewise_reference(spec: &ModelSpec, params: &ParamSet, batch: &nio::data::Batch) -> (f64, f64) {
    let grads: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| {
            let one = batch.slice(i, i + 1).unwrap();
            let tape = Tape::new();
            let leaves: Vec<Tensor> = params.tensors().iter().map(|t| tape.leaf(t)).collect();
            let loss = spec.loss(&leaves, &one.inputs, &one.labels).unwrap();
            Tape::backward(&loss, &leaves, false).unwrap().iter().flat_map(|g| g.to_vec()).collect()
        })
        .collect();
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n = grads.len() as f64;
    let mut gc = 0.0;
    for a in &grads {
        for b in &grads {
            gc += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
        }
    }
    (gc / (n * n), grads.iter().map(|g| norm(g)).sum::<f64>() / n)
}

fn c2_samplewise_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (spec, params) = random_mlp(&mut rng);
        let b = rng.random_range(2..=10);
        let batch = random_batch(&mut rng, &spec, b);
        let plan = split_batch(b, b, 0.0).unwrap();
        let (gc_ref, gn_ref) = samplewise_reference(&spec, &params, &batch);
        let report = metric_report(&spec, &params, &batch, &plan).map_err(|e| e.to_string())?;
        let obj = objective(&spec, &params, &ScaleSet::ones(params.len()), &batch, &plan).map_err(|e| e.to_string())?;
        for v in [
            report.gc - gc_ref,
            report.gn - gn_ref,
            obj.gc.item().unwrap() - gc_ref,
            obj.gn.item().unwrap() - gn_ref,
        ] {
            worst = worst.max(v.abs());
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max deviation {worst:.2e} over 100 cases"))
    } else {
        Err(format!("max deviation {worst:.2e} > 1e-12"))
    }
}

fn c3_metric_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rescale_drift: f64 = 0.0;
    for case in 0..1000 {
        let d = rng.random_range(2..=16);
        let dim = rng.random_range(1..=32);
        let mut grads: Vec<Vec<f64>> = (0..d).map(|_| gauss(&mut rng, dim)).collect();
        // some sets are built to sit near the extremes
        match case % 10 {
            0 => {
                let g0 = grads[0].clone();
                for (i, g) in grads.iter_mut().enumerate() {
                    *g = if i % 2 == 1 { g0.iter().map(|v| -v).collect() } else { g0.clone() };
                }
            }
            1 => {
                let g0 = grads[0].clone();
                grads.iter_mut().for_each(|g| *g = g0.clone());
            }
            _ => {}
        }
        let gc = grad_cosine(&grads).map_err(|e| e.to_string())?;
        let gn = grad_norm_avg(&grads).map_err(|e| e.to_string())?;
        let lower = 2.0 / d as f64 - 1.0;
        if !(gc >= lower - 1e-12 && gc <= 1.0 + 1e-12) || !(gn >= 0.0) {
            return Err(format!("case {case}: gc {gc} outside [{lower}, 1] or gn {gn} < 0"));
        }
        let scaled: Vec<Vec<f64>> =
            grads.iter().map(|g| {
                let c = rng.random_range(-5.0f64..5.0).exp();
                g.iter().map(|v| v * c).collect()
            }).collect();
        rescale_drift = rescale_drift.max((grad_cosine(&scaled).unwrap() - gc).abs());
    }
    if rescale_drift <= 1e-12 {
        Ok(format!("1000 sets within bounds; rescaling drift {rescale_drift:.2e}"))
    } else {
        Err(format!("rescaling drift {rescale_drift:.2e} > 1e-12"))
    }
}

fn c4_theorem2() -> Outcome {
    let rows = sweep(500, 8, 16, (0.1, 10.0), 4).map_err(|e| e.to_string())?;
    let failed = rows.iter().filter(|r| !r.holds).count();
    let tight = QuadLandscape::new(vec![vec![0.7, -1.2, 3.0]; 5], vec![0.3, 1.0, 2.0, 5.0, 9.0], vec![0.0; 3])
        .map_err(|e| e.to_string())?;
    let t = theorem2_check(&tight).map_err(|e| e.to_string())?;
    let slack = rows.iter().map(|r| r.theta - r.loss).fold(f64::INFINITY, f64::min);
    if failed == 0 && t.holds && t.loss == 0.0 && t.theta == 0.0 {
        Ok(format!("500/500 hold (smallest slack {slack:.3e}); coincident optima give L = Theta = 0"))
    } else {
        Err(format!("{failed} violations; coincident case L = {}, Theta = {}", t.loss, t.theta))
    }
}

fn c5_theorem3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = OracleInstance {
        n: 16,
        mean: gauss(&mut rng, 4),
        spread: 1.0,
        curvature: 1.0,
        theta0: vec![0.0; 4],
        delta: 0.1,
    };
    let t = theorem3_check(&inst, 1000, 2000, 5).map_err(|e| e.to_string())?;
    let msg = format!("violation rate {:.3} over {} trials (Monte-Carlo error {:.3})", t.rate, t.trials, t.mc_error);
    if t.rate <= 0.13 { Ok(msg) } else { Err(msg) }
}

fn c6_first_order_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let dim = rng.random_range(1..=16);
        let theta0 = gauss(&mut rng, dim);
        let optima: Vec<Vec<f64>> = (0..n).map(|_| gauss(&mut rng, dim)).collect();
        let l = QuadLandscape::uniform(optima, 1.0, theta0).map_err(|e| e.to_string())?;
        let eta = 1.0 / l.h();
        // Θ from gradients: (H η² g_max² / n) Σ_ij (g_max / g_min − cos(g_i, g_j))
        let g: Vec<Vec<f64>> = (0..n).map(|i| l.sample_gradient(i)).collect();
        let norms: Vec<f64> = g.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let g_max = norms.iter().copied().fold(0.0, f64::max);
        let g_min = norms.iter().copied().fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = g[i].iter().zip(&g[j]).map(|(a, b)| a * b).sum();
                sum += g_max / g_min - dot / (norms[i] * norms[j]);
            }
        }
        let approx = l.h() * eta * eta * g_max * g_max * sum / n as f64;
        let exact = theta_exact(&l).map_err(|e| e.to_string())?;
        worst = worst.max((exact - approx).abs());
    }
    if worst <= 1e-10 {
        Ok(format!("max |Theta_exact - Theta_first_order| {worst:.2e} over 100 landscapes"))
    } else {
        Err(format!("gap {worst:.2e} > 1e-10"))
    }
}

fn c7_contrast() -> Outcome {
    let (a, b) = contrast_fixture();
    let (pa, pb) = (psi(&a), psi(&b));
    let (ta, tb) = (theta_exact(&a).map_err(|e| e.to_string())?, theta_exact(&b).map_err(|e| e.to_string())?);
    let msg = format!("Psi {pa:.4} vs {pb:.4}; Theta {ta:.4} vs {tb:.4}");
    if pa == pb && (ta - tb).abs() > 1e-6 { Ok(msg) } else { Err(msg) }
}

struct Fixture {
    spec: ModelSpec,
    base: ParamSet,
    data: Dataset,
    cfg: NIOConfig,
}

fn nio_fixture() -> Fixture {
    let data = gen_blobs(BLOB_CLASSES, BLOB_PER_CLASS, BLOB_DIM, BLOB_SPREAD, BLOB_SEED).unwrap();
    let spec = ModelSpec::mlp3(&[BLOB_DIM], BLOB_CLASSES).unwrap();
    let base = build_params(&spec, InitScheme::Kaiming, 0).unwrap();
    let cfg = NIOConfig {
        tau: 0.05,
        gamma: 3.0,
        iterations: 200,
        batch_size: 64,
        parts: 2,
        overlap: 0.6,
        snapshot_every: 1,
        ..NIOConfig::default()
    };
    Fixture { spec, base, data, cfg }
}

struct NioRun {
    before: DiagReport,
    after: DiagReport,
}

fn c8_nio_end_to_end(fx: &Fixture) -> (Outcome, Option<NioRun>) {
    let t0 = Instant::now();
    let bytes_before = encode(&fx.base);
    let mut source = BatchIterator::new(&fx.data, fx.cfg.batch_size, fx.cfg.seed).unwrap();
    let out = match nio_run(&fx.spec, &fx.base, &mut source, &fx.cfg) {
        Ok(o) => o,
        Err(e) => return (Err(e.to_string()), None),
    };
    let elapsed = t0.elapsed().as_secs_f64();
    let plan = fx.cfg.validate().unwrap();
    let before = diagnostics(&fx.spec, &fx.base, &fx.data, &plan, 20, 99).unwrap();
    let after = diagnostics(&fx.spec, &out.params, &fx.data, &plan, 20, 99).unwrap();
    let (gc0, gc1) = (before.mean().gc, after.mean().gc);
    let last = out.trace.records.last().unwrap();
    let min_scale = out
        .trace
        .records
        .iter()
        .filter_map(|r| r.coeffs.as_ref())
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let snapshots = out.trace.records.iter().filter(|r| r.coeffs.is_some()).count();
    let unmutated = encode(&fx.base) == bytes_before;
    let msg = format!(
        "GC {gc0:.4} -> {gc1:.4}; final g_max {:.4} (limit {:.4}); min scale {min_scale:.4} over {snapshots} iterations; \
         base unmutated {unmutated}; NIO {elapsed:.1} s",
        last.g_max,
        1.05 * fx.cfg.gamma
    );
    let ok = gc1 > gc0
        && last.g_max <= 1.05 * fx.cfg.gamma
        && snapshots == fx.cfg.iterations
        && min_scale >= fx.cfg.alpha_lb
        && unmutated
        && elapsed < 120.0;
    (if ok { Ok(msg) } else { Err(msg) }, Some(NioRun { before, after }))
}

fn c9_direction(run: Option<&NioRun>) -> Outcome {
    let run = run.ok_or("fixture run failed")?;
    let (b, a) = (run.before.mean(), run.after.mean());
    let msg = format!(
        "norm ratio {:.4} -> {:.4}, GC {:.4} -> {:.4} (means over 20 batches, B=64, D=2, r=0.6)",
        b.norm_ratio, a.norm_ratio, b.gc, a.gc
    );
    if a.norm_ratio < b.norm_ratio && a.gc > b.gc { Ok(msg) } else { Err(msg) }
}

fn c10_split_examples() -> Outcome {
    let a = split_batch(128, 2, 0.0).map_err(|e| e.to_string())?;
    let b = split_batch(128, 2, 0.6).map_err(|e| e.to_string())?;
    let c = split_batch(128, 128, 0.0).map_err(|e| e.to_string())?;
    let singles: Vec<(usize, usize)> = (1..=128).map(|i| (i, i)).collect();
    let ok = a.ranges == [(1, 64), (65, 128)] && b.ranges == [(1, 92), (37, 128)] && c.ranges == singles;
    let msg = format!("{:?}, {:?}, {} singletons", a.ranges, b.ranges, c.ranges.len());
    if ok { Ok(msg) } else { Err(msg) }
}

fn mnist() -> Result<(Dataset, Dataset), String> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let load = |img: &str, lab: &str| load_idx(&dir.join(img), &dir.join(lab)).map_err(|e| e.to_string());
    Ok((
        load("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz")?,
        load("t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz")?,
    ))
}

fn c11_training_non_inferiority() -> Outcome {
    let t0 = Instant::now();
    let (train_set, test_set) = mnist()?;
    let spec = ModelSpec::mlp3(train_set.sample_shape(), 10).map_err(|e| e.to_string())?;
    let (mut kaiming, mut nio_acc) = (Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let base = build_params(&spec, InitScheme::Kaiming, seed).map_err(|e| e.to_string())?;
        let cfg = NIOConfig {
            gamma: default_gamma(10),
            iterations: default_iterations(train_set.len(), 64),
            seed,
            ..NIOConfig::default()
        };
        let mut source = BatchIterator::new(&train_set, cfg.batch_size, seed).map_err(|e| e.to_string())?;
        let tuned = nio_run(&spec, &base, &mut source, &cfg).map_err(|e| e.to_string())?.params;
        let tc = TrainConfig { seed, ..TrainConfig::default() };
        for (params, acc) in [(&base, &mut kaiming), (&tuned, &mut nio_acc)] {
            let out = train(&spec, params, &train_set, Some(&test_set), &tc).map_err(|e| e.to_string())?;
            acc.push(out.test_accuracy.unwrap());
        }
    }
    let mean = |v: &[f64]| 100.0 * v.iter().sum::<f64>() / v.len() as f64;
    let (k, n) = (mean(&kaiming), mean(&nio_acc));
    let elapsed = t0.elapsed().as_secs_f64();
    let msg = format!(
        "test accuracy Kaiming {k:.2}% vs NIO {n:.2}% ({} train / {} test samples, 5 seeds, {:.0} s)",
        train_set.len(),
        test_set.len(),
        elapsed
    );
    if n >= k - 0.2 && elapsed < 900.0 { Ok(msg) } else { Err(msg) }
}

fn c12_plumbing() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n);

    let spec = ModelSpec::cnn4(&[3, 8, 8], [2, 4], 10).unwrap();
    for (dtype, seed) in [(DType::F64, 1), (DType::F32, 2)] {
        let params = build_params(&spec, InitScheme::Orthogonal, seed).unwrap().cast(dtype);
        save_checkpoint(&params, &p("ck.nioc")).map_err(|e| e.to_string())?;
        let back = load_checkpoint(&p("ck.nioc")).map_err(|e| e.to_string())?;
        if !back.bit_eq(&params) || encode(&back) != encode(&params) || decode(&encode(&params)).is_err() {
            return Err(format!("{dtype:?} checkpoint did not round-trip"));
        }
    }

    let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3];
    img.extend([0, 255, 51, 102, 0, 0, 1, 2, 3, 4, 5, 6]);
    std::fs::write(p("img"), &img).unwrap();
    std::fs::write(p("lab"), [0, 0, 8, 1, 0, 0, 0, 2, 4, 9]).unwrap();
    let idx = load_idx(&p("img"), &p("lab")).map_err(|e| e.to_string())?;
    if idx.inputs.shape() != [2, 1, 2, 3] || idx.labels != [4, 9] || idx.inputs.data()[2] != 0.2 {
        return Err("IDX fixture decoded wrongly".into());
    }
    let mut rec = vec![6u8];
    rec.extend((0..CIFAR_RECORD - 1).map(|i| (i % 256) as u8));
    std::fs::write(p("c.bin"), &rec).unwrap();
    let cifar = load_cifar10_bin(&[p("c.bin")], false).map_err(|e| e.to_string())?;
    if cifar.labels != [6] || cifar.inputs.data()[1025] != 1.0 / 255.0 {
        return Err("CIFAR fixture decoded wrongly".into());
    }
    std::fs::write(p("bad"), [&[9u8, 9, 9, 9][..], &img[4..]].concat()).unwrap();
    if load_idx(&p("bad"), &p("lab")).is_ok() {
        return Err("bad IDX magic accepted".into());
    }

    let cfg = p("c.cfg");
    std::fs::write(
        &cfg,
        "model = custom\nlayers = flatten,linear:12:8,bias:8,tanh,linear:8:3\nblob_classes = 3\nblob_per_class = 20\nblob_dim = 12\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for name in ["a.nioc", "b.nioc"] {
        let out = p(name);
        let mut stdout = Vec::new();
        let args = ["nio", "init", "--config", cfg.to_str().unwrap(), "--iters", "5", "--batch-size", "12", "--out", out.to_str().unwrap()];
        if cli::run(args, &mut stdout) != 0 {
            return Err("cli init failed".into());
        }
        outputs.push((std::fs::read(&out).unwrap(), std::fs::read(out.with_extension("trace.csv")).unwrap(), stdout));
    }
    let same_files = outputs[0].0 == outputs[1].0 && outputs[0].1 == outputs[1].1;
    let same_stdout = String::from_utf8_lossy(&outputs[0].2).replace("a.nioc", "b.nioc").replace("a.trace", "b.trace")
        == String::from_utf8_lossy(&outputs[1].2);
    if !(same_files && same_stdout) {
        return Err("cli init not deterministic".into());
    }
    Ok("checkpoint round-trip bit-exact (f32, f64); IDX and CIFAR fixtures decode; cli init reproducible".into())
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed().as_secs_f64();
        let line = match &out {
            Ok(m) => format!("PASS [{id:>2}] {name}: {m} ({secs:.1} s)"),
            Err(m) => format!("FAIL [{id:>2}] {name}: {m} ({secs:.1} s)"),
        };
        println!("{line}");
        results.push((id, name, out, secs));
    };

    timed(1, "gradient fidelity", &mut || {
        let t0 = Instant::now();
        let r = c1_gradient_fidelity();
        if t0.elapsed().as_secs_f64() >= 60.0 { Err(format!("over 60 s: {r:?}")) } else { r }
    });
    timed(2, "sample-wise equivalence", &mut c2_samplewise_equivalence);
    timed(3, "metric bounds", &mut c3_metric_bounds);
    timed(4, "theorem 2 oracle", &mut || {
        let t0 = Instant::now();
        let r = c4_theorem2();
        if t0.elapsed().as_secs_f64() >= 10.0 { Err(format!("over 10 s: {r:?}")) } else { r }
    });
    timed(5, "theorem 3 Monte Carlo", &mut || {
        let t0 = Instant::now();
        let r = c5_theorem3();
        if t0.elapsed().as_secs_f64() >= 60.0 { Err(format!("over 60 s: {r:?}")) } else { r }
    });
    timed(6, "first-order exactness", &mut c6_first_order_exactness);
    timed(7, "Psi vs Theta contrast", &mut c7_contrast);
    let fx = nio_fixture();
    let mut run = None;
    timed(8, "NIO end-to-end fixture", &mut || {
        let (out, r) = c8_nio_end_to_end(&fx);
        run = r;
        out
    });
    timed(9, "diagnostic direction", &mut || c9_direction(run.as_ref()));
    timed(10, "sub-batch split examples", &mut c10_split_examples);
    timed(11, "training non-inferiority", &mut c11_training_non_inferiority);
    timed(12, "plumbing", &mut c12_plumbing);

    let passed = results.iter().filter(|r| r.2.is_ok()).count();
    let total: f64 = results.iter().map(|r| r.3).sum();
    println!("{passed}/{} criteria passed in {total:.0} s", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
