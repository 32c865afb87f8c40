use nio::data::{gen_blobs, Batch};
use nio::gradmetrics::{grad_cosine, grad_norm_avg, metric_report, sample_gradients, split_batch};
use nio::{build_params, InitScheme, ModelSpec, Tensor};
use proptest::prelude::*;

fn grad_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..8, 1usize..12).prop_flat_map(|(d, n)| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cosine_and_norm_bounds(grads in grad_sets()) {
        let d = grads.len() as f64;
        let gc = grad_cosine(&grads).unwrap();
        prop_assert!(gc >= 2.0 / d - 1.0 - 1e-12 && gc <= 1.0 + 1e-12, "gc {}", gc);
        prop_assert!(grad_norm_avg(&grads).unwrap() >= 0.0);
    }

    #[test]
    fn cosine_ignores_positive_rescaling(grads in grad_sets(), factors in prop::collection::vec(1e-3f64..1e3, 8)) {
        let scaled: Vec<Vec<f64>> = grads
            .iter()
            .zip(&factors)
            .map(|(g, &c)| g.iter().map(|v| v * c).collect())
            .collect();
        let a = grad_cosine(&grads).unwrap();
        let b = grad_cosine(&scaled).unwrap();
        // only meaningful when rescaling keeps every norm on the same side of the cutoff
        let live = |gs: &[Vec<f64>]| gs.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt() >= 1e-12).collect::<Vec<_>>();
        prop_assume!(live(&grads) == live(&scaled));
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn cosine_ignores_order(grads in grad_sets(), shift in 0usize..8) {
        let mut rotated = grads.clone();
        let k = shift % rotated.len();
        rotated.rotate_left(k);
        prop_assert!((grad_cosine(&grads).unwrap() - grad_cosine(&rotated).unwrap()).abs() < 1e-12);
        prop_assert!((grad_norm_avg(&grads).unwrap() - grad_norm_avg(&rotated).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn split_ranges_cover_the_batch(b in 2usize..300, d_frac in 0.0f64..1.0, r in 0.0f64..0.95) {
        let d = 2 + ((b - 2) as f64 * d_frac) as usize;
        let plan = match split_batch(b, d, r) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        prop_assert_eq!(plan.ranges.len(), d);
        prop_assert_eq!(plan.ranges[0].0, 1);
        if let Ok(disjoint) = split_batch(b, d, 0.0) {
            prop_assert_eq!(disjoint.ranges[d - 1].1, b);
        }
        for &(s, e) in &plan.ranges {
            prop_assert!(1 <= s && s <= e && e <= b);
            prop_assert_eq!(e - s + 1, plan.size);
        }
        for w in plan.ranges.windows(2) {
            prop_assert!(w[0].0 <= w[1].0);
        }
    }
}

fn toy() -> (ModelSpec, nio::ParamSet, Batch) {
    let spec = ModelSpec::mlp(&[6], &[5], 3).unwrap();
    let params = build_params(&spec, InitScheme::Kaiming, 3).unwrap();
    let data = gen_blobs(3, 4, 6, 0.6, 8).unwrap();
    let batch = data.batch(&(0..12).collect::<Vec<_>>()).unwrap();
    (spec, params, batch)
}

#[test]
fn mean_of_singleton_gradients_is_the_batch_gradient() {
    let (spec, params, batch) = toy();
    let singles = sample_gradients(&spec, &params, &batch, &split_batch(12, 12, 0.0).unwrap()).unwrap();
    let whole = sample_gradients(&spec, &params, &batch, &split_batch(12, 2, 0.0).unwrap()).unwrap();
    // two halves of six: their mean is the full-batch gradient, as is the mean of singletons
    for k in 0..whole[0].len() {
        let from_singles = singles.iter().map(|g| g[k]).sum::<f64>() / 12.0;
        let from_halves = (whole[0][k] + whole[1][k]) / 2.0;
        assert!((from_singles - from_halves).abs() < 1e-12);
    }
}

#[test]
fn duplicated_samples_are_perfectly_aligned() {
    let (spec, params, batch) = toy();
    let one = batch.slice(0, 1).unwrap();
    let dim = one.inputs.numel();
    let inputs = Tensor::new(&[8, dim], one.inputs.data().repeat(8)).unwrap();
    let dup = Batch { inputs, labels: vec![one.labels[0]; 8] };
    for (d, r) in [(8, 0.0), (2, 0.0), (4, 0.5)] {
        let report = metric_report(&spec, &params, &dup, &split_batch(8, d, r).unwrap()).unwrap();
        assert!((report.gc - 1.0).abs() < 1e-12, "gc {}", report.gc);
        assert!((report.g_max / report.g_min - 1.0).abs() < 1e-12);
        for (_, layer) in &report.per_layer {
            assert!((layer.gc - 1.0).abs() < 1e-12 || layer.gc == 0.0);
        }
    }
}

#[test]
fn report_serializes() {
    let (spec, params, batch) = toy();
    let report = metric_report(&spec, &params, &batch, &split_batch(12, 3, 0.5).unwrap()).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(json["gc"].as_f64().unwrap(), report.gc);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("layer,gc,norm_ratio\n"));
    assert_eq!(text.lines().count(), 1 + params.len());
}
