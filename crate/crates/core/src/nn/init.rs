//! Baseline weight initializers. Biases always start at zero.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ModelSpec, ParamKind, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TRUNC_NORMAL_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// N(0, 2 / fan_in)
    #[default]
    Kaiming,
    /// N(0, 2 / (fan_in + fan_out))
    Xavier,
    Orthogonal,
    /// N(0, 0.02²) truncated at two standard deviations
    TruncNormal,
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kaiming" => Ok(Self::Kaiming),
            "xavier" => Ok(Self::Xavier),
            "orthogonal" => Ok(Self::Orthogonal),
            "trunc_normal" => Ok(Self::TruncNormal),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| normal(rng) * std).collect()
}

fn trunc_normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let bound = 2.0 * TRUNC_NORMAL_STD;
    (0..n)
        .map(|_| loop {
            let v = normal(rng) * TRUNC_NORMAL_STD;
            if v.abs() <= bound {
                break v;
            }
        })
        .collect()
}

/// A rows×cols matrix with orthonormal rows (rows ≤ cols) or columns.
fn orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::from_fn(tall, short, |_, _| normal(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes the result uniformly distributed
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows < cols { q.transpose() } else { q };
    // nalgebra is column-major
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| q[(i, j)])
        .collect()
}

/// Draws every parameter of `spec` in order from one seeded stream.
pub fn build_params(spec: &ModelSpec, init: InitScheme, seed: u64) -> Result<ParamSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for p in spec.param_specs()? {
        let n: usize = p.shape.iter().product();
        let data = match p.kind {
            ParamKind::Bias => vec![0.0; n],
            ParamKind::Weight { fan_in, fan_out } => match init {
                InitScheme::Kaiming => gaussian(&mut rng, n, (2.0 / fan_in as f64).sqrt()),
                InitScheme::Xavier => gaussian(&mut rng, n, (2.0 / (fan_in + fan_out) as f64).sqrt()),
                InitScheme::TruncNormal => trunc_normal(&mut rng, n),
                InitScheme::Orthogonal => {
                    if n < 2 {
                        return Err(Error::InvalidArgument(format!(
                            "orthogonal init needs at least two elements, '{}' has {n}",
                            p.name
                        )));
                    }
                    // conv kernels flatten to out_channels × (in_channels · k²)
                    orthogonal(&mut rng, p.shape[0], n / p.shape[0])
                }
            },
        };
        entries.push((p.name, Tensor::new(&p.shape, data)?));
    }
    ParamSet::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn single_linear(fan_in: usize, fan_out: usize) -> ModelSpec {
        let layers = vec![LayerSpec::Linear { fan_in, fan_out }, LayerSpec::Bias { channels: fan_out }];
        ModelSpec::new(vec![fan_in], layers, fan_out).unwrap()
    }

    fn std_of(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn kaiming_std_for_fan_in_50() {
        let spec = single_linear(50, 400);
        let p = build_params(&spec, InitScheme::Kaiming, 1).unwrap();
        let w = p.get("fc1.weight").unwrap();
        let s = std_of(w.data());
        // √(2/50) = 0.2, 20k samples
        assert!((s - 0.2).abs() < 0.005, "{s}");
        assert!(p.get("fc1.bias").unwrap().data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn xavier_std() {
        let spec = single_linear(100, 300);
        let p = build_params(&spec, InitScheme::Xavier, 2).unwrap();
        let s = std_of(p.get("fc1.weight").unwrap().data());
        assert!((s - (2.0f64 / 400.0).sqrt()).abs() < 0.003, "{s}");
    }

    #[test]
    fn orthogonal_square_is_orthonormal() {
        let spec = single_linear(64, 64);
        let p = build_params(&spec, InitScheme::Orthogonal, 3).unwrap();
        let w = p.get("fc1.weight").unwrap().data();
        let mut worst: f64 = 0.0;
        for i in 0..64 {
            for j in 0..64 {
                let dot: f64 = (0..64).map(|k| w[k * 64 + i] * w[k * 64 + j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn orthogonal_wide_has_orthonormal_rows() {
        let spec = single_linear(20, 5);
        let p = build_params(&spec, InitScheme::Orthogonal, 4).unwrap();
        let w = p.get("fc1.weight").unwrap().data();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..20).map(|k| w[i * 20 + k] * w[j * 20 + k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthogonal_conv_kernel_has_orthonormal_rows() {
        let spec = ModelSpec::new(
            vec![3, 4, 4],
            vec![LayerSpec::Conv2d { in_channels: 3, out_channels: 2, kernel: 3, pad: 1 }, LayerSpec::Flatten],
            32,
        )
        .unwrap();
        let p = build_params(&spec, InitScheme::Orthogonal, 6).unwrap();
        let w = p.get("conv1.weight").unwrap().data();
        assert_eq!(w.len(), 54);
        for i in 0..2 {
            for j in 0..2 {
                let dot: f64 = (0..27).map(|k| w[i * 27 + k] * w[j * 27 + k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthogonal_rejects_single_element() {
        let spec = single_linear(1, 1);
        assert!(build_params(&spec, InitScheme::Orthogonal, 0).is_err());
    }

    #[test]
    fn trunc_normal_stays_within_two_std() {
        let spec = single_linear(100, 100);
        let p = build_params(&spec, InitScheme::TruncNormal, 5).unwrap();
        assert!(p.get("fc1.weight").unwrap().data().iter().all(|v| v.abs() <= 0.04));
    }

    #[test]
    fn unknown_scheme() {
        assert!(matches!("lecun".parse::<InitScheme>(), Err(Error::UnknownScheme(_))));
    }

    #[test]
    fn same_seed_same_params() {
        let spec = single_linear(10, 10);
        let a = build_params(&spec, InitScheme::Kaiming, 9).unwrap();
        let b = build_params(&spec, InitScheme::Kaiming, 9).unwrap();
        assert!(a.bit_eq(&b));
    }
}
