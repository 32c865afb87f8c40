//! Learns one positive scale per parameter tensor so that the rescaled
//! initialization has well-aligned, large (but bounded) sub-batch gradients.
//!
//! Each iteration draws a batch, measures GC and GN of the rescaled model and
//! differentiates them with respect to the scales through a second backward
//! pass. When the largest sub-batch gradient norm exceeds `gamma` the scales
//! descend on GN; otherwise they ascend on GC + GN. Scales are clamped from
//! below at `alpha_lb`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::data::BatchSource;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::gradmetrics::{gc_gn_tensors, sub_batch_gradients, split_batch, SubBatchPlan};
use crate::nn::{ModelSpec, ParamSet};
use crate::tensor::{DType, Tape, Tensor};

/// Base norm bound for ten classes; other class counts scale by ln C / ln 10.
pub const GAMMA_BASE: f64 = 3.0;

pub fn default_gamma(num_classes: usize) -> f64 {
    GAMMA_BASE * (num_classes.max(2) as f64).ln() / 10f64.ln()
}

/// One pass over the data: `ceil(n / B)` iterations.
pub fn default_iterations(dataset_len: usize, batch_size: usize) -> usize {
    dataset_len.div_ceil(batch_size.max(1)).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSet {
    pub coeffs: Vec<f64>,
}

impl ScaleSet {
    pub fn ones(m: usize) -> Self {
        ScaleSet { coeffs: vec![1.0; m] }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.coeffs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NIOConfig {
    pub tau: f64,
    pub gamma: f64,
    pub alpha_lb: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub parts: usize,
    pub overlap: f64,
    pub seed: u64,
    pub dtype: DType,
    /// Use central differences over the scales instead of double backward.
    pub finite_diff: bool,
    /// Record a scale snapshot every this many iterations (0 disables).
    pub snapshot_every: usize,
}

impl Default for NIOConfig {
    fn default() -> Self {
        NIOConfig {
            tau: 0.05,
            gamma: GAMMA_BASE,
            alpha_lb: 0.01,
            iterations: 100,
            batch_size: 64,
            parts: 2,
            overlap: 0.6,
            seed: 0,
            dtype: DType::F64,
            finite_diff: false,
            snapshot_every: 10,
        }
    }
}

impl NIOConfig {
    pub fn validate(&self) -> Result<SubBatchPlan> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be finite and non-negative, got {}", self.tau));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.alpha_lb > 0.0) {
            return bad(format!("alpha_lb must be positive, got {}", self.alpha_lb));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        split_batch(self.batch_size, self.parts, self.overlap)
    }

    /// Sets one field from its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
        }
        match key {
            "tau" => self.tau = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "alpha_lb" => self.alpha_lb = num(key, value)?,
            "T" | "iterations" => self.iterations = num(key, value)?,
            "B" | "batch_size" => self.batch_size = num(key, value)?,
            "D" | "parts" => self.parts = num(key, value)?,
            "r" | "overlap" => self.overlap = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "dtype" => self.dtype = value.trim().parse().map_err(Error::Config)?,
            "finite_diff" => self.finite_diff = num(key, value)?,
            "snapshot_every" => self.snapshot_every = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Max norm above gamma: descend on GN.
    Constrain,
    /// Ascend on GC + GN.
    Ascend,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Constrain => "constrain",
            Branch::Ascend => "ascend",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub gc: f64,
    pub gn: f64,
    pub g_max: f64,
    pub branch: Branch,
    /// Scales after this iteration's update, when a snapshot was taken.
    pub coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NIOTrace {
    pub records: Vec<TraceRecord>,
}

impl NIOTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `iter,gc,gn,g_max,branch`, one row per iteration.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["iter", "gc", "gn", "g_max", "branch"]).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.gc.to_string(),
                r.gn.to_string(),
                r.g_max.to_string(),
                r.branch.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_counts(params: usize, scales: usize) -> Result<()> {
    if params != scales {
        return Err(Error::InvalidArgument(format!("{params} parameter tensors but {scales} scales")));
    }
    Ok(())
}

/// `ω_k · W_k` for every tensor, as plain values. The inputs are not touched.
pub fn rectify(params: &ParamSet, scales: &ScaleSet) -> Result<ParamSet> {
    check_counts(params.len(), scales.len())?;
    let scaled = params
        .iter()
        .zip(&scales.coeffs)
        .map(|((_, w), &s)| w.detach().mul_scalar(s))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    params.with_tensors(scaled)
}

/// GC and GN of the rescaled model, recorded on a tape whose leaves are the
/// scales.
pub struct Objective {
    pub gc: Tensor,
    pub gn: Tensor,
    /// Largest sub-batch gradient norm.
    pub g_max: f64,
    pub scales: Vec<Tensor>,
}

impl Objective {
    /// ∇ω of GN (`Constrain`) or GC + GN (`Ascend`).
    pub fn gradient(&self, branch: Branch) -> Result<Vec<f64>> {
        let target = match branch {
            Branch::Constrain => self.gn.clone(),
            Branch::Ascend => self.gc.add(&self.gn)?,
        };
        if !target.is_recorded() {
            // every sub-batch gradient vanished, so nothing depends on ω
            return Ok(vec![0.0; self.scales.len()]);
        }
        let grads = Tape::backward(&target, &self.scales, false)?;
        Ok(grads.iter().map(|g| g.data()[0]).collect())
    }
}

pub fn objective(
    spec: &ModelSpec,
    params: &ParamSet,
    scales: &ScaleSet,
    batch: &Batch,
    plan: &SubBatchPlan,
) -> Result<Objective> {
    check_counts(params.len(), scales.len())?;
    let tape = Tape::new();
    let mut omegas = Vec::with_capacity(scales.len());
    let mut scaled = Vec::with_capacity(scales.len());
    for ((_, w), &s) in params.iter().zip(&scales.coeffs) {
        let omega = tape.leaf(&Tensor::scalar(s).cast(w.dtype()));
        scaled.push(w.detach().scale(&omega)?);
        omegas.push(omega);
    }
    let grads = sub_batch_gradients(spec, &scaled, batch, plan, true)?;
    let (gc, gn, norms) = gc_gn_tensors(&grads)?;
    let g_max = norms.iter().copied().fold(0.0, f64::max);
    Ok(Objective { gc, gn, g_max, scales: omegas })
}

/// Plain (gc, gn, g_max) at the given scales.
pub fn objective_value(
    spec: &ModelSpec,
    params: &ParamSet,
    scales: &ScaleSet,
    batch: &Batch,
    plan: &SubBatchPlan,
) -> Result<(f64, f64, f64)> {
    let rect = rectify(params, scales)?;
    let grads = sub_batch_gradients(spec, &rect.tensors(), batch, plan, false)?;
    let (gc, gn, norms) = gc_gn_tensors(&grads)?;
    Ok((gc.item()?, gn.item()?, norms.iter().copied().fold(0.0, f64::max)))
}

/// Central differences of the branch target over each scale.
pub fn finite_diff_gradient(
    spec: &ModelSpec,
    params: &ParamSet,
    scales: &ScaleSet,
    batch: &Batch,
    plan: &SubBatchPlan,
    branch: Branch,
    step: f64,
) -> Result<Vec<f64>> {
    let target = |s: &ScaleSet| -> Result<f64> {
        let (gc, gn, _) = objective_value(spec, params, s, batch, plan)?;
        Ok(match branch {
            Branch::Constrain => gn,
            Branch::Ascend => gc + gn,
        })
    };
    let mut out = Vec::with_capacity(scales.len());
    for k in 0..scales.len() {
        let mut hi = scales.clone();
        hi.coeffs[k] += step;
        let mut lo = scales.clone();
        lo.coeffs[k] -= step;
        out.push((target(&hi)? - target(&lo)?) / (2.0 * step));
    }
    Ok(out)
}

pub fn branch_for(g_max: f64, config: &NIOConfig) -> Branch {
    if g_max > config.gamma {
        Branch::Constrain
    } else {
        Branch::Ascend
    }
}

/// One update of the scales from the gradient of the branch target, then the
/// clamp at `alpha_lb`.
pub fn nio_step(scales: &ScaleSet, grad: &[f64], g_max: f64, config: &NIOConfig) -> Result<ScaleSet> {
    check_counts(grad.len(), scales.len())?;
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("objective gradient for scale {k} is {}", grad[k])));
    }
    let sign = match branch_for(g_max, config) {
        Branch::Constrain => -1.0,
        Branch::Ascend => 1.0,
    };
    let coeffs = scales
        .coeffs
        .iter()
        .zip(grad)
        .map(|(&w, &g)| (w + sign * config.tau * g).max(config.alpha_lb))
        .collect();
    Ok(ScaleSet { coeffs })
}

#[derive(Debug, Clone)]
pub struct NIOOutcome {
    /// Rescaled parameters as plain tensors.
    pub params: ParamSet,
    pub scales: ScaleSet,
    pub trace: NIOTrace,
}

/// Runs the full optimization, drawing one batch per iteration.
pub fn nio_run(
    spec: &ModelSpec,
    params: &ParamSet,
    source: &mut dyn BatchSource,
    config: &NIOConfig,
) -> Result<NIOOutcome> {
    let plan = config.validate()?;
    let base = params.cast(config.dtype);
    let mut scales = ScaleSet::ones(base.len());
    let mut trace = NIOTrace::default();
    for t in 0..config.iterations {
        let batch = match source.next_batch() {
            Ok(b) => b,
            Err(Error::DataExhausted { .. }) => return Err(Error::DataExhausted { iteration: t }),
            Err(e) => return Err(e),
        };
        if batch.len() != config.batch_size {
            return Err(Error::InvalidArgument(format!(
                "iteration {t}: batch of {} samples, expected {}",
                batch.len(),
                config.batch_size
            )));
        }
        let batch = Batch { inputs: batch.inputs.cast(config.dtype), labels: batch.labels };
        let obj = objective(spec, &base, &scales, &batch, &plan)?;
        let (gc, gn) = (obj.gc.item()?, obj.gn.item()?);
        if !(gc.is_finite() && gn.is_finite() && obj.g_max.is_finite()) {
            return Err(Error::NonFinite(format!("objective at iteration {t}: gc={gc}, gn={gn}")));
        }
        let branch = branch_for(obj.g_max, config);
        let grad = if config.finite_diff {
            finite_diff_gradient(spec, &base, &scales, &batch, &plan, branch, 1e-5)?
        } else {
            obj.gradient(branch)?
        };
        scales = nio_step(&scales, &grad, obj.g_max, config)?;
        let snap = config.snapshot_every > 0 && ((t + 1) % config.snapshot_every == 0 || t + 1 == config.iterations);
        trace.records.push(TraceRecord {
            iter: t,
            gc,
            gn,
            g_max: obj.g_max,
            branch,
            coeffs: snap.then(|| scales.coeffs.clone()),
        });
    }
    Ok(NIOOutcome { params: rectify(&base, &scales)?, scales, trace })
}
