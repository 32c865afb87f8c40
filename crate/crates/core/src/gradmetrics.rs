//! Gradient cosine similarity (GC) and average gradient norm (GN) over
//! overlapping sub-batches.
//!
//! A [`SubBatchPlan`] with `D = B, r = 0` is the sample-wise case; any other
//! plan gives the batch-wise metrics. Cosine terms run over the full `D × D`
//! grid, diagonal included, and any pair involving a gradient with norm below
//! [`EPS`] contributes zero.

use std::io::Write;

use serde_json::json;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::{ModelSpec, ParamSet};
use crate::tensor::{Tape, Tensor};

pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SubBatchPlan {
    pub batch: usize,
    pub parts: usize,
    pub overlap: f64,
    /// Sub-batch size.
    pub size: usize,
    /// One-based inclusive index ranges.
    pub ranges: Vec<(usize, usize)>,
}

impl SubBatchPlan {
    /// Zero-based half-open bounds of sub-batch `d`.
    pub fn bounds(&self, d: usize) -> (usize, usize) {
        let (s, e) = self.ranges[d];
        (s - 1, e)
    }

    pub fn is_samplewise(&self) -> bool {
        self.size == 1 && self.parts == self.batch
    }
}

/// Splits `1..=b` into `d` sub-batches of `ceil(b / (d - r))` samples each,
/// consecutive ones overlapping by a fraction `r`. A range that would run past
/// `b` is shifted left to end at `b`.
pub fn split_batch(b: usize, d: usize, r: f64) -> Result<SubBatchPlan> {
    if b == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("batch {b} and parts {d} must be positive")));
    }
    if d > b {
        return Err(Error::InvalidArgument(format!("{d} sub-batches exceed batch size {b}")));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("overlap {r} outside [0, 1)")));
    }
    let n = (b as f64 / (d as f64 - r)).ceil() as usize;
    if n > b {
        return Err(Error::InvalidArgument(format!("sub-batch size {n} exceeds batch size {b}")));
    }
    let ranges = (1..=d)
        .map(|k| {
            let start = (n as f64 * (k - 1) as f64 * (1.0 - r)).floor() as usize + 1;
            let end = start + n - 1;
            if end > b {
                (b - n + 1, b)
            } else {
                (start, end)
            }
        })
        .collect();
    Ok(SubBatchPlan { batch: b, parts: d, overlap: r, size: n, ranges })
}

/// Per-sub-batch gradients, one list of tensors per sub-batch in parameter
/// order.
///
/// Plain parameters get a private tape. Parameters already on a tape (for
/// example, rescaled ones) are differentiated in place, and with
/// `create_graph` the returned gradients stay differentiable.
pub fn sub_batch_gradients(
    spec: &ModelSpec,
    params: &[Tensor],
    batch: &Batch,
    plan: &SubBatchPlan,
    create_graph: bool,
) -> Result<Vec<Vec<Tensor>>> {
    if batch.len() != plan.batch {
        return Err(Error::InvalidArgument(format!(
            "batch holds {} samples, plan expects {}",
            batch.len(),
            plan.batch
        )));
    }
    let recorded = params.iter().any(Tensor::is_recorded);
    let mut out = Vec::with_capacity(plan.parts);
    for d in 0..plan.parts {
        let (s, e) = plan.bounds(d);
        let sub = batch.slice(s, e)?;
        // a fresh tape per sub-batch keeps each one small
        let (tape, wrt);
        let wrt_ref = if recorded {
            params
        } else {
            tape = Tape::new();
            wrt = params.iter().map(|p| tape.leaf(p)).collect::<Vec<_>>();
            &wrt[..]
        };
        let loss = spec.loss(wrt_ref, &sub.inputs, &sub.labels)?;
        out.push(Tape::backward(&loss, wrt_ref, create_graph)?);
    }
    Ok(out)
}

/// Flattened sub-batch gradients in parameter order.
pub fn sample_gradients(spec: &ModelSpec, params: &ParamSet, batch: &Batch, plan: &SubBatchPlan) -> Result<Vec<Vec<f64>>> {
    let grads = sub_batch_gradients(spec, &params.tensors(), batch, plan, false)?;
    Ok(grads.iter().map(|g| flatten(g)).collect())
}

pub(crate) fn flatten(parts: &[Tensor]) -> Vec<f64> {
    parts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn check_lengths(grads: &[Vec<f64>]) -> Result<usize> {
    let first = grads.first().ok_or_else(|| Error::InvalidArgument("empty gradient list".into()))?;
    if let Some(g) = grads.iter().find(|g| g.len() != first.len()) {
        return Err(Error::InvalidArgument(format!(
            "gradient length mismatch: {} vs {}",
            first.len(),
            g.len()
        )));
    }
    Ok(first.len())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine_grid(grads: &[&[f64]]) -> f64 {
    let norms: Vec<f64> = grads.iter().map(|g| norm(g)).collect();
    let d = grads.len();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            if norms[i] >= EPS && norms[j] >= EPS {
                total += dot(grads[i], grads[j]) / (norms[i] * norms[j]);
            }
        }
    }
    total / (d * d) as f64
}

/// Mean pairwise cosine over the full grid, diagonal included.
pub fn grad_cosine(grads: &[Vec<f64>]) -> Result<f64> {
    check_lengths(grads)?;
    let views: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
    Ok(cosine_grid(&views))
}

/// Mean Euclidean norm.
pub fn grad_norm_avg(grads: &[Vec<f64>]) -> Result<f64> {
    check_lengths(grads)?;
    Ok(grads.iter().map(|g| norm(g)).sum::<f64>() / grads.len() as f64)
}

/// Differentiable GC and GN over structured gradients, plus the plain
/// per-sub-batch norms.
pub fn gc_gn_tensors(grads: &[Vec<Tensor>]) -> Result<(Tensor, Tensor, Vec<f64>)> {
    let d = grads.len();
    if d == 0 {
        return Err(Error::InvalidArgument("empty gradient list".into()));
    }
    let dots = |a: &[Tensor], b: &[Tensor]| -> Result<Tensor> {
        let mut acc: Option<Tensor> = None;
        for (x, y) in a.iter().zip(b) {
            let p = x.dot(y)?;
            acc = Some(match acc {
                None => p,
                Some(s) => s.add(&p)?,
            });
        }
        acc.ok_or_else(|| Error::InvalidArgument("no parameter tensors".into()))
    };
    let mut sq = Vec::with_capacity(d);
    for g in grads {
        if g.len() != grads[0].len() {
            return Err(Error::InvalidArgument("gradient length mismatch".into()));
        }
        sq.push(dots(g, g)?);
    }
    let plain: Vec<f64> = sq.iter().map(|s| s.data()[0].sqrt()).collect();
    let live: Vec<bool> = plain.iter().map(|&n| n >= EPS).collect();
    // a vanished gradient is held constant so no infinite slope appears
    let norms: Vec<Tensor> = sq
        .iter()
        .zip(&live)
        .map(|(s, &ok)| if ok { s.sqrt() } else { Ok(Tensor::scalar(0.0).cast(s.dtype())) })
        .collect::<std::result::Result<_, _>>()?;
    let dtype = sq[0].dtype();
    let mut gn = norms[0].clone();
    for n in &norms[1..] {
        gn = gn.add(n)?;
    }
    let gn = gn.mul_scalar(1.0 / d as f64)?;

    let diag = live.iter().filter(|&&l| l).count() as f64;
    let mut gc = Tensor::scalar(diag).cast(dtype);
    for i in 0..d {
        for j in i + 1..d {
            if live[i] && live[j] {
                let c = dots(&grads[i], &grads[j])?.div(&norms[i].mul(&norms[j])?)?;
                gc = gc.add(&c.mul_scalar(2.0)?)?;
            }
        }
    }
    let gc = gc.mul_scalar(1.0 / (d * d) as f64)?;
    Ok((gc, gn, plain))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMetric {
    pub gc: f64,
    pub norm_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub grads: Vec<Vec<f64>>,
    pub gn: f64,
    pub gc: f64,
    pub g_max: f64,
    pub g_min: f64,
    pub per_layer: Vec<(String, LayerMetric)>,
}

impl GradReport {
    pub fn to_json(&self) -> Result<String> {
        let per_layer: serde_json::Map<String, serde_json::Value> = self
            .per_layer
            .iter()
            .map(|(name, m)| (name.clone(), json!({ "gc": m.gc, "norm_ratio": m.norm_ratio })))
            .collect();
        let doc = json!({
            "gn": self.gn,
            "gc": self.gc,
            "g_max": self.g_max,
            "g_min": self.g_min,
            "per_layer": per_layer,
        });
        serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    /// One `layer,gc,norm_ratio` row per named tensor.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["layer", "gc", "norm_ratio"]).map_err(csv_err)?;
        for (name, m) in &self.per_layer {
            w.write_record([name.clone(), m.gc.to_string(), m.norm_ratio.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// GC, GN, extreme norms and the per-tensor breakdown for one batch.
pub fn metric_report(spec: &ModelSpec, params: &ParamSet, batch: &Batch, plan: &SubBatchPlan) -> Result<GradReport> {
    let grads = sample_gradients(spec, params, batch, plan)?;
    let norms: Vec<f64> = grads.iter().map(|g| norm(g)).collect();
    let g_max = norms.iter().copied().fold(0.0, f64::max);
    let g_min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut per_layer = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, t) in params.iter() {
        let end = offset + t.numel();
        let slices: Vec<&[f64]> = grads.iter().map(|g| &g[offset..end]).collect();
        let slice_norms: Vec<f64> = slices.iter().map(|s| norm(s)).collect();
        let hi = slice_norms.iter().copied().fold(0.0, f64::max);
        let lo = slice_norms.iter().copied().fold(f64::INFINITY, f64::min);
        per_layer.push((
            name.to_string(),
            LayerMetric { gc: cosine_grid(&slices), norm_ratio: hi / lo.max(EPS) },
        ));
        offset = end;
    }
    Ok(GradReport {
        gn: grad_norm_avg(&grads)?,
        gc: grad_cosine(&grads)?,
        g_max,
        g_min,
        per_layer,
        grads,
    })
}
