//! Per-layer and whole-network gradient diagnostics.

use std::io::Write;

use crate::data::{BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::gradmetrics::{metric_report, LayerMetric, SubBatchPlan, EPS};
use crate::nn::{ModelSpec, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSummary {
    pub gc: f64,
    /// g_max / max(g_min, ε) over the plan's sub-batches.
    pub norm_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct DiagReport {
    /// Breakdown for the first batch.
    pub layers: Vec<(String, LayerMetric)>,
    /// Whole network on the first batch.
    pub network: BatchSummary,
    /// Whole network on every batch.
    pub batches: Vec<BatchSummary>,
}

impl DiagReport {
    pub fn mean(&self) -> BatchSummary {
        let n = self.batches.len() as f64;
        BatchSummary {
            gc: self.batches.iter().map(|b| b.gc).sum::<f64>() / n,
            norm_ratio: self.batches.iter().map(|b| b.norm_ratio).sum::<f64>() / n,
        }
    }

    /// `layer,gc,norm_ratio`: one row per tensor and a final `network` row.
    pub fn write_layers_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["layer", "gc", "norm_ratio"]).map_err(csv_err)?;
        for (name, m) in &self.layers {
            w.write_record([name.clone(), m.gc.to_string(), m.norm_ratio.to_string()]).map_err(csv_err)?;
        }
        w.write_record(["network".to_string(), self.network.gc.to_string(), self.network.norm_ratio.to_string()])
            .map_err(csv_err)?;
        w.flush()?;
        Ok(())
    }

    /// `batch,gc,norm_ratio`, one row per sampled batch.
    pub fn write_batches_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["batch", "gc", "norm_ratio"]).map_err(csv_err)?;
        for (i, b) in self.batches.iter().enumerate() {
            w.write_record([i.to_string(), b.gc.to_string(), b.norm_ratio.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Metrics over `num_batches` seeded random batches of `plan.batch` samples.
pub fn diagnostics(
    spec: &ModelSpec,
    params: &ParamSet,
    data: &Dataset,
    plan: &SubBatchPlan,
    num_batches: usize,
    seed: u64,
) -> Result<DiagReport> {
    if num_batches == 0 {
        return Err(Error::InvalidArgument("num_batches must be at least 1".into()));
    }
    let dtype = params.tensors().first().map_or(crate::tensor::DType::F64, |t| t.dtype());
    let data = data.cast(dtype);
    let mut it = BatchIterator::new(&data, plan.batch, seed)?;
    let mut layers = Vec::new();
    let mut batches = Vec::with_capacity(num_batches);
    for b in 0..num_batches {
        let idx = it.next_indices().to_vec();
        let report = metric_report(spec, params, &data.batch(&idx)?, plan)?;
        if b == 0 {
            layers = report.per_layer.clone();
        }
        batches.push(BatchSummary { gc: report.gc, norm_ratio: report.g_max / report.g_min.max(EPS) });
    }
    Ok(DiagReport { layers, network: batches[0], batches })
}
