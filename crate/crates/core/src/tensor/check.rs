use super::{Result, Tape, Tensor, TensorError};

/// Largest relative disagreement between reverse-mode gradients of `f` at
/// `point` and central differences with step `step`, taken over every
/// coordinate of every input: `|a - n| / (|a| + |n| + 1e-12)`.
pub fn grad_check<F>(f: F, point: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    if !(step > 0.0) {
        return Err(TensorError::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let tape = Tape::new();
    let leaves: Vec<Tensor> = point.iter().map(|p| tape.leaf(p)).collect();
    let out = f(&leaves)?;
    finite(&out)?;
    let analytic = Tape::backward(&out, &leaves, false)?;

    let mut worst: f64 = 0.0;
    for (k, p) in point.iter().enumerate() {
        for idx in 0..p.numel() {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = p.to_vec();
                data[idx] += delta;
                let mut args: Vec<Tensor> = point.iter().map(Tensor::detach).collect();
                args[k] = Tensor::with_dtype(p.shape(), data, p.dtype())?;
                let v = f(&args)?;
                finite(&v)?;
                v.item()
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            let a = analytic[k].data()[idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn finite(t: &Tensor) -> Result<()> {
    match t.data().iter().find(|v| !v.is_finite()) {
        Some(v) => Err(TensorError::NonFinite(format!("function value {v}"))),
        None => Ok(()),
    }
}
