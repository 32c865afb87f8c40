use std::sync::Arc;

use super::kernels::{self, ConvGeom};
use super::tape::record;
use super::{DType, Result, Tensor, TensorError};

/// Recorded operation kinds. Composite ops (`mean`, `add_bias`, `conv2d`)
/// are built from these.
#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    MulConst(f64),
    Scale,
    Sqrt,
    Relu,
    Tanh,
    Reshape,
    Transpose,
    Permute(Vec<usize>),
    Matmul,
    Sum,
    Dot,
    L2Norm,
    Softmax,
    SoftmaxXent(Arc<[usize]>),
    ReduceKeep(usize),
    Broadcast(usize),
    Im2Col(ConvGeom),
    Col2Im(ConvGeom),
}

fn check_dtype(op: &'static str, a: &Tensor, b: &Tensor) -> Result<DType> {
    if a.dtype != b.dtype {
        return Err(TensorError::DTypeMismatch {
            op,
            lhs: a.dtype,
            rhs: b.dtype,
        });
    }
    Ok(a.dtype)
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<DType> {
    if a.shape != b.shape {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape.to_vec(),
            rhs: b.shape.to_vec(),
        });
    }
    check_dtype(op, a, b)
}

fn invalid(op: &'static str, t: &Tensor, reason: impl Into<String>) -> TensorError {
    TensorError::InvalidShape {
        op,
        shape: t.shape.to_vec(),
        reason: reason.into(),
    }
}

fn emit(op: Op, inputs: &[&Tensor], shape: &[usize], mut data: Vec<f64>, dtype: DType) -> Result<Tensor> {
    if dtype == DType::F32 {
        for v in &mut data {
            *v = dtype.round(*v);
        }
    }
    record(op, inputs, Tensor::from_parts(shape, data, dtype))
}

fn zip_with(op: Op, name: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let dtype = check_same(name, a, b)?;
    let data = a.data.iter().zip(b.data.iter()).map(|(&x, &y)| f(x, y)).collect();
    emit(op, &[a, b], &a.shape, data, dtype)
}

fn map(op: Op, a: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    let data = a.data.iter().map(|&x| f(x)).collect();
    emit(op, &[a], &a.shape, data, a.dtype)
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        zip_with(Op::Add, "add", self, other, |x, y| x + y)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        zip_with(Op::Sub, "sub", self, other, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        zip_with(Op::Mul, "mul", self, other, |x, y| x * y)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        zip_with(Op::Div, "div", self, other, |x, y| x / y)
    }

    pub fn mul_scalar(&self, c: f64) -> Result<Tensor> {
        map(Op::MulConst(c), self, |x| x * c)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.mul_scalar(-1.0)
    }

    /// Multiplies every element by the one-element tensor `s`.
    pub fn scale(&self, s: &Tensor) -> Result<Tensor> {
        if s.numel() != 1 {
            return Err(TensorError::NotScalar(s.shape.to_vec()));
        }
        let dtype = check_dtype("scale", self, s)?;
        let c = s.data[0];
        let data = self.data.iter().map(|&x| x * c).collect();
        emit(Op::Scale, &[self, s], &self.shape, data, dtype)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        map(Op::Sqrt, self, f64::sqrt)
    }

    pub fn relu(&self) -> Result<Tensor> {
        map(Op::Relu, self, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&self) -> Result<Tensor> {
        map(Op::Tanh, self, f64::tanh)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.to_vec(),
                rhs: shape.to_vec(),
            });
        }
        emit(Op::Reshape, &[self], shape, self.data.to_vec(), self.dtype)
    }

    /// Flattens everything after the leading axis.
    pub fn flatten(&self) -> Result<Tensor> {
        if self.rank() == 0 {
            return Err(invalid("flatten", self, "needs a leading axis"));
        }
        let n = self.shape[0];
        self.reshape(&[n, self.numel() / n])
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(invalid("transpose", self, "expected rank 2"));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        emit(Op::Transpose, &[self], &[c, r], kernels::transpose(&self.data, r, c), self.dtype)
    }

    /// Output axis `i` takes input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let mut seen = vec![false; self.rank()];
        if perm.len() != self.rank() || perm.iter().any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("permute", self, format!("bad permutation {perm:?}")));
        }
        let (data, shape) = kernels::permute(&self.data, &self.shape, perm);
        emit(Op::Permute(perm.to_vec()), &[self], &shape, data, self.dtype)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.to_vec(),
                rhs: other.shape.to_vec(),
            });
        }
        let dtype = check_dtype("matmul", self, other)?;
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let data = kernels::matmul(&self.data, &other.data, m, k, n);
        emit(Op::Matmul, &[self, other], &[m, n], data, dtype)
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s = self.data.iter().fold(0.0, |acc, &x| acc + x);
        emit(Op::Sum, &[self], &[], vec![s], self.dtype)
    }

    pub fn mean(&self) -> Result<Tensor> {
        self.sum()?.mul_scalar(1.0 / self.numel() as f64)
    }

    /// Sum of elementwise products of two same-shaped tensors.
    pub fn dot(&self, other: &Tensor) -> Result<Tensor> {
        let dtype = check_same("dot", self, other)?;
        let s = self
            .data
            .iter()
            .zip(other.data.iter())
            .fold(0.0, |acc, (&x, &y)| acc + x * y);
        emit(Op::Dot, &[self, other], &[], vec![s], dtype)
    }

    /// Euclidean norm of all elements. Its gradient at the origin is taken as zero.
    pub fn l2norm(&self) -> Result<Tensor> {
        let ss = self.data.iter().fold(0.0, |acc, &x| acc + x * x);
        emit(Op::L2Norm, &[self], &[], vec![ss.sqrt()], self.dtype)
    }

    /// Row-wise softmax of a rank-2 tensor.
    pub fn softmax(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(invalid("softmax", self, "expected rank 2"));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        emit(Op::Softmax, &[self], &self.shape, kernels::softmax_rows(&self.data, r, c), self.dtype)
    }

    /// Mean softmax cross-entropy of rank-2 logits against integer labels.
    pub fn softmax_cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(invalid("softmax_cross_entropy", self, "expected rank-2 logits"));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        if labels.len() != r {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: self.shape.to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(TensorError::LabelOutOfRange { label: bad, classes: c });
        }
        let loss = kernels::softmax_xent(&self.data, r, c, labels);
        emit(Op::SoftmaxXent(labels.into()), &[self], &[], vec![loss], self.dtype)
    }

    /// Sums over all axes except `axis`, giving a rank-1 tensor.
    pub fn reduce_keep(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(invalid("reduce_keep", self, format!("axis {axis} out of range")));
        }
        let data = kernels::reduce_keep(&self.data, &self.shape, axis);
        emit(Op::ReduceKeep(axis), &[self], &[self.shape[axis]], data, self.dtype)
    }

    /// Replicates a rank-1 tensor along every axis of `shape` except `axis`.
    pub fn broadcast_to(&self, shape: &[usize], axis: usize) -> Result<Tensor> {
        if self.rank() != 1 || axis >= shape.len() || shape[axis] != self.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_to",
                lhs: self.shape.to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = kernels::broadcast(&self.data, shape, axis);
        emit(Op::Broadcast(axis), &[self], shape, data, self.dtype)
    }

    /// Adds a per-channel bias along axis 1.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        if self.rank() < 2 {
            return Err(invalid("add_bias", self, "expected a batch and a channel axis"));
        }
        self.add(&bias.broadcast_to(&self.shape, 1)?)
    }

    pub fn im2col(&self, geom: &ConvGeom) -> Result<Tensor> {
        if self.shape() != geom.input_shape() {
            return Err(TensorError::ShapeMismatch {
                op: "im2col",
                lhs: self.shape.to_vec(),
                rhs: geom.input_shape().to_vec(),
            });
        }
        emit(Op::Im2Col(*geom), &[self], &geom.cols_shape(), kernels::im2col(&self.data, geom), self.dtype)
    }

    pub fn col2im(&self, geom: &ConvGeom) -> Result<Tensor> {
        if self.shape() != geom.cols_shape() {
            return Err(TensorError::ShapeMismatch {
                op: "col2im",
                lhs: self.shape.to_vec(),
                rhs: geom.cols_shape().to_vec(),
            });
        }
        emit(Op::Col2Im(*geom), &[self], &geom.input_shape(), kernels::col2im(&self.data, geom), self.dtype)
    }

    /// Stride-1 cross-correlation of `self` (B×C×H×W) with `weight`
    /// (O×C×kh×kw) and symmetric zero padding.
    pub fn conv2d(&self, weight: &Tensor, pad: usize) -> Result<Tensor> {
        if self.rank() != 4 || weight.rank() != 4 || self.shape[1] != weight.shape[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape.to_vec(),
                rhs: weight.shape.to_vec(),
            });
        }
        let (kh, kw) = (weight.shape[2], weight.shape[3]);
        if self.shape[2] + 2 * pad < kh || self.shape[3] + 2 * pad < kw {
            return Err(invalid("conv2d", self, "kernel larger than padded input"));
        }
        let geom = ConvGeom {
            batch: self.shape[0],
            channels: self.shape[1],
            height: self.shape[2],
            width: self.shape[3],
            kernel_h: kh,
            kernel_w: kw,
            pad,
        };
        let out_ch = weight.shape[0];
        let cols = self.im2col(&geom)?;
        let wm = weight.reshape(&[out_ch, geom.cols_shape()[1]])?.transpose()?;
        cols.matmul(&wm)?
            .reshape(&[geom.batch, geom.out_h(), geom.out_w(), out_ch])?
            .permute(&[0, 3, 1, 2])
    }
}

fn constant_like(g: &Tensor, shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::from_parts(shape, data, g.dtype)
}

/// Adjoints of `op` with respect to each input, given the output adjoint `g`.
/// Only inputs flagged in `needed` are computed.
pub(crate) fn vjp(op: &Op, x: &[Tensor], out: &Tensor, g: &Tensor, needed: &[bool]) -> Result<Vec<Option<Tensor>>> {
    let want = |i: usize| needed.get(i).copied().unwrap_or(false);
    let one = |t: Result<Tensor>| -> Result<Vec<Option<Tensor>>> { Ok(vec![Some(t?)]) };
    match op {
        Op::Leaf => Ok(Vec::new()),
        Op::Add => Ok(vec![Some(g.clone()), Some(g.clone())]),
        Op::Sub => Ok(vec![Some(g.clone()), if want(1) { Some(g.neg()?) } else { None }]),
        Op::Mul => Ok(vec![
            if want(0) { Some(g.mul(&x[1])?) } else { None },
            if want(1) { Some(g.mul(&x[0])?) } else { None },
        ]),
        Op::Div => Ok(vec![
            if want(0) { Some(g.div(&x[1])?) } else { None },
            if want(1) { Some(g.mul(out)?.div(&x[1])?.neg()?) } else { None },
        ]),
        Op::MulConst(c) => one(g.mul_scalar(*c)),
        Op::Scale => Ok(vec![
            if want(0) { Some(g.scale(&x[1])?) } else { None },
            if want(1) { Some(g.dot(&x[0])?.reshape(x[1].shape())?) } else { None },
        ]),
        Op::Sqrt => one(g.div(&out.mul_scalar(2.0)?)),
        Op::Relu => {
            let mask = x[0].data.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
            one(g.mul(&constant_like(g, x[0].shape(), mask)))
        }
        Op::Tanh => {
            let ones = Tensor::ones(out.shape(), out.dtype);
            one(g.mul(&ones.sub(&out.mul(out)?)?))
        }
        Op::Reshape => one(g.reshape(x[0].shape())),
        Op::Transpose => one(g.transpose()),
        Op::Permute(perm) => {
            let mut inv = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            one(g.permute(&inv))
        }
        Op::Matmul => Ok(vec![
            if want(0) { Some(g.matmul(&x[1].transpose()?)?) } else { None },
            if want(1) { Some(x[0].transpose()?.matmul(g)?) } else { None },
        ]),
        Op::Sum => one(Tensor::ones(x[0].shape(), g.dtype).scale(g)),
        Op::Dot => Ok(vec![
            if want(0) { Some(x[1].scale(g)?) } else { None },
            if want(1) { Some(x[0].scale(g)?) } else { None },
        ]),
        Op::L2Norm => {
            if out.data[0] == 0.0 {
                one(Ok(Tensor::zeros(x[0].shape(), g.dtype)))
            } else {
                one(x[0].scale(&g.div(out)?))
            }
        }
        Op::Softmax => {
            let s = out.mul(g)?;
            let r = s.reduce_keep(0)?.broadcast_to(out.shape(), 0)?;
            one(s.sub(&out.mul(&r)?))
        }
        Op::SoftmaxXent(labels) => {
            let (rows, cols) = (x[0].shape[0], x[0].shape[1]);
            let mut onehot = vec![0.0; rows * cols];
            for (r, &y) in labels.iter().enumerate() {
                onehot[r * cols + y] = 1.0;
            }
            let p = x[0].softmax()?;
            one(p
                .sub(&constant_like(g, &[rows, cols], onehot))?
                .mul_scalar(1.0 / rows as f64)?
                .scale(g))
        }
        Op::ReduceKeep(axis) => one(g.broadcast_to(x[0].shape(), *axis)),
        Op::Broadcast(axis) => one(g.reduce_keep(*axis)),
        Op::Im2Col(geom) => one(g.col2im(geom)),
        Op::Col2Im(geom) => one(g.im2col(geom)),
    }
}
