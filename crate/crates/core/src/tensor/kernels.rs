// Plain slice kernels. Every reduction runs in ascending index order so the
// results do not depend on scheduling.

/// Geometry of a stride-1, symmetrically zero-padded 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.height + 2 * self.pad + 1 - self.kernel_h
    }

    pub fn out_w(&self) -> usize {
        self.width + 2 * self.pad + 1 - self.kernel_w
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    /// Shape of the unfolded patch matrix.
    pub fn cols_shape(&self) -> [usize; 2] {
        [
            self.batch * self.out_h() * self.out_w(),
            self.channels * self.kernel_h * self.kernel_w,
        ]
    }

    // (input offset, cols offset) pairs; None where the patch reads padding
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (oh, ow) = (self.out_h(), self.out_w());
        let patch = self.channels * self.kernel_h * self.kernel_w;
        for b in 0..self.batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (b * oh + oy) * ow + ox;
                    for c in 0..self.channels {
                        for ky in 0..self.kernel_h {
                            let iy = (oy + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= self.height as isize {
                                continue;
                            }
                            for kx in 0..self.kernel_w {
                                let ix = (ox + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= self.width as isize {
                                    continue;
                                }
                                let src = ((b * self.channels + c) * self.height + iy as usize)
                                    * self.width
                                    + ix as usize;
                                let col = (c * self.kernel_h + ky) * self.kernel_w + kx;
                                f(src, row * patch + col);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let [r, c] = g.cols_shape();
    let mut out = vec![0.0; r * c];
    g.for_each_tap(|src, dst| out[dst] = x[src]);
    out
}

pub(crate) fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut out = vec![0.0; g.input_shape().iter().product()];
    g.for_each_tap(|src, dst| out[src] += cols[dst]);
    out
}

/// `a` is m×k, `b` is k×n, both row-major.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Output axis `i` is input axis `perm[i]`.
pub(crate) fn permute(a: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(a.len());
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..a.len() {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(a[off]);
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    (out, out_shape)
}

/// Sums over every axis except `axis`.
pub(crate) fn reduce_keep(a: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; len];
    for o in 0..outer {
        for (c, acc) in out.iter_mut().enumerate() {
            let base = (o * len + c) * inner;
            for v in &a[base..base + inner] {
                *acc += v;
            }
        }
    }
    out
}

/// Replicates `v` (length `shape[axis]`) along every other axis of `shape`.
pub(crate) fn broadcast(v: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * len * inner);
    for _ in 0..outer {
        for &x in v {
            out.extend(std::iter::repeat_n(x, inner));
        }
    }
    out
}

pub(crate) fn softmax_rows(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let x = &a[r * cols..(r + 1) * cols];
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y = &mut out[r * cols..(r + 1) * cols];
        let mut z = 0.0;
        for (o, &v) in y.iter_mut().zip(x) {
            *o = (v - max).exp();
            z += *o;
        }
        for o in y.iter_mut() {
            *o /= z;
        }
    }
    out
}

/// Mean negative log-likelihood of `labels` under row-wise softmax of `a`.
pub(crate) fn softmax_xent(a: &[f64], rows: usize, cols: usize, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate().take(rows) {
        let x = &a[r * cols..(r + 1) * cols];
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        total += lse - x[y];
    }
    total / rows as f64
}
