use super::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Total padding `k - 1` per axis (top/left gets the floor half).
    Same,
    Valid,
}

/// 2-D cross-correlation of `x: [C_in, H, W]` with `kernel: [C_out, C_in, kh, kw]`.
///
/// Output extent per axis is `floor((H + pad - kh) / sh) + 1`.
pub fn conv2d(
    x: &Tensor,
    kernel: &Tensor,
    bias: Option<&[f64]>,
    stride: (usize, usize),
    pad: Padding,
) -> Result<Tensor> {
    x.expect_rank(3, "conv2d input")?;
    kernel.expect_rank(4, "conv2d kernel")?;
    let (ci, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let (co, ci2, kh, kw) = (
        kernel.dims()[0],
        kernel.dims()[1],
        kernel.dims()[2],
        kernel.dims()[3],
    );
    if ci != ci2 {
        return Err(Error::Shape(format!(
            "conv2d: input has {ci} channels, kernel expects {ci2}"
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Parameter("conv2d stride must be positive".into()));
    }
    if let Some(b) = bias {
        if b.len() != co {
            return Err(Error::Shape(format!("conv2d bias {} != {co}", b.len())));
        }
    }
    let (pad_h, pad_w) = match pad {
        Padding::Same => (kh - 1, kw - 1),
        Padding::Valid => (0, 0),
    };
    if h + pad_h < kh || w + pad_w < kw {
        return Err(Error::Shape(format!(
            "conv2d: {h}x{w} input smaller than {kh}x{kw} kernel"
        )));
    }
    let (top, left) = (pad_h / 2, pad_w / 2);
    let ho = (h + pad_h - kh) / stride.0 + 1;
    let wo = (w + pad_w - kw) / stride.1 + 1;
    let patch = ci * kh * kw;
    let cols = ho * wo;

    // im2col: [patch, cols]
    let mut col = vec![0.0; patch * cols];
    let xd = x.data();
    for c in 0..ci {
        for a in 0..kh {
            for b in 0..kw {
                let row = (c * kh + a) * kw + b;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let iy = (oy * stride.0 + a) as isize - top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &xd[(c * h + iy as usize) * w..(c * h + iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride.1 + b) as isize - left as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }

    let mut out = vec![0.0; co * cols];
    if let Some(b) = bias {
        for (o, chunk) in out.chunks_mut(cols).enumerate() {
            chunk.iter_mut().for_each(|v| *v = b[o]);
        }
    }
    gemm(
        co,
        patch,
        cols,
        kernel.data(),
        patch,
        1,
        &col,
        cols,
        1,
        &mut out,
        bias.is_some(),
    );
    Tensor::new(vec![co, ho, wo], out)
}

/// Inference-mode batch normalisation parameters for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            eps: 1e-5,
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        batch_norm_infer(x, &self.gamma, &self.beta, &self.mean, &self.var, self.eps)
    }
}

/// `(x - mean) / sqrt(var + eps) * gamma + beta`, per channel along dim 0.
pub fn batch_norm_infer(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let c = *x
        .dims()
        .first()
        .ok_or_else(|| Error::Shape("batch norm on a rank-0 tensor".into()))?;
    if [gamma.len(), beta.len(), mean.len(), var.len()]
        .iter()
        .any(|&l| l != c)
    {
        return Err(Error::Shape(format!(
            "batch norm parameters do not match {c} channels"
        )));
    }
    let per = x.len() / c;
    let mut out = x.clone();
    for (ch, chunk) in out.data_mut().chunks_mut(per.max(1)).enumerate().take(c) {
        let scale = gamma[ch] / (var[ch] + eps).sqrt();
        let shift = beta[ch] - mean[ch] * scale;
        chunk.iter_mut().for_each(|v| *v = *v * scale + shift);
    }
    Ok(out)
}

/// `x W^T + b` for `x: [in]` or `x: [T, in]`, `W: [out, in]`, `b: [out]`.
pub fn affine(x: &Tensor, w: &Tensor, b: &[f64]) -> Result<Tensor> {
    w.expect_rank(2, "affine weight")?;
    let (out_dim, in_dim) = (w.dims()[0], w.dims()[1]);
    if b.len() != out_dim {
        return Err(Error::Shape(format!(
            "affine bias {} != output {out_dim}",
            b.len()
        )));
    }
    let (rows, was_vector) = match x.dims() {
        [d] if *d == in_dim => (1, true),
        [t, d] if *d == in_dim => (*t, false),
        other => {
            return Err(Error::Shape(format!(
                "affine: input {other:?} vs weight [{out_dim}, {in_dim}]"
            )))
        }
    };
    let mut out = Vec::with_capacity(rows * out_dim);
    for _ in 0..rows {
        out.extend_from_slice(b);
    }
    gemm(
        rows,
        in_dim,
        out_dim,
        x.data(),
        in_dim,
        1,
        w.data(),
        1,
        in_dim,
        &mut out,
        true,
    );
    if was_vector {
        Ok(Tensor::vector(out))
    } else {
        Tensor::new(vec![rows, out_dim], out)
    }
}

pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Row-wise softmax of a rank-2 tensor.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    x.expect_rank(2, "softmax")?;
    let cols = x.dims()[1];
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Per-dimension mean and population standard deviation over time: `[T, D] -> [2D]`.
pub fn global_stat_pool(x: &Tensor) -> Result<Tensor> {
    x.expect_rank(2, "global_stat_pool")?;
    let (t, d) = (x.dims()[0], x.dims()[1]);
    if t == 0 {
        return Err(Error::EmptyInput("statistics pooling over zero frames".into()));
    }
    let mut mean = vec![0.0; d];
    for i in 0..t {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    let mut var = vec![0.0; d];
    for i in 0..t {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut out = mean;
    out.extend(var.into_iter().map(|s| (s / t as f64).sqrt()));
    Ok(Tensor::vector(out))
}

/// Mean over the frequency axis, frame-major: `[C, T, F] -> [T, C]`.
pub fn global_avg_pool_freq(x: &Tensor) -> Result<Tensor> {
    x.expect_rank(3, "global_avg_pool_freq")?;
    let (c, t, f) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    if f == 0 {
        return Err(Error::EmptyInput("pooling over zero frequency bins".into()));
    }
    let mut out = vec![0.0; t * c];
    for ch in 0..c {
        for ti in 0..t {
            let start = (ch * t + ti) * f;
            out[ti * c + ch] = x.data()[start..start + f].iter().sum::<f64>() / f as f64;
        }
    }
    Tensor::new(vec![t, c], out)
}
