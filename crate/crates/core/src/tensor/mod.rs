//! Dense row-major arrays and the neural layers built on them.
//!
//! There is no batch dimension: every forward pass handles one recording. Values are
//! `f64` in memory; the on-disk weight format stores `f32`, and [`WeightStore`]
//! rounds on insert so a save/load cycle is bit-exact.

mod attention;
pub mod grad;
mod lstm;
mod ops;
mod weights;

pub use attention::{multi_head_self_attention, AttentionOutput, MhsaParams};
pub use lstm::{bilstm_forward, BiLstm, BiLstmLayer, LstmDirection};
pub use ops::{
    affine, batch_norm_infer, conv2d, global_avg_pool_freq, global_stat_pool, relu, sigmoid,
    softmax_rows, BatchNorm, Padding,
};
pub use weights::{load_weights, save_weights, WeightStore, WEIGHT_MAGIC};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) && !data.is_empty() {
            return Err(Error::Shape(format!("zero extent in {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn filled(dims: &[usize], v: f64) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![v; dims.iter().product()],
        }
    }

    pub fn vector(v: Vec<f64>) -> Self {
        Tensor {
            dims: vec![v.len()],
            data: v,
        }
    }

    /// `rows x cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Tensor::new(dims, self.data)
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.dims[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::Shape(format!(
                "{what}: expected rank {rank}, got dims {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Transpose of a rank-2 tensor.
    pub fn transposed(&self) -> Tensor {
        let (r, c) = (self.dims[0], self.dims[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            dims: vec![c, r],
            data: out,
        }
    }

    /// `self (m x k) @ other (k x n)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_rank(2, "matmul lhs")?;
        other.expect_rank(2, "matmul rhs")?;
        let (m, k) = (self.dims[0], self.dims[1]);
        let (k2, n) = (other.dims[0], other.dims[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}",
                self.dims, other.dims
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, k, 1, &other.data, n, 1, &mut out, false);
        Ok(Tensor {
            dims: vec![m, n],
            data: out,
        })
    }

    /// `self (m x k) @ other^T` where `other` is `n x k`.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_rank(2, "matmul_t lhs")?;
        other.expect_rank(2, "matmul_t rhs")?;
        let (m, k) = (self.dims[0], self.dims[1]);
        let (n, k2) = (other.dims[0], other.dims[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul_t {:?} x {:?}^T",
                self.dims, other.dims
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, k, 1, &other.data, 1, k, &mut out, false);
        Ok(Tensor {
            dims: vec![m, n],
            data: out,
        })
    }

    /// `self^T @ other` where `self` is `k x m` and `other` is `k x n`.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_rank(2, "t_matmul lhs")?;
        other.expect_rank(2, "t_matmul rhs")?;
        let (k, m) = (self.dims[0], self.dims[1]);
        let (k2, n) = (other.dims[0], other.dims[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "t_matmul {:?}^T x {:?}",
                self.dims, other.dims
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, 1, m, &other.data, n, 1, &mut out, false);
        Ok(Tensor {
            dims: vec![m, n],
            data: out,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "add {:?} + {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// `c (m x n, row-major, contiguous) (+)= a (m x k) * b (k x n)` with arbitrary
/// strides on `a` and `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    assert!(a.len() >= (m - 1) * rsa + (k - 1) * csa + 1);
    assert!(b.len() >= (k - 1) * rsb + (n - 1) * csb + 1);
    assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: bounds on all three operands are checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.at(&[1, 2]), 5.0);
        assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::from_fn(&[3, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::from_fn(&[4, 5], |i| (i as f64 * 0.11).cos());
        let ab = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let naive: f64 = (0..4).map(|k| a.at(&[i, k]) * b.at(&[k, j])).sum();
                assert!((ab.at(&[i, j]) - naive).abs() < 1e-12);
            }
        }
        assert_eq!(a.matmul_t(&b.transposed()).unwrap(), ab);
        let at_b = a.transposed().t_matmul(&b).unwrap();
        for (x, y) in at_b.data().iter().zip(ab.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.matmul(&a).is_err());
    }
}
