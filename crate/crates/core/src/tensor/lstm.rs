//! Bidirectional LSTM, inference only.
//!
//! Gate order within the stacked `4H` parameter rows is input, forget, cell
//! candidate, output (`i, f, g, o`). Each direction has `w_ih: [4H, D]`,
//! `w_hh: [4H, H]`, `b_ih: [4H]`, `b_hh: [4H]`; state starts at zero.
//!
//! Weight names: `<prefix>.l<layer>.<fwd|bwd>.<w_ih|w_hh|b_ih|b_hh>`.

use super::ops::sigmoid_scalar;
use super::{gemm, Tensor, WeightStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

impl LstmDirection {
    pub fn hidden(&self) -> usize {
        self.w_hh.dims()[1]
    }

    pub fn input(&self) -> usize {
        self.w_ih.dims()[1]
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden();
        let d = self.input();
        if self.w_ih.dims() != [4 * h, d]
            || self.w_hh.dims() != [4 * h, h]
            || self.b_ih.len() != 4 * h
            || self.b_hh.len() != 4 * h
        {
            return Err(Error::Shape(format!(
                "inconsistent LSTM parameters: w_ih {:?}, w_hh {:?}, biases {}/{}",
                self.w_ih.dims(),
                self.w_hh.dims(),
                self.b_ih.len(),
                self.b_hh.len()
            )));
        }
        Ok(())
    }

    /// Hidden states for each step of `x: [T, D]`, in processing order.
    fn run(&self, x: &Tensor, reverse: bool) -> Vec<f64> {
        let t_len = x.dims()[0];
        let d = self.input();
        let h = self.hidden();
        // input projections for all steps at once: [T, 4H]
        let mut pre = Vec::with_capacity(t_len * 4 * h);
        for _ in 0..t_len {
            pre.extend(self.b_ih.iter().zip(&self.b_hh).map(|(a, b)| a + b));
        }
        gemm(
            t_len,
            d,
            4 * h,
            x.data(),
            d,
            1,
            self.w_ih.data(),
            1,
            d,
            &mut pre,
            true,
        );
        let mut out = vec![0.0; t_len * h];
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut gates = vec![0.0; 4 * h];
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            gates.copy_from_slice(&pre[t * 4 * h..(t + 1) * 4 * h]);
            gemm(
                1,
                h,
                4 * h,
                &hs,
                h,
                1,
                self.w_hh.data(),
                1,
                h,
                &mut gates,
                true,
            );
            for j in 0..h {
                let i_g = sigmoid_scalar(gates[j]);
                let f_g = sigmoid_scalar(gates[h + j]);
                let g_g = gates[2 * h + j].tanh();
                let o_g = sigmoid_scalar(gates[3 * h + j]);
                cs[j] = f_g * cs[j] + i_g * g_g;
                hs[j] = o_g * cs[j].tanh();
            }
            out[t * h..(t + 1) * h].copy_from_slice(&hs);
        }
        out
    }

    fn from_store(store: &WeightStore, prefix: &str) -> Result<Self> {
        let dir = LstmDirection {
            w_ih: store.get(&format!("{prefix}.w_ih"))?.clone(),
            w_hh: store.get(&format!("{prefix}.w_hh"))?.clone(),
            b_ih: store.get(&format!("{prefix}.b_ih"))?.data().to_vec(),
            b_hh: store.get(&format!("{prefix}.b_hh"))?.data().to_vec(),
        };
        dir.validate()?;
        Ok(dir)
    }

    fn to_store(&self, store: &mut WeightStore, prefix: &str) {
        store.insert(format!("{prefix}.w_ih"), self.w_ih.clone());
        store.insert(format!("{prefix}.w_hh"), self.w_hh.clone());
        store.insert(format!("{prefix}.b_ih"), Tensor::vector(self.b_ih.clone()));
        store.insert(format!("{prefix}.b_hh"), Tensor::vector(self.b_hh.clone()));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
}

/// One bidirectional layer: `[T, D] -> [T, 2H]`, forward half first.
pub fn bilstm_forward(x: &Tensor, layer: &BiLstmLayer) -> Result<Tensor> {
    x.expect_rank(2, "bilstm input")?;
    layer.fwd.validate()?;
    layer.bwd.validate()?;
    let (t_len, d) = (x.dims()[0], x.dims()[1]);
    let h = layer.fwd.hidden();
    if layer.fwd.input() != d || layer.bwd.input() != d || layer.bwd.hidden() != h {
        return Err(Error::Shape(format!(
            "bilstm: input width {d} vs parameters (fwd {}x{}, bwd {}x{})",
            layer.fwd.input(),
            h,
            layer.bwd.input(),
            layer.bwd.hidden()
        )));
    }
    let f = layer.fwd.run(x, false);
    let b = layer.bwd.run(x, true);
    let mut out = Vec::with_capacity(t_len * 2 * h);
    for t in 0..t_len {
        out.extend_from_slice(&f[t * h..(t + 1) * h]);
        out.extend_from_slice(&b[t * h..(t + 1) * h]);
    }
    Tensor::new(vec![t_len, 2 * h], out)
}

/// A stack of bidirectional layers.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub layers: Vec<BiLstmLayer>,
}

impl BiLstm {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = bilstm_forward(&h, layer)?;
        }
        Ok(h)
    }

    pub fn from_store(store: &WeightStore, prefix: &str, n_layers: usize) -> Result<Self> {
        let layers = (0..n_layers)
            .map(|l| {
                Ok(BiLstmLayer {
                    fwd: LstmDirection::from_store(store, &format!("{prefix}.l{l}.fwd"))?,
                    bwd: LstmDirection::from_store(store, &format!("{prefix}.l{l}.bwd"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BiLstm { layers })
    }

    pub fn to_store(&self, store: &mut WeightStore, prefix: &str) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.fwd.to_store(store, &format!("{prefix}.l{l}.fwd"));
            layer.bwd.to_store(store, &format!("{prefix}.l{l}.bwd"));
        }
    }
}
