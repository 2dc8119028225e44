//! Attentive vector-to-sequence scorer.
//!
//! Row `j` of the input is `[x_i ; x_j]`. Per row: affine + ReLU, then
//! multi-head self-attention across rows added back onto its input, then
//! affine + ReLU, affine to one logit, sigmoid.
//!
//! Weights: `v2s.fc1.{w,b}`, `v2s.attn.{wq,bq,wk,bk,wv,bv,wo,bo}`,
//! `v2s.fc2.{w,b}`, `v2s.fc3.{w,b}`. Flat parameter order for training is
//! fc1, attention (see [`mhsa_param_vec`]), fc2, fc3, each weight before bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Linear;
use crate::error::{Error, Result};
use crate::tensor::grad::{
    affine_backward, bce_with_logits, mhsa_backward, mhsa_forward_cached, mhsa_param_vec,
    mhsa_set_params, relu_backward, Differentiable,
};
use crate::tensor::{multi_head_self_attention, relu, sigmoid, MhsaParams, Tensor, WeightStore};

#[derive(Debug, Clone, PartialEq)]
pub struct V2sConfig {
    pub input: usize,
    pub hidden: usize,
    pub heads: usize,
    pub units: usize,
    pub wide: usize,
}

impl Default for V2sConfig {
    fn default() -> Self {
        V2sConfig {
            input: 256,
            hidden: 256,
            heads: 2,
            units: 128,
            wide: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct V2sScorer {
    config: V2sConfig,
    pub fc1: Linear,
    pub attn: MhsaParams,
    pub fc2: Linear,
    pub fc3: Linear,
}

/// Gradient of a mean BCE loss, flattened in parameter order.
pub type V2sGrad = Vec<f64>;

fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(&[rows, cols], |_| rng.random_range(-bound..bound))
}

impl V2sScorer {
    pub fn random(config: &V2sConfig, seed: u64) -> Result<Self> {
        if config.heads == 0 || config.units % config.heads != 0 {
            return Err(Error::Parameter(format!(
                "{} attention units over {} heads",
                config.units, config.heads
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, a) = (config.hidden, config.units);
        let fc1 = Linear::random(config.input, h, &mut rng);
        let attn = MhsaParams {
            heads: config.heads,
            wq: xavier(a, h, &mut rng),
            bq: vec![0.0; a],
            wk: xavier(a, h, &mut rng),
            bk: vec![0.0; a],
            wv: xavier(a, h, &mut rng),
            bv: vec![0.0; a],
            wo: xavier(h, a, &mut rng),
            bo: vec![0.0; h],
        };
        let fc2 = Linear::random(h, config.wide, &mut rng);
        let fc3 = Linear::random(config.wide, 1, &mut rng);
        Ok(V2sScorer {
            config: config.clone(),
            fc1,
            attn,
            fc2,
            fc3,
        })
    }

    pub fn from_store(config: &V2sConfig, store: &WeightStore) -> Result<Self> {
        let attn = MhsaParams::from_store(store, "v2s.attn", config.heads)?;
        if attn.input_dim() != config.hidden
            || attn.units() != config.units
            || attn.output_dim() != config.hidden
        {
            return Err(Error::Shape("v2s.attn does not match the configuration".into()));
        }
        Ok(V2sScorer {
            config: config.clone(),
            fc1: Linear::from_store(store, "v2s.fc1", config.input, config.hidden)?,
            attn,
            fc2: Linear::from_store(store, "v2s.fc2", config.hidden, config.wide)?,
            fc3: Linear::from_store(store, "v2s.fc3", config.wide, 1)?,
        })
    }

    pub fn to_store(&self, store: &mut WeightStore) {
        self.fc1.to_store(store, "v2s.fc1");
        self.attn.to_store(store, "v2s.attn");
        self.fc2.to_store(store, "v2s.fc2");
        self.fc3.to_store(store, "v2s.fc3");
    }

    pub fn config(&self) -> &V2sConfig {
        &self.config
    }

    fn check_input(&self, m: &Tensor) -> Result<()> {
        m.expect_rank(2, "v2s input")?;
        if m.dims()[1] != self.config.input {
            return Err(Error::Shape(format!(
                "v2s rows are {} wide, expected {}",
                m.dims()[1],
                self.config.input
            )));
        }
        if m.dims()[0] == 0 {
            return Err(Error::EmptyInput("v2s over zero rows".into()));
        }
        Ok(())
    }

    /// One pre-sigmoid score per row.
    pub fn logits(&self, m: &Tensor) -> Result<Vec<f64>> {
        self.check_input(m)?;
        let h1 = relu(&self.fc1.forward(m)?);
        let h2 = h1.add(&multi_head_self_attention(&h1, &self.attn)?.output)?;
        let r = relu(&self.fc2.forward(&h2)?);
        Ok(self.fc3.forward(&r)?.into_data())
    }

    /// One score in (0, 1) per row.
    pub fn forward(&self, m: &Tensor) -> Result<Vec<f64>> {
        let z = self.logits(m)?;
        let n = z.len();
        Ok(sigmoid(&Tensor::new(vec![n], z)?).into_data())
    }

    pub fn param_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.fc1.w.data());
        out.extend_from_slice(&self.fc1.b);
        out.extend(mhsa_param_vec(&self.attn));
        for l in [&self.fc2, &self.fc3] {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        let a = &self.attn;
        [&self.fc1, &self.fc2, &self.fc3]
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum::<usize>()
            + [&a.wq, &a.wk, &a.wv, &a.wo].iter().map(|w| w.len()).sum::<usize>()
            + a.bq.len()
            + a.bk.len()
            + a.bv.len()
            + a.bo.len()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        let fill = |l: &mut Linear, pos: &mut usize| {
            let n = l.w.len();
            l.w.data_mut().copy_from_slice(&flat[*pos..*pos + n]);
            *pos += n;
            let m = l.b.len();
            l.b.copy_from_slice(&flat[*pos..*pos + m]);
            *pos += m;
        };
        fill(&mut self.fc1, &mut pos);
        pos += mhsa_set_params(&mut self.attn, &flat[pos..]);
        fill(&mut self.fc2, &mut pos);
        fill(&mut self.fc3, &mut pos);
        debug_assert_eq!(pos, flat.len());
        Ok(())
    }

    /// Mean over sequences of each sequence's mean row BCE, with its gradient.
    pub fn loss_and_grad(&self, batch: &[(Tensor, Vec<f64>)]) -> Result<(f64, V2sGrad)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("empty training batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut grad = vec![0.0; self.param_count()];
        for (m, targets) in batch {
            self.check_input(m)?;
            if targets.len() != m.dims()[0] {
                return Err(Error::Shape(format!(
                    "{} targets for {} rows",
                    targets.len(),
                    m.dims()[0]
                )));
            }
            let n = m.dims()[0];
            let pre1 = self.fc1.forward(m)?;
            let h1 = relu(&pre1);
            let (att, cache) = mhsa_forward_cached(&h1, &self.attn)?;
            let h2 = h1.add(&att)?;
            let pre2 = self.fc2.forward(&h2)?;
            let r = relu(&pre2);
            let z = self.fc3.forward(&r)?;
            let (loss, dz) = bce_with_logits(z.data(), targets);
            total += loss * scale;

            let dz = Tensor::new(vec![n, 1], dz.into_iter().map(|g| g * scale).collect())?;
            let g3 = affine_backward(&r, &self.fc3.w, &dz)?;
            let dpre2 = relu_backward(&pre2, &g3.dx);
            let g2 = affine_backward(&h2, &self.fc2.w, &dpre2)?;
            let ga = mhsa_backward(&self.attn, &cache, &g2.dx)?;
            let dh1 = g2.dx.add(&ga.dx)?;
            let dpre1 = relu_backward(&pre1, &dh1);
            let g1 = affine_backward(m, &self.fc1.w, &dpre1)?;

            let attn = ga.flat();
            let parts: [&[f64]; 7] = [g1.dw.data(), &g1.db, &attn, g2.dw.data(), &g2.db, g3.dw.data(), &g3.db];
            let mut pos = 0;
            for part in parts {
                grad[pos..pos + part.len()].iter_mut().zip(part).for_each(|(g, d)| *g += d);
                pos += part.len();
            }
        }
        Ok((total, grad))
    }
}

/// The scorer's loss on a fixed batch, as a function of its flat parameters.
pub struct V2sObjective<'a> {
    pub scorer: &'a V2sScorer,
    pub batch: &'a [(Tensor, Vec<f64>)],
}

impl Differentiable for V2sObjective<'_> {
    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut s = self.scorer.clone();
        s.set_params(params)?;
        s.loss_and_grad(self.batch)
    }
}
