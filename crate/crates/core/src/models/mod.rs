//! Network assemblies built from the tensor layers.
//!
//! Every assembly can be built from random weights (seeded, He-style uniform
//! fan-in scaling, identity batch norm) or from a [`WeightStore`].

mod arcface;
mod embed;
pub mod resnet;
mod tsvad;
mod v2s;
mod vad;

pub use arcface::{arcface_logits, ARCFACE_MARGIN, ARCFACE_SCALE};
pub use embed::{EmbedConfig, EmbedNet, MIN_EMBED_FRAMES};
pub use resnet::{ResNet, ResNetConfig};
pub use tsvad::{TsvadConfig, TsvadNet};
pub use v2s::{V2sConfig, V2sGrad, V2sObjective, V2sScorer};
pub use vad::{VadConfig, VadNet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{affine, BiLstm, BiLstmLayer, LstmDirection, Tensor, WeightStore};

/// Fully connected layer, `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn random(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / input as f64).sqrt();
        Linear {
            w: Tensor::from_fn(&[output, input], |_| rng.random_range(-bound..bound)),
            b: vec![0.0; output],
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            w: Tensor::zeros(&[output, input]),
            b: vec![0.0; output],
        }
    }

    pub fn input(&self) -> usize {
        self.w.dims()[1]
    }

    pub fn output(&self) -> usize {
        self.w.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        affine(x, &self.w, &self.b)
    }

    pub fn from_store(store: &WeightStore, prefix: &str, input: usize, output: usize) -> Result<Self> {
        let w = store.get(&format!("{prefix}.w"))?.clone();
        let b = store.get(&format!("{prefix}.b"))?.data().to_vec();
        if w.dims() != [output, input] || b.len() != output {
            return Err(Error::Shape(format!(
                "{prefix}: weight {:?} bias {}, expected [{output}, {input}]",
                w.dims(),
                b.len()
            )));
        }
        Ok(Linear { w, b })
    }

    pub fn to_store(&self, store: &mut WeightStore, prefix: &str) {
        store.insert(format!("{prefix}.w"), self.w.clone());
        store.insert(format!("{prefix}.b"), Tensor::vector(self.b.clone()));
    }
}

/// Uniform in `±1/sqrt(H)` for every LSTM parameter.
pub(crate) fn random_bilstm(input: usize, hidden: usize, layers: usize, rng: &mut impl Rng) -> BiLstm {
    let bound = 1.0 / (hidden as f64).sqrt();
    let dir = |d: usize, rng: &mut dyn rand::RngCore| {
        let mut r = |n: usize| (0..n).map(|_| rng.random_range(-bound..bound)).collect::<Vec<_>>();
        LstmDirection {
            w_ih: Tensor::new(vec![4 * hidden, d], r(4 * hidden * d)).expect("sized"),
            w_hh: Tensor::new(vec![4 * hidden, hidden], r(4 * hidden * hidden)).expect("sized"),
            b_ih: r(4 * hidden),
            b_hh: r(4 * hidden),
        }
    };
    let layers = (0..layers)
        .map(|l| {
            let d = if l == 0 { input } else { 2 * hidden };
            BiLstmLayer {
                fwd: dir(d, rng),
                bwd: dir(d, rng),
            }
        })
        .collect();
    BiLstm { layers }
}

pub(crate) fn check_bilstm(lstm: &BiLstm, input: usize, hidden: usize, prefix: &str) -> Result<()> {
    for (l, layer) in lstm.layers.iter().enumerate() {
        let d = if l == 0 { input } else { 2 * hidden };
        for dir in [&layer.fwd, &layer.bwd] {
            if dir.input() != d || dir.hidden() != hidden {
                return Err(Error::Shape(format!(
                    "{prefix}.l{l}: input {} hidden {}, expected {d}/{hidden}",
                    dir.input(),
                    dir.hidden()
                )));
            }
        }
    }
    Ok(())
}
