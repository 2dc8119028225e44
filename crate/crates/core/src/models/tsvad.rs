//! Target-speaker detector: ResNet34 + affine frame identity vectors, each
//! concatenated with the target embedding, two BiLSTM layers, affine, sigmoid.
//!
//! Weights: `tsvad.resnet.*`, `tsvad.frame_fc.{w,b}`, `tsvad.lstm.*`, `tsvad.out.{w,b}`.
//! The ResNet block shares its layout with `embed.resnet`; see
//! [`TsvadNet::init_from_embedder`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::embed::EmbedConfig;
use super::resnet::{flatten_frames, ResNet};
use super::{check_bilstm, random_bilstm, Linear};
use crate::dsp::FeatureMatrix;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, BiLstm, Tensor, WeightStore};

#[derive(Debug, Clone, PartialEq)]
pub struct TsvadConfig {
    pub embed: EmbedConfig,
    pub lstm_hidden: usize,
}

impl Default for TsvadConfig {
    fn default() -> Self {
        TsvadConfig {
            embed: EmbedConfig::default(),
            lstm_hidden: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsvadNet {
    config: TsvadConfig,
    pub resnet: ResNet,
    pub frame_fc: Linear,
    pub lstm: BiLstm,
    pub out: Linear,
}

impl TsvadNet {
    fn dim(&self) -> usize {
        self.config.embed.dim
    }

    pub fn random(config: &TsvadConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = &config.embed;
        let resnet = ResNet::random(&e.resnet(), &mut rng);
        let frame_fc = Linear::random(e.frame_width(), e.dim, &mut rng);
        let lstm = random_bilstm(2 * e.dim, config.lstm_hidden, 2, &mut rng);
        let out = Linear::random(2 * config.lstm_hidden, 1, &mut rng);
        TsvadNet {
            config: config.clone(),
            resnet,
            frame_fc,
            lstm,
            out,
        }
    }

    pub fn from_store(config: &TsvadConfig, store: &WeightStore) -> Result<Self> {
        let e = &config.embed;
        let lstm = BiLstm::from_store(store, "tsvad.lstm", 2)?;
        check_bilstm(&lstm, 2 * e.dim, config.lstm_hidden, "tsvad.lstm")?;
        Ok(TsvadNet {
            config: config.clone(),
            resnet: ResNet::from_store(&e.resnet(), store, "tsvad.resnet")?,
            frame_fc: Linear::from_store(store, "tsvad.frame_fc", e.frame_width(), e.dim)?,
            lstm,
            out: Linear::from_store(store, "tsvad.out", 2 * config.lstm_hidden, 1)?,
        })
    }

    pub fn to_store(&self, store: &mut WeightStore) {
        self.resnet.to_store(store, "tsvad.resnet");
        self.frame_fc.to_store(store, "tsvad.frame_fc");
        self.lstm.to_store(store, "tsvad.lstm");
        self.out.to_store(store, "tsvad.out");
    }

    /// Copy `embed.resnet.*` onto `tsvad.resnet.*` in `store`; returns the entry count.
    pub fn init_from_embedder(store: &mut WeightStore) -> usize {
        store.copy_prefix("embed.resnet", "tsvad.resnet")
    }

    pub fn config(&self) -> &TsvadConfig {
        &self.config
    }

    /// Frame-level identity vectors `[T, dim]`; independent of the target.
    pub fn identity_sequence(&self, f: &FeatureMatrix) -> Result<Tensor> {
        let bins = self.config.embed.bins;
        if f.bins != bins {
            return Err(Error::Shape(format!("TSVAD expects {bins} bins, got {}", f.bins)));
        }
        if f.frames == 0 {
            return Err(Error::EmptyInput("TSVAD over zero frames".into()));
        }
        let x = Tensor::new(vec![f.frames, f.bins], f.data.clone())?;
        self.frame_fc
            .forward(&flatten_frames(&self.resnet.forward(&x)?)?)
    }

    /// Per-frame target probabilities given a precomputed identity sequence.
    pub fn track_from_identity(&self, ids: &Tensor, target: &Embedding) -> Result<Vec<f64>> {
        let d = self.dim();
        if target.dim() != d {
            return Err(Error::Shape(format!("target dim {} vs {d}", target.dim())));
        }
        let t = ids.dims()[0];
        let mut cat = Vec::with_capacity(t * 2 * d);
        for i in 0..t {
            cat.extend_from_slice(ids.row(i));
            cat.extend_from_slice(target.as_slice());
        }
        let h = self.lstm.forward(&Tensor::new(vec![t, 2 * d], cat)?)?;
        Ok(sigmoid(&self.out.forward(&h)?).into_data())
    }

    pub fn forward(&self, f: &FeatureMatrix, target: &Embedding) -> Result<Vec<f64>> {
        if target.dim() != self.dim() {
            return Err(Error::Shape(format!("target dim {} vs {}", target.dim(), self.dim())));
        }
        self.track_from_identity(&self.identity_sequence(f)?, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LstmDirection;

    fn small() -> TsvadConfig {
        TsvadConfig {
            embed: EmbedConfig {
                bins: 80,
                widths: [2, 2, 3, 3],
                dim: 128,
            },
            lstm_hidden: 4,
        }
    }

    fn features(frames: usize) -> FeatureMatrix {
        let data = (0..frames * 80).map(|i| ((i * 7919) % 613) as f64 / 61.3 - 5.0).collect();
        FeatureMatrix::new(data, frames, 80).unwrap()
    }

    fn target(v: f64, j: usize) -> Embedding {
        let mut e = vec![0.0; 128];
        e[j] = v;
        Embedding::new(e).unwrap()
    }

    #[test]
    fn track_shape_and_range() {
        let net = TsvadNet::random(&small(), 2);
        let p = net.forward(&features(17), &target(1.0, 0)).unwrap();
        assert_eq!(p.len(), 17);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn different_targets_give_different_tracks() {
        let net = TsvadNet::random(&small(), 3);
        let f = features(12);
        let a = net.forward(&f, &target(3.0, 0)).unwrap();
        let b = net.forward(&f, &target(-3.0, 5)).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn zeroed_target_path_ignores_target() {
        let mut net = TsvadNet::random(&small(), 4);
        let zero_cols = |dir: &mut LstmDirection| {
            let (rows, cols) = (dir.w_ih.dims()[0], dir.w_ih.dims()[1]);
            for r in 0..rows {
                for c in cols / 2..cols {
                    dir.w_ih.set(&[r, c], 0.0);
                }
            }
        };
        zero_cols(&mut net.lstm.layers[0].fwd);
        zero_cols(&mut net.lstm.layers[0].bwd);
        let f = features(10);
        let a = net.forward(&f, &target(0.0, 0)).unwrap();
        let b = net.forward(&f, &target(5.0, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn target_dim_checked() {
        let net = TsvadNet::random(&small(), 5);
        let e = Embedding::new(vec![1.0; 64]).unwrap();
        assert!(matches!(net.forward(&features(5), &e), Err(Error::Shape(_))));
    }

    #[test]
    fn resnet_copied_from_embedder() {
        let cfg = small();
        let embed = super::super::EmbedNet::random(&cfg.embed, 8);
        let tsvad = TsvadNet::random(&cfg, 9);
        let mut store = WeightStore::new();
        embed.to_store(&mut store);
        tsvad.to_store(&mut store);
        assert!(TsvadNet::init_from_embedder(&mut store) > 0);
        let loaded = TsvadNet::from_store(&cfg, &store).unwrap();
        let mut only_embed = WeightStore::new();
        embed.to_store(&mut only_embed);
        let resnet = ResNet::from_store(&cfg.embed.resnet(), &only_embed, "embed.resnet").unwrap();
        assert_eq!(loaded.resnet, resnet);
    }
}
