//! Speaker embedding extractor: ResNet34 over 80-bin log-Mel features, statistics
//! pooling over time of the flattened per-frame maps, one affine layer.
//!
//! Weights: `embed.resnet.*`, `embed.fc.{w,b}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::resnet::{flatten_frames, ResNet, ResNetConfig};
use super::Linear;
use crate::dsp::{log_mel, mean_normalize, AudioBuffer, FeatureMatrix};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::tensor::{global_stat_pool, Tensor, WeightStore};

/// Shortest accepted input, in frames.
pub const MIN_EMBED_FRAMES: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub bins: usize,
    pub widths: [usize; 4],
    pub dim: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            bins: 80,
            widths: [32, 64, 128, 256],
            dim: 128,
        }
    }
}

impl EmbedConfig {
    pub fn resnet(&self) -> ResNetConfig {
        ResNetConfig::resnet34(self.widths)
    }

    /// Width of one flattened output frame of the ResNet.
    pub fn frame_width(&self) -> usize {
        let r = self.resnet();
        r.out_channels() * r.out_freq(self.bins)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedNet {
    config: EmbedConfig,
    pub resnet: ResNet,
    pub fc: Linear,
}

impl EmbedNet {
    pub fn random(config: &EmbedConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let resnet = ResNet::random(&config.resnet(), &mut rng);
        let fc = Linear::random(2 * config.frame_width(), config.dim, &mut rng);
        EmbedNet {
            config: config.clone(),
            resnet,
            fc,
        }
    }

    pub fn from_store(config: &EmbedConfig, store: &WeightStore) -> Result<Self> {
        Ok(EmbedNet {
            config: config.clone(),
            resnet: ResNet::from_store(&config.resnet(), store, "embed.resnet")?,
            fc: Linear::from_store(store, "embed.fc", 2 * config.frame_width(), config.dim)?,
        })
    }

    pub fn to_store(&self, store: &mut WeightStore) {
        self.resnet.to_store(store, "embed.resnet");
        self.fc.to_store(store, "embed.fc");
    }

    pub fn config(&self) -> &EmbedConfig {
        &self.config
    }

    pub fn forward(&self, f: &FeatureMatrix) -> Result<Embedding> {
        if f.bins != self.config.bins {
            return Err(Error::Shape(format!(
                "embedder expects {} bins, got {}",
                self.config.bins, f.bins
            )));
        }
        if f.frames < MIN_EMBED_FRAMES {
            return Err(Error::TooShort {
                got: f.frames,
                min: MIN_EMBED_FRAMES,
            });
        }
        let x = Tensor::new(vec![f.frames, f.bins], f.data.clone())?;
        let frames = flatten_frames(&self.resnet.forward(&x)?)?;
        let pooled = global_stat_pool(&frames)?;
        Embedding::new(self.fc.forward(&pooled)?.into_data())
    }

    /// Log-Mel features with per-bin mean removal, then [`forward`](Self::forward).
    pub fn embed_audio(&self, buf: &AudioBuffer) -> Result<Embedding> {
        let f = mean_normalize(&log_mel(buf, self.config.bins)?);
        self.forward(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EmbedConfig {
        EmbedConfig {
            bins: 80,
            widths: [2, 2, 3, 4],
            dim: 128,
        }
    }

    fn features(frames: usize, seed: u64) -> FeatureMatrix {
        let data = (0..frames * 80)
            .map(|i| (((i as u64 + seed) * 40503) % 997) as f64 / 99.7 - 5.0)
            .collect();
        FeatureMatrix::new(data, frames, 80).unwrap()
    }

    #[test]
    fn output_is_128_and_deterministic() {
        let net = EmbedNet::random(&small(), 1);
        let f = features(30, 2);
        let a = net.forward(&f).unwrap();
        assert_eq!(a.dim(), 128);
        assert_eq!(a, net.forward(&f).unwrap());
    }

    #[test]
    fn short_input_rejected() {
        let net = EmbedNet::random(&small(), 1);
        assert!(matches!(
            net.forward(&features(24, 0)),
            Err(Error::TooShort { got: 24, min: 25 })
        ));
        assert!(net.forward(&features(25, 0)).is_ok());
    }

    #[test]
    fn frame_width_follows_stride_law() {
        assert_eq!(EmbedConfig::default().frame_width(), 2560);
        assert_eq!(small().frame_width(), 40);
    }

    #[test]
    fn store_round_trip() {
        let net = EmbedNet::random(&small(), 3);
        let mut store = WeightStore::new();
        net.to_store(&mut store);
        let back = EmbedNet::from_store(&small(), &store).unwrap();
        let f = features(26, 5);
        let (a, b) = (net.forward(&f).unwrap(), back.forward(&f).unwrap());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= 1e-4 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn full_width_embedding() {
        let net = EmbedNet::random(&EmbedConfig::default(), 11);
        let e = net.forward(&features(25, 7)).unwrap();
        assert_eq!(e.dim(), 128);
        assert!(e.as_slice().iter().all(|v| v.is_finite()));
    }
}
