//! Frame-level speech detector: ResNet18 over 32-bin log-Mel features, frequency
//! average pooling, two BiLSTM layers, two affine layers and a sigmoid.
//!
//! Weights: `vad.resnet.*`, `vad.lstm.*`, `vad.fc1.{w,b}`, `vad.fc2.{w,b}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::resnet::{ResNet, ResNetConfig};
use super::{check_bilstm, random_bilstm, Linear};
use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::tensor::{global_avg_pool_freq, relu, sigmoid, BiLstm, Tensor, WeightStore};

#[derive(Debug, Clone, PartialEq)]
pub struct VadConfig {
    pub bins: usize,
    pub widths: [usize; 4],
    pub lstm_hidden: usize,
    pub fc_hidden: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig {
            bins: 32,
            widths: [16, 32, 64, 128],
            lstm_hidden: 64,
            fc_hidden: 64,
        }
    }
}

impl VadConfig {
    pub fn resnet(&self) -> ResNetConfig {
        ResNetConfig::resnet18(self.widths)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadNet {
    config: VadConfig,
    pub resnet: ResNet,
    pub lstm: BiLstm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl VadNet {
    pub fn random(config: &VadConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let resnet = ResNet::random(&config.resnet(), &mut rng);
        let lstm = random_bilstm(config.widths[3], config.lstm_hidden, 2, &mut rng);
        let fc1 = Linear::random(2 * config.lstm_hidden, config.fc_hidden, &mut rng);
        let fc2 = Linear::random(config.fc_hidden, 1, &mut rng);
        VadNet {
            config: config.clone(),
            resnet,
            lstm,
            fc1,
            fc2,
        }
    }

    pub fn from_store(config: &VadConfig, store: &WeightStore) -> Result<Self> {
        let lstm = BiLstm::from_store(store, "vad.lstm", 2)?;
        check_bilstm(&lstm, config.widths[3], config.lstm_hidden, "vad.lstm")?;
        Ok(VadNet {
            config: config.clone(),
            resnet: ResNet::from_store(&config.resnet(), store, "vad.resnet")?,
            lstm,
            fc1: Linear::from_store(store, "vad.fc1", 2 * config.lstm_hidden, config.fc_hidden)?,
            fc2: Linear::from_store(store, "vad.fc2", config.fc_hidden, 1)?,
        })
    }

    pub fn to_store(&self, store: &mut WeightStore) {
        self.resnet.to_store(store, "vad.resnet");
        self.lstm.to_store(store, "vad.lstm");
        self.fc1.to_store(store, "vad.fc1");
        self.fc2.to_store(store, "vad.fc2");
    }

    pub fn config(&self) -> &VadConfig {
        &self.config
    }

    /// One speech probability per input frame.
    pub fn forward(&self, f: &FeatureMatrix) -> Result<Vec<f64>> {
        if f.bins != self.config.bins {
            return Err(Error::Shape(format!(
                "VAD expects {} bins, got {}",
                self.config.bins, f.bins
            )));
        }
        if f.frames == 0 {
            return Err(Error::EmptyInput("VAD over zero frames".into()));
        }
        let x = Tensor::new(vec![f.frames, f.bins], f.data.clone())?;
        let maps = self.resnet.forward(&x)?;
        let seq = global_avg_pool_freq(&maps)?;
        let h = self.lstm.forward(&seq)?;
        let h = relu(&self.fc1.forward(&h)?);
        Ok(sigmoid(&self.fc2.forward(&h)?).into_data())
    }
}
