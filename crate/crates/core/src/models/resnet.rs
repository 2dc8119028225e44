//! Residual front-end shared by the VAD, embedding and TSVAD networks.
//!
//! Stem: 3x3 conv (stride 1) + BN + ReLU, no max-pool. Each stage stacks basic
//! blocks (3x3 conv, BN, ReLU, 3x3 conv, BN, shortcut add, ReLU); the first block
//! of a stage carries the stage stride and, when the shape changes, a 1x1
//! conv + BN shortcut. Convolutions have no bias. Input is `[T, F]` features,
//! treated as a one-channel image with time as the first spatial axis.
//!
//! Weight names under `<prefix>`:
//! `stem.conv.kernel`, `stem.bn.{gamma,beta,mean,var}`,
//! `stage{s}.block{b}.{conv1,conv2}.kernel`, `stage{s}.block{b}.{bn1,bn2}.*`,
//! `stage{s}.block{b}.down.conv.kernel`, `stage{s}.block{b}.down.bn.*` (1-based).

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{conv2d, relu, BatchNorm, Padding, Tensor, WeightStore};

#[derive(Debug, Clone, PartialEq)]
pub struct ResNetConfig {
    pub widths: [usize; 4],
    pub blocks: [usize; 4],
    /// (time, frequency) stride of each stage's first block.
    pub strides: [(usize, usize); 4],
}

impl ResNetConfig {
    /// ResNet18 layout used by the VAD network.
    pub fn resnet18(widths: [usize; 4]) -> Self {
        ResNetConfig {
            widths,
            blocks: [2, 2, 2, 2],
            strides: [(1, 1), (1, 2), (1, 2), (1, 2)],
        }
    }

    /// ResNet34 layout used by the embedding and TSVAD networks.
    pub fn resnet34(widths: [usize; 4]) -> Self {
        ResNetConfig {
            widths,
            blocks: [3, 4, 6, 3],
            strides: [(1, 1), (1, 2), (1, 2), (1, 2)],
        }
    }

    /// Frequency extent after all stages, for `bins` input bins.
    pub fn out_freq(&self, bins: usize) -> usize {
        self.strides
            .iter()
            .fold(bins, |f, &(_, s)| (f - 1) / s + 1)
    }

    /// Time extent after all stages.
    pub fn out_time(&self, frames: usize) -> usize {
        self.strides
            .iter()
            .fold(frames, |t, &(s, _)| (t - 1) / s + 1)
    }

    pub fn out_channels(&self) -> usize {
        self.widths[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBn {
    kernel: Tensor,
    bn: BatchNorm,
    stride: (usize, usize),
}

impl ConvBn {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.bn
            .apply(&conv2d(x, &self.kernel, None, self.stride, Padding::Same)?)
    }

    fn random(cin: usize, cout: usize, k: usize, stride: (usize, usize), rng: &mut impl Rng) -> Self {
        let fan_in = (cin * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        ConvBn {
            kernel: Tensor::from_fn(&[cout, cin, k, k], |_| rng.random_range(-bound..bound)),
            bn: BatchNorm::identity(cout),
            stride,
        }
    }

    fn load(
        store: &WeightStore,
        conv: &str,
        bn: &str,
        shape: [usize; 4],
        stride: (usize, usize),
    ) -> Result<Self> {
        let kernel = store.get(&format!("{conv}.kernel"))?.clone();
        if kernel.dims() != shape {
            return Err(Error::Shape(format!(
                "{conv}.kernel is {:?}, expected {shape:?}",
                kernel.dims()
            )));
        }
        let get = |n: &str| -> Result<Vec<f64>> {
            let v = store.get(&format!("{bn}.{n}"))?.data().to_vec();
            if v.len() != shape[0] {
                return Err(Error::Shape(format!("{bn}.{n} has {} entries", v.len())));
            }
            Ok(v)
        };
        Ok(ConvBn {
            kernel,
            bn: BatchNorm {
                gamma: get("gamma")?,
                beta: get("beta")?,
                mean: get("mean")?,
                var: get("var")?,
                eps: 1e-5,
            },
            stride,
        })
    }

    fn save(&self, store: &mut WeightStore, conv: &str, bn: &str) {
        store.insert(format!("{conv}.kernel"), self.kernel.clone());
        for (n, v) in [
            ("gamma", &self.bn.gamma),
            ("beta", &self.bn.beta),
            ("mean", &self.bn.mean),
            ("var", &self.bn.var),
        ] {
            store.insert(format!("{bn}.{n}"), Tensor::vector(v.clone()));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BasicBlock {
    conv1: ConvBn,
    conv2: ConvBn,
    down: Option<ConvBn>,
}

impl BasicBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = relu(&self.conv1.forward(x)?);
        let h = self.conv2.forward(&h)?;
        let skip = match &self.down {
            Some(d) => d.forward(x)?,
            None => x.clone(),
        };
        Ok(relu(&h.add(&skip)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResNet {
    config: ResNetConfig,
    stem: ConvBn,
    stages: Vec<Vec<BasicBlock>>,
}

fn block_plan(config: &ResNetConfig) -> Vec<Vec<(usize, usize, (usize, usize))>> {
    let mut cin = config.widths[0];
    (0..4)
        .map(|s| {
            (0..config.blocks[s])
                .map(|b| {
                    let stride = if b == 0 { config.strides[s] } else { (1, 1) };
                    let entry = (cin, config.widths[s], stride);
                    cin = config.widths[s];
                    entry
                })
                .collect()
        })
        .collect()
}

impl ResNet {
    pub fn config(&self) -> &ResNetConfig {
        &self.config
    }

    /// He-uniform kernels, identity batch norm.
    pub fn random(config: &ResNetConfig, rng: &mut impl Rng) -> Self {
        let stem = ConvBn::random(1, config.widths[0], 3, (1, 1), rng);
        let stages = block_plan(config)
            .into_iter()
            .map(|blocks| {
                blocks
                    .into_iter()
                    .map(|(cin, cout, stride)| BasicBlock {
                        conv1: ConvBn::random(cin, cout, 3, stride, rng),
                        conv2: ConvBn::random(cout, cout, 3, (1, 1), rng),
                        down: (cin != cout || stride != (1, 1))
                            .then(|| ConvBn::random(cin, cout, 1, stride, rng)),
                    })
                    .collect()
            })
            .collect();
        ResNet {
            config: config.clone(),
            stem,
            stages,
        }
    }

    pub fn from_store(config: &ResNetConfig, store: &WeightStore, prefix: &str) -> Result<Self> {
        let w0 = config.widths[0];
        let stem = ConvBn::load(
            store,
            &format!("{prefix}.stem.conv"),
            &format!("{prefix}.stem.bn"),
            [w0, 1, 3, 3],
            (1, 1),
        )?;
        let stages = block_plan(config)
            .into_iter()
            .enumerate()
            .map(|(s, blocks)| {
                blocks
                    .into_iter()
                    .enumerate()
                    .map(|(b, (cin, cout, stride))| {
                        let base = format!("{prefix}.stage{}.block{}", s + 1, b + 1);
                        Ok(BasicBlock {
                            conv1: ConvBn::load(
                                store,
                                &format!("{base}.conv1"),
                                &format!("{base}.bn1"),
                                [cout, cin, 3, 3],
                                stride,
                            )?,
                            conv2: ConvBn::load(
                                store,
                                &format!("{base}.conv2"),
                                &format!("{base}.bn2"),
                                [cout, cout, 3, 3],
                                (1, 1),
                            )?,
                            down: if cin != cout || stride != (1, 1) {
                                Some(ConvBn::load(
                                    store,
                                    &format!("{base}.down.conv"),
                                    &format!("{base}.down.bn"),
                                    [cout, cin, 1, 1],
                                    stride,
                                )?)
                            } else {
                                None
                            },
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResNet {
            config: config.clone(),
            stem,
            stages,
        })
    }

    pub fn to_store(&self, store: &mut WeightStore, prefix: &str) {
        self.stem.save(
            store,
            &format!("{prefix}.stem.conv"),
            &format!("{prefix}.stem.bn"),
        );
        for (s, blocks) in self.stages.iter().enumerate() {
            for (b, block) in blocks.iter().enumerate() {
                let base = format!("{prefix}.stage{}.block{}", s + 1, b + 1);
                block
                    .conv1
                    .save(store, &format!("{base}.conv1"), &format!("{base}.bn1"));
                block
                    .conv2
                    .save(store, &format!("{base}.conv2"), &format!("{base}.bn2"));
                if let Some(d) = &block.down {
                    d.save(store, &format!("{base}.down.conv"), &format!("{base}.down.bn"));
                }
            }
        }
    }

    /// `[T, F]` features to `[C, T', F']` feature maps.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        features.expect_rank(2, "resnet input")?;
        let (t, f) = (features.dims()[0], features.dims()[1]);
        let x = features.clone().reshape(vec![1, t, f])?;
        let mut h = relu(&self.stem.forward(&x)?);
        for block in self.stages.iter().flatten() {
            h = block.forward(&h)?;
        }
        Ok(h)
    }
}

/// `[C, T, F]` maps to `[T, C*F]` per-frame vectors (channel-major within a frame).
pub fn flatten_frames(maps: &Tensor) -> Result<Tensor> {
    maps.expect_rank(3, "flatten_frames")?;
    let (c, t, f) = (maps.dims()[0], maps.dims()[1], maps.dims()[2]);
    let mut out = vec![0.0; t * c * f];
    let d = maps.data();
    for ch in 0..c {
        for ti in 0..t {
            let src = &d[(ch * t + ti) * f..(ch * t + ti + 1) * f];
            out[ti * c * f + ch * f..ti * c * f + (ch + 1) * f].copy_from_slice(src);
        }
    }
    Tensor::new(vec![t, c * f], out)
}
