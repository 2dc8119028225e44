use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::build_v2s_input;
use crate::embedding::{l2_normalize, Embedding};
use crate::error::{Error, Result};
use crate::models::V2sScorer;
use crate::tensor::Tensor;

/// A sequence of embeddings with the speaker of each.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySequence {
    pub embeddings: Vec<Embedding>,
    pub speakers: Vec<usize>,
}

impl ToySequence {
    /// One `(m_i, same-speaker targets)` example per position `i`.
    pub fn examples(&self) -> Result<Vec<(Tensor, Vec<f64>)>> {
        if self.embeddings.len() != self.speakers.len() {
            return Err(Error::Shape(format!(
                "{} embeddings, {} speaker labels",
                self.embeddings.len(),
                self.speakers.len()
            )));
        }
        (0..self.embeddings.len())
            .map(|i| {
                let targets = self
                    .speakers
                    .iter()
                    .map(|&s| if s == self.speakers[i] { 1.0 } else { 0.0 })
                    .collect();
                Ok((build_v2s_input(&self.embeddings, i)?, targets))
            })
            .collect()
    }

    /// `n_seqs` sequences of `len` embeddings from two speakers with orthogonal
    /// unit means in `dim` dimensions, plus Gaussian noise of deviation `sigma`.
    pub fn two_speaker_set(n_seqs: usize, len: usize, dim: usize, sigma: f64, seed: u64) -> Result<Vec<ToySequence>> {
        if dim < 2 {
            return Err(Error::Parameter("need at least 2 dimensions".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        let a = l2_normalize(&(0..dim).map(|_| rng.sample(noise) + rng.random_range(-1.0..1.0)).collect::<Vec<_>>())?;
        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let proj: f64 = raw.iter().zip(&a).map(|(x, y)| x * y).sum();
        let b = l2_normalize(&raw.iter().zip(&a).map(|(x, y)| x - proj * y).collect::<Vec<_>>())?;
        let means = [a, b];
        (0..n_seqs)
            .map(|_| {
                let speakers: Vec<usize> = (0..len).map(|_| rng.random_range(0..2)).collect();
                let embeddings = speakers
                    .iter()
                    .map(|&s| Embedding::new(means[s].iter().map(|m| m + rng.sample(noise)).collect()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ToySequence { embeddings, speakers })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-step loss of each epoch.
    pub losses: Vec<f64>,
    pub steps: usize,
}

/// Plain SGD on binary cross-entropy. Each step takes the gradient over all
/// `m_i` rows of one sequence; sequences are visited in a seeded shuffled order.
pub fn train_v2s_toy(
    scorer: &mut V2sScorer,
    data: &[ToySequence],
    lr: f64,
    epochs: usize,
    seed: u64,
) -> Result<TrainReport> {
    let batches = data
        .iter()
        .map(ToySequence::examples)
        .filter(|b| b.as_ref().map_or(true, |b| !b.is_empty()))
        .collect::<Result<Vec<_>>>()?;
    if batches.is_empty() {
        return Err(Error::EmptyInput("no training examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..batches.len()).collect();
    let mut params = scorer.param_vec();
    let mut losses = Vec::with_capacity(epochs);
    let mut steps = 0;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for &i in &order {
            let (loss, grad) = scorer.loss_and_grad(&batches[i])?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
            sum += loss;
            if lr != 0.0 {
                params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= lr * g);
                scorer.set_params(&params)?;
            }
            steps += 1;
        }
        losses.push(sum / order.len() as f64);
    }
    Ok(TrainReport { losses, steps })
}

/// Fraction of pair rows whose thresholded score (0.5) matches the target.
pub fn pair_accuracy(scorer: &V2sScorer, data: &[ToySequence]) -> Result<f64> {
    let (mut right, mut total) = (0usize, 0usize);
    for seq in data {
        for (m, targets) in seq.examples()? {
            for (p, t) in scorer.forward(&m)?.iter().zip(&targets) {
                right += usize::from((*p > 0.5) == (*t > 0.5));
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no pairs to score".into()));
    }
    Ok(right as f64 / total as f64)
}
