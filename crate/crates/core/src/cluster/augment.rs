use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::Embedding;
use crate::error::{Error, Result};

/// Q from the QR decomposition of a Gaussian matrix, columns flipped so that
/// `diag(R) > 0`; row-major `d x d`.
pub fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(q[(i, j)]);
        }
    }
    out
}

/// With probability `prob`, rotate every embedding by one shared random
/// orthogonal matrix; otherwise return the input unchanged.
pub fn diaconis_augment(xs: &[Embedding], seed: u64, prob: f64) -> Result<Vec<Embedding>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::EmptyInput("no embeddings to augment".into()))?;
    let d = first.dim();
    if xs.iter().any(|x| x.dim() != d) {
        return Err(Error::Shape("embeddings of differing dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.random::<f64>() >= prob {
        return Ok(xs.to_vec());
    }
    let q = random_orthogonal(d, &mut rng);
    xs.iter()
        .map(|x| {
            let v = x.as_slice();
            Embedding::new(
                (0..d)
                    .map(|i| q[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
                    .collect(),
            )
        })
        .collect()
}
