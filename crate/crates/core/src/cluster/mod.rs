//! Similarity scoring and clustering of segment embeddings.

mod ahc;
mod augment;
mod spectral;
mod train;

pub use ahc::{ahc, assign_with_overlap, select_two_speakers, SpeakerSelection};
pub use augment::{diaconis_augment, random_orthogonal};
pub use spectral::{jacobi_eigen, kmeans, spectral_cluster, Eigen, KMeansResult, SpectralResult};
pub use train::{pair_accuracy, train_v2s_toy, ToySequence, TrainReport};

use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, Result};
use crate::models::V2sScorer;
use crate::tensor::Tensor;

/// Cluster labels per item and the mean embedding of each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub centers: Vec<Embedding>,
}

impl Clustering {
    /// Centres as member means. Labels must cover `0..k` with no empty cluster.
    pub fn from_labels(xs: &[Embedding], labels: Vec<usize>) -> Result<Self> {
        if xs.len() != labels.len() {
            return Err(Error::Shape(format!("{} labels for {} items", labels.len(), xs.len())));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let centers = (0..k)
            .map(|c| Embedding::mean(xs.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(x, _)| x)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Clustering { labels, centers })
    }

    pub fn num_clusters(&self) -> usize {
        self.centers.len()
    }
}

/// Renumber labels by order of first appearance.
pub(crate) fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Dense square matrix of pairwise scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!("{} values for a {n}x{n} matrix", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("similarity matrix".into()));
        }
        Ok(SimilarityMatrix { n, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// `(S + S^T) / 2`.
    pub fn symmetrized(&self) -> SimilarityMatrix {
        let n = self.n;
        let values = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                0.5 * (self.get(i, j) + self.get(j, i))
            })
            .collect();
        SimilarityMatrix { n, values }
    }

    /// Negative entries set to zero.
    pub fn clipped_nonnegative(&self) -> SimilarityMatrix {
        SimilarityMatrix {
            n: self.n,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    /// Row-major text, one row per line, 9 significant digits per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|&v| sig9(v)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-5..=9).contains(&mag) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn cosine_similarity_matrix(xs: &[Embedding]) -> Result<SimilarityMatrix> {
    let n = xs.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let c = cosine_similarity(xs[i].as_slice(), xs[j].as_slice())?;
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    SimilarityMatrix::new(n, values)
}

/// Rows `[x_i ; x_j]` for `j = 0..n`.
pub fn build_v2s_input(xs: &[Embedding], i: usize) -> Result<Tensor> {
    let n = xs.len();
    if i >= n {
        return Err(Error::Parameter(format!("index {i} out of {n} embeddings")));
    }
    let d = xs[i].dim();
    let mut data = Vec::with_capacity(n * 2 * d);
    for x in xs {
        if x.dim() != d {
            return Err(Error::Shape(format!("embedding dims {d} and {}", x.dim())));
        }
        data.extend_from_slice(xs[i].as_slice());
        data.extend_from_slice(x.as_slice());
    }
    Tensor::new(vec![n, 2 * d], data)
}

/// Scores every row of a pair matrix built by [`build_v2s_input`].
pub trait PairScorer: Sync {
    fn score_rows(&self, m: &Tensor) -> Result<Vec<f64>>;
}

impl PairScorer for V2sScorer {
    fn score_rows(&self, m: &Tensor) -> Result<Vec<f64>> {
        self.forward(m)
    }
}

/// Row `i` scores `x_i` against the sequence; the result is symmetrised.
pub fn v2s_similarity_matrix(xs: &[Embedding], scorer: &dyn PairScorer) -> Result<SimilarityMatrix> {
    let n = xs.len();
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        let row = scorer.score_rows(&build_v2s_input(xs, i)?)?;
        if row.len() != n {
            return Err(Error::Shape(format!("scorer returned {} of {n} scores", row.len())));
        }
        values.extend(row);
    }
    Ok(SimilarityMatrix::new(n, values)?.symmetrized())
}
