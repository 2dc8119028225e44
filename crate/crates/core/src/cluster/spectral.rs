use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{canonical_labels, SimilarityMatrix};
use crate::error::{Error, Result};

/// Eigenvalues ascending and the matching unit eigenvectors (column `k` of the
/// row-major `n x n` matrix belongs to eigenvalue `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is below `tol`.
pub fn jacobi_eigen(a: &[f64], n: usize, tol: f64) -> Result<Eigen> {
    if a.len() != n * n {
        return Err(Error::Shape(format!("{} values for {n}x{n}", a.len())));
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let off = |m: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&m) > tol {
        sweeps += 1;
        if sweeps > 100 {
            return Err(Error::Numeric("Jacobi iteration did not converge".into()));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + new] = v[r * n + old];
        }
    }
    Ok(Eigen { values, vectors })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        };
        centers.push(points[pick].clone());
    }
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .expect("k >= 1");
            if best != labels[i] {
                labels[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (d, x) in center.iter_mut().enumerate() {
                *x = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    KMeansResult { labels, inertia }
}

/// k-means++ with `restarts` seeded runs; the lowest inertia wins (first on ties).
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || k > points.len() {
        return Err(Error::Parameter(format!("k = {k} for {} points", points.len())));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let res = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    let mut best = best.expect("at least one restart");
    best.labels = canonical_labels(&best.labels);
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

/// Normalised-Laplacian spectral clustering; `k` from the largest eigengap
/// among the first `max_speakers` when not given.
pub fn spectral_cluster(
    s: &SimilarityMatrix,
    max_speakers: usize,
    k: Option<usize>,
    restarts: usize,
    seed: u64,
) -> Result<SpectralResult> {
    let n = s.n;
    if n == 0 {
        return Ok(SpectralResult {
            labels: vec![],
            k: 0,
            eigenvalues: vec![],
        });
    }
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (s.get(i, j), s.get(j, i));
            if a < 0.0 {
                return Err(Error::Precondition(format!("negative similarity at ({i}, {j})")));
            }
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::Precondition(format!("similarity not symmetric at ({i}, {j})")));
            }
        }
    }
    let deg: Vec<f64> = (0..n).map(|i| s.row(i).iter().sum()).collect();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::DegenerateGraph(i));
    }
    let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut lap = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            lap[i * n + j] = id - inv[i] * s.get(i, j) * inv[j];
        }
    }
    let eig = jacobi_eigen(&lap, n, 1e-10)?;
    let k = match k {
        Some(k) if k == 0 || k > n => {
            return Err(Error::Parameter(format!("k = {k} for {n} items")));
        }
        Some(k) => k,
        None => {
            let upper = max_speakers.min(n - 1).max(1);
            if n == 1 {
                1
            } else {
                (1..=upper)
                    .max_by(|&a, &b| {
                        let ga = eig.values[a] - eig.values[a - 1];
                        let gb = eig.values[b] - eig.values[b - 1];
                        ga.total_cmp(&gb).then(b.cmp(&a))
                    })
                    .expect("non-empty range")
            }
        }
    };
    let points: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let row: Vec<f64> = (0..k).map(|c| eig.vectors[r * n + c]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let km = kmeans(&points, k, restarts, seed)?;
    Ok(SpectralResult {
        labels: km.labels,
        k,
        eigenvalues: eig.values,
    })
}
