//! Reverse-mode gradients for the small trainable subgraph (affine, ReLU,
//! self-attention, sigmoid + binary cross-entropy) and a central-difference checker.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::MhsaParams;
use super::ops::{affine, sigmoid_scalar, softmax_rows};
use super::Tensor;
use crate::error::{Error, Result};

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Differentiable {
    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, params: &[f64]) -> Result<f64> {
        self.loss_and_grad(params).map(|(l, _)| l)
    }
}

impl<F> Differentiable for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(params)
    }
}

/// Central differences against the analytic gradient on `probes` sampled
/// coordinates. Returns `max |g_a - g_n| / max(1e-8, |g_a| + |g_n|)`.
pub fn finite_diff_check(
    f: &dyn Differentiable,
    params: &[f64],
    h: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let (loss, analytic) = f.loss_and_grad(params)?;
    if !loss.is_finite() || analytic.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("loss or analytic gradient".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} gradient entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let coords: Vec<usize> = if probes >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, params.len(), probes).into_vec()
    };
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for i in coords {
        let orig = p[i];
        p[i] = orig + h;
        let up = f.loss(&p)?;
        p[i] = orig - h;
        let down = f.loss(&p)?;
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("loss at coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * h);
        let ga = analytic[i];
        let err = (ga - numeric).abs() / (ga.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Gradients of `y = x W^T + b` for `x: [T, in]`.
pub struct AffineGrad {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Vec<f64>,
}

pub fn affine_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<AffineGrad> {
    let dx = dy.matmul(w)?;
    let dw = dy.t_matmul(x)?;
    let out = w.dims()[0];
    let mut db = vec![0.0; out];
    for i in 0..dy.dims()[0] {
        for (d, g) in db.iter_mut().zip(dy.row(i)) {
            *d += g;
        }
    }
    Ok(AffineGrad { dx, dw, db })
}

pub fn relu_backward(pre: &Tensor, dy: &Tensor) -> Tensor {
    Tensor::new(
        pre.dims().to_vec(),
        pre.data()
            .iter()
            .zip(dy.data())
            .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
            .collect(),
    )
    .expect("same shape")
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `targets`, computed
/// from logits for stability, and its gradient with respect to the logits.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        // log(1 + e^z) - y z, written to avoid overflow
        loss += z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid_scalar(z) - y) / n);
    }
    (loss / n, grad)
}

/// Intermediate values of one attention forward pass.
pub struct AttentionCache {
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Vec<Tensor>,
    concat: Tensor,
}

pub struct MhsaGrad {
    pub dx: Tensor,
    pub dwq: Tensor,
    pub dbq: Vec<f64>,
    pub dwk: Tensor,
    pub dbk: Vec<f64>,
    pub dwv: Tensor,
    pub dbv: Vec<f64>,
    pub dwo: Tensor,
    pub dbo: Vec<f64>,
}

impl MhsaGrad {
    /// Flattened in the order of [`mhsa_param_vec`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in [
            (&self.dwq, &self.dbq),
            (&self.dwk, &self.dbk),
            (&self.dwv, &self.dbv),
            (&self.dwo, &self.dbo),
        ] {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Flat parameter order: `wq, bq, wk, bk, wv, bv, wo, bo`.
pub fn mhsa_param_vec(p: &MhsaParams) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in [(&p.wq, &p.bq), (&p.wk, &p.bk), (&p.wv, &p.bv), (&p.wo, &p.bo)] {
        out.extend_from_slice(w.data());
        out.extend_from_slice(b);
    }
    out
}

/// Inverse of [`mhsa_param_vec`]; returns the number of values consumed.
pub fn mhsa_set_params(p: &mut MhsaParams, flat: &[f64]) -> usize {
    let mut pos = 0;
    for (w, b) in [
        (&mut p.wq, &mut p.bq),
        (&mut p.wk, &mut p.bk),
        (&mut p.wv, &mut p.bv),
        (&mut p.wo, &mut p.bo),
    ] {
        let n = w.len();
        w.data_mut().copy_from_slice(&flat[pos..pos + n]);
        pos += n;
        let m = b.len();
        b.copy_from_slice(&flat[pos..pos + m]);
        pos += m;
    }
    pos
}

fn head_cols(m: &Tensor, h: usize, dh: usize) -> Tensor {
    let t = m.dims()[0];
    let mut out = Vec::with_capacity(t * dh);
    for i in 0..t {
        out.extend_from_slice(&m.row(i)[h * dh..(h + 1) * dh]);
    }
    Tensor::new(vec![t, dh], out).expect("head slice")
}

fn scatter_cols(dst: &mut Tensor, src: &Tensor, h: usize, dh: usize) {
    let cols = dst.dims()[1];
    for i in 0..src.dims()[0] {
        dst.data_mut()[i * cols + h * dh..i * cols + (h + 1) * dh].copy_from_slice(src.row(i));
    }
}

/// Same computation as [`super::multi_head_self_attention`], keeping what the
/// backward pass needs.
pub fn mhsa_forward_cached(x: &Tensor, p: &MhsaParams) -> Result<(Tensor, AttentionCache)> {
    p.validate()?;
    let t = x.dims()[0];
    let a = p.units();
    let dh = p.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let q = affine(x, &p.wq, &p.bq)?;
    let k = affine(x, &p.wk, &p.bk)?;
    let v = affine(x, &p.wv, &p.bv)?;
    let mut concat = Tensor::zeros(&[t, a]);
    let mut probs = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let (qh, kh, vh) = (head_cols(&q, h, dh), head_cols(&k, h, dh), head_cols(&v, h, dh));
        let pr = softmax_rows(&qh.matmul_t(&kh)?.map(|s| s * scale))?;
        scatter_cols(&mut concat, &pr.matmul(&vh)?, h, dh);
        probs.push(pr);
    }
    let y = affine(&concat, &p.wo, &p.bo)?;
    Ok((
        y,
        AttentionCache {
            x: x.clone(),
            q,
            k,
            v,
            probs,
            concat,
        },
    ))
}

pub fn mhsa_backward(p: &MhsaParams, cache: &AttentionCache, dy: &Tensor) -> Result<MhsaGrad> {
    let dh = p.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let out_grad = affine_backward(&cache.concat, &p.wo, dy)?;
    let dconcat = out_grad.dx;
    let shape = cache.q.dims().to_vec();
    let mut dq = Tensor::zeros(&shape);
    let mut dk = Tensor::zeros(&shape);
    let mut dv = Tensor::zeros(&shape);
    for h in 0..p.heads {
        let pr = &cache.probs[h];
        let (qh, kh, vh) = (
            head_cols(&cache.q, h, dh),
            head_cols(&cache.k, h, dh),
            head_cols(&cache.v, h, dh),
        );
        let doh = head_cols(&dconcat, h, dh);
        let dvh = pr.t_matmul(&doh)?;
        let dp = doh.matmul_t(&vh)?;
        // softmax backward, row by row
        let t = pr.dims()[0];
        let mut ds = Tensor::zeros(&[t, t]);
        for i in 0..t {
            let dot: f64 = pr.row(i).iter().zip(dp.row(i)).map(|(a, b)| a * b).sum();
            for j in 0..t {
                ds.set(&[i, j], pr.at(&[i, j]) * (dp.at(&[i, j]) - dot) * scale);
            }
        }
        scatter_cols(&mut dq, &ds.matmul(&kh)?, h, dh);
        scatter_cols(&mut dk, &ds.t_matmul(&qh)?, h, dh);
        scatter_cols(&mut dv, &dvh, h, dh);
    }
    let gq = affine_backward(&cache.x, &p.wq, &dq)?;
    let gk = affine_backward(&cache.x, &p.wk, &dk)?;
    let gv = affine_backward(&cache.x, &p.wv, &dv)?;
    let dx = gq.dx.add(&gk.dx)?.add(&gv.dx)?;
    Ok(MhsaGrad {
        dx,
        dwq: gq.dw,
        dbq: gq.db,
        dwk: gk.dw,
        dbk: gk.db,
        dwv: gv.dw,
        dbv: gv.db,
        dwo: out_grad.dw,
        dbo: out_grad.db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::multi_head_self_attention;
    use rand::Rng;

    #[test]
    fn square_has_gradient_six_at_three() {
        let f = |p: &[f64]| Ok((p[0] * p[0], vec![2.0 * p[0]]));
        let (_, g) = f(&[3.0]).unwrap();
        assert_eq!(g[0], 6.0);
        let numeric = (f(&[3.0 + 1e-4]).unwrap().0 - f(&[3.0 - 1e-4]).unwrap().0) / 2e-4;
        assert!((numeric - 6.0).abs() < 1e-6);
        assert!(finite_diff_check(&f, &[3.0], 1e-4, 1, 0).unwrap() < 1e-9);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |p: &[f64]| Ok((p[0] * p[0], vec![3.0 * p[0]]));
        assert!(finite_diff_check(&f, &[3.0], 1e-4, 1, 0).unwrap() > 0.1);
    }

    #[test]
    fn non_finite_is_numeric_error() {
        let f = |p: &[f64]| Ok((p[0].ln(), vec![1.0 / p[0]]));
        assert!(matches!(
            finite_diff_check(&f, &[0.0], 1e-4, 1, 0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn affine_sigmoid_bce_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (t, din) = (5, 4);
        let x = Tensor::from_fn(&[t, din], |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..t).map(|i| (i % 2) as f64).collect();
        let graph = |p: &[f64]| {
            let w = Tensor::matrix(1, din, p[..din].to_vec())?;
            let z = affine(&x, &w, &p[din..])?;
            let (loss, dz) = bce_with_logits(z.data(), &y);
            let g = affine_backward(&x, &w, &Tensor::matrix(t, 1, dz)?)?;
            let mut grad = g.dw.into_data();
            grad.extend(g.db);
            Ok((loss, grad))
        };
        let params: Vec<f64> = (0..din + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = finite_diff_check(&graph, &params, 1e-4, usize::MAX, 0).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn attention_block_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (t, d, a, dout) = (4, 6, 8, 3);
        let x = Tensor::from_fn(&[t, d], |_| rng.random_range(-1.0..1.0));
        let target = Tensor::from_fn(&[t, dout], |_| rng.random_range(-1.0..1.0));
        let mut template = MhsaParams {
            heads: 2,
            wq: Tensor::zeros(&[a, d]),
            bq: vec![0.0; a],
            wk: Tensor::zeros(&[a, d]),
            bk: vec![0.0; a],
            wv: Tensor::zeros(&[a, d]),
            bv: vec![0.0; a],
            wo: Tensor::zeros(&[dout, a]),
            bo: vec![0.0; dout],
        };
        let n = mhsa_param_vec(&template).len();
        let params: Vec<f64> = (0..n).map(|_| rng.random_range(-0.7..0.7)).collect();
        mhsa_set_params(&mut template, &params);
        // squared error keeps every output coordinate in play
        let graph = |flat: &[f64]| {
            let mut p = template.clone();
            mhsa_set_params(&mut p, flat);
            let (y, cache) = mhsa_forward_cached(&x, &p)?;
            let diff = y.add(&target.map(|v| -v))?;
            let loss = 0.5 * diff.data().iter().map(|v| v * v).sum::<f64>();
            let g = mhsa_backward(&p, &cache, &diff)?;
            Ok((loss, g.flat()))
        };
        let err = finite_diff_check(&graph, &params, 1e-4, usize::MAX, 0).unwrap();
        assert!(err < 1e-3, "{err}");
        // cached forward matches the inference path
        let y_inf = multi_head_self_attention(&x, &template).unwrap().output;
        let (y_cached, _) = mhsa_forward_cached(&x, &template).unwrap();
        assert_eq!(y_inf, y_cached);
    }

    #[test]
    fn attention_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (t, d) = (3, 4);
        let p = {
            let mut m = |r: usize, c: usize| Tensor::from_fn(&[r, c], |_| rng.random_range(-0.8..0.8));
            MhsaParams {
                heads: 2,
                wq: m(4, d),
                bq: vec![0.1; 4],
                wk: m(4, d),
                bk: vec![-0.1; 4],
                wv: m(4, d),
                bv: vec![0.0; 4],
                wo: m(2, 4),
                bo: vec![0.0; 2],
            }
        };
        let graph = |flat: &[f64]| {
            let x = Tensor::new(vec![t, d], flat.to_vec())?;
            let (y, cache) = mhsa_forward_cached(&x, &p)?;
            let loss = y.data().iter().map(|v| v.sin()).sum::<f64>();
            let dy = y.map(f64::cos);
            Ok((loss, mhsa_backward(&p, &cache, &dy)?.dx.into_data()))
        };
        let x0: Vec<f64> = (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(finite_diff_check(&graph, &x0, 1e-4, usize::MAX, 0).unwrap() < 1e-3);
    }

    #[test]
    fn bce_matches_direct_formula() {
        let (l, g) = bce_with_logits(&[0.3, -1.2], &[1.0, 0.0]);
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let direct = -(s(0.3).ln() + (1.0 - s(-1.2)).ln()) / 2.0;
        assert!((l - direct).abs() < 1e-12);
        assert!((g[0] - (s(0.3) - 1.0) / 2.0).abs() < 1e-12);
    }
}
