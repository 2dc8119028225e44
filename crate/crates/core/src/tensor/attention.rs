use super::ops::{affine, softmax_rows};
use super::{Tensor, WeightStore};
use crate::error::{Error, Result};

/// Multi-head self-attention parameters.
///
/// Projections are `[A, D]` (`A` attention units split evenly over `heads`); the
/// output projection is `[D_out, A]`. No positional encoding is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MhsaParams {
    pub heads: usize,
    pub wq: Tensor,
    pub bq: Vec<f64>,
    pub wk: Tensor,
    pub bk: Vec<f64>,
    pub wv: Tensor,
    pub bv: Vec<f64>,
    pub wo: Tensor,
    pub bo: Vec<f64>,
}

impl MhsaParams {
    pub fn units(&self) -> usize {
        self.wq.dims()[0]
    }

    pub fn head_dim(&self) -> usize {
        self.units() / self.heads
    }

    pub fn input_dim(&self) -> usize {
        self.wq.dims()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.wo.dims()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.units();
        let d = self.input_dim();
        if self.heads == 0 || a % self.heads != 0 {
            return Err(Error::Shape(format!(
                "{a} attention units do not split into {} heads",
                self.heads
            )));
        }
        let ok = self.wk.dims() == [a, d]
            && self.wv.dims() == [a, d]
            && self.wo.rank() == 2
            && self.wo.dims()[1] == a
            && self.bq.len() == a
            && self.bk.len() == a
            && self.bv.len() == a
            && self.bo.len() == self.output_dim();
        if !ok {
            return Err(Error::Shape("inconsistent attention parameters".into()));
        }
        Ok(())
    }

    pub fn from_store(store: &WeightStore, prefix: &str, heads: usize) -> Result<Self> {
        let t = |n: &str| store.get(&format!("{prefix}.{n}")).cloned();
        let v = |n: &str| store.get(&format!("{prefix}.{n}")).map(|t| t.data().to_vec());
        let p = MhsaParams {
            heads,
            wq: t("wq")?,
            bq: v("bq")?,
            wk: t("wk")?,
            bk: v("bk")?,
            wv: t("wv")?,
            bv: v("bv")?,
            wo: t("wo")?,
            bo: v("bo")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_store(&self, store: &mut WeightStore, prefix: &str) {
        for (n, w, b) in [
            ("q", &self.wq, &self.bq),
            ("k", &self.wk, &self.bk),
            ("v", &self.wv, &self.bv),
            ("o", &self.wo, &self.bo),
        ] {
            store.insert(format!("{prefix}.w{n}"), w.clone());
            store.insert(format!("{prefix}.b{n}"), Tensor::vector(b.clone()));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `[T, D_out]`
    pub output: Tensor,
    /// One `[T, T]` row-stochastic matrix per head.
    pub weights: Vec<Tensor>,
}

/// Per head `softmax(Q K^T / sqrt(d_head)) V`; heads concatenated, then projected.
pub fn multi_head_self_attention(x: &Tensor, p: &MhsaParams) -> Result<AttentionOutput> {
    x.expect_rank(2, "attention input")?;
    p.validate()?;
    if x.dims()[1] != p.input_dim() {
        return Err(Error::Shape(format!(
            "attention input width {} vs {}",
            x.dims()[1],
            p.input_dim()
        )));
    }
    let t = x.dims()[0];
    let a = p.units();
    let dh = p.head_dim();
    let q = affine(x, &p.wq, &p.bq)?;
    let k = affine(x, &p.wk, &p.bk)?;
    let v = affine(x, &p.wv, &p.bv)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut concat = vec![0.0; t * a];
    let mut weights = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let cols = |m: &Tensor| {
            let mut out = Vec::with_capacity(t * dh);
            for i in 0..t {
                out.extend_from_slice(&m.row(i)[h * dh..(h + 1) * dh]);
            }
            Tensor::new(vec![t, dh], out)
        };
        let (qh, kh, vh) = (cols(&q)?, cols(&k)?, cols(&v)?);
        let scores = qh.matmul_t(&kh)?.map(|s| s * scale);
        let probs = softmax_rows(&scores)?;
        let oh = probs.matmul(&vh)?;
        for i in 0..t {
            concat[i * a + h * dh..i * a + (h + 1) * dh].copy_from_slice(oh.row(i));
        }
        weights.push(probs);
    }
    let concat = Tensor::new(vec![t, a], concat)?;
    Ok(AttentionOutput {
        output: affine(&concat, &p.wo, &p.bo)?,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_params(d: usize, a: usize, heads: usize, dout: usize, seed: u64) -> MhsaParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r: usize, c: usize| Tensor::from_fn(&[r, c], |_| rng.random_range(-0.5..0.5));
        let (wq, wk, wv, wo) = (m(a, d), m(a, d), m(a, d), m(dout, a));
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let mut b = |n: usize| (0..n).map(|_| rng.random_range(-0.1..0.1)).collect::<Vec<_>>();
        MhsaParams {
            heads,
            wq,
            bq: b(a),
            wk,
            bk: b(a),
            wv,
            bv: b(a),
            wo,
            bo: b(dout),
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let p = random_params(6, 8, 2, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::from_fn(&[9, 6], |_| rng.random_range(-2.0..2.0));
        let out = multi_head_self_attention(&x, &p).unwrap();
        assert_eq!(out.output.dims(), &[9, 5]);
        for w in &out.weights {
            for i in 0..9 {
                assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_position_returns_projected_values() {
        let p = random_params(4, 4, 2, 3, 3);
        let x = Tensor::new(vec![1, 4], vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        let out = multi_head_self_attention(&x, &p).unwrap();
        assert!(out.weights.iter().all(|w| (w.at(&[0, 0]) - 1.0).abs() < 1e-15));
        let v = affine(&x, &p.wv, &p.bv).unwrap();
        let expected = affine(&v, &p.wo, &p.bo).unwrap();
        for (a, b) in out.output.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariant() {
        let p = random_params(5, 6, 2, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::from_fn(&[6, 5], |_| rng.random_range(-1.0..1.0));
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut px = Vec::new();
        for &i in &perm {
            px.extend_from_slice(x.row(i));
        }
        let px = Tensor::new(vec![6, 5], px).unwrap();
        let y = multi_head_self_attention(&x, &p).unwrap().output;
        let py = multi_head_self_attention(&px, &p).unwrap().output;
        for (j, &i) in perm.iter().enumerate() {
            for (a, b) in py.row(j).iter().zip(y.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indivisible_heads_rejected() {
        let p = random_params(4, 6, 4, 3, 6);
        assert!(matches!(
            multi_head_self_attention(&Tensor::zeros(&[2, 4]), &p),
            Err(Error::Shape(_))
        ));
    }
}
