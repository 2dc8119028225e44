use crate::error::{Error, Result};

/// A fixed-length speaker vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding".into()));
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Element-wise mean of a non-empty set of equal-length embeddings.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Embedding>) -> Result<Embedding> {
        let mut acc: Option<Vec<f64>> = None;
        let mut n = 0usize;
        for e in items {
            match acc.as_mut() {
                None => acc = Some(e.0.clone()),
                Some(a) => {
                    if a.len() != e.dim() {
                        return Err(Error::Shape(format!(
                            "embedding dims {} and {}",
                            a.len(),
                            e.dim()
                        )));
                    }
                    a.iter_mut().zip(&e.0).for_each(|(x, y)| *x += y);
                }
            }
            n += 1;
        }
        let mut a = acc.ok_or_else(|| Error::EmptyInput("mean of no embeddings".into()))?;
        a.iter_mut().for_each(|x| *x /= n as f64);
        Ok(Embedding(a))
    }
}

/// `a.b / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of {}-dim and {}-dim vectors", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Scale to unit length.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}
