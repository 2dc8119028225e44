use crate::embedding::{l2_normalize, Embedding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ARCFACE_SCALE: f64 = 32.0;
pub const ARCFACE_MARGIN: f64 = 0.2;

/// Additive angular margin logits: `s cos(theta_k)` for every class, with the
/// labelled class replaced by `s cos(theta_label + m)`.
pub fn arcface_logits(
    e: &Embedding,
    class_weights: &Tensor,
    label: usize,
    s: f64,
    m: f64,
) -> Result<Vec<f64>> {
    class_weights.expect_rank(2, "class weights")?;
    let (k, d) = (class_weights.dims()[0], class_weights.dims()[1]);
    if d != e.dim() {
        return Err(Error::Shape(format!(
            "embedding dim {} vs class weights [{k}, {d}]",
            e.dim()
        )));
    }
    if label >= k {
        return Err(Error::Parameter(format!("label {label} out of {k} classes")));
    }
    let u = l2_normalize(e.as_slice())?;
    (0..k)
        .map(|c| {
            let w = l2_normalize(class_weights.row(c))?;
            let cos: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
            Ok(if c == label {
                s * (cos.acos() + m).cos()
            } else {
                s * cos
            })
        })
        .collect()
}
