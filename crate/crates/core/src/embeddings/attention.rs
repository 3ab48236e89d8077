use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-wise `softmax(Q K^T / sqrt(d_k))`.
pub fn attention_weights(q: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d_k = q.ncols();
    if d_k == 0 {
        return Err(Error::ShapeMismatch("d_k must be >= 1".into()));
    }
    if k.ncols() != d_k {
        return Err(Error::ShapeMismatch(format!(
            "Q has {d_k} columns but K has {}",
            k.ncols()
        )));
    }
    if k.nrows() == 0 {
        return Err(Error::ShapeMismatch("K must have at least one row".into()));
    }
    let mut logits = q * k.transpose() / (d_k as f64).sqrt();
    softmax_rows(&mut logits);
    Ok(logits)
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d_k)) V`.
pub fn attention(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.nrows() != k.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "K has {} rows but V has {}",
            k.nrows(),
            v.nrows()
        )));
    }
    Ok(attention_weights(q, k)? * v)
}

pub fn softmax_rows(logits: &mut DMatrix<f64>) {
    for mut row in logits.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|x| *x = (*x - max).exp());
        let sum: f64 = row.iter().sum();
        row.apply(|x| *x /= sum);
    }
}
