use crate::error::{Error, Result};
use crate::numkit::matrix::Matrix;

/// Per-column mean and standard deviation learned from a fitting set.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits column statistics on `rows` of `m`.
///
/// Uses the population standard deviation. Columns with std below 1e-12
/// are clamped to 1.0 so constant features map to zero instead of NaN;
/// the clamped value is what gets stored.
pub fn standardize_fit(m: &Matrix, rows: &[usize]) -> Result<ColumnStats> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("standardize_fit rows"));
    }
    for &r in rows {
        if r >= m.rows() {
            return Err(Error::shape(
                "standardize_fit",
                format!("row {r} out of bounds for {} rows", m.rows()),
            ));
        }
    }
    let n = rows.len() as f64;
    let cols = m.cols();
    let mut mean = vec![0.0; cols];
    for &r in rows {
        for (j, v) in m.row(r).iter().enumerate() {
            mean[j] += v;
        }
    }
    for v in &mut mean {
        *v /= n;
    }
    let mut std = vec![0.0; cols];
    for &r in rows {
        for (j, v) in m.row(r).iter().enumerate() {
            let d = v - mean[j];
            std[j] += d * d;
        }
    }
    for v in &mut std {
        *v = (*v / n).sqrt();
        if *v < 1e-12 {
            *v = 1.0;
        }
    }
    Ok(ColumnStats { mean, std })
}

/// Applies `(x - mean) / std` column-wise to every row of `m`.
pub fn standardize_apply(m: &Matrix, stats: &ColumnStats) -> Result<Matrix> {
    if m.cols() != stats.mean.len() {
        return Err(Error::shape(
            "standardize_apply",
            format!("{} cols vs {} stats", m.cols(), stats.mean.len()),
        ));
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for j in 0..row.len() {
            row[j] = (row[j] - stats.mean[j]) / stats.std[j];
        }
    }
    Ok(out)
}
