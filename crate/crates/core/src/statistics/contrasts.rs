use nalgebra::DMatrix;

use crate::data::GroupedDataset;
use crate::{Error, Result};

/// C₁: one column per pair `(i, j)`, `i < j`, in lexicographic order, with
/// `+1` in row `i` and `−1` in row `j`.
pub fn contrast_pairwise(k: usize) -> Result<DMatrix<f64>> {
    if k < 2 {
        return Err(Error::Parameter(format!("pairwise contrasts need k >= 2, got {k}")));
    }
    let mut c = DMatrix::zeros(k, k * (k - 1) / 2);
    let mut col = 0;
    for i in 0..k {
        for j in i + 1..k {
            c[(i, col)] = 1.0;
            c[(j, col)] = -1.0;
            col += 1;
        }
    }
    Ok(c)
}

/// C₂ = I − B where every column of B is `b`.
pub fn contrast_centering(b: &[f64]) -> Result<DMatrix<f64>> {
    let sum: f64 = b.iter().sum();
    if b.len() < 2 || b.iter().any(|&x| !(x > 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Parameter(format!("{b:?} is not a positive probability vector")));
    }
    Ok(centering(b))
}

pub(crate) fn centering(w: &[f64]) -> DMatrix<f64> {
    let k = w.len();
    DMatrix::from_fn(k, k, |i, j| f64::from(i == j) - w[i])
}

/// Precision weights `(n_i/Σ̂_i) / Σ_l (n_l/Σ̂_l)` from sizes and variances.
pub(crate) fn precision_weights(sizes: &[usize], variances: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = variances.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::degenerate(
            "group variance",
            format!("group {} has zero variance", i + 1),
        ));
    }
    let raw: Vec<f64> = sizes.iter().zip(variances).map(|(&n, &v)| n as f64 / v).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Ĉ = I − D̂ with precision-weight columns, for the k-sample statistic W_n.
pub fn wn_data_contrast(ds: &GroupedDataset) -> Result<DMatrix<f64>> {
    if ds.dim() != 1 {
        return Err(Error::InvalidDataset("the weighted contrast needs univariate data".into()));
    }
    let set = super::KernelSet {
        covariances: true,
        ..Default::default()
    };
    let k = super::compute_kernels(ds, &set)?;
    let vars: Vec<f64> = (0..ds.k()).map(|i| k.variance(i)).collect();
    Ok(centering(&precision_weights(ds.sizes(), &vars)?))
}
