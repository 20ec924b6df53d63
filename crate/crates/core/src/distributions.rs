//! Normal and chi-squared reference laws, multivariate normal sampling and
//! Monte Carlo Gaussian set probabilities.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use libm::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::rng::RngStream;
use crate::{Error, Result};

/// Standard normal distribution function Φ.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate far into the right tail.
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

/// Standard normal density φ.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Chi-squared distribution function G_df.
pub fn chi2_cdf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::Parameter("chi-squared degrees of freedom must be positive".into()));
    }
    if x.is_nan() {
        return Err(Error::Parameter("chi-squared argument is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    Ok(gamma_lr(df as f64 / 2.0, x / 2.0))
}

/// Chi-squared upper tail 1 − G_df(x).
pub fn chi2_sf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::Parameter("chi-squared degrees of freedom must be positive".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, x / 2.0))
}

/// Relative tolerance on eigenvalues below which a covariance counts as
/// indefinite rather than singular.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// A symmetric positive semi-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Checks symmetry (1e-12 relative) and semi-definiteness.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::Covariance(format!(
                "covariance must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Covariance("non-finite covariance entry".into()));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        let d = entries.nrows();
        for i in 0..d {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Covariance(format!("not symmetric at ({i},{j})")));
                }
            }
        }
        let cov = CovarianceMatrix { entries };
        cov.factor()?;
        Ok(cov)
    }

    pub fn from_row_slice(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::Covariance(format!(
                "{} entries for a {dim}x{dim} matrix",
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// A factor `L` with `L Lᵀ = Σ`.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        psd_factor(&self.entries)
    }
}

/// Cholesky factor, falling back to an eigen factor with small negative
/// eigenvalues clamped to zero.
pub(crate) fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.l());
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.amax();
    let mut u = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -PSD_TOLERANCE * lmax {
            return Err(Error::Covariance(format!(
                "matrix is indefinite: eigenvalue {lambda:e} against largest {lmax:e}"
            )));
        }
        let s = lambda.max(0.0).sqrt();
        u.column_mut(j).scale_mut(s);
    }
    Ok(u)
}

/// Draws `mean + L z` for iid standard normal `z` from the stream.
pub fn mvn_sample(mean: &DVector<f64>, cov: &CovarianceMatrix, stream: &RngStream) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::Parameter(format!(
            "mean has length {}, covariance has dimension {}",
            mean.len(),
            cov.dim()
        )));
    }
    let l = cov.factor()?;
    let mut rng = stream.rng();
    let z = DVector::from_fn(cov.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + l * z)
}

/// Fraction of `b` draws from N(0, cov) accepted by the predicate.
pub fn gaussian_set_probability_mc<F>(
    cov: &CovarianceMatrix,
    accept: F,
    b: usize,
    stream: &RngStream,
) -> Result<f64>
where
    F: Fn(&[f64]) -> bool,
{
    if b == 0 {
        return Err(Error::Parameter("Monte Carlo draw count must be positive".into()));
    }
    let l = cov.factor()?;
    let d = cov.dim();
    let mut rng = stream.rng();
    let mut z = DVector::zeros(d);
    let mut a = DVector::zeros(d);
    let mut hits = 0usize;
    for _ in 0..b {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        l.mul_to(&z, &mut a);
        if accept(a.as_slice()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / b as f64)
}

/// A lazily grown bank of standard normals, column `c` drawn sequentially
/// from `stream.child(c)`.
///
/// Because each column is its own stream, the first `b` entries of a column
/// do not depend on how many rows or columns anyone else asked for.
#[derive(Debug)]
pub struct NormalBank {
    stream: RngStream,
    rows: usize,
    columns: RefCell<Vec<Vec<f64>>>,
    sorted: RefCell<HashMap<(usize, bool), Vec<f64>>>,
}

impl NormalBank {
    pub fn new(stream: RngStream, rows: usize) -> Self {
        NormalBank {
            stream,
            rows,
            columns: RefCell::new(Vec::new()),
            sorted: RefCell::new(HashMap::new()),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    fn ensure(&self, cols: usize) {
        let mut columns = self.columns.borrow_mut();
        while columns.len() < cols {
            let mut rng = self.stream.child(columns.len() as u64).rng();
            columns.push((0..self.rows).map(|_| rng.sample(StandardNormal)).collect());
        }
    }

    /// Runs `f` on the first `b` entries of the first `cols` columns.
    pub fn with_columns<T>(&self, cols: usize, b: usize, f: impl FnOnce(&[Vec<f64>], usize) -> T) -> T {
        assert!(b <= self.rows, "requested {b} rows from a bank of {}", self.rows);
        self.ensure(cols);
        f(&self.columns.borrow()[..cols], b)
    }

    fn sorted_column(&self, b: usize, squared: bool) -> std::cell::Ref<'_, Vec<f64>> {
        if !self.sorted.borrow().contains_key(&(b, squared)) {
            self.ensure(1);
            let mut v: Vec<f64> = self.columns.borrow()[0][..b].to_vec();
            if squared {
                v.iter_mut().for_each(|z| *z *= *z);
            }
            v.sort_by(f64::total_cmp);
            self.sorted.borrow_mut().insert((b, squared), v);
        }
        std::cell::Ref::map(self.sorted.borrow(), |m| &m[&(b, squared)])
    }

    /// Fraction of the first `b` draws of `z₀` with `z₀ ≤ t`.
    pub fn normal_cdf(&self, t: f64, b: usize) -> f64 {
        let col = self.sorted_column(b, false);
        col.partition_point(|&z| z <= t) as f64 / b as f64
    }

    /// Fraction of the first `b` draws with `Σ_j λ_j z_j² ≤ x`.
    pub fn weighted_chisq_cdf(&self, lambdas: &[f64], x: f64, b: usize) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        let active: Vec<f64> = lambdas.iter().copied().filter(|&l| l > 0.0).collect();
        match active.len() {
            0 => f64::from(x >= 0.0),
            1 => {
                let col = self.sorted_column(b, true);
                col.partition_point(|&z2| active[0] * z2 <= x) as f64 / b as f64
            }
            m => self.with_columns(m, b, |cols, b| {
                let mut acc = vec![0.0; b];
                for (col, &l) in cols.iter().zip(&active) {
                    for (a, z) in acc.iter_mut().zip(&col[..b]) {
                        *a += l * z * z;
                    }
                }
                acc.iter().filter(|&&a| a <= x).count() as f64 / b as f64
            }),
        }
    }

    /// Fraction of the first `b` draws with `accept(L z)`, where `L` is
    /// `D × D'` and `z` uses the first `D'` columns.
    pub fn probability(&self, factor: &DMatrix<f64>, b: usize, mut accept: impl FnMut(&[f64]) -> bool) -> f64 {
        let (d, q) = factor.shape();
        self.with_columns(q, b, |cols, b| {
            let mut v = vec![0.0; d];
            let mut hits = 0usize;
            for r in 0..b {
                v.iter_mut().for_each(|x| *x = 0.0);
                for (j, col) in cols.iter().enumerate() {
                    let z = col[r];
                    for (i, x) in v.iter_mut().enumerate() {
                        *x += factor[(i, j)] * z;
                    }
                }
                if accept(&v) {
                    hits += 1;
                }
            }
            hits as f64 / b as f64
        })
    }
}
