use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::contrasts::{centering, precision_weights};
use super::{contrast_pairwise, StatKernels, StatisticId, StatisticSpec};
use crate::distributions::std_normal_cdf;
use crate::distributions::std_normal_pdf;
use crate::{Error, Result};

/// Which eigenvalue summary a MANOVA statistic reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManovaKind {
    /// `−Π 1/(1+λ)`.
    Wilks,
    /// `Σ λ/(1+λ)`.
    Pillai,
    /// `max λ`.
    Roy,
}

impl ManovaKind {
    pub fn from_eigenvalues(self, eigs: &[f64]) -> f64 {
        match self {
            ManovaKind::Wilks => -eigs.iter().map(|l| 1.0 / (1.0 + l)).product::<f64>(),
            ManovaKind::Pillai => eigs.iter().map(|l| l / (1.0 + l)).sum(),
            ManovaKind::Roy => eigs.iter().copied().fold(0.0, f64::max),
        }
    }

    /// For a single eigenvalue, the statistic is increasing in it; returns
    /// the eigenvalue at which the statistic equals `x` (clamped to
    /// `[0, ∞]`).
    pub(crate) fn invert_single(self, x: f64) -> f64 {
        let lambda = match self {
            ManovaKind::Wilks => {
                if x >= 0.0 {
                    f64::INFINITY
                } else {
                    -1.0 / x - 1.0
                }
            }
            ManovaKind::Pillai => {
                if x >= 1.0 {
                    f64::INFINITY
                } else {
                    x / (1.0 - x)
                }
            }
            ManovaKind::Roy => x,
        };
        if lambda < 0.0 {
            // below the statistic's minimum: encode as an unattainable level
            -1.0
        } else {
            lambda
        }
    }
}

/// A quadratic form `vᵀ Q v` on the stacked contrast vector.
#[derive(Clone, Debug, PartialEq)]
pub enum QuadForm {
    /// `Q = diag(q)`.
    Diag(Vec<f64>),
    /// `Q = diag(w) ⊗ S⁻¹` over `d`-blocks, with `S = R Rᵀ` and `R` the lower
    /// Cholesky factor stored here.
    Kron { weights: Vec<f64>, chol: DMatrix<f64> },
}

impl QuadForm {
    pub fn apply(&self, v: &[f64]) -> f64 {
        match self {
            QuadForm::Diag(q) => q.iter().zip(v).map(|(q, x)| q * x * x).sum(),
            QuadForm::Kron { weights, chol } => {
                let d = chol.nrows();
                let mut y = vec![0.0; d];
                let mut total = 0.0;
                for (j, w) in weights.iter().enumerate() {
                    forward_solve(chol, &v[j * d..(j + 1) * d], &mut y);
                    total += w * y.iter().map(|t| t * t).sum::<f64>();
                }
                total
            }
        }
    }

    /// Eigenvalues of `Q^{1/2} Ω Q^{1/2}`, largest first: the weights of the
    /// chi-squared mixture that `vᵀQv` follows when `v ~ N(0, Ω)`.
    pub fn mixture_weights(&self, omega: &DMatrix<f64>) -> Vec<f64> {
        let t = match self {
            QuadForm::Diag(q) => {
                let s: Vec<f64> = q.iter().map(|x| x.sqrt()).collect();
                DMatrix::from_fn(omega.nrows(), omega.ncols(), |a, b| s[a] * omega[(a, b)] * s[b])
            }
            QuadForm::Kron { weights, chol } => {
                let d = chol.nrows();
                let m = weights.len();
                let mut t = DMatrix::zeros(d * m, d * m);
                for j in 0..m {
                    for l in 0..=j {
                        let block = omega.view((j * d, l * d), (d, d)).clone_owned();
                        // R⁻¹ B R⁻ᵀ
                        let left = chol.solve_lower_triangular(&block).expect("nonsingular factor");
                        let both = chol
                            .solve_lower_triangular(&left.transpose())
                            .expect("nonsingular factor")
                            .transpose();
                        let scaled = both * (weights[j] * weights[l]).sqrt();
                        t.view_mut((j * d, l * d), (d, d)).copy_from(&scaled);
                        if j != l {
                            t.view_mut((l * d, j * d), (d, d)).copy_from(&scaled.transpose());
                        }
                    }
                }
                t
            }
        };
        let t = (&t + t.transpose()) * 0.5;
        let eig = t.symmetric_eigenvalues();
        let lmax = eig.iter().copied().fold(0.0, f64::max);
        let mut w: Vec<f64> = eig.iter().map(|&l| if l <= 1e-10 * lmax { 0.0 } else { l }).collect();
        // a fixed order pairs each weight with the same normal column
        w.sort_by(|a, b| b.total_cmp(a));
        w
    }
}

/// The map `g` from the stacked contrast vector `vec(√n Θ̂ Ĉ)` to the
/// statistic, with its nuisance estimates baked in.
#[derive(Clone, Debug, PartialEq)]
pub enum Link {
    /// `g(v) = v₀`.
    Identity,
    /// `g(v) = v₀ / scale`.
    Standardized { scale: f64 },
    /// `Φ(s) + ξ/(6 ω^{3/2}) φ(s)(2s² + 1)/√n` with `s = v₀/√ω`.
    Edgeworth { variance: f64, xi: f64, n: usize },
    Quadratic(QuadForm),
    /// `max_l |v_l| / scale_l`.
    MaxAbs { scales: Vec<f64> },
    /// Eigenvalue summaries of `Σ_j w_j v_j v_jᵀ S⁻¹` over `d`-blocks `v_j`,
    /// with `S = R Rᵀ`.
    Manova { kind: ManovaKind, weights: Vec<f64>, chol: DMatrix<f64> },
}

impl Link {
    pub fn apply(&self, v: &[f64]) -> f64 {
        match self {
            Link::Identity => v[0],
            Link::Standardized { scale } => v[0] / scale,
            Link::Edgeworth { variance, xi, n } => edgeworth_value(v[0] / variance.sqrt(), *variance, *xi, *n),
            Link::Quadratic(q) => q.apply(v),
            Link::MaxAbs { scales } => v
                .iter()
                .zip(scales)
                .map(|(x, s)| x.abs() / s)
                .fold(f64::NEG_INFINITY, f64::max),
            Link::Manova { kind, weights, chol } => {
                kind.from_eigenvalues(&manova_eigenvalues(v, weights, chol))
            }
        }
    }
}

pub(crate) fn edgeworth_value(s: f64, omega: f64, xi: f64, n: usize) -> f64 {
    std_normal_cdf(s) + xi / (6.0 * omega.powf(1.5)) * std_normal_pdf(s) * (2.0 * s * s + 1.0) / (n as f64).sqrt()
}

/// Nonzero-spectrum eigenvalues of `A Aᵀ S⁻¹` with `A = [√w_j v_j]`, via the
/// `m × m` Gram matrix of `R⁻¹A`.
pub(crate) fn manova_eigenvalues(v: &[f64], weights: &[f64], chol: &DMatrix<f64>) -> Vec<f64> {
    let d = chol.nrows();
    let m = weights.len();
    let mut w = DMatrix::zeros(d, m);
    let mut y = vec![0.0; d];
    for j in 0..m {
        forward_solve(chol, &v[j * d..(j + 1) * d], &mut y);
        let s = weights[j].sqrt();
        for a in 0..d {
            w[(a, j)] = s * y[a];
        }
    }
    let gram = w.tr_mul(&w);
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect()
}

/// Solves `R y = b` for lower-triangular `R`.
fn forward_solve(r: &DMatrix<f64>, b: &[f64], y: &mut [f64]) {
    for i in 0..b.len() {
        let mut s = b[i];
        for j in 0..i {
            s -= r[(i, j)] * y[j];
        }
        y[i] = s / r[(i, i)];
    }
}

/// A statistic written as `g(√n Θ̂ Ĉ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factorization {
    /// `d × k` group parameters (possibly centred).
    pub theta: DMatrix<f64>,
    /// `k × m` column contrasts.
    pub contrast: DMatrix<f64>,
    pub link: Link,
    pub n: usize,
}

impl Factorization {
    /// `vec(√n Θ̂ Ĉ)`, stacking columns.
    pub fn contrast_vector(&self) -> Vec<f64> {
        let a = &self.theta * &self.contrast * (self.n as f64).sqrt();
        a.as_slice().to_vec()
    }

    /// Recomposes the statistic from its factors.
    pub fn statistic(&self) -> f64 {
        self.link.apply(&self.contrast_vector())
    }
}

/// The factorization of `spec` on a dataset with these kernels.
pub fn factorize(spec: &StatisticSpec, k: &StatKernels) -> Result<Factorization> {
    let theta = parameters(spec, k)?;
    let (contrast, link) = link_for(spec, k)?;
    Ok(Factorization {
        theta,
        contrast,
        link,
        n: k.n(),
    })
}

/// The factorization of the bootstrap statistic: parameters centred at the
/// original sample's, contrast and link from the resample.
pub fn factorize_bootstrap(spec: &StatisticSpec, boot: &StatKernels, original: &StatKernels) -> Result<Factorization> {
    let mut f = factorize(spec, boot)?;
    f.theta -= parameters(spec, original)?;
    Ok(f)
}

fn parameters(spec: &StatisticSpec, k: &StatKernels) -> Result<DMatrix<f64>> {
    if spec.id.is_median() {
        Ok(DMatrix::from_row_slice(1, k.k(), k.medians()?))
    } else {
        Ok(k.mean_matrix())
    }
}

fn chol_lower(m: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::degenerate(what, "matrix is singular"))
}

/// Σ_i (n/n_i) Σ̂_i for two groups, the covariance of the mean difference.
pub(crate) fn unpooled_difference_covariance(k: &StatKernels) -> Result<DMatrix<f64>> {
    Ok(k.covariance(0)? * k.inflation(0) + k.covariance(1)? * k.inflation(1))
}

/// Contrast matrix and link for `spec` from kernels.
pub(crate) fn link_for(spec: &StatisticSpec, k: &StatKernels) -> Result<(DMatrix<f64>, Link)> {
    use StatisticId::*;
    let kk = k.k();
    let b = k.fractions();
    let c1 = || contrast_pairwise(kk);
    Ok(match spec.id {
        DiffMeans | MedianDiff => (c1()?, Link::Identity),
        Studentized => {
            let omega = k.inflation(0) * k.variance(0) + k.inflation(1) * k.variance(1);
            if !(omega > 0.0) {
                return Err(Error::degenerate("unpooled variance", "both groups are constant"));
            }
            (c1()?, Link::Standardized { scale: omega.sqrt() })
        }
        Edgeworth => {
            let omega = k.inflation(0) * k.variance(0) + k.inflation(1) * k.variance(1);
            if !(omega > 0.0) {
                return Err(Error::degenerate("unpooled variance", "both groups are constant"));
            }
            let xi = k.inflation(0).powi(2) * k.third_moment(0)? - k.inflation(1).powi(2) * k.third_moment(1)?;
            (
                c1()?,
                Link::Edgeworth {
                    variance: omega,
                    xi,
                    n: k.n(),
                },
            )
        }
        HotellingPooled => {
            let s = k.pooled()? * (k.inflation(0) + k.inflation(1));
            let chol = chol_lower(s, "pooled covariance")?;
            (c1()?, Link::Quadratic(QuadForm::Kron { weights: vec![1.0], chol }))
        }
        HotellingUnpooled => {
            let chol = chol_lower(unpooled_difference_covariance(k)?, "unpooled covariance")?;
            (c1()?, Link::Quadratic(QuadForm::Kron { weights: vec![1.0], chol }))
        }
        MaxAbsT => {
            let omega = unpooled_difference_covariance(k)?;
            let scales: Vec<f64> = omega.diagonal().iter().map(|v| v.sqrt()).collect();
            if let Some(l) = scales.iter().position(|s| !(*s > 0.0)) {
                return Err(Error::degenerate(
                    "unpooled variance",
                    format!("coordinate {} is constant in both groups", l + 1),
                ));
            }
            (c1()?, Link::MaxAbs { scales })
        }
        AnovaF => {
            let nu = k.pooled_slice()[0];
            if !(nu > 0.0) {
                return Err(Error::degenerate("pooled variance", "every group is constant"));
            }
            let q = b.iter().map(|bj| bj / ((kk - 1) as f64 * nu)).collect();
            (centering(&b), Link::Quadratic(QuadForm::Diag(q)))
        }
        TukeyKramer => {
            let nu = k.pooled_slice()[0];
            if !(nu > 0.0) {
                return Err(Error::degenerate("pooled variance", "every group is constant"));
            }
            let mut scales = Vec::with_capacity(kk * (kk - 1) / 2);
            for i in 0..kk {
                for j in i + 1..kk {
                    scales.push(((k.inflation(i) + k.inflation(j)) * nu).sqrt());
                }
            }
            (c1()?, Link::MaxAbs { scales })
        }
        CrWn => {
            let vars: Vec<f64> = (0..kk).map(|i| k.variance(i)).collect();
            let w = precision_weights(k.sizes(), &vars)?;
            let q = b.iter().zip(&vars).map(|(bi, v)| bi / v).collect();
            (centering(&w), Link::Quadratic(QuadForm::Diag(q)))
        }
        ManovaWilks | ManovaPillai | ManovaRoy | ManovaLawleyHotelling => {
            let chol = chol_lower(k.pooled()?, "pooled covariance")?;
            let weights: Vec<f64> = b.iter().map(|bj| bj / (kk - 1) as f64).collect();
            let link = match spec.id {
                ManovaLawleyHotelling => Link::Quadratic(QuadForm::Kron { weights, chol }),
                ManovaWilks => Link::Manova {
                    kind: ManovaKind::Wilks,
                    weights,
                    chol,
                },
                ManovaPillai => Link::Manova {
                    kind: ManovaKind::Pillai,
                    weights,
                    chol,
                },
                _ => Link::Manova {
                    kind: ManovaKind::Roy,
                    weights,
                    chol,
                },
            };
            (centering(&b), link)
        }
        MedianStudentized => {
            let v = k.median_variance_for(spec.median_variance)?;
            if !(v > 0.0) {
                return Err(Error::degenerate("median variance", "bootstrap variance is zero"));
            }
            (c1()?, Link::Standardized { scale: v.sqrt() })
        }
    })
}

/// Covariance of `vec(V Ĉ)` when `vec(V) ~ N(0, Γ̂)`: block `(j, l)` is
/// `Σ_i C_ij C_il (n/n_i) Σ̂_i`.
pub(crate) fn contrast_covariance(k: &StatKernels, contrast: &DMatrix<f64>) -> DMatrix<f64> {
    let d = k.dim();
    let (kk, m) = contrast.shape();
    let mut omega = DMatrix::zeros(d * m, d * m);
    for i in 0..kk {
        let s = k.covariance_slice(i);
        let c = k.inflation(i);
        for j in 0..m {
            let cij = contrast[(i, j)];
            if cij == 0.0 {
                continue;
            }
            for l in 0..m {
                let f = c * cij * contrast[(i, l)];
                if f == 0.0 {
                    continue;
                }
                for a in 0..d {
                    for bb in 0..d {
                        omega[(j * d + a, l * d + bb)] += f * s[a * d + bb];
                    }
                }
            }
        }
    }
    omega
}
