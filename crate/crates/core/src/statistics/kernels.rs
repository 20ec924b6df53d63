use nalgebra::DMatrix;

use super::median::{median_of_sorted, median_variance_bootstrap, median_variance_exact_sorted};
use super::MedianVariance;
use crate::data::GroupedDataset;
use crate::rng::{derive_stream, RngStream};
use crate::{Error, Result};

/// Which kernels to compute. Means are always computed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KernelSet {
    /// Per-group sample covariances Σ̂_i.
    pub covariances: bool,
    /// Pooled covariance ν̂.
    pub pooled: bool,
    /// Per-group third central moments κ̂_i (univariate only).
    pub third_moments: bool,
    /// Group medians m̂_i (univariate only).
    pub medians: bool,
    /// Variances of the median difference, one per requested method.
    pub median_variances: Vec<MedianVariance>,
}

impl KernelSet {
    pub fn union(&mut self, other: &KernelSet) {
        self.covariances |= other.covariances;
        self.pooled |= other.pooled;
        self.third_moments |= other.third_moments;
        self.medians |= other.medians;
        for mv in &other.median_variances {
            if !self.median_variances.contains(mv) {
                self.median_variances.push(*mv);
            }
        }
    }
}

/// Estimation kernels of a grouped dataset.
///
/// Group means are stored as a flat `k × d` buffer (group `i` at
/// `[i*d, (i+1)*d)`), covariances as `k` row-major `d × d` blocks.
#[derive(Clone, Debug, Default)]
pub struct StatKernels {
    n: usize,
    d: usize,
    sizes: Vec<usize>,
    means: Vec<f64>,
    covariances: Vec<f64>,
    pooled: Vec<f64>,
    third: Vec<f64>,
    medians: Vec<f64>,
    median_var: Vec<(MedianVariance, f64)>,
    computed: KernelSet,
    scratch: Vec<f64>,
}

/// Computes the requested kernels. Monte Carlo median variances use a fixed
/// stream; see [`StatKernels::compute_into`] to supply one.
pub fn compute_kernels(ds: &GroupedDataset, needed: &KernelSet) -> Result<StatKernels> {
    let mut k = StatKernels::default();
    k.compute_into(ds, needed, &derive_stream(0, &[]))?;
    Ok(k)
}

impl StatKernels {
    /// Recomputes the kernels in place, reusing buffers.
    pub fn compute_into(&mut self, ds: &GroupedDataset, needed: &KernelSet, stream: &RngStream) -> Result<()> {
        let (k, d) = (ds.k(), ds.dim());
        self.n = ds.n();
        self.d = d;
        self.sizes.clear();
        self.sizes.extend_from_slice(ds.sizes());
        self.computed = needed.clone();
        self.median_var.clear();

        let univariate_only = needed.third_moments || needed.medians || !needed.median_variances.is_empty();
        if univariate_only && d != 1 {
            return Err(Error::InvalidDataset(format!(
                "third moments and medians need univariate data, got dimension {d}"
            )));
        }
        if needed.covariances {
            if let Some(i) = ds.sizes().iter().position(|&s| s < 2) {
                return Err(Error::InsufficientData(format!(
                    "group {} has {} observation(s); a covariance needs at least 2",
                    i + 1,
                    ds.sizes()[i]
                )));
            }
        }
        if needed.pooled && self.n <= k {
            return Err(Error::InsufficientData(format!(
                "pooled covariance needs n > k, got n = {} and k = {k}",
                self.n
            )));
        }

        self.means.clear();
        self.means.resize(k * d, 0.0);
        for g in 0..k {
            let m = &mut self.means[g * d..(g + 1) * d];
            for row in ds.rows(g) {
                for (a, x) in m.iter_mut().zip(row) {
                    *a += x;
                }
            }
            let inv = 1.0 / ds.sizes()[g] as f64;
            m.iter_mut().for_each(|a| *a *= inv);
        }

        if needed.covariances || needed.pooled {
            self.scatter(ds);
        }
        if needed.third_moments {
            self.third.clear();
            for g in 0..k {
                let mu = self.means[g];
                let s: f64 = ds.group(g).iter().map(|x| (x - mu).powi(3)).sum();
                self.third.push(s / ds.sizes()[g] as f64);
            }
        }
        if needed.medians {
            self.medians.clear();
            for g in 0..k {
                self.scratch.clear();
                self.scratch.extend_from_slice(ds.group(g));
                self.scratch.sort_unstable_by(f64::total_cmp);
                self.medians.push(median_of_sorted(&self.scratch));
            }
        }
        for &mode in &needed.median_variances {
            let v = match mode {
                MedianVariance::Exact => {
                    let mut total = 0.0;
                    for g in 0..k {
                        self.scratch.clear();
                        self.scratch.extend_from_slice(ds.group(g));
                        self.scratch.sort_unstable_by(f64::total_cmp);
                        total += median_variance_exact_sorted(&self.scratch);
                    }
                    self.n as f64 * total
                }
                MedianVariance::Bootstrap { draws } => median_variance_bootstrap(ds, draws, stream)?,
            };
            self.median_var.push((mode, v));
        }
        Ok(())
    }

    /// Fills Σ̂_i (divisor n_i − 1) and ν̂ (divisor n − k) as requested.
    fn scatter(&mut self, ds: &GroupedDataset) {
        let (k, d) = (ds.k(), ds.dim());
        let dd = d * d;
        self.covariances.clear();
        self.covariances.resize(k * dd, 0.0);
        for g in 0..k {
            let mu = &self.means[g * d..(g + 1) * d];
            let block = &mut self.covariances[g * dd..(g + 1) * dd];
            if d == 1 {
                block[0] = ds.group(g).iter().map(|x| (x - mu[0]) * (x - mu[0])).sum();
            } else {
                let dev = &mut self.scratch;
                for row in ds.rows(g) {
                    dev.clear();
                    dev.extend(row.iter().zip(mu).map(|(x, m)| x - m));
                    for a in 0..d {
                        let da = dev[a];
                        for (s, y) in block[a * d + a..(a + 1) * d].iter_mut().zip(&dev[a..]) {
                            *s += da * y;
                        }
                    }
                }
                for a in 0..d {
                    for b in 0..a {
                        block[a * d + b] = block[b * d + a];
                    }
                }
            }
        }
        if self.computed.pooled {
            self.pooled.clear();
            self.pooled.resize(dd, 0.0);
            for g in 0..k {
                for (p, s) in self.pooled.iter_mut().zip(&self.covariances[g * dd..(g + 1) * dd]) {
                    *p += s;
                }
            }
            let inv = 1.0 / (self.n - k) as f64;
            self.pooled.iter_mut().for_each(|p| *p *= inv);
        }
        for g in 0..k {
            let ni = ds.sizes()[g];
            let inv = if ni > 1 { 1.0 / (ni - 1) as f64 } else { 0.0 };
            self.covariances[g * dd..(g + 1) * dd].iter_mut().for_each(|s| *s *= inv);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Group fractions `b_i = n_i / n`.
    pub fn fractions(&self) -> Vec<f64> {
        self.sizes.iter().map(|&s| s as f64 / self.n as f64).collect()
    }

    /// `n / n_i`.
    pub fn inflation(&self, i: usize) -> f64 {
        self.n as f64 / self.sizes[i] as f64
    }

    /// All group means, group after group.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.d..(i + 1) * self.d]
    }

    /// Means as the `d × k` matrix Θ̂.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.d, self.k(), &self.means)
    }

    fn require(&self, have: bool, what: &str) -> Result<()> {
        if have {
            Ok(())
        } else {
            Err(Error::Parameter(format!("kernel '{what}' was not computed")))
        }
    }

    /// Σ̂_i as a row-major slice.
    pub fn covariance_slice(&self, i: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.covariances[i * dd..(i + 1) * dd]
    }

    pub fn covariance(&self, i: usize) -> Result<DMatrix<f64>> {
        self.require(self.computed.covariances, "covariances")?;
        Ok(DMatrix::from_row_slice(self.d, self.d, self.covariance_slice(i)))
    }

    /// Scalar Σ̂_i for univariate data.
    pub fn variance(&self, i: usize) -> f64 {
        self.covariances[i]
    }

    pub fn pooled_slice(&self) -> &[f64] {
        &self.pooled
    }

    /// Pooled covariance ν̂.
    pub fn pooled(&self) -> Result<DMatrix<f64>> {
        self.require(self.computed.pooled, "pooled")?;
        Ok(DMatrix::from_row_slice(self.d, self.d, &self.pooled))
    }

    /// Γ̂ = blockdiag((n/n_i) Σ̂_i).
    pub fn gamma(&self) -> Result<DMatrix<f64>> {
        self.require(self.computed.covariances, "covariances")?;
        let (k, d) = (self.k(), self.d);
        let mut g = DMatrix::zeros(k * d, k * d);
        for i in 0..k {
            let c = self.inflation(i);
            let s = self.covariance_slice(i);
            for a in 0..d {
                for b in 0..d {
                    g[(i * d + a, i * d + b)] = c * s[a * d + b];
                }
            }
        }
        Ok(g)
    }

    /// Λ̂ = blockdiag((n/n_i) ν̂).
    pub fn lambda(&self) -> Result<DMatrix<f64>> {
        let nu = self.pooled()?;
        let (k, d) = (self.k(), self.d);
        let mut l = DMatrix::zeros(k * d, k * d);
        for i in 0..k {
            l.view_mut((i * d, i * d), (d, d)).copy_from(&(&nu * self.inflation(i)));
        }
        Ok(l)
    }

    /// κ̂_i, the third central moment with divisor n_i.
    pub fn third_moment(&self, i: usize) -> Result<f64> {
        self.require(self.computed.third_moments, "third moments")?;
        Ok(self.third[i])
    }

    pub fn medians(&self) -> Result<&[f64]> {
        self.require(self.computed.medians, "medians")?;
        Ok(&self.medians)
    }

    /// v̂, the resampling variance of `√n(m̂₁ − m̂₂)`, by the first
    /// requested method.
    pub fn median_variance(&self) -> Result<f64> {
        self.median_var
            .first()
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::Parameter("kernel 'median variance' was not computed".into()))
    }

    /// v̂ by a specific method.
    pub fn median_variance_for(&self, mode: MedianVariance) -> Result<f64> {
        self.median_var
            .iter()
            .find(|(m, _)| *m == mode)
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::Parameter("kernel 'median variance' was not computed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all() -> KernelSet {
        KernelSet {
            covariances: true,
            pooled: true,
            third_moments: true,
            medians: true,
            median_variances: vec![MedianVariance::Exact],
        }
    }

    #[test]
    fn two_by_two_arithmetic() {
        let ds = GroupedDataset::univariate(&[vec![1.0, 3.0], vec![2.0, 6.0]]).unwrap();
        let k = compute_kernels(&ds, &all()).unwrap();
        assert_eq!(k.means(), &[2.0, 4.0]);
        assert_eq!(k.variance(0), 2.0);
        assert_eq!(k.variance(1), 8.0);
        assert_eq!(k.pooled_slice(), &[5.0]);
        assert_eq!(k.fractions(), vec![0.5, 0.5]);
        let g = k.gamma().unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 16.0]));
        let l = k.lambda().unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 10.0]));
    }

    #[test]
    fn constant_groups_have_zero_variance() {
        let ds = GroupedDataset::univariate(&[vec![3.0, 3.0], vec![-1.0, -1.0]]).unwrap();
        let k = compute_kernels(&ds, &all()).unwrap();
        assert_eq!(k.variance(0), 0.0);
        assert_eq!(k.variance(1), 0.0);
        assert_eq!(k.pooled_slice(), &[0.0]);
        assert_eq!(k.median_variance().unwrap(), 0.0);
    }

    #[test]
    fn symmetric_group_has_zero_skew() {
        let ds = GroupedDataset::univariate(&[vec![-1.0, 0.0, 1.0], vec![5.0, 6.0]]).unwrap();
        let k = compute_kernels(&ds, &all()).unwrap();
        assert_eq!(k.third_moment(0).unwrap(), 0.0);
    }

    #[test]
    fn multivariate_covariance_matches_direct_formula() {
        let rows = vec![
            vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![4.0, 7.0]],
            vec![vec![0.0, 0.0], vec![1.0, 3.0]],
        ];
        let ds = GroupedDataset::from_rows(&rows).unwrap();
        let set = KernelSet {
            covariances: true,
            pooled: true,
            ..Default::default()
        };
        let k = compute_kernels(&ds, &set).unwrap();
        // group 1: mean (7/3, 10/3)
        let (mx, my) = (7.0 / 3.0, 10.0 / 3.0);
        let sxx: f64 = [1.0, 2.0, 4.0].iter().map(|x| (x - mx) * (x - mx)).sum::<f64>() / 2.0;
        let sxy: f64 = [(1.0, 2.0), (2.0, 1.0), (4.0, 7.0)]
            .iter()
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / 2.0;
        let c = k.covariance(0).unwrap();
        assert_relative_eq!(c[(0, 0)], sxx, max_relative = 1e-14);
        assert_relative_eq!(c[(0, 1)], sxy, max_relative = 1e-14);
        assert_eq!(c[(0, 1)], c[(1, 0)]);
        // pooled = (2 Σ̂₁ + 1 Σ̂₂)/3
        let nu = k.pooled().unwrap();
        let expect = (k.covariance(0).unwrap() * 2.0 + k.covariance(1).unwrap()) / 3.0;
        assert_relative_eq!(nu, expect, max_relative = 1e-14);
    }

    #[test]
    fn insufficient_data_for_variance() {
        let ds = GroupedDataset::univariate(&[vec![1.0], vec![2.0, 3.0]]).unwrap();
        let set = KernelSet {
            covariances: true,
            ..Default::default()
        };
        assert!(matches!(compute_kernels(&ds, &set), Err(Error::InsufficientData(_))));
        assert!(compute_kernels(&ds, &KernelSet::default()).is_ok());
    }
}
