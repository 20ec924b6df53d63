use nalgebra::DVector;

use super::factor::{edgeworth_value, manova_eigenvalues, unpooled_difference_covariance, ManovaKind};
use super::{StatKernels, StatisticId, StatisticSpec};
use crate::data::GroupedDataset;
use crate::rng::{derive_stream, RngStream};
use crate::{Error, Result};

/// The statistic on `ds`. Monte Carlo median variances use a fixed stream;
/// see [`evaluate_with_stream`].
pub fn evaluate(spec: &StatisticSpec, ds: &GroupedDataset) -> Result<f64> {
    evaluate_with_stream(spec, ds, &derive_stream(0, &[]))
}

pub fn evaluate_with_stream(spec: &StatisticSpec, ds: &GroupedDataset, stream: &RngStream) -> Result<f64> {
    spec.check_admissible(ds.k(), ds.dim())?;
    let mut k = StatKernels::default();
    k.compute_into(ds, &spec.kernels_needed(), stream)?;
    value_from_kernels(spec, &k, None)
}

/// The bootstrap statistic `g{√n(Θ̂* − Θ̂)Ĉ*, η̂*}`: everything from `boot`
/// except the centring parameters, which come from `original`.
pub fn evaluate_bootstrap(spec: &StatisticSpec, boot: &GroupedDataset, original: &GroupedDataset) -> Result<f64> {
    evaluate_bootstrap_with_stream(spec, boot, original, &derive_stream(0, &[]))
}

pub fn evaluate_bootstrap_with_stream(
    spec: &StatisticSpec,
    boot: &GroupedDataset,
    original: &GroupedDataset,
    stream: &RngStream,
) -> Result<f64> {
    spec.check_admissible(original.k(), original.dim())?;
    if boot.sizes() != original.sizes() || boot.dim() != original.dim() {
        return Err(Error::InvalidDataset("resample shape differs from the original".into()));
    }
    let mut centre_set = super::KernelSet::default();
    centre_set.medians = spec.id.is_median();
    let mut centre = StatKernels::default();
    centre.compute_into(original, &centre_set, stream)?;
    let mut k = StatKernels::default();
    k.compute_into(boot, &spec.kernels_needed(), stream)?;
    value_from_kernels(spec, &k, Some(&centre))
}

/// The Edgeworth-corrected studentized difference in means.
pub fn edgeworth_statistic(ds: &GroupedDataset) -> Result<f64> {
    evaluate(&StatisticSpec::new(StatisticId::Edgeworth), ds)
}

/// Direct evaluation from kernels, with group parameters optionally centred
/// at another sample's.
pub(crate) fn value_from_kernels(spec: &StatisticSpec, k: &StatKernels, centre: Option<&StatKernels>) -> Result<f64> {
    use StatisticId::*;
    let n = k.n() as f64;
    let rn = n.sqrt();
    let kk = k.k();
    let d = k.dim();

    let theta: Vec<f64> = if spec.id.is_median() {
        let m = k.medians()?;
        match centre {
            Some(c) => m.iter().zip(c.medians()?).map(|(a, b)| a - b).collect(),
            None => m.to_vec(),
        }
    } else {
        match centre {
            Some(c) => k.means().iter().zip(c.means()).map(|(a, b)| a - b).collect(),
            None => k.means().to_vec(),
        }
    };
    let th = |i: usize| &theta[i * d..(i + 1) * d];

    match spec.id {
        DiffMeans | MedianDiff => Ok(rn * (theta[0] - theta[1])),
        Studentized | Edgeworth => {
            let omega = k.inflation(0) * k.variance(0) + k.inflation(1) * k.variance(1);
            if !(omega > 0.0) {
                return Err(Error::degenerate("unpooled variance", "both groups are constant"));
            }
            let s = rn * (theta[0] - theta[1]) / omega.sqrt();
            if spec.id == Studentized {
                return Ok(s);
            }
            let xi = k.inflation(0).powi(2) * k.third_moment(0)? - k.inflation(1).powi(2) * k.third_moment(1)?;
            Ok(edgeworth_value(s, omega, xi, k.n()))
        }
        HotellingPooled | HotellingUnpooled => {
            let s = if spec.id == HotellingPooled {
                k.pooled()? * (k.inflation(0) + k.inflation(1))
            } else {
                unpooled_difference_covariance(k)?
            };
            let what = if spec.id == HotellingPooled {
                "pooled covariance"
            } else {
                "unpooled covariance"
            };
            let chol = s
                .cholesky()
                .ok_or_else(|| Error::degenerate(what, "matrix is singular"))?;
            let delta = DVector::from_iterator(d, th(0).iter().zip(th(1)).map(|(a, b)| a - b));
            let y = chol.l().solve_lower_triangular(&delta).expect("nonsingular factor");
            Ok(n * y.norm_squared())
        }
        MaxAbsT => {
            let mut best = f64::NEG_INFINITY;
            for l in 0..d {
                let om = k.inflation(0) * k.covariance_slice(0)[l * d + l] + k.inflation(1) * k.covariance_slice(1)[l * d + l];
                if !(om > 0.0) {
                    return Err(Error::degenerate(
                        "unpooled variance",
                        format!("coordinate {} is constant in both groups", l + 1),
                    ));
                }
                best = best.max(rn * (th(0)[l] - th(1)[l]).abs() / om.sqrt());
            }
            Ok(best)
        }
        AnovaF => {
            let nu = k.pooled_slice()[0];
            if !(nu > 0.0) {
                return Err(Error::degenerate("pooled variance", "every group is constant"));
            }
            let mbar: f64 = (0..kk).map(|i| k.sizes()[i] as f64 * theta[i]).sum::<f64>() / n;
            let ss: f64 = (0..kk).map(|i| k.sizes()[i] as f64 * (theta[i] - mbar).powi(2)).sum();
            Ok(ss / (kk - 1) as f64 / nu)
        }
        TukeyKramer => {
            let nu = k.pooled_slice()[0];
            if !(nu > 0.0) {
                return Err(Error::degenerate("pooled variance", "every group is constant"));
            }
            let mut best = f64::NEG_INFINITY;
            for i in 0..kk {
                for j in i + 1..kk {
                    let se = ((k.inflation(i) + k.inflation(j)) * nu).sqrt();
                    best = best.max(rn * (theta[i] - theta[j]).abs() / se);
                }
            }
            Ok(best)
        }
        CrWn => {
            let mut wsum = 0.0;
            let mut wmean = 0.0;
            for i in 0..kk {
                let v = k.variance(i);
                if !(v > 0.0) {
                    return Err(Error::degenerate(
                        "group variance",
                        format!("group {} has zero variance", i + 1),
                    ));
                }
                let w = k.sizes()[i] as f64 / v;
                wsum += w;
                wmean += w * theta[i];
            }
            let mbar = wmean / wsum;
            Ok((0..kk)
                .map(|i| k.sizes()[i] as f64 / k.variance(i) * (theta[i] - mbar).powi(2))
                .sum())
        }
        ManovaWilks | ManovaPillai | ManovaLawleyHotelling | ManovaRoy => {
            let chol = k
                .pooled()?
                .cholesky()
                .ok_or_else(|| Error::degenerate("pooled covariance", "matrix is singular"))?
                .l();
            let b = k.fractions();
            let mut mbar = vec![0.0; d];
            for i in 0..kk {
                for (m, x) in mbar.iter_mut().zip(th(i)) {
                    *m += b[i] * x;
                }
            }
            let mut v = vec![0.0; d * kk];
            for i in 0..kk {
                for a in 0..d {
                    v[i * d + a] = rn * (th(i)[a] - mbar[a]);
                }
            }
            let weights: Vec<f64> = b.iter().map(|bj| bj / (kk - 1) as f64).collect();
            let eigs = manova_eigenvalues(&v, &weights, &chol);
            Ok(match spec.id {
                ManovaWilks => ManovaKind::Wilks.from_eigenvalues(&eigs),
                ManovaPillai => ManovaKind::Pillai.from_eigenvalues(&eigs),
                ManovaRoy => ManovaKind::Roy.from_eigenvalues(&eigs),
                _ => eigs.iter().sum(),
            })
        }
        MedianStudentized => {
            let v = k.median_variance_for(spec.median_variance)?;
            if !(v > 0.0) {
                return Err(Error::degenerate("median variance", "bootstrap variance is zero"));
            }
            Ok(rn * (theta[0] - theta[1]) / v.sqrt())
        }
    }
}
