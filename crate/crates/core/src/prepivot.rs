//! Prepivoting: replacing a statistic `T` by an estimate of its own
//! distribution function evaluated at `T`, i.e. one minus a large-sample
//! p-value.
//!
//! Three estimates are offered. The Gaussian one uses the normal limit of the
//! group parameters with the unpooled covariance `(n/n_i) Σ̂_i`; the bootstrap
//! one counts within-group resamples of the centred statistic; and
//! bootstrap-after-Gaussian bootstraps the Gaussian-prepivoted statistic.
//!
//! All randomness is keyed off one stream per dataset (a "unit"): see
//! [`tags`] for the layout.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{resample_into, GroupedDataset};
use crate::distributions::{chi2_cdf, psd_factor, std_normal_cdf, NormalBank};
use crate::rng::RngStream;
use crate::statistics::factor::{contrast_covariance, link_for};
use crate::statistics::{value_from_kernels, KernelSet, Link, QuadForm, StatKernels, StatisticId, StatisticSpec};
use crate::{Error, Result};

/// Children of a unit stream.
///
/// Under a unit stream `u`: `u.child(ASSIGN)` draws the unit's relabelling
/// (permutation units only), `u.child(GAUSS)` seeds the normal bank whose
/// column `c` is `u.child(GAUSS).child(c)`, bootstrap draw `b` resamples from
/// `u.child(BOOT).child(b).child(0)` and takes any Monte Carlo median variance
/// from `.child(1)`, and the unit's own median variance uses `u.child(MEDIAN)`.
pub mod tags {
    pub const ASSIGN: u64 = 0;
    pub const GAUSS: u64 = 1;
    pub const BOOT: u64 = 2;
    pub const MEDIAN: u64 = 3;
}
use tags::{BOOT, GAUSS, MEDIAN};

/// How the Gaussian distribution function is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum GaussianMode {
    /// Φ or a chi-squared distribution function; only for statistics with a
    /// known closed form.
    ClosedForm,
    /// The fraction of `b` normal draws whose statistic is at most the
    /// observed value.
    MonteCarlo { b: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PrepivotSpec {
    None,
    Gaussian { mode: GaussianMode },
    Bootstrap { nboot: usize },
    BootAfterGauss { nboot: usize, mode: GaussianMode },
}

impl PrepivotSpec {
    /// Resolves a command-line name. `gaussian` and `boot_after_gauss` use
    /// the closed form when the statistic has one and `mc_b` draws otherwise.
    pub fn parse(name: &str, id: StatisticId, nboot: usize, mc_b: usize) -> Result<Self> {
        let auto = if id.has_closed_form() {
            GaussianMode::ClosedForm
        } else {
            GaussianMode::MonteCarlo { b: mc_b }
        };
        let mc = GaussianMode::MonteCarlo { b: mc_b };
        let key = name.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match key.as_str() {
            "none" | "raw" => PrepivotSpec::None,
            "gaussian" => PrepivotSpec::Gaussian { mode: auto },
            "gaussian_mc" => PrepivotSpec::Gaussian { mode: mc },
            "bootstrap" | "boot" => PrepivotSpec::Bootstrap { nboot },
            "boot_after_gauss" | "bag" => PrepivotSpec::BootAfterGauss { nboot, mode: auto },
            "boot_after_gauss_mc" => PrepivotSpec::BootAfterGauss { nboot, mode: mc },
            _ => return Err(Error::Config(format!("unknown prepivot '{name}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PrepivotSpec::None => "none",
            PrepivotSpec::Gaussian { mode: GaussianMode::ClosedForm } => "gaussian",
            PrepivotSpec::Gaussian { .. } => "gaussian_mc",
            PrepivotSpec::Bootstrap { .. } => "bootstrap",
            PrepivotSpec::BootAfterGauss { mode: GaussianMode::ClosedForm, .. } => "boot_after_gauss",
            PrepivotSpec::BootAfterGauss { .. } => "boot_after_gauss_mc",
        }
    }

    pub fn nboot(&self) -> usize {
        match *self {
            PrepivotSpec::Bootstrap { nboot } | PrepivotSpec::BootAfterGauss { nboot, .. } => nboot,
            _ => 0,
        }
    }

    pub fn gaussian_mode(&self) -> Option<GaussianMode> {
        match *self {
            PrepivotSpec::Gaussian { mode } | PrepivotSpec::BootAfterGauss { mode, .. } => Some(mode),
            _ => None,
        }
    }

    /// Monte Carlo normal draws, 0 when none are used.
    pub fn mc_b(&self) -> usize {
        match self.gaussian_mode() {
            Some(GaussianMode::MonteCarlo { b }) => b,
            _ => 0,
        }
    }

    /// Rejects combinations that are not defined for `spec`.
    pub fn check_compatible(&self, spec: &StatisticSpec) -> Result<()> {
        if let PrepivotSpec::Bootstrap { nboot: 0 } | PrepivotSpec::BootAfterGauss { nboot: 0, .. } = self {
            return Err(Error::Parameter("nboot must be at least 1".into()));
        }
        if let Some(mode) = self.gaussian_mode() {
            if !spec.id.supports_gaussian() {
                return Err(Error::Config(format!(
                    "{} has no Gaussian limit estimate; use none or bootstrap",
                    spec.id
                )));
            }
            match mode {
                GaussianMode::ClosedForm if !spec.id.has_closed_form() => {
                    return Err(Error::Config(format!(
                        "{} has no closed-form Gaussian prepivot; use the Monte Carlo mode",
                        spec.id
                    )))
                }
                GaussianMode::MonteCarlo { b: 0 } => {
                    return Err(Error::Parameter("Monte Carlo draws B must be at least 1".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl fmt::Display for PrepivotSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// K_T(T): the Gaussian prepivot of `spec` on `ds`.
pub fn gaussian_prepivot(spec: &StatisticSpec, ds: &GroupedDataset, mode: GaussianMode, stream: &RngStream) -> Result<f64> {
    apply_prepivot(&PrepivotSpec::Gaussian { mode }, spec, ds, stream)
}

/// J_T(T): the fraction of `nboot` centred resample statistics at most the
/// observed one.
pub fn bootstrap_prepivot(spec: &StatisticSpec, ds: &GroupedDataset, nboot: usize, stream: &RngStream) -> Result<f64> {
    apply_prepivot(&PrepivotSpec::Bootstrap { nboot }, spec, ds, stream)
}

/// The bootstrap prepivot of the Gaussian-prepivoted statistic: each
/// resample's `K` uses that resample's own kernels.
pub fn boot_after_gauss(
    spec: &StatisticSpec,
    ds: &GroupedDataset,
    nboot: usize,
    mode: GaussianMode,
    stream: &RngStream,
) -> Result<f64> {
    apply_prepivot(&PrepivotSpec::BootAfterGauss { nboot, mode }, spec, ds, stream)
}

/// The prepivoted statistic, or the raw one for [`PrepivotSpec::None`].
pub fn apply_prepivot(pspec: &PrepivotSpec, spec: &StatisticSpec, ds: &GroupedDataset, stream: &RngStream) -> Result<f64> {
    let plan = Plan::new(&[(*spec, *pspec)])?;
    let mut ws = Workspace::default();
    let mut out = evaluate_unit(&plan, ds, *stream, &mut ws);
    out.pop().expect("one cell").map(|u| u.prepivoted)
}

/// One cell's outcome on one dataset. `key` orders datasets the same way as
/// `prepivoted` and is what permutation p-values compare.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct UnitValue {
    pub raw: f64,
    pub key: f64,
    pub prepivoted: f64,
}

/// Several (statistic, prepivot) cells evaluated together on each dataset,
/// sharing kernels, bootstrap resamples and normal draws. A cell's value does
/// not depend on which other cells share the plan.
#[derive(Clone, Debug)]
pub(crate) struct Plan {
    cells: Vec<(StatisticSpec, PrepivotSpec)>,
    stats: Vec<StatisticSpec>,
    cell_stat: Vec<usize>,
    /// Kernels each statistic needs on the observed data.
    needs: Vec<KernelSet>,
    union: KernelSet,
    /// Kernels each statistic needs on a resample (empty if none).
    boot_needs: Vec<Option<KernelSet>>,
    boot_union: KernelSet,
    nboot_max: usize,
    b_max: usize,
}

impl Plan {
    pub(crate) fn new(cells: &[(StatisticSpec, PrepivotSpec)]) -> Result<Plan> {
        let mut stats: Vec<StatisticSpec> = Vec::new();
        let mut cell_stat = Vec::with_capacity(cells.len());
        for (spec, pspec) in cells {
            pspec.check_compatible(spec)?;
            let s = match stats.iter().position(|x| x == spec) {
                Some(s) => s,
                None => {
                    stats.push(*spec);
                    stats.len() - 1
                }
            };
            cell_stat.push(s);
        }
        let mut needs: Vec<KernelSet> = stats.iter().map(|s| s.kernels_needed()).collect();
        let mut boot_needs: Vec<Option<KernelSet>> = vec![None; stats.len()];
        for (c, (_, pspec)) in cells.iter().enumerate() {
            let s = cell_stat[c];
            if pspec.gaussian_mode().is_some() {
                needs[s].covariances = true;
            }
            if pspec.nboot() > 0 {
                let mut set = stats[s].kernels_needed();
                if let PrepivotSpec::BootAfterGauss { .. } = pspec {
                    set.covariances = true;
                }
                match &mut boot_needs[s] {
                    Some(have) => have.union(&set),
                    slot => *slot = Some(set),
                }
            }
        }
        let mut union = KernelSet::default();
        needs.iter().for_each(|n| union.union(n));
        let mut boot_union = KernelSet::default();
        boot_needs.iter().flatten().for_each(|n| boot_union.union(n));
        Ok(Plan {
            nboot_max: cells.iter().map(|c| c.1.nboot()).max().unwrap_or(0),
            b_max: cells.iter().map(|c| c.1.mc_b()).max().unwrap_or(0),
            cells: cells.to_vec(),
            stats,
            cell_stat,
            needs,
            union,
            boot_needs,
            boot_union,
        })
    }

    pub(crate) fn cells(&self) -> &[(StatisticSpec, PrepivotSpec)] {
        &self.cells
    }
}

/// Reusable buffers for [`evaluate_unit`].
#[derive(Default)]
pub(crate) struct Workspace {
    boot: Option<GroupedDataset>,
    obs: Vec<StatKernels>,
    res: Vec<StatKernels>,
}

/// Every cell of `plan` on `ds`, with randomness from the unit stream `unit`.
pub(crate) fn evaluate_unit(plan: &Plan, ds: &GroupedDataset, unit: RngStream, ws: &mut Workspace) -> Vec<Result<UnitValue>> {
    let ns = plan.stats.len();
    let mut stat_err: Vec<Option<Error>> = plan
        .stats
        .iter()
        .map(|s| s.check_admissible(ds.k(), ds.dim()).err())
        .collect();

    // one kernel computation for everything when possible, else per statistic
    ws.obs.resize_with(ns.max(1), Default::default);
    let median_stream = unit.child(MEDIAN);
    let shared = stat_err.iter().all(Option::is_none) && ws.obs[0].compute_into(ds, &plan.union, &median_stream).is_ok();
    if !shared {
        for s in 0..ns {
            if stat_err[s].is_none() {
                if let Err(e) = ws.obs[s].compute_into(ds, &plan.needs[s], &median_stream) {
                    stat_err[s] = Some(e);
                }
            }
        }
    }
    let kx = |s: usize| if shared { 0 } else { s };

    let raw: Vec<Result<f64>> = (0..ns)
        .map(|s| match &stat_err[s] {
            Some(e) => Err(e.clone()),
            None => value_from_kernels(&plan.stats[s], &ws.obs[kx(s)], None),
        })
        .collect();

    let bank = NormalBank::new(unit.child(GAUSS), plan.b_max.max(1));
    let mut out: Vec<Result<UnitValue>> = Vec::with_capacity(plan.cells.len());
    // (cell, observed comparison value, count) for bootstrap-type cells
    let mut boot_cells: Vec<(usize, f64, usize)> = Vec::new();
    for (c, (spec, pspec)) in plan.cells.iter().enumerate() {
        let s = plan.cell_stat[c];
        let t = match &raw[s] {
            Ok(t) => *t,
            Err(e) => {
                out.push(Err(e.clone()));
                continue;
            }
        };
        let k = &ws.obs[kx(s)];
        let value = match *pspec {
            PrepivotSpec::None => Ok(UnitValue {
                raw: t,
                key: t,
                prepivoted: t,
            }),
            PrepivotSpec::Gaussian { mode } => gaussian_key(spec, mode, k, t, &bank).and_then(|key| {
                Ok(UnitValue {
                    raw: t,
                    key,
                    prepivoted: key_to_cdf(spec, mode, k, key)?,
                })
            }),
            PrepivotSpec::Bootstrap { .. } => {
                boot_cells.push((c, t, 0));
                Ok(UnitValue {
                    raw: t,
                    key: f64::NAN,
                    prepivoted: f64::NAN,
                })
            }
            PrepivotSpec::BootAfterGauss { mode, .. } => gaussian_key(spec, mode, k, t, &bank).map(|key| {
                boot_cells.push((c, key, 0));
                UnitValue {
                    raw: t,
                    key: f64::NAN,
                    prepivoted: f64::NAN,
                }
            }),
        };
        out.push(value);
    }

    if !boot_cells.is_empty() {
        bootstrap_counts(plan, ds, unit, ws, shared, &stat_err, &bank, &mut boot_cells);
        for (c, _, count) in boot_cells {
            if let Ok(v) = &mut out[c] {
                let j = count as f64 / plan.cells[c].1.nboot() as f64;
                v.key = j;
                v.prepivoted = j;
            }
        }
    }
    out
}

fn bootstrap_counts(
    plan: &Plan,
    ds: &GroupedDataset,
    unit: RngStream,
    ws: &mut Workspace,
    shared: bool,
    stat_err: &[Option<Error>],
    bank: &NormalBank,
    cells: &mut [(usize, f64, usize)],
) {
    let ns = plan.stats.len();
    let nboot = cells.iter().map(|&(c, ..)| plan.cells[c].1.nboot()).max().unwrap_or(0);
    debug_assert!(nboot <= plan.nboot_max);
    // statistics needed in the loop, with their longest run
    let mut stat_runs = vec![0usize; ns];
    for &(c, ..) in cells.iter() {
        let s = plan.cell_stat[c];
        stat_runs[s] = stat_runs[s].max(plan.cells[c].1.nboot());
    }
    let boot = match &mut ws.boot {
        Some(b) if b.same_shape_as(ds) => b,
        slot => slot.insert(ds.same_shape()),
    };
    ws.res.resize_with(ns.max(1), Default::default);
    let boot_root = unit.child(BOOT);
    let mut tb: Vec<Option<f64>> = vec![None; ns];

    for b in 0..nboot {
        let draw = boot_root.child(b as u64);
        resample_into(ds, &mut draw.child(0).rng(), boot);
        let mstream = draw.child(1);
        let union_ok = shared && ws.res[0].compute_into(boot, &plan.boot_union, &mstream).is_ok();
        for s in 0..ns {
            tb[s] = None;
            if stat_runs[s] <= b || stat_err[s].is_some() {
                continue;
            }
            let ks = if union_ok {
                0
            } else {
                let need = plan.boot_needs[s].as_ref().expect("bootstrap statistic");
                if ws.res[s].compute_into(boot, need, &mstream).is_err() {
                    continue;
                }
                s
            };
            let centre = &ws.obs[if shared { 0 } else { s }];
            tb[s] = value_from_kernels(&plan.stats[s], &ws.res[ks], Some(centre)).ok();
        }
        for (c, observed, count) in cells.iter_mut() {
            let (spec, pspec) = &plan.cells[*c];
            if pspec.nboot() <= b {
                continue;
            }
            let s = plan.cell_stat[*c];
            let hit = match (*pspec, tb[s]) {
                (PrepivotSpec::Bootstrap { .. }, Some(t)) => t <= *observed,
                (PrepivotSpec::BootAfterGauss { mode, .. }, t) => {
                    let ks = if union_ok { 0 } else { s };
                    // a degenerate resample has K = 1
                    let key = t
                        .and_then(|t| gaussian_key(spec, mode, &ws.res[ks], t, bank).ok())
                        .unwrap_or(match mode {
                            GaussianMode::ClosedForm => f64::INFINITY,
                            GaussianMode::MonteCarlo { .. } => 1.0,
                        });
                    key <= *observed
                }
                // a degenerate centred statistic counts as +∞
                (_, None) => false,
                _ => unreachable!(),
            };
            *count += usize::from(hit);
        }
    }
}

/// The ranking key of the Gaussian prepivot at `t`: the monotone argument of
/// the closed form, or the Monte Carlo probability itself.
fn gaussian_key(spec: &StatisticSpec, mode: GaussianMode, k: &StatKernels, t: f64, bank: &NormalBank) -> Result<f64> {
    match mode {
        GaussianMode::ClosedForm => match spec.id {
            StatisticId::DiffMeans => {
                let omega = k.inflation(0) * k.variance(0) + k.inflation(1) * k.variance(1);
                Ok(if omega > 0.0 {
                    t / omega.sqrt()
                } else if t >= 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                })
            }
            StatisticId::Studentized | StatisticId::HotellingUnpooled | StatisticId::CrWn => Ok(t),
            id => Err(Error::Config(format!("{id} has no closed-form Gaussian prepivot"))),
        },
        GaussianMode::MonteCarlo { b } => gaussian_cdf_mc(spec, k, t, bank, b),
    }
}

fn key_to_cdf(spec: &StatisticSpec, mode: GaussianMode, k: &StatKernels, key: f64) -> Result<f64> {
    match mode {
        GaussianMode::MonteCarlo { .. } => Ok(key),
        GaussianMode::ClosedForm => match spec.id {
            StatisticId::HotellingUnpooled => chi2_cdf(key, k.dim() as u32),
            StatisticId::CrWn => chi2_cdf(key, (k.k() - 1) as u32),
            _ => Ok(std_normal_cdf(key)),
        },
    }
}

/// P(g(v) ≤ x) for `v ~ N(0, Ω)`, `Ω` the covariance of the stacked contrast
/// vector, estimated from the first `b` rows of the bank.
fn gaussian_cdf_mc(spec: &StatisticSpec, k: &StatKernels, x: f64, bank: &NormalBank, b: usize) -> Result<f64> {
    let (contrast, link) = link_for(spec, k)?;
    let omega = contrast_covariance(k, &contrast);
    if omega.nrows() == 1 {
        let w = omega[(0, 0)];
        let scaled = |x: f64| {
            if w > 0.0 {
                bank.normal_cdf(x / w.sqrt(), b)
            } else {
                f64::from(x >= 0.0)
            }
        };
        match &link {
            Link::Identity => return Ok(scaled(x)),
            Link::Standardized { scale } => return Ok(scaled(x * scale)),
            Link::MaxAbs { scales } => {
                return Ok(if x < 0.0 {
                    0.0
                } else {
                    bank.weighted_chisq_cdf(&[w / (scales[0] * scales[0])], x * x, b)
                })
            }
            _ => {}
        }
    }
    Ok(match link {
        Link::Quadratic(q) => bank.weighted_chisq_cdf(&q.mixture_weights(&omega), x, b),
        // one nonzero eigenvalue, equal to the Lawley-Hotelling trace
        Link::Manova { kind, weights, chol } if k.dim() == 1 || k.k() == 2 => {
            let q = QuadForm::Kron { weights, chol };
            bank.weighted_chisq_cdf(&q.mixture_weights(&omega), kind.invert_single(x), b)
        }
        link => {
            let factor: DMatrix<f64> = psd_factor(&omega)?;
            bank.probability(&factor, b, |v| link.apply(v) <= x)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use crate::statistics::{evaluate, MedianVariance};
    use approx::assert_abs_diff_eq;

    fn spec(id: StatisticId) -> StatisticSpec {
        StatisticSpec::new(id)
    }

    fn sample() -> GroupedDataset {
        GroupedDataset::univariate(&[
            vec![0.3, 1.9, -0.4, 2.2, 0.8, 1.1],
            vec![3.1, -2.0, 0.5, 4.4, 1.7, -0.9, 2.6],
        ])
        .unwrap()
    }

    #[test]
    fn names_round_trip() {
        for name in ["none", "gaussian", "gaussian_mc", "bootstrap", "boot_after_gauss", "boot_after_gauss_mc"] {
            let p = PrepivotSpec::parse(name, StatisticId::Studentized, 50, 300).unwrap();
            assert_eq!(p.name(), name);
        }
        let p = PrepivotSpec::parse("gaussian", StatisticId::AnovaF, 50, 300).unwrap();
        assert_eq!(p, PrepivotSpec::Gaussian { mode: GaussianMode::MonteCarlo { b: 300 } });
        assert!(PrepivotSpec::parse("jackknife", StatisticId::AnovaF, 1, 1).is_err());
    }

    #[test]
    fn compatibility() {
        let closed = PrepivotSpec::Gaussian { mode: GaussianMode::ClosedForm };
        assert!(matches!(closed.check_compatible(&spec(StatisticId::AnovaF)), Err(Error::Config(_))));
        assert!(matches!(closed.check_compatible(&spec(StatisticId::MedianDiff)), Err(Error::Config(_))));
        assert!(PrepivotSpec::Bootstrap { nboot: 0 }.check_compatible(&spec(StatisticId::DiffMeans)).is_err());
        assert!(PrepivotSpec::Bootstrap { nboot: 5 }.check_compatible(&spec(StatisticId::MedianDiff)).is_ok());
    }

    #[test]
    fn closed_form_diff_means_hand_value() {
        let ds = GroupedDataset::univariate(&[vec![1.0, 3.0], vec![2.0, 6.0]]).unwrap();
        let k = gaussian_prepivot(&spec(StatisticId::DiffMeans), &ds, GaussianMode::ClosedForm, &derive_stream(1, &[]))
            .unwrap();
        assert_abs_diff_eq!(k, std_normal_cdf(-4.0 / 20f64.sqrt()), epsilon = 1e-15);
        let raw = apply_prepivot(&PrepivotSpec::None, &spec(StatisticId::DiffMeans), &ds, &derive_stream(1, &[])).unwrap();
        assert_eq!(raw, -4.0);
    }

    #[test]
    fn cell_values_do_not_depend_on_batch() {
        let ds = sample();
        let cells = [
            (spec(StatisticId::Studentized), PrepivotSpec::Bootstrap { nboot: 40 }),
            (spec(StatisticId::AnovaF), PrepivotSpec::Gaussian { mode: GaussianMode::MonteCarlo { b: 300 } }),
            (spec(StatisticId::TukeyKramer), PrepivotSpec::BootAfterGauss { nboot: 25, mode: GaussianMode::MonteCarlo { b: 200 } }),
            (spec(StatisticId::CrWn), PrepivotSpec::BootAfterGauss { nboot: 30, mode: GaussianMode::ClosedForm }),
            (
                spec(StatisticId::MedianStudentized).with_median_variance(MedianVariance::Bootstrap { draws: 20 }),
                PrepivotSpec::Bootstrap { nboot: 10 },
            ),
        ];
        let unit = derive_stream(5, &[3]);
        let plan = Plan::new(&cells).unwrap();
        let together = evaluate_unit(&plan, &ds, unit, &mut Workspace::default());
        for (c, cell) in cells.iter().enumerate() {
            let alone = evaluate_unit(&Plan::new(&[*cell]).unwrap(), &ds, unit, &mut Workspace::default());
            assert_eq!(alone[0].as_ref().unwrap(), together[c].as_ref().unwrap(), "{}", cell.0);
        }
    }

    #[test]
    fn values_in_unit_interval() {
        let ds = sample();
        let stream = derive_stream(2, &[]);
        for id in StatisticId::ALL {
            for p in ["gaussian", "bootstrap", "boot_after_gauss"] {
                let pspec = PrepivotSpec::parse(p, id, 20, 200).unwrap();
                if pspec.check_compatible(&spec(id)).is_err() {
                    continue;
                }
                let v = apply_prepivot(&pspec, &spec(id), &ds, &stream).unwrap();
                assert!((0.0..=1.0).contains(&v), "{id} {p} {v}");
            }
        }
    }

    #[test]
    fn counting_bounds() {
        // observed far above every centred resample
        let ds = GroupedDataset::univariate(&[vec![10.0, 10.5, 9.5, 10.2], vec![0.0, 0.3, -0.2, 0.1]]).unwrap();
        let s = derive_stream(4, &[]);
        assert_eq!(bootstrap_prepivot(&spec(StatisticId::DiffMeans), &ds, 200, &s).unwrap(), 1.0);
        let flipped = GroupedDataset::univariate(&[vec![0.0, 0.3, -0.2, 0.1], vec![10.0, 10.5, 9.5, 10.2]]).unwrap();
        assert_eq!(bootstrap_prepivot(&spec(StatisticId::DiffMeans), &flipped, 200, &s).unwrap(), 0.0);
        let one = bootstrap_prepivot(&spec(StatisticId::Studentized), &sample(), 1, &s).unwrap();
        assert!(one == 0.0 || one == 1.0);
    }

    #[test]
    fn constant_groups_tie_rule() {
        let flat = GroupedDataset::univariate(&[vec![1.0; 4], vec![1.0; 5]]).unwrap();
        let v = boot_after_gauss(&spec(StatisticId::DiffMeans), &flat, 50, GaussianMode::ClosedForm, &derive_stream(1, &[]))
            .unwrap();
        assert_eq!(v, 1.0);
        let v = bootstrap_prepivot(&spec(StatisticId::DiffMeans), &flat, 50, &derive_stream(1, &[])).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn zero_statistic_boundaries() {
        let uv = GroupedDataset::univariate(&[vec![0.0, 2.0], vec![-1.0, 3.0], vec![1.0, 1.5, 0.5]]).unwrap();
        let s = derive_stream(1, &[]);
        let w = gaussian_prepivot(&spec(StatisticId::CrWn), &uv, GaussianMode::ClosedForm, &s).unwrap();
        assert_eq!(w, 0.0);
        let mc = GaussianMode::MonteCarlo { b: 500 };
        for id in [StatisticId::AnovaF, StatisticId::CrWn, StatisticId::TukeyKramer] {
            assert!(evaluate(&spec(id), &uv).unwrap().abs() < 1e-12);
            let k = gaussian_prepivot(&spec(id), &uv, mc, &s).unwrap();
            assert!(k <= 0.01, "{id} {k}");
        }
    }

    #[test]
    fn monte_carlo_close_to_closed_form() {
        let ds = sample();
        let s = derive_stream(8, &[]);
        for id in [StatisticId::DiffMeans, StatisticId::Studentized, StatisticId::CrWn] {
            let closed = gaussian_prepivot(&spec(id), &ds, GaussianMode::ClosedForm, &s).unwrap();
            let mc = gaussian_prepivot(&spec(id), &ds, GaussianMode::MonteCarlo { b: 100_000 }, &s).unwrap();
            assert!((closed - mc).abs() <= 0.005, "{id}: {closed} vs {mc}");
        }
    }

    #[test]
    fn median_gaussian_is_config_error() {
        let p = PrepivotSpec::Gaussian { mode: GaussianMode::MonteCarlo { b: 10 } };
        let r = apply_prepivot(&p, &spec(StatisticId::MedianDiff), &sample(), &derive_stream(1, &[]));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
