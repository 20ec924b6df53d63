//! The outer permutation layer: permutation distributions, p-values and the
//! nested test runner.
//!
//! Permutation `p` (1-based) of a test rooted at stream `r` is the unit
//! `r.child(p)`; the observed data is unit `r.child(0)`. Each unit is a pure
//! function of its stream, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{permute_into, shuffled_assignment, GroupAssignment, GroupedDataset};
use crate::prepivot::tags::ASSIGN;
use crate::prepivot::{evaluate_unit, Plan, PrepivotSpec, UnitValue, Workspace};
use crate::rng::{derive_stream, RngStream};
use crate::statistics::{StatisticId, StatisticSpec};
use crate::{Error, Result};

/// Default cap on the number of group assignments [`exact_p_value`] visits.
pub const ENUMERATION_CAP: u64 = 1_000_000;

/// Relative slack under which a permuted value counts as a tie with the
/// observed one, so that rounding in a different summation order cannot
/// break a mathematical tie.
const TIE_TOLERANCE: f64 = 1e-12;

fn tie_floor(x: f64) -> f64 {
    if x.is_finite() {
        x - TIE_TOLERANCE * x.abs().max(1.0)
    } else {
        x
    }
}

/// Sorted draws from a permutation distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        EmpiricalDistribution { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Number of draws `≥ x`.
    pub fn count_geq(&self, x: f64) -> usize {
        self.values.len() - self.values.partition_point(|&v| v < x)
    }

    /// The smallest draw `v` with `F(v) ≥ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!(!self.values.is_empty(), "quantile of an empty distribution");
        let n = self.values.len();
        let i = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.values[i - 1]
    }
}

/// `nperm` evaluations of `eval` on uniformly relabelled copies of `ds`.
pub fn permutation_distribution<F>(eval: F, ds: &GroupedDataset, nperm: usize, stream: &RngStream) -> Result<EmpiricalDistribution>
where
    F: Fn(&GroupedDataset) -> Result<f64> + Sync,
{
    if nperm == 0 {
        return Err(Error::Parameter("nperm must be at least 1".into()));
    }
    let values: Vec<f64> = (1..=nperm)
        .into_par_iter()
        .map_init(
            || ds.same_shape(),
            |buf, p| {
                let unit = stream.child(p as u64);
                let a = shuffled_assignment(ds, &mut unit.child(ASSIGN).rng());
                permute_into(ds, &a, buf)?;
                eval(buf).map_err(|e| Error::Permutation {
                    index: p,
                    source: Box::new(e),
                })
            },
        )
        .collect::<Result<_>>()?;
    Ok(EmpiricalDistribution::new(values))
}

/// The add-one p-value `(1 + #{draws ≥ observed}) / (1 + nperm)`.
pub fn mc_p_value(observed: f64, dist: &EmpiricalDistribution) -> f64 {
    (1 + dist.count_geq(tie_floor(observed))) as f64 / (1 + dist.count()) as f64
}

/// Number of distinct group assignments, `n! / Π n_i!`.
pub fn assignment_count(sizes: &[usize]) -> f64 {
    let mut total = 0usize;
    let mut ln = 0.0;
    for &s in sizes {
        for j in 1..=s {
            total += 1;
            ln += (total as f64).ln() - (j as f64).ln();
        }
    }
    ln.exp().round()
}

/// Exact right-tail p-value over all distinct group assignments, with the
/// default cap.
pub fn exact_p_value<F>(eval: F, ds: &GroupedDataset) -> Result<f64>
where
    F: Fn(&GroupedDataset) -> Result<f64>,
{
    exact_p_value_with_cap(eval, ds, ENUMERATION_CAP)
}

pub fn exact_p_value_with_cap<F>(eval: F, ds: &GroupedDataset, cap: u64) -> Result<f64>
where
    F: Fn(&GroupedDataset) -> Result<f64>,
{
    let count = assignment_count(ds.sizes());
    if count > cap as f64 {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let observed = tie_floor(eval(ds)?);
    let mut labels = ds.identity_assignment().labels().to_vec();
    let mut buf = ds.same_shape();
    let (mut visited, mut hits) = (0usize, 0usize);
    loop {
        let a = GroupAssignment::new(labels.clone(), ds.sizes())?;
        permute_into(ds, &a, &mut buf)?;
        let v = eval(&buf).map_err(|e| Error::Permutation {
            index: visited,
            source: Box::new(e),
        })?;
        visited += 1;
        hits += usize::from(v >= observed);
        if !next_permutation(&mut labels) {
            break;
        }
    }
    Ok(hits as f64 / visited as f64)
}

/// Advances to the next lexicographic arrangement; false after the last.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// The outcome of one prepivoted permutation test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: StatisticId,
    pub prepivot: String,
    pub observed_raw: f64,
    pub observed_prepivoted: f64,
    pub p_value: f64,
    pub nperm: usize,
    pub nboot: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

/// A Monte Carlo permutation test of `spec` prepivoted by `pspec`.
pub fn run_test(ds: &GroupedDataset, spec: &StatisticSpec, pspec: &PrepivotSpec, nperm: usize, seed: u64) -> Result<TestResult> {
    run_tests(ds, &[(*spec, *pspec)], nperm, seed).pop().expect("one cell")
}

/// Several tests on the same data and the same permutations.
pub fn run_tests(
    ds: &GroupedDataset,
    cells: &[(StatisticSpec, PrepivotSpec)],
    nperm: usize,
    seed: u64,
) -> Vec<Result<TestResult>> {
    let plan = match Plan::new(cells) {
        Ok(p) => p,
        Err(e) => return cells.iter().map(|_| Err(e.clone())).collect(),
    };
    run_plan(ds, &plan, nperm, derive_stream(seed, &[]), seed)
}

pub(crate) fn run_plan(ds: &GroupedDataset, plan: &Plan, nperm: usize, root: RngStream, seed: u64) -> Vec<Result<TestResult>> {
    let cells = plan.cells();
    if nperm == 0 {
        return cells
            .iter()
            .map(|_| Err(Error::Parameter("nperm must be at least 1".into())))
            .collect();
    }
    let observed = evaluate_unit(plan, ds, root.child(0), &mut Workspace::default());
    if observed.iter().all(Result::is_err) {
        return observed.into_iter().map(|r| r.map(|_| unreachable!())).collect();
    }

    let perms: Vec<Vec<Result<UnitValue>>> = (1..=nperm)
        .into_par_iter()
        .map_init(
            || (Workspace::default(), ds.same_shape()),
            |(ws, buf), p| {
                let unit = root.child(p as u64);
                let a = shuffled_assignment(ds, &mut unit.child(ASSIGN).rng());
                permute_into(ds, &a, buf).expect("assignment matches shape");
                evaluate_unit(plan, buf, unit, ws)
            },
        )
        .collect();

    observed
        .into_iter()
        .enumerate()
        .map(|(c, obs)| {
            let obs = obs?;
            let floor = tie_floor(obs.key);
            let mut geq = 0usize;
            for (i, unit) in perms.iter().enumerate() {
                match &unit[c] {
                    Ok(v) => geq += usize::from(v.key >= floor),
                    Err(e) => {
                        return Err(Error::Permutation {
                            index: i + 1,
                            source: Box::new(e.clone()),
                        })
                    }
                }
            }
            let (spec, pspec) = &cells[c];
            Ok(TestResult {
                statistic: spec.id,
                prepivot: pspec.name().to_string(),
                observed_raw: obs.raw,
                observed_prepivoted: obs.prepivoted,
                p_value: (1 + geq) as f64 / (1 + nperm) as f64,
                nperm,
                nboot: pspec.nboot(),
                b: pspec.mc_b(),
                seed,
            })
        })
        .collect()
}

/// Exact permutation test: every distinct group assignment is visited, and
/// all of them share the unit stream `(seed, [0])`, so the prepivoted
/// statistic is one fixed function of the data. `nperm` in the result is the
/// number of assignments.
pub fn exact_test(
    ds: &GroupedDataset,
    spec: &StatisticSpec,
    pspec: &PrepivotSpec,
    seed: u64,
    cap: u64,
    lower_tail: bool,
) -> Result<TestResult> {
    let plan = Plan::new(&[(*spec, *pspec)])?;
    let unit = derive_stream(seed, &[0]);
    let sign = if lower_tail { -1.0 } else { 1.0 };
    let observed = evaluate_unit(&plan, ds, unit, &mut Workspace::default()).pop().expect("one cell")?;
    let ws = std::cell::RefCell::new(Workspace::default());
    let p = exact_p_value_with_cap(
        |d| {
            let v = evaluate_unit(&plan, d, unit, &mut ws.borrow_mut()).pop().expect("one cell")?;
            Ok(sign * v.key)
        },
        ds,
        cap,
    )?;
    Ok(TestResult {
        statistic: spec.id,
        prepivot: pspec.name().to_string(),
        observed_raw: observed.raw,
        observed_prepivoted: observed.prepivoted,
        p_value: p,
        nperm: assignment_count(ds.sizes()) as usize,
        nboot: pspec.nboot(),
        b: pspec.mc_b(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::evaluate;

    fn tiny() -> GroupedDataset {
        GroupedDataset::univariate(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()
    }

    #[test]
    fn p_value_formula_edges() {
        let d = EmpiricalDistribution::new((0..999).map(f64::from).collect());
        assert_eq!(mc_p_value(5000.0, &d), 1.0 / 1000.0);
        assert_eq!(mc_p_value(-1.0, &d), 1.0);
        let flat = EmpiricalDistribution::new(vec![2.0; 10]);
        assert_eq!(mc_p_value(2.0, &flat), 1.0);
    }

    #[test]
    fn distribution_queries() {
        let d = EmpiricalDistribution::new(vec![3.0, 1.0, 2.0, 2.0]);
        assert_eq!(d.values(), &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(d.count_geq(2.0), 3);
        assert_eq!(d.count_geq(3.5), 0);
        assert_eq!(d.quantile(0.5), 2.0);
        assert_eq!(d.quantile(1.0), 3.0);
        assert_eq!(d.quantile(0.0), 1.0);
    }

    #[test]
    fn enumerates_multiset_arrangements() {
        let mut v = vec![0, 0, 1, 1];
        let mut n = 1;
        while next_permutation(&mut v) {
            n += 1;
        }
        assert_eq!(n, 6);
        assert_eq!(v, vec![1, 1, 0, 0]);
        assert_eq!(assignment_count(&[3, 3]), 20.0);
        assert_eq!(assignment_count(&[2, 2, 3]), 210.0);
    }

    #[test]
    fn exact_p_for_reversed_difference() {
        let ds = tiny();
        let stat = |d: &GroupedDataset| Ok(d.group(1).iter().sum::<f64>() / 2.0 - d.group(0).iter().sum::<f64>() / 2.0);
        assert_eq!(exact_p_value(stat, &ds).unwrap(), 1.0 / 6.0);
        assert_eq!(exact_p_value(|_: &GroupedDataset| Ok(1.0), &ds).unwrap(), 1.0);
        let big = GroupedDataset::univariate(&[vec![0.0; 15], vec![1.0; 15]]).unwrap();
        assert!(matches!(
            exact_p_value(|_: &GroupedDataset| Ok(0.0), &big),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn constant_statistic_distribution() {
        let d = permutation_distribution(|_| Ok(7.0), &tiny(), 50, &derive_stream(1, &[])).unwrap();
        assert!(d.values().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn permutation_errors_carry_index() {
        let ds = tiny();
        let r = permutation_distribution(
            |d| {
                if d.group(0)[0] == 4.0 || d.group(0)[1] == 4.0 {
                    Err(Error::degenerate("test", "boom"))
                } else {
                    Ok(0.0)
                }
            },
            &ds,
            100,
            &derive_stream(1, &[]),
        );
        assert!(matches!(r, Err(Error::Permutation { .. })));
    }

    #[test]
    fn run_test_matches_permutation_distribution() {
        let ds = GroupedDataset::univariate(&[vec![0.1, 2.0, 1.4, 0.7], vec![3.0, 2.2, 5.1, 4.0, 2.9]]).unwrap();
        let spec = StatisticSpec::new(StatisticId::Studentized);
        let r = run_test(&ds, &spec, &PrepivotSpec::None, 199, 11).unwrap();
        let root = derive_stream(11, &[]);
        let d = permutation_distribution(|x| evaluate(&spec, x), &ds, 199, &root).unwrap();
        assert_eq!(r.p_value, mc_p_value(evaluate(&spec, &ds).unwrap(), &d));
        assert_eq!((r.p_value * 200.0).round(), r.p_value * 200.0);
    }
}
