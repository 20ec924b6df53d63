use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::beta::beta_reg;
use statrs::function::factorial::ln_binomial;

use crate::data::{resample_into, GroupedDataset};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Sample median; the midpoint of the two central order statistics for even
/// length.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    median_of_sorted(&v)
}

pub(crate) fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Group medians and the Monte Carlo bootstrap variance v̂ of
/// `√n(m̂₁* − m̂₂*)` over `vboot` within-group resamples.
pub fn median_kernels(ds: &GroupedDataset, vboot: usize, stream: &RngStream) -> Result<(f64, f64, f64)> {
    if ds.k() != 2 || ds.dim() != 1 {
        return Err(Error::InvalidDataset("median kernels need two univariate groups".into()));
    }
    let v = median_variance_bootstrap(ds, vboot, stream)?;
    Ok((median(ds.group(0)), median(ds.group(1)), v))
}

pub(crate) fn median_variance_bootstrap(ds: &GroupedDataset, draws: usize, stream: &RngStream) -> Result<f64> {
    if draws < 2 {
        return Err(Error::Parameter(format!(
            "median bootstrap variance needs at least 2 draws, got {draws}"
        )));
    }
    if ds.k() != 2 {
        return Err(Error::InvalidDataset("median variance needs two groups".into()));
    }
    let root_n = (ds.n() as f64).sqrt();
    let mut boot = ds.clone();
    let mut scratch = Vec::with_capacity(ds.n());
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for b in 0..draws {
        resample_into(ds, &mut stream.child(b as u64).rng(), &mut boot);
        let mut m = [0.0; 2];
        for (g, slot) in m.iter_mut().enumerate() {
            scratch.clear();
            scratch.extend_from_slice(boot.group(g));
            scratch.sort_unstable_by(f64::total_cmp);
            *slot = median_of_sorted(&scratch);
        }
        let t = root_n * (m[0] - m[1]);
        sum += t;
        sumsq += t * t;
    }
    let nb = draws as f64;
    let mean = sum / nb;
    Ok(((sumsq - nb * mean * mean) / (nb - 1.0)).max(0.0))
}

/// Exact resampling variance of `√n(m̂₁* − m̂₂*)` for two univariate groups:
/// `n(Var m̂₁* + Var m̂₂*)` computed from order-statistic probabilities.
pub fn median_variance_exact(ds: &GroupedDataset) -> Result<f64> {
    if ds.k() != 2 || ds.dim() != 1 {
        return Err(Error::InvalidDataset("median variance needs two univariate groups".into()));
    }
    let mut total = 0.0;
    for g in 0..2 {
        let mut v = ds.group(g).to_vec();
        v.sort_unstable_by(f64::total_cmp);
        total += median_variance_exact_sorted(&v);
    }
    Ok(ds.n() as f64 * total)
}

/// Variance of the median of a with-replacement resample of `sorted`.
pub(crate) fn median_variance_exact_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return 0.0;
    }
    let w = weights(n);
    // shifting keeps constant samples at exactly zero
    let shift = sorted[n / 2];
    let (mut m1, mut m2) = (0.0, 0.0);
    match &*w {
        Weights::Odd(p) => {
            for (x, &pj) in sorted.iter().zip(p) {
                let x = x - shift;
                m1 += pj * x;
                m2 += pj * x * x;
            }
        }
        Weights::Even(joint) => {
            for &(i, j, p) in joint {
                let m = 0.5 * (sorted[i] + sorted[j]) - shift;
                m1 += p * m;
                m2 += p * m * m;
            }
        }
    }
    (m2 - m1 * m1).max(0.0)
}

enum Weights {
    /// P(X*_(r) = x_(j)) for the middle order statistic.
    Odd(Vec<f64>),
    /// (i, j, P(X*_(r) = x_(i), X*_(r+1) = x_(j))) with non-negligible mass.
    Even(Vec<(usize, usize, f64)>),
}

fn weights(n: usize) -> Arc<Weights> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Weights>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(w) = cache.lock().unwrap().get(&n) {
        return Arc::clone(w);
    }
    let w = Arc::new(if n % 2 == 1 { Weights::Odd(odd_weights(n)) } else { Weights::Even(even_weights(n)) });
    cache.lock().unwrap().insert(n, Arc::clone(&w));
    w
}

/// P(Bin(n, p) ≥ r).
fn binom_upper(n: usize, p: f64, r: usize) -> f64 {
    if r == 0 || p >= 1.0 {
        return 1.0;
    }
    if p <= 0.0 || r > n {
        return 0.0;
    }
    beta_reg(r as f64, (n - r + 1) as f64, p)
}

fn odd_weights(n: usize) -> Vec<f64> {
    let r = n.div_ceil(2);
    let nf = n as f64;
    (1..=n)
        .map(|j| binom_upper(n, j as f64 / nf, r) - binom_upper(n, (j - 1) as f64 / nf, r))
        .collect()
}

fn even_weights(n: usize) -> Vec<(usize, usize, f64)> {
    let r = n / 2;
    let nf = n as f64;
    let ln_c = ln_binomial(n as u64, r as u64);
    // exp(ln C(n,r) + r ln a + (n−r) ln b), with 0^m = 0 for m ≥ 1
    let term = |a: f64, b: f64| -> f64 {
        if a <= 0.0 || b <= 0.0 {
            0.0
        } else {
            (ln_c + r as f64 * a.ln() + (n - r) as f64 * b.ln()).exp()
        }
    };
    let pow = |x: f64, m: usize| if x <= 0.0 { 0.0 } else { (m as f64 * x.ln()).exp() };
    let mut out = Vec::new();
    for i in 1..=n {
        let fi = i as f64 / nf;
        let fprev = (i - 1) as f64 / nf;
        let diag = binom_upper(n, fi, r + 1) - binom_upper(n, fprev, r) + term(fprev, 1.0 - fi);
        if diag > 1e-17 {
            out.push((i - 1, i - 1, diag));
        }
        if i == n {
            continue;
        }
        // exactly r draws ≤ i with at least one equal to i, the rest above i
        let lower = term(fi, 1.0 - fi) - term(fprev, 1.0 - fi);
        if lower <= 1e-17 {
            continue;
        }
        let span = (n - i) as f64;
        for j in i + 1..=n {
            let upper = pow((n - j + 1) as f64 / span, n - r) - pow((n - j) as f64 / span, n - r);
            let p = lower * upper;
            if p > 1e-17 {
                out.push((i - 1, j - 1, p));
            } else if upper < 1e-17 {
                break;
            }
        }
    }
    out
}
