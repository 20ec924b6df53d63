use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::rng::RngStream;
use crate::{Error, Result};

/// The generative models. Every one of them has equal group means (medians
/// for `MedianNormal`) while the distributions differ, except `CustomNull`
/// where all groups share one law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    /// `8 − Exp(1/8)` against `Exp(1/5) − 5`.
    BfExponential,
    /// 15-variate `exp(N(0, I))` against `N(e^{1/2}·1, V)`, `V` with unit
    /// variances and correlation 0.8.
    MvLognormalVsNormal,
    /// Four groups of `exp(N(0, σ_i²)) − e^{σ_i²/2}`.
    KsampleLognormal,
    /// Four groups of 10-variate centred lognormals with equicorrelated
    /// log-scale covariance `σ_i² R(ρ_i)`.
    ManovaLognormal,
    /// `N(0, 1)` against `N(0, 25)`.
    MedianNormal,
    /// Every group drawn from one law.
    CustomNull,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [
        ScenarioId::BfExponential,
        ScenarioId::MvLognormalVsNormal,
        ScenarioId::KsampleLognormal,
        ScenarioId::ManovaLognormal,
        ScenarioId::MedianNormal,
        ScenarioId::CustomNull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::BfExponential => "bf_exponential",
            ScenarioId::MvLognormalVsNormal => "mv_lognormal_vs_normal",
            ScenarioId::KsampleLognormal => "ksample_lognormal",
            ScenarioId::ManovaLognormal => "manova_lognormal",
            ScenarioId::MedianNormal => "median_normal",
            ScenarioId::CustomNull => "custom_null",
        }
    }

    pub fn default_fractions(self) -> Vec<f64> {
        match self {
            ScenarioId::BfExponential | ScenarioId::MvLognormalVsNormal => vec![0.3, 0.7],
            ScenarioId::KsampleLognormal | ScenarioId::ManovaLognormal => vec![0.1, 0.2, 0.3, 0.4],
            ScenarioId::MedianNormal | ScenarioId::CustomNull => vec![0.5, 0.5],
        }
    }

    pub fn default_dim(self) -> usize {
        match self {
            ScenarioId::MvLognormalVsNormal => 15,
            ScenarioId::ManovaLognormal => 10,
            _ => 1,
        }
    }

    /// One-line description for listings.
    pub fn describe(self) -> &'static str {
        match self {
            ScenarioId::BfExponential => {
                "two groups, 8 - Exp(rate 1/8) vs Exp(rate 1/5) - 5; fractions 0.3/0.7; equal means 0"
            }
            ScenarioId::MvLognormalVsNormal => {
                "two groups, d = 15: exp(N(0, I)) vs N(exp(0.5) 1, V), V_ll = 1, V_lm = 0.8; fractions 0.3/0.7"
            }
            ScenarioId::KsampleLognormal => {
                "four groups, exp(N(0, s^2)) - exp(s^2/2), s = 0.70/0.55/0.40/0.25; fractions 0.1/0.2/0.3/0.4"
            }
            ScenarioId::ManovaLognormal => {
                "four groups, d = 10: exp(N(0, s^2 R(rho))) - exp(s^2/2), rho = 0.3/0.5/0.7/0.9, s^2 = 1/0.8/0.6/0.4"
            }
            ScenarioId::MedianNormal => "two groups, N(0, 1) vs N(0, 25); equal medians 0",
            ScenarioId::CustomNull => "any number of groups from one law (normal, exponential or lognormal)",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// The shared law of a `custom_null` scenario, applied coordinatewise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum NullLaw {
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Lognormal { meanlog: f64, sdlog: f64 },
}

impl Default for NullLaw {
    fn default() -> Self {
        NullLaw::Normal { mean: 0.0, sd: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    /// Total sample size; ignored when `group_sizes` is given.
    #[serde(default)]
    pub n: usize,
    /// Defaults to the scenario's own fractions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_fractions: Option<Vec<f64>>,
    /// Explicit group sizes, overriding `n` and the fractions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_sizes: Option<Vec<usize>>,
    /// Response dimension for `custom_null`; the other scenarios fix theirs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<NullLaw>,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, n: usize) -> Self {
        ScenarioSpec {
            id,
            n,
            group_fractions: None,
            group_sizes: None,
            dim: None,
            law: None,
        }
    }

    pub fn with_sizes(id: ScenarioId, sizes: Vec<usize>) -> Self {
        ScenarioSpec {
            n: sizes.iter().sum(),
            group_sizes: Some(sizes),
            ..ScenarioSpec::new(id, 0)
        }
    }

    pub fn dim(&self) -> usize {
        match self.id {
            ScenarioId::CustomNull => self.dim.unwrap_or(1),
            id => id.default_dim(),
        }
    }

    /// Group sizes: `round(f_i n)` for all but the last group, which takes
    /// the remainder.
    pub fn sizes(&self) -> Result<Vec<usize>> {
        let fixed_k = match self.id {
            ScenarioId::CustomNull => None,
            id => Some(id.default_fractions().len()),
        };
        let sizes = match &self.group_sizes {
            Some(s) => s.clone(),
            None => {
                let f = self.group_fractions.clone().unwrap_or_else(|| self.id.default_fractions());
                let total: f64 = f.iter().sum();
                if f.len() < 2 || f.iter().any(|&x| !(x > 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("group fractions {f:?} must be positive and sum to 1")));
                }
                let mut s: Vec<usize> = f[..f.len() - 1].iter().map(|x| (x * self.n as f64).round() as usize).collect();
                let used: usize = s.iter().sum();
                if used >= self.n {
                    return Err(Error::Config(format!("n = {} is too small for fractions {f:?}", self.n)));
                }
                s.push(self.n - used);
                s
            }
        };
        if let Some(k) = fixed_k {
            if sizes.len() != k {
                return Err(Error::Config(format!("{} has {k} groups, got {} sizes", self.id, sizes.len())));
            }
        }
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("group sizes {sizes:?} need at least two nonempty groups")));
        }
        Ok(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        self.sizes()?;
        if self.id != ScenarioId::CustomNull && (self.dim.is_some() || self.law.is_some()) {
            return Err(Error::Config(format!("dim and law apply only to custom_null, not {}", self.id)));
        }
        if self.dim() == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        match self.law.unwrap_or_default() {
            NullLaw::Normal { sd, .. } if !(sd > 0.0) => Err(Error::Config("normal sd must be positive".into())),
            NullLaw::Exponential { rate } if !(rate > 0.0) => Err(Error::Config("exponential rate must be positive".into())),
            NullLaw::Lognormal { sdlog, .. } if !(sdlog > 0.0) => Err(Error::Config("lognormal sdlog must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Equicorrelated `d × d` matrix with unit diagonal, scaled by `scale`.
fn equicorrelated(d: usize, rho: f64, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| scale * if i == j { 1.0 } else { rho })
}

fn cholesky(m: DMatrix<f64>) -> DMatrix<f64> {
    m.cholesky().expect("equicorrelated matrices are positive definite").l()
}

/// Draws one dataset from the scenario.
pub fn generate_scenario(spec: &ScenarioSpec, stream: &RngStream) -> Result<GroupedDataset> {
    spec.validate()?;
    let sizes = spec.sizes()?;
    let d = spec.dim();
    let mut rng = stream.rng();
    let mut groups: Vec<Vec<f64>> = Vec::with_capacity(sizes.len());
    let normal = |rng: &mut crate::rng::StreamRng| -> f64 { rng.sample(StandardNormal) };

    match spec.id {
        ScenarioId::BfExponential => {
            let e8 = Exp::new(1.0 / 8.0).expect("positive rate");
            let e5 = Exp::new(1.0 / 5.0).expect("positive rate");
            groups.push((0..sizes[0]).map(|_| 8.0 - e8.sample(&mut rng)).collect());
            groups.push((0..sizes[1]).map(|_| e5.sample(&mut rng) - 5.0).collect());
        }
        ScenarioId::MvLognormalVsNormal => {
            let mut g1 = Vec::with_capacity(sizes[0] * d);
            for _ in 0..sizes[0] * d {
                g1.push(normal(&mut rng).exp());
            }
            let l = cholesky(equicorrelated(d, 0.8, 1.0));
            let mu = 0.5f64.exp();
            let mut g2 = Vec::with_capacity(sizes[1] * d);
            let mut z = vec![0.0; d];
            for _ in 0..sizes[1] {
                z.iter_mut().for_each(|x| *x = normal(&mut rng));
                for a in 0..d {
                    g2.push(mu + (0..=a).map(|b| l[(a, b)] * z[b]).sum::<f64>());
                }
            }
            groups.push(g1);
            groups.push(g2);
        }
        ScenarioId::KsampleLognormal => {
            for (i, sigma) in [0.70f64, 0.55, 0.40, 0.25].into_iter().enumerate() {
                let shift = (sigma * sigma / 2.0).exp();
                groups.push((0..sizes[i]).map(|_| (sigma * normal(&mut rng)).exp() - shift).collect());
            }
        }
        ScenarioId::ManovaLognormal => {
            let rhos = [0.3, 0.5, 0.7, 0.9];
            let vars = [1.0f64, 0.8, 0.6, 0.4];
            let mut z = vec![0.0; d];
            for i in 0..4 {
                let l = cholesky(equicorrelated(d, rhos[i], vars[i]));
                let shift = (vars[i] / 2.0).exp();
                let mut g = Vec::with_capacity(sizes[i] * d);
                for _ in 0..sizes[i] {
                    z.iter_mut().for_each(|x| *x = normal(&mut rng));
                    for a in 0..d {
                        g.push((0..=a).map(|b| l[(a, b)] * z[b]).sum::<f64>().exp() - shift);
                    }
                }
                groups.push(g);
            }
        }
        ScenarioId::MedianNormal => {
            groups.push((0..sizes[0]).map(|_| normal(&mut rng)).collect());
            groups.push((0..sizes[1]).map(|_| 5.0 * normal(&mut rng)).collect());
        }
        ScenarioId::CustomNull => {
            let law = spec.law.unwrap_or_default();
            for &s in &sizes {
                let g = (0..s * d)
                    .map(|_| match law {
                        NullLaw::Normal { mean, sd } => mean + sd * normal(&mut rng),
                        NullLaw::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(&mut rng),
                        NullLaw::Lognormal { meanlog, sdlog } => (meanlog + sdlog * normal(&mut rng)).exp(),
                    })
                    .collect();
                groups.push(g);
            }
        }
    }
    GroupedDataset::new(d, groups)
}
