//! Estimation kernels and test statistics.
//!
//! Every statistic has the form `g(√n Θ̂ Ĉ, η̂)` for a parameter matrix `Θ̂`
//! (group means or medians, `d × k`), a column-contrast matrix `Ĉ` and
//! nuisance estimates `η̂`. [`evaluate`] computes the statistic directly;
//! [`factorize`] exposes the three factors for Gaussian prepivoting.

mod contrasts;
mod evaluate;
pub(crate) mod factor;
mod kernels;
mod median;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use contrasts::{contrast_centering, contrast_pairwise, wn_data_contrast};
pub use evaluate::{
    edgeworth_statistic, evaluate, evaluate_bootstrap, evaluate_bootstrap_with_stream,
    evaluate_with_stream,
};
pub(crate) use evaluate::value_from_kernels;
pub use factor::{factorize, factorize_bootstrap, Factorization, Link, ManovaKind, QuadForm};
pub use kernels::{compute_kernels, KernelSet, StatKernels};
pub use median::{median, median_kernels, median_variance_exact};

use crate::{Error, Result};

/// The test statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticId {
    /// `√n(μ̂₁ − μ̂₂)`.
    DiffMeans,
    /// Difference in means over its unpooled standard error.
    Studentized,
    /// Edgeworth-corrected normal approximation to the studentized mean.
    Edgeworth,
    /// Two-sample Hotelling statistic with pooled covariance.
    HotellingPooled,
    /// Two-sample Hotelling statistic with unpooled covariance.
    HotellingUnpooled,
    /// Maximum absolute coordinatewise t statistic.
    MaxAbsT,
    /// One-way analysis of variance F statistic.
    AnovaF,
    /// Tukey–Kramer range statistic with pooled variance.
    TukeyKramer,
    /// Precision-weighted k-sample statistic.
    CrWn,
    /// Negated Wilks' lambda.
    ManovaWilks,
    ManovaPillai,
    ManovaLawleyHotelling,
    ManovaRoy,
    /// `√n(m̂₁ − m̂₂)` for group medians.
    MedianDiff,
    /// Difference in medians over its bootstrap standard error.
    MedianStudentized,
}

impl StatisticId {
    pub const ALL: [StatisticId; 15] = [
        StatisticId::DiffMeans,
        StatisticId::Studentized,
        StatisticId::Edgeworth,
        StatisticId::HotellingPooled,
        StatisticId::HotellingUnpooled,
        StatisticId::MaxAbsT,
        StatisticId::AnovaF,
        StatisticId::TukeyKramer,
        StatisticId::CrWn,
        StatisticId::ManovaWilks,
        StatisticId::ManovaPillai,
        StatisticId::ManovaLawleyHotelling,
        StatisticId::ManovaRoy,
        StatisticId::MedianDiff,
        StatisticId::MedianStudentized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatisticId::DiffMeans => "diff_means",
            StatisticId::Studentized => "studentized",
            StatisticId::Edgeworth => "edgeworth",
            StatisticId::HotellingPooled => "hotelling_pooled",
            StatisticId::HotellingUnpooled => "hotelling_unpooled",
            StatisticId::MaxAbsT => "max_abs_t",
            StatisticId::AnovaF => "anova_f",
            StatisticId::TukeyKramer => "tukey_kramer",
            StatisticId::CrWn => "cr_wn",
            StatisticId::ManovaWilks => "manova_wilks",
            StatisticId::ManovaPillai => "manova_pillai",
            StatisticId::ManovaLawleyHotelling => "manova_lawley_hotelling",
            StatisticId::ManovaRoy => "manova_roy",
            StatisticId::MedianDiff => "median_diff",
            StatisticId::MedianStudentized => "median_studentized",
        }
    }

    /// Statistics defined only for two groups.
    pub fn two_sample_only(self) -> bool {
        matches!(
            self,
            StatisticId::DiffMeans
                | StatisticId::Studentized
                | StatisticId::Edgeworth
                | StatisticId::HotellingPooled
                | StatisticId::HotellingUnpooled
                | StatisticId::MaxAbsT
                | StatisticId::MedianDiff
                | StatisticId::MedianStudentized
        )
    }

    /// Statistics defined only for scalar responses.
    pub fn univariate_only(self) -> bool {
        matches!(
            self,
            StatisticId::DiffMeans
                | StatisticId::Studentized
                | StatisticId::Edgeworth
                | StatisticId::AnovaF
                | StatisticId::TukeyKramer
                | StatisticId::CrWn
                | StatisticId::MedianDiff
                | StatisticId::MedianStudentized
        )
    }

    pub fn is_median(self) -> bool {
        matches!(self, StatisticId::MedianDiff | StatisticId::MedianStudentized)
    }

    pub fn is_manova(self) -> bool {
        matches!(
            self,
            StatisticId::ManovaWilks
                | StatisticId::ManovaPillai
                | StatisticId::ManovaLawleyHotelling
                | StatisticId::ManovaRoy
        )
    }

    /// Whether the Gaussian prepivot has a closed form for this statistic.
    pub fn has_closed_form(self) -> bool {
        matches!(
            self,
            StatisticId::DiffMeans
                | StatisticId::Studentized
                | StatisticId::HotellingUnpooled
                | StatisticId::CrWn
        )
    }

    /// Whether a covariance estimate for the Gaussian limit exists.
    pub fn supports_gaussian(self) -> bool {
        !self.is_median()
    }
}

impl fmt::Display for StatisticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match key.as_str() {
            "f" | "anova" => "anova_f",
            "wn" | "w" => "cr_wn",
            "edgeworth_sn" | "e_sn" => "edgeworth",
            "tukey" => "tukey_kramer",
            other => other,
        };
        StatisticId::ALL
            .into_iter()
            .find(|id| id.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown statistic '{s}'")))
    }
}

/// How the bootstrap variance of the median difference is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum MedianVariance {
    /// Monte Carlo over `draws` within-group resamples.
    Bootstrap { draws: usize },
    /// The exact resampling variance from order-statistic probabilities.
    Exact,
}

impl Default for MedianVariance {
    fn default() -> Self {
        MedianVariance::Bootstrap { draws: 200 }
    }
}

/// A statistic together with its options.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatisticSpec {
    pub id: StatisticId,
    #[serde(default)]
    pub median_variance: MedianVariance,
}

impl StatisticSpec {
    pub fn new(id: StatisticId) -> Self {
        StatisticSpec {
            id,
            median_variance: MedianVariance::default(),
        }
    }

    pub fn with_median_variance(mut self, mv: MedianVariance) -> Self {
        self.median_variance = mv;
        self
    }

    /// Every statistic rejects for large values; Wilks' lambda is negated.
    pub fn rejects_large(&self) -> bool {
        true
    }

    /// Checks that the statistic is defined for `k` groups of dimension `d`.
    pub fn check_admissible(&self, k: usize, d: usize) -> Result<()> {
        if k < 2 {
            return Err(Error::Config(format!("{} needs at least 2 groups", self.id)));
        }
        if self.id.two_sample_only() && k != 2 {
            return Err(Error::Config(format!("{} is a two-sample statistic, got {k} groups", self.id)));
        }
        if self.id.univariate_only() && d != 1 {
            return Err(Error::Config(format!("{} needs univariate responses, got dimension {d}", self.id)));
        }
        if let MedianVariance::Bootstrap { draws } = self.median_variance {
            if self.id == StatisticId::MedianStudentized && draws < 2 {
                return Err(Error::Parameter(format!(
                    "median bootstrap variance needs at least 2 draws, got {draws}"
                )));
            }
        }
        Ok(())
    }

    /// Kernels the statistic reads.
    pub fn kernels_needed(&self) -> KernelSet {
        use StatisticId::*;
        let mut set = KernelSet::default();
        match self.id {
            DiffMeans => {}
            Studentized | HotellingUnpooled | MaxAbsT | CrWn => set.covariances = true,
            Edgeworth => {
                set.covariances = true;
                set.third_moments = true;
            }
            HotellingPooled | AnovaF | TukeyKramer | ManovaWilks | ManovaPillai
            | ManovaLawleyHotelling | ManovaRoy => set.pooled = true,
            MedianDiff => set.medians = true,
            MedianStudentized => {
                set.medians = true;
                set.median_variances = vec![self.median_variance];
            }
        }
        set
    }
}

impl From<StatisticId> for StatisticSpec {
    fn from(id: StatisticId) -> Self {
        StatisticSpec::new(id)
    }
}

impl fmt::Display for StatisticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id.name())
    }
}
