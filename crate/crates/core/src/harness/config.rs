//! TOML study files.
//!
//! ```toml
//! nsim = 2000
//! nperm = 499
//! nboot = 200
//! B = 1000
//! alpha = 0.05
//! seed = 1
//!
//! [scenario]
//! id = "bf_exponential"
//! n = 100
//!
//! # every statistic with every prepivot, skipping undefined pairs
//! [grid]
//! statistics = ["diff_means", "studentized", "edgeworth"]
//! prepivots = ["none", "bootstrap"]
//!
//! # extra cells; nboot, B and median_variance override the defaults
//! [[cells]]
//! statistic = "median_studentized"
//! prepivot = "bootstrap"
//! nboot = 500
//! median_variance = { method = "exact" }
//! ```

use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSpec;
use super::simulation::SimulationConfig;
use crate::prepivot::PrepivotSpec;
use crate::statistics::{MedianVariance, StatisticId, StatisticSpec};
use crate::{Error, Result};

pub const DEFAULT_NSIM: usize = 2000;
pub const DEFAULT_NPERM: usize = 499;
pub const DEFAULT_NBOOT: usize = 200;
pub const DEFAULT_B: usize = 1000;

fn default_nsim() -> usize {
    DEFAULT_NSIM
}
fn default_nperm() -> usize {
    DEFAULT_NPERM
}
fn default_nboot() -> usize {
    DEFAULT_NBOOT
}
fn default_b() -> usize {
    DEFAULT_B
}
fn default_alpha() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default = "default_nsim")]
    nsim: usize,
    #[serde(default = "default_nperm")]
    nperm: usize,
    #[serde(default = "default_nboot")]
    nboot: usize,
    #[serde(default = "default_b", rename = "B")]
    b: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_seed")]
    seed: u64,
    scenario: ScenarioSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cells: Vec<CellEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Grid {
    statistics: Vec<String>,
    prepivots: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    median_variance: Option<MedianVariance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellEntry {
    statistic: String,
    prepivot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nboot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "B")]
    b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    median_variance: Option<MedianVariance>,
}

impl SimulationConfig {
    /// Parses a study file; grid pairs that are undefined for the scenario are
    /// skipped, explicit cells must be valid.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.scenario.validate()?;
        let k = file.scenario.sizes()?.len();
        let d = file.scenario.dim();
        let mut cells = Vec::new();
        if let Some(grid) = &file.grid {
            for s in &grid.statistics {
                let id: StatisticId = s.parse()?;
                let spec = StatisticSpec::new(id).with_median_variance(grid.median_variance.unwrap_or_default());
                if spec.check_admissible(k, d).is_err() {
                    continue;
                }
                for p in &grid.prepivots {
                    let pspec = PrepivotSpec::parse(p, id, file.nboot, file.b)?;
                    // "gaussian" falls back to Monte Carlo where there is no
                    // closed form, which can repeat a cell
                    if pspec.check_compatible(&spec).is_ok() && !cells.contains(&(spec, pspec)) {
                        cells.push((spec, pspec));
                    }
                }
            }
        }
        for c in &file.cells {
            let id: StatisticId = c.statistic.parse()?;
            let spec = StatisticSpec::new(id).with_median_variance(c.median_variance.unwrap_or_default());
            let pspec = PrepivotSpec::parse(&c.prepivot, id, c.nboot.unwrap_or(file.nboot), c.b.unwrap_or(file.b))?;
            cells.push((spec, pspec));
        }
        let cfg = SimulationConfig {
            scenario: file.scenario,
            cells,
            nsim: file.nsim,
            nperm: file.nperm,
            nboot: file.nboot,
            b: file.b,
            alpha: file.alpha,
            seed: file.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Writes the configuration with every cell spelled out.
    pub fn to_toml(&self) -> String {
        let cells = self
            .cells
            .iter()
            .map(|(spec, pspec)| CellEntry {
                statistic: spec.id.name().to_string(),
                prepivot: pspec.name().to_string(),
                nboot: Some(pspec.nboot()).filter(|&n| n > 0),
                b: Some(pspec.mc_b()).filter(|&b| b > 0),
                median_variance: Some(spec.median_variance).filter(|m| *m != MedianVariance::default()),
            })
            .collect();
        let file = ConfigFile {
            nsim: self.nsim,
            nperm: self.nperm,
            nboot: self.nboot,
            b: self.b,
            alpha: self.alpha,
            seed: self.seed,
            scenario: self.scenario.clone(),
            grid: None,
            cells,
        };
        toml::to_string(&file).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::{NullLaw, ScenarioId};

    const TABLE1: &str = r#"
nsim = 100
nperm = 99
nboot = 50
seed = 3

[scenario]
id = "bf_exponential"
n = 100

[grid]
statistics = ["diff_means", "studentized", "edgeworth", "anova_f", "median_diff"]
prepivots = ["none", "gaussian", "gaussian_mc", "bootstrap"]

[[cells]]
statistic = "median_studentized"
prepivot = "bootstrap"
nboot = 30
median_variance = { method = "exact" }
"#;

    #[test]
    fn grid_skips_undefined_pairs() {
        let cfg = SimulationConfig::from_toml(TABLE1).unwrap();
        // median_diff has no Gaussian prepivot; edgeworth and anova_f have
        // no closed form, so their two Gaussian entries coincide
        assert_eq!(cfg.cells.len(), 2 * 4 + 2 * 3 + 2 + 1);
        assert_eq!(cfg.b, DEFAULT_B);
        assert_eq!(cfg.alpha, 0.05);
        let last = cfg.cells.last().unwrap();
        assert_eq!(last.1, PrepivotSpec::Bootstrap { nboot: 30 });
        assert_eq!(last.0.median_variance, MedianVariance::Exact);
    }

    #[test]
    fn round_trip() {
        let cfg = SimulationConfig::from_toml(TABLE1).unwrap();
        assert_eq!(SimulationConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);

        let mut custom = cfg.clone();
        custom.scenario = ScenarioSpec {
            group_fractions: Some(vec![0.25, 0.75]),
            dim: Some(1),
            law: Some(NullLaw::Lognormal { meanlog: 0.1, sdlog: 0.7 }),
            ..ScenarioSpec::new(ScenarioId::CustomNull, 40)
        };
        custom.alpha = 0.1;
        assert_eq!(SimulationConfig::from_toml(&custom.to_toml()).unwrap(), custom);
    }

    #[test]
    fn malformed_files_report_location() {
        let err = SimulationConfig::from_toml("nsim = \n[scenario]\nid = \"bf_exponential\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("line 1"), "{msg}");
        assert!(SimulationConfig::from_toml("nsim = 5\n[scenario]\nid = \"nope\"\nn = 4\n").is_err());
        assert!(SimulationConfig::from_toml("bogus = 1\n[scenario]\nid = \"bf_exponential\"\nn = 10\n").is_err());
    }
}
