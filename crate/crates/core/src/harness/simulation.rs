use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{generate_scenario, ScenarioSpec};
use crate::engine::run_plan;
use crate::prepivot::{Plan, PrepivotSpec};
use crate::rng::derive_stream;
use crate::statistics::{StatisticId, StatisticSpec};
use crate::{Error, Result};

/// A rejection-rate study: every cell is tested on each of `nsim` datasets
/// drawn from the scenario.
///
/// Replicate `r` draws its data from `(seed, [r, 0])` and roots its tests at
/// `(seed, [r, 1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub scenario: ScenarioSpec,
    pub cells: Vec<(StatisticSpec, PrepivotSpec)>,
    pub nsim: usize,
    pub nperm: usize,
    pub nboot: usize,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.nsim == 0 || self.nperm == 0 {
            return Err(Error::Config("nsim and nperm must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.cells.is_empty() {
            return Err(Error::Config("no statistic/prepivot cells to run".into()));
        }
        let k = self.scenario.sizes()?.len();
        let d = self.scenario.dim();
        for (spec, pspec) in &self.cells {
            spec.check_admissible(k, d)?;
            pspec.check_compatible(spec)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub statistic: StatisticId,
    pub prepivot: String,
    pub rate: f64,
    pub se: f64,
    /// Replicates that produced a p-value.
    pub nsim: usize,
    /// Replicates excluded because a statistic was degenerate.
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub rows: Vec<RejectionRow>,
}

impl RejectionTable {
    pub fn row(&self, statistic: StatisticId, prepivot: &str) -> Option<&RejectionRow> {
        self.rows.iter().find(|r| r.statistic == statistic && r.prepivot == prepivot)
    }

    /// CSV with columns `statistic,prepivot,rate,se,nsim`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Csv(e.to_string());
        out.write_record(["statistic", "prepivot", "rate", "se", "nsim"]).map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.statistic.name().to_string(),
                r.prepivot.clone(),
                format!("{:.6}", r.rate),
                format!("{:.6}", r.se),
                r.nsim.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// p-values of every cell on every replicate, indexed `[replicate][cell]`;
/// `None` marks a degenerate statistic.
pub fn simulate_p_values(cfg: &SimulationConfig) -> Result<Vec<Vec<Option<f64>>>> {
    cfg.validate()?;
    let plan = Plan::new(&cfg.cells)?;
    (0..cfg.nsim)
        .into_par_iter()
        .map(|r| {
            let rep = derive_stream(cfg.seed, &[r as u64]);
            let ds = generate_scenario(&cfg.scenario, &rep.child(0))?;
            let results = run_plan(&ds, &plan, cfg.nperm, rep.child(1), cfg.seed);
            Ok(results.into_iter().map(|t| t.ok().map(|t| t.p_value)).collect())
        })
        .collect()
}

/// Runs the study. Replicates are independent, so the table is a pure
/// function of the configuration.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<RejectionTable> {
    let pvalues = simulate_p_values(cfg)?;
    Ok(RejectionTable::from_p_values(cfg, &pvalues))
}

impl RejectionTable {
    /// Tabulates `p ≤ alpha` per cell from [`simulate_p_values`] output.
    pub fn from_p_values(cfg: &SimulationConfig, pvalues: &[Vec<Option<f64>>]) -> Self {
        let ncell = cfg.cells.len();
        let rows = (0..ncell)
            .map(|c| {
                let (spec, pspec) = &cfg.cells[c];
                let done: Vec<bool> = pvalues
                    .iter()
                    .filter_map(|o| o[c])
                    .map(|p| p <= cfg.alpha + 1e-12)
                    .collect();
                let nsim = done.len();
                let rate = if nsim == 0 {
                    f64::NAN
                } else {
                    done.iter().filter(|&&x| x).count() as f64 / nsim as f64
                };
                RejectionRow {
                    statistic: spec.id,
                    prepivot: pspec.name().to_string(),
                    rate,
                    se: (rate * (1.0 - rate) / nsim as f64).sqrt(),
                    nsim,
                    errors: pvalues.len() - nsim,
                }
            })
            .collect();
        RejectionTable { rows }
    }
}
