//! Acceptance runs. Prints one PASS/FAIL line per check and exits non-zero if
//! any fails. Set `ACCEPTANCE_ONLY` to a comma-separated list of labels to run
//! a subset.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use prepivot_core::data::GroupedDataset;
use prepivot_core::engine::{exact_p_value, exact_test};
use prepivot_core::harness::{
    generate_scenario, run_simulation, simulate_p_values, NullLaw, RejectionTable, ScenarioId, ScenarioSpec,
    SimulationConfig,
};
use prepivot_core::prepivot::gaussian_prepivot;
use prepivot_core::statistics::{
    compute_kernels, contrast_centering, contrast_pairwise, evaluate, factorize, wn_data_contrast, MedianVariance,
};
use prepivot_core::{derive_stream, run_test, GaussianMode, PrepivotSpec, StatisticId, StatisticSpec};
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() {
    let checks: [(&str, Check); 8] = [
        ("exactness", exactness),
        ("behrens_fisher", behrens_fisher),
        ("k_sample", k_sample),
        ("multivariate", multivariate),
        ("enumeration", enumeration),
        ("gaussian_mc", gaussian_mc_agreement),
        ("properties", properties),
        ("full_scale_configs", full_scale_configs),
    ];
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').map(|t| t.trim().to_string()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (label, f) in checks {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == label)) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        ran += 1;
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {label:<18} {} [{:.0}s]", out.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!out.pass);
    }
    println!("acceptance: {} of {ran} passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn cell(id: StatisticId, prepivot: &str, nboot: usize, b: usize) -> (StatisticSpec, PrepivotSpec) {
    (StatisticSpec::new(id), PrepivotSpec::parse(prepivot, id, nboot, b).unwrap())
}

fn rate(t: &RejectionTable, id: StatisticId, prepivot: &str) -> f64 {
    t.row(id, prepivot).unwrap_or_else(|| panic!("no row {id} {prepivot}")).rate
}

fn no_errors(t: &RejectionTable) -> bool {
    t.rows.iter().all(|r| r.errors == 0)
}

/// Every statistic with every prepivot on a 10 + 10 sample from one law.
fn exactness() -> Outcome {
    let (nboot, b) = (100, 200);
    let mut cells = Vec::new();
    for id in StatisticId::ALL {
        let spec = StatisticSpec::new(id).with_median_variance(MedianVariance::Exact);
        for p in ["none", "gaussian", "gaussian_mc", "bootstrap", "boot_after_gauss", "boot_after_gauss_mc"] {
            let pspec = PrepivotSpec::parse(p, id, nboot, b).unwrap();
            if pspec.check_compatible(&spec).is_ok() && !cells.contains(&(spec, pspec)) {
                cells.push((spec, pspec));
            }
        }
    }
    let cfg = SimulationConfig {
        scenario: ScenarioSpec {
            law: Some(NullLaw::Exponential { rate: 1.0 }),
            ..ScenarioSpec::with_sizes(ScenarioId::CustomNull, vec![10, 10])
        },
        cells,
        nsim: 2000,
        nperm: 499,
        nboot,
        b,
        alpha: 0.05,
        seed: 20,
    };
    let t = run_simulation(&cfg).unwrap();
    let se = (0.05f64 * 0.95 / 2000.0).sqrt();
    let bound = 0.05 + 3.0 * se;
    let worst = t.rows.iter().max_by(|a, b| a.rate.total_cmp(&b.rate)).unwrap();
    let over: Vec<String> =
        t.rows.iter().filter(|r| r.rate > bound).map(|r| format!("{}/{}={:.4}", r.statistic, r.prepivot, r.rate)).collect();
    check(
        over.is_empty() && no_errors(&t),
        format!(
            "{} cells, max rate {:.4} ({}/{}), bound {bound:.4}{}",
            t.rows.len(),
            worst.rate,
            worst.statistic,
            worst.prepivot,
            if over.is_empty() { String::new() } else { format!("; over: {}", over.join(" ")) }
        ),
    )
}

fn behrens_fisher() -> Outcome {
    use StatisticId::*;
    let nboot = 200;
    let cfg = SimulationConfig {
        scenario: ScenarioSpec::new(ScenarioId::BfExponential, 100),
        cells: vec![
            cell(DiffMeans, "none", nboot, 0),
            cell(Studentized, "none", nboot, 0),
            cell(Edgeworth, "none", nboot, 0),
            cell(DiffMeans, "bootstrap", nboot, 0),
            cell(Studentized, "bootstrap", nboot, 0),
            cell(Edgeworth, "bootstrap", nboot, 0),
        ],
        nsim: 2000,
        nperm: 499,
        nboot,
        b: 0,
        alpha: 0.05,
        seed: 21,
    };
    let t = run_simulation(&cfg).unwrap();
    let targets = [
        (DiffMeans, "none", 0.105),
        (Studentized, "none", 0.090),
        (Edgeworth, "none", 0.061),
        (DiffMeans, "bootstrap", 0.098),
        (Studentized, "bootstrap", 0.055),
        (Edgeworth, "bootstrap", 0.052),
    ];
    let mut ok = no_errors(&t);
    let mut parts = Vec::new();
    for (id, p, target) in targets {
        let r = rate(&t, id, p);
        ok &= (r - target).abs() <= 0.02;
        parts.push(format!("{id}/{p} {r:.4} (~{target})"));
    }
    let (tn, sn, en) = (rate(&t, DiffMeans, "none"), rate(&t, Studentized, "none"), rate(&t, Edgeworth, "none"));
    let order = tn > sn && sn > en && rate(&t, Studentized, "bootstrap") < sn;
    check(ok && order, format!("{}; ordering {}", parts.join(", "), if order { "holds" } else { "broken" }))
}

fn k_sample() -> Outcome {
    use StatisticId::*;
    let nboot = 200;
    let cfg = SimulationConfig {
        scenario: ScenarioSpec::new(ScenarioId::KsampleLognormal, 250),
        cells: vec![
            cell(CrWn, "none", nboot, 0),
            cell(CrWn, "bootstrap", nboot, 0),
            cell(AnovaF, "none", nboot, 0),
            cell(AnovaF, "bootstrap", nboot, 0),
        ],
        nsim: 1000,
        nperm: 499,
        nboot,
        b: 0,
        alpha: 0.05,
        seed: 22,
    };
    let t = run_simulation(&cfg).unwrap();
    let (w, wb) = (rate(&t, CrWn, "none"), rate(&t, CrWn, "bootstrap"));
    let (f, fb) = (rate(&t, AnovaF, "none"), rate(&t, AnovaF, "bootstrap"));
    let ok = no_errors(&t) && (w - 0.076).abs() <= 0.025 && (wb - 0.064).abs() <= 0.025 && f >= 0.15 && fb <= 0.11;
    check(ok, format!("cr_wn {w:.4} (~0.076), boot cr_wn {wb:.4} (~0.064), anova_f {f:.4} (>=0.15), boot anova_f {fb:.4} (<=0.11)"))
}

fn multivariate() -> Outcome {
    use StatisticId::*;
    let (nboot, b) = (100, 1000);
    let cells = vec![
        cell(HotellingPooled, "none", nboot, b),
        cell(HotellingPooled, "gaussian", nboot, b),
        cell(HotellingPooled, "boot_after_gauss", nboot, b),
        cell(HotellingUnpooled, "none", nboot, b),
        cell(HotellingUnpooled, "gaussian", nboot, b),
    ];
    let cfg = SimulationConfig {
        scenario: ScenarioSpec::new(ScenarioId::MvLognormalVsNormal, 150),
        cells,
        nsim: 500,
        nperm: 499,
        nboot,
        b,
        alpha: 0.05,
        seed: 23,
    };
    let pvalues = simulate_p_values(&cfg).unwrap();
    let t = RejectionTable::from_p_values(&cfg, &pvalues);
    let same = pvalues.iter().all(|p| p[3].is_some() && p[3] == p[4]);
    let (raw, gauss, bag) = (t.rows[0].rate, t.rows[1].rate, t.rows[2].rate);
    let ok = no_errors(&t) && raw >= 0.6 && (gauss - 0.323).abs() <= 0.06 && bag < gauss && same;
    check(
        ok,
        format!(
            "pooled raw {raw:.4} (>=0.6), gaussian_mc {gauss:.4} (~0.323), boot-after-gauss {bag:.4}; unpooled raw {:.4} vs gaussian {:.4}, p-values {}",
            t.rows[3].rate,
            t.rows[4].rate,
            if same { "identical" } else { "differ" }
        ),
    )
}

fn enumeration() -> Outcome {
    use StatisticId::*;
    let ds = GroupedDataset::univariate(&[vec![2.9, 0.4, 3.6], vec![1.3, 2.2, 5.1]]).unwrap();
    let nperm = 100_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for id in [DiffMeans, Studentized, AnovaF, CrWn] {
        let spec = StatisticSpec::new(id);
        let exact = exact_test(&ds, &spec, &PrepivotSpec::None, 1, 1000, false).unwrap().p_value;
        let mc = run_test(&ds, &spec, &PrepivotSpec::None, nperm, 5).unwrap().p_value;
        let sigma = (exact * (1.0 - exact) / nperm as f64).sqrt();
        let tol = 1.0 / (nperm + 1) as f64 + 3.0 * sigma;
        ok &= (mc - exact).abs() <= tol;
        parts.push(format!("{id} exact {exact:.4} mc {mc:.5}"));
    }
    let tiny = GroupedDataset::univariate(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let diff = StatisticSpec::new(DiffMeans);
    let sixth = exact_p_value(|d| evaluate(&diff, d).map(|t| -t), &tiny).unwrap();
    ok &= (sixth - 1.0 / 6.0).abs() < 1e-12;
    check(ok, format!("{}; {{1,2}} vs {{3,4}} p = {sixth:.6}", parts.join(", ")))
}

fn random_dataset<R: Rng>(rng: &mut R, sizes: &[usize], d: usize) -> GroupedDataset {
    let groups: Vec<Vec<Vec<f64>>> = sizes
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let sd = 0.5 + g as f64;
            let shift = rng.random_range(-0.4..0.4);
            let law = Normal::new(shift, sd).unwrap();
            let skew = Exp::new(1.0).unwrap();
            (0..n)
                .map(|_| (0..d).map(|_| law.sample(rng) + 0.5 * skew.sample(rng)).collect())
                .collect()
        })
        .collect();
    GroupedDataset::from_rows(&groups).unwrap()
}

fn gaussian_mc_agreement() -> Outcome {
    use StatisticId::*;
    let mut rng = derive_stream(31, &[]).rng();
    let mc = GaussianMode::MonteCarlo { b: 100_000 };
    let mut worst: f64 = 0.0;
    let mut per = Vec::new();
    for (id, sizes, d) in [(Studentized, vec![12, 20], 1), (HotellingUnpooled, vec![15, 25], 3), (CrWn, vec![10, 14, 18], 1)] {
        let spec = StatisticSpec::new(id);
        let mut w: f64 = 0.0;
        for i in 0..50 {
            let ds = random_dataset(&mut rng, &sizes, d);
            let stream = derive_stream(32, &[id as u64, i]);
            let closed = gaussian_prepivot(&spec, &ds, GaussianMode::ClosedForm, &stream).unwrap();
            let approx = gaussian_prepivot(&spec, &ds, mc, &stream).unwrap();
            w = w.max((closed - approx).abs());
        }
        per.push(format!("{id} {w:.4}"));
        worst = worst.max(w);
    }
    check(worst <= 0.005, format!("max |closed - mc| {worst:.4} (<=0.005): {}", per.join(", ")))
}

fn properties() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = derive_stream(41, &[]).rng();

    // factorization recomposes every statistic
    let mut recompose: f64 = 0.0;
    for (sizes, d) in [(vec![9, 13], 1), (vec![11, 14], 3), (vec![8, 9, 12], 1), (vec![10, 12, 15, 13], 2)] {
        for _ in 0..20 {
            let ds = random_dataset(&mut rng, &sizes, d);
            for id in StatisticId::ALL {
                let spec = StatisticSpec::new(id).with_median_variance(MedianVariance::Exact);
                if spec.check_admissible(sizes.len(), d).is_err() {
                    continue;
                }
                let direct = evaluate(&spec, &ds).unwrap();
                let k = compute_kernels(&ds, &spec.kernels_needed()).unwrap();
                let f = factorize(&spec, &k).unwrap().statistic();
                recompose = recompose.max((direct - f).abs() / direct.abs().max(1.0));
            }
        }
    }
    if recompose > 1e-10 {
        failures.push(format!("recomposition {recompose:e}"));
    }

    // location and scale invariance of the standardized statistics
    let invariant = [
        StatisticId::Studentized,
        StatisticId::HotellingUnpooled,
        StatisticId::HotellingPooled,
        StatisticId::AnovaF,
        StatisticId::CrWn,
        StatisticId::ManovaPillai,
        StatisticId::MedianStudentized,
    ];
    let mut drift: f64 = 0.0;
    for _ in 0..20 {
        let ds = random_dataset(&mut rng, &[10, 13], 1);
        let (a, c) = (rng.random_range(0.2..5.0), rng.random_range(-10.0..10.0));
        let moved: Vec<Vec<f64>> = (0..2).map(|g| ds.group(g).iter().map(|x| a * x + c).collect()).collect();
        let moved = GroupedDataset::univariate(&moved).unwrap();
        for id in invariant {
            let spec = StatisticSpec::new(id).with_median_variance(MedianVariance::Exact);
            let (x, y) = (evaluate(&spec, &ds).unwrap(), evaluate(&spec, &moved).unwrap());
            drift = drift.max((x - y).abs() / x.abs().max(1.0));
        }
        let diff = StatisticSpec::new(StatisticId::DiffMeans);
        let (x, y) = (evaluate(&diff, &ds).unwrap(), evaluate(&diff, &moved).unwrap());
        drift = drift.max((a * x - y).abs() / y.abs().max(1.0));
    }
    if drift > 1e-9 {
        failures.push(format!("invariance {drift:e}"));
    }

    // contrasts annihilate constants
    let mut colsum: f64 = 0.0;
    let sums = |m: &DMatrix<f64>| m.row_sum().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for k in 2..7 {
        colsum = colsum.max(sums(&contrast_pairwise(k).unwrap()));
        let b: Vec<f64> = (1..=k).map(|i| i as f64).collect();
        let total: f64 = b.iter().sum();
        colsum = colsum.max(sums(&contrast_centering(&b.iter().map(|x| x / total).collect::<Vec<_>>()).unwrap()));
        let ds = random_dataset(&mut rng, &vec![7; k], 1);
        colsum = colsum.max(sums(&wn_data_contrast(&ds).unwrap()));
    }
    if colsum > 1e-12 {
        failures.push(format!("contrast sums {colsum:e}"));
    }

    // one-dimensional Hotelling is the squared studentized difference
    let mut hot: f64 = 0.0;
    for _ in 0..50 {
        let ds = random_dataset(&mut rng, &[8, 15], 1);
        let s = evaluate(&StatisticSpec::new(StatisticId::Studentized), &ds).unwrap();
        let h = evaluate(&StatisticSpec::new(StatisticId::HotellingUnpooled), &ds).unwrap();
        hot = hot.max((h - s * s).abs() / h.max(1.0));
    }
    if hot > 1e-10 {
        failures.push(format!("hotelling d=1 {hot:e}"));
    }

    // p-values live on the 1/(nperm + 1) grid
    let ds = random_dataset(&mut rng, &[9, 11], 1);
    for (nperm, seed) in [(19, 1), (99, 2), (999, 3)] {
        for p in ["none", "gaussian", "bootstrap"] {
            let (spec, pspec) = cell(StatisticId::Studentized, p, 30, 0);
            let r = run_test(&ds, &spec, &pspec, nperm, seed).unwrap().p_value;
            let m = r * (nperm + 1) as f64;
            if (m - m.round()).abs() > 1e-9 || !(1.0..=(nperm + 1) as f64).contains(&m.round()) {
                failures.push(format!("granularity {p} nperm={nperm} p={r}"));
            }
        }
    }

    // results do not depend on the thread count
    let cfg = SimulationConfig {
        scenario: ScenarioSpec::new(ScenarioId::BfExponential, 30),
        cells: vec![
            cell(StatisticId::Studentized, "none", 20, 50),
            cell(StatisticId::DiffMeans, "gaussian_mc", 20, 50),
            cell(StatisticId::Edgeworth, "bootstrap", 20, 50),
            cell(StatisticId::DiffMeans, "boot_after_gauss_mc", 20, 50),
        ],
        nsim: 24,
        nperm: 49,
        nboot: 20,
        b: 50,
        alpha: 0.05,
        seed: 42,
    };
    let runs: Vec<_> = [1, 2, 4]
        .into_iter()
        .map(|threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let sim = simulate_p_values(&cfg).unwrap();
                let single = run_test(&ds, &cfg.cells[3].0, &cfg.cells[3].1, 199, 8).unwrap();
                (sim, single.p_value.to_bits(), single.observed_prepivoted.to_bits())
            })
        })
        .collect();
    if runs.windows(2).any(|w| w[0] != w[1]) {
        failures.push("thread count changes results".into());
    }

    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "recomposition {recompose:.1e}, invariance {drift:.1e}, contrast sums {colsum:.1e}, hotelling d=1 {hot:.1e}, granularity and thread determinism ok"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Paper-scale study files parse, keep their sizes, and run end to end when
/// shrunk.
fn full_scale_configs() -> Outcome {
    let mut files: Vec<PathBuf> = std::fs::read_dir(config_dir().join("full"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    let mut bad = Vec::new();
    for path in &files {
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        let cfg = match SimulationConfig::from_toml(&std::fs::read_to_string(path).unwrap()) {
            Ok(c) => c,
            Err(e) => {
                bad.push(format!("{name}: {e}"));
                continue;
            }
        };
        let expected_nsim = if name.starts_with("table1") || name.starts_with("tableA5") { 10_000 } else { 5000 };
        if cfg.nsim != expected_nsim || cfg.nperm != 999 {
            bad.push(format!("{name}: nsim {} nperm {}", cfg.nsim, cfg.nperm));
        }
        if SimulationConfig::from_toml(&cfg.to_toml()).ok().as_ref() != Some(&cfg) {
            bad.push(format!("{name}: round trip"));
        }
        // one replicate with tiny resampling sizes
        let mut small = cfg.clone();
        small.nsim = 1;
        small.nperm = 4;
        for (_, p) in small.cells.iter_mut() {
            *p = match *p {
                PrepivotSpec::Bootstrap { .. } => PrepivotSpec::Bootstrap { nboot: 3 },
                PrepivotSpec::BootAfterGauss { mode, .. } => PrepivotSpec::BootAfterGauss { nboot: 3, mode },
                other => other,
            };
        }
        if let Err(e) = run_simulation(&small) {
            bad.push(format!("{name}: {e}"));
        }
    }
    let scenario_ok = generate_scenario(&ScenarioSpec::new(ScenarioId::ManovaLognormal, 200), &derive_stream(1, &[])).is_ok();
    check(
        bad.is_empty() && files.len() == 21 && scenario_ok,
        if bad.is_empty() { format!("{} full-scale files parse and run", files.len()) } else { bad.join("; ") },
    )
}
