use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prepivot_core::data::read_csv;
use prepivot_core::engine::{exact_test, ENUMERATION_CAP};
use prepivot_core::harness::{run_simulation, ScenarioId, SimulationConfig, DEFAULT_B, DEFAULT_NBOOT};
use prepivot_core::statistics::MedianVariance;
use prepivot_core::{run_test, Error, PrepivotSpec, StatisticId, StatisticSpec};

/// Prepivoted permutation tests.
#[derive(Parser)]
#[command(name = "prepivot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo permutation test on a CSV file (group,x1,...,xd).
    Test {
        #[command(flatten)]
        test: TestArgs,
        #[arg(long, default_value_t = 999)]
        nperm: usize,
        /// Print the decision at this level to stderr.
        #[arg(long)]
        alpha: Option<f64>,
        data: PathBuf,
    },
    /// Exact permutation p-value over every group assignment.
    Enumerate {
        #[command(flatten)]
        test: TestArgs,
        /// Use the left tail (negates the statistic).
        #[arg(long)]
        lower_tail: bool,
        #[arg(long, default_value_t = ENUMERATION_CAP)]
        cap: u64,
        data: PathBuf,
    },
    /// Rejection-rate study from a TOML configuration.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Overrides the configuration's level.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the generative scenarios.
    Scenarios,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, default_value = "studentized")]
    statistic: String,
    /// none, gaussian, gaussian_mc, bootstrap, boot_after_gauss or
    /// boot_after_gauss_mc.
    #[arg(long, default_value = "none")]
    prepivot: String,
    #[arg(long, default_value_t = DEFAULT_NBOOT)]
    nboot: usize,
    /// Monte Carlo draws for Gaussian prepivoting.
    #[arg(long = "mc-b", default_value_t = DEFAULT_B)]
    mc_b: usize,
    /// Median variance for median_studentized: exact, or a number of
    /// bootstrap draws.
    #[arg(long)]
    median_variance: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Failures with their exit code: 1 for data that defeats the statistic, 2
/// for bad input or usage.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_statistical() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Test {
            test,
            nperm,
            alpha,
            data,
        } => {
            set_threads(test.threads)?;
            let (spec, pspec) = specs(&test)?;
            let ds = load(&data)?;
            let result = run_test(&ds, &spec, &pspec, nperm, test.seed)?;
            if let Some(a) = alpha {
                let verdict = if result.p_value <= a { "reject" } else { "do not reject" };
                eprintln!("{verdict} at alpha = {a}");
            }
            emit(test.output.as_deref(), &serde_json::to_string_pretty(&result).expect("serializes"))
        }
        Command::Enumerate {
            test,
            lower_tail,
            cap,
            data,
        } => {
            set_threads(test.threads)?;
            let (spec, pspec) = specs(&test)?;
            let ds = load(&data)?;
            let result = exact_test(&ds, &spec, &pspec, test.seed, cap, lower_tail)?;
            emit(test.output.as_deref(), &serde_json::to_string_pretty(&result).expect("serializes"))
        }
        Command::Simulate {
            config,
            format,
            alpha,
            seed,
            threads,
            output,
        } => {
            set_threads(threads)?;
            let text = std::fs::read_to_string(&config)
                .map_err(|e| usage(format!("{}: {e}", config.display())))?;
            let mut cfg = SimulationConfig::from_toml(&text)
                .map_err(|e| usage(format!("{}: {e}", config.display())))?;
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let table = run_simulation(&cfg)?;
            let body = match format {
                Format::Json => table.to_json(),
                Format::Csv => {
                    let mut buf = Vec::new();
                    table.write_csv(&mut buf)?;
                    String::from_utf8(buf).expect("csv is utf-8")
                }
            };
            emit(output.as_deref(), &body)
        }
        Command::Scenarios => {
            for id in ScenarioId::ALL {
                println!("{:<24} {}", id.name(), id.describe());
            }
            Ok(())
        }
    }
}

fn specs(args: &TestArgs) -> Result<(StatisticSpec, PrepivotSpec), Failure> {
    let id: StatisticId = args.statistic.parse()?;
    let mut spec = StatisticSpec::new(id);
    if let Some(mv) = &args.median_variance {
        spec.median_variance = match mv.as_str() {
            "exact" => MedianVariance::Exact,
            n => MedianVariance::Bootstrap {
                draws: n
                    .parse()
                    .map_err(|_| usage(format!("--median-variance expects 'exact' or a count, got '{n}'")))?,
            },
        };
    }
    let pspec = PrepivotSpec::parse(&args.prepivot, id, args.nboot, args.mc_b)?;
    pspec.check_compatible(&spec)?;
    Ok((spec, pspec))
}

fn load(path: &Path) -> Result<prepivot_core::GroupedDataset, Failure> {
    let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    read_csv(file)
        .map(|l| l.dataset)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn set_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn emit(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    let body = body.trim_end_matches('\n');
    match path {
        Some(p) => std::fs::write(p, format!("{body}\n")).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{body}").map_err(|e| usage(e.to_string()))
        }
    }
}
