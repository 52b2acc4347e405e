mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use survbias::cohort::{Cohort, CohortData};
use survbias::cohortio::{
    fmt_real, read_cohorts, read_results, write_cohort, write_metadata, write_results, ReadOptions,
    ResultFormat, ResultRow, ResultTable, RunMetadata,
};
use survbias::datagen::{
    calibrate_conditional_hr, simulate_cohorts, simulate_prospective, true_marginal_hrs, Scenario,
    GENERATOR,
};
use survbias::estimators::{run_all, Method, TruthValues};
use survbias::{Error, ErrorKind, Result};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "survbias", version, about = "Selection bias in treated-survivor cohort comparisons")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a control and a treated cohort.
    Simulate(SimulateArgs),
    /// True marginal hazard ratios from counterfactual clones.
    Truth(SimArgs),
    /// Find the conditional hazard ratio giving a target marginal ATE.
    Calibrate(CalibrateArgs),
    /// Run every estimator on cohort files.
    Estimate(EstimateArgs),
    /// Recompute bias metrics of a results file and print the table.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Subjects per cohort.
    #[arg(short, long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    conditional_hr: Option<f64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Also write a prospective cohort with treatment as a time-varying switch.
    #[arg(long)]
    prospective: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Cohort CSV files (controls and treated, or one prospective file).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Results file with `true` rows, as written by `truth`.
    #[arg(long, conflicts_with = "truth_hr")]
    truth: Option<PathBuf>,
    /// True hazard ratio used for every estimand.
    #[arg(long)]
    truth_hr: Option<f64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV.
    input: PathBuf,
    /// Write the recomputed table here instead of only printing it.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: ResultFormat,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Truth(args) => truth(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Estimate(args) => estimate(args),
        Command::Report(args) => report(args),
    }
}

impl SimArgs {
    /// Loads the configuration and applies command-line overrides.
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        if let Some(s) = self.scenario {
            config.simulation.scenario = s;
        }
        if let Some(n) = self.n {
            config.simulation.n_per_cohort = n;
        }
        if let Some(seed) = self.seed {
            config.seed = Some(seed);
        }
        if let Some(hr) = self.conditional_hr {
            config.simulation.conditional_hr = Some(hr);
        }
        let out = self.out.clone().unwrap_or_else(|| config.output.dir.clone());
        Ok((config, out))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (config, out) = args.sim.resolve()?;
    let sim = config.simulation()?;
    create_dir(&out)?;
    let cohorts = simulate_cohorts(&sim)?;
    log::info!(
        "selection kept {} of {} candidates",
        cohorts.selection.accepted,
        cohorts.selection.candidates
    );

    let mut meta = RunMetadata::new("simulate", config.echo()?);
    meta.seed = Some(sim.seed);
    meta.generator = Some(GENERATOR.to_string());
    meta.selection = Some(cohorts.selection.into());
    if cohorts.frailty_resamples > 0 {
        let w = format!(
            "{} frailty draws had zero event probability and were redrawn",
            cohorts.frailty_resamples
        );
        log::warn!("{w}");
        meta.warnings.push(w);
    }

    let names = cohorts.data.covariate_names.clone();
    let mut files = Vec::new();
    for (cohort, file) in [(Cohort::Control, "controls.csv"), (Cohort::Treated, "treated.csv")] {
        let part = CohortData::new(names.clone(), cohorts.data.of(cohort).cloned().collect());
        files.push((part, file));
    }
    if args.prospective {
        files.push((simulate_prospective(&sim)?, "prospective.csv"));
    }
    for (data, file) in &files {
        let path = out.join(file);
        write_cohort(data, &path)?;
        write_metadata(&path, &meta)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn truth(args: SimArgs) -> Result<()> {
    let (config, out) = args.resolve()?;
    let sim = config.simulation()?;
    create_dir(&out)?;
    let table = ResultTable {
        rows: true_marginal_hrs(&sim)?
            .iter()
            .map(|r| ResultRow {
                method: Method::Truth,
                ..ResultRow::from_result(r)
            })
            .collect(),
    };
    let mut meta = RunMetadata::new("truth", config.echo()?);
    meta.seed = Some(sim.seed);
    meta.generator = Some(GENERATOR.to_string());
    for (file, format) in [("truth.csv", ResultFormat::Csv), ("truth.txt", ResultFormat::Text)] {
        let path = out.join(file);
        write_results(&table, &path, format)?;
        write_metadata(&path, &meta)?;
    }
    print!("{}", table.render_text());
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let (mut config, out) = args.sim.resolve()?;
    if let Some(t) = args.target {
        config.calibration.target = t;
    }
    if let Some(t) = args.tolerance {
        config.calibration.tolerance = t;
    }
    let sim = config.simulation()?;
    create_dir(&out)?;
    let result = calibrate_conditional_hr(&sim, config.calibration.target, config.calibration.tolerance)?;

    let mut trace = String::from("step,conditional_hr,marginal_hr\n");
    for (i, s) in result.trace.iter().enumerate() {
        trace.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            fmt_real(s.conditional_hr),
            fmt_real(s.marginal_hr)
        ));
    }
    let path = out.join("calibration.csv");
    write_text(&path, &trace)?;
    let mut meta = RunMetadata::new("calibrate", config.echo()?);
    meta.seed = Some(sim.seed);
    meta.generator = Some(GENERATOR.to_string());
    write_metadata(&path, &meta)?;
    println!(
        "conditional_hr = {} (marginal ATE {:.4}, target {} +/- {}, {} evaluations)",
        fmt_real(result.conditional_hr),
        result.marginal_hr,
        result.target,
        result.tolerance,
        result.trace.len()
    );
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let settings = config.estimation.settings()?;
    let out = args.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let data = read_cohorts(
        &args.inputs,
        ReadOptions {
            latent: false,
            require_wait_time: true,
        },
    )?;
    let truth = match (&args.truth, args.truth_hr) {
        (Some(path), _) => {
            let table = read_results(path)?;
            let truth = |e| {
                table
                    .rows
                    .iter()
                    .find(|r| r.method == Method::Truth && r.estimand == e)
                    .and_then(|r| r.hr)
                    .ok_or_else(|| Error::InvalidInput(format!("{}: no true value for {e}", path.display())))
            };
            Some(TruthValues {
                atc: truth(survbias::estimators::Estimand::Atc)?,
                att: truth(survbias::estimators::Estimand::Att)?,
                ate: truth(survbias::estimators::Estimand::Ate)?,
            })
        }
        (None, Some(hr)) if hr > 0.0 && hr.is_finite() => Some(TruthValues::uniform(hr)),
        (None, Some(hr)) => return Err(Error::Config(format!("--truth-hr {hr} must be positive"))),
        (None, None) => None,
    };

    let report = run_all(&data, &settings, truth)?;
    let table = ResultTable::from_report(&report);
    create_dir(&out)?;
    let mut meta = RunMetadata::new("estimate", estimate_echo(&config)?);
    for input in args.inputs.iter().chain(&args.truth) {
        meta.add_input(input)?;
    }
    // File names only, so relocated inputs give identical sidecars.
    for input in &mut meta.inputs {
        if let Some(name) = Path::new(&input.path).file_name() {
            input.path = name.to_string_lossy().into_owned();
        }
    }
    for o in &report.outcomes {
        if let Err(e) = &o.result {
            let w = format!("{} failed: {e}", o.method);
            log::warn!("{w}");
            meta.warnings.push(w);
        }
    }
    for (file, format) in [("results.csv", ResultFormat::Csv), ("results.txt", ResultFormat::Text)] {
        let path = out.join(file);
        write_results(&table, &path, format)?;
        write_metadata(&path, &meta)?;
    }
    print!("{}", table.render_text());
    Ok(())
}

/// Estimation runs do not depend on the simulation section.
fn estimate_echo(config: &RunConfig) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Echo<'a> {
        estimation: &'a config::EstimationSection,
    }
    toml::to_string(&Echo {
        estimation: &config.estimation,
    })
    .map_err(|e| Error::Config(e.to_string()))
}

fn report(args: ReportArgs) -> Result<()> {
    let mut table = read_results(&args.input)?;
    let mut warnings = Vec::new();
    if table.rows.is_empty() {
        warnings.push(format!("{}: no result rows", args.input.display()));
    }
    warnings.extend(table.recompute_bias());
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &args.out {
        write_results(&table, out, args.format)?;
        let mut meta = RunMetadata::new("report", String::new());
        meta.add_input(&args.input)?;
        meta.warnings = warnings;
        write_metadata(out, &meta)?;
    }
    print!("{}", table.render_text());
    Ok(())
}
