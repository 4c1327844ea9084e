mod manifest;
mod reproduce;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use dpm_core::datagen::{self, Bounds, GaussianMixtureSpec};
use dpm_core::engine::{self, DpmConfig};
use dpm_core::halting::{self, BoundScenario, ProductRange, ThresholdMode, ZSource};
use dpm_core::separability::{self, Direction};
use dpm_core::simulate::{self, SweepGrid, TrialPlan};

use manifest::OutputDir;

#[derive(Parser)]
#[command(name = "dpm", version, about = "Differentially private clustering and its halting/separability analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate {
        #[command(subcommand)]
        kind: Generate,
    },
    /// Run DPM on a dataset.
    Cluster {
        dataset: PathBuf,
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate a figure or table as CSV plus a CHECK file.
    Reproduce {
        figure: Figure,
        #[arg(long)]
        out: PathBuf,
        /// Median shifts used for the Gaussian series.
        #[arg(long, value_enum, default_value_t = ZChoice::Published)]
        z: ZChoice,
        /// Seeds per grid cell for fig-silhouette.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Evaluate the halting bounds for a scenario.
    Bounds {
        /// A scenario JSON, or a clustering config JSON when --dataset is given.
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::General)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        levels: u32,
        /// Measure the scenario from this dataset's root node.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// t′ used with --dataset.
        #[arg(long)]
        t_prime: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo plan and compare with the analytic bound.
    Simulate {
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the plan's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Find a width-rho gap and certify the induced partition.
    Separability {
        dataset: PathBuf,
        #[arg(long)]
        rho: f64,
        /// Comma-separated direction; repeatable. Defaults to every axis.
        #[arg(long = "direction")]
        directions: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the hashes listed in a manifest.
    Verify { manifest: PathBuf },
}

#[derive(Subcommand)]
enum Generate {
    Uniform {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        low: f64,
        #[arg(long, default_value_t = 1.0)]
        high: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Gaussian {
        /// Mixture JSON: {"components": [{"center", "sigma", "count"}], "seed"}.
        spec: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig4,
    FigSilhouette,
    GaussianTable,
    ZiTable,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZChoice {
    Exact,
    Published,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Tprime,
    General,
}

/// A bad input that the user can fix; exits with status 2.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use dpm_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidParameter { .. }
                | E::Empty(_)
                | E::DimensionMismatch { .. }
                | E::Parse { .. }
                | E::Precondition(_)
                | E::TooLarge(_)
                | E::Infeasible(_)
                | E::Json(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_config(path: &Path) -> Result<DpmConfig> {
    let config: DpmConfig = read_json(path)?;
    config.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(config)
}

fn load_dataset(path: &Path) -> Result<datagen::Dataset> {
    datagen::load_csv(path).with_context(|| format!("loading {}", path.display()))
}

fn dataset_csv(d: &datagen::Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    datagen::write_csv(d, &mut buf)?;
    Ok(buf)
}

fn generate(kind: Generate) -> Result<()> {
    let (data, seed, out, spec_path) = match kind {
        Generate::Uniform {
            dim,
            n,
            low,
            high,
            seed,
            out,
        } => {
            let b = Bounds::new(low, high)?;
            (datagen::generate_uniform(dim, n, &vec![b; dim], seed)?, seed, out, None)
        }
        Generate::Gaussian { spec, seed, out } => {
            let mut s: GaussianMixtureSpec = read_json(&spec)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            (datagen::generate_gaussian_mixture(&s)?, s.seed, out, Some(spec))
        }
    };
    let mut dir = OutputDir::create(&out)?;
    dir.write("dataset.csv", dataset_csv(&data)?)?;
    dir.finish("generate", spec_path.as_deref(), Some(seed))?;
    println!("wrote {} points in {} dimensions to {}", data.len(), data.dim(), out.join("dataset.csv").display());
    Ok(())
}

fn cluster(dataset: &Path, config: &Path, seed: u64, out: &Path) -> Result<()> {
    let c = load_config(config)?;
    let data = load_dataset(dataset)?;
    let result = engine::run_dpm(&data, &c, seed)?;

    let mut assignments = String::from("index,cluster\n");
    for (i, k) in result.assignments(data.len()).iter().enumerate() {
        let _ = writeln!(assignments, "{i},{k}");
    }
    let mut dir = OutputDir::create(out)?;
    dir.write_json("result.json", &result)?;
    dir.write("assignments.csv", assignments)?;
    dir.finish("cluster", Some(config), Some(seed))?;
    println!(
        "{} clusters, depth {}, budget epsilon={} delta={}",
        result.clusters.len(),
        result.metadata.max_leaf_depth,
        result.budget.epsilon,
        result.budget.delta
    );
    Ok(())
}

fn reproduce(figure: Figure, out: &Path, z: ZChoice, seeds: u64) -> Result<()> {
    let source = match z {
        ZChoice::Exact => ZSource::Exact,
        ZChoice::Published => ZSource::Published,
    };
    let fig = match figure {
        Figure::Fig4 => reproduce::fig4(source)?,
        Figure::FigSilhouette => {
            if seeds == 0 {
                return Err(invalid("--seeds must be at least 1"));
            }
            reproduce::fig_silhouette(seeds)?
        }
        Figure::GaussianTable => reproduce::gaussian_table(source)?,
        Figure::ZiTable => reproduce::zi_table()?,
    };
    let mut dir = OutputDir::create(out)?;
    dir.write(fig.file, &fig.csv)?;
    dir.write("CHECK", reproduce::check_file(&fig.checks))?;
    dir.finish("reproduce", None, None)?;
    let failed = fig.checks.iter().filter(|c| !c.pass).count();
    println!("{}: {} checks, {} failed", fig.file, fig.checks.len(), failed);
    for c in fig.checks.iter().filter(|c| !c.pass) {
        println!("  FAIL {}: expected {}, computed {}", c.item, c.expected, c.computed);
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn bounds_report(s: &BoundScenario, mode: ThresholdMode, levels: u32) -> Result<String> {
    s.validate()?;
    let mut text = String::from("quantity,value\n");
    let imm = halting::prob_halt_immediately_lower(s)?;
    let _ = writeln!(text, "t_tau,{:?}", s.t_tau()?);
    let _ = writeln!(text, "immediate_halt_lower,{imm:?}");
    match halting::prob_central_split_lower(s) {
        Ok(v) => {
            let _ = writeln!(text, "central_split_lower,{v:?}");
        }
        Err(e) => {
            let _ = writeln!(text, "central_split_lower,undefined ({e})");
        }
    }
    let _ = writeln!(text, "not_halt_lower,{:?}", halting::prob_not_halt_lower(s)?);

    let full = halting::prob_halt_within(s, levels, mode, ProductRange::Preceding)?;
    text.push_str("\nlevel,t_tau,t_prime,halt,progress,progress_used,within_raw,within_clamped,note\n");
    for term in &full.terms {
        let within = halting::prob_halt_within(s, term.level, mode, ProductRange::Preceding)?;
        let _ = writeln!(
            text,
            "{},{:?},{},{:?},{},{:?},{:?},{:?},{}",
            term.level,
            term.t_tau,
            opt(term.t_prime),
            term.halt,
            opt(term.progress),
            term.progress_used,
            within.raw,
            within.clamped,
            term.note.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    Ok(text)
}

fn bounds(
    scenario: &Path,
    mode: Mode,
    levels: u32,
    dataset: Option<&Path>,
    t_prime: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let s = match dataset {
        Some(d) => {
            let config = load_config(scenario)?;
            simulate::measure_scenario(&load_dataset(d)?, &config, t_prime)?
        }
        None => {
            if t_prime.is_some() {
                return Err(invalid("--t-prime applies only with --dataset; set t_prime in the scenario"));
            }
            read_json(scenario)?
        }
    };
    let mode = match mode {
        Mode::Tprime => ThresholdMode::Tprime,
        Mode::General => ThresholdMode::General,
    };
    let text = bounds_report(&s, mode, levels)?;
    print!("{text}");
    if let Some(out) = out {
        let mut dir = OutputDir::create(out)?;
        dir.write("bounds.csv", &text)?;
        dir.write_json("scenario.json", &s)?;
        dir.finish("bounds", Some(scenario), None)?;
    }
    Ok(())
}

/// A trial plan, optionally swept over a parameter grid.
#[derive(Serialize, Deserialize)]
struct PlanFile {
    #[serde(flatten)]
    plan: TrialPlan,
    #[serde(default)]
    sweep: Option<SweepGrid>,
}

fn run_simulation(plan_path: &Path, out: &Path, seed: Option<u64>, trials: Option<u64>) -> Result<()> {
    let PlanFile { mut plan, sweep } = read_json(plan_path)?;
    if let Some(s) = seed {
        plan.master_seed = s;
    }
    if let Some(t) = trials {
        plan.trials = t;
    }
    plan.validate()?;
    let reports = match &sweep {
        Some(grid) if !grid.is_empty() => simulate::sweep(grid, &plan)?,
        _ => vec![simulate::run_plan(&plan)?],
    };
    let mut csv = Vec::new();
    simulate::write_reports_csv(&reports, &mut csv)?;
    let mut dir = OutputDir::create(out)?;
    dir.write("report.csv", csv)?;
    dir.write_json("report.json", &reports)?;
    dir.finish("simulate", Some(plan_path), Some(plan.master_seed))?;
    for r in &reports {
        let c = &r.config;
        println!(
            "{} {:?} [alpha={} t={} q={} tau_e={} tau_s={} eps_select={}]: bound {:?} vs empirical {:?} (99% CI [{:?}, {:?}]) {}{}",
            r.target,
            r.kind,
            c.score.alpha,
            c.score.t,
            c.score.q,
            c.tau_e,
            c.tau_s,
            c.eps_select,
            r.bound,
            r.empirical,
            r.ci99.low,
            r.ci99.high,
            if r.holds { "holds" } else { "VIOLATED" },
            if r.loose { " (loose)" } else { "" }
        );
    }
    Ok(())
}

fn parse_direction(s: &str, dim: usize) -> Result<Direction> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| invalid(format!("bad --direction `{s}`: {e}")))?;
    if v.len() != dim {
        return Err(invalid(format!("--direction `{s}` has {} components, dataset has {dim}", v.len())));
    }
    Ok(Direction::new(v)?)
}

fn separate(dataset: &Path, rho: f64, directions: &[String], out: &Path) -> Result<()> {
    let data = load_dataset(dataset)?;
    let dirs = if directions.is_empty() {
        (0..data.dim()).map(|i| Direction::axis(data.dim(), i)).collect::<dpm_core::Result<Vec<_>>>()?
    } else {
        directions.iter().map(|s| parse_direction(s, data.dim())).collect::<Result<Vec<_>>>()?
    };
    let sep = separability::best_separation(data.points(), rho, &dirs)?;
    if let Some(w) = &sep.warning {
        eprintln!("warning: {w}");
    }
    let recount = sep.certificate.recount(data.points());
    let mut dir = OutputDir::create(out)?;
    dir.write_json("certificate.json", &sep)?;
    dir.finish("separability", None, None)?;
    println!(
        "gap ({}, {}) along {:?}: xi = {}, recount = {}, verified = {}",
        sep.gap.a, sep.gap.b, sep.direction, sep.certificate.xi, recount, sep.certificate.verified
    );
    Ok(())
}

fn verify(path: &Path) -> Result<()> {
    let m: manifest::RunManifest = read_json(path)?;
    let bad = manifest::verify(&m)?;
    if !bad.is_empty() {
        bail!("hash mismatch: {}", bad.join(", "));
    }
    println!("{} artifacts verified", m.artifacts.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { kind } => generate(kind),
        Command::Cluster {
            dataset,
            config,
            seed,
            out,
        } => cluster(&dataset, &config, seed, &out),
        Command::Reproduce { figure, out, z, seeds } => reproduce(figure, &out, z, seeds),
        Command::Bounds {
            scenario,
            mode,
            levels,
            dataset,
            t_prime,
            out,
        } => bounds(&scenario, mode, levels, dataset.as_deref(), t_prime, out.as_deref()),
        Command::Simulate {
            plan,
            out,
            seed,
            trials,
        } => run_simulation(&plan, &out, seed, trials),
        Command::Separability {
            dataset,
            rho,
            directions,
            out,
        } => separate(&dataset, rho, &directions, &out),
        Command::Verify { manifest } => verify(&manifest),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
