use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypdamp::export::{export, ExportOptions, Format};
use hypdamp::output::{write_artifacts, write_outcome};
use hypdamp::pool::{resolve_jobs, JOBS_ENV};
use hypdamp::{exit, resolve, run, DgcsMode, Operation, Override, Pool, RunError, Scenario, Source};

#[derive(Parser)]
#[command(name = "hypdamp", version, about = "Mode-by-mode audits for damped wave equations with time-dependent speed")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Print only errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Override a scenario field, e.g. `--set parameters.sigma=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Clone, Default)]
struct ModeFlags {
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run whatever operation a scenario file names.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate one mode and write its energy trace.
    Simulate {
        scenario: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        mode: ModeFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Check the energy bounds mode by mode (and over a spectrum).
    Verify {
        scenario: Option<PathBuf>,
        /// auto, sup, sub, low_frequency, half_sigma or explore.
        #[arg(long)]
        lemma: Option<String>,
        #[command(flatten)]
        mode: ModeFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Build or certify the resonant counterexample coefficient.
    Dgcs {
        #[command(subcommand)]
        action: DgcsAction,
    },
    /// Classify growth over a (sigma, alpha, delta) grid.
    Sweep {
        scenario: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a scenario's coefficient (or construction) without running it.
    Export {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        #[arg(long)]
        t_end: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Default)]
struct DgcsFlags {
    scenario: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum DgcsAction {
    /// Select frequencies, check the ledger and assemble the coefficient.
    Build {
        #[command(flatten)]
        flags: DgcsFlags,
    },
    /// Build, then propagate every mode and test the series.
    Certify {
        #[command(flatten)]
        flags: DgcsFlags,
        #[arg(long)]
        t_eval: Option<f64>,
    },
}

enum Failed {
    Schema(String),
    Runtime(String),
}

fn num(key: &str, v: Option<f64>) -> Option<Override> {
    v.map(|x| Override::new(key, toml::Value::Float(x)))
}

fn int(key: &str, v: Option<usize>) -> Option<Override> {
    v.map(|x| Override::new(key, toml::Value::Integer(x as i64)))
}

fn overrides(common: &Common, extra: Vec<Option<Override>>) -> Result<Vec<Override>, Failed> {
    let mut out: Vec<Override> = Vec::new();
    for s in &common.set {
        out.push(Override::parse(s).map_err(|e| Failed::Schema(e.to_string()))?);
    }
    out.extend(extra.into_iter().flatten());
    if let Some(o) = &common.out {
        out.push(Override::new("output_dir", toml::Value::String(o.display().to_string())));
    }
    if let Some(s) = common.seed {
        out.push(Override::new("seed", toml::Value::Integer(s as i64)));
    }
    if let Some(n) = &common.name {
        out.push(Override::new("name", toml::Value::String(n.clone())));
    }
    Ok(out)
}

fn mode_overrides(m: &ModeFlags) -> Vec<Option<Override>> {
    vec![
        num("parameters.sigma", m.sigma),
        num("parameters.delta", m.delta),
        num("parameters.horizon", m.horizon),
    ]
}

fn load(path: Option<&PathBuf>, op: Option<Operation>, ov: &[Override]) -> Result<Scenario, Failed> {
    let src = match path {
        Some(p) => Source::file(p),
        None => Ok(Source::empty()),
    }
    .map_err(|e| Failed::Schema(e.to_string()))?;
    resolve(&src, op, ov).map_err(|e| Failed::Schema(e.to_string()))
}

fn run_err(e: RunError) -> Failed {
    match e {
        RunError::Invalid(m) => Failed::Schema(format!("invalid parameters: {m}")),
        RunError::Other(e) => Failed::Runtime(format!("{e:#}")),
    }
}

fn execute(cli: &Cli) -> Result<u8, Failed> {
    let jobs = resolve_jobs(cli.jobs);
    let pool = Pool::new(jobs).map_err(|e| Failed::Runtime(format!("thread pool ({JOBS_ENV}): {e}")))?;
    let (sc, dgcs_mode) = match &cli.command {
        Command::Run { scenario, common } => (load(Some(scenario), None, &overrides(common, vec![])?)?, DgcsMode::FromScenario),
        Command::Simulate {
            scenario,
            lambda,
            mode,
            common,
        } => {
            let mut extra = mode_overrides(mode);
            extra.push(num("parameters.lambda", *lambda));
            let ov = overrides(common, extra)?;
            (load(scenario.as_ref(), Some(Operation::Simulate), &ov)?, DgcsMode::FromScenario)
        }
        Command::Verify {
            scenario,
            lemma,
            mode,
            common,
        } => {
            let mut extra = mode_overrides(mode);
            extra.push(lemma.as_ref().map(|l| Override::new("parameters.lemma", toml::Value::String(l.clone()))));
            let ov = overrides(common, extra)?;
            (load(scenario.as_ref(), Some(Operation::Verify), &ov)?, DgcsMode::FromScenario)
        }
        Command::Dgcs { action } => {
            let (flags, t_eval, mode) = match action {
                DgcsAction::Build { flags } => (flags, None, DgcsMode::Build),
                DgcsAction::Certify { flags, t_eval } => (flags, *t_eval, DgcsMode::Certify),
            };
            let extra = vec![
                num("parameters.sigma", flags.sigma),
                num("parameters.delta", flags.delta),
                int("parameters.k_max", flags.k_max),
                num("parameters.options.t_eval", t_eval),
            ];
            let ov = overrides(&flags.common, extra)?;
            (load(flags.scenario.as_ref(), Some(Operation::Dgcs), &ov)?, mode)
        }
        Command::Sweep {
            scenario,
            trials,
            horizon,
            common,
        } => {
            let extra = vec![int("parameters.trials", *trials), num("parameters.horizon", *horizon)];
            let ov = overrides(common, extra)?;
            (load(scenario.as_ref(), Some(Operation::Sweep), &ov)?, DgcsMode::FromScenario)
        }
        Command::Export {
            scenario,
            format,
            points,
            t_end,
            common,
        } => {
            let sc = load(Some(scenario), None, &overrides(common, vec![])?)?;
            let opts = ExportOptions {
                format: *format,
                points: *points,
                t_end: *t_end,
            };
            let art = export(&sc, &opts).map_err(run_err)?;
            let paths = write_artifacts(&sc.output_dir, &[art]).map_err(|e| Failed::Runtime(format!("{e:#}")))?;
            if !cli.quiet {
                for p in paths {
                    println!("wrote {}", p.display());
                }
            }
            return Ok(exit::OK);
        }
    };
    let outcome = run(&sc, dgcs_mode, &pool).map_err(run_err)?;
    write_outcome(&sc, &outcome).map_err(|e| Failed::Runtime(format!("{e:#}")))?;
    if !cli.quiet {
        println!("{}", outcome.summary);
        println!("artifacts in {}", sc.output_dir.display());
    }
    if outcome.failures.is_empty() {
        return Ok(exit::OK);
    }
    let mut named: Vec<&str> = outcome.failures.iter().map(|f| f.bound.as_str()).collect();
    named.sort_unstable();
    named.dedup();
    eprintln!("audit failed: {} violation(s)", outcome.failures.len());
    for f in outcome.failures.iter().take(10) {
        eprintln!("  {}: {}", f.bound, f.detail);
    }
    eprintln!("failing bounds: {}", named.join(", "));
    Ok(exit::AUDIT)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failed::Schema(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(exit::SCHEMA)
        }
        Err(Failed::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(exit::RUNTIME)
        }
    }
}
