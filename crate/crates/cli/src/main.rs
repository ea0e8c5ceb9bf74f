use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dla1d_cli::config::{resolve, Layer, SEED_ENV};
use dla1d_cli::{cmd_car2diag, cmd_ensemble, cmd_exponent, cmd_run, cmd_validate, CliError};

#[derive(Parser)]
#[command(name = "dla1d", version, about = "One-dimensional DLA with a moving front: simulate and estimate")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value settings file
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// fig1, fig2 or fig3
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override any setting, e.g. --set eps_sleep=1e-7 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Master seed [env: DLA1D_SEED]
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long = "t-max", global = true)]
    t_max: Option<f64>,
    #[arg(long = "n-runs", global = true)]
    n_runs: Option<u64>,
    /// exact or fast
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long = "output-dir", global = true)]
    output_dir: Option<String>,
    /// Worker threads for ensembles (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One run: trajectory, advance times, and the event trace for car2
    Run {
        #[arg(long = "run-id", default_value_t = 0)]
        run_id: u64,
    },
    /// Independent runs aggregated per checkpoint
    Ensemble,
    /// Ensemble plus a log-log growth exponent over [t_lo, t_hi]
    Exponent,
    /// Caricature II regeneration, speed and drift diagnostics
    Car2diag,
    /// Exact-vs-fast equivalence and window-doubling checks
    Validate,
}

fn flags(c: &Common) -> Result<Layer, CliError> {
    let mut layer = Layer::new();
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set `{kv}` is not KEY=VALUE")))?;
        if !dla1d_cli::config::KEYS.contains(&k) {
            return Err(CliError::Config(format!("--set: unknown key `{k}`")));
        }
        layer.insert(k.into(), v.into());
    }
    let named = [
        ("seed", c.seed.map(|v| v.to_string())),
        ("model", c.model.clone()),
        ("mu", c.mu.map(|v| v.to_string())),
        ("t_max", c.t_max.map(|v| v.to_string())),
        ("n_runs", c.n_runs.map(|v| v.to_string())),
        ("mode", c.mode.clone()),
        ("output_dir", c.output_dir.clone()),
    ];
    for (k, v) in named {
        if let Some(v) = v {
            layer.insert(k.into(), v);
        }
    }
    Ok(layer)
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let file_text = match &cli.common.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let settings = resolve(
        cli.common.preset.as_deref(),
        file_text.as_deref(),
        env_seed.as_deref(),
        &flags(&cli.common)?,
    )?;
    let report = match &cli.command {
        Command::Run { run_id } => cmd_run(&settings, *run_id)?,
        Command::Ensemble => cmd_ensemble(&settings)?,
        Command::Exponent => cmd_exponent(&settings)?,
        Command::Car2diag => cmd_car2diag(&settings)?,
        Command::Validate => cmd_validate(&settings)?,
    };
    println!("{}", report.message);
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(report.exit)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("dla1d: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
