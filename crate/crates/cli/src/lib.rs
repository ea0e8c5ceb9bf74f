//! Command implementations behind the `dla1d` binary.

pub mod config;
pub mod output;

use std::path::PathBuf;

use dla1d::caricature::{car1_run, car2_run};
use dla1d::dla::{run, Trajectory};
use dla1d::lyapunov::{diagnose, Diagnostics};
use dla1d::rng::{substream, RandomStream};
use dla1d::stats::{ensemble_run, ks_distance, loglog_slope, Bootstrap};
use dla1d::{Error, Ks, Summary};
use serde::Serialize;
use thiserror::Error;

use config::{Model, Settings};
use output::OutputDir;

/// Failures, each mapped to a distinct exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("invariant: {0}")]
    Invariant(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("resource: {0}")]
    Resource(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Resource(_) => 5,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Parameter { .. } | Error::Config(_) => CliError::Config(msg),
            Error::Invariant(_) => CliError::Invariant(msg),
            Error::InsufficientCycles { .. } | Error::Empty(_) | Error::FitDomain(_) => CliError::Validation(msg),
            Error::WindowExhausted { .. } | Error::RedExhausted { .. } | Error::Ensemble { .. } => {
                CliError::Resource(msg)
            }
        }
    }
}

/// What a command produced.
#[derive(Debug)]
pub struct Report {
    /// 0, or 4 for a completed check that failed.
    pub exit: u8,
    pub files: Vec<PathBuf>,
    pub message: String,
}

fn open_output(s: &Settings) -> Result<OutputDir, CliError> {
    let out = OutputDir::create(&s.output_dir, s.seed, &s.config_hash())?;
    out.echo(&s.canonical())?;
    Ok(out)
}

fn boot(s: &Settings) -> Bootstrap {
    Bootstrap {
        replicates: 1000,
        seed: s.seed,
    }
}

type RunFn = Box<dyn Fn(RandomStream) -> dla1d::Result<Trajectory> + Sync>;

fn run_fn(s: &Settings) -> RunFn {
    match s.model {
        Model::Dla => {
            let c = s.run_config();
            Box::new(move |st| run(&c, st))
        }
        Model::Car1 => {
            let c = s.car1_config();
            Box::new(move |st| car1_run(&c, st))
        }
        Model::Car2 => {
            let c = s.car2_config();
            Box::new(move |st| car2_run(&c, st).map(|(t, _)| t))
        }
    }
}

fn ensemble(s: &Settings) -> Result<Summary, CliError> {
    let f = run_fn(s);
    Ok(ensemble_run(s.n_runs, s.seed, s.canonical(), f)?)
}

/// One run on stream `run_id` of the master seed.
pub fn cmd_run(s: &Settings, run_id: u64) -> Result<Report, CliError> {
    let out = open_output(s)?;
    let mut files = vec![out.path("config.txt")];
    let stream = substream(s.seed, run_id);
    let (traj, events) = match s.model {
        Model::Dla => {
            let mut c = s.run_config();
            c.record_tau = true;
            (run(&c, stream)?, None)
        }
        Model::Car1 => {
            let mut c = s.car1_config();
            c.record_tau = true;
            (car1_run(&c, stream)?, None)
        }
        Model::Car2 => {
            let mut c = s.car2_config();
            c.record_tau = true;
            let (t, e) = car2_run(&c, stream)?;
            (t, Some(e))
        }
    };
    files.push(out.csv("trajectory.csv", "run_id,t,R", &output::trajectory_rows(run_id, &traj))?);
    if let Some(taus) = &traj.tau_log {
        files.push(out.csv("tau.csv", "k,tau", &output::tau_rows(taus))?);
    }
    if let Some(events) = &events {
        files.push(out.csv(
            "events.csv",
            &output::events_columns(&s.q_list),
            &output::events_rows(events),
        )?);
    }
    files.push(out.json("run.json", &RunInfo { run_id, seed: s.seed, trajectory: &traj })?);
    Ok(Report {
        exit: 0,
        files,
        message: format!(
            "{} run {run_id}: R({}) = {} after {} events",
            s.model.as_str(),
            traj.final_state.time,
            traj.final_state.front,
            traj.final_state.events
        ),
    })
}

#[derive(Serialize)]
struct RunInfo<'a> {
    run_id: u64,
    seed: u64,
    trajectory: &'a Trajectory,
}

#[derive(Serialize)]
struct EnsembleInfo<'a> {
    seed: u64,
    config_hash: String,
    n_runs: u64,
    completed: usize,
    aborted: &'a [(u64, String)],
}

fn write_ensemble(s: &Settings, out: &OutputDir, summary: &Summary) -> Result<Vec<PathBuf>, CliError> {
    Ok(vec![
        out.csv("summary.csv", "t,mean_R,var_R,n", &output::summary_rows(summary))?,
        out.csv("runs.csv", "run_id,t,R", &output::runs_rows(summary))?,
        out.json(
            "ensemble.json",
            &EnsembleInfo {
                seed: s.seed,
                config_hash: s.config_hash(),
                n_runs: s.n_runs,
                completed: summary.n_runs(),
                aborted: &summary.aborted,
            },
        )?,
    ])
}

pub fn cmd_ensemble(s: &Settings) -> Result<Report, CliError> {
    let out = open_output(s)?;
    let summary = ensemble(s)?;
    let mut files = vec![out.path("config.txt")];
    files.extend(write_ensemble(s, &out, &summary)?);
    Ok(Report {
        exit: 0,
        files,
        message: format!(
            "{} of {} runs completed; mean R at t={} is {}",
            summary.n_runs(),
            s.n_runs,
            summary.times.last().copied().unwrap_or(0.0),
            summary.mean.last().copied().unwrap_or(0.0)
        ),
    })
}

#[derive(Serialize)]
struct SlopeReport {
    slope: f64,
    intercept: f64,
    ci_lo: f64,
    ci_hi: f64,
    t_lo: f64,
    t_hi: f64,
    n_points: usize,
    n_runs: usize,
    seed: u64,
    config_hash: String,
}

pub fn cmd_exponent(s: &Settings) -> Result<Report, CliError> {
    let (t_lo, t_hi) = s.fit_window()?;
    let out = open_output(s)?;
    let summary = ensemble(s)?;
    let mut files = vec![out.path("config.txt")];
    files.extend(write_ensemble(s, &out, &summary)?);
    let e = loglog_slope(&summary, t_lo, t_hi, &boot(s))?;
    files.push(out.json(
        "slope.json",
        &SlopeReport {
            slope: e.slope,
            intercept: e.intercept,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            t_lo: e.t_lo,
            t_hi: e.t_hi,
            n_points: e.n_points,
            n_runs: e.n_runs,
            seed: s.seed,
            config_hash: s.config_hash(),
        },
    )?);
    Ok(Report {
        exit: 0,
        files,
        message: format!(
            "slope over [{}, {}]: {:.4} (95% CI {:.4} to {:.4}, {} runs)",
            e.t_lo, e.t_hi, e.slope, e.ci_lo, e.ci_hi, e.n_runs
        ),
    })
}

/// One Caricature II run and its regeneration/drift diagnostics for every
/// `(α, q)`. Exit status 4 when no `α` yields two regeneration cycles.
pub fn cmd_car2diag(s: &Settings) -> Result<Report, CliError> {
    let out = open_output(s)?;
    let mut c = s.car2_config();
    c.check_invariants = true;
    let (traj, records) = car2_run(&c, substream(s.seed, 0))?;
    let mut files = vec![
        out.path("config.txt"),
        out.csv("trajectory.csv", "run_id,t,R", &output::trajectory_rows(0, &traj))?,
        out.csv(
            "events.csv",
            &output::events_columns(&s.q_list),
            &output::events_rows(&records),
        )?,
    ];
    let b = boot(s);
    let mut diags: Vec<Diagnostics> = Vec::new();
    for &alpha in &s.alphas() {
        for &q in &s.q_list {
            diags.push(diagnose(&records, alpha, q, &b)?);
        }
    }
    files.push(out.json("diagnostics.json", &diags)?);
    let regenerating = diags.iter().filter(|d| d.speed.is_some()).count();
    let direct = traj.final_state.front as f64 / s.t_max;
    if regenerating == 0 {
        return Ok(Report {
            exit: 4,
            files,
            message: format!(
                "no regenerations: no alpha in {:?} gave two cycles (L~ >= J-1 = {} always); direct speed {direct:.4}",
                s.alphas(),
                s.j.saturating_sub(1)
            ),
        });
    }
    Ok(Report {
        exit: 0,
        files,
        message: format!(
            "{} events, direct speed {direct:.4}; {regenerating} of {} (alpha, q) pairs have speed estimates",
            records.len(),
            diags.len()
        ),
    })
}

#[derive(Serialize)]
struct ValidateReport {
    n_runs: u64,
    t_max: f64,
    ks_statistic: f64,
    ks_critical_5: f64,
    ks_critical_1: f64,
    ks_pass: bool,
    window: u64,
    slope_w: f64,
    slope_2w: f64,
    slope_diff: f64,
    ci_width: f64,
    window_pass: bool,
    seed: u64,
    config_hash: String,
}

/// Exact-vs-fast equivalence of `R(t_max)` and the window-doubling check.
pub fn cmd_validate(s: &Settings) -> Result<Report, CliError> {
    if s.model != Model::Dla {
        return Err(CliError::Config("`validate` needs model=dla".into()));
    }
    let (t_lo, t_hi) = s.fit_window()?;
    let out = open_output(s)?;
    let mut exact = s.run_config();
    exact.mode = dla1d::dla::Mode::Exact;
    let mut fast = exact.clone();
    fast.mode = dla1d::dla::Mode::Fast;
    let echo = s.canonical();
    let a: Summary = ensemble_run(s.n_runs, s.seed, echo.clone(), |st| run(&exact, st))?;
    // Independent seeds for the two samples.
    let b: Summary = ensemble_run(s.n_runs, s.seed ^ 0x5bd1_e995, echo.clone(), |st| run(&fast, st))?;
    let ks: Ks = ks_distance(&a.terminal(), &b.terminal())?;

    let w = fast.window()?;
    let mut wide = fast.clone();
    wide.window_override = Some(2 * w);
    let c: Summary = ensemble_run(s.n_runs, s.seed, echo, |st| run(&wide, st))?;
    let bt = boot(s);
    let base = loglog_slope(&b, t_lo, t_hi, &bt)?;
    let doubled = loglog_slope(&c, t_lo, t_hi, &bt)?;
    let diff = (base.slope - doubled.slope).abs();
    let report = ValidateReport {
        n_runs: s.n_runs,
        t_max: s.t_max,
        ks_statistic: ks.statistic,
        ks_critical_5: ks.critical_5,
        ks_critical_1: ks.critical_1,
        ks_pass: ks.statistic < ks.critical_1,
        window: w,
        slope_w: base.slope,
        slope_2w: doubled.slope,
        slope_diff: diff,
        ci_width: base.ci_width(),
        window_pass: diff < base.ci_width(),
        seed: s.seed,
        config_hash: s.config_hash(),
    };
    let passed = report.ks_pass && report.window_pass;
    let files = vec![out.path("config.txt"), out.json("validate.json", &report)?];
    Ok(Report {
        exit: if passed { 0 } else { 4 },
        files,
        message: format!(
            "KS {:.4} vs 1% critical {:.4}; slope W {:.4} vs 2W {:.4} (CI width {:.4}): {}",
            report.ks_statistic,
            report.ks_critical_1,
            report.slope_w,
            report.slope_2w,
            report.ci_width,
            if passed { "ok" } else { "FAILED" }
        ),
    })
}
