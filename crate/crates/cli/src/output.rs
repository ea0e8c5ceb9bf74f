//! Plot-ready CSV and JSON files. Every CSV starts with a provenance line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dla1d::caricature::EventRecord;
use dla1d::dla::Trajectory;
use dla1d::Summary;
use serde::Serialize;

use crate::CliError;

/// `%.9g`-style formatting: nine significant digits, trailing zeros dropped.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        // Rounding can carry into a new digit (9.99999999e8 style); re-check.
        if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() <= 9 {
            return s;
        }
    }
    let s = format!("{x:.8e}");
    let (mantissa, exponent) = s.split_once('e').expect("scientific format");
    let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
    let e: i32 = exponent.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

/// Writes files into one directory and nowhere else.
pub struct OutputDir {
    root: PathBuf,
    header: String,
}

impl OutputDir {
    pub fn create(root: &Path, seed: u64, config_hash: &str) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            header: format!("# seed={seed} config_hash={config_hash}\n"),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        debug_assert!(!name.contains('/') && !name.contains(".."));
        self.root.join(name)
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, body).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        Ok(p)
    }

    /// CSV with the provenance line and a column header.
    pub fn csv(&self, name: &str, columns: &str, rows: &str) -> Result<PathBuf, CliError> {
        self.write(name, &format!("{}{columns}\n{rows}", self.header))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let body = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        self.write(name, &format!("{body}\n"))
    }

    /// The canonical settings echo, loadable with `--config`.
    pub fn echo(&self, canonical: &str) -> Result<PathBuf, CliError> {
        self.write("config.txt", &format!("{}{canonical}", self.header))
    }
}

pub fn trajectory_rows(run_id: u64, traj: &Trajectory) -> String {
    let mut s = String::new();
    for c in &traj.checkpoints {
        let _ = writeln!(s, "{run_id},{},{}", fmt_g(c.t), c.front);
    }
    s
}

pub fn tau_rows(taus: &[f64]) -> String {
    let mut s = String::new();
    for (k, t) in taus.iter().enumerate() {
        let _ = writeln!(s, "{},{}", k + 1, fmt_g(*t));
    }
    s
}

pub fn summary_rows(summary: &Summary) -> String {
    let mut s = String::new();
    for j in 0..summary.times.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_g(summary.times[j]),
            fmt_g(summary.mean[j]),
            fmt_g(summary.var[j]),
            summary.n[j]
        );
    }
    s
}

pub fn runs_rows(summary: &Summary) -> String {
    let mut s = String::new();
    for run in &summary.runs {
        for (t, f) in summary.times.iter().zip(&run.fronts) {
            let _ = writeln!(s, "{},{},{f}", run.run_id, fmt_g(*t));
        }
    }
    s
}

pub fn events_columns(q_list: &[u32]) -> String {
    let qs: Vec<String> = q_list.iter().map(|q| format!("Qtilde_q{q}")).collect();
    format!("k,tau,r,Ltilde,{},in_lambda", qs.join(","))
}

/// `r` is written 1-based.
pub fn events_rows(records: &[EventRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let qs: Vec<String> = r.q_tilde.iter().map(u128::to_string).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.k,
            fmt_g(r.tau),
            r.r + 1,
            r.l_tilde,
            qs.join(","),
            u8::from(r.in_lambda)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_formatting() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(10000.0), "10000");
        assert_eq!(fmt_g(10f64.powf(0.1)), "1.25892541");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g(123456789.0), "123456789");
        assert_eq!(fmt_g(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_g(1.5e-7), "1.5e-07");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(999999999.7), "1e+09");
        assert_eq!(fmt_g(0.00001234), "1.234e-05");
        assert_eq!(fmt_g(0.0001234), "0.0001234");
    }

    #[test]
    fn g_formatting_round_trips_grid_times() {
        for t in dla1d::dla::CheckpointGrid::default().times(1e4) {
            let back: f64 = fmt_g(t).parse().unwrap();
            assert!((back - t).abs() <= 1e-8 * t);
        }
    }

    #[test]
    fn events_header() {
        assert_eq!(events_columns(&[1, 2]), "k,tau,r,Ltilde,Qtilde_q1,Qtilde_q2,in_lambda");
    }
}
