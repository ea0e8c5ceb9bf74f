//! Lyapunov observables over Caricature II event traces: the pre-adjustment
//! sums `L̃ₖ` and power sums `Q̃_{q,k}`, returns to the sublevel set
//! `{L̃ ≤ α}`, the regenerative speed ratio, the empirical drift of `Q̃_q`
//! outside the sublevel set, and the correlation inequality between power sums.
//!
//! Power sums are exact integers; overflow is reported, never wrapped.

use serde::{Deserialize, Serialize};

use crate::caricature::EventRecord;
use crate::error::{Error, Result};
use crate::stats::{bootstrap, percentile_ci, Bootstrap};

/// `Σ U[j] − 1`. Every coordinate must be at least 1.
pub fn l_tilde(u: &[i64]) -> Result<u64> {
    check_coordinates(u)?;
    Ok(u.iter().map(|&x| x as u64).sum::<u64>() - 1)
}

/// `Σ_j (U[j] − 1{j = r})^q` for `q ≥ 1`; `U[r]` must equal 1.
pub fn q_tilde(u: &[i64], r: usize, q: u32) -> Result<u128> {
    if q == 0 {
        return Err(Error::param("q", "power must be >= 1"));
    }
    let values = decremented(u, r)?;
    power_sum(&values, q)
}

fn check_coordinates(u: &[i64]) -> Result<()> {
    if u.is_empty() {
        return Err(Error::Invariant("empty state vector".into()));
    }
    if let Some((j, x)) = u.iter().enumerate().find(|(_, &x)| x < 1) {
        return Err(Error::Invariant(format!("coordinate {j} is {x} < 1")));
    }
    Ok(())
}

/// Values `U[j] − 1{j = r}` on which the power sums are taken.
pub fn decremented(u: &[i64], r: usize) -> Result<Vec<u64>> {
    check_coordinates(u)?;
    match u.get(r) {
        Some(1) => {}
        Some(x) => {
            return Err(Error::Invariant(format!(
                "jumping coordinate {r} was {x}, not 1, before the event"
            )))
        }
        None => return Err(Error::param("r", format!("index {r} out of range for J={}", u.len()))),
    }
    Ok(u.iter()
        .enumerate()
        .map(|(j, &x)| x as u64 - u64::from(j == r))
        .collect())
}

/// `Σ v^q` with `0^0 = 1`.
pub fn power_sum(values: &[u64], q: u32) -> Result<u128> {
    values.iter().try_fold(0u128, |acc, &v| {
        (v as u128)
            .checked_pow(q)
            .and_then(|p| acc.checked_add(p))
            .ok_or_else(|| Error::Invariant(format!("power sum overflow at q={q}")))
    })
}

/// Checks `(Q̃_{u−1}/J)(Q̃_{q−u}/J) ≤ Q̃_{q−1}/J` exactly, for `1 ≤ u ≤ q`.
pub fn fkg_check(state: &[i64], r: usize, q: u32, u: u32) -> Result<bool> {
    if !(1..=q).contains(&u) {
        return Err(Error::param("u", format!("need 1 <= u <= q, got u={u}, q={q}")));
    }
    let values = decremented(state, r)?;
    fkg_on_values(&values, q, u)
}

/// The same inequality on arbitrary nonnegative values.
pub fn fkg_on_values(values: &[u64], q: u32, u: u32) -> Result<bool> {
    let j = values.len() as u128;
    let lhs = power_sum(values, u - 1)?
        .checked_mul(power_sum(values, q - u)?)
        .ok_or_else(|| Error::Invariant("FKG product overflow".into()))?;
    let rhs = power_sum(values, q - 1)?
        .checked_mul(j)
        .ok_or_else(|| Error::Invariant("FKG product overflow".into()))?;
    Ok(lhs <= rhs)
}

/// Successive returns of `L̃ₖ` to `[0, α]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenSummary {
    pub alpha: u64,
    /// Event indices `ν₁ < ν₂ < ...`.
    pub nu: Vec<u64>,
    /// Times `τ_{νᵢ}`.
    pub tau_nu: Vec<f64>,
    pub cycle_len_mean: f64,
    pub cycle_len_var: f64,
    pub cycle_time_mean: f64,
    pub cycle_time_var: f64,
}

impl RegenSummary {
    /// Builds the summary from regeneration indices and times.
    pub fn from_regenerations(alpha: u64, nu: Vec<u64>, tau_nu: Vec<f64>) -> Result<Self> {
        if nu.len() != tau_nu.len() {
            return Err(Error::param("tau_nu", "length differs from nu"));
        }
        if nu.len() < 2 {
            return Err(Error::InsufficientCycles {
                found: nu.len().saturating_sub(1),
                needed: 1,
            });
        }
        let lens: Vec<f64> = nu.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let times: Vec<f64> = tau_nu.windows(2).map(|w| w[1] - w[0]).collect();
        let (cycle_len_mean, cycle_len_var) = mean_var(&lens);
        let (cycle_time_mean, cycle_time_var) = mean_var(&times);
        Ok(Self {
            alpha,
            nu,
            tau_nu,
            cycle_len_mean,
            cycle_len_var,
            cycle_time_mean,
            cycle_time_var,
        })
    }

    pub fn n_cycles(&self) -> usize {
        self.nu.len() - 1
    }

    /// Per-cycle `(νᵢ₊₁ − νᵢ, τ_{νᵢ₊₁} − τ_{νᵢ})`.
    pub fn cycles(&self) -> Vec<(f64, f64)> {
        self.nu
            .windows(2)
            .zip(self.tau_nu.windows(2))
            .map(|(n, t)| ((n[1] - n[0]) as f64, t[1] - t[0]))
            .collect()
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Scans a trace for the events with `L̃ₖ ≤ α`.
pub fn detect_regenerations(records: &[EventRecord], alpha: u64) -> Result<RegenSummary> {
    let (nu, tau_nu): (Vec<u64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.l_tilde <= alpha)
        .map(|r| (r.k, r.tau))
        .unzip();
    RegenSummary::from_regenerations(alpha, nu, tau_nu)
}

/// Ratio-of-means speed with a cycle-level bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub speed: f64,
    pub ci: (f64, f64),
    pub cycles: usize,
}

/// `mean(νᵢ₊₁ − νᵢ) / mean(τ_{νᵢ₊₁} − τ_{νᵢ})`; needs at least two cycles.
pub fn speed_estimate(summary: &RegenSummary, boot: &Bootstrap) -> Result<SpeedEstimate> {
    let cycles = summary.cycles();
    if cycles.len() < 2 {
        return Err(Error::InsufficientCycles {
            found: cycles.len(),
            needed: 2,
        });
    }
    let ratio = |cs: &[&(f64, f64)]| {
        let (events, time) = cs
            .iter()
            .fold((0.0, 0.0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
        (time > 0.0).then(|| events / time)
    };
    let all: Vec<&(f64, f64)> = cycles.iter().collect();
    let speed = ratio(&all).ok_or_else(|| Error::Invariant("zero total cycle time".into()))?;
    let reps = bootstrap(&cycles, boot, ratio);
    let ci = percentile_ci(reps, 0.95).unwrap_or((speed, speed));
    Ok(SpeedEstimate {
        speed,
        ci: (ci.0.min(speed), ci.1.max(speed)),
        cycles: cycles.len(),
    })
}

/// Mean one-step change of `Q̃_q` on events outside the sublevel set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub mean: f64,
    pub ci: (f64, f64),
    pub n_qualifying: usize,
    /// Independent resampling units (excursions above `α`, or single events).
    pub n_units: usize,
}

/// Fewer excursions than this and the bootstrap falls back to single increments.
const MIN_EXCURSIONS: usize = 20;

/// Average of `Q̃_{q,k+1} − Q̃_{q,k}` over `k` with `L̃ₖ > α`.
///
/// Consecutive qualifying events form one excursion above `α`; excursions
/// are the bootstrap resampling unit.
pub fn drift_estimate(records: &[EventRecord], alpha: u64, q: u32, boot: &Bootstrap) -> Result<DriftEstimate> {
    let q_values: Vec<i128> = records
        .iter()
        .map(|r| q_tilde(&r.u, r.r, q).map(|v| v as i128))
        .collect::<Result<_>>()?;
    let mut excursions: Vec<Vec<f64>> = Vec::new();
    let mut open = false;
    for (k, rec) in records.iter().enumerate().take(records.len().saturating_sub(1)) {
        if rec.l_tilde > alpha {
            let inc = (q_values[k + 1] - q_values[k]) as f64;
            if !open {
                excursions.push(Vec::new());
                open = true;
            }
            excursions.last_mut().expect("opened above").push(inc);
        } else {
            open = false;
        }
    }
    let n_qualifying: usize = excursions.iter().map(Vec::len).sum();
    if n_qualifying == 0 {
        return Err(Error::Empty(format!("no events with L̃ > {alpha} followed by another event")));
    }
    let mean = excursions.iter().flatten().sum::<f64>() / n_qualifying as f64;
    let units: Vec<Vec<f64>> = if excursions.len() >= MIN_EXCURSIONS {
        excursions
    } else {
        excursions.into_iter().flatten().map(|x| vec![x]).collect()
    };
    let stat = |us: &[&Vec<f64>]| {
        let (sum, count) = us
            .iter()
            .fold((0.0, 0usize), |acc, u| (acc.0 + u.iter().sum::<f64>(), acc.1 + u.len()));
        (count > 0).then(|| sum / count as f64)
    };
    let reps = bootstrap(&units, boot, stat);
    let ci = percentile_ci(reps, 0.95).unwrap_or((mean, mean));
    Ok(DriftEstimate {
        mean,
        ci: (ci.0.min(mean), ci.1.max(mean)),
        n_qualifying,
        n_units: units.len(),
    })
}

/// Count of `(event, u)` pairs where the correlation inequality fails at power `q`.
pub fn fkg_violations(records: &[EventRecord], q: u32) -> Result<usize> {
    let mut violations = 0;
    for rec in records {
        let values = decremented(&rec.u, rec.r)?;
        for u in 1..=q {
            if !fkg_on_values(&values, q, u)? {
                violations += 1;
            }
        }
    }
    Ok(violations)
}

/// One row of the diagnostics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub alpha: u64,
    pub q: u32,
    pub n_events: usize,
    pub n_cycles: usize,
    pub speed: Option<f64>,
    pub speed_ci: Option<(f64, f64)>,
    pub drift_mean: Option<f64>,
    pub drift_ci: Option<(f64, f64)>,
    pub drift_events: usize,
    pub fkg_violations: usize,
    /// Why speed or drift are missing, if they are.
    pub notes: Vec<String>,
}

/// All observables for one `(α, q)` pair; missing estimates are explained in `notes`.
pub fn diagnose(records: &[EventRecord], alpha: u64, q: u32, boot: &Bootstrap) -> Result<Diagnostics> {
    let mut notes = Vec::new();
    let regen = detect_regenerations(records, alpha);
    let n_cycles = regen.as_ref().map(|r| r.n_cycles()).unwrap_or(0);
    let speed = match regen.as_ref().map_err(Clone::clone).and_then(|r| speed_estimate(r, boot)) {
        Ok(s) => Some(s),
        Err(e @ Error::InsufficientCycles { .. }) => {
            notes.push(e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    let drift = match drift_estimate(records, alpha, q, boot) {
        Ok(d) => Some(d),
        Err(e @ Error::Empty(_)) => {
            notes.push(e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    Ok(Diagnostics {
        alpha,
        q,
        n_events: records.len(),
        n_cycles,
        speed: speed.map(|s| s.speed),
        speed_ci: speed.map(|s| s.ci),
        drift_mean: drift.map(|d| d.mean),
        drift_ci: drift.map(|d| d.ci),
        drift_events: drift.map(|d| d.n_qualifying).unwrap_or(0),
        fkg_violations: fkg_violations(records, q)?,
        notes,
    })
}
