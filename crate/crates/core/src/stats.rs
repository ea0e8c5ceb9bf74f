//! Ensembles of independent runs and the estimators applied to them.
//!
//! Per-checkpoint aggregates are computed from exact integer sums, so the
//! summary does not depend on the order in which runs finish.
//! Estimators are generic over the float type `F`.

use num_traits::{Float, FromPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dla::Trajectory;
use crate::error::{Error, Result};
use crate::rng::{substream, RandomStream};

/// Stream id reserved for bootstrap resampling, far from any run id.
const BOOTSTRAP_STREAM: u64 = u64::MAX - 1;

/// Bootstrap settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 0,
        }
    }
}

/// Statistic values over resamples-with-replacement of `data`.
/// Resamples on which `stat` returns `None` are skipped.
pub fn bootstrap<T, F>(data: &[T], boot: &Bootstrap, mut stat: impl FnMut(&[&T]) -> Option<F>) -> Vec<F> {
    if data.is_empty() {
        return Vec::new();
    }
    let mut stream = RandomStream::new(boot.seed, BOOTSTRAP_STREAM);
    let mut picks: Vec<&T> = Vec::with_capacity(data.len());
    let mut out = Vec::with_capacity(boot.replicates);
    for _ in 0..boot.replicates {
        picks.clear();
        picks.extend((0..data.len()).map(|_| &data[stream.index(data.len())]));
        if let Some(v) = stat(&picks) {
            out.push(v);
        }
    }
    out
}

/// Central percentile interval at `level`; `None` for no finite values.
pub fn percentile_ci<F: Float>(mut values: Vec<F>, level: F) -> Option<(F, F)> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    let tail = (F::one() - level) / (F::one() + F::one());
    let at = |p: F| {
        let idx = (p * F::from(n - 1).expect("usize fits")).round();
        values[idx.to_usize().unwrap_or(0).min(n - 1)]
    };
    Some((at(tail), at(F::one() - tail)))
}

/// Least-squares line `y = slope·x + intercept`.
pub fn ols<F: Float>(x: &[F], y: &[F]) -> Option<(F, F)> {
    let n = F::from(x.len())?;
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = x.iter().fold(F::zero(), |a, &v| a + v) / n;
    let my = y.iter().fold(F::zero(), |a, &v| a + v) / n;
    let (sxy, sxx) = x
        .iter()
        .zip(y)
        .fold((F::zero(), F::zero()), |(sxy, sxx), (&a, &b)| {
            (sxy + (a - mx) * (b - my), sxx + (a - mx) * (a - mx))
        });
    if sxx <= F::zero() {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Front values of one completed run at every checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunValues {
    pub run_id: u64,
    pub fronts: Vec<u64>,
}

/// Across-run statistics of `R` at each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary<F> {
    pub times: Vec<f64>,
    pub mean: Vec<F>,
    /// Unbiased sample variance; zero for a single run.
    pub var: Vec<F>,
    pub n: Vec<usize>,
    /// Completed runs, sorted by id.
    pub runs: Vec<RunValues>,
    /// `(run_id, cause)` of runs excluded for resource exhaustion.
    pub aborted: Vec<(u64, String)>,
    pub seed: u64,
    pub config_echo: String,
}

impl<F: Float + FromPrimitive> EnsembleSummary<F> {
    /// Aggregates completed runs; they may arrive in any order.
    pub fn from_runs(
        times: Vec<f64>,
        mut runs: Vec<RunValues>,
        mut aborted: Vec<(u64, String)>,
        seed: u64,
        config_echo: String,
    ) -> Result<Self> {
        if runs.is_empty() {
            aborted.sort();
            return Err(Error::Ensemble { causes: aborted });
        }
        if let Some(r) = runs.iter().find(|r| r.fronts.len() != times.len()) {
            return Err(Error::Invariant(format!(
                "run {} has {} checkpoints, expected {}",
                r.run_id,
                r.fronts.len(),
                times.len()
            )));
        }
        runs.sort_by_key(|r| r.run_id);
        aborted.sort();
        let n = runs.len();
        let (mut mean, mut var) = (Vec::with_capacity(times.len()), Vec::with_capacity(times.len()));
        for j in 0..times.len() {
            let (s1, s2) = runs.iter().fold((0u128, 0u128), |(s1, s2), r| {
                let v = r.fronts[j] as u128;
                (s1 + v, s2 + v * v)
            });
            mean.push(ratio::<F>(s1, n as u128));
            var.push(if n > 1 {
                // n·Σv² − (Σv)² ≥ 0 exactly.
                ratio::<F>(n as u128 * s2 - s1 * s1, (n * (n - 1)) as u128)
            } else {
                F::zero()
            });
        }
        Ok(Self {
            n: vec![n; times.len()],
            times,
            mean,
            var,
            runs,
            aborted,
            seed,
            config_echo,
        })
    }
}

fn ratio<F: Float + FromPrimitive>(num: u128, den: u128) -> F {
    // Split off the integer part so large sums keep full precision.
    let whole = F::from_u128(num / den).expect("representable");
    let frac = F::from_u128(num % den).expect("representable") / F::from_u128(den).expect("representable");
    whole + frac
}

impl<F: Float> EnsembleSummary<F> {
    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    /// Indices of checkpoints with `t_lo ≤ t ≤ t_hi`, up to relative 1e-9.
    pub fn window_indices(&self, t_lo: f64, t_hi: f64) -> Vec<usize> {
        let tol = 1e-9;
        (0..self.times.len())
            .filter(|&j| {
                let t = self.times[j];
                t >= t_lo * (1.0 - tol) && t <= t_hi * (1.0 + tol)
            })
            .collect()
    }

    /// Terminal front of every completed run.
    pub fn terminal(&self) -> Vec<u64> {
        self.runs.iter().filter_map(|r| r.fronts.last().copied()).collect()
    }
}

/// Runs `run_one` on `n_runs` substreams of `master_seed` in parallel.
///
/// Runs ending in window or red exhaustion are excluded and listed; any
/// other error aborts the ensemble.
pub fn ensemble_run<F, R>(n_runs: u64, master_seed: u64, config_echo: String, run_one: R) -> Result<EnsembleSummary<F>>
where
    F: Float + FromPrimitive,
    R: Fn(RandomStream) -> Result<Trajectory> + Sync,
{
    if n_runs == 0 {
        return Err(Error::param("n_runs", "need at least one run"));
    }
    let results: Vec<(u64, Result<Trajectory>)> = (0..n_runs)
        .into_par_iter()
        .map(|id| (id, run_one(substream(master_seed, id))))
        .collect();
    let mut times: Option<Vec<f64>> = None;
    let mut runs = Vec::new();
    let mut aborted = Vec::new();
    for (run_id, res) in results {
        match res {
            Ok(traj) => {
                let t = traj.times();
                match &times {
                    None => times = Some(t),
                    Some(prev) if *prev != t => {
                        return Err(Error::Invariant(format!("run {run_id} used a different checkpoint grid")))
                    }
                    Some(_) => {}
                }
                runs.push(RunValues {
                    run_id,
                    fronts: traj.fronts(),
                });
            }
            Err(e) if e.is_resource_exhaustion() => aborted.push((run_id, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    EnsembleSummary::from_runs(times.unwrap_or_default(), runs, aborted, master_seed, config_echo)
}

/// Growth exponent from a log-log fit of the mean front.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate<F> {
    pub slope: F,
    pub intercept: F,
    pub ci_lo: F,
    pub ci_hi: F,
    pub t_lo: f64,
    pub t_hi: f64,
    pub n_points: usize,
    pub n_runs: usize,
}

impl<F: Float> SlopeEstimate<F> {
    pub fn ci_width(&self) -> F {
        self.ci_hi - self.ci_lo
    }
}

/// OLS of `ln(mean R)` on `ln t` over checkpoints in `[t_lo, t_hi]`, with
/// a bootstrap interval from resampling whole runs.
pub fn loglog_slope<F: Float + FromPrimitive>(
    summary: &EnsembleSummary<F>,
    t_lo: f64,
    t_hi: f64,
    boot: &Bootstrap,
) -> Result<SlopeEstimate<F>> {
    if !(t_lo > 0.0 && t_lo < t_hi) {
        return Err(Error::param("t_lo", format!("need 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")));
    }
    let idx = summary.window_indices(t_lo, t_hi);
    if idx.len() < 3 {
        return Err(Error::FitDomain(format!(
            "{} checkpoints in [{t_lo}, {t_hi}], need at least 3",
            idx.len()
        )));
    }
    let x: Vec<F> = idx
        .iter()
        .map(|&j| F::from_f64(summary.times[j].ln()).expect("finite"))
        .collect();
    let fit = |means: &[F]| -> Option<(F, F)> {
        if means.iter().any(|&m| m <= F::zero()) {
            return None;
        }
        let y: Vec<F> = means.iter().map(|m| m.ln()).collect();
        ols(&x, &y)
    };
    let means: Vec<F> = idx.iter().map(|&j| summary.mean[j]).collect();
    let (slope, intercept) = fit(&means).ok_or_else(|| {
        Error::FitDomain(format!("mean front is zero somewhere in [{t_lo}, {t_hi}]"))
    })?;
    let reps = bootstrap(&summary.runs, boot, |sample| {
        let n = sample.len() as u128;
        let m: Vec<F> = idx
            .iter()
            .map(|&j| ratio::<F>(sample.iter().map(|r| r.fronts[j] as u128).sum(), n))
            .collect();
        fit(&m).map(|(s, _)| s)
    });
    let level = F::from_f64(0.95).expect("constant");
    let (lo, hi) = percentile_ci(reps, level).unwrap_or((slope, slope));
    Ok(SlopeEstimate {
        slope,
        intercept,
        ci_lo: lo.min(slope),
        ci_hi: hi.max(slope),
        t_lo,
        t_hi,
        n_points: idx.len(),
        n_runs: summary.n_runs(),
    })
}

/// `P{R(t) ≥ x√t}` at one checkpoint with a 95% Wilson interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint<F> {
    pub t: f64,
    pub prob: F,
    pub ci_lo: F,
    pub ci_hi: F,
    pub n: usize,
}

/// Wilson score interval for `k` successes in `n` trials, `z = 1.96`.
pub fn wilson<F: Float + FromPrimitive>(k: usize, n: usize) -> (F, F) {
    let z = F::from_f64(1.96).expect("constant");
    let n_f = F::from_usize(n).expect("usize");
    let p = F::from_usize(k).expect("usize") / n_f;
    let two = F::one() + F::one();
    let four = two + two;
    let z2 = z * z;
    let denom = F::one() + z2 / n_f;
    let center = (p + z2 / (two * n_f)) / denom;
    let half = z * (p * (F::one() - p) / n_f + z2 / (four * n_f * n_f)).sqrt() / denom;
    ((center - half).max(F::zero()), (center + half).min(F::one()))
}

/// Fraction of runs with `R(t) ≥ x√t`, at every checkpoint.
pub fn tail_prob<F: Float + FromPrimitive>(summary: &EnsembleSummary<F>, x: f64) -> Vec<TailPoint<F>> {
    let n = summary.n_runs();
    summary
        .times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let threshold = x * t.sqrt();
            let k = summary
                .runs
                .iter()
                .filter(|r| r.fronts[j] as f64 >= threshold)
                .count();
            let (ci_lo, ci_hi) = wilson(k, n);
            TailPoint {
                t,
                prob: F::from_usize(k).expect("usize") / F::from_usize(n).expect("usize"),
                ci_lo,
                ci_hi,
                n,
            }
        })
        .collect()
}

/// A `(run, checkpoint)` pair above the linear bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub run_id: u64,
    pub t: f64,
    pub front: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport<F> {
    pub c1: f64,
    pub t_min: f64,
    pub pairs: usize,
    pub fraction: F,
    pub exceedances: Vec<Exceedance>,
}

/// Pairs with `t ≥ t_min` and `R(t) > c1·t`.
pub fn bound_check<F: Float + FromPrimitive>(
    summary: &EnsembleSummary<F>,
    c1: f64,
    t_min: f64,
) -> Result<BoundReport<F>> {
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(Error::param("C1", format!("must be > 0, got {c1}")));
    }
    let cols: Vec<usize> = (0..summary.times.len())
        .filter(|&j| summary.times[j] >= t_min)
        .collect();
    let mut exceedances = Vec::new();
    for run in &summary.runs {
        for &j in &cols {
            let t = summary.times[j];
            if run.fronts[j] as f64 > c1 * t {
                exceedances.push(Exceedance {
                    run_id: run.run_id,
                    t,
                    front: run.fronts[j],
                });
            }
        }
    }
    let pairs = cols.len() * summary.n_runs();
    let fraction = if pairs == 0 {
        F::zero()
    } else {
        F::from_usize(exceedances.len()).expect("usize") / F::from_usize(pairs).expect("usize")
    };
    Ok(BoundReport {
        c1,
        t_min,
        pairs,
        fraction,
        exceedances,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic with asymptotic critical values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult<F> {
    pub statistic: F,
    pub critical_5: F,
    pub critical_1: F,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two-sample KS distance; ties are handled by stepping both ECDFs past each value.
pub fn ks_distance<T, F>(a: &[T], b: &[T]) -> Result<KsResult<F>>
where
    T: PartialOrd + Copy,
    F: Float + FromPrimitive,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("sample", "KS needs two nonempty samples"));
    }
    let sorted = |s: &[T]| -> Result<Vec<T>> {
        if s.iter().any(|v| v.partial_cmp(v).is_none()) {
            return Err(Error::param("sample", "unordered value (NaN) in sample"));
        }
        let mut v = s.to_vec();
        v.sort_by(|x, y| x.partial_cmp(y).expect("checked above"));
        Ok(v)
    };
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let scale = ((n + m) as f64 / (n * m) as f64).sqrt();
    let f = |v: f64| F::from_f64(v).expect("finite");
    Ok(KsResult {
        statistic: f(d),
        critical_5: f(1.358 * scale),
        critical_1: f(1.628 * scale),
        n_a: n,
        n_b: m,
    })
}
