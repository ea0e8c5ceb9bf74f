//! Seeded, splittable randomness and the samplers the dynamics need.
//!
//! Every run owns one [`RandomStream`]: a ChaCha8 generator keyed by the
//! master seed and positioned on its own 64-bit stream, so runs can be
//! created on any thread in any order and still reproduce bit-exactly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Means below this use sequential inversion, above it transformed rejection.
const POISSON_INVERSION_LIMIT: f64 = 10.0;

/// A single-owner random stream identified by `(master_seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RandomStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

/// Serializable position of a [`RandomStream`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub master_seed: u64,
    pub stream_id: u64,
    pub word_pos: u128,
}

/// The stream for run `run_id` under `master_seed`.
pub fn substream(master_seed: u64, run_id: u64) -> RandomStream {
    RandomStream::new(master_seed, run_id)
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn snapshot(&self) -> StreamState {
        StreamState {
            master_seed: self.master_seed,
            stream_id: self.stream_id,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(state: &StreamState) -> Self {
        let mut s = Self::new(state.master_seed, state.stream_id);
        s.rng.set_word_pos(state.word_pos);
        s
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`. `n` must be positive.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Bernoulli trial with success probability `p`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Exponential waiting time with the given rate.
    pub fn exp_sample(&mut self, rate: f64) -> Result<f64> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::param("rate", format!("must be finite and > 0, got {rate}")));
        }
        Ok(self.exp_unchecked(rate))
    }

    /// Exponential sample without validating `rate`; strictly positive.
    #[inline]
    pub(crate) fn exp_unchecked(&mut self, rate: f64) -> f64 {
        -self.uniform_open0().ln() / rate
    }

    /// Poisson count with the given mean.
    pub fn poisson_sample(&mut self, mean: f64) -> Result<u64> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Error::param("mean", format!("must be finite and >= 0, got {mean}")));
        }
        Ok(self.poisson_unchecked(mean))
    }

    pub(crate) fn poisson_unchecked(&mut self, mean: f64) -> u64 {
        if mean == 0.0 {
            0
        } else if mean < POISSON_INVERSION_LIMIT {
            self.poisson_inversion(mean)
        } else {
            self.poisson_ptrs(mean)
        }
    }

    fn poisson_inversion(&mut self, mean: f64) -> u64 {
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u >= cdf {
            k += 1;
            p *= mean / k as f64;
            let next = cdf + p;
            if next == cdf {
                // Underflowed tail; u sits in the last representable gap.
                break;
            }
            cdf = next;
        }
        k
    }

    /// Hörmann's transformed rejection with squeeze (PTRS), valid for mean >= 10.
    fn poisson_ptrs(&mut self, mean: f64) -> u64 {
        let smu = mean.sqrt();
        let b = 0.931 + 2.53 * smu;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let v_r = 0.9277 - 3.6224 / (b - 2.0);
        let ln_mean = mean.ln();
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform_open0();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
            if us >= 0.07 && v <= v_r {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
            let rhs = -mean + k * ln_mean - ln_factorial(k as u64);
            if lhs <= rhs {
                return k as u64;
            }
        }
    }

    /// Net displacement of a rate-`d` walk over `delta` time units whose
    /// jumps are +1 with probability `p_plus`.
    pub fn displacement_sample(&mut self, d: f64, delta: f64, p_plus: f64) -> Result<i64> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::param("D", format!("must be finite and > 0, got {d}")));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::param("delta", format!("must be finite and >= 0, got {delta}")));
        }
        if !(0.0..=1.0).contains(&p_plus) {
            return Err(Error::param("p_plus", format!("must lie in [0, 1], got {p_plus}")));
        }
        Ok(self.displacement_unchecked(d, delta, p_plus))
    }

    pub(crate) fn displacement_unchecked(&mut self, d: f64, delta: f64, p_plus: f64) -> i64 {
        let jumps = self.poisson_unchecked(d * delta);
        if jumps == 0 {
            return 0;
        }
        let ups = if p_plus >= 1.0 {
            jumps
        } else if p_plus <= 0.0 {
            0
        } else {
            Binomial::new(jumps, p_plus)
                .expect("binomial parameters validated")
                .sample(&mut self.rng)
        };
        2 * ups as i64 - jumps as i64
    }

    /// Draw from the adjustment law `spec`; always >= 1.
    pub fn g_sample(&mut self, spec: &GSpec) -> u64 {
        match spec {
            GSpec::Constant(v) => *v,
            GSpec::Geometric { p } => {
                if *p >= 1.0 {
                    1
                } else {
                    let u = self.uniform_open0();
                    1 + (u.ln() / (1.0 - p).ln()).floor() as u64
                }
            }
            GSpec::ZetaTruncated { cdf, .. } => {
                let u = self.uniform();
                cdf.partition_point(|&c| c <= u) as u64 + 1
            }
        }
    }
}

/// `ln(k!)`: exact summation for small `k`, Stirling series otherwise.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let n = k as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    (n + 0.5) * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Law of the adjustment offsets `Y` on `{1, 2, ...}`.
#[derive(Clone, Debug, PartialEq)]
pub enum GSpec {
    /// Point mass at the given value.
    Constant(u64),
    /// `P(Y = n) = p (1-p)^(n-1)`.
    Geometric { p: f64 },
    /// `P(Y = n) ∝ n^(-exponent)` for `n = 1..=max`.
    ZetaTruncated {
        exponent: f64,
        max: u64,
        cdf: Vec<f64>,
    },
}

impl GSpec {
    pub fn constant(value: u64) -> Result<Self> {
        if value == 0 {
            return Err(Error::Config("constant G must be >= 1".into()));
        }
        Ok(GSpec::Constant(value))
    }

    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!("geometric G needs 0 < p <= 1, got {p}")));
        }
        Ok(GSpec::Geometric { p })
    }

    pub fn zeta_truncated(exponent: f64, max: u64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) || max == 0 {
            return Err(Error::Config(format!(
                "zeta-truncated G needs exponent > 0 and max >= 1, got ({exponent}, {max})"
            )));
        }
        if max > 10_000_000 {
            return Err(Error::Config("zeta-truncated max too large for a CDF table".into()));
        }
        let weights: Vec<f64> = (1..=max).map(|n| (n as f64).powf(-exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        // Guard the last bucket against rounding below 1.
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        Ok(GSpec::ZetaTruncated { exponent, max, cdf })
    }

    /// Parse `family` (`constant`, `geometric`, `zeta-truncated`) with its parameters.
    pub fn from_parts(family: &str, params: &[f64]) -> Result<Self> {
        let need = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "G family `{family}` takes {n} parameter(s), got {}",
                    params.len()
                )))
            }
        };
        match family {
            "constant" => {
                need(1)?;
                let v = params[0];
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(Error::Config(format!("constant G must be an integer >= 1, got {v}")));
                }
                Self::constant(v as u64)
            }
            "geometric" => {
                need(1)?;
                Self::geometric(params[0])
            }
            "zeta-truncated" => {
                need(2)?;
                let m = params[1];
                if m.fract() != 0.0 || m < 1.0 {
                    return Err(Error::Config(format!("zeta-truncated max must be an integer >= 1, got {m}")));
                }
                Self::zeta_truncated(params[0], m as u64)
            }
            other => Err(Error::Config(format!("unknown G family `{other}`"))),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            GSpec::Constant(_) => "constant",
            GSpec::Geometric { .. } => "geometric",
            GSpec::ZetaTruncated { .. } => "zeta-truncated",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            GSpec::Constant(v) => vec![*v as f64],
            GSpec::Geometric { p } => vec![*p],
            GSpec::ZetaTruncated { exponent, max, .. } => vec![*exponent, *max as f64],
        }
    }

    /// `E[Y^k]`, summed numerically for the unbounded geometric law.
    pub fn moment(&self, k: i32) -> f64 {
        match self {
            GSpec::Constant(v) => (*v as f64).powi(k),
            GSpec::Geometric { p } => {
                if *p >= 1.0 {
                    return 1.0;
                }
                let q = 1.0 - p;
                let mut sum = 0.0;
                let mut weight = *p;
                let mut n = 1.0f64;
                loop {
                    let term = n.powi(k) * weight;
                    sum += term;
                    if term < sum * 1e-17 && n > 10.0 {
                        break sum;
                    }
                    weight *= q;
                    n += 1.0;
                }
            }
            GSpec::ZetaTruncated { exponent, max, .. } => {
                let norm: f64 = (1..=*max).map(|n| (n as f64).powf(-exponent)).sum();
                (1..=*max)
                    .map(|n| (n as f64).powi(k) * (n as f64).powf(-exponent))
                    .sum::<f64>()
                    / norm
            }
        }
    }

    /// Validates the support and the finite tenth moment the Lyapunov argument needs.
    pub fn validate(&self) -> Result<()> {
        let m10 = self.moment(10);
        if !m10.is_finite() {
            return Err(Error::Config(format!("G has infinite 10th moment ({m10})")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn exp_mean_matches_inverse_rate() {
        let mut s = substream(1, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| s.exp_sample(2.0).unwrap()).collect();
        let (m, _) = mean_var(&xs);
        assert!((m - 0.5).abs() < 0.01, "mean {m}");
        assert!(xs.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn exp_golden_value() {
        // Frozen from the first build of this generator; must replay bit-exactly.
        let mut s = substream(42, 0);
        let x = s.exp_sample(1.0).unwrap();
        assert_eq!(x.to_bits(), EXP_GOLDEN_BITS, "got {x:e} ({:#x})", x.to_bits());
    }
    const EXP_GOLDEN_BITS: u64 = 0x3fd8_8112_11f5_f3e3;

    #[test]
    fn exp_rejects_bad_rates() {
        let mut s = substream(0, 0);
        assert!(matches!(s.exp_sample(0.0), Err(Error::Parameter { .. })));
        assert!(s.exp_sample(-1.0).is_err());
        assert!(s.exp_sample(f64::NAN).is_err());
        assert!(s.exp_sample(f64::INFINITY).is_err());
    }

    #[test]
    fn exp_is_memoryless() {
        let mut s = substream(3, 0);
        let n = 100_000;
        let (a, b) = (0.5, 0.7);
        let xs: Vec<f64> = (0..n).map(|_| s.exp_sample(1.0).unwrap()).collect();
        let beyond_a = xs.iter().filter(|&&x| x > a).count();
        let beyond_ab = xs.iter().filter(|&&x| x > a + b).count();
        let beyond_b = xs.iter().filter(|&&x| x > b).count();
        let cond = beyond_ab as f64 / beyond_a as f64;
        let uncond = beyond_b as f64 / n as f64;
        let sigma = (uncond * (1.0 - uncond) / beyond_a as f64).sqrt()
            + (uncond * (1.0 - uncond) / n as f64).sqrt();
        assert!((cond - uncond).abs() < 3.0 * sigma, "{cond} vs {uncond}");
    }

    #[test]
    fn poisson_degenerate_and_errors() {
        let mut s = substream(0, 0);
        assert!((0..1000).all(|_| s.poisson_sample(0.0).unwrap() == 0));
        assert!(s.poisson_sample(-0.5).is_err());
        assert!(s.poisson_sample(f64::NAN).is_err());
    }

    #[test]
    fn poisson_small_mean_moments() {
        let mut s = substream(5, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| s.poisson_sample(0.5).unwrap() as f64).collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 0.5).abs() < 0.01, "mean {m}");
        assert!((v - 0.5).abs() < 0.02, "var {v}");
    }

    #[test]
    fn poisson_rejection_branch_matches_pmf() {
        // Chi-square against the exact pmf, mean 37 (rejection branch).
        let mean = 37.0;
        let n = 200_000;
        let mut s = substream(6, 0);
        let mut counts = vec![0u64; 100];
        for _ in 0..n {
            let k = s.poisson_sample(mean).unwrap() as usize;
            counts[k.min(99)] += 1;
        }
        let pmf = |k: u64| (-mean + k as f64 * mean.ln() - ln_factorial(k)).exp();
        // Bins 20..=55 individually, tails lumped.
        let mut chi2 = 0.0;
        let mut bins = 0;
        let low: f64 = (0..20).map(pmf).sum();
        let high = 1.0 - (0..=55).map(pmf).sum::<f64>();
        let obs_low: u64 = counts[..20].iter().sum();
        let obs_high: u64 = counts[56..].iter().sum();
        for (p, o) in [(low, obs_low), (high, obs_high)] {
            let e = p * n as f64;
            chi2 += (o as f64 - e).powi(2) / e;
            bins += 1;
        }
        for k in 20..=55u64 {
            let e = pmf(k) * n as f64;
            chi2 += (counts[k as usize] as f64 - e).powi(2) / e;
            bins += 1;
        }
        // 38 bins, 37 dof; 1% critical value 59.89.
        assert_eq!(bins, 38);
        assert!(chi2 < 59.89, "chi2 {chi2}");
    }

    #[test]
    fn ln_factorial_agrees_with_direct_sum() {
        for k in [0u64, 1, 5, 15, 16, 17, 40, 200] {
            let direct: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
            assert!((ln_factorial(k) - direct).abs() < 1e-9 * direct.max(1.0), "k={k}");
        }
    }

    #[test]
    fn displacement_zero_time_is_zero() {
        let mut s = substream(0, 0);
        assert!((0..1000).all(|_| s.displacement_sample(1.0, 0.0, 0.5).unwrap() == 0));
        assert!(s.displacement_sample(1.0, -1.0, 0.5).is_err());
        assert!(s.displacement_sample(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn displacement_symmetric_variance() {
        let mut s = substream(7, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| s.displacement_sample(1.0, 10.0, 0.5).unwrap() as f64)
            .collect();
        let (_, v) = mean_var(&xs);
        assert!((v - 10.0).abs() < 0.3, "var {v}");
    }

    #[test]
    fn displacement_all_up_counts_jumps() {
        let mut s = substream(8, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| s.displacement_sample(1.0, 5.0, 1.0).unwrap() as f64)
            .collect();
        let (m, _) = mean_var(&xs);
        assert!((m - 5.0).abs() < 0.1, "mean {m}");
        assert!(xs.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn g_constant_and_support() {
        let mut s = substream(0, 0);
        let c = GSpec::constant(3).unwrap();
        assert!((0..100).all(|_| s.g_sample(&c) == 3));
        let z = GSpec::zeta_truncated(2.0, 50).unwrap();
        let g = GSpec::geometric(0.3).unwrap();
        for _ in 0..10_000 {
            let y = s.g_sample(&z);
            assert!((1..=50).contains(&y));
            assert!(s.g_sample(&g) >= 1);
        }
    }

    #[test]
    fn g_geometric_mean() {
        let mut s = substream(9, 0);
        let g = GSpec::geometric(0.5).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| s.g_sample(&g) as f64).collect();
        let (m, _) = mean_var(&xs);
        assert!((m - 2.0).abs() < 0.05, "mean {m}");
    }

    #[test]
    fn g_spec_validation() {
        assert!(GSpec::constant(0).is_err());
        assert!(GSpec::geometric(0.0).is_err());
        assert!(GSpec::geometric(1.5).is_err());
        assert!(GSpec::from_parts("pareto", &[1.0]).is_err());
        assert!(GSpec::from_parts("geometric", &[0.5, 2.0]).is_err());
        assert!(GSpec::from_parts("constant", &[2.5]).is_err());
        let g = GSpec::from_parts("geometric", &[0.5]).unwrap();
        g.validate().unwrap();
        // Geometric(1/2): E[Y] = 2, E[Y^2] = (2 - p) / p^2 = 6.
        assert!((g.moment(1) - 2.0).abs() < 1e-12);
        assert!((g.moment(2) - 6.0).abs() < 1e-10);
        assert!(g.moment(10).is_finite());
    }

    #[test]
    fn substream_determinism_and_restore() {
        let mut a = substream(11, 4);
        let mut b = substream(11, 4);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let snap = a.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let mut c = RandomStream::restore(&serde_json::from_str(&json).unwrap());
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), c.next_u64());
        }
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let mut a = substream(12, 0);
        let mut b = substream(12, 1);
        let n = 100_000;
        let pairs: Vec<(f64, f64)> = (0..n).map(|_| (a.uniform(), b.uniform())).collect();
        let (ma, mb) = pairs
            .iter()
            .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        let (ma, mb) = (ma / n as f64, mb / n as f64);
        let cov: f64 = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n as f64;
        let corr = cov / (1.0 / 12.0);
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn displacement_is_additive_in_time() {
        let mut s = substream(12, 0);
        let split: Vec<i64> = (0..20_000)
            .map(|_| s.displacement_sample(1.0, 3.0, 0.5).unwrap() + s.displacement_sample(1.0, 7.0, 0.5).unwrap())
            .collect();
        let whole: Vec<i64> = (0..20_000).map(|_| s.displacement_sample(1.0, 10.0, 0.5).unwrap()).collect();
        let ks: crate::stats::KsResult<f64> = crate::stats::ks_distance(&split, &whole).unwrap();
        assert!(ks.statistic < ks.critical_1, "{ks:?}");
    }
}
