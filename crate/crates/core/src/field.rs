//! The frozen initial occupancies and the truncation window they live on.

use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Default coefficients of the window margin `a·sqrt(2 D T ln((μT + e)/ε)) + b`.
pub const MARGIN_A: f64 = 2.0;
pub const MARGIN_B: f64 = 10.0;
/// Default coefficient of the diffusive front bound `c·sqrt(D T)·ln(e + T)`.
pub const DIFFUSIVE_C: f64 = 8.0;

/// How the front extent is bounded when sizing the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// Linear bound `D e μ T`, valid for every density.
    Safe,
    /// `c sqrt(D T) ln(e + T)`, for the sub-critical symmetric regime.
    Diffusive,
}

impl WindowMode {
    /// Diffusive for symmetric walks below unit density, safe otherwise.
    pub fn auto(mu: f64, p_plus: f64) -> Self {
        if mu < 1.0 && p_plus == 0.5 {
            WindowMode::Diffusive
        } else {
            WindowMode::Safe
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            WindowMode::Safe => "safe",
            WindowMode::Diffusive => "diffusive",
        }
    }
}

/// Bound on `R(T)` used to size the window.
pub fn front_bound(mu: f64, d: f64, t: f64, mode: WindowMode) -> f64 {
    match mode {
        WindowMode::Safe => d * std::f64::consts::E * mu * t,
        WindowMode::Diffusive => DIFFUSIVE_C * (d * t).sqrt() * (std::f64::consts::E + t).ln(),
    }
}

/// Rightmost site to instantiate so that, with probability at least
/// `1 - eps_trunc`, no particle from beyond it reaches the front region by `t`.
///
/// Walks with `p_plus != 1/2` get their mean leftward travel `|p₊ - p₋| D T`
/// added to the margin.
pub fn required_window(
    mu: f64,
    d: f64,
    t: f64,
    p_plus: f64,
    eps_trunc: f64,
    mode: WindowMode,
) -> Result<u64> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::param("mu", format!("must be finite and >= 0, got {mu}")));
    }
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::param("D", format!("must be finite and > 0, got {d}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::param("T", format!("must be finite and > 0, got {t}")));
    }
    if !(eps_trunc > 0.0 && eps_trunc < 1.0) {
        return Err(Error::param("eps_trunc", format!("must lie in (0, 1), got {eps_trunc}")));
    }
    if !(0.0..=1.0).contains(&p_plus) {
        return Err(Error::param("p_plus", format!("must lie in [0, 1], got {p_plus}")));
    }
    let e = std::f64::consts::E;
    let spread = (2.0 * d * t * ((mu * t + e) / eps_trunc).ln()).sqrt();
    let drift = (2.0 * p_plus - 1.0).abs() * d * t;
    let margin = (MARGIN_A * spread + MARGIN_B + drift).ceil();
    Ok((front_bound(mu, d, t, mode) + margin).ceil().max(2.0) as u64)
}

/// Initial occupancies `N(i, 0)` for sites `1..=W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonField {
    mu: f64,
    counts: Vec<u32>,
}

impl PoissonField {
    /// I.i.d. Poisson(`mu`) counts on sites `1..=window`.
    pub fn init(mu: f64, window: u64, stream: &mut RandomStream) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("W", "window must be >= 1"));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::param("mu", format!("must be finite and >= 0, got {mu}")));
        }
        let counts = (0..window)
            .map(|_| stream.poisson_unchecked(mu) as u32)
            .collect();
        Ok(Self { mu, counts })
    }

    /// A user-supplied occupancy sequence; `counts[0]` is site 1.
    pub fn from_counts(mu: f64, counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::param("W", "window must be >= 1"));
        }
        Ok(Self { mu, counts })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Rightmost instantiated site.
    pub fn window(&self) -> u64 {
        self.counts.len() as u64
    }

    /// Occupancy of `site`; zero outside `1..=W`.
    pub fn count(&self, site: u64) -> u32 {
        if site == 0 {
            return 0;
        }
        self.counts.get(site as usize - 1).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Iterator over every particle's starting site, site-major.
    pub fn positions(&self) -> impl Iterator<Item = i64> + '_ {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i as i64 + 1, c as usize))
    }

    /// Hash of the counts, for immutability checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.counts.hash(&mut h);
        h.finish()
    }
}
