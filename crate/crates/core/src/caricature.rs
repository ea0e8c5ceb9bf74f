//! The two simplified models.
//!
//! Caricature I keeps exactly `J` white walkers. Everything else is a frozen
//! red field; when whites are absorbed, the same number of reds nearest to
//! the front turn white.
//!
//! Caricature II tracks only the `J` positions relative to the front. At each
//! advance the jumper and every other walker sitting at 1 are resampled at
//! fresh offsets `Y ~ G`, and all others shift down by one.

use serde::{Deserialize, Serialize};

use crate::dla::{Checkpoint, CheckpointGrid, FinalState, SleepStats, Trajectory};
use crate::error::{Error, Result};
use crate::field::{required_window, PoissonField, WindowMode};
use crate::lyapunov::{decremented, fkg_on_values, l_tilde, power_sum};
use crate::rng::{GSpec, RandomStream};

/// Records `R` on the grid as simulated time passes.
struct Checkpointer {
    times: Vec<f64>,
    next: usize,
    out: Vec<Checkpoint>,
}

impl Checkpointer {
    fn new(grid: &CheckpointGrid, horizon: f64) -> Self {
        let times = grid.times(horizon);
        Self {
            out: Vec::with_capacity(times.len()),
            times,
            next: 0,
        }
    }

    /// Records every grid point strictly before `event_time` at the current front.
    fn before(&mut self, event_time: f64, front: u64) {
        while self.next < self.times.len() && self.times[self.next] < event_time {
            self.out.push(Checkpoint {
                t: self.times[self.next],
                front,
            });
            self.next += 1;
        }
    }

    fn finish(mut self, front: u64) -> Vec<Checkpoint> {
        self.before(f64::INFINITY, front);
        self.out
    }
}

fn validate_common(d: f64, p_plus: f64, t_max: f64, grid: &CheckpointGrid, j: usize) -> Result<()> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::param("D", format!("must be finite and > 0, got {d}")));
    }
    if !(p_plus > 0.0 && p_plus < 1.0) {
        return Err(Error::param("p_plus", format!("must lie in (0, 1), got {p_plus}")));
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::param("t_max", format!("must be finite and > 0, got {t_max}")));
    }
    if j == 0 {
        return Err(Error::param("J", "need at least one white particle"));
    }
    grid.validate()
}

fn initial_positions(x_init: &Option<Vec<i64>>, j: usize) -> Result<Vec<i64>> {
    match x_init {
        None => Ok(vec![1; j]),
        Some(x) if x.len() != j => Err(Error::Config(format!(
            "x_init has {} entries but J={j}",
            x.len()
        ))),
        Some(x) if x.iter().any(|&v| v < 1) => {
            Err(Error::param("x_init", "initial positions must be >= 1"))
        }
        Some(x) => Ok(x.clone()),
    }
}

// ---------------------------------------------------------------------------
// Caricature I

/// Parameters of a Caricature I run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Car1Config {
    pub mu: f64,
    pub d: f64,
    pub p_plus: f64,
    pub j: usize,
    /// Initial white positions; all at 1 when absent.
    pub x_init: Option<Vec<i64>>,
    pub t_max: f64,
    pub grid: CheckpointGrid,
    pub eps_trunc: f64,
    pub window_override: Option<u64>,
    pub record_tau: bool,
    pub check_invariants: bool,
}

impl Car1Config {
    pub fn new(mu: f64, j: usize, t_max: f64) -> Self {
        Self {
            mu,
            d: 1.0,
            p_plus: 0.5,
            j,
            x_init: None,
            t_max,
            grid: CheckpointGrid::default(),
            eps_trunc: 1e-4,
            window_override: None,
            record_tau: false,
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_common(self.d, self.p_plus, self.t_max, &self.grid, self.j)?;
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::param("mu", format!("must be finite and >= 0, got {}", self.mu)));
        }
        initial_positions(&self.x_init, self.j).map(|_| ())
    }

    /// Red field extent: the override, or the linear-bound window.
    pub fn window(&self) -> Result<u64> {
        match self.window_override {
            Some(w) if w >= 1 => Ok(w),
            Some(_) => Err(Error::Config("window must be at least 1 site".into())),
            None => required_window(self.mu, self.d, self.t_max, self.p_plus, self.eps_trunc, WindowMode::Safe),
        }
    }
}

/// Remaining red counts per site.
#[derive(Clone, Debug, PartialEq)]
pub struct RedField {
    counts: Vec<u32>,
    /// Every site below this one is empty.
    cursor: u64,
}

/// Caricature I ran out of reds: this many more were needed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RedShortfall {
    pub needed: usize,
}

impl RedField {
    pub fn new(field: &PoissonField) -> Self {
        Self {
            counts: field.counts().to_vec(),
            cursor: 1,
        }
    }

    /// `counts[0]` is site 1.
    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts, cursor: 1 }
    }

    pub fn count(&self, site: u64) -> u32 {
        if site == 0 {
            return 0;
        }
        self.counts.get(site as usize - 1).copied().unwrap_or(0)
    }

    pub fn window(&self) -> u64 {
        self.counts.len() as u64
    }

    pub fn remaining(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Turns every red at `site` black; returns how many there were.
    pub fn blacken(&mut self, site: u64) -> u32 {
        match self.counts.get_mut((site as usize).wrapping_sub(1)) {
            Some(c) => std::mem::take(c),
            None => 0,
        }
    }
}

/// Takes the `m` reds nearest to the right of `front_k`, scanning
/// `k+1, k+2, ...`. On shortfall nothing is taken.
pub fn car1_recruit(reds: &mut RedField, front_k: u64, m: usize) -> Result<Vec<i64>, RedShortfall> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let start = (front_k + 1).max(reds.cursor);
    let mut taken: Vec<(u64, u32)> = Vec::new();
    let mut still = m;
    let mut site = start;
    while still > 0 && site <= reds.window() {
        let available = reds.count(site) as usize;
        if available > 0 {
            let take = available.min(still);
            taken.push((site, take as u32));
            still -= take;
        }
        site += 1;
    }
    if still > 0 {
        return Err(RedShortfall { needed: still });
    }
    let mut out = Vec::with_capacity(m);
    for &(site, take) in &taken {
        reds.counts[site as usize - 1] -= take;
        out.extend(std::iter::repeat_n(site as i64, take as usize));
    }
    let last = taken.last().expect("m > 0").0;
    reds.cursor = if reds.count(last) > 0 { last } else { last + 1 };
    Ok(out)
}

/// A Caricature I run in progress.
#[derive(Debug)]
pub struct Car1Sim {
    cfg: Car1Config,
    reds: RedField,
    whites: Vec<i64>,
    front: u64,
    time: f64,
    tau_log: Option<Vec<f64>>,
    stream: RandomStream,
    events: u64,
    recruited: u64,
    blackened_whites: u64,
}

/// Outcome of one Caricature I jump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Car1Outcome {
    Moved,
    Advanced { blackened: usize },
}

impl Car1Sim {
    /// Draws the red field from `stream`, then places the `J` whites.
    pub fn init(cfg: &Car1Config, mut stream: RandomStream) -> Result<Self> {
        cfg.validate()?;
        let field = PoissonField::init(cfg.mu, cfg.window()?, &mut stream)?;
        Self::with_reds(cfg, RedField::new(&field), stream)
    }

    pub fn with_reds(cfg: &Car1Config, reds: RedField, stream: RandomStream) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            whites: initial_positions(&cfg.x_init, cfg.j)?,
            cfg: cfg.clone(),
            reds,
            front: 0,
            time: 0.0,
            tau_log: cfg.record_tau.then(Vec::new),
            stream,
            events: 0,
            recruited: 0,
            blackened_whites: 0,
        })
    }

    pub fn front(&self) -> u64 {
        self.front
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn whites(&self) -> &[i64] {
        &self.whites
    }

    pub fn reds(&self) -> &RedField {
        &self.reds
    }

    pub fn recruited(&self) -> u64 {
        self.recruited
    }

    pub fn blackened_whites(&self) -> u64 {
        self.blackened_whites
    }

    fn next_time(&mut self) -> f64 {
        self.time + self.stream.exp_unchecked(self.cfg.d * self.cfg.j as f64)
    }

    /// Advances the clock and performs one jump.
    pub fn step(&mut self) -> Result<Car1Outcome> {
        let t = self.next_time();
        self.apply(t)
    }

    fn apply(&mut self, t: f64) -> Result<Car1Outcome> {
        self.time = t;
        let idx = self.stream.index(self.cfg.j);
        let up = self.stream.bernoulli(self.cfg.p_plus);
        let outcome = self.move_white(idx, up)?;
        self.events += 1;
        if self.cfg.check_invariants {
            self.check_invariants()?;
        }
        Ok(outcome)
    }

    fn move_white(&mut self, idx: usize, up: bool) -> Result<Car1Outcome> {
        let from = self.whites[idx];
        if up {
            self.whites[idx] = from + 1;
            return Ok(Car1Outcome::Moved);
        }
        self.whites[idx] = from - 1;
        if from as u64 != self.front + 1 {
            return Ok(Car1Outcome::Moved);
        }
        self.front += 1;
        if let Some(log) = &mut self.tau_log {
            log.push(self.time);
        }
        let new_front = self.front as i64;
        let absorbed: Vec<usize> = (0..self.whites.len())
            .filter(|&i| i == idx || self.whites[i] == new_front)
            .collect();
        self.reds.blacken(self.front);
        let fresh = car1_recruit(&mut self.reds, self.front, absorbed.len()).map_err(|s| {
            Error::RedExhausted {
                front: self.front,
                time: self.time,
                needed: s.needed,
            }
        })?;
        for (&i, p) in absorbed.iter().zip(fresh) {
            self.whites[i] = p;
        }
        self.blackened_whites += absorbed.len() as u64;
        self.recruited += absorbed.len() as u64;
        Ok(Car1Outcome::Advanced {
            blackened: absorbed.len(),
        })
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.whites.len() != self.cfg.j {
            return Err(Error::Invariant(format!(
                "{} whites, expected {}",
                self.whites.len(),
                self.cfg.j
            )));
        }
        if let Some(p) = self.whites.iter().find(|&&p| p <= self.front as i64) {
            return Err(Error::Invariant(format!(
                "white at {p} with front {} at t={}",
                self.front, self.time
            )));
        }
        if self.recruited != self.blackened_whites {
            return Err(Error::Invariant("recruited and blackened counts differ".into()));
        }
        Ok(())
    }

    pub fn run_to_horizon(mut self) -> Result<Trajectory> {
        let horizon = self.cfg.t_max;
        let mut cp = Checkpointer::new(&self.cfg.grid, horizon);
        loop {
            let t = self.next_time();
            if t > horizon {
                break;
            }
            cp.before(t, self.front);
            self.apply(t)?;
        }
        Ok(Trajectory {
            checkpoints: cp.finish(self.front),
            final_state: FinalState {
                front: self.front,
                time: horizon,
                whites: self.whites.len(),
                events: self.events,
            },
            tau_log: self.tau_log.take(),
            sleep: SleepStats::default(),
            starved_at: None,
            window: self.reds.window(),
        })
    }
}

/// Full Caricature I run; red exhaustion ends it with an error.
pub fn car1_run(cfg: &Car1Config, stream: RandomStream) -> Result<Trajectory> {
    Car1Sim::init(cfg, stream)?.run_to_horizon()
}

// ---------------------------------------------------------------------------
// Caricature II

/// Parameters of a Caricature II run.
#[derive(Clone, Debug, PartialEq)]
pub struct Car2Config {
    pub d: f64,
    pub p_plus: f64,
    pub j: usize,
    /// Initial relative positions; all 1 when absent.
    pub x_init: Option<Vec<i64>>,
    pub g: GSpec,
    pub t_max: f64,
    pub grid: CheckpointGrid,
    /// Threshold for the `in_lambda` flag; `J` when absent.
    pub alpha: Option<u64>,
    /// Powers `q` recorded per event.
    pub q_list: Vec<u32>,
    pub record_tau: bool,
    /// Ledger identity and correlation inequality after every event.
    pub check_invariants: bool,
}

impl Car2Config {
    pub fn new(j: usize, g: GSpec, t_max: f64) -> Self {
        Self {
            d: 1.0,
            p_plus: 0.5,
            j,
            x_init: None,
            g,
            t_max,
            grid: CheckpointGrid::default(),
            alpha: None,
            q_list: vec![1, 2],
            record_tau: false,
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_common(self.d, self.p_plus, self.t_max, &self.grid, self.j)?;
        self.g.validate()?;
        if let Some(&q) = self.q_list.iter().find(|&&q| !(1..=5).contains(&q)) {
            return Err(Error::param("q_list", format!("powers must lie in 1..=5, got {q}")));
        }
        initial_positions(&self.x_init, self.j).map(|_| ())
    }

    pub fn alpha(&self) -> u64 {
        self.alpha.unwrap_or(self.j as u64)
    }
}

/// Snapshot at one advance, taken before the adjustments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub k: u64,
    pub tau: f64,
    /// `X(τₖ−)`, with the jumper still at 1.
    pub u: Vec<i64>,
    /// Index of the walker that jumped to 0.
    pub r: usize,
    pub l_tilde: u64,
    /// `Q̃_q` for each configured `q`, in order.
    pub q_tilde: Vec<u128>,
    pub in_lambda: bool,
}

/// Relative positions plus the ledger `X = S + ΣA`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Car2State {
    x: Vec<i64>,
    /// Walk displacements `S_j(t)`.
    walk: Vec<i64>,
    /// `Σ_k A_{j,k}`, including the initial positions.
    adjust: Vec<i64>,
    k: u64,
}

impl Car2State {
    pub fn new(x_init: Vec<i64>) -> Self {
        Self {
            walk: vec![0; x_init.len()],
            adjust: x_init.clone(),
            x: x_init,
            k: 0,
        }
    }

    pub fn x(&self) -> &[i64] {
        &self.x
    }

    pub fn walk(&self) -> &[i64] {
        &self.walk
    }

    pub fn adjustments(&self) -> &[i64] {
        &self.adjust
    }

    /// Number of advances so far; equals `R`.
    pub fn k(&self) -> u64 {
        self.k
    }

    /// Moves walker `j` by one step; true if it hit 0.
    pub fn jump(&mut self, j: usize, up: bool) -> bool {
        let step = if up { 1 } else { -1 };
        self.x[j] += step;
        self.walk[j] += step;
        self.x[j] == 0
    }

    /// Applies the adjustments of an advance caused by walker `r`, which has
    /// just reached 0. `draw` supplies the `Y`s in walker order.
    pub fn adjust_after(&mut self, r: usize, mut draw: impl FnMut() -> u64) {
        for j in 0..self.x.len() {
            let before = if j == r { 1 } else { self.x[j] };
            let a = if j == r {
                draw() as i64
            } else if before == 1 {
                draw() as i64 - 1
            } else {
                -1
            };
            self.x[j] += a;
            self.adjust[j] += a;
        }
        self.k += 1;
    }

    /// `X_j ≥ 1` and the ledger identity, exactly.
    pub fn check_ledger(&self) -> Result<()> {
        for j in 0..self.x.len() {
            if self.x[j] < 1 {
                return Err(Error::Invariant(format!("X_{j} = {} < 1", self.x[j])));
            }
            if self.x[j] != self.walk[j] + self.adjust[j] {
                return Err(Error::Invariant(format!(
                    "ledger mismatch for walker {j}: X={} S={} ΣA={}",
                    self.x[j], self.walk[j], self.adjust[j]
                )));
            }
        }
        Ok(())
    }
}

/// A Caricature II run in progress.
#[derive(Debug)]
pub struct Car2Sim {
    cfg: Car2Config,
    state: Car2State,
    time: f64,
    stream: RandomStream,
    events: u64,
    tau_log: Option<Vec<f64>>,
}

impl Car2Sim {
    pub fn new(cfg: &Car2Config, stream: RandomStream) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: Car2State::new(initial_positions(&cfg.x_init, cfg.j)?),
            cfg: cfg.clone(),
            time: 0.0,
            stream,
            events: 0,
            tau_log: cfg.record_tau.then(Vec::new),
        })
    }

    pub fn state(&self) -> &Car2State {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn next_time(&mut self) -> f64 {
        self.time + self.stream.exp_unchecked(self.cfg.d * self.cfg.j as f64)
    }

    /// One walker jump; returns the record if it caused an advance.
    pub fn step(&mut self) -> Result<Option<EventRecord>> {
        let t = self.next_time();
        self.apply(t)
    }

    fn apply(&mut self, t: f64) -> Result<Option<EventRecord>> {
        self.time = t;
        self.events += 1;
        let j = self.stream.index(self.cfg.j);
        let up = self.stream.bernoulli(self.cfg.p_plus);
        if !self.state.jump(j, up) {
            return Ok(None);
        }
        let mut u = self.state.x.clone();
        u[j] = 1;
        let record = self.record(u, j)?;
        let (stream, g) = (&mut self.stream, &self.cfg.g);
        self.state.adjust_after(j, || stream.g_sample(g));
        if let Some(log) = &mut self.tau_log {
            log.push(t);
        }
        if self.cfg.check_invariants {
            self.state.check_ledger()?;
            self.check_fkg(&record)?;
        }
        Ok(Some(record))
    }

    fn record(&self, u: Vec<i64>, r: usize) -> Result<EventRecord> {
        let l = l_tilde(&u)?;
        let values = decremented(&u, r)?;
        let q_tilde = self
            .cfg
            .q_list
            .iter()
            .map(|&q| power_sum(&values, q))
            .collect::<Result<_>>()?;
        Ok(EventRecord {
            k: self.state.k + 1,
            tau: self.time,
            u,
            r,
            l_tilde: l,
            q_tilde,
            in_lambda: l <= self.cfg.alpha(),
        })
    }

    fn check_fkg(&self, record: &EventRecord) -> Result<()> {
        let values = decremented(&record.u, record.r)?;
        for &q in &self.cfg.q_list {
            for u in 1..=q {
                if !fkg_on_values(&values, q, u)? {
                    return Err(Error::Invariant(format!(
                        "correlation inequality fails at event {} (q={q}, u={u})",
                        record.k
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn run_to_horizon(mut self) -> Result<(Trajectory, Vec<EventRecord>)> {
        let horizon = self.cfg.t_max;
        let mut cp = Checkpointer::new(&self.cfg.grid, horizon);
        let mut records = Vec::new();
        loop {
            let t = self.next_time();
            if t > horizon {
                break;
            }
            cp.before(t, self.state.k);
            if let Some(rec) = self.apply(t)? {
                records.push(rec);
            }
        }
        let trajectory = Trajectory {
            checkpoints: cp.finish(self.state.k),
            final_state: FinalState {
                front: self.state.k,
                time: horizon,
                whites: self.cfg.j,
                events: self.events,
            },
            tau_log: self.tau_log.take(),
            sleep: SleepStats::default(),
            starved_at: None,
            window: 0,
        };
        Ok((trajectory, records))
    }
}

/// Full Caricature II run with its event trace.
pub fn car2_run(cfg: &Car2Config, stream: RandomStream) -> Result<(Trajectory, Vec<EventRecord>)> {
    Car2Sim::new(cfg, stream)?.run_to_horizon()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn recruit_scans_rightward() {
        let k = 4;
        let mut counts = vec![0; 10];
        counts[k] = 1; // site k+1
        counts[k + 2] = 5; // site k+3
        let mut reds = RedField::from_counts(counts);
        assert_eq!(car1_recruit(&mut reds, k as u64, 2).unwrap(), vec![5, 7]);
        assert_eq!(reds.count(5), 0);
        assert_eq!(reds.count(7), 4);
        assert_eq!(car1_recruit(&mut reds, k as u64, 0).unwrap(), Vec::<i64>::new());
    }

    #[test]
    fn recruit_several_from_one_site() {
        let mut reds = RedField::from_counts(vec![0, 3, 0]);
        assert_eq!(car1_recruit(&mut reds, 1, 2).unwrap(), vec![2, 2]);
        assert_eq!(reds.count(2), 1);
    }

    #[test]
    fn recruit_shortfall_takes_nothing() {
        let mut reds = RedField::from_counts(vec![0, 1, 1]);
        assert_eq!(car1_recruit(&mut reds, 0, 3), Err(RedShortfall { needed: 1 }));
        assert_eq!(reds.remaining(), 2);
    }

    #[test]
    fn single_white_exhausts_empty_reds() {
        let mut cfg = Car1Config::new(0.0, 1, 1e6);
        cfg.x_init = Some(vec![1]);
        let mut sim = Car1Sim::with_reds(&cfg, RedField::from_counts(vec![0; 50]), substream(1, 0)).unwrap();
        let err = loop {
            match sim.step() {
                Ok(_) => assert_eq!(sim.front(), 0),
                Err(e) => break e,
            }
        };
        assert!(matches!(err, Error::RedExhausted { front: 1, needed: 1, .. }));
        assert_eq!(sim.front(), 1);
    }

    #[test]
    fn car1_advance_blackens_site_and_recruits_in_index_order() {
        let mut cfg = Car1Config::new(0.0, 3, 10.0);
        cfg.x_init = Some(vec![1, 4, 1]);
        let mut sim =
            Car1Sim::with_reds(&cfg, RedField::from_counts(vec![2, 0, 1, 0, 3]), substream(0, 0)).unwrap();
        // Walker 0 jumps from 1 to 0; walker 2, also at 1, is absorbed with it.
        assert_eq!(sim.move_white(0, false).unwrap(), Car1Outcome::Advanced { blackened: 2 });
        assert_eq!(sim.front(), 1);
        assert_eq!(sim.reds().count(1), 0);
        assert_eq!(sim.whites(), &[3, 4, 5]);
        assert_eq!(sim.reds().remaining(), 2);
        sim.check_invariants().unwrap();
    }

    #[test]
    fn car1_invariants_hold_along_run() {
        let mut cfg = Car1Config::new(16.0, 8, 200.0);
        cfg.check_invariants = true;
        let mut sim = Car1Sim::init(&cfg, substream(5, 0)).unwrap();
        let mut reds_before = sim.reds().remaining();
        for _ in 0..20_000 {
            sim.step().unwrap();
            let reds_now = sim.reds().remaining();
            assert!(reds_now <= reds_before);
            reds_before = reds_now;
        }
        assert!(sim.front() > 0);
    }

    #[test]
    fn car1_advance_rate_bound() {
        let cfg = Car1Config::new(16.0, 8, 500.0);
        for seed in 0..10 {
            let traj = car1_run(&cfg, substream(seed, 0)).unwrap();
            let rate = traj.final_state.front as f64 / cfg.t_max;
            assert!(rate <= cfg.j as f64 * cfg.d / 2.0, "rate {rate}");
        }
    }

    #[test]
    fn adjustment_example() {
        let mut s = Car2State::new(vec![1, 1, 5]);
        assert!(s.jump(0, false));
        let mut ys = [4u64, 2].into_iter();
        s.adjust_after(0, || ys.next().unwrap());
        assert_eq!(s.x(), &[4, 2, 4]);
        assert!(ys.next().is_none());
        s.check_ledger().unwrap();
        assert_eq!(s.k(), 1);
    }

    #[test]
    fn step_down_to_one_is_not_an_event() {
        let mut s = Car2State::new(vec![2, 5]);
        assert!(!s.jump(0, false));
        assert_eq!(s.x(), &[1, 5]);
    }

    #[test]
    fn car2_trace_properties() {
        let mut cfg = Car2Config::new(6, GSpec::geometric(0.5).unwrap(), 2000.0);
        cfg.check_invariants = true;
        cfg.q_list = vec![1, 2, 3];
        let (traj, recs) = car2_run(&cfg, substream(3, 0)).unwrap();
        assert!(!recs.is_empty());
        assert_eq!(recs[0].k, 1);
        assert_eq!(traj.final_state.front, recs.len() as u64);
        for (i, rec) in recs.iter().enumerate() {
            assert_eq!(rec.k, i as u64 + 1);
            assert_eq!(rec.u[rec.r], 1);
            assert_eq!(*rec.u.iter().min().unwrap(), 1);
            assert!(rec.l_tilde >= cfg.j as u64 - 1);
            assert_eq!(rec.q_tilde[0], rec.l_tilde as u128);
            assert_eq!(rec.in_lambda, rec.l_tilde <= cfg.j as u64);
            assert_eq!(rec.u.len(), cfg.j);
        }
        assert!(recs.windows(2).all(|w| w[0].tau < w[1].tau));
    }

    #[test]
    fn car2_deterministic() {
        let cfg = Car2Config::new(4, GSpec::constant(2).unwrap(), 300.0);
        let a = car2_run(&cfg, substream(8, 1)).unwrap();
        let b = car2_run(&cfg, substream(8, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_errors() {
        let g = GSpec::constant(1).unwrap();
        let mut c = Car2Config::new(3, g.clone(), 10.0);
        c.x_init = Some(vec![1, 0, 2]);
        assert!(c.validate().is_err());
        c.x_init = Some(vec![1, 2]);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(Car2Config::new(0, g, 10.0).validate().is_err());
        assert!(Car1Config::new(-1.0, 2, 10.0).validate().is_err());
    }
}
