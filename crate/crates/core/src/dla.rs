//! Event-driven simulation of the aggregate and its white particles.
//!
//! All awake particles share one exponential clock of rate `D·n`; at each
//! tick a uniformly chosen particle jumps `+1` with probability `p_plus`,
//! `-1` otherwise. A jump from `R+1` onto `R` advances the front and removes
//! every white particle at the new front site. Removed particles are simply
//! dropped: they can never influence `R` again.
//!
//! In [`Mode::Fast`] particles far ahead of the front are put to sleep. A
//! dormant particle carries the time it fell asleep and, when woken, jumps
//! by an exactly sampled net displacement for the elapsed time. The only
//! approximation is the event that it would have covered half its gap while
//! asleep; each sleep episode is charged `eps_sleep` against the run's budget.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{front_bound, required_window, PoissonField, WindowMode};
use crate::rng::RandomStream;

/// Reference dynamics or the sleep/wake accelerated variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Fast,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Fast => "fast",
        }
    }
}

/// Geometric checkpoint times `t0·ratio^j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointGrid {
    pub t0: f64,
    pub ratio: f64,
}

impl Default for CheckpointGrid {
    fn default() -> Self {
        Self {
            t0: 1.0,
            ratio: 10f64.powf(0.1),
        }
    }
}

impl CheckpointGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(Error::param("grid_t0", format!("must be > 0, got {}", self.t0)));
        }
        if !(self.ratio.is_finite() && self.ratio > 1.0) {
            return Err(Error::param("grid_ratio", format!("must be > 1, got {}", self.ratio)));
        }
        Ok(())
    }

    /// Grid points up to `horizon`; a point within relative 1e-9 of the
    /// horizon is snapped onto it.
    pub fn times(&self, horizon: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut j = 0;
        loop {
            let t = self.t0 * self.ratio.powi(j);
            if t > horizon * (1.0 + 1e-9) {
                break;
            }
            out.push(t.min(horizon));
            j += 1;
        }
        out
    }
}

/// Parameters of one run of the true model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mu: f64,
    pub d: f64,
    pub p_plus: f64,
    pub t_max: f64,
    pub grid: CheckpointGrid,
    pub mode: Mode,
    pub zone_width: u64,
    pub gap_min: u64,
    pub eps_sleep: f64,
    /// Shortest sleep episode worth scheduling, in time units.
    pub min_sleep: f64,
    pub eps_trunc: f64,
    pub window_override: Option<u64>,
    /// `None` picks [`WindowMode::auto`].
    pub window_mode: Option<WindowMode>,
    pub record_tau: bool,
    /// Full invariant scan after every event.
    pub check_invariants: bool,
}

impl RunConfig {
    pub fn new(mu: f64, t_max: f64) -> Self {
        Self {
            mu,
            d: 1.0,
            p_plus: 0.5,
            t_max,
            grid: CheckpointGrid::default(),
            mode: Mode::Exact,
            zone_width: 64,
            gap_min: 32,
            eps_sleep: 1e-6,
            min_sleep: 50.0,
            eps_trunc: 1e-4,
            window_override: None,
            window_mode: None,
            record_tau: false,
            check_invariants: false,
        }
    }

    pub fn fast(mut self) -> Self {
        self.mode = Mode::Fast;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::param("mu", format!("must be finite and >= 0, got {}", self.mu)));
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::param("D", format!("must be finite and > 0, got {}", self.d)));
        }
        if !(self.p_plus > 0.0 && self.p_plus < 1.0) {
            return Err(Error::param("p_plus", format!("must lie in (0, 1), got {}", self.p_plus)));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::param("t_max", format!("must be finite and > 0, got {}", self.t_max)));
        }
        self.grid.validate()?;
        if !(self.eps_trunc > 0.0 && self.eps_trunc < 1.0) {
            return Err(Error::param("eps_trunc", format!("must lie in (0, 1), got {}", self.eps_trunc)));
        }
        if self.mode == Mode::Fast {
            if !(self.eps_sleep > 0.0 && self.eps_sleep < 1.0) {
                return Err(Error::param(
                    "eps_sleep",
                    format!("fast mode needs 0 < eps_sleep < 1, got {}", self.eps_sleep),
                ));
            }
            if !(self.min_sleep.is_finite() && self.min_sleep > 0.0) {
                return Err(Error::param("min_sleep", format!("must be > 0, got {}", self.min_sleep)));
            }
        }
        Ok(())
    }

    pub fn resolved_window_mode(&self) -> WindowMode {
        self.window_mode
            .unwrap_or_else(|| WindowMode::auto(self.mu, self.p_plus))
    }

    /// Window actually instantiated: the override, or [`required_window`].
    pub fn window(&self) -> Result<u64> {
        let mode = self.resolved_window_mode();
        match self.window_override {
            Some(w) => {
                let bound = front_bound(self.mu, self.d, self.t_max, mode);
                if w < 2 || (w as f64) < bound {
                    return Err(Error::Config(format!(
                        "window {w} is below the {} front bound {bound:.1} for t_max={}",
                        mode.as_str(),
                        self.t_max
                    )));
                }
                Ok(w)
            }
            None => required_window(self.mu, self.d, self.t_max, self.p_plus, self.eps_trunc, mode),
        }
    }

    pub(crate) fn sleep_policy(&self) -> Option<SleepPolicy> {
        (self.mode == Mode::Fast).then(|| {
            SleepPolicy::new(
                self.zone_width,
                self.gap_min,
                self.eps_sleep,
                self.min_sleep,
                self.d,
                self.p_plus,
            )
        })
    }
}

/// Front position and clock. The front equals the number of advances.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateState {
    front: u64,
    time: f64,
    tau_log: Option<Vec<f64>>,
}

impl AggregateState {
    fn new(record_tau: bool) -> Self {
        Self {
            front: 0,
            time: 0.0,
            tau_log: record_tau.then(Vec::new),
        }
    }

    pub fn front(&self) -> u64 {
        self.front
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn advances(&self) -> u64 {
        self.front
    }

    pub fn tau_log(&self) -> Option<&[f64]> {
        self.tau_log.as_deref()
    }
}

/// Largest sleep duration `Δ` with `2·exp(-gap²/(8(DΔ + gap))) ≤ eps_sleep`,
/// or `None` if even `Δ = 0` violates the bound.
pub fn sleep_duration(gap: f64, d: f64, eps_sleep: f64) -> Option<f64> {
    let log_term = (2.0 / eps_sleep).ln();
    let delta = (gap * gap / (8.0 * log_term) - gap) / d;
    (delta > 0.0).then_some(delta)
}

/// What to do with a particle when it is eligible for sleep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SleepDecision {
    KeepAwake,
    Sleep {
        /// Scheduled wake time.
        wake_at: f64,
        /// Front position at which the particle is woken early.
        trigger_front: i64,
    },
}

/// Sleep/wake rule for the far field.
#[derive(Clone, Debug, PartialEq)]
pub struct SleepPolicy {
    zone_width: i64,
    gap_min: i64,
    eps_sleep: f64,
    min_sleep: f64,
    d: f64,
    p_plus: f64,
    threshold: i64,
}

impl SleepPolicy {
    pub fn new(zone_width: u64, gap_min: u64, eps_sleep: f64, min_sleep: f64, d: f64, p_plus: f64) -> Self {
        let mut policy = Self {
            zone_width: zone_width as i64,
            gap_min: gap_min as i64,
            eps_sleep,
            min_sleep,
            d,
            p_plus,
            threshold: i64::MAX,
        };
        // Durations grow with the gap once past the formula's vertex, so the
        // first qualifying gap is the eligibility threshold.
        let mut gap = policy.gap_min.max(1);
        while gap < 1 << 40 {
            if policy.duration(gap as f64).is_some_and(|dt| dt >= min_sleep) {
                policy.threshold = gap;
                break;
            }
            gap += 1 + gap / 64;
        }
        if policy.threshold != i64::MAX {
            // Step back to the exact first qualifying gap.
            while policy.threshold > policy.gap_min.max(1)
                && policy
                    .duration((policy.threshold - 1) as f64)
                    .is_some_and(|dt| dt >= min_sleep)
            {
                policy.threshold -= 1;
            }
        }
        policy
    }

    /// Smallest gap ahead of the awake zone at which a particle is put to sleep.
    pub fn threshold_gap(&self) -> i64 {
        self.threshold
    }

    pub fn zone_width(&self) -> i64 {
        self.zone_width
    }

    /// Sleep duration for a gap, accounting for drift toward the front
    /// when `p_plus != 1/2`.
    pub fn duration(&self, gap: f64) -> Option<f64> {
        if self.p_plus == 0.5 {
            sleep_duration(gap, self.d, self.eps_sleep)
        } else {
            let drift = (1.0 - 2.0 * self.p_plus).abs() * self.d;
            let fluct = sleep_duration(gap / 2.0, self.d, self.eps_sleep)?;
            Some(fluct.min(gap / (4.0 * drift)))
        }
    }

    /// Decision for a particle at `position` when the front is at `front` and the clock at `now`.
    pub fn decide(&self, position: i64, front: i64, now: f64) -> SleepDecision {
        let gap = position - (front + self.zone_width);
        if gap < self.gap_min || gap < self.threshold {
            return SleepDecision::KeepAwake;
        }
        match self.duration(gap as f64) {
            Some(dt) if dt >= self.min_sleep => SleepDecision::Sleep {
                wake_at: now + dt,
                trigger_front: position - self.zone_width - gap / 2,
            },
            _ => SleepDecision::KeepAwake,
        }
    }

    #[inline]
    fn eligible(&self, position: i64, front: i64) -> bool {
        position - (front + self.zone_width) >= self.threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct TimeKey(f64);

impl Eq for TimeKey {}

impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Debug)]
struct DormantSlot {
    position: i64,
    slept_at: f64,
    generation: u32,
    live: bool,
}

/// Sleeping particles, indexed both by wake time and by forced-wake front position.
#[derive(Clone, Debug, Default)]
pub struct DormantPool {
    slots: Vec<DormantSlot>,
    free: Vec<u32>,
    by_wake: BinaryHeap<Reverse<(TimeKey, u32, u32)>>,
    by_trigger: BinaryHeap<Reverse<(i64, u32, u32)>>,
    live: usize,
}

impl DormantPool {
    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    /// Positions at sleep time of all dormant particles.
    pub fn positions(&self) -> impl Iterator<Item = i64> + '_ {
        self.slots.iter().filter(|s| s.live).map(|s| s.position)
    }

    fn insert(&mut self, position: i64, now: f64, wake_at: f64, trigger: i64) {
        let slot = match self.free.pop() {
            Some(i) => {
                let s = &mut self.slots[i as usize];
                s.position = position;
                s.slept_at = now;
                s.generation = s.generation.wrapping_add(1);
                s.live = true;
                i
            }
            None => {
                self.slots.push(DormantSlot {
                    position,
                    slept_at: now,
                    generation: 0,
                    live: true,
                });
                (self.slots.len() - 1) as u32
            }
        };
        let generation = self.slots[slot as usize].generation;
        self.by_wake.push(Reverse((TimeKey(wake_at), slot, generation)));
        self.by_trigger.push(Reverse((trigger, slot, generation)));
        self.live += 1;
    }

    fn is_current(&self, slot: u32, generation: u32) -> bool {
        let s = &self.slots[slot as usize];
        s.live && s.generation == generation
    }

    fn next_wake(&mut self) -> Option<f64> {
        while let Some(&Reverse((TimeKey(t), slot, generation))) = self.by_wake.peek() {
            if self.is_current(slot, generation) {
                return Some(t);
            }
            self.by_wake.pop();
        }
        None
    }

    /// Removes the earliest-due particle; returns `(position, slept_at)`.
    fn pop_wake(&mut self) -> Option<(i64, f64)> {
        while let Some(Reverse((_, slot, generation))) = self.by_wake.pop() {
            if self.is_current(slot, generation) {
                return Some(self.release(slot));
            }
        }
        None
    }

    /// Removes one particle whose trigger is at or below `front`.
    fn pop_triggered(&mut self, front: i64) -> Option<(i64, f64)> {
        while let Some(&Reverse((trigger, slot, generation))) = self.by_trigger.peek() {
            if !self.is_current(slot, generation) {
                self.by_trigger.pop();
                continue;
            }
            if trigger > front {
                return None;
            }
            self.by_trigger.pop();
            return Some(self.release(slot));
        }
        None
    }

    fn release(&mut self, slot: u32) -> (i64, f64) {
        let s = &mut self.slots[slot as usize];
        s.live = false;
        self.free.push(slot);
        self.live -= 1;
        (s.position, s.slept_at)
    }
}

/// The live white particles.
#[derive(Clone, Debug, Default)]
pub struct WhiteSet {
    awake: Vec<i64>,
    dormant: DormantPool,
}

impl WhiteSet {
    pub fn awake(&self) -> &[i64] {
        &self.awake
    }

    pub fn dormant(&self) -> &DormantPool {
        &self.dormant
    }

    pub fn len(&self) -> usize {
        self.awake.len() + self.dormant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Result of one event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventOutcome {
    Moved,
    FrontAdvanced { removed: usize },
    Woke { resleep: bool },
    Starved,
}

/// Accounting for the approximate far-field mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SleepStats {
    /// Number of sleep episodes started.
    pub episodes: u64,
    /// Sum of the per-episode error budgets.
    pub budget_spent: f64,
    pub wakes: u64,
    pub forced_wakes: u64,
    /// Wakes that landed at or behind the front and were pushed back to `R+1`.
    pub violations: u64,
    pub displacement_sum: i64,
    pub displacement_sq_sum: f64,
}

/// `R` observed at a checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub front: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub front: u64,
    pub time: f64,
    pub whites: usize,
    pub events: u64,
}

/// Output of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub checkpoints: Vec<Checkpoint>,
    pub final_state: FinalState,
    pub tau_log: Option<Vec<f64>>,
    pub sleep: SleepStats,
    /// Time at which no white particles were left, if that happened.
    pub starved_at: Option<f64>,
    pub window: u64,
}

impl Trajectory {
    pub fn fronts(&self) -> Vec<u64> {
        self.checkpoints.iter().map(|c| c.front).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.t).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Pending {
    Jump(f64),
    Wake(f64),
    Starved,
}

/// A run of the true model in progress.
#[derive(Debug)]
pub struct DlaSim {
    cfg: RunConfig,
    field: PoissonField,
    field_fingerprint: u64,
    state: AggregateState,
    whites: WhiteSet,
    policy: Option<SleepPolicy>,
    stream: RandomStream,
    sleep: SleepStats,
    events: u64,
}

/// Draws the field on the configured window and places every particle.
pub fn init_run(cfg: &RunConfig, mut stream: RandomStream) -> Result<DlaSim> {
    cfg.validate()?;
    let window = cfg.window()?;
    let field = PoissonField::init(cfg.mu, window, &mut stream)?;
    DlaSim::with_field(cfg, field, stream)
}

/// Full run: checkpoints on the configured grid up to `t_max`.
pub fn run(cfg: &RunConfig, stream: RandomStream) -> Result<Trajectory> {
    init_run(cfg, stream)?.run_to_horizon()
}

impl DlaSim {
    /// Starts from an explicit field; the window is the field's extent.
    pub fn with_field(cfg: &RunConfig, field: PoissonField, stream: RandomStream) -> Result<Self> {
        cfg.validate()?;
        if field.window() < 2 {
            return Err(Error::Config("window must be at least 2 sites".into()));
        }
        let mut sim = Self {
            cfg: cfg.clone(),
            field_fingerprint: field.fingerprint(),
            state: AggregateState::new(cfg.record_tau),
            whites: WhiteSet::default(),
            policy: cfg.sleep_policy(),
            stream,
            sleep: SleepStats::default(),
            events: 0,
            field,
        };
        let positions: Vec<i64> = sim.field.positions().collect();
        sim.whites.awake.reserve(positions.len());
        for p in positions {
            sim.place(p);
        }
        Ok(sim)
    }

    pub fn state(&self) -> &AggregateState {
        &self.state
    }

    pub fn whites(&self) -> &WhiteSet {
        &self.whites
    }

    pub fn field(&self) -> &PoissonField {
        &self.field
    }

    pub fn window(&self) -> u64 {
        self.field.window()
    }

    pub fn sleep_stats(&self) -> &SleepStats {
        &self.sleep
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Puts a particle in the awake set or to sleep, per the policy.
    fn place(&mut self, position: i64) {
        let front = self.state.front as i64;
        if let Some(policy) = &self.policy {
            if policy.eligible(position, front) {
                if let SleepDecision::Sleep { wake_at, trigger_front } =
                    policy.decide(position, front, self.state.time)
                {
                    self.whites
                        .dormant
                        .insert(position, self.state.time, wake_at, trigger_front);
                    self.sleep.episodes += 1;
                    self.sleep.budget_spent += self.cfg.eps_sleep;
                    return;
                }
            }
        }
        self.whites.awake.push(position);
    }

    fn next_event(&mut self) -> Pending {
        let wake = self.whites.dormant.next_wake();
        let n = self.whites.awake.len();
        if n == 0 {
            return match wake {
                Some(w) => Pending::Wake(w),
                None => Pending::Starved,
            };
        }
        let candidate = self.state.time + self.stream.exp_unchecked(self.cfg.d * n as f64);
        match wake {
            Some(w) if w <= candidate => Pending::Wake(w),
            _ => Pending::Jump(candidate),
        }
    }

    /// Processes the next event, jump or wake, whichever comes first.
    pub fn step(&mut self) -> Result<EventOutcome> {
        let pending = self.next_event();
        self.apply(pending)
    }

    fn apply(&mut self, pending: Pending) -> Result<EventOutcome> {
        let outcome = match pending {
            Pending::Starved => return Ok(EventOutcome::Starved),
            Pending::Wake(t) => {
                self.state.time = t;
                let (position, slept_at) = self
                    .whites
                    .dormant
                    .pop_wake()
                    .expect("next_wake reported a live entry");
                let resleep = self.wake(position, slept_at);
                EventOutcome::Woke { resleep }
            }
            Pending::Jump(t) => {
                self.state.time = t;
                let idx = self.stream.index(self.whites.awake.len());
                let up = self.stream.bernoulli(self.cfg.p_plus);
                self.move_particle(idx, up)?
            }
        };
        self.events += 1;
        if self.cfg.check_invariants {
            self.check_invariants()?;
        }
        Ok(outcome)
    }

    /// Wakes a dormant particle at the current time; true if it went straight back to sleep.
    fn wake(&mut self, position: i64, slept_at: f64) -> bool {
        let elapsed = self.state.time - slept_at;
        let shift = self
            .stream
            .displacement_unchecked(self.cfg.d, elapsed, self.cfg.p_plus);
        self.sleep.wakes += 1;
        self.sleep.displacement_sum += shift;
        self.sleep.displacement_sq_sum += (shift as f64).powi(2);
        let mut landed = position + shift;
        let front = self.state.front as i64;
        if landed <= front {
            self.sleep.violations += 1;
            landed = front + 1;
        }
        let before = self.whites.dormant.len();
        self.place(landed);
        self.whites.dormant.len() > before
    }

    fn move_particle(&mut self, idx: usize, up: bool) -> Result<EventOutcome> {
        let front = self.state.front as i64;
        let from = self.whites.awake[idx];
        if up {
            let to = from + 1;
            self.whites.awake[idx] = to;
            if self.policy.as_ref().is_some_and(|p| p.eligible(to, front)) {
                self.whites.awake.swap_remove(idx);
                self.place(to);
            }
            return Ok(EventOutcome::Moved);
        }
        if from != front + 1 {
            self.whites.awake[idx] = from - 1;
            return Ok(EventOutcome::Moved);
        }
        // The jumper lands on the aggregate.
        self.whites.awake.swap_remove(idx);
        self.state.front += 1;
        if let Some(log) = &mut self.state.tau_log {
            log.push(self.state.time);
        }
        let new_front = self.state.front as i64;
        while let Some((position, slept_at)) = self.whites.dormant.pop_triggered(new_front) {
            self.sleep.forced_wakes += 1;
            self.wake(position, slept_at);
        }
        let before = self.whites.awake.len();
        self.whites.awake.retain(|&p| p != new_front);
        let removed = 1 + before - self.whites.awake.len();
        if 2 * self.state.front >= self.field.window() {
            return Err(Error::WindowExhausted {
                front: self.state.front,
                window: self.field.window(),
                time: self.state.time,
            });
        }
        Ok(EventOutcome::FrontAdvanced { removed })
    }

    /// No white particle at or behind the front.
    pub fn check_invariants(&self) -> Result<()> {
        let front = self.state.front as i64;
        if let Some(p) = self.whites.awake.iter().find(|&&p| p <= front) {
            return Err(Error::Invariant(format!(
                "awake white at {p} with front {front} at t={}",
                self.state.time
            )));
        }
        if let Some(p) = self.whites.dormant.positions().find(|&p| p <= front) {
            return Err(Error::Invariant(format!(
                "dormant white at {p} with front {front} at t={}",
                self.state.time
            )));
        }
        if let Some(log) = &self.state.tau_log {
            if log.len() as u64 != self.state.front {
                return Err(Error::Invariant("tau log length differs from front".into()));
            }
        }
        Ok(())
    }

    /// Runs to `t_max`, recording `R` on the checkpoint grid.
    pub fn run_to_horizon(mut self) -> Result<Trajectory> {
        let horizon = self.cfg.t_max;
        let times = self.cfg.grid.times(horizon);
        let mut checkpoints = Vec::with_capacity(times.len());
        let mut starved_at = None;
        let mut next_cp = 0;
        loop {
            let pending = self.next_event();
            let event_time = match pending {
                Pending::Starved => {
                    starved_at = Some(self.state.time);
                    break;
                }
                Pending::Jump(t) | Pending::Wake(t) => t,
            };
            if event_time > horizon {
                break;
            }
            while next_cp < times.len() && times[next_cp] < event_time {
                checkpoints.push(Checkpoint {
                    t: times[next_cp],
                    front: self.state.front,
                });
                next_cp += 1;
            }
            self.apply(pending)?;
        }
        for &t in &times[next_cp..] {
            checkpoints.push(Checkpoint {
                t,
                front: self.state.front,
            });
        }
        if self.field.fingerprint() != self.field_fingerprint {
            return Err(Error::Invariant("initial field changed during the run".into()));
        }
        self.state.time = horizon;
        Ok(Trajectory {
            checkpoints,
            final_state: FinalState {
                front: self.state.front,
                time: horizon,
                whites: self.whites.len(),
                events: self.events,
            },
            tau_log: self.state.tau_log.take(),
            sleep: self.sleep,
            starved_at,
            window: self.field.window(),
        })
    }
}
