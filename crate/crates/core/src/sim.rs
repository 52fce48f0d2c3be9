//! Tick-driven traffic-load simulation of interactive viewers on one trunk.
//!
//! Viewers arrive on an exponential ramp, open a channel through the
//! [`ChannelTable`], hop between interactive modes drawn from the session's
//! mode probabilities, and leave after `m` operations. Each tick produces a
//! [`LoadSample`]. A run is single-threaded and fully determined by its
//! config and seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::allocation::{
    Admitted, AllocationDecision, ChannelLimits, ChannelTable, DecisionKind, Kbps, ModeDemandTable,
    ViewerId, DEFAULT_QUEUE_CAPACITY,
};
use crate::error::{Error, Result};
use crate::model::{BandwidthConfig, InteractiveMode, ModeSampler, SessionSpec};

pub const DEFAULT_DURATION: f64 = 60.0;
pub const DEFAULT_TICK: f64 = 0.1;
pub const DEFAULT_TARGET_VIEWERS: u64 = 1000;
pub const DEFAULT_OPERATIONS: u64 = 10;
pub const DEFAULT_DWELL_MEAN: f64 = 5.0;
pub const DEFAULT_SEED: u64 = 42;
/// Seeds are 63-bit so they survive a round trip through a TOML integer.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Demand parameters starting at 0.01 in steps of 0.02.
pub const SET1: [f64; 6] = [0.01, 0.03, 0.05, 0.07, 0.09, 0.11];
/// Demand parameters from 0.0 to 1.0 in steps of 0.2.
pub const SET2: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPreset {
    Set1,
    Set2,
}

impl SweepPreset {
    pub fn values(self) -> Vec<f64> {
        // Integer numerators keep every value the nearest double to its
        // decimal literal.
        match self {
            SweepPreset::Set1 => (0..6).map(|i| f64::from(1 + 2 * i) / 100.0).collect(),
            SweepPreset::Set2 => (0..6).map(|i| f64::from(i) / 5.0).collect(),
        }
    }
}

impl std::str::FromStr for SweepPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "set1" => Ok(SweepPreset::Set1),
            "set2" => Ok(SweepPreset::Set2),
            other => Err(Error::invalid(
                "preset",
                format!("unknown preset {other:?} (expected set1 or set2)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Simulated seconds.
    pub duration: f64,
    /// Seconds per tick.
    pub tick: f64,
    pub target_viewers: u64,
    pub session: SessionSpec,
    pub bandwidth: BandwidthConfig,
    pub demands: ModeDemandTable,
    pub seed: u64,
    pub sweep: Vec<f64>,
    /// Mean of the exponential mode dwell time, seconds.
    pub dwell_mean: f64,
    pub queue_capacity: usize,
    /// Keep viewers connected after their last operation instead of
    /// releasing the channel.
    pub persist: bool,
}

impl SimulationConfig {
    /// Paper-scale defaults: 1000 viewers over 60 s at 0.1 s ticks, five
    /// modes, a 1 Gbps trunk with 1..10 Mbps channels and a 1 Mbps reserve.
    pub fn standard() -> Self {
        let bandwidth = BandwidthConfig::new(1000.0, 1.0, 10.0, 1.0).expect("valid defaults");
        let session = SessionSpec::new(DEFAULT_OPERATIONS, vec![0.1, 0.5, 0.1, 0.1, 0.2], 5)
            .expect("valid defaults");
        let demands =
            ModeDemandTable::standard(5, &ChannelLimits::from(&bandwidth)).expect("valid defaults");
        Self {
            duration: DEFAULT_DURATION,
            tick: DEFAULT_TICK,
            target_viewers: DEFAULT_TARGET_VIEWERS,
            session,
            bandwidth,
            demands,
            seed: DEFAULT_SEED,
            sweep: SweepPreset::Set2.values(),
            dwell_mean: DEFAULT_DWELL_MEAN,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            persist: false,
        }
    }

    /// Structural checks. Demand values are policed by the channel table
    /// when they are granted.
    pub fn validate(&self) -> Result<()> {
        if self.seed > MAX_SEED {
            return Err(Error::invalid(
                "seed",
                format!("{} exceeds {MAX_SEED}", self.seed),
            ));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(Error::invalid(
                "duration",
                format!("{} must be > 0", self.duration),
            ));
        }
        if !self.tick.is_finite() || self.tick <= 0.0 || self.tick > self.duration {
            return Err(Error::invalid(
                "tick",
                format!("{} must lie in (0, duration]", self.tick),
            ));
        }
        if !self.dwell_mean.is_finite() || self.dwell_mean <= 0.0 {
            return Err(Error::invalid(
                "dwell_mean",
                format!("{} must be > 0", self.dwell_mean),
            ));
        }
        if self.session.operations() == 0 {
            return Err(Error::invalid(
                "operations",
                "a session needs at least one operation",
            ));
        }
        if self.demands.modes() != self.session.modes() {
            return Err(Error::invalid(
                "demands",
                format!(
                    "{} demands for {} modes",
                    self.demands.modes(),
                    self.session.modes()
                ),
            ));
        }
        if let Some(v) = self.sweep.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid("sweep", format!("{v} must be >= 0")));
        }
        Ok(())
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration / self.tick - 1e-9).ceil().max(1.0) as u64
    }

    /// The same setup re-targeted to demand parameter `rho` by moving
    /// `W_max` (with `B` and `k` fixed) and scaling the demand table with it.
    /// `rho = 0` leaves every mode at the reserve.
    pub fn with_demand_parameter(&self, rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(Error::invalid("sweep", format!("{rho} must be >= 0")));
        }
        let k = self.session.modes();
        let b = &self.bandwidth;
        let mut out = self.clone();
        if rho == 0.0 {
            out.bandwidth = BandwidthConfig::new(b.total(), b.w_min(), b.w_min(), b.reserve())?;
            out.demands = ModeDemandTable::reserve_only(k, &ChannelLimits::from(&out.bandwidth));
            return Ok(out);
        }
        let w_max = crate::allocation::w_max_for_parameter(rho, k, b.total());
        out.bandwidth = BandwidthConfig::new(b.total(), b.w_min(), w_max, b.reserve())?;
        let old = ChannelLimits::from(b);
        let new = ChannelLimits::from(&out.bandwidth);
        let scale = new.w_max.0 as f64 / old.w_max.0 as f64;
        let demands = self
            .demands
            .demands()
            .iter()
            .enumerate()
            .map(|(pos, d)| {
                if InteractiveMode::from_position(pos) == InteractiveMode::PAUSE {
                    new.reserve
                } else {
                    Kbps((d.0 as f64 * scale).round() as u64).clamp(new.w_min, new.w_max)
                }
            })
            .collect();
        out.demands = ModeDemandTable::new(demands, &new)?;
        Ok(out)
    }
}

/// Cumulative arrivals by time `t`: `round(exp(r t) - 1)` with
/// `r = ln(target + 1) / duration`, so the count runs from 0 to the target.
pub fn arrival_count(t: f64, cfg: &SimulationConfig) -> Result<u64> {
    if !(0.0..=cfg.duration).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            duration: cfg.duration,
        });
    }
    let rate = ((cfg.target_viewers + 1) as f64).ln() / cfg.duration;
    let n = ((rate * t).exp() - 1.0).round() as u64;
    Ok(n.min(cfg.target_viewers))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewerStatus {
    Active,
    Queued,
    Departed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewerState {
    pub id: ViewerId,
    pub mode: InteractiveMode,
    pub granted: Kbps,
    pub status: ViewerStatus,
    pub ops_executed: u64,
    /// Ticks left in the current mode.
    pub dwell_remaining: u64,
    admitted_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadSample {
    pub t: f64,
    /// `Σ granted / B`.
    pub normalized_load: f64,
    /// Active viewers over the target population.
    pub normalized_population: f64,
    pub active: u64,
    pub queued: u64,
    pub departed: u64,
    pub rejected_cumulative: u64,
}

pub struct Simulation {
    cfg: SimulationConfig,
    channels: ChannelTable,
    sampler: ModeSampler,
    dwell: Exp<f64>,
    rng: ChaCha8Rng,
    viewers: Vec<ViewerState>,
    tick_index: u64,
    total_ticks: u64,
    departed: u64,
    rejected: u64,
    mode_switches: u64,
}

impl Simulation {
    pub fn new(cfg: SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let limits = ChannelLimits::from(&cfg.bandwidth);
        let dwell = Exp::new(1.0 / cfg.dwell_mean)
            .map_err(|e| Error::invalid("dwell_mean", e.to_string()))?;
        Ok(Self {
            channels: ChannelTable::new(limits, cfg.queue_capacity),
            sampler: cfg.session.sampler(),
            dwell,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            viewers: Vec::with_capacity(cfg.target_viewers as usize),
            tick_index: 0,
            total_ticks: cfg.total_ticks(),
            departed: 0,
            rejected: 0,
            mode_switches: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    pub fn channels(&self) -> &ChannelTable {
        &self.channels
    }

    pub fn viewers(&self) -> &[ViewerState] {
        &self.viewers
    }

    pub fn tick_index(&self) -> u64 {
        self.tick_index
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    pub fn is_finished(&self) -> bool {
        self.tick_index >= self.total_ticks
    }

    /// Mode changes performed so far (initial modes excluded).
    pub fn mode_switches(&self) -> u64 {
        self.mode_switches
    }

    fn sample_dwell(&mut self) -> u64 {
        let seconds = self.dwell.sample(&mut self.rng);
        ((seconds / self.cfg.tick).ceil() as u64).max(1)
    }

    fn activate(&mut self, id: ViewerId, decision: AllocationDecision) {
        let dwell = self.sample_dwell();
        let v = &mut self.viewers[id as usize];
        v.status = ViewerStatus::Active;
        v.granted = decision.granted;
        v.dwell_remaining = dwell;
        v.admitted_at = self.tick_index;
    }

    fn activate_all(&mut self, admitted: Vec<Admitted>) {
        for a in admitted {
            self.activate(a.viewer, a.decision);
        }
    }

    /// Advances one tick: arrivals, mode changes and departures, queue
    /// drain, then a sample of the resulting state.
    pub fn step(&mut self) -> Result<LoadSample> {
        if self.is_finished() {
            return Err(Error::PastEnd(self.total_ticks));
        }
        self.tick_index += 1;
        let t = (self.tick_index as f64 * self.cfg.tick).min(self.cfg.duration);

        let due = arrival_count(t, &self.cfg)?;
        for id in self.viewers.len() as u64..due {
            let mode = self.sampler.sample(&mut self.rng);
            self.viewers.push(ViewerState {
                id,
                mode,
                granted: Kbps::ZERO,
                status: ViewerStatus::Queued,
                ops_executed: 1,
                dwell_remaining: 0,
                admitted_at: self.tick_index,
            });
            let decision = self
                .channels
                .admit(id, mode, &self.cfg.demands, self.tick_index)?;
            match decision.kind {
                DecisionKind::Queued => {}
                DecisionKind::Rejected => {
                    self.viewers[id as usize].status = ViewerStatus::Rejected;
                    self.rejected += 1;
                }
                _ => self.activate(id, decision),
            }
        }

        for idx in 0..self.viewers.len() {
            let v = &mut self.viewers[idx];
            if v.status != ViewerStatus::Active || v.admitted_at == self.tick_index {
                continue;
            }
            v.dwell_remaining = v.dwell_remaining.saturating_sub(1);
            if v.dwell_remaining > 0 {
                continue;
            }
            let id = v.id;
            if v.ops_executed < self.cfg.session.operations() {
                let mode = self.sampler.sample(&mut self.rng);
                let switched = self.channels.switch_mode(id, mode, &self.cfg.demands)?;
                let dwell = self.sample_dwell();
                let v = &mut self.viewers[idx];
                v.mode = mode;
                v.granted = switched.decision.granted;
                v.ops_executed += 1;
                v.dwell_remaining = dwell;
                self.mode_switches += 1;
                self.activate_all(switched.admitted);
            } else if self.cfg.persist {
                v.dwell_remaining = u64::MAX;
            } else {
                v.status = ViewerStatus::Departed;
                v.granted = Kbps::ZERO;
                self.departed += 1;
                let released = self.channels.release(id, &self.cfg.demands)?;
                self.activate_all(released.admitted);
            }
        }

        let admitted = self.channels.drain(&self.cfg.demands)?;
        self.activate_all(admitted);

        self.channels.audit()?;
        let active = self.channels.active_count() as u64;
        let queued = self.channels.queued_count() as u64;
        if active + queued + self.departed + self.rejected != self.viewers.len() as u64 {
            return Err(Error::InvariantViolation(format!(
                "active {active} + queued {queued} + departed {} + rejected {} != arrivals {}",
                self.departed,
                self.rejected,
                self.viewers.len()
            )));
        }

        let capacity = self.channels.capacity().0 as f64;
        Ok(LoadSample {
            t,
            normalized_load: self.channels.allocated().0 as f64 / capacity,
            normalized_population: if self.cfg.target_viewers == 0 {
                0.0
            } else {
                active as f64 / self.cfg.target_viewers as f64
            },
            active,
            queued,
            departed: self.departed,
            rejected_cumulative: self.rejected,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub samples: usize,
    pub peak_load: f64,
    pub mean_load: f64,
    pub total_rejected: u64,
    pub total_arrivals: u64,
    pub total_departed: u64,
    pub mode_switches: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub samples: Vec<LoadSample>,
    pub summary: RunSummary,
}

impl RunOutput {
    /// Mean normalized load over samples with `t > end - window`.
    pub fn tail_mean_load(&self, window: f64) -> f64 {
        let Some(last) = self.samples.last() else {
            return 0.0;
        };
        let cutoff = last.t - window;
        let tail: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.t > cutoff + 1e-9)
            .map(|s| s.normalized_load)
            .collect();
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

pub fn run(cfg: &SimulationConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg.clone())?;
    let mut samples = Vec::with_capacity(sim.total_ticks() as usize);
    while !sim.is_finished() {
        samples.push(sim.step()?);
    }
    let peak_load = samples
        .iter()
        .map(|s| s.normalized_load)
        .fold(0.0, f64::max);
    let mean_load = samples.iter().map(|s| s.normalized_load).sum::<f64>() / samples.len() as f64;
    let last = samples.last().copied();
    let summary = RunSummary {
        samples: samples.len(),
        peak_load,
        mean_load,
        total_rejected: last.map_or(0, |s| s.rejected_cumulative),
        total_arrivals: sim.viewers().len() as u64,
        total_departed: last.map_or(0, |s| s.departed),
        mode_switches: sim.mode_switches(),
    };
    Ok(RunOutput { samples, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub rho: f64,
    pub seed: u64,
    pub config: SimulationConfig,
    pub output: RunOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRho {
    pub rho: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub series: Vec<SweepSeries>,
    pub skipped: Vec<SkippedRho>,
}

/// Deterministic per-ρ seed (SplitMix64 finalizer over the base seed and
/// the bits of ρ, kept to 63 bits).
pub fn sub_seed(seed: u64, rho: f64) -> u64 {
    let mut z = seed ^ rho.to_bits().rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    (z ^ (z >> 31)) & MAX_SEED
}

/// Runs one simulation per demand parameter. Runs execute in parallel;
/// results come back in sweep order.
pub fn run_sweep(cfg: &SimulationConfig, sweep: &[f64]) -> Result<SweepOutput> {
    if sweep.is_empty() {
        return Err(Error::EmptySweep);
    }
    cfg.validate()?;
    if let Some(v) = sweep.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::invalid("sweep", format!("{v} must be >= 0")));
    }

    let outcomes: Vec<std::result::Result<SweepSeries, SkippedRho>> = sweep
        .par_iter()
        .map(|&rho| {
            let mut derived = cfg.with_demand_parameter(rho).map_err(|e| SkippedRho {
                rho,
                reason: e.to_string(),
            })?;
            derived.seed = sub_seed(cfg.seed, rho);
            match run(&derived) {
                Ok(output) => Ok(SweepSeries {
                    rho,
                    seed: derived.seed,
                    config: derived,
                    output,
                }),
                Err(e) => Err(SkippedRho {
                    rho,
                    reason: e.to_string(),
                }),
            }
        })
        .collect();

    let mut out = SweepOutput {
        series: Vec::new(),
        skipped: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            Ok(series) => out.series.push(series),
            Err(skip) => {
                tracing::warn!(rho = skip.rho, reason = %skip.reason, "skipping demand parameter");
                out.skipped.push(skip);
            }
        }
    }
    Ok(out)
}
