//! Session-level probability model.
//!
//! A viewer session is `m` independent observations of which interactive
//! mode is in use. The per-session mode counts follow a multinomial law,
//! viewers are independent of each other, and the bandwidth handed to a
//! channel is uniform on `[W_min, W_max]`.
//!
//! Every product of probabilities is accumulated in log space and only
//! exponentiated at the end, so `m` in the thousands is fine.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Tolerance on `Σ p_i = 1` accepted by [`SessionSpec::new`].
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// Largest `m * k` for which [`normalized_mixed_session_weight`] will
/// enumerate compositions.
pub const NORMALIZE_ENUMERATION_CAP: u64 = 24;

/// A viewer playback operation, 1-based.
///
/// Indices 1 through 5 are the standard modes. Larger indices are allowed
/// for extended mode sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InteractiveMode(u32);

impl InteractiveMode {
    pub const FAST_FORWARD: Self = Self(1);
    pub const NORMAL: Self = Self(2);
    pub const SLOW: Self = Self(3);
    pub const REWIND: Self = Self(4);
    pub const PAUSE: Self = Self(5);

    pub const STANDARD: [Self; 5] = [
        Self::FAST_FORWARD,
        Self::NORMAL,
        Self::SLOW,
        Self::REWIND,
        Self::PAUSE,
    ];

    pub fn new(index: u32) -> Result<Self> {
        if index == 0 {
            return Err(Error::invalid("mode", "mode indices start at 1"));
        }
        Ok(Self(index))
    }

    /// Mode for a zero-based position in a probability vector.
    pub fn from_position(position: usize) -> Self {
        Self(position as u32 + 1)
    }

    pub fn index(self) -> u32 {
        self.0
    }

    pub fn position(self) -> usize {
        self.0 as usize - 1
    }

    pub fn name(self) -> Option<&'static str> {
        match self.0 {
            1 => Some("fast-forward"),
            2 => Some("normal"),
            3 => Some("slow"),
            4 => Some("rewind"),
            5 => Some("pause"),
            _ => None,
        }
    }
}

impl fmt::Display for InteractiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(name) => write!(f, "I{} ({name})", self.0),
            None => write!(f, "I{}", self.0),
        }
    }
}

/// Trunk and per-channel bandwidth bounds, in Mbps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthConfig {
    total: f64,
    w_min: f64,
    w_max: f64,
    reserve: f64,
}

impl BandwidthConfig {
    /// Requires `0 < W_min <= W_max <= B` and `0 < c <= W_min`.
    pub fn new(total: f64, w_min: f64, w_max: f64, reserve: f64) -> Result<Self> {
        for (field, v) in [
            ("trunk", total),
            ("w_min", w_min),
            ("w_max", w_max),
            ("reserve", reserve),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(field, format!("{v} must be finite and > 0")));
            }
        }
        if w_min > w_max {
            return Err(Error::invalid(
                "w_min",
                format!("{w_min} exceeds w_max {w_max}"),
            ));
        }
        if w_max > total {
            return Err(Error::invalid(
                "w_max",
                format!("{w_max} exceeds trunk {total}"),
            ));
        }
        if reserve > w_min {
            return Err(Error::invalid(
                "reserve",
                format!("{reserve} exceeds w_min {w_min}"),
            ));
        }
        Ok(Self {
            total,
            w_min,
            w_max,
            reserve,
        })
    }

    /// Trunk capacity `B`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn w_min(&self) -> f64 {
        self.w_min
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    /// Keep-alive reserve `c` held by passive modes.
    pub fn reserve(&self) -> f64 {
        self.reserve
    }

    /// `W_max - W_min`.
    pub fn range(&self) -> f64 {
        self.w_max - self.w_min
    }

    /// Ideal number of concurrent full-rate links, `B / W_max`.
    pub fn ideal_links(&self) -> f64 {
        self.total / self.w_max
    }
}

/// `m` observations over `k` mutually exclusive modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    operations: u64,
    probs: Vec<f64>,
    executable: usize,
}

impl SessionSpec {
    pub fn new(operations: u64, probs: Vec<f64>, executable: usize) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid(
                "probabilities",
                "at least one mode is required",
            ));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(
                "probabilities",
                format!("{p} is not a probability"),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::invalid(
                "probabilities",
                format!("sum is {sum}, expected 1"),
            ));
        }
        if executable == 0 || executable > probs.len() {
            return Err(Error::invalid(
                "executable_modes",
                format!("{executable} must lie in 1..={}", probs.len()),
            ));
        }
        Ok(Self {
            operations,
            probs,
            executable,
        })
    }

    /// Number of observations per session, `m`.
    pub fn operations(&self) -> u64 {
        self.operations
    }

    /// Number of modes, `k`.
    pub fn modes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Executable mode count `L`.
    pub fn executable_modes(&self) -> usize {
        self.executable
    }

    pub fn with_operations(&self, operations: u64) -> Self {
        Self {
            operations,
            ..self.clone()
        }
    }

    pub fn sampler(&self) -> ModeSampler {
        ModeSampler::new(&self.probs)
    }
}

/// How many times each mode was observed in one session.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModeCounts(Vec<u64>);

impl ModeCounts {
    pub fn new(counts: Vec<u64>) -> Self {
        Self(counts)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    fn check(&self, spec: &SessionSpec) -> Result<()> {
        if self.0.len() != spec.modes() {
            return Err(Error::DimensionMismatch {
                counts: self.0.len(),
                modes: spec.modes(),
            });
        }
        let sum = self.total();
        if sum != spec.operations() {
            return Err(Error::CountSumMismatch {
                sum,
                m: spec.operations(),
            });
        }
        Ok(())
    }
}

impl From<Vec<u64>> for ModeCounts {
    fn from(v: Vec<u64>) -> Self {
        Self(v)
    }
}

/// All ways to write `m` as an ordered sum of `k` non-negative parts.
pub fn compositions(m: u64, k: usize) -> Vec<ModeCounts> {
    fn fill(rest: u64, slot: usize, current: &mut Vec<u64>, out: &mut Vec<ModeCounts>) {
        if slot + 1 == current.len() {
            current[slot] = rest;
            out.push(ModeCounts(current.clone()));
            return;
        }
        for x in 0..=rest {
            current[slot] = x;
            fill(rest - x, slot + 1, current, out);
        }
    }

    let mut out = Vec::new();
    if k == 0 {
        if m == 0 {
            out.push(ModeCounts(Vec::new()));
        }
        return out;
    }
    fill(m, 0, &mut vec![0; k], &mut out);
    out
}

/// `ln(m! / ∏ x_i!)`.
fn ln_multinomial_coefficient(counts: &[u64]) -> f64 {
    let m: u64 = counts.iter().sum();
    ln_factorial(m) - counts.iter().map(|&x| ln_factorial(x)).sum::<f64>()
}

/// Natural log of [`multinomial_pmf`]; `-inf` for impossible outcomes.
pub fn ln_multinomial_pmf(counts: &ModeCounts, spec: &SessionSpec) -> Result<f64> {
    counts.check(spec)?;
    let mut ln_p = ln_multinomial_coefficient(counts.as_slice());
    for (&x, &p) in counts.as_slice().iter().zip(spec.probs()) {
        // 0^0 = 1
        if x == 0 {
            continue;
        }
        if p == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ln_p += x as f64 * p.ln();
    }
    Ok(ln_p)
}

/// Probability of observing exactly `counts` in one session:
/// `m! / ∏ x_i! · ∏ p_i^{x_i}`.
pub fn multinomial_pmf(counts: &ModeCounts, spec: &SessionSpec) -> Result<f64> {
    Ok(ln_multinomial_pmf(counts, spec)?.exp().min(1.0))
}

/// Joint probability for independent viewers sharing one session model.
pub fn joint_session_probability(all_counts: &[ModeCounts], spec: &SessionSpec) -> Result<f64> {
    if all_counts.is_empty() {
        return Err(Error::EmptyViewerList);
    }
    let mut ln_p = 0.0;
    for counts in all_counts {
        ln_p += ln_multinomial_pmf(counts, spec)?;
    }
    Ok(ln_p.exp().min(1.0))
}

/// `(y - W_min) / (W_max - W_min)`: the uniform allocation probability.
pub fn allocation_probability(y: f64, cfg: &BandwidthConfig) -> Result<f64> {
    if cfg.range() == 0.0 {
        return Err(Error::DegenerateRange(cfg.w_min()));
    }
    if !(cfg.w_min()..=cfg.w_max()).contains(&y) {
        return Err(Error::OutOfRange {
            value: y,
            lo: cfg.w_min(),
            hi: cfg.w_max(),
        });
    }
    Ok((y - cfg.w_min()) / cfg.range())
}

/// Closed form of `∫_{W_min}^{W_max} [(y - W_min)/(W_max - W_min)]^x dy`,
/// which is `(W_max - W_min) / (x + 1)`.
pub fn allocation_moment_integral(x: u32, cfg: &BandwidthConfig) -> f64 {
    cfg.range() / (f64::from(x) + 1.0)
}

fn ln_mixed_factor(counts: &ModeCounts, spec: &SessionSpec, cfg: &BandwidthConfig) -> Result<f64> {
    counts.check(spec)?;
    let mut ln_w = ln_multinomial_coefficient(counts.as_slice());
    for &x in counts.as_slice() {
        let x = u32::try_from(x).map_err(|_| Error::invalid("counts", "count exceeds u32"))?;
        ln_w += allocation_moment_integral(x, cfg).ln();
    }
    Ok(ln_w)
}

/// The mixed discrete/continuous session expression with each `p_i^{x_i}`
/// replaced by its integral over the allocation range.
///
/// This is a non-negative weight and is not bounded by 1. Only `m` and `k`
/// are taken from `spec`; its probabilities are not used.
pub fn mixed_session_weight(
    all_counts: &[ModeCounts],
    spec: &SessionSpec,
    cfg: &BandwidthConfig,
) -> Result<f64> {
    if all_counts.is_empty() {
        return Err(Error::EmptyViewerList);
    }
    let mut ln_w = 0.0;
    for counts in all_counts {
        ln_w += ln_mixed_factor(counts, spec, cfg)?;
    }
    Ok(ln_w.exp())
}

/// [`mixed_session_weight`] divided by its sum over every joint outcome.
///
/// The product form means each viewer's factor is normalized by the sum
/// over all compositions of `m` into `k` parts. Refuses `m * k` above
/// [`NORMALIZE_ENUMERATION_CAP`].
pub fn normalized_mixed_session_weight(
    all_counts: &[ModeCounts],
    spec: &SessionSpec,
    cfg: &BandwidthConfig,
) -> Result<f64> {
    let m = spec.operations();
    let k = spec.modes();
    if m.saturating_mul(k as u64) > NORMALIZE_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            m,
            k,
            cap: NORMALIZE_ENUMERATION_CAP,
        });
    }
    if all_counts.is_empty() {
        return Err(Error::EmptyViewerList);
    }
    let per_viewer_total: f64 = compositions(m, k)
        .iter()
        .map(|c| ln_mixed_factor(c, spec, cfg).map(f64::exp))
        .sum::<Result<f64>>()?;
    let mut ratio = 1.0;
    for counts in all_counts {
        ratio *= ln_mixed_factor(counts, spec, cfg)?.exp() / per_viewer_total;
    }
    Ok(ratio)
}

/// Categorical sampler over a session's mode probabilities.
#[derive(Debug, Clone)]
pub struct ModeSampler {
    index: WeightedIndex<f64>,
}

impl ModeSampler {
    fn new(probs: &[f64]) -> Self {
        // SessionSpec guarantees a non-empty, non-negative vector summing to 1.
        let index = WeightedIndex::new(probs).expect("validated probability vector");
        Self { index }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> InteractiveMode {
        InteractiveMode::from_position(self.index.sample(rng))
    }
}
