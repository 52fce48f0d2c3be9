//! Single-viewer bandwidth geometry: ball volumes, the box-capped simplex
//! `{ Σ x_i <= W, lo <= x_i <= hi }`, and the conditional probability of an
//! active mode given that every passive mode holds the keep-alive reserve.
//!
//! Volumes are exact (inclusion-exclusion). The Monte Carlo estimators here
//! exist as independent cross-checks and for general integrands.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::model::BandwidthConfig;

/// Largest dimension accepted by [`ConstraintRegion`]. Alternating
/// inclusion-exclusion terms lose precision beyond this.
pub const MAX_DIMENSION: usize = 16;

/// `π^{k/2} / Γ(k/2 + 1)`, the volume of the unit `k`-ball.
pub fn unit_ball_volume(k: u32) -> f64 {
    let half = f64::from(k) / 2.0;
    PI.powf(half) / gamma(half + 1.0)
}

/// Volume of the Euclidean `k`-ball of radius `radius`.
pub fn ball_volume(k: u32, radius: f64) -> Result<f64> {
    if !radius.is_finite() || radius < 0.0 {
        return Err(Error::invalid(
            "radius",
            format!("{radius} must be finite and >= 0"),
        ));
    }
    if k == 0 {
        return Ok(1.0);
    }
    Ok(unit_ball_volume(k) * radius.powi(k as i32))
}

/// Even-dimension form `V_{2j}(R) = π^j / j! · R^{2j}`.
pub fn ball_volume_even_form(j: u32, radius: f64) -> f64 {
    let factorial: f64 = (1..=j).map(f64::from).product();
    PI.powi(j as i32) / factorial * radius.powi(2 * j as i32)
}

/// Odd-dimension form `V_{2j+1}(R) = 2^{j+1} π^j / (2j+1)!! · R^{2j+1}`.
pub fn ball_volume_odd_form(j: u32, radius: f64) -> f64 {
    let double_factorial: f64 = (0..=j).map(|i| f64::from(2 * i + 1)).product();
    2f64.powi(j as i32 + 1) * PI.powi(j as i32) / double_factorial * radius.powi(2 * j as i32 + 1)
}

/// `{ x ∈ R^k : Σ x_i <= budget, lo <= x_i <= hi }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRegion {
    dim: usize,
    budget: f64,
    lo: f64,
    hi: f64,
}

impl ConstraintRegion {
    pub fn new(dim: usize, budget: f64, lo: f64, hi: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(Error::invalid(
                "k",
                format!("{dim} must lie in 1..={MAX_DIMENSION}"),
            ));
        }
        if !budget.is_finite() || budget < 0.0 {
            return Err(Error::invalid(
                "w",
                format!("{budget} must be finite and >= 0"),
            ));
        }
        if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || lo > hi {
            return Err(Error::invalid(
                "bounds",
                format!("need 0 <= lo <= hi, got lo = {lo}, hi = {hi}"),
            ));
        }
        Ok(Self {
            dim,
            budget,
            lo,
            hi,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Volume of the bounding box `[lo, hi]^k`.
    pub fn box_volume(&self) -> f64 {
        (self.hi - self.lo).powi(self.dim as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter().all(|&v| v >= self.lo && v <= self.hi)
            && x.iter().sum::<f64>() <= self.budget
    }

    /// Every box point satisfies the budget.
    fn budget_inactive(&self) -> bool {
        self.budget >= self.dim as f64 * self.hi
    }

    /// No box point satisfies the budget.
    fn budget_infeasible(&self) -> bool {
        self.budget < self.dim as f64 * self.lo
    }
}

/// Exact volume of a [`ConstraintRegion`] by inclusion-exclusion over the
/// faces of the shifted box.
pub fn capped_simplex_volume(region: &ConstraintRegion) -> f64 {
    let k = region.dim;
    let side = region.hi - region.lo;
    let slack = region.budget - k as f64 * region.lo;
    let full = region.box_volume();
    if slack <= 0.0 {
        return 0.0;
    }
    if slack >= k as f64 * side {
        return full;
    }

    let mut sum = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        let reach = slack - j as f64 * side;
        if reach <= 0.0 {
            break;
        }
        let term = binom * reach.powi(k as i32);
        sum += if j % 2 == 0 { term } else { -term };
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    let k_factorial: f64 = (1..=k).map(|i| i as f64).product();
    (sum / k_factorial).clamp(0.0, full)
}

/// A Monte Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl McEstimate {
    /// `|value - reference| <= sigmas * std_error`.
    pub fn agrees_with(&self, reference: f64, sigmas: f64) -> bool {
        (self.value - reference).abs() <= sigmas * self.std_error
    }
}

/// Hit-or-miss volume estimate: uniform points in `[lo, hi]^k`, counting
/// those under the budget. Deterministic in `(region, samples, seed)`.
pub fn mc_volume(region: &ConstraintRegion, samples: u64, seed: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::invalid("samples", "at least one sample is required"));
    }
    let full = region.box_volume();
    if region.budget_inactive() {
        return Ok(McEstimate {
            value: full,
            std_error: 0.0,
            samples,
        });
    }
    if region.budget_infeasible() {
        return Ok(McEstimate {
            value: 0.0,
            std_error: 0.0,
            samples,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = region.hi - region.lo;
    let mut hits = 0u64;
    for _ in 0..samples {
        let mut sum = 0.0;
        for _ in 0..region.dim {
            sum += region.lo + side * rng.random::<f64>();
        }
        if sum <= region.budget {
            hits += 1;
        }
    }
    let n = samples as f64;
    let p = hits as f64 / n;
    Ok(McEstimate {
        value: p * full,
        std_error: full * (p * (1.0 - p) / n).sqrt(),
        samples,
    })
}

/// Monte Carlo estimate of `∫_region f(x) dx` for an arbitrary integrand.
pub fn mc_integral<F>(
    region: &ConstraintRegion,
    samples: u64,
    seed: u64,
    f: F,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    if samples < 2 {
        return Err(Error::invalid(
            "samples",
            "at least two samples are required",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = region.hi - region.lo;
    let full = region.box_volume();
    let mut point = vec![0.0; region.dim];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..samples {
        for x in point.iter_mut() {
            *x = region.lo + side * rng.random::<f64>();
        }
        let y = if point.iter().sum::<f64>() <= region.budget {
            f(&point)
        } else {
            0.0
        };
        // Welford
        let delta = y - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (y - mean);
    }
    let n = samples as f64;
    let variance = m2 / (n - 1.0);
    Ok(McEstimate {
        value: mean * full,
        std_error: full * (variance / n).sqrt(),
        samples,
    })
}

/// Per-mode bandwidth demands of one viewer with one mode under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDemandVector {
    demands: Vec<f64>,
    active: usize,
}

impl ModeDemandVector {
    pub fn new(demands: Vec<f64>, active: usize) -> Result<Self> {
        if demands.is_empty() {
            return Err(Error::EmptyDemand);
        }
        if let Some(b) = demands.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::invalid("demands", format!("{b} is not a bandwidth")));
        }
        if active >= demands.len() {
            return Err(Error::invalid(
                "active",
                format!("index {active} out of range for {} modes", demands.len()),
            ));
        }
        if demands[active] == 0.0 {
            return Err(Error::invalid(
                "demands",
                "the active mode needs a non-zero demand",
            ));
        }
        Ok(Self { demands, active })
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn active_demand(&self) -> f64 {
        self.demands[self.active]
    }

    pub fn modes(&self) -> usize {
        self.demands.len()
    }

    pub fn max_demand(&self) -> f64 {
        self.demands
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Largest entry of a demand vector.
pub fn max_demand(demands: &[f64]) -> Result<f64> {
    demands
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyDemand)
}

/// The session bandwidth `W = max b_i`, provided it clears `W_min`.
pub fn session_bandwidth(demands: &[f64], cfg: &BandwidthConfig) -> Result<f64> {
    let peak = max_demand(demands)?;
    if peak < cfg.w_min() {
        return Err(Error::UnderProvisioned {
            peak,
            w_min: cfg.w_min(),
        });
    }
    Ok(peak)
}

/// Result of [`conditional_mode_probability`]. `raw` may exceed 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalProbability {
    pub numerator: f64,
    pub normalizer: f64,
    pub raw: f64,
    pub clamped: f64,
}

/// `π^{k/2}/Γ(k/2+1) · c^{k-1} · W_max`.
pub fn conditional_normalizer(k: usize, cfg: &BandwidthConfig) -> f64 {
    unit_ball_volume(k as u32) * cfg.reserve().powi(k as i32 - 1) * cfg.w_max()
}

/// Probability of the active mode's sub-session given every passive mode
/// sits at the reserve.
///
/// The numerator is the volume of a slab of thickness `b_active` (the
/// active coordinate) times the `(k-1)`-dimensional capped simplex of the
/// passive coordinates, each in `[0, W_max]`, sharing the budget left after
/// the active demand. The normalizer is [`conditional_normalizer`].
pub fn conditional_mode_probability(
    demand: &ModeDemandVector,
    cfg: &BandwidthConfig,
    w: f64,
) -> Result<ConditionalProbability> {
    if !w.is_finite() || w < 0.0 {
        return Err(Error::invalid("w", format!("{w} must be finite and >= 0")));
    }
    let k = demand.modes();
    if k - 1 > MAX_DIMENSION {
        return Err(Error::invalid(
            "demands",
            format!("{k} modes exceeds the supported {} ", MAX_DIMENSION + 1),
        ));
    }
    let normalizer = conditional_normalizer(k, cfg);
    if !(normalizer.is_finite() && normalizer > 0.0) {
        return Err(Error::DegenerateNormalizer(format!(
            "k = {k}, c = {}, W_max = {}",
            cfg.reserve(),
            cfg.w_max()
        )));
    }

    let slab = demand.active_demand();
    let remaining = w - slab;
    let numerator = if remaining < 0.0 {
        0.0
    } else if k == 1 {
        slab
    } else {
        let passive = ConstraintRegion::new(k - 1, remaining, 0.0, cfg.w_max())?;
        slab * capped_simplex_volume(&passive)
    };
    let raw = numerator / normalizer;
    Ok(ConditionalProbability {
        numerator,
        normalizer,
        raw,
        clamped: raw.clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ball_volume_examples() {
        assert_relative_eq!(ball_volume(2, 1.0).unwrap(), PI, max_relative = 1e-12);
        assert_relative_eq!(
            ball_volume(3, 1.0).unwrap(),
            4.0 * PI / 3.0,
            max_relative = 1e-12
        );
        assert!((ball_volume(3, 1.0).unwrap() - 4.188790).abs() < 1e-5);
        assert_eq!(ball_volume(0, 7.5).unwrap(), 1.0);
        assert_relative_eq!(ball_volume(1, 2.5).unwrap(), 5.0, max_relative = 1e-12);
        assert!(ball_volume(3, -1.0).is_err());
    }

    #[test]
    fn ball_volume_special_forms_agree() {
        for r in [0.5, 1.0, 2.0] {
            for j in 1..=6 {
                let general = ball_volume(2 * j, r).unwrap();
                assert_relative_eq!(general, ball_volume_even_form(j, r), max_relative = 1e-9);
            }
            for j in 0..=5 {
                let general = ball_volume(2 * j + 1, r).unwrap();
                assert_relative_eq!(general, ball_volume_odd_form(j, r), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn capped_simplex_examples() {
        let tri = ConstraintRegion::new(2, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(capped_simplex_volume(&tri), 0.5, max_relative = 1e-15);
        let cut = ConstraintRegion::new(2, 1.5, 0.0, 1.0).unwrap();
        assert_relative_eq!(capped_simplex_volume(&cut), 0.875, max_relative = 1e-15);
        let cube = ConstraintRegion::new(3, 10.0, 0.0, 1.0).unwrap();
        assert_eq!(capped_simplex_volume(&cube), 1.0);
        let empty = ConstraintRegion::new(3, 2.9, 1.0, 2.0).unwrap();
        assert_eq!(capped_simplex_volume(&empty), 0.0);
    }

    #[test]
    fn capped_simplex_shifted_bounds() {
        // [1,2]^2 under x+y <= 3.5 is the unit square minus a corner
        // triangle with legs 0.5.
        let r = ConstraintRegion::new(2, 3.5, 1.0, 2.0).unwrap();
        assert_relative_eq!(capped_simplex_volume(&r), 1.0 - 0.125, max_relative = 1e-14);
    }

    #[test]
    fn region_validation() {
        assert!(ConstraintRegion::new(0, 1.0, 0.0, 1.0).is_err());
        assert!(ConstraintRegion::new(17, 1.0, 0.0, 1.0).is_err());
        assert!(ConstraintRegion::new(2, -1.0, 0.0, 1.0).is_err());
        assert!(ConstraintRegion::new(2, 1.0, 2.0, 1.0).is_err());
        assert!(ConstraintRegion::new(2, 1.0, -0.5, 1.0).is_err());
    }

    #[test]
    fn mc_volume_triangle() {
        let tri = ConstraintRegion::new(2, 1.0, 0.0, 1.0).unwrap();
        let est = mc_volume(&tri, 1_000_000, 7).unwrap();
        assert!(est.agrees_with(0.5, 3.0), "{est:?}");
        assert_eq!(est, mc_volume(&tri, 1_000_000, 7).unwrap());
    }

    #[test]
    fn mc_volume_degenerate_regions() {
        let all = ConstraintRegion::new(3, 9.0, 0.5, 2.0).unwrap();
        let est = mc_volume(&all, 100, 1).unwrap();
        assert_eq!(est.value, 1.5f64.powi(3));
        assert_eq!(est.std_error, 0.0);

        let none = ConstraintRegion::new(3, 1.0, 0.5, 2.0).unwrap();
        let est = mc_volume(&none, 100, 1).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(mc_volume(&none, 0, 1).is_err());
    }

    #[test]
    fn mc_integral_constant_matches_volume() {
        let r = ConstraintRegion::new(3, 1.8, 0.0, 1.0).unwrap();
        let exact = capped_simplex_volume(&r);
        let est = mc_integral(&r, 200_000, 3, |_| 1.0).unwrap();
        assert!(est.agrees_with(exact, 4.0), "{est:?} vs {exact}");
        // ∫ over the unit triangle of x dx dy = 1/6
        let tri = ConstraintRegion::new(2, 1.0, 0.0, 1.0).unwrap();
        let est = mc_integral(&tri, 200_000, 4, |x| x[0]).unwrap();
        assert!(est.agrees_with(1.0 / 6.0, 4.0), "{est:?}");
    }

    #[test]
    fn max_demand_examples() {
        assert_eq!(max_demand(&[2.0, 0.5, 1.0]).unwrap(), 2.0);
        assert_eq!(max_demand(&[0.75]).unwrap(), 0.75);
        assert_eq!(max_demand(&[1.5, 1.5, 1.5]).unwrap(), 1.5);
        assert_eq!(max_demand(&[]), Err(Error::EmptyDemand));

        let cfg = BandwidthConfig::new(100.0, 0.75, 4.0, 0.5).unwrap();
        assert_eq!(session_bandwidth(&[0.75], &cfg).unwrap(), 0.75);
        assert!(matches!(
            session_bandwidth(&[0.5, 0.6], &cfg),
            Err(Error::UnderProvisioned { .. })
        ));
    }

    #[test]
    fn demand_vector_validation() {
        assert_eq!(ModeDemandVector::new(vec![], 0), Err(Error::EmptyDemand));
        assert!(ModeDemandVector::new(vec![1.0, 0.0], 1).is_err());
        assert!(ModeDemandVector::new(vec![1.0, -1.0], 0).is_err());
        assert!(ModeDemandVector::new(vec![1.0], 1).is_err());
        let d = ModeDemandVector::new(vec![1.0, 0.0, 3.0], 0).unwrap();
        assert_eq!(d.max_demand(), 3.0);
    }

    #[test]
    fn conditional_single_mode_is_length_over_diameter() {
        let cfg = BandwidthConfig::new(100.0, 1.0, 4.0, 1.0).unwrap();
        let w = 3.0;
        let d = ModeDemandVector::new(vec![w], 0).unwrap();
        let p = conditional_mode_probability(&d, &cfg, w).unwrap();
        assert_relative_eq!(p.raw, w / (2.0 * cfg.w_max()), max_relative = 1e-12);
        assert_eq!(p.clamped, p.raw);

        // The 1-D region [0, W_max] under the budget W has length W.
        let line = ConstraintRegion::new(1, w, 0.0, cfg.w_max()).unwrap();
        let est = mc_volume(&line, 200_000, 11).unwrap();
        assert!(est.agrees_with(p.numerator, 4.0));
    }

    #[test]
    fn conditional_empty_budget_is_zero() {
        let cfg = BandwidthConfig::new(100.0, 1.0, 4.0, 1.0).unwrap();
        let d = ModeDemandVector::new(vec![3.0, 1.0, 1.0], 0).unwrap();
        for w in [0.0, 2.0, 3.0] {
            let p = conditional_mode_probability(&d, &cfg, w).unwrap();
            assert_eq!(p.raw, 0.0, "w = {w}");
            assert_eq!(p.clamped, 0.0);
        }
    }

    #[test]
    fn conditional_reports_unclamped_ratio() {
        // small reserve makes the ball normalizer tiny
        let cfg = BandwidthConfig::new(100.0, 1.0, 4.0, 0.1).unwrap();
        let d = ModeDemandVector::new(vec![4.0, 1.0, 1.0], 0).unwrap();
        let p = conditional_mode_probability(&d, &cfg, 8.0).unwrap();
        assert!(p.raw > 1.0);
        assert_eq!(p.clamped, 1.0);
    }

    proptest! {
        #[test]
        fn volume_monotone_in_budget_and_bounds(
            k in 1usize..7,
            lo in 0.0f64..1.0,
            side in 0.05f64..2.0,
            w in 0.0f64..12.0,
            dw in 0.0f64..2.0,
            dside in 0.0f64..0.5,
            dlo in 0.0f64..0.5,
        ) {
            let hi = lo + side;
            let base = capped_simplex_volume(&ConstraintRegion::new(k, w, lo, hi).unwrap());
            let more_w = capped_simplex_volume(&ConstraintRegion::new(k, w + dw, lo, hi).unwrap());
            let more_hi = capped_simplex_volume(&ConstraintRegion::new(k, w, lo, hi + dside).unwrap());
            let more_lo = capped_simplex_volume(
                &ConstraintRegion::new(k, w, (lo + dlo).min(hi), hi).unwrap(),
            );
            let tol = 1e-9 * (hi + dside).powi(k as i32).max(1.0);
            prop_assert!(more_w + tol >= base);
            prop_assert!(more_hi + tol >= base);
            prop_assert!(more_lo <= base + tol);
            prop_assert!(base >= 0.0 && base <= (hi - lo).powi(k as i32) + tol);
        }

        #[test]
        fn conditional_monotone_in_budget(
            k in 1usize..7,
            b in 0.1f64..4.0,
            w in 0.0f64..20.0,
            dw in 0.0f64..5.0,
        ) {
            let cfg = BandwidthConfig::new(1000.0, 1.0, 4.0, 1.0).unwrap();
            let mut demands = vec![1.0; k];
            demands[0] = b;
            let d = ModeDemandVector::new(demands, 0).unwrap();
            let lo = conditional_mode_probability(&d, &cfg, w).unwrap();
            let hi = conditional_mode_probability(&d, &cfg, w + dw).unwrap();
            prop_assert!(hi.raw + 1e-12 >= lo.raw);
            prop_assert!(hi.clamped >= lo.clamped);
            prop_assert!((0.0..=1.0).contains(&lo.clamped));
        }

        #[test]
        fn normalizer_bounded_by_full_ball(
            k in 1usize..14,
            w_max in 0.5f64..10.0,
            frac in 0.01f64..1.0,
        ) {
            let c = w_max * frac;
            let cfg = BandwidthConfig::new(1000.0, c, w_max, c).unwrap();
            let bound = unit_ball_volume(k as u32) * w_max.powi(k as i32);
            prop_assert!(conditional_normalizer(k, &cfg) <= bound * (1.0 + 1e-12));
        }
    }
}
