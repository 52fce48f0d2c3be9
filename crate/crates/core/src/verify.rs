//! Cross-checks of the exact computations against independent oracles:
//! brute-force enumeration, quadrature, Monte Carlo and replay audits.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::geometry::{
    ball_volume, ball_volume_even_form, ball_volume_odd_form, capped_simplex_volume, mc_volume,
    ConstraintRegion,
};
use crate::model::{
    allocation_moment_integral, compositions, multinomial_pmf, BandwidthConfig, SessionSpec,
};
use crate::sim::{Simulation, SimulationConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Monte Carlo points per region in the volume check.
    pub mc_samples: u64,
    pub sampler_draws: u64,
    /// Config replayed by the conservation check.
    pub replay: SimulationConfig,
}

impl VerifyOptions {
    pub fn full() -> Self {
        Self {
            mc_samples: 1_000_000,
            sampler_draws: 100_000,
            replay: SimulationConfig::standard(),
        }
    }

    pub fn quick() -> Self {
        Self {
            mc_samples: 10_000,
            ..Self::full()
        }
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    match outcome {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
            elapsed,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
            elapsed,
        },
    }
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CheckResult> {
    vec![
        pmf_normalization(),
        pmf_enumeration(),
        ball_volume_forms(),
        volume_oracle(opts.mc_samples),
        moment_quadrature(),
        sampler_fidelity(opts.sampler_draws),
        conservation_replay(&opts.replay),
    ]
}

/// A probability vector of length `k` whose entries sum to 1 up to the
/// last-entry correction.
pub fn random_probs<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|r| r / sum).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = 1.0 - head;
    p
}

/// Σ pmf over every composition is 1 for m <= 6, k <= 4.
pub fn pmf_normalization() -> CheckResult {
    timed("pmf-normalization", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = 0.0f64;
        for m in 0..=6u64 {
            for k in 1..=4usize {
                for _ in 0..20 {
                    let spec = SessionSpec::new(m, random_probs(&mut rng, k), k)
                        .map_err(|e| e.to_string())?;
                    let total = compositions(m, k)
                        .iter()
                        .map(|c| multinomial_pmf(c, &spec))
                        .sum::<crate::Result<f64>>()
                        .map_err(|e| e.to_string())?;
                    worst = worst.max((total - 1.0).abs());
                }
            }
        }
        if worst <= 1e-10 {
            Ok(format!("max |Σ - 1| = {worst:e}"))
        } else {
            Err(format!("max |Σ - 1| = {worst:e} > 1e-10"))
        }
    })
}

/// Probability of each count vector by walking all `k^m` ordered outcome
/// sequences.
pub fn enumerate_sequences(m: u32, probs: &[f64]) -> HashMap<Vec<u64>, f64> {
    let k = probs.len();
    let mut out = HashMap::new();
    let total = (k as u64).pow(m);
    for code in 0..total {
        let mut rest = code;
        let mut counts = vec![0u64; k];
        let mut p = 1.0;
        for _ in 0..m {
            let outcome = (rest % k as u64) as usize;
            rest /= k as u64;
            counts[outcome] += 1;
            p *= probs[outcome];
        }
        *out.entry(counts).or_insert(0.0) += p;
    }
    out
}

/// pmf equals the ordered-sequence enumeration for m <= 8, k <= 3.
pub fn pmf_enumeration() -> CheckResult {
    timed("pmf-enumeration", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst = 0.0f64;
        for m in 0..=8u32 {
            for k in 1..=3usize {
                let probs = random_probs(&mut rng, k);
                let spec =
                    SessionSpec::new(u64::from(m), probs.clone(), k).map_err(|e| e.to_string())?;
                for (counts, expected) in enumerate_sequences(m, &probs) {
                    let got = multinomial_pmf(&counts.into(), &spec).map_err(|e| e.to_string())?;
                    worst = worst.max((got - expected).abs());
                }
            }
        }
        if worst <= 1e-12 {
            Ok(format!("max |pmf - enumeration| = {worst:e}"))
        } else {
            Err(format!("max |pmf - enumeration| = {worst:e} > 1e-12"))
        }
    })
}

/// Γ-form ball volume against the even/odd closed forms for k = 1..12.
pub fn ball_volume_forms() -> CheckResult {
    timed("ball-volume-forms", || {
        let mut worst = 0.0f64;
        for k in 1..=12u32 {
            for r in [0.5, 1.0, 1.7] {
                let general = ball_volume(k, r).map_err(|e| e.to_string())?;
                let special = if k % 2 == 0 {
                    ball_volume_even_form(k / 2, r)
                } else {
                    ball_volume_odd_form(k / 2, r)
                };
                worst = worst.max(((general - special) / special).abs());
            }
        }
        let v3 = ball_volume(3, 1.0).map_err(|e| e.to_string())?;
        if worst > 1e-9 {
            return Err(format!("max relative gap {worst:e} > 1e-9"));
        }
        if (v3 - 4.188790).abs() > 1e-5 {
            return Err(format!("V_3(1) = {v3}"));
        }
        Ok(format!("max relative gap {worst:e}, V_3(1) = {v3:.6}"))
    })
}

/// The randomized regions used by the volume oracle check.
pub fn oracle_regions(count: usize, seed: u64) -> Vec<ConstraintRegion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.random_range(1..=6usize);
            let lo = rng.random_range(0.0..1.0);
            let side = rng.random_range(0.2..2.0);
            // keep the budget strictly inside the box's sum range
            let frac = rng.random_range(0.25..0.75);
            let budget = k as f64 * lo + frac * k as f64 * side;
            ConstraintRegion::new(k, budget, lo, lo + side).expect("generated region is valid")
        })
        .collect()
}

/// Two-sided z threshold that keeps the family-wise false-alarm rate of
/// `tests` independent comparisons at the single-test 3σ level.
pub fn family_wise_z(tests: usize) -> f64 {
    let single = erfc(3.0 / std::f64::consts::SQRT_2);
    std::f64::consts::SQRT_2 * erfc_inv(single / tests as f64)
}

/// Standardized gap `(mc - exact) / se` per oracle region.
pub fn volume_z_scores(samples: u64) -> Vec<f64> {
    use rayon::prelude::*;
    oracle_regions(ORACLE_REGIONS, 3)
        .par_iter()
        .enumerate()
        .map(|(i, region)| {
            let exact = capped_simplex_volume(region);
            let est = mc_volume(region, samples, 1000 + i as u64).expect("samples > 0");
            if est.std_error == 0.0 {
                if est.value == exact {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (est.value - exact) / est.std_error
            }
        })
        .collect()
}

pub const ORACLE_REGIONS: usize = 200;

/// Inclusion-exclusion volume against hit-or-miss Monte Carlo on 200
/// random regions, judged at a family-wise 3σ level.
pub fn volume_oracle(samples: u64) -> CheckResult {
    timed("volume-ie-vs-mc", || {
        let z = volume_z_scores(samples);
        let limit = family_wise_z(z.len());
        let worst = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let beyond_three = z.iter().filter(|v| v.abs() > 3.0).count();
        let detail = format!(
            "{} regions at {samples} samples: max |z| = {worst:.2} (limit {limit:.2}), \
             {beyond_three} beyond 3σ",
            z.len()
        );
        if worst <= limit {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Composite trapezoid rule on `panels` and `2 * panels`, combined by one
/// Richardson step to cancel the `h²` error term.
pub fn trapezoid_richardson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let trapezoid = |n: usize| {
        let h = (b - a) / n as f64;
        let interior: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (interior + 0.5 * (f(a) + f(b)))
    };
    let coarse = trapezoid(panels);
    let fine = trapezoid(2 * panels);
    (4.0 * fine - coarse) / 3.0
}

/// Closed-form moment integral against quadrature for x <= 20.
pub fn moment_quadrature() -> CheckResult {
    timed("moment-quadrature", || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let w_min = rng.random_range(0.1..5.0);
            let w_max = w_min + rng.random_range(0.1..5.0);
            let cfg = BandwidthConfig::new(w_max * 10.0, w_min, w_max, w_min)
                .map_err(|e| e.to_string())?;
            for x in 0..=20u32 {
                let closed = allocation_moment_integral(x, &cfg);
                let f = |y: f64| ((y - w_min) / (w_max - w_min)).powi(x as i32);
                let numeric = trapezoid_richardson(f, w_min, w_max, 10_000);
                worst = worst.max(((closed - numeric) / closed).abs());
            }
        }
        if worst <= 1e-9 {
            Ok(format!("max relative gap {worst:e}"))
        } else {
            Err(format!("max relative gap {worst:e} > 1e-9"))
        }
    })
}

/// Empirical mode frequencies within 3 binomial standard deviations.
pub fn sampler_fidelity(draws: u64) -> CheckResult {
    timed("sampler-fidelity", || {
        let spec = SimulationConfig::standard().session;
        let sampler = spec.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut hits = vec![0u64; spec.modes()];
        for _ in 0..draws {
            hits[sampler.sample(&mut rng).position()] += 1;
        }
        let n = draws as f64;
        let mut lines = Vec::new();
        let mut ok = true;
        for (pos, (&h, &p)) in hits.iter().zip(spec.probs()).enumerate() {
            let freq = h as f64 / n;
            let band = 3.0 * (p * (1.0 - p) / n).sqrt();
            ok &= (freq - p).abs() <= band;
            lines.push(format!("mode {}: {freq:.5} vs {p} (±{band:.5})", pos + 1));
        }
        if ok {
            Ok(lines.join(", "))
        } else {
            Err(lines.join(", "))
        }
    })
}

/// Replays a full run, auditing the channel table after every tick.
pub fn conservation_replay(cfg: &SimulationConfig) -> CheckResult {
    timed("conservation-replay", || {
        let mut sim = Simulation::new(cfg.clone()).map_err(|e| e.to_string())?;
        while !sim.is_finished() {
            let sample = sim
                .step()
                .map_err(|e| format!("tick {}: {e}", sim.tick_index()))?;
            let table = sim.channels();
            if table.allocated().0 + table.free().0 != table.capacity().0 {
                return Err(format!("tick {}: granted + free != B", sim.tick_index()));
            }
            if !(0.0..=1.0).contains(&sample.normalized_load) {
                return Err(format!(
                    "tick {}: load {} outside [0, 1]",
                    sim.tick_index(),
                    sample.normalized_load
                ));
            }
        }
        Ok(format!("{} ticks conserved", sim.total_ticks()))
    })
}
