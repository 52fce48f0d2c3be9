//! TOML run configuration. Every key is optional; missing keys take the
//! defaults of [`SimulationConfig::standard`]. Bandwidths are decimal Mbps.
//!
//! ```toml
//! seed = 42
//!
//! [simulation]
//! duration = 60.0
//! tick = 0.1
//! target_viewers = 1000
//! dwell_mean = 5.0
//! queue_capacity = 10000
//! persist = false
//!
//! [session]
//! operations = 10
//! probabilities = [0.1, 0.5, 0.1, 0.1, 0.2]
//! executable_modes = 5
//!
//! [bandwidth]
//! trunk = 1000.0
//! w_min = 1.0
//! w_max = 10.0
//! reserve = 1.0
//!
//! [demands]
//! mbps = [10.0, 7.5, 5.0, 10.0, 1.0]
//!
//! [sweep]
//! values = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocation::{ChannelLimits, Kbps, ModeDemandTable};
use crate::error::{Error, Result};
use crate::model::{BandwidthConfig, SessionSpec};
use crate::sim::SimulationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub simulation: SimulationSection,
    pub session: SessionSection,
    pub bandwidth: BandwidthSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demands: Option<DemandsSection>,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub duration: f64,
    pub tick: f64,
    pub target_viewers: u64,
    pub dwell_mean: f64,
    pub queue_capacity: usize,
    pub persist: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub operations: u64,
    pub probabilities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub executable_modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandwidthSection {
    pub trunk: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub reserve: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandsSection {
    /// Per-mode demand in Mbps, in mode order.
    pub mbps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub values: Vec<f64>,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self::from_simulation(&SimulationConfig::standard())
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        FileConfig::default().simulation
    }
}

impl Default for SessionSection {
    fn default() -> Self {
        FileConfig::default().session
    }
}

impl Default for BandwidthSection {
    fn default() -> Self {
        FileConfig::default().bandwidth
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        FileConfig::default().sweep
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_simulation(cfg: &SimulationConfig) -> Self {
        Self {
            seed: cfg.seed,
            simulation: SimulationSection {
                duration: cfg.duration,
                tick: cfg.tick,
                target_viewers: cfg.target_viewers,
                dwell_mean: cfg.dwell_mean,
                queue_capacity: cfg.queue_capacity,
                persist: cfg.persist,
            },
            session: SessionSection {
                operations: cfg.session.operations(),
                probabilities: cfg.session.probs().to_vec(),
                executable_modes: Some(cfg.session.executable_modes()),
            },
            bandwidth: BandwidthSection {
                trunk: cfg.bandwidth.total(),
                w_min: cfg.bandwidth.w_min(),
                w_max: cfg.bandwidth.w_max(),
                reserve: cfg.bandwidth.reserve(),
            },
            demands: Some(DemandsSection {
                mbps: cfg.demands.demands().iter().map(|d| d.as_mbps()).collect(),
            }),
            sweep: SweepSection {
                values: cfg.sweep.clone(),
            },
        }
    }

    /// Builds the simulation config. With `strict = false` the demand table
    /// is taken as written, without range checks, so that the channel
    /// table's own invariant checks can be exercised on bad input.
    pub fn to_simulation(&self, strict: bool) -> Result<SimulationConfig> {
        let wrap = |e: Error| Error::Config(e.to_string());
        let b = &self.bandwidth;
        let bandwidth = BandwidthConfig::new(b.trunk, b.w_min, b.w_max, b.reserve).map_err(wrap)?;
        let k = self.session.probabilities.len();
        let session = SessionSpec::new(
            self.session.operations,
            self.session.probabilities.clone(),
            self.session.executable_modes.unwrap_or(k),
        )
        .map_err(wrap)?;
        let limits = ChannelLimits::from(&bandwidth);
        let demands = match &self.demands {
            None => ModeDemandTable::standard(k, &limits).map_err(wrap)?,
            Some(section) => {
                if let Some(v) = section.mbps.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(Error::Config(format!(
                        "invalid demands: {v} is not a bandwidth"
                    )));
                }
                let kbps: Vec<Kbps> = section.mbps.iter().map(|&v| Kbps::from_mbps(v)).collect();
                if strict {
                    ModeDemandTable::new(kbps, &limits).map_err(wrap)?
                } else {
                    ModeDemandTable::new_unchecked(kbps)
                }
            }
        };
        let s = &self.simulation;
        let cfg = SimulationConfig {
            duration: s.duration,
            tick: s.tick,
            target_viewers: s.target_viewers,
            session,
            bandwidth,
            demands,
            seed: self.seed,
            sweep: self.sweep.values.clone(),
            dwell_mean: s.dwell_mean,
            queue_capacity: s.queue_capacity,
            persist: s.persist,
        };
        cfg.validate().map_err(wrap)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

/// Hex SHA-256 of a text snapshot.
pub fn sha256_hex(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}
