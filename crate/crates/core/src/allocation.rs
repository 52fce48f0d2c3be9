//! Channel allocation on a shared trunk.
//!
//! New connections first try to get their mode's full demand, fall back to
//! whatever is left as long as it clears `W_min`, and otherwise wait in a
//! bounded FIFO at the proxy. Bandwidth is accounted in integer kbps so the
//! conservation check `Σ granted + free = B` is exact.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{BandwidthConfig, InteractiveMode};

pub type ViewerId = u64;

/// Default proxy queue bound.
pub const DEFAULT_QUEUE_CAPACITY: usize = 10_000;

/// Bandwidth in integer kilobits per second.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Kbps(pub u64);

impl Kbps {
    pub const ZERO: Kbps = Kbps(0);

    /// Rounds a decimal Mbps value to the nearest kbps.
    pub fn from_mbps(mbps: f64) -> Self {
        Kbps((mbps * 1000.0).round().max(0.0) as u64)
    }

    pub fn as_mbps(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, rhs: Kbps) -> Kbps {
        Kbps(self.0.saturating_sub(rhs.0))
    }
}

impl std::ops::Add for Kbps {
    type Output = Kbps;
    fn add(self, rhs: Kbps) -> Kbps {
        Kbps(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Kbps {
    type Output = Kbps;
    fn sub(self, rhs: Kbps) -> Kbps {
        Kbps(self.0 - rhs.0)
    }
}

impl fmt::Display for Kbps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} kbps", self.0)
    }
}

/// Trunk limits in kbps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelLimits {
    pub capacity: Kbps,
    pub w_min: Kbps,
    pub w_max: Kbps,
    pub reserve: Kbps,
}

impl From<&BandwidthConfig> for ChannelLimits {
    fn from(cfg: &BandwidthConfig) -> Self {
        Self {
            capacity: Kbps::from_mbps(cfg.total()),
            w_min: Kbps::from_mbps(cfg.w_min()),
            w_max: Kbps::from_mbps(cfg.w_max()),
            reserve: Kbps::from_mbps(cfg.reserve()),
        }
    }
}

/// Per-mode bandwidth demands.
///
/// Every demand lies in `[W_min, W_max]`, except pause, which holds exactly
/// the keep-alive reserve `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeDemandTable {
    demands: Vec<Kbps>,
}

impl ModeDemandTable {
    pub fn new(demands: Vec<Kbps>, limits: &ChannelLimits) -> Result<Self> {
        if demands.is_empty() {
            return Err(Error::invalid("demands", "at least one mode is required"));
        }
        for (pos, &d) in demands.iter().enumerate() {
            let mode = InteractiveMode::from_position(pos);
            if mode == InteractiveMode::PAUSE {
                if d != limits.reserve {
                    return Err(Error::invalid(
                        "demands",
                        format!("{mode} must demand the reserve {}, got {d}", limits.reserve),
                    ));
                }
            } else if d < limits.w_min || d > limits.w_max {
                return Err(Error::invalid(
                    "demands",
                    format!(
                        "{mode} demand {d} outside [{}, {}]",
                        limits.w_min, limits.w_max
                    ),
                ));
            }
        }
        Ok(Self { demands })
    }

    /// Builds a table without range checks. Intended for fault-injection
    /// fixtures; the channel table will reject out-of-range grants.
    pub fn new_unchecked(demands: Vec<Kbps>) -> Self {
        Self { demands }
    }

    /// Demands as fractions of `W_max`, each clamped into `[W_min, W_max]`,
    /// with pause pinned to the reserve.
    pub fn from_fractions(fractions: &[f64], limits: &ChannelLimits) -> Result<Self> {
        let demands = fractions
            .iter()
            .enumerate()
            .map(|(pos, &f)| {
                if InteractiveMode::from_position(pos) == InteractiveMode::PAUSE {
                    limits.reserve
                } else {
                    Kbps((limits.w_max.0 as f64 * f).round() as u64)
                        .clamp(limits.w_min, limits.w_max)
                }
            })
            .collect();
        Self::new(demands, limits)
    }

    /// Fast-forward and rewind at `W_max`, normal at 3/4, slow at 1/2 and
    /// pause at the reserve. Modes past the fifth default to `W_max`.
    pub fn standard(modes: usize, limits: &ChannelLimits) -> Result<Self> {
        let fractions: Vec<f64> = (0..modes).map(default_fraction).collect();
        Self::from_fractions(&fractions, limits)
    }

    /// Every mode at the reserve `c`.
    pub fn reserve_only(modes: usize, limits: &ChannelLimits) -> Self {
        Self {
            demands: vec![limits.reserve; modes],
        }
    }

    pub fn demand(&self, mode: InteractiveMode) -> Result<Kbps> {
        self.demands
            .get(mode.position())
            .copied()
            .ok_or(Error::UnknownMode(mode))
    }

    pub fn demands(&self) -> &[Kbps] {
        &self.demands
    }

    pub fn modes(&self) -> usize {
        self.demands.len()
    }
}

/// Default demand of a mode as a fraction of `W_max`.
pub fn default_fraction(position: usize) -> f64 {
    match position {
        0 => 1.0,
        1 => 0.75,
        2 => 0.5,
        3 => 1.0,
        4 => 0.0,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    /// Granted the full mode demand.
    Full,
    /// Granted less than the demand but more than `W_min`.
    Adjusted,
    /// Granted exactly `W_min`.
    Floor,
    Queued,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocationDecision {
    pub kind: DecisionKind,
    pub granted: Kbps,
}

impl AllocationDecision {
    fn waiting(kind: DecisionKind) -> Self {
        Self {
            kind,
            granted: Kbps::ZERO,
        }
    }
}

/// A request sitting in the proxy queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingRequest {
    pub viewer: ViewerId,
    pub mode: InteractiveMode,
    pub arrival_tick: u64,
}

/// A queued request that was granted a channel during a drain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admitted {
    pub viewer: ViewerId,
    pub mode: InteractiveMode,
    pub decision: AllocationDecision,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Released {
    pub freed: Kbps,
    pub admitted: Vec<Admitted>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Switched {
    pub decision: AllocationDecision,
    pub admitted: Vec<Admitted>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Grant {
    mode: InteractiveMode,
    granted: Kbps,
}

/// Trunk state: who holds how much, what is free, and who is waiting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelTable {
    limits: ChannelLimits,
    free: Kbps,
    allocated: Kbps,
    allocations: BTreeMap<ViewerId, Grant>,
    queue: VecDeque<PendingRequest>,
    queue_capacity: usize,
    rejected: u64,
}

impl ChannelTable {
    pub fn new(limits: ChannelLimits, queue_capacity: usize) -> Self {
        Self {
            limits,
            free: limits.capacity,
            allocated: Kbps::ZERO,
            allocations: BTreeMap::new(),
            queue: VecDeque::new(),
            queue_capacity,
            rejected: 0,
        }
    }

    pub fn limits(&self) -> &ChannelLimits {
        &self.limits
    }

    pub fn capacity(&self) -> Kbps {
        self.limits.capacity
    }

    pub fn free(&self) -> Kbps {
        self.free
    }

    pub fn allocated(&self) -> Kbps {
        self.allocated
    }

    pub fn granted(&self, viewer: ViewerId) -> Option<Kbps> {
        self.allocations.get(&viewer).map(|g| g.granted)
    }

    pub fn mode(&self, viewer: ViewerId) -> Option<InteractiveMode> {
        self.allocations.get(&viewer).map(|g| g.mode)
    }

    pub fn active_count(&self) -> usize {
        self.allocations.len()
    }

    pub fn queue(&self) -> &VecDeque<PendingRequest> {
        &self.queue
    }

    pub fn queued_count(&self) -> usize {
        self.queue.len()
    }

    pub fn rejected_count(&self) -> u64 {
        self.rejected
    }

    pub fn is_queued(&self, viewer: ViewerId) -> bool {
        self.queue.iter().any(|r| r.viewer == viewer)
    }

    /// Requests a channel for a new connection.
    pub fn admit(
        &mut self,
        viewer: ViewerId,
        mode: InteractiveMode,
        table: &ModeDemandTable,
        arrival_tick: u64,
    ) -> Result<AllocationDecision> {
        if self.allocations.contains_key(&viewer) || self.is_queued(viewer) {
            return Err(Error::DuplicateViewer(viewer));
        }
        let demand = table.demand(mode)?;
        // Later arrivals never overtake the queue.
        if self.queue.is_empty() {
            if let Some(decision) = self.try_grant(viewer, mode, demand)? {
                return Ok(decision);
            }
        }
        if self.queue.len() < self.queue_capacity {
            self.queue.push_back(PendingRequest {
                viewer,
                mode,
                arrival_tick,
            });
            Ok(AllocationDecision::waiting(DecisionKind::Queued))
        } else {
            self.rejected += 1;
            Ok(AllocationDecision::waiting(DecisionKind::Rejected))
        }
    }

    fn try_grant(
        &mut self,
        viewer: ViewerId,
        mode: InteractiveMode,
        demand: Kbps,
    ) -> Result<Option<AllocationDecision>> {
        if self.free < self.limits.w_min {
            return Ok(None);
        }
        let granted = demand.min(self.free);
        let kind = if granted == demand {
            DecisionKind::Full
        } else if granted > self.limits.w_min {
            DecisionKind::Adjusted
        } else {
            DecisionKind::Floor
        };
        self.check_grant(viewer, granted)?;
        self.free = self.free - granted;
        self.allocated = self.allocated + granted;
        self.allocations.insert(viewer, Grant { mode, granted });
        self.check_conservation()?;
        Ok(Some(AllocationDecision { kind, granted }))
    }

    /// Ends a viewer's session and hands the freed bandwidth to the queue.
    pub fn release(&mut self, viewer: ViewerId, table: &ModeDemandTable) -> Result<Released> {
        let grant = self
            .allocations
            .remove(&viewer)
            .ok_or(Error::UnknownViewer(viewer))?;
        self.free = self.free + grant.granted;
        self.allocated = self.allocated - grant.granted;
        self.check_conservation()?;
        let admitted = self.drain(table)?;
        Ok(Released {
            freed: grant.granted,
            admitted,
        })
    }

    /// Drops a waiting request from the queue. Returns whether it was there.
    pub fn withdraw(&mut self, viewer: ViewerId) -> bool {
        match self.queue.iter().position(|r| r.viewer == viewer) {
            Some(pos) => {
                self.queue.remove(pos);
                true
            }
            None => false,
        }
    }

    /// Moves an active viewer to a new mode. A viewer holds one channel no
    /// matter how many windows it has open, so this re-targets that channel.
    pub fn switch_mode(
        &mut self,
        viewer: ViewerId,
        mode: InteractiveMode,
        table: &ModeDemandTable,
    ) -> Result<Switched> {
        let current = self
            .allocations
            .get(&viewer)
            .copied()
            .ok_or(Error::UnknownViewer(viewer))?;
        let target = table.demand(mode)?;

        let (granted, admitted) = if target >= current.granted {
            let granted = current.granted + (target - current.granted).min(self.free);
            self.check_grant(viewer, granted)?;
            let extra = granted - current.granted;
            self.free = self.free - extra;
            self.allocated = self.allocated + extra;
            self.allocations.insert(viewer, Grant { mode, granted });
            self.check_conservation()?;
            (granted, Vec::new())
        } else {
            self.check_grant(viewer, target)?;
            let surplus = current.granted - target;
            self.free = self.free + surplus;
            self.allocated = self.allocated - surplus;
            self.allocations.insert(
                viewer,
                Grant {
                    mode,
                    granted: target,
                },
            );
            self.check_conservation()?;
            (target, self.drain(table)?)
        };

        let kind = if granted == target {
            DecisionKind::Full
        } else {
            DecisionKind::Adjusted
        };
        Ok(Switched {
            decision: AllocationDecision { kind, granted },
            admitted,
        })
    }

    /// Admits queued requests head-first while the head can be served.
    pub fn drain(&mut self, table: &ModeDemandTable) -> Result<Vec<Admitted>> {
        let mut admitted = Vec::new();
        while let Some(&head) = self.queue.front() {
            let demand = table.demand(head.mode)?;
            match self.try_grant(head.viewer, head.mode, demand)? {
                Some(decision) => {
                    self.queue.pop_front();
                    admitted.push(Admitted {
                        viewer: head.viewer,
                        mode: head.mode,
                        decision,
                    });
                }
                None => break,
            }
        }
        Ok(admitted)
    }

    fn check_grant(&self, viewer: ViewerId, granted: Kbps) -> Result<()> {
        if granted < self.limits.reserve || granted > self.limits.w_max {
            return Err(Error::InvariantViolation(format!(
                "viewer {viewer} would hold {granted}, outside [{}, {}]",
                self.limits.reserve, self.limits.w_max
            )));
        }
        Ok(())
    }

    fn check_conservation(&self) -> Result<()> {
        if self.allocated.0 + self.free.0 != self.limits.capacity.0 {
            return Err(Error::InvariantViolation(format!(
                "allocated {} + free {} != capacity {}",
                self.allocated, self.free, self.limits.capacity
            )));
        }
        Ok(())
    }

    /// Full recount of every invariant, `O(viewers)`.
    pub fn audit(&self) -> Result<()> {
        let recount: u64 = self.allocations.values().map(|g| g.granted.0).sum();
        if recount != self.allocated.0 {
            return Err(Error::InvariantViolation(format!(
                "grants sum to {recount} kbps but {} is booked",
                self.allocated
            )));
        }
        self.check_conservation()?;
        for (&viewer, grant) in &self.allocations {
            self.check_grant(viewer, grant.granted)?;
        }
        if self.queue.len() > self.queue_capacity {
            return Err(Error::InvariantViolation(format!(
                "queue holds {} > capacity {}",
                self.queue.len(),
                self.queue_capacity
            )));
        }
        Ok(())
    }
}

/// `k · W_max / B`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DemandParameter(pub f64);

impl DemandParameter {
    pub fn value(self) -> f64 {
        self.0
    }

    /// The offered demand exceeds the trunk.
    pub fn is_over_unity(self) -> bool {
        self.0 > 1.0
    }
}

pub fn unified_demand_parameter(k: usize, cfg: &BandwidthConfig) -> Result<DemandParameter> {
    if k == 0 {
        return Err(Error::invalid("k", "at least one mode is required"));
    }
    Ok(DemandParameter(k as f64 * cfg.w_max() / cfg.total()))
}

/// `W_max = ρ · B / k`, the per-channel ceiling that yields demand
/// parameter `ρ`.
pub fn w_max_for_parameter(rho: f64, k: usize, total: f64) -> f64 {
    rho * total / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MAX: Kbps = Kbps(10_000);
    const MIN: Kbps = Kbps(1_000);

    fn limits(capacity: u64) -> ChannelLimits {
        ChannelLimits {
            capacity: Kbps(capacity),
            w_min: MIN,
            w_max: MAX,
            reserve: Kbps(500),
        }
    }

    fn table(l: &ChannelLimits) -> ModeDemandTable {
        ModeDemandTable::standard(5, l).unwrap()
    }

    const FF: InteractiveMode = InteractiveMode::FAST_FORWARD;
    const NORMAL: InteractiveMode = InteractiveMode::NORMAL;
    const PAUSE: InteractiveMode = InteractiveMode::PAUSE;

    #[test]
    fn standard_table_values() {
        let l = limits(100_000);
        let t = table(&l);
        assert_eq!(
            t.demands(),
            &[
                Kbps(10_000),
                Kbps(7_500),
                Kbps(5_000),
                Kbps(10_000),
                Kbps(500)
            ]
        );
    }

    #[test]
    fn table_rejects_out_of_range_demand() {
        let l = limits(100_000);
        let err = ModeDemandTable::new(vec![Kbps(12_000), Kbps(5_000)], &l);
        assert!(err.is_err());
        let pause_wrong = ModeDemandTable::new(vec![MAX, MAX, MAX, MAX, Kbps(1_000)], &l);
        assert!(pause_wrong.is_err());
    }

    #[test]
    fn empty_system_grants_w_max() {
        let l = limits(100_000);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        let d = ch.admit(1, FF, &t, 0).unwrap();
        assert_eq!(
            d,
            AllocationDecision {
                kind: DecisionKind::Full,
                granted: MAX
            }
        );
        assert_eq!(ch.free(), Kbps(90_000));
    }

    #[test]
    fn exactly_w_min_free_gives_floor() {
        let l = limits(11_000);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, FF, &t, 0).unwrap();
        assert_eq!(ch.free(), MIN);
        let d = ch.admit(2, FF, &t, 0).unwrap();
        assert_eq!(
            d,
            AllocationDecision {
                kind: DecisionKind::Floor,
                granted: MIN
            }
        );
        assert_eq!(ch.free(), Kbps::ZERO);
    }

    #[test]
    fn partial_headroom_is_adjusted() {
        let l = limits(14_000);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, FF, &t, 0).unwrap();
        let d = ch.admit(2, FF, &t, 0).unwrap();
        assert_eq!(
            d,
            AllocationDecision {
                kind: DecisionKind::Adjusted,
                granted: Kbps(4_000)
            }
        );
    }

    #[test]
    fn below_floor_queues_then_rejects() {
        let l = limits(10_500);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 1);
        ch.admit(1, FF, &t, 0).unwrap();
        assert_eq!(ch.free(), Kbps(500));
        let d = ch.admit(2, FF, &t, 3).unwrap();
        assert_eq!(
            d,
            AllocationDecision {
                kind: DecisionKind::Queued,
                granted: Kbps::ZERO
            }
        );
        assert_eq!(ch.queue()[0].arrival_tick, 3);
        let d = ch.admit(3, FF, &t, 4).unwrap();
        assert_eq!(d.kind, DecisionKind::Rejected);
        assert_eq!(ch.rejected_count(), 1);
    }

    #[test]
    fn duplicate_and_unknown_ids() {
        let l = limits(100_000);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, FF, &t, 0).unwrap();
        assert_eq!(ch.admit(1, FF, &t, 0), Err(Error::DuplicateViewer(1)));
        assert_eq!(ch.release(9, &t), Err(Error::UnknownViewer(9)));
        let six = InteractiveMode::new(6).unwrap();
        assert_eq!(ch.admit(2, six, &t, 0), Err(Error::UnknownMode(six)));
        assert_eq!(
            ch.switch_mode(9, FF, &t).unwrap_err(),
            Error::UnknownViewer(9)
        );
    }

    #[test]
    fn release_returns_bandwidth() {
        let l = limits(100_000);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, FF, &t, 0).unwrap();
        let r = ch.release(1, &t).unwrap();
        assert_eq!(r.freed, MAX);
        assert!(r.admitted.is_empty());
        assert_eq!(ch.free(), l.capacity);
    }

    #[test]
    fn release_drains_single_waiter() {
        // A table where normal play demands exactly W_min.
        let l = limits(10_500);
        let t = ModeDemandTable::new(vec![MAX, MIN], &l).unwrap();
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, FF, &t, 0).unwrap();
        ch.admit(2, NORMAL, &t, 1).unwrap();
        let r = ch.release(1, &t).unwrap();
        assert_eq!(r.admitted.len(), 1);
        assert_eq!(r.admitted[0].viewer, 2);
        assert_eq!(r.admitted[0].decision.granted, MIN);
        assert_eq!(ch.free(), Kbps(10_500) - MIN);
    }

    #[test]
    fn release_admits_only_the_head_when_room_for_one() {
        let l = limits(10_500);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, FF, &t, 0).unwrap();
        ch.admit(2, FF, &t, 1).unwrap();
        ch.admit(3, FF, &t, 2).unwrap();
        let r = ch.release(1, &t).unwrap();
        // Head takes all 10.5 Mbps capped at W_max, leaving 0.5 < W_min.
        assert_eq!(r.admitted.len(), 1);
        assert_eq!(r.admitted[0].viewer, 2);
        assert_eq!(ch.queue()[0].viewer, 3);
    }

    #[test]
    fn new_arrivals_wait_behind_the_queue() {
        let l = limits(10_500);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, FF, &t, 0).unwrap();
        ch.admit(2, FF, &t, 0).unwrap();
        // A pause request fits in the 500 kbps left, but only W_min opens a
        // connection, and the queue is non-empty anyway.
        assert_eq!(
            ch.admit(3, PAUSE, &t, 0).unwrap().kind,
            DecisionKind::Queued
        );
    }

    #[test]
    fn switch_up_with_headroom() {
        let l = limits(100_000);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, PAUSE, &t, 0).unwrap();
        assert_eq!(ch.granted(1), Some(Kbps(500)));
        let s = ch.switch_mode(1, FF, &t).unwrap();
        assert_eq!(
            s.decision,
            AllocationDecision {
                kind: DecisionKind::Full,
                granted: MAX
            }
        );
    }

    #[test]
    fn switch_down_returns_surplus_and_drains() {
        let l = limits(10_500);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, FF, &t, 0).unwrap();
        ch.admit(2, NORMAL, &t, 0).unwrap();
        let s = ch.switch_mode(1, PAUSE, &t).unwrap();
        assert_eq!(s.decision.granted, Kbps(500));
        assert_eq!(s.admitted.len(), 1);
        assert_eq!(s.admitted[0].decision.granted, Kbps(7_500));
        assert_eq!(ch.free(), Kbps(2_500));
    }

    #[test]
    fn switch_up_without_headroom_keeps_grant() {
        let l = limits(10_500);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        ch.admit(1, PAUSE, &t, 0).unwrap();
        ch.admit(2, FF, &t, 0).unwrap();
        assert_eq!(ch.free(), Kbps::ZERO);
        let s = ch.switch_mode(1, FF, &t).unwrap();
        assert_eq!(
            s.decision,
            AllocationDecision {
                kind: DecisionKind::Adjusted,
                granted: Kbps(500)
            }
        );
    }

    #[test]
    fn full_house_of_w_max_viewers() {
        let n = 12;
        let l = limits(n * MAX.0);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 10);
        for v in 0..n {
            assert_eq!(ch.admit(v, FF, &t, 0).unwrap().kind, DecisionKind::Full);
        }
        assert_eq!(ch.free(), Kbps::ZERO);
    }

    #[test]
    fn corrupted_table_is_caught() {
        let l = limits(100_000);
        let bad = ModeDemandTable::new_unchecked(vec![Kbps(20_000)]);
        let mut ch = ChannelTable::new(l, 10);
        assert!(matches!(
            ch.admit(1, FF, &bad, 0),
            Err(Error::InvariantViolation(_))
        ));
        ch.audit().unwrap();
    }

    #[test]
    fn demand_parameter_examples() {
        let cfg = BandwidthConfig::new(100.0, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(unified_demand_parameter(5, &cfg).unwrap().value(), 0.1);
        let sat = BandwidthConfig::new(100.0, 1.0, 100.0, 1.0).unwrap();
        assert_eq!(unified_demand_parameter(1, &sat).unwrap().value(), 1.0);
        let over = unified_demand_parameter(5, &sat).unwrap();
        assert_eq!(over.value(), 5.0);
        assert!(over.is_over_unity());
        assert!(unified_demand_parameter(0, &sat).is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Admit(u8, u8),
        Release(u8),
        Switch(u8, u8),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u8..24, 1u8..=5).prop_map(|(v, m)| Op::Admit(v, m)),
            (0u8..24).prop_map(Op::Release),
            (0u8..24, 1u8..=5).prop_map(|(v, m)| Op::Switch(v, m)),
        ]
    }

    fn replay(ops: &[Op], capacity: u64) -> (ChannelTable, Vec<ViewerId>) {
        let l = limits(capacity);
        let t = table(&l);
        let mut ch = ChannelTable::new(l, 6);
        let mut admitted_order = Vec::new();
        for (tick, op) in ops.iter().enumerate() {
            let tick = tick as u64;
            match *op {
                Op::Admit(v, m) => {
                    let mode = InteractiveMode::new(u32::from(m)).unwrap();
                    if let Ok(d) = ch.admit(u64::from(v), mode, &t, tick) {
                        if d.granted > Kbps::ZERO {
                            admitted_order.push(u64::from(v));
                        }
                    }
                }
                Op::Release(v) => {
                    if let Ok(r) = ch.release(u64::from(v), &t) {
                        admitted_order.extend(r.admitted.iter().map(|a| a.viewer));
                    }
                }
                Op::Switch(v, m) => {
                    let mode = InteractiveMode::new(u32::from(m)).unwrap();
                    if let Ok(s) = ch.switch_mode(u64::from(v), mode, &t) {
                        admitted_order.extend(s.admitted.iter().map(|a| a.viewer));
                    }
                }
            }
            ch.audit().unwrap();
        }
        (ch, admitted_order)
    }

    proptest! {
        #[test]
        fn conservation_and_bounds_hold(ops in prop::collection::vec(op(), 1..200), cap in 5_000u64..60_000) {
            let (ch, _) = replay(&ops, cap);
            prop_assert_eq!(ch.allocated().0 + ch.free().0, cap);
            ch.audit().unwrap();
        }

        #[test]
        fn replay_is_deterministic(ops in prop::collection::vec(op(), 1..120)) {
            let (a, oa) = replay(&ops, 30_000);
            let (b, ob) = replay(&ops, 30_000);
            prop_assert_eq!(a, b);
            prop_assert_eq!(oa, ob);
        }

        #[test]
        fn queue_is_served_in_arrival_order(ops in prop::collection::vec(op(), 1..200)) {
            let l = limits(25_000);
            let t = table(&l);
            let mut ch = ChannelTable::new(l, 6);
            let mut enqueued: Vec<ViewerId> = Vec::new();
            let mut drained: Vec<ViewerId> = Vec::new();
            for (tick, op) in ops.iter().enumerate() {
                match *op {
                    Op::Admit(v, m) => {
                        let mode = InteractiveMode::new(u32::from(m)).unwrap();
                        if let Ok(d) = ch.admit(u64::from(v), mode, &t, tick as u64) {
                            if d.kind == DecisionKind::Queued {
                                enqueued.push(u64::from(v));
                            }
                        }
                    }
                    Op::Release(v) => {
                        if let Ok(r) = ch.release(u64::from(v), &t) {
                            drained.extend(r.admitted.iter().map(|a| a.viewer));
                        }
                    }
                    Op::Switch(v, m) => {
                        let mode = InteractiveMode::new(u32::from(m)).unwrap();
                        if let Ok(s) = ch.switch_mode(u64::from(v), mode, &t) {
                            drained.extend(s.admitted.iter().map(|a| a.viewer));
                        }
                    }
                }
            }
            prop_assert_eq!(&enqueued[..drained.len()], &drained[..]);
        }
    }
}
