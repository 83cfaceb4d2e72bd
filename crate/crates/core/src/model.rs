//! Domain types shared by every module: the directed ring, per-node noise
//! schedules, the noise distribution and the protocol configuration.
//!
//! Everything here is immutable once built. Membership changes produce a new
//! [`RingTopology`] rather than mutating the old one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Opaque node identifier. Stable across join and leave; ring order lives in
/// the successor map, never in identifier arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Directed ring: every node talks to exactly one successor and the
/// successor map is a single cycle through all members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingTopology {
    succ: BTreeMap<NodeId, NodeId>,
    pred: BTreeMap<NodeId, NodeId>,
}

/// Ring `1 -> 2 -> ... -> n -> 1`.
pub fn build_ring(n: usize) -> Result<RingTopology> {
    if n <= 2 {
        return Err(Error::domain(format!("ring needs more than 2 nodes, got {n}")));
    }
    let n = u32::try_from(n).map_err(|_| Error::domain("node count exceeds u32"))?;
    let order: Vec<NodeId> = (1..=n).map(NodeId).collect();
    RingTopology::from_cycle(&order)
}

impl RingTopology {
    /// Ring visiting `order` in sequence, closing back to `order[0]`.
    pub fn from_cycle(order: &[NodeId]) -> Result<Self> {
        if order.len() <= 2 {
            return Err(Error::domain(format!(
                "ring needs more than 2 nodes, got {}",
                order.len()
            )));
        }
        Self::from_cycle_unchecked_len(order)
    }

    fn from_cycle_unchecked_len(order: &[NodeId]) -> Result<Self> {
        let distinct: BTreeSet<NodeId> = order.iter().copied().collect();
        if distinct.len() != order.len() {
            return Err(Error::domain("ring order lists a node twice"));
        }
        let mut succ = BTreeMap::new();
        let mut pred = BTreeMap::new();
        for (i, &node) in order.iter().enumerate() {
            let next = order[(i + 1) % order.len()];
            succ.insert(node, next);
            pred.insert(next, node);
        }
        Ok(Self { succ, pred })
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.succ.contains_key(&node)
    }

    pub fn successor(&self, node: NodeId) -> Option<NodeId> {
        self.succ.get(&node).copied()
    }

    pub fn predecessor(&self, node: NodeId) -> Option<NodeId> {
        self.pred.get(&node).copied()
    }

    /// Members in ascending identifier order.
    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.succ.keys().copied()
    }

    /// Members in ring order starting from the smallest identifier.
    pub fn cycle_order(&self) -> Vec<NodeId> {
        let Some(&start) = self.succ.keys().next() else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity(self.len());
        let mut cur = start;
        loop {
            out.push(cur);
            cur = self.succ[&cur];
            if cur == start || out.len() > self.len() {
                break;
            }
        }
        out
    }

    /// True when following successors from any node visits every member once
    /// before returning, and the predecessor map inverts the successor map.
    pub fn is_single_cycle(&self) -> bool {
        let order = self.cycle_order();
        if order.len() != self.len() {
            return false;
        }
        let seen: BTreeSet<NodeId> = order.iter().copied().collect();
        seen.len() == self.len()
            && self
                .succ
                .iter()
                .all(|(node, next)| self.pred.get(next) == Some(node))
    }

    /// Ring with `node` removed and its predecessor wired to its successor.
    /// May leave a two-node ring; callers that run the protocol enforce their
    /// own floor.
    pub fn without(&self, node: NodeId) -> Result<Self> {
        if !self.contains(node) {
            return Err(Error::NotMember(node));
        }
        if self.len() <= 2 {
            return Err(Error::domain("cannot shrink a ring below two nodes"));
        }
        let order: Vec<NodeId> = self
            .cycle_order()
            .into_iter()
            .filter(|&m| m != node)
            .collect();
        Self::from_cycle_unchecked_len(&order)
    }

    /// Ring with `node` spliced in between `anchor` and `anchor`'s successor.
    pub fn with_inserted_after(&self, anchor: NodeId, node: NodeId) -> Result<Self> {
        if !self.contains(anchor) {
            return Err(Error::NotMember(anchor));
        }
        if self.contains(node) {
            return Err(Error::AlreadyMember(node));
        }
        let mut order = Vec::with_capacity(self.len() + 1);
        for m in self.cycle_order() {
            order.push(m);
            if m == anchor {
                order.push(node);
            }
        }
        Self::from_cycle_unchecked_len(&order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleFamily {
    Harmonic,
    Geometric,
}

impl fmt::Display for ScheduleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleFamily::Harmonic => f.write_str("harmonic"),
            ScheduleFamily::Geometric => f.write_str("geometric"),
        }
    }
}

impl FromStr for ScheduleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "harmonic" => Ok(ScheduleFamily::Harmonic),
            "geometric" => Ok(ScheduleFamily::Geometric),
            other => Err(Error::domain(format!("unknown schedule family '{other}'"))),
        }
    }
}

/// Per-node noise magnitude `v(k)`, either `c/(k+d)` or `c*phi^k`.
///
/// `c = 0` is accepted and means a noiseless node; the analysis routines that
/// divide by `c` reject it themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSchedule {
    Harmonic { c: f64, d: f64 },
    Geometric { c: f64, phi: f64 },
}

impl NoiseSchedule {
    pub fn harmonic(c: f64, d: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::domain(format!("harmonic c must be finite and >= 0, got {c}")));
        }
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::domain(format!("harmonic d must be finite and >= 0, got {d}")));
        }
        Ok(NoiseSchedule::Harmonic { c, d })
    }

    pub fn geometric(c: f64, phi: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::domain(format!("geometric c must be finite and >= 0, got {c}")));
        }
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::domain(format!("geometric phi must lie in (0,1), got {phi}")));
        }
        Ok(NoiseSchedule::Geometric { c, phi })
    }

    pub fn family(&self) -> ScheduleFamily {
        match self {
            NoiseSchedule::Harmonic { .. } => ScheduleFamily::Harmonic,
            NoiseSchedule::Geometric { .. } => ScheduleFamily::Geometric,
        }
    }

    pub fn c(&self) -> f64 {
        match *self {
            NoiseSchedule::Harmonic { c, .. } | NoiseSchedule::Geometric { c, .. } => c,
        }
    }

    /// Noise magnitude `v(k)`: standard deviation for Gaussian and uniform
    /// noise, scale for Laplace noise.
    pub fn magnitude(&self, k: u64) -> Result<f64> {
        match *self {
            NoiseSchedule::Harmonic { c, d } => {
                let denom = k as f64 + d;
                if denom <= 0.0 {
                    return Err(Error::DegenerateSchedule { k, d });
                }
                Ok(c / denom)
            }
            NoiseSchedule::Geometric { c, phi } => {
                // powf instead of powi: k can exceed i32.
                Ok(c * phi.powf(k as f64))
            }
        }
    }

    /// True for the harmonic `d = 0` case whose magnitude diverges at `k = 0`.
    pub fn diverges_at_zero(&self) -> bool {
        matches!(*self, NoiseSchedule::Harmonic { d, .. } if d == 0.0)
    }
}

/// `v(k)^2` for `schedule`.
pub fn variance_at(schedule: &NoiseSchedule, k: u64) -> Result<f64> {
    let v = schedule.magnitude(k)?;
    Ok(v * v)
}

/// Zero-mean distribution of the masking noise.
///
/// The schedule magnitude is the Laplace *scale* (variance `2 v^2`) and the
/// Gaussian / uniform *standard deviation* (variance `v^2`). The privacy
/// accounting relies on the scale reading for Laplace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseDistribution {
    Laplace,
    Gaussian,
    UniformSymmetric,
}

impl NoiseDistribution {
    pub fn variance_for_magnitude(&self, v: f64) -> f64 {
        match self {
            NoiseDistribution::Laplace => 2.0 * v * v,
            NoiseDistribution::Gaussian | NoiseDistribution::UniformSymmetric => v * v,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseDistribution::Laplace => "laplace",
            NoiseDistribution::Gaussian => "gaussian",
            NoiseDistribution::UniformSymmetric => "uniform",
        }
    }
}

impl fmt::Display for NoiseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laplace" => Ok(NoiseDistribution::Laplace),
            "gaussian" | "normal" => Ok(NoiseDistribution::Gaussian),
            "uniform" | "uniform_symmetric" => Ok(NoiseDistribution::UniformSymmetric),
            other => Err(Error::domain(format!("unknown noise distribution '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MembershipChange {
    Leave {
        node: NodeId,
    },
    /// `node` joins right after `after` in ring order, starting from state
    /// `secret`. Without an explicit schedule it inherits the anchor's.
    Join {
        node: NodeId,
        after: NodeId,
        secret: f64,
        schedule: Option<NoiseSchedule>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipEvent {
    pub at: u64,
    pub change: MembershipChange,
}

impl MembershipEvent {
    pub fn leave(at: u64, node: NodeId) -> Self {
        Self {
            at,
            change: MembershipChange::Leave { node },
        }
    }

    pub fn join(at: u64, node: NodeId, after: NodeId, secret: f64) -> Self {
        Self {
            at,
            change: MembershipChange::Join {
                node,
                after,
                secret,
                schedule: None,
            },
        }
    }
}

/// Everything needed to run the protocol once. Node `i` (0-based) of
/// `secrets` and `schedules` gets identifier `NodeId(i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub secrets: Vec<f64>,
    pub schedules: Vec<NoiseSchedule>,
    pub distribution: NoiseDistribution,
    pub steps: u64,
    pub seed: u64,
    pub events: Vec<MembershipEvent>,
}

impl ProtocolConfig {
    /// Config where every node shares one schedule.
    pub fn uniform(
        secrets: Vec<f64>,
        schedule: NoiseSchedule,
        distribution: NoiseDistribution,
        steps: u64,
        seed: u64,
    ) -> Self {
        let schedules = vec![schedule; secrets.len()];
        Self {
            secrets,
            schedules,
            distribution,
            steps,
            seed,
            events: Vec::new(),
        }
    }

    pub fn with_events(mut self, events: Vec<MembershipEvent>) -> Self {
        self.events = events;
        self
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (1..=self.secrets.len() as u32).map(NodeId)
    }

    pub fn topology(&self) -> Result<RingTopology> {
        build_ring(self.secrets.len())
    }

    pub fn family(&self) -> Option<ScheduleFamily> {
        self.schedules.first().map(|s| s.family())
    }

    /// Every schedule the run can touch, joins included.
    pub fn all_schedules(&self) -> Vec<NoiseSchedule> {
        let mut out = self.schedules.clone();
        for ev in &self.events {
            if let MembershipChange::Join {
                schedule: Some(s), ..
            } = &ev.change
            {
                out.push(*s);
            }
        }
        out
    }

    /// 1 when some harmonic schedule has `d = 0`: such runs evaluate the
    /// schedule at `k + 1` instead of `k`, since `v(0)` diverges.
    pub fn schedule_offset(&self) -> u64 {
        u64::from(self.all_schedules().iter().any(|s| s.diverges_at_zero()))
    }

    /// Static validation, including a dry replay of the membership events.
    pub fn validate(&self) -> Result<()> {
        self.validate_with_horizon(Some(self.steps))
    }

    /// Validation for asynchronous runs, where `steps` is unused and event
    /// times count ticks.
    pub fn validate_async(&self) -> Result<()> {
        self.validate_with_horizon(None)
    }

    fn validate_with_horizon(&self, horizon: Option<u64>) -> Result<()> {
        let topo = self.topology()?;
        if self.schedules.len() != self.secrets.len() {
            return Err(Error::domain(format!(
                "{} schedules for {} secrets",
                self.schedules.len(),
                self.secrets.len()
            )));
        }
        if let Some(bad) = self.secrets.iter().find(|s| !s.is_finite()) {
            return Err(Error::domain(format!("secret {bad} is not finite")));
        }
        let all = self.all_schedules();
        let family = all[0].family();
        if all.iter().any(|s| s.family() != family) {
            return Err(Error::MixedFamilies);
        }
        if horizon == Some(0) {
            return Err(Error::domain("steps K must be at least 1"));
        }
        let mut topo = topo;
        let mut last_at = 0;
        let mut leave_at: Option<u64> = None;
        for ev in &self.events {
            if ev.at < last_at {
                return Err(Error::domain("membership events must be time-ordered"));
            }
            if let Some(limit) = horizon.filter(|&limit| ev.at >= limit) {
                return Err(Error::domain(format!(
                    "event at k={} falls outside [0, {limit})",
                    ev.at
                )));
            }
            last_at = ev.at;
            match ev.change {
                MembershipChange::Leave { node } => {
                    if leave_at == Some(ev.at) {
                        return Err(Error::domain(format!("two leaves scheduled at k={}", ev.at)));
                    }
                    leave_at = Some(ev.at);
                    if !topo.contains(node) {
                        return Err(Error::NotMember(node));
                    }
                    if topo.len() <= 3 {
                        return Err(Error::MembershipFloor {
                            node,
                            members: topo.len(),
                        });
                    }
                    topo = topo.without(node)?;
                }
                MembershipChange::Join {
                    node,
                    after,
                    secret,
                    ..
                } => {
                    if leave_at == Some(ev.at) {
                        return Err(Error::domain(format!(
                            "join at k={} must precede the leave scheduled at the same step",
                            ev.at
                        )));
                    }
                    if !secret.is_finite() {
                        return Err(Error::domain("join secret is not finite"));
                    }
                    topo = topo.with_inserted_after(after, node)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ring_of_three_wraps_around() {
        let ring = build_ring(3).unwrap();
        assert_eq!(ring.successor(NodeId(1)), Some(NodeId(2)));
        assert_eq!(ring.successor(NodeId(2)), Some(NodeId(3)));
        assert_eq!(ring.successor(NodeId(3)), Some(NodeId(1)));
        assert_eq!(ring.predecessor(NodeId(1)), Some(NodeId(3)));
    }

    #[test]
    fn ring_of_eight_is_one_cycle() {
        let ring = build_ring(8).unwrap();
        assert!(ring.is_single_cycle());
        assert_eq!(ring.cycle_order(), (1..=8).map(NodeId).collect::<Vec<_>>());
    }

    #[test]
    fn tiny_rings_are_rejected() {
        assert!(matches!(build_ring(2), Err(Error::Domain(_))));
        assert!(build_ring(0).is_err());
    }

    #[test]
    fn removal_rewires_predecessor_to_successor() {
        let ring = build_ring(5).unwrap().without(NodeId(3)).unwrap();
        assert_eq!(ring.successor(NodeId(2)), Some(NodeId(4)));
        assert_eq!(ring.predecessor(NodeId(4)), Some(NodeId(2)));
        assert!(!ring.contains(NodeId(3)));
        assert!(ring.is_single_cycle());
    }

    #[test]
    fn insertion_rejects_duplicates_and_strangers() {
        let ring = build_ring(4).unwrap();
        assert_eq!(
            ring.with_inserted_after(NodeId(1), NodeId(2)),
            Err(Error::AlreadyMember(NodeId(2)))
        );
        assert_eq!(
            ring.with_inserted_after(NodeId(9), NodeId(7)),
            Err(Error::NotMember(NodeId(9)))
        );
    }

    #[test]
    fn harmonic_magnitude_matches_example_schedule() {
        let s = NoiseSchedule::harmonic(1000.0, 1.0).unwrap();
        assert_eq!(s.magnitude(0).unwrap(), 1000.0);
        assert_eq!(variance_at(&s, 0).unwrap(), 1.0e6);
    }

    #[test]
    fn geometric_magnitude_is_direct_power() {
        let s = NoiseSchedule::geometric(1.0, 0.5).unwrap();
        assert_eq!(s.magnitude(3).unwrap(), 0.125);
    }

    #[test]
    fn harmonic_without_offset_diverges_at_zero() {
        let s = NoiseSchedule::harmonic(2.0, 0.0).unwrap();
        assert_eq!(
            variance_at(&s, 0),
            Err(Error::DegenerateSchedule { k: 0, d: 0.0 })
        );
        assert_eq!(variance_at(&s, 1).unwrap(), 4.0);
    }

    #[test]
    fn schedules_validate_parameters() {
        assert!(NoiseSchedule::geometric(1.0, 1.0).is_err());
        assert!(NoiseSchedule::geometric(1.0, 0.0).is_err());
        assert!(NoiseSchedule::harmonic(-1.0, 1.0).is_err());
        assert!(NoiseSchedule::harmonic(1.0, -0.5).is_err());
    }

    #[test]
    fn variance_decays_to_zero() {
        let h = NoiseSchedule::harmonic(1.0, 1.0).unwrap();
        let g = NoiseSchedule::geometric(1.0, 0.9).unwrap();
        for s in [h, g] {
            let mut prev = f64::INFINITY;
            for k in (0..=1_000_000u64).step_by(997) {
                let v = variance_at(&s, k).unwrap();
                assert!(v <= prev);
                prev = v;
            }
            let tail = variance_at(&s, 1_000_000).unwrap();
            // harmonic tail is 1e-12; the geometric one underflows to 0
            assert!(tail <= 1.0e-11, "{tail}");
        }
        assert!(variance_at(&g, 1_000_000).unwrap() <= 1.0e-30);
    }

    #[test]
    fn config_rejects_mixed_families_and_bad_events() {
        let secrets = vec![1.0, 2.0, 3.0, 4.0];
        let h = NoiseSchedule::harmonic(1.0, 1.0).unwrap();
        let mut cfg = ProtocolConfig::uniform(secrets, h, NoiseDistribution::Gaussian, 10, 0);
        assert!(cfg.validate().is_ok());

        cfg.schedules[1] = NoiseSchedule::geometric(1.0, 0.5).unwrap();
        assert_eq!(cfg.validate(), Err(Error::MixedFamilies));
        cfg.schedules[1] = h;

        let stranger = cfg.clone().with_events(vec![MembershipEvent::leave(2, NodeId(9))]);
        assert_eq!(stranger.validate(), Err(Error::NotMember(NodeId(9))));

        let floor = cfg.clone().with_events(vec![
            MembershipEvent::leave(2, NodeId(1)),
            MembershipEvent::leave(3, NodeId(2)),
        ]);
        assert!(matches!(floor.validate(), Err(Error::MembershipFloor { .. })));

        let late = cfg.clone().with_events(vec![MembershipEvent::leave(10, NodeId(1))]);
        assert!(late.validate().is_err());

        let mut zero = cfg.clone();
        zero.steps = 0;
        assert!(zero.validate().is_err());
    }

    #[test]
    fn offset_flags_harmonic_d_zero() {
        let h0 = NoiseSchedule::harmonic(1.0, 0.0).unwrap();
        let cfg = ProtocolConfig::uniform(vec![1.0; 3], h0, NoiseDistribution::Laplace, 4, 0);
        assert_eq!(cfg.schedule_offset(), 1);
        let h1 = NoiseSchedule::harmonic(1.0, 1.0).unwrap();
        let cfg = ProtocolConfig::uniform(vec![1.0; 3], h1, NoiseDistribution::Laplace, 4, 0);
        assert_eq!(cfg.schedule_offset(), 0);
    }

    fn membership_ops() -> impl Strategy<Value = Vec<(bool, u32, u32)>> {
        prop::collection::vec((any::<bool>(), 0u32..40, 0u32..40), 0..30)
    }

    proptest! {
        #[test]
        fn successor_inverts_predecessor_after_any_changes(n in 3usize..12, ops in membership_ops()) {
            let mut ring = build_ring(n).unwrap();
            let mut next_id = n as u32 + 1;
            for (is_leave, a, b) in ops {
                let members: Vec<NodeId> = ring.members().collect();
                if is_leave && members.len() > 3 {
                    ring = ring.without(members[a as usize % members.len()]).unwrap();
                } else {
                    let anchor = members[b as usize % members.len()];
                    ring = ring.with_inserted_after(anchor, NodeId(next_id)).unwrap();
                    next_id += 1;
                }
                prop_assert!(ring.is_single_cycle());
                for m in ring.members() {
                    let s = ring.successor(m).unwrap();
                    prop_assert_eq!(ring.predecessor(s), Some(m));
                }
            }
        }
    }
}
