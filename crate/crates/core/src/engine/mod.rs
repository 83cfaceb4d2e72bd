//! Protocol execution.
//!
//! A [`ProtocolRun`] owns the evolving node states, the ring, the
//! adversary-observable message trace and each node's estimator window.
//! Synchronous rounds live here; the Poisson-clock variant is in
//! [`asynchronous`].

pub mod asynchronous;

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{
    MembershipChange, MembershipEvent, NodeId, NoiseDistribution, NoiseSchedule, ProtocolConfig,
    RingTopology,
};
use crate::noise::{sample_beta, NoiseSource};

pub use asynchronous::{run_ai, run_ai_trial, AsyncClock};

/// One transmitted value `d_i(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub k: u64,
    pub sender: NodeId,
    pub value: f64,
}

/// Stretch of the run with fixed membership. `first_step` is the first step
/// whose messages come from this membership; `first_state` the first state
/// index whose member sum equals `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub first_step: u64,
    pub first_state: u64,
    pub members: usize,
    pub target: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NodeState {
    pub(crate) id: NodeId,
    pub(crate) secret: f64,
    pub(crate) schedule: NoiseSchedule,
    pub(crate) x: f64,
    pub(crate) window: VecDeque<f64>,
    pub(crate) active: bool,
    /// Local tick counter (asynchronous runs only). Survives rejoin.
    pub(crate) ticks: u64,
    /// Bumped on every join so stale clock events can be discarded.
    pub(crate) epoch: u32,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub(crate) topology: RingTopology,
    pub(crate) nodes: Vec<NodeState>,
    pub(crate) slot_of: HashMap<NodeId, usize>,
    /// Slots in ring order, starting from the smallest identifier.
    pub(crate) ring: Vec<usize>,
    pub(crate) distribution: NoiseDistribution,
    pub(crate) offset: u64,
    pub(crate) k: u64,
    pub(crate) trial: u32,
    pub(crate) trace: Vec<Message>,
    pub(crate) record_trace: bool,
    pub(crate) phases: Vec<Phase>,
    pub(crate) pending: VecDeque<MembershipEvent>,
    scratch_beta: Vec<f64>,
    scratch_d: Vec<f64>,
}

impl ProtocolRun {
    /// Fresh synchronous run with `x(0) = s`, joins scheduled at `k = 0`
    /// already applied.
    pub fn new(config: &ProtocolConfig, trial: u32) -> Result<Self> {
        config.validate()?;
        let mut run = Self::from_parts(config, trial)?;
        run.apply_joins_due()?;
        Ok(run)
    }

    pub(crate) fn from_parts(config: &ProtocolConfig, trial: u32) -> Result<Self> {
        let topology = config.topology()?;
        let n = config.secrets.len();
        let nodes: Vec<NodeState> = config
            .node_ids()
            .zip(config.secrets.iter().zip(&config.schedules))
            .map(|(id, (&secret, &schedule))| NodeState {
                id,
                secret,
                schedule,
                x: secret,
                window: VecDeque::from([secret]),
                active: true,
                ticks: 0,
                epoch: 0,
            })
            .collect();
        let slot_of = nodes.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        let mut run = Self {
            topology,
            nodes,
            slot_of,
            ring: Vec::new(),
            distribution: config.distribution,
            offset: config.schedule_offset(),
            k: 0,
            trial,
            trace: Vec::new(),
            record_trace: true,
            phases: Vec::new(),
            pending: config.events.iter().cloned().collect(),
            scratch_beta: Vec::with_capacity(n),
            scratch_d: Vec::with_capacity(n),
        };
        run.rebuild_ring();
        let target = run.secret_sum();
        run.phases.push(Phase {
            first_step: 0,
            first_state: 0,
            members: n,
            target,
        });
        Ok(run)
    }

    /// Skip trace recording; useful for Monte Carlo trials that only need
    /// states and estimates.
    pub fn without_trace(mut self) -> Self {
        self.record_trace = false;
        self
    }

    pub(crate) fn rebuild_ring(&mut self) {
        self.ring = self
            .topology
            .cycle_order()
            .into_iter()
            .map(|id| self.slot_of[&id])
            .collect();
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn trial(&self) -> u32 {
        self.trial
    }

    pub fn topology(&self) -> &RingTopology {
        &self.topology
    }

    pub fn member_count(&self) -> usize {
        self.ring.len()
    }

    pub fn distribution(&self) -> NoiseDistribution {
        self.distribution
    }

    /// Index shift applied to every schedule (1 for harmonic `d = 0`).
    pub fn schedule_offset(&self) -> u64 {
        self.offset
    }

    pub fn trace(&self) -> &[Message] {
        &self.trace
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn current_phase(&self) -> &Phase {
        self.phases.last().expect("a run always has a phase")
    }

    /// Current members with their states, in ascending identifier order.
    pub fn states(&self) -> Vec<(NodeId, f64)> {
        self.topology
            .members()
            .map(|id| (id, self.nodes[self.slot_of[&id]].x))
            .collect()
    }

    pub fn state(&self, node: NodeId) -> Option<f64> {
        self.member_slot(node).map(|s| self.nodes[s].x)
    }

    pub fn secret(&self, node: NodeId) -> Option<f64> {
        self.member_slot(node).map(|s| self.nodes[s].secret)
    }

    /// Own-state window of `node`, oldest first.
    pub fn window(&self, node: NodeId) -> Option<&VecDeque<f64>> {
        self.member_slot(node).map(|s| &self.nodes[s].window)
    }

    /// `sum_i x_i` over current members.
    pub fn state_sum(&self) -> f64 {
        self.ring.iter().map(|&s| self.nodes[s].x).sum()
    }

    /// `sum_i s_i` over current members.
    pub fn secret_sum(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.active)
            .map(|n| n.secret)
            .sum()
    }

    pub(crate) fn member_slot(&self, node: NodeId) -> Option<usize> {
        self.slot_of
            .get(&node)
            .copied()
            .filter(|&s| self.nodes[s].active)
    }

    pub(crate) fn reset_windows(&mut self) {
        for &slot in &self.ring {
            let node = &mut self.nodes[slot];
            node.window.clear();
        }
    }

    /// Append each member's current state to its window, keeping the last
    /// `n` entries.
    pub(crate) fn push_windows(&mut self) {
        let n = self.ring.len();
        for &slot in &self.ring {
            let node = &mut self.nodes[slot];
            if node.window.len() == n {
                node.window.pop_front();
            }
            node.window.push_back(node.x);
        }
    }

    fn draw(&self, slot: usize, src: &NoiseSource) -> Result<f64> {
        let node = &self.nodes[slot];
        sample_beta(
            src,
            node.id,
            self.k,
            self.trial,
            &node.schedule,
            self.distribution,
            self.offset,
        )
    }

    /// One synchronous round. All `d_i(k)` are computed from `x(k)` before
    /// any state moves; then `x_i(k+1) = beta_i(k) + d_{pred(i)}(k)`.
    pub fn si_step(&mut self, src: &NoiseSource) -> Result<()> {
        let n = self.ring.len();
        let mut beta = std::mem::take(&mut self.scratch_beta);
        let mut d = std::mem::take(&mut self.scratch_d);
        beta.clear();
        d.clear();
        for &slot in &self.ring {
            let b = match self.draw(slot, src) {
                Ok(b) => b,
                Err(e) => {
                    self.scratch_beta = beta;
                    self.scratch_d = d;
                    return Err(e);
                }
            };
            beta.push(b);
            d.push(self.nodes[slot].x - b);
        }
        for pos in 0..n {
            let slot = self.ring[pos];
            self.nodes[slot].x = beta[pos] + d[(pos + n - 1) % n];
            if self.record_trace {
                self.trace.push(Message {
                    k: self.k,
                    sender: self.nodes[slot].id,
                    value: d[pos],
                });
            }
        }
        self.scratch_beta = beta;
        self.scratch_d = d;
        self.k += 1;
        self.push_windows();
        Ok(())
    }

    /// Leave round for `node` at the current step. The leaver sends
    /// `x_i - s_i` to its successor, its predecessor stays silent and keeps
    /// `x_p + d_{pred(p)}`, everyone else runs the normal round. The ring is
    /// then rewired around the leaver and every window restarts.
    pub fn leave(&mut self, node: NodeId, src: &NoiseSource) -> Result<()> {
        let leaver_slot = self.member_slot(node).ok_or(Error::NotMember(node))?;
        let n = self.ring.len();
        if n <= 3 {
            return Err(Error::MembershipFloor { node, members: n });
        }
        let pos_i = self
            .ring
            .iter()
            .position(|&s| s == leaver_slot)
            .expect("member is on the ring");
        let pos_p = (pos_i + n - 1) % n;

        let mut beta = vec![0.0; n];
        let mut d = vec![0.0; n];
        for pos in 0..n {
            let slot = self.ring[pos];
            if pos == pos_i {
                d[pos] = self.nodes[slot].x - self.nodes[slot].secret;
            } else if pos != pos_p {
                beta[pos] = self.draw(slot, src)?;
                d[pos] = self.nodes[slot].x - beta[pos];
            }
        }
        for pos in 0..n {
            let slot = self.ring[pos];
            if pos != pos_p && self.record_trace {
                self.trace.push(Message {
                    k: self.k,
                    sender: self.nodes[slot].id,
                    value: d[pos],
                });
            }
            if pos == pos_i {
                continue;
            }
            let incoming = d[(pos + n - 1) % n];
            if pos == pos_p {
                self.nodes[slot].x += incoming;
            } else {
                self.nodes[slot].x = beta[pos] + incoming;
            }
        }

        self.nodes[leaver_slot].active = false;
        self.nodes[leaver_slot].window.clear();
        self.topology = self.topology.without(node)?;
        self.rebuild_ring();
        self.k += 1;
        self.reset_windows();
        self.push_windows();
        let target = self.secret_sum();
        self.phases.push(Phase {
            first_step: self.k - 1,
            first_state: self.k,
            members: self.ring.len(),
            target,
        });
        Ok(())
    }

    /// Splice `node` in right after `after`, starting from state `secret`.
    /// Windows restart at the current state.
    pub fn join(
        &mut self,
        node: NodeId,
        after: NodeId,
        secret: f64,
        schedule: Option<NoiseSchedule>,
    ) -> Result<()> {
        if self.member_slot(node).is_some() {
            return Err(Error::AlreadyMember(node));
        }
        let anchor_slot = self.member_slot(after).ok_or(Error::NotMember(after))?;
        let schedule = schedule.unwrap_or(self.nodes[anchor_slot].schedule);
        if schedule.family() != self.nodes[anchor_slot].schedule.family() {
            return Err(Error::MixedFamilies);
        }
        self.topology = self.topology.with_inserted_after(after, node)?;
        if schedule.diverges_at_zero() && self.offset == 0 && self.k == 0 {
            self.offset = 1;
        }
        match self.slot_of.get(&node) {
            Some(&slot) => {
                let st = &mut self.nodes[slot];
                st.secret = secret;
                st.schedule = schedule;
                st.x = secret;
                st.active = true;
                st.epoch += 1;
            }
            None => {
                self.slot_of.insert(node, self.nodes.len());
                self.nodes.push(NodeState {
                    id: node,
                    secret,
                    schedule,
                    x: secret,
                    window: VecDeque::new(),
                    active: true,
                    ticks: 0,
                    epoch: 0,
                });
            }
        }
        self.rebuild_ring();
        self.reset_windows();
        self.push_windows();
        let target = self.secret_sum();
        self.phases.push(Phase {
            first_step: self.k,
            first_state: self.k,
            members: self.ring.len(),
            target,
        });
        Ok(())
    }

    fn apply_joins_due(&mut self) -> Result<()> {
        while let Some(ev) = self.pending.front() {
            if ev.at != self.k || !matches!(ev.change, MembershipChange::Join { .. }) {
                break;
            }
            let ev = self.pending.pop_front().expect("peeked");
            if let MembershipChange::Join {
                node,
                after,
                secret,
                schedule,
            } = ev.change
            {
                self.join(node, after, secret, schedule)?;
            }
        }
        Ok(())
    }

    /// Run step `k` (a leave round when one is scheduled at `k`), then apply
    /// joins scheduled at `k + 1`.
    pub fn advance(&mut self, src: &NoiseSource) -> Result<()> {
        let leave = match self.pending.front() {
            Some(MembershipEvent {
                at,
                change: MembershipChange::Leave { node },
            }) if *at == self.k => Some(*node),
            _ => None,
        };
        match leave {
            Some(node) => {
                self.pending.pop_front();
                self.leave(node, src)?;
            }
            None => self.si_step(src)?,
        }
        self.apply_joins_due()
    }
}

/// `K`-step synchronous run of `config` as trial 0.
pub fn run_si(config: &ProtocolConfig) -> Result<ProtocolRun> {
    let src = NoiseSource::new(config.seed);
    run_si_trial(config, &src, 0)
}

/// `K`-step synchronous run of `config` drawing noise for `trial`.
pub fn run_si_trial(config: &ProtocolConfig, src: &NoiseSource, trial: u32) -> Result<ProtocolRun> {
    let mut run = ProtocolRun::new(config, trial)?;
    for _ in 0..config.steps {
        run.advance(src)?;
    }
    Ok(run)
}
