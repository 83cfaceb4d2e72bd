//! Poisson-clock variant of the protocol.
//!
//! Each node ticks at the jump times of its own Poisson process. On a tick
//! with local count `k_i` the node draws `beta` with magnitude `v_i(k_i)`,
//! sends `d = x_i - beta` to its successor, keeps `beta`, and the successor
//! adds `d`. Every tick conserves the network sum on its own.
//!
//! The estimator window of a node holds the state it had just before each of
//! its last `n` ticks. `run.k()` counts processed ticks; membership events
//! fire when that count reaches their `at`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Message, Phase, ProtocolRun};
use crate::error::{Error, Result};
use crate::model::{MembershipChange, NodeId, ProtocolConfig};
use crate::noise::{sample_beta, NoiseSource};

#[derive(Debug, Clone, Copy)]
struct Tick {
    time: f64,
    node: NodeId,
    epoch: u32,
}

impl PartialEq for Tick {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Tick {}

impl PartialOrd for Tick {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tick {
    // reversed: BinaryHeap is a max-heap and we pop the earliest tick
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Pending ticks of every node, ordered by simulated time with ties broken by
/// node identifier.
#[derive(Debug, Clone)]
pub struct AsyncClock {
    rate: f64,
    queue: BinaryHeap<Tick>,
    now: f64,
}

impl AsyncClock {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!("clock rate must be positive, got {rate}")));
        }
        Ok(Self {
            rate,
            queue: BinaryHeap::new(),
            now: 0.0,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Time of the last tick handed out.
    pub fn now(&self) -> f64 {
        self.now
    }

    fn schedule(&mut self, node: NodeId, epoch: u32, tick: u64, trial: u32, src: &NoiseSource) {
        let time = self.now + src.exp_gap(self.rate, node, tick, trial);
        self.queue.push(Tick { time, node, epoch });
    }

    fn pop_until(&mut self, horizon: f64) -> Option<Tick> {
        match self.queue.peek() {
            Some(t) if t.time <= horizon => {
                let t = self.queue.pop().expect("peeked");
                self.now = t.time;
                Some(t)
            }
            _ => None,
        }
    }
}

/// Asynchronous run of `config` as trial 0, up to simulated time `horizon`.
pub fn run_ai(config: &ProtocolConfig, rate: f64, horizon: f64) -> Result<ProtocolRun> {
    let src = NoiseSource::new(config.seed);
    run_ai_trial(config, &src, 0, rate, horizon).map(|(run, _)| run)
}

/// Asynchronous run of `config` for `trial`; also returns the clock so the
/// caller can inspect the final simulated time.
pub fn run_ai_trial(
    config: &ProtocolConfig,
    src: &NoiseSource,
    trial: u32,
    rate: f64,
    horizon: f64,
) -> Result<(ProtocolRun, AsyncClock)> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    config.validate_async()?;
    let mut clock = AsyncClock::new(rate)?;
    let mut run = ProtocolRun::from_parts(config, trial)?;
    run.reset_windows();
    for &slot in &run.ring {
        let node = &run.nodes[slot];
        clock.schedule(node.id, node.epoch, 0, trial, src);
    }
    apply_async_events(&mut run, &mut clock, src)?;

    while let Some(tick) = clock.pop_until(horizon) {
        let Some(slot) = run.member_slot(tick.node) else {
            continue;
        };
        if run.nodes[slot].epoch != tick.epoch {
            continue;
        }
        async_tick(&mut run, slot, src)?;
        let node = &run.nodes[slot];
        clock.schedule(node.id, node.epoch, node.ticks, trial, src);
        apply_async_events(&mut run, &mut clock, src)?;
    }
    Ok((run, clock))
}

fn async_tick(run: &mut ProtocolRun, slot: usize, src: &NoiseSource) -> Result<()> {
    let n = run.ring.len();
    let node = &run.nodes[slot];
    let id = node.id;
    let beta = sample_beta(
        src,
        id,
        node.ticks,
        run.trial,
        &node.schedule,
        run.distribution,
        run.offset,
    )?;
    let before = node.x;
    let d = before - beta;
    let succ = run
        .topology
        .successor(id)
        .expect("ticking node is a member");
    let succ_slot = run.slot_of[&succ];

    let node = &mut run.nodes[slot];
    if node.window.len() == n {
        node.window.pop_front();
    }
    node.window.push_back(before);
    node.x = beta;
    node.ticks += 1;
    run.nodes[succ_slot].x += d;
    if run.record_trace {
        run.trace.push(Message {
            k: run.k,
            sender: id,
            value: d,
        });
    }
    run.k += 1;
    Ok(())
}

fn apply_async_events(run: &mut ProtocolRun, clock: &mut AsyncClock, src: &NoiseSource) -> Result<()> {
    while run.pending.front().is_some_and(|ev| ev.at <= run.k) {
        let ev = run.pending.pop_front().expect("peeked");
        match ev.change {
            MembershipChange::Leave { node } => {
                let slot = run.member_slot(node).ok_or(Error::NotMember(node))?;
                let members = run.ring.len();
                if members <= 3 {
                    return Err(Error::MembershipFloor { node, members });
                }
                let succ = run.topology.successor(node).expect("member");
                let d = run.nodes[slot].x - run.nodes[slot].secret;
                let succ_slot = run.slot_of[&succ];
                run.nodes[succ_slot].x += d;
                if run.record_trace {
                    run.trace.push(Message {
                        k: run.k,
                        sender: node,
                        value: d,
                    });
                }
                run.nodes[slot].active = false;
                run.nodes[slot].window.clear();
                run.topology = run.topology.without(node)?;
                run.rebuild_ring();
                run.reset_windows();
                let target = run.secret_sum();
                run.phases.push(Phase {
                    first_step: run.k,
                    first_state: run.k,
                    members: run.ring.len(),
                    target,
                });
            }
            MembershipChange::Join {
                node,
                after,
                secret,
                schedule,
            } => {
                run.join(node, after, secret, schedule)?;
                // async windows hold pre-tick states only
                run.reset_windows();
                let slot = run.slot_of[&node];
                let st = &run.nodes[slot];
                clock.schedule(node, st.epoch, st.ticks, run.trial, src);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MembershipEvent, NoiseDistribution, NoiseSchedule};

    const REFERENCE_SECRETS: [f64; 10] = [
        25.1698, 15.3211, 69.9334, 45.7828, 98.0388, 36.6547, 44.2351, 11.1407, 53.7235, 100.0,
    ];

    fn total() -> f64 {
        REFERENCE_SECRETS.iter().sum()
    }

    fn cfg(c: f64) -> ProtocolConfig {
        ProtocolConfig::uniform(
            REFERENCE_SECRETS.to_vec(),
            NoiseSchedule::harmonic(c, 1.0).unwrap(),
            NoiseDistribution::Gaussian,
            1,
            21,
        )
    }

    #[test]
    fn sum_is_conserved_after_every_tick() {
        let src = NoiseSource::new(21);
        let config = cfg(1000.0);
        let mut run = ProtocolRun::from_parts(&config, 0).unwrap();
        run.reset_windows();
        for i in 0..20_000usize {
            let slot = i * 7 % 10;
            async_tick(&mut run, slot, &src).unwrap();
            assert!((run.state_sum() - total()).abs() / 500.0 < 1e-12);
        }
    }

    #[test]
    fn full_run_conserves_and_counts_ticks() {
        let (run, clock) = run_ai_trial(&cfg(1000.0), &NoiseSource::new(4), 0, 1.0, 200.0).unwrap();
        assert!((run.state_sum() - total()).abs() / 500.0 < 1e-12);
        assert_eq!(run.trace().len() as u64, run.k());
        assert!(clock.now() <= 200.0);
        // about rate * horizon * n ticks
        let k = run.k() as f64;
        assert!((k - 2000.0).abs() < 5.0 * 2000f64.sqrt(), "{k}");
    }

    #[test]
    fn inter_tick_gaps_are_exponential() {
        let src = NoiseSource::new(77);
        let rate = 2.5;
        let mut clock = AsyncClock::new(rate).unwrap();
        let mut last = [0.0f64; 4];
        let mut ticks = [0u64; 4];
        for i in 0..4u32 {
            clock.schedule(NodeId(i + 1), 0, 0, 0, &src);
        }
        let mut gaps = Vec::new();
        let mut prev_time = 0.0;
        while let Some(t) = clock.pop_until(20_000.0) {
            assert!(t.time >= prev_time, "time went backwards");
            prev_time = t.time;
            let i = (t.node.0 - 1) as usize;
            gaps.push(t.time - last[i]);
            last[i] = t.time;
            ticks[i] += 1;
            clock.schedule(t.node, 0, ticks[i], 0, &src);
        }
        let n = gaps.len() as f64;
        let mean = gaps.iter().sum::<f64>() / n;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0 / rate).abs() < 5.0 * (1.0 / rate) / n.sqrt());
        assert!((var - 1.0 / (rate * rate)).abs() < 0.03 / (rate * rate));
        // memorylessness: P(gap > 1/rate) = e^-1
        let tail = gaps.iter().filter(|&&g| g > 1.0 / rate).count() as f64 / n;
        assert!((tail - (-1f64).exp()).abs() < 0.01);
    }

    #[test]
    fn ties_break_by_node_identifier() {
        let mut heap = BinaryHeap::new();
        heap.push(Tick { time: 1.0, node: NodeId(5), epoch: 0 });
        heap.push(Tick { time: 1.0, node: NodeId(2), epoch: 0 });
        heap.push(Tick { time: 0.5, node: NodeId(9), epoch: 0 });
        let order: Vec<u32> = std::iter::from_fn(|| heap.pop()).map(|t| t.node.0).collect();
        assert_eq!(order, vec![9, 2, 5]);
    }

    /// Independent replay of the zero-noise dynamics from the tick order the
    /// engine logged.
    #[test]
    fn zero_noise_run_matches_replay() {
        let config = cfg(0.0);
        let run = run_ai(&config, 1.0, 50.0).unwrap();
        let mut x = REFERENCE_SECRETS.to_vec();
        let mut windows: Vec<Vec<f64>> = vec![Vec::new(); 10];
        for m in run.trace() {
            let i = (m.sender.0 - 1) as usize;
            assert_eq!(m.value, x[i]);
            windows[i].push(x[i]);
            let sent = x[i];
            x[i] = 0.0;
            x[(i + 1) % 10] += sent;
        }
        for (i, (_, got)) in run.states().into_iter().enumerate() {
            assert_eq!(got, x[i]);
        }
        for (i, w) in windows.iter().enumerate() {
            let tail: Vec<f64> = w.iter().rev().take(10).rev().copied().collect();
            let got: Vec<f64> = run.window(NodeId(i as u32 + 1)).unwrap().iter().copied().collect();
            assert_eq!(got, tail);
        }
        assert!((run.state_sum() - total()).abs() < 1e-9);
    }

    #[test]
    fn async_leave_and_join_shift_member_sum() {
        let config = cfg(10.0).with_events(vec![
            MembershipEvent::leave(300, NodeId(10)),
            MembershipEvent::join(600, NodeId(10), NodeId(9), 100.0),
        ]);
        let src = NoiseSource::new(8);
        let (run, _) = run_ai_trial(&config, &src, 0, 1.0, 100.0).unwrap();
        assert!(run.k() > 600);
        assert_eq!(run.phases().len(), 3);
        assert!((run.phases()[1].target - 400.0).abs() < 1e-3);
        assert!((run.state_sum() - total()).abs() / 500.0 < 1e-12);
        assert!(run.topology().is_single_cycle());
    }

    #[test]
    fn rejects_bad_clock_parameters() {
        assert!(run_ai(&cfg(1.0), 0.0, 10.0).is_err());
        assert!(run_ai(&cfg(1.0), 1.0, -1.0).is_err());
    }
}
