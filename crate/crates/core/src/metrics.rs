//! Solution estimator and Monte Carlo error aggregates.
//!
//! Node `i` reports the sum of its last `n` own states. The window ending at
//! step `k` covers `x_i(k-n+1) .. x_i(k)`, so what the node outputs at time
//! `k` is the estimator indexed `k - n + 1`; both indices are kept.

use rayon::prelude::*;

use crate::engine::{ProtocolRun, run_si_trial};
use crate::error::{Error, Result};
use crate::model::{NodeId, ProtocolConfig};
use crate::noise::NoiseSource;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub node: NodeId,
    /// Step of the newest state in the window.
    pub k_end: u64,
    /// Step of the oldest state in the window, i.e. the estimator's index.
    pub k_start: u64,
    pub value: f64,
}

/// Window sum of `node` at the run's current step.
pub fn estimator(run: &ProtocolRun, node: NodeId) -> Result<Estimate> {
    let window = run.window(node).ok_or(Error::NotMember(node))?;
    let need = run.member_count();
    if window.len() < need {
        return Err(Error::WindowNotFull {
            node,
            have: window.len(),
            need,
        });
    }
    let value = window.iter().copied().collect::<CompensatedSum>().value();
    Ok(Estimate {
        node,
        k_end: run.k(),
        k_start: run.k() + 1 - need as u64,
        value,
    })
}

/// Estimates of every member whose window is full, ascending by identifier.
pub fn full_estimates(run: &ProtocolRun) -> Vec<Estimate> {
    run.topology()
        .members()
        .filter_map(|id| estimator(run, id).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub k: u64,
    pub node: NodeId,
    pub x: f64,
    /// `None` while the window is refilling.
    pub estimate: Option<Estimate>,
    pub target: f64,
}

impl TrajectoryPoint {
    pub fn abs_error(&self) -> Option<f64> {
        self.estimate.map(|e| (e.value - self.target).abs())
    }
}

/// Per-node, per-step record of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorSeries {
    pub points: Vec<TrajectoryPoint>,
}

impl EstimatorSeries {
    fn observe(&mut self, run: &ProtocolRun) {
        let target = run.current_phase().target;
        for (node, x) in run.states() {
            self.points.push(TrajectoryPoint {
                k: run.k(),
                node,
                x,
                estimate: estimator(run, node).ok(),
                target,
            });
        }
    }

    /// `sum_i |y_i - target|` at step `k`, if every member had a full window.
    pub fn total_abs_error(&self, k: u64) -> Option<f64> {
        let at: Vec<&TrajectoryPoint> = self.points.iter().filter(|p| p.k == k).collect();
        if at.is_empty() {
            return None;
        }
        at.iter().map(|p| p.abs_error()).sum()
    }
}

/// Synchronous run that records states and estimates at every step.
pub fn track_si(
    config: &ProtocolConfig,
    src: &NoiseSource,
    trial: u32,
) -> Result<(ProtocolRun, EstimatorSeries)> {
    let mut run = ProtocolRun::new(config, trial)?;
    let mut series = EstimatorSeries::default();
    series.observe(&run);
    for _ in 0..config.steps {
        run.advance(src)?;
        series.observe(&run);
    }
    Ok((run, series))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeMean {
    pub node: NodeId,
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo summary at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub k: u64,
    pub target: f64,
    /// Trials contributing (all, once windows are full; zero otherwise).
    pub trials: usize,
    /// Estimate of `E sum_i |y_i - target|`.
    pub mean_abs_error: f64,
    pub mean_abs_error_se: f64,
    /// Estimate of `sum_i var(y_i)`.
    pub sum_variance: f64,
    pub sum_variance_se: f64,
    pub node_means: Vec<NodeMean>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorAggregate {
    pub trials: usize,
    /// One point per step `0..=K`; steps without full windows have
    /// `trials == 0`.
    pub points: Vec<AggregatePoint>,
}

impl ErrorAggregate {
    pub fn at(&self, k: u64) -> Option<&AggregatePoint> {
        self.points.get(k as usize).filter(|p| p.trials > 0)
    }
}

#[derive(Debug, Clone, Default)]
struct StepAcc {
    count: usize,
    target: f64,
    nodes: Vec<NodeId>,
    dev: Vec<CompensatedSum>,
    dev_sq: Vec<CompensatedSum>,
    err: CompensatedSum,
    err_sq: CompensatedSum,
    q: CompensatedSum,
    q_sq: CompensatedSum,
}

impl StepAcc {
    fn observe(&mut self, run: &ProtocolRun) {
        let ests = full_estimates(run);
        if ests.is_empty() || ests.len() != run.member_count() {
            return;
        }
        let target = run.current_phase().target;
        if self.count == 0 {
            self.target = target;
            self.nodes = ests.iter().map(|e| e.node).collect();
            self.dev = vec![CompensatedSum::default(); ests.len()];
            self.dev_sq = vec![CompensatedSum::default(); ests.len()];
        }
        let mut err = 0.0;
        let mut q = 0.0;
        for (i, e) in ests.iter().enumerate() {
            let dev = e.value - target;
            self.dev[i].add(dev);
            self.dev_sq[i].add(dev * dev);
            err += dev.abs();
            q += dev * dev;
        }
        self.err.add(err);
        self.err_sq.add(err * err);
        self.q.add(q);
        self.q_sq.add(q * q);
        self.count += 1;
    }

    fn merge(&mut self, other: &StepAcc) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        for i in 0..self.dev.len() {
            self.dev[i].merge(&other.dev[i]);
            self.dev_sq[i].merge(&other.dev_sq[i]);
        }
        self.err.merge(&other.err);
        self.err_sq.merge(&other.err_sq);
        self.q.merge(&other.q);
        self.q_sq.merge(&other.q_sq);
        self.count += other.count;
    }

    fn finish(&self, k: u64) -> AggregatePoint {
        let t = self.count as f64;
        if self.count < 2 {
            return AggregatePoint {
                k,
                target: self.target,
                trials: self.count,
                mean_abs_error: f64::NAN,
                mean_abs_error_se: f64::NAN,
                sum_variance: f64::NAN,
                sum_variance_se: f64::NAN,
                node_means: Vec::new(),
            };
        }
        let sample_var = |s: f64, s2: f64| ((s2 - s * s / t) / (t - 1.0)).max(0.0);
        let err_mean = self.err.value() / t;
        let err_var = sample_var(self.err.value(), self.err_sq.value());
        let q_var = sample_var(self.q.value(), self.q_sq.value());
        let between: f64 = self.dev.iter().map(|s| s.value() * s.value() / t).sum();
        let sum_variance = ((self.q.value() - between) / (t - 1.0)).max(0.0);
        let node_means = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &node)| {
                let s = self.dev[i].value();
                let var = sample_var(s, self.dev_sq[i].value());
                NodeMean {
                    node,
                    mean: self.target + s / t,
                    stderr: (var / t).sqrt(),
                }
            })
            .collect();
        AggregatePoint {
            k,
            target: self.target,
            trials: self.count,
            mean_abs_error: err_mean,
            mean_abs_error_se: (err_var / t).sqrt(),
            sum_variance,
            sum_variance_se: (q_var / t).sqrt() * t / (t - 1.0),
            node_means,
        }
    }
}

/// Trials per work unit. Fixed so the merge order, and hence every rounded
/// result, does not depend on the thread count.
const CHUNK: u32 = 16;

/// Run `trials` independent synchronous trials of `config` (noise seeded from
/// `config.seed`) and summarise the estimator at every step.
pub fn aggregate_trials(config: &ProtocolConfig, trials: u32) -> Result<ErrorAggregate> {
    if trials < 2 {
        return Err(Error::domain("aggregate_trials needs at least 2 trials"));
    }
    config.validate()?;
    let src = NoiseSource::new(config.seed);
    let steps = config.steps as usize;
    let chunks: Vec<u32> = (0..trials.div_ceil(CHUNK)).collect();
    let partials: Vec<Result<Vec<StepAcc>>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = vec![StepAcc::default(); steps + 1];
            for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut run = ProtocolRun::new(config, trial)?.without_trace();
                acc[0].observe(&run);
                for slot in acc.iter_mut().skip(1) {
                    run.advance(&src)?;
                    slot.observe(&run);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![StepAcc::default(); steps + 1];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part?.iter()) {
            t.merge(p);
        }
    }
    Ok(ErrorAggregate {
        trials: trials as usize,
        points: total
            .iter()
            .enumerate()
            .map(|(k, a)| a.finish(k as u64))
            .collect(),
    })
}

/// Final-step estimates of one trial; convenience for callers that only need
/// the end state.
pub fn final_estimates(config: &ProtocolConfig, src: &NoiseSource, trial: u32) -> Result<Vec<Estimate>> {
    let run = run_si_trial(config, src, trial)?;
    Ok(full_estimates(&run))
}
