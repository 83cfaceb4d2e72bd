//! Empirical likelihood-ratio audit of the privacy budget.
//!
//! For an audited node `i` with predecessor `p`, the eavesdropper can form
//! `u_k = d_i(k) - sum_{t<k} (d_p(t) - d_i(t)) = s_i - beta_i(k)` from the
//! trace, and every other message is independent of `s_i`. The `K`-vector
//! `u` is therefore sufficient for distinguishing `s` from `s + delta e_i`,
//! and binning it estimates the likelihood ratio of the whole trace.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::engine::ProtocolRun;
use crate::error::{Error, Result};
use crate::model::{NodeId, NoiseDistribution, ProtocolConfig};
use crate::noise::NoiseSource;

use super::privacy::run_budgets;

const MAX_AUDIT_NODES: usize = 4;
const MAX_AUDIT_STEPS: u64 = 3;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    /// Node whose secret is perturbed.
    pub node: NodeId,
    /// Traces per secret vector.
    pub samples: usize,
    /// Bins count only when both histograms hold at least this many traces.
    pub min_count: u32,
    /// Multiples of the Freedman-Diaconis width to sweep.
    pub width_multipliers: Vec<f64>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            node: NodeId(1),
            samples: 1_000_000,
            min_count: 10_000,
            width_multipliers: vec![1.0, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthSensitivity {
    pub multiplier: f64,
    pub bins_used: usize,
    /// `None` when no bin met the count threshold at this width.
    pub max_log_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditResult {
    /// Largest `|ln(P(bin | s) / P(bin | s'))|` over every qualifying bin of
    /// every swept width.
    pub observed: f64,
    /// Realized budget of the audited configuration.
    pub epsilon: f64,
    /// Three standard errors of the log ratio at the maximizing bin.
    pub tolerance: f64,
    pub samples: usize,
    pub sensitivity: Vec<WidthSensitivity>,
}

impl AuditResult {
    pub fn within(&self, slack: f64) -> bool {
        self.observed <= self.epsilon + slack
    }
}

/// Audit with default options and `samples` traces per secret vector.
pub fn dp_audit(config: &ProtocolConfig, delta: f64, steps: u64, samples: usize) -> Result<AuditResult> {
    dp_audit_with(config, delta, steps, &AuditOptions { samples, ..AuditOptions::default() })
}

pub fn dp_audit_with(
    config: &ProtocolConfig,
    delta: f64,
    steps: u64,
    opts: &AuditOptions,
) -> Result<AuditResult> {
    if config.distribution != NoiseDistribution::Laplace {
        return Err(Error::NonLaplace(format!(
            "audit targets the Laplace guarantee; got {}",
            config.distribution
        )));
    }
    let n = config.secrets.len();
    if n > MAX_AUDIT_NODES || !(1..=MAX_AUDIT_STEPS).contains(&steps) {
        return Err(Error::domain(format!(
            "density-ratio audit is limited to n <= {MAX_AUDIT_NODES}, 1 <= K <= {MAX_AUDIT_STEPS}; got n={n}, K={steps}"
        )));
    }
    if !config.events.is_empty() {
        return Err(Error::domain("audit runs a fixed ring without membership events"));
    }
    if opts.samples < 2 || opts.width_multipliers.is_empty() {
        return Err(Error::InsufficientSamples("audit needs >= 2 samples and one bin width".into()));
    }
    let base = ProtocolConfig { steps, ..config.clone() };
    let idx = base
        .node_ids()
        .position(|id| id == opts.node)
        .ok_or(Error::NotMember(opts.node))?;
    let mut adjacent = base.clone();
    adjacent.secrets[idx] += delta;
    let epsilon = run_budgets(&base, delta)?.realized.total();

    let src = NoiseSource::new(base.seed);
    let first = sample_innovations(&base, &src, opts.node, steps, 0, opts.samples)?;
    let second = sample_innovations(&adjacent, &src, opts.node, steps, opts.samples, opts.samples)?;

    let dims = steps as usize;
    let widths = fd_widths(&first, &second, dims);
    let origin: Vec<f64> = (0..dims)
        .map(|j| {
            first
                .iter()
                .chain(&second)
                .skip(j)
                .step_by(dims)
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    let mut observed = f64::NEG_INFINITY;
    let mut tolerance = f64::NAN;
    let mut sensitivity = Vec::with_capacity(opts.width_multipliers.len());
    for &mult in &opts.width_multipliers {
        let h: Vec<f64> = widths.iter().map(|w| w * mult).collect();
        let mut bins: HashMap<[i64; MAX_AUDIT_STEPS as usize], [u32; 2]> = HashMap::new();
        for (side, data) in [&first, &second].into_iter().enumerate() {
            for u in data.chunks_exact(dims) {
                let mut key = [0i64; MAX_AUDIT_STEPS as usize];
                for j in 0..dims {
                    key[j] = ((u[j] - origin[j]) / h[j]).floor() as i64;
                }
                bins.entry(key).or_default()[side] += 1;
            }
        }
        let mut best: Option<(f64, f64)> = None;
        let mut used = 0;
        for [a, b] in bins.values().copied() {
            if a < opts.min_count || b < opts.min_count {
                continue;
            }
            used += 1;
            let (a, b) = (f64::from(a), f64::from(b));
            let ratio = (a / b).ln().abs();
            if best.is_none_or(|(r, _)| ratio > r) {
                best = Some((ratio, 3.0 * (1.0 / a + 1.0 / b).sqrt()));
            }
        }
        if let Some((r, tol)) = best {
            if r > observed {
                observed = r;
                tolerance = tol;
            }
        }
        sensitivity.push(WidthSensitivity {
            multiplier: mult,
            bins_used: used,
            max_log_ratio: best.map(|(r, _)| r),
        });
    }
    if observed == f64::NEG_INFINITY {
        return Err(Error::InsufficientSamples(format!(
            "no bin holds {} traces under both secrets at any width; raise samples above {}",
            opts.min_count, opts.samples
        )));
    }
    Ok(AuditResult {
        observed,
        epsilon,
        tolerance,
        samples: opts.samples,
        sensitivity,
    })
}

/// Row-major `samples x steps` innovations for trials `first_trial..`.
fn sample_innovations(
    config: &ProtocolConfig,
    src: &NoiseSource,
    node: NodeId,
    steps: u64,
    first_trial: usize,
    samples: usize,
) -> Result<Vec<f64>> {
    let pred = config.topology()?.predecessor(node).ok_or(Error::NotMember(node))?;
    let chunks: Vec<Result<Vec<f64>>> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(samples);
            let mut out = Vec::with_capacity((hi - lo) * steps as usize);
            for t in lo..hi {
                let trial = u32::try_from(first_trial + t)
                    .map_err(|_| Error::domain("audit trial index overflows u32"))?;
                let mut run = ProtocolRun::new(config, trial)?;
                for _ in 0..steps {
                    run.advance(src)?;
                }
                let mut own = [0.0; MAX_AUDIT_STEPS as usize];
                let mut incoming = [0.0; MAX_AUDIT_STEPS as usize];
                for m in run.trace() {
                    if m.sender == node {
                        own[m.k as usize] = m.value;
                    } else if m.sender == pred {
                        incoming[m.k as usize] = m.value;
                    }
                }
                let mut drift = 0.0;
                for k in 0..steps as usize {
                    out.push(own[k] - drift);
                    drift += incoming[k] - own[k];
                }
            }
            Ok(out)
        })
        .collect();
    let mut flat = Vec::with_capacity(samples * steps as usize);
    for chunk in chunks {
        flat.extend(chunk?);
    }
    Ok(flat)
}

/// Per-coordinate `2 IQR N^{-1/(dims+2)}` over the pooled samples.
fn fd_widths(first: &[f64], second: &[f64], dims: usize) -> Vec<f64> {
    let total = (first.len() + second.len()) / dims;
    (0..dims)
        .map(|j| {
            let mut col: Vec<f64> = first
                .iter()
                .chain(second)
                .skip(j)
                .step_by(dims)
                .copied()
                .collect();
            col.sort_by(f64::total_cmp);
            let q = |p: f64| col[((col.len() - 1) as f64 * p).round() as usize];
            let iqr = q(0.75) - q(0.25);
            let w = 2.0 * iqr * (total as f64).powf(-1.0 / (dims as f64 + 2.0));
            if w > 0.0 { w } else { 1.0 }
        })
        .collect()
}
