//! Privacy budget of the Laplace-masked protocol against an eavesdropper
//! that sees every transmitted message.
//!
//! Per-step budgets are `eps_k = delta (k + d_M) / c_m` (harmonic) and
//! `eps_k = delta phi_m^{-k} / c_m` (geometric). The geometric terms
//! overflow `f64` long before `K = 10^4` for small `phi`, so every budget is
//! carried as a natural logarithm next to its (possibly infinite) value.

use crate::error::{Error, Result};
use crate::metrics::CompensatedSum;
use crate::model::{NoiseDistribution, ProtocolConfig, ScheduleFamily};

use super::bounds::ScheduleAggregates;

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyBudget {
    pub family: ScheduleFamily,
    pub delta: f64,
    pub steps: u64,
    /// Schedule index of the first accounted step.
    pub offset: u64,
    /// `ln eps_k` for `k` in `0..steps`; `-inf` for a zero term.
    pub ln_per_step: Vec<f64>,
    /// Closed-form composed budget, as a logarithm.
    pub ln_total: f64,
    /// `ln` of the term-by-term sum of `eps_k`.
    pub ln_composed: f64,
}

impl PrivacyBudget {
    pub fn total(&self) -> f64 {
        self.ln_total.exp()
    }

    pub fn per_step(&self) -> impl Iterator<Item = f64> + '_ {
        self.ln_per_step.iter().map(|l| l.exp())
    }

    /// `|sum_k eps_k / eps - 1|`, evaluated in log space.
    pub fn composition_gap(&self) -> f64 {
        if self.ln_total == f64::NEG_INFINITY && self.ln_composed == f64::NEG_INFINITY {
            return 0.0;
        }
        (self.ln_composed - self.ln_total).exp_m1().abs()
    }
}

/// Budget and its realized counterpart when the engine shifted a `d = 0`
/// harmonic schedule by one step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunBudgets {
    pub unshifted: PrivacyBudget,
    pub realized: PrivacyBudget,
}

impl RunBudgets {
    pub fn shifted(&self) -> bool {
        self.realized.offset != self.unshifted.offset
    }
}

/// Composed budget over steps `0..steps` with the schedule as written.
pub fn epsilon_total(agg: &ScheduleAggregates, delta: f64, steps: u64) -> Result<PrivacyBudget> {
    epsilon_total_with_offset(agg, delta, steps, 0)
}

/// Composed budget for steps `0..steps` when step `k` used schedule index
/// `k + offset`.
pub fn epsilon_total_with_offset(
    agg: &ScheduleAggregates,
    delta: f64,
    steps: u64,
    offset: u64,
) -> Result<PrivacyBudget> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta must be finite and >= 0, got {delta}")));
    }
    if steps == 0 {
        return Err(Error::domain("privacy budget needs K >= 1"));
    }
    // Negated so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(agg.c_min > 0.0) {
        return Err(Error::domain(format!(
            "c_m = {} leaves messages unmasked; no finite budget exists",
            agg.c_min
        )));
    }
    let ln_delta = delta.ln();
    let ln_c = agg.c_min.ln();
    let kf = steps as f64;
    let of = offset as f64;

    let (ln_per_step, ln_total, ln_composed) = match agg.family {
        ScheduleFamily::Harmonic => {
            let d = agg.d_max + of;
            let per: Vec<f64> = (0..steps)
                .map(|k| ln_delta + (k as f64 + d).ln() - ln_c)
                .collect();
            let closed = ln_delta + kf.ln() + ((kf - 1.0) / 2.0 + d).ln() - ln_c;
            let sum: CompensatedSum = (0..steps).map(|k| k as f64 + d).collect();
            (per, closed, ln_delta + sum.value().ln() - ln_c)
        }
        ScheduleFamily::Geometric => {
            let phi = agg.phi_min;
            if !(phi > 0.0 && phi < 1.0) {
                return Err(Error::domain(format!("geometric budget needs phi_m in (0,1), got {phi}")));
            }
            let ln_phi = phi.ln();
            let base = ln_delta - ln_c - of * ln_phi;
            let per: Vec<f64> = (0..steps).map(|k| base - k as f64 * ln_phi).collect();
            // Both forms share the factor phi^{-(K-1)}; what remains is
            // sum_j phi^j against (1 - phi^K) / (1 - phi).
            let scale = base - (kf - 1.0) * ln_phi;
            let closed = scale + (-(kf * ln_phi).exp_m1()).ln() - (-ln_phi.exp_m1()).ln();
            let factor: CompensatedSum = (0..steps).map(|j| phi.powi(j as i32)).collect();
            (per, closed, scale + factor.value().ln())
        }
    };
    Ok(PrivacyBudget {
        family: agg.family,
        delta,
        steps,
        offset,
        ln_per_step,
        ln_total,
        ln_composed,
    })
}

/// Budgets for a configured run. Refuses anything but Laplace noise, the
/// only distribution for which the guarantee holds.
pub fn run_budgets(config: &ProtocolConfig, delta: f64) -> Result<RunBudgets> {
    if config.distribution != NoiseDistribution::Laplace {
        return Err(Error::NonLaplace(format!(
            "the budget bounds the likelihood ratio of Laplace-masked messages; {} noise has no such guarantee",
            config.distribution
        )));
    }
    let agg = ScheduleAggregates::from_config(config)?;
    let offset = config.schedule_offset();
    Ok(RunBudgets {
        unshifted: epsilon_total(&agg, delta, config.steps)?,
        realized: epsilon_total_with_offset(&agg, delta, config.steps, offset)?,
    })
}
