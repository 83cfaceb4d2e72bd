//! Asymptotic bounds on the estimator error (`E sum_i |y_i - sum s|`) and
//! on its spread (`sum_i var(y_i)`), for both schedule families.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{NoiseSchedule, ProtocolConfig, ScheduleFamily};

/// Extremes of the per-node schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleAggregates {
    pub family: ScheduleFamily,
    pub c_max: f64,
    pub c_min: f64,
    /// Harmonic only (0 for geometric).
    pub d_max: f64,
    /// Geometric only (0 for harmonic).
    pub phi_max: f64,
    pub phi_min: f64,
    /// Geometric: `max_i c_i / sqrt(1 - phi_i^2)`.
    pub geometric_utility_peak: f64,
    /// Geometric: `max_i c_i^2 / (1 - phi_i^2)`.
    pub geometric_variance_peak: f64,
}

impl ScheduleAggregates {
    pub fn from_schedules(schedules: &[NoiseSchedule]) -> Result<Self> {
        let first = schedules
            .first()
            .ok_or_else(|| Error::domain("no schedules to aggregate"))?;
        let family = first.family();
        if schedules.iter().any(|s| s.family() != family) {
            return Err(Error::MixedFamilies);
        }
        let mut agg = ScheduleAggregates {
            family,
            c_max: f64::NEG_INFINITY,
            c_min: f64::INFINITY,
            d_max: 0.0,
            phi_max: 0.0,
            phi_min: if family == ScheduleFamily::Geometric { 1.0 } else { 0.0 },
            geometric_utility_peak: 0.0,
            geometric_variance_peak: 0.0,
        };
        for s in schedules {
            let c = s.c();
            agg.c_max = agg.c_max.max(c);
            agg.c_min = agg.c_min.min(c);
            match *s {
                NoiseSchedule::Harmonic { d, .. } => agg.d_max = agg.d_max.max(d),
                NoiseSchedule::Geometric { phi, .. } => {
                    agg.phi_max = agg.phi_max.max(phi);
                    agg.phi_min = agg.phi_min.min(phi);
                    let room = 1.0 - phi * phi;
                    agg.geometric_utility_peak = agg.geometric_utility_peak.max(c / room.sqrt());
                    agg.geometric_variance_peak = agg.geometric_variance_peak.max(c * c / room);
                }
            }
        }
        Ok(agg)
    }

    pub fn from_config(config: &ProtocolConfig) -> Result<Self> {
        Self::from_schedules(&config.all_schedules())
    }

    /// Aggregates of the noise standard deviation rather than the schedule
    /// magnitude. The accuracy bounds assume `var beta = v^2`; Laplace noise
    /// of scale `v` has variance `2 v^2`, so its `c` is scaled by `sqrt 2`.
    pub fn effective(config: &ProtocolConfig) -> Result<Self> {
        let scale = config.distribution.variance_for_magnitude(1.0).sqrt();
        let scaled = config
            .all_schedules()
            .into_iter()
            .map(|s| match s {
                NoiseSchedule::Harmonic { c, d } => NoiseSchedule::harmonic(c * scale, d),
                NoiseSchedule::Geometric { c, phi } => NoiseSchedule::geometric(c * scale, phi),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_schedules(&scaled)
    }

    /// Aggregates of a single shared schedule.
    pub fn uniform(schedule: NoiseSchedule) -> Self {
        Self::from_schedules(&[schedule]).expect("one schedule is homogeneous")
    }
}

fn check_n(n: usize) -> Result<f64> {
    if n <= 2 {
        return Err(Error::domain(format!("bounds need n > 2, got {n}")));
    }
    Ok(n as f64)
}

/// Limit of `E sum_i |y_i(k) - sum_j s_j|` as `k -> inf` is at most
/// `c_M pi n sqrt(n/6)` (harmonic) or `max_i c_i n sqrt(n/(1-phi_i^2))`
/// (geometric).
pub fn utility_bound(agg: &ScheduleAggregates, n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    Ok(match agg.family {
        ScheduleFamily::Harmonic => agg.c_max * PI * nf * (nf / 6.0).sqrt(),
        ScheduleFamily::Geometric => agg.geometric_utility_peak * nf * nf.sqrt(),
    })
}

/// Limit of `sum_i var(y_i(k))` is at most `c_M^2 pi^2 n^2 / 3` (harmonic)
/// or `max_i 2 n^2 c_i^2 / (1 - phi_i^2)` (geometric).
pub fn variance_bound(agg: &ScheduleAggregates, n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    Ok(match agg.family {
        ScheduleFamily::Harmonic => agg.c_max * agg.c_max * PI * PI * nf * nf / 3.0,
        ScheduleFamily::Geometric => 2.0 * nf * nf * agg.geometric_variance_peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h(c: f64, d: f64) -> ScheduleAggregates {
        ScheduleAggregates::uniform(NoiseSchedule::harmonic(c, d).unwrap())
    }

    fn g(c: f64, phi: f64) -> ScheduleAggregates {
        ScheduleAggregates::uniform(NoiseSchedule::geometric(c, phi).unwrap())
    }

    #[test]
    fn harmonic_example_values() {
        // 1000 * pi * 10 * sqrt(10/6)
        let u = utility_bound(&h(1000.0, 1.0), 10).unwrap();
        assert!((u - 4.0558e4).abs() < 1.0, "{u}");
        assert_relative_eq!(u, 1000.0 * PI * 10.0 * (10.0f64 / 6.0).sqrt(), max_relative = 1e-15);
        let v = variance_bound(&h(1000.0, 1.0), 10).unwrap();
        assert_relative_eq!(v, 1.0e6 * PI * PI * 100.0 / 3.0, max_relative = 1e-12);
        assert!((v - 3.29e8).abs() < 0.01e8);
        let u9 = utility_bound(&h(1000.0, 1.0), 9).unwrap();
        assert!((u9 - 3.46e4).abs() < 0.01e4, "{u9}");
    }

    #[test]
    fn geometric_closed_arithmetic() {
        assert_relative_eq!(utility_bound(&g(1.0, 0.5), 3).unwrap(), 6.0, max_relative = 1e-15);
        assert_relative_eq!(variance_bound(&g(1.0, 0.5), 3).unwrap(), 24.0, max_relative = 1e-15);
        assert_relative_eq!(
            variance_bound(&h(1.0, 1.0), 3).unwrap(),
            3.0 * PI * PI,
            max_relative = 1e-15
        );
    }

    #[test]
    fn zero_magnitude_means_zero_bounds() {
        assert_eq!(utility_bound(&h(0.0, 1.0), 5).unwrap(), 0.0);
        assert_eq!(variance_bound(&h(0.0, 1.0), 5).unwrap(), 0.0);
    }

    #[test]
    fn scaling_in_c_is_linear_and_quadratic() {
        for n in 3..9 {
            for agg in [(h(1.3, 2.0), h(2.6, 2.0)), (g(0.7, 0.4), g(1.4, 0.4))] {
                let u = utility_bound(&agg.1, n).unwrap() / utility_bound(&agg.0, n).unwrap();
                let v = variance_bound(&agg.1, n).unwrap() / variance_bound(&agg.0, n).unwrap();
                assert_relative_eq!(u, 2.0, max_relative = 1e-14);
                assert_relative_eq!(v, 4.0, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn heterogeneous_geometric_uses_worst_node() {
        let schedules = [
            NoiseSchedule::geometric(1.0, 0.5).unwrap(),
            NoiseSchedule::geometric(0.9, 0.9).unwrap(),
        ];
        let agg = ScheduleAggregates::from_schedules(&schedules).unwrap();
        let worst = 0.9 / (1.0f64 - 0.81).sqrt();
        assert_relative_eq!(utility_bound(&agg, 4).unwrap(), worst * 4.0 * 2.0, max_relative = 1e-14);
        assert_eq!(agg.phi_min, 0.5);
        assert_eq!(agg.c_min, 0.9);
    }

    #[test]
    fn laplace_bounds_use_standard_deviation() {
        let cfg = |dist| {
            ProtocolConfig::uniform(vec![1.0; 4], NoiseSchedule::geometric(1.0, 0.5).unwrap(), dist, 3, 0)
        };
        let lap = ScheduleAggregates::effective(&cfg(crate::model::NoiseDistribution::Laplace)).unwrap();
        let gau = ScheduleAggregates::effective(&cfg(crate::model::NoiseDistribution::Gaussian)).unwrap();
        assert_relative_eq!(variance_bound(&lap, 4).unwrap(), 2.0 * variance_bound(&gau, 4).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn mixed_families_and_small_rings_are_errors() {
        let mixed = [
            NoiseSchedule::geometric(1.0, 0.5).unwrap(),
            NoiseSchedule::harmonic(1.0, 1.0).unwrap(),
        ];
        assert_eq!(ScheduleAggregates::from_schedules(&mixed), Err(Error::MixedFamilies));
        assert!(utility_bound(&h(1.0, 1.0), 2).is_err());
    }
}
