//! Weighted utility / accuracy / privacy tradeoff on the homogeneous line
//! `c_1 = ... = c_n`.
//!
//! Harmonic schedules reduce to the unique positive root of
//! `g(theta) = 4 g_a pi^2 n^2 theta^3 + sqrt(6) g_u pi n^{3/2} theta^2 - 3 g_p delta K (K-1)`.
//! Geometric schedules have no such reduction and are explored on a grid.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ScheduleFamily;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffProblem {
    pub gamma_u: f64,
    pub gamma_a: f64,
    pub gamma_p: f64,
    pub n: usize,
    pub delta: f64,
    pub steps: u64,
    pub family: ScheduleFamily,
}

impl TradeoffProblem {
    pub fn harmonic(gamma_u: f64, gamma_a: f64, gamma_p: f64, n: usize, delta: f64, steps: u64) -> Self {
        Self { gamma_u, gamma_a, gamma_p, n, delta, steps, family: ScheduleFamily::Harmonic }
    }

    pub fn geometric(gamma_u: f64, gamma_a: f64, gamma_p: f64, n: usize, delta: f64, steps: u64) -> Self {
        Self { family: ScheduleFamily::Geometric, ..Self::harmonic(gamma_u, gamma_a, gamma_p, n, delta, steps) }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("gamma_u", self.gamma_u), ("gamma_a", self.gamma_a), ("gamma_p", self.gamma_p)] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive and finite, got {g}")));
            }
        }
        if self.n <= 2 {
            return Err(Error::domain(format!("tradeoff needs n > 2, got {}", self.n)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::domain(format!("delta must be positive, got {}", self.delta)));
        }
        if self.steps == 0 {
            return Err(Error::domain("tradeoff needs K >= 1"));
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `(cubic, quadratic, constant)` coefficients of `g`.
    pub fn cubic_coefficients(&self) -> (f64, f64, f64) {
        let n = self.nf();
        let k = self.steps as f64;
        (
            4.0 * self.gamma_a * PI * PI * n * n,
            6f64.sqrt() * self.gamma_u * PI * n.powf(1.5),
            -3.0 * self.gamma_p * self.delta * k * (k - 1.0),
        )
    }

    /// Root-finding function `g(theta)`.
    pub fn g(&self, theta: f64) -> f64 {
        let (a, b, c) = self.cubic_coefficients();
        (a * theta + b) * theta * theta + c
    }

    fn g_prime(&self, theta: f64) -> f64 {
        let (a, b, _) = self.cubic_coefficients();
        (3.0 * a * theta + 2.0 * b) * theta
    }

    /// Upper end of a bracket on which `g` changes sign exactly once.
    pub fn upper_bracket(&self) -> f64 {
        let (a, _, c) = self.cubic_coefficients();
        (-c / a).cbrt() + 1.0
    }

    /// Gradient of the reduced objective in `(c_M, c_m)`.
    pub fn gradient(&self, c_max: f64, c_min: f64) -> [f64; 2] {
        let n = self.nf();
        let k = self.steps as f64;
        [
            2.0 * self.gamma_a * PI * PI * n * n * c_max / 3.0 + self.gamma_u * PI * n * (n / 6.0).sqrt(),
            -self.gamma_p * self.delta * k * (k - 1.0) / (2.0 * c_min * c_min),
        ]
    }
}

/// Scalarized harmonic objective at `c_M = c_m = c`, offset `d_M = d`.
pub fn objective_harmonic(p: &TradeoffProblem, c: f64, d: f64) -> f64 {
    let n = p.nf();
    let k = p.steps as f64;
    p.gamma_u * c * PI * n * (n / 6.0).sqrt()
        + p.gamma_a * c * c * PI * PI * n * n / 3.0
        + p.gamma_p * p.delta * k * ((k - 1.0) / 2.0 + d) / c
}

/// Scalarized geometric objective at `c_M = c_m = c`, `phi_M = phi_m = phi`.
pub fn objective_geometric(p: &TradeoffProblem, c: f64, phi: f64) -> f64 {
    let n = p.nf();
    let k = p.steps as f64;
    let room = 1.0 - phi * phi;
    let ln_phi = phi.ln();
    // (1 - phi^K) / (phi^{K-1} - phi^K), kept finite for tiny phi where possible.
    let privacy_factor =
        (-(k * ln_phi).exp_m1() / -ln_phi.exp_m1()) * (-(k - 1.0) * ln_phi).exp();
    p.gamma_u * c * n * (n / room).sqrt()
        + p.gamma_a * 2.0 * n * n * c * c / room
        + p.gamma_p * p.delta * privacy_factor / c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub c: f64,
    pub d: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffSolution {
    pub c_star: f64,
    pub d_star: f64,
    pub objective: f64,
    /// `|g(c_star)|`.
    pub residual: f64,
    /// Multiplier of the constraint `c_m <= c_M`.
    pub kkt_multiplier: f64,
    /// Stationarity residuals `grad U + mu p` at `(c_star, c_star)`.
    pub kkt_residuals: [f64; 2],
    /// The theoretical optimum has `d = 0`, which the engine realizes as
    /// `d = 1`; this is the objective there.
    pub engine_feasible: OperatingPoint,
}

pub fn solve_harmonic(p: &TradeoffProblem) -> Result<TradeoffSolution> {
    p.validate()?;
    if p.family != ScheduleFamily::Harmonic {
        return Err(Error::domain("solve_harmonic needs a harmonic problem"));
    }
    if p.steps < 2 {
        return Err(Error::DegenerateTradeoff(format!(
            "K = {}: the privacy term vanishes and g has no positive root",
            p.steps
        )));
    }
    let mut lo = 0.0;
    let mut hi = p.upper_bracket();
    debug_assert!(p.g(lo) < 0.0 && p.g(hi) > 0.0);
    for _ in 0..2000 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if p.g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut theta = 0.5 * (lo + hi);
    let polished = theta - p.g(theta) / p.g_prime(theta);
    if polished > lo && polished < hi && p.g(polished).abs() <= p.g(theta).abs() {
        theta = polished;
    }

    // grad U = -mu p with p = (-1, 1): least-squares mu from both components.
    let grad = p.gradient(theta, theta);
    let mu = 0.5 * (grad[0] - grad[1]);
    Ok(TradeoffSolution {
        c_star: theta,
        d_star: 0.0,
        objective: objective_harmonic(p, theta, 0.0),
        residual: p.g(theta).abs(),
        kkt_multiplier: mu,
        kkt_residuals: [grad[0] - mu, grad[1] + mu],
        engine_feasible: OperatingPoint { c: theta, d: 1.0, objective: objective_harmonic(p, theta, 1.0) },
    })
}

/// Evenly spaced grid; `phi` bounds are clipped into `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricGrid {
    pub c_min: f64,
    pub c_max: f64,
    pub c_points: usize,
    pub phi_min: f64,
    pub phi_max: f64,
    pub phi_points: usize,
}

const PHI_CLIP: f64 = 1e-6;

fn linspace(lo: f64, hi: f64, m: usize, i: usize) -> f64 {
    if m == 1 {
        lo
    } else {
        lo + (hi - lo) * (i as f64 / (m - 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub c: f64,
    pub phi: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricExploration {
    pub best: GridPoint,
    /// Row-major over `c`, then `phi`.
    pub surface: Vec<GridPoint>,
    pub warnings: Vec<String>,
}

pub fn explore_geometric(p: &TradeoffProblem, grid: &GeometricGrid) -> Result<GeometricExploration> {
    p.validate()?;
    if grid.c_points == 0 || grid.phi_points == 0 {
        return Err(Error::domain("grid needs at least one point per axis"));
    }
    if !(grid.c_min > 0.0 && grid.c_max >= grid.c_min && grid.c_max.is_finite()) {
        return Err(Error::domain(format!("c range [{}, {}] must be positive", grid.c_min, grid.c_max)));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(grid.phi_max >= grid.phi_min) {
        return Err(Error::domain("phi range is reversed"));
    }
    let mut warnings = Vec::new();
    let clip = |v: f64, name: &str, warnings: &mut Vec<String>| {
        let c = v.clamp(PHI_CLIP, 1.0 - PHI_CLIP);
        if c != v {
            warnings.push(format!("{name} = {v} clipped to {c}"));
        }
        c
    };
    let phi_lo = clip(grid.phi_min, "phi_min", &mut warnings);
    let phi_hi = clip(grid.phi_max, "phi_max", &mut warnings);

    let surface: Vec<GridPoint> = (0..grid.c_points)
        .into_par_iter()
        .flat_map_iter(|i| {
            let c = linspace(grid.c_min, grid.c_max, grid.c_points, i);
            (0..grid.phi_points).map(move |j| {
                let phi = linspace(phi_lo, phi_hi, grid.phi_points, j);
                GridPoint { c, phi, objective: objective_geometric(p, c, phi) }
            })
        })
        .collect();
    let best = *surface
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("grid is non-empty");
    Ok(GeometricExploration { best, surface, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: doubling bracket, then plain bisection on the
    /// expanded polynomial.
    fn oracle_root(p: &TradeoffProblem) -> f64 {
        let n = p.n as f64;
        let k = p.steps as f64;
        let g = |t: f64| {
            4.0 * p.gamma_a * PI.powi(2) * n.powi(2) * t.powi(3)
                + 6f64.sqrt() * p.gamma_u * PI * n * n.sqrt() * t.powi(2)
                - 3.0 * p.gamma_p * p.delta * k * (k - 1.0)
        };
        let mut hi = 1.0;
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn unit() -> TradeoffProblem {
        TradeoffProblem::harmonic(1.0, 1.0, 1.0, 3, 1.0, 2)
    }

    #[test]
    fn unit_balancers_root() {
        let sol = solve_harmonic(&unit()).unwrap();
        assert!((sol.c_star - 0.224).abs() < 5e-4, "{}", sol.c_star);
        assert!((sol.c_star - oracle_root(&unit())).abs() < 1e-12);
        assert!(sol.residual <= 1e-10);
        assert!(sol.kkt_multiplier > 0.0);
        assert!(sol.kkt_residuals.iter().all(|r| r.abs() <= 1e-8));
        assert_eq!(sol.d_star, 0.0);
        assert!(sol.engine_feasible.objective > sol.objective);
    }

    #[test]
    fn heavier_accuracy_weight_shrinks_noise() {
        let base = solve_harmonic(&unit()).unwrap().c_star;
        let p = TradeoffProblem { gamma_a: 4.0, ..unit() };
        let heavier = solve_harmonic(&p).unwrap().c_star;
        assert!(heavier < base);
        assert!((heavier - oracle_root(&p)).abs() < 1e-10);
    }

    #[test]
    fn local_minimum_probe() {
        let p = unit();
        let sol = solve_harmonic(&p).unwrap();
        let f = |c| objective_harmonic(&p, c, 0.0);
        assert!(f(sol.c_star) <= f(1.1 * sol.c_star));
        assert!(f(sol.c_star) <= f(0.9 * sol.c_star));
        assert!(objective_harmonic(&p, 0.3, 0.5) > objective_harmonic(&p, 0.3, 0.0));
        let free = TradeoffProblem { gamma_p: 1e-300, ..p };
        assert!(objective_harmonic(&free, 0.01, 0.0) < objective_harmonic(&free, 0.02, 0.0));
    }

    #[test]
    fn degenerate_and_invalid() {
        let p = TradeoffProblem { steps: 1, ..unit() };
        assert!(matches!(solve_harmonic(&p), Err(Error::DegenerateTradeoff(_))));
        assert!(solve_harmonic(&TradeoffProblem { gamma_u: 0.0, ..unit() }).is_err());
        assert!(solve_harmonic(&TradeoffProblem { n: 2, ..unit() }).is_err());
        let geo = TradeoffProblem::geometric(1.0, 1.0, 1.0, 3, 1.0, 2);
        assert!(solve_harmonic(&geo).is_err());
    }

    fn problem() -> impl Strategy<Value = TradeoffProblem> {
        (0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0, 3usize..=50, 0.1f64..2.0, 2u64..=30)
            .prop_map(|(u, a, p, n, d, k)| TradeoffProblem::harmonic(u, a, p, n, d, k))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn solver_matches_oracle(p in problem()) {
            let sol = solve_harmonic(&p).unwrap();
            prop_assert!(sol.residual <= 1e-10, "residual {}", sol.residual);
            prop_assert!((sol.c_star - oracle_root(&p)).abs() <= 1e-8);
            prop_assert!(sol.kkt_multiplier > 0.0);
            prop_assert!(sol.kkt_residuals.iter().all(|r| r.abs() <= 1e-8), "{:?}", sol.kkt_residuals);
        }

        #[test]
        fn single_sign_change(p in problem()) {
            let hi = p.upper_bracket();
            let m = 2000;
            let changes = (0..m)
                .map(|i| p.g(hi * (i + 1) as f64 / m as f64))
                .collect::<Vec<_>>()
                .windows(2)
                .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
                .count();
            prop_assert!(p.g(1e-300) < 0.0 && p.g(hi) > 0.0);
            prop_assert!(changes <= 1);
        }

        #[test]
        fn balancer_scaling_invariance(p in problem(), s in 0.01f64..100.0) {
            let scaled = TradeoffProblem {
                gamma_u: p.gamma_u * s,
                gamma_a: p.gamma_a * s,
                gamma_p: p.gamma_p * s,
                ..p
            };
            let a = solve_harmonic(&p).unwrap().c_star;
            let b = solve_harmonic(&scaled).unwrap().c_star;
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }

    fn geo_problem() -> TradeoffProblem {
        TradeoffProblem::geometric(1.0, 1.0, 1.0, 3, 1.0, 5)
    }

    fn grid(m: usize) -> GeometricGrid {
        GeometricGrid { c_min: 0.01, c_max: 2.0, c_points: m, phi_min: 0.01, phi_max: 0.99, phi_points: m }
    }

    #[test]
    fn surface_is_positive_and_refinement_never_hurts() {
        let p = geo_problem();
        let coarse = explore_geometric(&p, &grid(51)).unwrap();
        let fine = explore_geometric(&p, &grid(101)).unwrap();
        assert!(coarse.surface.iter().all(|g| g.objective > 0.0));
        assert_eq!(coarse.surface.len(), 51 * 51);
        assert!(fine.best.objective <= coarse.best.objective);
        assert!(coarse.warnings.is_empty());
    }

    #[test]
    fn nested_regrid_agrees_within_spacing() {
        let p = geo_problem();
        let g = grid(100);
        let best = explore_geometric(&p, &g).unwrap().best;
        let dc = (g.c_max - g.c_min) / 99.0;
        let dphi = (g.phi_max - g.phi_min) / 99.0;
        let local = GeometricGrid {
            c_min: (best.c - dc).max(g.c_min),
            c_max: best.c + dc,
            c_points: 21,
            phi_min: (best.phi - dphi).max(g.phi_min),
            phi_max: best.phi + dphi,
            phi_points: 21,
        };
        let refined = explore_geometric(&p, &local).unwrap().best;
        assert!((refined.c - best.c).abs() <= dc);
        assert!((refined.phi - best.phi).abs() <= dphi);
        assert!(refined.objective <= best.objective);
    }

    #[test]
    fn phi_bounds_are_clipped() {
        let g = GeometricGrid { phi_min: 0.0, phi_max: 1.0, ..grid(5) };
        let res = explore_geometric(&geo_problem(), &g).unwrap();
        assert_eq!(res.warnings.len(), 2);
        assert!(res.surface.iter().all(|s| s.objective.is_finite()));
    }

    #[test]
    fn geometric_objective_at_one_step() {
        // K = 1: the privacy factor is 1.
        let p = TradeoffProblem::geometric(1.0, 1.0, 1.0, 3, 1.0, 1);
        let expect = 3.0 * (3.0 / 0.75f64).sqrt() + 2.0 * 9.0 / 0.75 + 1.0;
        assert!((objective_geometric(&p, 1.0, 0.5) - expect).abs() < 1e-12);
    }
}
