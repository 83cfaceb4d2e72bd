//! Command-line front end; every subcommand is a thin adapter over one
//! library module.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{
    circulant_oracle, dp_audit_with, epsilon_total, epsilon_total_with_offset, trace_bound_check,
    trace_bound::random_instance, run_budgets, utility_bound, variance_bound, AuditOptions, CheckRecord,
    ScheduleAggregates, Verdict,
};
use crate::engine::{run_ai_trial, Phase};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_trials, full_estimates, track_si, CompensatedSum, EstimatorSeries};
use crate::model::{NodeId, NoiseDistribution, NoiseSchedule, ProtocolConfig, ScheduleFamily};
use crate::noise::NoiseSource;
use crate::scenario::{Output, Protocol, Scenario};
use crate::tradeoff::{explore_geometric, solve_harmonic, GeometricGrid, TradeoffProblem};

/// Overrides `--out` when set.
pub const OUT_ENV: &str = "RINGSUM_OUT";

/// Exit status when a run completes but a CHECK fails.
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ringsum", version, about = "Privacy-preserving ring summation: simulator and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file and write CSV artifacts plus summary.txt.
    Simulate(SimulateArgs),
    /// Asymptotic utility and variance bounds.
    Bounds(BoundsArgs),
    /// Composed privacy budget.
    Budget(BudgetArgs),
    /// Optimal noise parameters for weighted utility, accuracy and privacy.
    Tradeoff(TradeoffArgs),
    /// Empirical likelihood-ratio audit of the privacy budget.
    Audit(AuditArgs),
    /// Circulant identities and the covariance-trace inequality.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces the scenario's trial count.
    #[arg(long)]
    pub trials: Option<u32>,
    /// Artifacts go to `<out>/<scenario name>/`.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value = "harmonic")]
    pub family: ScheduleFamily,
    #[arg(long)]
    pub c: f64,
    /// Harmonic offset.
    #[arg(long, default_value_t = 1.0)]
    pub d: f64,
    /// Geometric ratio.
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
}

impl ScheduleArgs {
    fn schedule(&self) -> Result<NoiseSchedule> {
        match self.family {
            ScheduleFamily::Harmonic => NoiseSchedule::harmonic(self.c, self.d),
            ScheduleFamily::Geometric => NoiseSchedule::geometric(self.c, self.phi),
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long = "K")]
    pub steps: u64,
    #[arg(long, default_value = "laplace")]
    pub distribution: NoiseDistribution,
    /// Also print every per-step term.
    #[arg(long)]
    pub per_step: bool,
}

#[derive(Debug, Args)]
pub struct TradeoffArgs {
    #[arg(long, default_value = "harmonic")]
    pub family: ScheduleFamily,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_u: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_p: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long = "K")]
    pub steps: u64,
    #[arg(long, default_value_t = 0.01)]
    pub c_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub c_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub phi_min: f64,
    #[arg(long, default_value_t = 0.99)]
    pub phi_max: f64,
    /// Grid points per axis (geometric).
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Write the geometric objective surface as CSV.
    #[arg(long)]
    pub surface: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long = "K")]
    pub steps: u64,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Node whose secret is perturbed.
    #[arg(long, default_value_t = 1)]
    pub node: u32,
    /// Traces per secret vector.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 10_000)]
    pub min_count: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allowed excess of the observed log ratio over the budget.
    #[arg(long, default_value_t = 0.15)]
    pub slack: f64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Ring size for the circulant check; all of 3..=16 when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub trace_instances: u32,
    #[arg(long, default_value_t = 100_000)]
    pub trace_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parse `args` (program name first), run, and return the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn wr(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(Error::from)
}

/// Run one subcommand, writing its report to `out`.
pub fn execute(command: &Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Simulate(a) => simulate(a, out),
        Command::Bounds(a) => {
            let agg = ScheduleAggregates::uniform(a.schedule.schedule()?);
            wr(out, format!("family = {}", agg.family))?;
            wr(out, format!("n = {}", a.n))?;
            wr(out, format!("utility_bound = {}", utility_bound(&agg, a.n)?))?;
            wr(out, format!("variance_bound = {}", variance_bound(&agg, a.n)?))?;
            Ok(0)
        }
        Command::Budget(a) => budget(a, out),
        Command::Tradeoff(a) => tradeoff(a, out),
        Command::Audit(a) => audit(a, out),
        Command::Oracle(a) => oracle(a, out),
    }
}

fn budget(a: &BudgetArgs, out: &mut dyn Write) -> Result<i32> {
    if a.distribution != NoiseDistribution::Laplace {
        return Err(Error::NonLaplace(format!(
            "the budget is only guaranteed for Laplace noise, not {}",
            a.distribution
        )));
    }
    let schedule = a.schedule.schedule()?;
    let agg = ScheduleAggregates::uniform(schedule);
    let b = epsilon_total(&agg, a.delta, a.steps)?;
    wr(out, format!("epsilon = {}", b.total()))?;
    wr(out, format!("ln_epsilon = {}", b.ln_total))?;
    wr(out, format!("composition_gap = {}", b.composition_gap()))?;
    if schedule.diverges_at_zero() {
        let shifted = epsilon_total_with_offset(&agg, a.delta, a.steps, 1)?;
        wr(out, format!("epsilon_realized = {}", shifted.total()))?;
    }
    if a.per_step {
        for (k, e) in b.per_step().enumerate() {
            wr(out, format!("epsilon_{k} = {e}"))?;
        }
    }
    Ok(0)
}

fn tradeoff(a: &TradeoffArgs, out: &mut dyn Write) -> Result<i32> {
    let p = TradeoffProblem {
        gamma_u: a.gamma_u,
        gamma_a: a.gamma_a,
        gamma_p: a.gamma_p,
        n: a.n,
        delta: a.delta,
        steps: a.steps,
        family: a.family,
    };
    match a.family {
        ScheduleFamily::Harmonic => {
            let s = solve_harmonic(&p)?;
            wr(out, format!("c_star = {}", s.c_star))?;
            wr(out, format!("d_star = {}", s.d_star))?;
            wr(out, format!("objective = {}", s.objective))?;
            wr(out, format!("residual = {}", s.residual))?;
            wr(out, format!("kkt_multiplier = {}", s.kkt_multiplier))?;
            wr(out, format!("kkt_residuals = {} {}", s.kkt_residuals[0], s.kkt_residuals[1]))?;
            wr(out, format!(
                "engine_feasible = c {} d {} objective {}",
                s.engine_feasible.c, s.engine_feasible.d, s.engine_feasible.objective
            ))?;
        }
        ScheduleFamily::Geometric => {
            let grid = GeometricGrid {
                c_min: a.c_min,
                c_max: a.c_max,
                c_points: a.points,
                phi_min: a.phi_min,
                phi_max: a.phi_max,
                phi_points: a.points,
            };
            let res = explore_geometric(&p, &grid)?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            wr(out, format!("best_c = {}", res.best.c))?;
            wr(out, format!("best_phi = {}", res.best.phi))?;
            wr(out, format!("objective = {}", res.best.objective))?;
            if let Some(path) = &a.surface {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(["c", "phi", "objective"])?;
                for g in &res.surface {
                    w.write_record([g.c.to_string(), g.phi.to_string(), g.objective.to_string()])?;
                }
                w.flush()?;
            }
        }
    }
    Ok(0)
}

fn audit(a: &AuditArgs, out: &mut dyn Write) -> Result<i32> {
    let secrets = (1..=a.n).map(|i| i as f64).collect();
    let config = ProtocolConfig::uniform(secrets, a.schedule.schedule()?, NoiseDistribution::Laplace, a.steps, a.seed);
    let opts = AuditOptions {
        node: NodeId(a.node),
        samples: a.samples,
        min_count: a.min_count,
        ..AuditOptions::default()
    };
    let res = dp_audit_with(&config, a.delta, a.steps, &opts)?;
    wr(out, format!("epsilon = {}", res.epsilon))?;
    wr(out, format!("observed = {}", res.observed))?;
    wr(out, format!("tolerance = {}", res.tolerance))?;
    for s in &res.sensitivity {
        let ratio = s.max_log_ratio.map_or("none".to_string(), |r| r.to_string());
        wr(out, format!("width_x{} = bins {} max {}", s.multiplier, s.bins_used, ratio))?;
    }
    let rec = CheckRecord::at_most("dp_audit", res.observed, res.epsilon, a.slack);
    wr(out, &rec)?;
    Ok(if rec.passed() { 0 } else { EXIT_CHECK_FAILED })
}

fn oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<i32> {
    let sizes: Vec<usize> = a.n.map_or((3..=16).collect(), |n| vec![n]);
    let mut ok = true;
    for n in sizes {
        let rep = circulant_oracle(n)?;
        let worst = rep.eigen_error.max(rep.eigen_sum_error).max(rep.reconstruction_error);
        let rec = CheckRecord::new(
            format!("circulant_n{n}"),
            worst,
            rep.spectral_tolerance(),
            Verdict::from_bool(rep.passed()),
        );
        ok &= rec.passed();
        wr(out, &rec)?;
    }
    let src = NoiseSource::new(a.seed);
    let reports: Vec<Result<bool>> = (0..a.trace_instances)
        .into_par_iter()
        .map(|i| {
            let m = 1 + (i as usize % 5);
            let n = 1 + (i as usize / 5 % 5);
            let (c, v) = random_instance(&src, i, m, n);
            Ok(trace_bound_check(&c, &v, a.trace_samples, a.seed, i)?.holds)
        })
        .collect();
    let mut held = 0u32;
    for r in reports {
        held += u32::from(r?);
    }
    let rec = CheckRecord::new(
        "trace_bound_instances_held",
        f64::from(held),
        f64::from(a.trace_instances),
        Verdict::from_bool(held == a.trace_instances),
    );
    ok &= rec.passed();
    wr(out, &rec)?;
    Ok(if ok { 0 } else { EXIT_CHECK_FAILED })
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let mut scenario = Scenario::load(&a.config)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    if let Some(trials) = a.trials {
        scenario.trials = trials;
    }
    let root = match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => a.out.clone(),
    };
    let report = run_scenario(&scenario, &root)?;
    wr(out, format!("wrote {}", report.dir.display()))?;
    for c in &report.checks {
        wr(out, c)?;
    }
    Ok(if report.passed() { 0 } else { EXIT_CHECK_FAILED })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub checks: Vec<CheckRecord>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckRecord::passed)
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
    summary: Vec<String>,
    checks: Vec<CheckRecord>,
}

impl Artifacts {
    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.summary.push(format!("{key} = {value}"));
    }

    fn write_summary(&self, status: &str) -> Result<()> {
        let mut text = format!("status = {status}\n");
        for line in &self.summary {
            text.push_str(line);
            text.push('\n');
        }
        for c in &self.checks {
            text.push_str(&c.to_string());
            text.push('\n');
        }
        fs::write(self.dir.join("summary.txt"), text)?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Run `scenario` and write its artifacts under `root/<name>/`. If the run
/// fails midway, whatever was written stays and summary.txt says
/// `status = partial`.
pub fn run_scenario(scenario: &Scenario, root: &Path) -> Result<ScenarioReport> {
    let config = scenario.config()?;
    if scenario.wants(Output::Budget) && config.distribution != NoiseDistribution::Laplace {
        return Err(Error::NonLaplace(format!(
            "scenario '{}' asks for a privacy budget but uses {} noise; the budget only holds for Laplace",
            scenario.name, config.distribution
        )));
    }
    let dir = root.join(&scenario.name);
    fs::create_dir_all(&dir)?;
    let mut art = Artifacts { dir: dir.clone(), files: Vec::new(), summary: Vec::new(), checks: Vec::new() };
    art.note("scenario", &scenario.name);
    art.note("seed", scenario.seed);
    art.note("trials", scenario.trials);
    let result = match scenario.protocol {
        Protocol::Synchronous => synchronous(scenario, &config, &mut art),
        Protocol::Asynchronous { rate, horizon } => asynchronous(scenario, &config, rate, horizon, &mut art),
    };
    match result {
        Ok(()) => {
            art.write_summary("complete")?;
            art.files.push(dir.join("summary.txt"));
            Ok(ScenarioReport { dir, files: art.files, checks: art.checks })
        }
        Err(e) => {
            art.note("error", &e);
            let written: Vec<String> = art.files.iter().map(|p| p.display().to_string()).collect();
            art.note("written", written.join(", "));
            art.write_summary("partial")?;
            Err(e)
        }
    }
}

fn phase_ends(phases: &[Phase], steps: u64) -> Vec<u64> {
    (0..phases.len())
        .map(|p| phases.get(p + 1).map_or(steps, |next| next.first_state - 1))
        .collect()
}

fn synchronous(scenario: &Scenario, config: &ProtocolConfig, art: &mut Artifacts) -> Result<()> {
    let src = NoiseSource::new(config.seed);
    let (run, series) = track_si(config, &src, 0)?;
    let phases = run.phases().to_vec();
    let ends = phase_ends(&phases, config.steps);

    let drift = conservation_drift(&series, &phases, &ends);
    art.checks.push(CheckRecord::at_most("sum_conservation", drift, 1e-10, 0.0));
    for (p, ph) in phases.iter().enumerate() {
        art.note(&format!("phase{p}"), format!(
            "steps {}..={} members {} target {}",
            ph.first_state, ends[p], ph.members, ph.target
        ));
    }

    if scenario.wants(Output::Trajectories) {
        let rows = series.points.iter().map(|pt| {
            vec![
                pt.k.to_string(),
                pt.estimate.map_or_else(String::new, |e| e.k_start.to_string()),
                pt.node.0.to_string(),
                pt.x.to_string(),
                opt(pt.estimate.map(|e| e.value)),
                opt(pt.abs_error()),
            ]
        });
        art.csv("trajectories", &["k", "k_start", "node", "x", "y", "abs_error"], rows)?;
    }

    let aggregates = if scenario.trials >= 2 {
        Some(aggregate_trials(config, scenario.trials)?)
    } else {
        None
    };
    if scenario.wants(Output::Errors) {
        let rows: Vec<Vec<String>> = match &aggregates {
            Some(agg) => agg
                .points
                .iter()
                .filter(|p| p.trials > 0)
                .map(|p| {
                    vec![
                        p.k.to_string(),
                        p.target.to_string(),
                        p.trials.to_string(),
                        p.mean_abs_error.to_string(),
                        p.mean_abs_error_se.to_string(),
                        p.sum_variance.to_string(),
                        p.sum_variance_se.to_string(),
                    ]
                })
                .collect(),
            None => (0..=config.steps)
                .filter_map(|k| {
                    let e = series.total_abs_error(k)?;
                    let target = series.points.iter().find(|p| p.k == k)?.target;
                    Some(vec![k.to_string(), target.to_string(), "1".into(), e.to_string(), String::new(), String::new(), String::new()])
                })
                .collect(),
        };
        art.csv(
            "errors",
            &["k", "target", "trials", "mean_abs_error", "mean_abs_error_se", "sum_variance", "sum_variance_se"],
            rows,
        )?;
    }

    let agg = ScheduleAggregates::effective(config)?;
    let mut bound_rows = Vec::new();
    for (p, ph) in phases.iter().enumerate() {
        let ub = utility_bound(&agg, ph.members)?;
        let vb = variance_bound(&agg, ph.members)?;
        bound_rows.push(vec![
            p.to_string(),
            ph.first_state.to_string(),
            ph.members.to_string(),
            ph.target.to_string(),
            ub.to_string(),
            vb.to_string(),
        ]);
        let Some(stats) = &aggregates else { continue };
        let first_full = ph.first_state + ph.members as u64 - 1;
        let (Some(early), Some(late)) = (stats.at(first_full), stats.at(ends[p])) else { continue };
        if ends[p] <= first_full {
            continue;
        }
        art.note(&format!("phase{p}_late_mean_abs_error"), format!("{} +- {}", late.mean_abs_error, late.mean_abs_error_se));
        art.note(&format!("phase{p}_late_sum_variance"), format!("{} +- {}", late.sum_variance, late.sum_variance_se));
        art.checks.push(CheckRecord::at_most(format!("utility_phase{p}"), late.mean_abs_error, ub, 0.0));
        art.checks.push(CheckRecord::at_most(
            format!("variance_phase{p}"),
            late.sum_variance,
            vb,
            3.0 * late.sum_variance_se,
        ));
        art.checks.push(CheckRecord::new(
            format!("decay_phase{p}"),
            late.mean_abs_error,
            early.mean_abs_error,
            Verdict::from_bool(late.mean_abs_error < early.mean_abs_error),
        ));
    }
    if scenario.wants(Output::Bounds) {
        art.csv("bounds", &["phase", "first_state", "members", "target", "utility_bound", "variance_bound"], bound_rows)?;
    }
    budget_and_tradeoff(scenario, config, art)
}

fn conservation_drift(series: &EstimatorSeries, phases: &[Phase], ends: &[u64]) -> f64 {
    let mut worst = 0.0f64;
    let mut i = 0;
    let pts = &series.points;
    while i < pts.len() {
        let k = pts[i].k;
        let mut sum = CompensatedSum::default();
        let mut j = i;
        while j < pts.len() && pts[j].k == k {
            sum.add(pts[j].x);
            j += 1;
        }
        let p = ends.iter().position(|&e| k <= e).unwrap_or(phases.len() - 1);
        let target = phases[p].target;
        worst = worst.max((sum.value() - target).abs() / target.abs().max(1.0));
        i = j;
    }
    worst
}

fn asynchronous(
    scenario: &Scenario,
    config: &ProtocolConfig,
    rate: f64,
    horizon: f64,
    art: &mut Artifacts,
) -> Result<()> {
    let src = NoiseSource::new(config.seed);
    let trials = scenario.trials.max(1);
    art.note("rate", rate);
    art.note("horizon", horizon);
    let results: Vec<Result<(f64, f64, f64, u64)>> = (0..trials)
        .into_par_iter()
        .with_min_len(16)
        .map(|t| {
            let (run, _) = run_ai_trial(config, &src, t, rate, horizon)?;
            let target = run.current_phase().target;
            let ests = full_estimates(&run);
            let err: f64 = ests.iter().map(|e| (e.value - target).abs()).sum();
            let mean_y = if ests.is_empty() { f64::NAN } else { ests.iter().map(|e| e.value).sum::<f64>() / ests.len() as f64 };
            let drift = (run.state_sum() - target).abs() / target.abs().max(1.0);
            Ok((err, mean_y, drift, run.k()))
        })
        .collect();
    let mut err = CompensatedSum::default();
    let mut err_sq = CompensatedSum::default();
    let mut ys = CompensatedSum::default();
    let mut ys_sq = CompensatedSum::default();
    let mut worst = 0.0f64;
    let mut ticks = CompensatedSum::default();
    for r in results {
        let (e, y, d, k) = r?;
        err.add(e);
        err_sq.add(e * e);
        ys.add(y);
        ys_sq.add(y * y);
        worst = worst.max(d);
        ticks.add(k as f64);
    }
    let t = f64::from(trials);
    let se = |s: &CompensatedSum, s2: &CompensatedSum| {
        if trials < 2 {
            f64::NAN
        } else {
            (((s2.value() - s.value() * s.value() / t) / (t - 1.0)).max(0.0) / t).sqrt()
        }
    };
    art.checks.push(CheckRecord::at_most("sum_conservation", worst, 1e-10, 0.0));

    let (run, _) = run_ai_trial(config, &src, 0, rate, horizon)?;
    let target = run.current_phase().target;
    if scenario.wants(Output::Trajectories) {
        let ests = full_estimates(&run);
        let rows = run.states().into_iter().map(|(node, x)| {
            let est = ests.iter().find(|e| e.node == node);
            vec![
                run.k().to_string(),
                est.map_or_else(String::new, |e| e.k_start.to_string()),
                node.0.to_string(),
                x.to_string(),
                opt(est.map(|e| e.value)),
                opt(est.map(|e| (e.value - target).abs())),
            ]
        });
        art.csv("trajectories", &["k", "k_start", "node", "x", "y", "abs_error"], rows)?;
    }
    if scenario.wants(Output::Errors) {
        art.csv(
            "errors",
            &["horizon", "target", "trials", "mean_ticks", "mean_abs_error", "mean_abs_error_se", "mean_window_sum", "mean_window_sum_se"],
            [vec![
                horizon.to_string(),
                target.to_string(),
                trials.to_string(),
                (ticks.value() / t).to_string(),
                (err.value() / t).to_string(),
                se(&err, &err_sq).to_string(),
                (ys.value() / t).to_string(),
                se(&ys, &ys_sq).to_string(),
            ]],
        )?;
    }
    budget_and_tradeoff(scenario, config, art)
}

fn budget_and_tradeoff(scenario: &Scenario, config: &ProtocolConfig, art: &mut Artifacts) -> Result<()> {
    if scenario.wants(Output::Budget) {
        let steps = config.steps.max(1);
        let b = run_budgets(&ProtocolConfig { steps, ..config.clone() }, scenario.delta)?;
        art.note("delta", scenario.delta);
        art.note("epsilon", b.unshifted.total());
        if b.shifted() {
            art.note("epsilon_realized", b.realized.total());
        }
        let rows = b
            .unshifted
            .per_step()
            .zip(b.realized.per_step())
            .enumerate()
            .map(|(k, (e, r))| vec![k.to_string(), e.to_string(), r.to_string()]);
        art.csv("budget", &["k", "epsilon_k", "epsilon_k_realized"], rows)?;
    }
    if scenario.wants(Output::Tradeoff) {
        let (gu, ga, gp) = scenario.balancers;
        let steps = config.steps.max(1);
        let p = TradeoffProblem {
            gamma_u: gu,
            gamma_a: ga,
            gamma_p: gp,
            n: scenario.nodes,
            delta: scenario.delta,
            steps,
            family: scenario.schedule.family(),
        };
        match p.family {
            ScheduleFamily::Harmonic => {
                let s = solve_harmonic(&p)?;
                art.note("c_star", s.c_star);
                art.csv(
                    "tradeoff",
                    &["c_star", "d_star", "objective", "residual", "kkt_multiplier", "feasible_d", "feasible_objective"],
                    [vec![
                        s.c_star.to_string(),
                        s.d_star.to_string(),
                        s.objective.to_string(),
                        s.residual.to_string(),
                        s.kkt_multiplier.to_string(),
                        s.engine_feasible.d.to_string(),
                        s.engine_feasible.objective.to_string(),
                    ]],
                )?;
            }
            ScheduleFamily::Geometric => {
                let grid = GeometricGrid { c_min: 0.01, c_max: 10.0, c_points: 100, phi_min: 0.01, phi_max: 0.99, phi_points: 100 };
                let res = explore_geometric(&p, &grid)?;
                art.note("tradeoff_best", format!("c {} phi {} objective {}", res.best.c, res.best.phi, res.best.objective));
                let rows = res.surface.iter().map(|g| vec![g.c.to_string(), g.phi.to_string(), g.objective.to_string()]);
                art.csv("tradeoff", &["c", "phi", "objective"], rows)?;
            }
        }
    }
    Ok(())
}
