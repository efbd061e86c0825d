//! Planner and controller benchmark over generated scenarios.
//!
//! Deterministic outputs (CSV rows and summaries) never contain wall-clock
//! data; timings are collected separately.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use bubblecdf_core::barrier::CdfModel;
use bubblecdf_core::control::Clock;
use bubblecdf_core::math;
use bubblecdf_core::rng;
use bubblecdf_core::sim::{self, Plan, PlanMode, Scenario, SimParams};

use crate::config::RunConfig;
use crate::formats;

/// Wall clock since construction.
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Seed of scenario `i` in a benchmark started from `seed`.
pub fn scenario_seed(seed: u64, i: usize) -> u64 {
    rng::derive_seed(seed, i as u64)
}

pub fn generate_scenarios(cfg: &RunConfig) -> Result<Vec<Scenario>> {
    let seeds: Vec<u64> = (0..cfg.bench.n_scenarios).map(|i| scenario_seed(cfg.seed, i)).collect();
    let out: Result<Vec<Scenario>, _> = seeds
        .par_iter()
        .map(|&s| sim::generate_scenario(&cfg.arm, &cfg.sensor, &cfg.generator, s))
        .collect();
    Ok(out?)
}

/// Plans on the frozen scene and records the wall time in the plan stats.
pub fn timed_plan(scenario: &Scenario, model: &dyn CdfModel, mode: PlanMode, params: &SimParams) -> Result<Plan, bubblecdf_core::Error> {
    let t = Instant::now();
    let mut plan = sim::plan_scenario(&scenario.frozen(), model, mode, params)?;
    plan.stats.planning_time_s = t.elapsed().as_secs_f64();
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannerRow {
    pub scenario: usize,
    pub seed: u64,
    pub planner: String,
    pub success: bool,
    pub collision_checks: usize,
    pub bubbles_created: usize,
    pub path_length: f64,
    pub trajectory_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannerSummary {
    pub planner: String,
    pub n: usize,
    pub success_rate: f64,
    pub checks_mean: f64,
    pub checks_std: f64,
    pub path_length_mean: f64,
    pub path_length_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlRow {
    pub scenario: usize,
    pub seed: u64,
    pub variant: String,
    pub controller: String,
    pub success: bool,
    pub failure_cause: String,
    pub frechet_error: f64,
    pub min_clearance: f64,
    pub final_goal_error: f64,
    pub steps: usize,
    pub infeasible_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSummary {
    pub variant: String,
    pub controller: String,
    pub n: usize,
    pub success_rate: f64,
    /// Over successful episodes; failed runs end early and their Fréchet
    /// distance is dominated by the unreached remainder of the plan.
    pub frechet_mean: f64,
    pub frechet_std: f64,
    pub collisions: usize,
    pub timeouts: usize,
    pub stalls: usize,
    pub planner_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannerTiming {
    pub planner: String,
    pub mean_s: f64,
    pub std_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerTiming {
    pub variant: String,
    pub controller: String,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Timings {
    pub planners: Vec<PlannerTiming>,
    pub controllers: Vec<ControllerTiming>,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub planner_rows: Vec<PlannerRow>,
    pub planner_summary: Vec<PlannerSummary>,
    pub control_rows: Vec<ControlRow>,
    pub control_summary: Vec<ControlSummary>,
    pub timings: Timings,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        math::mean_std(xs)
    }
}

pub fn run_planners(cfg: &RunConfig, scenarios: &[Scenario], model: &dyn CdfModel, report: &mut BenchReport) {
    let params = cfg.sim_params(false);
    for &mode in &cfg.bench.planners {
        let results: Vec<_> = scenarios.par_iter().map(|s| timed_plan(s, model, mode, &params)).collect();
        let mut checks = Vec::new();
        let mut lens = Vec::new();
        let mut times = Vec::new();
        for (i, (s, r)) in scenarios.iter().zip(&results).enumerate() {
            let row = match r {
                Ok(p) => {
                    checks.push(p.stats.collision_checks as f64);
                    lens.push(p.stats.path_length);
                    times.push(p.stats.planning_time_s);
                    PlannerRow {
                        scenario: i,
                        seed: s.seed,
                        planner: mode.name().into(),
                        success: true,
                        collision_checks: p.stats.collision_checks,
                        bubbles_created: p.stats.bubbles_created,
                        path_length: p.stats.path_length,
                        trajectory_length: p.trajectory.length(50),
                    }
                }
                Err(e) => {
                    log::warn!("scenario {i}: {} planner failed: {e}", mode.name());
                    PlannerRow {
                        scenario: i,
                        seed: s.seed,
                        planner: mode.name().into(),
                        success: false,
                        collision_checks: 0,
                        bubbles_created: 0,
                        path_length: f64::NAN,
                        trajectory_length: f64::NAN,
                    }
                }
            };
            report.planner_rows.push(row);
        }
        let (cm, cs) = mean_std(&checks);
        let (lm, ls) = mean_std(&lens);
        let (tm, ts) = mean_std(&times);
        report.planner_summary.push(PlannerSummary {
            planner: mode.name().into(),
            n: scenarios.len(),
            success_rate: checks.len() as f64 / scenarios.len().max(1) as f64,
            checks_mean: cm,
            checks_std: cs,
            path_length_mean: lm,
            path_length_std: ls,
        });
        report.timings.planners.push(PlannerTiming { planner: mode.name().into(), mean_s: tm, std_s: ts });
    }
}

pub fn run_controllers(cfg: &RunConfig, scenarios: &[Scenario], model: &dyn CdfModel, oracle: bool, report: &mut BenchReport) -> Result<()> {
    let mut params = cfg.sim_params(oracle);
    params.keep_log = false;
    let plans: Vec<Option<Plan>> = scenarios
        .par_iter()
        .map(|s| timed_plan(s, model, cfg.bench.control_planner, &params).ok())
        .collect();
    let mut variants = Vec::new();
    if cfg.bench.run_static {
        variants.push(false);
    }
    if cfg.bench.run_dynamic {
        variants.push(true);
    }
    for dynamic in variants {
        let variant = if dynamic { "dynamic" } else { "static" };
        for &mode in &cfg.bench.controllers {
            let t = Instant::now();
            let results: Vec<Result<Option<sim::SimResult>, bubblecdf_core::Error>> = scenarios
                .par_iter()
                .zip(&plans)
                .map(|(s, plan)| {
                    let Some(plan) = plan else { return Ok(None) };
                    let scene = if dynamic { s.clone() } else { s.frozen() };
                    sim::execute(&scene, plan, model, mode, &params, &StdClock::new()).map(Some)
                })
                .collect();
            let mut summary = ControlSummary {
                variant: variant.into(),
                controller: mode.name().into(),
                n: scenarios.len(),
                success_rate: 0.0,
                frechet_mean: f64::NAN,
                frechet_std: f64::NAN,
                collisions: 0,
                timeouts: 0,
                stalls: 0,
                planner_failures: 0,
            };
            let mut frechet = Vec::new();
            let mut successes = 0;
            for (i, (s, r)) in scenarios.iter().zip(results).enumerate() {
                let row = match r? {
                    Some(res) => {
                        if res.success {
                            successes += 1;
                            frechet.push(res.frechet_error);
                        }
                        match res.failure_cause {
                            Some(sim::FailureCause::Collision) => summary.collisions += 1,
                            Some(sim::FailureCause::Timeout) => summary.timeouts += 1,
                            Some(sim::FailureCause::Stall) => summary.stalls += 1,
                            _ => {}
                        }
                        ControlRow {
                            scenario: i,
                            seed: s.seed,
                            variant: variant.into(),
                            controller: mode.name().into(),
                            success: res.success,
                            failure_cause: res.failure_cause.map_or("", |c| c.name()).into(),
                            frechet_error: res.frechet_error,
                            min_clearance: res.min_clearance,
                            final_goal_error: res.final_goal_error,
                            steps: res.steps,
                            infeasible_steps: res.infeasible_steps,
                        }
                    }
                    None => {
                        summary.planner_failures += 1;
                        ControlRow {
                            scenario: i,
                            seed: s.seed,
                            variant: variant.into(),
                            controller: mode.name().into(),
                            success: false,
                            failure_cause: "planner".into(),
                            frechet_error: f64::NAN,
                            min_clearance: f64::NAN,
                            final_goal_error: f64::NAN,
                            steps: 0,
                            infeasible_steps: 0,
                        }
                    }
                };
                report.control_rows.push(row);
            }
            let attempted = scenarios.len() - summary.planner_failures;
            summary.success_rate = successes as f64 / attempted.max(1) as f64;
            (summary.frechet_mean, summary.frechet_std) = mean_std(&frechet);
            report.control_summary.push(summary);
            report.timings.controllers.push(ControllerTiming {
                variant: variant.into(),
                controller: mode.name().into(),
                wall_s: t.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(())
}

/// Full benchmark: planners, then controllers on the configured planner's
/// trajectories.
pub fn run_bench(cfg: &RunConfig, model: &dyn CdfModel, oracle: bool) -> Result<BenchReport> {
    let t = Instant::now();
    let scenarios = generate_scenarios(cfg)?;
    let mut report = BenchReport::default();
    run_planners(cfg, &scenarios, model, &mut report);
    if !cfg.bench.controllers.is_empty() {
        run_controllers(cfg, &scenarios, model, oracle, &mut report)?;
    }
    report.timings.total_s = t.elapsed().as_secs_f64();
    Ok(report)
}

/// Writes the deterministic CSVs and the separate timing file.
pub fn write_report(out: &Path, report: &BenchReport) -> Result<()> {
    formats::write_csv(&out.join("planner_results.csv"), &report.planner_rows)?;
    formats::write_csv(&out.join("planner_summary.csv"), &report.planner_summary)?;
    formats::write_csv(&out.join("controller_results.csv"), &report.control_rows)?;
    formats::write_csv(&out.join("controller_summary.csv"), &report.control_summary)?;
    formats::save_pretty_json(&out.join("timings.json"), &report.timings)
}
