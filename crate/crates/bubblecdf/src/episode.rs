//! Single-scenario `plan` and `simulate` commands and their output files.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use bubblecdf_core::barrier::CdfModel;
use bubblecdf_core::math::Vec2;
use bubblecdf_core::sim::{self, Plan, Scenario, SimResult};

use crate::bench::{self, StdClock};
use crate::config::RunConfig;
use crate::formats;

/// The configured scenario, or one generated from the run seed.
pub fn scenario(cfg: &RunConfig) -> Result<Scenario> {
    let s = match &cfg.scenario {
        Some(s) => s.clone(),
        None => sim::generate_scenario(&cfg.arm, &cfg.sensor, &cfg.generator, bench::scenario_seed(cfg.seed, 0))
            .context("generating scenario")?,
    };
    Ok(if cfg.dynamic { s } else { s.frozen() })
}

#[derive(Debug, Serialize)]
struct PlotObstacle {
    center: Vec2,
    radius: f64,
}

#[derive(Debug, Serialize)]
struct PlotBubble {
    center: Vec<f64>,
    radius: f64,
    selected: bool,
}

/// Everything needed to draw a plan or an episode without this crate.
#[derive(Debug, Serialize)]
struct PlotData {
    link_lengths: Vec<f64>,
    obstacles: Vec<PlotObstacle>,
    q0: Vec<f64>,
    goal: Vec2,
    goal_configs: Vec<Vec<f64>>,
    bubbles: Vec<PlotBubble>,
    waypoints: Vec<Vec<f64>>,
    planned: Vec<Vec<f64>>,
    executed: Vec<Vec<f64>>,
    obstacle_traces: Vec<Vec<Vec2>>,
}

fn plot_data(s: &Scenario, plan: &Plan, result: Option<&SimResult>) -> Result<PlotData> {
    let bubbles = plan
        .graph
        .as_ref()
        .map(|g| {
            g.vertices
                .iter()
                .enumerate()
                .map(|(i, b)| PlotBubble { center: b.center.to_vec(), radius: b.radius, selected: plan.selected.contains(&i) })
                .collect()
        })
        .unwrap_or_default();
    Ok(PlotData {
        link_lengths: s.arm.link_lengths.clone(),
        obstacles: s.obstacles.iter().map(|o| PlotObstacle { center: o.center, radius: o.radius }).collect(),
        q0: s.q0.to_vec(),
        goal: s.goal,
        goal_configs: sim::goal_configs(s)?.iter().map(|q| q.to_vec()).collect(),
        bubbles,
        waypoints: plan.waypoints.iter().map(|q| q.to_vec()).collect(),
        planned: plan.trajectory.sample(50),
        executed: result.map(|r| r.executed.clone()).unwrap_or_default(),
        obstacle_traces: result.map(|r| r.obstacle_traces.clone()).unwrap_or_default(),
    })
}

#[derive(Debug, Serialize)]
struct PlanRow {
    seed: u64,
    planner: String,
    collision_checks: usize,
    bubbles_created: usize,
    bubbles_attempted: usize,
    path_length: f64,
    trajectory_length: f64,
    goal_index: usize,
}

pub fn run_plan(cfg: &RunConfig, model: &dyn CdfModel, out: &Path) -> Result<Plan> {
    let s = scenario(cfg)?;
    let params = cfg.sim_params(false);
    let plan = bench::timed_plan(&s, model, cfg.plan_mode, &params)?;
    formats::save_pretty_json(&out.join("plan.json"), &plan)?;
    formats::save_pretty_json(&out.join("plot.json"), &plot_data(&s, &plan, None)?)?;
    let row = PlanRow {
        seed: s.seed,
        planner: plan.mode.name().into(),
        collision_checks: plan.stats.collision_checks,
        bubbles_created: plan.stats.bubbles_created,
        bubbles_attempted: plan.stats.bubbles_attempted,
        path_length: plan.stats.path_length,
        trajectory_length: plan.trajectory.length(50),
        goal_index: plan.goal_index,
    };
    formats::write_csv(&out.join("results.csv"), &[row])?;
    Ok(plan)
}

#[derive(Debug, Serialize)]
struct EpisodeRow {
    seed: u64,
    planner: String,
    controller: String,
    dynamic: bool,
    success: bool,
    failure_cause: String,
    frechet_error: f64,
    min_clearance: f64,
    final_goal_error: f64,
    duration: f64,
    steps: usize,
    infeasible_steps: usize,
}

fn write_step_log(path: &Path, m: usize, r: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..m).map(|j| format!("q{j}")));
    header.extend((0..m).map(|j| format!("u{j}")));
    header.extend(["h", "cbc", "s", "clearance", "filter_active", "infeasible", "solve_ms"].map(String::from));
    w.write_record(&header)?;
    for l in &r.log {
        let mut rec = vec![l.t.to_string()];
        rec.extend(l.q.iter().map(|v| v.to_string()));
        rec.extend(l.u.iter().map(|v| v.to_string()));
        rec.extend([l.h, l.cbc, l.s, l.clearance].map(|v| v.to_string()));
        rec.push(l.filter_active.to_string());
        rec.push(l.infeasible.to_string());
        rec.push(l.solve_ms.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_simulate(cfg: &RunConfig, model: &dyn CdfModel, oracle: bool, out: &Path) -> Result<SimResult> {
    let s = scenario(cfg)?;
    let params = cfg.sim_params(oracle);
    let (plan, result) = sim::run_episode(&s, cfg.plan_mode, cfg.control_mode, model, &params, &StdClock::new())?;
    let row = EpisodeRow {
        seed: s.seed,
        planner: cfg.plan_mode.name().into(),
        controller: cfg.control_mode.name().into(),
        dynamic: s.is_dynamic(),
        success: result.success,
        failure_cause: result.failure_cause.map_or("", |c| c.name()).into(),
        frechet_error: result.frechet_error,
        min_clearance: result.min_clearance,
        final_goal_error: result.final_goal_error,
        duration: result.duration,
        steps: result.steps,
        infeasible_steps: result.infeasible_steps,
    };
    formats::write_csv(&out.join("results.csv"), &[row])?;
    write_step_log(&out.join("steps.csv"), s.arm.dof(), &result)?;
    if let Some(plan) = &plan {
        formats::save_pretty_json(&out.join("plan.json"), plan)?;
        formats::save_pretty_json(&out.join("plot.json"), &plot_data(&s, plan, Some(&result))?)?;
    }
    Ok(result)
}
