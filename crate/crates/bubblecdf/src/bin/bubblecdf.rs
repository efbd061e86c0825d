use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};

use bubblecdf::config::{BenchParams, RunConfig};
use bubblecdf::formats::{self, ModelKind};
use bubblecdf::{bench, data, episode};

#[derive(Parser)]
#[command(name = "bubblecdf", version, about = "Bubble planning and DR-CBF control with configuration-space distance barriers")]
struct Cli {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the exact databases as the barrier instead of trained networks.
    #[arg(long, global = true)]
    oracle: bool,
    /// Planner for `plan` (bubble|rrt), controller for `simulate`
    /// (pd|cbf|dr_cbf), stage for `bench` (planners|controllers|all).
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Env,
    Sc,
}

#[derive(Subcommand)]
enum Command {
    /// Build the contact and self-collision databases.
    GenData,
    /// Train the environment or self-collision network.
    Train { target: Target },
    /// Plan on one scenario and write the plan and plot data.
    Plan,
    /// Plan and execute one scenario closed loop.
    Simulate {
        /// Move the obstacles during execution.
        #[arg(long)]
        dynamic: bool,
    },
    /// Planner and controller benchmark over generated scenarios.
    Bench,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.oracle |= cli.oracle;
    std::fs::create_dir_all(&cli.out)?;
    let mode = cli.mode.as_deref();
    match cli.command {
        Command::GenData => {
            let (db, sc) = data::gen_data(&cfg)?;
            println!(
                "contact database: {} entries -> {}\nself-collision database: {} entries -> {}",
                db.n_entries(),
                cfg.paths.contact_db.display(),
                sc.len(),
                cfg.paths.sc_db.display()
            );
        }
        Command::Train { target } => {
            let (db, sc) = data::load_or_build_dbs(&cfg)?;
            let kind = match target {
                Target::Env => ModelKind::Env,
                Target::Sc => ModelKind::Sc,
            };
            let name = match kind {
                ModelKind::Env => "env",
                ModelKind::Sc => "sc",
            };
            let outcome = data::train(&cfg, kind, &db, &sc)?;
            formats::write_loss_curve(&cli.out.join(format!("loss_{name}.csv")), &outcome.curve)?;
            formats::save_pretty_json(&cli.out.join(format!("train_{name}.json")), &outcome.summary)?;
            let s = &outcome.summary;
            println!(
                "{name}: held-out MAE {:.4} rad, Eikonal {:.4}, {:.0} s -> {}",
                s.held_out_mae,
                s.eikonal_stat,
                s.train_seconds,
                s.weights.display()
            );
        }
        Command::Plan => {
            if let Some(m) = mode {
                cfg.plan_mode = m.parse()?;
            }
            let models = data::load_models(&cfg)?;
            let plan = episode::run_plan(&cfg, models.as_dyn(), &cli.out)?;
            println!(
                "{}: {} collision checks, path length {:.3} rad, {:.3} s",
                plan.mode.name(),
                plan.stats.collision_checks,
                plan.stats.path_length,
                plan.stats.planning_time_s
            );
        }
        Command::Simulate { dynamic } => {
            if let Some(m) = mode {
                cfg.control_mode = m.parse()?;
            }
            cfg.dynamic |= dynamic;
            let models = data::load_models(&cfg)?;
            let r = episode::run_simulate(&cfg, models.as_dyn(), models.is_oracle(), &cli.out)?;
            let cause = r.failure_cause.map_or("none", |c| c.name());
            println!("success {} (failure: {cause}), Fréchet {:.3} rad, {} steps", r.success, r.frechet_error, r.steps);
        }
        Command::Bench => {
            match mode {
                None | Some("all") => {}
                Some("planners") => cfg.bench.controllers.clear(),
                Some("controllers") => cfg.bench.planners.clear(),
                Some(other) => bail!("unknown bench mode {other:?} (planners|controllers|all)"),
            }
            let models = data::load_models(&cfg)?;
            let report = bench::run_bench(&cfg, models.as_dyn(), models.is_oracle())?;
            bench::write_report(&cli.out, &report)?;
            print_summary(&cfg.bench, &report);
        }
    }
    Ok(())
}

fn print_summary(params: &BenchParams, report: &bench::BenchReport) {
    for s in &report.planner_summary {
        println!(
            "{:<7} success {:.3}  checks {:.1} ± {:.1}  path {:.3} ± {:.3}",
            s.planner, s.success_rate, s.checks_mean, s.checks_std, s.path_length_mean, s.path_length_std
        );
    }
    if !params.controllers.is_empty() {
        for s in &report.control_summary {
            println!(
                "{:<8} {:<7} success {:.3}  Fréchet {:.3} ± {:.3}",
                s.variant, s.controller, s.success_rate, s.frechet_mean, s.frechet_std
            );
        }
    }
}
