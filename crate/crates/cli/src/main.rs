use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use poisson_sched::harness::config::rows;
use poisson_sched::harness::runner::write_gains;
use poisson_sched::harness::schedule::{sample_schedule, solve_phases, worst_case_periodic};
use poisson_sched::harness::{bounds_table, builtin, run_scenario, write_artifacts, ScenarioConfig, BUILTIN_NAMES};
use poisson_sched::rng::seeded_rng;

/// Optimal stochastic sensor scheduling and bound checks.
#[derive(Parser)]
#[command(name = "poisson-sched", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo replicate count.
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Simulated time span.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Output grid spacing.
    #[arg(long, global = true)]
    grid_dt: Option<f64>,
    /// Directory for written artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stationary policy of every phase and print it as JSON.
    Solve { scenario: String },
    /// Print the stationary distribution and sampling frequencies.
    Analyze { scenario: String },
    /// Draw one sampling schedule and print it as CSV.
    Simulate { scenario: String },
    /// Print the analytic bound table as CSV.
    Bounds { scenario: String },
    /// Run a full scenario and write its artifacts.
    Scenario { scenario: String },
    /// List the built-in scenario names.
    List,
}

/// A built-in name or a path to a JSON config, with CLI overrides applied.
fn load(source: &str, o: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = if BUILTIN_NAMES.contains(&source) {
        builtin(source)?
    } else {
        ScenarioConfig::from_path(Path::new(source)).with_context(|| format!("reading config `{source}`"))?
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(n) = o.replicates {
        cfg.replicates = n;
    }
    if let Some(h) = o.horizon {
        cfg.horizon = h;
    }
    if let Some(dt) = o.grid_dt {
        cfg.grid_dt = dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to `out_dir/name` when set, else to stdout.
fn emit(o: &Overrides, name: &str, body: &[u8]) -> Result<()> {
    match &o.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))?;
        }
        None => io::stdout().write_all(body)?,
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let o = &cli.overrides;
    match &cli.command {
        Command::List => {
            for name in BUILTIN_NAMES {
                println!("{name}");
            }
        }
        Command::Solve { scenario } => {
            let cfg = load(scenario, o)?;
            let plans = solve_phases(&cfg)?;
            let phases: Vec<_> = plans
                .iter()
                .map(|p| {
                    json!({
                        "start": p.start,
                        "end": p.end,
                        "active": p.active,
                        "k0": p.policy.k0.as_slice(),
                        "rho": p.policy.rho,
                        "gains": rows(&p.policy.gains),
                        "effective_rates": rows(&p.policy.eff_rates),
                        "residual": p.policy.residual,
                        "iterations": p.policy.iterations,
                        "used_continuation": p.policy.used_continuation,
                    })
                })
                .collect();
            let mut body = serde_json::to_vec_pretty(&json!({ "scenario": cfg.name, "phases": phases }))?;
            body.push(b'\n');
            emit(o, "policy.json", &body)?;
            if let Some(dir) = &o.out_dir {
                let mut csv = Vec::new();
                write_gains(&mut csv, &plans)?;
                fs::write(dir.join("policy_gains.csv"), csv)?;
            }
        }
        Command::Analyze { scenario } => {
            let cfg = load(scenario, o)?;
            let plans = solve_phases(&cfg)?;
            let phases: Vec<_> = plans
                .iter()
                .map(|p| {
                    json!({
                        "start": p.start,
                        "end": p.end,
                        "active": p.active,
                        "p_inf": p.report.p_inf,
                        "f": p.report.f,
                        "mean_gap": p.report.mean_gap,
                    })
                })
                .collect();
            let mut body = serde_json::to_vec_pretty(&json!({ "scenario": cfg.name, "phases": phases }))?;
            body.push(b'\n');
            emit(o, "analysis.json", &body)?;
        }
        Command::Simulate { scenario } => {
            let cfg = load(scenario, o)?;
            let plans = solve_phases(&cfg)?;
            let schedule = if cfg.periodic {
                worst_case_periodic(&plans, cfg.horizon)?
            } else {
                sample_schedule(&plans, cfg.sensors(), &mut seeded_rng(cfg.seed))?
            };
            let mut body = b"sensor,index,time\n".to_vec();
            for (s, ev) in schedule.events.iter().enumerate() {
                for (i, t) in ev.iter().enumerate() {
                    writeln!(body, "{s},{i},{t}")?;
                }
            }
            emit(o, "trace.csv", &body)?;
        }
        Command::Bounds { scenario } => {
            let cfg = load(scenario, o)?;
            let mut body = b"sensor,phase,f,bound,p_lt_rho,exp_moment\n".to_vec();
            let cell = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
            for r in bounds_table(&cfg)? {
                writeln!(
                    body,
                    "{},{},{},{},{},{}",
                    r.sensor,
                    r.phase,
                    r.f,
                    cell(r.bound),
                    cell(r.p_lt_rho),
                    cell(r.exp_moment)
                )?;
            }
            emit(o, "bounds.csv", &body)?;
        }
        Command::Scenario { scenario } => {
            let cfg = load(scenario, o)?;
            let dir = o.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            let run = run_scenario(&cfg)?;
            write_artifacts(&run, &dir)?;
            let r = &run.report;
            for s in &r.sensors {
                if let Some(pass) = s.pass {
                    println!(
                        "sensor {}: {} ({} of {} points over bound + 3 SE)",
                        s.sensor,
                        if pass { "within bound" } else { "BOUND VIOLATED" },
                        s.violations,
                        s.checked_points
                    );
                }
            }
            if let Some(st) = &r.settle {
                println!(
                    "subsystem {} settled within ±{} before t = {} in {:.1}% of replicates",
                    st.subsystem,
                    st.tolerance,
                    st.by,
                    100.0 * st.fraction_settled
                );
            }
            println!("{}: {} -> {}", r.scenario, if r.pass { "pass" } else { "FAIL" }, dir.display());
            if !r.pass {
                std::process::exit(2);
            }
        }
    }
    Ok(())
}
