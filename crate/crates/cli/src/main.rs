//! Command-line interface for the advective SIS laboratory.

use advsis_cli::config::Config;
use advsis_cli::experiment::run_experiment;
use advsis_cli::report;
use advsis_cli::verify;
use advsis_cli::CliError;
use advsis_core::dynamics::evaluate_monitors;
use advsis_core::equilibria::{solve_ee, solve_limit_system, LimitKind};
use advsis_core::spectral::{compute_r0, lambda1};
use advsis_core::{simulate, solve_dfe};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "advsis",
    about = "Finite-volume laboratory for an advective SIS model with saturated incidence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<String>,
    /// Output directory for CSV and summary files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-path override, e.g. `--set params.q=2` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Shorthand for `--set domain.cells=N`.
    #[arg(long)]
    cells: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the disease-free equilibrium and write its profile.
    Dfe(Common),
    /// Compute the reproduction number and the linearized eigenvalue.
    R0(Common),
    /// Compute the principal eigenvalue of the linearized infection operator.
    Lambda1(Common),
    /// Solve the endemic equilibrium by damped Newton.
    Ee(Common),
    /// Time-march the parabolic system and write the trace.
    Simulate(Common),
    /// Solve a diffusion-limit system.
    Limit {
        #[command(flatten)]
        common: Common,
        /// Which limit system: ds_infty | di_infty | ds_zero.
        #[arg(long)]
        kind: String,
    },
    /// Run the configured experiment ladder and write ladder.csv.
    Sweep(Common),
    /// Run every acceptance criterion and write the verification summary.
    Verify(Common),
}

fn load_config(common: &Common) -> Result<Config, CliError> {
    let base = match &common.config {
        Some(path) => serde_json::to_value(Config::from_path(path)?).unwrap(),
        None => serde_json::to_value(Config::default()).unwrap(),
    };
    Config::with_overrides(base, &common.sets, common.cells)
}

fn ensure_out(common: &Common) -> Result<(), CliError> {
    std::fs::create_dir_all(&common.out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Dfe(common) => {
            let cfg = load_config(&common)?;
            ensure_out(&common)?;
            let (coeffs, mesh) = cfg.problem()?;
            let start = Instant::now();
            let dfe = solve_dfe(&coeffs, &mesh)?;
            let zeros = vec![0.0; mesh.len()];
            report::write_profile(&common.out.join("profile.csv"), &mesh, &dfe.s_hat, &zeros)?;
            let fields = coeffs.sample(&mesh)?;
            let results = json!({
                "command": "dfe",
                "mass_residual": dfe.mass_residual,
                "S_at_0": dfe.s_at_left,
                "S_at_L": dfe.s_at_right,
                "int_S": mesh.integrate(&dfe.s_hat, None)?,
                "int_Lambda": mesh.integrate(&fields.lambda, None)?,
            });
            report::write_summary(
                &common.out.join("summary.json"),
                &cfg.hash(),
                &cfg,
                results,
                json!({ "solve_s": start.elapsed().as_secs_f64() }),
            )?;
            println!("dfe: mass residual {:.3e}", dfe.mass_residual);
        }
        Command::R0(common) => {
            let cfg = load_config(&common)?;
            ensure_out(&common)?;
            let (coeffs, mesh) = cfg.problem()?;
            let start = Instant::now();
            let rep = compute_r0(&coeffs, &mesh, cfg.solver.eig_tol)?;
            let results = json!({
                "command": "r0",
                "R0": rep.r0.value,
                "lambda1": rep.lambda1.value,
                "consistent": rep.consistent,
                "r0_iterations": rep.r0.iterations,
                "r0_residual": rep.r0.residual,
            });
            report::write_summary(
                &common.out.join("summary.json"),
                &cfg.hash(),
                &cfg,
                results,
                json!({ "solve_s": start.elapsed().as_secs_f64() }),
            )?;
            println!(
                "R0 = {:.12}, lambda1 = {:.12}, consistent = {}",
                rep.r0.value, rep.lambda1.value, rep.consistent
            );
        }
        Command::Lambda1(common) => {
            let cfg = load_config(&common)?;
            ensure_out(&common)?;
            let (coeffs, mesh) = cfg.problem()?;
            let start = Instant::now();
            let dfe = solve_dfe(&coeffs, &mesh)?;
            let fields = coeffs.sample(&mesh)?;
            let potential: Vec<f64> = (0..mesh.len())
                .map(|k| fields.gamma[k] - dfe.s_hat[k] * fields.beta[k])
                .collect();
            let r = lambda1(&mesh, coeffs.d_i, coeffs.q, &potential, None, cfg.solver.eig_tol)?;
            let results = json!({
                "command": "lambda1",
                "lambda1": r.value,
                "iterations": r.iterations,
                "residual": r.residual,
            });
            report::write_summary(
                &common.out.join("summary.json"),
                &cfg.hash(),
                &cfg,
                results,
                json!({ "solve_s": start.elapsed().as_secs_f64() }),
            )?;
            println!("lambda1 = {:.12}", r.value);
        }
        Command::Ee(common) => {
            let cfg = load_config(&common)?;
            ensure_out(&common)?;
            let (coeffs, mesh) = cfg.problem()?;
            let start = Instant::now();
            let ee = solve_ee(&coeffs, &mesh, None, cfg.solver.newton_tol)?;
            report::write_profile(&common.out.join("profile.csv"), &mesh, &ee.s, &ee.i)?;
            let results = json!({
                "command": "ee",
                "residual": ee.residual,
                "newton_iterations": ee.newton_iterations,
                "positive_branch": ee.positive_branch,
                "int_S": mesh.integrate(&ee.s, None)?,
                "int_I": mesh.integrate(&ee.i, None)?,
            });
            report::write_summary(
                &common.out.join("summary.json"),
                &cfg.hash(),
                &cfg,
                results,
                json!({ "solve_s": start.elapsed().as_secs_f64() }),
            )?;
            println!(
                "ee: residual {:.3e} after {} iterations (positive branch: {})",
                ee.residual, ee.newton_iterations, ee.positive_branch
            );
        }
        Command::Simulate(common) => {
            let cfg = load_config(&common)?;
            ensure_out(&common)?;
            let (coeffs, mesh) = cfg.problem()?;
            let init = cfg.initial_state(&mesh)?;
            let opts = cfg.sim_options();
            let start = Instant::now();
            let trace = simulate(&init, &coeffs, &mesh, &opts)?;
            let monitors = evaluate_monitors(&trace, &coeffs, &mesh)?;
            report::write_trace(&common.out.join("trace.csv"), &trace, &monitors)?;
            report::write_profile(
                &common.out.join("profile.csv"),
                &mesh,
                &trace.final_state.s,
                &trace.final_state.i,
            )?;
            let results = json!({
                "command": "simulate",
                "accepted_steps": trace.accepted_steps,
                "rejected_steps": trace.rejected_steps,
                "mass_law_max_violation": trace.mass_law_max_violation,
                "final_mass_S": trace.mass_s.last(),
                "final_mass_I": trace.mass_i.last(),
                "eta_hat": monitors.eta_hat,
                "max_pointwise_margin": if monitors.pointwise_applicable {
                    json!(monitors.max_pointwise_margin)
                } else {
                    json!("not applicable (dS != dI)")
                },
                "max_gronwall_margin": monitors.max_gronwall_margin,
            });
            report::write_summary(
                &common.out.join("summary.json"),
                &cfg.hash(),
                &cfg,
                results,
                json!({ "simulate_s": start.elapsed().as_secs_f64() }),
            )?;
            println!(
                "simulate: {} steps accepted, {} rejected, final mass I = {:.6e}",
                trace.accepted_steps,
                trace.rejected_steps,
                trace.mass_i.last().unwrap()
            );
        }
        Command::Limit { common, kind } => {
            let cfg = load_config(&common)?;
            ensure_out(&common)?;
            let (coeffs, mesh) = cfg.problem()?;
            let limit_kind = match kind.as_str() {
                "ds_infty" => LimitKind::DsInfty,
                "di_infty" => LimitKind::DiInfty,
                "ds_zero" => LimitKind::DsZero,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown limit kind `{other}` (ds_infty | di_infty | ds_zero)"
                    )))
                }
            };
            let start = Instant::now();
            let r = solve_limit_system(
                limit_kind,
                &coeffs,
                &mesh,
                cfg.bc_variant()?,
                cfg.solver.newton_tol.max(1e-9),
            )?;
            report::write_profile(&common.out.join("profile.csv"), &mesh, &r.s, &r.i)?;
            let results = json!({
                "command": "limit",
                "kind": kind,
                "residual": r.residual,
                "iterations": r.newton_iterations,
                "boundary_mass": r.boundary_mass,
            });
            report::write_summary(
                &common.out.join("summary.json"),
                &cfg.hash(),
                &cfg,
                results,
                json!({ "solve_s": start.elapsed().as_secs_f64() }),
            )?;
            println!("limit {kind}: residual {:.3e}", r.residual);
        }
        Command::Sweep(common) => {
            let cfg = load_config(&common)?;
            ensure_out(&common)?;
            let start = Instant::now();
            let rep = run_experiment(&cfg)?;
            report::write_ladder(&common.out.join("ladder.csv"), &rep)?;
            let results = json!({
                "command": "sweep",
                "report": rep,
            });
            report::write_summary(
                &common.out.join("summary.json"),
                &cfg.hash(),
                &cfg,
                results,
                json!({ "sweep_s": start.elapsed().as_secs_f64() }),
            )?;
            println!(
                "sweep {}: pass = {} ({} points, order ~ {:.2})",
                rep.kind,
                rep.pass,
                rep.points.len(),
                rep.order_estimate
            );
            if !rep.pass {
                return Err(CliError::Invariant(format!(
                    "experiment {} did not meet its tolerance",
                    rep.kind
                )));
            }
        }
        Command::Verify(common) => {
            let cfg = load_config(&common)?;
            ensure_out(&common)?;
            let (results, results_json, runtimes) = verify::full_verify()?;
            for r in &results {
                println!(
                    "criterion {:2} [{}]: {}",
                    r.id,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name
                );
            }
            report::write_summary(
                &common.out.join("summary.json"),
                &cfg.hash(),
                &cfg,
                results_json,
                runtimes,
            )?;
            let failed: Vec<usize> =
                results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
            if !failed.is_empty() {
                return Err(CliError::Invariant(format!(
                    "criteria failed: {failed:?}"
                )));
            }
            println!("all {} criteria passed", results.len());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
