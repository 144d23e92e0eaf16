//! Command-line front end.
//!
//! Subcommands: `generate` (fleet problem JSON), `validate` (assumption
//! reports), `solve-central` (reference solution), `run` (distributed run
//! with trace/summary artifacts), `diagnose` (bound and rate reports), and
//! `compare` (plain vs refreshed running average). Exit codes: 0 success,
//! 2 validation failure, 3 solver failure.

use clap::{Args, Parser, Subcommand};
use dualdecomp::diagnostics::{check_consensus_bound, consensus_bound_constants, dual_gap_rate};
use dualdecomp::engine::{DiagnosticsLevel, RunConfig, StepSizeSchedule};
use dualdecomp::network::validate_schedule;
use dualdecomp::problem::{compute_g_bound, validate_problem_bounded, CoupledProblem};
use dualdecomp::solver::solve_centralized;
use dualdecomp_cli::experiment::{
    load_problem, load_schedule, parse_trace_csv, run_experiment, CliError, ExperimentSpec,
    ProblemSource, ScheduleSource,
};
use dualdecomp_cli::pev::{generate_pev, PevConfig};
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dualdecomp",
    about = "Distributed dual decomposition for coupled convex programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Problem JSON file, or "pev" to generate a fleet instance.
    #[arg(long, default_value = "pev")]
    problem: String,
    /// Schedule JSON file, or "alternating" / "metropolis" for generated
    /// networks.
    #[arg(long, default_value = "alternating")]
    schedule: String,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Harmonic step size c(k) = beta / (k + 1).
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Refresh rule threshold.
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    /// Refresh rule window (defaults to the number of agents).
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = ["basic", "full"], default_value = "basic")]
    diagnostics: String,
    /// Fleet size when generating a problem.
    #[arg(long, default_value_t = 20)]
    m: usize,
    /// Charging slots when generating a problem.
    #[arg(long, default_value_t = 24)]
    slots: usize,
    /// Solve the centralized reference and report gaps.
    #[arg(long, default_value_t = false)]
    solve_reference: bool,
    /// Run per-agent updates on a thread pool.
    #[arg(long, default_value_t = false)]
    parallel: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fleet charging instance and write it as problem JSON.
    Generate {
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 24)]
        slots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the structural assumptions of a problem and/or a schedule.
    Validate {
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Horizon for the schedule checks (defaults to 10 * T * m).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Solve the stacked problem centrally and write the reference JSON.
    SolveCentral {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the distributed algorithm and persist trace and summary.
    Run(RunFlags),
    /// Run with full diagnostics and emit bound/rate reports.
    Diagnose {
        #[command(flatten)]
        flags: RunFlags,
        /// alpha1 for the summability bound (default 0.5 / (1 + G)).
        #[arg(long)]
        alpha1: Option<f64>,
        /// Largest horizon N for the bound check.
        #[arg(long, default_value_t = 2000)]
        bound_horizon: usize,
    },
    /// Compare the plain and refreshed running averages of a stored trace.
    Compare {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tol_viol: f64,
        #[arg(long, default_value_t = 1e-2)]
        tol_gap: f64,
        /// Reference objective for gap tests.
        #[arg(long)]
        f_star: Option<f64>,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn flags_to_spec(flags: &RunFlags, diagnostics: DiagnosticsLevel) -> ExperimentSpec {
    let problem = if flags.problem == "pev" {
        ProblemSource::Pev {
            config: PevConfig {
                m: flags.m,
                slots: flags.slots,
                seed: flags.seed,
                ..Default::default()
            },
        }
    } else {
        ProblemSource::File {
            path: PathBuf::from(&flags.problem),
        }
    };
    let schedule = match flags.schedule.as_str() {
        "alternating" => ScheduleSource::Alternating,
        "metropolis" => ScheduleSource::Metropolis,
        path => ScheduleSource::File {
            path: PathBuf::from(path),
        },
    };
    ExperimentSpec {
        problem,
        schedule,
        run: RunConfig {
            iterations: flags.iters,
            step_size: StepSizeSchedule::harmonic(flags.beta),
            refresh_threshold: flags.threshold,
            refresh_window: flags.window,
            seed: flags.seed,
            diagnostics,
            parallel: flags.parallel,
            lambda_init: None,
            stop_on_convergence: None,
        },
        solve_reference: flags.solve_reference,
        out_dir: flags.out.clone(),
        multiplier_columns: false,
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            m,
            slots,
            seed,
            out,
        } => {
            let inst = generate_pev(&PevConfig {
                m,
                slots,
                seed,
                ..Default::default()
            })?;
            fs::create_dir_all(&out)?;
            let problem_path = out.join("problem.json");
            fs::write(&problem_path, inst.problem.to_json())?;
            let meta = serde_json::to_string_pretty(&inst.meta).expect("meta serializes");
            fs::write(out.join("pev_meta.json"), &meta)?;
            println!("{meta}");
            println!("problem written to {}", problem_path.display());
            Ok(())
        }
        Command::Validate {
            problem,
            schedule,
            horizon,
        } => {
            let mut ok = true;
            if let Some(path) = problem {
                let text = fs::read_to_string(&path)?;
                let p = CoupledProblem::from_json(&text)?;
                let report =
                    validate_problem_bounded(&p, dualdecomp_cli::experiment::SLATER_DIM_LIMIT)?;
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
                ok &= report.all_ok();
            }
            if let Some(path) = schedule {
                let text = fs::read_to_string(&path)?;
                let s = dualdecomp::network::WeightSchedule::from_json(&text)?;
                let h = horizon.unwrap_or(10 * s.t_window().max(1) * s.num_agents().max(2));
                let report = validate_schedule(&s, h);
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
                ok &= report.all_ok();
            }
            if ok {
                Ok(())
            } else {
                Err(CliError::Validation("checks reported violations".into()))
            }
        }
        Command::SolveCentral { problem, out } => {
            let text = fs::read_to_string(&problem)?;
            let p = CoupledProblem::from_json(&text)?;
            let reference = solve_centralized(&p)?;
            fs::create_dir_all(&out)?;
            let path = out.join("reference.json");
            fs::write(
                &path,
                serde_json::to_string_pretty(&reference).expect("reference serializes"),
            )?;
            println!(
                "f* = {}, positive multipliers = {}",
                reference.f_star,
                reference.lambda_star.iter().filter(|&&l| l > 1e-6).count()
            );
            println!("reference written to {}", path.display());
            Ok(())
        }
        Command::Run(flags) => {
            let level = if flags.diagnostics == "full" {
                DiagnosticsLevel::Full
            } else {
                DiagnosticsLevel::Basic
            };
            let spec = flags_to_spec(&flags, level);
            let artifacts = run_experiment(&spec)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&artifacts.summary).expect("summary serializes")
            );
            Ok(())
        }
        Command::Diagnose {
            flags,
            alpha1,
            bound_horizon,
        } => {
            let spec = flags_to_spec(&flags, DiagnosticsLevel::Full);
            let (problem, _) = load_problem(&spec.problem)?;
            let schedule = load_schedule(&spec.schedule, problem.num_agents(), spec.run.seed)?;
            let artifacts = run_experiment(&spec)?;
            let g = compute_g_bound(&problem)?.value;
            let a1 = alpha1.unwrap_or(0.5 / (1.0 + g));
            let trace = &artifacts.trace;
            let constants = consensus_bound_constants(trace, a1, g)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let n = bound_horizon.min(trace.records.len().saturating_sub(1));
            let bound = check_consensus_bound(trace, &constants, n)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let mut buf = Vec::new();
            bound.write_csv(&mut buf).expect("buffer write");
            fs::write(spec.out_dir.join("consensus_bound.csv"), &buf)?;
            let rate = dual_gap_rate(trace).map_err(|e| CliError::Validation(e.to_string()))?;
            let rate_tail: Vec<_> = rate
                .iter()
                .rev()
                .take(5)
                .map(|p| (p.r, p.min_gap, p.c_sum, p.product))
                .collect();
            let report = serde_json::json!({
                "constants": constants,
                "bound_holds_for_all_N": bound.holds_for_all_n,
                "bound_margin_min": bound.margin_min,
                "rate_product_tail": rate_tail,
                "schedule_T": schedule.t_window(),
            });
            fs::write(
                spec.out_dir.join("diagnostics.json"),
                serde_json::to_string_pretty(&report).expect("report serializes"),
            )?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report"));
            if bound.holds_for_all_n {
                Ok(())
            } else {
                Err(CliError::Validation(
                    "summability bound violated; see consensus_bound.csv".into(),
                ))
            }
        }
        Command::Compare {
            trace,
            tol_viol,
            tol_gap,
            f_star,
        } => {
            let text = fs::read_to_string(&trace)?;
            let rows = parse_trace_csv(&text)?;
            let hit = |viol: fn(&(usize, f64, f64, f64, f64)) -> f64,
                       obj: fn(&(usize, f64, f64, f64, f64)) -> f64|
             -> Option<usize> {
                rows.iter().position(|r| {
                    viol(r) <= tol_viol
                        && match f_star {
                            Some(f) => (obj(r) - f).abs() <= tol_gap,
                            None => true,
                        }
                })
            };
            let first_hat = hit(|r| r.3, |r| r.1);
            let first_tilde = hit(|r| r.4, |r| r.2);
            let identical = rows
                .iter()
                .all(|r| r.1.to_bits() == r.2.to_bits() && r.3.to_bits() == r.4.to_bits());
            let report = serde_json::json!({
                "first_hit_hat": first_hat,
                "first_hit_tilde": first_tilde,
                "sequences_identical": identical,
                "tol_viol": tol_viol,
                "tol_gap": tol_gap,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report"));
            Ok(())
        }
    }
}
