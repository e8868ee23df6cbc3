//! Command-line front end: solve a configured problem over one or more risk
//! parameters, then evaluate stored policies by Monte-Carlo simulation.
//! Everything is written as plot-ready CSV/JSON; see the repo README for
//! the file schemas.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ileg_cli::files;
use ileg_cli::files::{Manifest, ManifestEntry, StatsRecord};
use ileg::problem::load_config;
use ileg::rollout::{cumulant_report, monte_carlo_evaluate};
use ileg::solver::{sigma_sweep, Termination};
use ileg::{Error, SolverConfig};

#[derive(Parser)]
#[command(name = "ileg", version, about = "Risk-sensitive trajectory optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem for one or more risk parameters and
    /// write trajectories, gains, cost histories and a run manifest.
    Solve(SolveArgs),
    /// Monte-Carlo evaluation of a previously solved policy: cost samples,
    /// summary statistics and state error-bands.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Problem config file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated risk parameters; defaults to the config's sigma.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    sigma: Option<Vec<f64>>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Time grid steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Relative cost-decrease convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// RNG seed stored for later Monte-Carlo evaluation.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory holding a solve run's manifest.json.
    #[arg(long)]
    run: PathBuf,
    /// Which sweep entry to evaluate; may be omitted when there is one.
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Number of Monte-Carlo rollouts (defaults to the stored config).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the per-channel noise standard deviations for simulation.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = false)]
    noise_sd: Option<Vec<f64>>,
}

/// Usage/config problems exit 1; an existence-condition failure in any
/// sweep entry exits 2; other non-converged entries exit 3.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match outcome {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, String> {
    let config = load_config(&args.config).map_err(|e| e.to_string())?;
    let mut solver = SolverConfig::default();
    if let Some(steps) = args.steps {
        solver.grid_steps = steps;
    }
    if let Some(tol) = args.tol {
        solver.cost_tolerance = tol;
    }
    if let Some(max_iters) = args.max_iters {
        solver.max_iterations = max_iters;
    }
    if let Some(seed) = args.seed {
        solver.rng_seed = seed;
    }

    let sigmas = match &args.sigma {
        Some(list) if !list.is_empty() => list.clone(),
        _ => vec![config.sigma.unwrap_or(0.0)],
    };
    if let Some(bad) = sigmas.iter().find(|s| !s.is_finite()) {
        return Err(format!("risk parameter must be finite, got {bad}"));
    }

    let problem = config.build().map_err(|e| e.to_string())?;
    solver.validate().map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;

    let sweep = sigma_sweep(&problem, &solver, &sigmas);

    let mut entries = Vec::with_capacity(sweep.len());
    let mut any_existence = false;
    let mut any_other_failure = false;
    for entry in &sweep {
        match &entry.outcome {
            Ok(result) => {
                let trajectory = files::trajectory_name(entry.sigma);
                let gains = files::gains_name(entry.sigma);
                let costs = files::costs_name(entry.sigma);
                files::write_text(
                    &args.out.join(&trajectory),
                    &files::trajectory_csv(&result.nominal),
                )
                .map_err(|e| e.to_string())?;
                files::write_text(&args.out.join(&gains), &files::gains_csv(&result.policy))
                    .map_err(|e| e.to_string())?;
                files::write_text(&args.out.join(&costs), &files::costs_csv(&result.cost_history))
                    .map_err(|e| e.to_string())?;
                if result.termination != Termination::Converged {
                    any_other_failure = true;
                    eprintln!(
                        "sigma {}: terminated {} after {} iterations",
                        entry.sigma, result.termination, result.iterations
                    );
                }
                entries.push(ManifestEntry {
                    sigma: entry.sigma,
                    termination: Some(result.termination),
                    iterations: Some(result.iterations),
                    final_cost: Some(result.final_cost()),
                    alpha: Some(result.policy.alpha),
                    trajectory: Some(trajectory),
                    gains: Some(gains),
                    costs: Some(costs),
                    error: None,
                });
            }
            Err(err) => {
                if matches!(err, Error::ExistenceViolation { .. }) {
                    any_existence = true;
                    entries.push(ManifestEntry {
                        sigma: entry.sigma,
                        termination: Some(Termination::ExistenceViolation),
                        iterations: None,
                        final_cost: None,
                        alpha: None,
                        trajectory: None,
                        gains: None,
                        costs: None,
                        error: Some(err.to_string()),
                    });
                } else {
                    any_other_failure = true;
                    entries.push(ManifestEntry {
                        sigma: entry.sigma,
                        termination: None,
                        iterations: None,
                        final_cost: None,
                        alpha: None,
                        trajectory: None,
                        gains: None,
                        costs: None,
                        error: Some(err.to_string()),
                    });
                }
                eprintln!("sigma {}: {err}", entry.sigma);
            }
        }
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        problem: config,
        solver,
        results: entries,
    };
    files::write_text(&args.out.join("manifest.json"), &files::manifest_json(&manifest))
        .map_err(|e| e.to_string())?;

    Ok(if any_existence {
        ExitCode::from(2)
    } else if any_other_failure {
        ExitCode::from(3)
    } else {
        ExitCode::from(0)
    })
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode, String> {
    let manifest = files::read_manifest(&args.run)?;
    let entry = match args.sigma {
        Some(sigma) => manifest
            .results
            .iter()
            .find(|e| e.sigma == sigma)
            .ok_or_else(|| format!("no sweep entry for sigma {sigma} in the manifest"))?,
        None if manifest.results.len() == 1 => &manifest.results[0],
        None => {
            return Err(format!(
                "manifest has {} entries; pick one with --sigma",
                manifest.results.len()
            ))
        }
    };
    if entry.error.is_some() || entry.trajectory.is_none() {
        return Err(format!(
            "sweep entry for sigma {} has no stored policy (it failed to solve)",
            entry.sigma
        ));
    }

    let mut problem_config = manifest.problem.clone();
    problem_config.sigma = Some(entry.sigma);
    if let Some(sd) = &args.noise_sd {
        problem_config.noise_sd = Some(sd.clone());
    }
    let problem = problem_config.build().map_err(|e| e.to_string())?;

    let mut solver = manifest.solver.clone();
    if let Some(samples) = args.samples {
        solver.mc_samples = samples;
    }
    if let Some(seed) = args.seed {
        solver.rng_seed = seed;
    }
    solver.validate().map_err(|e| e.to_string())?;

    let policy = files::read_policy(&args.run, entry, problem.state_dim, problem.control_dim)?;
    if policy.intervals() != solver.grid_steps {
        return Err(format!(
            "stored policy has {} intervals but the solver config says {}",
            policy.intervals(),
            solver.grid_steps
        ));
    }

    let (stats, bands) =
        monte_carlo_evaluate(&problem, &policy, &solver).map_err(|e| e.to_string())?;
    let record = StatsRecord {
        sigma: stats.sigma,
        seed: stats.seed,
        n_samples: stats.n_samples,
        mean: stats.mean,
        variance: stats.variance,
        skewness: stats.skewness,
        risk_objective: stats.risk_objective,
        cumulants: cumulant_report(&stats),
    };

    files::write_text(
        &args.run.join(files::samples_name(entry.sigma)),
        &files::samples_csv(&stats),
    )
    .map_err(|e| e.to_string())?;
    files::write_text(
        &args.run.join(files::stats_name(entry.sigma)),
        &files::stats_json(&record),
    )
    .map_err(|e| e.to_string())?;
    files::write_text(
        &args.run.join(files::bands_name(entry.sigma)),
        &files::bands_csv(&bands),
    )
    .map_err(|e| e.to_string())?;

    Ok(ExitCode::from(0))
}
