use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use msense::concentration::{mc_a_squared, mc_noise_term, mc_second_moment, mc_sensing_deviation, random_symmetric};
use msense::harness::{
    detect_phases_on, init_threads_from_env, read_trajectory_csv, reproduce_figures, run_experiment, sweep, sweep_csv,
    trajectory_csv, write_file, ExperimentConfig, PhaseParams, SweepParam,
};
use msense::problem::{generate_ground_truth, EntryScale, SensingDistribution, SensingOptions};
use msense::subspace::{check_initialization, planted_init, verify_population_batch, RHO_MAX};
use msense::{Error, Result};

#[derive(Parser)]
#[command(name = "msense", version, about = "Gradient descent on factorized matrix sensing problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trajectory CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `output`; stdout when neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill the elapsed_ms column (output is then not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Run a grid of experiments over one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Check the contraction and initialization bounds on random instances.
    Verify {
        #[arg(value_enum)]
        what: VerifyKind,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = RHO_MAX)]
        rho: f64,
    },
    /// Monte Carlo concentration estimates.
    Conc {
        #[arg(value_enum)]
        what: ConcKind,
        #[arg(long, default_value_t = 20)]
        d: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = Dist::Gaussian)]
        distribution: Dist,
        #[arg(long, value_enum, default_value_t = Scale::Unit)]
        entry_scale: Scale,
        /// Per-trial values as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Phase diagnostics for a trajectory CSV.
    Phases {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
    },
    /// Write the standard figure set (CSV and SVG) into a directory.
    Figures {
        #[arg(long)]
        out: PathBuf,
        /// Override every run's iteration count.
        #[arg(long)]
        iters: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyKind {
    Pop,
    Init,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConcKind {
    Noise,
    Deviation,
    Moment,
    Asq,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Gaussian,
    Rademacher,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Unit,
    Isotropic,
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("json value serializes");
    writeln!(std::io::stdout(), "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, timing } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            let target = out.or_else(|| cfg.output.take());
            match run_experiment(&cfg) {
                Ok(traj) => {
                    emit(target.as_deref(), &trajectory_csv(&traj, timing))?;
                    if target.is_some() {
                        let last = traj.metrics.last().expect("at least one row");
                        print_json(&json!({ "iters": cfg.iters, "final": last }))?;
                    }
                }
                Err(Error::Diverged {
                    iteration,
                    err_spec,
                    partial,
                }) => {
                    if target.is_some() {
                        emit(target.as_deref(), &trajectory_csv(&partial, timing))?;
                    }
                    return Err(Error::Diverged {
                        iteration,
                        err_spec,
                        partial,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
            replicates,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let res = sweep(&cfg, param, &values, replicates)?;
            write_file(&out, &sweep_csv(&res))?;
            print_json(&json!({
                "param": param.name(),
                "cells": res.cells.len(),
                "slope": res.slope,
                "slope_note": res.slope_note,
            }))?;
        }
        Command::Verify {
            what,
            trials,
            seed,
            k,
            rho,
        } => {
            let base = ExperimentConfig::default();
            let dt = base.dt.resolve(base.d - base.r);
            let gt = generate_ground_truth(base.d, base.r, &base.ds, &dt, seed)?;
            match what {
                VerifyKind::Pop => {
                    let eta = 1.0 / (100.0 * gt.sigma1());
                    let batch = verify_population_batch(&gt, k, eta, trials, seed)?;
                    let failures: serde_json::Map<String, serde_json::Value> =
                        batch.failures().into_iter().map(|(n, c)| (n.to_string(), json!(c))).collect();
                    print_json(&json!({ "trials": trials, "eta": eta, "failures": failures }))?;
                    if !batch.all_pass() {
                        return Ok(ExitCode::from(2));
                    }
                }
                VerifyKind::Init => {
                    let mut premise = 0;
                    let mut conclusion = 0;
                    let mut implication_failures = 0;
                    let mut worst = 0.0f64;
                    for i in 0..trials as u64 {
                        let f0 = planted_init(&gt, k, rho, seed.wrapping_add(i))?;
                        let rep = check_initialization(&f0.f, &gt, rho)?;
                        premise += usize::from(rep.premise_ok);
                        conclusion += usize::from(rep.conclusion_ok);
                        implication_failures += usize::from(!rep.lemma_ok);
                        worst = worst.max(rep.ss0.max(rep.tt0).max(rep.st0) / rep.basin);
                    }
                    print_json(&json!({
                        "trials": trials,
                        "rho": rho,
                        "premise_held": premise,
                        "conclusion_held": conclusion,
                        "implication_failures": implication_failures,
                        "worst_block_over_basin": worst,
                    }))?;
                    if implication_failures > 0 {
                        return Ok(ExitCode::from(2));
                    }
                }
            }
        }
        Command::Conc {
            what,
            d,
            n,
            trials,
            seed,
            sigma,
            distribution,
            entry_scale,
            out,
        } => {
            let options = SensingOptions {
                distribution: match distribution {
                    Dist::Gaussian => SensingDistribution::Gaussian,
                    Dist::Rademacher => SensingDistribution::Rademacher,
                },
                entry_scale: match entry_scale {
                    Scale::Unit => EntryScale::Unit,
                    Scale::Isotropic => EntryScale::Isotropic,
                },
                ..Default::default()
            };
            match what {
                ConcKind::Noise => {
                    let rep = mc_noise_term(d, sigma, n, trials, seed, options)?;
                    if let Some(p) = &out {
                        write_file(p, &rep.to_csv())?;
                    }
                    print_json(&rep.summary_json())?;
                }
                ConcKind::Deviation => {
                    let u = random_symmetric(d, seed);
                    let rep = mc_sensing_deviation(&u, n, trials, seed, options)?;
                    if let Some(p) = &out {
                        write_file(p, &rep.report.to_csv())?;
                    }
                    let mut v = rep.report.summary_json();
                    v["mean_max_abs_z"] = json!(rep.max_abs_z(&u));
                    print_json(&v)?;
                }
                ConcKind::Moment | ConcKind::Asq => {
                    let rep = if matches!(what, ConcKind::Moment) {
                        mc_second_moment(&random_symmetric(d, seed), trials, seed, options)?
                    } else {
                        mc_a_squared(d, trials, seed, options)?
                    };
                    print_json(&json!({
                        "trials": rep.trials,
                        "stated_max_abs_z": rep.stated.max_abs_z,
                        "exact_max_abs_z": rep.exact.max_abs_z,
                    }))?;
                }
            }
        }
        Command::Phases { traj, eta } => {
            let text = std::fs::read_to_string(&traj).map_err(|e| Error::io(&traj, e))?;
            let (metrics, _) = read_trajectory_csv(&text)?;
            let rep = detect_phases_on(&metrics, &PhaseParams::new(eta));
            print_json(&serde_json::to_value(&rep).expect("report serializes"))?;
        }
        Command::Figures { out, iters } => {
            for p in reproduce_figures(&out, iters)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads_from_env().and_then(|()| run(cli));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
