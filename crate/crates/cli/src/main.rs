//! `ihdg`: convergence studies, method comparisons and property checks.

mod config;
mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ihdg_core::checks::{run_checks, CheckConfig};
use ihdg_core::mesh::build_structured_mesh;
use ihdg_core::solver::{set_thread_count, Method};
use ihdg_core::study::{run_compare, run_convergence};

use config::{check_size, parse_levels, Settings};

#[derive(Parser, Debug)]
#[command(name = "ihdg", version, about = "HDG solvers for semilinear parabolic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve on each mesh level and print errors and orders as CSV.
    Convergence(RunArgs),
    /// Run both methods side by side and print per-iteration timings as CSV.
    Compare(RunArgs),
    /// Run the property checks; exits nonzero if any fails.
    Checks(CheckArgs),
    /// Print a structured mesh.
    Mesh {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
}

#[derive(Args, Debug, Default)]
struct SettingArgs {
    /// Flat key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// allen_cahn, grad_squared, burgers or zero.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Polynomial degree.
    #[arg(long)]
    k: Option<usize>,
    /// Cells per axis, comma separated.
    #[arg(long, value_parser = parse_levels_arg)]
    levels: Option<LevelList>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "final-time")]
    final_time: Option<f64>,
    /// Fixed time step instead of h^(k+1).
    #[arg(long)]
    dt: Option<f64>,
    /// interpolatory or standard.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long = "newton-tol")]
    newton_tol: Option<f64>,
    #[arg(long = "newton-step-tol")]
    newton_step_tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the sparse solver (overrides IHDG_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    settings: SettingArgs,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow meshes above 64 (2D) or 8 (3D) cells per axis.
    #[arg(long)]
    big: bool,
    /// Print per-step diagnostics to standard error.
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    settings: SettingArgs,
    /// Sign-flip the gradient block in the condensed solve; the condensation
    /// check must then fail.
    #[arg(long, hide = true)]
    flip_gradient: bool,
}

#[derive(Debug, Clone)]
struct LevelList(Vec<usize>);

fn parse_levels_arg(s: &str) -> Result<LevelList, String> {
    parse_levels(s).map(LevelList).map_err(|e| e.to_string())
}

impl SettingArgs {
    fn resolve(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        let flags = Settings {
            problem: self.problem.clone(),
            dim: self.dim,
            k: self.k,
            levels: self.levels.clone().map(|l| l.0),
            tau: self.tau,
            final_time: self.final_time,
            dt: self.dt,
            method: self.method,
            newton_tol: self.newton_tol,
            newton_step_tol: self.newton_step_tol,
            max_iter: self.max_iter,
            seed: self.seed,
            threads: self.threads,
        };
        let env = Settings {
            threads: std::env::var("IHDG_THREADS")
                .ok()
                .map(|v| v.trim().parse().context("IHDG_THREADS must be a count"))
                .transpose()?,
            ..Settings::default()
        };
        Ok(env.overridden_by(file).overridden_by(flags))
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn convergence(args: &RunArgs) -> Result<()> {
    let settings = args.settings.resolve()?;
    set_thread_count(settings.threads.unwrap_or(1));
    let study = settings.study();
    check_size(&study, args.big)?;
    let trace = args.trace;
    if trace {
        eprintln!("mesh_n,step,time,iterations,residual,assembly_s,solve_s");
    }
    let (report, _) = run_convergence(&study, &mut |n, _, d| {
        if trace {
            eprintln!(
                "{n},{},{:.6},{},{:.3e},{:.3e},{:.3e}",
                d.step,
                d.time,
                d.iterations,
                d.residual,
                d.assembly_time().as_secs_f64(),
                d.solve_time().as_secs_f64()
            );
        }
    })?;
    let mut out = output(&args.out)?;
    report::write_convergence(&mut out, &report)?;
    out.flush()?;
    Ok(())
}

fn compare(args: &RunArgs) -> Result<()> {
    let settings = args.settings.resolve()?;
    set_thread_count(settings.threads.unwrap_or(1));
    let study = settings.study();
    check_size(&study, args.big)?;
    let mut runs = Vec::with_capacity(study.levels.len());
    for &n in &study.levels {
        let c = run_compare(&study, n).with_context(|| format!("comparison on n = {n}"))?;
        if args.trace {
            for (a, b) in c.interpolatory.diagnostics.iter().zip(&c.standard.diagnostics) {
                eprintln!(
                    "n {n} step {} t {:.6}: iterations {}/{}",
                    a.step, a.time, a.iterations, b.iterations
                );
            }
        }
        eprint!("{}", report::compare_summary(&c));
        runs.push(c);
    }
    let mut out = output(&args.out)?;
    report::write_compare(&mut out, &runs)?;
    out.flush()?;
    Ok(())
}

fn checks(args: &CheckArgs) -> Result<bool> {
    let settings = args.settings.resolve()?;
    set_thread_count(settings.threads.unwrap_or(1));
    let cfg = CheckConfig {
        seed: settings.seed.unwrap_or(CheckConfig::default().seed),
        flip_gradient: args.flip_gradient,
    };
    let report = run_checks(&cfg);
    print!("{report}");
    let failed = report.failures().count();
    println!("{} checks, {failed} failed", report.outcomes.len());
    Ok(failed == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Convergence(a) => convergence(&a).map(|_| true),
        Command::Compare(a) => compare(&a).map(|_| true),
        Command::Checks(a) => checks(&a),
        Command::Mesh { dim, n } => {
            if n > 64 {
                bail!("refusing to print a mesh with more than 64 cells per axis");
            }
            let mesh = build_structured_mesh(dim, n)?;
            mesh.write_dump(io::stdout().lock())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
