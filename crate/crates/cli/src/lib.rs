//! Command-line front end: `vibronic run | sweep | compare | compile | estimate`.

pub mod args;
pub mod exec;
pub mod output;
pub mod resolve;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use vibronic_core::config::{Backend, RunConfig};
use vibronic_core::trace::compare;
use vibronic_core::{Error, Result, Trace};

use crate::args::{Cli, Command, CompareArgs, RunArgs, SweepArgs};
use crate::exec::execute;
use crate::output::{sidecar_path, write_atomic};
use crate::resolve::{flag_error, resolve, TOY_LAMBDA_GRID, TOY_MODES_GRID};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } => 2,
        Error::ConvergenceFailure(_) => 3,
        Error::InfeasibleSchedule(_) | Error::UnsupportedChain(_) => 4,
        _ => 1,
    }
}

fn report(e: &Error) {
    eprintln!("error: {e}");
    if let Error::ConvergenceFailure(f) = e {
        eprintln!("  previous cutoffs {:?}, last cutoffs {:?}", f.previous_cutoffs, f.last_cutoffs);
        if let (Some(a), Some(b)) = (f.previous_populations.last(), f.last_populations.last()) {
            eprintln!("  final populations {a:?} -> {b:?}");
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Run(a) => run_one(&a, None),
        Command::Compile(a) => run_one(&a, Some(Backend::Compile)),
        Command::Estimate(a) => run_one(&a, Some(Backend::Estimate)),
        Command::Sweep(a) => sweep(&a),
        Command::Compare(a) => compare_files(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            exit_code(&e)
        }
    }
}

fn default_output(b: Backend) -> PathBuf {
    let ext = if b == Backend::Compile { "txt" } else { "csv" };
    PathBuf::from(format!("vibronic-{}.{ext}", b.name()))
}

fn run_and_write(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut outcome = execute(cfg)?;
    outcome.resolved.run.output = Some(out.display().to_string());
    write_atomic(out, &outcome.body)?;
    write_atomic(&sidecar_path(out), &outcome.resolved.to_toml())?;
    Ok(outcome.summary)
}

fn run_one(a: &RunArgs, forced: Option<Backend>) -> Result<()> {
    let cfg = resolve(a, forced)?;
    let out = cfg.run.output.as_ref().map(PathBuf::from).unwrap_or_else(|| default_output(cfg.run.backend));
    let summary = run_and_write(&cfg, &out)?;
    for line in summary {
        println!("{line}");
    }
    println!("wrote {} and {}", out.display(), sidecar_path(&out).display());
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let mut base_args = a.run.clone();
    base_args.lambda_over_delta.clear();
    base_args.modes.clear();
    let base = resolve(&base_args, None)?;
    if base.run.backend == Backend::Estimate {
        return Err(flag_error("backend", "use the estimate subcommand for time estimates"));
    }
    if base.model.preset.as_deref() != Some("toy") {
        return Err(flag_error("preset", "sweep runs the toy model"));
    }
    if base.run.output.is_some() {
        return Err(flag_error("output", "sweep names its files; use --output-dir"));
    }
    let lambdas = if a.run.lambda_over_delta.is_empty() { TOY_LAMBDA_GRID.to_vec() } else { a.run.lambda_over_delta.clone() };
    let modes = if a.run.modes.is_empty() { TOY_MODES_GRID.to_vec() } else { a.run.modes.clone() };
    std::fs::create_dir_all(&a.output_dir)?;
    let points: Vec<(f64, usize)> = lambdas.iter().flat_map(|&l| modes.iter().map(move |&n| (l, n))).collect();
    let ext = if base.run.backend == Backend::Compile { "txt" } else { "csv" };
    let lines: Vec<String> = points
        .par_iter()
        .map(|&(l, n)| {
            let mut cfg = base.clone();
            cfg.model.lambda_over_delta = Some(l);
            cfg.model.modes = Some(n);
            let out = a.output_dir.join(format!("{}_lambda{l}_N{n}.{ext}", base.run.backend.name()));
            let summary = run_and_write(&cfg, &out)?;
            Ok(format!("λ/Δ={l} N={n}: {} ({})", out.display(), summary.first().cloned().unwrap_or_default()))
        })
        .collect::<Result<_>>()?;
    for line in lines {
        println!("{line}");
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<Trace> {
    let text = std::fs::read_to_string(path)?;
    Trace::from_csv(&text)
}

fn compare_files(a: &CompareArgs) -> Result<()> {
    let report = compare(&read_trace(&a.a)?, &read_trace(&a.b)?)?;
    print!("{}", report.to_text());
    let max = report.overall_max();
    if max > a.flag_above {
        println!("FLAG: maximum deviation {max:.4} exceeds {}", a.flag_above);
    }
    Ok(())
}
