//! Wall-clock accounting for running a simulation on trapped-ion hardware.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hardware::HardwareParams;
use crate::model::build_toy_model;
use crate::pulse::{build_schedule_with, CompileOptions, PulseSchedule};

/// Grid of toy-model experiments to cost.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub lambda_over_delta: Vec<f64>,
    pub modes: Vec<usize>,
    /// Measured time points S'.
    pub time_points: usize,
    /// Runs R per time point.
    pub runs: usize,
    /// Trotter steps S.
    pub steps: usize,
    pub tau_fs: f64,
    pub hardware: HardwareParams,
    pub options: CompileOptions,
}

impl ExperimentPlan {
    pub fn new(lambda_over_delta: Vec<f64>, modes: Vec<usize>, hardware: HardwareParams) -> Self {
        Self {
            lambda_over_delta,
            modes,
            time_points: 40,
            runs: 100,
            steps: 600,
            tau_fs: 400.0,
            hardware,
            options: CompileOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambda_over_delta.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidArgument("experiment grid is empty".into()));
        }
        if self.time_points == 0 || self.runs == 0 {
            return Err(Error::InvalidArgument("time points and runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the experimental-time table.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRow {
    pub lambda_over_delta: f64,
    pub modes: usize,
    pub runs: usize,
    pub total_s: f64,
    pub overhead_s: f64,
    pub operation_s: f64,
    /// Operation time of the longest run (the full schedule), ms.
    pub max_run_operation_ms: f64,
}

/// Measurement times `s τ / S'` for `s = 1..=S'`.
pub fn measurement_times(tau_fs: f64, time_points: usize) -> Vec<f64> {
    (1..=time_points).map(|s| tau_fs * s as f64 / time_points as f64).collect()
}

/// Per-run operation time (µs) for each measurement time.
pub fn run_operation_times(schedule: &PulseSchedule, time_points: usize) -> Result<Vec<f64>> {
    measurement_times(schedule.tau_fs, time_points)
        .into_iter()
        .map(|t| schedule.operation_time_until(t))
        .collect()
}

/// `(total, overhead, operation)` in seconds:
/// `Σ_s R (overhead + operation time truncated at s τ/S')`.
pub fn schedule_cost(schedule: &PulseSchedule, runs: usize, time_points: usize, hw: &HardwareParams) -> Result<(f64, f64, f64)> {
    let ops = run_operation_times(schedule, time_points)?;
    let operation_us: f64 = ops.iter().sum::<f64>() * runs as f64;
    let overhead_us = overhead_baseline_us(runs, time_points, hw);
    Ok(((overhead_us + operation_us) * 1e-6, overhead_us * 1e-6, operation_us * 1e-6))
}

/// Overhead-only total `R S' × per-run overhead`, µs.
pub fn overhead_baseline_us(runs: usize, time_points: usize, hw: &HardwareParams) -> f64 {
    (runs * time_points) as f64 * hw.overhead_per_run_us()
}

/// Costs every grid point of the plan (in parallel), ordered by `N` then λ.
pub fn experimental_time(plan: &ExperimentPlan) -> Result<Vec<EstimateRow>> {
    plan.validate()?;
    let points: Vec<(usize, f64)> =
        plan.modes.iter().flat_map(|&n| plan.lambda_over_delta.iter().map(move |&l| (n, l))).collect();
    points
        .par_iter()
        .map(|&(n, l)| {
            let spec = build_toy_model::<f64>(n, l)?;
            let sched = build_schedule_with(&spec, plan.tau_fs, plan.steps, &plan.hardware, &plan.options)?;
            let (total_s, overhead_s, operation_s) = schedule_cost(&sched, plan.runs, plan.time_points, &plan.hardware)?;
            Ok(EstimateRow {
                lambda_over_delta: l,
                modes: n,
                runs: plan.runs,
                total_s,
                overhead_s,
                operation_s,
                max_run_operation_ms: sched.operation_time_us * 1e-3,
            })
        })
        .collect()
}

pub const CSV_HEADER: &str = "lambda_over_delta,N,R,total_s,overhead_s,operation_s,max_run_operation_ms";

pub fn to_csv(rows: &[EstimateRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.lambda_over_delta, r.modes, r.runs, r.total_s, r.overhead_s, r.operation_s, r.max_run_operation_ms
        );
    }
    s
}

pub fn from_csv(text: &str) -> Result<Vec<EstimateRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse { line: 1, key: "header".into(), message: format!("expected `{CSV_HEADER}`") })
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let err = |key: &str| Error::Parse { line: n + 1, key: key.into(), message: "bad value".into() };
        if f.len() != 7 {
            return Err(err("row"));
        }
        out.push(EstimateRow {
            lambda_over_delta: f[0].parse().map_err(|_| err("lambda_over_delta"))?,
            modes: f[1].parse().map_err(|_| err("N"))?,
            runs: f[2].parse().map_err(|_| err("R"))?,
            total_s: f[3].parse().map_err(|_| err("total_s"))?,
            overhead_s: f[4].parse().map_err(|_| err("overhead_s"))?,
            operation_s: f[5].parse().map_err(|_| err("operation_s"))?,
            max_run_operation_ms: f[6].parse().map_err(|_| err("max_run_operation_ms"))?,
        });
    }
    Ok(out)
}

/// Least-squares line `operation = intercept + slope √(λ/Δ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual over the range of the fitted values
    /// (0 when the data are constant).
    pub residual: f64,
}

/// Fits total minus overhead against `√(λ/Δ)` at a single `N`.
pub fn scaling_fit(rows: &[EstimateRow]) -> Result<ScalingFit> {
    let n0 = rows.first().map(|r| r.modes);
    if rows.iter().any(|r| Some(r.modes) != n0) {
        return Err(Error::InvalidArgument("scaling fit needs rows at a single mode count".into()));
    }
    let mut lambdas: Vec<f64> = rows.iter().map(|r| r.lambda_over_delta).collect();
    lambdas.sort_by(|a, b| a.partial_cmp(b).expect("finite λ"));
    lambdas.dedup();
    if lambdas.len() < 3 || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidArgument("scaling fit needs at least 3 distinct positive λ values".into()));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.lambda_over_delta.sqrt()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.total_s - r.overhead_s).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_res = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).abs()).fold(0.0, f64::max);
    let range = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
    let residual = if range > 0.0 { max_res / range } else { 0.0 };
    Ok(ScalingFit { slope, intercept, residual })
}
