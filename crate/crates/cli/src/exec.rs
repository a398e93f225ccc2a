//! Runs a resolved configuration on its back end.

use std::time::Instant;

use vibronic_core::config::{Backend, RunConfig};
use vibronic_core::ehrenfest::{ensemble_average, EnsembleConfig, Sampling};
use vibronic_core::emulator::{measure_with_shot_noise, EmulatorConfig, IonEmulator};
use vibronic_core::estimator::{self, experimental_time, scaling_fit, ExperimentPlan};
use vibronic_core::exact::{converge_cutoffs, propagate_fixed, InitialElectronic, PropagationRequest};
use vibronic_core::hardware::NoiseChannels;
use vibronic_core::pulse::build_schedule_with;
use vibronic_core::trace::{uniform_grid, TraceMetadata};
use vibronic_core::{Error, Result, Spec, Trace};

use crate::resolve::hardware;

/// What a run produced: the main file body, the configuration that
/// reproduces it, and a few summary lines for the terminal.
#[derive(Debug)]
pub struct Outcome {
    pub body: String,
    pub resolved: RunConfig,
    pub summary: Vec<String>,
}

fn exact_request(cfg: &RunConfig, spec: Spec) -> PropagationRequest<f64> {
    let mut req = PropagationRequest::new(spec)
        .with_times(uniform_grid(cfg.run.tau_fs, cfg.run.grid_points))
        .with_frame(cfg.exact.frame)
        .with_nbar(cfg.exact.nbar.clone())
        .with_eps_int(cfg.exact.eps_int);
    req.initial = InitialElectronic::State(cfg.run.initial_state);
    req.dimension_limit = cfg.exact.dimension_limit;
    req
}

/// Exact trace with fixed cutoffs, or with the smallest converged ones.
fn exact_trace(cfg: &RunConfig, spec: Spec) -> Result<(Trace, Vec<usize>)> {
    let req = exact_request(cfg, spec);
    match &cfg.exact.cutoffs {
        Some(c) => Ok((propagate_fixed(&req, c)?, c.clone())),
        None => {
            let conv = converge_cutoffs(&req, cfg.exact.eps_cut)?;
            Ok((conv.trace, conv.cutoffs))
        }
    }
}

fn ion_cutoffs(cfg: &RunConfig, spec: &Spec) -> Result<Vec<usize>> {
    match &cfg.ion.cutoffs {
        Some(c) => Ok(c.clone()),
        None => {
            let mut probe = cfg.clone();
            probe.exact.cutoffs = None;
            Ok(exact_trace(&probe, spec.clone())?.1)
        }
    }
}

fn meta_table(cfg: &RunConfig, wall: f64, meta: Option<&TraceMetadata>) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    t.insert("backend".into(), cfg.run.backend.name().into());
    t.insert("wall_time_s".into(), wall.into());
    if let Some(m) = meta {
        t.insert("method".into(), m.method.clone().into());
        if !m.cutoffs.is_empty() {
            t.insert("cutoffs".into(), toml::Value::Array(m.cutoffs.iter().map(|&c| (c as i64).into()).collect()));
        }
        if !m.leakage_per_mode.is_empty() {
            t.insert("leakage_per_mode".into(), toml::Value::Array(m.leakage_per_mode.iter().map(|&x| x.into()).collect()));
        }
        let mut d = toml::Table::new();
        for (k, v) in &m.diagnostics {
            d.insert(k.clone(), v.clone().into());
        }
        if !d.is_empty() {
            t.insert("diagnostics".into(), d.into());
        }
    }
    if cfg.run.backend == Backend::Exact {
        t.insert(
            "cost_note".into(),
            "wall time of the truncated-Fock reference solver in this workbench, not a tensor-network cost".into(),
        );
    }
    t
}

fn trace_summary(tr: &Trace) -> Vec<String> {
    let last = tr.populations.last().cloned().unwrap_or_default();
    let peak = tr.leakage.iter().copied().fold(0.0, f64::max);
    vec![
        format!("{} time points, {} states", tr.times.len(), tr.states()),
        format!(
            "final populations: {}",
            last.iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(" ")
        ),
        format!("peak leakage {peak:.3e}"),
    ]
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let mut resolved = cfg.clone();
    resolved.meta = None;
    let finish = |mut resolved: RunConfig, body: String, meta: Option<&TraceMetadata>, summary: Vec<String>| {
        resolved.meta = Some(meta_table(&resolved, start.elapsed().as_secs_f64(), meta));
        Outcome { body, resolved, summary }
    };

    if cfg.run.backend == Backend::Estimate {
        return estimate(cfg).map(|(body, summary)| finish(resolved, body, None, summary));
    }

    let spec = cfg.spec()?;
    let times = uniform_grid(cfg.run.tau_fs, cfg.run.grid_points);
    match cfg.run.backend {
        Backend::Exact => {
            let (tr, cutoffs) = exact_trace(cfg, spec)?;
            resolved.exact.cutoffs = Some(cutoffs);
            let summary = trace_summary(&tr);
            Ok(finish(resolved, tr.to_csv(), Some(&tr.metadata), summary))
        }
        Backend::Ehrenfest => {
            let mut ens = EnsembleConfig::new(cfg.ehrenfest.trajectories, cfg.ehrenfest.seed);
            ens.sampling = match cfg.ehrenfest.sampling.as_str() {
                "wigner-thermal" => Sampling::WignerThermal(cfg.ehrenfest.nbar.clone()),
                _ => Sampling::WignerGround,
            };
            ens.initial = InitialElectronic::State(cfg.run.initial_state);
            ens.tolerance = cfg.ehrenfest.tolerance;
            let tr = ensemble_average(&spec, &ens, &times)?;
            let summary = trace_summary(&tr);
            Ok(finish(resolved, tr.to_csv(), Some(&tr.metadata), summary))
        }
        Backend::IonIdeal | Backend::IonNoisy | Backend::Compile => {
            let hw = hardware(cfg)?;
            let sched = build_schedule_with(&spec, cfg.run.tau_fs, cfg.ion.steps, &hw, &cfg.ion.compile_options())?;
            resolved.hardware = Some(hw.clone());
            resolved.ion.hardware_file = None;
            resolved.ion.encoding = Some(sched.lowering.encoding);
            let head = vec![
                format!(
                    "{} pulses on {} ions, {} encoding",
                    sched.pulses.len(),
                    sched.ions,
                    sched.lowering.encoding.name()
                ),
                format!("operation time {:.3} ms per run", sched.operation_time_us * 1e-3),
            ];
            if cfg.run.backend == Backend::Compile {
                let mut m = TraceMetadata::new("compile");
                m.note("pulses", sched.pulses.len());
                m.note("ions", sched.ions);
                m.note("operation_time_us", sched.operation_time_us);
                return Ok(finish(resolved, sched.listing().to_text(), Some(&m), head));
            }
            let cutoffs = ion_cutoffs(cfg, &spec)?;
            resolved.ion.cutoffs = Some(cutoffs.clone());
            let em_cfg = EmulatorConfig {
                cutoffs,
                initial_state: cfg.run.initial_state,
                positivity: cfg.ion.positivity,
                dimension_limit: cfg.exact.dimension_limit,
            };
            let mut em = IonEmulator::new(&sched, em_cfg)?;
            let mut tr = if cfg.run.backend == Backend::IonIdeal {
                em.run_ideal(&times)?
            } else {
                let ch = NoiseChannels {
                    motional_dephasing: cfg.ion.motional_dephasing,
                    heating: cfg.ion.heating,
                    laser_dephasing: cfg.ion.laser_dephasing,
                    symmetric_heating: cfg.ion.symmetric_heating,
                    ..NoiseChannels::from_hardware(&hw)
                };
                let (tr, diag) = em.run_noisy(&times, &ch)?;
                let mut tr = tr;
                tr.metadata.note("max_trace_error", diag.max_trace_error);
                tr.metadata.note("positivity_checks", diag.positivity_checks);
                tr.metadata.note("positivity_violations", diag.positivity_violations);
                tr
            };
            if let Some(r) = cfg.ion.runs {
                tr = measure_with_shot_noise(&tr, &sched.lowering.readout(), r, cfg.ion.seed)?;
            }
            let mut summary = head;
            summary.extend(trace_summary(&tr));
            Ok(finish(resolved, tr.to_csv(), Some(&tr.metadata), summary))
        }
        Backend::Estimate => unreachable!("handled above"),
    }
}

fn estimate(cfg: &RunConfig) -> Result<(String, Vec<String>)> {
    if cfg.model.preset.as_deref() != Some("toy") {
        return Err(Error::InvalidArgument("the estimate back end needs the toy preset".into()));
    }
    let mut plan = ExperimentPlan::new(cfg.estimate.lambda_over_delta.clone(), cfg.estimate.modes.clone(), hardware(cfg)?);
    plan.time_points = cfg.estimate.time_points;
    plan.runs = cfg.estimate.runs;
    plan.steps = cfg.estimate.steps;
    plan.tau_fs = cfg.run.tau_fs;
    plan.options = cfg.ion.compile_options();
    let rows = experimental_time(&plan)?;
    let mut summary: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "λ/Δ={} N={}: total {:.2} s (overhead {:.2} s, longest run {:.3} ms)",
                r.lambda_over_delta, r.modes, r.total_s, r.overhead_s, r.max_run_operation_ms
            )
        })
        .collect();
    let mut modes = cfg.estimate.modes.clone();
    modes.dedup();
    for n in modes {
        let sub: Vec<_> = rows.iter().filter(|r| r.modes == n).cloned().collect();
        if let Ok(fit) = scaling_fit(&sub) {
            summary.push(format!(
                "N={n}: operation time ≈ {:.4} + {:.4}·√(λ/Δ) s (relative residual {:.3})",
                fit.intercept, fit.slope, fit.residual
            ));
        }
    }
    Ok((estimator::to_csv(&rows), summary))
}
