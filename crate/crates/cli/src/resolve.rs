//! Turns command-line flags (and an optional config file) into a
//! [`RunConfig`].

use std::fs;

use vibronic_core::config::{toy_model_file, Backend, ModelFile, ModelSection, RunConfig};
use vibronic_core::emulator::PositivityCheck;
use vibronic_core::exact::Frame;
use vibronic_core::hardware::HardwareParams;
use vibronic_core::pulse::{Encoding, FrameMode, TermOrder};
use vibronic_core::{Error, Result};

use crate::args::RunArgs;

/// λ/Δ values of the toy-model preset grid.
pub const TOY_LAMBDA_GRID: [f64; 5] = [1.0, 5.0, 10.0, 20.0, 30.0];
/// Mode counts of the toy-model preset grid.
pub const TOY_MODES_GRID: [usize; 4] = [2, 3, 4, 5];

pub(crate) fn flag_error(flag: &str, message: impl Into<String>) -> Error {
    Error::Parse { line: 0, key: format!("--{flag}"), message: message.into() }
}

fn choice<T>(flag: &str, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
    parse(value).ok_or_else(|| flag_error(flag, format!("unrecognised value `{value}`")))
}

/// Model section for a named preset.
pub fn preset_model(name: &str, lambda: Option<f64>, modes: Option<usize>, pol: Option<&str>) -> Result<ModelFile> {
    let extra = |flag: &str| flag_error(flag, format!("does not apply to the {name} preset"));
    if name != "toy" {
        if lambda.is_some() {
            return Err(extra("lambda-over-delta"));
        }
        if modes.is_some() {
            return Err(extra("modes"));
        }
    }
    if name != "plet" && pol.is_some() {
        return Err(extra("polarization"));
    }
    let model = match name {
        "toy" => return Ok(toy_model_file(modes.unwrap_or(2), lambda.unwrap_or(1.0))),
        "ci" | "vaet" => ModelSection { preset: Some(name.into()), ..Default::default() },
        "plet" => ModelSection {
            preset: Some(name.into()),
            polarization: Some(pol.unwrap_or("left").into()),
            ..Default::default()
        },
        other => return Err(flag_error("preset", format!("unknown preset `{other}` (toy, ci, vaet, plet)"))),
    };
    Ok(ModelFile { model, ..Default::default() })
}

fn single<T: Copy>(flag: &str, v: &[T]) -> Result<Option<T>> {
    match v {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => Err(flag_error(flag, "takes a single value here; use `sweep` or `estimate` for grids")),
    }
}

/// Builds the configuration a command will run. `forced` is the back end
/// implied by the subcommand. For `estimate`, `--lambda-over-delta` and
/// `--modes` are grids.
pub fn resolve(a: &RunArgs, forced: Option<Backend>) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Parse { line: 0, key: "--config".into(), message: format!("{}: {e}", path.display()) })?;
            RunConfig::from_toml(&text)?
        }
        None => {
            if a.preset.is_none() {
                return Err(flag_error("preset", "pass --config or --preset"));
            }
            RunConfig::new(ModelFile::default(), Backend::Exact)
        }
    };
    if let Some(b) = &a.backend {
        let b = Backend::parse(b).map_err(|e| flag_error("backend", e.to_string()))?;
        if forced.is_some_and(|f| f != b) {
            return Err(flag_error("backend", "conflicts with the subcommand"));
        }
        cfg.run.backend = b;
    }
    if let Some(f) = forced {
        cfg.run.backend = f;
    }
    let grid = cfg.run.backend == Backend::Estimate;
    let (lambda, modes) = if grid {
        if !a.lambda_over_delta.is_empty() {
            cfg.estimate.lambda_over_delta = a.lambda_over_delta.clone();
        }
        if !a.modes.is_empty() {
            cfg.estimate.modes = a.modes.clone();
        }
        (a.lambda_over_delta.first().copied(), a.modes.first().copied())
    } else {
        (single("lambda-over-delta", &a.lambda_over_delta)?, single("modes", &a.modes)?)
    };
    if let Some(p) = &a.preset {
        let m = preset_model(p, lambda, modes, a.polarization.as_deref())?;
        cfg.model = m.model;
        cfg.modes = m.modes;
        cfg.drive = m.drive;
    } else if lambda.is_some() || modes.is_some() || a.polarization.is_some() {
        match cfg.model.preset.as_deref() {
            Some("toy") => {
                if let Some(l) = lambda {
                    cfg.model.lambda_over_delta = Some(l);
                }
                if let Some(n) = modes {
                    cfg.model.modes = Some(n);
                }
            }
            Some("plet") if lambda.is_none() && modes.is_none() => {
                cfg.model.polarization = a.polarization.clone();
            }
            _ => return Err(flag_error("preset", "model flags need a matching preset")),
        }
    }
    if grid && cfg.model.preset.as_deref() == Some("toy") {
        if cfg.estimate.lambda_over_delta.is_empty() {
            cfg.estimate.lambda_over_delta =
                if a.preset.is_some() && lambda.is_none() { TOY_LAMBDA_GRID.to_vec() } else { vec![cfg.model.lambda_over_delta.unwrap_or(1.0)] };
        }
        if cfg.estimate.modes.is_empty() {
            cfg.estimate.modes = if a.preset.is_some() && modes.is_none() { TOY_MODES_GRID.to_vec() } else { vec![cfg.model.modes.unwrap_or(2)] };
        }
    }

    if let Some(t) = a.tau_fs {
        cfg.run.tau_fs = t;
    }
    if let Some(g) = a.grid_points {
        cfg.run.grid_points = g;
    }
    if let Some(i) = a.initial_state {
        cfg.run.initial_state = i;
    }
    if let Some(o) = &a.output {
        cfg.run.output = Some(o.display().to_string());
    }
    if !a.cutoffs.is_empty() {
        match cfg.run.backend {
            Backend::IonIdeal | Backend::IonNoisy => cfg.ion.cutoffs = Some(a.cutoffs.clone()),
            _ => cfg.exact.cutoffs = Some(a.cutoffs.clone()),
        }
    }
    if let Some(e) = a.eps_cut {
        cfg.exact.eps_cut = e;
    }
    if let Some(e) = a.eps_int {
        cfg.exact.eps_int = e;
    }
    if let Some(f) = &a.frame {
        cfg.exact.frame = choice("frame", f, |s| match s {
            "lab" => Some(Frame::Lab),
            "interaction" => Some(Frame::Interaction),
            _ => None,
        })?;
    }
    if let Some(r) = a.trajectories {
        cfg.ehrenfest.trajectories = r;
    }
    if let Some(s) = a.seed {
        cfg.ehrenfest.seed = s;
        cfg.ion.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.ion.steps = s;
        cfg.estimate.steps = s;
    }
    if let Some(r) = a.runs {
        if grid {
            cfg.estimate.runs = r;
        } else {
            cfg.ion.runs = Some(r);
        }
    }
    if let Some(t) = a.time_points {
        cfg.estimate.time_points = t;
    }
    if let Some(e) = &a.encoding {
        cfg.ion.encoding = Some(Encoding::parse(e).map_err(|e| flag_error("encoding", e.to_string()))?);
    }
    if let Some(f) = &a.frame_mode {
        cfg.ion.frame_mode = choice("frame-mode", f, |s| match s {
            "software" => Some(FrameMode::Software),
            "physical" => Some(FrameMode::Physical),
            _ => None,
        })?;
    }
    if let Some(o) = &a.order {
        cfg.ion.order = choice("order", o, |s| match s {
            "canonical" => Some(TermOrder::Canonical),
            "reversed" => Some(TermOrder::Reversed),
            _ => None,
        })?;
    }
    if let Some(p) = &a.positivity {
        cfg.ion.positivity = PositivityCheck::parse(p).map_err(|e| flag_error("positivity", e.to_string()))?;
    }
    if let Some(h) = &a.hardware {
        cfg.ion.hardware_file = Some(h.display().to_string());
        cfg.hardware = None;
    }
    if a.no_motional_dephasing {
        cfg.ion.motional_dephasing = false;
    }
    if a.no_heating {
        cfg.ion.heating = false;
    }
    if a.no_laser_dephasing {
        cfg.ion.laser_dephasing = false;
    }
    if a.upward_heating {
        cfg.ion.symmetric_heating = false;
    }
    // Round trip through the text form so flag values get the same checks
    // as a file.
    RunConfig::from_toml(&cfg.to_toml())
}

/// Hardware parameters: inline table, then file, then defaults.
pub fn hardware(cfg: &RunConfig) -> Result<HardwareParams> {
    if let Some(h) = &cfg.hardware {
        return Ok(h.clone());
    }
    match &cfg.ion.hardware_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Parse { line: 0, key: "hardware_file".into(), message: format!("{path}: {e}") })?;
            HardwareParams::from_toml(&text)
        }
        None => Ok(HardwareParams::default()),
    }
}
