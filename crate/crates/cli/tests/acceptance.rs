//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset:
//! `cargo test --test acceptance -- 1 5 9`.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use vibronic_core::ehrenfest::{
    ensemble_average, evolve_states, mean_field_energy, sample_initial, trajectory_rng, EnsembleConfig, DEFAULT_TOLERANCE,
};
use vibronic_core::emulator::{sample_frequency, shot_noise, EmulatorConfig, IonEmulator, NoisyDiagnostics, PositivityCheck};
use vibronic_core::estimator::{experimental_time, scaling_fit, ExperimentPlan};
use vibronic_core::exact::{converge_cutoffs, propagate_fixed, PropagationRequest, DEFAULT_EPS_CUT};
use vibronic_core::hardware::{HardwareParams, NoiseChannels};
use vibronic_core::hilbert::marginal;
use vibronic_core::linalg::DenseMatrix;
use vibronic_core::model::{build_ci_model, build_toy_model, ci_adiabatic_surfaces};
use vibronic_core::numeric::C;
use vibronic_core::pulse::{build_schedule, PulseKind, PulseSchedule};
use vibronic_core::trace::{compare, uniform_grid};
use vibronic_core::units::{ev_to_rad_per_fs, HBAR_EV_FS};
use vibronic_core::{Spec, Trace};

const TAU: f64 = 400.0;
const POINTS: usize = 40;
const DELTA_EV: f64 = 0.08679;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn toy(n: usize, ratio: f64) -> Spec {
    build_toy_model::<f64>(n, ratio).unwrap()
}

fn times() -> Vec<f64> {
    uniform_grid(TAU, POINTS)
}

fn schedule(ratio: f64, steps: usize) -> PulseSchedule {
    build_schedule(&toy(2, ratio), TAU, steps, &HardwareParams::default()).unwrap()
}

fn ion_ideal(s: &PulseSchedule, cutoffs: &[usize]) -> Trace {
    IonEmulator::new(s, EmulatorConfig::new(cutoffs.to_vec())).unwrap().run_ideal(&times()).unwrap()
}

/// Converged exact reference for the N = 2 toy model.
fn exact_converged(ratio: f64) -> (Trace, Vec<usize>) {
    let req = PropagationRequest::new(toy(2, ratio)).with_times(times());
    let c = converge_cutoffs(&req, DEFAULT_EPS_CUT).unwrap();
    (c.trace, c.cutoffs)
}

fn donor_max_dev(a: &Trace, b: &Trace) -> f64 {
    compare(a, b).unwrap().max_abs[0]
}

fn donor_integrated(a: &Trace, b: &Trace) -> f64 {
    compare(a, b).unwrap().integrated_abs[0]
}

fn criterion_1() -> Outcome {
    let spec = toy(2, 0.0);
    let t = times();
    let w = DELTA_EV / HBAR_EV_FS;
    let rabi = |tr: &Trace| {
        t.iter().zip(&tr.populations).map(|(t, p)| (p[0] - (w * t / 2.0).cos().powi(2)).abs()).fold(0.0, f64::max)
    };
    let ex = rabi(&propagate_fixed(&PropagationRequest::new(spec.clone()).with_times(t.clone()), &[2, 2]).unwrap());
    let eh = rabi(&ensemble_average(&spec, &EnsembleConfig::new(64, 1), &t).unwrap());
    let ion = rabi(&ion_ideal(&schedule(0.0, 64), &[2, 2]));
    check(
        ex < 1e-6 && eh < 1e-6 && ion < 1e-3,
        format!("max |P_D − cos²| exact {ex:.2e}, ehrenfest {eh:.2e}, ion-ideal(S=64) {ion:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for ratio in [1.0, 5.0, 10.0, 20.0, 30.0] {
        let (ex, cut) = exact_converged(ratio);
        let d = donor_max_dev(&ex, &ion_ideal(&schedule(ratio, 600), &cut));
        ok &= d <= 0.01;
        parts.push(format!("λ={ratio}Δ {cut:?} {d:.4}"));
    }
    check(ok, format!("max |ΔP_D| (≤ 0.01): {}", parts.join("; ")))
}

fn criterion_3() -> Outcome {
    let (ex, cut) = exact_converged(5.0);
    let (s1, s2) = (60, 120);
    let d1 = donor_max_dev(&ex, &ion_ideal(&schedule(5.0, s1), &cut));
    let d2 = donor_max_dev(&ex, &ion_ideal(&schedule(5.0, s2), &cut));
    let ratio = d1 / d2;
    check(ratio >= 1.8, format!("λ=5Δ: deviation {d1:.3e} at S={s1}, {d2:.3e} at S={s2}, ratio {ratio:.2} (≥ 1.8)"))
}

/// Cutoffs of the full noisy λ = 30Δ run. The converged [42, 34] is out of
/// reach for a density matrix at desk scale.
const NOISY_CUTOFFS: [usize; 2] = [24, 20];

struct StrongNoisy {
    ideal: Trace,
    noisy: Trace,
    diag: NoisyDiagnostics,
    steps: usize,
}

fn strong_noisy() -> &'static StrongNoisy {
    static RUN: OnceLock<StrongNoisy> = OnceLock::new();
    RUN.get_or_init(|| {
        let s = schedule(30.0, 600);
        let mut cfg = EmulatorConfig::new(NOISY_CUTOFFS.to_vec());
        cfg.positivity = PositivityCheck::EveryStep;
        let mut em = IonEmulator::new(&s, cfg).unwrap();
        let ideal = em.run_ideal(&times()).unwrap();
        let (noisy, diag) = em.run_noisy(&times(), &NoiseChannels::from_hardware(&HardwareParams::default())).unwrap();
        StrongNoisy { ideal, noisy, diag, steps: s.steps }
    })
}

fn mean_occupation(em: &IonEmulator, rho: &DenseMatrix<f64>, mode: usize) -> f64 {
    let diag: Vec<f64> = (0..rho.rows()).map(|i| rho[(i, i)].re).collect();
    let layout = em.layout();
    marginal(layout, &diag, layout.mode_factor(mode)).iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

fn criterion_4() -> Outcome {
    let base = NoiseChannels::from_hardware(&HardwareParams::default());
    let quiet = NoiseChannels { motional_dephasing: false, heating: false, laser_dephasing: false, ..base };
    let s = schedule(1.0, 4);

    // Coherence between |0⟩ and |1⟩ of one mode after 10 ms of idling.
    let mut em = IonEmulator::new(&s, EmulatorConfig::new(vec![4, 4])).unwrap();
    let layout = em.layout().clone();
    let i0 = layout.index_of(&[0, 0, 0]).unwrap();
    let i1 = layout.index_of(&[0, 1, 0]).unwrap();
    let mut rho = DenseMatrix::zeros(em.dim(), em.dim());
    for (a, b) in [(i0, i0), (i0, i1), (i1, i0), (i1, i1)] {
        rho[(a, b)] = C::new(0.5, 0.0);
    }
    em.idle(&mut rho, 10_000.0, &NoiseChannels { motional_dephasing: true, ..quiet });
    let coherence = rho[(i0, i1)].norm() / (0.5 * (-10.0f64 / 36.0).exp()) - 1.0;

    let mut em = IonEmulator::new(&s, EmulatorConfig::new(vec![6, 6])).unwrap();
    let heat = NoiseChannels { heating: true, ..quiet };
    let mut heating = 0.0f64;
    for gt in [0.005, 0.02, 0.05] {
        let mut rho = em.initial_density();
        em.idle(&mut rho, gt / heat.heating_per_us(), &heat);
        heating = heating.max((mean_occupation(&em, &rho, 0) / gt - 1.0).abs());
    }

    let run = strong_noisy();
    let d = &run.diag;
    let ok = coherence.abs() < 0.01
        && heating < 0.02
        && d.max_trace_error < 1e-8
        && d.positivity_violations == 0
        && d.positivity_checks >= run.steps;
    check(
        ok,
        format!(
            "coherence rel. error {:.2e} (< 1%), heating rel. error {:.2e} (< 2%), λ=30Δ {:?}: trace error {:.1e}, {} positivity checks, {} violations",
            coherence.abs(),
            heating,
            NOISY_CUTOFFS,
            d.max_trace_error,
            d.positivity_checks,
            d.positivity_violations
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut parts = vec![format!("√(0.25/100) = {}", shot_noise(0.5, 100))];
    let mut ok = (shot_noise(0.5, 100) - 0.05).abs() < 1e-15;
    for (p, r) in [(0.5, 100), (0.3, 2500)] {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..1000).map(|_| sample_frequency(&mut rng, p, r).unwrap()).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        let rel = sd / (p * (1.0 - p) / r as f64).sqrt() - 1.0;
        ok &= rel.abs() < 0.1;
        parts.push(format!("(P={p}, R={r}) std {sd:.5} rel. error {rel:+.3}"));
    }
    check(ok, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let hw = HardwareParams::default();
    let op = |n, l| build_schedule(&toy(n, l), TAU, 600, &hw).unwrap().operation_time_us * 1e-3;
    let (weak, strong) = (op(2, 1.0), op(5, 30.0));
    let mut fits = Vec::new();
    let mut ok = (weak / 5.0 - 1.0).abs() < 0.25 && (strong / 57.0 - 1.0).abs() < 0.25;
    for n in 2..=5 {
        let rows = experimental_time(&ExperimentPlan::new(vec![1.0, 5.0, 10.0, 20.0, 30.0], vec![n], hw.clone())).unwrap();
        let fit = scaling_fit(&rows).unwrap();
        ok &= fit.residual < 0.1;
        fits.push(format!("{:.3}", fit.residual));
    }
    let sdf = |steps| {
        let s = build_schedule(&toy(2, 30.0), TAU, steps, &hw).unwrap();
        s.pulses.iter().filter(|p| p.kind == PulseKind::Sdf).map(|p| p.duration_us).sum::<f64>()
    };
    let invariance = sdf(1200) / sdf(600) - 1.0;
    ok &= invariance.abs() < 1e-9;
    check(
        ok,
        format!(
            "λ=Δ,N=2 {weak:.3} ms (5 ms); λ=30Δ,N=5 {strong:.3} ms (57 ms); fit residual N=2..5 [{}] (< 0.1); sdf time S vs 2S rel. diff {invariance:.1e}",
            fits.join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let run = strong_noisy();
    let strong = donor_integrated(&run.noisy, &run.ideal);
    let hw = HardwareParams::default();
    let base = NoiseChannels::from_hardware(&hw);
    let s = schedule(1.0, 600);
    let (_, cut) = exact_converged(1.0);
    let mut em = IonEmulator::new(&s, EmulatorConfig::new(cut.clone())).unwrap();
    let ideal = em.run_ideal(&times()).unwrap();
    let weak = donor_integrated(&em.run_noisy(&times(), &base).unwrap().0, &ideal);
    let ratio = strong / weak;
    let mut ok = ratio > 2.0;

    let scalings: [(&str, fn(&mut NoiseChannels, f64)); 3] = [
        ("motional dephasing", |c, x| {
            c.motional_dephasing = true;
            c.motional_dephasing_per_ms *= x
        }),
        ("heating", |c, x| {
            c.heating = true;
            c.heating_quanta_per_s *= x
        }),
        ("laser dephasing", |c, x| {
            c.laser_dephasing = true;
            c.laser_dephasing_per_ms *= x
        }),
    ];
    let mut parts = Vec::new();
    for (name, scale) in scalings {
        let d: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&x| {
                let mut ch = NoiseChannels { motional_dephasing: false, heating: false, laser_dephasing: false, ..base };
                scale(&mut ch, x);
                donor_integrated(&em.run_noisy(&times(), &ch).unwrap().0, &ideal)
            })
            .collect();
        ok &= d[0] > 0.0 && d[0] < d[1] && d[1] < d[2];
        parts.push(format!("{name} [{:.3e}, {:.3e}, {:.3e}]", d[0], d[1], d[2]));
    }
    check(
        ok,
        format!(
            "∫|ΔP_D| λ=30Δ {strong:.3} fs vs λ=Δ {weak:.3} fs, ratio {ratio:.2} (> 2); at λ=Δ {cut:?}, rates ×0.5/1/2: {}",
            parts.join("; ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut norm = 0.0f64;
    let mut energy = 0.0f64;
    for ratio in [1.0, 30.0] {
        let spec = toy(2, ratio);
        let cfg = EnsembleConfig::<f64>::new(1, 8);
        for r in 0..4 {
            let s0 = sample_initial(&cfg, &spec, &mut trajectory_rng(8, r)).unwrap();
            let e0 = mean_field_energy(&spec, &s0, 0.0);
            for s in evolve_states(&spec, &s0, &times(), DEFAULT_TOLERANCE).unwrap() {
                norm = norm.max((s.norm() - 1.0).abs());
                energy = energy.max(((mean_field_energy(&spec, &s, 0.0) - e0) / e0.abs()).abs());
            }
        }
    }

    let w = DELTA_EV / HBAR_EV_FS;
    let rabi = ensemble_average(&toy(2, 0.0), &EnsembleConfig::new(16, 3), &times()).unwrap();
    let kappa0 = times()
        .iter()
        .zip(&rabi.populations)
        .map(|(t, p)| (p[0] - (w * t / 2.0).cos().powi(2)).abs())
        .fold(0.0, f64::max);

    let spec = toy(2, 5.0);
    let mean_se = |r| {
        let tr = ensemble_average(&spec, &EnsembleConfig::new(r, 2024), &times()).unwrap();
        let se = tr.stderr.unwrap();
        se.iter().skip(1).map(|row| row[0]).sum::<f64>() / (se.len() - 1) as f64
    };
    let halving = mean_se(100) / mean_se(400);

    let (ex, _) = exact_converged(1.0);
    let eh = ensemble_average(&toy(2, 1.0), &EnsembleConfig::new(1000, 1), &times()).unwrap();
    let gap = donor_max_dev(&ex, &eh);

    let ok = norm < 1e-8 && energy < 1e-6 && kappa0 < 1e-6 && (halving / 2.0 - 1.0).abs() < 0.2 && gap > 0.1;
    check(
        ok,
        format!(
            "norm drift {norm:.1e}, rel. energy drift {energy:.1e}, κ=0 error {kappa0:.1e}, stderr ratio R=100/400 {halving:.3}, λ=Δ ehrenfest vs exact {gap:.3} (> 0.1)"
        ),
    )
}

fn criterion_9() -> Outcome {
    let ev = ev_to_rad_per_fs;
    let (kx, kz, nux, nuz) = (ev(0.02), ev(0.035), ev(0.08), ev(0.11));
    let spec = build_ci_model(kx, kz, nux, nuz).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut surf = 0.0f64;
    let mut gap = 0.0f64;
    for _ in 0..10_000 {
        let [x, z, px, pz]: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let (lo, hi) = ci_adiabatic_surfaces(&spec, x, z, px, pz).unwrap();
        let base = nux * (x * x + px * px) / 2.0 + nuz * (z * z + pz * pz) / 2.0;
        // Direct 2×2 diagonalisation of Σ_k √2 q_k κ_k.
        let h = |k: usize, q: f64| spec.kappa(k).scale(C::new(2f64.sqrt() * q, 0.0));
        let (hx, hz) = (h(0, x), h(1, z));
        let a = hx[(0, 0)] + hz[(0, 0)];
        let d = hx[(1, 1)] + hz[(1, 1)];
        let b = hx[(0, 1)] + hz[(0, 1)];
        let mean = (a.re + d.re) / 2.0;
        let half = (((a.re - d.re) / 2.0).powi(2) + b.norm_sqr()).sqrt();
        let scale = base.abs().max(1.0);
        surf = surf.max(((lo - base - mean + half).abs()).max((hi - base - mean - half).abs()) / scale);
        let closed = 2.0 * (2.0 * kx * kx * x * x + 2.0 * kz * kz * z * z).sqrt();
        gap = gap.max((hi - lo - closed).abs() / scale);
    }
    let origin = ci_adiabatic_surfaces(&spec, 0.0, 0.0, 0.0, 0.0).unwrap();
    check(
        surf < 1e-12 && gap < 1e-12 && origin.0 == origin.1,
        format!("10^4 points: surface error {surf:.1e}, gap identity error {gap:.1e}, origin {origin:?}"),
    )
}

fn vibronic(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vibronic"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("vibronic {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases: [(&str, &[&str]); 6] = [
        ("exact", &["run", "--preset", "toy", "--lambda-over-delta", "5"]),
        ("ehrenfest", &["run", "--preset", "toy", "--backend", "ehrenfest", "--trajectories", "50"]),
        ("ion-ideal", &["run", "--preset", "toy", "--backend", "ion-ideal", "--cutoffs", "8,8", "--steps", "100"]),
        (
            "ion-noisy",
            &["run", "--preset", "toy", "--backend", "ion-noisy", "--cutoffs", "6,6", "--steps", "60", "--runs", "100", "--seed", "3"],
        ),
        ("compile", &["compile", "--preset", "toy", "--modes", "3", "--lambda-over-delta", "10"]),
        ("estimate", &["estimate", "--preset", "toy", "--lambda-over-delta", "1,5,30", "--modes", "2,5"]),
    ];
    let mut done = Vec::new();
    for (name, args) in cases {
        let ext = if name == "compile" { "txt" } else { "csv" };
        let first = format!("{name}-a.{ext}");
        let second = format!("{name}-b.{ext}");
        let mut a: Vec<&str> = args.to_vec();
        a.extend(["--output", &first]);
        vibronic(&a, dir.path())?;
        let sidecar = format!("{name}-a.meta.toml");
        vibronic(&[args[0], "--config", &sidecar, "--output", &second], dir.path())?;
        let x = std::fs::read(dir.path().join(&first)).map_err(|e| e.to_string())?;
        let y = std::fs::read(dir.path().join(&second)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{name}: re-run from the sidecar differs"));
        }
        done.push(name);
    }
    Ok(format!("bit-identical re-runs from the sidecar: {}", done.join(", ")))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "analytic Rabi limit", criterion_1),
        (2, "ideal emulator vs exact", criterion_2),
        (3, "Trotter order", criterion_3),
        (4, "Lindblad correctness", criterion_4),
        (5, "shot-noise statistics", criterion_5),
        (6, "experimental-time accounting", criterion_6),
        (7, "noise-damage monotonicity", criterion_7),
        (8, "Ehrenfest properties", criterion_8),
        (9, "CI surface formula", criterion_9),
        (10, "reproducibility loop", criterion_10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("PASS {n:>2} {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name} ({secs:.1} s): {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
