use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vibronic_core::emulator::*;
use vibronic_core::exact::{propagate_fixed, PropagationRequest};
use vibronic_core::hardware::{HardwareParams, NoiseChannels};
use vibronic_core::hilbert::marginal;
use vibronic_core::linalg::DenseMatrix;
use vibronic_core::model::build_toy_model;
use vibronic_core::numeric::C;
use vibronic_core::pulse::{build_schedule, PulseSchedule};
use vibronic_core::trace::{compare, uniform_grid};
use vibronic_core::units::HBAR_EV_FS;

fn schedule(n: usize, ratio: f64, tau: f64, steps: usize) -> PulseSchedule {
    build_schedule(&build_toy_model::<f64>(n, ratio).unwrap(), tau, steps, &HardwareParams::default()).unwrap()
}

fn only(f: impl FnOnce(&mut NoiseChannels)) -> NoiseChannels {
    let hw = NoiseChannels::from_hardware(&HardwareParams::default());
    let mut ch = NoiseChannels { motional_dephasing: false, heating: false, laser_dephasing: false, ..hw };
    f(&mut ch);
    ch
}

fn mean_occupation(em: &IonEmulator, rho: &DenseMatrix<f64>, mode: usize) -> f64 {
    let diag: Vec<f64> = (0..rho.rows()).map(|i| rho[(i, i)].re).collect();
    let layout = em.layout();
    marginal(layout, &diag, layout.mode_factor(mode)).iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

#[test]
fn decoupled_limit_is_rabi() {
    let s = schedule(2, 0.0, 400.0, 64);
    let em = IonEmulator::new(&s, EmulatorConfig::new(vec![2, 2])).unwrap();
    let times = uniform_grid(400.0, 41);
    let tr = em.run_ideal(&times).unwrap();
    let w = 0.08679 / HBAR_EV_FS;
    for (t, p) in times.iter().zip(&tr.populations) {
        assert!((p[0] - (w * t / 2.0).cos().powi(2)).abs() < 1e-10, "t={t}");
    }
}

#[test]
fn ideal_emulation_tracks_exact_at_weak_coupling() {
    let s = schedule(2, 1.0, 400.0, 600);
    let cut = vec![8, 8];
    let times = uniform_grid(400.0, 40);
    let em = IonEmulator::new(&s, EmulatorConfig::new(cut.clone())).unwrap();
    let ion = em.run_ideal(&times).unwrap();
    let req = PropagationRequest::new(build_toy_model::<f64>(2, 1.0).unwrap()).with_times(times);
    let ex = propagate_fixed(&req, &cut).unwrap();
    let dev = compare(&ion, &ex).unwrap().overall_max();
    assert!(dev <= 0.01, "{dev}");
}

#[test]
fn noiseless_density_run_matches_state_vector() {
    let s = schedule(2, 5.0, 100.0, 40);
    let times = uniform_grid(100.0, 9);
    let mut em = IonEmulator::new(&s, EmulatorConfig::new(vec![8, 6])).unwrap();
    let pure = em.run_ideal(&times).unwrap();
    let (mixed, diag) = em.run_noisy(&times, &NoiseChannels::off()).unwrap();
    assert!(pure.max_deviation(&mixed).unwrap() < 1e-8);
    assert!(diag.max_trace_error < 1e-8);
}

#[test]
fn zero_angle_pulse_without_noise_is_identity() {
    let s = schedule(2, 5.0, 100.0, 4);
    let mut em = IonEmulator::new(&s, EmulatorConfig::new(vec![4, 4])).unwrap();
    let (rho0, _) = em.run_schedule(&NoiseChannels::off(), 2).unwrap();
    let mut p = s.pulses[0].clone();
    p.angle = 0.0;
    let mut rho = rho0.clone();
    em.lindblad_step(&mut rho, &p, &NoiseChannels::off()).unwrap();
    assert!(rho.max_abs_diff(&rho0) < 1e-15);
}

#[test]
fn no_steps_leaves_donor_populated() {
    let s = schedule(2, 5.0, 100.0, 4);
    let mut em = IonEmulator::new(&s, EmulatorConfig::new(vec![4, 4])).unwrap();
    let ch = NoiseChannels::from_hardware(&HardwareParams::default());
    let (rho, _) = em.run_schedule(&ch, 0).unwrap();
    let diag: Vec<f64> = (0..rho.rows()).map(|i| rho[(i, i)].re).collect();
    let donor = marginal(em.layout(), &diag, 0)[0];
    assert!((donor - 1.0).abs() < 1e-15);
}

#[test]
fn motional_coherence_decays_at_the_dephasing_rate() {
    let s = schedule(2, 1.0, 100.0, 4);
    let mut em = IonEmulator::new(&s, EmulatorConfig::new(vec![4, 4])).unwrap();
    let layout = em.layout().clone();
    let i0 = layout.index_of(&[0, 0, 0]).unwrap();
    let i1 = layout.index_of(&[0, 1, 0]).unwrap();
    let mut rho = DenseMatrix::zeros(em.dim(), em.dim());
    for (a, b) in [(i0, i0), (i0, i1), (i1, i0), (i1, i1)] {
        rho[(a, b)] = C::new(0.5, 0.0);
    }
    let ch = only(|c| c.motional_dephasing = true);
    em.idle(&mut rho, 10_000.0, &ch);
    let want = 0.5 * (-10.0f64 / 36.0).exp();
    assert!((rho[(i0, i1)].norm() / want - 1.0).abs() < 0.01);
    assert!((rho[(i0, i0)].re - 0.5).abs() < 1e-14);
}

#[test]
fn heating_from_ground_grows_linearly() {
    let s = schedule(2, 1.0, 100.0, 4);
    let mut em = IonEmulator::new(&s, EmulatorConfig::new(vec![6, 6])).unwrap();
    let ch = only(|c| c.heating = true);
    let rate = ch.heating_per_us();
    for gt in [0.005, 0.02, 0.05] {
        let mut rho = em.initial_density();
        em.idle(&mut rho, gt / rate, &ch);
        for k in 0..2 {
            let n = mean_occupation(&em, &rho, k);
            assert!((n / gt - 1.0).abs() < 0.02, "Γt={gt}: ⟨n⟩={n}");
        }
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }
    // Upward-only heating follows ⟨n⟩ = e^{Γt} − 1 instead.
    let up = NoiseChannels { symmetric_heating: false, ..ch };
    let mut rho = em.initial_density();
    em.idle(&mut rho, 0.05 / rate, &up);
    assert!((mean_occupation(&em, &rho, 0) - 0.05f64.exp_m1()).abs() < 1e-6);
}

#[test]
fn noisy_run_keeps_trace_and_positivity_on_every_pulse() {
    let s = schedule(2, 10.0, 100.0, 30);
    let mut cfg = EmulatorConfig::new(vec![8, 6]);
    cfg.positivity = PositivityCheck::EveryPulse;
    let mut em = IonEmulator::new(&s, cfg).unwrap();
    let ch = NoiseChannels::from_hardware(&HardwareParams::default());
    let (tr, diag) = em.run_noisy(&uniform_grid(100.0, 6), &ch).unwrap();
    assert!(diag.max_trace_error < 1e-8, "{}", diag.max_trace_error);
    assert_eq!(diag.positivity_violations, 0);
    assert!(diag.positivity_checks >= s.pulses.len());
    for p in &tr.populations {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }
}

fn damage(em: &mut IonEmulator, ideal: &vibronic_core::Trace, times: &[f64], ch: &NoiseChannels) -> f64 {
    let (noisy, _) = em.run_noisy(times, ch).unwrap();
    compare(&noisy, ideal).unwrap().integrated_abs[0]
}

#[test]
fn noise_damage_grows_with_each_rate() {
    let s = schedule(2, 5.0, 200.0, 60);
    let times = uniform_grid(200.0, 11);
    let mut em = IonEmulator::new(&s, EmulatorConfig::new(vec![8, 6])).unwrap();
    let ideal = em.run_ideal(&times).unwrap();
    let base = NoiseChannels::from_hardware(&HardwareParams::default());
    let scalings: [fn(&mut NoiseChannels, f64); 3] = [
        |c, x| {
            c.motional_dephasing = true;
            c.motional_dephasing_per_ms *= x
        },
        |c, x| {
            c.heating = true;
            c.heating_quanta_per_s *= x
        },
        |c, x| {
            c.laser_dephasing = true;
            c.laser_dephasing_per_ms *= x
        },
    ];
    for scale in scalings {
        let d: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&x| {
                let mut ch = NoiseChannels { motional_dephasing: false, heating: false, laser_dephasing: false, ..base };
                scale(&mut ch, x);
                damage(&mut em, &ideal, &times, &ch)
            })
            .collect();
        assert!(d[0] > 0.0 && d[0] < d[1] && d[1] < d[2], "{d:?}");
    }
}

#[test]
fn shot_noise_values() {
    assert!((shot_noise(0.5, 100) - 0.05).abs() < 1e-15);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    assert_eq!(sample_frequency(&mut rng, 1.0, 100).unwrap(), 1.0);
    assert_eq!(shot_noise(1.0, 100), 0.0);
}

#[test]
fn shot_noise_spread_matches_binomial() {
    for (p, r) in [(0.5, 100), (0.3, 2500)] {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let xs: Vec<f64> = (0..1000).map(|_| sample_frequency(&mut rng, p, r).unwrap()).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        let want = (p * (1.0 - p) / r as f64).sqrt();
        assert!((sd / want - 1.0).abs() < 0.1, "p={p}: {sd} vs {want}");
    }
}

#[test]
fn sampled_traces_are_seeded() {
    let s = schedule(2, 5.0, 100.0, 20);
    let em = IonEmulator::new(&s, EmulatorConfig::new(vec![6, 6])).unwrap();
    let tr = em.run_ideal(&uniform_grid(100.0, 5)).unwrap();
    let readout = s.lowering.readout();
    let a = measure_with_shot_noise(&tr, &readout, 100, 7).unwrap();
    let b = measure_with_shot_noise(&tr, &readout, 100, 7).unwrap();
    assert_eq!(a, b);
    let c = measure_with_shot_noise(&tr, &readout, 100, 8).unwrap();
    assert_ne!(a.sampled, c.sampled);
    let sampled = a.sampled.unwrap();
    for row in &sampled.values {
        assert!((row[0] + row[1] - 1.0).abs() < 1e-15);
    }
    assert!(measure_with_shot_noise(&tr, &readout, 0, 7).is_err());
}
