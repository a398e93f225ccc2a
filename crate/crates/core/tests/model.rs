use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vibronic_core::exact::{propagate_fixed, PropagationRequest};
use vibronic_core::linalg::DenseMatrix;
use vibronic_core::model::*;
use vibronic_core::numeric::{cr, C};
use vibronic_core::trace::uniform_grid;
use vibronic_core::units::{ev_to_rad_per_fs, rad_per_fs_to_ev, HBAR_EV_FS};

fn ev(x: f64) -> f64 {
    ev_to_rad_per_fs(x)
}

#[test]
fn reorganization_energy_inversions() {
    let nu = [ev(0.08679), ev(0.09919)];
    assert_eq!(reorganization_energy_for(&nu, 0.0).unwrap(), 0.0);
    let l1 = rad_per_fs_to_ev(reorganization_energy_for(&nu, ev(0.06338)).unwrap());
    assert!((l1 - 0.08679).abs() < 2e-5, "{l1}");
    let l30 = rad_per_fs_to_ev(reorganization_energy_for(&nu, ev(0.34717)).unwrap());
    assert!((l30 / 0.08679 - 30.0).abs() < 2e-3, "{l30}");
}

#[test]
fn toy_model_examples() {
    let s = build_toy_model::<f64>(2, 1.0).unwrap();
    let nu: Vec<f64> = s.nu().iter().map(|&w| rad_per_fs_to_ev(w)).collect();
    assert!((nu[0] - 0.08679).abs() < 1e-12 && (nu[1] - 0.09919).abs() < 1e-12);
    // Stored κ_DD is κ/2.
    let kappa = 2.0 * rad_per_fs_to_ev(s.kappa(0)[(0, 0)].re);
    assert!((kappa - 0.063382).abs() < 1e-6, "{kappa}");

    let s0 = build_toy_model::<f64>(2, 0.0).unwrap();
    assert!(s0.kappa_all().iter().all(|k| k.max_abs() == 0.0));

    let s5 = build_toy_model::<f64>(5, 30.0).unwrap();
    let want = [0.08679, 0.08989, 0.09299, 0.09609, 0.09919];
    for (w, x) in s5.nu().iter().zip(want) {
        assert!((rad_per_fs_to_ev(*w) - x).abs() < 1e-12);
    }
    let one = build_toy_model::<f64>(1, 1.0).unwrap();
    assert!((rad_per_fs_to_ev(one.nu()[0]) - 0.08679).abs() < 1e-12);
}

#[test]
fn ci_surfaces_match_diagonalisation() {
    let (kx, kz, nux, nuz) = (ev(0.02), ev(0.035), ev(0.08), ev(0.11));
    let spec = build_ci_model(kx, kz, nux, nuz).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10_000 {
        let [x, z, px, pz]: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        // Diagonalise Σ_k √2 q_k κ_k directly.
        let q = [x, z];
        let mut h = [[C::new(0.0, 0.0); 2]; 2];
        for (k, qk) in q.iter().enumerate() {
            for (i, row) in h.iter_mut().enumerate() {
                for (j, e) in row.iter_mut().enumerate() {
                    *e += spec.kappa(k)[(i, j)] * (2f64.sqrt() * qk);
                }
            }
        }
        let mean = (h[0][0].re + h[1][1].re) / 2.0;
        let half = (((h[0][0].re - h[1][1].re) / 2.0).powi(2) + h[0][1].norm_sqr()).sqrt();
        let base = nux * (x * x + px * px) / 2.0 + nuz * (z * z + pz * pz) / 2.0;
        let (lo, hi) = ci_adiabatic_surfaces(&spec, x, z, px, pz).unwrap();
        let scale = base.abs().max(1.0);
        assert!((lo - (base + mean - half)).abs() < 1e-12 * scale);
        assert!((hi - (base + mean + half)).abs() < 1e-12 * scale);
        let gap = 2.0 * (2.0 * kx * kx * x * x + 2.0 * kz * kz * z * z).sqrt();
        assert!((hi - lo - gap).abs() < 1e-12 * scale);
    }
}

#[test]
fn ci_origin_and_axis_values() {
    let k = ev(0.02);
    let nu = ev(0.08);
    let spec = build_ci_model(k, k, nu, nu).unwrap();
    assert_eq!(ci_adiabatic_surfaces(&spec, 0.0, 0.0, 0.0, 0.0).unwrap(), (0.0, 0.0));
    let (lo, hi) = ci_adiabatic_surfaces(&spec, 1.0, 0.0, 0.0, 0.0).unwrap();
    assert!((lo - (nu / 2.0 - 2f64.sqrt() * k)).abs() < 1e-15);
    assert!((hi - (nu / 2.0 + 2f64.sqrt() * k)).abs() < 1e-15);
    let p = ci_parameters(&spec).unwrap();
    assert_eq!((p.kx, p.kz, p.nux, p.nuz), (k, k, nu, nu));
}

#[test]
fn ci_without_tuning_coupling_keeps_donor() {
    let spec = build_ci_model(0.0, ev(0.05), ev(0.08), ev(0.08)).unwrap();
    let times = uniform_grid(200.0, 11);
    let tr = propagate_fixed(&PropagationRequest::new(spec).with_times(times), &[2, 14]).unwrap();
    for p in &tr.populations {
        assert!((p[0] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn vaet_correlation_flag() {
    let nu = [ev(0.05), ev(0.1), ev(0.15)];
    let build = |kd2: f64, ka2: f64| build_vaet_model(0.0, ev(0.1), ev(0.02), ev(0.02), kd2, ka2, ev(0.02), nu).unwrap();
    assert_eq!(vaet_mode_correlation(&build(ev(0.03), ev(0.03))).unwrap(), ModeCorrelation::Correlated);
    assert_eq!(vaet_mode_correlation(&build(ev(0.03), ev(-0.03))).unwrap(), ModeCorrelation::AntiCorrelated);
    assert_eq!(vaet_mode_correlation(&build(0.0, ev(-0.03))).unwrap(), ModeCorrelation::Uncoupled);
}

#[test]
fn vaet_without_coupling_is_rabi() {
    let spec = build_vaet_model(0.0, 0.0, ev(0.05), 0.0, 0.0, 0.0, 0.0, [ev(0.05), ev(0.1), ev(0.15)]).unwrap();
    let times = uniform_grid(100.0, 21);
    let tr = propagate_fixed(&PropagationRequest::new(spec).with_times(times.clone()), &[2, 2, 2]).unwrap();
    let w = 0.05 / HBAR_EV_FS;
    for (t, p) in times.iter().zip(&tr.populations) {
        assert!((p[0] - (w * t / 2.0).cos().powi(2)).abs() < 1e-7);
    }
}

fn plet(field: FieldSpec<f64>, v2: C<f64>) -> LvcmSpec<f64> {
    let omega = [0.0, ev(2.0), ev(2.0), ev(1.95)];
    build_plet_model(omega, [1.0, 0.0], [0.0, 1.0], cr(ev(0.02)), v2, field, true).unwrap()
}

fn field(pol: [C<f64>; 2], amp: f64) -> FieldSpec<f64> {
    FieldSpec { polarization: pol, amplitude: ev(amp), carrier: ev(2.0), envelope: Envelope::Constant }
}

#[test]
fn plet_selection_rule_and_dark_field() {
    let times = uniform_grid(200.0, 21);
    let along_mu1 = plet(field([cr(1.0), cr(0.0)], 0.04), cr(0.0));
    let tr = propagate_fixed(&PropagationRequest::new(along_mu1).with_times(times.clone()), &[]).unwrap();
    assert!(tr.populations.iter().all(|p| p[2] < 1e-12));
    assert!(tr.populations.iter().any(|p| p[1] > 1e-3));

    let dark = plet(field([cr(1.0), cr(0.0)], 0.0), cr(ev(0.02)));
    let tr = propagate_fixed(&PropagationRequest::new(dark).with_times(times), &[]).unwrap();
    assert!(tr.populations.iter().all(|p| (p[0] - 1.0).abs() < 1e-12));
}

#[test]
fn plet_polarizations_interfere() {
    let times = uniform_grid(200.0, 41);
    let run = |left| {
        let spec = illustrative_plet::<f64>(left).unwrap();
        propagate_fixed(&PropagationRequest::new(spec).with_times(times.clone()), &[]).unwrap()
    };
    let (l, r) = (run(true), run(false));
    let diff = l.populations.iter().zip(&r.populations).map(|(a, b)| (a[3] - b[3]).abs()).fold(0.0, f64::max);
    assert!(diff > 1e-3, "acceptor traces differ by only {diff}");
}

fn hermitian(m: usize, vals: &[f64]) -> DenseMatrix<f64> {
    let mut d = DenseMatrix::zeros(m, m);
    let mut it = vals.iter().cycle();
    for i in 0..m {
        d[(i, i)] = cr(*it.next().unwrap());
        for j in i + 1..m {
            let z = C::new(*it.next().unwrap(), *it.next().unwrap());
            d[(i, j)] = z;
            d[(j, i)] = z.conj();
        }
    }
    d
}

proptest! {
    #[test]
    fn hermitian_inputs_accepted_and_broken_ones_rejected(
        m in 2usize..5,
        vals in prop::collection::vec(-0.2f64..0.2, 16),
        kvals in prop::collection::vec(-0.1f64..0.1, 16),
        nu in 0.01f64..0.3,
        kick in 0.01f64..0.1,
    ) {
        let d = hermitian(m, &vals);
        let k = hermitian(m, &kvals);
        prop_assert!(LvcmSpec::new(d.clone(), vec![k.clone()], vec![nu], None).is_ok());
        let mut bad = d.clone();
        bad[(0, 1)] += C::new(kick, 0.0);
        prop_assert!(LvcmSpec::new(bad, vec![k.clone()], vec![nu], None).is_err());
        let mut badk = k;
        badk[(1, 0)] += C::new(0.0, kick);
        prop_assert!(LvcmSpec::new(d, vec![badk], vec![nu], None).is_err());
    }

    #[test]
    fn reorganization_energy_is_quadratic(kappa in 1e-4f64..1.0, nu in prop::collection::vec(0.01f64..1.0, 1..6)) {
        let a = reorganization_energy_for(&nu, kappa).unwrap();
        let b = reorganization_energy_for(&nu, 2.0 * kappa).unwrap();
        prop_assert_eq!(b, 4.0 * a);
    }

    #[test]
    fn toy_model_recovers_lambda(n in 1usize..6, ratio in 0.01f64..40.0) {
        let spec = build_toy_model::<f64>(n, ratio).unwrap();
        let kappa = 2.0 * spec.kappa(0)[(0, 0)].re;
        let lambda = reorganization_energy(&spec, kappa).unwrap();
        let got = lambda / ev(TOY_DELTA_EV);
        prop_assert!((got / ratio - 1.0).abs() < 1e-12, "{} vs {}", got, ratio);
    }
}
