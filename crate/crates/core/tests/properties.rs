use partwave_core::nld::{kappa_sigma, PotentialSpec, RadialShape};
use partwave_core::propagators::{DiracCnSolver, WaveCnSolver};
use partwave_core::radial::{hankel_transform, RadialGrid, RadialProfile, Side};
use partwave_core::specfun::q_poly_eval;
use partwave_core::sphere::{lambda_omega_apply, sht_forward, sht_inverse, DiracChannelIndex, ScalarCoeffs, SphereGrid};
use partwave_core::verify::{EnsembleSpec, MemberRecord, RatioStudy};
use partwave_core::Complex64;
use proptest::prelude::*;
use rand::Rng;
use std::sync::Arc;

fn coeffs(band: usize, seed: &[f64]) -> ScalarCoeffs {
    let mut c = ScalarCoeffs::zeros(band);
    let mut i = 0;
    for k in 0..=band {
        for m in -(k as i64)..=k as i64 {
            let a = seed[i % seed.len()];
            let b = seed[(i + 1) % seed.len()];
            c.set_m(k, m, Complex64::new(a, b - 0.3 * m as f64) / (1.0 + k as f64).powi(2));
            i += 1;
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn q_kernel_bounded_by_one_in_three_dimensions(k in 0usize..120, x in -1.0f64..=1.0) {
        prop_assert!(q_poly_eval(k, 3, x).unwrap().abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn hankel_round_trip_and_plancherel(k in 0usize..6, n in 3usize..6, c in 2.0f64..3.0, w in 0.15f64..0.3, ph in 0.0f64..6.0) {
        let fgrid = Arc::new(RadialGrid::uniform_to(6.0, 0.02).unwrap());
        // Even n leaves an odd-power endpoint term near r = 0, so it needs a finer r grid.
        let dr = if n % 2 == 1 { 0.2 } else { 0.05 };
        let rgrid = Arc::new(RadialGrid::uniform_to(75.0, dr).unwrap());
        let f = RadialProfile::from_fn(fgrid.clone(), Side::Frequency, |q| Complex64::from_polar((-(q - c).powi(2) / (2.0 * w * w)).exp(), ph * q));
        let g = hankel_transform(&f, k, n, &rgrid).unwrap();
        let back = hankel_transform(&g, k, n, &fgrid).unwrap();
        let err: f64 = f.values.iter().zip(&back.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-6, "round trip {err}");
        let p = (n - 1) as f64;
        let ratio = g.weighted_l2(p).powi(2) / ((2.0 * std::f64::consts::PI).powi(n as i32) * f.weighted_l2(p).powi(2));
        prop_assert!((ratio - 1.0).abs() < 1e-6, "plancherel {ratio}");
    }

    #[test]
    fn sht_round_trip(band in 1usize..10, seed in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let grid = SphereGrid::new(band).unwrap();
        let c = coeffs(band, &seed);
        let back = sht_forward(&sht_inverse(&c, &grid).unwrap(), &grid, band).unwrap();
        let err = c.as_slice().iter().zip(back.as_slice()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn angular_powers_compose(a in -1.0f64..2.0, b in -1.0f64..2.0, seed in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let c = coeffs(8, &seed);
        let two = lambda_omega_apply(&lambda_omega_apply(&c, a), b);
        let one = lambda_omega_apply(&c, a + b);
        let err = two.as_slice().iter().zip(one.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12 * (1.0 + one.norm_sq().sqrt()));
    }

    #[test]
    fn dirac_crank_nicolson_is_unitary(kappa in prop::sample::select(vec![-3, -2, -1, 1, 2, 3]), amp in -0.05f64..0.05, c in 2.0f64..8.0) {
        let ch = DiracChannelIndex::new(2 * i32::abs(kappa) - 1, 1, kappa).unwrap();
        let (h, len) = (0.05, 400);
        let sv = DiracCnSolver::new(ch, h, len, 0.05, |r| amp / (1.0 + r * r)).unwrap();
        let mut p: Vec<Complex64> = (1..=len).map(|i| Complex64::from_polar((-(i as f64 * h - c).powi(2)).exp(), i as f64 * h)).collect();
        let mut q: Vec<Complex64> = p.iter().map(|z| z * Complex64::i()).collect();
        let n0 = sv.norm_sq(&p, &q);
        for _ in 0..40 {
            sv.step(&mut p, &mut q).unwrap();
        }
        prop_assert!((sv.norm_sq(&p, &q) / n0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wave_crank_nicolson_conserves_energy(k in 0usize..4, delta in 0.0f64..1.0, c in 3.0f64..8.0) {
        let (h, len) = (0.08, 300);
        let sv = WaveCnSolver::new(k, 3, h, len, 0.05, |r| delta / (2.0 * (1.0 + r * r))).unwrap();
        let mut psi: Vec<Complex64> = (1..=len).map(|i| Complex64::new((-(i as f64 * h - c).powi(2)).exp(), 0.0)).collect();
        let mut pi = vec![Complex64::new(0.0, 0.0); len];
        let e0 = sv.energy(&psi, &pi);
        for _ in 0..50 {
            sv.step(&mut psi, &mut pi, None, None).unwrap();
        }
        prop_assert!((sv.energy(&psi, &pi) / e0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ensembles_depend_only_on_seed_and_member(seed in any::<u64>(), m in 0usize..1000) {
        let spec = EnsembleSpec { seed, ..EnsembleSpec::default() };
        let (mut a, mut b) = (spec.rng(m), spec.rng(m));
        prop_assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn admissible_potentials_pass_and_scaled_ones_fail(delta in 0.001f64..0.2, factor in 1.01f64..3.0) {
        let nodes: Vec<f64> = (1..=400).map(|i| i as f64 * 0.05).collect();
        for shape in [RadialShape::Bracket { decay: 3.0 }, RadialShape::InverseV] {
            let amplitude = if matches!(shape, RadialShape::InverseV) { delta } else { delta * kappa_sigma(2.0) };
            let v = PotentialSpec { shape, amplitude, ..PotentialSpec::dirac_admissible(delta, 2.0) };
            prop_assert!(v.validate(&nodes, 1.5).is_ok());
            // 1/v_σ saturates the bound at every node, so any excess is caught.
            if matches!(shape, RadialShape::InverseV) {
                let w = PotentialSpec { amplitude: amplitude * factor, ..v };
                prop_assert!(w.validate(&nodes, 1.5).is_err());
            }
        }
    }

    #[test]
    fn study_statistics_ignore_member_order(vals in proptest::collection::vec((0.0f64..10.0, 0.1f64..10.0), 1..30)) {
        let rec = |v: &[(f64, f64)]| -> Vec<MemberRecord> {
            v.iter().enumerate().map(|(i, &(l, r))| MemberRecord { id: i, descriptor: String::new(), lhs: l, rhs: r, ratio: Some(l / r) }).collect()
        };
        let a = RatioStudy::new("x", rec(&vals));
        let mut rev = vals.clone();
        rev.reverse();
        let b = RatioStudy::new("x", rec(&rev));
        prop_assert_eq!(a.max_ratio, b.max_ratio);
        prop_assert_eq!(a.median_ratio, b.median_ratio);
        prop_assert!(a.median_ratio <= a.max_ratio);
    }
}
