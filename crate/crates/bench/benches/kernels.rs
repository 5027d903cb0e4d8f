use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use partwave_core::propagators::DiracCnSolver;
use partwave_core::radial::{hankel_transform, RadialGrid, RadialProfile, Side};
use partwave_core::specfun::{bessel_j, bessel_j_lommel};
use partwave_core::sphere::{sht_forward, sht_inverse, DiracChannelIndex, ScalarCoeffs, SphereGrid};
use std::hint::black_box;
use std::sync::Arc;

fn bessel(c: &mut Criterion) {
    c.bench_function("bessel_j nu=3.5 over 200 points", |b| {
        b.iter(|| (0..200).map(|i| bessel_j(3.5, black_box(0.1 * i as f64)).unwrap()).sum::<f64>())
    });
    c.bench_function("bessel_j_lommel nu=3.5 over 200 points", |b| {
        b.iter(|| (0..200).map(|i| bessel_j_lommel(3.5, black_box(0.1 * i as f64), 40).unwrap()).sum::<f64>())
    });
}

fn hankel(c: &mut Criterion) {
    let fgrid = Arc::new(RadialGrid::uniform_to(6.0, 0.02).unwrap());
    let rgrid = Arc::new(RadialGrid::uniform_to(60.0, 0.2).unwrap());
    let f = RadialProfile::from_fn(fgrid, Side::Frequency, |q| Complex64::new((-(q - 2.0).powi(2) / 0.18).exp(), 0.0));
    c.bench_function("hankel k=4 n=3, 300 -> 300 nodes", |b| b.iter(|| hankel_transform(black_box(&f), 4, 3, &rgrid).unwrap()));
}

fn sht(c: &mut Criterion) {
    let band = 16;
    let grid = SphereGrid::new(band).unwrap();
    let mut coeffs = ScalarCoeffs::zeros(band);
    for k in 0..=band {
        for m in -(k as i64)..=k as i64 {
            coeffs.set_m(k, m, Complex64::new(1.0 / (1.0 + k as f64), 0.1 * m as f64));
        }
    }
    let vals = sht_inverse(&coeffs, &grid).unwrap();
    c.bench_function("sht forward band 16", |b| b.iter(|| sht_forward(black_box(&vals), &grid, band).unwrap()));
    c.bench_function("sht inverse band 16", |b| b.iter(|| sht_inverse(black_box(&coeffs), &grid).unwrap()));
}

fn cn_step(c: &mut Criterion) {
    let ch = DiracChannelIndex::new(3, 1, -2).unwrap();
    let (h, len) = (0.05, 640);
    let sv = DiracCnSolver::new(ch, h, len, 0.025, |r| 0.01 / (1.0 + r * r).powf(1.5)).unwrap();
    let p0: Vec<Complex64> = (1..=len).map(|i| Complex64::new((-(i as f64 * h - 5.0).powi(2)).exp(), 0.0)).collect();
    let q0 = p0.clone();
    c.bench_function("dirac crank-nicolson step, 640 nodes", |b| {
        let (mut p, mut q) = (p0.clone(), q0.clone());
        b.iter(|| sv.step(&mut p, &mut q).unwrap())
    });
}

criterion_group!(benches, bessel, hankel, sht, cn_step);
criterion_main!(benches);
