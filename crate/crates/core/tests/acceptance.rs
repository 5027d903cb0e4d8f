//! The ten acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use partwave_core::nld::{NldConfig, PotentialSpec};
use partwave_core::verify::*;
use std::fmt::Write as _;

fn report(n: usize, pass: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn checks_detail(cs: &[CheckEntry]) -> (bool, String) {
    let mut d = String::new();
    for c in cs {
        let _ = write!(d, "[{} {:.3e}/{:.1e}{}] ", c.name, c.residual, c.tolerance, if c.pass { "" } else { " FAIL" });
    }
    (cs.iter().all(|c| c.pass), d)
}

fn study_detail(s: &RatioStudy) -> String {
    let mut d = format!("{} max={:.4} med={:.4}", s.estimate_id, s.max_ratio, s.median_ratio);
    for g in &s.gates {
        if g.name != "ratios_finite" {
            let _ = write!(d, " {}={:.4}", g.name, g.value);
        }
        if !g.pass {
            d.push_str("(FAIL)");
        }
    }
    if !s.failures.is_empty() {
        let _ = write!(d, " failures={}", s.failures.len());
    }
    d
}

fn studies_pass(ss: &[RatioStudy]) -> (bool, String) {
    let pass = ss.iter().all(|s| s.passes() && s.failures.is_empty());
    (pass, ss.iter().map(study_detail).collect::<Vec<_>>().join("; "))
}

fn wave_ensemble(count: usize) -> EnsembleSpec {
    EnsembleSpec { seed: 20, count, max_degree: 4, channels_per_member: 3, ..EnsembleSpec::default() }
}

fn dirac_ensemble() -> EnsembleSpec {
    EnsembleSpec { seed: 30, count: 20, max_degree: 5, channels_per_member: 3, ..EnsembleSpec::default() }
}

#[test]
fn criterion_1_algebra() {
    let (pass, d) = checks_detail(&algebra_checks());
    report(1, pass, &d);
}

#[test]
fn criterion_2_qk_bounds() {
    let studies: Vec<RatioStudy> = [3, 4, 5].iter().map(|&n| lemma_qk_study(n, 200).unwrap()).collect();
    let (pass, d) = studies_pass(&studies);
    report(2, pass, &d);
}

#[test]
fn criterion_3_transforms() {
    let spec = EnsembleSpec { seed: 3, count: 20, max_degree: 8, channels_per_member: 2, band: [2.0, 3.5], width: [0.15, 0.25] };
    let (pass, d) = checks_detail(&transform_suite(&spec).unwrap());
    report(3, pass, &d);
}

#[test]
fn criterion_4_two_routes() {
    let (pass, d) = checks_detail(&[two_route_check(&[3, 4], 8, &[0.5, 2.0, 8.0]).unwrap()]);
    report(4, pass, &d);
}

#[test]
fn criterion_5_free_strichartz() {
    let s = strichartz_free_study(3, &wave_ensemble(100), 10.0, &WaveStudyGrid::default()).unwrap();
    let (pass, d) = studies_pass(&[s]);
    report(5, pass, &d);
}

#[test]
fn criterion_6_inhomogeneous_and_transfer() {
    let grid = WaveStudyGrid::default();
    let spec = wave_ensemble(100);
    let inhom = strichartz_inhom_study(3, &spec, 10.0, &grid).unwrap();
    let transfer = genineq2_study(&spec, 0.02, 5.0).unwrap();
    let shift = inhom_translation_residual(3, &spec, 4.0, 1.0, &grid).unwrap();
    let (mut pass, mut d) = studies_pass(&[inhom, transfer]);
    pass &= shift <= 1e-6;
    let _ = write!(d, "; translation_residual={shift:.3e}");
    report(6, pass, &d);
}

#[test]
fn criterion_7_dirac_suite() {
    let spec = dirac_ensemble();
    let grid = DiracStudyGrid::default();
    let (t, s) = (10.0, 1.5);
    let free = dirac_studies(&PotentialSpec::none(), &spec, t, s, &grid).unwrap();
    let mut all = free.clone();
    let mut extra = String::new();
    let mut pass = true;
    for delta in [0.01, 0.05] {
        let bracket = PotentialSpec::dirac_admissible(delta, 2.0);
        let steep = PotentialSpec::dirac_bracket(delta, 2.0, 4.0);
        for v in [bracket, steep] {
            let st = dirac_studies(&v, &spec, t, s, &grid).unwrap();
            if delta == 0.01 {
                // Small potentials stay within 25% of the free ratios.
                for x in &st {
                    let base = free.iter().find(|f| f.estimate_id == x.estimate_id).unwrap();
                    let rel = (x.max_ratio / base.max_ratio - 1.0).abs();
                    pass &= rel < 0.25;
                    let _ = write!(extra, " {}@{:.2}:rel={rel:.3e}", x.estimate_id, delta);
                }
            }
            all.extend(st);
        }
    }
    // Sign flip of the potential.
    let v = PotentialSpec::dirac_admissible(0.05, 2.0);
    let flipped = PotentialSpec { amplitude: -v.amplitude, ..v.clone() };
    let a = dirac_studies(&v, &spec, t, s, &grid).unwrap();
    let b = dirac_studies(&flipped, &spec, t, s, &grid).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let rel = (y.max_ratio / x.max_ratio - 1.0).abs();
        pass &= rel < 0.25;
        let _ = write!(extra, " flip:{}:{rel:.3e}", x.estimate_id);
    }
    let (cn_pass, cn) = checks_detail(&dirac_cn_checks(&v).unwrap());
    let (st_pass, d) = studies_pass(&all);
    report(7, pass && cn_pass && st_pass, &format!("{d}; {cn};{extra}"));
}

#[test]
fn criterion_8_wave_with_potential() {
    let spec = EnsembleSpec { seed: 40, count: 20, max_degree: 3, channels_per_member: 2, ..EnsembleSpec::default() };
    let st = wave_potential_study(0.5, &spec, 10.0, &WavePotentialGrid::default()).unwrap();
    let (pass, d) = studies_pass(&st);
    report(8, pass, &d);
}

#[test]
fn criterion_9_nonlinear_dirac() {
    let cfg = NldConfig::default();
    let check = NldConfig { dr: 0.2, dt: 0.25, ..cfg.clone() };
    let rep = nld_study(&cfg, &check, &PotentialSpec::none(), 1e-3, 50.0, 9).unwrap();
    let con = contraction_study(&contraction_config(), 10.0, 9, &[0.5, 1.0, 2.0]).unwrap();
    let mut d = String::new();
    for g in rep.gates.iter().chain(&con.gates) {
        let _ = write!(d, "[{} {:.4e}/{:.2e}{}] ", g.name, g.value, g.limit, if g.pass { "" } else { " FAIL" });
    }
    let _ = write!(d, "slope={:.4}", con.slope);
    report(9, rep.passes() && con.gates.iter().all(|g| g.pass), &d);
}

/// A small instance of every study family, as text.
fn all_studies_text() -> String {
    let mut out = String::new();
    let small = EnsembleSpec { seed: 5, count: 4, max_degree: 3, channels_per_member: 2, ..EnsembleSpec::default() };
    let wg = WaveStudyGrid { r_max: 16.0, dr: 0.1, rho_max: 5.0, drho: 0.05, dt: 0.125 };
    let dg = DiracStudyGrid { r_max: 16.0, ..DiracStudyGrid::default() };
    let pg = WavePotentialGrid { r_max: 16.0, ..WavePotentialGrid::default() };
    let mut studies = vec![
        lemma_qk_study(4, 60).unwrap(),
        strichartz_free_study(3, &small, 2.0, &wg).unwrap(),
        strichartz_inhom_study(3, &small, 2.0, &wg).unwrap(),
        genineq2_study(&small, 0.05, 5.0).unwrap(),
        prodest_study(&small, 1.5).unwrap(),
    ];
    studies.extend(dirac_studies(&PotentialSpec::dirac_admissible(0.05, 2.0), &small, 1.0, 1.5, &dg).unwrap());
    studies.extend(wave_potential_study(0.5, &small, 1.0, &pg).unwrap());
    for s in &studies {
        out.push_str(&s.to_csv());
        out.push_str(&serde_json::to_string(s).unwrap());
    }
    let mut checks = transform_suite(&small).unwrap();
    checks.push(two_route_check(&[3], 2, &[1.0]).unwrap());
    out.push_str(&serde_json::to_string(&checks).unwrap());
    let cfg = NldConfig { jmax2: 3, band: 4, dr: 0.25, r_max: 20.0, drho: 0.07, rho_max: 3.0, dt: 0.25, s: 1.5 };
    let nld = nld_study(&cfg, &cfg, &PotentialSpec::none(), 1e-3, 2.0, 1).unwrap();
    out.push_str(&serde_json::to_string(&nld).unwrap());
    let con = contraction_study(&cfg, 1.0, 1, &[0.5, 1.0]).unwrap();
    out.push_str(&serde_json::to_string(&con).unwrap());
    out
}

#[test]
fn criterion_10_determinism() {
    let run = |w: usize| rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap().install(all_studies_text);
    let (a, b) = (run(1), run(4));
    report(10, a == b, &format!("bytes={} identical={}", a.len(), a == b));
}
