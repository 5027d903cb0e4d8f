use crate::config::RunConfig;
use crate::output::{num, CliError, Outcome};
use crate::{Common, HankelArgs};
use partwave_core::nld::{nld_simulate, CubicSpec, NldConfig, NldSolver, PotentialSpec};
use partwave_core::radial::{hankel_transform, RadialGrid, RadialProfile, Side};
use partwave_core::verify::*;
use partwave_core::Complex64;
use serde_json::{json, Value};
use std::sync::Arc;

fn wave_ensemble(c: &RunConfig) -> EnsembleSpec {
    EnsembleSpec { seed: 20, count: 100, max_degree: 4, channels_per_member: 3, ..EnsembleSpec::default() }.tuned(c)
}

trait Tuned {
    fn tuned(self, c: &RunConfig) -> Self;
}

impl Tuned for EnsembleSpec {
    /// Config ensemble replaces the default; --seed and --count win over both.
    fn tuned(self, c: &RunConfig) -> Self {
        let mut e = c.ensemble.clone().unwrap_or(self);
        if let Some(s) = c.seed {
            e.seed = s;
        }
        if let Some(n) = c.count {
            e.count = n;
        }
        e
    }
}

fn pool(c: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(c.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", c.workers.unwrap_or(0))))
}

fn manifest(command: &str, cfg: &RunConfig, grid: Value) -> Value {
    json!({
        "command": command,
        "code_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "grid": grid,
    })
}

/// Runs, then writes artifacts only once everything succeeded.
fn finish(command: &str, out: &std::path::Path, cfg: &RunConfig, outcome: Outcome, grid: Value) -> Result<bool, CliError> {
    let summary = outcome.write(out, command, manifest(command, cfg, grid))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(outcome.passes())
}

pub fn verify(study: &str, common: &Common) -> Result<bool, CliError> {
    let cfg = common.resolve().map_err(CliError::Config)?;
    let (outcome, grid) = pool(&cfg)?.install(|| run_study(study, &cfg))?;
    finish(study, &common.out, &cfg, outcome, grid)
}

fn run_study(study: &str, c: &RunConfig) -> Result<(Outcome, Value), CliError> {
    let t = c.t_end.unwrap_or(10.0);
    let s = c.s.unwrap_or(1.5);
    let wave_grid = c.wave_grid.clone().unwrap_or_default();
    Ok(match study {
        "lemma" => {
            let (n, kmax) = (c.n.unwrap_or(3), c.kmax.unwrap_or(200));
            (Outcome::Studies(vec![lemma_qk_study(n, kmax)?]), json!({"x_points": 4096, "n": n, "kmax": kmax}))
        }
        "algebra" => (Outcome::Checks(algebra_checks()), json!({"h": [0.02, 0.01], "r_max": 12.0})),
        "equivalence" => (Outcome::Checks(equivalence_suite()?), Value::Null),
        "transforms" => {
            let e = EnsembleSpec { seed: 3, count: 20, max_degree: 8, channels_per_member: 2, band: [2.0, 3.5], width: [0.15, 0.25] }.tuned(c);
            (Outcome::Checks(transform_suite(&e)?), json!({"ensemble": e, "rho_max": 6.0, "drho": 0.02, "r_max": 75.0, "dr": 0.2}))
        }
        "two-route" => {
            let dims = c.n.map_or(vec![3, 4], |n| vec![n]);
            let kmax = c.kmax.unwrap_or(8);
            let times = [0.5, 2.0, 8.0];
            (Outcome::Checks(vec![two_route_check(&dims, kmax, &times)?]), json!({"dims": dims, "kmax": kmax, "times": times}))
        }
        "strich3D" | "strichartz1" => {
            let n = if study == "strich3D" { 3 } else { c.n.unwrap_or(4) };
            let e = wave_ensemble(c);
            let st = strichartz_free_study(n, &e, t, &wave_grid)?;
            (Outcome::Studies(vec![st]), json!({"ensemble": e, "wave_grid": wave_grid, "refined": wave_grid.refined(), "t_end": t}))
        }
        "strichartz2" => {
            let n = c.n.unwrap_or(3);
            let e = wave_ensemble(c);
            let st = strichartz_inhom_study(n, &e, t, &wave_grid)?;
            (Outcome::Studies(vec![st]), json!({"ensemble": e, "wave_grid": wave_grid, "refined": wave_grid.refined(), "t_end": t}))
        }
        "genineq2" => {
            let e = wave_ensemble(c);
            let (d, m) = c.wave_grid.as_ref().map_or((0.02, 5.0), |g| (g.drho, g.rho_max));
            (Outcome::Studies(vec![genineq2_study(&e, d, m)?]), json!({"ensemble": e, "drho": [d, d / 2.0], "rho_max": m}))
        }
        "prodest" => {
            let e = EnsembleSpec { seed: 50, count: 20, ..EnsembleSpec::default() }.tuned(c);
            (Outcome::Studies(vec![prodest_study(&e, s)?]), json!({"ensemble": e, "bands": [8, 16], "s": s}))
        }
        "dirac" => {
            let v = dirac_potential(c, None);
            let e = EnsembleSpec { seed: 30, count: 20, max_degree: 5, channels_per_member: 3, ..EnsembleSpec::default() }.tuned(c);
            let g = c.dirac_grid.clone().unwrap_or_default();
            let st = dirac_studies(&v, &e, t, s, &g)?;
            (Outcome::Studies(st), json!({"ensemble": e, "dirac_grid": g, "refined": g.refined(), "t_end": t, "potential": v}))
        }
        "dirac-cn" => {
            let v = dirac_potential(c, Some(0.05));
            (Outcome::Checks(dirac_cn_checks(&v)?), json!({"potential": v, "dt": [0.1, 0.05, 0.025]}))
        }
        "wavepot" => {
            let delta = c.delta.unwrap_or(0.5);
            let e = EnsembleSpec { seed: 40, count: 20, max_degree: 3, channels_per_member: 2, ..EnsembleSpec::default() }.tuned(c);
            let g = c.wave_potential_grid.clone().unwrap_or_default();
            let st = wave_potential_study(delta, &e, t, &g)?;
            (Outcome::Studies(st), json!({"ensemble": e, "grid": g, "refined": g.refined(), "t_end": t, "delta": delta}))
        }
        "nld" => {
            let cfg = c.nld.clone().unwrap_or_default();
            let check = c.nld_check.clone().unwrap_or(NldConfig { dr: 0.2, dt: 0.25, ..cfg.clone() });
            let v = c.potential.clone().unwrap_or_else(PotentialSpec::none);
            let (eps, t) = (c.eps.unwrap_or(1e-3), c.t_end.unwrap_or(50.0));
            let rep = nld_study(&cfg, &check, &v, eps, t, c.seed.unwrap_or(9))?;
            (Outcome::Nld(Box::new(rep)), json!({"nld": cfg, "check": check, "t_end": t, "eps": eps}))
        }
        "contraction" => {
            let cfg = c.nld.clone().unwrap_or_else(contraction_config);
            let radii = c.radii.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
            let rep = contraction_study(&cfg, t, c.seed.unwrap_or(9), &radii)?;
            (Outcome::Contraction(rep), json!({"nld": cfg, "t_end": t, "radii": radii}))
        }
        other => return Err(CliError::Config(format!("unknown study '{other}'"))),
    })
}

/// Config potential, else an admissible one of strength --delta, else the
/// given default strength, else none.
fn dirac_potential(c: &RunConfig, default_delta: Option<f64>) -> PotentialSpec {
    if let Some(p) = &c.potential {
        return p.clone();
    }
    match c.delta.or(default_delta) {
        Some(d) if d != 0.0 => PotentialSpec::dirac_admissible(d, SMOOTHING_SIGMA),
        _ => PotentialSpec::none(),
    }
}

pub fn simulate(common: &Common, nonlinear: bool) -> Result<bool, CliError> {
    let c = common.resolve().map_err(CliError::Config)?;
    let cfg = c.nld.clone().unwrap_or_default();
    let v = c.potential.clone().unwrap_or_else(PotentialSpec::none);
    let cubic = if nonlinear { c.cubic.clone().unwrap_or_else(CubicSpec::mass_cubic) } else { CubicSpec::Zero };
    let (eps, t) = (c.eps.unwrap_or(1e-3), c.t_end.unwrap_or(10.0));
    let run = pool(&c)?.install(|| -> Result<_, CliError> {
        let solver = NldSolver::new(cfg.clone(), v.clone(), cubic.clone())?;
        let f = nld_initial_data(&solver, eps, c.seed.unwrap_or(9));
        Ok(nld_simulate(&solver, &f, t, false)?)
    })?;
    let last = *run.diagnostics.last().expect("at least the initial frame");
    let sup = run.diagnostics.iter().map(|d| d.lambda_h1).fold(0.0, f64::max);
    let summary = json!({
        "t_end": last.t, "l2_initial": run.diagnostics[0].l2, "l2_final": last.l2,
        "sup_lambda_h1": sup, "x_norm": run.x_norm, "cubic": cubic, "potential": v,
    });
    let command = if nonlinear { "simulate-nld" } else { "simulate-linear" };
    let outcome = Outcome::Run { diagnostics: run.diagnostics, summary };
    finish(command, &common.out, &c, outcome, json!({"nld": cfg, "eps": eps}))
}

pub fn hankel(a: &HankelArgs) -> Result<bool, CliError> {
    let fgrid = Arc::new(RadialGrid::uniform_to(a.rho_max, a.drho)?);
    let rgrid = Arc::new(RadialGrid::uniform_to(a.r_max, a.dr)?);
    let f = RadialProfile::from_fn(fgrid.clone(), Side::Frequency, |q| {
        Complex64::new((-(q - a.center).powi(2) / (2.0 * a.width * a.width)).exp(), 0.0)
    });
    let g = hankel_transform(&f, a.k, a.n, &rgrid)?;
    let back = hankel_transform(&g, a.k, a.n, &fgrid)?;
    let d: f64 = f.values.iter().zip(&back.values).map(|(x, y)| (x - y).norm_sqr()).sum();
    let s: f64 = f.values.iter().map(|x| x.norm_sqr()).sum();
    let round_trip = (d / s).sqrt();
    let rows = rgrid.nodes().iter().zip(&g.values).map(|(r, v)| vec![*r, v.re, v.im]).collect();
    let summary = json!({ "round_trip": round_trip, "round_trip_text": num(round_trip) });
    let outcome = Outcome::Table { header: vec!["r", "re", "im"], rows, summary, pass: round_trip <= 1e-6 };
    let cfg = RunConfig { n: Some(a.n), kmax: Some(a.k), ..RunConfig::default() };
    let grid = json!({"rho_max": a.rho_max, "drho": a.drho, "r_max": a.r_max, "dr": a.dr, "center": a.center, "width": a.width});
    finish("transform-hankel", &a.out, &cfg, outcome, grid)
}
