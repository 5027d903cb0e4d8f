//! Estimate-verification harness: random ensembles, both sides of each
//! estimate, ratio statistics with refinement and time-doubling gates, and
//! the exact identities of the toolkit checked as residuals.
//!
//! A "≲" is operationalized as: the max ratio over the ensemble is finite,
//! moves by at most 10% under one grid refinement, and grows by at most 5%
//! when the time horizon doubles.

use crate::error::{domain, Error, Result};
use crate::nld::{nld_simulate, picard_iterate, trajectory_difference, CubicSpec, NldConfig, NldDiagnostics, NldSolver, PotentialSpec};
use crate::norms::{check_frame_spacing, weighted_transfer_check, Frame, NormConfig, NormStream, PartialWave};
use crate::propagators::{
    alpha_matrices, dirac_radial_apply, spectrum_to_staggered, staggered_grids, wave_channel_evolve_multiplier,
    wave_channel_evolve_qrep, ChannelIndex, ChannelSpectrum, DiracCnSolver, DiracSpectrum, HalfWaveEigen, RiccatiBessel, WaveCnSolver,
    WaveSynth,
};
use crate::radial::{
    channel_sobolev_norm, hankel_transform, AngularSymbol, RadialGrid, RadialProfile, Side, WeightSpec,
};
use crate::specfun::{bracket, harmonic_dim, q_poly_eval};
use crate::sphere::{sphere_product, DiracChannelIndex, ScalarCoeffs};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest accepted refinement drift of the max ratio.
pub const DRIFT_LIMIT: f64 = 0.10;
/// Largest accepted growth of the max ratio from T to 2T.
pub const GROWTH_LIMIT: f64 = 0.05;

// ---------------------------------------------------------------------------
// Ensembles and studies

/// Random per-channel Gaussian bumps in frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    pub seed: u64,
    pub count: usize,
    /// Largest channel degree k (scalar) or 2j (spinor).
    pub max_degree: usize,
    pub channels_per_member: usize,
    /// Range of bump centers in ρ.
    pub band: [f64; 2],
    /// Range of bump widths.
    pub width: [f64; 2],
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { seed: 1, count: 100, max_degree: 4, channels_per_member: 3, band: [1.0, 2.5], width: [0.15, 0.3] }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.channels_per_member == 0 {
            return domain("ensemble needs at least one member and one channel per member");
        }
        if !(self.band[0] > 0.0 && self.band[1] >= self.band[0] && self.width[0] > 0.0 && self.width[1] >= self.width[0]) {
            return domain(format!("bad bump ranges: band {:?}, width {:?}", self.band, self.width));
        }
        Ok(())
    }

    /// Independent stream for each member, so members can run in any order.
    pub fn rng(&self, member: usize) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(member as u64);
        r
    }

    fn bump(&self, rng: &mut ChaCha8Rng) -> Bump {
        Bump {
            center: rng.random_range(self.band[0]..=self.band[1]),
            width: rng.random_range(self.width[0]..=self.width[1]),
            amp: rng.random_range(0.5..=1.0),
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    /// Highest frequency at which any bump is above e^{−12.5}.
    pub fn support_max(&self) -> f64 {
        self.band[1] + 5.0 * self.width[1]
    }
}

/// amp · e^{iφ} · exp(−(ρ−c)²/(2w²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub amp: f64,
    pub phase: f64,
}

impl Bump {
    pub fn eval(&self, rho: f64) -> Complex64 {
        Complex64::from_polar(self.amp * (-(rho - self.center).powi(2) / (2.0 * self.width * self.width)).exp(), self.phase)
    }

    fn sample(&self, grid: &RadialGrid) -> Vec<Complex64> {
        grid.nodes().iter().map(|&q| self.eval(q)).collect()
    }

    fn describe(&self) -> String {
        format!("c={:.4} w={:.4} a={:.4} ph={:.4}", self.center, self.width, self.amp, self.phase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub id: usize,
    pub descriptor: String,
    pub lhs: f64,
    pub rhs: f64,
    /// None when the right side vanishes (0/0 guarded).
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Gate {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value.is_finite() && value <= limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStudy {
    pub estimate_id: String,
    pub ensemble: Vec<MemberRecord>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Max ratio at the base and the refined grid.
    pub refinement: Option<[f64; 2]>,
    /// Max ratio at T and at 2T.
    pub t_growth: Option<[f64; 2]>,
    pub failures: Vec<String>,
    pub gates: Vec<Gate>,
    pub meta: BTreeMap<String, f64>,
}

fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    (rhs > 0.0 && rhs.is_finite() && lhs.is_finite()).then(|| lhs / rhs)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::NAN, |a, b| if a.is_nan() || b > a { b } else { a })
}

impl RatioStudy {
    pub fn new(estimate_id: impl Into<String>, ensemble: Vec<MemberRecord>) -> Self {
        let ratios: Vec<f64> = ensemble.iter().filter_map(|m| m.ratio).collect();
        let max_ratio = max_of(ratios.iter().copied());
        let mut s = Self {
            estimate_id: estimate_id.into(),
            max_ratio,
            median_ratio: median(ratios.clone()),
            ensemble,
            refinement: None,
            t_growth: None,
            failures: vec![],
            gates: vec![],
            meta: BTreeMap::new(),
        };
        let finite = ratios.iter().all(|r| r.is_finite() && *r >= 0.0) && !ratios.is_empty();
        s.gates.push(Gate { name: "ratios_finite".into(), value: max_ratio, limit: f64::INFINITY, pass: finite });
        s
    }

    /// |fine/base − 1|.
    pub fn drift(&self) -> Option<f64> {
        self.refinement.map(|[a, b]| (b / a - 1.0).abs())
    }

    /// max(2T)/max(T) − 1.
    pub fn growth(&self) -> Option<f64> {
        self.t_growth.map(|[a, b]| b / a - 1.0)
    }

    fn with_refinement(mut self, base: f64, fine: f64, limit: f64) -> Self {
        self.refinement = Some([base, fine]);
        let d = self.drift().unwrap_or(f64::NAN);
        self.gates.push(Gate::at_most("refinement_drift", d, limit));
        self
    }

    fn with_growth(mut self, short: f64, long: f64) -> Self {
        self.t_growth = Some([short, long]);
        let g = self.growth().unwrap_or(f64::NAN);
        self.gates.push(Gate::at_most("t_growth", g, GROWTH_LIMIT));
        self
    }

    pub fn passes(&self) -> bool {
        !self.gates.is_empty() && self.gates.iter().all(|g| g.pass)
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    /// member,descriptor,lhs,rhs,ratio with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("member,descriptor,lhs,rhs,ratio\n");
        for m in &self.ensemble {
            let r = m.ratio.map_or_else(String::new, |r| format!("{r:.16e}"));
            out.push_str(&format!("{},\"{}\",{:.16e},{:.16e},{}\n", m.id, m.descriptor, m.lhs, m.rhs, r));
        }
        out
    }
}

/// One named residual check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckEntry {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), residual, tolerance, pass: residual.is_finite() && residual <= tolerance }
    }

    fn at_least(name: impl Into<String>, value: f64, floor: f64) -> Self {
        Self { name: name.into(), residual: value, tolerance: floor, pass: value.is_finite() && value >= floor }
    }
}

/// Both sides of one estimate for one member: at T and at 2T.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    lhs: f64,
    lhs_long: f64,
    rhs: f64,
}

/// Builds one study per estimate from per-member samples at two grid levels.
fn assemble(
    ids: &[&str],
    descriptors: &[String],
    base: &[Result<Vec<Sample>>],
    fine: &[Result<Vec<Sample>>],
    with_time: bool,
) -> Vec<RatioStudy> {
    ids.iter()
        .enumerate()
        .map(|(e, id)| {
            let mut records = Vec::new();
            let mut failures = Vec::new();
            let mut long = Vec::new();
            for (m, res) in base.iter().enumerate() {
                match res {
                    Ok(s) => {
                        let x = s[e];
                        records.push(MemberRecord { id: m, descriptor: descriptors[m].clone(), lhs: x.lhs, rhs: x.rhs, ratio: ratio(x.lhs, x.rhs) });
                        if let Some(r) = ratio(x.lhs_long, x.rhs) {
                            long.push(r);
                        }
                    }
                    Err(err) => failures.push(format!("member {m}: {err}")),
                }
            }
            let fine_max = max_of(fine.iter().filter_map(|r| r.as_ref().ok()).filter_map(|s| ratio(s[e].lhs, s[e].rhs)));
            for (m, res) in fine.iter().enumerate() {
                if let Err(err) = res {
                    failures.push(format!("member {m} (refined): {err}"));
                }
            }
            let mut study = RatioStudy::new(*id, records);
            let base_max = study.max_ratio;
            study.failures = failures;
            study = study.with_refinement(base_max, fine_max, DRIFT_LIMIT);
            if with_time {
                study = study.with_growth(base_max, max_of(long.into_iter()));
            }
            study
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Algebra and transforms

/// Anticommutation of the Dirac matrices and the channelwise identity
/// 𝒟² = −Δ with its measured finite-difference order.
pub fn algebra_checks() -> Vec<CheckEntry> {
    let a = alpha_matrices();
    let mut worst = 0.0f64;
    for j in 0..3 {
        for k in 0..3 {
            for r in 0..4 {
                for c in 0..4 {
                    let mut s = ZERO;
                    for m in 0..4 {
                        s += a[j][r][m] * a[k][m][c] + a[k][r][m] * a[j][m][c];
                    }
                    let expect = if j == k && r == c { 2.0 } else { 0.0 };
                    worst = worst.max((s - expect).norm());
                }
            }
        }
    }
    let mut out = vec![CheckEntry::new("anticommutation_exact", worst, 0.0)];
    let (e1, e2) = (dirac_square_error(0.02), dirac_square_error(0.01));
    out.push(CheckEntry::new("dirac_square_residual_h0.01", e2, 1e-3));
    out.push(CheckEntry::at_least("dirac_square_order", (e1 / e2).log2(), 1.9));
    out
}

/// Relative L² error on 1 ≤ r ≤ 10 of 𝒟² against −∂² + κ(κ+1)/r² on the upper
/// component of one channel, both components smooth and vanishing at 0.
fn dirac_square_error(h: f64) -> f64 {
    let grid = Arc::new(RadialGrid::uniform_to(12.0, h).expect("grid"));
    let mut worst = 0.0f64;
    for kappa in [-2i32, -1, 1, 2] {
        let ch = DiracChannelIndex::new(2 * kappa.abs() - 1, 1, kappa).expect("channel");
        let kf = kappa as f64;
        let f = |r: f64| r * r * (-r).exp();
        let g = |r: f64| r * r * r * (-r * r / 4.0).exp();
        // −f'' + κ(κ+1) f / r² for f = r² e^{−r}
        let lap = |r: f64| -(2.0 - 4.0 * r + r * r) * (-r).exp() + kf * (kf + 1.0) * (-r).exp();
        let p = RadialProfile::from_fn(grid.clone(), Side::Position, |r| Complex64::new(f(r), 0.0));
        let m = RadialProfile::from_fn(grid.clone(), Side::Position, |r| Complex64::new(g(r), 0.0));
        let (p1, m1) = dirac_radial_apply(ch, (&p, &m)).expect("apply");
        let (p2, _) = dirac_radial_apply(ch, (&p1, &m1)).expect("apply");
        let x = grid.nodes();
        let (mut num, mut den) = (0.0, 0.0);
        for i in (0..x.len()).filter(|&i| (1.0..=10.0).contains(&x[i])) {
            let e = lap(x[i]);
            num += (p2.values[i].re - e).powi(2);
            den += e * e;
        }
        worst = worst.max((num / den).sqrt());
    }
    worst
}

/// sup_x |Q_k| and k^{n/2−1} sup_x |Q_k| on a 4096-point grid, k ≤ kmax.
pub fn lemma_qk_study(n: usize, kmax: usize) -> Result<RatioStudy> {
    if n < 3 {
        return domain(format!("dimension {n} must be at least 3"));
    }
    let xs: Vec<f64> = (0..4096).map(|i| -1.0 + 2.0 * i as f64 / 4095.0).collect();
    let sups: Vec<f64> = (0..=kmax)
        .into_par_iter()
        .map(|k| xs.iter().map(|&x| q_poly_eval(k, n, x).map(f64::abs)).try_fold(0.0f64, |a, v| v.map(|v| a.max(v))))
        .collect::<Result<_>>()?;
    let power = n as f64 / 2.0 - 1.0;
    let records = sups
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let norm = (k.max(1) as f64).powf(power) * s;
            MemberRecord { id: k, descriptor: format!("k={k}"), lhs: s, rhs: 1.0, ratio: Some(norm) }
        })
        .collect::<Vec<_>>();
    let mut study = RatioStudy::new(format!("lemmaQk_n{n}"), records);
    if n == 3 {
        let worst = max_of(sups.iter().copied());
        study.gates.push(Gate::at_most("sup_abs_q", worst, 1.0 + 1e-12));
        if let Some(&s0) = sups.first() {
            study.gates.push(Gate::at_most("sup_at_k0_minus_one", (s0 - 1.0).abs(), 1e-14));
        }
    } else if kmax >= 10 {
        let vals: Vec<f64> = study.ensemble[10..].iter().filter_map(|m| m.ratio).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = max_of(vals.iter().copied()) / lo;
        study.gates.push(Gate::at_most("normalized_spread_k10_up", spread, 2.0));
    }
    study.meta.insert("n".into(), n as f64);
    study.meta.insert("kmax".into(), kmax as f64);
    Ok(study)
}

/// Hankel round trip and Plancherel on a band-limited n = 3 ensemble, plus
/// the Gaussian closed form.
pub fn transform_suite(spec: &EnsembleSpec) -> Result<Vec<CheckEntry>> {
    spec.validate()?;
    let n = 3;
    let fgrid = Arc::new(RadialGrid::uniform_to(6.0, 0.02)?);
    let rgrid = Arc::new(RadialGrid::uniform_to(75.0, 0.2)?);
    let rows: Vec<(f64, f64)> = (0..spec.count)
        .into_par_iter()
        .map(|m| {
            let mut rng = spec.rng(m);
            let mut trip = 0.0f64;
            let mut planch = 0.0f64;
            for _ in 0..spec.channels_per_member {
                let k = rng.random_range(0..=spec.max_degree);
                let b = spec.bump(&mut rng);
                let f = RadialProfile::new(fgrid.clone(), b.sample(&fgrid), Side::Frequency)?;
                let g = hankel_transform(&f, k, n, &rgrid)?;
                let back = hankel_transform(&g, k, n, &fgrid)?;
                let d: f64 = f.values.iter().zip(&back.values).map(|(a, b)| (a - b).norm_sqr()).sum();
                let s: f64 = f.values.iter().map(|a| a.norm_sqr()).sum();
                trip = trip.max((d / s).sqrt());
                let pos = g.weighted_l2(2.0).powi(2);
                let freq = (2.0 * PI).powi(n as i32) * f.weighted_l2(2.0).powi(2);
                planch = planch.max((pos / freq - 1.0).abs());
            }
            Ok((trip, planch))
        })
        .collect::<Result<Vec<_>>>()?;
    let gauss_f = Arc::new(RadialGrid::uniform_to(12.0, 0.05)?);
    let gauss_r = Arc::new(RadialGrid::uniform_to(20.0, 0.05)?);
    let c = RadialProfile::from_fn(gauss_f, Side::Frequency, |q| Complex64::new((-q * q / 2.0).exp(), 0.0));
    let g = hankel_transform(&c, 0, 3, &gauss_r)?;
    let norm = (2.0 * PI).powf(1.5);
    let gauss = gauss_r.nodes().iter().zip(&g.values).map(|(r, v)| (v - norm * (-r * r / 2.0).exp()).norm() / norm).fold(0.0, f64::max);
    Ok(vec![
        CheckEntry::new("hankel_round_trip", max_of(rows.iter().map(|r| r.0)), 1e-6),
        CheckEntry::new("plancherel", max_of(rows.iter().map(|r| r.1)), 1e-6),
        CheckEntry::new("gaussian_closed_form", gauss, 1e-6),
    ])
}

/// Max relative L² residual between the multiplier and Q_k routes of the
/// half-wave flow over the given dimensions, degrees and times.
pub fn two_route_check(dims: &[usize], kmax: usize, times: &[f64]) -> Result<CheckEntry> {
    let fgrid = Arc::new(RadialGrid::uniform_to(5.0, 0.05)?);
    let rgrid = Arc::new(RadialGrid::uniform_to(10.0, 0.05)?);
    let f = RadialProfile::from_fn(fgrid, Side::Frequency, |q| Complex64::from_polar((-(q - 2.0).powi(2) / 0.18).exp(), 0.3 * q));
    let cases: Vec<(usize, usize, f64)> =
        dims.iter().flat_map(|&n| (0..=kmax).flat_map(move |k| times.iter().map(move |&t| (n, k, t)))).collect();
    let res: Vec<f64> = cases
        .par_iter()
        .map(|&(n, k, t)| {
            let ch = ChannelIndex { k, l: 1 };
            let a = wave_channel_evolve_multiplier(ch, &f, t, &rgrid, n)?;
            let b = wave_channel_evolve_qrep(ch, &f, t, &rgrid, n)?;
            let num: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum();
            let den: f64 = a.values.iter().map(|x| x.norm_sqr()).sum();
            Ok((num / den).sqrt())
        })
        .collect::<Result<_>>()?;
    Ok(CheckEntry::new("two_route_propagator", max_of(res.into_iter()), 1e-4))
}

/// ‖∇Λ_ω^m f‖² by the frequency side and by radial quadrature of the exact
/// symbol (equal up to O(h²)), and the bracket form ⟨k⟩^{2m}(…+k²…) as a
/// two-sided equivalence.
fn gradient_equivalence() -> Result<Vec<CheckEntry>> {
    let n = 3;
    let fgrid = Arc::new(RadialGrid::uniform_to(5.0, 0.02)?);
    let rgrid = Arc::new(RadialGrid::uniform_to(60.0, 0.02)?);
    let m = 1.0;
    let (mut spec_side, mut exact_side, mut bracket_side) = (0.0, 0.0, 0.0);
    for k in 1..=4usize {
        let f = RadialProfile::from_fn(fgrid.clone(), Side::Frequency, |q| {
            Complex64::new((-(q - 1.5).powi(2) / 0.18).exp() / k as f64, 0.0)
        });
        let lam = 1.0 + (k * (k + n - 2)) as f64;
        spec_side += lam.powf(m) * (2.0 * PI).powi(n as i32) * f.weighted_l2(2.0 + n as f64 - 1.0).powi(2);
        let g = hankel_transform(&f, k, n, &rgrid)?;
        let grad = crate::radial::channel_gradient_sq(&g, k, n);
        exact_side += lam.powf(m) * grad;
        let d = crate::radial::radial_derivative(&g);
        let kk = (k * k) as f64;
        let alt: Vec<f64> = rgrid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| (d.values[i].norm_sqr() + kk / (r * r) * g.values[i].norm_sqr()) * r * r)
            .collect();
        bracket_side += bracket(k as f64).powf(2.0 * m) * rgrid.integrate(&alt);
    }
    let ratio = bracket_side / spec_side;
    Ok(vec![
        CheckEntry::new("gradient_angular_exact_routes", (exact_side / spec_side - 1.0).abs(), 2e-2),
        CheckEntry::new("gradient_angular_bracket_equivalence", (ratio.ln()).abs(), 2f64.ln()),
    ])
}

/// Spinor channels → collocation field → channels on a random band-limited
/// state, checked against the input.
fn spinor_round_trip() -> Result<CheckEntry> {
    use crate::sphere::{spinor_decompose, spinor_reconstruct, SphereGrid};
    let rgrid = Arc::new(RadialGrid::uniform_to(6.0, 0.1)?);
    let sgrid = Arc::new(SphereGrid::new(6)?);
    let spec = EnsembleSpec { seed: 7, ..EnsembleSpec::default() };
    let mut rng = spec.rng(0);
    let mut entries = BTreeMap::new();
    for ch in DiracChannelIndex::all(5) {
        let (b1, b2) = (spec.bump(&mut rng), spec.bump(&mut rng));
        let prof = |b: Bump| RadialProfile::from_fn(rgrid.clone(), Side::Position, move |r| b.eval(r) * r);
        entries.insert(ch, (prof(b1), prof(b2)));
    }
    let state = crate::propagators::DiracChannelState { entries, time: 0.0 };
    let field = spinor_reconstruct(&state, &rgrid, &sgrid)?;
    let back = spinor_decompose(&field, 5)?;
    let mut worst = 0.0f64;
    for (ch, (p, m)) in &state.entries {
        let (q, w) = &back.entries[ch];
        for (x, y) in p.values.iter().zip(&q.values).chain(m.values.iter().zip(&w.values)) {
            worst = worst.max((x - y).norm());
        }
    }
    Ok(CheckEntry::new("spinor_round_trip", worst, 1e-8))
}

/// Every exact or near-exact identity in the toolkit, as residual checks.
pub fn equivalence_suite() -> Result<Vec<CheckEntry>> {
    let mut out = algebra_checks();
    let a = alpha_matrices();
    let mut sq = 0.0f64;
    for r in 0..4 {
        for c in 0..4 {
            let mut s = ZERO;
            for m in 0..4 {
                s += a[2][r][m] * a[2][m][c];
            }
            sq = sq.max((s - if r == c { 1.0 } else { 0.0 }).norm());
        }
    }
    out.push(CheckEntry::new("alpha3_squared_identity", sq, 0.0));
    out.push(two_route_check(&[3, 4], 4, &[0.5, 2.0])?);
    let fgrid = Arc::new(RadialGrid::uniform_to(5.0, 0.03)?);
    let mut chs = ChannelSpectrum::new(3);
    for k in 0..3 {
        chs.insert(
            ChannelIndex { k, l: 1 },
            RadialProfile::from_fn(fgrid.clone(), Side::Frequency, |q| Complex64::from_polar((-(q - 2.0).powi(2) / 0.1).exp(), q)),
        )?;
    }
    let t = weighted_transfer_check(0, 0.0, &chs)?;
    out.push(CheckEntry::new("transfer_s0_equality", (t.lhs / t.rhs - 1.0).abs(), 1e-6));
    out.push(spinor_round_trip()?);
    out.extend(gradient_equivalence()?);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Free and inhomogeneous wave Strichartz

/// Grids for the half-wave studies; `dt` is both the frame spacing and the
/// Duhamel s-step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveStudyGrid {
    pub r_max: f64,
    pub dr: f64,
    pub rho_max: f64,
    pub drho: f64,
    pub dt: f64,
}

impl Default for WaveStudyGrid {
    fn default() -> Self {
        Self { r_max: 32.0, dr: 0.08, rho_max: 5.0, drho: 0.03, dt: 0.125 }
    }
}

impl WaveStudyGrid {
    pub fn refined(&self) -> Self {
        Self { dr: self.dr / 2.0, drho: self.drho / 2.0, dt: self.dt / 2.0, ..self.clone() }
    }

    fn steps(&self, t: f64) -> Result<usize> {
        let s = (t / self.dt).round();
        if s < 1.0 || (s * self.dt - t).abs() > 1e-9 * t {
            return domain(format!("horizon {t} is not a positive multiple of dt = {}", self.dt));
        }
        Ok(s as usize)
    }
}

type WaveMember = Vec<(ChannelIndex, Bump)>;

fn wave_member(spec: &EnsembleSpec, n: usize, m: usize) -> Result<WaveMember> {
    let mut rng = spec.rng(m);
    let mut out: WaveMember = Vec::new();
    while out.len() < spec.channels_per_member {
        let k = rng.random_range(0..=spec.max_degree);
        let dk = harmonic_dim(k, n)?.min(1 << 20) as usize;
        let l = rng.random_range(1..=dk);
        let b = spec.bump(&mut rng);
        if out.iter().all(|(c, _)| *c != (ChannelIndex { k, l })) {
            out.push((ChannelIndex { k, l }, b));
        }
    }
    Ok(out)
}

fn describe_wave(member: &WaveMember) -> String {
    member.iter().map(|(c, b)| format!("k={} l={} {}", c.k, c.l, b.describe())).collect::<Vec<_>>().join("; ")
}

fn sigma_for(n: usize) -> f64 {
    if n == 3 {
        0.0
    } else {
        1.0 - n as f64 / 2.0
    }
}

fn spectrum_of(n: usize, member: &WaveMember, fgrid: &Arc<RadialGrid>, pre: impl Fn(f64) -> f64) -> Result<ChannelSpectrum> {
    let mut cs = ChannelSpectrum::new(n);
    for (ch, b) in member {
        let vals = fgrid.nodes().iter().map(|&q| b.eval(q) * pre(q)).collect();
        cs.insert(*ch, RadialProfile::new(fgrid.clone(), vals, Side::Frequency)?)?;
    }
    Ok(cs)
}

/// Pushes the frames of channel trajectories `traj[c][m]` (time index m)
/// and returns the endpoint norm at steps `short` and `long`.
fn endpoint_pair(n: usize, grid: &Arc<RadialGrid>, degrees: &[usize], traj: &[Vec<Vec<Complex64>>], dt: f64, short: usize, long: usize) -> Result<(f64, f64)> {
    let mut stream = NormStream::new(NormConfig::default());
    let mut at_short = 0.0;
    for m in 0..=long {
        let waves = degrees.iter().zip(traj).map(|(&k, tr)| PartialWave::new(k, tr[m].clone())).collect();
        stream.push(m as f64 * dt, &Frame::new(grid.clone(), n, waves)?)?;
        if m == short {
            at_short = stream.endpoint();
        }
    }
    Ok((at_short, stream.endpoint()))
}

struct WaveLevel {
    synth: WaveSynth,
    grid: WaveStudyGrid,
}

fn wave_level(n: usize, grid: &WaveStudyGrid, kmax: usize, t_max: f64) -> Result<WaveLevel> {
    check_frame_spacing(grid.dt, grid.rho_max)?;
    let rgrid = Arc::new(RadialGrid::uniform_to(grid.r_max, grid.dr)?);
    let fgrid = Arc::new(RadialGrid::uniform_to(grid.rho_max, grid.drho)?);
    Ok(WaveLevel { synth: WaveSynth::new(n, rgrid, fgrid, kmax, t_max)?, grid: grid.clone() })
}

fn free_member(n: usize, member: &WaveMember, lvl: &WaveLevel, t: f64) -> Result<Vec<Sample>> {
    let short = lvl.grid.steps(t)?;
    let long = 2 * short;
    let times: Vec<f64> = (0..=long).map(|m| m as f64 * lvl.grid.dt).collect();
    let fgrid = lvl.synth.fgrid();
    let mut traj = Vec::new();
    let mut degrees = Vec::new();
    for (ch, b) in member {
        traj.push(lvl.synth.evolve_many(ch.k, &b.sample(fgrid), &times)?);
        degrees.push(ch.k);
    }
    let (lhs, lhs_long) = endpoint_pair(n, lvl.synth.rgrid(), &degrees, &traj, lvl.grid.dt, short, long)?;
    let rhs = channel_sobolev_norm(&spectrum_of(n, member, fgrid, |_| 1.0)?, (n as f64 - 1.0) / 2.0, sigma_for(n));
    Ok(vec![Sample { lhs, lhs_long, rhs }])
}

/// Endpoint Strichartz for the free half-wave flow: ‖e^{it|D|}f‖ on [0, T]
/// against ‖Λ_ω^σ f‖_{Ḣ^{(n−1)/2}}, σ = 0 for n = 3 and 1 − n/2 above.
pub fn strichartz_free_study(n: usize, spec: &EnsembleSpec, t: f64, grid: &WaveStudyGrid) -> Result<RatioStudy> {
    spec.validate()?;
    let id = if n == 3 { "strich3D" } else { "strichartz1" };
    let levels = [wave_level(n, grid, spec.max_degree, 2.0 * t)?, wave_level(n, &grid.refined(), spec.max_degree, 2.0 * t)?];
    let members: Vec<WaveMember> = (0..spec.count).map(|m| wave_member(spec, n, m)).collect::<Result<_>>()?;
    let run = |lvl: &WaveLevel| -> Vec<Result<Vec<Sample>>> { members.par_iter().map(|mb| free_member(n, mb, lvl, t)).collect() };
    let (base, fine) = (run(&levels[0]), run(&levels[1]));
    let desc: Vec<String> = members.iter().map(describe_wave).collect();
    let mut s = assemble(&[id], &desc, &base, &fine, true).remove(0);
    s.meta.insert("n".into(), n as f64);
    s.meta.insert("T".into(), t);
    s.meta.insert("sigma".into(), sigma_for(n));
    Ok(s)
}

/// Time profile of the forcing: sin²(πs/2) on [0, 2], zero after.
fn chi(s: f64) -> f64 {
    if (0.0..=2.0).contains(&s) {
        (PI * s / 2.0).sin().powi(2)
    } else {
        0.0
    }
}

/// ∫χ² ds.
const CHI_SQ_INTEGRAL: f64 = 0.75;

/// Weight exponent ε in ⟨x⟩^{1/2+ε}.
pub const WAVE_EPS: f64 = 0.1;

/// ‖⟨x⟩^{1/2+ε}|D|^{(n−1)/2}Λ_ω^σ G‖_{L²}, by synthesis of ρ^{(n−1)/2}Ǧ.
fn weighted_forcing_norm(n: usize, member: &WaveMember, lvl: &WaveLevel) -> Result<f64> {
    let ext = (n as f64 - 1.0) / 2.0;
    let fgrid = lvl.synth.fgrid();
    let rgrid = lvl.synth.rgrid();
    let mut acc = 0.0;
    for (ch, b) in member {
        let col: Vec<Complex64> = fgrid.nodes().iter().map(|&q| b.eval(q) * q.powf(ext)).collect();
        let pos = lvl.synth.synthesize(ch.k, &[col])?.remove(0);
        let dens: Vec<f64> = rgrid
            .nodes()
            .iter()
            .zip(&pos)
            .map(|(&r, v)| bracket(r).powf(1.0 + 2.0 * WAVE_EPS) * v.norm_sqr() * r.powi(n as i32 - 1))
            .collect();
        acc += bracket(ch.k as f64).powf(2.0 * sigma_for(n)) * rgrid.integrate(&dens);
    }
    Ok(acc.sqrt())
}

fn inhom_member(n: usize, member: &WaveMember, lvl: &WaveLevel, t: f64, shift: f64) -> Result<Vec<Sample>> {
    let dt = lvl.grid.dt;
    let short = lvl.grid.steps(t)?;
    let long = 2 * short;
    let lag = if shift > 0.0 { lvl.grid.steps(shift)? } else { 0 };
    let fgrid = lvl.synth.fgrid();
    let mut traj = Vec::new();
    let mut degrees = Vec::new();
    for (ch, b) in member {
        let g = b.sample(fgrid);
        let forcing: Vec<Vec<Complex64>> =
            (0..=long + lag).map(|m| g.iter().map(|v| v * chi(m as f64 * dt - shift)).collect()).collect();
        traj.push(lvl.synth.duhamel_many(ch.k, &forcing, dt)?);
        degrees.push(ch.k);
    }
    let (lhs, lhs_long) = endpoint_pair(n, lvl.synth.rgrid(), &degrees, &traj, dt, short + lag, long + lag)?;
    let rhs = CHI_SQ_INTEGRAL.sqrt() * weighted_forcing_norm(n, member, lvl)?;
    Ok(vec![Sample { lhs, lhs_long, rhs }])
}

/// Inhomogeneous Strichartz-smoothing estimate for the Duhamel term with
/// forcing χ(s)G: the endpoint norm against ‖⟨x⟩^{1/2+ε}|D|^{(n−1)/2}Λ_ω^σF‖.
pub fn strichartz_inhom_study(n: usize, spec: &EnsembleSpec, t: f64, grid: &WaveStudyGrid) -> Result<RatioStudy> {
    spec.validate()?;
    let levels = [wave_level(n, grid, spec.max_degree, 2.0 * t)?, wave_level(n, &grid.refined(), spec.max_degree, 2.0 * t)?];
    let members: Vec<WaveMember> = (0..spec.count).map(|m| wave_member(spec, n, m)).collect::<Result<_>>()?;
    let run = |lvl: &WaveLevel| -> Vec<Result<Vec<Sample>>> { members.par_iter().map(|mb| inhom_member(n, mb, lvl, t, 0.0)).collect() };
    let (base, fine) = (run(&levels[0]), run(&levels[1]));
    let desc: Vec<String> = members.iter().map(describe_wave).collect();
    let mut s = assemble(&["strichartz2"], &desc, &base, &fine, true).remove(0);
    s.meta.insert("n".into(), n as f64);
    s.meta.insert("T".into(), t);
    s.meta.insert("eps".into(), WAVE_EPS);
    Ok(s)
}

/// Relative change of the inhomogeneous ratio when the forcing is delayed
/// by `shift` (a multiple of dt) and the horizon extended to match.
pub fn inhom_translation_residual(n: usize, spec: &EnsembleSpec, t: f64, shift: f64, grid: &WaveStudyGrid) -> Result<f64> {
    let lvl = wave_level(n, grid, spec.max_degree, 2.0 * t + shift)?;
    let member = wave_member(spec, n, 0)?;
    let a = inhom_member(n, &member, &lvl, t, 0.0)?[0];
    let b = inhom_member(n, &member, &lvl, t, shift)?[0];
    Ok((b.lhs / b.rhs - a.lhs / a.rhs).abs() / (a.lhs / a.rhs))
}

/// Weighted transfer inequality: the s = 0 branch as an equality residual,
/// the s = 1 branch as a ratio study under refinement of the λ-grid.
pub fn genineq2_study(spec: &EnsembleSpec, drho: f64, rho_max: f64) -> Result<RatioStudy> {
    spec.validate()?;
    let n = 3;
    let members: Vec<WaveMember> = (0..spec.count).map(|m| wave_member(spec, n, m)).collect::<Result<_>>()?;
    let eval = |d: f64| -> Result<Vec<(f64, f64, f64)>> {
        let fgrid = Arc::new(RadialGrid::uniform_to(rho_max, d)?);
        members
            .par_iter()
            .map(|mb| {
                let cs = spectrum_of(n, mb, &fgrid, |_| 1.0)?;
                let s0 = weighted_transfer_check(0, 0.0, &cs)?;
                let s1 = weighted_transfer_check(1, 0.0, &cs)?;
                Ok(((s0.lhs / s0.rhs - 1.0).abs(), s1.lhs, s1.rhs))
            })
            .collect()
    };
    let base = eval(drho)?;
    let fine = eval(drho / 2.0)?;
    let records = base
        .iter()
        .enumerate()
        .map(|(m, &(_, l, r))| MemberRecord { id: m, descriptor: describe_wave(&members[m]), lhs: l, rhs: r, ratio: ratio(l, r) })
        .collect();
    let s0 = max_of(base.iter().chain(&fine).map(|x| x.0));
    let fine_max = max_of(fine.iter().filter_map(|&(_, l, r)| ratio(l, r)));
    let mut s = RatioStudy::new("genineq2", records);
    let base_max = s.max_ratio;
    s = s.with_refinement(base_max, fine_max, DRIFT_LIMIT);
    s.gates.push(Gate::at_most("s0_equality_residual", s0, 1e-6));
    s.meta.insert("s0_residual".into(), s0);
    Ok(s)
}

/// Product estimate on S²: ‖Λ^s(gh)‖/(‖Λ^s g‖‖Λ^s h‖) for random
/// coefficients decaying like ⟨k⟩^{−3}, at band 8 and refined to band 16.
pub fn prodest_study(spec: &EnsembleSpec, s: f64) -> Result<RatioStudy> {
    let draw = |m: usize, band: usize| -> (ScalarCoeffs, ScalarCoeffs) {
        let mut rng = spec.rng(m);
        let mut pair = [ScalarCoeffs::zeros(16), ScalarCoeffs::zeros(16)];
        for c in pair.iter_mut() {
            for k in 0..=16usize {
                for mm in -(k as i64)..=k as i64 {
                    let a = rng.random_range(0.5..=1.0) * bracket(k as f64).powi(-3);
                    c.set_m(k, mm, Complex64::from_polar(a, rng.random_range(0.0..2.0 * PI)));
                }
            }
        }
        (pair[0].with_band(band), pair[1].with_band(band))
    };
    let eval = |band: usize| -> Result<Vec<(f64, f64)>> {
        (0..spec.count)
            .into_par_iter()
            .map(|m| {
                let (g, h) = draw(m, band);
                sphere_product(&g, &h, s)
            })
            .collect()
    };
    let base = eval(8)?;
    let fine = eval(16)?;
    let records = base
        .iter()
        .enumerate()
        .map(|(m, &(l, r))| MemberRecord { id: m, descriptor: format!("band=8 seed={} member={m}", spec.seed), lhs: l, rhs: r, ratio: ratio(l, r) })
        .collect();
    let mut st = RatioStudy::new("prodest", records);
    let base_max = st.max_ratio;
    st = st.with_refinement(base_max, max_of(fine.iter().filter_map(|&(l, r)| ratio(l, r))), 0.05);
    st.meta.insert("s".into(), s);
    Ok(st)
}

// ---------------------------------------------------------------------------
// Dirac studies

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiracStudyGrid {
    pub r_max: f64,
    pub h: f64,
    pub dt: f64,
    pub rho_max: f64,
    pub drho: f64,
    /// Steps between norm frames.
    pub frame_every: usize,
}

impl Default for DiracStudyGrid {
    fn default() -> Self {
        Self { r_max: 32.0, h: 0.05, dt: 0.025, rho_max: 4.0, drho: 0.04, frame_every: 4 }
    }
}

impl DiracStudyGrid {
    pub fn refined(&self) -> Self {
        Self { h: self.h / 2.0, dt: self.dt / 2.0, drho: self.drho / 2.0, frame_every: self.frame_every * 2, ..self.clone() }
    }

    fn len(&self) -> usize {
        (self.r_max / self.h).round() as usize
    }
}

/// Weight exponent σ of w_σ(r) = r(1+|log r|)^σ in the smoothing norms.
pub const SMOOTHING_SIGMA: f64 = 2.0;

type DiracMember = Vec<(DiracChannelIndex, Bump, Bump)>;

fn dirac_member(spec: &EnsembleSpec, m: usize) -> DiracMember {
    let all = DiracChannelIndex::all(spec.max_degree.max(1) as i32 | 1);
    let mut rng = spec.rng(m);
    let mut out: DiracMember = Vec::new();
    while out.len() < spec.channels_per_member.min(all.len()) {
        let ch = all[rng.random_range(0..all.len())];
        let (a, b) = (spec.bump(&mut rng), spec.bump(&mut rng));
        if out.iter().all(|(c, _, _)| *c != ch) {
            out.push((ch, a, b));
        }
    }
    out
}

fn describe_dirac(m: &DiracMember) -> String {
    m.iter()
        .map(|(c, a, b)| format!("j2={} m2={} kappa={} +[{}] -[{}]", c.j2, c.m2, c.kappa, a.describe(), b.describe()))
        .collect::<Vec<_>>()
        .join("; ")
}

struct DiracLevel {
    grid: DiracStudyGrid,
    fgrid: Arc<RadialGrid>,
    plus: RiccatiBessel,
    minus: RiccatiBessel,
}

fn dirac_level(grid: &DiracStudyGrid, lmax: usize) -> Result<DiracLevel> {
    check_frame_spacing(grid.dt * grid.frame_every as f64, grid.rho_max)?;
    let (ug, sg) = staggered_grids(grid.h, grid.len())?;
    let fgrid = Arc::new(RadialGrid::uniform_to(grid.rho_max, grid.drho)?);
    Ok(DiracLevel {
        plus: RiccatiBessel::new(ug, fgrid.clone(), lmax)?,
        minus: RiccatiBessel::new(sg, fgrid.clone(), lmax)?,
        fgrid,
        grid: grid.clone(),
    })
}

fn dirac_spectrum(member: &DiracMember, fgrid: &Arc<RadialGrid>) -> DiracSpectrum {
    let entries = member.iter().map(|(c, a, b)| (*c, (a.sample(fgrid), b.sample(fgrid)))).collect();
    DiracSpectrum { fgrid: fgrid.clone(), entries, time: 0.0 }
}

/// Frame of a staggered state: ψ⁻ averaged onto the ψ⁺ nodes, exact
/// discrete L² and ‖𝒟·‖² per partial wave.
fn staggered_frame(grid: &Arc<RadialGrid>, solvers: &[DiracCnSolver], states: &[(Vec<Complex64>, Vec<Complex64>)]) -> Result<Frame> {
    let r = grid.nodes();
    let mut waves = Vec::with_capacity(2 * states.len());
    for (sv, (p, q)) in solvers.iter().zip(states) {
        let ch = sv.channel();
        let h = sv.h();
        let (dp, dq) = sv.dirac_sq(p, q);
        let qa = sv.minus_on_plus_nodes(q);
        waves.push(PartialWave {
            degree: ch.l_plus(),
            values: p.iter().zip(r).map(|(z, x)| z / x).collect(),
            l2_sq: Some(h * p.iter().map(|z| z.norm_sqr()).sum::<f64>()),
            grad_sq: Some(dp),
        });
        waves.push(PartialWave {
            degree: ch.l_minus(),
            values: qa.iter().zip(r).map(|(z, x)| z / x).collect(),
            l2_sq: Some(h * q.iter().map(|z| z.norm_sqr()).sum::<f64>()),
            grad_sq: Some(dq),
        });
    }
    Frame::new(grid.clone(), 3, waves)
}

/// Estimate ids of [`dirac_studies`], in order.
pub const DIRAC_ESTIMATES: [&str; 6] = ["freedirac", "smoothdir", "smoonablau", "enddiracV", "enddiracVang", "energyang"];

/// Runs one member; returns the six samples and the max relative L² drift.
fn dirac_member_run(member: &DiracMember, lvl: &DiracLevel, v: &PotentialSpec, t: f64, s: f64) -> Result<(Vec<Sample>, f64)> {
    let g = &lvl.grid;
    let short = (t / g.dt).round() as usize;
    if short == 0 || short % g.frame_every != 0 {
        return domain(format!("T = {t} must be a multiple of the frame spacing {}", g.dt * g.frame_every as f64));
    }
    let long = 2 * short;
    let spec = dirac_spectrum(member, &lvl.fgrid);
    let init = spectrum_to_staggered(&spec, &lvl.plus, &lvl.minus)?;
    let mut solvers = Vec::new();
    let mut states = Vec::new();
    for (ch, pq) in init {
        solvers.push(DiracCnSolver::new(ch, g.h, g.len(), g.dt, |r| v.radial(r))?);
        states.push(pq);
    }
    let w = WeightSpec::w_sigma(SMOOTHING_SIGMA);
    let mut ang = NormStream::new(NormConfig { s, symbol: AngularSymbol::Laplacian, smoothing: vec![w], gradient_smoothing: vec![w] });
    let mut plain = NormStream::new(NormConfig::default());
    let norm0: f64 = solvers.iter().zip(&states).map(|(sv, (p, q))| sv.norm_sq(p, q)).sum();
    let mut drift = 0.0f64;
    let grid = lvl.plus.pos().clone();
    let mut snap = [0.0; 6];
    for step in 0..=long {
        if step % g.frame_every == 0 {
            let fr = staggered_frame(&grid, &solvers, &states)?;
            let tt = step as f64 * g.dt;
            ang.push(tt, &fr)?;
            plain.push(tt, &fr)?;
            let nn: f64 = solvers.iter().zip(&states).map(|(sv, (p, q))| sv.norm_sq(p, q)).sum();
            drift = drift.max((nn / norm0 - 1.0).abs());
            if step == short {
                snap = [ang.endpoint(), ang.smoothing(0), ang.gradient_smoothing(0), plain.endpoint(), ang.endpoint(), ang.energy_sup()];
            }
        }
        if step < long {
            for (sv, (p, q)) in solvers.iter().zip(states.iter_mut()) {
                sv.step(p, q)?;
            }
        }
    }
    let fin = [ang.endpoint(), ang.smoothing(0), ang.gradient_smoothing(0), plain.endpoint(), ang.endpoint(), ang.energy_sup()];
    let rhs = [
        spec.sobolev_sq(1, s, true).sqrt(),
        spec.l2_sq().sqrt(),
        spec.sobolev_sq(1, 0.0, false).sqrt(),
        spec.sobolev_sq(1, 0.0, false).sqrt(),
        spec.sobolev_sq(1, s, false).sqrt(),
        spec.sobolev_sq(1, s, false).sqrt(),
    ];
    Ok(((0..6).map(|e| Sample { lhs: snap[e], lhs_long: fin[e], rhs: rhs[e] }).collect(), drift))
}

/// The Dirac ratio studies for one potential: smoothing, derivative
/// smoothing, endpoint, angular endpoint and angular energy estimates, plus
/// the free endpoint estimate when V = 0. The potential is checked against
/// its decay hypothesis on the grid first.
pub fn dirac_studies(v: &PotentialSpec, spec: &EnsembleSpec, t: f64, s: f64, grid: &DiracStudyGrid) -> Result<Vec<RatioStudy>> {
    spec.validate()?;
    if !matches!(v.kind, crate::nld::PotentialKind::None | crate::nld::PotentialKind::RadialScalar) {
        return Err(Error::Spec("channel Dirac studies take a radial scalar potential".into()));
    }
    let fine_grid = grid.refined();
    let lmax = (spec.max_degree + 1) / 2;
    let levels = [dirac_level(grid, lmax)?, dirac_level(&fine_grid, lmax)?];
    let check = v.validate(levels[1].plus.pos().nodes(), s)?;
    let members: Vec<DiracMember> = (0..spec.count).map(|m| dirac_member(spec, m)).collect();
    let run = |lvl: &DiracLevel| -> Vec<Result<(Vec<Sample>, f64)>> { members.par_iter().map(|mb| dirac_member_run(mb, lvl, v, t, s)).collect() };
    let split = |rs: Vec<Result<(Vec<Sample>, f64)>>| -> (Vec<Result<Vec<Sample>>>, f64) {
        let drift = max_of(rs.iter().filter_map(|r| r.as_ref().ok().map(|x| x.1)));
        (rs.into_iter().map(|r| r.map(|x| x.0)).collect(), drift)
    };
    let (base, d0) = split(run(&levels[0]));
    let (fine, d1) = split(run(&levels[1]));
    let desc: Vec<String> = members.iter().map(describe_dirac).collect();
    let first = if v.is_none() { 0 } else { 1 };
    let mut out = assemble(&DIRAC_ESTIMATES, &desc, &base, &fine, true);
    let l2_drift = d0.max(d1);
    for st in out.iter_mut() {
        st.meta.insert("delta".into(), if v.is_none() { 0.0 } else { v.delta });
        st.meta.insert("amplitude".into(), if v.is_none() { 0.0 } else { v.amplitude });
        st.meta.insert("sigma_weight".into(), SMOOTHING_SIGMA);
        st.meta.insert("s".into(), s);
        st.meta.insert("T".into(), t);
        st.meta.insert("l2_drift".into(), l2_drift);
        st.meta.insert("delta_needed".into(), check.delta_needed);
        st.meta.insert("gradient_constant".into(), check.gradient_constant);
        st.gates.push(Gate::at_most("l2_conservation", l2_drift, 1e-8));
    }
    Ok(out.split_off(first))
}

/// Richardson ratio of the Crank–Nicolson Dirac step at dt, dt/2, dt/4 and
/// its L² drift, on one channel with an admissible potential.
pub fn dirac_cn_checks(v: &PotentialSpec) -> Result<Vec<CheckEntry>> {
    let grid = DiracStudyGrid { r_max: 20.0, ..DiracStudyGrid::default() };
    let lvl = dirac_level(&grid, 2)?;
    let spec = EnsembleSpec { seed: 11, count: 1, max_degree: 3, channels_per_member: 2, band: [1.0, 1.5], width: [0.2, 0.25] };
    let member = dirac_member(&spec, 0);
    let init = spectrum_to_staggered(&dirac_spectrum(&member, &lvl.fgrid), &lvl.plus, &lvl.minus)?;
    let t_end = 2.0;
    let run = |dt: f64| -> Result<(Vec<Complex64>, f64)> {
        let mut all = Vec::new();
        let mut drift = 0.0f64;
        for (ch, (p0, q0)) in &init {
            let sv = DiracCnSolver::new(*ch, grid.h, grid.len(), dt, |r| v.radial(r))?;
            let (mut p, mut q) = (p0.clone(), q0.clone());
            let n0 = sv.norm_sq(&p, &q);
            for _ in 0..(t_end / dt).round() as usize {
                sv.step(&mut p, &mut q)?;
                drift = drift.max((sv.norm_sq(&p, &q) / n0 - 1.0).abs());
            }
            all.extend(p);
            all.extend(q);
        }
        Ok((all, drift))
    };
    let dt = 0.1;
    let (a, da) = run(dt)?;
    let (b, db) = run(dt / 2.0)?;
    let (c, dc) = run(dt / 4.0)?;
    let diff = |x: &[Complex64], y: &[Complex64]| x.iter().zip(y).map(|(u, w)| (u - w).norm_sqr()).sum::<f64>().sqrt();
    let r = diff(&a, &b) / diff(&b, &c);
    Ok(vec![CheckEntry::new("cn_richardson_ratio_minus_4", (r - 4.0).abs(), 0.4), CheckEntry::new("cn_l2_drift", da.max(db).max(dc), 1e-8)])
}

// ---------------------------------------------------------------------------
// Wave equation with a potential

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WavePotentialGrid {
    pub r_max: f64,
    pub h: f64,
    pub dt: f64,
    pub frame_every: usize,
    pub rho_max: f64,
    pub drho: f64,
    /// Eigenmodes above this frequency are dropped in the smoothing study.
    pub omega_max: f64,
}

impl Default for WavePotentialGrid {
    fn default() -> Self {
        Self { r_max: 32.0, h: 0.08, dt: 0.025, frame_every: 4, rho_max: 4.0, drho: 0.04, omega_max: 8.0 }
    }
}

impl WavePotentialGrid {
    pub fn refined(&self) -> Self {
        Self { h: self.h / 2.0, dt: self.dt / 2.0, frame_every: self.frame_every * 2, ..self.clone() }
    }

    fn len(&self) -> usize {
        (self.r_max / self.h).round() as usize
    }
}

/// V = δ/(2(1+r²)), inside the wave decay class for every ε ≤ 1/2.
pub fn wave_admissible_potential(delta: f64) -> impl Fn(f64) -> f64 + Copy + Sync {
    move |r: f64| delta / (2.0 * (1.0 + r * r))
}

/// Checks V₊ ≤ C/(r^{1/2−ε}+r²) and V₋ ≤ δ/(r^{1/2−ε}+r²) at the nodes and
/// returns (C_needed, δ_needed).
pub fn wave_potential_class(v: impl Fn(f64) -> f64, nodes: &[f64], eps: f64) -> (f64, f64) {
    let mut c: f64 = 0.0;
    let mut d: f64 = 0.0;
    for &r in nodes {
        let w = r.powf(0.5 - eps) + r * r;
        let x = v(r);
        if x > 0.0 {
            c = c.max(x * w);
        } else {
            d = d.max(-x * w);
        }
    }
    (c, d)
}

type WaveDataMember = Vec<(ChannelIndex, Bump, Bump)>;

fn wave_data_member(spec: &EnsembleSpec, m: usize) -> Result<WaveDataMember> {
    let base = wave_member(spec, 3, m)?;
    let mut rng = spec.rng(m + (1 << 32));
    Ok(base.into_iter().map(|(c, a)| (c, a, spec.bump(&mut rng))).collect())
}

struct WavePotLevel {
    grid: WavePotentialGrid,
    cn: BTreeMap<usize, WaveCnSolver>,
    eig: BTreeMap<usize, HalfWaveEigen>,
    synth: WaveSynth,
}

fn wave_pot_level(grid: &WavePotentialGrid, kmax: usize, v: impl Fn(f64) -> f64 + Copy) -> Result<WavePotLevel> {
    check_frame_spacing(grid.dt * grid.frame_every as f64, grid.rho_max)?;
    let len = grid.len();
    let rgrid = Arc::new(RadialGrid::uniform(grid.h, len)?);
    let fgrid = Arc::new(RadialGrid::uniform_to(grid.rho_max, grid.drho)?);
    let mut cn = BTreeMap::new();
    let mut eig = BTreeMap::new();
    for k in 0..=kmax {
        cn.insert(k, WaveCnSolver::new(k, 3, grid.h, len, grid.dt, v)?);
        eig.insert(k, HalfWaveEigen::new(k, 3, grid.h, len, v)?);
    }
    Ok(WavePotLevel { grid: grid.clone(), cn, eig, synth: WaveSynth::new(3, rgrid, fgrid, kmax, 0.0)? })
}

/// Estimate ids of [`wave_potential_study`], in order.
pub const WAVE_POTENTIAL_ESTIMATES: [&str; 3] = ["endWEV", "endWEV_forced", "smooWE"];

fn wave_pot_member(member: &WaveDataMember, lvl: &WavePotLevel, t: f64) -> Result<Vec<Sample>> {
    let g = &lvl.grid;
    let short = (t / g.dt).round() as usize;
    if short == 0 || short % g.frame_every != 0 {
        return domain(format!("T = {t} must be a multiple of the frame spacing {}", g.dt * g.frame_every as f64));
    }
    let long = 2 * short;
    let rgrid = lvl.synth.rgrid().clone();
    let fgrid = lvl.synth.fgrid().clone();
    let c3 = (2.0 * PI).powi(3);
    let spectral = |b: &Bump, p: i32| -> f64 {
        let d: Vec<f64> = fgrid.nodes().iter().map(|&q| b.eval(q).norm_sqr() * q.powi(p + 2)).collect();
        c3 * fgrid.integrate(&d)
    };
    let (mut hdot_f, mut l2_g, mut l2_f, mut forcing) = (0.0, 0.0, 0.0, 0.0);
    let mut homo = Vec::new();
    let mut forced = Vec::new();
    let mut smooth = Vec::new();
    let mut degrees = Vec::new();
    let mut dropped = 0.0f64;
    let frame_times: Vec<f64> = (0..=long / g.frame_every).map(|i| (i * g.frame_every) as f64 * g.dt).collect();
    for (ch, a, b) in member {
        let f = lvl.synth.synthesize(ch.k, &[a.sample(&fgrid)])?.remove(0);
        let gv = lvl.synth.synthesize(ch.k, &[b.sample(&fgrid)])?.remove(0);
        hdot_f += spectral(a, 2);
        l2_g += spectral(b, 0);
        l2_f += spectral(a, 0);
        let dens: Vec<f64> = rgrid.nodes().iter().zip(&f).map(|(&r, z)| bracket(r).powf(1.0 + 2.0 * WAVE_EPS) * z.norm_sqr() * r * r).collect();
        forcing += rgrid.integrate(&dens);
        let cn = &lvl.cn[&ch.k];
        // Homogeneous data (f, g).
        let (mut psi, mut pi) = (cn.from_u(&f), cn.from_u(&gv));
        let mut tr = vec![cn.to_u(&psi)];
        for step in 1..=long {
            cn.step(&mut psi, &mut pi, None, None)?;
            if step % g.frame_every == 0 {
                tr.push(cn.to_u(&psi));
            }
        }
        homo.push(tr);
        // Zero data, forcing χ(s) f.
        let fpsi = cn.from_u(&f);
        let (mut psi, mut pi) = (vec![ZERO; fpsi.len()], vec![ZERO; fpsi.len()]);
        let mut tr = vec![cn.to_u(&psi)];
        for step in 1..=long {
            let (c0, c1) = (chi((step - 1) as f64 * g.dt), chi(step as f64 * g.dt));
            let f0: Vec<Complex64> = fpsi.iter().map(|z| z * c0).collect();
            let f1: Vec<Complex64> = fpsi.iter().map(|z| z * c1).collect();
            cn.step(&mut psi, &mut pi, Some(&f0), Some(&f1))?;
            if step % g.frame_every == 0 {
                tr.push(cn.to_u(&psi));
            }
        }
        forced.push(tr);
        let eig = &lvl.eig[&ch.k];
        let (tr, d) = eig.evolve_band(&eig.coefficients(&f), &frame_times, g.omega_max);
        dropped = dropped.max(d);
        smooth.push(tr);
        degrees.push(ch.k);
    }
    if dropped > 1e-6 {
        return Err(Error::Resolution(format!("eigenmodes above omega_max carry {dropped:.2e} of the data")));
    }
    let frames_short = short / g.frame_every;
    let frames_long = long / g.frame_every;
    let fdt = g.dt * g.frame_every as f64;
    let (h0, h1) = endpoint_pair(3, &rgrid, &degrees, &homo, fdt, frames_short, frames_long)?;
    let (f0, f1) = endpoint_pair(3, &rgrid, &degrees, &forced, fdt, frames_short, frames_long)?;
    let mut st = NormStream::new(NormConfig { smoothing: vec![WeightSpec::tau_eps_pow(WAVE_EPS, 2.0)], ..NormConfig::default() });
    let mut s_short = 0.0;
    for m in 0..=frames_long {
        let waves = degrees.iter().zip(&smooth).map(|(&k, tr)| PartialWave::new(k, tr[m].clone())).collect();
        st.push(m as f64 * fdt, &Frame::new(rgrid.clone(), 3, waves)?)?;
        if m == frames_short {
            s_short = st.smoothing(0);
        }
    }
    Ok(vec![
        Sample { lhs: h0, lhs_long: h1, rhs: hdot_f.sqrt() + l2_g.sqrt() },
        Sample { lhs: f0, lhs_long: f1, rhs: CHI_SQ_INTEGRAL.sqrt() * forcing.sqrt() },
        Sample { lhs: s_short, lhs_long: st.smoothing(0), rhs: l2_f.sqrt() },
    ])
}

/// Endpoint Strichartz (homogeneous data and pure forcing) and weighted
/// smoothing for u_tt − Δu + Vu = F in three dimensions, with
/// V = δ/(2(1+r²)) (δ = 0 gives the free baseline).
pub fn wave_potential_study(delta: f64, spec: &EnsembleSpec, t: f64, grid: &WavePotentialGrid) -> Result<Vec<RatioStudy>> {
    spec.validate()?;
    let v = wave_admissible_potential(delta);
    let fine_grid = grid.refined();
    let levels = [wave_pot_level(grid, spec.max_degree, v)?, wave_pot_level(&fine_grid, spec.max_degree, v)?];
    let nodes: Vec<f64> = (1..=fine_grid.len()).map(|i| i as f64 * fine_grid.h).collect();
    let (c_needed, d_needed) = wave_potential_class(v, &nodes, WAVE_EPS);
    let members: Vec<WaveDataMember> = (0..spec.count).map(|m| wave_data_member(spec, m)).collect::<Result<_>>()?;
    let run = |lvl: &WavePotLevel| -> Vec<Result<Vec<Sample>>> { members.par_iter().map(|mb| wave_pot_member(mb, lvl, t)).collect() };
    let (base, fine) = (run(&levels[0]), run(&levels[1]));
    let desc: Vec<String> = members
        .iter()
        .map(|m| m.iter().map(|(c, a, b)| format!("k={} l={} f[{}] g[{}]", c.k, c.l, a.describe(), b.describe())).collect::<Vec<_>>().join("; "))
        .collect();
    let mut out = assemble(&WAVE_POTENTIAL_ESTIMATES, &desc, &base, &fine, true);
    for st in out.iter_mut() {
        st.meta.insert("delta".into(), delta);
        st.meta.insert("eps".into(), WAVE_EPS);
        st.meta.insert("T".into(), t);
        st.meta.insert("positive_part_constant".into(), c_needed);
        st.meta.insert("negative_part_delta".into(), d_needed);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Nonlinear Dirac

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NldReport {
    pub eps: f64,
    pub t_end: f64,
    /// sup_t ‖Λ_ω^s u‖_{H¹} at the run resolution and the check resolution.
    pub sup_lambda_h1: [f64; 2],
    pub x_half: f64,
    pub x_end: f64,
    pub picard_residual: f64,
    pub diagnostics: Vec<NldDiagnostics>,
    pub gates: Vec<Gate>,
}

impl NldReport {
    pub fn passes(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }
}

/// Initial data with a = b bumps on every channel with j ≤ 3/2 and seeded
/// phases, scaled so ‖Λ_ω^s f‖_{H¹} = ε.
pub fn nld_initial_data(solver: &NldSolver, eps: f64, seed: u64) -> DiracSpectrum {
    let mut spec = solver.zero_spectrum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = solver.transform().freq().nodes().to_vec();
    for (ch, (a, b)) in spec.entries.iter_mut() {
        if ch.j2 > 3 {
            continue;
        }
        let bump = Bump { center: 1.0, width: 0.25, amp: 1.0, phase: rng.random_range(0.0..2.0 * PI) };
        for (j, &q) in rho.iter().enumerate() {
            a[j] = bump.eval(q);
            b[j] = a[j];
        }
    }
    let norm = spec.sobolev_sq(1, solver.config().s, false).sqrt();
    for (a, b) in spec.entries.values_mut() {
        for z in a.iter_mut().chain(b.iter_mut()) {
            *z *= eps / norm;
        }
    }
    spec
}

/// Small-data run of the cubic Dirac equation with the mass cubic: size of
/// the solution at two resolutions, T-stability of the running X norm over
/// the second half, and the Picard self-consistency residual.
pub fn nld_study(cfg: &NldConfig, check_cfg: &NldConfig, v: &PotentialSpec, eps: f64, t_end: f64, seed: u64) -> Result<NldReport> {
    let solver = NldSolver::new(cfg.clone(), v.clone(), CubicSpec::mass_cubic())?;
    let f = nld_initial_data(&solver, eps, seed);
    let run = nld_simulate(&solver, &f, t_end, true)?;
    let sup = max_of(run.diagnostics.iter().map(|d| d.lambda_h1));
    let half = run.diagnostics.len() / 2;
    let x_half = run.diagnostics[half].x_running;
    let x_end = run.x_norm;
    let (phi, _) = picard_iterate(&solver, &run.states, &f)?;
    let diff = trajectory_difference(&phi, &run.states)?;
    let picard_residual = solver.x_norm_of(&diff)? / x_end;
    let check = NldSolver::new(check_cfg.clone(), v.clone(), CubicSpec::mass_cubic())?;
    let f2 = nld_initial_data(&check, eps, seed);
    let run2 = nld_simulate(&check, &f2, t_end, false)?;
    let sup2 = max_of(run2.diagnostics.iter().map(|d| d.lambda_h1));
    let gates = vec![
        Gate::at_most("sup_lambda_h1_over_eps", sup / eps, 2.0),
        Gate::at_most("sup_lambda_h1_over_eps_check_grid", sup2 / eps, 2.0),
        Gate::at_most("x_growth_second_half", x_end / x_half - 1.0, GROWTH_LIMIT),
        Gate::at_most("picard_residual", picard_residual, 1e-3),
    ];
    Ok(NldReport { eps, t_end, sup_lambda_h1: [sup, sup2], x_half, x_end, picard_residual, diagnostics: run.diagnostics, gates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub gates: Vec<Gate>,
}

fn linear_trajectory(solver: &NldSolver, f: &DiracSpectrum, steps: usize) -> Result<Vec<DiracSpectrum>> {
    let mut u = solver.embed(f)?;
    let mut out = vec![u.clone()];
    for _ in 0..steps {
        u = solver.linear_step(&u)?;
        out.push(u.clone());
    }
    Ok(out)
}

fn scaled(traj: &[DiracSpectrum], c: f64) -> Vec<DiracSpectrum> {
    traj.iter()
        .map(|s| {
            let mut o = s.clone();
            for (a, b) in o.entries.values_mut() {
                for z in a.iter_mut().chain(b.iter_mut()) {
                    *z *= c;
                }
            }
            o
        })
        .collect()
}

/// Lipschitz ratio ‖Φ(v)−Φ(w)‖_X/‖v−w‖_X of the Duhamel part of the Picard
/// map for v = R v̂, w = R ŵ with ‖v̂‖_X = 1 and ‖ŵ‖_X = 1/2, and the
/// log-log slope over the radii.
pub fn contraction_study(cfg: &NldConfig, t_end: f64, seed: u64, radii: &[f64]) -> Result<ContractionReport> {
    if radii.len() < 2 {
        return domain("contraction fit needs at least two radii");
    }
    let solver = NldSolver::new(cfg.clone(), PotentialSpec::none(), CubicSpec::mass_cubic())?;
    let steps = (t_end / cfg.dt).round() as usize;
    let v_hat = linear_trajectory(&solver, &nld_initial_data(&solver, 1.0, seed), steps)?;
    let w_hat = linear_trajectory(&solver, &nld_initial_data(&solver, 1.0, seed.wrapping_add(1)), steps)?;
    let v_hat = scaled(&v_hat, 1.0 / solver.x_norm_of(&v_hat)?);
    let w_hat = scaled(&w_hat, 0.5 / solver.x_norm_of(&w_hat)?);
    let base_diff = solver.x_norm_of(&trajectory_difference(&v_hat, &w_hat)?)?;
    if base_diff == 0.0 {
        return domain("v and w coincide; Lipschitz ratio undefined");
    }
    let zero = solver.zero_spectrum();
    let mut ratios = Vec::new();
    for &r in radii {
        let (pv, _) = picard_iterate(&solver, &scaled(&v_hat, r), &zero)?;
        let (pw, _) = picard_iterate(&solver, &scaled(&w_hat, r), &zero)?;
        let num = solver.x_norm_of(&trajectory_difference(&pv, &pw)?)?;
        ratios.push(num / (r * base_diff));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let gates = vec![Gate::at_most("slope_minus_2", (slope - 2.0).abs(), 0.3)];
    Ok(ContractionReport { radii: radii.to_vec(), ratios, slope, intercept, gates })
}

/// Reduced configuration for the contraction fit, whose exponent is fixed
/// by homogeneity rather than resolution.
pub fn contraction_config() -> NldConfig {
    NldConfig { jmax2: 7, band: 8, dr: 0.2, r_max: 30.0, drho: 0.05, rho_max: 3.0, dt: 0.2, s: 1.5 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_is_reproducible() {
        let s = EnsembleSpec::default();
        let a = wave_member(&s, 3, 5).unwrap();
        let b = wave_member(&s, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, wave_member(&s, 3, 6).unwrap());
    }

    #[test]
    fn zero_rhs_is_guarded() {
        assert_eq!(ratio(0.0, 0.0), None);
        let st = RatioStudy::new("x", vec![MemberRecord { id: 0, descriptor: String::new(), lhs: 0.0, rhs: 0.0, ratio: None }]);
        assert!(!st.passes());
    }

    #[test]
    fn algebra() {
        for c in algebra_checks() {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn lemma_n3_and_n4() {
        assert!(lemma_qk_study(3, 40).unwrap().passes());
        assert!(lemma_qk_study(4, 40).unwrap().passes());
    }

    #[test]
    fn small_free_study_runs() {
        let spec = EnsembleSpec { count: 3, max_degree: 2, ..EnsembleSpec::default() };
        let grid = WaveStudyGrid { r_max: 16.0, dr: 0.1, rho_max: 5.0, drho: 0.05, dt: 0.125 };
        let st = strichartz_free_study(3, &spec, 4.0, &grid).unwrap();
        assert_eq!(st.ensemble.len(), 3);
        assert!(st.max_ratio.is_finite() && st.max_ratio > 0.0);
        assert!(st.to_csv().lines().count() == 4);
    }

    #[test]
    fn product_estimate_is_stable_under_band_doubling() {
        let spec = EnsembleSpec { seed: 50, count: 20, ..EnsembleSpec::default() };
        let st = prodest_study(&spec, 1.5).unwrap();
        assert!(st.passes(), "{:?}", st.gates);
    }

    #[test]
    fn translated_forcing_leaves_the_ratio_unchanged() {
        let spec = EnsembleSpec { count: 1, max_degree: 2, ..EnsembleSpec::default() };
        let grid = WaveStudyGrid { r_max: 16.0, dr: 0.1, rho_max: 5.0, drho: 0.05, dt: 0.125 };
        assert!(inhom_translation_residual(3, &spec, 2.0, 1.0, &grid).unwrap() < 1e-6);
    }

    #[test]
    fn contraction_slope_small() {
        let cfg = NldConfig { jmax2: 3, band: 4, dr: 0.25, r_max: 20.0, drho: 0.07, rho_max: 3.0, dt: 0.25, s: 1.5 };
        let rep = contraction_study(&cfg, 2.0, 3, &[1e-3, 1e-2]).unwrap();
        assert!((rep.slope - 2.0).abs() < 0.1, "{rep:?}");
    }
}
