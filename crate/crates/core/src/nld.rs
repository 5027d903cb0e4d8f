//! The cubic Dirac equation i∂_t u = 𝒟u + V u + P₃(u, ū) in three
//! dimensions: split-step integration with a collocation nonlinearity, and
//! the Picard map Φ(v) = e^{−it(𝒟+V)}f − i∫₀^t e^{−i(t−t')(𝒟+V)}P₃(v) dt'.
//!
//! The state is held as a [`DiracSpectrum`]. Each step is
//! L(dt/2) N(dt) L(dt/2), with L the exact free flow and N the pointwise
//! flow of V + P₃ on the (r, ω) collocation grid. Only the increment N(u) − u
//! is carried back to channel form, so a zero nonlinearity costs nothing and
//! the channel projection acts as the de-aliasing filter.

use crate::error::{domain, Error, Result};
use crate::norms::{check_x_regularity, Frame, NormConfig, NormStream, PartialWave};
use crate::propagators::{DiracSpectrum, RiccatiBessel};
use crate::radial::{weight_eval, AngularSymbol, RadialGrid, WeightSpec};
use crate::specfun::bracket;
use crate::sphere::{spinor_accumulate, spinor_components, spinor_project, spinor_synthesize, DiracChannelIndex, ScalarCoeffs, SphereGrid, SpinorSign};
use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

// ---------------------------------------------------------------------------
// Cubic terms

/// One factor u_c or ū_c of a monomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub comp: usize,
    #[serde(default)]
    pub conj: bool,
}

/// coeff · Π factors, added to output component `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: Complex64,
    pub out: usize,
    pub factors: Vec<Factor>,
}

/// Homogeneous cubic P₃(u, ū).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CubicSpec {
    Zero,
    /// g |u|² u.
    MassCubic { coupling: f64 },
    Monomials { terms: Vec<Monomial> },
}

impl CubicSpec {
    pub fn mass_cubic() -> Self {
        CubicSpec::MassCubic { coupling: 1.0 }
    }

    pub fn monomials(terms: Vec<Monomial>) -> Result<Self> {
        let spec = CubicSpec::Monomials { terms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CubicSpec::Zero => Ok(()),
            CubicSpec::MassCubic { coupling } => {
                if coupling.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Spec("mass cubic coupling must be finite".into()))
                }
            }
            CubicSpec::Monomials { terms } => {
                for (i, t) in terms.iter().enumerate() {
                    if t.factors.len() != 3 {
                        return Err(Error::Spec(format!("monomial {i} has degree {}, not 3", t.factors.len())));
                    }
                    if t.out > 3 || t.factors.iter().any(|f| f.comp > 3) {
                        return Err(Error::Spec(format!("monomial {i} refers to a component outside 0..4")));
                    }
                    if !(t.coeff.re.is_finite() && t.coeff.im.is_finite()) {
                        return Err(Error::Spec(format!("monomial {i} has a non-finite coefficient")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CubicSpec::Zero => true,
            CubicSpec::MassCubic { coupling } => *coupling == 0.0,
            CubicSpec::Monomials { terms } => terms.is_empty(),
        }
    }
}

/// P₃ at one point.
pub fn cubic_point(spec: &CubicSpec, u: &[Complex64; 4]) -> [Complex64; 4] {
    match spec {
        CubicSpec::Zero => [ZERO; 4],
        CubicSpec::MassCubic { coupling } => {
            let m: f64 = u.iter().map(|c| c.norm_sqr()).sum();
            u.map(|c| c * m * coupling)
        }
        CubicSpec::Monomials { terms } => {
            let mut out = [ZERO; 4];
            for t in terms {
                let mut p = t.coeff;
                for f in &t.factors {
                    p *= if f.conj { u[f.comp].conj() } else { u[f.comp] };
                }
                out[t.out] += p;
            }
            out
        }
    }
}

/// Pointwise evaluation of P₃ on collocation values.
pub fn cubic_eval(spec: &CubicSpec, u: &[[Complex64; 4]]) -> Vec<[Complex64; 4]> {
    u.iter().map(|v| cubic_point(spec, v)).collect()
}

// ---------------------------------------------------------------------------
// Potentials

/// Radial profile shapes; the potential is amplitude × shape(r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialShape {
    /// ⟨r⟩^{−decay}
    Bracket { decay: f64 },
    /// 1/(1+r²)
    Lorentzian,
    /// 1/v_σ(r) with the validator's σ
    InverseV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialKind {
    None,
    RadialScalar,
    /// amplitude·shape(r)·(1 + tilt·cos θ)·M with M hermitian.
    HermitianMatrix {
        matrix: [[Complex64; 4]; 4],
        #[serde(default)]
        tilt: f64,
    },
}

/// V with the decay parameters (δ, σ) it is checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub shape: RadialShape,
    pub amplitude: f64,
    pub delta: f64,
    pub sigma: f64,
}

/// Outcome of the decay validator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialCheck {
    /// max_r |V(r)|·v_σ(r): the smallest admissible δ on these nodes.
    pub delta_needed: f64,
    /// max_r |∂_r V(r)|·v_σ(r): the empirical gradient constant C.
    pub gradient_constant: f64,
    /// max_r ‖Λ_ω^s V(r·)‖_{L²(S²)}/√(4π) · v_σ(r) for the angular hypothesis.
    pub angular_delta: f64,
}

/// 1/sup_r(v_σ(r)/⟨r⟩^{1+σ}): the largest κ with κ⟨r⟩^{−1−σ} ≤ 1/v_σ.
pub fn kappa_sigma(sigma: f64) -> f64 {
    kappa_decay(sigma, 1.0 + sigma)
}

/// 1/sup_r v_σ(r)⟨r⟩^{−decay}, so δ·κ·⟨r⟩^{−decay} sits exactly at strength δ.
pub fn kappa_decay(sigma: f64, decay: f64) -> f64 {
    let mut sup: f64 = 1.0;
    for i in 0..=20000 {
        let r = (-12.0 + 16.0 * i as f64 / 20000.0f64).exp();
        sup = sup.max(weight_eval(&WeightSpec::v_sigma(sigma), r) / bracket(r).powf(decay));
    }
    1.0 / sup
}

impl PotentialSpec {
    pub fn none() -> Self {
        Self { kind: PotentialKind::None, shape: RadialShape::Lorentzian, amplitude: 0.0, delta: 0.0, sigma: 2.0 }
    }

    /// V = δ κ_σ ⟨r⟩^{−1−σ}, the largest bracket profile under δ/v_σ with a
    /// bounded gradient.
    pub fn dirac_admissible(delta: f64, sigma: f64) -> Self {
        Self::dirac_bracket(delta, sigma, 1.0 + sigma)
    }

    /// δ-strength ⟨r⟩^{−decay} profile; admissible for decay ≥ 1 + σ.
    pub fn dirac_bracket(delta: f64, sigma: f64, decay: f64) -> Self {
        Self {
            kind: PotentialKind::RadialScalar,
            shape: RadialShape::Bracket { decay },
            amplitude: delta * kappa_decay(sigma, decay),
            delta: delta.abs(),
            sigma,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, PotentialKind::None) || self.amplitude == 0.0
    }

    fn shape_at(&self, r: f64) -> f64 {
        match self.shape {
            RadialShape::Bracket { decay } => bracket(r).powf(-decay),
            RadialShape::Lorentzian => 1.0 / (1.0 + r * r),
            RadialShape::InverseV => 1.0 / weight_eval(&WeightSpec::v_sigma(self.sigma), r),
        }
    }

    /// The radial factor amplitude·shape(r).
    pub fn radial(&self, r: f64) -> f64 {
        if self.is_none() {
            0.0
        } else {
            self.amplitude * self.shape_at(r)
        }
    }

    fn matrix_norm_and_angular(&self) -> Result<(f64, f64)> {
        match &self.kind {
            PotentialKind::None | PotentialKind::RadialScalar => Ok((1.0, 1.0)),
            PotentialKind::HermitianMatrix { matrix, tilt } => {
                let m = to_matrix(matrix);
                if (m - m.adjoint()).norm() > 1e-12 * m.norm().max(1.0) {
                    return Err(Error::Spec("potential matrix is not hermitian".into()));
                }
                let eig = SymmetricEigen::new(m);
                let op = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
                // ‖Λ^s(1 + a cos θ)‖/√(4π) with cos θ of degree 1.
                Ok((op * (1.0 + tilt.abs()), op))
            }
        }
    }

    /// Checks |V(x)| ≤ δ/v_σ(r) at every node and reports the constants.
    pub fn validate(&self, nodes: &[f64], s: f64) -> Result<PotentialCheck> {
        if !(self.sigma > 1.0) {
            return Err(Error::Spec(format!("decay exponent sigma = {} must exceed 1", self.sigma)));
        }
        let (pointwise, op) = self.matrix_norm_and_angular()?;
        let tilt = match &self.kind {
            PotentialKind::HermitianMatrix { tilt, .. } => *tilt,
            _ => 0.0,
        };
        let angular = op * (1.0 + tilt * tilt * 3f64.powf(s) / 3.0).sqrt();
        let vs = WeightSpec::v_sigma(self.sigma);
        let mut chk = PotentialCheck { delta_needed: 0.0, gradient_constant: 0.0, angular_delta: 0.0 };
        if self.is_none() {
            return Ok(chk);
        }
        for &r in nodes {
            let w = weight_eval(&vs, r);
            let v = self.radial(r).abs();
            if !v.is_finite() {
                return Err(Error::Hypothesis { r, detail: "potential is not finite".into() });
            }
            let h = 1e-6 * r.max(1e-3);
            let dv = (self.radial(r + h) - self.radial((r - h).max(r * 0.5))) / (r + h - (r - h).max(r * 0.5));
            chk.delta_needed = chk.delta_needed.max(v * pointwise * w);
            chk.gradient_constant = chk.gradient_constant.max(dv.abs() * pointwise * w);
            chk.angular_delta = chk.angular_delta.max(v * angular * w);
            if v * pointwise * w > self.delta * (1.0 + 1e-9) {
                return Err(Error::Hypothesis {
                    r,
                    detail: format!("|V| = {:.4e} exceeds delta/v_sigma = {:.4e}", v * pointwise, self.delta / w),
                });
            }
        }
        Ok(chk)
    }
}

fn to_matrix(m: &[[Complex64; 4]; 4]) -> Matrix4<Complex64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

/// exp(−iθM) for every θ from one eigen-decomposition of M.
#[derive(Debug, Clone)]
struct MatrixExp {
    vecs: Matrix4<Complex64>,
    vals: [f64; 4],
}

impl MatrixExp {
    fn new(m: &[[Complex64; 4]; 4]) -> Self {
        let eig = SymmetricEigen::new(to_matrix(m));
        Self { vecs: eig.eigenvectors, vals: [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2], eig.eigenvalues[3]] }
    }

    fn apply(&self, theta: f64, u: &[Complex64; 4]) -> [Complex64; 4] {
        let mut c = [ZERO; 4];
        for k in 0..4 {
            for i in 0..4 {
                c[k] += self.vecs[(i, k)].conj() * u[i];
            }
            c[k] *= Complex64::from_polar(1.0, -theta * self.vals[k]);
        }
        let mut out = [ZERO; 4];
        for i in 0..4 {
            for k in 0..4 {
                out[i] += self.vecs[(i, k)] * c[k];
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Solver

/// Discretization of a nonlinear run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NldConfig {
    /// 2·j_max (odd).
    pub jmax2: i32,
    /// Sphere band limit of the collocation grid.
    pub band: usize,
    pub dr: f64,
    pub r_max: f64,
    pub drho: f64,
    pub rho_max: f64,
    pub dt: f64,
    /// Angular regularity s > 1 of the X norm.
    pub s: f64,
}

impl Default for NldConfig {
    fn default() -> Self {
        Self { jmax2: 15, band: 16, dr: 0.15, r_max: 65.0, drho: 0.024, rho_max: 3.0, dt: 0.2, s: 1.5 }
    }
}

impl NldConfig {
    /// Halves dr, drho and dt.
    pub fn refined(&self) -> Self {
        Self { dr: self.dr / 2.0, drho: self.drho / 2.0, dt: self.dt / 2.0, ..self.clone() }
    }
}

/// One row of the run diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NldDiagnostics {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub lambda_h1: f64,
    pub x_running: f64,
}

/// A finished run: diagnostics per step and, when requested, the state at
/// every step.
#[derive(Debug, Clone)]
pub struct NldRun {
    pub diagnostics: Vec<NldDiagnostics>,
    pub states: Vec<DiracSpectrum>,
    pub x_norm: f64,
}

#[derive(Debug, Clone)]
pub struct NldSolver {
    cfg: NldConfig,
    channels: Vec<DiracChannelIndex>,
    rgrid: Arc<RadialGrid>,
    sgrid: Arc<SphereGrid>,
    tr: RiccatiBessel,
    lmax: usize,
    potential: PotentialSpec,
    vr: Vec<f64>,
    vmat: Option<(MatrixExp, f64)>,
    cubic: CubicSpec,
}

/// Position-side channel values ψ^± on the solver grid.
type PositionChannels = Vec<(Vec<Complex64>, Vec<Complex64>)>;

impl NldSolver {
    pub fn new(cfg: NldConfig, potential: PotentialSpec, cubic: CubicSpec) -> Result<Self> {
        check_x_regularity(cfg.s)?;
        cubic.validate()?;
        if cfg.jmax2 < 1 || cfg.jmax2 % 2 == 0 {
            return domain(format!("2 j_max = {} must be a positive odd integer", cfg.jmax2));
        }
        if !(cfg.dt > 0.0) {
            return domain("time step must be positive");
        }
        let lmax = ((cfg.jmax2 + 1) / 2) as usize;
        if cfg.band < lmax {
            return Err(Error::Resolution(format!("sphere band {} below the channel degree {lmax}", cfg.band)));
        }
        let rgrid = Arc::new(RadialGrid::uniform_to(cfg.r_max, cfg.dr)?);
        let fgrid = Arc::new(RadialGrid::uniform_to(cfg.rho_max, cfg.drho)?);
        let sgrid = Arc::new(SphereGrid::new(cfg.band)?);
        let tr = RiccatiBessel::new(rgrid.clone(), fgrid, lmax)?;
        potential.validate(rgrid.nodes(), cfg.s)?;
        let vr: Vec<f64> = rgrid.nodes().iter().map(|&r| potential.radial(r)).collect();
        let vmat = match &potential.kind {
            PotentialKind::HermitianMatrix { matrix, tilt } if !potential.is_none() => Some((MatrixExp::new(matrix), *tilt)),
            _ => None,
        };
        Ok(Self { channels: DiracChannelIndex::all(cfg.jmax2), cfg, rgrid, sgrid, tr, lmax, potential, vr, vmat, cubic })
    }

    pub fn config(&self) -> &NldConfig {
        &self.cfg
    }

    pub fn channels(&self) -> &[DiracChannelIndex] {
        &self.channels
    }

    pub fn transform(&self) -> &RiccatiBessel {
        &self.tr
    }

    pub fn rgrid(&self) -> &Arc<RadialGrid> {
        &self.rgrid
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    /// A zero spectrum over every channel of the run.
    pub fn zero_spectrum(&self) -> DiracSpectrum {
        let nf = self.tr.freq().len();
        let entries = self.channels.iter().map(|c| (*c, (vec![ZERO; nf], vec![ZERO; nf]))).collect();
        DiracSpectrum { fgrid: self.tr.freq().clone(), entries, time: 0.0 }
    }

    /// Embeds a spectrum into the run's channel set.
    pub fn embed(&self, spec: &DiracSpectrum) -> Result<DiracSpectrum> {
        if spec.fgrid != *self.tr.freq() {
            return Err(Error::Shape("initial spectrum is not on the run's frequency grid".into()));
        }
        let mut out = self.zero_spectrum();
        for (ch, v) in &spec.entries {
            match out.entries.get_mut(ch) {
                Some(slot) => *slot = v.clone(),
                None => return Err(Error::Resolution(format!("channel {ch:?} exceeds j_max = {}/2", self.cfg.jmax2))),
            }
        }
        out.time = spec.time;
        Ok(out)
    }

    fn position(&self, spec: &DiracSpectrum) -> Result<PositionChannels> {
        self.channels
            .par_iter()
            .map(|ch| {
                let (a, b) = &spec.entries[ch];
                Ok((self.tr.synthesize(ch.l_plus(), a)?, self.tr.synthesize(ch.l_minus(), b)?))
            })
            .collect()
    }

    fn to_spectrum(&self, pos: &PositionChannels, time: f64) -> Result<DiracSpectrum> {
        let amps: Result<Vec<_>> = self
            .channels
            .par_iter()
            .zip(pos.par_iter())
            .map(|(ch, (p, m))| Ok((self.tr.analyze(ch.l_plus(), p)?, self.tr.analyze(ch.l_minus(), m)?)))
            .collect();
        let entries = self.channels.iter().copied().zip(amps?).collect();
        Ok(DiracSpectrum { fgrid: self.tr.freq().clone(), entries, time })
    }

    /// Applies `op` to the collocation values on every sphere and projects
    /// the result back to channel values ψ^± = r⟨Φ^±, ·⟩.
    fn collocate<F>(&self, pos: &PositionChannels, op: F) -> Result<PositionChannels>
    where
        F: Fn(usize, &[[Complex64; 4]]) -> Vec<[Complex64; 4]> + Sync,
    {
        let nr = self.rgrid.len();
        let per_radius: Result<Vec<Vec<(Complex64, Complex64)>>> = (0..nr)
            .into_par_iter()
            .map(|ir| {
                let r = self.rgrid.nodes()[ir];
                let mut comps: [ScalarCoeffs; 4] = std::array::from_fn(|_| ScalarCoeffs::zeros(self.lmax));
                for (ch, (p, m)) in self.channels.iter().zip(pos) {
                    spinor_accumulate(&mut comps, ch, SpinorSign::Plus, p[ir] / r);
                    spinor_accumulate(&mut comps, ch, SpinorSign::Minus, m[ir] / r);
                }
                let vals = spinor_synthesize(&comps, &self.sgrid)?;
                let out = op(ir, &vals);
                let back = spinor_components(&out, &self.sgrid, self.lmax)?;
                Ok(self
                    .channels
                    .iter()
                    .map(|ch| (r * spinor_project(&back, ch, SpinorSign::Plus), r * spinor_project(&back, ch, SpinorSign::Minus)))
                    .collect())
            })
            .collect();
        let per_radius = per_radius?;
        Ok((0..self.channels.len())
            .map(|c| (per_radius.iter().map(|row| row[c].0).collect(), per_radius.iter().map(|row| row[c].1).collect()))
            .collect())
    }

    fn potential_point(&self, ir: usize, cos_theta: f64, theta: f64, u: &[Complex64; 4]) -> [Complex64; 4] {
        let v = self.vr[ir];
        match &self.vmat {
            Some((e, tilt)) => e.apply(theta * v * (1.0 + tilt * cos_theta), u),
            None => u.map(|c| c * Complex64::from_polar(1.0, -theta * v)),
        }
    }

    /// Pointwise flow of i u_t = V u + P₃(u) over `dt`, minus the identity.
    fn pointwise_increment(&self, ir: usize, vals: &[[Complex64; 4]], dt: f64) -> Vec<[Complex64; 4]> {
        let np = self.sgrid.n_phi();
        let ct = self.sgrid.cos_theta();
        vals.iter()
            .enumerate()
            .map(|(is, u)| {
                let c = ct[is / np];
                let next = match &self.cubic {
                    CubicSpec::Zero => self.potential_point(ir, c, dt, u),
                    CubicSpec::MassCubic { coupling } => {
                        // |u| is invariant under both factors, which commute.
                        let m: f64 = u.iter().map(|z| z.norm_sqr()).sum();
                        let ph = Complex64::from_polar(1.0, -dt * coupling * m);
                        self.potential_point(ir, c, dt, u).map(|z| z * ph)
                    }
                    CubicSpec::Monomials { .. } => {
                        let half = self.potential_point(ir, c, dt / 2.0, u);
                        let f = |w: &[Complex64; 4]| cubic_point(&self.cubic, w).map(|z| -I * z);
                        let k1 = f(&half);
                        let mid: [Complex64; 4] = std::array::from_fn(|a| half[a] + dt * k1[a]);
                        let k2 = f(&mid);
                        let stepped: [Complex64; 4] = std::array::from_fn(|a| half[a] + 0.5 * dt * (k1[a] + k2[a]));
                        self.potential_point(ir, c, dt / 2.0, &stepped)
                    }
                };
                std::array::from_fn(|a| next[a] - u[a])
            })
            .collect()
    }

    fn add_increment(spec: &mut DiracSpectrum, inc: &DiracSpectrum) {
        for (ch, (a, b)) in spec.entries.iter_mut() {
            let (da, db) = &inc.entries[ch];
            for (x, d) in a.iter_mut().zip(da) {
                *x += d;
            }
            for (x, d) in b.iter_mut().zip(db) {
                *x += d;
            }
        }
    }

    /// N(dt): the pointwise substep, applied through its increment.
    fn pointwise_step(&self, spec: &DiracSpectrum, dt: f64) -> Result<DiracSpectrum> {
        let mut out = spec.clone();
        if self.cubic.is_zero() && self.potential.is_none() {
            return Ok(out);
        }
        let pos = self.position(spec)?;
        let inc_pos = if self.cubic.is_zero() && self.vmat.is_none() {
            // Radial scalar V acts channel by channel.
            pos.iter()
                .map(|(p, m)| {
                    let f = |v: &Vec<Complex64>| -> Vec<Complex64> {
                        v.iter().zip(&self.vr).map(|(z, &x)| z * (Complex64::from_polar(1.0, -dt * x) - 1.0)).collect()
                    };
                    (f(p), f(m))
                })
                .collect()
        } else {
            self.collocate(&pos, |ir, vals| self.pointwise_increment(ir, vals, dt))?
        };
        Self::add_increment(&mut out, &self.to_spectrum(&inc_pos, spec.time)?);
        Ok(out)
    }

    /// One Strang step L(dt/2) N(dt) L(dt/2).
    pub fn step(&self, spec: &DiracSpectrum) -> Result<DiracSpectrum> {
        let dt = self.cfg.dt;
        let half = spec.free_flow(dt / 2.0);
        let mid = self.pointwise_step(&half, dt)?;
        let mut out = mid.free_flow(dt / 2.0);
        out.time = spec.time + dt;
        Ok(out)
    }

    /// One step of the linear flow e^{−i dt(𝒟+V)} (exact when V = 0).
    pub fn linear_step(&self, spec: &DiracSpectrum) -> Result<DiracSpectrum> {
        let dt = self.cfg.dt;
        if self.potential.is_none() {
            return Ok(spec.free_flow(dt));
        }
        let linear = Self { cubic: CubicSpec::Zero, ..self.clone() };
        linear.step(spec)
    }

    /// P₃(u) projected onto the run's channels, in spectral form.
    pub fn cubic_projection(&self, spec: &DiracSpectrum) -> Result<DiracSpectrum> {
        if self.cubic.is_zero() {
            return Ok(spec.zeros_like());
        }
        let pos = self.position(spec)?;
        let proj = self.collocate(&pos, |_, vals| cubic_eval(&self.cubic, vals))?;
        self.to_spectrum(&proj, spec.time)
    }

    /// Norm frame of a spectral state: partial waves ψ^±/r with exact
    /// L² and gradient parts from the spectrum.
    pub fn frame(&self, spec: &DiracSpectrum) -> Result<Frame> {
        let pos = self.position(spec)?;
        let rho = self.tr.freq().nodes();
        let w = self.tr.freq().weights();
        let r = self.rgrid.nodes();
        let mut waves = Vec::with_capacity(2 * self.channels.len());
        for (ch, (p, m)) in self.channels.iter().zip(pos) {
            let (a, b) = &spec.entries[ch];
            for (deg, vals, amp) in [(ch.l_plus(), p, a), (ch.l_minus(), m, b)] {
                let l2: f64 = amp.iter().zip(w).map(|(z, wj)| wj * z.norm_sqr()).sum();
                let g: f64 = amp.iter().zip(w).zip(rho).map(|((z, wj), q)| wj * q * q * z.norm_sqr()).sum();
                let values = vals.iter().zip(r).map(|(z, ri)| z / ri).collect();
                waves.push(PartialWave { degree: deg, values, l2_sq: Some(l2), grad_sq: Some(g) });
            }
        }
        Frame::new(self.rgrid.clone(), 3, waves)
    }

    fn norm_config(&self) -> NormConfig {
        NormConfig { s: self.cfg.s, symbol: AngularSymbol::Laplacian, ..NormConfig::default() }
    }

    /// X norm of a trajectory sampled at t = n·dt.
    pub fn x_norm_of(&self, states: &[DiracSpectrum]) -> Result<f64> {
        if states.is_empty() {
            return domain("empty trajectory");
        }
        let mut stream = NormStream::new(self.norm_config());
        for (n, s) in states.iter().enumerate() {
            stream.push(n as f64 * self.cfg.dt, &self.frame(s)?)?;
        }
        Ok(stream.x_norm())
    }
}

/// One split step of the nonlinear flow.
pub fn nld_step(solver: &NldSolver, state: &DiracSpectrum) -> Result<DiracSpectrum> {
    solver.step(state)
}

/// Runs to time `t_end`, recording diagnostics every step and, if
/// `keep_states`, the state at every step. Aborts with a divergence error if
/// ‖u‖_{H¹} exceeds 10³ times its initial value.
pub fn nld_simulate(solver: &NldSolver, f: &DiracSpectrum, t_end: f64, keep_states: bool) -> Result<NldRun> {
    let dt = solver.cfg.dt;
    crate::norms::check_frame_spacing(dt, solver.tr.freq().max())?;
    let steps = (t_end / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end {
        return domain(format!("T = {t_end} must be a positive multiple of dt = {dt}"));
    }
    let mut u = solver.embed(f)?;
    u.time = 0.0;
    let h1_0 = u.sobolev_sq(1, 0.0, false).sqrt();
    let mut stream = NormStream::new(solver.norm_config());
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let mut states = Vec::new();
    for n in 0..=steps {
        let t = n as f64 * dt;
        stream.push(t, &solver.frame(&u)?)?;
        let h1 = u.sobolev_sq(1, 0.0, false).sqrt();
        diagnostics.push(NldDiagnostics {
            t,
            l2: u.l2_sq().sqrt(),
            h1,
            lambda_h1: u.sobolev_sq(1, solver.cfg.s, false).sqrt(),
            x_running: stream.x_norm(),
        });
        if h1_0 > 0.0 && h1 > 1e3 * h1_0 || !h1.is_finite() {
            return Err(Error::Divergence { t, norm: h1, limit: 1e3 * h1_0 });
        }
        if keep_states {
            states.push(u.clone());
        }
        if n < steps {
            u = solver.step(&u)?;
        }
    }
    Ok(NldRun { diagnostics, states, x_norm: stream.x_norm() })
}

/// Φ(v) at the times n·dt of `v`, by the linear flow of f plus the Duhamel
/// trapezoid D_{n+1} = U D_n + (dt/2)(U P_n + P_{n+1}), Φ_n = U(t_n)f − i D_n.
/// Returns the trajectory and its X norm.
pub fn picard_iterate(solver: &NldSolver, v: &[DiracSpectrum], f: &DiracSpectrum) -> Result<(Vec<DiracSpectrum>, f64)> {
    if v.is_empty() {
        return domain("Picard map needs a non-empty trajectory");
    }
    let dt = solver.cfg.dt;
    let p: Vec<DiracSpectrum> = v.iter().map(|s| solver.cubic_projection(s)).collect::<Result<_>>()?;
    let mut lin = solver.embed(f)?;
    let mut duh = lin.zeros_like();
    let mut out = Vec::with_capacity(v.len());
    for n in 0..v.len() {
        let mut phi = lin.clone();
        for (ch, (a, b)) in phi.entries.iter_mut() {
            let (da, db) = &duh.entries[ch];
            for (x, d) in a.iter_mut().zip(da) {
                *x -= I * d;
            }
            for (x, d) in b.iter_mut().zip(db) {
                *x -= I * d;
            }
        }
        phi.time = n as f64 * dt;
        out.push(phi);
        if n + 1 < v.len() {
            lin = solver.linear_step(&lin)?;
            let up = solver.linear_step(&p[n])?;
            let mut next = solver.linear_step(&duh)?;
            for (ch, (a, b)) in next.entries.iter_mut() {
                let (ua, ub) = &up.entries[ch];
                let (pa, pb) = &p[n + 1].entries[ch];
                for j in 0..a.len() {
                    a[j] += 0.5 * dt * (ua[j] + pa[j]);
                    b[j] += 0.5 * dt * (ub[j] + pb[j]);
                }
            }
            duh = next;
        }
    }
    let x = solver.x_norm_of(&out)?;
    Ok((out, x))
}

/// Pointwise difference of two trajectories.
pub fn trajectory_difference(a: &[DiracSpectrum], b: &[DiracSpectrum]) -> Result<Vec<DiracSpectrum>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("trajectories of lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| {
            let entries: BTreeMap<_, _> = x
                .entries
                .iter()
                .map(|(ch, (p, m))| {
                    let (q, n) = &y.entries[ch];
                    (*ch, (p.iter().zip(q).map(|(s, t)| s - t).collect(), m.iter().zip(n).map(|(s, t)| s - t).collect()))
                })
                .collect();
            DiracSpectrum { fgrid: x.fgrid.clone(), entries, time: x.time }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> NldConfig {
        NldConfig { jmax2: 3, band: 6, dr: 0.2, r_max: 30.0, drho: 0.05, rho_max: 3.0, dt: 0.1, s: 1.5 }
    }

    fn bump(solver: &NldSolver, amp: f64) -> DiracSpectrum {
        let mut spec = solver.zero_spectrum();
        let rho = solver.transform().freq().nodes().to_vec();
        for (i, (ch, (a, b))) in spec.entries.iter_mut().enumerate() {
            if ch.j2 > 3 || i % 3 != 0 {
                continue;
            }
            for (j, &q) in rho.iter().enumerate() {
                let g = amp * (-(q - 1.2).powi(2) / 0.08).exp();
                a[j] = Complex64::new(g, 0.0);
                b[j] = Complex64::new(0.0, 0.5 * g);
            }
        }
        spec
    }

    #[test]
    fn cubic_basics() {
        let m = CubicSpec::mass_cubic();
        let e = [Complex64::new(1.0, 0.0), ZERO, ZERO, ZERO];
        assert_eq!(cubic_point(&m, &e), e);
        assert_eq!(cubic_point(&m, &[ZERO; 4]), [ZERO; 4]);
        let u = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.5), Complex64::new(0.0, 0.1), Complex64::new(1.0, -1.0)];
        let terms = vec![
            Monomial { coeff: Complex64::new(0.5, 1.0), out: 2, factors: vec![Factor { comp: 0, conj: false }, Factor { comp: 1, conj: true }, Factor { comp: 3, conj: false }] },
        ];
        let g = CubicSpec::monomials(terms).unwrap();
        for spec in [m, g] {
            let a = cubic_point(&spec, &u);
            let b = cubic_point(&spec, &u.map(|z| 2.0 * z));
            for i in 0..4 {
                assert!((b[i] - 8.0 * a[i]).norm() < 1e-14);
            }
        }
        let bad = vec![Monomial { coeff: Complex64::new(1.0, 0.0), out: 0, factors: vec![Factor { comp: 0, conj: false }; 2] }];
        assert!(matches!(CubicSpec::monomials(bad), Err(Error::Spec(_))));
    }

    #[test]
    fn potential_validator() {
        let nodes: Vec<f64> = (1..400).map(|i| i as f64 * 0.05).collect();
        let ok = PotentialSpec::dirac_admissible(0.01, 2.0);
        let chk = ok.validate(&nodes, 1.5).unwrap();
        assert!(chk.delta_needed <= 0.01 * (1.0 + 1e-9));
        let mut bad = ok.clone();
        bad.amplitude *= 3.0;
        assert!(matches!(bad.validate(&nodes, 1.5), Err(Error::Hypothesis { .. })));
        let mut nh = PotentialSpec::dirac_admissible(0.01, 2.0);
        let mut m = [[ZERO; 4]; 4];
        m[0][1] = Complex64::new(0.0, 1.0);
        nh.kind = PotentialKind::HermitianMatrix { matrix: m, tilt: 0.0 };
        assert!(matches!(nh.validate(&nodes, 1.5), Err(Error::Spec(_))));
    }

    #[test]
    fn zero_nonlinearity_is_the_free_flow() {
        let s = NldSolver::new(small_cfg(), PotentialSpec::none(), CubicSpec::Zero).unwrap();
        let f = bump(&s, 1.0);
        let mut u = f.clone();
        for _ in 0..10 {
            u = s.step(&u).unwrap();
        }
        let exact = f.free_flow(1.0);
        for (ch, (a, _)) in &u.entries {
            for (x, y) in a.iter().zip(&exact.entries[ch].0) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_cubic_conserves_l2() {
        let s = NldSolver::new(small_cfg(), PotentialSpec::dirac_admissible(0.05, 2.0), CubicSpec::mass_cubic()).unwrap();
        let f = bump(&s, 0.5);
        let run = nld_simulate(&s, &f, 2.0, false).unwrap();
        let l0 = run.diagnostics[0].l2;
        let l1 = run.diagnostics.last().unwrap().l2;
        assert!(((l1 - l0) / l0).abs() < 2e-6, "{l0} {l1}");
    }

    #[test]
    fn zero_data_stays_zero_and_picard_of_zero_is_linear() {
        let s = NldSolver::new(small_cfg(), PotentialSpec::none(), CubicSpec::mass_cubic()).unwrap();
        let z = s.zero_spectrum();
        let run = nld_simulate(&s, &z, 0.5, true).unwrap();
        assert!(run.diagnostics.iter().all(|d| d.l2 == 0.0 && d.x_running == 0.0));
        let f = bump(&s, 1.0);
        let (phi, _) = picard_iterate(&s, &run.states, &f).unwrap();
        let lin = f.free_flow(0.5);
        for (ch, (a, _)) in &phi.last().unwrap().entries {
            for (x, y) in a.iter().zip(&lin.entries[ch].0) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn strang_is_second_order() {
        let t = 1.0;
        let mut cfg = small_cfg();
        let mut run = |dt: f64| {
            cfg.dt = dt;
            let s = NldSolver::new(cfg.clone(), PotentialSpec::none(), CubicSpec::MassCubic { coupling: 1.0 }).unwrap();
            let f = bump(&s, 1.0);
            let mut u = f;
            for _ in 0..(t / dt).round() as usize {
                u = s.step(&u).unwrap();
            }
            u
        };
        let (a, b, c) = (run(0.2), run(0.1), run(0.05));
        let d = |x: &DiracSpectrum, y: &DiracSpectrum| trajectory_difference(&[x.clone()], &[y.clone()]).unwrap()[0].l2_sq().sqrt();
        let ratio = d(&a, &b) / d(&b, &c);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }
}
