//! Harmonic analysis on S²: a Gauss–Legendre × uniform-φ grid, scalar
//! spherical-harmonic transforms, the angular operator Λ_ω, and the spinor
//! harmonics Φ^±_{m_j,k_j} with their channel transforms.

use crate::error::{domain, resolution, Error, Result};
use crate::propagators::DiracChannelState;
use crate::quadrature::gauss_legendre;
use crate::radial::{RadialGrid, RadialProfile, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    band: usize,
    cos_theta: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    ring_weights: Vec<f64>,
    /// Normalized P̄_k^m(cos θ_i) for m ≥ 0, row i, column lm_index(k, m).
    plm: Vec<f64>,
    /// e^{i m φ_p} for m = −band..band, row m + band.
    phase: Vec<Complex64>,
}

fn lm_pos(k: usize, m: usize) -> usize {
    k * (k + 1) / 2 + m
}

pub fn build_sphere_grid(band: usize) -> Result<SphereGrid> {
    SphereGrid::new(band)
}

impl SphereGrid {
    pub fn new(band: usize) -> Result<Self> {
        if band < 1 {
            return domain("sphere band limit must be at least 1");
        }
        let (x, w) = gauss_legendre(band + 1);
        let nphi = 2 * band + 1;
        let phi: Vec<f64> = (0..nphi).map(|p| 2.0 * PI * p as f64 / nphi as f64).collect();
        let ncol = lm_pos(band, band) + 1;
        let mut plm = vec![0.0; x.len() * ncol];
        for (i, &c) in x.iter().enumerate() {
            let row = &mut plm[i * ncol..(i + 1) * ncol];
            normalized_legendre(band, c, row);
        }
        let mut phase = vec![ZERO; (2 * band + 1) * nphi];
        for m in 0..=2 * band {
            let mf = m as f64 - band as f64;
            for (p, &ph) in phi.iter().enumerate() {
                phase[m * nphi + p] = Complex64::from_polar(1.0, mf * ph);
            }
        }
        Ok(Self {
            band,
            theta: x.iter().map(|c| c.acos()).collect(),
            cos_theta: x,
            ring_weights: w.iter().map(|w| w * 2.0 * PI / nphi as f64).collect(),
            phi,
            plm,
            phase,
        })
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    pub fn n_phi(&self) -> usize {
        self.phi.len()
    }

    pub fn len(&self) -> usize {
        self.n_theta() * self.n_phi()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nodes (θ, φ), θ-major.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        self.theta.iter().flat_map(|&t| self.phi.iter().map(move |&p| (t, p))).collect()
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }

    /// Quadrature weight of every node, θ-major; they sum to 4π.
    pub fn weights(&self) -> Vec<f64> {
        self.ring_weights.iter().flat_map(|&w| std::iter::repeat_n(w, self.n_phi())).collect()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        let np = self.n_phi();
        let mut acc = 0.0;
        for (i, w) in self.ring_weights.iter().enumerate() {
            let s: f64 = f[i * np..(i + 1) * np].iter().sum();
            acc += w * s;
        }
        acc
    }

    fn plm_at(&self, i: usize, k: usize, m: usize) -> f64 {
        self.plm[i * (lm_pos(self.band, self.band) + 1) + lm_pos(k, m)]
    }

    /// Y_k^m at node (i, p), Condon–Shortley phase.
    pub fn ylm_node(&self, k: usize, m: i64, i: usize, p: usize) -> Complex64 {
        let am = m.unsigned_abs() as usize;
        if am > k || k > self.band {
            return ZERO;
        }
        let mut v = self.plm_at(i, k, am);
        if m < 0 && am % 2 == 1 {
            v = -v;
        }
        v * self.phase[(m + self.band as i64) as usize * self.n_phi() + p]
    }

    /// Y_k^m on the whole grid, θ-major.
    pub fn ylm(&self, k: usize, m: i64) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.n_theta() {
            for p in 0..self.n_phi() {
                out.push(self.ylm_node(k, m, i, p));
            }
        }
        out
    }
}

/// Orthonormal P̄_k^m(x) (with Condon–Shortley sign) for 0 ≤ m ≤ k ≤ band.
fn normalized_legendre(band: usize, x: f64, out: &mut [f64]) {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=band {
        if m > 0 {
            let mf = m as f64;
            pmm *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        out[lm_pos(m, m)] = pmm;
        if m == band {
            break;
        }
        let mf = m as f64;
        let mut p1 = (2.0 * mf + 3.0).sqrt() * x * pmm;
        out[lm_pos(m + 1, m)] = p1;
        let mut p0 = pmm;
        for k in m + 2..=band {
            let kf = k as f64;
            let a = ((4.0 * kf * kf - 1.0) / (kf * kf - mf * mf)).sqrt();
            let b = (((kf - 1.0) * (kf - 1.0) - mf * mf) / (4.0 * (kf - 1.0) * (kf - 1.0) - 1.0)).sqrt();
            let p2 = a * (x * p1 - b * p0);
            out[lm_pos(k, m)] = p2;
            p0 = p1;
            p1 = p2;
        }
    }
}

/// Coefficients f_k^l, 0 ≤ k ≤ band, 1 ≤ l ≤ 2k+1 with l = m + k + 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCoeffs {
    band: usize,
    data: Vec<Complex64>,
}

impl ScalarCoeffs {
    pub fn zeros(band: usize) -> Self {
        Self { band, data: vec![ZERO; (band + 1) * (band + 1)] }
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    fn idx(k: usize, m: i64) -> usize {
        (k * k) as usize + (m + k as i64) as usize
    }

    /// Entry (k, l), 1-based l.
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[k * k + l - 1]
    }

    pub fn set(&mut self, k: usize, l: usize, v: Complex64) {
        self.data[k * k + l - 1] = v;
    }

    /// Entry by magnetic number m, zero outside |m| ≤ k ≤ band.
    pub fn get_m(&self, k: usize, m: i64) -> Complex64 {
        if k > self.band || m.unsigned_abs() as usize > k {
            return ZERO;
        }
        self.data[Self::idx(k, m)]
    }

    pub fn set_m(&mut self, k: usize, m: i64, v: Complex64) {
        self.data[Self::idx(k, m)] = v;
    }

    pub fn add_m(&mut self, k: usize, m: i64, v: Complex64) {
        self.data[Self::idx(k, m)] += v;
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Same coefficients with band raised or truncated.
    pub fn with_band(&self, band: usize) -> Self {
        let mut out = Self::zeros(band);
        for k in 0..=band.min(self.band) {
            for m in -(k as i64)..=k as i64 {
                out.set_m(k, m, self.get_m(k, m));
            }
        }
        out
    }
}

fn check_values(values: &[Complex64], grid: &SphereGrid) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Shape(format!("{} values for a {}-node sphere grid", values.len(), grid.len())));
    }
    Ok(())
}

/// Projection onto Y_k^m, k ≤ band, by grid quadrature.
pub fn sht_forward(values: &[Complex64], grid: &SphereGrid, band: usize) -> Result<ScalarCoeffs> {
    check_values(values, grid)?;
    if band > grid.band {
        return Err(Error::Shape(format!("band {band} exceeds sphere grid band {}", grid.band)));
    }
    let np = grid.n_phi();
    let gb = grid.band as i64;
    let b = band as i64;
    let mut out = ScalarCoeffs::zeros(band);
    let mut ring = vec![ZERO; (2 * band + 1) as usize];
    for i in 0..grid.n_theta() {
        let row = &values[i * np..(i + 1) * np];
        for m in -b..=b {
            let ph = &grid.phase[(m + gb) as usize * np..(m + gb + 1) as usize * np];
            let mut s = ZERO;
            for (v, e) in row.iter().zip(ph) {
                s += v * e.conj();
            }
            ring[(m + b) as usize] = s * grid.ring_weights[i];
        }
        for k in 0..=band {
            for m in -(k as i64)..=k as i64 {
                let am = m.unsigned_abs() as usize;
                let mut p = grid.plm_at(i, k, am);
                if m < 0 && am % 2 == 1 {
                    p = -p;
                }
                out.add_m(k, m, p * ring[(m + b) as usize]);
            }
        }
    }
    Ok(out)
}

/// Synthesis Σ f_k^m Y_k^m on the grid.
pub fn sht_inverse(coeffs: &ScalarCoeffs, grid: &SphereGrid) -> Result<Vec<Complex64>> {
    if coeffs.band > grid.band {
        return Err(Error::Shape(format!("coefficient band {} exceeds sphere grid band {}", coeffs.band, grid.band)));
    }
    let np = grid.n_phi();
    let gb = grid.band as i64;
    let b = coeffs.band as i64;
    let mut out = vec![ZERO; grid.len()];
    let mut ring = vec![ZERO; (2 * b + 1) as usize];
    for i in 0..grid.n_theta() {
        ring.iter_mut().for_each(|v| *v = ZERO);
        for k in 0..=coeffs.band {
            for m in -(k as i64)..=k as i64 {
                let am = m.unsigned_abs() as usize;
                let mut p = grid.plm_at(i, k, am);
                if m < 0 && am % 2 == 1 {
                    p = -p;
                }
                ring[(m + b) as usize] += p * coeffs.get_m(k, m);
            }
        }
        let row = &mut out[i * np..(i + 1) * np];
        for m in -b..=b {
            let c = ring[(m + b) as usize];
            if c == ZERO {
                continue;
            }
            let ph = &grid.phase[(m + gb) as usize * np..(m + gb + 1) as usize * np];
            for (v, e) in row.iter_mut().zip(ph) {
                *v += c * e;
            }
        }
    }
    Ok(out)
}

/// Entry (k, l) times (1 + k(k+1))^{s/2}.
pub fn lambda_omega_apply(coeffs: &ScalarCoeffs, s: f64) -> ScalarCoeffs {
    let mut out = coeffs.clone();
    for k in 0..=coeffs.band {
        let f = (1.0 + (k * (k + 1)) as f64).powf(s / 2.0);
        for v in &mut out.data[k * k..(k + 1) * (k + 1)] {
            *v *= f;
        }
    }
    out
}

/// Spinor channel (j, m_j, k_j), stored as 2j, 2m_j and k_j.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DiracChannelIndex {
    pub j2: i32,
    pub m2: i32,
    pub kappa: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinorSign {
    Plus,
    Minus,
}

impl DiracChannelIndex {
    pub fn new(j2: i32, m2: i32, kappa: i32) -> Result<Self> {
        if j2 < 1 || j2 % 2 == 0 {
            return domain(format!("2j = {j2} must be a positive odd integer"));
        }
        if m2.abs() > j2 || (m2 - j2) % 2 != 0 {
            return domain(format!("2m_j = {m2} incompatible with 2j = {j2}"));
        }
        if kappa.abs() != (j2 + 1) / 2 {
            return domain(format!("|k_j| = {} must equal j + 1/2 = {}", kappa.abs(), (j2 + 1) / 2));
        }
        Ok(Self { j2, m2, kappa })
    }

    pub fn j(&self) -> f64 {
        self.j2 as f64 / 2.0
    }

    pub fn mj(&self) -> f64 {
        self.m2 as f64 / 2.0
    }

    /// Orbital degree carried by Φ^+ (k for k > 0, −k−1 for k < 0).
    pub fn l_plus(&self) -> usize {
        if self.kappa > 0 {
            self.kappa as usize
        } else {
            (-self.kappa - 1) as usize
        }
    }

    /// Orbital degree carried by Φ^− (k−1 for k > 0, −k for k < 0).
    pub fn l_minus(&self) -> usize {
        if self.kappa > 0 {
            (self.kappa - 1) as usize
        } else {
            (-self.kappa) as usize
        }
    }

    pub fn degree(&self, sign: SpinorSign) -> usize {
        match sign {
            SpinorSign::Plus => self.l_plus(),
            SpinorSign::Minus => self.l_minus(),
        }
    }

    /// All channels with 2j ≤ jmax2, ordered by (j, m_j, k_j).
    pub fn all(jmax2: i32) -> Vec<Self> {
        let mut out = Vec::new();
        let mut j2 = 1;
        while j2 <= jmax2 {
            let mut m2 = -j2;
            while m2 <= j2 {
                let a = (j2 + 1) / 2;
                out.push(Self { j2, m2, kappa: -a });
                out.push(Self { j2, m2, kappa: a });
                m2 += 2;
            }
            j2 += 2;
        }
        out
    }
}

/// The two scalar terms of Φ^±: (spinor component, ℓ, m, coefficient).
pub fn spinor_terms(ch: &DiracChannelIndex, sign: SpinorSign) -> [(usize, usize, i64, Complex64); 2] {
    let j = ch.j();
    let m = ch.mj();
    let mlo = ((ch.m2 - 1) / 2) as i64;
    let mhi = ((ch.m2 + 1) / 2) as i64;
    let l = ch.degree(sign);
    let base = match sign {
        SpinorSign::Plus => 0,
        SpinorSign::Minus => 2,
    };
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    // Which of the two Clebsch–Gordan patterns applies: ℓ = j + 1/2 gives
    // (√(j+1−m), −√(j+1+m))/√(2j+2), ℓ = j − 1/2 gives (√(j+m), √(j−m))/√(2j).
    let upper_l = 2 * l as i32 == ch.j2 + 1;
    let (c0, c1) = if upper_l {
        let d = (2.0 * j + 2.0).sqrt();
        ((j + 1.0 - m).sqrt() / d, -(j + 1.0 + m).sqrt() / d)
    } else {
        let d = (2.0 * j).sqrt();
        ((j + m).sqrt() / d, (j - m).sqrt() / d)
    };
    let ph = if sign == SpinorSign::Plus { i } else { one };
    [(base, l, mlo, ph * c0), (base + 1, l, mhi, ph * c1)]
}

/// Φ^±_{m_j,k_j} on the sphere grid.
pub fn spinor_basis_eval(ch: &DiracChannelIndex, sign: SpinorSign, grid: &SphereGrid) -> Result<Vec<[Complex64; 4]>> {
    let ch = DiracChannelIndex::new(ch.j2, ch.m2, ch.kappa)?;
    if ch.degree(sign) > grid.band {
        return resolution(format!("spinor degree {} exceeds sphere band {}", ch.degree(sign), grid.band));
    }
    let mut out = vec![[ZERO; 4]; grid.len()];
    for (comp, l, m, c) in spinor_terms(&ch, sign) {
        if m.unsigned_abs() as usize > l {
            continue;
        }
        for (v, y) in out.iter_mut().zip(grid.ylm(l, m)) {
            v[comp] += c * y;
        }
    }
    Ok(out)
}

/// Channel amplitudes ⟨Φ^±, Ψ⟩ from the four component expansions of Ψ on
/// one sphere.
pub fn spinor_project(comps: &[ScalarCoeffs; 4], ch: &DiracChannelIndex, sign: SpinorSign) -> Complex64 {
    spinor_terms(ch, sign).iter().map(|&(a, l, m, c)| c.conj() * comps[a].get_m(l, m)).sum()
}

/// Adds amp·Φ^± to four component expansions.
pub fn spinor_accumulate(comps: &mut [ScalarCoeffs; 4], ch: &DiracChannelIndex, sign: SpinorSign, amp: Complex64) {
    for (a, l, m, c) in spinor_terms(ch, sign) {
        if m.unsigned_abs() as usize <= l && l <= comps[a].band() {
            comps[a].add_m(l, m, c * amp);
        }
    }
}

/// 4-spinor values on (radial node × sphere node), index ir·|S| + is.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub rgrid: Arc<RadialGrid>,
    pub sgrid: Arc<SphereGrid>,
    pub values: Vec<[Complex64; 4]>,
}

impl SpinorField {
    pub fn zeros(rgrid: Arc<RadialGrid>, sgrid: Arc<SphereGrid>) -> Self {
        let len = rgrid.len() * sgrid.len();
        Self { rgrid, sgrid, values: vec![[ZERO; 4]; len] }
    }

    pub fn at_radius(&self, ir: usize) -> &[[Complex64; 4]] {
        let s = self.sgrid.len();
        &self.values[ir * s..(ir + 1) * s]
    }

    /// ‖Ψ(r·)‖²_{L²_ω} at radial node ir.
    pub fn angular_norm_sq(&self, ir: usize) -> f64 {
        let f: Vec<f64> = self.at_radius(ir).iter().map(|v| v.iter().map(|c| c.norm_sqr()).sum()).collect();
        self.sgrid.integrate(&f)
    }

    /// ‖Ψ‖²_{L²(R³)} by radial × sphere quadrature.
    pub fn l2_norm_sq(&self) -> f64 {
        let f: Vec<f64> = (0..self.rgrid.len()).map(|ir| self.angular_norm_sq(ir) * self.rgrid.nodes()[ir].powi(2)).collect();
        self.rgrid.integrate(&f)
    }
}

/// Component expansions of a spinor on one sphere.
pub fn spinor_components(vals: &[[Complex64; 4]], grid: &SphereGrid, band: usize) -> Result<[ScalarCoeffs; 4]> {
    let mut out: [ScalarCoeffs; 4] = Default::default();
    let mut buf = vec![ZERO; vals.len()];
    for (a, slot) in out.iter_mut().enumerate() {
        for (b, v) in buf.iter_mut().zip(vals) {
            *b = v[a];
        }
        *slot = sht_forward(&buf, grid, band)?;
    }
    Ok(out)
}

impl Default for ScalarCoeffs {
    fn default() -> Self {
        Self::zeros(0)
    }
}

/// Spinor values on one sphere from component expansions.
pub fn spinor_synthesize(comps: &[ScalarCoeffs; 4], grid: &SphereGrid) -> Result<Vec<[Complex64; 4]>> {
    let mut out = vec![[ZERO; 4]; grid.len()];
    for (a, c) in comps.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(sht_inverse(c, grid)?) {
            o[a] = v;
        }
    }
    Ok(out)
}

fn check_jmax(jmax2: i32, grid: &SphereGrid) -> Result<usize> {
    let lmax = ((jmax2 + 1) / 2) as usize;
    if jmax2 < 1 || lmax > grid.band {
        return resolution(format!("jmax = {}/2 needs sphere band {lmax}, grid has {}", jmax2, grid.band));
    }
    Ok(lmax)
}

/// ψ^±(r) = r ⟨Φ^±, Ψ(r·)⟩ for every channel with j ≤ jmax.
pub fn spinor_decompose(field: &SpinorField, jmax2: i32) -> Result<DiracChannelState> {
    let lmax = check_jmax(jmax2, &field.sgrid)?;
    let chans = DiracChannelIndex::all(jmax2);
    let nr = field.rgrid.len();
    let mut plus = vec![vec![ZERO; nr]; chans.len()];
    let mut minus = vec![vec![ZERO; nr]; chans.len()];
    for ir in 0..nr {
        let comps = spinor_components(field.at_radius(ir), &field.sgrid, lmax)?;
        let r = field.rgrid.nodes()[ir];
        for (c, ch) in chans.iter().enumerate() {
            plus[c][ir] = r * spinor_project(&comps, ch, SpinorSign::Plus);
            minus[c][ir] = r * spinor_project(&comps, ch, SpinorSign::Minus);
        }
    }
    let mut entries = BTreeMap::new();
    for ((ch, p), m) in chans.into_iter().zip(plus).zip(minus) {
        let g = field.rgrid.clone();
        entries.insert(
            ch,
            (
                RadialProfile { grid: g.clone(), values: p, side: Side::Position },
                RadialProfile { grid: g, values: m, side: Side::Position },
            ),
        );
    }
    Ok(DiracChannelState { entries, time: 0.0 })
}

/// Ψ = Σ r^{−1}(ψ^+ Φ^+ + ψ^− Φ^−).
pub fn spinor_reconstruct(state: &DiracChannelState, rgrid: &Arc<RadialGrid>, sgrid: &Arc<SphereGrid>) -> Result<SpinorField> {
    let jmax2 = state.entries.keys().map(|c| c.j2).max().unwrap_or(1);
    let lmax = check_jmax(jmax2, sgrid)?;
    let mut field = SpinorField::zeros(rgrid.clone(), sgrid.clone());
    let s = sgrid.len();
    for (ir, &r) in rgrid.nodes().iter().enumerate() {
        let mut comps: [ScalarCoeffs; 4] = std::array::from_fn(|_| ScalarCoeffs::zeros(lmax));
        for (ch, (p, m)) in &state.entries {
            if p.values.len() != rgrid.len() || m.values.len() != rgrid.len() {
                return Err(Error::Shape("channel profile length differs from the radial grid".into()));
            }
            spinor_accumulate(&mut comps, ch, SpinorSign::Plus, p.values[ir] / r);
            spinor_accumulate(&mut comps, ch, SpinorSign::Minus, m.values[ir] / r);
        }
        let vals = spinor_synthesize(&comps, sgrid)?;
        field.values[ir * s..(ir + 1) * s].copy_from_slice(&vals);
    }
    Ok(field)
}

/// Both sides of the product estimate ‖Λ^s(gh)‖ ≲ ‖Λ^s g‖‖Λ^s h‖ on S².
pub fn sphere_product(g: &ScalarCoeffs, h: &ScalarCoeffs, s: f64) -> Result<(f64, f64)> {
    if !(s > 1.0) {
        return domain(format!("product estimate needs s > 1, got {s}"));
    }
    let band = (g.band + h.band).max(1);
    let grid = SphereGrid::new(band)?;
    let gv = sht_inverse(g, &grid)?;
    let hv = sht_inverse(h, &grid)?;
    let prod: Vec<Complex64> = gv.iter().zip(&hv).map(|(a, b)| a * b).collect();
    let pc = sht_forward(&prod, &grid, band)?;
    let lhs = lambda_omega_apply(&pc, s).norm_sq().sqrt();
    let rhs = lambda_omega_apply(g, s).norm_sq().sqrt() * lambda_omega_apply(h, s).norm_sq().sqrt();
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner(grid: &SphereGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let w = grid.weights();
        a.iter().zip(b).zip(&w).map(|((x, y), w)| x.conj() * y * w).sum()
    }

    #[test]
    fn weights_sum_to_area() {
        for band in [1, 4, 8, 16] {
            let g = SphereGrid::new(band).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - 4.0 * PI).abs() < 1e-12);
        }
        let g = SphereGrid::new(1).unwrap();
        assert_eq!((g.n_theta(), g.n_phi()), (2, 3));
    }

    #[test]
    fn orthonormality_under_quadrature() {
        let g = SphereGrid::new(8).unwrap();
        let a = g.ylm(3, 2);
        assert!((inner(&g, &a, &a) - 1.0).norm() < 1e-12);
        assert!(inner(&g, &a, &g.ylm(5, 1)).norm() < 1e-12);
        let b = g.ylm(2, 1);
        assert!((inner(&g, &b, &b) - 1.0).norm() < 1e-12);
        for k in 0..=8 {
            for m in -(k as i64)..=k as i64 {
                let y = g.ylm(k, m);
                for k2 in 0..=8usize {
                    for m2 in -(k2 as i64)..=k2 as i64 {
                        let d = inner(&g, &y, &g.ylm(k2, m2));
                        let e = if (k, m) == (k2, m2) { 1.0 } else { 0.0 };
                        assert!((d - e).norm() < 1e-12, "({k},{m}) ({k2},{m2}) {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn constant_maps_to_first_coefficient() {
        let g = SphereGrid::new(6).unwrap();
        let v = vec![Complex64::new(1.0 / (4.0 * PI).sqrt(), 0.0); g.len()];
        let c = sht_forward(&v, &g, 6).unwrap();
        assert!((c.get(0, 1) - 1.0).norm() < 1e-13);
        assert!(c.as_slice()[1..].iter().all(|x| x.norm() < 1e-13));
    }

    #[test]
    fn lambda_omega_scaling() {
        let mut c = ScalarCoeffs::zeros(3);
        c.set_m(1, 0, Complex64::new(1.0, 0.0));
        let d = lambda_omega_apply(&c, 2.0);
        assert!((d.get_m(1, 0).re - 3.0).abs() < 1e-14);
        let back = lambda_omega_apply(&lambda_omega_apply(&c, 0.7), -0.7);
        assert!((back.get_m(1, 0) - 1.0).norm() < 1e-13);
    }

    #[test]
    fn spinor_first_channel_matches_display() {
        let g = SphereGrid::new(4).unwrap();
        let ch = DiracChannelIndex::new(1, 1, 1).unwrap();
        let phi = spinor_basis_eval(&ch, SpinorSign::Plus, &g).unwrap();
        let y10 = g.ylm(1, 0);
        let y11 = g.ylm(1, 1);
        let i3 = Complex64::new(0.0, 1.0 / 3f64.sqrt());
        for (p, v) in phi.iter().enumerate() {
            assert!((v[0] - i3 * y10[p]).norm() < 1e-14);
            assert!((v[1] + i3 * 2f64.sqrt() * y11[p]).norm() < 1e-14);
            assert!(v[2].norm() == 0.0 && v[3].norm() == 0.0);
        }
    }

    #[test]
    fn bad_channel_rejected() {
        assert!(DiracChannelIndex::new(2, 0, 1).is_err());
        assert!(DiracChannelIndex::new(1, 3, 1).is_err());
        assert!(DiracChannelIndex::new(3, 1, 1).is_err());
    }

    #[test]
    fn product_needs_s_above_one() {
        let c = ScalarCoeffs::zeros(2);
        assert!(sphere_product(&c, &c, 1.0).is_err());
    }
}
