//! Channelwise evolution: the free half-wave flow by two routes, Duhamel
//! integrals, the free Dirac flow, and Crank–Nicolson stepping with radial
//! potentials.
//!
//! Flows follow the Schrödinger-form convention i∂_t u = (𝒟 + V)u, so the
//! Dirac group is e^{−it(𝒟+V)}; the half-wave flow is e^{it|D|}.

use crate::error::{domain, resolution, Error, Result};
use crate::quadrature::{gauss_jacobi_symmetric, jacobi_raw};
use crate::radial::{bessel_kernel, nyquist_check, radial_derivative, Layout, RadialGrid, RadialProfile, Side};
use crate::specfun::{i_pow, q_prefactor};
use crate::sphere::{DiracChannelIndex, SpinorSign};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Scalar channel (k, l), 1 ≤ l ≤ d_k. In three dimensions l = m + k + 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelIndex {
    pub k: usize,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum {
    pub n: usize,
    pub entries: BTreeMap<ChannelIndex, RadialProfile>,
}

impl ChannelSpectrum {
    pub fn new(n: usize) -> Self {
        Self { n, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, ch: ChannelIndex, profile: RadialProfile) -> Result<()> {
        if profile.side != Side::Frequency {
            return domain("channel spectra hold frequency-side profiles");
        }
        self.entries.insert(ch, profile);
        Ok(())
    }

    pub fn max_degree(&self) -> usize {
        self.entries.keys().map(|c| c.k).max().unwrap_or(0)
    }
}

/// Position-side spinor channels (ψ⁺, ψ⁻) at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracChannelState {
    pub entries: BTreeMap<DiracChannelIndex, (RadialProfile, RadialProfile)>,
    pub time: f64,
}

impl DiracChannelState {
    /// ∫ Σ (|ψ⁺|² + |ψ⁻|²) dr, which is ‖u‖²_{L²(R³)}.
    pub fn l2_norm_sq(&self) -> f64 {
        self.entries.values().map(|(p, m)| p.weighted_l2(0.0).powi(2) + m.weighted_l2(0.0).powi(2)).sum()
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 3 {
        return domain(format!("dimension {n} must be at least 3"));
    }
    Ok(())
}

fn frequency_input(f: &RadialProfile) -> Result<()> {
    if f.side != Side::Frequency {
        return domain("expected a frequency-side profile");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Half-wave flow, multiplier route

/// Cached Bessel kernels for synthesizing many frequency profiles of one
/// dimension onto a fixed position grid.
#[derive(Debug, Clone)]
pub struct WaveSynth {
    n: usize,
    rgrid: Arc<RadialGrid>,
    fgrid: Arc<RadialGrid>,
    kernels: BTreeMap<usize, Array2<f64>>,
}

impl WaveSynth {
    /// Kernels for degrees `0..=kmax`, valid for |t| ≤ `t_max`.
    pub fn new(n: usize, rgrid: Arc<RadialGrid>, fgrid: Arc<RadialGrid>, kmax: usize, t_max: f64) -> Result<Self> {
        check_dim(n)?;
        nyquist_check(rgrid.max() + t_max.abs(), fgrid.max_spacing(), "half-wave synthesis (r + |t|) x drho")?;
        let kernels = (0..=kmax)
            .map(|k| {
                let nu = k as f64 + (n as f64 - 2.0) / 2.0;
                (k, bessel_kernel(nu, rgrid.nodes(), fgrid.nodes()))
            })
            .collect();
        Ok(Self { n, rgrid, fgrid, kernels })
    }

    pub fn rgrid(&self) -> &Arc<RadialGrid> {
        &self.rgrid
    }

    pub fn fgrid(&self) -> &Arc<RadialGrid> {
        &self.fgrid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn kernel(&self, k: usize) -> Result<&Array2<f64>> {
        self.kernels.get(&k).ok_or_else(|| Error::Domain(format!("no kernel cached for degree {k}")))
    }

    /// Hankel synthesis of each column (frequency values on the cached grid).
    pub fn synthesize(&self, k: usize, columns: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        let kern = self.kernel(k)?;
        let rho = self.fgrid.nodes();
        let w = self.fgrid.weights();
        let half = self.n as f64 / 2.0;
        let nc = columns.len();
        let mut re = Array2::<f64>::zeros((rho.len(), nc));
        let mut im = Array2::<f64>::zeros((rho.len(), nc));
        for (c, col) in columns.iter().enumerate() {
            if col.len() != rho.len() {
                return Err(Error::Shape(format!("column of {} values for {} frequency nodes", col.len(), rho.len())));
            }
            for j in 0..rho.len() {
                let s = w[j] * rho[j].powf(half);
                re[(j, c)] = col[j].re * s;
                im[(j, c)] = col[j].im * s;
            }
        }
        let a = kern.dot(&re);
        let b = kern.dot(&im);
        let scale = (2.0 * PI).powf(half) * i_pow(-(k as i64));
        let rpow: Vec<f64> = self.rgrid.nodes().iter().map(|&r| r.powf(1.0 - half)).collect();
        Ok((0..nc)
            .map(|c| (0..rpow.len()).map(|i| scale * Complex64::new(a[(i, c)], b[(i, c)]) * rpow[i]).collect())
            .collect())
    }

    /// e^{it|D|} on one channel at each time, position side.
    pub fn evolve_many(&self, k: usize, fcheck: &[Complex64], times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let rho = self.fgrid.nodes();
        let cols: Vec<Vec<Complex64>> = times
            .iter()
            .map(|&t| fcheck.iter().zip(rho).map(|(f, &q)| f * Complex64::from_polar(1.0, t * q)).collect())
            .collect();
        self.synthesize(k, &cols)
    }

    /// Duhamel integrals u(t_m) = ∫₀^{t_m} e^{i(t_m−s)|D|}F(s) ds at every
    /// node t_m = m·ds of the forcing's time grid, by the trapezoidal rule
    /// in s. `forcing[j]` holds F̌(j·ds) on the cached frequency grid.
    pub fn duhamel_many(&self, k: usize, forcing: &[Vec<Complex64>], ds: f64) -> Result<Vec<Vec<Complex64>>> {
        let rho = self.fgrid.nodes();
        let mut sum = vec![ZERO; rho.len()];
        let mut cols = Vec::with_capacity(forcing.len());
        for (m, f) in forcing.iter().enumerate() {
            if f.len() != rho.len() {
                return Err(Error::Shape(format!("forcing slice of {} values for {} nodes", f.len(), rho.len())));
            }
            let s = m as f64 * ds;
            for j in 0..rho.len() {
                sum[j] += ds * Complex64::from_polar(1.0, -s * rho[j]) * f[j];
            }
            let col = if m == 0 {
                vec![ZERO; rho.len()]
            } else {
                (0..rho.len())
                    .map(|j| {
                        let ends = 0.5 * ds * (forcing[0][j] + Complex64::from_polar(1.0, -s * rho[j]) * f[j]);
                        Complex64::from_polar(1.0, s * rho[j]) * (sum[j] - ends)
                    })
                    .collect()
            };
            cols.push(col);
        }
        self.synthesize(k, &cols)
    }
}

/// e^{it|D|} applied to one channel by the Hankel multiplier formula
/// (2π)^{n/2} i^{−k} r^{1−n/2} ∫ e^{itρ} f̌(ρ) J_{k+(n−2)/2}(rρ) ρ^{n/2} dρ.
pub fn wave_channel_evolve_multiplier(
    ch: ChannelIndex,
    fcheck: &RadialProfile,
    t: f64,
    rgrid: &Arc<RadialGrid>,
    n: usize,
) -> Result<RadialProfile> {
    frequency_input(fcheck)?;
    check_dim(n)?;
    nyquist_check(rgrid.max() + t.abs(), fcheck.grid.max_spacing(), "half-wave multiplier (r + |t|) x drho")?;
    let nu = ch.k as f64 + (n as f64 - 2.0) / 2.0;
    let synth = WaveSynth {
        n,
        rgrid: rgrid.clone(),
        fgrid: fcheck.grid.clone(),
        kernels: BTreeMap::from([(ch.k, bessel_kernel(nu, rgrid.nodes(), fcheck.grid.nodes()))]),
    };
    let mut out = synth.evolve_many(ch.k, &fcheck.values, &[t])?;
    RadialProfile::new(rgrid.clone(), out.remove(0), Side::Position)
}

// ---------------------------------------------------------------------------
// Half-wave flow, Q_k route

/// Above this many λ nodes the Q route reports insufficient resolution.
pub const QREP_MAX_NODES: usize = 4096;

/// e^{it|D|} on one channel through the representation
/// u(t,r) = (2π)^{n/2} i^{−k} c_k 2^k Γ(k+(n−1)/2) ∫_{−1}^{1} Q_k(λ) ĝ(t+λr) dλ,
/// with ĝ(τ) = ∫₀^∞ e^{iρτ} ρ^{n−1} f̌(ρ) dρ.
///
/// The constant collapses to 2^{1−n/2}/√π. The weight (1−λ²)^{(n−3)/2} of
/// Q_k is absorbed into a Gauss–Jacobi rule, and ĝ is summed directly at the
/// λ nodes, so no λ-line interpolation is involved. The node count grows
/// with r·ρ_max.
pub fn wave_channel_evolve_qrep(
    ch: ChannelIndex,
    fcheck: &RadialProfile,
    t: f64,
    rgrid: &Arc<RadialGrid>,
    n: usize,
) -> Result<RadialProfile> {
    frequency_input(fcheck)?;
    check_dim(n)?;
    let k = ch.k;
    let a = (n as f64 - 3.0) / 2.0;
    let rho = fcheck.grid.nodes();
    let w = fcheck.grid.weights();
    let rho_max = fcheck.grid.max();
    let amp: Vec<Complex64> =
        (0..rho.len()).map(|j| fcheck.values[j] * w[j] * rho[j].powi(n as i32 - 1)).collect();
    let g_hat = |tau: f64| -> Complex64 { amp.iter().zip(rho).map(|(c, &q)| c * Complex64::from_polar(1.0, q * tau)).sum() };
    let constant = (2.0 * PI).powf(n as f64 / 2.0) * 2f64.powf(1.0 - n as f64 / 2.0) / PI.sqrt();
    let nodes_at = |r: f64| (0.75 * r * rho_max).ceil() as usize + k + 32;
    if nodes_at(rgrid.max()) > QREP_MAX_NODES {
        return resolution(format!(
            "Q route needs {} lambda nodes at r = {:.3} (limit {QREP_MAX_NODES}); r x rho_max too large",
            nodes_at(rgrid.max()),
            rgrid.max()
        ));
    }
    let pref = q_prefactor(k, a);
    let mut rules: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut values = Vec::with_capacity(rgrid.len());
    for &r in rgrid.nodes() {
        let m = nodes_at(r).next_multiple_of(16);
        if !rules.contains_key(&m) {
            rules.insert(m, gauss_jacobi_symmetric(m, a)?);
        }
        let (x, wq) = &rules[&m];
        let mut acc = ZERO;
        for (xi, wi) in x.iter().zip(wq) {
            acc += wi * pref * jacobi_raw(k, a, a, *xi) * g_hat(t + xi * r);
        }
        values.push(constant * acc);
    }
    RadialProfile::new(rgrid.clone(), values, Side::Position)
}

// ---------------------------------------------------------------------------
// Duhamel integral

/// ∫₀^t e^{i(t−s)|D|}F(s) ds on one channel by the trapezoidal rule in s.
/// `forcing[j]` is F̌(j·ds); t must be a node of that grid.
pub fn wave_duhamel_channel(
    ch: ChannelIndex,
    forcing: &[RadialProfile],
    ds: f64,
    t: f64,
    rgrid: &Arc<RadialGrid>,
    n: usize,
) -> Result<RadialProfile> {
    check_dim(n)?;
    if !(ds > 0.0) || t < 0.0 {
        return domain(format!("Duhamel integral needs ds > 0 and t >= 0, got ({ds}, {t})"));
    }
    let steps = (t / ds).round();
    if (steps * ds - t).abs() > 1e-9 * ds.max(t) {
        return domain(format!("t = {t} is not a node of the s-grid with step {ds}"));
    }
    let steps = steps as usize;
    if forcing.len() < steps + 1 {
        return domain(format!("forcing covers [0, {}] but t = {t}", (forcing.len().max(1) - 1) as f64 * ds));
    }
    let Some(first) = forcing.first() else {
        return domain("empty forcing");
    };
    let fgrid = first.grid.clone();
    for f in &forcing[..=steps] {
        frequency_input(f)?;
        if f.grid != fgrid {
            return Err(Error::Shape("forcing slices live on different frequency grids".into()));
        }
    }
    // The multipliers e^{−isρ} must be sampled at least 8 times per period.
    if ds * fgrid.max() > PI / 4.0 {
        return resolution(format!(
            "s-step {ds} too coarse for forcing bandwidth {:.3} (need ds * rho_max <= pi/4)",
            fgrid.max()
        ));
    }
    nyquist_check(rgrid.max() + t, fgrid.max_spacing(), "Duhamel synthesis (r + t) x drho")?;
    let nu = ch.k as f64 + (n as f64 - 2.0) / 2.0;
    let synth = WaveSynth {
        n,
        rgrid: rgrid.clone(),
        fgrid: fgrid.clone(),
        kernels: BTreeMap::from([(ch.k, bessel_kernel(nu, rgrid.nodes(), fgrid.nodes()))]),
    };
    let slices: Vec<Vec<Complex64>> = forcing[..=steps].iter().map(|f| f.values.clone()).collect();
    // Only the final time is needed; synthesize just that column.
    let rho = fgrid.nodes();
    let col: Vec<Complex64> = if steps == 0 {
        vec![ZERO; rho.len()]
    } else {
        (0..rho.len())
            .map(|j| {
                let mut acc = ZERO;
                for (m, f) in slices.iter().enumerate() {
                    let wgt = if m == 0 || m == steps { 0.5 * ds } else { ds };
                    acc += wgt * Complex64::from_polar(1.0, (t - m as f64 * ds) * rho[j]) * f[j];
                }
                acc
            })
            .collect()
    };
    let mut out = synth.synthesize(ch.k, &[col])?;
    RadialProfile::new(rgrid.clone(), out.remove(0), Side::Position)
}

// ---------------------------------------------------------------------------
// Free Dirac flow

/// The Dirac matrices α₁, α₂, α₃ with 𝒟 = −i Σ α_j ∂_j.
pub fn alpha_matrices() -> [[[Complex64; 4]; 4]; 3] {
    let o = ZERO;
    let l = Complex64::new(1.0, 0.0);
    let i = I;
    [
        [[o, o, o, l], [o, o, l, o], [o, l, o, o], [l, o, o, o]],
        [[o, o, o, -i], [o, o, i, o], [o, -i, o, o], [i, o, o, o]],
        [[o, o, l, o], [o, o, o, -l], [l, o, o, o], [o, -l, o, o]],
    ]
}

/// Riccati–Bessel transforms T_ℓ ψ(ρ) = ∫ ψ(r) √(rρ) J_{ℓ+½}(rρ) dr between a
/// position grid and a frequency grid, for ℓ = 0..=lmax.
///
/// T_ℓ is unitary on L²(0,∞) and its own inverse. On a spinor channel the
/// pair (T_{ℓ⁺}ψ⁺, T_{ℓ⁻}ψ⁻) = (a, b) diagonalizes the radial Dirac operator
/// to sgn(κ) ρ σ_x, so ‖u‖² = Σ∫|a|²+|b|² dρ and ‖∇u‖² = Σ∫ρ²(|a|²+|b|²) dρ.
#[derive(Debug, Clone)]
pub struct RiccatiBessel {
    pos: Arc<RadialGrid>,
    freq: Arc<RadialGrid>,
    kernels: Vec<Array2<f64>>,
}

impl RiccatiBessel {
    pub fn new(pos: Arc<RadialGrid>, freq: Arc<RadialGrid>, lmax: usize) -> Result<Self> {
        nyquist_check(pos.max(), freq.max_spacing(), "Riccati-Bessel synthesis r_max x drho")?;
        nyquist_check(freq.max(), pos.max_spacing(), "Riccati-Bessel analysis rho_max x dr")?;
        let kernels = (0..=lmax)
            .map(|l| {
                let mut k = bessel_kernel(l as f64 + 0.5, pos.nodes(), freq.nodes());
                for (i, &r) in pos.nodes().iter().enumerate() {
                    for (j, &q) in freq.nodes().iter().enumerate() {
                        k[(i, j)] *= (r * q).sqrt();
                    }
                }
                k
            })
            .collect();
        Ok(Self { pos, freq, kernels })
    }

    pub fn pos(&self) -> &Arc<RadialGrid> {
        &self.pos
    }

    pub fn freq(&self) -> &Arc<RadialGrid> {
        &self.freq
    }

    pub fn lmax(&self) -> usize {
        self.kernels.len() - 1
    }

    fn kernel(&self, l: usize) -> Result<&Array2<f64>> {
        self.kernels.get(l).ok_or_else(|| Error::Domain(format!("degree {l} exceeds transform lmax {}", self.lmax())))
    }

    /// Position values → frequency amplitudes.
    pub fn analyze(&self, l: usize, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        let k = self.kernel(l)?;
        let w = self.pos.weights();
        Ok(apply_transposed(k, w, psi))
    }

    /// Frequency amplitudes → position values.
    pub fn synthesize(&self, l: usize, amp: &[Complex64]) -> Result<Vec<Complex64>> {
        let k = self.kernel(l)?;
        let w = self.freq.weights();
        Ok(apply_direct(k, w, amp))
    }

    pub fn spectrum(&self, state: &DiracChannelState) -> Result<DiracSpectrum> {
        let mut entries = BTreeMap::new();
        for (ch, (p, m)) in &state.entries {
            if p.grid != self.pos || m.grid != self.pos {
                return Err(Error::Shape(format!("channel {ch:?} is not on the transform's position grid")));
            }
            let a = self.analyze(ch.l_plus(), &p.values)?;
            let b = self.analyze(ch.l_minus(), &m.values)?;
            entries.insert(*ch, (a, b));
        }
        Ok(DiracSpectrum { fgrid: self.freq.clone(), entries, time: state.time })
    }

    pub fn state(&self, spec: &DiracSpectrum) -> Result<DiracChannelState> {
        let mut entries = BTreeMap::new();
        for (ch, (a, b)) in &spec.entries {
            let p = RadialProfile::new(self.pos.clone(), self.synthesize(ch.l_plus(), a)?, Side::Position)?;
            let m = RadialProfile::new(self.pos.clone(), self.synthesize(ch.l_minus(), b)?, Side::Position)?;
            entries.insert(*ch, (p, m));
        }
        Ok(DiracChannelState { entries, time: spec.time })
    }
}

/// out_j = Σ_i w_i K[i,j] x_i
fn apply_transposed(k: &Array2<f64>, w: &[f64], x: &[Complex64]) -> Vec<Complex64> {
    let (ni, nj) = k.dim();
    let mut out = vec![ZERO; nj];
    for i in 0..ni {
        let xi = x[i] * w[i];
        let row = k.row(i);
        for j in 0..nj {
            out[j] += xi * row[j];
        }
    }
    out
}

/// out_i = Σ_j w_j K[i,j] x_j
fn apply_direct(k: &Array2<f64>, w: &[f64], x: &[Complex64]) -> Vec<Complex64> {
    let xw: Vec<Complex64> = x.iter().zip(w).map(|(v, wj)| v * wj).collect();
    k.outer_iter().map(|row| row.iter().zip(&xw).map(|(kij, v)| v * kij).sum()).collect()
}

/// Spinor channel amplitudes (a, b) = (T_{ℓ⁺}ψ⁺, T_{ℓ⁻}ψ⁻) on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracSpectrum {
    pub fgrid: Arc<RadialGrid>,
    pub entries: BTreeMap<DiracChannelIndex, (Vec<Complex64>, Vec<Complex64>)>,
    pub time: f64,
}

impl DiracSpectrum {
    pub fn zeros_like(&self) -> Self {
        let entries = self.entries.keys().map(|c| (*c, (vec![ZERO; self.fgrid.len()], vec![ZERO; self.fgrid.len()]))).collect();
        Self { fgrid: self.fgrid.clone(), entries, time: self.time }
    }

    /// Σ_ch ∫ (1+ρ²)^{d/2}·2 (λ⁺^{2s}|a|² + λ⁻^{2s}|b|²) dρ with λ = (1+ℓ(ℓ+1))^{1/2}:
    /// ‖Λ_ω^s u‖²_{H^d} for d ∈ {0, 1}, or the homogeneous Ḣ¹ norm when
    /// `homogeneous` is set.
    pub fn sobolev_sq(&self, d: u32, s: f64, homogeneous: bool) -> f64 {
        let rho = self.fgrid.nodes();
        let w = self.fgrid.weights();
        let mut acc = 0.0;
        for (ch, (a, b)) in &self.entries {
            let lp = lambda_pow(ch.l_plus(), s);
            let lm = lambda_pow(ch.l_minus(), s);
            for j in 0..rho.len() {
                let m = match (d, homogeneous) {
                    (0, _) => 1.0,
                    (_, true) => rho[j] * rho[j],
                    (_, false) => 1.0 + rho[j] * rho[j],
                };
                acc += w[j] * m * (lp * a[j].norm_sqr() + lm * b[j].norm_sqr());
            }
        }
        acc
    }

    /// ‖u‖²_{L²}.
    pub fn l2_sq(&self) -> f64 {
        self.sobolev_sq(0, 0.0, false)
    }

    /// Exact free flow e^{−it𝒟}: on each channel, e^{−it sgn(κ) ρ σ_x}.
    pub fn free_flow(&self, t: f64) -> Self {
        let rho = self.fgrid.nodes();
        let entries = self
            .entries
            .iter()
            .map(|(ch, (a, b))| {
                let s = ch.kappa.signum() as f64;
                let mut na = Vec::with_capacity(a.len());
                let mut nb = Vec::with_capacity(b.len());
                for j in 0..rho.len() {
                    let (sn, cs) = (t * rho[j]).sin_cos();
                    na.push(cs * a[j] - I * s * sn * b[j]);
                    nb.push(cs * b[j] - I * s * sn * a[j]);
                }
                (*ch, (na, nb))
            })
            .collect();
        Self { fgrid: self.fgrid.clone(), entries, time: self.time + t }
    }

    /// Amplitude scaling by |κ|^σ (the operator Λ̃_ω^σ).
    pub fn kappa_scale(&self, sigma: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(ch, (a, b))| {
                let f = (ch.kappa.abs() as f64).powf(sigma);
                (*ch, (a.iter().map(|v| v * f).collect(), b.iter().map(|v| v * f).collect()))
            })
            .collect();
        Self { fgrid: self.fgrid.clone(), entries, time: self.time }
    }
}

/// (1 + ℓ(ℓ+1))^{s}: the squared Λ_ω^s eigenvalue on degree ℓ.
pub fn lambda_pow(l: usize, s: f64) -> f64 {
    let lf = l as f64;
    (1.0 + lf * (lf + 1.0)).powf(s)
}

/// The free Dirac flow e^{−it𝒟}, equivalently cos(t|D|)f − i sin(t|D|)/|D| 𝒟f,
/// applied exactly in the Riccati–Bessel representation.
pub fn dirac_free_evolve(state: &DiracChannelState, t: f64, tr: &RiccatiBessel) -> Result<DiracChannelState> {
    let spec = tr.spectrum(state)?;
    tr.state(&spec.free_flow(t))
}

/// Radial action of 𝒟 on a channel: φ⁺ = −∂_rψ⁻ + (κ/r)ψ⁻,
/// φ⁻ = ∂_rψ⁺ + (κ/r)ψ⁺, by second-order differences.
pub fn dirac_radial_apply(ch: DiracChannelIndex, pair: (&RadialProfile, &RadialProfile)) -> Result<(RadialProfile, RadialProfile)> {
    let (pp, pm) = pair;
    if pp.grid != pm.grid || pp.side != Side::Position || pm.side != Side::Position {
        return Err(Error::Shape("both components must be position-side on one grid".into()));
    }
    let kap = ch.kappa as f64;
    let dp = radial_derivative(pp);
    let dm = radial_derivative(pm);
    let r = pp.grid.nodes();
    let plus = (0..r.len()).map(|i| -dm.values[i] + kap / r[i] * pm.values[i]).collect();
    let minus = (0..r.len()).map(|i| dp.values[i] + kap / r[i] * pp.values[i]).collect();
    Ok((
        RadialProfile { grid: pp.grid.clone(), values: plus, side: Side::Position },
        RadialProfile { grid: pp.grid.clone(), values: minus, side: Side::Position },
    ))
}

// ---------------------------------------------------------------------------
// Tridiagonal solves

#[derive(Debug, Clone)]
struct Tridiag {
    sub: Vec<Complex64>,
    inv: Vec<Complex64>,
    cp: Vec<Complex64>,
}

impl Tridiag {
    /// `sub[i]` couples row i to i−1, `sup[i]` row i to i+1.
    fn factor(sub: &[Complex64], diag: &[Complex64], sup: &[Complex64]) -> std::result::Result<Self, String> {
        let n = diag.len();
        let mut inv = vec![ZERO; n];
        let mut cp = vec![ZERO; n];
        for i in 0..n {
            let d = if i == 0 { diag[0] } else { diag[i] - sub[i] * cp[i - 1] };
            if !(d.norm() > 1e-300) || !d.re.is_finite() || !d.im.is_finite() {
                return Err(format!("zero pivot at row {i}"));
            }
            inv[i] = 1.0 / d;
            cp[i] = if i + 1 < n { sup[i] * inv[i] } else { ZERO };
        }
        Ok(Self { sub: sub.to_vec(), inv, cp })
    }

    fn solve(&self, x: &mut [Complex64]) {
        let n = x.len();
        x[0] *= self.inv[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub[i] * x[i - 1]) * self.inv[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let next = x[i + 1];
            x[i] -= self.cp[i] * next;
        }
    }
}

// ---------------------------------------------------------------------------
// Crank–Nicolson Dirac stepping

/// Crank–Nicolson stepper for one spinor channel with a scalar radial
/// potential, on a staggered grid: ψ⁺ at r_i = ih and ψ⁻ at s_i = (i−½)h,
/// i = 1..N, with ψ⁺(0) = 0 and ψ⁻ = 0 beyond r_N.
///
/// With φ⁻ = Aψ⁺ (lower bidiagonal), the radial operator is
/// H = [[V⁺, Aᵀ], [A, V⁻]], symmetric, so the Cayley step is unitary for the
/// h-weighted inner product.
#[derive(Debug, Clone)]
pub struct DiracCnSolver {
    channel: DiracChannelIndex,
    h: f64,
    len: usize,
    dt: f64,
    a_diag: Vec<f64>,
    a_sub: Vec<f64>,
    vp: Vec<f64>,
    vq: Vec<f64>,
    bq_inv: Vec<Complex64>,
    lhs: Tridiag,
}

impl DiracCnSolver {
    pub fn new(channel: DiracChannelIndex, h: f64, len: usize, dt: f64, v: impl Fn(f64) -> f64) -> Result<Self> {
        if !(h > 0.0) || len < 2 || !(dt > 0.0) {
            return domain(format!("Crank-Nicolson needs h > 0, N >= 2, dt > 0; got ({h}, {len}, {dt})"));
        }
        let kap = channel.kappa as f64;
        let mut a_diag = vec![0.0; len];
        let mut a_sub = vec![0.0; len];
        for i in 0..len {
            let s = (i as f64 + 0.5) * h;
            a_diag[i] = 1.0 / h + kap / (2.0 * s);
            a_sub[i] = if i == 0 { 0.0 } else { -1.0 / h + kap / (2.0 * s) };
        }
        let vp: Vec<f64> = (0..len).map(|i| v((i as f64 + 1.0) * h)).collect();
        let vq: Vec<f64> = (0..len).map(|i| v((i as f64 + 0.5) * h)).collect();
        if let Some(i) = vp.iter().chain(&vq).position(|x| !x.is_finite()) {
            return domain(format!("non-finite potential sample at index {i}"));
        }
        let tau = dt / 2.0;
        let bq_inv: Vec<Complex64> = vq.iter().map(|&x| 1.0 / (1.0 + I * tau * x)).collect();
        let t2 = tau * tau;
        let mut diag = vec![ZERO; len];
        let mut off = vec![ZERO; len];
        for i in 0..len {
            diag[i] = 1.0 + I * tau * vp[i] + t2 * bq_inv[i] * a_diag[i] * a_diag[i];
            if i + 1 < len {
                diag[i] += t2 * bq_inv[i + 1] * a_sub[i + 1] * a_sub[i + 1];
                off[i] = t2 * bq_inv[i + 1] * a_sub[i + 1] * a_diag[i + 1];
            }
        }
        let mut sub = vec![ZERO; len];
        sub[1..].copy_from_slice(&off[..len - 1]);
        let lhs = Tridiag::factor(&sub, &diag, &off)
            .map_err(|detail| Error::Numerical { channel: format!("{channel:?}"), detail })?;
        Ok(Self { channel, h, len, dt, a_diag, a_sub, vp, vq, bq_inv, lhs })
    }

    pub fn channel(&self) -> DiracChannelIndex {
        self.channel
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// φ⁻ = Aψ⁺ on the ψ⁻ nodes.
    pub fn apply_a(&self, p: &[Complex64]) -> Vec<Complex64> {
        (0..self.len).map(|i| self.a_diag[i] * p[i] + if i > 0 { self.a_sub[i] * p[i - 1] } else { ZERO }).collect()
    }

    /// φ⁺ = Aᵀψ⁻ on the ψ⁺ nodes.
    pub fn apply_at(&self, q: &[Complex64]) -> Vec<Complex64> {
        (0..self.len)
            .map(|i| self.a_diag[i] * q[i] + if i + 1 < self.len { self.a_sub[i + 1] * q[i + 1] } else { ZERO })
            .collect()
    }

    /// One Cayley step (I + iτH)u_new = (I − iτH)u_old, τ = dt/2.
    pub fn step(&self, p: &mut [Complex64], q: &mut [Complex64]) -> Result<()> {
        if p.len() != self.len || q.len() != self.len {
            return Err(Error::Shape(format!("state of sizes ({}, {}) for an {}-node solver", p.len(), q.len(), self.len)));
        }
        let tau = self.dt / 2.0;
        let ap = self.apply_a(p);
        let atq = self.apply_at(q);
        let r1: Vec<Complex64> = (0..self.len).map(|i| p[i] - I * tau * (self.vp[i] * p[i] + atq[i])).collect();
        let r2: Vec<Complex64> = (0..self.len).map(|i| q[i] - I * tau * (ap[i] + self.vq[i] * q[i])).collect();
        let d2: Vec<Complex64> = r2.iter().zip(&self.bq_inv).map(|(r, b)| r * b).collect();
        let at_d2 = self.apply_at(&d2);
        let mut rhs: Vec<Complex64> = (0..self.len).map(|i| r1[i] - I * tau * at_d2[i]).collect();
        self.lhs.solve(&mut rhs);
        let ap_new = self.apply_a(&rhs);
        for i in 0..self.len {
            q[i] = self.bq_inv[i] * (r2[i] - I * tau * ap_new[i]);
        }
        p.copy_from_slice(&rhs);
        if p.iter().chain(q.iter()).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numerical { channel: format!("{:?}", self.channel), detail: "non-finite state after solve".into() });
        }
        Ok(())
    }

    /// h Σ (|ψ⁺|² + |ψ⁻|²).
    pub fn norm_sq(&self, p: &[Complex64], q: &[Complex64]) -> f64 {
        self.h * p.iter().chain(q).map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Discrete ‖𝒟u‖² = h Σ |Aψ⁺|² + h Σ |Aᵀψ⁻|², which equals ‖∇u‖².
    pub fn dirac_sq(&self, p: &[Complex64], q: &[Complex64]) -> (f64, f64) {
        let a: f64 = self.apply_a(p).iter().map(|z| z.norm_sqr()).sum();
        let b: f64 = self.apply_at(q).iter().map(|z| z.norm_sqr()).sum();
        (self.h * a, self.h * b)
    }

    /// ψ⁻ averaged onto the ψ⁺ nodes.
    pub fn minus_on_plus_nodes(&self, q: &[Complex64]) -> Vec<Complex64> {
        (0..self.len).map(|i| 0.5 * (q[i] + if i + 1 < self.len { q[i + 1] } else { ZERO })).collect()
    }

    pub fn plus_nodes(&self) -> Vec<f64> {
        (1..=self.len).map(|i| i as f64 * self.h).collect()
    }

    pub fn minus_nodes(&self) -> Vec<f64> {
        (1..=self.len).map(|i| (i as f64 - 0.5) * self.h).collect()
    }
}

/// Staggered (ψ⁺, ψ⁻) grids for the Crank–Nicolson Dirac solver.
pub fn staggered_grids(h: f64, len: usize) -> Result<(Arc<RadialGrid>, Arc<RadialGrid>)> {
    Ok((Arc::new(RadialGrid::uniform(h, len)?), Arc::new(RadialGrid::shifted(h, len)?)))
}

/// One Crank–Nicolson step of i∂_t u = (𝒟 + V)u for every channel of a state
/// laid out on [`staggered_grids`].
pub fn dirac_cn_step(state: &DiracChannelState, v: impl Fn(f64) -> f64, dt: f64) -> Result<DiracChannelState> {
    let mut entries = BTreeMap::new();
    for (ch, (p, m)) in &state.entries {
        let (h, len) = match (p.grid.layout(), m.grid.layout()) {
            (Layout::Uniform { h, n }, Layout::Shifted { h: h2, n: n2 }) if h == h2 && n == n2 => (h, n),
            _ => return Err(Error::Shape(format!("channel {ch:?} is not on a staggered (uniform, shifted) grid pair"))),
        };
        let solver = DiracCnSolver::new(*ch, h, len, dt, &v)?;
        let mut pv = p.values.clone();
        let mut qv = m.values.clone();
        solver.step(&mut pv, &mut qv)?;
        entries.insert(
            *ch,
            (
                RadialProfile { grid: p.grid.clone(), values: pv, side: Side::Position },
                RadialProfile { grid: m.grid.clone(), values: qv, side: Side::Position },
            ),
        );
    }
    Ok(DiracChannelState { entries, time: state.time + dt })
}

/// Samples the spinor channels of a spectrum onto the staggered grids.
pub fn spectrum_to_staggered(
    spec: &DiracSpectrum,
    plus: &RiccatiBessel,
    minus: &RiccatiBessel,
) -> Result<BTreeMap<DiracChannelIndex, (Vec<Complex64>, Vec<Complex64>)>> {
    let mut out = BTreeMap::new();
    for (ch, (a, b)) in &spec.entries {
        out.insert(*ch, (plus.synthesize(ch.l_plus(), a)?, minus.synthesize(ch.l_minus(), b)?));
    }
    Ok(out)
}

/// Degree ℓ carried by the given spinor component.
pub fn spinor_degree(ch: &DiracChannelIndex, sign: SpinorSign) -> usize {
    ch.degree(sign)
}

// ---------------------------------------------------------------------------
// Wave equation with a radial potential

/// Channel state (u, ∂_t u) of the scalar wave equation, position side, on a
/// uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveChannelState {
    pub k: usize,
    pub n: usize,
    pub u: RadialProfile,
    pub ut: RadialProfile,
    pub time: f64,
}

/// Crank–Nicolson stepper for u_tt + L u = F on one channel, where in the
/// variable ψ = r^{(n−1)/2}u the operator is
/// L = −∂_r² + (ν² − ¼)/r² + V, ν = k + (n−2)/2, with Dirichlet ends.
///
/// The scheme is the trapezoidal rule for (ψ, π = ψ_t); it conserves the
/// discrete energy h Σ (|π|² + ψ̄·Lψ) exactly when F = 0.
#[derive(Debug, Clone)]
pub struct WaveCnSolver {
    k: usize,
    n: usize,
    h: f64,
    len: usize,
    dt: f64,
    diag: Vec<f64>,
    off: f64,
    lhs: Tridiag,
}

impl WaveCnSolver {
    pub fn new(k: usize, n: usize, h: f64, len: usize, dt: f64, v: impl Fn(f64) -> f64) -> Result<Self> {
        check_dim(n)?;
        if !(h > 0.0) || len < 3 || !(dt > 0.0) {
            return domain(format!("wave Crank-Nicolson needs h > 0, N >= 3, dt > 0; got ({h}, {len}, {dt})"));
        }
        let nu = k as f64 + (n as f64 - 2.0) / 2.0;
        let c = nu * nu - 0.25;
        let diag: Vec<f64> = (1..=len)
            .map(|i| {
                let r = i as f64 * h;
                2.0 / (h * h) + c / (r * r) + v(r)
            })
            .collect();
        if diag.iter().any(|d| !d.is_finite()) {
            return domain("non-finite potential sample");
        }
        let off = -1.0 / (h * h);
        let t2 = (dt / 2.0).powi(2);
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(1.0 + t2 * x, 0.0)).collect();
        let o = vec![Complex64::new(t2 * off, 0.0); len];
        let mut sub = o.clone();
        sub[0] = ZERO;
        let lhs = Tridiag::factor(&sub, &d, &o)
            .map_err(|detail| Error::Numerical { channel: format!("wave k = {k}"), detail })?;
        Ok(Self { k, n, h, len, dt, diag, off, lhs })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.len).map(|i| i as f64 * self.h).collect()
    }

    pub fn apply_l(&self, psi: &[Complex64]) -> Vec<Complex64> {
        (0..self.len)
            .map(|i| {
                let mut acc = self.diag[i] * psi[i];
                if i > 0 {
                    acc += self.off * psi[i - 1];
                }
                if i + 1 < self.len {
                    acc += self.off * psi[i + 1];
                }
                acc
            })
            .collect()
    }

    /// One step of the (ψ, π) system; `f_now`/`f_next` are the forcing in the
    /// ψ variable (r^{(n−1)/2}F) at the two time levels.
    pub fn step(&self, psi: &mut [Complex64], pi: &mut [Complex64], f_now: Option<&[Complex64]>, f_next: Option<&[Complex64]>) -> Result<()> {
        if psi.len() != self.len || pi.len() != self.len {
            return Err(Error::Shape("wave state does not match solver size".into()));
        }
        let tau = self.dt / 2.0;
        let t2 = tau * tau;
        let lpsi = self.apply_l(psi);
        let mut rhs: Vec<Complex64> = (0..self.len).map(|i| psi[i] - t2 * lpsi[i] + 2.0 * tau * pi[i]).collect();
        for f in [f_now, f_next].into_iter().flatten() {
            for i in 0..self.len {
                rhs[i] += t2 * f[i];
            }
        }
        self.lhs.solve(&mut rhs);
        for i in 0..self.len {
            pi[i] = (rhs[i] - psi[i]) / tau - pi[i];
        }
        psi.copy_from_slice(&rhs);
        if psi.iter().chain(pi.iter()).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numerical { channel: format!("wave k = {}", self.k), detail: "non-finite state".into() });
        }
        Ok(())
    }

    /// h Σ (|π|² + Re ψ̄·Lψ) = ‖u_t‖² + ‖∇u‖² + ∫V|u|² on the channel.
    pub fn energy(&self, psi: &[Complex64], pi: &[Complex64]) -> f64 {
        let lpsi = self.apply_l(psi);
        self.h * (0..self.len).map(|i| pi[i].norm_sqr() + (psi[i].conj() * lpsi[i]).re).sum::<f64>()
    }

    /// u = r^{−(n−1)/2} ψ.
    pub fn to_u(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let p = (self.n as f64 - 1.0) / 2.0;
        psi.iter().enumerate().map(|(i, z)| z / ((i as f64 + 1.0) * self.h).powf(p)).collect()
    }

    pub fn from_u(&self, u: &[Complex64]) -> Vec<Complex64> {
        let p = (self.n as f64 - 1.0) / 2.0;
        u.iter().enumerate().map(|(i, z)| z * ((i as f64 + 1.0) * self.h).powf(p)).collect()
    }
}

/// One Crank–Nicolson step of u_tt − Δu + Vu = 0 on a channel state.
pub fn wave_potential_evolve(state: &WaveChannelState, v: impl Fn(f64) -> f64, dt: f64) -> Result<WaveChannelState> {
    let h = match state.u.grid.layout() {
        Layout::Uniform { h, .. } => h,
        _ => return Err(Error::Shape("wave stepping needs a uniform grid".into())),
    };
    if state.ut.grid != state.u.grid {
        return Err(Error::Shape("u and u_t live on different grids".into()));
    }
    let solver = WaveCnSolver::new(state.k, state.n, h, state.u.grid.len(), dt, v)?;
    let mut psi = solver.from_u(&state.u.values);
    let mut pi = solver.from_u(&state.ut.values);
    solver.step(&mut psi, &mut pi, None, None)?;
    let grid = state.u.grid.clone();
    Ok(WaveChannelState {
        k: state.k,
        n: state.n,
        u: RadialProfile { grid: grid.clone(), values: solver.to_u(&psi), side: Side::Position },
        ut: RadialProfile { grid, values: solver.to_u(&pi), side: Side::Position },
        time: state.time + dt,
    })
}

/// Eigen-decomposition of the discrete channel operator L, giving the
/// half-wave group e^{it√L} exactly for the discretized problem.
#[derive(Debug, Clone)]
pub struct HalfWaveEigen {
    omega: Vec<f64>,
    vectors: DMatrix<f64>,
    h: f64,
    n: usize,
}

/// Largest grid accepted by [`HalfWaveEigen`]; dense eigensolves are cubic.
pub const HALF_WAVE_MAX_NODES: usize = 2048;

impl HalfWaveEigen {
    pub fn new(k: usize, n: usize, h: f64, len: usize, v: impl Fn(f64) -> f64) -> Result<Self> {
        if len > HALF_WAVE_MAX_NODES {
            return resolution(format!("{len} nodes exceed the dense eigen-solve limit {HALF_WAVE_MAX_NODES}"));
        }
        let op = WaveCnSolver::new(k, n, h, len, 1.0, v)?;
        let mut m = DMatrix::<f64>::zeros(len, len);
        for i in 0..len {
            m[(i, i)] = op.diag[i];
            if i + 1 < len {
                m[(i, i + 1)] = op.off;
                m[(i + 1, i)] = op.off;
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut omega = Vec::with_capacity(len);
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l < -1e-9 {
                return Err(Error::Hypothesis {
                    r: 0.0,
                    detail: format!("channel operator has negative eigenvalue {l:.3e} (mode {i}); sqrt(-Lap+V) undefined"),
                });
            }
            omega.push(l.max(0.0).sqrt());
        }
        Ok(Self { omega, vectors: eig.eigenvectors, h, n })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Coordinates of ψ = r^{(n−1)/2}u in the eigenbasis.
    pub fn coefficients(&self, u: &[Complex64]) -> Vec<Complex64> {
        let p = (self.n as f64 - 1.0) / 2.0;
        let psi: Vec<Complex64> = u.iter().enumerate().map(|(i, z)| z * ((i as f64 + 1.0) * self.h).powf(p)).collect();
        (0..self.len())
            .map(|j| self.vectors.column(j).iter().zip(&psi).map(|(v, z)| z * v).sum())
            .collect()
    }

    /// u(t_m) for every time, keeping only modes with ω ≤ `omega_max`.
    /// Returns the trajectory and the discarded share of Σ|c|².
    pub fn evolve_band(&self, coeffs: &[Complex64], times: &[f64], omega_max: f64) -> (Vec<Vec<Complex64>>, f64) {
        let keep: Vec<usize> = (0..self.len()).filter(|&j| self.omega[j] <= omega_max).collect();
        let total: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        let kept: f64 = keep.iter().map(|&j| coeffs[j].norm_sqr()).sum();
        let len = self.len();
        let nk = keep.len();
        let mut basis = Array2::<f64>::zeros((len, nk));
        for (c, &j) in keep.iter().enumerate() {
            for i in 0..len {
                basis[(i, c)] = self.vectors[(i, j)];
            }
        }
        let mut re = Array2::<f64>::zeros((nk, times.len()));
        let mut im = Array2::<f64>::zeros((nk, times.len()));
        for (m, &t) in times.iter().enumerate() {
            for (c, &j) in keep.iter().enumerate() {
                let z = coeffs[j] * Complex64::from_polar(1.0, t * self.omega[j]);
                re[(c, m)] = z.re;
                im[(c, m)] = z.im;
            }
        }
        let a = basis.dot(&re);
        let b = basis.dot(&im);
        let p = (self.n as f64 - 1.0) / 2.0;
        let scale: Vec<f64> = (0..len).map(|i| ((i as f64 + 1.0) * self.h).powf(-p)).collect();
        let out = (0..times.len()).map(|m| (0..len).map(|i| Complex64::new(a[(i, m)], b[(i, m)]) * scale[i]).collect()).collect();
        let dropped = if total > 0.0 { (total - kept).max(0.0) / total } else { 0.0 };
        (out, dropped)
    }

    /// u(t) = r^{−(n−1)/2} V e^{itω} c.
    pub fn evolve(&self, coeffs: &[Complex64], t: f64) -> Vec<Complex64> {
        let len = self.len();
        let phased: Vec<Complex64> = coeffs.iter().zip(&self.omega).map(|(c, w)| c * Complex64::from_polar(1.0, t * w)).collect();
        let p = (self.n as f64 - 1.0) / 2.0;
        (0..len)
            .map(|i| {
                let row = self.vectors.row(i);
                let acc: Complex64 = row.iter().zip(&phased).map(|(v, c)| c * v).sum();
                acc / ((i as f64 + 1.0) * self.h).powf(p)
            })
            .collect()
    }
}
