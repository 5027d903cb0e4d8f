//! Discrete space-time norms: the endpoint mixed norm L²_t L^∞_r L²_ω,
//! weighted smoothing norms, energy norms and the fixed-point norm X.
//!
//! A field at one time is a [`Frame`]: a list of partial waves f(r) on a
//! common radial grid, each carrying its angular degree, so that the L²_ω
//! norm at radius r is (Σ|f|²)^{1/2}. Norms are accumulated frame by frame,
//! so long runs never store a whole trajectory.

use crate::error::{domain, resolution, Error, Result};
use crate::propagators::ChannelSpectrum;
use crate::radial::{derivative_stencil, nyquist_check, weight_eval, AngularSymbol, RadialGrid, WeightSpec};
use crate::specfun::bracket;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

/// One angular component: u = f(r)·Y with Y unit-normalized on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialWave {
    pub degree: usize,
    pub values: Vec<Complex64>,
    /// ‖f Y‖²_{L²(R^n)} if known exactly (e.g. from the frequency side).
    pub l2_sq: Option<f64>,
    /// ‖∇(f Y)‖²_{L²(R^n)} if known exactly.
    pub grad_sq: Option<f64>,
}

impl PartialWave {
    pub fn new(degree: usize, values: Vec<Complex64>) -> Self {
        Self { degree, values, l2_sq: None, grad_sq: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub grid: Arc<RadialGrid>,
    pub dim: usize,
    pub waves: Vec<PartialWave>,
}

impl Frame {
    pub fn new(grid: Arc<RadialGrid>, dim: usize, waves: Vec<PartialWave>) -> Result<Self> {
        if dim < 2 {
            return domain(format!("dimension {dim} too small"));
        }
        for w in &waves {
            if w.values.len() != grid.len() {
                return Err(Error::Shape(format!("partial wave of {} values on a {}-node grid", w.values.len(), grid.len())));
            }
        }
        Ok(Self { grid, dim, waves })
    }

    fn symbol(&self, degree: usize, s: f64, symbol: AngularSymbol) -> f64 {
        if s == 0.0 {
            1.0
        } else {
            symbol.eval(degree, self.dim).powf(2.0 * s)
        }
    }

    /// Σ λ_ℓ^{2s} |f_ℓ(r)|² at every node: ‖Λ_ω^s u(r·)‖²_{L²_ω}.
    pub fn angular_density(&self, s: f64, symbol: AngularSymbol) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for w in &self.waves {
            let a = self.symbol(w.degree, s, symbol);
            for (o, v) in out.iter_mut().zip(&w.values) {
                *o += a * v.norm_sqr();
            }
        }
        out
    }

    /// Σ λ_ℓ^{2s} (|∂_r f|² + ℓ(ℓ+n−2)|f|²/r²) at every node: the angular
    /// integral of |∇Λ_ω^s u|² at radius r.
    pub fn gradient_density(&self, s: f64, symbol: AngularSymbol) -> Vec<f64> {
        let x = self.grid.nodes();
        let mut out = vec![0.0; x.len()];
        if x.len() < 3 {
            return out;
        }
        for w in &self.waves {
            let a = self.symbol(w.degree, s, symbol);
            let l = w.degree as f64;
            let ang = l * (l + self.dim as f64 - 2.0);
            for i in 0..x.len() {
                let (idx, c) = derivative_stencil(x, i);
                let d = c[0] * w.values[idx[0]] + c[1] * w.values[idx[1]] + c[2] * w.values[idx[2]];
                out[i] += a * (d.norm_sqr() + ang * w.values[i].norm_sqr() / (x[i] * x[i]));
            }
        }
        out
    }

    fn radial_integral(&self, density: &[f64], weight: Option<&WeightSpec>) -> f64 {
        let p = self.dim as i32 - 1;
        let f: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .zip(density)
            .map(|(&r, d)| {
                let w = weight.map_or(1.0, |s| 1.0 / weight_eval(s, r));
                d * w * r.powi(p)
            })
            .collect();
        self.grid.integrate(&f)
    }

    /// (‖Λ_ω^s u‖²_{L²}, ‖∇Λ_ω^s u‖²_{L²}), exact per-wave values where
    /// given, radial quadrature otherwise.
    pub fn sobolev_parts(&self, s: f64, symbol: AngularSymbol) -> (f64, f64) {
        let mut l2 = 0.0;
        let mut grad = 0.0;
        for w in &self.waves {
            let a = self.symbol(w.degree, s, symbol);
            if w.l2_sq.is_some() && w.grad_sq.is_some() {
                l2 += a * w.l2_sq.unwrap_or(0.0);
                grad += a * w.grad_sq.unwrap_or(0.0);
                continue;
            }
            let one = Frame { grid: self.grid.clone(), dim: self.dim, waves: vec![w.clone()] };
            l2 += a * w.l2_sq.unwrap_or_else(|| one.radial_integral(&one.angular_density(0.0, symbol), None));
            grad += a * w.grad_sq.unwrap_or_else(|| one.radial_integral(&one.gradient_density(0.0, symbol), None));
        }
        (l2, grad)
    }
}

/// Stored frames with their times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, frames: Vec<Frame>) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::Shape(format!("{} times for {} frames", times.len(), frames.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("trajectory times must increase strictly");
        }
        if let Some(f) = frames.first() {
            if frames.iter().any(|g| g.grid != f.grid) {
                return Err(Error::Shape("all frames must share one radial grid".into()));
            }
        }
        Ok(Self { times, frames })
    }

    fn stream(&self, cfg: NormConfig) -> Result<NormStream> {
        if self.frames.is_empty() {
            return domain("empty trajectory");
        }
        let mut s = NormStream::new(cfg);
        for (t, f) in self.times.iter().zip(&self.frames) {
            s.push(*t, f)?;
        }
        Ok(s)
    }
}

/// Requires frame spacing ≤ (1/8)(2π/ρ_max), which resolves the fastest
/// time oscillation the band limit allows.
pub fn check_frame_spacing(dt: f64, rho_max: f64) -> Result<()> {
    let limit = 2.0 * PI / (8.0 * rho_max);
    if dt > limit * (1.0 + 1e-12) {
        return resolution(format!("frame spacing {dt} exceeds (1/8)(2 pi / rho_max) = {limit:.4}"));
    }
    Ok(())
}

/// Trapezoid-in-time integral fed one sample at a time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeIntegral {
    last: Option<(f64, f64)>,
    acc: f64,
}

impl TimeIntegral {
    pub fn push(&mut self, t: f64, v: f64) -> Result<()> {
        if let Some((t0, v0)) = self.last {
            if !(t > t0) {
                return domain(format!("time {t} does not follow {t0}"));
            }
            self.acc += 0.5 * (t - t0) * (v + v0);
        }
        self.last = Some((t, v));
        Ok(())
    }

    pub fn value(&self) -> f64 {
        self.acc
    }
}

/// Which norms a [`NormStream`] tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    /// Angular regularity s in Λ_ω^s for the endpoint and energy norms.
    pub s: f64,
    pub symbol: AngularSymbol,
    /// Weights w for ‖w^{−1/2}u‖_{L²_tL²_x}.
    pub smoothing: Vec<WeightSpec>,
    /// Weights w for ‖w^{−1/2}∇u‖_{L²_tL²_x}.
    pub gradient_smoothing: Vec<WeightSpec>,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self { s: 0.0, symbol: AngularSymbol::Laplacian, smoothing: vec![], gradient_smoothing: vec![] }
    }
}

/// Running values of the configured norms.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStream {
    cfg: NormConfig,
    endpoint: TimeIntegral,
    smoothing: Vec<TimeIntegral>,
    gradient_smoothing: Vec<TimeIntegral>,
    energy_sup: f64,
    frames: usize,
    t_first: f64,
    t_last: f64,
}

impl NormStream {
    pub fn new(cfg: NormConfig) -> Self {
        let ns = cfg.smoothing.len();
        let ng = cfg.gradient_smoothing.len();
        Self {
            cfg,
            endpoint: TimeIntegral::default(),
            smoothing: vec![TimeIntegral::default(); ns],
            gradient_smoothing: vec![TimeIntegral::default(); ng],
            energy_sup: 0.0,
            frames: 0,
            t_first: 0.0,
            t_last: 0.0,
        }
    }

    pub fn push(&mut self, t: f64, frame: &Frame) -> Result<()> {
        let (s, sym) = (self.cfg.s, self.cfg.symbol);
        let dens = frame.angular_density(s, sym);
        let sup = dens.iter().cloned().fold(0.0, f64::max);
        self.endpoint.push(t, sup)?;
        if !self.cfg.smoothing.is_empty() {
            let plain = frame.angular_density(0.0, sym);
            for (acc, w) in self.smoothing.iter_mut().zip(&self.cfg.smoothing) {
                acc.push(t, frame.radial_integral(&plain, Some(w)))?;
            }
        }
        if !self.cfg.gradient_smoothing.is_empty() {
            let grad = frame.gradient_density(0.0, sym);
            for (acc, w) in self.gradient_smoothing.iter_mut().zip(&self.cfg.gradient_smoothing) {
                acc.push(t, frame.radial_integral(&grad, Some(w)))?;
            }
        }
        let (l2, g) = frame.sobolev_parts(s, sym);
        self.energy_sup = self.energy_sup.max((l2 + g).sqrt());
        if self.frames == 0 {
            self.t_first = t;
        }
        self.t_last = t;
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn span(&self) -> f64 {
        self.t_last - self.t_first
    }

    /// ‖Λ_ω^s u‖_{L²_t L^∞_r L²_ω}.
    pub fn endpoint(&self) -> f64 {
        self.endpoint.value().sqrt()
    }

    pub fn smoothing(&self, i: usize) -> f64 {
        self.smoothing[i].value().sqrt()
    }

    pub fn gradient_smoothing(&self, i: usize) -> f64 {
        self.gradient_smoothing[i].value().sqrt()
    }

    /// sup_t ‖Λ_ω^s u‖_{H¹}.
    pub fn energy_sup(&self) -> f64 {
        self.energy_sup
    }

    /// The X norm: endpoint part plus energy part.
    pub fn x_norm(&self) -> f64 {
        self.endpoint() + self.energy_sup
    }
}

/// ‖u‖_{L²_t L^∞_r L²_ω} over the trajectory's time span.
pub fn mixed_endpoint_norm(traj: &Trajectory) -> Result<f64> {
    Ok(traj.stream(NormConfig::default())?.endpoint())
}

/// ‖Λ_ω^s u‖_{L²_t L^∞_r L²_ω}.
pub fn mixed_endpoint_norm_angular(traj: &Trajectory, s: f64, symbol: AngularSymbol) -> Result<f64> {
    Ok(traj.stream(NormConfig { s, symbol, ..NormConfig::default() })?.endpoint())
}

/// ‖w^{−1/2} u‖_{L²_t L²_x}.
pub fn smoothing_norm(traj: &Trajectory, spec: WeightSpec) -> Result<f64> {
    Ok(traj.stream(NormConfig { smoothing: vec![spec], ..NormConfig::default() })?.smoothing(0))
}

/// ‖w^{−1/2} ∇u‖_{L²_t L²_x}.
pub fn gradient_smoothing_norm(traj: &Trajectory, spec: WeightSpec) -> Result<f64> {
    Ok(traj.stream(NormConfig { gradient_smoothing: vec![spec], ..NormConfig::default() })?.gradient_smoothing(0))
}

/// sup_t ‖Λ_ω^s u‖_{H¹}.
pub fn energy_norm(traj: &Trajectory, s: f64) -> Result<f64> {
    Ok(traj.stream(NormConfig { s, ..NormConfig::default() })?.energy_sup())
}

/// ‖Λ_ω^s u‖_{L²_tL^∞_rL²_ω} + ‖Λ_ω^s u‖_{L^∞_tH¹}. Needs s > 1.
pub fn x_norm(traj: &Trajectory, s: f64) -> Result<f64> {
    check_x_regularity(s)?;
    Ok(traj.stream(NormConfig { s, ..NormConfig::default() })?.x_norm())
}

pub fn check_x_regularity(s: f64) -> Result<()> {
    if !(s > 1.0) {
        return domain(format!("the X norm needs angular regularity s > 1, got {s}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub name: String,
    pub value: f64,
    pub grid_meta: BTreeMap<String, f64>,
}

impl NormReport {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, grid_meta: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.grid_meta.insert(key.to_string(), v);
        self
    }
}

/// Both sides of the weighted transfer inequality, in normalized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub s: u32,
    pub sigma: f64,
    /// Σ⟨k⟩^{2σ}‖⟨y⟩^s F_{λ→y}(1₊λ^{(n−1)/2}f̌)‖² / (2π)
    pub lhs: f64,
    /// ‖⟨x⟩^s Λ_ω^σ f‖² / (2π)^n, with Λ_ω^σ realized by ⟨k⟩^σ
    pub rhs: f64,
}

/// Weighted transfer check for s ∈ {0, 1}.
///
/// The left side is computed by direct quadrature of the one-dimensional
/// transform G(y) = ∫₀^∞ e^{−iyλ} λ^{(n−1)/2} f̌(λ) dλ on a y-grid; the right
/// side by Hankel synthesis of every channel to position space. With the
/// unnormalized transform, Plancherel gives LHS = 2π Σ⟨k⟩^{2σ}∫|f̌|²λ^{n−1}
/// and RHS = (2π)^n times the same sum at s = 0, so the normalized sides
/// agree there.
pub fn weighted_transfer_check(s: u32, sigma: f64, channels: &ChannelSpectrum) -> Result<TransferReport> {
    if s > 1 {
        return domain(format!("transfer check implemented for s in {{0, 1}}, got {s}"));
    }
    let n = channels.n;
    if n < 3 {
        return domain(format!("dimension {n} must be at least 3"));
    }
    let Some(first) = channels.entries.values().next() else {
        return Ok(TransferReport { s, sigma, lhs: 0.0, rhs: 0.0 });
    };
    let fgrid = first.grid.clone();
    if channels.entries.values().any(|p| p.grid != fgrid) {
        return Err(Error::Shape("channels on different frequency grids".into()));
    }
    let lam = fgrid.nodes();
    let wl = fgrid.weights();
    let lam_max = fgrid.max();
    let dlam = fgrid.max_spacing();
    // y-grid: e^{−iyλ} sampled 4 times per period in λ, and G band-limited
    // to [0, λ_max] sampled 4 times per period in y.
    let y_max = PI / (2.0 * dlam);
    let dy = PI / (2.0 * lam_max);
    let ny = (y_max / dy).ceil() as usize;
    let ys: Vec<f64> = (-(ny as i64)..=ny as i64).map(|i| i as f64 * dy).collect();
    let ext = (n as f64 - 1.0) / 2.0;
    // Position grid for the right side, with the same sampling rules.
    let r_max = PI / (2.0 * dlam);
    let rgrid = Arc::new(RadialGrid::uniform_to(r_max, PI / (2.0 * lam_max))?);
    nyquist_check(rgrid.max(), dlam, "transfer synthesis")?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut kernels: BTreeMap<usize, ndarray::Array2<f64>> = BTreeMap::new();
    for (ch, prof) in &channels.entries {
        let ak = bracket(ch.k as f64).powf(2.0 * sigma);
        let amp: Vec<Complex64> = (0..lam.len()).map(|j| prof.values[j] * wl[j] * lam[j].powf(ext)).collect();
        let mut acc = 0.0;
        for (iy, &y) in ys.iter().enumerate() {
            let g: Complex64 = amp.iter().zip(lam).map(|(a, &l)| a * Complex64::from_polar(1.0, -y * l)).sum();
            let end = if iy == 0 || iy + 1 == ys.len() { 0.5 } else { 1.0 };
            acc += end * dy * (1.0 + y * y).powi(s as i32) * g.norm_sqr();
        }
        lhs += ak * acc / (2.0 * PI);
        let kern = kernels.entry(ch.k).or_insert_with(|| {
            crate::radial::bessel_kernel(ch.k as f64 + (n as f64 - 2.0) / 2.0, rgrid.nodes(), fgrid.nodes())
        });
        let pos = crate::radial::hankel_with_kernel(prof, ch.k, n, &rgrid, kern);
        let dens: Vec<f64> = rgrid
            .nodes()
            .iter()
            .zip(&pos.values)
            .map(|(&r, v)| (1.0 + r * r).powi(s as i32) * v.norm_sqr() * r.powi(n as i32 - 1))
            .collect();
        rhs += ak * rgrid.integrate(&dens) / (2.0 * PI).powi(n as i32);
    }
    Ok(TransferReport { s, sigma, lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagators::ChannelIndex;
    use crate::radial::{RadialProfile, Side};

    fn frame_one(g: &Arc<RadialGrid>, degree: usize, f: impl Fn(f64) -> f64) -> Frame {
        let v = g.nodes().iter().map(|&r| Complex64::new(f(r), 0.0)).collect();
        Frame::new(g.clone(), 3, vec![PartialWave::new(degree, v)]).unwrap()
    }

    #[test]
    fn single_frame_endpoint_is_sqrt_t_sup() {
        let g = Arc::new(RadialGrid::uniform_to(10.0, 0.01).unwrap());
        let fr = frame_one(&g, 2, |r| r * (-r).exp());
        let traj = Trajectory::new(vec![0.0, 1.5, 3.0], vec![fr.clone(), fr.clone(), fr]).unwrap();
        let sup = (1.0f64).exp().recip();
        assert!((mixed_endpoint_norm(&traj).unwrap() - 3f64.sqrt() * sup).abs() < 1e-6);
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        let t = Trajectory::new(vec![], vec![]).unwrap();
        assert!(mixed_endpoint_norm(&t).is_err());
    }

    #[test]
    fn smoothing_unit_weight_and_homogeneity() {
        let g = Arc::new(RadialGrid::uniform_to(20.0, 0.01).unwrap());
        let fr = frame_one(&g, 0, |r| (-r * r).exp());
        let l2 = fr.radial_integral(&fr.angular_density(0.0, AngularSymbol::Laplacian), None).sqrt();
        let traj = Trajectory::new(vec![0.0, 2.0], vec![fr.clone(), fr.clone()]).unwrap();
        let a = smoothing_norm(&traj, WeightSpec::unit()).unwrap();
        assert!((a - 2f64.sqrt() * l2).abs() < 1e-12);
        let fr2 = frame_one(&g, 0, |r| 2.0 * (-r * r).exp());
        let traj2 = Trajectory::new(vec![0.0, 2.0], vec![fr2.clone(), fr2]).unwrap();
        let b = smoothing_norm(&traj2, WeightSpec::w_sigma(2.0)).unwrap();
        let c = smoothing_norm(&traj, WeightSpec::w_sigma(2.0)).unwrap();
        assert!((b - 2.0 * c).abs() < 1e-12 * b);
        assert_eq!(weight_eval(&WeightSpec::w_sigma(3.0), 1.0), 1.0);
    }

    #[test]
    fn x_norm_needs_s_above_one() {
        let g = Arc::new(RadialGrid::uniform_to(5.0, 0.1).unwrap());
        let fr = frame_one(&g, 0, |r| (-r).exp());
        let traj = Trajectory::new(vec![0.0], vec![fr]).unwrap();
        assert!(matches!(x_norm(&traj, 1.0), Err(Error::Domain(_))));
        assert!(x_norm(&traj, 1.5).is_ok());
    }

    #[test]
    fn x_norm_of_degree_zero_profile() {
        let g = Arc::new(RadialGrid::uniform_to(30.0, 0.005).unwrap());
        let fr = frame_one(&g, 0, |r| (-r * r).exp());
        let traj = Trajectory::new(vec![0.0, 4.0], vec![fr.clone(), fr.clone()]).unwrap();
        let (l2, gr) = fr.sobolev_parts(0.0, AngularSymbol::Laplacian);
        // ∫ e^{−2r²} r² dr and ∫ 4r² e^{−2r²} r² dr
        let l2x = PI.sqrt() / (4.0 * 2f64.powf(1.5));
        let grx = 3.0 * PI.sqrt() / (2.0 * 2f64.powf(2.5));
        assert!((l2 - l2x).abs() < 1e-6 && (gr - grx).abs() < 1e-4, "{l2} {gr}");
        let x = x_norm(&traj, 1.5).unwrap();
        assert!((x - (2.0 + (l2 + gr).sqrt())).abs() < 1e-4);
        let zero = frame_one(&g, 0, |_| 0.0);
        let tz = Trajectory::new(vec![0.0, 1.0], vec![zero.clone(), zero]).unwrap();
        assert_eq!(x_norm(&tz, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn transfer_equality_at_s_zero() {
        let fg = Arc::new(RadialGrid::uniform_to(5.0, 0.03).unwrap());
        let mut cs = ChannelSpectrum::new(3);
        for (k, c) in [(0usize, 2.0), (3, 2.5)] {
            let p = RadialProfile::from_fn(fg.clone(), Side::Frequency, |q| {
                Complex64::new((-(q - c).powi(2) / 0.2).exp(), 0.3 * (-(q - c).powi(2) / 0.3).exp())
            });
            cs.insert(ChannelIndex { k, l: 1 }, p).unwrap();
        }
        let r0 = weighted_transfer_check(0, 0.7, &cs).unwrap();
        assert!(((r0.lhs - r0.rhs) / r0.rhs).abs() < 1e-6, "{r0:?}");
        let r1 = weighted_transfer_check(1, 0.7, &cs).unwrap();
        assert!(r1.lhs.is_finite() && r1.rhs > 0.0 && r1.lhs > r0.lhs);
        let empty = weighted_transfer_check(1, 0.0, &ChannelSpectrum::new(3)).unwrap();
        assert_eq!((empty.lhs, empty.rhs), (0.0, 0.0));
    }
}
