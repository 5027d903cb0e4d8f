//! Radial grids, profiles on them, the channel Hankel transform, radial
//! differentiation and the weight functions used by the smoothing norms.

use crate::error::{domain, resolution, Result};
use crate::propagators::ChannelSpectrum;
use crate::quadrature::gregory_weights;
use crate::specfun::{bessel_j_unchecked, bracket, i_pow};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum Layout {
    /// Log-spaced on (r_min, 1), linear on [1, r_max].
    Composite { r_min: f64, r_max: f64, n_log: usize, n_lin: usize },
    /// Nodes h, 2h, …, n·h.
    Uniform { h: f64, n: usize },
    /// Midpoints h/2, 3h/2, …, (n−½)h.
    Shifted { h: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    layout: Layout,
}

/// Composite grid: `n_log` log-spaced nodes r_min·r_min^{−i/n_log} below 1,
/// then `n_lin` equispaced nodes from 1 to r_max inclusive.
pub fn build_radial_grid(r_min: f64, r_max: f64, n_log: usize, n_lin: usize) -> Result<RadialGrid> {
    RadialGrid::composite(r_min, r_max, n_log, n_lin)
}

impl RadialGrid {
    pub fn composite(r_min: f64, r_max: f64, n_log: usize, n_lin: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < 1.0 && r_max > 1.0 && r_max.is_finite()) {
            return domain(format!("radial grid needs 0 < r_min < 1 < r_max, got ({r_min}, {r_max})"));
        }
        if n_log < 2 || n_lin < 2 {
            return domain("radial grid needs at least two nodes per segment");
        }
        let du = -r_min.ln() / n_log as f64;
        let h = (r_max - 1.0) / (n_lin - 1) as f64;
        let mut nodes = Vec::with_capacity(n_log + n_lin);
        for i in 0..n_log {
            nodes.push(r_min * (i as f64 * du).exp());
        }
        for j in 0..n_lin {
            nodes.push(if j + 1 == n_lin { r_max } else { 1.0 + j as f64 * h });
        }
        // Gregory-corrected trapezoid in u = ln r on the log segment
        // (dr = r du) and in r on the linear one; [0, r_min] is a one-node
        // rectangle.
        let mut weights = vec![0.0; nodes.len()];
        let wl = gregory_weights(n_log, du);
        for (i, w) in wl.iter().enumerate() {
            weights[i] += w * nodes[i];
        }
        let wr = gregory_weights(n_lin - 1, h);
        for (j, w) in wr.iter().enumerate() {
            weights[n_log + j] += w;
        }
        weights[0] += r_min;
        Ok(Self { nodes, weights, layout: Layout::Composite { r_min, r_max, n_log, n_lin } })
    }

    /// Uniform grid with trapezoid weights; the omitted node at 0 carries no
    /// weight because every channel integrand vanishes there.
    pub fn uniform(h: f64, n: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || n < 2 {
            return domain(format!("uniform grid needs h > 0 and n >= 2, got ({h}, {n})"));
        }
        let nodes: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
        let mut weights = vec![h; n];
        weights[n - 1] = 0.5 * h;
        Ok(Self { nodes, weights, layout: Layout::Uniform { h, n } })
    }

    /// Midpoint grid (i − ½)h, i = 1..n, with midpoint-rule weights.
    pub fn shifted(h: f64, n: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || n < 2 {
            return domain(format!("shifted grid needs h > 0 and n >= 2, got ({h}, {n})"));
        }
        let nodes = (1..=n).map(|i| (i as f64 - 0.5) * h).collect();
        Ok(Self { nodes, weights: vec![h; n], layout: Layout::Shifted { h, n } })
    }

    /// Uniform grid with spacing close to `h` reaching exactly `r_max`.
    pub fn uniform_to(r_max: f64, h: f64) -> Result<Self> {
        let n = (r_max / h).ceil().max(2.0) as usize;
        Self::uniform(r_max / n as f64, n)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Largest gap between consecutive nodes (and from 0 to the first one).
    pub fn max_spacing(&self) -> f64 {
        let mut h = self.nodes[0];
        for w in self.nodes.windows(2) {
            h = h.max(w[1] - w[0]);
        }
        h
    }

    pub fn uniform_step(&self) -> Option<f64> {
        match self.layout {
            Layout::Uniform { h, .. } | Layout::Shifted { h, .. } => Some(h),
            Layout::Composite { .. } => None,
        }
    }

    /// ∫₀^∞ f dr by the grid weights, fixed summation order.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.weights.iter().zip(&self.nodes).map(|(w, &r)| w * f(r)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Position,
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<Complex64>,
    pub side: Side,
}

impl RadialProfile {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>, side: Side) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(crate::Error::Shape(format!("{} values for a {}-node grid", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return domain(format!("non-finite profile value at node {i}"));
        }
        Ok(Self { grid, values, side })
    }

    pub fn zeros(grid: Arc<RadialGrid>, side: Side) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, values, side }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, side: Side, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid, values, side }
    }

    /// (∫|v|² r^{p} dr)^{1/2}.
    pub fn weighted_l2(&self, p: f64) -> f64 {
        let f: Vec<f64> = self.values.iter().zip(self.grid.nodes()).map(|(v, r)| v.norm_sqr() * r.powf(p)).collect();
        self.grid.integrate(&f).sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| v * c).collect(), side: self.side }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    WSigma,
    VSigma,
    JapBracketPow,
    TauEps,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub p: f64,
}

impl WeightSpec {
    pub fn w_sigma(sigma: f64) -> Self {
        Self { kind: WeightKind::WSigma, sigma, eps: 0.0, p: 0.0 }
    }

    pub fn v_sigma(sigma: f64) -> Self {
        Self { kind: WeightKind::VSigma, sigma, eps: 0.0, p: 0.0 }
    }

    pub fn bracket_pow(p: f64) -> Self {
        Self { kind: WeightKind::JapBracketPow, sigma: 0.0, eps: 0.0, p }
    }

    /// r^{1/2−ε} + r.
    pub fn tau_eps(eps: f64) -> Self {
        Self::tau_eps_pow(eps, 1.0)
    }

    /// (r^{1/2−ε} + r)^p.
    pub fn tau_eps_pow(eps: f64, p: f64) -> Self {
        Self { kind: WeightKind::TauEps, sigma: 0.0, eps, p }
    }

    pub fn power(p: f64) -> Self {
        Self { kind: WeightKind::Power, sigma: 0.0, eps: 0.0, p }
    }

    pub fn unit() -> Self {
        Self::power(0.0)
    }
}

/// Radial weight at r > 0.
pub fn weight_eval(spec: &WeightSpec, r: f64) -> f64 {
    match spec.kind {
        WeightKind::WSigma => r * (1.0 + r.ln().abs()).powf(spec.sigma),
        WeightKind::VSigma => r.sqrt() * r.ln().abs().powf(spec.sigma) + bracket(r).powf(1.0 + spec.sigma),
        WeightKind::JapBracketPow => bracket(r).powf(spec.p),
        WeightKind::TauEps => (r.powf(0.5 - spec.eps) + r).powf(spec.p),
        WeightKind::Power => r.powf(spec.p),
    }
}

/// Dense kernel K[i, j] = J_ν(out_i · in_j).
pub fn bessel_kernel(nu: f64, out_nodes: &[f64], in_nodes: &[f64]) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = out_nodes
        .par_iter()
        .map(|&r| in_nodes.iter().map(|&q| bessel_j_unchecked(nu, r * q)).collect())
        .collect();
    let mut k = Array2::zeros((out_nodes.len(), in_nodes.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            k[(i, j)] = v;
        }
    }
    k
}

/// Checks that the Bessel kernel J(r ρ) is sampled at least four times per
/// oscillation: extent · spacing ≤ π/2.
pub fn nyquist_check(extent: f64, spacing: f64, what: &str) -> Result<()> {
    if extent * spacing > FRAC_PI_2 * (1.0 + 1e-12) {
        return resolution(format!(
            "{what}: extent {extent:.4} times spacing {spacing:.4} exceeds pi/2 (fewer than 4 nodes per oscillation)"
        ));
    }
    Ok(())
}

/// Hankel transform of channel degree k in dimension n.
///
/// Frequency input is synthesized to position space by
/// g(r) = (2π)^{n/2} i^{−k} r^{−(n−2)/2} ∫ c(ρ) J_{k+(n−2)/2}(rρ) ρ^{n/2} dρ;
/// position input goes the other way with the inverse normalization
/// (2π)^{−n/2} i^{k}.
pub fn hankel_transform(profile: &RadialProfile, k: usize, n: usize, out_grid: &Arc<RadialGrid>) -> Result<RadialProfile> {
    if n < 3 {
        return domain(format!("dimension {n} must be at least 3"));
    }
    nyquist_check(out_grid.max(), profile.grid.max_spacing(), "hankel transform")?;
    let nu = k as f64 + (n as f64 - 2.0) / 2.0;
    let kern = bessel_kernel(nu, out_grid.nodes(), profile.grid.nodes());
    Ok(hankel_with_kernel(profile, k, n, out_grid, &kern))
}

/// Hankel transform with a precomputed kernel from [`bessel_kernel`].
pub fn hankel_with_kernel(profile: &RadialProfile, k: usize, n: usize, out_grid: &Arc<RadialGrid>, kern: &Array2<f64>) -> RadialProfile {
    let half = n as f64 / 2.0;
    let (scale, side) = match profile.side {
        Side::Frequency => ((2.0 * PI).powf(half) * i_pow(-(k as i64)), Side::Position),
        Side::Position => ((2.0 * PI).powf(-half) * i_pow(k as i64), Side::Frequency),
    };
    let src = profile.grid.nodes();
    let w = profile.grid.weights();
    let re = Array1::from_iter((0..src.len()).map(|j| profile.values[j].re * w[j] * src[j].powf(half)));
    let im = Array1::from_iter((0..src.len()).map(|j| profile.values[j].im * w[j] * src[j].powf(half)));
    let a = kern.dot(&re);
    let b = kern.dot(&im);
    let values = out_grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| scale * Complex64::new(a[i], b[i]) * r.powf(1.0 - half))
        .collect();
    RadialProfile { grid: out_grid.clone(), values, side }
}

/// Three-point derivative weights at node i (second order on any grid,
/// one-sided at the ends).
pub(crate) fn derivative_stencil(x: &[f64], i: usize) -> ([usize; 3], [f64; 3]) {
    let n = x.len();
    if i == 0 {
        let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
        (
            [0, 1, 2],
            [-(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))],
        )
    } else if i == n - 1 {
        let (h1, h2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
        (
            [n - 3, n - 2, n - 1],
            [h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2.0 * h2 + h1) / (h2 * (h1 + h2))],
        )
    } else {
        let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        (
            [i - 1, i, i + 1],
            [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))],
        )
    }
}

/// ∂_r by centered second-order differences.
pub fn radial_derivative(profile: &RadialProfile) -> RadialProfile {
    let x = profile.grid.nodes();
    let values = if x.len() < 3 {
        vec![Complex64::new(0.0, 0.0); x.len()]
    } else {
        (0..x.len())
            .map(|i| {
                let (idx, c) = derivative_stencil(x, i);
                c[0] * profile.values[idx[0]] + c[1] * profile.values[idx[1]] + c[2] * profile.values[idx[2]]
            })
            .collect()
    };
    RadialProfile { grid: profile.grid.clone(), values, side: profile.side }
}

/// Symbol used for the angular regularity weight of channel degree k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularSymbol {
    /// ⟨k⟩ = (1+k²)^{1/2}
    Bracket,
    /// (1 + k(k+n−2))^{1/2}, the exact eigenvalue of Λ_ω
    Laplacian,
}

impl AngularSymbol {
    pub fn eval(self, k: usize, n: usize) -> f64 {
        let kf = k as f64;
        match self {
            AngularSymbol::Bracket => bracket(kf),
            AngularSymbol::Laplacian => (1.0 + kf * (kf + n as f64 - 2.0)).sqrt(),
        }
    }
}

/// (Σ ⟨k⟩^{2σ} ‖ρ^s f̌ ρ^{(n−1)/2}‖²)^{1/2} over the channels of a spectrum.
pub fn channel_sobolev_norm(channels: &ChannelSpectrum, s: f64, sigma: f64) -> f64 {
    channel_sobolev_norm_with(channels, s, sigma, AngularSymbol::Bracket)
}

pub fn channel_sobolev_norm_with(channels: &ChannelSpectrum, s: f64, sigma: f64, symbol: AngularSymbol) -> f64 {
    let n = channels.n;
    let mut acc = 0.0;
    for (ch, prof) in &channels.entries {
        let a = symbol.eval(ch.k, n).powf(2.0 * sigma);
        acc += a * prof.weighted_l2(2.0 * s + n as f64 - 1.0).powi(2);
    }
    acc.sqrt()
}

/// ∫(|∂_r g|² + k(k+n−2)/r² |g|²) r^{n−1} dr for a position-side channel
/// coefficient g: the channel's share of ‖∇f‖².
pub fn channel_gradient_sq(profile: &RadialProfile, k: usize, n: usize) -> f64 {
    let d = radial_derivative(profile);
    let kf = k as f64;
    let ang = kf * (kf + n as f64 - 2.0);
    let f: Vec<f64> = profile
        .grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| (d.values[i].norm_sqr() + ang / (r * r) * profile.values[i].norm_sqr()) * r.powf(n as f64 - 1.0))
        .collect();
    profile.grid.integrate(&f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_grid_shape_and_integrals() {
        let g = build_radial_grid(1e-4, 50.0, 200, 400).unwrap();
        assert_eq!(g.len(), 600);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(g.weights().iter().all(|&w| w > 0.0));
        let e = g.integrate_fn(|r| (-r).exp());
        assert!((e - 1.0).abs() < 1e-6, "{e}");
        let q = g.integrate_fn(|r| r * (-r * r / 2.0).exp());
        assert!((q - 1.0).abs() < 1e-6, "{q}");
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(build_radial_grid(2.0, 50.0, 10, 10).is_err());
        assert!(build_radial_grid(1e-3, 0.5, 10, 10).is_err());
        assert!(RadialGrid::uniform(0.0, 10).is_err());
    }

    #[test]
    fn weights_at_reference_points() {
        for s in [0.5, 1.0, 2.0, 3.0] {
            assert_eq!(weight_eval(&WeightSpec::w_sigma(s), 1.0), 1.0);
        }
        let e = std::f64::consts::E;
        assert!((weight_eval(&WeightSpec::w_sigma(2.0), e) - 4.0 * e).abs() < 1e-12);
        assert!((weight_eval(&WeightSpec::tau_eps(0.1), 1.0) - 2.0).abs() < 1e-15);
        assert!((weight_eval(&WeightSpec::tau_eps_pow(0.1, 2.0), 1.0) - 4.0).abs() < 1e-15);
        assert!((weight_eval(&WeightSpec::bracket_pow(2.0), 3.0) - 10.0).abs() < 1e-12);
        assert!((weight_eval(&WeightSpec::v_sigma(2.0), 1.0) - 2f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn w_sigma_tails() {
        let g = build_radial_grid(1e-4, 50.0, 200, 400).unwrap();
        let w = WeightSpec::w_sigma(2.0);
        let lo = weight_eval(&w, g.nodes()[0]);
        let hi = weight_eval(&w, g.max());
        assert!(lo < 0.02 && hi > 100.0, "{lo} {hi}");
    }

    #[test]
    fn gaussian_closed_form() {
        let fq = Arc::new(RadialGrid::uniform_to(12.0, 0.05).unwrap());
        let pos = Arc::new(RadialGrid::uniform_to(20.0, 0.05).unwrap());
        let c = RadialProfile::from_fn(fq, Side::Frequency, |q| Complex64::new((-q * q / 2.0).exp(), 0.0));
        let g = hankel_transform(&c, 0, 3, &pos).unwrap();
        let norm = (2.0 * PI).powf(1.5);
        for (r, v) in pos.nodes().iter().zip(&g.values) {
            let exact = norm * (-r * r / 2.0).exp();
            assert!((v - exact).norm() < 1e-6, "r={r}: {v} vs {exact}");
        }
    }

    #[test]
    fn nyquist_violation_is_reported() {
        let fq = Arc::new(RadialGrid::uniform_to(5.0, 0.2).unwrap());
        let pos = Arc::new(RadialGrid::uniform_to(40.0, 0.05).unwrap());
        let c = RadialProfile::zeros(fq, Side::Frequency);
        assert!(matches!(hankel_transform(&c, 0, 3, &pos), Err(crate::Error::Resolution(_))));
    }

    #[test]
    fn derivative_second_order() {
        let err = |h: f64| {
            let g = Arc::new(RadialGrid::uniform_to(6.0, h).unwrap());
            let p = RadialProfile::from_fn(g, Side::Position, |r| Complex64::new((-r * r).exp(), 0.0));
            let d = radial_derivative(&p);
            d.grid.nodes().iter().zip(&d.values).map(|(r, v)| (v.re + 2.0 * r * (-r * r).exp()).abs()).fold(0.0, f64::max)
        };
        let order = (err(0.02) / err(0.01)).log2();
        assert!(order > 1.9, "{order}");
        let g = Arc::new(RadialGrid::uniform_to(10.0, 0.01).unwrap());
        let p = RadialProfile::from_fn(g, Side::Position, |_| Complex64::new(3.0, -1.0));
        assert!(radial_derivative(&p).sup() < 1e-12);
        // Log spacing near r_min amplifies rounding; only the scale changes.
        let g = Arc::new(build_radial_grid(1e-3, 10.0, 50, 50).unwrap());
        let p = RadialProfile::from_fn(g, Side::Position, |_| Complex64::new(3.0, -1.0));
        assert!(radial_derivative(&p).sup() < 1e-10);
    }
}
