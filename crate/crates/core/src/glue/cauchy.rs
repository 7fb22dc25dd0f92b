//! Cauchy–Pompeiu area integrals `-(1/pi) int h(zeta) / (zeta - z) dA`
//! evaluated in polar coordinates centered at each target, which turns the
//! kernel into the bounded factor `e^{-i phi}`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridField, Region};
use crate::vector::VectorValue;

const GAUSS_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GAUSS_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Closed annulus `inner <= |zeta| <= outer` carrying the density
/// (`inner = 0` for a disk).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnularSupport {
    pub inner: f64,
    pub outer: f64,
}

impl AnnularSupport {
    pub fn disk(radius: f64) -> Self {
        Self { inner: 0.0, outer: radius }
    }

    pub fn width(&self) -> f64 {
        self.outer - self.inner
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let r = z.norm();
        r >= self.inner && r <= self.outer
    }

    /// Parameter intervals `rho >= 0` with `z + rho e` in the support.
    fn ray_intervals(&self, z: Complex64, e: Complex64) -> Vec<(f64, f64)> {
        let b = z.re * e.re + z.im * e.im;
        let c0 = z.norm_sqr();
        let roots = |radius: f64| {
            let disc = b * b - c0 + radius * radius;
            (disc > 0.0).then(|| {
                let s = disc.sqrt();
                (-b - s, -b + s)
            })
        };
        let Some((o_lo, o_hi)) = roots(self.outer) else { return Vec::new() };
        let (lo, hi) = (o_lo.max(0.0), o_hi);
        if hi <= lo {
            return Vec::new();
        }
        match (self.inner > 0.0).then(|| roots(self.inner)).flatten() {
            Some((i_lo, i_hi)) if i_hi > lo && i_lo < hi => {
                let mut out = Vec::with_capacity(2);
                if i_lo > lo {
                    out.push((lo, i_lo));
                }
                if i_hi < hi {
                    out.push((i_hi.max(lo), hi));
                }
                out
            }
            _ => vec![(lo, hi)],
        }
    }
}

/// Quadrature controls: composite 8-point Gauss–Legendre both in the angle
/// and along each ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyPlan {
    /// Angular resolution for a full turn; pieces get a proportional share.
    pub angular_nodes: usize,
    /// Longest Gauss–Legendre panel on a ray.
    pub panel_length: f64,
    /// Targets in the hole of an annular support within this fraction of
    /// the inner radius use the Taylor expansion instead of rays.
    pub hole_series: Option<f64>,
}

impl Default for CauchyPlan {
    fn default() -> Self {
        Self { angular_nodes: 256, panel_length: 8.0 * 2.0 / 256.0, hole_series: Some(0.95) }
    }
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]` in panels of at most `max_len`.
fn gauss_panels(a: f64, b: f64, max_len: f64, mut visit: impl FnMut(f64, f64)) {
    if b <= a {
        return;
    }
    let panels = ((b - a) / max_len).ceil().max(1.0) as usize;
    let len = (b - a) / panels as f64;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * len;
        for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            visit(mid - 0.5 * len * x, 0.5 * len * w);
            visit(mid + 0.5 * len * x, 0.5 * len * w);
        }
    }
}

/// Directions in which a ray from `z` is tangent to a support circle; the
/// ray integrals have square-root behaviour there.
fn tangent_angles(support: AnnularSupport, z: Complex64) -> Vec<f64> {
    let r = z.norm();
    let mut out = Vec::new();
    for radius in [support.inner, support.outer] {
        if radius > 0.0 && r > radius {
            let center = (-z).arg();
            let half = (radius / r).asin();
            out.push((center - half).rem_euclid(TAU));
            out.push((center + half).rem_euclid(TAU));
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// `-(1/pi) int_support h(zeta) / (zeta - z) dA(zeta)` at one point.
/// `density` may return `None` where it has no data; those samples count as zero.
pub fn cauchy_point<F>(density: &F, dim: usize, support: AnnularSupport, z: Complex64, plan: &CauchyPlan) -> VectorValue
where
    F: Fn(Complex64) -> Option<VectorValue>,
{
    let mut acc = vec![Complex64::new(0.0, 0.0); dim];
    let mut norm = None;
    let mut add_ray = |phi: f64, weight: f64| {
        let e = Complex64::from_polar(1.0, phi);
        let mut ray = vec![Complex64::new(0.0, 0.0); dim];
        for (a, b) in support.ray_intervals(z, e) {
            gauss_panels(a, b, plan.panel_length, |rho, w| {
                if let Some(v) = density(z + e * rho) {
                    norm.get_or_insert(v.norm);
                    for (r, c) in ray.iter_mut().zip(&v.components) {
                        *r += c * w;
                    }
                }
            });
        }
        let factor = e.conj() * (-weight / PI);
        for (s, r) in acc.iter_mut().zip(ray) {
            *s += r * factor;
        }
    };
    let step = TAU / plan.angular_nodes.max(8) as f64;
    let cuts = tangent_angles(support, z);
    if cuts.is_empty() {
        // smooth periodic integrand: the midpoint rule is spectrally accurate
        let n = plan.angular_nodes.max(8);
        for m in 0..n {
            add_ray((m as f64 + 0.5) * step, step);
        }
    } else {
        for (k, &lo) in cuts.iter().enumerate() {
            let hi = if k + 1 < cuts.len() { cuts[k + 1] } else { cuts[0] + TAU };
            let span = hi - lo;
            if span <= 0.0 {
                continue;
            }
            // phi = lo + span (1 - cos t) / 2 turns sqrt endpoints smooth
            gauss_panels(0.0, PI, 8.0 * PI * step / span, |t, w| {
                add_ray(lo + 0.5 * span * (1.0 - t.cos()), w * 0.5 * span * t.sin());
            });
        }
    }
    VectorValue::with_norm(acc, norm.unwrap_or_default())
}

/// Taylor expansion `sum_n a_n z^n` of the transform in the hole of an
/// annular support, `a_n = -(1/pi) int h(zeta) zeta^{-n-1} dA`.
#[derive(Debug, Clone)]
pub struct HoleExpansion {
    radius: f64,
    coeffs: Vec<Vec<Complex64>>,
    norm: crate::vector::NormKind,
}

impl HoleExpansion {
    /// Expansion valid for `|z| <= fraction * support.inner`, truncated at
    /// relative size `1e-13`; `None` for a disk support.
    pub fn new<F>(density: &F, dim: usize, support: AnnularSupport, fraction: f64, plan: &CauchyPlan) -> Option<Self>
    where
        F: Fn(Complex64) -> Option<VectorValue>,
    {
        if support.inner <= 0.0 || !(fraction > 0.0 && fraction < 1.0) {
            return None;
        }
        let terms = ((1e-13_f64).ln() / fraction.ln()).ceil() as usize + 1;
        let m = (4 * plan.angular_nodes).max(4 * terms);
        let mut coeffs = vec![vec![Complex64::new(0.0, 0.0); dim]; terms];
        let mut norm = None;
        let step = TAU / m as f64;
        for k in 0..m {
            let theta = (k as f64 + 0.5) * step;
            gauss_panels(support.inner, support.outer, plan.panel_length, |r, w| {
                let zeta = Complex64::from_polar(r, theta);
                let Some(v) = density(zeta) else { return };
                norm.get_or_insert(v.norm);
                // dA = r dr dtheta
                let inv = 1.0 / zeta;
                let mut power = inv * (-w * r * step / PI);
                for c in coeffs.iter_mut() {
                    for (a, x) in c.iter_mut().zip(&v.components) {
                        *a += x * power;
                    }
                    power *= inv;
                }
            });
        }
        Some(Self { radius: fraction * support.inner, coeffs, norm: norm.unwrap_or_default() })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eval(&self, z: Complex64) -> VectorValue {
        let dim = self.coeffs.first().map_or(0, Vec::len);
        let mut acc = vec![Complex64::new(0.0, 0.0); dim];
        for c in self.coeffs.iter().rev() {
            for (a, x) in acc.iter_mut().zip(c) {
                *a = *a * z + x;
            }
        }
        VectorValue::with_norm(acc, self.norm)
    }
}

/// [`cauchy_point`] at every grid node selected by `targets`.
pub fn cauchy_transform<F, M>(
    density: &F,
    dim: usize,
    support: AnnularSupport,
    grid: Grid,
    region: Region,
    targets: M,
    plan: &CauchyPlan,
) -> GridField
where
    F: Fn(Complex64) -> Option<VectorValue> + Sync,
    M: Fn(Complex64) -> bool + Sync,
{
    let series = plan.hole_series.and_then(|q| HoleExpansion::new(density, dim, support, q, plan));
    GridField::from_fn(grid, region, dim, targets, |z| match &series {
        Some(s) if z.norm() <= s.radius() => s.eval(z),
        _ => cauchy_point(density, dim, support, z, plan),
    })
}

/// Cauchy transform of a sampled density, bilinearly interpolated between
/// nodes (renormalized at the edge of its active set).
pub fn cauchy_transform_field<M>(
    h: &GridField,
    support: AnnularSupport,
    region: Region,
    targets: M,
    plan: &CauchyPlan,
) -> GridField
where
    M: Fn(Complex64) -> bool + Sync,
{
    let density = |z: Complex64| if support.contains(z) { h.interpolate_partial(z) } else { None };
    cauchy_transform(&density, h.dim(), support, *h.grid(), region, targets, plan)
}

/// Measured constant in `sup |H| <= C w sup |h|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthBound {
    pub width: f64,
    pub sup_density: f64,
    pub sup_transform: f64,
    pub constant: f64,
}

impl WidthBound {
    pub fn measure(width: f64, sup_density: f64, sup_transform: f64) -> Self {
        let constant = if sup_density > 0.0 && width > 0.0 { sup_transform / (width * sup_density) } else { 0.0 };
        Self { width, sup_density, sup_transform, constant }
    }
}
