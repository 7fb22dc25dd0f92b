//! Smooth partitions of unity built from the quintic smoothstep.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::sap::{smoothstep, smoothstep_derivative};

/// Largest value of the smoothstep derivative, attained at 1/2.
pub const SMOOTHSTEP_SLOPE: f64 = 1.875;

/// d-bar of a function of the angle only: `rho'(theta) i / (2 conj z)`.
fn dbar_angular(d_theta: f64, z: Complex64) -> Complex64 {
    Complex64::new(0.0, 0.5 * d_theta) / z.conj()
}

/// d-bar of a function of the radius only: `rho'(r) z / (2 r)`.
fn dbar_radial(d_r: f64, z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    z * (0.5 * d_r / r)
}

/// Bumps depending only on the angle: bump `k` is 1 on a plateau around
/// `centers[k]` and hands over to its neighbours by a smoothstep across the
/// middle part of each gap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngularPartition {
    centers: Vec<f64>,
    /// Fraction of each gap, at either end, on which the nearer bump is 1.
    plateau: f64,
}

/// Value, angular derivative and d-bar of one bump at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpValue {
    pub index: usize,
    pub value: f64,
    pub d_theta: f64,
    pub dbar: Complex64,
}

impl AngularPartition {
    /// `centers` are angles in `[0, 2pi)`, strictly increasing; `plateau` in `[0, 0.5)`.
    pub fn new(centers: Vec<f64>, plateau: f64) -> Self {
        assert!((0.0..0.5).contains(&plateau), "plateau fraction must lie in [0, 0.5)");
        assert!(centers.windows(2).all(|w| w[0] < w[1]), "centers must increase");
        Self { centers, plateau }
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn plateau(&self) -> f64 {
        self.plateau
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Gap from center `k` to the next one, counterclockwise.
    pub fn gap_after(&self, k: usize) -> f64 {
        let n = self.centers.len();
        if n == 1 {
            return TAU;
        }
        (self.centers[(k + 1) % n] - self.centers[k]).rem_euclid(TAU)
    }

    pub fn gap_before(&self, k: usize) -> f64 {
        let n = self.centers.len();
        self.gap_after((k + n - 1) % n)
    }

    /// Angular half-widths `(before, after)` of the support of bump `k`.
    pub fn support(&self, k: usize) -> (f64, f64) {
        let keep = 1.0 - self.plateau;
        (keep * self.gap_before(k), keep * self.gap_after(k))
    }

    /// The (at most two) bumps that are nonzero at `z`.
    pub fn eval(&self, z: Complex64) -> Vec<BumpValue> {
        let n = self.centers.len();
        if n == 1 {
            return vec![BumpValue { index: 0, value: 1.0, d_theta: 0.0, dbar: Complex64::new(0.0, 0.0) }];
        }
        let theta = z.arg().rem_euclid(TAU);
        // last center at or before theta, cyclically
        let pos = self.centers.partition_point(|&c| c <= theta);
        let a = if pos == 0 { n - 1 } else { pos - 1 };
        let b = (a + 1) % n;
        let gap = self.gap_after(a);
        let off = (theta - self.centers[a]).rem_euclid(TAU);
        let ramp = (1.0 - 2.0 * self.plateau) * gap;
        let x = (off - self.plateau * gap) / ramp;
        let s = smoothstep(x);
        let ds = smoothstep_derivative(x) / ramp;
        let mut out = Vec::with_capacity(2);
        if s < 1.0 {
            out.push(BumpValue { index: a, value: 1.0 - s, d_theta: -ds, dbar: dbar_angular(-ds, z) });
        }
        if s > 0.0 {
            out.push(BumpValue { index: b, value: s, d_theta: ds, dbar: dbar_angular(ds, z) });
        }
        out
    }

    /// Bump `k` at `z`, zero if not supported there.
    pub fn bump(&self, k: usize, z: Complex64) -> BumpValue {
        self.eval(z).into_iter().find(|b| b.index == k).unwrap_or(BumpValue {
            index: k,
            value: 0.0,
            d_theta: 0.0,
            dbar: Complex64::new(0.0, 0.0),
        })
    }

    /// Closed-form bound on `|grad rho_k|` at radius at least `r_min`.
    pub fn gradient_bound(&self, r_min: f64) -> f64 {
        (0..self.centers.len())
            .map(|k| SMOOTHSTEP_SLOPE / ((1.0 - 2.0 * self.plateau) * self.gap_after(k)))
            .fold(0.0, f64::max)
            / r_min
    }
}

/// The two radial bumps of the second gluing step: `rho_D` is 1 inside
/// `inner` and 0 outside `inner + width`, `rho_A = 1 - rho_D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialPartition {
    pub inner: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialValue {
    pub rho_outer: f64,
    pub rho_inner: f64,
    /// d-bar of the outer bump; the inner one has the opposite sign.
    pub dbar_outer: Complex64,
}

impl RadialPartition {
    pub fn eval(&self, z: Complex64) -> RadialValue {
        let x = (z.norm() - self.inner) / self.width;
        let s = smoothstep(x);
        let ds = smoothstep_derivative(x) / self.width;
        RadialValue { rho_outer: s, rho_inner: 1.0 - s, dbar_outer: dbar_radial(ds, z) }
    }

    /// `|grad rho|` never exceeds this.
    pub fn gradient_bound(&self) -> f64 {
        SMOOTHSTEP_SLOPE / self.width
    }
}

/// Radial cutoff rising from 0 at `start` to 1 at `start + width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialTaper {
    pub start: f64,
    pub width: f64,
}

impl RadialTaper {
    pub fn eval(&self, z: Complex64) -> f64 {
        smoothstep((z.norm() - self.start) / self.width)
    }
}
