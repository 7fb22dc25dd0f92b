//! Conformal charts between the disk, the upper half-plane and the strip,
//! and the exponential generators whose boundary modulus jumps at two points.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance below which a point counts as a pole or branch point.
pub const POLE_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiskError {
    #[error("pole at {0}")]
    PoleAt(Complex64),
    #[error("logarithm of zero")]
    LogOfZero,
    #[error("circle points must be distinct")]
    SamePoints,
    #[error("angle {0} is not finite")]
    BadAngle(f64),
}

/// Wrap an angle to `[0, 2 pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Signed angular offset `theta - base` wrapped to `(-pi, pi]`.
pub fn angle_offset(theta: f64, base: f64) -> f64 {
    let d = (theta - base).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// A point `e^{i angle}` of the unit circle, stored by its angle in `[0, 2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(angle: f64) -> Result<Self, DiskError> {
        if !angle.is_finite() {
            return Err(DiskError::BadAngle(angle));
        }
        Ok(Self(normalize_angle(angle)))
    }

    pub fn angle(&self) -> f64 {
        self.0
    }

    pub fn point(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.0)
    }

    /// Angular distance along the circle.
    pub fn distance(&self, other: &CirclePoint) -> f64 {
        angle_offset(other.0, self.0).abs()
    }
}

impl TryFrom<f64> for CirclePoint {
    type Error = DiskError;
    fn try_from(a: f64) -> Result<Self, DiskError> {
        Self::new(a)
    }
}

impl From<CirclePoint> for f64 {
    fn from(p: CirclePoint) -> f64 {
        p.0
    }
}

/// Orientation of an arc leaving its base point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// clockwise, `k = -1`
    Minus,
    /// counterclockwise, `k = +1`
    Plus,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Minus => -1.0,
            Orientation::Plus => 1.0,
        }
    }
}

/// `{ e^{i(t0 + k t)} : 0 <= t < s }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleArc {
    pub t0: f64,
    pub s: f64,
    pub k: Orientation,
}

impl CircleArc {
    pub fn point(&self, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.t0 + self.k.sign() * t)
    }

    pub fn contains_angle(&self, theta: f64) -> bool {
        let d = angle_offset(theta, self.t0) * self.k.sign();
        (0.0..self.s).contains(&d)
    }
}

/// `z -> 2i (z0 - z) / (z0 + z)`: disk onto the upper half-plane, `z0 -> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusChart {
    z0: CirclePoint,
    w0: Complex64,
}

impl MobiusChart {
    pub fn new(z0: CirclePoint) -> Self {
        Self { z0, w0: z0.point() }
    }

    pub fn base(&self) -> CirclePoint {
        self.z0
    }

    pub fn apply(&self, z: Complex64) -> Result<Complex64, DiskError> {
        let den = self.w0 + z;
        if den.norm() < POLE_TOL {
            return Err(DiskError::PoleAt(z));
        }
        Ok(Complex64::new(0.0, 2.0) * (self.w0 - z) / den)
    }

    pub fn inverse(&self, w: Complex64) -> Result<Complex64, DiskError> {
        let two_i = Complex64::new(0.0, 2.0);
        let den = two_i + w;
        if den.norm() < POLE_TOL {
            return Err(DiskError::PoleAt(w));
        }
        Ok(self.w0 * (two_i - w) / den)
    }

    /// Disk point to strip point: `Log(phi(z))` with the argument taken in `[0, pi]`.
    pub fn to_strip(&self, z: Complex64) -> Result<Complex64, DiskError> {
        log_upper(self.apply(z)?)
    }

    pub fn from_strip(&self, w: Complex64) -> Result<Complex64, DiskError> {
        self.inverse(w.exp())
    }
}

pub fn mobius(chart: &MobiusChart, z: Complex64) -> Result<Complex64, DiskError> {
    chart.apply(z)
}

/// `ln|w| + i Arg w` with `Arg` in `(-pi, pi]`.
pub fn principal_log(w: Complex64) -> Result<Complex64, DiskError> {
    if w.re == 0.0 && w.im == 0.0 {
        return Err(DiskError::LogOfZero);
    }
    let mut arg = w.im.atan2(w.re);
    if arg <= -PI {
        arg = PI;
    }
    if w.im == 0.0 && w.re < 0.0 {
        arg = PI;
    }
    Ok(Complex64::new(w.norm().ln(), arg))
}

/// Logarithm on the closed upper half-plane: the principal branch with a
/// negative argument (rounding noise on the real axis) projected to 0 or pi.
/// On the real axis this is the limit from the upper half-plane.
pub fn log_upper(w: Complex64) -> Result<Complex64, DiskError> {
    let mut l = principal_log(w)?;
    if l.im < 0.0 {
        l.im = if w.re > 0.0 { 0.0 } else { PI };
    }
    Ok(l)
}

/// Angle of the midpoint of the counterclockwise arc from `x` to `y`.
pub fn arc_midpoint(x: CirclePoint, y: CirclePoint) -> CirclePoint {
    let span = (y.angle() - x.angle()).rem_euclid(TAU);
    CirclePoint::new(x.angle() + 0.5 * span).expect("finite")
}

/// The Möbius map sending `x -> 0`, the midpoint of the counterclockwise arc
/// `[x, y]` to 1 and `y -> infinity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointMap {
    x: CirclePoint,
    y: CirclePoint,
    px: Complex64,
    py: Complex64,
    k: Complex64,
}

impl TwoPointMap {
    pub fn new(x: CirclePoint, y: CirclePoint) -> Result<Self, DiskError> {
        if x.distance(&y) < 1e-12 {
            return Err(DiskError::SamePoints);
        }
        let (px, py) = (x.point(), y.point());
        let m = arc_midpoint(x, y).point();
        Ok(Self { x, y, px, py, k: (m - py) / (m - px) })
    }

    pub fn x(&self) -> CirclePoint {
        self.x
    }

    pub fn y(&self) -> CirclePoint {
        self.y
    }

    pub fn apply(&self, z: Complex64) -> Result<Complex64, DiskError> {
        let den = z - self.py;
        if den.norm() < POLE_TOL {
            return Err(DiskError::PoleAt(z));
        }
        Ok(self.k * (z - self.px) / den)
    }
}

pub fn mobius_two_point(x: CirclePoint, y: CirclePoint, z: Complex64) -> Result<Complex64, DiskError> {
    TwoPointMap::new(x, y)?.apply(z)
}

/// `z -> exp(-(i lambda / pi) Log phi_{x,y}(z) + lambda C)`.
///
/// With `C = 0` the boundary modulus is 1 on the arc from `x` to `y`
/// (counterclockwise, containing the midpoint) and `e^lambda` on the arc from
/// `y` to `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub lambda: f64,
    #[serde(rename = "x_angle")]
    pub x: CirclePoint,
    #[serde(rename = "y_angle")]
    pub y: CirclePoint,
    #[serde(rename = "C", with = "crate::vector::complex_pair", default = "zero")]
    pub c: Complex64,
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl GeneratorSpec {
    pub fn new(lambda: f64, x: f64, y: f64) -> Result<Self, DiskError> {
        let spec = Self { lambda, x: CirclePoint::new(x)?, y: CirclePoint::new(y)?, c: zero() };
        TwoPointMap::new(spec.x, spec.y)?;
        Ok(spec)
    }

    pub fn compile(&self) -> Result<Generator, DiskError> {
        Ok(Generator { spec: *self, map: TwoPointMap::new(self.x, self.y)? })
    }

    /// Equivalent spec with `x` at the smaller angle, and the constant
    /// factor relating the two: `self = factor * canonical`.
    pub fn canonical(&self) -> Result<(GeneratorSpec, Complex64), DiskError> {
        if self.x.angle() <= self.y.angle() {
            return Ok((*self, Complex64::new(1.0, 0.0)));
        }
        let swapped = GeneratorSpec { lambda: -self.lambda, x: self.y, y: self.x, c: self.c };
        let a = self.compile()?.eval(Complex64::new(0.0, 0.0))?;
        let b = swapped.compile()?.eval(Complex64::new(0.0, 0.0))?;
        Ok((swapped, a / b))
    }
}

/// A generator with its two-point map precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    spec: GeneratorSpec,
    map: TwoPointMap,
}

impl Generator {
    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Value on the closed disk minus `{x, y}`; on the circle this is the
    /// nontangential limit.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, DiskError> {
        if self.spec.lambda == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let w = self.map.apply(z)?;
        let l = log_upper(w)?;
        let expo = -(Complex64::i() * self.spec.lambda / PI) * l + self.spec.lambda * self.spec.c;
        Ok(expo.exp())
    }

    /// Boundary value at angle `theta`.
    pub fn boundary(&self, theta: f64) -> Result<Complex64, DiskError> {
        self.eval(Complex64::from_polar(1.0, theta))
    }

    /// `-(i/pi) d/dz Log phi(z)` times `lambda`, i.e. `G'(z) / G(z)`.
    pub fn log_derivative(&self, z: Complex64) -> Result<Complex64, DiskError> {
        let a = z - self.map.px;
        let b = z - self.map.py;
        if a.norm() < POLE_TOL || b.norm() < POLE_TOL {
            return Err(DiskError::PoleAt(z));
        }
        Ok(-(Complex64::i() * self.spec.lambda / PI) * (1.0 / a - 1.0 / b))
    }
}

pub fn sap_generator(spec: &GeneratorSpec, z: Complex64) -> Result<Complex64, DiskError> {
    spec.compile()?.eval(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(a: f64) -> CirclePoint {
        CirclePoint::new(a).unwrap()
    }

    #[test]
    fn mobius_examples() {
        let ch = MobiusChart::new(cp(0.0));
        assert_eq!(ch.apply(Complex64::new(1.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        assert!((ch.apply(Complex64::i()).unwrap() - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        assert!(matches!(ch.apply(Complex64::new(-1.0, 0.0)), Err(DiskError::PoleAt(_))));
        let z = Complex64::new(0.3, -0.4);
        let back = ch.inverse(ch.apply(z).unwrap()).unwrap();
        assert!((back - z).norm() < 1e-15);
    }

    #[test]
    fn log_examples() {
        assert_eq!(principal_log(Complex64::new(1.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        let l = principal_log(Complex64::i()).unwrap();
        assert!((l - Complex64::new(0.0, PI / 2.0)).norm() < 1e-15);
        let l = principal_log(Complex64::new(-2.0, -0.0)).unwrap();
        assert!((l - Complex64::new(2f64.ln(), PI)).norm() < 1e-15);
        assert_eq!(principal_log(Complex64::new(0.0, 0.0)), Err(DiskError::LogOfZero));
        assert_eq!(log_upper(Complex64::new(3.0, -1e-17)).unwrap().im, 0.0);
    }

    #[test]
    fn two_point_interpolation() {
        for (a, b) in [(0.0, PI), (0.3, 2.0), (5.0, 1.0)] {
            let (x, y) = (cp(a), cp(b));
            let m = TwoPointMap::new(x, y).unwrap();
            assert!(m.apply(x.point()).unwrap().norm() < 1e-14);
            let mid = m.apply(arc_midpoint(x, y).point()).unwrap();
            assert!((mid - Complex64::new(1.0, 0.0)).norm() < 1e-13);
            assert!(m.apply(Complex64::new(0.0, 0.0)).unwrap().im > 0.0);
            assert!(matches!(m.apply(y.point()), Err(DiskError::PoleAt(_))));
        }
    }

    #[test]
    fn generator_examples() {
        let g = GeneratorSpec::new(0.0, 0.0, PI).unwrap();
        assert_eq!(sap_generator(&g, Complex64::new(0.2, 0.1)).unwrap(), Complex64::new(1.0, 0.0));
        let g = GeneratorSpec::new(1.3, 0.0, PI).unwrap();
        let v = sap_generator(&g, arc_midpoint(g.x, g.y).point()).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        // upper arc has modulus 1, lower arc e^lambda
        assert!((g.compile().unwrap().boundary(1.0).unwrap().norm() - 1.0).abs() < 1e-12);
        assert!((g.compile().unwrap().boundary(4.0).unwrap().norm() - 1.3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn canonical_factor_is_constant() {
        let g = GeneratorSpec::new(0.7, 4.0, 1.0).unwrap();
        let (c, k) = g.canonical().unwrap();
        assert!(c.x.angle() < c.y.angle());
        for z in [Complex64::new(0.5, 0.1), Complex64::new(-0.3, -0.8), Complex64::new(0.0, 0.95)] {
            let a = sap_generator(&g, z).unwrap();
            let b = sap_generator(&c, z).unwrap();
            assert!((a - k * b).norm() < 1e-12);
        }
    }

    #[test]
    fn log_derivative_matches_difference_quotient() {
        let g = GeneratorSpec::new(1.0, 0.0, PI).unwrap().compile().unwrap();
        let z = Complex64::new(0.2, 0.3);
        let h = 1e-6;
        let fd = (g.eval(z + h).unwrap() - g.eval(z - h).unwrap()) / (2.0 * h);
        let an = g.log_derivative(z).unwrap() * g.eval(z).unwrap();
        assert!((fd - an).norm() < 1e-8);
    }

    #[test]
    fn arcs() {
        let a = CircleArc { t0: 0.0, s: 0.5, k: Orientation::Minus };
        assert!(a.contains_angle(-0.2));
        assert!(a.contains_angle(TAU - 0.2));
        assert!(!a.contains_angle(0.2));
        assert!((a.point(0.2) - Complex64::from_polar(1.0, -0.2)).norm() < 1e-15);
    }

    #[test]
    fn spec_json() {
        let g: GeneratorSpec = serde_json::from_str(r#"{"lambda":1.0,"x_angle":0.0,"y_angle":3.141592653589793,"C":[0.0,0.0]}"#).unwrap();
        assert_eq!(g.lambda, 1.0);
        assert_eq!(g.y.angle(), PI);
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("x_angle"));
    }
}
