//! Bounded holomorphic and harmonic functions on the strip `0 <= Im z <= pi`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ap::{sample_grid, ApData, ApError, TrigPolynomial};
use crate::vector::VectorValue;

/// Tolerance on `Im z` when deciding strip membership.
pub const STRIP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StripError {
    #[error("point {0} is outside the strip")]
    OutOfDomain(Complex64),
    #[error("boundary data dimensions differ: {bottom} vs {top}")]
    DimensionMismatch { bottom: usize, top: usize },
    #[error("quadrature did not reach tolerance: estimated error {estimate:e}")]
    NonConverged { estimate: f64 },
    #[error(transparent)]
    Ap(#[from] ApError),
}

/// A point of the closed strip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripPoint(Complex64);

impl StripPoint {
    pub fn new(z: Complex64) -> Result<Self, StripError> {
        if !(z.im >= -STRIP_TOL && z.im <= PI + STRIP_TOL) || !z.re.is_finite() {
            return Err(StripError::OutOfDomain(z));
        }
        Ok(Self(z))
    }

    pub fn z(&self) -> Complex64 {
        self.0
    }

    pub fn is_interior(&self) -> bool {
        self.0.im > 0.0 && self.0.im < PI
    }
}

/// `sum_l b_l exp(i lambda_l z)` on the strip.
#[derive(Debug, Clone, PartialEq)]
pub struct StripExpSum(pub TrigPolynomial);

impl StripExpSum {
    pub fn poly(&self) -> &TrigPolynomial {
        &self.0
    }

    /// Evaluation without a domain check.
    pub fn eval_unchecked(&self, z: Complex64) -> VectorValue {
        let p = &self.0;
        let mut acc = VectorValue::with_norm(vec![Complex64::new(0.0, 0.0); p.dim()], p.norm_kind());
        for t in p.terms() {
            let lambda = t.freq.value(p.basis());
            acc.axpy((Complex64::i() * lambda * z).exp(), &t.coeff);
        }
        acc
    }

    /// Boundary values on `R + i pi` as an exponential sum in `Re z`.
    pub fn top_trace(&self) -> TrigPolynomial {
        let basis = self.0.basis().clone();
        self.0.map_coefficients(|f, c| c.scale_real((-f.value(&basis) * PI).exp()))
    }
}

pub fn eval_strip(p: &StripExpSum, z: StripPoint) -> VectorValue {
    p.eval_unchecked(z.z())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StripSupEstimate {
    pub grid_max: f64,
    /// `sum ||b_l|| max(1, exp(-lambda_l pi))`
    pub upper_bound: f64,
}

/// Sup over both boundary lines (maximum principle).
pub fn strip_sup_norm(p: &StripExpSum, window: (f64, f64), step: f64) -> StripSupEstimate {
    let mut grid_max = 0.0_f64;
    for x in sample_grid(window.0, window.1, step) {
        for y in [0.0, PI] {
            grid_max = grid_max.max(p.eval_unchecked(Complex64::new(x, y)).norm_value());
        }
    }
    let basis = p.0.basis();
    let upper_bound = p
        .0
        .terms()
        .iter()
        .map(|t| t.coeff.norm_value() * (-t.freq.value(basis) * PI).exp().max(1.0))
        .sum();
    StripSupEstimate { grid_max, upper_bound }
}

/// Boundary data on `R` (bottom) and `R + i pi` (top), both parametrized by `Re z`.
#[derive(Debug, Clone)]
pub struct BoundaryPair {
    pub bottom: ApData,
    pub top: ApData,
}

impl BoundaryPair {
    pub fn new(bottom: ApData, top: ApData) -> Result<Self, StripError> {
        if bottom.dim() != top.dim() {
            return Err(StripError::DimensionMismatch { bottom: bottom.dim(), top: top.dim() });
        }
        Ok(Self { bottom, top })
    }

    pub fn dim(&self) -> usize {
        self.bottom.dim()
    }
}

/// Truncation and refinement controls for Poisson-kernel quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePlan {
    /// Initial trapezoid step (reduced near the boundary).
    pub step: f64,
    /// Integration window `|t - x| <= t_trunc`.
    pub t_trunc: f64,
    pub tol: f64,
}

impl Default for QuadraturePlan {
    fn default() -> Self {
        Self { step: 0.05, t_trunc: 40.0, tol: 1e-8 }
    }
}

const MAX_HALVINGS: usize = 14;

/// `sinh(lambda a) / sinh(lambda pi)` for `0 <= a <= pi`, stable for large |lambda|.
pub fn strip_weight(lambda: f64, a: f64) -> f64 {
    if lambda == 0.0 {
        return a / PI;
    }
    let l = lambda.abs();
    if l * PI < 1e-8 {
        return a / PI;
    }
    (l * (a - PI)).exp() * (-(-2.0 * l * a).exp_m1()) / (-(-2.0 * l * PI).exp_m1())
}

/// Bounded harmonic extension of `bp` at an interior point.
pub fn poisson_extend_strip(bp: &BoundaryPair, z: StripPoint, plan: &QuadraturePlan) -> Result<VectorValue, StripError> {
    let w = z.z();
    if !z.is_interior() {
        return Err(StripError::OutOfDomain(w));
    }
    let bottom = extend_side(&bp.bottom, w, Side::Bottom, plan)?;
    let top = extend_side(&bp.top, w, Side::Top, plan)?;
    Ok(&bottom + &top)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Bottom,
    Top,
}

fn extend_side(data: &ApData, w: Complex64, side: Side, plan: &QuadraturePlan) -> Result<VectorValue, StripError> {
    let (x, y) = (w.re, w.im);
    // distance to the boundary line carrying the data
    let d = match side {
        Side::Bottom => PI - y,
        Side::Top => y,
    };
    match data {
        ApData::Poly(p) => {
            let mut acc = VectorValue::with_norm(vec![Complex64::new(0.0, 0.0); p.dim()], p.norm_kind());
            for t in p.terms() {
                let lambda = t.freq.value(p.basis());
                let weight = strip_weight(lambda, d);
                acc.axpy(Complex64::from_polar(weight, lambda * x), &t.coeff);
            }
            Ok(acc)
        }
        ApData::Oracle(_) => poisson_quadrature(data, x, y, side, plan),
    }
}

/// Strip Poisson kernel at offset `u = t - x`.
fn poisson_kernel(u: f64, y: f64, side: Side) -> f64 {
    let sh = (0.5 * u).sinh();
    let denom = match side {
        // cosh u - cos y
        Side::Bottom => 2.0 * sh * sh + 2.0 * (0.5 * y).sin().powi(2),
        // cosh u + cos y
        Side::Top => 2.0 * sh * sh + 2.0 * (0.5 * y).cos().powi(2),
    };
    y.sin() / (2.0 * PI * denom)
}

fn poisson_quadrature(data: &ApData, x: f64, y: f64, side: Side, plan: &QuadraturePlan) -> Result<VectorValue, StripError> {
    let big_t = plan.t_trunc;
    // kernel tail beyond |u| > T, times the data bound
    let tail = data.bound() * (2.0 * y.sin() / PI) * (-big_t).exp() / (1.0 - (-big_t).exp()).powi(2);
    if tail > plan.tol {
        return Err(StripError::NonConverged { estimate: tail });
    }
    // poles of the kernel sit at distance y (bottom) or pi - y (top) from the axis
    let pole = match side {
        Side::Bottom => y,
        Side::Top => PI - y,
    };
    let h0 = plan.step.min(0.5 * pole);
    let mut n = (2.0 * big_t / h0).ceil() as usize;
    let dim = data.dim();
    let sample = |u: f64| -> VectorValue { data.evaluate(x + u).scale_real(poisson_kernel(u, y, side)) };
    // trapezoid sum over n intervals
    let mut h = 2.0 * big_t / n as f64;
    let mut sum = VectorValue::zeros(dim);
    for k in 0..=n {
        let u = -big_t + k as f64 * h;
        let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
        sum.axpy(Complex64::new(wgt, 0.0), &sample(u));
    }
    let mut estimate = sum.scale_real(h);
    for _ in 0..MAX_HALVINGS {
        let mut mid = VectorValue::zeros(dim);
        for k in 0..n {
            mid += &sample(-big_t + (k as f64 + 0.5) * h);
        }
        sum += &mid;
        n *= 2;
        h *= 0.5;
        let refined = sum.scale_real(h);
        let change = refined.distance(&estimate);
        estimate = refined;
        if change + tail <= plan.tol {
            if let ApData::Poly(p) = data {
                estimate.norm = p.norm_kind();
            }
            return Ok(estimate);
        }
    }
    Err(StripError::NonConverged { estimate: f64::NAN })
}

/// A harmonic function on the strip given by exponential-sum boundary data,
/// evaluated in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct StripHarmonic {
    bottom: TrigPolynomial,
    top: TrigPolynomial,
    /// `(lambda, bottom coefficient, top coefficient)` per frequency.
    compiled: Vec<(f64, VectorValue, VectorValue)>,
    holomorphic: bool,
}

impl StripHarmonic {
    pub fn new(bottom: TrigPolynomial, top: TrigPolynomial) -> Result<Self, StripError> {
        if bottom.dim() != top.dim() {
            return Err(StripError::DimensionMismatch { bottom: bottom.dim(), top: top.dim() });
        }
        if bottom.basis() != top.basis() {
            return Err(StripError::Ap(ApError::BasisMismatch));
        }
        let mut freqs: Vec<_> = bottom.terms().iter().chain(top.terms()).map(|t| t.freq.clone()).collect();
        freqs.sort();
        freqs.dedup();
        let mut compiled = Vec::with_capacity(freqs.len());
        let mut holomorphic = true;
        for f in freqs {
            let lambda = f.value(bottom.basis());
            let b = bottom.coefficient(&f);
            let t = top.coefficient(&f);
            let expected = b.scale_real((-lambda * PI).exp());
            let scale = b.norm_value().max(t.norm_value()).max(1e-300);
            if t.distance(&expected) > 1e-12 * scale {
                holomorphic = false;
            }
            compiled.push((lambda, b, t));
        }
        Ok(Self { bottom, top, compiled, holomorphic })
    }

    /// The holomorphic function `sum b exp(i lambda z)`.
    pub fn from_exp_sum(p: &StripExpSum) -> Self {
        Self::new(p.0.clone(), p.top_trace()).expect("traces share shape")
    }

    pub fn constant(p: TrigPolynomial) -> Self {
        Self::new(p.clone(), p).expect("same shape")
    }

    pub fn bottom(&self) -> &TrigPolynomial {
        &self.bottom
    }

    pub fn top(&self) -> &TrigPolynomial {
        &self.top
    }

    pub fn dim(&self) -> usize {
        self.bottom.dim()
    }

    /// True when the top data is the analytic continuation of the bottom data.
    pub fn is_holomorphic(&self) -> bool {
        self.holomorphic
    }

    pub fn eval(&self, w: Complex64) -> VectorValue {
        let mut acc =
            VectorValue::with_norm(vec![Complex64::new(0.0, 0.0); self.dim()], self.bottom.norm_kind());
        let y = w.im.clamp(0.0, PI);
        for (lambda, b, t) in &self.compiled {
            if self.holomorphic {
                acc.axpy((Complex64::i() * lambda * Complex64::new(w.re, y)).exp(), b);
            } else {
                let phase = Complex64::from_polar(1.0, lambda * w.re);
                acc.axpy(phase * strip_weight(*lambda, PI - y), b);
                acc.axpy(phase * strip_weight(*lambda, y), t);
            }
        }
        acc
    }
}
