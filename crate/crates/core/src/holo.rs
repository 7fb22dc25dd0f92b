//! Explicit bounded holomorphic functions on the disk: finite combinations of
//! polynomials and exponential generators.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ap::{ApError, BasisSet, Frequency, Term, TrigPolynomial};
use crate::disk::{CirclePoint, DiskError, Generator, GeneratorSpec, MobiusChart};
use crate::strip::{StripExpSum, StripHarmonic};
use crate::vector::{NormKind, VectorValue};

#[derive(Debug, Error)]
pub enum HoloError {
    #[error("coefficient dimension {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Disk(#[from] DiskError),
    #[error(transparent)]
    Ap(#[from] ApError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoloTerm {
    /// `sum_n a_n z^n`
    Polynomial {
        #[serde(with = "crate::vector::complex_lists")]
        coeffs: Vec<Vec<Complex64>>,
    },
    /// `coeff * generator(z)`
    Generator {
        #[serde(with = "crate::vector::complex_list")]
        coeff: Vec<Complex64>,
        #[serde(flatten)]
        spec: GeneratorSpec,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HoloExprJson {
    dim: usize,
    #[serde(default)]
    norm: NormKind,
    terms: Vec<HoloTerm>,
}

/// A `C^dim`-valued function `sum_terms` on the closed disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "HoloExprJson", into = "HoloExprJson")]
pub struct HoloExpr {
    dim: usize,
    norm: NormKind,
    terms: Vec<HoloTerm>,
    generators: Vec<Option<Generator>>,
}

impl PartialEq for HoloExpr {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.norm == other.norm && self.terms == other.terms
    }
}

impl TryFrom<HoloExprJson> for HoloExpr {
    type Error = HoloError;
    fn try_from(j: HoloExprJson) -> Result<Self, HoloError> {
        let mut e = HoloExpr::new(j.dim, j.terms)?;
        e.norm = j.norm;
        Ok(e)
    }
}

impl From<HoloExpr> for HoloExprJson {
    fn from(e: HoloExpr) -> Self {
        HoloExprJson { dim: e.dim, norm: e.norm, terms: e.terms }
    }
}

/// Local model of an expression at a boundary point in strip coordinates
/// `w = Log phi_{z0}(z)`: `H(w) = sum U_i exp(i mu_i w) + constant`.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub z0: CirclePoint,
    pub strip: StripExpSum,
}

impl HoloExpr {
    pub fn new(dim: usize, terms: Vec<HoloTerm>) -> Result<Self, HoloError> {
        let mut generators = Vec::with_capacity(terms.len());
        for t in &terms {
            match t {
                HoloTerm::Polynomial { coeffs } => {
                    for c in coeffs {
                        if c.len() != dim {
                            return Err(HoloError::DimensionMismatch { expected: dim, found: c.len() });
                        }
                    }
                    generators.push(None);
                }
                HoloTerm::Generator { coeff, spec } => {
                    if coeff.len() != dim {
                        return Err(HoloError::DimensionMismatch { expected: dim, found: coeff.len() });
                    }
                    generators.push(Some(spec.compile()?));
                }
            }
        }
        Ok(Self { dim, norm: NormKind::Sup, terms, generators })
    }

    /// A single scalar generator.
    pub fn generator(spec: GeneratorSpec) -> Result<Self, HoloError> {
        Self::new(1, vec![HoloTerm::Generator { coeff: vec![Complex64::new(1.0, 0.0)], spec }])
    }

    /// Scalar polynomial with the given coefficients.
    pub fn polynomial(coeffs: &[Complex64]) -> Self {
        Self::new(1, vec![HoloTerm::Polynomial { coeffs: coeffs.iter().map(|&c| vec![c]).collect() }])
            .expect("scalar polynomial")
    }

    pub fn with_norm(mut self, norm: NormKind) -> Self {
        self.norm = norm;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn terms(&self) -> &[HoloTerm] {
        &self.terms
    }

    pub fn push(&mut self, term: HoloTerm) -> Result<(), HoloError> {
        let mut all = self.terms.clone();
        all.push(term);
        let norm = self.norm;
        *self = Self::new(self.dim, all)?;
        self.norm = norm;
        Ok(())
    }

    /// True when no generator with nonzero exponent is present.
    pub fn is_disk_algebra(&self) -> bool {
        self.generator_specs().all(|(_, s)| s.lambda == 0.0)
    }

    pub fn generator_specs(&self) -> impl Iterator<Item = (&[Complex64], &GeneratorSpec)> {
        self.terms.iter().filter_map(|t| match t {
            HoloTerm::Generator { coeff, spec } => Some((coeff.as_slice(), spec)),
            HoloTerm::Polynomial { .. } => None,
        })
    }

    /// Endpoints of the non-trivial generators, sorted and deduplicated.
    pub fn singular_points(&self) -> Vec<CirclePoint> {
        let mut pts: Vec<CirclePoint> = self
            .generator_specs()
            .filter(|(c, s)| s.lambda != 0.0 && c.iter().any(|z| z.norm() > 0.0))
            .flat_map(|(_, s)| [s.x, s.y])
            .collect();
        pts.sort_by(|a, b| a.angle().total_cmp(&b.angle()));
        pts.dedup_by(|a, b| a.distance(b) < 1e-12);
        pts
    }

    /// Value on the closed disk away from singular points.
    pub fn eval(&self, z: Complex64) -> Result<VectorValue, HoloError> {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.dim];
        for (t, g) in self.terms.iter().zip(&self.generators) {
            match t {
                HoloTerm::Polynomial { coeffs } => {
                    for k in 0..self.dim {
                        let mut s = Complex64::new(0.0, 0.0);
                        for c in coeffs.iter().rev() {
                            s = s * z + c[k];
                        }
                        acc[k] += s;
                    }
                }
                HoloTerm::Generator { coeff, .. } => {
                    let v = g.as_ref().expect("compiled").eval(z)?;
                    for (a, c) in acc.iter_mut().zip(coeff) {
                        *a += c * v;
                    }
                }
            }
        }
        Ok(VectorValue::with_norm(acc, self.norm))
    }

    /// Exact local model at a boundary point: generators with an endpoint
    /// at `z0` become pure exponentials in strip coordinates, everything else
    /// contributes its (continuous) value at `z0`.
    pub fn local_model(&self, z0: CirclePoint) -> Result<LocalModel, HoloError> {
        let p0 = z0.point();
        let mut constant = vec![Complex64::new(0.0, 0.0); self.dim];
        // (mu, coefficient vector)
        let mut tones: Vec<(f64, Vec<Complex64>)> = Vec::new();
        for (t, g) in self.terms.iter().zip(&self.generators) {
            match t {
                HoloTerm::Polynomial { .. } => {
                    let single = HoloExpr::new(self.dim, vec![t.clone()])?;
                    for (a, v) in constant.iter_mut().zip(single.eval(p0)?.components) {
                        *a += v;
                    }
                }
                HoloTerm::Generator { coeff, spec } => {
                    let at_x = spec.x.distance(&z0) < 1e-12;
                    let at_y = spec.y.distance(&z0) < 1e-12;
                    if spec.lambda == 0.0 || !(at_x || at_y) {
                        let v = g.as_ref().expect("compiled").eval(p0)?;
                        for (a, c) in constant.iter_mut().zip(coeff) {
                            *a += c * v;
                        }
                        continue;
                    }
                    let (mu, u) = endpoint_expansion(spec, at_x);
                    tones.push((mu, coeff.iter().map(|c| c * u).collect()));
                }
            }
        }
        let mut betas: Vec<f64> = tones.iter().map(|(mu, _)| mu.abs()).collect();
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        let basis = if betas.is_empty() { BasisSet::unit() } else { BasisSet::from_betas(betas.clone())? };
        let rank = basis.rank();
        let mut terms = vec![Term {
            freq: Frequency::zero(rank),
            coeff: VectorValue::with_norm(constant, self.norm),
        }];
        for (mu, c) in tones {
            let j = betas.iter().position(|b| *b == mu.abs()).expect("basis built from tones");
            let mut coords = vec![0_i64; rank];
            coords[j] = if mu > 0.0 { 1 } else { -1 };
            terms.push(Term { freq: Frequency::from_integers(&coords), coeff: VectorValue::with_norm(c, self.norm) });
        }
        Ok(LocalModel { z0, strip: StripExpSum(TrigPolynomial::new(basis, self.dim, terms)?) })
    }

    /// Log-scale profiles `(h_minus, h_plus)` at `z0` with scale `s`: the
    /// local model traced along the two boundary lines, shifted so that the
    /// profile variable is `t = ln(u / s)`.
    pub fn profiles_at(&self, z0: CirclePoint, s: f64) -> Result<(TrigPolynomial, TrigPolynomial), HoloError> {
        let model = self.local_model(z0)?;
        let shift = s.ln();
        let plus = model.strip.poly().shift(shift);
        let minus = model.strip.top_trace().shift(shift);
        Ok((minus, plus))
    }
}

/// `(mu, U)` with `G ~ U exp(i mu w)` near the endpoint, `w = Log phi_{z0}`.
fn endpoint_expansion(spec: &GeneratorSpec, at_x: bool) -> (f64, Complex64) {
    let (px, py) = (spec.x.point(), spec.y.point());
    let m = crate::disk::arc_midpoint(spec.x, spec.y).point();
    let k = (m - py) / (m - px);
    let i = Complex64::i();
    let lam = spec.lambda;
    let norm_c = (lam * spec.c).exp();
    if at_x {
        // phi_{x,y} = A(0) zeta (1 + O(zeta)), A(0) > 0
        let a0 = (i * k * px / (px - py)).norm();
        (-lam / PI, (-(i * lam / PI) * a0.ln()).exp() * norm_c)
    } else {
        // phi_{x,y} = B(0) / zeta (1 + O(zeta)), B(0) < 0
        let b0 = (i * k * (px - py) / py).norm();
        (lam / PI, lam.exp() * (-(i * lam / PI) * b0.ln()).exp() * norm_c)
    }
}

impl LocalModel {
    pub fn harmonic(&self) -> StripHarmonic {
        StripHarmonic::from_exp_sum(&self.strip)
    }

    /// Evaluate the model at a disk point.
    pub fn eval_disk(&self, z: Complex64) -> Result<VectorValue, HoloError> {
        let w = MobiusChart::new(self.z0).to_strip(z)?;
        Ok(self.strip.eval_unchecked(w))
    }
}
