//! Almost periodic functions on the real line: exact exponential sums over a
//! declared basis, black-box evaluators, Bohr means and sup-norm estimates.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vector::{NormKind, VectorValue};

#[derive(Debug, Error)]
pub enum ApError {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("frequency has {found} coordinates but the basis has rank {expected}")]
    CoordinateLength { expected: usize, found: usize },
    #[error("coefficient dimension {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operands are expressed over different bases")]
    BasisMismatch,
    #[error("invalid averaging plan: {0}")]
    InvalidPlan(String),
    #[error("mean did not converge: last successive difference {last_difference:e}")]
    NonConverged { last_difference: f64, estimate: Box<MeanEstimate> },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Real numbers beta_1..beta_r declared linearly independent over the rationals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisSet {
    betas: Vec<f64>,
    labels: Vec<String>,
}

impl BasisSet {
    pub fn new(betas: Vec<f64>, labels: Vec<String>) -> Result<Self, ApError> {
        if betas.is_empty() {
            return Err(ApError::InvalidBasis("empty basis".into()));
        }
        if labels.len() != betas.len() {
            return Err(ApError::InvalidBasis(format!(
                "{} labels for {} basis elements",
                labels.len(),
                betas.len()
            )));
        }
        for (i, &b) in betas.iter().enumerate() {
            if !b.is_finite() || b == 0.0 {
                return Err(ApError::InvalidBasis(format!("element {i} is {b}")));
            }
            if betas[..i].contains(&b) {
                return Err(ApError::InvalidBasis(format!("element {i} repeats {b}")));
            }
        }
        Ok(Self { betas, labels })
    }

    /// Basis with default labels `b1, b2, ...`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, ApError> {
        let labels = (1..=betas.len()).map(|i| format!("b{i}")).collect();
        Self::new(betas, labels)
    }

    /// The basis {1}.
    pub fn unit() -> Self {
        Self { betas: vec![1.0], labels: vec!["1".into()] }
    }

    pub fn rank(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl PartialEq for BasisSet {
    fn eq(&self, other: &Self) -> bool {
        self.betas.len() == other.betas.len()
            && self.betas.iter().zip(&other.betas).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// A frequency as exact rational coordinates over a [`BasisSet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Frequency(Vec<Rational64>);

impl Frequency {
    pub fn new(coords: Vec<Rational64>) -> Self {
        Self(coords)
    }

    pub fn zero(rank: usize) -> Self {
        Self(vec![Rational64::zero(); rank])
    }

    pub fn from_integers(coords: &[i64]) -> Self {
        Self(coords.iter().map(|&c| Rational64::from_integer(c)).collect())
    }

    /// The `j`-th basis element itself.
    pub fn basis_element(rank: usize, j: usize) -> Self {
        let mut f = Self::zero(rank);
        f.0[j] = Rational64::from_integer(1);
        f
    }

    pub fn coords(&self) -> &[Rational64] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.is_zero())
    }

    pub fn value(&self, basis: &BasisSet) -> f64 {
        self.0
            .iter()
            .zip(basis.betas())
            .map(|(c, b)| (*c.numer() as f64 / *c.denom() as f64) * b)
            .sum()
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }

    pub fn add(&self, other: &Frequency) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Coordinates formatted as `p/q` strings.
    pub fn to_strings(&self) -> Vec<String> {
        self.0.iter().map(|c| format!("{}/{}", c.numer(), c.denom())).collect()
    }

    pub fn parse(coords: &[String]) -> Result<Self, ApError> {
        coords
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<Rational64>()
                    .map_err(|e| ApError::Parse(format!("bad rational {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.to_strings().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub freq: Frequency,
    pub coeff: VectorValue,
}

/// A finite exponential sum `sum_l b_l exp(i lambda_l t)` in canonical form:
/// distinct frequencies, nonzero coefficients, sorted by real frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    basis: BasisSet,
    dim: usize,
    terms: Vec<Term>,
}

impl TrigPolynomial {
    pub fn new(basis: BasisSet, dim: usize, terms: Vec<Term>) -> Result<Self, ApError> {
        if dim == 0 {
            return Err(ApError::DimensionMismatch { expected: 1, found: 0 });
        }
        for t in &terms {
            if t.freq.rank() != basis.rank() {
                return Err(ApError::CoordinateLength {
                    expected: basis.rank(),
                    found: t.freq.rank(),
                });
            }
            if t.coeff.dim() != dim {
                return Err(ApError::DimensionMismatch { expected: dim, found: t.coeff.dim() });
            }
        }
        let mut p = Self { basis, dim, terms };
        p.canonicalize();
        Ok(p)
    }

    pub fn zero(basis: BasisSet, dim: usize) -> Self {
        Self { basis, dim, terms: Vec::new() }
    }

    pub fn constant(basis: BasisSet, value: VectorValue) -> Self {
        let rank = basis.rank();
        let dim = value.dim();
        Self::new(basis, dim, vec![Term { freq: Frequency::zero(rank), coeff: value }])
            .expect("constant polynomial is well formed")
    }

    pub fn monomial(basis: BasisSet, freq: Frequency, coeff: VectorValue) -> Result<Self, ApError> {
        let dim = coeff.dim();
        Self::new(basis, dim, vec![Term { freq, coeff }])
    }

    fn canonicalize(&mut self) {
        let basis = &self.basis;
        let mut terms = std::mem::take(&mut self.terms);
        terms.sort_by(|a, b| a.freq.cmp(&b.freq));
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.freq == t.freq => last.coeff += &t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| !t.coeff.is_zero());
        merged.sort_by(|a, b| {
            a.freq
                .value(basis)
                .partial_cmp(&b.freq.value(basis))
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.freq.cmp(&b.freq))
        });
        self.terms = merged;
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn norm_kind(&self) -> NormKind {
        self.terms.first().map(|t| t.coeff.norm).unwrap_or_default()
    }

    /// Real frequency values in canonical order.
    pub fn frequency_values(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.freq.value(&self.basis)).collect()
    }

    pub fn evaluate(&self, t: f64) -> VectorValue {
        let mut acc = VectorValue::with_norm(vec![Complex64::zero(); self.dim], self.norm_kind());
        for term in &self.terms {
            let phase = Complex64::from_polar(1.0, term.freq.value(&self.basis) * t);
            acc.axpy(phase, &term.coeff);
        }
        acc
    }

    /// `t -> p(t + tau)`.
    pub fn shift(&self, tau: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                freq: t.freq.clone(),
                coeff: t.coeff.scale(Complex64::from_polar(1.0, t.freq.value(&self.basis) * tau)),
            })
            .collect();
        Self::new(self.basis.clone(), self.dim, terms).expect("shift preserves shape")
    }

    /// Nonzero terms sorted by real frequency.
    pub fn spectrum(&self) -> Vec<(Frequency, VectorValue)> {
        self.terms.iter().map(|t| (t.freq.clone(), t.coeff.clone())).collect()
    }

    /// Coefficient at an exact frequency (zero if absent).
    pub fn coefficient(&self, freq: &Frequency) -> VectorValue {
        self.terms
            .iter()
            .find(|t| &t.freq == freq)
            .map(|t| t.coeff.clone())
            .unwrap_or_else(|| VectorValue::with_norm(vec![Complex64::zero(); self.dim], self.norm_kind()))
    }

    /// `sum_l ||b_l||`, an upper bound for the sup norm.
    pub fn coefficient_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm_value()).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let terms =
            self.terms.iter().map(|t| Term { freq: t.freq.clone(), coeff: t.coeff.scale(s) }).collect();
        Self::new(self.basis.clone(), self.dim, terms).expect("scaling preserves shape")
    }

    pub fn add(&self, other: &TrigPolynomial) -> Result<Self, ApError> {
        if self.basis != other.basis {
            return Err(ApError::BasisMismatch);
        }
        if self.dim != other.dim {
            return Err(ApError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let terms = self.terms.iter().chain(&other.terms).cloned().collect();
        Self::new(self.basis.clone(), self.dim, terms)
    }

    pub fn sub(&self, other: &TrigPolynomial) -> Result<Self, ApError> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Apply `f` to every coefficient, keeping frequencies.
    pub fn map_coefficients(&self, f: impl Fn(&Frequency, &VectorValue) -> VectorValue) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { freq: t.freq.clone(), coeff: f(&t.freq, &t.coeff) })
            .collect();
        Self::new(self.basis.clone(), self.dim, terms).expect("coefficient map preserves shape")
    }

    pub fn with_norm(&self, norm: NormKind) -> Self {
        self.map_coefficients(|_, c| VectorValue::with_norm(c.components.clone(), norm))
    }
}

/// A black-box almost periodic function with a known sup bound.
#[derive(Clone)]
pub struct EvaluationOracle {
    eval: Arc<dyn Fn(f64) -> VectorValue + Send + Sync>,
    bound: f64,
    dim: usize,
}

impl EvaluationOracle {
    pub fn new(dim: usize, bound: f64, eval: impl Fn(f64) -> VectorValue + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval), bound, dim }
    }

    pub fn from_polynomial(p: &TrigPolynomial) -> Self {
        let q = p.clone();
        Self::new(p.dim(), p.coefficient_bound(), move |t| q.evaluate(t))
    }

    pub fn evaluate(&self, t: f64) -> VectorValue {
        (self.eval)(t)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl fmt::Debug for EvaluationOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvaluationOracle").field("dim", &self.dim).field("bound", &self.bound).finish()
    }
}

/// Either an exact exponential sum or a black-box evaluator.
#[derive(Debug, Clone)]
pub enum ApData {
    Poly(TrigPolynomial),
    Oracle(EvaluationOracle),
}

impl ApData {
    pub fn evaluate(&self, t: f64) -> VectorValue {
        match self {
            ApData::Poly(p) => p.evaluate(t),
            ApData::Oracle(o) => o.evaluate(t),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ApData::Poly(p) => p.dim(),
            ApData::Oracle(o) => o.dim(),
        }
    }

    /// Known upper bound for the sup norm.
    pub fn bound(&self) -> f64 {
        match self {
            ApData::Poly(p) => p.coefficient_bound(),
            ApData::Oracle(o) => o.bound(),
        }
    }

    pub fn as_poly(&self) -> Option<&TrigPolynomial> {
        match self {
            ApData::Poly(p) => Some(p),
            ApData::Oracle(_) => None,
        }
    }
}

impl From<TrigPolynomial> for ApData {
    fn from(p: TrigPolynomial) -> Self {
        ApData::Poly(p)
    }
}

impl From<EvaluationOracle> for ApData {
    fn from(o: EvaluationOracle) -> Self {
        ApData::Oracle(o)
    }
}

/// Truncation schedule for the limit defining a mean value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingPlan {
    /// First half-window T_1.
    pub t1: f64,
    /// Number of windows K; T_k = 2^(k-1) T_1.
    pub levels: usize,
    /// Midpoint-rule step.
    pub step: f64,
    /// Accepted successive difference at the last window.
    pub tol: f64,
}

impl Default for AveragingPlan {
    fn default() -> Self {
        Self { t1: 25.0, levels: 8, step: 0.01, tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub value: VectorValue,
    /// Half-window lengths that were used.
    pub windows: Vec<f64>,
    /// Norm of the change between consecutive windows.
    pub differences: Vec<f64>,
    pub converged: bool,
}

/// Exact mean value `M{p(t) exp(-i lambda t)}` for an exact frequency.
pub fn bohr_mean(p: &TrigPolynomial, freq: &Frequency) -> VectorValue {
    p.coefficient(freq)
}

/// Mean value by symmetric-window averaging. A non-converged estimate is
/// returned inside [`ApError::NonConverged`].
pub fn bohr_mean_averaged(f: &ApData, lambda: f64, plan: &AveragingPlan) -> Result<MeanEstimate, ApError> {
    if plan.levels == 0 || !(plan.t1 > 0.0) || !(plan.step > 0.0) || !(plan.tol >= 0.0) {
        return Err(ApError::InvalidPlan(format!("{plan:?}")));
    }
    let mut windows = Vec::with_capacity(plan.levels);
    let mut estimates: Vec<VectorValue> = Vec::with_capacity(plan.levels);
    let mut t_half = plan.t1;
    for _ in 0..plan.levels {
        windows.push(t_half);
        estimates.push(window_average(f, lambda, t_half, plan.step));
        t_half *= 2.0;
    }
    let differences: Vec<f64> = estimates.windows(2).map(|w| w[1].distance(&w[0])).collect();
    let last_difference = differences.last().copied().unwrap_or(f64::INFINITY);
    let converged = last_difference <= plan.tol;
    let estimate = MeanEstimate {
        value: estimates.pop().expect("levels > 0"),
        windows,
        differences,
        converged,
    };
    if converged {
        Ok(estimate)
    } else {
        Err(ApError::NonConverged { last_difference, estimate: Box::new(estimate) })
    }
}

fn window_average(f: &ApData, lambda: f64, t_half: f64, step: f64) -> VectorValue {
    let n = ((2.0 * t_half) / step).ceil().max(1.0) as usize;
    let dt = 2.0 * t_half / n as f64;
    let mut acc = VectorValue::zeros(f.dim());
    for i in 0..n {
        let t = -t_half + (i as f64 + 0.5) * dt;
        let v = f.evaluate(t);
        acc.axpy(Complex64::from_polar(1.0, -lambda * t), &v);
    }
    let mut out = acc.scale_real(dt / (2.0 * t_half));
    if let ApData::Poly(p) = f {
        out.norm = p.norm_kind();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupEstimate {
    /// Largest sampled norm; a lower bound for the true sup.
    pub grid_max: f64,
    /// `sum ||b_l||` when the coefficients are known.
    pub upper_bound: Option<f64>,
}

/// Sample points `a, a + step, ...` up to and including `b`.
pub fn sample_grid(a: f64, b: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && b >= a, "invalid sampling window");
    let n = ((b - a) / step + 1e-9).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|i| a + i as f64 * step).collect();
    if b - ts[n] > 1e-12 * step.max(1.0) {
        ts.push(b);
    }
    ts
}

pub fn sup_norm_estimate(f: &ApData, window: (f64, f64), step: f64) -> SupEstimate {
    let grid_max = sample_grid(window.0, window.1, step)
        .into_iter()
        .map(|t| f.evaluate(t).norm_value())
        .fold(0.0, f64::max);
    let upper_bound = f.as_poly().map(|p| p.coefficient_bound());
    SupEstimate { grid_max, upper_bound }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    #[serde(with = "crate::vector::complex_list")]
    coeff: Vec<Complex64>,
    freq: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TrigPolynomialJson {
    basis: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default)]
    norm: NormKind,
    terms: Vec<TermJson>,
}

impl Serialize for TrigPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TrigPolynomialJson {
            basis: self.basis.betas.clone(),
            labels: Some(self.basis.labels.clone()),
            dim: Some(self.dim),
            norm: self.norm_kind(),
            terms: self
                .terms
                .iter()
                .map(|t| TermJson { coeff: t.coeff.components.clone(), freq: t.freq.to_strings() })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrigPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = TrigPolynomialJson::deserialize(d)?;
        let basis = match raw.labels {
            Some(labels) => BasisSet::new(raw.basis, labels),
            None => BasisSet::from_betas(raw.basis),
        }
        .map_err(D::Error::custom)?;
        let dim = match (raw.dim, raw.terms.first()) {
            (Some(d), _) => d,
            (None, Some(t)) => t.coeff.len(),
            (None, None) => 1,
        };
        let terms = raw
            .terms
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(Term {
                    freq: Frequency::parse(&t.freq)
                        .map_err(|e| D::Error::custom(format!("terms[{i}].freq: {e}")))?,
                    coeff: VectorValue::with_norm(t.coeff, raw.norm),
                })
            })
            .collect::<Result<Vec<_>, D::Error>>()?;
        TrigPolynomial::new(basis, dim, terms).map_err(D::Error::custom)
    }
}
