//! Bochner–Fejér kernels and the smoothing operator they induce.

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ap::{ApError, BasisSet, Frequency, Term, TrigPolynomial};
use crate::vector::VectorValue;

/// Default cap on the number of expanded kernel terms.
pub const DEFAULT_TERM_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),
    #[error("kernel expands to {terms} terms, above the cap of {cap}")]
    SizeLimit { terms: u128, cap: usize },
    #[error("operands are expressed over different bases")]
    BasisMismatch,
    #[error("frequency grid not representable: {0}")]
    Unrepresentable(String),
    #[error("no kernel within the size cap reaches the requested accuracy (best certified {best:e})")]
    Unreachable { best: f64 },
    #[error(transparent)]
    Ap(#[from] ApError),
}

/// Product of one-dimensional Fejér kernels along a basis: the factor for
/// `beta_j` has frequencies `(nu/m_j) beta_j` and weights `1 - |nu|/N_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    basis: BasisSet,
    denominators: Vec<i64>,
    orders: Vec<i64>,
}

impl KernelSpec {
    pub fn new(basis: BasisSet, denominators: Vec<i64>, orders: Vec<i64>) -> Result<Self, KernelError> {
        let r = basis.rank();
        if denominators.len() != r || orders.len() != r {
            return Err(KernelError::InvalidSpec(format!(
                "basis rank {r}, {} denominators, {} orders",
                denominators.len(),
                orders.len()
            )));
        }
        if denominators.iter().chain(&orders).any(|&v| v < 1) {
            return Err(KernelError::InvalidSpec("denominators and orders must be >= 1".into()));
        }
        Ok(Self { basis, denominators, orders })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn denominators(&self) -> &[i64] {
        &self.denominators
    }

    pub fn orders(&self) -> &[i64] {
        &self.orders
    }

    /// Number of nonzero terms of the expanded kernel.
    pub fn term_count(&self) -> u128 {
        self.orders.iter().map(|&n| (2 * n - 1) as u128).product()
    }

    /// Weight `prod_j (1 - |p_j|/N_j)` of the grid point with integer
    /// numerators `p`; zero outside the range.
    pub fn damping(&self, numerators: &[i64]) -> f64 {
        let mut w = 1.0;
        for (&p, &n) in numerators.iter().zip(&self.orders) {
            if p.abs() >= n {
                return 0.0;
            }
            w *= 1.0 - p.abs() as f64 / n as f64;
        }
        w
    }

    /// Integer numerators of `freq` on the grid `(p_j/m_j) beta_j`, or `None`
    /// when some coordinate is off the grid.
    pub fn grid_numerators(&self, freq: &Frequency) -> Option<Vec<i64>> {
        freq.coords()
            .iter()
            .zip(&self.denominators)
            .map(|(c, &m)| {
                let scaled = c * Rational64::from_integer(m);
                scaled.is_integer().then(|| scaled.to_integer())
            })
            .collect()
    }
}

/// Expand the kernel into an exponential sum with real coefficients.
pub fn build_kernel(spec: &KernelSpec) -> Result<TrigPolynomial, KernelError> {
    build_kernel_capped(spec, DEFAULT_TERM_CAP)
}

pub fn build_kernel_capped(spec: &KernelSpec, cap: usize) -> Result<TrigPolynomial, KernelError> {
    let count = spec.term_count();
    if count > cap as u128 {
        return Err(KernelError::SizeLimit { terms: count, cap });
    }
    let r = spec.basis.rank();
    let mut nu: Vec<i64> = spec.orders.iter().map(|&n| -(n - 1)).collect();
    let mut terms = Vec::with_capacity(count as usize);
    loop {
        let weight = spec.damping(&nu);
        let freq = Frequency::new(
            nu.iter().zip(&spec.denominators).map(|(&v, &m)| Rational64::new(v, m)).collect(),
        );
        terms.push(Term { freq, coeff: VectorValue::real(weight) });
        // odometer over the lattice
        let mut j = 0;
        loop {
            if j == r {
                return Ok(TrigPolynomial::new(spec.basis.clone(), 1, terms)?);
            }
            if nu[j] < spec.orders[j] - 1 {
                nu[j] += 1;
                break;
            }
            nu[j] = -(spec.orders[j] - 1);
            j += 1;
        }
    }
}

/// How a single term of the input was treated by the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStatus {
    OnGrid,
    OffGrid,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermDamping {
    pub freq: Vec<String>,
    pub factor: f64,
    pub status: GridStatus,
}

#[derive(Debug, Clone)]
pub struct OperatorOutput {
    pub result: TrigPolynomial,
    pub dampings: Vec<TermDamping>,
}

impl OperatorOutput {
    pub fn flagged(&self) -> impl Iterator<Item = &TermDamping> {
        self.dampings.iter().filter(|d| d.status != GridStatus::OnGrid)
    }
}

/// `(Tf)(t) = M_s{ f(t + s) K(s) }`, computed term by term.
pub fn apply_operator(spec: &KernelSpec, f: &TrigPolynomial) -> Result<OperatorOutput, KernelError> {
    if f.basis() != spec.basis() {
        return Err(KernelError::BasisMismatch);
    }
    let mut dampings = Vec::with_capacity(f.terms().len());
    let mut terms = Vec::with_capacity(f.terms().len());
    for term in f.terms() {
        let (factor, status) = match spec.grid_numerators(&term.freq) {
            None => (0.0, GridStatus::OffGrid),
            Some(p) => {
                if p.iter().zip(spec.orders()).any(|(p, &n)| p.abs() > n) {
                    (0.0, GridStatus::OutOfRange)
                } else {
                    (spec.damping(&p), GridStatus::OnGrid)
                }
            }
        };
        dampings.push(TermDamping { freq: term.freq.to_strings(), factor, status });
        terms.push(Term { freq: term.freq.clone(), coeff: term.coeff.scale(Complex64::new(factor, 0.0)) });
    }
    let result = TrigPolynomial::new(f.basis().clone(), f.dim(), terms)?;
    Ok(OperatorOutput { result, dampings })
}

/// A kernel chosen for a finite family together with the certified bounds
/// `sum_l ||b_l|| (1 - damping_l) >= ||f - Tf||` per member.
#[derive(Debug, Clone)]
pub struct NetKernel {
    pub spec: KernelSpec,
    pub certified: Vec<f64>,
}

impl NetKernel {
    pub fn max_certified(&self) -> f64 {
        self.certified.iter().copied().fold(0.0, f64::max)
    }
}

/// Choose denominators from the spectra and grow Fejér orders until every
/// member's certified approximation error is at most `eps`.
pub fn choose_kernel_for_net(fs: &[TrigPolynomial], eps: f64) -> Result<NetKernel, KernelError> {
    choose_kernel_for_net_capped(fs, eps, DEFAULT_TERM_CAP)
}

pub fn choose_kernel_for_net_capped(
    fs: &[TrigPolynomial],
    eps: f64,
    cap: usize,
) -> Result<NetKernel, KernelError> {
    if !(eps > 0.0) {
        return Err(KernelError::InvalidSpec(format!("epsilon must be positive, got {eps}")));
    }
    let basis = match fs.first() {
        Some(f) => f.basis().clone(),
        None => return Err(KernelError::InvalidSpec("empty family".into())),
    };
    if fs.iter().any(|f| f.basis() != &basis) {
        return Err(KernelError::BasisMismatch);
    }
    let r = basis.rank();
    let mut denominators = vec![1_i64; r];
    for f in fs {
        for t in f.terms() {
            for (m, c) in denominators.iter_mut().zip(t.freq.coords()) {
                *m = (*m / m.gcd(c.denom()))
                    .checked_mul(*c.denom())
                    .ok_or_else(|| KernelError::Unrepresentable(format!("lcm overflow at {}", t.freq)))?;
            }
        }
    }
    // per member: (||b_l||, integer numerators)
    let members: Vec<Vec<(f64, Vec<i64>)>> = fs
        .iter()
        .map(|f| {
            f.terms()
                .iter()
                .map(|t| {
                    let p = t
                        .freq
                        .coords()
                        .iter()
                        .zip(&denominators)
                        .map(|(c, &m)| {
                            c.numer()
                                .checked_mul(m / c.denom())
                                .ok_or_else(|| KernelError::Unrepresentable(t.freq.to_string()))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok((t.coeff.norm_value(), p))
                })
                .collect::<Result<Vec<_>, KernelError>>()
        })
        .collect::<Result<_, _>>()?;

    let mut orders = vec![1_i64; r];
    for member in &members {
        for (_, p) in member {
            for (n, pj) in orders.iter_mut().zip(p) {
                *n = (*n).max(pj.abs() + 1);
            }
        }
    }
    let certify = |orders: &[i64]| -> Vec<f64> {
        let spec = KernelSpec { basis: basis.clone(), denominators: denominators.clone(), orders: orders.to_vec() };
        members
            .iter()
            .map(|m| m.iter().map(|(norm, p)| norm * (1.0 - spec.damping(p))).sum())
            .collect()
    };
    let worst = |c: &[f64]| c.iter().copied().fold(0.0, f64::max);
    let mut certified = certify(&orders);
    while worst(&certified) > eps {
        let mut best: Option<(f64, usize, i64)> = None;
        for j in 0..r {
            let mut trial = orders.clone();
            let step = (trial[j] / 8).max(1);
            trial[j] += step;
            let count: u128 = trial.iter().map(|&n| (2 * n - 1) as u128).product();
            if count > cap as u128 {
                continue;
            }
            let w = worst(&certify(&trial));
            if best.is_none_or(|(bw, _, _)| w < bw) {
                best = Some((w, j, trial[j]));
            }
        }
        match best {
            Some((_, j, n)) => {
                orders[j] = n;
                certified = certify(&orders);
            }
            None => return Err(KernelError::Unreachable { best: worst(&certified) }),
        }
    }
    Ok(NetKernel { spec: KernelSpec::new(basis, denominators, orders)?, certified })
}

#[derive(Serialize, Deserialize)]
struct KernelSpecJson {
    basis: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    m: Vec<i64>,
    #[serde(rename = "N")]
    n: Vec<i64>,
}

impl Serialize for KernelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KernelSpecJson {
            basis: self.basis.betas().to_vec(),
            labels: Some(self.basis.labels().to_vec()),
            m: self.denominators.clone(),
            n: self.orders.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KernelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = KernelSpecJson::deserialize(d)?;
        let basis = match raw.labels {
            Some(l) => BasisSet::new(raw.basis, l),
            None => BasisSet::from_betas(raw.basis),
        }
        .map_err(D::Error::custom)?;
        KernelSpec::new(basis, raw.m, raw.n).map_err(D::Error::custom)
    }
}
