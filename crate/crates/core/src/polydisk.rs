//! Finite sums of products `sum_t w_t prod_k f_{t,k}(z_k)` of one-variable
//! functions on the polydisk, and their factor-wise approximation.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glue::{approximate, Approximation, DiskData, GlueConfig, GlueError};
use crate::holo::HoloExpr;
use crate::sap::{DiskQuadrature, SapFunction, SingularSet};
use crate::vector::{complex_pair, VectorValue};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("term {term}, coordinate {position}: {source}")]
    Factor {
        term: usize,
        position: usize,
        #[source]
        source: GlueError,
    },
    #[error("shape: {0}")]
    Shape(String),
    #[error("term {term}, coordinate {position}: {z} is outside the sampled disk")]
    OffGrid { term: usize, position: usize, z: Complex64 },
}

/// A one-variable function on the closed disk.
#[derive(Debug, Clone)]
pub enum Factor {
    /// Closed form: generators and polynomials.
    Form(Arc<HoloExpr>),
    /// Boundary data extended by the Poisson integral.
    Sap { sap: SapFunction, quadrature: DiskQuadrature },
    /// Output of the one-variable gluing run, interpolated between nodes.
    Approximated(Arc<Approximation>),
}

impl Factor {
    pub fn dim(&self) -> usize {
        match self {
            Factor::Form(e) => e.dim(),
            Factor::Sap { sap, .. } => sap.dim(),
            Factor::Approximated(a) => a.fields.result.dim(),
        }
    }

    /// Input for the one-variable gluing run; `None` once glued.
    pub fn disk_data(&self) -> Option<DiskData> {
        match self {
            Factor::Form(e) => Some(DiskData::Expr(e.clone())),
            Factor::Sap { sap, quadrature } => Some(DiskData::Boundary { sap: sap.clone(), quadrature: *quadrature }),
            Factor::Approximated(_) => None,
        }
    }

    pub fn singular(&self) -> SingularSet {
        match self.disk_data() {
            Some(d) => d.singular(),
            None => SingularSet::default(),
        }
    }

    /// `None` off the sampled grid of an approximated factor.
    pub fn eval(&self, z: Complex64) -> Result<Option<VectorValue>, GlueError> {
        match self {
            Factor::Approximated(a) => Ok(a.eval(z)),
            other => other.disk_data().expect("closed form or boundary data").eval(z).map(Some),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorTerm {
    pub weight: Complex64,
    pub factors: Vec<Factor>,
}

#[derive(Debug, Clone)]
pub struct TensorFunction {
    n: usize,
    terms: Vec<TensorTerm>,
}

impl TensorFunction {
    pub fn new(n: usize, terms: Vec<TensorTerm>) -> Result<Self, TensorError> {
        if n == 0 {
            return Err(TensorError::Shape("need at least one variable".into()));
        }
        for (t, term) in terms.iter().enumerate() {
            if term.factors.len() != n {
                return Err(TensorError::Shape(format!("term {t} has {} factors, expected {n}", term.factors.len())));
            }
        }
        let f = Self { n, terms };
        f.dim()?;
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[TensorTerm] {
        &self.terms
    }

    /// Output dimension: factors are scalar or share one dimension.
    pub fn dim(&self) -> Result<usize, TensorError> {
        let mut dim = 1;
        for f in self.terms.iter().flat_map(|t| &t.factors) {
            match (dim, f.dim()) {
                (_, 1) => {}
                (1, d) => dim = d,
                (a, b) if a == b => {}
                (a, b) => return Err(TensorError::Shape(format!("factor dimensions {a} and {b} do not combine"))),
            }
        }
        Ok(dim)
    }

    /// Singular set of coordinate `k`: the union over terms.
    pub fn singular(&self, k: usize) -> SingularSet {
        self.terms.iter().fold(SingularSet::default(), |acc, t| acc.union(&t.factors[k].singular()))
    }
}

/// Componentwise product, with scalars broadcast.
fn product(a: &VectorValue, b: &VectorValue) -> VectorValue {
    match (a.dim(), b.dim()) {
        (1, _) => b.scale(a.components[0]),
        (_, 1) => a.scale(b.components[0]),
        _ => a.hadamard(b),
    }
}

/// A scalar term spread over every component.
fn widen(p: VectorValue, dim: usize) -> VectorValue {
    if p.dim() == dim {
        p
    } else {
        VectorValue::new(vec![p.components[0]; dim])
    }
}

/// `sum_t w_t prod_k f_{t,k}(z_k)`.
pub fn tensor_eval(f: &TensorFunction, z: &[Complex64]) -> Result<VectorValue, TensorError> {
    if z.len() != f.n {
        return Err(TensorError::Shape(format!("{} coordinates for n = {}", z.len(), f.n)));
    }
    let dim = f.dim()?;
    let mut acc = VectorValue::zeros(dim);
    for (t, term) in f.terms.iter().enumerate() {
        let mut p = VectorValue::scalar(term.weight);
        for (k, (factor, &zk)) in term.factors.iter().zip(z).enumerate() {
            let v = factor
                .eval(zk)
                .map_err(|source| TensorError::Factor { term: t, position: k, source })?
                .ok_or(TensorError::OffGrid { term: t, position: k, z: zk })?;
            p = product(&p, &v);
        }
        acc += &widen(p, dim);
    }
    Ok(acc)
}

/// Centered-difference d-bar in coordinate `k` at an interior point.
pub fn coordinate_dbar(f: &TensorFunction, z: &[Complex64], k: usize, step: f64) -> Result<VectorValue, TensorError> {
    let at = |d: Complex64| {
        let mut w = z.to_vec();
        w[k] += d;
        tensor_eval(f, &w)
    };
    let fx = &at(Complex64::new(step, 0.0))? - &at(Complex64::new(-step, 0.0))?;
    let fy = &at(Complex64::new(0.0, step))? - &at(Complex64::new(0.0, -step))?;
    Ok((&fx + &fy.scale(Complex64::i())).scale_real(0.25 / step))
}

/// Product grid of `points` angles per coordinate on the circle of `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub points: usize,
    pub radius: f64,
}

impl Default for TorusGrid {
    fn default() -> Self {
        Self { points: 256, radius: 1.0 }
    }
}

impl TorusGrid {
    /// Sample points on one circle; the small offset keeps them off
    /// typical singular angles.
    pub fn circle(&self) -> Vec<Complex64> {
        (0..self.points)
            .map(|j| Complex64::from_polar(self.radius, TAU * (j as f64 + 0.5) / self.points as f64 + 1.234_567e-3))
            .collect()
    }
}

/// Factor values at the circle points, per term and coordinate.
type AxisValues = Vec<Vec<Vec<VectorValue>>>;

fn axis_values(f: &TensorFunction, circle: &[Complex64]) -> Result<AxisValues, TensorError> {
    let mut out = Vec::with_capacity(f.terms.len());
    for (t, term) in f.terms.iter().enumerate() {
        let mut per = Vec::with_capacity(f.n);
        for (k, factor) in term.factors.iter().enumerate() {
            let vals = circle
                .iter()
                .map(|&z| {
                    factor
                        .eval(z)
                        .map_err(|source| TensorError::Factor { term: t, position: k, source })?
                        .ok_or(TensorError::OffGrid { term: t, position: k, z })
                })
                .collect::<Result<Vec<_>, _>>()?;
            per.push(vals);
        }
        out.push(per);
    }
    Ok(out)
}

/// Values of the sum-product over every multi-index of the grid.
fn for_each_grid_value(
    weights: &[Complex64],
    values: &AxisValues,
    n: usize,
    m: usize,
    dim: usize,
    mut visit: impl FnMut(&[usize], VectorValue),
) {
    let total = m.checked_pow(n as u32).expect("torus grid too large");
    let mut idx = vec![0usize; n];
    for flat in 0..total {
        let mut r = flat;
        for slot in idx.iter_mut() {
            *slot = r % m;
            r /= m;
        }
        let mut acc = VectorValue::zeros(dim);
        for (t, per) in values.iter().enumerate() {
            let mut p = VectorValue::scalar(weights[t]);
            for (k, vals) in per.iter().enumerate() {
                p = product(&p, &vals[idx[k]]);
            }
            acc += &widen(p, dim);
        }
        visit(&idx, acc);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorSupNorm {
    pub grid_max: f64,
    /// `|w| prod_k sup |f_k|` for a single product term.
    pub product_bound: Option<f64>,
}

/// Grid maximum over the torus, and the product of factor maxima for a
/// single term.
pub fn tensor_sup_norm(f: &TensorFunction, grid: &TorusGrid) -> Result<TensorSupNorm, TensorError> {
    let circle = grid.circle();
    let values = axis_values(f, &circle)?;
    let weights: Vec<Complex64> = f.terms.iter().map(|t| t.weight).collect();
    let mut grid_max = 0.0_f64;
    for_each_grid_value(&weights, &values, f.n, circle.len(), f.dim()?, |_, v| grid_max = grid_max.max(v.norm_value()));
    let product_bound = (f.terms.len() == 1).then(|| {
        values[0].iter().map(|vals| vals.iter().map(VectorValue::norm_value).fold(0.0, f64::max)).product::<f64>()
            * f.terms[0].weight.norm()
    });
    Ok(TensorSupNorm { grid_max, product_bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TensorOptions {
    pub glue: GlueConfig,
    /// Closed-form factors are already in the target algebra and are kept
    /// as they are unless this is false.
    pub keep_closed_forms: bool,
    pub torus: TorusGrid,
    /// Ring used in place of the torus when a factor was glued, in grid steps
    /// inside the unit circle.
    pub ring_inset_cells: f64,
}

impl Default for TensorOptions {
    fn default() -> Self {
        Self { glue: GlueConfig::default(), keep_closed_forms: true, torus: TorusGrid::default(), ring_inset_cells: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorReport {
    pub term: usize,
    pub position: usize,
    pub approximated: bool,
    /// Disk-grid error reported by the gluing run.
    pub pipeline_error: Option<f64>,
    /// Sup distance between the factor and its replacement on the sampling circle.
    pub circle_error: f64,
    pub sup_original: f64,
    pub sup_replacement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorReport {
    pub epsilon: f64,
    pub n: usize,
    pub options: TensorOptions,
    pub sampling: TorusGrid,
    pub factors: Vec<FactorReport>,
    /// Telescoping bound per term, weight included.
    pub term_bounds: Vec<f64>,
    pub total_bound: f64,
    pub measured_error: f64,
    /// Gluing reports of the distinct factors that were approximated.
    pub pipelines: Vec<crate::glue::ApproximationReport>,
}

/// Replace every factor by its gluing approximation (closed forms kept when
/// asked) and bound the error by the telescoping inequality
/// `|prod f - prod g| <= sum_k prod_{j<k} |g_j| |f_k - g_k| prod_{j>k} |f_j|`
/// with factor norms and errors measured on the sampling circle.
pub fn tensor_approximate(
    f: &TensorFunction,
    eps: f64,
    opts: &TensorOptions,
) -> Result<(TensorFunction, TensorReport), TensorError> {
    let singular: Vec<SingularSet> = (0..f.n).map(|k| f.singular(k)).collect();
    // identical factors with the same singular set share a run
    let mut cache: HashMap<(Vec<u64>, String), Arc<Approximation>> = HashMap::new();
    let mut pipelines = Vec::new();
    let mut terms = Vec::with_capacity(f.terms.len());
    for (t, term) in f.terms.iter().enumerate() {
        let mut factors = Vec::with_capacity(f.n);
        for (k, factor) in term.factors.iter().enumerate() {
            let keep = matches!(factor, Factor::Approximated(_))
                || (opts.keep_closed_forms && matches!(factor, Factor::Form(_)));
            if keep {
                factors.push(factor.clone());
                continue;
            }
            let data = factor.disk_data().expect("not yet approximated");
            let key = (singular[k].angles().iter().map(|a| a.to_bits()).collect(), factor_key(factor));
            let approx = match cache.get(&key) {
                Some(a) => a.clone(),
                None => {
                    let a = Arc::new(
                        approximate(&data, &singular[k], eps, &opts.glue)
                            .map_err(|source| TensorError::Factor { term: t, position: k, source })?,
                    );
                    pipelines.push(a.report.clone());
                    cache.insert(key, a.clone());
                    a
                }
            };
            factors.push(Factor::Approximated(approx));
        }
        terms.push(TensorTerm { weight: term.weight, factors });
    }
    let approx = TensorFunction { n: f.n, terms };

    let glued = pipelines.first().map(|r| r.grid.h);
    let sampling = match glued {
        Some(h) => TorusGrid { points: opts.torus.points, radius: 1.0 - opts.ring_inset_cells * h },
        None => opts.torus,
    };
    let circle = sampling.circle();
    let original = axis_values(f, &circle)?;
    let replaced = axis_values(&approx, &circle)?;

    let mut factors = Vec::new();
    let mut term_bounds = Vec::with_capacity(f.terms.len());
    for (t, term) in approx.terms.iter().enumerate() {
        let mut errs = Vec::with_capacity(f.n);
        let mut sup_f = Vec::with_capacity(f.n);
        let mut sup_g = Vec::with_capacity(f.n);
        for k in 0..f.n {
            let (a, b) = (&original[t][k], &replaced[t][k]);
            let err = a.iter().zip(b).map(|(x, y)| x.distance(y)).fold(0.0, f64::max);
            let sf = a.iter().map(VectorValue::norm_value).fold(0.0, f64::max);
            let sg = b.iter().map(VectorValue::norm_value).fold(0.0, f64::max);
            let pipeline_error = match &term.factors[k] {
                Factor::Approximated(a) if !matches!(f.terms[t].factors[k], Factor::Approximated(_)) => Some(a.report.sup_error),
                _ => None,
            };
            factors.push(FactorReport {
                term: t,
                position: k,
                approximated: pipeline_error.is_some(),
                pipeline_error,
                circle_error: err,
                sup_original: sf,
                sup_replacement: sg,
            });
            errs.push(err);
            sup_f.push(sf);
            sup_g.push(sg);
        }
        let bound: f64 = (0..f.n)
            .map(|k| sup_g[..k].iter().product::<f64>() * errs[k] * sup_f[k + 1..].iter().product::<f64>())
            .sum();
        term_bounds.push(term.weight.norm() * bound);
    }
    let total_bound = term_bounds.iter().sum();

    // measured error on the product grid
    let dim = f.dim()?;
    let weights: Vec<Complex64> = f.terms.iter().map(|t| t.weight).collect();
    let mut exact = Vec::new();
    for_each_grid_value(&weights, &original, f.n, circle.len(), dim, |_, v| exact.push(v));
    let mut measured_error = 0.0_f64;
    let mut i = 0;
    for_each_grid_value(&weights, &replaced, f.n, circle.len(), dim, |_, v| {
        measured_error = measured_error.max(v.distance(&exact[i]));
        i += 1;
    });

    let report = TensorReport {
        epsilon: eps,
        n: f.n,
        options: opts.clone(),
        sampling,
        factors,
        term_bounds,
        total_bound,
        measured_error,
        pipelines,
    };
    Ok((approx, report))
}

fn factor_key(f: &Factor) -> String {
    match f {
        Factor::Form(e) => format!("form:{}", serde_json::to_string(e.as_ref()).unwrap_or_default()),
        Factor::Sap { sap, quadrature } => format!(
            "sap:{}:{}",
            serde_json::to_string(sap).unwrap_or_else(|_| format!("{:p}", sap)),
            serde_json::to_string(quadrature).unwrap_or_default()
        ),
        Factor::Approximated(a) => format!("approx:{:p}", Arc::as_ptr(a)),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FactorJson {
    Form {
        expr: HoloExpr,
    },
    Sap {
        sap: SapFunction,
        #[serde(default)]
        quadrature: DiskQuadrature,
    },
}

impl Serialize for Factor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Factor::Form(e) => FactorJson::Form { expr: (**e).clone() },
            Factor::Sap { sap, quadrature } => FactorJson::Sap { sap: sap.clone(), quadrature: *quadrature },
            Factor::Approximated(_) => return Err(serde::ser::Error::custom("glued factors have no JSON form")),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Factor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match FactorJson::deserialize(d)? {
            FactorJson::Form { expr } => Factor::Form(Arc::new(expr)),
            FactorJson::Sap { sap, quadrature } => Factor::Sap { sap, quadrature },
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightJson {
    Real(f64),
    #[serde(with = "complex_pair")]
    Complex(Complex64),
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    weight: WeightJson,
    factors: Vec<Factor>,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    n: usize,
    terms: Vec<TermJson>,
}

impl Serialize for TensorFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                if t.factors.iter().any(|f| matches!(f, Factor::Approximated(_))) {
                    return Err(serde::ser::Error::custom("glued factors have no JSON form"));
                }
                Ok(TermJson { weight: WeightJson::Complex(t.weight), factors: t.factors.clone() })
            })
            .collect::<Result<Vec<_>, S::Error>>()?;
        TensorJson { n: self.n, terms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TensorFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = TensorJson::deserialize(d)?;
        let terms = j
            .terms
            .into_iter()
            .map(|t| TensorTerm {
                weight: match t.weight {
                    WeightJson::Real(x) => Complex64::new(x, 0.0),
                    WeightJson::Complex(c) => c,
                },
                factors: t.factors,
            })
            .collect();
        TensorFunction::new(j.n, terms).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disk::GeneratorSpec;
    use crate::sap::Background;

    fn one() -> Factor {
        Factor::Form(Arc::new(HoloExpr::polynomial(&[Complex64::new(1.0, 0.0)])))
    }

    fn generator() -> Factor {
        Factor::Form(Arc::new(HoloExpr::generator(GeneratorSpec::new(1.0, 1.0, -1.0).unwrap()).unwrap()))
    }

    fn single(factors: Vec<Factor>) -> TensorFunction {
        TensorFunction::new(factors.len(), vec![TensorTerm { weight: Complex64::new(1.0, 0.0), factors }]).unwrap()
    }

    #[test]
    fn unit_factor_evaluates_other_coordinate() {
        let g = generator();
        let f = single(vec![one(), g.clone()]);
        let z = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.5)];
        assert_eq!(tensor_eval(&f, &z).unwrap(), g.eval(z[1]).unwrap().unwrap());
    }

    #[test]
    fn identity_boundary_factors_vanish_at_origin() {
        let id = Factor::Sap {
            sap: SapFunction::continuous(Background::Expr(Arc::new(HoloExpr::polynomial(&[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ])))),
            quadrature: DiskQuadrature::default(),
        };
        let f = single(vec![id.clone(), id]);
        let v = tensor_eval(&f, &[Complex64::new(0.0, 0.0); 2]).unwrap();
        assert!(v.norm_value() < 1e-12);
    }

    #[test]
    fn generator_product_sup_norm() {
        let f = single(vec![generator(), generator()]);
        let s = tensor_sup_norm(&f, &TorusGrid::default()).unwrap();
        let e2 = 1.0_f64.exp().powi(2);
        assert!((s.grid_max - e2).abs() < 1e-9, "{}", s.grid_max);
        assert!(s.grid_max <= s.product_bound.unwrap() * (1.0 + 1e-12));
        let c = TensorFunction::new(
            2,
            vec![TensorTerm { weight: Complex64::new(0.0, 3.0), factors: vec![one(), one()] }],
        )
        .unwrap();
        assert!((tensor_sup_norm(&c, &TorusGrid::default()).unwrap().grid_max - 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_kept() {
        let f = single(vec![generator(), one()]);
        let (g, report) = tensor_approximate(&f, 0.1, &TensorOptions::default()).unwrap();
        assert_eq!(report.total_bound, 0.0);
        assert_eq!(report.measured_error, 0.0);
        assert!(report.pipelines.is_empty());
        assert!(matches!(g.terms()[0].factors[0], Factor::Form(_)));
    }

    #[test]
    fn separate_holomorphy() {
        let f = single(vec![generator(), generator()]);
        let z = [Complex64::new(0.2, -0.3), Complex64::new(-0.4, 0.1)];
        for k in 0..2 {
            let r1 = coordinate_dbar(&f, &z, k, 1e-2).unwrap().norm_value();
            let r2 = coordinate_dbar(&f, &z, k, 5e-3).unwrap().norm_value();
            assert!(r1 < 1e-3 && r2 < 0.3 * r1 + 1e-12, "{r1} {r2}");
        }
    }

    #[test]
    fn json_round_trip() {
        let f = TensorFunction::new(
            2,
            vec![
                TensorTerm { weight: Complex64::new(2.0, 0.0), factors: vec![generator(), one()] },
                TensorTerm { weight: Complex64::new(0.0, -1.0), factors: vec![one(), generator()] },
            ],
        )
        .unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: TensorFunction = serde_json::from_str(&text).unwrap();
        let z = [Complex64::new(0.1, 0.2), Complex64::new(0.3, -0.4)];
        assert_eq!(tensor_eval(&back, &z).unwrap(), tensor_eval(&f, &z).unwrap());
        let bad = r#"{"n": 2, "terms": [{"weight": 1.0, "factors": [{"kind": "form", "expr": {"dim": 1, "terms": []}}]}]}"#;
        assert!(serde_json::from_str::<TensorFunction>(bad).is_err());
    }
}
