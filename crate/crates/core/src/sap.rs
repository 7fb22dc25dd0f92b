//! Semi-almost periodic boundary functions on the circle: assembly from
//! log-scale profiles, verification against candidate profiles, strip
//! pullbacks, local approximants and Poisson extension into the disk.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ap::{sample_grid, ApData, ApError, EvaluationOracle, TrigPolynomial};
use crate::disk::{angle_offset, CirclePoint, DiskError, MobiusChart, Orientation, POLE_TOL};
use crate::fejer::{apply_operator, choose_kernel_for_net, KernelError, KernelSpec};
use crate::holo::{HoloError, HoloExpr};
use crate::strip::{BoundaryPair, StripError, StripHarmonic};
use crate::vector::{NormKind, VectorValue};

#[derive(Debug, Error)]
pub enum SapError {
    #[error("blend regions around {first} and {second} overlap")]
    OverlappingBlends { first: f64, second: f64 },
    #[error("profile mismatch: {0}")]
    ProfileMismatch(String),
    #[error("angle {0} is a singular point")]
    AtSingularPoint(f64),
    #[error("invalid scale {0}: must lie in (0, pi)")]
    InvalidScale(f64),
    #[error("no trial scale passed: best sup {best_sup:e} at s = {best_s:e}")]
    VerificationFailed { best_sup: f64, best_s: f64, trials: Vec<(f64, f64)> },
    #[error("quadrature refinement exhausted (last change {last_change:e})")]
    NonConverged { last_change: f64 },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Disk(#[from] DiskError),
    #[error(transparent)]
    Strip(#[from] StripError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Ap(#[from] ApError),
    #[error(transparent)]
    Holo(#[from] HoloError),
}

/// Finite set of circle points in increasing angle order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SingularSet(Vec<CirclePoint>);

impl SingularSet {
    pub fn new(angles: &[f64]) -> Result<Self, SapError> {
        let pts = angles.iter().map(|&a| CirclePoint::new(a)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_points(pts))
    }

    pub fn from_points(mut pts: Vec<CirclePoint>) -> Self {
        pts.sort_by(|a, b| a.angle().total_cmp(&b.angle()));
        pts.dedup_by(|a, b| a.distance(b) < 1e-12);
        if pts.len() > 1 && pts[0].distance(pts.last().expect("nonempty")) < 1e-12 {
            pts.pop();
        }
        Self(pts)
    }

    pub fn points(&self) -> &[CirclePoint] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union(&self, other: &SingularSet) -> SingularSet {
        Self::from_points(self.0.iter().chain(&other.0).copied().collect())
    }

    /// Index of a point within `tol` of `theta`.
    pub fn find(&self, theta: f64, tol: f64) -> Option<usize> {
        self.0.iter().position(|p| angle_offset(theta, p.angle()).abs() <= tol)
    }

    pub fn angles(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.angle()).collect()
    }
}

/// Log-scale description of a function near `z0`: along the arc leaving
/// `z0` with orientation `k`, `f(e^{i(t0 + k s e^t)}) ~ h_k(t)` for `t < 0`.
#[derive(Debug, Clone)]
pub struct ApProfile {
    pub z0: CirclePoint,
    pub s: f64,
    pub h_minus: ApData,
    pub h_plus: ApData,
}

impl ApProfile {
    pub fn new(z0: CirclePoint, s: f64, h_minus: ApData, h_plus: ApData) -> Result<Self, SapError> {
        if !(s > 0.0 && s < PI) {
            return Err(SapError::InvalidScale(s));
        }
        if h_minus.dim() != h_plus.dim() {
            return Err(SapError::ProfileMismatch(format!(
                "profile dimensions {} and {} at {}",
                h_minus.dim(),
                h_plus.dim(),
                z0.angle()
            )));
        }
        Ok(Self { z0, s, h_minus, h_plus })
    }

    pub fn side(&self, k: Orientation) -> &ApData {
        match k {
            Orientation::Minus => &self.h_minus,
            Orientation::Plus => &self.h_plus,
        }
    }

    pub fn dim(&self) -> usize {
        self.h_plus.dim()
    }

    /// Profile value at angular offset `u` along orientation `k`.
    pub fn value_at_offset(&self, k: Orientation, u: f64) -> VectorValue {
        self.side(k).evaluate((u / self.s).ln())
    }
}

/// The continuous part of a SAP function.
#[derive(Debug, Clone)]
pub enum Background {
    Constant(VectorValue),
    /// Periodic piecewise-linear interpolation of samples at increasing angles.
    Table { angles: Vec<f64>, values: Vec<VectorValue> },
    /// Boundary values of an explicit holomorphic function.
    Expr(Arc<HoloExpr>),
}

impl Background {
    pub fn dim(&self) -> usize {
        match self {
            Background::Constant(v) => v.dim(),
            Background::Table { values, .. } => values.first().map_or(1, |v| v.dim()),
            Background::Expr(e) => e.dim(),
        }
    }

    pub fn eval(&self, theta: f64) -> Result<VectorValue, SapError> {
        match self {
            Background::Constant(v) => Ok(v.clone()),
            Background::Table { angles, values } => Ok(table_lookup(angles, values, theta)),
            Background::Expr(e) => Ok(e.eval(Complex64::from_polar(1.0, theta))?),
        }
    }
}

fn table_lookup(angles: &[f64], values: &[VectorValue], theta: f64) -> VectorValue {
    let n = angles.len();
    if n == 1 {
        return values[0].clone();
    }
    let th = theta.rem_euclid(TAU);
    let idx = angles.partition_point(|&a| a <= th);
    let (lo, hi) = if idx == 0 || idx == n { (n - 1, 0) } else { (idx - 1, idx) };
    let span = (angles[hi] - angles[lo]).rem_euclid(TAU);
    let off = (th - angles[lo]).rem_euclid(TAU);
    let w = if span > 0.0 { off / span } else { 0.0 };
    &values[lo].scale_real(1.0 - w) + &values[hi].scale_real(w)
}

/// Quintic smoothstep `6x^5 - 15x^4 + 10x^3` clamped to `[0, 1]`.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_derivative(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    30.0 * x * x * (x - 1.0) * (x - 1.0)
}

/// A bounded boundary function, continuous off a finite singular set and
/// log-scale almost periodic at each singular point.
#[derive(Debug, Clone)]
pub struct SapFunction {
    singular: SingularSet,
    profiles: Vec<ApProfile>,
    background: Background,
    /// Collar width per singular point; `None` marks a certificate-only
    /// profile that does not alter the values (the background is already
    /// exact there).
    blend: Vec<Option<f64>>,
}

pub fn build_sap(
    singular: SingularSet,
    profiles: Vec<ApProfile>,
    background: Background,
    blend: Vec<Option<f64>>,
) -> Result<SapFunction, SapError> {
    let n = singular.len();
    if profiles.len() != n || blend.len() != n {
        return Err(SapError::ProfileMismatch(format!(
            "{n} singular points, {} profiles, {} blend radii",
            profiles.len(),
            blend.len()
        )));
    }
    let dim = background.dim();
    let mut ordered: Vec<Option<ApProfile>> = vec![None; n];
    for p in profiles {
        let idx = singular.find(p.z0.angle(), 1e-12).ok_or_else(|| {
            SapError::ProfileMismatch(format!("profile at {} has no singular point", p.z0.angle()))
        })?;
        if p.dim() != dim {
            return Err(SapError::ProfileMismatch(format!(
                "profile at {} has dimension {}, background {dim}",
                p.z0.angle(),
                p.dim()
            )));
        }
        if ordered[idx].replace(p).is_some() {
            return Err(SapError::ProfileMismatch("two profiles at one point".into()));
        }
    }
    let profiles: Vec<ApProfile> = ordered.into_iter().map(|p| p.expect("one profile per point")).collect();
    for b in blend.iter().flatten() {
        if !(*b >= 0.0) {
            return Err(SapError::ProfileMismatch(format!("negative blend radius {b}")));
        }
    }
    let extent = |i: usize| blend[i].map_or(0.0, |b| profiles[i].s + b);
    for i in 0..n {
        let j = (i + 1) % n;
        let gap = if n == 1 {
            TAU
        } else {
            (singular.points()[j].angle() - singular.points()[i].angle()).rem_euclid(TAU)
        };
        let need = if n == 1 { 2.0 * extent(i) } else { extent(i) + extent(j) };
        if need > gap {
            return Err(SapError::OverlappingBlends {
                first: singular.points()[i].angle(),
                second: singular.points()[j].angle(),
            });
        }
    }
    Ok(SapFunction { singular, profiles, background, blend })
}

impl SapFunction {
    /// A continuous function (no singular points).
    pub fn continuous(background: Background) -> Self {
        Self { singular: SingularSet::default(), profiles: Vec::new(), background, blend: Vec::new() }
    }

    /// Boundary values of an explicit expression, with exact profiles at
    /// `singular` (which must contain the expression's own singular points).
    pub fn from_expr(expr: Arc<HoloExpr>, singular: &SingularSet, scale: f64) -> Result<Self, SapError> {
        let all = singular.union(&SingularSet::from_points(expr.singular_points()));
        let profiles = all
            .points()
            .iter()
            .map(|&z0| {
                let (minus, plus) = expr.profiles_at(z0, scale)?;
                ApProfile::new(z0, scale, minus.into(), plus.into())
            })
            .collect::<Result<Vec<_>, SapError>>()?;
        let n = all.len();
        build_sap(all, profiles, Background::Expr(expr), vec![None; n])
    }

    pub fn singular(&self) -> &SingularSet {
        &self.singular
    }

    pub fn profiles(&self) -> &[ApProfile] {
        &self.profiles
    }

    pub fn background(&self) -> &Background {
        &self.background
    }

    pub fn blend(&self) -> &[Option<f64>] {
        &self.blend
    }

    pub fn dim(&self) -> usize {
        self.background.dim()
    }

    pub fn profile_at(&self, z0: CirclePoint) -> Option<&ApProfile> {
        self.singular.find(z0.angle(), 1e-12).map(|i| &self.profiles[i])
    }

    pub fn eval_boundary(&self, theta: f64) -> Result<VectorValue, SapError> {
        if self.singular.find(theta, POLE_TOL).is_some() {
            return Err(SapError::AtSingularPoint(theta));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            let Some(b) = self.blend[i] else { continue };
            let delta = angle_offset(theta, p.z0.angle());
            let u = delta.abs();
            if u >= p.s + b {
                continue;
            }
            let k = if delta > 0.0 { Orientation::Plus } else { Orientation::Minus };
            let pv = p.value_at_offset(k, u);
            if u < p.s {
                return Ok(pv);
            }
            let w = smoothstep((u - p.s) / b);
            let bg = self.background.eval(theta)?;
            return Ok(&pv.scale_real(1.0 - w) + &bg.scale_real(w));
        }
        self.background.eval(theta)
    }

    /// Sampled sup of the boundary values plus profile coefficient bounds;
    /// an estimate, not a certified bound.
    pub fn bound_estimate(&self) -> f64 {
        let n = 4096;
        let mut m = 0.0_f64;
        for j in 0..n {
            let theta = (j as f64 + 0.37) * TAU / n as f64;
            if let Ok(v) = self.eval_boundary(theta) {
                m = m.max(v.norm_value());
            }
        }
        for p in &self.profiles {
            m = m.max(p.h_minus.bound()).max(p.h_plus.bound());
        }
        m
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileJson {
    z0: f64,
    s: f64,
    h_minus: TrigPolynomial,
    h_plus: TrigPolynomial,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BackgroundJson {
    Constant {
        #[serde(with = "crate::vector::complex_list")]
        value: Vec<Complex64>,
    },
    Table {
        angles: Vec<f64>,
        #[serde(with = "crate::vector::complex_lists")]
        values: Vec<Vec<Complex64>>,
    },
    Expr {
        expr: HoloExpr,
    },
}

#[derive(Serialize, Deserialize)]
struct SapFunctionJson {
    singular: Vec<f64>,
    profiles: Vec<ProfileJson>,
    background: BackgroundJson,
    blend: Vec<Option<f64>>,
    #[serde(default)]
    norm: NormKind,
}

impl TryFrom<SapFunctionJson> for SapFunction {
    type Error = SapError;
    fn try_from(j: SapFunctionJson) -> Result<Self, SapError> {
        let norm = j.norm;
        let background = match j.background {
            BackgroundJson::Constant { value } => Background::Constant(VectorValue::with_norm(value, norm)),
            BackgroundJson::Table { angles, values } => {
                if angles.is_empty() || angles.len() != values.len() {
                    return Err(SapError::ProfileMismatch(format!(
                        "background table has {} angles and {} values",
                        angles.len(),
                        values.len()
                    )));
                }
                let angles: Vec<f64> = angles.iter().map(|a| a.rem_euclid(TAU)).collect();
                if angles.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(SapError::ProfileMismatch("background angles must increase within [0, 2pi)".into()));
                }
                let dim = values[0].len();
                if values.iter().any(|v| v.len() != dim) {
                    return Err(SapError::ProfileMismatch("background values differ in dimension".into()));
                }
                Background::Table { angles, values: values.into_iter().map(|v| VectorValue::with_norm(v, norm)).collect() }
            }
            BackgroundJson::Expr { expr } => Background::Expr(Arc::new(expr)),
        };
        let profiles = j
            .profiles
            .into_iter()
            .map(|p| {
                let z0 = CirclePoint::new(p.z0)?;
                ApProfile::new(z0, p.s, p.h_minus.with_norm(norm).into(), p.h_plus.with_norm(norm).into())
            })
            .collect::<Result<Vec<_>, SapError>>()?;
        build_sap(SingularSet::new(&j.singular)?, profiles, background, j.blend)
    }
}

impl SapFunction {
    fn to_json(&self) -> Result<SapFunctionJson, SapError> {
        let poly = |d: &ApData| {
            d.as_poly().cloned().ok_or_else(|| SapError::Unsupported("oracle profiles have no JSON form".into()))
        };
        let profiles = self
            .profiles
            .iter()
            .map(|p| Ok(ProfileJson { z0: p.z0.angle(), s: p.s, h_minus: poly(&p.h_minus)?, h_plus: poly(&p.h_plus)? }))
            .collect::<Result<Vec<_>, SapError>>()?;
        let (background, norm) = match &self.background {
            Background::Constant(v) => (BackgroundJson::Constant { value: v.components.clone() }, v.norm),
            Background::Table { angles, values } => (
                BackgroundJson::Table { angles: angles.clone(), values: values.iter().map(|v| v.components.clone()).collect() },
                values.first().map_or(NormKind::Sup, |v| v.norm),
            ),
            Background::Expr(e) => (BackgroundJson::Expr { expr: (**e).clone() }, e.norm_kind()),
        };
        Ok(SapFunctionJson { singular: self.singular.angles(), profiles, background, blend: self.blend.clone(), norm })
    }
}

impl Serialize for SapFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SapFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        SapFunction::try_from(SapFunctionJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Sampling controls for checks along the two arcs at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSampling {
    /// Log-scale depth: offsets `u` from `s e^{-span}` up to `s`.
    pub span: f64,
    /// Log-scale step.
    pub step: f64,
    /// Number of halvings in the trial schedule `s_n = s 2^{-n}`.
    pub halvings: usize,
    /// Smallest angular offset sampled (floating resolution near the point).
    pub u_floor: f64,
}

impl Default for ArcSampling {
    fn default() -> Self {
        Self { span: 30.0, step: 0.01, halvings: 20, u_floor: 1e-9 }
    }
}

impl ArcSampling {
    /// Offsets `u` in `[max(s e^{-span}, floor), s)`, log-spaced.
    fn offsets(&self, s: f64) -> Vec<f64> {
        let lo = (s * (-self.span).exp()).max(self.u_floor).min(s);
        let a = (lo / s).ln();
        sample_grid(a, 0.0, self.step).into_iter().filter(|&t| t < 0.0).map(|t| s * t.exp()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub s_epsilon: f64,
    pub sup_error: f64,
    pub pass: bool,
    /// `(s_n, measured sup)` for every trial that was run.
    pub trials: Vec<(f64, f64)>,
}

/// Find the largest trial scale at which `f` is within `eps` of the
/// candidate profiles on both arcs.
pub fn verify_sap(
    f: &SapFunction,
    z0: CirclePoint,
    eps: f64,
    candidate: &ApProfile,
    sampling: &ArcSampling,
) -> Result<VerifyReport, SapError> {
    let mut trials = Vec::new();
    for n in 0..=sampling.halvings {
        let s_n = candidate.s * 0.5_f64.powi(n as i32);
        let mut sup = 0.0_f64;
        for k in [Orientation::Minus, Orientation::Plus] {
            for u in sampling.offsets(s_n) {
                let v = f.eval_boundary(z0.angle() + k.sign() * u)?;
                let c = candidate.value_at_offset(k, u);
                sup = sup.max(v.distance(&c));
            }
        }
        trials.push((s_n, sup));
        if sup < eps {
            return Ok(VerifyReport { s_epsilon: s_n, sup_error: sup, pass: true, trials });
        }
    }
    let (best_s, best_sup) = trials.iter().copied().fold((f64::NAN, f64::INFINITY), |b, t| if t.1 < b.1 { t } else { b });
    Err(SapError::VerificationFailed { best_sup, best_s, trials })
}

/// Strip coordinate of the arc point at offset `u`: `ln(2 tan(u/2))`.
pub fn offset_to_strip(u: f64) -> f64 {
    (2.0 * (0.5 * u).tan()).ln()
}

/// Inverse of [`offset_to_strip`].
pub fn strip_to_offset(x: f64) -> f64 {
    2.0 * (0.5 * x.exp()).atan()
}

/// Boundary data transported to the strip lines, with the image `x < x_max`
/// of the arcs of length `s`.
#[derive(Debug, Clone)]
pub struct StripPullback {
    pub pair: BoundaryPair,
    pub x_max: f64,
}

/// Transport the boundary values near `z0` to the two strip lines: the arc
/// leaving counterclockwise lands on `R`, the clockwise one on `R + i pi`.
pub fn strip_pullback(f: &SapFunction, z0: CirclePoint, s: f64) -> Result<StripPullback, SapError> {
    if !(s > 0.0 && s < PI) {
        return Err(SapError::InvalidScale(s));
    }
    let bound = f.bound_estimate();
    let shared = Arc::new(f.clone());
    let make = |k: f64| {
        let g = Arc::clone(&shared);
        let t0 = z0.angle();
        EvaluationOracle::new(f.dim(), bound, move |x| {
            let u = strip_to_offset(x);
            let theta = t0 + k * u;
            g.eval_boundary(theta)
                .or_else(|_| g.eval_boundary(t0 + k * (u * (1.0 - 1e-9)).max(1e-12)))
                .unwrap_or_else(|_| VectorValue::zeros(g.dim()))
        })
    };
    let pair = BoundaryPair::new(make(1.0).into(), make(-1.0).into())?;
    Ok(StripPullback { pair, x_max: offset_to_strip(s) })
}

/// Disk point for a strip point under the chart at `z0`.
pub fn strip_to_disk(z0: CirclePoint, w: Complex64) -> Result<Complex64, SapError> {
    Ok(MobiusChart::new(z0).from_strip(w)?)
}

/// Options for [`local_approximant`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalOptions {
    /// Apply Bochner–Fejér smoothing to the profiles.
    pub smoothing: bool,
    /// Share of `eps` granted to the smoothing error.
    pub smoothing_fraction: f64,
    /// Starting scale when `z0` carries no profile.
    pub regular_scale: f64,
    pub sampling: ArcSampling,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { smoothing: true, smoothing_fraction: 0.5, regular_scale: 1.0, sampling: ArcSampling::default() }
    }
}

/// A strip function approximating `f` near `z0` in the chart coordinates.
#[derive(Debug, Clone)]
pub struct LocalApproximant {
    pub z0: CirclePoint,
    pub h: StripHarmonic,
    pub s_epsilon: f64,
    pub sup_error: f64,
    pub kernel: Option<KernelSpec>,
    /// Certified bound on the smoothing error of the profiles.
    pub smoothing_bound: f64,
    pub trials: Vec<(f64, f64)>,
}

impl LocalApproximant {
    /// Value at a disk point through the chart `Log phi_{z0}`.
    pub fn eval_disk(&self, z: Complex64) -> Result<VectorValue, SapError> {
        let w = MobiusChart::new(self.z0).to_strip(z)?;
        Ok(self.h.eval(w))
    }
}

/// Build the strip approximant at `z0` from the (smoothed) profiles, or from
/// the boundary value when `f` is continuous at `z0`, and find an arc scale
/// on which it is within `eps` of the pulled-back data.
pub fn local_approximant(
    f: &SapFunction,
    z0: CirclePoint,
    eps: f64,
    opts: &LocalOptions,
) -> Result<LocalApproximant, SapError> {
    let (h, s0, kernel, smoothing_bound) = match f.profile_at(z0) {
        Some(p) => {
            let (ApData::Poly(minus), ApData::Poly(plus)) = (&p.h_minus, &p.h_plus) else {
                return Err(SapError::Unsupported(
                    "local approximants need exponential-sum profiles".into(),
                ));
            };
            // profile variable t = ln(u/s), strip variable x ~ ln u
            let shift = -p.s.ln();
            let (mut qm, mut qp) = (minus.shift(shift), plus.shift(shift));
            let mut kernel = None;
            let mut bound = 0.0;
            if opts.smoothing {
                let net = choose_kernel_for_net(&[qm.clone(), qp.clone()], opts.smoothing_fraction * eps)?;
                qm = apply_operator(&net.spec, &qm)?.result;
                qp = apply_operator(&net.spec, &qp)?.result;
                bound = net.max_certified();
                kernel = Some(net.spec);
            }
            (StripHarmonic::new(qp, qm)?, p.s, kernel, bound)
        }
        None => {
            let c = f.eval_boundary(z0.angle())?;
            let basis = crate::ap::BasisSet::unit();
            (StripHarmonic::constant(TrigPolynomial::constant(basis, c)), opts.regular_scale.min(PI * 0.999), None, 0.0)
        }
    };
    let mut trials = Vec::new();
    for n in 0..=opts.sampling.halvings {
        let s_n = s0 * 0.5_f64.powi(n as i32);
        let mut sup = 0.0_f64;
        for k in [Orientation::Minus, Orientation::Plus] {
            let y = if k == Orientation::Plus { 0.0 } else { PI };
            for u in opts.sampling.offsets(s_n) {
                let v = f.eval_boundary(z0.angle() + k.sign() * u)?;
                let w = Complex64::new(offset_to_strip(u), y);
                sup = sup.max(v.distance(&h.eval(w)));
            }
        }
        trials.push((s_n, sup));
        if sup < eps {
            return Ok(LocalApproximant { z0, h, s_epsilon: s_n, sup_error: sup, kernel, smoothing_bound, trials });
        }
    }
    let (best_s, best_sup) = trials.iter().copied().fold((f64::NAN, f64::INFINITY), |b, t| if t.1 < b.1 { t } else { b });
    Err(SapError::VerificationFailed { best_sup, best_s, trials })
}

/// Controls for periodic quadrature of the disk Poisson integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskQuadrature {
    pub initial_nodes: usize,
    pub max_nodes: usize,
    pub tol: f64,
}

impl Default for DiskQuadrature {
    fn default() -> Self {
        Self { initial_nodes: 256, max_nodes: 1 << 18, tol: 1e-10 }
    }
}

/// `(1/2pi) int P_r(theta - t) f(e^{it}) dt` by the periodic trapezoid
/// rule with node doubling.
pub fn poisson_disk(
    f: impl Fn(f64) -> Result<VectorValue, SapError>,
    dim: usize,
    z: Complex64,
    plan: &DiskQuadrature,
) -> Result<VectorValue, SapError> {
    let r = z.norm();
    if r >= 1.0 {
        return Err(SapError::Unsupported(format!("poisson_disk needs |z| < 1, got {r}")));
    }
    let theta = z.arg();
    let kernel = |t: f64| (1.0 - r * r) / (1.0 - 2.0 * r * (theta - t).cos() + r * r);
    // offset keeps nodes away from typical singular angles
    let offset = 0.618_033_988_749_894_9 * TAU / plan.initial_nodes as f64;
    let mut n = plan.initial_nodes.max(4);
    let mut sum = VectorValue::zeros(dim);
    for j in 0..n {
        let t = offset + TAU * j as f64 / n as f64;
        sum.axpy(Complex64::new(kernel(t), 0.0), &f(t)?);
    }
    let mut estimate = sum.scale_real(1.0 / n as f64);
    let mut last_change = f64::INFINITY;
    while 2 * n <= plan.max_nodes {
        for j in 0..n {
            let t = offset + TAU * (j as f64 + 0.5) / n as f64;
            sum.axpy(Complex64::new(kernel(t), 0.0), &f(t)?);
        }
        n *= 2;
        let refined = sum.scale_real(1.0 / n as f64);
        last_change = refined.distance(&estimate);
        estimate = refined;
        if last_change <= plan.tol {
            return Ok(estimate);
        }
    }
    Err(SapError::NonConverged { last_change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ap::BasisSet;
    use crate::disk::GeneratorSpec;

    fn constant(c: f64) -> TrigPolynomial {
        TrigPolynomial::constant(BasisSet::unit(), VectorValue::real(c))
    }

    fn generator_expr() -> Arc<HoloExpr> {
        Arc::new(HoloExpr::generator(GeneratorSpec::new(1.0, 0.0, PI).unwrap()).unwrap())
    }

    #[test]
    fn no_singular_points_is_background() {
        let f = build_sap(SingularSet::default(), vec![], Background::Constant(VectorValue::real(2.0)), vec![]).unwrap();
        assert_eq!(f.eval_boundary(1.234).unwrap(), VectorValue::real(2.0));
    }

    #[test]
    fn constant_profiles() {
        let z0 = CirclePoint::new(0.0).unwrap();
        let p = ApProfile::new(z0, 0.5, constant(3.0).into(), constant(3.0).into()).unwrap();
        let f = build_sap(SingularSet::new(&[0.0]).unwrap(), vec![p], Background::Constant(VectorValue::real(3.0)), vec![Some(0.2)]).unwrap();
        for th in [0.1, 0.6, 2.0, -0.3, -0.65] {
            assert!((f.eval_boundary(th).unwrap().components[0].re - 3.0).abs() < 1e-15);
        }
        assert!(matches!(f.eval_boundary(0.0), Err(SapError::AtSingularPoint(_))));
    }

    #[test]
    fn overlapping_blends_rejected() {
        let s = SingularSet::new(&[0.0, 0.5]).unwrap();
        let mk = |a: f64| ApProfile::new(CirclePoint::new(a).unwrap(), 0.2, constant(1.0).into(), constant(1.0).into()).unwrap();
        let r = build_sap(s, vec![mk(0.0), mk(0.5)], Background::Constant(VectorValue::real(1.0)), vec![Some(0.1), Some(0.1)]);
        assert!(matches!(r, Err(SapError::OverlappingBlends { .. })));
    }

    fn generator_sap_blended() -> SapFunction {
        // exact generator profiles at both endpoints, blended into the generator itself
        let g = generator_expr();
        let s = SingularSet::new(&[0.0, PI]).unwrap();
        let profiles = s
            .points()
            .iter()
            .map(|&z0| {
                let (m, p) = g.profiles_at(z0, 0.01).unwrap();
                ApProfile::new(z0, 0.01, m.into(), p.into()).unwrap()
            })
            .collect();
        build_sap(s, profiles, Background::Expr(g), vec![Some(0.05), Some(0.05)]).unwrap()
    }

    #[test]
    fn blended_generator_matches_generator() {
        let f = generator_sap_blended();
        let g = generator_expr();
        for th in sample_grid(-0.06, 0.06, 0.0007) {
            if th.abs() < 1e-12 {
                continue;
            }
            let a = f.eval_boundary(th).unwrap();
            let b = g.eval(Complex64::from_polar(1.0, th)).unwrap();
            let u = th.abs();
            let k = if th > 0.0 { Orientation::Plus } else { Orientation::Minus };
            let prof = f.profile_at(CirclePoint::new(0.0).unwrap()).unwrap();
            let pure = prof.value_at_offset(k, u).distance(&b);
            if u < 0.01 {
                assert!(a.distance(&b) <= pure + 1e-12, "{th}");
                assert!(a.distance(&b) < 4.0 * u * 1.0f64.exp(), "{th} {}", a.distance(&b) / u);
                let expect = if th > 0.0 { 1.0 } else { 1.0f64.exp() };
                assert!((a.norm_value() - expect).abs() < 1e-9, "{th}");
            } else {
                // the collar moves toward the background
                assert!(a.distance(&b) <= pure + 1e-12, "{th}");
            }
        }
    }

    #[test]
    fn verify_round_trip_and_failure() {
        let f = generator_sap_blended();
        let z0 = CirclePoint::new(0.0).unwrap();
        let prof = f.profile_at(z0).unwrap().clone();
        let r = verify_sap(&f, z0, 1e-6, &prof, &ArcSampling::default()).unwrap();
        assert_eq!(r.s_epsilon, prof.s);
        let zero = TrigPolynomial::zero(BasisSet::unit(), 1);
        let bad = ApProfile::new(z0, 0.5, zero.clone().into(), zero.into()).unwrap();
        match verify_sap(&f, z0, 0.1, &bad, &ArcSampling::default()) {
            Err(SapError::VerificationFailed { best_sup, .. }) => assert!((best_sup - 1.0f64.exp()).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_pullback_candidate_passes_on_expression() {
        let g = generator_expr();
        let f = SapFunction::from_expr(g.clone(), &SingularSet::default(), 0.5).unwrap();
        for z0 in f.singular().points() {
            let prof = f.profile_at(*z0).unwrap().clone();
            let r = verify_sap(&f, *z0, 1e-6, &prof, &ArcSampling::default()).unwrap();
            assert!(r.pass && r.sup_error < 1e-6);
        }
    }

    #[test]
    fn pullback_of_generator_is_exponential() {
        let g = generator_expr();
        let f = SapFunction::from_expr(g.clone(), &SingularSet::default(), 0.5).unwrap();
        let z0 = CirclePoint::new(0.0).unwrap();
        let pb = strip_pullback(&f, z0, 0.5).unwrap();
        let model = g.local_model(z0).unwrap();
        for x in [-20.0, -10.0, -6.0] {
            let a = pb.pair.bottom.evaluate(x);
            let b = model.strip.eval_unchecked(Complex64::new(x, 0.0));
            assert!(a.distance(&b) < 1e-2 * x.exp().max(1e-12) + 1e-12);
            let a = pb.pair.top.evaluate(x);
            let b = model.strip.eval_unchecked(Complex64::new(x, PI));
            assert!(a.distance(&b) < 1e-2 * x.exp().max(1e-12) + 1e-12);
        }
    }

    #[test]
    fn offsets_round_trip() {
        for u in [1e-9, 1e-3, 0.5, 2.0, 3.0] {
            assert!((strip_to_offset(offset_to_strip(u)) - u).abs() < 1e-12 * u.max(1.0));
        }
        let ch = MobiusChart::new(CirclePoint::new(0.7).unwrap());
        for u in [1e-4, 0.3, 2.5] {
            for k in [-1.0, 1.0] {
                let w = ch.to_strip(Complex64::from_polar(1.0, 0.7 + k * u)).unwrap();
                assert!((w.re - offset_to_strip(u)).abs() < 1e-9);
                assert!((w.im - if k > 0.0 { 0.0 } else { PI }).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn local_approximant_of_generator() {
        let g = generator_expr();
        let f = SapFunction::from_expr(g, &SingularSet::default(), 0.5).unwrap();
        let z0 = CirclePoint::new(0.0).unwrap();
        let la = local_approximant(&f, z0, 0.05, &LocalOptions::default()).unwrap();
        assert!(la.sup_error < 0.05);
        assert!(la.h.is_holomorphic());
        assert!(la.kernel.is_some());
    }

    #[test]
    fn local_approximant_regular_point_is_constant() {
        let f = SapFunction::continuous(Background::Expr(Arc::new(HoloExpr::polynomial(&[
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]))));
        let z0 = CirclePoint::new(1.0).unwrap();
        let la = local_approximant(&f, z0, 0.1, &LocalOptions::default()).unwrap();
        assert!(la.sup_error < 0.1);
        let v = la.h.eval(Complex64::new(3.0, 1.0));
        assert!((v.components[0] - z0.point()).norm() < 1e-12);
    }

    #[test]
    fn poisson_disk_examples() {
        let plan = DiskQuadrature::default();
        let z = Complex64::new(0.3, -0.5);
        let c = poisson_disk(|_| Ok(VectorValue::real(2.0)), 1, z, &plan).unwrap();
        assert!((c.components[0].re - 2.0).abs() < 1e-10);
        let id = poisson_disk(|t| Ok(VectorValue::scalar(Complex64::from_polar(1.0, t))), 1, z, &plan).unwrap();
        assert!((id.components[0] - z).norm() < 1e-10);
        let re = poisson_disk(|t| Ok(VectorValue::real(t.cos())), 1, z, &plan).unwrap();
        assert!((re.components[0] - Complex64::new(z.re, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn json_round_trip() {
        let singular = SingularSet::new(&[0.0, PI]).unwrap();
        let f = SapFunction::from_expr(generator_expr(), &singular, 0.5).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: SapFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        for th in [0.3, 1.7, -2.0, 3.0] {
            assert_eq!(back.eval_boundary(th).unwrap(), f.eval_boundary(th).unwrap());
        }
    }

    #[test]
    fn json_table_background() {
        let text = r#"{
            "singular": [0.0],
            "profiles": [{"z0": 0.0, "s": 0.5,
                "h_minus": {"basis": [1.0], "terms": [{"coeff": [[2.0, 0.0]], "freq": ["0"]}]},
                "h_plus": {"basis": [1.0], "terms": [{"coeff": [[2.0, 0.0]], "freq": ["0"]}]}}],
            "background": {"kind": "table", "angles": [0.0, 3.0], "values": [[[2.0, 0.0]], [[4.0, 0.0]]]},
            "blend": [0.2]
        }"#;
        let f: SapFunction = serde_json::from_str(text).unwrap();
        assert_eq!(f.eval_boundary(0.3).unwrap(), VectorValue::real(2.0));
        assert!((f.eval_boundary(1.5).unwrap().components[0].re - 3.0).abs() < 1e-12);
        let bad = text.replace("\"blend\": [0.2]", "\"blend\": [3.5]");
        assert!(serde_json::from_str::<SapFunction>(&bad).is_err());
    }
}
