//! One function per subcommand. Each writes `report.json` into the output
//! directory and returns whether its checks passed; `Err` is an input error.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sapx_core::ap::{bohr_mean_averaged, sample_grid, sup_norm_estimate, ApData, AveragingPlan, BasisSet, EvaluationOracle, Frequency, Term};
use sapx_core::disk::CirclePoint;
use sapx_core::fejer::{apply_operator, choose_kernel_for_net_capped, KernelError, DEFAULT_TERM_CAP};
use sapx_core::glue::{approximate, GlueConfig, GlueError, Stage};
use sapx_core::polydisk::{tensor_approximate, Factor, TensorError, TensorFunction, TensorOptions};
use sapx_core::sap::{verify_sap, ApProfile, ArcSampling, SapError, SapFunction, SingularSet};
use sapx_core::strip::{poisson_extend_strip, BoundaryPair, QuadraturePlan, StripHarmonic, StripPoint};
use sapx_core::{Complex64, TrigPolynomial, VectorValue};

use crate::io;
use crate::Common;

#[derive(Serialize)]
struct Report<'a, C, R> {
    command: &'static str,
    flags: &'a Common,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    config: &'a C,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<R>,
}

struct Run<'a, C> {
    command: &'static str,
    common: &'a Common,
    epsilon: Option<f64>,
    config: &'a C,
}

impl<C: Serialize> Run<'_, C> {
    fn finish<R: Serialize>(&self, pass: bool, error: Option<String>, result: Option<R>) -> Result<bool> {
        io::ensure_dir(&self.common.out)?;
        let report = Report {
            command: self.command,
            flags: self.common,
            epsilon: self.epsilon,
            config: self.config,
            pass,
            error,
            result,
        };
        io::write_json(&io::out_file(&self.common.out, "report.json"), &report)?;
        Ok(pass)
    }
}

/// Shape of the seeded random exponential sums over the basis `{1, sqrt 2}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomFixture {
    pub terms: usize,
    pub max_numerator: i64,
    pub dim: usize,
}

impl Default for RandomFixture {
    fn default() -> Self {
        Self { terms: 3, max_numerator: 3, dim: 1 }
    }
}

impl RandomFixture {
    fn generate(&self, seed: u64) -> Result<TrigPolynomial> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.max_numerator.max(0);
        let terms = (0..self.terms)
            .map(|_| {
                let freq = Frequency::from_integers(&[rng.gen_range(-m..=m), rng.gen_range(-m..=m)]);
                let coeff = (0..self.dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                Term { freq, coeff: VectorValue::new(coeff.collect()) }
            })
            .collect();
        Ok(TrigPolynomial::new(BasisSet::from_betas(vec![1.0, SQRT_2])?, self.dim.max(1), terms)?)
    }
}

fn input_path(common: &Common) -> Result<&Path> {
    common.input.as_deref().ok_or_else(|| anyhow!("--input is required"))
}

fn load_family(common: &Common, random: &RandomFixture) -> Result<Vec<TrigPolynomial>> {
    match (&common.input, common.seed) {
        (Some(path), _) => {
            // one exponential sum or a list of them
            let text = io::read_text(path)?;
            let family = if text.trim_start().starts_with('[') {
                io::parse_json::<Vec<TrigPolynomial>>(&text, path)?
            } else {
                vec![io::parse_json::<TrigPolynomial>(&text, path)?]
            };
            if family.is_empty() {
                bail!("{}: empty family", path.display());
            }
            Ok(family)
        }
        (None, Some(seed)) => Ok(vec![random.generate(seed)?]),
        (None, None) => bail!("either --input or --seed is required"),
    }
}

fn coefficient_header(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).flat_map(|k| [format!("{prefix}re_{k}"), format!("{prefix}im_{k}")]).collect()
}

fn coefficient_cells(v: &VectorValue) -> Vec<String> {
    v.components.iter().flat_map(|c| [c.re.to_string(), c.im.to_string()]).collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumConfig {
    /// When set, every exact coefficient is compared with a windowed mean.
    pub averaging: Option<AveragingPlan>,
    pub random: RandomFixture,
}

#[derive(Serialize)]
struct MeanCheck {
    frequency: f64,
    exact: VectorValue,
    averaged: VectorValue,
    converged: bool,
}

#[derive(Serialize)]
struct SpectrumResult {
    polynomial: TrigPolynomial,
    terms: usize,
    coefficient_bound: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    means: Vec<MeanCheck>,
}

pub fn spectrum(common: &Common) -> Result<bool> {
    let config: SpectrumConfig = io::read_config(common.config.as_deref())?;
    let run = Run { command: "spectrum", common, epsilon: None, config: &config };
    let p = load_family(common, &config.random)?.swap_remove(0);

    io::ensure_dir(&common.out)?;
    let mut w = io::csv_writer(&io::out_file(&common.out, "spectrum.csv"))?;
    let mut header = vec!["frequency".to_string(), "coords".to_string()];
    header.extend(coefficient_header("", p.dim()));
    w.write_record(&header)?;
    for (freq, coeff) in p.spectrum() {
        let mut row = vec![freq.value(p.basis()).to_string(), freq.to_strings().join(" ")];
        row.extend(coefficient_cells(&coeff));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut means = Vec::new();
    if let Some(plan) = &config.averaging {
        let data = ApData::Poly(p.clone());
        for (freq, exact) in p.spectrum() {
            let lambda = freq.value(p.basis());
            let (averaged, converged) = match bohr_mean_averaged(&data, lambda, plan) {
                Ok(m) => (m.value, true),
                Err(sapx_core::ApError::NonConverged { estimate, .. }) => (estimate.value, false),
                Err(e) => return Err(e.into()),
            };
            means.push(MeanCheck { frequency: lambda, exact, averaged, converged });
        }
    }
    let pass = means.iter().all(|m| m.converged);
    let result = SpectrumResult { terms: p.terms().len(), coefficient_bound: p.coefficient_bound(), polynomial: p, means };
    run.finish(pass, None, Some(result))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Sampling window and step for the measured sup of `f - Tf`.
    pub window: [f64; 2],
    pub step: f64,
    pub term_cap: usize,
    pub random: RandomFixture,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { window: [0.0, 1000.0], step: 0.01, term_cap: DEFAULT_TERM_CAP, random: RandomFixture::default() }
    }
}

#[derive(Serialize)]
struct KernelMember {
    certified: f64,
    measured_sup: f64,
    smoothed: TrigPolynomial,
}

#[derive(Serialize)]
struct KernelResult {
    basis: Vec<f64>,
    denominators: Vec<i64>,
    orders: Vec<i64>,
    term_count: u128,
    max_certified: f64,
    members: Vec<KernelMember>,
}

pub fn kernel(common: &Common, eps: f64) -> Result<bool> {
    let config: KernelConfig = io::read_config(common.config.as_deref())?;
    if !(eps > 0.0) || !(config.step > 0.0) || !(config.window[1] > config.window[0]) {
        bail!("epsilon, step and window length must be positive");
    }
    let run = Run { command: "kernel", common, epsilon: Some(eps), config: &config };
    let family = load_family(common, &config.random)?;
    let net = match choose_kernel_for_net_capped(&family, eps, config.term_cap) {
        Ok(n) => n,
        Err(e @ KernelError::Unreachable { .. }) => return run.finish::<()>(false, Some(e.to_string()), None),
        Err(e) => return Err(e.into()),
    };

    io::ensure_dir(&common.out)?;
    let mut w = io::csv_writer(&io::out_file(&common.out, "dampings.csv"))?;
    w.write_record(["member", "coords", "factor", "status"])?;
    let mut members = Vec::with_capacity(family.len());
    let mut pass = net.max_certified() <= eps;
    for (i, (f, &certified)) in family.iter().zip(&net.certified).enumerate() {
        let out = apply_operator(&net.spec, f)?;
        for d in &out.dampings {
            let status = serde_json::to_value(d.status)?;
            w.write_record([i.to_string(), d.freq.join(" "), d.factor.to_string(), status.as_str().unwrap_or("").into()])?;
        }
        let residual = ApData::Poly(f.sub(&out.result)?);
        let measured_sup = sup_norm_estimate(&residual, (config.window[0], config.window[1]), config.step).grid_max;
        pass &= measured_sup <= certified * (1.0 + 1e-12) + 1e-15;
        members.push(KernelMember { certified, measured_sup, smoothed: out.result });
    }
    w.flush()?;
    let result = KernelResult {
        basis: net.spec.basis().betas().to_vec(),
        denominators: net.spec.denominators().to_vec(),
        orders: net.spec.orders().to_vec(),
        term_count: net.spec.term_count(),
        max_certified: net.max_certified(),
        members,
    };
    run.finish(pass, None, Some(result))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtendConfig {
    pub quadrature: QuadraturePlan,
    /// Largest accepted distance between quadrature and closed form.
    pub tolerance: f64,
    /// Default sample points: `x` from `x_range` in `x_steps` steps at each height.
    pub x_range: [f64; 2],
    pub x_steps: usize,
    pub heights: Vec<f64>,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        Self {
            quadrature: QuadraturePlan::default(),
            tolerance: 1e-6,
            x_range: [-3.0, 3.0],
            x_steps: 12,
            heights: vec![FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4],
        }
    }
}

#[derive(Deserialize)]
struct ExtendInput {
    bottom: TrigPolynomial,
    top: TrigPolynomial,
    #[serde(default)]
    points: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct ExtendResult {
    points: usize,
    max_error: f64,
    tolerance: f64,
    holomorphic_data: bool,
}

pub fn extend(common: &Common) -> Result<bool> {
    let config: ExtendConfig = io::read_config(common.config.as_deref())?;
    let run = Run { command: "extend", common, epsilon: None, config: &config };
    let input: ExtendInput = io::read_json(input_path(common)?)?;
    let exact = StripHarmonic::new(input.bottom.clone(), input.top.clone())?;
    // oracles force the quadrature path; exponential sums would be summed in closed form
    let pair = BoundaryPair::new(
        EvaluationOracle::from_polynomial(&input.bottom).into(),
        EvaluationOracle::from_polynomial(&input.top).into(),
    )?;
    let points = match input.points {
        Some(p) => p,
        None => {
            let [a, b] = config.x_range;
            let step = (b - a) / config.x_steps.max(1) as f64;
            config.heights.iter().flat_map(|&y| sample_grid(a, b, step).into_iter().map(move |x| [x, y])).collect()
        }
    };

    io::ensure_dir(&common.out)?;
    let mut w = io::csv_writer(&io::out_file(&common.out, "extension.csv"))?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(coefficient_header("quadrature_", pair.dim()));
    header.extend(coefficient_header("exact_", pair.dim()));
    header.push("error".into());
    w.write_record(&header)?;
    let mut max_error = 0.0_f64;
    for [x, y] in &points {
        let z = Complex64::new(*x, *y);
        let point = StripPoint::new(z).with_context(|| format!("sample point ({x}, {y})"))?;
        if !point.is_interior() {
            bail!("sample point ({x}, {y}) is not inside the strip (0 < y < {PI})");
        }
        let q = match poisson_extend_strip(&pair, point, &config.quadrature) {
            Ok(v) => v,
            Err(e) => {
                w.flush()?;
                return run.finish::<()>(false, Some(format!("at ({x}, {y}): {e}")), None);
            }
        };
        let e = exact.eval(z);
        let err = q.distance(&e);
        max_error = max_error.max(err);
        let mut row = vec![x.to_string(), y.to_string()];
        row.extend(coefficient_cells(&q));
        row.extend(coefficient_cells(&e));
        row.push(err.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    let result = ExtendResult {
        points: points.len(),
        max_error,
        tolerance: config.tolerance,
        holomorphic_data: exact.is_holomorphic(),
    };
    run.finish(max_error <= config.tolerance, None, Some(result))
}

#[derive(Deserialize)]
struct Candidate {
    s: f64,
    h_minus: TrigPolynomial,
    h_plus: TrigPolynomial,
}

#[derive(Deserialize)]
struct VerifyInput {
    function: SapFunction,
    point: f64,
    #[serde(default)]
    epsilon: Option<f64>,
    candidate: Candidate,
}

#[derive(Serialize)]
struct VerifyResult {
    point: f64,
    s_epsilon: Option<f64>,
    sup_error: f64,
    trials: usize,
}

pub fn sap_verify(common: &Common, epsilon: Option<f64>) -> Result<bool> {
    let sampling: ArcSampling = io::read_config(common.config.as_deref())?;
    let input: VerifyInput = io::read_json(input_path(common)?)?;
    let eps = epsilon.or(input.epsilon).ok_or_else(|| anyhow!("--epsilon or an `epsilon` field is required"))?;
    if !(eps > 0.0) {
        bail!("epsilon must be positive");
    }
    let run = Run { command: "sap-verify", common, epsilon: Some(eps), config: &sampling };
    let z0 = CirclePoint::new(input.point)?;
    let c = input.candidate;
    let candidate = ApProfile::new(z0, c.s, c.h_minus.into(), c.h_plus.into())?;
    let (pass, error, trials, result) = match verify_sap(&input.function, z0, eps, &candidate, &sampling) {
        Ok(r) => {
            let res = VerifyResult { point: input.point, s_epsilon: Some(r.s_epsilon), sup_error: r.sup_error, trials: r.trials.len() };
            (true, None, r.trials, res)
        }
        Err(SapError::VerificationFailed { best_sup, best_s, trials }) => {
            let msg = format!("no trial scale passed: best sup {best_sup:e} at s = {best_s:e}");
            let res = VerifyResult { point: input.point, s_epsilon: None, sup_error: best_sup, trials: trials.len() };
            (false, Some(msg), trials, res)
        }
        Err(e) => return Err(e.into()),
    };
    io::ensure_dir(&common.out)?;
    let mut w = io::csv_writer(&io::out_file(&common.out, "trials.csv"))?;
    w.write_record(["s", "sup_error"])?;
    for (s, sup) in &trials {
        w.write_record([s.to_string(), sup.to_string()])?;
    }
    w.flush()?;
    run.finish(pass, error, Some(result))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub glue: GlueConfig,
    /// Largest accepted `sup |f - F_eps| / eps`.
    pub max_constant: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { glue: GlueConfig::default(), max_constant: 20.0 }
    }
}

/// Pipeline failures that are findings about the data, not bad input.
fn is_verification(e: &GlueError) -> bool {
    !matches!(e, GlueError::InvalidConfig(_) | GlueError::Stage { stage: Stage::Input, .. })
}

pub fn pipeline(common: &Common, eps: f64, fields_dir: Option<&Path>, singular: &[f64]) -> Result<bool> {
    let config: PipelineConfig = io::read_config(common.config.as_deref())?;
    let run = Run { command: "pipeline", common, epsilon: Some(eps), config: &config };
    let factor: Factor = io::read_json(input_path(common)?)?;
    let data = factor.disk_data().expect("parsed factors are not glued");
    let extra = SingularSet::new(singular)?;
    let approx = match approximate(&data, &extra, eps, &config.glue) {
        Ok(a) => a,
        Err(e) if is_verification(&e) => return run.finish::<()>(false, Some(e.to_string()), None),
        Err(e) => return Err(e.into()),
    };
    if let Some(dir) = fields_dir {
        io::ensure_dir(dir)?;
        for (name, field) in approx.fields.named() {
            let path = dir.join(format!("{name}.csv"));
            field.write_csv(io::csv_file(&path)?).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let r = &approx.report;
    let pass = r.constants.total <= config.max_constant
        && r.dbar_residual < r.dbar_threshold
        && r.glue_mismatch <= config.glue.glue_tolerance;
    run.finish(pass, None, Some(r))
}

/// Factors given as strings name files, relative to the tensor file.
fn resolve_factor_files(value: &mut Value, base: &Path) -> Result<()> {
    let Some(terms) = value.get_mut("terms").and_then(Value::as_array_mut) else { return Ok(()) };
    for (t, term) in terms.iter_mut().enumerate() {
        let Some(factors) = term.get_mut("factors").and_then(Value::as_array_mut) else { continue };
        for (k, factor) in factors.iter_mut().enumerate() {
            if let Value::String(name) = factor {
                let path = base.join(&*name);
                let text = io::read_text(&path).with_context(|| format!("terms[{t}].factors[{k}]"))?;
                *factor = io::parse_json(&text, &path)?;
            }
        }
    }
    Ok(())
}

pub fn tensor(common: &Common, eps: f64, fields_dir: Option<&Path>) -> Result<bool> {
    let options: TensorOptions = io::read_config(common.config.as_deref())?;
    let run = Run { command: "tensor", common, epsilon: Some(eps), config: &options };
    let path = input_path(common)?;
    let mut value: Value = io::read_json(path)?;
    resolve_factor_files(&mut value, path.parent().unwrap_or(Path::new(".")))?;
    let f: TensorFunction = serde_path_to_error::deserialize(value).map_err(|e| io::located(path, e))?;
    let (approx, report) = match tensor_approximate(&f, eps, &options) {
        Ok(out) => out,
        Err(TensorError::Factor { source, .. }) if !is_verification(&source) => return Err(source.into()),
        Err(e @ TensorError::Factor { .. }) => return run.finish::<()>(false, Some(e.to_string()), None),
        Err(e) => return Err(e.into()),
    };
    if let Some(dir) = fields_dir {
        io::ensure_dir(dir)?;
        for (t, term) in approx.terms().iter().enumerate() {
            for (k, factor) in term.factors.iter().enumerate() {
                if let Factor::Approximated(a) = factor {
                    let path = dir.join(format!("factor_{t}_{k}.csv"));
                    a.fields.result.write_csv(io::csv_file(&path)?).with_context(|| format!("writing {}", path.display()))?;
                }
            }
        }
    }
    let pass = report.measured_error <= report.total_bound;
    run.finish(pass, None, Some(&report))
}
