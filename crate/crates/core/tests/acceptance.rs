//! Acceptance run: one line per criterion, exit status 1 if any fails.
//!
//! `cargo test --release -p sapx-core --test acceptance [-- name ...]`
//! runs everything or only the criteria whose name contains an argument.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::process::ExitCode;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sapx_core::ap::sup_norm_estimate;
use sapx_core::disk::{sap_generator, GeneratorSpec};
use sapx_core::fejer::{apply_operator, build_kernel, choose_kernel_for_net};
use sapx_core::glue::{
    approximate, build_cocycle, resolve_cocycle, ChartKind, Cover, CoverLayout, RadialTaper, cauchy_transform, AnnularSupport, Approximation, CauchyPlan, DiskData, GlueConfig};
use sapx_core::grid::{Grid, GridField, Region};
use sapx_core::glue::pipeline::{CocycleReport, ResolveReport};
use sapx_core::holo::{HoloExpr, HoloTerm};
use sapx_core::polydisk::{tensor_approximate, tensor_eval, Factor, TensorFunction, TensorOptions, TensorTerm};
use sapx_core::sap::SingularSet;
use sapx_core::strip::{poisson_extend_strip, BoundaryPair, QuadraturePlan, StripPoint};
use sapx_core::{ApData, BasisSet, Complex64, EvaluationOracle, Frequency, KernelSpec, Term, TrigPolynomial, VectorValue};

// pinned tolerances
const NET_EPS: f64 = 0.05;
const NET_RUNTIME_S: f64 = 10.0;
const KERNEL_FLOOR: f64 = -1e-9;
const OPERATOR_SLACK: f64 = 1e-6;
const STRIP_TOL: f64 = 1e-6;
const STRIP_CONSTANT_TOL: f64 = 1e-10;
const CAUCHY_ONE_TOL: f64 = 1e-3;
const CAUCHY_FD_FACTOR: f64 = 10.0;
const CAUCHY_MIN_ORDER: f64 = 1.0;
const PIPELINE_EPS: [f64; 3] = [0.2, 0.1, 0.05];
const MAX_C_HAT: f64 = 20.0;
const DBAR_FACTOR: f64 = 10.0;
const GLUE_TOL: f64 = 1e-6;
const PIPELINE_RUNTIME_S: f64 = 300.0;
const WIDTHS: [f64; 3] = [0.2, 0.1, 0.05];
const WIDTH_SPREAD: f64 = 2.0;
const GENERATOR_TOL: f64 = 1e-9;
const TENSOR_EPS: f64 = 0.1;
const COCYCLE_TOL: f64 = 1e-12;
const CHART_DBAR_FACTOR: f64 = 10.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn generator_spec() -> GeneratorSpec {
    GeneratorSpec::new(1.0, 1.0, -1.0).unwrap()
}

fn generator_expr() -> Arc<HoloExpr> {
    Arc::new(HoloExpr::generator(generator_spec()).unwrap())
}

struct PipelineRun {
    eps: f64,
    seconds: f64,
    approx: Approximation,
}

// shared by the pipeline, tensor and cocycle criteria
fn generator_runs() -> &'static [PipelineRun] {
    static RUNS: OnceLock<Vec<PipelineRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let data = DiskData::Expr(generator_expr());
        PIPELINE_EPS
            .iter()
            .map(|&eps| {
                let t = Instant::now();
                let approx = approximate(&data, &SingularSet::default(), eps, &GlueConfig::default()).expect("pipeline run");
                PipelineRun { eps, seconds: t.elapsed().as_secs_f64(), approx }
            })
            .collect()
    })
}

// --- 1 and 3: net kernels -------------------------------------------------

fn basis() -> BasisSet {
    BasisSet::from_betas(vec![1.0, SQRT_2]).unwrap()
}

fn two_tone(low: Vec<Complex64>, high: Vec<Complex64>) -> TrigPolynomial {
    let dim = low.len();
    let terms = vec![
        Term { freq: Frequency::from_integers(&[1, 0]), coeff: VectorValue::new(low) },
        Term { freq: Frequency::from_integers(&[0, 1]), coeff: VectorValue::new(high) },
    ];
    TrigPolynomial::new(basis(), dim, terms).unwrap()
}

struct NetRun {
    certified: f64,
    recomputed: f64,
    measured: f64,
    seconds: f64,
}

fn net_run(f: &TrigPolynomial) -> NetRun {
    let t = Instant::now();
    let net = choose_kernel_for_net(std::slice::from_ref(f), NET_EPS).unwrap();
    let out = apply_operator(&net.spec, f).unwrap();
    let measured = sup_norm_estimate(&ApData::Poly(f.sub(&out.result).unwrap()), (0.0, 1000.0), 0.01).grid_max;
    let seconds = t.elapsed().as_secs_f64();
    // sum ||b_l|| (1 - damping_l), term by term
    let recomputed = f.terms().iter().map(|term| term.coeff.norm_value() * (1.0 - damping(&net.spec, &term.freq))).sum();
    NetRun { certified: net.certified[0], recomputed, measured, seconds }
}

fn damping(spec: &KernelSpec, freq: &Frequency) -> f64 {
    let nums: Vec<i64> = freq
        .coords()
        .iter()
        .zip(spec.denominators())
        .map(|(q, m)| {
            let x = *q * Rational64::from_integer(*m);
            assert!(x.is_integer());
            x.to_integer()
        })
        .collect();
    nums.iter().zip(spec.orders()).map(|(&k, &n)| if k.abs() < n { 1.0 - k.abs() as f64 / n as f64 } else { 0.0 }).product()
}

fn net_line(r: &NetRun) -> String {
    format!("certified {:.4e}, recomputed {:.4e}, measured {:.4e}, {:.2}s", r.certified, r.recomputed, r.measured, r.seconds)
}

fn net_ok(r: &NetRun) -> bool {
    r.certified <= NET_EPS
        && r.measured <= r.certified
        && (r.recomputed - r.certified).abs() <= 1e-14 * r.certified.max(1.0)
        && r.seconds < NET_RUNTIME_S
}

fn criterion_bohr() -> Outcome {
    let r = net_run(&two_tone(vec![c(1.0, 0.0)], vec![c(2.0, 0.0)]));
    outcome(net_ok(&r), net_line(&r))
}

fn criterion_vector() -> Outcome {
    let scalar = net_run(&two_tone(vec![c(1.0, 0.0)], vec![c(2.0, 0.0)]));
    // same sup norms per coefficient as the scalar case
    let vector = net_run(&two_tone(vec![c(1.0, 0.0), c(-1.0, 0.0)], vec![c(2.0, 0.0), c(0.0, 2.0)]));
    let same = vector.certified.to_bits() == scalar.certified.to_bits();
    outcome(net_ok(&vector) && same, format!("{}; bit-identical to scalar: {same}", net_line(&vector)))
}

// --- 2: kernel properties on the torus lift -------------------------------

/// Value of an exponential sum whose frequencies are `nu_j / m_j` in the
/// basis, at torus angles `psi_j = beta_j t / m_j`.
fn torus_value(p: &TrigPolynomial, denominators: &[i64], psi: &[f64]) -> Vec<Complex64> {
    let mut acc = vec![c(0.0, 0.0); p.dim()];
    for term in p.terms() {
        let phase: f64 = term
            .freq
            .coords()
            .iter()
            .zip(denominators)
            .zip(psi)
            .map(|((q, m), a)| (*q * Rational64::from_integer(*m)).to_integer() as f64 * a)
            .sum();
        let e = Complex64::from_polar(1.0, phase);
        for (a, b) in acc.iter_mut().zip(&term.coeff.components) {
            *a += b * e;
        }
    }
    acc
}

fn torus_points(sizes: &[usize]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for &m in sizes {
        out = out.into_iter().flat_map(|p| (0..m).map(move |a| [p.clone(), vec![TAU * a as f64 / m as f64]].concat())).collect();
    }
    out
}

fn sup_on(points: &[Vec<f64>], p: &TrigPolynomial, denominators: &[i64]) -> f64 {
    points.iter().map(|psi| torus_value(p, denominators, psi).iter().map(|v| v.norm()).fold(0.0, f64::max)).fold(0.0, f64::max)
}

fn criterion_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let (mut min_kernel, mut worst_excess, mut worst_zero) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut polys = 0;
    for _ in 0..50 {
        let rank = rng.gen_range(1..=2);
        let basis = BasisSet::from_betas([1.0, SQRT_2][..rank].to_vec()).unwrap();
        let dens: Vec<i64> = (0..rank).map(|_| rng.gen_range(1..=3)).collect();
        let orders: Vec<i64> = (0..rank).map(|_| rng.gen_range(1..=16)).collect();
        let spec = KernelSpec::new(basis.clone(), dens.clone(), orders.clone()).unwrap();
        let kernel = build_kernel(&spec).unwrap();

        let zero = kernel.coefficient(&Frequency::zero(rank));
        worst_zero = worst_zero.max((zero.components[0] - 1.0).norm());
        let dense: Vec<usize> = orders.iter().map(|&n| 4 * n as usize + 8).collect();
        for psi in torus_points(&dense) {
            min_kernel = min_kernel.min(torus_value(&kernel, &dens, &psi)[0].re);
        }
        for k in 0..2000 {
            min_kernel = min_kernel.min(kernel.evaluate(0.05 * k as f64).components[0].re);
        }

        for _ in 0..2 {
            let reach: Vec<i64> = orders.iter().map(|n| n + 2).collect();
            let terms: Vec<Term> = (0..rng.gen_range(1..=6))
                .map(|_| {
                    let coords = reach.iter().zip(&dens).map(|(&k, &m)| Rational64::new(rng.gen_range(-k..=k), m)).collect();
                    let coeff = VectorValue::scalar(c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                    Term { freq: Frequency::new(coords), coeff }
                })
                .collect();
            let f = TrigPolynomial::new(basis.clone(), 1, terms).unwrap();
            let tf = apply_operator(&spec, &f).unwrap().result;
            // enough points per axis that the discrete mean of f(. + s) K(s) is exact
            let sizes: Vec<usize> = reach.iter().zip(&orders).map(|(k, n)| 2 * (k + n) as usize + 1).collect();
            let pts = torus_points(&sizes);
            worst_excess = worst_excess.max(sup_on(&pts, &tf, &dens) - sup_on(&pts, &f, &dens));
            polys += 1;
        }
    }
    let pass = min_kernel >= KERNEL_FLOOR && worst_zero == 0.0 && worst_excess <= OPERATOR_SLACK;
    outcome(
        pass,
        format!("50 specs, min kernel {min_kernel:.3e}, zero coefficient error {worst_zero:e}, {polys} polynomials, max(|Tf|-|f|) {worst_excess:.3e}"),
    )
}

// --- 4: strip Poisson oracle ----------------------------------------------

fn oracle(value: impl Fn(f64) -> Complex64 + Send + Sync + 'static, bound: f64) -> ApData {
    ApData::Oracle(EvaluationOracle::new(1, bound, move |t| VectorValue::scalar(value(t))))
}

fn criterion_strip() -> Outcome {
    let plan = QuadraturePlan::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let bp = BoundaryPair::new(oracle(|t| Complex64::from_polar(1.0, t), 1.0), oracle(|_| c(0.0, 0.0), 0.0)).unwrap();
    let constant = c(0.3, -0.7);
    let flat = BoundaryPair::new(oracle(move |_| constant, constant.norm()), oracle(move |_| constant, constant.norm())).unwrap();
    let (mut err, mut err_const) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let w = c(rng.gen_range(-20.0..20.0), rng.gen_range(0.05..PI - 0.05));
        let p = StripPoint::new(w).unwrap();
        let exact = Complex64::from_polar(1.0, w.re) * ((PI - w.im).sinh() / PI.sinh());
        err = err.max((poisson_extend_strip(&bp, p, &plan).unwrap().components[0] - exact).norm());
        err_const = err_const.max((poisson_extend_strip(&flat, p, &plan).unwrap().components[0] - constant).norm());
    }
    outcome(err <= STRIP_TOL && err_const <= STRIP_CONSTANT_TOL, format!("100 points, max error {err:.3e}, constant data {err_const:.3e}"))
}

// --- 5: Cauchy transform oracle -------------------------------------------

fn criterion_cauchy() -> Outcome {
    let plan = CauchyPlan::default();
    let disk = AnnularSupport::disk(1.0);
    let inside = |z: Complex64| z.norm() <= 0.8;

    let grid = Grid::unit_square(256);
    let one = |z: Complex64| (z.norm() <= 1.0).then(|| VectorValue::real(1.0));
    let one = cauchy_transform(&one, 1, disk, grid, Region::Disk { radius: 0.8 }, inside, &plan);
    let conj_error = one.active_nodes().map(|(i, j)| (one.value(i, j).unwrap()[0] - grid.node(i, j).conj()).norm()).fold(0.0, f64::max);

    // h = |zeta|^2 has transform z zbar^2 / 2; the error is compared on the
    // same lattice of spacing 1/16 for every grid
    let density = |z: Complex64| (z.norm() <= 1.0).then(|| VectorValue::real(z.norm_sqr()));
    let mut errors = Vec::new();
    for n in [65, 129, 257] {
        let grid = Grid::unit_square(n);
        let stride = (n - 1) / 32;
        let origin = grid.node(0, 0);
        let index = |z: Complex64| (((z.re - origin.re) / grid.h).round() as usize, ((z.im - origin.im) / grid.h).round() as usize);
        let on_lattice = |i: usize, j: usize| i.is_multiple_of(stride) && j.is_multiple_of(stride) && inside(grid.node(i, j));
        let stencil = |z: Complex64| {
            let (i, j) = index(z);
            on_lattice(i, j) || on_lattice(i + 1, j) || on_lattice(i.wrapping_sub(1), j) || on_lattice(i, j + 1) || on_lattice(i, j.wrapping_sub(1))
        };
        let big = cauchy_transform(&density, 1, disk, grid, Region::Disk { radius: 1.0 }, stencil, &plan);
        let dbar = big.dbar();
        let e = dbar
            .active_nodes()
            .filter(|&(i, j)| on_lattice(i, j))
            .map(|(i, j)| (dbar.value(i, j).unwrap()[0] - grid.node(i, j).norm_sqr()).norm())
            .fold(0.0, f64::max);
        errors.push((grid.h, e));
    }
    let orders: Vec<f64> = errors.windows(2).map(|p| (p[0].1 / p[1].1).ln() / (p[0].0 / p[1].0).ln()).collect();
    let pass = conj_error <= CAUCHY_ONE_TOL
        && errors.iter().all(|(h, e)| *e < CAUCHY_FD_FACTOR * h)
        && orders.iter().all(|&o| o >= CAUCHY_MIN_ORDER);
    let fd: Vec<String> = errors.iter().map(|(h, e)| format!("h={h:.4}: {e:.2e}")).collect();
    outcome(
        pass,
        format!("|H - conj z| {conj_error:.2e} at 256^2; d-bar error {}; orders {:.2}, {:.2}", fd.join(", "), orders[0], orders[1]),
    )
}

// --- 6: pipeline self-recovery --------------------------------------------

fn singular_distance(z: Complex64) -> f64 {
    let spec = generator_spec();
    [spec.x, spec.y].iter().map(|p| (z - p.point()).norm()).fold(f64::INFINITY, f64::min)
}

fn criterion_pipeline() -> Outcome {
    let spec = generator_spec();
    let mut pass = true;
    let mut c_hat = 0.0f64;
    let mut lines = Vec::new();
    for run in generator_runs() {
        let r = &run.approx.report;
        let grid = *run.approx.fields.result.grid();
        let result = &run.approx.fields.result;
        // sup error and d-bar residual recomputed from the result field
        let sup_error = result
            .active_nodes()
            .map(|(i, j)| {
                let z = grid.node(i, j);
                (result.value(i, j).unwrap()[0] - sap_generator(&spec, z).unwrap()).norm()
            })
            .fold(0.0, f64::max);
        let dbar = result.dbar();
        let residual = dbar
            .active_nodes()
            .filter(|&(i, j)| singular_distance(grid.node(i, j)) >= r.config.residual_exclusion)
            .map(|(i, j)| dbar.norm_at(i, j).unwrap())
            .fold(0.0, f64::max);
        let threshold = DBAR_FACTOR * grid.h;
        c_hat = c_hat.max(sup_error / run.eps);
        pass &= residual < threshold
            && (sup_error - r.sup_error).abs() <= 1e-12
            && r.glue_mismatch <= GLUE_TOL
            && run.seconds < PIPELINE_RUNTIME_S;
        lines.push(format!(
            "eps {}: ratio {:.3}, d-bar {:.2e} < {:.2e}, mismatch {:.1e}, {:.1}s",
            run.eps,
            sup_error / run.eps,
            residual,
            threshold,
            r.glue_mismatch,
            run.seconds
        ));
    }
    pass &= c_hat <= MAX_C_HAT;
    outcome(pass, format!("C_hat {c_hat:.3}; {}", lines.join("; ")))
}

// --- 7: width bound -------------------------------------------------------

fn criterion_width() -> Outcome {
    let grid = Grid::unit_square(257);
    let plan = CauchyPlan::default();
    let profile = |z: Complex64| {
        let th = z.arg();
        th.cos() + 0.5 * (3.0 * th).sin()
    };
    let mut constants: Vec<(&str, Vec<f64>)> = vec![("constant", Vec::new()), ("angular", Vec::new())];
    let mut oracle_error = 0.0f64;
    for w in WIDTHS {
        let band = AnnularSupport { inner: 1.0 - w, outer: 1.0 };
        // H is holomorphic off the band, so its sup over the disk is taken on
        // nodes in the band or next to it
        let targets = |z: Complex64| z.norm() < 1.0 && z.norm() >= band.inner - 2.0 * grid.h;
        let one = |z: Complex64| band.contains(z).then(|| VectorValue::real(1.0));
        let h = cauchy_transform(&one, 1, band, grid, Region::Annulus { inner: band.inner, outer: 1.0 }, targets, &plan);
        for (i, j) in h.active_nodes() {
            let z = grid.node(i, j);
            let exact = if z.norm() >= band.inner { z.conj() - band.inner * band.inner / z } else { c(0.0, 0.0) };
            oracle_error = oracle_error.max((h.value(i, j).unwrap()[0] - exact).norm());
        }
        constants[0].1.push(h.sup_norm() / w);

        let angular = |z: Complex64| band.contains(z).then(|| VectorValue::real(profile(z)));
        let sup_h = (0..4096).map(|k| profile(Complex64::from_polar(1.0, TAU * k as f64 / 4096.0)).abs()).fold(0.0, f64::max);
        let h = cauchy_transform(&angular, 1, band, grid, Region::Annulus { inner: band.inner, outer: 1.0 }, targets, &plan);
        constants[1].1.push(h.sup_norm() / (w * sup_h));
    }
    let spread = |v: &[f64]| v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min);
    let fitted = constants.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0, f64::max);
    let pass = constants.iter().all(|(_, v)| spread(v) <= WIDTH_SPREAD) && oracle_error < 1e-6;
    let parts: Vec<String> = constants
        .iter()
        .map(|(name, v)| format!("{name} density C = {:.3}/{:.3}/{:.3} (spread {:.3})", v[0], v[1], v[2], spread(v)))
        .collect();
    let pipeline: Vec<String> = generator_runs()
        .iter()
        .filter_map(|run| run.approx.report.stage_errors.first_glue.width_bound.map(|b| format!("w {:.4}: {:.3}", b.width, b.constant)))
        .collect();
    outcome(
        pass,
        format!(
            "fitted C {fitted:.3}; {}; closed-form check {oracle_error:.1e}; pipeline densities (diagnostic) {}",
            parts.join("; "),
            pipeline.join(", ")
        ),
    )
}

// --- 8: generator boundary structure --------------------------------------

fn criterion_generator() -> Outcome {
    const POINTS: usize = 10_000;
    let spec = generator_spec();
    let (x, y) = (spec.x.angle(), spec.y.angle());
    let arc = |from: f64, to: f64, k: usize| {
        let span = (to - from).rem_euclid(TAU);
        from + span * (k as f64 + 0.5) / POINTS as f64
    };
    let compiled = spec.compile().unwrap();
    let mut modulus_error = 0.0f64;
    // modulus 1 from x to y, e^lambda from y to x
    for (from, to, expected) in [(x, y, 1.0), (y, x, spec.lambda.exp())] {
        for k in 0..POINTS {
            let v = compiled.boundary(arc(from, to, k)).unwrap();
            modulus_error = modulus_error.max((v.norm() - expected).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let (l1, l2) = (0.7, -1.3);
    let g1 = GeneratorSpec::new(l1, 1.0, -1.0).unwrap();
    let g2 = GeneratorSpec::new(l2, 1.0, -1.0).unwrap();
    let g12 = GeneratorSpec::new(l1 + l2, 1.0, -1.0).unwrap();
    let mut group_error = 0.0f64;
    for _ in 0..POINTS {
        let z = Complex64::from_polar(rng.gen_range(0.0f64..0.999).sqrt(), rng.gen_range(0.0..TAU));
        let lhs = sap_generator(&g1, z).unwrap() * sap_generator(&g2, z).unwrap();
        group_error = group_error.max((lhs - sap_generator(&g12, z).unwrap()).norm());
    }
    let pass = modulus_error <= GENERATOR_TOL && group_error <= GENERATOR_TOL;
    outcome(pass, format!("2 x {POINTS} boundary points, modulus error {modulus_error:.2e}; group law error {group_error:.2e}"))
}

// --- 9: tensor layer ------------------------------------------------------

fn criterion_tensor() -> Outcome {
    let opts = TensorOptions { keep_closed_forms: false, ..TensorOptions::default() };
    let term = |factors: Vec<Factor>| TensorFunction::new(factors.len(), vec![TensorTerm { weight: c(1.0, 0.0), factors }]).unwrap();
    let f = term(vec![Factor::Form(generator_expr()), Factor::Form(generator_expr())]);
    let t = Instant::now();
    let (g, report) = tensor_approximate(&f, TENSOR_EPS, &opts).unwrap();
    let seconds = t.elapsed().as_secs_f64();

    // telescoping bound and torus error recomputed from the factor data
    let reports = &report.factors;
    let bound = reports[0].sup_replacement * reports[1].circle_error + reports[0].circle_error * reports[1].sup_original;
    let circle = report.sampling.circle();
    let mut measured = 0.0f64;
    for &z1 in &circle {
        for &z2 in &circle {
            let d = tensor_eval(&f, &[z1, z2]).unwrap().distance(&tensor_eval(&g, &[z1, z2]).unwrap());
            measured = measured.max(d);
        }
    }
    let consistent = (bound - report.total_bound).abs() <= 1e-12 * bound && (measured - report.measured_error).abs() <= 1e-12;

    let direct = generator_runs().iter().find(|r| r.eps == TENSOR_EPS).map(|r| &r.approx).expect("pipeline run at the tensor epsilon");
    let (reduced, _) = tensor_approximate(&term(vec![Factor::Form(generator_expr())]), TENSOR_EPS, &opts).unwrap();
    let identical = match &reduced.terms()[0].factors[0] {
        Factor::Approximated(a) => a.fields.result == direct.fields.result && a.report.sup_error.to_bits() == direct.report.sup_error.to_bits(),
        _ => false,
    };
    let pass = report.measured_error <= report.total_bound && consistent && identical;
    outcome(
        pass,
        format!(
            "measured {:.4e} <= bound {:.4e} (recomputed {bound:.4e}), sampling radius {:.4}, {} run(s), {seconds:.1}s; n = 1 bit-identical: {identical}",
            report.measured_error,
            report.total_bound,
            report.sampling.radius,
            report.pipelines.len()
        ),
    )
}

// --- 10: cocycle laws -----------------------------------------------------

fn fixture_runs() -> Vec<(String, Approximation)> {
    let coarse = GlueConfig { grid_nodes: 129, ..GlueConfig::default() };
    let spec = generator_spec();
    let fixtures: Vec<(&str, HoloExpr, SingularSet, f64)> = vec![
        (
            "generator + z/10",
            HoloExpr::new(
                1,
                vec![
                    HoloTerm::Generator { coeff: vec![c(1.0, 0.0)], spec },
                    HoloTerm::Polynomial { coeffs: vec![vec![c(0.0, 0.0)], vec![c(0.1, 0.0)]] },
                ],
            )
            .unwrap(),
            SingularSet::default(),
            0.1,
        ),
        (
            "vector generator",
            HoloExpr::new(2, vec![HoloTerm::Generator { coeff: vec![c(1.0, 0.0), c(0.0, 2.0)], spec }]).unwrap(),
            SingularSet::default(),
            0.2,
        ),
        ("polynomial, extra point", HoloExpr::polynomial(&[c(0.5, 0.0), c(1.0, 0.0)]), SingularSet::new(&[2.0]).unwrap(), 0.1),
    ];
    fixtures
        .into_iter()
        .map(|(name, expr, extra, eps)| {
            let a = approximate(&DiskData::Expr(Arc::new(expr)), &extra, eps, &coarse).expect("fixture run");
            (format!("{name} (129)"), a)
        })
        .collect()
}

/// Twenty charts on a half-width band, so that charts two apart still meet,
/// carrying unrelated holomorphic functions.
fn dense_cover_laws() -> (CocycleReport, ResolveReport, f64) {
    let grid = Grid::unit_square(129);
    let band = AnnularSupport { inner: 0.5, outer: 1.0 };
    let centers = (0..20).map(|k| (TAU * k as f64 / 20.0, ChartKind::Regular)).collect();
    let cover = Cover::from_centers(centers, band, &CoverLayout::default()).unwrap();
    let locals: Vec<GridField> = (0..cover.len())
        .map(|k| {
            let scale = c(1.0 + k as f64, 0.5 * k as f64);
            GridField::from_fn(grid, Region::Chart { index: k }, 1, |z| cover.in_chart(k, z), |z| {
                VectorValue::scalar(scale * z.exp() + z.powi(k as i32 % 5))
            })
        })
        .collect();
    let cocycle = build_cocycle(&cover, &locals, |_| true, None).unwrap();
    let resolution = resolve_cocycle(&cover, &cocycle, &locals, RadialTaper { start: 0.5, width: 0.1 }, |_| true).unwrap();
    (cocycle.report, resolution.report, grid.h)
}

fn criterion_cocycle() -> Outcome {
    let mut laws: Vec<(String, CocycleReport, ResolveReport, f64)> = generator_runs()
        .iter()
        .map(|r| {
            let e = &r.approx.report.stage_errors;
            (format!("generator eps {}", r.eps), e.cocycle.clone(), e.resolve.clone(), r.approx.report.grid.h)
        })
        .collect();
    for (name, a) in fixture_runs() {
        let e = a.report.stage_errors;
        laws.push((name, e.cocycle, e.resolve, a.report.grid.h));
    }
    let (co, res, h) = dense_cover_laws();
    laws.push(("dense cover (129)".into(), co, res, h));

    let mut pass = true;
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut pairs, mut triples) = (0, 0);
    for (name, co, res, h) in &laws {
        let scale = co.sup_norm.max(1.0);
        let chart_tol = CHART_DBAR_FACTOR * h * h * scale;
        let ok = co.pairs > 0
            && co.antisymmetry <= COCYCLE_TOL * scale
            && co.triple_identity <= COCYCLE_TOL * scale
            && res.cocycle_recovery <= COCYCLE_TOL * scale
            && res.chart_dbar_mismatch <= chart_tol;
        if !ok {
            eprintln!("  cocycle laws fail on {name}: {co:?} {res:?}");
        }
        pass &= ok;
        pairs += co.pairs;
        triples += co.triples;
        worst.0 = worst.0.max(co.antisymmetry / scale);
        worst.1 = worst.1.max(co.triple_identity / scale);
        worst.2 = worst.2.max(res.cocycle_recovery / scale);
        worst.3 = worst.3.max(res.chart_dbar_mismatch / chart_tol);
    }
    pass &= triples > 0;
    outcome(
        pass,
        format!(
            "{} runs, {pairs} overlaps, {triples} triple overlaps; relative antisymmetry {:.1e}, triple identity {:.1e}, recovery {:.1e}; chart d-bar mismatch at {:.2} of 10 h^2 max(1, sup c)",
            laws.len(),
            worst.0,
            worst.1,
            worst.2,
            worst.3
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    ("bohr_approximation", criterion_bohr),
    ("kernel_properties", criterion_kernel),
    ("vector_valued", criterion_vector),
    ("strip_poisson", criterion_strip),
    ("cauchy_transform", criterion_cauchy),
    ("pipeline_recovery", criterion_pipeline),
    ("width_bound", criterion_width),
    ("generator_boundary", criterion_generator),
    ("tensor_layer", criterion_tensor),
    ("cocycle_laws", criterion_cocycle),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, run)) in CRITERIA.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        ran += 1;
        if !o.pass {
            failed += 1;
        }
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2} {name}: {} [{:.1}s]", k + 1, o.detail, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {ran} passed", ran - failed);
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
