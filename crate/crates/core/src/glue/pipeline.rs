//! The end-to-end run: local approximants on a cover of a boundary band,
//! their cocycle and its resolution, the first gluing over the band and the
//! second gluing against the interior.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cauchy::{cauchy_transform, cauchy_transform_field, AnnularSupport, CauchyPlan, WidthBound};
use super::cover::{build_cover, Chart, ChartKind, Cover, CoverLayout};
use super::partition::{RadialPartition, RadialTaper, SMOOTHSTEP_SLOPE};
use super::{GlueError, Stage};
use crate::disk::{CirclePoint, GeneratorSpec, MobiusChart};
use crate::fejer::KernelSpec;
use crate::grid::{holo_residual_where, Grid, GridField, Region};
use crate::holo::HoloExpr;
use crate::sap::{local_approximant, poisson_disk, DiskQuadrature, LocalOptions, SapFunction, SingularSet};
use crate::strip::StripHarmonic;
use crate::vector::{complex_list, VectorValue};

/// The function being approximated, with a way to evaluate it on the closed disk.
#[derive(Debug, Clone)]
pub enum DiskData {
    /// Closed-form holomorphic data.
    Expr(Arc<HoloExpr>),
    /// Boundary data; interior values by the Poisson integral.
    Boundary { sap: SapFunction, quadrature: DiskQuadrature },
}

impl DiskData {
    pub fn dim(&self) -> usize {
        match self {
            DiskData::Expr(e) => e.dim(),
            DiskData::Boundary { sap, .. } => sap.dim(),
        }
    }

    /// Points where the data is singular.
    pub fn singular(&self) -> SingularSet {
        match self {
            DiskData::Expr(e) => SingularSet::from_points(e.singular_points()),
            DiskData::Boundary { sap, .. } => sap.singular().clone(),
        }
    }

    pub fn eval(&self, z: Complex64) -> Result<VectorValue, GlueError> {
        match self {
            DiskData::Expr(e) => e.eval(z).map_err(GlueError::at(Stage::Input)),
            DiskData::Boundary { sap, quadrature } => {
                if z.norm() >= 1.0 {
                    sap.eval_boundary(z.arg()).map_err(GlueError::at(Stage::Input))
                } else {
                    poisson_disk(|t| sap.eval_boundary(t), sap.dim(), z, quadrature).map_err(GlueError::at(Stage::Input))
                }
            }
        }
    }

    /// Boundary description with profiles at every point of `singular`.
    fn sap_function(&self, singular: &SingularSet, scale: f64) -> Result<SapFunction, GlueError> {
        match self {
            DiskData::Expr(e) => SapFunction::from_expr(e.clone(), singular, scale).map_err(GlueError::at(Stage::Local)),
            DiskData::Boundary { sap, .. } => Ok(sap.clone()),
        }
    }
}

/// Local approximant at a singular point in disk coordinates:
/// `q(z) H(Log phi_{z0}(z))` with the corrective factor
/// `q(z) = 1 - ((z0 - z) / (2 z0))^power`.
#[derive(Debug, Clone)]
pub struct SingularApproximant {
    pub z0: CirclePoint,
    pub strip: StripHarmonic,
    pub power: u32,
    pub kernel: Option<KernelSpec>,
    pub smoothing_bound: f64,
    /// Arc scale on which the strip function was verified.
    pub s_epsilon: f64,
    pub arc_error: f64,
    /// Radius of the disk around `z0` on which the approximant was measured.
    pub radius: f64,
    pub disk_error: f64,
}

impl SingularApproximant {
    pub fn corrective_factor(&self, z: Complex64) -> Complex64 {
        let z0 = self.z0.point();
        Complex64::new(1.0, 0.0) - ((z0 - z) / (2.0 * z0)).powu(self.power)
    }

    pub fn eval(&self, z: Complex64) -> Result<VectorValue, GlueError> {
        let w = MobiusChart::new(self.z0).to_strip(z).map_err(GlueError::at(Stage::Local))?;
        Ok(self.strip.eval(w).scale(self.corrective_factor(z)))
    }
}

/// The holomorphic function used on one chart.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum LocalFunction {
    Singular(SingularApproximant),
    /// The data itself (holomorphic across the chart).
    Exact,
    /// `f(factor z)`.
    Dilation { factor: f64 },
}

impl LocalFunction {
    pub fn eval(&self, data: &DiskData, z: Complex64) -> Result<VectorValue, GlueError> {
        match self {
            LocalFunction::Singular(s) => s.eval(z),
            LocalFunction::Exact => data.eval(z),
            LocalFunction::Dilation { factor } => data.eval(z * *factor),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlueConfig {
    /// Nodes per axis on `[-1, 1]^2`.
    pub grid_nodes: usize,
    /// Width of the annulus `A`; chosen from the chart radii when absent.
    pub annulus_width: Option<f64>,
    pub max_annulus_width: f64,
    /// Automatic width as a fraction of the smallest singular chart radius.
    pub width_per_radius: f64,
    /// Extra halvings of the width while `sup |H| >= eps`.
    pub width_halvings: usize,
    /// The width never drops below this many grid steps.
    pub min_width_cells: f64,
    pub layout: CoverLayout,
    pub corrective_power: u32,
    pub local: LocalOptions,
    /// Log scale at which closed-form profiles are taken.
    pub profile_scale: f64,
    pub chart_radius_max: f64,
    pub chart_radius_shrink: f64,
    /// Regular charts of boundary data use `f((1 - dilation) z)`.
    pub dilation: f64,
    pub cauchy_angular_nodes: usize,
    /// Gauss–Legendre panel length along rays, in grid steps.
    pub cauchy_panel_cells: f64,
    /// See [`CauchyPlan::hole_series`].
    pub cauchy_hole_series: Option<f64>,
    /// Residual checks skip nodes this close to a singular point.
    pub residual_exclusion: f64,
    /// The d-bar residual of the result must stay below this many grid steps.
    pub residual_factor: f64,
    pub glue_tolerance: f64,
}

impl Default for GlueConfig {
    fn default() -> Self {
        Self {
            grid_nodes: 257,
            annulus_width: None,
            max_annulus_width: 0.1,
            width_per_radius: 0.25,
            width_halvings: 3,
            min_width_cells: 3.0,
            layout: CoverLayout::default(),
            corrective_power: 3,
            local: LocalOptions { smoothing_fraction: 0.25, ..LocalOptions::default() },
            profile_scale: 0.5,
            chart_radius_max: 0.6,
            chart_radius_shrink: 0.85,
            dilation: 0.01,
            cauchy_angular_nodes: 256,
            cauchy_panel_cells: 8.0,
            cauchy_hole_series: Some(0.95),
            residual_exclusion: 0.1,
            residual_factor: 10.0,
            glue_tolerance: 1e-6,
        }
    }
}

impl GlueConfig {
    fn validate(&self) -> Result<(), GlueError> {
        let bad = |msg: &str| Err(GlueError::InvalidConfig(msg.into()));
        if self.grid_nodes < 9 {
            return bad("grid_nodes must be at least 9");
        }
        if let Some(w) = self.annulus_width {
            if !(w > 0.0 && w < 0.5) {
                return bad("annulus_width must lie in (0, 0.5)");
            }
        }
        if !(self.max_annulus_width > 0.0 && self.max_annulus_width < 0.5) {
            return bad("max_annulus_width must lie in (0, 0.5)");
        }
        if !(self.chart_radius_shrink > 0.0 && self.chart_radius_shrink < 1.0) {
            return bad("chart_radius_shrink must lie in (0, 1)");
        }
        if !(self.dilation >= 0.0 && self.dilation < 1.0) {
            return bad("dilation must lie in [0, 1)");
        }
        if self.corrective_power == 0 {
            return bad("corrective_power must be positive");
        }
        if !(self.local.smoothing_fraction > 0.0 && self.local.smoothing_fraction < 1.0) {
            return bad("local.smoothing_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    fn plan(&self, grid: &Grid) -> CauchyPlan {
        CauchyPlan {
            angular_nodes: self.cauchy_angular_nodes,
            panel_length: self.cauchy_panel_cells * grid.h,
            hole_series: self.cauchy_hole_series,
        }
    }
}

/// Annuli and disks of one run, all centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry {
    /// `A = { annulus_inner <= |z| < 1 }`.
    pub annulus_inner: f64,
    pub annulus_width: f64,
    /// Support of the first d-bar density (`A` plus a taper zone).
    pub band: AnnularSupport,
    /// `D' = { |z| < inner_disk_radius }`.
    pub inner_disk_radius: f64,
    /// `A' = { annulus_inner < |z| < 2 }`.
    pub outer_chart_inner: f64,
}

impl Geometry {
    pub fn new(width: f64) -> Self {
        let annulus_inner = 1.0 - width;
        Self {
            annulus_inner,
            annulus_width: width,
            band: AnnularSupport { inner: 1.0 - 1.5 * width, outer: 1.0 },
            inner_disk_radius: annulus_inner + 0.5 * width,
            outer_chart_inner: annulus_inner,
        }
    }

    fn taper(&self) -> RadialTaper {
        RadialTaper { start: self.band.inner, width: self.annulus_inner - self.band.inner }
    }
}

/// `rho_A'` rises from 0 at the inner edge of `A` to 1 at the edge of `D'`;
/// `rho_D' = 1 - rho_A'`.
pub fn radial_partition(geometry: &Geometry) -> RadialPartition {
    RadialPartition { inner: geometry.annulus_inner, width: geometry.inner_disk_radius - geometry.annulus_inner }
}

/// Largest `|grad rho_A'|` on a dense radial sample, times `w(A) / 2`.
pub fn measured_radial_slope(p: &RadialPartition, width: f64) -> f64 {
    let n = 20_000;
    let worst = (0..=n)
        .map(|k| {
            let r = p.inner + p.width * k as f64 / n as f64;
            2.0 * p.eval(Complex64::new(r, 0.0)).dbar_outer.norm()
        })
        .fold(0.0, f64::max);
    worst * width / 2.0
}

fn band_mask(band: AnnularSupport) -> impl Fn(Complex64) -> bool + Sync + Copy {
    move |z: Complex64| {
        let r = z.norm();
        r >= band.inner && r < 1.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CocycleReport {
    pub pairs: usize,
    pub triples: usize,
    pub sup_norm: f64,
    pub antisymmetry: f64,
    pub triple_identity: f64,
    /// Largest finite-difference `|d-bar c_kj|` away from the singular set.
    pub dbar_residual: f64,
}

/// `c_kj = f_k - f_j` on the overlaps, stored for `k < j`.
#[derive(Debug, Clone)]
pub struct Cocycle {
    values: BTreeMap<(usize, usize), GridField>,
    dim: usize,
    pub report: CocycleReport,
}

impl Cocycle {
    pub fn pairs(&self) -> impl Iterator<Item = (&(usize, usize), &GridField)> {
        self.values.iter()
    }

    /// `c_kj` at a node, for any order of the indices.
    pub fn at(&self, k: usize, j: usize, i: usize, jj: usize) -> Option<Vec<Complex64>> {
        use std::cmp::Ordering::*;
        match k.cmp(&j) {
            Equal => Some(vec![Complex64::new(0.0, 0.0); self.dim]),
            Less => self.values.get(&(k, j))?.value(i, jj).map(<[Complex64]>::to_vec),
            Greater => self.values.get(&(j, k))?.value(i, jj).map(|v| v.iter().map(|c| -c).collect()),
        }
    }
}

/// Differences of the chart functions on every overlap, with the
/// antisymmetry, triple-overlap and holomorphy checks.
pub fn build_cocycle(
    cover: &Cover,
    locals: &[GridField],
    include: impl Fn(Complex64) -> bool + Copy,
    threshold: Option<f64>,
) -> Result<Cocycle, GlueError> {
    if locals.len() != cover.len() {
        return Err(GlueError::CoverMismatch(format!("{} chart functions for {} charts", locals.len(), cover.len())));
    }
    let dim = locals.first().map_or(1, GridField::dim);
    let diff = |a: &[Complex64], b: &[Complex64], o: &mut [Complex64]| {
        for (o, (x, y)) in o.iter_mut().zip(a.iter().zip(b)) {
            *o = x - y;
        }
    };
    let mut values = BTreeMap::new();
    let mut report = CocycleReport::default();
    for (k, j) in cover.overlaps() {
        let region = Region::Overlap { first: k, second: j };
        let ckj = locals[k].zip_with(&locals[j], region.clone(), diff)?;
        let cjk = locals[j].zip_with(&locals[k], region, diff)?;
        for (i, jj) in ckj.active_nodes() {
            let a = ckj.value(i, jj).expect("active");
            let b = cjk.value(i, jj).expect("same nodes");
            let s: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            report.antisymmetry = report.antisymmetry.max(ckj.norm_kind().of(&s));
        }
        report.sup_norm = report.sup_norm.max(ckj.sup_norm());
        report.dbar_residual = report.dbar_residual.max(0.5 * holo_residual_where(&ckj, include)?);
        values.insert((k, j), ckj);
    }
    report.pairs = values.len();
    let mut cocycle = Cocycle { values, dim, report };
    for (k, j, l) in cover.triple_overlaps() {
        cocycle.report.triples += 1;
        let ckj = &cocycle.values[&(k, j)];
        for (i, jj) in ckj.active_nodes().collect::<Vec<_>>() {
            if let (Some(a), Some(b), Some(c)) = (cocycle.at(k, j, i, jj), cocycle.at(j, l, i, jj), cocycle.at(k, l, i, jj)) {
                let s: Vec<Complex64> = (0..dim).map(|d| a[d] + b[d] - c[d]).collect();
                cocycle.report.triple_identity = cocycle.report.triple_identity.max(ckj.norm_kind().of(&s));
            }
        }
    }
    if let Some(t) = threshold {
        if cocycle.report.dbar_residual > t {
            return Err(GlueError::NotHolomorphic { stage: Stage::Cocycle, residual: cocycle.report.dbar_residual, threshold: t });
        }
    }
    Ok(cocycle)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResolveReport {
    pub sup_tilde: f64,
    pub sup_density: f64,
    /// Largest `|(f~_j - f~_k) - c_kj|` on overlaps.
    pub cocycle_recovery: f64,
    /// Largest disagreement of finite-difference d-bar of `f~` between charts.
    pub chart_dbar_mismatch: f64,
    /// Largest gap between the finite-difference d-bar of `f~_j` and the density on `A`.
    pub density_fd_error: f64,
}

/// `f~_j = sum_k rho_k c_kj` per chart and the global density
/// `chi sum_k (d-bar rho_k) c_kj` on the band (`chi` tapers it to zero at the
/// inner edge).
#[derive(Debug, Clone)]
pub struct Resolution {
    pub tilde: Vec<GridField>,
    pub density: GridField,
    pub report: ResolveReport,
}

pub fn resolve_cocycle(
    cover: &Cover,
    cocycle: &Cocycle,
    locals: &[GridField],
    taper: RadialTaper,
    include: impl Fn(Complex64) -> bool + Copy,
) -> Result<Resolution, GlueError> {
    let grid = *locals.first().ok_or_else(|| GlueError::CoverMismatch("no charts".into()))?.grid();
    let dim = cocycle.dim;
    let partition = cover.partition();
    let node_of = |z: Complex64| {
        (((z.re - grid.x0) / grid.h).round() as usize, ((z.im - grid.y0) / grid.h).round() as usize)
    };
    let missing = |k: usize, j: usize, z: Complex64| {
        GlueError::CoverMismatch(format!("bump {k} is nonzero at {z} but chart {j} does not overlap chart {k} there"))
    };
    let mut tilde = Vec::with_capacity(cover.len());
    for (j, local) in locals.iter().enumerate() {
        let active = |z: Complex64| {
            let (i, jj) = node_of(z);
            local.is_active(i, jj)
        };
        let f = GridField::try_from_fn(grid, Region::Chart { index: j }, dim, active, |z| {
            let (i, jj) = node_of(z);
            let mut acc = VectorValue::with_norm(vec![Complex64::new(0.0, 0.0); dim], local.norm_kind());
            for b in partition.eval(z) {
                let c = cocycle.at(b.index, j, i, jj).ok_or_else(|| missing(b.index, j, z))?;
                acc.axpy(Complex64::new(b.value, 0.0), &VectorValue::new(c));
            }
            Ok::<_, GlueError>(acc)
        })?;
        tilde.push(f);
    }
    let band = cover.band();
    let density = GridField::try_from_fn(grid, Region::Annulus { inner: band.inner, outer: band.outer }, dim, band_mask(band), |z| {
        let (i, jj) = node_of(z);
        let bumps = partition.eval(z);
        let j = bumps.first().map(|b| b.index).expect("partition covers the band");
        let mut acc = VectorValue::with_norm(vec![Complex64::new(0.0, 0.0); dim], locals[j].norm_kind());
        for b in &bumps {
            let c = cocycle.at(b.index, j, i, jj).ok_or_else(|| missing(b.index, j, z))?;
            acc.axpy(b.dbar * taper.eval(z), &VectorValue::new(c));
        }
        Ok::<_, GlueError>(acc)
    })?;

    let mut report = ResolveReport {
        sup_tilde: tilde.iter().map(GridField::sup_norm).fold(0.0, f64::max),
        sup_density: density.sup_norm(),
        ..ResolveReport::default()
    };
    let dbars: Vec<GridField> = tilde.iter().map(GridField::dbar).collect();
    let in_a = |z: Complex64| z.norm() >= taper.start + taper.width && include(z);
    for d in &dbars {
        report.density_fd_error = report.density_fd_error.max(d.distance_where(&density, in_a)?);
    }
    for (&(k, j), ckj) in cocycle.pairs() {
        for (i, jj) in ckj.active_nodes() {
            if let (Some(a), Some(b)) = (tilde[j].value(i, jj), tilde[k].value(i, jj)) {
                let c = ckj.value(i, jj).expect("active");
                let s: Vec<Complex64> = (0..dim).map(|d| a[d] - b[d] - c[d]).collect();
                report.cocycle_recovery = report.cocycle_recovery.max(ckj.norm_kind().of(&s));
            }
        }
        report.chart_dbar_mismatch = report.chart_dbar_mismatch.max(dbars[k].distance_where(&dbars[j], include)?);
    }
    Ok(Resolution { tilde, density, report })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FirstGlueReport {
    pub sup_transform: f64,
    pub width_bound: Option<WidthBound>,
    /// `sup |c_i|` over all charts.
    pub sup_correction: f64,
    /// Largest finite-difference `|d-bar c_i|` on `A` away from the singular set.
    pub correction_residual: f64,
    /// Largest disagreement of `f_i + c_i` between charts.
    pub mismatch: f64,
    /// `sup |f - f_eps|` on `A`.
    pub sup_error_on_annulus: f64,
}

#[derive(Debug, Clone)]
pub struct FirstGlue {
    pub corrections: Vec<GridField>,
    pub f_eps: GridField,
    pub report: FirstGlueReport,
}

/// `c_i = f~_i - H` and the single-valued `f_eps = f_i + c_i` on the band.
pub fn first_glue(
    cover: &Cover,
    locals: &[GridField],
    resolution: &Resolution,
    transform: &GridField,
    tolerance: f64,
) -> Result<FirstGlue, GlueError> {
    let mut corrections = Vec::with_capacity(cover.len());
    for t in &resolution.tilde {
        corrections.push(t.sub(transform)?);
    }
    let grid = *transform.grid();
    let dim = transform.dim();
    let band = cover.band();
    let mut f_eps = GridField::empty(grid, Region::Annulus { inner: band.inner, outer: band.outer }, dim);
    f_eps.set_norm(transform.norm_kind());
    let mut mismatch = 0.0_f64;
    for (i, j) in transform.active_nodes().collect::<Vec<_>>() {
        let mut first: Option<Vec<Complex64>> = None;
        for (k, (f, c)) in locals.iter().zip(&corrections).enumerate() {
            let (Some(a), Some(b)) = (f.value(i, j), c.value(i, j)) else { continue };
            if !cover.in_chart(k, grid.node(i, j)) {
                continue;
            }
            let v: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            match &first {
                None => first = Some(v),
                Some(w) => {
                    let d: Vec<Complex64> = v.iter().zip(w).map(|(x, y)| x - y).collect();
                    mismatch = mismatch.max(transform.norm_kind().of(&d));
                }
            }
        }
        if let Some(v) = first {
            f_eps.set(i, j, &v);
        }
    }
    if mismatch > tolerance {
        return Err(GlueError::GlueMismatch { stage: Stage::FirstGlue, mismatch, tolerance });
    }
    let report = FirstGlueReport {
        sup_transform: transform.sup_norm(),
        sup_correction: corrections.iter().map(GridField::sup_norm).fold(0.0, f64::max),
        mismatch,
        ..FirstGlueReport::default()
    };
    Ok(FirstGlue { corrections, f_eps, report })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SecondGlueReport {
    /// `sup |f - f_eps|` on `D' ∩ A`.
    pub sup_difference: f64,
    pub difference_residual: f64,
    pub sup_density: f64,
    pub sup_transform: f64,
    /// Largest disagreement of the two formulas for `F_eps` on `D' ∩ A`.
    pub mismatch: f64,
}

#[derive(Debug, Clone)]
pub struct SecondGlue {
    pub difference: GridField,
    pub density: GridField,
    pub transform: GridField,
    pub result: GridField,
    pub report: SecondGlueReport,
}

/// With `c = f - f_eps` on `D' ∩ A` and `G` the Cauchy transform of
/// `c d-bar rho_A'`: `F_eps = f - rho_A' c + G` on `D'` and
/// `f_eps + rho_D' c + G` on `A`.
pub fn second_glue(
    f: &GridField,
    f_eps: &GridField,
    radial: RadialPartition,
    plan: &CauchyPlan,
    tolerance: f64,
) -> Result<SecondGlue, GlueError> {
    let grid = *f.grid();
    let dim = f.dim();
    let h = grid.h;
    let (lo, hi) = (radial.inner, radial.inner + radial.width);
    let difference = f.sub(f_eps)?.restrict(Region::Annulus { inner: lo, outer: hi }, |z| {
        let r = z.norm();
        r >= lo - 1.5 * h && r <= hi + 1.5 * h
    });
    let support = AnnularSupport { inner: lo, outer: hi };
    let density_at = |z: Complex64| -> Option<VectorValue> {
        if !support.contains(z) {
            return None;
        }
        let c = difference.interpolate_partial(z)?;
        Some(c.scale(radial.eval(z).dbar_outer))
    };
    let density = GridField::from_fn(grid, Region::Annulus { inner: lo, outer: hi }, dim, |z| support.contains(z), |z| {
        density_at(z).unwrap_or_else(|| VectorValue::zeros(dim))
    });
    let disk = |z: Complex64| z.norm() < 1.0;
    let transform = cauchy_transform(&density_at, dim, support, grid, Region::Disk { radius: 1.0 }, disk, plan);

    let mut result = GridField::empty(grid, Region::Disk { radius: 1.0 }, dim);
    result.set_norm(f.norm_kind());
    let mut mismatch = 0.0_f64;
    for (i, j) in f.active_nodes().collect::<Vec<_>>() {
        let z = grid.node(i, j);
        let r = z.norm();
        let fv = f.value(i, j).expect("active");
        let g = transform.value(i, j).ok_or_else(|| GlueError::CoverMismatch(format!("no transform value at {z}")))?;
        let rv = radial.eval(z);
        let inner_formula = |c: Option<&[Complex64]>| -> Vec<Complex64> {
            (0..dim).map(|d| fv[d] - rv.rho_outer * c.map_or(Complex64::new(0.0, 0.0), |c| c[d]) + g[d]).collect()
        };
        let value = if r < lo {
            inner_formula(None)
        } else {
            let c = difference.value(i, j);
            let fe = f_eps.value(i, j);
            match (c, fe) {
                (Some(c), Some(fe)) if r < hi => {
                    let a = inner_formula(Some(c));
                    let b: Vec<Complex64> = (0..dim).map(|d| fe[d] + rv.rho_inner * c[d] + g[d]).collect();
                    let diff: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                    mismatch = mismatch.max(f.norm_kind().of(&diff));
                    a
                }
                (_, Some(fe)) if r >= hi => (0..dim).map(|d| fe[d] + g[d]).collect(),
                _ => return Err(GlueError::CoverMismatch(format!("no annulus data at {z}"))),
            }
        };
        result.set(i, j, &value);
    }
    if mismatch > tolerance {
        return Err(GlueError::GlueMismatch { stage: Stage::SecondGlue, mismatch, tolerance });
    }
    let report = SecondGlueReport {
        sup_difference: difference.sup_norm_where(|z| {
            let r = z.norm();
            r >= lo && r < hi
        }),
        sup_density: density.sup_norm(),
        sup_transform: transform.sup_norm(),
        mismatch,
        ..SecondGlueReport::default()
    };
    Ok(SecondGlue { difference, density, transform, result, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalReport {
    pub angle: f64,
    pub s_epsilon: f64,
    pub arc_error: f64,
    pub smoothing_bound: f64,
    pub fejer_orders: Option<Vec<i64>>,
    pub chart_radius: f64,
    pub disk_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthTrial {
    pub width: f64,
    pub sup_transform: Option<f64>,
    pub outcome: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageErrors {
    pub local: Vec<LocalReport>,
    pub cocycle: CocycleReport,
    pub resolve: ResolveReport,
    pub first_glue: FirstGlueReport,
    pub second_glue: SecondGlueReport,
}

/// Measured values of the constants in the error chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Constants {
    /// `sup |H| / (w sup |h|)` with `w` the width of the density support.
    #[serde(rename = "C")]
    pub width: f64,
    /// `sup |G| / eps`.
    #[serde(rename = "C_prime")]
    pub second_transform: f64,
    /// `sup |c_i| / eps`.
    #[serde(rename = "C_bar")]
    pub correction: f64,
    /// `sup |f - F_eps| / eps`.
    #[serde(rename = "C_hat")]
    pub total: f64,
    /// `max |grad rho_A'| w(A) / 2`.
    #[serde(rename = "C_rho")]
    pub radial_slope: f64,
}

/// One strip tone of a local block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub frequency: f64,
    #[serde(with = "complex_list")]
    pub coefficient: Vec<Complex64>,
}

/// Spread of the remainder near one singular point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderOscillation {
    pub angle: f64,
    pub radii: Vec<f64>,
    pub spread: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateEntry {
    /// The strip exponential sum used at a singular point.
    LocalBlock { angle: f64, power: u32, tones: Vec<Tone>, fejer_orders: Option<Vec<i64>> },
    /// A generator read off a pair of matching tones.
    Generator {
        spec: GeneratorSpec,
        #[serde(with = "complex_list")]
        coefficient: Vec<Complex64>,
    },
    /// `F_eps` minus the recovered generators, sampled on the grid.
    DiskAlgebraRemainder { sup_norm: f64, oscillation: Vec<RemainderOscillation> },
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproximationReport {
    pub epsilon: f64,
    pub config: GlueConfig,
    pub grid: Grid,
    pub singular: Vec<f64>,
    pub geometry: Geometry,
    pub width_history: Vec<WidthTrial>,
    pub charts: Vec<Chart>,
    pub stage_errors: StageErrors,
    pub constants: Constants,
    /// Largest finite-difference `|d-bar F_eps|` away from the singular set.
    pub dbar_residual: f64,
    pub dbar_threshold: f64,
    pub sup_error: f64,
    /// Largest disagreement of the two formulas for `F_eps`.
    pub glue_mismatch: f64,
    pub certificate: Vec<CertificateEntry>,
}

/// Named fields of one run.
#[derive(Debug, Clone)]
pub struct PipelineFields {
    pub f: GridField,
    pub density: GridField,
    pub transform: GridField,
    pub f_eps: GridField,
    pub difference: GridField,
    pub second_density: GridField,
    pub second_transform: GridField,
    pub result: GridField,
}

impl PipelineFields {
    pub fn named(&self) -> [(&'static str, &GridField); 8] {
        [
            ("f", &self.f),
            ("h", &self.density),
            ("H", &self.transform),
            ("f_eps", &self.f_eps),
            ("c", &self.difference),
            ("g", &self.second_density),
            ("G", &self.second_transform),
            ("F_eps", &self.result),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Approximation {
    pub fields: PipelineFields,
    pub report: ApproximationReport,
}

impl Approximation {
    /// `F_eps` between grid nodes.
    pub fn eval(&self, z: Complex64) -> Option<VectorValue> {
        self.fields.result.interpolate_partial(z)
    }
}

/// Largest mismatch between the top trace and the continuation of the bottom one.
fn continuation_defect(h: &StripHarmonic) -> f64 {
    let basis = h.bottom().basis();
    h.bottom()
        .terms()
        .iter()
        .map(|t| {
            let lam = t.freq.value(basis);
            h.top().coefficient(&t.freq).distance(&t.coeff.scale_real((-lam * std::f64::consts::PI).exp()))
        })
        .fold(0.0, f64::max)
}

/// Sup distance between the data and an approximant on the part of the
/// closed disk within `radius` of `z0`.
fn chart_error(data: &DiskData, approx: &SingularApproximant, radius: f64) -> Result<f64, GlueError> {
    let z0 = approx.z0.point();
    let mut worst = 0.0_f64;
    let mut check = |z: Complex64| -> Result<(), GlueError> {
        let d = data.eval(z)?;
        worst = worst.max(d.distance(&approx.eval(z)?));
        Ok(())
    };
    for i in 1..=12 {
        let d = radius * i as f64 / 12.0;
        for a in 0..48 {
            let z = z0 + Complex64::from_polar(d, TAU * (a as f64 + 0.5) / 48.0);
            if z.norm() < 1.0 {
                check(z)?;
            }
        }
        let u = 2.0 * (0.5 * d).asin();
        for sign in [-1.0, 1.0] {
            check(Complex64::from_polar(1.0, approx.z0.angle() + sign * u))?;
        }
    }
    Ok(worst)
}

fn singular_approximant(
    data: &DiskData,
    sap: &SapFunction,
    z0: CirclePoint,
    neighbour_distance: f64,
    eps: f64,
    min_radius: f64,
    cfg: &GlueConfig,
) -> Result<SingularApproximant, GlueError> {
    let local = local_approximant(sap, z0, eps, &cfg.local).map_err(GlueError::at(Stage::Local))?;
    if !local.h.is_holomorphic() {
        return Err(GlueError::NotHolomorphic { stage: Stage::Local, residual: continuation_defect(&local.h), threshold: 1e-12 });
    }
    let mut approx = SingularApproximant {
        z0,
        strip: local.h,
        power: cfg.corrective_power,
        kernel: local.kernel,
        smoothing_bound: local.smoothing_bound,
        s_epsilon: local.s_epsilon,
        arc_error: local.sup_error,
        radius: cfg.chart_radius_max.min(0.45 * neighbour_distance),
        disk_error: f64::INFINITY,
    };
    loop {
        approx.disk_error = chart_error(data, &approx, approx.radius)?;
        if approx.disk_error < eps {
            return Ok(approx);
        }
        approx.radius *= cfg.chart_radius_shrink;
        if approx.radius < min_radius {
            return Err(GlueError::Stage {
                stage: Stage::Local,
                source: format!(
                    "no chart radius above {min_radius:.4} at angle {} keeps the local error below {eps} (last {:.3e})",
                    z0.angle(),
                    approx.disk_error
                )
                .into(),
            });
        }
    }
}

/// A chart centered at a point of the singular set; points where the data
/// is regular keep the regular chart function.
#[derive(Debug, Clone)]
struct PointChart {
    point: CirclePoint,
    radius: f64,
    approx: Option<SingularApproximant>,
}

/// Everything that depends on the annulus width.
struct WidthRun {
    geometry: Geometry,
    cover: Cover,
    cocycle: Cocycle,
    resolution: Resolution,
    transform: GridField,
    first: FirstGlue,
}

fn run_width(
    data: &DiskData,
    point_charts: &[PointChart],
    regular: &LocalFunction,
    width: f64,
    grid: Grid,
    include: &(dyn Fn(Complex64) -> bool + Sync),
    cfg: &GlueConfig,
) -> Result<(WidthRun, Vec<GridField>), GlueError> {
    let geometry = Geometry::new(width);
    let singular: Vec<(CirclePoint, f64)> = point_charts.iter().map(|c| (c.point, c.radius)).collect();
    let cover = build_cover(&singular, geometry.band, &cfg.layout)?;
    let dim = data.dim();
    let functions: Vec<LocalFunction> = cover
        .charts()
        .iter()
        .map(|c| match c.kind {
            ChartKind::Singular => {
                let pc = point_charts
                    .iter()
                    .find(|p| p.point.distance(&c.neighbourhood.z0) < 1e-12)
                    .expect("singular charts come from singular points");
                pc.approx.clone().map_or_else(|| regular.clone(), LocalFunction::Singular)
            }
            ChartKind::Regular => regular.clone(),
        })
        .collect();
    let mut locals = Vec::with_capacity(cover.len());
    for (k, lf) in functions.iter().enumerate() {
        let field =
            GridField::try_from_fn(grid, Region::Chart { index: k }, dim, |z| cover.in_chart(k, z), |z| lf.eval(data, z))?;
        locals.push(field);
    }
    let cocycle = build_cocycle(&cover, &locals, include, None)?;
    let resolution = resolve_cocycle(&cover, &cocycle, &locals, geometry.taper(), include)?;
    let plan = cfg.plan(&grid);
    let band = geometry.band;
    let transform = cauchy_transform_field(
        &resolution.density,
        band,
        Region::Annulus { inner: band.inner, outer: band.outer },
        band_mask(band),
        &plan,
    );
    let mut first = first_glue(&cover, &locals, &resolution, &transform, cfg.glue_tolerance)?;
    first.report.width_bound = Some(WidthBound::measure(band.width(), resolution.report.sup_density, transform.sup_norm()));
    let in_a = |z: Complex64| z.norm() >= geometry.annulus_inner;
    let mut worst = 0.0_f64;
    for c in &first.corrections {
        let restricted = c.restrict(Region::Annulus { inner: geometry.annulus_inner, outer: 1.0 }, in_a);
        worst = worst.max(0.5 * holo_residual_where(&restricted, include)?);
    }
    first.report.correction_residual = worst;
    Ok((WidthRun { geometry, cover, cocycle, resolution, transform, first }, locals))
}

/// Pair up singular tones `mu` and `-mu` into generators.
fn recover_generators(locals: &[(CirclePoint, SingularApproximant)]) -> Result<Vec<CertificateEntry>, GlueError> {
    let mut tones: Vec<(usize, f64, Vec<Complex64>)> = Vec::new();
    for (k, (_, a)) in locals.iter().enumerate() {
        let basis = a.strip.bottom().basis();
        for t in a.strip.bottom().terms() {
            if !t.freq.is_zero() {
                tones.push((k, t.freq.value(basis), t.coeff.components.clone()));
            }
        }
    }
    let mut used = vec![false; tones.len()];
    let mut out = Vec::new();
    for a in 0..tones.len() {
        if used[a] {
            continue;
        }
        let Some(b) = (0..tones.len()).find(|&b| {
            !used[b] && b != a && tones[b].0 != tones[a].0 && (tones[a].1 + tones[b].1).abs() < 1e-9 * (1.0 + tones[a].1.abs())
        }) else {
            continue;
        };
        used[a] = true;
        used[b] = true;
        let (x, y) = (locals[tones[a].0].0, locals[tones[b].0].0);
        let (x, y, mu_x, coeff) = if x.angle() <= y.angle() {
            (x, y, tones[a].1, &tones[a].2)
        } else {
            (y, x, tones[b].1, &tones[b].2)
        };
        let spec = GeneratorSpec::new(-std::f64::consts::PI * mu_x, x.angle(), y.angle()).map_err(GlueError::at(Stage::Certificate))?;
        // the unit generator's tone at x fixes the coefficient
        let unit = HoloExpr::generator(spec).map_err(GlueError::at(Stage::Certificate))?;
        let model = unit.local_model(x).map_err(GlueError::at(Stage::Certificate))?;
        let basis = model.strip.poly().basis();
        let u = model
            .strip
            .poly()
            .terms()
            .iter()
            .find(|t| !t.freq.is_zero() && (t.freq.value(basis) - mu_x).abs() < 1e-9 * (1.0 + mu_x.abs()))
            .map(|t| t.coeff.components[0])
            .ok_or_else(|| GlueError::Stage { stage: Stage::Certificate, source: "unit generator has no matching tone".into() })?;
        out.push(CertificateEntry::Generator { spec, coefficient: coeff.iter().map(|c| c / u).collect() });
    }
    Ok(out)
}

fn remainder_entry(
    result: &GridField,
    generators: &[CertificateEntry],
    singular: &[CirclePoint],
) -> Result<CertificateEntry, GlueError> {
    let grid = *result.grid();
    let compiled: Vec<_> = generators
        .iter()
        .filter_map(|e| match e {
            CertificateEntry::Generator { spec, coefficient } => Some((spec.compile(), coefficient.clone())),
            _ => None,
        })
        .map(|(g, c)| g.map(|g| (g, c)))
        .collect::<Result<_, _>>()
        .map_err(GlueError::at(Stage::Certificate))?;
    let dim = result.dim();
    let mut remainder = GridField::empty(grid, Region::Disk { radius: 1.0 }, dim);
    remainder.set_norm(result.norm_kind());
    for (i, j) in result.active_nodes().collect::<Vec<_>>() {
        let z = grid.node(i, j);
        let mut v = result.value(i, j).expect("active").to_vec();
        for (g, c) in &compiled {
            let gz = g.eval(z).map_err(GlueError::at(Stage::Certificate))?;
            for (a, b) in v.iter_mut().zip(c) {
                *a -= b * gz;
            }
        }
        remainder.set(i, j, &v);
    }
    let radii = vec![0.2, 0.1, 0.05];
    let mut oscillation = Vec::new();
    for p in singular {
        let z0 = p.point();
        let near: Vec<(f64, &[Complex64])> = remainder
            .active_nodes()
            .map(|(i, j)| ((grid.node(i, j) - z0).norm(), remainder.value(i, j).expect("active")))
            .filter(|(d, _)| *d < radii[0])
            .collect();
        let Some(anchor) = near.iter().min_by(|a, b| a.0.total_cmp(&b.0)).map(|n| n.1) else { continue };
        let spread = radii
            .iter()
            .map(|&r| {
                near.iter()
                    .filter(|(d, _)| *d < r)
                    .map(|(_, v)| {
                        let diff: Vec<Complex64> = v.iter().zip(anchor).map(|(a, b)| a - b).collect();
                        remainder.norm_kind().of(&diff)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        oscillation.push(RemainderOscillation { angle: p.angle(), radii: radii.clone(), spread });
    }
    Ok(CertificateEntry::DiskAlgebraRemainder { sup_norm: remainder.sup_norm(), oscillation })
}

/// Approximate `data` within about `eps` by a function holomorphic on the
/// disk, with the singular set of the data enlarged by `extra`.
pub fn approximate(data: &DiskData, extra: &SingularSet, eps: f64, cfg: &GlueConfig) -> Result<Approximation, GlueError> {
    cfg.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GlueError::InvalidConfig(format!("epsilon must be positive, got {eps}")));
    }
    let grid = Grid::unit_square(cfg.grid_nodes);
    let h = grid.h;
    let singular = data.singular().union(extra);
    let points = singular.points().to_vec();
    let min_width = cfg.min_width_cells * h;

    let regular = match data {
        DiskData::Expr(_) => LocalFunction::Exact,
        DiskData::Boundary { .. } => LocalFunction::Dilation { factor: 1.0 - cfg.dilation },
    };
    let data_singular = data.singular();
    let mut point_charts = Vec::with_capacity(points.len());
    if !points.is_empty() {
        let sap = data.sap_function(&singular, cfg.profile_scale)?;
        for (k, &p) in points.iter().enumerate() {
            let nearest = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, q)| (p.point() - q.point()).norm())
                .fold(2.0, f64::min);
            let min_radius = min_width / cfg.width_per_radius;
            let radius_cap = cfg.chart_radius_max.min(0.45 * nearest);
            let chart = if data_singular.find(p.angle(), 1e-12).is_some() {
                let a = singular_approximant(data, &sap, p, nearest, eps, min_radius.min(0.5 * nearest), cfg)?;
                PointChart { point: p, radius: a.radius, approx: Some(a) }
            } else {
                PointChart { point: p, radius: radius_cap, approx: None }
            };
            point_charts.push(chart);
        }
    }
    let include = |z: Complex64| points.iter().all(|p| (z - p.point()).norm() >= cfg.residual_exclusion);
    let f = GridField::try_from_fn(grid, Region::Disk { radius: 1.0 }, data.dim(), |z| z.norm() < 1.0, |z| data.eval(z))?;

    let min_radius = point_charts.iter().map(|c| c.radius).fold(f64::INFINITY, f64::min);
    let locals_at: Vec<(CirclePoint, SingularApproximant)> =
        point_charts.iter().filter_map(|c| c.approx.clone().map(|a| (c.point, a))).collect();
    let mut width = cfg
        .annulus_width
        .unwrap_or_else(|| cfg.max_annulus_width.min(cfg.width_per_radius * min_radius));
    if width < min_width {
        return Err(GlueError::InvalidConfig(format!(
            "annulus width {width:.4} is below {} grid steps ({min_width:.4})",
            cfg.min_width_cells
        )));
    }
    let mut history = Vec::new();
    let mut halvings = 0;
    let (run, _locals) = loop {
        let can_halve = halvings < cfg.width_halvings && 0.5 * width >= min_width;
        match run_width(data, &point_charts, &regular, width, grid, &include, cfg) {
            Ok((run, locals)) => {
                let sup_h = run.transform.sup_norm();
                let ok = sup_h < eps;
                history.push(WidthTrial {
                    width,
                    sup_transform: Some(sup_h),
                    outcome: if ok { "accepted" } else if can_halve { "transform too large" } else { "kept at smallest width" }.into(),
                });
                if ok || !can_halve {
                    break (run, locals);
                }
            }
            Err(GlueError::CoverMismatch(msg)) if can_halve => {
                history.push(WidthTrial { width, sup_transform: None, outcome: format!("cover: {msg}") });
            }
            Err(e) => return Err(e),
        }
        width *= 0.5;
        halvings += 1;
    };

    let geometry = run.geometry;
    let radial = radial_partition(&geometry);
    let second = second_glue(&f, &run.first.f_eps, radial, &cfg.plan(&grid), cfg.glue_tolerance)?;
    let mut second_report = second.report.clone();
    second_report.difference_residual = 0.5
        * holo_residual_where(
            &second.difference.restrict(Region::Annulus { inner: radial.inner, outer: radial.inner + radial.width }, |z| {
                z.norm() >= radial.inner
            }),
            include,
        )?;

    let mut first_report = run.first.report.clone();
    first_report.sup_error_on_annulus = f.distance_where(&run.first.f_eps, |z| z.norm() >= geometry.annulus_inner)?;

    let dbar_residual = 0.5 * holo_residual_where(&second.result, include)?;
    let dbar_threshold = cfg.residual_factor * h;
    if dbar_residual > dbar_threshold {
        return Err(GlueError::NotHolomorphic { stage: Stage::SecondGlue, residual: dbar_residual, threshold: dbar_threshold });
    }
    let sup_error = f.distance(&second.result)?;

    let local_reports = locals_at
        .iter()
        .map(|(p, a)| LocalReport {
            angle: p.angle(),
            s_epsilon: a.s_epsilon,
            arc_error: a.arc_error,
            smoothing_bound: a.smoothing_bound,
            fejer_orders: a.kernel.as_ref().map(|k| k.orders().to_vec()),
            chart_radius: a.radius,
            disk_error: a.disk_error,
        })
        .collect();

    let mut certificate: Vec<CertificateEntry> = locals_at
        .iter()
        .map(|(p, a)| {
            let basis = a.strip.bottom().basis();
            CertificateEntry::LocalBlock {
                angle: p.angle(),
                power: a.power,
                tones: a
                    .strip
                    .bottom()
                    .terms()
                    .iter()
                    .map(|t| Tone { frequency: t.freq.value(basis), coefficient: t.coeff.components.clone() })
                    .collect(),
                fejer_orders: a.kernel.as_ref().map(|k| k.orders().to_vec()),
            }
        })
        .collect();
    let generators = recover_generators(&locals_at)?;
    let remainder = remainder_entry(&second.result, &generators, &points)?;
    certificate.extend(generators);
    certificate.push(remainder);

    let constants = Constants {
        width: run.first.report.width_bound.map_or(0.0, |b| b.constant),
        second_transform: second.report.sup_transform / eps,
        correction: run.first.report.sup_correction / eps,
        total: sup_error / eps,
        radial_slope: measured_radial_slope(&radial, geometry.annulus_width),
    };
    debug_assert!(constants.radial_slope <= SMOOTHSTEP_SLOPE + 1e-9);

    let report = ApproximationReport {
        epsilon: eps,
        config: cfg.clone(),
        grid,
        singular: points.iter().map(CirclePoint::angle).collect(),
        geometry,
        width_history: history,
        charts: run.cover.charts().to_vec(),
        stage_errors: StageErrors {
            local: local_reports,
            cocycle: run.cocycle.report.clone(),
            resolve: run.resolution.report.clone(),
            first_glue: first_report,
            second_glue: second_report,
        },
        constants,
        dbar_residual,
        dbar_threshold,
        sup_error,
        glue_mismatch: run.first.report.mismatch.max(second.report.mismatch),
        certificate,
    };
    let fields = PipelineFields {
        f,
        density: run.resolution.density,
        transform: run.transform,
        f_eps: run.first.f_eps,
        difference: second.difference,
        second_density: second.density,
        second_transform: second.transform,
        result: second.result,
    };
    Ok(Approximation { fields, report })
}
