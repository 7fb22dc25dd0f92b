//! Uniform planar grids carrying vector-valued samples.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vector::{NormKind, VectorValue};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid too coarse: {nx}x{ny} nodes, need at least 3 per axis")]
    GridTooCoarse { nx: usize, ny: usize },
    #[error("incompatible grids: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Nodes `(x0 + i h, y0 + j h)` for `0 <= i < nx`, `0 <= j < ny`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    /// `n` nodes per axis on `[-1, 1]^2`.
    pub fn unit_square(n: usize) -> Self {
        assert!(n >= 2, "need at least two nodes per axis");
        Self { x0: -1.0, y0: -1.0, h: 2.0 / (n - 1) as f64, nx: n, ny: n }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }
}

/// What part of the plane a field lives on; informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Rectangle,
    Disk { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    Overlap { first: usize, second: usize },
    Chart { index: usize },
    Named { name: String },
}

/// Samples of a `C^dim`-valued function on the active nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    region: Region,
    dim: usize,
    norm: NormKind,
    active: Vec<bool>,
    values: Vec<Complex64>,
}

impl GridField {
    /// Zero field with every node inactive.
    pub fn empty(grid: Grid, region: Region, dim: usize) -> Self {
        Self {
            grid,
            region,
            dim,
            norm: NormKind::Sup,
            active: vec![false; grid.len()],
            values: vec![Complex64::new(0.0, 0.0); grid.len() * dim],
        }
    }

    /// Sample `f` on the nodes where `mask` holds.
    pub fn from_fn<M, F>(grid: Grid, region: Region, dim: usize, mask: M, f: F) -> Self
    where
        M: Fn(Complex64) -> bool + Sync,
        F: Fn(Complex64) -> VectorValue + Sync,
    {
        Self::try_from_fn(grid, region, dim, mask, |z| Ok::<_, std::convert::Infallible>(f(z)))
            .unwrap_or_else(|e| match e {})
    }

    pub fn try_from_fn<M, F, E>(grid: Grid, region: Region, dim: usize, mask: M, f: F) -> Result<Self, E>
    where
        M: Fn(Complex64) -> bool + Sync,
        F: Fn(Complex64) -> Result<VectorValue, E> + Sync,
        E: Send,
    {
        type Row = (Vec<bool>, Vec<Complex64>, NormKind);
        let rows: Vec<Result<Row, E>> = (0..grid.ny)
            .into_par_iter()
            .map(|j| {
                let mut act = vec![false; grid.nx];
                let mut vals = vec![Complex64::new(0.0, 0.0); grid.nx * dim];
                let mut norm = NormKind::Sup;
                for i in 0..grid.nx {
                    let z = grid.node(i, j);
                    if mask(z) {
                        let v = f(z)?;
                        assert_eq!(v.dim(), dim, "sampled value has the wrong dimension");
                        norm = v.norm;
                        act[i] = true;
                        vals[i * dim..(i + 1) * dim].copy_from_slice(&v.components);
                    }
                }
                Ok((act, vals, norm))
            })
            .collect();
        let mut field = Self::empty(grid, region, dim);
        for (j, row) in rows.into_iter().enumerate() {
            let (act, vals, norm) = row?;
            if act.iter().any(|&a| a) {
                field.norm = norm;
            }
            let start = grid.index(0, j);
            field.active[start..start + grid.nx].copy_from_slice(&act);
            field.values[start * dim..(start + grid.nx) * dim].copy_from_slice(&vals);
        }
        Ok(field)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn set_norm(&mut self, norm: NormKind) {
        self.norm = norm;
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = region;
        self
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        i < self.grid.nx && j < self.grid.ny && self.active[self.grid.index(i, j)]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Active node indices in row-major order.
    pub fn active_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(k, _)| self.grid.coords(k))
    }

    pub fn value(&self, i: usize, j: usize) -> Option<&[Complex64]> {
        if !self.is_active(i, j) {
            return None;
        }
        let k = self.grid.index(i, j) * self.dim;
        Some(&self.values[k..k + self.dim])
    }

    pub fn vector(&self, i: usize, j: usize) -> Option<VectorValue> {
        self.value(i, j).map(|v| VectorValue::with_norm(v.to_vec(), self.norm))
    }

    pub fn set(&mut self, i: usize, j: usize, v: &[Complex64]) {
        assert_eq!(v.len(), self.dim);
        let k = self.grid.index(i, j);
        self.active[k] = true;
        self.values[k * self.dim..(k + 1) * self.dim].copy_from_slice(v);
    }

    pub fn deactivate(&mut self, i: usize, j: usize) {
        let k = self.grid.index(i, j);
        self.active[k] = false;
    }

    pub fn norm_at(&self, i: usize, j: usize) -> Option<f64> {
        self.value(i, j).map(|v| self.norm.of(v))
    }

    /// Largest norm over active nodes (0 for an empty field).
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm_where(|_| true)
    }

    pub fn sup_norm_where(&self, include: impl Fn(Complex64) -> bool) -> f64 {
        self.active_nodes()
            .filter(|&(i, j)| include(self.grid.node(i, j)))
            .map(|(i, j)| self.norm_at(i, j).unwrap_or(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest norm of `self - other` over nodes active in both.
    pub fn distance(&self, other: &GridField) -> Result<f64, GridError> {
        self.distance_where(other, |_| true)
    }

    pub fn distance_where(
        &self,
        other: &GridField,
        include: impl Fn(Complex64) -> bool,
    ) -> Result<f64, GridError> {
        self.check_compatible(other)?;
        let mut worst = 0.0_f64;
        let mut diff = vec![Complex64::new(0.0, 0.0); self.dim];
        for (i, j) in self.active_nodes() {
            if let (Some(a), Some(b)) = (self.value(i, j), other.value(i, j)) {
                if !include(self.grid.node(i, j)) {
                    continue;
                }
                for (d, (x, y)) in diff.iter_mut().zip(a.iter().zip(b)) {
                    *d = x - y;
                }
                worst = worst.max(self.norm.of(&diff));
            }
        }
        Ok(worst)
    }

    fn check_compatible(&self, other: &GridField) -> Result<(), GridError> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(GridError::Shape(format!(
                "{:?} dim {} vs {:?} dim {}",
                self.grid, self.dim, other.grid, other.dim
            )));
        }
        Ok(())
    }

    /// Nodewise combination over nodes active in both operands.
    pub fn zip_with(
        &self,
        other: &GridField,
        region: Region,
        f: impl Fn(&[Complex64], &[Complex64], &mut [Complex64]),
    ) -> Result<GridField, GridError> {
        self.check_compatible(other)?;
        let mut out = GridField::empty(self.grid, region, self.dim);
        out.norm = self.norm;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.dim];
        for (i, j) in self.active_nodes().collect::<Vec<_>>() {
            if let (Some(a), Some(b)) = (self.value(i, j), other.value(i, j)) {
                f(a, b, &mut buf);
                out.set(i, j, &buf);
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField, GridError> {
        self.zip_with(other, self.region.clone(), |a, b, o| {
            for (o, (x, y)) in o.iter_mut().zip(a.iter().zip(b)) {
                *o = x - y;
            }
        })
    }

    /// Keep only the active nodes where `keep` holds.
    pub fn restrict(&self, region: Region, keep: impl Fn(Complex64) -> bool) -> GridField {
        let mut out = self.clone();
        out.region = region;
        for k in 0..self.grid.len() {
            let (i, j) = self.grid.coords(k);
            if out.active[k] && !keep(self.grid.node(i, j)) {
                out.active[k] = false;
            }
        }
        out
    }

    /// Bilinear interpolation; `None` unless all four surrounding nodes are active.
    pub fn interpolate(&self, z: Complex64) -> Option<VectorValue> {
        let fx = (z.re - self.grid.x0) / self.grid.h;
        let fy = (z.im - self.grid.y0) / self.grid.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let i = (fx.floor() as usize).min(self.grid.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(self.grid.ny.saturating_sub(2));
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        if tx > 1.0 + 1e-9 || ty > 1.0 + 1e-9 {
            return None;
        }
        let a = self.value(i, j)?;
        let b = self.value(i + 1, j)?;
        let c = self.value(i, j + 1)?;
        let d = self.value(i + 1, j + 1)?;
        let comps = (0..self.dim)
            .map(|k| {
                a[k] * ((1.0 - tx) * (1.0 - ty))
                    + b[k] * (tx * (1.0 - ty))
                    + c[k] * ((1.0 - tx) * ty)
                    + d[k] * (tx * ty)
            })
            .collect();
        Some(VectorValue::with_norm(comps, self.norm))
    }

    /// Bilinear interpolation renormalized over whichever of the four
    /// surrounding nodes are active; `None` if none is.
    pub fn interpolate_partial(&self, z: Complex64) -> Option<VectorValue> {
        let fx = (z.re - self.grid.x0) / self.grid.h;
        let fy = (z.im - self.grid.y0) / self.grid.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let i = (fx.floor() as usize).min(self.grid.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(self.grid.ny.saturating_sub(2));
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        if tx > 1.0 + 1e-9 || ty > 1.0 + 1e-9 {
            return None;
        }
        let corners = [
            (i, j, (1.0 - tx) * (1.0 - ty)),
            (i + 1, j, tx * (1.0 - ty)),
            (i, j + 1, (1.0 - tx) * ty),
            (i + 1, j + 1, tx * ty),
        ];
        let mut acc = vec![Complex64::new(0.0, 0.0); self.dim];
        let mut total = 0.0;
        for (a, b, wgt) in corners {
            if let Some(v) = self.value(a, b) {
                // tiny floor keeps a lone active corner usable at its own weight 0
                let wgt = wgt.max(1e-12);
                total += wgt;
                for (s, c) in acc.iter_mut().zip(v) {
                    *s += c * wgt;
                }
            }
        }
        if total == 0.0 {
            return None;
        }
        Some(VectorValue::with_norm(acc.into_iter().map(|c| c / total).collect(), self.norm))
    }

    /// Centered-difference `df/dx + i df/dy` (twice d-bar) at an interior node.
    pub fn cauchy_riemann(&self, i: usize, j: usize) -> Option<Vec<Complex64>> {
        if i == 0 || j == 0 {
            return None;
        }
        self.value(i, j)?;
        let e = self.value(i + 1, j)?;
        let w = self.value(i - 1, j)?;
        let n = self.value(i, j + 1)?;
        let s = self.value(i, j - 1)?;
        let inv = 1.0 / (2.0 * self.grid.h);
        Some(
            (0..self.dim)
                .map(|k| (e[k] - w[k]) * inv + Complex64::i() * (n[k] - s[k]) * inv)
                .collect(),
        )
    }

    /// Centered-difference d-bar as a new field on the interior nodes.
    pub fn dbar(&self) -> GridField {
        let mut out = GridField::empty(self.grid, self.region.clone(), self.dim);
        out.norm = self.norm;
        for (i, j) in self.active_nodes().collect::<Vec<_>>() {
            if let Some(cr) = self.cauchy_riemann(i, j) {
                let half: Vec<Complex64> = cr.iter().map(|c| c * 0.5).collect();
                out.set(i, j, &half);
            }
        }
        out
    }

    /// Write `x, y, re_1, im_1, ...` rows for active nodes.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), GridError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string(), "y".to_string()];
        for k in 1..=self.dim {
            header.push(format!("re_{k}"));
            header.push(format!("im_{k}"));
        }
        wr.write_record(&header).map_err(|e| GridError::Csv(e.to_string()))?;
        for (i, j) in self.active_nodes() {
            let z = self.grid.node(i, j);
            let mut rec = vec![format!("{:?}", z.re), format!("{:?}", z.im)];
            for c in self.value(i, j).expect("active") {
                rec.push(format!("{:?}", c.re));
                rec.push(format!("{:?}", c.im));
            }
            wr.write_record(&rec).map_err(|e| GridError::Csv(e.to_string()))?;
        }
        wr.flush().map_err(|e| GridError::Csv(e.to_string()))
    }

    /// Read a field written by [`GridField::write_csv`] onto a known grid.
    pub fn read_csv<R: Read>(r: R, grid: Grid, region: Region) -> Result<GridField, GridError> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers().map_err(|e| GridError::Csv(e.to_string()))?.clone();
        if headers.len() < 4 || headers.len() % 2 != 0 {
            return Err(GridError::Csv(format!("unexpected header {headers:?}")));
        }
        let dim = (headers.len() - 2) / 2;
        let mut field = GridField::empty(grid, region, dim);
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| GridError::Csv(e.to_string()))?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| GridError::Csv(format!("row {}: {e}", line + 2)))?;
            let i = ((nums[0] - grid.x0) / grid.h).round();
            let j = ((nums[1] - grid.y0) / grid.h).round();
            if i < 0.0 || j < 0.0 || i as usize >= grid.nx || j as usize >= grid.ny {
                return Err(GridError::Csv(format!("row {}: node off grid", line + 2)));
            }
            let v: Vec<Complex64> = nums[2..].chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            field.set(i as usize, j as usize, &v);
        }
        Ok(field)
    }
}

/// Largest centered-difference Cauchy–Riemann residual `|f_x + i f_y|` over
/// interior nodes (equal to `2 |df/dzbar|`).
pub fn holo_residual(field: &GridField) -> Result<f64, GridError> {
    holo_residual_where(field, |_| true)
}

pub fn holo_residual_where(field: &GridField, include: impl Fn(Complex64) -> bool) -> Result<f64, GridError> {
    let g = field.grid();
    if g.nx < 3 || g.ny < 3 {
        return Err(GridError::GridTooCoarse { nx: g.nx, ny: g.ny });
    }
    Ok(field
        .active_nodes()
        .filter(|&(i, j)| include(g.node(i, j)))
        .filter_map(|(i, j)| field.cauchy_riemann(i, j))
        .map(|cr| field.norm_kind().of(&cr))
        .fold(0.0, f64::max))
}
