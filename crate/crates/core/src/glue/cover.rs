//! Covers of a boundary band by circular neighbourhoods, with the angular
//! partition of unity subordinate to them.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cauchy::AnnularSupport;
use super::partition::AngularPartition;
use super::GlueError;
use crate::disk::CirclePoint;

/// `{ |z - z0| < radius, |z| <= 1, z != z0 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularNeighbourhood {
    pub z0: CirclePoint,
    pub radius: f64,
}

impl CircularNeighbourhood {
    pub fn contains(&self, z: Complex64) -> bool {
        let d = (z - self.z0.point()).norm();
        d < self.radius && d > 0.0 && z.norm() <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Singular,
    Regular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub neighbourhood: CircularNeighbourhood,
    pub kind: ChartKind,
}

/// Layout controls for [`build_cover`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverLayout {
    /// Largest angular gap between chart centers.
    pub max_spacing: f64,
    /// Growth rate of the gaps with angular distance from a singular point.
    pub grading: f64,
    /// Plateau fraction of the angular partition.
    pub plateau: f64,
    /// Chart radii exceed the reach of their bump by this factor.
    pub radius_margin: f64,
}

impl Default for CoverLayout {
    fn default() -> Self {
        Self { max_spacing: 0.4, grading: 0.1, plateau: 0.25, radius_margin: 1.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cover {
    charts: Vec<Chart>,
    partition: AngularPartition,
    band: AnnularSupport,
}

/// Largest distance from `e^{ic}` to the band sector `[c - before, c + after]`.
fn sector_reach(band: AnnularSupport, before: f64, after: f64) -> f64 {
    let mut reach = 1.0 - band.inner;
    for alpha in [before, after] {
        let alpha = alpha.min(std::f64::consts::PI);
        for r in [band.inner, band.outer.min(1.0)] {
            reach = reach.max((1.0 + r * r - 2.0 * r * alpha.cos()).max(0.0).sqrt());
        }
    }
    reach
}

/// Chart layout around the singular points: each singular point comes with
/// the radius on which its local approximant is accurate, which caps the
/// adjacent gaps; gaps then grow by `grading` per unit angle up to
/// `max_spacing`.
pub fn build_cover(
    singular: &[(CirclePoint, f64)],
    band: AnnularSupport,
    layout: &CoverLayout,
) -> Result<Cover, GlueError> {
    let keep = 1.0 - layout.plateau;
    let mut sing: Vec<(f64, f64)> = Vec::with_capacity(singular.len());
    for &(z0, radius) in singular {
        // largest gap whose bump sector (with graded neighbours) fits in the radius
        let mut gap = radius.min(layout.max_spacing);
        let grown = 1.0 + layout.grading;
        while gap > 1e-6 && sector_reach(band, keep * gap * grown, keep * gap * grown) * layout.radius_margin > radius {
            gap *= 0.95;
        }
        if gap <= 1e-6 {
            return Err(GlueError::CoverMismatch(format!(
                "radius {radius} at {} is too small for band width {}",
                z0.angle(),
                band.width()
            )));
        }
        sing.push((z0.angle().rem_euclid(TAU), gap));
    }
    sing.sort_by(|a, b| a.0.total_cmp(&b.0));
    let spacing = |theta: f64| {
        sing.iter()
            .map(|&(a, g)| {
                let d = (theta - a).rem_euclid(TAU);
                g + layout.grading * d.min(TAU - d)
            })
            .fold(layout.max_spacing, f64::min)
    };

    let mut centers: Vec<(f64, ChartKind)> = Vec::new();
    if sing.is_empty() {
        let n = (TAU / layout.max_spacing).ceil().max(3.0) as usize;
        centers.extend((0..n).map(|k| (TAU * k as f64 / n as f64, ChartKind::Regular)));
    } else {
        for (k, &(a, _)) in sing.iter().enumerate() {
            centers.push((a, ChartKind::Singular));
            let b = if k + 1 < sing.len() { sing[k + 1].0 } else { sing[0].0 + TAU };
            let gap = b - a;
            // cumulative count of cells, trapezoid rule on 1/spacing
            let m = 4000;
            let mut phi = vec![0.0; m + 1];
            for i in 1..=m {
                let t0 = a + gap * (i - 1) as f64 / m as f64;
                let t1 = a + gap * i as f64 / m as f64;
                phi[i] = phi[i - 1] + 0.5 * (1.0 / spacing(t0) + 1.0 / spacing(t1)) * (t1 - t0);
            }
            let cells = phi[m].ceil().max(1.0) as usize;
            for c in 1..cells {
                let target = phi[m] * c as f64 / cells as f64;
                let i = phi.partition_point(|&p| p < target).clamp(1, m);
                let frac = (target - phi[i - 1]) / (phi[i] - phi[i - 1]);
                let theta = a + gap * (i as f64 - 1.0 + frac) / m as f64;
                centers.push((theta.rem_euclid(TAU), ChartKind::Regular));
            }
        }
    }
    Cover::from_centers(centers, band, layout)
}

impl Cover {
    /// Charts at the given angles; radii are the reach of each bump.
    pub fn from_centers(
        mut centers: Vec<(f64, ChartKind)>,
        band: AnnularSupport,
        layout: &CoverLayout,
    ) -> Result<Cover, GlueError> {
        if centers.is_empty() {
            return Err(GlueError::CoverMismatch("no charts".into()));
        }
        for c in centers.iter_mut() {
            c.0 = c.0.rem_euclid(TAU);
        }
        centers.sort_by(|x, y| x.0.total_cmp(&y.0));
        if centers.windows(2).any(|w| w[1].0 - w[0].0 < 1e-9) {
            return Err(GlueError::CoverMismatch("coincident chart centers".into()));
        }
        let partition = AngularPartition::new(centers.iter().map(|c| c.0).collect(), layout.plateau);
        let charts: Vec<Chart> = centers
            .iter()
            .enumerate()
            .map(|(k, &(theta, kind))| {
                let (before, after) = partition.support(k);
                let radius = if centers.len() == 1 { 2.0 } else { sector_reach(band, before, after) * layout.radius_margin };
                Chart {
                    neighbourhood: CircularNeighbourhood { z0: CirclePoint::new(theta).expect("finite angle"), radius },
                    kind,
                }
            })
            .collect();

        // no singular point may touch a foreign chart
        for (k, ch) in charts.iter().enumerate() {
            for (j, other) in charts.iter().enumerate() {
                if j != k && other.kind == ChartKind::Singular {
                    let d = (other.neighbourhood.z0.point() - ch.neighbourhood.z0.point()).norm();
                    if d <= ch.neighbourhood.radius {
                        return Err(GlueError::CoverMismatch(format!(
                            "chart at {} (radius {}) reaches the singular point {}",
                            ch.neighbourhood.z0.angle(),
                            ch.neighbourhood.radius,
                            other.neighbourhood.z0.angle()
                        )));
                    }
                }
            }
        }
        Ok(Cover { charts, partition, band })
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn partition(&self) -> &AngularPartition {
        &self.partition
    }

    pub fn band(&self) -> AnnularSupport {
        self.band
    }

    /// Is `z` in the band and in chart `k`?
    pub fn in_chart(&self, k: usize, z: Complex64) -> bool {
        let r = z.norm();
        r >= self.band.inner && r < 1.0 && self.charts[k].neighbourhood.contains(z)
    }

    /// Unordered pairs of charts whose neighbourhoods meet inside the band.
    pub fn overlaps(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.charts.len() {
            for j in k + 1..self.charts.len() {
                if self.meet(&[k, j]) {
                    out.push((k, j));
                }
            }
        }
        out
    }

    /// Triples of charts with a common point in the band.
    pub fn triple_overlaps(&self) -> Vec<(usize, usize, usize)> {
        let pairs = self.overlaps();
        let mut out = Vec::new();
        for &(k, j) in &pairs {
            for l in j + 1..self.charts.len() {
                if pairs.contains(&(k, l)) && pairs.contains(&(j, l)) && self.meet(&[k, j, l]) {
                    out.push((k, j, l));
                }
            }
        }
        out
    }

    /// Sampled check for a common point of several charts inside the band.
    fn meet(&self, idx: &[usize]) -> bool {
        let c: Vec<_> = idx.iter().map(|&k| self.charts[k].neighbourhood).collect();
        for a in &c {
            for b in &c {
                if (a.z0.point() - b.z0.point()).norm() >= a.radius + b.radius {
                    return false;
                }
            }
        }
        let n_theta = 2048;
        let radii = [self.band.inner, 0.5 * (self.band.inner + 1.0), 1.0 - 1e-9];
        (0..n_theta).any(|i| {
            let theta = TAU * (i as f64 + 0.5) / n_theta as f64;
            radii.iter().any(|&r| {
                let z = Complex64::from_polar(r, theta);
                c.iter().all(|n| n.contains(z))
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> AnnularSupport {
        AnnularSupport { inner: 0.93, outer: 1.0 }
    }

    fn check_subordinate(cover: &Cover) {
        let lo = cover.band().inner;
        for i in 0..3000 {
            for r in [lo + 1e-6, 0.5 * (lo + 1.0), 0.999_999] {
                let z = Complex64::from_polar(r, TAU * (i as f64 + 0.5) / 3000.0);
                for b in cover.partition().eval(z) {
                    assert!(cover.in_chart(b.index, z), "bump {} nonzero outside its chart at {z}", b.index);
                }
            }
        }
    }

    #[test]
    fn regular_cover() {
        let cover = build_cover(&[], band(), &CoverLayout::default()).unwrap();
        assert!(cover.len() >= 16);
        assert!(cover.charts().iter().all(|c| c.kind == ChartKind::Regular));
        check_subordinate(&cover);
        assert_eq!(cover.overlaps().len(), cover.len());
    }

    #[test]
    fn singular_cover_excludes_foreign_singular_points() {
        let s = [(CirclePoint::new(1.0).unwrap(), 0.12), (CirclePoint::new(-1.0).unwrap(), 0.12)];
        let cover = build_cover(&s, AnnularSupport { inner: 0.97, outer: 1.0 }, &CoverLayout::default()).unwrap();
        let sing: Vec<_> = cover.charts().iter().filter(|c| c.kind == ChartKind::Singular).collect();
        assert_eq!(sing.len(), 2);
        for c in &sing {
            assert!(c.neighbourhood.radius <= 0.12 + 1e-12);
        }
        for w in cover.partition().centers().windows(2) {
            assert!(w[1] - w[0] <= 0.4 + 1e-9);
        }
        let p = cover.partition();
        for k in 0..cover.len() {
            let ratio = p.gap_after(k) / p.gap_before(k);
            assert!(ratio < 1.25 && ratio > 0.8, "{ratio}");
        }
        check_subordinate(&cover);
    }

    #[test]
    fn tiny_radius_rejected() {
        let s = [(CirclePoint::new(0.0).unwrap(), 0.01)];
        assert!(build_cover(&s, AnnularSupport { inner: 0.8, outer: 1.0 }, &CoverLayout::default()).is_err());
    }
}
