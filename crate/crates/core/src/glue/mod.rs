//! Gluing local approximants into one holomorphic function: cocycles on a
//! cover of a boundary annulus, partitions of unity, Cauchy–Pompeiu d-bar
//! solves and the two-chart correction.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::grid::GridError;

pub mod cauchy;
pub mod cover;
pub mod partition;
pub mod pipeline;

pub use cauchy::{cauchy_point, cauchy_transform, cauchy_transform_field, AnnularSupport, CauchyPlan, WidthBound};
pub use cover::{build_cover, Chart, ChartKind, CircularNeighbourhood, Cover, CoverLayout};
pub use partition::{AngularPartition, RadialPartition, RadialTaper, SMOOTHSTEP_SLOPE};
pub use pipeline::{
    approximate, build_cocycle, first_glue, radial_partition, resolve_cocycle, second_glue, Approximation,
    ApproximationReport, CertificateEntry, Cocycle, Constants, DiskData, Geometry, GlueConfig, LocalFunction,
    PipelineFields, Resolution, SingularApproximant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Local,
    Cover,
    Cocycle,
    Resolve,
    FirstGlue,
    SecondGlue,
    Certificate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Input => "input",
            Stage::Local => "local",
            Stage::Cover => "cover",
            Stage::Cocycle => "cocycle",
            Stage::Resolve => "resolve",
            Stage::FirstGlue => "first_glue",
            Stage::SecondGlue => "second_glue",
            Stage::Certificate => "certificate",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum GlueError {
    #[error("cover mismatch: {0}")]
    CoverMismatch(String),
    #[error("{stage}: residual {residual:e} above threshold {threshold:e}")]
    NotHolomorphic { stage: Stage, residual: f64, threshold: f64 },
    #[error("{stage}: chart values disagree by {mismatch:e} (tolerance {tolerance:e})")]
    GlueMismatch { stage: Stage, mismatch: f64, tolerance: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl GlueError {
    pub fn at<E: std::error::Error + Send + Sync + 'static>(stage: Stage) -> impl FnOnce(E) -> GlueError {
        move |e| GlueError::Stage { stage, source: Box::new(e) }
    }
}
