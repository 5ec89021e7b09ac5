//! Completeness probes for the metric `M̂^{-1}`: ray quadrature, lattice
//! geodesics and first-arrival times.

mod completeness;
mod lattice;
mod probe;

use thiserror::Error;

pub use completeness::{
    power_law_classify, ray_completeness, ray_completeness_with, Classification, CompletenessVerdict, PowerLaw, RayEnd, CUTOFFS,
};
pub use lattice::{eikonal_arrival, lattice_geodesic, stencil_bound, DistanceField, MetricField, SpeedField, Stencil};
pub use probe::{boundary_distance_probe, geometric_margins, ProbeResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("speed must be positive and finite, got {value} at t = {t}")]
    SpeedNotPositive { t: f64, value: f64 },
    #[error("invalid interval: {0}")]
    BadInterval(String),
    #[error("no source nodes given")]
    EmptySources,
    #[error("source node {0} is not a valid passable node")]
    BadSource(usize),
    #[error("metric is not positive definite at node {node} ({coord:?})")]
    NotSpd { node: usize, coord: Vec<f64> },
    #[error("velocity field has no majorant")]
    MissingMajorant,
    #[error("probe {0:?} is outside the domain")]
    ProbeOutside(Vec<f64>),
    #[error("invalid margins: {0}")]
    Margin(String),
    #[error("stencil: {0}")]
    Stencil(String),
}
