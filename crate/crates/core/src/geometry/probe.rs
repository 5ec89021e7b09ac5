//! Geodesic distance from an interior probe to shrinking boundary layers.

use std::collections::BTreeMap;

use serde_json::json;

use super::completeness::{grade_increments, linear_fit, Classification, CompletenessVerdict};
use super::lattice::{lattice_geodesic, DistanceField, MetricField, Stencil};
use super::GeometryError;
use crate::systems::BoxDomain;

const LINEAR_RESIDUAL: f64 = 0.01;
const FIT_POINTS: usize = 5;
/// Tail increments within this ratio of each other count as non-decaying.
/// A convergent distance halves its increments with every margin.
const FLAT_INCREMENTS: f64 = 0.5;

/// Distance layers and the graded verdict of a boundary probe.
#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub layers: Vec<(f64, f64)>,
    pub verdict: CompletenessVerdict,
    pub field: DistanceField,
}

/// Margins `m0 · 2^{-n}` from `m0` down to (not below) `floor`.
pub fn geometric_margins(m0: f64, floor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = m0;
    while m >= floor && out.len() < 64 {
        out.push(m);
        m *= 0.5;
    }
    out
}

/// Largest boundary distance over the grid's interior nodes.
fn half_width(metric: &MetricField, domain: &BoxDomain) -> f64 {
    (0..metric.grid.len())
        .filter(|&i| metric.g[i].is_some())
        .filter_map(|i| domain.boundary_distance(&metric.grid.coord(i)).map(|p| p.0))
        .fold(0.0, f64::max)
}

/// For each margin `m`, the metric distance from `probe` to `{δ ≤ m}`.
///
/// Divergence is certified when the last distances grow at least linearly in
/// the halving index, i.e. at least like `log(1/m)`: a linear fit, increments
/// that never shrink, or increments that stay within a factor of two.
///
/// The distance to a layer is taken from the nodes just outside it, each
/// extended along its boundary normal by the local metric length of the
/// remaining gap. The sequence is made monotone as `m` decreases.
pub fn boundary_distance_probe(
    metric: &MetricField,
    domain: &BoxDomain,
    probe: &[f64],
    margins: &[f64],
    stencil: Stencil,
) -> Result<ProbeResult, GeometryError> {
    if !domain.contains(probe) {
        return Err(GeometryError::ProbeOutside(probe.to_vec()));
    }
    if margins.is_empty() || margins.iter().any(|&m| !(m > 0.0)) || margins.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(GeometryError::Margin("margins must be positive and strictly decreasing".into()));
    }
    let hw = half_width(metric, domain);
    if margins[0] > hw {
        return Err(GeometryError::Margin(format!("margin {} exceeds the domain half-width {hw}", margins[0])));
    }
    let grid = &metric.grid;
    let src = grid.nearest(probe);
    let field = lattice_geodesic(metric, &[src], stencil)?;
    let d = grid.dim();
    let band = 1.5 * grid.spacing().iter().copied().fold(0.0, f64::max) * (d as f64).sqrt();

    let nodes: Vec<(usize, f64, Vec<f64>)> = (0..grid.len())
        .filter(|&i| metric.g[i].is_some() && field.values[i].is_finite())
        .filter_map(|i| domain.boundary_distance(&grid.coord(i)).map(|(dist, n)| (i, dist, n)))
        .collect();

    let mut layers = Vec::with_capacity(margins.len());
    let mut running: f64 = 0.0;
    for &m in margins {
        let nearest = nodes.iter().filter(|n| n.1 >= m).map(|n| n.1).fold(f64::INFINITY, f64::min);
        let top = m.max(nearest) + band;
        let mut best = f64::INFINITY;
        for (i, dist, n) in &nodes {
            if *dist < m || *dist > top {
                continue;
            }
            let g = metric.g[*i].as_ref().unwrap();
            let step = (dist - m) * g.quad(n).max(0.0).sqrt();
            best = best.min(field.values[*i] + step);
        }
        running = running.max(best);
        layers.push((m, running));
    }

    let mut params = BTreeMap::new();
    params.insert("probe".into(), json!(probe));
    params.insert("stencil_bound".into(), json!(field.stencil_bound));
    let dists: Vec<f64> = layers.iter().map(|l| l.1).collect();
    let mut verdict = CompletenessVerdict {
        classification: Classification::Inconclusive,
        criterion: "boundary-distance".into(),
        cutoffs: margins.to_vec(),
        integrals: dists.clone(),
        parameters: params,
    };
    for w in &metric.warnings {
        verdict.push_warning(w.clone());
    }
    if dists.iter().any(|v| v.is_infinite()) {
        verdict.classification = Classification::CertifiedDivergent;
        verdict.push_warning("boundary layer unreachable on the lattice");
    } else if dists.len() < 3 {
        verdict.push_warning("too few margins to grade");
    } else {
        let k = dists.len().min(FIT_POINTS);
        let tail = &dists[dists.len() - k..];
        let xs: Vec<f64> = (0..k).map(|i| i as f64).collect();
        let (slope, rms) = linear_fit(&xs, tail);
        let range = (tail[k - 1] - tail[0]).abs().max(1e-300);
        verdict.parameters.insert("layer_slope".into(), json!(slope));
        verdict.parameters.insert("layer_fit_relative_residual".into(), json!(rms / range));
        let inc: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
        let accelerating = inc[0] > 0.0 && inc.windows(2).all(|w| w[1] >= w[0]);
        let inc_min = inc.iter().copied().fold(f64::INFINITY, f64::min);
        let inc_max = inc.iter().copied().fold(0.0, f64::max);
        let level = inc_min > 0.0 && inc_min >= FLAT_INCREMENTS * inc_max;
        verdict.classification = if slope > 0.0 && (rms / range < LINEAR_RESIDUAL || accelerating || level) {
            Classification::CertifiedDivergent
        } else {
            grade_increments(&dists, &mut verdict.parameters)
        };
    }
    Ok(ProbeResult { layers, verdict, field })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::velocity::SymMatrix;

    fn line_metric(n: usize, m: impl Fn(f64) -> f64) -> (MetricField, BoxDomain) {
        let dom = BoxDomain::bounded(vec![0.0], vec![1.0]).unwrap();
        let grid = Grid::cell_centered(&dom, &[n]).unwrap();
        let g = (0..n).map(|i| SymMatrix::diag(&[1.0 / m(grid.coord(i)[0])])).collect();
        (MetricField::from_nodes(grid, g), dom)
    }

    #[test]
    fn constant_metric_reaches_boundary() {
        let (metric, dom) = line_metric(2048, |_| 2.0);
        let margins = geometric_margins(0.25, 2e-3);
        let r = boundary_distance_probe(&metric, &dom, &[0.5], &margins, Stencil::Standard).unwrap();
        assert_eq!(r.verdict.classification, Classification::LikelyConvergent);
        let lim = r.verdict.limit().unwrap();
        assert!((lim - 0.5 / 2f64.sqrt()).abs() < 2e-3, "{lim}");
        assert!(r.layers.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn logarithmic_growth_is_certified() {
        let (metric, dom) = line_metric(2048, |x| 2.0 * (x * (1.0 - x)).powi(2));
        let margins = geometric_margins(0.25, 2e-3);
        let r = boundary_distance_probe(&metric, &dom, &[0.5], &margins, Stencil::Standard).unwrap();
        assert_eq!(r.verdict.classification, Classification::CertifiedDivergent, "{:?}", r.verdict);
        let (m, d) = r.layers[r.layers.len() - 1];
        let exact = ((1.0 - m) / m).ln() / 2f64.sqrt();
        assert!((d - exact).abs() / exact < 0.02, "{d} vs {exact}");
    }

    #[test]
    fn power_growth_is_certified() {
        let (metric, dom) = line_metric(2048, |x| 2.0 * (x * (1.0 - x)).powi(4));
        let margins = geometric_margins(0.25, 2e-3);
        let r = boundary_distance_probe(&metric, &dom, &[0.5], &margins, Stencil::Standard).unwrap();
        assert_eq!(r.verdict.classification, Classification::CertifiedDivergent, "{:?}", r.verdict);
    }

    #[test]
    fn margin_errors() {
        let (metric, dom) = line_metric(64, |_| 1.0);
        assert!(boundary_distance_probe(&metric, &dom, &[0.5], &[0.6], Stencil::Standard).is_err());
        assert!(boundary_distance_probe(&metric, &dom, &[0.5], &[0.1, 0.2], Stencil::Standard).is_err());
        assert!(boundary_distance_probe(&metric, &dom, &[1.5], &[0.1], Stencil::Standard).is_err());
    }
}
