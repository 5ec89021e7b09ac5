//! Shortest paths on node lattices under anisotropic metrics and speed fields.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::grid::Grid;
use crate::velocity::{SymMatrix, VelocityField};

/// Neighbourhood used by the lattice graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    /// `±1` in 1-D, 8 neighbours in 2-D, 26 in 3-D.
    #[default]
    Standard,
    /// 2-D only: the 8 neighbours plus the 8 knight moves.
    Extended,
}

impl Stencil {
    pub fn offsets(self, d: usize) -> Result<Vec<[isize; 3]>, GeometryError> {
        let mut out = Vec::new();
        let r: isize = if self == Stencil::Extended { 2 } else { 1 };
        if self == Stencil::Extended && d != 2 {
            return Err(GeometryError::Stencil(format!("extended stencil is defined in 2-D only, not {d}-D")));
        }
        let range = |a: usize| if a < d { -r..=r } else { 0..=0 };
        for i in range(0) {
            for j in range(1) {
                for k in range(2) {
                    let o = [i, j, k];
                    if o == [0, 0, 0] {
                        continue;
                    }
                    let m = o.iter().map(|v| v.abs()).max().unwrap();
                    if m == 2 {
                        // knight moves only: one coordinate ±2, the other ±1
                        let mut a: Vec<isize> = o[..2].iter().map(|v| v.abs()).collect();
                        a.sort();
                        if a != [1, 2] {
                            continue;
                        }
                    }
                    out.push(o);
                }
            }
        }
        Ok(out)
    }
}

/// Metric tensor `G = M̂^{-1}` per node; impassable nodes carry `None`.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub grid: Grid,
    pub g: Vec<Option<SymMatrix>>,
    pub warnings: Vec<String>,
}

impl MetricField {
    /// Invert the majorant of `field`. Nodes outside the domain are impassable.
    pub fn from_majorant(field: &VelocityField) -> Result<Self, GeometryError> {
        let maj = field.majorant.as_ref().ok_or(GeometryError::MissingMajorant)?;
        let mut g = Vec::with_capacity(maj.len());
        for (i, h) in maj.iter().enumerate() {
            if !field.inside[i] {
                g.push(None);
                continue;
            }
            if !(h.min_eigenvalue() > 0.0) {
                return Err(GeometryError::NotSpd { node: i, coord: field.grid.coord(i) });
            }
            let inv = h.inverse().map_err(|_| GeometryError::NotSpd { node: i, coord: field.grid.coord(i) })?;
            g.push(Some(inv));
        }
        Ok(MetricField { grid: field.grid.clone(), g, warnings: field.warnings.clone() })
    }

    pub fn constant(grid: Grid, g: SymMatrix) -> Self {
        let n = grid.len();
        MetricField { grid, g: vec![Some(g); n], warnings: Vec::new() }
    }

    pub fn from_nodes(grid: Grid, g: Vec<SymMatrix>) -> Self {
        MetricField { grid, g: g.into_iter().map(Some).collect(), warnings: Vec::new() }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        for (i, g) in self.g.iter().enumerate() {
            if let Some(g) = g {
                if !(g.min_eigenvalue() > 0.0) {
                    return Err(GeometryError::NotSpd { node: i, coord: self.grid.coord(i) });
                }
            }
        }
        Ok(())
    }
}

/// Per-node distance or arrival time.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub sources: Vec<usize>,
    pub source_descriptor: String,
    /// Worst-case ratio of lattice to exact distance for the stencil used.
    pub stencil_bound: f64,
    pub warnings: Vec<String>,
}

impl DistanceField {
    pub fn at(&self, x: &[f64]) -> f64 {
        self.values[self.grid.nearest(x)]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.grid.dim();
        let mut head: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
        head.push("value".into());
        writeln!(w, "{}", head.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.grid.coord(i).iter().map(|c| format!("{c:.16e}")).collect();
            row.push(if v.is_finite() { format!("{v:.16e}") } else { "inf".into() });
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Lattice<'a> {
    grid: &'a Grid,
    offsets: Vec<[isize; 3]>,
    strides: [isize; 3],
    nodes: [isize; 3],
}

impl<'a> Lattice<'a> {
    fn new(grid: &'a Grid, stencil: Stencil) -> Result<Self, GeometryError> {
        let d = grid.dim();
        let mut strides = [0isize; 3];
        let mut nodes = [1isize; 3];
        for a in 0..d {
            strides[a] = grid.stride(a) as isize;
            nodes[a] = grid.nodes()[a] as isize;
        }
        Ok(Lattice { grid, offsets: stencil.offsets(d)?, strides, nodes })
    }

    fn multi(&self, idx: usize) -> [isize; 3] {
        let mut m = [0isize; 3];
        let mut r = idx as isize;
        for a in (0..self.grid.dim()).rev() {
            m[a] = r % self.nodes[a];
            r /= self.nodes[a];
        }
        m
    }

    /// Neighbours of `idx` with the physical displacement.
    fn for_each_neighbor(&self, idx: usize, mut f: impl FnMut(usize, [f64; 3])) {
        let m = self.multi(idx);
        let h = self.grid.spacing();
        'outer: for o in &self.offsets {
            let mut lin = idx as isize;
            let mut dx = [0.0; 3];
            for a in 0..self.grid.dim() {
                let j = m[a] + o[a];
                if j < 0 || j >= self.nodes[a] {
                    continue 'outer;
                }
                lin += o[a] * self.strides[a];
                dx[a] = o[a] as f64 * h[a];
            }
            f(lin as usize, dx);
        }
    }
}

fn dijkstra(
    lattice: &Lattice,
    sources: &[usize],
    passable: impl Fn(usize) -> bool,
    cost: impl Fn(usize, usize, &[f64; 3]) -> f64,
) -> Vec<f64> {
    let n = lattice.grid.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut srcs: Vec<usize> = sources.to_vec();
    srcs.sort_unstable();
    srcs.dedup();
    for &s in &srcs {
        dist[s] = 0.0;
        heap.push(Entry { dist: 0.0, node: s });
    }
    while let Some(Entry { dist: du, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        lattice.for_each_neighbor(u, |v, dx| {
            if done[v] || !passable(v) {
                return;
            }
            let nd = du + cost(u, v, &dx);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry { dist: nd, node: v });
            }
        });
    }
    dist
}

fn check_sources(grid: &Grid, sources: &[usize]) -> Result<(), GeometryError> {
    if sources.is_empty() {
        return Err(GeometryError::EmptySources);
    }
    if let Some(&s) = sources.iter().find(|&&s| s >= grid.len()) {
        return Err(GeometryError::BadSource(s));
    }
    Ok(())
}

/// Lattice geodesic distance from `sources` under `metric`.
pub fn lattice_geodesic(metric: &MetricField, sources: &[usize], stencil: Stencil) -> Result<DistanceField, GeometryError> {
    check_sources(&metric.grid, sources)?;
    metric.validate()?;
    if let Some(&s) = sources.iter().find(|&&s| metric.g[s].is_none()) {
        return Err(GeometryError::BadSource(s));
    }
    let lattice = Lattice::new(&metric.grid, stencil)?;
    let d = metric.grid.dim();
    let values = dijkstra(
        &lattice,
        sources,
        |v| metric.g[v].is_some(),
        |u, v, dx| {
            let gu = metric.g[u].as_ref().unwrap();
            let gv = metric.g[v].as_ref().unwrap();
            (0.5 * (gu.quad(&dx[..d]) + gv.quad(&dx[..d]))).max(0.0).sqrt()
        },
    );
    let bound = stencil_bound(&metric.grid, stencil, metric.g.iter().flatten().next().copied())?;
    Ok(DistanceField {
        grid: metric.grid.clone(),
        values,
        sources: sources.to_vec(),
        source_descriptor: format!("{} source node(s)", sources.len()),
        stencil_bound: bound,
        warnings: metric.warnings.clone(),
    })
}

/// Speed data for first-arrival times.
#[derive(Debug, Clone)]
pub enum SpeedField {
    /// Isotropic speed per node.
    Scalar(Vec<f64>),
    /// Direction-dependent speed `√⟨n, M n⟩` per node.
    Velocity(Vec<SymMatrix>),
}

/// First-arrival times: edge time is Euclidean length over the midpoint speed.
/// Nodes slower than `1e-12 · max` are impassable.
pub fn eikonal_arrival(grid: &Grid, speed: &SpeedField, sources: &[usize], stencil: Stencil) -> Result<DistanceField, GeometryError> {
    check_sources(grid, sources)?;
    let d = grid.dim();
    let peak = match speed {
        SpeedField::Scalar(s) => s.iter().copied().fold(0.0, f64::max),
        SpeedField::Velocity(m) => m.iter().map(|m| m.max_eigenvalue().max(0.0).sqrt()).fold(0.0, f64::max),
    };
    let floor = 1e-12 * peak;
    let fast: Vec<bool> = match speed {
        SpeedField::Scalar(s) => s.iter().map(|&v| v > floor).collect(),
        SpeedField::Velocity(m) => m.iter().map(|m| m.max_eigenvalue().max(0.0).sqrt() > floor).collect(),
    };
    let lattice = Lattice::new(grid, stencil)?;
    let values = dijkstra(
        &lattice,
        sources,
        |v| fast[v],
        |u, v, dx| {
            let len = dx[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = match speed {
                SpeedField::Scalar(s) => 0.5 * (s[u] + s[v]),
                SpeedField::Velocity(m) => {
                    let n: Vec<f64> = dx[..d].iter().map(|x| x / len).collect();
                    (0.5 * (m[u].quad(&n) + m[v].quad(&n))).max(0.0).sqrt()
                }
            };
            if s > floor {
                len / s
            } else {
                f64::INFINITY
            }
        },
    );
    Ok(DistanceField {
        grid: grid.clone(),
        values,
        sources: sources.to_vec(),
        source_descriptor: format!("{} source node(s)", sources.len()),
        stencil_bound: stencil_bound(grid, stencil, None)?,
        warnings: Vec::new(),
    })
}

/// Worst ratio of lattice to exact distance for a constant metric `g`
/// (Euclidean when `None`): the reciprocal inradius of the convex hull of the
/// normalised stencil directions in the metric's own coordinates.
pub fn stencil_bound(grid: &Grid, stencil: Stencil, g: Option<SymMatrix>) -> Result<f64, GeometryError> {
    let d = grid.dim();
    if d == 1 {
        return Ok(1.0);
    }
    let g = g.unwrap_or_else(|| SymMatrix::identity(d));
    let root = g.spectral_map(f64::sqrt).map_err(|_| GeometryError::Stencil("metric square root failed".into()))?;
    let h = grid.spacing();
    let pts: Vec<[f64; 3]> = stencil
        .offsets(d)?
        .iter()
        .map(|o| {
            let dx: Vec<f64> = (0..d).map(|a| o[a] as f64 * h[a]).collect();
            let w = root.mul_vec(&dx);
            let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut p = [0.0; 3];
            for a in 0..d {
                p[a] = w[a] / n;
            }
            p
        })
        .collect();
    let inradius = if d == 2 { inradius_2d(&pts) } else { inradius_3d(&pts) };
    Ok(1.0 / inradius)
}

fn inradius_2d(pts: &[[f64; 3]]) -> f64 {
    let mut ang: Vec<f64> = pts.iter().map(|p| p[1].atan2(p[0])).collect();
    ang.sort_by(f64::total_cmp);
    let mut best = f64::INFINITY;
    for i in 0..ang.len() {
        let a = ang[i];
        let b = if i + 1 < ang.len() { ang[i + 1] } else { ang[0] + 2.0 * std::f64::consts::PI };
        best = best.min((0.5 * (b - a)).cos());
    }
    best
}

fn inradius_3d(pts: &[[f64; 3]]) -> f64 {
    let n = pts.len();
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (u, v) = (sub(pts[j], pts[i]), sub(pts[k], pts[i]));
                let mut nrm = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
                let len = dot(nrm, nrm).sqrt();
                if len < 1e-12 {
                    continue;
                }
                for c in nrm.iter_mut() {
                    *c /= len;
                }
                let mut off = dot(nrm, pts[i]);
                if off < 0.0 {
                    off = -off;
                    for c in nrm.iter_mut() {
                        *c = -*c;
                    }
                }
                if pts.iter().all(|p| dot(nrm, *p) <= off + 1e-12) {
                    best = best.min(off);
                }
            }
        }
    }
    best
}
