//! Rectilinear node lattices shared by the velocity, geometry and evolution code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::systems::BoxDomain;

pub const MIN_NODES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs {expected} axes, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("axis {axis} has {nodes} nodes; at least {MIN_NODES} are required")]
    TooFewNodes { axis: usize, nodes: usize },
    #[error("axis {axis} has non-positive spacing {spacing}")]
    BadSpacing { axis: usize, spacing: f64 },
}

/// Uniform lattice: node `i` on axis `a` sits at `origin[a] + i * spacing[a]`.
/// Linear indices are row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    origin: Vec<f64>,
    spacing: Vec<f64>,
    nodes: Vec<usize>,
}

impl Grid {
    pub fn uniform(origin: Vec<f64>, spacing: Vec<f64>, nodes: Vec<usize>) -> Result<Self, GridError> {
        if spacing.len() != origin.len() || nodes.len() != origin.len() {
            return Err(GridError::Dimension { expected: origin.len(), found: nodes.len().min(spacing.len()) });
        }
        for (axis, (&n, &h)) in nodes.iter().zip(&spacing).enumerate() {
            if n < MIN_NODES {
                return Err(GridError::TooFewNodes { axis, nodes: n });
            }
            if !(h > 0.0 && h.is_finite()) {
                return Err(GridError::BadSpacing { axis, spacing: h });
            }
        }
        Ok(Grid { origin, spacing, nodes })
    }

    /// Cell-centred nodes over the finite window of `domain`; no node lies on the boundary.
    pub fn cell_centered(domain: &BoxDomain, nodes: &[usize]) -> Result<Self, GridError> {
        if nodes.len() != domain.dim() {
            return Err(GridError::Dimension { expected: domain.dim(), found: nodes.len() });
        }
        let spacing: Vec<f64> = (0..domain.dim())
            .map(|a| (domain.upper()[a] - domain.lower()[a]) / nodes[a] as f64)
            .collect();
        let origin = (0..domain.dim()).map(|a| domain.lower()[a] + 0.5 * spacing[a]).collect();
        Self::uniform(origin, spacing, nodes.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Stride of `axis` in the linear index.
    pub fn stride(&self, axis: usize) -> usize {
        self.nodes[axis + 1..].iter().product()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().enumerate().map(|(a, &i)| i * self.stride(a)).sum()
    }

    pub fn multi(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.nodes[a];
            idx /= self.nodes[a];
        }
        out
    }

    pub fn coord(&self, idx: usize) -> Vec<f64> {
        self.multi(idx)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + i as f64 * self.spacing[a])
            .collect()
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    /// Neighbour of `idx` displaced by `offset` nodes along `axis`, if it exists.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let i = (idx / self.stride(axis)) % self.nodes[axis];
        let j = i as isize + offset;
        if j < 0 || j >= self.nodes[axis] as isize {
            return None;
        }
        Some((idx as isize + offset * self.stride(axis) as isize) as usize)
    }

    /// Neighbour displaced by a full integer vector.
    pub fn offset(&self, idx: usize, delta: &[isize]) -> Option<usize> {
        let m = self.multi(idx);
        let mut out = 0;
        for a in 0..self.dim() {
            let j = m[a] as isize + delta[a];
            if j < 0 || j >= self.nodes[a] as isize {
                return None;
            }
            out += j as usize * self.stride(a);
        }
        Some(out)
    }

    /// Nearest node to a point (clamped to the lattice).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = (0..self.dim())
            .map(|a| {
                let t = ((x[a] - self.origin[a]) / self.spacing[a]).round();
                t.clamp(0.0, (self.nodes[a] - 1) as f64) as usize
            })
            .collect();
        self.index(&multi)
    }

    /// Volume weight of each node (cell-centred midpoint rule).
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// Deterministic low-discrepancy point in `[0,1)^d` (radical inverse in bases 2, 3, 5).
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const BASES: [usize; 3] = [2, 3, 5];
    (0..dim)
        .map(|a| {
            let b = BASES[a];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}
