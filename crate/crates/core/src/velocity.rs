//! Velocity matrix `M_jl = Tr(E^{-1/2} A^j E^{-1} A^l E^{-1/2})`, characteristic
//! speeds, Chernoff/Fattorini bounds and a grid-level smooth majorant.

use std::f64::consts::PI;
use std::io::{self, Write};

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::Grid;
use crate::matkernel::{op_norm, CMatrix, HermitianMatrix, MatError, NORM_FLOOR};
use crate::systems::{elastic_a, maxwell_a, CoefficientSystem, SystemError, SystemKind};

#[derive(Debug, Error)]
pub enum VelocityError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("majorant check failed at node {node} with slack {delta}: defect {defect:e}")]
    Majorant { node: usize, delta: f64, defect: f64 },
    #[error("slack must lie in (0, 1), got {0}")]
    BadSlack(f64),
    #[error("direction must have unit length, got |n| = {0}")]
    NotUnit(f64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn mat_err(field: &str, x: &[f64], source: MatError) -> SystemError {
    SystemError::Matrix { field: field.into(), point: x.to_vec(), source }
}

/// Real symmetric `d × d` matrix, `d ≤ 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    d: usize,
    a: [[f64; 3]; 3],
}

impl SymMatrix {
    pub fn zeros(d: usize) -> Self {
        assert!((1..=3).contains(&d));
        SymMatrix { d, a: [[0.0; 3]; 3] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.a[i][i] = 1.0;
        }
        m
    }

    /// From a full row-major array; the symmetric part is kept.
    pub fn from_rows(d: usize, rows: &[&[f64]]) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.a[i][j] = 0.5 * (rows[i][j] + rows[j][i]);
            }
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.a[i][i] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
        self.a[j][i] = v;
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for row in m.a.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    pub fn add(&self, o: &SymMatrix) -> Self {
        let mut m = *self;
        for i in 0..3 {
            for j in 0..3 {
                m.a[i][j] += o.a[i][j];
            }
        }
        m
    }

    pub fn sub(&self, o: &SymMatrix) -> Self {
        self.add(&o.scale(-1.0))
    }

    /// `⟨ξ, M ξ⟩`.
    pub fn quad(&self, xi: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += xi[i] * self.a[i][j] * xi[j];
            }
        }
        s
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.d).map(|i| (0..self.d).map(|j| self.a[i][j] * v[j]).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn hermitian(&self) -> HermitianMatrix {
        let data: Vec<f64> = (0..self.d).flat_map(|i| (0..self.d).map(move |j| (i, j))).map(|(i, j)| self.a[i][j]).collect();
        HermitianMatrix::from_real(self.d, &data).expect("symmetric by construction")
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.d {
            1 => vec![self.a[0][0]],
            2 => {
                let (p, q, r) = (self.a[0][0], self.a[0][1], self.a[1][1]);
                let m = 0.5 * (p + r);
                let s = (0.25 * (p - r) * (p - r) + q * q).sqrt();
                vec![m - s, m + s]
            }
            _ => self.hermitian().eig().map(|e| e.values).unwrap_or_else(|_| vec![f64::NAN; self.d]),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    pub fn norm(&self) -> f64 {
        let e = self.eigenvalues();
        e[0].abs().max(e[e.len() - 1].abs())
    }

    /// `V f(Λ) Vᵀ`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Result<SymMatrix, MatError> {
        if self.d == 1 {
            let mut m = *self;
            m.a[0][0] = f(self.a[0][0]);
            return Ok(m);
        }
        let e = self.hermitian().eig()?;
        let mut m = Self::zeros(self.d);
        for i in 0..self.d {
            for j in i..self.d {
                let mut s = 0.0;
                for (l, &lam) in e.values.iter().enumerate() {
                    s += (e.vectors[(i, l)] * e.vectors[(j, l)].conj()).re * f(lam);
                }
                m.set(i, j, s);
            }
        }
        Ok(m)
    }

    pub fn inverse(&self) -> Result<SymMatrix, MatError> {
        self.spectral_map(|l| 1.0 / l)
    }

    /// Upper triangle, row-major.
    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in i..self.d {
                out.push(self.a[i][j]);
            }
        }
        out
    }
}

/// `E^{-1/2} A^j E^{-1/2}` for every axis at `x`.
pub fn canonical_flux(sys: &CoefficientSystem, x: &[f64]) -> Result<Vec<CMatrix>, SystemError> {
    let f = sys.energy_at(x)?.inv_sqrt().matrix().clone();
    (0..sys.dim())
        .map(|j| {
            let a = sys.flux_at(j, x)?;
            if sys.energy_is_identity() {
                Ok(a.into_matrix())
            } else {
                Ok(&(&f * a.matrix()) * &f)
            }
        })
        .collect()
}

fn gram(mats: &[CMatrix]) -> SymMatrix {
    let d = mats.len();
    let mut m = SymMatrix::zeros(d);
    for j in 0..d {
        for l in j..d {
            m.set(j, l, mats[j].trace_product_re(&mats[l]));
        }
    }
    m
}

/// Velocity matrix at `x` through the general trace formula.
pub fn velocity_matrix(sys: &CoefficientSystem, x: &[f64]) -> Result<SymMatrix, SystemError> {
    Ok(gram(&canonical_flux(sys, x)?))
}

fn inv3(m: &[[f64; 3]; 3], name: &str, x: &[f64]) -> Result<[[f64; 3]; 3], SystemError> {
    let sym = SymMatrix::from_rows(3, &[&m[0], &m[1], &m[2]]);
    if sym.min_eigenvalue() <= 0.0 {
        return Err(mat_err(name, x, MatError::NotPositive { min_eig: sym.min_eigenvalue() }));
    }
    let inv = sym.inverse().map_err(|e| mat_err(name, x, e))?;
    Ok([[inv.a[0][0], inv.a[0][1], inv.a[0][2]], [inv.a[1][0], inv.a[1][1], inv.a[1][2]], [inv.a[2][0], inv.a[2][1], inv.a[2][2]]])
}

/// Closed forms for the Maxwell and elastic built-ins:
/// `M_jl = 2 Tr(ε^{-1} a^j μ^{-1} a^lᵀ)` and `M_jl = (2/ρ) Tr(C a^j a^lᵀ)`.
pub fn velocity_matrix_structured(sys: &CoefficientSystem, x: &[f64]) -> Result<SymMatrix, SystemError> {
    if !sys.domain().contains(x) {
        return Err(SystemError::OutsideDomain { point: x.to_vec() });
    }
    let d = sys.dim();
    let mut m = SymMatrix::zeros(d);
    match sys.kind() {
        SystemKind::Maxwell(spec) => {
            let ei = inv3(&spec.permittivity.at("eps", x)?, "eps", x)?;
            let mi = inv3(&spec.permeability.at("mu", x)?, "mu", x)?;
            for j in 0..d {
                let aj = maxwell_a(j);
                for l in j..d {
                    let al = maxwell_a(l);
                    // Tr(ε⁻¹ a^j μ⁻¹ a^lᵀ) = Σ ε⁻¹_pq a^j_qr μ⁻¹_rs a^l_ps
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            for r in 0..3 {
                                if aj[q][r] == 0.0 {
                                    continue;
                                }
                                for t in 0..3 {
                                    s += ei[p][q] * aj[q][r] * mi[r][t] * al[p][t];
                                }
                            }
                        }
                    }
                    m.set(j, l, 2.0 * s);
                }
            }
        }
        SystemKind::Elastic(spec) => {
            let rho = spec.density_at(x)?;
            let c = spec.stiffness_at(x)?;
            let c = c.matrix();
            for j in 0..d {
                let aj = elastic_a(j);
                for l in j..d {
                    let al = elastic_a(l);
                    // Tr(C a^j a^lᵀ) = Σ C_pq (a^j a^lᵀ)_qp
                    let mut s = 0.0;
                    for p in 0..6 {
                        for q in 0..6 {
                            let g: f64 = (0..3).map(|r| aj[q][r] * al[p][r]).sum();
                            if g != 0.0 {
                                s += c[(p, q)].re * g;
                            }
                        }
                    }
                    m.set(j, l, 2.0 * s / rho);
                }
            }
        }
        other => {
            return Err(SystemError::Unsupported(format!(
                "structured velocity matrix exists only for Maxwell and elastic built-ins, not {}",
                other.name()
            )))
        }
    }
    Ok(m)
}

fn combine(mats: &[CMatrix], n: &[f64]) -> HermitianMatrix {
    let mut acc = CMatrix::zeros(mats[0].dim());
    for (a, &c) in mats.iter().zip(n) {
        if c != 0.0 {
            acc = &acc + &a.scale(c);
        }
    }
    HermitianMatrix::new(acc).expect("real combination of Hermitian matrices")
}

/// Largest characteristic speed `‖E^{-1/2} σ(x, n) E^{-1/2}‖` in direction `n`.
pub fn char_speed(sys: &CoefficientSystem, x: &[f64], n: &[f64]) -> Result<f64, VelocityError> {
    let len = n.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n.len() != sys.dim() || (len - 1.0).abs() > 1e-9 {
        return Err(VelocityError::NotUnit(len));
    }
    let flux = canonical_flux(sys, x)?;
    Ok(op_norm(&combine(&flux, n)).map_err(|e| mat_err("symbol", x, e))?)
}

/// Unit directions used to sample the sphere: `±1` in 1-D, 128 angles in
/// 2-D, 256 Fibonacci points in 3-D.
pub fn sphere_directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..128)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 128.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let n = 256;
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => panic!("dimension {d} out of range"),
    }
}

/// Bracket for `c(x) = sup_{|ξ|=1} ‖Σ ξ_j Ã^j‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

fn chernoff_from(flux: &[CMatrix], x: &[f64]) -> Result<(Bracket, f64), SystemError> {
    let d = flux.len();
    let mut lower: f64 = 0.0;
    for n in sphere_directions(d) {
        lower = lower.max(op_norm(&combine(flux, &n)).map_err(|e| mat_err("symbol", x, e))?);
    }
    let mut r: f64 = 0.0;
    for a in flux {
        let h = HermitianMatrix::new(a.clone()).map_err(|e| mat_err("flux", x, e))?;
        r = r.max(op_norm(&h).map_err(|e| mat_err("flux", x, e))?);
    }
    let m = gram(flux);
    let upper = m.max_eigenvalue().max(0.0).sqrt().min((d as f64).sqrt() * r);
    Ok((Bracket { lower, upper: upper.max(lower) }, r))
}

/// Sampled lower bound and trace/Fattorini upper bound for the Chernoff speed.
pub fn chernoff_c(sys: &CoefficientSystem, x: &[f64]) -> Result<Bracket, SystemError> {
    Ok(chernoff_from(&canonical_flux(sys, x)?, x)?.0)
}

/// `r(x) = max_j ‖Ã^j(x)‖`.
pub fn fattorini_r(sys: &CoefficientSystem, x: &[f64]) -> Result<f64, SystemError> {
    let flux = canonical_flux(sys, x)?;
    let mut r: f64 = 0.0;
    for a in &flux {
        let h = HermitianMatrix::new(a.clone()).map_err(|e| mat_err("flux", x, e))?;
        r = r.max(op_norm(&h).map_err(|e| mat_err("flux", x, e))?);
    }
    Ok(r)
}

fn shell_points(d: usize, r: f64) -> Vec<Vec<f64>> {
    if r == 0.0 {
        return vec![vec![0.0; d]];
    }
    let dirs = match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..64)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 64.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => sphere_directions(3).into_iter().step_by(2).collect(),
    };
    dirs.into_iter().map(|n| n.iter().map(|v| v * r).collect()).collect()
}

/// Envelope `b(r) = sup_{|x| ≤ r} c(x)` from the Chernoff upper bound sampled on
/// shells, made monotone by a running maximum.
pub fn radial_envelope(sys: &CoefficientSystem, radii: &[f64]) -> Result<Vec<f64>, SystemError> {
    if !sys.domain().unbounded().iter().all(|s| s[0] && s[1]) {
        return Err(SystemError::Unsupported(
            "radial envelope needs an unbounded domain; use the boundary-distance criterion for bounded domains".into(),
        ));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|&r| !(r >= 0.0)) {
        return Err(SystemError::Invalid("radii must be non-negative and increasing".into()));
    }
    let mut out = Vec::with_capacity(radii.len());
    let mut running: f64 = 0.0;
    for &r in radii {
        for x in shell_points(sys.dim(), r) {
            if !sys.domain().contains(&x) {
                continue;
            }
            running = running.max(chernoff_c(sys, &x)?.upper);
        }
        out.push(running);
    }
    Ok(out)
}

/// Velocity matrix sampled on a grid, with an optional majorant.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub grid: Grid,
    pub samples: Vec<SymMatrix>,
    /// Nodes lying inside the domain; the rest carry zero samples.
    pub inside: Vec<bool>,
    pub majorant: Option<Vec<SymMatrix>>,
    pub delta: f64,
    pub eps_reg: f64,
    pub warnings: Vec<String>,
}

impl VelocityField {
    /// Sample `M` at every grid node (in parallel).
    pub fn sample(sys: &CoefficientSystem, grid: &Grid) -> Result<Self, SystemError> {
        let d = sys.dim();
        let res: Vec<Result<(SymMatrix, bool), SystemError>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.coord(i);
                if !sys.domain().contains(&x) {
                    return Ok((SymMatrix::zeros(d), false));
                }
                velocity_matrix(sys, &x).map(|m| (m, true))
            })
            .collect();
        let mut samples = Vec::with_capacity(grid.len());
        let mut inside = Vec::with_capacity(grid.len());
        for r in res {
            let (m, ins) = r?;
            samples.push(m);
            inside.push(ins);
        }
        Ok(VelocityField {
            grid: grid.clone(),
            samples,
            inside,
            majorant: None,
            delta: 0.0,
            eps_reg: 0.0,
            warnings: Vec::new(),
        })
    }

    pub fn from_samples(grid: Grid, samples: Vec<SymMatrix>) -> Self {
        let n = samples.len();
        VelocityField {
            grid,
            samples,
            inside: vec![true; n],
            majorant: None,
            delta: 0.0,
            eps_reg: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.samples.iter().map(SymMatrix::norm).fold(0.0, f64::max)
    }

    /// Worst `-λ_min(M̂ - M) / ‖M̂‖` over inside nodes (positive means violated) and its node.
    pub fn majorant_defect(&self) -> Option<(f64, usize)> {
        let maj = self.majorant.as_ref()?;
        let mut worst = (f64::NEG_INFINITY, 0);
        for (i, (m, h)) in self.samples.iter().zip(maj).enumerate() {
            if !self.inside[i] {
                continue;
            }
            let defect = -h.sub(m).min_eigenvalue() / h.norm().max(NORM_FLOOR);
            if defect > worst.0 {
                worst = (defect, i);
            }
        }
        Some(worst)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.grid.dim();
        let mut head: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
        for i in 1..=d {
            for j in i..=d {
                head.push(format!("M{i}{j}"));
            }
        }
        writeln!(w, "{}", head.join(","))?;
        for (i, m) in self.samples.iter().enumerate() {
            if !self.inside[i] {
                continue;
            }
            let row: Vec<String> =
                self.grid.coord(i).iter().chain(m.upper().iter()).map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

const BINOMIAL: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
pub const MAJORANT_TOL: f64 = 1e-10;

/// One pass of the 5-point binomial filter along `axis`, renormalised over
/// inside nodes.
fn smooth_axis(field: &VelocityField, data: &[SymMatrix], axis: usize) -> Vec<SymMatrix> {
    let g = &field.grid;
    let d = g.dim();
    (0..g.len())
        .into_par_iter()
        .map(|i| {
            if !field.inside[i] {
                return data[i];
            }
            let mut acc = SymMatrix::zeros(d);
            let mut wsum = 0.0;
            for (o, &w) in BINOMIAL.iter().enumerate() {
                if let Some(n) = g.neighbor(i, axis, o as isize - 2) {
                    if field.inside[n] {
                        acc = acc.add(&data[n].scale(w));
                        wsum += w;
                    }
                }
            }
            acc.scale(1.0 / wsum)
        })
        .collect()
}

fn mollify(field: &VelocityField) -> Vec<SymMatrix> {
    let mut data = field.samples.clone();
    for _ in 0..2 {
        for a in 0..field.grid.dim() {
            data = smooth_axis(field, &data, a);
        }
    }
    data
}

/// Grid majorant `M̂ = (1+δ)·mollified(M) + ε_reg·I` with `ε_reg = 1e-12·max‖M‖`.
/// The slack is doubled up to three times until `M̂ ⪰ M` holds at every node.
/// Nodes still violating it after that are lifted by the missing eigenvalue.
pub fn majorant(field: &VelocityField, delta: f64) -> Result<VelocityField, VelocityError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(VelocityError::BadSlack(delta));
    }
    let d = field.grid.dim();
    let mut out = field.clone();
    let max_norm = field.max_norm();
    out.eps_reg = if max_norm > 0.0 { 1e-12 * max_norm } else { 1e-12 };
    if max_norm == 0.0 {
        let msg = "velocity matrix vanishes on the whole grid; the metric is degenerate".to_string();
        warn!("{msg}");
        out.warnings.push(msg);
    } else if field.samples.iter().zip(&field.inside).any(|(m, &ins)| ins && m.min_eigenvalue() <= 1e-12 * max_norm) {
        out.warnings.push("velocity matrix is degenerate at some nodes; regularised there".into());
    }
    let smooth = mollify(field);
    let reg = SymMatrix::identity(d).scale(out.eps_reg);
    let mut dl = delta;
    for attempt in 0..4 {
        let maj: Vec<SymMatrix> = smooth.iter().map(|s| s.scale(1.0 + dl).add(&reg)).collect();
        out.majorant = Some(maj);
        out.delta = dl;
        let (defect, _) = out.majorant_defect().expect("just set");
        if defect <= MAJORANT_TOL {
            if attempt > 0 {
                out.warnings.push(format!("majorant slack raised from {delta} to {dl}"));
            }
            return Ok(out);
        }
        if attempt == 3 {
            // Rank-deficient fields whose eigenvectors rotate between nodes
            // are not dominated by any scalar multiple of their average. Lift
            // the offending nodes by the missing eigenvalue instead.
            let maj = out.majorant.as_mut().expect("just set");
            let mut lifted = 0usize;
            for (i, h) in maj.iter_mut().enumerate() {
                if !field.inside[i] {
                    continue;
                }
                let gap = -h.sub(&field.samples[i]).min_eigenvalue();
                if gap > 0.0 {
                    *h = h.add(&SymMatrix::identity(d).scale(gap * (1.0 + dl) + out.eps_reg));
                    lifted += 1;
                }
            }
            let (defect, node) = out.majorant_defect().expect("just set");
            if defect > MAJORANT_TOL {
                return Err(VelocityError::Majorant { node, delta: dl, defect });
            }
            let msg = format!("majorant slack raised from {delta} to {dl} and {lifted} nodes lifted isotropically");
            warn!("{msg}");
            out.warnings.push(msg);
            return Ok(out);
        }
        dl *= 2.0;
    }
    unreachable!()
}
