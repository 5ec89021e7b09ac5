//! Semi-discrete evolution `i ∂_t Ψ = 𝔻Ψ` on node lattices.
//!
//! The spatial operator uses the symmetrised form
//! `(𝔻Ψ)_i = E_i^{-1} [ -(i/2) Σ_j Σ_m w_m (A^j_i + A^j_{i+m}) Ψ_{i+m} + V_i Ψ_i ]`
//! with antisymmetric central weights `w_m`, so it is exactly symmetric in the
//! discrete energy inner product. Values outside the grid (or outside the
//! domain) are zero.

use std::io::{self, Write};

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::matkernel::{CMatrix, C64};
use crate::systems::{CoefficientSystem, SystemError};
use crate::velocity::velocity_matrix;

const MAX_K: usize = 16;
const PARALLEL_NODES: usize = 4096;
const I: C64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: C64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("grid has dimension {grid} but the system has dimension {system}")]
    GridMismatch { grid: usize, system: usize },
    #[error("state has {found} values, expected {expected}")]
    StateSize { expected: usize, found: usize },
    #[error("fibre dimension {0} exceeds the supported maximum of 16")]
    FibreTooLarge(usize),
    #[error("velocity matrix vanishes on every node; set the time step explicitly")]
    NoPropagation,
    #[error("non-finite value at step {step} (t = {t}); retry with a smaller cfl than {cfl}")]
    Unstable { step: usize, t: f64, cfl: f64 },
    #[error("implicit midpoint iteration did not converge at step {step}; reduce the time step")]
    MidpointDiverged { step: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Spatial order of the central differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Order {
    #[default]
    Second,
    Fourth,
}

impl Order {
    /// `(offset, weight·h)` pairs of the antisymmetric first-derivative stencil.
    fn weights(self) -> &'static [(isize, f64)] {
        match self {
            Order::Second => &[(-1, -0.5), (1, 0.5)],
            Order::Fourth => &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)],
        }
    }
}

/// Time integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    Rk4,
    /// Implicit midpoint rule solved by fixed-point iteration.
    Midpoint,
}

/// Matrix field on the nodes restricted to a shared sparsity pattern.
#[derive(Debug, Clone)]
struct MatField {
    pattern: Vec<(usize, usize)>,
    values: Vec<C64>,
    constant: bool,
}

impl MatField {
    fn build(mats: &[CMatrix], inside: &[bool]) -> Self {
        let k = mats[0].dim();
        let mut pattern = Vec::new();
        for r in 0..k {
            for c in 0..k {
                if mats.iter().zip(inside).any(|(m, &ins)| ins && m[(r, c)] != ZERO) {
                    pattern.push((r, c));
                }
            }
        }
        let first = inside.iter().position(|&b| b);
        let constant = match first {
            Some(f) => mats.iter().zip(inside).all(|(m, &ins)| !ins || m == &mats[f]),
            None => true,
        };
        let values = if constant {
            let m = &mats[first.unwrap_or(0)];
            pattern.iter().map(|&(r, c)| m[(r, c)]).collect()
        } else {
            mats.iter().flat_map(|m| pattern.iter().map(move |&(r, c)| m[(r, c)])).collect()
        };
        MatField { pattern, values, constant }
    }

    fn is_zero(&self) -> bool {
        self.pattern.is_empty()
    }

    #[inline]
    fn apply_add(&self, node: usize, x: &[C64], y: &mut [C64], s: C64) {
        let off = if self.constant { 0 } else { node * self.pattern.len() };
        for (p, &(r, c)) in self.pattern.iter().enumerate() {
            y[r] += s * self.values[off + p] * x[c];
        }
    }

    fn quad(&self, node: usize, x: &[C64]) -> f64 {
        let off = if self.constant { 0 } else { node * self.pattern.len() };
        let mut s = ZERO;
        for (p, &(r, c)) in self.pattern.iter().enumerate() {
            s += x[r].conj() * self.values[off + p] * x[c];
        }
        s.re
    }
}

/// The discrete operator with all coefficients sampled on the grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    k: usize,
    order: Order,
    inside: Vec<bool>,
    energy: Option<MatField>,
    energy_inv: Option<MatField>,
    flux: Vec<MatField>,
    potential: Option<MatField>,
}

impl DiscreteOperator {
    pub fn new(sys: &CoefficientSystem, grid: &Grid, order: Order) -> Result<Self, EvolveError> {
        if grid.dim() != sys.dim() {
            return Err(EvolveError::GridMismatch { grid: grid.dim(), system: sys.dim() });
        }
        let k = sys.k();
        if k > MAX_K {
            return Err(EvolveError::FibreTooLarge(k));
        }
        let inside: Vec<bool> = (0..grid.len()).map(|i| sys.domain().contains(&grid.coord(i))).collect();
        type Row = (CMatrix, CMatrix, Vec<CMatrix>, CMatrix);
        let rows: Vec<Result<Row, SystemError>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                if !inside[i] {
                    let z = CMatrix::zeros(k);
                    return Ok((z.clone(), z.clone(), vec![z.clone(); sys.dim()], z));
                }
                let x = grid.coord(i);
                let e = sys.energy_at(&x)?;
                let flux = (0..sys.dim()).map(|j| sys.flux_at(j, &x).map(|a| a.into_matrix())).collect::<Result<_, _>>()?;
                Ok((e.matrix().clone(), e.inverse().matrix().clone(), flux, sys.potential_at(&x)?.into_matrix()))
            })
            .collect();
        let mut es = Vec::with_capacity(grid.len());
        let mut einv = Vec::with_capacity(grid.len());
        let mut fl: Vec<Vec<CMatrix>> = vec![Vec::with_capacity(grid.len()); sys.dim()];
        let mut vs = Vec::with_capacity(grid.len());
        for r in rows {
            let (e, ei, f, v) = r?;
            es.push(e);
            einv.push(ei);
            for (j, a) in f.into_iter().enumerate() {
                fl[j].push(a);
            }
            vs.push(v);
        }
        let (energy, energy_inv) = if sys.energy_is_identity() {
            (None, None)
        } else {
            (Some(MatField::build(&es, &inside)), Some(MatField::build(&einv, &inside)))
        };
        let potential = MatField::build(&vs, &inside);
        let flux = fl.iter().map(|f| MatField::build(f, &inside)).collect();
        Ok(DiscreteOperator {
            grid: grid.clone(),
            k,
            order,
            inside,
            energy,
            energy_inv,
            flux,
            potential: if potential.is_zero() { None } else { Some(potential) },
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn state_len(&self) -> usize {
        self.grid.len() * self.k
    }

    fn node_apply(&self, i: usize, psi: &[C64], out: &mut [C64]) {
        let k = self.k;
        if !self.inside[i] {
            out.fill(ZERO);
            return;
        }
        let mut acc = [ZERO; MAX_K];
        let acc = &mut acc[..k];
        for (j, a) in self.flux.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let h = self.grid.spacing()[j];
            for &(m, w) in self.order.weights() {
                let Some(nb) = self.grid.neighbor(i, j, m) else { continue };
                if !self.inside[nb] {
                    continue;
                }
                let s = C64::new(0.0, -0.5 * w / h);
                let x = &psi[nb * k..nb * k + k];
                a.apply_add(i, x, acc, s);
                a.apply_add(nb, x, acc, s);
            }
        }
        if let Some(v) = &self.potential {
            v.apply_add(i, &psi[i * k..i * k + k], acc, C64::new(1.0, 0.0));
        }
        match &self.energy_inv {
            Some(e) => {
                out.fill(ZERO);
                e.apply_add(i, acc, out, C64::new(1.0, 0.0));
            }
            None => out.copy_from_slice(acc),
        }
    }

    /// `out = 𝔻 ψ`.
    pub fn apply_into(&self, psi: &[C64], out: &mut [C64]) {
        let k = self.k;
        if self.grid.len() >= PARALLEL_NODES {
            out.par_chunks_mut(k).enumerate().for_each(|(i, o)| self.node_apply(i, psi, o));
        } else {
            out.chunks_mut(k).enumerate().for_each(|(i, o)| self.node_apply(i, psi, o));
        }
    }

    pub fn apply(&self, psi: &[C64]) -> Result<Vec<C64>, EvolveError> {
        self.check_len(psi)?;
        let mut out = vec![ZERO; psi.len()];
        self.apply_into(psi, &mut out);
        Ok(out)
    }

    fn check_len(&self, psi: &[C64]) -> Result<(), EvolveError> {
        if psi.len() != self.state_len() {
            return Err(EvolveError::StateSize { expected: self.state_len(), found: psi.len() });
        }
        Ok(())
    }

    /// Pointwise energy density `⟨ψ_i, E_i ψ_i⟩`.
    pub fn density(&self, psi: &[C64]) -> Vec<f64> {
        let k = self.k;
        psi.chunks(k)
            .enumerate()
            .map(|(i, x)| {
                if !self.inside[i] {
                    return 0.0;
                }
                match &self.energy {
                    Some(e) => e.quad(i, x),
                    None => x.iter().map(|v| v.norm_sqr()).sum(),
                }
            })
            .collect()
    }

    /// Discrete energy `Σ_i ⟨ψ_i, E_i ψ_i⟩ · cell volume`.
    pub fn energy(&self, psi: &[C64]) -> f64 {
        self.density(psi).iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete energy inner product `Σ_i ⟨u_i, E_i v_i⟩ · cell volume`.
    pub fn inner(&self, u: &[C64], v: &[C64]) -> C64 {
        let k = self.k;
        let mut s = ZERO;
        let mut tmp = [ZERO; MAX_K];
        for i in 0..self.grid.len() {
            if !self.inside[i] {
                continue;
            }
            let (ui, vi) = (&u[i * k..i * k + k], &v[i * k..i * k + k]);
            let ev: &[C64] = match &self.energy {
                Some(e) => {
                    tmp[..k].fill(ZERO);
                    e.apply_add(i, vi, &mut tmp[..k], C64::new(1.0, 0.0));
                    &tmp[..k]
                }
                None => vi,
            };
            for c in 0..k {
                s += ui[c].conj() * ev[c];
            }
        }
        s * self.grid.cell_volume()
    }
}

/// `𝔻Ψ` for a one-off state on `grid` with second-order differences.
pub fn apply_operator(sys: &CoefficientSystem, grid: &Grid, psi: &[C64]) -> Result<Vec<C64>, EvolveError> {
    DiscreteOperator::new(sys, grid, Order::Second)?.apply(psi)
}

/// Energy of `psi` on `grid`.
pub fn energy(sys: &CoefficientSystem, grid: &Grid, psi: &[C64]) -> Result<f64, EvolveError> {
    let op = DiscreteOperator::new(sys, grid, Order::Second)?;
    op.check_len(psi)?;
    Ok(op.energy(psi))
}

/// `dt = cfl · min h / max_x √λ_max(M(x))` over the grid nodes inside the domain.
pub fn cfl_dt(sys: &CoefficientSystem, grid: &Grid, cfl: f64) -> Result<f64, EvolveError> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(EvolveError::Invalid(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    let speeds: Vec<Result<f64, SystemError>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.coord(i);
            if !sys.domain().contains(&x) {
                return Ok(0.0);
            }
            Ok(velocity_matrix(sys, &x)?.max_eigenvalue().max(0.0).sqrt())
        })
        .collect();
    let mut vmax: f64 = 0.0;
    for s in speeds {
        vmax = vmax.max(s?);
    }
    if vmax == 0.0 {
        return Err(EvolveError::NoPropagation);
    }
    Ok(cfl * grid.min_spacing() / vmax)
}

/// Grid function `ψ` with its time stamp.
#[derive(Debug, Clone)]
pub struct WaveState {
    pub grid: Grid,
    pub k: usize,
    pub psi: Vec<C64>,
    pub t: f64,
}

impl WaveState {
    pub fn zeros(grid: &Grid, k: usize) -> Self {
        WaveState { grid: grid.clone(), k, psi: vec![ZERO; grid.len() * k], t: 0.0 }
    }

    /// `components · exp(-|x - center|² / (2σ²))`, zero outside the domain.
    pub fn gaussian(op: &DiscreteOperator, center: &[f64], sigma: f64, components: &[C64]) -> Result<Self, EvolveError> {
        let grid = op.grid();
        if center.len() != grid.dim() || components.len() != op.k() || !(sigma > 0.0) {
            return Err(EvolveError::Invalid("pulse needs a centre per axis, one component per field and σ > 0".into()));
        }
        let mut st = Self::zeros(grid, op.k());
        for i in 0..grid.len() {
            if !op.inside()[i] {
                continue;
            }
            let x = grid.coord(i);
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            let amp = (-r2 / (2.0 * sigma * sigma)).exp();
            for c in 0..op.k() {
                st.psi[i * op.k() + c] = components[c] * amp;
            }
        }
        Ok(st)
    }

    pub fn max_abs(&self) -> f64 {
        self.psi.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.psi.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.grid.dim();
        let mut head: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
        for c in 1..=self.k {
            head.push(format!("re{c}"));
            head.push(format!("im{c}"));
        }
        writeln!(w, "{}", head.join(","))?;
        for i in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.coord(i).iter().map(|v| format!("{v:.16e}")).collect();
            for c in 0..self.k {
                let z = self.psi[i * self.k + c];
                row.push(format!("{:.16e}", z.re));
                row.push(format!("{:.16e}", z.im));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Axis-aligned box `[lo_a, hi_a]` of node coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SupportBox {
    pub fn union(&self, o: &SupportBox) -> SupportBox {
        SupportBox {
            lo: self.lo.iter().zip(&o.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&o.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }
}

/// Smallest box holding every node with `density ≥ threshold² · reference`.
/// `None` when no node qualifies (including the zero state).
pub fn support_box(grid: &Grid, density: &[f64], threshold: f64, reference: f64) -> Option<SupportBox> {
    if !(reference > 0.0) {
        return None;
    }
    let cut = threshold * threshold * reference;
    let d = grid.dim();
    let mut lo = vec![usize::MAX; d];
    let mut hi = vec![0usize; d];
    let mut any = false;
    for (i, &rho) in density.iter().enumerate() {
        if rho >= cut && rho > 0.0 {
            any = true;
            let m = grid.multi(i);
            for a in 0..d {
                lo[a] = lo[a].min(m[a]);
                hi[a] = hi[a].max(m[a]);
            }
        }
    }
    any.then(|| SupportBox {
        lo: (0..d).map(|a| grid.axis_coord(a, lo[a])).collect(),
        hi: (0..d).map(|a| grid.axis_coord(a, hi[a])).collect(),
    })
}

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub cfl: f64,
    /// Overrides the CFL-derived step when set.
    pub dt: Option<f64>,
    pub scheme: Scheme,
    pub support_threshold: f64,
    /// Node indices whose first arrival is recorded.
    pub probes: Vec<usize>,
    pub probe_threshold: f64,
    /// Track the union of support boxes over every step.
    pub track_envelope: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            t_final: 1.0,
            cfl: 0.4,
            dt: None,
            scheme: Scheme::Rk4,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            probes: Vec::new(),
            probe_threshold: DEFAULT_SUPPORT_THRESHOLD,
            track_envelope: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LogEntry {
    pub t: f64,
    pub energy: f64,
    pub support: Option<SupportBox>,
    /// Distance from the support box to the grid edge (length units).
    pub boundary_margin: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EvolutionLog {
    pub entries: Vec<LogEntry>,
    /// Union of the support boxes over all steps (when tracked).
    pub envelope: Option<SupportBox>,
    pub boundary_contaminated: bool,
    pub steps: usize,
    pub dt: f64,
    pub warnings: Vec<String>,
}

impl EvolutionLog {
    /// `max |E(t) - E(0)| / E(0)` over the logged samples.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = match self.entries.first() {
            Some(e) if e.energy > 0.0 => e.energy,
            _ => return 0.0,
        };
        self.entries.iter().map(|e| (e.energy - e0).abs() / e0).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, d: usize) -> io::Result<()> {
        let mut head = vec!["t".to_string(), "energy".to_string()];
        for a in 1..=d {
            head.push(format!("supp_lo_{a}"));
            head.push(format!("supp_hi_{a}"));
        }
        head.push("boundary_margin".into());
        head.push("max_abs".into());
        writeln!(w, "{}", head.join(","))?;
        for e in &self.entries {
            let mut row = vec![format!("{:.16e}", e.t), format!("{:.16e}", e.energy)];
            for a in 0..d {
                match &e.support {
                    Some(b) => {
                        row.push(format!("{:.16e}", b.lo[a]));
                        row.push(format!("{:.16e}", b.hi[a]));
                    }
                    None => {
                        row.push("nan".into());
                        row.push("nan".into());
                    }
                }
            }
            row.push(format!("{:.16e}", e.boundary_margin));
            row.push(format!("{:.16e}", e.max_abs));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub state: WaveState,
    pub log: EvolutionLog,
    /// First time each probe's density reached `probe_threshold² · max initial density`.
    pub arrivals: Vec<f64>,
}

fn grid_margin(grid: &Grid, b: &Option<SupportBox>) -> f64 {
    let Some(b) = b else { return f64::INFINITY };
    (0..grid.dim())
        .map(|a| {
            let lo = grid.origin()[a];
            let hi = grid.axis_coord(a, grid.nodes()[a] - 1);
            (b.lo[a] - lo).min(hi - b.hi[a])
        })
        .fold(f64::INFINITY, f64::min)
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

struct Stepper<'a> {
    op: &'a DiscreteOperator,
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl<'a> Stepper<'a> {
    fn new(op: &'a DiscreteOperator) -> Self {
        let n = op.state_len();
        Stepper { op, k1: vec![ZERO; n], k2: vec![ZERO; n], k3: vec![ZERO; n], k4: vec![ZERO; n], tmp: vec![ZERO; n] }
    }

    /// Classic RK4 on `ψ' = -i 𝔻 ψ`.
    fn rk4(&mut self, psi: &mut [C64], dt: f64) {
        let op = self.op;
        let f = -I;
        op.apply_into(psi, &mut self.k1);
        self.tmp.copy_from_slice(psi);
        axpy(&mut self.tmp, f * (0.5 * dt), &self.k1);
        op.apply_into(&self.tmp, &mut self.k2);
        self.tmp.copy_from_slice(psi);
        axpy(&mut self.tmp, f * (0.5 * dt), &self.k2);
        op.apply_into(&self.tmp, &mut self.k3);
        self.tmp.copy_from_slice(psi);
        axpy(&mut self.tmp, f * dt, &self.k3);
        op.apply_into(&self.tmp, &mut self.k4);
        let c = f * (dt / 6.0);
        for i in 0..psi.len() {
            psi[i] += c * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }

    /// Implicit midpoint: `z = ψ - i dt 𝔻((ψ + z)/2)` by fixed-point iteration.
    fn midpoint(&mut self, psi: &mut [C64], dt: f64) -> bool {
        let op = self.op;
        let scale = psi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        self.k2.copy_from_slice(psi);
        for _ in 0..200 {
            for i in 0..psi.len() {
                self.tmp[i] = 0.5 * (psi[i] + self.k2[i]);
            }
            op.apply_into(&self.tmp, &mut self.k1);
            let mut change = 0.0;
            for i in 0..psi.len() {
                let z = psi[i] - I * dt * self.k1[i];
                change += (z - self.k2[i]).norm_sqr();
                self.k2[i] = z;
            }
            if change.sqrt() <= 1e-15 * scale {
                psi.copy_from_slice(&self.k2);
                return true;
            }
            if !change.is_finite() {
                return false;
            }
        }
        false
    }
}

/// Integrate from `state0` to `opts.t_final`.
pub fn integrate(
    sys: &CoefficientSystem,
    op: &DiscreteOperator,
    state0: &WaveState,
    opts: &EvolveOptions,
) -> Result<EvolutionResult, EvolveError> {
    op.check_len(&state0.psi)?;
    if !state0.is_finite() {
        return Err(EvolveError::Invalid("initial state has non-finite entries".into()));
    }
    if !(opts.t_final >= 0.0) {
        return Err(EvolveError::Invalid(format!("final time must be non-negative, got {}", opts.t_final)));
    }
    let grid = op.grid();
    let dt0 = match opts.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(EvolveError::Invalid(format!("time step must be positive, got {dt}"))),
        None => cfl_dt(sys, grid, opts.cfl)?,
    };
    let steps = if opts.t_final == 0.0 { 0 } else { (opts.t_final / dt0).ceil() as usize };
    let dt = if steps > 0 { opts.t_final / steps as f64 } else { 0.0 };
    let every = (steps / 1000).max(1);
    let edge = 4.0 * grid.spacing().iter().copied().fold(0.0, f64::max);

    let mut psi = state0.psi.clone();
    let dens0 = op.density(&psi);
    let reference = dens0.iter().copied().fold(0.0, f64::max);
    let mut log = EvolutionLog { steps, dt, ..Default::default() };
    let probe_cut = opts.probe_threshold * opts.probe_threshold * reference;
    let mut arrivals = vec![f64::INFINITY; opts.probes.len()];

    let record = |psi: &[C64], t: f64, dens: &[f64], log: &mut EvolutionLog| {
        let support = support_box(grid, dens, opts.support_threshold, reference);
        let margin = grid_margin(grid, &support);
        if margin < edge && !log.boundary_contaminated {
            log.boundary_contaminated = true;
            log.warnings.push(format!("support within 4 nodes of the grid edge at t = {t:.6}; run is boundary-contaminated"));
        }
        log.entries.push(LogEntry {
            t,
            energy: dens.iter().sum::<f64>() * grid.cell_volume(),
            support,
            boundary_margin: margin,
            max_abs: psi.iter().map(|v| v.norm()).fold(0.0, f64::max),
        });
    };
    let check_probes = |dens: &[f64], t: f64, arrivals: &mut [f64]| {
        for (p, &node) in opts.probes.iter().enumerate() {
            if arrivals[p].is_infinite() && reference > 0.0 && dens[node] >= probe_cut {
                arrivals[p] = t;
            }
        }
    };

    let init_margin = grid_margin(grid, &support_box(grid, &dens0, opts.support_threshold, reference));
    if init_margin < edge {
        let msg = "initial support lies within 4 nodes of the grid edge".to_string();
        warn!("{msg}");
        log.warnings.push(msg);
    }
    record(&psi, state0.t, &dens0, &mut log);
    check_probes(&dens0, state0.t, &mut arrivals);
    if opts.track_envelope {
        log.envelope = log.entries[0].support.clone();
    }

    let mut stepper = Stepper::new(op);
    for step in 1..=steps {
        let t = state0.t + step as f64 * dt;
        match opts.scheme {
            Scheme::Rk4 => stepper.rk4(&mut psi, dt),
            Scheme::Midpoint => {
                if !stepper.midpoint(&mut psi, dt) {
                    return Err(EvolveError::MidpointDiverged { step });
                }
            }
        }
        if psi.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(EvolveError::Unstable { step, t, cfl: opts.cfl });
        }
        let need_log = step % every == 0 || step == steps;
        if need_log || opts.track_envelope || !opts.probes.is_empty() {
            let dens = op.density(&psi);
            check_probes(&dens, t, &mut arrivals);
            if opts.track_envelope {
                if let Some(b) = support_box(grid, &dens, opts.support_threshold, reference) {
                    log.envelope = Some(match &log.envelope {
                        Some(e) => e.union(&b),
                        None => b,
                    });
                }
            }
            if need_log {
                record(&psi, t, &dens, &mut log);
            }
        }
    }
    let state = WaveState { grid: grid.clone(), k: op.k(), psi, t: state0.t + opts.t_final };
    Ok(EvolutionResult { state, log, arrivals })
}

/// First time each probe node's density exceeds `threshold² · max initial density`.
pub fn arrival_time(
    sys: &CoefficientSystem,
    op: &DiscreteOperator,
    state0: &WaveState,
    probes: &[usize],
    threshold: f64,
    t_final: f64,
    cfl: f64,
) -> Result<Vec<f64>, EvolveError> {
    let opts = EvolveOptions {
        t_final,
        cfl,
        probes: probes.to_vec(),
        probe_threshold: threshold,
        track_envelope: false,
        ..Default::default()
    };
    Ok(integrate(sys, op, state0, &opts)?.arrivals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{elastic_isotropic, telegraph, BoxDomain};

    fn line(n: usize) -> (CoefficientSystem, Grid) {
        let dom = BoxDomain::bounded(vec![0.0], vec![1.0]).unwrap();
        let grid = Grid::cell_centered(&dom, &[n]).unwrap();
        (telegraph("1", "1", dom).unwrap(), grid)
    }

    #[test]
    fn zero_state_maps_to_zero() {
        let (sys, grid) = line(32);
        let out = apply_operator(&sys, &grid, &vec![ZERO; 64]).unwrap();
        assert!(out.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn plane_wave_dispersion() {
        let (sys, grid) = line(200);
        let w = 7.0;
        let h = grid.spacing()[0];
        let psi: Vec<C64> = (0..200)
            .flat_map(|i| {
                let z = C64::from_polar(1.0, w * grid.coord(i)[0]);
                [z, z]
            })
            .collect();
        let out = apply_operator(&sys, &grid, &psi).unwrap();
        let lam = (w * h).sin() / h;
        for i in 1..199 {
            for c in 0..2 {
                assert!((out[2 * i + c] - psi[2 * i + c] * lam).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_coefficients_match_central_difference() {
        let (sys, grid) = line(16);
        let h = grid.spacing()[0];
        let psi: Vec<C64> = (0..32).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let out = apply_operator(&sys, &grid, &psi).unwrap();
        let get = |i: isize, c: usize| if i < 0 || i >= 16 { ZERO } else { psi[i as usize * 2 + c] };
        for i in 0..16isize {
            for c in 0..2 {
                let other = 1 - c;
                let diff = (get(i + 1, other) - get(i - 1, other)) / (2.0 * h);
                assert!((out[i as usize * 2 + c] - (-I) * diff).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_examples() {
        let dom = BoxDomain::bounded(vec![0.0], vec![1.0]).unwrap();
        let grid = Grid::cell_centered(&dom, &[64]).unwrap();
        let sys = telegraph("2", "1", dom.clone()).unwrap();
        let psi: Vec<C64> = (0..64).flat_map(|_| [C64::new(1.0, 0.0), ZERO]).collect();
        assert!((energy(&sys, &grid, &psi).unwrap() - 2.0).abs() < 1e-13);

        let dom3 = BoxDomain::bounded(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let g3 = Grid::cell_centered(&dom3, &[8, 8, 8]).unwrap();
        let el = elastic_isotropic("1", "1", "0.3", dom3).unwrap();
        let mut psi = vec![ZERO; g3.len() * 9];
        for i in 0..g3.len() {
            psi[i * 9 + 6] = C64::new(1.0, 0.0);
        }
        assert!((energy(&el, &g3, &psi).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn cfl_examples() {
        let dom = BoxDomain::bounded(vec![0.0], vec![1.0]).unwrap();
        let grid = Grid::uniform(vec![0.1], vec![1e-3], vec![100]).unwrap();
        let sys = telegraph("1", "1", dom).unwrap();
        let dt = cfl_dt(&sys, &grid, 0.4).unwrap();
        assert!((dt - 0.4e-3 / 2f64.sqrt()).abs() < 1e-15);
        assert!(cfl_dt(&sys, &grid, 1.5).is_err());
    }

    #[test]
    fn support_of_gaussian() {
        let (sys, grid) = line(2048);
        let op = DiscreteOperator::new(&sys, &grid, Order::Second).unwrap();
        let st = WaveState::gaussian(&op, &[0.5], 0.02, &[C64::new(1.0, 0.0), ZERO]).unwrap();
        let dens = op.density(&st.psi);
        let b = support_box(&grid, &dens, 1e-8, 1.0).unwrap();
        let w = 0.02 * (1e16f64).ln().sqrt();
        let h = grid.spacing()[0];
        assert!((b.lo[0] - (0.5 - w)).abs() < 1.5 * h, "{:?}", b);
        assert!((b.hi[0] - (0.5 + w)).abs() < 1.5 * h, "{:?}", b);
        assert!(support_box(&grid, &vec![0.0; 2048], 1e-8, 0.0).is_none());
    }

    #[test]
    fn zero_state_stays_zero() {
        let (sys, grid) = line(64);
        let op = DiscreteOperator::new(&sys, &grid, Order::Second).unwrap();
        let st = WaveState::zeros(&grid, 2);
        let r = integrate(&sys, &op, &st, &EvolveOptions { t_final: 0.1, ..Default::default() }).unwrap();
        assert!(r.state.psi.iter().all(|v| *v == ZERO));
        assert!(r.log.entries.iter().all(|e| e.energy == 0.0));
    }

    #[test]
    fn midpoint_conserves_energy() {
        let (sys, grid) = line(256);
        let op = DiscreteOperator::new(&sys, &grid, Order::Fourth).unwrap();
        let st = WaveState::gaussian(&op, &[0.5], 0.05, &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]).unwrap();
        let opts = EvolveOptions { t_final: 0.1, scheme: Scheme::Midpoint, ..Default::default() };
        let r = integrate(&sys, &op, &st, &opts).unwrap();
        assert!(r.log.relative_energy_drift() < 1e-12, "{}", r.log.relative_energy_drift());
    }
}
