//! `verify`: randomized invariant suite over every module.
//!
//! Each check reports the worst residual it observed against its tolerance.
//! All randomness flows from one seed.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::dsl::{parse, random_expr};
use crate::evolve::{integrate, DiscreteOperator, EvolveOptions, Order, WaveState};
use crate::geometry::{
    lattice_geodesic, ray_completeness, stencil_bound, MetricField, RayEnd, Stencil,
};
use crate::grid::Grid;
use crate::matkernel::{op_norm, CMatrix, HermitianMatrix, SpdMatrix, C64};
use crate::systems::{
    canonicalize, elastic, maxwell_anisotropic, maxwell_isotropic, maxwell_a, symbol, telegraph, BoxDomain,
    CoefficientSystem, MatrixFieldFn, StiffnessTensor,
};
use crate::velocity::{
    canonical_flux, chernoff_c, fattorini_r, majorant, velocity_matrix, velocity_matrix_structured, SymMatrix,
    VelocityField,
};

use super::scenario::Scenario;
use super::{analyze, CliError, DEFAULT_SEED};

/// Deliberate defects used to check that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scale the majorant by 0.9 after construction.
    MajorantScale,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub filter: Option<Regex>,
    pub seed: u64,
    pub fault: Option<Fault>,
    /// Random samples per check (some checks scale this down).
    pub samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { filter: None, seed: DEFAULT_SEED, fault: None, samples: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: &'static str,
    pub module: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub passed: bool,
    pub note: String,
}

struct Ctx {
    rng: ChaCha8Rng,
    n: usize,
    fault: Option<Fault>,
}

type Outcome = Result<(f64, usize), String>;
type CheckFn = fn(&mut Ctx) -> Outcome;

const CHECKS: &[(&str, &str, f64, CheckFn)] = &[
    ("matkernel.eigen_reconstruction", "matkernel", 1e-12, eigen_reconstruction),
    ("matkernel.inverse_sqrt", "matkernel", 1e-10, inverse_sqrt),
    ("dsl.round_trip", "dsl", 0.0, dsl_round_trip),
    ("systems.symbol_linearity", "systems", 1e-12, symbol_linearity),
    ("systems.canonical_idempotent", "systems", 1e-10, canonical_idempotent),
    ("systems.energy_equivalence", "systems", 1e-11, energy_equivalence),
    ("systems.maxwell_blocks", "systems", 0.0, maxwell_blocks),
    ("velocity.psd", "velocity", 1e-12, velocity_psd),
    ("velocity.trace_identity", "velocity", 1e-10, trace_identity),
    ("velocity.sandwich", "velocity", 1e-10, sandwich),
    ("velocity.fattorini_sandwich", "velocity", 1e-10, fattorini_sandwich),
    ("velocity.scaling", "velocity", 1e-12, scaling),
    ("velocity.structured_agreement", "velocity", 1e-10, structured_agreement),
    ("velocity.majorant", "velocity", 1e-10, majorant_check),
    ("velocity.speed_inequality", "velocity", 1e-10, speed_inequality),
    ("geometry.tie_determinism", "geometry", 0.0, tie_determinism),
    ("geometry.stencil_consistency", "geometry", 1e-9, stencil_consistency),
    ("geometry.metric_monotonicity", "geometry", 1e-12, metric_monotonicity),
    ("geometry.ray_scaling", "geometry", 0.0, ray_scaling),
    ("evolve.discrete_symmetry", "evolve", 1e-11, discrete_symmetry),
    ("evolve.energy_conservation", "evolve", 1e-6, energy_conservation),
    ("evolve.maxwell_divergence", "evolve", 1e-8, maxwell_divergence),
    ("cli.scenario_round_trip", "cli", 0.0, scenario_round_trip),
];

/// Identifiers and modules of every check, in execution order.
pub const CHECK_IDS: &[&str] = &[
    "matkernel.eigen_reconstruction",
    "matkernel.inverse_sqrt",
    "dsl.round_trip",
    "systems.symbol_linearity",
    "systems.canonical_idempotent",
    "systems.energy_equivalence",
    "systems.maxwell_blocks",
    "velocity.psd",
    "velocity.trace_identity",
    "velocity.sandwich",
    "velocity.fattorini_sandwich",
    "velocity.scaling",
    "velocity.structured_agreement",
    "velocity.majorant",
    "velocity.speed_inequality",
    "geometry.tie_determinism",
    "geometry.stencil_consistency",
    "geometry.metric_monotonicity",
    "geometry.ray_scaling",
    "evolve.discrete_symmetry",
    "evolve.energy_conservation",
    "evolve.maxwell_divergence",
    "cli.scenario_round_trip",
];

/// Run the selected checks. Each check gets its own generator derived from
/// the seed and its position, so filtering does not change the samples.
pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (pos, &(id, module, tol, f)) in CHECKS.iter().enumerate() {
        if let Some(re) = &opts.filter {
            if !re.is_match(id) {
                continue;
            }
        }
        let mut ctx = Ctx {
            rng: ChaCha8Rng::seed_from_u64(opts.seed ^ (pos as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            n: opts.samples.max(1),
            fault: opts.fault,
        };
        let r = match f(&mut ctx) {
            Ok((worst, samples)) => CheckResult {
                id,
                module,
                worst,
                tolerance: tol,
                samples,
                passed: worst <= tol,
                note: String::new(),
            },
            Err(e) => CheckResult {
                id,
                module,
                worst: f64::INFINITY,
                tolerance: tol,
                samples: 0,
                passed: false,
                note: e,
            },
        };
        out.push(r);
    }
    out
}

/// Run the suite and print a pass/fail table. Fails when any check fails;
/// under `strict` an empty selection is an error too.
pub fn cmd_verify<W: Write>(opts: &VerifyOptions, strict: bool, mut out: W) -> Result<Vec<CheckResult>, CliError> {
    let results = run_checks(opts);
    let mut t = String::new();
    let _ = writeln!(t, "seed {:#x}", opts.seed);
    let _ = writeln!(t, "{:<34} {:<10} {:>12} {:>10} {:>8}  status", "invariant", "module", "worst", "tolerance", "samples");
    for r in &results {
        let _ = writeln!(
            t,
            "{:<34} {:<10} {:>12.3e} {:>10.1e} {:>8}  {}{}",
            r.id,
            r.module,
            r.worst,
            r.tolerance,
            r.samples,
            if r.passed { "pass" } else { "FAIL" },
            if r.note.is_empty() { String::new() } else { format!(" ({})", r.note) }
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(t, "{} checks, {} failed", results.len(), failed);
    out.write_all(t.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} invariants failed", results.len())));
    }
    if strict && results.is_empty() {
        return Err(CliError::Inconclusive("the filter selected no invariants".into()));
    }
    Ok(results)
}

fn rel(a: f64, scale: f64) -> f64 {
    a / scale.max(1e-300)
}

fn sys_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Uniform complex entry with real and imaginary parts in `[-1, 1)`.
fn rand_c<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, k: usize) -> CMatrix {
    let data = (0..k * k).map(|_| rand_c(rng)).collect();
    CMatrix::from_vec(k, data).expect("square")
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, k: usize) -> CMatrix {
    let b = random_matrix(rng, k);
    (&b + &b.adjoint()).scale(0.5)
}

/// `c I + B B*` with a random `B`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, k: usize, c: f64) -> CMatrix {
    let b = random_matrix(rng, k);
    &CMatrix::identity(k).scale(c) + &(&b * &b.adjoint())
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

pub fn random_point<R: Rng + ?Sized>(rng: &mut R, dom: &BoxDomain) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dom.dim()).map(|a| dom.lower()[a] + rng.gen::<f64>() * dom.extent(a)).collect();
        if dom.contains(&x) {
            return x;
        }
    }
}

/// Smooth random system on `[-1, 1]^d` with `E = ½I + B(x)B(x)*`,
/// `A^j = H_j + sin(w_j·x + φ_j) K_j` and a constant Hermitian `V`.
/// Every flux matrix is multiplied by `scale`.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize, scale: f64) -> CoefficientSystem {
    let dom = BoxDomain::bounded(vec![-1.0; d], vec![1.0; d]).expect("unit box");
    let b0 = random_matrix(rng, k);
    let b1: Vec<CMatrix> = (0..d).map(|_| random_matrix(rng, k).scale(0.3)).collect();
    let energy: Arc<MatrixFieldFn> = Arc::new(move |x: &[f64]| {
        let mut b = b0.clone();
        for (j, m) in b1.iter().enumerate() {
            b = &b + &m.scale(x[j]);
        }
        Ok(&CMatrix::identity(b.dim()).scale(0.5) + &(&b * &b.adjoint()))
    });
    let flux: Vec<Arc<MatrixFieldFn>> = (0..d)
        .map(|_| {
            let h = random_hermitian(rng, k).scale(scale);
            let kk = random_hermitian(rng, k).scale(0.5 * scale);
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let phi: f64 = rng.gen_range(0.0..6.28);
            let f: Arc<MatrixFieldFn> = Arc::new(move |x: &[f64]| {
                let arg: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + phi;
                Ok(&h + &kk.scale(arg.sin()))
            });
            f
        })
        .collect();
    let v = random_hermitian(rng, k).scale(0.5);
    let potential: Arc<MatrixFieldFn> = Arc::new(move |_: &[f64]| Ok(v.clone()));
    CoefficientSystem::from_fields(dom, k, energy, flux, potential, "random").expect("consistent shapes")
}

fn fresh_system(ctx: &mut Ctx) -> (CoefficientSystem, Vec<f64>) {
    let d = ctx.rng.gen_range(1..=3);
    let k = ctx.rng.gen_range(1..=4);
    let sys = random_system(&mut ctx.rng, d, k, 1.0);
    let x = random_point(&mut ctx.rng, sys.domain());
    (sys, x)
}

fn canonical_symbol(sys: &CoefficientSystem, x: &[f64], xi: &[f64]) -> Result<HermitianMatrix, String> {
    let flux = canonical_flux(sys, x).map_err(sys_err)?;
    let mut acc = CMatrix::zeros(sys.k());
    for (a, c) in flux.iter().zip(xi) {
        acc = &acc + &a.scale(*c);
    }
    HermitianMatrix::new(acc).map_err(sys_err)
}

fn eigen_reconstruction(ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.n {
        let k = ctx.rng.gen_range(1..=8);
        let h = HermitianMatrix::new(random_hermitian(&mut ctx.rng, k)).map_err(sys_err)?;
        let e = h.eig().map_err(sys_err)?;
        let lam = CMatrix::diag_real(&e.values);
        let back = &(&e.vectors * &lam) * &e.vectors.adjoint();
        worst = worst.max(rel((&back - h.matrix()).frobenius(), h.matrix().frobenius().max(1.0)));
    }
    Ok((worst, ctx.n))
}

fn inverse_sqrt(ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.n {
        let k = ctx.rng.gen_range(1..=8);
        let s = SpdMatrix::from_matrix(random_spd(&mut ctx.rng, k, 0.5)).map_err(sys_err)?;
        let f = s.inv_sqrt();
        let id = &(f.matrix() * s.matrix()) * f.matrix();
        worst = worst.max((&id - &CMatrix::identity(k)).frobenius());
    }
    Ok((worst, ctx.n))
}

fn dsl_round_trip(ctx: &mut Ctx) -> Outcome {
    let n = ctx.n * 10;
    let mut bad = 0usize;
    for _ in 0..n {
        let e = random_expr(&mut ctx.rng, 6, 3);
        match parse(&e.to_string()) {
            Ok(again) if again == e => {}
            _ => bad += 1,
        }
    }
    Ok((bad as f64, n))
}

fn symbol_linearity(ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.n {
        let (sys, x) = fresh_system(ctx);
        let d = sys.dim();
        let xi: Vec<f64> = (0..d).map(|_| ctx.rng.gen_range(-2.0..2.0)).collect();
        let eta: Vec<f64> = (0..d).map(|_| ctx.rng.gen_range(-2.0..2.0)).collect();
        let (a, b): (f64, f64) = (ctx.rng.gen_range(-3.0..3.0), ctx.rng.gen_range(-3.0..3.0));
        let mix: Vec<f64> = xi.iter().zip(&eta).map(|(p, q)| a * p + b * q).collect();
        let s1 = symbol(&sys, &x, &xi).map_err(sys_err)?;
        let s2 = symbol(&sys, &x, &eta).map_err(sys_err)?;
        let s3 = symbol(&sys, &x, &mix).map_err(sys_err)?;
        let lin = &s1.matrix().scale(a) + &s2.matrix().scale(b);
        let scale = a.abs() * s1.matrix().frobenius() + b.abs() * s2.matrix().frobenius();
        worst = worst.max(rel((s3.matrix() - &lin).frobenius(), scale));
    }
    Ok((worst, ctx.n))
}

fn canonical_idempotent(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 4).max(1);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (sys, x) = fresh_system(ctx);
        let c1 = canonicalize(&sys).map_err(sys_err)?;
        let c2 = canonicalize(&c1).map_err(sys_err)?;
        for j in 0..sys.dim() {
            let a = c1.flux_at(j, &x).map_err(sys_err)?;
            let b = c2.flux_at(j, &x).map_err(sys_err)?;
            worst = worst.max(rel((a.matrix() - b.matrix()).frobenius(), a.matrix().frobenius().max(1.0)));
        }
        let a = c1.potential_at(&x).map_err(sys_err)?;
        let b = c2.potential_at(&x).map_err(sys_err)?;
        worst = worst.max(rel((a.matrix() - b.matrix()).frobenius(), a.matrix().frobenius().max(1.0)));
    }
    Ok((worst, n))
}

fn dot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn energy_equivalence(ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.n {
        let (sys, x) = fresh_system(ctx);
        let k = sys.k();
        let e = sys.energy_at(&x).map_err(sys_err)?;
        let half = e.sqrt();
        let phi: Vec<C64> = (0..k).map(|_| rand_c(&mut ctx.rng)).collect();
        let psi: Vec<C64> = (0..k).map(|_| rand_c(&mut ctx.rng)).collect();
        let lhs = dot(&phi, &e.matrix().mul_vec(&psi));
        let rhs = dot(&half.matrix().mul_vec(&phi), &half.matrix().mul_vec(&psi));
        let scale = dot(&phi, &e.matrix().mul_vec(&phi)).re.sqrt() * dot(&psi, &e.matrix().mul_vec(&psi)).re.sqrt();
        worst = worst.max(rel((lhs - rhs).norm(), scale));
    }
    Ok((worst, ctx.n))
}

fn maxwell_blocks(_ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        let a = maxwell_a(j);
        for l in 0..3 {
            let b = maxwell_a(l);
            let mut tr = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    tr += a[r][c] * b[r][c];
                }
            }
            let want = if j == l { 2.0 } else { 0.0 };
            worst = worst.max((tr - want).abs());
            for r in 0..3 {
                for c in 0..3 {
                    worst = worst.max((a[r][c] + a[c][r]).abs());
                }
            }
        }
    }
    Ok((worst, 9))
}

fn velocity_psd(ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.n {
        let (sys, x) = fresh_system(ctx);
        let m = velocity_matrix(&sys, &x).map_err(sys_err)?;
        let xi = random_unit(&mut ctx.rng, sys.dim());
        worst = worst.max(rel(-m.quad(&xi), m.norm()).max(0.0));
    }
    Ok((worst, ctx.n))
}

fn trace_identity(ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.n {
        let (sys, x) = fresh_system(ctx);
        let m = velocity_matrix(&sys, &x).map_err(sys_err)?;
        let xi: Vec<f64> = (0..sys.dim()).map(|_| ctx.rng.gen_range(-2.0..2.0)).collect();
        let s = canonical_symbol(&sys, &x, &xi)?;
        let tr = s.matrix().trace_product_re(s.matrix());
        worst = worst.max(rel((m.quad(&xi) - tr).abs(), tr.abs().max(m.norm())));
    }
    Ok((worst, ctx.n))
}

fn sandwich(ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.n {
        let (sys, x) = fresh_system(ctx);
        let m = velocity_matrix(&sys, &x).map_err(sys_err)?;
        let xi = random_unit(&mut ctx.rng, sys.dim());
        let s = canonical_symbol(&sys, &x, &xi)?;
        let n2 = op_norm(&s).map_err(sys_err)?.powi(2);
        let q = m.quad(&xi);
        let k = sys.k() as f64;
        let scale = q.abs().max(1e-300);
        worst = worst.max(rel(q / k - n2, scale).max(0.0)).max(rel(n2 - q, scale).max(0.0));
    }
    Ok((worst, ctx.n))
}

fn fattorini_sandwich(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 2).max(1);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (sys, x) = fresh_system(ctx);
        let b = chernoff_c(&sys, &x).map_err(sys_err)?;
        let r = fattorini_r(&sys, &x).map_err(sys_err)?;
        let d = (sys.dim() as f64).sqrt();
        let scale = b.upper.max(r).max(1e-300);
        worst = worst
            .max(rel(r - b.upper, scale).max(0.0))
            .max(rel(b.lower - d * r, scale).max(0.0))
            .max(rel(b.lower - b.upper, scale).max(0.0));
    }
    Ok((worst, n))
}

fn scaling(ctx: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.n {
        let d = ctx.rng.gen_range(1..=3);
        let k = ctx.rng.gen_range(1..=4);
        let s: f64 = ctx.rng.gen_range(0.1..10.0);
        let mut r1 = ctx.rng.clone();
        let mut r2 = ctx.rng.clone();
        let base = random_system(&mut r1, d, k, 1.0);
        let scaled = random_system(&mut r2, d, k, s);
        ctx.rng = r1;
        let x = random_point(&mut ctx.rng, base.domain());
        let m1 = velocity_matrix(&base, &x).map_err(sys_err)?;
        let m2 = velocity_matrix(&scaled, &x).map_err(sys_err)?;
        worst = worst.max(rel(m2.sub(&m1.scale(s * s)).max_abs(), m2.max_abs()));
    }
    Ok((worst, ctx.n))
}

/// Random symmetric positive definite 3×3 tensor as 9 numeric entries with a
/// smooth diagonal modulation.
fn random_medium(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut m = [[0.0; 3]; 3];
    let b: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|l| b[i * 3 + l] * b[j * 3 + l]).sum::<f64>();
        }
        m[i][i] += 0.5;
    }
    let amp: f64 = rng.gen_range(0.0..0.2);
    let mut out = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                out.push(format!("{:?} + {amp:?}*sin(x)", m[i][j]));
            } else {
                out.push(format!("{:?}", m[i][j]));
            }
        }
    }
    out
}

/// Maxwell medium or elastic solid with random anisotropic coefficients.
pub fn random_anisotropic_medium(rng: &mut ChaCha8Rng) -> Result<CoefficientSystem, String> {
    let d = rng.gen_range(1..=3);
    let dom = BoxDomain::bounded(vec![-1.0; d], vec![1.0; d]).map_err(sys_err)?;
    if rng.gen_bool(0.5) {
        maxwell_anisotropic(&random_medium(rng), &random_medium(rng), dom).map_err(sys_err)
    } else {
        let b: Vec<f64> = (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut c = vec![String::new(); 36];
        for i in 0..6 {
            for j in 0..6 {
                let mut v: f64 = (0..6).map(|l| b[i * 6 + l] * b[j * 6 + l]).sum();
                if i == j {
                    v += 0.5;
                }
                c[i * 6 + j] = format!("{v:?}");
            }
        }
        let rho = format!("{:?} + 0.1*cos(x)", rng.gen_range(0.5..2.0));
        elastic(&rho, StiffnessTensor::from_full(&c).map_err(sys_err)?, dom).map_err(sys_err)
    }
}

fn structured_agreement(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 2).max(1);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let sys = random_anisotropic_medium(&mut ctx.rng)?;
        let x = random_point(&mut ctx.rng, sys.domain());
        let a = velocity_matrix(&sys, &x).map_err(sys_err)?;
        let b = velocity_matrix_structured(&sys, &x).map_err(sys_err)?;
        worst = worst.max(rel(a.sub(&b).max_abs(), a.max_abs()));
    }
    Ok((worst, n))
}

fn field_for(ctx: &mut Ctx) -> Result<(CoefficientSystem, VelocityField), String> {
    let d = ctx.rng.gen_range(1..=2);
    let k = ctx.rng.gen_range(1..=3);
    let sys = random_system(&mut ctx.rng, d, k, 1.0);
    let nodes = if d == 1 { vec![48] } else { vec![20, 20] };
    let grid = Grid::cell_centered(sys.domain(), &nodes).map_err(sys_err)?;
    let sampled = VelocityField::sample(&sys, &grid).map_err(sys_err)?;
    let mut field = majorant(&sampled, 0.1).map_err(sys_err)?;
    if ctx.fault == Some(Fault::MajorantScale) {
        if let Some(m) = field.majorant.as_mut() {
            for h in m.iter_mut() {
                *h = h.scale(0.9);
            }
        }
    }
    Ok((sys, field))
}

fn majorant_check(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 20).max(1);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..n {
        let (_, field) = field_for(ctx)?;
        let maj = field.majorant.as_ref().ok_or("missing majorant")?;
        for (i, m) in field.samples.iter().enumerate() {
            if !field.inside[i] {
                continue;
            }
            count += 1;
            let gap = maj[i].sub(m).min_eigenvalue();
            worst = worst.max(rel(-gap, maj[i].norm()).max(0.0));
        }
    }
    Ok((worst, count))
}

fn speed_inequality(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 20).max(1);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..n {
        let (sys, field) = field_for(ctx)?;
        let d = sys.dim();
        let terms: Vec<(f64, Vec<f64>, f64)> = (0..3)
            .map(|_| {
                let amp = ctx.rng.gen_range(-1.0..1.0);
                let w: Vec<f64> = (0..d).map(|_| ctx.rng.gen_range(-4.0..4.0)).collect();
                (amp, w, ctx.rng.gen_range(0.0..6.28))
            })
            .collect();
        let maj = field.majorant.as_ref().ok_or("missing majorant")?;
        for i in 0..field.grid.len() {
            if !field.inside[i] {
                continue;
            }
            let x = field.grid.coord(i);
            let mut grad = vec![0.0; d];
            for (amp, w, phi) in &terms {
                let arg: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + phi;
                for a in 0..d {
                    grad[a] += amp * w[a] * arg.cos();
                }
            }
            let s = canonical_symbol(&sys, &x, &grad)?;
            let lhs = op_norm(&s).map_err(sys_err)?.powi(2);
            let rhs = maj[i].quad(&grad);
            count += 1;
            worst = worst.max(rel(lhs - rhs, rhs.abs().max(lhs)).max(0.0));
        }
    }
    Ok((worst, count))
}

fn tie_determinism(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 20).max(1);
    let mut bad = 0usize;
    for _ in 0..n {
        let grid = Grid::uniform(vec![0.0, 0.0], vec![1.0, 1.0], vec![17, 17]).map_err(sys_err)?;
        let metric = MetricField::constant(grid.clone(), SymMatrix::identity(2));
        let mut src: Vec<usize> = (0..4).map(|_| ctx.rng.gen_range(0..grid.len())).collect();
        src.sort_unstable();
        src.dedup();
        let a = lattice_geodesic(&metric, &src, Stencil::Standard).map_err(sys_err)?;
        src.reverse();
        let b = lattice_geodesic(&metric, &src, Stencil::Standard).map_err(sys_err)?;
        bad += a.values.iter().zip(&b.values).filter(|(p, q)| p.to_bits() != q.to_bits()).count();
    }
    Ok((bad as f64, n))
}

fn random_sym<R: Rng + ?Sized>(rng: &mut R, d: usize, floor: f64) -> SymMatrix {
    let b: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut m = SymMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let v: f64 = (0..d).map(|l| b[i * d + l] * b[j * d + l]).sum();
            m.set(i, j, v + if i == j { floor } else { 0.0 });
        }
    }
    m
}

fn stencil_consistency(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 20).max(1);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for t in 0..n {
        let d = if t % 3 == 2 { 3 } else { 2 };
        let m = if d == 2 { 41 } else { 13 };
        let grid = Grid::uniform(vec![0.0; d], vec![1.0; d], vec![m; d]).map_err(sys_err)?;
        let g = if t == 0 { SymMatrix::identity(d) } else { random_sym(&mut ctx.rng, d, 0.2) };
        let metric = MetricField::constant(grid.clone(), g);
        let centre = grid.index(&vec![m / 2; d]);
        let f = lattice_geodesic(&metric, &[centre], Stencil::Standard).map_err(sys_err)?;
        let bound = stencil_bound(&grid, Stencil::Standard, Some(g)).map_err(sys_err)?;
        let c = grid.coord(centre);
        for _ in 0..50 {
            let i = ctx.rng.gen_range(0..grid.len());
            if i == centre {
                continue;
            }
            let dx: Vec<f64> = grid.coord(i).iter().zip(&c).map(|(a, b)| a - b).collect();
            let exact = g.quad(&dx).sqrt();
            let ratio = f.values[i] / exact;
            count += 1;
            worst = worst.max(1.0 - ratio - 1e-12).max(ratio - bound);
        }
    }
    Ok((worst.max(0.0), count))
}

fn metric_monotonicity(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 20).max(1);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let grid = Grid::uniform(vec![0.0, 0.0], vec![0.1, 0.1], vec![16, 16]).map_err(sys_err)?;
        let g2: Vec<SymMatrix> = (0..grid.len()).map(|_| random_sym(&mut ctx.rng, 2, 0.1)).collect();
        let g1: Vec<SymMatrix> = g2.iter().map(|g| g.add(&random_sym(&mut ctx.rng, 2, 0.0))).collect();
        let src = ctx.rng.gen_range(0..grid.len());
        let a = lattice_geodesic(&MetricField::from_nodes(grid.clone(), g1), &[src], Stencil::Standard).map_err(sys_err)?;
        let b = lattice_geodesic(&MetricField::from_nodes(grid.clone(), g2), &[src], Stencil::Standard).map_err(sys_err)?;
        for (p, q) in a.values.iter().zip(&b.values) {
            worst = worst.max(rel(q - p, q.abs()).max(0.0));
        }
    }
    Ok((worst, n))
}

fn ray_scaling(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 10).max(1);
    let mut bad = 0usize;
    for _ in 0..n {
        let p: f64 = ctx.rng.gen_range(0.2..2.5);
        let a: f64 = 10f64.powf(ctx.rng.gen_range(-2.0..2.0));
        let toward_boundary = ctx.rng.gen_bool(0.5);
        let (v1, v2) = if toward_boundary {
            let s = move |t: f64| t.powf(p);
            let sa = move |t: f64| a * t.powf(p);
            (
                ray_completeness(&s, 1.0, RayEnd::Finite(0.0), 0.0, "scaling").map_err(sys_err)?,
                ray_completeness(&sa, 1.0, RayEnd::Finite(0.0), 0.0, "scaling").map_err(sys_err)?,
            )
        } else {
            let s = move |t: f64| (1.0 + t).powf(p);
            let sa = move |t: f64| a * (1.0 + t).powf(p);
            (
                ray_completeness(&s, 0.0, RayEnd::Infinite, 1.0, "scaling").map_err(sys_err)?,
                ray_completeness(&sa, 0.0, RayEnd::Infinite, 1.0, "scaling").map_err(sys_err)?,
            )
        };
        if v1.classification != v2.classification {
            bad += 1;
        }
    }
    Ok((bad as f64, n))
}

fn compact_random(op: &DiscreteOperator, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let grid = op.grid();
    let k = op.k();
    let mut v = vec![C64::new(0.0, 0.0); op.state_len()];
    for i in 0..grid.len() {
        let m = grid.multi(i);
        if m.iter().zip(grid.nodes()).any(|(&a, &n)| a < 4 || a + 4 >= n) || !op.inside()[i] {
            continue;
        }
        for c in 0..k {
            v[i * k + c] = rand_c(rng);
        }
    }
    v
}

fn discrete_symmetry(ctx: &mut Ctx) -> Outcome {
    let n = (ctx.n / 10).max(1);
    let mut worst: f64 = 0.0;
    for t in 0..n {
        let d = ctx.rng.gen_range(1..=2);
        let k = ctx.rng.gen_range(1..=3);
        let sys = random_system(&mut ctx.rng, d, k, 1.0);
        let nodes = if d == 1 { vec![40] } else { vec![16, 16] };
        let grid = Grid::cell_centered(sys.domain(), &nodes).map_err(sys_err)?;
        let order = if t % 2 == 0 { Order::Second } else { Order::Fourth };
        let op = DiscreteOperator::new(&sys, &grid, order).map_err(sys_err)?;
        let u = compact_random(&op, &mut ctx.rng);
        let v = compact_random(&op, &mut ctx.rng);
        let du = op.apply(&u).map_err(sys_err)?;
        let dv = op.apply(&v).map_err(sys_err)?;
        let a = op.inner(&u, &dv);
        let b = op.inner(&du, &v);
        let scale = op.energy(&u).sqrt() * op.energy(&dv).sqrt() + op.energy(&du).sqrt() * op.energy(&v).sqrt();
        worst = worst.max(rel((a - b).norm(), scale));
    }
    Ok((worst, n))
}

fn energy_conservation(_ctx: &mut Ctx) -> Outcome {
    let dom = BoxDomain::bounded(vec![0.0], vec![1.0]).map_err(sys_err)?;
    let sys = telegraph("1 + 0.5*x", "1.5 - 0.5*x^2", dom).map_err(sys_err)?;
    let grid = Grid::cell_centered(sys.domain(), &[256]).map_err(sys_err)?;
    let op = DiscreteOperator::new(&sys, &grid, Order::Second).map_err(sys_err)?;
    let one = C64::new(1.0, 0.0);
    let st = WaveState::gaussian(&op, &[0.5], 0.04, &[one, one]).map_err(sys_err)?;
    let opts = EvolveOptions { t_final: 0.25, cfl: 0.4, ..Default::default() };
    let r = integrate(&sys, &op, &st, &opts).map_err(sys_err)?;
    Ok((r.log.relative_energy_drift(), r.log.steps))
}

fn maxwell_divergence(_ctx: &mut Ctx) -> Outcome {
    let dom = BoxDomain::bounded(vec![-2.0, -2.0], vec![2.0, 2.0]).map_err(sys_err)?;
    let sys = maxwell_isotropic("1", "1", dom).map_err(sys_err)?;
    let grid = Grid::cell_centered(sys.domain(), &[96, 96]).map_err(sys_err)?;
    let op = DiscreteOperator::new(&sys, &grid, Order::Second).map_err(sys_err)?;
    let z = C64::new(0.0, 0.0);
    let st = WaveState::gaussian(&op, &[0.0, 0.0], 0.15, &[z, z, z, z, z, C64::new(1.0, 0.0)]).map_err(sys_err)?;
    let opts = EvolveOptions { t_final: 1.0, cfl: 0.4, ..Default::default() };
    let r = integrate(&sys, &op, &st, &opts).map_err(sys_err)?;
    let psi = &r.state.psi;
    let h = grid.spacing();
    let mut div_max: f64 = 0.0;
    let mut grad_max: f64 = 0.0;
    for i in 0..grid.len() {
        for base in [0, 3] {
            let mut div = C64::new(0.0, 0.0);
            for a in 0..2 {
                let f = |j: Option<usize>| j.map_or(C64::new(0.0, 0.0), |j| psi[j * 6 + base + a]);
                let dd = (f(grid.neighbor(i, a, 1)) - f(grid.neighbor(i, a, -1))) / (2.0 * h[a]);
                grad_max = grad_max.max(dd.norm());
                div += dd;
            }
            div_max = div_max.max(div.norm());
        }
    }
    Ok((rel(div_max, grad_max), r.log.steps))
}

fn scenario_round_trip(_ctx: &mut Ctx) -> Outcome {
    let text = r#"{"system": {"name": "telegraph", "params": {"c": "x*(1-x)"}},
        "domain": {"lower": [0], "upper": [1]}, "grid": {"nodes": [128]},
        "analysis": {"delta": 0.1, "cutoffs": 20}, "output": {"dir": "verify-out"}}"#;
    let s1 = Scenario::from_json(text).map_err(sys_err)?;
    let s2 = Scenario::from_json(&s1.to_json()).map_err(sys_err)?;
    let a = analyze(&s1).map_err(sys_err)?;
    let b = analyze(&s2).map_err(sys_err)?;
    let same = s1 == s2 && a.json == b.json && a.summary == b.summary;
    Ok((if same { 0.0 } else { 1.0 }, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(filter: &str, fault: Option<Fault>) -> Vec<CheckResult> {
        run_checks(&VerifyOptions { filter: Some(Regex::new(filter).unwrap()), seed: DEFAULT_SEED, fault, samples: 40 })
    }

    #[test]
    fn ids_match_table() {
        let ids: Vec<&str> = CHECKS.iter().map(|c| c.0).collect();
        assert_eq!(ids, CHECK_IDS);
    }

    #[test]
    fn filter_selects_module() {
        let r = quick("^velocity\\.", None);
        assert!(!r.is_empty());
        assert!(r.iter().all(|c| c.module == "velocity"));
        for c in &r {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = quick("^velocity\\.majorant$", Some(Fault::MajorantScale));
        assert_eq!(r.len(), 1);
        assert!(!r[0].passed, "{:?}", r[0]);
    }

    #[test]
    fn small_modules_pass() {
        for c in quick("^(matkernel|dsl|systems|geometry)\\.", None) {
            assert!(c.passed, "{c:?}");
        }
    }
}
