//! Built-in physical systems: telegraph line, Maxwell media, linear elasticity, free Dirac.

use std::sync::Arc;

use crate::dsl::ScalarField;
use crate::matkernel::{CMatrix, SpdMatrix, C64};

use super::stiffness::{StiffnessTensor, StiffnessValue};
use super::{
    eval_coeffs, sample_point, BoxDomain, CoefficientSystem, MatrixFieldFn, MatrixGradFn, SystemError, SystemKind,
    DEFAULT_VALIDATION_SAMPLES,
};

fn parse(src: &str) -> Result<ScalarField, SystemError> {
    ScalarField::parse(src).map_err(|source| SystemError::Parse { src: src.to_string(), source })
}

fn eval(name: &str, f: &ScalarField, x: &[f64]) -> Result<f64, SystemError> {
    f.eval(x).map_err(|source| SystemError::Eval { field: name.to_string(), source })
}

fn constant(m: CMatrix) -> Arc<MatrixFieldFn> {
    Arc::new(move |_: &[f64]| Ok(m.clone()))
}

fn zero_gradient(d: usize, k: usize) -> Arc<MatrixGradFn> {
    Arc::new(move |_: &[f64]| Ok(vec![CMatrix::zeros(k); d]))
}

fn all_constant(fields: &[&ScalarField]) -> bool {
    fields.iter().all(|f| f.expr.dims_used() == 0)
}

/// Sample the domain and fail on the first non-positive scalar or invalid matrix.
fn check_construction(sys: &CoefficientSystem, positive: &[(&str, &ScalarField)]) -> Result<(), SystemError> {
    let mut taken = 0;
    let mut i = 0;
    while taken < DEFAULT_VALIDATION_SAMPLES && i < 16 * DEFAULT_VALIDATION_SAMPLES {
        let x = sample_point(sys.domain(), i);
        i += 1;
        if !sys.domain().contains(&x) {
            continue;
        }
        taken += 1;
        for (name, f) in positive {
            let v = eval(name, f, &x)?;
            if !(v > 0.0) {
                return Err(SystemError::NonPositive { what: name.to_string(), value: v, point: x });
            }
        }
        if let SystemKind::Elastic(spec) = sys.kind() {
            let c = spec.stiffness_at(&x)?;
            let l = c
                .min_eigenvalue()
                .map_err(|source| SystemError::Matrix { field: "C".into(), point: x.clone(), source })?;
            if !(l > 0.0) {
                return Err(SystemError::NonPositive { what: "stiffness eigenvalue".into(), value: l, point: x });
            }
        }
        eval_coeffs(sys, &x)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TelegraphSpec {
    pub inductance: ScalarField,
    pub capacitance: ScalarField,
}

/// Lossless line `L ∂_t I = -∂_x V`, `C ∂_t V = -∂_x I` with `Ψ = (I, V)`.
pub fn telegraph(l: &str, c: &str, domain: BoxDomain) -> Result<CoefficientSystem, SystemError> {
    if domain.dim() != 1 {
        return Err(SystemError::Invalid("telegraph line is one-dimensional".into()));
    }
    let spec = TelegraphSpec { inductance: parse(l)?, capacitance: parse(c)? };
    let (lf, cf) = (spec.inductance.clone(), spec.capacitance.clone());
    let energy: Arc<MatrixFieldFn> = Arc::new(move |x: &[f64]| {
        Ok(CMatrix::diag_real(&[eval("L", &lf, x)?, eval("C", &cf, x)?]))
    });
    let flux = vec![constant(CMatrix::from_real_rows([[0.0, 1.0], [1.0, 0.0]]))];
    let mut sys = CoefficientSystem::from_fields(domain, 2, energy, flux, constant(CMatrix::zeros(2)), "telegraph")?
        .with_kind(SystemKind::Telegraph(spec.clone()));
    if all_constant(&[&spec.inductance, &spec.capacitance]) {
        sys = sys.with_energy_inv_sqrt_gradient(zero_gradient(1, 2));
    }
    check_construction(&sys, &[("L", &spec.inductance), ("C", &spec.capacitance)])?;
    Ok(sys)
}

/// Permittivity or permeability: scalar or symmetric 3×3 tensor.
#[derive(Debug, Clone)]
pub enum Medium {
    Isotropic(ScalarField),
    Tensor(Vec<ScalarField>),
}

impl Medium {
    fn from_entries<S: AsRef<str>>(entries: &[S]) -> Result<Self, SystemError> {
        match entries.len() {
            1 => Ok(Medium::Isotropic(parse(entries[0].as_ref())?)),
            6 => {
                let up = entries.iter().map(|s| parse(s.as_ref())).collect::<Result<Vec<_>, _>>()?;
                let idx = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
                Ok(Medium::Tensor(idx.iter().flatten().map(|&i| up[i].clone()).collect()))
            }
            9 => {
                let full = entries.iter().map(|s| parse(s.as_ref())).collect::<Result<Vec<_>, _>>()?;
                Ok(Medium::Tensor(full))
            }
            n => Err(SystemError::Invalid(format!("medium tensor needs 1, 6 or 9 entries, got {n}"))),
        }
    }

    /// Real 3×3 values at `x`.
    pub fn at(&self, name: &str, x: &[f64]) -> Result<[[f64; 3]; 3], SystemError> {
        let mut m = [[0.0; 3]; 3];
        match self {
            Medium::Isotropic(f) => {
                let v = eval(name, f, x)?;
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] = v;
                }
            }
            Medium::Tensor(fs) => {
                for i in 0..3 {
                    for j in 0..3 {
                        m[i][j] = eval(&format!("{name}{}{}", i + 1, j + 1), &fs[i * 3 + j], x)?;
                    }
                }
            }
        }
        Ok(m)
    }

    fn fields(&self) -> Vec<&ScalarField> {
        match self {
            Medium::Isotropic(f) => vec![f],
            Medium::Tensor(fs) => fs.iter().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxwellSpec {
    pub permittivity: Medium,
    pub permeability: Medium,
}

/// Real antisymmetric blocks `a^j` with `Σ_j a^j ∂_j = curl`.
pub fn maxwell_a(j: usize) -> [[f64; 3]; 3] {
    match j {
        0 => [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        1 => [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
        _ => panic!("axis {j} out of range"),
    }
}

/// Block matrix `-[[0, a], [aᵀ, 0]]` for an `r × c` block `a`.
fn off_diagonal_block(a: &[Vec<f64>]) -> CMatrix {
    let r = a.len();
    let c = a[0].len();
    let n = r + c;
    let mut m = CMatrix::zeros(n);
    for i in 0..r {
        for j in 0..c {
            m[(i, r + j)] = C64::new(-a[i][j], 0.0);
            m[(r + j, i)] = C64::new(-a[i][j], 0.0);
        }
    }
    m
}

fn block_diag(blocks: &[&CMatrix]) -> CMatrix {
    let n = blocks.iter().map(|b| b.dim()).sum();
    let mut m = CMatrix::zeros(n);
    let mut off = 0;
    for b in blocks {
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                m[(off + i, off + j)] = b[(i, j)];
            }
        }
        off += b.dim();
    }
    m
}

fn maxwell(spec: MaxwellSpec, domain: BoxDomain) -> Result<CoefficientSystem, SystemError> {
    let d = domain.dim();
    let s = spec.clone();
    let energy: Arc<MatrixFieldFn> = Arc::new(move |x: &[f64]| {
        let e = CMatrix::from_real_rows(s.permittivity.at("eps", x)?);
        let m = CMatrix::from_real_rows(s.permeability.at("mu", x)?);
        Ok(block_diag(&[&e, &m]))
    });
    let flux = (0..d)
        .map(|j| {
            let a: Vec<Vec<f64>> = maxwell_a(j).iter().map(|r| r.to_vec()).collect();
            constant(off_diagonal_block(&a))
        })
        .collect();
    let mut sys = CoefficientSystem::from_fields(domain, 6, energy, flux, constant(CMatrix::zeros(6)), "maxwell")?
        .with_kind(SystemKind::Maxwell(spec.clone()));
    let mut fields = spec.permittivity.fields();
    fields.extend(spec.permeability.fields());
    if all_constant(&fields) {
        sys = sys.with_energy_inv_sqrt_gradient(zero_gradient(d, 6));
    }
    let mut positive: Vec<(&str, &ScalarField)> = Vec::new();
    if let Medium::Isotropic(f) = &spec.permittivity {
        positive.push(("eps", f));
    }
    if let Medium::Isotropic(f) = &spec.permeability {
        positive.push(("mu", f));
    }
    check_construction(&sys, &positive)?;
    Ok(sys)
}

/// Maxwell equations for `Ψ = (ℰ, ℋ)` in an isotropic medium. On 1-D or 2-D
/// domains the fields are taken independent of the remaining coordinates.
pub fn maxwell_isotropic(eps: &str, mu: &str, domain: BoxDomain) -> Result<CoefficientSystem, SystemError> {
    let spec = MaxwellSpec {
        permittivity: Medium::Isotropic(parse(eps)?),
        permeability: Medium::Isotropic(parse(mu)?),
    };
    maxwell(spec, domain)
}

/// Anisotropic medium; `eps` and `mu` take 6 upper-triangle or 9 full entries.
pub fn maxwell_anisotropic<S: AsRef<str>>(
    eps: &[S],
    mu: &[S],
    domain: BoxDomain,
) -> Result<CoefficientSystem, SystemError> {
    let spec = MaxwellSpec { permittivity: Medium::from_entries(eps)?, permeability: Medium::from_entries(mu)? };
    maxwell(spec, domain)
}

#[derive(Debug, Clone)]
pub struct ElasticSpec {
    pub density: ScalarField,
    pub stiffness: StiffnessTensor,
}

impl ElasticSpec {
    pub fn stiffness_at(&self, x: &[f64]) -> Result<StiffnessValue, SystemError> {
        self.stiffness.at(x)
    }

    pub fn density_at(&self, x: &[f64]) -> Result<f64, SystemError> {
        eval("rho", &self.density, x)
    }
}

/// The 6×3 blocks `a^j` mapping velocity gradients to Voigt strain rates.
pub fn elastic_a(j: usize) -> [[f64; 3]; 6] {
    let e = |i: usize| {
        let mut r = [0.0; 3];
        r[i] = 1.0;
        r
    };
    let z = [0.0; 3];
    match j {
        0 => [e(0), z, z, e(1), z, e(2)],
        1 => [z, e(1), z, e(0), e(2), z],
        2 => [z, z, e(2), z, e(1), e(0)],
        _ => panic!("axis {j} out of range"),
    }
}

fn build_elastic(spec: ElasticSpec, domain: BoxDomain, check: bool) -> Result<CoefficientSystem, SystemError> {
    let d = domain.dim();
    let s = spec.clone();
    let energy: Arc<MatrixFieldFn> = Arc::new(move |x: &[f64]| {
        let rho = s.density_at(x)?;
        let c = s.stiffness_at(x)?;
        let cinv = SpdMatrix::from_matrix(c.matrix().clone())
            .map_err(|source| SystemError::Matrix { field: "C".into(), point: x.to_vec(), source })?
            .inverse();
        Ok(block_diag(&[&cinv.matrix().scale(rho), &CMatrix::identity(3)]))
    });
    let flux = (0..d)
        .map(|j| {
            let a: Vec<Vec<f64>> = elastic_a(j).iter().map(|r| r.to_vec()).collect();
            constant(off_diagonal_block(&a))
        })
        .collect();
    let mut sys = CoefficientSystem::from_fields(domain, 9, energy, flux, constant(CMatrix::zeros(9)), "elastic")?
        .with_kind(SystemKind::Elastic(spec.clone()));
    let mut fields = vec![&spec.density];
    match &spec.stiffness {
        StiffnessTensor::Isotropic { bulk, shear } => fields.extend([bulk, shear]),
        StiffnessTensor::General { entries } => fields.extend(entries.iter()),
    }
    if all_constant(&fields) {
        sys = sys.with_energy_inv_sqrt_gradient(zero_gradient(d, 9));
    }
    if check {
        check_construction(&sys, &[("rho", &spec.density)])?;
    }
    Ok(sys)
}

/// Linear elasticity for `Ψ = (Σ, P)`: Voigt stress and momentum density.
pub fn elastic(rho: &str, stiffness: StiffnessTensor, domain: BoxDomain) -> Result<CoefficientSystem, SystemError> {
    build_elastic(ElasticSpec { density: parse(rho)?, stiffness }, domain, true)
}

/// As [`elastic`] but without construction-time sampling; use
/// [`super::validate_system`] to inspect the result.
pub fn elastic_unchecked(
    rho: &str,
    stiffness: StiffnessTensor,
    domain: BoxDomain,
) -> Result<CoefficientSystem, SystemError> {
    build_elastic(ElasticSpec { density: parse(rho)?, stiffness }, domain, false)
}

pub fn elastic_isotropic(rho: &str, bulk: &str, shear: &str, domain: BoxDomain) -> Result<CoefficientSystem, SystemError> {
    let stiffness = StiffnessTensor::isotropic(bulk, shear)?;
    if let StiffnessTensor::Isotropic { bulk, shear } = &stiffness {
        let mut x = domain.center();
        if !domain.contains(&x) {
            x = sample_point(&domain, 0);
        }
        for (name, f) in [("K", bulk), ("mu", shear)] {
            let v = eval(name, f, &x)?;
            if !(v > 0.0) {
                return Err(SystemError::NonPositive { what: name.into(), value: v, point: x });
            }
        }
    }
    elastic(rho, stiffness, domain)
}

/// Dirac α-matrices (Dirac representation).
pub fn dirac_alpha(j: usize) -> CMatrix {
    let i = C64::new(0.0, 1.0);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let sigma: [[C64; 2]; 2] = match j {
        0 => [[zero, one], [one, zero]],
        1 => [[zero, -i], [i, zero]],
        2 => [[one, zero], [zero, -one]],
        _ => panic!("axis {j} out of range"),
    };
    let mut m = CMatrix::zeros(4);
    for r in 0..2 {
        for c in 0..2 {
            m[(r, 2 + c)] = sigma[r][c];
            m[(2 + r, c)] = sigma[r][c];
        }
    }
    m
}

/// Massless free Dirac operator on `R^3` with a ball of `radius` around the
/// origin removed; `window` is the half-width of the sampling box.
pub fn dirac_free(radius: f64, window: f64) -> Result<CoefficientSystem, SystemError> {
    if !(window > radius) {
        return Err(SystemError::Domain(format!("window {window} must exceed the excluded radius {radius}")));
    }
    let domain = BoxDomain::whole_space(vec![-window; 3], vec![window; 3])?.with_excluded_ball(vec![0.0; 3], radius)?;
    let flux = (0..3).map(|j| constant(dirac_alpha(j))).collect();
    let sys = CoefficientSystem::from_fields(
        domain,
        4,
        constant(CMatrix::identity(4)),
        flux,
        constant(CMatrix::zeros(4)),
        "dirac",
    )?
    .with_identity_energy()
    .with_energy_inv_sqrt_gradient(zero_gradient(3, 4))
    .with_kind(SystemKind::Dirac);
    Ok(sys)
}

/// User-defined system from real matrix-entry expressions (row-major `k × k`).
#[derive(Debug, Clone)]
pub struct CustomSpec {
    pub k: usize,
    pub energy: Vec<String>,
    pub flux: Vec<Vec<String>>,
    pub potential: Option<Vec<String>>,
}

fn matrix_field(name: &str, k: usize, entries: &[String]) -> Result<(Arc<MatrixFieldFn>, bool), SystemError> {
    if entries.len() != k * k {
        return Err(SystemError::Invalid(format!("{name} needs {} entries, got {}", k * k, entries.len())));
    }
    let fields = entries.iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?;
    let is_const = all_constant(&fields.iter().collect::<Vec<_>>());
    let name = name.to_string();
    let f: Arc<MatrixFieldFn> = Arc::new(move |x: &[f64]| {
        let mut vals = Vec::with_capacity(k * k);
        for (i, f) in fields.iter().enumerate() {
            vals.push(eval(&format!("{name}[{},{}]", i / k, i % k), f, x)?);
        }
        CMatrix::from_real(k, &vals).map_err(|e| SystemError::Invalid(e.to_string()))
    });
    Ok((f, is_const))
}

pub fn custom(spec: &CustomSpec, domain: BoxDomain) -> Result<CoefficientSystem, SystemError> {
    let k = spec.k;
    let d = domain.dim();
    if spec.flux.len() != d {
        return Err(SystemError::Invalid(format!("{} flux matrices for dimension {d}", spec.flux.len())));
    }
    let (energy, e_const) = matrix_field("E", k, &spec.energy)?;
    let flux = spec
        .flux
        .iter()
        .enumerate()
        .map(|(j, a)| matrix_field(&format!("A{}", j + 1), k, a).map(|p| p.0))
        .collect::<Result<Vec<_>, _>>()?;
    let potential = match &spec.potential {
        Some(v) => matrix_field("V", k, v)?.0,
        None => constant(CMatrix::zeros(k)),
    };
    let mut sys = CoefficientSystem::from_fields(domain, k, energy, flux, potential, "custom")?;
    if e_const {
        sys = sys.with_energy_inv_sqrt_gradient(zero_gradient(d, k));
    }
    check_construction(&sys, &[])?;
    Ok(sys)
}
