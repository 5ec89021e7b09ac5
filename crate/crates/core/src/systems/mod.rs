//! Coefficient systems `(E, A^1..A^d, V)` on box domains.
//!
//! A system describes the operator
//! `E^{-1} [ -(i/2) Σ_j (A^j ∂_j + ∂_j A^j) + V ]` acting on `C^k`-valued
//! fields. Fields are stored as pure point evaluators so that systems can be
//! shared freely across threads.

mod builtins;
mod canonical;
mod stiffness;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{EvalError, ParseError};
use crate::grid::halton;
use crate::matkernel::{CMatrix, HermitianMatrix, MatError, SpdMatrix};

pub use builtins::{
    custom, dirac_free, elastic, elastic_isotropic, elastic_unchecked, maxwell_anisotropic, maxwell_isotropic,
    telegraph, CustomSpec, ElasticSpec, MaxwellSpec, Medium, TelegraphSpec,
};
pub use builtins::{dirac_alpha, elastic_a, maxwell_a};
pub use canonical::{canonical_potential_fd, canonicalize, energy_inv_sqrt_gradient_fd};
pub use stiffness::{StiffnessTensor, StiffnessValue, VOIGT_LABELS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("point {point:?} is outside the domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("expression `{src}`: {source}")]
    Parse { src: String, source: ParseError },
    #[error("{field}: {source}")]
    Eval { field: String, source: EvalError },
    #[error("{field} at {point:?}: {source}")]
    Matrix { field: String, point: Vec<f64>, source: MatError },
    #[error("{what} must be positive, got {value} at {point:?}")]
    NonPositive { what: String, value: f64, point: Vec<f64> },
    #[error("stiffness symmetry broken: c_{{{a}}} = {va} but c_{{{b}}} = {vb}")]
    StiffnessSymmetry { a: String, b: String, va: f64, vb: f64 },
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Box-shaped domain with optional unbounded sides and an optional excluded ball.
///
/// For unbounded sides `lower`/`upper` still give the finite window used for
/// sampling and grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    unbounded: Vec<[bool; 2]>,
    excluded_ball: Option<Ball>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, unbounded: Vec<[bool; 2]>) -> Result<Self, SystemError> {
        let d = lower.len();
        if !(1..=3).contains(&d) {
            return Err(SystemError::Domain(format!("dimension must be 1..=3, got {d}")));
        }
        if upper.len() != d || unbounded.len() != d {
            return Err(SystemError::Domain("lower, upper and unbounded must have equal length".into()));
        }
        for a in 0..d {
            if !(lower[a] < upper[a]) || !lower[a].is_finite() || !upper[a].is_finite() {
                return Err(SystemError::Domain(format!(
                    "axis {a}: need finite lower < upper, got [{}, {}]",
                    lower[a], upper[a]
                )));
            }
        }
        Ok(BoxDomain { lower, upper, unbounded, excluded_ball: None })
    }

    pub fn bounded(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SystemError> {
        let d = lower.len();
        Self::new(lower, upper, vec![[false, false]; d])
    }

    /// `R^d` sampled through the window `[lower, upper]`.
    pub fn whole_space(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SystemError> {
        let d = lower.len();
        Self::new(lower, upper, vec![[true, true]; d])
    }

    pub fn with_excluded_ball(mut self, center: Vec<f64>, radius: f64) -> Result<Self, SystemError> {
        if center.len() != self.dim() || !(radius > 0.0) {
            return Err(SystemError::Domain("excluded ball needs a positive radius and matching centre".into()));
        }
        self.excluded_ball = Some(Ball { center, radius });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn unbounded(&self) -> &[[bool; 2]] {
        &self.unbounded
    }

    pub fn excluded_ball(&self) -> Option<&Ball> {
        self.excluded_ball.as_ref()
    }

    pub fn is_bounded_side(&self, axis: usize, side: usize) -> bool {
        !self.unbounded[axis][side]
    }

    pub fn is_whole_space(&self) -> bool {
        self.unbounded.iter().all(|s| s[0] && s[1]) && self.excluded_ball.is_none()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| 0.5 * (self.lower[a] + self.upper[a])).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        for a in 0..self.dim() {
            if !self.unbounded[a][0] && x[a] <= self.lower[a] {
                return false;
            }
            if !self.unbounded[a][1] && x[a] >= self.upper[a] {
                return false;
            }
        }
        if let Some(b) = &self.excluded_ball {
            let r2: f64 = x.iter().zip(&b.center).map(|(p, c)| (p - c) * (p - c)).sum();
            if r2 <= b.radius * b.radius {
                return false;
            }
        }
        true
    }

    /// Euclidean distance from `x` to the finite part of the boundary
    /// (bounded faces and the excluded sphere), with the outward unit normal
    /// of the closest piece. `None` when the domain has no boundary.
    pub fn boundary_distance(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let d = self.dim();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut consider = |dist: f64, normal: Vec<f64>| {
            if best.as_ref().map_or(true, |b| dist < b.0) {
                best = Some((dist, normal));
            }
        };
        for a in 0..d {
            if !self.unbounded[a][0] {
                let mut n = vec![0.0; d];
                n[a] = -1.0;
                consider(x[a] - self.lower[a], n);
            }
            if !self.unbounded[a][1] {
                let mut n = vec![0.0; d];
                n[a] = 1.0;
                consider(self.upper[a] - x[a], n);
            }
        }
        if let Some(b) = &self.excluded_ball {
            let diff: Vec<f64> = x.iter().zip(&b.center).map(|(p, c)| p - c).collect();
            let r = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > 0.0 {
                consider(r - b.radius, diff.iter().map(|v| -v / r).collect());
            }
        }
        best
    }
}

pub type MatrixFieldFn = dyn Fn(&[f64]) -> Result<CMatrix, SystemError> + Send + Sync;
pub type MatrixGradFn = dyn Fn(&[f64]) -> Result<Vec<CMatrix>, SystemError> + Send + Sync;

/// Which construction produced a system; structured velocity paths key off this.
#[derive(Clone)]
pub enum SystemKind {
    Telegraph(builtins::TelegraphSpec),
    Maxwell(MaxwellSpec),
    Elastic(ElasticSpec),
    Dirac,
    Custom,
    Canonical,
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::Telegraph(_) => "telegraph",
            SystemKind::Maxwell(_) => "maxwell",
            SystemKind::Elastic(_) => "elastic",
            SystemKind::Dirac => "dirac",
            SystemKind::Custom => "custom",
            SystemKind::Canonical => "canonical",
        }
    }
}

/// Pointwise coefficients at one location.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub energy: SpdMatrix,
    pub flux: Vec<HermitianMatrix>,
    pub potential: HermitianMatrix,
}

#[derive(Clone)]
pub struct CoefficientSystem {
    pub(crate) domain: BoxDomain,
    pub(crate) k: usize,
    pub(crate) energy: Arc<MatrixFieldFn>,
    pub(crate) flux: Vec<Arc<MatrixFieldFn>>,
    pub(crate) potential: Arc<MatrixFieldFn>,
    pub(crate) energy_inv_sqrt_grad: Option<Arc<MatrixGradFn>>,
    pub(crate) energy_is_identity: bool,
    pub(crate) label: String,
    pub(crate) kind: SystemKind,
}

impl fmt::Debug for CoefficientSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSystem")
            .field("label", &self.label)
            .field("kind", &self.kind.name())
            .field("d", &self.dim())
            .field("k", &self.k)
            .field("domain", &self.domain)
            .finish()
    }
}

fn field_name(name: &str, j: Option<usize>) -> String {
    match j {
        Some(j) => format!("{name}{}", j + 1),
        None => name.to_string(),
    }
}

impl CoefficientSystem {
    /// Assemble a system from raw evaluators. Nothing is evaluated here;
    /// use [`validate_system`] to sample the invariants.
    pub fn from_fields(
        domain: BoxDomain,
        k: usize,
        energy: Arc<MatrixFieldFn>,
        flux: Vec<Arc<MatrixFieldFn>>,
        potential: Arc<MatrixFieldFn>,
        label: impl Into<String>,
    ) -> Result<Self, SystemError> {
        if flux.len() != domain.dim() {
            return Err(SystemError::Invalid(format!(
                "{} flux matrices for a {}-dimensional domain",
                flux.len(),
                domain.dim()
            )));
        }
        if k == 0 {
            return Err(SystemError::Invalid("fibre dimension must be positive".into()));
        }
        Ok(CoefficientSystem {
            domain,
            k,
            energy,
            flux,
            potential,
            energy_inv_sqrt_grad: None,
            energy_is_identity: false,
            label: label.into(),
            kind: SystemKind::Custom,
        })
    }

    pub fn with_energy_inv_sqrt_gradient(mut self, grad: Arc<MatrixGradFn>) -> Self {
        self.energy_inv_sqrt_grad = Some(grad);
        self
    }

    /// Mark `E ≡ I`; the caller guarantees it.
    pub fn with_identity_energy(mut self) -> Self {
        self.energy_is_identity = true;
        self
    }

    pub(crate) fn with_kind(mut self, kind: SystemKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn energy_is_identity(&self) -> bool {
        self.energy_is_identity
    }

    fn check_point(&self, x: &[f64]) -> Result<(), SystemError> {
        if !self.domain.contains(x) {
            return Err(SystemError::OutsideDomain { point: x.to_vec() });
        }
        Ok(())
    }

    fn hermitian(&self, name: &str, j: Option<usize>, x: &[f64], m: CMatrix) -> Result<HermitianMatrix, SystemError> {
        if m.dim() != self.k {
            return Err(SystemError::Invalid(format!(
                "{} has size {} but k = {}",
                field_name(name, j),
                m.dim(),
                self.k
            )));
        }
        HermitianMatrix::new(m).map_err(|source| SystemError::Matrix {
            field: field_name(name, j),
            point: x.to_vec(),
            source,
        })
    }

    pub fn energy_at(&self, x: &[f64]) -> Result<SpdMatrix, SystemError> {
        self.check_point(x)?;
        if self.energy_is_identity {
            return Ok(SpdMatrix::identity(self.k));
        }
        let h = self.hermitian("E", None, x, (self.energy)(x)?)?;
        SpdMatrix::new(h).map_err(|source| SystemError::Matrix { field: "E".into(), point: x.to_vec(), source })
    }

    pub fn flux_at(&self, j: usize, x: &[f64]) -> Result<HermitianMatrix, SystemError> {
        self.check_point(x)?;
        self.hermitian("A", Some(j), x, (self.flux[j])(x)?)
    }

    pub fn potential_at(&self, x: &[f64]) -> Result<HermitianMatrix, SystemError> {
        self.check_point(x)?;
        self.hermitian("V", None, x, (self.potential)(x)?)
    }

    /// Raw `E^{-1/2}` gradient evaluator, if one was supplied.
    pub fn energy_inv_sqrt_grad(&self) -> Option<&Arc<MatrixGradFn>> {
        self.energy_inv_sqrt_grad.as_ref()
    }
}

/// `(E, A^1..A^d, V)` at `x`.
pub fn eval_coeffs(sys: &CoefficientSystem, x: &[f64]) -> Result<Coefficients, SystemError> {
    let energy = sys.energy_at(x)?;
    let flux = (0..sys.dim()).map(|j| sys.flux_at(j, x)).collect::<Result<Vec<_>, _>>()?;
    let potential = sys.potential_at(x)?;
    Ok(Coefficients { energy, flux, potential })
}

/// Principal symbol `σ(x, ξ) = Σ_j ξ_j A^j(x)`.
pub fn symbol(sys: &CoefficientSystem, x: &[f64], xi: &[f64]) -> Result<HermitianMatrix, SystemError> {
    if xi.len() != sys.dim() {
        return Err(SystemError::Invalid(format!("direction has {} components, expected {}", xi.len(), sys.dim())));
    }
    let mut acc = CMatrix::zeros(sys.k());
    for (j, &c) in xi.iter().enumerate() {
        if c != 0.0 {
            acc = &acc + &sys.flux_at(j, x)?.matrix().scale(c);
        } else {
            sys.check_point(x)?;
        }
    }
    HermitianMatrix::new(acc).map_err(|source| SystemError::Matrix { field: "symbol".into(), point: x.to_vec(), source })
}

/// Outcome of sampling a system's structural invariants.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub worst_hermitian_defect: f64,
    pub worst_field: String,
    pub min_energy_eigenvalue: f64,
    pub min_stiffness_eigenvalue: Option<f64>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const DEFAULT_VALIDATION_SAMPLES: usize = 256;

pub(crate) fn sample_point(domain: &BoxDomain, i: usize) -> Vec<f64> {
    let u = halton(i + 1, domain.dim());
    (0..domain.dim()).map(|a| domain.lower()[a] + u[a] * domain.extent(a)).collect()
}

/// Sample `sample_count` deterministic interior points and check Hermiticity,
/// positivity of `E` and (for elastic media) the stiffness matrix.
pub fn validate_system(sys: &CoefficientSystem, sample_count: usize) -> ValidationReport {
    let mut report = ValidationReport {
        samples: 0,
        worst_hermitian_defect: 0.0,
        worst_field: String::new(),
        min_energy_eigenvalue: f64::INFINITY,
        min_stiffness_eigenvalue: None,
        failures: Vec::new(),
    };
    let mut i = 0;
    while report.samples < sample_count && i < 16 * sample_count + 16 {
        let x = sample_point(sys.domain(), i);
        i += 1;
        if !sys.domain().contains(&x) {
            continue;
        }
        report.samples += 1;
        let mut raw: Vec<(String, Result<CMatrix, SystemError>)> = Vec::new();
        if !sys.energy_is_identity {
            raw.push(("E".into(), (sys.energy)(&x)));
        }
        for j in 0..sys.dim() {
            raw.push((field_name("A", Some(j)), (sys.flux[j])(&x)));
        }
        raw.push(("V".into(), (sys.potential)(&x)));
        for (name, m) in raw {
            match m {
                Ok(m) => {
                    let (defect, r, c) = m.hermitian_defect();
                    if defect > report.worst_hermitian_defect {
                        report.worst_hermitian_defect = defect;
                        report.worst_field = format!("{name}[{r},{c}] at {x:?}");
                    }
                }
                Err(e) => report.failures.push(format!("{name} at {x:?}: {e}")),
            }
        }
        match sys.energy_at(&x) {
            Ok(e) => report.min_energy_eigenvalue = report.min_energy_eigenvalue.min(e.min_eigenvalue()),
            Err(e) => report.failures.push(e.to_string()),
        }
        if let SystemKind::Elastic(spec) = &sys.kind {
            if let Err(e) = spec.stiffness.check_symmetry_at(&x) {
                if !report.failures.iter().any(|f| f.starts_with("stiffness symmetry")) {
                    report.failures.push(e.to_string());
                }
                continue;
            }
            match spec.stiffness_at(&x).and_then(|c| {
                c.min_eigenvalue()
                    .map_err(|source| SystemError::Matrix { field: "C".into(), point: x.clone(), source })
            }) {
                Ok(l) => {
                    let cur = report.min_stiffness_eigenvalue.unwrap_or(f64::INFINITY);
                    report.min_stiffness_eigenvalue = Some(cur.min(l));
                    if l <= 0.0 {
                        report.failures.push(format!("stiffness not positive at {x:?}: min eigenvalue {l:e}"));
                    }
                }
                Err(e) => report.failures.push(e.to_string()),
            }
        }
        if report.failures.len() > 16 {
            break;
        }
    }
    if report.worst_hermitian_defect > 1e-13 {
        report.failures.push(format!(
            "Hermiticity defect {:e} in {}",
            report.worst_hermitian_defect, report.worst_field
        ));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_membership() {
        let d = BoxDomain::bounded(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(d.contains(&[0.5, 1.0]));
        assert!(!d.contains(&[0.0, 1.0]));
        assert!(!d.contains(&[0.5, 2.5]));
        let (dist, n) = d.boundary_distance(&[0.2, 1.0]).unwrap();
        assert!((dist - 0.2).abs() < 1e-15);
        assert_eq!(n, vec![-1.0, 0.0]);
        let w = BoxDomain::whole_space(vec![-1.0], vec![1.0]).unwrap();
        assert!(w.contains(&[5.0]));
        assert!(w.boundary_distance(&[0.0]).is_none());
        assert!(BoxDomain::bounded(vec![1.0], vec![0.0]).is_err());
        let b = BoxDomain::whole_space(vec![-1.0; 3], vec![1.0; 3])
            .unwrap()
            .with_excluded_ball(vec![0.0; 3], 0.1)
            .unwrap();
        assert!(!b.contains(&[0.05, 0.0, 0.0]));
        let (dist, _) = b.boundary_distance(&[1.0, 0.0, 0.0]).unwrap();
        assert!((dist - 0.9).abs() < 1e-15);
    }

    #[test]
    fn symbol_is_linear_and_zero_at_origin() {
        let sys = telegraph("1", "1", BoxDomain::bounded(vec![0.0], vec![1.0]).unwrap()).unwrap();
        let z = symbol(&sys, &[0.5], &[0.0]).unwrap();
        assert!(z.matrix().is_zero());
        let s = symbol(&sys, &[0.5], &[1.0]).unwrap();
        assert_eq!(s.matrix(), &CMatrix::from_real_rows([[0.0, 1.0], [1.0, 0.0]]));
        let s2 = symbol(&sys, &[0.5], &[-2.5]).unwrap();
        assert_eq!(s2.matrix(), &s.matrix().scale(-2.5));
        assert!(matches!(symbol(&sys, &[1.5], &[1.0]), Err(SystemError::OutsideDomain { .. })));
    }

    #[test]
    fn validation_of_simple_systems() {
        let sys = telegraph("1", "1", BoxDomain::bounded(vec![0.0], vec![1.0]).unwrap()).unwrap();
        let r = validate_system(&sys, 100);
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.samples, 100);
        assert_eq!(r.min_energy_eigenvalue, 1.0);

        let dom = BoxDomain::bounded(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let sys = maxwell_isotropic("1/(1+x^2)", "1", dom).unwrap();
        let r = validate_system(&sys, DEFAULT_VALIDATION_SAMPLES);
        assert!(r.passed(), "{:?}", r.failures);
        assert!(r.min_energy_eigenvalue > 0.0 && r.min_energy_eigenvalue < 1.0);
    }

    #[test]
    fn validation_flags_non_hermitian_custom_field() {
        let dom = BoxDomain::bounded(vec![0.0], vec![1.0]).unwrap();
        let e: Arc<MatrixFieldFn> = Arc::new(|_: &[f64]| Ok(CMatrix::identity(2)));
        let a: Arc<MatrixFieldFn> = Arc::new(|x: &[f64]| Ok(CMatrix::from_real_rows([[0.0, 1.0], [x[0], 0.0]])));
        let v: Arc<MatrixFieldFn> = Arc::new(|_: &[f64]| Ok(CMatrix::zeros(2)));
        let sys = CoefficientSystem::from_fields(dom, 2, e, vec![a], v, "broken").unwrap();
        let r = validate_system(&sys, 32);
        assert!(!r.passed());
        assert!(r.worst_field.starts_with("A1[0,1]"), "{}", r.worst_field);
        match sys.flux_at(0, &[0.5]) {
            Err(SystemError::Matrix { field, point, .. }) => {
                assert_eq!(field, "A1");
                assert_eq!(point, vec![0.5]);
            }
            other => panic!("{other:?}"),
        }
    }
}
