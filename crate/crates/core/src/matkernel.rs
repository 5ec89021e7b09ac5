//! Small dense Hermitian linear algebra.
//!
//! Everything here works on row-major `k x k` complex matrices with `k` at most
//! a few dozen. The eigensolver is a cyclic complex Jacobi iteration: for the
//! sizes we care about it is accurate to a few ulps of `‖H‖` and needs no
//! tridiagonal reduction.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Absolute floor used whenever a tolerance is taken relative to a norm.
pub const NORM_FLOOR: f64 = 1e-300;
const HERMITIAN_TOL: f64 = 1e-13;
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;
const SINGULAR_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("matrix is not Hermitian: entry ({row},{col}) differs from its mirror by {defect:e} (relative)")]
    NotHermitian { row: usize, col: usize, defect: f64 },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal {off:e}) for matrix {matrix}")]
    NoConvergence { sweeps: usize, off: f64, matrix: String },
    #[error("numerically singular E: smallest eigenvalue {min_eig:e} vs norm {norm:e}")]
    Singular { min_eig: f64, norm: f64 },
    #[error("matrix is not positive definite: smallest eigenvalue {min_eig:e}")]
    NotPositive { min_eig: f64 },
    #[error("non-finite matrix entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
}

/// Dense square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(n: usize, data: Vec<C64>) -> Result<Self, MatError> {
        if data.len() != n * n {
            return Err(MatError::Dimension { expected: n * n, found: data.len() });
        }
        Ok(CMatrix { n, data })
    }

    pub fn from_real(n: usize, data: &[f64]) -> Result<Self, MatError> {
        Self::from_vec(n, data.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn from_real_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| C64::new(v, 0.0))).collect();
        CMatrix { n: N, data }
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        CMatrix { n: self.n, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        CMatrix { n: self.n, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..n).map(|j| self.data[i * n + j] * v[j]).sum())
            .collect()
    }

    /// `Re Tr(self * other)` without forming the product.
    pub fn trace_product_re(&self, other: &CMatrix) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j];
                let b = other.data[j * n + i];
                acc += a.re * b.re - a.im * b.im;
            }
        }
        acc
    }

    /// Largest entrywise defect `|a_ij - conj(a_ji)|` relative to the Frobenius norm.
    pub fn hermitian_defect(&self) -> (f64, usize, usize) {
        let scale = self.frobenius().max(NORM_FLOOR);
        let mut worst = (0.0, 0, 0);
        for i in 0..self.n {
            for j in i..self.n {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm() / scale;
                if d > worst.0 {
                    worst = (d, i, j);
                }
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n, "matrix product dimension mismatch");
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for l in 0..n {
                let a = self.data[i * n + l];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[l * n + j];
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n, "matrix sum dimension mismatch");
        CMatrix { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n, "matrix difference dimension mismatch");
        CMatrix { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.n {
                if j > 0 {
                    write!(f, ", ")?;
                }
                let z = self[(i, j)];
                if z.im == 0.0 {
                    write!(f, "{:e}", z.re)?;
                } else {
                    write!(f, "{:e}{:+e}i", z.re, z.im)?;
                }
            }
        }
        write!(f, "]")
    }
}

impl fmt::Display for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Hermitian matrix. The constructor symmetrizes small defects away.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

/// Eigendecomposition `H = V diag(values) V*` with ascending eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self, MatError> {
        for i in 0..m.n {
            for j in 0..m.n {
                let z = m[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(MatError::NonFinite { row: i, col: j });
                }
            }
        }
        let (defect, row, col) = m.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(MatError::NotHermitian { row, col, defect });
        }
        let half = (&m + &m.adjoint()).scale(0.5);
        Ok(HermitianMatrix(half))
    }

    pub fn from_real(n: usize, data: &[f64]) -> Result<Self, MatError> {
        Self::new(CMatrix::from_real(n, data)?)
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(CMatrix::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(CMatrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix(self.0.scale(s))
    }

    /// `B* H B`, which is Hermitian for any `B`.
    pub fn congruence(&self, b: &CMatrix) -> Self {
        let mut m = &(&b.adjoint() * &self.0) * b;
        // kill rounding asymmetry
        m = (&m + &m.adjoint()).scale(0.5);
        HermitianMatrix(m)
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        HermitianMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        HermitianMatrix(&self.0 - &other.0)
    }

    pub fn eig(&self) -> Result<Eigen, MatError> {
        eig_herm(self)
    }

    pub fn op_norm(&self) -> Result<f64, MatError> {
        op_norm(self)
    }

    pub fn min_eigenvalue(&self) -> Result<f64, MatError> {
        Ok(eig_herm(self)?.values[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64, MatError> {
        let e = eig_herm(self)?;
        Ok(*e.values.last().unwrap())
    }
}

/// Hermitian positive-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    h: HermitianMatrix,
    eig: Eigen,
}

impl SpdMatrix {
    pub fn new(h: HermitianMatrix) -> Result<Self, MatError> {
        let eig = eig_herm(&h)?;
        let min = eig.values[0];
        let norm = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(NORM_FLOOR);
        if min <= 0.0 {
            return Err(MatError::NotPositive { min_eig: min });
        }
        if min < SINGULAR_TOL * norm {
            return Err(MatError::Singular { min_eig: min, norm });
        }
        Ok(SpdMatrix { h, eig })
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self, MatError> {
        Self::new(HermitianMatrix::new(m)?)
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix {
            h: HermitianMatrix::identity(n),
            eig: Eigen { values: vec![1.0; n], vectors: CMatrix::identity(n) },
        }
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.h
    }

    pub fn matrix(&self) -> &CMatrix {
        self.h.matrix()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig.values[0]
    }

    /// `V f(Λ) V*`.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.dim();
        let v = &self.eig.vectors;
        let fl: Vec<f64> = self.eig.values.iter().map(|&l| f(l)).collect();
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = ZERO;
                for (l, &fv) in fl.iter().enumerate() {
                    acc += v[(i, l)] * v[(j, l)].conj() * fv;
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
            out[(i, i)] = C64::new(out[(i, i)].re, 0.0);
        }
        out
    }

    fn from_spectral(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let m = self.spectral_map(&f);
        let values: Vec<f64> = self.eig.values.iter().map(|&l| f(l)).collect();
        // f is monotone on the spectrum for every caller, so the order is either kept or reversed
        let mut pairs: Vec<(f64, usize)> = values.iter().copied().zip(0..).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = self.dim();
        let mut vectors = CMatrix::zeros(n);
        for (col, &(_, src)) in pairs.iter().enumerate() {
            for r in 0..n {
                vectors[(r, col)] = self.eig.vectors[(r, src)];
            }
        }
        SpdMatrix {
            h: HermitianMatrix(m),
            eig: Eigen { values: pairs.iter().map(|p| p.0).collect(), vectors },
        }
    }

    pub fn sqrt(&self) -> SpdMatrix {
        self.from_spectral(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.from_spectral(|l| 1.0 / l.sqrt())
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.from_spectral(|l| 1.0 / l)
    }
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
pub fn eig_herm(h: &HermitianMatrix) -> Result<Eigen, MatError> {
    let n = h.dim();
    let mut a = h.matrix().clone();
    let mut v = CMatrix::identity(n);
    let norm = a.frobenius().max(NORM_FLOOR);
    let tol = JACOBI_TOL * norm;

    let off = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let o = off(&a);
        if o < tol || n == 1 {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(MatError::NoConvergence { sweeps, off: o, matrix: format!("{:?}", h.matrix()) });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= NORM_FLOOR || mag < 1e-18 * norm {
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // real rotation for the block after removing the phase of a_pq
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let phase = apq / mag; // e^{i phi}
                let pc = phase.conj();
                // U restricted to (p,q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let u_pp = C64::new(c, 0.0);
                let u_pq = C64::new(s, 0.0);
                let u_qp = pc * (-s);
                let u_qq = pc * c;
                // A <- A U (columns)
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = arp * u_pp + arq * u_qp;
                    a[(r, q)] = arp * u_pq + arq * u_qq;
                }
                // A <- U* A (rows)
                for col in 0..n {
                    let apc = a[(p, col)];
                    let aqc = a[(q, col)];
                    a[(p, col)] = u_pp.conj() * apc + u_qp.conj() * aqc;
                    a[(q, col)] = u_pq.conj() * apc + u_qq.conj() * aqc;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp * u_pp + vrq * u_qp;
                    v[(r, q)] = vrp * u_pq + vrq * u_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    Ok(Eigen { values, vectors })
}

pub fn spd_sqrt(s: &SpdMatrix) -> SpdMatrix {
    s.sqrt()
}

pub fn spd_inv_sqrt(s: &SpdMatrix) -> SpdMatrix {
    s.inv_sqrt()
}

/// Spectral norm of a Hermitian matrix: `max |λ|`.
pub fn op_norm(h: &HermitianMatrix) -> Result<f64, MatError> {
    if h.matrix().is_zero() {
        return Ok(0.0);
    }
    let e = eig_herm(h)?;
    Ok(e.values.iter().fold(0.0f64, |a, v| a.max(v.abs())))
}

/// Spectral norm of a general square matrix via `sqrt(λ_max(B* B))`.
pub fn general_op_norm(b: &CMatrix) -> Result<f64, MatError> {
    let bb = HermitianMatrix::new(&b.adjoint() * b)?;
    Ok(bb.max_eigenvalue()?.max(0.0).sqrt())
}

/// Real symmetric `d x d` helper used for velocity matrices and metrics.
pub fn real_sym(n: usize, data: &[f64]) -> Result<HermitianMatrix, MatError> {
    HermitianMatrix::from_real(n, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_herm(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..n {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        HermitianMatrix::new(m).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SpdMatrix {
        let h = random_herm(rng, n);
        let hh = HermitianMatrix::identity(n).congruence(h.matrix());
        SpdMatrix::new(hh.add(&HermitianMatrix::identity(n).scale(0.5))).unwrap()
    }

    fn residual(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).frobenius() / a.frobenius().max(NORM_FLOOR)
    }

    #[test]
    fn diagonal_spectrum() {
        let h = HermitianMatrix::from_real(2, &[3.0, 0.0, 0.0, 1.0]).unwrap();
        let e = h.eig().unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pauli_x_spectrum() {
        let h = HermitianMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let e = h.eig().unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
        assert!((op_norm(&h).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_random_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..20 {
            let h = random_herm(&mut rng, 6);
            let e = h.eig().unwrap();
            let lam = CMatrix::diag_real(&e.values);
            let back = &(&e.vectors * &lam) * &e.vectors.adjoint();
            assert!(residual(h.matrix(), &back) < 1e-12);
            let vv = &e.vectors.adjoint() * &e.vectors;
            assert!(residual(&CMatrix::identity(6), &vv) < 1e-12);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            for i in 0..6 {
                let col: Vec<C64> = (0..6).map(|r| e.vectors[(r, i)]).collect();
                let hv = h.matrix().mul_vec(&col);
                let err: f64 = hv
                    .iter()
                    .zip(&col)
                    .map(|(a, b)| (a - b * e.values[i]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(err < 1e-12 * h.matrix().frobenius());
            }
        }
    }

    #[test]
    fn sqrt_examples() {
        let id = SpdMatrix::identity(3);
        assert!(residual(id.sqrt().matrix(), &CMatrix::identity(3)) < 1e-15);
        let s = SpdMatrix::from_matrix(CMatrix::diag_real(&[4.0, 9.0])).unwrap();
        let r = s.sqrt();
        assert!(residual(r.matrix(), &CMatrix::diag_real(&[2.0, 3.0])) < 1e-15);
        let ri = s.inv_sqrt();
        assert!(residual(ri.matrix(), &CMatrix::diag_real(&[0.5, 1.0 / 3.0])) < 1e-15);
    }

    #[test]
    fn sqrt_multiply_back_random_9x9() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let s = random_spd(&mut rng, 9);
            let r = s.sqrt();
            assert!(residual(s.matrix(), &(r.matrix() * r.matrix())) < 1e-11);
            let ri = s.inv_sqrt();
            let prod = &(ri.matrix() * ri.matrix()) * s.matrix();
            assert!(residual(&CMatrix::identity(9), &prod) < 1e-11);
            assert!(r.min_eigenvalue() > 0.0);
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let err = SpdMatrix::from_matrix(CMatrix::diag_real(&[1.0, 1e-16])).unwrap_err();
        assert!(matches!(err, MatError::Singular { .. }));
        let err = SpdMatrix::from_matrix(CMatrix::diag_real(&[1.0, -1.0])).unwrap_err();
        assert!(matches!(err, MatError::NotPositive { .. }));
    }

    #[test]
    fn non_hermitian_rejected() {
        let err = HermitianMatrix::from_real(2, &[0.0, 1.0, 0.5, 0.0]).unwrap_err();
        assert!(matches!(err, MatError::NotHermitian { row: 0, col: 1, .. }));
    }

    #[test]
    fn op_norm_zero_and_random() {
        assert_eq!(op_norm(&HermitianMatrix::zeros(4)).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_herm(&mut rng, 5);
        let e = h.eig().unwrap();
        let expect = e.values[0].abs().max(e.values[4].abs());
        assert_eq!(op_norm(&h).unwrap(), expect);
    }

    #[test]
    fn unitary_invariance_and_submultiplicativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=8 {
            let h = random_herm(&mut rng, n);
            let u = random_herm(&mut rng, n).eig().unwrap().vectors;
            let g = h.congruence(&u);
            let a = h.eig().unwrap().values;
            let b = g.eig().unwrap().values;
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-11 * (1.0 + x.abs()));
            }
            let k = random_herm(&mut rng, n);
            let prod = h.matrix() * k.matrix();
            let lhs = general_op_norm(&prod).unwrap();
            assert!(lhs <= op_norm(&h).unwrap() * op_norm(&k).unwrap() * (1.0 + 1e-12));
        }
    }
}
