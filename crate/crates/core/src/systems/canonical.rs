//! Reduction to `E ≡ I` through `Ψ ↦ E^{1/2} Ψ`.
//!
//! With `F = E^{-1/2}` the transformed system has `Ã^j = F A^j F` and
//! potential `Ṽ = F V F + Ṽ₀`, `Ṽ₀ = -(i/2) Σ_j (B_j - B_j*)`, `B_j = F A^j ∂_j F`.

use std::sync::Arc;

use log::warn;

use crate::matkernel::{CMatrix, HermitianMatrix, C64};

use super::{CoefficientSystem, MatrixFieldFn, SystemError, SystemKind};

const MAX_STEP_HALVINGS: usize = 40;

fn inv_sqrt_at(sys: &CoefficientSystem, x: &[f64]) -> Result<CMatrix, SystemError> {
    Ok(sys.energy_at(x)?.inv_sqrt().matrix().clone())
}

/// Finite-difference `∂_j E^{-1/2}` at `x` for every axis. Central where the
/// stencil fits, one-sided otherwise; the step shrinks until it fits.
pub fn energy_inv_sqrt_gradient_fd(sys: &CoefficientSystem, x: &[f64]) -> Result<Vec<CMatrix>, SystemError> {
    let dom = sys.domain();
    let mut out = Vec::with_capacity(sys.dim());
    let mut centre: Option<CMatrix> = None;
    for j in 0..sys.dim() {
        let mut h = (1e-5 * dom.extent(j)).max(1e-5);
        let mut shrunk = false;
        let mut grad = None;
        for _ in 0..MAX_STEP_HALVINGS {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (inp, inm) = (dom.contains(&xp), dom.contains(&xm));
            if inp && inm {
                grad = Some((&inv_sqrt_at(sys, &xp)? - &inv_sqrt_at(sys, &xm)?).scale(0.5 / h));
            } else if inp || inm {
                let f0 = match &centre {
                    Some(f) => f.clone(),
                    None => {
                        let f = inv_sqrt_at(sys, x)?;
                        centre = Some(f.clone());
                        f
                    }
                };
                grad = Some(if inp {
                    (&inv_sqrt_at(sys, &xp)? - &f0).scale(1.0 / h)
                } else {
                    (&f0 - &inv_sqrt_at(sys, &xm)?).scale(1.0 / h)
                });
            }
            if grad.is_some() {
                break;
            }
            h *= 0.5;
            shrunk = true;
        }
        if shrunk {
            warn!("difference step on axis {} shrunk to {h:e} at {x:?} to stay inside the domain", j + 1);
        }
        out.push(grad.ok_or_else(|| SystemError::OutsideDomain { point: x.to_vec() })?);
    }
    Ok(out)
}

fn derivative_potential(
    sys: &CoefficientSystem,
    f: &CMatrix,
    grads: &[CMatrix],
    x: &[f64],
) -> Result<CMatrix, SystemError> {
    let k = sys.k();
    let mut acc = CMatrix::zeros(k);
    for (j, df) in grads.iter().enumerate() {
        if df.is_zero() {
            continue;
        }
        let a = sys.flux_at(j, x)?;
        let b = &(f * a.matrix()) * df;
        acc = &acc + &(&b - &b.adjoint());
    }
    Ok(acc.scale_c(C64::new(0.0, -0.5)))
}

fn gradients(sys: &CoefficientSystem, x: &[f64]) -> Result<Vec<CMatrix>, SystemError> {
    match sys.energy_inv_sqrt_grad() {
        Some(g) => g(x),
        None => energy_inv_sqrt_gradient_fd(sys, x),
    }
}

/// `Ṽ₀(x)` computed with finite-difference gradients regardless of any
/// analytic gradient attached to the system.
pub fn canonical_potential_fd(sys: &CoefficientSystem, x: &[f64]) -> Result<HermitianMatrix, SystemError> {
    let f = inv_sqrt_at(sys, x)?;
    let g = energy_inv_sqrt_gradient_fd(sys, x)?;
    let v0 = derivative_potential(sys, &f, &g, x)?;
    HermitianMatrix::new(v0).map_err(|source| SystemError::Matrix { field: "V0".into(), point: x.to_vec(), source })
}

/// Unitarily equivalent system with `E ≡ I`. Systems that already have
/// identity energy are returned unchanged.
pub fn canonicalize(sys: &CoefficientSystem) -> Result<CoefficientSystem, SystemError> {
    if sys.energy_is_identity() {
        return Ok(sys.clone());
    }
    let k = sys.k();
    let base = Arc::new(sys.clone());
    let flux: Vec<Arc<MatrixFieldFn>> = (0..sys.dim())
        .map(|j| {
            let s = Arc::clone(&base);
            let f: Arc<MatrixFieldFn> = Arc::new(move |x: &[f64]| {
                let fm = inv_sqrt_at(&s, x)?;
                Ok(&(&fm * s.flux_at(j, x)?.matrix()) * &fm)
            });
            f
        })
        .collect();
    let s = Arc::clone(&base);
    let potential: Arc<MatrixFieldFn> = Arc::new(move |x: &[f64]| {
        let fm = inv_sqrt_at(&s, x)?;
        let v = &(&fm * s.potential_at(x)?.matrix()) * &fm;
        let g = gradients(&s, x)?;
        Ok(&v + &derivative_potential(&s, &fm, &g, x)?)
    });
    let energy: Arc<MatrixFieldFn> = Arc::new(move |_: &[f64]| Ok(CMatrix::identity(k)));
    let zero_grad: Arc<super::MatrixGradFn> = {
        let d = sys.dim();
        Arc::new(move |_: &[f64]| Ok(vec![CMatrix::zeros(k); d]))
    };
    Ok(CoefficientSystem::from_fields(
        sys.domain().clone(),
        k,
        energy,
        flux,
        potential,
        format!("{} (canonical)", sys.label()),
    )?
    .with_identity_energy()
    .with_energy_inv_sqrt_gradient(zero_grad)
    .with_kind(SystemKind::Canonical))
}
