//! Matrix-free conjugate gradients in the discrete `L^2` inner product.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct CgOutcome<T> {
    pub solution: GridFunction<T>,
    pub iterations: usize,
    /// `|b - A x| / |b|` at exit.
    pub relative_residual: T,
}

/// Solves `A x = b` for a symmetric positive definite `A` given by its action.
///
/// Stops when the relative residual is at most `tol`. Curvature
/// `<p, A p> <= 0` aborts with [`Error::NonPositiveCurvature`].
pub fn conjugate_gradient<T: Scalar>(
    apply: impl Fn(&GridFunction<T>) -> GridFunction<T>,
    b: &GridFunction<T>,
    tol: T,
    max_iters: usize,
) -> Result<CgOutcome<T>> {
    let (out, converged) = iterate(apply, b, tol, max_iters)?;
    if converged {
        Ok(out)
    } else {
        Err(Error::CgNotConverged {
            iterations: out.iterations,
            residual: out.relative_residual.to_f64_lossy(),
        })
    }
}

/// Like [`conjugate_gradient`], but returns the last iterate when the
/// iteration cap is reached instead of failing.
///
/// Started from zero, every iterate `x_k` satisfies `<b, x_k> > 0`, so a
/// truncated solve still yields a usable descent direction.
pub fn truncated_cg<T: Scalar>(
    apply: impl Fn(&GridFunction<T>) -> GridFunction<T>,
    b: &GridFunction<T>,
    tol: T,
    max_iters: usize,
) -> Result<CgOutcome<T>> {
    iterate(apply, b, tol, max_iters).map(|(out, _)| out)
}

fn iterate<T: Scalar>(
    apply: impl Fn(&GridFunction<T>) -> GridFunction<T>,
    b: &GridFunction<T>,
    tol: T,
    max_iters: usize,
) -> Result<(CgOutcome<T>, bool)> {
    let b_norm = b.l2_norm();
    let mut x = GridFunction::zeros(*b.grid());
    if b_norm == T::zero() {
        let out = CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: T::zero(),
        };
        return Ok((out, true));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.inner(&r);
    for it in 0..max_iters {
        let ap = apply(&p);
        let curvature = p.inner(&ap);
        if !(curvature > T::zero()) {
            return Err(Error::NonPositiveCurvature {
                iteration: it,
                curvature: curvature.to_f64_lossy(),
            });
        }
        let alpha = rr / curvature;
        x = x.axpy(alpha, &p);
        r = r.axpy(-alpha, &ap);
        let rr_next = r.inner(&r);
        let rel = rr_next.sqrt() / b_norm;
        if rel <= tol {
            let out = CgOutcome {
                solution: x,
                iterations: it + 1,
                relative_residual: rel,
            };
            return Ok((out, true));
        }
        p = r.axpy(rr_next / rr, &p);
        rr = rr_next;
    }
    let out = CgOutcome {
        solution: x,
        iterations: max_iters,
        relative_residual: rr.sqrt() / b_norm,
    };
    Ok((out, false))
}
