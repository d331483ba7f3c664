//! Unbalanced Sinkhorn divergence
//! `S(x, y) = W(x, y) - ½(W(x, x) + W(y, y))`.

use super::kernel::GibbsKernel;
use super::sinkhorn::{sinkhorn_symmetric, sinkhorn_unbalanced_warm, UotParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative tolerance between the dual-value and transported-mass routes.
/// Single precision gets `1000 * epsilon` instead, see [`cross_check_tol`].
pub const CROSS_CHECK_TOL: f64 = 1e-6;

/// [`CROSS_CHECK_TOL`], widened to what the scalar type can resolve.
pub fn cross_check_tol<T: Scalar>() -> T {
    T::lit(CROSS_CHECK_TOL).max(T::lit(1e3) * T::epsilon())
}

/// Symmetric solve of one measure, reusable across every pair it enters.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfTerm<T> {
    pub log_a: Vec<T>,
    /// `‖P_{x,x}‖₁`
    pub mass: T,
    /// `W(x, x)`
    pub w_value: T,
    pub iterations: usize,
    pub converged: bool,
}

pub fn self_term<T: Scalar>(x: &[T], kernel: &GibbsKernel<T>, params: &UotParams<T>) -> Result<SelfTerm<T>> {
    let (state, summary) = sinkhorn_symmetric(x, kernel, params)?;
    Ok(SelfTerm {
        log_a: state.log_a,
        mass: summary.mass,
        w_value: summary.w_value,
        iterations: state.iterations,
        converged: state.converged,
    })
}

/// `S(x, y)` by both evaluation routes.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport<T> {
    /// `(ε+2γ)(½‖P_xx‖₁ + ½‖P_yy‖₁ - ‖P_xy‖₁)`
    pub value: T,
    /// `W(x, y) - ½(W(x, x) + W(y, y))` from the dual objectives.
    pub dual_value: T,
    pub w_xy: T,
    pub mass_xy: T,
    /// Iterations of the cross solve.
    pub iterations: usize,
    /// True when the cross solve and both self solves converged.
    pub converged: bool,
}

/// `S(x, y)` with both self terms solved here.
pub fn sinkhorn_divergence<T: Scalar>(
    x: &[T],
    y: &[T],
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
) -> Result<DivergenceReport<T>> {
    let sx = self_term(x, kernel, params)?;
    let sy = self_term(y, kernel, params)?;
    divergence_with_self_terms(x, y, &sx, &sy, kernel, params)
}

/// `S(x, y)` from cached self terms; the cross solve is warm-started from
/// the symmetric scaling of `x`.
///
/// Returns [`Error::Consistency`] when all solves converged but the two
/// routes disagree by more than [`cross_check_tol`] relative.
pub fn divergence_with_self_terms<T: Scalar>(
    x: &[T],
    y: &[T],
    sx: &SelfTerm<T>,
    sy: &SelfTerm<T>,
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
) -> Result<DivergenceReport<T>> {
    let (state, summary) = sinkhorn_unbalanced_warm(x, y, kernel, params, Some(&sx.log_a))?;
    let half = T::lit(0.5);
    let value = (params.epsilon + T::lit(2.0) * params.gamma)
        * (half * sx.mass + half * sy.mass - summary.mass);
    let dual_value = summary.w_value - half * (sx.w_value + sy.w_value);
    let converged = state.converged && sx.converged && sy.converged;
    if converged {
        let scale = value.abs().max(T::one());
        if (value - dual_value).abs() > cross_check_tol::<T>() * scale {
            return Err(Error::Consistency(format!(
                "divergence by transported mass {value} vs by dual values {dual_value}"
            )));
        }
    }
    Ok(DivergenceReport {
        value,
        dual_value,
        w_xy: summary.w_value,
        mass_xy: summary.mass,
        iterations: state.iterations,
        converged,
    })
}

/// `∇ₓS = γ(c^{-ε/γ} - a^{-ε/γ})`, `c` the symmetric scaling of `x` and `a`
/// the first scaling of the `(x, y)` problem.
pub fn grad_s<T: Scalar>(x: &[T], y: &[T], kernel: &GibbsKernel<T>, params: &UotParams<T>) -> Result<Vec<T>> {
    let sx = self_term(x, kernel, params)?;
    grad_s_with_self_term(x, y, &sx, kernel, params)
}

pub fn grad_s_with_self_term<T: Scalar>(
    x: &[T],
    y: &[T],
    sx: &SelfTerm<T>,
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
) -> Result<Vec<T>> {
    if x.iter().chain(y).any(|&v| !(v > T::zero())) {
        return Err(Error::domain("x and y must be strictly positive for gradients"));
    }
    if !sx.converged {
        return Err(Error::Convergence {
            iterations: sx.iterations,
            residual: f64::NAN,
        });
    }
    let (state, _) = sinkhorn_unbalanced_warm(x, y, kernel, params, Some(&sx.log_a))?;
    state.ensure_converged()?;
    let ratio = params.epsilon / params.gamma;
    Ok(sx
        .log_a
        .iter()
        .zip(&state.log_a)
        .map(|(&c, &a)| params.gamma * ((-ratio * c).exp() - (-ratio * a).exp()))
        .collect())
}
