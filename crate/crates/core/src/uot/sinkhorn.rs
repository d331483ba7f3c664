//! Unbalanced Sinkhorn scaling iterations in log-scaling form.
//!
//! The scalings solve the fixed point `a = (x / Kb)^ω`, `b = (y / Kᵀa)^ω`
//! with `ω = γ/(γ+ε)`. Iterates are kept as `log a`, `log b`; each kernel
//! product is evaluated on max-shifted exponentials and rows at risk of
//! underflow are recomputed with an exact log-sum-exp, so the iteration is
//! stable for any `ε` without a separate absorption pass.

use super::kernel::{GibbsKernel, LogApplyBuffers};
use crate::error::{Error, Result};
use crate::scalar::{logsumexp, sup_diff, Scalar};

/// Regularization and stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UotParams<T> {
    /// Entropic regularization `ε`.
    pub epsilon: T,
    /// Marginal relaxation `γ`.
    pub gamma: T,
    /// Sup-norm bound on the fixed-point residual of `log a` / `log b`
    /// (iterations stop at `tol·ω`, see [`sinkhorn_unbalanced_warm`]).
    pub tol: T,
    pub max_iter: usize,
    /// Shifted kernel products below `stab_threshold · p` are recomputed
    /// with an exact log-sum-exp.
    pub stab_threshold: T,
    /// Re-balance the dual pair along its slow `(u + λ, v - λ)` direction
    /// after every update. Exact dual ascent; changes no fixed point.
    pub translate: bool,
    /// Keep the `p × p` plan in the returned summary.
    pub keep_plan: bool,
}

impl<T: Scalar> UotParams<T> {
    pub fn new(epsilon: T, gamma: T) -> Result<Self> {
        let p = Self {
            epsilon,
            gamma,
            tol: T::default_tol(),
            max_iter: 5000,
            stab_threshold: T::min_positive_value() / T::epsilon(),
            translate: true,
            keep_plan: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_plan(mut self, keep: bool) -> Self {
        self.keep_plan = keep;
        self
    }

    pub fn with_translation(mut self, on: bool) -> Self {
        self.translate = on;
        self
    }

    /// `ω = γ/(γ+ε)`
    pub fn omega(&self) -> T {
        self.gamma / (self.gamma + self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if !pos(self.epsilon) || !pos(self.gamma) {
            return Err(Error::domain(format!(
                "epsilon and gamma must be positive, got {} and {}",
                self.epsilon, self.gamma
            )));
        }
        if !pos(self.tol) || !pos(self.stab_threshold) {
            return Err(Error::domain("tol and stab_threshold must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::domain("max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// Log-scalings `log a`, `log b` (`a = e^{u/ε}`) and convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornState<T> {
    pub log_a: Vec<T>,
    pub log_b: Vec<T>,
    pub iterations: usize,
    /// `max(‖log a - ω(log x - log Kb)‖_∞, ‖log b - ω(log y - log Kᵀa)‖_∞)`
    /// at the returned scalings.
    pub residual: T,
    pub converged: bool,
}

impl<T: Scalar> SinkhornState<T> {
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::Convergence {
                iterations: self.iterations,
                residual: self.residual.to_f64_lossy(),
            })
        }
    }
}

/// Transported mass, dual value and optionally the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSummary<T> {
    /// `‖P‖₁ = ⟨a, K b⟩`
    pub mass: T,
    /// `⟨x, a^{-ε/γ}⟩`
    pub mass_x: T,
    /// `⟨y, b^{-ε/γ}⟩`
    pub mass_y: T,
    /// Dual objective
    /// `-γ⟨x, a^{-ε/γ} - 1⟩ - γ⟨y, b^{-ε/γ} - 1⟩ - ε(⟨a, Kb⟩ - ‖K‖₁)`
    /// at the returned scalings. At the fixed point this equals
    /// `-(ε+2γ)‖P‖₁ + γ(‖x‖₁ + ‖y‖₁) + ε‖K‖₁`.
    pub w_value: T,
    /// Row-major `P_ij = a_i K_ij b_j` when requested.
    pub plan: Option<Vec<T>>,
}

fn check_measure<T: Scalar>(v: &[T], p: usize, name: &str) -> Result<()> {
    if v.len() != p {
        return Err(Error::shape(format!("{name} has length {}, expected p = {p}", v.len())));
    }
    if let Some(bad) = v.iter().find(|e| !e.is_finite() || **e < T::zero()) {
        return Err(Error::domain(format!("{name} has entry {bad}; measures must be finite and >= 0")));
    }
    Ok(())
}

fn check_kernel<T: Scalar>(kernel: &GibbsKernel<T>, params: &UotParams<T>) -> Result<()> {
    params.validate()?;
    if kernel.epsilon() != params.epsilon {
        return Err(Error::domain(format!(
            "kernel built for epsilon {} but parameters say {}",
            kernel.epsilon(),
            params.epsilon
        )));
    }
    Ok(())
}

/// `Σ_i v_i · exp(-(ε/γ) la_i)`, skipping `v_i = 0`.
fn weighted_inverse_power<T: Scalar>(v: &[T], la: &[T], ratio: T) -> T {
    v.iter()
        .zip(la)
        .filter(|(&vi, _)| vi > T::zero())
        .map(|(&vi, &l)| vi * (-ratio * l).exp())
        .sum()
}

/// `log Σ_i v_i · exp(-(ε/γ) la_i)`, skipping `v_i = 0`.
fn log_weighted_inverse_power<T: Scalar>(lv: &[T], la: &[T], ratio: T) -> T {
    logsumexp(
        lv.iter()
            .zip(la)
            .filter(|(&l, _)| l > T::neg_infinity())
            .map(|(&l, &a)| l - ratio * a)
            .collect::<Vec<_>>(),
    )
}

struct Iteration<'a, T: Scalar> {
    kernel: &'a GibbsKernel<T>,
    omega: T,
    floor: T,
    buf: LogApplyBuffers<T>,
}

impl<T: Scalar> Iteration<'_, T> {
    /// `out = ω(lmarg - log K exp(lv))`, with `log K exp(lv)` left in `lk`.
    fn step(&mut self, lv: &[T], lmarg: &[T], out: &mut [T], lk: &mut [T]) {
        self.kernel.log_apply_into(lv, lk, self.floor, &mut self.buf);
        for ((o, &m), &k) in out.iter_mut().zip(lmarg).zip(lk.iter()) {
            *o = if m == T::neg_infinity() {
                T::neg_infinity()
            } else {
                self.omega * (m - k)
            };
        }
    }
}

/// The a-side mass identity `x a^{-ε/γ} = a Kb` holds entrywise up to a
/// relative factor `exp(residual/ω)`, so iterations stop at `tol·ω`: both
/// the residual and that defect end up below `tol`.
fn stopping_threshold<T: Scalar>(params: &UotParams<T>) -> T {
    params.tol * params.omega()
}

fn ln_all<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&e| e.ln()).collect()
}

fn l1<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum()
}

/// Materializes `P_ij = a_i K_ij b_j` from log-scalings.
pub fn transport_plan<T: Scalar>(state: &SinkhornState<T>, kernel: &GibbsKernel<T>) -> Vec<T> {
    let p = kernel.p();
    let mut plan = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            plan.push((state.log_a[i] + kernel.log_entry(i, j) + state.log_b[j]).exp());
        }
    }
    plan
}

fn empty_transport<T: Scalar>(
    x: &[T],
    y: &[T],
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
) -> (SinkhornState<T>, TransportSummary<T>) {
    // One side carries no mass: the optimal plan is P = 0 and the objective
    // reduces to γ(‖x‖₁ + ‖y‖₁) + ε‖K‖₁.
    let p = kernel.p();
    let state = SinkhornState {
        log_a: vec![T::neg_infinity(); p],
        log_b: vec![T::neg_infinity(); p],
        iterations: 0,
        residual: T::zero(),
        converged: true,
    };
    let summary = TransportSummary {
        mass: T::zero(),
        mass_x: T::zero(),
        mass_y: T::zero(),
        w_value: params.gamma * (l1(x) + l1(y)) + params.epsilon * kernel.norm1(),
        plan: params.keep_plan.then(|| vec![T::zero(); p * p]),
    };
    (state, summary)
}

/// Solves the unbalanced problem between `x` and `y` from `log a = 0`.
pub fn sinkhorn_unbalanced<T: Scalar>(
    x: &[T],
    y: &[T],
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
) -> Result<(SinkhornState<T>, TransportSummary<T>)> {
    sinkhorn_unbalanced_warm(x, y, kernel, params, None)
}

/// As [`sinkhorn_unbalanced`], starting from the given `log a`.
///
/// Convergence is declared on the pair `(log a, log b)` with
/// `log b = ω(log y - log Kᵀa)` exact, so the b-residual of the returned
/// state is zero and the reported residual is the a-residual. The loop
/// stops once that residual is below `tol·ω`, which also bounds the relative
/// defect of the mass identity `⟨a, Kb⟩ = ⟨x, a^{-ε/γ}⟩` by `tol`.
pub fn sinkhorn_unbalanced_warm<T: Scalar>(
    x: &[T],
    y: &[T],
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
    init_log_a: Option<&[T]>,
) -> Result<(SinkhornState<T>, TransportSummary<T>)> {
    check_kernel(kernel, params)?;
    let p = kernel.p();
    check_measure(x, p, "x")?;
    check_measure(y, p, "y")?;
    if let Some(init) = init_log_a {
        if init.len() != p {
            return Err(Error::shape("initial log-scaling has wrong length"));
        }
    }
    if x.iter().all(|&v| v == T::zero()) || y.iter().all(|&v| v == T::zero()) {
        return Ok(empty_transport(x, y, kernel, params));
    }
    let (lx, ly) = (ln_all(x), ln_all(y));
    let ratio = params.epsilon / params.gamma;
    let mut it = Iteration {
        kernel,
        omega: params.omega(),
        floor: params.stab_threshold * T::from_count(p),
        buf: LogApplyBuffers::default(),
    };
    let mut la: Vec<T> = match init_log_a {
        Some(init) => lx
            .iter()
            .zip(init)
            .map(|(&l, &a)| if l == T::neg_infinity() { l } else if a.is_finite() { a } else { T::zero() })
            .collect(),
        None => lx.iter().map(|&l| if l == T::neg_infinity() { l } else { T::zero() }).collect(),
    };
    let mut lb = vec![T::zero(); p];
    let mut la_next = vec![T::zero(); p];
    let mut lka = vec![T::zero(); p];
    let mut lkb = vec![T::zero(); p];
    it.step(&la, &ly, &mut lb, &mut lka);

    let stop = stopping_threshold(params);
    let mut iterations = 0;
    let (residual, converged) = loop {
        it.step(&lb, &lx, &mut la_next, &mut lkb);
        iterations += 1;
        let res = sup_diff(&la_next, &la);
        if !res.is_finite() {
            return Err(Error::domain(format!("non-finite Sinkhorn residual {res}")));
        }
        if res <= stop {
            break (res, true);
        }
        if iterations >= params.max_iter {
            break (res, false);
        }
        std::mem::swap(&mut la, &mut la_next);
        if params.translate {
            // maximize the dual over (u + λ, v - λ) with v = ε log b held
            let num = log_weighted_inverse_power(&lx, &la, ratio);
            let den = log_weighted_inverse_power(&ly, &lb, ratio);
            let shift = (num - den) / (T::lit(2.0) * ratio);
            if shift.is_finite() {
                for l in la.iter_mut() {
                    *l += shift;
                }
            }
        }
        it.step(&la, &ly, &mut lb, &mut lka);
    };

    // lkb holds log K b for the returned lb.
    let mass: T = la.iter().zip(&lkb).map(|(&a, &k)| (a + k).exp()).sum();
    let mass_x = weighted_inverse_power(x, &la, ratio);
    let mass_y = weighted_inverse_power(y, &lb, ratio);
    let (eps, gamma) = (params.epsilon, params.gamma);
    let w_value = -gamma * (mass_x - l1(x)) - gamma * (mass_y - l1(y)) - eps * (mass - kernel.norm1());
    let state = SinkhornState {
        log_a: la,
        log_b: lb,
        iterations,
        residual,
        converged,
    };
    let plan = params.keep_plan.then(|| transport_plan(&state, kernel));
    Ok((
        state,
        TransportSummary {
            mass,
            mass_x,
            mass_y,
            w_value,
            plan,
        },
    ))
}

/// Symmetric scaling `a = b = (x / Ka)^ω` by damped iteration
/// `log a ← ½ log a + ½ ω(log x - log K a)`.
pub fn sinkhorn_symmetric<T: Scalar>(
    x: &[T],
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
) -> Result<(SinkhornState<T>, TransportSummary<T>)> {
    check_kernel(kernel, params)?;
    let p = kernel.p();
    check_measure(x, p, "x")?;
    if x.iter().all(|&v| v == T::zero()) {
        return Ok(empty_transport(x, x, kernel, params));
    }
    let lx = ln_all(x);
    let ratio = params.epsilon / params.gamma;
    let mut it = Iteration {
        kernel,
        omega: params.omega(),
        floor: params.stab_threshold * T::from_count(p),
        buf: LogApplyBuffers::default(),
    };
    let mut la: Vec<T> = lx.iter().map(|&l| if l == T::neg_infinity() { l } else { T::zero() }).collect();
    let mut f = vec![T::zero(); p];
    let mut lka = vec![T::zero(); p];
    let half = T::lit(0.5);
    let stop = stopping_threshold(params);
    let mut iterations = 0;
    let (residual, converged) = loop {
        it.step(&la, &lx, &mut f, &mut lka);
        iterations += 1;
        let res = sup_diff(&f, &la);
        if !res.is_finite() {
            return Err(Error::domain(format!("non-finite Sinkhorn residual {res}")));
        }
        if res <= stop {
            break (res, true);
        }
        if iterations >= params.max_iter {
            break (res, false);
        }
        for (a, &fv) in la.iter_mut().zip(&f) {
            if *a != T::neg_infinity() {
                *a = half * *a + half * fv;
            }
        }
    };
    let mass: T = la.iter().zip(&lka).map(|(&a, &k)| (a + k).exp()).sum();
    let mass_x = weighted_inverse_power(x, &la, ratio);
    let (eps, gamma) = (params.epsilon, params.gamma);
    let w_value = -T::lit(2.0) * gamma * (mass_x - l1(x)) - eps * (mass - kernel.norm1());
    let state = SinkhornState {
        log_b: la.clone(),
        log_a: la,
        iterations,
        residual,
        converged,
    };
    let plan = params.keep_plan.then(|| transport_plan(&state, kernel));
    Ok((
        state,
        TransportSummary {
            mass,
            mass_x,
            mass_y: mass_x,
            w_value,
            plan,
        },
    ))
}

/// `KL(p|q) = Σ p log(p/q) - p + q` with `0 log 0 = 0`.
fn kl_term<T: Scalar>(p: T, q: T) -> T {
    if p == T::zero() {
        q
    } else {
        p * (p / q).ln() - p + q
    }
}

/// Primal objective `ε KL(P|K) + γ KL(P1|x) + γ KL(Pᵀ1|y)` at the plan
/// defined by `state`.
pub fn primal_objective<T: Scalar>(
    x: &[T],
    y: &[T],
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
    state: &SinkhornState<T>,
) -> Result<T> {
    check_kernel(kernel, params)?;
    let p = kernel.p();
    check_measure(x, p, "x")?;
    check_measure(y, p, "y")?;
    let mut rows = vec![T::zero(); p];
    let mut cols = vec![T::zero(); p];
    let mut ent = T::zero();
    for i in 0..p {
        for j in 0..p {
            let lk = kernel.log_entry(i, j);
            let lp = state.log_a[i] + lk + state.log_b[j];
            let pij = lp.exp();
            rows[i] += pij;
            cols[j] += pij;
            // P log(P/K) - P + K with log(P/K) = log a_i + log b_j
            ent += if pij == T::zero() {
                lk.exp()
            } else {
                pij * (state.log_a[i] + state.log_b[j]) - pij + lk.exp()
            };
        }
    }
    let marg_x: T = rows.iter().zip(x).map(|(&r, &xi)| kl_term(r, xi)).sum();
    let marg_y: T = cols.iter().zip(y).map(|(&c, &yi)| kl_term(c, yi)).sum();
    Ok(params.epsilon * ent + params.gamma * (marg_x + marg_y))
}

/// `∇ₓW = γ(1 - a^{-ε/γ})` from converged scalings.
pub fn grad_w_from_state<T: Scalar>(state: &SinkhornState<T>, params: &UotParams<T>) -> Vec<T> {
    let ratio = params.epsilon / params.gamma;
    state
        .log_a
        .iter()
        .map(|&l| params.gamma * (T::one() - (-ratio * l).exp()))
        .collect()
}

fn check_positive<T: Scalar>(v: &[T], name: &str) -> Result<()> {
    if v.iter().all(|&e| e > T::zero()) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be strictly positive for gradients")))
    }
}

/// Gradient of `W(x, y)` with respect to `x`.
pub fn grad_w<T: Scalar>(x: &[T], y: &[T], kernel: &GibbsKernel<T>, params: &UotParams<T>) -> Result<Vec<T>> {
    check_positive(x, "x")?;
    check_positive(y, "y")?;
    let (state, _) = sinkhorn_unbalanced(x, y, kernel, params)?;
    state.ensure_converged()?;
    Ok(grad_w_from_state(&state, params))
}

/// Both sides of the transported-mass bounds
/// `κ‖x‖₁‖y‖₁ ≤ ‖P‖₁^{2+ε/γ} ≤ p^{2(1+ε/γ)}‖x‖₁‖y‖₁`, `κ = min e^{-M/γ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBounds<T> {
    pub lower: T,
    pub value: T,
    pub upper: T,
}

impl<T: Scalar> MassBounds<T> {
    /// Both inequalities with relative slack `rel`.
    pub fn holds(&self, rel: T) -> bool {
        self.lower <= self.value * (T::one() + rel) && self.value <= self.upper * (T::one() + rel)
    }
}

pub fn mass_bounds<T: Scalar>(
    x: &[T],
    y: &[T],
    kernel: &GibbsKernel<T>,
    params: &UotParams<T>,
    summary: &TransportSummary<T>,
) -> MassBounds<T> {
    let ratio = params.epsilon / params.gamma;
    let max_m = kernel
        .geometry()
        .metric()
        .iter()
        .copied()
        .fold(T::zero(), T::max);
    let kappa = (-max_m / params.gamma).exp();
    let xy = l1(x) * l1(y);
    let p = T::from_count(kernel.p());
    MassBounds {
        lower: kappa * xy,
        value: summary.mass.powf(T::lit(2.0) + ratio),
        upper: p.powf(T::lit(2.0) * (T::one() + ratio)) * xy,
    }
}

/// Solves and checks the mass bounds with relative slack `1e-8`.
pub fn mass_bounds_check<T: Scalar>(x: &[T], y: &[T], kernel: &GibbsKernel<T>, params: &UotParams<T>) -> Result<bool> {
    let (state, summary) = sinkhorn_unbalanced(x, y, kernel, params)?;
    state.ensure_converged()?;
    Ok(mass_bounds(x, y, kernel, params, &summary).holds(T::lit(1e-8)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uot::geometry::{ground_metric_grid, GroundGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn single() -> GibbsKernel<f64> {
        GibbsKernel::new(Arc::new(GroundGeometry::from_matrix(1, vec![0.0]).unwrap()), 0.7).unwrap()
    }

    fn grid_kernel(h: usize, w: usize, eps: f64) -> GibbsKernel<f64> {
        let g = ground_metric_grid(h, w, 2.0).unwrap().normalize_by_median().unwrap();
        GibbsKernel::new(Arc::new(g), eps).unwrap()
    }

    fn random_measure(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
        (0..p).map(|_| rng.random_range(0.05..1.0)).collect()
    }

    #[test]
    fn one_point_problem() {
        let k = single();
        for gamma in [0.1, 1.0, 4.0] {
            let params = UotParams::new(0.7, gamma).unwrap();
            let (s, sum) = sinkhorn_unbalanced(&[1.0], &[1.0], &k, &params).unwrap();
            assert!(s.converged);
            assert!(s.log_a[0].abs() < 1e-9 && s.log_b[0].abs() < 1e-9);
            assert!((sum.mass - 1.0).abs() < 1e-9);
            assert!(sum.w_value.abs() < 1e-9);
            let (s, _) = sinkhorn_symmetric(&[1.0], &k, &params).unwrap();
            assert!(s.log_a[0].abs() < 1e-9);
            let g = grad_w(&[1.0], &[1.0], &k, &params).unwrap();
            assert!(g[0].abs() < 1e-8);
            let b = mass_bounds(&[1.0], &[1.0], &k, &params, &sum);
            assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);
            assert!(b.holds(1e-8));
        }
    }

    #[test]
    fn one_point_scaled_mass_is_closed_form() {
        // x = y = 4 on one point: a^{1+ω} = 4^ω, mass = a²
        let k = single();
        let params = UotParams::new(0.7, 1.3).unwrap();
        let (_, sum) = sinkhorn_unbalanced(&[4.0], &[4.0], &k, &params).unwrap();
        let w = params.omega();
        let expect = 4f64.powf(2.0 * w / (1.0 + w));
        assert!((sum.mass - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn fixed_point_and_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(eps, gamma) in &[(0.05, 1.0), (0.5, 0.05), (1.0, 5.0), (5.0, 0.5)] {
            let k = grid_kernel(3, 4, eps);
            let params = UotParams::new(eps, gamma).unwrap();
            let x = random_measure(&mut rng, 12);
            let y = random_measure(&mut rng, 12);
            let (s, sum) = sinkhorn_unbalanced(&x, &y, &k, &params).unwrap();
            assert!(s.converged && s.residual <= 1e-9);
            // literal fixed-point equations
            let kb = k.apply(&s.log_b.iter().map(|v| v.exp()).collect::<Vec<_>>());
            let ka = k.apply(&s.log_a.iter().map(|v| v.exp()).collect::<Vec<_>>());
            let w = params.omega();
            for i in 0..12 {
                assert!((s.log_a[i] - w * (x[i].ln() - kb[i].ln())).abs() <= 1e-9);
                assert!((s.log_b[i] - w * (y[i].ln() - ka[i].ln())).abs() <= 1e-9);
            }
            let m = sum.mass;
            assert!((m - sum.mass_x).abs() <= 1e-8 * m && (m - sum.mass_y).abs() <= 1e-8 * m);
            let primal = primal_objective(&x, &y, &k, &params, &s).unwrap();
            assert!((primal - sum.w_value).abs() <= 1e-6 * sum.w_value.abs(), "{primal} vs {}", sum.w_value);
            let closed = -(eps + 2.0 * gamma) * m + gamma * (l1(&x) + l1(&y)) + eps * k.norm1();
            assert!((closed - sum.w_value).abs() <= 1e-8 * closed.abs());
            assert!(mass_bounds(&x, &y, &k, &params, &sum).holds(1e-8));
        }
    }

    #[test]
    fn translation_does_not_change_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = grid_kernel(4, 4, 0.1);
        let params = UotParams::new(0.1, 10.0).unwrap().with_tol(1e-11);
        let x = random_measure(&mut rng, 16);
        let y: Vec<f64> = random_measure(&mut rng, 16).iter().map(|v| 3.0 * v).collect();
        let (a, _) = sinkhorn_unbalanced(&x, &y, &k, &params).unwrap();
        let (b, _) = sinkhorn_unbalanced(&x, &y, &k, &params.with_translation(false)).unwrap();
        assert!(a.converged && b.converged);
        assert!(a.iterations < b.iterations);
        assert!(sup_diff(&a.log_a, &b.log_a) < 1e-8);
    }

    #[test]
    fn symmetric_agrees_with_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = grid_kernel(4, 3, 0.3);
        let params = UotParams::new(0.3, 1.0).unwrap().with_tol(1e-11);
        let x = random_measure(&mut rng, 12);
        let (s, ss) = sinkhorn_symmetric(&x, &k, &params).unwrap();
        let (g, gs) = sinkhorn_unbalanced(&x, &x, &k, &params).unwrap();
        assert!(sup_diff(&s.log_a, &g.log_a) < 1e-8);
        assert!(sup_diff(&s.log_a, &g.log_b) < 1e-8);
        assert!((ss.w_value - gs.w_value).abs() < 1e-8 * gs.w_value.abs());
    }

    #[test]
    fn zero_entries_and_empty_measures() {
        let k = grid_kernel(2, 3, 0.5);
        let params = UotParams::new(0.5, 1.0).unwrap().with_plan(true);
        let x = [0.0, 1.0, 0.5, 0.0, 0.2, 0.3];
        let y = [0.4, 0.0, 0.5, 0.1, 0.2, 0.0];
        let (s, sum) = sinkhorn_unbalanced(&x, &y, &k, &params).unwrap();
        assert!(s.converged);
        assert_eq!(s.log_a[0], f64::NEG_INFINITY);
        assert_eq!(s.log_b[1], f64::NEG_INFINITY);
        let plan = sum.plan.unwrap();
        assert!(plan[..6].iter().all(|&v| v == 0.0));
        let primal = primal_objective(&x, &y, &k, &params, &s).unwrap();
        assert!((primal - sum.w_value).abs() <= 1e-6 * sum.w_value.abs());

        let zero = [0.0; 6];
        let (s, sum) = sinkhorn_unbalanced(&zero, &y, &k, &params).unwrap();
        assert!(s.converged && sum.mass == 0.0);
        assert!((sum.w_value - (l1(&y) + 0.5 * k.norm1())).abs() < 1e-12);
        let (_, sum) = sinkhorn_symmetric(&zero, &k, &params).unwrap();
        assert!((sum.w_value - 0.5 * k.norm1()).abs() < 1e-12);
    }

    #[test]
    fn plan_entries_are_scaled_kernel() {
        let k = grid_kernel(2, 2, 0.4);
        let params = UotParams::new(0.4, 1.0).unwrap().with_plan(true);
        let (s, sum) = sinkhorn_unbalanced(&[0.3, 0.2, 0.6, 0.1], &[0.1, 0.5, 0.2, 0.2], &k, &params).unwrap();
        let plan = sum.plan.unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = s.log_a[i].exp() * k.entry(i, j) * s.log_b[j].exp();
                assert!((plan[i * 4 + j] - e).abs() <= 1e-14);
            }
        }
        assert!((plan.iter().sum::<f64>() - sum.mass).abs() < 1e-12);
    }

    #[test]
    fn balanced_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = grid_kernel(3, 3, 0.05);
        let params = UotParams::new(0.05, 100.0).unwrap().with_plan(true);
        let norm = |v: Vec<f64>| {
            let s = l1(&v);
            v.into_iter().map(|e| e / s).collect::<Vec<_>>()
        };
        let x = norm(random_measure(&mut rng, 9));
        let y = norm(random_measure(&mut rng, 9));
        let (s, sum) = sinkhorn_unbalanced(&x, &y, &k, &params).unwrap();
        assert!(s.converged);
        let plan = sum.plan.unwrap();
        let dev: f64 = (0..9).map(|i| (plan[i * 9..i * 9 + 9].iter().sum::<f64>() - x[i]).abs()).sum();
        assert!(dev <= 1e-2, "marginal deviation {dev}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = grid_kernel(2, 3, 0.5);
        let params = UotParams::new(0.5, 1.0).unwrap().with_tol(1e-12);
        let x = random_measure(&mut rng, 6);
        let y = random_measure(&mut rng, 6);
        let g = grad_w(&x, &y, &k, &params).unwrap();
        let w = |v: &[f64]| sinkhorn_unbalanced(v, &y, &k, &params).unwrap().1.w_value;
        let h = 1e-5;
        for i in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (w(&xp) - w(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5, "{fd} vs {}", g[i]);
        }
        assert!(grad_w(&[0.0; 6], &y, &k, &params).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let k = grid_kernel(2, 2, 0.5);
        let params = UotParams::new(0.5, 1.0).unwrap();
        assert!(matches!(
            sinkhorn_unbalanced(&[1.0, -1.0, 0.0, 0.0], &[1.0; 4], &k, &params),
            Err(Error::Domain(_))
        ));
        assert!(matches!(sinkhorn_unbalanced(&[1.0; 3], &[1.0; 4], &k, &params), Err(Error::Shape(_))));
        assert!(UotParams::new(0.0, 1.0).is_err());
        let other = UotParams::new(0.6, 1.0).unwrap();
        assert!(sinkhorn_unbalanced(&[1.0; 4], &[1.0; 4], &k, &other).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let k = grid_kernel(3, 3, 0.05);
        let params = UotParams::new(0.05, 1.0).unwrap().with_max_iter(2);
        let (s, _) = sinkhorn_unbalanced(&[1.0; 9], &[0.1; 9], &k, &params).unwrap();
        assert!(!s.converged && s.iterations == 2);
        assert!(matches!(s.ensure_converged(), Err(Error::Convergence { .. })));
    }

    #[test]
    fn single_precision_runs() {
        let g = ground_metric_grid(2, 2, 2.0f32).unwrap();
        let k = GibbsKernel::new(Arc::new(g), 0.5f32).unwrap();
        let params = UotParams::new(0.5f32, 1.0).unwrap();
        let (s, sum) = sinkhorn_unbalanced(&[0.2f32, 0.4, 0.1, 0.3], &[0.3f32, 0.3, 0.2, 0.2], &k, &params).unwrap();
        assert!(s.converged && s.residual <= 1e-4);
        assert!(sum.w_value.is_finite());
    }
}
