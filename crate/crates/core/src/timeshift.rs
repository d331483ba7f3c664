//! Temporal shifts of univariate series and how soft-DTW reacts to them.
//!
//! Indices in [`ShiftProfile`] are 1-based to match the usual statement of
//! onset/offset: `onset` is the smallest `i` with `x_{i+1} ≠ x_i`, `offset`
//! the largest. Slices are still indexed from 0 internally.

use std::ops::RangeInclusive;

use crate::align::{for_each_alignment_cost, sdtw, CostMatrix};
use crate::delannoy::{log_ratio_bound, quadratic_bound};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute tolerance used to merge alignment costs and to skip zero costs.
pub const COST_TOLERANCE: f64 = 1e-12;

/// Onset/offset analysis of a non-constant series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftProfile {
    pub t_len: usize,
    pub onset: usize,
    pub offset: usize,
}

impl ShiftProfile {
    /// `m = onset`
    pub fn m(&self) -> usize {
        self.onset
    }

    /// `m' = T - offset`
    pub fn m_prime(&self) -> usize {
        self.t_len - self.offset
    }

    /// 1-based fluctuation indices `onset..=offset`.
    pub fn fluctuation(&self) -> RangeInclusive<usize> {
        self.onset..=self.offset
    }

    /// Largest feasible shift: `T - 1 - offset`.
    pub fn max_shift(&self) -> usize {
        self.t_len - 1 - self.offset
    }
}

fn differs<T: Scalar>(a: T, b: T, tol: T) -> bool {
    if tol == T::zero() {
        a != b
    } else {
        (a - b).abs() > tol
    }
}

/// Onset/offset of `x`; consecutive values closer than `tol` count as equal.
pub fn profile<T: Scalar>(x: &[T], tol: T) -> Result<ShiftProfile> {
    if x.len() < 2 {
        return Err(Error::domain("series needs length >= 2"));
    }
    if !(tol >= T::zero()) {
        return Err(Error::domain(format!("tolerance must be >= 0, got {tol}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("series has non-finite values"));
    }
    let mut changes = (1..x.len()).filter(|&i| differs(x[i], x[i - 1], tol));
    let onset = changes
        .next()
        .ok_or_else(|| Error::domain("constant series has no onset"))?;
    let offset = changes.last().unwrap_or(onset);
    Ok(ShiftProfile {
        t_len: x.len(),
        onset,
        offset,
    })
}

/// Right-shifts the fluctuation window of `x` by `k`, padding with `x_1`.
pub fn make_kshift<T: Scalar>(x: &[T], k: usize) -> Result<Vec<T>> {
    if k == 0 {
        return Ok(x.to_vec());
    }
    let p = profile(x, T::zero())?;
    if k > p.max_shift() {
        return Err(Error::domain(format!(
            "shift k = {k} infeasible: offset {} + k must be <= T - 1 = {}",
            p.offset,
            p.t_len - 1
        )));
    }
    let mut y = vec![x[0]; k];
    y.extend_from_slice(&x[..x.len() - k]);
    Ok(y)
}

/// Clause-by-clause outcome of checking that `y` is a `k`-shift of `x`.
///
/// The tail clause is checked strictly after the offsets (`i ≥ off(x)+1`,
/// `j ≥ off(y)+1`): read with `≥ off`, it compares the last fluctuating value
/// with the tail value and fails for every non-trivial series. The lag clause
/// is checked in the shift direction (`j = i + k`); the symmetric `|i-j| = k`
/// reading is reported separately in `lag_symmetric`, since it also pairs
/// `j = i - k` and fails for pulses wider than one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KShiftCheck {
    pub onset: bool,
    pub offset: bool,
    pub head: bool,
    pub tail: bool,
    pub lag: bool,
    pub tail_inclusive: bool,
    pub lag_symmetric: bool,
}

impl KShiftCheck {
    pub fn holds(&self) -> bool {
        self.onset && self.offset && self.head && self.tail && self.lag
    }
}

pub fn verify_kshift<T: Scalar>(x: &[T], y: &[T], k: usize) -> Result<KShiftCheck> {
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let px = profile(x, T::zero())?;
    let py = profile(y, T::zero())?;
    let t = x.len();
    // 1-based accessors
    let xv = |i: usize| x[i - 1];
    let yv = |j: usize| y[j - 1];
    let block = |is: RangeInclusive<usize>, js: RangeInclusive<usize>| {
        is.clone()
            .all(|i| js.clone().all(|j| xv(i) == yv(j)))
    };
    let head = block(1..=px.onset, 1..=py.onset);
    let tail = block(px.offset + 1..=t, py.offset + 1..=t);
    let tail_inclusive = block(px.offset..=t, py.offset..=t);
    let lag = px
        .fluctuation()
        .filter(|i| py.fluctuation().contains(&(i + k)))
        .all(|i| xv(i) == yv(i + k));
    let lag_symmetric = px.fluctuation().all(|i| {
        py.fluctuation()
            .filter(|&j| j.abs_diff(i) == k)
            .all(|j| xv(i) == yv(j))
    });
    Ok(KShiftCheck {
        onset: py.onset == px.onset + k,
        offset: py.offset == px.offset + k,
        head,
        tail,
        lag,
        tail_inclusive,
        lag_symmetric,
    })
}

/// Distinct alignment costs `d_0 < d_1 < …` with exact multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCostCensus<T> {
    pub costs: Vec<T>,
    pub counts: Vec<u64>,
}

impl<T: Scalar> ZeroCostCensus<T> {
    /// Total number of alignments, `D_{T1,T2}`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of alignments with zero cost (`n_0` when `d_0 = 0`).
    pub fn zero_count(&self) -> u64 {
        match self.costs.first() {
            Some(&d) if d.abs() <= T::lit(COST_TOLERANCE) => self.counts[0],
            _ => 0,
        }
    }

    /// `-β log Σ n_i exp(-d_i/β)`, which must equal soft-DTW.
    pub fn soft_value(&self, beta: T) -> T {
        if beta == T::zero() {
            return self.costs[0];
        }
        let terms = self
            .costs
            .iter()
            .zip(&self.counts)
            .map(|(&d, &n)| T::lit(n as f64).ln() - d / beta);
        -beta * crate::scalar::logsumexp(terms.collect::<Vec<_>>())
    }
}

/// Brute-force cost census over every alignment of `delta`.
pub fn census<T: Scalar>(delta: &CostMatrix<T>) -> Result<ZeroCostCensus<T>> {
    let mut all = Vec::new();
    for_each_alignment_cost(delta, |c| all.push(c))?;
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    let tol = T::lit(COST_TOLERANCE);
    let mut costs: Vec<T> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for c in all {
        match costs.last() {
            Some(&d) if c - d <= tol => *counts.last_mut().expect("paired") += 1,
            _ => {
                costs.push(c);
                counts.push(1);
            }
        }
    }
    Ok(ZeroCostCensus { costs, counts })
}

/// Census of the squared-Euclidean cost between two univariate series.
pub fn census_series<T: Scalar>(x: &[T], y: &[T]) -> Result<ZeroCostCensus<T>> {
    census(&CostMatrix::squared_euclidean(x, y)?)
}

/// `μ`: the smallest self-cost `(x_i - x_j)²` above the zero tolerance.
pub fn mu<T: Scalar>(x: &[T]) -> Result<T> {
    let tol = T::lit(COST_TOLERANCE);
    let mut best = T::infinity();
    for &a in x {
        for &b in x {
            let d = (a - b) * (a - b);
            if d > tol && d < best {
                best = d;
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::domain("constant series has no positive self-cost"))
    }
}

/// One `(β, k)` row of the shift-gap experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftGapRow<T> {
    pub beta: T,
    pub k: usize,
    /// `sdtw(x, x_{+k}) - sdtw(x, x)`
    pub gap: T,
    /// `β·log(D_{m,m}D_{m',m'} / (D_{m+k,m}D_{m'-k,m'})) - β/(3T)`
    pub log_ratio_bound: T,
    pub quadratic_bound: T,
}

/// Gap between shifted and self soft-DTW next to both lower bounds, for
/// every `β` in `betas` and `k = 0..=k_max`, ordered by `(β, k)`.
///
/// The `k = 0` row is all zeros by convention.
pub fn shift_gap_experiment<T: Scalar>(x: &[T], betas: &[T], k_max: usize) -> Result<Vec<ShiftGapRow<T>>> {
    let p = profile(x, T::zero())?;
    if k_max > p.max_shift() {
        return Err(Error::domain(format!(
            "k_max = {k_max} exceeds feasible limit T - 1 - offset = {}",
            p.max_shift()
        )));
    }
    if let Some(b) = betas.iter().find(|b| !(**b >= T::zero()) || !b.is_finite()) {
        return Err(Error::domain(format!("beta must be >= 0, got {b}")));
    }
    let t_len = x.len();
    let self_cost = CostMatrix::squared_euclidean(x, x)?;
    let shifted: Vec<CostMatrix<T>> = (1..=k_max)
        .map(|k| CostMatrix::squared_euclidean(x, &make_kshift(x, k)?))
        .collect::<Result<_>>()?;
    let ratios = (1..=k_max)
        .map(|k| log_ratio_bound::<T>(p.m(), p.m_prime(), k))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(betas.len() * (k_max + 1));
    for &beta in betas {
        let base = sdtw(&self_cost, beta)?;
        rows.push(ShiftGapRow {
            beta,
            k: 0,
            gap: T::zero(),
            log_ratio_bound: T::zero(),
            quadratic_bound: T::zero(),
        });
        for k in 1..=k_max {
            let gap = sdtw(&shifted[k - 1], beta)? - base;
            let (lrb, quad) = if beta > T::zero() {
                (
                    beta * ratios[k - 1].log_ratio - beta / (T::lit(3.0) * T::from_count(t_len)),
                    quadratic_bound(beta, p.m(), p.m_prime(), t_len, k)?,
                )
            } else {
                (T::zero(), T::zero())
            };
            rows.push(ShiftGapRow {
                beta,
                k,
                gap,
                log_ratio_bound: lrb,
                quadratic_bound: quad,
            });
        }
    }
    Ok(rows)
}
