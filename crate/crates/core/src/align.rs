//! Soft dynamic time warping.
//!
//! For a cost matrix `Δ` of shape `T₁×T₂`, soft-DTW is the soft-minimum of the
//! costs `⟨A, Δ⟩` over every monotone alignment `A` from cell `(1,1)` to
//! `(T₁,T₂)` using `→`, `↓`, `↘` steps:
//!
//! ```text
//! softmin_β(S) = -β log Σ_{s∈S} exp(-s/β)    (β > 0)
//!              = min S                       (β = 0)
//! ```
//!
//! It is evaluated with the Bellman recursion
//! `r[i,j] = Δ[i,j] + softmin_β(r[i-1,j-1], r[i-1,j], r[i,j-1])` with
//! `r[0,0] = 0` and `+∞` on the rest of the border. The backward pass returns
//! `E = ∂ sdtw / ∂Δ`, the softmin-weighted expectation of alignment matrices.
//!
//! [`enumerate_alignments`] and [`sdtw_bruteforce`] are exhaustive references
//! for small instances.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::delannoy::delannoy;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest alignment set the brute-force routines will walk.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// Dense `rows × cols` matrix of pairwise temporal costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> CostMatrix<T> {
    /// Builds a cost matrix whose entries must be finite and nonnegative.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        let m = Self::new_signed(rows, cols, data)?;
        if let Some(v) = m.data.iter().find(|v| **v < T::zero()) {
            return Err(Error::domain(format!("negative cost entry {v}")));
        }
        Ok(m)
    }

    /// Builds a cost matrix allowing negative (but finite) entries.
    ///
    /// Divergence costs are only guaranteed nonnegative for positive
    /// semi-definite kernels; the recursion itself is well defined for any
    /// finite cost.
    pub fn new_signed(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape("cost matrix must have at least one row and column"));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "cost matrix data has length {}, expected {rows}*{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("NaN in cost matrix"));
        }
        if data.iter().any(|v| v.is_infinite()) {
            return Err(Error::domain("infinite entry in cost matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds `Δ[i,j] = f(i, j)` (0-based indices).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Squared differences between two univariate series.
    pub fn squared_euclidean(x: &[T], y: &[T]) -> Result<Self> {
        Self::from_fn(x.len(), y.len(), |i, j| {
            let d = x[i] - y[j];
            d * d
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Adds `c` to every entry.
    pub fn shifted(&self, c: T) -> Result<Self> {
        Self::new_signed(self.rows, self.cols, self.data.iter().map(|&v| v + c).collect())
    }
}

/// Soft-minimum of a nonempty list; falls back to `min` when `beta == 0`.
pub fn softmin<T: Scalar>(values: &[T], beta: T) -> Result<T> {
    check_beta(beta)?;
    if values.is_empty() {
        return Err(Error::domain("softmin of an empty set"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("NaN passed to softmin"));
    }
    let min = values.iter().copied().fold(T::infinity(), T::min);
    if beta == T::zero() || !min.is_finite() {
        return Ok(min);
    }
    let s: T = values.iter().map(|&v| (-(v - min) / beta).exp()).sum();
    Ok(min - beta * s.ln())
}

#[inline]
fn softmin3<T: Scalar>(a: T, b: T, c: T, beta: T) -> T {
    let min = a.min(b).min(c);
    if !min.is_finite() {
        return min;
    }
    let s = (-(a - min) / beta).exp() + (-(b - min) / beta).exp() + (-(c - min) / beta).exp();
    min - beta * s.ln()
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if beta.is_nan() || beta < T::zero() || beta.is_infinite() {
        return Err(Error::domain(format!("beta must be finite and nonnegative, got {beta}")));
    }
    Ok(())
}

/// Forward pass output: the soft-DTW value and the full Bellman table.
#[derive(Debug, Clone)]
pub struct SoftDtwResult<T> {
    pub value: T,
    pub beta: T,
    rows: usize,
    cols: usize,
    /// `(rows+1) × (cols+1)` table with the `+∞` border, row-major.
    table: Vec<T>,
}

impl<T: Scalar> SoftDtwResult<T> {
    /// Entry `r[i,j]` of the Bellman table, `0 ≤ i ≤ rows`, `0 ≤ j ≤ cols`.
    #[inline]
    pub fn r(&self, i: usize, j: usize) -> T {
        self.table[i * (self.cols + 1) + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Runs the Bellman recursion over `delta`.
pub fn sdtw_forward<T: Scalar>(delta: &CostMatrix<T>, beta: T) -> Result<SoftDtwResult<T>> {
    check_beta(beta)?;
    let (n, m) = (delta.rows, delta.cols);
    let w = m + 1;
    let mut r = vec![T::infinity(); (n + 1) * w];
    r[0] = T::zero();
    let hard = beta == T::zero();
    for i in 1..=n {
        for j in 1..=m {
            let diag = r[(i - 1) * w + (j - 1)];
            let up = r[(i - 1) * w + j];
            let left = r[i * w + (j - 1)];
            let best = if hard {
                diag.min(up).min(left)
            } else {
                softmin3(diag, up, left, beta)
            };
            r[i * w + j] = delta.get(i - 1, j - 1) + best;
        }
    }
    Ok(SoftDtwResult {
        value: r[n * w + m],
        beta,
        rows: n,
        cols: m,
        table: r,
    })
}

/// Convenience wrapper returning only the soft-DTW value.
pub fn sdtw<T: Scalar>(delta: &CostMatrix<T>, beta: T) -> Result<T> {
    sdtw_forward(delta, beta).map(|r| r.value)
}

/// `E = ∂ sdtw / ∂Δ`, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedAlignment<T> {
    pub rows: usize,
    pub cols: usize,
    pub beta: T,
    /// Row-major `rows × cols` weights.
    pub weights: Vec<T>,
}

impl<T: Scalar> ExpectedAlignment<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.weights[i * self.cols + j]
    }
}

/// Reverse recursion through the Bellman table.
///
/// Cells outside the table contribute zero weight.
pub fn sdtw_backward<T: Scalar>(
    result: &SoftDtwResult<T>,
    delta: &CostMatrix<T>,
) -> Result<ExpectedAlignment<T>> {
    if result.beta == T::zero() {
        return Err(Error::Unsupported(
            "soft-DTW gradient is undefined at beta = 0".into(),
        ));
    }
    if (delta.rows, delta.cols) != (result.rows, result.cols) {
        return Err(Error::shape(format!(
            "forward table is {}x{}, cost matrix is {}x{}",
            result.rows, result.cols, delta.rows, delta.cols
        )));
    }
    let (n, m, beta) = (result.rows, result.cols, result.beta);
    // e is indexed 1-based like the table; row/col 0 unused.
    let w = m + 1;
    let mut e = vec![T::zero(); (n + 1) * w];
    e[n * w + m] = T::one();
    let weight = |si: usize, sj: usize, i: usize, j: usize| -> T {
        let rs = result.r(si, sj);
        let ds = delta.get(si - 1, sj - 1);
        ((rs - ds - result.r(i, j)) / beta).exp()
    };
    for i in (1..=n).rev() {
        for j in (1..=m).rev() {
            if i == n && j == m {
                continue;
            }
            let mut acc = T::zero();
            if i < n {
                acc += e[(i + 1) * w + j] * weight(i + 1, j, i, j);
            }
            if j < m {
                acc += e[i * w + j + 1] * weight(i, j + 1, i, j);
            }
            if i < n && j < m {
                acc += e[(i + 1) * w + j + 1] * weight(i + 1, j + 1, i, j);
            }
            e[i * w + j] = acc;
        }
    }
    let mut weights = Vec::with_capacity(n * m);
    for i in 1..=n {
        weights.extend_from_slice(&e[i * w + 1..i * w + 1 + m]);
    }
    Ok(ExpectedAlignment {
        rows: n,
        cols: m,
        beta,
        weights,
    })
}

/// One monotone path from `(0,0)` to `(m-1,n-1)` (0-based cells).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alignment {
    pub rows: usize,
    pub cols: usize,
    pub path: Vec<(usize, usize)>,
}

impl Alignment {
    /// Dense binary matrix with ones on the path.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.cols]; self.rows];
        for &(i, j) in &self.path {
            a[i][j] = 1;
        }
        a
    }

    /// `⟨A, Δ⟩`
    pub fn cost<T: Scalar>(&self, delta: &CostMatrix<T>) -> T {
        self.path.iter().map(|&(i, j)| delta.get(i, j)).sum()
    }

    /// Every step is one of `→`, `↓`, `↘` and the endpoints are the corners.
    pub fn is_valid(&self) -> bool {
        let Some(&first) = self.path.first() else {
            return false;
        };
        if first != (0, 0) || self.path.last() != Some(&(self.rows - 1, self.cols - 1)) {
            return false;
        }
        self.path.windows(2).all(|s| {
            let step = (s[1].0.checked_sub(s[0].0), s[1].1.checked_sub(s[0].1));
            matches!(step, (Some(0), Some(1)) | (Some(1), Some(0)) | (Some(1), Some(1)))
        })
    }
}

fn check_enumeration(m: usize, n: usize) -> Result<BigUint> {
    if m == 0 || n == 0 {
        return Err(Error::domain("alignment lattice needs m, n >= 1"));
    }
    let count = delannoy(m, n);
    if count > BigUint::from(ENUMERATION_LIMIT) {
        return Err(Error::Capacity {
            what: "alignment enumeration",
            needed: count.to_string(),
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(count)
}

// Steps in enumeration order: →, ↓, ↘.
const STEPS: [(usize, usize); 3] = [(0, 1), (1, 0), (1, 1)];

/// Depth-first walk over all alignments in lexicographic step order
/// (`→` < `↓` < `↘`), calling `visit` with each complete path.
fn walk_paths(m: usize, n: usize, mut visit: impl FnMut(&[(usize, usize)])) {
    let mut path = vec![(0usize, 0usize)];
    // next step index to try at each depth
    let mut next = vec![0usize];
    while let Some(&(i, j)) = path.last() {
        if i == m - 1 && j == n - 1 {
            visit(&path);
            path.pop();
            next.pop();
            continue;
        }
        let depth = path.len() - 1;
        let s = next[depth];
        if s == STEPS.len() {
            path.pop();
            next.pop();
            continue;
        }
        next[depth] += 1;
        let (di, dj) = STEPS[s];
        if i + di < m && j + dj < n {
            path.push((i + di, j + dj));
            next.push(0);
        }
    }
}

/// Every alignment of the `m × n` lattice, duplicate free, in lexicographic
/// step order.
pub fn enumerate_alignments(m: usize, n: usize) -> Result<Vec<Alignment>> {
    let count = check_enumeration(m, n)?;
    let mut out = Vec::with_capacity(count.to_usize().unwrap_or(0));
    walk_paths(m, n, |p| {
        out.push(Alignment {
            rows: m,
            cols: n,
            path: p.to_vec(),
        })
    });
    Ok(out)
}

/// Calls `visit` with `⟨A, Δ⟩` for every alignment `A`.
///
/// Costs are accumulated along the path in step order, so identical paths
/// always produce bit-identical sums.
pub fn for_each_alignment_cost<T: Scalar>(
    delta: &CostMatrix<T>,
    mut visit: impl FnMut(T),
) -> Result<()> {
    check_enumeration(delta.rows, delta.cols)?;
    walk_paths(delta.rows, delta.cols, |p| {
        let mut c = T::zero();
        for &(i, j) in p {
            c += delta.get(i, j);
        }
        visit(c)
    });
    Ok(())
}

/// Soft-DTW by direct softmin over all enumerated alignment costs.
pub fn sdtw_bruteforce<T: Scalar>(delta: &CostMatrix<T>, beta: T) -> Result<T> {
    check_beta(beta)?;
    let mut costs = Vec::new();
    for_each_alignment_cost(delta, |c| costs.push(c))?;
    softmin(&costs, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_delta(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CostMatrix<f64> {
        CostMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..2.0)).unwrap()
    }

    #[test]
    fn softmin_examples() {
        assert_eq!(softmin(&[5.0], 1.0).unwrap(), 5.0);
        let v = softmin(&[0.0, 0.0, 0.0], 1.0).unwrap();
        assert!((v + 3f64.ln()).abs() < 1e-15);
        assert!((v + 1.0986).abs() < 1e-4);
        assert_eq!(softmin(&[1.0, 2.0, 3.0], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn softmin_rejects_bad_input() {
        assert!(matches!(softmin::<f64>(&[], 1.0), Err(Error::Domain(_))));
        assert!(softmin(&[1.0], -1.0).is_err());
        assert!(softmin(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn softmin_small_beta_does_not_underflow() {
        let v = softmin(&[1000.0f64, 1000.5], 1e-3).unwrap();
        assert!((v - 1000.0).abs() < 1e-12);
        assert_eq!(softmin(&[f64::INFINITY, 2.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn forward_zero_two_by_two() {
        let d = CostMatrix::new(2, 2, vec![0.0f64; 4]).unwrap();
        let r = sdtw_forward(&d, 1.0).unwrap();
        assert!((r.value + 3f64.ln()).abs() < 1e-14);
        assert_eq!(r.r(0, 0), 0.0);
        assert_eq!(r.r(0, 1), f64::INFINITY);
    }

    #[test]
    fn forward_single_cell() {
        let d = CostMatrix::new(1, 1, vec![1.0f64]).unwrap();
        for beta in [0.0, 0.1, 1.0, 10.0] {
            assert_eq!(sdtw(&d, beta).unwrap(), 1.0);
            assert_eq!(sdtw_bruteforce(&d, beta).unwrap(), 1.0);
        }
    }

    #[test]
    fn forward_rejects_nan() {
        assert!(matches!(
            CostMatrix::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::Domain(_))
        ));
        assert!(CostMatrix::new(1, 1, vec![-1.0f64]).is_err());
        assert!(CostMatrix::new_signed(1, 1, vec![-1.0f64]).is_ok());
    }

    #[test]
    fn forward_matches_bruteforce_random_5x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = random_delta(&mut rng, 5, 6);
        let f = sdtw(&d, 0.1).unwrap();
        let b = sdtw_bruteforce(&d, 0.1).unwrap();
        assert!((f - b).abs() <= 1e-9 * f.abs().max(1.0), "{f} vs {b}");
    }

    #[test]
    fn hard_dtw_equals_min_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = random_delta(&mut rng, 4, 5);
        let mut best = f64::INFINITY;
        for a in enumerate_alignments(4, 5).unwrap() {
            best = best.min(a.cost(&d));
        }
        assert_eq!(sdtw(&d, 0.0).unwrap(), best);
    }

    #[test]
    fn enumeration_counts_and_validity() {
        assert_eq!(enumerate_alignments(1, 7).unwrap().len(), 1);
        assert_eq!(enumerate_alignments(2, 2).unwrap().len(), 3);
        let all = enumerate_alignments(3, 3).unwrap();
        assert_eq!(all.len(), 13);
        let distinct: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 13);
        assert!(all.iter().all(Alignment::is_valid));
        // lexicographic: the first path goes right first, the last is the diagonal
        assert_eq!(all[0].path, vec![(0, 0), (0, 1), (0, 2), (1, 2), (2, 2)]);
        assert_eq!(all[12].path, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn enumeration_guard() {
        assert!(matches!(
            enumerate_alignments(12, 12),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn alignment_matrix_marks_path() {
        let a = &enumerate_alignments(2, 2).unwrap()[2];
        assert_eq!(a.to_matrix(), vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn backward_examples() {
        let d = CostMatrix::new(1, 1, vec![0.3f64]).unwrap();
        let e = sdtw_backward(&sdtw_forward(&d, 1.0).unwrap(), &d).unwrap();
        assert_eq!(e.weights, vec![1.0]);

        // Three equally weighted paths; off-diagonal cells lie on one each.
        let d = CostMatrix::new(2, 2, vec![0.0f64; 4]).unwrap();
        let e = sdtw_backward(&sdtw_forward(&d, 1.0).unwrap(), &d).unwrap();
        let want = [1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0];
        for (g, w) in e.weights.iter().zip(want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_rejects_hard_min() {
        let d = CostMatrix::new(2, 2, vec![0.0f64; 4]).unwrap();
        let r = sdtw_forward(&d, 0.0).unwrap();
        assert!(matches!(sdtw_backward(&r, &d), Err(Error::Unsupported(_))));
    }

    /// Central finite differences on the forward value.
    fn fd_gradient(d: &CostMatrix<f64>, beta: f64, h: f64) -> Vec<f64> {
        let mut g = Vec::new();
        for k in 0..d.as_slice().len() {
            let mut plus = d.as_slice().to_vec();
            let mut minus = d.as_slice().to_vec();
            plus[k] += h;
            minus[k] -= h;
            let fp = sdtw(&CostMatrix::new(d.rows(), d.cols(), plus).unwrap(), beta).unwrap();
            let fm = sdtw(&CostMatrix::new(d.rows(), d.cols(), minus).unwrap(), beta).unwrap();
            g.push((fp - fm) / (2.0 * h));
        }
        g
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = CostMatrix::from_fn(4, 5, |_, _| rng.random_range(0.1..2.0)).unwrap();
        let e = sdtw_backward(&sdtw_forward(&d, 0.5).unwrap(), &d).unwrap();
        let fd = fd_gradient(&d, 0.5, 1e-5);
        for (a, b) in e.weights.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn backward_equals_path_expectation() {
        // E is the Gibbs-weighted average of alignment matrices.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_delta(&mut rng, 3, 4);
        let beta = 0.7;
        let paths = enumerate_alignments(3, 4).unwrap();
        let costs: Vec<f64> = paths.iter().map(|a| a.cost(&d)).collect();
        let cmin = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = costs.iter().map(|c| (-(c - cmin) / beta).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut expect = vec![0.0; 12];
        for (a, wa) in paths.iter().zip(&w) {
            for &(i, j) in &a.path {
                expect[i * 4 + j] += wa / z;
            }
        }
        let e = sdtw_backward(&sdtw_forward(&d, beta).unwrap(), &d).unwrap();
        for (a, b) in e.weights.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_forward_is_close_to_f64() {
        let d64 = CostMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 * 0.25).unwrap();
        let d32 = CostMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f32 * 0.25).unwrap();
        let a = sdtw(&d64, 0.5).unwrap();
        let b = sdtw(&d32, 0.5f32).unwrap();
        assert!((a - b as f64).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn value_not_above_hard_min(
            vals in prop::collection::vec(0.0f64..3.0, 12),
            beta in 0.01f64..5.0,
        ) {
            let d = CostMatrix::new(3, 4, vals).unwrap();
            prop_assert!(sdtw(&d, beta).unwrap() <= sdtw(&d, 0.0).unwrap() + 1e-12);
        }

        #[test]
        fn value_non_increasing_in_beta(
            vals in prop::collection::vec(0.0f64..3.0, 6),
            b1 in 0.01f64..5.0,
            db in 0.0f64..5.0,
        ) {
            let d = CostMatrix::new(2, 3, vals).unwrap();
            let lo = sdtw(&d, b1).unwrap();
            let hi = sdtw(&d, b1 + db).unwrap();
            prop_assert!(hi <= lo + 1e-12);
        }

        #[test]
        fn expected_alignment_in_unit_interval(
            vals in prop::collection::vec(0.0f64..3.0, 20),
            beta in 0.05f64..5.0,
        ) {
            let d = CostMatrix::new(4, 5, vals).unwrap();
            let e = sdtw_backward(&sdtw_forward(&d, beta).unwrap(), &d).unwrap();
            prop_assert!((e.get(0, 0) - 1.0).abs() < 1e-12);
            prop_assert!((e.get(3, 4) - 1.0).abs() < 1e-12);
            for w in e.weights {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&w));
            }
        }
    }
}
