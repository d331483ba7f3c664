//! Delannoy numbers and the shift-bound machinery built on them.
//!
//! `D_{m,n}` counts the monotone `→ ↓ ↘` paths from `(1,1)` to `(m,n)`,
//! i.e. the number of alignments in an `m × n` soft-DTW lattice:
//!
//! ```text
//! D_{1,n} = D_{m,1} = 1
//! D_{m+1,n+1} = D_{m,n+1} + D_{m+1,n} + D_{m,n}
//! ```
//!
//! Counts are exact big integers. The real-valued factors
//! `Φ_{m,k} = 1 - (a(k-1) + 1/c)/(m+k-1)` and `Ψ_{m,k} = 1 + a(k-1)/m`, with
//! `c = 1 + √2` and `a = 1 - 1/c`, are elements of `ℚ(√2)`; every inequality
//! check here is therefore decided exactly with [`Surd`] arithmetic.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::surd::Surd;

/// Exact table `D_{m,n}` for `1 ≤ m ≤ max_m`, `1 ≤ n ≤ max_n`.
#[derive(Debug, Clone)]
pub struct DelannoyTable {
    max_m: usize,
    max_n: usize,
    counts: Vec<BigUint>,
}

impl DelannoyTable {
    pub fn new(max_m: usize, max_n: usize) -> Self {
        assert!(max_m >= 1 && max_n >= 1, "Delannoy table needs max_m, max_n >= 1");
        let mut counts: Vec<BigUint> = Vec::with_capacity(max_m * max_n);
        for m in 0..max_m {
            for n in 0..max_n {
                let v = if m == 0 || n == 0 {
                    BigUint::one()
                } else {
                    let up = &counts[(m - 1) * max_n + n];
                    let left = &counts[m * max_n + n - 1];
                    let diag = &counts[(m - 1) * max_n + n - 1];
                    up + left + diag
                };
                counts.push(v);
            }
        }
        Self {
            max_m,
            max_n,
            counts,
        }
    }

    /// Square table up to `size × size`.
    pub fn square(size: usize) -> Self {
        Self::new(size, size)
    }

    pub fn max_m(&self) -> usize {
        self.max_m
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    /// `D_{m,n}` with 1-based indices. Panics outside the table.
    pub fn get(&self, m: usize, n: usize) -> &BigUint {
        assert!(
            (1..=self.max_m).contains(&m) && (1..=self.max_n).contains(&n),
            "D_({m},{n}) outside table {}x{}",
            self.max_m,
            self.max_n
        );
        &self.counts[(m - 1) * self.max_n + n - 1]
    }

    /// Central number `D_m = D_{m,m}`.
    pub fn central(&self, m: usize) -> &BigUint {
        self.get(m, m)
    }

    /// Border, recursion and (on the common square) symmetry identities.
    pub fn identities_hold(&self) -> bool {
        let one = BigUint::one();
        for m in 1..=self.max_m {
            for n in 1..=self.max_n {
                let d = self.get(m, n);
                if (m == 1 || n == 1) && *d != one {
                    return false;
                }
                if m > 1 && n > 1 {
                    let r = self.get(m - 1, n) + self.get(m, n - 1) + self.get(m - 1, n - 1);
                    if *d != r {
                        return false;
                    }
                }
                if m <= self.max_n && n <= self.max_m && d != self.get(n, m) {
                    return false;
                }
            }
        }
        true
    }
}

/// Single Delannoy number by rolling-row recursion.
pub fn delannoy(m: usize, n: usize) -> BigUint {
    assert!(m >= 1 && n >= 1, "Delannoy indices start at 1");
    let mut row = vec![BigUint::one(); n];
    for _ in 1..m {
        let mut prev_diag = row[0].clone();
        for j in 1..n {
            let up = row[j].clone();
            row[j] = &up + &row[j - 1] + &prev_diag;
            prev_diag = up;
        }
    }
    row.pop().expect("n >= 1")
}

/// Natural log of a big integer, precise to f64 rounding for any size.
pub fn ln_biguint(v: &BigUint) -> f64 {
    if v.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = v.bits();
    let shift = bits.saturating_sub(64);
    let top = (v >> shift).to_f64().expect("64-bit mantissa fits in f64");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `m·D_{m+1} = (6m-3)·D_m - (m-1)·D_{m-1}` for every `2 ≤ m ≤ m_max`.
pub fn central_delannoy_recursion_check(m_max: usize) -> bool {
    assert!(m_max >= 2, "central recursion starts at m = 2");
    let t = DelannoyTable::square(m_max + 1);
    (2..=m_max).all(|m| {
        let lhs = BigInt::from(m) * BigInt::from(t.central(m + 1).clone());
        let rhs = BigInt::from(6 * m - 3) * BigInt::from(t.central(m).clone())
            - BigInt::from(m - 1) * BigInt::from(t.central(m - 1).clone());
        lhs == rhs
    })
}

/// `D_{m+1} ≤ c²·D_m` for every `1 ≤ m ≤ m_max`, decided exactly.
pub fn growth_check(m_max: usize) -> bool {
    assert!(m_max >= 1);
    let t = DelannoyTable::square(m_max + 1);
    let c2 = Surd::silver() * Surd::silver();
    (1..=m_max).all(|m| {
        Surd::from_biguint(t.central(m + 1)) <= &c2 * &Surd::from_biguint(t.central(m))
    })
}

/// `a = 1 - 1/c = 2 - √2`
pub fn a_exact() -> Surd {
    Surd::one() - Surd::silver().recip()
}

/// Exact `Φ_{m,k}`.
pub fn phi_exact(m: usize, k: usize) -> Surd {
    assert!(m >= 1 && k >= 1);
    let num = a_exact() * Surd::from_int((k - 1) as i64) + Surd::silver().recip();
    Surd::one() - num * Surd::from_ratio(1, (m + k - 1) as i64)
}

/// Exact `Ψ_{m,k}`.
pub fn psi_exact(m: usize, k: usize) -> Surd {
    assert!(m >= 1 && k >= 1);
    Surd::one() + a_exact() * Surd::from_ratio((k - 1) as i64, m as i64)
}

fn silver<T: Scalar>() -> T {
    T::one() + T::SQRT_2()
}

/// `Φ_{m,k}` in floating point.
pub fn phi<T: Scalar>(m: usize, k: usize) -> T {
    assert!(m >= 1 && k >= 1);
    let c = silver::<T>();
    let a = T::one() - c.recip();
    T::one() - (a * T::from_count(k - 1) + c.recip()) / T::from_count(m + k - 1)
}

/// `Ψ_{m,k}` in floating point.
pub fn psi<T: Scalar>(m: usize, k: usize) -> T {
    assert!(m >= 1 && k >= 1);
    let a = T::one() - silver::<T>().recip();
    T::one() + a * T::from_count(k - 1) / T::from_count(m)
}

/// Inequality `A(m,k)`: `D_{m,m+k} ≤ c·Φ_{m,k}·D_{m,m+k-1}`.
fn holds_a(t: &DelannoyTable, m: usize, k: usize) -> bool {
    let lhs = Surd::from_biguint(t.get(m, m + k));
    let rhs = Surd::silver() * phi_exact(m, k) * Surd::from_biguint(t.get(m, m + k - 1));
    lhs <= rhs
}

/// Inequality `B(m,k)`: `c·Ψ_{m,k}·D_{m,m+k} ≤ D_{m+1,m+k}`.
fn holds_b(t: &DelannoyTable, m: usize, k: usize) -> bool {
    let lhs = Surd::silver() * psi_exact(m, k) * Surd::from_biguint(t.get(m, m + k));
    lhs <= Surd::from_biguint(t.get(m + 1, m + k))
}

/// `A(m,k)` and `B(m,k)` for every `1 ≤ m ≤ m_max`, `1 ≤ k ≤ k_max`.
pub fn offdiagonal_inequality_check(m_max: usize, k_max: usize) -> bool {
    assert!(m_max >= 1 && k_max >= 1);
    let t = DelannoyTable::new(m_max + 1, m_max + k_max);
    (1..=m_max).all(|m| (1..=k_max).all(|k| holds_a(&t, m, k) && holds_b(&t, m, k)))
}

/// The three sides of the technical lemma at `(m, k)`:
/// `c·Ψ_{m,k+1}·Φ_{m,k+1}`, `1/c + Ψ_{m,k} + Φ_{m,k+1}` and `c·Φ_{m+1,k}·Ψ_{m,k}`.
pub fn technical_lemma_sides(m: usize, k: usize) -> (Surd, Surd, Surd) {
    let c = Surd::silver();
    let left = &c * &psi_exact(m, k + 1) * phi_exact(m, k + 1);
    let middle = c.recip() + psi_exact(m, k) + phi_exact(m, k + 1);
    let right = &c * &phi_exact(m + 1, k) * psi_exact(m, k);
    (left, middle, right)
}

/// `left ≤ middle ≤ right` of the technical lemma over the sweep, exactly.
pub fn technical_lemma_check(m_max: usize, k_max: usize) -> bool {
    assert!(m_max >= 1 && k_max >= 1);
    (1..=m_max).all(|m| {
        (1..=k_max).all(|k| {
            let (l, mid, r) = technical_lemma_sides(m, k);
            l <= mid && mid <= r
        })
    })
}

/// The affine function `f(k) = ac(2a-1)k + a - a²c` whose nonnegativity is
/// equivalent to the right half of the technical lemma.
pub fn lemma_affine(k: i64) -> Surd {
    let a = a_exact();
    let c = Surd::silver();
    let two_a_minus_one = Surd::from_int(2) * a.clone() - Surd::one();
    &a * &c * two_a_minus_one * Surd::from_int(k) + a.clone() - &a * &a * c
}

/// One row of the `(m, k)` sweep report.
#[derive(Debug, Clone)]
pub struct InequalityRow {
    pub m: usize,
    pub k: usize,
    /// `D_{m,m+k}`
    pub d_m_mk: BigUint,
    pub phi: f64,
    pub psi: f64,
    /// `1 - D_{m,m+k} / (c·Φ_{m,k}·D_{m,m+k-1})`, nonnegative iff `A(m,k)`.
    pub slack_a: f64,
    /// `1 - c·Ψ_{m,k}·D_{m,m+k} / D_{m+1,m+k}`, nonnegative iff `B(m,k)`.
    pub slack_b: f64,
    /// `min(middle - left, right - middle)` of the technical lemma.
    pub slack_lemma: f64,
    pub holds_a: bool,
    pub holds_b: bool,
    pub holds_lemma: bool,
}

impl InequalityRow {
    pub fn all_hold(&self) -> bool {
        self.holds_a && self.holds_b && self.holds_lemma
    }
}

/// Full sweep report for `1 ≤ m ≤ m_max`, `1 ≤ k ≤ k_max`, row-major in `m`.
pub fn inequality_report(m_max: usize, k_max: usize) -> Vec<InequalityRow> {
    assert!(m_max >= 1 && k_max >= 1);
    let t = DelannoyTable::new(m_max + 1, m_max + k_max);
    let c = Surd::silver();
    let mut rows = Vec::with_capacity(m_max * k_max);
    for m in 1..=m_max {
        for k in 1..=k_max {
            let phi_mk = phi_exact(m, k);
            let psi_mk = psi_exact(m, k);
            let d = Surd::from_biguint(t.get(m, m + k));
            let slack_a = Surd::one()
                - &d / &(&c * &phi_mk * Surd::from_biguint(t.get(m, m + k - 1)));
            let slack_b =
                Surd::one() - &c * &psi_mk * d / Surd::from_biguint(t.get(m + 1, m + k));
            let (l, mid, r) = technical_lemma_sides(m, k);
            let gap_left = &mid - &l;
            let gap_right = &r - &mid;
            let slack_lemma = gap_left.to_f64().min(gap_right.to_f64());
            rows.push(InequalityRow {
                m,
                k,
                d_m_mk: t.get(m, m + k).clone(),
                phi: phi_mk.to_f64(),
                psi: psi_mk.to_f64(),
                holds_a: !slack_a.is_negative(),
                holds_b: !slack_b.is_negative(),
                holds_lemma: !gap_left.is_negative() && !gap_right.is_negative(),
                slack_a: slack_a.to_f64(),
                slack_b: slack_b.to_f64(),
                slack_lemma,
            });
        }
    }
    rows
}

/// Log of the zero-cost ratio and its product lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRatioBound<T> {
    /// `log(D_{m,m}·D_{m',m'} / (D_{m+k,m}·D_{m'-k,m'}))`
    pub log_ratio: T,
    /// `Σ_{i=1..k} log Ψ_{m'-i,i} - log Φ_{m,i}`
    pub product_bound: T,
}

fn check_ratio_args(m: usize, m_prime: usize, k: usize) -> Result<()> {
    if m == 0 || m_prime == 0 {
        return Err(Error::domain("m and m' must be >= 1"));
    }
    if k >= m_prime {
        return Err(Error::domain(format!(
            "shift k = {k} infeasible: needs k <= m' - 1 = {}",
            m_prime - 1
        )));
    }
    Ok(())
}

pub fn log_ratio_bound<T: Scalar>(m: usize, m_prime: usize, k: usize) -> Result<LogRatioBound<T>> {
    check_ratio_args(m, m_prime, k)?;
    if k == 0 {
        return Ok(LogRatioBound {
            log_ratio: T::zero(),
            product_bound: T::zero(),
        });
    }
    let log_ratio = ln_biguint(&delannoy(m, m)) + ln_biguint(&delannoy(m_prime, m_prime))
        - ln_biguint(&delannoy(m + k, m))
        - ln_biguint(&delannoy(m_prime - k, m_prime));
    let product_bound: f64 = (1..=k)
        .map(|i| psi::<f64>(m_prime - i, i).ln() - phi::<f64>(m, i).ln())
        .sum();
    Ok(LogRatioBound {
        log_ratio: T::lit(log_ratio),
        product_bound: T::lit(product_bound),
    })
}

/// Exact version of `ratio ≥ Π Ψ_{m'-i,i}/Φ_{m,i}`.
pub fn log_ratio_bound_holds_exact(m: usize, m_prime: usize, k: usize) -> Result<bool> {
    check_ratio_args(m, m_prime, k)?;
    let num = delannoy(m, m) * delannoy(m_prime, m_prime);
    let den = delannoy(m + k, m) * delannoy(m_prime - k, m_prime);
    let ratio = Surd::new(
        BigRational::new(BigInt::from(num), BigInt::from(den)),
        BigRational::zero(),
    );
    let mut product = Surd::one();
    for i in 1..=k {
        product = product * psi_exact(m_prime - i, i) / phi_exact(m, i);
    }
    Ok(ratio >= product)
}

/// `β·α·k(k-1) + β·ρ·k` with `α = (2-√2)/2·(1/m' + 1/(m+m'))` and
/// `ρ = (3√2-4)/(3T)`.
pub fn quadratic_bound<T: Scalar>(beta: T, m: usize, m_prime: usize, t_len: usize, k: usize) -> Result<T> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    if m == 0 || m_prime == 0 {
        return Err(Error::domain("m and m' must be >= 1"));
    }
    if t_len < 2 || k > t_len - 1 {
        return Err(Error::domain(format!("shift k = {k} outside [0, T-1] for T = {t_len}")));
    }
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let sqrt2 = T::SQRT_2();
    let alpha = (two - sqrt2) / two
        * (T::from_count(m_prime).recip() + T::from_count(m + m_prime).recip());
    let rho = (three * sqrt2 - T::lit(4.0)) / (three * T::from_count(t_len));
    let kf = T::from_count(k);
    Ok(beta * alpha * kf * (kf - T::one()) + beta * rho * kf)
}

/// Largest smoothing for which the shift bounds are guaranteed:
/// `μ / log(3·T·D_{T,T})`.
pub fn beta_threshold<T: Scalar>(mu: T, t_len: usize) -> Result<T> {
    if !(mu > T::zero()) || !mu.is_finite() {
        return Err(Error::domain(format!(
            "mu must be a positive finite cost (constant series have none), got {mu}"
        )));
    }
    if t_len < 2 {
        return Err(Error::domain("series length must be >= 2"));
    }
    let log_den = 3f64.ln() + (t_len as f64).ln() + ln_biguint(&delannoy(t_len, t_len));
    Ok(mu / T::lit(log_den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cmp::Ordering;

    #[test]
    fn small_values() {
        assert_eq!(delannoy(1, 7), BigUint::one());
        assert_eq!(delannoy(7, 1), BigUint::one());
        for k in 0..20usize {
            assert_eq!(delannoy(2, 1 + k), BigUint::from(2 * k + 1));
        }
        assert_eq!(delannoy(2, 2), BigUint::from(3u32));
        assert_eq!(delannoy(3, 3), BigUint::from(13u32));
        assert_eq!(delannoy(5, 5), BigUint::from(321u32));
        assert_eq!(delannoy(2, 3), BigUint::from(5u32));
    }

    #[test]
    fn table_agrees_with_rolling_rows() {
        let t = DelannoyTable::new(9, 12);
        for m in 1..=9 {
            for n in 1..=12 {
                assert_eq!(t.get(m, n), &delannoy(m, n));
            }
        }
        assert!(DelannoyTable::square(60).identities_hold());
    }

    #[test]
    fn central_recursion() {
        // 2·D₃ = 9·D₂ − D₁ ⇔ 26 = 27 − 1
        assert!(central_delannoy_recursion_check(2));
        assert!(central_delannoy_recursion_check(40));
    }

    #[test]
    fn growth() {
        assert!(growth_check(1));
        assert!(growth_check(40));
    }

    #[test]
    fn phi_psi_values() {
        for m in 1..10 {
            assert_eq!(psi::<f64>(m, 1), 1.0);
            assert_eq!(psi_exact(m, 1), Surd::one());
        }
        assert!((phi::<f64>(1, 1) - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((phi::<f64>(1, 1) - 0.5858).abs() < 1e-4);
        // independent evaluation at (3, 2): a = 2-√2, 1/c = √2-1
        let a = 2.0 - 2f64.sqrt();
        let inv_c = 2f64.sqrt() - 1.0;
        let phi32 = 1.0 - (a * 1.0 + inv_c) / 4.0;
        let psi32 = 1.0 + a / 3.0;
        assert!((phi::<f64>(3, 2) - phi32).abs() < 1e-15);
        assert!((psi::<f64>(3, 2) - psi32).abs() < 1e-15);
        assert!((phi_exact(3, 2).to_f64() - phi32).abs() < 1e-15);
        assert!((psi_exact(3, 2).to_f64() - psi32).abs() < 1e-15);
        for m in 1..20 {
            for k in 1..20 {
                assert!(phi_exact(m, k) <= Surd::one());
                assert!(phi_exact(m, k) > Surd::zero());
                assert!(psi_exact(m, k) >= Surd::one());
            }
        }
    }

    #[test]
    fn initialization_identities() {
        let c = Surd::silver();
        for k in 1..30i64 {
            // cΦ_{1,k} = 1 + (c-2)/k
            let lhs = &c * &phi_exact(1, k as usize);
            let rhs = Surd::one() + (c.clone() - Surd::from_int(2)) * Surd::from_ratio(1, k);
            assert_eq!(lhs, rhs);
            // cΨ_{1,k} = (c-1)k + 1 = √2·k + 1
            let lhs = &c * &psi_exact(1, k as usize);
            assert_eq!(lhs, Surd::sqrt2() * Surd::from_int(k) + Surd::one());
        }
        // (c²-1)/(2c²) = 1/c
        let c2 = &c * &c;
        assert_eq!((c2.clone() - Surd::one()) / (Surd::from_int(2) * c2), c.recip());
    }

    #[test]
    fn offdiagonal_sweep() {
        assert!(offdiagonal_inequality_check(1, 10));
        assert!(offdiagonal_inequality_check(30, 30));
    }

    #[test]
    fn technical_lemma() {
        assert!(technical_lemma_check(1, 1));
        assert!(technical_lemma_check(30, 30));
        assert_eq!(lemma_affine(1), Surd::zero());
        assert_eq!(lemma_affine(2).sign(), Ordering::Greater);
    }

    #[test]
    fn report_has_no_failures() {
        let rows = inequality_report(6, 5);
        assert_eq!(rows.len(), 30);
        assert!(rows.iter().all(InequalityRow::all_hold));
        assert!(rows.iter().all(|r| r.slack_a >= 0.0 && r.slack_b >= 0.0 && r.slack_lemma >= -1e-12));
        assert_eq!(rows[0].d_m_mk, BigUint::one());
        // (m, k) = (2, 1): D_{2,3} = 5
        assert_eq!((rows[5].m, rows[5].k), (2, 1));
        assert_eq!(rows[5].d_m_mk, BigUint::from(5u32));
    }

    #[test]
    fn big_log() {
        let d = delannoy(20, 20);
        assert!((ln_biguint(&d) - d.to_f64().unwrap().ln()).abs() < 1e-12);
        let huge = delannoy(600, 600);
        assert!(huge.to_f64().map_or(true, |v| v.is_infinite()));
        let l = ln_biguint(&huge);
        assert!(l.is_finite() && l > 700.0);
    }

    #[test]
    fn log_ratio_examples() {
        let z = log_ratio_bound::<f64>(4, 6, 0).unwrap();
        assert_eq!((z.log_ratio, z.product_bound), (0.0, 0.0));
        let r = log_ratio_bound::<f64>(3, 5, 2).unwrap();
        assert!(r.log_ratio >= r.product_bound);
        assert!(log_ratio_bound_holds_exact(3, 5, 2).unwrap());
        assert!(matches!(log_ratio_bound::<f64>(3, 5, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn quadratic_examples() {
        let beta = 0.1;
        let q1 = quadratic_bound(beta, 5, 10, 20, 1).unwrap();
        let rho = (3.0 * 2f64.sqrt() - 4.0) / 60.0;
        assert!((q1 - beta * rho).abs() < 1e-16);
        let q = quadratic_bound(0.1, 5, 10, 20, 3).unwrap();
        let expect = 0.1 * ((2.0 - 2f64.sqrt()) / 2.0 * (1.0 / 10.0 + 1.0 / 15.0)) * 6.0
            + 0.1 * ((3.0 * 2f64.sqrt() - 4.0) / 60.0) * 3.0;
        assert!((q - expect).abs() < 1e-15);
        assert!(quadratic_bound(0.0, 5, 10, 20, 3).is_err());
        assert!(quadratic_bound(0.1, 5, 10, 20, 20).is_err());
    }

    #[test]
    fn threshold_examples() {
        let b = beta_threshold(1.0f64, 2).unwrap();
        assert!((b - 1.0 / 18f64.ln()).abs() < 1e-15);
        assert!((b - 0.3460).abs() < 1e-3);
        let b2 = beta_threshold(2.0f64, 7).unwrap();
        assert!((b2 - 2.0 * beta_threshold(1.0f64, 7).unwrap()).abs() < 1e-15);
        assert!(beta_threshold(1.0f64, 400).unwrap() < 0.01);
        assert!(beta_threshold(0.0f64, 5).is_err());
    }
}
