//! Exact arithmetic in the quadratic field `ℚ(√2)`.
//!
//! The constant `c = 1 + √2` and the factors `Φ`, `Ψ` of the off-diagonal
//! Delannoy bounds all live in `ℚ(√2)`, so every inequality between them and
//! integer lattice counts can be decided exactly: the sign of `a + b√2` is
//! determined by comparing `a²` with `2b²`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// `rational + irrational·√2` with exact rational parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Surd {
    rational: BigRational,
    irrational: BigRational,
}

impl Surd {
    pub fn new(rational: BigRational, irrational: BigRational) -> Self {
        Self {
            rational,
            irrational,
        }
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn from_int(v: i64) -> Self {
        Self::new(BigRational::from_integer(BigInt::from(v)), BigRational::zero())
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::new(
            BigRational::new(BigInt::from(num), BigInt::from(den)),
            BigRational::zero(),
        )
    }

    pub fn from_biguint(v: &BigUint) -> Self {
        Self::new(
            BigRational::from_integer(BigInt::from(v.clone())),
            BigRational::zero(),
        )
    }

    pub fn sqrt2() -> Self {
        Self::new(BigRational::zero(), BigRational::one())
    }

    /// `c = 1 + √2`
    pub fn silver() -> Self {
        Self::new(BigRational::one(), BigRational::one())
    }

    pub fn rational_part(&self) -> &BigRational {
        &self.rational
    }

    pub fn irrational_part(&self) -> &BigRational {
        &self.irrational
    }

    /// `a - b√2`
    pub fn conjugate(&self) -> Self {
        Self::new(self.rational.clone(), -self.irrational.clone())
    }

    /// `a² - 2b²`, the (rational) field norm.
    pub fn norm(&self) -> BigRational {
        let two = BigRational::from_integer(BigInt::from(2));
        &self.rational * &self.rational - two * &self.irrational * &self.irrational
    }

    /// Exact sign.
    pub fn sign(&self) -> Ordering {
        let a = self.rational.cmp(&BigRational::zero());
        let b = self.irrational.cmp(&BigRational::zero());
        match (a, b) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (sa, sb) if sa == sb => sa,
            (sa, sb) => {
                // opposite signs: |a| vs |b|√2
                let two = BigRational::from_integer(BigInt::from(2));
                let a2 = &self.rational * &self.rational;
                let b2 = two * &self.irrational * &self.irrational;
                if a2 > b2 {
                    sa
                } else {
                    sb
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.irrational.is_zero()
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "division by zero in Q(sqrt 2)");
        let n = self.norm();
        Self::new(&self.rational / &n, -(&self.irrational / &n))
    }

    /// Nearest `f64`. Exact parts are converted separately, so large
    /// cancellations lose relative precision.
    pub fn to_f64(&self) -> f64 {
        let a = self.rational.to_f64().unwrap_or(f64::NAN);
        let b = self.irrational.to_f64().unwrap_or(f64::NAN);
        a + b * std::f64::consts::SQRT_2
    }

    pub fn abs(&self) -> Self {
        if self.sign() == Ordering::Less {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn is_negative(&self) -> bool {
        self.sign() == Ordering::Less
    }
}

impl PartialOrd for Surd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Surd {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).sign()
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.irrational.is_zero() {
            write!(f, "{}", self.rational)
        } else if self.irrational.is_negative() {
            write!(f, "{} - {}*sqrt2", self.rational, -self.irrational.clone())
        } else {
            write!(f, "{} + {}*sqrt2", self.rational, self.irrational)
        }
    }
}

impl Neg for Surd {
    type Output = Surd;
    fn neg(self) -> Surd {
        Surd::new(-self.rational, -self.irrational)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, |$a:ident, $b:ident| $body:expr) => {
        impl<'a> $trait<&'a Surd> for &'a Surd {
            type Output = Surd;
            fn $method(self, rhs: &'a Surd) -> Surd {
                let ($a, $b) = (self, rhs);
                $body
            }
        }
        impl $trait<Surd> for Surd {
            type Output = Surd;
            fn $method(self, rhs: Surd) -> Surd {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $trait<&'a Surd> for Surd {
            type Output = Surd;
            fn $method(self, rhs: &'a Surd) -> Surd {
                (&self).$method(rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Surd::new(
    &a.rational + &b.rational,
    &a.irrational + &b.irrational
));
binop!(Sub, sub, |a, b| Surd::new(
    &a.rational - &b.rational,
    &a.irrational - &b.irrational
));
binop!(Mul, mul, |a, b| {
    let two = BigRational::from_integer(BigInt::from(2));
    Surd::new(
        &a.rational * &b.rational + two * &a.irrational * &b.irrational,
        &a.rational * &b.irrational + &a.irrational * &b.rational,
    )
});
binop!(Div, div, |a, b| a * &b.recip());
