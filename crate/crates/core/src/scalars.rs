//! Exact scalar arithmetic (rationals with an optional quadratic part `y*sqrt(D)`)
//! and certified magnitudes at the real place and at p-adic places.
//!
//! No floating point is used anywhere: real magnitudes are rational intervals
//! with directed (outward) rounding, p-adic magnitudes are exact powers of p.

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{BigUint, Integer, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

pub type Rat = Ratio<BigInt>;

/// Errors from scalar and magnitude computations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScalarError {
    #[error("finite place requires a prime, got {0}")]
    NotPrime(u64),
    #[error("scalar has a quadratic part, not representable at a finite place without an embedding")]
    QuadraticAtFinitePlace,
    #[error("precision cap reached at {0} bits")]
    PrecisionExhausted(u32),
    #[error("magnitudes of different place kinds cannot be combined")]
    MixedPlaceKinds,
    #[error("sqrt({0}) does not exist in Q_{1}")]
    NoPadicRoot(BigInt, u64),
    #[error("division by a magnitude whose interval contains zero")]
    DivisionByPossiblyZero,
    #[error("invalid rational literal: {0}")]
    BadRational(String),
    #[error("quadratic parts over different radicands cannot be combined: {0} vs {1}")]
    MixedRadicands(BigInt, BigInt),
}

pub type ScalarResult<T> = Result<T, ScalarError>;

// ---------------------------------------------------------------------------
// Places
// ---------------------------------------------------------------------------

/// A place of Q: the real absolute value or the p-adic one for a prime p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Place {
    Real,
    Finite { p: u64 },
}

impl Place {
    pub fn finite(p: u64) -> ScalarResult<Place> {
        if is_prime_u64(p) {
            Ok(Place::Finite { p })
        } else {
            Err(ScalarError::NotPrime(p))
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Place::Finite { .. })
    }

    pub fn prime(&self) -> Option<u64> {
        match self {
            Place::Real => None,
            Place::Finite { p } => Some(*p),
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Real => write!(f, "real"),
            Place::Finite { p } => write!(f, "{}-adic", p),
        }
    }
}

/// Deterministic Miller-Rabin, exact for all u64 inputs.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let pow = |mut b: u128, mut e: u64, m: u128| -> u128 {
        let mut acc: u128 = 1;
        b %= m;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % m;
            }
            b = b * b % m;
            e >>= 1;
        }
        acc
    };
    'outer: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a as u128, d, n as u128);
        if x == 1 || x == (n - 1) as u128 {
            continue;
        }
        for _ in 0..s - 1 {
            x = x * x % (n as u128);
            if x == (n - 1) as u128 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

// ---------------------------------------------------------------------------
// Rational helpers
// ---------------------------------------------------------------------------

pub fn rat_i64(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Parse "a/b" or "a" into an exact rational.
pub fn parse_rat(s: &str) -> ScalarResult<Rat> {
    let s = s.trim();
    let bad = || ScalarError::BadRational(s.to_string());
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        Ok(Rat::new(n, d))
    } else {
        let n = BigInt::from_str(s).map_err(|_| bad())?;
        Ok(Rat::from_integer(n))
    }
}

pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// p-adic valuation of a nonzero rational. `None` for zero.
pub fn val_p(r: &Rat, p: u64) -> Option<BigInt> {
    if r.is_zero() {
        return None;
    }
    let p = BigInt::from(p);
    let count = |mut n: BigInt| -> i64 {
        let mut c = 0i64;
        while (&n % &p).is_zero() {
            n /= &p;
            c += 1;
        }
        c
    };
    let vn = count(r.numer().abs());
    let vd = count(r.denom().abs());
    Some(BigInt::from(vn - vd))
}

/// Round a rational down (resp. up) to a multiple of 2^-bits.
pub fn dyadic_floor(r: &Rat, bits: u32) -> Rat {
    let scale = BigInt::one() << bits;
    let scaled = r * Rat::from_integer(scale.clone());
    Rat::new(scaled.floor().to_integer(), scale)
}

pub fn dyadic_ceil(r: &Rat, bits: u32) -> Rat {
    let scale = BigInt::one() << bits;
    let scaled = r * Rat::from_integer(scale.clone());
    Rat::new(scaled.ceil().to_integer(), scale)
}

/// Certified enclosure of the n-th root of a nonnegative rational:
/// returns (lo, hi) with lo <= x^(1/n) <= hi and hi - lo <= 2^-bits * max(1, hi).
/// Exact (point) when the root is rational.
pub fn nth_root_interval(x: &Rat, n: u32, bits: u32) -> (Rat, Rat) {
    assert!(!x.is_negative(), "nth_root_interval needs x >= 0");
    assert!(n >= 1);
    if x.is_zero() {
        return (Rat::zero(), Rat::zero());
    }
    let num = x.numer().to_biguint().expect("nonnegative");
    let den = x.denom().to_biguint().expect("positive");
    // Exact fast path: both numerator and denominator perfect n-th powers.
    let rn = num.nth_root(n);
    let rd = den.nth_root(n);
    if rn.pow(n) == num && rd.pow(n) == den {
        let v = Rat::new(BigInt::from(rn), BigInt::from(rd));
        return (v.clone(), v);
    }
    // x^(1/n) = (num * den^(n-1))^(1/n) / den; scale by 2^(n*bits) for precision.
    let t: BigUint = &num * den.pow(n - 1) * (BigUint::one() << (n as u64 * bits as u64));
    let r = t.nth_root(n);
    let denom = BigInt::from(den) << bits;
    let lo = Rat::new(BigInt::from(r.clone()), denom.clone());
    let hi = Rat::new(BigInt::from(r + BigUint::one()), denom);
    (lo, hi)
}

fn sqrt_interval(x: &Rat, bits: u32) -> (Rat, Rat) {
    nth_root_interval(x, 2, bits)
}

/// Best-effort square part extraction: d = s^2 * f with f free of square factors
/// below the trial bound (and of perfect-square cofactors). Returns (s, f).
pub fn extract_square_part(d: &BigInt) -> (BigInt, BigInt) {
    assert!(d.is_positive());
    let mut s = BigInt::one();
    let mut f = d.clone();
    let mut q: u64 = 2;
    while q <= 10_000 {
        let q2 = BigInt::from(q) * BigInt::from(q);
        while (&f % &q2).is_zero() {
            f /= &q2;
            s *= BigInt::from(q);
        }
        q += 1;
    }
    // Pull out a perfect-square cofactor if the remainder is one.
    let root = f.sqrt();
    if &root * &root == f {
        s *= &root;
        f = BigInt::one();
    }
    (s, f)
}

// ---------------------------------------------------------------------------
// ExactScalar: x + y*sqrt(D)
// ---------------------------------------------------------------------------

/// An exact scalar `x + y*sqrt(D)` with `x, y` rational and `D` a non-square
/// integer > 1 (square factors removed by trial division). `D` is `None`
/// exactly when `y = 0`, i.e. for plain rationals.
#[derive(Debug, Clone)]
pub struct ExactScalar {
    x: Rat,
    y: Rat,
    d: Option<BigInt>,
}

impl ExactScalar {
    pub fn from_rat(x: Rat) -> Self {
        ExactScalar { x, y: Rat::zero(), d: None }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rat(rat_i64(n))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    /// Build x + y*sqrt(d0), normalizing square factors of d0 into y.
    /// d0 must be positive; if d0 is a perfect square the result is rational.
    pub fn quadratic(x: Rat, y: Rat, d0: BigInt) -> Self {
        assert!(d0.is_positive(), "radicand must be positive");
        if y.is_zero() {
            return Self::from_rat(x);
        }
        let (s, f) = extract_square_part(&d0);
        if f.is_one() {
            return Self::from_rat(x + y * Rat::from_integer(s));
        }
        ExactScalar { x, y: y * Rat::from_integer(s), d: Some(f) }
    }

    pub fn rational_part(&self) -> &Rat {
        &self.x
    }

    pub fn quad_coeff(&self) -> &Rat {
        &self.y
    }

    pub fn radicand(&self) -> Option<&BigInt> {
        self.d.as_ref()
    }

    pub fn is_rational(&self) -> bool {
        self.d.is_none()
    }

    pub fn as_rat(&self) -> Option<&Rat> {
        if self.is_rational() {
            Some(&self.x)
        } else {
            None
        }
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.y.is_zero() && self.x.is_one()
    }

    /// Galois conjugate x - y*sqrt(D).
    pub fn conjugate(&self) -> Self {
        ExactScalar { x: self.x.clone(), y: -self.y.clone(), d: self.d.clone() }
    }

    fn merged_d(&self, other: &Self) -> ScalarResult<Option<BigInt>> {
        match (&self.d, &other.d) {
            (None, None) => Ok(None),
            (Some(d), None) => Ok(Some(d.clone())),
            (None, Some(d)) => Ok(Some(d.clone())),
            (Some(a), Some(b)) => {
                if a == b {
                    Ok(Some(a.clone()))
                } else {
                    Err(ScalarError::MixedRadicands(a.clone(), b.clone()))
                }
            }
        }
    }

    pub fn checked_add(&self, other: &Self) -> ScalarResult<Self> {
        let d = self.merged_d(other)?;
        let mut r = ExactScalar { x: &self.x + &other.x, y: &self.y + &other.y, d };
        r.normalize();
        Ok(r)
    }

    pub fn checked_mul(&self, other: &Self) -> ScalarResult<Self> {
        let d = self.merged_d(other)?;
        let (x, y) = match &d {
            None => (&self.x * &other.x, Rat::zero()),
            Some(dd) => {
                let dr = Rat::from_integer(dd.clone());
                (
                    &self.x * &other.x + &self.y * &other.y * dr,
                    &self.x * &other.y + &self.y * &other.x,
                )
            }
        };
        let mut r = ExactScalar { x, y, d };
        r.normalize();
        Ok(r)
    }

    fn normalize(&mut self) {
        if self.y.is_zero() {
            self.d = None;
        }
    }

    /// Field norm x^2 - y^2 D (a rational), nonzero for nonzero scalars.
    pub fn field_norm(&self) -> Rat {
        match &self.d {
            None => &self.x * &self.x,
            Some(d) => &self.x * &self.x - &self.y * &self.y * Rat::from_integer(d.clone()),
        }
    }

    pub fn inverse(&self) -> Self {
        assert!(!self.is_zero(), "inverse of zero");
        let n = self.field_norm();
        debug_assert!(!n.is_zero(), "nonzero quadratic scalar has nonzero field norm");
        let inv_n = Rat::one() / n;
        let mut r = ExactScalar {
            x: &self.x * &inv_n,
            y: -&self.y * &inv_n,
            d: self.d.clone(),
        };
        r.normalize();
        r
    }

    /// Exact sign: -1, 0, +1 of the real value (principal positive sqrt(D)).
    pub fn signum(&self) -> i32 {
        if self.y.is_zero() {
            return sign_of(&self.x);
        }
        let d = Rat::from_integer(self.d.clone().expect("y != 0 has a radicand"));
        let sx = sign_of(&self.x);
        let sy = sign_of(&self.y);
        if sx == sy {
            return sx; // both zero is impossible here since y != 0
        }
        if sx == 0 {
            return sy;
        }
        if sy == 0 {
            return sx;
        }
        // x and y*sqrt(D) have opposite signs; compare x^2 vs y^2 D.
        let x2 = &self.x * &self.x;
        let y2d = &self.y * &self.y * d;
        match x2.cmp(&y2d) {
            Ordering::Greater => sx,
            Ordering::Less => sy,
            Ordering::Equal => 0,
        }
    }

    pub fn abs(&self) -> Self {
        if self.signum() < 0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    /// Exact comparison of real values. Panics on mixed radicands.
    pub fn cmp_real(&self, other: &Self) -> Ordering {
        let diff = self.clone() - other.clone();
        match diff.signum() {
            s if s < 0 => Ordering::Less,
            0 => Ordering::Equal,
            _ => Ordering::Greater,
        }
    }

    /// Total order on real values, defined across different quadratic fields.
    /// Same-field comparisons are exact sign tests; cross-field comparisons
    /// refine enclosures (values in distinct quadratic fields are equal only
    /// when both are rational, so refinement terminates).
    pub fn cmp_total(&self, other: &Self) -> Ordering {
        let compatible = match (self.radicand(), other.radicand()) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        };
        if compatible {
            return self.cmp_real(other);
        }
        let mut bits = 64u32;
        loop {
            let (alo, ahi) = self.real_enclosure(bits);
            let (blo, bhi) = other.real_enclosure(bits);
            if ahi < blo {
                return Ordering::Less;
            }
            if bhi < alo {
                return Ordering::Greater;
            }
            bits = bits.saturating_mul(2);
            assert!(bits <= 1 << 22, "cross-field comparison failed to separate");
        }
    }

    /// Certified rational enclosure [lo, hi] of the real value, with
    /// hi - lo <= 2^-bits * max(1, |value|).
    pub fn real_enclosure(&self, bits: u32) -> (Rat, Rat) {
        match &self.d {
            None => (self.x.clone(), self.x.clone()),
            Some(d) => {
                let (slo, shi) = sqrt_interval(&Rat::from_integer(d.clone()), bits + 8);
                let (a, b) = if self.y.is_negative() {
                    (&self.y * shi, &self.y * slo)
                } else {
                    (&self.y * slo, &self.y * shi)
                };
                let lo = &self.x + a;
                let hi = &self.x + b;
                debug_assert!(lo <= hi);
                (dyadic_floor(&lo, bits + 8), dyadic_ceil(&hi, bits + 8))
            }
        }
    }
}

fn sign_of(r: &Rat) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_negative() {
        -1
    } else {
        1
    }
}

impl PartialEq for ExactScalar {
    fn eq(&self, other: &Self) -> bool {
        // Representation is canonical (y=0 <=> d=None, square parts extracted),
        // except that distinct radicands denote distinct fields; values in
        // different fields compare unequal unless both are rational.
        self.x == other.x && self.y == other.y && self.d == other.d
    }
}
impl Eq for ExactScalar {}

impl Hash for ExactScalar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.x.numer().hash(state);
        self.x.denom().hash(state);
        self.y.numer().hash(state);
        self.y.denom().hash(state);
        self.d.hash(state);
    }
}

macro_rules! scalar_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl std::ops::$trait for ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: ExactScalar) -> ExactScalar {
                (&self).$method(&rhs)
            }
        }
        impl<'a, 'b> std::ops::$trait<&'b ExactScalar> for &'a ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: &'b ExactScalar) -> ExactScalar {
                self.$checked(rhs).expect("scalar op over mixed quadratic fields")
            }
        }
    };
}

scalar_binop!(Add, add, checked_add);
scalar_binop!(Mul, mul, checked_mul);

impl std::ops::Neg for ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar { x: -self.x, y: -self.y, d: self.d }
    }
}

impl std::ops::Sub for ExactScalar {
    type Output = ExactScalar;
    fn sub(self, rhs: ExactScalar) -> ExactScalar {
        self + (-rhs)
    }
}

impl<'a, 'b> std::ops::Sub<&'b ExactScalar> for &'a ExactScalar {
    type Output = ExactScalar;
    fn sub(self, rhs: &'b ExactScalar) -> ExactScalar {
        self.clone() + (-rhs.clone())
    }
}

impl std::ops::Div for ExactScalar {
    type Output = ExactScalar;
    fn div(self, rhs: ExactScalar) -> ExactScalar {
        &self * &rhs.inverse()
    }
}

impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.d {
            None => write!(f, "{}", format_rat(&self.x)),
            Some(d) => write!(f, "{} + {}*sqrt({})", format_rat(&self.x), format_rat(&self.y), d),
        }
    }
}

// ---------------------------------------------------------------------------
// Magnitudes
// ---------------------------------------------------------------------------

/// A certified magnitude: zero, an exact power of p (value p^-exponent), or a
/// rational interval enclosing a nonnegative real value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Magnitude {
    Zero,
    /// value = p^(-exponent); exponent is the (rational) valuation.
    PPower { p: u64, exponent: Rat },
    /// 0 <= lo <= value <= hi, exact rational endpoints.
    RealInterval { lo: Rat, hi: Rat },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagOrder {
    Less,
    Equal,
    Greater,
    Inconclusive,
}

impl Magnitude {
    pub fn one_at(place: Place) -> Magnitude {
        match place {
            Place::Real => Magnitude::point(Rat::one()),
            Place::Finite { p } => Magnitude::PPower { p, exponent: Rat::zero() },
        }
    }

    pub fn point(v: Rat) -> Magnitude {
        assert!(!v.is_negative());
        if v.is_zero() {
            Magnitude::Zero
        } else {
            Magnitude::RealInterval { lo: v.clone(), hi: v }
        }
    }

    pub fn interval(lo: Rat, hi: Rat) -> Magnitude {
        assert!(!lo.is_negative() && lo <= hi, "invalid interval [{}, {}]", lo, hi);
        Magnitude::RealInterval { lo, hi }
    }

    pub fn ppower(p: u64, exponent: Rat) -> Magnitude {
        Magnitude::PPower { p, exponent }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Magnitude::Zero)
    }

    /// Strictly positive with certainty (lower endpoint > 0).
    pub fn certainly_positive(&self) -> bool {
        match self {
            Magnitude::Zero => false,
            Magnitude::PPower { .. } => true,
            Magnitude::RealInterval { lo, .. } => lo.is_positive(),
        }
    }

    pub fn checked_mul(&self, other: &Magnitude) -> ScalarResult<Magnitude> {
        match (self, other) {
            (Magnitude::Zero, _) | (_, Magnitude::Zero) => Ok(Magnitude::Zero),
            (Magnitude::PPower { p: p1, exponent: e1 }, Magnitude::PPower { p: p2, exponent: e2 }) => {
                if p1 != p2 {
                    return Err(ScalarError::MixedPlaceKinds);
                }
                Ok(Magnitude::PPower { p: *p1, exponent: e1 + e2 })
            }
            (
                Magnitude::RealInterval { lo: a, hi: b },
                Magnitude::RealInterval { lo: c, hi: d },
            ) => Ok(Magnitude::RealInterval { lo: a * c, hi: b * d }),
            _ => Err(ScalarError::MixedPlaceKinds),
        }
    }

    pub fn mul(&self, other: &Magnitude) -> Magnitude {
        self.checked_mul(other).expect("magnitudes from one place")
    }

    /// Integer power, k >= 1.
    pub fn pow(&self, k: u32) -> Magnitude {
        assert!(k >= 1);
        match self {
            Magnitude::Zero => Magnitude::Zero,
            Magnitude::PPower { p, exponent } => Magnitude::PPower {
                p: *p,
                exponent: exponent * Rat::from_integer(BigInt::from(k)),
            },
            Magnitude::RealInterval { lo, hi } => Magnitude::RealInterval {
                lo: pow_rat(lo, k),
                hi: pow_rat(hi, k),
            },
        }
    }

    /// Inverse magnitude; errors when the interval reaches zero.
    pub fn inverse(&self) -> ScalarResult<Magnitude> {
        match self {
            Magnitude::Zero => Err(ScalarError::DivisionByPossiblyZero),
            Magnitude::PPower { p, exponent } => {
                Ok(Magnitude::PPower { p: *p, exponent: -exponent.clone() })
            }
            Magnitude::RealInterval { lo, hi } => {
                if !lo.is_positive() {
                    return Err(ScalarError::DivisionByPossiblyZero);
                }
                Ok(Magnitude::RealInterval {
                    lo: Rat::one() / hi.clone(),
                    hi: Rat::one() / lo.clone(),
                })
            }
        }
    }

    /// Certified n-th root enclosure.
    pub fn nth_root(&self, n: u32, bits: u32) -> Magnitude {
        assert!(n >= 1);
        match self {
            Magnitude::Zero => Magnitude::Zero,
            Magnitude::PPower { p, exponent } => Magnitude::PPower {
                p: *p,
                exponent: exponent / Rat::from_integer(BigInt::from(n)),
            },
            Magnitude::RealInterval { lo, hi } => {
                let (llo, _) = nth_root_interval(lo, n, bits);
                let (_, hhi) = nth_root_interval(hi, n, bits);
                Magnitude::RealInterval { lo: llo, hi: hhi }
            }
        }
    }

    /// Certified comparison. `Less`/`Greater` only on certainty; `Equal` for
    /// syntactically equal exact data; otherwise `Inconclusive`.
    pub fn compare(&self, other: &Magnitude) -> ScalarResult<MagOrder> {
        use Magnitude::*;
        Ok(match (self, other) {
            (Zero, Zero) => MagOrder::Equal,
            (Zero, PPower { .. }) => MagOrder::Less,
            (PPower { .. }, Zero) => MagOrder::Greater,
            (Zero, RealInterval { lo, hi }) => {
                if lo.is_positive() {
                    MagOrder::Less
                } else if hi.is_zero() {
                    MagOrder::Equal
                } else {
                    MagOrder::Inconclusive
                }
            }
            (RealInterval { lo, hi }, Zero) => {
                if lo.is_positive() {
                    MagOrder::Greater
                } else if hi.is_zero() {
                    MagOrder::Equal
                } else {
                    MagOrder::Inconclusive
                }
            }
            (PPower { p: p1, exponent: e1 }, PPower { p: p2, exponent: e2 }) => {
                if p1 != p2 {
                    return Err(ScalarError::MixedPlaceKinds);
                }
                // value = p^-e, so larger exponent means smaller value.
                match e1.cmp(e2) {
                    Ordering::Less => MagOrder::Greater,
                    Ordering::Equal => MagOrder::Equal,
                    Ordering::Greater => MagOrder::Less,
                }
            }
            (RealInterval { lo: a, hi: b }, RealInterval { lo: c, hi: d }) => {
                if a == b && c == d {
                    match a.cmp(c) {
                        Ordering::Less => MagOrder::Less,
                        Ordering::Equal => MagOrder::Equal,
                        Ordering::Greater => MagOrder::Greater,
                    }
                } else if b < c {
                    MagOrder::Less
                } else if d < a {
                    MagOrder::Greater
                } else {
                    MagOrder::Inconclusive
                }
            }
            _ => return Err(ScalarError::MixedPlaceKinds),
        })
    }

    /// Compare against an exact nonnegative rational threshold.
    pub fn compare_rat(&self, c: &Rat) -> MagOrder {
        assert!(!c.is_negative());
        match self {
            Magnitude::Zero => {
                if c.is_zero() {
                    MagOrder::Equal
                } else {
                    MagOrder::Less
                }
            }
            Magnitude::PPower { p, exponent } => {
                if c.is_zero() {
                    return MagOrder::Greater;
                }
                // p^-e vs c with e = a/b: compare p^-a vs c^b (b > 0).
                let a = exponent.numer();
                let b = exponent.denom();
                let bu = b.to_biguint().expect("positive denom").try_into().unwrap_or(u32::MAX);
                let cb = pow_rat(c, bu);
                let pm = BigInt::from(*p);
                // p^-a as a rational (a may be negative).
                let pa = if a.is_negative() {
                    let e: u32 = (-a).to_biguint().unwrap().try_into().unwrap_or(u32::MAX);
                    Rat::from_integer(pm.pow(e))
                } else {
                    let e: u32 = a.to_biguint().unwrap().try_into().unwrap_or(u32::MAX);
                    Rat::new(BigInt::one(), pm.pow(e))
                };
                match pa.cmp(&cb) {
                    Ordering::Less => MagOrder::Less,
                    Ordering::Equal => MagOrder::Equal,
                    Ordering::Greater => MagOrder::Greater,
                }
            }
            Magnitude::RealInterval { lo, hi } => {
                if lo == hi {
                    match lo.cmp(c) {
                        Ordering::Less => MagOrder::Less,
                        Ordering::Equal => MagOrder::Equal,
                        Ordering::Greater => MagOrder::Greater,
                    }
                } else if hi < c {
                    MagOrder::Less
                } else if c < lo {
                    MagOrder::Greater
                } else {
                    MagOrder::Inconclusive
                }
            }
        }
    }

    /// Certified max: for intervals, the pointwise max enclosure.
    pub fn max(&self, other: &Magnitude) -> ScalarResult<Magnitude> {
        use Magnitude::*;
        Ok(match (self, other) {
            (Zero, m) | (m, Zero) => m.clone(),
            (PPower { .. }, PPower { .. }) => match self.compare(other)? {
                MagOrder::Less => other.clone(),
                _ => self.clone(),
            },
            (RealInterval { lo: a, hi: b }, RealInterval { lo: c, hi: d }) => RealInterval {
                lo: a.max(c).clone(),
                hi: b.max(d).clone(),
            },
            _ => return Err(ScalarError::MixedPlaceKinds),
        })
    }

    /// Certified min enclosure.
    pub fn min(&self, other: &Magnitude) -> ScalarResult<Magnitude> {
        use Magnitude::*;
        Ok(match (self, other) {
            (Zero, _) | (_, Zero) => Zero,
            (PPower { .. }, PPower { .. }) => match self.compare(other)? {
                MagOrder::Greater => other.clone(),
                _ => self.clone(),
            },
            (RealInterval { lo: a, hi: b }, RealInterval { lo: c, hi: d }) => RealInterval {
                lo: a.min(c).clone(),
                hi: b.min(d).clone(),
            },
            _ => return Err(ScalarError::MixedPlaceKinds),
        })
    }

    /// Upper rational bound (hi endpoint; p-powers evaluated exactly).
    pub fn upper_rat(&self) -> Rat {
        match self {
            Magnitude::Zero => Rat::zero(),
            Magnitude::PPower { p, exponent } => ppower_value_bound(*p, exponent, true),
            Magnitude::RealInterval { hi, .. } => hi.clone(),
        }
    }

    pub fn lower_rat(&self) -> Rat {
        match self {
            Magnitude::Zero => Rat::zero(),
            Magnitude::PPower { p, exponent } => ppower_value_bound(*p, exponent, false),
            Magnitude::RealInterval { lo, .. } => lo.clone(),
        }
    }
}

fn pow_rat(r: &Rat, k: u32) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..k {
        acc *= r;
    }
    acc
}

/// Exact value of p^-e when e is an integer; for fractional e a certified
/// bound in the requested direction (upper if `up`).
fn ppower_value_bound(p: u64, e: &Rat, up: bool) -> Rat {
    let pm = BigInt::from(p);
    if e.denom().is_one() {
        let a = e.numer();
        return if a.is_negative() {
            let k: u32 = (-a).to_biguint().unwrap().try_into().expect("moderate exponent");
            Rat::from_integer(pm.pow(k))
        } else {
            let k: u32 = a.to_biguint().unwrap().try_into().expect("moderate exponent");
            Rat::new(BigInt::one(), pm.pow(k))
        };
    }
    // p^(-a/b): enclose via integer b-th root of p^|a|.
    let a = e.numer().clone();
    let b: u32 = e.denom().to_biguint().unwrap().try_into().expect("moderate denom");
    let abs_a: u32 = a.abs().to_biguint().unwrap().try_into().expect("moderate exponent");
    let base = Rat::from_integer(pm.pow(abs_a));
    let (lo, hi) = nth_root_interval(&base, b, 64);
    // value = base^(1/b) if a < 0, else 1 / base^(1/b).
    if a.is_negative() {
        if up {
            hi
        } else {
            lo
        }
    } else if up {
        Rat::one() / lo
    } else {
        Rat::one() / hi
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Magnitude::Zero => write!(f, "0"),
            Magnitude::PPower { p, exponent } => write!(f, "{}^-({})", p, format_rat(exponent)),
            Magnitude::RealInterval { lo, hi } => {
                write!(f, "[{}, {}]", format_rat(lo), format_rat(hi))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Absolute values
// ---------------------------------------------------------------------------

/// Precision policy: current bits, doubled on inconclusive comparisons, cap.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Precision {
    pub bits: u32,
    pub cap: u32,
}

impl Default for Precision {
    fn default() -> Self {
        Precision { bits: 64, cap: 4096 }
    }
}

impl Precision {
    pub fn new(bits: u32) -> Self {
        Precision { bits, cap: bits.saturating_mul(64).max(4096) }
    }

    pub fn escalate(&self) -> ScalarResult<Precision> {
        let next = self.bits.saturating_mul(2);
        if next > self.cap {
            Err(ScalarError::PrecisionExhausted(self.bits))
        } else {
            Ok(Precision { bits: next, cap: self.cap })
        }
    }
}

/// |x| at the given place. At finite places the scalar must be rational
/// (use `PAdicEmbedding` for quadratic scalars).
pub fn abs_at_place(x: &ExactScalar, place: Place, prec: Precision) -> ScalarResult<Magnitude> {
    match place {
        Place::Real => {
            if x.is_zero() {
                return Ok(Magnitude::Zero);
            }
            let a = x.abs();
            if let Some(r) = a.as_rat() {
                return Ok(Magnitude::point(r.clone()));
            }
            let (lo, hi) = a.real_enclosure(prec.bits);
            // The absolute value is positive; tighten a nonpositive lower bound.
            let lo = if lo.is_negative() { Rat::zero() } else { lo };
            Ok(Magnitude::interval(lo, hi))
        }
        Place::Finite { p } => {
            let r = x.as_rat().ok_or(ScalarError::QuadraticAtFinitePlace)?;
            match val_p(r, p) {
                None => Ok(Magnitude::Zero),
                Some(v) => Ok(Magnitude::PPower { p, exponent: Rat::from_integer(v) }),
            }
        }
    }
}

/// Refine a real magnitude of a scalar to width <= target_width.
pub fn mag_refine(x: &ExactScalar, target_width: &Rat, prec: Precision) -> ScalarResult<Magnitude> {
    assert!(target_width.is_positive());
    let mut p = prec;
    loop {
        let m = abs_at_place(x, Place::Real, p)?;
        if let Magnitude::RealInterval { lo, hi } = &m {
            if &(hi - lo) <= target_width {
                return Ok(m);
            }
        } else {
            return Ok(m);
        }
        p = p.escalate()?;
    }
}

// ---------------------------------------------------------------------------
// p-adic embeddings of quadratic fields
// ---------------------------------------------------------------------------

/// A fixed embedding Q(sqrt(D)) -> Q_p, available when D is a square in Q_p:
/// v_p(D) even and the unit part a quadratic residue (1 mod 8 for p = 2).
/// Stores a p-adic approximation of sqrt(D) that can be deepened on demand.
#[derive(Debug, Clone)]
pub struct PAdicEmbedding {
    p: u64,
    d: BigInt,
    /// v_p(sqrt(D)) = t where v_p(D) = 2t.
    t: i64,
    /// unit part u = D / p^(2t)
    unit: BigInt,
    /// root^2 = unit mod p^n
    root: BigInt,
    n: u32,
}

impl PAdicEmbedding {
    /// Build an embedding at initial precision `n0` p-adic digits.
    pub fn new(p: u64, d: &BigInt, n0: u32) -> ScalarResult<PAdicEmbedding> {
        if !is_prime_u64(p) {
            return Err(ScalarError::NotPrime(p));
        }
        assert!(d.is_positive() && !d.is_one());
        let pb = BigInt::from(p);
        let mut v = 0i64;
        let mut u = d.clone();
        while (&u % &pb).is_zero() {
            u /= &pb;
            v += 1;
        }
        if v % 2 != 0 {
            return Err(ScalarError::NoPadicRoot(d.clone(), p));
        }
        let t = v / 2;
        let root = padic_sqrt_unit(&u, p, n0.max(4))
            .ok_or_else(|| ScalarError::NoPadicRoot(d.clone(), p))?;
        Ok(PAdicEmbedding { p, d: d.clone(), t, unit: u, root, n: n0.max(4) })
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn radicand(&self) -> &BigInt {
        &self.d
    }

    pub fn precision(&self) -> u32 {
        self.n
    }

    fn deepen(&mut self) -> ScalarResult<()> {
        let n2 = self.n.saturating_mul(2);
        if n2 > 1 << 20 {
            return Err(ScalarError::PrecisionExhausted(self.n));
        }
        self.root = lift_sqrt(&self.unit, self.p, &self.root, self.n, n2);
        self.n = n2;
        Ok(())
    }

    /// Exact p-adic valuation of a nonzero scalar in Q(sqrt(D)) under this
    /// embedding; `None` for zero. Deepens the stored root as needed.
    pub fn valuation(&mut self, s: &ExactScalar) -> ScalarResult<Option<BigInt>> {
        if s.is_zero() {
            return Ok(None);
        }
        if let Some(r) = s.as_rat() {
            return Ok(val_p(r, self.p));
        }
        let d = s.radicand().expect("non-rational scalar");
        assert_eq!(d, &self.d, "embedding fixed for one radicand");
        loop {
            // z = x + y * p^t * root  approximates the embedded value with
            // error of valuation >= v_p(y) + t + n.
            let pt = pow_bigint_signed(self.p, self.t);
            let z = s.rational_part().clone()
                + s.quad_coeff().clone() * &pt * Rat::from_integer(self.root.clone());
            let guard = val_p(s.quad_coeff(), self.p).expect("y != 0")
                + BigInt::from(self.t)
                + BigInt::from(self.n);
            match val_p(&z, self.p) {
                Some(v) if v < guard => return Ok(Some(v)),
                _ => self.deepen()?,
            }
        }
    }

    /// Magnitude of a scalar under this embedding.
    pub fn magnitude(&mut self, s: &ExactScalar) -> ScalarResult<Magnitude> {
        Ok(match self.valuation(s)? {
            None => Magnitude::Zero,
            Some(v) => Magnitude::PPower { p: self.p, exponent: Rat::from_integer(v) },
        })
    }
}

fn pow_bigint_signed(p: u64, e: i64) -> Rat {
    let pb = BigInt::from(p);
    if e >= 0 {
        Rat::from_integer(pb.pow(e as u32))
    } else {
        Rat::new(BigInt::one(), pb.pow((-e) as u32))
    }
}

/// Square root of a p-adic unit mod p^n, or None when no root exists.
/// Deterministic: the seed residue is canonicalized (least residue for odd p,
/// root = 1 mod 4 for p = 2).
fn padic_sqrt_unit(u: &BigInt, p: u64, n: u32) -> Option<BigInt> {
    let pb = BigInt::from(p);
    let pn = pb.pow(n);
    let um = ((u % &pn) + &pn) % &pn;
    if p == 2 {
        if (&um % BigInt::from(8)) != BigInt::one() {
            return None;
        }
        // Lift digit by digit: root_{k} mod 2^k, starting 1 mod 8.
        let mut r = BigInt::one();
        let mut k = 3u32;
        while k < n {
            let modk1 = BigInt::from(2).pow(k + 1);
            let cand = &r * &r % &modk1;
            let target = u % &modk1;
            let t2 = ((target - cand) % &modk1 + &modk1) % &modk1;
            if !t2.is_zero() {
                r += BigInt::from(2).pow(k - 1);
            }
            k += 1;
        }
        let rr = ((&r % &pn) + &pn) % &pn;
        let canon = if (&rr % BigInt::from(4)) == BigInt::one() { rr } else { (&pn - rr) % &pn };
        return Some(canon);
    }
    // Odd p: find root mod p (brute force for small p, Tonelli-Shanks otherwise).
    let p_i = BigInt::from(p);
    let u0: BigInt = &um % &p_i;
    if u0.is_zero() {
        return None; // not a unit
    }
    let r0 = sqrt_mod_p(&u0, p)?;
    // Canonical seed: least of {r0, p - r0}.
    let r0 = {
        let alt = BigInt::from(p) - &r0;
        if alt < r0 {
            alt
        } else {
            r0
        }
    };
    // Newton lift to mod p^n.
    Some(lift_sqrt(u, p, &r0, 1, n))
}

/// Hensel-lift r with r^2 = u mod p^from to mod p^to (doubling steps).
fn lift_sqrt(u: &BigInt, p: u64, r: &BigInt, from: u32, to: u32) -> BigInt {
    if p == 2 {
        // Redo the digit lift from scratch (cheap, keeps canonical branch).
        return padic_sqrt_unit(u, p, to).expect("existing root lifts");
    }
    let mut k = from;
    let mut r = r.clone();
    let pb = BigInt::from(p);
    while k < to {
        let k2 = (2 * k).min(to.max(k + 1));
        let pk2 = pb.pow(k2);
        // r <- r - (r^2 - u) / (2r) mod p^k2
        let num = ((&r * &r - u) % &pk2 + &pk2) % &pk2;
        let inv2r = mod_inverse(&((&r * BigInt::from(2)) % &pk2), &pk2).expect("2r unit");
        r = ((&r - num * inv2r) % &pk2 + &pk2) % &pk2;
        k = k2;
    }
    r
}

fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(m);
    if e.gcd.is_one() {
        Some(((e.x % m) + m) % m)
    } else {
        None
    }
}

/// Square root mod an odd prime p (Tonelli-Shanks; exact).
fn sqrt_mod_p(a: &BigInt, p: u64) -> Option<BigInt> {
    let pb = BigInt::from(p);
    let a = ((a % &pb) + &pb) % &pb;
    if a.is_zero() {
        return Some(BigInt::zero());
    }
    let pow_mod = |b: &BigInt, e: &BigInt, m: &BigInt| -> BigInt { b.modpow(e, m) };
    let leg = pow_mod(&a, &((&pb - 1) / 2), &pb);
    if leg != BigInt::one() {
        return None;
    }
    if &pb % BigInt::from(4) == BigInt::from(3) {
        return Some(pow_mod(&a, &((&pb + 1) / 4), &pb));
    }
    // Tonelli-Shanks
    let mut q: BigInt = &pb - 1;
    let mut s = 0u32;
    while q.is_even() {
        q /= 2;
        s += 1;
    }
    // find a non-residue z (deterministic scan)
    let mut z = BigInt::from(2);
    while pow_mod(&z, &((&pb - 1) / 2), &pb) == BigInt::one() {
        z += 1;
    }
    let mut m = s;
    let mut c = pow_mod(&z, &q, &pb);
    let mut t = pow_mod(&a, &q, &pb);
    let mut r = pow_mod(&a, &((&q + 1) / 2), &pb);
    while t != BigInt::one() {
        // find least i with t^(2^i) = 1
        let mut i = 0u32;
        let mut tt = t.clone();
        while tt != BigInt::one() {
            tt = &tt * &tt % &pb;
            i += 1;
        }
        let b = pow_mod(&c, &BigInt::from(2).pow(m - i - 1), &pb);
        m = i;
        c = &b * &b % &pb;
        t = t * &c % &pb;
        r = r * b % &pb;
    }
    Some(r)
}

/// Magnitude evaluation context for a fixed place, caching one p-adic
/// embedding per radicand so repeated valuations share Hensel lifts.
#[derive(Debug, Clone)]
pub struct PlaceCtx {
    pub place: Place,
    pub prec: Precision,
    embeddings: std::collections::HashMap<BigInt, PAdicEmbedding>,
}

impl PlaceCtx {
    pub fn new(place: Place) -> Self {
        Self::with_precision(place, Precision::default())
    }

    pub fn with_precision(place: Place, prec: Precision) -> Self {
        PlaceCtx { place, prec, embeddings: std::collections::HashMap::new() }
    }

    pub fn real() -> Self {
        Self::new(Place::Real)
    }

    pub fn finite(p: u64) -> ScalarResult<Self> {
        Ok(Self::new(Place::finite(p)?))
    }

    pub fn is_finite(&self) -> bool {
        self.place.is_finite()
    }

    /// |s| at this context's place. Quadratic scalars at finite places go
    /// through a cached embedding (error when sqrt(D) does not exist in Q_p).
    pub fn magnitude(&mut self, s: &ExactScalar) -> ScalarResult<Magnitude> {
        match self.place {
            Place::Real => abs_at_place(s, Place::Real, self.prec),
            Place::Finite { p } => {
                if s.is_rational() {
                    return abs_at_place(s, self.place, self.prec);
                }
                let d = s.radicand().expect("non-rational scalar").clone();
                if let std::collections::hash_map::Entry::Vacant(e) = self.embeddings.entry(d.clone())
                {
                    e.insert(PAdicEmbedding::new(p, &d, 32)?);
                }
                self.embeddings.get_mut(&d).expect("just inserted").magnitude(s)
            }
        }
    }

    /// Exact valuation at a finite place (None for zero).
    pub fn valuation(&mut self, s: &ExactScalar) -> ScalarResult<Option<Rat>> {
        match self.magnitude(s)? {
            Magnitude::Zero => Ok(None),
            Magnitude::PPower { exponent, .. } => Ok(Some(exponent)),
            Magnitude::RealInterval { .. } => Err(ScalarError::MixedPlaceKinds),
        }
    }

    pub fn escalate(&mut self) -> ScalarResult<()> {
        self.prec = self.prec.escalate()?;
        Ok(())
    }
}

/// Exact p-adic valuation of a rational; None for zero.
pub fn rat_val_p(r: &Rat, p: u64) -> Option<i64> {
    if r.is_zero() {
        return None;
    }
    let pb = BigInt::from(p);
    let mut v: i64 = 0;
    let mut n = r.numer().abs();
    while (&n % &pb).is_zero() {
        n /= &pb;
        v += 1;
    }
    let mut d = r.denom().abs();
    while (&d % &pb).is_zero() {
        d /= &pb;
        v -= 1;
    }
    Some(v)
}

/// True when r is the square of a rational; returns that square root.
pub fn rat_sqrt_exact(r: &Rat) -> Option<Rat> {
    if r.is_negative() {
        return None;
    }
    if r.is_zero() {
        return Some(Rat::zero());
    }
    let n = r.numer();
    let d = r.denom();
    let sn = n.sqrt();
    let sd = d.sqrt();
    if &(&sn * &sn) == n && &(&sd * &sd) == d {
        Some(Rat::new(sn, sd))
    } else {
        None
    }
}

impl ExactScalar {
    /// Integer power, k >= 0.
    pub fn pow(&self, k: u32) -> ExactScalar {
        let mut acc = ExactScalar::one();
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }

    /// Exact nonnegative square root when it stays inside a quadratic field:
    /// always for rationals (sqrt(p/q) = sqrt(pq)/q in Q(sqrt(pq))), and for
    /// quadratic scalars whose root denests back into the same field.
    /// `None` for negative values or non-denestable nested radicals.
    pub fn sqrt_exact(&self) -> Option<ExactScalar> {
        if self.signum() < 0 {
            return None;
        }
        if self.is_zero() {
            return Some(ExactScalar::zero());
        }
        if let Some(r) = self.as_rat() {
            let radicand = r.numer() * r.denom();
            return Some(ExactScalar::quadratic(
                Rat::zero(),
                Rat::new(BigInt::one(), r.denom().clone()),
                radicand,
            ));
        }
        // s = x + y*sqrt(D) with y != 0; try sqrt(s) = u + v*sqrt(D).
        // Then u^2 + v^2 D = x and 2uv = y, so u^2 is a root of
        // z^2 - x z + y^2 D / 4, i.e. u^2 = (x +- m)/2 with m = sqrt(N(s)).
        let m = rat_sqrt_exact(&self.field_norm())?;
        let d = self.radicand().expect("quadratic").clone();
        for cand in [(self.rational_part() + &m) / rat_i64(2), (self.rational_part() - &m) / rat_i64(2)] {
            if cand.is_negative() {
                continue;
            }
            if let Some(u) = rat_sqrt_exact(&cand) {
                if u.is_zero() {
                    continue;
                }
                let v = self.quad_coeff() / (&u * rat_i64(2));
                let root = ExactScalar::quadratic(u, v, d.clone());
                let sq = &root * &root;
                if &sq == self {
                    return Some(if root.signum() >= 0 { root } else { -root });
                }
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Certified natural logarithm (for entropy reports)
// ---------------------------------------------------------------------------

/// Certified enclosure of ln(x) for rational x >= 1.
pub fn ln_interval(x: &Rat, bits: u32) -> (Rat, Rat) {
    assert!(*x >= Rat::one());
    if x.is_one() {
        return (Rat::zero(), Rat::zero());
    }
    // Normalize x = m * 2^k with m in [1, 2).
    let mut k = 0u32;
    let two = rat_i64(2);
    let mut m = x.clone();
    while m >= two {
        m /= &two;
        k += 1;
    }
    let (l2lo, l2hi) = ln2_interval(bits + 8);
    let (mlo, mhi) = ln_via_atanh(&m, bits + 8);
    let kk = Rat::from_integer(BigInt::from(k));
    (
        dyadic_floor(&(&kk * &l2lo + mlo), bits),
        dyadic_ceil(&(&kk * &l2hi + mhi), bits),
    )
}

/// ln(m) for m in [1, 2) via 2*atanh((m-1)/(m+1)) with exact tail bound.
fn ln_via_atanh(m: &Rat, bits: u32) -> (Rat, Rat) {
    let z = (m - Rat::one()) / (m + Rat::one()); // 0 <= z < 1/3
    if z.is_zero() {
        return (Rat::zero(), Rat::zero());
    }
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut sum = Rat::zero();
    let mut j = 0u32;
    let tol = Rat::new(BigInt::one(), BigInt::one() << (bits + 4));
    loop {
        sum += &term / Rat::from_integer(BigInt::from(2 * j + 1));
        term *= &z2;
        j += 1;
        // Tail after j terms: sum_{i>=j} z^(2i+1)/(2i+1) <= term / (1 - z^2).
        let tail = &term / (Rat::one() - &z2);
        if tail < tol || j > 10_000 {
            let lo = &sum * rat_i64(2);
            let hi = (&sum + &tail) * rat_i64(2);
            return (dyadic_floor(&lo, bits), dyadic_ceil(&hi, bits));
        }
    }
}

fn ln2_interval(bits: u32) -> (Rat, Rat) {
    // ln 2 = 2 * atanh(1/3)
    ln_via_atanh(&rat_i64(2), bits)
}

// ---------------------------------------------------------------------------
// Serialization of rationals / scalars / magnitudes
// ---------------------------------------------------------------------------

/// Rational wrapper serializing as a "num/den" string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatJson(pub Rat);

/// Serde adapter for struct fields of type Rat ("num/den" strings on the wire).
pub mod rat_string {
    use super::{parse_rat, Rat, RatJson};
    use serde::{Deserialize, Serialize};

    pub fn serialize<S: serde::Serializer>(r: &Rat, s: S) -> Result<S::Ok, S::Error> {
        RatJson(r.clone()).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(d)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for Option<Rat> as an optional "num/den" string.
pub mod opt_rat_string {
    use super::{parse_rat, Rat, RatJson};
    use serde::{Deserialize, Serialize};

    pub fn serialize<S: serde::Serializer>(r: &Option<Rat>, s: S) -> Result<S::Ok, S::Error> {
        r.clone().map(RatJson).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Rat>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        match s {
            None => Ok(None),
            Some(t) => parse_rat(&t).map(Some).map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for RatJson {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rat(&self.0))
    }
}

impl<'de> Deserialize<'de> for RatJson {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_rat(&s).map(RatJson).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScalarRepr {
    Plain(RatJson),
    Quadratic { x: RatJson, y: RatJson, d: String },
}

impl Serialize for ExactScalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.d {
            None => ScalarRepr::Plain(RatJson(self.x.clone())).serialize(s),
            Some(d) => ScalarRepr::Quadratic {
                x: RatJson(self.x.clone()),
                y: RatJson(self.y.clone()),
                d: d.to_string(),
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ExactScalar {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let r = ScalarRepr::deserialize(de)?;
        Ok(match r {
            ScalarRepr::Plain(x) => ExactScalar::from_rat(x.0),
            ScalarRepr::Quadratic { x, y, d } => {
                let d = BigInt::from_str(&d).map_err(serde::de::Error::custom)?;
                if !d.is_positive() {
                    return Err(serde::de::Error::custom("radicand must be positive"));
                }
                ExactScalar::quadratic(x.0, y.0, d)
            }
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum MagnitudeRepr {
    Zero,
    PPower { exponent: RatJson, p: u64 },
    Interval { lo: RatJson, hi: RatJson },
}

impl Serialize for Magnitude {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let r = match self {
            Magnitude::Zero => MagnitudeRepr::Zero,
            Magnitude::PPower { p, exponent } => {
                MagnitudeRepr::PPower { exponent: RatJson(exponent.clone()), p: *p }
            }
            Magnitude::RealInterval { lo, hi } => {
                MagnitudeRepr::Interval { lo: RatJson(lo.clone()), hi: RatJson(hi.clone()) }
            }
        };
        r.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Magnitude {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        Ok(match MagnitudeRepr::deserialize(de)? {
            MagnitudeRepr::Zero => Magnitude::Zero,
            MagnitudeRepr::PPower { exponent, p } => {
                Magnitude::PPower { p, exponent: exponent.0 }
            }
            MagnitudeRepr::Interval { lo, hi } => Magnitude::interval(lo.0, hi.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rat {
        rat(n, d)
    }

    #[test]
    fn two_adic_magnitude_of_three_quarters() {
        // |3/4| at the 2-adic place is 4 = 2^-(-2).
        let m = abs_at_place(&ExactScalar::from_rat(q(3, 4)), Place::finite(2).unwrap(), Precision::default()).unwrap();
        assert_eq!(m, Magnitude::PPower { p: 2, exponent: Rat::from_integer(BigInt::from(-2)) });
        assert_eq!(m.compare_rat(&rat_i64(4)), MagOrder::Equal);
    }

    #[test]
    fn real_magnitude_is_exact_for_rationals() {
        let m = abs_at_place(&ExactScalar::from_rat(q(-7, 3)), Place::Real, Precision::default()).unwrap();
        assert_eq!(m, Magnitude::point(q(7, 3)));
    }

    #[test]
    fn quadratic_scalar_arithmetic_golden_ratio() {
        // phi = (1 + sqrt(5))/2 satisfies phi^2 = phi + 1.
        let phi = ExactScalar::quadratic(q(1, 2), q(1, 2), BigInt::from(5));
        let phi2 = &phi * &phi;
        let rhs = &phi + &ExactScalar::one();
        assert_eq!(phi2, rhs);
        // enclosure near 1.618...
        let (lo, hi) = phi.real_enclosure(40);
        assert!(lo <= q(1618, 1000) && q(1618, 1000) <= hi || (hi.clone() - lo.clone()) < q(1, 1000));
        assert!(hi - lo < q(1, 1 << 20));
    }

    #[test]
    fn sqrt_normalization_pulls_out_squares() {
        // sqrt(8) = 2*sqrt(2)
        let s = ExactScalar::quadratic(Rat::zero(), Rat::one(), BigInt::from(8));
        assert_eq!(s.radicand().unwrap(), &BigInt::from(2));
        assert_eq!(s.quad_coeff(), &rat_i64(2));
        // sqrt(9) = 3 rational
        let t = ExactScalar::quadratic(Rat::zero(), Rat::one(), BigInt::from(9));
        assert!(t.is_rational());
        assert_eq!(t.as_rat().unwrap(), &rat_i64(3));
    }

    #[test]
    fn signs_of_quadratic_scalars_are_exact() {
        // 3 - 2*sqrt(2) > 0, 2 - 2*sqrt(2) < 0
        let a = ExactScalar::quadratic(rat_i64(3), rat_i64(-2), BigInt::from(2));
        assert_eq!(a.signum(), 1);
        let b = ExactScalar::quadratic(rat_i64(2), rat_i64(-2), BigInt::from(2));
        assert_eq!(b.signum(), -1);
        // (1+sqrt(2))*(1-sqrt(2)) = -1
        let u = ExactScalar::quadratic(rat_i64(1), rat_i64(1), BigInt::from(2));
        let v = ExactScalar::quadratic(rat_i64(1), rat_i64(-1), BigInt::from(2));
        assert_eq!(&u * &v, ExactScalar::from_int(-1));
        assert_eq!(u.inverse(), -v);
    }

    #[test]
    fn magnitude_comparison_rules() {
        let p5 = |e: i64| Magnitude::PPower { p: 5, exponent: Rat::from_integer(BigInt::from(e)) };
        // value 5^1 vs 5^0
        assert_eq!(p5(-1).compare(&p5(0)).unwrap(), MagOrder::Greater);
        assert_eq!(Magnitude::Zero.compare(&p5(7)).unwrap(), MagOrder::Less);
        let i1 = Magnitude::interval(q(1, 1), q(3, 2));
        let i2 = Magnitude::interval(q(2, 1), q(3, 1));
        assert_eq!(i1.compare(&i2).unwrap(), MagOrder::Less);
        let i3 = Magnitude::interval(q(1, 1), q(5, 2));
        assert_eq!(i3.compare(&i2).unwrap(), MagOrder::Inconclusive);
        assert_eq!(
            Magnitude::point(q(7, 5)).compare(&Magnitude::point(q(7, 5))).unwrap(),
            MagOrder::Equal
        );
        assert!(p5(0).compare(&i1).is_err());
    }

    #[test]
    fn nth_root_interval_sqrt2() {
        let (lo, hi) = nth_root_interval(&rat_i64(2), 2, 80);
        assert!(&lo * &lo <= rat_i64(2));
        assert!(&hi * &hi >= rat_i64(2));
        assert!(&hi - &lo <= Rat::new(BigInt::one(), BigInt::one() << 79));
    }

    #[test]
    fn ppower_roots_and_products() {
        let m = Magnitude::PPower { p: 3, exponent: rat_i64(-4) }; // value 81
        let r = m.nth_root(2, 32); // value 9
        assert_eq!(r, Magnitude::PPower { p: 3, exponent: rat_i64(-2) });
        let sq = r.pow(2);
        assert_eq!(sq.compare(&m).unwrap(), MagOrder::Equal);
    }

    #[test]
    fn padic_embedding_sqrt_17_at_2() {
        // 17 = 1 mod 8, so sqrt(17) lives in Q_2; v_2(4 + sqrt(17)) = 0,
        // and N(4+sqrt17) = 16-17 = -1, so v(4+sqrt17)+v(4-sqrt17) = 0.
        let mut emb = PAdicEmbedding::new(2, &BigInt::from(17), 16).unwrap();
        let s = ExactScalar::quadratic(rat_i64(4), rat_i64(1), BigInt::from(17));
        let t = ExactScalar::quadratic(rat_i64(4), rat_i64(-1), BigInt::from(17));
        let vs = emb.valuation(&s).unwrap().unwrap();
        let vt = emb.valuation(&t).unwrap().unwrap();
        assert_eq!(&vs + &vt, BigInt::zero());
        // One of the two conjugates is a unit times 2^0... their product has v=0;
        // also (1+sqrt17)/2 * (1-sqrt17)/2 = -4 has valuation 2.
        let a = ExactScalar::quadratic(q(1, 2), q(1, 2), BigInt::from(17));
        let b = a.conjugate();
        let va = emb.valuation(&a).unwrap().unwrap();
        let vb = emb.valuation(&b).unwrap().unwrap();
        assert_eq!(va + vb, BigInt::from(2));
    }

    #[test]
    fn padic_embedding_rejects_nonresidues() {
        // 2 is not a square in Q_5 (2 is a non-residue mod 5).
        assert!(PAdicEmbedding::new(5, &BigInt::from(2), 8).is_err());
        // 5 has odd valuation at 5.
        assert!(PAdicEmbedding::new(5, &BigInt::from(5), 8).is_err());
        // -? positive only; 11 is a residue mod 5 (11 = 1 mod 5, 1 is a QR).
        assert!(PAdicEmbedding::new(5, &BigInt::from(11), 8).is_ok());
    }

    #[test]
    fn padic_embedding_5adic_101() {
        // x^2 = 101 over Q_5: 101 = 1 mod 5, sqrt exists.
        let mut emb = PAdicEmbedding::new(5, &BigInt::from(101), 8).unwrap();
        // v(sqrt(101)) = 0; v(10 + sqrt(101)): N = 100 - 101 = -1 so v + v' = 0.
        let s = ExactScalar::quadratic(rat_i64(10), rat_i64(1), BigInt::from(101));
        let v = emb.valuation(&s).unwrap().unwrap();
        let v2 = emb.valuation(&s.conjugate()).unwrap().unwrap();
        assert_eq!(v + v2, BigInt::zero());
    }

    #[test]
    fn ln_interval_covers_ln2() {
        let (lo, hi) = ln_interval(&rat_i64(2), 40);
        // ln 2 = 0.693147...
        assert!(lo < q(6932, 10000) && q(6931, 10000) < hi);
        assert!(&hi - &lo < q(1, 1 << 30));
        let (l, h) = ln_interval(&rat_i64(2047), 40);
        // ln 2047 = 7.624...
        assert!(l < q(7625, 1000) && q(7623, 1000) < h);
    }

    #[test]
    fn precision_escalation_caps() {
        let p = Precision { bits: 64, cap: 128 };
        let p2 = p.escalate().unwrap();
        assert_eq!(p2.bits, 128);
        assert!(p2.escalate().is_err());
    }

    #[test]
    fn rational_parsing_roundtrip() {
        let r = parse_rat("-22/7").unwrap();
        assert_eq!(format_rat(&r), "-22/7");
        assert_eq!(parse_rat("5").unwrap(), rat_i64(5));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }

    #[test]
    fn exact_square_roots_denest() {
        // sqrt((3+sqrt5)/2) = (1+sqrt5)/2
        let s = ExactScalar::quadratic(q(3, 2), q(1, 2), BigInt::from(5));
        let r = s.sqrt_exact().unwrap();
        assert_eq!(r, ExactScalar::quadratic(q(1, 2), q(1, 2), BigInt::from(5)));
        // sqrt of a rational is always exact: sqrt(4/9), sqrt(1/2)
        assert_eq!(
            ExactScalar::from_rat(q(4, 9)).sqrt_exact().unwrap(),
            ExactScalar::from_rat(q(2, 3))
        );
        let h = ExactScalar::from_rat(q(1, 2)).sqrt_exact().unwrap();
        assert_eq!(&h * &h, ExactScalar::from_rat(q(1, 2)));
        // 3 + sqrt(2) does not denest
        let nd = ExactScalar::quadratic(rat_i64(3), rat_i64(1), BigInt::from(2));
        assert!(nd.sqrt_exact().is_none());
        // negative has no real root
        assert!(ExactScalar::from_int(-1).sqrt_exact().is_none());
    }

    #[test]
    fn place_ctx_caches_embeddings() {
        let mut ctx = PlaceCtx::finite(5).unwrap();
        let s = ExactScalar::quadratic(rat_i64(10), rat_i64(1), BigInt::from(101));
        let m1 = ctx.magnitude(&s).unwrap();
        let m2 = ctx.magnitude(&s.conjugate()).unwrap();
        let prod = m1.mul(&m2);
        assert_eq!(prod, Magnitude::PPower { p: 5, exponent: Rat::zero() });
        // rational scalars bypass embeddings; |1/25| at 5 is 25 = 5^-(-2)
        assert_eq!(
            ctx.magnitude(&ExactScalar::from_rat(q(1, 25))).unwrap(),
            Magnitude::PPower { p: 5, exponent: rat_i64(-2) }
        );
    }

    #[test]
    fn scalar_json_roundtrip() {
        let s = ExactScalar::quadratic(q(1, 2), q(-3, 4), BigInt::from(5));
        let j = serde_json::to_string(&s).unwrap();
        let back: ExactScalar = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
        let r = ExactScalar::from_rat(q(7, 9));
        let j = serde_json::to_string(&r).unwrap();
        assert_eq!(j, "\"7/9\"");
    }
}
