//! Exact dense linear algebra over Q and its quadratic extensions, plus the
//! certified spectral toolbox: characteristic polynomials, eigenvalue-modulus
//! radii at real and p-adic places, operator norms, exterior powers, and
//! associative algebra closures.

use crate::scalars::{
    abs_at_place, rat_i64, ExactScalar, MagOrder, Magnitude, Place, PlaceCtx, Precision, Rat,
    ScalarError,
};
use num::bigint::BigInt;
use num::{Integer, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Dense square matrix with exact scalar entries, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QMatrix {
    d: usize,
    entries: Vec<ExactScalar>,
}

impl QMatrix {
    pub fn new(d: usize, entries: Vec<ExactScalar>) -> Self {
        assert_eq!(entries.len(), d * d);
        QMatrix { d, entries }
    }

    pub fn from_rows(rows: Vec<Vec<ExactScalar>>) -> Self {
        let d = rows.len();
        let mut entries = Vec::with_capacity(d * d);
        for r in rows {
            assert_eq!(r.len(), d, "square matrix required");
            entries.extend(r);
        }
        QMatrix { d, entries }
    }

    pub fn from_rat_rows(rows: Vec<Vec<Rat>>) -> Self {
        Self::from_rows(
            rows.into_iter()
                .map(|r| r.into_iter().map(ExactScalar::from_rat).collect())
                .collect(),
        )
    }

    pub fn from_i64_rows(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&n| ExactScalar::from_int(n)).collect())
                .collect(),
        )
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zero(d);
        for i in 0..d {
            m[(i, i)] = ExactScalar::one();
        }
        m
    }

    pub fn zero(d: usize) -> Self {
        QMatrix { d, entries: vec![ExactScalar::zero(); d * d] }
    }

    pub fn diagonal(diag: Vec<ExactScalar>) -> Self {
        let d = diag.len();
        let mut m = Self::zero(d);
        for (i, v) in diag.into_iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn entries(&self) -> &[ExactScalar] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    pub fn is_identity(&self) -> bool {
        self == &Self::identity(self.d)
    }

    pub fn is_scalar(&self) -> bool {
        let l = &self[(0, 0)];
        for i in 0..self.d {
            for j in 0..self.d {
                let want_zero = i != j;
                if want_zero && !self[(i, j)].is_zero() {
                    return false;
                }
                if !want_zero && &self[(i, j)] != l {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_upper_triangular(&self) -> bool {
        (0..self.d).all(|i| (0..i).all(|j| self[(i, j)].is_zero()))
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.d).all(|i| (i + 1..self.d).all(|j| self[(i, j)].is_zero()))
    }

    pub fn is_diagonal(&self) -> bool {
        self.is_upper_triangular() && self.is_lower_triangular()
    }

    pub fn is_rational(&self) -> bool {
        self.entries.iter().all(|e| e.is_rational())
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                m[(j, i)] = self[(i, j)].clone();
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        QMatrix {
            d: self.d,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        QMatrix {
            d: self.d,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn neg(&self) -> Self {
        QMatrix { d: self.d, entries: self.entries.iter().map(|a| -a.clone()).collect() }
    }

    pub fn scale(&self, c: &ExactScalar) -> Self {
        QMatrix { d: self.d, entries: self.entries.iter().map(|a| a * c).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let d = self.d;
        let mut out = Self::zero(d);
        for i in 0..d {
            for k in 0..d {
                let aik = &self[(i, k)];
                if aik.is_zero() {
                    continue;
                }
                for j in 0..d {
                    let t = aik * &other[(k, j)];
                    out[(i, j)] = &out[(i, j)] + &t;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[ExactScalar]) -> Vec<ExactScalar> {
        assert_eq!(v.len(), self.d);
        (0..self.d)
            .map(|i| {
                let mut acc = ExactScalar::zero();
                for j in 0..self.d {
                    acc = &acc + &(&self[(i, j)] * &v[j]);
                }
                acc
            })
            .collect()
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::identity(self.d);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    pub fn trace(&self) -> ExactScalar {
        let mut t = ExactScalar::zero();
        for i in 0..self.d {
            t = &t + &self[(i, i)];
        }
        t
    }

    /// Exact determinant by fraction-free-ish Gaussian elimination over the field.
    pub fn det(&self) -> ExactScalar {
        let mut m = self.clone();
        let d = self.d;
        let mut det = ExactScalar::one();
        for col in 0..d {
            let Some(p) = (col..d).find(|&r| !m[(r, col)].is_zero()) else {
                return ExactScalar::zero();
            };
            if p != col {
                m.swap_rows(p, col);
                det = -det;
            }
            let pivot = m[(col, col)].clone();
            det = &det * &pivot;
            let inv = pivot.inverse();
            for r in col + 1..d {
                let factor = &m[(r, col)] * &inv;
                if factor.is_zero() {
                    continue;
                }
                for c in col..d {
                    let t = &factor * &m[(col, c)];
                    m[(r, c)] = &m[(r, c)] - &t;
                }
            }
        }
        det
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.d {
            self.entries.swap(a * self.d + c, b * self.d + c);
        }
    }

    /// Exact inverse; `None` when singular.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.d;
        let mut m = self.clone();
        let mut inv = Self::identity(d);
        for col in 0..d {
            let p = (col..d).find(|&r| !m[(r, col)].is_zero())?;
            m.swap_rows(p, col);
            inv.swap_rows(p, col);
            let scale = m[(col, col)].inverse();
            for c in 0..d {
                m[(col, c)] = &m[(col, c)] * &scale;
                inv[(col, c)] = &inv[(col, c)] * &scale;
            }
            for r in 0..d {
                if r == col || m[(r, col)].is_zero() {
                    continue;
                }
                let f = m[(r, col)].clone();
                for c in 0..d {
                    let t1 = &f * &m[(col, c)];
                    m[(r, c)] = &m[(r, c)] - &t1;
                    let t2 = &f * &inv[(col, c)];
                    inv[(r, c)] = &inv[(r, c)] - &t2;
                }
            }
        }
        Some(inv)
    }

    /// h a h^-1.
    pub fn conjugate_by(&self, h: &Self) -> Option<Self> {
        let hi = h.inverse()?;
        Some(h.mul(self).mul(&hi))
    }

    /// A nonzero kernel vector, or `None` when the matrix is injective.
    pub fn kernel_vector(&self) -> Option<Vec<ExactScalar>> {
        let d = self.d;
        let mut m = self.clone();
        // Reduced row echelon form, tracking pivot columns.
        let mut pivots: Vec<usize> = Vec::new();
        let mut row = 0;
        for col in 0..d {
            let Some(p) = (row..d).find(|&r| !m[(r, col)].is_zero()) else {
                continue;
            };
            m.swap_rows(p, row);
            let scale = m[(row, col)].inverse();
            for c in 0..d {
                m[(row, c)] = &m[(row, c)] * &scale;
            }
            for r in 0..d {
                if r == row || m[(r, col)].is_zero() {
                    continue;
                }
                let f = m[(r, col)].clone();
                for c in 0..d {
                    let t = &f * &m[(row, c)];
                    m[(r, c)] = &m[(r, c)] - &t;
                }
            }
            pivots.push(col);
            row += 1;
            if row == d {
                break;
            }
        }
        // First free column gives a kernel vector.
        let free = (0..d).find(|c| !pivots.contains(c))?;
        let mut v = vec![ExactScalar::zero(); d];
        v[free] = ExactScalar::one();
        for (ri, &pc) in pivots.iter().enumerate() {
            v[pc] = -m[(ri, free)].clone();
        }
        Some(v)
    }
}

impl std::ops::Index<(usize, usize)> for QMatrix {
    type Output = ExactScalar;
    fn index(&self, (i, j): (usize, usize)) -> &ExactScalar {
        &self.entries[i * self.d + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for QMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut ExactScalar {
        &mut self.entries[i * self.d + j]
    }
}

impl fmt::Display for QMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.d {
            write!(f, "[")?;
            for j in 0..self.d {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self[(i, j)])?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Polynomials over the exact scalars
// ---------------------------------------------------------------------------

/// Dense univariate polynomial, little-endian coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    pub coeffs: Vec<ExactScalar>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<ExactScalar>) -> Self {
        while coeffs.len() > 1 && coeffs.last().map(|c| c.is_zero()).unwrap_or(false) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(ExactScalar::zero());
        }
        Poly { coeffs }
    }

    pub fn from_rat(coeffs: Vec<Rat>) -> Self {
        Self::new(coeffs.into_iter().map(ExactScalar::from_rat).collect())
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![ExactScalar::zero()] }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> &ExactScalar {
        self.coeffs.last().expect("nonempty")
    }

    pub fn eval(&self, x: &ExactScalar) -> ExactScalar {
        let mut acc = ExactScalar::zero();
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * x) + c;
        }
        acc
    }

    pub fn eval_rat(&self, x: &Rat) -> ExactScalar {
        self.eval(&ExactScalar::from_rat(x.clone()))
    }

    pub fn derivative(&self) -> Poly {
        if self.degree() == 0 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * &ExactScalar::from_int(i as i64))
                .collect(),
        )
    }

    /// Euclidean division: self = q * div + r with deg r < deg div.
    pub fn divmod(&self, div: &Poly) -> (Poly, Poly) {
        assert!(!div.is_zero(), "division by zero polynomial");
        let mut rem = self.coeffs.clone();
        let dd = div.degree();
        if self.degree() < dd || self.is_zero() {
            return (Poly::zero(), self.clone());
        }
        let mut q = vec![ExactScalar::zero(); self.degree() - dd + 1];
        let lead_inv = div.leading().inverse();
        for k in (0..q.len()).rev() {
            let c = &rem[k + dd] * &lead_inv;
            if c.is_zero() {
                continue;
            }
            q[k] = c.clone();
            for (i, dc) in div.coeffs.iter().enumerate() {
                let t = &c * dc;
                rem[k + i] = &rem[k + i] - &t;
            }
        }
        (Poly::new(q), Poly::new(rem))
    }

    /// Monic gcd over the coefficient field.
    pub fn gcd(&self, other: &Poly) -> Poly {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.divmod(&b);
            a = b;
            b = r;
        }
        if a.is_zero() {
            return a;
        }
        let inv = a.leading().inverse();
        Poly::new(a.coeffs.iter().map(|c| c * &inv).collect())
    }

    /// self / gcd(self, self'): same roots, all simple.
    pub fn squarefree_part(&self) -> Poly {
        if self.degree() == 0 {
            return self.clone();
        }
        let g = self.gcd(&self.derivative());
        if g.degree() == 0 {
            return self.clone();
        }
        let (q, r) = self.divmod(&g);
        debug_assert!(r.is_zero());
        q
    }

    pub fn is_rational(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_rational())
    }

    /// Cauchy root bound: 1 + max |c_i| / |lead| (upper rational bound).
    pub fn cauchy_bound(&self, prec: Precision) -> Rat {
        let lead_mag = abs_at_place(self.leading(), Place::Real, prec)
            .expect("real magnitude")
            .lower_rat();
        assert!(lead_mag.is_positive(), "leading coefficient must be nonzero");
        let mut best = Rat::zero();
        for c in &self.coeffs[..self.coeffs.len() - 1] {
            let m = abs_at_place(c, Place::Real, prec).expect("real magnitude").upper_rat();
            if m > best {
                best = m;
            }
        }
        Rat::one() + best / lead_mag
    }
}

// ---------------------------------------------------------------------------
// Characteristic polynomial and power sums
// ---------------------------------------------------------------------------

/// Monic characteristic polynomial det(xI - a) by the Faddeev-LeVerrier
/// recurrence (division-free in the matrix, exact over the field).
pub fn char_poly(a: &QMatrix) -> Poly {
    let d = a.dim();
    let mut coeffs = vec![ExactScalar::zero(); d + 1];
    coeffs[d] = ExactScalar::one();
    let mut m = QMatrix::identity(d);
    for k in 1..=d {
        let am = a.mul(&m);
        let c = -(am.trace() / ExactScalar::from_int(k as i64));
        coeffs[d - k] = c.clone();
        m = am.add(&QMatrix::identity(d).scale(&c));
    }
    Poly::new(coeffs)
}

/// Power sums s_k = sum of k-th powers of the roots of a monic polynomial,
/// k = 1..=count, via Newton's identities and the linear recurrence.
pub fn power_sums_from_charpoly(p: &Poly, count: usize) -> Vec<ExactScalar> {
    let d = p.degree();
    assert!(p.leading().is_one(), "monic polynomial required");
    let a = |i: usize| -> &ExactScalar { &p.coeffs[i] }; // coefficient of x^i
    let mut s: Vec<ExactScalar> = Vec::with_capacity(count + 1);
    s.push(ExactScalar::from_int(d as i64)); // s_0
    for k in 1..=count {
        let mut acc = ExactScalar::zero();
        if k <= d {
            // s_k = -k a_{d-k} - sum_{i=1}^{k-1} a_{d-i} s_{k-i}
            for i in 1..k {
                acc = &acc + &(a(d - i) * &s[k - i]);
            }
            let t = a(d - k) * &ExactScalar::from_int(k as i64);
            s.push(-(acc + t));
        } else {
            for i in 1..=d {
                acc = &acc + &(a(d - i) * &s[k - i]);
            }
            s.push(-acc);
        }
    }
    s.remove(0);
    s
}

/// Monic polynomial of degree `n` with prescribed power sums s_1..s_n
/// (Newton's identities in reverse).
pub fn poly_from_power_sums(s: &[ExactScalar]) -> Poly {
    let n = s.len();
    // e_0 = 1; k e_k = sum_{i=1}^k (-1)^(i-1) e_{k-i} s_i
    let mut e: Vec<ExactScalar> = Vec::with_capacity(n + 1);
    e.push(ExactScalar::one());
    for k in 1..=n {
        let mut acc = ExactScalar::zero();
        for i in 1..=k {
            let term = &e[k - i] * &s[i - 1];
            if i % 2 == 1 {
                acc = &acc + &term;
            } else {
                acc = acc - term;
            }
        }
        e.push(acc / ExactScalar::from_int(k as i64));
    }
    // p(y) = sum_k (-1)^k e_k y^(n-k)
    let mut coeffs = vec![ExactScalar::zero(); n + 1];
    for (k, ek) in e.into_iter().enumerate() {
        coeffs[n - k] = if k % 2 == 0 { ek } else { -ek };
    }
    Poly::new(coeffs)
}

// ---------------------------------------------------------------------------
// Sturm isolation of the largest real root
// ---------------------------------------------------------------------------

struct SturmChain {
    polys: Vec<Poly>,
}

impl SturmChain {
    fn new(squarefree: &Poly) -> Self {
        let mut polys = vec![squarefree.clone(), squarefree.derivative()];
        loop {
            let n = polys.len();
            if polys[n - 1].is_zero() {
                polys.pop();
                break;
            }
            if polys[n - 1].degree() == 0 {
                break;
            }
            let (_, r) = polys[n - 2].divmod(&polys[n - 1]);
            if r.is_zero() {
                break;
            }
            // Normalize by the positive scalar 1/|lead| to curb growth.
            let lead_abs = r.leading().abs();
            let inv = lead_abs.inverse();
            let neg = Poly::new(r.coeffs.iter().map(|c| -(c * &inv)).collect());
            polys.push(neg);
        }
        SturmChain { polys }
    }

    fn variations_at(&self, x: &Rat) -> usize {
        let mut count = 0;
        let mut last = 0i32;
        for p in &self.polys {
            let s = p.eval_rat(x).signum();
            if s == 0 {
                continue;
            }
            if last != 0 && s != last {
                count += 1;
            }
            last = s;
        }
        count
    }

    /// Number of distinct real roots in (a, b].
    fn roots_in(&self, a: &Rat, b: &Rat) -> usize {
        let va = self.variations_at(a);
        let vb = self.variations_at(b);
        va.saturating_sub(vb)
    }
}

/// Location of the largest real root of a polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RootLocation {
    /// No real roots.
    NoRealRoot,
    /// Exact value (certified by evaluation).
    Exact(ExactScalar),
    /// Certified open bracket (lo, hi] containing exactly the largest real root.
    Bracket { lo: Rat, hi: Rat },
}

/// Certified largest real root. For rational polynomials, capped trial
/// factoring recovers an exact rational answer when the top root is rational;
/// otherwise a Sturm bracket of relative width about 2^-bits is returned.
pub fn largest_real_root(p: &Poly, bits: u32) -> RootLocation {
    assert!(!p.is_zero());
    if p.degree() == 0 {
        return RootLocation::NoRealRoot;
    }
    let sf = p.squarefree_part();
    let prec = Precision::default();

    // Fast path: known rational roots, largest one checked against the rest.
    let rational_roots = if sf.is_rational() { rational_roots_capped(&sf) } else { None };

    let chain = SturmChain::new(&sf);
    let bound = sf.cauchy_bound(prec);
    let lo_start = -&bound - Rat::one();
    let total = chain.roots_in(&lo_start, &bound);
    if total == 0 {
        return RootLocation::NoRealRoot;
    }

    if let Some(roots) = rational_roots {
        if let Some(top) = roots.iter().max() {
            // Exact iff no real root lies strictly above `top`.
            if chain.roots_in(top, &bound) == 0 {
                return RootLocation::Exact(ExactScalar::from_rat(top.clone()));
            }
        }
    }

    // d = 2 quadratic formula (coefficients in one field, discriminant rational).
    if sf.degree() == 2 {
        if let Some(loc) = quadratic_top_root(&sf) {
            return loc;
        }
    }

    // Bisect a bracket (lo, hi] around the largest root.
    let mut lo = lo_start;
    let mut hi = bound;
    loop {
        // Stop when narrow enough relative to the magnitude.
        let width = &hi - &lo;
        let scale = Rat::one().max(hi.clone().abs());
        if &width * (Rat::from_integer(BigInt::one() << bits)) <= scale {
            break;
        }
        let mid = (&lo + &hi) / rat_i64(2);
        if chain.roots_in(&mid, &hi) >= 1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    RootLocation::Bracket { lo, hi }
}

/// Largest root of a degree-2 polynomial when the discriminant is rational:
/// exact value in the quadratic field.
fn quadratic_top_root(p: &Poly) -> Option<RootLocation> {
    let c = &p.coeffs[0];
    let b = &p.coeffs[1];
    let a = &p.coeffs[2];
    let ai = a.inverse();
    let b = b * &ai;
    let c = c * &ai;
    // x^2 + b x + c; disc = b^2 - 4c
    let disc = &(&b * &b) - &(&c * &ExactScalar::from_int(4));
    match disc.signum() {
        s if s < 0 => Some(RootLocation::NoRealRoot),
        _ => {
            let sq = disc.sqrt_exact()?;
            let half = ExactScalar::from_rat(Rat::new(BigInt::one(), BigInt::from(2)));
            let root = (&sq - &b) * half;
            Some(RootLocation::Exact(root))
        }
    }
}

/// All rational roots of a rational polynomial, when the divisor enumeration
/// stays under a budget; `None` when the budget is blown.
fn rational_roots_capped(p: &Poly) -> Option<Vec<Rat>> {
    // Clear denominators to an integer polynomial.
    let mut lcm = BigInt::one();
    for c in &p.coeffs {
        let den = c.as_rat().expect("rational poly").denom().clone();
        lcm = lcm.lcm(&den);
    }
    let ints: Vec<BigInt> = p
        .coeffs
        .iter()
        .map(|c| {
            let r = c.as_rat().unwrap() * Rat::from_integer(lcm.clone());
            debug_assert!(r.denom().is_one());
            r.to_integer()
        })
        .collect();
    // Strip trailing zero coefficients (roots at 0).
    let mut low = 0;
    while low < ints.len() - 1 && ints[low].is_zero() {
        low += 1;
    }
    let mut roots: Vec<Rat> = Vec::new();
    if low > 0 {
        roots.push(Rat::zero());
    }
    let body = &ints[low..];
    if body.len() == 1 {
        return Some(roots);
    }
    let c0 = body[0].abs();
    let cl = body.last().unwrap().abs();
    let dn = divisors_capped(&c0, 2000)?;
    let dl = divisors_capped(&cl, 2000)?;
    if dn.len() * dl.len() > 20_000 {
        return None;
    }
    let evali = |x: &Rat| -> bool {
        let mut acc = Rat::zero();
        for c in body.iter().rev() {
            acc = acc * x + Rat::from_integer(c.clone());
        }
        acc.is_zero()
    };
    for n in &dn {
        for q in &dl {
            let cand = Rat::new(n.clone(), q.clone());
            if evali(&cand) {
                roots.push(cand.clone());
            }
            let neg = -cand;
            if evali(&neg) {
                roots.push(neg);
            }
        }
    }
    roots.sort();
    roots.dedup();
    Some(roots)
}

/// Positive divisors via trial division with small-prime-power factorization;
/// `None` when the cofactor cannot be fully factored cheaply or the divisor
/// count explodes.
fn divisors_capped(n: &BigInt, cap: usize) -> Option<Vec<BigInt>> {
    assert!(!n.is_negative());
    if n.is_zero() {
        // Zero constant term was stripped by the caller; treat remaining zero
        // leading/constant defensively: only divisor needed is 1.
        return Some(vec![BigInt::one()]);
    }
    let mut m = n.clone();
    let mut factors: Vec<(BigInt, u32)> = Vec::new();
    let mut p = BigInt::from(2);
    let limit = BigInt::from(100_000u64);
    while &p * &p <= m && p <= limit {
        if (&m % &p).is_zero() {
            let mut e = 0u32;
            while (&m % &p).is_zero() {
                m /= &p;
                e += 1;
            }
            factors.push((p.clone(), e));
        }
        p += 1;
    }
    if m > BigInt::one() {
        if &p * &p <= m {
            return None; // unfactored large cofactor (not provably prime cheaply)
        }
        factors.push((m, 1));
    }
    let mut divs = vec![BigInt::one()];
    for (f, e) in factors {
        let mut next = Vec::with_capacity(divs.len() * (e as usize + 1));
        for d in &divs {
            let mut cur = d.clone();
            next.push(cur.clone());
            for _ in 0..e {
                cur = &cur * &f;
                next.push(cur.clone());
            }
        }
        divs = next;
        if divs.len() > cap {
            return None;
        }
    }
    divs.sort();
    Some(divs)
}

// ---------------------------------------------------------------------------
// Spectral values
// ---------------------------------------------------------------------------

/// A certified nonnegative spectral quantity: a magnitude, plus the exact
/// field element when one is representable.
#[derive(Debug, Clone)]
pub struct SpectralValue {
    pub exact: Option<ExactScalar>,
    pub magnitude: Magnitude,
}

impl SpectralValue {
    pub fn zero() -> Self {
        SpectralValue { exact: Some(ExactScalar::zero()), magnitude: Magnitude::Zero }
    }

    pub fn from_exact(s: ExactScalar, prec: Precision) -> Self {
        let magnitude = abs_at_place(&s, Place::Real, prec).expect("real magnitude");
        SpectralValue { exact: Some(s), magnitude }
    }

    pub fn from_magnitude(m: Magnitude) -> Self {
        let exact = match &m {
            Magnitude::Zero => Some(ExactScalar::zero()),
            Magnitude::RealInterval { lo, hi } if lo == hi => {
                Some(ExactScalar::from_rat(lo.clone()))
            }
            _ => None,
        };
        SpectralValue { exact, magnitude: m }
    }

    /// Refresh the magnitude from the exact value at higher precision.
    pub fn refined(&self, bits: u32) -> Self {
        match &self.exact {
            Some(s) => SpectralValue::from_exact(s.clone(), Precision { bits, cap: bits.max(4096) }),
            None => self.clone(),
        }
    }
}

/// Errors from spectral computations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpectralError {
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("spectral radius interval could not be separated at the precision cap")]
    Unseparated,
}

pub type SpectralResult<T> = Result<T, SpectralError>;

/// Largest eigenvalue modulus of `a` at the context's place, certified.
///
/// Real place: largest real root of the polynomial whose roots are all
/// pairwise products of eigenvalues (its top real root is the squared radius),
/// with exact fast paths for triangular matrices and quadratic fields.
/// Finite place: Newton polygon of the characteristic polynomial.
pub fn spectral_radius(a: &QMatrix, ctx: &mut PlaceCtx) -> SpectralResult<SpectralValue> {
    spectral_radius_bits(a, ctx, 96)
}

pub fn spectral_radius_bits(
    a: &QMatrix,
    ctx: &mut PlaceCtx,
    bits: u32,
) -> SpectralResult<SpectralValue> {
    match ctx.place {
        Place::Real => real_spectral_radius(a, ctx.prec, bits),
        Place::Finite { p } => {
            let vals = finite_eigenvalue_valuations(a, ctx)?;
            match vals.first() {
                None => Ok(SpectralValue {
                    exact: Some(ExactScalar::zero()),
                    magnitude: Magnitude::Zero,
                }),
                Some(v) => Ok(SpectralValue {
                    exact: None,
                    magnitude: Magnitude::PPower { p, exponent: v.clone() },
                }),
            }
        }
    }
}

/// Eigenvalue valuations at a finite place, ascending (largest magnitude
/// first), with multiplicity, from the Newton polygon of the characteristic
/// polynomial. Zero eigenvalues are omitted.
pub fn finite_eigenvalue_valuations(a: &QMatrix, ctx: &mut PlaceCtx) -> SpectralResult<Vec<Rat>> {
    assert!(ctx.is_finite());
    let cp = char_poly(a);
    // Points (i, v(c_i)) for nonzero coefficients.
    let mut pts: Vec<(usize, Rat)> = Vec::new();
    for (i, c) in cp.coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let v = ctx.valuation(c)?.expect("nonzero coefficient");
        pts.push((i, v));
    }
    // Lowest i = number of zero roots; polygon runs from first point to (d, 0).
    let mut slopes: Vec<Rat> = Vec::new();
    let mut idx = 0usize;
    while idx + 1 < pts.len() {
        // Find the next hull vertex: minimal slope, ties broken by distance.
        let (i0, v0) = pts[idx].clone();
        let mut best: Option<(usize, Rat)> = None;
        for (j, (i1, v1)) in pts.iter().enumerate().skip(idx + 1) {
            let slope = (v1 - &v0) / Rat::from_integer(BigInt::from((i1 - i0) as i64));
            match &best {
                None => best = Some((j, slope)),
                Some((_, s)) => {
                    if slope < *s || (slope == *s && true) {
                        // On ties prefer the farther point (same hull edge).
                        if slope <= *s {
                            best = Some((j, slope));
                        }
                    }
                }
            }
        }
        let (jnext, slope) = best.expect("at least two points");
        let len = pts[jnext].0 - i0;
        for _ in 0..len {
            // Roots on this segment have valuation = -slope.
            slopes.push(-slope.clone());
        }
        idx = jnext;
    }
    slopes.sort();
    Ok(slopes)
}

fn real_spectral_radius(a: &QMatrix, prec: Precision, bits: u32) -> SpectralResult<SpectralValue> {
    let d = a.dim();
    // Triangular fast path: eigenvalues are the diagonal entries.
    if a.is_upper_triangular() || a.is_lower_triangular() {
        let mut best: Option<ExactScalar> = None;
        for i in 0..d {
            let v = a[(i, i)].abs();
            best = Some(match best {
                None => v,
                Some(b) => {
                    if v.cmp_real(&b) == std::cmp::Ordering::Greater {
                        v
                    } else {
                        b
                    }
                }
            });
        }
        return Ok(SpectralValue::from_exact(best.expect("d >= 1"), prec));
    }
    if d == 2 {
        if let Some(sv) = two_by_two_radius(a, prec)? {
            return Ok(sv);
        }
    }
    // General route: R(y) has roots {z_i z_j}; its largest real root is the
    // squared spectral radius.
    let cp = char_poly(a);
    let s = power_sums_from_charpoly(&cp, d * d);
    let sq: Vec<ExactScalar> = s.iter().map(|t| t * t).collect();
    let r = poly_from_power_sums(&sq);
    match largest_real_root(&r, bits) {
        RootLocation::NoRealRoot => unreachable!("squared radius is a real root"),
        RootLocation::Exact(v) => {
            debug_assert!(v.signum() >= 0);
            match v.sqrt_exact() {
                Some(root) => Ok(SpectralValue::from_exact(root, prec)),
                None => {
                    let m = abs_at_place(&v, Place::Real, prec)?;
                    Ok(SpectralValue { exact: None, magnitude: m.nth_root(2, bits) })
                }
            }
        }
        RootLocation::Bracket { lo, hi } => {
            let lo = lo.max(Rat::zero());
            let m = Magnitude::interval(lo, hi).nth_root(2, bits);
            Ok(SpectralValue { exact: None, magnitude: m })
        }
    }
}

/// Exact 2x2 real spectral radius via the quadratic formula when the
/// discriminant's square root stays representable.
fn two_by_two_radius(a: &QMatrix, prec: Precision) -> SpectralResult<Option<SpectralValue>> {
    let t = a.trace();
    let n = a.det();
    let disc = &(&t * &t) - &(&n * &ExactScalar::from_int(4));
    match disc.signum() {
        s if s < 0 => {
            // Complex pair: |z|^2 = det > 0.
            let sq = n.abs().sqrt_exact();
            match sq {
                Some(v) => Ok(Some(SpectralValue::from_exact(v, prec))),
                None => Ok(None),
            }
        }
        _ => match disc.sqrt_exact() {
            None => Ok(None),
            Some(sq) => {
                let half = ExactScalar::from_rat(Rat::new(BigInt::one(), BigInt::from(2)));
                let l1 = (&t + &sq) * half.clone();
                let l2 = (&t - &sq) * half;
                let m1 = l1.abs();
                let m2 = l2.abs();
                let top = if m1.cmp_real(&m2) == std::cmp::Ordering::Less { m2 } else { m1 };
                Ok(Some(SpectralValue::from_exact(top, prec)))
            }
        },
    }
}

/// All d compound radii: Lambda_j = spectral radius of the j-th exterior
/// power, j = 1..=d.
pub fn compound_radii(a: &QMatrix, ctx: &mut PlaceCtx) -> SpectralResult<Vec<SpectralValue>> {
    let d = a.dim();
    let mut out = Vec::with_capacity(d);
    for j in 1..=d {
        let w = exterior_power(a, j);
        out.push(spectral_radius(&w, ctx)?);
    }
    Ok(out)
}

/// k-th largest eigenvalue modulus (1-indexed), via compound ratios at the
/// real place and the Newton polygon at finite places.
pub fn eigenvalue_modulus(a: &QMatrix, k: usize, ctx: &mut PlaceCtx) -> SpectralResult<SpectralValue> {
    assert!(k >= 1 && k <= a.dim());
    match ctx.place {
        Place::Finite { p } => {
            let vals = finite_eigenvalue_valuations(a, ctx)?;
            if k > vals.len() {
                return Ok(SpectralValue::zero());
            }
            Ok(SpectralValue {
                exact: None,
                magnitude: Magnitude::PPower { p, exponent: vals[k - 1].clone() },
            })
        }
        Place::Real => {
            if k == 1 {
                return spectral_radius(a, ctx);
            }
            let wk = exterior_power(a, k);
            let wk1 = exterior_power(a, k - 1);
            let num = spectral_radius(&wk, ctx)?;
            let den = spectral_radius(&wk1, ctx)?;
            let exact = match (&num.exact, &den.exact) {
                (Some(n), Some(d)) if !d.is_zero() && compatible_fields(n, d) => {
                    Some(n.clone() / d.clone())
                }
                _ => None,
            };
            let magnitude = match den.magnitude.inverse() {
                Ok(inv) => num.magnitude.checked_mul(&inv).map_err(SpectralError::Scalar)?,
                Err(_) => Magnitude::Zero, // denominator zero: eigenvalue 0
            };
            match &exact {
                Some(e) => Ok(SpectralValue::from_exact(e.clone(), ctx.prec)),
                None => Ok(SpectralValue { exact, magnitude }),
            }
        }
    }
}

fn compatible_fields(a: &ExactScalar, b: &ExactScalar) -> bool {
    match (a.radicand(), b.radicand()) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

// ---------------------------------------------------------------------------
// Operator norms
// ---------------------------------------------------------------------------

/// Certified operator norm at the context's place. Real place: spectral norm
/// (largest singular value, from the top eigenvalue of a^T a). Finite place:
/// maximum entry magnitude (the sup-norm operator norm on Q_p^d).
pub fn op_norm(a: &QMatrix, ctx: &mut PlaceCtx) -> SpectralResult<SpectralValue> {
    op_norm_bits(a, ctx, 96)
}

pub fn op_norm_bits(a: &QMatrix, ctx: &mut PlaceCtx, bits: u32) -> SpectralResult<SpectralValue> {
    match ctx.place {
        Place::Finite { .. } => {
            let mut best = Magnitude::Zero;
            for e in a.entries() {
                let m = ctx.magnitude(e)?;
                best = best.max(&m)?;
            }
            Ok(SpectralValue { exact: None, magnitude: best })
        }
        Place::Real => {
            let s = a.transpose().mul(a);
            let cp = char_poly(&s);
            match largest_real_root(&cp, bits) {
                RootLocation::NoRealRoot => {
                    // a^T a is symmetric PSD; only the zero matrix lacks
                    // positive eigenvalues after the root search, so norm 0.
                    Ok(SpectralValue::zero())
                }
                RootLocation::Exact(v) => match v.sqrt_exact() {
                    Some(root) => Ok(SpectralValue::from_exact(root, ctx.prec)),
                    None => {
                        let m = abs_at_place(&v, Place::Real, ctx.prec)?;
                        Ok(SpectralValue { exact: None, magnitude: m.nth_root(2, bits) })
                    }
                },
                RootLocation::Bracket { lo, hi } => {
                    let lo = lo.max(Rat::zero());
                    Ok(SpectralValue {
                        exact: None,
                        magnitude: Magnitude::interval(lo, hi).nth_root(2, bits),
                    })
                }
            }
        }
    }
}

/// Norm of the inverse; error context when singular is the caller's concern.
pub fn op_norm_inverse(a: &QMatrix, ctx: &mut PlaceCtx) -> SpectralResult<Option<SpectralValue>> {
    match a.inverse() {
        None => Ok(None),
        Some(inv) => Ok(Some(op_norm(&inv, ctx)?)),
    }
}

// ---------------------------------------------------------------------------
// Exterior powers
// ---------------------------------------------------------------------------

/// Lexicographically ordered j-element subsets of {0..d-1}.
pub fn lex_subsets(d: usize, j: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(j);
    fn rec(d: usize, j: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == j {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(d, j, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(d, j, 0, &mut cur, &mut out);
    out
}

/// j-th exterior power: entries are j x j minors, rows/columns indexed by
/// lex-sorted subsets.
pub fn exterior_power(a: &QMatrix, j: usize) -> QMatrix {
    let d = a.dim();
    assert!(j >= 1 && j <= d);
    if j == 1 {
        return a.clone();
    }
    let subsets = lex_subsets(d, j);
    let n = subsets.len();
    let mut out = QMatrix::zero(n);
    for (ri, rows) in subsets.iter().enumerate() {
        for (ci, cols) in subsets.iter().enumerate() {
            let mut sub = QMatrix::zero(j);
            for (si, &r) in rows.iter().enumerate() {
                for (sj, &c) in cols.iter().enumerate() {
                    sub[(si, sj)] = a[(r, c)].clone();
                }
            }
            out[(ri, ci)] = sub.det();
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Algebra closure and nilpotency
// ---------------------------------------------------------------------------

/// The associative algebra (no unit adjoined) spanned by all products of one
/// or more generators.
#[derive(Debug, Clone)]
pub struct AlgebraClosure {
    /// Basis matrices, in deterministic construction order.
    pub basis: Vec<QMatrix>,
    /// Linear dimension, at most d^2.
    pub dim: usize,
    /// Whether every long enough product vanishes.
    pub nilpotent: bool,
    /// Least k with every product of k generators of the algebra zero.
    pub nilpotency_index: Option<usize>,
}

/// Row-echelon accumulator over the scalar field for d x d matrices viewed as
/// vectors of length d^2.
struct SpanBuilder {
    d: usize,
    /// Echelonized rows with their pivot positions.
    rows: Vec<(usize, Vec<ExactScalar>)>,
}

impl SpanBuilder {
    fn new(d: usize) -> Self {
        SpanBuilder { d, rows: Vec::new() }
    }

    fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Reduce and insert; returns true when the matrix enlarged the span.
    fn insert(&mut self, m: &QMatrix) -> bool {
        assert_eq!(m.dim(), self.d);
        let mut v: Vec<ExactScalar> = m.entries().to_vec();
        for (pivot, row) in &self.rows {
            if v[*pivot].is_zero() {
                continue;
            }
            let f = v[*pivot].clone();
            for (i, r) in row.iter().enumerate() {
                let t = &f * r;
                v[i] = &v[i] - &t;
            }
        }
        let Some(pivot) = v.iter().position(|c| !c.is_zero()) else {
            return false;
        };
        let inv = v[pivot].inverse();
        for c in v.iter_mut() {
            *c = &*c * &inv;
        }
        self.rows.push((pivot, v));
        true
    }

    fn contains(&self, m: &QMatrix) -> bool {
        let mut v: Vec<ExactScalar> = m.entries().to_vec();
        for (pivot, row) in &self.rows {
            if v[*pivot].is_zero() {
                continue;
            }
            let f = v[*pivot].clone();
            for (i, r) in row.iter().enumerate() {
                let t = &f * r;
                v[i] = &v[i] - &t;
            }
        }
        v.iter().all(|c| c.is_zero())
    }
}

/// Closure of the span of all products of >= 1 generators, with nilpotency of
/// the resulting algebra (index capped at d+1, enough for subalgebras of d x d
/// matrices).
pub fn algebra_closure(generators: &[QMatrix]) -> AlgebraClosure {
    assert!(!generators.is_empty());
    let d = generators[0].dim();
    let mut span = SpanBuilder::new(d);
    let mut basis: Vec<QMatrix> = Vec::new();
    for g in generators {
        assert_eq!(g.dim(), d);
        if span.insert(g) {
            basis.push(g.clone());
        }
    }
    // Closure under right multiplication by generators.
    let mut frontier = basis.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for b in &frontier {
            for g in generators {
                let prod = b.mul(g);
                if span.insert(&prod) {
                    next.push(prod.clone());
                    basis.push(prod);
                }
            }
        }
        frontier = next;
        if span.dim() == d * d {
            break;
        }
    }
    let dim = span.dim();

    // Nilpotency: powers of the algebra as subspaces; A^(k+1) spanned by
    // b * g over basis of A^k and generators.
    let mut nilpotent = false;
    let mut index = None;
    let mut layer: Vec<QMatrix> = basis.clone();
    for k in 1..=d + 1 {
        if layer.iter().all(|m| m.is_zero()) {
            nilpotent = true;
            index = Some(k);
            break;
        }
        let mut next_span = SpanBuilder::new(d);
        let mut next_basis: Vec<QMatrix> = Vec::new();
        for b in &layer {
            for g in generators {
                let prod = b.mul(g);
                if next_span.insert(&prod) {
                    next_basis.push(prod);
                }
            }
        }
        layer = next_basis;
    }
    if !nilpotent && layer.iter().all(|m| m.is_zero()) {
        nilpotent = true;
        index = Some(d + 2);
    }

    AlgebraClosure { basis, dim, nilpotent, nilpotency_index: index }
}

/// A single matrix is nilpotent iff its characteristic polynomial is x^d.
pub fn is_nilpotent_matrix(a: &QMatrix) -> bool {
    let cp = char_poly(a);
    cp.coeffs[..cp.degree()].iter().all(|c| c.is_zero())
}

/// Whether the span check `m in algebra` holds.
pub fn algebra_contains(closure: &AlgebraClosure, m: &QMatrix) -> bool {
    let d = m.dim();
    let mut span = SpanBuilder::new(d);
    for b in &closure.basis {
        span.insert(b);
    }
    span.contains(m)
}

// ---------------------------------------------------------------------------
// Spectral gap tests
// ---------------------------------------------------------------------------

/// Certified check of Lambda_j^2 >= 2 * Lambda_{j-1} * Lambda_{j+1}
/// (the compound-ratio gap at index j), escalating precision on demand.
pub fn compound_gap_at(
    a: &QMatrix,
    j: usize,
    ctx: &mut PlaceCtx,
) -> SpectralResult<bool> {
    let d = a.dim();
    assert!(j >= 1 && j < d);
    let mut bits = 96u32;
    loop {
        let lam_j = radius_of_compound(a, j, ctx, bits)?;
        let lam_jm = if j == 1 {
            Magnitude::one_at(ctx.place)
        } else {
            radius_of_compound(a, j - 1, ctx, bits)?.magnitude
        };
        let lam_jp = radius_of_compound(a, j + 1, ctx, bits)?.magnitude;
        let lhs = lam_j.magnitude.pow(2);
        let rhs_inner = lam_jm.checked_mul(&lam_jp).map_err(SpectralError::Scalar)?;
        let two = match ctx.place {
            Place::Real => Magnitude::point(rat_i64(2)),
            Place::Finite { .. } => {
                // At finite places magnitudes are exact powers; a factor-2 gap
                // means strict inequality of exponents.
                return match lhs.compare(&rhs_inner).map_err(SpectralError::Scalar)? {
                    MagOrder::Greater => Ok(true),
                    _ => Ok(false),
                };
            }
        };
        let rhs = two.checked_mul(&rhs_inner).map_err(SpectralError::Scalar)?;
        match lhs.compare(&rhs).map_err(SpectralError::Scalar)? {
            MagOrder::Greater | MagOrder::Equal => return Ok(true),
            MagOrder::Less => return Ok(false),
            MagOrder::Inconclusive => {
                if bits >= 4096 {
                    return Err(SpectralError::Unseparated);
                }
                bits *= 2;
            }
        }
    }
}

fn radius_of_compound(
    a: &QMatrix,
    j: usize,
    ctx: &mut PlaceCtx,
    bits: u32,
) -> SpectralResult<SpectralValue> {
    let w = if j == 1 { a.clone() } else { exterior_power(a, j) };
    let sv = spectral_radius_bits(&w, ctx, bits)?;
    Ok(match &sv.exact {
        Some(e) if !ctx.is_finite() => {
            SpectralValue::from_exact(e.clone(), Precision { bits, cap: bits.max(4096) })
        }
        _ => sv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalars::rat;

    fn q(n: i64, d: i64) -> Rat {
        rat(n, d)
    }

    fn mat2(a: i64, b: i64, c: i64, d: i64) -> QMatrix {
        QMatrix::from_i64_rows(&[&[a, b], &[c, d]])
    }

    fn mat2q(rows: [[Rat; 2]; 2]) -> QMatrix {
        QMatrix::from_rat_rows(rows.into_iter().map(|r| r.to_vec()).collect())
    }

    #[test]
    fn matrix_basics() {
        let a = mat2(1, 1, 0, 1);
        let b = mat2(1, 0, 1, 1);
        let ab = a.mul(&b);
        assert_eq!(ab, mat2(2, 1, 1, 1));
        assert_eq!(a.det(), ExactScalar::one());
        assert_eq!(a.trace(), ExactScalar::from_int(2));
        let ai = a.inverse().unwrap();
        assert_eq!(a.mul(&ai), QMatrix::identity(2));
        assert_eq!(ai, mat2(1, -1, 0, 1));
        assert_eq!(a.pow(5), mat2(1, 5, 0, 1));
    }

    #[test]
    fn char_poly_conventions() {
        // [[2,0],[0,1/2]]: p(x) = x^2 - 5/2 x + 1
        let a = mat2q([
            [q(2, 1), q(0, 1)],
            [q(0, 1), q(1, 2)],
        ]);
        let cp = char_poly(&a);
        assert_eq!(cp.coeffs.len(), 3);
        assert_eq!(cp.coeffs[2], ExactScalar::one());
        assert_eq!(cp.coeffs[1], ExactScalar::from_rat(q(-5, 2)));
        assert_eq!(cp.coeffs[0], ExactScalar::one());
        // companion-style check on a 3x3
        let m = QMatrix::from_i64_rows(&[&[0, 1, 0], &[0, 0, 1], &[6, -11, 6]]);
        let cp3 = char_poly(&m);
        // x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        assert_eq!(cp3.coeffs[3], ExactScalar::one());
        assert_eq!(cp3.coeffs[2], ExactScalar::from_int(-6));
        assert_eq!(cp3.coeffs[1], ExactScalar::from_int(11));
        assert_eq!(cp3.coeffs[0], ExactScalar::from_int(-6));
    }

    #[test]
    fn power_sum_roundtrip() {
        // roots 1, 2, 3
        let p = Poly::from_rat(vec![q(-6, 1), q(11, 1), q(-6, 1), q(1, 1)]);
        let s = power_sums_from_charpoly(&p, 6);
        assert_eq!(s[0], ExactScalar::from_int(6)); // 1+2+3
        assert_eq!(s[1], ExactScalar::from_int(14)); // 1+4+9
        assert_eq!(s[5], ExactScalar::from_int(1 + 64 + 729));
        let back = poly_from_power_sums(&s[..3]);
        assert_eq!(back, p);
    }

    #[test]
    fn sturm_isolates_largest_root() {
        // (x-1)(x-2)(x-5/2) = x^3 - 11/2 x^2 + 19/2 x - 5
        let p = Poly::from_rat(vec![q(-5, 1), q(19, 2), q(-11, 2), q(1, 1)]);
        match largest_real_root(&p, 60) {
            RootLocation::Exact(v) => assert_eq!(v, ExactScalar::from_rat(q(5, 2))),
            other => panic!("expected exact 5/2, got {:?}", other),
        }
        // x^2 - 2: largest root sqrt(2), exact in the quadratic field
        let p2 = Poly::from_rat(vec![q(-2, 1), q(0, 1), q(1, 1)]);
        match largest_real_root(&p2, 60) {
            RootLocation::Exact(v) => {
                assert_eq!(&v * &v, ExactScalar::from_int(2));
                assert!(v.signum() > 0);
            }
            other => panic!("expected exact sqrt2, got {:?}", other),
        }
        // no real roots
        let p3 = Poly::from_rat(vec![q(1, 1), q(0, 1), q(1, 1)]);
        assert_eq!(largest_real_root(&p3, 30), RootLocation::NoRealRoot);
        // x^3 - x - 1: irrational plastic number 1.3247...
        let p4 = Poly::from_rat(vec![q(-1, 1), q(-1, 1), q(0, 1), q(1, 1)]);
        match largest_real_root(&p4, 60) {
            RootLocation::Bracket { lo, hi } => {
                assert!(lo < q(13248, 10000));
                assert!(hi > q(13247, 10000));
                assert!(&hi - &lo < q(1, 1 << 50));
            }
            other => panic!("expected bracket, got {:?}", other),
        }
    }

    #[test]
    fn spectral_radius_diagonal_exact() {
        let a = mat2q([
            [q(2, 1), q(0, 1)],
            [q(0, 1), q(1, 2)],
        ]);
        let mut ctx = PlaceCtx::real();
        let sv = spectral_radius(&a, &mut ctx).unwrap();
        assert_eq!(sv.exact, Some(ExactScalar::from_int(2)));
        assert_eq!(sv.magnitude, Magnitude::point(q(2, 1)));
    }

    #[test]
    fn spectral_radius_rotation_is_one() {
        // [[3/5,-4/5],[4/5,3/5]]: complex eigenvalues on the unit circle.
        let b = mat2q([
            [q(3, 5), q(-4, 5)],
            [q(4, 5), q(3, 5)],
        ]);
        let mut ctx = PlaceCtx::real();
        let sv = spectral_radius(&b, &mut ctx).unwrap();
        assert_eq!(sv.exact, Some(ExactScalar::one()));
    }

    #[test]
    fn spectral_radius_unipotent_is_one() {
        let a = mat2(1, 1, 0, 1);
        let mut ctx = PlaceCtx::real();
        let sv = spectral_radius(&a, &mut ctx).unwrap();
        assert_eq!(sv.exact, Some(ExactScalar::one()));
    }

    #[test]
    fn spectral_radius_3x3_product_poly_route() {
        // Companion of (x-1)(x-2)(x-3): radius 3 via the general route.
        let m = QMatrix::from_i64_rows(&[&[0, 1, 0], &[0, 0, 1], &[6, -11, 6]]);
        let mut ctx = PlaceCtx::real();
        let sv = spectral_radius(&m, &mut ctx).unwrap();
        assert_eq!(sv.exact, Some(ExactScalar::from_int(3)));
    }

    #[test]
    fn spectral_radius_complex_pair_3x3() {
        // Block diag(rotation*2, 1/2) made non-triangular by conjugation is
        // overkill; companion of (x^2+4)(x-1/2) = x^3 - 1/2 x^2 + 4x - 2.
        // Radius: |2i| = 2.
        let m = QMatrix::from_rat_rows(vec![
            vec![q(0, 1), q(1, 1), q(0, 1)],
            vec![q(0, 1), q(0, 1), q(1, 1)],
            vec![q(2, 1), q(-4, 1), q(1, 2)],
        ]);
        let mut ctx = PlaceCtx::real();
        let sv = spectral_radius(&m, &mut ctx).unwrap();
        assert_eq!(sv.exact, Some(ExactScalar::from_int(2)));
    }

    #[test]
    fn newton_polygon_5adic_example() {
        // x^2 - 3/5 x + 1 at p = 5: valuations {-1, +1}, radius 5.
        let m = mat2q([
            [q(3, 5), q(-1, 1)],
            [q(1, 1), q(0, 1)],
        ]);
        let mut ctx = PlaceCtx::finite(5).unwrap();
        let cp = char_poly(&m);
        assert_eq!(cp.coeffs[1], ExactScalar::from_rat(q(-3, 5)));
        assert_eq!(cp.coeffs[0], ExactScalar::one());
        let vals = finite_eigenvalue_valuations(&m, &mut ctx).unwrap();
        assert_eq!(vals, vec![q(-1, 1), q(1, 1)]);
        let sv = spectral_radius(&m, &mut ctx).unwrap();
        assert_eq!(sv.magnitude, Magnitude::PPower { p: 5, exponent: q(-1, 1) });
        assert_eq!(sv.magnitude.compare_rat(&q(5, 1)), MagOrder::Equal);
        let second = eigenvalue_modulus(&m, 2, &mut ctx).unwrap();
        assert_eq!(second.magnitude, Magnitude::PPower { p: 5, exponent: q(1, 1) });
    }

    #[test]
    fn newton_polygon_fractional_slopes() {
        // x^2 - 5 at p=5: both roots have valuation 1/2.
        let m = mat2(0, 5, 1, 0);
        let mut ctx = PlaceCtx::finite(5).unwrap();
        let vals = finite_eigenvalue_valuations(&m, &mut ctx).unwrap();
        assert_eq!(vals, vec![q(1, 2), q(1, 2)]);
    }

    #[test]
    fn op_norm_shear_golden() {
        // ||[[1,1],[0,1]]|| = (1+sqrt5)/2.
        let a = mat2(1, 1, 0, 1);
        let mut ctx = PlaceCtx::real();
        let sv = op_norm(&a, &mut ctx).unwrap();
        let phi = ExactScalar::quadratic(q(1, 2), q(1, 2), BigInt::from(5));
        assert_eq!(sv.exact, Some(phi));
    }

    #[test]
    fn op_norm_rotation_exactly_one() {
        let b = mat2q([
            [q(3, 5), q(-4, 5)],
            [q(4, 5), q(3, 5)],
        ]);
        let mut ctx = PlaceCtx::real();
        let sv = op_norm(&b, &mut ctx).unwrap();
        assert_eq!(sv.exact, Some(ExactScalar::one()));
        assert_eq!(sv.magnitude, Magnitude::point(q(1, 1)));
    }

    #[test]
    fn op_norm_diag_exact() {
        let a = mat2q([
            [q(100, 1), q(0, 1)],
            [q(0, 1), q(1, 100)],
        ]);
        let mut ctx = PlaceCtx::real();
        let sv = op_norm(&a, &mut ctx).unwrap();
        assert_eq!(sv.exact, Some(ExactScalar::from_int(100)));
        let inv_norm = op_norm_inverse(&a, &mut ctx).unwrap().unwrap();
        assert_eq!(inv_norm.exact, Some(ExactScalar::from_int(100)));
    }

    #[test]
    fn op_norm_finite_max_entry() {
        let a = mat2q([
            [q(1, 5), q(25, 1)],
            [q(3, 1), q(1, 1)],
        ]);
        let mut ctx = PlaceCtx::finite(5).unwrap();
        let sv = op_norm(&a, &mut ctx).unwrap();
        // |1/5| = 5 is the max.
        assert_eq!(sv.magnitude, Magnitude::PPower { p: 5, exponent: q(-1, 1) });
    }

    #[test]
    fn exterior_power_functorial() {
        let a = QMatrix::from_i64_rows(&[&[1, 2, 0], &[0, 1, 3], &[1, 0, 1]]);
        let b = QMatrix::from_i64_rows(&[&[2, 0, 1], &[1, 1, 0], &[0, 4, 1]]);
        let ab = a.mul(&b);
        let wa = exterior_power(&a, 2);
        let wb = exterior_power(&b, 2);
        let wab = exterior_power(&ab, 2);
        assert_eq!(wa.mul(&wb), wab);
        // top power = det
        let w3 = exterior_power(&a, 3);
        assert_eq!(w3.dim(), 1);
        assert_eq!(w3[(0, 0)], a.det());
    }

    #[test]
    fn compound_radii_diag() {
        let a = QMatrix::from_rat_rows(vec![
            vec![q(2, 1), q(0, 1), q(0, 1)],
            vec![q(0, 1), q(2, 1), q(0, 1)],
            vec![q(0, 1), q(0, 1), q(1, 4)],
        ]);
        let mut ctx = PlaceCtx::real();
        let rs = compound_radii(&a, &mut ctx).unwrap();
        assert_eq!(rs[0].exact, Some(ExactScalar::from_int(2)));
        assert_eq!(rs[1].exact, Some(ExactScalar::from_int(4)));
        assert_eq!(rs[2].exact, Some(ExactScalar::one()));
        // gap at j=2: 16 >= 2 * 2 * 1
        assert!(compound_gap_at(&a, 2, &mut ctx).unwrap());
        // no gap at j=1: 4 >= 2 * 1 * 4 fails
        assert!(!compound_gap_at(&a, 1, &mut ctx).unwrap());
        let l2 = eigenvalue_modulus(&a, 2, &mut ctx).unwrap();
        assert_eq!(l2.exact, Some(ExactScalar::from_int(2)));
        let l3 = eigenvalue_modulus(&a, 3, &mut ctx).unwrap();
        assert_eq!(l3.exact, Some(ExactScalar::from_rat(q(1, 4))));
    }

    #[test]
    fn algebra_closure_strict_upper_triangular() {
        // {e12} in 2x2: dim 1, nilpotent of index 2.
        let e12 = mat2(0, 1, 0, 0);
        let c = algebra_closure(&[e12.clone()]);
        assert_eq!(c.dim, 1);
        assert!(c.nilpotent);
        assert_eq!(c.nilpotency_index, Some(2));
        assert!(is_nilpotent_matrix(&e12));
        // {e12, e23} in 3x3: dim 3 (e12, e23, e13), nilpotent index 3.
        let e12b = QMatrix::from_i64_rows(&[&[0, 1, 0], &[0, 0, 0], &[0, 0, 0]]);
        let e23 = QMatrix::from_i64_rows(&[&[0, 0, 0], &[0, 0, 1], &[0, 0, 0]]);
        let c2 = algebra_closure(&[e12b, e23]);
        assert_eq!(c2.dim, 3);
        assert!(c2.nilpotent);
        assert_eq!(c2.nilpotency_index, Some(3));
    }

    #[test]
    fn algebra_closure_full() {
        let a = mat2(1, 1, 0, 1);
        let b = mat2(1, 0, 1, 1);
        let c = algebra_closure(&[a, b]);
        assert_eq!(c.dim, 4);
        assert!(!c.nilpotent);
    }

    #[test]
    fn kernel_vectors() {
        let a = mat2(1, 2, 2, 4);
        let v = a.kernel_vector().unwrap();
        let out = a.mul_vec(&v);
        assert!(out.iter().all(|x| x.is_zero()));
        assert!(mat2(1, 0, 0, 1).kernel_vector().is_none());
    }

    #[test]
    fn quadratic_entry_matrices() {
        // diag(1+sqrt2, 1-sqrt2): radius 1+sqrt2 exact.
        let s = ExactScalar::quadratic(q(1, 1), q(1, 1), BigInt::from(2));
        let t = s.conjugate();
        let a = QMatrix::diagonal(vec![s.clone(), t]);
        let mut ctx = PlaceCtx::real();
        let sv = spectral_radius(&a, &mut ctx).unwrap();
        assert_eq!(sv.exact, Some(s));
        // det = -1
        assert_eq!(a.det(), ExactScalar::from_int(-1));
    }
}
