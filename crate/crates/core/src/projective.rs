//! Projective space over a completion of ℚ: points, hyperplanes, the standard
//! wedge metric at each place, Lipschitz bounds for projective actions, and
//! the ε-proximality check.

use crate::linalg::{op_norm_bits, QMatrix, SpectralError, SpectralValue};
use crate::scalars::{
    rat, ExactScalar, MagOrder, Magnitude, Place, PlaceCtx, Rat, ScalarError,
};
use num::{One, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProjError {
    #[error("dimensions disagree: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector does not define a projective object")]
    ZeroVector,
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not in proximal normal form: {0}")]
    NotInNormalForm(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type ProjResult<T> = Result<T, ProjError>;

/// A point of P^{d-1}: a nonzero homogeneous coordinate vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjPoint {
    dim: usize,
    coords: Vec<ExactScalar>,
}

/// A hyperplane of P^{d-1}: the kernel of a nonzero covector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjHyperplane {
    dim: usize,
    covector: Vec<ExactScalar>,
}

impl ProjPoint {
    pub fn new(coords: Vec<ExactScalar>) -> ProjResult<Self> {
        if coords.is_empty() || coords.iter().all(|c| c.is_zero()) {
            return Err(ProjError::ZeroVector);
        }
        Ok(ProjPoint { dim: coords.len(), coords })
    }

    pub fn from_rational(coords: Vec<Rat>) -> ProjResult<Self> {
        Self::new(coords.into_iter().map(ExactScalar::from_rat).collect())
    }

    /// The i-th standard basis point [e_i].
    pub fn standard(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let coords = (0..dim)
            .map(|j| if j == i { ExactScalar::one() } else { ExactScalar::zero() })
            .collect();
        ProjPoint { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[ExactScalar] {
        &self.coords
    }

    /// Rescale so the first nonzero coordinate is 1 (canonical representative).
    pub fn normalized(&self) -> ProjPoint {
        let pivot = self
            .coords
            .iter()
            .find(|c| !c.is_zero())
            .expect("nonzero invariant")
            .clone();
        let coords = self.coords.iter().map(|c| c.clone() / pivot.clone()).collect();
        ProjPoint { dim: self.dim, coords }
    }

    /// Image under an invertible matrix.
    pub fn apply(&self, m: &QMatrix) -> ProjResult<ProjPoint> {
        if m.dim() != self.dim {
            return Err(ProjError::DimensionMismatch(m.dim(), self.dim));
        }
        let v = m.mul_vec(&self.coords);
        if v.iter().all(|c| c.is_zero()) {
            return Err(ProjError::Singular);
        }
        Ok(ProjPoint { dim: self.dim, coords: v })
    }

    /// Exact projective equality (proportional coordinates).
    pub fn proj_eq(&self, other: &ProjPoint) -> bool {
        if self.dim != other.dim {
            return false;
        }
        let a = self.normalized();
        let b = other.normalized();
        a.coords
            .iter()
            .zip(b.coords.iter())
            .all(|(x, y)| match x.checked_add(&(-y.clone())) {
                Ok(diff) => diff.is_zero(),
                Err(_) => x.cmp_total(y) == Ordering::Equal,
            })
    }

    /// Whether the point lies on the hyperplane (exact pairing test).
    pub fn on_hyperplane(&self, h: &ProjHyperplane) -> ProjResult<bool> {
        Ok(pairing(&self.coords, &h.covector)?.is_zero())
    }
}

impl ProjHyperplane {
    pub fn new(covector: Vec<ExactScalar>) -> ProjResult<Self> {
        if covector.is_empty() || covector.iter().all(|c| c.is_zero()) {
            return Err(ProjError::ZeroVector);
        }
        Ok(ProjHyperplane { dim: covector.len(), covector })
    }

    pub fn from_rational(covector: Vec<Rat>) -> ProjResult<Self> {
        Self::new(covector.into_iter().map(ExactScalar::from_rat).collect())
    }

    /// The coordinate hyperplane spanned by all e_j with j ≠ i (covector e_i*).
    pub fn coordinate(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let covector = (0..dim)
            .map(|j| if j == i { ExactScalar::one() } else { ExactScalar::zero() })
            .collect();
        ProjHyperplane { dim, covector }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covector(&self) -> &[ExactScalar] {
        &self.covector
    }

    /// Image hyperplane under an invertible matrix: kernel of φ∘m⁻¹.
    pub fn apply(&self, m: &QMatrix) -> ProjResult<ProjHyperplane> {
        if m.dim() != self.dim {
            return Err(ProjError::DimensionMismatch(m.dim(), self.dim));
        }
        let mi = m.inverse().ok_or(ProjError::Singular)?;
        // Row vector φ·m⁻¹.
        let d = self.dim;
        let mut cov = vec![ExactScalar::zero(); d];
        for (j, item) in cov.iter_mut().enumerate() {
            let mut acc = ExactScalar::zero();
            for i in 0..d {
                let t = self.covector[i].checked_mul(&mi[(i, j)])?;
                acc = acc.checked_add(&t)?;
            }
            *item = acc;
        }
        ProjHyperplane::new(cov)
    }
}

fn pairing(u: &[ExactScalar], phi: &[ExactScalar]) -> ProjResult<ExactScalar> {
    let mut acc = ExactScalar::zero();
    for (a, b) in u.iter().zip(phi.iter()) {
        acc = acc.checked_add(&a.checked_mul(b)?)?;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// Exact rational interval arithmetic on real enclosures (endpoints are
/// rationals, so no rounding is ever needed).
#[derive(Debug, Clone)]
struct Iv(Rat, Rat);

impl Iv {
    fn of(s: &ExactScalar, bits: u32) -> Iv {
        let (lo, hi) = s.real_enclosure(bits);
        Iv(lo, hi)
    }
    fn add(&self, o: &Iv) -> Iv {
        Iv(self.0.clone() + o.0.clone(), self.1.clone() + o.1.clone())
    }
    fn sub(&self, o: &Iv) -> Iv {
        Iv(self.0.clone() - o.1.clone(), self.1.clone() - o.0.clone())
    }
    fn mul(&self, o: &Iv) -> Iv {
        let c: Vec<Rat> = vec![
            self.0.clone() * o.0.clone(),
            self.0.clone() * o.1.clone(),
            self.1.clone() * o.0.clone(),
            self.1.clone() * o.1.clone(),
        ];
        Iv(
            c.iter().min().unwrap().clone(),
            c.iter().max().unwrap().clone(),
        )
    }
    fn sq(&self) -> Iv {
        let m = self.mul(self);
        // A square is nonnegative even when the factor interval straddles 0.
        if m.0 < Rat::zero() && self.0 < Rat::zero() && self.1 > Rat::zero() {
            Iv(Rat::zero(), m.1)
        } else {
            m
        }
    }
}

/// Squared point–point distance: ‖u∧v‖²/(‖u‖²·‖v‖²) at the real place
/// (Euclidean norms). Tries the exact path; falls back to certified rational
/// interval arithmetic when the coordinates live in incompatible fields.
fn real_dist_sq_pp(u: &[ExactScalar], v: &[ExactScalar], bits: u32) -> SpectralValue {
    let d = u.len();
    let exact = (|| -> Result<ExactScalar, ScalarError> {
        let mut wedge = ExactScalar::zero();
        for i in 0..d {
            for j in i + 1..d {
                let m = u[i]
                    .checked_mul(&v[j])?
                    .checked_add(&-(u[j].checked_mul(&v[i])?))?;
                wedge = wedge.checked_add(&m.checked_mul(&m)?)?;
            }
        }
        let nu = sum_sq(u)?;
        let nv = sum_sq(v)?;
        let denom = nu.checked_mul(&nv)?;
        Ok(wedge / denom)
    })();
    match exact {
        Ok(e) => {
            let (lo, hi) = e.real_enclosure(bits);
            SpectralValue {
                exact: Some(e),
                magnitude: Magnitude::interval(lo.max(Rat::zero()), hi),
            }
        }
        Err(_) => {
            let mut wedge = Iv(Rat::zero(), Rat::zero());
            for i in 0..d {
                for j in i + 1..d {
                    let m = Iv::of(&u[i], bits)
                        .mul(&Iv::of(&v[j], bits))
                        .sub(&Iv::of(&u[j], bits).mul(&Iv::of(&v[i], bits)));
                    wedge = wedge.add(&m.sq());
                }
            }
            let nu = sum_sq_iv(u, bits);
            let nv = sum_sq_iv(v, bits);
            let denom = nu.mul(&nv);
            let lo = (wedge.0 / denom.1.clone()).max(Rat::zero());
            let hi = wedge.1 / denom.0;
            SpectralValue { exact: None, magnitude: Magnitude::interval(lo, hi) }
        }
    }
}

fn sum_sq(u: &[ExactScalar]) -> Result<ExactScalar, ScalarError> {
    let mut acc = ExactScalar::zero();
    for c in u {
        acc = acc.checked_add(&c.checked_mul(c)?)?;
    }
    Ok(acc)
}

fn sum_sq_iv(u: &[ExactScalar], bits: u32) -> Iv {
    let mut acc = Iv(Rat::zero(), Rat::zero());
    for c in u {
        acc = acc.add(&Iv::of(c, bits).sq());
    }
    acc
}

/// Squared real point–hyperplane distance: ⟨u,φ⟩²/(‖u‖²·‖φ‖²).
fn real_dist_sq_ph(u: &[ExactScalar], phi: &[ExactScalar], bits: u32) -> SpectralValue {
    let exact = (|| -> Result<ExactScalar, ScalarError> {
        let p = pairing_checked(u, phi)?;
        let num = p.checked_mul(&p)?;
        let denom = sum_sq(u)?.checked_mul(&sum_sq(phi)?)?;
        Ok(num / denom)
    })();
    match exact {
        Ok(e) => {
            let (lo, hi) = e.real_enclosure(bits);
            SpectralValue {
                exact: Some(e),
                magnitude: Magnitude::interval(lo.max(Rat::zero()), hi),
            }
        }
        Err(_) => {
            let mut p = Iv(Rat::zero(), Rat::zero());
            for (a, b) in u.iter().zip(phi.iter()) {
                p = p.add(&Iv::of(a, bits).mul(&Iv::of(b, bits)));
            }
            let num = p.sq();
            let denom = sum_sq_iv(u, bits).mul(&sum_sq_iv(phi, bits));
            let lo = (num.0 / denom.1.clone()).max(Rat::zero());
            let hi = num.1 / denom.0;
            SpectralValue { exact: None, magnitude: Magnitude::interval(lo, hi) }
        }
    }
}

fn pairing_checked(u: &[ExactScalar], phi: &[ExactScalar]) -> Result<ExactScalar, ScalarError> {
    let mut acc = ExactScalar::zero();
    for (a, b) in u.iter().zip(phi.iter()) {
        acc = acc.checked_add(&a.checked_mul(b)?)?;
    }
    Ok(acc)
}

/// Finite-place sup-norm of a coordinate vector.
fn finite_sup(u: &[ExactScalar], ctx: &mut PlaceCtx) -> ProjResult<Magnitude> {
    let mut best = Magnitude::Zero;
    for c in u {
        best = best.max(&ctx.magnitude(c)?)?;
    }
    Ok(best)
}

/// Squared point–point distance at any place, as an exact-when-possible value
/// together with a certified magnitude enclosure.
pub fn proj_dist_sq_pp(
    u: &ProjPoint,
    v: &ProjPoint,
    ctx: &mut PlaceCtx,
    bits: u32,
) -> ProjResult<SpectralValue> {
    if u.dim != v.dim {
        return Err(ProjError::DimensionMismatch(u.dim, v.dim));
    }
    match ctx.place {
        Place::Real => Ok(real_dist_sq_pp(&u.coords, &v.coords, bits)),
        Place::Finite { .. } => {
            let d = u.dim;
            let mut wedge = Magnitude::Zero;
            for i in 0..d {
                for j in i + 1..d {
                    let m = u.coords[i]
                        .checked_mul(&v.coords[j])?
                        .checked_add(&-(u.coords[j].checked_mul(&v.coords[i])?))?;
                    wedge = wedge.max(&ctx.magnitude(&m)?)?;
                }
            }
            let nu = finite_sup(&u.coords, ctx)?;
            let nv = finite_sup(&v.coords, ctx)?;
            let denom = nu.checked_mul(&nv)?;
            let dist = wedge.checked_mul(&denom.inverse()?)?;
            Ok(SpectralValue { exact: None, magnitude: dist.pow(2) })
        }
    }
}

/// Squared point–hyperplane distance at any place.
pub fn proj_dist_sq_ph(
    u: &ProjPoint,
    h: &ProjHyperplane,
    ctx: &mut PlaceCtx,
    bits: u32,
) -> ProjResult<SpectralValue> {
    if u.dim != h.dim {
        return Err(ProjError::DimensionMismatch(u.dim, h.dim));
    }
    match ctx.place {
        Place::Real => Ok(real_dist_sq_ph(&u.coords, &h.covector, bits)),
        Place::Finite { .. } => {
            let p = pairing(&u.coords, &h.covector)?;
            let pm = ctx.magnitude(&p)?;
            let nu = finite_sup(&u.coords, ctx)?;
            let nh = finite_sup(&h.covector, ctx)?;
            let denom = nu.checked_mul(&nh)?;
            let dist = pm.checked_mul(&denom.inverse()?)?;
            Ok(SpectralValue { exact: None, magnitude: dist.pow(2) })
        }
    }
}

/// Point–point distance ‖u∧v‖/(‖u‖·‖v‖) as a certified magnitude.
pub fn proj_dist_pp(
    u: &ProjPoint,
    v: &ProjPoint,
    ctx: &mut PlaceCtx,
    bits: u32,
) -> ProjResult<Magnitude> {
    Ok(proj_dist_sq_pp(u, v, ctx, bits)?.magnitude.nth_root(2, bits))
}

/// Point–hyperplane distance |⟨u,φ⟩|/(‖u‖·‖φ‖) as a certified magnitude.
pub fn proj_dist_ph(
    u: &ProjPoint,
    h: &ProjHyperplane,
    ctx: &mut PlaceCtx,
    bits: u32,
) -> ProjResult<Magnitude> {
    Ok(proj_dist_sq_ph(u, h, ctx, bits)?.magnitude.nth_root(2, bits))
}

// ---------------------------------------------------------------------------
// Lipschitz bound
// ---------------------------------------------------------------------------

/// Certified enclosure of (‖b‖·‖b⁻¹‖)², the Lipschitz constant of the
/// projective action of b.
pub fn lipschitz_bound(b: &QMatrix, ctx: &mut PlaceCtx, bits: u32) -> ProjResult<SpectralValue> {
    let bi = b.inverse().ok_or(ProjError::Singular)?;
    let n = op_norm_bits(b, ctx, bits)?;
    let ni = op_norm_bits(&bi, ctx, bits)?;
    let magnitude = n.magnitude.checked_mul(&ni.magnitude)?.pow(2);
    let exact = match (&n.exact, &ni.exact) {
        (Some(a), Some(c)) => a
            .checked_mul(c)
            .ok()
            .map(|prod| prod.checked_mul(&prod).ok())
            .flatten(),
        _ => None,
    };
    Ok(SpectralValue { exact, magnitude })
}

// ---------------------------------------------------------------------------
// Proximality check
// ---------------------------------------------------------------------------

/// Outcome of the ε-proximality test for a matrix in normal form
/// (block diag(α) ⊕ a|_H with H the coordinate hyperplane ⟨e₂,…,e_d⟩).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProximalityReport {
    pub place: Place,
    #[serde(with = "crate::scalars::rat_string")]
    pub eps: Rat,
    pub alpha_magnitude: Magnitude,
    pub restricted_norm: Magnitude,
    /// ε²·|α|, the threshold the restricted norm must not exceed, when it is
    /// exactly representable at the place.
    pub threshold: Option<Magnitude>,
    pub pass: bool,
    /// Certified comparison restricted_norm vs ε²·|α|.
    pub comparison: MagOrder,
}

/// Check ‖a|_H‖ ≤ ε²·|α| for a in proximal normal form; a passing report
/// certifies that a maps the complement of the ε-neighborhood of [H] into the
/// ε-ball at [e₁] and is ε-Lipschitz there.
pub fn check_proximal(
    a: &QMatrix,
    alpha: &ExactScalar,
    h: &ProjHyperplane,
    eps: &Rat,
    ctx: &mut PlaceCtx,
) -> ProjResult<ProximalityReport> {
    let d = a.dim();
    if h.dim != d {
        return Err(ProjError::DimensionMismatch(h.dim, d));
    }
    if eps > &rat(1, 4) || eps <= &Rat::zero() {
        return Err(ProjError::NotInNormalForm(format!(
            "eps must lie in (0, 1/4], got {}",
            eps
        )));
    }
    // Normal form: first column = α·e₁, first row = (α, 0, …, 0).
    if &a[(0, 0)] != alpha {
        return Err(ProjError::NotInNormalForm("a[0][0] ≠ α".into()));
    }
    for i in 1..d {
        if !a[(i, 0)].is_zero() {
            return Err(ProjError::NotInNormalForm("a·e₁ ≠ α·e₁".into()));
        }
        if !a[(0, i)].is_zero() {
            return Err(ProjError::NotInNormalForm("a(H) ⊄ H".into()));
        }
    }
    // The hyperplane must be the coordinate hyperplane (covector ∝ e₁*).
    let first_nonzero = h.covector.iter().position(|c| !c.is_zero());
    if first_nonzero != Some(0) || h.covector.iter().skip(1).any(|c| !c.is_zero()) {
        return Err(ProjError::NotInNormalForm("H must be ⟨e₂,…,e_d⟩".into()));
    }
    // Restricted norm: operator norm of the lower-right block.
    let mut block = QMatrix::zero(d - 1);
    for i in 1..d {
        for j in 1..d {
            block[(i - 1, j - 1)] = a[(i, j)].clone();
        }
    }
    let eps_sq = eps * eps;
    let mut bits = 96u32;
    loop {
        let restricted = if d == 1 {
            Magnitude::Zero
        } else {
            op_norm_bits(&block, ctx, bits)?.magnitude
        };
        let alpha_magnitude = ctx.magnitude(alpha)?;
        // Compare ‖a|_H‖ ≤ ε²·|α| as ‖a|_H‖·|α|⁻¹ ≤ ε² — at finite places
        // both sides stay exactly representable this way.
        let (threshold, comparison) = match ctx.place {
            Place::Real => {
                let t = Magnitude::interval(eps_sq.clone(), eps_sq.clone())
                    .checked_mul(&alpha_magnitude)?;
                let cmp = restricted.compare(&t)?;
                (Some(t), cmp)
            }
            Place::Finite { .. } => {
                let ratio = restricted.checked_mul(&alpha_magnitude.inverse()?)?;
                let cmp = ratio.compare_rat(&eps_sq);
                let t = match &alpha_magnitude {
                    Magnitude::PPower { p, exponent } => {
                        // ε²·p^(−e) is a p-power exactly when ε is one.
                        pure_power_exponent(eps, *p)
                            .map(|k| Magnitude::ppower(*p, exponent + rat(2, 1) * k))
                    }
                    _ => None,
                };
                (t, cmp)
            }
        };
        match comparison {
            MagOrder::Inconclusive if bits < 4096 => {
                bits *= 2;
                continue;
            }
            _ => {
                let pass = matches!(comparison, MagOrder::Less | MagOrder::Equal);
                return Ok(ProximalityReport {
                    place: ctx.place,
                    eps: eps.clone(),
                    alpha_magnitude,
                    restricted_norm: restricted,
                    threshold,
                    pass,
                    comparison,
                });
            }
        }
    }
}

/// When r = p^(−k) exactly for an integer k, return k as a rational.
fn pure_power_exponent(r: &Rat, p: u64) -> Option<Rat> {
    let mut k = 0i64;
    let mut cur = r.clone();
    let pr = rat(p as i64, 1);
    while cur < Rat::one() {
        cur = cur * pr.clone();
        k += 1;
        if k > 10_000 {
            return None;
        }
    }
    while cur > Rat::one() {
        cur = cur / pr.clone();
        k -= 1;
        if k < -10_000 {
            return None;
        }
    }
    if cur.is_one() {
        Some(rat(k, 1))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalars::rat_i64;
    use num::BigInt;

    fn pt(v: &[i64]) -> ProjPoint {
        ProjPoint::from_rational(v.iter().map(|&x| rat_i64(x)).collect()).unwrap()
    }

    #[test]
    fn standard_basis_distance_is_one() {
        let e1 = ProjPoint::standard(2, 0);
        let e2 = ProjPoint::standard(2, 1);
        let mut ctx = PlaceCtx::real();
        let dsq = proj_dist_sq_pp(&e1, &e2, &mut ctx, 64).unwrap();
        assert_eq!(dsq.exact, Some(ExactScalar::one()));
        let mut ctx5 = PlaceCtx::finite(5).unwrap();
        let d5 = proj_dist_pp(&e1, &e2, &mut ctx5, 64).unwrap();
        assert_eq!(d5.compare_rat(&Rat::one()), MagOrder::Equal);
    }

    #[test]
    fn real_distance_one_over_sqrt_two() {
        let u = pt(&[1, 0]);
        let v = pt(&[1, 1]);
        let mut ctx = PlaceCtx::real();
        let dsq = proj_dist_sq_pp(&u, &v, &mut ctx, 64).unwrap();
        assert_eq!(dsq.exact, Some(ExactScalar::from_rat(rat(1, 2))));
        let dist = proj_dist_pp(&u, &v, &mut ctx, 64).unwrap();
        // interval enclosing 1/√2 ≈ 0.7071
        assert_eq!(dist.compare_rat(&rat(7, 10)), MagOrder::Greater);
        assert_eq!(dist.compare_rat(&rat(71, 100)), MagOrder::Less);
    }

    #[test]
    fn finite_place_distance_via_sup_wedge() {
        let p = 7u64;
        let u = pt(&[1, 0]);
        let v = ProjPoint::from_rational(vec![rat_i64(1), rat_i64(p as i64)]).unwrap();
        let mut ctx = PlaceCtx::finite(p).unwrap();
        let dist = proj_dist_pp(&u, &v, &mut ctx, 64).unwrap();
        match dist {
            Magnitude::PPower { p: q, ref exponent } => {
                assert_eq!(q, p);
                assert_eq!(exponent, &Rat::one());
            }
            other => panic!("expected PPower, got {:?}", other),
        }
    }

    #[test]
    fn distances_are_scale_invariant() {
        let u = pt(&[2, 3, 5]);
        let v = pt(&[1, -1, 4]);
        let us = ProjPoint::from_rational(vec![rat(2 * 7, 3), rat(3 * 7, 3), rat(5 * 7, 3)]).unwrap();
        let mut ctx = PlaceCtx::real();
        let a = proj_dist_sq_pp(&u, &v, &mut ctx, 64).unwrap();
        let b = proj_dist_sq_pp(&us, &v, &mut ctx, 64).unwrap();
        assert_eq!(a.exact, b.exact);
    }

    #[test]
    fn point_hyperplane_distance_examples() {
        let mut ctx = PlaceCtx::real();
        let e1 = ProjPoint::standard(2, 0);
        let h = ProjHyperplane::coordinate(2, 0); // kernel = ⟨e₂⟩
        let dsq = proj_dist_sq_ph(&e1, &h, &mut ctx, 64).unwrap();
        assert_eq!(dsq.exact, Some(ExactScalar::one()));
        let e2 = ProjPoint::standard(2, 1);
        let d2 = proj_dist_sq_ph(&e2, &h, &mut ctx, 64).unwrap();
        assert!(d2.exact.unwrap().is_zero());
    }

    #[test]
    fn projective_equality_and_application() {
        let u = pt(&[2, 4]);
        let v = pt(&[1, 2]);
        assert!(u.proj_eq(&v));
        assert!(!u.proj_eq(&pt(&[1, 3])));
        let m = QMatrix::from_i64_rows(&[&[0, -1], &[1, 0]]);
        let img = u.apply(&m).unwrap();
        assert!(img.proj_eq(&pt(&[-4, 2])));
        let h = ProjHyperplane::coordinate(2, 0);
        let hi = h.apply(&m).unwrap();
        // kernel of e₁*∘m⁻¹: m⁻¹ = [[0,1],[-1,0]]; φ' = (0,1) → kernel ⟨e₁⟩
        assert!(ProjPoint::standard(2, 0).on_hyperplane(&hi).unwrap());
    }

    #[test]
    fn lipschitz_bound_examples() {
        let mut ctx = PlaceCtx::real();
        let id = QMatrix::identity(2);
        let l = lipschitz_bound(&id, &mut ctx, 64).unwrap();
        assert_eq!(l.exact, Some(ExactScalar::one()));

        let a = QMatrix::from_rat_rows(vec![
            vec![rat_i64(2), rat_i64(0)],
            vec![rat_i64(0), rat(1, 2)],
        ]);
        let l = lipschitz_bound(&a, &mut ctx, 64).unwrap();
        assert_eq!(l.exact, Some(ExactScalar::from_int(16)));

        let u = QMatrix::from_i64_rows(&[&[1, 1], &[0, 1]]);
        let l = lipschitz_bound(&u, &mut ctx, 64).unwrap();
        // ((1+√5)/2)⁴ ≈ 6.854
        assert_eq!(l.magnitude.compare_rat(&rat(68, 10)), MagOrder::Greater);
        assert_eq!(l.magnitude.compare_rat(&rat(69, 10)), MagOrder::Less);
    }

    #[test]
    fn lipschitz_is_sound_on_grid() {
        let mut ctx = PlaceCtx::real();
        let b = QMatrix::from_i64_rows(&[&[3, 1], &[1, 2]]);
        let l = lipschitz_bound(&b, &mut ctx, 128).unwrap().magnitude;
        let l_hi = l.upper_rat();
        let grid: Vec<ProjPoint> = (0..6)
            .map(|k| ProjPoint::from_rational(vec![Rat::one(), rat(k - 3, 2)]).unwrap())
            .collect();
        for x in &grid {
            for y in &grid {
                if x.proj_eq(y) {
                    continue;
                }
                let dxy = proj_dist_pp(x, y, &mut ctx, 128).unwrap();
                let bx = x.apply(&b).unwrap();
                let by = y.apply(&b).unwrap();
                let dbxy = proj_dist_pp(&bx, &by, &mut ctx, 128).unwrap();
                // Certified no-violation: lower(d(bx,by)) ≤ upper(L·d(x,y)).
                let lhs = dbxy.lower_rat();
                let rhs = l_hi.clone() * dxy.upper_rat();
                assert!(lhs <= rhs);
            }
        }
    }

    #[test]
    fn triangle_inequality_never_violated() {
        let mut ctx = PlaceCtx::real();
        let pts: Vec<ProjPoint> = vec![pt(&[1, 0, 2]), pt(&[3, 1, 1]), pt(&[-1, 2, 5]), pt(&[0, 1, 1])];
        for x in &pts {
            for y in &pts {
                for z in &pts {
                    let dxz = proj_dist_pp(x, z, &mut ctx, 128).unwrap();
                    let dxy = proj_dist_pp(x, y, &mut ctx, 128).unwrap();
                    let dyz = proj_dist_pp(y, z, &mut ctx, 128).unwrap();
                    let lhs = dxz.lower_rat();
                    let rhs = dxy.upper_rat() + dyz.upper_rat();
                    assert!(lhs <= rhs);
                }
            }
        }
    }

    #[test]
    fn check_proximal_worked_examples() {
        let mut ctx = PlaceCtx::real();
        let h = ProjHyperplane::coordinate(2, 0);
        let a = QMatrix::from_rat_rows(vec![
            vec![rat_i64(100), rat_i64(0)],
            vec![rat_i64(0), rat(1, 100)],
        ]);
        let rep = check_proximal(&a, &ExactScalar::from_int(100), &h, &rat(1, 4), &mut ctx).unwrap();
        assert!(rep.pass); // 1/100 ≤ (1/16)·100

        let b = QMatrix::from_rat_rows(vec![
            vec![rat_i64(2), rat_i64(0)],
            vec![rat_i64(0), rat(1, 2)],
        ]);
        let rep = check_proximal(&b, &ExactScalar::from_int(2), &h, &rat(1, 4), &mut ctx).unwrap();
        assert!(!rep.pass); // 1/2 > (1/16)·2

        // p-adic: diag(1/p², p²) at p = 5 with eps = 1/p.
        let p = 5i64;
        let c = QMatrix::from_rat_rows(vec![
            vec![rat(1, p * p), rat_i64(0)],
            vec![rat_i64(0), rat_i64(p * p)],
        ]);
        let mut ctx5 = PlaceCtx::finite(5).unwrap();
        let rep = check_proximal(
            &c,
            &ExactScalar::from_rat(rat(1, p * p)),
            &h,
            &rat(1, p),
            &mut ctx5,
        )
        .unwrap();
        assert!(rep.pass); // ‖a|_H‖ = p⁻² ≤ ε²·|α| = p⁻²·p² = 1
    }

    #[test]
    fn check_proximal_rejects_bad_shapes() {
        let mut ctx = PlaceCtx::real();
        let h = ProjHyperplane::coordinate(2, 0);
        let bad = QMatrix::from_i64_rows(&[&[2, 1], &[0, 1]]);
        assert!(check_proximal(&bad, &ExactScalar::from_int(2), &h, &rat(1, 4), &mut ctx).is_err());
        let a = QMatrix::from_i64_rows(&[&[4, 0], &[0, 1]]);
        assert!(check_proximal(&a, &ExactScalar::from_int(4), &h, &rat(1, 2), &mut ctx).is_err());
    }

    #[test]
    fn proximal_soundness_on_sampled_points() {
        // a = diag(100, 1/100) passes at eps = 1/4; sampled points at distance
        // ≥ eps from [H] must land within eps of [e₁].
        let mut ctx = PlaceCtx::real();
        let h = ProjHyperplane::coordinate(2, 0);
        let a = QMatrix::from_rat_rows(vec![
            vec![rat_i64(100), rat_i64(0)],
            vec![rat_i64(0), rat(1, 100)],
        ]);
        let eps = rat(1, 4);
        let rep = check_proximal(&a, &ExactScalar::from_int(100), &h, &eps, &mut ctx).unwrap();
        assert!(rep.pass);
        let e1 = ProjPoint::standard(2, 0);
        for k in -8..=8i64 {
            let x = ProjPoint::from_rational(vec![Rat::one(), rat(k, 3)]).unwrap();
            let dh = proj_dist_ph(&x, &h, &mut ctx, 128).unwrap();
            if dh.lower_rat() < eps {
                continue;
            }
            let ax = x.apply(&a).unwrap();
            let de1 = proj_dist_pp(&ax, &e1, &mut ctx, 128).unwrap();
            assert!(de1.upper_rat() <= eps);
        }
    }

    #[test]
    fn quadratic_coordinates_fall_back_to_intervals() {
        // u = (1, √2), v = (1, √3): incompatible fields force the interval path.
        let s2 = ExactScalar::quadratic(rat_i64(0), Rat::one(), BigInt::from(2));
        let s3 = ExactScalar::quadratic(rat_i64(0), Rat::one(), BigInt::from(3));
        let u = ProjPoint::new(vec![ExactScalar::one(), s2]).unwrap();
        let v = ProjPoint::new(vec![ExactScalar::one(), s3]).unwrap();
        let mut ctx = PlaceCtx::real();
        let dsq = proj_dist_sq_pp(&u, &v, &mut ctx, 128).unwrap();
        assert!(dsq.exact.is_none());
        // d² = (√3−√2)²/((1+2)(1+3)) = (5−2√6)/12 ≈ 0.008418
        assert_eq!(dsq.magnitude.compare_rat(&rat(8, 1000)), MagOrder::Greater);
        assert_eq!(dsq.magnitude.compare_rat(&rat(9, 1000)), MagOrder::Less);
    }
}
