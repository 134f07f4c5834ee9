//! Exact dynamics on the projective line for 2×2 matrices: closed arcs of
//! P¹(ℝ) with exact endpoints, and ultrametric balls of P¹(ℚ_p) with exact
//! p-power radii. Every predicate (membership, containment, disjointness,
//! image computation) is decided by exact arithmetic, so a passing chain of
//! checks is a proof.

use crate::linalg::QMatrix;
use crate::scalars::{rat_val_p, ExactScalar, Rat, ScalarError};
use num::bigint::BigInt;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum P1Error {
    #[error("matrix must be 2×2 and invertible")]
    BadMatrix,
    #[error("arc endpoints coincide")]
    DegenerateArc,
    #[error("zero vector is not a projective point")]
    ZeroVector,
    #[error("ball image is not certified (ball too large for the map)")]
    BallImageUncertified,
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

pub type P1Result<T> = Result<T, P1Error>;

// ---------------------------------------------------------------------------
// The real projective line as a circle of slopes
// ---------------------------------------------------------------------------

/// A point of P¹(ℝ): the slope v/u of [u : v], with [0 : 1] at infinity.
/// The circle is ordered by ascending slope with infinity between the
/// arbitrarily positive and arbitrarily negative slopes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum P1Point {
    Slope(ExactScalar),
    Infinity,
}

impl P1Point {
    pub fn from_homogeneous(u: &ExactScalar, v: &ExactScalar) -> P1Result<P1Point> {
        if u.is_zero() {
            if v.is_zero() {
                return Err(P1Error::ZeroVector);
            }
            return Ok(P1Point::Infinity);
        }
        let q = v.clone().checked_mul(&u.inverse())?;
        Ok(P1Point::Slope(q))
    }

    pub fn from_rat(r: Rat) -> P1Point {
        P1Point::Slope(ExactScalar::from_rat(r))
    }

    /// Homogeneous coordinates [u : v] of the point.
    pub fn homogeneous(&self) -> (ExactScalar, ExactScalar) {
        match self {
            P1Point::Slope(s) => (ExactScalar::one(), s.clone()),
            P1Point::Infinity => (ExactScalar::zero(), ExactScalar::one()),
        }
    }

    /// Total order realizing the circular order: finite slopes ascending,
    /// then infinity.
    pub fn circle_cmp(&self, other: &P1Point) -> Ordering {
        match (self, other) {
            (P1Point::Infinity, P1Point::Infinity) => Ordering::Equal,
            (P1Point::Infinity, _) => Ordering::Greater,
            (_, P1Point::Infinity) => Ordering::Less,
            (P1Point::Slope(a), P1Point::Slope(b)) => a.cmp_total(b),
        }
    }

    pub fn same_point(&self, other: &P1Point) -> bool {
        self.circle_cmp(other) == Ordering::Equal
    }
}

/// A closed nondegenerate arc of the circle, running counterclockwise
/// (ascending slope, wrapping through infinity) from `lo` to `hi`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Arc {
    pub lo: P1Point,
    pub hi: P1Point,
}

impl Arc {
    pub fn new(lo: P1Point, hi: P1Point) -> P1Result<Arc> {
        if lo.same_point(&hi) {
            return Err(P1Error::DegenerateArc);
        }
        Ok(Arc { lo, hi })
    }

    /// Closed membership.
    pub fn contains_point(&self, p: &P1Point) -> bool {
        let lo = self.lo.circle_cmp(p);
        let hi = p.circle_cmp(&self.hi);
        match self.lo.circle_cmp(&self.hi) {
            Ordering::Less => lo != Ordering::Greater && hi != Ordering::Greater,
            Ordering::Greater => lo != Ordering::Greater || hi != Ordering::Greater,
            Ordering::Equal => unreachable!("arcs are nondegenerate"),
        }
    }

    /// Open membership (strictly inside).
    pub fn contains_point_open(&self, p: &P1Point) -> bool {
        self.contains_point(p) && !self.lo.same_point(p) && !self.hi.same_point(p)
    }

    /// Closed-arc containment: inner ⊆ self.
    pub fn contains_arc(&self, inner: &Arc) -> bool {
        self.contains_point(&inner.lo)
            && self.contains_point(&inner.hi)
            && !inner.contains_point_open(&self.lo)
            && !inner.contains_point_open(&self.hi)
    }

    /// Two closed arcs are disjoint iff neither holds an endpoint of the
    /// other (connected subsets of a circle).
    pub fn disjoint(&self, other: &Arc) -> bool {
        !self.contains_point(&other.lo)
            && !self.contains_point(&other.hi)
            && !other.contains_point(&self.lo)
            && !other.contains_point(&self.hi)
    }
}

/// The image of a slope under the projective action of an invertible g:
/// [u : v] ↦ [g₁₁u + g₁₂v : g₂₁u + g₂₂v].
pub fn apply_point(g: &QMatrix, p: &P1Point) -> P1Result<P1Point> {
    if g.dim() != 2 {
        return Err(P1Error::BadMatrix);
    }
    let (u, v) = p.homogeneous();
    let iu = g[(0, 0)].checked_mul(&u)?.checked_add(&g[(0, 1)].checked_mul(&v)?)?;
    let iv = g[(1, 0)].checked_mul(&u)?.checked_add(&g[(1, 1)].checked_mul(&v)?)?;
    P1Point::from_homogeneous(&iu, &iv)
}

/// The image of a closed arc: endpoints map to endpoints; orientation is
/// preserved exactly when det g > 0.
pub fn apply_arc(g: &QMatrix, a: &Arc) -> P1Result<Arc> {
    let det_sign = g.det().signum();
    if det_sign == 0 {
        return Err(P1Error::BadMatrix);
    }
    let ilo = apply_point(g, &a.lo)?;
    let ihi = apply_point(g, &a.hi)?;
    if det_sign > 0 {
        Arc::new(ilo, ihi)
    } else {
        Arc::new(ihi, ilo)
    }
}

/// The smallest-listed arc from candidate endpoint pairs that contains all
/// of `arcs` and is disjoint from every arc in `avoid`. Deterministic:
/// candidates are tried in a fixed order; None when no candidate works.
pub fn hull_arcs(arcs: &[&Arc], avoid: &[&Arc]) -> Option<Arc> {
    let mut endpoints: Vec<P1Point> = Vec::new();
    for a in arcs {
        endpoints.push(a.lo.clone());
        endpoints.push(a.hi.clone());
    }
    for lo in &endpoints {
        for hi in &endpoints {
            if lo.same_point(hi) {
                continue;
            }
            let cand = Arc { lo: lo.clone(), hi: hi.clone() };
            if arcs.iter().all(|a| cand.contains_arc(a))
                && avoid.iter().all(|b| cand.disjoint(b))
            {
                return Some(cand);
            }
        }
    }
    None
}

/// An exact rational bracket lo < s < hi with hi − lo ≤ 2¹⁻ᵏ. For a
/// quadratic x + y√D the irrational √D is trapped between consecutive
/// integer-square-root convergents, so the bracket is strict.
pub fn rational_bracket(s: &ExactScalar, k: u32) -> (Rat, Rat) {
    let step = Rat::new(BigInt::one(), BigInt::one() << k);
    match s.as_rat() {
        Some(r) => (r.clone() - step.clone(), r.clone() + step),
        None => {
            let y = s.quad_coeff();
            let d = s.radicand().expect("quadratic scalar has a radicand");
            let m = k as u64 + y.numer().magnitude().bits() + 1;
            // t ≤ √(D·4^m) < t+1, strict on both sides since D·4^m is not a
            // perfect square (D is not a square).
            let shifted: BigInt = d.clone() << (2 * m as usize);
            let t = shifted.sqrt();
            let denom = BigInt::one() << (m as usize);
            let root_lo = Rat::new(t.clone(), denom.clone());
            let root_hi = Rat::new(t + BigInt::one(), denom);
            let x = s.rational_part().clone();
            if y.is_positive() {
                (x.clone() + y.clone() * root_lo, x + y.clone() * root_hi)
            } else {
                (x.clone() + y.clone() * root_hi, x + y.clone() * root_lo)
            }
        }
    }
}

/// A rational strictly greater than the slope, within 2¹⁻ᵏ of it.
pub fn dyadic_above(s: &ExactScalar, k: u32) -> Rat {
    rational_bracket(s, k).1
}

/// A rational strictly less than the slope, within 2¹⁻ᵏ of it.
pub fn dyadic_below(s: &ExactScalar, k: u32) -> Rat {
    rational_bracket(s, k).0
}

// ---------------------------------------------------------------------------
// The p-adic projective line: ultrametric balls
// ---------------------------------------------------------------------------

/// A point of P¹(ℚ_p) in primitive homogeneous coordinates: both entries
/// p-integral, at least one a p-adic unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PadicPoint {
    #[serde(with = "crate::scalars::rat_string")]
    pub u: Rat,
    #[serde(with = "crate::scalars::rat_string")]
    pub v: Rat,
}

impl PadicPoint {
    /// Normalize (u, v) ≠ 0 to primitive form at p.
    pub fn new(u: Rat, v: Rat, p: u64) -> P1Result<PadicPoint> {
        if u.is_zero() && v.is_zero() {
            return Err(P1Error::ZeroVector);
        }
        let vu = rat_val_p(&u, p);
        let vv = rat_val_p(&v, p);
        let m = match (vu, vv) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!(),
        };
        let scale = p_power_rat(p, -m);
        Ok(PadicPoint { u: u * scale.clone(), v: v * scale })
    }

    /// The exponent e with d(self, other) = p^{−e}; None when the points are
    /// equal (distance zero).
    pub fn dist_exp(&self, other: &PadicPoint, p: u64) -> Option<i64> {
        let det = self.u.clone() * other.v.clone() - other.u.clone() * self.v.clone();
        rat_val_p(&det, p)
    }
}

/// p^k as an exact rational (k may be negative).
pub fn p_power_rat(p: u64, k: i64) -> Rat {
    let pb = BigInt::from(p);
    if k >= 0 {
        Rat::from_integer(pb.pow(k as u32))
    } else {
        Rat::new(BigInt::one(), pb.pow((-k) as u32))
    }
}

/// A closed ball B(center, p^{−radius_exp}) of P¹(ℚ_p); radius_exp ≥ 1 keeps
/// the ball proper.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PadicBall {
    pub center: PadicPoint,
    pub radius_exp: i64,
}

impl PadicBall {
    pub fn new(center: PadicPoint, radius_exp: i64) -> PadicBall {
        PadicBall { center, radius_exp }
    }

    pub fn contains_point(&self, q: &PadicPoint, p: u64) -> bool {
        match self.center.dist_exp(q, p) {
            None => true,
            Some(e) => e >= self.radius_exp,
        }
    }

    /// Ultrametric: B₁ ⊆ B₂ iff the centers are within the larger radius and
    /// r₁ ≤ r₂.
    pub fn contained_in(&self, outer: &PadicBall, p: u64) -> bool {
        self.radius_exp >= outer.radius_exp && outer.contains_point(&self.center, p)
    }

    /// Ultrametric: two balls are disjoint iff the center distance exceeds
    /// both radii.
    pub fn disjoint(&self, other: &PadicBall, p: u64) -> bool {
        match self.center.dist_exp(&other.center, p) {
            None => false,
            Some(e) => e < self.radius_exp && e < other.radius_exp,
        }
    }
}

/// Apply a rational invertible g to a p-adic point (exact, renormalized).
pub fn padic_apply(g: &QMatrix, q: &PadicPoint, p: u64) -> P1Result<PadicPoint> {
    if g.dim() != 2 {
        return Err(P1Error::BadMatrix);
    }
    let e = |i: usize, j: usize| -> P1Result<Rat> {
        g[(i, j)].as_rat().cloned().ok_or(P1Error::BadMatrix)
    };
    let iu = e(0, 0)? * q.u.clone() + e(0, 1)? * q.v.clone();
    let iv = e(1, 0)? * q.u.clone() + e(1, 1)? * q.v.clone();
    PadicPoint::new(iu, iv, p)
}

/// Exact image of a ball under a rational invertible g:
/// g(B(c, p^{−k})) = B(g·c, p^{−k}·|det g| / |g·c|²) provided
/// p^{−k}·‖g‖ < |g·c| (the ball stays clear of the pole); errors otherwise.
/// Norms are sup-norms of the primitive representative's image.
pub fn padic_image_ball(g: &QMatrix, b: &PadicBall, p: u64) -> P1Result<PadicBall> {
    if g.dim() != 2 {
        return Err(P1Error::BadMatrix);
    }
    let det = g.det().as_rat().cloned().ok_or(P1Error::BadMatrix)?;
    if det.is_zero() {
        return Err(P1Error::BadMatrix);
    }
    let v_det = rat_val_p(&det, p).expect("nonzero");
    // ‖g‖ = p^{−min entry valuation}; image vector g·c with c primitive.
    let mut min_entry_val: Option<i64> = None;
    for i in 0..2 {
        for j in 0..2 {
            let r = g[(i, j)].as_rat().ok_or(P1Error::BadMatrix)?;
            if let Some(v) = rat_val_p(r, p) {
                min_entry_val = Some(match min_entry_val {
                    None => v,
                    Some(m) => m.min(v),
                });
            }
        }
    }
    let vg = min_entry_val.ok_or(P1Error::BadMatrix)?;
    let e = |i: usize, j: usize| -> Rat { g[(i, j)].as_rat().cloned().expect("rational") };
    let iu = e(0, 0) * b.center.u.clone() + e(0, 1) * b.center.v.clone();
    let iv = e(1, 0) * b.center.u.clone() + e(1, 1) * b.center.v.clone();
    let vu = rat_val_p(&iu, p);
    let vv = rat_val_p(&iv, p);
    let v_gc = match (vu, vv) {
        (Some(a), Some(bv)) => a.min(bv),
        (Some(a), None) => a,
        (None, Some(bv)) => bv,
        (None, None) => return Err(P1Error::BadMatrix),
    };
    // Pole-clearance: p^{−k}·p^{−vg} < p^{−v_gc}  ⟺  k + vg > v_gc.
    if b.radius_exp + vg <= v_gc {
        return Err(P1Error::BallImageUncertified);
    }
    // Image radius exponent: k + v(det) − 2·v(gc) … as p^{−e} arithmetic:
    // r' = p^{−k}·p^{−v_det}·p^{2·v_gc} = p^{−(k + v_det − 2·v_gc)}.
    let new_exp = b.radius_exp + v_det - 2 * v_gc;
    let center = PadicPoint::new(iu, iv, p)?;
    Ok(PadicBall::new(center, new_exp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalars::{rat, rat_i64};

    fn sl(n: i64, d: i64) -> P1Point {
        P1Point::from_rat(rat(n, d))
    }

    fn arc(lo: P1Point, hi: P1Point) -> Arc {
        Arc::new(lo, hi).unwrap()
    }

    #[test]
    fn circle_membership_with_wrap() {
        // Arc from slope 1 counterclockwise through infinity to slope −1.
        let a = arc(sl(1, 1), sl(-1, 1));
        assert!(a.contains_point(&sl(2, 1)));
        assert!(a.contains_point(&P1Point::Infinity));
        assert!(a.contains_point(&sl(-3, 2)));
        assert!(!a.contains_point(&sl(0, 1)));
        assert!(!a.contains_point(&sl(1, 2)));
        // Non-wrapping arc.
        let b = arc(sl(0, 1), sl(1, 1));
        assert!(b.contains_point(&sl(1, 2)));
        assert!(!b.contains_point(&P1Point::Infinity));
        assert!(!b.contains_point(&sl(-1, 2)));
    }

    #[test]
    fn arc_containment_and_disjointness() {
        let outer = arc(sl(0, 1), sl(1, 1));
        let inner = arc(sl(1, 4), sl(1, 2));
        let wrapping = arc(sl(1, 2), sl(1, 4));
        assert!(outer.contains_arc(&inner));
        assert!(!outer.contains_arc(&wrapping));
        let far = arc(sl(2, 1), sl(3, 1));
        assert!(outer.disjoint(&far));
        assert!(!outer.disjoint(&inner));
        // Shared endpoint means not disjoint (closed arcs).
        let touch = arc(sl(1, 1), sl(2, 1));
        assert!(!outer.disjoint(&touch));
    }

    #[test]
    fn sanov_generator_moves_arcs_exactly() {
        // x = [[1,2],[0,1]] on slopes: t ↦ t/(1+2t).
        let x = QMatrix::from_i64_rows(&[&[1, 2], &[0, 1]]);
        let img = apply_point(&x, &sl(1, 1)).unwrap();
        match img {
            P1Point::Slope(s) => assert_eq!(s, ExactScalar::from_rat(rat(1, 3))),
            _ => panic!(),
        }
        // The pole −1/2 goes to infinity.
        let img2 = apply_point(&x, &sl(-1, 2)).unwrap();
        assert!(matches!(img2, P1Point::Infinity));
        // Image of the arc [3/2 → ∞ → −3/2] (through infinity).
        let y_dom = arc(sl(3, 2), sl(-3, 2));
        let image = apply_arc(&x, &y_dom).unwrap();
        // [3/8, 3/4] through 1/2.
        match (&image.lo, &image.hi) {
            (P1Point::Slope(a), P1Point::Slope(b)) => {
                assert_eq!(a, &ExactScalar::from_rat(rat(3, 8)));
                assert_eq!(b, &ExactScalar::from_rat(rat(3, 4)));
            }
            _ => panic!(),
        }
        assert!(image.contains_point(&sl(1, 2)));
        assert!(!image.contains_point(&P1Point::Infinity));
    }

    #[test]
    fn sanov_invariant_arcs_certify_by_hand() {
        let x = QMatrix::from_i64_rows(&[&[1, 2], &[0, 1]]);
        let xi = x.inverse().unwrap();
        let y = QMatrix::from_i64_rows(&[&[1, 0], &[2, 1]]);
        let yi = y.inverse().unwrap();
        // Classical unit-circle domains: the arcs touch at slopes ±1 (the
        // parabolic fixed points of the mixed words), which is fine — the
        // freeness argument needs forward invariance plus one witness point
        // outside the x-side, not open disjointness.
        let a_x = arc(sl(0, 1), sl(1, 1));
        let b_x = arc(sl(-1, 1), sl(0, 1));
        let a_y = arc(sl(1, 1), P1Point::Infinity);
        let b_y = arc(P1Point::Infinity, sl(-1, 1));
        // Self-invariance.
        assert!(a_x.contains_arc(&apply_arc(&x, &a_x).unwrap()));
        assert!(b_x.contains_arc(&apply_arc(&xi, &b_x).unwrap()));
        assert!(a_y.contains_arc(&apply_arc(&y, &a_y).unwrap()));
        assert!(b_y.contains_arc(&apply_arc(&yi, &b_y).unwrap()));
        // Cross images.
        for dom in [&a_y, &b_y] {
            assert!(a_x.contains_arc(&apply_arc(&x, dom).unwrap()));
            assert!(b_x.contains_arc(&apply_arc(&xi, dom).unwrap()));
        }
        for dom in [&a_x, &b_x] {
            assert!(a_y.contains_arc(&apply_arc(&y, dom).unwrap()));
            assert!(b_y.contains_arc(&apply_arc(&yi, dom).unwrap()));
        }
        // Witness: ∞ lies in the y-side and outside the x-side.
        let z = P1Point::Infinity;
        assert!(a_y.contains_point(&z) || b_y.contains_point(&z));
        assert!(!a_x.contains_point(&z) && !b_x.contains_point(&z));
        // Spot-check exact image endpoints: x(B_y) = [1/2, 1] is tight.
        let img = apply_arc(&x, &b_y).unwrap();
        assert!(img.lo.same_point(&sl(1, 2)));
        assert!(img.hi.same_point(&sl(1, 1)));
    }

    #[test]
    fn orientation_reversal() {
        let m = QMatrix::from_i64_rows(&[&[0, 1], &[1, 0]]); // det −1, t ↦ 1/t
        let a = arc(sl(1, 2), sl(2, 1));
        let img = apply_arc(&m, &a).unwrap();
        // 1/t maps [1/2, 2] onto [1/2, 2] reversing; as a set it is the same.
        assert!(img.contains_point(&sl(1, 1)));
        assert!(img.contains_point(&sl(1, 2)));
        assert!(img.contains_point(&sl(2, 1)));
        assert!(!img.contains_point(&sl(3, 1)));
    }

    #[test]
    fn hull_respects_avoidance() {
        let a = arc(sl(1, 4), sl(1, 2));
        let b = arc(sl(3, 4), sl(1, 1));
        let avoid = arc(sl(2, 1), sl(3, 1));
        let h = hull_arcs(&[&a, &b], &[&avoid]).unwrap();
        assert!(h.contains_arc(&a));
        assert!(h.contains_arc(&b));
        assert!(h.disjoint(&avoid));
    }

    #[test]
    fn dyadic_walkers_bracket_quadratics() {
        // √2 as a slope.
        let s = ExactScalar::quadratic(Rat::zero(), Rat::one(), BigInt::from(2));
        let above = dyadic_above(&s, 6);
        let below = dyadic_below(&s, 6);
        assert!(ExactScalar::from_rat(below.clone()).cmp_total(&s) == Ordering::Less);
        assert!(s.cmp_total(&ExactScalar::from_rat(above.clone())) == Ordering::Less);
        let gap = above - below;
        assert!(gap <= rat(1, 16));
    }

    #[test]
    fn padic_points_and_balls() {
        let p = 5u64;
        let a = PadicPoint::new(rat_i64(1), rat_i64(0), p).unwrap();
        let b = PadicPoint::new(rat_i64(1), rat_i64(25), p).unwrap();
        assert_eq!(a.dist_exp(&b, p), Some(2));
        let ball = PadicBall::new(a.clone(), 1);
        assert!(ball.contains_point(&b, p));
        let c = PadicPoint::new(rat_i64(1), rat_i64(1), p).unwrap();
        assert!(!ball.contains_point(&c, p));
        // Nesting and disjointness are ultrametric.
        let small = PadicBall::new(b.clone(), 3);
        assert!(small.contained_in(&ball, p));
        let other = PadicBall::new(PadicPoint::new(rat_i64(0), rat_i64(1), p).unwrap(), 1);
        assert!(ball.disjoint(&other, p));
    }

    #[test]
    fn padic_ball_image_diagonal() {
        let p = 5u64;
        // g = diag(1/5, 5): the eigenvalue 1/5 is 5-adically LARGE, so the
        // attracting point is e₁ = [1 : 0]; in the chart t = v/u the map is
        // t ↦ 25t, contracting |t|₅ by 25.
        let g = QMatrix::from_rat_rows(vec![
            vec![rat(1, 5), rat_i64(0)],
            vec![rat_i64(0), rat_i64(5)],
        ]);
        let around_e1 = PadicBall::new(PadicPoint::new(rat_i64(1), rat_i64(0), p).unwrap(), 1);
        let img = padic_image_ball(&g, &around_e1, p).unwrap();
        assert_eq!(img.radius_exp, 3);
        assert!(img.contained_in(&around_e1, p));
        // A concrete interior point contracts with the ball.
        let q = PadicPoint::new(rat_i64(1), rat_i64(5), p).unwrap();
        assert!(around_e1.contains_point(&q, p));
        let iq = padic_apply(&g, &q, p).unwrap();
        assert!(img.contains_point(&iq, p));
        // Balls that reach the pole region are refused, not mismapped.
        let huge = PadicBall::new(PadicPoint::new(rat_i64(1), rat_i64(1), p).unwrap(), 0);
        assert!(matches!(
            padic_image_ball(&g, &huge, p),
            Err(P1Error::BallImageUncertified)
        ));
    }

    #[test]
    fn padic_image_membership_soundness_spotcheck() {
        // For a handful of sample points inside the ball, images land in the
        // computed image ball.
        let p = 5u64;
        let g = QMatrix::from_rat_rows(vec![
            vec![rat_i64(2), rat_i64(1)],
            vec![rat(1, 5), rat_i64(3)],
        ]);
        let ball = PadicBall::new(PadicPoint::new(rat_i64(1), rat_i64(10), p).unwrap(), 2);
        let img = padic_image_ball(&g, &ball, p).unwrap();
        for (su, sv) in [(1i64, 10i64), (26, 10), (1, 35), (126, 135)] {
            let q = PadicPoint::new(rat_i64(su), rat_i64(sv), p).unwrap();
            assert!(ball.contains_point(&q, p));
            let iq = padic_apply(&g, &q, p).unwrap();
            assert!(img.contains_point(&iq, p));
        }
    }
}
