//! Freeness certificates: the ping criterion for free semigroups, a
//! two-generator table-tennis criterion for free groups driven by exact
//! dynamics on the projective line, and an exhaustive word-collision
//! refuter used as an independent soundness oracle.

use crate::conjugators::ProximalForm;
use crate::linalg::QMatrix;
use crate::p1dyn::{
    apply_arc, apply_point, padic_apply, padic_image_ball, rational_bracket, Arc, P1Point,
    PadicBall, PadicPoint,
};
use crate::projective::{
    check_proximal, lipschitz_bound, proj_dist_pp, proj_dist_sq_ph, ProjHyperplane, ProjPoint,
};
use crate::scalars::{rat, rat_val_p, ExactScalar, MagOrder, Magnitude, Place, PlaceCtx, Precision, Rat};
use num::bigint::BigInt;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Display;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PingError {
    #[error("b fixes the attracting point [e1]")]
    BFixesE1,
    #[error("Lipschitz constant of b exceeds the eps threshold")]
    LipschitzTooLarge,
    #[error("b moves [e1] too close to the repelling hyperplane")]
    SeparationTooSmall,
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type PingResult<T> = Result<T, PingError>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TtError {
    #[error("an input element has no certified attracting structure on the projective line")]
    NoProximalStructure,
    #[error("the fixed-point data of the two elements are not separated")]
    SeparationFailed,
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type TtResult<T> = Result<T, TtError>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RefuteError {
    #[error("word enumeration would exceed the budget")]
    BudgetExceeded,
    #[error("group mode requires both elements invertible")]
    NotInvertible,
}

fn ping_inc<E: Display>(e: E) -> PingError {
    PingError::Inconclusive(e.to_string())
}

fn tt_inc<E: Display>(e: E) -> TtError {
    TtError::Inconclusive(e.to_string())
}

fn ctx_for(place: Place) -> PlaceCtx {
    match place {
        Place::Real => PlaceCtx::real(),
        Place::Finite { p } => PlaceCtx::finite(p).expect("place carries a valid prime"),
    }
}

// ---------------------------------------------------------------------------
// Ping certificates (free semigroups)
// ---------------------------------------------------------------------------

/// A certified margin: the quantity that was bounded, the bound, the slack,
/// and the certified comparison outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginRecord {
    pub quantity: Magnitude,
    pub bound: Magnitude,
    pub margin: Magnitude,
    pub comparison: MagOrder,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MovesRecord {
    pub pass: bool,
    /// The image vector b·e₁ witnessing the projective displacement.
    pub witness: Vec<ExactScalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PingChecks {
    pub b_moves_e1: MovesRecord,
    pub lipschitz_ok: MarginRecord,
    pub separation_ok: MarginRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PingCertificate {
    pub kind: String,
    pub place: Place,
    pub a_form: ProximalForm,
    pub b: QMatrix,
    #[serde(with = "crate::scalars::rat_string")]
    pub eps: Rat,
    pub checks: PingChecks,
    pub conclusion_pair: (QMatrix, QMatrix),
    /// Certified positive lower bound for the separation radius τ: every
    /// t ≤ tau_lower has b(B_t([e₁])) ∩ B_t([e₁]) = ∅.
    #[serde(with = "crate::scalars::rat_string")]
    pub tau_lower: Rat,
    pub conclusion: String,
}

const PING_BITS_START: u32 = 128;
const PING_BITS_CAP: u32 = 4096;

/// Certify that (a, b·a) generate a free semigroup, for a in proximal
/// normal form at eps and b satisfying the displacement, Lipschitz, and
/// separation conditions. All comparisons against √ε and ε^{−1/2} are done
/// by squaring, in exact rational arithmetic on certified bounds.
pub fn certify_ping(
    a_form: &ProximalForm,
    b: &QMatrix,
    eps: &Rat,
    place: Place,
) -> PingResult<PingCertificate> {
    let d = a_form.a_prime.dim();
    if b.dim() != d {
        return Err(ping_inc("dimension mismatch between a and b"));
    }
    if eps <= &Rat::zero() || eps > &rat(1, 4) {
        return Err(ping_inc(format!("eps must lie in (0, 1/4], got {}", eps)));
    }
    if a_form.place != place {
        return Err(ping_inc("certificate place differs from the normal form's place"));
    }
    let mut ctx = ctx_for(place);

    // Precondition: the stored normal form is proximal at eps.
    let report = check_proximal(&a_form.a_prime, &a_form.alpha1, &a_form.hyperplane, eps, &mut ctx)
        .map_err(ping_inc)?;
    if !report.pass {
        return Err(ping_inc("normal form fails the proximality test at eps"));
    }
    if b.inverse().is_none() {
        return Err(ping_inc("b is singular; the Lipschitz condition is undefined"));
    }

    // Check 1: b·[e₁] ≠ [e₁], decided exactly on the first column of b.
    let w: Vec<ExactScalar> = (0..d).map(|i| b[(i, 0)].clone()).collect();
    let moves = w.iter().skip(1).any(|c| !c.is_zero());
    if !moves {
        return Err(PingError::BFixesE1);
    }
    let moves_record = MovesRecord { pass: true, witness: w.clone() };

    // Check 2: (‖b‖·‖b⁻¹‖)² ≤ ε^{−1/2} − 1, squared to (X+1)² ≤ 1/ε.
    let inv_eps = eps.recip();
    let mut bits = PING_BITS_START;
    let (lip_record, l_upper) = loop {
        let lv = lipschitz_bound(b, &mut ctx, bits).map_err(ping_inc)?;
        if let Some(exact) = lv.exact.as_ref().and_then(|e| e.as_rat()) {
            let q = (exact.clone() + Rat::one()) * (exact.clone() + Rat::one());
            if q <= inv_eps {
                let rec = MarginRecord {
                    quantity: lv.magnitude.clone(),
                    bound: Magnitude::point(inv_eps.clone()),
                    margin: Magnitude::point(inv_eps.clone() - q.clone()),
                    comparison: if q == inv_eps { MagOrder::Equal } else { MagOrder::Less },
                    pass: true,
                };
                break (rec, exact.clone());
            }
            return Err(PingError::LipschitzTooLarge);
        }
        let hi = lv.magnitude.upper_rat();
        let qhi = (hi.clone() + Rat::one()) * (hi.clone() + Rat::one());
        if qhi <= inv_eps {
            let rec = MarginRecord {
                quantity: lv.magnitude.clone(),
                bound: Magnitude::point(inv_eps.clone()),
                margin: Magnitude::point(inv_eps.clone() - qhi),
                comparison: MagOrder::Less,
                pass: true,
            };
            break (rec, hi);
        }
        let lo = lv.magnitude.lower_rat();
        let qlo = (lo.clone() + Rat::one()) * (lo + Rat::one());
        if qlo > inv_eps {
            return Err(PingError::LipschitzTooLarge);
        }
        bits *= 2;
        if bits > PING_BITS_CAP {
            return Err(ping_inc("precision cap reached while bounding the Lipschitz constant"));
        }
    };

    // Check 3: d(b·[e₁], [H]) ≥ √ε, squared to d² ≥ ε.
    let u_pt = ProjPoint::new(w.clone()).map_err(ping_inc)?;
    let mut bits = PING_BITS_START;
    let sep_record = loop {
        let dsq = proj_dist_sq_ph(&u_pt, &a_form.hyperplane, &mut ctx, bits).map_err(ping_inc)?;
        if let Some(exact) = dsq.exact.as_ref() {
            let cmp = exact.cmp_total(&ExactScalar::from_rat(eps.clone()));
            if cmp == Ordering::Less {
                return Err(PingError::SeparationTooSmall);
            }
            let lo = dsq.magnitude.lower_rat();
            break MarginRecord {
                quantity: dsq.magnitude.clone(),
                bound: Magnitude::point(eps.clone()),
                margin: Magnitude::point((lo - eps.clone()).max(Rat::zero())),
                comparison: if cmp == Ordering::Equal { MagOrder::Equal } else { MagOrder::Greater },
                pass: true,
            };
        }
        let lo = dsq.magnitude.lower_rat();
        if &lo >= eps {
            break MarginRecord {
                quantity: dsq.magnitude.clone(),
                bound: Magnitude::point(eps.clone()),
                margin: Magnitude::point(lo - eps.clone()),
                comparison: MagOrder::Greater,
                pass: true,
            };
        }
        let hi = dsq.magnitude.upper_rat();
        if &hi < eps {
            return Err(PingError::SeparationTooSmall);
        }
        bits *= 2;
        if bits > PING_BITS_CAP {
            return Err(ping_inc("precision cap reached while certifying separation"));
        }
    };

    // Certified positive lower bound for τ: b displaces B_t([e₁]) off itself
    // whenever t·(1 + L) < d(b[e₁], [e₁]), so τ ≥ min(eps, D_lo/(1 + L_hi)).
    let e1 = ProjPoint::from_rational(unit_vec(d)).map_err(ping_inc)?;
    let mut bits = PING_BITS_START;
    let d_lo = loop {
        let dist = proj_dist_pp(&u_pt, &e1, &mut ctx, bits).map_err(ping_inc)?;
        let lo = dist.lower_rat();
        if lo.is_positive() {
            break lo;
        }
        bits *= 2;
        if bits > PING_BITS_CAP {
            return Err(ping_inc("precision cap reached while bounding the displacement of [e1]"));
        }
    };
    let tau_lower = {
        let cand = d_lo / (Rat::one() + l_upper);
        if &cand < eps { cand } else { eps.clone() }
    };

    let conclusion_pair = (a_form.a_prime.clone(), b.mul(&a_form.a_prime));
    Ok(PingCertificate {
        kind: "ping".to_string(),
        place,
        a_form: a_form.clone(),
        b: b.clone(),
        eps: eps.clone(),
        checks: PingChecks {
            b_moves_e1: moves_record,
            lipschitz_ok: lip_record,
            separation_ok: sep_record,
        },
        conclusion_pair,
        tau_lower,
        conclusion: "the pair generates a free semigroup of rank 2".to_string(),
    })
}

/// Independent replay: recompute every check of a ping certificate from its
/// stored inputs and confirm the stored conclusions.
pub fn verify_ping(cert: &PingCertificate) -> PingResult<()> {
    let fresh = certify_ping(&cert.a_form, &cert.b, &cert.eps, cert.place)?;
    if fresh.conclusion_pair != cert.conclusion_pair {
        return Err(ping_inc("stored conclusion pair does not match b·a recomputed"));
    }
    if !cert.tau_lower.is_positive() || cert.tau_lower > fresh.tau_lower {
        return Err(ping_inc("stored tau lower bound is not certified by replay"));
    }
    if !(cert.checks.b_moves_e1.pass && cert.checks.lipschitz_ok.pass && cert.checks.separation_ok.pass)
    {
        return Err(ping_inc("stored checks are not all marked passing"));
    }
    Ok(())
}

fn unit_vec(d: usize) -> Vec<Rat> {
    let mut v = vec![Rat::zero(); d];
    v[0] = Rat::one();
    v
}

// ---------------------------------------------------------------------------
// Table-tennis certificates (free groups of rank 2, dimension 2)
// ---------------------------------------------------------------------------

/// A forward-invariant domain on the projective line at one place: a finite
/// disjoint union of closed arcs (real) or of balls (finite place). Unions
/// are essential: when one generator's fixed points sit at a very different
/// scale from the other's, the absorbed orbit segments form separated
/// clusters that no single arc can cover without swallowing a forbidden
/// fixed point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TtDomain {
    Arcs(Vec<Arc>),
    Balls { p: u64, balls: Vec<PadicBall> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TtWitness {
    Real(P1Point),
    Padic(PadicPoint),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TtGenerator {
    pub label: String,
    pub element: QMatrix,
    pub attracting: ProjPoint,
    pub repelling_hyperplane: ProjHyperplane,
    pub domain: TtDomain,
    /// Certified depth by which the images land inside the domain (zero when
    /// the invariant domains touch, as happens for parabolic generators).
    pub contraction_margin: Magnitude,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationRecord {
    pub pair: (String, String),
    pub distance: Magnitude,
    pub positive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableTennisCertificate {
    pub kind: String,
    pub place: Place,
    pub x: QMatrix,
    pub y: QMatrix,
    #[serde(with = "crate::scalars::rat_string")]
    pub eps: Rat,
    /// Fixed order: x, x_inv, y, y_inv.
    pub generators: Vec<TtGenerator>,
    pub separations: Vec<SeparationRecord>,
    pub witness: TtWitness,
    pub conclusion: String,
}

/// The descending eps grid used by certificate searches.
pub fn default_eps_grid(place: Place) -> Vec<Rat> {
    let mut grid = vec![rat(1, 4), rat(1, 10), rat(1, 100), rat(1, 1000)];
    if let Place::Finite { p } = place {
        let pb = Rat::from_integer(BigInt::from(p));
        let mut q = pb.clone();
        for _ in 0..3 {
            grid.push(q.recip());
            q = q * pb.clone();
        }
    }
    grid.sort_by(|a, b| b.cmp(a));
    grid.dedup();
    grid.retain(|e| e <= &rat(1, 4) && e.is_positive());
    grid
}

/// Exact fixed-point structure of a 2×2 matrix on the real projective line.
enum RealKind {
    /// Distinct eigenvalue moduli with representable eigendata.
    Lox { att: P1Point, rep: P1Point },
    /// Parabolic: a unique fixed point, attracting on one side.
    Par { fixed: P1Point },
    /// Eigenvalues exist but are not representable in the working field;
    /// seeds are found by certified forward iteration instead.
    Unknown,
}

fn two() -> ExactScalar {
    ExactScalar::from_rat(rat(2, 1))
}

fn real_fixed_kind(z: &QMatrix) -> TtResult<RealKind> {
    if z.is_scalar() {
        return Err(TtError::NoProximalStructure);
    }
    let t = z.trace();
    let det = z.det();
    let t2 = t.checked_mul(&t).map_err(tt_inc)?;
    let four_det = det
        .checked_mul(&ExactScalar::from_rat(rat(4, 1)))
        .map_err(tt_inc)?;
    let disc = t2.checked_add(&-four_det).map_err(tt_inc)?;
    match disc.signum() {
        s if s < 0 => Err(TtError::NoProximalStructure),
        0 => {
            // Parabolic: λ = t/2, fixed point = the kernel direction.
            let lam = t.clone().checked_mul(&two().inverse()).map_err(tt_inc)?;
            let shifted = z.sub(&QMatrix::diagonal(vec![lam.clone(), lam]));
            let v = shifted
                .kernel_vector()
                .ok_or_else(|| tt_inc("parabolic matrix has no kernel direction"))?;
            let fixed = P1Point::from_homogeneous(&v[0], &v[1]).map_err(tt_inc)?;
            Ok(RealKind::Par { fixed })
        }
        _ => match disc.sqrt_exact() {
            None => Ok(RealKind::Unknown),
            Some(r) => {
                let half = two().inverse();
                let l1 = t.checked_add(&r).map_err(tt_inc)?.checked_mul(&half).map_err(tt_inc)?;
                let l2 = t.checked_add(&-r).map_err(tt_inc)?.checked_mul(&half).map_err(tt_inc)?;
                let cmp = l1.abs().cmp_total(&l2.abs());
                if cmp == Ordering::Equal {
                    // Equal moduli: no attracting point on the circle.
                    return Err(TtError::NoProximalStructure);
                }
                let (big, small) = if cmp == Ordering::Greater { (l1, l2) } else { (l2, l1) };
                // The eigenvalues may lie in a quadratic field other than
                // the one carrying the entries (the matrix can be a
                // conjugate of a rational one); exact eigendirections are
                // then unavailable and iteration takes over.
                if !field_compatible(z, &big) {
                    return Ok(RealKind::Unknown);
                }
                let att = eigen_direction(z, &big)?;
                let rep = eigen_direction(z, &small)?;
                Ok(RealKind::Lox { att, rep })
            }
        },
    }
}

// TEMPORARY instrumentation helpers (remove before finalizing).
fn dbg_rat(r: &Rat) -> f64 {
    use num::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

fn dbg_p1(p: &P1Point) -> String {
    match p {
        P1Point::Infinity => "inf".to_string(),
        P1Point::Slope(s) => {
            let (lo, hi) = rational_bracket(s, 64);
            let bits = s.rational_part().numer().magnitude().bits()
                + s.rational_part().denom().magnitude().bits();
            format!("{:.6e}(bits {})", (dbg_rat(&lo) + dbg_rat(&hi)) / 2.0, bits)
        }
    }
}

fn dbg_arc(a: &Arc) -> String {
    format!("[{} .. {}]", dbg_p1(&a.lo), dbg_p1(&a.hi))
}
fn dbg_ball(b: &PadicBall) -> String {
    format!("B(({}, {}), exp {})", dbg_rat(&b.center.u), dbg_rat(&b.center.v), b.radius_exp)
}

fn exact_points(k: &RealKind) -> Vec<P1Point> {
    match k {
        RealKind::Lox { att, rep } => vec![att.clone(), rep.clone()],
        RealKind::Par { fixed } => vec![fixed.clone()],
        RealKind::Unknown => vec![],
    }
}

/// Whether the scalar's quadratic field is compatible with every entry of
/// the matrix, so that mixed arithmetic cannot fail.
fn field_compatible(z: &QMatrix, s: &ExactScalar) -> bool {
    match s.radicand() {
        None => true,
        Some(ds) => {
            let d = z.dim();
            for i in 0..d {
                for j in 0..d {
                    if let Some(dz) = z[(i, j)].radicand() {
                        if dz != ds {
                            return false;
                        }
                    }
                }
            }
            true
        }
    }
}

fn eigen_direction(z: &QMatrix, lam: &ExactScalar) -> TtResult<P1Point> {
    let shifted = z.sub(&QMatrix::diagonal(vec![lam.clone(), lam.clone()]));
    let v = shifted
        .kernel_vector()
        .ok_or_else(|| tt_inc("eigenvalue without a kernel direction"))?;
    P1Point::from_homogeneous(&v[0], &v[1]).map_err(tt_inc)
}

fn projpoint_of(p: &P1Point) -> ProjPoint {
    let (u, v) = p.homogeneous();
    ProjPoint::new(vec![u, v]).expect("projective point is nonzero")
}

/// The hyperplane of P¹ supported at the point [p : q]: the kernel of the
/// covector (q, −p).
fn hyperplane_through(p: &P1Point) -> ProjHyperplane {
    let (u, v) = p.homogeneous();
    ProjHyperplane::new(vec![v, -u]).expect("covector is nonzero")
}

fn slope_plus(p: &P1Point, delta: &Rat) -> TtResult<P1Point> {
    match p {
        P1Point::Infinity => Err(tt_inc("cannot offset the point at infinity by a slope")),
        P1Point::Slope(s) => Ok(P1Point::Slope(
            s.checked_add(&ExactScalar::from_rat(delta.clone())).map_err(tt_inc)?,
        )),
    }
}

/// A seed arc around an attracting fixed point, certified forward-invariant
/// for z, or None if no candidate of the allowed sizes verifies.
fn real_seed(z: &QMatrix, kind: &RealKind, k: u32) -> TtResult<Option<(Arc, P1Point)>> {
    match kind {
        RealKind::Lox { att, .. } => {
            for kk in k..k + 16 {
                let cand = bracket_arc(att, kk)?;
                let img = apply_arc(z, &cand).map_err(tt_inc)?;
                if cand.contains_arc(&img) {
                    return Ok(Some((cand, att.clone())));
                }
            }
            Ok(None)
        }
        RealKind::Par { fixed } => {
            for kk in k..k + 16 {
                let sigma = Rat::new(BigInt::one(), BigInt::one() << kk);
                let (plus, minus) = match fixed {
                    P1Point::Slope(_) => {
                        let up = slope_plus(fixed, &sigma)?;
                        let dn = slope_plus(fixed, &(-sigma.clone()))?;
                        (
                            Arc::new(fixed.clone(), up).map_err(tt_inc)?,
                            Arc::new(dn, fixed.clone()).map_err(tt_inc)?,
                        )
                    }
                    P1Point::Infinity => {
                        let m = Rat::from_integer(BigInt::one() << kk);
                        (
                            Arc::new(P1Point::from_rat(m.clone()), P1Point::Infinity)
                                .map_err(tt_inc)?,
                            Arc::new(P1Point::Infinity, P1Point::from_rat(-m)).map_err(tt_inc)?,
                        )
                    }
                };
                for cand in [plus, minus] {
                    let img = apply_arc(z, &cand).map_err(tt_inc)?;
                    if cand.contains_arc(&img) {
                        return Ok(Some((cand, fixed.clone())));
                    }
                }
            }
            Ok(None)
        }
        RealKind::Unknown => {
            // Certified forward iteration: follow orbits until a small
            // bracket arc around an iterate maps into itself.
            let starts = [
                P1Point::from_rat(Rat::zero()),
                P1Point::Infinity,
                P1Point::from_rat(Rat::one()),
                P1Point::from_rat(-Rat::one()),
            ];
            for start in starts {
                let mut t = start;
                for i in 0..24u32 {
                    t = apply_point(z, &t).map_err(tt_inc)?;
                    t = compress_point(&t, k + 24);
                    if i < 8 {
                        continue;
                    }
                    let cand = bracket_arc(&t, k + (i - 8))?;
                    let img = apply_arc(z, &cand).map_err(tt_inc)?;
                    if cand.contains_arc(&img) {
                        return Ok(Some((cand, t)));
                    }
                }
            }
            Ok(None)
        }
    }
}

fn bracket_arc(p: &P1Point, k: u32) -> TtResult<Arc> {
    match p {
        P1Point::Slope(s) => {
            let (lo, hi) = rational_bracket(s, k);
            Arc::new(P1Point::from_rat(lo), P1Point::from_rat(hi)).map_err(tt_inc)
        }
        P1Point::Infinity => {
            let m = Rat::from_integer(BigInt::one() << k);
            Arc::new(P1Point::from_rat(m.clone()), P1Point::from_rat(-m)).map_err(tt_inc)
        }
    }
}

/// Domain index pairing: domain i must absorb images (under generator i) of
/// itself and of both domains of the other generator.
fn partner_indices(i: usize) -> [usize; 2] {
    if i < 2 {
        [2, 3]
    } else {
        [0, 1]
    }
}

/// The simplest rational (smallest denominator, then smallest numerator
/// magnitude) in the closed interval [lo, hi], by Stern–Brocot descent.
fn simplest_in(lo: &Rat, hi: &Rat) -> Rat {
    assert!(lo <= hi);
    if lo <= &Rat::zero() && &Rat::zero() <= hi {
        return Rat::zero();
    }
    if hi < &Rat::zero() {
        return -simplest_in(&-hi.clone(), &-lo.clone());
    }
    // 0 < lo ≤ hi.
    let lo_ceil = lo.ceil();
    if &lo_ceil <= hi {
        return lo_ceil;
    }
    let fl = lo.floor();
    // lo and hi share the integer part fl; recurse on the fractional parts.
    let frac = simplest_in(&(hi.clone() - fl.clone()).recip(), &(lo.clone() - fl.clone()).recip());
    fl + frac.recip()
}

/// Round a rational slope onto the dyadic lattice of resolution 2^{-m},
/// chart-aware: slopes of magnitude at most one round additively, larger
/// slopes round through the reciprocal chart so the lattice stays
/// projectively meaningful near the pole. `up` moves counterclockwise
/// (ascending slope); rounding across the pole lands at infinity.
fn dyadic_round(r: &Rat, m: u32, up: bool) -> P1Point {
    let scale = Rat::from_integer(BigInt::one() << (m as usize));
    let grid = |v: &Rat, toward_up: bool| -> Rat {
        let scaled = v.clone() * scale.clone();
        let node = if toward_up { scaled.ceil() } else { scaled.floor() };
        node / scale.clone()
    };
    if r.abs() <= Rat::one() {
        return P1Point::from_rat(grid(r, up));
    }
    // |r| > 1: the reciprocal chart t = 1/r reverses orientation, so the
    // rounding direction flips; t = 0 is the pole at infinity.
    let t = grid(&r.recip(), !up);
    if t.is_zero() {
        P1Point::Infinity
    } else {
        P1Point::from_rat(t.recip())
    }
}

/// Cap the coordinate size of an orbit point: a slope carrying a large
/// exact representation is replaced by a nearby dyadic rational at
/// resolution well below the bracketing scale in use. Orbit tracking only
/// needs a point's location, never its exact identity, so compression
/// keeps long certified iterations cheap.
fn compress_point(p: &P1Point, m: u32) -> P1Point {
    match p {
        P1Point::Infinity => P1Point::Infinity,
        P1Point::Slope(s) => {
            let dense = match s.as_rat() {
                Some(r) => r.numer().magnitude().bits() + r.denom().magnitude().bits() > 160,
                None => true,
            };
            if !dense {
                return p.clone();
            }
            let (lo, hi) = rational_bracket(s, m);
            let mid = (lo + hi) / rat(2, 1);
            // Reciprocal-chart rounding of a slope of magnitude S carries an
            // S²-amplified error back in slope space; deepen the lattice to
            // compensate so compression is scale-uniform.
            let extra = if mid.abs() > Rat::one() {
                2 * ceil_log2(&mid.abs())
            } else {
                0
            };
            dyadic_round(&mid, m + extra, false)
        }
    }
}

/// Enlarge an arc outward onto the dyadic lattice: the lower endpoint moves
/// clockwise, the upper counterclockwise. Exact quadratic endpoints are
/// bracketed by rationals first, so every snapped arc has rational or
/// infinite endpoints with denominators bounded by the lattice. None when
/// the enlargement degenerates (the arc would swallow the whole circle).
fn snap_arc_out(a: &Arc, m: u32) -> Option<Arc> {
    let snap = |p: &P1Point, up: bool| -> P1Point {
        match p {
            P1Point::Infinity => P1Point::Infinity,
            P1Point::Slope(s) => {
                let r = match s.as_rat() {
                    Some(r) => r.clone(),
                    None => {
                        let (lo, hi) = rational_bracket(s, m + 4);
                        if up {
                            hi
                        } else {
                            lo
                        }
                    }
                };
                dyadic_round(&r, m, up)
            }
        }
    };
    let lo = snap(&a.lo, false);
    let hi = snap(&a.hi, true);
    if lo.same_point(&hi) {
        None
    } else {
        Some(Arc { lo, hi })
    }
}

/// Upper-boundable gap between two circle points with rational (or
/// infinite) coordinates, measured in whichever affine chart holds both;
/// None when they straddle charts (they are then far apart on the scale of
/// any bridging threshold in use).
fn point_gap(a: &P1Point, b: &P1Point) -> Option<Rat> {
    enum Coord {
        Inf,
        Fin(Rat),
        Irr,
    }
    let coord = |p: &P1Point| -> Coord {
        match p {
            P1Point::Infinity => Coord::Inf,
            P1Point::Slope(s) => match s.as_rat() {
                Some(r) => Coord::Fin(r.clone()),
                None => Coord::Irr,
            },
        }
    };
    let one = Rat::one();
    match (coord(a), coord(b)) {
        (Coord::Inf, Coord::Inf) => Some(Rat::zero()),
        (Coord::Inf, Coord::Fin(y)) | (Coord::Fin(y), Coord::Inf) => {
            if y.abs() >= one {
                Some(y.recip().abs())
            } else {
                None
            }
        }
        (Coord::Fin(x), Coord::Fin(y)) => {
            if x.abs() <= one && y.abs() <= one {
                Some((x - y).abs())
            } else if x.abs() >= one && y.abs() >= one {
                // Reciprocal-chart distance; for opposite signs this is the
                // distance through the pole.
                Some((x.recip() - y.recip()).abs())
            } else {
                None
            }
        }
        // Irrational endpoints carry no cheap gap bound; never bridge them.
        _ => None,
    }
}

fn gap_at_most(a: &P1Point, b: &P1Point, tau: &Rat) -> bool {
    matches!(point_gap(a, b), Some(g) if &g <= tau)
}

/// Union of two arcs that overlap, touch, or sit within a bridgeable gap of
/// at most tau, as a single covering arc. Bridging only ever enlarges the
/// union, which is sound here because the final configuration is certified
/// as a whole. None when the union would be the entire circle, or when the
/// arcs are genuinely separated.
fn join_arcs(a: &Arc, b: &Arc, tau: &Rat) -> Option<Arc> {
    if a.contains_arc(b) {
        return Some(a.clone());
    }
    if b.contains_arc(a) {
        return Some(b.clone());
    }
    if !a.disjoint(b) {
        let a_has_blo = a.contains_point(&b.lo);
        let b_has_alo = b.contains_point(&a.lo);
        if a_has_blo && b_has_alo {
            // Overlapping at both ends: the union is the whole circle.
            return None;
        }
        if a_has_blo {
            return Some(Arc { lo: a.lo.clone(), hi: b.hi.clone() });
        }
        if b_has_alo {
            return Some(Arc { lo: b.lo.clone(), hi: a.hi.clone() });
        }
        return None;
    }
    if gap_at_most(&a.hi, &b.lo, tau) {
        let joined = Arc { lo: a.lo.clone(), hi: b.hi.clone() };
        if joined.lo.same_point(&joined.hi) {
            return None;
        }
        return Some(joined);
    }
    if gap_at_most(&b.hi, &a.lo, tau) {
        let joined = Arc { lo: b.lo.clone(), hi: a.hi.clone() };
        if joined.lo.same_point(&joined.hi) {
            return None;
        }
        return Some(joined);
    }
    None
}

/// Insert an arc into a union, merging every member it overlaps or comes
/// within tau of, transitively. None when the union grows into the full
/// circle.
fn insert_arc(dom: &mut Vec<Arc>, new_arc: Arc, tau: &Rat) -> Option<()> {
    let mut cur = new_arc;
    let mut idx = 0;
    while idx < dom.len() {
        let touching = !cur.disjoint(&dom[idx])
            || gap_at_most(&cur.hi, &dom[idx].lo, tau)
            || gap_at_most(&dom[idx].hi, &cur.lo, tau);
        if touching {
            let other = dom.remove(idx);
            cur = join_arcs(&cur, &other, tau)?;
            // The enlarged arc may now reach members already scanned.
            idx = 0;
        } else {
            idx += 1;
        }
    }
    dom.push(cur);
    Some(())
}

fn set_contains_arc(set: &[Arc], a: &Arc) -> bool {
    set.iter().any(|u| u.contains_arc(a))
}

fn set_contains_point(set: &[Arc], pt: &P1Point) -> bool {
    set.iter().any(|u| u.contains_point(pt))
}

/// All 12 forward containments for a four-domain configuration of arc
/// unions: generator i maps every member of its own union and of both
/// opposing unions into some member of its own union.
fn arcsets_certified(gens: &[QMatrix; 4], doms: &[Vec<Arc>; 4]) -> TtResult<bool> {
    for i in 0..4 {
        for s in std::iter::once(i).chain(partner_indices(i)) {
            for a in &doms[s] {
                let img = apply_arc(&gens[i], a).map_err(tt_inc)?;
                if !set_contains_arc(&doms[i], &img) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Grow four seed arc unions to a forward-invariant configuration: each
/// required image that escapes its target union is snapped outward onto
/// the dyadic lattice and merged in (bridging sub-tau gaps), until a round
/// produces no change. Fails on the round budget, on a component-count
/// cap, or when a union degenerates toward the full circle.
fn grow_arc_sets(
    gens: &[QMatrix; 4],
    seeds: [Vec<Arc>; 4],
    m: u32,
    tau: &Rat,
    rounds: u32,
    cap: usize,
) -> TtResult<Option<[Vec<Arc>; 4]>> {
    let mut doms = seeds;
    for _round in 0..rounds {
        let mut changed = false;
        for i in 0..4 {
            let mut required = Vec::new();
            for s in std::iter::once(i).chain(partner_indices(i)) {
                for a in &doms[s] {
                    required.push(apply_arc(&gens[i], a).map_err(tt_inc)?);
                }
            }
            for img in required {
                if set_contains_arc(&doms[i], &img) {
                    continue;
                }
                let snapped = match snap_arc_out(&img, m) {
                    Some(sa) => sa,
                    None => {
                        eprintln!(
                            "[tt]     grow: snap degenerate round {} dom {} img={}",
                            _round,
                            i,
                            dbg_arc(&img)
                        );
                        return Ok(None);
                    }
                };
                let snap_dbg = dbg_arc(&snapped);
                if insert_arc(&mut doms[i], snapped, tau).is_none() {
                    eprintln!(
                        "[tt]     grow: circle overflow round {} dom {} img={}",
                        _round, i, snap_dbg
                    );
                    return Ok(None);
                }
                changed = true;
            }
            if doms[i].len() > cap {
                eprintln!(
                    "[tt]     grow: cap exceeded round {} dom {} size {}: {}",
                    _round,
                    i,
                    doms[i].len(),
                    doms[i].iter().map(dbg_arc).collect::<Vec<_>>().join(" ")
                );
                return Ok(None);
            }
        }
        if !changed {
            return Ok(Some(doms));
        }
    }
    eprintln!(
        "[tt]     grow: rounds exhausted sizes {}/{}/{}/{}",
        doms[0].len(),
        doms[1].len(),
        doms[2].len(),
        doms[3].len()
    );
    Ok(None)
}

/// Canonical bounded representative of a ball: the center's coordinates
/// are reduced modulo p^k (k the radius exponent) in whichever affine
/// chart holds a unit coordinate. The reduced center lies within p^{−k} of
/// the original, so the named ball is exactly the same set, with digits
/// bounded by k.
fn compress_ball(b: &PadicBall, p: u64) -> PadicBall {
    use num::Integer;
    let k = b.radius_exp.max(1);
    if k > 4096 {
        return b.clone();
    }
    let modulus = BigInt::from(p).pow(k as u32);
    let reduce = |r: &Rat| -> Option<BigInt> {
        let eg = r.denom().extended_gcd(&modulus);
        if !eg.gcd.is_one() {
            return None;
        }
        let inv = eg.x.mod_floor(&modulus);
        Some((r.numer() * inv).mod_floor(&modulus))
    };
    let vv = rat_val_p(&b.center.v, p);
    let vu = rat_val_p(&b.center.u, p);
    let cand = if vv == Some(0) {
        let s = b.center.u.clone() / b.center.v.clone();
        reduce(&s).map(|n| (Rat::from_integer(n), Rat::one()))
    } else if vu == Some(0) {
        let t = b.center.v.clone() / b.center.u.clone();
        reduce(&t).map(|n| (Rat::one(), Rat::from_integer(n)))
    } else {
        None
    };
    match cand {
        Some((u, v)) => match PadicPoint::new(u, v, p) {
            Ok(c) => PadicBall::new(c, b.radius_exp),
            Err(_) => b.clone(),
        },
        None => b.clone(),
    }
}

/// All 12 forward containments for a four-domain configuration of ball
/// unions at the place p.
fn ballsets_certified(gens: &[QMatrix; 4], doms: &[Vec<PadicBall>; 4], p: u64) -> TtResult<bool> {
    for i in 0..4 {
        for s in std::iter::once(i).chain(partner_indices(i)) {
            for b in &doms[s] {
                match padic_image_ball(&gens[i], b, p) {
                    Ok(img) => {
                        if !doms[i].iter().any(|u| img.contained_in(u, p)) {
                            return Ok(false);
                        }
                    }
                    Err(_) => return Ok(false),
                }
            }
        }
    }
    Ok(true)
}

/// Insert a ball into a union. In an ultrametric, two balls that meet are
/// nested, so merging keeps the larger of the pair.
fn insert_ball(dom: &mut Vec<PadicBall>, new_ball: PadicBall, p: u64) {
    let mut cur = new_ball;
    dom.retain(|b| {
        if cur.disjoint(b, p) {
            true
        } else {
            if b.radius_exp < cur.radius_exp {
                cur = b.clone();
            }
            false
        }
    });
    dom.push(cur);
}

/// Ball-union analogue of the arc growth driver. No snapping is needed:
/// exact ball images stay exactly representable.
fn grow_ball_sets(
    gens: &[QMatrix; 4],
    seeds: [Vec<PadicBall>; 4],
    p: u64,
    rounds: u32,
    cap: usize,
) -> TtResult<Option<[Vec<PadicBall>; 4]>> {
    let mut doms = seeds;
    for _round in 0..rounds {
        let mut changed = false;
        for i in 0..4 {
            let mut required = Vec::new();
            for s in std::iter::once(i).chain(partner_indices(i)) {
                for b in &doms[s] {
                    match padic_image_ball(&gens[i], b, p) {
                        Ok(img) => required.push(img),
                        Err(e) => {
                            eprintln!(
                                "[tt]     pgrow: image of {} under gen {} failed round {}: {}",
                                dbg_ball(b),
                                i,
                                _round,
                                e
                            );
                            return Ok(None);
                        }
                    }
                }
            }
            for img in required {
                if doms[i].iter().any(|u| img.contained_in(u, p)) {
                    continue;
                }
                insert_ball(&mut doms[i], compress_ball(&img, p), p);
                changed = true;
            }
            if doms[i].len() > cap {
                eprintln!(
                    "[tt]     pgrow: cap exceeded round {} dom {}: {}",
                    _round,
                    i,
                    doms[i].iter().map(dbg_ball).collect::<Vec<_>>().join(" ")
                );
                return Ok(None);
            }
        }
        if !changed {
            return Ok(Some(doms));
        }
    }
    eprintln!(
        "[tt]     pgrow: rounds exhausted sizes {}/{}/{}/{}",
        doms[0].len(),
        doms[1].len(),
        doms[2].len(),
        doms[3].len()
    );
    Ok(None)
}

///// Power-iteration seed for the attracting ball of z at p: iterate a start
/// point until a ball of depth at least `min_depth` around an iterate maps
/// certifiably into itself; deeper candidates are preferred.
fn padic_seed(
    z: &QMatrix,
    p: u64,
    min_depth: i64,
) -> TtResult<Option<(PadicBall, PadicPoint)>> {
    let starts = [
        (Rat::one(), Rat::zero()),
        (Rat::zero(), Rat::one()),
        (Rat::one(), Rat::one()),
    ];
    let rounds = 12 + 2 * min_depth.max(1) as u32;
    let orbit_depth = 48.max(min_depth + 12);
    for (u, v) in starts {
        let mut q = PadicPoint::new(u, v, p).map_err(tt_inc)?;
        for round in 0..rounds {
            q = padic_apply(z, &q, p).map_err(tt_inc)?;
            // Orbit identity only matters far below any radius in use.
            q = compress_ball(&PadicBall::new(q, orbit_depth), p).center;
            if round < 3 {
                continue;
            }
            // Deepest certifiable ball first: tight seeds keep every later
            // image inside the certified regime and grow only as demanded.
            for k in (min_depth..=(min_depth + 6)).rev() {
                let ball = PadicBall::new(q.clone(), k);
                if let Ok(img) = padic_image_ball(z, &ball, p) {
                    if img.contained_in(&ball, p) {
                        let ball = compress_ball(&ball, p);
                        let q = ball.center.clone();
                        return Ok(Some((ball, q)));
                    }
                }
            }
        }
    }
    Ok(None)
}

fn ceil_log2(r: &Rat) -> u32 {
    // Smallest k with 2^k ≥ r, for r ≥ 1.
    let mut k = 0u32;
    let mut pow = Rat::one();
    let two = rat(2, 1);
    while &pow < r {
        pow = pow * two.clone();
        k += 1;
        if k > 512 {
            break;
        }
    }
    k
}

/// Certify that ⟨x, y⟩ is a free group of rank 2 by exhibiting four
/// forward-invariant domains on the projective line together with a witness
/// point, every check decided in exact arithmetic.
pub fn certify_table_tennis(
    x: &QMatrix,
    y: &QMatrix,
    place: Place,
    precision: Precision,
    eps_grid: &[Rat],
) -> TtResult<TableTennisCertificate> {
    if x.dim() != 2 || y.dim() != 2 {
        return Err(tt_inc("the table-tennis engine works on the projective line (2×2 inputs)"));
    }
    if x == y {
        return Err(TtError::SeparationFailed);
    }
    let xi = x.inverse().ok_or_else(|| tt_inc("x is singular"))?;
    let yi = y.inverse().ok_or_else(|| tt_inc("y is singular"))?;
    let gens = [x.clone(), xi, y.clone(), yi];
    let labels = ["x", "x_inv", "y", "y_inv"];

    match place {
        Place::Real => {
            let kinds: Vec<RealKind> = gens
                .iter()
                .map(real_fixed_kind)
                .collect::<TtResult<Vec<_>>>()?;
            // The exact fixed points of the two elements must not collide:
            // a common fixed point forces a solvable (never free) group.
            let x_side: Vec<P1Point> =
                kinds[..2].iter().flat_map(exact_points).collect();
            let y_side: Vec<P1Point> =
                kinds[2..].iter().flat_map(exact_points).collect();
            for a in &x_side {
                for b in &y_side {
                    if a.same_point(b) {
                        return Err(TtError::SeparationFailed);
                    }
                }
            }
            for (ki, kind) in kinds.iter().enumerate() {
                let tag = match kind {
                    RealKind::Lox { att, rep } => {
                        format!("Lox att={} rep={}", dbg_p1(att), dbg_p1(rep))
                    }
                    RealKind::Par { fixed } => format!("Par fix={}", dbg_p1(fixed)),
                    RealKind::Unknown => "Unknown".to_string(),
                };
                eprintln!("[tt] gen {} ({}): {}", ki, labels[ki], tag);
            }
            for eps in eps_grid {
                let t_eps = std::time::Instant::now();
                let k = (ceil_log2(&eps.recip()) + 1).max(2);
                // Lattice resolution and bridging threshold for this scale.
                let m = k + 6;
                let tau = Rat::new(BigInt::one(), BigInt::one() << ((k + 4) as usize));
                eprintln!("[tt] eps={:.3e} k={}", dbg_rat(eps), k);
                let mut seeds: Vec<Vec<Arc>> = Vec::new();
                let mut atts = Vec::new();
                let mut ok = true;
                for (gi, (z, kind)) in gens.iter().zip(kinds.iter()).enumerate() {
                    let seeded = real_seed(z, kind, k)?.and_then(|(arc, att)| {
                        snap_arc_out(&arc, m).map(|sa| (sa, att))
                    });
                    match seeded {
                        Some((arc, att)) => {
                            eprintln!(
                                "[tt]   seed {} ok: arc={} att={} ({:?})",
                                gi,
                                dbg_arc(&arc),
                                dbg_p1(&att),
                                t_eps.elapsed()
                            );
                            seeds.push(vec![arc]);
                            atts.push(att);
                        }
                        None => {
                            eprintln!("[tt]   seed {} FAILED ({:?})", gi, t_eps.elapsed());
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                let seeds: [Vec<Arc>; 4] =
                    [seeds[0].clone(), seeds[1].clone(), seeds[2].clone(), seeds[3].clone()];
                let doms = match grow_arc_sets(&gens, seeds, m, &tau, 64, 24)? {
                    Some(d) => d,
                    None => {
                        eprintln!("[tt]   grow FAILED ({:?})", t_eps.elapsed());
                        continue;
                    }
                };
                eprintln!(
                    "[tt]   grow ok ({:?}): sizes {}/{}/{}/{}",
                    t_eps.elapsed(),
                    doms[0].len(),
                    doms[1].len(),
                    doms[2].len(),
                    doms[3].len()
                );
                // Witness: a point of the y-side union outside the x-side
                // union. Candidates: member endpoints and midpoints of the
                // y-side, the tracked attracting points, and the two
                // distinguished points of the line.
                let mut candidates: Vec<P1Point> = Vec::new();
                for d in [&doms[2], &doms[3]] {
                    for a in d.iter() {
                        candidates.push(a.lo.clone());
                        candidates.push(a.hi.clone());
                        if let (P1Point::Slope(u), P1Point::Slope(v)) = (&a.lo, &a.hi) {
                            if let (Some(ru), Some(rv)) = (u.as_rat(), v.as_rat()) {
                                candidates.push(P1Point::from_rat(
                                    (ru.clone() + rv.clone()) / rat(2, 1),
                                ));
                            }
                        }
                    }
                }
                candidates.push(atts[2].clone());
                candidates.push(atts[3].clone());
                candidates.push(P1Point::Infinity);
                candidates.push(P1Point::from_rat(Rat::zero()));
                candidates.dedup_by(|a, b| a.same_point(b));
                let witness = candidates.into_iter().find(|z| {
                    (set_contains_point(&doms[2], z) || set_contains_point(&doms[3], z))
                        && !set_contains_point(&doms[0], z)
                        && !set_contains_point(&doms[1], z)
                });
                let witness = match witness {
                    Some(w) => w,
                    None => {
                        eprintln!("[tt]   witness NOT FOUND");
                        continue;
                    }
                };
                if !arcsets_certified(&gens, &doms)? {
                    eprintln!("[tt]   final certification FAILED");
                    continue;
                }
                eprintln!("[tt]   SUCCESS eps={:.3e} ({:?})", dbg_rat(eps), t_eps.elapsed());
                return assemble_real_certificate(
                    x, y, place, precision, eps, &gens, &labels, &kinds, &atts, doms, witness,
                );
            }
            Err(tt_inc("no eps in the grid produced an invariant arc configuration"))
        }
        Place::Finite { p } => {
            for eps in eps_grid {
                // Smallest depth whose ball radius is at most eps; seeds at
                // that depth separate anything the scale eps promises apart.
                let mut min_depth: i64 = 1;
                let mut pw = Rat::new(BigInt::one(), BigInt::from(p));
                while pw > *eps && min_depth < 4096 {
                    min_depth += 1;
                    pw /= BigInt::from(p);
                }
                eprintln!("[tt]   padic eps={:.3e} depth={}", dbg_rat(eps), min_depth);
                let mut seeds: Vec<Vec<PadicBall>> = Vec::new();
                let mut atts = Vec::new();
                let mut ok = true;
                for (gi, z) in gens.iter().enumerate() {
                    match padic_seed(z, p, min_depth)? {
                        Some((ball, att)) => {
                            eprintln!("[tt]   pseed {} ok: {}", gi, dbg_ball(&ball));
                            seeds.push(vec![ball]);
                            atts.push(att);
                        }
                        None => {
                            eprintln!("[tt]   pseed {} FAILED", gi);
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    break;
                }
                let seeds: [Vec<PadicBall>; 4] =
                    [seeds[0].clone(), seeds[1].clone(), seeds[2].clone(), seeds[3].clone()];
                let doms = match grow_ball_sets(&gens, seeds, p, 64, 24)? {
                    Some(d) => d,
                    None => {
                        eprintln!("[tt]   pgrow FAILED");
                        continue;
                    }
                };
                eprintln!(
                    "[tt]   pgrow ok sizes {}/{}/{}/{}",
                    doms[0].len(),
                    doms[1].len(),
                    doms[2].len(),
                    doms[3].len()
                );
                // Witness: a center of the y-side union outside the x-side
                // union.
                let in_x_side = |q: &PadicPoint, doms: &[Vec<PadicBall>; 4]| {
                    doms[0].iter().chain(doms[1].iter()).any(|b| b.contains_point(q, p))
                };
                let witness = doms[2]
                    .iter()
                    .chain(doms[3].iter())
                    .map(|b| &b.center)
                    .find(|q| !in_x_side(q, &doms))
                    .cloned();
                let witness = match witness {
                    Some(w) => w,
                    None => continue,
                };
                if !ballsets_certified(&gens, &doms, p)? {
                    continue;
                }
                return assemble_padic_certificate(
                    x, y, place, precision, eps, &gens, &labels, &atts, doms, witness, p,
                );
            }
            Err(tt_inc("no eps in the grid produced an invariant ball configuration"))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_real_certificate(
    x: &QMatrix,
    y: &QMatrix,
    place: Place,
    precision: Precision,
    eps: &Rat,
    gens: &[QMatrix; 4],
    labels: &[&str; 4],
    kinds: &[RealKind],
    atts: &[P1Point],
    mut doms: [Vec<Arc>; 4],
    witness: P1Point,
) -> TtResult<TableTennisCertificate> {
    let mut ctx = ctx_for(place);
    let bits = precision.bits.max(128);
    // Canonical member order for stable serialization.
    for d in doms.iter_mut() {
        d.sort_by(|a, b| a.lo.circle_cmp(&b.lo));
    }
    let mut generators = Vec::new();
    for i in 0..4 {
        let att_point = projpoint_of(&atts[i]);
        // The repelling set of z is the attracting set of z⁻¹.
        let rep_source = match &kinds[i] {
            RealKind::Par { fixed } => fixed.clone(),
            _ => atts[i ^ 1].clone(),
        };
        let margin = arc_margin(&gens[i], &doms, i, &mut ctx, bits)?;
        generators.push(TtGenerator {
            label: labels[i].to_string(),
            element: gens[i].clone(),
            attracting: att_point,
            repelling_hyperplane: hyperplane_through(&rep_source),
            domain: TtDomain::Arcs(doms[i].clone()),
            contraction_margin: margin,
        });
    }
    let separations = separation_records(&generators, &mut ctx, bits)?;
    Ok(TableTennisCertificate {
        kind: "table-tennis".to_string(),
        place,
        x: x.clone(),
        y: y.clone(),
        eps: eps.clone(),
        generators,
        separations,
        witness: TtWitness::Real(witness),
        conclusion: "the pair generates a free group of rank 2".to_string(),
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble_padic_certificate(
    x: &QMatrix,
    y: &QMatrix,
    place: Place,
    precision: Precision,
    eps: &Rat,
    gens: &[QMatrix; 4],
    labels: &[&str; 4],
    atts: &[PadicPoint],
    doms: [Vec<PadicBall>; 4],
    witness: PadicPoint,
    p: u64,
) -> TtResult<TableTennisCertificate> {
    let mut ctx = ctx_for(place);
    let bits = precision.bits.max(128);
    let mut generators = Vec::new();
    for i in 0..4 {
        let att_point = ProjPoint::from_rational(vec![atts[i].u.clone(), atts[i].v.clone()])
            .map_err(tt_inc)?;
        let rep = &atts[i ^ 1];
        let rep_hyper =
            ProjHyperplane::new(vec![
                ExactScalar::from_rat(rep.v.clone()),
                -ExactScalar::from_rat(rep.u.clone()),
            ])
            .map_err(tt_inc)?;
        // Margin: the smallest contraction slack, in radius exponents, of a
        // member's self-image inside the member that absorbs it.
        let mut slack: Option<i64> = None;
        for b in &doms[i] {
            let s = match padic_image_ball(&gens[i], b, p) {
                Ok(img) => doms[i]
                    .iter()
                    .filter(|u| img.contained_in(u, p))
                    .map(|u| img.radius_exp - u.radius_exp)
                    .max()
                    .unwrap_or(0),
                Err(_) => 0,
            };
            slack = Some(match slack {
                None => s,
                Some(t) => t.min(s),
            });
        }
        let margin = match slack {
            Some(s) => Magnitude::ppower(p, Rat::from_integer(BigInt::from(s))),
            None => Magnitude::one_at(place),
        };
        generators.push(TtGenerator {
            label: labels[i].to_string(),
            element: gens[i].clone(),
            attracting: att_point,
            repelling_hyperplane: rep_hyper,
            domain: TtDomain::Balls { p, balls: doms[i].clone() },
            contraction_margin: margin,
        });
    }
    let separations = separation_records(&generators, &mut ctx, bits)?;
    Ok(TableTennisCertificate {
        kind: "table-tennis".to_string(),
        place,
        x: x.clone(),
        y: y.clone(),
        eps: eps.clone(),
        generators,
        separations,
        witness: TtWitness::Padic(witness),
        conclusion: "the pair generates a free group of rank 2".to_string(),
    })
}

/// Depth of the self-image inside domain i: the minimum, over members of
/// the union, of the endpoint slack of the member's image inside the
/// member that absorbs it. Zero when the configuration touches.
fn arc_margin(
    z: &QMatrix,
    doms: &[Vec<Arc>; 4],
    i: usize,
    ctx: &mut PlaceCtx,
    bits: u32,
) -> TtResult<Magnitude> {
    let mut best: Option<Magnitude> = None;
    for a in &doms[i] {
        let img = apply_arc(z, a).map_err(tt_inc)?;
        let container = doms[i]
            .iter()
            .find(|u| u.contains_arc(&img))
            .ok_or_else(|| tt_inc("a self-image escapes its certified domain"))?;
        let d_lo = point_distance(&img.lo, &container.lo, ctx, bits)?;
        let d_hi = point_distance(&img.hi, &container.hi, ctx, bits)?;
        for d in [d_lo, d_hi] {
            best = Some(match best.take() {
                None => d,
                Some(b) => match b.compare(&d) {
                    Ok(MagOrder::Greater) => d,
                    _ => b,
                },
            });
        }
    }
    best.ok_or_else(|| tt_inc("empty domain has no margin"))
}

fn point_distance(
    a: &P1Point,
    b: &P1Point,
    ctx: &mut PlaceCtx,
    bits: u32,
) -> TtResult<Magnitude> {
    if a.same_point(b) {
        return Ok(Magnitude::Zero);
    }
    proj_dist_pp(&projpoint_of(a), &projpoint_of(b), ctx, bits).map_err(tt_inc)
}

fn separation_records(
    generators: &[TtGenerator],
    ctx: &mut PlaceCtx,
    bits: u32,
) -> TtResult<Vec<SeparationRecord>> {
    // Cross-generator pairs of attracting points: x-side {0,1} vs y-side {2,3}.
    let mut out = Vec::new();
    for i in 0..2 {
        for j in 2..4 {
            let d = proj_dist_pp(
                &generators[i].attracting,
                &generators[j].attracting,
                ctx,
                bits,
            )
            .map_err(tt_inc)?;
            let positive = d.lower_rat().is_positive();
            out.push(SeparationRecord {
                pair: (generators[i].label.clone(), generators[j].label.clone()),
                distance: d,
                positive,
            });
        }
    }
    Ok(out)
}

/// Independent replay of a table-tennis certificate: recompute the twelve
/// forward containments, the witness membership, and the element relations
/// from the stored data alone.
pub fn verify_table_tennis(cert: &TableTennisCertificate) -> TtResult<()> {
    if cert.generators.len() != 4 {
        return Err(tt_inc("certificate must carry exactly four generators"));
    }
    let gens: Vec<&QMatrix> = cert.generators.iter().map(|g| &g.element).collect();
    if gens[0] != &cert.x || gens[2] != &cert.y {
        return Err(tt_inc("stored generators do not match the certified pair"));
    }
    let xi = cert.x.inverse().ok_or_else(|| tt_inc("x is singular"))?;
    let yi = cert.y.inverse().ok_or_else(|| tt_inc("y is singular"))?;
    if gens[1] != &xi || gens[3] != &yi {
        return Err(tt_inc("stored inverse generators are not the exact inverses"));
    }
    let gens: [QMatrix; 4] = [cert.x.clone(), xi, cert.y.clone(), yi];
    match (&cert.witness, domain_kind(cert)?) {
        (TtWitness::Real(w), DomainKind::Arcs(doms)) => {
            if cert.place != Place::Real {
                return Err(tt_inc("arc domains require the real place"));
            }
            if doms.iter().any(|d| d.is_empty()) {
                return Err(tt_inc("a stored domain is empty"));
            }
            if !arcsets_certified(&gens, &doms)? {
                return Err(tt_inc("a stored containment fails on replay"));
            }
            let in_y = set_contains_point(&doms[2], w) || set_contains_point(&doms[3], w);
            let in_x = set_contains_point(&doms[0], w) || set_contains_point(&doms[1], w);
            if !in_y || in_x {
                return Err(tt_inc("stored witness fails its membership conditions"));
            }
        }
        (TtWitness::Padic(w), DomainKind::Balls(p, doms)) => {
            match cert.place {
                Place::Finite { p: cp } if cp == p => {}
                _ => return Err(tt_inc("ball domains must match the certificate's finite place")),
            }
            if doms.iter().any(|d| d.is_empty()) {
                return Err(tt_inc("a stored domain is empty"));
            }
            if !ballsets_certified(&gens, &doms, p)? {
                return Err(tt_inc("a stored containment fails on replay"));
            }
            let in_set = |set: &[PadicBall], q: &PadicPoint| {
                set.iter().any(|b| b.contains_point(q, p))
            };
            let in_y = in_set(&doms[2], w) || in_set(&doms[3], w);
            let in_x = in_set(&doms[0], w) || in_set(&doms[1], w);
            if !in_y || in_x {
                return Err(tt_inc("stored witness fails its membership conditions"));
            }
        }
        _ => return Err(tt_inc("witness kind does not match the domain kind")),
    }
    Ok(())
}

enum DomainKind {
    Arcs([Vec<Arc>; 4]),
    Balls(u64, [Vec<PadicBall>; 4]),
}

fn domain_kind(cert: &TableTennisCertificate) -> TtResult<DomainKind> {
    let first = &cert.generators[0].domain;
    match first {
        TtDomain::Arcs(_) => {
            let mut sets = Vec::new();
            for g in &cert.generators {
                match &g.domain {
                    TtDomain::Arcs(a) => sets.push(a.clone()),
                    _ => return Err(tt_inc("mixed domain kinds in one certificate")),
                }
            }
            Ok(DomainKind::Arcs([
                sets[0].clone(),
                sets[1].clone(),
                sets[2].clone(),
                sets[3].clone(),
            ]))
        }
        TtDomain::Balls { p, .. } => {
            let p = *p;
            let mut sets = Vec::new();
            for g in &cert.generators {
                match &g.domain {
                    TtDomain::Balls { p: bp, balls } if *bp == p => sets.push(balls.clone()),
                    _ => return Err(tt_inc("mixed domain kinds in one certificate")),
                }
            }
            Ok(DomainKind::Balls(
                p,
                [sets[0].clone(), sets[1].clone(), sets[2].clone(), sets[3].clone()],
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Exhaustive word-collision refuter
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeMode {
    Semigroup,
    Group,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Refutation {
    NoCollisionUpTo(u32),
    Collision { u: String, v: String },
}

const WORD_BUDGET: u128 = 4_000_000;

/// Exhaustively multiply out words in x, y (positive words in semigroup
/// mode; reduced words over x, y, x⁻¹, y⁻¹ including the empty word in
/// group mode) up to length l, reporting the first exact collision in
/// length-then-lexicographic order, letters ordered x < y < x⁻¹ < y⁻¹.
pub fn refute_freeness(
    x: &QMatrix,
    y: &QMatrix,
    mode: FreeMode,
    l: u32,
) -> Result<Refutation, RefuteError> {
    let d = x.dim();
    assert_eq!(d, y.dim(), "elements must share a dimension");
    let (gens, names, inverse_of): (Vec<QMatrix>, Vec<&str>, Vec<Option<usize>>) = match mode {
        FreeMode::Semigroup => (vec![x.clone(), y.clone()], vec!["x", "y"], vec![None, None]),
        FreeMode::Group => {
            let xi = x.inverse().ok_or(RefuteError::NotInvertible)?;
            let yi = y.inverse().ok_or(RefuteError::NotInvertible)?;
            (
                vec![x.clone(), y.clone(), xi, yi],
                vec!["x", "y", "X", "Y"],
                vec![Some(2), Some(3), Some(0), Some(1)],
            )
        }
    };
    // Budget check on the total word count.
    let total: u128 = match mode {
        FreeMode::Semigroup => (2u128 << l) - 2,
        FreeMode::Group => 1 + 2 * (3u128.pow(l) - 1),
    };
    if total > WORD_BUDGET {
        return Err(RefuteError::BudgetExceeded);
    }

    let mut seen: HashMap<QMatrix, String> = HashMap::new();
    let mut level: Vec<(QMatrix, String, Option<usize>)> = Vec::new();
    if matches!(mode, FreeMode::Group) {
        let id = QMatrix::identity(d);
        seen.insert(id.clone(), String::new());
        level.push((id, String::new(), None));
    } else {
        level.push((QMatrix::identity(d), String::new(), None));
    }
    for _len in 1..=l {
        let mut next = Vec::with_capacity(level.len() * gens.len());
        for (mat, word, last) in &level {
            for (gi, g) in gens.iter().enumerate() {
                if let Some(last) = last {
                    if inverse_of[*last] == Some(gi) {
                        continue;
                    }
                }
                let m = mat.mul(g);
                let w = format!("{}{}", word, names[gi]);
                if let Some(prev) = seen.get(&m) {
                    return Ok(Refutation::Collision { u: prev.clone(), v: w });
                }
                seen.insert(m.clone(), w.clone());
                next.push((m, w, Some(gi)));
            }
        }
        level = next;
    }
    Ok(Refutation::NoCollisionUpTo(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugators::proximal_normal_form;
    use crate::scalars::rat_i64;

    fn diag(a: Rat, b: Rat) -> QMatrix {
        QMatrix::diagonal(vec![ExactScalar::from_rat(a), ExactScalar::from_rat(b)])
    }

    fn rot345() -> QMatrix {
        QMatrix::from_rat_rows(vec![vec![rat(3, 5), rat(-4, 5)], vec![rat(4, 5), rat(3, 5)]])
    }

    fn sanov() -> (QMatrix, QMatrix) {
        (
            QMatrix::from_i64_rows(&[&[1, 2], &[0, 1]]),
            QMatrix::from_i64_rows(&[&[1, 0], &[2, 1]]),
        )
    }

    fn form_for(a: &QMatrix, place: Place) -> ProximalForm {
        let mut ctx = ctx_for(place);
        proximal_normal_form(a, &mut ctx, 192).expect("normal form")
    }

    #[test]
    fn ping_worked_example_real() {
        let a = diag(rat_i64(100), rat(1, 100));
        let form = form_for(&a, Place::Real);
        let b = rot345();
        let eps = rat(1, 10);
        let cert = certify_ping(&form, &b, &eps, Place::Real).expect("certificate");
        assert!(cert.checks.b_moves_e1.pass);
        assert!(cert.checks.lipschitz_ok.pass);
        assert!(cert.checks.separation_ok.pass);
        // The separation margin is exact: d² = 9/25, threshold 1/10.
        assert_eq!(
            cert.checks.separation_ok.margin.upper_rat(),
            rat(9, 25) - rat(1, 10)
        );
        // The squared Lipschitz comparison is 4 ≤ 10 with margin 6.
        assert_eq!(cert.checks.lipschitz_ok.margin.upper_rat(), rat_i64(6));
        assert!(cert.tau_lower.is_positive());
        assert_eq!(cert.conclusion_pair.1, b.mul(&form.a_prime));
        verify_ping(&cert).expect("replay");
    }

    #[test]
    fn ping_identity_fixes_e1() {
        let a = diag(rat_i64(100), rat(1, 100));
        let form = form_for(&a, Place::Real);
        let b = QMatrix::identity(2);
        assert!(matches!(
            certify_ping(&form, &b, &rat(1, 10), Place::Real),
            Err(PingError::BFixesE1)
        ));
    }

    #[test]
    fn ping_padic_exponent_margins() {
        let p = 5u64;
        let place = Place::Finite { p };
        let a = diag(rat(1, 125), rat_i64(125));
        let form = form_for(&a, place);
        let b = QMatrix::from_i64_rows(&[&[1, 1], &[1, 2]]);
        let eps = rat(1, 5);
        let cert = certify_ping(&form, &b, &eps, place).expect("certificate");
        // Exponent arithmetic is exact: margins are exact rationals.
        assert_eq!(cert.checks.separation_ok.quantity.upper_rat(), rat_i64(1));
        assert_eq!(cert.checks.lipschitz_ok.margin.upper_rat(), rat_i64(1));
        assert_eq!(cert.tau_lower, rat(1, 5));
        verify_ping(&cert).expect("replay");
    }

    #[test]
    fn ping_succeeds_at_smaller_eps() {
        // Both b-side checks only get easier as eps decreases; proximality
        // still holds for this strongly proximal a.
        let a = diag(rat_i64(100), rat(1, 100));
        let form = form_for(&a, Place::Real);
        let b = rot345();
        assert!(certify_ping(&form, &b, &rat(1, 10), Place::Real).is_ok());
        assert!(certify_ping(&form, &b, &rat(1, 100), Place::Real).is_ok());
    }

    #[test]
    fn ping_rejects_small_separation() {
        let a = diag(rat_i64(100), rat(1, 100));
        let form = form_for(&a, Place::Real);
        // Rotation with cosine 20/101: orthogonal (Lipschitz 1) but lands
        // b·[e₁] at squared distance 400/10201 < 1/10 from the hyperplane.
        let b = QMatrix::from_rat_rows(vec![
            vec![rat(20, 101), rat(-99, 101)],
            vec![rat(99, 101), rat(20, 101)],
        ]);
        assert!(matches!(
            certify_ping(&form, &b, &rat(1, 10), Place::Real),
            Err(PingError::SeparationTooSmall)
        ));
    }

    #[test]
    fn ping_certificate_serde_roundtrip() {
        let a = diag(rat_i64(100), rat(1, 100));
        let form = form_for(&a, Place::Real);
        let cert = certify_ping(&form, &rot345(), &rat(1, 10), Place::Real).unwrap();
        let json = serde_json::to_string(&cert).unwrap();
        let back: PingCertificate = serde_json::from_str(&json).unwrap();
        verify_ping(&back).expect("replayed after roundtrip");
    }

    #[test]
    fn refute_equal_elements_semigroup() {
        let (x, _) = sanov();
        let out = refute_freeness(&x, &x, FreeMode::Semigroup, 1).unwrap();
        assert_eq!(out, Refutation::Collision { u: "x".into(), v: "y".into() });
    }

    #[test]
    fn refute_rotation_order_four_group() {
        // x² = (x⁻¹)² = −I, so the first collision in length-then-lex
        // order is "xx" against "XX" at length 2.
        let x = QMatrix::from_i64_rows(&[&[0, -1], &[1, 0]]);
        let y = QMatrix::from_i64_rows(&[&[1, 1], &[0, 1]]);
        let out = refute_freeness(&x, &y, FreeMode::Group, 4).unwrap();
        assert_eq!(out, Refutation::Collision { u: "xx".into(), v: "XX".into() });
    }

    #[test]
    fn refute_sanov_semigroup_no_collision() {
        let x = QMatrix::from_i64_rows(&[&[1, 1], &[0, 1]]);
        let y = QMatrix::from_i64_rows(&[&[1, 0], &[1, 1]]);
        let out = refute_freeness(&x, &y, FreeMode::Semigroup, 12).unwrap();
        assert_eq!(out, Refutation::NoCollisionUpTo(12));
    }

    #[test]
    fn tt_sanov_certifies_and_replays() {
        let (x, y) = sanov();
        let grid = default_eps_grid(Place::Real);
        let cert = certify_table_tennis(&x, &y, Place::Real, Precision::default(), &grid)
            .expect("Sanov certifies");
        verify_table_tennis(&cert).expect("replay");
        // Soundness cross-check: no collision among reduced words.
        let out = refute_freeness(&x, &y, FreeMode::Group, 8).unwrap();
        assert_eq!(out, Refutation::NoCollisionUpTo(8));
        // The certificate's separations are positive (fixed points 0 and ∞).
        assert!(cert.separations.iter().all(|s| s.positive));
    }

    #[test]
    fn tt_identical_elements_fail_separation() {
        let (x, _) = sanov();
        let grid = default_eps_grid(Place::Real);
        assert!(matches!(
            certify_table_tennis(&x, &x, Place::Real, Precision::default(), &grid),
            Err(TtError::SeparationFailed)
        ));
    }

    #[test]
    fn tt_conjugated_diagonal_pair() {
        let a = diag(rat_i64(9), rat(1, 9));
        let b = rot345();
        let y = b.mul(&a).mul(&b.inverse().unwrap());
        let grid = default_eps_grid(Place::Real);
        let cert = certify_table_tennis(&a, &y, Place::Real, Precision::default(), &grid)
            .expect("loxodromic pair certifies");
        verify_table_tennis(&cert).expect("replay");
        let out = refute_freeness(&a, &y, FreeMode::Group, 6).unwrap();
        assert_eq!(out, Refutation::NoCollisionUpTo(6));
    }

    #[test]
    fn tt_elliptic_has_no_structure() {
        let x = QMatrix::from_i64_rows(&[&[0, -1], &[1, 0]]);
        let (_, y) = sanov();
        let grid = default_eps_grid(Place::Real);
        assert!(matches!(
            certify_table_tennis(&x, &y, Place::Real, Precision::default(), &grid),
            Err(TtError::NoProximalStructure)
        ));
    }

    #[test]
    fn tt_padic_loxodromic_pair() {
        let p = 5u64;
        let place = Place::Finite { p };
        let x = diag(rat(1, 5), rat_i64(5));
        let g = QMatrix::from_i64_rows(&[&[1, 1], &[1, 2]]);
        let y = g.mul(&x).mul(&g.inverse().unwrap());
        let grid = default_eps_grid(place);
        let cert = certify_table_tennis(&x, &y, place, Precision::default(), &grid)
            .expect("p-adic loxodromic pair certifies");
        verify_table_tennis(&cert).expect("replay");
        let out = refute_freeness(&x, &y, FreeMode::Group, 6).unwrap();
        assert_eq!(out, Refutation::NoCollisionUpTo(6));
    }

    #[test]
    fn tt_certificate_serde_roundtrip() {
        let (x, y) = sanov();
        let grid = default_eps_grid(Place::Real);
        let cert =
            certify_table_tennis(&x, &y, Place::Real, Precision::default(), &grid).unwrap();
        let json = serde_json::to_string(&cert).unwrap();
        let back: TableTennisCertificate = serde_json::from_str(&json).unwrap();
        verify_table_tennis(&back).expect("replayed after roundtrip");
    }

    #[test]
    fn simplest_rational_search() {
        assert_eq!(simplest_in(&rat(10, 13), &rat(33, 26)), rat_i64(1));
        assert_eq!(simplest_in(&rat(-1, 3), &rat(1, 5)), Rat::zero());
        assert_eq!(simplest_in(&rat(5, 2), &rat(11, 4)), rat(5, 2));
        assert_eq!(simplest_in(&rat(7, 5), &rat(3, 2)), rat(3, 2));
        assert_eq!(simplest_in(&rat(-7, 4), &rat(-3, 2)), rat(-3, 2));
    }

    #[test]
    fn ping_conjugation_covariance_sample() {
        // Conjugating by g distorts the Lipschitz data by at most the
        // distortion bound of g squared; the pair re-certifies at an eps
        // reduced accordingly, provided a is proximal enough to absorb it.
        let g = QMatrix::from_i64_rows(&[&[1, 1], &[0, 1]]);
        let gi = g.inverse().unwrap();
        let a = diag(rat_i64(1_000_000), rat(1, 1_000_000));
        let ac = g.mul(&a).mul(&gi);
        let bc = g.mul(&rot345()).mul(&gi);
        let mut ctx = PlaceCtx::real();
        let l_hi = lipschitz_bound(&bc, &mut ctx, 256).unwrap().magnitude.upper_rat();
        let q = (l_hi.clone() + Rat::one()) * (l_hi + Rat::one());
        let eps = (q * rat_i64(2)).recip().min(rat(1, 4));
        assert!(eps.is_positive());
        let form = form_for(&ac, Place::Real);
        certify_ping(&form, &bc, &eps, Place::Real).expect("re-certifies after conjugation");
    }
}
