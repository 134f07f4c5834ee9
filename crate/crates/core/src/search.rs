//! Bounded, deterministic searches: escape from named matrix classes,
//! good-position elements, non-fixing powers via Cayley–Hamilton, compound
//! gap lifting, certified upper bounds for the free-semigroup radius, and
//! exact growth tables with certified entropy intervals.

use crate::conjugators::proximal_normal_form;
use crate::linalg::{
    char_poly, compound_gap_at, exterior_power, spectral_radius_bits, QMatrix, SpectralError,
};
use crate::pingpong::{certify_ping, default_eps_grid, PingCertificate, PingError};
use crate::projective::{check_proximal, ProjHyperplane, ProjPoint};
use crate::scalars::{rat, rat_i64, ExactScalar, MagOrder, Magnitude, Place, PlaceCtx, Precision, Rat};
use crate::setcalc::{delta_bounds, Budget, MatSet, SetError};
use num::bigint::BigInt;
use num::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Display;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SearchError {
    #[error("search exhausted at level {0} without a witness")]
    Exhausted(u32),
    #[error("unknown predicate: {0}")]
    UnknownPredicate(String),
    #[error("all powers up to {0} leave the leading coordinate zero")]
    AllPowersFix(u32),
    #[error("no certified eigenvalue-modulus gap in any compound")]
    NoGapAnywhere,
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("no certified growth at the chosen place")]
    NoGrowthDetected,
    #[error("ball exceeded the cap of {0}")]
    BallExplosion(usize),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type SearchResult<T> = Result<T, SearchError>;

fn inc<E: Display>(e: E) -> SearchError {
    SearchError::Inconclusive(e.to_string())
}

fn map_set_err(e: SetError) -> SearchError {
    match e {
        SetError::BallExplosion(cap) => SearchError::BallExplosion(cap),
        other => inc(other),
    }
}

fn ctx_for(place: Place) -> PlaceCtx {
    match place {
        Place::Real => PlaceCtx::real(),
        Place::Finite { p } => PlaceCtx::finite(p).expect("place carries a valid prime"),
    }
}

// ---------------------------------------------------------------------------
// Words over a matrix set
// ---------------------------------------------------------------------------

const WORD_ALPHABET: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

fn index_char(i: usize) -> char {
    assert!(i < WORD_ALPHABET.len(), "sets are limited to 36 elements for word encoding");
    WORD_ALPHABET[i] as char
}

fn char_index(c: char) -> Option<usize> {
    WORD_ALPHABET.iter().position(|&b| b as char == c)
}

/// Multiply out an index word over the set's element order.
pub fn word_product(set: &MatSet, word: &str) -> Option<QMatrix> {
    let mut m = QMatrix::identity(set.dim());
    for c in word.chars() {
        let i = char_index(c)?;
        let g = set.elements().get(i)?;
        m = m.mul(g);
    }
    Some(m)
}

/// Enumerate distinct products of words over the set, level by level in
/// (length, lexicographic-index) order, visiting each distinct matrix once
/// at its least word. The visitor returns true to stop.
fn enumerate_levels<F>(
    set: &MatSet,
    max_len: u32,
    cap: usize,
    mut visit: F,
) -> SearchResult<bool>
where
    F: FnMut(&QMatrix, &str, u32) -> SearchResult<bool>,
{
    let mut seen: HashMap<QMatrix, ()> = HashMap::new();
    let mut level: Vec<(QMatrix, String)> = vec![(QMatrix::identity(set.dim()), String::new())];
    for len in 1..=max_len {
        let mut next: Vec<(QMatrix, String)> = Vec::new();
        for (mat, word) in &level {
            for (i, g) in set.elements().iter().enumerate() {
                let m = mat.mul(g);
                if seen.contains_key(&m) {
                    continue;
                }
                seen.insert(m.clone(), ());
                let w = format!("{}{}", word, index_char(i));
                if visit(&m, &w, len)? {
                    return Ok(true);
                }
                next.push((m, w));
                if seen.len() > cap {
                    return Err(SearchError::BallExplosion(cap));
                }
            }
        }
        level = next;
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Escape from named classes
// ---------------------------------------------------------------------------

/// Fixed family of named element classes to escape from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Predicate {
    FixesProjPoint(ProjPoint),
    PreservesHyperplane(ProjHyperplane),
    IsNotSemisimple,
    UpperTriangular,
    /// Satisfies tr[m², r²] = 2 against every reference element r: the
    /// simple law obeyed by every non-dense subgroup of SL₂.
    SatisfiesSL2Law { reference: Vec<QMatrix> },
    /// Some power (up to the root-of-unity order bound) is scalar.
    IsVirtuallyCentral,
}

impl Predicate {
    pub fn name(&self) -> &'static str {
        match self {
            Predicate::FixesProjPoint(_) => "FixesProjPoint",
            Predicate::PreservesHyperplane(_) => "PreservesHyperplane",
            Predicate::IsNotSemisimple => "IsNotSemisimple",
            Predicate::UpperTriangular => "UpperTriangular",
            Predicate::SatisfiesSL2Law { .. } => "SatisfiesSL2Law",
            Predicate::IsVirtuallyCentral => "IsVirtuallyCentral",
        }
    }
}

fn proportional(u: &[ExactScalar], v: &[ExactScalar]) -> SearchResult<bool> {
    if u.iter().all(|c| c.is_zero()) {
        return Ok(false);
    }
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            let a = u[i].checked_mul(&v[j]).map_err(inc)?;
            let b = u[j].checked_mul(&v[i]).map_err(inc)?;
            if a != b {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn matrix_semisimple(m: &QMatrix) -> SearchResult<bool> {
    let sf = char_poly(m).squarefree_part();
    // m is semisimple iff the squarefree part of its characteristic
    // polynomial annihilates it.
    let d = m.dim();
    let mut acc = QMatrix::zero(d);
    for c in sf.coeffs.iter().rev() {
        acc = acc.mul(m);
        let term = QMatrix::diagonal(vec![c.clone(); d]);
        acc = acc.add(&term);
    }
    Ok(acc.is_zero())
}

/// Whether the element satisfies the predicate (is NOT an escape witness).
pub fn predicate_holds(pred: &Predicate, m: &QMatrix) -> SearchResult<bool> {
    match pred {
        Predicate::FixesProjPoint(pt) => {
            let w = m.mul_vec(pt.coords());
            proportional(&w, pt.coords())
        }
        Predicate::PreservesHyperplane(h) => {
            let c = h.covector();
            let d = m.dim();
            let mut u = Vec::with_capacity(d);
            for j in 0..d {
                let mut s = ExactScalar::from_rat(Rat::zero());
                for (i, ci) in c.iter().enumerate() {
                    s = s.checked_add(&ci.checked_mul(&m[(i, j)]).map_err(inc)?).map_err(inc)?;
                }
                u.push(s);
            }
            proportional(&u, c)
        }
        Predicate::IsNotSemisimple => {
            if m.is_scalar() {
                return Ok(true);
            }
            Ok(!matrix_semisimple(m)?)
        }
        Predicate::UpperTriangular => Ok(m.is_upper_triangular()),
        Predicate::SatisfiesSL2Law { reference } => {
            if m.dim() != 2 {
                return Err(SearchError::UnknownPredicate(
                    "the SL2 law applies to 2x2 matrices only".to_string(),
                ));
            }
            let Some(mi) = m.inverse() else { return Ok(true) };
            let m2 = m.mul(m);
            let m2i = mi.mul(&mi);
            for r in reference {
                let Some(ri) = r.inverse() else { continue };
                let r2 = r.mul(r);
                let r2i = ri.mul(&ri);
                let comm = m2.mul(&r2).mul(&m2i).mul(&r2i);
                if comm.trace() != ExactScalar::from_rat(rat_i64(2)) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Predicate::IsVirtuallyCentral => {
            // Eigenvalue ratios that are roots of unity over a quadratic
            // field have order at most 12; 24 leaves margin.
            for k in 1..=24u32 {
                if m.pow(k).is_scalar() {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchWitness {
    pub element: QMatrix,
    pub word: String,
    pub length: u32,
}

/// Least-length product of set elements violating the predicate, searched
/// level by level up to length n_max.
pub fn escape(sigma: &MatSet, predicate: &Predicate, n_max: u32) -> SearchResult<SearchWitness> {
    let q = sigma.with_identity();
    let mut found: Option<SearchWitness> = None;
    enumerate_levels(&q, n_max, 1_000_000, |m, w, len| {
        if !predicate_holds(predicate, m)? {
            found = Some(SearchWitness { element: m.clone(), word: w.to_string(), length: len });
            return Ok(true);
        }
        Ok(false)
    })?;
    found.ok_or(SearchError::Exhausted(n_max))
}

// ---------------------------------------------------------------------------
// Good-position elements
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoodPosition {
    pub word: String,
    pub length: u32,
    /// The product of the word in the ambient frame.
    pub element: QMatrix,
    /// The same element conjugated into the normal form's frame; this is
    /// the matrix whose first column witnesses both conditions.
    pub in_form_frame: QMatrix,
}

/// Find q in the ball of radius d+1 with q·[e₁] ≠ [e₁] and q·[e₁] ∉ [H],
/// both read in the normal form's frame and decided exactly.
pub fn good_position_element(
    q: &MatSet,
    form: &crate::conjugators::ProximalForm,
) -> SearchResult<GoodPosition> {
    let d = form.a_prime.dim();
    if q.dim() != d {
        return Err(inc("set dimension does not match the normal form"));
    }
    let h = &form.h;
    let hi = h.inverse().ok_or_else(|| inc("normal-form conjugator is singular"))?;
    let cov = form.hyperplane.covector().to_vec();
    let qq = q.with_identity();
    let cap = (d as u32) + 1;
    let mut found: Option<GoodPosition> = None;
    enumerate_levels(&qq, cap, 1_000_000, |m, w, len| {
        let in_frame = h.mul(m).mul(&hi);
        let col: Vec<ExactScalar> = (0..d).map(|i| in_frame[(i, 0)].clone()).collect();
        let moves = col.iter().skip(1).any(|c| !c.is_zero());
        if !moves {
            return Ok(false);
        }
        let mut pairing = ExactScalar::from_rat(Rat::zero());
        for (ci, wi) in cov.iter().zip(col.iter()) {
            pairing = pairing.checked_add(&ci.checked_mul(wi).map_err(inc)?).map_err(inc)?;
        }
        if pairing.is_zero() {
            return Ok(false);
        }
        found = Some(GoodPosition {
            word: w.to_string(),
            length: len,
            element: m.clone(),
            in_form_frame: in_frame,
        });
        Ok(true)
    })?;
    found.ok_or(SearchError::Exhausted(cap))
}

// ---------------------------------------------------------------------------
// Non-fixing powers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonfixingPower {
    pub j: u32,
    /// The first coordinate of bʲ·e₁, certified nonzero.
    pub first_coordinate: ExactScalar,
    /// True when bʲ·e₁ is proportional to e₁ (nonzero leading coordinate
    /// but projectively fixed).
    pub projectively_fixed: bool,
    /// Certified lower bound 1/(D·2^D·Λ(b)^D) for the leading coordinate.
    pub coordinate_lower_bound: Magnitude,
}

/// Least j ≤ d_cap with the first coordinate of bʲ·e₁ exactly nonzero,
/// in the normal form's frame.
pub fn nonfixing_power(
    b: &QMatrix,
    form: &crate::conjugators::ProximalForm,
    d_cap: u32,
) -> SearchResult<NonfixingPower> {
    let d = b.dim();
    if form.a_prime.dim() != d {
        return Err(inc("dimension mismatch with the normal form"));
    }
    let mut ctx = ctx_for(form.place);
    let mut v: Vec<ExactScalar> = (0..d)
        .map(|i| ExactScalar::from_rat(if i == 0 { Rat::one() } else { Rat::zero() }))
        .collect();
    for j in 1..=d_cap {
        v = b.mul_vec(&v);
        if !v[0].is_zero() {
            let projectively_fixed = v.iter().skip(1).all(|c| c.is_zero());
            let lam = spectral_radius_bits(b, &mut ctx, 96).map_err(inc)?.magnitude;
            let scale = Rat::from_integer(BigInt::from(d_cap))
                * Rat::from_integer(BigInt::one() << d_cap as usize);
            let scale_mag = ctx.magnitude(&ExactScalar::from_rat(scale)).map_err(inc)?;
            let denom = scale_mag.checked_mul(&lam.pow(d_cap)).map_err(inc)?;
            let bound = denom.inverse().map_err(inc)?;
            return Ok(NonfixingPower {
                j,
                first_coordinate: v[0].clone(),
                projectively_fixed,
                coordinate_lower_bound: bound,
            });
        }
    }
    Err(SearchError::AllPowersFix(d_cap))
}

// ---------------------------------------------------------------------------
// Compound gap lifting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapLift {
    pub j: u32,
    pub lifted: QMatrix,
}

/// Least compound index j whose exterior power of a has a certified
/// top-eigenvalue gap of factor ≥ 2.
pub fn gap_lift(a: &QMatrix, place: Place, _precision: Precision) -> SearchResult<GapLift> {
    let d = a.dim();
    let mut ctx = ctx_for(place);
    for j in 1..d {
        match compound_gap_at(a, j, &mut ctx) {
            Ok(true) => {
                return Ok(GapLift { j: j as u32, lifted: exterior_power(a, j) });
            }
            Ok(false) => continue,
            // A gap that cannot be certified is not a gap for our purposes.
            Err(SpectralError::Unseparated) => continue,
            Err(e) => return Err(inc(e)),
        }
    }
    Err(SearchError::NoGapAnywhere)
}

// ---------------------------------------------------------------------------
// d⁺ upper bounds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DPlusBudgets {
    pub set: Budget,
    /// Maximum power of the chosen proximal element.
    pub power_cap: u32,
    /// Number of leading candidates (by spectral radius) to try.
    pub candidate_cap: usize,
    /// Ball sizes recorded in the result go up to this radius.
    pub ball_record_cap: u32,
    pub precision: Precision,
}

impl Default for DPlusBudgets {
    fn default() -> Self {
        DPlusBudgets {
            set: Budget::default(),
            power_cap: 8,
            candidate_cap: 8,
            ball_record_cap: 6,
            precision: Precision::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DPlusResult {
    /// Certified upper bound for the least radius containing a free pair.
    pub n: u32,
    /// The two elements, as products in the ambient representation.
    pub pair: (QMatrix, QMatrix),
    /// Index words over the identity-augmented input set.
    pub pair_words: (String, String),
    pub certificate: PingCertificate,
    pub ball_sizes: Vec<usize>,
}

/// Upper-bound the free-semigroup radius: pick a strongly proximal product,
/// lift through the least compound with a certified gap, normalize, find a
/// displacing companion, and certify the resulting pair.
pub fn dplus_upper(
    sigma: &MatSet,
    place: Place,
    budgets: &DPlusBudgets,
) -> SearchResult<DPlusResult> {
    let q = sigma.with_identity();
    let d = q.dim();
    let mut ctx = ctx_for(place);

    // Growth precheck: a certified conjugation-minimized norm above 1.
    let delta = delta_bounds(&q, &mut ctx, &budgets.set).map_err(map_set_err)?;
    let one = Magnitude::one_at(place);
    match delta.lower.compare(&one).map_err(inc)? {
        MagOrder::Greater => {}
        _ => return Err(SearchError::NoGrowthDetected),
    }

    // Candidate proximal elements: distinct ball products up to radius d²,
    // ranked by certified spectral radius, ties broken by word order.
    let mut candidates: Vec<(String, QMatrix, Magnitude)> = Vec::new();
    enumerate_levels(&q, (d * d) as u32, budgets.set.ball_cap, |m, w, _| {
        let lam = spectral_radius_bits(m, &mut ctx, 96).map_err(inc)?.magnitude;
        if lam.compare(&one).map_err(inc)? == MagOrder::Greater {
            candidates.push((w.to_string(), m.clone(), lam));
        }
        Ok(false)
    })?;
    if candidates.is_empty() {
        return Err(SearchError::NoGrowthDetected);
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        match candidates[i].2.compare(&candidates[j].2) {
            Ok(MagOrder::Greater) => std::cmp::Ordering::Less,
            Ok(MagOrder::Less) => std::cmp::Ordering::Greater,
            _ => i.cmp(&j),
        }
    });

    let grid = default_eps_grid(place);
    let bits = budgets.precision.bits.max(128);

    for &ci in order.iter().take(budgets.candidate_cap) {
        let (word_a, a_mat, _) = &candidates[ci];
        let lift = match gap_lift(a_mat, place, budgets.precision) {
            Ok(l) => l,
            Err(SearchError::NoGapAnywhere) => continue,
            Err(e) => return Err(e),
        };
        let j = lift.j as usize;
        // The whole set in the compound representation.
        let rho_elems: Vec<QMatrix> = q.elements().iter().map(|g| exterior_power(g, j)).collect();
        let rho_q = match MatSet::new(rho_elems) {
            Ok(s) => s,
            Err(_) => continue,
        };
        for n_pow in 1..=budgets.power_cap {
            let a_n = lift.lifted.pow(n_pow);
            let form = match proximal_normal_form(&a_n, &mut ctx, bits) {
                Ok(f) => f,
                Err(_) => continue,
            };
            for eps in &grid {
                let prox = match check_proximal(
                    &form.a_prime,
                    &form.alpha1,
                    &form.hyperplane,
                    eps,
                    &mut ctx,
                ) {
                    Ok(r) => r,
                    Err(_) => continue,
                };
                if !prox.pass {
                    continue;
                }
                // Companion search: good-position words, then symmetric
                // Cayley–Hamilton fallback.
                let mut success: Option<(PingCertificate, String)> = None;
                let h = &form.h;
                let hi = match h.inverse() {
                    Some(hi) => hi,
                    None => continue,
                };
                let cov = form.hyperplane.covector().to_vec();
                enumerate_levels(&rho_q, (form.a_prime.dim() as u32) + 1, budgets.set.ball_cap, |m, w, _| {
                    let bq = h.mul(m).mul(&hi);
                    let col: Vec<ExactScalar> =
                        (0..form.a_prime.dim()).map(|i| bq[(i, 0)].clone()).collect();
                    if !col.iter().skip(1).any(|c| !c.is_zero()) {
                        return Ok(false);
                    }
                    let mut pairing = ExactScalar::from_rat(Rat::zero());
                    for (cc, wc) in cov.iter().zip(col.iter()) {
                        pairing = pairing
                            .checked_add(&cc.checked_mul(wc).map_err(inc)?)
                            .map_err(inc)?;
                    }
                    if pairing.is_zero() {
                        return Ok(false);
                    }
                    match certify_ping(&form, &bq, eps, place) {
                        Ok(cert) => {
                            success = Some((cert, w.to_string()));
                            Ok(true)
                        }
                        Err(PingError::Inconclusive(msg)) if msg.contains("precision") => {
                            Err(inc(msg))
                        }
                        Err(_) => Ok(false),
                    }
                })?;
                if success.is_none() && q.symmetric() {
                    // Symmetric branch: b = q⁻¹·aᴺ·q powered until the
                    // leading coordinate is nonzero.
                    let a_frame = form.a_prime.clone();
                    enumerate_levels(&rho_q, (form.a_prime.dim() as u32) + 1, budgets.set.ball_cap, |m, w, _| {
                        let Some(mi) = m.inverse() else { return Ok(false) };
                        let b0 = h
                            .mul(&mi)
                            .mul(&hi)
                            .mul(&a_frame)
                            .mul(h)
                            .mul(m)
                            .mul(&hi);
                        let nf = match nonfixing_power(&b0, &form, (d * d) as u32) {
                            Ok(nf) => nf,
                            Err(_) => return Ok(false),
                        };
                        if nf.projectively_fixed {
                            return Ok(false);
                        }
                        let b = b0.pow(nf.j);
                        match certify_ping(&form, &b, eps, place) {
                            Ok(cert) => {
                                success = Some((cert, format!("ch:{}:{}", w, nf.j)));
                                Ok(true)
                            }
                            Err(_) => Ok(false),
                        }
                    })?;
                }
                if let Some((cert, word_b)) = success {
                    return finish_dplus(&q, word_a, n_pow, &word_b, cert, budgets);
                }
            }
        }
    }
    Err(SearchError::BudgetExhausted(
        "no certified pair found within the power and candidate budgets".to_string(),
    ))
}

fn finish_dplus(
    q: &MatSet,
    word_a: &str,
    n_pow: u32,
    word_b: &str,
    cert: PingCertificate,
    budgets: &DPlusBudgets,
) -> SearchResult<DPlusResult> {
    // Words in the ambient representation: u = word_a^N, v = word_b · u.
    // The Cayley–Hamilton fallback encodes its companion as "ch:w:j",
    // meaning (w⁻¹ · a · w)ʲ; its ambient word is w-dependent only when the
    // inverse letters exist in the set, so we keep the structured tag.
    let u_word = word_a.repeat(n_pow as usize);
    let (v_word, v_mat) = if let Some(rest) = word_b.strip_prefix("ch:") {
        let mut parts = rest.rsplitn(2, ':');
        let js = parts.next().ok_or_else(|| inc("malformed companion tag"))?;
        let w = parts.next().ok_or_else(|| inc("malformed companion tag"))?;
        let j: u32 = js.parse().map_err(inc)?;
        let wm = word_product(q, w).ok_or_else(|| inc("companion word fails to reconstruct"))?;
        let wi = wm.inverse().ok_or_else(|| inc("companion word is singular"))?;
        let am = word_product(q, &u_word).ok_or_else(|| inc("word fails to reconstruct"))?;
        let b_amb = wi.mul(&am).mul(&wm).pow(j);
        let v = b_amb.mul(&am);
        (format!("ch:{}:{}*{}", w, j, u_word), v)
    } else {
        let v_word = format!("{}{}", word_b, u_word);
        let v = word_product(q, &v_word).ok_or_else(|| inc("word fails to reconstruct"))?;
        (v_word, v)
    };
    let u_mat = word_product(q, &u_word).ok_or_else(|| inc("word fails to reconstruct"))?;
    let n = (u_word.len().max(word_b.trim_start_matches("ch:").len() + u_word.len())) as u32;

    let mut ball_sizes = Vec::new();
    let cap_n = budgets.ball_record_cap.min(n.max(1));
    for k in 1..=cap_n {
        match crate::setcalc::ball(q, k, &budgets.set) {
            Ok(b) => ball_sizes.push(b.len()),
            Err(_) => break,
        }
    }

    Ok(DPlusResult {
        n,
        pair: (u_mat, v_mat),
        pair_words: (u_word, v_word),
        certificate: cert,
        ball_sizes,
    })
}

// ---------------------------------------------------------------------------
// Growth tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthRecord {
    pub n: u32,
    pub ball_size: usize,
    /// Certified rational interval for ln|B_n| / n.
    #[serde(with = "crate::scalars::rat_string")]
    pub entropy_lower: Rat,
    #[serde(with = "crate::scalars::rat_string")]
    pub entropy_upper: Rat,
}

/// Certified rational interval for the natural logarithm of a rational
/// r ≥ 1, via the atanh series with an explicit geometric tail bound.
fn ln_interval(r: &Rat) -> (Rat, Rat) {
    assert!(r >= &Rat::one());
    // Normalize r = 2^e · x with x ∈ [1, 2).
    let mut e = 0u32;
    let mut x = r.clone();
    let two = rat_i64(2);
    while x >= two {
        x = x / two.clone();
        e += 1;
    }
    let (lx_lo, lx_hi) = ln_via_atanh(&x);
    let (l2_lo, l2_hi) = ln_via_atanh(&two);
    let e_r = Rat::from_integer(BigInt::from(e));
    (e_r.clone() * l2_lo + lx_lo, e_r * l2_hi + lx_hi)
}

/// ln x for x ∈ [1, 2] as 2·atanh(z), z = (x−1)/(x+1) ≤ 1/3, with the tail
/// bounded by the geometric series.
fn ln_via_atanh(x: &Rat) -> (Rat, Rat) {
    let z = (x.clone() - Rat::one()) / (x.clone() + Rat::one());
    if z.is_zero() {
        return (Rat::zero(), Rat::zero());
    }
    let z2 = z.clone() * z.clone();
    let terms = 24usize;
    let mut sum = Rat::zero();
    let mut pow = z.clone();
    for k in 0..terms {
        sum = sum + pow.clone() / rat_i64((2 * k + 1) as i64);
        pow = pow * z2.clone();
    }
    // Tail: Σ_{k≥K} z^{2k+1}/(2k+1) ≤ z^{2K+1} / ((2K+1)(1−z²)).
    let tail = pow / (rat_i64((2 * terms + 1) as i64) * (Rat::one() - z2));
    let lo = sum.clone() * rat_i64(2);
    let hi = (sum + tail) * rat_i64(2);
    (lo, hi)
}

/// Exact ball sizes |(Σ∪1)ⁿ| with certified entropy intervals.
pub fn growth_table(sigma: &MatSet, n_max: u32, budget: &Budget) -> SearchResult<Vec<GrowthRecord>> {
    let q = sigma.with_identity();
    let mut out = Vec::new();
    for n in 1..=n_max {
        let b = crate::setcalc::ball(&q, n, budget).map_err(map_set_err)?;
        let size = b.len();
        let (lo, hi) = ln_interval(&Rat::from_integer(BigInt::from(size)));
        let n_r = Rat::from_integer(BigInt::from(n));
        out.push(GrowthRecord {
            n,
            ball_size: size,
            entropy_lower: lo / n_r.clone(),
            entropy_upper: hi / n_r,
        });
    }
    // Monotonicity is structural: balls are nested.
    for w in out.windows(2) {
        debug_assert!(w[0].ball_size <= w[1].ball_size);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pingpong::{refute_freeness, verify_ping, FreeMode, Refutation};
    use crate::scalars::rat_i64;

    fn mat(rows: &[&[i64]]) -> QMatrix {
        QMatrix::from_i64_rows(rows)
    }

    fn rot345() -> QMatrix {
        QMatrix::from_rat_rows(vec![vec![rat(3, 5), rat(-4, 5)], vec![rat(4, 5), rat(3, 5)]])
    }

    fn set(ms: Vec<QMatrix>) -> MatSet {
        MatSet::new(ms).unwrap()
    }

    #[test]
    fn escape_upper_triangular_finds_lower() {
        let sigma = set(vec![
            QMatrix::identity(2),
            mat(&[&[1, 1], &[0, 1]]),
            mat(&[&[1, 0], &[1, 1]]),
        ]);
        let w = escape(&sigma, &Predicate::UpperTriangular, 4).unwrap();
        assert_eq!(w.length, 1);
        assert_eq!(w.word, "2");
        assert_eq!(w.element, mat(&[&[1, 0], &[1, 1]]));
    }

    #[test]
    fn escape_projective_fixed_point() {
        let sigma = set(vec![
            QMatrix::identity(2),
            QMatrix::diagonal(vec![
                ExactScalar::from_rat(rat_i64(2)),
                ExactScalar::from_rat(rat(1, 2)),
            ]),
            rot345(),
        ]);
        let e1 = ProjPoint::from_rational(vec![Rat::one(), Rat::zero()]).unwrap();
        let w = escape(&sigma, &Predicate::FixesProjPoint(e1), 4).unwrap();
        assert_eq!(w.length, 1);
        assert_eq!(w.element, rot345());
    }

    #[test]
    fn escape_semisimple_exhausts_on_unipotents() {
        let sigma = set(vec![QMatrix::identity(2), mat(&[&[1, 1], &[0, 1]])]);
        assert!(matches!(
            escape(&sigma, &Predicate::IsNotSemisimple, 5),
            Err(SearchError::Exhausted(5))
        ));
    }

    #[test]
    fn escape_sl2_law_and_virtually_central() {
        let x = mat(&[&[1, 2], &[0, 1]]);
        let y = mat(&[&[1, 0], &[2, 1]]);
        let sigma = set(vec![QMatrix::identity(2), x.clone(), y.clone()]);
        let pred = Predicate::SatisfiesSL2Law { reference: vec![x.clone(), y.clone()] };
        let w = escape(&sigma, &pred, 3).unwrap();
        assert_eq!(w.length, 1);

        let rot4 = mat(&[&[0, -1], &[1, 0]]);
        let sigma = set(vec![QMatrix::identity(2), rot4, mat(&[&[1, 1], &[0, 1]])]);
        let w = escape(&sigma, &Predicate::IsVirtuallyCentral, 3).unwrap();
        assert_eq!(w.length, 1);
        assert_eq!(w.word, "2");
    }

    fn diag_form(top: i64) -> crate::conjugators::ProximalForm {
        let a = QMatrix::diagonal(vec![
            ExactScalar::from_rat(rat_i64(top)),
            ExactScalar::from_rat(Rat::one() / rat_i64(top)),
        ]);
        let mut ctx = PlaceCtx::real();
        proximal_normal_form(&a, &mut ctx, 192).unwrap()
    }

    #[test]
    fn good_position_rotation_and_sanov() {
        let form = diag_form(100);
        let q = set(vec![QMatrix::identity(2), rot345()]);
        let g = good_position_element(&q, &form).unwrap();
        assert_eq!(g.length, 1);
        assert_eq!(g.element, rot345());

        let q = set(vec![
            QMatrix::identity(2),
            mat(&[&[1, 2], &[0, 1]]),
            mat(&[&[1, 0], &[2, 1]]),
        ]);
        let g = good_position_element(&q, &form).unwrap();
        assert_eq!(g.length, 1);
        assert_eq!(g.element, mat(&[&[1, 0], &[2, 1]]));

        let q = set(vec![
            QMatrix::identity(2),
            QMatrix::diagonal(vec![
                ExactScalar::from_rat(rat_i64(2)),
                ExactScalar::from_rat(rat(1, 2)),
            ]),
        ]);
        assert!(matches!(good_position_element(&q, &form), Err(SearchError::Exhausted(_))));
    }

    #[test]
    fn nonfixing_power_examples() {
        let form = diag_form(100);
        let nf = nonfixing_power(&rot345(), &form, 4).unwrap();
        assert_eq!(nf.j, 1);
        assert_eq!(nf.first_coordinate, ExactScalar::from_rat(rat(3, 5)));
        assert!(!nf.projectively_fixed);

        let nf = nonfixing_power(&mat(&[&[1, 1], &[0, 1]]), &form, 4).unwrap();
        assert_eq!(nf.j, 1);
        assert!(nf.projectively_fixed);

        let nf = nonfixing_power(&mat(&[&[0, -1], &[1, 0]]), &form, 4).unwrap();
        assert_eq!(nf.j, 2);
        assert_eq!(nf.first_coordinate, ExactScalar::from_rat(rat_i64(-1)));
        assert!(!nf.coordinate_lower_bound.is_zero());
    }

    #[test]
    fn gap_lift_examples() {
        let d3 = |a: i64, b: i64, (cn, cd): (i64, i64)| {
            QMatrix::diagonal(vec![
                ExactScalar::from_rat(rat_i64(a)),
                ExactScalar::from_rat(rat_i64(b)),
                ExactScalar::from_rat(rat(cn, cd)),
            ])
        };
        let g = gap_lift(&d3(4, 1, (1, 4)), Place::Real, Precision::default()).unwrap();
        assert_eq!(g.j, 1);

        let g = gap_lift(&d3(2, 2, (1, 4)), Place::Real, Precision::default()).unwrap();
        assert_eq!(g.j, 2);
        // The compound's eigenvalues are pairwise products: top is 4.
        let mut ctx = PlaceCtx::real();
        let lam = spectral_radius_bits(&g.lifted, &mut ctx, 128).unwrap();
        assert_eq!(lam.magnitude.upper_rat(), rat_i64(4));

        assert!(matches!(
            gap_lift(&rot345(), Place::Real, Precision::default()),
            Err(SearchError::NoGapAnywhere)
        ));
    }

    #[test]
    fn gap_lift_compound_char_poly_consistency() {
        // Eigenvalues of the lifted matrix are j-fold products: check via
        // the characteristic polynomial on a small diagonal case.
        let a = QMatrix::diagonal(vec![
            ExactScalar::from_rat(rat_i64(3)),
            ExactScalar::from_rat(rat_i64(2)),
            ExactScalar::from_rat(Rat::one()),
        ]);
        let lifted = exterior_power(&a, 2);
        let cp = char_poly(&lifted);
        // Roots must be {6, 3, 2}: (t−6)(t−3)(t−2) = t³ −11t² +36t −36.
        assert_eq!(cp.coeffs[0], ExactScalar::from_rat(rat_i64(-36)));
        assert_eq!(cp.coeffs[1], ExactScalar::from_rat(rat_i64(36)));
        assert_eq!(cp.coeffs[2], ExactScalar::from_rat(rat_i64(-11)));
        assert_eq!(cp.coeffs[3], ExactScalar::from_rat(Rat::one()));
    }

    #[test]
    fn dplus_sanov_real() {
        let sigma = set(vec![
            QMatrix::identity(2),
            mat(&[&[1, 2], &[0, 1]]),
            mat(&[&[1, 0], &[2, 1]]),
        ]);
        let out = dplus_upper(&sigma, Place::Real, &DPlusBudgets::default()).unwrap();
        assert!(out.n <= 10, "pair radius {} exceeds the expected budget", out.n);
        verify_ping(&out.certificate).unwrap();
        // Word reconstruction: both pair elements are products of their words.
        let q = sigma.with_identity();
        let u = word_product(&q, &out.pair_words.0).unwrap();
        assert_eq!(u, out.pair.0);
        if !out.pair_words.1.starts_with("ch:") {
            let v = word_product(&q, &out.pair_words.1).unwrap();
            assert_eq!(v, out.pair.1);
        }
        // Refuter cross-check on the certified pair.
        let r = refute_freeness(&out.pair.0, &out.pair.1, FreeMode::Semigroup, 12).unwrap();
        assert_eq!(r, Refutation::NoCollisionUpTo(12));
        assert!(!out.ball_sizes.is_empty());
    }

    #[test]
    fn dplus_bounded_set_reports_no_growth() {
        let sigma = set(vec![QMatrix::identity(2), rot345()]);
        assert!(matches!(
            dplus_upper(&sigma, Place::Real, &DPlusBudgets::default()),
            Err(SearchError::NoGrowthDetected)
        ));
    }

    #[test]
    fn dplus_five_adic() {
        let sigma = set(vec![
            QMatrix::identity(2),
            QMatrix::from_rat_rows(vec![vec![Rat::one(), rat(1, 5)], vec![Rat::zero(), Rat::one()]]),
            QMatrix::from_rat_rows(vec![vec![Rat::one(), Rat::zero()], vec![rat(1, 5), Rat::one()]]),
        ]);
        let out = dplus_upper(&sigma, Place::Finite { p: 5 }, &DPlusBudgets::default()).unwrap();
        verify_ping(&out.certificate).unwrap();
        let r = refute_freeness(&out.pair.0, &out.pair.1, FreeMode::Semigroup, 10).unwrap();
        assert_eq!(r, Refutation::NoCollisionUpTo(10));
    }

    #[test]
    fn growth_table_free_and_unipotent() {
        let sigma = set(vec![
            QMatrix::identity(2),
            mat(&[&[1, 2], &[0, 1]]),
            mat(&[&[1, 0], &[2, 1]]),
        ]);
        let table = growth_table(&sigma, 6, &Budget::default()).unwrap();
        for rec in &table {
            assert_eq!(rec.ball_size as u64, (1u64 << (rec.n + 1)) - 1);
        }
        // Subadditivity |B_{m+n}| ≤ |B_m|·|B_n| on computed prefixes.
        for m in 1..=3usize {
            for n in 1..=3usize {
                if m + n <= 6 {
                    assert!(
                        table[m + n - 1].ball_size <= table[m - 1].ball_size * table[n - 1].ball_size
                    );
                }
            }
        }
        // Entropy at n_max is at least log 2 · n/(n+1) for a free pair.
        let last = table.last().unwrap();
        let (ln2_lo, _) = ln_via_atanh(&rat_i64(2));
        let n = rat_i64(last.n as i64);
        let bound = ln2_lo * n.clone() / (n + Rat::one());
        assert!(last.entropy_lower >= bound);

        let sigma = set(vec![QMatrix::identity(2), mat(&[&[1, 1], &[0, 1]])]);
        let table = growth_table(&sigma, 6, &Budget::default()).unwrap();
        for rec in &table {
            assert_eq!(rec.ball_size, rec.n as usize + 1);
        }
    }

    #[test]
    fn ln_interval_brackets_known_values() {
        // ln 2 = 0.6931471805599453…
        let (lo, hi) = ln_interval(&rat_i64(2));
        assert!(lo < hi);
        assert!(lo > rat(693147, 1_000_000));
        assert!(hi < rat(693148, 1_000_000));
        // ln 1 = 0.
        let (lo, hi) = ln_interval(&Rat::one());
        assert!(lo.is_zero() && hi.is_zero());
        // ln 127 = 4.8441870864585970…
        let (lo, hi) = ln_interval(&rat_i64(127));
        assert!(lo > rat(484418, 100_000));
        assert!(hi < rat(484419, 100_000));
    }
}
