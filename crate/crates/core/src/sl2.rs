//! The constructive SL₂ pipeline: exact Zariski-density testing, place
//! selection by denominator primes, and synthesis of an independent pair
//! a, a′ = a^{n₅}·b·a^{n₆}·c·a^{n₅} backed by a replayable certificate.

use crate::conjugators::{padic_eigen_split, proximal_normal_form};
use crate::linalg::{algebra_closure, spectral_radius_bits, QMatrix};
use crate::pingpong::{certify_table_tennis, default_eps_grid, TableTennisCertificate, TtError};
use crate::projective::{proj_dist_pp, ProjPoint};
use crate::scalars::{
    rat, rat_i64, rat_val_p, ExactScalar, MagOrder, Magnitude, Place, PlaceCtx, Precision, Rat,
};
use crate::setcalc::{ball, set_norm_bits, Budget, MatSet};
use num::bigint::BigInt;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

// ---------------------------------------------------------------------------
// Errors and results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Sl2Error {
    #[error("input set is not dense: {0}")]
    NotDense(String),
    #[error("density lost after passing to squares and their commutators: {0}")]
    DensityLost(String),
    #[error("no element with certified spectral radius above 1 within the search radius")]
    NoLoxodromicFound,
    #[error("exponent budget exhausted without a certified pair")]
    ExponentBudgetExhausted,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type Sl2Result<T> = Result<T, Sl2Error>;

fn inc<E: std::fmt::Display>(e: E) -> Sl2Error {
    Sl2Error::Inconclusive(e.to_string())
}

fn ctx_for(place: Place) -> PlaceCtx {
    match place {
        Place::Real => PlaceCtx::real(),
        Place::Finite { p } => PlaceCtx::finite(p).expect("place carries a valid prime"),
    }
}

// ---------------------------------------------------------------------------
// Zariski density
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Density {
    Dense,
    NotDense { reason: String },
}

const DENSITY_RADIUS: u32 = 6;

/// True when the element's order is certified infinite: rational trace
/// outside [−2, 2]; trace ±2 away from the scalars; or a rational trace in
/// (−2, 2) other than 0, ±1 (no other rational value is twice the cosine
/// of a rational angle).
fn certified_infinite_order(m: &QMatrix) -> bool {
    if m.is_scalar() {
        return false;
    }
    let t = m.trace();
    let two = ExactScalar::from_rat(rat_i64(2));
    if let Some(tr) = t.as_rat() {
        let a = tr.abs();
        if a >= rat_i64(2) {
            return true;
        }
        !(a.is_zero() || a == Rat::one())
    } else {
        t.abs().cmp_total(&two) == Ordering::Greater
    }
}

fn density_with(sigma: &MatSet, budget: &Budget) -> Density {
    assert_eq!(sigma.dim(), 2, "density test is for 2x2 sets");
    let q = sigma.with_identity();
    let mut last_reason = String::new();
    for r in 1..=DENSITY_RADIUS {
        let b = match ball(&q, r, budget) {
            Ok(b) => b,
            Err(e) => {
                return Density::NotDense { reason: format!("ball computation failed: {}", e) }
            }
        };
        // (A) the spanned associative algebra is all of M₂.
        let closure = algebra_closure(b.elements());
        if closure.dim < 4 {
            last_reason = if closure.dim <= 2 {
                format!(
                    "commutative algebra of dimension {} spanned by the radius-{} ball",
                    closure.dim, r
                )
            } else {
                format!(
                    "reducible: the radius-{} ball spans a proper triangularizable algebra of dimension 3",
                    r
                )
            };
            continue;
        }
        // (B) the algebra spanned by squares is all of M₂.
        let squares: Vec<QMatrix> = b.elements().iter().map(|g| g.mul(g)).collect();
        let sq_closure = algebra_closure(&squares);
        if sq_closure.dim < 4 {
            last_reason = format!(
                "squares of the radius-{} ball span a proper subalgebra of dimension {} (torus-normalizer class)",
                r, sq_closure.dim
            );
            continue;
        }
        // (C) some ball element has certified infinite order.
        if b.elements().iter().any(certified_infinite_order) {
            return Density::Dense;
        }
        last_reason = format!(
            "no element of the radius-{} ball certifies infinite order (torsion class)",
            r
        );
    }
    Density::NotDense { reason: last_reason }
}

/// Exact density test for a finite 2x2 set, by escape from each proper
/// subgroup class within a radius-6 ball.
pub fn zariski_dense_sl2(sigma: &MatSet) -> Density {
    density_with(sigma, &Budget::default())
}

// ---------------------------------------------------------------------------
// Place selection
// ---------------------------------------------------------------------------

fn denominator_primes(sigma: &MatSet) -> Vec<u64> {
    let mut primes = BTreeSet::new();
    for g in sigma.elements() {
        for i in 0..g.dim() {
            for j in 0..g.dim() {
                let mut denoms: Vec<BigInt> = Vec::new();
                let e = &g[(i, j)];
                denoms.push(e.rational_part().denom().clone());
                denoms.push(e.quad_coeff().denom().clone());
                for mut d in denoms {
                    d = d.abs();
                    let mut f = BigInt::from(2u32);
                    while &f * &f <= d {
                        if (&d % &f).is_zero() {
                            if let Some(p) = u64::try_from(&f).ok() {
                                primes.insert(p);
                            }
                            while (&d % &f).is_zero() {
                                d = &d / &f;
                            }
                        }
                        f += 1;
                    }
                    if d > BigInt::one() {
                        if let Ok(p) = u64::try_from(&d) {
                            primes.insert(p);
                        }
                    }
                }
            }
        }
    }
    primes.into_iter().collect()
}

/// The first prime (in increasing order) dividing some entry denominator
/// for which the radius ball exhibits a negative entry valuation; the real
/// place otherwise.
pub fn select_place(sigma: &MatSet, radius: u32) -> Place {
    let primes = denominator_primes(sigma);
    if primes.is_empty() {
        return Place::Real;
    }
    let q = sigma.with_identity();
    let b = match ball(&q, radius, &Budget::default()) {
        Ok(b) => b,
        Err(_) => return Place::Real,
    };
    for p in primes {
        for g in b.elements() {
            for i in 0..g.dim() {
                for j in 0..g.dim() {
                    if let Some(r) = g[(i, j)].as_rat() {
                        if matches!(rat_val_p(r, p), Some(v) if v < 0) {
                            return Place::Finite { p };
                        }
                    }
                }
            }
        }
    }
    Place::Real
}

// ---------------------------------------------------------------------------
// Pipeline budgets and trace
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sl2Budgets {
    pub set: Budget,
    /// Ball radius over the squared set when searching for a loxodromic seed.
    pub candidate_radius: u32,
    /// Radius handed to place selection.
    pub place_radius: u32,
    /// Cap on the power raising the seed to |α| ≥ 100.
    pub power_cap: u32,
    /// Cap for the measured exponents f₁, f₂, f₃.
    pub f_cap: u32,
    pub n5_cap: u32,
    pub n6_cap: u32,
    pub precision: Precision,
}

impl Default for Sl2Budgets {
    fn default() -> Self {
        Sl2Budgets {
            set: Budget::default(),
            candidate_radius: 2,
            place_radius: 3,
            power_cap: 64,
            f_cap: 64,
            n5_cap: 3,
            n6_cap: 6,
            precision: Precision::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sl2PipelineTrace {
    pub place: Place,
    /// Index words over the identity-augmented input set.
    pub word_a: String,
    pub word_b: String,
    pub word_c: String,
    pub len_a: u32,
    pub len_b: u32,
    pub len_c: u32,
    /// Conjugator taking a to (Hensel-approximate at finite places)
    /// diagonal form; the certificate lives in this frame.
    pub conjugator: QMatrix,
    /// Certified |α| for the diagonalized element, at least 100.
    pub alpha: Magnitude,
    /// min over sides of the maximal off-diagonal magnitude of the squared
    /// set in the diagonal frame.
    pub d_value: Magnitude,
    /// Least certified exponents: ‖Σ⁽²⁾‖ ≤ |α|^f₁; d_value, |b₁₂|, |c₂₁|
    /// ≥ |α|^{−f₂}; attracting/repelling data of a′ at distance ≥ |α|^{−f₃}
    /// from the coordinate points.
    pub f1: u32,
    pub f2: u32,
    pub f3: u32,
    pub n5: u32,
    pub n6: u32,
    pub b_inverted: bool,
    pub c_inverted: bool,
    pub certificate: TableTennisCertificate,
    /// Word length of a′ over the input set: the empirical radius at which
    /// the independent pair appears.
    pub total_word_length: u32,
}

// ---------------------------------------------------------------------------
// Word bookkeeping
// ---------------------------------------------------------------------------

const WORD_ALPHABET: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

fn index_char(i: usize) -> char {
    assert!(i < WORD_ALPHABET.len(), "sets are limited to 36 elements for word encoding");
    WORD_ALPHABET[i] as char
}

fn char_index(c: char) -> Option<usize> {
    WORD_ALPHABET.iter().position(|&b| b as char == c)
}

/// Multiply out an index word over the identity-augmented set.
pub fn sl2_word_product(set: &MatSet, word: &str) -> Option<QMatrix> {
    let mut m = QMatrix::identity(set.dim());
    for c in word.chars() {
        let i = char_index(c)?;
        let g = set.elements().get(i)?;
        m = m.mul(g);
    }
    Some(m)
}

fn inverse_index_map(q: &MatSet) -> Sl2Result<Vec<usize>> {
    let mut map = Vec::with_capacity(q.len());
    for g in q.elements() {
        let gi = g
            .inverse()
            .ok_or_else(|| Sl2Error::PreconditionViolated("set contains a singular matrix".into()))?;
        let pos = q
            .elements()
            .iter()
            .position(|h| *h == gi)
            .ok_or_else(|| Sl2Error::PreconditionViolated("set is not symmetric".into()))?;
        map.push(pos);
    }
    Ok(map)
}

fn inverse_word(word: &str, inv: &[usize]) -> String {
    word.chars()
        .rev()
        .map(|c| index_char(inv[char_index(c).expect("word uses the fixed alphabet")]))
        .collect()
}

// ---------------------------------------------------------------------------
// Magnitude helpers
// ---------------------------------------------------------------------------

fn mag_min(a: &Magnitude, b: &Magnitude) -> Magnitude {
    match a.compare(b) {
        Ok(MagOrder::Less) | Ok(MagOrder::Equal) => a.clone(),
        Ok(MagOrder::Greater) => b.clone(),
        _ => {
            // Conservative enclosure of the minimum by rational endpoints.
            if a.upper_rat() <= b.upper_rat() {
                a.clone()
            } else {
                b.clone()
            }
        }
    }
}

fn alpha_pow(alpha: &Magnitude, place: Place, f: u32) -> Magnitude {
    if f == 0 {
        Magnitude::one_at(place)
    } else {
        alpha.pow(f)
    }
}

fn mag_at_least(x: &Magnitude, bound: &Magnitude) -> bool {
    matches!(x.compare(bound), Ok(MagOrder::Greater) | Ok(MagOrder::Equal))
}

fn mag_at_most(x: &Magnitude, bound: &Magnitude) -> bool {
    matches!(x.compare(bound), Ok(MagOrder::Less) | Ok(MagOrder::Equal))
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

/// Run the full independent-pair pipeline on a symmetric set containing the
/// identity: squares and commutators of squares, place selection, loxodromic
/// amplification to |α| ≥ 100, exact/Hensel diagonalization, the min-max
/// off-diagonal quantity, and a minimal-exponent certified pair.
pub fn sl2_free_pair(sigma: &MatSet, budgets: &Sl2Budgets) -> Sl2Result<Sl2PipelineTrace> {
    if sigma.dim() != 2 {
        return Err(Sl2Error::PreconditionViolated("the pipeline is for 2x2 sets".into()));
    }
    let q = sigma.with_identity();
    let inv = inverse_index_map(&q)?;
    match density_with(&q, &budgets.set) {
        Density::Dense => {}
        Density::NotDense { reason } => return Err(Sl2Error::NotDense(reason)),
    }

    // Step 1: squares and commutators of squares, with Σ-words.
    let elems = q.elements();
    let mut sq_vec: Vec<(QMatrix, String)> = Vec::new();
    let mut seen: HashMap<QMatrix, ()> = HashMap::new();
    for (i, g) in elems.iter().enumerate() {
        let m = g.mul(g);
        if seen.contains_key(&m) {
            continue;
        }
        seen.insert(m.clone(), ());
        let c = index_char(i);
        sq_vec.push((m, format!("{}{}", c, c)));
    }
    for (i, g) in elems.iter().enumerate() {
        for (j, h) in elems.iter().enumerate() {
            if i == j {
                continue;
            }
            let g2 = g.mul(g);
            let h2 = h.mul(h);
            let g2i = elems[inv[i]].mul(&elems[inv[i]]);
            let h2i = elems[inv[j]].mul(&elems[inv[j]]);
            let m = g2.mul(&h2).mul(&g2i).mul(&h2i);
            if seen.contains_key(&m) {
                continue;
            }
            seen.insert(m.clone(), ());
            let (ci, cj, cii, cji) =
                (index_char(i), index_char(j), index_char(inv[i]), index_char(inv[j]));
            sq_vec.push((m, format!("{0}{0}{1}{1}{2}{2}{3}{3}", ci, cj, cii, cji)));
        }
    }
    eprintln!("[sl2] sq_vec built: {} elements", sq_vec.len());
    let sq_set = MatSet::new(sq_vec.iter().map(|(m, _)| m.clone()).collect()).map_err(inc)?;
    match density_with(&sq_set, &budgets.set) {
        Density::Dense => {}
        Density::NotDense { reason } => return Err(Sl2Error::DensityLost(reason)),
    }

    eprintln!("[sl2] density recheck done");
    // Step 2: place selection on the squared set.
    let place = select_place(&sq_set, budgets.place_radius);
    let mut ctx = ctx_for(place);
    let bits = budgets.precision.bits.max(192);

    // Step 3: first semisimple product with certified Λ > 1, powered until
    // the certified spectral radius reaches 100.
    eprintln!("[sl2] place: {:?}", place);
    let products = word_ball(&sq_vec, budgets.candidate_radius, budgets.set.ball_cap)?;
    eprintln!("[sl2] products: {}", products.len());
    let mut seed: Option<(QMatrix, String)> = None;
    for (m, w) in &products {
        if w.is_empty() || m.is_scalar() {
            continue;
        }
        let disc = disc_of(m)?;
        if disc.is_zero() {
            continue;
        }
        let lam = spectral_radius_bits(m, &mut ctx, 128).map_err(inc)?.magnitude;
        if lam.compare_rat(&Rat::one()) == MagOrder::Greater {
            seed = Some((m.clone(), w.clone()));
            break;
        }
    }
    let (seed_mat, seed_word) = seed.ok_or(Sl2Error::NoLoxodromicFound)?;
    eprintln!("[sl2] seed word: {}", seed_word);
    let mut a = seed_mat.clone();
    let mut m_pow = 1u32;
    let hundred = rat_i64(100);
    let alpha = loop {
        let lam = spectral_radius_bits(&a, &mut ctx, bits).map_err(inc)?.magnitude;
        match lam.compare_rat(&hundred) {
            MagOrder::Greater | MagOrder::Equal => break lam,
            _ => {}
        }
        if m_pow >= budgets.power_cap {
            return Err(Sl2Error::NoLoxodromicFound);
        }
        a = a.mul(&seed_mat);
        m_pow += 1;
    };
    eprintln!("[sl2] amplified m_pow = {}", m_pow);
    let word_a = seed_word.repeat(m_pow as usize);
    if a.det() != ExactScalar::from_rat(Rat::one()) {
        return Err(Sl2Error::Inconclusive("amplified element has determinant other than 1".into()));
    }

    // Step 4: diagonalize (exactly over the real quadratic field; by Hensel
    // splitting at finite places) and measure f₁.
    let form = match place {
        Place::Real => proximal_normal_form(&a, &mut ctx, bits).map_err(inc)?,
        Place::Finite { p } => padic_eigen_split(&a, p, bits).map_err(inc)?,
    };
    let h = form.h.clone();
    let hi = h.inverse().ok_or_else(|| inc("conjugator is singular"))?;
    let a_f = form.a_prime.clone();

    eprintln!("[sl2] normal form done");
    let frame_vec: Vec<(QMatrix, String)> = sq_vec
        .iter()
        .map(|(m, w)| (h.mul(m).mul(&hi), w.clone()))
        .collect();
    let frame_set = MatSet::new(frame_vec.iter().map(|(m, _)| m.clone()).collect()).map_err(inc)?;
    let norm = set_norm_bits(&frame_set, &mut ctx, bits).map_err(inc)?.magnitude;
    let mut f1 = budgets.f_cap;
    for f in 0..=budgets.f_cap {
        if mag_at_most(&norm, &alpha_pow(&alpha, place, f)) {
            f1 = f;
            break;
        }
    }

    eprintln!("[sl2] f1 = {}", f1);
    // Step 5: the min-max off-diagonal quantity and f₂.
    let mut max12: Option<(usize, Magnitude)> = None;
    let mut max21: Option<(usize, Magnitude)> = None;
    for (idx, (m, _)) in frame_vec.iter().enumerate() {
        let m12 = ctx.magnitude(&m[(0, 1)]).map_err(inc)?;
        let m21 = ctx.magnitude(&m[(1, 0)]).map_err(inc)?;
        max12 = Some(match max12 {
            None => (idx, m12),
            Some((bi, best)) => {
                if m12.upper_rat() > best.upper_rat() {
                    (idx, m12.max(&best).map_err(inc)?)
                } else {
                    (bi, best.max(&m12).map_err(inc)?)
                }
            }
        });
        max21 = Some(match max21 {
            None => (idx, m21),
            Some((bi, best)) => {
                if m21.upper_rat() > best.upper_rat() {
                    (idx, m21.max(&best).map_err(inc)?)
                } else {
                    (bi, best.max(&m21).map_err(inc)?)
                }
            }
        });
    }
    let (b_idx, m12) = max12.ok_or_else(|| inc("empty squared set"))?;
    let (c_idx, m21) = max21.ok_or_else(|| inc("empty squared set"))?;
    if m12.is_zero() || m21.is_zero() {
        return Err(Sl2Error::Inconclusive(
            "an off-diagonal side of the squared set vanishes in the diagonal frame".into(),
        ));
    }
    let d_value = mag_min(&m12, &m21);
    let b_entry = ctx.magnitude(&frame_vec[b_idx].0[(0, 1)]).map_err(inc)?;
    let c_entry = ctx.magnitude(&frame_vec[c_idx].0[(1, 0)]).map_err(inc)?;
    let mut f2 = budgets.f_cap;
    for f in 0..=budgets.f_cap {
        let bound = alpha_pow(&alpha, place, f).inverse().map_err(inc)?;
        if mag_at_least(&d_value, &bound)
            && mag_at_least(&b_entry, &bound)
            && mag_at_least(&c_entry, &bound)
        {
            f2 = f;
            break;
        }
    }

    // Step 6 data: candidate b, c and their inverses, with words.
    let b_f = frame_vec[b_idx].0.clone();
    let c_f = frame_vec[c_idx].0.clone();
    let word_b_base = frame_vec[b_idx].1.clone();
    let word_c_base = frame_vec[c_idx].1.clone();
    let b_f_inv = b_f.inverse().ok_or_else(|| inc("singular b"))?;
    let c_f_inv = c_f.inverse().ok_or_else(|| inc("singular c"))?;

    // Step 7: minimal n₅, then n₆ > n₅, then the four inverse variants.
    // The separation scale of the pair is governed by powers of |α|, so the
    // eps ladder is derived from α rather than fixed.
    let quarter = rat(1, 4);
    let mut grid = default_eps_grid(place);
    for k in 1..=4u32 {
        let r = alpha.pow(k).inverse().map_err(inc)?.upper_rat();
        if r.is_positive() && r <= quarter {
            grid.push(r);
        }
    }
    grid.sort_by(|a, b| b.cmp(a));
    grid.dedup();
    let mut found: Option<(u32, u32, bool, bool, TableTennisCertificate)> = None;
    'outer: for n5 in 1..=budgets.n5_cap {
        let a5 = a_f.pow(n5);
        for n6 in (n5 + 1)..=budgets.n6_cap {
            let a6 = a_f.pow(n6);
            for (binv, cinv) in [(false, false), (false, true), (true, false), (true, true)] {
                let bb = if binv { &b_f_inv } else { &b_f };
                let cc = if cinv { &c_f_inv } else { &c_f };
                let y = a5.mul(bb).mul(&a6).mul(cc).mul(&a5);
                let t_att = std::time::Instant::now();
                eprintln!("[sl2] try n5={} n6={} binv={} cinv={}", n5, n6, binv, cinv);
                let attempt = certify_table_tennis(&a_f, &y, place, budgets.precision, &grid);
                eprintln!("[sl2]   -> {:?} in {:?}", attempt.as_ref().map(|_| "ok").map_err(|e| e.to_string()), t_att.elapsed());
                match attempt {
                    Ok(cert) => {
                        found = Some((n5, n6, binv, cinv, cert));
                        break 'outer;
                    }
                    Err(TtError::NoProximalStructure) => continue,
                    Err(_) => continue,
                }
            }
        }
    }
    let (n5, n6, b_inverted, c_inverted, certificate) =
        found.ok_or(Sl2Error::ExponentBudgetExhausted)?;

    // Measured f₃: the y-side attracting data stay |α|^{-f₃}-far from the
    // coordinate points [(1,0)], [(0,1)].
    let e1 = ProjPoint::from_rational(vec![Rat::one(), Rat::zero()]).map_err(inc)?;
    let e2 = ProjPoint::from_rational(vec![Rat::zero(), Rat::one()]).map_err(inc)?;
    let mut min_dist: Option<Magnitude> = None;
    for g in &certificate.generators[2..4] {
        for pt in [&e1, &e2] {
            let dist = proj_dist_pp(&g.attracting, pt, &mut ctx, bits).map_err(inc)?;
            min_dist = Some(match min_dist {
                None => dist,
                Some(best) => mag_min(&best, &dist),
            });
        }
    }
    let min_dist = min_dist.expect("certificates carry four generators");
    let mut f3 = budgets.f_cap;
    for f in 0..=budgets.f_cap {
        let bound = alpha_pow(&alpha, place, f).inverse().map_err(inc)?;
        if mag_at_least(&min_dist, &bound) {
            f3 = f;
            break;
        }
    }

    let word_b = if b_inverted { inverse_word(&word_b_base, &inv) } else { word_b_base };
    let word_c = if c_inverted { inverse_word(&word_c_base, &inv) } else { word_c_base };
    let len_a = word_a.len() as u32;
    let len_b = word_b.len() as u32;
    let len_c = word_c.len() as u32;
    let total_word_length = (2 * n5 + n6) * len_a + len_b + len_c;

    Ok(Sl2PipelineTrace {
        place,
        word_a,
        word_b,
        word_c,
        len_a,
        len_b,
        len_c,
        conjugator: h,
        alpha,
        d_value,
        f1,
        f2,
        f3,
        n5,
        n6,
        b_inverted,
        c_inverted,
        certificate,
        total_word_length,
    })
}

fn disc_of(m: &QMatrix) -> Sl2Result<ExactScalar> {
    let t = m.trace();
    let four_det = ExactScalar::from_rat(rat_i64(4)).checked_mul(&m.det()).map_err(inc)?;
    t.checked_mul(&t).map_err(inc)?.checked_add(&-four_det).map_err(inc)
}

/// Distinct products of up to max_len factors from the word-tagged list,
/// accumulated in deterministic order; the identity heads the list.
fn word_ball(
    gens: &[(QMatrix, String)],
    max_len: u32,
    cap: usize,
) -> Sl2Result<Vec<(QMatrix, String)>> {
    let dim = gens.first().map(|(m, _)| m.dim()).unwrap_or(2);
    let mut seen: HashMap<QMatrix, ()> = HashMap::new();
    let identity = QMatrix::identity(dim);
    seen.insert(identity.clone(), ());
    let mut out: Vec<(QMatrix, String)> = vec![(identity, String::new())];
    let mut level: Vec<usize> = vec![0];
    for _ in 1..=max_len {
        let mut next: Vec<usize> = Vec::new();
        for &idx in &level {
            let (base, base_w) = out[idx].clone();
            for (g, gw) in gens {
                let m = base.mul(g);
                if seen.contains_key(&m) {
                    continue;
                }
                seen.insert(m.clone(), ());
                out.push((m, format!("{}{}", base_w, gw)));
                next.push(out.len() - 1);
                if out.len() > cap {
                    return Err(Sl2Error::Inconclusive("word ball exceeded its cap".into()));
                }
            }
        }
        level = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pingpong::{refute_freeness, verify_table_tennis, FreeMode, Refutation};
    use crate::scalars::rat;

    fn mat(rows: &[&[i64]]) -> QMatrix {
        QMatrix::from_i64_rows(rows)
    }

    fn rot345() -> QMatrix {
        QMatrix::from_rat_rows(vec![vec![rat(3, 5), rat(-4, 5)], vec![rat(4, 5), rat(3, 5)]])
    }

    fn set(ms: Vec<QMatrix>) -> MatSet {
        MatSet::new(ms).unwrap()
    }

    fn sanov_symmetrized() -> MatSet {
        let x = mat(&[&[1, 2], &[0, 1]]);
        let y = mat(&[&[1, 0], &[2, 1]]);
        set(vec![
            QMatrix::identity(2),
            x.clone(),
            x.inverse().unwrap(),
            y.clone(),
            y.inverse().unwrap(),
        ])
    }

    #[test]
    fn density_sanov_dense() {
        let sigma = set(vec![
            QMatrix::identity(2),
            mat(&[&[1, 2], &[0, 1]]),
            mat(&[&[1, 0], &[2, 1]]),
        ]);
        assert_eq!(zariski_dense_sl2(&sigma), Density::Dense);
    }

    #[test]
    fn density_upper_triangular_reducible() {
        let sigma = set(vec![
            QMatrix::identity(2),
            mat(&[&[1, 1], &[0, 1]]),
            mat(&[&[1, -1], &[0, 1]]),
            QMatrix::from_rat_rows(vec![vec![rat_i64(2), Rat::zero()], vec![Rat::zero(), rat(1, 2)]]),
            QMatrix::from_rat_rows(vec![vec![rat(1, 2), Rat::zero()], vec![Rat::zero(), rat_i64(2)]]),
        ]);
        match zariski_dense_sl2(&sigma) {
            Density::NotDense { reason } => assert!(reason.contains("reducible"), "{}", reason),
            d => panic!("expected NotDense, got {:?}", d),
        }
    }

    #[test]
    fn density_rotation_commutative() {
        let sigma = set(vec![QMatrix::identity(2), rot345()]);
        match zariski_dense_sl2(&sigma) {
            Density::NotDense { reason } => assert!(reason.contains("commutative"), "{}", reason),
            d => panic!("expected NotDense, got {:?}", d),
        }
    }

    #[test]
    fn place_selection_examples() {
        let five = set(vec![
            QMatrix::identity(2),
            QMatrix::from_rat_rows(vec![vec![Rat::one(), rat(1, 5)], vec![Rat::zero(), Rat::one()]]),
        ]);
        assert_eq!(select_place(&five, 3), Place::Finite { p: 5 });

        let sanov = set(vec![
            QMatrix::identity(2),
            mat(&[&[1, 2], &[0, 1]]),
            mat(&[&[1, 0], &[2, 1]]),
        ]);
        assert_eq!(select_place(&sanov, 3), Place::Real);
    }

    #[test]
    fn pipeline_rejects_non_dense_input() {
        let sigma = set(vec![
            QMatrix::identity(2),
            mat(&[&[1, 1], &[0, 1]]),
            mat(&[&[1, -1], &[0, 1]]),
        ]);
        assert!(matches!(
            sl2_free_pair(&sigma, &Sl2Budgets::default()),
            Err(Sl2Error::NotDense(_))
        ));
    }

    fn check_trace(sigma: &MatSet, trace: &Sl2PipelineTrace, refute_depth: u32) {
        // The certificate replays.
        verify_table_tennis(&trace.certificate).unwrap();
        // |α| ≥ 100 certified.
        assert!(matches!(
            trace.alpha.compare_rat(&rat_i64(100)),
            MagOrder::Greater | MagOrder::Equal
        ));
        // d_value·|α|^{f₂} ≥ 1 certified.
        let bound = alpha_pow(&trace.alpha, trace.place, trace.f2).inverse().unwrap();
        assert!(mag_at_least(&trace.d_value, &bound));
        // Words reconstruct the pair in the certificate's frame.
        let q = sigma.with_identity();
        let h = &trace.conjugator;
        let hi = h.inverse().unwrap();
        let a_amb = sl2_word_product(&q, &trace.word_a).unwrap();
        assert_eq!(h.mul(&a_amb).mul(&hi), trace.certificate.x);
        let b_amb = sl2_word_product(&q, &trace.word_b).unwrap();
        let c_amb = sl2_word_product(&q, &trace.word_c).unwrap();
        let y_amb = a_amb
            .pow(trace.n5)
            .mul(&b_amb)
            .mul(&a_amb.pow(trace.n6))
            .mul(&c_amb)
            .mul(&a_amb.pow(trace.n5));
        assert_eq!(h.mul(&y_amb).mul(&hi), trace.certificate.y);
        assert_eq!(
            trace.total_word_length,
            (2 * trace.n5 + trace.n6) * trace.len_a + trace.len_b + trace.len_c
        );
        // Refuter cross-check on the certified pair.
        let r = refute_freeness(
            &trace.certificate.x,
            &trace.certificate.y,
            FreeMode::Group,
            refute_depth,
        )
        .unwrap();
        assert_eq!(r, Refutation::NoCollisionUpTo(refute_depth));
    }

    #[test]
    fn pipeline_sanov_symmetrized() {
        let sigma = sanov_symmetrized();
        let trace = sl2_free_pair(&sigma, &Sl2Budgets::default()).unwrap();
        assert_eq!(trace.place, Place::Real);
        check_trace(&sigma, &trace, 4);
        assert!(trace.n5 >= 1 && trace.n6 > trace.n5);
    }

    #[test]
    fn pipeline_elementary_symmetrized() {
        let u = mat(&[&[1, 1], &[0, 1]]);
        let l = mat(&[&[1, 0], &[1, 1]]);
        let mu = mat(&[&[-1, -1], &[0, -1]]);
        let ml = mat(&[&[-1, 0], &[-1, -1]]);
        let sigma = set(vec![
            QMatrix::identity(2),
            u.clone(),
            u.inverse().unwrap(),
            l.clone(),
            l.inverse().unwrap(),
            mu.clone(),
            mu.inverse().unwrap(),
            ml.clone(),
            ml.inverse().unwrap(),
        ]);
        let trace = sl2_free_pair(&sigma, &Sl2Budgets::default()).unwrap();
        check_trace(&sigma, &trace, 4);
    }

    #[test]
    fn pipeline_five_adic() {
        let x = QMatrix::from_rat_rows(vec![vec![Rat::one(), rat(1, 5)], vec![Rat::zero(), Rat::one()]]);
        let y = QMatrix::from_rat_rows(vec![vec![Rat::one(), Rat::zero()], vec![rat(1, 5), Rat::one()]]);
        let sigma = set(vec![
            QMatrix::identity(2),
            x.clone(),
            x.inverse().unwrap(),
            y.clone(),
            y.inverse().unwrap(),
        ]);
        let trace = sl2_free_pair(&sigma, &Sl2Budgets::default()).unwrap();
        assert_eq!(trace.place, Place::Finite { p: 5 });
        check_trace(&sigma, &trace, 4);
    }

    #[test]
    fn trace_serde_roundtrip() {
        let sigma = sanov_symmetrized();
        let trace = sl2_free_pair(&sigma, &Sl2Budgets::default()).unwrap();
        let json = serde_json::to_string(&trace).unwrap();
        let back: Sl2PipelineTrace = serde_json::from_str(&json).unwrap();
        verify_table_tennis(&back.certificate).unwrap();
        assert_eq!(back.word_a, trace.word_a);
        assert_eq!(back.n5, trace.n5);
    }
}
