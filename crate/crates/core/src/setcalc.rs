//! Calculus on finite sets of matrices: set powers with exact deduplication,
//! set-level spectral radii and norms, certified two-sided bounds on the
//! conjugation-minimized norm, and growth detection.

use crate::linalg::{
    algebra_closure, op_norm_bits, spectral_radius_bits, QMatrix, SpectralError, SpectralValue,
};
use crate::scalars::{
    dyadic_ceil, nth_root_interval, rat, rat_i64, ExactScalar, MagOrder, Magnitude, Place,
    PlaceCtx, Rat, ScalarError,
};
use num::bigint::BigInt;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashSet;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

// ---------------------------------------------------------------------------
// Budgets
// ---------------------------------------------------------------------------

/// Deterministic resource caps for searches and enumerations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Budget {
    /// Maximum number of elements a set power / ball may reach.
    pub ball_cap: usize,
    /// Conjugator-search improvement rounds.
    pub conjugator_rounds: u32,
    /// Shrink steps for the nilpotent norm descent.
    pub shrink_steps: u32,
    /// Maximum word length for refuters and collision scans.
    pub word_cap: u32,
    /// Maximum exponent for power searches.
    pub exponent_cap: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            ball_cap: 200_000,
            conjugator_rounds: 40,
            shrink_steps: 64,
            word_cap: 12,
            exponent_cap: 64,
        }
    }
}

// ---------------------------------------------------------------------------
// MatSet
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SetError {
    #[error("element count exceeded the ball cap of {0}")]
    BallExplosion(usize),
    #[error("no certified norm growth within the cap of {0}")]
    CapReached(u32),
    #[error("declared flag not satisfied by the elements: {0}")]
    FlagMismatch(String),
    #[error("matrix dimensions disagree: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty matrix set")]
    Empty,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl From<ScalarError> for SetError {
    fn from(e: ScalarError) -> Self {
        SetError::Spectral(SpectralError::Scalar(e))
    }
}

pub type SetResult<T> = Result<T, SetError>;

/// A finite set of square matrices with exact deduplication and verified
/// structural flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatSet {
    dim: usize,
    elements: Vec<QMatrix>,
    symmetric: bool,
    contains_identity: bool,
}

fn hash_of(m: &QMatrix) -> u64 {
    let mut h = DefaultHasher::new();
    m.hash(&mut h);
    h.finish()
}

/// Exact deduplication preserving first-seen order; hash prefilter with exact
/// equality confirmation.
fn dedup_exact(items: Vec<QMatrix>) -> Vec<QMatrix> {
    let mut seen: HashSet<u64> = HashSet::new();
    let mut out: Vec<QMatrix> = Vec::new();
    for m in items {
        let h = hash_of(&m);
        if seen.contains(&h) {
            if out.iter().any(|x| x == &m) {
                continue;
            }
        }
        seen.insert(h);
        out.push(m);
    }
    out
}

impl MatSet {
    /// Build a set, inferring the symmetric / contains-identity flags.
    pub fn new(elements: Vec<QMatrix>) -> SetResult<MatSet> {
        if elements.is_empty() {
            return Err(SetError::Empty);
        }
        let dim = elements[0].dim();
        for e in &elements {
            if e.dim() != dim {
                return Err(SetError::DimensionMismatch(dim, e.dim()));
            }
        }
        let elements = dedup_exact(elements);
        let contains_identity = elements.iter().any(|m| m.is_identity());
        let symmetric = elements.iter().all(|m| {
            m.inverse().map(|inv| elements.iter().any(|x| x == &inv)).unwrap_or(false)
        });
        Ok(MatSet { dim, elements, symmetric, contains_identity })
    }

    /// Build with declared flags, verifying each claim.
    pub fn with_flags(
        elements: Vec<QMatrix>,
        symmetric: bool,
        contains_identity: bool,
    ) -> SetResult<MatSet> {
        let s = Self::new(elements)?;
        if symmetric && !s.symmetric {
            return Err(SetError::FlagMismatch("symmetric".into()));
        }
        if contains_identity && !s.contains_identity {
            return Err(SetError::FlagMismatch("contains_identity".into()));
        }
        Ok(MatSet { symmetric, contains_identity, ..s })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[QMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn contains_identity(&self) -> bool {
        self.contains_identity
    }

    pub fn contains(&self, m: &QMatrix) -> bool {
        self.elements.iter().any(|x| x == m)
    }

    /// The set with the identity adjoined.
    pub fn with_identity(&self) -> MatSet {
        if self.contains_identity {
            return self.clone();
        }
        let mut e = vec![QMatrix::identity(self.dim)];
        e.extend(self.elements.iter().cloned());
        MatSet {
            dim: self.dim,
            elements: e,
            symmetric: self.symmetric,
            contains_identity: true,
        }
    }

    /// The set with all inverses adjoined (singular elements rejected upstream).
    pub fn symmetrized(&self) -> SetResult<MatSet> {
        let mut e = self.elements.clone();
        for m in &self.elements {
            match m.inverse() {
                Some(inv) => e.push(inv),
                None => return Err(SetError::FlagMismatch("symmetric requires invertible".into())),
            }
        }
        MatSet::new(e).map(|s| MatSet { symmetric: true, ..s })
    }

    /// Conjugate every element: g Q g^-1.
    pub fn conjugate_by(&self, g: &QMatrix) -> Option<MatSet> {
        let gi = g.inverse()?;
        let elements = self.elements.iter().map(|m| g.mul(m).mul(&gi)).collect();
        Some(MatSet {
            dim: self.dim,
            elements,
            symmetric: self.symmetric,
            contains_identity: self.contains_identity,
        })
    }
}

/// Products of exactly n factors from Q (which is "length <= n" whenever the
/// identity belongs to Q), deduplicated exactly.
pub fn set_power(q: &MatSet, n: u32, budget: &Budget) -> SetResult<MatSet> {
    assert!(n >= 1);
    let mut cur = q.elements.clone();
    for _ in 1..n {
        let mut next: Vec<QMatrix> = Vec::with_capacity(cur.len() * q.len());
        for m in &cur {
            for g in &q.elements {
                next.push(m.mul(g));
            }
        }
        cur = dedup_exact(next);
        if cur.len() > budget.ball_cap {
            return Err(SetError::BallExplosion(budget.ball_cap));
        }
    }
    Ok(MatSet {
        dim: q.dim,
        elements: cur,
        symmetric: q.symmetric && q.contains_identity,
        contains_identity: q.contains_identity,
    })
}

/// The ball (Q ∪ 1)^n: all products of at most n factors, identity included.
pub fn ball(q: &MatSet, n: u32, budget: &Budget) -> SetResult<MatSet> {
    set_power(&q.with_identity(), n.max(1), budget)
}

// ---------------------------------------------------------------------------
// Set-level spectral quantities
// ---------------------------------------------------------------------------

/// Certified max of spectral values: magnitude enclosure of the max, with the
/// exact witness tracked when the maximum is decidable exactly.
fn max_spectral(values: Vec<SpectralValue>) -> SpectralValue {
    let mut mag: Option<Magnitude> = None;
    for v in &values {
        mag = Some(match mag {
            None => v.magnitude.clone(),
            Some(m) => m.max(&v.magnitude).expect("one place"),
        });
    }
    let magnitude = mag.expect("nonempty");
    // Exact tracking: all values exact and a unique max under the total order.
    let mut exact: Option<ExactScalar> = None;
    let mut all_exact = true;
    for v in &values {
        match &v.exact {
            None => {
                all_exact = false;
                break;
            }
            Some(e) => {
                exact = Some(match exact {
                    None => e.clone(),
                    Some(b) => {
                        if e.cmp_total(&b) == Ordering::Greater {
                            e.clone()
                        } else {
                            b
                        }
                    }
                });
            }
        }
    }
    if all_exact {
        SpectralValue { exact, magnitude }
    } else {
        SpectralValue { exact: None, magnitude }
    }
}

/// Λ(Q) = max over elements of the largest eigenvalue modulus.
pub fn set_lambda(q: &MatSet, ctx: &mut PlaceCtx) -> SetResult<SpectralValue> {
    set_lambda_bits(q, ctx, 96)
}

pub fn set_lambda_bits(q: &MatSet, ctx: &mut PlaceCtx, bits: u32) -> SetResult<SpectralValue> {
    if q.is_empty() {
        return Err(SetError::Empty);
    }
    let mut vals = Vec::with_capacity(q.len());
    for m in q.elements() {
        vals.push(spectral_radius_bits(m, ctx, bits)?);
    }
    Ok(max_spectral(vals))
}

/// ‖Q‖ = max over elements of the operator norm.
pub fn set_norm(q: &MatSet, ctx: &mut PlaceCtx) -> SetResult<SpectralValue> {
    set_norm_bits(q, ctx, 96)
}

pub fn set_norm_bits(q: &MatSet, ctx: &mut PlaceCtx, bits: u32) -> SetResult<SpectralValue> {
    if q.is_empty() {
        return Err(SetError::Empty);
    }
    let mut vals = Vec::with_capacity(q.len());
    for m in q.elements() {
        vals.push(op_norm_bits(m, ctx, bits)?);
    }
    Ok(max_spectral(vals))
}

// ---------------------------------------------------------------------------
// Delta bounds
// ---------------------------------------------------------------------------

/// Certified two-sided information about the conjugation-minimized norm
/// Δ(Q) = inf over g of ‖g Q g⁻¹‖.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaBounds {
    pub place: Place,
    /// Certified lower bound: max over j ≤ d² of Λ(Qʲ)^(1/j).
    pub lower: Magnitude,
    /// Norm of the best conjugate found.
    pub witnessed_upper: Magnitude,
    pub witness_conjugator: Option<QMatrix>,
    /// Finite places only: max over i ≤ d² of (Λ(Qⁱ)·p^(2d−1))^(1/i),
    /// an unconditional upper bound for Δ.
    pub analytic_upper: Option<Magnitude>,
}

/// Certified lower bound for Δ: Λ is conjugation-invariant and
/// Λ(w) ≤ ‖gQg⁻¹‖^j for any product w of j elements, so
/// max_j Λ(Qʲ)^(1/j) ≤ Δ(Q).
fn delta_lower(q: &MatSet, ctx: &mut PlaceCtx, budget: &Budget) -> SetResult<Magnitude> {
    let d = q.dim();
    let dd = (d * d) as u32;
    let mut best = Magnitude::Zero;
    let mut power = q.clone();
    for j in 1..=dd {
        if j > 1 {
            let mut next: Vec<QMatrix> = Vec::new();
            for m in power.elements() {
                for g in q.elements() {
                    next.push(m.mul(g));
                }
            }
            let next = dedup_exact(next);
            if next.len() > budget.ball_cap {
                break;
            }
            power = MatSet {
                dim: q.dim,
                elements: next,
                symmetric: false,
                contains_identity: q.contains_identity,
            };
        }
        for m in power.elements() {
            // Cheap prune: Λ(m) ≤ d · max |entry| at the real place,
            // Λ(m) ≤ max |entry| at finite places.
            if !best.is_zero() {
                let mut entry_max = Magnitude::Zero;
                for e in m.entries() {
                    entry_max = entry_max.max(&ctx.magnitude(e)?)?;
                }
                let crude = match ctx.place {
                    Place::Real => entry_max
                        .checked_mul(&Magnitude::point(rat_i64(d as i64)))
                        .expect("real"),
                    Place::Finite { .. } => entry_max,
                };
                let candidate_cap = crude.nth_root(j, 32);
                if candidate_cap.compare(&best).map_err(SpectralError::Scalar)? == MagOrder::Less {
                    continue;
                }
            }
            let lam = spectral_radius_bits(m, ctx, 96)?;
            if lam.magnitude.is_zero() {
                continue;
            }
            let rooted = lam.magnitude.nth_root(j, 96);
            best = best.max(&rooted)?;
        }
    }
    Ok(best)
}

/// Candidate conjugators for the real place: LDL^T balancing of the sum of
/// Gram matrices (dyadic square roots, heuristic choice, certified after the
/// fact) and diagonal coordinate-descent steps.
fn real_conjugator_search(
    q: &MatSet,
    ctx: &mut PlaceCtx,
    budget: &Budget,
) -> SetResult<(QMatrix, Magnitude)> {
    let d = q.dim();
    let mut best_g = QMatrix::identity(d);
    let mut best = set_norm(q, ctx)?.magnitude;

    let try_candidate =
        |g: &QMatrix, best: &mut Magnitude, best_g: &mut QMatrix, ctx: &mut PlaceCtx| -> SetResult<bool> {
            let Some(conj) = q.conjugate_by(g) else { return Ok(false) };
            let m = set_norm(&conj, ctx)?.magnitude;
            if m.compare(best).map_err(SpectralError::Scalar)? == MagOrder::Less {
                *best = m;
                *best_g = g.clone();
                return Ok(true);
            }
            Ok(false)
        };

    // Balancing candidate: S = sum a^T a, S = L D L^T, g ≈ D^(-1/2) L^(-1).
    if q.elements().iter().all(|m| m.is_rational()) {
        let mut s = QMatrix::zero(d);
        for a in q.elements() {
            s = s.add(&a.transpose().mul(a));
        }
        if let Some((l, diag)) = ldl_decompose(&s) {
            if let Some(linv) = l.inverse() {
                let mut root_inv = QMatrix::zero(d);
                let mut ok = true;
                for (i, v) in diag.iter().enumerate() {
                    if !v.is_positive() {
                        ok = false;
                        break;
                    }
                    let (_, hi) = nth_root_interval(v, 2, 32);
                    // 1 / sqrt(v) approximated by a dyadic rational.
                    let approx = dyadic_ceil(&(Rat::one() / hi), 32);
                    if approx.is_zero() {
                        ok = false;
                        break;
                    }
                    root_inv[(i, i)] = ExactScalar::from_rat(approx);
                }
                if ok {
                    let g = root_inv.mul(&linv);
                    let _ = try_candidate(&g, &mut best, &mut best_g, ctx)?;
                }
            }
        }
    }

    // Diagonal coordinate descent from the best conjugator so far.
    let steps = [rat(1, 2), rat_i64(2), rat(1, 4), rat_i64(4), rat(1, 16), rat_i64(16)];
    let mut rounds = 0;
    loop {
        let mut improved = false;
        for i in 0..d {
            for s in &steps {
                let mut g = best_g.clone();
                for c in 0..d {
                    let scale = if c == i {
                        ExactScalar::from_rat(s.clone())
                    } else {
                        ExactScalar::one()
                    };
                    g[(i, c)] = &g[(i, c)] * &scale;
                }
                if try_candidate(&g, &mut best, &mut best_g, ctx)? {
                    improved = true;
                }
            }
        }
        rounds += 1;
        if !improved || rounds >= budget.conjugator_rounds {
            break;
        }
    }
    Ok((best_g, best))
}

/// Exact LDL^T for a symmetric matrix with nonzero leading minors:
/// returns (unit lower L, diagonal entries of D).
fn ldl_decompose(s: &QMatrix) -> Option<(QMatrix, Vec<Rat>)> {
    let d = s.dim();
    let mut l = QMatrix::identity(d);
    let mut diag: Vec<Rat> = Vec::with_capacity(d);
    let mut work = s.clone();
    for k in 0..d {
        let pivot = work[(k, k)].as_rat()?.clone();
        if pivot.is_zero() {
            return None;
        }
        diag.push(pivot.clone());
        for i in k + 1..d {
            let f = work[(i, k)].as_rat()?.clone() / pivot.clone();
            l[(i, k)] = ExactScalar::from_rat(f.clone());
            for j in k..d {
                let t = ExactScalar::from_rat(f.clone()) .checked_mul(&work[(k, j)]).ok()?;
                work[(i, j)] = &work[(i, j)] - &t;
            }
        }
    }
    Some((l, diag))
}

/// Nilpotent descent: exact flag-adapted basis making every element strictly
/// block upper triangular, then a diagonal power conjugation shrinking the
/// norm geometrically.
fn nilpotent_descent(
    q: &MatSet,
    ctx: &mut PlaceCtx,
    budget: &Budget,
    target: &Rat,
) -> SetResult<Option<(QMatrix, Magnitude)>> {
    let d = q.dim();
    // Subspace chain S_1 = A·Q^d, S_{k+1} = A·S_k, as column spans.
    let mut chains: Vec<Vec<Vec<ExactScalar>>> = Vec::new();
    let std_basis: Vec<Vec<ExactScalar>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| if i == j { ExactScalar::one() } else { ExactScalar::zero() })
                .collect()
        })
        .collect();
    let mut cur: Vec<Vec<ExactScalar>> = std_basis.clone();
    for _ in 0..=d {
        let mut images: Vec<Vec<ExactScalar>> = Vec::new();
        for a in q.elements() {
            for v in &cur {
                images.push(a.mul_vec(v));
            }
        }
        let reduced = echelon_basis(images, d);
        if reduced.is_empty() {
            chains.push(Vec::new());
            break;
        }
        // The chain S_{k+1} = span(Q·S_k) is nested descending; a dimension
        // that fails to drop means it stabilized at a nonzero subspace.
        if reduced.len() == cur.len() {
            return Ok(None);
        }
        chains.push(reduced.clone());
        cur = reduced;
    }
    if chains.last().map(|c| !c.is_empty()).unwrap_or(true) {
        return Ok(None);
    }
    // Adapted basis: deepest nonzero subspace first, extended step by step.
    let mut adapted: Vec<Vec<ExactScalar>> = Vec::new();
    let mut block_of: Vec<usize> = Vec::new();
    let mut block = 0usize;
    for layer in chains.iter().rev() {
        let mut changed = false;
        for v in layer {
            if extend_echelon(&mut adapted, v.clone(), d) {
                block_of.push(block);
                changed = true;
            }
        }
        if changed {
            block += 1;
        }
    }
    for v in std_basis {
        if extend_echelon(&mut adapted, v, d) {
            block_of.push(block);
        }
    }
    debug_assert_eq!(adapted.len(), d);
    // g columns = adapted basis; in that basis elements are strictly block
    // upper triangular.
    let mut g = QMatrix::zero(d);
    for (j, v) in adapted.iter().enumerate() {
        for i in 0..d {
            g[(i, j)] = v[i].clone();
        }
    }
    let g_inv_conj = g.inverse().expect("basis change");
    // Conjugation a -> D (g^-1 a g) D^-1 with D = diag(t^block).
    let mut m_exp = 4u32;
    for _ in 0..budget.shrink_steps {
        let t = ExactScalar::from_rat(Rat::from_integer(BigInt::one() << m_exp));
        let mut dmat = QMatrix::zero(d);
        for i in 0..d {
            dmat[(i, i)] = t.pow(block_of[i] as u32);
        }
        let h = dmat.mul(&g_inv_conj);
        let Some(conj) = q.conjugate_by(&h) else { return Ok(None) };
        let norm = set_norm(&conj, ctx)?.magnitude;
        match norm.compare_rat(target) {
            MagOrder::Less => return Ok(Some((h, norm))),
            _ => {
                m_exp = m_exp.saturating_mul(2);
                if m_exp > 1 << 16 {
                    break;
                }
            }
        }
    }
    Ok(None)
}

/// Echelonize a list of vectors; returns an independent spanning subset
/// (reduced, deterministic).
fn echelon_basis(vectors: Vec<Vec<ExactScalar>>, d: usize) -> Vec<Vec<ExactScalar>> {
    let mut basis: Vec<Vec<ExactScalar>> = Vec::new();
    for v in vectors {
        extend_echelon(&mut basis, v, d);
        if basis.len() == d {
            break;
        }
    }
    basis
}

/// Try to add v to an echelonized basis; true when independent.
fn extend_echelon(basis: &mut Vec<Vec<ExactScalar>>, mut v: Vec<ExactScalar>, d: usize) -> bool {
    for b in basis.iter() {
        let pivot = b.iter().position(|c| !c.is_zero()).expect("nonzero basis vector");
        if v[pivot].is_zero() {
            continue;
        }
        let f = v[pivot].clone() / b[pivot].clone();
        for i in 0..d {
            let t = &f * &b[i];
            v[i] = &v[i] - &t;
        }
    }
    if v.iter().all(|c| c.is_zero()) {
        return false;
    }
    basis.push(v);
    true
}

/// Finite-place conjugator search: for d = 2 a greedy walk on diagonal p-power
/// plus unipotent-shift neighbor moves (Bruhat–Tits tree steps); for general d
/// a diagonal p-power coordinate descent.
fn finite_conjugator_search(
    q: &MatSet,
    p: u64,
    ctx: &mut PlaceCtx,
    budget: &Budget,
) -> SetResult<(QMatrix, Magnitude)> {
    let d = q.dim();
    let mut best_g = QMatrix::identity(d);
    let mut best = set_norm(q, ctx)?.magnitude;
    let p_rat = ExactScalar::from_rat(Rat::from_integer(BigInt::from(p)));
    let p_inv = p_rat.inverse();

    let mut candidates: Vec<QMatrix> = Vec::new();
    if d == 2 {
        // Tree neighbors: diag(p,1)·[[1,r],[0,1]] for r in 0..p, and diag(1,p).
        for r in 0..p.min(23) {
            let shift = QMatrix::from_rows(vec![
                vec![ExactScalar::one(), ExactScalar::from_int(r as i64)],
                vec![ExactScalar::zero(), ExactScalar::one()],
            ]);
            let scale = QMatrix::diagonal(vec![p_rat.clone(), ExactScalar::one()]);
            candidates.push(scale.mul(&shift));
        }
        candidates.push(QMatrix::diagonal(vec![ExactScalar::one(), p_rat.clone()]));
    }
    // Diagonal p-power moves at any dimension.
    for i in 0..d {
        for s in [p_rat.clone(), p_inv.clone()] {
            let mut diag = vec![ExactScalar::one(); d];
            diag[i] = s;
            candidates.push(QMatrix::diagonal(diag));
        }
    }

    let mut rounds = 0;
    loop {
        let mut improved = false;
        // Deterministic scan; accept the first strict improvement each pass
        // composed onto the current best.
        for c in &candidates {
            let g = c.mul(&best_g);
            let Some(conj) = q.conjugate_by(&g) else { continue };
            let m = set_norm(&conj, ctx)?.magnitude;
            if m.compare(&best).map_err(SpectralError::Scalar)? == MagOrder::Less {
                best = m;
                best_g = g;
                improved = true;
            }
        }
        rounds += 1;
        if !improved || rounds >= budget.conjugator_rounds {
            break;
        }
    }
    Ok((best_g, best))
}

/// Two-sided certified bounds on Δ(Q) with a conjugator witness for the upper
/// bound; see DeltaBounds.
pub fn delta_bounds(q: &MatSet, ctx: &mut PlaceCtx, budget: &Budget) -> SetResult<DeltaBounds> {
    if q.is_empty() {
        return Err(SetError::Empty);
    }
    let d = q.dim();
    let lower = delta_lower(q, ctx, budget)?;

    // Nilpotent sets: exact flag conjugation drives the norm arbitrarily low.
    let closure = algebra_closure(q.elements());
    let mut witnessed: Option<(QMatrix, Magnitude)> = None;
    if closure.nilpotent {
        let target = Rat::new(BigInt::one(), BigInt::one() << 12);
        witnessed = nilpotent_descent(q, ctx, budget, &target)?;
    }
    let (witness, upper) = match witnessed {
        Some(w) => w,
        None => match ctx.place {
            Place::Real => real_conjugator_search(q, ctx, budget)?,
            Place::Finite { p } => finite_conjugator_search(q, p, ctx, budget)?,
        },
    };

    let analytic_upper = match ctx.place {
        Place::Real => None,
        Place::Finite { p } => {
            // max over i ≤ d² of (Λ(Qⁱ)·p^(2d−1))^(1/i): exact exponent
            // arithmetic; Zero contributions are skipped (they bound nothing
            // beyond Zero itself).
            let dd = (d * d) as u32;
            let mut best: Option<Magnitude> = None;
            let mut power = q.clone();
            for i in 1..=dd {
                if i > 1 {
                    power = match set_power(q, i, budget) {
                        Ok(pw) => pw,
                        Err(SetError::BallExplosion(_)) => break,
                        Err(e) => return Err(e),
                    };
                }
                let lam = set_lambda(&power, ctx)?.magnitude;
                let boosted = lam
                    .checked_mul(&Magnitude::PPower {
                        p,
                        exponent: rat_i64(-(2 * d as i64 - 1)),
                    })
                    .map_err(SpectralError::Scalar)?;
                let rooted = boosted.nth_root(i, 96);
                best = Some(match best {
                    None => rooted,
                    Some(b) => b.max(&rooted)?,
                });
            }
            best
        }
    };

    if let Some(au) = &analytic_upper {
        debug_assert!(
            lower.compare(au).map(|o| o != MagOrder::Greater).unwrap_or(true),
            "analytic upper bound must dominate the lower bound"
        );
    }

    Ok(DeltaBounds {
        place: ctx.place,
        lower,
        witnessed_upper: upper,
        witness_conjugator: Some(witness),
        analytic_upper,
    })
}

// ---------------------------------------------------------------------------
// Growth until norm
// ---------------------------------------------------------------------------

/// Least N ≤ cap with certified ‖∪_{i≤N} Qⁱ‖ > C.
pub fn grow_until_norm(q: &MatSet, c: &Rat, ctx: &mut PlaceCtx, cap: u32, budget: &Budget) -> SetResult<u32> {
    assert!(c > &Rat::one(), "threshold must exceed 1");
    if q.is_empty() {
        return Err(SetError::Empty);
    }
    let mut power = q.clone();
    let mut best = Magnitude::Zero;
    for n in 1..=cap {
        if n > 1 {
            let mut next: Vec<QMatrix> = Vec::new();
            for m in power.elements() {
                for g in q.elements() {
                    next.push(m.mul(g));
                }
            }
            let next = dedup_exact(next);
            if next.len() > budget.ball_cap {
                return Err(SetError::BallExplosion(budget.ball_cap));
            }
            power = MatSet {
                dim: q.dim,
                elements: next,
                symmetric: false,
                contains_identity: q.contains_identity,
            };
        }
        let mut bits = 96u32;
        loop {
            let norm = set_norm_bits(&power, ctx, bits)?.magnitude;
            best = best.max(&norm)?;
            match best.compare_rat(c) {
                MagOrder::Greater => return Ok(n),
                MagOrder::Inconclusive if bits < 2048 => {
                    bits *= 2;
                    continue;
                }
                _ => break,
            }
        }
    }
    Err(SetError::CapReached(cap))
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

    fn upper_unipotent() -> QMatrix {
        mat2(1, 1, 0, 1)
    }

    fn sanov() -> Vec<QMatrix> {
        vec![mat2(1, 2, 0, 1), mat2(1, 0, 2, 1)]
    }

    #[test]
    fn set_flags_inferred_and_verified() {
        let s = MatSet::new(vec![QMatrix::identity(2), upper_unipotent()]).unwrap();
        assert!(s.contains_identity());
        assert!(!s.symmetric());
        assert!(MatSet::with_flags(vec![upper_unipotent()], false, true).is_err());
        assert!(MatSet::with_flags(vec![upper_unipotent()], true, false).is_err());
        let sym = MatSet::new(vec![
            upper_unipotent(),
            upper_unipotent().inverse().unwrap(),
        ])
        .unwrap();
        assert!(sym.symmetric());
    }

    #[test]
    fn set_power_unipotent_with_identity() {
        let s = MatSet::new(vec![QMatrix::identity(2), upper_unipotent()]).unwrap();
        let p3 = set_power(&s, 3, &Budget::default()).unwrap();
        assert_eq!(p3.len(), 4); // I, U, U^2, U^3
        let ident = MatSet::new(vec![QMatrix::identity(2)]).unwrap();
        let p5 = set_power(&ident, 5, &Budget::default()).unwrap();
        assert_eq!(p5.len(), 1);
    }

    #[test]
    fn set_power_sanov_ball_two() {
        let mut els = sanov();
        els.insert(0, QMatrix::identity(2));
        let s = MatSet::new(els).unwrap();
        let p2 = set_power(&s, 2, &Budget::default()).unwrap();
        assert_eq!(p2.len(), 7); // 1 + 2 + 4 distinct words
    }

    #[test]
    fn set_lambda_and_norm_examples() {
        let s = MatSet::new(vec![
            QMatrix::from_rat_rows(vec![vec![q(2, 1), q(0, 1)], vec![q(0, 1), q(1, 2)]]),
            QMatrix::identity(2),
        ])
        .unwrap();
        let mut ctx = PlaceCtx::real();
        let lam = set_lambda(&s, &mut ctx).unwrap();
        assert_eq!(lam.exact, Some(ExactScalar::from_int(2)));
        let norm = set_norm(&s, &mut ctx).unwrap();
        assert_eq!(norm.exact, Some(ExactScalar::from_int(2)));

        let nil = MatSet::new(vec![mat2(0, 1, 0, 0)]).unwrap();
        assert!(set_lambda(&nil, &mut ctx).unwrap().magnitude.is_zero());

        let uni = MatSet::new(vec![upper_unipotent()]).unwrap();
        let lam_u = set_lambda(&uni, &mut ctx).unwrap();
        assert_eq!(lam_u.exact, Some(ExactScalar::one()));
        let norm_u = set_norm(&uni, &mut ctx).unwrap();
        let phi = ExactScalar::quadratic(q(1, 2), q(1, 2), BigInt::from(5));
        assert_eq!(norm_u.exact, Some(phi));
    }

    #[test]
    fn delta_bounds_diagonal_tight() {
        let s = MatSet::new(vec![QMatrix::from_rat_rows(vec![
            vec![q(2, 1), q(0, 1)],
            vec![q(0, 1), q(1, 2)],
        ])])
        .unwrap();
        let mut ctx = PlaceCtx::real();
        let db = delta_bounds(&s, &mut ctx, &Budget::default()).unwrap();
        assert_eq!(db.lower.compare_rat(&q(2, 1)), MagOrder::Equal);
        assert_eq!(db.witnessed_upper.compare_rat(&q(2, 1)), MagOrder::Equal);
    }

    #[test]
    fn delta_bounds_nilpotent_drives_down() {
        let s = MatSet::new(vec![mat2(0, 1, 0, 0)]).unwrap();
        let mut ctx = PlaceCtx::real();
        let db = delta_bounds(&s, &mut ctx, &Budget::default()).unwrap();
        assert!(db.lower.is_zero());
        let threshold = Rat::new(BigInt::one(), BigInt::one() << 10);
        assert_eq!(db.witnessed_upper.compare_rat(&threshold), MagOrder::Less);
    }

    #[test]
    fn delta_bounds_unipotent_descends_near_one() {
        let s = MatSet::new(vec![upper_unipotent()]).unwrap();
        let mut ctx = PlaceCtx::real();
        let db = delta_bounds(&s, &mut ctx, &Budget::default()).unwrap();
        assert_eq!(db.lower.compare_rat(&Rat::one()), MagOrder::Equal);
        // witnessed upper within 1/100 of the infimum 1
        assert_eq!(db.witnessed_upper.compare_rat(&q(101, 100)), MagOrder::Less);
        let g = db.witness_conjugator.unwrap();
        assert!(g.inverse().is_some());
    }

    #[test]
    fn delta_bounds_finite_place_sandwich() {
        let s = MatSet::new(vec![QMatrix::from_rat_rows(vec![
            vec![q(1, 5), q(1, 1)],
            vec![q(0, 1), q(5, 1)],
        ])])
        .unwrap();
        let mut ctx = PlaceCtx::finite(5).unwrap();
        let db = delta_bounds(&s, &mut ctx, &Budget::default()).unwrap();
        let au = db.analytic_upper.clone().unwrap();
        assert_ne!(db.lower.compare(&au).unwrap(), MagOrder::Greater);
        assert_ne!(db.lower.compare(&db.witnessed_upper).unwrap(), MagOrder::Greater);
        // Λ = 5 from the diagonal (eigenvalues 1/5 and 5); lower = 5.
        assert_eq!(db.lower.compare_rat(&q(5, 1)), MagOrder::Equal);
    }

    #[test]
    fn grow_until_norm_examples() {
        let budget = Budget::default();
        let s = MatSet::new(vec![QMatrix::from_rat_rows(vec![
            vec![q(2, 1), q(0, 1)],
            vec![q(0, 1), q(1, 2)],
        ])])
        .unwrap();
        let mut ctx = PlaceCtx::real();
        assert_eq!(grow_until_norm(&s, &q(7, 1), &mut ctx, 10, &budget).unwrap(), 3);

        let uni = MatSet::new(vec![upper_unipotent()]).unwrap();
        assert_eq!(grow_until_norm(&uni, &q(5, 1), &mut ctx, 10, &budget).unwrap(), 5);

        let ident = MatSet::new(vec![QMatrix::identity(2)]).unwrap();
        match grow_until_norm(&ident, &q(2, 1), &mut ctx, 6, &budget) {
            Err(SetError::CapReached(6)) => {}
            other => panic!("expected CapReached, got {:?}", other),
        }
    }

    #[test]
    fn delta_lower_conjugation_invariant() {
        let mut els = sanov();
        els.insert(0, QMatrix::identity(2));
        let s = MatSet::new(els).unwrap();
        let g = mat2(2, 1, 1, 1);
        let sc = s.conjugate_by(&g).unwrap();
        let mut ctx = PlaceCtx::real();
        let budget = Budget::default();
        let l1 = delta_lower(&s, &mut ctx, &budget).unwrap();
        let l2 = delta_lower(&sc, &mut ctx, &budget).unwrap();
        assert_eq!(l1, l2);
        // Sanov has growth: lower > 1 strictly.
        assert_eq!(l1.compare_rat(&Rat::one()), MagOrder::Greater);
    }

    #[test]
    fn ball_includes_identity() {
        let s = MatSet::new(sanov()).unwrap();
        let b1 = ball(&s, 1, &Budget::default()).unwrap();
        assert_eq!(b1.len(), 3);
        assert!(b1.contains(&QMatrix::identity(2)));
    }
}
