//! Exact arithmetic kernel: truncated multisets of words, finitely supported
//! rational distributions over them, and the semantic operations (mixture,
//! independent convolution, prefix shift, sequential bind) together with the
//! depth-indexed equivalence and ultrametric distance.
//!
//! Everything here is exact: multiplicities are arbitrary-precision naturals
//! and weights are arbitrary-precision rationals, always reduced. All values
//! are kept in canonical form (sorted support, merged duplicates, no zero
//! weights) so that structural equality coincides with semantic equality at a
//! given depth.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{BigUint, One, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Letter index into an [`crate::syntax::Alphabet`].
pub type LetterId = u16;

/// Errors raised by the kernel operations.
#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("depth mismatch: {left} vs {right}")]
    DepthMismatch { left: usize, right: usize },
    #[error("mixture weights sum to {sum}, expected 1")]
    WeightsNotOne { sum: String },
    #[error("mixture weight {weight} is negative")]
    NegativeWeight { weight: String },
    #[error("support explosion: {size} support points exceed budget {budget}")]
    SupportExplosion { size: usize, budget: usize },
}

pub type Result<T> = std::result::Result<T, SemanticsError>;

/// Cap on the number of support points an operation may produce.
///
/// Operations that can grow support (`mix`, `amp`, `bind`) check against this
/// and fail with [`SemanticsError::SupportExplosion`] instead of diverging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget(pub usize);

impl Default for Budget {
    fn default() -> Self {
        Budget(1_000_000)
    }
}

impl Budget {
    fn check(&self, size: usize) -> Result<()> {
        if size > self.0 {
            Err(SemanticsError::SupportExplosion {
                size,
                budget: self.0,
            })
        } else {
            Ok(())
        }
    }
}

/// A word over the alphabet, as a sequence of letter indices.
///
/// Ordered shortlex (length first, then pointwise), which is the canonical
/// key order of multisets and of rendered output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(pub Vec<LetterId>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn letter(a: LetterId) -> Self {
        Word(vec![a])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Concatenation `self · other`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// A multiset of words of length at most `depth`, with finite positive
/// multiplicities. This is the canonical representative of its depth-`depth`
/// equivalence class: zero multiplicities are never stored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TruncMultiset {
    depth: usize,
    entries: BTreeMap<Word, BigUint>,
}

impl TruncMultiset {
    /// The empty multiset at the given depth.
    pub fn empty(depth: usize) -> Self {
        TruncMultiset {
            depth,
            entries: BTreeMap::new(),
        }
    }

    /// Build from explicit entries; zero multiplicities are dropped and
    /// over-long words are truncated away.
    pub fn from_entries(depth: usize, entries: impl IntoIterator<Item = (Word, BigUint)>) -> Self {
        let mut map: BTreeMap<Word, BigUint> = BTreeMap::new();
        for (w, m) in entries {
            if m.is_zero() || w.len() > depth {
                continue;
            }
            *map.entry(w).or_insert_with(BigUint::zero) += m;
        }
        TruncMultiset {
            depth,
            entries: map,
        }
    }

    /// Singleton multiset `{w ↦ 1}`, provided `w` fits in the depth.
    pub fn singleton(depth: usize, w: Word) -> Self {
        if w.len() > depth {
            TruncMultiset::empty(depth)
        } else {
            let mut entries = BTreeMap::new();
            entries.insert(w, BigUint::one());
            TruncMultiset { depth, entries }
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Word, &BigUint)> {
        self.entries.iter()
    }

    /// Multiplicity of `w` (zero if absent).
    pub fn multiplicity(&self, w: &Word) -> BigUint {
        self.entries.get(w).cloned().unwrap_or_else(BigUint::zero)
    }

    /// Restriction to depth `m ≤ depth`: drop words longer than `m`.
    pub fn restrict(&self, m: usize) -> TruncMultiset {
        debug_assert!(m <= self.depth);
        TruncMultiset {
            depth: m,
            entries: self
                .entries
                .iter()
                .filter(|(w, _)| w.len() <= m)
                .map(|(w, c)| (w.clone(), c.clone()))
                .collect(),
        }
    }

    /// Pointwise sum (multiset union) of two multisets at equal depth.
    pub fn madd(&self, other: &TruncMultiset) -> Result<TruncMultiset> {
        if self.depth != other.depth {
            return Err(SemanticsError::DepthMismatch {
                left: self.depth,
                right: other.depth,
            });
        }
        let mut entries = self.entries.clone();
        for (w, m) in &other.entries {
            *entries.entry(w.clone()).or_insert_with(BigUint::zero) += m;
        }
        Ok(TruncMultiset {
            depth: self.depth,
            entries,
        })
    }

    /// Prefix every word with `x`, re-rooting at depth `n`. Words that would
    /// exceed `n` are dropped (they are invisible at this depth).
    fn prefixed(&self, x: &Word, n: usize) -> TruncMultiset {
        let mut entries = BTreeMap::new();
        for (w, m) in &self.entries {
            let pw = x.concat(w);
            if pw.len() <= n {
                entries.insert(pw, m.clone());
            }
        }
        TruncMultiset { depth: n, entries }
    }
}

/// A finitely supported probability distribution over [`TruncMultiset`]s of a
/// common depth, with exact positive rational weights summing to one.
///
/// Support is sorted by the canonical multiset order and duplicates are
/// merged, so `==` decides depth-`n` behavioral equivalence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinDist {
    depth: usize,
    support: Vec<(TruncMultiset, BigRational)>,
}

impl FinDist {
    /// Point mass on a single multiset.
    pub fn dirac(m: TruncMultiset) -> Self {
        FinDist {
            depth: m.depth(),
            support: vec![(m, BigRational::one())],
        }
    }

    /// Point mass on the empty multiset at the given depth.
    pub fn dirac_empty(depth: usize) -> Self {
        FinDist::dirac(TruncMultiset::empty(depth))
    }

    /// Point mass on `{ε ↦ 1}` at the given depth.
    pub fn dirac_epsilon(depth: usize) -> Self {
        FinDist::dirac(TruncMultiset::singleton(depth, Word::empty()))
    }

    /// Point mass on `{a ↦ 1}` at the given depth (empty multiset at depth 0).
    pub fn dirac_letter(depth: usize, a: LetterId) -> Self {
        FinDist::dirac(TruncMultiset::singleton(depth, Word::letter(a)))
    }

    /// Build from raw pairs; merges duplicates, drops zero weights, checks
    /// that the weights sum to one.
    pub fn from_support(
        depth: usize,
        pairs: impl IntoIterator<Item = (TruncMultiset, BigRational)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<TruncMultiset, BigRational> = BTreeMap::new();
        let mut sum = BigRational::zero();
        for (m, w) in pairs {
            if w.is_zero() {
                continue;
            }
            if w < BigRational::zero() {
                return Err(SemanticsError::NegativeWeight {
                    weight: w.to_string(),
                });
            }
            if m.depth() != depth {
                return Err(SemanticsError::DepthMismatch {
                    left: depth,
                    right: m.depth(),
                });
            }
            sum += &w;
            *map.entry(m).or_insert_with(BigRational::zero) += w;
        }
        if !sum.is_one() {
            return Err(SemanticsError::WeightsNotOne {
                sum: sum.to_string(),
            });
        }
        Ok(FinDist {
            depth,
            support: map.into_iter().collect(),
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn support(&self) -> &[(TruncMultiset, BigRational)] {
        &self.support
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Probability assigned to the depth-`n` class of `m`, where `m` must be
    /// canonical at this distribution's depth.
    pub fn prob_of(&self, m: &TruncMultiset) -> BigRational {
        self.support
            .iter()
            .find(|(s, _)| s == m)
            .map(|(_, w)| w.clone())
            .unwrap_or_else(BigRational::zero)
    }
}

fn merged(
    depth: usize,
    map: BTreeMap<TruncMultiset, BigRational>,
    budget: &Budget,
) -> Result<FinDist> {
    budget.check(map.len())?;
    Ok(FinDist {
        depth,
        support: map.into_iter().filter(|(_, w)| !w.is_zero()).collect(),
    })
}

/// Pushforward of `d` along the restriction to depth `m ≤ d.depth()`:
/// truncate every support multiset and merge collided points.
pub fn restrict(d: &FinDist, m: usize) -> FinDist {
    debug_assert!(m <= d.depth);
    if m == d.depth {
        return d.clone();
    }
    let mut map: BTreeMap<TruncMultiset, BigRational> = BTreeMap::new();
    for (ms, w) in &d.support {
        *map.entry(ms.restrict(m)).or_insert_with(BigRational::zero) += w;
    }
    FinDist {
        depth: m,
        support: map.into_iter().collect(),
    }
}

/// Depth-`n` fragment of the prefix action `x·μ`: restrict `d` to depth
/// `n − |x|` and prefix every word with `x`. If `|x| > n` the whole future is
/// invisible and the result is the point mass on the empty multiset.
pub fn shift(x: &Word, d: &FinDist, n: usize) -> FinDist {
    if x.len() > n {
        return FinDist::dirac_empty(n);
    }
    if x.is_empty() && d.depth == n {
        return d.clone();
    }
    let inner = if d.depth > n - x.len() {
        restrict(d, n - x.len())
    } else {
        debug_assert!(d.depth == n - x.len());
        d.clone()
    };
    let mut map: BTreeMap<TruncMultiset, BigRational> = BTreeMap::new();
    for (ms, w) in &inner.support {
        *map.entry(ms.prefixed(x, n)).or_insert_with(BigRational::zero) += w;
    }
    FinDist {
        depth: n,
        support: map.into_iter().collect(),
    }
}

/// Probabilistic mixture `Σᵢ rᵢ·dᵢ`. The weights must be nonnegative and sum
/// to exactly one; zero-weight branches are skipped.
pub fn mix(branches: &[(BigRational, &FinDist)], budget: &Budget) -> Result<FinDist> {
    let mut sum = BigRational::zero();
    let mut depth = None;
    for (r, d) in branches {
        if *r < BigRational::zero() {
            return Err(SemanticsError::NegativeWeight {
                weight: r.to_string(),
            });
        }
        sum += r;
        match depth {
            None => depth = Some(d.depth),
            Some(n) if n != d.depth => {
                return Err(SemanticsError::DepthMismatch {
                    left: n,
                    right: d.depth,
                })
            }
            _ => {}
        }
    }
    if !sum.is_one() {
        return Err(SemanticsError::WeightsNotOne {
            sum: sum.to_string(),
        });
    }
    let depth = depth.expect("mix of no branches");
    let mut map: BTreeMap<TruncMultiset, BigRational> = BTreeMap::new();
    for (r, d) in branches {
        if r.is_zero() {
            continue;
        }
        for (ms, w) in &d.support {
            *map.entry(ms.clone()).or_insert_with(BigRational::zero) += r * w;
        }
    }
    merged(depth, map, budget)
}

/// Binary independent convolution: sample both sides independently and take
/// the pointwise multiset sum of the outcomes.
pub fn amp2(a: &FinDist, b: &FinDist, budget: &Budget) -> Result<FinDist> {
    if a.depth != b.depth {
        return Err(SemanticsError::DepthMismatch {
            left: a.depth,
            right: b.depth,
        });
    }
    budget.check(a.support.len().saturating_mul(b.support.len()))?;
    let mut map: BTreeMap<TruncMultiset, BigRational> = BTreeMap::new();
    for (m1, w1) in &a.support {
        for (m2, w2) in &b.support {
            *map.entry(m1.madd(m2)?).or_insert_with(BigRational::zero) += w1 * w2;
        }
    }
    merged(a.depth, map, budget)
}

/// Generalized nondeterministic choice over a multiset of distributions:
/// independent product followed by pointwise multiset sum. The empty multiset
/// of distributions yields the point mass on the empty multiset (the identity
/// of the operation).
pub fn amp(ds: &[&FinDist], depth: usize, budget: &Budget) -> Result<FinDist> {
    let mut acc = FinDist::dirac_empty(depth);
    for d in ds {
        acc = amp2(&acc, d, budget)?;
    }
    Ok(acc)
}

/// `k`-fold convolution power of `d`, by binary exponentiation. Exponents are
/// arbitrary-precision so that evaluation of exponentially growing
/// multiplicities stays exact.
pub fn amp_power(d: &FinDist, k: &BigUint, budget: &Budget) -> Result<FinDist> {
    let mut acc = FinDist::dirac_empty(d.depth);
    let mut base = d.clone();
    let mut k = k.clone();
    let two = BigUint::from(2u32);
    while !k.is_zero() {
        if (&k % &two).is_one() {
            acc = amp2(&acc, &base, budget)?;
        }
        k /= &two;
        if !k.is_zero() {
            base = amp2(&base, &base, budget)?;
        }
    }
    Ok(acc)
}

/// Sequential bind where the continuation is supplied per depth: for every
/// support multiset `β` of `mu`, independently attach a continuation sample
/// to each word occurrence of `β`, prefix-shifted, and mix the results.
///
/// The provider is called with the exact residual depth `n − |x|` needed for
/// each word `x` in the support, which is what lets evaluators recurse with
/// strictly smaller depth through action prefixes. The provider's error type
/// is propagated.
pub fn bind_with<F, E>(mu: &FinDist, mut nu_at: F, budget: &Budget) -> std::result::Result<FinDist, E>
where
    F: FnMut(usize) -> std::result::Result<FinDist, E>,
    E: From<SemanticsError>,
{
    let n = mu.depth;
    let mut branches: Vec<(BigRational, FinDist)> = Vec::with_capacity(mu.support.len());
    for (beta, w) in &mu.support {
        let mut acc = FinDist::dirac_empty(n);
        for (x, mult) in beta.entries() {
            let nu = nu_at(n - x.len())?;
            let shifted = shift(x, &nu, n);
            acc = amp2(&acc, &amp_power(&shifted, mult, budget)?, budget)?;
        }
        branches.push((w.clone(), acc));
    }
    let borrowed: Vec<(BigRational, &FinDist)> =
        branches.iter().map(|(w, d)| (w.clone(), d)).collect();
    Ok(mix(&borrowed, budget)?)
}

/// Depth-`n` fragment of the sequential composition `μ ⧐ −·ν` for two
/// distributions at the same depth.
pub fn bind(mu: &FinDist, nu: &FinDist, budget: &Budget) -> Result<FinDist> {
    if mu.depth != nu.depth {
        return Err(SemanticsError::DepthMismatch {
            left: mu.depth,
            right: nu.depth,
        });
    }
    bind_with(mu, |k| Ok::<_, SemanticsError>(restrict(nu, k)), budget)
}

/// Depth-`m` equivalence: both distributions restrict to the same canonical
/// value at depth `m`.
pub fn equiv(d1: &FinDist, d2: &FinDist, m: usize) -> bool {
    debug_assert!(m <= d1.depth && m <= d2.depth);
    restrict(d1, m) == restrict(d2, m)
}

/// Verdict of the ultrametric distance between two depth-`n` fragments.
///
/// The distance of the underlying behaviors is `2^{-k}` where `k` is the
/// least depth at which they disagree; fragments of depth `n` can only
/// witness disagreement up to depth `n`, so agreement everywhere yields the
/// bounded verdict `≤ 2^{-(n+1)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    /// Exactly `2^{-k}`: the fragments first disagree at depth `k`.
    Exact(usize),
    /// At most `2^{-(n+1)}`: the fragments agree at every depth up to `n`.
    AtMost(usize),
}

impl Distance {
    /// The exact value as a rational, when the verdict is exact.
    pub fn exact_value(&self) -> Option<BigRational> {
        match self {
            Distance::Exact(k) => Some(BigRational::new(
                BigInt::one(),
                BigInt::from(2u32).pow(*k as u32),
            )),
            Distance::AtMost(_) => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Exact(k) => write!(f, "2^-{k}"),
            Distance::AtMost(k) => write!(f, "<=2^-{k}"),
        }
    }
}

/// Ultrametric distance verdict between two fragments of equal depth `n`:
/// `Exact(k)` for the least `k ≤ n` where they disagree, else `AtMost(n+1)`.
pub fn distance(d1: &FinDist, d2: &FinDist) -> Result<Distance> {
    if d1.depth != d2.depth {
        return Err(SemanticsError::DepthMismatch {
            left: d1.depth,
            right: d2.depth,
        });
    }
    for k in 0..=d1.depth {
        if !equiv(d1, d2, k) {
            return Ok(Distance::Exact(k));
        }
    }
    Ok(Distance::AtMost(d1.depth + 1))
}
