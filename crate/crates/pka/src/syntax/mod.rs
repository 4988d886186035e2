//! Concrete and abstract syntax of the expression language, well-formedness
//! validation (closedness of left composition operands, productivity of
//! fixpoints), and the syntactic substitution operators.

mod parse;
mod print;

pub use parse::{parse, parse_rational, parse_with_inferred_alphabet, ParseError};
pub use print::print;

use num::rational::BigRational;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// The finite, nonempty, ordered set of action letters.
///
/// Letters are kept sorted and deduplicated, so the letter index order is the
/// canonical order used for words and rendered output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    letters: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AlphabetError {
    #[error("alphabet must be nonempty")]
    Empty,
    #[error("letter {0:?} is not a valid identifier")]
    BadLetter(String),
    #[error("letter {0:?} is a reserved word")]
    Reserved(String),
}

pub(crate) const KEYWORDS: &[&str] = &["skip", "fail", "fix", "amp", "oplus"];

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Alphabet {
    pub fn new(letters: impl IntoIterator<Item = String>) -> Result<Self, AlphabetError> {
        let mut letters: Vec<String> = letters.into_iter().collect();
        letters.sort();
        letters.dedup();
        if letters.is_empty() {
            return Err(AlphabetError::Empty);
        }
        for l in &letters {
            if !is_ident(l) {
                return Err(AlphabetError::BadLetter(l.clone()));
            }
            if KEYWORDS.contains(&l.as_str()) {
                return Err(AlphabetError::Reserved(l.clone()));
            }
        }
        Ok(Alphabet { letters })
    }

    /// Convenience constructor from string literals.
    pub fn of(letters: &[&str]) -> Self {
        Alphabet::new(letters.iter().map(|s| s.to_string())).expect("valid alphabet")
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index(name).is_some()
    }

    pub fn index(&self, name: &str) -> Option<u16> {
        self.letters
            .binary_search_by(|l| l.as_str().cmp(name))
            .ok()
            .map(|i| i as u16)
    }

    pub fn name(&self, id: u16) -> &str {
        &self.letters[id as usize]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.letters.iter().map(|s| s.as_str())
    }

    pub fn ids(&self) -> impl Iterator<Item = u16> {
        0..self.letters.len() as u16
    }
}

/// Stable identifier of an AST node, used as a memoization key by the
/// evaluators. Fresh ids are drawn from a global counter; rebuilding a node
/// always yields a fresh id, while `Rc`-sharing preserves it.
pub type NodeId = u64;

static NODE_COUNTER: AtomicU64 = AtomicU64::new(1);
static NAME_COUNTER: AtomicU64 = AtomicU64::new(1);

fn next_id() -> NodeId {
    NODE_COUNTER.fetch_add(1, Ordering::Relaxed)
}

/// A fresh variable name derived from `base`, unique process-wide.
pub fn fresh_name(base: &str) -> String {
    let base = base.split("%").next().unwrap_or(base);
    format!("{base}%{}", NAME_COUNTER.fetch_add(1, Ordering::Relaxed))
}

/// The node variants of the expression language.
#[derive(Debug, Clone)]
pub enum ExprKind {
    /// A variable, meaningful only under its binding `fix`.
    Var(String),
    /// An action letter.
    Act(String),
    /// Angelic nondeterministic choice: run both sides as independent agents
    /// and pool their outputs.
    Amp(Expr, Expr),
    /// Probabilistic choice: left with probability `r`, right with `1−r`.
    OPlus(Expr, BigRational, Expr),
    /// Sequential composition; the left operand must be closed.
    Seq(Expr, Expr),
    /// Fixpoint binder; every free occurrence of the variable in the body
    /// must be guarded by an action.
    Fix(String, Expr),
    Skip,
    Fail,
}

struct Node {
    id: NodeId,
    kind: ExprKind,
    /// Free variables, precomputed bottom-up.
    free: BTreeSet<String>,
}

/// A reference-counted expression tree. Cloning is cheap and shares the
/// underlying nodes; equality is structural (including bound names) and
/// ignores node ids — use [`alpha_eq`] for comparison up to renaming.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", print(self))
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        match (self.kind(), other.kind()) {
            (ExprKind::Var(a), ExprKind::Var(b)) => a == b,
            (ExprKind::Act(a), ExprKind::Act(b)) => a == b,
            (ExprKind::Skip, ExprKind::Skip) | (ExprKind::Fail, ExprKind::Fail) => true,
            (ExprKind::Amp(a1, a2), ExprKind::Amp(b1, b2)) => a1 == b1 && a2 == b2,
            (ExprKind::Seq(a1, a2), ExprKind::Seq(b1, b2)) => a1 == b1 && a2 == b2,
            (ExprKind::OPlus(a1, r, a2), ExprKind::OPlus(b1, s, b2)) => {
                r == s && a1 == b1 && a2 == b2
            }
            (ExprKind::Fix(x, a), ExprKind::Fix(y, b)) => x == y && a == b,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Expr {
    fn new(kind: ExprKind) -> Expr {
        let free = match &kind {
            ExprKind::Var(x) => std::iter::once(x.clone()).collect(),
            ExprKind::Act(_) | ExprKind::Skip | ExprKind::Fail => BTreeSet::new(),
            ExprKind::Amp(l, r) | ExprKind::Seq(l, r) => {
                l.free_vars().union(r.free_vars()).cloned().collect()
            }
            ExprKind::OPlus(l, _, r) => l.free_vars().union(r.free_vars()).cloned().collect(),
            ExprKind::Fix(x, body) => {
                let mut s = body.free_vars().clone();
                s.remove(x);
                s
            }
        };
        Expr(Arc::new(Node {
            id: next_id(),
            kind,
            free,
        }))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::new(ExprKind::Var(name.into()))
    }

    pub fn act(letter: impl Into<String>) -> Expr {
        Expr::new(ExprKind::Act(letter.into()))
    }

    pub fn skip() -> Expr {
        Expr::new(ExprKind::Skip)
    }

    pub fn fail() -> Expr {
        Expr::new(ExprKind::Fail)
    }

    pub fn amp(l: Expr, r: Expr) -> Expr {
        Expr::new(ExprKind::Amp(l, r))
    }

    pub fn oplus(l: Expr, r: BigRational, rr: Expr) -> Expr {
        Expr::new(ExprKind::OPlus(l, r, rr))
    }

    pub fn seq(l: Expr, r: Expr) -> Expr {
        Expr::new(ExprKind::Seq(l, r))
    }

    pub fn fix(x: impl Into<String>, body: Expr) -> Expr {
        Expr::new(ExprKind::Fix(x.into(), body))
    }

    /// `e*` as sugar: `fix x (skip & (e ; x))` with a fresh variable.
    pub fn star(e: Expr) -> Expr {
        let x = fresh_name("s");
        Expr::fix(
            x.clone(),
            Expr::amp(Expr::skip(), Expr::seq(e, Expr::var(x))),
        )
    }

    /// Right-nested n-ary nondeterministic choice `e₁ & (e₂ & (… & eₖ))`.
    /// Requires at least one element.
    pub fn amp_many(es: Vec<Expr>) -> Expr {
        let mut it = es.into_iter().rev();
        let last = it.next().expect("amp_many of no elements");
        it.fold(last, |acc, e| Expr::amp(e, acc))
    }

    /// Right-nested n-ary probabilistic choice with the stated weights, which
    /// must be nonnegative and sum to one. Zero-weight branches are dropped;
    /// nested weights are renormalized so each binary node carries the
    /// conditional probability of its left branch.
    pub fn oplus_many(branches: Vec<(Expr, BigRational)>) -> Expr {
        use num::{One, Zero};
        let branches: Vec<_> = branches
            .into_iter()
            .filter(|(_, p)| !p.is_zero())
            .collect();
        assert!(!branches.is_empty(), "oplus_many of zero total weight");
        let mut it = branches.into_iter().rev();
        let (last, mut rest_weight) = it.next().expect("nonempty");
        let mut acc = last;
        for (e, p) in it {
            let total = &p + &rest_weight;
            let r = &p / &total;
            acc = if r.is_one() { e } else { Expr::oplus(e, r, acc) };
            rest_weight = total;
        }
        acc
    }

    pub fn id(&self) -> NodeId {
        self.0.id
    }

    pub fn kind(&self) -> &ExprKind {
        &self.0.kind
    }

    pub fn free_vars(&self) -> &BTreeSet<String> {
        &self.0.free
    }

    pub fn is_closed(&self) -> bool {
        self.0.free.is_empty()
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self.kind() {
            ExprKind::Var(_) | ExprKind::Act(_) | ExprKind::Skip | ExprKind::Fail => 1,
            ExprKind::Amp(l, r) | ExprKind::Seq(l, r) | ExprKind::OPlus(l, _, r) => {
                1 + l.size() + r.size()
            }
            ExprKind::Fix(_, b) => 1 + b.size(),
        }
    }

    /// Deep copy with fresh node ids and fresh bound-variable names.
    pub fn refreshed(&self) -> Expr {
        fn go(e: &Expr, ren: &mut Vec<(String, String)>) -> Expr {
            match e.kind() {
                ExprKind::Var(x) => {
                    let name = ren
                        .iter()
                        .rev()
                        .find(|(old, _)| old == x)
                        .map(|(_, new)| new.clone())
                        .unwrap_or_else(|| x.clone());
                    Expr::var(name)
                }
                ExprKind::Act(a) => Expr::act(a.clone()),
                ExprKind::Skip => Expr::skip(),
                ExprKind::Fail => Expr::fail(),
                ExprKind::Amp(l, r) => Expr::amp(go(l, ren), go(r, ren)),
                ExprKind::Seq(l, r) => Expr::seq(go(l, ren), go(r, ren)),
                ExprKind::OPlus(l, p, r) => Expr::oplus(go(l, ren), p.clone(), go(r, ren)),
                ExprKind::Fix(x, b) => {
                    let fresh = fresh_name(x);
                    ren.push((x.clone(), fresh.clone()));
                    let b = go(b, ren);
                    ren.pop();
                    Expr::fix(fresh, b)
                }
            }
        }
        go(self, &mut Vec::new())
    }
}

/// α-equivalence: structural equality up to consistent renaming of bound
/// variables.
pub fn alpha_eq(a: &Expr, b: &Expr) -> bool {
    fn go(a: &Expr, b: &Expr, pairs: &mut Vec<(String, String)>) -> bool {
        match (a.kind(), b.kind()) {
            (ExprKind::Var(x), ExprKind::Var(y)) => {
                for (px, py) in pairs.iter().rev() {
                    match (px == x, py == y) {
                        (true, true) => return true,
                        (false, false) => continue,
                        _ => return false,
                    }
                }
                x == y
            }
            (ExprKind::Act(x), ExprKind::Act(y)) => x == y,
            (ExprKind::Skip, ExprKind::Skip) | (ExprKind::Fail, ExprKind::Fail) => true,
            (ExprKind::Amp(a1, a2), ExprKind::Amp(b1, b2))
            | (ExprKind::Seq(a1, a2), ExprKind::Seq(b1, b2)) => {
                go(a1, b1, pairs) && go(a2, b2, pairs)
            }
            (ExprKind::OPlus(a1, r, a2), ExprKind::OPlus(b1, s, b2)) => {
                r == s && go(a1, b1, pairs) && go(a2, b2, pairs)
            }
            (ExprKind::Fix(x, ab), ExprKind::Fix(y, bb)) => {
                pairs.push((x.clone(), y.clone()));
                let ok = go(ab, bb, pairs);
                pairs.pop();
                ok
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new())
}

/// The unguarded and guarded free variables of an expression.
///
/// A variable may appear in both sets when it has occurrences of both kinds;
/// the union is exactly the set of free variables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VarSets {
    pub unguarded: BTreeSet<String>,
    pub guarded: BTreeSet<String>,
}

struct VarAnalysis {
    sets: VarSets,
    /// Whether some occurrence of `skip` is unguarded.
    skip_unguarded: bool,
}

fn analyze(e: &Expr) -> VarAnalysis {
    match e.kind() {
        ExprKind::Var(x) => VarAnalysis {
            sets: VarSets {
                unguarded: std::iter::once(x.clone()).collect(),
                guarded: BTreeSet::new(),
            },
            skip_unguarded: false,
        },
        ExprKind::Skip => VarAnalysis {
            sets: VarSets::default(),
            skip_unguarded: true,
        },
        ExprKind::Fail | ExprKind::Act(_) => VarAnalysis {
            sets: VarSets::default(),
            skip_unguarded: false,
        },
        ExprKind::Amp(l, r) | ExprKind::OPlus(l, _, r) => {
            let la = analyze(l);
            let ra = analyze(r);
            VarAnalysis {
                sets: VarSets {
                    unguarded: la.sets.unguarded.union(&ra.sets.unguarded).cloned().collect(),
                    guarded: la.sets.guarded.union(&ra.sets.guarded).cloned().collect(),
                },
                skip_unguarded: la.skip_unguarded || ra.skip_unguarded,
            }
        }
        ExprKind::Fix(x, body) => {
            let mut ba = analyze(body);
            ba.sets.unguarded.remove(x);
            ba.sets.guarded.remove(x);
            ba
        }
        ExprKind::Seq(l, r) => {
            // All occurrences in the left operand are guarded; occurrences in
            // the right operand stay unguarded only if an unguarded skip in
            // the left operand can expose them.
            let la = analyze(l);
            let ra = analyze(r);
            let mut guarded: BTreeSet<String> =
                la.sets.guarded.union(&la.sets.unguarded).cloned().collect();
            guarded.extend(ra.sets.guarded.iter().cloned());
            let unguarded = if la.skip_unguarded {
                ra.sets.unguarded
            } else {
                guarded.extend(ra.sets.unguarded.iter().cloned());
                BTreeSet::new()
            };
            VarAnalysis {
                sets: VarSets { unguarded, guarded },
                skip_unguarded: la.skip_unguarded && ra.skip_unguarded,
            }
        }
    }
}

/// Classify the free variables of `e` into unguarded and guarded occurrences.
pub fn var_sets(e: &Expr) -> VarSets {
    analyze(e).sets
}

/// True when some occurrence of `skip` in `e` is unguarded, which is exactly
/// when a sample of a closed `e` can contain the empty word.
pub fn skip_unguarded(e: &Expr) -> bool {
    analyze(e).skip_unguarded
}

/// Validation failures for expressions.
#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("left operand of `;` at {path} has free variables {vars:?}")]
    ClosednessViolation { path: String, vars: Vec<String> },
    #[error("variable {var} is unguarded in the body of its fix at {path}")]
    ProductivityViolation { var: String, path: String },
    #[error("identifier {name} at {path} is not a letter of the alphabet")]
    UnknownLetter { name: String, path: String },
    #[error("probability {prob} at {path} is outside [0,1]")]
    ProbabilityRange { prob: String, path: String },
}

/// Check the well-formedness restrictions against an alphabet: every letter
/// is known, probabilities lie in [0,1], every left operand of `;` is closed,
/// and every `fix x` body has `x` guarded.
pub fn validate(e: &Expr, alphabet: &Alphabet) -> Result<(), ValidateError> {
    use num::{One, Zero};
    fn go(e: &Expr, alphabet: &Alphabet, path: &mut String) -> Result<(), ValidateError> {
        match e.kind() {
            ExprKind::Var(_) | ExprKind::Skip | ExprKind::Fail => Ok(()),
            ExprKind::Act(a) => {
                if alphabet.contains(a) {
                    Ok(())
                } else {
                    Err(ValidateError::UnknownLetter {
                        name: a.clone(),
                        path: path.clone(),
                    })
                }
            }
            ExprKind::Amp(l, r) => {
                descend(l, alphabet, path, ".left")?;
                descend(r, alphabet, path, ".right")
            }
            ExprKind::OPlus(l, p, r) => {
                if p < &BigRational::zero() || p > &BigRational::one() {
                    return Err(ValidateError::ProbabilityRange {
                        prob: p.to_string(),
                        path: path.clone(),
                    });
                }
                descend(l, alphabet, path, ".left")?;
                descend(r, alphabet, path, ".right")
            }
            ExprKind::Seq(l, r) => {
                if !l.is_closed() {
                    return Err(ValidateError::ClosednessViolation {
                        path: path.clone(),
                        vars: l.free_vars().iter().cloned().collect(),
                    });
                }
                descend(l, alphabet, path, ".left")?;
                descend(r, alphabet, path, ".right")
            }
            ExprKind::Fix(x, body) => {
                if var_sets(body).unguarded.contains(x) {
                    return Err(ValidateError::ProductivityViolation {
                        var: x.clone(),
                        path: path.clone(),
                    });
                }
                descend(body, alphabet, path, ".body")
            }
        }
    }
    fn descend(
        e: &Expr,
        alphabet: &Alphabet,
        path: &mut String,
        step: &str,
    ) -> Result<(), ValidateError> {
        path.push_str(step);
        let r = go(e, alphabet, path);
        path.truncate(path.len() - step.len());
        r
    }
    go(e, alphabet, &mut String::from("root"))
}

/// Capture-avoiding substitution of `d` for the free variable `x` in `e`.
///
/// Subtrees without a free `x` are shared untouched. Rebuilt spines get fresh
/// node ids, and when an open `d` must be inserted at several positions each
/// copy is refreshed so that node ids stay unique per tree position.
pub fn substitute(e: &Expr, d: &Expr, x: &str) -> Expr {
    let mut seen = false;
    go_subst(e, d, x, &mut seen)
}

fn plug(d: &Expr, seen: &mut bool) -> Expr {
    // The first insertion can share; later insertions of an open replacement
    // are refreshed so no open subtree is shared across positions.
    if *seen && !d.is_closed() {
        d.refreshed()
    } else {
        *seen = true;
        d.clone()
    }
}

fn go_subst(e: &Expr, d: &Expr, x: &str, seen: &mut bool) -> Expr {
    if !e.free_vars().contains(x) {
        return e.clone();
    }
    match e.kind() {
        ExprKind::Var(y) => {
            debug_assert!(y == x);
            plug(d, seen)
        }
        ExprKind::Act(_) | ExprKind::Skip | ExprKind::Fail => unreachable!(),
        ExprKind::Amp(l, r) => Expr::amp(go_subst(l, d, x, seen), go_subst(r, d, x, seen)),
        ExprKind::Seq(l, r) => Expr::seq(go_subst(l, d, x, seen), go_subst(r, d, x, seen)),
        ExprKind::OPlus(l, p, r) => Expr::oplus(
            go_subst(l, d, x, seen),
            p.clone(),
            go_subst(r, d, x, seen),
        ),
        ExprKind::Fix(y, body) => {
            debug_assert!(y != x, "free x cannot survive under a binder of x");
            if d.free_vars().contains(y) {
                // α-rename the binder out of the way of d's free variables.
                let fresh = fresh_name(y);
                let body = substitute(body, &Expr::var(fresh.clone()), y);
                Expr::fix(fresh, go_subst(&body, d, x, seen))
            } else {
                Expr::fix(y.clone(), go_subst(body, d, x, seen))
            }
        }
    }
}

/// The terminal substitution `e1[e]`: simultaneously replace every terminal
/// `skip` by `e` and every terminal letter `a` by `a ; e`, distributing over
/// the other connectives. Binders in `e1` that would capture free variables
/// of `e` are α-renamed first.
pub fn subst_terminal(e1: &Expr, e: &Expr) -> Expr {
    let mut seen = false;
    go_terminal(e1, e, &mut seen)
}

fn go_terminal(e1: &Expr, e: &Expr, seen: &mut bool) -> Expr {
    match e1.kind() {
        ExprKind::Skip => plug(e, seen),
        ExprKind::Fail => e1.clone(),
        ExprKind::Act(a) => Expr::seq(Expr::act(a.clone()), plug(e, seen)),
        ExprKind::Var(_) => e1.clone(),
        ExprKind::OPlus(l, p, r) => Expr::oplus(
            go_terminal(l, e, seen),
            p.clone(),
            go_terminal(r, e, seen),
        ),
        ExprKind::Amp(l, r) => Expr::amp(go_terminal(l, e, seen), go_terminal(r, e, seen)),
        ExprKind::Seq(l, r) => Expr::seq(l.clone(), go_terminal(r, e, seen)),
        ExprKind::Fix(x, body) => {
            if e.free_vars().contains(x) {
                let fresh = fresh_name(x);
                let body = substitute(body, &Expr::var(fresh.clone()), x);
                Expr::fix(fresh, go_terminal(&body, e, seen))
            } else {
                Expr::fix(x.clone(), go_terminal(body, e, seen))
            }
        }
    }
}

/// `if b then e else f` encoded as `(b ; e) & (b̄ ; f)`, with the test and its
/// complement supplied as expressions (typically `skip`/`fail`).
pub fn if_then_else(b: Expr, b_not: Expr, then_e: Expr, else_f: Expr) -> Expr {
    Expr::amp(Expr::seq(b, then_e), Expr::seq(b_not, else_f))
}

/// `while b do e` encoded as `fix g ((b ; e ; g) & b̄)`.
pub fn while_loop(b: Expr, b_not: Expr, body: Expr) -> Expr {
    let g = fresh_name("w");
    Expr::fix(
        g.clone(),
        Expr::amp(Expr::seq(b, Expr::seq(body, Expr::var(g))), b_not),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    #[test]
    fn star_desugars_to_guarded_fix() {
        let e = Expr::star(Expr::act("a"));
        match e.kind() {
            ExprKind::Fix(x, body) => match body.kind() {
                ExprKind::Amp(l, r) => {
                    assert!(matches!(l.kind(), ExprKind::Skip));
                    match r.kind() {
                        ExprKind::Seq(a, v) => {
                            assert!(matches!(a.kind(), ExprKind::Act(n) if n == "a"));
                            assert!(matches!(v.kind(), ExprKind::Var(n) if n == x));
                        }
                        _ => panic!("expected seq"),
                    }
                }
                _ => panic!("expected amp"),
            },
            _ => panic!("expected fix"),
        }
    }

    #[test]
    fn var_sets_clauses() {
        // x & (a ; y) → unguarded {x}, guarded {y}
        let e = Expr::amp(
            Expr::var("x"),
            Expr::seq(Expr::act("a"), Expr::var("y")),
        );
        let vs = var_sets(&e);
        assert_eq!(vs.unguarded.iter().collect::<Vec<_>>(), vec!["x"]);
        assert_eq!(vs.guarded.iter().collect::<Vec<_>>(), vec!["y"]);

        // (skip +[1/2] a) ; x → unguarded {x}
        let e = Expr::seq(
            Expr::oplus(Expr::skip(), rat(1, 2), Expr::act("a")),
            Expr::var("x"),
        );
        let vs = var_sets(&e);
        assert_eq!(vs.unguarded.iter().collect::<Vec<_>>(), vec!["x"]);
        assert!(vs.guarded.is_empty());

        // closed star
        let vs = var_sets(&Expr::star(Expr::act("a")));
        assert!(vs.unguarded.is_empty() && vs.guarded.is_empty());
    }

    #[test]
    fn validate_examples() {
        let ab = Alphabet::of(&["a", "b"]);
        assert!(validate(&Expr::star(Expr::act("a")), &ab).is_ok());

        // fix x (skip & x) is unproductive
        let bad = Expr::fix("x", Expr::amp(Expr::skip(), Expr::var("x")));
        assert!(matches!(
            validate(&bad, &ab),
            Err(ValidateError::ProductivityViolation { var, .. }) if var == "x"
        ));

        // skip* desugars to an unproductive fix
        let bad = Expr::star(Expr::skip());
        assert!(matches!(
            validate(&bad, &ab),
            Err(ValidateError::ProductivityViolation { .. })
        ));

        // (x ; a) with x free violates closedness
        let bad = Expr::seq(Expr::var("x"), Expr::act("a"));
        assert!(matches!(
            validate(&bad, &ab),
            Err(ValidateError::ClosednessViolation { .. })
        ));

        let bad = Expr::act("c");
        assert!(matches!(
            validate(&bad, &ab),
            Err(ValidateError::UnknownLetter { name, .. }) if name == "c"
        ));
    }

    #[test]
    fn substitute_examples() {
        // (skip & (a;x))[b/x] = skip & (a;b)
        let e = Expr::amp(Expr::skip(), Expr::seq(Expr::act("a"), Expr::var("x")));
        let got = substitute(&e, &Expr::act("b"), "x");
        let want = Expr::amp(Expr::skip(), Expr::seq(Expr::act("a"), Expr::act("b")));
        assert_eq!(got, want);

        // binding occludes
        let e = Expr::fix("x", Expr::seq(Expr::act("a"), Expr::var("x")));
        assert_eq!(substitute(&e, &Expr::act("b"), "x"), e);

        // capture avoidance: (fix y (a;x))[y/x] renames the binder
        let e = Expr::fix("y", Expr::seq(Expr::act("a"), Expr::var("x")));
        let got = substitute(&e, &Expr::var("y"), "x");
        match got.kind() {
            ExprKind::Fix(y2, body) => {
                assert_ne!(y2, "y");
                match body.kind() {
                    ExprKind::Seq(_, v) => {
                        assert!(matches!(v.kind(), ExprKind::Var(n) if n == "y"))
                    }
                    _ => panic!(),
                }
            }
            _ => panic!(),
        }
        assert!(alpha_eq(
            &got,
            &Expr::fix("z", Expr::seq(Expr::act("a"), Expr::var("y")))
        ));
    }

    #[test]
    fn substitute_free_var_property() {
        let e = Expr::amp(
            Expr::var("x"),
            Expr::seq(Expr::act("a"), Expr::amp(Expr::var("x"), Expr::var("z"))),
        );
        let d = Expr::amp(Expr::var("u"), Expr::act("b"));
        let s = substitute(&e, &d, "x");
        let want: BTreeSet<String> = ["u", "z"].iter().map(|s| s.to_string()).collect();
        assert_eq!(s.free_vars(), &want);
    }

    #[test]
    fn subst_terminal_clauses() {
        // (skip & a)[b] = b & (a;b)
        let e = Expr::amp(Expr::skip(), Expr::act("a"));
        let got = subst_terminal(&e, &Expr::act("b"));
        let want = Expr::amp(Expr::act("b"), Expr::seq(Expr::act("a"), Expr::act("b")));
        assert_eq!(got, want);

        // fail[b] = fail
        assert_eq!(subst_terminal(&Expr::fail(), &Expr::act("b")), Expr::fail());

        // ((a;skip) +[1/2] skip)[c] = (a;c) +[1/2] c
        let e = Expr::oplus(
            Expr::seq(Expr::act("a"), Expr::skip()),
            rat(1, 2),
            Expr::skip(),
        );
        let got = subst_terminal(&e, &Expr::act("c"));
        let want = Expr::oplus(
            Expr::seq(Expr::act("a"), Expr::act("c")),
            rat(1, 2),
            Expr::act("c"),
        );
        assert_eq!(got, want);
    }

    #[test]
    fn while_guardedness() {
        let ab = Alphabet::of(&["a"]);
        // A true test over a body that can terminate silently leaves the
        // loop variable unguarded, so the loop is rejected.
        let w = while_loop(Expr::skip(), Expr::fail(), Expr::skip());
        assert!(matches!(
            validate(&w, &ab),
            Err(ValidateError::ProductivityViolation { .. })
        ));
        let w = while_loop(
            Expr::skip(),
            Expr::fail(),
            Expr::oplus(Expr::skip(), rat(1, 2), Expr::act("a")),
        );
        assert!(matches!(
            validate(&w, &ab),
            Err(ValidateError::ProductivityViolation { .. })
        ));
        // An action-guarded body guards the loop variable even under a true
        // test: every iteration emits a letter.
        let w = while_loop(Expr::skip(), Expr::fail(), Expr::act("a"));
        assert!(validate(&w, &ab).is_ok());
        let w = while_loop(Expr::fail(), Expr::skip(), Expr::act("a"));
        assert!(validate(&w, &ab).is_ok());
    }

    #[test]
    fn oplus_many_weights() {
        // oplus{a:1/3, b:1/3, c:1/3} = a +[1/3] (b +[1/2] c)
        let e = Expr::oplus_many(vec![
            (Expr::act("a"), rat(1, 3)),
            (Expr::act("b"), rat(1, 3)),
            (Expr::act("c"), rat(1, 3)),
        ]);
        let want = Expr::oplus(
            Expr::act("a"),
            rat(1, 3),
            Expr::oplus(Expr::act("b"), rat(1, 2), Expr::act("c")),
        );
        assert_eq!(e, want);

        // zero weights are dropped, weight-one heads elide the node
        let e = Expr::oplus_many(vec![
            (Expr::act("a"), rat(0, 1)),
            (Expr::act("b"), rat(1, 1)),
            (Expr::act("c"), rat(0, 1)),
        ]);
        assert_eq!(e, Expr::act("b"));
    }
}
