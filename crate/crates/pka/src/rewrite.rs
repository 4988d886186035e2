//! The equational axioms as verified rewrite rules, normalization into the
//! layered probabilistic/choice/action grammar, and the syntactic Brzozowski
//! derivative read off the normal form.

use crate::eval::{eval_closed_with_budget, EvalError};
use crate::semantics::{amp2, mix, shift, Budget, FinDist, TruncMultiset, Word};
use crate::syntax::{substitute, Alphabet, Expr, ExprKind};
use num::rational::BigRational;
use num::{BigUint, One, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("rule {rule} does not match at the given position")]
    NoMatch { rule: &'static str },
    #[error("no subterm at path {path:?}")]
    BadPath { path: Vec<usize> },
    #[error("normalization budget exhausted ({budget} work units)")]
    TermBudget { budget: usize },
    #[error("expression must be closed, found free {0:?}")]
    OpenExpression(String),
    #[error("rewrite result failed validation: {0}")]
    InvalidResult(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Semantics(#[from] crate::semantics::SemanticsError),
}

pub type Result<T> = std::result::Result<T, RewriteError>;

/// Expression patterns over metavariables. `Meta` slots match any expression
/// (repeated slots must match structurally equal subterms), `Letter` matches
/// a single action letter.
#[derive(Debug, Clone)]
pub enum PatE {
    Meta(u8),
    Letter,
    Skip,
    Fail,
    Amp(Box<PatE>, Box<PatE>),
    OPlus(Box<PatE>, PatR, Box<PatE>),
    Seq(Box<PatE>, Box<PatE>),
}

/// Rational slots in patterns: a metavariable, a constant, or (on right-hand
/// sides) a value computed from matched metavariables.
#[derive(Debug, Clone)]
pub enum PatR {
    Meta(u8),
    Const(i64),
    /// `1 − r_i`
    OneMinus(u8),
    /// `r_i · r_j`
    Mul(u8, u8),
    /// `(r_j − r_i r_j) / (1 − r_i r_j)`, the rebalanced weight of skew
    /// associativity.
    SkewAssoc(u8, u8),
}

enum RuleKind {
    Structural { lhs: PatE, rhs: PatE },
    /// `fix x e → e[fix x e / x]`.
    FixUnroll,
}

/// A named, oriented rewrite rule. Every instance is semantically sound at
/// every depth; the test suite checks this by evaluation.
pub struct RewriteRule {
    pub name: &'static str,
    kind: RuleKind,
}

#[derive(Default, Clone)]
pub struct Bindings {
    exprs: Vec<Option<Expr>>,
    rats: Vec<Option<BigRational>>,
    letter: Option<String>,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings {
            exprs: vec![None; 4],
            rats: vec![None; 4],
            letter: None,
        }
    }

    pub fn set_expr(&mut self, i: u8, e: Expr) {
        self.exprs[i as usize] = Some(e);
    }

    pub fn set_rat(&mut self, i: u8, r: BigRational) {
        self.rats[i as usize] = Some(r);
    }

    pub fn set_letter(&mut self, a: String) {
        self.letter = Some(a);
    }
}

fn match_rat(pat: &PatR, r: &BigRational, b: &mut Bindings) -> bool {
    match pat {
        PatR::Meta(i) => match &b.rats[*i as usize] {
            Some(prev) => prev == r,
            None => {
                b.rats[*i as usize] = Some(r.clone());
                true
            }
        },
        PatR::Const(c) => r == &BigRational::from_integer((*c).into()),
        _ => unreachable!("computed rationals appear only on right-hand sides"),
    }
}

fn match_pat(pat: &PatE, e: &Expr, b: &mut Bindings) -> bool {
    match (pat, e.kind()) {
        (PatE::Meta(i), _) => match &b.exprs[*i as usize] {
            Some(prev) => prev == e,
            None => {
                b.exprs[*i as usize] = Some(e.clone());
                true
            }
        },
        (PatE::Letter, ExprKind::Act(a)) => match &b.letter {
            Some(prev) => prev == a,
            None => {
                b.letter = Some(a.clone());
                true
            }
        },
        (PatE::Skip, ExprKind::Skip) | (PatE::Fail, ExprKind::Fail) => true,
        (PatE::Amp(p1, p2), ExprKind::Amp(l, r)) => match_pat(p1, l, b) && match_pat(p2, r, b),
        (PatE::Seq(p1, p2), ExprKind::Seq(l, r)) => match_pat(p1, l, b) && match_pat(p2, r, b),
        (PatE::OPlus(p1, pr, p2), ExprKind::OPlus(l, r, rr)) => {
            match_rat(pr, r, b) && match_pat(p1, l, b) && match_pat(p2, rr, b)
        }
        _ => false,
    }
}

fn eval_rat(pat: &PatR, b: &Bindings) -> Option<BigRational> {
    let get = |i: &u8| b.rats[*i as usize].clone();
    match pat {
        PatR::Meta(i) => get(i),
        PatR::Const(c) => Some(BigRational::from_integer((*c).into())),
        PatR::OneMinus(i) => Some(BigRational::one() - get(i)?),
        PatR::Mul(i, j) => Some(get(i)? * get(j)?),
        PatR::SkewAssoc(i, j) => {
            let rs = get(i)? * get(j)?;
            let den = BigRational::one() - &rs;
            if den.is_zero() {
                return None;
            }
            Some((get(j)? - rs) / den)
        }
    }
}

fn build(pat: &PatE, b: &Bindings, used: &mut [bool; 4]) -> Option<Expr> {
    Some(match pat {
        PatE::Meta(i) => {
            let bound = b.exprs[*i as usize].as_ref()?;
            // Reusing an open binding at a second position would alias node
            // ids across tree positions; refresh instead.
            if used[*i as usize] && !bound.is_closed() {
                bound.refreshed()
            } else {
                used[*i as usize] = true;
                bound.clone()
            }
        }
        PatE::Letter => Expr::act(b.letter.clone()?),
        PatE::Skip => Expr::skip(),
        PatE::Fail => Expr::fail(),
        PatE::Amp(p1, p2) => Expr::amp(build(p1, b, used)?, build(p2, b, used)?),
        PatE::Seq(p1, p2) => Expr::seq(build(p1, b, used)?, build(p2, b, used)?),
        PatE::OPlus(p1, pr, p2) => {
            let r = eval_rat(pr, b)?;
            Expr::oplus(build(p1, b, used)?, r, build(p2, b, used)?)
        }
    })
}

impl RewriteRule {
    /// Apply the rule at the root of `e`.
    pub fn apply_at_root(&self, e: &Expr) -> Result<Expr> {
        match &self.kind {
            RuleKind::Structural { lhs, rhs } => {
                let mut b = Bindings::new();
                if !match_pat(lhs, e, &mut b) {
                    return Err(RewriteError::NoMatch { rule: self.name });
                }
                build(rhs, &b, &mut [false; 4]).ok_or(RewriteError::NoMatch { rule: self.name })
            }
            RuleKind::FixUnroll => match e.kind() {
                ExprKind::Fix(x, body) => Ok(substitute(body, e, x)),
                _ => Err(RewriteError::NoMatch { rule: self.name }),
            },
        }
    }

    /// Build one instance of both sides from explicit bindings. Returns
    /// `None` when a computed probability is undefined (division by zero).
    pub fn instantiate(&self, b: &Bindings) -> Option<(Expr, Expr)> {
        match &self.kind {
            RuleKind::Structural { lhs, rhs } => Some((
                build(lhs, b, &mut [false; 4])?,
                build(rhs, b, &mut [false; 4])?,
            )),
            RuleKind::FixUnroll => {
                let f = b.exprs[0].as_ref()?;
                match f.kind() {
                    ExprKind::Fix(x, body) => Some((f.clone(), substitute(body, f, x))),
                    _ => None,
                }
            }
        }
    }

    /// How many expression metavariables the rule mentions (for `FixUnroll`,
    /// slot 0 must hold a fix expression).
    pub fn expr_slots(&self) -> u8 {
        fn scan(p: &PatE, seen: &mut u8) {
            match p {
                PatE::Meta(i) => *seen = (*seen).max(i + 1),
                PatE::Amp(a, b) | PatE::Seq(a, b) | PatE::OPlus(a, _, b) => {
                    scan(a, seen);
                    scan(b, seen);
                }
                _ => {}
            }
        }
        match &self.kind {
            RuleKind::Structural { lhs, rhs } => {
                let mut n = 0;
                scan(lhs, &mut n);
                scan(rhs, &mut n);
                n
            }
            RuleKind::FixUnroll => 1,
        }
    }

    pub fn rat_slots(&self) -> u8 {
        fn scan_r(p: &PatR, seen: &mut u8) {
            match p {
                PatR::Meta(i) | PatR::OneMinus(i) => *seen = (*seen).max(i + 1),
                PatR::Mul(i, j) | PatR::SkewAssoc(i, j) => {
                    *seen = (*seen).max(i + 1).max(j + 1)
                }
                PatR::Const(_) => {}
            }
        }
        fn scan(p: &PatE, seen: &mut u8) {
            match p {
                PatE::Amp(a, b) | PatE::Seq(a, b) => {
                    scan(a, seen);
                    scan(b, seen);
                }
                PatE::OPlus(a, r, b) => {
                    scan_r(r, seen);
                    scan(a, seen);
                    scan(b, seen);
                }
                _ => {}
            }
        }
        match &self.kind {
            RuleKind::Structural { lhs, rhs } => {
                let mut n = 0;
                scan(lhs, &mut n);
                scan(rhs, &mut n);
                n
            }
            RuleKind::FixUnroll => 0,
        }
    }

    pub fn uses_letter(&self) -> bool {
        fn scan(p: &PatE) -> bool {
            match p {
                PatE::Letter => true,
                PatE::Amp(a, b) | PatE::Seq(a, b) | PatE::OPlus(a, _, b) => scan(a) || scan(b),
                _ => false,
            }
        }
        match &self.kind {
            RuleKind::Structural { lhs, rhs } => scan(lhs) || scan(rhs),
            RuleKind::FixUnroll => false,
        }
    }

    pub fn is_fix_unroll(&self) -> bool {
        matches!(self.kind, RuleKind::FixUnroll)
    }
}

fn m(i: u8) -> PatE {
    PatE::Meta(i)
}

fn pamp(l: PatE, r: PatE) -> PatE {
    PatE::Amp(Box::new(l), Box::new(r))
}

fn pseq(l: PatE, r: PatE) -> PatE {
    PatE::Seq(Box::new(l), Box::new(r))
}

fn poplus(l: PatE, r: PatR, rr: PatE) -> PatE {
    PatE::OPlus(Box::new(l), r, Box::new(rr))
}

/// The rule table, one entry per equation of the axiom system.
pub fn rules() -> Vec<RewriteRule> {
    use PatR::*;
    let structural = |name, lhs, rhs| RewriteRule {
        name,
        kind: RuleKind::Structural { lhs, rhs },
    };
    vec![
        structural("amp_commutativity", pamp(m(0), m(1)), pamp(m(1), m(0))),
        structural(
            "amp_associativity",
            pamp(m(0), pamp(m(1), m(2))),
            pamp(pamp(m(0), m(1)), m(2)),
        ),
        structural("amp_identity", pamp(m(0), PatE::Fail), m(0)),
        structural(
            "oplus_skew_commutativity",
            poplus(m(0), Meta(0), m(1)),
            poplus(m(1), OneMinus(0), m(0)),
        ),
        structural(
            "oplus_skew_associativity",
            poplus(poplus(m(0), Meta(0), m(1)), Meta(1), m(2)),
            poplus(m(0), Mul(0, 1), poplus(m(1), SkewAssoc(0, 1), m(2))),
        ),
        structural("oplus_elimination", poplus(m(0), Const(1), m(1)), m(0)),
        structural("oplus_idempotence", poplus(m(0), Meta(0), m(0)), m(0)),
        structural(
            "seq_associativity",
            pseq(m(0), pseq(m(1), m(2))),
            pseq(pseq(m(0), m(1)), m(2)),
        ),
        structural("seq_left_identity", pseq(PatE::Skip, m(0)), m(0)),
        structural("seq_right_identity", pseq(m(0), PatE::Skip), m(0)),
        structural("seq_left_absorption", pseq(PatE::Fail, m(0)), PatE::Fail),
        structural("seq_right_absorption", pseq(m(0), PatE::Fail), PatE::Fail),
        structural(
            "seq_right_distributivity_over_amp",
            pseq(pamp(m(0), m(1)), m(2)),
            pamp(pseq(m(0), m(2)), pseq(m(1), m(2))),
        ),
        structural(
            "seq_right_distributivity_over_oplus",
            pseq(poplus(m(0), Meta(0), m(1)), m(2)),
            poplus(pseq(m(0), m(2)), Meta(0), pseq(m(1), m(2))),
        ),
        structural(
            "amp_right_distributivity_over_oplus",
            pamp(poplus(m(0), Meta(0), m(1)), m(2)),
            poplus(pamp(m(0), m(2)), Meta(0), pamp(m(1), m(2))),
        ),
        structural(
            "seq_atomic_left_distributivity_over_amp",
            pseq(PatE::Letter, pamp(m(0), m(1))),
            pamp(pseq(PatE::Letter, m(0)), pseq(PatE::Letter, m(1))),
        ),
        structural(
            "seq_atomic_left_distributivity_over_oplus",
            pseq(PatE::Letter, poplus(m(0), Meta(0), m(1))),
            poplus(pseq(PatE::Letter, m(0)), Meta(0), pseq(PatE::Letter, m(1))),
        ),
        RewriteRule {
            name: "fixpoint_unrolling",
            kind: RuleKind::FixUnroll,
        },
    ]
}

/// Look a rule up by name.
pub fn rule_by_name(name: &str) -> Option<RewriteRule> {
    rules().into_iter().find(|r| r.name == name)
}

fn subterm_rebuild(e: &Expr, path: &[usize], f: &mut impl FnMut(&Expr) -> Result<Expr>) -> Result<Expr> {
    let Some((&step, rest)) = path.split_first() else {
        return f(e);
    };
    let bad = || RewriteError::BadPath {
        path: path.to_vec(),
    };
    Ok(match (e.kind(), step) {
        (ExprKind::Amp(l, r), 0) => Expr::amp(subterm_rebuild(l, rest, f)?, r.clone()),
        (ExprKind::Amp(l, r), 1) => Expr::amp(l.clone(), subterm_rebuild(r, rest, f)?),
        (ExprKind::Seq(l, r), 0) => Expr::seq(subterm_rebuild(l, rest, f)?, r.clone()),
        (ExprKind::Seq(l, r), 1) => Expr::seq(l.clone(), subterm_rebuild(r, rest, f)?),
        (ExprKind::OPlus(l, p, r), 0) => {
            Expr::oplus(subterm_rebuild(l, rest, f)?, p.clone(), r.clone())
        }
        (ExprKind::OPlus(l, p, r), 1) => {
            Expr::oplus(l.clone(), p.clone(), subterm_rebuild(r, rest, f)?)
        }
        (ExprKind::Fix(x, b), 0) => Expr::fix(x.clone(), subterm_rebuild(b, rest, f)?),
        _ => return Err(bad()),
    })
}

/// Apply `rule` at the subterm addressed by `path` (child indices, `0` for
/// left/body and `1` for right). The result is validated against the
/// alphabet.
pub fn apply_rule(
    e: &Expr,
    rule: &RewriteRule,
    path: &[usize],
    alphabet: &Alphabet,
) -> Result<Expr> {
    let out = subterm_rebuild(e, path, &mut |sub| rule.apply_at_root(sub))?;
    crate::syntax::validate(&out, alphabet)
        .map_err(|err| RewriteError::InvalidResult(err.to_string()))?;
    Ok(out)
}

/// One group of the normal form: the multiplicity of unguarded terminations
/// and, per letter, the (unconsolidated) continuations.
#[derive(Debug, Clone)]
struct Group {
    eps: BigUint,
    conts: BTreeMap<String, Vec<Expr>>,
}

impl Group {
    fn empty() -> Self {
        Group {
            eps: BigUint::zero(),
            conts: BTreeMap::new(),
        }
    }

    fn merge(&self, other: &Group) -> Group {
        let mut conts = self.conts.clone();
        for (a, es) in &other.conts {
            conts.entry(a.clone()).or_default().extend(es.iter().cloned());
        }
        Group {
            eps: &self.eps + &other.eps,
            conts,
        }
    }
}

type Layer = Vec<(BigRational, Group)>;

struct Normalizer {
    fuel: usize,
}

impl Normalizer {
    fn spend(&mut self, units: usize) -> Result<()> {
        if self.fuel < units {
            return Err(RewriteError::TermBudget {
                budget: self.fuel,
            });
        }
        self.fuel -= units;
        Ok(())
    }

    fn convolve(&mut self, a: &Layer, b: &Layer) -> Result<Layer> {
        self.spend(a.len().saturating_mul(b.len()))?;
        let mut out = Vec::with_capacity(a.len() * b.len());
        for (w1, g1) in a {
            for (w2, g2) in b {
                out.push((w1 * w2, g1.merge(g2)));
            }
        }
        Ok(out)
    }

    /// Top-layer normal form of a closed expression: a distribution over
    /// groups obtained by the distributivity, identity, absorption, and
    /// fix-unrolling reduction rules. Continuations under letters are left
    /// unnormalized.
    fn layer(&mut self, e: &Expr) -> Result<Layer> {
        self.spend(1)?;
        match e.kind() {
            ExprKind::Var(x) => Err(RewriteError::OpenExpression(x.clone())),
            ExprKind::Skip => Ok(vec![(
                BigRational::one(),
                Group {
                    eps: BigUint::one(),
                    conts: BTreeMap::new(),
                },
            )]),
            ExprKind::Fail => Ok(vec![(BigRational::one(), Group::empty())]),
            ExprKind::Act(a) => {
                let mut conts = BTreeMap::new();
                conts.insert(a.clone(), vec![Expr::skip()]);
                Ok(vec![(
                    BigRational::one(),
                    Group {
                        eps: BigUint::zero(),
                        conts,
                    },
                )])
            }
            ExprKind::Amp(l, r) => {
                let la = self.layer(l)?;
                let lb = self.layer(r)?;
                self.convolve(&la, &lb)
            }
            ExprKind::OPlus(l, p, r) => {
                if p.is_one() {
                    return self.layer(l);
                }
                if p.is_zero() {
                    return self.layer(r);
                }
                let la = self.layer(l)?;
                let lb = self.layer(r)?;
                let q = BigRational::one() - p;
                let mut out: Layer = la.into_iter().map(|(w, g)| (w * p, g)).collect();
                out.extend(lb.into_iter().map(|(w, g)| (w * &q, g)));
                Ok(out)
            }
            ExprKind::Seq(l, r) => {
                let ll = self.layer(l)?;
                let needs_r = ll.iter().any(|(_, g)| !g.eps.is_zero());
                let lr = if needs_r { Some(self.layer(r)?) } else { None };
                let mut out: Layer = Vec::new();
                for (w, g) in ll {
                    // Continuations pick up the pending right factor; each
                    // unguarded termination becomes one whole copy of it.
                    let base = Group {
                        eps: BigUint::zero(),
                        conts: g
                            .conts
                            .iter()
                            .map(|(a, es)| {
                                (
                                    a.clone(),
                                    es.iter()
                                        .map(|f| seq_smart(f, r))
                                        .collect(),
                                )
                            })
                            .collect(),
                    };
                    let mut branch: Layer = vec![(w, base)];
                    let copies = usize::try_from(&g.eps)
                        .map_err(|_| RewriteError::TermBudget { budget: self.fuel })?;
                    if copies > 0 {
                        let lr = lr.as_ref().expect("computed when needed");
                        for _ in 0..copies {
                            branch = self.convolve(&branch, lr)?;
                        }
                    }
                    out.extend(branch);
                }
                Ok(out)
            }
            ExprKind::Fix(x, body) => {
                let unrolled = substitute(body, e, x);
                self.layer(&unrolled)
            }
        }
    }
}

/// `f ; r` with the two composition identities applied on the fly.
fn seq_smart(f: &Expr, r: &Expr) -> Expr {
    match (f.kind(), r.kind()) {
        (ExprKind::Skip, _) => r.clone(),
        (ExprKind::Fail, _) => Expr::fail(),
        (_, ExprKind::Skip) => f.clone(),
        _ => Expr::seq(f.clone(), r.clone()),
    }
}

fn realize_group(g: &Group, alphabet: &Alphabet) -> Expr {
    let mut parts: Vec<Expr> = Vec::new();
    let mut eps = g.eps.clone();
    while !eps.is_zero() {
        parts.push(Expr::skip());
        eps -= BigUint::one();
    }
    for a in alphabet.names() {
        let cont = match g.conts.get(a).map(Vec::as_slice) {
            None | Some([]) => Expr::fail(),
            Some(es) => Expr::amp_many(es.to_vec()),
        };
        parts.push(Expr::seq(Expr::act(a), cont));
    }
    Expr::amp_many(parts)
}

/// Normalize a closed, validated expression so its top layer matches the
/// grammar: a probabilistic tree over groups of parallel components, each
/// group holding its unguarded skips and exactly one `a ; e` component per
/// alphabet letter (missing letters padded with failing continuations).
pub fn normalize(e: &Expr, alphabet: &Alphabet, budget: &Budget) -> Result<Expr> {
    let mut n = Normalizer { fuel: budget.0 };
    let layer = n.layer(e)?;
    let branches: Vec<(Expr, BigRational)> = layer
        .iter()
        .map(|(w, g)| (realize_group(g, alphabet), w.clone()))
        .collect();
    Ok(Expr::oplus_many(branches))
}

/// One outcome of the syntactic derivative: the termination multiplicity and
/// per letter the multiset of continuation expressions (empty for letters
/// whose continuation fails).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrzOutcome {
    pub eps_mult: BigUint,
    pub succ: BTreeMap<String, Vec<Expr>>,
}

/// A finite distribution over derivative outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrzStep {
    pub support: Vec<(BrzOutcome, BigRational)>,
}

type OutcomeKey = (BigUint, Vec<(String, Vec<String>)>);

fn outcome_key(o: &BrzOutcome) -> OutcomeKey {
    (
        o.eps_mult.clone(),
        o.succ
            .iter()
            .map(|(a, es)| (a.clone(), es.iter().map(crate::syntax::print).collect()))
            .collect(),
    )
}

/// The syntactic Brzozowski derivative, read off the normal form: each
/// probabilistic branch contributes one outcome whose successors are the
/// consolidated per-letter continuations; failing continuations contribute
/// the empty multiset.
pub fn brzozowski(e: &Expr, alphabet: &Alphabet, budget: &Budget) -> Result<BrzStep> {
    let mut n = Normalizer { fuel: budget.0 };
    let layer = n.layer(e)?;
    let mut merged: BTreeMap<OutcomeKey, (BrzOutcome, BigRational)> = BTreeMap::new();
    for (w, g) in layer {
        let mut succ: BTreeMap<String, Vec<Expr>> = BTreeMap::new();
        for a in alphabet.names() {
            let es = match g.conts.get(a).map(Vec::as_slice) {
                None | Some([]) => Vec::new(),
                Some(es) => vec![Expr::amp_many(es.to_vec())],
            };
            succ.insert(a.to_string(), es);
        }
        let outcome = BrzOutcome {
            eps_mult: g.eps.clone(),
            succ,
        };
        let key = outcome_key(&outcome);
        merged
            .entry(key)
            .and_modify(|(_, acc)| *acc += &w)
            .or_insert((outcome, w));
    }
    Ok(BrzStep {
        support: merged.into_values().collect(),
    })
}

/// Rebuild the depth-`n` behavior from a derivative by evaluating the
/// continuations at depth `n−1` and pushing them through the semantic
/// pipeline. Commutation with [`eval_closed_with_budget`] is the fundamental
/// property of the derivative.
pub fn reconstruct(
    brz: &BrzStep,
    n: usize,
    alphabet: &Alphabet,
    budget: &Budget,
) -> Result<FinDist> {
    let mut branches: Vec<(BigRational, FinDist)> = Vec::new();
    for (o, w) in &brz.support {
        let mut d = FinDist::dirac(TruncMultiset::from_entries(
            n,
            std::iter::once((Word::empty(), o.eps_mult.clone())),
        ));
        if n > 0 {
            for (a, conts) in &o.succ {
                let lid = alphabet.index(a).expect("letter in alphabet");
                for cont in conts {
                    let child = eval_closed_with_budget(cont, n - 1, alphabet, *budget)?;
                    let shifted = shift(&Word::letter(lid), &child, n);
                    d = amp2(&d, &shifted, budget)?;
                }
            }
        }
        branches.push((w.clone(), d));
    }
    let borrowed: Vec<(BigRational, &FinDist)> =
        branches.iter().map(|(w, d)| (w.clone(), d)).collect();
    Ok(mix(&borrowed, budget)?)
}
