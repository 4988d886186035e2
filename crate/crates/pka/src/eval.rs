//! Direct depth-`n` evaluator for expressions: structural recursion through
//! the semantic operations, with fixpoints handled by depth-indexed
//! re-evaluation of the binding expression.
//!
//! Termination rests on productivity: a provider for a fix variable is only
//! ever re-entered underneath an action prefix, which strictly decreases the
//! depth at which the binding expression must be evaluated.

use crate::semantics::{
    amp2, bind_with, mix, Budget, FinDist, SemanticsError, Word,
};
use crate::syntax::{Alphabet, Expr, ExprKind, NodeId};
use num::rational::BigRational;
use num::One;
use std::collections::HashMap;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("letter {0} is not in the alphabet")]
    UnknownLetter(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Environment binding each variable to its binding fix expression together
/// with the environment in force at the binder. Looking a variable up at
/// depth `k` re-evaluates the binder there, so one binding serves every depth
/// the evaluation happens to need.
#[derive(Clone)]
pub struct Env(Option<Rc<EnvNode>>);

struct EnvNode {
    name: String,
    fix: Expr,
    parent: Env,
    rest: Env,
}

impl Env {
    pub fn empty() -> Env {
        Env(None)
    }

    fn bind(&self, name: String, fix: Expr, parent: Env) -> Env {
        Env(Some(Rc::new(EnvNode {
            name,
            fix,
            parent,
            rest: self.clone(),
        })))
    }

    fn lookup(&self, name: &str) -> Option<(&Expr, &Env)> {
        let mut cur = self;
        while let Some(node) = &cur.0 {
            if node.name == name {
                return Some((&node.fix, &node.parent));
            }
            cur = &node.rest;
        }
        None
    }
}

/// Expression evaluator with a `(node, depth)` memo table.
///
/// The memo is sound because node ids are unique per tree position for open
/// subtrees (the syntax module refreshes open copies on substitution), and
/// closed subtrees have position-independent values.
pub struct Evaluator<'a> {
    alphabet: &'a Alphabet,
    budget: Budget,
    memo: HashMap<(NodeId, usize), FinDist>,
}

impl<'a> Evaluator<'a> {
    pub fn new(alphabet: &'a Alphabet) -> Self {
        Evaluator {
            alphabet,
            budget: Budget::default(),
            memo: HashMap::new(),
        }
    }

    pub fn with_budget(alphabet: &'a Alphabet, budget: Budget) -> Self {
        Evaluator {
            alphabet,
            budget,
            memo: HashMap::new(),
        }
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }

    /// Depth-`n` value of `e` under `env`, which must bind every free
    /// variable of `e`.
    pub fn eval(&mut self, e: &Expr, n: usize, env: &Env) -> Result<FinDist> {
        if let Some(v) = self.memo.get(&(e.id(), n)) {
            return Ok(v.clone());
        }
        let v = match e.kind() {
            ExprKind::Skip => FinDist::dirac_epsilon(n),
            ExprKind::Fail => FinDist::dirac_empty(n),
            ExprKind::Act(a) => {
                let id = self
                    .alphabet
                    .index(a)
                    .ok_or_else(|| EvalError::UnknownLetter(a.clone()))?;
                FinDist::dirac_letter(n, id)
            }
            ExprKind::Var(x) => {
                let (fix, parent) = env
                    .lookup(x)
                    .map(|(f, p)| (f.clone(), p.clone()))
                    .ok_or_else(|| EvalError::UnboundVariable(x.clone()))?;
                self.eval(&fix, n, &parent)?
            }
            ExprKind::OPlus(l, r, rr) => {
                let dl = self.eval(l, n, env)?;
                let dr = self.eval(rr, n, env)?;
                mix(
                    &[
                        (r.clone(), &dl),
                        (BigRational::one() - r, &dr),
                    ],
                    &self.budget,
                )?
            }
            ExprKind::Amp(l, r) => {
                let dl = self.eval(l, n, env)?;
                let dr = self.eval(r, n, env)?;
                amp2(&dl, &dr, &self.budget)?
            }
            ExprKind::Seq(l, r) => {
                let mu = self.eval(l, n, &Env::empty())?;
                let budget = self.budget;
                bind_with(&mu, |k| self.eval(r, k, env), &budget)?
            }
            ExprKind::Fix(x, body) => {
                let env2 = env.bind(x.clone(), e.clone(), env.clone());
                self.eval(body, n, &env2)?
            }
        };
        self.memo.insert((e.id(), n), v.clone());
        Ok(v)
    }
}

/// Depth-`n` value of an expression under an environment of named bindings,
/// each a closed expression.
pub fn eval_expr(
    e: &Expr,
    n: usize,
    bindings: &[(String, Expr)],
    alphabet: &Alphabet,
) -> Result<FinDist> {
    let mut ev = Evaluator::new(alphabet);
    let mut env = Env::empty();
    for (name, binding) in bindings {
        // A closed binding behaves like its trivial fix.
        env = env.bind(
            name.clone(),
            Expr::fix(name.clone(), binding.clone()),
            Env::empty(),
        );
    }
    ev.eval(e, n, &env)
}

/// Depth-`n` value of a closed, validated expression.
pub fn eval_closed(e: &Expr, n: usize, alphabet: &Alphabet) -> Result<FinDist> {
    Evaluator::new(alphabet).eval(e, n, &Env::empty())
}

/// Like [`eval_closed`] with an explicit budget.
pub fn eval_closed_with_budget(
    e: &Expr,
    n: usize,
    alphabet: &Alphabet,
    budget: Budget,
) -> Result<FinDist> {
    Evaluator::with_budget(alphabet, budget).eval(e, n, &Env::empty())
}

/// Check one equation instance at depth `n`: substitute the same closed
/// expressions for the shared free variables of both sides, evaluate, and
/// compare the depth-`n` fragments.
pub fn check_axiom_instance(
    lhs: &Expr,
    rhs: &Expr,
    n: usize,
    bindings: &[(String, Expr)],
    alphabet: &Alphabet,
) -> Result<bool> {
    let l = eval_expr(lhs, n, bindings, alphabet)?;
    let r = eval_expr(rhs, n, bindings, alphabet)?;
    Ok(l == r)
}

/// Word made of `k` copies of the letter named `name`.
pub fn letter_word(alphabet: &Alphabet, name: &str, k: usize) -> Word {
    let id = alphabet.index(name).expect("letter in alphabet");
    Word(vec![id; k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{equiv, restrict, TruncMultiset};
    use crate::syntax::parse;
    use num::BigUint;

    fn ab() -> Alphabet {
        Alphabet::of(&["a", "b", "c"])
    }

    fn ev(text: &str, n: usize) -> FinDist {
        let alphabet = ab();
        let e = parse(text, &alphabet).unwrap();
        eval_closed(&e, n, &alphabet).unwrap()
    }

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    fn chain(alphabet: &Alphabet, depth: usize, counts: &[(&str, u64)]) -> TruncMultiset {
        TruncMultiset::from_entries(
            depth,
            counts.iter().map(|(s, m)| {
                let word = Word(
                    s.chars()
                        .map(|c| alphabet.index(&c.to_string()).unwrap())
                        .collect(),
                );
                (word, BigUint::from(*m))
            }),
        )
    }

    #[test]
    fn star_is_point_mass_on_prefix_chain() {
        let d = ev("a*", 4);
        let want = FinDist::dirac(chain(
            &ab(),
            4,
            &[("", 1), ("a", 1), ("aa", 1), ("aaa", 1), ("aaaa", 1)],
        ));
        assert_eq!(d, want);
    }

    #[test]
    fn nested_star_doubles_multiplicities() {
        let d = ev("(a ; a*)*", 3);
        let want = FinDist::dirac(chain(&ab(), 3, &[("", 1), ("a", 1), ("aa", 2), ("aaa", 4)]));
        assert_eq!(d, want);
    }

    #[test]
    fn mix_of_point_masses() {
        let d = ev("a +[1/3] (b & c)", 1);
        assert_eq!(d.prob_of(&chain(&ab(), 1, &[("a", 1)])), rat(1, 3));
        assert_eq!(d.prob_of(&chain(&ab(), 1, &[("b", 1), ("c", 1)])), rat(2, 3));
    }

    #[test]
    fn eval_closed_basics() {
        assert_eq!(ev("skip", 3), FinDist::dirac_epsilon(3));
        assert_eq!(ev("fail ; a*", 5), FinDist::dirac_empty(5));
        let d = ev("(skip & skip) ; (a +[1/2] b)", 1);
        assert_eq!(d.prob_of(&chain(&ab(), 1, &[("a", 2)])), rat(1, 4));
        assert_eq!(d.prob_of(&chain(&ab(), 1, &[("a", 1), ("b", 1)])), rat(1, 2));
        assert_eq!(d.prob_of(&chain(&ab(), 1, &[("b", 2)])), rat(1, 4));
    }

    #[test]
    fn axiom_instances() {
        let alphabet = ab();
        let l = parse("(a & b) ; c", &alphabet).unwrap();
        let r = parse("(a ; c) & (b ; c)", &alphabet).unwrap();
        assert!(check_axiom_instance(&l, &r, 3, &[], &alphabet).unwrap());

        let l = parse("a ; (b +[1/2] c)", &alphabet).unwrap();
        let r = parse("(a ; b) +[1/2] (a ; c)", &alphabet).unwrap();
        assert!(check_axiom_instance(&l, &r, 3, &[], &alphabet).unwrap());

        let l = parse("a +[1/2] b", &alphabet).unwrap();
        let r = parse("a", &alphabet).unwrap();
        assert!(!check_axiom_instance(&l, &r, 1, &[], &alphabet).unwrap());
    }

    #[test]
    fn coherence_of_restrictions() {
        let alphabet = ab();
        for text in ["a*", "(a ; a*)*", "(a +[1/2] b)*", "(a & (b +[1/3] skip)) ; c*"] {
            let e = parse(text, &alphabet).unwrap();
            let d5 = eval_closed(&e, 5, &alphabet).unwrap();
            for m in 0..=5 {
                let dm = eval_closed(&e, m, &alphabet).unwrap();
                assert_eq!(restrict(&d5, m), dm, "coherence failed for {text} at {m}");
            }
        }
    }

    #[test]
    fn fixpoint_unrolling() {
        let alphabet = ab();
        let e = parse("fix x . skip & (a ; (b ; x))", &alphabet).unwrap();
        if let ExprKind::Fix(x, body) = e.kind() {
            let unrolled = crate::syntax::substitute(body, &e, x);
            let d1 = eval_closed(&e, 5, &alphabet).unwrap();
            let d2 = eval_closed(&unrolled, 5, &alphabet).unwrap();
            assert!(equiv(&d1, &d2, 5));
        } else {
            panic!("expected fix");
        }
    }

    #[test]
    fn star_unrolling() {
        let alphabet = ab();
        let e = parse("(a +[1/2] b)*", &alphabet).unwrap();
        let unrolled = Expr::amp(
            Expr::skip(),
            Expr::seq(parse("a +[1/2] b", &alphabet).unwrap(), e.clone()),
        );
        let d1 = eval_closed(&e, 4, &alphabet).unwrap();
        let d2 = eval_closed(&unrolled, 4, &alphabet).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn if_and_while_encodings() {
        use crate::syntax::{if_then_else, while_loop};
        let alphabet = ab();
        // if skip/fail behaves as the then-branch
        let e = if_then_else(Expr::skip(), Expr::fail(), Expr::act("a"), Expr::act("b"));
        let d = eval_closed(&e, 2, &alphabet).unwrap();
        assert_eq!(d, ev("a", 2));
        // symmetric case
        let e = if_then_else(Expr::fail(), Expr::skip(), Expr::act("a"), Expr::act("b"));
        let d = eval_closed(&e, 2, &alphabet).unwrap();
        assert_eq!(d, ev("b", 2));
        // while with a false test is skip
        let w = while_loop(Expr::fail(), Expr::skip(), Expr::act("a"));
        let d = eval_closed(&w, 3, &alphabet).unwrap();
        assert_eq!(d, ev("skip", 3));
    }
}
