//! Seeded random generators for valid closed expressions, valid automata,
//! and distributions, used by the property suites, the axiom soundness
//! driver, and the corpus-based acceptance checks.

use crate::automaton::{validate_automaton, Automaton, StateLabel};
use crate::rewrite::{Bindings, RewriteRule};
use crate::semantics::{FinDist, TruncMultiset, Word};
use crate::syntax::{fresh_name, skip_unguarded, validate, Alphabet, Expr};
use num::rational::BigRational;
use num::{BigUint, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Deterministic generator of well-formed values over a fixed alphabet.
pub struct Gen {
    rng: ChaCha8Rng,
    pub alphabet: Alphabet,
}

impl Gen {
    pub fn new(seed: u64, alphabet: Alphabet) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            alphabet,
        }
    }

    pub fn letter(&mut self) -> String {
        let i = self.rng.random_range(0..self.alphabet.len());
        self.alphabet.name(i as u16).to_string()
    }

    /// An exact rational in [0,1] with a small denominator.
    pub fn prob(&mut self) -> BigRational {
        let den: i64 = self.rng.random_range(1..=6);
        let num: i64 = self.rng.random_range(0..=den);
        BigRational::new(num.into(), den.into())
    }

    /// A rational in (0,1) — never degenerate.
    pub fn prob_proper(&mut self) -> BigRational {
        let den: i64 = self.rng.random_range(2..=6);
        let num: i64 = self.rng.random_range(1..den);
        BigRational::new(num.into(), den.into())
    }

    /// A random closed expression with at most `max_size` nodes, valid by
    /// construction (and asserted so).
    pub fn closed_expr(&mut self, max_size: usize) -> Expr {
        let size = self.rng.random_range(1..=max_size.max(1));
        let e = self.expr_rec(size, &mut Vec::new());
        debug_assert!(e.is_closed());
        debug_assert!(e.size() <= max_size.max(1));
        debug_assert!(validate(&e, &self.alphabet).is_ok());
        e
    }

    /// A random expression that may use the given names as free variables
    /// (in guarded or unguarded positions other than left composition
    /// operands). Still valid with respect to productivity and closedness.
    pub fn open_expr(&mut self, max_size: usize, vars: &[String]) -> Expr {
        let size = self.rng.random_range(1..=max_size.max(1));
        let mut ctx: Vec<(String, bool)> = vars.iter().map(|v| (v.clone(), true)).collect();
        let e = self.expr_rec(size, &mut ctx);
        debug_assert!(validate(&e, &self.alphabet).is_ok());
        e
    }

    /// A random closed fix expression (for fixpoint-rule instances).
    pub fn closed_fix(&mut self, max_size: usize) -> Expr {
        let x = fresh_name("g");
        let body = self.expr_rec(max_size.max(3) - 1, &mut vec![(x.clone(), false)]);
        let e = Expr::fix(x, body);
        debug_assert!(validate(&e, &self.alphabet).is_ok());
        e
    }

    // ctx holds the bound variables in scope, with a flag telling whether an
    // occurrence here would be guarded. The result has at most `size` nodes.
    fn expr_rec(&mut self, size: usize, ctx: &mut Vec<(String, bool)>) -> Expr {
        let usable: Vec<String> = ctx
            .iter()
            .filter(|(_, guarded)| *guarded)
            .map(|(x, _)| x.clone())
            .collect();
        if size <= 1 {
            return self.leaf(&usable);
        }
        if size == 2 {
            // Only a unary constructor fits.
            let x = fresh_name("g");
            ctx.push((x.clone(), false));
            let body = self.expr_rec(1, ctx);
            ctx.pop();
            return Expr::fix(x, body);
        }
        let left_size = self.rng.random_range(1..=size - 2);
        let right_size = size - 1 - left_size;
        match self.rng.random_range(0..100) {
            0..=19 => self.leaf(&usable),
            20..=44 => {
                let l = self.expr_rec(left_size, ctx);
                let r = self.expr_rec(right_size, ctx);
                Expr::amp(l, r)
            }
            45..=69 => {
                let l = self.expr_rec(left_size, ctx);
                let r = self.expr_rec(right_size, ctx);
                Expr::oplus(l, self.prob(), r)
            }
            70..=86 => {
                // Left operand must be closed; guard the right context when
                // the left cannot terminate silently.
                let l = self.expr_rec(left_size, &mut Vec::new());
                let guards = !skip_unguarded(&l);
                let saved: Vec<bool> = ctx.iter().map(|(_, g)| *g).collect();
                if guards {
                    for entry in ctx.iter_mut() {
                        entry.1 = true;
                    }
                }
                let r = self.expr_rec(right_size, ctx);
                for (entry, g) in ctx.iter_mut().zip(saved) {
                    entry.1 = g;
                }
                Expr::seq(l, r)
            }
            _ => {
                let x = fresh_name("g");
                ctx.push((x.clone(), false));
                let body = self.expr_rec(size - 1, ctx);
                ctx.pop();
                Expr::fix(x, body)
            }
        }
    }

    fn leaf(&mut self, usable: &[String]) -> Expr {
        if !usable.is_empty() && self.rng.random_range(0..100) < 40 {
            let x = &usable[self.rng.random_range(0..usable.len())];
            return Expr::var(x.clone());
        }
        match self.rng.random_range(0..100) {
            0..=54 => Expr::act(self.letter()),
            55..=79 => Expr::skip(),
            _ => Expr::fail(),
        }
    }

    /// A random valid automaton with at most `max_states` states. Retries
    /// until validation passes.
    pub fn automaton(&mut self, max_states: usize) -> Automaton {
        loop {
            let k = self.rng.random_range(1..=max_states);
            let names: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
            let mut states = BTreeMap::new();
            for (i, name) in names.iter().enumerate() {
                let pick_succ = |rng: &mut ChaCha8Rng| names[rng.random_range(0..k)].clone();
                let label = match self.rng.random_range(0..100) {
                    0..=14 => StateLabel::Skip,
                    15..=24 => StateLabel::Fail,
                    25..=59 => StateLabel::Act(self.letter(), pick_succ(&mut self.rng)),
                    60..=79 => {
                        let fan = self.rng.random_range(1..=3);
                        let mut m: BTreeMap<String, BigUint> = BTreeMap::new();
                        for _ in 0..fan {
                            let mult = BigUint::from(self.rng.random_range(1..=2u32));
                            *m.entry(pick_succ(&mut self.rng))
                                .or_insert_with(BigUint::zero) += mult;
                        }
                        StateLabel::Amp(m)
                    }
                    _ => {
                        let fan = self.rng.random_range(1..=3usize);
                        let mut raw: BTreeMap<String, i64> = BTreeMap::new();
                        for _ in 0..fan {
                            *raw.entry(pick_succ(&mut self.rng)).or_insert(0) +=
                                self.rng.random_range(1..=4i64);
                        }
                        let total: i64 = raw.values().sum();
                        StateLabel::OPlus(
                            raw.into_iter()
                                .map(|(t, w)| {
                                    (t, BigRational::new(w.into(), total.into()))
                                })
                                .collect(),
                        )
                    }
                };
                let _ = i;
                states.insert(name.clone(), label);
            }
            let aut = Automaton {
                alphabet: self.alphabet.clone(),
                start: names[0].clone(),
                states,
            };
            if validate_automaton(&aut).is_ok() {
                return aut;
            }
        }
    }

    /// A random canonical distribution over depth-`depth` multisets.
    pub fn findist(&mut self, depth: usize) -> FinDist {
        let support_size = self.rng.random_range(1..=4usize);
        let mut raw: Vec<(TruncMultiset, i64)> = Vec::new();
        for _ in 0..support_size {
            let entries = self.rng.random_range(0..=3usize);
            let mut ms: Vec<(Word, BigUint)> = Vec::new();
            for _ in 0..entries {
                let len = self.rng.random_range(0..=depth);
                let w = Word(
                    (0..len)
                        .map(|_| self.rng.random_range(0..self.alphabet.len()) as u16)
                        .collect(),
                );
                ms.push((w, BigUint::from(self.rng.random_range(1..=3u32))));
            }
            raw.push((
                TruncMultiset::from_entries(depth, ms),
                self.rng.random_range(1..=5i64),
            ));
        }
        let total: i64 = raw.iter().map(|(_, w)| *w).sum();
        FinDist::from_support(
            depth,
            raw.into_iter()
                .map(|(m, w)| (m, BigRational::new(w.into(), total.into()))),
        )
        .expect("weights normalized")
    }

    /// A random word of length at most `max_len`.
    pub fn word(&mut self, max_len: usize) -> Word {
        let len = self.rng.random_range(0..=max_len);
        Word(
            (0..len)
                .map(|_| self.rng.random_range(0..self.alphabet.len()) as u16)
                .collect(),
        )
    }

    /// Instantiate both sides of a rewrite rule with random closed
    /// expressions, probabilities, and a letter; redraws until computed
    /// probabilities are defined.
    pub fn rule_instance(&mut self, rule: &RewriteRule, max_size: usize) -> (Expr, Expr) {
        loop {
            let mut b = Bindings::new();
            if rule.is_fix_unroll() {
                b.set_expr(0, self.closed_fix(max_size));
            } else {
                for i in 0..rule.expr_slots() {
                    b.set_expr(i, self.closed_expr(max_size));
                }
            }
            for i in 0..rule.rat_slots() {
                b.set_rat(i, self.prob());
            }
            if rule.uses_letter() {
                b.set_letter(self.letter());
            }
            if let Some(pair) = rule.instantiate(&b) {
                return pair;
            }
        }
    }
}

/// A seeded corpus of closed valid expressions.
pub fn expr_corpus(seed: u64, count: usize, max_size: usize, alphabet: &Alphabet) -> Vec<Expr> {
    let mut g = Gen::new(seed, alphabet.clone());
    (0..count).map(|_| g.closed_expr(max_size)).collect()
}

/// A seeded corpus of valid automata.
pub fn automaton_corpus(
    seed: u64,
    count: usize,
    max_states: usize,
    alphabet: &Alphabet,
) -> Vec<Automaton> {
    let mut g = Gen::new(seed, alphabet.clone());
    (0..count).map(|_| g.automaton(max_states)).collect()
}

/// A seeded corpus of canonical distributions at a fixed depth.
pub fn findist_corpus(seed: u64, count: usize, depth: usize, alphabet: &Alphabet) -> Vec<FinDist> {
    let mut g = Gen::new(seed, alphabet.clone());
    (0..count).map(|_| g.findist(depth)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::var_sets;

    fn ab() -> Alphabet {
        Alphabet::of(&["a", "b"])
    }

    #[test]
    fn generated_expressions_are_valid_and_deterministic() {
        let c1 = expr_corpus(7, 50, 12, &ab());
        let c2 = expr_corpus(7, 50, 12, &ab());
        // Bound names come from a global counter; the corpora agree up to
        // renaming.
        assert_eq!(c1.len(), c2.len());
        for (i, (a, b)) in c1.iter().zip(&c2).enumerate() {
            assert!(
                crate::syntax::alpha_eq(a, b),
                "pair {i}:\n  {}\n  {}",
                crate::syntax::print(a),
                crate::syntax::print(b)
            );
        }
        for e in &c1 {
            assert!(e.is_closed());
            validate(e, &ab()).unwrap();
            assert!(e.size() <= 12, "size {} too large", e.size());
        }
        // the corpus exercises fixpoints and variables
        assert!(c1.iter().any(|e| crate::syntax::print(e).contains("fix")));
    }

    #[test]
    fn generated_automata_are_valid() {
        let autos = automaton_corpus(11, 30, 6, &ab());
        for aut in &autos {
            validate_automaton(aut).unwrap();
            assert!(aut.len() <= 6);
        }
    }

    #[test]
    fn generated_findists_are_canonical() {
        let ds = findist_corpus(3, 30, 3, &ab());
        for d in &ds {
            assert_eq!(d.depth(), 3);
            assert!(d.support_len() >= 1);
        }
    }

    #[test]
    fn rule_instances_are_valid() {
        let mut g = Gen::new(5, ab());
        for rule in crate::rewrite::rules() {
            for _ in 0..10 {
                let (l, r) = g.rule_instance(&rule, 6);
                validate(&l, &ab()).unwrap_or_else(|e| panic!("{}: lhs invalid: {e}", rule.name));
                validate(&r, &ab()).unwrap_or_else(|e| panic!("{}: rhs invalid: {e}", rule.name));
            }
        }
    }

    #[test]
    fn var_usage_is_guarded() {
        // Spot check: every generated expression has no unguarded free or
        // bound trouble (validation covers it, but assert the analysis too).
        for e in expr_corpus(13, 40, 10, &ab()) {
            let vs = var_sets(&e);
            assert!(vs.unguarded.is_empty() && vs.guarded.is_empty());
        }
    }
}
