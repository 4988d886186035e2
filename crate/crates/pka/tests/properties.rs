//! Property suites: the variable-analysis oracle, algebraic laws of the
//! semantic operations, sugar permutation invariance, and printer/parser
//! round trips.

use num::rational::BigRational;
use num::{BigUint, One, Zero};
use pka::eval::eval_closed;
use pka::generate::{findist_corpus, Gen};
use pka::semantics::{amp2, equiv, mix, Budget, FinDist, TruncMultiset, Word};
use pka::syntax::{
    alpha_eq, parse, print, skip_unguarded, substitute, var_sets, Alphabet, Expr, ExprKind,
};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

fn ab() -> Alphabet {
    Alphabet::of(&["a", "b"])
}

// ---------------------------------------------------------------------------
// Brute-force occurrence-path oracle for the guardedness analysis.

/// Paths to free occurrences of a variable (or to skip leaves).
fn occurrence_paths(e: &Expr, target_var: Option<&str>, out: &mut Vec<Vec<usize>>, prefix: &mut Vec<usize>) {
    match e.kind() {
        ExprKind::Var(x) => {
            if target_var == Some(x.as_str()) {
                out.push(prefix.clone());
            }
        }
        ExprKind::Skip => {
            if target_var.is_none() {
                out.push(prefix.clone());
            }
        }
        ExprKind::Fail | ExprKind::Act(_) => {}
        ExprKind::Amp(l, r) | ExprKind::OPlus(l, _, r) | ExprKind::Seq(l, r) => {
            prefix.push(0);
            occurrence_paths(l, target_var, out, prefix);
            prefix.pop();
            prefix.push(1);
            occurrence_paths(r, target_var, out, prefix);
            prefix.pop();
        }
        ExprKind::Fix(y, b) => {
            if target_var == Some(y.as_str()) {
                return; // occurrences below are bound
            }
            prefix.push(0);
            occurrence_paths(b, target_var, out, prefix);
            prefix.pop();
        }
    }
}

/// Is the occurrence at `path` unguarded, per the clause-by-clause
/// definition? Occurrences inside a left composition operand are guarded;
/// occurrences in the right operand inherit unguardedness only when the left
/// operand has an unguarded skip.
fn occ_unguarded(e: &Expr, path: &[usize]) -> bool {
    let Some((&step, rest)) = path.split_first() else {
        return true;
    };
    match (e.kind(), step) {
        (ExprKind::Amp(l, _), 0) | (ExprKind::OPlus(l, _, _), 0) => occ_unguarded(l, rest),
        (ExprKind::Amp(_, r), 1) | (ExprKind::OPlus(_, _, r), 1) => occ_unguarded(r, rest),
        (ExprKind::Seq(_, _), 0) => false,
        (ExprKind::Seq(l, r), 1) => occ_unguarded(r, rest) && skip_unguarded_brute(l),
        (ExprKind::Fix(_, b), 0) => occ_unguarded(b, rest),
        _ => unreachable!("path follows the tree"),
    }
}

fn skip_unguarded_brute(e: &Expr) -> bool {
    let mut paths = Vec::new();
    occurrence_paths(e, None, &mut paths, &mut Vec::new());
    paths.iter().any(|p| occ_unguarded(e, p))
}

fn var_sets_brute(e: &Expr) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut unguarded = BTreeSet::new();
    let mut guarded = BTreeSet::new();
    for v in e.free_vars() {
        let mut paths = Vec::new();
        occurrence_paths(e, Some(v), &mut paths, &mut Vec::new());
        assert!(!paths.is_empty(), "free variable without occurrences");
        if paths.iter().any(|p| occ_unguarded(e, p)) {
            unguarded.insert(v.clone());
        }
        if paths.iter().any(|p| !occ_unguarded(e, p)) {
            guarded.insert(v.clone());
        }
    }
    (unguarded, guarded)
}

fn check_against_oracle(e: &Expr) {
    let vs = var_sets(e);
    let (u, g) = var_sets_brute(e);
    assert_eq!(vs.unguarded, u, "unguarded sets differ on {}", print(e));
    assert_eq!(vs.guarded, g, "guarded sets differ on {}", print(e));
    assert_eq!(
        skip_unguarded(e),
        skip_unguarded_brute(e),
        "skip-unguardedness differs on {}",
        print(e)
    );
    let free: BTreeSet<String> = vs.unguarded.union(&vs.guarded).cloned().collect();
    assert_eq!(&free, e.free_vars(), "U ∪ G must be the free variables");
}

/// Stream every expression of exactly `size` nodes over letters {a, b},
/// variables {x, y}, probability 1/2, and binders fix x / fix y.
fn for_each_expr(size: usize, k: &mut dyn FnMut(Expr)) {
    if size == 0 {
        return;
    }
    if size == 1 {
        for leaf in [
            Expr::skip(),
            Expr::fail(),
            Expr::act("a"),
            Expr::act("b"),
            Expr::var("x"),
            Expr::var("y"),
        ] {
            k(leaf);
        }
        return;
    }
    for_each_expr(size - 1, &mut |b| {
        k(Expr::fix("x", b.clone()));
        k(Expr::fix("y", b));
    });
    for left_size in 1..=size - 2 {
        let right_size = size - 1 - left_size;
        for_each_expr(left_size, &mut |l| {
            for_each_expr(right_size, &mut |r| {
                k(Expr::amp(l.clone(), r.clone()));
                k(Expr::oplus(l.clone(), rat(1, 2), r.clone()));
                k(Expr::seq(l.clone(), r));
            });
        });
    }
}

#[test]
fn var_sets_matches_brute_force_oracle_exhaustively() {
    let mut checked = 0u64;
    for size in 1..=8 {
        for_each_expr(size, &mut |e| {
            check_against_oracle(&e);
            checked += 1;
        });
    }
    println!("checked {checked} expressions up to size 8");
    assert!(checked > 4_000_000);
}

// ---------------------------------------------------------------------------
// Algebraic laws of the exact kernel.

#[test]
fn amp_is_commutative_and_associative_canonically() {
    let alphabet = ab();
    let budget = Budget::default();
    let ds = findist_corpus(21, 60, 3, &alphabet);
    for chunk in ds.chunks(3) {
        let [a, b, c] = [&chunk[0], &chunk[1], &chunk[2]];
        assert_eq!(amp2(a, b, &budget).unwrap(), amp2(b, a, &budget).unwrap());
        let left = amp2(&amp2(a, b, &budget).unwrap(), c, &budget).unwrap();
        let right = amp2(a, &amp2(b, c, &budget).unwrap(), &budget).unwrap();
        assert_eq!(left, right);
    }
}

#[test]
fn mix_satisfies_skew_laws_numerically() {
    let alphabet = ab();
    let budget = Budget::default();
    let ds = findist_corpus(22, 60, 3, &alphabet);
    let mut g = Gen::new(23, alphabet);
    for chunk in ds.chunks(3) {
        let [mu, nu, sigma] = [&chunk[0], &chunk[1], &chunk[2]];
        let r = g.prob_proper();
        let s = g.prob_proper();

        // skew commutativity
        let lhs = mix(&[(r.clone(), mu), (BigRational::one() - &r, nu)], &budget).unwrap();
        let rhs = mix(&[(BigRational::one() - &r, nu), (r.clone(), mu)], &budget).unwrap();
        assert_eq!(lhs, rhs);

        // skew associativity: (mu ⊕_r nu) ⊕_s sigma = mu ⊕_rs (nu ⊕_t sigma)
        // with t = (s − rs)/(1 − rs)
        let rs = &r * &s;
        let t = (&s - &rs) / (BigRational::one() - &rs);
        let inner = mix(&[(r.clone(), mu), (BigRational::one() - &r, nu)], &budget).unwrap();
        let lhs = mix(&[(s.clone(), &inner), (BigRational::one() - &s, sigma)], &budget).unwrap();
        let inner2 = mix(&[(t.clone(), nu), (BigRational::one() - &t, sigma)], &budget).unwrap();
        let rhs = mix(&[(rs.clone(), mu), (BigRational::one() - &rs, &inner2)], &budget).unwrap();
        assert_eq!(lhs, rhs);
    }
}

/// Independent enumeration oracle for the convolution: the probability of a
/// class is the sum over all two-part decompositions of the products of the
/// parts' probabilities.
fn amp_prob_by_decomposition(mu: &FinDist, nu: &FinDist, alpha: &TruncMultiset) -> BigRational {
    // Enumerate beta ≤ alpha entrywise.
    let entries: Vec<(Word, BigUint)> = alpha.entries().map(|(w, m)| (w.clone(), m.clone())).collect();
    let mut total = BigRational::zero();
    let mut choice: Vec<u64> = vec![0; entries.len()];
    loop {
        let beta = TruncMultiset::from_entries(
            alpha.depth(),
            entries
                .iter()
                .zip(&choice)
                .map(|((w, _), k)| (w.clone(), BigUint::from(*k))),
        );
        let gamma = TruncMultiset::from_entries(
            alpha.depth(),
            entries
                .iter()
                .zip(&choice)
                .map(|((w, m), k)| (w.clone(), m - BigUint::from(*k))),
        );
        total += mu.prob_of(&beta) * nu.prob_of(&gamma);
        // next entrywise choice
        let mut i = 0;
        loop {
            if i == entries.len() {
                return total;
            }
            let max: u64 = u64::try_from(&entries[i].1).expect("small multiplicity");
            if choice[i] < max {
                choice[i] += 1;
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn convolution_matches_decomposition_sum() {
    let alphabet = ab();
    let budget = Budget::default();
    let ds = findist_corpus(31, 40, 3, &alphabet);
    for chunk in ds.chunks(2) {
        let [mu, nu] = [&chunk[0], &chunk[1]];
        let conv = amp2(mu, nu, &budget).unwrap();
        for (alpha, w) in conv.support() {
            assert_eq!(*w, amp_prob_by_decomposition(mu, nu, alpha));
        }
        // and a class outside the support has a zero decomposition sum
        let off = TruncMultiset::from_entries(
            3,
            std::iter::once((Word(vec![0, 0, 0]), BigUint::from(7u32))),
        );
        if conv.prob_of(&off).is_zero() {
            assert!(amp_prob_by_decomposition(mu, nu, &off).is_zero());
        }
    }
}

// ---------------------------------------------------------------------------
// Sugar permutation invariance.

fn seed_mix(seed: u64, i: u64) -> u64 {
    // splitmix-style scramble, enough to vary the weights
    let mut z = seed.wrapping_add(i.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z ^ (z >> 27)
}

#[test]
fn nary_sugar_is_permutation_invariant_semantically() {
    let alphabet = ab();
    let mut g = Gen::new(41, alphabet.clone());
    for round in 0..40u64 {
        let items: Vec<Expr> = (0..4).map(|_| g.closed_expr(4)).collect();
        let weights: Vec<i64> = (0..4)
            .map(|i| 1 + ((seed_mix(round, i) % 5) as i64))
            .collect();
        let total: i64 = weights.iter().sum();
        let branches: Vec<(Expr, BigRational)> = items
            .iter()
            .cloned()
            .zip(weights.iter().map(|w| rat(*w, total)))
            .collect();
        let base_oplus = Expr::oplus_many(branches.clone());
        let base_amp = Expr::amp_many(items.clone());

        // a fixed nontrivial permutation and a reversal
        for perm in [[2usize, 0, 3, 1], [3, 2, 1, 0]] {
            let p_oplus = Expr::oplus_many(perm.iter().map(|&i| branches[i].clone()).collect());
            let p_amp = Expr::amp_many(perm.iter().map(|&i| items[i].clone()).collect());
            let d1 = eval_closed(&base_oplus, 3, &alphabet).unwrap();
            let d2 = eval_closed(&p_oplus, 3, &alphabet).unwrap();
            assert!(equiv(&d1, &d2, 3), "oplus sugar not permutation invariant");
            let d1 = eval_closed(&base_amp, 3, &alphabet).unwrap();
            let d2 = eval_closed(&p_amp, 3, &alphabet).unwrap();
            assert!(equiv(&d1, &d2, 3), "amp sugar not permutation invariant");
        }
    }
}

// ---------------------------------------------------------------------------
// Printer/parser round trip and substitution, driven by proptest seeds.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_print_round_trip(seed in any::<u64>()) {
        let alphabet = ab();
        let mut g = Gen::new(seed, alphabet.clone());
        let e = g.closed_expr(12);
        let printed = print(&e);
        let back = parse(&printed, &alphabet).unwrap();
        prop_assert_eq!(&back, &e, "round trip failed via {}", printed);
    }

    #[test]
    fn substitution_free_vars(seed in any::<u64>()) {
        let alphabet = ab();
        let mut g = Gen::new(seed, alphabet.clone());
        let vars = ["u".to_string(), "v".to_string()];
        let e = g.open_expr(10, &vars);
        let d = g.open_expr(6, &vars[..1]);
        if e.free_vars().contains("u") {
            let s = substitute(&e, &d, "u");
            let mut want: BTreeSet<String> = e.free_vars().clone();
            want.remove("u");
            want.extend(d.free_vars().iter().cloned());
            prop_assert_eq!(s.free_vars(), &want);
        }
    }

    #[test]
    fn refreshed_is_alpha_equivalent(seed in any::<u64>()) {
        let alphabet = ab();
        let mut g = Gen::new(seed, alphabet.clone());
        let e = g.closed_expr(12);
        let f = e.refreshed();
        prop_assert!(alpha_eq(&e, &f));
        prop_assert_ne!(e.id(), f.id());
    }

    #[test]
    fn closed_eval_is_alpha_invariant(seed in any::<u64>()) {
        let alphabet = ab();
        let mut g = Gen::new(seed, alphabet.clone());
        let e = g.closed_expr(8);
        let f = e.refreshed();
        let de = eval_closed(&e, 3, &alphabet).unwrap();
        let df = eval_closed(&f, 3, &alphabet).unwrap();
        prop_assert_eq!(de, df);
    }
}
