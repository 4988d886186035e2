//! The automaton model: probabilistic, nondeterministic-choice, action, and
//! terminal states; validation including the productivity requirement that
//! every cycle pass an action state; the one-step coalgebraic normal form;
//! and two independent depth-`n` evaluation strategies (structural recursion
//! through the normal form, and iteration of the one-step labeling
//! transformer to its fixpoint).

use crate::semantics::{
    amp2, amp_power, mix, restrict, shift, Budget, FinDist, SemanticsError, TruncMultiset, Word,
};
use crate::syntax::Alphabet;
use num::rational::BigRational;
use num::{BigUint, One, Zero};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// States are referred to by name, matching the JSON interchange format.
pub type StateId = String;

/// The label and transition of one state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateLabel {
    /// Nondeterministic choice: fork one agent per occurrence in the
    /// successor multiset.
    Amp(BTreeMap<StateId, BigUint>),
    /// Probabilistic choice over successors; weights are positive and sum
    /// to one.
    OPlus(BTreeMap<StateId, BigRational>),
    /// Action: emit the letter and move to the successor.
    Act(String, StateId),
    Skip,
    Fail,
}

/// A labeled state graph with a designated start state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Automaton {
    pub alphabet: Alphabet,
    pub start: StateId,
    pub states: BTreeMap<StateId, StateLabel>,
}

#[derive(Debug, Error)]
pub enum AutomatonError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("productivity violation: cycle without an action state through {cycle:?}")]
    ProductivityViolation { cycle: Vec<StateId> },
    #[error("labeling transformer failed to stabilize within {0} iterations")]
    TauNotStabilized(usize),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

pub type Result<T> = std::result::Result<T, AutomatonError>;

impl Automaton {
    pub fn state(&self, s: &str) -> Result<&StateLabel> {
        self.states
            .get(s)
            .ok_or_else(|| AutomatonError::Shape(format!("unknown state {s:?}")))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Check the shape invariants and productivity: after dropping the outgoing
/// edges of action states, the transition graph must be acyclic.
pub fn validate_automaton(aut: &Automaton) -> Result<()> {
    if !aut.states.contains_key(&aut.start) {
        return Err(AutomatonError::Shape(format!(
            "start state {:?} does not exist",
            aut.start
        )));
    }
    for (s, label) in &aut.states {
        match label {
            StateLabel::Skip | StateLabel::Fail => {}
            StateLabel::Act(a, t) => {
                if !aut.alphabet.contains(a) {
                    return Err(AutomatonError::Shape(format!(
                        "state {s:?} acts on {a:?}, not an alphabet letter"
                    )));
                }
                aut.state(t)?;
            }
            StateLabel::Amp(m) => {
                for (t, mult) in m {
                    aut.state(t)?;
                    if mult.is_zero() {
                        return Err(AutomatonError::Shape(format!(
                            "state {s:?} has zero multiplicity for successor {t:?}"
                        )));
                    }
                }
            }
            StateLabel::OPlus(d) => {
                if d.is_empty() {
                    return Err(AutomatonError::Shape(format!(
                        "probabilistic state {s:?} has no successors"
                    )));
                }
                let mut sum = BigRational::zero();
                for (t, r) in d {
                    aut.state(t)?;
                    if r <= &BigRational::zero() {
                        return Err(AutomatonError::Shape(format!(
                            "probabilistic state {s:?} has nonpositive weight {r} for {t:?}"
                        )));
                    }
                    sum += r;
                }
                if !sum.is_one() {
                    return Err(AutomatonError::Shape(format!(
                        "weights of probabilistic state {s:?} sum to {sum}, expected 1"
                    )));
                }
            }
        }
    }
    check_productive(aut)
}

fn non_action_successors(label: &StateLabel) -> Vec<&StateId> {
    match label {
        StateLabel::Amp(m) => m.keys().collect(),
        StateLabel::OPlus(d) => d.keys().collect(),
        StateLabel::Act(..) | StateLabel::Skip | StateLabel::Fail => Vec::new(),
    }
}

fn check_productive(aut: &Automaton) -> Result<()> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let mut marks: BTreeMap<&StateId, Mark> =
        aut.states.keys().map(|s| (s, Mark::White)).collect();
    // Iterative DFS over choice/probabilistic edges, keeping the path for
    // the cycle witness.
    for root in aut.states.keys() {
        if marks[root] != Mark::White {
            continue;
        }
        let mut stack: Vec<(&StateId, usize)> = vec![(root, 0)];
        let mut path: Vec<&StateId> = Vec::new();
        while let Some((s, next_child)) = stack.pop() {
            if next_child == 0 {
                marks.insert(s, Mark::Gray);
                path.push(s);
            }
            let succs = non_action_successors(&aut.states[s]);
            if next_child < succs.len() {
                stack.push((s, next_child + 1));
                let t = succs[next_child];
                match marks[t] {
                    Mark::Gray => {
                        let start = path.iter().position(|p| *p == t).unwrap_or(0);
                        let mut cycle: Vec<StateId> =
                            path[start..].iter().map(|p| (*p).clone()).collect();
                        cycle.push(t.clone());
                        return Err(AutomatonError::ProductivityViolation { cycle });
                    }
                    Mark::White => stack.push((t, 0)),
                    Mark::Black => {}
                }
            } else {
                marks.insert(s, Mark::Black);
                path.pop();
            }
        }
    }
    Ok(())
}

/// One outcome of the coalgebraic one-step normal form: the multiplicity with
/// which the empty word is accepted, and per letter the multiset of successor
/// states. Every alphabet letter has an entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct OneStepOutcome {
    pub eps_mult: BigUint,
    pub succ: BTreeMap<String, BTreeMap<StateId, BigUint>>,
}

impl OneStepOutcome {
    fn unit(alphabet: &Alphabet, eps_mult: BigUint) -> Self {
        OneStepOutcome {
            eps_mult,
            succ: alphabet
                .names()
                .map(|a| (a.to_string(), BTreeMap::new()))
                .collect(),
        }
    }
}

/// A finite distribution over [`OneStepOutcome`]s, canonically sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneStep {
    pub support: Vec<(OneStepOutcome, BigRational)>,
}

impl OneStep {
    fn dirac(o: OneStepOutcome) -> Self {
        OneStep {
            support: vec![(o, BigRational::one())],
        }
    }

    /// Marginal distribution of the ε-multiplicity.
    pub fn eps_marginal(&self) -> BTreeMap<BigUint, BigRational> {
        let mut out: BTreeMap<BigUint, BigRational> = BTreeMap::new();
        for (o, w) in &self.support {
            *out.entry(o.eps_mult.clone())
                .or_insert_with(BigRational::zero) += w;
        }
        out
    }

    /// Marginal distribution of the successor multiset for one letter.
    pub fn letter_marginal(&self, a: &str) -> BTreeMap<BTreeMap<StateId, BigUint>, BigRational> {
        let mut out: BTreeMap<BTreeMap<StateId, BigUint>, BigRational> = BTreeMap::new();
        for (o, w) in &self.support {
            let m = o.succ.get(a).cloned().unwrap_or_default();
            *out.entry(m).or_insert_with(BigRational::zero) += w;
        }
        out
    }
}

fn onestep_merge(
    support: BTreeMap<OneStepOutcome, BigRational>,
    budget: &Budget,
) -> Result<OneStep> {
    if support.len() > budget.0 {
        return Err(AutomatonError::Semantics(SemanticsError::SupportExplosion {
            size: support.len(),
            budget: budget.0,
        }));
    }
    Ok(OneStep {
        support: support.into_iter().filter(|(_, w)| !w.is_zero()).collect(),
    })
}

/// Independent convolution of two one-step distributions: ε-multiplicities
/// add and successor multisets union letterwise.
fn onestep_amp(a: &OneStep, b: &OneStep, budget: &Budget) -> Result<OneStep> {
    let mut out: BTreeMap<OneStepOutcome, BigRational> = BTreeMap::new();
    for (o1, w1) in &a.support {
        for (o2, w2) in &b.support {
            let mut succ = o1.succ.clone();
            for (letter, ms) in &o2.succ {
                let entry = succ.entry(letter.clone()).or_default();
                for (t, m) in ms {
                    *entry.entry(t.clone()).or_insert_with(BigUint::zero) += m;
                }
            }
            let merged = OneStepOutcome {
                eps_mult: &o1.eps_mult + &o2.eps_mult,
                succ,
            };
            *out.entry(merged).or_insert_with(BigRational::zero) += w1 * w2;
        }
    }
    onestep_merge(out, budget)
}

fn onestep_power(
    alphabet: &Alphabet,
    d: &OneStep,
    k: &BigUint,
    budget: &Budget,
) -> Result<OneStep> {
    let mut acc = OneStep::dirac(OneStepOutcome::unit(alphabet, BigUint::zero()));
    let mut base = d.clone();
    let mut k = k.clone();
    let two = BigUint::from(2u32);
    while !k.is_zero() {
        if (&k % &two).is_one() {
            acc = onestep_amp(&acc, &base, budget)?;
        }
        k /= &two;
        if !k.is_zero() {
            base = onestep_amp(&base, &base, budget)?;
        }
    }
    Ok(acc)
}

/// Evaluator over a validated automaton, memoizing both the one-step normal
/// form per state and the depth-indexed values.
pub struct AutomatonEvaluator<'a> {
    aut: &'a Automaton,
    budget: Budget,
    unfold_memo: HashMap<StateId, OneStep>,
    value_memo: HashMap<(StateId, usize), FinDist>,
}

impl<'a> AutomatonEvaluator<'a> {
    pub fn new(aut: &'a Automaton) -> Self {
        AutomatonEvaluator::with_budget(aut, Budget::default())
    }

    pub fn with_budget(aut: &'a Automaton, budget: Budget) -> Self {
        AutomatonEvaluator {
            aut,
            budget,
            unfold_memo: HashMap::new(),
            value_memo: HashMap::new(),
        }
    }

    /// One-step normal form of a state: distributions are pushed outside
    /// choices by the distributive law, choices consolidate letterwise, and
    /// action states are the recursion leaves. Terminates because every
    /// cycle passes an action state.
    pub fn unfold(&mut self, s: &str) -> Result<OneStep> {
        if let Some(v) = self.unfold_memo.get(s) {
            return Ok(v.clone());
        }
        let alphabet = &self.aut.alphabet;
        let v = match self.aut.state(s)? {
            StateLabel::Skip => OneStep::dirac(OneStepOutcome::unit(alphabet, BigUint::one())),
            StateLabel::Fail => OneStep::dirac(OneStepOutcome::unit(alphabet, BigUint::zero())),
            StateLabel::Act(a, t) => {
                let mut o = OneStepOutcome::unit(alphabet, BigUint::zero());
                o.succ
                    .get_mut(a)
                    .expect("validated letter")
                    .insert(t.clone(), BigUint::one());
                OneStep::dirac(o)
            }
            StateLabel::OPlus(d) => {
                let d = d.clone();
                let mut out: BTreeMap<OneStepOutcome, BigRational> = BTreeMap::new();
                for (t, r) in &d {
                    let child = self.unfold(t)?;
                    for (o, w) in child.support {
                        *out.entry(o).or_insert_with(BigRational::zero) += r * w;
                    }
                }
                onestep_merge(out, &self.budget)?
            }
            StateLabel::Amp(m) => {
                let m = m.clone();
                let mut acc = OneStep::dirac(OneStepOutcome::unit(alphabet, BigUint::zero()));
                for (t, mult) in &m {
                    let child = self.unfold(t)?;
                    let powered = onestep_power(alphabet, &child, mult, &self.budget)?;
                    acc = onestep_amp(&acc, &powered, &self.budget)?;
                }
                acc
            }
        };
        self.unfold_memo.insert(s.to_string(), v.clone());
        Ok(v)
    }

    /// Depth-`n` fragment of the behavior of state `s`, by recursion on `n`
    /// through the one-step normal form.
    pub fn eval(&mut self, s: &str, n: usize) -> Result<FinDist> {
        let key = (s.to_string(), n);
        if let Some(v) = self.value_memo.get(&key) {
            return Ok(v.clone());
        }
        let os = self.unfold(s)?;
        let mut branches: Vec<(BigRational, FinDist)> = Vec::with_capacity(os.support.len());
        for (outcome, w) in &os.support {
            let mut d = FinDist::dirac(TruncMultiset::from_entries(
                n,
                std::iter::once((Word::empty(), outcome.eps_mult.clone())),
            ));
            if n > 0 {
                for (letter, multiset) in &outcome.succ {
                    let lid = self.aut.alphabet.index(letter).expect("validated letter");
                    for (t, mult) in multiset {
                        let child = self.eval(t, n - 1)?;
                        let shifted = shift(&Word::letter(lid), &child, n);
                        let powered = amp_power(&shifted, mult, &self.budget)?;
                        d = amp2(&d, &powered, &self.budget)?;
                    }
                }
            }
            branches.push((w.clone(), d));
        }
        let borrowed: Vec<(BigRational, &FinDist)> =
            branches.iter().map(|(w, d)| (w.clone(), d)).collect();
        let v = mix(&borrowed, &self.budget)?;
        self.value_memo.insert(key, v.clone());
        Ok(v)
    }
}

/// One-step normal form of a state (validated automata only).
pub fn coalg_unfold(aut: &Automaton, s: &str) -> Result<OneStep> {
    coalg_unfold_with_budget(aut, s, Budget::default())
}

pub fn coalg_unfold_with_budget(aut: &Automaton, s: &str, budget: Budget) -> Result<OneStep> {
    AutomatonEvaluator::with_budget(aut, budget).unfold(s)
}

/// Depth-`n` behavior of a state, by the normal-form recursion on `n`.
pub fn eval_state(aut: &Automaton, s: &str, n: usize) -> Result<FinDist> {
    AutomatonEvaluator::new(aut).eval(s, n)
}

pub fn eval_state_with_budget(aut: &Automaton, s: &str, n: usize, budget: Budget) -> Result<FinDist> {
    AutomatonEvaluator::with_budget(aut, budget).eval(s, n)
}

/// One application of the semantic labeling transformer, carrying depth-`n`
/// fragments.
pub fn tau_step(
    aut: &Automaton,
    labeling: &BTreeMap<StateId, FinDist>,
    n: usize,
    budget: &Budget,
) -> Result<BTreeMap<StateId, FinDist>> {
    let mut out = BTreeMap::new();
    for (s, label) in &aut.states {
        let v = match label {
            StateLabel::Skip => FinDist::dirac_epsilon(n),
            StateLabel::Fail => FinDist::dirac_empty(n),
            StateLabel::Act(a, t) => {
                let lid = aut.alphabet.index(a).expect("validated letter");
                shift(&Word::letter(lid), &labeling[t], n)
            }
            StateLabel::OPlus(d) => {
                let branches: Vec<(BigRational, &FinDist)> =
                    d.iter().map(|(t, r)| (r.clone(), &labeling[t])).collect();
                mix(&branches, budget)?
            }
            StateLabel::Amp(m) => {
                let mut acc = FinDist::dirac_empty(n);
                for (t, mult) in m {
                    let powered = amp_power(&labeling[t], mult, budget)?;
                    acc = amp2(&acc, &powered, budget)?;
                }
                acc
            }
        };
        out.insert(s.clone(), v);
    }
    Ok(out)
}

/// The `k`-th iterate of the labeling transformer starting from the
/// all-empty labeling.
pub fn tau_iterate(
    aut: &Automaton,
    n: usize,
    k: usize,
    budget: &Budget,
) -> Result<BTreeMap<StateId, FinDist>> {
    let mut labeling: BTreeMap<StateId, FinDist> = aut
        .states
        .keys()
        .map(|s| (s.clone(), FinDist::dirac_empty(n)))
        .collect();
    for _ in 0..k {
        labeling = tau_step(aut, &labeling, n, budget)?;
    }
    Ok(labeling)
}

/// Independent evaluation strategy: iterate the labeling transformer from
/// the all-empty labeling until it stabilizes, which eventual contraction
/// guarantees within `(n+2)·|S|` steps. The result must agree with
/// [`eval_state`] by uniqueness of the fixpoint.
pub fn eval_state_tau(aut: &Automaton, s: &str, n: usize) -> Result<FinDist> {
    eval_state_tau_with_budget(aut, s, n, Budget::default())
}

pub fn eval_state_tau_with_budget(
    aut: &Automaton,
    s: &str,
    n: usize,
    budget: Budget,
) -> Result<FinDist> {
    let bound = (n + 2) * aut.states.len().max(1);
    let mut labeling: BTreeMap<StateId, FinDist> = aut
        .states
        .keys()
        .map(|t| (t.clone(), FinDist::dirac_empty(n)))
        .collect();
    for _ in 0..bound {
        let next = tau_step(aut, &labeling, n, &budget)?;
        if next == labeling {
            return Ok(labeling
                .remove(s)
                .expect("state exists in validated automaton"));
        }
        labeling = next;
    }
    // One extra step distinguishes "converged on the last allowed
    // iteration" from a genuine failure to stabilize.
    let next = tau_step(aut, &labeling, n, &budget)?;
    if next == labeling {
        Ok(labeling.remove(s).expect("state exists"))
    } else {
        Err(AutomatonError::TauNotStabilized(bound))
    }
}

/// Restriction coherence helper: the depth-`m` value read off a depth-`n`
/// evaluation.
pub fn eval_state_restricted(aut: &Automaton, s: &str, n: usize, m: usize) -> Result<FinDist> {
    Ok(restrict(&eval_state(aut, s, n)?, m))
}

#[cfg(test)]
pub(crate) mod test_automata {
    use super::*;

    pub fn amp_multiset(items: &[(&str, u64)]) -> BTreeMap<StateId, BigUint> {
        items
            .iter()
            .map(|(s, m)| (s.to_string(), BigUint::from(*m)))
            .collect()
    }

    pub fn oplus_dist(items: &[(&str, (i64, i64))]) -> BTreeMap<StateId, BigRational> {
        items
            .iter()
            .map(|(s, (p, q))| {
                (
                    s.to_string(),
                    BigRational::new(BigInt::from(*p), BigInt::from(*q)),
                )
            })
            .collect()
    }

    use num::bigint::BigInt;

    /// The three-state loop accepting every prefix chain of `a`s once.
    pub fn astar() -> Automaton {
        let mut states = BTreeMap::new();
        states.insert(
            "s".to_string(),
            StateLabel::Amp(amp_multiset(&[("skp", 1), ("act", 1)])),
        );
        states.insert("skp".to_string(), StateLabel::Skip);
        states.insert(
            "act".to_string(),
            StateLabel::Act("a".to_string(), "s".to_string()),
        );
        Automaton {
            alphabet: Alphabet::of(&["a"]),
            start: "s".to_string(),
            states,
        }
    }

    /// Two nested loops; multiplicities double with each extra letter.
    pub fn aastarstar() -> Automaton {
        let mut states = BTreeMap::new();
        states.insert(
            "s".to_string(),
            StateLabel::Amp(amp_multiset(&[("skp", 1), ("act1", 1)])),
        );
        states.insert("skp".to_string(), StateLabel::Skip);
        states.insert(
            "act1".to_string(),
            StateLabel::Act("a".to_string(), "t".to_string()),
        );
        states.insert(
            "t".to_string(),
            StateLabel::Amp(amp_multiset(&[("s", 1), ("act2", 1)])),
        );
        states.insert(
            "act2".to_string(),
            StateLabel::Act("a".to_string(), "t".to_string()),
        );
        Automaton {
            alphabet: Alphabet::of(&["a"]),
            start: "s".to_string(),
            states,
        }
    }

    /// The uniform coin-flip loop over two letters.
    pub fn coin_star() -> Automaton {
        let mut states = BTreeMap::new();
        states.insert(
            "s".to_string(),
            StateLabel::Amp(amp_multiset(&[("skp", 1), ("t", 1)])),
        );
        states.insert("skp".to_string(), StateLabel::Skip);
        states.insert(
            "t".to_string(),
            StateLabel::OPlus(oplus_dist(&[("acta", (1, 2)), ("actb", (1, 2))])),
        );
        states.insert(
            "acta".to_string(),
            StateLabel::Act("a".to_string(), "s".to_string()),
        );
        states.insert(
            "actb".to_string(),
            StateLabel::Act("b".to_string(), "s".to_string()),
        );
        Automaton {
            alphabet: Alphabet::of(&["a", "b"]),
            start: "s".to_string(),
            states,
        }
    }

    /// The four-branch probabilistic fragment over letters a, b with
    /// parameters p, q, r (remaining mass on the fourth branch). The leaf
    /// states t, u, v are accepting.
    pub fn fig1(p: (i64, i64), q: (i64, i64), r: (i64, i64)) -> Automaton {
        let mut states = BTreeMap::new();
        let rest = (
            p.1 * q.1 * r.1 - p.0 * q.1 * r.1 - q.0 * p.1 * r.1 - r.0 * p.1 * q.1,
            p.1 * q.1 * r.1,
        );
        states.insert(
            "s".to_string(),
            StateLabel::OPlus(oplus_dist(&[
                ("b1", p),
                ("b2", q),
                ("b3", r),
                ("b4", rest),
            ])),
        );
        states.insert(
            "b1".to_string(),
            StateLabel::Amp(amp_multiset(&[("skp", 2), ("a_s", 1), ("b_t", 1)])),
        );
        states.insert(
            "b2".to_string(),
            StateLabel::Amp(amp_multiset(&[("skp", 1), ("a_u", 1), ("a_v", 1)])),
        );
        states.insert(
            "b3".to_string(),
            StateLabel::Amp(amp_multiset(&[("skp", 2), ("a_s", 1), ("b_t", 2)])),
        );
        states.insert(
            "b4".to_string(),
            StateLabel::Amp(amp_multiset(&[("a_s", 2), ("a_t", 1), ("b_t", 1)])),
        );
        states.insert("skp".to_string(), StateLabel::Skip);
        states.insert(
            "a_s".to_string(),
            StateLabel::Act("a".to_string(), "s".to_string()),
        );
        states.insert(
            "a_t".to_string(),
            StateLabel::Act("a".to_string(), "t".to_string()),
        );
        states.insert(
            "a_u".to_string(),
            StateLabel::Act("a".to_string(), "u".to_string()),
        );
        states.insert(
            "a_v".to_string(),
            StateLabel::Act("a".to_string(), "v".to_string()),
        );
        states.insert(
            "b_t".to_string(),
            StateLabel::Act("b".to_string(), "t".to_string()),
        );
        states.insert("t".to_string(), StateLabel::Skip);
        states.insert("u".to_string(), StateLabel::Skip);
        states.insert("v".to_string(), StateLabel::Skip);
        Automaton {
            alphabet: Alphabet::of(&["a", "b"]),
            start: "s".to_string(),
            states,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_automata::*;
    use super::*;
    use num::bigint::BigInt;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn nat(n: u64) -> BigUint {
        BigUint::from(n)
    }

    fn a_chain(depth: usize, counts: &[u64]) -> TruncMultiset {
        TruncMultiset::from_entries(
            depth,
            counts
                .iter()
                .enumerate()
                .map(|(i, m)| (Word(vec![0; i]), nat(*m))),
        )
    }

    #[test]
    fn validation() {
        assert!(validate_automaton(&astar()).is_ok());
        assert!(validate_automaton(&aastarstar()).is_ok());
        assert!(validate_automaton(&coin_star()).is_ok());
        assert!(validate_automaton(&fig1((1, 4), (1, 4), (1, 4))).is_ok());

        // amp self-loop without an action
        let mut states = BTreeMap::new();
        states.insert("s".to_string(), StateLabel::Amp(amp_multiset(&[("s", 1)])));
        let bad = Automaton {
            alphabet: Alphabet::of(&["a"]),
            start: "s".to_string(),
            states,
        };
        match validate_automaton(&bad) {
            Err(AutomatonError::ProductivityViolation { cycle }) => {
                assert!(cycle.contains(&"s".to_string()))
            }
            other => panic!("expected productivity violation, got {other:?}"),
        }

        // weights not summing to one
        let mut states = BTreeMap::new();
        states.insert(
            "s".to_string(),
            StateLabel::OPlus(oplus_dist(&[("t", (1, 2)), ("u", (1, 3))])),
        );
        states.insert("t".to_string(), StateLabel::Skip);
        states.insert("u".to_string(), StateLabel::Fail);
        let bad = Automaton {
            alphabet: Alphabet::of(&["a"]),
            start: "s".to_string(),
            states,
        };
        assert!(matches!(
            validate_automaton(&bad),
            Err(AutomatonError::Shape(_))
        ));
    }

    #[test]
    fn unfold_terminal_states() {
        let aut = astar();
        let mut ev = AutomatonEvaluator::new(&aut);
        let os = ev.unfold("skp").unwrap();
        assert_eq!(os.support.len(), 1);
        assert_eq!(os.support[0].0.eps_mult, nat(1));
        assert!(os.support[0].0.succ["a"].is_empty());
    }

    #[test]
    fn unfold_fig1_marginals() {
        // p = q = r = 1/4
        let aut = fig1((1, 4), (1, 4), (1, 4));
        let os = coalg_unfold(&aut, "s").unwrap();
        let eps = os.eps_marginal();
        assert_eq!(eps[&nat(2)], rat(1, 2));
        assert_eq!(eps[&nat(1)], rat(1, 4));
        assert_eq!(eps[&nat(0)], rat(1, 4));

        let ma = os.letter_marginal("a");
        assert_eq!(ma[&amp_multiset(&[("s", 1)])], rat(1, 2));
        assert_eq!(ma[&amp_multiset(&[("u", 1), ("v", 1)])], rat(1, 4));
        assert_eq!(ma[&amp_multiset(&[("s", 2), ("t", 1)])], rat(1, 4));

        let mb = os.letter_marginal("b");
        assert_eq!(mb[&amp_multiset(&[("t", 1)])], rat(1, 2));
        assert_eq!(mb[&amp_multiset(&[("t", 2)])], rat(1, 4));
    }

    #[test]
    fn eval_state_golden() {
        let d = eval_state(&astar(), "s", 2).unwrap();
        assert_eq!(d, FinDist::dirac(a_chain(2, &[1, 1, 1])));

        let d = eval_state(&aastarstar(), "s", 3).unwrap();
        assert_eq!(d, FinDist::dirac(a_chain(3, &[1, 1, 2, 4])));

        let d = eval_state(&coin_star(), "s", 1).unwrap();
        assert_eq!(d.support_len(), 2);
        for (ms, w) in d.support() {
            assert_eq!(*w, rat(1, 2));
            assert_eq!(ms.multiplicity(&Word::empty()), nat(1));
        }
    }

    #[test]
    fn tau_agrees_with_normal_form() {
        for aut in [astar(), aastarstar(), coin_star(), fig1((1, 4), (1, 4), (1, 4))] {
            for n in 0..=3 {
                let via_nf = eval_state(&aut, "s", n).unwrap();
                let via_tau = eval_state_tau(&aut, "s", n).unwrap();
                assert_eq!(via_nf, via_tau, "disagreement at depth {n}");
            }
        }
    }

    #[test]
    fn tau_stabilizes_within_bound() {
        let budget = Budget::default();
        for aut in [astar(), coin_star()] {
            let n = 3;
            let k = (n + 2) * aut.states.len();
            let lk = tau_iterate(&aut, n, k, &budget).unwrap();
            let lk1 = tau_iterate(&aut, n, k + 1, &budget).unwrap();
            assert_eq!(lk, lk1);
        }
    }

    #[test]
    fn depth_zero_matches_eps_marginal() {
        let aut = fig1((1, 6), (1, 3), (1, 4));
        let os = coalg_unfold(&aut, "s").unwrap();
        let d = eval_state(&aut, "s", 0).unwrap();
        for (eps, w) in os.eps_marginal() {
            let ms = TruncMultiset::from_entries(0, std::iter::once((Word::empty(), eps)));
            assert_eq!(d.prob_of(&ms), w);
        }
    }

    #[test]
    fn restriction_coherence() {
        let aut = coin_star();
        let d3 = eval_state(&aut, "s", 3).unwrap();
        for m in 0..=3 {
            assert_eq!(restrict(&d3, m), eval_state(&aut, "s", m).unwrap());
        }
    }

    // Every path of length |S| in a validated automaton visits an action
    // state; this is what bounds the unfold recursion.
    #[test]
    fn paths_of_state_count_length_visit_an_action() {
        fn walk(aut: &Automaton, s: &StateId, steps: usize, seen_action: bool) -> bool {
            if seen_action {
                return true;
            }
            if steps == 0 {
                return false;
            }
            let label = &aut.states[s];
            let is_action = matches!(label, StateLabel::Act(..));
            let succs: Vec<&StateId> = match label {
                StateLabel::Amp(m) => m.keys().collect(),
                StateLabel::OPlus(d) => d.keys().collect(),
                StateLabel::Act(_, t) => vec![t],
                StateLabel::Skip | StateLabel::Fail => return true, // path ends
            };
            succs
                .iter()
                .all(|t| walk(aut, t, steps - 1, is_action))
        }
        for aut in [astar(), aastarstar(), coin_star(), fig1((1, 4), (1, 4), (1, 4))] {
            let k = aut.states.len();
            for s in aut.states.keys() {
                assert!(walk(&aut, s, k, false), "path from {s} misses actions");
            }
        }
    }
}
