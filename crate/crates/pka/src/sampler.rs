//! Agent-based operational semantics with Monte-Carlo estimation, used to
//! cross-validate the exact evaluators.
//!
//! A run simulates the enumerator view: agents fork at nondeterministic
//! choices, sample exact rational coins at probabilistic choices, append
//! letters at actions, and emit their accumulated string on termination.
//! Agents whose string exceeds the observation depth are discarded, which is
//! what makes runs finite.
//!
//! Randomness is counter-based: trial `i` of seed `s` uses stream `i` of a
//! ChaCha8 generator seeded with `s`, and every fork derives fresh child
//! generators from the parent's next draws. Outcomes therefore depend only
//! on `(seed, trial, fork position)`, not on scheduling order.

use crate::automaton::{Automaton, StateLabel};
use crate::semantics::{FinDist, TruncMultiset, Word};
use crate::syntax::{Alphabet, Expr, ExprKind};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{BigUint, One, Signed, Zero};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("agent population exceeded {0} during one run")]
    AgentExplosion(usize),
    #[error("unbound variable {0} during sampling")]
    UnboundVariable(String),
    #[error("depth mismatch: empirical at {emp}, exact at {exact}")]
    DepthMismatch { emp: usize, exact: usize },
}

pub type Result<T> = std::result::Result<T, SamplerError>;

/// Hard cap on live-plus-forked agents in one run.
const AGENT_CAP: usize = 1_000_000;

/// What to sample: an expression (with its alphabet) or an automaton.
#[derive(Clone, Copy)]
pub enum Target<'a> {
    Expr(&'a Expr, &'a Alphabet),
    Automaton(&'a Automaton),
}

impl<'a> Target<'a> {
    pub fn alphabet(&self) -> &'a Alphabet {
        match self {
            Target::Expr(_, alphabet) => alphabet,
            Target::Automaton(aut) => &aut.alphabet,
        }
    }
}

/// Agent scheduling order. The output multiset is identical for both since
/// agent randomness is derived positionally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    BreadthFirst,
    DepthFirst,
}

/// Exact Bernoulli(`num`/`den`) draw by rejection sampling uniform integers
/// below `den`.
fn bernoulli(rng: &mut ChaCha8Rng, num: &BigUint, den: &BigUint) -> bool {
    uniform_below(rng, den) < *num
}

/// Uniform `BigUint` in `[0, bound)`, exact, by rejection on the top block.
fn uniform_below(rng: &mut ChaCha8Rng, bound: &BigUint) -> BigUint {
    debug_assert!(!bound.is_zero());
    let bits = bound.bits();
    let nbytes = bits.div_ceil(8) as usize;
    let top_mask: u8 = if bits.is_multiple_of(8) {
        0xff
    } else {
        (1u8 << (bits % 8)) - 1
    };
    loop {
        let mut bytes = vec![0u8; nbytes];
        rng.fill_bytes(&mut bytes);
        bytes[nbytes - 1] &= top_mask;
        let x = BigUint::from_bytes_le(&bytes);
        if &x < bound {
            return x;
        }
    }
}

/// Sample an index from exact rational weights that sum to one.
fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[BigRational]) -> usize {
    let den = weights
        .iter()
        .fold(BigUint::one(), |acc, w| num::integer::lcm(acc, w.denom().magnitude().clone()));
    let scaled: Vec<BigUint> = weights
        .iter()
        .map(|w| {
            let scale = &den / w.denom().magnitude();
            w.numer().magnitude() * scale
        })
        .collect();
    let mut u = uniform_below(rng, &den);
    for (i, s) in scaled.iter().enumerate() {
        if &u < s {
            return i;
        }
        u -= s;
    }
    weights.len() - 1
}

fn fork_rng(rng: &mut ChaCha8Rng) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng.next_u64())
}

// Persistent environments and continuation stacks let forked agents share
// structure.
#[derive(Clone)]
struct SEnv(Option<Rc<SEnvNode>>);

struct SEnvNode {
    name: String,
    fix: Expr,
    env: SEnv,
    rest: SEnv,
}

impl SEnv {
    fn empty() -> SEnv {
        SEnv(None)
    }
    fn bind(&self, name: String, fix: Expr, env: SEnv) -> SEnv {
        SEnv(Some(Rc::new(SEnvNode {
            name,
            fix,
            env,
            rest: self.clone(),
        })))
    }
    fn lookup(&self, name: &str) -> Option<(Expr, SEnv)> {
        let mut cur = self;
        while let Some(n) = &cur.0 {
            if n.name == name {
                return Some((n.fix.clone(), n.env.clone()));
            }
            cur = &n.rest;
        }
        None
    }
}

#[derive(Clone)]
struct Conts(Option<Rc<(Expr, SEnv, Conts)>>);

impl Conts {
    fn empty() -> Conts {
        Conts(None)
    }
    fn push(&self, e: Expr, env: SEnv) -> Conts {
        Conts(Some(Rc::new((e, env, self.clone()))))
    }
}

struct ExprAgent {
    node: Expr,
    env: SEnv,
    conts: Conts,
    word: Word,
    rng: ChaCha8Rng,
}

fn run_expr(
    e: &Expr,
    alphabet: &Alphabet,
    n: usize,
    rng: ChaCha8Rng,
    scheduler: Scheduler,
) -> Result<TruncMultiset> {
    let mut emitted: BTreeMap<Word, BigUint> = BTreeMap::new();
    let mut queue: VecDeque<ExprAgent> = VecDeque::new();
    let mut spawned = 1usize;
    queue.push_back(ExprAgent {
        node: e.clone(),
        env: SEnv::empty(),
        conts: Conts::empty(),
        word: Word::empty(),
        rng,
    });
    while let Some(mut agent) = match scheduler {
        Scheduler::BreadthFirst => queue.pop_front(),
        Scheduler::DepthFirst => queue.pop_back(),
    } {
        // One agent steps until it terminates, forks, or dies.
        loop {
            match agent.node.kind() {
                ExprKind::Skip => {
                    match agent.conts.0.take() {
                        None => {
                            *emitted
                                .entry(agent.word)
                                .or_insert_with(BigUint::zero) += BigUint::one();
                        }
                        Some(frame) => {
                            let (e, env, rest) = (*frame).clone();
                            agent.node = e;
                            agent.env = env;
                            agent.conts = rest;
                            continue;
                        }
                    }
                    break;
                }
                ExprKind::Fail => break,
                ExprKind::Act(a) => {
                    let lid = alphabet
                        .index(a)
                        .expect("validated expression letter");
                    agent.word.0.push(lid);
                    if agent.word.len() > n {
                        break; // invisible at this depth
                    }
                    agent.node = Expr::skip();
                    continue;
                }
                ExprKind::Var(x) => {
                    let (fix, env) = agent
                        .env
                        .lookup(x)
                        .ok_or_else(|| SamplerError::UnboundVariable(x.clone()))?;
                    agent.node = fix;
                    agent.env = env;
                    continue;
                }
                ExprKind::Fix(x, body) => {
                    let env2 =
                        agent
                            .env
                            .bind(x.clone(), agent.node.clone(), agent.env.clone());
                    agent.node = body.clone();
                    agent.env = env2;
                    continue;
                }
                ExprKind::Seq(l, r) => {
                    agent.conts = agent.conts.push(r.clone(), agent.env.clone());
                    agent.node = l.clone();
                    agent.env = SEnv::empty();
                    continue;
                }
                ExprKind::OPlus(l, p, r) => {
                    let heads = bernoulli(
                        &mut agent.rng,
                        p.numer().magnitude(),
                        p.denom().magnitude(),
                    );
                    agent.node = if heads { l.clone() } else { r.clone() };
                    continue;
                }
                ExprKind::Amp(l, r) => {
                    spawned += 1;
                    if spawned > AGENT_CAP {
                        return Err(SamplerError::AgentExplosion(AGENT_CAP));
                    }
                    let left_rng = fork_rng(&mut agent.rng);
                    let right_rng = fork_rng(&mut agent.rng);
                    queue.push_back(ExprAgent {
                        node: r.clone(),
                        env: agent.env.clone(),
                        conts: agent.conts.clone(),
                        word: agent.word.clone(),
                        rng: right_rng,
                    });
                    agent.node = l.clone();
                    agent.rng = left_rng;
                    continue;
                }
            }
        }
    }
    Ok(TruncMultiset::from_entries(n, emitted))
}

struct AutAgent {
    state: String,
    word: Word,
    rng: ChaCha8Rng,
}

fn run_automaton(
    aut: &Automaton,
    n: usize,
    rng: ChaCha8Rng,
    scheduler: Scheduler,
) -> Result<TruncMultiset> {
    let mut emitted: BTreeMap<Word, BigUint> = BTreeMap::new();
    let mut queue: VecDeque<AutAgent> = VecDeque::new();
    let mut spawned = 1usize;
    queue.push_back(AutAgent {
        state: aut.start.clone(),
        word: Word::empty(),
        rng,
    });
    while let Some(mut agent) = match scheduler {
        Scheduler::BreadthFirst => queue.pop_front(),
        Scheduler::DepthFirst => queue.pop_back(),
    } {
        loop {
            match &aut.states[&agent.state] {
                StateLabel::Skip => {
                    *emitted
                        .entry(agent.word)
                        .or_insert_with(BigUint::zero) += BigUint::one();
                    break;
                }
                StateLabel::Fail => break,
                StateLabel::Act(a, t) => {
                    let lid = aut.alphabet.index(a).expect("validated letter");
                    agent.word.0.push(lid);
                    if agent.word.len() > n {
                        break;
                    }
                    agent.state = t.clone();
                    continue;
                }
                StateLabel::OPlus(d) => {
                    let entries: Vec<(&String, &BigRational)> = d.iter().collect();
                    let weights: Vec<BigRational> =
                        entries.iter().map(|(_, w)| (*w).clone()).collect();
                    let i = sample_weighted(&mut agent.rng, &weights);
                    agent.state = entries[i].0.clone();
                    continue;
                }
                StateLabel::Amp(m) => {
                    let mut targets: Vec<&String> = Vec::new();
                    for (t, mult) in m {
                        let k = usize::try_from(mult)
                            .map_err(|_| SamplerError::AgentExplosion(AGENT_CAP))?;
                        for _ in 0..k {
                            targets.push(t);
                        }
                    }
                    if targets.is_empty() {
                        break;
                    }
                    spawned += targets.len() - 1;
                    if spawned > AGENT_CAP {
                        return Err(SamplerError::AgentExplosion(AGENT_CAP));
                    }
                    let mut rngs: Vec<ChaCha8Rng> = targets
                        .iter()
                        .map(|_| fork_rng(&mut agent.rng))
                        .collect();
                    let first = rngs.remove(0);
                    for (t, r) in targets[1..].iter().zip(rngs) {
                        queue.push_back(AutAgent {
                            state: (*t).clone(),
                            word: agent.word.clone(),
                            rng: r,
                        });
                    }
                    agent.state = targets[0].clone();
                    agent.rng = first;
                    continue;
                }
            }
        }
    }
    Ok(TruncMultiset::from_entries(n, emitted))
}

/// One simulated run: the multiset of strings (of length at most `n`)
/// emitted by the agents.
pub fn sample_run(target: Target<'_>, n: usize, rng: ChaCha8Rng) -> Result<TruncMultiset> {
    sample_run_with_scheduler(target, n, rng, Scheduler::BreadthFirst)
}

pub fn sample_run_with_scheduler(
    target: Target<'_>,
    n: usize,
    rng: ChaCha8Rng,
    scheduler: Scheduler,
) -> Result<TruncMultiset> {
    match target {
        Target::Expr(e, alphabet) => run_expr(e, alphabet, n, rng, scheduler),
        Target::Automaton(aut) => run_automaton(aut, n, rng, scheduler),
    }
}

/// The generator for trial `i` of a seed.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Empirical distribution over depth-`n` multisets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalDist {
    pub depth: usize,
    pub counts: BTreeMap<TruncMultiset, u64>,
    pub trials: u64,
}

/// Run `trials` independent simulations with substreams derived from the
/// seed; reproducible and parallel.
pub fn empirical(target: Target<'_>, n: usize, trials: u64, seed: u64) -> Result<EmpiricalDist> {
    // Targets only borrow immutable data; clone what each thread needs.
    let outcomes: Vec<Result<TruncMultiset>> = match target {
        Target::Expr(e, alphabet) => {
            let e = e.clone();
            let alphabet = alphabet.clone();
            (0..trials)
                .into_par_iter()
                .map(move |i| run_expr(&e, &alphabet, n, trial_rng(seed, i), Scheduler::BreadthFirst))
                .collect()
        }
        Target::Automaton(aut) => (0..trials)
            .into_par_iter()
            .map(|i| run_automaton(aut, n, trial_rng(seed, i), Scheduler::BreadthFirst))
            .collect(),
    };
    let mut counts: BTreeMap<TruncMultiset, u64> = BTreeMap::new();
    for o in outcomes {
        *counts.entry(o?).or_insert(0) += 1;
    }
    Ok(EmpiricalDist {
        depth: n,
        counts,
        trials,
    })
}

/// Exact total-variation distance between an empirical distribution and an
/// exact one at the same depth: half the sum of absolute differences over
/// the union of supports.
pub fn tv_distance(emp: &EmpiricalDist, exact: &FinDist) -> Result<BigRational> {
    if emp.depth != exact.depth() {
        return Err(SamplerError::DepthMismatch {
            emp: emp.depth,
            exact: exact.depth(),
        });
    }
    let trials = BigRational::from_integer(BigInt::from(emp.trials));
    let mut keys: std::collections::BTreeSet<&TruncMultiset> = emp.counts.keys().collect();
    keys.extend(exact.support().iter().map(|(m, _)| m));
    let mut total = BigRational::zero();
    for m in keys {
        let freq = emp
            .counts
            .get(m)
            .map(|c| BigRational::from_integer(BigInt::from(*c)) / &trials)
            .unwrap_or_else(BigRational::zero);
        total += (freq - exact.prob_of(m)).abs();
    }
    Ok(total / BigRational::from_integer(2.into()))
}
