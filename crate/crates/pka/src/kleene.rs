//! Both directions of the Kleene theorem: expressions to automata (terminal
//! substitution to eliminate general compositions, then one state per
//! subexpression) and automata to expressions (equation systems solved by
//! Bekić elimination).

use crate::automaton::{
    eval_state_with_budget, validate_automaton, Automaton, AutomatonError, StateId, StateLabel,
};
use crate::eval::{eval_closed_with_budget, EvalError};
use crate::semantics::Budget;
use crate::syntax::{
    is_ident, print, subst_terminal, substitute, Alphabet, Expr, ExprKind, KEYWORDS,
};
use num::rational::BigRational;
use num::{BigUint, One};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("malformed system: {0}")]
    Malformed(String),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, SystemError>;

/// A finite system of equations `x = e` in the restricted form: each
/// variable defined at most once, compositions only as `a ; e`, and no
/// unguarded dependency cycle among the defined variables.
#[derive(Debug, Clone)]
pub struct EquationSystem {
    pub equations: Vec<(String, Expr)>,
    pub free_vars: Vec<String>,
}

impl EquationSystem {
    pub fn defined(&self, x: &str) -> Option<&Expr> {
        self.equations
            .iter()
            .find(|(v, _)| v == x)
            .map(|(_, e)| e)
    }
}

fn check_composition_form(e: &Expr) -> Result<()> {
    match e.kind() {
        ExprKind::Seq(l, r) => {
            if !matches!(l.kind(), ExprKind::Act(_)) {
                return Err(SystemError::Malformed(format!(
                    "composition {} is not of the form a ; e",
                    print(e)
                )));
            }
            check_composition_form(r)
        }
        ExprKind::Amp(l, r) | ExprKind::OPlus(l, _, r) => {
            check_composition_form(l)?;
            check_composition_form(r)
        }
        ExprKind::Fix(_, b) => check_composition_form(b),
        _ => Ok(()),
    }
}

/// Validate the restrictions on a system of equations.
pub fn validate_system(sys: &EquationSystem) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for (x, e) in &sys.equations {
        if !seen.insert(x.clone()) {
            return Err(SystemError::Malformed(format!(
                "variable {x} defined more than once"
            )));
        }
        check_composition_form(e)?;
    }
    for (_, e) in &sys.equations {
        for v in e.free_vars() {
            if sys.defined(v).is_none() && !sys.free_vars.contains(v) {
                return Err(SystemError::Malformed(format!(
                    "variable {v} is neither defined nor declared free"
                )));
            }
        }
    }
    // No unguarded dependency cycle among defined variables.
    let vars: Vec<&String> = sys.equations.iter().map(|(x, _)| x).collect();
    let index: BTreeMap<&String, usize> = vars.iter().enumerate().map(|(i, x)| (*x, i)).collect();
    let edges: Vec<Vec<usize>> = sys
        .equations
        .iter()
        .map(|(_, e)| {
            crate::syntax::var_sets(e)
                .unguarded
                .iter()
                .filter_map(|v| index.get(v).copied())
                .collect()
        })
        .collect();
    let mut mark = vec![0u8; vars.len()]; // 0 white, 1 gray, 2 black
    fn dfs(u: usize, edges: &[Vec<usize>], mark: &mut [u8]) -> bool {
        mark[u] = 1;
        for &v in &edges[u] {
            if mark[v] == 1 {
                return false;
            }
            if mark[v] == 0 && !dfs(v, edges, mark) {
                return false;
            }
        }
        mark[u] = 2;
        true
    }
    for u in 0..vars.len() {
        if mark[u] == 0 && !dfs(u, &edges, &mut mark) {
            return Err(SystemError::Malformed(
                "unguarded dependency cycle among defined variables".to_string(),
            ));
        }
    }
    Ok(())
}

/// Rewrite a closed expression so that every composition is of the basic
/// form `a ; e`, using the terminal substitution operator.
fn eliminate_compositions(e: &Expr) -> Expr {
    match e.kind() {
        ExprKind::Var(_) | ExprKind::Act(_) | ExprKind::Skip | ExprKind::Fail => e.clone(),
        ExprKind::Amp(l, r) => Expr::amp(eliminate_compositions(l), eliminate_compositions(r)),
        ExprKind::OPlus(l, p, r) => Expr::oplus(
            eliminate_compositions(l),
            p.clone(),
            eliminate_compositions(r),
        ),
        ExprKind::Fix(x, b) => Expr::fix(x.clone(), eliminate_compositions(b)),
        ExprKind::Seq(l, r) => {
            let le = eliminate_compositions(l);
            let re = eliminate_compositions(r);
            if matches!(le.kind(), ExprKind::Act(_)) {
                Expr::seq(le, re)
            } else {
                subst_terminal(&le, &re)
            }
        }
    }
}

/// Convert a closed, validated expression to an automaton with the same
/// depth-`n` behavior for every `n`. States are the distinct subexpressions
/// of the composition-free form; variables wire back to their binding fix.
pub fn expr_to_automaton(e: &Expr, alphabet: &Alphabet) -> Result<Automaton> {
    let e = e.refreshed(); // distinct bound names, ids unique per position
    let e = eliminate_compositions(&e);

    struct Builder {
        // Structural key (printed form) → state id; distinct subexpressions
        // get one state each.
        ids: BTreeMap<String, StateId>,
        states: BTreeMap<StateId, StateLabel>,
        binders: BTreeMap<String, StateId>,
        pending_vars: Vec<(StateId, String)>,
    }

    impl Builder {
        fn state_of(&mut self, e: &Expr) -> StateId {
            let key = print(e);
            if let Some(id) = self.ids.get(&key) {
                return id.clone();
            }
            let id = format!("s{}", self.ids.len());
            self.ids.insert(key, id.clone());
            let label = match e.kind() {
                ExprKind::Skip => StateLabel::Skip,
                ExprKind::Fail => StateLabel::Fail,
                ExprKind::Act(a) => {
                    let succ = self.state_of(&Expr::skip());
                    StateLabel::Act(a.clone(), succ)
                }
                ExprKind::Seq(l, r) => {
                    let a = match l.kind() {
                        ExprKind::Act(a) => a.clone(),
                        _ => unreachable!("compositions are action-headed"),
                    };
                    let succ = self.state_of(r);
                    StateLabel::Act(a, succ)
                }
                ExprKind::Amp(l, r) => {
                    let sl = self.state_of(l);
                    let sr = self.state_of(r);
                    let mut m: BTreeMap<StateId, BigUint> = BTreeMap::new();
                    *m.entry(sl).or_insert_with(num::Zero::zero) += BigUint::one();
                    *m.entry(sr).or_insert_with(num::Zero::zero) += BigUint::one();
                    StateLabel::Amp(m)
                }
                ExprKind::OPlus(l, p, r) => {
                    let sl = self.state_of(l);
                    let sr = self.state_of(r);
                    let mut d: BTreeMap<StateId, BigRational> = BTreeMap::new();
                    *d.entry(sl).or_insert_with(num::Zero::zero) += p.clone();
                    *d.entry(sr).or_insert_with(num::Zero::zero) +=
                        BigRational::one() - p.clone();
                    // A weight-zero side would leave a nonpositive entry;
                    // drop it to keep the distribution canonical.
                    let zero = BigRational::from_integer(0.into());
                    d.retain(|_, w| *w > zero);
                    StateLabel::OPlus(d)
                }
                ExprKind::Fix(x, body) => {
                    self.binders.insert(x.clone(), id.clone());
                    let sb = self.state_of(body);
                    StateLabel::Amp(std::iter::once((sb, BigUint::one())).collect())
                }
                ExprKind::Var(x) => {
                    // The binder may still be under construction; resolve
                    // after the traversal.
                    self.pending_vars.push((id.clone(), x.clone()));
                    StateLabel::Fail // placeholder
                }
            };
            self.states.insert(id.clone(), label);
            id
        }
    }

    let mut b = Builder {
        ids: BTreeMap::new(),
        states: BTreeMap::new(),
        binders: BTreeMap::new(),
        pending_vars: Vec::new(),
    };
    let start = b.state_of(&e);
    for (state, var) in std::mem::take(&mut b.pending_vars) {
        let target = b.binders.get(&var).ok_or_else(|| {
            SystemError::Malformed(format!("variable {var} has no binding fix"))
        })?;
        b.states.insert(
            state,
            StateLabel::Amp(std::iter::once((target.clone(), BigUint::one())).collect()),
        );
    }
    let aut = Automaton {
        alphabet: alphabet.clone(),
        start,
        states: b.states,
    };
    validate_automaton(&aut)?;
    Ok(aut)
}

fn var_name_of_state(s: &StateId, alphabet: &Alphabet, taken: &mut Vec<String>) -> String {
    let base = if is_ident(s) && !alphabet.contains(s) && !KEYWORDS.contains(&s.as_str()) {
        s.clone()
    } else {
        format!("v_{}", taken.len())
    };
    let name = if taken.contains(&base) {
        crate::syntax::fresh_name(&base)
    } else {
        base
    };
    taken.push(name.clone());
    name
}

/// Read an automaton as a system of equations: one equation per state, with
/// the transition structure transcribed on the right-hand side. The result
/// contains no fix operator. Returns the system together with the
/// state-to-variable naming.
pub fn automaton_to_system(aut: &Automaton) -> (EquationSystem, BTreeMap<StateId, String>) {
    let mut taken = Vec::new();
    let var_of: BTreeMap<StateId, String> = aut
        .states
        .keys()
        .map(|s| (s.clone(), var_name_of_state(s, &aut.alphabet, &mut taken)))
        .collect();
    let mut equations = Vec::new();
    for (s, label) in &aut.states {
        let rhs = match label {
            StateLabel::Skip => Expr::skip(),
            StateLabel::Fail => Expr::fail(),
            StateLabel::Act(a, t) => Expr::seq(Expr::act(a.clone()), Expr::var(var_of[t].clone())),
            StateLabel::OPlus(d) => Expr::oplus_many(
                d.iter()
                    .map(|(t, r)| (Expr::var(var_of[t].clone()), r.clone()))
                    .collect(),
            ),
            StateLabel::Amp(m) => {
                let mut items = Vec::new();
                for (t, mult) in m {
                    let mut k = mult.clone();
                    while !num::Zero::is_zero(&k) {
                        items.push(Expr::var(var_of[t].clone()));
                        k -= BigUint::one();
                    }
                }
                if items.is_empty() {
                    Expr::fail()
                } else {
                    Expr::amp_many(items)
                }
            }
        };
        equations.push((var_of[s].clone(), rhs));
    }
    (
        EquationSystem {
            equations,
            free_vars: Vec::new(),
        },
        var_of,
    )
}

/// Solve a system by Bekić elimination in the given order (indices into the
/// equation list), then back-substitute so every variable gets a closed
/// expression.
pub fn solve_system_with_order(
    sys: &EquationSystem,
    order: &[usize],
) -> Result<BTreeMap<String, Expr>> {
    validate_system(sys)?;
    if !sys.free_vars.is_empty() {
        return Err(SystemError::Malformed(
            "cannot solve a system with declared free variables".to_string(),
        ));
    }
    let m = sys.equations.len();
    if order.len() != m || {
        let mut sorted: Vec<usize> = order.to_vec();
        sorted.sort_unstable();
        sorted != (0..m).collect::<Vec<_>>()
    } {
        return Err(SystemError::Malformed(
            "elimination order must be a permutation of the equations".to_string(),
        ));
    }
    let mut rhs: Vec<Expr> = sys.equations.iter().map(|(_, e)| e.clone()).collect();
    let names: Vec<String> = sys.equations.iter().map(|(x, _)| x.clone()).collect();

    // Forward pass: wrap each equation in its own fix and substitute it into
    // the not-yet-eliminated ones.
    let mut fixes: Vec<Option<Expr>> = vec![None; m];
    for (step, &i) in order.iter().enumerate() {
        let fix_i = Expr::fix(names[i].clone(), rhs[i].clone());
        for &j in &order[step + 1..] {
            if rhs[j].free_vars().contains(&names[i]) {
                rhs[j] = substitute(&rhs[j], &fix_i, &names[i]);
            }
        }
        fixes[i] = Some(fix_i);
    }
    // Backward pass: each fix may still mention later-eliminated variables;
    // substitute their (closed) solutions.
    let mut solved: Vec<Option<Expr>> = vec![None; m];
    for (step, &i) in order.iter().enumerate().rev() {
        let mut e = fixes[i].take().expect("set in forward pass");
        for &j in &order[step + 1..] {
            if e.free_vars().contains(&names[j]) {
                let sol = solved[j].clone().expect("later variable already solved");
                e = substitute(&e, &sol, &names[j]);
            }
        }
        debug_assert!(e.is_closed());
        solved[i] = Some(e);
    }
    Ok(names
        .into_iter()
        .zip(solved)
        .map(|(x, e)| (x, e.expect("solved")))
        .collect())
}

/// Solve in declaration order.
pub fn solve_system(sys: &EquationSystem) -> Result<BTreeMap<String, Expr>> {
    let m = sys.equations.len();
    solve_system_with_order(sys, &(0..m).collect::<Vec<_>>())
}

/// Check both Kleene directions against the direct evaluator at depth `n`:
/// the expression, the automaton built from it, and the solved equation
/// system of that automaton must have the same depth-`n` behavior.
pub fn round_trip_check(e: &Expr, n: usize, alphabet: &Alphabet, budget: Budget) -> Result<bool> {
    let direct = eval_closed_with_budget(e, n, alphabet, budget)?;
    let aut = expr_to_automaton(e, alphabet)?;
    let via_automaton = eval_state_with_budget(&aut, &aut.start, n, budget)?;
    if direct != via_automaton {
        return Ok(false);
    }
    let (sys, var_of) = automaton_to_system(&aut);
    let solutions = solve_system(&sys)?;
    let start_expr = &solutions[&var_of[&aut.start]];
    let via_system = eval_closed_with_budget(start_expr, n, alphabet, budget)?;
    Ok(direct == via_system)
}
