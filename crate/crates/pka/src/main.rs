//! Command-line front door: parsing, exact evaluation, equivalence and
//! distance checks, both Kleene translations, normalization, derivatives,
//! Monte-Carlo sampling, and the axiom soundness suite.
//!
//! Exit codes: 0 success (for `equiv`, "equivalent"), 1 inequivalent or
//! failed check, 2 usage or parse errors, 3 validation errors, 4 budget
//! exhaustion. Errors are reported as JSON envelopes on standard error.

use clap::{Args, Parser, Subcommand};
use pka::automaton::{validate_automaton, Automaton, AutomatonError};
use pka::eval::{eval_closed_with_budget, EvalError};
use pka::generate::Gen;
use pka::json;
use pka::kleene::{automaton_to_system, expr_to_automaton, solve_system_with_order, SystemError};
use pka::rewrite::{brzozowski, normalize, rules, RewriteError};
use pka::sampler::{empirical, tv_distance, SamplerError, Target};
use pka::semantics::{distance, equiv, restrict, Budget, FinDist, SemanticsError};
use pka::syntax::{
    parse, parse_with_inferred_alphabet, print, validate, Alphabet, Expr, ParseError,
};
use std::io::Read;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pka",
    version,
    about = "Probabilistic Kleene algebra with angelic nondeterminism over multiset semantics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Comma-separated alphabet letters; inferred from the expression when
    /// omitted.
    #[arg(long)]
    alphabet: Option<String>,
    /// Support-size budget for exact operations.
    #[arg(long, default_value_t = 1_000_000)]
    budget: usize,
    /// Output format.
    #[arg(long, default_value = "json", value_parser = ["json", "text"])]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate, and reprint an expression.
    Parse {
        #[arg(short, long)]
        expr: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate an expression or automaton to its exact depth-n distribution.
    Eval {
        #[arg(short, long, conflicts_with = "automaton", required_unless_present = "automaton")]
        expr: Option<String>,
        /// Automaton JSON file ("-" for standard input).
        #[arg(short, long)]
        automaton: Option<String>,
        #[arg(short = 'n', long)]
        depth: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Exit 0 when two expressions agree at depth n, 1 with a witness class
    /// otherwise.
    Equiv {
        #[arg(long)]
        e1: String,
        #[arg(long)]
        e2: String,
        #[arg(short = 'n', long)]
        depth: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Ultrametric distance verdict between two expressions at depth n.
    Distance {
        #[arg(long)]
        e1: String,
        #[arg(long)]
        e2: String,
        #[arg(short = 'n', long)]
        depth: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Convert an expression to an equivalent automaton (JSON).
    ToAutomaton {
        #[arg(short, long)]
        expr: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve an automaton into closed expressions, one per state.
    ToExpression {
        /// Automaton JSON file ("-" for standard input).
        #[arg(short, long)]
        automaton: String,
        /// State to print (defaults to the start state).
        #[arg(long)]
        state: Option<String>,
        /// Print solutions for all states.
        #[arg(long)]
        all: bool,
        /// Eliminate variables in reverse declaration order.
        #[arg(long)]
        reverse_order: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Rewrite an expression into the layered normal form.
    Normalize {
        #[arg(short, long)]
        expr: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Print the syntactic one-step derivative (JSON).
    Derivative {
        #[arg(short, long)]
        expr: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Monte-Carlo estimate of the depth-n distribution.
    Sample {
        #[arg(short, long, conflicts_with = "automaton", required_unless_present = "automaton")]
        expr: Option<String>,
        /// Automaton JSON file ("-" for standard input).
        #[arg(short, long)]
        automaton: Option<String>,
        #[arg(short = 'n', long)]
        depth: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also evaluate exactly and report the total-variation distance.
        #[arg(long)]
        compare_exact: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the seeded soundness suite over every rewrite rule.
    AxiomsCheck {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(short = 'n', long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 2_025)]
        seed: u64,
        /// Largest instantiation size per metavariable.
        #[arg(long, default_value_t = 7)]
        max_size: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
}

enum CliError {
    Usage(String),
    Validation(String),
    BudgetExhausted(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::BudgetExhausted(_) => "budget",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::BudgetExhausted(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::BudgetExhausted(_) => 4,
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<json::JsonError> for CliError {
    fn from(e: json::JsonError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<pka::syntax::ValidateError> for CliError {
    fn from(e: pka::syntax::ValidateError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<pka::syntax::AlphabetError> for CliError {
    fn from(e: pka::syntax::AlphabetError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SemanticsError> for CliError {
    fn from(e: SemanticsError) -> Self {
        match e {
            SemanticsError::SupportExplosion { .. } => CliError::BudgetExhausted(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Semantics(s) => s.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AutomatonError> for CliError {
    fn from(e: AutomatonError) -> Self {
        match e {
            AutomatonError::Semantics(s) => s.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SystemError> for CliError {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::Automaton(a) => a.into(),
            SystemError::Eval(v) => v.into(),
            SystemError::Malformed(m) => CliError::Validation(m),
        }
    }
}

impl From<RewriteError> for CliError {
    fn from(e: RewriteError) -> Self {
        match e {
            RewriteError::TermBudget { .. } => CliError::BudgetExhausted(e.to_string()),
            RewriteError::Eval(v) => v.into(),
            RewriteError::Semantics(s) => s.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::AgentExplosion(_) => CliError::BudgetExhausted(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn alphabet_from_flag(flag: &Option<String>) -> CliResult<Option<Alphabet>> {
    match flag {
        None => Ok(None),
        Some(s) => {
            let letters: Vec<String> = s
                .split(',')
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            Ok(Some(Alphabet::new(letters)?))
        }
    }
}

/// Parse one expression, against the given alphabet or an inferred one.
fn parse_one(text: &str, flag: &Option<String>) -> CliResult<(Expr, Alphabet)> {
    match alphabet_from_flag(flag)? {
        Some(alphabet) => {
            let e = parse(text, &alphabet)?;
            Ok((e, alphabet))
        }
        None => Ok(parse_with_inferred_alphabet(text)?),
    }
}

/// Parse two expressions over a common alphabet: the flag, or the union of
/// the two inferred alphabets.
fn parse_two(a: &str, b: &str, flag: &Option<String>) -> CliResult<(Expr, Expr, Alphabet)> {
    if let Some(alphabet) = alphabet_from_flag(flag)? {
        return Ok((parse(a, &alphabet)?, parse(b, &alphabet)?, alphabet));
    }
    let (_, aa) = parse_with_inferred_alphabet(a)?;
    let (_, ab) = parse_with_inferred_alphabet(b)?;
    let union = Alphabet::new(aa.names().chain(ab.names()).map(str::to_string))?;
    Ok((parse(a, &union)?, parse(b, &union)?, union))
}

fn read_automaton(path: &str) -> CliResult<Automaton> {
    let text = if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| CliError::Usage(format!("cannot read standard input: {e}")))?;
        buf
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))?
    };
    let aut = json::automaton_from_json(&text)?;
    validate_automaton(&aut)?;
    Ok(aut)
}

fn fin_dist_text(d: &FinDist, alphabet: &Alphabet) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "depth {}", d.depth()).unwrap();
    for (m, w) in d.support() {
        let entries: Vec<String> = m
            .entries()
            .map(|(word, mult)| format!("{:?}:{mult}", json::word_string(word, alphabet)))
            .collect();
        writeln!(out, "  {w}  {{{}}}", entries.join(", ")).unwrap();
    }
    out.trim_end().to_string()
}

fn print_dist(d: &FinDist, alphabet: &Alphabet, format: &str) {
    if format == "text" {
        println!("{}", fin_dist_text(d, alphabet));
    } else {
        println!(
            "{}",
            serde_json::to_string(&json::fin_dist_to_json(d, alphabet)).expect("serializes")
        );
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Parse { expr, common } => {
            let (e, alphabet) = parse_one(&expr, &common.alphabet)?;
            validate(&e, &alphabet)?;
            println!("{}", print(&e));
            Ok(0)
        }
        Command::Eval {
            expr,
            automaton,
            depth,
            common,
        } => {
            let budget = Budget(common.budget);
            let (d, alphabet) = match (&expr, &automaton) {
                (Some(text), None) => {
                    let (e, alphabet) = parse_one(text, &common.alphabet)?;
                    validate(&e, &alphabet)?;
                    (
                        eval_closed_with_budget(&e, depth, &alphabet, budget)?,
                        alphabet,
                    )
                }
                (None, Some(path)) => {
                    let aut = read_automaton(path)?;
                    let d = pka::automaton::eval_state_with_budget(
                        &aut, &aut.start, depth, budget,
                    )?;
                    (d, aut.alphabet.clone())
                }
                _ => unreachable!("clap enforces exactly one input"),
            };
            print_dist(&d, &alphabet, &common.format);
            Ok(0)
        }
        Command::Equiv {
            e1,
            e2,
            depth,
            common,
        } => {
            let budget = Budget(common.budget);
            let (a, b, alphabet) = parse_two(&e1, &e2, &common.alphabet)?;
            validate(&a, &alphabet)?;
            validate(&b, &alphabet)?;
            let da = eval_closed_with_budget(&a, depth, &alphabet, budget)?;
            let db = eval_closed_with_budget(&b, depth, &alphabet, budget)?;
            if equiv(&da, &db, depth) {
                println!("{}", serde_json::json!({"equivalent": true, "depth": depth}));
                Ok(0)
            } else {
                // Find the shallowest class where the two differ.
                let k = (0..=depth)
                    .find(|&k| !equiv(&da, &db, k))
                    .expect("inequivalent at some depth");
                let ra = restrict(&da, k);
                let rb = restrict(&db, k);
                let witness = ra
                    .support()
                    .iter()
                    .map(|(m, _)| m)
                    .chain(rb.support().iter().map(|(m, _)| m))
                    .find(|m| ra.prob_of(m) != rb.prob_of(m))
                    .expect("some class differs");
                println!(
                    "{}",
                    serde_json::json!({
                        "equivalent": false,
                        "depth": k,
                        "witness": {
                            "multiset": serde_json::to_value(
                                json::fin_dist_to_json(&FinDist::dirac(witness.clone()), &alphabet)
                            ).expect("value")["support"][0]["multiset"].clone(),
                            "lhs_prob": ra.prob_of(witness).to_string(),
                            "rhs_prob": rb.prob_of(witness).to_string(),
                        }
                    })
                );
                Ok(1)
            }
        }
        Command::Distance {
            e1,
            e2,
            depth,
            common,
        } => {
            let budget = Budget(common.budget);
            let (a, b, alphabet) = parse_two(&e1, &e2, &common.alphabet)?;
            validate(&a, &alphabet)?;
            validate(&b, &alphabet)?;
            let da = eval_closed_with_budget(&a, depth, &alphabet, budget)?;
            let db = eval_closed_with_budget(&b, depth, &alphabet, budget)?;
            println!("{}", distance(&da, &db)?);
            Ok(0)
        }
        Command::ToAutomaton { expr, common } => {
            let (e, alphabet) = parse_one(&expr, &common.alphabet)?;
            validate(&e, &alphabet)?;
            let aut = expr_to_automaton(&e, &alphabet)?;
            println!(
                "{}",
                serde_json::to_string(&json::automaton_to_json(&aut)).expect("serializes")
            );
            Ok(0)
        }
        Command::ToExpression {
            automaton,
            state,
            all,
            reverse_order,
            common: _,
        } => {
            let aut = read_automaton(&automaton)?;
            let (sys, var_of) = automaton_to_system(&aut);
            let m = sys.equations.len();
            let order: Vec<usize> = if reverse_order {
                (0..m).rev().collect()
            } else {
                (0..m).collect()
            };
            let solutions = solve_system_with_order(&sys, &order)?;
            if all {
                for (s, var) in &var_of {
                    let sol = &solutions[var];
                    eprintln!("solution size for {s}: {} nodes", sol.size());
                    println!("{s} = {}", print(sol));
                }
            } else {
                let target = state.unwrap_or_else(|| aut.start.clone());
                let var = var_of.get(&target).ok_or_else(|| {
                    CliError::Validation(format!("unknown state {target:?}"))
                })?;
                let sol = &solutions[var];
                eprintln!("solution size: {} nodes", sol.size());
                println!("{}", print(sol));
            }
            Ok(0)
        }
        Command::Normalize { expr, common } => {
            let budget = Budget(common.budget);
            let (e, alphabet) = parse_one(&expr, &common.alphabet)?;
            validate(&e, &alphabet)?;
            let nf = normalize(&e, &alphabet, &budget)?;
            println!("{}", print(&nf));
            Ok(0)
        }
        Command::Derivative { expr, common } => {
            let budget = Budget(common.budget);
            let (e, alphabet) = parse_one(&expr, &common.alphabet)?;
            validate(&e, &alphabet)?;
            let brz = brzozowski(&e, &alphabet, &budget)?;
            println!(
                "{}",
                serde_json::to_string(&json::brz_to_json(&brz)).expect("serializes")
            );
            Ok(0)
        }
        Command::Sample {
            expr,
            automaton,
            depth,
            trials,
            seed,
            compare_exact,
            common,
        } => {
            let budget = Budget(common.budget);
            let parsed;
            let aut;
            let (target, alphabet) = match (&expr, &automaton) {
                (Some(text), None) => {
                    let (e, alphabet) = parse_one(text, &common.alphabet)?;
                    validate(&e, &alphabet)?;
                    parsed = (e, alphabet);
                    (Target::Expr(&parsed.0, &parsed.1), parsed.1.clone())
                }
                (None, Some(path)) => {
                    aut = read_automaton(path)?;
                    (Target::Automaton(&aut), aut.alphabet.clone())
                }
                _ => unreachable!("clap enforces exactly one input"),
            };
            let emp = empirical(target, depth, trials, seed)?;
            println!(
                "{}",
                serde_json::to_string(&json::empirical_to_json(&emp, &alphabet)).expect("serializes")
            );
            if compare_exact {
                let exact = match target {
                    Target::Expr(e, alphabet) => {
                        eval_closed_with_budget(e, depth, alphabet, budget)?
                    }
                    Target::Automaton(aut) => pka::automaton::eval_state_with_budget(
                        aut, &aut.start, depth, budget,
                    )?,
                };
                let tv = tv_distance(&emp, &exact)?;
                println!("tv-distance: {tv}");
            }
            Ok(0)
        }
        Command::AxiomsCheck {
            instances,
            depth,
            seed,
            max_size,
            common,
        } => {
            let budget = Budget(common.budget);
            let alphabet = alphabet_from_flag(&common.alphabet)?
                .unwrap_or_else(|| Alphabet::of(&["a", "b"]));
            let mut g = Gen::new(seed, alphabet.clone());
            let mut all_ok = true;
            for rule in rules() {
                let mut ok = true;
                let mut counterexample = None;
                for _ in 0..instances {
                    let (lhs, rhs) = g.rule_instance(&rule, max_size);
                    let dl = eval_closed_with_budget(&lhs, depth, &alphabet, budget)?;
                    let dr = eval_closed_with_budget(&rhs, depth, &alphabet, budget)?;
                    if dl != dr {
                        ok = false;
                        counterexample = Some((print(&lhs), print(&rhs)));
                        break;
                    }
                }
                if ok {
                    println!("PASS {} ({instances} instances, depth {depth})", rule.name);
                } else {
                    all_ok = false;
                    let (l, r) = counterexample.expect("failure recorded");
                    println!("FAIL {}: {l}  !=  {r}", rule.name);
                }
            }
            Ok(if all_ok { 0 } else { 1 })
        }
    }
}

/// Accept the documented `-e1`/`-e2` spellings alongside `--e1`/`--e2`.
fn massage_args() -> Vec<String> {
    std::env::args()
        .map(|a| match a.as_str() {
            "-e1" => "--e1".to_string(),
            "-e2" => "--e2".to_string(),
            _ => a,
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse_from(massage_args());
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{}", json::error_json(err.kind(), err.message()));
            ExitCode::from(err.code())
        }
    }
}
