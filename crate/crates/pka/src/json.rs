//! Canonical JSON renderings of the public value types. Output is
//! byte-stable: object keys are sorted, support lists follow the canonical
//! value order, rationals are reduced, and multiplicities are emitted as
//! (arbitrary-precision) integers.

use crate::automaton::{Automaton, StateLabel};
use crate::rewrite::BrzStep;
use crate::sampler::EmpiricalDist;
use crate::semantics::{FinDist, TruncMultiset, Word};
use crate::syntax::{parse_rational, print, Alphabet};
use num::rational::BigRational;
use num::BigUint;
use serde_json::{json, Map, Number, Value};
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("invalid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("invalid {what}: {message}")]
    Schema { what: &'static str, message: String },
}

pub type Result<T> = std::result::Result<T, JsonError>;

fn schema(what: &'static str, message: impl Into<String>) -> JsonError {
    JsonError::Schema {
        what,
        message: message.into(),
    }
}

fn big_number(n: &BigUint) -> Value {
    Value::Number(Number::from_str(&n.to_string()).expect("integer literal"))
}

fn rational_string(r: &BigRational) -> Value {
    Value::String(r.to_string())
}

/// Render a word as the concatenation of its letter names.
pub fn word_string(w: &Word, alphabet: &Alphabet) -> String {
    w.0.iter().map(|&id| alphabet.name(id)).collect()
}

fn multiset_value(m: &TruncMultiset, alphabet: &Alphabet) -> Value {
    Value::Array(
        m.entries()
            .map(|(w, mult)| {
                Value::Array(vec![
                    Value::String(word_string(w, alphabet)),
                    big_number(mult),
                ])
            })
            .collect(),
    )
}

/// `{"depth":N,"support":[{"multiset":[["",1],...],"prob":"1/4"},...]}`
pub fn fin_dist_to_json(d: &FinDist, alphabet: &Alphabet) -> Value {
    json!({
        "depth": d.depth(),
        "support": d.support().iter().map(|(m, w)| json!({
            "multiset": multiset_value(m, alphabet),
            "prob": rational_string(w),
        })).collect::<Vec<_>>(),
    })
}

/// EmpiricalDist mirrors FinDist with integer counts and the trial total.
pub fn empirical_to_json(e: &EmpiricalDist, alphabet: &Alphabet) -> Value {
    json!({
        "depth": e.depth,
        "support": e.counts.iter().map(|(m, c)| json!({
            "count": c,
            "multiset": multiset_value(m, alphabet),
        })).collect::<Vec<_>>(),
        "trials": e.trials,
    })
}

/// Derivative rendering: weights as rational strings, continuations as
/// expression text.
pub fn brz_to_json(b: &BrzStep) -> Value {
    json!({
        "support": b.support.iter().map(|(o, w)| {
            let succ: Map<String, Value> = o.succ.iter().map(|(a, es)| {
                (a.clone(), Value::Array(es.iter().map(|e| Value::String(print(e))).collect()))
            }).collect();
            json!({
                "eps": big_number(&o.eps_mult),
                "prob": rational_string(w),
                "succ": Value::Object(succ),
            })
        }).collect::<Vec<_>>(),
    })
}

pub fn automaton_to_json(aut: &Automaton) -> Value {
    let states: Map<String, Value> = aut
        .states
        .iter()
        .map(|(s, label)| {
            let v = match label {
                StateLabel::Skip => json!({"label": "skip"}),
                StateLabel::Fail => json!({"label": "fail"}),
                StateLabel::Act(a, t) => json!({"label": "act", "letter": a, "next": t}),
                StateLabel::Amp(m) => json!({
                    "label": "amp",
                    "multiset": m.iter().map(|(t, mult)| {
                        Value::Array(vec![Value::String(t.clone()), big_number(mult)])
                    }).collect::<Vec<_>>(),
                }),
                StateLabel::OPlus(d) => json!({
                    "label": "oplus",
                    "dist": d.iter().map(|(t, r)| {
                        Value::Array(vec![Value::String(t.clone()), rational_string(r)])
                    }).collect::<Vec<_>>(),
                }),
            };
            (s.clone(), v)
        })
        .collect();
    json!({
        "alphabet": aut.alphabet.names().collect::<Vec<_>>(),
        "start": aut.start,
        "states": Value::Object(states),
    })
}

fn as_str<'v>(v: &'v Value, what: &'static str) -> Result<&'v str> {
    v.as_str().ok_or_else(|| schema(what, "expected a string"))
}

fn as_biguint(v: &Value, what: &'static str) -> Result<BigUint> {
    match v {
        Value::Number(n) => BigUint::from_str(n.as_str())
            .map_err(|_| schema(what, format!("expected a nonnegative integer, got {n}"))),
        _ => Err(schema(what, "expected an integer")),
    }
}

fn as_rational(v: &Value, what: &'static str) -> Result<BigRational> {
    match v {
        Value::String(s) => {
            parse_rational(s).map_err(|e| schema(what, format!("bad rational {s:?}: {e}")))
        }
        Value::Number(n) => parse_rational(n.as_str())
            .map_err(|e| schema(what, format!("bad rational {n}: {e}"))),
        _ => Err(schema(what, "expected a rational string")),
    }
}

/// Parse the automaton interchange format. The result is not yet validated;
/// callers run [`crate::automaton::validate_automaton`].
pub fn automaton_from_json(text: &str) -> Result<Automaton> {
    let v: Value = serde_json::from_str(text)?;
    let obj = v
        .as_object()
        .ok_or_else(|| schema("automaton", "expected an object"))?;
    let letters: Vec<String> = obj
        .get("alphabet")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("automaton", "missing \"alphabet\" array"))?
        .iter()
        .map(|l| as_str(l, "alphabet letter").map(str::to_string))
        .collect::<Result<_>>()?;
    let alphabet = Alphabet::new(letters)
        .map_err(|e| schema("automaton", format!("bad alphabet: {e}")))?;
    let start = as_str(
        obj.get("start")
            .ok_or_else(|| schema("automaton", "missing \"start\""))?,
        "start",
    )?
    .to_string();
    let states_obj = obj
        .get("states")
        .and_then(Value::as_object)
        .ok_or_else(|| schema("automaton", "missing \"states\" object"))?;
    let mut states = BTreeMap::new();
    for (name, sv) in states_obj {
        let sobj = sv
            .as_object()
            .ok_or_else(|| schema("state", format!("state {name} is not an object")))?;
        let label = as_str(
            sobj.get("label")
                .ok_or_else(|| schema("state", format!("state {name} missing \"label\"")))?,
            "label",
        )?;
        let parsed = match label {
            "skip" => StateLabel::Skip,
            "fail" => StateLabel::Fail,
            "act" => {
                let letter = as_str(
                    sobj.get("letter")
                        .ok_or_else(|| schema("state", format!("act state {name} missing \"letter\"")))?,
                    "letter",
                )?;
                let next = as_str(
                    sobj.get("next")
                        .ok_or_else(|| schema("state", format!("act state {name} missing \"next\"")))?,
                    "next",
                )?;
                StateLabel::Act(letter.to_string(), next.to_string())
            }
            "amp" => {
                let arr = sobj
                    .get("multiset")
                    .and_then(Value::as_array)
                    .ok_or_else(|| schema("state", format!("amp state {name} missing \"multiset\"")))?;
                let mut m: BTreeMap<String, BigUint> = BTreeMap::new();
                for pair in arr {
                    let pair = pair
                        .as_array()
                        .filter(|p| p.len() == 2)
                        .ok_or_else(|| schema("state", "multiset entries are [state, mult] pairs"))?;
                    let t = as_str(&pair[0], "multiset state")?.to_string();
                    let mult = as_biguint(&pair[1], "multiset multiplicity")?;
                    *m.entry(t).or_insert_with(num::Zero::zero) += mult;
                }
                StateLabel::Amp(m)
            }
            "oplus" => {
                let arr = sobj
                    .get("dist")
                    .and_then(Value::as_array)
                    .ok_or_else(|| schema("state", format!("oplus state {name} missing \"dist\"")))?;
                let mut d: BTreeMap<String, BigRational> = BTreeMap::new();
                for pair in arr {
                    let pair = pair
                        .as_array()
                        .filter(|p| p.len() == 2)
                        .ok_or_else(|| schema("state", "dist entries are [state, prob] pairs"))?;
                    let t = as_str(&pair[0], "dist state")?.to_string();
                    let w = as_rational(&pair[1], "dist probability")?;
                    *d.entry(t).or_insert_with(num::Zero::zero) += w;
                }
                StateLabel::OPlus(d)
            }
            other => {
                return Err(schema(
                    "state",
                    format!("state {name} has unknown label {other:?}"),
                ))
            }
        };
        states.insert(name.clone(), parsed);
    }
    Ok(Automaton {
        alphabet,
        start,
        states,
    })
}

/// Machine-readable error envelope for the command line.
pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::to_string(&json!({"error": {"kind": kind, "message": message}}))
        .expect("error envelope serializes")
}
