//! Pretty printer, the inverse of the parser: `parse(print(e)) == e` for any
//! expression whose bound names are distinct.

use super::{Expr, ExprKind};
use std::fmt::Write;

// Precedence levels, loosest to tightest. `fix` prints at the oplus level
// since its body extends as far right as possible.
const OPLUS: u8 = 0;
const AMP: u8 = 1;
const SEQ: u8 = 2;
const ATOM: u8 = 3;

fn level(e: &Expr) -> u8 {
    match e.kind() {
        ExprKind::OPlus(..) | ExprKind::Fix(..) => OPLUS,
        ExprKind::Amp(..) => AMP,
        ExprKind::Seq(..) => SEQ,
        ExprKind::Var(_) | ExprKind::Act(_) | ExprKind::Skip | ExprKind::Fail => ATOM,
    }
}

fn go(e: &Expr, min: u8, out: &mut String) {
    let needs_parens = level(e) < min;
    if needs_parens {
        out.push('(');
    }
    match e.kind() {
        ExprKind::Var(x) => out.push_str(x),
        ExprKind::Act(a) => out.push_str(a),
        ExprKind::Skip => out.push_str("skip"),
        ExprKind::Fail => out.push_str("fail"),
        ExprKind::Amp(l, r) => {
            go(l, AMP, out);
            out.push_str(" & ");
            go(r, SEQ, out);
        }
        ExprKind::OPlus(l, p, r) => {
            go(l, AMP, out);
            write!(out, " +[{p}] ").unwrap();
            go(r, AMP, out);
        }
        ExprKind::Seq(l, r) => {
            go(l, ATOM, out);
            out.push_str(" ; ");
            go(r, SEQ, out);
        }
        ExprKind::Fix(x, body) => {
            write!(out, "fix {x} . ").unwrap();
            go(body, OPLUS, out);
        }
    }
    if needs_parens {
        out.push(')');
    }
}

/// Render an expression as concrete syntax.
pub fn print(e: &Expr) -> String {
    let mut out = String::new();
    go(e, OPLUS, &mut out);
    out
}
