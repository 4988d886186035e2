//! Recursive descent parser for the expression language.
//!
//! Grammar, loosest to tightest:
//!
//! ```text
//! expr    := oplus
//! oplus   := amp ( '+[' rational ']' amp )?          (non-associative)
//! amp     := seq ( '&' seq )*                        (left-associative)
//! seq     := star ( ';' seq )?                       (right-associative)
//! star    := primary '*'*
//! primary := 'skip' | 'fail' | ident | '(' expr ')'
//!          | 'fix' ident '.' expr
//!          | 'amp' '{' (int '*')? expr (',' ...)* '}'
//!          | 'oplus' '{' expr ':' rational (',' ...)* '}'
//! ```
//!
//! `fix` extends as far right as possible. Probabilities are exact rationals
//! (`1/3`, `0.25`, `1`). Comments run from `#` to end of line. Identifiers
//! bound by an enclosing `fix` are variables; all other identifiers must be
//! alphabet letters.

use super::{fresh_name, Alphabet, Expr, KEYWORDS};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use std::collections::BTreeSet;
use std::str::FromStr;
use thiserror::Error;

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { message: String, pos: Pos },
    #[error("unknown identifier {name:?} at {pos}: not bound by a fix and not in the alphabet")]
    UnknownIdent { name: String, pos: Pos },
    #[error("identifier {name:?} at {pos} is used both as a variable and as a letter")]
    VarLetterClash { name: String, pos: Pos },
    #[error("probabilities in oplus{{...}} sum to {sum}, expected 1")]
    OplusWeights { sum: String },
}

type PResult<T> = Result<T, ParseError>;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(String),
    Decimal(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,
    Star,
    Amp,
    Semi,
    Slash,
    PlusLBrack,
    RBrack,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::Int(s) => write!(f, "integer {s}"),
            Tok::Decimal(s) => write!(f, "number {s}"),
            Tok::LParen => write!(f, "'('"),
            Tok::RParen => write!(f, "')'"),
            Tok::LBrace => write!(f, "'{{'"),
            Tok::RBrace => write!(f, "'}}'"),
            Tok::Comma => write!(f, "','"),
            Tok::Colon => write!(f, "':'"),
            Tok::Dot => write!(f, "'.'"),
            Tok::Star => write!(f, "'*'"),
            Tok::Amp => write!(f, "'&'"),
            Tok::Semi => write!(f, "';'"),
            Tok::Slash => write!(f, "'/'"),
            Tok::PlusLBrack => write!(f, "'+['"),
            Tok::RBrack => write!(f, "']'"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn lex(text: &str) -> PResult<Vec<(Tok, Pos)>> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    macro_rules! bump {
        () => {{
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '(' => {
                bump!();
                toks.push((Tok::LParen, pos));
            }
            ')' => {
                bump!();
                toks.push((Tok::RParen, pos));
            }
            '{' => {
                bump!();
                toks.push((Tok::LBrace, pos));
            }
            '}' => {
                bump!();
                toks.push((Tok::RBrace, pos));
            }
            ',' => {
                bump!();
                toks.push((Tok::Comma, pos));
            }
            ':' => {
                bump!();
                toks.push((Tok::Colon, pos));
            }
            '.' => {
                bump!();
                toks.push((Tok::Dot, pos));
            }
            '*' => {
                bump!();
                toks.push((Tok::Star, pos));
            }
            '&' => {
                bump!();
                toks.push((Tok::Amp, pos));
            }
            ';' => {
                bump!();
                toks.push((Tok::Semi, pos));
            }
            '/' => {
                bump!();
                toks.push((Tok::Slash, pos));
            }
            ']' => {
                bump!();
                toks.push((Tok::RBrack, pos));
            }
            '+' => {
                bump!();
                if chars.peek() == Some(&'[') {
                    bump!();
                    toks.push((Tok::PlusLBrack, pos));
                } else {
                    return Err(ParseError::Syntax {
                        message: "expected '[' after '+' (probabilistic choice is '+[r]')"
                            .to_string(),
                        pos,
                    });
                }
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                let mut is_decimal = false;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(bump!());
                    } else if c == '.' && !is_decimal {
                        // Only a decimal point if a digit follows; otherwise
                        // leave the dot for the fix separator.
                        let mut ahead = chars.clone();
                        ahead.next();
                        if ahead.peek().is_some_and(|d| d.is_ascii_digit()) {
                            is_decimal = true;
                            s.push(bump!());
                        } else {
                            break;
                        }
                    } else {
                        break;
                    }
                }
                toks.push((
                    if is_decimal {
                        Tok::Decimal(s)
                    } else {
                        Tok::Int(s)
                    },
                    pos,
                ));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '%' {
                        s.push(bump!());
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Ident(s), pos));
            }
            other => {
                return Err(ParseError::Syntax {
                    message: format!("unexpected character {other:?}"),
                    pos,
                });
            }
        }
    }
    toks.push((
        Tok::Eof,
        Pos { line, col },
    ));
    Ok(toks)
}

/// Parse a rational from text: `p/q`, an integer, or an exact decimal.
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|e| e.to_string())?;
        let q = BigInt::from_str(q.trim()).map_err(|e| e.to_string())?;
        if q.is_zero() {
            return Err("zero denominator".to_string());
        }
        Ok(BigRational::new(p, q))
    } else if let Some((int, frac)) = s.split_once('.') {
        let int = if int.is_empty() { "0" } else { int };
        let int = BigInt::from_str(int).map_err(|e| e.to_string())?;
        let digits = frac.len() as u32;
        let frac = BigInt::from_str(frac).map_err(|e| e.to_string())?;
        let den = BigInt::from(10u32).pow(digits);
        Ok(BigRational::new(int * &den + frac, den))
    } else {
        let p = BigInt::from_str(s).map_err(|e| e.to_string())?;
        Ok(BigRational::from_integer(p))
    }
}

enum Mode<'a> {
    Strict(&'a Alphabet),
    Infer,
}

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    pos: usize,
    mode: Mode<'a>,
    bound: Vec<String>,
    letters_seen: BTreeSet<String>,
    binders_seen: BTreeSet<String>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn here(&self) -> Pos {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> PResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::Syntax {
                message: format!("expected {want}, found {}", self.peek()),
                pos: self.here(),
            })
        }
    }

    fn rational(&mut self) -> PResult<BigRational> {
        let pos = self.here();
        let text = match self.bump() {
            Tok::Int(p) => {
                if *self.peek() == Tok::Slash {
                    self.bump();
                    match self.bump() {
                        Tok::Int(q) => format!("{p}/{q}"),
                        other => {
                            return Err(ParseError::Syntax {
                                message: format!("expected denominator, found {other}"),
                                pos,
                            })
                        }
                    }
                } else {
                    p
                }
            }
            Tok::Decimal(d) => d,
            other => {
                return Err(ParseError::Syntax {
                    message: format!("expected a rational, found {other}"),
                    pos,
                })
            }
        };
        parse_rational(&text).map_err(|message| ParseError::Syntax { message, pos })
    }

    fn prob(&mut self) -> PResult<BigRational> {
        let pos = self.here();
        let r = self.rational()?;
        if r < BigRational::zero() || r > BigRational::one() {
            return Err(ParseError::Syntax {
                message: format!("probability {r} is outside [0,1]"),
                pos,
            });
        }
        Ok(r)
    }

    fn expr(&mut self) -> PResult<Expr> {
        let left = self.amp_level()?;
        if *self.peek() == Tok::PlusLBrack {
            self.bump();
            let r = self.prob()?;
            self.expect(Tok::RBrack)?;
            let right = self.amp_level()?;
            Ok(Expr::oplus(left, r, right))
        } else {
            Ok(left)
        }
    }

    fn amp_level(&mut self) -> PResult<Expr> {
        let mut acc = self.seq_level()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            let rhs = self.seq_level()?;
            acc = Expr::amp(acc, rhs);
        }
        Ok(acc)
    }

    fn seq_level(&mut self) -> PResult<Expr> {
        let left = self.star_level()?;
        if *self.peek() == Tok::Semi {
            self.bump();
            let right = self.seq_level()?;
            Ok(Expr::seq(left, right))
        } else {
            Ok(left)
        }
    }

    fn star_level(&mut self) -> PResult<Expr> {
        let mut acc = self.primary()?;
        while *self.peek() == Tok::Star {
            self.bump();
            acc = Expr::star(acc);
        }
        Ok(acc)
    }

    fn ident_expr(&mut self, name: String, pos: Pos) -> PResult<Expr> {
        if self.bound.iter().any(|b| b == &name) {
            if self.letters_seen.contains(&name) {
                return Err(ParseError::VarLetterClash { name, pos });
            }
            return Ok(Expr::var(name));
        }
        match &self.mode {
            Mode::Strict(alphabet) => {
                if alphabet.contains(&name) {
                    Ok(Expr::act(name))
                } else {
                    Err(ParseError::UnknownIdent { name, pos })
                }
            }
            Mode::Infer => {
                if self.binders_seen.contains(&name) {
                    return Err(ParseError::VarLetterClash { name, pos });
                }
                self.letters_seen.insert(name.clone());
                Ok(Expr::act(name))
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.here();
        match self.bump() {
            Tok::Ident(name) => match name.as_str() {
                "skip" => Ok(Expr::skip()),
                "fail" => Ok(Expr::fail()),
                "fix" => self.fix_expr(pos),
                "amp" => self.amp_sugar(pos),
                "oplus" => self.oplus_sugar(),
                _ => self.ident_expr(name, pos),
            },
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => Err(ParseError::Syntax {
                message: format!("expected an expression, found {other}"),
                pos,
            }),
        }
    }

    fn binder(&mut self) -> PResult<String> {
        let pos = self.here();
        match self.bump() {
            Tok::Ident(name) => {
                if KEYWORDS.contains(&name.as_str()) {
                    return Err(ParseError::Syntax {
                        message: format!("{name:?} is a reserved word"),
                        pos,
                    });
                }
                let clashes = match &self.mode {
                    Mode::Strict(alphabet) => alphabet.contains(&name),
                    Mode::Infer => self.letters_seen.contains(&name),
                };
                if clashes {
                    return Err(ParseError::VarLetterClash { name, pos });
                }
                self.binders_seen.insert(name.clone());
                Ok(name)
            }
            other => Err(ParseError::Syntax {
                message: format!("expected a variable after fix, found {other}"),
                pos,
            }),
        }
    }

    fn fix_expr(&mut self, _pos: Pos) -> PResult<Expr> {
        let x = self.binder()?;
        self.expect(Tok::Dot)?;
        self.bound.push(x.clone());
        let body = self.expr();
        self.bound.pop();
        Ok(Expr::fix(x, body?))
    }

    fn amp_sugar(&mut self, pos: Pos) -> PResult<Expr> {
        self.expect(Tok::LBrace)?;
        let mut items: Vec<Expr> = Vec::new();
        loop {
            // Optional integer multiplicity: `amp{2 * a, b}`.
            let mut n = 1usize;
            if let Tok::Int(s) = self.peek().clone() {
                if self.toks[self.pos + 1].0 == Tok::Star {
                    self.bump();
                    self.bump();
                    n = s.parse().map_err(|_| ParseError::Syntax {
                        message: format!("multiplicity {s} is too large"),
                        pos,
                    })?;
                    if n == 0 {
                        return Err(ParseError::Syntax {
                            message: "multiplicity in amp{...} must be positive".to_string(),
                            pos,
                        });
                    }
                }
            }
            let e = self.expr()?;
            for _ in 0..n {
                items.push(e.refreshed());
            }
            match self.bump() {
                Tok::Comma => continue,
                Tok::RBrace => break,
                other => {
                    return Err(ParseError::Syntax {
                        message: format!("expected ',' or '}}' in amp{{...}}, found {other}"),
                        pos,
                    })
                }
            }
        }
        if items.is_empty() {
            return Err(ParseError::Syntax {
                message: "amp{...} needs at least one element".to_string(),
                pos,
            });
        }
        Ok(Expr::amp_many(items))
    }

    fn oplus_sugar(&mut self) -> PResult<Expr> {
        self.expect(Tok::LBrace)?;
        let mut branches: Vec<(Expr, BigRational)> = Vec::new();
        loop {
            let e = self.expr()?;
            self.expect(Tok::Colon)?;
            let p = self.prob()?;
            branches.push((e, p));
            let pos = self.here();
            match self.bump() {
                Tok::Comma => continue,
                Tok::RBrace => break,
                other => {
                    return Err(ParseError::Syntax {
                        message: format!("expected ',' or '}}' in oplus{{...}}, found {other}"),
                        pos,
                    })
                }
            }
        }
        let sum: BigRational = branches.iter().map(|(_, p)| p.clone()).sum();
        if !sum.is_one() {
            return Err(ParseError::OplusWeights {
                sum: sum.to_string(),
            });
        }
        Ok(Expr::oplus_many(branches))
    }
}

/// Rename duplicate binders apart so all bound names in the tree are
/// distinct. First occurrences keep their names.
fn uniquify(e: &Expr) -> Expr {
    use super::ExprKind;
    fn go(e: &Expr, ren: &mut Vec<(String, String)>, seen: &mut BTreeSet<String>) -> Expr {
        match e.kind() {
            ExprKind::Var(x) => {
                let name = ren
                    .iter()
                    .rev()
                    .find(|(old, _)| old == x)
                    .map(|(_, new)| new.clone())
                    .unwrap_or_else(|| x.clone());
                Expr::var(name)
            }
            ExprKind::Act(a) => Expr::act(a.clone()),
            ExprKind::Skip => Expr::skip(),
            ExprKind::Fail => Expr::fail(),
            ExprKind::Amp(l, r) => Expr::amp(go(l, ren, seen), go(r, ren, seen)),
            ExprKind::Seq(l, r) => Expr::seq(go(l, ren, seen), go(r, ren, seen)),
            ExprKind::OPlus(l, p, r) => Expr::oplus(go(l, ren, seen), p.clone(), go(r, ren, seen)),
            ExprKind::Fix(x, b) => {
                let name = if seen.contains(x) {
                    fresh_name(x)
                } else {
                    x.clone()
                };
                seen.insert(name.clone());
                seen.insert(x.clone());
                ren.push((x.clone(), name.clone()));
                let b = go(b, ren, seen);
                ren.pop();
                Expr::fix(name, b)
            }
        }
    }
    go(e, &mut Vec::new(), &mut BTreeSet::new())
}

fn run(text: &str, mode: Mode<'_>) -> PResult<(Expr, BTreeSet<String>)> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        mode,
        bound: Vec::new(),
        letters_seen: BTreeSet::new(),
        binders_seen: BTreeSet::new(),
    };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(ParseError::Syntax {
            message: format!("unexpected {} after expression", p.peek()),
            pos: p.here(),
        });
    }
    Ok((uniquify(&e), p.letters_seen))
}

/// Parse against a known alphabet.
pub fn parse(text: &str, alphabet: &Alphabet) -> PResult<Expr> {
    run(text, Mode::Strict(alphabet)).map(|(e, _)| e)
}

/// Parse, treating every unbound identifier as a letter; returns the
/// expression together with the inferred alphabet. An expression with no
/// letters gets the single-letter alphabet `{a}`.
pub fn parse_with_inferred_alphabet(text: &str) -> PResult<(Expr, Alphabet)> {
    let (e, letters) = run(text, Mode::Infer)?;
    let letters = if letters.is_empty() {
        std::iter::once("a".to_string()).collect()
    } else {
        letters
    };
    let alphabet = Alphabet::new(letters).map_err(|err| ParseError::Syntax {
        message: err.to_string(),
        pos: Pos { line: 1, col: 1 },
    })?;
    Ok((e, alphabet))
}

#[cfg(test)]
mod tests {
    use super::super::{alpha_eq, print, validate, ExprKind};
    use super::*;

    fn ab() -> Alphabet {
        Alphabet::of(&["a", "b", "c"])
    }

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    #[test]
    fn parses_atoms() {
        assert_eq!(parse("skip", &ab()).unwrap(), Expr::skip());
        assert_eq!(parse("fail", &ab()).unwrap(), Expr::fail());
        assert_eq!(parse("a", &ab()).unwrap(), Expr::act("a"));
    }

    #[test]
    fn star_example() {
        let e = parse("a*", &ab()).unwrap();
        let want = Expr::fix(
            "x",
            Expr::amp(Expr::skip(), Expr::seq(Expr::act("a"), Expr::var("x"))),
        );
        assert!(alpha_eq(&e, &want));
    }

    #[test]
    fn precedence() {
        // '*' > ';' > '&' > '+[r]'
        let e = parse("a ; b & c +[1/2] a", &ab()).unwrap();
        let want = Expr::oplus(
            Expr::amp(Expr::seq(Expr::act("a"), Expr::act("b")), Expr::act("c")),
            rat(1, 2),
            Expr::act("a"),
        );
        assert_eq!(e, want);

        // ';' is right-associative
        let e = parse("a ; b ; c", &ab()).unwrap();
        let want = Expr::seq(Expr::act("a"), Expr::seq(Expr::act("b"), Expr::act("c")));
        assert_eq!(e, want);

        // '&' is left-associative
        let e = parse("a & b & c", &ab()).unwrap();
        let want = Expr::amp(Expr::amp(Expr::act("a"), Expr::act("b")), Expr::act("c"));
        assert_eq!(e, want);

        // '+[r]' needs parentheses to nest
        assert!(parse("a +[1/2] b +[1/3] c", &ab()).is_err());
        assert!(parse("a +[1/2] (b +[1/3] c)", &ab()).is_ok());
    }

    #[test]
    fn fix_extends_right() {
        let e = parse("fix x . skip & (a ; x)", &ab()).unwrap();
        match e.kind() {
            ExprKind::Fix(_, body) => assert!(matches!(body.kind(), ExprKind::Amp(_, _))),
            _ => panic!("expected fix"),
        }
    }

    #[test]
    fn oplus_sugar_example() {
        let e = parse("oplus{a:1/3, b:1/3, c:1/3}", &ab()).unwrap();
        let want = Expr::oplus(
            Expr::act("a"),
            rat(1, 3),
            Expr::oplus(Expr::act("b"), rat(1, 2), Expr::act("c")),
        );
        assert_eq!(e, want);
        assert!(parse("oplus{a:1/3, b:1/3}", &ab()).is_err());
    }

    #[test]
    fn amp_sugar_multiplicity() {
        let e = parse("amp{2 * a, b}", &ab()).unwrap();
        let want = Expr::amp(Expr::act("a"), Expr::amp(Expr::act("a"), Expr::act("b")));
        assert_eq!(e, want);
    }

    #[test]
    fn decimals_are_exact() {
        let e = parse("a +[0.25] b", &ab()).unwrap();
        match e.kind() {
            ExprKind::OPlus(_, p, _) => assert_eq!(p, &rat(1, 4)),
            _ => panic!(),
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse("d", &ab()),
            Err(ParseError::UnknownIdent { name, .. }) if name == "d"
        ));
        assert!(parse("a &", &ab()).is_err());
        assert!(parse("a + b", &ab()).is_err());
        assert!(parse("fix a . a", &ab()).is_err()); // binder shadows a letter
        assert!(parse("a +[3/2] b", &ab()).is_err());
    }

    #[test]
    fn comments_ignored() {
        let e = parse("a # trailing comment\n & b", &ab()).unwrap();
        assert_eq!(e, Expr::amp(Expr::act("a"), Expr::act("b")));
    }

    #[test]
    fn duplicate_binders_renamed_apart() {
        let e = parse("(fix x . a ; x) & (fix x . b ; x)", &ab()).unwrap();
        match e.kind() {
            ExprKind::Amp(l, r) => match (l.kind(), r.kind()) {
                (ExprKind::Fix(x1, _), ExprKind::Fix(x2, _)) => assert_ne!(x1, x2),
                _ => panic!(),
            },
            _ => panic!(),
        }
        assert!(validate(&e, &ab()).is_ok());
    }

    #[test]
    fn inferred_alphabet() {
        let (e, alphabet) = parse_with_inferred_alphabet("a ; (b +[1/2] skip)").unwrap();
        assert_eq!(alphabet, Alphabet::of(&["a", "b"]));
        assert!(validate(&e, &alphabet).is_ok());

        let (_, alphabet) = parse_with_inferred_alphabet("skip").unwrap();
        assert_eq!(alphabet, Alphabet::of(&["a"]));

        assert!(matches!(
            parse_with_inferred_alphabet("x & fix x . a ; x"),
            Err(ParseError::VarLetterClash { .. })
        ));
    }

    #[test]
    fn round_trip_spec_examples() {
        for text in [
            "skip",
            "a & b",
            "a +[1/2] b",
            "fix x . skip & (a ; x)",
            "(a ; b) & (skip +[2/3] fail)",
            "a*",
            "(a +[1/2] b)*",
        ] {
            let e = parse(text, &ab()).unwrap();
            let printed = print(&e);
            let e2 = parse(&printed, &ab()).unwrap();
            assert_eq!(e, e2, "round trip failed for {text}: printed {printed}");
        }
    }
}
