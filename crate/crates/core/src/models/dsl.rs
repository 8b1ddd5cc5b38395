//! A small expression language for presence-based trees.
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('&' | '*') unary)*
//! unary   := '!' unary | '-' unary | atom
//! atom    := '"' word '"' | number | '(' sum ')'
//! ```
//!
//! A quoted word is 1 when the word is present and 0 otherwise, `!x` is
//! `1 - x` and `&` multiplies. Any expression expands to a multilinear
//! polynomial in the presence indicators, using `z * z = z`.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Word(String),
    Const(f64),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Sum(Box<Expr>, Box<Expr>),
    Diff(Box<Expr>, Box<Expr>),
    Product(Box<Expr>, Box<Expr>),
}

/// Monomials keyed by their (sorted, distinct) word sets.
pub type Polynomial = BTreeMap<BTreeSet<String>, f64>;

impl Expr {
    /// Value under the presence assignment `present`.
    pub fn eval(&self, present: &dyn Fn(&str) -> bool) -> f64 {
        match self {
            Expr::Word(w) => present(w) as u8 as f64,
            Expr::Const(c) => *c,
            Expr::Not(e) => 1.0 - e.eval(present),
            Expr::Neg(e) => -e.eval(present),
            Expr::Sum(a, b) => a.eval(present) + b.eval(present),
            Expr::Diff(a, b) => a.eval(present) - b.eval(present),
            Expr::Product(a, b) => a.eval(present) * b.eval(present),
        }
    }

    /// Words mentioned anywhere in the expression.
    pub fn words(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Word(w) => {
                out.insert(w.clone());
            }
            Expr::Const(_) => {}
            Expr::Not(e) | Expr::Neg(e) => e.collect_words(out),
            Expr::Sum(a, b) | Expr::Diff(a, b) | Expr::Product(a, b) => {
                a.collect_words(out);
                b.collect_words(out);
            }
        }
    }

    /// Multilinear expansion with zero coefficients removed.
    pub fn expand(&self) -> Polynomial {
        let mut p = self.expand_raw();
        p.retain(|_, c| *c != 0.0);
        p
    }

    fn expand_raw(&self) -> Polynomial {
        match self {
            Expr::Word(w) => Polynomial::from([(BTreeSet::from([w.clone()]), 1.0)]),
            Expr::Const(c) => Polynomial::from([(BTreeSet::new(), *c)]),
            Expr::Not(e) => add(&Polynomial::from([(BTreeSet::new(), 1.0)]), &scale(&e.expand_raw(), -1.0)),
            Expr::Neg(e) => scale(&e.expand_raw(), -1.0),
            Expr::Sum(a, b) => add(&a.expand_raw(), &b.expand_raw()),
            Expr::Diff(a, b) => add(&a.expand_raw(), &scale(&b.expand_raw(), -1.0)),
            Expr::Product(a, b) => multiply(&a.expand_raw(), &b.expand_raw()),
        }
    }
}

fn scale(p: &Polynomial, k: f64) -> Polynomial {
    p.iter().map(|(m, c)| (m.clone(), c * k)).collect()
}

fn add(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut out = a.clone();
    for (m, c) in b {
        *out.entry(m.clone()).or_default() += c;
    }
    out
}

fn multiply(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut out = Polynomial::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let m: BTreeSet<String> = ma.union(mb).cloned().collect();
            *out.entry(m).or_default() += ca * cb;
        }
    }
    out
}

pub fn parse(text: &str) -> Result<Expr> {
    let mut p = Parser { chars: text.char_indices().collect(), pos: 0, len: text.len() };
    let e = p.sum()?;
    p.skip_ws();
    if let Some(&(at, c)) = p.chars.get(p.pos) {
        return Err(parse_error(at, format!("unexpected `{c}`")));
    }
    Ok(e)
}

fn parse_error(position: usize, message: impl Into<String>) -> Error {
    Error::Parse { position, message: message.into() }
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|(_, c)| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.len, |&(i, _)| i)
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    lhs = Expr::Sum(Box::new(lhs), Box::new(self.product()?));
                }
                Some('-') => {
                    self.pos += 1;
                    lhs = Expr::Diff(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while matches!(self.peek(), Some('&') | Some('*')) {
            self.pos += 1;
            lhs = Expr::Product(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('!') => {
                self.pos += 1;
                Ok(Expr::Not(Box::new(self.unary()?)))
            }
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let start = self.offset();
        match self.peek() {
            None => Err(parse_error(start, "unexpected end of input")),
            Some('"') => {
                self.pos += 1;
                let mut word = String::new();
                loop {
                    match self.chars.get(self.pos) {
                        None => return Err(parse_error(start, "unterminated word literal")),
                        Some(&(_, '"')) => {
                            self.pos += 1;
                            break;
                        }
                        Some(&(_, c)) => {
                            word.push(c);
                            self.pos += 1;
                        }
                    }
                }
                if word.is_empty() {
                    return Err(parse_error(start, "empty word literal"));
                }
                Ok(Expr::Word(word))
            }
            Some('(') => {
                self.pos += 1;
                let e = self.sum()?;
                if self.peek() != Some(')') {
                    return Err(parse_error(self.offset(), "expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let mut lit = String::new();
                while let Some(&(_, c)) = self.chars.get(self.pos) {
                    let exponent_sign = (c == '-' || c == '+') && lit.ends_with(['e', 'E']);
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exponent_sign {
                        lit.push(c);
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                lit.parse::<f64>().map(Expr::Const).map_err(|_| parse_error(start, format!("invalid number `{lit}`")))
            }
            Some(c) => Err(parse_error(start, format!("unexpected `{c}`; words must be quoted"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    /// Every presence assignment over `words`.
    fn assignments(words: &[String]) -> impl Iterator<Item = BTreeSet<String>> + '_ {
        (0u32..1 << words.len()).map(move |mask| {
            words.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, w)| w.clone()).collect()
        })
    }

    fn eval_poly(p: &Polynomial, present: &BTreeSet<String>) -> f64 {
        p.iter().filter(|(m, _)| m.is_subset(present)).map(|(_, c)| c).sum()
    }

    fn check_truth_table(text: &str) {
        let e = parse(text).unwrap();
        let p = e.expand();
        let words: Vec<String> = e.words().into_iter().collect();
        for present in assignments(&words) {
            let direct = e.eval(&|w| present.contains(w));
            assert!((direct - eval_poly(&p, &present)).abs() < 1e-12, "{text} at {present:?}");
        }
    }

    #[test]
    fn single_word() {
        let p = parse("\"food\"").unwrap().expand();
        assert_eq!(p, Polynomial::from([(set(&["food"]), 1.0)]));
    }

    #[test]
    fn two_level_tree_expansion() {
        let p = parse("\"food\" + (!\"food\" & \"about\" & \"Everything\")").unwrap().expand();
        let expected = Polynomial::from([
            (set(&["food"]), 1.0),
            (set(&["about", "Everything"]), 1.0),
            (set(&["food", "about", "Everything"]), -1.0),
        ]);
        assert_eq!(p, expected);
        check_truth_table("\"food\" + (!\"food\" & \"about\" & \"Everything\")");
    }

    #[test]
    fn deeper_tree_truth_table() {
        check_truth_table("\"food\" + (!\"food\" & \"about\" & \"Everything\") + \"bad\" + (\"bad\" & \"character\")");
        check_truth_table("!(\"a\" & !\"b\") * (\"c\" - 2.5 * \"a\") + -\"d\" + 0.5");
        check_truth_table("\"a\" & \"a\" & !\"a\"");
    }

    #[test]
    fn idempotent_products_collapse() {
        let p = parse("\"a\" & \"a\"").unwrap().expand();
        assert_eq!(p, Polynomial::from([(set(&["a"]), 1.0)]));
        assert!(parse("\"a\" - \"a\"").unwrap().expand().is_empty());
    }

    #[test]
    fn parse_errors_report_positions() {
        let err = |t: &str| match parse(t) {
            Err(Error::Parse { position, .. }) => position,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(err("\"a\" + food"), 6);
        assert_eq!(err("(\"a\""), 4);
        assert_eq!(err("\"abc"), 0);
        assert_eq!(err(""), 0);
        assert_eq!(err("\"a\" )"), 4);
        assert_eq!(err("\"\""), 0);
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("2.5e-1").unwrap(), Expr::Const(0.25));
        assert_eq!(parse("3 & \"x\"").unwrap().expand(), Polynomial::from([(set(&["x"]), 3.0)]));
    }
}
