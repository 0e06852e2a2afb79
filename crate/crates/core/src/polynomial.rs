//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Terms are kept in a `BTreeMap` keyed by exponent vector, so two
//! polynomials that are equal as functions have identical term maps. Zero
//! coefficients are never stored.
//!
//! Expressions are read with a small recursive-descent parser:
//!
//! ```text
//! expr   := ['-'] term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := base ('^' uint)?
//! base   := number | var | '(' expr ')'
//! number := digits ['.' digits] ['/' digits]
//! ```

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number, always in lowest terms with positive denominator.
pub type Rational = BigRational;

/// Largest total degree accepted by the parser.
pub const MAX_DEGREE: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown variable `{name}` at position {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("exponent at position {position} must be a non-negative integer")]
    BadExponent { position: usize },
    #[error("total degree {degree} exceeds the limit of {MAX_DEGREE} (position {position})")]
    DegreeTooHigh { degree: u32, position: usize },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable lists differ: {left:?} vs {right:?}")]
    VariableMismatch {
        left: Vec<String>,
        right: Vec<String>,
    },
    #[error("unknown variable `{0}`")]
    NoSuchVariable(String),
}

/// Closed rational interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Rational,
    pub hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        assert!(lo <= hi, "interval endpoints out of order");
        Interval { lo, hi }
    }

    pub fn point(x: Rational) -> Self {
        Interval {
            lo: x.clone(),
            hi: x,
        }
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn midpoint(&self) -> Rational {
        (&self.lo + &self.hi) / BigInt::from(2)
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn contains_zero(&self) -> bool {
        !self.lo.is_positive() && !self.hi.is_negative()
    }

    /// Sign of every element when the interval excludes zero, else 0.
    pub fn certified_sign(&self) -> i8 {
        if self.lo.is_positive() {
            1
        } else if self.hi.is_negative() {
            -1
        } else {
            0
        }
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
        }
    }

    pub fn sub(&self, other: &Interval) -> Interval {
        Interval {
            lo: &self.lo - &other.hi,
            hi: &self.hi - &other.lo,
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -&self.hi,
            hi: -&self.lo,
        }
    }

    pub fn scale(&self, c: &Rational) -> Interval {
        let a = &self.lo * c;
        let b = &self.hi * c;
        if a <= b {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    pub fn mul(&self, other: &Interval) -> Interval {
        let cands = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let mut lo = cands[0].clone();
        let mut hi = cands[0].clone();
        for c in &cands[1..] {
            if *c < lo {
                lo = c.clone();
            }
            if *c > hi {
                hi = c.clone();
            }
        }
        Interval { lo, hi }
    }

    pub fn powi(&self, e: u32) -> Interval {
        if e == 0 {
            return Interval::point(Rational::one());
        }
        let lo_p = pow_rat(&self.lo, e);
        let hi_p = pow_rat(&self.hi, e);
        if e % 2 == 1 {
            return Interval { lo: lo_p, hi: hi_p };
        }
        if self.lo.is_negative() && self.hi.is_positive() {
            let hi = if lo_p > hi_p { lo_p } else { hi_p };
            Interval {
                lo: Rational::zero(),
                hi,
            }
        } else if lo_p <= hi_p {
            Interval { lo: lo_p, hi: hi_p }
        } else {
            Interval { lo: hi_p, hi: lo_p }
        }
    }

    pub fn abs(&self) -> Interval {
        if !self.lo.is_negative() {
            self.clone()
        } else if !self.hi.is_positive() {
            self.neg()
        } else {
            let hi = if -&self.lo > self.hi {
                -&self.lo
            } else {
                self.hi.clone()
            };
            Interval {
                lo: Rational::zero(),
                hi,
            }
        }
    }
}

pub(crate) fn pow_rat(x: &Rational, e: u32) -> Rational {
    num_traits::pow(x.clone(), e as usize)
}

/// Convert a rational to the nearest-ish double (exact for dyadic values in range).
pub fn rat_to_f64(x: &Rational) -> f64 {
    if let Some(v) = x.to_f64() {
        if v.is_finite() && (v != 0.0 || x.is_zero()) {
            return v;
        }
    }
    // Fall back to a scaled division for numerators/denominators outside f64 range.
    let n = x.numer();
    let d = x.denom();
    let nb = n.bits() as i64;
    let db = d.bits() as i64;
    let shift = nb - db - 60;
    let scaled = if shift >= 0 {
        BigRational::new(n.clone(), d.clone() << (shift as usize))
    } else {
        BigRational::new(n.clone() << ((-shift) as usize), d.clone())
    };
    let base =
        scaled.to_integer().to_f64().unwrap_or(0.0) + (scaled.fract()).to_f64().unwrap_or(0.0);
    base * 2f64.powi(shift as i32)
}

/// Exact rational value of a finite double.
pub fn f64_to_rat(x: f64) -> Rational {
    BigRational::from_float(x).expect("finite double")
}

/// Parse a rational literal: `3`, `-2`, `0.25`, `1/2`, `-7/3`.
pub fn parse_rational(text: &str) -> Result<Rational, PolyError> {
    let trimmed = text.trim();
    let (neg, body) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
    };
    let mut lexer = Lexer::new(body);
    let value = match lexer.next_token()? {
        Some((Token::Number(v), _)) => v,
        _ => {
            return Err(PolyError::Syntax {
                position: 0,
                message: format!("`{text}` is not a rational literal"),
            })
        }
    };
    if let Some((_, pos)) = lexer.next_token()? {
        return Err(PolyError::Syntax {
            position: pos,
            message: format!("trailing input in `{text}`"),
        });
    }
    Ok(if neg { -value } else { value })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    vars: Vec<String>,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl Polynomial {
    pub fn zero(vars: &[&str]) -> Self {
        Polynomial {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            terms: BTreeMap::new(),
        }
    }

    fn zero_like(&self) -> Self {
        Polynomial {
            vars: self.vars.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &[&str], c: Rational) -> Self {
        let mut p = Polynomial::zero(vars);
        p.add_term(vec![0; vars.len()], c);
        p
    }

    /// The polynomial consisting of the single variable `name`.
    pub fn var(vars: &[&str], name: &str) -> Result<Self, PolyError> {
        let idx = vars
            .iter()
            .position(|v| *v == name)
            .ok_or_else(|| PolyError::NoSuchVariable(name.to_string()))?;
        let mut p = Polynomial::zero(vars);
        let mut e = vec![0; vars.len()];
        e[idx] = 1;
        p.add_term(e, Rational::one());
        Ok(p)
    }

    /// Build from explicit `(exponents, coefficient)` pairs; like terms are collected.
    pub fn from_terms(
        vars: &[&str],
        terms: impl IntoIterator<Item = (Vec<u32>, Rational)>,
    ) -> Result<Self, PolyError> {
        let mut p = Polynomial::zero(vars);
        for (e, c) in terms {
            if e.len() != vars.len() {
                return Err(PolyError::DimensionMismatch {
                    expected: vars.len(),
                    got: e.len(),
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, exps: Vec<u32>, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn parse(text: &str, vars: &[&str]) -> Result<Self, PolyError> {
        Parser::new(text, vars)?.parse()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, exps: &[u32]) -> Rational {
        self.terms.get(exps).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn constant_term(&self) -> Rational {
        self.coefficient(&vec![0; self.vars.len()])
    }

    /// Total degree; `-1` for the zero polynomial.
    pub fn degree(&self) -> i64 {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as i64).sum::<i64>())
            .max()
            .unwrap_or(-1)
    }

    /// Smallest total degree among the terms; `None` for the zero polynomial.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum::<u32>()).min()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms
            .values()
            .map(|c| rat_to_f64(c).abs())
            .fold(0.0, f64::max)
    }

    fn check_same_vars(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.vars != other.vars {
            return Err(PolyError::VariableMismatch {
                left: self.vars.clone(),
                right: other.vars.clone(),
            });
        }
        Ok(())
    }

    fn check_dim(&self, got: usize) -> Result<(), PolyError> {
        if got != self.vars.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.vars.len(),
                got,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same_vars(other)?;
        let mut out = self.zero_like();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &Rational) -> Polynomial {
        let mut out = self.zero_like();
        if c.is_zero() {
            return out;
        }
        out.terms = self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect();
        out
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut result = Polynomial::constant(
            &self.vars.iter().map(String::as_str).collect::<Vec<_>>(),
            Rational::one(),
        );
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    pub fn partial(&self, var: &str) -> Result<Polynomial, PolyError> {
        let idx = self
            .vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| PolyError::NoSuchVariable(var.to_string()))?;
        Ok(self.partial_index(idx))
    }

    pub(crate) fn partial_index(&self, idx: usize) -> Polynomial {
        let mut out = self.zero_like();
        for (e, c) in &self.terms {
            if e[idx] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[idx] -= 1;
            out.add_term(e2, c * BigInt::from(e[idx]));
        }
        out
    }

    /// `q(u) = self(u + center)`.
    pub fn shift(&self, center: &[Rational]) -> Result<Polynomial, PolyError> {
        self.check_dim(center.len())?;
        if center.iter().all(Zero::is_zero) {
            return Ok(self.clone());
        }
        let names: Vec<&str> = self.vars.iter().map(String::as_str).collect();
        let linear: Vec<Polynomial> = center
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut e = vec![0; names.len()];
                e[i] = 1;
                Polynomial::from_terms(
                    &names,
                    [(e, Rational::one()), (vec![0; names.len()], c.clone())],
                )
                .expect("dimensions match")
            })
            .collect();
        let mut out = self.zero_like();
        for (e, c) in &self.terms {
            let mut term = Polynomial::constant(&names, c.clone());
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = &term * &linear[i].pow(k);
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }

    pub fn evaluate_rational(&self, point: &[Rational]) -> Result<Rational, PolyError> {
        self.check_dim(point.len())?;
        let sorted: Vec<(&[u32], &Rational)> = self
            .terms
            .iter()
            .rev()
            .map(|(e, c)| (e.as_slice(), c))
            .collect();
        Ok(horner_rat(&sorted, 0, point))
    }

    pub fn evaluate_float(&self, point: &[f64]) -> Result<f64, PolyError> {
        self.check_dim(point.len())?;
        Ok(self.to_float().eval(point))
    }

    /// Certified enclosure of the polynomial over a box.
    pub fn evaluate_interval(&self, boxes: &[Interval]) -> Result<Interval, PolyError> {
        self.check_dim(boxes.len())?;
        let mut acc = Interval::point(Rational::zero());
        for (e, c) in &self.terms {
            let mut term = Interval::point(c.clone());
            for (b, &k) in boxes.iter().zip(e) {
                if k > 0 {
                    term = term.mul(&b.powi(k));
                }
            }
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// Double-precision copy for repeated evaluation.
    pub fn to_float(&self) -> FloatPoly {
        FloatPoly {
            nvars: self.vars.len(),
            terms: self
                .terms
                .iter()
                .rev()
                .map(|(e, c)| (e.clone(), rat_to_f64(c)))
                .collect(),
        }
    }

    /// Sum of `|c| * |point|^e` over the terms: the scale of float rounding in an evaluation.
    pub fn magnitude_float(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(point)
                    .fold(rat_to_f64(c).abs(), |acc, (&k, &x)| {
                        acc * x.abs().powi(k as i32)
                    })
            })
            .sum()
    }
}

fn horner_rat(terms: &[(&[u32], &Rational)], k: usize, pt: &[Rational]) -> Rational {
    if terms.is_empty() {
        return Rational::zero();
    }
    if k == pt.len() {
        return terms.iter().map(|(_, c)| (*c).clone()).sum();
    }
    let x = &pt[k];
    let mut acc = Rational::zero();
    let mut prev = terms[0].0[k];
    let mut i = 0;
    while i < terms.len() {
        let e = terms[i].0[k];
        let mut j = i;
        while j < terms.len() && terms[j].0[k] == e {
            j += 1;
        }
        acc = acc * pow_rat(x, prev - e) + horner_rat(&terms[i..j], k + 1, pt);
        prev = e;
        i = j;
    }
    acc * pow_rat(x, prev)
}

/// Polynomial with `f64` coefficients, terms sorted by descending exponent vector
/// so that nested Horner evaluation walks contiguous groups.
#[derive(Debug, Clone)]
pub struct FloatPoly {
    nvars: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl FloatPoly {
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.nvars);
        horner_f64(&self.terms, 0, point)
    }

    /// Sum of `|c| * |point|^e` over the terms.
    pub fn magnitude(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(point)
                    .fold(c.abs(), |acc, (&k, &x)| acc * x.abs().powi(k as i32))
            })
            .sum()
    }
}

fn horner_f64(terms: &[(Vec<u32>, f64)], k: usize, pt: &[f64]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    if k == pt.len() {
        return terms.iter().map(|t| t.1).sum();
    }
    let x = pt[k];
    let mut acc = 0.0;
    let mut prev = terms[0].0[k];
    let mut i = 0;
    while i < terms.len() {
        let e = terms[i].0[k];
        let mut j = i;
        while j < terms.len() && terms[j].0[k] == e {
            j += 1;
        }
        acc = acc * x.powi((prev - e) as i32) + horner_f64(&terms[i..j], k + 1, pt);
        prev = e;
        i = j;
    }
    acc * x.powi(prev as i32)
}

macro_rules! impl_op {
    ($tr:ident, $m:ident, $checked:ident) => {
        impl std::ops::$tr<&Polynomial> for &Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: &Polynomial) -> Polynomial {
                self.$checked(rhs)
                    .expect("polynomials over different variables")
            }
        }
    };
}
impl_op!(Add, add, checked_add);
impl_op!(Sub, sub, checked_sub);
impl_op!(Mul, mul, checked_mul);

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(&-Rational::one())
    }
}

fn fmt_rational(c: &Rational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut ordered: Vec<(&Vec<u32>, &Rational)> = self.terms.iter().collect();
        ordered.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (i, (e, c)) in ordered.into_iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let monomial: Vec<String> = e
                .iter()
                .zip(&self.vars)
                .filter(|(k, _)| **k > 0)
                .map(|(k, v)| {
                    if *k == 1 {
                        v.clone()
                    } else {
                        format!("{v}^{k}")
                    }
                })
                .collect();
            if monomial.is_empty() {
                write!(f, "{}", fmt_rational(&mag))?;
            } else if mag.is_one() {
                write!(f, "{}", monomial.join("*"))?;
            } else {
                write!(f, "{}*{}", fmt_rational(&mag), monomial.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(Rational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            src: text.as_bytes(),
            pos: 0,
        }
    }

    fn digits(&mut self) -> &'a [u8] {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn next_token(&mut self) -> Result<Option<(Token, usize)>, PolyError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&ch) = self.src.get(self.pos) else {
            return Ok(None);
        };
        let tok = match ch {
            b'+' => {
                self.pos += 1;
                Token::Plus
            }
            b'-' => {
                self.pos += 1;
                Token::Minus
            }
            b'*' => {
                self.pos += 1;
                Token::Star
            }
            b'^' => {
                self.pos += 1;
                Token::Caret
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'0'..=b'9' => Token::Number(self.number(start)?),
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Token::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            other => {
                return Err(PolyError::Syntax {
                    position: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }

    fn number(&mut self, start: usize) -> Result<Rational, PolyError> {
        let int_part = self.digits();
        let mut value = Rational::from_integer(parse_digits(int_part));
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            let frac = self.digits();
            if frac.is_empty() {
                return Err(PolyError::Syntax {
                    position: self.pos,
                    message: "expected digits after decimal point".into(),
                });
            }
            let scale = num_traits::pow(BigInt::from(10), frac.len());
            value += Rational::new(parse_digits(frac), scale);
        }
        if self.src.get(self.pos) == Some(&b'/')
            && self.src.get(self.pos + 1).is_some_and(u8::is_ascii_digit)
        {
            self.pos += 1;
            let den = parse_digits(self.digits());
            if den.is_zero() {
                return Err(PolyError::Syntax {
                    position: start,
                    message: "zero denominator".into(),
                });
            }
            value /= Rational::from_integer(den);
        }
        Ok(value)
    }
}

fn parse_digits(d: &[u8]) -> BigInt {
    BigInt::parse_bytes(d, 10).expect("ascii digits")
}

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    idx: usize,
    end: usize,
    vars: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn new(text: &str, vars: &'a [&'a str]) -> Result<Self, PolyError> {
        let mut lexer = Lexer::new(text);
        let mut tokens = Vec::new();
        while let Some(t) = lexer.next_token()? {
            tokens.push(t);
        }
        Ok(Parser {
            tokens,
            idx: 0,
            end: text.len(),
            vars,
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx).map(|t| &t.0)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.end, |t| t.1)
    }

    fn syntax(&self, message: impl Into<String>) -> PolyError {
        PolyError::Syntax {
            position: self.position(),
            message: message.into(),
        }
    }

    fn parse(mut self) -> Result<Polynomial, PolyError> {
        if self.tokens.is_empty() {
            return Err(self.syntax("empty expression"));
        }
        let p = self.expr()?;
        if self.idx != self.tokens.len() {
            return Err(self.syntax("unexpected token"));
        }
        Ok(p)
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let negate = if self.peek() == Some(&Token::Minus) {
            self.idx += 1;
            true
        } else {
            false
        };
        let mut acc = self.term()?;
        if negate {
            acc = -&acc;
        }
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.idx += 1;
                    let t = self.term()?;
                    acc = &acc + &t;
                }
                Some(Token::Minus) => {
                    self.idx += 1;
                    let t = self.term()?;
                    acc = &acc - &t;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        while self.peek() == Some(&Token::Star) {
            self.idx += 1;
            let pos = self.position();
            let f = self.factor()?;
            acc = &acc * &f;
            let deg = acc.degree();
            if deg > MAX_DEGREE as i64 {
                return Err(PolyError::DegreeTooHigh {
                    degree: deg as u32,
                    position: pos,
                });
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.base()?;
        if self.peek() != Some(&Token::Caret) {
            return Ok(base);
        }
        self.idx += 1;
        let pos = self.position();
        let exponent = match self.peek() {
            Some(Token::Number(v)) if v.is_integer() => v.to_integer(),
            Some(Token::Number(_)) | Some(Token::Minus) => {
                return Err(PolyError::BadExponent { position: pos })
            }
            _ => return Err(self.syntax("expected exponent")),
        };
        self.idx += 1;
        let base_deg = base.degree().max(0) as u64;
        let e = exponent
            .to_u32()
            .filter(|&e| base_deg * e as u64 <= MAX_DEGREE as u64);
        match e {
            Some(e) => Ok(base.pow(e)),
            None if base_deg == 0 => match exponent.to_u32() {
                Some(e) => Ok(base.pow(e)),
                None => Err(PolyError::BadExponent { position: pos }),
            },
            None => Err(PolyError::DegreeTooHigh {
                degree: exponent
                    .to_u64()
                    .map_or(u32::MAX, |e| (base_deg * e).min(u32::MAX as u64) as u32),
                position: pos,
            }),
        }
    }

    fn base(&mut self) -> Result<Polynomial, PolyError> {
        let pos = self.position();
        match self.peek().cloned() {
            Some(Token::Number(v)) => {
                self.idx += 1;
                Ok(Polynomial::constant(self.vars, v))
            }
            Some(Token::Ident(name)) => {
                self.idx += 1;
                Polynomial::var(self.vars, &name).map_err(|_| PolyError::UnknownVariable {
                    name,
                    position: pos,
                })
            }
            Some(Token::LParen) => {
                self.idx += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(self.syntax("expected `)`"));
                }
                self.idx += 1;
                Ok(inner)
            }
            Some(_) => Err(self.syntax("expected number, variable or `(`")),
            None => Err(self.syntax("unexpected end of input")),
        }
    }
}
