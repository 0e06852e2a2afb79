//! Exact real-root isolation for univariate rational polynomials.
//!
//! Isolation runs on the square-free part with a Sturm sequence whose
//! members are kept primitive over the integers, so every sign decision is
//! exact. Bisection points are dyadic, which means roots at small dyadic
//! rationals (0, ±1, ±1/2, ...) are usually hit exactly and reported as
//! point boxes.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::polynomial::{rat_to_f64, Interval, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RootError {
    #[error("the zero polynomial has no isolated roots")]
    ZeroPolynomial,
}

/// Dense univariate polynomial, `coeffs[i]` multiplies `t^i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniPoly {
    coeffs: Vec<Rational>,
}

impl UniPoly {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        UniPoly { coeffs }
    }

    pub fn from_ints(coeffs: &[i64]) -> Self {
        UniPoly::new(
            coeffs
                .iter()
                .map(|&c| Rational::from_integer(c.into()))
                .collect(),
        )
    }

    /// `∏ (t - r)` over the given roots.
    pub fn from_roots(roots: &[Rational]) -> Self {
        roots.iter().fold(UniPoly::from_ints(&[1]), |acc, r| {
            acc.mul(&UniPoly::new(vec![-r, Rational::one()]))
        })
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `-1` for zero.
    pub fn degree(&self) -> i64 {
        self.coeffs.len() as i64 - 1
    }

    fn leading(&self) -> &Rational {
        self.coeffs.last().expect("nonzero polynomial")
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        self.coeffs
            .iter()
            .rev()
            .fold(Rational::zero(), |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> UniPoly {
        UniPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigInt::from(i))
                .collect(),
        )
    }

    pub fn mul(&self, other: &UniPoly) -> UniPoly {
        if self.is_zero() || other.is_zero() {
            return UniPoly::new(vec![]);
        }
        let mut out = vec![Rational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UniPoly::new(out)
    }

    pub fn scale(&self, c: &Rational) -> UniPoly {
        UniPoly::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    /// Euclidean division; `divisor` must be nonzero.
    pub fn div_rem(&self, divisor: &UniPoly) -> (UniPoly, UniPoly) {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        let mut rem = self.coeffs.clone();
        let dlen = divisor.coeffs.len();
        if rem.len() < dlen {
            return (UniPoly::new(vec![]), self.clone());
        }
        let lead = divisor.leading();
        let mut quot = vec![Rational::zero(); rem.len() - dlen + 1];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dlen - 1] / lead;
            if !c.is_zero() {
                for (j, d) in divisor.coeffs.iter().enumerate() {
                    rem[k + j] -= &c * d;
                }
            }
            quot[k] = c;
        }
        rem.truncate(dlen - 1);
        (UniPoly::new(quot), UniPoly::new(rem))
    }

    /// Positive rational multiple with coprime integer coefficients.
    pub fn primitive(&self) -> UniPoly {
        if self.is_zero() {
            return self.clone();
        }
        let lcm = self
            .coeffs
            .iter()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let ints: Vec<BigInt> = self
            .coeffs
            .iter()
            .map(|c| (c * Rational::from_integer(lcm.clone())).to_integer())
            .collect();
        let content = ints.iter().fold(BigInt::zero(), |acc, c| acc.gcd(c));
        UniPoly::new(
            ints.into_iter()
                .map(|c| Rational::from_integer(c / &content))
                .collect(),
        )
    }

    pub fn gcd(&self, other: &UniPoly) -> UniPoly {
        let mut a = self.primitive();
        let mut b = other.primitive();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r.primitive();
        }
        if a.is_zero() {
            return a;
        }
        let lead = a.leading().clone();
        a.scale(&lead.recip())
    }

    fn to_int(&self) -> IntPoly {
        let p = self.primitive();
        IntPoly(p.coeffs.iter().map(|c| c.to_integer()).collect())
    }
}

/// Integer-coefficient polynomial used for exact sign evaluation.
#[derive(Debug, Clone)]
struct IntPoly(Vec<BigInt>);

impl IntPoly {
    /// Sign of `p(n/d)` computed without fractions: `d^deg * p(n/d)`.
    fn sign_at(&self, x: &Rational) -> Sign {
        let n = x.numer();
        let d = x.denom();
        let mut acc = BigInt::zero();
        let mut dpow = BigInt::one();
        for (i, c) in self.0.iter().rev().enumerate() {
            if i == 0 {
                acc = c.clone();
            } else {
                dpow *= d;
                acc = acc * n + c * &dpow;
            }
        }
        acc.sign()
    }
}

fn sturm_chain(sqfree: &UniPoly) -> Vec<IntPoly> {
    let mut chain = vec![sqfree.primitive(), sqfree.derivative().primitive()];
    while !chain[chain.len() - 1].is_zero() {
        let n = chain.len();
        let (_, r) = chain[n - 2].div_rem(&chain[n - 1]);
        if r.is_zero() {
            break;
        }
        chain.push(r.scale(&-Rational::one()).primitive());
    }
    chain.retain(|p| !p.is_zero());
    chain.iter().map(UniPoly::to_int).collect()
}

/// `u / gcd(u, u')`, normalized to a primitive integer polynomial.
pub fn squarefree(u: &UniPoly) -> Result<UniPoly, RootError> {
    if u.is_zero() {
        return Err(RootError::ZeroPolynomial);
    }
    let g = u.gcd(&u.derivative());
    Ok(u.div_rem(&g).0.primitive())
}

/// Yun's decomposition: `u = c * ∏ a_i^i` with the `a_i` square-free and coprime.
fn squarefree_factors(u: &UniPoly) -> Vec<(UniPoly, u32)> {
    let mut out = Vec::new();
    let du = u.derivative();
    let a0 = u.gcd(&du);
    let mut b = u.div_rem(&a0).0;
    let mut c = du.div_rem(&a0).0;
    let mut d = c_sub(&c, &b.derivative());
    let mut i = 1;
    while b.degree() > 0 {
        let a = b.gcd(&d);
        b = b.div_rem(&a).0;
        c = d.div_rem(&a).0;
        if a.degree() > 0 {
            out.push((a.primitive(), i));
        }
        d = c_sub(&c, &b.derivative());
        i += 1;
    }
    out
}

fn c_sub(a: &UniPoly, b: &UniPoly) -> UniPoly {
    let n = a.coeffs.len().max(b.coeffs.len());
    UniPoly::new(
        (0..n)
            .map(|i| {
                a.coeffs.get(i).cloned().unwrap_or_else(Rational::zero)
                    - b.coeffs.get(i).cloned().unwrap_or_else(Rational::zero)
            })
            .collect(),
    )
}

/// An interval isolating exactly one root of the square-free part.
#[derive(Debug, Clone, PartialEq)]
pub struct RootBox {
    pub interval: Interval,
    pub multiplicity: u32,
    pub refined: f64,
}

impl RootBox {
    pub fn is_exact(&self) -> bool {
        self.interval.is_point()
    }
}

/// Cached square-free part, Sturm chain and multiplicity factors of one polynomial.
#[derive(Debug, Clone)]
pub struct Isolator {
    sqfree: IntPoly,
    degree: i64,
    chain: Vec<IntPoly>,
    factors: Vec<(IntPoly, u32)>,
    bound: Rational,
}

impl Isolator {
    pub fn new(u: &UniPoly) -> Result<Self, RootError> {
        let sf = squarefree(u)?;
        let factors = squarefree_factors(u)
            .into_iter()
            .map(|(a, m)| (a.to_int(), m))
            .collect();
        Ok(Isolator {
            sqfree: sf.to_int(),
            degree: sf.degree(),
            chain: sturm_chain(&sf),
            factors,
            bound: root_bound(&sf),
        })
    }

    /// Power of two strictly greater than the modulus of every root.
    pub fn root_bound(&self) -> &Rational {
        &self.bound
    }

    fn variations(&self, x: &Rational) -> usize {
        let mut last = Sign::NoSign;
        let mut count = 0;
        for p in &self.chain {
            let s = p.sign_at(x);
            if s == Sign::NoSign {
                continue;
            }
            if last != Sign::NoSign && s != last {
                count += 1;
            }
            last = s;
        }
        count
    }

    /// Number of distinct roots in the half-open interval `(a, b]`.
    pub fn count_half_open(&self, a: &Rational, b: &Rational) -> usize {
        let va = self.variations(a);
        let vb = self.variations(b);
        debug_assert!(va >= vb);
        va - vb
    }

    pub fn is_root(&self, x: &Rational) -> bool {
        self.sqfree.sign_at(x) == Sign::NoSign
    }

    /// Number of distinct roots in the closed interval `[lo, hi]`.
    pub fn count(&self, range: &Interval) -> usize {
        self.count_half_open(&range.lo, &range.hi) + usize::from(self.is_root(&range.lo))
    }

    pub fn isolate(&self, range: &Interval) -> Vec<RootBox> {
        if self.degree <= 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        if self.is_root(&range.lo) {
            out.push(self.make_box(Interval::point(range.lo.clone())));
        }
        let total = self.count_half_open(&range.lo, &range.hi);
        self.split(range.lo.clone(), range.hi.clone(), total, &mut out);
        debug_assert_eq!(out.len(), self.count(range));
        out
    }

    pub fn isolate_all(&self) -> Vec<RootBox> {
        let b = self.bound.clone();
        self.isolate(&Interval::new(-&b, b))
    }

    fn split(&self, a: Rational, b: Rational, count: usize, out: &mut Vec<RootBox>) {
        if count == 0 {
            return;
        }
        if count == 1 {
            let iv = if self.is_root(&b) {
                Interval::point(b)
            } else {
                self.detach(a, b)
            };
            out.push(self.make_box(iv));
            return;
        }
        let m = (&a + &b) / BigInt::from(2);
        let left = self.count_half_open(&a, &m);
        self.split(a, m.clone(), left, out);
        self.split(m, b, count - left, out);
    }

    /// Shrink `(a, b)` holding one root until the left endpoint is not itself a root.
    fn detach(&self, mut a: Rational, mut b: Rational) -> Interval {
        while self.is_root(&a) {
            let m = (&a + &b) / BigInt::from(2);
            if self.is_root(&m) {
                return Interval::point(m);
            }
            if self.count_half_open(&a, &m) == 1 {
                b = m;
            } else {
                a = m;
            }
        }
        Interval::new(a, b)
    }

    fn make_box(&self, interval: Interval) -> RootBox {
        let multiplicity = self.multiplicity(&interval);
        let refined = rat_to_f64(&interval.midpoint());
        RootBox {
            interval,
            multiplicity,
            refined,
        }
    }

    fn multiplicity(&self, iv: &Interval) -> u32 {
        for (a, m) in &self.factors {
            let hit = if iv.is_point() {
                a.sign_at(&iv.lo) == Sign::NoSign
            } else {
                a.sign_at(&iv.lo) != a.sign_at(&iv.hi)
            };
            if hit {
                return *m;
            }
        }
        unreachable!("isolated root belongs to no square-free factor")
    }

    /// One exact bisection step; returns the narrowed box.
    pub fn bisect(&self, rb: &RootBox) -> RootBox {
        if rb.is_exact() {
            return rb.clone();
        }
        let lo = &rb.interval.lo;
        let hi = &rb.interval.hi;
        let m = (lo + hi) / BigInt::from(2);
        let sm = self.sqfree.sign_at(&m);
        let interval = if sm == Sign::NoSign {
            Interval::point(m)
        } else if sm == self.sqfree.sign_at(hi) {
            Interval::new(lo.clone(), m)
        } else {
            Interval::new(m, hi.clone())
        };
        RootBox {
            refined: rat_to_f64(&interval.midpoint()),
            interval,
            multiplicity: rb.multiplicity,
        }
    }

    pub fn refine(&self, rb: &RootBox, width: &Rational) -> RootBox {
        let mut cur = rb.clone();
        while !cur.is_exact() && &cur.interval.width() >= width {
            cur = self.bisect(&cur);
        }
        cur
    }
}

/// Cauchy bound rounded up to a power of two.
fn root_bound(u: &UniPoly) -> Rational {
    if u.degree() <= 0 {
        return Rational::one();
    }
    let lead = u.leading().abs();
    let max_ratio = u.coeffs[..u.coeffs.len() - 1]
        .iter()
        .map(|c| c.abs() / &lead)
        .fold(Rational::zero(), |a, b| if b > a { b } else { a });
    let cauchy = max_ratio + Rational::one();
    let mut b = Rational::one();
    while b <= cauchy {
        b *= Rational::from_integer(2.into());
    }
    b
}

/// Isolate the real roots of `u` inside the closed `range`.
pub fn sturm_isolate(u: &UniPoly, range: &Interval) -> Result<Vec<RootBox>, RootError> {
    Ok(Isolator::new(u)?.isolate(range))
}

/// Narrow `rb` (a box isolating a root of `u`) below `width`.
pub fn refine(u: &UniPoly, rb: &RootBox, width: &Rational) -> RootBox {
    let iso = Isolator::new(u).expect("box came from a nonzero polynomial");
    iso.refine(rb, width)
}
