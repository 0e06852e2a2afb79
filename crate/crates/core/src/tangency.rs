//! Function models, the tangency polynomial, and exact circle slicing.
//!
//! All geometry is done in centered coordinates `u = x - x̄`, so values of
//! `f(x̄ + u) - f(x̄)` keep full relative precision even when they are far
//! below `f(x̄)`.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{
    pow_rat, rat_to_f64, FloatPoly, Interval, PolyError, Polynomial, Rational,
};
use crate::realroots::{Isolator, RootBox, UniPoly};

pub const VARS: [&str; 2] = ["x", "y"];

/// Relative zero test for `p` at a float point: `|p| <= ZERO_REL * Σ|c·mono|`.
pub const ZERO_REL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TangencyError {
    #[error("analysis needs exactly 2 variables, the polynomial has {0}")]
    WrongVariableCount(usize),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("radius must be positive")]
    NonPositiveRadius,
    #[error("tangency polynomial vanishes identically; every circle is tangent")]
    DegenerateTangency,
    #[error("circle of radius {0} lies inside the tangency set")]
    DegenerateSlice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `f = q` for a polynomial `q`.
    Smooth,
    /// `f = |p|` for a polynomial `p`.
    AbsOfPoly,
}

#[derive(Debug, Clone)]
pub struct FunctionModel {
    kind: ModelKind,
    body: Polynomial,
    center: [Rational; 2],
    value_at_center: Rational,
    /// `body(x̄ + u)`.
    centered: Polynomial,
    /// `body(x̄ + u) - body(x̄)`.
    rest: Polynomial,
    body_at_center: Rational,
    body_at_center_f: f64,
    rest_f: FloatPoly,
    centered_f: FloatPoly,
    grad_f: [FloatPoly; 2],
}

impl FunctionModel {
    pub fn new(
        kind: ModelKind,
        body: Polynomial,
        center: [Rational; 2],
    ) -> Result<Self, TangencyError> {
        if body.nvars() != 2 {
            return Err(TangencyError::WrongVariableCount(body.nvars()));
        }
        let centered = body.shift(&center)?;
        let c0 = centered.constant_term();
        let rest = &centered - &Polynomial::constant(&var_names(&body), c0.clone());
        let value_at_center = match kind {
            ModelKind::Smooth => c0.clone(),
            ModelKind::AbsOfPoly => c0.abs(),
        };
        let grad_f = [
            centered.partial_index(0).to_float(),
            centered.partial_index(1).to_float(),
        ];
        Ok(FunctionModel {
            kind,
            body,
            center,
            value_at_center,
            rest_f: rest.to_float(),
            centered_f: centered.to_float(),
            body_at_center_f: rat_to_f64(&c0),
            body_at_center: c0,
            centered,
            rest,
            grad_f,
        })
    }

    /// Parse `text` over variables `x, y`.
    pub fn parse(
        kind: ModelKind,
        text: &str,
        center: [Rational; 2],
    ) -> Result<Self, TangencyError> {
        let body = Polynomial::parse(text, &VARS)?;
        FunctionModel::new(kind, body, center)
    }

    pub fn smooth(text: &str) -> Result<Self, TangencyError> {
        Self::parse(
            ModelKind::Smooth,
            text,
            [Rational::zero(), Rational::zero()],
        )
    }

    pub fn abs_of(text: &str) -> Result<Self, TangencyError> {
        Self::parse(
            ModelKind::AbsOfPoly,
            text,
            [Rational::zero(), Rational::zero()],
        )
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn body(&self) -> &Polynomial {
        &self.body
    }

    pub fn center(&self) -> &[Rational; 2] {
        &self.center
    }

    pub fn center_f64(&self) -> [f64; 2] {
        [rat_to_f64(&self.center[0]), rat_to_f64(&self.center[1])]
    }

    pub fn value_at_center(&self) -> &Rational {
        &self.value_at_center
    }

    pub fn value_at_center_f64(&self) -> f64 {
        rat_to_f64(&self.value_at_center)
    }

    /// The body in centered coordinates.
    pub fn centered(&self) -> &Polynomial {
        &self.centered
    }

    /// Same kind of model for `c * body`, `c > 0`.
    pub fn scaled(&self, c: &Rational) -> Result<Self, TangencyError> {
        FunctionModel::new(self.kind, self.body.scale(c), self.center.clone())
    }

    /// `f(x̄ + u) - f(x̄)` in double precision.
    pub fn delta(&self, u: [f64; 2]) -> f64 {
        let r = self.rest_f.eval(&u);
        match self.kind {
            ModelKind::Smooth => r,
            ModelKind::AbsOfPoly => {
                let c0 = self.body_at_center_f;
                if c0 == 0.0 {
                    return r.abs();
                }
                let v = c0 + r;
                if v.signum() == c0.signum() {
                    c0.signum() * r
                } else {
                    v.abs() - c0.abs()
                }
            }
        }
    }

    /// `f(point)` at an absolute point.
    pub fn value(&self, point: [f64; 2]) -> f64 {
        let c = self.center_f64();
        self.value_at_center_f64() + self.delta([point[0] - c[0], point[1] - c[1]])
    }

    /// Certified enclosure of `f(x̄ + u) - f(x̄)` over a box of centered coordinates.
    pub fn delta_enclosure(&self, ux: &Interval, uy: &Interval) -> Interval {
        let r = self
            .rest
            .evaluate_interval(&[ux.clone(), uy.clone()])
            .expect("two coordinates");
        match self.kind {
            ModelKind::Smooth => r,
            ModelKind::AbsOfPoly => {
                let c0 = &self.body_at_center;
                if c0.is_zero() {
                    r.abs()
                } else {
                    let v = r.add(&Interval::point(c0.clone())).abs();
                    v.sub(&Interval::point(c0.abs()))
                }
            }
        }
    }

    fn grad_norm(&self, u: [f64; 2]) -> f64 {
        self.grad_f[0].eval(&u).hypot(self.grad_f[1].eval(&u))
    }

    /// True when `p(x̄ + u)` is zero up to float rounding (AbsOfPoly only).
    pub fn on_zero_set_float(&self, u: [f64; 2]) -> bool {
        if self.kind != ModelKind::AbsOfPoly {
            return false;
        }
        let v = self.centered_f.eval(&u);
        v.abs() <= ZERO_REL * self.centered_f.magnitude(&u)
    }

    /// Nonsmooth slope at `x̄ + u`.
    pub fn slope_centered(&self, u: [f64; 2]) -> f64 {
        match self.kind {
            ModelKind::Smooth => self.grad_norm(u),
            ModelKind::AbsOfPoly => {
                if self.on_zero_set_float(u) {
                    0.0
                } else {
                    self.grad_norm(u)
                }
            }
        }
    }

    /// Nonsmooth slope (minimal subgradient norm) at an absolute point.
    pub fn slope(&self, point: [f64; 2]) -> f64 {
        let c = self.center_f64();
        self.slope_centered([point[0] - c[0], point[1] - c[1]])
    }

    /// `Σ |c| t^deg` over the non-constant terms: the size of `f - f(x̄)` on the circle of radius `t`.
    pub fn scale_at_radius(&self, t: f64) -> f64 {
        self.rest
            .terms()
            .map(|(e, c)| rat_to_f64(c).abs() * t.powi(e.iter().sum::<u32>() as i32))
            .sum()
    }
}

fn var_names(p: &Polynomial) -> Vec<&str> {
    p.vars().iter().map(String::as_str).collect()
}

/// `g(u) = u₂ ∂q/∂u₁ - u₁ ∂q/∂u₂` for the centered body `q`.
#[derive(Debug, Clone)]
pub struct TangencyPolynomial {
    pub g: Polynomial,
    pub model: FunctionModel,
}

pub fn tangency_polynomial(model: &FunctionModel) -> TangencyPolynomial {
    let q = model.centered();
    let names = var_names(q);
    let x = Polynomial::var(&names, names[0]).expect("declared");
    let y = Polynomial::var(&names, names[1]).expect("declared");
    let g = &(&y * &q.partial_index(0)) - &(&x * &q.partial_index(1));
    TangencyPolynomial {
        g,
        model: model.clone(),
    }
}

/// Position on the circle in Weierstrass form.
#[derive(Debug, Clone, PartialEq)]
pub enum AngleParam {
    /// `u = tan(θ/2)` isolated in a box.
    Finite(RootBox),
    /// `θ = π`, where `u` is infinite.
    Infinite,
}

#[derive(Debug, Clone)]
pub struct TangencyPoint {
    pub radius: Rational,
    pub angle: AngleParam,
    /// Radians in `[0, 2π)`.
    pub theta: f64,
    /// Absolute coordinates.
    pub position: [f64; 2],
    /// Offsets from the center.
    pub offset: [f64; 2],
    pub f_value: f64,
    /// `f_value - f(x̄)` computed without cancellation.
    pub delta: f64,
    /// Certified enclosure of `f - f(x̄)` at the point.
    pub delta_box: Interval,
    /// Root of the tangency polynomial.
    pub tangency: bool,
    /// Root of `p` (AbsOfPoly only).
    pub on_zero_set: bool,
}

impl TangencyPoint {
    pub fn f_value_box(&self, model: &FunctionModel) -> Interval {
        self.delta_box
            .add(&Interval::point(model.value_at_center().clone()))
    }
}

/// Clears `(1 + u²)^d` from `h(t(1-u²)/(1+u²), 2tu/(1+u²))` with `d = deg h`.
fn weierstrass(h: &Polynomial, t: &Rational) -> UniPoly {
    let d = h.degree();
    if d < 0 {
        return UniPoly::new(vec![]);
    }
    let d = d as u32;
    let one_minus = UniPoly::new(vec![Rational::one(), Rational::zero(), -Rational::one()]);
    let two_u = UniPoly::new(vec![Rational::zero(), Rational::from_integer(2.into())]);
    let one_plus = UniPoly::new(vec![Rational::one(), Rational::zero(), Rational::one()]);
    let powers = |p: &UniPoly| {
        let mut v = vec![UniPoly::from_ints(&[1])];
        for k in 1..=d as usize {
            v.push(v[k - 1].mul(p));
        }
        v
    };
    let pm = powers(&one_minus);
    let pu = powers(&two_u);
    let pp = powers(&one_plus);
    let mut acc = vec![Rational::zero(); 2 * d as usize + 1];
    for (e, c) in h.terms() {
        let (i, j) = (e[0] as usize, e[1] as usize);
        let coeff = c * pow_rat(t, (i + j) as u32);
        let term = pm[i].mul(&pu[j]).mul(&pp[d as usize - i - j]);
        for (k, a) in term.coeffs().iter().enumerate() {
            acc[k] += &coeff * a;
        }
    }
    UniPoly::new(acc)
}

/// Centered coordinates of the circle point with parameter box `u`.
fn circle_box(t: &Rational, u: &Interval) -> (Interval, Interval) {
    let two = Rational::from_integer(2.into());
    if u.is_point() {
        let m = &u.lo;
        let den = Rational::one() + m * m;
        let x = t * (Rational::one() - m * m) / &den;
        let y = t * &two * m / &den;
        return (Interval::point(x), Interval::point(y));
    }
    let den = u.powi(2).add(&Interval::point(Rational::one()));
    let inv = Interval::new(den.hi.recip(), den.lo.recip());
    let x = inv
        .scale(&two)
        .sub(&Interval::point(Rational::one()))
        .scale(t);
    let y = u.mul(&inv).scale(&(t * &two));
    (x, y)
}

/// `(cos θ, sin θ)`, exact at multiples of a quarter turn.
pub fn unit_vector(theta: f64) -> [f64; 2] {
    let quarter = std::f64::consts::FRAC_PI_2;
    let q = (theta / quarter).floor();
    let phi = theta - q * quarter;
    let (c, s) = (phi.cos(), phi.sin());
    match (q as i64).rem_euclid(4) {
        0 => [c, s],
        1 => [-s, c],
        2 => [-c, -s],
        _ => [s, -c],
    }
}

fn theta_of(u: f64) -> f64 {
    let th = 2.0 * u.atan();
    if th < 0.0 {
        th + 2.0 * PI
    } else {
        th
    }
}

/// Smallest `u`-width before enclosure refinement stops.
fn width_floor() -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << 256usize)
}

/// Enclosure relative width target.
const ENCLOSURE_REL: f64 = 1e-9;
/// Enclosure absolute target, relative to the term scale on the circle.
const ENCLOSURE_SCALE: f64 = 1e-24;

impl TangencyPolynomial {
    pub fn is_degenerate(&self) -> bool {
        self.g.is_zero()
    }

    /// All points of the tangency set on the circle of radius `t` around the center.
    pub fn circle_slice(&self, t: &Rational) -> Result<Vec<TangencyPoint>, TangencyError> {
        if !t.is_positive() {
            return Err(TangencyError::NonPositiveRadius);
        }
        if self.g.is_zero() {
            return Err(TangencyError::DegenerateTangency);
        }
        let model = &self.model;
        let zero_poly = match model.kind() {
            ModelKind::AbsOfPoly => Some(model.centered()),
            ModelKind::Smooth => None,
        };
        let gu = weierstrass(&self.g, t);
        if gu.is_zero() {
            return Err(TangencyError::DegenerateSlice(t.to_string()));
        }
        let pu = zero_poly.map(|p| weierstrass(p, t));
        if pu.as_ref().is_some_and(UniPoly::is_zero) {
            return Err(TangencyError::DegenerateSlice(t.to_string()));
        }
        let combined = match &pu {
            Some(p) => gu.mul(p),
            None => gu.clone(),
        };
        let iso = Isolator::new(&combined).expect("nonzero");
        let iso_g = Isolator::new(&gu).expect("nonzero");
        let iso_p = pu.as_ref().map(|p| Isolator::new(p).expect("nonzero"));

        let tf = rat_to_f64(t);
        let scale = model.scale_at_radius(tf);
        // Offsets near the center need relative accuracy, so the parameter width scales with t.
        let start_width = t * Rational::new(BigInt::one(), BigInt::one() << 64usize);
        let mut points = Vec::new();
        for rb in iso.isolate_all() {
            let rb = iso.refine(&rb, &start_width);
            let in_set = |i: &Isolator| {
                if rb.is_exact() {
                    i.is_root(&rb.interval.lo)
                } else {
                    i.count_half_open(&rb.interval.lo, &rb.interval.hi) > 0
                }
            };
            let tangency = in_set(&iso_g);
            let on_zero_set = iso_p.as_ref().is_some_and(in_set);
            let (rb, delta_box) = self.certify(&iso, rb, t, scale);
            points.push(self.make_point(
                t,
                AngleParam::Finite(rb),
                delta_box,
                tangency,
                on_zero_set,
            ));
        }

        // θ = π is u = ∞ and never appears among the roots of the Weierstrass form.
        let west = [-t.clone(), Rational::zero()];
        let g_west = self.g.evaluate_rational(&west)?.is_zero();
        let p_west = zero_poly
            .map(|p| p.evaluate_rational(&west).map(|v| v.is_zero()))
            .transpose()?
            .unwrap_or(false);
        if g_west || p_west {
            let db = model.delta_enclosure(
                &Interval::point(-t.clone()),
                &Interval::point(Rational::zero()),
            );
            points.push(self.make_point(t, AngleParam::Infinite, db, g_west, p_west));
        }
        points.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        Ok(points)
    }

    /// The point at `θ = 0`, used when every circle is a level set.
    pub fn east_point(&self, t: &Rational) -> Result<TangencyPoint, TangencyError> {
        if !t.is_positive() {
            return Err(TangencyError::NonPositiveRadius);
        }
        let east = [t.clone(), Rational::zero()];
        let on_zero = match self.model.kind() {
            ModelKind::AbsOfPoly => self.model.centered().evaluate_rational(&east)?.is_zero(),
            ModelKind::Smooth => false,
        };
        let db = self.model.delta_enclosure(
            &Interval::point(east[0].clone()),
            &Interval::point(Rational::zero()),
        );
        let rb = RootBox {
            interval: Interval::point(Rational::zero()),
            multiplicity: 1,
            refined: 0.0,
        };
        Ok(self.make_point(t, AngleParam::Finite(rb), db, self.g.is_zero(), on_zero))
    }

    /// Narrow the parameter box until the value enclosure is tight.
    fn certify(
        &self,
        iso: &Isolator,
        mut rb: RootBox,
        t: &Rational,
        scale: f64,
    ) -> (RootBox, Interval) {
        let floor = width_floor();
        let step = Rational::new(BigInt::one(), BigInt::one() << 32usize);
        loop {
            let (bx, by) = circle_box(t, &rb.interval);
            let db = self.model.delta_enclosure(&bx, &by);
            let w = rat_to_f64(&db.width());
            let mid = rat_to_f64(&db.midpoint()).abs();
            let tight = db.is_point()
                || (db.certified_sign() != 0 && w <= ENCLOSURE_REL * mid)
                || w <= ENCLOSURE_SCALE * scale;
            if tight || rb.interval.width() < floor {
                return (rb, db);
            }
            let target = rb.interval.width() * &step;
            rb = iso.refine(&rb, &target);
        }
    }

    fn make_point(
        &self,
        t: &Rational,
        angle: AngleParam,
        delta_box: Interval,
        tangency: bool,
        on_zero_set: bool,
    ) -> TangencyPoint {
        let model = &self.model;
        let (theta, offset) = match &angle {
            AngleParam::Finite(rb) => {
                let m = rb.interval.midpoint();
                let (x, y) = circle_box(t, &Interval::point(m));
                (theta_of(rb.refined), [rat_to_f64(&x.lo), rat_to_f64(&y.lo)])
            }
            AngleParam::Infinite => (PI, [-rat_to_f64(t), 0.0]),
        };
        let delta = if delta_box.is_point() {
            rat_to_f64(&delta_box.lo)
        } else {
            let lo = rat_to_f64(&delta_box.lo);
            let hi = rat_to_f64(&delta_box.hi);
            model.delta(offset).clamp(lo, hi)
        };
        let c = model.center_f64();
        TangencyPoint {
            radius: t.clone(),
            angle,
            theta,
            position: [c[0] + offset[0], c[1] + offset[1]],
            offset,
            f_value: model.value_at_center_f64() + delta,
            delta,
            delta_box,
            tangency,
            on_zero_set,
        }
    }
}

/// Offsets of the real zeros of the centered polynomial `h` on the circle of radius `t`.
pub fn curve_slice(h: &Polynomial, t: &Rational) -> Result<Vec<[f64; 2]>, TangencyError> {
    if !t.is_positive() {
        return Err(TangencyError::NonPositiveRadius);
    }
    let hu = weierstrass(h, t);
    if hu.is_zero() {
        return Err(TangencyError::DegenerateSlice(t.to_string()));
    }
    let iso = Isolator::new(&hu).expect("nonzero");
    let width = t * Rational::new(BigInt::one(), BigInt::one() << 64usize);
    let mut out: Vec<[f64; 2]> = iso
        .isolate_all()
        .iter()
        .map(|rb| {
            let rb = iso.refine(rb, &width);
            let (x, y) = circle_box(t, &Interval::point(rb.interval.midpoint()));
            [rat_to_f64(&x.lo), rat_to_f64(&y.lo)]
        })
        .collect();
    if h.evaluate_rational(&[-t.clone(), Rational::zero()])?
        .is_zero()
    {
        out.push([-rat_to_f64(t), 0.0]);
    }
    Ok(out)
}
