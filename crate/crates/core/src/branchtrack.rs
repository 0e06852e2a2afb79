//! Following tangency points down a ladder of shrinking radii.

use std::f64::consts::PI;

use num_traits::{One, Signed};
use rayon::prelude::*;
use thiserror::Error;

use crate::expansion::{self, FitError, FitResult};
use crate::polynomial::{rat_to_f64, Rational};
use crate::tangency::{TangencyError, TangencyPoint, TangencyPolynomial};

/// Rungs that must agree before a trace counts as stabilized.
pub const WINDOW: usize = 8;
/// Two matchings closer than this (radians) are indistinguishable.
pub const AMBIGUITY_RAD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LadderError {
    #[error("t0 must be positive")]
    NonPositiveT0,
    #[error("rho must lie strictly between 0 and 1")]
    RhoOutOfRange,
    #[error("ladder needs at least one rung")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("point counts stabilized over only {stable} rungs, need {WINDOW}; shrink t0")]
    NonStabilized { stable: usize },
    #[error("matching between rungs {rung} and {} is ambiguous; use a denser ladder", rung + 1)]
    AmbiguousMatch { rung: usize },
    #[error(transparent)]
    Tangency(#[from] TangencyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusLadder {
    pub t0: Rational,
    pub rho: Rational,
    pub radii: Vec<Rational>,
}

impl RadiusLadder {
    pub fn count(&self) -> usize {
        self.radii.len()
    }

    pub fn radii_f64(&self) -> Vec<f64> {
        self.radii.iter().map(rat_to_f64).collect()
    }
}

pub fn build_ladder(
    t0: &Rational,
    rho: &Rational,
    count: usize,
) -> Result<RadiusLadder, LadderError> {
    if !t0.is_positive() {
        return Err(LadderError::NonPositiveT0);
    }
    if !rho.is_positive() || *rho >= Rational::one() {
        return Err(LadderError::RhoOutOfRange);
    }
    if count == 0 {
        return Err(LadderError::Empty);
    }
    let mut radii = Vec::with_capacity(count);
    let mut t = t0.clone();
    for _ in 0..count {
        radii.push(t.clone());
        t *= rho;
    }
    Ok(RadiusLadder {
        t0: t0.clone(),
        rho: rho.clone(),
        radii,
    })
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub id: usize,
    /// One point per stabilized rung, radii decreasing.
    pub points: Vec<TangencyPoint>,
    pub f_values: Vec<f64>,
    pub deltas: Vec<f64>,
    pub constant: bool,
    pub fit: Option<Result<FitResult, FitError>>,
}

impl Branch {
    pub fn alpha(&self) -> Option<&Rational> {
        self.fit.as_ref()?.as_ref().ok()?.alpha.as_ref()
    }

    pub fn a(&self) -> Option<f64> {
        self.fit.as_ref()?.as_ref().ok()?.a
    }

    pub fn a_sign(&self) -> i8 {
        match &self.fit {
            Some(Ok(f)) => f.a_sign,
            _ => 0,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(&self.fit, Some(Ok(f)) if f.is_certified())
    }

    /// Angle at the smallest radius.
    pub fn limit_theta(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.theta)
    }

    pub fn on_zero_set(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.on_zero_set)
    }
}

/// `f` along the branch, one value per rung.
pub fn branch_values(branch: &Branch) -> Vec<f64> {
    branch.f_values.clone()
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub ladder: RadiusLadder,
    /// First rung of the stabilized window.
    pub start: usize,
    /// Tangency points per rung; `None` where the circle lies in the tangency set.
    pub counts: Vec<Option<usize>>,
    pub branches: Vec<Branch>,
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn window_radii(&self) -> &[Rational] {
        &self.ladder.radii[self.start..]
    }

    pub fn window_radii_f64(&self) -> Vec<f64> {
        self.window_radii().iter().map(rat_to_f64).collect()
    }

    /// Largest radius of the stabilized window.
    pub fn trust_radius(&self) -> f64 {
        rat_to_f64(&self.ladder.radii[self.start])
    }

    /// Smallest radius examined.
    pub fn ladder_floor(&self) -> f64 {
        rat_to_f64(self.ladder.radii.last().expect("nonempty ladder"))
    }

    pub fn fit_all(&mut self, value_at_center: f64, qmax: u32) {
        let radii = self.window_radii_f64();
        for b in &mut self.branches {
            let enclosure = b.points.last().map(|p| &p.delta_box);
            b.fit = Some(expansion::fit(
                &b.deltas,
                &radii,
                value_at_center,
                enclosure,
                qmax,
            ));
        }
    }
}

fn ang_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn min_gap(thetas: &[f64]) -> f64 {
    if thetas.len() < 2 {
        return 2.0 * PI;
    }
    let mut g = 2.0 * PI - thetas[thetas.len() - 1] + thetas[0];
    for w in thetas.windows(2) {
        g = g.min(w[1] - w[0]);
    }
    g
}

/// Cyclic shift `s` sending point `i` of `prev` to point `(i + s) % n` of `next`.
fn match_rungs(prev: &[f64], next: &[f64]) -> Option<usize> {
    let n = prev.len();
    if n == 0 {
        return Some(0);
    }
    let cost = |s: usize| {
        (0..n)
            .map(|i| ang_dist(prev[i], next[(i + s) % n]))
            .fold(0.0, f64::max)
    };
    let mut costs: Vec<(f64, usize)> = (0..n).map(|s| (cost(s), s)).collect();
    costs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (best, s) = costs[0];
    if best > min_gap(prev) {
        return None;
    }
    if n > 1 && costs[1].0 - best < AMBIGUITY_RAD {
        return None;
    }
    Some(s)
}

fn slices(
    tp: &TangencyPolynomial,
    ladder: &RadiusLadder,
) -> Result<Vec<Option<Vec<TangencyPoint>>>, TraceError> {
    ladder
        .radii
        .par_iter()
        .map(|t| {
            if tp.is_degenerate() {
                return Ok(Some(vec![tp.east_point(t)?]));
            }
            match tp.circle_slice(t) {
                Ok(pts) => Ok(Some(pts)),
                Err(TangencyError::DegenerateSlice(_)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

/// Violation index `j` (between rungs `j` and `j+1`) of sign or monotonicity, if any.
fn last_violation(deltas: &[f64]) -> Option<usize> {
    (0..deltas.len().saturating_sub(1)).rev().find(|&j| {
        let (a, b) = (deltas[j], deltas[j + 1]);
        a == 0.0 || b == 0.0 || a.signum() != b.signum() || b.abs() >= a.abs()
    })
}

/// Group the tangency points on every rung into branches.
pub fn trace(tp: &TangencyPolynomial, ladder: &RadiusLadder) -> Result<Trace, TraceError> {
    let slices = slices(tp, ladder)?;
    let counts: Vec<Option<usize>> = slices.iter().map(|s| s.as_ref().map(Vec::len)).collect();
    let n_rungs = counts.len();
    let last = counts[n_rungs - 1].ok_or(TraceError::NonStabilized { stable: 0 })?;
    let mut start = n_rungs - 1;
    while start > 0 && counts[start - 1] == Some(last) {
        start -= 1;
    }
    let stable = |s: usize| n_rungs - s;
    if stable(start) < WINDOW {
        return Err(TraceError::NonStabilized {
            stable: stable(start),
        });
    }

    let mut warnings = Vec::new();
    let slices: Vec<Vec<TangencyPoint>> =
        slices.into_iter().map(|s| s.unwrap_or_default()).collect();
    let thetas: Vec<Vec<f64>> = slices
        .iter()
        .map(|s| s.iter().map(|p| p.theta).collect())
        .collect();

    // shifts[j] maps rung j to rung j+1
    let mut shifts = vec![0usize; n_rungs];
    for j in (start..n_rungs - 1).rev() {
        match match_rungs(&thetas[j], &thetas[j + 1]) {
            Some(s) => shifts[j] = s,
            None if stable(j + 1) >= WINDOW => {
                warnings.push(format!(
                    "matching failed below rung {j}; window starts at rung {}",
                    j + 1
                ));
                start = j + 1;
                break;
            }
            None => return Err(TraceError::AmbiguousMatch { rung: j }),
        }
    }

    let fbar = tp.model.value_at_center_f64();
    let build = |start: usize| -> Vec<Branch> {
        (0..last)
            .map(|i0| {
                let mut idx = i0;
                let mut points = Vec::with_capacity(n_rungs - start);
                for j in start..n_rungs {
                    points.push(slices[j][idx].clone());
                    idx = (idx + shifts[j]) % last;
                }
                let deltas: Vec<f64> = points.iter().map(|p| p.delta).collect();
                let f_values = points.iter().map(|p| p.f_value).collect();
                Branch {
                    id: 0,
                    constant: expansion::is_constant(&deltas, fbar),
                    points,
                    f_values,
                    deltas,
                    fit: None,
                }
            })
            .collect()
    };

    let mut branches = build(start);
    loop {
        let violation = branches
            .iter()
            .filter(|b| !b.constant)
            .filter_map(|b| last_violation(&b.deltas))
            .max();
        let Some(v) = violation else { break };
        let new_start = start + v + 1;
        if stable(new_start) < WINDOW {
            return Err(TraceError::NonStabilized {
                stable: stable(new_start),
            });
        }
        warnings.push(format!(
            "branch values not monotone above rung {new_start}; window shrunk"
        ));
        start = new_start;
        branches = build(start);
    }

    branches.sort_by(|a, b| a.limit_theta().total_cmp(&b.limit_theta()));
    for (id, b) in branches.iter_mut().enumerate() {
        b.id = id;
    }
    Ok(Trace {
        ladder: ladder.clone(),
        start,
        counts,
        branches,
        warnings,
    })
}

/// `trace` with one retry: a smaller `t0` when counts do not settle, a denser ladder when
/// matching is ambiguous.
pub fn trace_with_retry(
    tp: &TangencyPolynomial,
    ladder: &RadiusLadder,
) -> Result<Trace, TraceError> {
    let retry = match trace(tp, ladder) {
        Ok(t) => return Ok(t),
        Err(TraceError::NonStabilized { stable }) => {
            let t0 = &ladder.t0 / Rational::from_integer(8.into());
            let msg = format!("counts stabilized over {stable} rungs only; retried with t0 = {t0}");
            (
                build_ladder(&t0, &ladder.rho, ladder.count()).expect("valid"),
                msg,
            )
        }
        Err(TraceError::AmbiguousMatch { rung }) => {
            let rho = (Rational::one() + &ladder.rho) / Rational::from_integer(2.into());
            let msg = format!("ambiguous matching at rung {rung}; retried with rho = {rho}");
            (
                build_ladder(&ladder.t0, &rho, 2 * ladder.count()).expect("valid"),
                msg,
            )
        }
        Err(e) => return Err(e),
    };
    let mut t = trace(tp, &retry.0)?;
    t.warnings.insert(0, retry.1);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tangency::{tangency_polynomial, FunctionModel};

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn default_ladder() -> RadiusLadder {
        build_ladder(&r(1, 8), &r(1, 2), 24).unwrap()
    }

    fn traced(model: FunctionModel) -> Trace {
        let tp = tangency_polynomial(&model);
        let mut t = trace_with_retry(&tp, &default_ladder()).unwrap();
        t.fit_all(model.value_at_center_f64(), 12);
        t
    }

    #[test]
    fn ladder_examples() {
        let l = build_ladder(&r(1, 8), &r(1, 2), 4).unwrap();
        assert_eq!(l.radii, vec![r(1, 8), r(1, 16), r(1, 32), r(1, 64)]);
        assert_eq!(
            build_ladder(&r(1, 1), &r(1, 2), 2).unwrap().radii,
            vec![r(1, 1), r(1, 2)]
        );
        assert_eq!(
            build_ladder(&r(1, 1), &r(2, 1), 4),
            Err(LadderError::RhoOutOfRange)
        );
        assert_eq!(
            build_ladder(&r(0, 1), &r(1, 2), 4),
            Err(LadderError::NonPositiveT0)
        );
        assert_eq!(build_ladder(&r(1, 1), &r(1, 2), 0), Err(LadderError::Empty));
    }

    #[test]
    fn cubic_saddle_branches() {
        let t = traced(FunctionModel::smooth("3*x^2 + 2*y^3").unwrap());
        assert_eq!(t.branches.len(), 4);
        assert_eq!(t.start, 0);
        let radii = t.window_radii_f64();
        // ids follow the limiting angle: 0, π/2, π, 3π/2
        let expect = [
            |t: f64| 3.0 * t * t,
            |t: f64| 2.0 * t * t * t,
            |t: f64| 3.0 * t * t,
            |t: f64| -2.0 * t * t * t,
        ];
        for (b, e) in t.branches.iter().zip(expect) {
            let vals = branch_values(b);
            for (v, r) in vals.iter().zip(&radii) {
                assert!((v - e(*r)).abs() <= 1e-15 * e(*r).abs());
            }
        }
        assert_eq!(t.branches[3].a_sign(), -1);
    }

    #[test]
    fn cylinder_constant_branches() {
        let t = traced(FunctionModel::smooth("x^2").unwrap());
        assert_eq!(t.branches.len(), 4);
        let consts: Vec<bool> = t.branches.iter().map(|b| b.constant).collect();
        assert_eq!(consts, vec![false, true, false, true]);
        assert!(t.branches[1].f_values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quartic_minimizer_values() {
        let t = traced(FunctionModel::smooth("2*x^2 + y^4").unwrap());
        let radii = t.window_radii_f64();
        for (v, r) in t.branches[0].f_values.iter().zip(&radii) {
            assert_eq!(*v, 2.0 * r * r);
        }
        for (v, r) in t.branches[1].f_values.iter().zip(&radii) {
            assert_eq!(*v, r.powi(4));
        }
    }

    #[test]
    fn radial_function_single_branch() {
        let t = traced(FunctionModel::smooth("x^2 + y^2").unwrap());
        assert_eq!(t.branches.len(), 1);
        assert_eq!(t.branches[0].limit_theta(), 0.0);
        let b = &t.branches[0];
        assert_eq!(b.alpha(), Some(&r(2, 1)));
        assert!((b.a().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn abs_model_eight_branches() {
        let t = traced(FunctionModel::abs_of("x^2 - y^4").unwrap());
        assert_eq!(t.branches.len(), 8);
        let zero: Vec<bool> = t.branches.iter().map(Branch::on_zero_set).collect();
        assert_eq!(zero.iter().filter(|z| **z).count(), 4);
        for b in &t.branches {
            assert_eq!(b.constant, b.on_zero_set());
        }
    }

    #[test]
    fn partition_and_determinism() {
        for text in [
            "3*x^2 + 2*y^3",
            "x^3 - 3*x*y^2",
            "x^4 + y^4",
            "x^2 + x*y^2 + y^5",
        ] {
            let a = traced(FunctionModel::smooth(text).unwrap());
            let b = traced(FunctionModel::smooth(text).unwrap());
            let n = a.counts.last().unwrap().unwrap();
            assert_eq!(a.branches.len(), n);
            for j in 0..a.window_radii().len() {
                let mut th: Vec<f64> = a.branches.iter().map(|b| b.points[j].theta).collect();
                th.sort_by(f64::total_cmp);
                th.dedup();
                assert_eq!(th.len(), n, "{text}: rung {j} points shared");
            }
            let ta: Vec<Vec<f64>> = a.branches.iter().map(|b| b.deltas.clone()).collect();
            let tb: Vec<Vec<f64>> = b.branches.iter().map(|b| b.deltas.clone()).collect();
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn matching_rules() {
        assert_eq!(match_rungs(&[0.0, 2.0], &[0.1, 2.1]), Some(0));
        assert_eq!(match_rungs(&[0.1, 2.0], &[1.9, 6.2]), Some(1));
        // a jump larger than the gap is rejected
        assert_eq!(match_rungs(&[0.0, 0.5], &[1.5, 3.0]), None);
        assert!((min_gap(&[0.0, PI]) - PI).abs() < 1e-15);
    }

    #[test]
    fn short_ladder_never_stabilizes() {
        let model = FunctionModel::smooth("x^2").unwrap();
        let tp = tangency_polynomial(&model);
        let short = build_ladder(&r(1, 8), &r(1, 2), 4).unwrap();
        assert!(matches!(
            trace(&tp, &short),
            Err(TraceError::NonStabilized { stable: 4 })
        ));
    }
}
