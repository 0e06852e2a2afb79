//! Sampled checks of the growth, subregularity, gradient and distance inequalities.

use std::f64::consts::TAU;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::polynomial::{f64_to_rat, rat_to_f64, FloatPoly, Polynomial};
use crate::tangency::{curve_slice, unit_vector, FunctionModel, ModelKind, TangencyError};

/// Denominators below this are excluded from a probe.
pub const TINY: f64 = 1e-300;
/// Smallest samples per rung a probe accepts.
pub const MIN_PER_RUNG: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("{0} needs a positive exponent")]
    BadAlpha(ProbeName),
    #[error("at least {MIN_PER_RUNG} samples per rung are needed, got {0}")]
    TooFewSamples(usize),
    #[error("the distance probe needs an absolute-value model")]
    NotAbsModel,
    #[error("the zero set has no points near the center")]
    EmptyZeroSet,
    #[error(transparent)]
    Tangency(#[from] TangencyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeName {
    /// `(f(x) - f(x̄)) / |x - x̄|^α`
    Growth,
    /// `m_f(x) / |x - x̄|^(α-1)`
    Subreg,
    /// `m_f(x) / |f(x) - f(x̄)|^(1-1/α)`
    Loja,
    /// `m_f(x)·|x - x̄| / |f(x) - f(x̄)|`
    Bl,
    /// `m_f(x) / dist(x, {p = 0})`
    DistRatio,
}

impl ProbeName {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeName::Growth => "GROWTH",
            ProbeName::Subreg => "SUBREG",
            ProbeName::Loja => "LOJA",
            ProbeName::Bl => "BL",
            ProbeName::DistRatio => "DIST_RATIO",
        }
    }

    fn needs_alpha(self) -> bool {
        matches!(
            self,
            ProbeName::Growth | ProbeName::Subreg | ProbeName::Loja
        )
    }
}

impl std::fmt::Display for ProbeName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    /// Offset from the center.
    pub offset: [f64; 2],
    pub t: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityProbe {
    pub name: ProbeName,
    pub alpha: Option<f64>,
    pub samples: Vec<ProbeSample>,
    /// `(t, inf ratio on the circle of radius t)`, radii decreasing.
    pub per_rung: Vec<(f64, f64)>,
    pub inf_ratio: f64,
    /// Slope of log inf-ratio against log t over all rungs.
    pub trend_slope: Option<f64>,
    pub excluded: usize,
}

impl InequalityProbe {
    /// Slope over the `n` smallest rungs.
    pub fn trend_slope_last(&self, n: usize) -> Option<f64> {
        let k = self.per_rung.len().saturating_sub(n);
        loglog_slope(&self.per_rung[k..])
    }

    /// Infimum over rungs with `t <= radius`.
    pub fn inf_within(&self, radius: f64) -> f64 {
        self.per_rung
            .iter()
            .filter(|(t, _)| *t <= radius)
            .map(|(_, r)| *r)
            .fold(f64::INFINITY, f64::min)
    }

    fn from_samples(
        name: ProbeName,
        alpha: Option<f64>,
        samples: Vec<ProbeSample>,
        excluded: usize,
        radii: &[f64],
    ) -> Self {
        let per_rung: Vec<(f64, f64)> = radii
            .iter()
            .map(|&t| {
                let inf = samples
                    .iter()
                    .filter(|s| s.t == t)
                    .map(|s| s.ratio)
                    .fold(f64::INFINITY, f64::min);
                (t, inf)
            })
            .filter(|(_, inf)| inf.is_finite())
            .collect();
        let inf_ratio = per_rung.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        InequalityProbe {
            name,
            alpha,
            trend_slope: loglog_slope(&per_rung),
            samples,
            per_rung,
            inf_ratio,
            excluded,
        }
    }
}

/// Least-squares slope of `ln y` against `ln t`, over points with `y > 0`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, y)| *t > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Sample offsets on every rung: equispaced angles with a seeded phase, plus `extra[j]`.
pub fn rung_offsets(
    radii: &[f64],
    per_rung: usize,
    extra: &[Vec<[f64; 2]>],
    seed: u64,
) -> Vec<Vec<[f64; 2]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = TAU / per_rung as f64;
    radii
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let phase = rng.random::<f64>() * step;
            let mut pts: Vec<[f64; 2]> = (0..per_rung)
                .map(|k| {
                    let [c, s] = unit_vector(phase + k as f64 * step);
                    [t * c, t * s]
                })
                .collect();
            if let Some(e) = extra.get(j) {
                pts.extend_from_slice(e);
            }
            pts
        })
        .collect()
}

fn ratio_for(
    model: &FunctionModel,
    name: ProbeName,
    alpha: f64,
    u: [f64; 2],
    t: f64,
) -> Option<f64> {
    let (num, den) = match name {
        ProbeName::Growth => (model.delta(u), t.powf(alpha)),
        ProbeName::Subreg => (model.slope_centered(u), t.powf(alpha - 1.0)),
        ProbeName::Loja => (
            model.slope_centered(u),
            model.delta(u).abs().powf(1.0 - 1.0 / alpha),
        ),
        ProbeName::Bl => (model.slope_centered(u) * t, model.delta(u).abs()),
        ProbeName::DistRatio => unreachable!("distance ratios use counterexample_probe"),
    };
    (den.abs() >= TINY).then(|| num / den)
}

/// Sample one inequality on the rungs `radii`; `extra[j]` adds offsets on rung `j`.
pub fn probe(
    model: &FunctionModel,
    name: ProbeName,
    alpha: Option<f64>,
    radii: &[f64],
    per_rung: usize,
    extra: &[Vec<[f64; 2]>],
    seed: u64,
) -> Result<InequalityProbe, VerifyError> {
    if name == ProbeName::DistRatio {
        return Err(VerifyError::NotAbsModel);
    }
    let a = alpha.unwrap_or(1.0);
    if name.needs_alpha() && !(alpha.is_some_and(|a| a > 0.0)) {
        return Err(VerifyError::BadAlpha(name));
    }
    if per_rung < MIN_PER_RUNG {
        return Err(VerifyError::TooFewSamples(per_rung));
    }
    let offsets = rung_offsets(radii, per_rung, extra, seed);
    let evaluated: Vec<Vec<(ProbeSample, bool)>> = radii
        .par_iter()
        .zip(offsets.par_iter())
        .map(|(&t, pts)| {
            pts.iter()
                .map(|&u| match ratio_for(model, name, a, u, t) {
                    Some(ratio) => (
                        ProbeSample {
                            offset: u,
                            t,
                            ratio,
                        },
                        true,
                    ),
                    None => (
                        ProbeSample {
                            offset: u,
                            t,
                            ratio: f64::NAN,
                        },
                        false,
                    ),
                })
                .collect()
        })
        .collect();
    let mut samples = Vec::new();
    let mut excluded = 0;
    for (s, keep) in evaluated.into_iter().flatten() {
        if keep {
            samples.push(s);
        } else {
            excluded += 1;
        }
    }
    Ok(InequalityProbe::from_samples(
        name, alpha, samples, excluded, radii,
    ))
}

/// Samples of `{p = 0}` near the center, with foot-point refinement.
pub struct ZeroSet {
    p: FloatPoly,
    grad: [FloatPoly; 2],
    cloud: Vec<[f64; 2]>,
}

impl ZeroSet {
    /// Slice the centered polynomial `p` on `per_octave` radii per factor of 2 in `[lo, hi]`.
    pub fn sample(
        p: &Polynomial,
        lo: f64,
        hi: f64,
        per_octave: usize,
    ) -> Result<ZeroSet, VerifyError> {
        let octaves = (hi / lo).log2().ceil().max(1.0) as usize;
        let n = octaves * per_octave;
        // float radii convert to short dyadic rationals
        let radii: Vec<_> = (0..=n)
            .map(|k| f64_to_rat(hi * 2f64.powf(-(k as f64) / per_octave as f64)))
            .collect();
        let slices: Vec<Vec<[f64; 2]>> = radii
            .par_iter()
            .map(|t| match curve_slice(p, t) {
                Ok(pts) => Ok(pts),
                // a whole circle in the zero set: sample it
                Err(TangencyError::DegenerateSlice(_)) => {
                    let tf = rat_to_f64(t);
                    Ok((0..64)
                        .map(|k| unit_vector(TAU * k as f64 / 64.0).map(|c| tf * c))
                        .collect())
                }
                Err(e) => Err(e),
            })
            .collect::<Result<_, _>>()?;
        let mut cloud: Vec<[f64; 2]> = slices.into_iter().flatten().collect();
        if p.constant_term().is_zero() {
            cloud.push([0.0, 0.0]);
        }
        if cloud.is_empty() {
            return Err(VerifyError::EmptyZeroSet);
        }
        let names: Vec<&str> = p.vars().iter().map(String::as_str).collect();
        Ok(ZeroSet {
            grad: [
                p.partial(names[0]).expect("declared").to_float(),
                p.partial(names[1]).expect("declared").to_float(),
            ],
            p: p.to_float(),
            cloud,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Distance from the offset `q` to the zero set.
    pub fn distance(&self, q: [f64; 2]) -> f64 {
        let d2 = |a: [f64; 2]| (a[0] - q[0]).powi(2) + (a[1] - q[1]).powi(2);
        let start = *self
            .cloud
            .iter()
            .min_by(|a, b| d2(**a).total_cmp(&d2(**b)))
            .expect("nonempty");
        let best = d2(start).sqrt();
        match self.foot_point(q, start) {
            Some(x) => best.min(d2(x).sqrt()),
            None => best,
        }
    }

    fn newton(&self, x: [f64; 2]) -> Option<[f64; 2]> {
        let g = [self.grad[0].eval(&x), self.grad[1].eval(&x)];
        let n2 = g[0] * g[0] + g[1] * g[1];
        if n2 == 0.0 || !n2.is_finite() {
            return None;
        }
        let v = self.p.eval(&x);
        Some([x[0] - v * g[0] / n2, x[1] - v * g[1] / n2])
    }

    /// Alternate Newton steps onto the curve with projections of `q` on the tangent line.
    fn foot_point(&self, q: [f64; 2], start: [f64; 2]) -> Option<[f64; 2]> {
        let mut x = start;
        for _ in 0..200 {
            let g = [self.grad[0].eval(&x), self.grad[1].eval(&x)];
            let gn = g[0].hypot(g[1]);
            if gn == 0.0 || !gn.is_finite() {
                return None;
            }
            let tau = [-g[1] / gn, g[0] / gn];
            let s = (q[0] - x[0]) * tau[0] + (q[1] - x[1]) * tau[1];
            let moved = [x[0] + s * tau[0], x[1] + s * tau[1]];
            let next = self.newton(self.newton(moved)?)?;
            let step = (next[0] - x[0]).hypot(next[1] - x[1]);
            x = next;
            if step <= 1e-15 * (x[0].hypot(x[1]) + (q[0] - x[0]).hypot(q[1] - x[1])) {
                break;
            }
        }
        // accept only points that sit on the curve to rounding accuracy
        let v = self.p.eval(&x);
        (v.abs() <= 1e-12 * self.p.magnitude(&x)).then_some(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleRow {
    pub t: f64,
    pub slope: f64,
    pub dist: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    pub probe: InequalityProbe,
    pub rows: Vec<CounterexampleRow>,
    /// `inf |f - f(x̄)| / dist²` over sampled points with `|x - x̄| <= growth_radius`.
    pub quadratic_growth_inf: f64,
    pub growth_radius: f64,
    pub growth_samples: usize,
}

/// Radius of the ball on which the quadratic growth side is sampled.
pub const GROWTH_RADIUS: f64 = 0.1;

/// `m_f / dist(·, {p = 0})` along the path `x̄ + (0, t)`, and sampled quadratic growth away from `{p = 0}`.
pub fn counterexample_probe(
    model: &FunctionModel,
    radii: &[f64],
    per_rung: usize,
    seed: u64,
) -> Result<CounterexampleReport, VerifyError> {
    if model.kind() != ModelKind::AbsOfPoly {
        return Err(VerifyError::NotAbsModel);
    }
    let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().copied().fold(0.0, f64::max).max(GROWTH_RADIUS);
    let zero = ZeroSet::sample(model.centered(), lo / 4.0, 2.0 * hi, 16)?;

    let path: Vec<(CounterexampleRow, bool)> = radii
        .par_iter()
        .map(|&t| {
            let u = [0.0, t];
            let slope = model.slope_centered(u);
            let dist = zero.distance(u);
            let row = CounterexampleRow {
                t,
                slope,
                dist,
                ratio: slope / dist,
            };
            (row, dist >= TINY)
        })
        .collect();
    let rows: Vec<CounterexampleRow> = path
        .iter()
        .filter(|(_, keep)| *keep)
        .map(|(r, _)| *r)
        .collect();
    let excluded = path.len() - rows.len();
    let samples = rows
        .iter()
        .map(|r| ProbeSample {
            offset: [0.0, r.t],
            t: r.t,
            ratio: r.ratio,
        })
        .collect();
    let probe = InequalityProbe::from_samples(ProbeName::DistRatio, None, samples, excluded, radii);

    let inner: Vec<f64> = radii
        .iter()
        .copied()
        .filter(|t| *t <= GROWTH_RADIUS)
        .collect();
    let offsets = rung_offsets(&inner, per_rung, &[], seed);
    let growth: Vec<f64> = offsets
        .par_iter()
        .flat_map_iter(|pts| {
            pts.iter().filter_map(|&u| {
                let d = zero.distance(u);
                (d >= TINY && d * d >= TINY).then(|| model.delta(u).abs() / (d * d))
            })
        })
        .collect();
    Ok(CounterexampleReport {
        probe,
        rows,
        quadratic_growth_inf: growth.iter().copied().fold(f64::INFINITY, f64::min),
        growth_radius: GROWTH_RADIUS,
        growth_samples: growth.len(),
    })
}
