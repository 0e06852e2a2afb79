//! Brute-force minimum of `f` over circles, independent of the tangency machinery.

use rayon::prelude::*;

use crate::branchtrack::{Branch, RadiusLadder};
use crate::expansion::{self, FitError, FitResult};
use crate::tangency::{unit_vector, FunctionModel};

/// Local minima of the grid that get refined.
const REFINED_MINIMA: usize = 8;
/// Angular width at which golden-section search stops.
const GOLDEN_WIDTH: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSample {
    pub t: f64,
    pub psi: f64,
    /// `psi - f(x̄)`, computed without cancellation.
    pub delta: f64,
    pub argmin_theta: f64,
}

fn delta_at(model: &FunctionModel, t: f64, theta: f64) -> f64 {
    let [c, s] = unit_vector(theta);
    model.delta([t * c, t * s])
}

fn golden(model: &FunctionModel, t: f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (delta_at(model, t, c), delta_at(model, t, d));
    while b - a > GOLDEN_WIDTH {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = delta_at(model, t, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = delta_at(model, t, d);
        }
        if c >= d {
            break;
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `ψ(t) = min f` over the circle of radius `t`.
pub fn psi(model: &FunctionModel, t: f64, grid: usize) -> PsiSample {
    let grid = grid.max(3);
    let step = std::f64::consts::TAU / grid as f64;
    let values: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|k| delta_at(model, t, k as f64 * step))
        .collect();
    let mut minima: Vec<usize> = (0..grid)
        .filter(|&k| {
            let v = values[k];
            v <= values[(k + grid - 1) % grid] && v <= values[(k + 1) % grid]
        })
        .collect();
    minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    minima.truncate(REFINED_MINIMA);

    let mut best = (0.0, f64::INFINITY);
    for &k in &minima {
        let th = k as f64 * step;
        let (grid_th, grid_v) = (th, values[k]);
        let (g_th, g_v) = golden(model, t, th - step, th + step);
        let cand = if g_v < grid_v {
            (g_th, g_v)
        } else {
            (grid_th, grid_v)
        };
        if cand.1 < best.1 {
            best = cand;
        }
    }
    let theta = best.0.rem_euclid(std::f64::consts::TAU);
    PsiSample {
        t,
        psi: model.value_at_center_f64() + best.1,
        delta: best.1,
        argmin_theta: theta,
    }
}

/// `ψ` on every rung of the ladder.
pub fn psi_samples(model: &FunctionModel, ladder: &RadiusLadder, grid: usize) -> Vec<PsiSample> {
    ladder
        .radii_f64()
        .into_iter()
        .map(|t| psi(model, t, grid))
        .collect()
}

/// Leading-term fit of `ψ(t) - f(x̄)` over the whole ladder. The sign stays uncertified.
pub fn fit_psi(
    model: &FunctionModel,
    ladder: &RadiusLadder,
    grid: usize,
    qmax: u32,
) -> (Vec<PsiSample>, Result<FitResult, FitError>) {
    let samples = psi_samples(model, ladder, grid);
    let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    let radii: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let fit = expansion::fit(&deltas, &radii, model.value_at_center_f64(), None, qmax);
    (samples, fit)
}

/// Relative tolerance between `ψ` and the smallest branch value.
pub const PSI_REL: f64 = 1e-9;
/// Absolute floor, as a multiple of the term scale on the circle.
pub const PSI_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct PsiConsistency {
    /// `(t, min_k delta_k, ψ delta)` for each compared rung.
    pub rows: Vec<(f64, f64, f64)>,
    /// Largest relative gap over rungs where `|ψ delta|` is above the absolute floor.
    pub max_rel_gap: f64,
    pub consistent: bool,
}

/// Compare `min_k (f_k(t) - f(x̄))` with the oracle on every traced rung.
pub fn psi_consistency(
    model: &FunctionModel,
    branches: &[Branch],
    radii: &[f64],
    samples: &[PsiSample],
) -> PsiConsistency {
    let mut rows = Vec::new();
    let mut max_rel_gap: f64 = 0.0;
    let mut consistent = !branches.is_empty();
    for (j, &t) in radii.iter().enumerate() {
        let Some(s) = samples.iter().find(|s| s.t == t) else {
            consistent = false;
            continue;
        };
        let m = branches
            .iter()
            .map(|b| b.deltas[j])
            .fold(f64::INFINITY, f64::min);
        let gap = (m - s.delta).abs();
        let floor = PSI_FLOOR * model.scale_at_radius(t);
        // values at the floor are rounding noise around zero and only compare absolutely
        if s.delta.abs() > floor {
            max_rel_gap = max_rel_gap.max(gap / s.delta.abs());
        }
        if gap > PSI_REL * s.delta.abs() + floor {
            consistent = false;
        }
        rows.push((t, m, s.delta));
    }
    PsiConsistency {
        rows,
        max_rel_gap,
        consistent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branchtrack::build_ladder;
    use crate::polynomial::Rational;
    use std::f64::consts::PI;

    fn ladder() -> RadiusLadder {
        let r = |n: i64, d: i64| Rational::new(n.into(), d.into());
        build_ladder(&r(1, 8), &r(1, 2), 24).unwrap()
    }

    #[test]
    fn psi_examples() {
        let m = FunctionModel::smooth("3*x^2 + 2*y^3").unwrap();
        let s = psi(&m, 1e-3, 4096);
        assert!((s.psi / -2e-9 - 1.0).abs() < 1e-12);
        assert!((s.argmin_theta - 1.5 * PI).abs() < 1e-7);

        let m = FunctionModel::smooth("x^2 + y^2").unwrap();
        for t in [0.5, 1e-2, 1e-5] {
            assert!((psi(&m, t, 4096).psi / (t * t) - 1.0).abs() < 1e-15);
        }

        let m = FunctionModel::smooth("x^4 + y^4").unwrap();
        let t = 0.01;
        let s = psi(&m, t, 4096);
        assert!((s.psi / (t.powi(4) / 2.0) - 1.0).abs() < 1e-13);
        let quarter = (s.argmin_theta / (PI / 4.0)).round();
        assert!((s.argmin_theta - quarter * PI / 4.0).abs() < 1e-6 && quarter as i64 % 2 == 1);
    }

    #[test]
    fn psi_lower_bounds_scan() {
        let m = FunctionModel::smooth("x^3 - 3*x*y^2 + x*y").unwrap();
        let t = 0.05;
        let s = psi(&m, t, 4096);
        for k in 0..20_000 {
            let th = 2.0 * PI * k as f64 / 20_000.0;
            assert!(s.psi <= m.value([t * th.cos(), t * th.sin()]) + 1e-18);
        }
    }

    #[test]
    fn fit_psi_examples() {
        let (_, f) = fit_psi(
            &FunctionModel::smooth("2*x^2 + y^4").unwrap(),
            &ladder(),
            4096,
            12,
        );
        let f = f.unwrap();
        assert_eq!(f.alpha, Some(Rational::from_integer(4.into())));
        assert!((f.a.unwrap() - 1.0).abs() < 1e-9);

        let (_, f) = fit_psi(
            &FunctionModel::smooth("x^4 + y^4").unwrap(),
            &ladder(),
            4096,
            12,
        );
        let f = f.unwrap();
        assert_eq!(f.alpha, Some(Rational::from_integer(4.into())));
        assert!((f.a.unwrap() - 0.5).abs() < 1e-9);

        let (samples, f) = fit_psi(&FunctionModel::smooth("x^2").unwrap(), &ladder(), 4096, 12);
        assert!(f.unwrap().constant);
        assert!(samples.iter().all(|s| s.delta == 0.0));
    }

    #[test]
    fn grid_saturation() {
        for text in ["3*x^2 + 2*y^3", "2*x^2 + y^4", "x^4 + y^4", "x^3 - 3*x*y^2"] {
            let m = FunctionModel::smooth(text).unwrap();
            for t in [0.1, 1e-2, 1e-4] {
                let a = psi(&m, t, 4096).psi;
                let b = psi(&m, t, 8192).psi;
                assert!(
                    (a - b).abs() <= 1e-12 * a.abs(),
                    "{text} at {t}: {a} vs {b}"
                );
            }
        }
    }
}
