//! Leading-term fits `d(t) = a·t^α + o(t^α)` of branch values with rational snapping.

use num_bigint::BigInt;
use num_traits::Zero;
use thiserror::Error;

use crate::polynomial::{rat_to_f64, Interval, Rational};

/// Deltas below `CONSTANT_REL·(1 + |f(x̄)|)` count as zero.
pub const CONSTANT_REL: f64 = 1e-12;
/// Largest accepted `|α - α_raw|` after snapping.
pub const SNAP_TOL: f64 = 0.02;
/// Residual bound for an accepted fit.
pub const RESIDUAL_BOUND: f64 = 1e-2;
/// Shortest window `fit` accepts.
pub const MIN_WINDOW: usize = 6;
/// Rungs used for the coefficient.
const COEFF_RUNGS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("window of {0} rungs is shorter than {MIN_WINDOW}")]
    WindowTooShort(usize),
    #[error("deltas and radii differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("delta changes sign or vanishes at rung {0} of the window")]
    SignFlip(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub alpha_raw: f64,
    /// Snapped exponent; absent for constants and when no rational is close enough.
    pub alpha: Option<Rational>,
    pub a: Option<f64>,
    pub a_sign: i8,
    pub residual: f64,
    pub constant: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    fn constant() -> Self {
        FitResult {
            alpha_raw: 0.0,
            alpha: None,
            a: None,
            a_sign: 0,
            residual: 0.0,
            constant: true,
            warnings: Vec::new(),
        }
    }

    /// A non-constant fit whose exponent snapped and whose sign is certified.
    pub fn is_certified(&self) -> bool {
        self.constant
            || (self.alpha.is_some() && self.a_sign != 0 && self.residual <= RESIDUAL_BOUND)
    }

    pub fn alpha_f64(&self) -> Option<f64> {
        self.alpha.as_ref().map(rat_to_f64)
    }
}

pub fn is_constant(deltas: &[f64], value_at_center: f64) -> bool {
    let tol = CONSTANT_REL * (1.0 + value_at_center.abs());
    deltas.iter().all(|d| d.abs() <= tol)
}

/// Best continued-fraction convergent of `x` with denominator at most `qmax`.
pub fn snap_rational(x: f64, qmax: u32) -> Rational {
    let qmax = qmax.max(1) as i128;
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut rem = x;
    let mut best: Option<(f64, i128, i128)> = None;
    for _ in 0..64 {
        let a = rem.floor();
        if !a.is_finite() || a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let (h, k) = (ai * h1 + h0, ai * k1 + k0);
        if k > qmax {
            break;
        }
        let err = (x - h as f64 / k as f64).abs();
        // later convergents have larger denominators, so ties keep the earlier one
        if best.is_none_or(|(e, _, _)| err < e) {
            best = Some((err, h, k));
        }
        (h0, h1, k0, k1) = (h1, h, k1, k);
        let frac = rem - a;
        if frac < 1e-12 {
            break;
        }
        rem = 1.0 / frac;
    }
    let (_, h, k) = best.unwrap_or((0.0, x.round() as i128, 1));
    Rational::new(BigInt::from(h), BigInt::from(k))
}

/// Fit `d_j ≈ a·t_j^α` over the window.
///
/// `enclosure` is a certified enclosure of the delta at the smallest radius; without one
/// the sign stays uncertified.
pub fn fit(
    deltas: &[f64],
    radii: &[f64],
    value_at_center: f64,
    enclosure: Option<&Interval>,
    qmax: u32,
) -> Result<FitResult, FitError> {
    let n = deltas.len();
    if n != radii.len() {
        return Err(FitError::LengthMismatch(n, radii.len()));
    }
    if n < MIN_WINDOW {
        return Err(FitError::WindowTooShort(n));
    }
    if is_constant(deltas, value_at_center) {
        return Ok(FitResult::constant());
    }
    let sign = deltas[0].signum();
    if let Some(j) = deltas.iter().position(|d| *d == 0.0 || d.signum() != sign) {
        return Err(FitError::SignFlip(j));
    }

    let half = n / 2;
    let ratios: Vec<f64> = (n - 1 - half..n - 1)
        .map(|j| (deltas[j + 1] / deltas[j]).ln() / (radii[j + 1] / radii[j]).ln())
        .collect();
    let alpha_raw = ratios.iter().sum::<f64>() / ratios.len() as f64;

    let mut warnings = Vec::new();
    let snapped = snap_rational(alpha_raw, qmax);
    let alpha = if (rat_to_f64(&snapped) - alpha_raw).abs() <= SNAP_TOL && !snapped.is_zero() {
        Some(snapped)
    } else {
        warnings.push(format!(
            "exponent {alpha_raw} has no rational within {SNAP_TOL} with denominator <= {qmax}"
        ));
        None
    };
    let alpha_used = alpha.as_ref().map(rat_to_f64).unwrap_or(alpha_raw);

    let log_mean = (n - COEFF_RUNGS..n)
        .map(|j| (deltas[j].abs()).ln() - alpha_used * radii[j].ln())
        .sum::<f64>()
        / COEFF_RUNGS as f64;
    let a = sign * log_mean.exp();

    let residual = (n - 1 - half..n)
        .map(|j| (deltas[j] / (a * radii[j].powf(alpha_used)) - 1.0).abs())
        .fold(0.0, f64::max);
    if residual > RESIDUAL_BOUND {
        warnings.push(format!(
            "fit residual {residual:.3e} exceeds {RESIDUAL_BOUND}"
        ));
    }

    let a_sign = match enclosure.map(Interval::certified_sign) {
        Some(s) if s != 0 && s as f64 == sign => s,
        Some(0) => {
            warnings
                .push("enclosure of the smallest-rung delta contains 0; sign uncertified".into());
            0
        }
        Some(_) => {
            warnings.push("enclosure sign disagrees with the sampled deltas".into());
            0
        }
        None => {
            warnings.push("no certified enclosure; sign uncertified".into());
            0
        }
    };

    Ok(FitResult {
        alpha_raw,
        alpha,
        a: Some(a),
        a_sign,
        residual,
        constant: false,
        warnings,
    })
}
