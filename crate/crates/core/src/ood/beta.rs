//! Method-of-moments beta fitting and quantile inversion.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

/// Smallest sample count accepted by the fitters.
pub const MIN_SAMPLES: usize = 10;

/// Absolute tolerance of the bisection in [`beta_quantile`], on the unit scale.
pub const QUANTILE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples contain a non-finite value")]
    NonFinite,
    #[error("all samples are equal")]
    Constant,
    #[error("degenerate moments: variance {variance} >= m(1-m) = {bound}")]
    Degenerate { variance: f64, bound: f64 },
    #[error("sample {value} lies outside the support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },
}

/// Beta distribution on the affine support `[scale_lo, scale_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
}

impl BetaParams {
    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.scale_lo) / (self.scale_hi - self.scale_lo)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.scale_lo + u * (self.scale_hi - self.scale_lo)
    }

    /// Regularized incomplete beta `I_u(alpha, beta)` at a unit-scale point.
    pub fn cdf_unit(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if u >= 1.0 {
            1.0
        } else {
            beta_reg(self.alpha, self.beta, u)
        }
    }

    pub fn mean_unit(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Fits on the padded sample range `[min - eps, max + eps]`,
/// `eps = 1e-6 * (max - min + 1e-12)`.
pub fn fit_beta_mom(samples: &[f64]) -> Result<BetaParams, FitError> {
    check_samples(samples)?;
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min == max {
        return Err(FitError::Constant);
    }
    let eps = 1e-6 * (max - min + 1e-12);
    moments_fit(samples, min - eps, max + eps)
}

/// Fits on a caller-supplied support, e.g. the known range of a property.
pub fn fit_beta_mom_on_support(samples: &[f64], lo: f64, hi: f64) -> Result<BetaParams, FitError> {
    check_samples(samples)?;
    if let Some(&value) = samples.iter().find(|&&v| v < lo || v > hi) {
        return Err(FitError::OutsideSupport { value, lo, hi });
    }
    if samples.iter().all(|&v| v == samples[0]) {
        return Err(FitError::Constant);
    }
    moments_fit(samples, lo, hi)
}

fn check_samples(samples: &[f64]) -> Result<(), FitError> {
    if samples.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples(samples.len()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    Ok(())
}

fn moments_fit(samples: &[f64], lo: f64, hi: f64) -> Result<BetaParams, FitError> {
    let n = samples.len() as f64;
    let span = hi - lo;
    let mapped = samples.iter().map(|&x| (x - lo) / span);
    let mean = mapped.clone().sum::<f64>() / n;
    let var = mapped.map(|u| (u - mean) * (u - mean)).sum::<f64>() / n;
    let bound = mean * (1.0 - mean);
    if var <= 0.0 {
        return Err(FitError::Constant);
    }
    if var >= bound {
        return Err(FitError::Degenerate {
            variance: var,
            bound,
        });
    }
    let common = bound / var - 1.0;
    Ok(BetaParams {
        alpha: mean * common,
        beta: (1.0 - mean) * common,
        scale_lo: lo,
        scale_hi: hi,
    })
}

/// Quantile on the unit scale, by bisection of the CDF on `[0, 1]`.
pub fn beta_quantile_unit(p: &BetaParams, level: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > QUANTILE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if p.cdf_unit(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Quantile at `level` in raw units.
pub fn beta_quantile(p: &BetaParams, level: f64) -> f64 {
    p.from_unit(beta_quantile_unit(p, level))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(alpha: f64, beta: f64) -> BetaParams {
        BetaParams {
            alpha,
            beta,
            scale_lo: 0.0,
            scale_hi: 1.0,
        }
    }

    /// The two moment formulas, written independently of `moments_fit`.
    fn mom_oracle(mapped: &[f64]) -> (f64, f64) {
        let n = mapped.len() as f64;
        let m: f64 = mapped.iter().sum::<f64>() / n;
        let v: f64 = mapped.iter().map(|u| u * u).sum::<f64>() / n - m * m;
        (
            m * (m * (1.0 - m) / v - 1.0),
            (1.0 - m) * (m * (1.0 - m) / v - 1.0),
        )
    }

    #[test]
    fn engineered_moments_give_two_two() {
        // mean 0.5, variance 0.05 before the tiny padding shrink
        let a = 0.025f64.sqrt();
        let mut xs = vec![0.0, 1.0];
        for _ in 0..8 {
            xs.push(0.5 - a);
            xs.push(0.5 + a);
        }
        let p = fit_beta_mom(&xs).unwrap();
        let mapped: Vec<f64> = xs.iter().map(|&x| p.to_unit(x)).collect();
        let (oa, ob) = mom_oracle(&mapped);
        assert!((p.alpha - oa).abs() < 1e-9 && (p.beta - ob).abs() < 1e-9);
        assert!((p.alpha - 2.0).abs() < 1e-4, "{}", p.alpha);
        assert!((p.beta - 2.0).abs() < 1e-4, "{}", p.beta);

        let mut ys = Vec::new();
        for _ in 0..8 {
            ys.push(0.5 - 0.05f64.sqrt());
            ys.push(0.5 + 0.05f64.sqrt());
        }
        let p = fit_beta_mom_on_support(&ys, 0.0, 1.0).unwrap();
        assert!((p.alpha - 2.0).abs() < 1e-12 && (p.beta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(fit_beta_mom(&[0.3; 20]).unwrap_err(), FitError::Constant);
        assert_eq!(
            fit_beta_mom(&[0.3; 5]).unwrap_err(),
            FitError::TooFewSamples(5)
        );
        let mut xs = vec![0.0; 10];
        xs.extend([1.0; 10]);
        assert!(matches!(
            fit_beta_mom_on_support(&xs, 0.0, 1.0).unwrap_err(),
            FitError::Degenerate { .. }
        ));
        assert!(matches!(
            fit_beta_mom_on_support(&[2.0; 10], 0.0, 1.0).unwrap_err(),
            FitError::OutsideSupport { .. }
        ));
        let mut xs = vec![0.5; 11];
        xs[3] = f64::NAN;
        assert_eq!(fit_beta_mom(&xs).unwrap_err(), FitError::NonFinite);
    }

    #[test]
    fn closed_form_quantiles() {
        assert!((beta_quantile(&unit(1.0, 1.0), 0.25) - 0.25).abs() < 1e-9);
        assert!((beta_quantile(&unit(2.0, 2.0), 0.5) - 0.5).abs() < 1e-9);
        // Beta(2,1) has CDF x^2
        assert!((beta_quantile(&unit(2.0, 1.0), 0.49) - 0.7).abs() < 1e-9);
    }

    #[test]
    fn quantile_maps_back_to_raw_units() {
        let p = BetaParams {
            alpha: 1.0,
            beta: 1.0,
            scale_lo: 2.0,
            scale_hi: 10.0,
        };
        assert!((beta_quantile(&p, 0.5) - 6.0).abs() < 1e-8);
    }

    #[test]
    fn quantile_is_increasing() {
        let p = unit(0.7, 3.5);
        let mut prev = -1.0;
        for i in 1..100 {
            let q = beta_quantile(&p, i as f64 / 100.0);
            assert!(q > prev);
            prev = q;
        }
    }
}
