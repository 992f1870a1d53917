//! Valuation evaluation, analytic type-derivatives, and virtual valuations.
//!
//! Derivatives are analytic per family so the cost rule's inner integral
//! carries quadrature error only; finite differences live in the tests.

use crate::error::{Error, Result};
use crate::model::{TypeDistribution, ValuationFunction};

/// Density below this is treated as zero when forming the hazard rate.
pub const MIN_DENSITY: f64 = 1e-12;

impl ValuationFunction {
    /// v(t).
    pub fn value(&self, t: f64) -> Result<f64> {
        match self {
            Self::Linear { slope } => Ok(slope * t),
            Self::LogInverse { theta } => {
                if t <= 0.0 {
                    Err(Error::ValuationDomain {
                        t,
                        reason: "log(1 + theta/t) is singular at t = 0".into(),
                    })
                } else {
                    Ok((1.0 + theta / t).ln())
                }
            }
            Self::SqrtLinear { slope } => Ok(slope * t.sqrt()),
            Self::SqrtLog { theta } => {
                if t == 0.0 {
                    Ok(0.0) // limit of sqrt(t)·log(1 + theta/sqrt(t))
                } else {
                    let s = t.sqrt();
                    Ok(s * (1.0 + theta / s).ln())
                }
            }
            Self::LinLog { theta } => {
                if t == 0.0 {
                    Ok(0.0) // limit of t·log(1 + theta/t)
                } else {
                    Ok(t * (1.0 + theta / t).ln())
                }
            }
            Self::Custom { value, .. } => Ok(value(t)),
        }
    }

    /// dv/dt, analytic per family.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        let d = self.derivative_extended(t);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::ValuationDomain {
                t,
                reason: format!("derivative of {self:?} is singular"),
            })
        }
    }

    /// dv/dt with infinite limits at singular points instead of errors.
    ///
    /// Used internally where a singular derivative is always paired with a
    /// zero allocation or an unbounded hazard term.
    pub fn derivative_extended(&self, t: f64) -> f64 {
        match self {
            Self::Linear { slope } => *slope,
            Self::LogInverse { theta } => {
                if t <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -theta / (t * (t + theta))
                }
            }
            Self::SqrtLinear { slope } => {
                if t <= 0.0 {
                    f64::INFINITY
                } else {
                    slope / (2.0 * t.sqrt())
                }
            }
            Self::SqrtLog { theta } => {
                if t <= 0.0 {
                    f64::INFINITY
                } else {
                    let s = t.sqrt();
                    ((1.0 + theta / s).ln() - theta / (s + theta)) / (2.0 * s)
                }
            }
            Self::LinLog { theta } => {
                if t <= 0.0 {
                    f64::INFINITY
                } else {
                    (1.0 + theta / t).ln() - theta / (t + theta)
                }
            }
            Self::Custom { derivative, .. } => derivative(t),
        }
    }

    /// Sample-based report on the stated modeling assumptions
    /// (non-decreasing and concave on the type domain). Violations are
    /// reported, never rejected.
    pub fn check_assumptions(&self, lower: f64, upper: f64) -> AssumptionReport {
        let samples = 201usize;
        let step = (upper - lower) / (samples - 1) as f64;
        let mut nondecreasing = true;
        let mut concave = true;
        let mut prev_d: Option<f64> = None;
        let tol = 1e-9;
        for a in 1..samples {
            let t = lower + a as f64 * step;
            let d = self.derivative_extended(t);
            if d < -tol {
                nondecreasing = false;
            }
            if let Some(pd) = prev_d {
                if d > pd + tol * (1.0 + pd.abs()) {
                    concave = false;
                }
            }
            prev_d = Some(d);
        }
        AssumptionReport {
            nondecreasing,
            concave,
        }
    }
}

/// Whether a valuation satisfies the stated monotonicity/concavity
/// assumptions on a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionReport {
    pub nondecreasing: bool,
    pub concave: bool,
}

/// Myerson virtual valuation: v(t) − ((1 − F(t)) / f(t)) · v′(t).
///
/// At the upper bound the hazard term vanishes and the raw valuation is
/// returned exactly. Point-mass distributions and vanishing densities have
/// no hazard rate and are rejected.
pub fn virtual_valuation(v: &ValuationFunction, dist: &TypeDistribution, t: f64) -> Result<f64> {
    if dist.is_point_mass() {
        return Err(Error::HazardUndefined {
            t,
            reason: "point-mass distribution".into(),
        });
    }
    let survival = 1.0 - dist.cdf(t);
    if survival <= 0.0 {
        return v.value(t);
    }
    let f = dist.pdf(t)?;
    if f < MIN_DENSITY {
        return Err(Error::HazardUndefined {
            t,
            reason: format!("density {f} below {MIN_DENSITY}"),
        });
    }
    Ok(v.value(t)? - survival / f * v.derivative(t)?)
}

/// Virtual valuation with limiting conventions, for the solver's pointwise
/// maximization:
/// - point-mass users contribute their raw valuation (no hazard term);
/// - a vanishing density with positive survival gives −∞ (never allocate);
/// - a singular derivative with positive survival gives −∞ for increasing
///   families (the hazard term dominates at the lower bound).
pub fn virtual_valuation_extended(
    v: &ValuationFunction,
    dist: &TypeDistribution,
    t: f64,
) -> f64 {
    let raw = v.value(t).unwrap_or(f64::INFINITY);
    if dist.is_point_mass() {
        return raw;
    }
    let survival = 1.0 - dist.cdf(t);
    if survival <= 0.0 {
        return raw;
    }
    let f = dist.pdf(t).unwrap_or(0.0);
    if f < MIN_DENSITY {
        return f64::NEG_INFINITY;
    }
    let d = v.derivative_extended(t);
    if d == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    raw - survival / f * d
}
