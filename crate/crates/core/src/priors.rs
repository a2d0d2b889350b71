//! Nonlocal coefficient priors and the beta-binomial model-size prior.
//!
//! Everything is in log space. A coefficient exactly equal to zero has zero
//! prior density under both families; the log density is then
//! `f64::NEG_INFINITY`, never NaN.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorFamily {
    /// Product of independent inverse-moment densities.
    #[serde(rename = "piMOM", alias = "pimom")]
    PiMom,
    /// Product of independent moment densities.
    #[serde(rename = "pMOM", alias = "pmom")]
    PMom,
}

impl std::str::FromStr for PriorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pimom" => Ok(PriorFamily::PiMom),
            "pmom" => Ok(PriorFamily::PMom),
            other => Err(Error::validation(format!("unknown prior family '{other}'"))),
        }
    }
}

/// Coefficient prior plus beta-binomial model prior parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub family: PriorFamily,
    pub r: f64,
    pub tau: f64,
    pub a: f64,
    /// `None` means `b = p - a` for the number of free covariates `p`.
    pub b: Option<f64>,
}

impl PriorSpec {
    pub fn pimom(r: f64, tau: f64) -> Self {
        PriorSpec {
            family: PriorFamily::PiMom,
            r,
            tau,
            a: 1.0,
            b: None,
        }
    }

    pub fn pmom(r: f64, tau: f64) -> Self {
        PriorSpec {
            family: PriorFamily::PMom,
            ..PriorSpec::pimom(r, tau)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::validation(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(Error::validation(format!("r must be at least 1, got {}", self.r)));
        }
        if self.family == PriorFamily::PMom && self.r.fract() != 0.0 {
            return Err(Error::validation("pMOM order r must be an integer"));
        }
        if !(self.a > 0.0) || self.b.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::validation("beta-binomial parameters must be positive"));
        }
        Ok(())
    }

    /// Effective `b` for `p` free covariates.
    pub fn b_for(&self, p: usize) -> f64 {
        self.b.unwrap_or(p as f64 - self.a)
    }

    pub fn log_density(&self, beta: &[f64]) -> f64 {
        match self.family {
            PriorFamily::PiMom => log_pimom(beta, self.tau, self.r),
            PriorFamily::PMom => log_pmom(beta, self.tau, self.r),
        }
    }

    /// Gradient and diagonal Hessian of the negative log density.
    pub fn neg_log_grad_hess(&self, beta: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        match self.family {
            PriorFamily::PiMom => log_pimom_grad_hess(beta, self.tau, self.r),
            PriorFamily::PMom => log_pmom_grad_hess(beta, self.tau, self.r),
        }
    }

    /// Log beta-binomial prior for a model with `k_free` of `p_free` free covariates.
    pub fn log_model_prior(&self, k_free: usize, p_free: usize) -> f64 {
        log_model_prior(k_free, p_free, self.a, self.b_for(p_free))
    }
}

/// Log piMOM density:
/// `sum_i [ (r/2) log tau - log Gamma(r/2) - (r+1) log|b_i| - tau / b_i^2 ]`.
pub fn log_pimom(beta: &[f64], tau: f64, r: f64) -> f64 {
    let norm = 0.5 * r * tau.ln() - ln_gamma(0.5 * r);
    let mut total = 0.0;
    for &b in beta {
        if b == 0.0 {
            return f64::NEG_INFINITY;
        }
        let b2 = b * b;
        total += norm - (r + 1.0) * b.abs().ln() - tau / b2;
    }
    total
}

fn zero_coefficient() -> Error {
    Error::numerical("coefficient is exactly zero where the prior density vanishes")
}

/// Gradient `(r+1)/b - 2 tau/b^3` and Hessian diagonal `6 tau/b^4 - (r+1)/b^2`
/// of the negative log piMOM density.
pub fn log_pimom_grad_hess(
    beta: &[f64],
    tau: f64,
    r: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let k = beta.len();
    let mut grad = DVector::zeros(k);
    let mut hess = DVector::zeros(k);
    for (i, &b) in beta.iter().enumerate() {
        if b == 0.0 {
            return Err(zero_coefficient());
        }
        let b2 = b * b;
        grad[i] = (r + 1.0) / b - 2.0 * tau / (b2 * b);
        hess[i] = 6.0 * tau / (b2 * b2) - (r + 1.0) / b2;
    }
    Ok((grad, hess))
}

/// Log pMOM density:
/// `sum_i [ -log(2 pi)/2 - (r + 1/2) log tau - b_i^2/(2 tau) + 2r log|b_i| ]`.
pub fn log_pmom(beta: &[f64], tau: f64, r: f64) -> f64 {
    let norm = -0.5 * LN_2PI - (r + 0.5) * tau.ln();
    let mut total = 0.0;
    for &b in beta {
        if b == 0.0 {
            return f64::NEG_INFINITY;
        }
        total += norm - b * b / (2.0 * tau) + 2.0 * r * b.abs().ln();
    }
    total
}

/// Gradient `b/tau - 2r/b` and Hessian diagonal `1/tau + 2r/b^2` of the
/// negative log pMOM density.
pub fn log_pmom_grad_hess(
    beta: &[f64],
    tau: f64,
    r: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let k = beta.len();
    let mut grad = DVector::zeros(k);
    let mut hess = DVector::zeros(k);
    for (i, &b) in beta.iter().enumerate() {
        if b == 0.0 {
            return Err(zero_coefficient());
        }
        grad[i] = b / tau - 2.0 * r / b;
        hess[i] = 1.0 / tau + 2.0 * r / (b * b);
    }
    Ok((grad, hess))
}

/// `log B(a + k, b + p - k) - log B(a, b)`.
pub fn log_model_prior(k: usize, p: usize, a: f64, b: f64) -> f64 {
    debug_assert!(k <= p);
    let k = k as f64;
    let p = p as f64;
    ln_beta(a + k, b + p - k) - ln_beta(a, b)
}
