//! Negative log posterior, MAP estimation and Laplace-approximated model scores.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cox::{self, CoxWorkspace};
use crate::data::{ModelId, SurvivalDataset};
use crate::error::{Error, Result};
use crate::optim::{self, LbfgsConfig, LbfgsStatus};
use crate::priors::PriorSpec;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Smallest starting magnitude for a coefficient; the prior density is zero at 0.
const BARRIER_NUDGE: f64 = 1e-3;
/// Bound applied to non-converged MLE starting points.
const INIT_CLAMP: f64 = 10.0;

/// `g(beta) = -log partial likelihood - log prior` for one design block.
#[derive(Debug, Clone, Copy)]
pub struct NegLogPosterior<'a> {
    xk: &'a DMatrix<f64>,
    status: &'a [bool],
    prior: Option<&'a PriorSpec>,
}

/// Value and, away from the prior's zero set, derivatives of `g`.
#[derive(Debug, Clone)]
pub struct PosteriorEval {
    /// `+inf` when some coefficient is exactly zero.
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

impl<'a> NegLogPosterior<'a> {
    pub fn new(xk: &'a DMatrix<f64>, status: &'a [bool], prior: &'a PriorSpec) -> Self {
        NegLogPosterior {
            xk,
            status,
            prior: Some(prior),
        }
    }

    /// The prior terms switched off; `g` reduces to the negative log partial likelihood.
    pub fn likelihood_only(xk: &'a DMatrix<f64>, status: &'a [bool]) -> Self {
        NegLogPosterior {
            xk,
            status,
            prior: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.xk.ncols()
    }

    fn at_barrier(&self, beta: &[f64]) -> bool {
        self.prior.is_some() && beta.iter().any(|&b| b == 0.0)
    }

    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        if self.at_barrier(beta) {
            return Ok(f64::INFINITY);
        }
        let l = cox::partial_loglik(self.xk, beta, self.status)?;
        let lp = self.prior.map_or(0.0, |p| p.log_density(beta));
        Ok(-l - lp)
    }

    /// Value with the gradient written into `grad`.
    pub fn value_gradient(&self, beta: &[f64], grad: &mut [f64]) -> Result<f64> {
        if self.at_barrier(beta) {
            return Ok(f64::INFINITY);
        }
        let ws = CoxWorkspace::new(self.xk, beta)?;
        let mut value = -ws.loglik(self.status);
        let g = ws.neg_gradient(self.xk, self.status);
        grad.copy_from_slice(g.as_slice());
        if let Some(prior) = self.prior {
            value -= prior.log_density(beta);
            let (pg, _) = prior.neg_log_grad_hess(beta)?;
            for (gi, pi) in grad.iter_mut().zip(pg.iter()) {
                *gi += pi;
            }
        }
        Ok(value)
    }

    pub fn evaluate(&self, beta: &[f64]) -> Result<PosteriorEval> {
        if self.at_barrier(beta) {
            return Ok(PosteriorEval {
                value: f64::INFINITY,
                gradient: None,
                hessian: None,
            });
        }
        let d = cox::derivatives(self.xk, beta, self.status)?;
        let mut value = -d.loglik;
        let mut gradient = d.neg_gradient;
        let mut hessian = d.neg_hessian;
        if let Some(prior) = self.prior {
            value -= prior.log_density(beta);
            let (pg, ph) = prior.neg_log_grad_hess(beta)?;
            gradient += pg;
            for i in 0..ph.len() {
                hessian[(i, i)] += ph[i];
            }
        }
        Ok(PosteriorEval {
            value,
            gradient: Some(gradient),
            hessian: Some(hessian),
        })
    }
}

#[derive(Debug, Clone)]
pub struct MapFit {
    pub beta: DVector<f64>,
    /// `g` at `beta`.
    pub value: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Starting point: the partial-likelihood MLE with near-zero entries pushed
/// off the prior's zero set.
pub fn default_init(xk: &DMatrix<f64>, status: &[bool]) -> Result<DVector<f64>> {
    let fit = cox::cox_mle(xk, status, None)?;
    let mut beta = fit.beta;
    for b in beta.iter_mut() {
        if !b.is_finite() {
            *b = 0.0;
        }
        *b = b.clamp(-INIT_CLAMP, INIT_CLAMP);
        if b.abs() < BARRIER_NUDGE {
            *b = if *b < 0.0 { -BARRIER_NUDGE } else { BARRIER_NUDGE };
        }
    }
    Ok(beta)
}

/// Minimises `g` by L-BFGS from `init` (or from [`default_init`]).
///
/// A failed run is retried once from its last iterate moved by
/// `1e-3 * sqrt(tau)` away from zero.
pub fn map_estimate(
    xk: &DMatrix<f64>,
    status: &[bool],
    prior: &PriorSpec,
    init: Option<&[f64]>,
) -> Result<MapFit> {
    let k = xk.ncols();
    if k == 0 {
        return Err(Error::validation("map_estimate needs at least one coefficient"));
    }
    let start = match init {
        Some(b) => DVector::from_column_slice(b),
        None => default_init(xk, status)?,
    };
    let objective = NegLogPosterior::new(xk, status, prior);
    let config = LbfgsConfig::default();
    let run = |x0: &[f64]| {
        optim::minimize(
            |b: &[f64], g: &mut [f64]| objective.value_gradient(b, g).unwrap_or(f64::INFINITY),
            x0,
            &config,
        )
    };
    let mut report = run(start.as_slice());
    let mut iterations = report.iterations;
    if report.status != LbfgsStatus::Converged {
        let shift = BARRIER_NUDGE * prior.tau.sqrt();
        let restart: Vec<f64> = if report.value.is_finite() { &report.x } else { start.as_slice() }
            .iter()
            .map(|&b| if b < 0.0 { b - shift } else { b + shift })
            .collect();
        report = run(&restart);
        iterations += report.iterations;
    }
    Ok(MapFit {
        converged: report.converged(),
        beta: DVector::from_vec(report.x),
        value: report.value,
        grad_norm: report.grad_norm,
        iterations,
    })
}

/// A model together with its Laplace score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredModel {
    pub model: ModelId,
    pub beta_map: Vec<f64>,
    pub log_marginal: f64,
    pub log_model_prior: f64,
    /// `log_marginal + log_model_prior`; `-inf` when the model is unscorable.
    pub log_score: f64,
    pub converged: bool,
    pub hessian_logdet: f64,
}

impl ScoredModel {
    pub fn is_scorable(&self) -> bool {
        self.converged && self.log_score.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceResult {
    pub beta_map: DVector<f64>,
    pub log_marginal: f64,
    pub hessian_logdet: f64,
    pub converged: bool,
}

/// `log m = -g(beta_map) + (k/2) log(2 pi) - (1/2) log det G(beta_map)`.
///
/// The result is marked unconverged when the MAP search fails or `G` is not
/// positive definite at the MAP.
pub fn log_marginal_laplace(
    xk: &DMatrix<f64>,
    status: &[bool],
    prior: &PriorSpec,
) -> Result<LaplaceResult> {
    let k = xk.ncols();
    if k == 0 {
        return Ok(LaplaceResult {
            beta_map: DVector::zeros(0),
            log_marginal: cox::null_loglik(status),
            hessian_logdet: 0.0,
            converged: true,
        });
    }
    let fit = map_estimate(xk, status, prior, None)?;
    let invalid = |beta_map: DVector<f64>| LaplaceResult {
        beta_map,
        log_marginal: f64::NEG_INFINITY,
        hessian_logdet: f64::NAN,
        converged: false,
    };
    if !fit.converged {
        return Ok(invalid(fit.beta));
    }
    let eval = NegLogPosterior::new(xk, status, prior).evaluate(fit.beta.as_slice())?;
    let Some(hessian) = eval.hessian else {
        return Ok(invalid(fit.beta));
    };
    let Some(chol) = hessian.cholesky() else {
        return Ok(invalid(fit.beta));
    };
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return Ok(invalid(fit.beta));
    }
    Ok(LaplaceResult {
        beta_map: fit.beta,
        log_marginal: -eval.value + 0.5 * k as f64 * LN_2PI - 0.5 * logdet,
        hessian_logdet: logdet,
        converged: true,
    })
}

/// Laplace marginal plus beta-binomial prior for `model` on `dataset`.
/// The model-size prior counts only non-fixed columns.
pub fn score_model(
    dataset: &SurvivalDataset,
    model: &ModelId,
    prior: &PriorSpec,
) -> Result<ScoredModel> {
    dataset.check_model(model)?;
    let xk = dataset.submatrix(model)?;
    let laplace = log_marginal_laplace(&xk, dataset.status(), prior)?;
    let k_free = model.len() - dataset.fixed_columns().len();
    let log_model_prior = prior.log_model_prior(k_free, dataset.p_nonfixed());
    let log_score = if laplace.converged {
        laplace.log_marginal + log_model_prior
    } else {
        f64::NEG_INFINITY
    };
    Ok(ScoredModel {
        model: model.clone(),
        beta_map: laplace.beta_map.iter().copied().collect(),
        log_marginal: laplace.log_marginal,
        log_model_prior,
        log_score,
        converged: laplace.converged,
        hessian_logdet: laplace.hessian_logdet,
    })
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Posterior probabilities over a finite set of log scores.
pub fn normalize_scores(log_scores: &[f64]) -> Result<Vec<f64>> {
    if log_scores.is_empty() {
        return Err(Error::validation("cannot normalise an empty pool"));
    }
    let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::numerical("no scorable model in pool"));
    }
    let weights: Vec<f64> = log_scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}
