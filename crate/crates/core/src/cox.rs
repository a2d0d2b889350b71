//! Cox partial likelihood for time-sorted data.
//!
//! Rows must be in ascending time order so that the risk set of row `i` is
//! `{i, i+1, ..., n-1}`. All risk-set sums are accumulated in one backward
//! pass with a running maximum of the linear predictor, which keeps
//! `log psi_i` finite for any finite coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Per-evaluation quantities shared by the likelihood and its derivatives.
///
/// `log_psi[i]` is the log of the risk-set sum `sum_{j >= i} exp(x_j' beta)`;
/// column `i` of `xstar` is the risk-weighted mean covariate vector of the
/// rows at risk at `i`.
#[derive(Debug, Clone)]
pub struct CoxWorkspace {
    pub linear_predictor: DVector<f64>,
    pub log_psi: DVector<f64>,
    pub xstar: DMatrix<f64>,
}

impl CoxWorkspace {
    pub fn new(xk: &DMatrix<f64>, beta: &[f64]) -> Result<Self> {
        check_inputs(xk, beta)?;
        let (n, k) = xk.shape();
        let lp = linear_predictor(xk, beta);
        let mut log_psi = DVector::zeros(n);
        let mut xstar = DMatrix::zeros(k, n);
        let mut shift = f64::NEG_INFINITY;
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; k];
        for i in (0..n).rev() {
            if lp[i] > shift {
                let factor = (shift - lp[i]).exp();
                s0 *= factor;
                s1.iter_mut().for_each(|v| *v *= factor);
                shift = lp[i];
            }
            let w = (lp[i] - shift).exp();
            s0 += w;
            for (c, acc) in s1.iter_mut().enumerate() {
                *acc += w * xk[(i, c)];
            }
            log_psi[i] = s0.ln() + shift;
            for c in 0..k {
                xstar[(c, i)] = s1[c] / s0;
            }
        }
        Ok(CoxWorkspace {
            linear_predictor: lp,
            log_psi,
            xstar,
        })
    }

    /// `delta' (X beta - log psi)`.
    pub fn loglik(&self, status: &[bool]) -> f64 {
        status
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(i, _)| self.linear_predictor[i] - self.log_psi[i])
            .sum()
    }

    /// `(Xstar - X') delta`.
    pub fn neg_gradient(&self, xk: &DMatrix<f64>, status: &[bool]) -> DVector<f64> {
        let k = xk.ncols();
        let mut g = DVector::zeros(k);
        for (i, _) in status.iter().enumerate().filter(|(_, &d)| d) {
            for c in 0..k {
                g[c] += self.xstar[(c, i)] - xk[(i, c)];
            }
        }
        g
    }
}

fn check_inputs(xk: &DMatrix<f64>, beta: &[f64]) -> Result<()> {
    if xk.ncols() != beta.len() {
        return Err(Error::validation(format!(
            "design has {} columns but beta has {} entries",
            xk.ncols(),
            beta.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::numerical("non-finite coefficient"));
    }
    Ok(())
}

fn linear_predictor(xk: &DMatrix<f64>, beta: &[f64]) -> DVector<f64> {
    let mut lp = DVector::zeros(xk.nrows());
    for (c, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            lp.axpy(b, &xk.column(c), 1.0);
        }
    }
    lp
}

fn check_status(xk: &DMatrix<f64>, status: &[bool]) -> Result<()> {
    if status.len() != xk.nrows() {
        return Err(Error::validation(format!(
            "{} status values for {} rows",
            status.len(),
            xk.nrows()
        )));
    }
    Ok(())
}

/// Log partial likelihood.
pub fn partial_loglik(xk: &DMatrix<f64>, beta: &[f64], status: &[bool]) -> Result<f64> {
    check_status(xk, status)?;
    Ok(CoxWorkspace::new(xk, beta)?.loglik(status))
}

/// Gradient of the negative log partial likelihood.
pub fn neg_gradient(xk: &DMatrix<f64>, beta: &[f64], status: &[bool]) -> Result<DVector<f64>> {
    check_status(xk, status)?;
    Ok(CoxWorkspace::new(xk, beta)?.neg_gradient(xk, status))
}

/// Value, negative gradient and negative Hessian in one backward pass.
#[derive(Debug, Clone)]
pub struct CoxDerivatives {
    pub loglik: f64,
    pub neg_gradient: DVector<f64>,
    pub neg_hessian: DMatrix<f64>,
}

/// Hessian of the negative log partial likelihood: for each event row the
/// risk-weighted covariance of the covariates over its risk set, summed.
pub fn neg_hessian(xk: &DMatrix<f64>, beta: &[f64], status: &[bool]) -> Result<DMatrix<f64>> {
    Ok(derivatives(xk, beta, status)?.neg_hessian)
}

pub fn derivatives(xk: &DMatrix<f64>, beta: &[f64], status: &[bool]) -> Result<CoxDerivatives> {
    check_inputs(xk, beta)?;
    check_status(xk, status)?;
    let (n, k) = xk.shape();
    let lp = linear_predictor(xk, beta);
    let mut shift = f64::NEG_INFINITY;
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; k];
    // upper triangle, row-major packed into a k x k buffer
    let mut s2 = vec![0.0; k * k];
    let mut loglik = 0.0;
    let mut grad = DVector::zeros(k);
    let mut hess = vec![0.0; k * k];
    let mut x = vec![0.0; k];
    let mut mean = vec![0.0; k];
    for i in (0..n).rev() {
        for (c, v) in x.iter_mut().enumerate() {
            *v = xk[(i, c)];
        }
        if lp[i] > shift {
            let factor = (shift - lp[i]).exp();
            s0 *= factor;
            s1.iter_mut().for_each(|v| *v *= factor);
            s2.iter_mut().for_each(|v| *v *= factor);
            shift = lp[i];
        }
        let w = (lp[i] - shift).exp();
        s0 += w;
        for a in 0..k {
            let wa = w * x[a];
            s1[a] += wa;
            for b in a..k {
                s2[a * k + b] += wa * x[b];
            }
        }
        if !status[i] {
            continue;
        }
        loglik += lp[i] - (s0.ln() + shift);
        for a in 0..k {
            mean[a] = s1[a] / s0;
            grad[a] += mean[a] - x[a];
        }
        for a in 0..k {
            for b in a..k {
                hess[a * k + b] += s2[a * k + b] / s0 - mean[a] * mean[b];
            }
        }
    }
    let mut neg_hessian = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            neg_hessian[(a, b)] = hess[a * k + b];
            neg_hessian[(b, a)] = hess[a * k + b];
        }
    }
    Ok(CoxDerivatives {
        loglik,
        neg_gradient: grad,
        neg_hessian,
    })
}

/// Why a partial-likelihood fit stopped without a clean optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitIssue {
    /// The information matrix is singular at the returned point.
    SingularHessian,
    /// Coefficients grow without bound (monotone likelihood).
    Diverging,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct CoxFit {
    pub beta: DVector<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub issue: Option<FitIssue>,
}

const MLE_GRAD_TOL: f64 = 1e-6;
const MLE_MAX_ITER: usize = 100;
const MLE_RIDGE: f64 = 1e-6;
const MLE_MAX_HALVINGS: usize = 30;
/// Coefficients beyond this magnitude are treated as diverging.
const MLE_DIVERGENCE: f64 = 25.0;
/// Information per event, relative to the column variance, below which a
/// stationary point is a plateau at infinity rather than an optimum.
const MLE_SATURATION: f64 = 1e-5;

/// Classifies a point where the score vanishes.
fn stationary_issue(
    xk: &DMatrix<f64>,
    status: &[bool],
    neg_hessian: &DMatrix<f64>,
    singular_seen: bool,
) -> Option<FitIssue> {
    let n = xk.nrows() as f64;
    let events = status.iter().filter(|&&d| d).count().max(1) as f64;
    let mut degenerate = false;
    for c in 0..xk.ncols() {
        let col = xk.column(c);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var == 0.0 {
            degenerate = true;
        } else if neg_hessian[(c, c)] / (events * var) < MLE_SATURATION {
            return Some(FitIssue::Diverging);
        }
    }
    if degenerate || singular_seen || neg_hessian.clone().cholesky().is_none() {
        Some(FitIssue::SingularHessian)
    } else {
        None
    }
}

/// Partial-likelihood MLE by damped Newton iterations.
pub fn cox_mle(xk: &DMatrix<f64>, status: &[bool], init: Option<&[f64]>) -> Result<CoxFit> {
    let k = xk.ncols();
    if k == 0 {
        return Err(Error::validation("cox_mle needs at least one column"));
    }
    let mut beta = match init {
        Some(b) => DVector::from_column_slice(b),
        None => DVector::zeros(k),
    };
    let mut cur = derivatives(xk, beta.as_slice(), status)?;
    let mut singular = false;
    for iter in 0..MLE_MAX_ITER {
        if cur.neg_gradient.amax() < MLE_GRAD_TOL {
            let issue = stationary_issue(xk, status, &cur.neg_hessian, singular);
            return Ok(CoxFit {
                beta,
                loglik: cur.loglik,
                converged: issue != Some(FitIssue::Diverging),
                iterations: iter,
                issue,
            });
        }
        let step = match cur.neg_hessian.clone().cholesky() {
            Some(ch) => ch.solve(&cur.neg_gradient),
            None => {
                singular = true;
                let mut h = cur.neg_hessian.clone();
                let ridge = MLE_RIDGE * (1.0 + h.diagonal().amax());
                for d in 0..k {
                    h[(d, d)] += ridge;
                }
                match h.cholesky() {
                    Some(ch) => ch.solve(&cur.neg_gradient),
                    None => cur.neg_gradient.clone(),
                }
            }
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MLE_MAX_HALVINGS {
            let trial = &beta - &step * scale;
            if let Ok(d) = derivatives(xk, trial.as_slice(), status) {
                if d.loglik.is_finite() && d.loglik >= cur.loglik - 1e-12 * cur.loglik.abs() {
                    accepted = Some((trial, d));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((b, d)) => {
                let stalled = (d.loglik - cur.loglik).abs() <= 1e-15 * cur.loglik.abs().max(1.0)
                    && d.neg_gradient.amax() >= MLE_GRAD_TOL;
                beta = b;
                cur = d;
                if beta.amax() > MLE_DIVERGENCE {
                    return Ok(CoxFit {
                        beta,
                        loglik: cur.loglik,
                        converged: false,
                        iterations: iter + 1,
                        issue: Some(FitIssue::Diverging),
                    });
                }
                if stalled && singular {
                    return Ok(CoxFit {
                        beta,
                        loglik: cur.loglik,
                        converged: false,
                        iterations: iter + 1,
                        issue: Some(FitIssue::SingularHessian),
                    });
                }
            }
            None => {
                return Ok(CoxFit {
                    beta,
                    loglik: cur.loglik,
                    converged: false,
                    iterations: iter + 1,
                    issue: Some(if singular {
                        FitIssue::SingularHessian
                    } else {
                        FitIssue::MaxIterations
                    }),
                })
            }
        }
    }
    Ok(CoxFit {
        beta,
        loglik: cur.loglik,
        converged: false,
        iterations: MLE_MAX_ITER,
        issue: Some(FitIssue::MaxIterations),
    })
}

/// Log partial likelihood of the empty model: `-sum_{events} log(n - i)`
/// with zero-based `i`.
pub fn null_loglik(status: &[bool]) -> f64 {
    let n = status.len();
    status
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(i, _)| -((n - i) as f64).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Literal evaluation of the sampling distribution, no shifting.
    fn direct_loglik(xk: &DMatrix<f64>, beta: &[f64], status: &[bool]) -> f64 {
        let n = xk.nrows();
        let lp: Vec<f64> = (0..n)
            .map(|i| (0..beta.len()).map(|c| xk[(i, c)] * beta[c]).sum())
            .collect();
        let mut total = 0.0;
        for i in 0..n {
            if status[i] {
                let denom: f64 = (i..n).map(|j| lp[j].exp()).sum();
                total += (lp[i].exp() / denom).ln();
            }
        }
        total
    }

    fn random_instance(seed: u64, n: usize, k: usize) -> (DMatrix<f64>, Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal));
        let beta = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let status = (0..n).map(|_| rng.random_bool(0.7)).collect();
        (x, beta, status)
    }

    fn x123() -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0])
    }

    #[test]
    fn loglik_at_zero_is_minus_log_risk_set() {
        let l = partial_loglik(&x123(), &[0.0], &[true, false, true]).unwrap();
        assert_relative_eq!(l, -(3.0f64).ln(), epsilon = 1e-14);
    }

    #[test]
    fn empty_model_matches_null_constant() {
        let x = DMatrix::<f64>::zeros(4, 0);
        let status = [true, false, true, true];
        let l = partial_loglik(&x, &[], &status).unwrap();
        assert_relative_eq!(l, null_loglik(&status), epsilon = 1e-14);
        assert_relative_eq!(l, -(4f64.ln() + 2f64.ln() + 1f64.ln()), epsilon = 1e-14);
    }

    #[test]
    fn loglik_matches_direct_sum() {
        let l = partial_loglik(&x123(), &[0.5], &[true, false, true]).unwrap();
        // e^0.5 / (e^0.5 + e^1 + e^1.5), last term is log 1
        let expected = (0.5f64.exp() / (0.5f64.exp() + 1f64.exp() + 1.5f64.exp())).ln();
        assert_relative_eq!(l, expected, epsilon = 1e-13);
        for seed in 0..5 {
            let (x, b, s) = random_instance(seed, 30, 3);
            assert_relative_eq!(
                partial_loglik(&x, &b, &s).unwrap(),
                direct_loglik(&x, &b, &s),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn gradient_and_hessian_at_zero_small_example() {
        let status = [true, false, true];
        let g = neg_gradient(&x123(), &[0.0], &status).unwrap();
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-14);
        let h = neg_hessian(&x123(), &[0.0], &status).unwrap();
        assert_relative_eq!(h[(0, 0)], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn no_events_gives_zero_derivatives() {
        let (x, b, _) = random_instance(3, 10, 2);
        let s = vec![false; 10];
        let d = derivatives(&x, &b, &s).unwrap();
        assert_eq!(d.loglik, 0.0);
        assert!(d.neg_gradient.iter().all(|&v| v == 0.0));
        assert!(d.neg_hessian.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn workspace_and_streaming_paths_agree() {
        let (x, b, s) = random_instance(11, 40, 4);
        let ws = CoxWorkspace::new(&x, &b).unwrap();
        let d = derivatives(&x, &b, &s).unwrap();
        assert_relative_eq!(ws.loglik(&s), d.loglik, epsilon = 1e-10);
        let g = ws.neg_gradient(&x, &s);
        for c in 0..4 {
            assert_relative_eq!(g[c], d.neg_gradient[c], epsilon = 1e-10);
        }
        // psi is nonincreasing and its last entry is eta_n
        for i in 1..40 {
            assert!(ws.log_psi[i] <= ws.log_psi[i - 1]);
        }
        assert_relative_eq!(ws.log_psi[39], ws.linear_predictor[39], epsilon = 1e-14);
    }

    #[test]
    fn shift_guard_is_exact_for_moderate_predictors() {
        for seed in 0..5 {
            let (x, mut b, s) = random_instance(100 + seed, 50, 3);
            let lmax = (0..50)
                .map(|i| (0..3).map(|c| x[(i, c)] * b[c]).sum::<f64>().abs())
                .fold(0.0, f64::max);
            let scale = (30.0 / lmax).min(8.0);
            b.iter_mut().for_each(|v| *v *= scale);
            let fast = partial_loglik(&x, &b, &s).unwrap();
            let direct = direct_loglik(&x, &b, &s);
            assert!((fast - direct).abs() < 1e-10 * direct.abs().max(1.0), "{fast} vs {direct}");
        }
    }

    #[test]
    fn extreme_predictors_stay_finite() {
        let x = DMatrix::from_column_slice(4, 1, &[500.0, -500.0, 900.0, -900.0]);
        let l = partial_loglik(&x, &[3.0], &[true, true, true, false]).unwrap();
        assert!(l.is_finite());
    }

    #[test]
    fn appending_zero_coefficient_leaves_value_unchanged() {
        let (x, b, s) = random_instance(21, 25, 3);
        let extra = DMatrix::from_fn(25, 4, |i, j| if j < 3 { x[(i, j)] } else { (i as f64).sin() * 7.0 });
        let mut b4 = b.clone();
        b4.push(0.0);
        assert_relative_eq!(
            partial_loglik(&x, &b, &s).unwrap(),
            partial_loglik(&extra, &b4, &s).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn non_finite_beta_is_rejected() {
        assert!(partial_loglik(&x123(), &[f64::NAN], &[true, false, true]).is_err());
    }

    #[test]
    fn mle_solves_score_equation() {
        let (x, _, s) = random_instance(5, 200, 3);
        let fit = cox_mle(&x, &s, None).unwrap();
        assert!(fit.converged);
        assert!(fit.issue.is_none());
        let g = neg_gradient(&x, fit.beta.as_slice(), &s).unwrap();
        assert!(g.amax() < 1e-6);
    }

    #[test]
    fn constant_column_is_flagged() {
        let x = DMatrix::from_element(20, 1, 2.0);
        let s: Vec<bool> = (0..20).map(|i| i % 3 != 0).collect();
        let fit = cox_mle(&x, &s, None).unwrap();
        assert!(fit.beta[0].abs() < 1e-8);
        assert_eq!(fit.issue, Some(FitIssue::SingularHessian));
    }

    #[test]
    fn separating_covariate_diverges() {
        // larger x always fails first: monotone likelihood
        let n = 30;
        let x = DMatrix::from_fn(n, 1, |i, _| (n - i) as f64);
        let s = vec![true; n];
        let fit = cox_mle(&x, &s, None).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.issue, Some(FitIssue::Diverging));
    }
}
