//! Choosing the piMOM scale `tau` from the spread of null-model MLEs.
//!
//! Outcomes are simulated with no covariate effect, univariate Cox MLEs are
//! fitted on randomly chosen columns, and the pooled coefficients are
//! summarised by a normal density. `tau` is then the smallest value past the
//! overlap peak at which the prior and that null density overlap by less than
//! `1/sqrt(p)`, capped at `alpha^2`.

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::cox;
use crate::data::{sort_by_time, SurvivalDataset};
use crate::error::{Error, Result};
use crate::priors::log_pimom;
use crate::rng::{stream, Purpose};

pub const DEFAULT_R: f64 = 1.0;
pub const DEFAULT_TAU: f64 = 0.25;

pub const GRID_MIN: f64 = 1e-4;
pub const GRID_MAX: f64 = 25.0;
pub const GRID_POINTS: usize = 40;
const BISECTION_RTOL: f64 = 1e-3;
const QUAD_TOL: f64 = 1e-6;
const QUAD_HALF_WIDTH: f64 = 12.0;

/// Pooled null coefficients.
#[derive(Debug, Clone)]
pub struct NullSample {
    pub coefficients: Vec<f64>,
    /// Fits discarded for not converging.
    pub dropped: usize,
}

/// One univariate null fit per replicate.
///
/// Event times are standard exponential. When the dataset is censored,
/// censoring times are exponential with rate `f / (1 - f)`, which gives the
/// dataset's censoring fraction `f` in expectation.
pub fn simulate_null_mles(dataset: &SurvivalDataset, reps: usize, seed: u64) -> Result<NullSample> {
    if reps == 0 {
        return Err(Error::validation("null simulation needs at least one replicate"));
    }
    let mut columns = dataset.free_columns();
    if columns.is_empty() {
        columns = (0..dataset.p()).collect();
    }
    let n = dataset.n();
    let f = dataset.censoring_fraction();
    let censor_rate = if f > 0.0 && f < 1.0 { Some(f / (1.0 - f)) } else { None };

    let fits: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Option<f64>> {
            let mut rng = stream(seed, rep as u64, Purpose::NullSimulation);
            let column = columns[rng.random_range(0..columns.len())];
            let mut times = Vec::with_capacity(n);
            let mut status = Vec::with_capacity(n);
            for _ in 0..n {
                let t: f64 = rng.sample(Exp1);
                let c = censor_rate.map_or(f64::INFINITY, |rate| rng.sample::<f64, _>(Exp1) / rate);
                times.push(t.min(c));
                status.push(t <= c);
            }
            if !status.iter().any(|&d| d) {
                return Ok(None);
            }
            let order = sort_by_time(&times, &status);
            let x = dataset.column(column);
            let xk = DMatrix::from_iterator(n, 1, order.permutation.iter().map(|&r| x[r]));
            let sorted_status: Vec<bool> = order.permutation.iter().map(|&r| status[r]).collect();
            let fit = cox::cox_mle(&xk, &sorted_status, None)?;
            Ok((fit.converged && fit.issue.is_none()).then(|| fit.beta[0]))
        })
        .collect::<Result<_>>()?;
    let coefficients: Vec<f64> = fits.iter().flatten().copied().collect();
    Ok(NullSample {
        dropped: reps - coefficients.len(),
        coefficients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalFit {
    pub mean: f64,
    pub sd: f64,
}

impl NormalFit {
    pub fn from_sample(sample: &[f64]) -> Result<Self> {
        if sample.len() < 2 {
            return Err(Error::numerical("too few null coefficients to fit a normal"));
        }
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let fit = NormalFit { mean, sd: var.sqrt() };
        fit.check()?;
        Ok(fit)
    }

    fn check(&self) -> Result<()> {
        if !(self.sd > 0.0 && self.sd.is_finite() && self.mean.is_finite()) {
            return Err(Error::numerical(format!("degenerate null fit with sd {}", self.sd)));
        }
        Ok(())
    }

    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        (-0.5 * z * z).exp() / (self.sd * (2.0 * std::f64::consts::PI).sqrt())
    }
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson integral of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    adaptive(&f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// `int min(piMOM(b; tau, r), Normal(b; mean, sd)) db`.
pub fn overlap(tau: f64, r: f64, null_fit: &NormalFit) -> Result<f64> {
    null_fit.check()?;
    if !(tau > 0.0) {
        return Err(Error::validation("overlap needs tau > 0"));
    }
    let f = |b: f64| {
        if b == 0.0 {
            0.0
        } else {
            log_pimom(&[b], tau, r).exp().min(null_fit.density(b))
        }
    };
    let lo = null_fit.mean - QUAD_HALF_WIDTH * null_fit.sd;
    let hi = null_fit.mean + QUAD_HALF_WIDTH * null_fit.sd;
    let mut knots = vec![lo, hi, null_fit.mean, 0.0, tau.sqrt(), -tau.sqrt()];
    knots.retain(|k| *k >= lo && *k <= hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let tol = QUAD_TOL / knots.len() as f64;
    let total: f64 = knots.windows(2).map(|w| integrate(f, w[0], w[1], tol)).sum();
    Ok(total.clamp(0.0, 1.0))
}

pub fn tau_grid() -> Vec<f64> {
    let (lo, hi) = (GRID_MIN.ln(), GRID_MAX.ln());
    (0..GRID_POINTS)
        .map(|i| match i {
            0 => GRID_MIN,
            i if i == GRID_POINTS - 1 => GRID_MAX,
            i => (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).exp(),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TauSelection {
    /// `min(tau1, alpha^2)`.
    pub tau: f64,
    pub tau1: f64,
    pub threshold: f64,
    pub null_fit: NormalFit,
    /// `(tau, overlap)` over the grid.
    pub curve: Vec<(f64, f64)>,
    /// False when no grid point met the threshold and `tau1` is the grid maximum.
    pub hit: bool,
    pub dropped_fits: usize,
}

/// Threshold search given a fitted null density and `p` free covariates.
pub fn select_tau_from_fit(null_fit: NormalFit, p_free: usize, alpha: f64, r: f64) -> Result<TauSelection> {
    if !(alpha > 0.0) {
        return Err(Error::validation("alpha must be positive"));
    }
    let threshold = 1.0 / (p_free.max(1) as f64).sqrt();
    let curve: Vec<(f64, f64)> = tau_grid()
        .into_iter()
        .map(|t| Ok((t, overlap(t, r, &null_fit)?)))
        .collect::<Result<_>>()?;
    let peak = curve
        .iter()
        .enumerate()
        .fold(0, |best, (i, &(_, o))| if o > curve[best].1 { i } else { best });
    let crossing = (peak..curve.len()).find(|&i| curve[i].1 < threshold);
    let (tau1, hit) = match crossing {
        None => {
            warn!("overlap never fell below {threshold:.4} on the tau grid; using the grid maximum");
            (GRID_MAX, false)
        }
        Some(i) if i == peak => (curve[i].0, true),
        Some(i) => {
            // overlap(lo) >= threshold > overlap(hi)
            let (mut lo, mut hi) = (curve[i - 1].0, curve[i].0);
            while (hi - lo) > BISECTION_RTOL * hi {
                let mid = (lo * hi).sqrt();
                if overlap(mid, r, &null_fit)? < threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            (hi, true)
        }
    };
    Ok(TauSelection {
        tau: tau1.min(alpha * alpha),
        tau1,
        threshold,
        null_fit,
        curve,
        hit,
        dropped_fits: 0,
    })
}

/// Full tuning run on a dataset's design.
pub fn select_tau(dataset: &SurvivalDataset, alpha: f64, r: f64, reps: usize, seed: u64) -> Result<TauSelection> {
    let sample = simulate_null_mles(dataset, reps, seed)?;
    let fit = NormalFit::from_sample(&sample.coefficients)?;
    let mut selection = select_tau_from_fit(fit, dataset.p_nonfixed(), alpha, r)?;
    selection.dropped_fits = sample.dropped;
    Ok(selection)
}
