//! Simulated survival designs and selection-quality metrics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::data::{ModelId, SurvivalDataset};
use crate::error::{Error, Result};
use crate::priors::PriorSpec;
use crate::rng::{stream, Purpose};
use crate::search::{run_search, summaries, SearchConfig};

/// Covariance structure of the simulated design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Correlation {
    /// Unit variances and common pairwise correlation `rho`.
    Equicorrelated(f64),
    /// Pairwise correlation 0.5, except that column 4 is uncorrelated with
    /// everything but column 3, with which it has correlation `1/sqrt(2)`.
    Case1,
}

/// Rows drawn as `sqrt(rho) Z0 + sqrt(1 - rho) Z_j` from a shared factor `Z0`.
/// Under [`Correlation::Case1`] column 4 is the idiosyncratic part of column 3.
pub fn gen_design(n: usize, p: usize, correlation: Correlation, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::validation("design needs n >= 1 and p >= 1"));
    }
    let rho = match correlation {
        Correlation::Equicorrelated(rho) => rho,
        Correlation::Case1 => {
            if p < 5 {
                return Err(Error::validation("the Case 1 design needs at least 5 columns"));
            }
            0.5
        }
    };
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::validation(format!("correlation {rho} outside [0, 1)")));
    }
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut x = DMatrix::zeros(n, p);
    let mut own = vec![0.0; p];
    for i in 0..n {
        let z0: f64 = rng.sample(StandardNormal);
        for (j, o) in own.iter_mut().enumerate() {
            *o = rng.sample(StandardNormal);
            x[(i, j)] = a * z0 + b * *o;
        }
        if correlation == Correlation::Case1 {
            x[(i, 4)] = own[3];
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SurvivalDist {
    /// Hazard `lambda exp(lp)`.
    Exponential { lambda: f64 },
    /// Cumulative hazard `lambda t^shape exp(lp)`.
    Weibull { lambda: f64, shape: f64 },
}

/// Inverse-CDF draws under proportional hazards.
pub fn gen_survival(linpred: &[f64], dist: SurvivalDist, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let (lambda, shape) = match dist {
        SurvivalDist::Exponential { lambda } => (lambda, 1.0),
        SurvivalDist::Weibull { lambda, shape } => (lambda, shape),
    };
    if !(lambda > 0.0 && shape > 0.0) {
        return Err(Error::validation("survival parameters must be positive"));
    }
    Ok(linpred
        .iter()
        .map(|lp| {
            let e: f64 = rng.sample(Exp1);
            (e / (lambda * lp.exp())).powf(1.0 / shape)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CensoringDist {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    None,
}

pub fn gen_censoring(n: usize, dist: CensoringDist, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match dist {
        CensoringDist::Exponential { rate } if rate > 0.0 => {
            Ok((0..n).map(|_| rng.sample::<f64, _>(Exp1) / rate).collect())
        }
        CensoringDist::Exponential { rate } if rate == 0.0 => Ok(vec![f64::INFINITY; n]),
        CensoringDist::Uniform { lo, hi } if lo < hi && lo >= 0.0 => {
            Ok((0..n).map(|_| rng.random_range(lo..hi)).collect())
        }
        CensoringDist::None => Ok(vec![f64::INFINITY; n]),
        other => Err(Error::validation(format!("invalid censoring distribution {other:?}"))),
    }
}

/// A complete data-generating recipe. The true model is the leading
/// `coefficients.len()` columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub correlation: Correlation,
    pub coefficients: Vec<f64>,
    /// Flip each coefficient's sign with probability 1/2 per replicate.
    pub random_signs: bool,
    pub survival: SurvivalDist,
    pub censoring: CensoringDist,
}

pub const CASE1_COEFFICIENTS: [f64; 5] = [-1.5389, 0.6839, -0.8498, -1.2716, -1.1045];
pub const CASE2_COEFFICIENTS: [f64; 6] = [1.1201, 0.8322, -1.9620, -1.7639, 1.6782, 1.8995];
pub const CASE3_COEFFICIENTS: [f64; 20] = [
    -1.6802, -1.2483, 2.9430, -2.6458, -2.5173, -2.8493, -2.0070, -1.5931, 0.8800, -0.9387, 1.6599, -2.9288,
    -1.2495, -2.6298, -2.3434, 1.9075, -1.1044, -0.7873, 2.6722, -0.6340,
];
pub const SIX_COVARIATE_COEFFICIENTS: [f64; 6] = [-1.5140, 1.2799, -1.5307, 1.5164, -1.3020, 1.5833];
pub const CONTRAST_MAGNITUDES: [f64; 6] = [0.5, 0.85, 1.00, 1.50, 1.85, 2.5];

/// Baseline hazards giving the target censoring fractions with Exp(0.1) censoring.
const CASE1_BASELINE: f64 = 0.8732;
const CASE3_BASELINE: f64 = 28.01;

impl Scenario {
    /// Presets 1 to 3.
    pub fn case(number: u8) -> Result<Self> {
        match number {
            1 => Ok(Scenario {
                name: "case1".into(),
                correlation: Correlation::Case1,
                coefficients: CASE1_COEFFICIENTS.to_vec(),
                random_signs: false,
                survival: SurvivalDist::Exponential { lambda: CASE1_BASELINE },
                censoring: CensoringDist::Exponential { rate: 0.1 },
            }),
            2 => Ok(Scenario {
                name: "case2".into(),
                correlation: Correlation::Equicorrelated(0.5),
                coefficients: CASE2_COEFFICIENTS.to_vec(),
                random_signs: false,
                survival: SurvivalDist::Weibull { lambda: 0.1, shape: 15.0 },
                censoring: CensoringDist::Uniform { lo: 0.0, hi: 8.0 },
            }),
            3 => Ok(Scenario {
                name: "case3".into(),
                correlation: Correlation::Equicorrelated(0.5),
                coefficients: CASE3_COEFFICIENTS.to_vec(),
                random_signs: false,
                survival: SurvivalDist::Exponential { lambda: CASE3_BASELINE },
                censoring: CensoringDist::Exponential { rate: 0.1 },
            }),
            other => Err(Error::validation(format!("unknown simulation case {other}"))),
        }
    }

    /// Case 3 settings with a six-covariate truth.
    pub fn six_covariate() -> Self {
        Scenario {
            name: "six".into(),
            coefficients: SIX_COVARIATE_COEFFICIENTS.to_vec(),
            ..Scenario::case(3).expect("preset exists")
        }
    }

    /// Equicorrelated design, exponential survival with mean 10, no
    /// censoring, random signs on fixed magnitudes.
    pub fn prior_contrast() -> Self {
        Scenario {
            name: "contrast".into(),
            correlation: Correlation::Equicorrelated(0.5),
            coefficients: CONTRAST_MAGNITUDES.to_vec(),
            random_signs: true,
            survival: SurvivalDist::Exponential { lambda: 0.1 },
            censoring: CensoringDist::None,
        }
    }

    pub fn truth(&self) -> ModelId {
        ModelId::new(0..self.coefficients.len())
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: SurvivalDataset,
    /// Full-length true coefficient vector.
    pub beta: Vec<f64>,
    pub truth: ModelId,
    pub censoring_rate: f64,
}

/// Replicate `rep` of `scenario`, using independent streams for the design,
/// signs, survival and censoring draws.
pub fn simulate(scenario: &Scenario, n: usize, p: usize, seed: u64, rep: u64) -> Result<SimulatedData> {
    let k = scenario.coefficients.len();
    if p < k {
        return Err(Error::validation(format!("p = {p} is smaller than the true model size {k}")));
    }
    let design = gen_design(n, p, scenario.correlation, &mut stream(seed, rep, Purpose::Design))?;
    let mut beta = vec![0.0; p];
    let mut sign_rng = stream(seed, rep, Purpose::Coefficients);
    for (b, &c) in beta.iter_mut().zip(&scenario.coefficients) {
        *b = if scenario.random_signs && sign_rng.random::<bool>() { -c } else { c };
    }
    let linpred: Vec<f64> = (0..n).map(|i| (0..k).map(|j| design[(i, j)] * beta[j]).sum()).collect();
    let t = gen_survival(&linpred, scenario.survival, &mut stream(seed, rep, Purpose::Survival))?;
    let c = gen_censoring(n, scenario.censoring, &mut stream(seed, rep, Purpose::Censoring))?;
    let times: Vec<f64> = t.iter().zip(&c).map(|(t, c)| t.min(*c)).collect();
    let status: Vec<bool> = t.iter().zip(&c).map(|(t, c)| t <= c).collect();
    let censoring_rate = status.iter().filter(|&&d| !d).count() as f64 / n as f64;
    let names = (1..=p).map(|j| format!("X{j}")).collect();
    Ok(SimulatedData {
        dataset: SurvivalDataset::new(times, status, design, names, vec![])?,
        beta,
        truth: scenario.truth(),
        censoring_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateMetrics {
    pub tp: usize,
    pub fp: usize,
    pub size: usize,
    pub l1: f64,
    pub squared_error: f64,
    /// Selected model equals the truth.
    pub exact: bool,
    pub tpr: f64,
    pub fpr: f64,
}

pub fn metrics(selected: &ModelId, truth: &ModelId, beta_hat: &[f64], beta_true: &[f64]) -> Result<ReplicateMetrics> {
    let p = beta_true.len();
    if beta_hat.len() != p {
        return Err(Error::validation(format!("coefficient vectors have lengths {} and {p}", beta_hat.len())));
    }
    if selected.indices().iter().chain(truth.indices()).any(|&c| c >= p) {
        return Err(Error::validation("model index beyond coefficient vector"));
    }
    let tp = selected.indices().iter().filter(|&&c| truth.contains(c)).count();
    let fp = selected.len() - tp;
    let negatives = p - truth.len();
    Ok(ReplicateMetrics {
        tp,
        fp,
        size: selected.len(),
        l1: beta_hat.iter().zip(beta_true).map(|(a, b)| (a - b).abs()).sum(),
        squared_error: beta_hat.iter().zip(beta_true).map(|(a, b)| (a - b).powi(2)).sum(),
        exact: selected == truth,
        tpr: if truth.is_empty() { 1.0 } else { tp as f64 / truth.len() as f64 },
        fpr: if negatives == 0 { 0.0 } else { fp as f64 / negatives as f64 },
    })
}

/// Mean and Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

fn estimate(values: impl Iterator<Item = f64>) -> Estimate {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let se = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Estimate { mean, se }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub reps: usize,
    /// Mean model size.
    pub mms: Estimate,
    /// Mean true positives.
    pub mtp: Estimate,
    /// Mean false positives.
    pub mfp: Estimate,
    pub mse: Estimate,
    pub mean_l1: Estimate,
    /// Proportion of replicates recovering the true model exactly.
    pub tmp: Estimate,
    pub mtpr: Estimate,
    pub mfpr: Estimate,
}

pub fn aggregate(reps: &[ReplicateMetrics]) -> Result<Aggregate> {
    if reps.is_empty() {
        return Err(Error::validation("no replicates to aggregate"));
    }
    Ok(Aggregate {
        reps: reps.len(),
        mms: estimate(reps.iter().map(|r| r.size as f64)),
        mtp: estimate(reps.iter().map(|r| r.tp as f64)),
        mfp: estimate(reps.iter().map(|r| r.fp as f64)),
        mse: estimate(reps.iter().map(|r| r.squared_error)),
        mean_l1: estimate(reps.iter().map(|r| r.l1)),
        tmp: estimate(reps.iter().map(|r| r.exact as u8 as f64)),
        mtpr: estimate(reps.iter().map(|r| r.tpr)),
        mfpr: estimate(reps.iter().map(|r| r.fpr)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateOutcome {
    pub rep: u64,
    pub hppm: ModelId,
    pub censoring_rate: f64,
    pub models_scored: usize,
    pub metrics: ReplicateMetrics,
}

/// Simulates replicate `rep`, runs the search and scores its HPPM against the truth.
pub fn run_replicate(
    scenario: &Scenario,
    n: usize,
    p: usize,
    seed: u64,
    rep: u64,
    prior: &PriorSpec,
    search: &SearchConfig,
) -> Result<ReplicateOutcome> {
    let sim = simulate(scenario, n, p, seed, rep)?;
    let pool = run_search(&sim.dataset, prior, search)?;
    let summary = summaries(&pool, p, 0.01)?;
    let mut beta_hat = vec![0.0; p];
    for (&c, &b) in summary.hppm.indices().iter().zip(&summary.hppm_beta) {
        beta_hat[c] = b;
    }
    Ok(ReplicateOutcome {
        rep,
        metrics: metrics(&summary.hppm, &sim.truth, &beta_hat, &sim.beta)?,
        hppm: summary.hppm,
        censoring_rate: sim.censoring_rate,
        models_scored: pool.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let n = x.nrows() as f64;
        let (ca, cb) = (x.column(a), x.column(b));
        let (ma, mb) = (ca.sum() / n, cb.sum() / n);
        let cov: f64 = ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum();
        let va: f64 = ca.iter().map(|u| (u - ma).powi(2)).sum();
        let vb: f64 = cb.iter().map(|v| (v - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn independent_design() {
        let n = 4000;
        let x = gen_design(n, 4, Correlation::Equicorrelated(0.0), &mut stream(1, 0, Purpose::Design)).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        for (a, b) in [(0, 1), (1, 2), (0, 3)] {
            assert!(corr(&x, a, b).abs() < bound);
        }
    }

    #[test]
    fn equicorrelated_design() {
        let n = 10_000;
        let x = gen_design(n, 6, Correlation::Equicorrelated(0.5), &mut stream(2, 0, Purpose::Design)).unwrap();
        for a in 0..6 {
            for b in (a + 1)..6 {
                assert!((corr(&x, a, b) - 0.5).abs() < 0.03);
            }
            let var = x.column(a).iter().map(|v| v * v).sum::<f64>() / n as f64;
            assert!((var - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn case1_block() {
        let n = 10_000;
        let x = gen_design(n, 8, Correlation::Case1, &mut stream(3, 0, Purpose::Design)).unwrap();
        assert!((corr(&x, 3, 4) - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.03);
        for j in [0, 1, 2, 5, 6, 7] {
            assert!(corr(&x, 4, j).abs() < 0.04);
        }
        assert!((corr(&x, 0, 3) - 0.5).abs() < 0.03);
        assert!((corr(&x, 5, 7) - 0.5).abs() < 0.03);
        assert!(gen_design(10, 4, Correlation::Case1, &mut stream(3, 0, Purpose::Design)).is_err());
        assert!(gen_design(10, 4, Correlation::Equicorrelated(1.0), &mut stream(3, 0, Purpose::Design)).is_err());
    }

    #[test]
    fn exponential_survival_scaling() {
        let n = 50_000;
        let zero = vec![0.0; n];
        let t = gen_survival(&zero, SurvivalDist::Exponential { lambda: 1.0 }, &mut stream(4, 0, Purpose::Survival)).unwrap();
        let mean = t.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02);
        let doubled = vec![2f64.ln(); n];
        let t2 = gen_survival(&doubled, SurvivalDist::Exponential { lambda: 1.0 }, &mut stream(4, 0, Purpose::Survival)).unwrap();
        for (a, b) in t.iter().zip(&t2) {
            assert!((a / 2.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn censoring_limits() {
        let c = gen_censoring(5, CensoringDist::Exponential { rate: 0.0 }, &mut stream(5, 0, Purpose::Censoring)).unwrap();
        assert!(c.iter().all(|v| v.is_infinite()));
        let u = gen_censoring(1000, CensoringDist::Uniform { lo: 0.0, hi: 8.0 }, &mut stream(5, 0, Purpose::Censoring)).unwrap();
        assert!(u.iter().all(|v| (0.0..8.0).contains(v)));
        assert!(gen_censoring(3, CensoringDist::Uniform { lo: 2.0, hi: 1.0 }, &mut stream(5, 0, Purpose::Censoring)).is_err());
    }

    #[test]
    fn metrics_cases() {
        let truth = ModelId::new([0, 1]);
        let beta = [1.0, -1.0, 0.0, 0.0];
        let m = metrics(&truth, &truth, &beta, &beta).unwrap();
        assert_eq!((m.tp, m.fp, m.size), (2, 0, 2));
        assert_eq!((m.l1, m.squared_error), (0.0, 0.0));
        assert!(m.exact);
        let other = ModelId::new([2, 3]);
        let m = metrics(&other, &truth, &[0.0, 0.0, 0.5, 0.5], &beta).unwrap();
        assert_eq!((m.tp, m.fp), (0, 2));
        assert_eq!(m.l1, 3.0);
        assert_eq!(m.squared_error, 2.5);
        assert!(metrics(&truth, &truth, &[1.0], &beta).is_err());
    }

    #[test]
    fn aggregate_means() {
        let truth = ModelId::new([0]);
        let beta = [1.0, 0.0];
        let a = metrics(&truth, &truth, &beta, &beta).unwrap();
        let b = metrics(&ModelId::new([0, 1]), &truth, &[1.0, 0.2], &beta).unwrap();
        let agg = aggregate(&[a, b]).unwrap();
        assert_eq!(agg.mms.mean, 1.5);
        assert_eq!(agg.mfp.mean, 0.5);
        assert_eq!(agg.tmp.mean, 0.5);
        assert!((agg.mfp.se - 0.5).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn replicate_streams_are_reproducible() {
        let s = Scenario::case(2).unwrap();
        let a = simulate(&s, 50, 10, 9, 3).unwrap();
        let b = simulate(&s, 50, 10, 9, 3).unwrap();
        assert_eq!(a.dataset.times(), b.dataset.times());
        let c = simulate(&s, 50, 10, 9, 4).unwrap();
        assert_ne!(a.dataset.times(), c.dataset.times());
    }

    #[test]
    fn contrast_signs_vary() {
        let s = Scenario::prior_contrast();
        let signs: Vec<Vec<bool>> = (0..5)
            .map(|r| simulate(&s, 20, 10, 1, r).unwrap().beta[..6].iter().map(|b| *b > 0.0).collect())
            .collect();
        assert!(signs.windows(2).any(|w| w[0] != w[1]));
        let sim = simulate(&s, 20, 10, 1, 0).unwrap();
        assert_eq!(sim.censoring_rate, 0.0);
        for (b, m) in sim.beta.iter().zip(CONTRAST_MAGNITUDES) {
            assert_eq!(b.abs(), m);
        }
    }
}
