//! Screened, annealed stochastic search over the model space.
//!
//! Each chain walks from model to model. At the current model it ranks every
//! absent covariate by its conditional utility (the maximised partial
//! log-likelihood after adding that covariate with the current coefficients
//! held fixed), forms the addition set from the top `d` of them and the
//! deletion set by dropping one free covariate at a time, scores everything,
//! and moves with probability proportional to `exp(log_score / t)`. Chains
//! run independently and their pools are merged at the end.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::debug;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{ModelId, SurvivalDataset};
use crate::error::{Error, Result};
use crate::posterior::{normalize_scores, score_model, ScoredModel};
use crate::priors::PriorSpec;
use crate::rng::{stream, Purpose};

const UTILITY_MAX_ITER: usize = 50;
const UTILITY_TOL: f64 = 1e-6;
const UTILITY_MAX_HALVINGS: usize = 30;
const UTILITY_BOUND: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Descending, all at least 1.
    pub temperatures: Vec<f64>,
    pub iters_per_temp: usize,
    /// Size of the addition set.
    pub d: usize,
    pub chains: usize,
    pub seed: u64,
    /// Chain `c` starts from `start_models[c % len]` when given.
    pub start_models: Option<Vec<ModelId>>,
}

/// `count` equally spaced values from `hi` down to `lo`.
pub fn temperature_ladder(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![hi],
        _ => (0..count)
            .map(|i| hi + (lo - hi) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `2 * ceil(ln p)`, at least 1.
pub fn default_d(p: usize) -> usize {
    ((2.0 * (p.max(1) as f64).ln().ceil()) as usize).max(1)
}

impl SearchConfig {
    /// Defaults for `p` candidate covariates: ten temperatures from 3 to 1,
    /// thirty iterations each, `d = 2 ceil(ln p)`, one chain.
    pub fn for_dimension(p: usize) -> Self {
        SearchConfig {
            temperatures: temperature_ladder(3.0, 1.0, 10),
            iters_per_temp: 30,
            d: default_d(p),
            chains: 1,
            seed: 0,
            start_models: None,
        }
    }

    pub fn with_chains(mut self, chains: usize) -> Self {
        self.chains = chains;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters_per_temp = iters;
        self
    }

    pub fn with_temperatures(mut self, temperatures: Vec<f64>) -> Self {
        self.temperatures = temperatures;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_start_models(mut self, models: Vec<ModelId>) -> Self {
        self.start_models = Some(models);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperatures.is_empty() {
            return Err(Error::validation("at least one temperature is required"));
        }
        if self.temperatures.iter().any(|t| !(*t >= 1.0 && t.is_finite())) {
            return Err(Error::validation("temperatures must be finite and at least 1"));
        }
        if self.temperatures.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::validation("temperatures must be descending"));
        }
        if self.d == 0 {
            return Err(Error::validation("d must be at least 1"));
        }
        if self.chains == 0 {
            return Err(Error::validation("at least one chain is required"));
        }
        if self.start_models.as_ref().is_some_and(|m| m.is_empty()) {
            return Err(Error::validation("start model list is empty"));
        }
        Ok(())
    }
}

/// A pooled model and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolEntry {
    pub scored: ScoredModel,
    /// Iterations a chain spent at this model.
    pub visits: u64,
    pub chains: BTreeSet<usize>,
}

/// Every model scored by one or more chains.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModelPool {
    entries: BTreeMap<ModelId, PoolEntry>,
    /// Iterations where no candidate, including the current model, was scorable.
    pub stalls: u64,
}

impl ModelPool {
    pub fn new() -> Self {
        ModelPool::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, model: &ModelId) -> Option<&PoolEntry> {
        self.entries.get(model)
    }

    pub fn contains(&self, model: &ModelId) -> bool {
        self.entries.contains_key(model)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModelId, &PoolEntry)> {
        self.entries.iter()
    }

    pub fn models(&self) -> impl Iterator<Item = &ScoredModel> {
        self.entries.values().map(|e| &e.scored)
    }

    pub fn insert(&mut self, scored: ScoredModel, chain: usize) {
        self.entries
            .entry(scored.model.clone())
            .or_insert_with(|| PoolEntry {
                scored,
                visits: 0,
                chains: BTreeSet::new(),
            })
            .chains
            .insert(chain);
    }

    fn visit(&mut self, model: &ModelId) {
        if let Some(e) = self.entries.get_mut(model) {
            e.visits += 1;
        }
    }

    /// Key union. Scores are deterministic, so the first copy of a model is
    /// kept; visit counts add and chain sets join.
    pub fn merge(&mut self, other: ModelPool) {
        self.stalls += other.stalls;
        for (model, entry) in other.entries {
            match self.entries.get_mut(&model) {
                Some(mine) => {
                    mine.visits += entry.visits;
                    mine.chains.extend(entry.chains);
                }
                None => {
                    self.entries.insert(model, entry);
                }
            }
        }
    }
}

impl FromIterator<ScoredModel> for ModelPool {
    fn from_iter<I: IntoIterator<Item = ScoredModel>>(iter: I) -> Self {
        let mut pool = ModelPool::new();
        for m in iter {
            pool.insert(m, 0);
        }
        pool
    }
}

/// Result of the one-dimensional maximisation behind a conditional utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utility {
    /// Maximised partial log-likelihood.
    pub value: f64,
    pub beta: f64,
    pub converged: bool,
}

/// Partial log-likelihood in `b` for linear predictor `b * x + offset`,
/// with its first derivative and negated second derivative.
fn offset_terms(x: &[f64], offset: &[f64], b: f64, status: &[bool]) -> (f64, f64, f64) {
    let (mut m, mut s0, mut s1, mut s2) = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
    let (mut h, mut g, mut nh) = (0.0, 0.0, 0.0);
    for i in (0..x.len()).rev() {
        let e = b * x[i] + offset[i];
        if e > m {
            let scale = (m - e).exp();
            s0 *= scale;
            s1 *= scale;
            s2 *= scale;
            m = e;
        }
        let w = (e - m).exp();
        s0 += w;
        s1 += w * x[i];
        s2 += w * x[i] * x[i];
        if status[i] {
            let mean = s1 / s0;
            h += e - (m + s0.ln());
            g += x[i] - mean;
            nh += (s2 / s0 - mean * mean).max(0.0);
        }
    }
    (h, g, nh)
}

/// Safeguarded Newton maximisation of the partial likelihood over the
/// coefficient of `x`, with the rest of the linear predictor fixed at `offset`.
pub fn maximise_offset(x: &[f64], offset: &[f64], status: &[bool]) -> Utility {
    let mut b = 0.0;
    let (mut h, mut g, mut nh) = offset_terms(x, offset, b, status);
    for _ in 0..UTILITY_MAX_ITER {
        if nh <= 1e-12 * (1.0 + g.abs()) {
            // flat direction: no information or saturation
            return Utility {
                value: h,
                beta: b,
                converged: g.abs() < UTILITY_TOL,
            };
        }
        let mut step = g / nh;
        let mut accepted = false;
        for _ in 0..UTILITY_MAX_HALVINGS {
            let cand = b + step;
            let (hc, gc, nhc) = offset_terms(x, offset, cand, status);
            if hc.is_finite() && hc >= h {
                b = cand;
                h = hc;
                g = gc;
                nh = nhc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.abs() < UTILITY_TOL * (1.0 + b.abs()) {
            return Utility {
                value: h,
                beta: b,
                converged: accepted || g.abs() < UTILITY_TOL,
            };
        }
        if b.abs() > UTILITY_BOUND {
            break;
        }
    }
    Utility {
        value: h,
        beta: b,
        converged: false,
    }
}

fn linear_predictor(dataset: &SurvivalDataset, current: &ModelId, beta: &[f64]) -> Vec<f64> {
    let mut eta = vec![0.0; dataset.n()];
    for (&c, &b) in current.indices().iter().zip(beta) {
        let b = if b.is_finite() { b } else { 0.0 };
        for (e, x) in eta.iter_mut().zip(dataset.column(c)) {
            *e += b * x;
        }
    }
    eta
}

/// Utility of adding column `m` to `current`, whose coefficients are held at `beta_current`.
pub fn conditional_utility(
    dataset: &SurvivalDataset,
    current: &ModelId,
    beta_current: &[f64],
    m: usize,
) -> Result<Utility> {
    dataset.check_model(current)?;
    if m >= dataset.p() || current.contains(m) {
        return Err(Error::validation(format!("column {m} is not a candidate addition")));
    }
    let eta = linear_predictor(dataset, current, beta_current);
    Ok(maximise_offset(dataset.column(m), &eta, dataset.status()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    /// `current + m` for the top-`d` utilities, best first.
    pub plus: Vec<ModelId>,
    /// `current - m` for each free `m` in `current`.
    pub minus: Vec<ModelId>,
}

pub fn neighborhoods(
    dataset: &SurvivalDataset,
    current: &ModelId,
    beta_current: &[f64],
    d: usize,
) -> Result<Neighborhoods> {
    dataset.check_model(current)?;
    let eta = linear_predictor(dataset, current, beta_current);
    let candidates: Vec<usize> = (0..dataset.p())
        .filter(|&m| !current.contains(m) && !dataset.is_fixed(m))
        .collect();
    let mut ranked: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&m| {
            let u = maximise_offset(dataset.column(m), &eta, dataset.status()).value;
            (if u.is_nan() { f64::NEG_INFINITY } else { u }, m)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let plus = ranked.iter().take(d).map(|&(_, m)| current.with(m)).collect();
    let minus = current
        .indices()
        .iter()
        .filter(|&&m| !dataset.is_fixed(m))
        .map(|&m| current.without(m))
        .collect();
    Ok(Neighborhoods { plus, minus })
}

/// Index drawn with probability proportional to `exp(score / t)`; `None`
/// when no score is finite.
pub fn sample_annealed(scores: &[f64], t: f64, rng: &mut ChaCha8Rng) -> Option<usize> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let weights: Vec<f64> = scores.iter().map(|s| ((s - max) / t).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last = i;
            if u < *w {
                return Some(i);
            }
            u -= w;
        }
    }
    Some(last)
}

struct Chain<'a> {
    dataset: &'a SurvivalDataset,
    prior: &'a PriorSpec,
    index: usize,
    cache: HashMap<ModelId, ScoredModel>,
    moves: HashMap<ModelId, Vec<ModelId>>,
    pool: ModelPool,
}

impl Chain<'_> {
    fn score_all(&mut self, models: &[ModelId]) -> Result<()> {
        let missing: Vec<&ModelId> = models.iter().filter(|m| !self.cache.contains_key(*m)).collect();
        let scored: Vec<ScoredModel> = missing
            .par_iter()
            .map(|m| score_model(self.dataset, m, self.prior))
            .collect::<Result<_>>()?;
        for s in scored {
            self.pool.insert(s.clone(), self.index);
            self.cache.insert(s.model.clone(), s);
        }
        Ok(())
    }

    /// Candidate moves from `current`, itself last.
    fn candidates(&mut self, current: &ModelId, d: usize) -> Result<Vec<ModelId>> {
        if let Some(c) = self.moves.get(current) {
            return Ok(c.clone());
        }
        let beta = &self.cache[current].beta_map;
        let hood = neighborhoods(self.dataset, current, beta, d)?;
        let mut all = hood.plus;
        all.extend(hood.minus);
        all.push(current.clone());
        self.moves.insert(current.clone(), all.clone());
        Ok(all)
    }
}

/// One annealed chain from `start`, with its random stream keyed by `chain_seed`.
pub fn s5_chain(
    dataset: &SurvivalDataset,
    prior: &PriorSpec,
    config: &SearchConfig,
    start: &ModelId,
    chain_seed: u64,
    chain_index: usize,
) -> Result<ModelPool> {
    config.validate()?;
    dataset.check_model(start)?;
    if !start.is_superset_of(dataset.fixed_columns()) {
        return Err(Error::validation(format!("start model {start} lacks fixed covariates")));
    }
    let mut rng = stream(chain_seed, 0, Purpose::Search);
    let mut chain = Chain {
        dataset,
        prior,
        index: chain_index,
        cache: HashMap::new(),
        moves: HashMap::new(),
        pool: ModelPool::new(),
    };
    let mut current = start.clone();
    chain.score_all(std::slice::from_ref(&current))?;
    for &t in &config.temperatures {
        for _ in 0..config.iters_per_temp {
            let candidates = chain.candidates(&current, config.d)?;
            chain.score_all(&candidates)?;
            let scores: Vec<f64> = candidates
                .iter()
                .map(|m| {
                    let s = &chain.cache[m];
                    if s.is_scorable() {
                        s.log_score
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            match sample_annealed(&scores, t, &mut rng) {
                Some(i) => current = candidates[i].clone(),
                None => chain.pool.stalls += 1,
            }
            chain.pool.visit(&current);
        }
    }
    debug!("chain {chain_index}: {} models scored", chain.pool.len());
    Ok(chain.pool)
}

/// Start model for chain `index`: one random free covariate plus the fixed set.
pub fn random_start(dataset: &SurvivalDataset, seed: u64, index: usize) -> ModelId {
    let free = dataset.free_columns();
    let fixed = dataset.fixed_model();
    if free.is_empty() {
        return fixed;
    }
    let mut rng = stream(seed, index as u64, Purpose::StartModel);
    fixed.with(free[rng.random_range(0..free.len())])
}

/// Runs `config.chains` chains in parallel and merges their pools in chain order.
pub fn run_search(dataset: &SurvivalDataset, prior: &PriorSpec, config: &SearchConfig) -> Result<ModelPool> {
    config.validate()?;
    prior.validate()?;
    let pools: Vec<ModelPool> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let start = match &config.start_models {
                Some(starts) => {
                    let given = &starts[c % starts.len()];
                    ModelId::new(dataset.fixed_columns().iter().chain(given.indices()).copied())
                }
                None => random_start(dataset, config.seed, c),
            };
            s5_chain(dataset, prior, config, &start, config.seed ^ c as u64, c)
        })
        .collect::<Result<_>>()?;
    let mut merged = ModelPool::new();
    for pool in pools {
        merged.merge(pool);
    }
    Ok(merged)
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub hppm: ModelId,
    pub hppm_beta: Vec<f64>,
    pub hppm_probability: f64,
    pub mpm: ModelId,
    pub inclusion: Vec<f64>,
    /// Scorable models by decreasing posterior probability.
    pub posterior: Vec<(ModelId, f64)>,
    /// Models with probability at least `w` times the HPPM's, renormalised.
    pub occam: Vec<(ModelId, f64)>,
}

/// HPPM, median probability model, inclusion probabilities and Occam's window
/// for a pool over `p` columns.
pub fn summaries(pool: &ModelPool, p: usize, w: f64) -> Result<Summary> {
    if pool.is_empty() {
        return Err(Error::validation("cannot summarise an empty pool"));
    }
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::validation("Occam window must lie in (0, 1]"));
    }
    let models: Vec<&ScoredModel> = pool.models().filter(|m| m.is_scorable()).collect();
    if models.is_empty() {
        return Err(Error::numerical("no scorable model in pool"));
    }
    if let Some(bad) = models.iter().flat_map(|m| m.model.indices()).find(|&&c| c >= p) {
        return Err(Error::validation(format!("pool column {bad} out of range for p = {p}")));
    }
    let probs = normalize_scores(&models.iter().map(|m| m.log_score).collect::<Vec<_>>())?;
    let best = (0..models.len()).fold(0, |b, i| if models[i].log_score > models[b].log_score { i } else { b });

    let mut with = vec![0.0; p];
    let mut without = vec![0.0; p];
    for (m, &pr) in models.iter().zip(&probs) {
        let ind = m.model.to_indicator(p);
        for c in 0..p {
            if ind[c] {
                with[c] += pr;
            } else {
                without[c] += pr;
            }
        }
    }
    // complement form keeps covariates present in every model at exactly 1
    let inclusion: Vec<f64> = (0..p)
        .map(|c| if without[c] < with[c] { 1.0 - without[c] } else { with[c] })
        .collect();
    let mpm = ModelId::new((0..p).filter(|&c| inclusion[c] >= 0.5));

    let mut posterior: Vec<(ModelId, f64)> = models.iter().zip(&probs).map(|(m, &pr)| (m.model.clone(), pr)).collect();
    posterior.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let cutoff = w * probs[best];
    let mut occam: Vec<(ModelId, f64)> = posterior.iter().filter(|(_, pr)| *pr >= cutoff).cloned().collect();
    let total: f64 = occam.iter().map(|(_, pr)| pr).sum();
    occam.iter_mut().for_each(|(_, pr)| *pr /= total);

    Ok(Summary {
        hppm: models[best].model.clone(),
        hppm_beta: models[best].beta_map.clone(),
        hppm_probability: probs[best],
        mpm,
        inclusion,
        posterior,
        occam,
    })
}
