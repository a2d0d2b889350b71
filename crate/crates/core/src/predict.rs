//! Prediction and evaluation: Kaplan-Meier and Breslow step functions,
//! time-dependent sensitivity/specificity with inverse-probability weights,
//! model-averaged AUC, survival curves and censoring-balanced folds.

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ModelId, SurvivalDataset};
use crate::error::{Error, Result};
use crate::priors::PriorSpec;
use crate::rng::{stream, Purpose};
use crate::search::{run_search, summaries, ModelPool, SearchConfig, Summary};

/// Right-continuous step function: `initial` before the first knot, then
/// `values[i]` on `[knots[i], knots[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub initial: f64,
}

impl StepFunction {
    pub fn constant(value: f64) -> Self {
        StepFunction {
            knots: vec![],
            values: vec![],
            initial: value,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => self.initial,
            i => self.values[i - 1],
        }
    }

    pub fn is_nonincreasing(&self) -> bool {
        std::iter::once(&self.initial)
            .chain(&self.values)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] <= w[0])
    }

    pub fn is_nondecreasing(&self) -> bool {
        std::iter::once(&self.initial)
            .chain(&self.values)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] >= w[0])
    }
}

/// Product-limit estimate with a knot at every distinct observed time.
pub fn kaplan_meier(times: &[f64], status: &[bool]) -> Result<StepFunction> {
    if times.len() != status.len() {
        return Err(Error::validation("times and status differ in length"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut at_risk = times.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let mut events = 0;
        while j < order.len() && times[order[j]] == t {
            events += status[order[j]] as usize;
            j += 1;
        }
        s *= 1.0 - events as f64 / at_risk as f64;
        knots.push(t);
        values.push(s);
        at_risk -= j - i;
        i = j;
    }
    Ok(StepFunction {
        knots,
        values,
        initial: 1.0,
    })
}

/// Value of `g` at the training time nearest `t`; equidistant ties go to the
/// smaller time. `train_times` must be sorted ascending.
pub fn g_interpolate(g: &StepFunction, train_times: &[f64], t: f64) -> Result<f64> {
    if train_times.is_empty() {
        return Err(Error::validation("no training times to interpolate from"));
    }
    let i = train_times.partition_point(|&x| x < t);
    let nearest = if i == 0 {
        train_times[0]
    } else if i == train_times.len() {
        train_times[i - 1]
    } else {
        let (lo, hi) = (train_times[i - 1], train_times[i]);
        if t - lo <= hi - t {
            lo
        } else {
            hi
        }
    };
    Ok(g.eval(nearest))
}

/// Which Kaplan-Meier curve supplies the weights `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GWeighting {
    /// Kaplan-Meier of the event times.
    #[default]
    Survival,
    /// Kaplan-Meier of the censoring times.
    Censoring,
}

impl std::str::FromStr for GWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "survival" => Ok(GWeighting::Survival),
            "censoring" => Ok(GWeighting::Censoring),
            other => Err(Error::validation(format!("unknown weighting '{other}'"))),
        }
    }
}

/// Inverse-probability weights built from a training set.
#[derive(Debug, Clone)]
pub struct Ipcw {
    curve: StepFunction,
    train_times: Vec<f64>,
    floor: f64,
}

impl Ipcw {
    pub fn new(train_times: &[f64], train_status: &[bool], kind: GWeighting) -> Result<Self> {
        if train_times.is_empty() {
            return Err(Error::validation("empty training set"));
        }
        let status: Vec<bool> = match kind {
            GWeighting::Survival => train_status.to_vec(),
            GWeighting::Censoring => train_status.iter().map(|d| !d).collect(),
        };
        let curve = kaplan_meier(train_times, &status)?;
        let floor = curve.values.iter().copied().filter(|v| *v > 0.0).fold(1.0, f64::min);
        let mut sorted = train_times.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Ipcw {
            curve,
            train_times: sorted,
            floor,
        })
    }

    pub fn curve(&self) -> &StepFunction {
        &self.curve
    }

    /// `G` at the nearest training time, never below the curve's last positive level.
    pub fn g(&self, t: f64) -> f64 {
        g_interpolate(&self.curve, &self.train_times, t)
            .expect("training times are non-empty")
            .max(self.floor)
    }
}

/// Weighted fraction of cases (events by `t`) with marker above `c`.
/// `None` when there are no cases.
pub fn sensitivity(t: f64, c: f64, marker: &[f64], times: &[f64], status: &[bool], g: &Ipcw) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..marker.len() {
        if status[i] && times[i] <= t {
            let w = 1.0 / g.g(times[i]);
            den += w;
            if marker[i] > c {
                num += w;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Fraction of controls (still at risk after `t`) with marker at most `c`.
/// `None` when there are no controls.
pub fn specificity(t: f64, c: f64, marker: &[f64], times: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0usize, 0usize);
    for i in 0..marker.len() {
        if times[i] > t {
            den += 1;
            if marker[i] <= c {
                num += 1;
            }
        }
    }
    (den > 0).then(|| num as f64 / den as f64)
}

/// Sorted markers with cumulative case and control weights, for evaluating
/// SE and SP at many thresholds.
struct RocTable {
    markers: Vec<f64>,
    /// Case weight carried by markers `<= markers[i]`.
    case_cum: Vec<f64>,
    control_cum: Vec<f64>,
    case_total: f64,
    control_total: f64,
}

impl RocTable {
    fn new(t: f64, marker: &[f64], times: &[f64], status: &[bool], g: &Ipcw) -> Option<Self> {
        let mut rows: Vec<(f64, f64, f64)> = (0..marker.len())
            .map(|i| {
                let case = if status[i] && times[i] <= t { 1.0 / g.g(times[i]) } else { 0.0 };
                let control = if times[i] > t { 1.0 } else { 0.0 };
                (marker[i], case, control)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut case_cum = Vec::with_capacity(rows.len());
        let mut control_cum = Vec::with_capacity(rows.len());
        let (mut a, mut b) = (0.0, 0.0);
        for r in &rows {
            a += r.1;
            b += r.2;
            case_cum.push(a);
            control_cum.push(b);
        }
        (a > 0.0 && b > 0.0).then(|| RocTable {
            markers: rows.iter().map(|r| r.0).collect(),
            case_cum,
            control_cum,
            case_total: a,
            control_total: b,
        })
    }

    /// `(SE, SP)` at threshold `c`.
    fn at(&self, c: f64) -> (f64, f64) {
        let k = self.markers.partition_point(|&m| m <= c);
        let (case_below, control_below) = if k == 0 { (0.0, 0.0) } else { (self.case_cum[k - 1], self.control_cum[k - 1]) };
        let se = ((self.case_total - case_below) / self.case_total).clamp(0.0, 1.0);
        let sp = (control_below / self.control_total).clamp(0.0, 1.0);
        (se, sp)
    }
}

/// Area under the ROC curve at time `t` for model-averaged SE/SP.
/// `markers[j]` holds model `j`'s risk scores on the test rows.
pub fn bma_auc(
    t: f64,
    markers: &[Vec<f64>],
    weights: &[f64],
    times: &[f64],
    status: &[bool],
    g: &Ipcw,
) -> Result<Option<f64>> {
    if markers.len() != weights.len() || markers.is_empty() {
        return Err(Error::validation("need one weight per marker vector"));
    }
    if markers.iter().any(|m| m.len() != times.len()) {
        return Err(Error::validation("marker length differs from test set size"));
    }
    let mut tables = Vec::with_capacity(markers.len());
    for m in markers {
        match RocTable::new(t, m, times, status, g) {
            Some(tab) => tables.push(tab),
            None => return Ok(None),
        }
    }
    let mut thresholds: Vec<f64> = markers.iter().flatten().copied().collect();
    thresholds.push(f64::NEG_INFINITY);
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&c| {
            let (mut se, mut sp) = (0.0, 0.0);
            for (tab, w) in tables.iter().zip(weights) {
                let (a, b) = tab.at(c);
                se += w * a;
                sp += w * b;
            }
            (1.0 - sp, se)
        })
        .collect();
    // thresholds ascend, so the curve runs from (1, 1) down to (0, 0)
    let area = points
        .windows(2)
        .map(|w| (w[0].0 - w[1].0) * 0.5 * (w[0].1 + w[1].1))
        .sum::<f64>();
    Ok(Some(area))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AucPoint {
    pub t: f64,
    /// `None` when no cases or no controls exist at `t`.
    pub auc: Option<f64>,
}

pub fn auc_curve(
    t_grid: &[f64],
    markers: &[Vec<f64>],
    weights: &[f64],
    times: &[f64],
    status: &[bool],
    g: &Ipcw,
) -> Result<Vec<AucPoint>> {
    t_grid
        .iter()
        .map(|&t| {
            let auc = bma_auc(t, markers, weights, times, status, g)?;
            if auc.is_none() {
                warn!("AUC undefined at t = {t}: no cases or no controls");
            }
            Ok(AucPoint { t, auc })
        })
        .collect()
}

/// Cumulative baseline hazard `H0(t) = sum_{t_i <= t} d_i / sum_{j >= i} exp(x_j b)`,
/// with rows in the dataset's time order.
pub fn breslow(dataset: &SurvivalDataset, model: &ModelId, beta: &[f64]) -> Result<StepFunction> {
    let xk = dataset.submatrix(model)?;
    if beta.len() != model.len() {
        return Err(Error::validation("coefficient count differs from model size"));
    }
    let n = dataset.n();
    let risk: Vec<f64> = (0..n)
        .map(|i| (0..beta.len()).map(|c| xk[(i, c)] * beta[c]).sum::<f64>().exp())
        .collect();
    let mut psi = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += risk[i];
        psi[i] = acc;
    }
    let times = dataset.times();
    let status = dataset.status();
    let mut knots: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut h = 0.0;
    for i in 0..n {
        if status[i] {
            h += 1.0 / psi[i];
        }
        if knots.last() == Some(&times[i]) {
            *values.last_mut().unwrap() = h;
        } else {
            knots.push(times[i]);
            values.push(h);
        }
    }
    Ok(StepFunction {
        knots,
        values,
        initial: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Highest posterior probability model only.
    #[default]
    Hppm,
    /// Occam's-window weighted mixture.
    Bma,
}

impl std::str::FromStr for CurveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hppm" => Ok(CurveMode::Hppm),
            "bma" => Ok(CurveMode::Bma),
            other => Err(Error::validation(format!("unknown mode '{other}'"))),
        }
    }
}

/// Models and weights used for prediction under `mode`, with MAP coefficients.
pub fn prediction_models(pool: &ModelPool, summary: &Summary, mode: CurveMode) -> Result<Vec<(ModelId, Vec<f64>, f64)>> {
    let chosen: Vec<(ModelId, f64)> = match mode {
        CurveMode::Hppm => vec![(summary.hppm.clone(), 1.0)],
        CurveMode::Bma => summary.occam.clone(),
    };
    chosen
        .into_iter()
        .map(|(m, w)| {
            let entry = pool
                .get(&m)
                .filter(|e| e.scored.is_scorable())
                .ok_or_else(|| Error::validation(format!("model {m} is not scored in the pool")))?;
            Ok((m, entry.scored.beta_map.clone(), w))
        })
        .collect()
}

fn linear_score(row: &[f64], model: &ModelId, beta: &[f64]) -> f64 {
    model.indices().iter().zip(beta).map(|(&c, b)| row[c] * b).sum()
}

/// Survival curves `S(t) = sum_j w_j exp(-H0_j(t) exp(x b_j))` for each row
/// of `subjects` (columns in dataset order).
pub fn survival_curves(
    dataset: &SurvivalDataset,
    pool: &ModelPool,
    summary: &Summary,
    mode: CurveMode,
    subjects: &DMatrix<f64>,
) -> Result<Vec<StepFunction>> {
    if subjects.ncols() != dataset.p() {
        return Err(Error::validation(format!(
            "subjects have {} columns, dataset has {}",
            subjects.ncols(),
            dataset.p()
        )));
    }
    let models = prediction_models(pool, summary, mode)?;
    let hazards: Vec<StepFunction> = models
        .iter()
        .map(|(m, b, _)| breslow(dataset, m, b))
        .collect::<Result<_>>()?;
    let knots = hazards[0].knots.clone();
    Ok((0..subjects.nrows())
        .map(|r| {
            let row: Vec<f64> = subjects.row(r).iter().copied().collect();
            let mut values = vec![0.0; knots.len()];
            for ((m, b, w), h) in models.iter().zip(&hazards) {
                let rel = linear_score(&row, m, b).exp();
                for (v, hv) in values.iter_mut().zip(&h.values) {
                    *v += w * (-hv * rel).exp();
                }
            }
            StepFunction {
                knots: knots.clone(),
                values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
                initial: 1.0,
            }
        })
        .collect())
}

/// Fold number for each row: events and censored rows are shuffled
/// separately and dealt round-robin, the dealing position carrying over from
/// events to censored rows.
pub fn cv_folds(status: &[bool], k_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if k_folds < 2 {
        return Err(Error::validation("at least two folds are required"));
    }
    if k_folds > status.len() {
        return Err(Error::validation(format!("{k_folds} folds for {} rows", status.len())));
    }
    let events = status.iter().filter(|&&d| d).count();
    if k_folds > events {
        warn!("{k_folds} folds but only {events} events; some folds have no events");
    }
    if k_folds == status.len() {
        warn!("one row per fold");
    }
    let mut rng = stream(seed, 0, Purpose::Folds);
    let mut ev: Vec<usize> = (0..status.len()).filter(|&i| status[i]).collect();
    let mut ce: Vec<usize> = (0..status.len()).filter(|&i| !status[i]).collect();
    ev.shuffle(&mut rng);
    ce.shuffle(&mut rng);
    let mut folds = vec![0; status.len()];
    for (pos, &i) in ev.iter().chain(&ce).enumerate() {
        folds[i] = pos % k_folds;
    }
    Ok(folds)
}

/// Settings for cross-validated AUC.
#[derive(Debug, Clone)]
pub struct CvSettings {
    pub folds: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub mode: CurveMode,
    pub occam_w: f64,
    pub weighting: GWeighting,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub hppm: ModelId,
    pub models_in_window: usize,
    pub auc: Vec<AucPoint>,
}

/// Runs the search on each training split and evaluates AUC(t) on the held-out fold.
pub fn cross_validated_auc(
    dataset: &SurvivalDataset,
    prior: &PriorSpec,
    search: &SearchConfig,
    settings: &CvSettings,
) -> Result<Vec<FoldResult>> {
    let folds = cv_folds(dataset.status(), settings.folds, settings.seed)?;
    (0..settings.folds)
        .map(|f| {
            let train: Vec<usize> = (0..dataset.n()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..dataset.n()).filter(|&i| folds[i] == f).collect();
            let train_set = dataset.subset_rows(&train)?;
            let pool = run_search(&train_set, prior, search)?;
            let summary = summaries(&pool, dataset.p(), settings.occam_w)?;
            let models = prediction_models(&pool, &summary, settings.mode)?;
            let times: Vec<f64> = test.iter().map(|&i| dataset.times()[i]).collect();
            let status: Vec<bool> = test.iter().map(|&i| dataset.status()[i]).collect();
            let markers: Vec<Vec<f64>> = models
                .iter()
                .map(|(m, b, _)| {
                    test.iter()
                        .map(|&i| {
                            let row: Vec<f64> = dataset.design().row(i).iter().copied().collect();
                            linear_score(&row, m, b)
                        })
                        .collect()
                })
                .collect();
            let weights: Vec<f64> = models.iter().map(|m| m.2).collect();
            let g = Ipcw::new(train_set.times(), train_set.status(), settings.weighting)?;
            Ok(FoldResult {
                fold: f,
                hppm: summary.hppm,
                models_in_window: models.len(),
                auc: auc_curve(&settings.t_grid, &markers, &weights, &times, &status, &g)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn km_textbook() {
        let s = kaplan_meier(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_relative_eq!(s.eval(1.0), 2.0 / 3.0);
        assert_relative_eq!(s.eval(2.5), 1.0 / 3.0);
        assert_eq!(s.eval(3.0), 0.0);
        assert_eq!(s.eval(0.5), 1.0);
        let c = kaplan_meier(&[1.0, 2.0], &[false, false]).unwrap();
        assert!(c.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn km_by_hand() {
        // times 1 2+ 3 4 5+: S(1)=4/5, S(3)=4/5*2/3, S(4)=that*1/2
        let s = kaplan_meier(&[3.0, 1.0, 5.0, 2.0, 4.0], &[true, true, false, false, true]).unwrap();
        assert_relative_eq!(s.eval(1.0), 0.8, epsilon = 1e-15);
        assert_relative_eq!(s.eval(2.0), 0.8, epsilon = 1e-15);
        assert_relative_eq!(s.eval(3.0), 0.8 * 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s.eval(4.5), 0.8 * 2.0 / 3.0 * 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.eval(9.0), 0.8 * 2.0 / 3.0 * 0.5, epsilon = 1e-15);
        assert!(s.is_nonincreasing());
    }

    #[test]
    fn interpolation_rules() {
        let g = kaplan_meier(&[1.0, 2.0, 4.0], &[true, true, true]).unwrap();
        let train = [1.0, 2.0, 4.0];
        assert_eq!(g_interpolate(&g, &train, 2.0).unwrap(), g.eval(2.0));
        // 3 is equidistant from 2 and 4
        assert_eq!(g_interpolate(&g, &train, 3.0).unwrap(), g.eval(2.0));
        assert_eq!(g_interpolate(&g, &train, 3.2).unwrap(), g.eval(4.0));
        assert_eq!(g_interpolate(&g, &train, 10.0).unwrap(), g.eval(4.0));
        assert!(g_interpolate(&g, &[], 1.0).is_err());
    }

    #[test]
    fn zero_weight_level_is_floored() {
        let g = Ipcw::new(&[1.0, 2.0, 4.0], &[true, true, true], GWeighting::Survival).unwrap();
        assert_relative_eq!(g.g(4.0), 1.0 / 3.0);
    }

    #[test]
    fn se_sp_worked_example() {
        // four test subjects, one censored at 2
        let times = [1.0, 2.0, 3.0, 5.0];
        let status = [true, false, true, true];
        let marker = [2.0, 0.5, 1.0, -1.0];
        let g = Ipcw::new(&[0.5, 1.5, 2.5, 3.5], &[true, true, false, true], GWeighting::Survival).unwrap();
        let t = 3.0;
        // cases: rows 0 and 2 with weights 1/G(1), 1/G(3)
        let (w0, w2) = (1.0 / g.g(1.0), 1.0 / g.g(3.0));
        let se = sensitivity(t, 0.9, &marker, &times, &status, &g).unwrap();
        assert_relative_eq!(se, (w0 + w2) / (w0 + w2), epsilon = 1e-15);
        let se = sensitivity(t, 1.5, &marker, &times, &status, &g).unwrap();
        assert_relative_eq!(se, w0 / (w0 + w2), epsilon = 1e-15);
        // the only control is row 3
        assert_eq!(specificity(t, -2.0, &marker, &times), Some(0.0));
        assert_eq!(specificity(t, -1.0, &marker, &times), Some(1.0));
        assert_eq!(sensitivity(t, f64::NEG_INFINITY, &marker, &times, &status, &g), Some(1.0));
        assert_eq!(specificity(t, f64::INFINITY, &marker, &times), Some(1.0));
        assert_eq!(specificity(10.0, 0.0, &marker, &times), None);
        assert_eq!(sensitivity(0.1, 0.0, &marker, &times, &status, &g), None);
    }

    #[test]
    fn separating_marker_has_unit_auc() {
        let times: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let status = vec![true; 20];
        let marker: Vec<f64> = times.iter().map(|t| -t).collect();
        let g = Ipcw::new(&times, &status, GWeighting::Survival).unwrap();
        for t in [3.0, 10.0, 15.0] {
            let auc = bma_auc(t, &[marker.clone()], &[1.0], &times, &status, &g).unwrap().unwrap();
            assert_relative_eq!(auc, 1.0, epsilon = 1e-12);
            let flipped: Vec<f64> = marker.iter().map(|m| -m).collect();
            let auc = bma_auc(t, &[flipped], &[1.0], &times, &status, &g).unwrap().unwrap();
            assert_relative_eq!(auc, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn auc_matches_pointwise_definitions() {
        let times = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
        let status = [true, false, true, true, false, true, true];
        let marker = [0.3, -0.2, 0.9, 0.1, 0.4, -0.5, 0.0];
        let g = Ipcw::new(&times, &status, GWeighting::Censoring).unwrap();
        let t = 2.0;
        let mut cs: Vec<f64> = marker.to_vec();
        cs.push(f64::NEG_INFINITY);
        cs.push(f64::INFINITY);
        cs.sort_by(f64::total_cmp);
        let pts: Vec<(f64, f64)> = cs
            .iter()
            .map(|&c| {
                (
                    1.0 - specificity(t, c, &marker, &times).unwrap(),
                    sensitivity(t, c, &marker, &times, &status, &g).unwrap(),
                )
            })
            .collect();
        let direct: f64 = pts.windows(2).map(|w| (w[0].0 - w[1].0) * 0.5 * (w[0].1 + w[1].1)).sum();
        let auc = bma_auc(t, &[marker.to_vec()], &[1.0], &times, &status, &g).unwrap().unwrap();
        assert_relative_eq!(auc, direct, epsilon = 1e-14);
    }

    #[test]
    fn breslow_reduces_to_nelson_aalen() {
        let design = DMatrix::from_column_slice(3, 1, &[0.4, -1.0, 2.0]);
        let data = SurvivalDataset::new(vec![1.0, 2.0, 3.0], vec![true; 3], design, vec!["x".into()], vec![]).unwrap();
        let h = breslow(&data, &ModelId::new([0]), &[0.0]).unwrap();
        assert_relative_eq!(h.eval(1.0), 1.0 / 3.0);
        assert_relative_eq!(h.eval(2.0), 1.0 / 3.0 + 0.5);
        assert_relative_eq!(h.eval(3.0), 1.0 / 3.0 + 0.5 + 1.0);
        assert_eq!(h.eval(0.5), 0.0);
    }

    #[test]
    fn fold_stratification() {
        let status: Vec<bool> = (0..100).map(|i| i % 5 < 2).collect();
        let folds = cv_folds(&status, 5, 3).unwrap();
        for f in 0..5 {
            let events = (0..100).filter(|&i| folds[i] == f && status[i]).count();
            let censored = (0..100).filter(|&i| folds[i] == f && !status[i]).count();
            assert_eq!((events, censored), (8, 12));
        }
        assert_eq!(folds, cv_folds(&status, 5, 3).unwrap());
        assert_ne!(folds, cv_folds(&status, 5, 4).unwrap());
        assert!(cv_folds(&status, 1, 0).is_err());
        assert!(cv_folds(&status, 101, 0).is_err());
        assert_eq!(cv_folds(&status, 100, 0).unwrap().len(), 100);
    }

    #[test]
    fn step_function_lookup() {
        let s = StepFunction {
            knots: vec![1.0, 2.0],
            values: vec![0.5, 0.2],
            initial: 1.0,
        };
        assert_eq!(s.eval(0.99), 1.0);
        assert_eq!(s.eval(1.0), 0.5);
        assert_eq!(s.eval(1.99), 0.5);
        assert_eq!(s.eval(7.0), 0.2);
        assert!(s.is_nonincreasing());
        assert!(!s.is_nondecreasing());
        assert_eq!(StepFunction::constant(0.3).eval(4.0), 0.3);
    }
}
