use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use survsel::data::ColumnScale;
use survsel::hyperparam::select_tau;
use survsel::predict::{cross_validated_auc, survival_curves, CurveMode, CvSettings, GWeighting, StepFunction};
use survsel::search::{run_search, summaries, ModelPool, SearchConfig, Summary};
use survsel::simgen::{aggregate, run_replicate, simulate as simulate_replicate, Scenario};
use survsel::{ModelId, PriorSpec, SurvivalDataset};

use crate::args::{linspace, parse_range, EvaluateArgs, PredictArgs, PriorSettings, SelectArgs, SimulateArgs, TuneArgs};
use crate::report::{emit, json_bytes, num, Header, Table};
use crate::{CliError, CliResult};

const TOP_MODELS: usize = 50;

fn search_echo(config: &SearchConfig, occam_w: f64) -> serde_json::Value {
    json!({
        "temperatures": config.temperatures,
        "iters_per_temp": config.iters_per_temp,
        "d": config.d,
        "chains": config.chains,
        "occam_w": occam_w,
    })
}

fn names(dataset: &SurvivalDataset, model: &ModelId) -> Vec<String> {
    model.indices().iter().map(|&c| dataset.column_names()[c].clone()).collect()
}

#[derive(Serialize)]
struct ModelReport {
    indices: Vec<usize>,
    names: Vec<String>,
    probability: f64,
    log_score: f64,
}

#[derive(Serialize)]
struct Coefficient {
    index: usize,
    name: String,
    beta: f64,
}

#[derive(Serialize)]
struct Inclusion {
    index: usize,
    name: String,
    fixed: bool,
    probability: f64,
}

#[derive(Serialize)]
struct ScaleReport {
    name: String,
    center: f64,
    scale: f64,
}

#[derive(Serialize)]
struct SelectReport {
    header: Header,
    config: serde_json::Value,
    n: usize,
    p: usize,
    events: usize,
    tau: crate::args::TauReport,
    models_visited: usize,
    hppm: ModelReport,
    hppm_coefficients: Vec<Coefficient>,
    mpm: ModelReport,
    inclusion: Vec<Inclusion>,
    top_models: Vec<ModelReport>,
    occam_window: Vec<ModelReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scales: Option<Vec<ScaleReport>>,
    wall_time_seconds: f64,
}

fn model_report(dataset: &SurvivalDataset, pool: &ModelPool, model: &ModelId, probability: f64) -> ModelReport {
    ModelReport {
        indices: model.indices().to_vec(),
        names: names(dataset, model),
        probability,
        log_score: pool.get(model).map_or(f64::NEG_INFINITY, |e| e.scored.log_score),
    }
}

fn probability_of(summary: &Summary, model: &ModelId) -> f64 {
    summary.posterior.iter().find(|(m, _)| m == model).map_or(0.0, |(_, p)| *p)
}

/// Tunes (when needed), searches and summarises.
fn fit(
    dataset: &SurvivalDataset,
    settings: &PriorSettings,
    search: &SearchConfig,
    occam_w: f64,
    seed: u64,
) -> CliResult<(PriorSpec, crate::args::TauReport, ModelPool, Summary)> {
    let (prior, tau) = settings.prior_for(dataset, seed)?;
    let pool = run_search(dataset, &prior, search)?;
    let summary = summaries(&pool, dataset.p(), occam_w)?;
    Ok((prior, tau, pool, summary))
}

pub fn select(a: &SelectArgs) -> CliResult<()> {
    let started = Instant::now();
    let dataset = a.data.load()?;
    let settings = a.prior.resolve()?;
    let search = a.search.config(dataset.p_nonfixed(), a.seed)?;
    let config = json!({
        "command": "select",
        "seed": a.seed,
        "data": a.data.echo()?,
        "prior": settings,
        "search": search_echo(&search, a.search.occam_w),
    });
    let (_, tau, pool, summary) = fit(&dataset, &settings, &search, a.search.occam_w, a.seed)?;

    let report = SelectReport {
        header: Header::new(a.seed, &config),
        n: dataset.n(),
        p: dataset.p(),
        events: dataset.n_events(),
        tau,
        models_visited: pool.len(),
        hppm: model_report(&dataset, &pool, &summary.hppm, summary.hppm_probability),
        hppm_coefficients: summary
            .hppm
            .indices()
            .iter()
            .zip(&summary.hppm_beta)
            .map(|(&index, &beta)| Coefficient {
                index,
                name: dataset.column_names()[index].clone(),
                beta,
            })
            .collect(),
        mpm: model_report(&dataset, &pool, &summary.mpm, probability_of(&summary, &summary.mpm)),
        inclusion: summary
            .inclusion
            .iter()
            .enumerate()
            .map(|(index, &probability)| Inclusion {
                index,
                name: dataset.column_names()[index].clone(),
                fixed: dataset.is_fixed(index),
                probability,
            })
            .collect(),
        top_models: summary
            .posterior
            .iter()
            .take(TOP_MODELS)
            .map(|(m, p)| model_report(&dataset, &pool, m, *p))
            .collect(),
        occam_window: summary.occam.iter().map(|(m, p)| model_report(&dataset, &pool, m, *p)).collect(),
        scales: dataset.scales().map(|s| scale_report(&dataset, s)),
        config,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    emit(a.out.as_deref(), &json_bytes(&report))
}

fn scale_report(dataset: &SurvivalDataset, scales: &[ColumnScale]) -> Vec<ScaleReport> {
    scales
        .iter()
        .zip(dataset.column_names())
        .map(|(s, name)| ScaleReport {
            name: name.clone(),
            center: s.center,
            scale: s.scale,
        })
        .collect()
}

pub fn tune(a: &TuneArgs) -> CliResult<()> {
    let dataset = a.data.load()?;
    let config = json!({
        "command": "tune",
        "seed": a.seed,
        "data": a.data.echo()?,
        "alpha": a.alpha,
        "r": a.r,
        "reps": a.reps,
    });
    if !(a.alpha > 0.0 && a.alpha.is_finite()) {
        return Err(CliError::validation("--alpha must be positive"));
    }
    let sel = select_tau(&dataset, a.alpha, a.r, a.reps, a.seed)?;
    let header = Header::new(a.seed, &config);
    let note = format!(
        "tau={} tau1={} threshold={} hit={} null_mean={} null_sd={} dropped_fits={}",
        sel.tau, sel.tau1, sel.threshold, sel.hit, sel.null_fit.mean, sel.null_fit.sd, sel.dropped_fits
    );
    let mut table = Table::with_note(&header, &note, &["tau", "overlap"])?;
    for (tau, overlap) in &sel.curve {
        table.row([tau.to_string(), overlap.to_string()])?;
    }
    emit(a.out.as_deref(), &table.into_bytes()?)
}

fn scenario(name: &str) -> CliResult<Scenario> {
    match name.to_ascii_lowercase().as_str() {
        "six" => Ok(Scenario::six_covariate()),
        "contrast" => Ok(Scenario::prior_contrast()),
        other => {
            let number: u8 = other
                .parse()
                .map_err(|_| CliError::validation(format!("unknown case '{name}'; use 1, 2, 3, six or contrast")))?;
            Ok(Scenario::case(number)?)
        }
    }
}

fn write_dataset(path: &Path, dataset: &SurvivalDataset) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut head = vec!["time".to_string(), "status".to_string()];
    head.extend(dataset.column_names().iter().cloned());
    writer.write_record(&head)?;
    for i in 0..dataset.n() {
        let mut row = vec![dataset.times()[i].to_string(), u8::from(dataset.status()[i]).to_string()];
        row.extend(dataset.design().row(i).iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let scenario = scenario(&a.case)?;
    if a.n < 2 || a.p < scenario.coefficients.len() || a.reps == 0 {
        return Err(CliError::validation(format!(
            "need n >= 2, reps >= 1 and p >= {} for this case",
            scenario.coefficients.len()
        )));
    }
    if a.write_data && a.out.is_none() {
        return Err(CliError::validation("--write-data needs --out"));
    }
    let settings = a.prior.resolve()?;
    let probe = a.search.config(a.p, a.seed)?;
    let config = json!({
        "command": "simulate",
        "seed": a.seed,
        "scenario": scenario,
        "n": a.n,
        "p": a.p,
        "reps": a.reps,
        "prior": settings,
        "search": search_echo(&probe, a.search.occam_w),
    });
    let header = Header::new(a.seed, &config);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        if a.write_data {
            std::fs::create_dir_all(dir.join("data"))?;
        }
    }

    let rows: Vec<(f64, survsel::simgen::ReplicateOutcome)> = (0..a.reps)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = a.seed.wrapping_add(rep);
            let sim = simulate_replicate(&scenario, a.n, a.p, a.seed, rep)?;
            if let (true, Some(dir)) = (a.write_data, &a.out) {
                write_dataset(&dir.join("data").join(format!("rep_{rep:04}.csv")), &sim.dataset)?;
            }
            let (prior, tau) = settings.prior_for(&sim.dataset, rep_seed)?;
            let search = a.search.config(a.p, rep_seed)?;
            let outcome = run_replicate(&scenario, a.n, a.p, a.seed, rep, &prior, &search)?;
            Ok((tau.tau, outcome))
        })
        .collect::<CliResult<_>>()?;

    let columns = [
        "rep", "tau", "hppm", "size", "tp", "fp", "exact", "tpr", "fpr", "l1", "squared_error", "censoring_rate",
        "models_scored",
    ];
    let mut table = Table::new(&header, &columns)?;
    for (tau, o) in &rows {
        let m = &o.metrics;
        let hppm: Vec<String> = o.hppm.indices().iter().map(usize::to_string).collect();
        table.row([
            o.rep.to_string(),
            tau.to_string(),
            hppm.join(" "),
            m.size.to_string(),
            m.tp.to_string(),
            m.fp.to_string(),
            u8::from(m.exact).to_string(),
            m.tpr.to_string(),
            m.fpr.to_string(),
            m.l1.to_string(),
            m.squared_error.to_string(),
            o.censoring_rate.to_string(),
            o.models_scored.to_string(),
        ])?;
    }
    let agg = aggregate(&rows.iter().map(|(_, o)| o.metrics).collect::<Vec<_>>())?;
    let mean = |f: &dyn Fn(&(f64, survsel::simgen::ReplicateOutcome)) -> f64| {
        rows.iter().map(f).sum::<f64>() / rows.len() as f64
    };
    table.row([
        "mean".to_string(),
        mean(&|r| r.0).to_string(),
        String::new(),
        agg.mms.mean.to_string(),
        agg.mtp.mean.to_string(),
        agg.mfp.mean.to_string(),
        agg.tmp.mean.to_string(),
        agg.mtpr.mean.to_string(),
        agg.mfpr.mean.to_string(),
        agg.mean_l1.mean.to_string(),
        agg.mse.mean.to_string(),
        mean(&|r| r.1.censoring_rate).to_string(),
        mean(&|r| r.1.models_scored as f64).to_string(),
    ])?;
    let bytes = table.into_bytes()?;
    match &a.out {
        Some(dir) => {
            emit(Some(&dir.join("metrics.csv")), &bytes)?;
            let summary = json!({ "header": header, "config": config, "aggregate": agg });
            emit(Some(&dir.join("aggregate.json")), &json_bytes(&summary))
        }
        None => emit(None, &bytes),
    }
}

/// 20 points between the 10% and 90% quantiles of the event times.
fn default_t_grid(dataset: &SurvivalDataset) -> CliResult<Vec<f64>> {
    let mut events: Vec<f64> = dataset
        .times()
        .iter()
        .zip(dataset.status())
        .filter(|(_, &d)| d)
        .map(|(&t, _)| t)
        .collect();
    if events.len() < 2 {
        return Err(CliError::validation("need at least two events to build a default --t-grid"));
    }
    events.sort_by(f64::total_cmp);
    let q = |f: f64| events[((events.len() - 1) as f64 * f).round() as usize];
    Ok(linspace(q(0.1), q(0.9), 20))
}

fn curve_table(header: &Header, subjects: &[usize], curves: &[StepFunction]) -> CliResult<Vec<u8>> {
    let mut table = Table::new(header, &["subject", "time", "survival"])?;
    for (id, curve) in subjects.iter().zip(curves) {
        for (t, s) in curve.knots.iter().zip(&curve.values) {
            table.row([id.to_string(), t.to_string(), s.to_string()])?;
        }
    }
    table.into_bytes()
}

fn parse_mode(text: &str) -> CliResult<CurveMode> {
    Ok(text.parse()?)
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let dataset = a.data.load()?;
    let settings = a.prior.resolve()?;
    let search = a.search.config(dataset.p_nonfixed(), a.seed)?;
    let mode = parse_mode(&a.mode)?;
    let weighting: GWeighting = a.weighting.parse()?;
    let t_grid = match &a.t_grid {
        Some(text) => {
            let (lo, hi, count) = parse_range(text, "--t-grid")?;
            linspace(lo, hi, count)
        }
        None => default_t_grid(&dataset)?,
    };
    let config = json!({
        "command": "evaluate",
        "seed": a.seed,
        "data": a.data.echo()?,
        "prior": settings,
        "search": search_echo(&search, a.search.occam_w),
        "folds": a.folds,
        "t_grid": t_grid,
        "mode": mode,
        "weighting": weighting,
    });
    let header = Header::new(a.seed, &config);
    let (prior, _) = settings.prior_for(&dataset, a.seed)?;
    let cv = CvSettings {
        folds: a.folds,
        seed: a.seed,
        t_grid: t_grid.clone(),
        mode,
        occam_w: a.search.occam_w,
        weighting,
    };
    let folds = cross_validated_auc(&dataset, &prior, &search, &cv)?;

    let mut columns = vec!["t".to_string()];
    columns.extend(folds.iter().map(|f| format!("fold_{}", f.fold)));
    columns.push("mean".into());
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new(&header, &refs)?;
    for (i, t) in t_grid.iter().enumerate() {
        let values: Vec<Option<f64>> = folds.iter().map(|f| f.auc[i].auc).collect();
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        let mut row = vec![t.to_string()];
        row.extend(values.into_iter().map(num));
        row.push(num(mean));
        table.row(row)?;
    }
    emit(a.out.as_deref(), &table.into_bytes()?)?;

    if let Some(path) = &a.curves {
        let pool = run_search(&dataset, &prior, &search)?;
        let summary = summaries(&pool, dataset.p(), a.search.occam_w)?;
        let curves = survival_curves(&dataset, &pool, &summary, mode, dataset.design())?;
        emit(Some(path), &curve_table(&header, dataset.row_order(), &curves)?)?;
    }
    Ok(())
}

/// Reads new subjects, matching the dataset's covariate columns by name.
fn read_subjects(path: &Path, dataset: &SurvivalDataset) -> CliResult<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let positions: Vec<usize> = dataset
        .column_names()
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::validation(format!("subjects file lacks column '{name}'")))
        })
        .collect::<CliResult<_>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        for (&pos, name) in positions.iter().zip(dataset.column_names()) {
            let cell = record.get(pos).unwrap_or("");
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| CliError::validation(format!("subjects row {}, column '{name}': bad value '{cell}'", r + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::validation("subjects file has no rows"));
    }
    let mut x = DMatrix::from_row_slice(rows, dataset.p(), &values);
    if let Some(scales) = dataset.scales() {
        for (j, s) in scales.iter().enumerate() {
            x.column_mut(j).apply(|v| *v = (*v - s.center) / s.scale);
        }
    }
    Ok(x)
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let dataset = a.data.load()?;
    let settings = a.prior.resolve()?;
    let search = a.search.config(dataset.p_nonfixed(), a.seed)?;
    let mode = parse_mode(&a.mode)?;
    let subjects = read_subjects(&a.subjects, &dataset)?;
    let config = json!({
        "command": "predict",
        "seed": a.seed,
        "data": a.data.echo()?,
        "subjects_sha256": crate::report::file_sha256(&a.subjects)?,
        "prior": settings,
        "search": search_echo(&search, a.search.occam_w),
        "mode": mode,
    });
    let header = Header::new(a.seed, &config);
    let (_, _, pool, summary) = fit(&dataset, &settings, &search, a.search.occam_w, a.seed)?;
    let curves = survival_curves(&dataset, &pool, &summary, mode, &subjects)?;
    let ids: Vec<usize> = (0..subjects.nrows()).collect();
    emit(a.out.as_deref(), &curve_table(&header, &ids, &curves)?)
}
