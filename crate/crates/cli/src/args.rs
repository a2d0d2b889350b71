use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use survsel::data::{ingest_path, Schema};
use survsel::hyperparam::select_tau;
use survsel::priors::{PriorFamily, PriorSpec};
use survsel::search::{default_d, temperature_ladder, SearchConfig};
use survsel::SurvivalDataset;

use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV or TSV file with a header row.
    pub data: PathBuf,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "status")]
    pub status_col: String,
    /// Comma-separated covariates included in every model.
    #[arg(long, value_delimiter = ',')]
    pub fixed_cols: Vec<String>,
    /// Centre and scale the non-fixed covariates.
    #[arg(long)]
    pub standardize: bool,
}

impl DataArgs {
    pub fn load(&self) -> CliResult<SurvivalDataset> {
        let schema = Schema::new(&self.time_col, &self.status_col).with_fixed(self.fixed_cols.iter().cloned());
        std::fs::metadata(&self.data).map_err(|e| CliError::validation(format!("{}: {e}", self.data.display())))?;
        let mut dataset = ingest_path(&self.data, &schema)?;
        if self.standardize {
            dataset.standardize();
        }
        Ok(dataset)
    }

    pub fn echo(&self) -> CliResult<serde_json::Value> {
        Ok(serde_json::json!({
            "data_sha256": crate::report::file_sha256(&self.data)?,
            "time_col": self.time_col,
            "status_col": self.status_col,
            "fixed_cols": self.fixed_cols,
            "standardize": self.standardize,
        }))
    }
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    /// TOML file with `prior.*` and `modelprior.*` keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// pimom or pmom.
    #[arg(long)]
    pub family: Option<String>,
    /// Prior scale; when absent it is tuned from the data.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Bound on the prior mode used by tuning (tau <= alpha^2).
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    /// Null-simulation replicates used by tuning.
    #[arg(long, default_value_t = 200)]
    pub tune_reps: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    prior: PriorSection,
    #[serde(default)]
    modelprior: ModelPriorSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorSection {
    family: Option<String>,
    r: Option<f64>,
    tau: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelPriorSection {
    a: Option<f64>,
    b: Option<f64>,
}

/// Prior settings after merging flags over the config file.
#[derive(Debug, Clone, Serialize)]
pub struct PriorSettings {
    pub family: PriorFamily,
    pub r: f64,
    pub tau: Option<f64>,
    pub a: f64,
    pub b: Option<f64>,
    pub alpha: f64,
    pub tune_reps: usize,
}

/// Where tau came from.
#[derive(Debug, Clone, Serialize)]
pub struct TauReport {
    pub tau: f64,
    pub tuned: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_hit: Option<bool>,
}

impl PriorArgs {
    pub fn resolve(&self) -> CliResult<PriorSettings> {
        let file = match &self.config {
            Some(path) => read_config(path)?,
            None => FileConfig::default(),
        };
        let family = match self.family.as_ref().or(file.prior.family.as_ref()) {
            Some(f) => f.parse()?,
            None => PriorFamily::PiMom,
        };
        let settings = PriorSettings {
            family,
            r: self.r.or(file.prior.r).unwrap_or(1.0),
            tau: self.tau.or(file.prior.tau),
            a: file.modelprior.a.unwrap_or(1.0),
            b: file.modelprior.b,
            alpha: self.alpha,
            tune_reps: self.tune_reps,
        };
        if !(settings.alpha > 0.0 && settings.alpha.is_finite()) {
            return Err(CliError::validation("--alpha must be positive"));
        }
        if settings.tau.is_none() && settings.family == PriorFamily::PMom {
            return Err(CliError::validation("the pMOM prior needs an explicit --tau"));
        }
        settings.spec(settings.tau.unwrap_or(1.0)).validate()?;
        Ok(settings)
    }
}

impl PriorSettings {
    pub fn spec(&self, tau: f64) -> PriorSpec {
        PriorSpec {
            family: self.family,
            r: self.r,
            tau,
            a: self.a,
            b: self.b,
        }
    }

    /// The given tau, or one tuned on `dataset`.
    pub fn prior_for(&self, dataset: &SurvivalDataset, seed: u64) -> CliResult<(PriorSpec, TauReport)> {
        match self.tau {
            Some(tau) => Ok((
                self.spec(tau),
                TauReport {
                    tau,
                    tuned: false,
                    tau1: None,
                    threshold_hit: None,
                },
            )),
            None => {
                let sel = select_tau(dataset, self.alpha, self.r, self.tune_reps, seed)?;
                Ok((
                    self.spec(sel.tau),
                    TauReport {
                        tau: sel.tau,
                        tuned: true,
                        tau1: Some(sel.tau1),
                        threshold_hit: Some(sel.hit),
                    },
                ))
            }
        }
    }
}

fn read_config(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Independent search chains.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Temperature ladder as `high:low:count`.
    #[arg(long, default_value = "3:1:10")]
    pub temps: String,
    /// Iterations per temperature.
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    /// Screening-set size, or `auto` for 2 ceil(ln p).
    #[arg(long, default_value = "auto")]
    pub d: String,
    /// Occam's window factor.
    #[arg(long, default_value_t = 0.01)]
    pub occam_w: f64,
}

impl SearchArgs {
    pub fn config(&self, p_free: usize, seed: u64) -> CliResult<SearchConfig> {
        let (hi, lo, count) = parse_range(&self.temps, "--temps")?;
        let d = if self.d.eq_ignore_ascii_case("auto") {
            default_d(p_free)
        } else {
            self.d
                .parse()
                .map_err(|_| CliError::validation(format!("--d must be an integer or 'auto', got '{}'", self.d)))?
        };
        let config = SearchConfig::for_dimension(p_free)
            .with_temperatures(temperature_ladder(hi, lo, count))
            .with_iters(self.iters)
            .with_d(d)
            .with_chains(self.chains)
            .with_seed(seed);
        config.validate()?;
        if !(self.occam_w > 0.0 && self.occam_w <= 1.0) {
            return Err(CliError::validation("--occam-w must lie in (0, 1]"));
        }
        Ok(config)
    }
}

/// Parses `a:b:n`.
pub fn parse_range(text: &str, flag: &str) -> CliResult<(f64, f64, usize)> {
    let bad = || CliError::validation(format!("{flag} expects 'start:end:count', got '{text}'"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    Ok((a, b, n))
}

/// `n` evenly spaced points from `a` to `b`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Null-simulation replicates.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// 1, 2, 3, six or contrast.
    #[arg(long, default_value = "2")]
    pub case: String,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: u64,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write each simulated dataset (needs --out).
    #[arg(long)]
    pub write_data: bool,
    /// Output directory; the metrics table goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Evaluation times as `start:end:count`; defaults to 20 points between
    /// the 10% and 90% quantiles of the event times.
    #[arg(long)]
    pub t_grid: Option<String>,
    /// hppm or bma.
    #[arg(long, default_value = "bma")]
    pub mode: String,
    /// Kaplan-Meier curve used for the weights: survival or censoring.
    #[arg(long, default_value = "survival")]
    pub weighting: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// AUC table; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write survival curves for the dataset's own subjects.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// CSV of new subjects with the dataset's covariate columns.
    #[arg(long)]
    pub subjects: PathBuf,
    /// hppm or bma.
    #[arg(long, default_value = "hppm")]
    pub mode: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
