//! Bayesian variable selection for right-censored survival data.
//!
//! Cox proportional-hazards models are scored under product inverse-moment
//! (piMOM) or product moment (pMOM) nonlocal coefficient priors, with a
//! beta-binomial prior over model size. Marginal likelihoods come from a
//! Laplace approximation at the MAP, and the model space is explored by a
//! screened, annealed stochastic search whose chains run in parallel and are
//! pooled at the end.
//!
//! ```no_run
//! use survsel::{data::{ingest_path, Schema}, priors::PriorSpec, search::{run_search, SearchConfig, summaries}};
//!
//! let schema = Schema::new("time", "status").with_fixed(["age"]);
//! let dataset = ingest_path("cohort.csv", &schema)?;
//! let prior = PriorSpec::pimom(1.0, 0.25);
//! let config = SearchConfig::for_dimension(dataset.p_nonfixed()).with_chains(8).with_seed(7);
//! let pool = run_search(&dataset, &prior, &config)?;
//! let summary = summaries(&pool, dataset.p(), 0.01)?;
//! println!("HPPM: {:?}", summary.hppm);
//! # Ok::<(), survsel::Error>(())
//! ```

pub mod cox;
pub mod data;
pub mod error;
pub mod hyperparam;
pub mod optim;
pub mod posterior;
pub mod predict;
pub mod priors;
pub mod rng;
pub mod search;
pub mod simgen;

pub use data::{ModelId, SurvivalDataset};
pub use error::{Error, Result};
pub use posterior::ScoredModel;
pub use priors::{PriorFamily, PriorSpec};
pub use search::{ModelPool, SearchConfig};
