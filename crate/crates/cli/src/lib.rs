//! Front ends for the explanation engine: the `cfx` command line, the HTTP
//! service and the on-disk model store they share.
//!
//! Both front ends go through [`explain`], so identical requests produce
//! identical explanation files whichever way they arrive.

use std::time::Duration;

use thiserror::Error;

use cfx_core::api::{self, classify, ErrorClass, ExplainRequest};
use cfx_core::{CfxError, Dataset, Explainer, Model};

pub mod cli;
pub mod oracle_check;
pub mod server;
pub mod store;

/// Which explanation an [`ExplainRequest`] asks for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Query {
    Counterfactual,
    Robustness,
    PrimeImplicants,
}

/// Runs one query and returns the serialized explanation file.
pub fn explain(
    model: Model,
    query: Query,
    request: &ExplainRequest,
    dataset_csv: Option<&[u8]>,
    time_limit: Option<Duration>,
) -> Result<Vec<u8>, CfxError> {
    let dataset = dataset_csv.map(|csv| Dataset::from_csv(csv, model.features())).transpose()?;
    let explainer = Explainer::new(model)?;
    let solver = api::solver_config(time_limit);
    let file = match query {
        Query::Counterfactual => api::counterfactual(&explainer, request, dataset.as_ref(), &solver)?,
        Query::Robustness => api::robustness(&explainer, request, &solver)?,
        Query::PrimeImplicants => api::prime_implicants(&explainer, request, &solver)?,
    };
    Ok(file.to_bytes())
}

/// Everything that can stop a command, with its exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CfxError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("oracle check failed: {0}")]
    Mismatch(String),
}

impl AppError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        AppError::Io { path: path.as_ref().display().to_string(), source }
    }

    /// 0 success, 1 usage or i/o, 2 infeasible, 3 cap exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) | AppError::Store(store::StoreError::Invalid(e)) => match classify(e) {
                ErrorClass::Validation => 1,
                ErrorClass::Infeasible => 2,
                ErrorClass::CapExceeded => 3,
            },
            _ => 1,
        }
    }
}
