//! The `cfx` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};

use cfx_core::api::{self, ExplainRequest, PolaritySpec, TargetSpec, WeightScheme, WeightsSpec};
use cfx_core::encoder::encoding_stats;
use cfx_core::explainer::resolve_target;
use cfx_core::format::{instance_from_json, parse_fix, parse_model, EncodingDoc};
use cfx_core::{Dataset, Explainer, Model, Target};

use crate::store::content_id;
use crate::{explain, oracle_check, server, AppError, Query};

#[derive(Debug, Parser)]
#[command(name = "cfx", version, about = "Exact counterfactual explanations for tree ensembles and naive Bayes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find the cheapest counterfactual region.
    Explain(ExplainArgs),
    /// Find the k cheapest distinct counterfactual regions.
    Diverse(DiverseArgs),
    /// Minimum number of indicator flips that changes the prediction.
    Robustness(QueryArgs),
    /// Largest set of features that may change while the prediction holds.
    Pi(PiArgs),
    /// Print the weight of every indicator under a scheme.
    Weights(WeightsArgs),
    /// Print encoding statistics and optionally export the program.
    Stats(StatsArgs),
    /// Compare the solver against exhaustive enumeration.
    OracleCheck(OracleArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model artifact (JSON).
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// CSV dataset for the `mad` and `std` weight schemes.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Write the result here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Seed for commands that sample.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    /// Stop the solver after this many seconds.
    #[arg(long, value_name = "SECS")]
    pub time_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    /// Factual instance: a JSON object keyed by feature name.
    #[arg(long, value_name = "PATH")]
    pub instance: PathBuf,
    /// Target class: `auto` (the opposite class), 0 or 1.
    #[arg(long, default_value = "auto")]
    pub target: TargetSpec,
    /// Which class polynomial to encode: `auto`, `target`, 0 or 1.
    #[arg(long, default_value = "auto")]
    pub polarity: PolaritySpec,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Weight scheme.
    #[arg(long, default_value = "uniform")]
    pub scheme: WeightScheme,
    /// Explicit weights, one per indicator, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "scheme", value_name = "W,...")]
    pub weights: Option<Vec<f64>>,
    /// Constrain a feature: `feature=value` or `feature:lo..hi` (repeatable).
    #[arg(long = "fix", value_name = "SPEC")]
    pub fix: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
}

#[derive(Debug, Args)]
pub struct DiverseArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Number of regions.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct PiArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Keep a feature at its factual value: a name or a 1-based index (repeatable).
    #[arg(long, value_name = "FEATURE")]
    pub keep: Vec<String>,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    #[arg(long, default_value = "uniform")]
    pub scheme: WeightScheme,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Write the integer program in LP text format.
    #[arg(long, value_name = "PATH")]
    pub export_lp: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Check this model on `--instance` instead of random models.
    #[arg(long, value_name = "PATH", requires = "instance")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "model")]
    pub instance: Option<PathBuf>,
    /// Random models per kind (tree, forest, naive Bayes).
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CFX_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Directory holding stored models and datasets.
    #[arg(long, env = "CFX_MODEL_DIR", default_value = "cfx-models", value_name = "DIR")]
    pub model_dir: PathBuf,
    /// Per-request solver time limit in seconds.
    #[arg(long, value_name = "SECS")]
    pub time_limit: Option<f64>,
}

fn read(path: &Path) -> Result<Vec<u8>, AppError> {
    fs::read(path).map_err(|e| AppError::io(path, e))
}

fn load_model(path: &Path) -> Result<Model, AppError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| AppError::Usage(format!("{}: {e}", path.display())))?;
    Ok(parse_model(&text)?)
}

fn load_json(path: &Path) -> Result<Json, AppError> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| AppError::Usage(format!("{}: {e}", path.display())))
}

pub fn time_limit(secs: Option<f64>) -> Result<Option<Duration>, AppError> {
    secs.map(|s| Duration::try_from_secs_f64(s).map_err(|e| AppError::Usage(format!("--time-limit: {e}"))))
        .transpose()
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), AppError> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| AppError::io(path, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| AppError::io("<stdout>", e)),
    }
}

fn emit_json(out: Option<&Path>, value: &Json) -> Result<(), AppError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("values serialize");
    bytes.push(b'\n');
    emit(out, &bytes)
}

/// The request a set of flags describes, plus the dataset it names.
fn build_request(query: &QueryArgs, weights: Option<&WeightArgs>) -> Result<(ExplainRequest, Option<Vec<u8>>), AppError> {
    let mut request = ExplainRequest::new(load_json(&query.instance)?);
    request.target = query.target;
    request.polarity = query.polarity;
    if let Some(w) = weights {
        request.weights = match &w.weights {
            Some(explicit) => WeightsSpec::Explicit(explicit.clone()),
            None => WeightsSpec::Scheme(w.scheme),
        };
        request.conditions = w.fix.iter().map(|s| parse_fix(s)).collect::<Result<_, _>>()?;
    }
    let dataset = query.common.dataset.as_deref().map(read).transpose()?;
    request.dataset = dataset.as_deref().map(content_id);
    Ok((request, dataset))
}

fn run_query(query: &QueryArgs, kind: Query, request: &ExplainRequest, dataset: Option<&[u8]>) -> Result<(), AppError> {
    let model = load_model(&query.common.model)?;
    let bytes = explain(model, kind, request, dataset, time_limit(query.common.time_limit)?)?;
    emit(query.common.out.as_deref(), &bytes)
}

/// A `--keep` value as a feature name; bare numbers that are not feature
/// names are read as 1-based positions.
fn keep_name(model: &Model, spec: &str) -> Result<String, AppError> {
    let features = model.features();
    if features.iter().any(|f| f.name == spec) {
        return Ok(spec.to_owned());
    }
    match spec.parse::<usize>() {
        Ok(i) if (1..=features.len()).contains(&i) => Ok(features[i - 1].name.clone()),
        _ => Err(cfx_core::CfxError::UnknownFeature(spec.to_owned()).into()),
    }
}

pub fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Explain(a) => {
            let (request, data) = build_request(&a.query, Some(&a.weights))?;
            run_query(&a.query, Query::Counterfactual, &request, data.as_deref())
        }
        Command::Diverse(a) => {
            if a.k == 0 {
                return Err(AppError::Usage("--k must be at least 1".into()));
            }
            let (mut request, data) = build_request(&a.query, Some(&a.weights))?;
            request.k = a.k;
            run_query(&a.query, Query::Counterfactual, &request, data.as_deref())
        }
        Command::Robustness(q) => {
            let (request, data) = build_request(&q, None)?;
            run_query(&q, Query::Robustness, &request, data.as_deref())
        }
        Command::Pi(a) => {
            let model = load_model(&a.query.common.model)?;
            let (mut request, data) = build_request(&a.query, None)?;
            request.keep = a.keep.iter().map(|k| keep_name(&model, k)).collect::<Result<_, _>>()?;
            run_query(&a.query, Query::PrimeImplicants, &request, data.as_deref())
        }
        Command::Weights(a) => {
            let model = load_model(&a.common.model)?;
            let dataset = match &a.common.dataset {
                Some(path) => Some(Dataset::from_csv(read(path)?.as_slice(), model.features())?),
                None => None,
            };
            let explainer = Explainer::new(model)?;
            let table = api::weights_table(&explainer, a.scheme, dataset.as_ref())?;
            emit_json(a.common.out.as_deref(), &table)
        }
        Command::Stats(a) => stats(&a),
        Command::OracleCheck(a) => {
            let report = match (&a.model, &a.instance) {
                (Some(m), Some(i)) => oracle_check::check_instance(&load_model(m)?, &load_json(i)?)?,
                _ => oracle_check::check_random(a.trials, a.seed)?,
            };
            emit_json(a.out.as_deref(), &report.to_json())?;
            match report.mismatches.first() {
                Some(first) => Err(AppError::Mismatch(first.clone())),
                None => Ok(()),
            }
        }
        Command::Serve(a) => {
            let config = server::Config { port: a.port, model_dir: a.model_dir, time_limit: time_limit(a.time_limit)? };
            server::serve(config).map_err(|e| AppError::io("serve", e))
        }
    }
}

fn stats(a: &StatsArgs) -> Result<(), AppError> {
    let model = load_model(&a.query.common.model)?;
    let (request, data) = build_request(&a.query, Some(&a.weights))?;
    let dataset = data.as_deref().map(|csv| Dataset::from_csv(csv, model.features())).transpose()?;
    let factual = instance_from_json(model.features(), &request.instance)?;
    let target = resolve_target(&model, &factual, request.target.into())?;
    let explainer = Explainer::new(model)?;
    let weights = api::resolve_weights(&explainer, &request.weights, dataset.as_ref())?;
    let conditions = request
        .conditions
        .iter()
        .map(|c| c.to_condition(explainer.model().features()))
        .collect::<Result<Vec<_>, _>>()?;
    let problem = explainer.encode(&factual, &weights, Target::Class(target), &conditions, request.polarity.0)?;
    if let Some(path) = &a.export_lp {
        fs::write(path, problem.to_lp()).map_err(|e| AppError::io(path, e))?;
    }
    let report = json!({
        "model_type": explainer.model().kind_name(),
        "target_class": target.as_u8(),
        "indicators": explainer.registry().len(),
        "encoding": EncodingDoc::from(&encoding_stats(&problem)),
    });
    emit_json(a.query.common.out.as_deref(), &report)
}
