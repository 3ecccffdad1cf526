//! Request handling shared by the command line and the HTTP service, so both
//! produce identical explanation files for identical requests.

use std::time::Duration;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value as Json};

use crate::encoder::{Condition, Polarity};
use crate::error::{CfxError, Result};
use crate::explainer::{CounterfactualSet, ExplainOptions, Explainer, Target, Verification};
use crate::format::{
    indicator_names, instance_from_json, instance_to_json, ConditionDoc, EncodingDoc, ExplanationFile,
    PrimeImplicantDoc, ResultDoc, EXPLANATION_SCHEMA,
};
use crate::models::{feature_index, Class, Instance, Model};
use crate::oracle::DEFAULT_SPACE_CAP;
use crate::solver::SolverConfig;
use crate::weights::{mad_rule_weights, std_weights, uniform_weights, Dataset, WeightVector};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TargetSpec {
    #[default]
    Auto,
    Class(Class),
}

fn class_from_json(v: &Json) -> Option<Class> {
    match v {
        Json::Number(n) => n.as_u64().and_then(|c| u8::try_from(c).ok()).and_then(Class::from_u8),
        Json::String(s) => s.parse::<u8>().ok().and_then(Class::from_u8),
        _ => None,
    }
}

impl Serialize for TargetSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TargetSpec::Auto => s.serialize_str("auto"),
            TargetSpec::Class(c) => s.serialize_u8(c.as_u8()),
        }
    }
}

impl<'de> Deserialize<'de> for TargetSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Json::deserialize(d)?;
        if v == "auto" {
            return Ok(TargetSpec::Auto);
        }
        class_from_json(&v).map(TargetSpec::Class).ok_or_else(|| D::Error::custom("target must be \"auto\", 0 or 1"))
    }
}

impl From<TargetSpec> for Target {
    fn from(t: TargetSpec) -> Self {
        match t {
            TargetSpec::Auto => Target::Auto,
            TargetSpec::Class(c) => Target::Class(c),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PolaritySpec(pub Polarity);

impl Serialize for PolaritySpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Polarity::Auto => s.serialize_str("auto"),
            Polarity::Target => s.serialize_str("target"),
            Polarity::Fixed(c) => s.serialize_u8(c.as_u8()),
        }
    }
}

impl<'de> Deserialize<'de> for PolaritySpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Json::deserialize(d)?;
        let p = match v.as_str() {
            Some("auto") => Polarity::Auto,
            Some("target") => Polarity::Target,
            _ => Polarity::Fixed(
                class_from_json(&v).ok_or_else(|| D::Error::custom("polarity must be \"auto\", \"target\", 0 or 1"))?,
            ),
        };
        Ok(PolaritySpec(p))
    }
}

impl std::str::FromStr for PolaritySpec {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Json::from(s)).map_err(|e| CfxError::Format(e.to_string()))
    }
}

impl std::str::FromStr for TargetSpec {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Json::from(s)).map_err(|e| CfxError::Format(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    #[default]
    Uniform,
    /// Rule-conditioned inverse median absolute deviation.
    Mad,
    /// Inverse standard deviation.
    Std,
}

impl std::str::FromStr for WeightScheme {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightScheme::Uniform),
            "mad" => Ok(WeightScheme::Mad),
            "std" => Ok(WeightScheme::Std),
            other => Err(CfxError::Format(format!("unknown weight scheme `{other}`; use uniform, mad or std"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Scheme(WeightScheme),
    /// One weight per registry indicator.
    Explicit(Vec<f64>),
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec::Scheme(WeightScheme::Uniform)
    }
}

fn one() -> usize {
    1
}

fn is_one(k: &usize) -> bool {
    *k == 1
}

/// An explanation request. The same shape serves counterfactual, diverse,
/// robustness and prime implicant queries; fields a query does not use are
/// ignored but still echoed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub instance: Json,
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default)]
    pub weights: WeightsSpec,
    /// Content id of the dataset used by the `mad` and `std` schemes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default)]
    pub conditions: Vec<ConditionDoc>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub k: usize,
    #[serde(default)]
    pub polarity: PolaritySpec,
    /// Features kept at their factual values in a prime implicant query.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keep: Vec<String>,
}

impl ExplainRequest {
    pub fn new(instance: Json) -> Self {
        ExplainRequest {
            instance,
            target: TargetSpec::Auto,
            weights: WeightsSpec::default(),
            dataset: None,
            conditions: Vec::new(),
            k: 1,
            polarity: PolaritySpec::default(),
            keep: Vec::new(),
        }
    }

    /// The request with its instance rewritten in feature declaration order.
    fn normalized(&self, model: &Model, factual: &Instance) -> Json {
        let mut echo = self.clone();
        echo.instance = instance_to_json(model.features(), factual);
        serde_json::to_value(echo).expect("requests serialize")
    }
}

/// How an error should be reported: exit codes 1/2/3 and HTTP 400/422/413.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Infeasible,
    CapExceeded,
}

pub fn classify(e: &CfxError) -> ErrorClass {
    match e {
        CfxError::Infeasible | CfxError::InfeasibleCondition(_) | CfxError::EmptyPolynomialUnsatisfiable => {
            ErrorClass::Infeasible
        }
        CfxError::CapExceeded(_) | CfxError::EnumerationCapExceeded { .. } => ErrorClass::CapExceeded,
        _ => ErrorClass::Validation,
    }
}

/// Solver settings used by every front end; only the time limit varies.
pub fn solver_config(time_limit: Option<Duration>) -> SolverConfig {
    SolverConfig { time_limit, ..ExplainOptions::default().solver }
}

pub fn resolve_weights(explainer: &Explainer, spec: &WeightsSpec, dataset: Option<&Dataset>) -> Result<WeightVector> {
    let registry = explainer.registry();
    let need_data = |scheme: &str| {
        dataset.ok_or_else(|| CfxError::Dataset(format!("the `{scheme}` weight scheme needs a dataset")))
    };
    match spec {
        WeightsSpec::Scheme(WeightScheme::Uniform) => Ok(uniform_weights(registry)),
        WeightsSpec::Scheme(WeightScheme::Mad) => mad_rule_weights(registry, need_data("mad")?),
        WeightsSpec::Scheme(WeightScheme::Std) => std_weights(registry, need_data("std")?),
        WeightsSpec::Explicit(w) => {
            if w.len() != registry.len() {
                return Err(CfxError::Format(format!(
                    "expected {} weights (one per indicator), got {}",
                    registry.len(),
                    w.len()
                )));
            }
            WeightVector::new(w.clone())
        }
    }
}

fn parse_conditions(model: &Model, docs: &[ConditionDoc]) -> Result<Vec<Condition>> {
    docs.iter().map(|d| d.to_condition(model.features())).collect()
}

struct Prepared {
    factual: Instance,
    echo: Json,
    predicted: Class,
}

fn prepare(explainer: &Explainer, request: &ExplainRequest) -> Result<Prepared> {
    let model = explainer.model();
    let factual = instance_from_json(model.features(), &request.instance)?;
    Ok(Prepared { echo: request.normalized(model, &factual), predicted: model.evaluate(&factual), factual })
}

fn file(
    explainer: &Explainer,
    kind: &str,
    prepared: &Prepared,
    best: &CounterfactualSet,
    weights: Vec<f64>,
) -> ExplanationFile {
    let features = explainer.model().features();
    ExplanationFile {
        schema: EXPLANATION_SCHEMA.into(),
        kind: kind.into(),
        model_type: explainer.model().kind_name().into(),
        request: prepared.echo.clone(),
        predicted_class: prepared.predicted.as_u8(),
        target_class: best.target.as_u8(),
        best: ResultDoc::from_set(features, &prepared.factual, best),
        alternatives: Vec::new(),
        robustness: None,
        prime_implicant: None,
        polarity: best.polarity.as_u8(),
        indicators: indicator_names(explainer.registry()),
        weights,
        encoding: EncodingDoc::from(&best.encoding),
    }
}

/// Counterfactual regions, the `k` best when `request.k > 1`.
pub fn counterfactual(
    explainer: &Explainer,
    request: &ExplainRequest,
    dataset: Option<&Dataset>,
    solver: &SolverConfig,
) -> Result<ExplanationFile> {
    let prepared = prepare(explainer, request)?;
    let weights = resolve_weights(explainer, &request.weights, dataset)?;
    let conditions = parse_conditions(explainer.model(), &request.conditions)?;
    let opts = ExplainOptions { polarity: request.polarity.0, solver: solver.clone() };
    let sets = explainer.diverse(&prepared.factual, &weights, request.target.into(), &conditions, request.k, &opts)?;
    let features = explainer.model().features();
    let mut out = file(explainer, "counterfactual", &prepared, &sets[0], weights.as_slice().to_vec());
    out.alternatives = sets[1..].iter().map(|s| ResultDoc::from_set(features, &prepared.factual, s)).collect();
    Ok(out)
}

/// Minimum number of indicator flips that changes the prediction.
pub fn robustness(explainer: &Explainer, request: &ExplainRequest, solver: &SolverConfig) -> Result<ExplanationFile> {
    let prepared = prepare(explainer, request)?;
    let opts = ExplainOptions { polarity: request.polarity.0, solver: solver.clone() };
    let result = explainer.robustness(&prepared.factual, &opts)?;
    let weights = uniform_weights(explainer.registry());
    let mut out = file(explainer, "robustness", &prepared, &result.witness, weights.as_slice().to_vec());
    out.robustness = Some(result.value);
    Ok(out)
}

/// The largest set of features that can change while some point keeps the
/// factual class, with `request.keep` pinned.
pub fn prime_implicants(
    explainer: &Explainer,
    request: &ExplainRequest,
    solver: &SolverConfig,
) -> Result<ExplanationFile> {
    let prepared = prepare(explainer, request)?;
    let features = explainer.model().features();
    let keep = request.keep.iter().map(|name| feature_index(features, name)).collect::<Result<Vec<_>>>()?;
    let opts = ExplainOptions { polarity: request.polarity.0, solver: solver.clone() };
    let result = explainer.prime_implicants(&prepared.factual, &keep, &opts, DEFAULT_SPACE_CAP)?;
    let names = |fs: &[usize]| fs.iter().map(|&f| features[f].name.clone()).collect::<Vec<_>>();
    let mut out = file(explainer, "prime_implicants", &prepared, &result.witness, Vec::new());
    out.prime_implicant = Some(PrimeImplicantDoc {
        implicant: names(&result.implicant),
        changed: names(&result.changed),
        verified: result.verified(),
        counterexample: match &result.verification {
            Verification::Failed { counterexample } => Some(instance_to_json(features, counterexample)),
            _ => None,
        },
    });
    Ok(out)
}

/// The model's class for an instance, with the per-model evidence.
pub fn predict(model: &Model, instance: &Json) -> Result<Json> {
    let x = instance_from_json(model.features(), instance)?;
    let class = model.evaluate(&x).as_u8();
    Ok(match model {
        Model::Tree(_) => json!({ "class": class }),
        Model::Forest(f) => json!({ "class": class, "votes": f.votes(&x), "trees": f.trees.len() }),
        Model::NaiveBayes(nb) => {
            let categories: Vec<usize> = x
                .values()
                .iter()
                .map(|v| match v {
                    crate::models::Value::Category(c) => *c,
                    crate::models::Value::Real(_) => unreachable!("naive Bayes features are categorical"),
                })
                .collect();
            json!({ "class": class, "log_scores": nb.log_scores(&categories) })
        }
    })
}

/// The weight of every indicator under a scheme.
pub fn weights_table(explainer: &Explainer, scheme: WeightScheme, dataset: Option<&Dataset>) -> Result<Json> {
    let w = resolve_weights(explainer, &WeightsSpec::Scheme(scheme), dataset)?;
    let rows: Vec<Json> = indicator_names(explainer.registry())
        .into_iter()
        .zip(w.as_slice())
        .map(|(name, w)| json!({ "indicator": name, "weight": w }))
        .collect();
    Ok(json!({ "scheme": scheme, "weights": rows }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fig1_model, nb_first_feature_model};
    use crate::format::Op;

    fn fig1() -> Explainer {
        Explainer::new(fig1_model()).unwrap()
    }

    fn request(body: &str) -> ExplainRequest {
        serde_json::from_str(body).unwrap()
    }

    #[test]
    fn fig1_counterfactual_file() {
        let out = counterfactual(&fig1(), &request(r#"{"instance":{"X2":30,"X1":5}}"#), None, &solver_config(None))
            .unwrap();
        assert_eq!((out.predicted_class, out.target_class), (1, 0));
        assert_eq!(out.best.objective_exact, "1");
        let x2 = &out.best.conditions[1];
        assert_eq!((x2.feature.as_str(), x2.op, x2.value.clone()), ("X2", Op::Gt, Some(Json::from(50.0))));
        assert_eq!(out.best.changed, ["X2"]);
        assert_eq!(out.request["instance"], json!({"X1": 5.0, "X2": 30.0}));
        assert_eq!(out.request["target"], "auto");
        let bytes = out.to_bytes();
        assert_eq!(ExplanationFile::from_slice(&bytes).unwrap(), out);
    }

    #[test]
    fn requests_round_trip_and_reject_unknown_fields() {
        let r = request(r#"{"instance":{"a":1},"target":0,"weights":[1,2],"k":3,"polarity":"target","keep":["a"]}"#);
        assert_eq!(r.target, TargetSpec::Class(Class::Zero));
        assert_eq!(r.weights, WeightsSpec::Explicit(vec![1.0, 2.0]));
        assert_eq!(r.polarity, PolaritySpec(Polarity::Target));
        let back: ExplainRequest = serde_json::from_value(serde_json::to_value(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<ExplainRequest>(r#"{"instance":{},"colour":1}"#).is_err());
        assert!(serde_json::from_str::<ExplainRequest>(r#"{"instance":{},"target":2}"#).is_err());
        assert_eq!(request(r#"{"instance":{},"weights":"mad"}"#).weights, WeightsSpec::Scheme(WeightScheme::Mad));
    }

    #[test]
    fn contradictory_conditions_are_infeasible() {
        let r = request(
            r#"{"instance":{"X1":5,"X2":30},"conditions":[{"feature":"X1","op":"le","value":10},{"feature":"X2","op":"le","value":50}]}"#,
        );
        let err = counterfactual(&fig1(), &r, None, &solver_config(None)).unwrap_err();
        assert_eq!(classify(&err), ErrorClass::Infeasible);
    }

    #[test]
    fn diverse_alternatives_are_listed() {
        let r = request(r#"{"instance":{"X1":5,"X2":30},"k":2}"#);
        let out = counterfactual(&fig1(), &r, None, &solver_config(None)).unwrap();
        assert_eq!(out.alternatives.len(), 1);
        assert!(out.alternatives[0].objective >= out.best.objective);
    }

    #[test]
    fn weight_schemes_need_data() {
        let err = resolve_weights(&fig1(), &WeightsSpec::Scheme(WeightScheme::Mad), None).unwrap_err();
        assert_eq!(classify(&err), ErrorClass::Validation);
        assert!(resolve_weights(&fig1(), &WeightsSpec::Explicit(vec![1.0]), None).is_err());
    }

    #[test]
    fn prime_implicant_file() {
        let ex = Explainer::new(nb_first_feature_model(3)).unwrap();
        let r = request(r#"{"instance":{"X1":"1","X2":"0","X3":"1"},"keep":["X3"]}"#);
        let out = prime_implicants(&ex, &r, &solver_config(None)).unwrap();
        let pi = out.prime_implicant.unwrap();
        assert_eq!(pi.implicant, ["X1", "X3"]);
        assert_eq!(pi.changed, ["X2"]);
        assert_eq!(pi.verified, Some(true));
    }

    #[test]
    fn predictions_carry_evidence() {
        let p = predict(&fig1_model(), &json!({"X1": 5, "X2": 30})).unwrap();
        assert_eq!(p, json!({"class": 1}));
        let nb = predict(&nb_first_feature_model(2), &json!({"X1": "0", "X2": "1"})).unwrap();
        assert_eq!(nb["class"], 0);
    }
}
