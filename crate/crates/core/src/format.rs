//! JSON formats: model artifacts, instances, conditions and explanation
//! files. Objects keep feature declaration order so output is
//! byte-for-byte reproducible.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::encoder::{Bound, Condition, EncodingStats};
use crate::error::{CfxError, Result};
use crate::explainer::{CounterfactualSet, FeatureRegion};
use crate::models::{
    feature_index, validate_model, Class, DecisionTree, Feature, FeatureKind, Instance, Model, NaiveBayes, Predicate,
    RandomForest, Test, TreeNode, Value, DEFAULT_ENUMERATION_CAP,
};
use crate::registry::IndicatorRegistry;

pub const MODEL_SCHEMA: &str = "cfx-model/1";
pub const EXPLANATION_SCHEMA: &str = "cfx-explanation/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureDoc {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, rename = "true", skip_serializing_if = "Option::is_none")]
    yes: Option<Box<NodeDoc>>,
    #[serde(default, rename = "false", skip_serializing_if = "Option::is_none")]
    no: Option<Box<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NbDoc {
    prior: [f64; 2],
    cpt: IndexMap<String, IndexMap<String, [f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactDoc {
    schema: String,
    #[serde(rename = "type")]
    kind: String,
    features: Vec<FeatureDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree: Option<NodeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trees: Option<Vec<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nb: Option<NbDoc>,
}

fn format_err(e: serde_json::Error) -> CfxError {
    CfxError::Format(e.to_string())
}

fn feature_from_doc(doc: &FeatureDoc) -> Result<Feature> {
    match (doc.kind.as_str(), &doc.categories) {
        ("continuous", None) => Ok(Feature::continuous(&doc.name)),
        ("continuous", Some(_)) => Err(CfxError::BadFeature(format!("continuous feature `{}` lists categories", doc.name))),
        ("categorical", Some(c)) => Ok(Feature::categorical(&doc.name, c.iter().cloned())),
        ("categorical", None) => Err(CfxError::BadFeature(format!("categorical feature `{}` needs categories", doc.name))),
        ("binary", None) => Ok(Feature::binary(&doc.name)),
        (other, _) => Err(CfxError::BadFeature(format!("unknown feature kind `{other}` for `{}`", doc.name))),
    }
}

fn feature_to_doc(f: &Feature) -> FeatureDoc {
    match &f.kind {
        FeatureKind::Continuous => FeatureDoc { name: f.name.clone(), kind: "continuous".into(), categories: None },
        FeatureKind::Categorical(c) => {
            FeatureDoc { name: f.name.clone(), kind: "categorical".into(), categories: Some(c.clone()) }
        }
    }
}

fn node_from_doc(doc: &NodeDoc, features: &[Feature]) -> Result<TreeNode> {
    match doc {
        NodeDoc { class: Some(c), feature: None, threshold: None, category: None, yes: None, no: None } => {
            let class = Class::from_u8(*c).ok_or_else(|| CfxError::BadModel(format!("leaf class must be 0 or 1, got {c}")))?;
            Ok(TreeNode::Leaf(class))
        }
        NodeDoc { class: None, feature: Some(name), threshold, category, yes: Some(yes), no: Some(no) } => {
            let f = feature_index(features, name)?;
            let test = match (threshold, category) {
                (Some(a), None) => Test::Le(*a),
                (None, Some(c)) => Test::Eq(features[f].category_index(c).ok_or_else(|| CfxError::UnknownCategory {
                    feature: name.clone(),
                    category: c.clone(),
                })?),
                _ => {
                    return Err(CfxError::BadModel(format!(
                        "split on `{name}` needs exactly one of `threshold` or `category`"
                    )))
                }
            };
            Ok(TreeNode::split(
                Predicate { feature: f, test },
                node_from_doc(yes, features)?,
                node_from_doc(no, features)?,
            ))
        }
        _ => Err(CfxError::BadModel(
            "a node is either {\"class\"} or {\"feature\", \"threshold\"|\"category\", \"true\", \"false\"}".into(),
        )),
    }
}

fn node_to_doc(node: &TreeNode, features: &[Feature]) -> NodeDoc {
    match node {
        TreeNode::Leaf(c) => NodeDoc {
            feature: None,
            threshold: None,
            category: None,
            yes: None,
            no: None,
            class: Some(c.as_u8()),
        },
        TreeNode::Split { predicate, yes, no } => {
            let f = &features[predicate.feature];
            let (threshold, category) = match predicate.test {
                Test::Le(a) => (Some(a), None),
                Test::Eq(c) => (None, Some(f.categories()[c].clone())),
            };
            NodeDoc {
                feature: Some(f.name.clone()),
                threshold,
                category,
                yes: Some(Box::new(node_to_doc(yes, features))),
                no: Some(Box::new(node_to_doc(no, features))),
                class: None,
            }
        }
    }
}

fn nb_from_doc(doc: &NbDoc, features: Vec<Feature>) -> Result<NaiveBayes> {
    if let Some(name) = doc.cpt.keys().find(|k| !features.iter().any(|f| &f.name == *k)) {
        return Err(CfxError::UnknownFeature(name.clone()));
    }
    let mut cpt = Vec::with_capacity(features.len());
    for f in &features {
        let table = doc
            .cpt
            .get(&f.name)
            .ok_or_else(|| CfxError::BadDistribution(format!("no conditional table for `{}`", f.name)))?;
        if let Some(c) = table.keys().find(|c| f.category_index(c).is_none()) {
            return Err(CfxError::UnknownCategory { feature: f.name.clone(), category: c.clone() });
        }
        let rows = f
            .categories()
            .iter()
            .map(|c| {
                table.get(c).copied().ok_or_else(|| {
                    CfxError::BadDistribution(format!("no probabilities for `{}` = `{c}`", f.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cpt.push(rows);
    }
    Ok(NaiveBayes::new(features, doc.prior, cpt))
}

/// Parse and validate a model artifact.
pub fn parse_model(json: &str) -> Result<Model> {
    let doc: ArtifactDoc = serde_json::from_str(json).map_err(format_err)?;
    if doc.schema != MODEL_SCHEMA {
        return Err(CfxError::Format(format!("unsupported schema `{}`, expected `{MODEL_SCHEMA}`", doc.schema)));
    }
    let features = doc.features.iter().map(feature_from_doc).collect::<Result<Vec<_>>>()?;
    crate::models::validate_features(&features)?;
    let body = (doc.tree.as_ref(), doc.trees.as_ref(), doc.nb.as_ref());
    let model = match (doc.kind.as_str(), body) {
        ("decision_tree", (Some(t), None, None)) => {
            let root = node_from_doc(t, &features)?;
            Model::Tree(DecisionTree::new(features, root))
        }
        ("random_forest", (None, Some(ts), None)) => {
            let trees = ts.iter().map(|t| node_from_doc(t, &features)).collect::<Result<Vec<_>>>()?;
            Model::Forest(RandomForest::new(features, trees))
        }
        ("naive_bayes", (None, None, Some(nb))) => Model::NaiveBayes(nb_from_doc(nb, features)?),
        ("decision_tree", _) => return Err(CfxError::Format("decision_tree needs exactly a `tree` field".into())),
        ("random_forest", _) => return Err(CfxError::Format("random_forest needs exactly a `trees` field".into())),
        ("naive_bayes", _) => return Err(CfxError::Format("naive_bayes needs exactly an `nb` field".into())),
        (other, _) => return Err(CfxError::Format(format!("unknown model type `{other}`"))),
    };
    validate_model(model, DEFAULT_ENUMERATION_CAP)
}

pub fn model_to_json(model: &Model) -> String {
    let features = model.features();
    let mut doc = ArtifactDoc {
        schema: MODEL_SCHEMA.into(),
        kind: model.kind_name().into(),
        features: features.iter().map(feature_to_doc).collect(),
        tree: None,
        trees: None,
        nb: None,
    };
    match model {
        Model::Tree(t) => doc.tree = Some(node_to_doc(&t.root, features)),
        Model::Forest(f) => doc.trees = Some(f.trees.iter().map(|t| node_to_doc(t, features)).collect()),
        Model::NaiveBayes(nb) => {
            let cpt = features
                .iter()
                .zip(&nb.cpt)
                .map(|(f, rows)| (f.name.clone(), f.categories().iter().cloned().zip(rows.iter().copied()).collect()))
                .collect();
            doc.nb = Some(NbDoc { prior: nb.prior, cpt });
        }
    }
    serde_json::to_string_pretty(&doc).expect("artifact serializes") + "\n"
}

fn category_from_json(f: &Feature, v: &Json) -> Result<usize> {
    let name = match v {
        Json::String(s) => s.clone(),
        Json::Number(n) => n.to_string(),
        Json::Bool(b) => b.to_string(),
        _ => return Err(CfxError::BadInstance(format!("`{}` needs a category name", f.name))),
    };
    f.category_index(&name)
        .ok_or_else(|| CfxError::UnknownCategory { feature: f.name.clone(), category: name })
}

/// A feature value from JSON: a number for continuous features, a category
/// name for categorical ones (numbers and booleans are matched by their text).
pub fn value_from_json(f: &Feature, v: &Json) -> Result<Value> {
    if f.is_continuous() {
        v.as_f64()
            .filter(|x| x.is_finite())
            .map(Value::Real)
            .ok_or_else(|| CfxError::BadInstance(format!("`{}` needs a finite number", f.name)))
    } else {
        category_from_json(f, v).map(Value::Category)
    }
}

pub fn value_to_json(f: &Feature, v: Value) -> Json {
    match v {
        Value::Real(x) => Json::from(x),
        Value::Category(c) => Json::from(f.categories()[c].clone()),
    }
}

/// Parse an instance given as `{"feature": value, ...}`.
pub fn instance_from_json(features: &[Feature], json: &Json) -> Result<Instance> {
    let obj = json
        .as_object()
        .ok_or_else(|| CfxError::BadInstance("an instance is a JSON object keyed by feature name".into()))?;
    let mut values: Vec<Option<Value>> = vec![None; features.len()];
    for (name, v) in obj {
        let idx = feature_index(features, name)?;
        values[idx] = Some(value_from_json(&features[idx], v)?);
    }
    let values = values
        .into_iter()
        .zip(features)
        .map(|(v, f)| v.ok_or_else(|| CfxError::BadInstance(format!("missing value for `{}`", f.name))))
        .collect::<Result<Vec<_>>>()?;
    Instance::new(features, values)
}

/// The instance as a JSON object in feature declaration order.
pub fn instance_to_json(features: &[Feature], instance: &Instance) -> Json {
    Json::Object(features.iter().zip(instance.values()).map(|(f, &v)| (f.name.clone(), value_to_json(f, v))).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Le,
    Lt,
    Ge,
    Gt,
    InInterval,
    Eq,
    Ne,
    Unchanged,
}

/// One feature condition, used both for requested diversity conditions and
/// for the regions of a result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionDoc {
    pub feature: String,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_inclusive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi_inclusive: Option<bool>,
}

impl ConditionDoc {
    fn new(feature: &str, op: Op) -> Self {
        ConditionDoc {
            feature: feature.to_string(),
            op,
            value: None,
            lo: None,
            hi: None,
            lo_inclusive: None,
            hi_inclusive: None,
        }
    }

    fn with_value(mut self, v: Json) -> Self {
        self.value = Some(v);
        self
    }

    /// The encoder condition this document requests. `in_interval` bounds
    /// default to inclusive.
    pub fn to_condition(&self, features: &[Feature]) -> Result<Condition> {
        let idx = feature_index(features, &self.feature)?;
        let f = &features[idx];
        let number = || -> Result<f64> {
            self.value
                .as_ref()
                .and_then(Json::as_f64)
                .filter(|x| x.is_finite())
                .ok_or_else(|| CfxError::BadCondition(format!("`{}` condition needs a numeric value", f.name)))
        };
        let interval = |lo, hi| Condition::Interval { feature: idx, lo, hi };
        let cond = match self.op {
            Op::Le => interval(None, Some(Bound::inclusive(number()?))),
            Op::Lt => interval(None, Some(Bound::exclusive(number()?))),
            Op::Ge => interval(Some(Bound::inclusive(number()?)), None),
            Op::Gt => interval(Some(Bound::exclusive(number()?)), None),
            Op::InInterval => {
                let bound = |v: Option<f64>, inclusive: Option<bool>| {
                    v.map(|value| Bound { value, inclusive: inclusive.unwrap_or(true) })
                };
                interval(bound(self.lo, self.lo_inclusive), bound(self.hi, self.hi_inclusive))
            }
            Op::Eq | Op::Ne if f.is_continuous() => {
                let x = number()?;
                if self.op == Op::Ne {
                    return Err(CfxError::BadCondition(format!(
                        "`ne` is only supported on categorical features, not `{}`",
                        f.name
                    )));
                }
                Condition::point(idx, x)
            }
            Op::Eq | Op::Ne => {
                let v = self
                    .value
                    .as_ref()
                    .ok_or_else(|| CfxError::BadCondition(format!("`{}` condition needs a value", f.name)))?;
                let category = category_from_json(f, v)?;
                if self.op == Op::Eq {
                    Condition::Equals { feature: idx, category }
                } else {
                    Condition::NotEquals { feature: idx, category }
                }
            }
            Op::Unchanged => {
                return Err(CfxError::BadCondition(
                    "`unchanged` describes results; use `keep` or `eq` to pin a feature".into(),
                ))
            }
        };
        cond.validate(features)?;
        Ok(cond)
    }

    /// Describe a decoded region of `feature`.
    pub fn from_region(feature: &Feature, region: &FeatureRegion, factual: Value) -> Self {
        let name = feature.name.as_str();
        match region {
            FeatureRegion::Unchanged => ConditionDoc::new(name, Op::Unchanged).with_value(value_to_json(feature, factual)),
            FeatureRegion::Category(c) => {
                ConditionDoc::new(name, Op::Eq).with_value(value_to_json(feature, Value::Category(*c)))
            }
            FeatureRegion::Interval { lo: None, hi: Some(h) } => {
                ConditionDoc::new(name, if h.inclusive { Op::Le } else { Op::Lt }).with_value(h.value.into())
            }
            FeatureRegion::Interval { lo: Some(l), hi: None } => {
                ConditionDoc::new(name, if l.inclusive { Op::Ge } else { Op::Gt }).with_value(l.value.into())
            }
            FeatureRegion::Interval { lo: Some(l), hi: Some(h) } => ConditionDoc {
                lo: Some(l.value),
                hi: Some(h.value),
                lo_inclusive: Some(l.inclusive),
                hi_inclusive: Some(h.inclusive),
                ..ConditionDoc::new(name, Op::InInterval)
            },
            FeatureRegion::Interval { lo: None, hi: None } => {
                ConditionDoc::new(name, Op::Unchanged).with_value(value_to_json(feature, factual))
            }
        }
    }
}

/// Parse `feature=value` (equality, or a point for continuous features) or
/// `feature:lo..hi` (closed interval; either end may be empty).
pub fn parse_fix(spec: &str) -> Result<ConditionDoc> {
    let bad = || CfxError::BadCondition(format!("cannot parse condition `{spec}`; use feature=value or feature:lo..hi"));
    if let Some((name, range)) = spec.split_once(':') {
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let parse = |s: &str| -> Result<Option<f64>> {
            let s = s.trim();
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| bad())
            }
        };
        let (lo, hi) = (parse(lo)?, parse(hi)?);
        if lo.is_none() && hi.is_none() {
            return Err(bad());
        }
        Ok(ConditionDoc {
            lo,
            hi,
            lo_inclusive: lo.map(|_| true),
            hi_inclusive: hi.map(|_| true),
            ..ConditionDoc::new(name.trim(), Op::InInterval)
        })
    } else if let Some((name, value)) = spec.split_once('=') {
        let value = value.trim();
        let json = value
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Json::from)
            .unwrap_or_else(|| Json::from(value.to_string()));
        Ok(ConditionDoc::new(name.trim(), Op::Eq).with_value(json))
    } else {
        Err(bad())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverDoc {
    pub nodes: u64,
    pub incumbents: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingDoc {
    pub variables: usize,
    pub indicator_vars: usize,
    pub auxiliary_vars: usize,
    pub constraints: usize,
    pub by_family: IndexMap<String, usize>,
    pub fixed: usize,
}

impl From<&EncodingStats> for EncodingDoc {
    fn from(s: &EncodingStats) -> Self {
        EncodingDoc {
            variables: s.variables,
            indicator_vars: s.indicator_vars,
            auxiliary_vars: s.auxiliary_vars,
            constraints: s.constraints,
            by_family: s.by_family.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            fixed: s.fixed,
        }
    }
}

/// One region with its cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub objective: f64,
    /// The exact rational objective, `"p"` or `"p/q"`.
    pub objective_exact: String,
    pub conditions: Vec<ConditionDoc>,
    pub changed: Vec<String>,
    /// Registry indicator values, in the order of `indicators`.
    pub assignment: Vec<u8>,
    pub solver: SolverDoc,
}

impl ResultDoc {
    pub fn from_set(features: &[Feature], factual: &Instance, set: &CounterfactualSet) -> Self {
        let objective = set.objective;
        let objective_exact = if *objective.denom() == 1 {
            objective.numer().to_string()
        } else {
            format!("{}/{}", objective.numer(), objective.denom())
        };
        ResultDoc {
            objective: *objective.numer() as f64 / *objective.denom() as f64,
            objective_exact,
            conditions: set
                .conditions
                .iter()
                .map(|c| ConditionDoc::from_region(&features[c.feature], &c.region, factual.get(c.feature)))
                .collect(),
            changed: set.changed_features().into_iter().map(|f| features[f].name.clone()).collect(),
            assignment: set.assignment.iter().map(|&b| b as u8).collect(),
            solver: SolverDoc { nodes: set.solver.nodes, incumbents: set.solver.incumbents },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimeImplicantDoc {
    /// Features whose factual values are kept.
    pub implicant: Vec<String>,
    pub changed: Vec<String>,
    /// `null` when the check was skipped for size.
    pub verified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Json>,
}

/// The full answer to one explanation request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationFile {
    pub schema: String,
    pub kind: String,
    pub model_type: String,
    pub request: Json,
    pub predicted_class: u8,
    pub target_class: u8,
    #[serde(flatten)]
    pub best: ResultDoc,
    /// Further regions, in nondecreasing objective order, when `k > 1`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<ResultDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prime_implicant: Option<PrimeImplicantDoc>,
    /// Which class's polynomials drove the encoding.
    pub polarity: u8,
    pub indicators: Vec<String>,
    pub weights: Vec<f64>,
    pub encoding: EncodingDoc,
}

impl ExplanationFile {
    /// Pretty JSON with a trailing newline; equal files give equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("explanation serializes");
        out.push(b'\n');
        out
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(format_err)
    }
}

/// Human-readable names of the registry indicators, in variable order.
pub fn indicator_names(registry: &IndicatorRegistry) -> Vec<String> {
    (0..registry.len()).map(|i| registry.describe(i)).collect()
}
