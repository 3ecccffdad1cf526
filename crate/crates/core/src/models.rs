//! Classifier representations: decision trees, majority-vote random forests
//! and naive Bayes classifiers over categorical features.
//!
//! All models are binary classifiers. Threshold tests are closed below
//! (`X <= a`); categorical tests are equalities (`X = v`).

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CfxError, Result};

/// Default cap on the number of features an enumerable classifier may have.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Tolerance used when checking that probability tables sum to one.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// A binary class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Zero,
    One,
}

impl Class {
    pub fn flip(self) -> Class {
        match self {
            Class::Zero => Class::One,
            Class::One => Class::Zero,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Class::Zero => 0,
            Class::One => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Class> {
        match v {
            0 => Some(Class::Zero),
            1 => Some(Class::One),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self.as_u8() as usize
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Class {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Class {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Class::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("class must be 0 or 1, got {v}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureKind {
    Continuous,
    Categorical(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn continuous(name: impl Into<String>) -> Self {
        Feature { name: name.into(), kind: FeatureKind::Continuous }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Categorical(categories.into_iter().map(Into::into).collect()),
        }
    }

    /// Binary feature with categories `"0"` and `"1"`.
    pub fn binary(name: impl Into<String>) -> Self {
        Feature::categorical(name, ["0", "1"])
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous)
    }

    pub fn categories(&self) -> &[String] {
        match &self.kind {
            FeatureKind::Continuous => &[],
            FeatureKind::Categorical(c) => c,
        }
    }

    pub fn category_index(&self, category: &str) -> Option<usize> {
        self.categories().iter().position(|c| c == category)
    }
}

/// Check feature declarations: unique names, categorical features with at
/// least two distinct categories.
pub fn validate_features(features: &[Feature]) -> Result<()> {
    let mut seen = HashSet::new();
    for f in features {
        if !seen.insert(f.name.as_str()) {
            return Err(CfxError::BadFeature(format!("duplicate feature name `{}`", f.name)));
        }
        if let FeatureKind::Categorical(cats) = &f.kind {
            if cats.len() < 2 {
                return Err(CfxError::BadFeature(format!("feature `{}` needs at least 2 categories", f.name)));
            }
            let mut seen_cats = HashSet::new();
            for c in cats {
                if !seen_cats.insert(c.as_str()) {
                    return Err(CfxError::BadFeature(format!("duplicate category `{c}` in feature `{}`", f.name)));
                }
            }
        }
    }
    Ok(())
}

pub fn feature_index(features: &[Feature], name: &str) -> Result<usize> {
    features
        .iter()
        .position(|f| f.name == name)
        .ok_or_else(|| CfxError::UnknownFeature(name.to_string()))
}

/// The test performed by a predicate.
#[derive(Clone, Copy, Debug)]
pub enum Test {
    /// `X <= threshold`
    Le(f64),
    /// `X = categories[index]`
    Eq(usize),
}

/// A binary atom over one feature.
#[derive(Clone, Copy, Debug)]
pub struct Predicate {
    pub feature: usize,
    pub test: Test,
}

impl Predicate {
    pub fn le(feature: usize, threshold: f64) -> Self {
        // -0.0 and 0.0 must hash identically
        let threshold = if threshold == 0.0 { 0.0 } else { threshold };
        Predicate { feature, test: Test::Le(threshold) }
    }

    pub fn eq(feature: usize, category: usize) -> Self {
        Predicate { feature, test: Test::Eq(category) }
    }

    pub fn holds(&self, value: &Value) -> bool {
        match (self.test, value) {
            (Test::Le(a), Value::Real(x)) => *x <= a,
            (Test::Eq(c), Value::Category(v)) => *v == c,
            _ => false,
        }
    }

    fn key(&self) -> (usize, u8, u64) {
        match self.test {
            Test::Le(a) => (self.feature, 0, a.to_bits()),
            Test::Eq(c) => (self.feature, 1, c as u64),
        }
    }

    pub fn display(&self, features: &[Feature]) -> String {
        let f = &features[self.feature];
        match self.test {
            Test::Le(a) => format!("{}<={}", f.name, a),
            Test::Eq(c) => format!("{}={}", f.name, f.categories()[c]),
        }
    }
}

impl PartialEq for Predicate {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Predicate {}

impl Hash for Predicate {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for Predicate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Predicate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.feature.cmp(&other.feature).then_with(|| match (self.test, other.test) {
            (Test::Le(a), Test::Le(b)) => a.total_cmp(&b),
            (Test::Eq(a), Test::Eq(b)) => a.cmp(&b),
            (Test::Le(_), Test::Eq(_)) => Ordering::Less,
            (Test::Eq(_), Test::Le(_)) => Ordering::Greater,
        })
    }
}

/// A feature value: real for continuous features, category index otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Category(usize),
}

/// A complete assignment of values to a model's features, in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    values: Vec<Value>,
}

impl Instance {
    /// Build an instance after checking it matches `features`.
    pub fn new(features: &[Feature], values: Vec<Value>) -> Result<Self> {
        if values.len() != features.len() {
            return Err(CfxError::BadInstance(format!(
                "expected {} values, got {}",
                features.len(),
                values.len()
            )));
        }
        for (f, v) in features.iter().zip(&values) {
            match (&f.kind, v) {
                (FeatureKind::Continuous, Value::Real(x)) if x.is_finite() => {}
                (FeatureKind::Continuous, _) => {
                    return Err(CfxError::BadInstance(format!("feature `{}` needs a finite real", f.name)))
                }
                (FeatureKind::Categorical(c), Value::Category(i)) if *i < c.len() => {}
                (FeatureKind::Categorical(_), _) => {
                    return Err(CfxError::BadInstance(format!("feature `{}` needs a valid category", f.name)))
                }
            }
        }
        Ok(Instance { values })
    }

    /// Build from `(name, value)` pairs; categorical values are given by name.
    pub fn from_named<'a>(features: &[Feature], pairs: impl IntoIterator<Item = (&'a str, NamedValue<'a>)>) -> Result<Self> {
        let mut values: Vec<Option<Value>> = vec![None; features.len()];
        for (name, v) in pairs {
            let idx = feature_index(features, name)?;
            let f = &features[idx];
            let value = match v {
                NamedValue::Real(x) => Value::Real(x),
                NamedValue::Category(c) => Value::Category(f.category_index(c).ok_or_else(|| {
                    CfxError::UnknownCategory { feature: f.name.clone(), category: c.to_string() }
                })?),
            };
            values[idx] = Some(value);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| CfxError::BadInstance(format!("missing value for `{}`", features[i].name))))
            .collect::<Result<Vec<_>>>()?;
        Instance::new(features, values)
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn get(&self, feature: usize) -> Value {
        self.values[feature]
    }

    pub fn with_value(&self, feature: usize, value: Value) -> Instance {
        let mut values = self.values.clone();
        values[feature] = value;
        Instance { values }
    }

    pub(crate) fn from_values_unchecked(values: Vec<Value>) -> Self {
        Instance { values }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum NamedValue<'a> {
    Real(f64),
    Category(&'a str),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Split { predicate: Predicate, yes: Box<TreeNode>, no: Box<TreeNode> },
    Leaf(Class),
}

impl TreeNode {
    pub fn split(predicate: Predicate, yes: TreeNode, no: TreeNode) -> Self {
        TreeNode::Split { predicate, yes: Box::new(yes), no: Box::new(no) }
    }

    pub fn leaf(class: u8) -> Self {
        TreeNode::Leaf(Class::from_u8(class).expect("class must be 0 or 1"))
    }

    pub fn evaluate(&self, instance: &Instance) -> Class {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf(c) => return *c,
                TreeNode::Split { predicate, yes, no } => {
                    node = if predicate.holds(&instance.get(predicate.feature)) { yes } else { no };
                }
            }
        }
    }

    pub fn predicates(&self) -> Vec<Predicate> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let TreeNode::Split { predicate, yes, no } = node {
                out.push(*predicate);
                stack.push(no);
                stack.push(yes);
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { yes, no, .. } => 1 + yes.depth().max(no.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Split { yes, no, .. } => yes.leaf_count() + no.leaf_count(),
        }
    }
}

/// One literal along a root-to-leaf path: the predicate and which branch was taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathLiteral {
    pub predicate: Predicate,
    pub polarity: bool,
}

/// Root-to-leaf paths of a tree, one entry per leaf, in depth-first
/// (true branch first) order.
pub fn enumerate_paths(root: &TreeNode) -> Vec<(Vec<PathLiteral>, Class)> {
    fn walk(node: &TreeNode, prefix: &mut Vec<PathLiteral>, out: &mut Vec<(Vec<PathLiteral>, Class)>) {
        match node {
            TreeNode::Leaf(c) => out.push((prefix.clone(), *c)),
            TreeNode::Split { predicate, yes, no } => {
                prefix.push(PathLiteral { predicate: *predicate, polarity: true });
                walk(yes, prefix, out);
                prefix.pop();
                prefix.push(PathLiteral { predicate: *predicate, polarity: false });
                walk(no, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(root, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub features: Vec<Feature>,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn new(features: Vec<Feature>, root: TreeNode) -> Self {
        DecisionTree { features, root }
    }

    pub fn evaluate(&self, instance: &Instance) -> Class {
        self.root.evaluate(instance)
    }
}

/// Majority vote over trees; ties go to class 0.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub features: Vec<Feature>,
    pub trees: Vec<TreeNode>,
}

impl RandomForest {
    pub fn new(features: Vec<Feature>, trees: Vec<TreeNode>) -> Self {
        RandomForest { features, trees }
    }

    pub fn votes(&self, instance: &Instance) -> usize {
        self.trees.iter().filter(|t| t.evaluate(instance) == Class::One).count()
    }

    pub fn evaluate(&self, instance: &Instance) -> Class {
        if 2 * self.votes(instance) > self.trees.len() {
            Class::One
        } else {
            Class::Zero
        }
    }
}

/// Naive Bayes classifier over categorical features.
///
/// `cpt[feature][category] = [P(X=category | 0), P(X=category | 1)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveBayes {
    pub features: Vec<Feature>,
    pub prior: [f64; 2],
    pub cpt: Vec<Vec<[f64; 2]>>,
}

impl NaiveBayes {
    pub fn new(features: Vec<Feature>, prior: [f64; 2], cpt: Vec<Vec<[f64; 2]>>) -> Self {
        NaiveBayes { features, prior, cpt }
    }

    /// Log joint scores `ln P(class) + sum ln P(x_i | class)`.
    pub fn log_scores(&self, categories: &[usize]) -> [f64; 2] {
        let mut scores = [self.prior[0].ln(), self.prior[1].ln()];
        for (table, &v) in self.cpt.iter().zip(categories) {
            scores[0] += table[v][0].ln();
            scores[1] += table[v][1].ln();
        }
        scores
    }

    pub fn classify_categories(&self, categories: &[usize]) -> Class {
        let [s0, s1] = self.log_scores(categories);
        if s1 > s0 {
            Class::One
        } else {
            Class::Zero
        }
    }

    pub fn evaluate(&self, instance: &Instance) -> Class {
        let cats: Vec<usize> = instance
            .values()
            .iter()
            .map(|v| match v {
                Value::Category(c) => *c,
                Value::Real(_) => unreachable!("naive Bayes features are categorical"),
            })
            .collect();
        self.classify_categories(&cats)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Tree(DecisionTree),
    Forest(RandomForest),
    NaiveBayes(NaiveBayes),
}

impl Model {
    pub fn features(&self) -> &[Feature] {
        match self {
            Model::Tree(t) => &t.features,
            Model::Forest(f) => &f.features,
            Model::NaiveBayes(nb) => &nb.features,
        }
    }

    pub fn evaluate(&self, instance: &Instance) -> Class {
        match self {
            Model::Tree(t) => t.evaluate(instance),
            Model::Forest(f) => f.evaluate(instance),
            Model::NaiveBayes(nb) => nb.evaluate(instance),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Tree(_) => "decision_tree",
            Model::Forest(_) => "random_forest",
            Model::NaiveBayes(_) => "naive_bayes",
        }
    }

    pub fn validate(self) -> Result<Model> {
        validate_model(self, DEFAULT_ENUMERATION_CAP)
    }
}

fn validate_tree(root: &TreeNode, features: &[Feature]) -> Result<()> {
    if matches!(root, TreeNode::Leaf(_)) {
        return Err(CfxError::ConstantClassifier);
    }
    for p in root.predicates() {
        let f = features
            .get(p.feature)
            .ok_or_else(|| CfxError::UnknownFeature(format!("#{}", p.feature)))?;
        match (&f.kind, p.test) {
            (FeatureKind::Continuous, Test::Le(a)) if a.is_finite() => {}
            (FeatureKind::Continuous, Test::Le(_)) => {
                return Err(CfxError::BadModel(format!("non-finite threshold on `{}`", f.name)))
            }
            (FeatureKind::Categorical(c), Test::Eq(i)) if i < c.len() => {}
            _ => {
                return Err(CfxError::BadModel(format!(
                    "predicate does not match the kind of feature `{}`",
                    f.name
                )))
            }
        }
    }
    Ok(())
}

fn check_distribution(what: &str, probs: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(CfxError::BadDistribution(format!("{what}: probability {p} is not in [0, 1]")));
        }
        total += p;
    }
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(CfxError::BadDistribution(format!("{what}: sums to {total}")));
    }
    Ok(())
}

/// Check every structural invariant of a model; returns it unchanged on success.
pub fn validate_model(model: Model, enumeration_cap: usize) -> Result<Model> {
    validate_features(model.features())?;
    match &model {
        Model::Tree(t) => validate_tree(&t.root, &t.features)?,
        Model::Forest(f) => {
            if f.trees.is_empty() {
                return Err(CfxError::BadModel("a forest needs at least one tree".into()));
            }
            for t in &f.trees {
                validate_tree(t, &f.features)?;
            }
        }
        Model::NaiveBayes(nb) => {
            if nb.features.len() > enumeration_cap {
                return Err(CfxError::EnumerationCapExceeded {
                    size: nb.features.len() as u128,
                    cap: enumeration_cap as u128,
                });
            }
            if let Some(f) = nb.features.iter().find(|f| f.is_continuous()) {
                return Err(CfxError::BadModel(format!("naive Bayes feature `{}` must be categorical", f.name)));
            }
            check_distribution("class prior", nb.prior)?;
            if nb.cpt.len() != nb.features.len() {
                return Err(CfxError::BadDistribution("one conditional table per feature required".into()));
            }
            for (f, table) in nb.features.iter().zip(&nb.cpt) {
                if table.len() != f.categories().len() {
                    return Err(CfxError::BadDistribution(format!(
                        "table for `{}` must have one row per category",
                        f.name
                    )));
                }
                for class in 0..2 {
                    check_distribution(
                        &format!("P({} | class {class})", f.name),
                        table.iter().map(|row| row[class]),
                    )?;
                }
            }
        }
    }
    Ok(model)
}
