//! Counterfactual explanations for decision trees, random forests and
//! naive Bayes classifiers, computed exactly by compiling the model into a
//! 0/1 integer program.
//!
//! ```
//! use cfx_core::{fixtures, format::Op, Explainer, ExplainOptions, Instance, Target, Value};
//! use cfx_core::weights::uniform_weights;
//!
//! let model = fixtures::fig1_model();
//! let x = Instance::new(model.features(), vec![Value::Real(5.0), Value::Real(30.0)]).unwrap();
//! let explainer = Explainer::new(model).unwrap();
//! let weights = uniform_weights(explainer.registry());
//! let cf = explainer.counterfactual(&x, &weights, Target::Auto, &[], &ExplainOptions::default()).unwrap();
//! assert_eq!(cf.changed_features(), vec![1]);
//! # let _ = Op::Gt;
//! ```

pub mod api;
pub mod encoder;
pub mod error;
pub mod explainer;
pub mod fixtures;
pub mod format;
pub mod models;
pub mod oracle;
pub mod polynomial;
pub mod registry;
pub mod solver;
pub mod synth;
pub mod weights;

pub use encoder::{Bound, Condition, EncodingStats, IlpProblem, Polarity};
pub use error::{CfxError, Result};
pub use explainer::{
    CounterfactualSet, ExplainOptions, Explainer, FeatureCondition, FeatureRegion, PrimeImplicantResult,
    RobustnessResult, Target, Verification,
};
pub use models::{Class, DecisionTree, Feature, Instance, Model, NaiveBayes, Predicate, RandomForest, TreeNode, Value};
pub use registry::IndicatorRegistry;
pub use solver::{BranchOrder, SolveStatus, SolverConfig};
pub use weights::{Dataset, WeightVector};
