//! The explanation products: counterfactual regions, diverse
//! counterfactuals, robustness and (conditional) prime implicants.

use std::sync::Arc;

use log::warn;
use num_rational::Ratio;

use crate::encoder::{
    encode_consistency, encode_counterfactual, encode_generation, encode_onehot, encoding_stats,
    keep_feature, Bound, Condition, EncodingStats, Family, IlpProblem, LinExpr, ModelPolynomials, Objective, Polarity,
    Relation, Sense, VarKind,
};
use crate::error::{CfxError, Result};
use crate::models::{Class, Instance, Model, Value};
use crate::oracle::{check_universal, DEFAULT_SPACE_CAP};
use crate::registry::{FeatureGroup, IndicatorRegistry};
use crate::solver::{enumerate_topk, solve, BranchOrder, SolveStats, SolveStatus, SolverConfig};
use crate::weights::{uniform_weights, WeightVector};

/// Which class the counterfactual must reach.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Target {
    /// The complement of the model's prediction on the factual.
    #[default]
    Auto,
    Class(Class),
}

/// What the counterfactual says about one feature.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureRegion {
    /// The factual value already satisfies the region.
    Unchanged,
    /// `lo < x <= hi` style interval; a missing bound is unbounded.
    Interval { lo: Option<Bound>, hi: Option<Bound> },
    Category(usize),
}

impl FeatureRegion {
    /// Whether `value` lies in the region; `Unchanged` admits only the factual.
    pub fn contains(&self, value: Value, factual: Value) -> bool {
        match (self, value) {
            (FeatureRegion::Unchanged, v) => v == factual,
            (FeatureRegion::Interval { lo, hi }, Value::Real(x)) => interval_contains(*lo, *hi, x),
            (FeatureRegion::Category(c), Value::Category(v)) => *c == v,
            _ => false,
        }
    }
}

fn interval_contains(lo: Option<Bound>, hi: Option<Bound>, x: f64) -> bool {
    lo.is_none_or(|b| if b.inclusive { x >= b.value } else { x > b.value })
        && hi.is_none_or(|b| if b.inclusive { x <= b.value } else { x < b.value })
}

/// The tighter of two lower bounds.
fn max_lo(a: Option<Bound>, b: Option<Bound>) -> Option<Bound> {
    match (a, b) {
        (Some(x), Some(y)) if x.value == y.value => Some(Bound { value: x.value, inclusive: x.inclusive && y.inclusive }),
        (Some(x), Some(y)) => Some(if x.value > y.value { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn min_hi(a: Option<Bound>, b: Option<Bound>) -> Option<Bound> {
    match (a, b) {
        (Some(x), Some(y)) if x.value == y.value => Some(Bound { value: x.value, inclusive: x.inclusive && y.inclusive }),
        (Some(x), Some(y)) => Some(if x.value < y.value { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCondition {
    pub feature: usize,
    pub region: FeatureRegion,
}

impl FeatureCondition {
    pub fn changed(&self) -> bool {
        self.region != FeatureRegion::Unchanged
    }
}

/// A region of feature space, every point of which the model assigns to
/// `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualSet {
    pub target: Class,
    pub objective: Ratio<i64>,
    pub conditions: Vec<FeatureCondition>,
    /// Registry indicator values of the solution.
    pub assignment: Vec<bool>,
    pub polarity: Class,
    pub solver: SolveStats,
    pub encoding: EncodingStats,
}

impl CounterfactualSet {
    pub fn changed_features(&self) -> Vec<usize> {
        self.conditions.iter().filter(|c| c.changed()).map(|c| c.feature).collect()
    }

    /// Whether `x` lies in the region described relative to `factual`.
    pub fn contains(&self, x: &Instance, factual: &Instance) -> bool {
        self.conditions.iter().all(|c| c.region.contains(x.get(c.feature), factual.get(c.feature)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessResult {
    /// Minimum number of indicator flips reaching the other class.
    pub value: u64,
    pub witness: CounterfactualSet,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verification {
    Verified,
    /// A point agreeing with the factual on `Z` but classified differently.
    Failed { counterexample: Instance },
    /// The enumeration would exceed the cap.
    Skipped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimeImplicantResult {
    /// `Z`: features whose factual values are kept.
    pub implicant: Vec<usize>,
    pub changed: Vec<usize>,
    pub verification: Verification,
    /// The maximizing region, for inspection.
    pub witness: CounterfactualSet,
}

impl PrimeImplicantResult {
    pub fn verified(&self) -> Option<bool> {
        match self.verification {
            Verification::Verified => Some(true),
            Verification::Failed { .. } => Some(false),
            Verification::Skipped => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplainOptions {
    pub polarity: Polarity,
    pub solver: SolverConfig,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            polarity: Polarity::Auto,
            solver: SolverConfig { branching: BranchOrder::Auto, ..SolverConfig::default() },
        }
    }
}

pub fn resolve_target(model: &Model, factual: &Instance, target: Target) -> Result<Class> {
    let predicted = model.evaluate(factual);
    match target {
        Target::Auto => Ok(predicted.flip()),
        Target::Class(c) if c == predicted => Err(CfxError::AlreadyTargetClass(c.as_u8())),
        Target::Class(c) => Ok(c),
    }
}

/// Turn an indicator assignment into per-feature regions. Thresholds cut the
/// line into cells `(-inf, a_1], (a_1, a_2], ..., (a_q, inf)`; interval
/// conditions narrow the selected cell further. Features the model never
/// tests are unchanged unless a condition excludes the factual value.
pub fn decode_solution(
    registry: &IndicatorRegistry,
    factual: &Instance,
    assignment: &[bool],
    conditions: &[Condition],
) -> Result<Vec<FeatureCondition>> {
    let features = registry.features();
    let mut out = Vec::with_capacity(features.len());
    for (f, feature) in features.iter().enumerate() {
        let conds: Vec<&Condition> = conditions.iter().filter(|c| c.feature() == f).collect();
        let region = if feature.is_continuous() {
            let (mut lo, mut hi) = (None, None);
            if let Some(group) = registry.group(f) {
                let cell = registry.cell_of_assignment(group, assignment).ok_or(CfxError::InconsistentAssignment)?;
                let FeatureGroup::Thresholds(t) = group else { unreachable!() };
                let (l, h) = t.cell_bounds(cell);
                lo = l.map(Bound::exclusive);
                hi = h.map(Bound::inclusive);
            }
            for c in &conds {
                if let Condition::Interval { lo: cl, hi: ch, .. } = c {
                    lo = max_lo(lo, *cl);
                    hi = min_hi(hi, *ch);
                }
            }
            let Value::Real(x) = factual.get(f) else { unreachable!("validated instance") };
            if interval_contains(lo, hi, x) {
                FeatureRegion::Unchanged
            } else {
                FeatureRegion::Interval { lo, hi }
            }
        } else {
            let Value::Category(fc) = factual.get(f) else { unreachable!("validated instance") };
            let chosen = match registry.group(f) {
                Some(group) => registry.cell_of_assignment(group, assignment).ok_or(CfxError::InconsistentAssignment)?,
                None if conds.iter().all(|c| c.admits(Value::Category(fc))) => fc,
                None => (0..feature.categories().len())
                    .find(|&c| conds.iter().all(|cond| cond.admits(Value::Category(c))))
                    .ok_or_else(|| CfxError::InfeasibleCondition(format!("no category of `{}` is allowed", feature.name)))?,
            };
            if chosen == fc {
                FeatureRegion::Unchanged
            } else {
                FeatureRegion::Category(chosen)
            }
        };
        out.push(FeatureCondition { feature: f, region });
    }
    Ok(out)
}

/// A model compiled once for repeated queries.
#[derive(Clone, Debug)]
pub struct Explainer {
    model: Model,
    polys: ModelPolynomials,
}

impl Explainer {
    pub fn new(model: Model) -> Result<Self> {
        let polys = ModelPolynomials::build(&model)?;
        Ok(Explainer { model, polys })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn registry(&self) -> &Arc<IndicatorRegistry> {
        &self.polys.registry
    }

    pub fn polynomials(&self) -> &ModelPolynomials {
        &self.polys
    }

    /// Encode a counterfactual query without solving it.
    pub fn encode(
        &self,
        factual: &Instance,
        weights: &WeightVector,
        target: Target,
        conditions: &[Condition],
        polarity: Polarity,
    ) -> Result<IlpProblem> {
        let target = resolve_target(&self.model, factual, target)?;
        Ok(encode_counterfactual(&self.polys, factual, weights, target, polarity, conditions)?.problem)
    }

    pub fn counterfactual(
        &self,
        factual: &Instance,
        weights: &WeightVector,
        target: Target,
        conditions: &[Condition],
        opts: &ExplainOptions,
    ) -> Result<CounterfactualSet> {
        let mut sets = self.diverse(factual, weights, target, conditions, 1, opts)?;
        Ok(sets.remove(0))
    }

    /// The `k` best distinct regions satisfying `conditions`.
    pub fn diverse(
        &self,
        factual: &Instance,
        weights: &WeightVector,
        target: Target,
        conditions: &[Condition],
        k: usize,
        opts: &ExplainOptions,
    ) -> Result<Vec<CounterfactualSet>> {
        if k == 0 {
            return Err(CfxError::BadInstance("k must be at least 1".into()));
        }
        let target = resolve_target(&self.model, factual, target)?;
        let query = encode_counterfactual(&self.polys, factual, weights, target, opts.polarity, conditions)?;
        let stats = encoding_stats(&query.problem);
        let (solutions, status) = enumerate_topk(&query.problem, k, &opts.solver);
        match status {
            SolveStatus::Infeasible if solutions.is_empty() => return Err(CfxError::Infeasible),
            SolveStatus::CapExceeded if solutions.is_empty() => {
                return Err(CfxError::CapExceeded("solver node or time limit reached".into()))
            }
            _ => {}
        }
        let n = self.registry().len();
        solutions
            .into_iter()
            .map(|sol| {
                let objective = sol.objective_value();
                let assignment = sol.assignment.expect("solutions carry assignments")[..n].to_vec();
                Ok(CounterfactualSet {
                    target,
                    objective,
                    conditions: decode_solution(self.registry(), factual, &assignment, conditions)?,
                    assignment,
                    polarity: query.polarity,
                    solver: sol.stats,
                    encoding: stats.clone(),
                })
            })
            .collect()
    }

    /// Minimum number of indicator flips that changes the prediction.
    /// Moving a categorical feature to another category flips two one-hot
    /// indicators and so counts 2.
    pub fn robustness(&self, factual: &Instance, opts: &ExplainOptions) -> Result<RobustnessResult> {
        let weights = uniform_weights(self.registry());
        let witness = self.counterfactual(factual, &weights, Target::Auto, &[], opts)?;
        let value = *witness.objective.numer() as u64;
        debug_assert_eq!(*witness.objective.denom(), 1);
        Ok(RobustnessResult { value, witness })
    }

    /// Keep as few features as possible while forcing the factual's class:
    /// maximize the number of changed features. Features in `keep` have
    /// every indicator fixed to its factual value. The resulting `Z` is then
    /// checked for the universal property by enumeration, up to `verify_cap`
    /// points.
    pub fn prime_implicants(
        &self,
        factual: &Instance,
        keep: &[usize],
        opts: &ExplainOptions,
        verify_cap: u128,
    ) -> Result<PrimeImplicantResult> {
        let registry = self.registry().clone();
        let n_features = registry.features().len();
        if let Some(&bad) = keep.iter().find(|&&f| f >= n_features) {
            return Err(CfxError::UnknownFeature(format!("#{bad}")));
        }
        let class = self.model.evaluate(factual);
        let polarity = self.polys.choose(opts.polarity, class);
        let mut problem = IlpProblem::for_registry(&registry, Sense::Maximize);
        encode_generation(&mut problem, &self.polys, class, polarity)?;
        encode_consistency(&mut problem, &registry);
        encode_onehot(&mut problem, &registry);
        let bits = registry.indicators(factual);
        for (var, &bit) in bits.iter().enumerate() {
            problem.set_hint(var, bit);
        }
        let mut objective = Vec::new();
        for group in registry.groups() {
            let f = group.feature();
            let c = problem.add_variable(VarKind::FeatureChange { feature: f }, format!("c[{}]", registry.features()[f].name));
            problem.set_hint(c, true);
            // c_f <= number of indicators of f that differ from the factual
            let mut e = LinExpr::new();
            e.add_var(c, 1);
            for &v in group.vars() {
                if bits[v] {
                    e.add_constant(-1).add_var(v, 1);
                } else {
                    e.add_var(v, -1);
                }
            }
            problem.add_constraint(e, Relation::Le, 0, Family::FeatureChange);
            objective.push((c, 1));
        }
        problem.set_objective(Objective { coeffs: objective, constant: 0, denominator: 1 }, Sense::Maximize);
        for &f in keep {
            keep_feature(&mut problem, &registry, factual, f)?;
        }
        let stats = encoding_stats(&problem);
        let (assignment, objective, solver) = solve(&problem, &opts.solver).into_optimal()?;
        let assignment = assignment[..registry.len()].to_vec();
        let conditions = decode_solution(&registry, factual, &assignment, &[])?;

        // features the model never tests can always change
        let implicant: Vec<usize> = (0..n_features)
            .filter(|&f| registry.group(f).is_some_and(|g| g.vars().iter().all(|&v| assignment[v] == bits[v])))
            .collect();
        let changed: Vec<usize> = (0..n_features).filter(|f| !implicant.contains(f)).collect();
        let verification = match check_universal(&self.model, &registry, factual, &implicant, verify_cap) {
            Ok(None) => Verification::Verified,
            Ok(Some(counterexample)) => Verification::Failed { counterexample },
            Err(CfxError::EnumerationCapExceeded { size, cap }) => {
                warn!("prime implicant verification skipped: {size} points exceed the cap of {cap}");
                Verification::Skipped
            }
            Err(e) => return Err(e),
        };
        let witness = CounterfactualSet {
            target: class,
            objective,
            conditions,
            assignment,
            polarity,
            solver,
            encoding: stats,
        };
        Ok(PrimeImplicantResult { implicant, changed, verification, witness })
    }
}

/// One-shot counterfactual.
pub fn counterfactual(
    model: &Model,
    factual: &Instance,
    weights: &WeightVector,
    target: Target,
    conditions: &[Condition],
) -> Result<CounterfactualSet> {
    Explainer::new(model.clone())?.counterfactual(factual, weights, target, conditions, &ExplainOptions::default())
}

pub fn diverse_counterfactual(
    model: &Model,
    factual: &Instance,
    weights: &WeightVector,
    conditions: &[Condition],
    k: usize,
) -> Result<Vec<CounterfactualSet>> {
    Explainer::new(model.clone())?.diverse(factual, weights, Target::Auto, conditions, k, &ExplainOptions::default())
}

pub fn robustness(model: &Model, factual: &Instance) -> Result<RobustnessResult> {
    Explainer::new(model.clone())?.robustness(factual, &ExplainOptions::default())
}

pub fn prime_implicants(model: &Model, factual: &Instance, keep: &[usize]) -> Result<PrimeImplicantResult> {
    Explainer::new(model.clone())?.prime_implicants(factual, keep, &ExplainOptions::default(), DEFAULT_SPACE_CAP)
}
