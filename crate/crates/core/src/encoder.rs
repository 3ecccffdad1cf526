//! Compilation of decision polynomials, threshold consistency, one-hot
//! structure, objectives and user conditions into a 0/1 integer program.
//!
//! Every coefficient and right-hand side is an exact integer. A negated
//! literal `1 - x` is folded into the constraint as `-x` with its constant
//! moved to the right-hand side; no complement variables are introduced.
//!
//! Variable layout: the first `registry.len()` variables are the registry
//! indicators (same ids), followed by the auxiliary variables each encoding
//! step introduces.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use num_rational::Ratio;

use crate::error::{CfxError, Result};
use crate::models::{Class, Feature, Instance, Model, Value};
use crate::polynomial::{dp_from_tree_in, enumerate_dp_in, reduce_dp, DecisionPolynomial, Literal, DEFAULT_STATE_CAP};
use crate::registry::{FeatureGroup, IndicatorRegistry};
use crate::weights::WeightVector;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarKind {
    /// `1[X <= a]`; the id equals the registry entry.
    Indicator { feature: usize },
    /// `1[X = category]`; the id equals the registry entry.
    OneHot { feature: usize, category: usize },
    /// Selects term `term` of tree `tree` as the satisfied one.
    TermDelta { tree: usize, term: usize },
    /// Per-tree vote indicator.
    TreeDelta { tree: usize },
    /// 1 when any indicator of `feature` differs from the factual.
    FeatureChange { feature: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IlpVariable {
    pub id: usize,
    pub kind: VarKind,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => lhs == rhs,
        }
    }
}

/// Which encoding step produced a constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// One constraint per polynomial term.
    Term,
    /// Per-tree `sum_i delta_ji = delta_j`.
    Link,
    /// `sum delta = 1` or the forest majority bound.
    Cardinality,
    Consistency,
    OneHot,
    FeatureChange,
    NoGood,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, i64)>,
    pub relation: Relation,
    pub rhs: i64,
    pub family: Family,
}

impl LinearConstraint {
    pub fn activity(&self, assignment: &[bool]) -> i64 {
        self.coeffs.iter().map(|&(v, c)| if assignment[v] { c } else { 0 }).sum()
    }

    pub fn is_satisfied(&self, assignment: &[bool]) -> bool {
        self.relation.holds(self.activity(assignment), self.rhs)
    }

    /// `<=` form with sorted coefficients, for duplicate detection.
    fn canonical(&self) -> (Vec<(usize, i64)>, Relation, i64) {
        let mut coeffs = self.coeffs.clone();
        coeffs.sort();
        match self.relation {
            Relation::Ge => (coeffs.into_iter().map(|(v, c)| (v, -c)).collect(), Relation::Le, -self.rhs),
            r => (coeffs, r, self.rhs),
        }
    }
}

/// A linear expression with an integer constant.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinExpr {
    coeffs: BTreeMap<usize, i64>,
    constant: i64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn add_var(&mut self, var: usize, coef: i64) -> &mut Self {
        *self.coeffs.entry(var).or_insert(0) += coef;
        self
    }

    pub fn add_constant(&mut self, c: i64) -> &mut Self {
        self.constant += c;
        self
    }

    /// `coef * literal`, where a negated literal is `1 - x`.
    pub fn add_literal(&mut self, lit: Literal, coef: i64) -> &mut Self {
        if lit.positive {
            self.add_var(lit.var, coef)
        } else {
            self.add_constant(coef).add_var(lit.var, -coef)
        }
    }

    fn into_parts(self) -> (Vec<(usize, i64)>, i64) {
        (self.coeffs.into_iter().filter(|(_, c)| *c != 0).collect(), self.constant)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `(sum coeffs * x + constant) / denominator`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Objective {
    pub coeffs: Vec<(usize, i64)>,
    pub constant: i64,
    pub denominator: i64,
}

impl Objective {
    pub fn zero() -> Self {
        Objective { coeffs: Vec::new(), constant: 0, denominator: 1 }
    }

    /// Scaled (integer) value at an assignment.
    pub fn scaled_value(&self, assignment: &[bool]) -> i64 {
        self.constant + self.coeffs.iter().map(|&(v, c)| if assignment[v] { c } else { 0 }).sum::<i64>()
    }

    pub fn value(&self, assignment: &[bool]) -> Ratio<i64> {
        Ratio::new(self.scaled_value(assignment), self.denominator)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlpProblem {
    variables: Vec<IlpVariable>,
    constraints: Vec<LinearConstraint>,
    objective: Objective,
    sense: Sense,
    fixed: BTreeMap<usize, bool>,
    hints: Vec<Option<bool>>,
    decision_vars: usize,
    trivially_infeasible: bool,
}

impl IlpProblem {
    /// Empty problem over bare variables (no registry), mostly for solver tests.
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        let variables = (0..num_vars)
            .map(|id| IlpVariable { id, kind: VarKind::Indicator { feature: 0 }, name: format!("x{id}") })
            .collect();
        IlpProblem {
            variables,
            constraints: Vec::new(),
            objective: Objective::zero(),
            sense,
            fixed: BTreeMap::new(),
            hints: vec![None; num_vars],
            decision_vars: num_vars,
            trivially_infeasible: false,
        }
    }

    /// Problem whose first variables are the registry's indicators.
    pub fn for_registry(registry: &IndicatorRegistry, sense: Sense) -> Self {
        let variables = registry
            .predicates()
            .iter()
            .enumerate()
            .map(|(id, p)| {
                let kind = match p.test {
                    crate::models::Test::Le(_) => VarKind::Indicator { feature: p.feature },
                    crate::models::Test::Eq(c) => VarKind::OneHot { feature: p.feature, category: c },
                };
                IlpVariable { id, kind, name: format!("i[{}]", registry.describe(id)) }
            })
            .collect();
        IlpProblem {
            variables,
            constraints: Vec::new(),
            objective: Objective::zero(),
            sense,
            fixed: BTreeMap::new(),
            hints: vec![None; registry.len()],
            decision_vars: registry.len(),
            trivially_infeasible: false,
        }
    }

    pub fn add_variable(&mut self, kind: VarKind, name: String) -> usize {
        let id = self.variables.len();
        self.variables.push(IlpVariable { id, kind, name });
        self.hints.push(None);
        id
    }

    /// Add `expr REL rhs`. A constraint with no variables left after
    /// folding is checked immediately instead of stored.
    pub fn add_constraint(&mut self, expr: LinExpr, relation: Relation, rhs: i64, family: Family) {
        let (coeffs, constant) = expr.into_parts();
        let rhs = rhs - constant;
        if coeffs.is_empty() {
            if !relation.holds(0, rhs) {
                self.trivially_infeasible = true;
            }
            return;
        }
        self.constraints.push(LinearConstraint { coeffs, relation, rhs, family });
    }

    pub fn push_constraint(&mut self, c: LinearConstraint) {
        assert!(c.coeffs.iter().all(|(v, _)| *v < self.variables.len()), "constraint references an undeclared variable");
        self.constraints.push(c);
    }

    pub fn fix(&mut self, var: usize, value: bool) -> Result<()> {
        match self.fixed.insert(var, value) {
            Some(old) if old != value => Err(CfxError::InfeasibleCondition(format!(
                "variable {} fixed to both 0 and 1",
                self.variables[var].name
            ))),
            _ => Ok(()),
        }
    }

    pub fn set_objective(&mut self, objective: Objective, sense: Sense) {
        assert!(objective.coeffs.iter().all(|(v, _)| *v < self.variables.len()));
        self.objective = objective;
        self.sense = sense;
    }

    pub fn set_hint(&mut self, var: usize, value: bool) {
        self.hints[var] = Some(value);
    }

    pub fn variables(&self) -> &[IlpVariable] {
        &self.variables
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn fixed(&self) -> &BTreeMap<usize, bool> {
        &self.fixed
    }

    pub fn hints(&self) -> &[Option<bool>] {
        &self.hints
    }

    /// Variables that identify a solution region (the registry indicators).
    pub fn decision_vars(&self) -> std::ops::Range<usize> {
        0..self.decision_vars
    }

    pub fn is_trivially_infeasible(&self) -> bool {
        self.trivially_infeasible
    }

    /// True iff the assignment satisfies every constraint and fixing.
    pub fn is_feasible(&self, assignment: &[bool]) -> bool {
        !self.trivially_infeasible
            && assignment.len() == self.variables.len()
            && self.fixed.iter().all(|(&v, &b)| assignment[v] == b)
            && self.constraints.iter().all(|c| c.is_satisfied(assignment))
    }

    /// Export in CPLEX LP format. The true objective is the exported linear
    /// form plus `constant`, divided by `denominator`; both appear in the
    /// header comment because LP files cannot express the division. Variable
    /// names are `x<id>`, each annotated with its role in the `Binaries`
    /// section.
    pub fn to_lp(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "\\ objective = (linear part + {}) / {}",
            self.objective.constant, self.objective.denominator
        );
        let _ = writeln!(out, "{}", match self.sense {
            Sense::Minimize => "Minimize",
            Sense::Maximize => "Maximize",
        });
        let _ = writeln!(out, " obj: {}", lp_terms(&self.objective.coeffs));
        let _ = writeln!(out, "Subject To");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(out, " c{i}: {} {} {}", lp_terms(&c.coeffs), c.relation.symbol(), c.rhs);
        }
        if self.trivially_infeasible && !self.variables.is_empty() {
            let _ = writeln!(out, " infeasible: 0 x0 >= 1");
        }
        if !self.fixed.is_empty() {
            let _ = writeln!(out, "Bounds");
            for (v, b) in &self.fixed {
                let _ = writeln!(out, " x{v} = {}", *b as u8);
            }
        }
        let _ = writeln!(out, "Binaries");
        for v in &self.variables {
            let _ = writeln!(out, " x{} \\ {}", v.id, v.name);
        }
        let _ = writeln!(out, "End");
        out
    }
}

fn lp_terms(coeffs: &[(usize, i64)]) -> String {
    if coeffs.is_empty() {
        return "0 x0".into();
    }
    let mut s = String::new();
    for (i, &(v, c)) in coeffs.iter().enumerate() {
        match (i, c < 0) {
            (0, false) => {}
            (0, true) => s.push_str("- "),
            (_, false) => s.push_str(" + "),
            (_, true) => s.push_str(" - "),
        }
        let _ = write!(s, "{} x{v}", c.abs());
    }
    s
}

fn term_expr(term: &crate::polynomial::Term) -> LinExpr {
    let mut e = LinExpr::new();
    for &lit in term.literals() {
        e.add_literal(lit, 1);
    }
    e
}

/// Every term forced to 0: `sum literals <= k - 1` per term.
pub fn encode_force_zero(problem: &mut IlpProblem, dp: &DecisionPolynomial) -> usize {
    for term in dp.terms() {
        problem.add_constraint(term_expr(term), Relation::Le, term.len() as i64 - 1, Family::Term);
    }
    dp.term_count()
}

fn term_selectors(problem: &mut IlpProblem, dp: &DecisionPolynomial, tree: usize) -> Vec<usize> {
    dp.terms()
        .iter()
        .enumerate()
        .map(|(i, term)| {
            let delta = problem.add_variable(VarKind::TermDelta { tree, term: i }, format!("d[t{tree},{i}]"));
            let mut e = term_expr(term);
            e.add_var(delta, -(term.len() as i64));
            problem.add_constraint(e, Relation::Ge, 0, Family::Term);
            delta
        })
        .collect()
}

/// Some term forced to 1: `sum literals >= k * delta_i` per term and
/// `sum delta_i = 1`. Returns the term selector variables.
pub fn encode_force_one(problem: &mut IlpProblem, dp: &DecisionPolynomial, tree: usize) -> Result<Vec<usize>> {
    if dp.is_empty() {
        return Err(CfxError::EmptyPolynomialUnsatisfiable);
    }
    let deltas = term_selectors(problem, dp, tree);
    let mut card = LinExpr::new();
    for &d in &deltas {
        card.add_var(d, 1);
    }
    problem.add_constraint(card, Relation::Eq, 1, Family::Cardinality);
    Ok(deltas)
}

/// Tree vote indicator: `sum literals - k <= delta - 1` per term, so
/// `delta = 0` forces the polynomial to 0. For an empty polynomial no
/// constraint is emitted and the caller must fix `delta = 0`.
pub fn encode_tree_indicator(problem: &mut IlpProblem, dp: &DecisionPolynomial, tree: usize) -> usize {
    let delta = problem.add_variable(VarKind::TreeDelta { tree }, format!("d[t{tree}]"));
    for term in dp.terms() {
        let mut e = term_expr(term);
        e.add_var(delta, -1);
        problem.add_constraint(e, Relation::Le, term.len() as i64 - 1, Family::Term);
    }
    delta
}

/// Trees that must vote `target` for the forest to output it (ties go to 0).
pub fn votes_needed(trees: usize, target: Class) -> usize {
    match target {
        Class::One => trees / 2 + 1,
        Class::Zero => trees.div_ceil(2),
    }
}

/// Force a majority-vote forest to output `target`, given per-tree
/// polynomials that all belong to one class.
pub fn encode_forest(problem: &mut IlpProblem, dps: &[DecisionPolynomial], target: Class) -> Result<()> {
    let m = dps.len();
    let polarity = dps.first().map(|d| d.target()).ok_or_else(|| CfxError::BadModel("empty forest".into()))?;
    assert!(dps.iter().all(|d| d.target() == polarity), "forest polynomials must share one class");
    let need = votes_needed(m, target) as i64;
    let mut card = LinExpr::new();
    if polarity == target {
        // delta_j = 1 forces tree j to vote `target`
        for (j, dp) in dps.iter().enumerate() {
            let tree_delta = problem.add_variable(VarKind::TreeDelta { tree: j }, format!("d[t{j}]"));
            let selectors = term_selectors(problem, dp, j);
            let mut link = LinExpr::new();
            for &d in &selectors {
                link.add_var(d, 1);
            }
            link.add_var(tree_delta, -1);
            problem.add_constraint(link, Relation::Eq, 0, Family::Link);
            card.add_var(tree_delta, 1);
        }
        problem.add_constraint(card, Relation::Ge, need, Family::Cardinality);
    } else {
        // delta_j = 0 forces tree j to vote `target`
        for (j, dp) in dps.iter().enumerate() {
            let delta = encode_tree_indicator(problem, dp, j);
            if dp.is_empty() {
                problem.fix(delta, false)?;
            }
            card.add_var(delta, 1);
        }
        problem.add_constraint(card, Relation::Le, m as i64 - need, Family::Cardinality);
    }
    Ok(())
}

/// Threshold monotonicity per continuous feature with at least two
/// thresholds, in the reduced form `sum_{F+ \ a} >= (|F+|-1) * 1[X<=a]`
/// and `sum_{F- \ a} <= (|F-|-1) * 1[X<=a]`. Identical constraints are
/// emitted once.
pub fn encode_consistency(problem: &mut IlpProblem, registry: &IndicatorRegistry) -> usize {
    let before = problem.constraints.len();
    let mut seen = HashSet::new();
    for t in registry.threshold_indexes() {
        if t.vars.len() < 2 {
            continue;
        }
        for (pos, &var) in t.vars.iter().enumerate() {
            let plus = &t.plus(pos)[1..];
            let minus = &t.minus(pos)[..pos];
            let mut candidates = Vec::new();
            if !plus.is_empty() {
                let mut coeffs: Vec<(usize, i64)> = plus.iter().map(|&v| (v, 1)).collect();
                coeffs.push((var, -(plus.len() as i64)));
                candidates.push(LinearConstraint { coeffs, relation: Relation::Ge, rhs: 0, family: Family::Consistency });
            }
            if !minus.is_empty() {
                let mut coeffs: Vec<(usize, i64)> = minus.iter().map(|&v| (v, 1)).collect();
                coeffs.push((var, -(minus.len() as i64)));
                candidates.push(LinearConstraint { coeffs, relation: Relation::Le, rhs: 0, family: Family::Consistency });
            }
            for c in candidates {
                if seen.insert(c.canonical()) {
                    problem.push_constraint(c);
                }
            }
        }
    }
    problem.constraints.len() - before
}

/// `sum group = 1` for every one-hot group.
pub fn encode_onehot(problem: &mut IlpProblem, registry: &IndicatorRegistry) -> usize {
    let mut n = 0;
    for g in registry.onehot_groups() {
        let mut e = LinExpr::new();
        for &v in &g.vars {
            e.add_var(v, 1);
        }
        problem.add_constraint(e, Relation::Eq, 1, Family::OneHot);
        n += 1;
    }
    n
}

/// Weighted Hamming distance to the factual indicators with the absolute
/// values removed: `w (1 - v)` where the factual indicator is 1, `w v` where 0.
pub fn build_objective(registry: &IndicatorRegistry, factual: &Instance, weights: &WeightVector) -> Result<Objective> {
    weights.check_covers(registry.len())?;
    let scaled = weights.scaled();
    let factual_bits = registry.indicators(factual);
    let mut coeffs = Vec::with_capacity(registry.len());
    let mut constant = 0;
    for (var, &bit) in factual_bits.iter().enumerate() {
        let w = scaled.values[var];
        if w == 0 {
            continue;
        }
        if bit {
            constant += w;
            coeffs.push((var, -w));
        } else {
            coeffs.push((var, w));
        }
    }
    Ok(Objective { coeffs, constant, denominator: scaled.denominator })
}

/// One end of an interval condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub inclusive: bool,
}

impl Bound {
    pub fn inclusive(value: f64) -> Self {
        Bound { value, inclusive: true }
    }

    pub fn exclusive(value: f64) -> Self {
        Bound { value, inclusive: false }
    }
}

/// A user condition on the counterfactual.
#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    Interval { feature: usize, lo: Option<Bound>, hi: Option<Bound> },
    Equals { feature: usize, category: usize },
    NotEquals { feature: usize, category: usize },
}

impl Condition {
    pub fn feature(&self) -> usize {
        match self {
            Condition::Interval { feature, .. } | Condition::Equals { feature, .. } | Condition::NotEquals { feature, .. } => {
                *feature
            }
        }
    }

    /// `X = v` on a continuous feature.
    pub fn point(feature: usize, v: f64) -> Self {
        Condition::Interval { feature, lo: Some(Bound::inclusive(v)), hi: Some(Bound::inclusive(v)) }
    }

    pub fn admits(&self, value: Value) -> bool {
        match (self, value) {
            (Condition::Interval { lo, hi, .. }, Value::Real(x)) => {
                lo.is_none_or(|b| if b.inclusive { x >= b.value } else { x > b.value })
                    && hi.is_none_or(|b| if b.inclusive { x <= b.value } else { x < b.value })
            }
            (Condition::Equals { category, .. }, Value::Category(c)) => c == *category,
            (Condition::NotEquals { category, .. }, Value::Category(c)) => c != *category,
            _ => false,
        }
    }

    /// Check the condition is well-formed and nonempty for its feature.
    pub fn validate(&self, features: &[Feature]) -> Result<()> {
        let f = features
            .get(self.feature())
            .ok_or_else(|| CfxError::UnknownFeature(format!("#{}", self.feature())))?;
        match self {
            Condition::Interval { lo, hi, .. } => {
                if !f.is_continuous() {
                    return Err(CfxError::BadCondition(format!("interval on categorical feature `{}`", f.name)));
                }
                if let (Some(l), Some(h)) = (lo, hi) {
                    let empty = l.value > h.value || (l.value == h.value && !(l.inclusive && h.inclusive));
                    if empty {
                        return Err(CfxError::InfeasibleCondition(format!(
                            "empty interval for `{}`: {} .. {}",
                            f.name, l.value, h.value
                        )));
                    }
                }
                if lo.iter().chain(hi.iter()).any(|b| !b.value.is_finite()) {
                    return Err(CfxError::BadCondition("interval bounds must be finite".into()));
                }
            }
            Condition::Equals { category, .. } | Condition::NotEquals { category, .. } => {
                if f.is_continuous() {
                    return Err(CfxError::BadCondition(format!(
                        "category condition on continuous feature `{}`",
                        f.name
                    )));
                }
                if *category >= f.categories().len() {
                    return Err(CfxError::UnknownCategory { feature: f.name.clone(), category: category.to_string() });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Interval { feature, lo, hi } => {
                let l = lo.map_or("(-inf".to_string(), |b| format!("{}{}", if b.inclusive { "[" } else { "(" }, b.value));
                let h = hi.map_or("inf)".to_string(), |b| format!("{}{}", b.value, if b.inclusive { "]" } else { ")" }));
                write!(f, "#{feature} in {l}, {h}")
            }
            Condition::Equals { feature, category } => write!(f, "#{feature} = {category}"),
            Condition::NotEquals { feature, category } => write!(f, "#{feature} != {category}"),
        }
    }
}

/// Fix the indicators decided by each condition. Thresholds below the lower
/// bound are fixed false, thresholds at or above the upper bound true; the
/// rest stay free. Equality fixes the whole one-hot group.
pub fn apply_conditions(problem: &mut IlpProblem, registry: &IndicatorRegistry, conditions: &[Condition]) -> Result<()> {
    for cond in conditions {
        cond.validate(registry.features())?;
        let Some(group) = registry.group(cond.feature()) else {
            continue;
        };
        match (cond, group) {
            (Condition::Interval { lo, hi, .. }, FeatureGroup::Thresholds(t)) => {
                for (&a, &var) in t.thresholds.iter().zip(&t.vars) {
                    if let Some(l) = lo {
                        let below = if l.inclusive { a < l.value } else { a <= l.value };
                        if below {
                            problem.fix(var, false)?;
                        }
                    }
                    if let Some(h) = hi {
                        if a >= h.value {
                            problem.fix(var, true)?;
                        }
                    }
                }
            }
            (Condition::Equals { category, .. }, FeatureGroup::OneHot(g)) => {
                for (c, &var) in g.vars.iter().enumerate() {
                    problem.fix(var, c == *category)?;
                }
            }
            (Condition::NotEquals { category, .. }, FeatureGroup::OneHot(g)) => {
                problem.fix(g.vars[*category], false)?;
                if g.vars.iter().all(|v| problem.fixed.get(v) == Some(&false)) {
                    return Err(CfxError::InfeasibleCondition("every category of a feature is excluded".into()));
                }
            }
            _ => unreachable!("validated condition matches the feature kind"),
        }
    }
    Ok(())
}

/// Fix every indicator of `feature` to its factual value.
pub fn keep_feature(problem: &mut IlpProblem, registry: &IndicatorRegistry, factual: &Instance, feature: usize) -> Result<()> {
    if let Some(group) = registry.group(feature) {
        let bits = registry.indicators(factual);
        for &v in group.vars() {
            problem.fix(v, bits[v])?;
        }
    }
    Ok(())
}

/// Exact constraint and variable counts by family.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncodingStats {
    pub variables: usize,
    pub indicator_vars: usize,
    pub auxiliary_vars: usize,
    pub constraints: usize,
    pub by_family: BTreeMap<String, usize>,
    pub generation: usize,
    pub consistency: usize,
    pub fixed: usize,
}

pub fn encoding_stats(problem: &IlpProblem) -> EncodingStats {
    let mut by_family = BTreeMap::new();
    for c in &problem.constraints {
        *by_family.entry(format!("{:?}", c.family).to_lowercase()).or_insert(0) += 1;
    }
    let count = |fams: &[Family]| problem.constraints.iter().filter(|c| fams.contains(&c.family)).count();
    EncodingStats {
        variables: problem.num_vars(),
        indicator_vars: problem.decision_vars,
        auxiliary_vars: problem.num_vars() - problem.decision_vars,
        constraints: problem.constraints.len(),
        by_family,
        generation: count(&[Family::Term, Family::Link, Family::Cardinality]),
        consistency: count(&[Family::Consistency]),
        fixed: problem.fixed.len(),
    }
}

/// Which class's decision polynomials drive the generation constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Polarity {
    /// The family with fewer total terms; ties pick class 0.
    #[default]
    Auto,
    /// The target class's family. Its term selectors let the solver pick
    /// whole paths, which is usually much faster on forests.
    Target,
    Fixed(Class),
}

/// Per-tree decision polynomials of both classes over one shared registry.
/// Trees contribute one entry per tree; other models a single entry.
#[derive(Clone, Debug)]
pub struct ModelPolynomials {
    pub registry: Arc<IndicatorRegistry>,
    pub zero: Vec<DecisionPolynomial>,
    pub one: Vec<DecisionPolynomial>,
    pub is_forest: bool,
}

impl ModelPolynomials {
    pub fn build(model: &Model) -> Result<Self> {
        let registry = Arc::new(IndicatorRegistry::for_model(model));
        let (zero, one, is_forest) = match model {
            Model::Tree(t) => (
                vec![dp_from_tree_in(&t.root, Class::Zero, &registry)],
                vec![dp_from_tree_in(&t.root, Class::One, &registry)],
                false,
            ),
            Model::Forest(f) => (
                f.trees.iter().map(|t| dp_from_tree_in(t, Class::Zero, &registry)).collect(),
                f.trees.iter().map(|t| dp_from_tree_in(t, Class::One, &registry)).collect(),
                true,
            ),
            Model::NaiveBayes(nb) => (
                vec![reduce_dp(&enumerate_dp_in(nb, Class::Zero, DEFAULT_STATE_CAP, &registry)?)],
                vec![reduce_dp(&enumerate_dp_in(nb, Class::One, DEFAULT_STATE_CAP, &registry)?)],
                false,
            ),
        };
        Ok(ModelPolynomials { registry, zero, one, is_forest })
    }

    pub fn of_class(&self, class: Class) -> &[DecisionPolynomial] {
        match class {
            Class::Zero => &self.zero,
            Class::One => &self.one,
        }
    }

    pub fn total_terms(&self, class: Class) -> usize {
        self.of_class(class).iter().map(|d| d.term_count()).sum()
    }

    /// Resolve a polarity for a query whose target class is `target`.
    pub fn choose(&self, polarity: Polarity, target: Class) -> Class {
        match polarity {
            Polarity::Fixed(c) => c,
            Polarity::Target => target,
            Polarity::Auto => {
                if self.total_terms(Class::One) < self.total_terms(Class::Zero) {
                    Class::One
                } else {
                    Class::Zero
                }
            }
        }
    }
}

/// Generation constraints forcing the model's output to `target` using the
/// polynomials of class `polarity`.
pub fn encode_generation(problem: &mut IlpProblem, polys: &ModelPolynomials, target: Class, polarity: Class) -> Result<()> {
    let dps = polys.of_class(polarity);
    if polys.is_forest {
        encode_forest(problem, dps, target)
    } else if polarity == target {
        encode_force_one(problem, &dps[0], 0).map(|_| ())
    } else {
        encode_force_zero(problem, &dps[0]);
        Ok(())
    }
}

/// Point the search at the term of each tree that disagrees least with the
/// factual indicators, and at every tree vote.
pub fn hint_selectors(problem: &mut IlpProblem, dps: &[DecisionPolynomial], factual_bits: &[bool]) {
    let mismatches = |tree: usize, term: usize| {
        dps[tree].terms()[term].literals().iter().filter(|l| !l.eval(factual_bits)).count()
    };
    let mut best: Vec<Option<(usize, usize)>> = vec![None; dps.len()];
    for v in problem.variables() {
        if let VarKind::TermDelta { tree, term } = v.kind {
            let m = mismatches(tree, term);
            if best[tree].is_none_or(|(bm, _)| m < bm) {
                best[tree] = Some((m, v.id));
            }
        }
    }
    let kinds: Vec<(usize, VarKind)> = problem.variables().iter().map(|v| (v.id, v.kind.clone())).collect();
    for (id, kind) in kinds {
        match kind {
            VarKind::TermDelta { tree, .. } => problem.set_hint(id, best[tree].is_some_and(|(_, b)| b == id)),
            VarKind::TreeDelta { .. } => problem.set_hint(id, true),
            _ => {}
        }
    }
}

/// Everything the solver needs for a counterfactual query.
#[derive(Clone, Debug)]
pub struct EncodedQuery {
    pub problem: IlpProblem,
    pub registry: Arc<IndicatorRegistry>,
    pub polarity: Class,
    pub target: Class,
}

/// Generation + consistency + one-hot constraints, the weighted distance
/// objective and the conditions, with factual values as search hints.
pub fn encode_counterfactual(
    polys: &ModelPolynomials,
    factual: &Instance,
    weights: &WeightVector,
    target: Class,
    polarity: Polarity,
    conditions: &[Condition],
) -> Result<EncodedQuery> {
    let registry = polys.registry.clone();
    let polarity = polys.choose(polarity, target);
    let mut problem = IlpProblem::for_registry(&registry, Sense::Minimize);
    encode_generation(&mut problem, polys, target, polarity)?;
    encode_consistency(&mut problem, &registry);
    encode_onehot(&mut problem, &registry);
    let objective = build_objective(&registry, factual, weights)?;
    problem.set_objective(objective, Sense::Minimize);
    let bits = registry.indicators(factual);
    hint_selectors(&mut problem, polys.of_class(polarity), &bits);
    for (var, &bit) in bits.iter().enumerate() {
        problem.set_hint(var, bit);
    }
    apply_conditions(&mut problem, &registry, conditions)?;
    Ok(EncodedQuery { problem, registry, polarity, target })
}
