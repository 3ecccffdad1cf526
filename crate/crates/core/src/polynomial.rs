//! Decision polynomials: sums of monic products of indicator literals that
//! evaluate to 1 exactly when the classifier outputs the polynomial's class.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{CfxError, Result};
use crate::models::{enumerate_paths, Class, DecisionTree, Feature, NaiveBayes, Predicate, TreeNode};
use crate::registry::{FeatureGroup, IndicatorRegistry};

/// Default cap on the number of joint states an enumerable classifier may have.
pub const DEFAULT_STATE_CAP: u128 = 1 << 20;

/// `1[p]` when positive, `1 - 1[p]` when negated; `var` is a registry id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal { var, positive: true }
    }

    pub fn neg(var: usize) -> Self {
        Literal { var, positive: false }
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        assignment[self.var] == self.positive
    }
}

/// A nonempty product of literals, at most one per variable, sorted by variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    literals: Vec<Literal>,
}

impl Term {
    /// Returns `None` when the literals contain both polarities of one
    /// variable (the product is identically zero). Repeated literals collapse.
    ///
    /// Panics on an empty literal list: a constant term is not allowed.
    pub fn new(literals: impl IntoIterator<Item = Literal>) -> Option<Term> {
        let mut literals: Vec<Literal> = literals.into_iter().collect();
        assert!(!literals.is_empty(), "decision polynomial terms cannot be constant");
        literals.sort();
        literals.dedup();
        if literals.windows(2).any(|w| w[0].var == w[1].var) {
            return None;
        }
        Some(Term { literals })
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.literals.iter().all(|l| l.eval(assignment))
    }

    fn literal_on(&self, var: usize) -> Option<(usize, Literal)> {
        self.literals.iter().enumerate().find(|(_, l)| l.var == var).map(|(i, l)| (i, *l))
    }

    fn without(&self, index: usize) -> Vec<Literal> {
        let mut rest = self.literals.clone();
        rest.remove(index);
        rest
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionPolynomial {
    target: Class,
    terms: Vec<Term>,
    registry: Arc<IndicatorRegistry>,
}

impl DecisionPolynomial {
    /// Duplicate terms are dropped, keeping first occurrences.
    pub fn new(target: Class, terms: Vec<Term>, registry: Arc<IndicatorRegistry>) -> Self {
        let mut seen = HashSet::new();
        let terms = terms.into_iter().filter(|t| seen.insert(t.clone())).collect();
        DecisionPolynomial { target, terms, registry }
    }

    pub fn target(&self) -> Class {
        self.target
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn registry(&self) -> &Arc<IndicatorRegistry> {
        &self.registry
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Terms as sets of literals, for order-insensitive comparison.
    pub fn term_set(&self) -> HashSet<Vec<Literal>> {
        self.terms.iter().map(|t| t.literals.clone()).collect()
    }

    /// Number of terms evaluating to 1; no consistency check.
    pub fn count_true_terms(&self, assignment: &[bool]) -> usize {
        self.terms.iter().filter(|t| t.eval(assignment)).count()
    }
}

impl fmt::Display for DecisionPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            for (j, l) in t.literals.iter().enumerate() {
                if j > 0 {
                    write!(f, "·")?;
                }
                let name = self.registry.describe(l.var);
                if l.positive {
                    write!(f, "1[{name}]")?;
                } else {
                    write!(f, "(1-1[{name}])")?;
                }
            }
        }
        Ok(())
    }
}

/// Decision polynomial of `tree` for `target`, over a registry built from
/// the tree alone.
pub fn dp_from_tree(tree: &DecisionTree, target: Class) -> DecisionPolynomial {
    let registry = Arc::new(IndicatorRegistry::new(&tree.features, tree.root.predicates()));
    dp_from_tree_in(&tree.root, target, &registry)
}

/// One term per root-to-leaf path reaching `target`. Every predicate of the
/// tree must be present in `registry`. Paths that test one predicate with
/// both outcomes are unreachable and contribute no term.
pub fn dp_from_tree_in(root: &TreeNode, target: Class, registry: &Arc<IndicatorRegistry>) -> DecisionPolynomial {
    let terms = enumerate_paths(root)
        .into_iter()
        .filter(|(_, class)| *class == target)
        .filter_map(|(path, _)| {
            Term::new(path.iter().map(|lit| {
                let var = registry
                    .lookup(&lit.predicate)
                    .expect("tree predicate missing from the indicator registry");
                Literal { var, positive: lit.polarity }
            }))
        })
        .collect();
    DecisionPolynomial::new(target, terms, registry.clone())
}

/// A classifier over categorical features that can be queried on every
/// joint state.
pub trait Enumerable {
    fn features(&self) -> &[Feature];
    fn classify(&self, categories: &[usize]) -> Class;
}

impl Enumerable for NaiveBayes {
    fn features(&self) -> &[Feature] {
        &self.features
    }

    fn classify(&self, categories: &[usize]) -> Class {
        self.classify_categories(categories)
    }
}

/// An explicit truth table; the first feature is the most significant digit.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthTable {
    features: Vec<Feature>,
    outputs: Vec<Class>,
}

impl TruthTable {
    pub fn from_fn(features: Vec<Feature>, f: impl Fn(&[usize]) -> Class) -> Result<Self> {
        let radices = categorical_radices(&features)?;
        let outputs = MixedRadix::new(radices).map(|state| f(&state)).collect();
        Ok(TruthTable { features, outputs })
    }
}

impl Enumerable for TruthTable {
    fn features(&self) -> &[Feature] {
        &self.features
    }

    fn classify(&self, categories: &[usize]) -> Class {
        let mut idx = 0;
        for (f, &c) in self.features.iter().zip(categories) {
            idx = idx * f.categories().len() + c;
        }
        self.outputs[idx]
    }
}

fn categorical_radices(features: &[Feature]) -> Result<Vec<usize>> {
    features
        .iter()
        .map(|f| {
            if f.is_continuous() {
                Err(CfxError::BadModel(format!("feature `{}` must be categorical for enumeration", f.name)))
            } else {
                Ok(f.categories().len())
            }
        })
        .collect()
}

struct MixedRadix {
    radices: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl MixedRadix {
    fn new(radices: Vec<usize>) -> Self {
        let next = Some(vec![0; radices.len()]);
        MixedRadix { radices, next }
    }
}

impl Iterator for MixedRadix {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.radices[i] {
                self.next = Some(succ);
                return Some(cur);
            }
            succ[i] = 0;
        }
        Some(cur)
    }
}

/// Literal for "feature takes category `c`": binary features use a single
/// indicator with polarity, wider features a positive one-hot indicator.
fn state_literal(group: &FeatureGroup, c: usize) -> Literal {
    let vars = group.vars();
    if vars.len() == 2 {
        Literal { var: vars[1], positive: c == 1 }
    } else {
        Literal::pos(vars[c])
    }
}

/// Unreduced decision polynomial: one full-length term per joint state
/// classified as `target`.
pub fn enumerate_dp<E: Enumerable + ?Sized>(classifier: &E, target: Class, state_cap: u128) -> Result<DecisionPolynomial> {
    let features = classifier.features();
    let radices = categorical_radices(features)?;
    let size: u128 = radices.iter().map(|&r| r as u128).product();
    if size > state_cap {
        return Err(CfxError::EnumerationCapExceeded { size, cap: state_cap });
    }
    let registry = Arc::new(IndicatorRegistry::all_categorical(features));
    enumerate_states(classifier, target, radices, registry)
}

/// Like [`enumerate_dp`] over a caller-supplied registry, which must hold the
/// full one-hot group of every feature.
pub fn enumerate_dp_in<E: Enumerable + ?Sized>(
    classifier: &E,
    target: Class,
    state_cap: u128,
    registry: &Arc<IndicatorRegistry>,
) -> Result<DecisionPolynomial> {
    let radices = categorical_radices(classifier.features())?;
    let size: u128 = radices.iter().map(|&r| r as u128).product();
    if size > state_cap {
        return Err(CfxError::EnumerationCapExceeded { size, cap: state_cap });
    }
    enumerate_states(classifier, target, radices, registry.clone())
}

fn enumerate_states<E: Enumerable + ?Sized>(
    classifier: &E,
    target: Class,
    radices: Vec<usize>,
    registry: Arc<IndicatorRegistry>,
) -> Result<DecisionPolynomial> {
    let groups: Vec<&FeatureGroup> = registry.groups().collect();
    let mut terms = Vec::new();
    for state in MixedRadix::new(radices) {
        if classifier.classify(&state) != target {
            continue;
        }
        if state.is_empty() {
            break;
        }
        let lits = groups.iter().zip(&state).map(|(g, &c)| state_literal(g, c));
        terms.push(Term::new(lits).expect("distinct features give distinct variables"));
    }
    Ok(DecisionPolynomial::new(target, terms, registry))
}

/// Enumerate then reduce.
pub fn dp_from_enumerable<E: Enumerable + ?Sized>(classifier: &E, target: Class, state_cap: u128) -> Result<DecisionPolynomial> {
    Ok(reduce_dp(&enumerate_dp(classifier, target, state_cap)?))
}

/// Merge terms that differ only in the polarity of one literal into their
/// common factors, repeated to a fixpoint. For one-hot groups wider than two,
/// a complete set of terms differing only in the group's positive literal
/// is merged the same way. A merge that would leave a constant term is skipped.
pub fn reduce_dp(dp: &DecisionPolynomial) -> DecisionPolynomial {
    let registry = dp.registry.clone();
    let mut terms = dp.terms.clone();
    loop {
        let mut merged_any = false;
        for group in registry.groups() {
            for &var in group.vars() {
                merged_any |= merge_on_var(&mut terms, var);
            }
            if group.vars().len() > 2 {
                merged_any |= merge_onehot_group(&mut terms, group.vars());
            }
        }
        if !merged_any {
            break;
        }
    }
    DecisionPolynomial::new(dp.target, terms, registry)
}

fn merge_on_var(terms: &mut Vec<Term>, var: usize) -> bool {
    let mut slots: HashMap<Vec<Literal>, [Option<usize>; 2]> = HashMap::new();
    let mut keys_in_order = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        if let Some((pos, lit)) = t.literal_on(var) {
            if t.len() == 1 {
                continue;
            }
            let key = t.without(pos);
            let entry = slots.entry(key.clone()).or_insert_with(|| {
                keys_in_order.push(key);
                [None, None]
            });
            entry[lit.positive as usize] = Some(i);
        }
    }
    let mut replace: HashMap<usize, Option<Term>> = HashMap::new();
    for key in keys_in_order {
        if let [Some(a), Some(b)] = slots[&key] {
            let (first, second) = (a.min(b), a.max(b));
            replace.insert(first, Some(Term { literals: key }));
            replace.insert(second, None);
        }
    }
    if replace.is_empty() {
        return false;
    }
    let old = std::mem::take(terms);
    for (i, t) in old.into_iter().enumerate() {
        match replace.remove(&i) {
            Some(Some(merged)) => terms.push(merged),
            Some(None) => {}
            None => terms.push(t),
        }
    }
    dedup_terms(terms);
    true
}

fn merge_onehot_group(terms: &mut Vec<Term>, vars: &[usize]) -> bool {
    let mut members: HashMap<Vec<Literal>, Vec<(usize, usize)>> = HashMap::new();
    let mut keys_in_order = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        let on_group: Vec<(usize, Literal)> = t
            .literals
            .iter()
            .enumerate()
            .filter(|(_, l)| vars.contains(&l.var))
            .map(|(p, l)| (p, *l))
            .collect();
        if let [(pos, lit)] = on_group[..] {
            if lit.positive && t.len() > 1 {
                let key = t.without(pos);
                members
                    .entry(key.clone())
                    .or_insert_with(|| {
                        keys_in_order.push(key);
                        Vec::new()
                    })
                    .push((lit.var, i));
            }
        }
    }
    let mut replace: HashMap<usize, Option<Term>> = HashMap::new();
    for key in keys_in_order {
        let group = &members[&key];
        let covered: HashSet<usize> = group.iter().map(|(v, _)| *v).collect();
        if covered.len() == vars.len() {
            let first = group.iter().map(|(_, i)| *i).min().expect("nonempty group");
            for (_, i) in group {
                replace.insert(*i, None);
            }
            replace.insert(first, Some(Term { literals: key }));
        }
    }
    if replace.is_empty() {
        return false;
    }
    let old = std::mem::take(terms);
    for (i, t) in old.into_iter().enumerate() {
        match replace.remove(&i) {
            Some(Some(merged)) => terms.push(merged),
            Some(None) => {}
            None => terms.push(t),
        }
    }
    dedup_terms(terms);
    true
}

fn dedup_terms(terms: &mut Vec<Term>) {
    let mut seen = HashSet::new();
    terms.retain(|t| seen.insert(t.clone()));
}

/// Value of the polynomial at a consistent indicator assignment.
pub fn eval_dp(dp: &DecisionPolynomial, assignment: &[bool]) -> Result<usize> {
    if !dp.registry.is_consistent(assignment) {
        return Err(CfxError::InconsistentAssignment);
    }
    Ok(dp.count_true_terms(assignment))
}

/// Exhaustively check `p0 + p1 = 1` on every consistent assignment.
pub fn check_prop2(p0: &DecisionPolynomial, p1: &DecisionPolynomial, cap: u128) -> Result<bool> {
    if p0.registry != p1.registry {
        return Err(CfxError::BadModel("decision polynomials must share a registry".into()));
    }
    for a in p0.registry.consistent_assignments(cap)? {
        if p0.count_true_terms(&a) + p1.count_true_terms(&a) != 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Registry literal of a predicate, for callers assembling terms by hand.
pub fn literal_for(registry: &IndicatorRegistry, predicate: Predicate, positive: bool) -> Option<Literal> {
    registry.lookup(&predicate).map(|var| Literal { var, positive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Feature;

    fn fig1() -> DecisionTree {
        let features = vec![Feature::continuous("X1"), Feature::continuous("X2")];
        let root = TreeNode::split(
            Predicate::le(0, 10.0),
            TreeNode::split(Predicate::le(1, 50.0), TreeNode::leaf(1), TreeNode::leaf(0)),
            TreeNode::split(Predicate::le(1, 20.0), TreeNode::leaf(1), TreeNode::leaf(0)),
        );
        DecisionTree::new(features, root)
    }

    // two-feature tree registry ids: 0 = X1<=10, 1 = X2<=20, 2 = X2<=50
    fn lits(spec: &[(usize, bool)]) -> Vec<Literal> {
        let mut v: Vec<Literal> = spec.iter().map(|&(var, positive)| Literal { var, positive }).collect();
        v.sort();
        v
    }

    #[test]
    fn fig1_polynomials() {
        let t = fig1();
        let p1 = dp_from_tree(&t, Class::One);
        let expected: HashSet<_> = [lits(&[(0, true), (2, true)]), lits(&[(0, false), (1, true)])].into();
        assert_eq!(p1.term_set(), expected);
        let p0 = dp_from_tree(&t, Class::Zero);
        let expected: HashSet<_> = [lits(&[(0, true), (2, false)]), lits(&[(0, false), (1, false)])].into();
        assert_eq!(p0.term_set(), expected);
        assert_eq!(p1.to_string(), "1[X1<=10]·1[X2<=50] + (1-1[X1<=10])·1[X2<=20]");
    }

    #[test]
    fn depth_one_tree() {
        let t = DecisionTree::new(
            vec![Feature::continuous("X")],
            TreeNode::split(Predicate::le(0, 5.0), TreeNode::leaf(1), TreeNode::leaf(0)),
        );
        let p = dp_from_tree(&t, Class::One);
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.terms()[0].literals(), &[Literal::pos(0)]);
    }

    #[test]
    fn never_output_class_gives_empty_polynomial() {
        let t = DecisionTree::new(
            vec![Feature::continuous("X")],
            TreeNode::split(Predicate::le(0, 5.0), TreeNode::leaf(1), TreeNode::leaf(1)),
        );
        let p = dp_from_tree(&t, Class::Zero);
        assert!(p.is_empty());
        assert_eq!(eval_dp(&p, &[true]).unwrap(), 0);
    }

    #[test]
    fn eval_fig1_factual() {
        let t = fig1();
        let p1 = dp_from_tree(&t, Class::One);
        let p0 = dp_from_tree(&t, Class::Zero);
        // X1<=10 true, X2<=20 false, X2<=50 true
        let a = [true, false, true];
        assert_eq!(eval_dp(&p1, &a).unwrap(), 1);
        assert_eq!(eval_dp(&p0, &a).unwrap(), 0);
        assert_eq!(eval_dp(&p0, &[true, true, false]), Err(CfxError::InconsistentAssignment));
    }

    #[test]
    fn prop2_on_fig1() {
        let t = fig1();
        let p1 = dp_from_tree(&t, Class::One);
        let p0 = dp_from_tree(&t, Class::Zero);
        assert!(check_prop2(&p0, &p1, 1 << 20).unwrap());
        assert!(!check_prop2(&p1, &p1, 1 << 20).unwrap());
    }

    fn binary3() -> Vec<Feature> {
        vec![Feature::binary("X1"), Feature::binary("X2"), Feature::binary("X3")]
    }

    // all_categorical registry over three binary features: Xi is var 2i+1
    fn x(i: usize, positive: bool) -> Literal {
        Literal { var: 2 * (i - 1) + 1, positive }
    }

    #[test]
    fn reduce_single_pair() {
        let reg = Arc::new(IndicatorRegistry::all_categorical(&binary3()));
        let dp = DecisionPolynomial::new(
            Class::Zero,
            vec![
                Term::new([x(1, true), x(2, true), x(3, true)]).unwrap(),
                Term::new([x(1, true), x(2, true), x(3, false)]).unwrap(),
            ],
            reg,
        );
        let r = reduce_dp(&dp);
        assert_eq!(r.terms().len(), 1);
        assert_eq!(r.terms()[0].literals(), &[x(1, true), x(2, true)]);
    }

    #[test]
    fn reduce_four_terms_to_x1() {
        let reg = Arc::new(IndicatorRegistry::all_categorical(&binary3()));
        let dp = DecisionPolynomial::new(
            Class::Zero,
            vec![
                Term::new([x(1, true), x(2, true), x(3, true)]).unwrap(),
                Term::new([x(1, true), x(2, true), x(3, false)]).unwrap(),
                Term::new([x(1, true), x(2, false), x(3, true)]).unwrap(),
                Term::new([x(1, true), x(2, false), x(3, false)]).unwrap(),
            ],
            reg,
        );
        let r = reduce_dp(&dp);
        assert_eq!(r.terms().len(), 1);
        assert_eq!(r.terms()[0].literals(), &[x(1, true)]);
        let again = reduce_dp(&r);
        assert_eq!(again, r);
    }

    #[test]
    fn truth_table_reduces_to_x1x2() {
        let tt = TruthTable::from_fn(binary3(), |s| {
            if s[0] == 1 && s[1] == 1 {
                Class::Zero
            } else {
                Class::One
            }
        })
        .unwrap();
        let p0 = dp_from_enumerable(&tt, Class::Zero, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(p0.terms().len(), 1);
        assert_eq!(p0.terms()[0].literals(), &[x(1, true), x(2, true)]);
    }

    #[test]
    fn constant_truth_table_has_empty_polynomial() {
        let tt = TruthTable::from_fn(binary3(), |_| Class::Zero).unwrap();
        assert!(dp_from_enumerable(&tt, Class::One, DEFAULT_STATE_CAP).unwrap().is_empty());
        // the class-0 side cannot collapse into a constant term
        let p0 = dp_from_enumerable(&tt, Class::Zero, DEFAULT_STATE_CAP).unwrap();
        assert!(p0.terms().iter().all(|t| !t.is_empty()));
        assert!(check_prop2(&p0, &dp_from_enumerable(&tt, Class::One, DEFAULT_STATE_CAP).unwrap(), 1 << 10).unwrap());
    }

    #[test]
    fn xor_is_irreducible() {
        // brute force over the four states: class 1 exactly when X1 != X2
        let tt = TruthTable::from_fn(vec![Feature::binary("X1"), Feature::binary("X2")], |s| {
            Class::from_u8((s[0] != s[1]) as u8).unwrap()
        })
        .unwrap();
        let p1 = dp_from_enumerable(&tt, Class::One, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(p1.terms().len(), 2);
        assert_eq!(reduce_dp(&p1), p1);
    }

    #[test]
    fn naive_bayes_cannot_express_xor() {
        // log-odds are additive, so any 2-feature NBC that outputs 1 on (0,1)
        // and (1,0) also outputs 1 on (0,0) or (1,1); scan a grid of tables
        let grid = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
        for &a0 in &grid {
            for &a1 in &grid {
                for &b0 in &grid {
                    for &b1 in &grid {
                        let nb = NaiveBayes::new(
                            vec![Feature::binary("X1"), Feature::binary("X2")],
                            [0.5, 0.5],
                            vec![vec![[1.0 - a0, 1.0 - a1], [a0, a1]], vec![[1.0 - b0, 1.0 - b1], [b0, b1]]],
                        );
                        let xor = (0..4).all(|s: usize| {
                            let st = [s >> 1, s & 1];
                            nb.classify_categories(&st) == Class::from_u8((st[0] != st[1]) as u8).unwrap()
                        });
                        assert!(!xor);
                    }
                }
            }
        }
    }

    #[test]
    fn wide_categorical_groups_merge() {
        let features = vec![Feature::categorical("c", ["a", "b", "c"]), Feature::binary("y")];
        // class 1 iff y = 1, regardless of c
        let tt = TruthTable::from_fn(features, |s| Class::from_u8(s[1] as u8).unwrap()).unwrap();
        let full = enumerate_dp(&tt, Class::One, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(full.terms().len(), 3);
        let r = reduce_dp(&full);
        assert_eq!(r.terms().len(), 1);
        assert_eq!(r.terms()[0].literals(), &[Literal::pos(4)]);
    }

    #[test]
    fn state_cap_enforced() {
        let features: Vec<Feature> = (0..21).map(|i| Feature::binary(format!("v{i}"))).collect();
        let tt_cap = enumerate_dp(
            &TruthTable { features: features.clone(), outputs: vec![] },
            Class::One,
            DEFAULT_STATE_CAP,
        );
        assert!(matches!(tt_cap, Err(CfxError::EnumerationCapExceeded { .. })));
    }

    #[test]
    fn contradictory_literals_yield_no_term() {
        assert!(Term::new([Literal::pos(0), Literal::neg(0)]).is_none());
        assert_eq!(Term::new([Literal::pos(3), Literal::pos(3)]).unwrap().len(), 1);
    }
}
