//! The indicator registry: every binary atom a model tests, laid out as the
//! first block of ILP variables.
//!
//! Continuous features contribute one indicator `1[X <= a]` per distinct
//! threshold, sorted ascending. Categorical features contribute a full
//! one-hot group, one indicator per category.

use std::collections::{BTreeSet, HashMap};

use crate::error::{CfxError, Result};
use crate::models::{Feature, FeatureKind, Instance, Model, Predicate, Test, Value};

/// Sorted distinct thresholds of one continuous feature and the registry
/// ids of their indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdIndex {
    pub feature: usize,
    pub thresholds: Vec<f64>,
    pub vars: Vec<usize>,
}

impl ThresholdIndex {
    /// Rules on the same feature whose threshold is `>=` the one at `pos`.
    pub fn plus(&self, pos: usize) -> &[usize] {
        &self.vars[pos..]
    }

    /// Rules on the same feature whose threshold is `<=` the one at `pos`.
    pub fn minus(&self, pos: usize) -> &[usize] {
        &self.vars[..=pos]
    }

    pub fn cell_count(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// Cell `p` is `(a_{p-1}, a_p]` with `a_{-1} = -inf` and `a_q = +inf`.
    pub fn cell_of(&self, x: f64) -> usize {
        self.thresholds.partition_point(|&a| a < x)
    }

    pub fn cell_bounds(&self, cell: usize) -> (Option<f64>, Option<f64>) {
        let lo = if cell == 0 { None } else { Some(self.thresholds[cell - 1]) };
        let hi = self.thresholds.get(cell).copied();
        (lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneHotGroup {
    pub feature: usize,
    pub vars: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureGroup {
    Thresholds(ThresholdIndex),
    OneHot(OneHotGroup),
}

impl FeatureGroup {
    pub fn feature(&self) -> usize {
        match self {
            FeatureGroup::Thresholds(t) => t.feature,
            FeatureGroup::OneHot(g) => g.feature,
        }
    }

    pub fn vars(&self) -> &[usize] {
        match self {
            FeatureGroup::Thresholds(t) => &t.vars,
            FeatureGroup::OneHot(g) => &g.vars,
        }
    }

    pub fn cell_count(&self) -> usize {
        match self {
            FeatureGroup::Thresholds(t) => t.cell_count(),
            FeatureGroup::OneHot(g) => g.vars.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorRegistry {
    features: Vec<Feature>,
    predicates: Vec<Predicate>,
    lookup: HashMap<Predicate, usize>,
    groups: Vec<Option<FeatureGroup>>,
}

impl IndicatorRegistry {
    /// Register `predicates` (duplicates allowed). Any categorical feature
    /// that is tested at all gets its complete one-hot group.
    pub fn new(features: &[Feature], predicates: impl IntoIterator<Item = Predicate>) -> Self {
        let mut thresholds: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); features.len()];
        let mut used = vec![false; features.len()];
        for p in predicates {
            used[p.feature] = true;
            if let Test::Le(a) = p.test {
                // order-preserving key for finite floats
                thresholds[p.feature].insert(ordered_bits(a));
            }
        }
        let mut reg = IndicatorRegistry {
            features: features.to_vec(),
            predicates: Vec::new(),
            lookup: HashMap::new(),
            groups: vec![None; features.len()],
        };
        for (fi, f) in features.iter().enumerate() {
            if !used[fi] {
                continue;
            }
            match &f.kind {
                FeatureKind::Continuous => {
                    let ts: Vec<f64> = thresholds[fi].iter().map(|&b| from_ordered_bits(b)).collect();
                    let vars = ts.iter().map(|&a| reg.push(Predicate::le(fi, a))).collect();
                    reg.groups[fi] = Some(FeatureGroup::Thresholds(ThresholdIndex { feature: fi, thresholds: ts, vars }));
                }
                FeatureKind::Categorical(cats) => {
                    let vars = (0..cats.len()).map(|c| reg.push(Predicate::eq(fi, c))).collect();
                    reg.groups[fi] = Some(FeatureGroup::OneHot(OneHotGroup { feature: fi, vars }));
                }
            }
        }
        reg
    }

    /// Registry with a full one-hot group for every categorical feature.
    pub fn all_categorical(features: &[Feature]) -> Self {
        let preds = features
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_continuous())
            .map(|(i, _)| Predicate::eq(i, 0));
        IndicatorRegistry::new(features, preds)
    }

    /// Registry of every rule across all trees, or of every categorical
    /// state for an enumerable classifier.
    pub fn for_model(model: &Model) -> Self {
        match model {
            Model::Tree(t) => IndicatorRegistry::new(&t.features, t.root.predicates()),
            Model::Forest(f) => IndicatorRegistry::new(&f.features, f.trees.iter().flat_map(|t| t.predicates())),
            Model::NaiveBayes(nb) => IndicatorRegistry::all_categorical(&nb.features),
        }
    }

    fn push(&mut self, p: Predicate) -> usize {
        let id = self.predicates.len();
        self.predicates.push(p);
        self.lookup.insert(p, id);
        id
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn predicate(&self, id: usize) -> Predicate {
        self.predicates[id]
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn lookup(&self, p: &Predicate) -> Option<usize> {
        self.lookup.get(p).copied()
    }

    pub fn group(&self, feature: usize) -> Option<&FeatureGroup> {
        self.groups[feature].as_ref()
    }

    /// Groups of the features the registry covers, in feature order.
    pub fn groups(&self) -> impl Iterator<Item = &FeatureGroup> {
        self.groups.iter().flatten()
    }

    pub fn threshold_indexes(&self) -> impl Iterator<Item = &ThresholdIndex> {
        self.groups().filter_map(|g| match g {
            FeatureGroup::Thresholds(t) => Some(t),
            FeatureGroup::OneHot(_) => None,
        })
    }

    pub fn onehot_groups(&self) -> impl Iterator<Item = &OneHotGroup> {
        self.groups().filter_map(|g| match g {
            FeatureGroup::OneHot(g) => Some(g),
            FeatureGroup::Thresholds(_) => None,
        })
    }

    pub fn describe(&self, id: usize) -> String {
        self.predicates[id].display(&self.features)
    }

    /// Indicator values of an instance.
    pub fn indicators(&self, instance: &Instance) -> Vec<bool> {
        self.predicates.iter().map(|p| p.holds(&instance.get(p.feature))).collect()
    }

    /// Cell of `value` within the group of `feature`.
    pub fn cell_of_value(&self, feature: usize, value: Value) -> Option<usize> {
        match (self.group(feature)?, value) {
            (FeatureGroup::Thresholds(t), Value::Real(x)) => Some(t.cell_of(x)),
            (FeatureGroup::OneHot(_), Value::Category(c)) => Some(c),
            _ => None,
        }
    }

    /// Cell selected by an assignment for one group, if the group's block
    /// of the assignment is consistent.
    pub fn cell_of_assignment(&self, group: &FeatureGroup, assignment: &[bool]) -> Option<usize> {
        match group {
            FeatureGroup::Thresholds(t) => {
                let bits: Vec<bool> = t.vars.iter().map(|&v| assignment[v]).collect();
                let cell = bits.iter().take_while(|b| !**b).count();
                bits[cell..].iter().all(|b| *b).then_some(cell)
            }
            FeatureGroup::OneHot(g) => {
                let mut on = g.vars.iter().enumerate().filter(|(_, &v)| assignment[v]);
                match (on.next(), on.next()) {
                    (Some((c, _)), None) => Some(c),
                    _ => None,
                }
            }
        }
    }

    /// True iff the assignment is realizable by some input: thresholds
    /// monotone per feature, exactly one category per one-hot group.
    pub fn is_consistent(&self, assignment: &[bool]) -> bool {
        assignment.len() == self.len() && self.groups().all(|g| self.cell_of_assignment(g, assignment).is_some())
    }

    /// Write the indicators selecting `cell` of `group` into `assignment`.
    pub fn write_cell(&self, group: &FeatureGroup, cell: usize, assignment: &mut [bool]) {
        match group {
            FeatureGroup::Thresholds(t) => {
                for (j, &v) in t.vars.iter().enumerate() {
                    assignment[v] = j >= cell;
                }
            }
            FeatureGroup::OneHot(g) => {
                for (j, &v) in g.vars.iter().enumerate() {
                    assignment[v] = j == cell;
                }
            }
        }
    }

    /// Number of consistent assignments: product of per-group cell counts.
    pub fn space_size(&self) -> u128 {
        self.groups().map(|g| g.cell_count() as u128).product()
    }

    /// Every consistent assignment exactly once, as per-group cell vectors
    /// in mixed-radix order (last group varies fastest).
    pub fn cell_vectors(&self, cap: u128) -> Result<CellVectors> {
        let size = self.space_size();
        if size > cap {
            return Err(CfxError::EnumerationCapExceeded { size, cap });
        }
        Ok(CellVectors {
            radices: self.groups().map(|g| g.cell_count()).collect(),
            current: None,
            done: false,
        })
    }

    pub fn assignment_from_cells(&self, cells: &[usize]) -> Vec<bool> {
        let mut a = vec![false; self.len()];
        for (g, &c) in self.groups().zip(cells) {
            self.write_cell(g, c, &mut a);
        }
        a
    }

    /// Consistent assignments (see [`cell_vectors`](Self::cell_vectors)).
    pub fn consistent_assignments(&self, cap: u128) -> Result<impl Iterator<Item = Vec<bool>> + '_> {
        Ok(self.cell_vectors(cap)?.map(move |cells| self.assignment_from_cells(&cells)))
    }
}

/// Mixed-radix counter over per-group cell indexes.
#[derive(Clone, Debug)]
pub struct CellVectors {
    radices: Vec<usize>,
    current: Option<Vec<usize>>,
    done: bool,
}

impl Iterator for CellVectors {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        match &mut self.current {
            None => {
                let v = vec![0; self.radices.len()];
                self.current = Some(v.clone());
                Some(v)
            }
            Some(cur) => {
                for i in (0..cur.len()).rev() {
                    cur[i] += 1;
                    if cur[i] < self.radices[i] {
                        return Some(cur.clone());
                    }
                    cur[i] = 0;
                }
                self.done = true;
                None
            }
        }
    }
}

fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    if b >> 63 == 1 {
        f64::from_bits(b & !(1 << 63))
    } else {
        f64::from_bits(!b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DecisionTree, TreeNode};

    fn fig1_registry() -> IndicatorRegistry {
        let features = vec![Feature::continuous("X1"), Feature::continuous("X2")];
        let root = TreeNode::split(
            Predicate::le(0, 10.0),
            TreeNode::split(Predicate::le(1, 50.0), TreeNode::leaf(1), TreeNode::leaf(0)),
            TreeNode::split(Predicate::le(1, 20.0), TreeNode::leaf(1), TreeNode::leaf(0)),
        );
        IndicatorRegistry::for_model(&Model::Tree(DecisionTree::new(features, root)))
    }

    #[test]
    fn thresholds_sorted_and_deduplicated() {
        let reg = fig1_registry();
        let ts: Vec<Vec<f64>> = reg.threshold_indexes().map(|t| t.thresholds.clone()).collect();
        assert_eq!(ts, vec![vec![10.0], vec![20.0, 50.0]]);
        assert_eq!(reg.len(), 3);
    }

    #[test]
    fn negative_thresholds_order() {
        let f = [Feature::continuous("x")];
        let reg = IndicatorRegistry::new(&f, [-1.5, 3.0, -7.0, 0.0, -1.5].map(|a| Predicate::le(0, a)));
        let t = reg.threshold_indexes().next().unwrap();
        assert_eq!(t.thresholds, vec![-7.0, -1.5, 0.0, 3.0]);
    }

    #[test]
    fn categorical_group_is_complete() {
        let f = [Feature::categorical("race", ["White", "Black"])];
        let reg = IndicatorRegistry::new(&f, [Predicate::eq(0, 1)]);
        assert_eq!(reg.onehot_groups().next().unwrap().vars, vec![0, 1]);
    }

    #[test]
    fn consistency_detects_inverted_thresholds() {
        let reg = fig1_registry();
        // vars: X1<=10, X2<=20, X2<=50
        assert!(reg.is_consistent(&[true, false, true]));
        assert!(!reg.is_consistent(&[true, true, false]));
    }

    #[test]
    fn fig1_space_has_six_cells() {
        let reg = fig1_registry();
        assert_eq!(reg.space_size(), 6);
        let all: Vec<_> = reg.consistent_assignments(100).unwrap().collect();
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|a| reg.is_consistent(a)));
        let unique: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 6);
    }

    #[test]
    fn cap_enforced() {
        let reg = fig1_registry();
        assert!(matches!(reg.cell_vectors(5), Err(CfxError::EnumerationCapExceeded { .. })));
    }

    #[test]
    fn cell_arithmetic() {
        let t = ThresholdIndex { feature: 0, thresholds: vec![2.0, 5.0, 10.0], vars: vec![0, 1, 2] };
        assert_eq!(t.cell_of(2.0), 0);
        assert_eq!(t.cell_of(2.5), 1);
        assert_eq!(t.cell_of(11.0), 3);
        assert_eq!(t.cell_bounds(1), (Some(2.0), Some(5.0)));
        assert_eq!(t.plus(1), &[1, 2]);
        assert_eq!(t.minus(1), &[0, 1]);
    }
}
