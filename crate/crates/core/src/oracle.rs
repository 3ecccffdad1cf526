//! Brute-force ground truth over the consistent assignment space.
//!
//! Nothing here touches the encoder: candidate regions are enumerated cell
//! by cell, classified by evaluating the model on one representative point
//! per cell, and scored directly.

use log::warn;
use num_rational::Ratio;
use rand::Rng;

use crate::encoder::Condition;
use crate::error::{CfxError, Result};
use crate::explainer::{CounterfactualSet, FeatureRegion};
use crate::models::{Class, Instance, Model, Value};
use crate::registry::{FeatureGroup, IndicatorRegistry};
use crate::weights::WeightVector;

pub const DEFAULT_SPACE_CAP: u128 = 1_000_000;
/// Feature count above which [`brute_pi`] refuses to run.
pub const DEFAULT_FLIP_CAP: usize = 20;

/// A point inside `cell`: the midpoint of a bounded cell, one unit past the
/// bound of an unbounded one.
pub fn cell_point(group: &FeatureGroup, cell: usize) -> Value {
    match group {
        FeatureGroup::Thresholds(t) => Value::Real(match t.cell_bounds(cell) {
            (Some(lo), Some(hi)) => lo + (hi - lo) / 2.0,
            (None, Some(hi)) => hi - 1.0,
            (Some(lo), None) => lo + 1.0,
            (None, None) => 0.0,
        }),
        FeatureGroup::OneHot(_) => Value::Category(cell),
    }
}

/// Representative instance for a vector of per-group cells; features
/// without a group keep their value in `base`.
pub fn representative(registry: &IndicatorRegistry, cells: &[usize], base: &Instance) -> Instance {
    let mut values = base.values().to_vec();
    for (g, &c) in registry.groups().zip(cells) {
        values[g.feature()] = cell_point(g, c);
    }
    Instance::from_values_unchecked(values)
}

/// All consistent indicator assignments, in mixed-radix cell order.
pub fn enumerate_consistent(registry: &IndicatorRegistry, cap: u128) -> Result<impl Iterator<Item = Vec<bool>> + '_> {
    registry.consistent_assignments(cap)
}

/// Whether the cell `(clo, chi]` of feature `f` meets every interval
/// condition on `f`.
fn interval_admits(clo: Option<f64>, chi: Option<f64>, f: usize, conditions: &[Condition]) -> bool {
    let mut lo = clo.map(|v| (v, false));
    let mut hi = chi.map(|v| (v, true));
    for c in conditions.iter().filter(|c| c.feature() == f) {
        let Condition::Interval { lo: l, hi: h, .. } = c else { return false };
        if let Some(b) = l {
            lo = match lo {
                Some((v, inc)) if v > b.value || (v == b.value && !inc) => Some((v, inc)),
                Some((v, inc)) if v == b.value => Some((v, inc && b.inclusive)),
                _ => Some((b.value, b.inclusive)),
            };
        }
        if let Some(b) = h {
            hi = match hi {
                Some((v, inc)) if v < b.value || (v == b.value && !inc) => Some((v, inc)),
                Some((v, inc)) if v == b.value => Some((v, inc && b.inclusive)),
                _ => Some((b.value, b.inclusive)),
            };
        }
    }
    match (lo, hi) {
        (Some((l, li)), Some((h, hinc))) => l < h || (l == h && li && hinc),
        _ => true,
    }
}

/// Whether some point of the cell also satisfies every condition on its
/// feature.
fn cell_admits(group: &FeatureGroup, cell: usize, conditions: &[Condition]) -> bool {
    let f = group.feature();
    match group {
        FeatureGroup::Thresholds(t) => {
            let (clo, chi) = t.cell_bounds(cell);
            interval_admits(clo, chi, f, conditions)
        }
        FeatureGroup::OneHot(_) => conditions.iter().filter(|c| c.feature() == f).all(|c| c.admits(Value::Category(cell))),
    }
}

/// Conditions on features the model never tests only need one admissible value.
fn untested_admissible(registry: &IndicatorRegistry, conditions: &[Condition]) -> bool {
    registry.features().iter().enumerate().filter(|(f, _)| registry.group(*f).is_none()).all(|(f, feat)| {
        if feat.is_continuous() {
            interval_admits(None, None, f, conditions)
        } else {
            (0..feat.categories().len())
                .any(|c| conditions.iter().filter(|cond| cond.feature() == f).all(|cond| cond.admits(Value::Category(c))))
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteCounterfactual {
    pub objective: Ratio<i64>,
    /// Every optimal assignment, in enumeration order.
    pub argmin: Vec<Vec<bool>>,
}

/// Minimum weighted indicator distance over all consistent regions the model
/// assigns to `target` and that meet `conditions`.
pub fn brute_counterfactual(
    model: &Model,
    registry: &IndicatorRegistry,
    factual: &Instance,
    weights: &WeightVector,
    target: Class,
    conditions: &[Condition],
    cap: u128,
) -> Result<BruteCounterfactual> {
    weights.check_covers(registry.len())?;
    let scaled = weights.scaled();
    let fbits = registry.indicators(factual);
    let groups: Vec<&FeatureGroup> = registry.groups().collect();
    let mut best: Option<(i64, Vec<Vec<bool>>)> = None;
    if !untested_admissible(registry, conditions) {
        return Err(CfxError::Infeasible);
    }
    for cells in registry.cell_vectors(cap)? {
        if !groups.iter().zip(&cells).all(|(g, &c)| cell_admits(g, c, conditions)) {
            continue;
        }
        if model.evaluate(&representative(registry, &cells, factual)) != target {
            continue;
        }
        let a = registry.assignment_from_cells(&cells);
        let cost: i64 = (0..a.len()).filter(|&i| a[i] != fbits[i]).map(|i| scaled.values[i]).sum();
        match &mut best {
            Some((b, list)) if cost == *b => list.push(a),
            Some((b, _)) if cost > *b => {}
            _ => best = Some((cost, vec![a])),
        }
    }
    let (cost, argmin) = best.ok_or(CfxError::Infeasible)?;
    Ok(BruteCounterfactual { objective: Ratio::new(cost, scaled.denominator), argmin })
}

/// Brute-force robustness: fewest indicator flips reaching the other class.
pub fn brute_robustness(model: &Model, registry: &IndicatorRegistry, factual: &Instance, cap: u128) -> Result<u64> {
    let target = model.evaluate(factual).flip();
    let w = WeightVector::uniform(registry.len());
    let r = brute_counterfactual(model, registry, factual, &w, target, &[], cap)?;
    Ok(*r.objective.numer() as u64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrutePi {
    /// Largest number of features that can change while the class stays.
    pub max_changed: usize,
    /// Every distinct changed-feature set of that size.
    pub witnesses: Vec<Vec<usize>>,
    /// Largest changed set whose complement `Z` fixes the class for every
    /// value of the changed features; `None` when the subset search would
    /// exceed the cap.
    pub universal_max_changed: Option<usize>,
}

/// Maximum number of features that can simultaneously leave their factual
/// cell while the model keeps the factual class, with `keep` held fixed.
/// Features the model never tests always count as changeable.
pub fn brute_pi(model: &Model, registry: &IndicatorRegistry, factual: &Instance, keep: &[usize], cap: u128) -> Result<BrutePi> {
    let n = registry.features().len();
    if n > DEFAULT_FLIP_CAP {
        return Err(CfxError::EnumerationCapExceeded { size: n as u128, cap: DEFAULT_FLIP_CAP as u128 });
    }
    let class = model.evaluate(factual);
    let groups: Vec<&FeatureGroup> = registry.groups().collect();
    let fcells: Vec<usize> = groups.iter().map(|g| registry.cell_of_value(g.feature(), factual.get(g.feature())).unwrap()).collect();
    let untested: Vec<usize> = (0..n).filter(|&f| registry.group(f).is_none()).collect();
    let mut best: Option<(usize, Vec<Vec<usize>>)> = None;
    for cells in registry.cell_vectors(cap)? {
        let held = groups.iter().zip(cells.iter().zip(&fcells)).all(|(g, (c, fc))| !keep.contains(&g.feature()) || c == fc);
        if !held || model.evaluate(&representative(registry, &cells, factual)) != class {
            continue;
        }
        let mut changed: Vec<usize> =
            groups.iter().zip(cells.iter().zip(&fcells)).filter(|(_, (c, fc))| c != fc).map(|(g, _)| g.feature()).collect();
        changed.extend(&untested);
        changed.sort_unstable();
        match &mut best {
            Some((b, list)) if changed.len() == *b => {
                if !list.contains(&changed) {
                    list.push(changed)
                }
            }
            Some((b, _)) if changed.len() < *b => {}
            _ => best = Some((changed.len(), vec![changed])),
        }
    }
    let (max_changed, witnesses) = best.expect("the factual cell itself keeps the class");
    let universal_max_changed = universal_max_changed(model, registry, factual, keep, cap)?;
    Ok(BrutePi { max_changed, witnesses, universal_max_changed })
}

/// Search every `Z ⊇ keep` over the tested features for the smallest one
/// passing [`check_universal`]. The work is the sum over subsets of the
/// free cell products, i.e. the product of `1 + cells` per group.
fn universal_max_changed(
    model: &Model,
    registry: &IndicatorRegistry,
    factual: &Instance,
    keep: &[usize],
    cap: u128,
) -> Result<Option<usize>> {
    let n = registry.features().len();
    let tested: Vec<usize> = registry.groups().map(|g| g.feature()).collect();
    let work: u128 = registry.groups().map(|g| 1 + g.cell_count() as u128).product();
    if work > cap {
        return Ok(None);
    }
    let optional: Vec<usize> = tested.iter().copied().filter(|f| !keep.contains(f)).collect();
    let fixed: Vec<usize> = tested.iter().copied().filter(|f| keep.contains(f)).collect();
    let mut best_z: Option<usize> = None;
    for mask in 0u64..1 << optional.len() {
        let size = fixed.len() + mask.count_ones() as usize;
        if best_z.is_some_and(|b| size >= b) {
            continue;
        }
        let mut z = fixed.clone();
        z.extend(optional.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &f)| f));
        if check_universal(model, registry, factual, &z, cap)?.is_none() {
            best_z = Some(size);
        }
    }
    Ok(best_z.map(|z| n - z))
}

/// Check that fixing the features in `z` to their factual cells determines
/// the factual class whatever the other features do. Returns a
/// counterexample point if not.
pub fn check_universal(
    model: &Model,
    registry: &IndicatorRegistry,
    factual: &Instance,
    z: &[usize],
    cap: u128,
) -> Result<Option<Instance>> {
    let class = model.evaluate(factual);
    let groups: Vec<&FeatureGroup> = registry.groups().collect();
    let free: Vec<usize> = (0..groups.len()).filter(|&i| !z.contains(&groups[i].feature())).collect();
    let size: u128 = free.iter().map(|&i| groups[i].cell_count() as u128).product();
    if size > cap {
        return Err(CfxError::EnumerationCapExceeded { size, cap });
    }
    let mut cells: Vec<usize> =
        groups.iter().map(|g| registry.cell_of_value(g.feature(), factual.get(g.feature())).unwrap()).collect();
    for &i in &free {
        cells[i] = 0;
    }
    // odometer over the free groups
    loop {
        let point = representative(registry, &cells, factual);
        if model.evaluate(&point) != class {
            return Ok(Some(point));
        }
        let mut advanced = false;
        for &i in free.iter().rev() {
            cells[i] += 1;
            if cells[i] < groups[i].cell_count() {
                advanced = true;
                break;
            }
            cells[i] = 0;
        }
        if !advanced {
            return Ok(None);
        }
    }
}

/// Random points of a counterfactual region: uniform inside intervals plus
/// the closed endpoints and the nearest floats inside open ones. Unbounded
/// sides are sampled up to `max(1, |bound|)` away from the finite bound.
pub fn sample_region<R: Rng>(set: &CounterfactualSet, factual: &Instance, rng: &mut R, n: usize) -> Vec<Instance> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut values = factual.values().to_vec();
        for c in &set.conditions {
            let v = match &c.region {
                FeatureRegion::Unchanged => continue,
                FeatureRegion::Category(k) => Value::Category(*k),
                FeatureRegion::Interval { lo, hi } => {
                    let lo_in = lo.map(|b| if b.inclusive { b.value } else { b.value.next_up() });
                    let hi_in = hi.map(|b| if b.inclusive { b.value } else { b.value.next_down() });
                    let (a, b) = match (lo_in, hi_in) {
                        (Some(a), Some(b)) => (a, b),
                        (Some(a), None) => (a, a + a.abs().max(1.0)),
                        (None, Some(b)) => (b - b.abs().max(1.0), b),
                        (None, None) => (-1.0, 1.0),
                    };
                    Value::Real(match i % 4 {
                        0 => a,
                        1 => b,
                        _ if a < b => rng.random_range(a..=b),
                        _ => a,
                    })
                }
            };
            values[c.feature] = v;
        }
        out.push(Instance::from_values_unchecked(values));
    }
    out
}

/// First sampled point of the region the model does not assign to the
/// set's target, if any.
pub fn find_invalid_point<R: Rng>(model: &Model, set: &CounterfactualSet, factual: &Instance, rng: &mut R, n: usize) -> Option<Instance> {
    let points = sample_region(set, factual, rng, n);
    points.into_iter().find(|p| model.evaluate(p) != set.target)
}

/// Indicator vectors (over the decision variables) for which some setting
/// of the remaining variables satisfies the problem. Each candidate is
/// settled by the solver with the indicators fixed.
pub fn feasible_projections(problem: &crate::encoder::IlpProblem, cap: u128) -> Result<Vec<Vec<bool>>> {
    use crate::solver::{solve, SolveStatus, SolverConfig};
    let n = problem.decision_vars().len();
    let size = 1u128 << n;
    if n >= 64 || size > cap {
        return Err(CfxError::EnumerationCapExceeded { size, cap });
    }
    let mut out = Vec::new();
    for bits in 0..size as u64 {
        let a: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        let mut p = problem.clone();
        let mut clash = false;
        for (v, &b) in a.iter().enumerate() {
            clash |= p.fix(v, b).is_err();
        }
        if clash {
            continue;
        }
        p.set_objective(crate::encoder::Objective::zero(), crate::encoder::Sense::Minimize);
        let sol = solve(&p, &SolverConfig::default());
        match sol.status {
            SolveStatus::Optimal => out.push(a),
            SolveStatus::Infeasible => {}
            SolveStatus::CapExceeded => {
                warn!("feasibility check hit the node cap");
                return Err(CfxError::CapExceeded("feasibility check".into()));
            }
        }
    }
    Ok(out)
}
