//! Cross-checks the solver against exhaustive enumeration, for CI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use cfx_core::api::{classify, ErrorClass};
use cfx_core::format::instance_from_json;
use cfx_core::oracle::{brute_counterfactual, brute_robustness, find_invalid_point, DEFAULT_SPACE_CAP};
use cfx_core::synth::{random_model, TreeShape};
use cfx_core::weights::uniform_weights;
use cfx_core::{CfxError, ExplainOptions, Explainer, IndicatorRegistry, Instance, Model, Target, WeightVector};

/// Random models are redrawn until their registry has at most this many
/// indicators, which keeps enumeration fast.
const MAX_INDICATORS: usize = 22;

#[derive(Debug, Default)]
pub struct Report {
    pub checked: usize,
    pub agreed_infeasible: usize,
    pub mismatches: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> Json {
        json!({
            "checked": self.checked,
            "agreed_infeasible": self.agreed_infeasible,
            "mismatches": self.mismatches,
            "ok": self.mismatches.is_empty(),
        })
    }

    fn absorb(&mut self, other: Report) {
        self.checked += other.checked;
        self.agreed_infeasible += other.agreed_infeasible;
        self.mismatches.extend(other.mismatches);
    }
}

/// Counterfactual and robustness on one instance; `seed` drives the
/// validity sampling.
fn check_one(model: &Model, x: &Instance, w: &WeightVector, seed: u64, label: &str) -> Result<Report, CfxError> {
    let mut report = Report::default();
    let explainer = Explainer::new(model.clone())?;
    let registry = explainer.registry();
    let opts = ExplainOptions::default();
    let target = model.evaluate(x).flip();

    let oracle = brute_counterfactual(model, registry, x, w, target, &[], DEFAULT_SPACE_CAP);
    match (oracle, explainer.counterfactual(x, w, Target::Auto, &[], &opts)) {
        (Ok(b), Ok(cf)) => {
            report.checked += 1;
            if cf.objective != b.objective {
                report.mismatches.push(format!("{label}: objective {} but enumeration gives {}", cf.objective, b.objective));
            } else if let Some(p) = find_invalid_point(model, &cf, x, &mut ChaCha8Rng::seed_from_u64(seed), 100) {
                report.mismatches.push(format!("{label}: sampled point {:?} is outside the target class", p.values()));
            }
        }
        (Err(_), Err(e)) if classify(&e) == ErrorClass::Infeasible => report.agreed_infeasible += 1,
        (Err(e), _) | (_, Err(e)) if classify(&e) == ErrorClass::CapExceeded => return Err(e),
        (b, s) => report.mismatches.push(format!(
            "{label}: enumeration {:?} vs solver {:?}",
            b.map(|b| b.objective),
            s.map(|s| s.objective)
        )),
    }

    let oracle = brute_robustness(model, registry, x, DEFAULT_SPACE_CAP);
    match (oracle, explainer.robustness(x, &opts)) {
        (Ok(b), Ok(r)) => {
            report.checked += 1;
            if r.value != b {
                report.mismatches.push(format!("{label}: robustness {} but enumeration gives {b}", r.value));
            }
        }
        (Err(_), Err(e)) if classify(&e) == ErrorClass::Infeasible => report.agreed_infeasible += 1,
        (b, s) => report.mismatches.push(format!("{label}: robustness {b:?} vs solver {:?}", s.map(|r| r.value))),
    }
    Ok(report)
}

/// Checks one model on one instance with uniform weights.
pub fn check_instance(model: &Model, instance: &Json) -> Result<Report, CfxError> {
    let x = instance_from_json(model.features(), instance)?;
    let w = uniform_weights(&IndicatorRegistry::for_model(model));
    check_one(model, &x, &w, 0, "instance")
}

/// Checks `trials` random trees, forests and naive Bayes models each, with
/// random weights in quarter steps.
pub fn check_random(trials: usize, seed: u64) -> Result<Report, CfxError> {
    let mut report = Report::default();
    for kind in ["tree", "forest", "naive_bayes"] {
        for trial in 0..trials as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ trial);
            let (model, space) = loop {
                let shape = TreeShape {
                    features: rng.random_range(2..=4),
                    categorical: rng.random_range(0..=1),
                    max_depth: 4,
                    ..TreeShape::default()
                };
                let trees = rng.random_range(1..=5);
                let drawn = random_model(&mut rng, kind, &shape, trees);
                if IndicatorRegistry::for_model(&drawn.0).len() <= MAX_INDICATORS {
                    break drawn;
                }
            };
            let x = space.random_instance(&mut rng);
            let n = IndicatorRegistry::for_model(&model).len();
            let w = WeightVector::new((0..n).map(|_| rng.random_range(1..=12) as f64 / 4.0).collect())?;
            let label = format!("{kind} trial {trial}");
            report.absorb(check_one(&model, &x, &w, seed ^ trial, &label)?);
        }
    }
    Ok(report)
}
