//! Seeded random models and instances for property tests, the oracle
//! harness and benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::models::{
    Class, DecisionTree, Feature, Instance, Model, NaiveBayes, Predicate, RandomForest, TreeNode, Value,
};

/// Shape of generated trees.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeShape {
    pub features: usize,
    /// How many of the features (the last ones) are categorical.
    pub categorical: usize,
    pub max_categories: usize,
    pub max_depth: usize,
    /// Candidate thresholds per continuous feature.
    pub thresholds_per_feature: usize,
    /// Probability that a non-root node above the depth limit splits.
    pub split_probability: f64,
}

impl Default for TreeShape {
    fn default() -> Self {
        TreeShape {
            features: 4,
            categorical: 0,
            max_categories: 3,
            max_depth: 5,
            thresholds_per_feature: 3,
            split_probability: 0.75,
        }
    }
}

/// Feature declarations plus a threshold pool per continuous feature.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpace {
    pub features: Vec<Feature>,
    pub pools: Vec<Vec<f64>>,
}

impl FeatureSpace {
    pub fn random<R: Rng>(rng: &mut R, shape: &TreeShape) -> Self {
        assert!(shape.features >= 1 && shape.categorical <= shape.features);
        let continuous = shape.features - shape.categorical;
        let mut features = Vec::with_capacity(shape.features);
        let mut pools = Vec::with_capacity(shape.features);
        for i in 0..shape.features {
            if i < continuous {
                features.push(Feature::continuous(format!("x{i}")));
                let mut pool: Vec<f64> = (0..40).map(|v| v as f64 / 2.0).collect::<Vec<_>>()
                    .choose_multiple(rng, shape.thresholds_per_feature.max(1))
                    .copied()
                    .collect();
                pool.sort_by(f64::total_cmp);
                pools.push(pool);
            } else {
                let k = rng.random_range(2..=shape.max_categories.max(2));
                features.push(Feature::categorical(format!("c{i}"), (0..k).map(|c| format!("v{c}"))));
                pools.push(Vec::new());
            }
        }
        FeatureSpace { features, pools }
    }

    /// A point drawn uniformly around the threshold range of each feature.
    pub fn random_instance<R: Rng>(&self, rng: &mut R) -> Instance {
        let values = self
            .features
            .iter()
            .zip(&self.pools)
            .map(|(f, pool)| {
                if f.is_continuous() {
                    let lo = pool.first().copied().unwrap_or(0.0) - 2.0;
                    let hi = pool.last().copied().unwrap_or(0.0) + 2.0;
                    Value::Real(rng.random_range(lo..hi))
                } else {
                    Value::Category(rng.random_range(0..f.categories().len()))
                }
            })
            .collect();
        Instance::new(&self.features, values).expect("generated values match their features")
    }

    fn random_predicate<R: Rng>(&self, rng: &mut R) -> Predicate {
        let f = rng.random_range(0..self.features.len());
        if self.features[f].is_continuous() {
            Predicate::le(f, *self.pools[f].choose(rng).expect("nonempty pool"))
        } else {
            Predicate::eq(f, rng.random_range(0..self.features[f].categories().len()))
        }
    }

    fn random_node<R: Rng>(&self, rng: &mut R, depth: usize, shape: &TreeShape) -> TreeNode {
        let split = depth == 0 || (depth < shape.max_depth && rng.random_bool(shape.split_probability));
        if !split {
            return TreeNode::leaf(rng.random_range(0..2));
        }
        let p = self.random_predicate(rng);
        TreeNode::split(p, self.random_node(rng, depth + 1, shape), self.random_node(rng, depth + 1, shape))
    }

    /// A random tree that outputs both classes on some path.
    pub fn random_tree_node<R: Rng>(&self, rng: &mut R, shape: &TreeShape) -> TreeNode {
        loop {
            let t = self.random_node(rng, 0, shape);
            let classes: Vec<Class> = crate::models::enumerate_paths(&t).into_iter().map(|(_, c)| c).collect();
            if classes.contains(&Class::Zero) && classes.contains(&Class::One) {
                return t;
            }
        }
    }
}

pub fn random_tree<R: Rng>(rng: &mut R, shape: &TreeShape) -> (DecisionTree, FeatureSpace) {
    let space = FeatureSpace::random(rng, shape);
    let root = space.random_tree_node(rng, shape);
    (DecisionTree::new(space.features.clone(), root), space)
}

pub fn random_forest<R: Rng>(rng: &mut R, shape: &TreeShape, trees: usize) -> (RandomForest, FeatureSpace) {
    assert!(trees >= 1);
    let space = FeatureSpace::random(rng, shape);
    let trees = (0..trees).map(|_| space.random_tree_node(rng, shape)).collect();
    (RandomForest::new(space.features.clone(), trees), space)
}

/// Random naive Bayes with `features` categorical features of 2 to
/// `max_categories` states each. Probabilities stay away from 0.
pub fn random_naive_bayes<R: Rng>(rng: &mut R, features: usize, max_categories: usize) -> (NaiveBayes, FeatureSpace) {
    let shape = TreeShape { features, categorical: features, max_categories, ..TreeShape::default() };
    let space = FeatureSpace::random(rng, &shape);
    let mut distribution = |k: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    };
    let prior = distribution(2);
    let cpt = space
        .features
        .iter()
        .map(|f| {
            let k = f.categories().len();
            let p0 = distribution(k);
            let p1 = distribution(k);
            p0.into_iter().zip(p1).map(|(a, b)| [a, b]).collect()
        })
        .collect();
    (NaiveBayes::new(space.features.clone(), [prior[0], prior[1]], cpt), space)
}

/// A model of the requested kind; `size` is the tree count for forests.
pub fn random_model<R: Rng>(rng: &mut R, kind: &str, shape: &TreeShape, size: usize) -> (Model, FeatureSpace) {
    match kind {
        "tree" => {
            let (t, s) = random_tree(rng, shape);
            (Model::Tree(t), s)
        }
        "forest" => {
            let (f, s) = random_forest(rng, shape, size);
            (Model::Forest(f), s)
        }
        "naive_bayes" => {
            let (nb, s) = random_naive_bayes(rng, shape.features, shape.max_categories);
            (Model::NaiveBayes(nb), s)
        }
        other => panic!("unknown model kind {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generation_is_seed_deterministic() {
        let shape = TreeShape::default();
        let a = random_forest(&mut ChaCha8Rng::seed_from_u64(7), &shape, 3);
        let b = random_forest(&mut ChaCha8Rng::seed_from_u64(7), &shape, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn generated_models_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = TreeShape { categorical: 1, ..TreeShape::default() };
        for _ in 0..20 {
            let (t, space) = random_tree(&mut rng, &shape);
            Model::Tree(t).validate().unwrap();
            let _ = space.random_instance(&mut rng);
            let (nb, _) = random_naive_bayes(&mut rng, 5, 3);
            Model::NaiveBayes(nb).validate().unwrap();
        }
    }
}
