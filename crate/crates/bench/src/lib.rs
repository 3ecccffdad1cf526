//! Fixed workloads shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cfx_core::synth::{random_forest, TreeShape};
use cfx_core::{Instance, Model};

/// A forest of `trees` trees of depth at most 6 over ten continuous
/// features, each drawing splits from a pool of `thresholds` cut points,
/// with a random factual instance.
pub fn forest_workload(seed: u64, trees: usize, thresholds: usize) -> (Model, Instance) {
    let shape = TreeShape {
        features: 10,
        categorical: 0,
        max_depth: 6,
        thresholds_per_feature: thresholds,
        split_probability: 0.9,
        ..TreeShape::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (forest, space) = random_forest(&mut rng, &shape, trees);
    let x = space.random_instance(&mut rng);
    (Model::Forest(forest), x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_are_deterministic() {
        let (a, x) = forest_workload(3, 5, 4);
        let (b, y) = forest_workload(3, 5, 4);
        assert_eq!((a, x), (b, y));
    }
}
