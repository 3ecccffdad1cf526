//! Small hand-built models used by tests, examples and the CLI docs.

use crate::models::{DecisionTree, Feature, Model, NaiveBayes, Predicate, RandomForest, TreeNode};

/// Two-feature tree: X1 <= 10 then X2 <= 50, else X2 <= 20; class 1 on
/// the true side of the second test.
pub fn fig1_model() -> Model {
    let features = vec![Feature::continuous("X1"), Feature::continuous("X2")];
    let root = TreeNode::split(
        Predicate::le(0, 10.0),
        TreeNode::split(Predicate::le(1, 50.0), TreeNode::leaf(1), TreeNode::leaf(0)),
        TreeNode::split(Predicate::le(1, 20.0), TreeNode::leaf(1), TreeNode::leaf(0)),
    );
    Model::Tree(DecisionTree::new(features, root))
}

/// Three-tree forest over X1..X3 with thresholds X1 {3, 5}, X2 {1, 2, 6},
/// X3 {2, 5, 10}.
pub fn section42_forest() -> Model {
    let features = vec![Feature::continuous("X1"), Feature::continuous("X2"), Feature::continuous("X3")];
    let t1 = TreeNode::split(
        Predicate::le(1, 1.0),
        TreeNode::split(Predicate::le(2, 2.0), TreeNode::leaf(1), TreeNode::leaf(0)),
        TreeNode::split(Predicate::le(2, 10.0), TreeNode::leaf(1), TreeNode::leaf(0)),
    );
    let t2 = TreeNode::split(
        Predicate::le(0, 5.0),
        TreeNode::split(Predicate::le(1, 2.0), TreeNode::leaf(1), TreeNode::leaf(0)),
        TreeNode::leaf(0),
    );
    let t3 = TreeNode::split(
        Predicate::le(0, 3.0),
        TreeNode::split(Predicate::le(2, 5.0), TreeNode::leaf(1), TreeNode::leaf(0)),
        TreeNode::split(Predicate::le(1, 6.0), TreeNode::leaf(0), TreeNode::leaf(1)),
    );
    Model::Forest(RandomForest::new(features, vec![t1, t2, t3]))
}

/// Class 0 only when a > 1 and b > 1, so leaving class 1 from (0, 0)
/// takes two flips.
pub fn and_tree_model() -> Model {
    let features = vec![Feature::continuous("a"), Feature::continuous("b")];
    let root = TreeNode::split(
        Predicate::le(0, 1.0),
        TreeNode::leaf(1),
        TreeNode::split(Predicate::le(1, 1.0), TreeNode::leaf(1), TreeNode::leaf(0)),
    );
    Model::Tree(DecisionTree::new(features, root))
}

/// `(x0 > 0.5) xor (x1 > 0.5)` over `n >= 2` continuous features; the
/// rest are never tested.
pub fn xor_tree_model(n: usize) -> Model {
    assert!(n >= 2);
    let features = (0..n).map(|i| Feature::continuous(format!("x{i}"))).collect();
    let root = TreeNode::split(
        Predicate::le(0, 0.5),
        TreeNode::split(Predicate::le(1, 0.5), TreeNode::leaf(0), TreeNode::leaf(1)),
        TreeNode::split(Predicate::le(1, 0.5), TreeNode::leaf(1), TreeNode::leaf(0)),
    );
    Model::Tree(DecisionTree::new(features, root))
}

/// Naive Bayes over `n` binary features where only X1 matters: the class
/// equals X1's category.
pub fn nb_first_feature_model(n: usize) -> Model {
    let features = (1..=n).map(|i| Feature::binary(format!("X{i}"))).collect();
    let mut cpt = vec![vec![[0.9, 0.1], [0.1, 0.9]]];
    cpt.extend((1..n).map(|_| vec![[0.5, 0.5], [0.5, 0.5]]));
    Model::NaiveBayes(NaiveBayes::new(features, [0.5, 0.5], cpt))
}

/// A voting-records shaped naive Bayes: sixteen yes/no votes, class 1 for
/// one party. The conditionals are made up but fixed.
pub fn voting_toy_nb() -> Model {
    let features: Vec<Feature> =
        (1..=16).map(|i| Feature::categorical(format!("vote{i}"), ["n", "y"])).collect();
    // P(y | class 0), P(y | class 1) per vote
    let yes: [(f64, f64); 16] = [
        (0.45, 0.20),
        (0.50, 0.48),
        (0.89, 0.13),
        (0.05, 0.99),
        (0.21, 0.95),
        (0.47, 0.90),
        (0.77, 0.24),
        (0.83, 0.15),
        (0.76, 0.11),
        (0.47, 0.56),
        (0.51, 0.13),
        (0.14, 0.87),
        (0.29, 0.86),
        (0.35, 0.98),
        (0.64, 0.09),
        (0.94, 0.66),
    ];
    let cpt = yes.iter().map(|&(y0, y1)| vec![[1.0 - y0, 1.0 - y1], [y0, y1]]).collect();
    Model::NaiveBayes(NaiveBayes::new(features, [0.61, 0.39], cpt))
}
