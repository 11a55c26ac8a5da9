//! Brute-force Shapley oracle and the reference value functions it is
//! evaluated on. Everything here favors obvious correctness over speed:
//! these are the yardsticks the fast engines are tested against.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::gbt::{Loss, RegressionTree, TreeEnsemble, TreeNode};

/// Exact Shapley values of an arbitrary coalition game by full
/// enumeration. Coalitions are bitmasks: bit j set means feature j is
/// present. Capped at p <= 16 (2^p evaluations).
pub fn brute_force_shap<F: FnMut(u128) -> f64>(mut value_fn: F, p: usize) -> Result<Vec<f64>> {
    if p > 16 {
        return Err(Error::Shap(format!("brute force capped at 16 features, got {p}")));
    }
    let full: u128 = (1u128 << p) - 1;
    let mut values = vec![0.0; 1 << p];
    for mask in 0..=full {
        values[mask as usize] = value_fn(mask);
    }

    // weight[s] = s! (p-s-1)! / p! for a coalition of size s not containing j.
    let mut fact = vec![1.0f64; p + 1];
    for i in 1..=p {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..p).map(|s| fact[s] * fact[p - 1 - s] / fact[p]).collect();

    let mut phi = vec![0.0; p];
    for mask in 0..=full {
        for j in 0..p {
            if mask & (1 << j) == 0 {
                let s = mask.count_ones() as usize;
                let with_j = mask | (1 << j);
                phi[j] += weight[s] * (values[with_j as usize] - values[mask as usize]);
            }
        }
    }
    Ok(phi)
}

/// Path-dependent conditional expectation of a single tree: coalition
/// features follow the instance; absent features descend both children
/// weighted by cover.
pub fn tree_cover_value(tree: &RegressionTree, x: &[f64], mask: u128) -> f64 {
    fn rec(nodes: &[TreeNode], at: usize, x: &[f64], mask: u128) -> f64 {
        let node = &nodes[at];
        match node.split_feature {
            None => node.leaf_value,
            Some(j) => {
                if mask & (1 << j) != 0 {
                    let next = if x[j] < node.threshold { node.left } else { node.right };
                    rec(nodes, next, x, mask)
                } else {
                    let (l, r) = (&nodes[node.left], &nodes[node.right]);
                    let total = l.cover + r.cover;
                    (l.cover * rec(nodes, node.left, x, mask)
                        + r.cover * rec(nodes, node.right, x, mask))
                        / total
                }
            }
        }
    }
    rec(&tree.nodes, 0, x, mask)
}

/// Cover-conditional value of the whole ensemble's margin.
pub fn ensemble_cover_value(ensemble: &TreeEnsemble, x: &[f64], mask: u128) -> f64 {
    ensemble.base_score
        + ensemble.learning_rate
            * ensemble.trees.iter().map(|t| tree_cover_value(t, x, mask)).sum::<f64>()
}

/// Marginal-expectation value function: absent features are replaced by
/// every background row in turn and the predictions averaged.
pub fn marginal_value<F>(predict_fn: &F, background: &Matrix, x: &[f64], mask: u128) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    let m = background.n_rows();
    let p = background.n_cols();
    let mut synth = Matrix::zeros(m, p);
    for j in 0..p {
        let dst = synth.col_mut(j);
        if mask & (1 << j) != 0 {
            dst.iter_mut().for_each(|v| *v = x[j]);
        } else {
            dst.copy_from_slice(background.col(j));
        }
    }
    let preds = predict_fn(&synth)?;
    Ok(preds.iter().sum::<f64>() / m as f64)
}

/// Random tree generator for oracle comparisons: well-formed covers
/// (parent = left + right), random features/thresholds/leaf values.
pub fn random_tree(p: usize, max_depth: usize, rng: &mut ChaCha8Rng) -> RegressionTree {
    let norm = Normal::new(0.0, 1.0).unwrap();
    let mut nodes = vec![TreeNode {
        split_feature: None,
        threshold: 0.0,
        left: 0,
        right: 0,
        leaf_value: 0.0,
        cover: 64.0,
        gain: 0.0,
    }];
    fn grow(
        nodes: &mut Vec<TreeNode>,
        at: usize,
        depth: usize,
        max_depth: usize,
        p: usize,
        rng: &mut ChaCha8Rng,
        norm: &Normal<f64>,
    ) {
        let cover = nodes[at].cover;
        let split_here = depth < max_depth && cover >= 2.0 && rng.gen_bool(0.8);
        if !split_here {
            nodes[at].leaf_value = norm.sample(rng);
            return;
        }
        let frac = rng.gen_range(0.2..0.8);
        let left_cover = (cover * frac).round().clamp(1.0, cover - 1.0);
        let right_cover = cover - left_cover;
        let left = nodes.len();
        let right = left + 1;
        for c in [left_cover, right_cover] {
            nodes.push(TreeNode {
                split_feature: None,
                threshold: 0.0,
                left: 0,
                right: 0,
                leaf_value: 0.0,
                cover: c,
                gain: 0.0,
            });
        }
        let node = &mut nodes[at];
        node.split_feature = Some(rng.gen_range(0..p));
        node.threshold = rng.gen_range(-1.0..1.0);
        node.left = left;
        node.right = right;
        node.gain = 1.0;
        grow(nodes, left, depth + 1, max_depth, p, rng, norm);
        grow(nodes, right, depth + 1, max_depth, p, rng, norm);
    }
    grow(&mut nodes, 0, 0, max_depth, p, rng, &norm);
    RegressionTree { nodes }
}

pub fn random_ensemble(
    p: usize,
    n_trees: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> TreeEnsemble {
    let trees = (0..n_trees).map(|_| random_tree(p, max_depth, rng)).collect();
    TreeEnsemble {
        trees,
        base_score: rng.gen_range(-1.0..1.0),
        learning_rate: rng.gen_range(0.05..1.0),
        loss: Loss::Squared,
        feature_count: p,
    }
}
