//! Exact path-dependent TreeSHAP, ported from the reference recursion of
//! the shap package (Lundberg et al., Algorithm 2). Runs in O(t·l·d^2)
//! per instance and reproduces the brute-force Shapley values of the
//! cover-conditional expectation game to machine precision.

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::gbt::TreeEnsemble;
use crate::shap::ShapMatrix;

#[derive(Clone, Debug)]
struct PathItem {
    feature_index: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

impl PathItem {
    fn empty() -> Self {
        PathItem { feature_index: None, zero_fraction: 0.0, one_fraction: 0.0, pweight: 0.0 }
    }
}

/// Shapley values of the ensemble's margin prediction for every row.
/// base_value is the cover-weighted leaf expectation plus base_score, so
/// base_value + sum(phi) reproduces each margin exactly.
pub fn tree_shap(ensemble: &TreeEnsemble, features: &Matrix) -> Result<ShapMatrix> {
    let p = ensemble.feature_count;
    if features.n_cols() != p {
        return Err(Error::Shap(format!(
            "ensemble expects {p} feature columns, got {}",
            features.n_cols()
        )));
    }
    for tree in &ensemble.trees {
        for node in &tree.nodes {
            if node.split_feature.is_some() {
                let child_sum = tree.nodes[node.left].cover + tree.nodes[node.right].cover;
                if !(node.cover.is_finite() && node.cover > 0.0 && child_sum > 0.0) {
                    return Err(Error::Shap("missing or degenerate cover metadata".into()));
                }
            }
        }
    }

    let n = features.n_rows();
    let base_value = ensemble.base_score
        + ensemble.learning_rate * ensemble.trees.iter().map(|t| t.expectation()).sum::<f64>();

    let deepest = ensemble.trees.iter().map(|t| t.max_depth()).max().unwrap_or(0) + 2;
    let mut scratch = vec![PathItem::empty(); deepest * (deepest + 1) / 2];

    let mut phi = Matrix::zeros(n, p);
    let mut x = vec![0.0; p];
    let mut row_phi = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            x[j] = features.get(i, j);
        }
        row_phi.iter_mut().for_each(|v| *v = 0.0);
        for tree in &ensemble.trees {
            Recursion {
                nodes: &tree.nodes,
                x: &x,
                scale: ensemble.learning_rate,
                phi: &mut row_phi,
            }
            .walk(0, &mut scratch, 0, 1.0, 1.0, None);
        }
        for j in 0..p {
            phi.set(i, j, row_phi[j]);
        }
    }

    let predictions = ensemble.predict_margin(features)?;
    Ok(ShapMatrix {
        phi,
        base_value,
        predictions,
        feature_names: (0..p).map(|j| format!("f{j}")).collect(),
        degenerate: false,
    })
}

struct Recursion<'a> {
    nodes: &'a [crate::gbt::TreeNode],
    x: &'a [f64],
    scale: f64,
    phi: &'a mut [f64],
}

impl Recursion<'_> {
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &mut self,
        node_index: usize,
        unique_path: &mut [PathItem],
        unique_depth: usize,
        parent_zero_fraction: f64,
        parent_one_fraction: f64,
        parent_feature_index: Option<usize>,
    ) {
        extend_path(
            unique_path,
            unique_depth,
            parent_zero_fraction,
            parent_one_fraction,
            parent_feature_index,
        );
        let mut unique_depth = unique_depth;
        let node = &self.nodes[node_index];
        match node.split_feature {
            None => {
                for path_index in 1..=unique_depth {
                    let weight = unwound_path_sum(unique_path, unique_depth, path_index);
                    let item = &unique_path[path_index];
                    let contribution = weight * (item.one_fraction - item.zero_fraction);
                    self.phi[item.feature_index.unwrap()] +=
                        contribution * node.leaf_value * self.scale;
                }
            }
            Some(feature_index) => {
                let goes_left = self.x[feature_index] < node.threshold;
                let (hot, cold) =
                    if goes_left { (node.left, node.right) } else { (node.right, node.left) };
                let hot_zero_fraction = self.nodes[hot].cover / node.cover;
                let cold_zero_fraction = self.nodes[cold].cover / node.cover;
                let mut incoming_zero_fraction = 1.0;
                let mut incoming_one_fraction = 1.0;
                if let Some(path_index) = (1..=unique_depth)
                    .find(|&i| unique_path[i].feature_index == Some(feature_index))
                {
                    incoming_zero_fraction = unique_path[path_index].zero_fraction;
                    incoming_one_fraction = unique_path[path_index].one_fraction;
                    unwind_path(unique_path, unique_depth, path_index);
                    unique_depth -= 1;
                }
                let (parent_path, child_path) = unique_path.split_at_mut(unique_depth + 1);
                child_path[0..parent_path.len()].clone_from_slice(parent_path);
                self.walk(
                    hot,
                    child_path,
                    unique_depth + 1,
                    hot_zero_fraction * incoming_zero_fraction,
                    incoming_one_fraction,
                    Some(feature_index),
                );
                child_path[0..parent_path.len()].clone_from_slice(parent_path);
                self.walk(
                    cold,
                    child_path,
                    unique_depth + 1,
                    cold_zero_fraction * incoming_zero_fraction,
                    0.0,
                    Some(feature_index),
                );
            }
        }
    }
}

fn extend_path(
    unique_path: &mut [PathItem],
    unique_depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature_index: Option<usize>,
) {
    unique_path[unique_depth] = PathItem {
        feature_index,
        zero_fraction,
        one_fraction,
        pweight: if unique_depth == 0 { 1.0 } else { 0.0 },
    };
    if unique_depth == 0 {
        return;
    }
    for i in (0..unique_depth).rev() {
        unique_path[i + 1].pweight +=
            one_fraction * unique_path[i].pweight * (i + 1) as f64 / (unique_depth + 1) as f64;
        unique_path[i].pweight =
            zero_fraction * unique_path[i].pweight * (unique_depth - i) as f64
                / (unique_depth + 1) as f64;
    }
}

fn unwind_path(unique_path: &mut [PathItem], unique_depth: usize, path_index: usize) {
    let one_fraction = unique_path[path_index].one_fraction;
    let zero_fraction = unique_path[path_index].zero_fraction;
    let mut next_one_portion = unique_path[unique_depth].pweight;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = unique_path[i].pweight;
            unique_path[i].pweight =
                next_one_portion * (unique_depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one_portion = tmp
                - unique_path[i].pweight * zero_fraction * (unique_depth - i) as f64
                    / (unique_depth + 1) as f64;
        } else {
            unique_path[i].pweight = unique_path[i].pweight * (unique_depth + 1) as f64
                / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    for i in path_index..unique_depth {
        unique_path[i].feature_index = unique_path[i + 1].feature_index;
        unique_path[i].zero_fraction = unique_path[i + 1].zero_fraction;
        unique_path[i].one_fraction = unique_path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(unique_path: &[PathItem], unique_depth: usize, path_index: usize) -> f64 {
    let one_fraction = unique_path[path_index].one_fraction;
    let zero_fraction = unique_path[path_index].zero_fraction;
    let mut next_one_portion = unique_path[unique_depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..unique_depth).rev() {
            let tmp = next_one_portion / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one_portion =
                unique_path[i].pweight - tmp * zero_fraction * (unique_depth - i) as f64;
        }
    } else {
        for i in (0..unique_depth).rev() {
            total += unique_path[i].pweight / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    total * (unique_depth + 1) as f64
}
