//! Simplified honest causal forest.
//!
//! Each tree splits a subsample in two: one half drives the split search,
//! the other supplies the leaf effect estimates, so no observation can
//! both shape and fill a leaf. Splits greedily maximize the treatment
//! effect heterogeneity n_L * n_R * (tau_L - tau_R)^2.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CfNode {
    pub split_feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Depth of the node itself; the split it hosts sits at depth + 1.
    pub depth: usize,
    /// Leaf effect from the estimation half (arm-mean difference).
    pub tau: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

impl CfNode {
    pub fn is_leaf(&self) -> bool {
        self.split_feature.is_none()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CausalTree {
    pub nodes: Vec<CfNode>,
}

impl CausalTree {
    fn leaf_for(&self, features: &Matrix, row: usize) -> &CfNode {
        let mut idx = 0;
        loop {
            let node = &self.nodes[idx];
            match node.split_feature {
                None => return node,
                Some(f) => {
                    idx = if features.get(row, f) < node.threshold { node.left } else { node.right }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CfParams {
    pub num_trees: usize,
    pub min_per_arm: usize,
    pub max_depth: usize,
    /// Features tried per split; None means ceil(sqrt(p)).
    pub mtry: Option<usize>,
    pub subsample: f64,
    /// Share of each subsample reserved for leaf estimation.
    pub honesty: f64,
}

impl Default for CfParams {
    fn default() -> Self {
        CfParams {
            num_trees: 500,
            min_per_arm: 5,
            max_depth: 8,
            mtry: None,
            subsample: 0.5,
            honesty: 0.5,
        }
    }
}

impl CfParams {
    fn validate(&self) -> Result<()> {
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("subsample must be in (0,1]".into()));
        }
        if !(self.honesty > 0.0 && self.honesty < 1.0) {
            return Err(Error::Config("honesty fraction must be in (0,1)".into()));
        }
        if self.min_per_arm == 0 {
            return Err(Error::Config("min_per_arm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CausalForest {
    pub trees: Vec<CausalTree>,
    pub params: CfParams,
    pub feature_count: usize,
}

pub fn fit_causal_forest(ds: &Dataset, params: &CfParams, seed: u64) -> Result<CausalForest> {
    params.validate()?;
    let treated = ds.treated_rows();
    let controls = ds.control_rows();
    if treated.len() < params.min_per_arm || controls.len() < params.min_per_arm {
        return Err(Error::Fit(format!(
            "cannot satisfy min_per_arm={} at the root: arms have {} and {} rows",
            params.min_per_arm,
            treated.len(),
            controls.len()
        )));
    }
    let mtry = params.mtry.unwrap_or_else(|| (ds.p() as f64).sqrt().ceil() as usize).clamp(1, ds.p());

    let mut trees = Vec::with_capacity(params.num_trees);
    for t in 0..params.num_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        if let Some(tree) = grow_tree(ds, params, mtry, &mut rng) {
            trees.push(tree);
        }
    }
    if params.num_trees > 0 && trees.is_empty() {
        return Err(Error::Fit("no tree could satisfy min_per_arm on its estimation half".into()));
    }
    Ok(CausalForest { trees, params: *params, feature_count: ds.p() })
}

struct Grower<'a> {
    ds: &'a Dataset,
    params: &'a CfParams,
    mtry: usize,
    nodes: Vec<CfNode>,
}

fn grow_tree(ds: &Dataset, params: &CfParams, mtry: usize, rng: &mut ChaCha8Rng) -> Option<CausalTree> {
    let n = ds.n();
    let m = ((n as f64 * params.subsample).round() as usize).clamp(2, n);
    let subsample: Vec<usize> = rand::seq::index::sample(rng, n, m).into_vec();
    let (split_rows, est_rows) = divide_subsample(&subsample, params.honesty, rng);

    let mut grower = Grower { ds, params, mtry, nodes: Vec::new() };
    grower.nodes.push(blank_node(0));
    grower.grow(0, split_rows, rng);
    let mut nodes = grower.nodes;
    let ok = finalize(&mut nodes, 0, &est_rows, ds, params.min_per_arm);
    if !ok {
        return None;
    }
    Some(CausalTree { nodes: compact(&nodes) })
}

/// Drop nodes orphaned by collapses, remapping child indices.
fn compact(nodes: &[CfNode]) -> Vec<CfNode> {
    fn walk(nodes: &[CfNode], idx: usize, out: &mut Vec<CfNode>) -> usize {
        let new_idx = out.len();
        out.push(nodes[idx].clone());
        if nodes[idx].split_feature.is_some() {
            let l = walk(nodes, nodes[idx].left, out);
            let r = walk(nodes, nodes[idx].right, out);
            out[new_idx].left = l;
            out[new_idx].right = r;
        } else {
            out[new_idx].left = 0;
            out[new_idx].right = 0;
        }
        new_idx
    }
    let mut out = Vec::with_capacity(nodes.len());
    walk(nodes, 0, &mut out);
    out
}

/// Shuffle and cut the subsample so the two halves are disjoint and cover
/// it: the estimation share is round(len * honesty).
fn divide_subsample(subsample: &[usize], honesty: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut rows = subsample.to_vec();
    rows.shuffle(rng);
    let n_est = ((rows.len() as f64 * honesty).round() as usize).clamp(1, rows.len() - 1);
    let split = rows.split_off(n_est);
    (split, rows)
}

fn blank_node(depth: usize) -> CfNode {
    CfNode {
        split_feature: None,
        threshold: 0.0,
        left: 0,
        right: 0,
        depth,
        tau: 0.0,
        n_treated: 0,
        n_control: 0,
    }
}

struct ArmSums {
    n1: usize,
    n0: usize,
    s1: f64,
    s0: f64,
}

impl ArmSums {
    fn tau(&self) -> f64 {
        self.s1 / self.n1 as f64 - self.s0 / self.n0 as f64
    }
}

impl Grower<'_> {
    fn arm_sums(&self, rows: &[usize]) -> ArmSums {
        let mut acc = ArmSums { n1: 0, n0: 0, s1: 0.0, s0: 0.0 };
        for &i in rows {
            if self.ds.treatment[i] == 1 {
                acc.n1 += 1;
                acc.s1 += self.ds.outcome[i];
            } else {
                acc.n0 += 1;
                acc.s0 += self.ds.outcome[i];
            }
        }
        acc
    }

    fn grow(&mut self, node_idx: usize, rows: Vec<usize>, rng: &mut ChaCha8Rng) {
        let depth = self.nodes[node_idx].depth;
        if depth >= self.params.max_depth {
            return;
        }
        let total = self.arm_sums(&rows);
        if total.n1 < 2 * self.params.min_per_arm || total.n0 < 2 * self.params.min_per_arm {
            return;
        }

        let mut candidates: Vec<usize> =
            rand::seq::index::sample(rng, self.ds.p(), self.mtry).into_vec();
        candidates.sort_unstable();

        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.clone();
        for &f in &candidates {
            order.sort_by(|&a, &b| {
                self.ds
                    .features
                    .get(a, f)
                    .partial_cmp(&self.ds.features.get(b, f))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut left = ArmSums { n1: 0, n0: 0, s1: 0.0, s0: 0.0 };
            for k in 0..order.len() - 1 {
                let i = order[k];
                if self.ds.treatment[i] == 1 {
                    left.n1 += 1;
                    left.s1 += self.ds.outcome[i];
                } else {
                    left.n0 += 1;
                    left.s0 += self.ds.outcome[i];
                }
                let v = self.ds.features.get(i, f);
                let next = self.ds.features.get(order[k + 1], f);
                if next <= v {
                    continue;
                }
                let right = ArmSums {
                    n1: total.n1 - left.n1,
                    n0: total.n0 - left.n0,
                    s1: total.s1 - left.s1,
                    s0: total.s0 - left.s0,
                };
                if left.n1 < self.params.min_per_arm
                    || left.n0 < self.params.min_per_arm
                    || right.n1 < self.params.min_per_arm
                    || right.n0 < self.params.min_per_arm
                {
                    continue;
                }
                let nl = (left.n1 + left.n0) as f64;
                let nr = (right.n1 + right.n0) as f64;
                let d = left.tau() - right.tau();
                let score = nl * nr * d * d;
                if best.map_or(true, |(s, _, _)| score > s) {
                    best = Some((score, f, 0.5 * (v + next)));
                }
            }
        }

        let Some((_, feature, threshold)) = best else { return };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.ds.features.get(i, feature) < threshold);

        let left_idx = self.nodes.len();
        self.nodes.push(blank_node(depth + 1));
        let right_idx = self.nodes.len();
        self.nodes.push(blank_node(depth + 1));
        {
            let node = &mut self.nodes[node_idx];
            node.split_feature = Some(feature);
            node.threshold = threshold;
            node.left = left_idx;
            node.right = right_idx;
        }
        self.grow(left_idx, left_rows, rng);
        self.grow(right_idx, right_rows, rng);
    }
}

/// Fill leaves from the estimation half, collapsing any subtree whose
/// leaves cannot muster min_per_arm estimation rows in both arms.
/// Returns false when even the root fails, i.e. the tree is unusable.
fn finalize(
    nodes: &mut Vec<CfNode>,
    idx: usize,
    est_rows: &[usize],
    ds: &Dataset,
    min_per_arm: usize,
) -> bool {
    if let Some(f) = nodes[idx].split_feature {
        let threshold = nodes[idx].threshold;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            est_rows.iter().partition(|&&i| ds.features.get(i, f) < threshold);
        let (l, r) = (nodes[idx].left, nodes[idx].right);
        let ok = finalize(nodes, l, &left_rows, ds, min_per_arm)
            && finalize(nodes, r, &right_rows, ds, min_per_arm);
        if ok {
            return true;
        }
        nodes[idx].split_feature = None;
    }
    let (mut n1, mut n0, mut s1, mut s0) = (0usize, 0usize, 0.0f64, 0.0f64);
    for &i in est_rows {
        if ds.treatment[i] == 1 {
            n1 += 1;
            s1 += ds.outcome[i];
        } else {
            n0 += 1;
            s0 += ds.outcome[i];
        }
    }
    let node = &mut nodes[idx];
    node.n_treated = n1;
    node.n_control = n0;
    if n1 < min_per_arm || n0 < min_per_arm {
        return false;
    }
    node.tau = s1 / n1 as f64 - s0 / n0 as f64;
    true
}

pub fn predict_cf(forest: &CausalForest, features: &Matrix) -> Result<Vec<f64>> {
    if features.n_cols() != forest.feature_count {
        return Err(Error::Fit(format!(
            "forest expects {} feature columns, got {}",
            forest.feature_count,
            features.n_cols()
        )));
    }
    let mut out = Vec::with_capacity(features.n_rows());
    for i in 0..features.n_rows() {
        let mut sum = 0.0;
        let mut votes = 0usize;
        for tree in &forest.trees {
            let leaf = tree.leaf_for(features, i);
            if leaf.n_treated > 0 && leaf.n_control > 0 {
                sum += leaf.tau;
                votes += 1;
            }
        }
        if votes == 0 {
            return Err(Error::Fit("no tree could score the query row".into()));
        }
        out.push(sum / votes as f64);
    }
    Ok(out)
}

/// Split-count importance with depth decay: a split at depth d (root
/// split = 1) adds decay^(-d), counted down to max_depth_counted, then
/// normalized to sum 1. No splits at all gives the zero vector.
pub fn cf_vip(forest: &CausalForest, max_depth_counted: usize, decay: f64) -> Vec<f64> {
    let mut scores = vec![0.0; forest.feature_count];
    for tree in &forest.trees {
        for node in &tree.nodes {
            if let Some(f) = node.split_feature {
                let split_depth = node.depth + 1;
                if split_depth <= max_depth_counted {
                    scores[f] += decay.powi(-(split_depth as i32));
                }
            }
        }
    }
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        for s in &mut scores {
            *s /= total;
        }
    }
    scores
}

pub const CF_VIP_DEPTH: usize = 4;
pub const CF_VIP_DECAY: f64 = 2.0;

/// Features split on anywhere in the forest; used to audit that untouched
/// covariates cannot influence predictions.
pub fn split_features(forest: &CausalForest) -> BTreeSet<usize> {
    forest
        .trees
        .iter()
        .flat_map(|t| t.nodes.iter().filter_map(|n| n.split_feature))
        .collect()
}
