//! Gradient-boosted regression trees with exact greedy splits.
//!
//! Small-data engine: n is desk scale, so split search scans presorted
//! columns instead of histograms. Determinism is load-bearing — split ties
//! break toward the lowest feature index, then the lowest threshold, and
//! all accumulation orders are fixed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Squared,
    WeightedSquared,
    Logistic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeNode {
    /// None marks a leaf.
    pub split_feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub leaf_value: f64,
    /// Sum of hessians (instance weights for squared losses) reaching the node.
    pub cover: f64,
    /// Loss reduction of the split; 0 for leaves.
    pub gain: f64,
}

impl TreeNode {
    fn leaf(value: f64, cover: f64) -> Self {
        TreeNode {
            split_feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            leaf_value: value,
            cover,
            gain: 0.0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split_feature.is_none()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    /// Rows with feature < threshold go left; ties go right.
    pub fn predict_row(&self, features: &Matrix, row: usize) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            match node.split_feature {
                None => return node.leaf_value,
                Some(j) => {
                    at = if features.get(row, j) < node.threshold { node.left } else { node.right };
                }
            }
        }
    }

    pub fn max_depth(&self) -> usize {
        fn depth(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at].split_feature {
                None => 0,
                Some(_) => 1 + depth(nodes, nodes[at].left).max(depth(nodes, nodes[at].right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            depth(&self.nodes, 0)
        }
    }

    /// Cover-weighted expectation of the leaf values (the value of the
    /// empty-coalition game for this tree).
    pub fn expectation(&self) -> f64 {
        fn rec(nodes: &[TreeNode], at: usize) -> f64 {
            let node = &nodes[at];
            match node.split_feature {
                None => node.leaf_value,
                Some(_) => {
                    let (l, r) = (&nodes[node.left], &nodes[node.right]);
                    let total = l.cover + r.cover;
                    (l.cover * rec(nodes, node.left) + r.cover * rec(nodes, node.right)) / total
                }
            }
        }
        rec(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<RegressionTree>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub loss: Loss,
    pub feature_count: usize,
}

impl TreeEnsemble {
    /// Raw additive score: base_score + eta * sum of tree outputs.
    pub fn predict_margin(&self, features: &Matrix) -> Result<Vec<f64>> {
        if features.n_cols() != self.feature_count {
            return Err(Error::Data(format!(
                "ensemble expects {} feature columns, got {}",
                self.feature_count,
                features.n_cols()
            )));
        }
        let mut out = vec![self.base_score; features.n_rows()];
        for tree in &self.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.learning_rate * tree.predict_row(features, i);
            }
        }
        Ok(out)
    }

    /// Margin for squared losses, probability for logistic.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        let mut out = self.predict_margin(features)?;
        if self.loss == Loss::Logistic {
            for o in out.iter_mut() {
                *o = sigmoid(*o);
            }
        }
        Ok(out)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub eta: f64,
    pub gamma: f64,
    pub max_depth: usize,
    pub colsample: f64,
    pub subsample: f64,
    pub min_child_weight: f64,
    pub n_rounds: usize,
    pub lambda: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            eta: 0.1,
            gamma: 0.0,
            max_depth: 3,
            colsample: 1.0,
            subsample: 1.0,
            min_child_weight: 1.0,
            n_rounds: 200,
            lambda: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!("eta must be in (0,1], got {}", self.eta)));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config("gamma must be nonnegative".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        for (name, v) in [("colsample", self.colsample), ("subsample", self.subsample)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0,1], got {v}")));
            }
        }
        if self.min_child_weight < 0.0 {
            return Err(Error::Config("min_child_weight must be nonnegative".into()));
        }
        if self.n_rounds < 1 {
            return Err(Error::Config("n_rounds must be at least 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Full tuning grid: eta x depth x subsample x colsample x gamma x
/// min_child_weight. Expensive; the benchmark default is `compact_grid`.
pub fn default_grid(n_rounds: usize) -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    for &eta in &[0.05, 0.1, 0.3] {
        for &max_depth in &[2usize, 3, 4] {
            for &subsample in &[0.8, 1.0] {
                for &colsample in &[0.8, 1.0] {
                    for &gamma in &[0.0, 1.0] {
                        for &min_child_weight in &[1.0, 5.0] {
                            grid.push(Hyperparams {
                                eta,
                                gamma,
                                max_depth,
                                colsample,
                                subsample,
                                min_child_weight,
                                n_rounds,
                                lambda: 1.0,
                            });
                        }
                    }
                }
            }
        }
    }
    grid
}

/// Four-point grid over the dimensions that matter most at desk scale.
pub fn compact_grid(n_rounds: usize) -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    for &eta in &[0.1, 0.3] {
        for &max_depth in &[2usize, 3] {
            grid.push(Hyperparams {
                eta,
                gamma: 0.0,
                max_depth,
                colsample: 1.0,
                subsample: 1.0,
                min_child_weight: 5.0,
                n_rounds,
                lambda: 1.0,
            });
        }
    }
    grid
}

/// `compact_grid(200)` extended with heavy-averaging candidates: small
/// eta, large leaves, mild row and column subsampling. Meant for targets
/// whose noise dwarfs the signal, where the compact entries chase noise.
/// Leaf weight stays at or below 50 so that sparsely weighted fits (the
/// R final stage weights sum to well under n) can still split.
pub fn noisy_target_grid() -> Vec<Hyperparams> {
    let mut grid = compact_grid(200);
    for (eta, max_depth, min_child_weight, n_rounds) in
        [(0.05, 2, 25.0, 600), (0.1, 2, 50.0, 400), (0.05, 3, 25.0, 600), (0.1, 3, 50.0, 400)]
    {
        grid.push(Hyperparams {
            eta,
            max_depth,
            min_child_weight,
            n_rounds,
            colsample: 0.8,
            subsample: 0.8,
            ..Hyperparams::default()
        });
    }
    grid
}

fn validate_training_inputs(
    features: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = features.n_rows();
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 rows, got {n}")));
    }
    if targets.len() != n {
        return Err(Error::Fit("targets length mismatch".into()));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Fit("non-finite target".into()));
    }
    for j in 0..features.n_cols() {
        if features.col(j).iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in feature column {j}")));
        }
    }
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Fit("weights length mismatch".into()));
            }
            if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::Fit("weights must be finite and nonnegative".into()));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Fit("zero total weight".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    Ok(w)
}

fn base_score_for(loss: Loss, targets: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    let mean = targets.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / wsum;
    match loss {
        Loss::Squared | Loss::WeightedSquared => mean,
        Loss::Logistic => {
            let q = mean.clamp(1e-6, 1.0 - 1e-6);
            (q / (1.0 - q)).ln()
        }
    }
}

fn grad_hess(loss: Loss, margin: f64, y: f64, w: f64) -> (f64, f64) {
    match loss {
        Loss::Squared | Loss::WeightedSquared => (w * (margin - y), w),
        Loss::Logistic => {
            let q = sigmoid(margin);
            (w * (q - y), w * q * (1.0 - q))
        }
    }
}

/// Mean per-weight loss, used for validation tracking and tuning.
pub fn eval_loss(loss: Loss, margins: &[f64], targets: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    let mut total = 0.0;
    match loss {
        Loss::Squared | Loss::WeightedSquared => {
            for i in 0..margins.len() {
                let d = targets[i] - margins[i];
                total += weights[i] * d * d;
            }
        }
        Loss::Logistic => {
            for i in 0..margins.len() {
                let q = sigmoid(margins[i]).clamp(1e-12, 1.0 - 1e-12);
                total -= weights[i] * (targets[i] * q.ln() + (1.0 - targets[i]) * (1.0 - q).ln());
            }
        }
    }
    total / wsum
}

const NO_SLOT: u32 = u32::MAX;

struct Booster<'a> {
    features: &'a Matrix,
    hp: &'a Hyperparams,
    sorted: Vec<Vec<u32>>,
}

impl<'a> Booster<'a> {
    fn new(features: &'a Matrix, hp: &'a Hyperparams) -> Self {
        let n = features.n_rows();
        let sorted = (0..features.n_cols())
            .map(|j| {
                let col = features.col(j);
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_unstable_by(|&a, &b| {
                    col[a as usize]
                        .partial_cmp(&col[b as usize])
                        .unwrap()
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Booster { features, hp, sorted }
    }

    fn grow_tree(&self, grad: &[f64], hess: &[f64], rng: &mut ChaCha8Rng) -> RegressionTree {
        let n = self.features.n_rows();
        let p = self.features.n_cols();
        let hp = self.hp;

        let in_sample: Vec<bool> = if hp.subsample < 1.0 {
            let keep = ((n as f64) * hp.subsample).round().max(1.0) as usize;
            let chosen = rand::seq::index::sample(rng, n, keep.min(n));
            let mut mask = vec![false; n];
            for i in chosen {
                mask[i] = true;
            }
            mask
        } else {
            vec![true; n]
        };

        let cols: Vec<usize> = if hp.colsample < 1.0 {
            let keep = ((p as f64) * hp.colsample).round().max(1.0) as usize;
            let mut chosen: Vec<usize> = rand::seq::index::sample(rng, p, keep.min(p)).into_vec();
            chosen.sort_unstable();
            chosen
        } else {
            (0..p).collect()
        };

        let mut root_g = 0.0;
        let mut root_h = 0.0;
        for i in 0..n {
            if in_sample[i] {
                root_g += grad[i];
                root_h += hess[i];
            }
        }

        let mut nodes = vec![TreeNode::leaf(0.0, root_h)];
        let mut node_g = vec![root_g];
        let mut node_h = vec![root_h];
        let mut node_of_row: Vec<u32> = (0..n)
            .map(|i| if in_sample[i] { 0 } else { NO_SLOT })
            .collect();
        let mut level: Vec<usize> = vec![0];

        for _depth in 0..hp.max_depth {
            if level.is_empty() {
                break;
            }
            let m = level.len();
            let mut slot_of_node = vec![NO_SLOT; nodes.len()];
            for (s, &nid) in level.iter().enumerate() {
                slot_of_node[nid] = s as u32;
            }

            struct Best {
                gain: f64,
                feature: usize,
                threshold: f64,
                gl: f64,
                hl: f64,
            }
            let mut best: Vec<Option<Best>> = (0..m).map(|_| None).collect();

            let mut run_g = vec![0.0f64; m];
            let mut run_h = vec![0.0f64; m];
            let mut last_val = vec![0.0f64; m];
            let mut seen = vec![false; m];

            for &j in &cols {
                run_g.iter_mut().for_each(|v| *v = 0.0);
                run_h.iter_mut().for_each(|v| *v = 0.0);
                seen.iter_mut().for_each(|v| *v = false);
                let col = self.features.col(j);
                for &r in &self.sorted[j] {
                    let r = r as usize;
                    let nid = node_of_row[r];
                    if nid == NO_SLOT {
                        continue;
                    }
                    let slot = slot_of_node[nid as usize];
                    if slot == NO_SLOT {
                        continue;
                    }
                    let s = slot as usize;
                    let v = col[r];
                    if seen[s] && v > last_val[s] {
                        let gl = run_g[s];
                        let hl = run_h[s];
                        let gr = node_g[level[s]] - gl;
                        let hr = node_h[level[s]] - hl;
                        if hl >= hp.min_child_weight && hr >= hp.min_child_weight {
                            let parent = node_g[level[s]] * node_g[level[s]]
                                / (node_h[level[s]] + hp.lambda);
                            let gain =
                                0.5 * (gl * gl / (hl + hp.lambda) + gr * gr / (hr + hp.lambda) - parent);
                            if gain - hp.gamma > 1e-12
                                && best[s].as_ref().map_or(true, |b| gain > b.gain)
                            {
                                best[s] = Some(Best {
                                    gain,
                                    feature: j,
                                    threshold: last_val[s] + 0.5 * (v - last_val[s]),
                                    gl,
                                    hl,
                                });
                            }
                        }
                    }
                    run_g[s] += grad[r];
                    run_h[s] += hess[r];
                    last_val[s] = v;
                    seen[s] = true;
                }
            }

            let mut next_level = Vec::new();
            let mut split_decision: Vec<Option<(usize, f64, usize, usize)>> = vec![None; m];
            for s in 0..m {
                let nid = level[s];
                if let Some(b) = best[s].take() {
                    let left = nodes.len();
                    let right = left + 1;
                    let gr = node_g[nid] - b.gl;
                    let hr = node_h[nid] - b.hl;
                    nodes.push(TreeNode::leaf(0.0, b.hl));
                    nodes.push(TreeNode::leaf(0.0, hr));
                    node_g.push(b.gl);
                    node_g.push(gr);
                    node_h.push(b.hl);
                    node_h.push(hr);
                    let node = &mut nodes[nid];
                    node.split_feature = Some(b.feature);
                    node.threshold = b.threshold;
                    node.left = left;
                    node.right = right;
                    node.gain = b.gain;
                    node.leaf_value = 0.0;
                    next_level.push(left);
                    next_level.push(right);
                    split_decision[s] = Some((b.feature, b.threshold, left, right));
                }
            }

            for r in 0..n {
                let nid = node_of_row[r];
                if nid == NO_SLOT {
                    continue;
                }
                let slot = slot_of_node[nid as usize];
                if slot == NO_SLOT {
                    continue;
                }
                if let Some((j, thr, left, right)) = split_decision[slot as usize] {
                    node_of_row[r] =
                        if self.features.get(r, j) < thr { left as u32 } else { right as u32 };
                }
            }

            level = next_level;
        }

        for (nid, node) in nodes.iter_mut().enumerate() {
            if node.is_leaf() {
                node.leaf_value = -node_g[nid] / (node_h[nid] + self.hp.lambda);
            }
        }

        RegressionTree { nodes }
    }
}

struct FitOutcome {
    ensemble: TreeEnsemble,
    /// Validation loss after each round, when a validation set was given.
    val_curve: Vec<f64>,
}

fn fit_core(
    features: &Matrix,
    targets: &[f64],
    weights: &[f64],
    hp: &Hyperparams,
    loss: Loss,
    rng: &mut ChaCha8Rng,
    validation: Option<(&Matrix, &[f64], &[f64])>,
    patience: Option<usize>,
) -> FitOutcome {
    let n = features.n_rows();
    let base_score = base_score_for(loss, targets, weights);
    let booster = Booster::new(features, hp);

    let mut margins = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees: Vec<RegressionTree> = Vec::new();
    let mut val_curve = Vec::new();
    let mut val_margins: Vec<f64> =
        validation.map(|(vm, _, _)| vec![base_score; vm.n_rows()]).unwrap_or_default();
    let mut best_round = 0usize;
    let mut best_loss = f64::INFINITY;

    for round in 0..hp.n_rounds {
        for i in 0..n {
            let (g, h) = grad_hess(loss, margins[i], targets[i], weights[i]);
            grad[i] = g;
            hess[i] = h;
        }
        let tree = booster.grow_tree(&grad, &hess, rng);
        for i in 0..n {
            margins[i] += hp.eta * tree.predict_row(features, i);
        }
        if let Some((vf, vt, vw)) = validation {
            for (i, vm) in val_margins.iter_mut().enumerate() {
                *vm += hp.eta * tree.predict_row(vf, i);
            }
            let l = eval_loss(loss, &val_margins, vt, vw);
            val_curve.push(l);
            if l < best_loss {
                best_loss = l;
                best_round = round;
            }
            if let Some(pat) = patience {
                if round - best_round >= pat {
                    trees.push(tree);
                    break;
                }
            }
        }
        trees.push(tree);
    }

    FitOutcome {
        ensemble: TreeEnsemble {
            trees,
            base_score,
            learning_rate: hp.eta,
            loss,
            feature_count: features.n_cols(),
        },
        val_curve,
    }
}

/// Boosted fit at exactly `hp.n_rounds` rounds.
pub fn fit_gbt(
    features: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    hp: &Hyperparams,
    loss: Loss,
    rng: &mut ChaCha8Rng,
) -> Result<TreeEnsemble> {
    hp.validate()?;
    let w = validate_training_inputs(features, targets, weights)?;
    Ok(fit_core(features, targets, &w, hp, loss, rng, None, None).ensemble)
}

/// Picks the round count on a held-out slice, then refits on all rows at
/// that count. Returns the refit ensemble and the chosen round count.
pub fn fit_gbt_early_stopped(
    features: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    hp: &Hyperparams,
    loss: Loss,
    val_fraction: f64,
    patience: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(TreeEnsemble, usize)> {
    hp.validate()?;
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config("val_fraction must be in (0,1)".into()));
    }
    let w = validate_training_inputs(features, targets, weights)?;
    let n = features.n_rows();
    let n_val = (((n as f64) * val_fraction).round() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    let (val_rows, train_rows) = order.split_at(n_val);
    let mut train_rows = train_rows.to_vec();
    let mut val_rows = val_rows.to_vec();
    train_rows.sort_unstable();
    val_rows.sort_unstable();

    let tf = features.select_rows(&train_rows);
    let tt: Vec<f64> = train_rows.iter().map(|&i| targets[i]).collect();
    let tw: Vec<f64> = train_rows.iter().map(|&i| w[i]).collect();
    let vf = features.select_rows(&val_rows);
    let vt: Vec<f64> = val_rows.iter().map(|&i| targets[i]).collect();
    let vw: Vec<f64> = val_rows.iter().map(|&i| w[i]).collect();
    if tw.iter().sum::<f64>() <= 0.0 || vw.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Fit("zero total weight in early-stopping slice".into()));
    }

    let mut probe_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let probe = fit_core(&tf, &tt, &tw, hp, loss, &mut probe_rng, Some((&vf, &vt, &vw)), Some(patience));
    let best_rounds = probe
        .val_curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i + 1)
        .unwrap_or(1);

    let final_hp = Hyperparams { n_rounds: best_rounds, ..hp.clone() };
    let mut fit_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let ensemble = fit_core(features, targets, &w, &final_hp, loss, &mut fit_rng, None, None).ensemble;
    Ok((ensemble, best_rounds))
}

/// Per-feature sum of split gains, normalized to sum 1.
pub fn gain_vip(ensemble: &TreeEnsemble) -> Vec<f64> {
    let mut vip = vec![0.0; ensemble.feature_count];
    for tree in &ensemble.trees {
        for node in &tree.nodes {
            if let Some(j) = node.split_feature {
                vip[j] += node.gain;
            }
        }
    }
    let total: f64 = vip.iter().sum();
    if total > 0.0 {
        for v in vip.iter_mut() {
            *v /= total;
        }
    }
    vip
}

/// K-fold CV over a hyperparameter grid; returns the grid element with the
/// lowest mean validation loss, earliest grid position winning ties.
pub fn tune_cv(
    features: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    loss: Loss,
    grid: &[Hyperparams],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Hyperparams> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let w = validate_training_inputs(features, targets, weights)?;
    let folds = crate::data::split_folds(features.n_rows(), k, rng)?;
    let fit_seed: u64 = rng.gen();

    let mut best_idx = 0usize;
    let mut best_loss = f64::INFINITY;
    for (gi, hp) in grid.iter().enumerate() {
        hp.validate()?;
        let mut total = 0.0;
        for fold in 0..k {
            let train = folds.train_rows(fold);
            let val = folds.fold_rows(fold);
            let tf = features.select_rows(&train);
            let tt: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
            let tw: Vec<f64> = train.iter().map(|&i| w[i]).collect();
            let vf = features.select_rows(&val);
            let vt: Vec<f64> = val.iter().map(|&i| targets[i]).collect();
            let vw: Vec<f64> = val.iter().map(|&i| w[i]).collect();
            if tw.iter().sum::<f64>() <= 0.0 || vw.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Fit("zero total weight in a CV fold".into()));
            }
            let mut fit_rng =
                ChaCha8Rng::seed_from_u64(fit_seed ^ ((gi as u64) << 20) ^ fold as u64);
            let out = fit_core(&tf, &tt, &tw, hp, loss, &mut fit_rng, None, None);
            let vm = out.ensemble.predict_margin(&vf)?;
            total += eval_loss(loss, &vm, &vt, &vw);
        }
        let mean = total / k as f64;
        if mean < best_loss {
            best_loss = mean;
            best_idx = gi;
        }
    }
    Ok(grid[best_idx].clone())
}
