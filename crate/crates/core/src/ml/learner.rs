//! The in-house regression learner behind every learned component: exact
//! linear least squares, a greedy variance-reduction regression tree, and
//! gradient-boosted trees over squared loss. Fitting is deterministic given
//! the data order and seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    LinearLeastSquares,
    RegressionTree,
    BoostedTrees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub kind: LearnerKind,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl LearnerParams {
    pub fn new(kind: LearnerKind) -> Self {
        LearnerParams {
            kind,
            max_depth: 6,
            min_samples_leaf: 5,
            n_rounds: 50,
            learning_rate: 0.1,
            seed: 0,
        }
    }

    pub fn with_max_depth(mut self, d: usize) -> Self {
        self.max_depth = d;
        self
    }

    pub fn with_min_samples_leaf(mut self, m: usize) -> Self {
        self.min_samples_leaf = m;
        self
    }

    pub fn with_rounds(mut self, n: usize) -> Self {
        self.n_rounds = n;
        self
    }
}

/// Flat tree node; `feature < 0` marks a leaf carrying `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: i32,
    pub threshold: f64,
    pub value: f64,
    pub left: u32,
    pub right: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature < 0 {
                return n.value;
            }
            i = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }
}

/// A fitted regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Linear {
        weights: Vec<f64>,
        intercept: f64,
    },
    Tree {
        tree: Tree,
    },
    Boosted {
        base: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
    },
}

impl FittedModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            FittedModel::Linear { weights, intercept } => {
                intercept
                    + weights
                        .iter()
                        .zip(row.iter())
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            }
            FittedModel::Tree { tree } => tree.predict(row),
            FittedModel::Boosted {
                base,
                learning_rate,
                trees,
            } => base + learning_rate * trees.iter().map(|t| t.predict(row)).sum::<f64>(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Linear { weights, .. } => weights.len(),
            _ => 0,
        }
    }
}

/// Fits a model on equal-length feature rows and targets.
pub fn fit(params: &LearnerParams, rows: &[Vec<f64>], targets: &[f64]) -> Result<FittedModel> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::InsufficientData(format!(
            "learner needs matching non-empty rows/targets, got {}/{}",
            rows.len(),
            targets.len()
        )));
    }
    let width = rows[0].len();
    for r in rows {
        if r.len() != width {
            return Err(Error::InvalidRequest(
                "feature rows have unequal lengths".into(),
            ));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRequest("non-finite feature value".into()));
        }
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidRequest("non-finite target value".into()));
    }
    match params.kind {
        LearnerKind::LinearLeastSquares => fit_linear(rows, targets),
        LearnerKind::RegressionTree => Ok(FittedModel::Tree {
            tree: fit_tree(rows, targets, &(0..rows.len()).collect::<Vec<_>>(), params),
        }),
        LearnerKind::BoostedTrees => fit_boosted(rows, targets, params),
    }
}

fn fit_linear(rows: &[Vec<f64>], targets: &[f64]) -> Result<FittedModel> {
    let d = rows[0].len() + 1; // intercept first
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![0.0; d];
    for (r, y) in rows.iter().zip(targets.iter()) {
        let mut row = Vec::with_capacity(d);
        row.push(1.0);
        row.extend_from_slice(r);
        for i in 0..d {
            for j in 0..d {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * y;
        }
    }
    // Exact solve when the system is well posed; a tiny ridge only as the
    // fallback for singular designs.
    let beta = match gauss_solve(xtx.clone(), xty.clone()) {
        Ok(beta) => beta,
        Err(_) => {
            let scale = (0..d).map(|i| xtx[i][i]).fold(0.0_f64, f64::max).max(1.0);
            for i in 0..d {
                xtx[i][i] += 1e-10 * scale;
            }
            gauss_solve(xtx, xty)?
        }
    };
    Ok(FittedModel::Linear {
        weights: beta[1..].to_vec(),
        intercept: beta[0],
    })
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-11 * scale {
            return Err(Error::InsufficientData(
                "singular least-squares system".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
    }
    Ok(x)
}

fn mean_of(targets: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| targets[i]).sum::<f64>() / idx.len() as f64
}

fn sse_of(targets: &[f64], idx: &[usize], mean: f64) -> f64 {
    idx.iter().map(|&i| (targets[i] - mean).powi(2)).sum()
}

fn fit_tree(rows: &[Vec<f64>], targets: &[f64], idx: &[usize], params: &LearnerParams) -> Tree {
    let mut nodes = Vec::new();
    build_node(rows, targets, idx, params, 0, &mut nodes);
    Tree { nodes }
}

fn build_node(
    rows: &[Vec<f64>],
    targets: &[f64],
    idx: &[usize],
    params: &LearnerParams,
    depth: usize,
    nodes: &mut Vec<TreeNode>,
) -> u32 {
    let me = nodes.len() as u32;
    let mean = mean_of(targets, idx);
    nodes.push(TreeNode {
        feature: -1,
        threshold: 0.0,
        value: mean,
        left: 0,
        right: 0,
    });
    if depth >= params.max_depth || idx.len() < 2 * params.min_samples_leaf {
        return me;
    }
    let parent_sse = sse_of(targets, idx, mean);
    if parent_sse < 1e-18 {
        return me;
    }
    let n_features = rows[idx[0]].len();
    let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
    for f in 0..n_features {
        let mut values: Vec<(f64, f64)> = idx.iter().map(|&i| (rows[i][f], targets[i])).collect();
        values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // Prefix sums over the sorted order give O(n) split evaluation.
        let n = values.len();
        let mut prefix_sum = vec![0.0; n + 1];
        let mut prefix_sq = vec![0.0; n + 1];
        for (i, (_, y)) in values.iter().enumerate() {
            prefix_sum[i + 1] = prefix_sum[i] + y;
            prefix_sq[i + 1] = prefix_sq[i] + y * y;
        }
        for cut in params.min_samples_leaf..=(n - params.min_samples_leaf) {
            if cut == 0 || cut == n || values[cut - 1].0 == values[cut].0 {
                continue;
            }
            let (ls, lq) = (prefix_sum[cut], prefix_sq[cut]);
            let (rs, rq) = (prefix_sum[n] - ls, prefix_sq[n] - lq);
            let sse = (lq - ls * ls / cut as f64) + (rq - rs * rs / (n - cut) as f64);
            let threshold = 0.5 * (values[cut - 1].0 + values[cut].0);
            let better = match &best {
                None => true,
                Some((b, ..)) => sse < *b - 1e-15,
            };
            if better {
                best = Some((sse, f, threshold));
            }
        }
    }
    let Some((best_sse, feature, threshold)) = best else {
        return me;
    };
    if best_sse >= parent_sse - 1e-12 {
        return me;
    }
    let left_idx: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| rows[i][feature] <= threshold)
        .collect();
    let right_idx: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| rows[i][feature] > threshold)
        .collect();
    if left_idx.is_empty() || right_idx.is_empty() {
        return me;
    }
    let left = build_node(rows, targets, &left_idx, params, depth + 1, nodes);
    let right = build_node(rows, targets, &right_idx, params, depth + 1, nodes);
    let node = &mut nodes[me as usize];
    node.feature = feature as i32;
    node.threshold = threshold;
    node.left = left;
    node.right = right;
    me
}

fn fit_boosted(rows: &[Vec<f64>], targets: &[f64], params: &LearnerParams) -> Result<FittedModel> {
    let base = targets.iter().sum::<f64>() / targets.len() as f64;
    let mut current: Vec<f64> = vec![base; targets.len()];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let idx: Vec<usize> = (0..rows.len()).collect();
    let tree_params = LearnerParams {
        kind: LearnerKind::RegressionTree,
        // Shallow stumps per round; the ensemble supplies the depth.
        max_depth: params.max_depth.min(4),
        min_samples_leaf: params.min_samples_leaf.min(rows.len().max(1)),
        ..params.clone()
    };
    for _ in 0..params.n_rounds {
        let residuals: Vec<f64> = targets
            .iter()
            .zip(current.iter())
            .map(|(y, c)| y - c)
            .collect();
        if residuals.iter().all(|r| r.abs() < 1e-15) {
            break;
        }
        let tree = fit_tree(rows, &residuals, &idx, &tree_params);
        for (i, c) in current.iter_mut().enumerate() {
            *c += params.learning_rate * tree.predict(&rows[i]);
        }
        trees.push(tree);
    }
    Ok(FittedModel::Boosted {
        base,
        learning_rate: params.learning_rate,
        trees,
    })
}

/// Mean squared error of a model on a dataset.
pub fn mse(model: &FittedModel, rows: &[Vec<f64>], targets: &[f64]) -> f64 {
    rows.iter()
        .zip(targets.iter())
        .map(|(r, y)| (model.predict(r) - y).powi(2))
        .sum::<f64>()
        / rows.len() as f64
}
