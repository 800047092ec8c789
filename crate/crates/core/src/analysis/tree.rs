//! Regression-tree correlation between token features and importance.
//!
//! A CART tree is grown by variance reduction; each feature's share is the
//! total squared-error reduction of the splits made on it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::annotation::{FertilityClass, Pos};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fewer annotated tokens than this is an error.
    pub min_tokens: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 6,
            min_leaf: 20,
            min_tokens: 100,
        }
    }
}

/// Named numeric columns, each belonging to a group (POS, Fertility, ...).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub groups: Vec<String>,
    /// Column-major values.
    pub columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn push(&mut self, name: impl Into<String>, group: impl Into<String>, values: Vec<f64>) {
        self.names.push(name.into());
        self.groups.push(group.into());
        self.columns.push(values);
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// Appends one indicator column per category of `values`, in `order`.
    pub fn push_one_hot<T: PartialEq + Copy>(&mut self, group: &str, order: &[(T, &str)], values: &[T]) {
        for &(cat, label) in order {
            let col = values.iter().map(|&v| f64::from(u8::from(v == cat))).collect();
            self.push(format!("{group}={label}"), group, col);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DepthBucket {
    Low,
    Middle,
    High,
}

impl DepthBucket {
    pub const ALL: [DepthBucket; 3] = [DepthBucket::Low, DepthBucket::Middle, DepthBucket::High];

    pub fn label(self) -> &'static str {
        match self {
            DepthBucket::Low => "Low",
            DepthBucket::Middle => "Middle",
            DepthBucket::High => "High",
        }
    }
}

/// Buckets depths by the corpus terciles.
pub fn depth_buckets(depths: &[u32]) -> Vec<DepthBucket> {
    if depths.is_empty() {
        return Vec::new();
    }
    let mut sorted = depths.to_vec();
    sorted.sort_unstable();
    let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
    let (lo, hi) = (q(1.0 / 3.0), q(2.0 / 3.0));
    depths
        .iter()
        .map(|&d| {
            if d <= lo {
                DepthBucket::Low
            } else if d <= hi {
                DepthBucket::Middle
            } else {
                DepthBucket::High
            }
        })
        .collect()
}

/// One-hot POS, fertility and depth-bucket columns, as the correlation table uses.
pub fn token_features(pos: &[Pos], fertility: &[FertilityClass], depth: &[DepthBucket]) -> Result<FeatureMatrix> {
    if pos.len() != fertility.len() || pos.len() != depth.len() {
        return Err(Error::InvalidInput(format!(
            "feature lengths differ: {} POS, {} fertility, {} depth",
            pos.len(),
            fertility.len(),
            depth.len()
        )));
    }
    let mut f = FeatureMatrix::default();
    let pos: Vec<Pos> = pos.iter().map(|&p| if p == Pos::None { Pos::Others } else { p }).collect();
    let pos_order: Vec<(Pos, &str)> = Pos::TABLE.iter().map(|&p| (p, p.label())).collect();
    f.push_one_hot("POS", &pos_order, &pos);
    let fert_order: Vec<(FertilityClass, &str)> = FertilityClass::ALL.iter().map(|&c| (c, c.label())).collect();
    f.push_one_hot("Fertility", &fert_order, fertility);
    let depth_order: Vec<(DepthBucket, &str)> = DepthBucket::ALL.iter().map(|&d| (d, d.label())).collect();
    f.push_one_hot("Depth", &depth_order, depth);
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    /// `(feature name, share)` in column order; shares sum to one unless
    /// nothing was split.
    pub features: Vec<(String, f64)>,
    /// Group of each entry of `features`.
    pub feature_groups: Vec<String>,
    /// `(group, share)` in first-appearance order.
    pub groups: Vec<(String, f64)>,
    /// Total squared-error reduction of the tree.
    pub total_reduction: f64,
    /// Squared error of the target around its mean.
    pub total_variance: f64,
    /// The target was constant, so every share is zero.
    pub constant_target: bool,
    pub splits: usize,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn sse(sum: f64, sq: f64, n: f64) -> f64 {
    (sq - sum * sum / n).max(0.0)
}

/// Best split of `rows` on column `j`.
fn best_on_column(col: &[f64], target: &[f64], rows: &[usize], min_leaf: usize) -> Option<(f64, f64)> {
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
    let n = order.len();
    let (tot, tot_sq) = order
        .iter()
        .fold((0.0, 0.0), |(s, q), &i| (s + target[i], q + target[i] * target[i]));
    let parent = sse(tot, tot_sq, n as f64);
    let (mut s, mut q) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for (pos, &i) in order.iter().enumerate().take(n - 1) {
        s += target[i];
        q += target[i] * target[i];
        let left = pos + 1;
        let next = order[pos + 1];
        if col[i] == col[next] || left < min_leaf || n - left < min_leaf {
            continue;
        }
        let gain = parent - sse(s, q, left as f64) - sse(tot - s, tot_sq - q, (n - left) as f64);
        if best.map_or(true, |(g, _)| gain > g) {
            best = Some((gain, (col[i] + col[next]) / 2.0));
        }
    }
    best
}

fn grow(
    features: &FeatureMatrix,
    target: &[f64],
    rows: Vec<usize>,
    depth: usize,
    config: &TreeConfig,
    gains: &mut [f64],
    splits: &mut usize,
) {
    if depth >= config.max_depth || rows.len() < 2 * config.min_leaf.max(1) {
        return;
    }
    let mut best: Option<Split> = None;
    for (j, col) in features.columns.iter().enumerate() {
        let Some((gain, threshold)) = best_on_column(col, target, &rows, config.min_leaf.max(1)) else {
            continue;
        };
        // Equal gains go to the lexicographically smaller feature name, so
        // the tree does not depend on column order.
        let better = match &best {
            None => true,
            Some(b) => gain > b.gain || (gain == b.gain && features.names[j] < features.names[b.feature]),
        };
        if better {
            best = Some(Split { feature: j, threshold, gain });
        }
    }
    let Some(split) = best.filter(|s| s.gain > 1e-12) else {
        return;
    };
    gains[split.feature] += split.gain;
    *splits += 1;
    let col = &features.columns[split.feature];
    let (left, right): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| col[i] <= split.threshold);
    grow(features, target, left, depth + 1, config, gains, splits);
    grow(features, target, right, depth + 1, config, gains, splits);
}

/// Fits a regression tree of `target` on `features` and reports each
/// feature's share of the total variance reduction.
pub fn tree_correlation(features: &FeatureMatrix, target: &[f64], config: &TreeConfig) -> Result<TreeReport> {
    let n = target.len();
    if features.columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("feature columns and target differ in length".into()));
    }
    if n < config.min_tokens {
        return Err(Error::InvalidInput(format!(
            "tree correlation needs at least {} tokens, got {n}",
            config.min_tokens
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite importance in tree target".into()));
    }
    let mean = target.iter().sum::<f64>() / n as f64;
    let total_variance = target.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let constant_target = target.iter().all(|&v| v == target[0]);
    let mut gains = vec![0.0; features.columns.len()];
    let mut splits = 0;
    if !constant_target {
        grow(features, target, (0..n).collect(), 0, config, &mut gains, &mut splits);
    } else {
        log::warn!("importance target is constant; tree correlation is all zero");
    }
    let total: f64 = gains.iter().sum();
    let share = |g: f64| if total > 0.0 { g / total } else { 0.0 };
    let feats: Vec<(String, f64)> = features
        .names
        .iter()
        .zip(&gains)
        .map(|(name, &g)| (name.clone(), share(g)))
        .collect();
    let mut groups: Vec<(String, f64)> = Vec::new();
    for (group, &g) in features.groups.iter().zip(&gains) {
        match groups.iter_mut().find(|(name, _)| name == group) {
            Some(e) => e.1 += share(g),
            None => groups.push((group.clone(), share(g))),
        }
    }
    Ok(TreeReport {
        features: feats,
        feature_groups: features.groups.clone(),
        groups,
        total_reduction: total,
        total_variance,
        constant_target,
        splits,
    })
}

impl TreeReport {
    /// `group,feature,share` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,feature,share\n");
        for ((name, share), group) in self.features.iter().zip(&self.feature_groups) {
            let _ = writeln!(out, "{group},{name},{share:.6}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_features(n: usize) -> FeatureMatrix {
        let mut f = FeatureMatrix::default();
        f.push("a", "G1", (0..n).map(|i| (i % 2) as f64).collect());
        f.push("b", "G1", (0..n).map(|i| ((i / 2) % 2) as f64).collect());
        f.push("c", "G2", (0..n).map(|i| ((i / 4) % 2) as f64).collect());
        f
    }

    #[test]
    fn target_equal_to_a_feature_gets_everything() {
        let f = binary_features(200);
        let r = tree_correlation(&f, &f.columns[1].clone(), &TreeConfig::default()).unwrap();
        assert_eq!(r.features[1].1, 1.0);
        assert_eq!(r.features[0].1 + r.features[2].1, 0.0);
        assert_eq!(r.splits, 1);
    }

    #[test]
    fn constant_target_is_flagged() {
        let f = binary_features(200);
        let r = tree_correlation(&f, &[0.5; 200], &TreeConfig::default()).unwrap();
        assert!(r.constant_target);
        assert!(r.features.iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn too_few_tokens() {
        let f = binary_features(50);
        assert!(tree_correlation(&f, &[0.0; 50], &TreeConfig::default()).is_err());
    }

    #[test]
    fn terciles() {
        let b = depth_buckets(&[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(b[0], DepthBucket::Low);
        assert_eq!(b[4], DepthBucket::Middle);
        assert_eq!(b[8], DepthBucket::High);
    }
}
