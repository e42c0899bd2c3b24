//! Random-forest classifier built from scratch: bagged binary CART trees
//! with Gini impurity and per-node feature subsampling.
//!
//! Determinism is a hard contract here. Every tree gets its own RNG stream
//! (master seed + tree index), so training is reproducible bit for bit at
//! any thread count, and split ties are resolved by (lowest feature index,
//! lowest threshold).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means ceil(sqrt(F)).
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            mtry: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Training-sample count per class at this leaf.
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    /// Class labels in sorted order; predictions index into this list.
    pub classes: Vec<String>,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let f = c as f64 / t;
            f * f
        })
        .sum::<f64>()
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best Gini split of `rows` over the candidate features, or None when no
/// split strictly decreases impurity. Candidates are scanned in ascending
/// feature order and thresholds in ascending value order, with strictly
///-greater gain required to displace the incumbent, which yields the
/// (lowest feature, lowest threshold) tie-break.
fn best_split(
    features: &[Vec<f64>],
    labels: &[usize],
    rows: &[usize],
    candidates: &[usize],
    n_classes: usize,
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = rows.len();
    let mut parent_counts = vec![0usize; n_classes];
    for &r in rows {
        parent_counts[labels[r]] += 1;
    }
    let parent_gini = gini(&parent_counts, n);
    let mut best: Option<BestSplit> = None;

    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in candidates {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (features[r][f], labels[r])));
        sorted.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut left_counts = vec![0usize; n_classes];
        for i in 1..n {
            left_counts[sorted[i - 1].1] += 1;
            let (a, b) = (sorted[i - 1].0, sorted[i].0);
            if b <= a {
                continue;
            }
            if i < min_leaf || n - i < min_leaf {
                continue;
            }
            let mut right_counts = parent_counts.clone();
            for (rc, lc) in right_counts.iter_mut().zip(&left_counts) {
                *rc -= lc;
            }
            let wl = i as f64 / n as f64;
            let wr = 1.0 - wl;
            let gain = parent_gini - wl * gini(&left_counts, i) - wr * gini(&right_counts, n - i);
            if gain <= 0.0 {
                continue;
            }
            // Midpoint of the adjacent distinct values; rows go left when
            // value <= threshold, so the threshold must stay below b.
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            if best.as_ref().is_none_or(|cur| gain > cur.gain) {
                best = Some(BestSplit {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}

fn leaf(labels: &[usize], rows: &[usize], n_classes: usize) -> TreeNode {
    let mut counts = vec![0usize; n_classes];
    for &r in rows {
        counts[labels[r]] += 1;
    }
    TreeNode::Leaf { counts }
}

/// Data and hyperparameters shared by every node of one growing tree.
struct GrowContext<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [usize],
    n_classes: usize,
    n_features: usize,
    mtry: usize,
    min_leaf: usize,
}

fn grow_tree(
    ctx: &GrowContext<'_>,
    rows: Vec<usize>,
    depth_left: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let first_label = ctx.labels[rows[0]];
    let pure = rows.iter().all(|&r| ctx.labels[r] == first_label);
    if pure || rows.len() < 2 * ctx.min_leaf || depth_left == Some(0) {
        return leaf(ctx.labels, &rows, ctx.n_classes);
    }

    // Partial Fisher-Yates draw of mtry distinct features, then sorted so
    // the tie-break scan order is by feature index.
    let mut pool: Vec<usize> = (0..ctx.n_features).collect();
    for k in 0..ctx.mtry {
        let j = rng.gen_range(k..ctx.n_features);
        pool.swap(k, j);
    }
    let mut candidates = pool[..ctx.mtry].to_vec();
    candidates.sort_unstable();

    let Some(split) = best_split(
        ctx.features,
        ctx.labels,
        &rows,
        &candidates,
        ctx.n_classes,
        ctx.min_leaf,
    ) else {
        return leaf(ctx.labels, &rows, ctx.n_classes);
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| ctx.features[r][split.feature] <= split.threshold);
    let next_depth = depth_left.map(|d| d - 1);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow_tree(ctx, left_rows, next_depth, rng)),
        right: Box::new(grow_tree(ctx, right_rows, next_depth, rng)),
    }
}

fn tree_rng(seed: u64, tree_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index);
    rng
}

fn bootstrap_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

fn validate_features(features: &[Vec<f64>], n_features: usize) -> Result<()> {
    for (i, row) in features.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::FeatureMismatch(format!(
                "row {} has {} features, expected {}",
                i,
                row.len(),
                n_features
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature row {i}")));
        }
    }
    Ok(())
}

/// Train a forest on N rows of F features. `labels` are free-form strings;
/// the model's class list is their sorted deduplication.
pub fn train_forest(
    features: &[Vec<f64>],
    labels: &[String],
    feature_names: &[String],
    params: &ForestParams,
) -> Result<ForestModel> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Param(format!("need at least 2 rows, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            n
        )));
    }
    let f = feature_names.len();
    if f == 0 {
        return Err(Error::Param("need at least 1 feature".into()));
    }
    validate_features(features, f)?;
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::Param("n_trees and min_leaf must be positive".into()));
    }

    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels(format!(
            "need at least 2 distinct labels, got {:?}",
            classes
        )));
    }
    let label_idx: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap())
        .collect();

    let mtry = match params.mtry {
        Some(m) => {
            if m == 0 || m > f {
                return Err(Error::Param(format!("mtry {m} out of range 1..={f}")));
            }
            m
        }
        None => ((f as f64).sqrt().ceil() as usize).clamp(1, f),
    };

    let ctx = GrowContext {
        features,
        labels: &label_idx,
        n_classes: classes.len(),
        n_features: f,
        mtry,
        min_leaf: params.min_leaf,
    };
    let trees: Vec<TreeNode> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t as u64);
            let rows = bootstrap_rows(&mut rng, n);
            grow_tree(&ctx, rows, params.max_depth, &mut rng)
        })
        .collect();

    Ok(ForestModel {
        trees,
        classes,
        params: params.clone(),
        feature_names: feature_names.to_vec(),
    })
}

fn leaf_vote(node: &TreeNode, x: &[f64]) -> usize {
    match node {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if x[*feature] <= *threshold {
                leaf_vote(left, x)
            } else {
                leaf_vote(right, x)
            }
        }
        TreeNode::Leaf { counts } => {
            let mut best = 0usize;
            for (i, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = i;
                }
            }
            best
        }
    }
}

impl ForestModel {
    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_names.len() {
            return Err(Error::FeatureMismatch(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.feature_names.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction input".into()));
        }
        Ok(())
    }

    /// Per-class fraction of tree votes; nonnegative, sums to 1.
    pub fn vote_fractions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut votes = vec![0usize; self.classes.len()];
        for tree in &self.trees {
            votes[leaf_vote(tree, x)] += 1;
        }
        let t = self.trees.len() as f64;
        Ok(votes.into_iter().map(|v| v as f64 / t).collect())
    }

    /// Majority-vote class index; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let fractions = self.vote_fractions(x)?;
        let mut best = 0usize;
        for (i, &f) in fractions.iter().enumerate() {
            if f > fractions[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Elementwise [`predict`](Self::predict) plus the vote fractions.
    pub fn predict_batch(&self, features: &[Vec<f64>]) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
        let mut labels = Vec::with_capacity(features.len());
        let mut fractions = Vec::with_capacity(features.len());
        for x in features {
            let f = self.vote_fractions(x)?;
            let mut best = 0usize;
            for (i, &v) in f.iter().enumerate() {
                if v > f[best] {
                    best = i;
                }
            }
            labels.push(best);
            fractions.push(f);
        }
        Ok((labels, fractions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn two_value_dataset() -> (Vec<Vec<f64>>, Vec<String>) {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..10 {
            features.push(vec![0.0]);
            labels.push("a".to_string());
            features.push(vec![1.0]);
            labels.push("b".to_string());
        }
        (features, labels)
    }

    #[test]
    fn separable_two_values_split_at_half() {
        let (features, labels) = two_value_dataset();
        let params = ForestParams {
            n_trees: 50,
            seed: 7,
            ..ForestParams::default()
        };
        let model = train_forest(&features, &labels, &names(1), &params).unwrap();
        assert_eq!(model.classes, vec!["a", "b"]);
        for tree in &model.trees {
            match tree {
                TreeNode::Split { threshold, .. } => assert_eq!(*threshold, 0.5),
                // A bootstrap sample may draw a single class; then the tree
                // is a pure leaf.
                TreeNode::Leaf { counts } => {
                    assert_eq!(counts.iter().filter(|&&c| c > 0).count(), 1)
                }
            }
        }
        assert_eq!(model.predict(&[0.0]).unwrap(), 0);
        assert_eq!(model.predict(&[1.0]).unwrap(), 1);
        assert_eq!(model.predict(&[0.49]).unwrap(), 0);
        assert_eq!(model.predict(&[0.51]).unwrap(), 1);
        // Training accuracy 1.0.
        for (x, l) in features.iter().zip(&labels) {
            assert_eq!(&model.classes[model.predict(x).unwrap()], l);
        }
        let (batch, fractions) = model.predict_batch(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(batch, vec![0, 1]);
        assert_eq!(fractions[0][0], 1.0);
        assert_eq!(fractions[1][1], 1.0);
    }

    #[test]
    fn constant_features_vote_majority() {
        let features = vec![vec![0.5, 0.5]; 10];
        let mut labels = strings(&["a", "a", "a", "a", "a", "a", "b", "b", "b", "b"]);
        let params = ForestParams {
            n_trees: 20,
            seed: 1,
            ..ForestParams::default()
        };
        let model = train_forest(&features, &labels, &names(2), &params).unwrap();
        for tree in &model.trees {
            assert!(matches!(tree, TreeNode::Leaf { .. }));
        }
        assert_eq!(model.predict(&[0.2, 0.9]).unwrap(), 0);

        // Even 5/5 split: bootstrap counts vary per tree, but an exact
        // overall tie must fall to the lowest class index.
        labels[5] = "b".to_string();
        let tied = vec![vec![1.0]; 4];
        let tied_labels = strings(&["a", "a", "b", "b"]);
        let tied_model = train_forest(
            &tied,
            &tied_labels,
            &names(1),
            &ForestParams {
                n_trees: 2,
                seed: 3,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let fractions = tied_model.vote_fractions(&[1.0]).unwrap();
        if fractions[0] == fractions[1] {
            assert_eq!(tied_model.predict(&[1.0]).unwrap(), 0);
        }
    }

    fn xor_points(n_per_quadrant: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for qu in 0..2 {
            for qv in 0..2 {
                for _ in 0..n_per_quadrant {
                    let u = rng.gen_range(0.0..0.4) + 0.6 * qu as f64;
                    let v = rng.gen_range(0.0..0.4) + 0.6 * qv as f64;
                    features.push(vec![u, v]);
                    labels.push(if qu != qv { "odd".into() } else { "even".into() });
                }
            }
        }
        (features, labels)
    }

    #[test]
    fn single_tree_overfits_xor_exactly() {
        let (features, labels) = xor_points(10, 5);
        let classes = ["even".to_string(), "odd".to_string()];
        let label_idx: Vec<usize> = labels
            .iter()
            .map(|l| classes.binary_search(l).unwrap())
            .collect();
        // Full sample, no bootstrap, all features as candidates.
        let ctx = GrowContext {
            features: &features,
            labels: &label_idx,
            n_classes: 2,
            n_features: 2,
            mtry: 2,
            min_leaf: 1,
        };
        let mut rng = tree_rng(0, 0);
        let tree = grow_tree(&ctx, (0..features.len()).collect(), None, &mut rng);
        for (x, &li) in features.iter().zip(&label_idx) {
            assert_eq!(leaf_vote(&tree, x), li);
        }
    }

    #[test]
    fn forest_fits_xor_and_generalizes() {
        let (features, labels) = xor_points(10, 5);
        let params = ForestParams {
            seed: 11,
            ..ForestParams::default()
        };
        let model = train_forest(&features, &labels, &names(2), &params).unwrap();
        for (x, l) in features.iter().zip(&labels) {
            assert_eq!(&model.classes[model.predict(x).unwrap()], l);
        }

        // Mean held-out accuracy over 100 seeded trials.
        let mut correct = 0usize;
        let mut total = 0usize;
        for trial in 0..100u64 {
            let (train_x, train_y) = xor_points(10, 1000 + trial);
            let (test_x, test_y) = xor_points(5, 2000 + trial);
            let m = train_forest(
                &train_x,
                &train_y,
                &names(2),
                &ForestParams {
                    seed: trial,
                    ..ForestParams::default()
                },
            )
            .unwrap();
            for (x, l) in test_x.iter().zip(&test_y) {
                if &m.classes[m.predict(x).unwrap()] == l {
                    correct += 1;
                }
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.9, "held-out XOR accuracy {acc}");
    }

    #[test]
    fn bootstrap_unique_fraction_near_632() {
        let mut mean = 0.0;
        for t in 0..10u64 {
            let mut rng = tree_rng(99, t);
            let rows = bootstrap_rows(&mut rng, 1000);
            assert_eq!(rows.len(), 1000);
            let mut seen = vec![false; 1000];
            for r in rows {
                seen[r] = true;
            }
            let unique = seen.iter().filter(|&&s| s).count() as f64 / 1000.0;
            assert!((unique - 0.632).abs() <= 0.05, "stream {t}: {unique}");
            mean += unique / 10.0;
        }
        assert!((mean - 0.632).abs() <= 0.03, "mean unique fraction {mean}");
    }

    #[test]
    fn vote_fractions_are_a_distribution() {
        let (features, labels) = xor_points(5, 8);
        let model = train_forest(
            &features,
            &labels,
            &names(2),
            &ForestParams {
                n_trees: 37,
                seed: 4,
                ..ForestParams::default()
            },
        )
        .unwrap();
        for x in &features {
            let f = model.vote_fractions(x).unwrap();
            assert!(f.iter().all(|&v| v >= 0.0));
            assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn batch_matches_repeated_single_calls() {
        use rand::{Rng, SeedableRng};
        let (features, labels) = xor_points(10, 2);
        let model = train_forest(&features, &labels, &names(2), &ForestParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let batch: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let (labels_batch, fractions_batch) = model.predict_batch(&batch).unwrap();
        for (i, x) in batch.iter().enumerate() {
            assert_eq!(labels_batch[i], model.predict(x).unwrap());
            assert_eq!(fractions_batch[i], model.vote_fractions(x).unwrap());
        }
        let (empty_labels, empty_fractions) = model.predict_batch(&[]).unwrap();
        assert!(empty_labels.is_empty() && empty_fractions.is_empty());
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let (features, labels) = xor_points(10, 6);
        let params = ForestParams {
            seed: 21,
            ..ForestParams::default()
        };
        let reference = train_forest(&features, &labels, &names(2), &params).unwrap();
        for threads in [1, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let model = pool
                .install(|| train_forest(&features, &labels, &names(2), &params))
                .unwrap();
            assert_eq!(model, reference);
            assert_eq!(
                serde_json::to_string(&model).unwrap(),
                serde_json::to_string(&reference).unwrap()
            );
        }
    }

    #[test]
    fn json_round_trip_predicts_identically() {
        let (features, labels) = xor_points(10, 9);
        let model = train_forest(&features, &labels, &names(2), &ForestParams::default()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ForestModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        for x in &features {
            assert_eq!(
                model.vote_fractions(x).unwrap(),
                back.vote_fractions(x).unwrap()
            );
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let features = vec![vec![0.0], vec![1.0]];
        let same = strings(&["a", "a"]);
        assert!(matches!(
            train_forest(&features, &same, &names(1), &ForestParams::default()),
            Err(Error::DegenerateLabels(_))
        ));
        let nan = vec![vec![0.0], vec![f64::NAN]];
        assert!(matches!(
            train_forest(&nan, &strings(&["a", "b"]), &names(1), &ForestParams::default()),
            Err(Error::NonFinite(_))
        ));
        let model = train_forest(
            &features,
            &strings(&["a", "b"]),
            &names(1),
            &ForestParams::default(),
        )
        .unwrap();
        assert!(matches!(
            model.predict(&[0.0, 1.0]),
            Err(Error::FeatureMismatch(_))
        ));
        assert!(matches!(model.predict(&[f64::NAN]), Err(Error::NonFinite(_))));
    }
}
