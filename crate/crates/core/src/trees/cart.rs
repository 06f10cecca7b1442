//! CART with weighted Gini impurity and binary `x[f] <= t` splits.

use serde::{Deserialize, Serialize};

use super::gini_with_total;
use crate::instance::{Instance, Prediction, Schema};
use crate::model::{Model, ModelError, Paradigm};
use crate::rng::SeededRng;
use crate::scalar::{argmax, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
    /// Number of random features considered at each split; all when `None`.
    pub feature_subsample: Option<usize>,
}

impl Default for CartParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 2,
            seed: 1,
            feature_subsample: None,
        }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.min_leaf == 0 {
            return Err(ModelError::Invalid("min_leaf must be at least 1".into()));
        }
        if self.feature_subsample == Some(0) {
            return Err(ModelError::Invalid("feature_subsample must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<F> {
    pub feature: usize,
    pub threshold: F,
    pub decrease: F,
}

/// Gains within this relative distance are ties, so the lower feature index
/// and threshold win regardless of summation order.
fn tie_tolerance<F: Scalar>(reference: F) -> F {
    F::epsilon() * F::of(64.0) * reference.abs().max(F::one())
}

/// Finds the best split over `rows` (indices into `data`, repeats allowed),
/// considering `features` in ascending order.
fn best_split_rows<F: Scalar>(
    data: &[Instance<F>],
    weights: &[F],
    rows: &[usize],
    features: &[usize],
    classes: usize,
    min_leaf: usize,
) -> Option<Split<F>> {
    let n = rows.len();
    if n < 2 * min_leaf || n < 2 {
        return None;
    }
    let mut parent = vec![F::zero(); classes];
    for &r in rows {
        parent[data[r].label] += weights[r];
    }
    let total: F = parent.iter().copied().sum();
    if total <= F::zero() {
        return None;
    }
    let parent_gini = gini_with_total(&parent, total);
    if parent_gini <= tie_tolerance(F::zero()) {
        return None;
    }

    let mut best: Option<Split<F>> = None;
    let mut sorted = rows.to_vec();
    let mut left = vec![F::zero(); classes];
    let mut right = vec![F::zero(); classes];
    for &f in features {
        sorted.sort_by(|&a, &b| {
            data[a].features[f]
                .partial_cmp(&data[b].features[f])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        left.iter_mut().for_each(|c| *c = F::zero());
        right.copy_from_slice(&parent);
        let mut left_w = F::zero();
        for i in 0..n - 1 {
            let r = sorted[i];
            let w = weights[r];
            left[data[r].label] += w;
            right[data[r].label] -= w;
            left_w += w;
            let v = data[r].features[f];
            let next = data[sorted[i + 1]].features[f];
            if v == next {
                continue;
            }
            let left_n = i + 1;
            if left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let right_w = total - left_w;
            if left_w <= F::zero() || right_w <= F::zero() {
                continue;
            }
            let children = left_w / total * gini_with_total(&left, left_w)
                + right_w / total * gini_with_total(&right, right_w);
            let decrease = parent_gini - children;
            let floor = best.map_or(F::zero(), |b| b.decrease);
            if decrease > floor + tie_tolerance(floor) {
                best = Some(Split {
                    feature: f,
                    threshold: (v + next) / F::of(2.0),
                    decrease,
                });
            }
        }
    }
    best
}

/// Best Gini split of a weighted dataset over all features, or `None` when no
/// split has positive impurity decrease or every split violates `min_leaf`.
pub fn best_split<F: Scalar>(data: &[Instance<F>], weights: &[F], params: &CartParams) -> Option<Split<F>> {
    let first = data.first()?;
    let classes = data.iter().map(|i| i.label).max().unwrap_or(0) + 1;
    let rows: Vec<usize> = (0..data.len()).collect();
    let features: Vec<usize> = (0..first.features.len()).collect();
    best_split_rows(data, weights, &rows, &features, classes, params.min_leaf)
}

#[derive(Debug, Clone, PartialEq)]
enum Node<F> {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
}

/// A fitted CART tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct CartTree<F = f64> {
    nodes: Vec<Node<F>>,
    depth: usize,
}

struct Builder<'a, F> {
    data: &'a [Instance<F>],
    weights: &'a [F],
    params: &'a CartParams,
    classes: usize,
    num_features: usize,
    rng: SeededRng,
    nodes: Vec<Node<F>>,
    depth: usize,
}

impl<F: Scalar> Builder<'_, F> {
    fn leaf_class(&self, rows: &[usize]) -> usize {
        let mut counts = vec![F::zero(); self.classes];
        for &r in rows {
            counts[self.data[r].label] += self.weights[r];
        }
        argmax(&counts)
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.params.feature_subsample {
            Some(k) if k < self.num_features => {
                let mut fs = self.rng.sample_indices(self.num_features, k);
                fs.sort_unstable();
                fs
            }
            _ => (0..self.num_features).collect(),
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: self.leaf_class(&rows),
        });
        self.depth = self.depth.max(depth);
        if self.params.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let features = self.candidate_features();
        let Some(split) = best_split_rows(
            self.data,
            self.weights,
            &rows,
            &features,
            self.classes,
            self.params.min_leaf,
        ) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.data[i].features[split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl<F: Scalar> CartTree<F> {
    /// Fits a tree on `rows` (indices into `data`, repeats allowed) with
    /// per-instance `weights`.
    pub fn fit_rows(
        data: &[Instance<F>],
        weights: &[F],
        rows: Vec<usize>,
        schema: &Schema,
        params: &CartParams,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        if rows.is_empty() {
            return Err(ModelError::EmptyData);
        }
        if weights.len() != data.len() {
            return Err(ModelError::Invalid(format!(
                "{} weights for {} instances",
                weights.len(),
                data.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= F::zero())) {
            return Err(ModelError::NonFinite(format!("instance weight {w}")));
        }
        for &r in &rows {
            schema.check(&data[r])?;
        }
        let mut builder = Builder {
            data,
            weights,
            params,
            classes: schema.num_classes(),
            num_features: schema.num_features(),
            rng: SeededRng::new(params.seed),
            nodes: Vec::new(),
            depth: 0,
        };
        builder.grow(rows, 0);
        Ok(Self {
            nodes: builder.nodes,
            depth: builder.depth,
        })
    }

    pub fn fit(data: &[Instance<F>], weights: &[F], schema: &Schema, params: &CartParams) -> Result<Self, ModelError> {
        Self::fit_rows(data, weights, (0..data.len()).collect(), schema, params)
    }

    pub fn predict_class(&self, features: &[F]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if features[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `(feature, threshold)` of the root split, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, F)> {
        match self.nodes.first()? {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}

/// CART behind the model contract. Supports batch `fit` only.
#[derive(Debug, Clone)]
pub struct CartModel<F = f64> {
    schema: Schema,
    params: CartParams,
    tree: Option<CartTree<F>>,
}

impl<F: Scalar> CartModel<F> {
    pub fn new(schema: Schema, params: CartParams) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(Self {
            schema,
            params,
            tree: None,
        })
    }

    pub fn params(&self) -> &CartParams {
        &self.params
    }

    pub fn tree(&self) -> Option<&CartTree<F>> {
        self.tree.as_ref()
    }

    /// Weighted fit; discards any previous tree.
    pub fn fit_weighted(&mut self, data: &[Instance<F>], weights: &[F]) -> Result<(), ModelError> {
        self.tree = None;
        if data.is_empty() {
            return Err(ModelError::EmptyData);
        }
        self.tree = Some(CartTree::fit(data, weights, &self.schema, &self.params)?);
        Ok(())
    }
}

impl<F: Scalar> Model<F> for CartModel<F> {
    fn id(&self) -> &str {
        "cart"
    }

    fn paradigm(&self) -> Paradigm {
        Paradigm::Batch
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError> {
        self.schema.check_features(features)?;
        Ok(Prediction::class(
            self.tree.as_ref().map_or(0, |t| t.predict_class(features)),
        ))
    }

    fn fit(&mut self, data: &[Instance<F>]) -> Result<(), ModelError> {
        let weights = vec![F::one(); data.len()];
        self.fit_weighted(data, &weights)
    }

    fn reset(&mut self) {
        self.tree = None;
    }
}
