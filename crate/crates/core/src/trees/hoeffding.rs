//! Hoeffding tree (VFDT) for numeric attributes.
//!
//! Leaves keep class counts and, per feature, one Gaussian estimator per
//! class. Every `grace_period` instances a leaf scores 10 equal-width
//! candidate thresholds per feature by information gain and splits when the
//! best gain beats the runner-up by more than the Hoeffding bound, or when
//! the bound falls below the tie threshold.

use serde::{Deserialize, Serialize};

use super::entropy;
use crate::instance::{Instance, Prediction, Schema};
use crate::model::{Model, ModelError, Paradigm};
use crate::scalar::{argmax, Scalar};

/// `sqrt(R^2 ln(1/delta) / (2n))`.
pub fn hoeffding_bound(range: f64, delta: f64, n: f64) -> f64 {
    (range * range * (1.0 / delta).ln() / (2.0 * n)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoeffdingParams {
    /// Split confidence.
    pub delta: f64,
    pub grace_period: usize,
    /// Tie threshold.
    pub tie_tau: f64,
    /// Candidate thresholds per feature.
    pub split_bins: usize,
    /// A split needs two branches holding at least this fraction of weight.
    pub min_branch_fraction: f64,
}

impl Default for HoeffdingParams {
    fn default() -> Self {
        Self {
            delta: 1e-7,
            grace_period: 200,
            tie_tau: 0.05,
            split_bins: 10,
            min_branch_fraction: 0.01,
        }
    }
}

impl HoeffdingParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ModelError::Invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.grace_period == 0 {
            return Err(ModelError::Invalid("grace_period must be at least 1".into()));
        }
        if self.tie_tau.is_nan() || self.tie_tau < 0.0 {
            return Err(ModelError::Invalid(format!("tie_tau must be >= 0, got {}", self.tie_tau)));
        }
        if self.split_bins == 0 {
            return Err(ModelError::Invalid("split_bins must be at least 1".into()));
        }
        Ok(())
    }
}

/// Weighted running mean and variance (West's algorithm) with observed range.
#[derive(Debug, Clone, PartialEq)]
struct Gaussian<F> {
    weight: F,
    mean: F,
    m2: F,
    min: F,
    max: F,
}

impl<F: Scalar> Gaussian<F> {
    fn new() -> Self {
        Self {
            weight: F::zero(),
            mean: F::zero(),
            m2: F::zero(),
            min: F::infinity(),
            max: F::neg_infinity(),
        }
    }

    fn add(&mut self, x: F, w: F) {
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        let total = self.weight + w;
        let delta = x - self.mean;
        let r = delta * w / total;
        self.mean += r;
        self.m2 += self.weight * delta * r;
        self.weight = total;
    }

    fn std_dev(&self) -> f64 {
        if self.weight > F::one() {
            (self.m2 / (self.weight - F::one())).as_f64().max(0.0).sqrt()
        } else {
            0.0
        }
    }

    /// Estimated weight of observations `<= x`.
    fn weight_le(&self, x: F) -> F {
        if self.weight <= F::zero() || x < self.min {
            return F::zero();
        }
        if x >= self.max {
            return self.weight;
        }
        let sd = self.std_dev();
        let frac = if sd > 0.0 {
            let z = (x.as_f64() - self.mean.as_f64()) / (sd * std::f64::consts::SQRT_2);
            0.5 * (1.0 + libm::erf(z))
        } else if x < self.mean {
            0.0
        } else {
            1.0
        };
        self.weight * F::of(frac)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LeafStats<F> {
    class_counts: Vec<F>,
    /// `observers[feature][class]`
    observers: Vec<Vec<Gaussian<F>>>,
    weight_at_last_eval: F,
}

impl<F: Scalar> LeafStats<F> {
    fn new(class_counts: Vec<F>, num_features: usize) -> Self {
        let classes = class_counts.len();
        let weight: F = class_counts.iter().copied().sum();
        Self {
            class_counts,
            observers: vec![vec![Gaussian::new(); classes]; num_features],
            weight_at_last_eval: weight,
        }
    }

    fn weight(&self) -> F {
        self.class_counts.iter().copied().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node<F> {
    Leaf(LeafStats<F>),
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate<F> {
    feature: usize,
    threshold: F,
    merit: f64,
    left: Vec<F>,
    right: Vec<F>,
}

/// Incremental decision tree; supports `learn_one` only.
#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingTree<F = f64> {
    schema: Schema,
    params: HoeffdingParams,
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> HoeffdingTree<F> {
    pub fn new(schema: Schema, params: HoeffdingParams) -> Result<Self, ModelError> {
        params.validate()?;
        let root = Node::Leaf(LeafStats::new(
            vec![F::zero(); schema.num_classes()],
            schema.num_features(),
        ));
        Ok(Self {
            schema,
            params,
            nodes: vec![root],
        })
    }

    pub fn params(&self) -> &HoeffdingParams {
        &self.params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn root_split(&self) -> Option<(usize, F)> {
        match &self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf(_) => None,
        }
    }

    /// Class counts at the root while it is still a leaf.
    pub fn root_counts(&self) -> Option<&[F]> {
        match &self.nodes[0] {
            Node::Leaf(stats) => Some(&stats.class_counts),
            Node::Split { .. } => None,
        }
    }

    fn leaf_index(&self, features: &[F]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf(_) => return id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if features[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    fn info_gain(&self, pre: &[F], left: &[F], right: &[F]) -> f64 {
        let total: F = pre.iter().copied().sum();
        let lw: F = left.iter().copied().sum();
        let rw: F = right.iter().copied().sum();
        let min_w = F::of(self.params.min_branch_fraction) * total;
        if lw < min_w || rw < min_w || lw <= F::zero() || rw <= F::zero() {
            return f64::NEG_INFINITY;
        }
        let post = (lw / total) * entropy(left) + (rw / total) * entropy(right);
        (entropy(pre) - post).as_f64()
    }

    /// Best threshold for each feature, in feature order.
    fn candidates(&self, stats: &LeafStats<F>) -> Vec<Candidate<F>> {
        let bins = self.params.split_bins;
        let mut out = Vec::new();
        for (feature, per_class) in stats.observers.iter().enumerate() {
            let lo = per_class.iter().map(|g| g.min).fold(F::infinity(), F::min);
            let hi = per_class.iter().map(|g| g.max).fold(F::neg_infinity(), F::max);
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                continue;
            }
            let step = (hi - lo) / F::of_usize(bins + 1);
            let mut best: Option<Candidate<F>> = None;
            for i in 1..=bins {
                let threshold = lo + step * F::of_usize(i);
                let left: Vec<F> = per_class.iter().map(|g| g.weight_le(threshold)).collect();
                let right: Vec<F> = per_class
                    .iter()
                    .zip(&left)
                    .map(|(g, &l)| (g.weight - l).max(F::zero()))
                    .collect();
                let merit = self.info_gain(&stats.class_counts, &left, &right);
                if best.as_ref().is_none_or(|b| merit > b.merit) {
                    best = Some(Candidate {
                        feature,
                        threshold,
                        merit,
                        left,
                        right,
                    });
                }
            }
            if let Some(b) = best.filter(|b| b.merit.is_finite()) {
                out.push(b);
            }
        }
        out
    }

    fn attempt_split(&mut self, leaf: usize) {
        let Node::Leaf(stats) = &self.nodes[leaf] else {
            return;
        };
        if stats.class_counts.iter().filter(|&&c| c > F::zero()).count() < 2 {
            return;
        }
        let mut candidates = self.candidates(stats);
        // stable sort keeps lower feature indices first among equal merits
        candidates.sort_by(|a, b| b.merit.partial_cmp(&a.merit).unwrap_or(std::cmp::Ordering::Equal));
        let Some(best) = candidates.first() else {
            return;
        };
        // not splitting scores a merit of 0
        let second = candidates.get(1).map_or(0.0, |c| c.merit).max(0.0);
        if best.merit <= 0.0 {
            return;
        }
        let range = (self.schema.num_classes() as f64).log2();
        let n = stats.weight().as_f64();
        let eps = hoeffding_bound(range, self.params.delta, n);
        if best.merit - second > eps || eps < self.params.tie_tau {
            let best = candidates.swap_remove(0);
            let nf = self.schema.num_features();
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf(LeafStats::new(best.left, nf)));
            self.nodes.push(Node::Leaf(LeafStats::new(best.right, nf)));
            self.nodes[leaf] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right: left + 1,
            };
            log::trace!("split leaf {leaf} on feature {} at {}", best.feature, best.threshold);
        }
    }
}

impl<F: Scalar> Model<F> for HoeffdingTree<F> {
    fn id(&self) -> &str {
        "hoeffding_tree"
    }

    fn paradigm(&self) -> Paradigm {
        Paradigm::Streaming
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, features: &[F]) -> Result<Prediction, ModelError> {
        self.schema.check_features(features)?;
        match &self.nodes[self.leaf_index(features)] {
            Node::Leaf(stats) => Ok(Prediction::class(argmax(&stats.class_counts))),
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    fn learn_one(&mut self, instance: &Instance<F>) -> Result<(), ModelError> {
        self.schema.check(instance)?;
        let leaf = self.leaf_index(&instance.features);
        let grace = F::of_usize(self.params.grace_period);
        let due = {
            let Node::Leaf(stats) = &mut self.nodes[leaf] else {
                unreachable!("leaf_index returns leaves")
            };
            stats.class_counts[instance.label] += F::one();
            for (obs, &x) in stats.observers.iter_mut().zip(&instance.features) {
                obs[instance.label].add(x, F::one());
            }
            let seen = stats.weight();
            if seen - stats.weight_at_last_eval >= grace {
                stats.weight_at_last_eval = seen;
                true
            } else {
                false
            }
        };
        if due {
            self.attempt_split(leaf);
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.nodes.clear();
        self.nodes.push(Node::Leaf(LeafStats::new(
            vec![F::zero(); self.schema.num_classes()],
            self.schema.num_features(),
        )));
    }
}
