//! Single-tree learners: batch CART (Gini) and the streaming Hoeffding tree.

mod cart;
mod hoeffding;

pub use cart::{best_split, CartModel, CartParams, CartTree, Split};
pub use hoeffding::{hoeffding_bound, HoeffdingParams, HoeffdingTree};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("impurity of an empty class distribution is undefined")]
pub struct EmptyCounts;

/// Gini impurity `1 - sum((c_i / N)^2)`.
pub fn gini<F: Scalar>(counts: &[F]) -> Result<F, EmptyCounts> {
    let total: F = counts.iter().copied().sum();
    if total <= F::zero() {
        return Err(EmptyCounts);
    }
    Ok(gini_with_total(counts, total))
}

pub(crate) fn gini_with_total<F: Scalar>(counts: &[F], total: F) -> F {
    let sq: F = counts
        .iter()
        .map(|&c| {
            let p = c / total;
            p * p
        })
        .sum();
    F::one() - sq
}

/// Shannon entropy in bits of a (weighted) class distribution.
pub(crate) fn entropy<F: Scalar>(counts: &[F]) -> F {
    let total: F = counts.iter().copied().sum();
    if total <= F::zero() {
        return F::zero();
    }
    counts
        .iter()
        .filter(|&&c| c > F::zero())
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[10.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini(&[5.0, 5.0]).unwrap(), 0.5);
        assert!((gini(&[4.0f64, 4.0, 4.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(gini::<f32>(&[0.0, 0.0]), Err(EmptyCounts));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[3.0, 3.0]), 1.0);
        assert_eq!(entropy(&[5.0, 0.0]), 0.0);
        assert!((entropy(&[1.0f64, 1.0, 1.0, 1.0]) - 2.0).abs() < 1e-12);
    }
}
