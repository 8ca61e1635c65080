//! Top-K recovery algorithms and score/ranking utilities.
//!
//! Rankers consume a [`ChoiceTable`](crate::choice_models::ChoiceTable): per-menu choice
//! mass that is either raw counts from a dataset or exact probabilities from a model.

mod borda;
mod mle;
mod spectral;

use std::fmt::Write as _;

pub use borda::{borda_count, borda_from_table};
pub use mle::{mle_fit, mnl_log_likelihood, MleFit, MleOptions};
pub use spectral::{
    build_markov_chain, spectral_rank, spectral_scores, stationary_distribution, ChainMode,
    MarkovChain, StationaryOptions,
};

use crate::error::{Error, Result};

/// One real score per item; larger is better.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("score of item {} is not finite", k + 1)));
        }
        Ok(ScoreVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Items sorted best first; equal scores keep index order.
    pub fn ordering(&self) -> Vec<usize> {
        ordering(&self.0)
    }

    pub fn top_k(&self, k: usize) -> Result<TopKSet> {
        top_k(&self.0, k)
    }

    /// CSV with header `item,score,rank`, one row per item in item order.
    pub fn to_csv(&self) -> String {
        let mut rank = vec![0; self.len()];
        for (r, &i) in self.ordering().iter().enumerate() {
            rank[i] = r + 1;
        }
        let mut s = String::from("item,score,rank\n");
        for (i, v) in self.0.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", i + 1, v, rank[i]);
        }
        s
    }
}

/// Indices sorted by descending score, ties broken toward the lower index.
pub fn ordering(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// A set of `K` items, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopKSet {
    items: Vec<usize>,
}

impl TopKSet {
    pub fn new(mut items: Vec<usize>) -> Self {
        items.sort_unstable();
        items.dedup();
        TopKSet { items }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn k(&self) -> usize {
        self.items.len()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    /// Items as 1-based ids.
    pub fn one_based(&self) -> Vec<usize> {
        self.items.iter().map(|i| i + 1).collect()
    }
}

/// The `K` highest-scoring items; ties go to the lowest index.
pub fn top_k(scores: &[f64], k: usize) -> Result<TopKSet> {
    if k < 1 || k > scores.len() {
        return Err(Error::domain(format!(
            "K must satisfy 1 <= K <= n, got K={k}, n={}",
            scores.len()
        )));
    }
    let mut ord = ordering(scores);
    ord.truncate(k);
    Ok(TopKSet::new(ord))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k(&[5., 2., 2., 1.], 2).unwrap().items(), &[0, 1]);
        assert_eq!(top_k(&[1., 1., 1.], 3).unwrap().items(), &[0, 1, 2]);
        assert_eq!(top_k(&[0., 0.], 1).unwrap().items(), &[0]);
        assert!(top_k(&[0., 0.], 0).is_err());
        assert!(top_k(&[0., 0.], 3).is_err());
    }

    #[test]
    fn csv_ranks() {
        let s = ScoreVector::new(vec![1.0, 3.0, 3.0]).unwrap();
        assert_eq!(s.to_csv(), "item,score,rank\n1,1,3\n2,3,1\n3,3,2\n");
        assert!(ScoreVector::new(vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn top_k_dominates_the_rest(v in proptest::collection::vec(-5i32..5, 1..12), k_off in 0usize..12) {
            let scores: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let k = 1 + k_off % scores.len();
            let set = top_k(&scores, k).unwrap();
            prop_assert_eq!(set.k(), k);
            for i in 0..scores.len() {
                for &j in set.items() {
                    if !set.contains(i) {
                        prop_assert!(scores[j] > scores[i] || (scores[j] == scores[i] && j < i));
                    }
                }
            }
        }
    }
}
