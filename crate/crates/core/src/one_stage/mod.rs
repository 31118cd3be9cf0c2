//! Pooled model: every observation is an independent draw from `P_{A,u}`.

mod brute_force;
mod mcmc;
mod signals;

pub use brute_force::{
    brute_force_posterior, estimate_evidence, log_marginal_likelihoods, prior_draws,
    BruteForceConfig,
};
pub use mcmc::{mcmc_posterior, McmcConfig, ProposalWeights};
pub use signals::{
    classify, posterior_p_values, ObservationSignal, Signal, SignalReport, SignalThresholds,
};

use serde::{Deserialize, Serialize};

use crate::distributions::HammingModel;
use crate::error::{Error, Result};
use crate::subset::{outside_count, GroundSet, Subset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub id: String,
    pub subset: Subset,
}

/// Pooled observations, all size-`n` subsets of one ground set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    ground: GroundSet,
    n: usize,
    observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(ground: GroundSet, n: usize, observations: Vec<Observation>) -> Result<Self> {
        if n == 0 || n >= ground.size() {
            return Err(Error::invalid(format!(
                "subset size must satisfy 0 < n < M, got n={n}, M={}",
                ground.size()
            )));
        }
        if observations.is_empty() {
            return Err(Error::invalid("dataset has no observations"));
        }
        for obs in &observations {
            if obs.subset.universe() != ground.size() || obs.subset.cardinality() != n {
                return Err(Error::invalid(format!(
                    "observation {:?} is not a size-{n} subset of the {}-item ground set",
                    obs.id,
                    ground.size()
                )));
            }
        }
        Ok(Dataset {
            ground,
            n,
            observations,
        })
    }

    /// Convenience constructor with ids `X1, X2, ...`.
    pub fn from_subsets(ground: GroundSet, n: usize, subsets: Vec<Subset>) -> Result<Self> {
        let observations = subsets
            .into_iter()
            .enumerate()
            .map(|(i, subset)| Observation {
                id: format!("X{}", i + 1),
                subset,
            })
            .collect();
        Self::new(ground, n, observations)
    }

    pub fn ground(&self) -> &GroundSet {
        &self.ground
    }

    pub fn universe(&self) -> usize {
        self.ground.size()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `N = M − n`.
    pub fn big_n(&self) -> usize {
        self.ground.size() - self.n
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn subsets(&self) -> Vec<Subset> {
        self.observations.iter().map(|o| o.subset).collect()
    }

    pub(crate) fn masks(&self) -> Vec<u64> {
        self.observations.iter().map(|o| o.subset.bits()).collect()
    }

    /// `#{i : item ∈ X_i}` for every item.
    pub fn selection_counts(&self) -> Vec<usize> {
        selection_counts(&self.masks(), self.universe())
    }
}

pub(crate) fn selection_counts(masks: &[u64], universe: usize) -> Vec<usize> {
    (0..universe)
        .map(|item| masks.iter().filter(|&&m| m >> item & 1 == 1).count())
        .collect()
}

/// Number of observations at each distance `k = 0..=n` from `center`.
pub(crate) fn distance_histogram(masks: &[u64], center: u64, n: usize) -> Vec<u32> {
    let mut hist = vec![0u32; n + 1];
    for &m in masks {
        hist[outside_count(m, center)] += 1;
    }
    hist
}

#[inline]
pub(crate) fn histogram_dot(hist: &[u32], row: &[f64]) -> f64 {
    hist.iter()
        .zip(row)
        .filter(|(&h, _)| h > 0)
        .map(|(&h, &v)| h as f64 * v)
        .sum()
}

/// `Σ_i ln P_{A,u}(X_i)`.
pub fn log_likelihood(data: &Dataset, model: &HammingModel) -> Result<f64> {
    let center = model.center();
    if center.universe() != data.universe() || center.cardinality() != data.n() {
        return Err(Error::invalid("model center does not match the dataset dimensions"));
    }
    Ok(data
        .observations
        .iter()
        .map(|o| model.log_pmf_at_distance(outside_count(o.subset.bits(), center.bits())))
        .sum())
}

/// A joint posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSample {
    pub center: Subset,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterProbability {
    pub center: Subset,
    pub probability: f64,
    /// Spread of the estimate across independent chains, when available.
    pub std_dev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Diagnostics {
    BruteForce {
        seed: u64,
        n_mc: usize,
        epsilon: f64,
        cdf_grid: usize,
        family_size: u64,
        retained: usize,
        discarded_mass: f64,
    },
    Mcmc {
        seed: u64,
        n_chains: usize,
        n_iter: usize,
        burn_in: usize,
        thin: usize,
        sigma2: f64,
        u_acceptance: Vec<f64>,
        center_acceptance: Vec<f64>,
        warnings: Vec<String>,
    },
}

/// Approximate posterior over `(A, u)` for the pooled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorOneStage {
    /// Centers by decreasing probability; ties broken by ascending bitmask.
    pub center_support: Vec<CenterProbability>,
    pub samples: Vec<JointSample>,
    /// Log evidence, when the method estimates it.
    pub log_evidence: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl PosteriorOneStage {
    /// Most probable center.
    pub fn mode(&self) -> Option<Subset> {
        self.center_support.first().map(|c| c.center)
    }

    pub fn probability_of(&self, center: &Subset) -> f64 {
        self.center_support
            .iter()
            .find(|c| c.center == *center)
            .map_or(0.0, |c| c.probability)
    }

    pub fn u_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.u).collect()
    }
}

/// Sorts by decreasing probability, ties by ascending mask.
pub(crate) fn sort_support(support: &mut [CenterProbability]) {
    support.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.center.bits().cmp(&b.center.bits()))
    });
}

/// Total-variation distance between two posteriors over centers.
pub fn total_variation(a: &[CenterProbability], b: &[CenterProbability]) -> f64 {
    use std::collections::BTreeMap;
    let mut diff: BTreeMap<u64, f64> = BTreeMap::new();
    for c in a {
        *diff.entry(c.center.bits()).or_default() += c.probability;
    }
    for c in b {
        *diff.entry(c.center.bits()).or_default() -= c.probability;
    }
    0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    pub(crate) fn table1() -> Dataset {
        let rows: [[usize; 3]; 12] = [
            [1, 2, 3],
            [1, 2, 3],
            [1, 2, 3],
            [1, 2, 7],
            [1, 2, 3],
            [1, 2, 3],
            [1, 2, 4],
            [1, 2, 3],
            [2, 3, 8],
            [1, 2, 3],
            [1, 2, 3],
            [5, 6, 8],
        ];
        let subsets = rows
            .iter()
            .map(|r| Subset::from_indices(10, &r.map(|i| i - 1)).unwrap())
            .collect();
        Dataset::from_subsets(GroundSet::new(10).unwrap(), 3, subsets).unwrap()
    }

    #[test]
    fn dataset_validation() {
        let g = GroundSet::new(5).unwrap();
        assert!(Dataset::from_subsets(g.clone(), 2, vec![]).is_err());
        let bad = Subset::from_indices(5, &[0, 1, 2]).unwrap();
        assert!(Dataset::from_subsets(g.clone(), 2, vec![bad]).is_err());
        assert!(Dataset::from_subsets(g, 5, vec![]).is_err());
    }

    #[test]
    fn selection_counts_of_table1() {
        let c = table1().selection_counts();
        assert_eq!(c, vec![10, 11, 9, 1, 1, 1, 1, 2, 0, 0]);
    }

    #[test]
    fn likelihood_of_single_point_mass() {
        let a = Subset::from_indices(10, &[0, 1, 2]).unwrap();
        let data = Dataset::from_subsets(GroundSet::new(10).unwrap(), 3, vec![a]).unwrap();
        let spec = ModelSpec::fisher(3, 7).unwrap();
        let m = HammingModel::new(a, 0.0, spec.family).unwrap();
        assert_eq!(log_likelihood(&data, &m).unwrap(), 0.0);
    }

    #[test]
    fn table1_maximum_likelihood_center() {
        let data = table1();
        let fam = ModelSpec::fisher(3, 7).unwrap().family;
        for &u in &[0.05, 0.3, 0.9] {
            let best = crate::combinatorics::enumerate_subsets(10, 3, 1000)
                .unwrap()
                .map(|a| {
                    let m = HammingModel::new(a, u, fam.clone()).unwrap();
                    (log_likelihood(&data, &m).unwrap(), a)
                })
                .max_by(|x, y| x.0.total_cmp(&y.0))
                .unwrap();
            assert_eq!(best.1.to_string(), "{1, 2, 3}");
        }
    }

    #[test]
    fn likelihood_depends_only_on_selection_counts() {
        // two datasets with the same per-item counts but different rows
        let g = GroundSet::new(6).unwrap();
        let s = |v: &[usize]| Subset::from_indices(6, v).unwrap();
        let d1 = Dataset::from_subsets(g.clone(), 2, vec![s(&[0, 1]), s(&[2, 3])]).unwrap();
        let d2 = Dataset::from_subsets(g, 2, vec![s(&[0, 2]), s(&[1, 3])]).unwrap();
        assert_eq!(d1.selection_counts(), d2.selection_counts());
        let fam = ModelSpec::fisher(2, 4).unwrap().family;
        for a in crate::combinatorics::enumerate_subsets(6, 2, 100).unwrap() {
            let m = HammingModel::new(a, 0.4, fam.clone()).unwrap();
            let (l1, l2) = (log_likelihood(&d1, &m).unwrap(), log_likelihood(&d2, &m).unwrap());
            assert!((l1 - l2).abs() < 1e-12);
        }
    }
}
