//! Exhaustive scheme: loop over every candidate center with a common Monte
//! Carlo sample of the dispersion prior, truncate negligible centers, then
//! draw `(A, u)` jointly with `u` from a gridded conditional.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    distance_histogram, histogram_dot, sort_support, CenterProbability, Dataset, Diagnostics,
    JointSample, PosteriorOneStage,
};
use crate::combinatorics::{
    check_enumeration_budget, rank_chunks, SubsetIter, DEFAULT_ENUMERATION_BUDGET,
};
use crate::error::{Error, Result};
use crate::math::{log_mean_exp, log_sum_exp};
use crate::model::ModelSpec;
use crate::rng::{stream_rng, streams};
use crate::sampling::{CategoricalTable, GridSampler, UniformGrid};
use crate::subset::Subset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BruteForceConfig {
    /// Centers with `#𝒫_n · P̂(X|A) ≤ epsilon · evidence` are dropped.
    pub epsilon: f64,
    /// Prior draws of `u` behind each marginal-likelihood estimate.
    pub n_mc: usize,
    /// Points of the uniform grid used to invert the conditional CDF of `u`.
    pub cdf_grid: usize,
    /// Joint posterior draws to produce.
    pub n_samples: usize,
    pub seed: u64,
    pub enumeration_budget: u64,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        BruteForceConfig {
            epsilon: 0.01,
            n_mc: 1000,
            cdf_grid: 10_000,
            n_samples: 1000,
            seed: 0,
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }
}

impl BruteForceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.n_mc == 0 || self.cdf_grid == 0 {
            return Err(Error::invalid(
                "brute-force settings need epsilon > 0, n_mc ≥ 1 and cdf_grid ≥ 1",
            ));
        }
        Ok(())
    }
}

/// `n_mc` stratified prior draws of `u` from the seed's prior stream, shared
/// by every center.
pub fn prior_draws(spec: &ModelSpec, n_mc: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, streams::PRIOR_DRAWS);
    spec.prior.stratified_sample(n_mc, &mut rng)
}

/// `ln P̂(X|A)` for every size-`n` center in ascending mask order, using the
/// common prior draws `us`. An empty `masks` gives all zeros.
pub fn log_marginal_likelihoods(
    masks: &[u64],
    spec: &ModelSpec,
    us: &[f64],
    budget: u64,
) -> Result<Vec<f64>> {
    let (m, n) = (spec.universe(), spec.n());
    let total = check_enumeration_budget(m, n, budget)?;
    let table = spec.distance_table(us)?;
    let chunks = rank_chunks(total, rayon::current_num_threads() * 4);
    let parts: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut cache: HashMap<Vec<u32>, f64> = HashMap::new();
            let mut buf = vec![0.0; table.len()];
            SubsetIter::range(m, n, start, end)
                .map(|a| {
                    let hist = distance_histogram(masks, a.bits(), n);
                    *cache.entry(hist).or_insert_with_key(|h| {
                        for (b, row) in buf.iter_mut().zip(&table) {
                            *b = histogram_dot(h, row);
                        }
                        log_mean_exp(&buf)
                    })
                })
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

/// `ln` of the evidence `(1/#𝒫_n) Σ_A P̂(X|A)` under a uniform prior on centers.
pub fn estimate_evidence(data: &Dataset, spec: &ModelSpec, config: &BruteForceConfig) -> Result<f64> {
    config.validate()?;
    let us = prior_draws(spec, config.n_mc, config.seed)?;
    let lml = log_marginal_likelihoods(&data.masks(), spec, &us, config.enumeration_budget)?;
    Ok(log_mean_exp(&lml))
}

/// Posterior over `(A, u)` by the exhaustive scheme.
pub fn brute_force_posterior(
    data: &Dataset,
    spec: &ModelSpec,
    config: &BruteForceConfig,
) -> Result<PosteriorOneStage> {
    config.validate()?;
    check_dims(data, spec)?;
    let (m, n) = (data.universe(), data.n());
    let masks = data.masks();
    let us = prior_draws(spec, config.n_mc, config.seed)?;
    let lml = log_marginal_likelihoods(&masks, spec, &us, config.enumeration_budget)?;
    let family_size = lml.len() as u64;
    let log_evidence = log_mean_exp(&lml);
    let log_total = log_sum_exp(&lml);
    if !log_total.is_finite() {
        return Err(Error::Numerical("marginal likelihood vanishes for every center".into()));
    }

    // keep A when #𝒫_n · P̂(X|A) > ε · evidence
    let threshold = config.epsilon.ln() + log_evidence - (family_size as f64).ln();
    let mut support: Vec<CenterProbability> = Vec::new();
    for (a, &l) in SubsetIter::range(m, n, 0, family_size).zip(&lml) {
        if l > threshold {
            support.push(CenterProbability {
                center: a,
                probability: (l - log_total).exp(),
                std_dev: None,
            });
        }
    }
    if support.is_empty() {
        return Err(Error::Numerical(format!(
            "epsilon = {} truncates every center; lower it",
            config.epsilon
        )));
    }
    sort_support(&mut support);
    let retained_mass: f64 = support.iter().map(|c| c.probability).sum();

    let samples = draw_joint_samples(&masks, spec, &support, config)?;

    Ok(PosteriorOneStage {
        diagnostics: Diagnostics::BruteForce {
            seed: config.seed,
            n_mc: config.n_mc,
            epsilon: config.epsilon,
            cdf_grid: config.cdf_grid,
            family_size,
            retained: support.len(),
            discarded_mass: (1.0 - retained_mass).max(0.0),
        },
        center_support: support,
        samples,
        log_evidence: Some(log_evidence),
    })
}

fn check_dims(data: &Dataset, spec: &ModelSpec) -> Result<()> {
    if data.universe() != spec.universe() || data.n() != spec.n() {
        return Err(Error::invalid(format!(
            "model is for n={}, M={} but the data has n={}, M={}",
            spec.n(),
            spec.universe(),
            data.n(),
            data.universe()
        )));
    }
    Ok(())
}

/// Gridded conditional of `u` given the data and a center.
pub(crate) fn conditional_u_sampler(
    masks: &[u64],
    spec: &ModelSpec,
    center: &Subset,
    grid: &UniformGrid,
) -> Result<GridSampler> {
    let hist = distance_histogram(masks, center.bits(), spec.n());
    let mut row = vec![0.0; spec.n() + 1];
    let logd = grid
        .points()
        .iter()
        .map(|&u| {
            spec.subset_log_pmf_into(u, &mut row)?;
            Ok(spec.prior.ln_density(u)? + histogram_dot(&hist, &row))
        })
        .collect::<Result<Vec<f64>>>()?;
    GridSampler::from_log_density(grid, &logd)
}

fn draw_joint_samples(
    masks: &[u64],
    spec: &ModelSpec,
    support: &[CenterProbability],
    config: &BruteForceConfig,
) -> Result<Vec<JointSample>> {
    let grid = UniformGrid::new(spec.upper(), config.cdf_grid)?;
    let weights: Vec<f64> = support.iter().map(|c| c.probability).collect();
    let table = CategoricalTable::new(&weights)?;
    let mut rng = stream_rng(config.seed, streams::POSTERIOR_DRAWS);
    let picks: Vec<usize> = (0..config.n_samples).map(|_| table.sample(&mut rng)).collect();

    let mut needed: Vec<usize> = picks.clone();
    needed.sort_unstable();
    needed.dedup();
    let samplers: HashMap<usize, GridSampler> = needed
        .par_iter()
        .map(|&i| Ok((i, conditional_u_sampler(masks, spec, &support[i].center, &grid)?)))
        .collect::<Result<_>>()?;

    Ok(picks
        .into_iter()
        .map(|i| JointSample {
            center: support[i].center,
            u: samplers[&i].sample(&mut rng),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::one_stage::tests::table1;
    use crate::subset::GroundSet;

    #[test]
    fn empty_data_has_zero_log_evidence() {
        let spec = ModelSpec::fisher(2, 4).unwrap();
        let us = prior_draws(&spec, 50, 1).unwrap();
        let lml = log_marginal_likelihoods(&[], &spec, &us, 1000).unwrap();
        assert_eq!(lml.len(), 15);
        assert!(log_mean_exp(&lml).abs() < 1e-12);
    }

    #[test]
    fn table1_concentrates_on_123() {
        let data = table1();
        let spec = ModelSpec::fisher(3, 7).unwrap();
        let post = brute_force_posterior(&data, &spec, &BruteForceConfig::default()).unwrap();
        assert_eq!(post.mode().unwrap().to_string(), "{1, 2, 3}");
        assert!(post.center_support[0].probability > 1.0 - 1e-6);
        assert_eq!(post.samples.len(), 1000);
        assert!(post.samples.iter().all(|s| s.u > 0.0 && s.u <= 1.0));
    }

    #[test]
    fn flat_likelihood_gives_flat_posterior() {
        // u pinned at 1 by a degenerate prior support: every center equally likely
        let g = GroundSet::new(6).unwrap();
        let x = Subset::from_indices(6, &[0, 1]).unwrap();
        let data = Dataset::from_subsets(g, 2, vec![x]).unwrap();
        let spec = ModelSpec::fisher(2, 4).unwrap();
        let lml = log_marginal_likelihoods(&data.masks(), &spec, &[1.0; 4], 1000).unwrap();
        assert!(lml.iter().all(|&l| (l - lml[0]).abs() < 1e-12));
    }

    #[test]
    fn rejects_mismatched_model() {
        let data = table1();
        let spec = ModelSpec::fisher(2, 8).unwrap();
        assert!(brute_force_posterior(&data, &spec, &BruteForceConfig::default()).is_err());
    }

    #[test]
    fn huge_epsilon_truncates_everything() {
        let data = table1();
        let spec = ModelSpec::fisher(3, 7).unwrap();
        let cfg = BruteForceConfig {
            epsilon: 1e6,
            ..Default::default()
        };
        assert!(matches!(
            brute_force_posterior(&data, &spec, &cfg),
            Err(Error::Numerical(_))
        ));
    }
}
