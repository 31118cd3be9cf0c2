//! Metropolis-within-Gibbs over `(A, u)`.
//!
//! Each iteration first moves `u` by a Gaussian random walk on
//! `logit(u / upper)`, then proposes a new center by swapping one member `a`
//! for an item drawn from `{a} ∪ A^c` with weights `w(o)`. The candidate set is
//! the same for the forward and reverse swap, so the proposal ratio reduces
//! to `w(a) / w(o)`.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    distance_histogram, histogram_dot, selection_counts, sort_support, CenterProbability,
    Dataset, Diagnostics, JointSample, PosteriorOneStage,
};
use crate::error::{Error, Result};
use crate::math::{expit, logit};
use crate::model::ModelSpec;
use crate::rng::{stream_rng, streams, StreamRng};
use crate::sampling::sample_without_replacement;
use crate::subset::{BitIter, Subset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalWeights {
    /// `w(o) = #{i : o ∈ X_i} + 1`.
    SelectionCounts,
    /// `w(o) = 1`.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Variance of the random-walk step on the logit scale.
    pub sigma2: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub proposal: ProposalWeights,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            sigma2: 0.5,
            n_iter: 1_000_000,
            burn_in: 100_000,
            thin: 46,
            n_chains: 30,
            seed: 0,
            proposal: ProposalWeights::SelectionCounts,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::invalid(format!(
                "n_iter ({}) must exceed burn_in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if !(self.sigma2 > 0.0) || self.thin == 0 || self.n_chains == 0 {
            return Err(Error::invalid("MCMC needs sigma2 > 0, thin ≥ 1 and n_chains ≥ 1"));
        }
        Ok(())
    }
}

struct ChainOutput {
    samples: Vec<JointSample>,
    u_acceptance: f64,
    center_acceptance: f64,
}

struct Chain<'a> {
    masks: &'a [u64],
    spec: &'a ModelSpec,
    weights: &'a [f64],
    upper: f64,
    center: u64,
    u: f64,
    hist: Vec<u32>,
    row: Vec<f64>,
    scratch: Vec<f64>,
    log_lik: f64,
    log_prior: f64,
}

impl<'a> Chain<'a> {
    fn log_jacobian(&self, u: f64) -> f64 {
        // z = logit(u / upper): du/dz = u (1 - u / upper)
        u.ln() + (1.0 - u / self.upper).ln()
    }

    fn step_u(&mut self, rng: &mut StreamRng, step: f64) -> Result<bool> {
        let z = logit(self.u / self.upper) + step * rng.sample::<f64, _>(StandardNormal);
        let proposal = self.upper * expit(z);
        if !(proposal > 0.0 && proposal < self.upper) {
            return Ok(false);
        }
        self.spec.subset_log_pmf_into(proposal, &mut self.scratch)?;
        let log_lik = histogram_dot(&self.hist, &self.scratch);
        let log_prior = self.spec.prior.ln_density(proposal)?;
        let log_ratio = (log_lik + log_prior + self.log_jacobian(proposal))
            - (self.log_lik + self.log_prior + self.log_jacobian(self.u));
        if accept(log_ratio, rng) {
            self.u = proposal;
            self.log_lik = log_lik;
            self.log_prior = log_prior;
            std::mem::swap(&mut self.row, &mut self.scratch);
            return Ok(true);
        }
        Ok(false)
    }

    fn step_center(&mut self, rng: &mut StreamRng, m: usize) -> bool {
        let n = self.spec.n();
        let members = self.center;
        let out = BitIter(members).nth(rng.random_range(0..n)).unwrap();
        let candidates = ((!members) & crate::subset::full_mask(m)) | (1 << out);
        let total: f64 = BitIter(candidates).map(|o| self.weights[o]).sum();
        let mut target = rng.random::<f64>() * total;
        let mut inn = out;
        for o in BitIter(candidates) {
            inn = o;
            if target < self.weights[o] {
                break;
            }
            target -= self.weights[o];
        }
        if inn == out {
            return true;
        }
        let proposal = (members & !(1 << out)) | (1 << inn);
        let hist = distance_histogram(self.masks, proposal, n);
        let log_lik = histogram_dot(&hist, &self.row);
        let log_ratio =
            log_lik - self.log_lik + self.weights[out].ln() - self.weights[inn].ln();
        if accept(log_ratio, rng) {
            self.center = proposal;
            self.hist = hist;
            self.log_lik = log_lik;
            return true;
        }
        false
    }
}

fn accept(log_ratio: f64, rng: &mut StreamRng) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

fn run_chain(
    data: &Dataset,
    spec: &ModelSpec,
    weights: &[f64],
    config: &McmcConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let (m, n) = (data.universe(), data.n());
    let masks = data.masks();
    let mut rng = stream_rng(config.seed, streams::MCMC_CHAIN + chain as u64);
    let upper = spec.upper();
    let center = sample_without_replacement(crate::subset::full_mask(m), n, &mut rng);
    let mut u = spec.prior.sample(&mut rng)?;
    if !(u > 0.0 && u < upper) {
        u = 0.5 * upper;
    }
    let mut row = vec![0.0; n + 1];
    spec.subset_log_pmf_into(u, &mut row)?;
    let hist = distance_histogram(&masks, center, n);
    let mut state = Chain {
        masks: &masks,
        spec,
        weights,
        upper,
        center,
        u,
        log_lik: histogram_dot(&hist, &row),
        log_prior: spec.prior.ln_density(u)?,
        hist,
        row,
        scratch: vec![0.0; n + 1],
    };
    let step = config.sigma2.sqrt();
    let kept = (config.n_iter - config.burn_in).div_ceil(config.thin);
    let mut samples = Vec::with_capacity(kept);
    let (mut u_acc, mut a_acc) = (0usize, 0usize);
    for t in 0..config.n_iter {
        u_acc += state.step_u(&mut rng, step)? as usize;
        a_acc += state.step_center(&mut rng, m) as usize;
        if t >= config.burn_in && (t - config.burn_in) % config.thin == 0 {
            samples.push(JointSample {
                center: Subset::from_raw(m, state.center),
                u: state.u,
            });
        }
    }
    Ok(ChainOutput {
        samples,
        u_acceptance: u_acc as f64 / config.n_iter as f64,
        center_acceptance: a_acc as f64 / config.n_iter as f64,
    })
}

/// Runs `n_chains` independent chains and pools their thinned draws.
pub fn mcmc_posterior(
    data: &Dataset,
    spec: &ModelSpec,
    config: &McmcConfig,
) -> Result<PosteriorOneStage> {
    config.validate()?;
    if data.universe() != spec.universe() || data.n() != spec.n() {
        return Err(Error::invalid("model dimensions do not match the dataset"));
    }
    let weights: Vec<f64> = match config.proposal {
        ProposalWeights::SelectionCounts => selection_counts(&data.masks(), data.universe())
            .into_iter()
            .map(|c| c as f64 + 1.0)
            .collect(),
        ProposalWeights::Flat => vec![1.0; data.universe()],
    };
    let outputs: Vec<ChainOutput> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(data, spec, &weights, config, c))
        .collect::<Result<_>>()?;

    // per-chain frequencies give the spread across repetitions
    let mut per_chain: Vec<HashMap<u64, usize>> = Vec::with_capacity(outputs.len());
    let mut pooled: HashMap<u64, usize> = HashMap::new();
    for out in &outputs {
        let mut counts = HashMap::new();
        for s in &out.samples {
            *counts.entry(s.center.bits()).or_insert(0usize) += 1;
            *pooled.entry(s.center.bits()).or_insert(0usize) += 1;
        }
        per_chain.push(counts);
    }
    let total: usize = pooled.values().sum();
    let mut support: Vec<CenterProbability> = pooled
        .iter()
        .map(|(&bits, &count)| {
            let fractions: Vec<f64> = outputs
                .iter()
                .zip(&per_chain)
                .map(|(o, c)| *c.get(&bits).unwrap_or(&0) as f64 / o.samples.len() as f64)
                .collect();
            CenterProbability {
                center: Subset::from_raw(data.universe(), bits),
                probability: count as f64 / total as f64,
                std_dev: std_dev(&fractions),
            }
        })
        .collect();
    sort_support(&mut support);

    let u_acceptance: Vec<f64> = outputs.iter().map(|o| o.u_acceptance).collect();
    let center_acceptance: Vec<f64> = outputs.iter().map(|o| o.center_acceptance).collect();
    let mut warnings = Vec::new();
    for (c, (&ua, &aa)) in u_acceptance.iter().zip(&center_acceptance).enumerate() {
        for (what, rate) in [("u", ua), ("center", aa)] {
            if !(0.01..=0.9).contains(&rate) {
                warnings.push(format!("chain {c}: {what} acceptance rate {rate:.4}"));
            }
        }
    }
    let samples = outputs.into_iter().flat_map(|o| o.samples).collect();
    Ok(PosteriorOneStage {
        center_support: support,
        samples,
        log_evidence: None,
        diagnostics: Diagnostics::Mcmc {
            seed: config.seed,
            n_chains: config.n_chains,
            n_iter: config.n_iter,
            burn_in: config.burn_in,
            thin: config.thin,
            sigma2: config.sigma2,
            u_acceptance,
            center_acceptance,
            warnings,
        },
    })
}

fn std_dev(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::one_stage::tests::table1;

    fn quick() -> McmcConfig {
        McmcConfig {
            n_iter: 20_000,
            burn_in: 2_000,
            thin: 5,
            n_chains: 4,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        let bad = McmcConfig {
            n_iter: 10,
            burn_in: 10,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(McmcConfig::default().validate().is_ok());
    }

    #[test]
    fn table1_chain_finds_the_consensus() {
        let data = table1();
        let spec = ModelSpec::fisher(3, 7).unwrap();
        let post = mcmc_posterior(&data, &spec, &quick()).unwrap();
        assert_eq!(post.mode().unwrap().to_string(), "{1, 2, 3}");
        assert!(post.center_support[0].probability > 0.99);
        assert_eq!(post.samples.len(), 4 * 3600);
        assert!(post.samples.iter().all(|s| s.u > 0.0 && s.u < 1.0));
    }

    #[test]
    fn chains_are_reproducible() {
        let data = table1();
        let spec = ModelSpec::fisher(3, 7).unwrap();
        let a = mcmc_posterior(&data, &spec, &quick()).unwrap();
        let b = mcmc_posterior(&data, &spec, &quick()).unwrap();
        assert_eq!(a, b);
    }
}
