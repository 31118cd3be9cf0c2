use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dtable::{precompute_tables, split_weights, support_of, DTable, LabTable};
use super::{GroupedDataset, QuadConfig, TwoStageSpec};
use crate::alpha::{split_composition_bounded, AlphaPartition};
use crate::combinatorics::{check_enumeration_budget, SubsetIter, DEFAULT_ENUMERATION_BUDGET};
use crate::error::{Error, Result};
use crate::math::{binomial_f64, log_mean_exp, log_sum_exp};
use crate::one_stage::{estimate_evidence, prior_draws, BruteForceConfig, CenterProbability};
use crate::rng::{stream_rng, streams};
use crate::sampling::{
    sample_log_index, sample_without_replacement, CategoricalTable, GridSampler, UniformGrid,
};
use crate::subset::{outside_count, Subset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStageConfig {
    /// Centers with `#𝒫_n · P̂(X|A) ≤ epsilon · evidence` are dropped.
    pub epsilon: f64,
    /// Prior draws of the top-level `u`.
    pub n_mc: usize,
    /// Grid points for inverting the conditional CDFs of `u` and `u_i`.
    pub cdf_grid: usize,
    /// Ancestral draws of `(A, u, A_i, u_i)`.
    pub n_samples: usize,
    pub seed: u64,
    pub quad: QuadConfig,
    pub enumeration_budget: u64,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        TwoStageConfig {
            epsilon: 0.01,
            n_mc: 1000,
            cdf_grid: 10_000,
            n_samples: 1000,
            seed: 0,
            quad: QuadConfig::default(),
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }
}

impl TwoStageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.n_mc == 0 || self.cdf_grid == 0 {
            return Err(Error::invalid(
                "two-stage settings need epsilon > 0, n_mc ≥ 1 and cdf_grid ≥ 1",
            ));
        }
        self.quad.validate()
    }

    /// Matching settings for the pooled model.
    pub fn pooled(&self) -> BruteForceConfig {
        BruteForceConfig {
            epsilon: self.epsilon,
            n_mc: self.n_mc,
            cdf_grid: self.cdf_grid,
            n_samples: self.n_samples,
            seed: self.seed,
            enumeration_budget: self.enumeration_budget,
        }
    }
}

/// One ancestral draw; lab vectors follow the dataset's lab order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncestralSample {
    pub center: Subset,
    pub u: f64,
    pub lab_centers: Vec<Subset>,
    pub lab_u: Vec<f64>,
    /// `k_i = #(A_i ∩ A^c)`.
    pub lab_distance: Vec<usize>,
    /// `Γ_i = Σ_{k ≥ k_i} e_u(k)`.
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageDiagnostics {
    pub seed: u64,
    pub n_mc: usize,
    pub epsilon: f64,
    pub cdf_grid: usize,
    pub quad_nodes: usize,
    pub family_size: u64,
    pub retained: usize,
    pub discarded_mass: f64,
    /// `#𝒮(X_i)` per lab.
    pub lab_compositions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTwoStage {
    pub lab_ids: Vec<String>,
    /// Centers by decreasing probability; ties broken by ascending bitmask.
    pub center_support: Vec<CenterProbability>,
    pub samples: Vec<AncestralSample>,
    pub log_evidence: f64,
    pub diagnostics: TwoStageDiagnostics,
}

impl PosteriorTwoStage {
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

/// Per-lab log marginals `ln P(X_i | s̄, u_j)` for every table row and draw.
fn lab_log_marginals(table: &LabTable, top_rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..table.num_compositions())
        .into_par_iter()
        .map(|pos| top_rows.iter().map(|row| table.log_marginal(pos, row)).collect())
        .collect()
}

/// `ln (1/N) Σ_j Π_i P(X_i | A, u_j)` for every center in ascending mask
/// order, with `us` the common top-level draws.
pub fn two_stage_log_likelihoods(
    tables: &DTable,
    spec: &TwoStageSpec,
    us: &[f64],
    budget: u64,
) -> Result<Vec<f64>> {
    let (m, n) = (tables.universe(), tables.n());
    let total = check_enumeration_budget(m, n, budget)?;
    let top_rows = spec.top.distance_table(us)?;
    let per_lab: Vec<Vec<Vec<f64>>> = tables
        .labs
        .iter()
        .map(|t| lab_log_marginals(t, &top_rows))
        .collect();
    let centers: Vec<Subset> = SubsetIter::range(m, n, 0, total).collect();
    centers
        .par_iter()
        .map(|a| {
            let positions = tables
                .labs
                .iter()
                .map(|t| t.position(a))
                .collect::<Result<Vec<_>>>()?;
            let sums: Vec<f64> = (0..us.len())
                .map(|j| {
                    positions
                        .iter()
                        .zip(&per_lab)
                        .map(|(&pos, lab)| lab[pos][j])
                        .sum()
                })
                .collect();
            Ok(log_mean_exp(&sums))
        })
        .collect()
}

/// Posterior of the two-level model; builds the lab tables first.
pub fn two_stage_posterior(
    data: &GroupedDataset,
    spec: &TwoStageSpec,
    config: &TwoStageConfig,
) -> Result<PosteriorTwoStage> {
    config.validate()?;
    let tables = precompute_tables(data, spec, &config.quad)?;
    two_stage_posterior_with(data, spec, &tables, config)
}

/// As [`two_stage_posterior`] with prebuilt (for instance cached) tables.
pub fn two_stage_posterior_with(
    data: &GroupedDataset,
    spec: &TwoStageSpec,
    tables: &DTable,
    config: &TwoStageConfig,
) -> Result<PosteriorTwoStage> {
    config.validate()?;
    spec.check_data(data)?;
    tables.check_matches(data, spec, &config.quad)?;
    let (m, n) = (data.universe(), data.n());
    let us = prior_draws(&spec.top, config.n_mc, config.seed)?;
    let lml = two_stage_log_likelihoods(tables, spec, &us, config.enumeration_budget)?;
    let family_size = lml.len() as u64;
    let log_evidence = log_mean_exp(&lml);
    let log_total = log_sum_exp(&lml);
    if !log_total.is_finite() {
        return Err(Error::Numerical("marginal likelihood vanishes for every center".into()));
    }
    let threshold = config.epsilon.ln() + log_evidence - (family_size as f64).ln();
    let mut support: Vec<CenterProbability> = SubsetIter::range(m, n, 0, family_size)
        .zip(&lml)
        .filter(|(_, &l)| l > threshold)
        .map(|(a, &l)| CenterProbability {
            center: a,
            probability: (l - log_total).exp(),
            std_dev: None,
        })
        .collect();
    if support.is_empty() {
        return Err(Error::Numerical(format!(
            "epsilon = {} truncates every center; lower it",
            config.epsilon
        )));
    }
    support.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.center.bits().cmp(&b.center.bits()))
    });
    let retained_mass: f64 = support.iter().map(|c| c.probability).sum();

    let samples = Ancestral::new(data, spec, tables, config)?.draw(&support)?;

    Ok(PosteriorTwoStage {
        lab_ids: data.labs().iter().map(|l| l.id.clone()).collect(),
        diagnostics: TwoStageDiagnostics {
            seed: config.seed,
            n_mc: config.n_mc,
            epsilon: config.epsilon,
            cdf_grid: config.cdf_grid,
            quad_nodes: config.quad.nodes,
            family_size,
            retained: support.len(),
            discarded_mass: (1.0 - retained_mass).max(0.0),
            lab_compositions: tables.labs.iter().map(|t| t.num_compositions()).collect(),
        },
        center_support: support,
        samples,
        log_evidence,
    })
}

/// `(r, q)` masses of one lab at one center, before the `e_u(n−q)/C_n(q)`
/// factor: `ln Σ_{s ∈ 𝒮(X;r)} G(r) Σ_{T(s;q)} Π C(·)·C(·)`.
struct LabCenterTerms {
    extended: AlphaPartition,
    /// `(members of the r group, q, ln base mass)`.
    entries: Vec<(usize, usize, f64)>,
}

struct Ancestral<'a> {
    data: &'a GroupedDataset,
    spec: &'a TwoStageSpec,
    tables: &'a DTable,
    config: &'a TwoStageConfig,
    /// `r` groups per lab, as composition indices.
    groups: Vec<Vec<Vec<usize>>>,
    top_grid: UniformGrid,
    top_rows: Vec<Vec<f64>>,
    top_ln_prior: Vec<f64>,
    lab_grid: UniformGrid,
    lab_rows: Vec<Vec<f64>>,
    lab_ln_prior: Vec<f64>,
}

impl<'a> Ancestral<'a> {
    fn new(
        data: &'a GroupedDataset,
        spec: &'a TwoStageSpec,
        tables: &'a DTable,
        config: &'a TwoStageConfig,
    ) -> Result<Self> {
        let top_grid = UniformGrid::new(spec.top.upper(), config.cdf_grid)?;
        let lab_grid = UniformGrid::new(spec.lab.upper(), config.cdf_grid)?;
        let top_rows = spec.top.distance_table(top_grid.points())?;
        let lab_rows = lab_grid
            .points()
            .iter()
            .map(|&v| spec.lab.family.log_pmf(v))
            .collect::<Result<Vec<_>>>()?;
        let top_ln_prior = top_grid
            .points()
            .iter()
            .map(|&u| spec.top.prior.ln_density(u))
            .collect::<Result<Vec<_>>>()?;
        let lab_ln_prior = lab_grid
            .points()
            .iter()
            .map(|&v| spec.lab.prior.ln_density(v))
            .collect::<Result<Vec<_>>>()?;
        let groups = tables
            .labs
            .iter()
            .map(|t| t.index.groups().into_iter().map(|(_, g)| g.to_vec()).collect())
            .collect();
        Ok(Ancestral {
            data,
            spec,
            tables,
            config,
            groups,
            top_grid,
            top_rows,
            top_ln_prior,
            lab_grid,
            lab_rows,
            lab_ln_prior,
        })
    }

    /// Gridded conditional of `u` given the data and `A`.
    fn u_sampler(&self, positions: &[usize]) -> Result<GridSampler> {
        let logd: Vec<f64> = self
            .top_rows
            .iter()
            .zip(&self.top_ln_prior)
            .map(|(row, lp)| {
                lp + positions
                    .iter()
                    .zip(&self.tables.labs)
                    .map(|(&pos, t)| t.log_marginal(pos, row))
                    .sum::<f64>()
            })
            .collect();
        GridSampler::from_log_density(&self.top_grid, &logd)
    }

    fn lab_terms(&self, lab: usize, a: &Subset) -> LabCenterTerms {
        let table = &self.tables.labs[lab];
        let n = self.data.n();
        let counts = table.alpha.counts();
        let center = table.center_counts(a);
        let mut w = vec![0.0; n + 1];
        let mut entries = Vec::new();
        for (gi, members) in self.groups[lab].iter().enumerate() {
            let ln_g = table.log_g_of_group(members);
            let mut mass = vec![0.0; n + 1];
            for &i in members {
                split_weights(&support_of(&table.index.compositions[i]), &counts, &center, &mut w);
                for (acc, v) in mass.iter_mut().zip(&w) {
                    *acc += v;
                }
            }
            for (q, &v) in mass.iter().enumerate() {
                if v > 0.0 {
                    entries.push((gi, q, ln_g + v.ln()));
                }
            }
        }
        LabCenterTerms {
            extended: table.alpha.extend_with(a),
            entries,
        }
    }

    /// Draws `A_i` given `A` and `u` (through `top_row`): first `(r, q)`,
    /// then the extended counts `s̃`, then the items cell by cell.
    fn draw_lab_center<R: rand::Rng + ?Sized>(
        &self,
        lab: usize,
        terms: &LabCenterTerms,
        top_row: &[f64],
        rng: &mut R,
    ) -> Result<Subset> {
        let n = self.data.n();
        let table = &self.tables.labs[lab];
        let logw: Vec<f64> = terms
            .entries
            .iter()
            .map(|&(_, q, base)| base + top_row[n - q])
            .collect();
        let pick = sample_log_index(&logw, rng)
            .ok_or_else(|| Error::Numerical(format!("no admissible (r, q) for lab {}", table.lab_id)))?;
        let (gi, q, _) = terms.entries[pick];

        let ext_counts = terms.extended.counts();
        let mut candidates = Vec::new();
        let mut weights = Vec::new();
        for &i in &self.groups[lab][gi] {
            let buckets = split_composition_bounded(&table.index.compositions[i], Some(&ext_counts));
            for s in buckets.into_iter().nth(q).unwrap_or_default() {
                let w: f64 = s
                    .iter()
                    .zip(&ext_counts)
                    .map(|(&v, &c)| binomial_f64(c, v as usize))
                    .product();
                if w > 0.0 {
                    candidates.push(s);
                    weights.push(w);
                }
            }
        }
        let idx = CategoricalTable::new(&weights)?.sample(rng);
        let mut bits = 0u64;
        for (cell, &k) in candidates[idx].iter().enumerate() {
            if k > 0 {
                bits |= sample_without_replacement(terms.extended.cell(cell), k as usize, rng);
            }
        }
        Subset::from_bits(self.data.universe(), bits)
    }

    /// Gridded conditional of `u_i` given `A_i` and the lab's operators.
    fn lab_u_sampler(&self, masks: &[u64], lab_center: u64) -> Result<GridSampler> {
        let ks: Vec<usize> = masks.iter().map(|&x| outside_count(x, lab_center)).collect();
        let logd: Vec<f64> = self
            .lab_rows
            .iter()
            .zip(&self.lab_ln_prior)
            .map(|(row, lp)| lp + ks.iter().map(|&k| row[k]).sum::<f64>())
            .collect();
        GridSampler::from_log_density(&self.lab_grid, &logd)
    }

    fn draw(&self, support: &[CenterProbability]) -> Result<Vec<AncestralSample>> {
        let config = self.config;
        let weights: Vec<f64> = support.iter().map(|c| c.probability).collect();
        let table = CategoricalTable::new(&weights)?;
        let mut rng = stream_rng(config.seed, streams::POSTERIOR_DRAWS);
        let picks: Vec<usize> = (0..config.n_samples).map(|_| table.sample(&mut rng)).collect();
        let mut needed = picks.clone();
        needed.sort_unstable();
        needed.dedup();

        let labs = self.data.num_labs();
        type Prepared = (GridSampler, Vec<LabCenterTerms>);
        let prepared: HashMap<usize, Prepared> = needed
            .par_iter()
            .map(|&i| {
                let a = support[i].center;
                let positions = self
                    .tables
                    .labs
                    .iter()
                    .map(|t| t.position(&a))
                    .collect::<Result<Vec<_>>>()?;
                let sampler = self.u_sampler(&positions)?;
                let terms = (0..labs).map(|l| self.lab_terms(l, &a)).collect();
                Ok((i, (sampler, terms)))
            })
            .collect::<Result<_>>()?;

        let lab_masks: Vec<Vec<u64>> = self.data.labs().iter().map(|l| l.masks()).collect();
        let n = self.data.n();
        picks
            .par_iter()
            .enumerate()
            .map(|(d, &i)| {
                let mut rng = stream_rng(config.seed, streams::ANCESTRAL_DRAW + d as u64);
                let a = support[i].center;
                let (sampler, terms) = &prepared[&i];
                let u = sampler.sample(&mut rng);
                let mut top_row = vec![0.0; n + 1];
                self.spec.top.subset_log_pmf_into(u, &mut top_row)?;
                let pmf = self.spec.top.family.pmf(u)?;
                let mut tail = vec![0.0; n + 2];
                for k in (0..=n).rev() {
                    tail[k] = tail[k + 1] + pmf[k];
                }
                let mut sample = AncestralSample {
                    center: a,
                    u,
                    lab_centers: Vec::with_capacity(labs),
                    lab_u: Vec::with_capacity(labs),
                    lab_distance: Vec::with_capacity(labs),
                    gamma: Vec::with_capacity(labs),
                };
                for (l, lab_terms) in terms.iter().enumerate() {
                    let ai = self.draw_lab_center(l, lab_terms, &top_row, &mut rng)?;
                    let v = self.lab_u_sampler(&lab_masks[l], ai.bits())?.sample(&mut rng);
                    let k = outside_count(ai.bits(), a.bits());
                    sample.lab_centers.push(ai);
                    sample.lab_u.push(v);
                    sample.lab_distance.push(k);
                    sample.gamma.push(tail[k].min(1.0));
                }
                Ok(sample)
            })
            .collect()
    }
}

/// Log evidences of the two-level and pooled models and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    pub log_evidence_hierarchical: f64,
    pub log_evidence_pooled: f64,
    /// `ln P(X̲̲) − ln P(X̲)`; positive values favour a lab effect.
    pub log_bayes_factor: f64,
}

/// Kass–Raftery reading of a log Bayes factor.
pub fn bayes_factor_band(log_bf: f64) -> &'static str {
    // bands on log10 of the factor: 0.5, 1, 2
    let l10 = log_bf / std::f64::consts::LN_10;
    if l10 < 0.0 {
        "favours the pooled model"
    } else if l10 < 0.5 {
        "barely worth mentioning"
    } else if l10 < 1.0 {
        "substantial"
    } else if l10 < 2.0 {
        "strong"
    } else {
        "decisive"
    }
}

/// Bayes factor of the two-level model against the pooled one, both by the
/// exhaustive estimator with the same seed and number of prior draws.
pub fn bayes_factor(
    data: &GroupedDataset,
    spec: &TwoStageSpec,
    config: &TwoStageConfig,
) -> Result<BayesFactor> {
    config.validate()?;
    let tables = precompute_tables(data, spec, &config.quad)?;
    bayes_factor_with(data, spec, &tables, config)
}

pub fn bayes_factor_with(
    data: &GroupedDataset,
    spec: &TwoStageSpec,
    tables: &DTable,
    config: &TwoStageConfig,
) -> Result<BayesFactor> {
    config.validate()?;
    spec.check_data(data)?;
    tables.check_matches(data, spec, &config.quad)?;
    let us = prior_draws(&spec.top, config.n_mc, config.seed)?;
    let lml = two_stage_log_likelihoods(tables, spec, &us, config.enumeration_budget)?;
    let hier = log_mean_exp(&lml);
    let pooled = estimate_evidence(&data.pooled(), &spec.top, &config.pooled())?;
    Ok(BayesFactor {
        log_evidence_hierarchical: hier,
        log_evidence_pooled: pooled,
        log_bayes_factor: hier - pooled,
    })
}
