//! Two-level model: each laboratory has a latent center `A_i ~ P_{A,u}` and
//! dispersion `u_i`, and its operators draw `X_i^(j) ~ P_{A_i,u_i}`.
//!
//! The latent `(A_i, u_i)` are summed and integrated out exactly through a
//! per-lab table `D(q, s̄)`, which depends on `A` only through the counts
//! `s̄ = #(α_I(X_i) ∩ A)`.

mod cache;
mod dtable;
mod gamma;
mod integrals;
mod posterior;

pub use cache::{read_cache, write_cache, CACHE_FORMAT_VERSION};
pub use dtable::{
    group_marginal_log_likelihood, precompute_d, precompute_tables, DTable, LabTable,
    DEFAULT_MAX_PAIR_WORK,
};
pub use gamma::{gamma_statistics, median, LabGamma};
pub use integrals::IntegralCache;
pub use posterior::{
    bayes_factor, bayes_factor_band, bayes_factor_with, two_stage_log_likelihoods,
    two_stage_posterior, two_stage_posterior_with, AncestralSample, BayesFactor,
    PosteriorTwoStage, TwoStageConfig, TwoStageDiagnostics,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::alpha::AlphaBudget;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::one_stage::{Dataset, Observation};
use crate::subset::GroundSet;

/// One laboratory's operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub id: String,
    pub observations: Vec<Observation>,
}

impl Lab {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub(crate) fn masks(&self) -> Vec<u64> {
        self.observations.iter().map(|o| o.subset.bits()).collect()
    }
}

/// Observations grouped by laboratory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedDataset {
    ground: GroundSet,
    n: usize,
    labs: Vec<Lab>,
}

impl GroupedDataset {
    pub fn new(ground: GroundSet, n: usize, labs: Vec<Lab>) -> Result<Self> {
        if labs.is_empty() {
            return Err(Error::invalid("grouped dataset has no laboratories"));
        }
        let mut lab_ids = HashSet::new();
        for lab in &labs {
            if !lab_ids.insert(lab.id.as_str()) {
                return Err(Error::invalid(format!("duplicate laboratory id {:?}", lab.id)));
            }
            if lab.observations.is_empty() {
                return Err(Error::invalid(format!("laboratory {:?} has no operators", lab.id)));
            }
            let mut ops = HashSet::new();
            for o in &lab.observations {
                if !ops.insert(o.id.as_str()) {
                    return Err(Error::invalid(format!(
                        "duplicate operator id {:?} in laboratory {:?}",
                        o.id, lab.id
                    )));
                }
            }
            // size and universe checks
            Dataset::new(ground.clone(), n, lab.observations.clone())?;
        }
        Ok(GroupedDataset { ground, n, labs })
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

    pub fn big_n(&self) -> usize {
        self.ground.size() - self.n
    }

    pub fn labs(&self) -> &[Lab] {
        &self.labs
    }

    pub fn num_labs(&self) -> usize {
        self.labs.len()
    }

    /// Operators per lab.
    pub fn lab_sizes(&self) -> Vec<usize> {
        self.labs.iter().map(Lab::len).collect()
    }

    /// All operators as one pooled dataset; ids become `lab/operator`.
    pub fn pooled(&self) -> Dataset {
        let observations = self
            .labs
            .iter()
            .flat_map(|lab| {
                lab.observations.iter().map(move |o| Observation {
                    id: format!("{}/{}", lab.id, o.id),
                    subset: o.subset,
                })
            })
            .collect();
        Dataset::new(self.ground.clone(), self.n, observations)
            .expect("validated at construction")
    }
}

/// Families and priors for both levels of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageSpec {
    /// `A_i | A, u`.
    pub top: ModelSpec,
    /// `X_i^(j) | A_i, u_i`.
    pub lab: ModelSpec,
}

impl TwoStageSpec {
    pub fn new(top: ModelSpec, lab: ModelSpec) -> Result<Self> {
        if top.n() != lab.n() || top.universe() != lab.universe() {
            return Err(Error::invalid("both levels must share n and M"));
        }
        Ok(TwoStageSpec { top, lab })
    }

    /// The same family and prior at both levels.
    pub fn symmetric(spec: ModelSpec) -> Self {
        TwoStageSpec {
            top: spec.clone(),
            lab: spec,
        }
    }

    pub fn n(&self) -> usize {
        self.top.n()
    }

    pub fn universe(&self) -> usize {
        self.top.universe()
    }

    pub(crate) fn check_data(&self, data: &GroupedDataset) -> Result<()> {
        if data.universe() != self.universe() || data.n() != self.n() {
            return Err(Error::invalid(format!(
                "model is for n={}, M={} but the data has n={}, M={}",
                self.n(),
                self.universe(),
                data.n(),
                data.universe()
            )));
        }
        Ok(())
    }
}

/// Settings of the per-lab precomputation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    /// Gauss–Legendre nodes for the `u_i` integrals.
    pub nodes: usize,
    pub max_references: usize,
    pub max_compositions: u64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        let budget = AlphaBudget::default();
        QuadConfig {
            nodes: 256,
            max_references: budget.max_references,
            max_compositions: budget.max_compositions,
        }
    }
}

impl QuadConfig {
    pub fn budget(&self) -> AlphaBudget {
        AlphaBudget {
            max_references: self.max_references,
            max_compositions: self.max_compositions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::invalid("quadrature needs at least 2 nodes"));
        }
        Ok(())
    }
}
