//! A dispersion family paired with its prior.

use crate::distributions::{DispersionFamily, FamilyKind};
use crate::error::{Error, Result};
use crate::prior::DispersionPrior;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: DispersionFamily,
    pub prior: DispersionPrior,
}

impl ModelSpec {
    pub fn new(family: DispersionFamily, prior: DispersionPrior) -> Result<Self> {
        prior.validate()?;
        if prior.upper() > family.upper() + 1e-12 {
            return Err(Error::invalid(format!(
                "prior support reaches {} beyond the family domain upper end {}",
                prior.upper(),
                family.upper()
            )));
        }
        Ok(ModelSpec { family, prior })
    }

    /// Fisher family with the triangle prior.
    pub fn fisher(n: usize, big_n: usize) -> Result<Self> {
        Self::new(DispersionFamily::fisher(n, big_n)?, DispersionPrior::Triangle)
    }

    /// Truncated binomial family with a flat prior on its domain.
    pub fn binomial(n: usize, big_n: usize) -> Result<Self> {
        let family = DispersionFamily::binomial(n, big_n)?;
        let prior = DispersionPrior::flat(family.upper());
        Self::new(family, prior)
    }

    pub fn for_kind(kind: FamilyKind, n: usize, big_n: usize) -> Result<Self> {
        match kind {
            FamilyKind::FisherNch => Self::fisher(n, big_n),
            FamilyKind::Binomial => Self::binomial(n, big_n),
        }
    }

    pub fn n(&self) -> usize {
        self.family.n()
    }

    pub fn universe(&self) -> usize {
        self.family.universe()
    }

    /// Upper end of the region where prior and family overlap.
    pub fn upper(&self) -> f64 {
        self.prior.upper()
    }

    /// `ln e_u(k) − ln(C(n,k)·C(N,k))`: log-probability of one subset at distance `k`.
    pub fn subset_log_pmf_into(&self, u: f64, out: &mut [f64]) -> Result<()> {
        self.family.log_pmf_into(u, out)?;
        for (o, lc) in out.iter_mut().zip(self.family.log_counts()) {
            *o -= lc;
        }
        Ok(())
    }

    /// Rows of [`subset_log_pmf_into`](Self::subset_log_pmf_into) for several `u`.
    pub fn distance_table(&self, us: &[f64]) -> Result<Vec<Vec<f64>>> {
        us.iter()
            .map(|&u| {
                let mut row = vec![0.0; self.n() + 1];
                self.subset_log_pmf_into(u, &mut row)?;
                Ok(row)
            })
            .collect()
    }
}
