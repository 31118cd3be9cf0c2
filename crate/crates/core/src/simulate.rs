//! Synthetic data from the pooled and two-level models, and a goodness-of-fit
//! check of the subset samplers against the exact pmf.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::distributions::{
    distance, monotonicity_of, sample_binomial_subset, sample_fisher_subset, BernoulliPair,
    DispersionFamily, FamilyKind, Monotonicity, DEFAULT_REJECTION_CAP,
};
use crate::error::{Error, Result};
use crate::one_stage::{Dataset, Observation};
use crate::rng::{stream_rng, streams, StreamRng};
use crate::sampling::sample_without_replacement;
use crate::subset::{full_mask, GroundSet, Subset};
use crate::two_stage::{GroupedDataset, Lab};

/// Draws one subset from `P_{A,u}` with the family's own sampler.
pub fn sample_subset<R: Rng + ?Sized>(
    center: &Subset,
    u: f64,
    family: &DispersionFamily,
    rng: &mut R,
) -> Result<Subset> {
    match family.kind() {
        FamilyKind::FisherNch => {
            let pair = BernoulliPair::for_dispersion(u, family.n(), family.big_n())?;
            sample_fisher_subset(center, pair, rng, DEFAULT_REJECTION_CAP)
        }
        FamilyKind::Binomial => sample_binomial_subset(center, u, rng),
    }
}

/// Dispersion of each lab in a two-level simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum LabDispersion {
    /// Every lab uses this value.
    Fixed(f64),
    /// Each lab draws its own value from the prior.
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub universe: usize,
    pub n: usize,
    pub family: FamilyKind,
    /// Consensus; drawn uniformly when absent.
    pub center: Option<Subset>,
    pub u: f64,
    /// Operators per lab. Empty for pooled data.
    pub labs: Vec<usize>,
    /// Number of observations for pooled data.
    pub observations: usize,
    pub lab_u: LabDispersion,
    /// Redraw lab centers until they differ from `A` and from one another.
    pub distinct_lab_centers: bool,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn pooled(universe: usize, n: usize, observations: usize, u: f64, seed: u64) -> Self {
        SimulationConfig {
            universe,
            n,
            family: FamilyKind::FisherNch,
            center: None,
            u,
            labs: Vec::new(),
            observations,
            lab_u: LabDispersion::Fixed(u),
            distinct_lab_centers: false,
            seed,
        }
    }

    pub fn grouped(universe: usize, n: usize, labs: Vec<usize>, u: f64, lab_u: f64, seed: u64) -> Self {
        SimulationConfig {
            labs,
            lab_u: LabDispersion::Fixed(lab_u),
            ..Self::pooled(universe, n, 0, u, seed)
        }
    }

    fn family(&self) -> Result<DispersionFamily> {
        if self.n == 0 || self.n >= self.universe {
            return Err(Error::invalid(format!(
                "subset size must satisfy 0 < n < M, got n={}, M={}",
                self.n, self.universe
            )));
        }
        DispersionFamily::new(self.family, self.n, self.universe - self.n)
    }
}

/// The family's domain plus `u = 0`, where every draw equals the center.
fn admissible(family: &DispersionFamily, u: f64) -> bool {
    u == 0.0 || family.contains(u)
}

/// Parameters behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub center: Subset,
    pub u: f64,
    pub lab_ids: Vec<String>,
    pub lab_centers: Vec<Subset>,
    pub lab_u: Vec<f64>,
}

fn draw_center(config: &SimulationConfig, rng: &mut StreamRng) -> Result<Subset> {
    match config.center {
        Some(c) => {
            if c.universe() != config.universe || c.cardinality() != config.n {
                return Err(Error::invalid(format!(
                    "center {c} is not a size-{} subset of {} items",
                    config.n, config.universe
                )));
            }
            Ok(c)
        }
        None => Subset::from_bits(
            config.universe,
            sample_without_replacement(full_mask(config.universe), config.n, rng),
        ),
    }
}

/// Pooled observations `X_j ~ P_{A,u}`.
pub fn simulate_pooled(config: &SimulationConfig) -> Result<(Dataset, GroundTruth)> {
    let family = config.family()?;
    if !admissible(&family, config.u) {
        return Err(Error::domain(config.u, format!("[0, {}]", family.upper())));
    }
    if config.observations == 0 {
        return Err(Error::invalid("pooled simulation needs at least one observation"));
    }
    let mut rng = stream_rng(config.seed, streams::SIMULATION);
    let center = draw_center(config, &mut rng)?;
    let subsets = (0..config.observations)
        .map(|_| sample_subset(&center, config.u, &family, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset::from_subsets(GroundSet::new(config.universe)?, config.n, subsets)?;
    Ok((
        data,
        GroundTruth {
            center,
            u: config.u,
            lab_ids: Vec::new(),
            lab_centers: Vec::new(),
            lab_u: Vec::new(),
        },
    ))
}

/// Two-level data: `A_i ~ P_{A,u}`, `u_i` fixed or from the prior, then
/// `X_i^(j) ~ P_{A_i,u_i}`.
pub fn simulate_grouped(config: &SimulationConfig) -> Result<(GroupedDataset, GroundTruth)> {
    let family = config.family()?;
    if config.labs.is_empty() || config.labs.contains(&0) {
        return Err(Error::invalid("every simulated lab needs at least one operator"));
    }
    if !admissible(&family, config.u) {
        return Err(Error::domain(config.u, format!("[0, {}]", family.upper())));
    }
    let prior = crate::model::ModelSpec::for_kind(config.family, config.n, config.universe - config.n)?.prior;
    let mut rng = stream_rng(config.seed, streams::SIMULATION);
    let center = draw_center(config, &mut rng)?;
    let mut truth = GroundTruth {
        center,
        u: config.u,
        lab_ids: Vec::new(),
        lab_centers: Vec::new(),
        lab_u: Vec::new(),
    };
    let mut labs = Vec::with_capacity(config.labs.len());
    for (i, &p) in config.labs.iter().enumerate() {
        let mut attempts = 0u64;
        let lab_center = loop {
            let c = sample_subset(&center, config.u, &family, &mut rng)?;
            if !config.distinct_lab_centers || (c != center && !truth.lab_centers.contains(&c)) {
                break c;
            }
            attempts += 1;
            if attempts >= DEFAULT_REJECTION_CAP {
                return Err(Error::NonTermination { iterations: attempts });
            }
        };
        let v = match config.lab_u {
            LabDispersion::Fixed(v) => v,
            LabDispersion::Prior => prior.sample(&mut rng)?,
        };
        if !admissible(&family, v) {
            return Err(Error::domain(v, format!("[0, {}]", family.upper())));
        }
        let observations = (0..p)
            .map(|j| {
                Ok(Observation {
                    id: format!("op{}", j + 1),
                    subset: sample_subset(&lab_center, v, &family, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let id = format!("L{}", i + 1);
        truth.lab_ids.push(id.clone());
        truth.lab_centers.push(lab_center);
        truth.lab_u.push(v);
        labs.push(Lab { id, observations });
    }
    let data = GroupedDataset::new(GroundSet::new(config.universe)?, config.n, labs)?;
    Ok((data, truth))
}

/// Sampled distance histogram against the exact pmf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub family: FamilyKind,
    pub u: f64,
    pub draws: usize,
    /// Draws at distance `k = 0..=n`.
    pub observed: Vec<u64>,
    /// `draws · e_u(k)`.
    pub expected: Vec<f64>,
    /// Bins after pooling sparse tails, as `(first k, last k)`.
    pub bins: Vec<(usize, usize)>,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub monotonicity: Monotonicity,
}

/// Pools adjacent bins from both ends until each expects at least `min`.
fn pooled_bins(expected: &[f64], min: f64) -> Vec<(usize, usize)> {
    let support: Vec<usize> = (0..expected.len()).filter(|&k| expected[k] > 0.0).collect();
    let mut bins: Vec<(usize, usize, f64)> = Vec::new();
    for &k in &support {
        match bins.last_mut() {
            Some(last) if last.2 < min => {
                last.1 = k;
                last.2 += expected[k];
            }
            _ => bins.push((k, k, expected[k])),
        }
    }
    while bins.len() > 1 && bins.last().unwrap().2 < min {
        let (_, hi, e) = bins.pop().unwrap();
        let last = bins.last_mut().unwrap();
        last.1 = hi;
        last.2 += e;
    }
    bins.into_iter().map(|(a, b, _)| (a, b)).collect()
}

/// Draws `draws` subsets around `center` with the family's sampler and
/// compares the distance histogram with `e_u` by a chi-square test.
pub fn check_distribution(
    kind: FamilyKind,
    u: f64,
    center: &Subset,
    draws: usize,
    seed: u64,
) -> Result<GoodnessOfFit> {
    let n = center.cardinality();
    let family = DispersionFamily::new(kind, n, center.universe() - n)?;
    // the pmf and samplers accept u beyond the truncated binomial domain
    let pmf = family.pmf(u)?;
    let shape: Vec<f64> = (0..=n.min(family.big_n()))
        .map(|k| pmf[k].ln() - family.log_counts()[k])
        .collect();
    let mut rng = stream_rng(seed, streams::CHECK);
    let mut observed = vec![0u64; n + 1];
    for _ in 0..draws {
        let x = sample_subset(center, u, &family, &mut rng)?;
        observed[distance(&x, center)] += 1;
    }
    let expected: Vec<f64> = pmf.iter().map(|p| p * draws as f64).collect();
    if let Some(k) = (0..=n).find(|&k| expected[k] == 0.0 && observed[k] > 0) {
        return Err(Error::Internal(format!(
            "sampler produced distance {k}, which has zero probability"
        )));
    }
    let bins = pooled_bins(&expected, 5.0);
    let chi_square: f64 = bins
        .iter()
        .map(|&(a, b)| {
            let o: f64 = observed[a..=b].iter().map(|&v| v as f64).sum();
            let e: f64 = expected[a..=b].iter().sum();
            (o - e).powi(2) / e
        })
        .sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .cdf(chi_square)
    };
    Ok(GoodnessOfFit {
        family: kind,
        u,
        draws,
        observed,
        expected,
        bins,
        chi_square,
        degrees_of_freedom: dof,
        p_value,
        monotonicity: monotonicity_of(&shape),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dispersion_reproduces_the_center() {
        let mut cfg = SimulationConfig::grouped(8, 3, vec![2, 3], 0.0, 0.0, 5);
        cfg.center = Some(Subset::from_indices(8, &[0, 4, 5]).unwrap());
        let (data, truth) = simulate_grouped(&cfg).unwrap();
        for lab in data.labs() {
            assert!(lab.observations.iter().all(|o| o.subset == truth.center));
        }
        assert_eq!(truth.lab_centers, vec![truth.center; 2]);
    }

    #[test]
    fn distinct_lab_centers_are_distinct() {
        let mut cfg = SimulationConfig::grouped(10, 3, vec![3; 4], 0.05, 0.05, 11);
        cfg.distinct_lab_centers = true;
        let (_, truth) = simulate_grouped(&cfg).unwrap();
        for (i, a) in truth.lab_centers.iter().enumerate() {
            assert_ne!(*a, truth.center);
            assert!(!truth.lab_centers[..i].contains(a));
        }
    }

    #[test]
    fn seeded_simulation_is_reproducible() {
        let cfg = SimulationConfig::pooled(10, 3, 30, 0.3, 4);
        assert_eq!(simulate_pooled(&cfg).unwrap(), simulate_pooled(&cfg).unwrap());
    }

    #[test]
    fn fisher_sampler_fits() {
        let a = Subset::from_indices(10, &[0, 1, 2]).unwrap();
        let r = check_distribution(FamilyKind::FisherNch, 0.5, &a, 100_000, 1).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
        let flat = check_distribution(FamilyKind::FisherNch, 1.0, &a, 1000, 1).unwrap();
        assert_eq!(flat.monotonicity, Monotonicity::NonIncreasing);
        let b = check_distribution(FamilyKind::Binomial, 0.9, &a, 1000, 1).unwrap();
        assert_eq!(b.monotonicity, Monotonicity::Neither);
    }

    #[test]
    fn sparse_tails_are_pooled() {
        assert_eq!(pooled_bins(&[900.0, 95.0, 4.0, 1.0], 5.0), vec![(0, 0), (1, 1), (2, 3)]);
        assert_eq!(pooled_bins(&[1.0, 2.0, 997.0], 5.0), vec![(0, 2)]);
        assert_eq!(pooled_bins(&[0.0, 500.0, 500.0], 5.0), vec![(1, 1), (2, 2)]);
    }
}
