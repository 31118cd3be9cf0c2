use ilc_core::combinatorics::enumerate_subsets;
use ilc_core::distributions::hamming_log_pmf;
use ilc_core::math::{log_sum_exp, normalize_log_weights};
use ilc_core::one_stage::{
    brute_force_posterior, estimate_evidence, log_likelihood, mcmc_posterior, posterior_p_values,
    total_variation, BruteForceConfig, CenterProbability, Dataset, McmcConfig, ProposalWeights,
    Signal, SignalThresholds,
};
use ilc_core::simulate::{simulate_pooled, SimulationConfig};
use ilc_core::{GroundSet, HammingModel, ModelSpec, Subset};

fn table1() -> Dataset {
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

fn small_synthetic(seed: u64) -> Dataset {
    simulate_pooled(&SimulationConfig::pooled(6, 2, 4, 0.3, seed)).unwrap().0
}

/// Posterior over centers from Gauss–Legendre quadrature over `u`.
fn grid_posterior(data: &Dataset, spec: &ModelSpec, nodes: usize) -> Vec<CenterProbability> {
    let quad = spec.prior.quadrature(nodes).unwrap();
    let centers: Vec<Subset> = enumerate_subsets(data.universe(), data.n(), u64::MAX).unwrap().collect();
    let mut logs: Vec<f64> = centers
        .iter()
        .map(|a| {
            let terms: Vec<f64> = quad
                .nodes
                .iter()
                .zip(&quad.weights)
                .map(|(&u, &w)| {
                    let model = HammingModel::new(*a, u, spec.family.clone()).unwrap();
                    w.ln() + log_likelihood(data, &model).unwrap()
                })
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    normalize_log_weights(&mut logs);
    centers
        .into_iter()
        .zip(logs)
        .map(|(center, l)| CenterProbability {
            center,
            probability: l,
            std_dev: None,
        })
        .collect()
}

fn quick_mcmc(seed: u64, proposal: ProposalWeights) -> McmcConfig {
    McmcConfig {
        n_iter: 60_000,
        burn_in: 5_000,
        thin: 5,
        n_chains: 8,
        seed,
        proposal,
        ..McmcConfig::default()
    }
}

#[test]
fn table1_posterior_is_concentrated_on_the_majority_set() {
    let data = table1();
    let spec = ModelSpec::fisher(3, 7).unwrap();
    let post = brute_force_posterior(&data, &spec, &BruteForceConfig::default()).unwrap();
    let top = Subset::from_indices(10, &[0, 1, 2]).unwrap();
    assert_eq!(post.mode(), Some(top));
    assert!(post.probability_of(&top) >= 1.0 - 1e-6);
    assert_eq!(post.samples.len(), 1000);
}

#[test]
fn table1_flags_only_the_disjoint_response() {
    let data = table1();
    let spec = ModelSpec::fisher(3, 7).unwrap();
    let mut x12 = Vec::new();
    for seed in 0..5 {
        let config = BruteForceConfig {
            seed,
            ..BruteForceConfig::default()
        };
        let post = brute_force_posterior(&data, &spec, &config).unwrap();
        let report = posterior_p_values(&data, &spec, &post, &SignalThresholds::default()).unwrap();
        for (i, obs) in report.observations.iter().enumerate() {
            if i == 11 {
                x12.push(obs.p_value);
                assert_eq!(obs.signal, Signal::Action);
                assert_eq!(obs.deviations_from_mode, 3);
            } else {
                assert!(obs.p_value > 0.05, "observation {}: {}", i + 1, obs.p_value);
                assert_eq!(obs.signal, Signal::None);
            }
        }
    }
    let mean = x12.iter().sum::<f64>() / x12.len() as f64;
    assert!((mean - 0.002).abs() <= 0.001, "mean p-value of X12 {mean}");
}

#[test]
fn brute_force_matches_dense_grid() {
    let spec = ModelSpec::fisher(2, 4).unwrap();
    for seed in 0..3 {
        let data = small_synthetic(seed);
        let exact = grid_posterior(&data, &spec, 512);
        let config = BruteForceConfig {
            seed,
            epsilon: 1e-6,
            ..BruteForceConfig::default()
        };
        let post = brute_force_posterior(&data, &spec, &config).unwrap();
        let tv = total_variation(&post.center_support, &exact);
        assert!(tv < 0.005, "seed {seed}: TV {tv}");
    }
}

#[test]
fn flat_proposal_targets_the_same_posterior() {
    let spec = ModelSpec::fisher(2, 4).unwrap();
    let data = small_synthetic(11);
    let reference = grid_posterior(&data, &spec, 512);
    for proposal in [ProposalWeights::Flat, ProposalWeights::SelectionCounts] {
        let post = mcmc_posterior(&data, &spec, &quick_mcmc(5, proposal)).unwrap();
        let tv = total_variation(&post.center_support, &reference);
        assert!(tv < 0.02, "{proposal:?}: TV {tv}");
    }
}

#[test]
fn repeated_subset_pins_u_near_zero() {
    let spec = ModelSpec::fisher(3, 7).unwrap();
    let a0 = Subset::from_indices(10, &[2, 5, 8]).unwrap();
    let data = Dataset::from_subsets(GroundSet::new(10).unwrap(), 3, vec![a0; 20]).unwrap();
    let mcmc = mcmc_posterior(&data, &spec, &quick_mcmc(2, ProposalWeights::SelectionCounts)).unwrap();
    let bf = brute_force_posterior(&data, &spec, &BruteForceConfig::default()).unwrap();
    for post in [mcmc, bf] {
        let mut us = post.u_samples();
        us.sort_by(f64::total_cmp);
        assert!(us[us.len() / 2] < 0.05, "median u {}", us[us.len() / 2]);
        assert_eq!(post.mode(), Some(a0));
    }
}

#[test]
fn single_observation_evidence_matches_quadrature() {
    let spec = ModelSpec::fisher(2, 4).unwrap();
    let x = Subset::from_indices(6, &[1, 4]).unwrap();
    let data = Dataset::from_subsets(GroundSet::new(6).unwrap(), 2, vec![x]).unwrap();
    // the Hamming pmf averaged over A is 1/#P_n at every u
    let quad = spec.prior.quadrature(256).unwrap();
    let centers: Vec<Subset> = enumerate_subsets(6, 2, 100).unwrap().collect();
    let mut exact = 0.0;
    for (&u, &w) in quad.nodes.iter().zip(&quad.weights) {
        for a in &centers {
            let model = HammingModel::new(*a, u, spec.family.clone()).unwrap();
            exact += w * hamming_log_pmf(&model, &x).unwrap().exp() / centers.len() as f64;
        }
    }
    assert!((exact - 1.0 / 15.0).abs() < 1e-10);
    let est = estimate_evidence(&data, &spec, &BruteForceConfig::default()).unwrap();
    assert!((est - exact.ln()).abs() < 1e-9, "{est} vs {}", exact.ln());
}

#[test]
fn table1_evidence_is_stable_across_seeds() {
    let data = table1();
    let spec = ModelSpec::fisher(3, 7).unwrap();
    let values: Vec<f64> = (0..10)
        .map(|seed| {
            let config = BruteForceConfig {
                seed,
                ..BruteForceConfig::default()
            };
            estimate_evidence(&data, &spec, &config).unwrap()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
    assert!(mean.is_finite());
    assert!(sd < 0.5, "sd {sd}");
    let same = estimate_evidence(&data, &spec, &BruteForceConfig::default()).unwrap();
    assert_eq!(same, values[0]);
    for v in &values {
        assert!((v - mean).abs() <= 3.0 * sd.max(1e-12) * (1.0 + 1.0 / 10.0f64).sqrt());
    }
}

#[test]
fn likelihood_ranking_follows_selection_counts() {
    let data = table1();
    let spec = ModelSpec::fisher(3, 7).unwrap();
    let counts = data.selection_counts();
    let scored: Vec<(usize, f64)> = enumerate_subsets(10, 3, 1000)
        .unwrap()
        .map(|a| {
            let model = HammingModel::new(a, 0.3, spec.family.clone()).unwrap();
            (a.indices().map(|o| counts[o]).sum(), log_likelihood(&data, &model).unwrap())
        })
        .collect();
    for &(c1, l1) in &scored {
        for &(c2, l2) in &scored {
            if c1 > c2 {
                assert!(l1 > l2);
            } else if c1 == c2 {
                assert!((l1 - l2).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn smaller_epsilon_moves_retained_sets_within_the_discarded_mass() {
    let spec = ModelSpec::fisher(3, 7).unwrap();
    let data = simulate_pooled(&SimulationConfig::pooled(10, 3, 6, 0.6, 4)).unwrap().0;
    let coarse = brute_force_posterior(&data, &spec, &BruteForceConfig::default()).unwrap();
    let fine = brute_force_posterior(
        &data,
        &spec,
        &BruteForceConfig {
            epsilon: 1e-4,
            ..BruteForceConfig::default()
        },
    )
    .unwrap();
    let discarded = match coarse.diagnostics {
        ilc_core::one_stage::Diagnostics::BruteForce { discarded_mass, .. } => discarded_mass,
        _ => unreachable!(),
    };
    assert!(fine.center_support.len() >= coarse.center_support.len());
    for c in &coarse.center_support {
        let diff = (c.probability - fine.probability_of(&c.center)).abs();
        assert!(diff <= discarded + 1e-12, "{diff} > {discarded}");
    }
}

#[test]
fn u_draws_fall_inside_the_dkw_band() {
    let data = table1();
    let spec = ModelSpec::fisher(3, 7).unwrap();
    let config = BruteForceConfig {
        n_samples: 10_000,
        ..BruteForceConfig::default()
    };
    let post = brute_force_posterior(&data, &spec, &config).unwrap();
    let a = Subset::from_indices(10, &[0, 1, 2]).unwrap();
    // conditional CDF of u given A by fine quadrature
    let quad = spec.prior.quadrature(2000).unwrap();
    let mut pts: Vec<(f64, f64)> = quad
        .nodes
        .iter()
        .zip(&quad.weights)
        .map(|(&u, &w)| {
            let model = HammingModel::new(a, u, spec.family.clone()).unwrap();
            (u, w * log_likelihood(&data, &model).unwrap().exp())
        })
        .collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let mut us: Vec<f64> = post.samples.iter().filter(|s| s.center == a).map(|s| s.u).collect();
    us.sort_by(f64::total_cmp);
    let n = us.len() as f64;
    let band = ((2.0f64 / 0.001).ln() / (2.0 * n)).sqrt();
    let (mut acc, mut j) = (0.0, 0);
    let mut worst: f64 = 0.0;
    for &(u, w) in &pts {
        acc += w / total;
        while j < us.len() && us[j] <= u {
            j += 1;
        }
        worst = worst.max((j as f64 / n - acc).abs());
    }
    assert!(worst < band, "sup deviation {worst}, band {band}");
}
