use ilc_core::one_stage::{brute_force_posterior, BruteForceConfig, Dataset, Observation};
use ilc_core::rng::stream_rng;
use ilc_core::simulate::{sample_subset, simulate_grouped, SimulationConfig};
use ilc_core::two_stage::{
    bayes_factor, gamma_statistics, median, two_stage_posterior, GroupedDataset, Lab,
    TwoStageConfig, TwoStageSpec,
};
use ilc_core::{GroundSet, ModelSpec, Subset};

const M: usize = 10;
const N: usize = 3;

fn spec() -> TwoStageSpec {
    TwoStageSpec::symmetric(ModelSpec::fisher(N, M - N).unwrap())
}

fn lab_from(id: &str, center: &Subset, u: f64, operators: usize, seed: u64) -> Lab {
    let family = spec().lab.family;
    let mut rng = stream_rng(seed, 0);
    Lab {
        id: id.into(),
        observations: (0..operators)
            .map(|j| Observation {
                id: format!("op{}", j + 1),
                subset: sample_subset(center, u, &family, &mut rng).unwrap(),
            })
            .collect(),
    }
}

/// Five labs around `{1,2,3}` and one lab working around `{7,8,9}`.
fn planted(seed: u64) -> GroupedDataset {
    let a = Subset::from_indices(M, &[0, 1, 2]).unwrap();
    let b = Subset::from_indices(M, &[6, 7, 8]).unwrap();
    let mut labs: Vec<Lab> = (0..5)
        .map(|l| lab_from(&format!("L{}", l + 1), &a, 0.05, 3, seed * 100 + l))
        .collect();
    labs.push(lab_from("biased", &b, 0.01, 3, seed * 100 + 99));
    GroupedDataset::new(GroundSet::new(M).unwrap(), N, labs).unwrap()
}

#[test]
fn biased_lab_has_small_gamma() {
    let mut separated = 0;
    let seeds = 5;
    for seed in 0..seeds {
        let data = planted(seed);
        let config = TwoStageConfig {
            seed,
            ..TwoStageConfig::default()
        };
        let post = two_stage_posterior(&data, &spec(), &config).unwrap();
        let gammas = gamma_statistics(&post, &spec()).unwrap();
        for g in &gammas {
            assert!(g.gamma.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(g.k_histogram.iter().sum::<usize>(), post.samples.len());
        }
        let biased = gammas.iter().find(|g| g.lab_id == "biased").unwrap();
        let others_ok = gammas
            .iter()
            .filter(|g| g.lab_id != "biased")
            .all(|g| g.gamma_median > 0.05);
        if biased.gamma_median < 0.05 && others_ok {
            separated += 1;
        }
    }
    assert!(separated * 2 > seeds, "separated in {separated} of {seeds} seeds");
}

#[test]
fn unanimous_lab_gamma_is_near_one() {
    let a = Subset::from_indices(M, &[0, 1, 2]).unwrap();
    let labs = (0..3).map(|l| lab_from(&format!("L{l}"), &a, 0.0, 3, l)).collect();
    let data = GroupedDataset::new(GroundSet::new(M).unwrap(), N, labs).unwrap();
    let post = two_stage_posterior(&data, &spec(), &TwoStageConfig::default()).unwrap();
    for g in gamma_statistics(&post, &spec()).unwrap() {
        assert!(g.gamma_median > 0.95, "{}: {}", g.lab_id, g.gamma_median);
        assert!(g.k_histogram[0] as f64 > 0.9 * post.samples.len() as f64);
    }
}

#[test]
fn bayes_factor_direction_on_simulations() {
    let spec = spec();
    let config = TwoStageConfig::default();
    let mut effect = Vec::new();
    let mut none = Vec::new();
    for seed in 0..10 {
        let mut sim = SimulationConfig::grouped(M, N, vec![3; 4], 0.05, 0.05, seed);
        sim.distinct_lab_centers = true;
        let (data, truth) = simulate_grouped(&sim).unwrap();
        assert!(truth.lab_centers.iter().all(|c| *c != truth.center));
        effect.push(bayes_factor(&data, &spec, &config).unwrap().log_bayes_factor);

        let sim = SimulationConfig::grouped(M, N, vec![3; 4], 0.0, 0.05, seed);
        let (data, _) = simulate_grouped(&sim).unwrap();
        none.push(bayes_factor(&data, &spec, &config).unwrap().log_bayes_factor);
    }
    let positive = effect.iter().filter(|v| **v > 0.0).count();
    assert!(positive >= 9, "{positive} of 10 positive: {effect:?}");
    assert!(median(&none) <= 0.0, "{none:?}");
}

#[test]
fn evidence_spread_across_seeds() {
    let data = planted(3);
    let values: Vec<f64> = (0..10)
        .map(|seed| {
            let config = TwoStageConfig {
                seed,
                n_samples: 0,
                ..TwoStageConfig::default()
            };
            two_stage_posterior(&data, &spec(), &config).unwrap().log_evidence
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    assert!(sd < 0.5, "sd {sd}");
}

#[test]
fn regenerated_data_recovers_the_center() {
    let a = Subset::from_indices(M, &[1, 4, 7]).unwrap();
    let labs = (0..4).map(|l| lab_from(&format!("L{l}"), &a, 0.02, 3, 40 + l)).collect();
    let data = GroupedDataset::new(GroundSet::new(M).unwrap(), N, labs).unwrap();
    let config = TwoStageConfig {
        n_samples: 40,
        ..TwoStageConfig::default()
    };
    let post = two_stage_posterior(&data, &spec(), &config).unwrap();
    let family = spec().lab.family;
    let mut rng = stream_rng(5, 0);
    let mut hits = 0;
    for s in &post.samples {
        let mut subsets = Vec::new();
        for (center, &u) in s.lab_centers.iter().zip(&s.lab_u) {
            for _ in 0..3 {
                subsets.push(sample_subset(center, u, &family, &mut rng).unwrap());
            }
        }
        let pooled = Dataset::from_subsets(GroundSet::new(M).unwrap(), N, subsets).unwrap();
        let refit = brute_force_posterior(&pooled, &spec().top, &BruteForceConfig::default()).unwrap();
        if refit.mode() == Some(s.center) {
            hits += 1;
        }
    }
    assert!(hits as f64 > 0.95 * post.samples.len() as f64, "{hits} of {}", post.samples.len());
}
