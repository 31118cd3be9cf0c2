//! Two-level likelihoods and posteriors against direct enumeration of the
//! lab centers with quadrature over every dispersion.

use ilc_core::combinatorics::enumerate_subsets;
use ilc_core::math::log_sum_exp;
use ilc_core::one_stage::total_variation;
use ilc_core::one_stage::CenterProbability;
use ilc_core::prior::PriorQuadrature;
use ilc_core::rng::stream_rng;
use ilc_core::simulate::{simulate_grouped, SimulationConfig};
use ilc_core::two_stage::{
    group_marginal_log_likelihood, precompute_tables, two_stage_posterior, GroupedDataset, Lab,
    QuadConfig, TwoStageConfig, TwoStageSpec,
};
use ilc_core::{ModelSpec, Subset};
use rand::Rng;

fn outside(x: &Subset, a: &Subset) -> usize {
    (x.bits() & !a.bits()).count_ones() as usize
}

/// `ln P(X_i | A, u)` summing over every `A_i` with quadrature over `u_i`.
fn direct_lab(lab: &Lab, a: &Subset, u: f64, spec: &TwoStageSpec, quad: &PriorQuadrature) -> f64 {
    let (m, n) = (spec.universe(), spec.n());
    let mut top = vec![0.0; n + 1];
    spec.top.subset_log_pmf_into(u, &mut top).unwrap();
    let lab_rows: Vec<Vec<f64>> = quad
        .nodes
        .iter()
        .map(|&v| {
            let mut r = vec![0.0; n + 1];
            spec.lab.subset_log_pmf_into(v, &mut r).unwrap();
            r
        })
        .collect();
    let terms: Vec<f64> = enumerate_subsets(m, n, u64::MAX)
        .unwrap()
        .map(|ai| {
            let inner: Vec<f64> = quad
                .weights
                .iter()
                .zip(&lab_rows)
                .map(|(w, row)| {
                    w.ln()
                        + lab
                            .observations
                            .iter()
                            .map(|o| row[outside(&o.subset, &ai)])
                            .sum::<f64>()
                })
                .collect();
            top[outside(&ai, a)] + log_sum_exp(&inner)
        })
        .collect();
    log_sum_exp(&terms)
}

fn spec62() -> TwoStageSpec {
    TwoStageSpec::symmetric(ModelSpec::fisher(2, 4).unwrap())
}

fn small_data(seed: u64, sizes: Vec<usize>) -> GroupedDataset {
    let cfg = SimulationConfig::grouped(6, 2, sizes, 0.3, 0.3, seed);
    simulate_grouped(&cfg).unwrap().0
}

#[test]
fn collapsed_likelihood_matches_direct_sum() {
    let spec = spec62();
    let quad = QuadConfig::default();
    let oracle_quad = PriorQuadrature::new(&spec.lab.prior, 256).unwrap();
    let mut rng = stream_rng(77, 0);
    let centers: Vec<Subset> = enumerate_subsets(6, 2, u64::MAX).unwrap().collect();
    for (seed, sizes) in [(1, vec![2, 1]), (2, vec![2, 2]), (3, vec![1, 2])] {
        let data = small_data(seed, sizes);
        let table = precompute_tables(&data, &spec, &quad).unwrap();
        for _ in 0..20 {
            let a = centers[rng.random_range(0..centers.len())];
            let u: f64 = rng.random_range(1e-3..1.0);
            for (i, lab) in data.labs().iter().enumerate() {
                let got = group_marginal_log_likelihood(&table, i, &a, u, &spec.top).unwrap();
                let want = direct_lab(lab, &a, u, &spec, &oracle_quad);
                assert!((got - want).exp_m1().abs() < 1e-8, "A={a} u={u}: {got} vs {want}");
            }
        }
    }
}

/// Exact posterior over `A` with quadrature over the top-level `u`.
fn exhaustive_posterior(data: &GroupedDataset, spec: &TwoStageSpec) -> Vec<CenterProbability> {
    let top_quad = PriorQuadrature::new(&spec.top.prior, 256).unwrap();
    let lab_quad = PriorQuadrature::new(&spec.lab.prior, 256).unwrap();
    let centers: Vec<Subset> = enumerate_subsets(6, 2, u64::MAX).unwrap().collect();
    let log_ml: Vec<f64> = centers
        .iter()
        .map(|a| {
            let terms: Vec<f64> = top_quad
                .nodes
                .iter()
                .zip(&top_quad.weights)
                .map(|(&u, w)| {
                    w.ln()
                        + data
                            .labs()
                            .iter()
                            .map(|lab| direct_lab(lab, a, u, spec, &lab_quad))
                            .sum::<f64>()
                })
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    let z = log_sum_exp(&log_ml);
    centers
        .into_iter()
        .zip(log_ml)
        .map(|(center, l)| CenterProbability {
            center,
            probability: (l - z).exp(),
            std_dev: None,
        })
        .collect()
}

#[test]
fn posterior_over_centers_matches_exhaustive_grid() {
    let spec = spec62();
    let config = TwoStageConfig {
        n_samples: 200,
        cdf_grid: 2000,
        ..TwoStageConfig::default()
    };
    for (seed, sizes) in [(4, vec![2, 2]), (5, vec![1, 1]), (6, vec![2, 1])] {
        let data = small_data(seed, sizes);
        let post = two_stage_posterior(&data, &spec, &config).unwrap();
        let exact = exhaustive_posterior(&data, &spec);
        let tv = total_variation(&post.center_support, &exact);
        assert!(tv < 0.01, "seed {seed}: TV {tv}");
    }
}
