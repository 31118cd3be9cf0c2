use serde::{Deserialize, Serialize};

use super::posterior::PosteriorTwoStage;
use super::TwoStageSpec;
use crate::error::Result;

/// Lab-level summary of the ancestral draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabGamma {
    pub lab_id: String,
    pub gamma: Vec<f64>,
    pub gamma_mean: f64,
    pub gamma_median: f64,
    /// `k_i = #(A_i ∩ A^c)` per draw.
    pub k: Vec<usize>,
    /// Draws with `k_i = 0, 1, ..., n`.
    pub k_histogram: Vec<usize>,
    pub u_median: f64,
    /// Posterior mean of the expected number of deviations of an operator.
    pub mean_deviations: f64,
    /// Expected number of deviations at the posterior median of `u_i`.
    pub deviations_at_median_u: f64,
}

/// Median of a sample; mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// `Γ_i` and `k_i` summaries per lab. Both the mean and the median of `Γ_i`
/// are reported; they can lead to different verdicts.
pub fn gamma_statistics(posterior: &PosteriorTwoStage, spec: &TwoStageSpec) -> Result<Vec<LabGamma>> {
    let n = spec.n();
    posterior
        .lab_ids
        .iter()
        .enumerate()
        .map(|(l, id)| {
            let gamma: Vec<f64> = posterior.samples.iter().map(|s| s.gamma[l]).collect();
            let k: Vec<usize> = posterior.samples.iter().map(|s| s.lab_distance[l]).collect();
            let us: Vec<f64> = posterior.samples.iter().map(|s| s.lab_u[l]).collect();
            let mut k_histogram = vec![0usize; n + 1];
            for &ki in &k {
                k_histogram[ki] += 1;
            }
            let count = gamma.len().max(1) as f64;
            let deviations = us
                .iter()
                .map(|&v| spec.lab.family.mean(v))
                .collect::<Result<Vec<_>>>()?;
            let u_median = median(&us);
            Ok(LabGamma {
                lab_id: id.clone(),
                gamma_mean: gamma.iter().sum::<f64>() / count,
                gamma_median: median(&gamma),
                gamma,
                k,
                k_histogram,
                u_median,
                mean_deviations: deviations.iter().sum::<f64>() / count,
                deviations_at_median_u: if u_median.is_nan() {
                    f64::NAN
                } else {
                    spec.lab.family.mean(u_median)?
                },
            })
        })
        .collect()
}
