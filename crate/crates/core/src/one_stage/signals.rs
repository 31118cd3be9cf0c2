//! Posterior p-values for individual observations and the graded signals
//! derived from them.

use serde::{Deserialize, Serialize};

use super::{Dataset, PosteriorOneStage};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::subset::outside_count;

/// Minimum joint draws for a p-value estimate.
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    None,
    Alert,
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalThresholds {
    pub alert: f64,
    pub action: f64,
}

impl Default for SignalThresholds {
    fn default() -> Self {
        SignalThresholds {
            alert: 0.05,
            action: 0.005,
        }
    }
}

impl SignalThresholds {
    pub fn new(alert: f64, action: f64) -> Result<Self> {
        let t = SignalThresholds { alert, action };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.action > 0.0 && self.action < self.alert && self.alert < 1.0) {
            return Err(Error::invalid(format!(
                "thresholds need 0 < action < alert < 1, got action={}, alert={}",
                self.action, self.alert
            )));
        }
        Ok(())
    }
}

pub fn classify(p_value: f64, thresholds: &SignalThresholds) -> Signal {
    if p_value < thresholds.action {
        Signal::Action
    } else if p_value < thresholds.alert {
        Signal::Alert
    } else {
        Signal::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSignal {
    pub id: String,
    /// Posterior average of `Σ_{k ≥ #(X_i ∩ A^c)} e_u(k)`.
    pub p_value: f64,
    /// `#(X_i ∩ Â^c)` for the posterior mode `Â`.
    pub deviations_from_mode: usize,
    pub signal: Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub thresholds: SignalThresholds,
    pub observations: Vec<ObservationSignal>,
}

/// Tail sums `Σ_{j ≥ k} e_u(j)` for `k = 0..=n`.
pub(crate) fn tail_sums(pmf: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; pmf.len()];
    let mut acc = 0.0;
    for k in (0..pmf.len()).rev() {
        acc += pmf[k];
        tails[k] = acc;
    }
    tails
}

/// Posterior p-values of every observation, averaged over the joint draws.
pub fn posterior_p_values(
    data: &Dataset,
    spec: &ModelSpec,
    posterior: &PosteriorOneStage,
    thresholds: &SignalThresholds,
) -> Result<SignalReport> {
    thresholds.validate()?;
    if posterior.samples.len() < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "p-values need at least {MIN_SAMPLES} posterior draws, got {}",
            posterior.samples.len()
        )));
    }
    let mode = posterior
        .mode()
        .ok_or_else(|| Error::invalid("posterior has an empty center support"))?;
    let masks = data.masks();
    let mut sums = vec![0.0; masks.len()];
    for s in &posterior.samples {
        let tails = tail_sums(&spec.family.pmf(s.u)?);
        for (acc, &x) in sums.iter_mut().zip(&masks) {
            *acc += tails[outside_count(x, s.center.bits())];
        }
    }
    let count = posterior.samples.len() as f64;
    let observations = data
        .observations()
        .iter()
        .zip(sums)
        .map(|(obs, sum)| {
            let p_value = (sum / count).clamp(0.0, 1.0);
            ObservationSignal {
                id: obs.id.clone(),
                p_value,
                deviations_from_mode: outside_count(obs.subset.bits(), mode.bits()),
                signal: classify(p_value, thresholds),
            }
        })
        .collect();
    Ok(SignalReport {
        thresholds: *thresholds,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::one_stage::{CenterProbability, Diagnostics, JointSample};
    use crate::subset::{GroundSet, Subset};

    fn fixed_posterior(center: Subset, u: f64) -> PosteriorOneStage {
        PosteriorOneStage {
            center_support: vec![CenterProbability {
                center,
                probability: 1.0,
                std_dev: None,
            }],
            samples: vec![JointSample { center, u }; 200],
            log_evidence: None,
            diagnostics: Diagnostics::BruteForce {
                seed: 0,
                n_mc: 0,
                epsilon: 0.01,
                cdf_grid: 0,
                family_size: 0,
                retained: 1,
                discarded_mass: 0.0,
            },
        }
    }

    #[test]
    fn classification_bands() {
        let t = SignalThresholds::default();
        assert_eq!(classify(0.2, &t), Signal::None);
        assert_eq!(classify(0.03, &t), Signal::Alert);
        assert_eq!(classify(0.002, &t), Signal::Action);
        assert!(SignalThresholds::new(0.01, 0.05).is_err());
    }

    #[test]
    fn fixed_parameters_match_closed_form_tail() {
        let g = GroundSet::new(10).unwrap();
        let a = Subset::from_indices(10, &[0, 1, 2]).unwrap();
        let x = Subset::from_indices(10, &[0, 5, 6]).unwrap();
        let data = crate::one_stage::Dataset::from_subsets(g, 3, vec![a, x]).unwrap();
        let spec = ModelSpec::fisher(3, 7).unwrap();
        let u = 0.2;
        let report =
            posterior_p_values(&data, &spec, &fixed_posterior(a, u), &SignalThresholds::default())
                .unwrap();
        // direct Σ_{k ≥ 2} e_u(k) from the unnormalized weights C(7,k)·C(3,3−k)·u^k
        let w: Vec<f64> = (0..=3)
            .map(|k| {
                crate::math::binomial_f64(7, k) * crate::math::binomial_f64(3, 3 - k) * u.powi(k as i32)
            })
            .collect();
        let z: f64 = w.iter().sum();
        let expected = (w[2] + w[3]) / z;
        assert!((report.observations[1].p_value - expected).abs() < 1e-14);
        assert_eq!(report.observations[1].deviations_from_mode, 2);
        // the mode itself has p-value 1
        assert!((report.observations[0].p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let g = GroundSet::new(10).unwrap();
        let a = Subset::from_indices(10, &[0, 1, 2]).unwrap();
        let data = crate::one_stage::Dataset::from_subsets(g, 3, vec![a]).unwrap();
        let spec = ModelSpec::fisher(3, 7).unwrap();
        let mut post = fixed_posterior(a, 0.3);
        post.samples.truncate(10);
        assert!(posterior_p_values(&data, &spec, &post, &SignalThresholds::default()).is_err());
    }
}
