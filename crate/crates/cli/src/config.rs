//! Analysis settings: built-in defaults, then a TOML file, then flags (or
//! their `ILC_*` environment variables).

use std::path::Path;

use clap::{Args, ValueEnum};
use ilc_core::one_stage::{BruteForceConfig, McmcConfig, ProposalWeights, SignalThresholds};
use ilc_core::two_stage::{QuadConfig, TwoStageConfig, TwoStageSpec};
use ilc_core::{FamilyKind, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Pooled,
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Fisher,
    Binomial,
}

impl Family {
    pub fn kind(self) -> FamilyKind {
        match self {
            Family::Fisher => FamilyKind::FisherNch,
            Family::Binomial => FamilyKind::Binomial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Inference {
    BruteForce,
    Mcmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    SelectionCounts,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub alert: f64,
    pub action: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let t = SignalThresholds::default();
        Thresholds {
            alert: t.alert,
            action: t.action,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct AnalysisConfig {
    pub model: ModelKind,
    pub family: Family,
    pub inference: Inference,
    pub epsilon: f64,
    pub n_mc: usize,
    pub cdf_grid: usize,
    pub n_samples: usize,
    pub sigma2: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub proposal: Proposal,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub quad_nodes: usize,
    pub max_references: usize,
    pub max_compositions: u64,
    pub enumeration_budget: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let bf = BruteForceConfig::default();
        let mc = McmcConfig::default();
        let quad = QuadConfig::default();
        AnalysisConfig {
            model: ModelKind::Pooled,
            family: Family::Fisher,
            inference: Inference::BruteForce,
            epsilon: bf.epsilon,
            n_mc: bf.n_mc,
            cdf_grid: bf.cdf_grid,
            n_samples: bf.n_samples,
            sigma2: mc.sigma2,
            n_iter: mc.n_iter,
            burn_in: mc.burn_in,
            thin: mc.thin,
            n_chains: mc.n_chains,
            proposal: Proposal::SelectionCounts,
            seed: bf.seed,
            thresholds: Thresholds::default(),
            quad_nodes: quad.nodes,
            max_references: quad.max_references,
            max_compositions: quad.max_compositions,
            enumeration_budget: bf.enumeration_budget,
        }
    }
}

/// Command-line overrides; every flag also reads `ILC_<NAME>`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with analysis settings; flags take precedence over it.
    #[arg(long, env = "ILC_CONFIG")]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, env = "ILC_MODEL")]
    pub model: Option<ModelKind>,
    #[arg(long, env = "ILC_FAMILY")]
    pub family: Option<Family>,
    #[arg(long, env = "ILC_INFERENCE")]
    pub inference: Option<Inference>,
    /// Truncation level of the brute-force posterior over centers.
    #[arg(long, env = "ILC_EPSILON")]
    pub epsilon: Option<f64>,
    /// Prior draws of u behind each marginal-likelihood estimate.
    #[arg(long, env = "ILC_N_MC")]
    pub n_mc: Option<usize>,
    /// Grid points used to invert conditional CDFs of u.
    #[arg(long, env = "ILC_CDF_GRID")]
    pub cdf_grid: Option<usize>,
    /// Joint posterior draws (brute force and hierarchical model).
    #[arg(long, env = "ILC_N_SAMPLES")]
    pub n_samples: Option<usize>,
    /// Variance of the logit-scale random walk on u.
    #[arg(long, env = "ILC_SIGMA2")]
    pub sigma2: Option<f64>,
    #[arg(long, env = "ILC_N_ITER")]
    pub n_iter: Option<usize>,
    #[arg(long, env = "ILC_BURN_IN")]
    pub burn_in: Option<usize>,
    #[arg(long, env = "ILC_THIN")]
    pub thin: Option<usize>,
    #[arg(long, env = "ILC_N_CHAINS")]
    pub n_chains: Option<usize>,
    #[arg(long, env = "ILC_PROPOSAL")]
    pub proposal: Option<Proposal>,
    #[arg(long, env = "ILC_SEED")]
    pub seed: Option<u64>,
    /// p-values below this raise an alert.
    #[arg(long, env = "ILC_ALERT")]
    pub alert: Option<f64>,
    /// p-values below this call for action.
    #[arg(long, env = "ILC_ACTION")]
    pub action: Option<f64>,
    /// Gauss–Legendre nodes for the lab-level integrals.
    #[arg(long, env = "ILC_QUAD_NODES")]
    pub quad_nodes: Option<usize>,
    /// Largest number of operators in one laboratory.
    #[arg(long, env = "ILC_MAX_REFERENCES")]
    pub max_references: Option<usize>,
    /// Largest number of count vectors per laboratory.
    #[arg(long, env = "ILC_MAX_COMPOSITIONS")]
    pub max_compositions: Option<u64>,
    /// Largest number of candidate centers to enumerate.
    #[arg(long, env = "ILC_ENUMERATION_BUDGET")]
    pub enumeration_budget: Option<u64>,
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Built-ins, then `args.config` when given, then the flags themselves.
    pub fn resolve(args: &ConfigArgs) -> Result<Self, CliError> {
        let mut c = match &args.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = args.$field { c.$field = v; })*
            };
        }
        set!(
            model, family, inference, epsilon, n_mc, cdf_grid, n_samples, sigma2, n_iter,
            burn_in, thin, n_chains, proposal, seed, quad_nodes, max_references,
            max_compositions, enumeration_budget
        );
        if let Some(v) = args.alert {
            c.thresholds.alert = v;
        }
        if let Some(v) = args.action {
            c.thresholds.action = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        for (name, v) in [("epsilon", self.epsilon), ("sigma2", self.sigma2)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("n-mc", self.n_mc),
            ("cdf-grid", self.cdf_grid),
            ("n-samples", self.n_samples),
            ("n-iter", self.n_iter),
            ("thin", self.thin),
            ("n-chains", self.n_chains),
            ("quad-nodes", self.quad_nodes),
            ("max-references", self.max_references),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.max_compositions == 0 || self.enumeration_budget == 0 {
            return bad("budgets must be positive".into());
        }
        if self.burn_in >= self.n_iter {
            return bad(format!(
                "burn-in ({}) must be smaller than n-iter ({})",
                self.burn_in, self.n_iter
            ));
        }
        let t = self.thresholds;
        if !(t.action > 0.0 && t.action < t.alert && t.alert < 1.0) {
            return bad(format!(
                "thresholds need 0 < action < alert < 1, got action {} and alert {}",
                t.action, t.alert
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn model_spec(&self, universe: usize, n: usize) -> Result<ModelSpec, CliError> {
        if n == 0 || n >= universe {
            return Err(CliError::Input(format!(
                "subset size must satisfy 0 < n < M, got n={n}, M={universe}"
            )));
        }
        Ok(ModelSpec::for_kind(self.family.kind(), n, universe - n)?)
    }

    pub fn two_stage_spec(&self, universe: usize, n: usize) -> Result<TwoStageSpec, CliError> {
        Ok(TwoStageSpec::symmetric(self.model_spec(universe, n)?))
    }

    pub fn brute_force(&self) -> BruteForceConfig {
        BruteForceConfig {
            epsilon: self.epsilon,
            n_mc: self.n_mc,
            cdf_grid: self.cdf_grid,
            n_samples: self.n_samples,
            seed: self.seed,
            enumeration_budget: self.enumeration_budget,
        }
    }

    pub fn mcmc(&self) -> McmcConfig {
        McmcConfig {
            sigma2: self.sigma2,
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            n_chains: self.n_chains,
            seed: self.seed,
            proposal: match self.proposal {
                Proposal::SelectionCounts => ProposalWeights::SelectionCounts,
                Proposal::Flat => ProposalWeights::Flat,
            },
        }
    }

    pub fn quad(&self) -> QuadConfig {
        QuadConfig {
            nodes: self.quad_nodes,
            max_references: self.max_references,
            max_compositions: self.max_compositions,
        }
    }

    pub fn two_stage(&self) -> TwoStageConfig {
        TwoStageConfig {
            epsilon: self.epsilon,
            n_mc: self.n_mc,
            cdf_grid: self.cdf_grid,
            n_samples: self.n_samples,
            seed: self.seed,
            quad: self.quad(),
            enumeration_budget: self.enumeration_budget,
        }
    }

    pub fn thresholds(&self) -> SignalThresholds {
        SignalThresholds {
            alert: self.thresholds.alert,
            action: self.thresholds.action,
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults_and_flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 7\nn-mc = 50\n[thresholds]\nalert = 0.1\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            seed: Some(9),
            ..ConfigArgs::default()
        };
        let c = AnalysisConfig::resolve(&args).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.n_mc, 50);
        assert_eq!(c.thresholds.alert, 0.1);
        assert_eq!(c.thresholds.action, 0.005);
        assert_eq!(c.cdf_grid, 10_000);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(AnalysisConfig::from_toml("sede = 1").is_err());
        let mut c = AnalysisConfig::default();
        c.thresholds.action = 0.2;
        assert!(c.validate().is_err());
        let c = AnalysisConfig {
            burn_in: 10,
            n_iter: 10,
            ..AnalysisConfig::default()
        };
        assert!(c.validate().is_err());
        let c = AnalysisConfig {
            epsilon: 0.0,
            ..AnalysisConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = AnalysisConfig::default();
        let b = AnalysisConfig {
            seed: 1,
            ..AnalysisConfig::default()
        };
        assert_eq!(a.hash(), AnalysisConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let c = AnalysisConfig {
            model: ModelKind::Hierarchical,
            family: Family::Binomial,
            ..AnalysisConfig::default()
        };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(AnalysisConfig::from_toml(&text).unwrap(), c);
    }
}
