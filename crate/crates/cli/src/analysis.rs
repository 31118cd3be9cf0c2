//! Runs the configured analysis and assembles its report.

use ilc_core::one_stage::{
    brute_force_posterior, mcmc_posterior, posterior_p_values, CenterProbability, Dataset,
    PosteriorOneStage,
};
use ilc_core::two_stage::{
    bayes_factor_band, bayes_factor_with, gamma_statistics, precompute_tables,
    two_stage_posterior_with, DTable, GroupedDataset,
};
use sha2::{Digest, Sha256};

use crate::config::{hex, AnalysisConfig, Inference, ModelKind};
use crate::error::CliError;
use crate::ingest::{write_csv, Input};
use crate::report::*;

const ONE_STAGE: &str = "inference-one-stage";
const TWO_STAGE: &str = "inference-two-stage";

fn source(module: &str, op: &str) -> String {
    format!("{module}::{op}")
}

pub fn data_summary(input: &Input) -> Result<DataSummary, CliError> {
    let mut csv = Vec::new();
    write_csv(&mut csv, input)?;
    let labs = match input {
        Input::Pooled(_) => Vec::new(),
        Input::Grouped(d) => d
            .labs()
            .iter()
            .map(|l| LabSize {
                id: l.id.clone(),
                operators: l.len(),
            })
            .collect(),
    };
    Ok(DataSummary {
        universe_size: input.universe(),
        subset_size: input.n(),
        observations: input.num_observations(),
        labs,
        hash: hex(&Sha256::digest(&csv)),
    })
}

fn histogram(data: &Dataset) -> (HistogramSection, (String, String)) {
    let counts = data.selection_counts();
    let table = tsv(
        &["item", "count"],
        counts.iter().enumerate().map(|(i, c)| vec![i + 1, *c]),
    );
    (
        HistogramSection {
            source: source("ilc-cli", "selection_histogram"),
            counts,
            file: HISTOGRAM_FILE.into(),
        },
        (HISTOGRAM_FILE.into(), table),
    )
}

fn base_report(command: &str, config: &AnalysisConfig, input: &Input) -> Result<(AnalysisReport, Vec<(String, String)>), CliError> {
    let (selection_histogram, sidecar) = histogram(&input.pooled());
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        tool: Tool::current(),
        command: command.into(),
        config_hash: config.hash(),
        seed: config.seed,
        config: config.clone(),
        data: data_summary(input)?,
        selection_histogram,
        posterior: None,
        u: None,
        signals: None,
        labs: None,
        evidence: None,
        diagnostics: None,
    };
    Ok((report, vec![sidecar]))
}

fn center_rows(support: &[CenterProbability]) -> (Vec<CenterRow>, String) {
    let rows: Vec<CenterRow> = support
        .iter()
        .map(|c| CenterRow {
            set: c.center.to_string(),
            probability: c.probability,
            std_dev: c.std_dev,
        })
        .collect();
    let table = tsv(
        &["set", "probability", "std_dev"],
        rows.iter().map(|r| {
            vec![
                r.set.clone(),
                r.probability.to_string(),
                r.std_dev.map_or(String::new(), |s| s.to_string()),
            ]
        }),
    );
    (rows, table)
}

/// Fits the pooled or hierarchical model and scores observations or labs.
///
/// `tables` reuses lab tables loaded from a cache; they are built otherwise.
pub fn fit(config: &AnalysisConfig, input: &Input, tables: Option<&DTable>) -> Result<Outputs, CliError> {
    match config.model {
        ModelKind::Pooled => fit_pooled("fit", config, input),
        ModelKind::Hierarchical => fit_hierarchical(config, input, tables),
    }
}

/// Pooled fit; the report carries the p-value of every observation.
pub fn signals(config: &AnalysisConfig, input: &Input) -> Result<Outputs, CliError> {
    fit_pooled("signals", config, input)
}

pub fn pooled_posterior(config: &AnalysisConfig, data: &Dataset) -> Result<(PosteriorOneStage, &'static str), CliError> {
    let spec = config.model_spec(data.universe(), data.n())?;
    Ok(match config.inference {
        Inference::BruteForce => (brute_force_posterior(data, &spec, &config.brute_force())?, "brute_force_posterior"),
        Inference::Mcmc => (mcmc_posterior(data, &spec, &config.mcmc())?, "mcmc_posterior"),
    })
}

fn fit_pooled(command: &str, config: &AnalysisConfig, input: &Input) -> Result<Outputs, CliError> {
    let data = input.pooled();
    let spec = config.model_spec(data.universe(), data.n())?;
    let (post, op) = pooled_posterior(config, &data)?;
    let (mut report, mut sidecars) = base_report(command, config, input)?;

    let (centers, table) = center_rows(&post.center_support);
    sidecars.push((POSTERIOR_FILE.into(), table));
    report.posterior = Some(PosteriorSection {
        source: source(ONE_STAGE, op),
        method: match config.inference {
            Inference::BruteForce => "brute-force",
            Inference::Mcmc => "mcmc",
        }
        .into(),
        centers,
        samples: post.samples.len(),
        samples_file: U_SAMPLES_FILE.into(),
        table_file: POSTERIOR_FILE.into(),
    });
    sidecars.push((
        U_SAMPLES_FILE.into(),
        tsv(
            &["draw", "center", "u"],
            post.samples
                .iter()
                .enumerate()
                .map(|(i, s)| vec![i.to_string(), s.center.to_string(), s.u.to_string()]),
        ),
    ));
    report.u = u_summary(&source(ONE_STAGE, op), post.u_samples());

    let sig = posterior_p_values(&data, &spec, &post, &config.thresholds())?;
    report.signals = Some(SignalSection {
        source: source(ONE_STAGE, "posterior_p_values"),
        thresholds: sig.thresholds,
        observations: sig.observations,
    });
    if let Some(log_evidence) = post.log_evidence {
        report.evidence = Some(EvidenceSection {
            source: source(ONE_STAGE, "estimate_evidence"),
            log_evidence: Some(log_evidence),
            log_evidence_pooled: None,
            log_bayes_factor: None,
            interpretation: None,
        });
    }
    report.diagnostics = Some(serde_json::to_value(&post.diagnostics)?);
    Ok(Outputs { report, sidecars })
}

fn require_grouped(input: &Input) -> Result<&GroupedDataset, CliError> {
    input.grouped().ok_or_else(|| {
        CliError::Input(
            "the hierarchical model needs grouped data: a `lab` column with at least two labs"
                .into(),
        )
    })
}

/// Lab tables for `input` under `config`.
pub fn build_tables(config: &AnalysisConfig, input: &Input) -> Result<DTable, CliError> {
    let data = require_grouped(input)?;
    let spec = config.two_stage_spec(data.universe(), data.n())?;
    Ok(precompute_tables(data, &spec, &config.quad())?)
}

fn tables_for<'a>(
    config: &AnalysisConfig,
    input: &Input,
    given: Option<&'a DTable>,
    built: &'a mut Option<DTable>,
) -> Result<&'a DTable, CliError> {
    match given {
        Some(t) => Ok(t),
        None => Ok(built.insert(build_tables(config, input)?)),
    }
}

fn fit_hierarchical(config: &AnalysisConfig, input: &Input, tables: Option<&DTable>) -> Result<Outputs, CliError> {
    let data = require_grouped(input)?;
    let spec = config.two_stage_spec(data.universe(), data.n())?;
    let mut built = None;
    let tables = tables_for(config, input, tables, &mut built)?;
    let post = two_stage_posterior_with(data, &spec, tables, &config.two_stage())?;
    let gammas = gamma_statistics(&post, &spec)?;
    let (mut report, mut sidecars) = base_report("fit", config, input)?;

    let (centers, table) = center_rows(&post.center_support);
    sidecars.push((POSTERIOR_FILE.into(), table));
    report.posterior = Some(PosteriorSection {
        source: source(TWO_STAGE, "two_stage_posterior"),
        method: "brute-force".into(),
        centers,
        samples: post.samples.len(),
        samples_file: U_SAMPLES_FILE.into(),
        table_file: POSTERIOR_FILE.into(),
    });
    sidecars.push((
        U_SAMPLES_FILE.into(),
        tsv(
            &["draw", "center", "u"],
            post.samples
                .iter()
                .enumerate()
                .map(|(i, s)| vec![i.to_string(), s.center.to_string(), s.u.to_string()]),
        ),
    ));
    report.u = u_summary(&source(TWO_STAGE, "two_stage_posterior"), post.u_samples());

    let mut rows = Vec::new();
    for (i, s) in post.samples.iter().enumerate() {
        for (l, id) in post.lab_ids.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                id.clone(),
                s.lab_centers[l].to_string(),
                s.lab_u[l].to_string(),
                s.lab_distance[l].to_string(),
                s.gamma[l].to_string(),
            ]);
        }
    }
    sidecars.push((
        GAMMA_FILE.into(),
        tsv(&["draw", "lab", "lab_center", "u_i", "k", "gamma"], rows),
    ));
    report.labs = Some(LabSection {
        source: source(TWO_STAGE, "gamma_statistics"),
        labs: gammas
            .into_iter()
            .map(|g| LabRow {
                lab_id: g.lab_id,
                gamma_mean: g.gamma_mean,
                gamma_median: g.gamma_median,
                u_median: g.u_median,
                mean_deviations: g.mean_deviations,
                deviations_at_median_u: g.deviations_at_median_u,
                k_histogram: g.k_histogram,
            })
            .collect(),
        samples_file: GAMMA_FILE.into(),
    });
    report.evidence = Some(EvidenceSection {
        source: source(TWO_STAGE, "two_stage_posterior"),
        log_evidence: Some(post.log_evidence),
        log_evidence_pooled: None,
        log_bayes_factor: None,
        interpretation: None,
    });
    report.diagnostics = Some(serde_json::to_value(&post.diagnostics)?);
    Ok(Outputs { report, sidecars })
}

/// Evidence of the hierarchical model against the pooled one.
pub fn bayes_factor(config: &AnalysisConfig, input: &Input, tables: Option<&DTable>) -> Result<Outputs, CliError> {
    let data = require_grouped(input)?;
    let spec = config.two_stage_spec(data.universe(), data.n())?;
    let mut built = None;
    let tables = tables_for(config, input, tables, &mut built)?;
    let bf = bayes_factor_with(data, &spec, tables, &config.two_stage())?;
    let (mut report, sidecars) = base_report("bayes-factor", config, input)?;
    report.evidence = Some(EvidenceSection {
        source: source(TWO_STAGE, "bayes_factor"),
        log_evidence: Some(bf.log_evidence_hierarchical),
        log_evidence_pooled: Some(bf.log_evidence_pooled),
        log_bayes_factor: Some(bf.log_bayes_factor),
        interpretation: Some(bayes_factor_band(bf.log_bayes_factor).into()),
    });
    Ok(Outputs { report, sidecars })
}
