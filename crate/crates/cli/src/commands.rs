//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ilc_core::simulate::{
    check_distribution, simulate_grouped, simulate_pooled, LabDispersion, SimulationConfig,
};
use ilc_core::two_stage::{read_cache, write_cache, DTable};
use ilc_core::Subset;

use crate::analysis;
use crate::config::{AnalysisConfig, ConfigArgs, Family};
use crate::error::CliError;
use crate::ingest::{read_csv, write_csv, Input};
use crate::report::{write_outputs, Metadata, Outputs, Tool};

#[derive(Debug, Parser)]
#[command(name = "ilc", version, about = "Bayesian analysis of set-valued interlaboratory comparisons")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "ILC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the pooled or hierarchical model and write a report.
    Fit(FitArgs),
    /// Posterior p-values and alert/action signals of every operator.
    Signals(AnalysisArgs),
    /// Log Bayes factor of the hierarchical model against the pooled one.
    BayesFactor(FitArgs),
    /// Draw a dataset from the model and write it as CSV.
    Simulate(SimulateArgs),
    /// Compare a sampler's distance histogram with the exact pmf.
    CheckDistribution(CheckArgs),
    /// Build or verify a lab-table cache.
    #[command(subcommand)]
    Cache(CacheCommand),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with header `lab,operator,item...` (or `operator,item...`); items are 1-based.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of items M in the universe.
    #[arg(long, short = 'M')]
    pub universe_size: usize,
    /// Number of items n each operator selects.
    #[arg(long, short = 'n')]
    pub subset_size: usize,
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory for the report and sidecar files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Lab-table cache; read when present and valid, written otherwise.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, short = 'M')]
    pub universe_size: usize,
    #[arg(long, short = 'n')]
    pub subset_size: usize,
    #[arg(long, value_enum, default_value = "fisher")]
    pub family: Family,
    /// Consensus as comma-separated 1-based items; drawn at random when omitted.
    #[arg(long, value_delimiter = ',')]
    pub center: Option<Vec<usize>>,
    /// Top-level dispersion.
    #[arg(long)]
    pub u: f64,
    /// Operators per lab, comma separated; omit for pooled data.
    #[arg(long, value_delimiter = ',')]
    pub labs: Option<Vec<usize>>,
    /// Number of operators for pooled data.
    #[arg(long, default_value_t = 12)]
    pub observations: usize,
    /// Lab-level dispersion: a number, or `prior` to draw one per lab.
    #[arg(long)]
    pub lab_u: Option<String>,
    /// Redraw lab centers until they differ from the consensus and each other.
    #[arg(long)]
    pub distinct_lab_centers: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; the ground truth goes next to it as `<out>.truth.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long, value_enum, default_value = "fisher")]
    pub family: Family,
    #[arg(long)]
    pub u: f64,
    #[arg(long, short = 'M')]
    pub universe_size: usize,
    #[arg(long, short = 'n')]
    pub subset_size: usize,
    /// Center as 1-based items; defaults to `{1, ..., n}`.
    #[arg(long, value_delimiter = ',')]
    pub center: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON result here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// Precompute lab tables and write them to a cache file.
    Build {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Check that a cache file matches the data and settings.
    Verify {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        cache: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn parse_center(items: &Option<Vec<usize>>, universe: usize, n: usize) -> Result<Option<Subset>, CliError> {
    let Some(items) = items else { return Ok(None) };
    if items.len() != n {
        return Err(CliError::Input(format!("center needs {n} items, got {}", items.len())));
    }
    if items.iter().any(|&i| i == 0 || i > universe) {
        return Err(CliError::Input(format!("center items must lie in 1..={universe}")));
    }
    let zero: Vec<usize> = items.iter().map(|i| i - 1).collect();
    let s = Subset::from_indices(universe, &zero)?;
    if s.cardinality() != n {
        return Err(CliError::Input("center has repeated items".into()));
    }
    Ok(Some(s))
}

fn load(args: &DataArgs) -> Result<Input, CliError> {
    read_csv(&args.data, args.universe_size, args.subset_size)
}

fn load_or_build_tables(
    path: &Path,
    config: &AnalysisConfig,
    input: &Input,
) -> Result<DTable, CliError> {
    let data = input.grouped().ok_or_else(|| {
        CliError::Input("a lab-table cache needs grouped data with at least two labs".into())
    })?;
    if path.exists() {
        let spec = config.two_stage_spec(data.universe(), data.n())?;
        return Ok(read_cache(path, data, &spec, &config.quad())?);
    }
    let tables = analysis::build_tables(config, input)?;
    write_cache(path, &tables)?;
    Ok(tables)
}

fn finish(outputs: &Outputs, out: Option<&Path>, started: (u64, Instant)) -> Result<(), CliError> {
    if let Some(dir) = out {
        let metadata = Metadata {
            tool: Tool::current(),
            command_line: std::env::args().collect(),
            started_unix_seconds: started.0,
            elapsed_seconds: started.1.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        };
        write_outputs(dir, outputs, &metadata)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let started = (
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        Instant::now(),
    );
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    match cli.command {
        Command::Fit(args) => {
            let config = AnalysisConfig::resolve(&args.analysis.config)?;
            let input = load(&args.analysis.data)?;
            let tables = match (&args.cache, config.model) {
                (Some(path), crate::config::ModelKind::Hierarchical) => {
                    Some(load_or_build_tables(path, &config, &input)?)
                }
                _ => None,
            };
            let outputs = analysis::fit(&config, &input, tables.as_ref())?;
            if let Some(p) = &outputs.report.posterior {
                writeln!(stdout, "set\tprobability")?;
                for c in p.centers.iter().take(10) {
                    writeln!(stdout, "{}\t{}", c.set, c.probability)?;
                }
            }
            finish(&outputs, args.analysis.out.as_deref(), started)
        }
        Command::Signals(args) => {
            let config = AnalysisConfig::resolve(&args.config)?;
            let input = load(&args.data)?;
            let outputs = analysis::signals(&config, &input)?;
            writeln!(stdout, "operator\tp_value\tdeviations\tsignal")?;
            for o in &outputs.report.signals.as_ref().expect("signals section").observations {
                let signal = serde_json::to_value(o.signal)?;
                writeln!(
                    stdout,
                    "{}\t{}\t{}\t{}",
                    o.id,
                    o.p_value,
                    o.deviations_from_mode,
                    signal.as_str().unwrap_or_default()
                )?;
            }
            finish(&outputs, args.out.as_deref(), started)
        }
        Command::BayesFactor(args) => {
            let config = AnalysisConfig::resolve(&args.analysis.config)?;
            let input = load(&args.analysis.data)?;
            let tables = match &args.cache {
                Some(path) => Some(load_or_build_tables(path, &config, &input)?),
                None => None,
            };
            let outputs = analysis::bayes_factor(&config, &input, tables.as_ref())?;
            let ev = outputs.report.evidence.as_ref().expect("evidence section");
            writeln!(
                stdout,
                "log evidence (hierarchical)\t{}\nlog evidence (pooled)\t{}\nlog Bayes factor\t{}\ninterpretation\t{}",
                ev.log_evidence.unwrap_or(f64::NAN),
                ev.log_evidence_pooled.unwrap_or(f64::NAN),
                ev.log_bayes_factor.unwrap_or(f64::NAN),
                ev.interpretation.as_deref().unwrap_or("")
            )?;
            finish(&outputs, args.analysis.out.as_deref(), started)
        }
        Command::Simulate(args) => {
            let (input, truth) = simulate(&args)?;
            let file = std::fs::File::create(&args.out)?;
            write_csv(file, &input)?;
            let mut text = serde_json::to_string_pretty(&truth)?;
            text.push('\n');
            std::fs::write(truth_path(&args.out), text)?;
            writeln!(stdout, "wrote {} operators to {}", input.num_observations(), args.out.display())?;
            Ok(())
        }
        Command::CheckDistribution(args) => {
            let center = parse_center(&args.center, args.universe_size, args.subset_size)?
                .map_or_else(
                    || Subset::from_indices(args.universe_size, &(0..args.subset_size).collect::<Vec<_>>()),
                    Ok,
                )?;
            let gof = check_distribution(args.family.kind(), args.u, &center, args.draws, args.seed)?;
            let mut text = serde_json::to_string_pretty(&gof)?;
            text.push('\n');
            match &args.out {
                Some(path) => std::fs::write(path, text)?,
                None => stdout.write_all(text.as_bytes())?,
            }
            Ok(())
        }
        Command::Cache(CacheCommand::Build { data, out, config }) => {
            let config = AnalysisConfig::resolve(&config)?;
            let input = load(&data)?;
            let tables = analysis::build_tables(&config, &input)?;
            write_cache(&out, &tables)?;
            writeln!(stdout, "wrote tables for {} labs to {}", tables.labs.len(), out.display())?;
            Ok(())
        }
        Command::Cache(CacheCommand::Verify { data, cache, config }) => {
            let config = AnalysisConfig::resolve(&config)?;
            let input = load(&data)?;
            let grouped = input.grouped().ok_or_else(|| {
                CliError::Input("a lab-table cache needs grouped data with at least two labs".into())
            })?;
            let spec = config.two_stage_spec(grouped.universe(), grouped.n())?;
            read_cache(&cache, grouped, &spec, &config.quad())?;
            writeln!(stdout, "{} matches the data", cache.display())?;
            Ok(())
        }
    }
}

pub fn truth_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".truth.json");
    PathBuf::from(name)
}

/// Dataset and ground truth described by `args`.
pub fn simulate(args: &SimulateArgs) -> Result<(Input, ilc_core::simulate::GroundTruth), CliError> {
    let lab_u = match args.lab_u.as_deref() {
        None => LabDispersion::Fixed(args.u),
        Some("prior") => LabDispersion::Prior,
        Some(v) => LabDispersion::Fixed(
            v.parse()
                .map_err(|_| CliError::Input(format!("--lab-u must be a number or `prior`, got {v:?}")))?,
        ),
    };
    let config = SimulationConfig {
        universe: args.universe_size,
        n: args.subset_size,
        family: args.family.kind(),
        center: parse_center(&args.center, args.universe_size, args.subset_size)?,
        u: args.u,
        labs: args.labs.clone().unwrap_or_default(),
        observations: args.observations,
        lab_u,
        distinct_lab_centers: args.distinct_lab_centers,
        seed: args.seed,
    };
    if config.labs.is_empty() {
        let (d, truth) = simulate_pooled(&config)?;
        Ok((Input::Pooled(d), truth))
    } else {
        let (d, truth) = simulate_grouped(&config)?;
        Ok((Input::Grouped(d), truth))
    }
}
