use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use wcl_core::estimator::{fit_cl, fit_wcl, FitReport, Method};
use wcl_core::margins::LinkFunction;
use wcl_core::model::CorrelationKind;
use wcl_core::oracle::{asymptotic_variance_table, ml_fit, table_to_csv, EfficiencyConfig};
use wcl_core::sim::{replication_study, sample_ordinal_mvn};

use crate::config::{self, FitConfig, SimulateConfig};
use crate::dataset::{dataset_to_csv, default_covariate_names, parse_dataset, Dataset};
use crate::output::{write_atomic, write_json};
use crate::report::{fit_document, fit_text, DataSummary, EfficiencyDocument, FitDocument, SimulationDocument};
use crate::SCHEMA_VERSION;

#[derive(Debug, Parser)]
#[command(
    name = "wcl",
    version,
    about = "Weighted composite likelihood for multivariate ordinal data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a long-format CSV dataset.
    Fit(FitArgs),
    /// Run a replication study, or write a simulated dataset.
    Simulate(SimulateArgs),
    /// Asymptotic variances and efficiencies under exchangeable correlation.
    Efficiency(EfficiencyArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub link: Option<LinkFunction>,
    #[arg(long)]
    pub correlation: Option<CorrelationKind>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub stage2_cap: Option<usize>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Rescale covariates to mean 0 and variance 1.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of cl,wcl.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<Method>>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub stage2_cap: Option<usize>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Write the dataset of this replication as CSV.
    #[arg(long)]
    pub emit_data: Option<u64>,
    /// Only write the dataset; skip the study.
    #[arg(long)]
    pub data_only: bool,
}

#[derive(Debug, Args)]
pub struct EfficiencyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub link: Option<LinkFunction>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Comma-separated exchangeable correlations.
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit(a) => run_fit_command(&a).map(|_| ()),
        Command::Simulate(a) => run_simulate(&a),
        Command::Efficiency(a) => run_efficiency(&a),
    }
}

pub fn fit_config(args: &FitArgs) -> anyhow::Result<FitConfig> {
    let mut c: FitConfig = config::load(args.config.as_deref())?;
    if args.data.is_some() {
        c.data = args.data.clone();
    }
    if let Some(v) = args.link {
        c.link = v;
    }
    if let Some(v) = args.correlation {
        c.correlation = v;
    }
    if let Some(v) = args.method {
        c.method = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.stage2_cap {
        c.options.stage2_cap = v;
    }
    if args.max_lag.is_some() {
        c.options.max_lag = args.max_lag;
    }
    if args.standardize {
        c.ingest.standardize = true;
    }
    Ok(c)
}

/// Fits `dataset` as configured.
pub fn run_fit(config: &FitConfig, dataset: &Dataset) -> wcl_core::Result<FitReport> {
    let data = &dataset.clusters;
    match config.method {
        Method::Cl => fit_cl(data, config.link, config.correlation, &config.options),
        Method::Wcl => fit_wcl(data, config.link, config.correlation, &config.options),
        Method::Ml => ml_fit(data, config.link, config.correlation, &config.options),
    }
}

fn run_fit_command(args: &FitArgs) -> anyhow::Result<FitDocument> {
    let config = fit_config(args)?;
    let path = config
        .data
        .clone()
        .context("no dataset given (use --data or the config key \"data\")")?;
    let dataset = parse_dataset(&path, &config.columns, &config.ingest)?;
    let report = run_fit(&config, &dataset).with_context(|| format!("{} fit failed", config.method))?;
    let summary = DataSummary {
        path: Some(path.display().to_string()),
        n_clusters: dataset.clusters.len(),
        n_observations: dataset.n_observations(),
        max_cluster_size: dataset.clusters.iter().map(|c| c.len()).max().unwrap_or(0),
        categories: dataset.categories,
        covariates: dataset.covariates.clone(),
        standardization: dataset.standardization.clone(),
    };
    let doc = fit_document(&config, summary, &report);
    let stem = format!("fit_{}", config.method);
    write_json(&args.out_dir.join(format!("{stem}.json")), &doc)?;
    let text = fit_text(&doc);
    write_atomic(&args.out_dir.join(format!("{stem}.txt")), text.as_bytes())?;
    print!("{text}");
    Ok(doc)
}

pub fn simulate_config(args: &SimulateArgs) -> anyhow::Result<SimulateConfig> {
    let mut c: SimulateConfig = config::load(args.config.as_deref())?;
    if let Some(m) = &args.method {
        c.methods = m.clone();
    }
    if let Some(v) = args.stage2_cap {
        c.options.stage2_cap = v;
    }
    if args.max_lag.is_some() {
        c.options.max_lag = args.max_lag;
    }
    if args.emit_data.is_some() {
        c.emit_data = args.emit_data;
    }
    Ok(c)
}

fn run_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let config = simulate_config(args)?;
    let design = config.design.build(args.seed);
    design.validate()?;
    let emit = config.emit_data.or(args.data_only.then_some(0));
    if let Some(rep) = emit {
        let data = sample_ordinal_mvn(&design, rep)?;
        let csv = dataset_to_csv(&data, &default_covariate_names(design.beta.len()))?;
        let path = out_path(&args.out_dir, &format!("data_rep{rep}.csv"));
        write_atomic(&path, csv.as_bytes())?;
        println!("wrote {}", path.display());
    }
    if args.data_only {
        return Ok(());
    }
    let (summary, manifest) = replication_study(&design, &config.methods, &config.options)?;
    let mut config = config;
    config.design = crate::config::DesignSpec::Custom { design: design.clone() };
    write_atomic(&out_path(&args.out_dir, "simulation.csv"), summary.to_csv()?.as_bytes())?;
    let doc = SimulationDocument {
        schema_version: SCHEMA_VERSION.into(),
        kind: "simulation".into(),
        config,
        manifest,
        summary,
    };
    write_json(&out_path(&args.out_dir, "simulation.json"), &doc)?;
    println!(
        "{} replications, {} failed; wrote {}",
        doc.summary.replications,
        doc.summary.failures,
        out_path(&args.out_dir, "simulation.csv").display()
    );
    Ok(())
}

fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn efficiency_config(args: &EfficiencyArgs) -> anyhow::Result<EfficiencyConfig> {
    let mut c = config::load_efficiency(args.config.as_deref())?;
    if let Some(v) = args.link {
        c.link = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.d {
        c.d = v;
    }
    if let Some(v) = &args.rho {
        c.rho_grid = v.clone();
    }
    if let Some(v) = args.n {
        c.n = v;
    }
    Ok(c)
}

fn run_efficiency(args: &EfficiencyArgs) -> anyhow::Result<()> {
    let config = efficiency_config(args)?;
    let rows = asymptotic_variance_table(&config)?;
    write_atomic(
        &out_path(&args.out_dir, "efficiency.csv"),
        table_to_csv(&rows)?.as_bytes(),
    )?;
    let doc = EfficiencyDocument {
        schema_version: SCHEMA_VERSION.into(),
        kind: "efficiency".into(),
        config,
        rows,
    };
    write_json(&out_path(&args.out_dir, "efficiency.json"), &doc)?;
    for r in &doc.rows {
        println!(
            "d={} rho={} {:<4} {:<8} {:>9.4} ({:.3})",
            r.d, r.rho, r.method, r.parameter, r.n_variance, r.efficiency
        );
    }
    Ok(())
}
