//! JSON configuration files. Command-line flags override their keys.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wcl_core::estimator::{FitOptions, Method};
use wcl_core::margins::LinkFunction;
use wcl_core::model::CorrelationKind;
use wcl_core::oracle::EfficiencyConfig;
use wcl_core::sim::SimDesign;

use crate::dataset::{ColumnMapping, IngestOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub link: LinkFunction,
    pub correlation: CorrelationKind,
    pub method: Method,
    /// Recorded in the report; fitting itself is deterministic.
    pub seed: u64,
    pub options: FitOptions,
    pub columns: ColumnMapping,
    pub ingest: IngestOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            data: None,
            link: LinkFunction::Probit,
            correlation: CorrelationKind::Unstructured,
            method: Method::Wcl,
            seed: 0,
            options: FitOptions::default(),
            columns: ColumnMapping::default(),
            ingest: IngestOptions::default(),
        }
    }
}

/// A named design or a fully specified one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    Longitudinal41 { n: usize, b: usize, seed: u64 },
    TimeSeries42 { d: usize, b: usize, seed: u64 },
    Custom { design: SimDesign },
}

impl DesignSpec {
    pub fn build(&self, seed: Option<u64>) -> SimDesign {
        let mut d = match self {
            DesignSpec::Longitudinal41 { n, b, seed } => SimDesign::longitudinal41(*n, *b, *seed),
            DesignSpec::TimeSeries42 { d, b, seed } => SimDesign::time_series42(*d, *b, *seed),
            DesignSpec::Custom { design } => design.clone(),
        };
        if let Some(s) = seed {
            d.seed = s;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub design: DesignSpec,
    pub methods: Vec<Method>,
    pub options: FitOptions,
    /// Also write this replication's dataset as CSV.
    pub emit_data: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            design: DesignSpec::Longitudinal41 {
                n: 100,
                b: 100,
                seed: 1,
            },
            methods: vec![Method::Cl, Method::Wcl],
            options: FitOptions::default(),
            emit_data: None,
        }
    }
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

pub fn load_efficiency(path: Option<&Path>) -> anyhow::Result<EfficiencyConfig> {
    load(path)
}
