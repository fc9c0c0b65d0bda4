//! Long-format CSV datasets: one row per observation with a cluster id,
//! an integer time index, an ordinal response and covariates.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use wcl_core::model::ClusterData;
use wcl_core::{Result, WclError};

/// Which columns hold what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub id: String,
    pub time: String,
    pub response: String,
    /// Covariate columns; every remaining column when absent.
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            id: "id".into(),
            time: "time".into(),
            response: "y".into(),
            covariates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    /// Rescale every covariate to mean 0 and variance 1.
    pub standardize: bool,
    /// Raw response codes from lowest to highest category.
    pub category_order: Option<Vec<i64>>,
    /// Number of categories; inferred from the data when absent.
    pub categories: Option<usize>,
}

/// Centering and scaling applied to one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clusters: Vec<ClusterData>,
    pub covariates: Vec<String>,
    pub categories: usize,
    pub standardization: Vec<Scaling>,
}

impl Dataset {
    pub fn n_observations(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).sum()
    }
}

fn ingest(msg: impl Into<String>) -> WclError {
    WclError::Ingestion(msg.into())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| ingest(format!("column '{name}' not found")))
}

fn parse_int(s: &str, what: &str, line: u64) -> Result<i64> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| ingest(format!("line {line}: {what} '{s}' is not an integer")))
}

pub fn parse_dataset(path: &Path, mapping: &ColumnMapping, opts: &IngestOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| ingest(format!("{}: {e}", path.display())))?;
    parse_dataset_str(&text, mapping, opts)
}

pub fn parse_dataset_str(text: &str, mapping: &ColumnMapping, opts: &IngestOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ingest(e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(ingest("empty file"));
    }
    let id_col = column(&headers, &mapping.id)?;
    let time_col = column(&headers, &mapping.time)?;
    let y_col = column(&headers, &mapping.response)?;
    let covariates: Vec<String> = match &mapping.covariates {
        Some(c) => c.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id_col, time_col, y_col].contains(i))
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let x_cols = covariates
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let order: Option<HashMap<i64, usize>> = opts
        .category_order
        .as_ref()
        .map(|o| o.iter().enumerate().map(|(i, v)| (*v, i + 1)).collect());
    if let (Some(o), Some(map)) = (&opts.category_order, &order) {
        if map.len() != o.len() {
            return Err(ingest("category_order lists a code twice"));
        }
    }

    // rows grouped by id, in order of first appearance
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, BTreeMap<i64, (usize, Vec<f64>)>)> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| ingest(format!("line {line}: {e}")))?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(ingest(format!("line {line}: missing cluster id")));
        }
        let t = parse_int(rec.get(time_col).unwrap_or(""), "time index", line)?;
        if t < 0 {
            return Err(ingest(format!("line {line}: negative time index {t}")));
        }
        let raw = parse_int(rec.get(y_col).unwrap_or(""), "response", line)?;
        let y = match &order {
            Some(map) => *map
                .get(&raw)
                .ok_or_else(|| ingest(format!("line {line}: response {raw} is not in category_order")))?,
            None if raw >= 1 => raw as usize,
            None => return Err(ingest(format!("line {line}: response {raw} must be at least 1"))),
        };
        let x = x_cols
            .iter()
            .zip(&covariates)
            .map(|(&c, name)| {
                let s = rec.get(c).unwrap_or("").trim();
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(ingest(format!(
                        "line {line}: covariate '{name}' value '{s}' is not a finite number"
                    ))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let g = *index.entry(id.clone()).or_insert_with(|| {
            groups.push((id.clone(), BTreeMap::new()));
            groups.len() - 1
        });
        if groups[g].1.insert(t, (y, x)).is_some() {
            return Err(ingest(format!(
                "line {line}: duplicate observation for id '{id}' at time {t}"
            )));
        }
    }
    if groups.is_empty() {
        return Err(ingest("no data rows"));
    }

    let observed_max = groups.iter().flat_map(|g| g.1.values().map(|v| v.0)).max().unwrap_or(0);
    let k = match opts.categories {
        Some(k) if k < observed_max => {
            return Err(ingest(format!(
                "response {observed_max} exceeds the declared {k} categories"
            )));
        }
        Some(k) => k,
        None => opts.category_order.as_ref().map_or(observed_max, |o| o.len()),
    };
    if k < 2 {
        return Err(ingest("need at least two response categories"));
    }
    let mut seen = vec![false; k + 1];
    for g in &groups {
        for v in g.1.values() {
            seen[v.0] = true;
        }
    }
    let missing: Vec<usize> = (1..=k).filter(|&c| !seen[c]).collect();
    if !missing.is_empty() {
        return Err(ingest(format!(
            "categories {missing:?} of 1..{k} never occur; merge them with a neighbouring category \
             (recode the response or use category_order) before fitting"
        )));
    }

    let t0 = groups.iter().flat_map(|g| g.1.keys().copied()).min().unwrap_or(0);
    let mut clusters: Vec<ClusterData> = groups
        .into_iter()
        .map(|(id, obs)| {
            let coords = obs.keys().map(|t| (t - t0) as usize).collect();
            let (y, x): (Vec<usize>, Vec<Vec<f64>>) = obs.into_values().unzip();
            ClusterData { id, y, x, coords }
        })
        .collect();

    let standardization = if opts.standardize {
        standardize(&mut clusters, &covariates)?
    } else {
        Vec::new()
    };
    Ok(Dataset {
        clusters,
        covariates,
        categories: k,
        standardization,
    })
}

fn standardize(clusters: &mut [ClusterData], names: &[String]) -> Result<Vec<Scaling>> {
    let n: usize = clusters.iter().map(|c| c.len()).sum();
    let mut out = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let vals = || clusters.iter().flat_map(|c| c.x.iter().map(move |r| r[j]));
        let mean = vals().sum::<f64>() / n as f64;
        let sd = (vals().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(sd > 0.0) {
            return Err(ingest(format!(
                "covariate '{name}' is constant and cannot be standardized"
            )));
        }
        out.push(Scaling {
            column: name.clone(),
            mean,
            sd,
        });
    }
    for c in clusters.iter_mut() {
        for row in c.x.iter_mut() {
            for (v, s) in row.iter_mut().zip(&out) {
                *v = (*v - s.mean) / s.sd;
            }
        }
    }
    Ok(out)
}

/// Long-format CSV with columns `id,time,y,<covariates>`; times are the
/// cluster coordinates.
pub fn dataset_to_csv(clusters: &[ClusterData], covariates: &[String]) -> Result<String> {
    let io = |e: csv::Error| WclError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "time".into(), "y".into()];
    header.extend(covariates.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for c in clusters {
        for j in 0..c.len() {
            let mut rec = vec![c.id.clone(), c.coords[j].to_string(), c.y[j].to_string()];
            rec.extend(c.x[j].iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| WclError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| WclError::Io(e.to_string()))
}

/// Names `x1..xp`.
pub fn default_covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}
