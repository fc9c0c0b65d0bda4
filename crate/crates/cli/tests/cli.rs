//! End-to-end checks of the `wcl` binary and the dataset reader.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use wcl_cli::dataset::{dataset_to_csv, default_covariate_names, parse_dataset_str, ColumnMapping, IngestOptions};
use wcl_cli::{EXIT_CAPABILITY, EXIT_CONVERGENCE, EXIT_INGESTION};
use wcl_core::sim::{sample_ordinal_mvn, SimDesign};
use wcl_core::WclError;

fn wcl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcl"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("run wcl")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_schema(doc: &Value, schema: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(schema);
    let schema = read_json(&path);
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    if let Err(errors) = compiled.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{schema:?} violations: {msgs:?}");
    };
}

fn parse(text: &str) -> wcl_core::Result<wcl_cli::dataset::Dataset> {
    parse_dataset_str(text, &ColumnMapping::default(), &IngestOptions::default())
}

fn is_ingestion(r: wcl_core::Result<wcl_cli::dataset::Dataset>) -> String {
    match r {
        Err(WclError::Ingestion(m)) => m,
        other => panic!("expected an ingestion error, got {other:?}"),
    }
}

#[test]
fn ingestion_errors() {
    assert!(is_ingestion(parse("")).contains("empty"));
    assert!(is_ingestion(parse("id,time,y\n")).contains("no data"));
    let gap = is_ingestion(parse("id,time,y\na,1,1\na,2,2\nb,1,4\n"));
    assert!(gap.contains("[3]") && gap.contains("merge"), "{gap}");
    let dup = is_ingestion(parse("id,time,y\na,1,1\na,1,2\n"));
    assert!(dup.contains("duplicate"), "{dup}");
    assert!(is_ingestion(parse("id,time,y\na,1,1.5\na,2,2\n")).contains("not an integer"));
    assert!(is_ingestion(parse("id,time,y\na,x,1\n")).contains("time index"));
    assert!(is_ingestion(parse("id,time,y,x1\na,1,1,abc\n")).contains("x1"));
    assert!(is_ingestion(parse("id,t,y\na,1,1\n")).contains("'time'"));
}

#[test]
fn relabelled_categories_and_time_gaps() {
    let text = "id,time,y\na,3,4\na,1,1\nb,2,2\nb,5,3\n";
    let opts = IngestOptions {
        category_order: Some(vec![4, 1, 2, 3]),
        ..IngestOptions::default()
    };
    let d = parse_dataset_str(text, &ColumnMapping::default(), &opts).unwrap();
    assert_eq!(d.categories, 4);
    // sorted by time and shifted so the earliest index is 0
    assert_eq!(d.clusters[0].y, vec![2, 1]);
    assert_eq!(d.clusters[0].coords, vec![0, 2]);
    assert_eq!(d.clusters[1].coords, vec![1, 4]);
}

#[test]
fn single_long_series_and_unequal_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut series = String::from("id,time,y,hr,temp\n");
    for t in 0..1024 {
        let _ = writeln!(
            series,
            "s,{t},{},{},{}",
            rng.gen_range(1..=4),
            60.0 + t as f64 * 0.01,
            rng.gen::<f64>()
        );
    }
    let d = parse(&series).unwrap();
    assert_eq!(d.clusters.len(), 1);
    assert_eq!(d.clusters[0].len(), 1024);
    assert_eq!(d.covariates, vec!["hr", "temp"]);

    let mut panel = String::from("id,time,y,x\n");
    let mut sizes = Vec::new();
    for i in 0..303 {
        let m = 1 + i % 3;
        sizes.push(m);
        for t in 0..m {
            let _ = writeln!(panel, "p{i},{t},{},{}", 1 + (i + t) % 5, i as f64);
        }
    }
    let opts = IngestOptions {
        standardize: true,
        ..IngestOptions::default()
    };
    let d = parse_dataset_str(&panel, &ColumnMapping::default(), &opts).unwrap();
    assert_eq!(d.clusters.len(), 303);
    assert_eq!(d.clusters.iter().map(|c| c.len()).collect::<Vec<_>>(), sizes);
    assert_eq!(d.categories, 5);
    let xs: Vec<f64> = d.clusters.iter().flat_map(|c| c.x.iter().map(|r| r[0])).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    assert_eq!(d.standardization.len(), 1);
}

#[test]
fn simulated_dataset_round_trips() {
    let design = SimDesign::longitudinal41(50, 1, 21);
    let data = sample_ordinal_mvn(&design, 3).unwrap();
    let names = default_covariate_names(design.beta.len());
    let csv = dataset_to_csv(&data, &names).unwrap();
    let back = parse(&csv).unwrap();
    assert_eq!(back.clusters, data);
    assert_eq!(back.covariates, names);
}

#[test]
fn fit_reports_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = wcl(
        &[
            "simulate",
            "--config",
            write(
                dir.path(),
                "sim.json",
                r#"{"design":{"preset":"longitudinal41","n":120,"b":1,"seed":5}}"#,
            )
            .to_str()
            .unwrap(),
            "--data-only",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = dir.path().join("data_rep0.csv");
    let mut l2 = Vec::new();
    for method in ["cl", "wcl"] {
        let out = wcl(
            &[
                "fit",
                "--data",
                data.to_str().unwrap(),
                "--method",
                method,
                "--link",
                "logit",
                "--correlation",
                "unstructured",
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("Est.") && text.contains("p-value"), "{text}");
        let doc = read_json(&dir.path().join(format!("fit_{method}.json")));
        assert_schema(&doc, "fit_report.schema.json");
        assert_eq!(doc["schema_version"], "1.0");
        assert_eq!(doc["config"]["method"], method);
        l2.push(doc.to_string());
        assert!(dir.path().join(format!("fit_{method}.txt")).exists());
    }
    assert_ne!(l2[0], l2[1]);
}

#[test]
fn simulate_is_byte_identical_and_follows_the_schema() {
    let cfg = r#"{"design":{"preset":"time_series42","d":30,"b":4,"seed":2},"methods":["cl","wcl"]}"#;
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "sim.json", cfg);
        let out = wcl(
            &["simulate", "--config", c.to_str().unwrap(), "--seed", "77"],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read(dir.path().join("simulation.csv")).unwrap();
        let json = std::fs::read(dir.path().join("simulation.json")).unwrap();
        let doc: Value = serde_json::from_slice(&json).unwrap();
        assert_schema(&doc, "simulation_report.schema.json");
        assert_eq!(doc["config"]["design"]["design"]["seed"], 77);
        assert!(String::from_utf8_lossy(&csv).contains("\nwcl,dBias,rho,"));
        outputs.push((csv, json));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn efficiency_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = wcl(&["efficiency", "--d", "3", "--rho", "0.1,0.4,0.7,0.9"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("efficiency.json"));
    assert_schema(&doc, "efficiency_report.schema.json");
    let rows = doc["rows"].as_array().unwrap();
    // three methods at four correlations, one row per parameter
    let method_rows: std::collections::BTreeSet<(String, String)> = rows
        .iter()
        .map(|r| (r["rho"].to_string(), r["method"].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(method_rows.len(), 12);
    assert_eq!(rows.len(), 12 * 4);
    let csv = std::fs::read_to_string(dir.path().join("efficiency.csv")).unwrap();
    assert_eq!(csv.lines().count(), 49);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let empty = write(p, "empty.csv", "");
    let out = wcl(&["fit", "--data", empty.to_str().unwrap()], p);
    assert_eq!(out.status.code(), Some(EXIT_INGESTION));

    // ml over twenty coordinates with an unstructured matrix is out of reach
    let mut wide = String::from("id,time,y,x\n");
    for i in 0..30 {
        for t in 0..20 {
            let _ = writeln!(wide, "{i},{t},{},{}", 1 + (i * 7 + t * 3) % 3, (t as f64) / 10.0);
        }
    }
    let wide = write(p, "wide.csv", &wide);
    let out = wcl(
        &[
            "fit",
            "--data",
            wide.to_str().unwrap(),
            "--method",
            "ml",
            "--correlation",
            "unstructured",
        ],
        p,
    );
    assert_eq!(
        out.status.code(),
        Some(EXIT_CAPABILITY),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // separated categories: the solver stops where the scores vanish numerically,
    // and the report flags the exploding standard errors
    let mut sep = String::from("id,time,y,x\n");
    for i in 0..40 {
        for t in 0..2 {
            let x = if (i + t) % 2 == 0 {
                -1.0 - 0.01 * i as f64
            } else {
                1.0 + 0.01 * i as f64
            };
            let y = if x < 0.0 { 1 } else { 2 };
            let _ = writeln!(sep, "{i},{t},{y},{x}");
        }
    }
    let sep = write(p, "sep.csv", &sep);
    let out = wcl(
        &[
            "fit",
            "--data",
            sep.to_str().unwrap(),
            "--method",
            "cl",
            "--correlation",
            "exchangeable",
        ],
        p,
    );
    assert!(out.status.success());
    let doc = read_json(&p.join("fit_cl.json"));
    assert!(doc.to_string().contains("separated categories"), "{doc}");

    // one Newton step is not enough for a regular dataset
    let cfg = write(p, "short.json", r#"{"options":{"max_iterations":1}}"#);
    let out = wcl(
        &[
            "fit",
            "--config",
            cfg.to_str().unwrap(),
            "--data",
            wide.to_str().unwrap(),
            "--method",
            "cl",
        ],
        p,
    );
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(EXIT_CONVERGENCE), "{err}");
    assert!(err.contains("stage") && err.contains("no convergence"), "{err}");

    let out = wcl(&["fit"], p);
    assert!(!out.status.success());
    let out = wcl(&["fit", "--data", sep.to_str().unwrap(), "--link", "cauchit"], p);
    assert!(!out.status.success());
}
