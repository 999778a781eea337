//! Versioned JSON documents for instances and tables, and heatmap CSV.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CgmInstance, ContingencyTables, FractionalTables, NoiseModel};

pub const FORMAT_VERSION: u32 = 1;

fn current_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum NoiseDoc {
    Gaussian { var: f64 },
    Poisson,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    #[serde(default = "current_version")]
    format_version: u32,
    n_steps: usize,
    n_states: usize,
    population: u64,
    potentials: Vec<Vec<Vec<f64>>>,
    observations: Vec<Vec<Option<f64>>>,
    noise: Vec<Vec<Option<NoiseDoc>>>,
}

#[derive(Serialize, Deserialize)]
struct TablesDoc<T> {
    #[serde(default = "current_version")]
    format_version: u32,
    node: Vec<Vec<T>>,
    edge: Vec<Vec<Vec<T>>>,
}

/// Parses JSON text, then the schema, then checks the version.
fn parse<T: DeserializeOwned>(text: &str, version: impl Fn(&T) -> u32) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let doc: T = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    let found = version(&doc);
    if found != FORMAT_VERSION {
        return Err(Error::Version { found, expected: FORMAT_VERSION });
    }
    Ok(doc)
}

pub fn instance_to_json(instance: &CgmInstance) -> String {
    let doc = InstanceDoc {
        format_version: FORMAT_VERSION,
        n_steps: instance.n_steps(),
        n_states: instance.n_states(),
        population: instance.population(),
        potentials: instance.potentials().to_vec(),
        observations: instance.observations().to_vec(),
        noise: instance
            .noise_models()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|m| match *m {
                        NoiseModel::Gaussian { var } => Some(NoiseDoc::Gaussian { var }),
                        NoiseModel::Poisson => Some(NoiseDoc::Poisson),
                        NoiseModel::Missing => None,
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("instance serializes")
}

/// Parses an instance document. A `null` noise entry, or a `null`
/// observation, makes the cell missing.
pub fn instance_from_json(text: &str) -> Result<CgmInstance> {
    let doc: InstanceDoc = parse(text, |d: &InstanceDoc| d.format_version)?;
    if doc.noise.len() != doc.observations.len()
        || doc.noise.iter().zip(&doc.observations).any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::Schema("noise and observations differ in shape".into()));
    }
    let mut observations = doc.observations;
    let mut noise = Vec::with_capacity(doc.noise.len());
    for (t, row) in doc.noise.into_iter().enumerate() {
        let mut models = Vec::with_capacity(row.len());
        for (i, entry) in row.into_iter().enumerate() {
            let model = match (entry, observations[t][i]) {
                (Some(_), None) | (None, _) => NoiseModel::Missing,
                (Some(NoiseDoc::Gaussian { var }), Some(_)) => NoiseModel::Gaussian { var },
                (Some(NoiseDoc::Poisson), Some(_)) => NoiseModel::Poisson,
            };
            if model.is_missing() {
                observations[t][i] = None;
            }
            models.push(model);
        }
        noise.push(models);
    }
    CgmInstance::new(doc.n_steps, doc.n_states, doc.population, doc.potentials, observations, noise)
}

pub fn tables_to_json(tables: &ContingencyTables) -> String {
    let doc = TablesDoc { format_version: FORMAT_VERSION, node: tables.node.clone(), edge: tables.edge.clone() };
    serde_json::to_string_pretty(&doc).expect("tables serialize")
}

pub fn tables_from_json(text: &str) -> Result<ContingencyTables> {
    let doc: TablesDoc<u64> = parse(text, |d: &TablesDoc<u64>| d.format_version)?;
    Ok(ContingencyTables { node: doc.node, edge: doc.edge })
}

pub fn fractional_tables_to_json(tables: &FractionalTables) -> String {
    let doc = TablesDoc { format_version: FORMAT_VERSION, node: tables.node.clone(), edge: tables.edge.clone() };
    serde_json::to_string_pretty(&doc).expect("tables serialize")
}

pub fn fractional_tables_from_json(text: &str) -> Result<FractionalTables> {
    let doc: TablesDoc<f64> = parse(text, |d: &TablesDoc<f64>| d.format_version)?;
    Ok(FractionalTables { node: doc.node, edge: doc.edge })
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<CgmInstance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_instance(instance: &CgmInstance, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, instance_to_json(instance))?)
}

pub fn load_tables(path: impl AsRef<Path>) -> Result<ContingencyTables> {
    tables_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_tables(tables: &ContingencyTables, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, tables_to_json(tables))?)
}

pub fn load_fractional_tables(path: impl AsRef<Path>) -> Result<FractionalTables> {
    fractional_tables_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_fractional_tables(tables: &FractionalTables, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, fractional_tables_to_json(tables))?)
}

fn display(v: f64, hide_below: Option<f64>) -> f64 {
    match hide_below {
        Some(cut) if v.abs() < cut => 0.0,
        _ => v,
    }
}

/// Rows `t,i,value` with a header; one-based `t` and `i`. Values below
/// `hide_below` print as 0.
pub fn node_csv(node: &[Vec<f64>], hide_below: Option<f64>) -> String {
    let mut out = String::from("t,i,value\n");
    for (t, row) in node.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            writeln!(out, "{},{},{}", t + 1, i + 1, display(v, hide_below)).unwrap();
        }
    }
    out
}

/// Rows `t,i,j,value` with a header; one-based indices.
pub fn edge_csv(edge: &[Vec<Vec<f64>>], hide_below: Option<f64>) -> String {
    let mut out = String::from("t,i,j,value\n");
    for (t, mat) in edge.iter().enumerate() {
        for (i, row) in mat.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                writeln!(out, "{},{},{},{}", t + 1, i + 1, j + 1, display(v, hide_below)).unwrap();
            }
        }
    }
    out
}

/// Reads a histogram of nonnegative integer counts separated by commas,
/// whitespace or newlines.
pub fn parse_histogram(text: &str) -> Result<Vec<u64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|_| Error::Schema(format!("histogram entry `{s}` is not a count"))))
        .collect()
}
