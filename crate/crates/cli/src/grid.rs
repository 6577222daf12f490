//! Cartesian-product hyperparameter sweeps.
//!
//! A grid file is JSON with an optional `base` (a partial [`EmbedParams`])
//! and `axes`, a map from dotted parameter paths such as `config.alpha` or
//! `dataset.seed` to the list of values to try:
//!
//! ```json
//! {"base": {"dim": 2, "config": {"steps": 200}},
//!  "axes": {"config.alpha": [0.1, 1.0], "config.lr": [0.1, 1.0]}}
//! ```
//!
//! Rows are written in lexicographic order of the axis values, axes taken in
//! name order. Rows already present in the output file are kept and not
//! recomputed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::time::Instant;

use dipole::datasets::format_real;
use serde::Deserialize;
use serde_json::Value;

use crate::{run_pipeline, with_threads, write_atomic, CliError, CliResult, EmbedParams};

pub const SCORE_COLUMNS: [&str; 5] = ["ijk_score", "residual_variance", "ph0_score", "ph1_score", "wall_seconds"];

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub base: EmbedParams,
    pub axes: BTreeMap<String, Vec<Value>>,
}

impl GridSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let spec: GridSpec =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("malformed grid file: {e}")))?;
        if spec.axes.is_empty() {
            return Err(CliError::Input("grid file lists no axes".into()));
        }
        for (name, values) in &spec.axes {
            if values.is_empty() {
                return Err(CliError::Input(format!("grid axis {name} has no values")));
            }
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read grid file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every combination in output order, as `(axis name, value)` lists.
    pub fn combinations(&self) -> Vec<Vec<(String, Value)>> {
        let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for (name, values) in &self.axes {
            let mut sorted = values.clone();
            sorted.sort_by(compare_values);
            sorted.dedup();
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    sorted.iter().map(move |v| {
                        let mut row = prefix.clone();
                        row.push((name.clone(), v.clone()));
                        row
                    })
                })
                .collect();
        }
        combos
    }

    pub fn params_for(&self, combo: &[(String, Value)]) -> CliResult<EmbedParams> {
        let mut value = serde_json::to_value(&self.base)?;
        for (path, v) in combo {
            set_path(&mut value, path, v.clone())?;
        }
        serde_json::from_value(value).map_err(|e| CliError::Input(format!("invalid grid combination: {e}")))
    }
}

fn compare_values(a: &Value, b: &Value) -> Ordering {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => cell(a).cmp(&cell(b)),
    }
}

fn set_path(root: &mut Value, path: &str, v: Value) -> CliResult<()> {
    let mut node = root;
    for key in path.split('.') {
        node = node
            .as_object_mut()
            .and_then(|o| o.get_mut(key))
            .ok_or_else(|| CliError::Input(format!("unknown grid axis {path}")))?;
    }
    *node = v;
    Ok(())
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn read_existing(path: &Path, width: usize) -> CliResult<HashMap<Vec<String>, Vec<String>>> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    for record in reader.records() {
        let record = record?;
        // partial lines from an interrupted write are recomputed
        if record.len() != width + SCORE_COLUMNS.len() {
            continue;
        }
        let fields: Vec<String> = record.iter().map(str::to_string).collect();
        done.insert(fields[..width].to_vec(), fields);
    }
    Ok(done)
}

fn render(header: &[String], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.into_inner().map_err(|e| CliError::Input(e.to_string()))
}

/// Runs every combination not already in `output`, rewriting the table
/// after each row. Returns the number of rows computed.
pub fn cmd_grid(spec: &GridSpec, output: &Path, threads: Option<usize>) -> CliResult<usize> {
    let axes: Vec<String> = spec.axes.keys().cloned().collect();
    let header: Vec<String> = axes.iter().cloned().chain(SCORE_COLUMNS.iter().map(|s| s.to_string())).collect();
    let combos = spec.combinations();
    // check every combination up front so a bad axis fails before any run
    let params: Vec<EmbedParams> = combos.iter().map(|c| spec.params_for(c)).collect::<CliResult<_>>()?;
    let keys: Vec<Vec<String>> = combos.iter().map(|c| c.iter().map(|(_, v)| cell(v)).collect()).collect();

    let mut done = read_existing(output, axes.len())?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut computed = 0;
    for (key, p) in keys.iter().zip(&params) {
        if done.contains_key(key) {
            continue;
        }
        let start = Instant::now();
        let result = with_threads(threads, || run_pipeline(p))??;
        let wall = start.elapsed().as_secs_f64();
        let r = &result.report;
        let mut row = key.clone();
        row.extend([r.ijk_score, r.residual_variance, r.ph0_score, r.ph1_score, wall].map(format_real));
        done.insert(key.clone(), row);
        computed += 1;
        let ordered: Vec<Vec<String>> = keys.iter().filter_map(|k| done.get(k).cloned()).collect();
        write_atomic(output, &render(&header, &ordered)?)?;
    }
    if computed == 0 {
        let ordered: Vec<Vec<String>> = keys.iter().filter_map(|k| done.get(k).cloned()).collect();
        write_atomic(output, &render(&header, &ordered)?)?;
    }
    Ok(computed)
}
