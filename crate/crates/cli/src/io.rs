//! File formats: series and vectors as headerless CSV, manifests as JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sta_core::sta::{SignedMode, SpatioTemporalSeries};
use sta_core::uot::{ground_metric_graph, ground_metric_grid, GroundGeometry};

use crate::error::{CliError, CliResult};

fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(path, e))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(path, e))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| CliError::input(path, format!("line {}: '{f}' is not a number", line + 1)))
            })
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(path, "file is empty"));
    }
    Ok(rows)
}

/// `T` rows of `p` values.
pub fn read_series(path: &Path) -> CliResult<SpatioTemporalSeries<f64>> {
    let rows = read_rows(path)?;
    SpatioTemporalSeries::from_frames(&rows).map_err(|e| CliError::input(path, e))
}

/// All values of the file in reading order, so a single row and a single
/// column are both accepted.
pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    Ok(read_rows(path)?.concat())
}

/// `u,v,weight` lines with 0-based vertices.
pub fn read_edges(path: &Path) -> CliResult<Vec<(usize, usize, f64)>> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(line, r)| match r[..] {
            [u, v, w] if u >= 0.0 && v >= 0.0 && u.fract() == 0.0 && v.fract() == 0.0 => Ok((u as usize, v as usize, w)),
            _ => Err(CliError::input(path, format!("line {}: expected u,v,weight", line + 1))),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum GeometrySpec {
    /// `h × w` grid with `|i - j|_l^l` costs.
    Grid {
        h: usize,
        w: usize,
        #[serde(default = "default_l")]
        l: f64,
    },
    /// Squared shortest-path costs over an edge list; `p` defaults to the
    /// largest vertex index plus one.
    Graph {
        edges: PathBuf,
        #[serde(default)]
        p: Option<usize>,
    },
}

fn default_l() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl GeometrySpec {
    /// `base` resolves relative edge-list paths.
    pub fn build(&self, base: &Path, median_normalize: bool) -> CliResult<Arc<GroundGeometry<f64>>> {
        let geom = match self {
            GeometrySpec::Grid { h, w, l } => ground_metric_grid(*h, *w, *l)?,
            GeometrySpec::Graph { edges, p } => {
                let path = base.join(edges);
                let edges = read_edges(&path)?;
                let p = p.unwrap_or_else(|| edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0));
                ground_metric_graph(&edges, p)?
            }
        };
        Ok(Arc::new(if median_normalize { geom.normalize_by_median()? } else { geom }))
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SignedSpec {
    #[default]
    Reject,
    Absolute,
    Split,
}

impl From<SignedSpec> for SignedMode {
    fn from(s: SignedSpec) -> Self {
        match s {
            SignedSpec::Reject => SignedMode::Reject,
            SignedSpec::Absolute => SignedMode::Absolute,
            SignedSpec::Split => SignedMode::SplitAverage,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestItem {
    pub path: PathBuf,
    pub label: String,
}

/// Dataset description; item and edge paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub items: Vec<ManifestItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySpec>,
    #[serde(default = "default_true")]
    pub median_normalize: bool,
    #[serde(default)]
    pub signed_mode: SignedSpec,
}

impl Manifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
    }

    /// Every item, labelled, in manifest order.
    pub fn load_items(&self, base: &Path) -> CliResult<Vec<SpatioTemporalSeries<f64>>> {
        self.items
            .iter()
            .map(|item| Ok(read_series(&base.join(&item.path))?.with_label(item.label.clone())))
            .collect()
    }
}

pub fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|source| CliError::Output {
            path: p.to_path_buf(),
            source,
        }),
        None => std::io::stdout().write_all(bytes).map_err(|source| CliError::Output {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

/// CSV bytes from string records.
pub fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}
