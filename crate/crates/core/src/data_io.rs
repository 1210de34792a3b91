//! Dataset ingestion and persistence.
//!
//! Real-world tables are described by a TOML manifest naming the node file,
//! the edge file and the roles of each column. Generated datasets are written
//! as plain CSV plus a JSON document holding the generating model.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::nscm::{GenConfig, NscmSpec};
use crate::table::{Interventional, NodeTable, TableError};
use crate::tensor::{Tensor, TensorError};

/// Environment variable naming the workspace root for relative paths.
pub const ROOT_ENV: &str = "NETFAIR_ROOT";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("invalid manifest: {}", .0.join("; "))]
    InvalidManifest(Vec<String>),
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: PathBuf, column: String },
    #[error("{file} row {row}: column {column:?} value {value:?} is not numeric")]
    NotNumeric {
        file: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("column {column:?} must take exactly two values after encoding, found {found:?}")]
    NotBinary { column: String, found: Vec<String> },
    #[error("{file} row {row}: {message}")]
    Edge { file: PathBuf, row: usize, message: String },
    #[error("{file}: no data rows")]
    Empty { file: PathBuf },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file}: header {found:?} does not match the expected {expected:?}")]
    Header {
        file: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Workspace root: the explicit flag, else `$NETFAIR_ROOT`, else the current
/// directory.
pub fn resolve_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    }
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn json_digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(json))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub node_file: PathBuf,
    pub edge_file: PathBuf,
    pub sensitive_column: String,
    pub label_column: String,
    #[serde(default)]
    pub z_columns: Vec<String>,
    pub feature_columns: Vec<String>,
    /// Columns to one-hot encode even if their values parse as numbers.
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    /// Raw value mapped to 1 for the sensitive column; otherwise the larger
    /// of the two values.
    #[serde(default)]
    pub sensitive_positive: Option<String>,
    #[serde(default)]
    pub label_positive: Option<String>,
}

impl DatasetManifest {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let manifest: Self = toml::from_str(text).map_err(|e| DataError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let problems = manifest.problems();
        if problems.is_empty() {
            Ok(manifest)
        } else {
            Err(DataError::InvalidManifest(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path)
    }

    /// Every role a column plays must be unique.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.feature_columns.is_empty() {
            out.push("feature_columns is empty".to_string());
        }
        let mut seen = BTreeSet::new();
        let roles = [&self.sensitive_column, &self.label_column]
            .into_iter()
            .chain(&self.z_columns)
            .chain(&self.feature_columns);
        for col in roles {
            if !seen.insert(col.as_str()) {
                out.push(format!("column {col:?} is assigned more than one role"));
            }
        }
        for col in &self.categorical_columns {
            if !self.feature_columns.contains(col) && !self.z_columns.contains(col) {
                out.push(format!("categorical column {col:?} is neither a feature nor a z column"));
            }
        }
        out
    }
}

/// How one output column was derived from the raw file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    /// `(raw - mean) / std`; a zero-variance column is stored with `std = 0`
    /// and encoded as zeros.
    Standardized { mean: f64, std: f64 },
    /// Two raw values mapped to 0 and 1.
    Binary { zero: String, one: String },
    /// Indicator of one category of `source`.
    OneHot { source: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub encoding: ColumnEncoding,
}

impl EncodedColumn {
    /// Raw numeric value of an encoded standardized entry.
    pub fn invert(&self, v: f64) -> Option<f64> {
        match self.encoding {
            ColumnEncoding::Standardized { mean, std } => Some(v * std + mean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub name: String,
    pub graph: Graph,
    pub table: NodeTable,
    pub z_columns: Vec<EncodedColumn>,
    pub x_columns: Vec<EncodedColumn>,
    pub warnings: Vec<String>,
}

struct RawTable {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
        let headers = rdr.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec.map_err(csv_err(path))?.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(DataError::Empty { file: path.to_path_buf() });
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<Vec<&str>> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn {
                file: self.path.clone(),
                column: name.to_string(),
            })?;
        Ok(self.rows.iter().map(|r| r.get(idx).map_or("", String::as_str)).collect())
    }

    fn numeric(&self, name: &str) -> Result<Option<Vec<f64>>> {
        let values = self.column(name)?;
        Ok(values.iter().map(|v| v.parse::<f64>().ok()).collect())
    }
}

fn sorted_distinct(values: &[&str]) -> Vec<String> {
    let numeric: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok()).collect();
    let mut distinct: Vec<String> = values.iter().map(|v| v.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    if numeric.is_some() {
        distinct.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    distinct
}

fn encode_binary(raw: &RawTable, column: &str, positive: Option<&str>) -> Result<(Vec<u8>, ColumnEncoding)> {
    let values = raw.column(column)?;
    let distinct = sorted_distinct(&values);
    if distinct.len() != 2 {
        return Err(DataError::NotBinary {
            column: column.to_string(),
            found: distinct,
        });
    }
    let one = match positive {
        Some(p) if distinct.iter().any(|d| d == p) => p.to_string(),
        Some(_) => {
            return Err(DataError::NotBinary {
                column: column.to_string(),
                found: distinct,
            })
        }
        None => distinct[1].clone(),
    };
    let zero = distinct.iter().find(|d| **d != one).expect("two values").clone();
    let coded = values.iter().map(|v| u8::from(*v == one)).collect();
    Ok((coded, ColumnEncoding::Binary { zero, one }))
}

fn encode_columns(
    raw: &RawTable,
    columns: &[String],
    categorical: &[String],
    warnings: &mut Vec<String>,
) -> Result<(Vec<Vec<f64>>, Vec<EncodedColumn>)> {
    let mut data = Vec::new();
    let mut meta = Vec::new();
    for col in columns {
        let values = raw.column(col)?;
        let numeric = if categorical.contains(col) { None } else { raw.numeric(col)? };
        match numeric {
            Some(v) => {
                let distinct = sorted_distinct(&values);
                if distinct.len() == 2 {
                    let (coded, enc) = encode_binary(raw, col, None)?;
                    data.push(coded.into_iter().map(f64::from).collect());
                    meta.push(EncodedColumn {
                        name: col.clone(),
                        encoding: enc,
                    });
                    continue;
                }
                let mean = crate::stats::mean(&v);
                let std = crate::stats::std_dev(&v);
                let (std, coded) = if std > 0.0 {
                    (std, v.iter().map(|x| (x - mean) / std).collect())
                } else {
                    let msg = format!("column {col:?} has zero variance; encoded as zeros");
                    warn!("{msg}");
                    warnings.push(msg);
                    (0.0, vec![0.0; v.len()])
                };
                data.push(coded);
                meta.push(EncodedColumn {
                    name: col.clone(),
                    encoding: ColumnEncoding::Standardized { mean, std },
                });
            }
            None => {
                for value in sorted_distinct(&values) {
                    data.push(values.iter().map(|v| f64::from(u8::from(*v == value))).collect());
                    meta.push(EncodedColumn {
                        name: format!("{col}={value}"),
                        encoding: ColumnEncoding::OneHot {
                            source: col.clone(),
                            value,
                        },
                    });
                }
            }
        }
    }
    Ok((data, meta))
}

fn columns_to_tensor(n: usize, cols: &[Vec<f64>]) -> Result<Tensor> {
    let k = cols.len();
    let mut data = vec![0.0; n * k];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            data[i * k + j] = v;
        }
    }
    Ok(Tensor::matrix(n, k, data)?)
}

fn read_edges(path: &Path, n: usize) -> Result<Graph> {
    let raw = RawTable::read(path).or_else(|e| match e {
        DataError::Empty { .. } => Ok(RawTable {
            path: path.to_path_buf(),
            headers: vec!["src".into(), "dst".into()],
            rows: Vec::new(),
        }),
        other => Err(other),
    })?;
    let expected = vec!["src".to_string(), "dst".to_string()];
    if raw.headers != expected {
        return Err(DataError::Header {
            file: path.to_path_buf(),
            expected,
            found: raw.headers,
        });
    }
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for (row, rec) in raw.rows.iter().enumerate() {
        let row = row + 1;
        let parse = |field: &str| {
            field.parse::<usize>().map_err(|_| DataError::Edge {
                file: path.to_path_buf(),
                row,
                message: format!("cannot parse node index {field:?}"),
            })
        };
        let (src, dst) = (parse(&rec[0])?, parse(&rec[1])?);
        if src >= n || dst >= n {
            return Err(DataError::Edge {
                file: path.to_path_buf(),
                row,
                message: format!("edge ({src}, {dst}) references a node outside 0..{n}"),
            });
        }
        if src == dst {
            return Err(DataError::Edge {
                file: path.to_path_buf(),
                row,
                message: format!("self-loop at node {src}"),
            });
        }
        // Undirected files commonly list both orientations.
        if seen.insert((src.min(dst), src.max(dst))) {
            edges.push((src, dst));
        }
    }
    Ok(Graph::new(n, &edges)?)
}

/// Reads the node and edge files named by the manifest, relative to `root`.
///
/// Numeric feature and z columns are standardized, two-valued columns are
/// mapped to `{0, 1}`, and non-numeric (or declared categorical) columns are
/// one-hot encoded. Edge endpoints are 0-based row indices of the node file.
pub fn load_dataset(manifest: &DatasetManifest, root: &Path) -> Result<LoadedDataset> {
    let node_path = root.join(&manifest.node_file);
    let edge_path = root.join(&manifest.edge_file);
    let raw = RawTable::read(&node_path)?;
    let n = raw.rows.len();
    let mut warnings = Vec::new();
    let (s, _) = encode_binary(&raw, &manifest.sensitive_column, manifest.sensitive_positive.as_deref())?;
    let (y, _) = encode_binary(&raw, &manifest.label_column, manifest.label_positive.as_deref())?;
    let (z_data, z_columns) = encode_columns(&raw, &manifest.z_columns, &manifest.categorical_columns, &mut warnings)?;
    let (x_data, x_columns) =
        encode_columns(&raw, &manifest.feature_columns, &manifest.categorical_columns, &mut warnings)?;
    let mut table = NodeTable::new(s, columns_to_tensor(n, &z_data)?, columns_to_tensor(n, &x_data)?, y)?;
    table.z_names = z_columns.iter().map(|c| c.name.clone()).collect();
    table.x_names = x_columns.iter().map(|c| c.name.clone()).collect();
    let graph = read_edges(&edge_path, n)?;
    Ok(LoadedDataset {
        name: manifest.name.clone(),
        graph,
        table,
        z_columns,
        x_columns,
        warnings,
    })
}

/// Generating model and configuration stored alongside a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedMeta {
    pub z_names: Vec<String>,
    pub x_names: Vec<String>,
    pub config: GenConfig,
    pub config_digest: String,
    pub spec: NscmSpec,
    pub spec_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub graph: Graph,
    pub table: NodeTable,
    pub meta: GeneratedMeta,
}

pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const INTERVENTIONAL_FILE: &str = "interventional.csv";
pub const META_FILE: &str = "nscm.json";

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn fmt_row(t: &Tensor, i: usize) -> impl Iterator<Item = String> + '_ {
    t.row(i).iter().map(|v| v.to_string())
}

/// Writes `nodes.csv`, `edges.csv`, `interventional.csv` (when present) and
/// `nscm.json` into `dir`. Floats are written in shortest round-trip form.
pub fn save_generated(dir: &Path, graph: &Graph, table: &NodeTable, config: &GenConfig, spec: &NscmSpec) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut header = vec!["id".to_string(), "s".to_string()];
    header.extend(table.z_names.iter().cloned());
    header.extend(table.x_names.iter().cloned());
    header.push("y".into());
    write_csv(
        &dir.join(NODES_FILE),
        &header,
        (0..table.n()).map(|i| {
            let mut row = vec![i.to_string(), table.s[i].to_string()];
            row.extend(fmt_row(&table.z, i));
            row.extend(fmt_row(&table.x, i));
            row.push(table.y[i].to_string());
            row
        }),
    )?;
    let edge_path = dir.join(EDGES_FILE);
    let file = File::create(&edge_path).map_err(io_err(&edge_path))?;
    graph.write_edge_list(std::io::BufWriter::new(file)).map_err(io_err(&edge_path))?;
    if let Some(iv) = &table.interventional {
        let mut header = vec!["id".to_string()];
        header.extend(table.x_names.iter().map(|x| format!("pos_{x}")));
        header.push("pos_y".into());
        header.extend(table.x_names.iter().map(|x| format!("neg_{x}")));
        header.push("neg_y".into());
        write_csv(
            &dir.join(INTERVENTIONAL_FILE),
            &header,
            (0..table.n()).map(|i| {
                let mut row = vec![i.to_string()];
                row.extend(fmt_row(&iv.x_pos, i));
                row.push(iv.y_pos[i].to_string());
                row.extend(fmt_row(&iv.x_neg, i));
                row.push(iv.y_neg[i].to_string());
                row
            }),
        )?;
    }
    let meta = GeneratedMeta {
        z_names: table.z_names.clone(),
        x_names: table.x_names.clone(),
        config: config.clone(),
        config_digest: json_digest(config),
        spec: spec.clone(),
        spec_digest: spec.digest(),
    };
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta).map_err(|source| DataError::Json {
        path: meta_path.clone(),
        source,
    })?;
    std::fs::write(&meta_path, json).map_err(io_err(&meta_path))
}

fn parse_f64(raw: &RawTable, row: usize, col: usize) -> Result<f64> {
    let v = &raw.rows[row][col];
    v.parse().map_err(|_| DataError::NotNumeric {
        file: raw.path.clone(),
        row: row + 1,
        column: raw.headers[col].clone(),
        value: v.clone(),
    })
}

fn parse_bit(raw: &RawTable, row: usize, col: usize) -> Result<u8> {
    match raw.rows[row][col].as_str() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(DataError::NotBinary {
            column: raw.headers[col].clone(),
            found: vec![other.to_string()],
        }),
    }
}

fn read_block(raw: &RawTable, cols: std::ops::Range<usize>) -> Result<Tensor> {
    let n = raw.rows.len();
    let mut data = Vec::with_capacity(n * cols.len());
    for i in 0..n {
        for j in cols.clone() {
            data.push(parse_f64(raw, i, j)?);
        }
    }
    Ok(Tensor::matrix(n, cols.len(), data)?)
}

/// Reads a directory written by [`save_generated`].
pub fn load_generated(dir: &Path) -> Result<GeneratedDataset> {
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: GeneratedMeta = serde_json::from_str(&text).map_err(|source| DataError::Json {
        path: meta_path.clone(),
        source,
    })?;
    let raw = RawTable::read(&dir.join(NODES_FILE))?;
    let n = raw.rows.len();
    let h = &raw.headers;
    let mut expected = vec!["id".to_string(), "s".to_string()];
    expected.extend(meta.z_names.iter().cloned());
    expected.extend(meta.x_names.iter().cloned());
    expected.push("y".into());
    if *h != expected {
        return Err(DataError::Header {
            file: raw.path.clone(),
            expected,
            found: h.clone(),
        });
    }
    let z_cols = meta.z_names.len();
    let x_end = h.len() - 1;
    let z = read_block(&raw, 2..2 + z_cols)?;
    let x = read_block(&raw, 2 + z_cols..x_end)?;
    let s = (0..n).map(|i| parse_bit(&raw, i, 1)).collect::<Result<Vec<_>>>()?;
    let y = (0..n).map(|i| parse_bit(&raw, i, x_end)).collect::<Result<Vec<_>>>()?;
    let mut table = NodeTable::new(s, z, x, y)?;
    table.z_names = h[2..2 + z_cols].to_vec();
    table.x_names = h[2 + z_cols..x_end].to_vec();
    let iv_path = dir.join(INTERVENTIONAL_FILE);
    if iv_path.exists() {
        let iv = RawTable::read(&iv_path)?;
        let k = table.x.cols();
        if iv.headers.len() != 2 * k + 3 || iv.rows.len() != n {
            return Err(DataError::Header {
                file: iv_path,
                expected: vec![format!("id + 2 x ({k} features + y)")],
                found: iv.headers,
            });
        }
        table.interventional = Some(Interventional {
            x_pos: read_block(&iv, 1..1 + k)?,
            y_pos: (0..n).map(|i| parse_bit(&iv, i, 1 + k)).collect::<Result<_>>()?,
            x_neg: read_block(&iv, 2 + k..2 + 2 * k)?,
            y_neg: (0..n).map(|i| parse_bit(&iv, i, 2 + 2 * k)).collect::<Result<_>>()?,
        });
    }
    let graph = read_edges(&dir.join(EDGES_FILE), n)?;
    Ok(GeneratedDataset { graph, table, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    fn manifest() -> DatasetManifest {
        DatasetManifest {
            name: "toy".into(),
            node_file: "nodes.csv".into(),
            edge_file: "edges.csv".into(),
            sensitive_column: "sex".into(),
            label_column: "default".into(),
            z_columns: vec!["age".into()],
            feature_columns: vec!["limit".into(), "job".into()],
            categorical_columns: vec![],
            sensitive_positive: Some("f".into()),
            label_positive: None,
        }
    }

    #[test]
    fn toy_files_are_standardized_and_encoded() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "nodes.csv",
            "sex,default,age,limit,job\nf,0,30,100,clerk\nm,1,40,200,chef\nf,1,50,300,clerk\n",
        );
        write(dir.path(), "edges.csv", "src,dst\n0,1\n1,2\n2,1\n");
        let d = load_dataset(&manifest(), dir.path()).unwrap();
        assert_eq!(d.table.n(), 3);
        assert_eq!(d.table.s, vec![1, 0, 1]);
        assert_eq!(d.table.y, vec![0, 1, 1]);
        assert_eq!(d.graph.num_edges(), 2);
        assert_eq!(d.table.x_names, vec!["limit", "job=chef", "job=clerk"]);
        let limit: Vec<f64> = (0..3).map(|i| d.table.x.get(i, 0)).collect();
        let sd = (200.0f64 / 3.0 * 100.0).sqrt();
        for (got, raw) in limit.iter().zip([100.0, 200.0, 300.0]) {
            assert!((got - (raw - 200.0) / sd).abs() < 1e-12);
            assert!((d.x_columns[0].invert(*got).unwrap() - raw).abs() < 1e-9);
        }
        assert_eq!(d.table.x.row(1)[1..], [1.0, 0.0]);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn zero_variance_column_becomes_zeros_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "nodes.csv",
            "sex,default,age,limit,job\nf,0,30,5,1\nm,1,40,5,2\nf,1,50,5,3\n",
        );
        write(dir.path(), "edges.csv", "src,dst\n");
        let d = load_dataset(&manifest(), dir.path()).unwrap();
        assert!(d.table.x.data().iter().step_by(2).all(|&v| v == 0.0));
        assert_eq!(d.warnings.len(), 1);
        assert!(d.warnings[0].contains("limit"));
    }

    #[test]
    fn dangling_edge_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut nodes = String::from("sex,default,age,limit,job\n");
        for i in 0..10 {
            nodes.push_str(&format!("{},{},{},{},{}\n", ["f", "m"][i % 2], i % 2, 20 + i, i * 7, i % 3));
        }
        write(dir.path(), "nodes.csv", &nodes);
        write(dir.path(), "edges.csv", "src,dst\n0,1\n3,99\n");
        let err = load_dataset(&manifest(), dir.path()).unwrap_err();
        match err {
            DataError::Edge { row, ref message, .. } => {
                assert_eq!(row, 2);
                assert!(message.contains("99"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_column_and_non_binary_label_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "nodes.csv", "sex,default,age,limit\nf,0,30,1\nm,1,40,2\n");
        write(dir.path(), "edges.csv", "src,dst\n");
        assert!(matches!(
            load_dataset(&manifest(), dir.path()),
            Err(DataError::MissingColumn { ref column, .. }) if column == "job"
        ));
        write(dir.path(), "nodes.csv", "sex,default,age,limit,job\nf,0,30,1,a\nm,2,40,2,b\nf,3,1,1,a\n");
        assert!(matches!(load_dataset(&manifest(), dir.path()), Err(DataError::NotBinary { .. })));
    }

    #[test]
    fn manifest_rejects_overlapping_roles() {
        let text = r#"
name = "x"
node_file = "n.csv"
edge_file = "e.csv"
sensitive_column = "s"
label_column = "y"
z_columns = ["a"]
feature_columns = ["a", "s"]
"#;
        match DatasetManifest::from_toml(text, Path::new("m.toml")) {
            Err(DataError::InvalidManifest(p)) => assert_eq!(p.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn root_prefers_flag_then_environment() {
        assert_eq!(resolve_root(Some(Path::new("/a"))), PathBuf::from("/a"));
    }
}
