use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Graph, Split};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reads a whitespace-delimited `u v` edge list with `#` comments.
pub fn load_edge_list(path: impl AsRef<Path>, num_nodes: usize, undirected: bool) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, num_nodes, undirected)
}

pub fn parse_edge_list(text: &str, num_nodes: usize, undirected: bool) -> Result<Graph> {
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let mut next_id = |which: &str| -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line,
                message: format!("missing {which} node id"),
            })?;
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid node id '{tok}'"),
            })
        };
        let u = next_id("source")?;
        let v = next_id("target")?;
        if let Some(extra) = tokens.next() {
            return Err(Error::Parse {
                line,
                message: format!("unexpected token '{extra}'"),
            });
        }
        for id in [u, v] {
            if id >= num_nodes {
                return Err(Error::NodeOutOfRange {
                    line,
                    id,
                    num_nodes,
                });
            }
        }
        edges.push((u, v));
    }
    Graph::from_edges(num_nodes, &edges, undirected)
}

/// Writes each undirected edge once (`u < v`), or every arc for directed graphs.
pub fn write_edge_list(path: impl AsRef<Path>, g: &Graph) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("# nodes {}\n", g.num_nodes()));
    for v in 0..g.num_nodes() {
        for &u in g.neighbors(v) {
            if !g.is_undirected() || v < u {
                out.push_str(&format!("{v} {u}\n"));
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Feature CSV: no header, row `i` holds node `i`.
pub fn load_features_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|tok| {
                tok.parse::<f64>().map(T::lit).map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("invalid feature value '{tok}'"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

pub fn write_features_csv<T: Scalar>(path: impl AsRef<Path>, features: &Matrix<T>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..features.rows() {
        w.write_record(features.row(i).iter().map(|x| format!("{}", x.as_f64())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_node_table(path: &Path, num_nodes: usize) -> Result<Vec<Option<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut values = vec![None; num_nodes];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let node_tok = rec.get(0).unwrap_or("");
        let node = node_tok.parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid node id '{node_tok}'"),
        })?;
        if node >= num_nodes {
            return Err(Error::NodeOutOfRange {
                line,
                id: node,
                num_nodes,
            });
        }
        let value = rec.get(1).ok_or_else(|| Error::Parse {
            line,
            message: "missing value column".into(),
        })?;
        values[node] = Some(value.to_string());
    }
    Ok(values)
}

/// Labels CSV with header `node,label`. Returns labels and the class count.
pub fn load_labels_csv(path: impl AsRef<Path>, num_nodes: usize) -> Result<(Vec<usize>, usize)> {
    let path = path.as_ref();
    let table = read_node_table(path, num_nodes)?;
    let mut labels = Vec::with_capacity(num_nodes);
    for (v, entry) in table.into_iter().enumerate() {
        let tok = entry.ok_or_else(|| Error::InvalidArgument(format!("node {v} has no label")))?;
        labels.push(tok.parse::<usize>().map_err(|_| Error::Parse {
            line: 0,
            message: format!("invalid label '{tok}' for node {v}"),
        })?);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok((labels, classes))
}

/// Splits CSV with header `node,split` and values `train|val|test`.
pub fn load_splits_csv(path: impl AsRef<Path>, num_nodes: usize) -> Result<Vec<Split>> {
    let path = path.as_ref();
    let table = read_node_table(path, num_nodes)?;
    table
        .into_iter()
        .enumerate()
        .map(|(v, entry)| {
            let tok =
                entry.ok_or_else(|| Error::InvalidArgument(format!("node {v} has no split")))?;
            tok.parse::<Split>().map_err(|m| Error::Parse {
                line: 0,
                message: format!("node {v}: {m}"),
            })
        })
        .collect()
}

pub fn write_labels_csv(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    write_table(path.as_ref(), "node,label", labels.iter().map(|l| l.to_string()))
}

pub fn write_splits_csv(path: impl AsRef<Path>, split: &[Split]) -> Result<()> {
    write_table(path.as_ref(), "node,split", split.iter().map(|s| s.name().to_string()))
}

fn write_table(path: &Path, header: &str, values: impl Iterator<Item = String>) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = format!("{header}\n");
    for (v, val) in values.enumerate() {
        out.push_str(&format!("{v},{val}\n"));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
