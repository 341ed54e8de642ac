//! Embedding files: a `# `-prefixed JSON header line, a `u1 u2 …` column
//! header, then one tab-separated row per node.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SpectralEmbedding;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const EMBEDDING_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    pub aligned: bool,
    pub reference: Option<String>,
    pub transform: Vec<Vec<f64>>,
}

pub fn save_embedding(path: &Path, emb: &SpectralEmbedding, reference: Option<&str>) -> Result<()> {
    let header = EmbeddingHeader {
        format_version: EMBEDDING_FORMAT_VERSION,
        n: emb.n(),
        d: emb.d,
        eigenvalues: emb.eigenvalues.clone(),
        aligned: emb.aligned,
        reference: reference.map(str::to_string),
        transform: (0..emb.d).map(|r| emb.transform.row(r).to_vec()).collect(),
    };
    let mut out = format!("# {}\n", serde_json::to_string(&header)?);
    let names: Vec<String> = (1..=emb.d).map(|c| format!("u{c}")).collect();
    out.push_str(&names.join("\t"));
    out.push('\n');
    for i in 0..emb.n() {
        let cells: Vec<String> = emb.row(i).iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{}", cells.join("\t")).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_embedding(path: &Path) -> Result<(SpectralEmbedding, EmbeddingHeader)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| Error::parse(path, 1, "missing header line"))?;
    let header: EmbeddingHeader =
        serde_json::from_str(json).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if header.format_version != EMBEDDING_FORMAT_VERSION {
        return Err(Error::parse(path, 1, format!("unsupported format version {}", header.format_version)));
    }
    lines.next().ok_or_else(|| Error::parse(path, 2, "missing column header"))?;
    let d = header.d;
    let mut data = Vec::with_capacity(header.n * d);
    let mut rows = 0;
    for (k, l) in lines.enumerate() {
        let ln = k + 3;
        let cells: Vec<&str> = l.split('\t').collect();
        if cells.len() != d {
            return Err(Error::parse(path, ln, format!("expected {d} columns, found {}", cells.len())));
        }
        for c in cells {
            data.push(c.parse::<f64>().map_err(|_| Error::parse(path, ln, format!("cannot parse {c:?}")))?);
        }
        rows += 1;
    }
    if rows != header.n {
        return Err(Error::parse(path, rows + 2, format!("{rows} rows for {} nodes", header.n)));
    }
    let transform = Tensor::from_rows(&header.transform)?;
    if transform.shape() != (d, d) {
        return Err(Error::parse(path, 1, "transform must be d × d"));
    }
    let emb = SpectralEmbedding {
        coords: Tensor::from_vec(rows, d, data)?,
        eigenvalues: header.eigenvalues.clone(),
        d,
        aligned: header.aligned,
        transform,
    };
    Ok((emb, header))
}
