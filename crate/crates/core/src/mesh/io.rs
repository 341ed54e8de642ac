//! OFF geometry plus a tab-separated field sidecar.
//!
//! Geometry: `OFF`, optional `# meta key=value` lines, `N F 0`, N coordinate
//! lines, then F polygon lines. Triangles are `3 i j k`; explicit edges that
//! belong to no face are written as two-vertex polygons `2 i j`.
//!
//! Sidecar (`<stem>.fields.tsv`): a header of tab-separated field names, the
//! reserved name `parcel` holding integer labels, then N rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{build_weighted_graph, SurfaceMesh, DEFAULT_EPSILON};
use crate::error::{Error, Result};

pub const PARCEL_FIELD: &str = "parcel";

/// Sidecar path for a geometry file: `dir/name.off` → `dir/name.fields.tsv`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("fields.tsv")
}

pub fn save_mesh(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    let mut out = String::from("OFF\n");
    for (k, v) in &mesh.meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::Argument(format!("metadata entry {k:?} cannot be written")));
        }
        writeln!(out, "# meta {k}={v}").unwrap();
    }
    writeln!(out, "{} {} 0", mesh.vertices.len(), mesh.faces.len() + mesh.edges.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{} {} {}", v[0], v[1], v[2]).unwrap();
    }
    for f in &mesh.faces {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    for e in &mesh.edges {
        writeln!(out, "2 {} {}", e[0], e[1]).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let side = sidecar_path(path);
    if mesh.fields.is_empty() && mesh.parcels.is_none() {
        if side.exists() {
            fs::remove_file(&side).map_err(|e| Error::io(&side, e))?;
        }
        return Ok(());
    }
    let mut names: Vec<&str> = mesh.fields.iter().map(|(n, _)| n.as_str()).collect();
    if names.contains(&PARCEL_FIELD) {
        return Err(Error::Argument(format!("field name {PARCEL_FIELD:?} is reserved")));
    }
    if mesh.parcels.is_some() {
        names.push(PARCEL_FIELD);
    }
    let mut s = names.join("\t");
    s.push('\n');
    for i in 0..mesh.n_vertices() {
        let mut cells: Vec<String> = mesh.fields.iter().map(|(_, v)| format!("{}", v[i])).collect();
        if let Some(p) = &mesh.parcels {
            cells.push(p[i].to_string());
        }
        s.push_str(&cells.join("\t"));
        s.push('\n');
    }
    fs::write(&side, s).map_err(|e| Error::io(&side, e))
}

fn parse_num<T: std::str::FromStr>(tok: &str, path: &Path, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {tok:?}")))
}

/// Reads geometry and sidecar, validates, and rejects disconnected meshes.
pub fn load_mesh(path: &Path) -> Result<SurfaceMesh> {
    let mesh = read_mesh(path)?;
    build_weighted_graph(&mesh, DEFAULT_EPSILON)?;
    Ok(mesh)
}

fn read_mesh(path: &Path) -> Result<SurfaceMesh> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut meta = BTreeMap::new();
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        if let Some(rest) = t.strip_prefix("# meta ") {
            Some((i + 1, Err(rest.to_string())))
        } else if t.is_empty() || t.starts_with('#') {
            None
        } else {
            Some((i + 1, Ok(t)))
        }
    });
    let mut next = |meta: &mut BTreeMap<String, String>| -> Result<Option<(usize, &str)>> {
        for (ln, item) in lines.by_ref() {
            match item {
                Ok(t) => return Ok(Some((ln, t))),
                Err(rest) => {
                    let (k, v) = rest
                        .split_once('=')
                        .ok_or_else(|| Error::parse(path, ln, "metadata line without '='"))?;
                    meta.insert(k.to_string(), v.to_string());
                }
            }
        }
        Ok(None)
    };

    let (ln, header) = next(&mut meta)?.ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    if header != "OFF" {
        return Err(Error::parse(path, ln, format!("expected OFF header, found {header:?}")));
    }
    let (ln, counts) = next(&mut meta)?.ok_or_else(|| Error::parse(path, ln, "missing counts line"))?;
    let toks: Vec<&str> = counts.split_whitespace().collect();
    if toks.len() < 2 {
        return Err(Error::parse(path, ln, "counts line needs N and F"));
    }
    let n: usize = parse_num(toks[0], path, ln)?;
    let nf: usize = parse_num(toks[1], path, ln)?;

    let mut vertices = Vec::with_capacity(n);
    let mut last = ln;
    for _ in 0..n {
        let (ln, l) = next(&mut meta)?.ok_or_else(|| Error::parse(path, last, "unexpected end of vertex list"))?;
        last = ln;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 {
            return Err(Error::parse(path, ln, format!("expected 3 coordinates, found {}", t.len())));
        }
        let mut p = [0.0; 3];
        for (k, tok) in t.iter().enumerate() {
            p[k] = parse_num::<f64>(tok, path, ln)?;
            if !p[k].is_finite() {
                return Err(Error::parse(path, ln, "non-finite coordinate"));
            }
        }
        vertices.push(p);
    }
    let mut faces = Vec::new();
    let mut edges = Vec::new();
    for _ in 0..nf {
        let (ln, l) = next(&mut meta)?.ok_or_else(|| Error::parse(path, last, "unexpected end of face list"))?;
        last = ln;
        let t: Vec<usize> = l
            .split_whitespace()
            .map(|tok| parse_num(tok, path, ln))
            .collect::<Result<_>>()?;
        let Some((&arity, idx)) = t.split_first() else {
            return Err(Error::parse(path, ln, "empty face line"));
        };
        if idx.len() != arity {
            return Err(Error::parse(path, ln, format!("face declares {arity} indices, found {}", idx.len())));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::parse(path, ln, format!("vertex index {bad} >= {n}")));
        }
        match arity {
            3 => {
                if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
                    return Err(Error::parse(path, ln, "degenerate face"));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            2 => {
                if idx[0] == idx[1] {
                    return Err(Error::parse(path, ln, "self-loop edge"));
                }
                edges.push([idx[0], idx[1]]);
            }
            _ => return Err(Error::parse(path, ln, format!("unsupported polygon arity {arity}"))),
        }
    }
    if let Some((ln, _)) = next(&mut meta)? {
        return Err(Error::parse(path, ln, "trailing data after face list"));
    }

    let mut mesh = SurfaceMesh {
        vertices,
        faces,
        edges,
        meta,
        ..Default::default()
    };
    let side = sidecar_path(path);
    if side.exists() {
        read_sidecar(&side, &mut mesh)?;
    }
    mesh.validate()?;
    Ok(mesh)
}

fn read_sidecar(path: &Path, mesh: &mut SurfaceMesh) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let names: Vec<&str> = header.split('\t').collect();
    let n = mesh.n_vertices();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); names.len()];
    let mut parcels = Vec::with_capacity(n);
    let parcel_col = names.iter().position(|&s| s == PARCEL_FIELD);
    let mut rows = 0;
    for (i, l) in lines.enumerate() {
        let ln = i + 2;
        if l.is_empty() {
            continue;
        }
        let cells: Vec<&str> = l.split('\t').collect();
        if cells.len() != names.len() {
            return Err(Error::parse(path, ln, format!("expected {} columns, found {}", names.len(), cells.len())));
        }
        for (c, cell) in cells.iter().enumerate() {
            if Some(c) == parcel_col {
                parcels.push(parse_num::<usize>(cell, path, ln)?);
            } else {
                cols[c].push(parse_num(cell, path, ln)?);
            }
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(path, rows + 1, format!("sidecar has {rows} rows for {n} vertices")));
    }
    for (c, name) in names.iter().enumerate() {
        if Some(c) != parcel_col {
            mesh.fields.push((name.to_string(), std::mem::take(&mut cols[c])));
        }
    }
    if parcel_col.is_some() {
        mesh.parcels = Some(parcels);
    }
    Ok(())
}
