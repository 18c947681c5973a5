//! CSV persistence for coefficient tables. One row per radius knot, 17
//! significant digits (enough for an exact f64 round trip). The 3×3 tensors
//! are stored in full row-major order — they carry solver noise at machine
//! level off the exact symmetry, and a triangular store would silently
//! symmetrize them. The stiffness 6×6s are exactly symmetric by
//! construction and stored as their Voigt upper triangles. A sidecar file
//! `<path>.meta` records the cell resolution, physics constants, solver
//! tolerances and code version so a table on disk is reproducible; reading
//! requires it and re-runs the full table validation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Mat6};
use crate::table::{CellPhysics, CoefficientTable, EffectiveCoefficients, TableProvenance};

fn full3() -> impl Iterator<Item = (usize, usize)> {
    (0..3).flat_map(|i| (0..3).map(move |j| (i, j)))
}

fn tri6() -> impl Iterator<Item = (usize, usize)> {
    (0..6).flat_map(|i| (i..6).map(move |j| (i, j)))
}

/// Column names, in file order: r, m, scalar permeability and diffusivity,
/// then the tensors.
pub fn table_columns() -> Vec<String> {
    let mut cols = vec!["r".to_string(), "m".into(), "k_w".into(), "d_c".into()];
    for (i, j) in full3() {
        cols.push(format!("bw_{}{}", i + 1, j + 1));
    }
    for (i, j) in full3() {
        cols.push(format!("bc_{}{}", i + 1, j + 1));
    }
    for (i, j) in tri6() {
        cols.push(format!("ns_{}{}", i + 1, j + 1));
    }
    for (i, j) in tri6() {
        cols.push(format!("ns_paper_{}{}", i + 1, j + 1));
    }
    for (i, j) in full3() {
        cols.push(format!("bc_quad_{}{}", i + 1, j + 1));
    }
    cols
}

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub fn write_table(path: &Path, table: &CoefficientTable) -> Result<()> {
    let mut out = table_columns().join(",");
    out.push('\n');
    for e in &table.entries {
        let mut row: Vec<String> = vec![
            format!("{:.16e}", e.r),
            format!("{:.16e}", e.m),
            format!("{:.16e}", e.k_scalar()),
            format!("{:.16e}", e.d_scalar()),
        ];
        for (i, j) in full3() {
            row.push(format!("{:.16e}", e.b_w[i][j]));
        }
        for (i, j) in full3() {
            row.push(format!("{:.16e}", e.b_c[i][j]));
        }
        for (i, j) in tri6() {
            row.push(format!("{:.16e}", e.n_s[i][j]));
        }
        for (i, j) in tri6() {
            row.push(format!("{:.16e}", e.n_paper[i][j]));
        }
        for (i, j) in full3() {
            row.push(format!("{:.16e}", e.b_c_quadratic[i][j]));
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let mut meta = String::new();
    let _ = writeln!(meta, "cell_resolution = {}", table.cell_resolution);
    let _ = writeln!(meta, "physics.mu1 = {}", table.physics.mu1);
    let _ = writeln!(meta, "physics.lambda0 = {}", table.physics.lambda0);
    let _ = writeln!(meta, "physics.c_s = {}", table.physics.c_s);
    let _ = writeln!(meta, "provenance.stokes_tol = {}", table.provenance.stokes_tol);
    let _ = writeln!(meta, "provenance.diffusion_tol = {}", table.provenance.diffusion_tol);
    let _ = writeln!(meta, "provenance.elastic_tol = {}", table.provenance.elastic_tol);
    let _ = writeln!(meta, "code_version = {}", env!("CARGO_PKG_VERSION"));
    let mp = meta_path(path);
    std::fs::write(&mp, meta).map_err(|e| Error::io(mp.clone(), e))
}

pub fn read_table(path: &Path) -> Result<CoefficientTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse(1, "empty table file".into()))?;
    let expected = table_columns();
    let got: Vec<&str> = header.split(',').collect();
    if got.len() != expected.len() || got.iter().zip(&expected).any(|(a, b)| a != b) {
        for col in &expected {
            if !got.contains(&col.as_str()) {
                return Err(parse(1, format!("missing column `{col}`")));
            }
        }
        return Err(parse(1, format!("header mismatch: expected {} columns", expected.len())));
    }

    let mut knots = Vec::new();
    let mut entries = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(parse(
                no + 1,
                format!("expected {} fields, found {}", expected.len(), fields.len()),
            ));
        }
        let mut vals = Vec::with_capacity(fields.len());
        for (f, col) in fields.iter().zip(&expected) {
            let v: f64 = f.parse().map_err(|_| {
                parse(no + 1, format!("column `{col}`: cannot parse `{f}` as a number"))
            })?;
            vals.push(v);
        }
        let mut it = vals.into_iter();
        let r = it.next().unwrap();
        let m = it.next().unwrap();
        let k_w = it.next().unwrap();
        let d_c = it.next().unwrap();
        let mat3 = |it: &mut std::vec::IntoIter<f64>| -> Mat3 {
            let mut m = [[0.0; 3]; 3];
            for (i, j) in full3() {
                m[i][j] = it.next().unwrap();
            }
            m
        };
        let b_w = mat3(&mut it);
        let b_c = mat3(&mut it);
        let mat6 = |it: &mut std::vec::IntoIter<f64>| -> Mat6 {
            let mut m = [[0.0; 6]; 6];
            for (i, j) in tri6() {
                let v = it.next().unwrap();
                m[i][j] = v;
                m[j][i] = v;
            }
            m
        };
        let n_s = mat6(&mut it);
        let n_paper = mat6(&mut it);
        let b_c_quadratic = mat3(&mut it);
        let e = EffectiveCoefficients { r, m, b_w, b_c, n_s, b_c_quadratic, n_paper };
        // The scalar columns are derived; a disagreement means the row was
        // edited by hand or corrupted.
        if (k_w - e.k_scalar()).abs() > 1e-12 * k_w.abs().max(1.0)
            || (d_c - e.d_scalar()).abs() > 1e-12 * d_c.abs().max(1.0)
        {
            return Err(parse(
                no + 1,
                "scalar k_w/d_c columns disagree with the stored tensors".into(),
            ));
        }
        knots.push(r);
        entries.push(e);
    }

    let meta = read_meta(&meta_path(path))?;
    CoefficientTable::from_parts(knots, entries, meta.cell_resolution, meta.physics, meta.provenance)
}

struct TableMeta {
    cell_resolution: usize,
    physics: CellPhysics,
    provenance: TableProvenance,
}

fn read_meta(path: &Path) -> Result<TableMeta> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cell_resolution = None;
    let mut physics = CellPhysics::default();
    let mut provenance = TableProvenance::default();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: no + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || -> Result<f64> {
            value.parse().map_err(|_| parse(format!("{key}: cannot parse `{value}`")))
        };
        match key {
            "cell_resolution" => {
                cell_resolution = Some(
                    value
                        .parse()
                        .map_err(|_| parse(format!("cell_resolution: cannot parse `{value}`")))?,
                )
            }
            "physics.mu1" => physics.mu1 = num()?,
            "physics.lambda0" => physics.lambda0 = num()?,
            "physics.c_s" => physics.c_s = num()?,
            "provenance.stokes_tol" => provenance.stokes_tol = num()?,
            "provenance.diffusion_tol" => provenance.diffusion_tol = num()?,
            "provenance.elastic_tol" => provenance.elastic_tol = num()?,
            "code_version" => {}
            _ => return Err(parse(format!("unknown key `{key}`"))),
        }
    }
    let cell_resolution = cell_resolution.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "missing key `cell_resolution`".into(),
    })?;
    Ok(TableMeta { cell_resolution, physics, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::shared_table;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("leachsim-table-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let table = shared_table();
        let path = tmp("round_trip.csv");
        write_table(&path, table).unwrap();
        let back = read_table(&path).unwrap();
        assert_eq!(back.knots, table.knots);
        assert_eq!(back.cell_resolution, table.cell_resolution);
        assert_eq!(back.physics, table.physics);
        assert_eq!(back.provenance, table.provenance);
        assert_eq!(back.entries.len(), table.entries.len());
        for (a, b) in back.entries.iter().zip(&table.entries) {
            assert_eq!(a.r.to_bits(), b.r.to_bits());
            assert_eq!(a.m.to_bits(), b.m.to_bits());
            assert_eq!(a.b_w, b.b_w);
            assert_eq!(a.b_c, b.b_c);
            assert_eq!(a.n_s, b.n_s);
            assert_eq!(a.n_paper, b.n_paper);
            assert_eq!(a.b_c_quadratic, b.b_c_quadratic);
        }
        // Re-writing the read table reproduces the file byte for byte.
        let path2 = tmp("round_trip_again.csv");
        write_table(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap(),
            "rewrite must be deterministic"
        );
    }

    #[test]
    fn truncated_row_reports_its_line() {
        let table = shared_table();
        let path = tmp("truncated.csv");
        write_table(&path, table).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let cut = lines[2].rsplit_once(',').unwrap().0;
        lines[2] = cut;
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_table(&path).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("fields"), "{message}");
            }
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn foreign_header_names_the_missing_column() {
        let table = shared_table();
        let path = tmp("foreign.csv");
        write_table(&path, table).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let swapped = text.replacen("ns_12", "zz_12", 1);
        std::fs::write(&path, swapped).unwrap();
        match read_table(&path).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("ns_12"), "{message}");
            }
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn missing_sidecar_is_an_io_error() {
        let table = shared_table();
        let path = tmp("no_meta.csv");
        write_table(&path, table).unwrap();
        std::fs::remove_file(meta_path(&path)).unwrap();
        match read_table(&path).unwrap_err() {
            Error::Io { path: p, .. } => {
                assert!(p.to_string_lossy().ends_with(".meta"), "{p:?}")
            }
            other => panic!("expected an i/o error, got {other}"),
        }
    }
}
