//! Field snapshots in the legacy structured-points text format, readable by
//! the usual scientific viewers. Cell-centered values are emitted as point
//! data on the grid of cell centers: DIMENSIONS is the cell count per axis,
//! ORIGIN the first cell center, SPACING the cell size. Scalars c, r, phi,
//! p_f, p_s then vectors w_f, w_s, one value (or triple) per line at 17
//! significant digits — identical inputs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ScalarField, VectorField};
use crate::reservoir::MacroState;

pub const SNAPSHOT_SCALARS: [&str; 5] = ["c", "r", "phi", "p_f", "p_s"];
pub const SNAPSHOT_VECTORS: [&str; 2] = ["w_f", "w_s"];

/// Render a state deterministically; `write_snapshot` is this plus a file
/// write.
pub fn format_snapshot(state: &MacroState) -> Result<String> {
    let grid = state.r.grid;
    let scalars: [(&str, &ScalarField); 5] = [
        ("c", &state.c),
        ("r", &state.r),
        ("phi", &state.phi),
        ("p_f", &state.p_f),
        ("p_s", &state.p_s),
    ];
    let vectors: [(&str, &VectorField); 2] = [("w_f", &state.w_f), ("w_s", &state.w_s)];
    for (name, f) in scalars {
        if f.grid != grid {
            return Err(Error::InvalidInput(format!("field {name} is on a different grid")));
        }
    }
    for (name, f) in vectors {
        if f.grid != grid {
            return Err(Error::InvalidInput(format!("field {name} is on a different grid")));
        }
    }

    let n = grid.cells();
    let mut s = String::with_capacity(32 * n * 11);
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "leaching state t = {}", state.t);
    s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", grid.n[0], grid.n[1], grid.n[2]);
    let origin = grid.cell_center([0, 0, 0]);
    let _ = writeln!(s, "ORIGIN {:.16e} {:.16e} {:.16e}", origin[0], origin[1], origin[2]);
    let _ = writeln!(s, "SPACING {:.16e} {:.16e} {:.16e}", grid.h[0], grid.h[1], grid.h[2]);
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, f) in scalars {
        let _ = writeln!(s, "SCALARS {name} double 1");
        s.push_str("LOOKUP_TABLE default\n");
        for &v in &f.data {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite value in field {name}")));
            }
            let _ = writeln!(s, "{v:.16e}");
        }
    }
    for (name, f) in vectors {
        let _ = writeln!(s, "VECTORS {name} double");
        for cell in 0..n {
            let v = f.get(cell);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("non-finite value in field {name}")));
            }
            let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
        }
    }
    Ok(s)
}

pub fn write_snapshot(state: &MacroState, path: &Path) -> Result<()> {
    let text = format_snapshot(state)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parsed snapshot contents, for round-trip checks and post-processing.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotData {
    pub title: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub scalars: Vec<(String, Vec<f64>)>,
    pub vectors: Vec<(String, Vec<[f64; 3]>)>,
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut at = 0usize;

    fn take<'a>(lines: &[&'a str], at: &mut usize) -> Option<&'a str> {
        let line = lines.get(*at).copied();
        if line.is_some() {
            *at += 1;
        }
        line
    }
    macro_rules! next {
        ($expect:expr) => {
            take(&lines, &mut at)
                .ok_or_else(|| parse(at + 1, format!("unexpected end of file, wanted {}", $expect)))?
        };
    }

    if next!("the format magic") != "# vtk DataFile Version 3.0" {
        return Err(parse(1, "not a structured-points snapshot".into()));
    }
    let title = next!("the title").to_string();
    if next!("ASCII") != "ASCII" {
        return Err(parse(at, "expected ASCII".into()));
    }
    if next!("DATASET") != "DATASET STRUCTURED_POINTS" {
        return Err(parse(at, "expected DATASET STRUCTURED_POINTS".into()));
    }

    let triple = |line: &str, at: usize, name: &str| -> Result<[f64; 3]> {
        let rest = line
            .strip_prefix(name)
            .ok_or_else(|| parse(at, format!("expected {name}")))?;
        let mut out = [0.0; 3];
        let mut it = rest.split_whitespace();
        for v in &mut out {
            *v = it
                .next()
                .ok_or_else(|| parse(at, format!("{name} needs three values")))?
                .parse()
                .map_err(|_| parse(at, format!("{name}: bad number")))?;
        }
        Ok(out)
    };

    let dline = next!("DIMENSIONS");
    let d = triple(dline, at, "DIMENSIONS")?;
    let dims = [d[0] as usize, d[1] as usize, d[2] as usize];
    let oline = next!("ORIGIN");
    let origin = triple(oline, at, "ORIGIN")?;
    let sline = next!("SPACING");
    let spacing = triple(sline, at, "SPACING")?;
    let pd = next!("POINT_DATA");
    let count: usize = pd
        .strip_prefix("POINT_DATA ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse(at, "expected POINT_DATA <count>".into()))?;
    if count != dims[0] * dims[1] * dims[2] {
        return Err(parse(at, "POINT_DATA count disagrees with DIMENSIONS".into()));
    }

    let mut scalars = Vec::new();
    let mut vectors = Vec::new();
    while at < lines.len() {
        let header = next!("an array header");
        if let Some(rest) = header.strip_prefix("SCALARS ") {
            let name = rest
                .split_whitespace()
                .next()
                .ok_or_else(|| parse(at, "SCALARS needs a name".into()))?
                .to_string();
            if next!("LOOKUP_TABLE") != "LOOKUP_TABLE default" {
                return Err(parse(at, "expected LOOKUP_TABLE default".into()));
            }
            let mut vals = Vec::with_capacity(count);
            for _ in 0..count {
                let line = next!("a scalar value");
                vals.push(
                    line.trim()
                        .parse()
                        .map_err(|_| parse(at, format!("bad number `{line}`")))?,
                );
            }
            scalars.push((name, vals));
        } else if let Some(rest) = header.strip_prefix("VECTORS ") {
            let name = rest
                .split_whitespace()
                .next()
                .ok_or_else(|| parse(at, "VECTORS needs a name".into()))?
                .to_string();
            let mut vals = Vec::with_capacity(count);
            for _ in 0..count {
                let line = next!("a vector value");
                let mut v = [0.0; 3];
                let mut it = line.split_whitespace();
                for x in &mut v {
                    *x = it
                        .next()
                        .ok_or_else(|| parse(at, "vector needs three components".into()))?
                        .parse()
                        .map_err(|_| parse(at, format!("bad number in `{line}`")))?;
                }
                vals.push(v);
            }
            vectors.push((name, vals));
        } else if header.trim().is_empty() {
            continue;
        } else {
            return Err(parse(at, format!("unexpected section `{header}`")));
        }
    }
    Ok(SnapshotData { title, dims, origin, spacing, scalars, vectors })
}
