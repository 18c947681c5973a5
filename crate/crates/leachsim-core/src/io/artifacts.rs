//! Run output layout: one directory holding the echoed config, the scalar
//! time series, the per-slab fixed-point reports and one snapshot per
//! output time. Everything is text and written deterministically, so a
//! rerun from the same config and table is bit-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coupling::SimulationOutcome;
use crate::error::{Error, Result};
use crate::io::config::SimulationConfig;
use crate::io::snapshot::write_snapshot;

/// Index of everything a run produced.
#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub out_dir: PathBuf,
    pub config_path: PathBuf,
    pub table_path: PathBuf,
    pub series_path: PathBuf,
    pub reports_path: PathBuf,
    /// (time, snapshot path), one per output time.
    pub snapshots: Vec<(f64, PathBuf)>,
}

impl SimulationResult {
    /// Every referenced file exists on disk.
    pub fn verify(&self) -> Result<()> {
        let mut paths = vec![
            self.config_path.clone(),
            self.table_path.clone(),
            self.series_path.clone(),
            self.reports_path.clone(),
        ];
        paths.extend(self.snapshots.iter().map(|(_, p)| p.clone()));
        for p in paths {
            std::fs::metadata(&p).map_err(|e| Error::io(p.clone(), e))?;
        }
        Ok(())
    }
}

pub const SERIES_HEADER: &str =
    "t,r_min,r_mean,r_max,c_min,c_mean,c_max,porosity_mean,dissolved_volume";

pub fn write_run_artifacts(
    out_dir: &Path,
    config: &SimulationConfig,
    table_path: &Path,
    outcome: &SimulationOutcome,
) -> Result<SimulationResult> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let config_path = out_dir.join("config.txt");
    std::fs::write(&config_path, config.to_text()).map_err(|e| Error::io(config_path.clone(), e))?;

    let series_path = out_dir.join("series.csv");
    let mut series = String::from(SERIES_HEADER);
    series.push('\n');
    for p in &outcome.series {
        let _ = writeln!(
            series,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.t,
            p.r_min,
            p.r_mean,
            p.r_max,
            p.c_min,
            p.c_mean,
            p.c_max,
            p.porosity_mean,
            p.dissolved
        );
    }
    std::fs::write(&series_path, series).map_err(|e| Error::io(series_path.clone(), e))?;

    let reports_path = out_dir.join("picard.txt");
    let mut reports = String::new();
    for r in &outcome.reports {
        let join = |v: &[f64]| {
            v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(
            reports,
            "slab {}: iterations {}, converged {}, residual {:.6e}\n  diffs:  {}\n  ratios: {}",
            r.slab,
            r.iterations,
            r.converged,
            r.residual,
            join(&r.diffs),
            join(&r.ratios)
        );
    }
    std::fs::write(&reports_path, reports).map_err(|e| Error::io(reports_path.clone(), e))?;

    let mut snapshots = Vec::with_capacity(outcome.states.len());
    for (i, state) in outcome.states.iter().enumerate() {
        let path = out_dir.join(format!("snapshot_{i:04}.vtk"));
        write_snapshot(state, &path)?;
        snapshots.push((state.t, path));
    }

    let result = SimulationResult {
        out_dir: out_dir.to_path_buf(),
        config_path,
        table_path: table_path.to_path_buf(),
        series_path,
        reports_path,
        snapshots,
    };
    result.verify()?;
    Ok(result)
}
