//! Command-line front end: `cell` solves the unit-cell problems at one
//! radius, `tabulate` builds a coefficient table, `run` executes the coupled
//! simulation, `check` exercises the solver invariants on a small built-in
//! problem. Exit codes: 0 success, 1 rejected input, 2 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use leachsim_core::coupling::{apply_dissolution, run_simulation};
use leachsim_core::io::{
    load_config, read_table, write_run_artifacts, write_table, SimulationConfig,
};
use leachsim_core::numerics::ScalarField;
use leachsim_core::reservoir::{solve_pressure_head, run_diffusion, TransportParams};
use leachsim_core::table::{
    compute_entry, tabulate, CellPhysics, CoefficientTable, EffectiveCoefficients,
    TableProvenance,
};
use leachsim_core::{Error, Result};

#[derive(Parser)]
#[command(name = "leachsim", version, about = "In-situ leaching simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the three unit-cell problems at one grain radius and print the
    /// effective-coefficient record.
    Cell {
        /// Grain radius, in (0, 1/2).
        #[arg(long)]
        r: f64,
        /// Cell resolution (voxels per axis).
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        mu1: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda0: f64,
        #[arg(long, default_value_t = 1.0)]
        c_s: f64,
    },
    /// Build a coefficient table from a config file.
    Tabulate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path; a `.meta` sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the coupled simulation described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for snapshots, series and reports.
        #[arg(long)]
        out: PathBuf,
        /// Coefficient table to use; omitted, one is tabulated and cached
        /// beside the output directory.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Exercise the solver invariants on a small built-in problem; exits
    /// nonzero on any violation.
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match read_thread_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Err(e) = leachsim_core::init_worker_threads(threads) {
        eprintln!("warning: {e}");
    }
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_thread_env() -> Result<Option<usize>> {
    match std::env::var("LEACHSIM_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidInput(format!("LEACHSIM_THREADS: cannot parse `{v}`"))),
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Cell { r, n, mu1, lambda0, c_s } => cell(r, n, mu1, lambda0, c_s),
        Cmd::Tabulate { config, out } => tabulate_cmd(&config, &out),
        Cmd::Run { config, out, table } => run_cmd(&config, &out, table.as_deref()),
        Cmd::Check => check(),
    }
}

fn cell(r: f64, n: usize, mu1: f64, lambda0: f64, c_s: f64) -> Result<()> {
    let physics = CellPhysics { mu1, lambda0, c_s };
    let e = compute_entry(r, n, &physics, &TableProvenance::default())?;
    print_record(&e);
    Ok(())
}

fn print_record(e: &EffectiveCoefficients) {
    println!("r            = {}", e.r);
    println!("m            = {:.12}", e.m);
    println!("k_w (tr/3)   = {:.12e}", e.k_scalar());
    println!("d_c (tr/3)   = {:.12e}", e.d_scalar());
    let mat3 = |name: &str, m: &[[f64; 3]; 3]| {
        for (i, row) in m.iter().enumerate() {
            let label = if i == 0 { name } else { "" };
            println!(
                "{label:<12} [{:+.6e} {:+.6e} {:+.6e}]",
                row[0], row[1], row[2]
            );
        }
    };
    mat3("B_w", &e.b_w);
    mat3("B_c", &e.b_c);
    mat3("B_c quad", &e.b_c_quadratic);
    let mat6 = |name: &str, m: &[[f64; 6]; 6]| {
        for (i, row) in m.iter().enumerate() {
            let label = if i == 0 { name } else { "" };
            let cells: Vec<String> = row.iter().map(|v| format!("{v:+.6e}")).collect();
            println!("{label:<12} [{}]", cells.join(" "));
        }
    };
    mat6("N_s", &e.n_s);
    mat6("N_paper", &e.n_paper);
}

fn build_table(cfg: &SimulationConfig) -> Result<CoefficientTable> {
    tabulate(&cfg.radius_bounds(), cfg.knots, cfg.cell_n, &cfg.cell_physics())
}

fn tabulate_cmd(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let table = build_table(&cfg)?;
    write_table(out, &table)?;
    println!(
        "wrote {} knots at cell resolution {} to {}",
        table.knots.len(),
        table.cell_resolution,
        out.display()
    );
    Ok(())
}

fn run_cmd(config: &Path, out: &Path, table: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let spec = cfg.reservoir_spec()?;
    let (table, table_path) = match table {
        Some(p) => (read_table(p)?, p.to_path_buf()),
        None => {
            let cache = sibling_table_path(out);
            if cache.exists() {
                println!("using cached table {}", cache.display());
                (read_table(&cache)?, cache)
            } else {
                println!("no table given; tabulating to {}", cache.display());
                let t = build_table(&cfg)?;
                write_table(&cache, &t)?;
                // Read back so a cached rerun sees bit-identical inputs.
                (read_table(&cache)?, cache)
            }
        }
    };
    let outcome = run_simulation(&spec, &table, &cfg.run_params())?;
    let result = write_run_artifacts(out, &cfg, &table_path, &outcome)?;
    let end = outcome.series.last().expect("series is never empty");
    println!(
        "completed {} steps in {} slabs; dissolved volume {:.6e}",
        outcome.times.len() - 1,
        outcome.reports.len(),
        end.dissolved
    );
    println!(
        "artifacts in {}: {} snapshots, series.csv, picard.txt, config.txt",
        result.out_dir.display(),
        result.snapshots.len()
    );
    Ok(())
}

/// Cache location for auto-tabulated tables: next to the output directory,
/// so repeated runs into fresh directories still share it.
fn sibling_table_path(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    out.parent().unwrap_or_else(|| Path::new(".")).join(format!("{name}.table.csv"))
}

/// A fast invariant sweep over the whole stack; each line reports one check.
fn check() -> Result<()> {
    use leachsim_core::cell::{porosity, RadiusBounds};
    use leachsim_core::io::parse_config;
    use leachsim_core::numerics::GridSpec;
    use leachsim_core::reservoir::{AxisProfile, ReservoirSpec};

    let mut failures = 0usize;
    let mut report = |name: &str, result: std::result::Result<String, String>| {
        match result {
            Ok(detail) => println!("check {name}: PASS — {detail}"),
            Err(detail) => {
                failures += 1;
                println!("check {name}: FAIL — {detail}");
            }
        }
    };

    report("porosity", (|| -> std::result::Result<String, String> {
        let mut worst: f64 = 0.0;
        for &r in &[0.0, 0.1, 0.25, 0.4, 0.5] {
            let m = porosity(r).map_err(|e| e.to_string())?;
            let exact = 1.0 - 4.0 * std::f64::consts::PI / 3.0 * r * r * r;
            worst = worst.max((m - exact).abs());
        }
        if worst <= 1e-15 {
            Ok(format!("closed form reproduced, max defect {worst:.2e}"))
        } else {
            Err(format!("porosity deviates by {worst:.2e}"))
        }
    })());

    let bounds = RadiusBounds { r_min: 0.15, r_max: 0.45, ..RadiusBounds::default() };
    let table = tabulate(&bounds, 5, 16, &CellPhysics::default())?;

    report("table-monotone", (|| -> std::result::Result<String, String> {
        let ok = table
            .entries
            .windows(2)
            .all(|w| w[1].k_scalar() < w[0].k_scalar() && w[1].d_scalar() < w[0].d_scalar());
        if ok {
            Ok("scalar permeability and diffusivity decrease with radius".into())
        } else {
            Err("scalar columns are not strictly decreasing".into())
        }
    })());

    report("table-interpolation", (|| -> std::result::Result<String, String> {
        let mut detail = String::new();
        for i in 1..table.knots.len() {
            let rm = 0.5 * (table.knots[i - 1] + table.knots[i]);
            let e = table.interpolate(rm).map_err(|e| e.to_string())?;
            if !(e.m > 0.0 && e.m < 1.0) {
                detail = format!("porosity {} out of (0,1) at r = {rm}", e.m);
                break;
            }
        }
        if detail.is_empty() {
            Ok("midpoint queries stay physical and definite".into())
        } else {
            Err(detail)
        }
    })());

    report("table-roundtrip", (|| -> std::result::Result<String, String> {
        let dir = std::env::temp_dir().join(format!("leachsim-check-{}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let path = dir.join("table.csv");
        write_table(&path, &table).map_err(|e| e.to_string())?;
        let back = read_table(&path).map_err(|e| e.to_string())?;
        let same = back.knots == table.knots
            && back
                .entries
                .iter()
                .zip(&table.entries)
                .all(|(a, b)| a == b);
        let _ = std::fs::remove_dir_all(&dir);
        if same {
            Ok("CSV round-trip is bit-identical".into())
        } else {
            Err("table changed across a write/read cycle".into())
        }
    })());

    let grid = GridSpec::box_cube(8)?;
    let spec = ReservoirSpec::new(
        grid,
        AxisProfile::Linear { axis: 0, lo: 1.0, hi: 0.0 },
        AxisProfile::Constant(1.0),
    )?;
    let r_field = ScalarField::constant(grid, 0.3);

    report("head-trivial", (|| -> std::result::Result<String, String> {
        let sol = solve_pressure_head(&r_field, &table, &spec, 1.0, &|_| 0.0)
            .map_err(|e| e.to_string())?;
        let sup = sol.phi.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if sup == 0.0 {
            Ok("zero well data gives an identically zero head".into())
        } else {
            Err(format!("head should vanish, sup = {sup:.2e}"))
        }
    })());

    report("transport-steady", (|| -> std::result::Result<String, String> {
        let history = vec![r_field.clone(); 6];
        let c = run_diffusion(&history, &spec, &table, 1.0, 0.05, &TransportParams::default())
            .map_err(|e| e.to_string())?;
        let c0 = spec.c0_field();
        let same = c.iter().all(|f| f.data == c0.data);
        if same {
            Ok("well profile is a bitwise steady state under a frozen radius".into())
        } else {
            Err("steady state drifted".into())
        }
    })());

    report("dissolution-closed-form", (|| -> std::result::Result<String, String> {
        let r0 = ScalarField::constant(grid, 0.4);
        let c = vec![ScalarField::constant(grid, 1.0); 11];
        let out = apply_dissolution(&r0, &c, 0.1, 0.1).map_err(|e| e.to_string())?;
        let end = out.end().data[0];
        if (end - 0.3).abs() < 1e-14 {
            Ok("saturated acid for unit time shaves exactly theta".into())
        } else {
            Err(format!("expected 0.3, got {end}"))
        }
    })());

    report("config-defaults", (|| -> std::result::Result<String, String> {
        let cfg = parse_config("").map_err(|e| e.to_string())?;
        if cfg == SimulationConfig::default() {
            Ok("empty config resolves to the documented defaults".into())
        } else {
            Err("defaults drifted from the documented schema".into())
        }
    })());

    if failures == 0 {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Error::Numerical(format!("{failures} invariant check(s) failed")))
    }
}
