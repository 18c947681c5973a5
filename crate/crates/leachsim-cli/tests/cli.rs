use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_leachsim"))
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("leachsim-cli-{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config() -> &'static str {
    "physics.theta = 0.3\n\
     grid.reservoir_n = 6\n\
     grid.cell_n = 16\n\
     table.knots = 5\n\
     table.r_min = 0.15\n\
     table.r_max = 0.45\n\
     fields.r0_value = 0.4\n\
     time.t_end = 0.1\n\
     time.dt = 0.05\n\
     time.t_slab = 0.1\n"
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn cell_prints_a_record_and_exits_zero() {
    let out = bin().args(["cell", "--r", "0.25", "--n", "16"]).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for needle in ["r ", "m ", "k_w", "d_c", "B_w", "B_c", "N_s", "N_paper"] {
        assert!(text.contains(needle), "missing `{needle}` in:\n{text}");
    }
}

#[test]
fn cell_rejects_a_radius_outside_the_cell() {
    let out = bin().args(["cell", "--r", "0.7", "--n", "16"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("error:"), "stderr: {}", stderr(&out));
}

#[test]
fn run_produces_deterministic_artifacts() {
    let dir = fresh_dir("run-deterministic");
    let cfg = dir.join("sim.cfg");
    std::fs::write(&cfg, small_config()).unwrap();

    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out_dir in [&out_a, &out_b] {
        let out = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .env("LEACHSIM_THREADS", "2")
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }

    for name in ["config.txt", "series.csv", "picard.txt", "snapshot_0000.vtk", "snapshot_0001.vtk"]
    {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // The auto-tabulated table was cached beside the output directories.
    assert!(dir.join("a.table.csv").exists());
    assert!(dir.join("a.table.csv.meta").exists());

    let series = std::fs::read_to_string(out_a.join("series.csv")).unwrap();
    assert!(series.starts_with("t,r_min,r_mean,r_max,c_min,c_mean,c_max,"));
    assert_eq!(series.lines().count(), 1 + 3, "header plus one row per time level");
}

#[test]
fn tabulate_then_run_with_an_explicit_table() {
    let dir = fresh_dir("tabulate-run");
    let cfg = dir.join("sim.cfg");
    std::fs::write(&cfg, small_config()).unwrap();
    let table = dir.join("coeffs.csv");

    let out = bin()
        .args(["tabulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&table)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(table.exists());

    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--table")
        .arg(&table)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("completed 2 steps in 1 slabs"));
}

#[test]
fn invalid_config_exits_one_and_reports_every_problem() {
    let dir = fresh_dir("invalid-config");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "physics.theta = -1\nnot.a.key = 3\ntime.dt = 0.2\ntime.t_slab = 0.1\n")
        .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("physics.theta"), "{err}");
    assert!(err.contains("not.a.key"), "{err}");
    assert!(err.contains("time.t_slab"), "{err}");
}

#[test]
fn check_passes_on_a_fresh_build() {
    let out = bin().arg("check").output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("all checks passed"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}
