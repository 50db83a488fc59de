use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qssr_core::io::Table;

const BASE: &str = r#"
model = "full-scaled-irrev"
t_end = 0.005
epsilon = 0.01

[grid]
length = 1.0
cells = 100

[rates]
k1 = 1.0
k_m1 = 1.0
k2 = 1.0

[diffusion]
d_s = 1.0
d_e = 1.0
d_c = 2.0
"#;

fn qssr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qssr")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(dir: &Path, cfg: &str, sub: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir, cfg);
    let out = dir.join("out");
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    qssr(&args)
}

fn stationary(cells: usize) -> String {
    // no substrate and no complex: every reaction and diffusion term vanishes
    format!(
        "{}\n[initial]\ns_lo = 0.0\ns_hi = 0.0\nc_amp = 0.0\nc_base = 0.0\ny_amp = 0.0\ny_offset = 1.0\nbump_amp = 0.0\n",
        BASE.replace("cells = 100", &format!("cells = {cells}"))
    )
}

#[test]
fn missing_required_field_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &BASE.replace("t_end = 0.005\n", ""), "simulate", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("t_end"), "{err}");
}

#[test]
fn unknown_model_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &BASE.replace("full-scaled-irrev", "full-scaled"), "simulate", &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), BASE, "converge", &["--epsilon", "0.1,abc"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qssr(&["simulate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stationary_state_is_reproduced() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &stationary(4), "simulate", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Table::read_file(&dir.path().join("out/snapshot_000.csv")).unwrap();
    assert_eq!(t.header, ["x", "s", "c_star", "y_star"]);
    assert_eq!(t.rows.len(), 4);
    for row in &t.rows {
        assert_eq!(&row[1..], &[0.0, 0.0, 1.0]);
    }
    assert!(t.trailer[0].starts_with("model=full-scaled-irrev,t=5.0000000000000001e-3"));
}

#[test]
fn snapshots_at_requested_times() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("snapshots = [0.001, 0.0025]\n{}", BASE.replace("cells = 100", "cells = 10"));
    let out = run(dir.path(), &cfg, "simulate", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (k, t) in ["1.0000000000000000e-3", "2.5000000000000001e-3", "5.0000000000000001e-3"].iter().enumerate() {
        let table = Table::read_file(&dir.path().join(format!("out/snapshot_{k:03}.csv"))).unwrap();
        assert!(table.trailer[0].contains(&format!("t={t}")), "{:?}", table.trailer);
    }
}

#[test]
fn reference_run_smooths_the_step_slightly() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), BASE, "simulate", &["--epsilon", "0.001"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Table::read_file(&dir.path().join("out/snapshot_000.csv")).unwrap();
    assert_eq!(t.rows.len(), 100);
    let s = t.column("s").unwrap();
    // far from the jump only reaction acts, near it diffusion has spread it out
    assert!((s[0] - 0.5).abs() < 0.01 && (s[99] - 1.5).abs() < 0.01);
    assert!(s[49] > 0.55 && s[50] < 1.45);
    assert!(s.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    assert!(t.trailer[0].contains("epsilon=1.0000000000000000e-3"));
}

#[test]
fn reduced_models_write_manifold_complex() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE
        .replace("full-scaled-irrev", "reduced-irrev-big-delta")
        .replace("epsilon = 0.01\n", "")
        .replace("cells = 100", "cells = 20");
    let out = run(dir.path(), &cfg, "simulate", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Table::read_file(&dir.path().join("out/snapshot_000.csv")).unwrap();
    for row in &t.rows {
        let (s, c, y) = (row[1], row[2], row[3]);
        assert!((c - s * y / (s + 2.0)).abs() <= 1e-15 * (1.0 + c.abs()));
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE.replace("cells = 100", "cells = 12");
    let a = run(dir.path(), &cfg, "simulate", &[]);
    assert!(a.status.success());
    let first = fs::read(dir.path().join("out/snapshot_000.csv")).unwrap();
    let b = run(dir.path(), &cfg, "simulate", &[]);
    assert!(b.status.success());
    assert_eq!(first, fs::read(dir.path().join("out/snapshot_000.csv")).unwrap());
}

#[test]
fn converge_identical_dynamics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stationary(6).replace("d_c = 2.0", "d_c = 1.0");
    let out = run(dir.path(), &cfg, "converge", &["--epsilon", "0.1,0.01,0.001", "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Table::read_file(&dir.path().join("out/convergence.csv")).unwrap();
    assert_eq!(t.header, ["epsilon", "err_s", "err_cstar", "err_ystar"]);
    assert_eq!(t.column("epsilon").unwrap(), [0.1, 0.01, 0.001]);
    for row in &t.rows {
        assert!(row[1..].iter().all(|e| *e <= 1e-10));
    }
    assert!(t.trailer.last().unwrap().starts_with("slope_s="));
}

#[test]
fn converge_single_epsilon_has_no_slope_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE.replace("cells = 100", "cells = 10");
    let out = run(dir.path(), &cfg, "converge", &["--epsilon", "0.01"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Table::read_file(&dir.path().join("out/convergence.csv")).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.rows[0][1] > 0.0);
    assert!(t.trailer.iter().all(|l| !l.starts_with("slope_")));
}

#[test]
fn converge_reversible_reports_product_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE
        .replace("full-scaled-irrev", "full-scaled-rev")
        .replace("k2 = 1.0", "k2 = 1.0\nk_m2 = 0.5")
        .replace("cells = 100", "cells = 10");
    let out = run(dir.path(), &cfg, "converge", &["--epsilon", "0.01,0.001,0.0001"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Table::read_file(&dir.path().join("out/convergence.csv")).unwrap();
    assert_eq!(t.header.last().unwrap(), "err_p");
    assert!(t.trailer.last().unwrap().contains("slope_p="));
}

#[test]
fn verify_tf_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--cells", "1,2,5,10", "--samples", "100", "--seed", "11"];
    let a = run(dir.path(), BASE, "verify-tf", &args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let first = fs::read(dir.path().join("out/verify_tf.csv")).unwrap();
    let b = run(dir.path(), BASE, "verify-tf", &args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, fs::read(dir.path().join("out/verify_tf.csv")).unwrap());
    let t = Table::read(first.as_slice()).unwrap();
    assert_eq!(t.rows.len(), 16);
    assert!(t.column("max_rel_deviation").unwrap().iter().all(|d| *d <= 1e-9));
}

#[test]
fn verify_tf_negative_control_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), BASE, "verify-tf", &["--cells", "1", "--samples", "5", "--corrupt-closed-form"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn project_ic_places_complex_on_manifold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{}\n[initial]\ns_lo = 1.0\ns_hi = 1.0\nc_amp = 0.0\nc_base = 0.9\ny_amp = 0.0\ny_offset = 1.0\nbump_amp = 0.0\n",
        BASE.replace("cells = 100", "cells = 3")
    );
    let out = run(dir.path(), &cfg, "project-ic", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = Table::read_file(&dir.path().join("out/projected_ic.csv")).unwrap();
    assert_eq!(t.header, ["x", "s_raw", "c_star_raw", "y_star_raw", "s", "c_star", "y_star"]);
    for row in &t.rows {
        assert_eq!(row[2], 0.9);
        assert_eq!(row[4], 1.0);
        assert!((row[5] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(row[6], 1.0);
    }
}

#[test]
fn shipped_reference_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["reference.toml", "reference_equal_diffusion.toml"] {
        let cfg = qssr_core::RunConfig::from_file(&root.join(name)).unwrap();
        assert_eq!(cfg.grid.cell_count(), 100);
        assert_eq!(cfg.t_end, 0.005);
        assert_eq!(cfg.epsilons, [1.0, 1e-1, 1e-2, 1e-3, 1e-4]);
        assert_eq!((cfg.rates.k1, cfg.rates.k_m1, cfg.rates.k2, cfg.rates.k_m2), (1.0, 1.0, 1.0, 0.0));
        assert_eq!((cfg.diffusion.d_s, cfg.diffusion.d_e), (1.0, 1.0));
        assert_eq!((cfg.integrator.abs_tol, cfg.integrator.rel_tol), (1e-14, 1e-10));
    }
}
