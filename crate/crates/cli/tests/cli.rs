use std::path::Path;
use std::process::{Command, Output};

use magecho::table::Table;

fn magecho(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magecho"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_table(p: &Path) -> Table {
    Table::from_csv(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn manifest(p: &Path) -> serde_json::Value {
    let m = format!("{}.manifest.json", p.display());
    serde_json::from_str(&std::fs::read_to_string(m).unwrap()).unwrap()
}

#[test]
fn verify_passes() {
    let o = magecho(&["verify", "--trials", "8"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn thermo_starts_at_one_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("beta.csv");
    let o = magecho(&[
        "thermo",
        "--orientation",
        "100",
        "--t-end-us",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_table(&out);
    assert_eq!(t.columns, ["t_us", "beta"]);
    assert_eq!(t.rows[0], [0.0, 1.0]);
    assert_eq!(t.rows.len(), 501);
    let m = manifest(&out);
    assert_eq!(m["rows"], 501);
    assert_eq!(m["command"], "thermo");
    assert_eq!(m["config"]["n"], "0.45");
    assert!(m["tolerances"]["thermo_step_halving"].as_f64().unwrap() > 0.0);
}

#[test]
fn ideal_seq1_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seq1.csv");
    let o = magecho(&[
        "run",
        "builtin:seq1",
        "--ideal",
        "--t1-grid",
        "2:40:2hc",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_table(&out);
    assert_eq!(t.columns, ["t1_us", "amplitude"]);
    assert_eq!(t.rows.len(), 20);
    let a0 = t.rows[0][1];
    assert!(t.rows.iter().all(|r| (r[1] - a0).abs() <= 1e-6 * a0));
    assert_eq!(t.meta["macroscopic"], "false");
    assert_eq!(manifest(&out)["rows"], 20);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = magecho(&[
            "run",
            "--sequence",
            "builtin:seq2",
            "--max-sites",
            "4",
            "--t1-grid",
            "0:12:4",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# thermo defaults\norientation = 111\nt_end_us = 200\nn = 0.9\n").unwrap();
    let out = dir.path().join("t.csv");
    let o = magecho(&[
        "thermo",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "0.45",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_table(&out);
    assert_eq!(t.meta["orientation"], "[111]");
    assert_eq!(t.meta["n"], "0.45");
    assert_eq!(t.rows.len(), 201);
    let m = manifest(&out);
    assert_eq!(m["config"]["offset-us"], "80");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    for args in [
        vec!["run", "builtin:seq1", "--t1-grid", "1:5:2", "--out", out],
        vec!["run", "builtin:seq9", "--out", out],
        vec!["run", "builtin:seq1"],
        vec!["thermo", "--orientation", "1,2,3", "--t-end-us", "100", "--out", out],
        vec!["thermo", "--orientation", "100", "--t-end-us", "-5", "--out", out],
        vec!["run", "builtin:seq1", "--max-sites", "40", "--out", out],
        vec!["dump-operator", "--operator", "zz"],
        vec!["no-such-command"],
    ] {
        let o = magecho(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "orientaton = 100\n").unwrap();
    let o = magecho(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("orientaton"));
    assert!(!Path::new(out).exists());
}

#[test]
fn nonconvergence_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = magecho(&[
        "thermo",
        "--orientation",
        "100",
        "--n",
        "200",
        "--t-end-us",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn program_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let pp = dir.path().join("echo.pp");
    std::fs::write(
        &pp,
        "# free-induction magic echo\ninit ix\nacquire Ix for 20us step 1us\nburst + 25.3G 8hc\nburst - 25.3G 8hc\nacquire Ix for 5us step 1us\n",
    )
    .unwrap();
    let out = dir.path().join("echo.csv");
    let o = magecho(&[
        "run",
        "--sequence",
        pp.to_str().unwrap(),
        "--max-sites",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_table(&out);
    assert_eq!(t.columns, ["t_us", "amplitude", "acquisition"]);
    assert_eq!(t.rows.len(), 21 + 6);
    assert_eq!(t.rows[0][1], 1.0);
    assert_eq!(t.rows[21][2], 1.0);
    // second window starts after the FID and both bursts
    assert!(t.rows[21][0] > 20.0);

    std::fs::write(&pp, "init ix\nburst 25.3G 40hc\n").unwrap();
    let o = magecho(&[
        "run",
        "--sequence",
        pp.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2, column 7"));
}

#[test]
fn microscopic_kernel_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mk.csv");
    let o = magecho(&[
        "thermo",
        "--kernel-from-cluster",
        "100:3:4",
        "--t-end-us",
        "150",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_table(&out);
    assert_eq!(t.meta["kernel"], "tabulated");
    assert!(t.meta.contains_key("kernel_sign_flipped"));
    assert_eq!(t.rows[0][1], 1.0);
}

#[test]
fn lattice_info_and_dump() {
    let o = magecho(&["lattice-info", "--orientation", "110", "--max-sites", "4"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("orientation=[110]"));
    assert!(text.contains("sites=4"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("iz.csv");
    let o = magecho(&[
        "dump-operator",
        "--operator",
        "iz",
        "--max-sites",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let t = read_table(&out);
    // I_z on two spins: diag(1, 0, 0, −1)
    assert_eq!(t.rows, vec![vec![0.0, 0.0, 1.0, 0.0], vec![3.0, 3.0, -1.0, 0.0]]);
    assert_eq!(manifest(&out)["rows"], 2);
}

#[test]
fn help_documents_flags() {
    let o = magecho(&["run", "--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in [
        "--sequence",
        "--orientation",
        "--omega1-gauss",
        "--t1-grid",
        "--ideal",
        "--out",
        "--config",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
    let o = magecho(&["thermo", "--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in ["--n", "--m-ratio", "--offset-us", "--t-end-us", "--kernel-from-cluster"] {
        assert!(text.contains(flag), "{flag}");
    }
}
