use std::path::PathBuf;
use std::time::Instant;

use magecho::engine::SpinSystem;
use magecho::experiments::{half_cycle_grid, sweep_t1, SequenceId};
use magecho::lattice::{
    build_cluster, lattice_second_moment, second_moment, Orientation, PhysicalConstants, SpinCluster,
    CALIBRATION_RADIUS,
};
use magecho::linalg::CMat;
use magecho::operators::Axis;
use magecho::pulseprog::{compile, parse};
use magecho::table::Table;
use magecho::thermo::{microscopic_kernel, solve_beta, GaussianParams, KernelSpec};
use magecho::verify::run_suite;

use crate::config::{ConfigFile, Resolver};
use crate::error::CliError;
use crate::output::{emit, Manifest};
use crate::{ClusterArgs, DumpArgs, LatticeInfoArgs, RunArgs, ThermoArgs, VerifyArgs};

const DEFAULT_ORIENTATION: &str = "100";
const DEFAULT_RADIUS: f64 = 3.0;
const DEFAULT_MAX_SITES: usize = 6;
const DEFAULT_GAUSS: f64 = 25.3;

fn orientation(r: &mut Resolver<'_>, flag: Option<String>) -> Result<Orientation, CliError> {
    let s: String = r.get("orientation", flag, DEFAULT_ORIENTATION.into())?;
    s.parse()
        .map_err(|e: magecho::Error| CliError::Config(format!("--orientation: {e}")))
}

fn cluster(r: &mut Resolver<'_>, a: &ClusterArgs) -> Result<SpinCluster, CliError> {
    let o = orientation(r, a.orientation.clone())?;
    let radius = r.positive("radius", a.radius, Some(DEFAULT_RADIUS))?;
    let max_sites = r.get("max-sites", a.max_sites, DEFAULT_MAX_SITES)?;
    Ok(build_cluster(o, radius, max_sites, &PhysicalConstants::default())?)
}

fn out_path(r: &mut Resolver<'_>, flag: &Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
    let s = r.optional::<String>("out", flag.as_ref().map(|p| p.display().to_string()))?;
    Ok(s.map(PathBuf::from))
}

pub fn lattice_info(a: &LatticeInfoArgs, file: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let mut r = Resolver::new(file);
    let c = cluster(&mut r, &a.cluster)?;
    let out = out_path(&mut r, &a.out)?;
    let config = r.finish()?;
    let k = c.constants();
    let o = c.orientation();
    let m2 = second_moment(&c);
    let wl = magecho::lattice::local_field(&c);
    println!("orientation={o}");
    println!("sites={}", c.len());
    println!("cluster_hash={}", c.digest());
    println!("second_moment_cluster_s-2={m2:e}");
    println!(
        "second_moment_lattice_s-2={:e}",
        lattice_second_moment(&o, CALIBRATION_RADIUS, k)
    );
    println!("local_field_rad_s={wl:e}");
    println!("local_field_gauss={}", k.to_gauss(wl));
    if let Some(rep) = o.reported() {
        println!("reported_second_moment_s-2={:e}", rep.second_moment);
        println!("reported_local_field_gauss={}", rep.local_field_gauss);
    }
    for (i, p) in c.positions().iter().enumerate() {
        println!("site {i}: {} {} {}", p[0], p[1], p[2]);
    }
    if let Some(out) = out {
        let mut table = Table {
            columns: vec!["i".into(), "j".into(), "a_rad_s".into()],
            rows: c.pairs().map(|(i, j, a)| vec![i as f64, j as f64, a]).collect(),
            ..Default::default()
        };
        table.meta.insert("orientation".into(), o.to_string());
        table.meta.insert("cluster_hash".into(), c.digest());
        table.meta.insert("n_sites".into(), c.len().to_string());
        let rows = table.rows.len();
        emit(
            &out,
            &table,
            Manifest {
                command: "lattice-info",
                config: &config,
                cluster_hash: Some(c.digest()),
                wall_time_s: start.elapsed().as_secs_f64(),
                rows,
            },
        )?;
    }
    Ok(())
}

/// `start:stop:step`, optionally suffixed `hc`.
pub fn parse_grid(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("--t1-grid `{s}`: expected start:stop:step in half-cycles"));
    let t = s.trim().trim_end_matches("hc");
    let parts: Vec<u64> = t
        .split(':')
        .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    half_cycle_grid(start, stop, step).map_err(|e| CliError::Config(format!("--t1-grid: {e}")))
}

pub fn run(a: &RunArgs, file: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let mut r = Resolver::new(file);
    let seq: String = r.required("sequence", a.sequence.clone().or_else(|| a.sequence_pos.clone()))?;
    let c = cluster(&mut r, &a.cluster)?;
    let ideal = r.get("ideal", a.ideal.then_some(true), false)?;
    let gauss = r.positive("omega1-gauss", a.omega1_gauss, Some(DEFAULT_GAUSS))?;
    let grid_text: String = r.get("t1-grid", a.t1_grid.clone(), "0:40:2".into())?;
    let out = out_path(&mut r, &a.out)?.ok_or_else(|| CliError::Config("missing required parameter --out".into()))?;
    let config = r.finish()?;
    let sys = SpinSystem::new(c)?;
    let table = if seq.starts_with("builtin:") {
        let id: SequenceId = seq.parse()?;
        let grid = parse_grid(&grid_text)?;
        let omega1 = sys.cluster().constants().from_gauss(gauss);
        let curve = sweep_t1(id, &sys, omega1, &grid, ideal)?;
        let mut t = curve.to_table();
        t.meta.insert("t1_grid_hc".into(), grid_text.clone());
        t.meta.insert("omega1_gauss".into(), gauss.to_string());
        t
    } else {
        let path = PathBuf::from(&seq);
        let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let program = parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let plan = compile(&program, sys.cluster(), ideal)?;
        let (_, curves) = sys.evolve(&sys.initial_state(plan.initial), &plan)?;
        let mut t = Table {
            columns: vec!["t_us".into(), "amplitude".into(), "acquisition".into()],
            ..Default::default()
        };
        for (k, curve) in curves.iter().enumerate() {
            let t0: f64 = curve
                .meta()
                .get("window_start_s")
                .and_then(|s| s.parse().ok())
                .unwrap_or(0.0);
            for (x, v) in curve.abscissa().iter().zip(curve.values()) {
                t.rows.push(vec![(t0 + x) * 1e6, *v, k as f64]);
            }
            if k == 0 {
                t.meta = curve.meta().clone();
                t.meta.remove("window_start_s");
                t.meta.remove("observable");
            }
        }
        t.meta.insert("sequence".into(), path.display().to_string());
        t.meta.insert("macroscopic".into(), "false".into());
        t.meta.insert("ideal_reversal".into(), ideal.to_string());
        t
    };
    let rows = table.rows.len();
    emit(
        &out,
        &table,
        Manifest {
            command: "run",
            config: &config,
            cluster_hash: Some(sys.cluster().digest()),
            wall_time_s: start.elapsed().as_secs_f64(),
            rows,
        },
    )
}

/// `orientation[:radius[:max_sites]]`
pub fn parse_cluster_spec(s: &str) -> Result<SpinCluster, CliError> {
    let bad = |m: String| CliError::Config(format!("--kernel-from-cluster `{s}`: {m}"));
    let mut parts = s.split(':');
    let o: Orientation = parts
        .next()
        .unwrap_or("")
        .parse()
        .map_err(|e: magecho::Error| bad(e.to_string()))?;
    let radius = match parts.next() {
        Some(p) => p.parse::<f64>().map_err(|_| bad("bad radius".into()))?,
        None => DEFAULT_RADIUS,
    };
    let max_sites = match parts.next() {
        Some(p) => p.parse::<usize>().map_err(|_| bad("bad site count".into()))?,
        None => DEFAULT_MAX_SITES,
    };
    if parts.next().is_some() || !(radius > 0.0) {
        return Err(bad("expected orientation[:radius[:max_sites]]".into()));
    }
    Ok(build_cluster(o, radius, max_sites, &PhysicalConstants::default())?)
}

pub fn thermo(a: &ThermoArgs, file: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let mut r = Resolver::new(file);
    let spec: Option<String> = r.optional("kernel-from-cluster", a.kernel_from_cluster.clone())?;
    let offset_us = r.get("offset-us", a.offset_us, 80.0)?;
    if !(offset_us >= 0.0) {
        return Err(CliError::Config("--offset-us must be non-negative".into()));
    }
    let t_end = r.positive("t-end-us", a.t_end_us, None)? * 1e-6;
    let step = r.positive("step-us", a.step_us, Some(1.0))? * 1e-6;
    if t_end <= step {
        return Err(CliError::Config("--t-end-us must exceed --step-us".into()));
    }
    let offset = offset_us * 1e-6;
    let mut extra = Vec::new();
    let mut cluster_hash = None;
    let kernel = match spec {
        Some(spec) => {
            let c = parse_cluster_spec(&spec)?;
            cluster_hash = Some(c.digest());
            let sys = SpinSystem::new(c)?;
            let span = (t_end - offset).max(step);
            let n = (span / step).ceil() as usize + 1;
            let grid: Vec<f64> = (0..=n).map(|j| j as f64 * step).collect();
            let mk = microscopic_kernel(&sys, &grid, offset)?;
            extra.push(("kernel_source", format!("cluster {}", sys.cluster().orientation())));
            extra.push(("cluster_hash", sys.cluster().digest()));
            extra.push(("kernel_sign_flipped", mk.sign_flipped.to_string()));
            extra.push(("kernel_raw_g0", format!("{:e}", mk.raw_g0)));
            extra.push(("kernel_max_imaginary", format!("{:e}", mk.max_imaginary)));
            extra.push(("kernel_max_asymmetry", format!("{:e}", mk.max_asymmetry)));
            mk.kernel
        }
        None => {
            let o = orientation(&mut r, a.orientation.clone())?;
            let params = GaussianParams {
                n: r.positive("n", a.n, Some(0.45))?,
                m_ratio: r.positive("m-ratio", a.m_ratio, Some(0.25))?,
                offset,
            };
            extra.push(("orientation", o.to_string()));
            KernelSpec::paper(&o, params).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    let out = out_path(&mut r, &a.out)?.ok_or_else(|| CliError::Config("missing required parameter --out".into()))?;
    let config = r.finish()?;
    let traj = solve_beta(&kernel, t_end, step)?;
    let mut table = traj.to_table(&kernel);
    for (k, v) in extra {
        table.meta.insert(k.into(), v);
    }
    table.meta.insert("macroscopic".into(), "true".into());
    let rows = table.rows.len();
    emit(
        &out,
        &table,
        Manifest {
            command: "thermo",
            config: &config,
            cluster_hash,
            wall_time_s: start.elapsed().as_secs_f64(),
            rows,
        },
    )
}

pub fn verify(a: &VerifyArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut r = Resolver::new(file);
    let seed = r.get("seed", a.seed, 0u64)?;
    let trials = r.get("trials", a.trials, 20usize)?;
    r.finish()?;
    let report = run_suite(seed, trials);
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Verification(failed));
    }
    Ok(())
}

fn operator_matrix(sys: &SpinSystem, name: &str, omega1: f64) -> Result<CMat, CliError> {
    let m = match name {
        "hd" => sys.hd().matrix().clone(),
        "h2" => sys.nonsecular().h2.matrix().clone(),
        "hm2" => sys.nonsecular().hm2.matrix().clone(),
        "p" => sys.nonsecular().p.matrix().clone(),
        "q" => sys.q().matrix().clone(),
        "ix" => sys.collective(Axis::X).matrix().clone(),
        "iy" => sys.collective(Axis::Y).matrix().clone(),
        "iz" => sys.collective(Axis::Z).matrix().clone(),
        "h1" => sys.magnus(omega1)?.h1.matrix().clone(),
        "h2-1" => sys.magnus(omega1)?.h2.matrix().clone(),
        "tilted" => sys.tilted_hamiltonian(omega1).matrix().clone(),
        other => {
            return Err(CliError::Config(format!(
                "unknown operator `{other}` (hd, h2, hm2, p, q, ix, iy, iz, h1, h2-1, tilted)"
            )))
        }
    };
    Ok(m)
}

pub fn dump_operator(a: &DumpArgs, file: &ConfigFile) -> Result<(), CliError> {
    let start = Instant::now();
    let mut r = Resolver::new(file);
    let name: String = r.required("operator", a.operator.clone())?;
    let c = cluster(&mut r, &a.cluster)?;
    let gauss = r.positive("omega1-gauss", a.omega1_gauss, Some(DEFAULT_GAUSS))?;
    let out = out_path(&mut r, &a.out)?;
    let config = r.finish()?;
    let omega1 = c.constants().from_gauss(gauss);
    let sys = SpinSystem::new(c)?;
    let m = operator_matrix(&sys, &name.to_ascii_lowercase(), omega1)?;
    let mut table = Table {
        columns: vec!["row".into(), "col".into(), "re".into(), "im".into()],
        ..Default::default()
    };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                table.rows.push(vec![i as f64, j as f64, v.re, v.im]);
            }
        }
    }
    table.meta.insert("operator".into(), name);
    table.meta.insert("dim".into(), m.nrows().to_string());
    table
        .meta
        .insert("orientation".into(), sys.cluster().orientation().to_string());
    table.meta.insert("cluster_hash".into(), sys.cluster().digest());
    table
        .meta
        .insert("basis".into(), "site 0 most significant, bit 0 = up".into());
    match out {
        Some(out) => {
            let rows = table.rows.len();
            emit(
                &out,
                &table,
                Manifest {
                    command: "dump-operator",
                    config: &config,
                    cluster_hash: Some(sys.cluster().digest()),
                    wall_time_s: start.elapsed().as_secs_f64(),
                    rows,
                },
            )
        }
        None => {
            print!("{}", table.to_csv());
            Ok(())
        }
    }
}
