//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line before asserting.

use std::time::Instant;

use magecho::engine::SpinSystem;
use magecho::experiments::{
    decay_time_of, divergence_exhibit, fid_second_moment_fd, rpw_magic_echo, sequence1_hc, sequence2_hc, FidSpectrum,
    ACQUISITION_STEP, ECHO_HALF_WIDTH, ONE_OVER_E,
};
use magecho::lattice::{
    build_cluster, lattice_second_moment, second_moment, Orientation, PhysicalConstants, SpinCluster,
    CALIBRATION_M2_100,
};
use magecho::linalg::{commutator, frobenius, re};
use magecho::operators::{tilt_decompose, Axis};
use magecho::pulseprog::{builtin, parse, Acquisition, BUILTIN_NAMES};
use magecho::table::Table;
use magecho::thermo::{solve_beta, GaussianParams, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, pass: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn lattice_system(o: Orientation, n: usize) -> SpinSystem {
    SpinSystem::new(build_cluster(o, 3.0, n, &PhysicalConstants::default()).unwrap()).unwrap()
}

#[test]
fn criterion_1_operator_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_tilt: f64 = 0.0;
    let mut worst_comm: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=6);
        let c = SpinCluster::random(n, &mut rng, PhysicalConstants::default()).unwrap();
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let sys = SpinSystem::new(c.clone()).unwrap();
        worst_tilt = worst_tilt.max(tilt_decompose(sys.hd(), theta, &c).unwrap().relative_residual());
        let iz = sys.collective(Axis::Z).matrix();
        let hd = sys.hd().matrix();
        let h2 = sys.nonsecular().h2.matrix();
        let q = sys.q().matrix();
        let scale = frobenius(hd);
        worst_comm = worst_comm
            .max(frobenius(&commutator(hd, iz)) / scale)
            .max(frobenius(&(commutator(iz, h2) - h2 * re(2.0))) / scale)
            .max(frobenius(&(commutator(iz, &commutator(iz, q)) - q)) / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_tilt < 1e-10 && worst_comm < 1e-12 && secs < 60.0;
    report(
        "1 (operator identities)",
        pass,
        format!("tilt residual {worst_tilt:.2e}/|Hd|, commutator defect {worst_comm:.2e}, {secs:.1}s"),
    );
    assert!(pass);
}

struct IdealEcho {
    rpw_peak: f64,
    seq1: Vec<f64>,
    seq2_over_seq1: f64,
    max_gp: f64,
    secs: f64,
}

fn ideal_echo() -> IdealEcho {
    let start = Instant::now();
    let sys = lattice_system(Orientation::hundred(), 6);
    let wl = sys.local_field();
    let w1 = 10.0 * wl;
    let rpw = rpw_magic_echo(&sys, w1, 3.0 / wl, true).unwrap();
    let seq1: Vec<f64> = [0, 10, 20, 40, 80]
        .iter()
        .map(|&hc| sequence1_hc(&sys, w1, hc, true).unwrap().amplitude)
        .collect();
    let seq2 = sequence2_hc(&sys, w1, 20, true).unwrap().peak();
    let max_gp = FidSpectrum::new(&sys).max_abs_derivative(ECHO_HALF_WIDTH / wl, ACQUISITION_STEP / wl);
    IdealEcho {
        rpw_peak: rpw.echo_peak,
        seq2_over_seq1: seq2 / seq1[2],
        seq1,
        max_gp,
        secs: start.elapsed().as_secs_f64(),
    }
}

#[test]
fn criterion_2a_ideal_rpw_echo() {
    let e = ideal_echo();
    let pass = (e.rpw_peak - 1.0).abs() < 1e-6 && e.secs < 120.0;
    report(
        "2a (ideal RPW echo)",
        pass,
        format!("echo peak {:.9}, {:.1}s", e.rpw_peak, e.secs),
    );
    assert!(pass);
}

#[test]
fn criterion_2b_ideal_seq1_flat_at_three_sixteenths() {
    let e = ideal_echo();
    let a0 = e.seq1[0];
    let spread = e.seq1.iter().map(|a| (a - a0).abs() / a0).fold(0.0, f64::max);
    let ratio = a0 / e.max_gp;
    let flat = spread < 1e-6;
    let level = (ratio / (3.0 / 16.0) - 1.0).abs() < 0.01;
    let pass = flat && level && e.secs < 120.0;
    report(
        "2b (ideal seq1 flat, 3/16 max|G'|)",
        pass,
        format!("t1 spread {spread:.2e}; A/max|G'| = {ratio:.6} (expected 0.1875)"),
    );
    assert!(pass);
}

#[test]
fn criterion_2c_seq2_over_seq1() {
    let e = ideal_echo();
    let pass = (e.seq2_over_seq1 - 2.0).abs() < 1e-6 && e.secs < 120.0;
    report("2c (seq2/seq1 = 2)", pass, format!("ratio {:.9}", e.seq2_over_seq1));
    assert!(pass);
}

#[test]
fn criterion_3_magnus() {
    let mut lines = Vec::new();
    let mut pass = true;
    for n in 4..=6 {
        let sys = lattice_system(Orientation::hundred(), n);
        let w1 = 10.0 * sys.local_field();
        let hc = 20;
        let e0 = sys.verify_average_hamiltonian(w1, hc, 0).unwrap();
        let e1 = sys.verify_average_hamiltonian(w1, hc, 1).unwrap();
        let e0d = sys.verify_average_hamiltonian(2.0 * w1, 2 * hc, 0).unwrap();
        let r = e0d / e0;
        pass &= (0.2..=0.7).contains(&r) && e1 < e0;
        lines.push(format!("N={n}: e0 {e0:.3e} e1 {e1:.3e} ratio {r:.3}"));
    }
    report("3 (Magnus)", pass, lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_4_second_moments() {
    let k = PhysicalConstants::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for radius in [3.0, 16.0] {
        let m = |o: Orientation| lattice_second_moment(&o, radius, &k);
        let ratio = m(Orientation::hundred()) / m(Orientation::hundred_eleven());
        ok &= (ratio - 5.0).abs() <= 0.5;
        parts.push(format!("r={radius}: M2[100]/M2[111] = {ratio:.3}"));
    }
    let m100 = lattice_second_moment(&Orientation::hundred(), 16.0, &k);
    let m110 = lattice_second_moment(&Orientation::hundred_ten(), 16.0, &k);
    let m111 = lattice_second_moment(&Orientation::hundred_eleven(), 16.0, &k);
    ok &= (m100 / CALIBRATION_M2_100 - 1.0).abs() < 1e-6;
    ok &= (m110 / 0.99e10 - 1.0).abs() < 0.15;
    ok &= (m111 / 0.50e10 - 1.0).abs() < 0.15;
    parts.push(format!("M2 = {m100:.3e}, {m110:.3e}, {m111:.3e}"));
    let mut worst_fid: f64 = 0.0;
    for o in Orientation::principal() {
        let sys = lattice_system(o, 6);
        let m2 = second_moment(sys.cluster());
        let fd = fid_second_moment_fd(&sys, 0.01 / m2.sqrt());
        worst_fid = worst_fid.max((fd / m2 - 1.0).abs());
    }
    ok &= worst_fid < 1e-3;
    parts.push(format!("-G''(0) vs M2 {worst_fid:.2e}"));
    report("4 (second moments)", ok, parts.join("; "));
    assert!(ok);
}

#[test]
fn criterion_5_h1_scaling() {
    let k = PhysicalConstants::default();
    let m100 = lattice_second_moment(&Orientation::hundred(), 16.0, &k);
    let m111 = lattice_second_moment(&Orientation::hundred_eleven(), 16.0, &k);
    // ‖H₁⁽¹⁾‖ ∝ a²/ω₁ ∝ M₂/ω₁
    let ratio = (m100 / 12.5) / (m111 / 52.6);
    // the same ratio from the operators on 6-spin clusters, for context
    let h1 = |o: Orientation, g: f64| {
        let sys = lattice_system(o, 6);
        sys.magnus(k.from_gauss(g)).unwrap().h1.norm()
    };
    let cluster_ratio = h1(Orientation::hundred(), 12.5) / h1(Orientation::hundred_eleven(), 52.6);
    let pass = (ratio - 20.0).abs() <= 4.0;
    report(
        "5 (H1 scaling)",
        pass,
        format!("lattice-sum ratio {ratio:.2} (expected 20 +- 4); 6-spin operator ratio {cluster_ratio:.2}"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_thermo() {
    let start = Instant::now();
    let g: f64 = 4.0e8;
    let t_end = 4.0 * std::f64::consts::PI / g.sqrt();
    let b = solve_beta(&KernelSpec::constant(g, 0.0).unwrap(), t_end, t_end / 200.0).unwrap();
    let cosine = b
        .times()
        .iter()
        .zip(b.beta())
        .map(|(t, v)| (v - (g.sqrt() * t).cos()).abs())
        .fold(0.0, f64::max);
    let mut td = Vec::new();
    let mut early: f64 = 1.0;
    for o in Orientation::principal() {
        let kernel = KernelSpec::paper(&o, GaussianParams::default()).unwrap();
        let b = solve_beta(&kernel, 600e-6, 1e-6).unwrap();
        for (t, v) in b.times().iter().zip(b.beta()) {
            if *t < 80e-6 {
                early = early.min(*v);
            }
        }
        td.push(
            decay_time_of(b.times(), b.beta(), ONE_OVER_E)
                .unwrap()
                .time()
                .unwrap_or(f64::INFINITY),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = cosine < 1e-6
        && td[0] < td[1]
        && td[1] < td[2]
        && td.iter().all(|&t| t <= 350e-6)
        && early >= 0.99
        && secs < 10.0;
    report(
        "6 (thermo model)",
        pass,
        format!(
            "cosine error {cosine:.2e}; t_d = {:.1}, {:.1}, {:.1} us; min beta before 80 us {early}; {secs:.1}s",
            td[0] * 1e6,
            td[1] * 1e6,
            td[2] * 1e6
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_divergence() {
    let k = PhysicalConstants::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for o in Orientation::principal() {
        let sys = lattice_system(o, 6);
        let d = divergence_exhibit(&sys, &o, k.from_gauss(25.3), 350e-6, GaussianParams::default()).unwrap();
        let upto: f64 =
            d.t1.iter()
                .zip(d.simulated.iter().zip(&d.thermo))
                .filter(|(t, _)| **t <= 350e-6 + 1e-12)
                .map(|(_, (a, b))| (a - b).abs())
                .fold(0.0, f64::max);
        let flat = d
            .simulated
            .iter()
            .map(|a| (a / d.a_ideal - 1.0).abs())
            .fold(0.0, f64::max);
        let td = d.thermo_decay.time().unwrap_or(f64::INFINITY);
        pass &= upto > 0.5 * d.a_ideal && flat < 1e-6 && td <= 350e-6;
        parts.push(format!(
            "{o}: diff {:.3} A_ideal, t_d {:.0} us",
            upto / d.a_ideal,
            td * 1e6
        ));
    }
    report("7 (divergence exhibit)", pass, parts.join("; "));
    assert!(pass);
}

#[test]
fn criterion_8_parser_and_csv() {
    let acq = Acquisition {
        gauss: 10.0,
        gamma: 1e5 * std::f64::consts::PI,
        half_width_us: 5.0,
        step_us: 0.1,
    };
    let golden = [
        include_str!("golden/seq1.pp"),
        include_str!("golden/seq2.pp"),
        include_str!("golden/rpw.pp"),
    ];
    let mut pass = true;
    let mut mismatched = Vec::new();
    for (name, want) in BUILTIN_NAMES.iter().zip(golden) {
        let p = builtin(name, 40, &acq).unwrap();
        let printed = p.to_string();
        if printed != want || parse(want).unwrap() != p {
            mismatched.push(*name);
        }
        let again = parse(&printed).unwrap();
        pass &= again == p && again.to_string() == printed;
    }
    pass &= mismatched.is_empty();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = Table {
        meta: [("sequence".to_string(), "seq1".to_string())].into(),
        columns: vec!["t1_us".into(), "amplitude".into()],
        rows: (0..200)
            .map(|_| {
                vec![
                    rng.gen_range(0.0..1e3),
                    rng.gen_range(-1e5..1e5) * 10f64.powi(rng.gen_range(-12..12)),
                ]
            })
            .collect(),
    };
    let back = Table::from_csv(&t.to_csv()).unwrap();
    let worst = back
        .rows
        .iter()
        .flatten()
        .zip(t.rows.iter().flatten())
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    pass &= worst < 5e-12 && back.to_csv() == t.to_csv();
    report(
        "8 (parser and CSV round-trip)",
        pass,
        format!("golden mismatches {mismatched:?}; csv worst relative error {worst:.2e}"),
    );
    assert!(pass);
}
