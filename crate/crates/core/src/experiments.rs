//! The measurements: free induction decay, the two dipolar magic-echo
//! sequences, the free-induction magic echo, t₁ sweeps and decay times.
//!
//! Echo amplitudes are in units of s⁻¹ (Δ carries H′_d with β = 1), the same
//! units as dG/dt, so ideal amplitudes compare directly with max|G′|.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::engine::{DeviationState, SpinSystem};
use crate::error::{Error, Result};
use crate::lattice::{second_moment, Orientation};
use crate::linalg::{commutator, trace_product};
use crate::operators::Axis;
use crate::pulseprog::{self, compile, Acquisition, InitKind, PropagationPlan};
use crate::table::Table;
use crate::thermo::{self, KernelSpec};

/// Echo window half-width in units of 1/ω_L.
pub const ECHO_HALF_WIDTH: f64 = 5.0;
/// Acquisition step in units of 1/ω_L.
pub const ACQUISITION_STEP: f64 = 0.02;
pub const ONE_OVER_E: f64 = 0.367_879_441_171_442_33;

/// Sampled amplitude against time, with string metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalCurve {
    abscissa_name: String,
    abscissa: Vec<f64>,
    values: Vec<f64>,
    meta: BTreeMap<String, String>,
}

impl SignalCurve {
    /// Abscissa in seconds, strictly increasing; values finite.
    pub fn new(abscissa_name: impl Into<String>, abscissa: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if abscissa.len() != values.len() {
            return Err(Error::DegenerateCurve(format!(
                "{} abscissa points but {} values",
                abscissa.len(),
                values.len()
            )));
        }
        if abscissa.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateCurve("abscissa is not strictly increasing".into()));
        }
        if abscissa.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCurve("non-finite sample".into()));
        }
        let mut meta = BTreeMap::new();
        meta.insert("macroscopic".to_string(), "false".to_string());
        Ok(SignalCurve {
            abscissa_name: abscissa_name.into(),
            abscissa,
            values,
            meta,
        })
    }

    pub fn abscissa_name(&self) -> &str {
        &self.abscissa_name
    }

    pub fn abscissa(&self) -> &[f64] {
        &self.abscissa
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    /// max |value|, refined by maximizing the interpolating polynomial through the
    /// (up to) five samples around the largest one. 0 for an empty curve.
    pub fn peak(&self) -> f64 {
        let Some((k, best)) = self
            .values
            .iter()
            .map(|v| v.abs())
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
        else {
            return 0.0;
        };
        if k == 0 || k + 1 == self.values.len() {
            return best;
        }
        let lo = k.saturating_sub(2);
        let hi = (k + 3).min(self.values.len());
        let xs = &self.abscissa[lo..hi];
        let ys: Vec<f64> = self.values[lo..hi].iter().map(|v| v.abs()).collect();
        let poly = |x: f64| -> f64 {
            let mut acc = 0.0;
            for (i, (&xi, &yi)) in xs.iter().zip(&ys).enumerate() {
                let mut l = 1.0;
                for (j, &xj) in xs.iter().enumerate() {
                    if j != i {
                        l *= (x - xj) / (xi - xj);
                    }
                }
                acc += yi * l;
            }
            acc
        };
        let (mut a, mut b) = (self.abscissa[k - 1], self.abscissa[k + 1]);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if poly(c) > poly(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(poly(0.5 * (a + b)))
    }

    /// Abscissa converted to μs, one `amplitude` column.
    pub fn to_table(&self) -> Table {
        Table {
            meta: self.meta.clone(),
            columns: vec![format!("{}_us", self.abscissa_name), "amplitude".into()],
            rows: self
                .abscissa
                .iter()
                .zip(&self.values)
                .map(|(t, v)| vec![t * 1e6, *v])
                .collect(),
        }
    }

    pub fn from_table(table: &Table) -> Result<Self> {
        if table.columns.len() != 2 {
            return Err(Error::Table("a signal curve has exactly two columns".into()));
        }
        let name = table.columns[0]
            .strip_suffix("_us")
            .ok_or_else(|| Error::Table("first column must be a time in us".into()))?;
        let abscissa = table.rows.iter().map(|r| r[0] / 1e6).collect();
        let values = table.rows.iter().map(|r| r[1]).collect();
        let mut c = SignalCurve::new(name, abscissa, values)?;
        c.meta = table.meta.clone();
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayEstimate {
    /// First 1/e crossing, linearly interpolated, s.
    Crossing { t_d: f64 },
    /// Never fell below the threshold within the sampled range.
    Censored { last: f64 },
}

impl DecayEstimate {
    pub const METHOD: &'static str = "one-over-e";

    pub fn time(&self) -> Option<f64> {
        match *self {
            DecayEstimate::Crossing { t_d } => Some(t_d),
            DecayEstimate::Censored { .. } => None,
        }
    }
}

/// First abscissa where value ≤ threshold·value(first).
pub fn decay_time(curve: &SignalCurve, threshold: f64) -> Result<DecayEstimate> {
    decay_time_of(curve.abscissa(), curve.values(), threshold)
}

pub fn decay_time_of(t: &[f64], v: &[f64], threshold: f64) -> Result<DecayEstimate> {
    if t.len() < 3 || t.len() != v.len() {
        return Err(Error::DegenerateCurve("need at least 3 points".into()));
    }
    if !(v[0] > 0.0) {
        return Err(Error::DegenerateCurve("first value must be positive".into()));
    }
    let level = threshold * v[0];
    for k in 1..v.len() {
        if v[k] <= level {
            let frac = (v[k - 1] - level) / (v[k - 1] - v[k]);
            return Ok(DecayEstimate::Crossing {
                t_d: t[k - 1] + frac * (t[k] - t[k - 1]),
            });
        }
    }
    Ok(DecayEstimate::Censored {
        last: *t.last().expect("nonempty"),
    })
}

/// Spectral weights of I_x in the H′_d eigenbasis: G(t) = Σ w·cos(ω t).
pub struct FidSpectrum {
    frequencies: Vec<f64>,
    weights: Vec<f64>,
}

impl FidSpectrum {
    pub fn new(system: &SpinSystem) -> Self {
        let x = system.hd_spectral().to_eigenbasis(system.collective(Axis::X).matrix());
        let lam = system.hd_spectral().values();
        let norm = trace_product(system.collective(Axis::X).matrix(), system.collective(Axis::X).matrix()).re;
        let n = lam.len();
        let mut frequencies = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for m in 0..n {
            for k in 0..n {
                let w = x[(m, k)].norm_sqr() / norm;
                if w > 0.0 {
                    frequencies.push(lam[m] - lam[k]);
                    weights.push(w);
                }
            }
        }
        FidSpectrum { frequencies, weights }
    }

    pub fn g(&self, t: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.weights)
            .map(|(f, w)| w * (f * t).cos())
            .sum()
    }

    pub fn g_prime(&self, t: f64) -> f64 {
        -self
            .frequencies
            .iter()
            .zip(&self.weights)
            .map(|(f, w)| w * f * (f * t).sin())
            .sum::<f64>()
    }

    /// −G″(0) = Σ w·ω².
    pub fn second_moment(&self) -> f64 {
        self.frequencies.iter().zip(&self.weights).map(|(f, w)| w * f * f).sum()
    }

    /// max |G′| on [0, window], sampled at `step` and polished by golden-section search.
    pub fn max_abs_derivative(&self, window: f64, step: f64) -> f64 {
        let times = crate::engine::sample_times(window, step);
        let (mut best_t, mut best) = (0.0, 0.0);
        for &t in &times {
            let v = self.g_prime(t).abs();
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let (mut a, mut b) = ((best_t - step).max(0.0), (best_t + step).min(window));
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if self.g_prime(c).abs() > self.g_prime(d).abs() {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(self.g_prime(0.5 * (a + b)).abs())
    }
}

/// G(t) = Tr(e^{−iH′_d t}I_x e^{iH′_d t}I_x)/Tr(I_x²), from the eigen-decomposition.
pub fn fid(system: &SpinSystem, window: f64, step: f64) -> Result<SignalCurve> {
    if !(window > 0.0) || !(step > 0.0) {
        return Err(Error::param("window and step must be positive"));
    }
    let spec = FidSpectrum::new(system);
    let times = crate::engine::sample_times(window, step);
    let values = times.iter().map(|&t| spec.g(t)).collect();
    let mut c = SignalCurve::new("t", times, values)?;
    annotate(&mut c, system, "fid", None, false);
    Ok(c)
}

/// G′(t) on the same grid as [`fid`].
pub fn fid_derivative(system: &SpinSystem, window: f64, step: f64) -> Result<SignalCurve> {
    let spec = FidSpectrum::new(system);
    let times = crate::engine::sample_times(window, step);
    let values = times.iter().map(|&t| spec.g_prime(t)).collect();
    let mut c = SignalCurve::new("t", times, values)?;
    annotate(&mut c, system, "fid-derivative", None, false);
    Ok(c)
}

/// −Tr([H′_d, I_x]²)/Tr(I_x²).
pub fn commutator_second_moment(system: &SpinSystem) -> f64 {
    let x = system.collective(Axis::X).matrix();
    let c = commutator(system.hd().matrix(), x);
    -trace_product(&c, &c).re / trace_product(x, x).re
}

/// −G″(0) by a Richardson-extrapolated central difference of G (even in t).
pub fn fid_second_moment_fd(system: &SpinSystem, h: f64) -> f64 {
    let spec = FidSpectrum::new(system);
    let d2 = |h: f64| 2.0 * (1.0 - spec.g(h)) / (h * h);
    (4.0 * d2(0.5 * h) - d2(h)) / 3.0
}

fn annotate(c: &mut SignalCurve, system: &SpinSystem, sequence: &str, omega1: Option<f64>, ideal: bool) {
    c.set_meta("sequence", sequence);
    c.set_meta("orientation", system.cluster().orientation());
    c.set_meta("cluster_hash", system.cluster().digest());
    c.set_meta("n_sites", system.n_sites());
    c.set_meta("omega_l_rad_s", format!("{:e}", system.local_field()));
    if let Some(w) = omega1 {
        c.set_meta("omega1_rad_s", format!("{w:e}"));
    }
    c.set_meta("ideal_reversal", ideal);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SequenceId {
    Seq1,
    Seq2,
    Rpw,
}

impl SequenceId {
    pub fn name(self) -> &'static str {
        match self {
            SequenceId::Seq1 => "seq1",
            SequenceId::Seq2 => "seq2",
            SequenceId::Rpw => "rpw",
        }
    }
}

impl std::str::FromStr for SequenceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches("builtin:") {
            "seq1" => Ok(SequenceId::Seq1),
            "seq2" => Ok(SequenceId::Seq2),
            "rpw" => Ok(SequenceId::Rpw),
            _ => Err(Error::param(format!("unknown sequence `{s}`"))),
        }
    }
}

/// π/ω₁.
pub fn half_cycle(omega1: f64) -> f64 {
    PI / omega1
}

/// t₁ as a count of half-cycles; t₁ must be an even multiple of π/ω₁.
pub fn t1_to_half_cycles(t1: f64, omega1: f64) -> Result<u64> {
    if !(omega1 > 0.0) {
        return Err(Error::param("omega1 must be positive"));
    }
    if !(t1 >= 0.0) || !t1.is_finite() {
        return Err(Error::param("t1 must be non-negative"));
    }
    let hc = half_cycle(omega1);
    let n = (t1 / hc).round();
    if (t1 - n * hc).abs() > 1e-9 * hc.max(t1) || !(n as u64).is_multiple_of(2) {
        return Err(Error::NotHalfCycleMultiple { t1, half_cycle: hc });
    }
    Ok(n as u64)
}

/// Nearest allowed t₁ (an even number of half-cycles).
pub fn snap_t1(t1: f64, omega1: f64) -> u64 {
    let n = (t1 / half_cycle(omega1) / 2.0).round().max(0.0) as u64;
    2 * n
}

fn acquisition(system: &SpinSystem, omega1: f64) -> Acquisition {
    let wl = system.local_field();
    let scale = if wl > 0.0 { 1.0 / wl } else { 2.0 * half_cycle(omega1) };
    Acquisition {
        gauss: omega1 / system.cluster().constants().gamma,
        gamma: system.cluster().constants().gamma,
        half_width_us: ECHO_HALF_WIDTH * scale * 1e6,
        step_us: ACQUISITION_STEP * scale * 1e6,
    }
}

/// Result of one sequence-1 run.
#[derive(Clone, Debug)]
pub struct Sequence1 {
    /// Peak |s| of the P-borne part of the state.
    pub amplitude: f64,
    /// Peak |s| of the H′_d-borne part.
    pub hd_amplitude: f64,
    pub p_signal: SignalCurve,
    pub hd_signal: SignalCurve,
}

fn split_after_prefix(plan: &PropagationPlan) -> (PropagationPlan, PropagationPlan) {
    let k = plan
        .segments
        .iter()
        .position(|s| !matches!(s, pulseprog::Segment::Rotate { .. }))
        .unwrap_or(plan.segments.len())
        .min(1);
    let mut head = plan.clone();
    let mut tail = plan.clone();
    head.segments.truncate(k);
    tail.segments.drain(..k);
    (head, tail)
}

/// Sequence 1 with t₁ given as a half-cycle count (even).
pub fn sequence1_hc(system: &SpinSystem, omega1: f64, half_cycles: u64, ideal: bool) -> Result<Sequence1> {
    let program = pulseprog::seq1(half_cycles, &acquisition(system, omega1))?;
    let plan = compile(&program, system.cluster(), ideal)?;
    let (head, tail) = split_after_prefix(&plan);
    let (tilted, _) = system.evolve(&system.initial_state(InitKind::Dipolar), &head)?;
    // H′_d and P live in different coherence orders, so projecting on H′_d separates them
    let hd = system.hd().matrix();
    let hh = trace_product(hd, hd).re;
    let c = if hh > 0.0 {
        trace_product(&tilted.delta, hd).re / hh
    } else {
        0.0
    };
    let hd_part = DeviationState::new(hd * crate::linalg::re(c));
    let p_part = DeviationState::new(&tilted.delta - &hd_part.delta);
    let mut out = system.evolve_many(&[p_part, hd_part], &tail)?;
    let mut hd_signal = out.pop().expect("two").1.pop().ok_or_else(no_acquisition)?;
    let mut p_signal = out.pop().expect("two").1.pop().ok_or_else(no_acquisition)?;
    let t1 = half_cycles as f64 * half_cycle(omega1);
    for (curve, part) in [(&mut p_signal, "P"), (&mut hd_signal, "Hd")] {
        annotate(curve, system, "seq1", Some(omega1), ideal);
        curve.set_meta("component", part);
        curve.set_meta("t1_s", format!("{t1:e}"));
    }
    Ok(Sequence1 {
        amplitude: p_signal.peak(),
        hd_amplitude: hd_signal.peak(),
        p_signal,
        hd_signal,
    })
}

fn no_acquisition() -> Error {
    Error::param("program has no acquisition")
}

pub fn sequence1_amplitude(system: &SpinSystem, omega1: f64, t1: f64, ideal: bool) -> Result<f64> {
    Ok(sequence1_hc(system, omega1, t1_to_half_cycles(t1, omega1)?, ideal)?.amplitude)
}

/// Sequence 2: peak |⟨I_y⟩| in the window around (3/2)t₁.
pub fn sequence2_hc(system: &SpinSystem, omega1: f64, half_cycles: u64, ideal: bool) -> Result<SignalCurve> {
    let program = pulseprog::seq2(half_cycles, &acquisition(system, omega1))?;
    let plan = compile(&program, system.cluster(), ideal)?;
    let (_, mut curves) = system.evolve(&system.initial_state(InitKind::Seq2), &plan)?;
    let mut c = curves.pop().ok_or_else(no_acquisition)?;
    annotate(&mut c, system, "seq2", Some(omega1), ideal);
    c.set_meta("t1_s", format!("{:e}", half_cycles as f64 * half_cycle(omega1)));
    Ok(c)
}

pub fn sequence2_amplitude(system: &SpinSystem, omega1: f64, t1: f64, ideal: bool) -> Result<f64> {
    Ok(sequence2_hc(system, omega1, t1_to_half_cycles(t1, omega1)?, ideal)?.peak())
}

/// Free-induction magic echo.
#[derive(Clone, Debug)]
pub struct RpwEcho {
    pub fid: SignalCurve,
    pub echo: SignalCurve,
    /// |s| at the end of the burst, where the echo is expected.
    pub echo_peak: f64,
    /// τ actually used, s.
    pub tau: f64,
}

/// τ is snapped to a positive multiple of π/ω₁; the burst lasts 2τ.
pub fn rpw_magic_echo(system: &SpinSystem, omega1: f64, tau: f64, ideal: bool) -> Result<RpwEcho> {
    if !(tau > 0.0) {
        return Err(Error::param("tau must be positive"));
    }
    if !(omega1 > 0.0) {
        return Err(Error::param("omega1 must be positive"));
    }
    let m = ((tau / half_cycle(omega1)).round() as u64).max(1);
    rpw_hc(system, omega1, 2 * m, ideal)
}

pub fn rpw_hc(system: &SpinSystem, omega1: f64, half_cycles: u64, ideal: bool) -> Result<RpwEcho> {
    let program = pulseprog::rpw(half_cycles, &acquisition(system, omega1))?;
    let plan = compile(&program, system.cluster(), ideal)?;
    let (_, mut curves) = system.evolve(&system.initial_state(InitKind::Ix), &plan)?;
    let mut echo = curves.pop().ok_or_else(no_acquisition)?;
    let mut fid = curves.pop().ok_or_else(no_acquisition)?;
    let tau = (half_cycles / 2) as f64 * half_cycle(omega1);
    for (c, part) in [(&mut fid, "fid"), (&mut echo, "echo")] {
        annotate(c, system, "rpw", Some(omega1), ideal);
        c.set_meta("component", part);
        c.set_meta("tau_s", format!("{tau:e}"));
    }
    Ok(RpwEcho {
        echo_peak: echo.values()[0].abs(),
        fid,
        echo,
        tau,
    })
}

/// Amplitude of one sequence at t₁ = `half_cycles`·π/ω₁.
pub fn amplitude_hc(id: SequenceId, system: &SpinSystem, omega1: f64, half_cycles: u64, ideal: bool) -> Result<f64> {
    match id {
        SequenceId::Seq1 => Ok(sequence1_hc(system, omega1, half_cycles, ideal)?.amplitude),
        SequenceId::Seq2 => Ok(sequence2_hc(system, omega1, half_cycles, ideal)?.peak()),
        SequenceId::Rpw => Ok(rpw_hc(system, omega1, half_cycles, ideal)?.echo_peak),
    }
}

/// Amplitude against t₁ over a grid of half-cycle counts, in grid order.
pub fn sweep_t1(id: SequenceId, system: &SpinSystem, omega1: f64, grid: &[u64], ideal: bool) -> Result<SignalCurve> {
    let point = |&n: &u64| amplitude_hc(id, system, omega1, n, ideal);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<f64>> = {
        use rayon::prelude::*;
        grid.par_iter().map(point).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<f64>> = grid.iter().map(point).collect();
    let values = results.into_iter().collect::<Result<Vec<_>>>()?;
    let hc = half_cycle(omega1);
    let abscissa = grid.iter().map(|&n| n as f64 * hc).collect();
    let mut c = SignalCurve::new("t1", abscissa, values)?;
    annotate(&mut c, system, id.name(), Some(omega1), ideal);
    c.set_meta("decay_method", DecayEstimate::METHOD);
    Ok(c)
}

/// Expands `start:stop:step` (half-cycles, inclusive).
pub fn half_cycle_grid(start: u64, stop: u64, step: u64) -> Result<Vec<u64>> {
    if step == 0 || stop < start {
        return Err(Error::param("grid needs step > 0 and stop >= start"));
    }
    Ok((start..=stop).step_by(step as usize).collect())
}

/// The flat unitary prediction for sequence 1 next to the memory-kernel decay.
#[derive(Clone, Debug)]
pub struct Divergence {
    pub t1: Vec<f64>,
    pub simulated: Vec<f64>,
    pub thermo: Vec<f64>,
    pub a_ideal: f64,
    pub max_difference: f64,
    pub thermo_decay: DecayEstimate,
}

impl Divergence {
    pub fn to_table(&self) -> Table {
        let mut meta = BTreeMap::new();
        meta.insert("a_ideal".into(), format!("{:e}", self.a_ideal));
        meta.insert("max_difference".into(), format!("{:e}", self.max_difference));
        meta.insert("macroscopic".into(), "false".into());
        meta.insert("decay_method".into(), DecayEstimate::METHOD.into());
        meta.insert(
            "thermo_t_d_us".into(),
            match self.thermo_decay.time() {
                Some(t) => format!("{}", t * 1e6),
                None => "censored".into(),
            },
        );
        Table {
            meta,
            columns: vec!["t1_us".into(), "simulated".into(), "thermo".into()],
            rows: (0..self.t1.len())
                .map(|k| vec![self.t1[k] * 1e6, self.simulated[k], self.thermo[k]])
                .collect(),
        }
    }
}

/// Ideal-reversal sequence 1 on the cluster against A_ideal·β(t₁) from the
/// Gaussian memory-kernel model, over t₁ ∈ [0, t1_max].
pub fn divergence_exhibit(
    system: &SpinSystem,
    orientation: &Orientation,
    omega1: f64,
    t1_max: f64,
    kernel_params: thermo::GaussianParams,
) -> Result<Divergence> {
    let top = snap_t1(t1_max, omega1).max(2);
    let top = if top as f64 * half_cycle(omega1) < t1_max {
        top + 2
    } else {
        top
    };
    let grid = half_cycle_grid(0, top, 2)?;
    let curve = sweep_t1(SequenceId::Seq1, system, omega1, &grid, true)?;
    let a_ideal = curve.values()[0];
    let kernel = KernelSpec::paper(orientation, kernel_params)?;
    let t_end = *curve.abscissa().last().expect("nonempty");
    let step = (t_end / 400.0).min(1e-6);
    let beta = thermo::solve_beta(&kernel, t_end, step)?;
    let thermo: Vec<f64> = curve.abscissa().iter().map(|&t| a_ideal * beta.at(t)).collect();
    let max_difference = curve
        .values()
        .iter()
        .zip(&thermo)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let thermo_decay = decay_time_of(beta.times(), beta.beta(), ONE_OVER_E)?;
    Ok(Divergence {
        t1: curve.abscissa().to_vec(),
        simulated: curve.values().to_vec(),
        thermo,
        a_ideal,
        max_difference,
        thermo_decay,
    })
}

/// Van Vleck M₂ of the cluster (for comparison with −G″(0)).
pub fn cluster_second_moment(system: &SpinSystem) -> f64 {
    second_moment(system.cluster())
}
