//! Memory-kernel equation for the inverse temperature of the (3/8)P subsystem:
//!
//! dβ/dt = −∫₀ᵗ β(t′) G₁(t − t′) dt′,
//!
//! started after a fixed offset before which β stays at 1.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::engine::SpinSystem;
use crate::error::{Error, Result};
use crate::lattice::Orientation;
use crate::linalg::{commutator, trace_product, CMat};
use crate::operators::pair_raising;
use crate::table::Table;

/// Step halvings must change β(t_end), and β anywhere on the shared grid, by less than this.
pub const REFINE_TOLERANCE: f64 = 1e-6;
pub const MAX_REFINEMENTS: usize = 12;
/// Largest solver grid and output sample count. The memory sum costs O(K²).
pub const MAX_GRID_STEPS: usize = 1 << 16;
pub const METHOD: &str = "heun-trapezoid";

/// n, M/M₂ and the onset offset of the Gaussian kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianParams {
    pub n: f64,
    pub m_ratio: f64,
    /// s
    pub offset: f64,
}

impl Default for GaussianParams {
    fn default() -> Self {
        GaussianParams {
            n: 0.45,
            m_ratio: 0.25,
            offset: 80e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    /// (nω_L)²·exp(−½Mτ²)
    Gaussian {
        n: f64,
        omega_l: f64,
        m: f64,
    },
    Constant(f64),
    /// Linear interpolation in a table starting at τ = 0.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// s
    pub offset: f64,
}

fn check_offset(offset: f64) -> Result<()> {
    if offset >= 0.0 && offset.is_finite() {
        Ok(())
    } else {
        Err(Error::param("offset must be non-negative"))
    }
}

impl KernelSpec {
    pub fn gaussian(n: f64, omega_l: f64, m: f64, offset: f64) -> Result<Self> {
        if !(n >= 0.0) || !(omega_l >= 0.0) || !(m > 0.0) {
            return Err(Error::param("gaussian kernel needs n >= 0, omega_L >= 0, M > 0"));
        }
        check_offset(offset)?;
        Ok(KernelSpec {
            kind: KernelKind::Gaussian { n, omega_l, m },
            offset,
        })
    }

    pub fn constant(g: f64, offset: f64) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::param("kernel value must be finite"));
        }
        check_offset(offset)?;
        Ok(KernelSpec {
            kind: KernelKind::Constant(g),
            offset,
        })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>, offset: f64) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::param(
                "tabulated kernel needs matching times and values, at least 2",
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("kernel times must start at 0 and increase"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("kernel values must be finite"));
        }
        check_offset(offset)?;
        Ok(KernelSpec {
            kind: KernelKind::Tabulated { times, values },
            offset,
        })
    }

    /// Gaussian kernel from the reported sample M₂: ω_L = (M₂/3)^{1/2}, M = m_ratio·M₂.
    pub fn paper(orientation: &Orientation, p: GaussianParams) -> Result<Self> {
        let r = orientation
            .reported()
            .ok_or_else(|| Error::param(format!("no reported sample data for orientation {orientation}")))?;
        Self::gaussian(
            p.n,
            (r.second_moment / 3.0).sqrt(),
            p.m_ratio * r.second_moment,
            p.offset,
        )
    }

    /// G₁(τ), τ ≥ 0.
    pub fn eval(&self, tau: f64) -> f64 {
        match &self.kind {
            KernelKind::Gaussian { n, omega_l, m } => (n * omega_l).powi(2) * (-0.5 * m * tau * tau).exp(),
            KernelKind::Constant(g) => *g,
            KernelKind::Tabulated { times, values } => interpolate(times, values, tau),
        }
    }

    /// Largest τ the kernel is defined for.
    fn horizon(&self) -> f64 {
        match &self.kind {
            KernelKind::Tabulated { times, .. } => *times.last().expect("validated"),
            _ => f64::INFINITY,
        }
    }

    pub fn describe(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        match &self.kind {
            KernelKind::Gaussian { n, omega_l, m: mm } => {
                m.insert("kernel".into(), "gaussian".into());
                m.insert("n".into(), format!("{n}"));
                m.insert("omega_l_rad_s".into(), format!("{omega_l:e}"));
                m.insert("m_rad2_s2".into(), format!("{mm:e}"));
            }
            KernelKind::Constant(g) => {
                m.insert("kernel".into(), "constant".into());
                m.insert("g_rad2_s2".into(), format!("{g:e}"));
            }
            KernelKind::Tabulated { times, .. } => {
                m.insert("kernel".into(), "tabulated".into());
                m.insert("kernel_points".into(), times.len().to_string());
            }
        }
        m.insert("offset_us".into(), format!("{}", self.offset * 1e6));
        m
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    let k = times.partition_point(|&x| x <= t);
    if k >= times.len() {
        return *values.last().expect("nonempty");
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let f = (t - t0) / (t1 - t0);
    values[k - 1] + f * (values[k] - values[k - 1])
}

/// β(t) on a uniform grid, normalized to β(0) = 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaTrajectory {
    times: Vec<f64>,
    beta: Vec<f64>,
    /// Internal step of the accepted solution, s.
    pub step: f64,
    pub refinements: usize,
    pub converged: bool,
    /// Largest change of β at the last halving.
    pub last_change: f64,
}

impl BetaTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Linear interpolation; clamps outside the range.
    pub fn at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.beta, t)
    }

    pub fn to_table(&self, kernel: &KernelSpec) -> Table {
        let mut meta = kernel.describe();
        meta.insert("method".into(), METHOD.into());
        meta.insert("step_us".into(), format!("{}", self.step * 1e6));
        meta.insert("refinements".into(), self.refinements.to_string());
        meta.insert("converged".into(), self.converged.to_string());
        Table {
            meta,
            columns: vec!["t_us".into(), "beta".into()],
            rows: self
                .times
                .iter()
                .zip(&self.beta)
                .map(|(t, b)| vec![t * 1e6, *b])
                .collect(),
        }
    }
}

/// Heun predictor-corrector with trapezoidal memory on [0, t_end], t_end = K·h.
fn integrate(kernel: &KernelSpec, t_end: f64, k_steps: usize) -> Vec<f64> {
    let h = t_end / k_steps as f64;
    let g: Vec<f64> = (0..=k_steps).map(|j| kernel.eval(j as f64 * h)).collect();
    let mut beta = Vec::with_capacity(k_steps + 1);
    beta.push(1.0);
    // memory integral with the last point's β supplied separately
    let memory = |beta: &[f64], k: usize, last: f64| -> f64 {
        if k == 0 {
            return 0.0;
        }
        let mut s = 0.5 * beta[0] * g[k] + 0.5 * last * g[0];
        for j in 1..k {
            s += beta[j] * g[k - j];
        }
        h * s
    };
    let mut f_k = 0.0;
    for k in 0..k_steps {
        let b = beta[k];
        let pred = b + h * f_k;
        let f_pred = -memory(&beta, k + 1, pred);
        let corr = b + 0.5 * h * (f_k + f_pred);
        beta.push(corr);
        f_k = -memory(&beta, k + 1, corr);
    }
    beta
}

/// One solve at a fixed step, sampled every `step` from 0 to `t_end`.
pub fn solve_fixed(kernel: &KernelSpec, t_end: f64, step: f64) -> Result<BetaTrajectory> {
    solve(kernel, t_end, step, 0)
}

/// Solves with step halving until β stops moving by more than 1e-6.
pub fn solve_beta(kernel: &KernelSpec, t_end: f64, step: f64) -> Result<BetaTrajectory> {
    solve(kernel, t_end, step, MAX_REFINEMENTS)
}

fn solve(kernel: &KernelSpec, t_end: f64, step: f64, max_refinements: usize) -> Result<BetaTrajectory> {
    if !(step > 0.0) || !(t_end > step) || !t_end.is_finite() {
        return Err(Error::param("need step > 0 and t_end > step"));
    }
    let span = t_end - kernel.offset;
    if span > kernel.horizon() * (1.0 + 1e-12) {
        return Err(Error::param(format!(
            "kernel table covers {:e} s but the solve needs {span:e} s",
            kernel.horizon()
        )));
    }
    let n_out = (t_end / step + 1e-9).floor() as usize;
    if n_out > MAX_GRID_STEPS {
        return Err(Error::param(format!(
            "step too small: {n_out} samples exceed the limit of {MAX_GRID_STEPS}"
        )));
    }
    let mut times: Vec<f64> = (0..=n_out).map(|k| k as f64 * step).collect();
    if t_end - times[n_out] > 1e-9 * step {
        times.push(t_end);
    }
    if span <= 0.0 {
        let beta = vec![1.0; times.len()];
        return Ok(BetaTrajectory {
            times,
            beta,
            step,
            refinements: 0,
            converged: true,
            last_change: 0.0,
        });
    }
    let mut k = ((span / step).ceil() as usize).max(1);
    if k > MAX_GRID_STEPS {
        return Err(Error::param(format!(
            "step too small: {k} steps exceed the limit of {MAX_GRID_STEPS}"
        )));
    }
    let mut sol = integrate(kernel, span, k);
    let mut refinements = 0;
    let mut last_change = f64::NAN;
    let mut converged = max_refinements == 0;
    while refinements < max_refinements {
        if 2 * k > MAX_GRID_STEPS {
            break;
        }
        let finer = integrate(kernel, span, 2 * k);
        // β(t_end) must settle, and so must every shared grid point before it
        last_change = sol
            .iter()
            .enumerate()
            .map(|(j, b)| (finer[2 * j] - b).abs())
            .fold(0.0, f64::max);
        k *= 2;
        sol = finer;
        refinements += 1;
        if last_change < REFINE_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            refinements,
            last_change,
        });
    }
    let h = span / k as f64;
    let grid: Vec<f64> = (0..=k).map(|j| j as f64 * h).collect();
    let beta = times
        .iter()
        .map(|&t| {
            if t <= kernel.offset {
                1.0
            } else {
                interpolate(&grid, &sol, t - kernel.offset)
            }
        })
        .collect();
    Ok(BetaTrajectory {
        times,
        beta,
        step: h,
        refinements,
        converged,
        last_change,
    })
}

/// Least-squares c in 1 − β(t) ≈ c·t² on t ∈ [0, 0.1/√M], offset ignored.
pub fn short_time_check(kernel: &KernelSpec) -> Result<f64> {
    let m = match kernel.kind {
        KernelKind::Gaussian { m, .. } => m,
        _ => return Err(Error::param("short-time check needs a gaussian kernel")),
    };
    let shifted = KernelSpec {
        kind: kernel.kind.clone(),
        offset: 0.0,
    };
    let t_end = 0.1 / m.sqrt();
    let traj = solve_beta(&shifted, t_end, t_end / 100.0)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (&t, &b) in traj.times().iter().zip(traj.beta()) {
        num += t * t * (1.0 - b);
        den += t.powi(4);
    }
    Ok(num / den)
}

/// Kernel computed from a cluster's own operators.
#[derive(Clone, Debug)]
pub struct MicroscopicKernel {
    pub kernel: KernelSpec,
    /// G₁(0) before any sign change.
    pub raw_g0: f64,
    /// Set when the literal ordering gave G₁(0) < 0 and the sign was flipped.
    pub sign_flipped: bool,
    /// max |Im G₁| / |G₁(0)|
    pub max_imaginary: f64,
    /// max |G₁(τ) − G₁(−τ)| / |G₁(0)|
    pub max_asymmetry: f64,
}

/// G₁(τ) = (9/64)/⟨H₂H₋₂⟩ · Σ_pairs ⟨[H₂ᵢⱼ, H₋₂]·e^{iH′_dτ/2}·[H₋₂ᵢⱼ, H₂]·e^{−iH′_dτ/2}⟩,
/// ⟨·⟩ = Tr(·)/2^N, evaluated on `tau_grid` (s, starting at 0).
pub fn microscopic_kernel(system: &SpinSystem, tau_grid: &[f64], offset: f64) -> Result<MicroscopicKernel> {
    if system.n_sites() > 8 {
        return Err(Error::SiteCountOutOfRange {
            n: system.n_sites(),
            max: 8,
        });
    }
    let dim = system.dim() as f64;
    let h2 = system.nonsecular().h2.matrix();
    let hm2 = system.nonsecular().hm2.matrix();
    let norm = trace_product(h2, hm2).re / dim;
    if !(norm > 0.0) {
        return Err(Error::DegenerateKernel("<H2 H-2> vanishes (no couplings)".into()));
    }
    let spectral = system.hd_spectral();
    let n = system.n_sites();
    let d = system.dim();
    let mut w = CMat::zeros(d, d);
    for (i, j, a) in system.cluster().pairs() {
        let p = pair_raising(n, i, j, a)?;
        let pm = p.matrix().adjoint();
        let c = spectral.to_eigenbasis(&commutator(p.matrix(), hm2));
        let dd = spectral.to_eigenbasis(&commutator(&pm, h2));
        for m in 0..d {
            for k in 0..d {
                w[(m, k)] += c[(m, k)] * dd[(k, m)];
            }
        }
    }
    let lam = spectral.values();
    let scale = 9.0 / 64.0 / norm / dim;
    let eval = |tau: f64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..d {
            for k in 0..d {
                acc += w[(m, k)] * Complex64::from_polar(1.0, 0.5 * (lam[k] - lam[m]) * tau);
            }
        }
        acc * scale
    };
    let raw: Vec<Complex64> = tau_grid.iter().map(|&t| eval(t)).collect();
    let raw_g0 = eval(0.0).re;
    if raw_g0 == 0.0 {
        return Err(Error::DegenerateKernel("G1(0) vanishes".into()));
    }
    let mut max_imaginary: f64 = 0.0;
    let mut max_asymmetry: f64 = 0.0;
    for (&t, v) in tau_grid.iter().zip(&raw) {
        max_imaginary = max_imaginary.max(v.im.abs() / raw_g0.abs());
        max_asymmetry = max_asymmetry.max((v.re - eval(-t).re).abs() / raw_g0.abs());
    }
    let sign_flipped = raw_g0 < 0.0;
    let sign = if sign_flipped { -1.0 } else { 1.0 };
    let values = raw.iter().map(|v| sign * v.re).collect();
    Ok(MicroscopicKernel {
        kernel: KernelSpec::tabulated(tau_grid.to_vec(), values, offset)?,
        raw_g0,
        sign_flipped,
        max_imaginary,
        max_asymmetry,
    })
}

/// M in |g(τ)/g(0)| ≈ exp(−½Mτ²), fitted on ln over the initial decay, stopping at
/// 10% or at the first minimum.
pub fn fit_gaussian_decay(times: &[f64], values: &[f64]) -> Result<f64> {
    let g0 = values.first().copied().unwrap_or(0.0);
    if times.len() != values.len() || g0 == 0.0 {
        return Err(Error::DegenerateCurve("need a nonzero first value".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    let mut prev = 1.0;
    for (&t, &v) in times.iter().zip(values).skip(1) {
        let r = (v / g0).abs();
        // finite clusters revive; only the first monotone descent is fitted
        if r < 0.1 || r > prev {
            break;
        }
        prev = r;
        num += t * t * r.ln();
        den += t.powi(4);
    }
    if den == 0.0 {
        return Err(Error::DegenerateCurve("no points in the initial decay".into()));
    }
    let m = -2.0 * num / den;
    if !(m > 0.0) {
        return Err(Error::DegenerateCurve("kernel does not decay".into()));
    }
    Ok(m)
}
