//! Spin-1/2 operator algebra on the 2^N product basis.
//!
//! Site 0 is the most significant bit of a basis index and bit value 0 is
//! spin up (I_z = +1/2), so index 0 is |↑↑…↑⟩.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::SpinCluster;
use crate::linalg::{commutator, hermiticity_defect, re, CMat, Spectral};

/// Largest cluster the dense builders accept.
pub const MAX_SITES: usize = 12;

/// Relative Hermiticity tolerance for builder outputs.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            _ => Err(Error::param(format!("unknown axis `{s}`"))),
        }
    }
}

/// A labeled dense matrix on N spins.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    label: String,
    n_sites: usize,
    matrix: CMat,
}

impl Operator {
    pub fn new(label: impl Into<String>, n_sites: usize, matrix: CMat) -> Result<Self> {
        check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        Ok(Operator {
            label: label.into(),
            n_sites,
            matrix,
        })
    }

    pub fn zero(label: impl Into<String>, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        Ok(Operator {
            label: label.into(),
            n_sites,
            matrix: CMat::zeros(dim, dim),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Real linear combination Σ c_k·op_k; all terms must share N.
    pub fn combine(label: impl Into<String>, terms: &[(f64, &Operator)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::param("empty linear combination"))?;
        let n = first.1.n_sites;
        let dim = first.1.dim();
        let mut m = CMat::zeros(dim, dim);
        for (c, op) in terms {
            if op.n_sites != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: op.n_sites,
                });
            }
            m += &op.matrix * re(*c);
        }
        Operator::new(label, n, m)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    /// Errors unless ‖M − M†‖_F ≤ tol·‖M‖_F.
    pub fn ensure_hermitian(&self, tol: f64) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect <= tol * self.norm().max(f64::MIN_POSITIVE) {
            Ok(())
        } else {
            Err(Error::NonHermitian {
                label: self.label.clone(),
                defect,
            })
        }
    }

    pub fn trace(&self) -> Complex64 {
        crate::linalg::trace(&self.matrix)
    }
}

fn check_sites(n: usize) -> Result<()> {
    if (1..=MAX_SITES).contains(&n) {
        Ok(())
    } else {
        Err(Error::SiteCountOutOfRange { n, max: MAX_SITES })
    }
}

#[inline]
fn bit(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

#[inline]
fn sz(state: usize, n: usize, site: usize) -> f64 {
    if state & bit(n, site) == 0 {
        0.5
    } else {
        -0.5
    }
}

/// I_axis = Σ_i I_axis,i.
pub fn collective(axis: Axis, n: usize) -> Result<Operator> {
    check_sites(n)?;
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    for s in 0..dim {
        match axis {
            Axis::Z => {
                m[(s, s)] = re((0..n).map(|i| sz(s, n, i)).sum());
            }
            Axis::X | Axis::Y => {
                for i in 0..n {
                    let t = s ^ bit(n, i);
                    // row t, column s: flipping site i of |s⟩
                    let v = match axis {
                        Axis::X => re(0.5),
                        _ if s & bit(n, i) != 0 => Complex64::new(0.0, -0.5), // ⟨↑|I_y|↓⟩
                        _ => Complex64::new(0.0, 0.5),
                    };
                    m[(t, s)] = v;
                }
            }
        }
    }
    Operator::new(format!("I{}", axis.name()), n, m)
}

fn cluster_sites(cluster: &SpinCluster) -> Result<usize> {
    let n = cluster.len();
    check_sites(n)?;
    Ok(n)
}

/// H′_d = Σ_{i<j} a_ij [I_zi I_zj − ¼(I₊ᵢI₋ⱼ + I₋ᵢI₊ⱼ)].
pub fn secular_dipolar(cluster: &SpinCluster) -> Result<Operator> {
    let n = cluster_sites(cluster)?;
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    for (i, j, a) in cluster.pairs() {
        let (bi, bj) = (bit(n, i), bit(n, j));
        for s in 0..dim {
            m[(s, s)] += re(a * sz(s, n, i) * sz(s, n, j));
            if ((s & bi) == 0) != ((s & bj) == 0) {
                m[(s ^ bi ^ bj, s)] += re(-0.25 * a);
            }
        }
    }
    Operator::new("Hd", n, m)
}

/// a·I₊ᵢI₊ⱼ for a single pair.
pub fn pair_raising(n: usize, i: usize, j: usize, a: f64) -> Result<Operator> {
    check_sites(n)?;
    if i >= n || j >= n || i == j {
        return Err(Error::param(format!("bad pair ({i}, {j}) for {n} sites")));
    }
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    add_pair_raising(&mut m, n, i, j, a);
    Operator::new(format!("H2[{i},{j}]"), n, m)
}

fn add_pair_raising(m: &mut CMat, n: usize, i: usize, j: usize, a: f64) {
    let mask = bit(n, i) | bit(n, j);
    for s in 0..(1usize << n) {
        if s & mask == mask {
            m[(s ^ mask, s)] += re(a);
        }
    }
}

/// Double-quantum parts of the rotated dipolar interaction.
#[derive(Clone, Debug)]
pub struct NonSecular {
    /// H_d^(2) = Σ a_ij I₊ᵢI₊ⱼ
    pub h2: Operator,
    /// H_d^(−2) = H_d^(2)†
    pub hm2: Operator,
    /// P = H_d^(2) + H_d^(−2)
    pub p: Operator,
}

pub fn nonsecular_pair_raising(cluster: &SpinCluster) -> Result<NonSecular> {
    let n = cluster_sites(cluster)?;
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    for (i, j, a) in cluster.pairs() {
        add_pair_raising(&mut m, n, i, j, a);
    }
    let adj = m.adjoint();
    let p = &m + &adj;
    Ok(NonSecular {
        h2: Operator::new("H2", n, m)?,
        hm2: Operator::new("Hm2", n, adj)?,
        p: Operator::new("P", n, p)?,
    })
}

/// Q = Σ_{i<j} a_ij [I_zi(I₊ⱼ + I₋ⱼ) + I_zj(I₊ᵢ + I₋ᵢ)].
pub fn operator_q(cluster: &SpinCluster) -> Result<Operator> {
    let n = cluster_sites(cluster)?;
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    for (i, j, a) in cluster.pairs() {
        for s in 0..dim {
            m[(s ^ bit(n, j), s)] += re(a * sz(s, n, i));
            m[(s ^ bit(n, i), s)] += re(a * sz(s, n, j));
        }
    }
    Operator::new("Q", n, m)
}

/// R†·op·R with R = exp(−i·angle·I_axis).
///
/// This is the change of frame for an operator: rotate(I_x, y, π/2) = I_z,
/// rotate(I_z, y, π/2) = −I_x, and rotate(H′_d, y, θ) obeys the tilt
/// decomposition exactly.
pub fn rotate(op: &Operator, axis: Axis, angle: f64) -> Result<Operator> {
    let r = rotation(axis, angle, op.n_sites)?;
    let m = r.adjoint() * op.matrix() * &r;
    Operator::new(op.label.clone(), op.n_sites, m)
}

/// exp(−i·angle·I_axis).
pub fn rotation(axis: Axis, angle: f64, n: usize) -> Result<CMat> {
    let generator = collective(axis, n)?;
    Ok(match axis {
        Axis::Z => {
            let d = generator
                .matrix()
                .diagonal()
                .map(|v| Complex64::from_polar(1.0, -v.re * angle));
            CMat::from_diagonal(&d)
        }
        _ => Spectral::new(generator.matrix()).propagator(angle),
    })
}

/// Outcome of checking rotate(H′_d, y, θ) against its closed-form decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TiltReport {
    pub theta: f64,
    /// Coefficients of (H′_d, P, Q).
    pub coefficients: [f64; 3],
    /// Frobenius norm of the difference.
    pub residual: f64,
    pub hd_norm: f64,
}

impl TiltReport {
    pub fn relative_residual(&self) -> f64 {
        if self.hd_norm == 0.0 {
            self.residual
        } else {
            self.residual / self.hd_norm
        }
    }
}

pub fn tilt_coefficients(theta: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [0.5 * (3.0 * c * c - 1.0), 0.375 * s * s, -0.75 * s * c]
}

/// rotate(H′_d, y, θ) versus ½(3cos²θ − 1)H′_d + (3/8)sin²θ·P − (3/4)sinθcosθ·Q.
pub fn tilt_decompose(hd: &Operator, theta: f64, cluster: &SpinCluster) -> Result<TiltReport> {
    let ns = nonsecular_pair_raising(cluster)?;
    let q = operator_q(cluster)?;
    if hd.n_sites() != cluster.len() {
        return Err(Error::DimensionMismatch {
            expected: cluster.len(),
            found: hd.n_sites(),
        });
    }
    let rotated = rotate(hd, Axis::Y, theta)?;
    let k = tilt_coefficients(theta);
    let predicted = hd.matrix() * re(k[0]) + ns.p.matrix() * re(k[1]) + q.matrix() * re(k[2]);
    Ok(TiltReport {
        theta,
        coefficients: k,
        residual: (rotated.matrix() - predicted).norm(),
        hd_norm: hd.norm(),
    })
}

/// First-order average-Hamiltonian terms for the burst ω₁I_z − ½H′_d + (3/8)P.
#[derive(Clone, Debug)]
pub struct MagnusCorrection {
    /// (3/8)²[H_d^(2), H_d^(−2)]/(2ω₁)
    pub h1: Operator,
    /// (3/8)(1/2)[H′_d, H_d^(−2) − H_d^(2)]/(2ω₁)
    pub h2: Operator,
}

impl MagnusCorrection {
    pub fn from_parts(hd: &Operator, ns: &NonSecular, omega1: f64) -> Result<Self> {
        if omega1 == 0.0 || !omega1.is_finite() {
            return Err(Error::param("omega1 must be nonzero and finite"));
        }
        let n = hd.n_sites();
        let k1 = 0.375 * 0.375 / (2.0 * omega1);
        let h1 = commutator(ns.h2.matrix(), ns.hm2.matrix()) * re(k1);
        let k2 = 0.375 * 0.5 / (2.0 * omega1);
        let diff = ns.hm2.matrix() - ns.h2.matrix();
        let h2 = commutator(hd.matrix(), &diff) * re(k2);
        Ok(MagnusCorrection {
            h1: Operator::new("H1(1)", n, h1)?,
            h2: Operator::new("H2(1)", n, h2)?,
        })
    }

    /// H₁⁽¹⁾ + H₂⁽¹⁾.
    pub fn total(&self) -> Operator {
        let m = self.h1.matrix() + self.h2.matrix();
        Operator::new("F1", self.h1.n_sites(), m).expect("same shape")
    }
}

/// Both terms change sign with ω₁, so a negative ω₁ gives the opposite-phase burst.
pub fn magnus_first_correction(cluster: &SpinCluster, omega1: f64) -> Result<MagnusCorrection> {
    let hd = secular_dipolar(cluster)?;
    let ns = nonsecular_pair_raising(cluster)?;
    MagnusCorrection::from_parts(&hd, &ns, omega1)
}
