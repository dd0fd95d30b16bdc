//! Finite ¹⁹F clusters on the simple-cubic fluorine sublattice of CaF₂,
//! secular dipolar couplings, Van Vleck second moments and local fields.
//!
//! All energies are angular frequencies (rad/s, ħ = 1). Positions are kept in
//! units of the nearest-neighbour F–F spacing and converted to metres only
//! when a coupling is evaluated.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::trace_product;
use crate::operators::Operator;

/// ¹⁹F gyromagnetic ratio, rad·s⁻¹·G⁻¹.
pub const GAMMA_F19: f64 = 2.5166e4;
/// Nearest-neighbour F–F distance in CaF₂ (half the cubic cell edge), m.
pub const FLUORINE_SPACING: f64 = 2.7315e-10;
/// Second moment the default prefactor is calibrated against ([100]), s⁻².
pub const CALIBRATION_M2_100: f64 = 2.55e10;
/// Radius (in lattice constants) of the lattice sum used for calibration.
pub const CALIBRATION_RADIUS: f64 = 16.0;
/// Default truncation radius for lattice sums.
pub const DEFAULT_SUM_RADIUS: f64 = 3.0;
/// Default cluster size for dynamics.
pub const DEFAULT_MAX_SITES: usize = 8;

/// (3/4)·I(I+1) for I = 1/2.
const VAN_VLECK_FACTOR: f64 = 9.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    /// rad·s⁻¹·G⁻¹
    pub gamma: f64,
    /// m
    pub lattice_constant: f64,
    /// D in a = D·(1 − 3cos²θ)/r³, rad·s⁻¹·m³.
    pub prefactor: f64,
}

impl PhysicalConstants {
    /// Chooses the prefactor so the [100] lattice sum at `CALIBRATION_RADIUS`
    /// equals `target_m2_100`.
    pub fn calibrated(gamma: f64, lattice_constant: f64, target_m2_100: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(lattice_constant > 0.0) || !(target_m2_100 > 0.0) {
            return Err(Error::param("gamma, lattice constant and target M2 must be positive"));
        }
        let s = dimensionless_lattice_sum(&Orientation::hundred(), CALIBRATION_RADIUS);
        let prefactor = (target_m2_100 / (VAN_VLECK_FACTOR * s)).sqrt() * lattice_constant.powi(3);
        Ok(PhysicalConstants {
            gamma,
            lattice_constant,
            prefactor,
        })
    }

    /// ω/γ in Gauss.
    pub fn to_gauss(&self, omega: f64) -> f64 {
        omega / self.gamma
    }

    pub fn from_gauss(&self, gauss: f64) -> f64 {
        gauss * self.gamma
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        static DEFAULT: OnceLock<PhysicalConstants> = OnceLock::new();
        *DEFAULT.get_or_init(|| {
            PhysicalConstants::calibrated(GAMMA_F19, FLUORINE_SPACING, CALIBRATION_M2_100)
                .expect("default constants are valid")
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OrientationLabel {
    Hundred,
    HundredTen,
    HundredEleven,
    Custom,
}

/// Direction of the static field in crystal axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Orientation {
    direction: [f64; 3],
    label: OrientationLabel,
}

/// Values quoted for the CaF₂ sample at the three principal orientations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportedSample {
    /// s⁻²
    pub second_moment: f64,
    /// ω_L/γ, G
    pub local_field_gauss: f64,
}

impl Orientation {
    pub fn new(direction: [f64; 3]) -> Result<Self> {
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::param("orientation vector must be nonzero and finite"));
        }
        let unit = direction.map(|x| x / norm);
        let label = classify(unit);
        Ok(Orientation { direction: unit, label })
    }

    pub fn hundred() -> Self {
        Orientation {
            direction: [1.0, 0.0, 0.0],
            label: OrientationLabel::Hundred,
        }
    }

    pub fn hundred_ten() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Orientation {
            direction: [s, s, 0.0],
            label: OrientationLabel::HundredTen,
        }
    }

    pub fn hundred_eleven() -> Self {
        let s = 1.0 / 3f64.sqrt();
        Orientation {
            direction: [s, s, s],
            label: OrientationLabel::HundredEleven,
        }
    }

    pub fn principal() -> [Orientation; 3] {
        [Self::hundred(), Self::hundred_ten(), Self::hundred_eleven()]
    }

    pub fn direction(&self) -> [f64; 3] {
        self.direction
    }

    pub fn label(&self) -> OrientationLabel {
        self.label
    }

    pub fn reported(&self) -> Option<ReportedSample> {
        let (second_moment, local_field_gauss) = match self.label {
            OrientationLabel::Hundred => (2.55e10, 2.01),
            OrientationLabel::HundredTen => (0.99e10, 1.25),
            OrientationLabel::HundredEleven => (0.50e10, 0.88),
            OrientationLabel::Custom => return None,
        };
        Some(ReportedSample {
            second_moment,
            local_field_gauss,
        })
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        loop {
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if n2 > 1e-2 && n2 <= 1.0 {
                return Orientation::new(v).expect("nonzero");
            }
        }
    }
}

fn classify(unit: [f64; 3]) -> OrientationLabel {
    let close = |o: Orientation| {
        let d = o.direction;
        (unit[0] - d[0]).abs() < 1e-12 && (unit[1] - d[1]).abs() < 1e-12 && (unit[2] - d[2]).abs() < 1e-12
    };
    if close(Orientation::hundred()) {
        OrientationLabel::Hundred
    } else if close(Orientation::hundred_ten()) {
        OrientationLabel::HundredTen
    } else if close(Orientation::hundred_eleven()) {
        OrientationLabel::HundredEleven
    } else {
        OrientationLabel::Custom
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label {
            OrientationLabel::Hundred => write!(f, "[100]"),
            OrientationLabel::HundredTen => write!(f, "[110]"),
            OrientationLabel::HundredEleven => write!(f, "[111]"),
            OrientationLabel::Custom => {
                let [x, y, z] = self.direction;
                write!(f, "{x},{y},{z}")
            }
        }
    }
}

impl FromStr for Orientation {
    type Err = Error;

    /// Accepts `100`, `[110]`, `111` or a comma-separated vector `x,y,z`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('[').trim_end_matches(']');
        match t {
            "100" => return Ok(Orientation::hundred()),
            "110" => return Ok(Orientation::hundred_ten()),
            "111" => return Ok(Orientation::hundred_eleven()),
            _ => {}
        }
        let parts: Vec<&str> = t.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::param(format!("unrecognized orientation `{s}`")));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::param(format!("bad orientation component `{p}`")))?;
        }
        Orientation::new(v)
    }
}

/// Secular dipolar coefficient a = D·(1 − 3cos²θ)/r³ for a separation in metres.
pub fn coupling(r_vec: [f64; 3], field_dir: [f64; 3], constants: &PhysicalConstants) -> Result<f64> {
    let r2: f64 = r_vec.iter().map(|x| x * x).sum();
    if r2 == 0.0 {
        return Err(Error::CoincidentSites);
    }
    let r = r2.sqrt();
    let cos = (r_vec[0] * field_dir[0] + r_vec[1] * field_dir[1] + r_vec[2] * field_dir[2]) / r;
    Ok(constants.prefactor * (1.0 - 3.0 * cos * cos) / (r2 * r))
}

/// Positions (lattice units), orientation and the coupling table they imply.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinCluster {
    positions: Vec<[f64; 3]>,
    orientation: Orientation,
    constants: PhysicalConstants,
    couplings: Vec<Vec<f64>>,
}

impl SpinCluster {
    pub fn from_positions(
        positions: Vec<[f64; 3]>,
        orientation: Orientation,
        constants: PhysicalConstants,
    ) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::param("a cluster needs at least 2 sites"));
        }
        let couplings = coupling_table(&positions, &orientation, &constants)?;
        Ok(SpinCluster {
            positions,
            orientation,
            constants,
            couplings,
        })
    }

    /// `n` sites scattered in a 2×2×2 box with minimum separation 0.6.
    pub fn random(n: usize, rng: &mut impl Rng, constants: PhysicalConstants) -> Result<Self> {
        let mut positions: Vec<[f64; 3]> = Vec::with_capacity(n);
        while positions.len() < n {
            let p = [
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
            ];
            let ok = positions.iter().all(|q| {
                let d2: f64 = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum();
                d2 > 0.36
            });
            if ok {
                positions.push(p);
            }
        }
        Self::from_positions(positions, Orientation::random(rng), constants)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    /// a_ij, rad/s.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i][j]
    }

    pub fn couplings(&self) -> &[Vec<f64>] {
        &self.couplings
    }

    /// (i, j, a_ij) for i < j.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, self.couplings[i][j])))
    }

    /// Same geometry with every coupling multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let mut constants = self.constants;
        constants.prefactor *= lambda;
        let couplings =
            coupling_table(&self.positions, &self.orientation, &constants).expect("positions already validated");
        SpinCluster {
            positions: self.positions.clone(),
            orientation: self.orientation,
            constants,
            couplings,
        }
    }

    /// Short hex digest of positions, orientation and coupling bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.positions {
            for x in p {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        for x in self.orientation.direction {
            h.update(x.to_bits().to_le_bytes());
        }
        for row in &self.couplings {
            for a in row {
                h.update(a.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn coupling_table(
    positions: &[[f64; 3]],
    orientation: &Orientation,
    constants: &PhysicalConstants,
) -> Result<Vec<Vec<f64>>> {
    let n = positions.len();
    let d = constants.lattice_constant;
    let mut table = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = [
                (positions[j][0] - positions[i][0]) * d,
                (positions[j][1] - positions[i][1]) * d,
                (positions[j][2] - positions[i][2]) * d,
            ];
            let a = coupling(r, orientation.direction, constants)?;
            table[i][j] = a;
            table[j][i] = a;
        }
    }
    Ok(table)
}

/// Integer lattice points within `radius`, ordered by distance then
/// lexicographically.
fn shell_points(radius: f64) -> Vec<[i64; 3]> {
    let r = radius.floor() as i64;
    let limit = radius * radius + 1e-9;
    let mut pts = Vec::new();
    for x in -r..=r {
        for y in -r..=r {
            for z in -r..=r {
                if ((x * x + y * y + z * z) as f64) <= limit {
                    pts.push([x, y, z]);
                }
            }
        }
    }
    pts.sort_by_key(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2], *p));
    pts
}

/// Sites of the simple-cubic sublattice within `radius` of the origin,
/// truncated to `max_sites` nearest.
pub fn build_cluster(
    orientation: Orientation,
    radius: f64,
    max_sites: usize,
    constants: &PhysicalConstants,
) -> Result<SpinCluster> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::param("radius must be positive"));
    }
    if max_sites < 2 {
        return Err(Error::param("max_sites must be at least 2"));
    }
    let mut pts = shell_points(radius);
    if pts.len() < 2 {
        return Err(Error::TooFewSites { radius });
    }
    pts.truncate(max_sites);
    let positions = pts.iter().map(|p| p.map(|c| c as f64)).collect();
    SpinCluster::from_positions(positions, orientation, *constants)
}

/// Van Vleck like-spin second moment (9/16)·(1/N)·Σ_{j≠k} a_jk².
pub fn second_moment(cluster: &SpinCluster) -> f64 {
    let n = cluster.len() as f64;
    let sum: f64 = cluster.pairs().map(|(_, _, a)| 2.0 * a * a).sum();
    VAN_VLECK_FACTOR * sum / n
}

/// ω_L = (M₂/3)^{1/2}.
pub fn local_field(cluster: &SpinCluster) -> f64 {
    (second_moment(cluster) / 3.0).sqrt()
}

/// ω_L from the trace definition {Tr(H′_d²)/Tr(I_z²)}^{1/2}.
pub fn local_field_trace(cluster: &SpinCluster, hd: &Operator) -> Result<f64> {
    let n = cluster.len();
    if hd.n_sites() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: hd.n_sites(),
        });
    }
    let tr_h2 = trace_product(hd.matrix(), hd.matrix()).re;
    let tr_iz2 = n as f64 * 2f64.powi(n as i32 - 2);
    Ok((tr_h2 / tr_iz2).max(0.0).sqrt())
}

/// Σ_{k≠0} (1 − 3cos²θ_k)²/r_k⁶ about one site, r in lattice units.
pub fn dimensionless_lattice_sum(orientation: &Orientation, radius: f64) -> f64 {
    let d = orientation.direction;
    shell_points(radius)
        .into_iter()
        .skip(1)
        .map(|p| {
            let v = p.map(|c| c as f64);
            let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let cos2 = (v[0] * d[0] + v[1] * d[1] + v[2] * d[2]).powi(2) / r2;
            (1.0 - 3.0 * cos2).powi(2) / (r2 * r2 * r2)
        })
        .sum()
}

/// Second moment of a site in the bulk crystal, (9/16)·Σ_k a_0k², truncated at `radius`.
pub fn lattice_second_moment(orientation: &Orientation, radius: f64, constants: &PhysicalConstants) -> f64 {
    let scale = constants.prefactor / constants.lattice_constant.powi(3);
    VAN_VLECK_FACTOR * scale * scale * dimensionless_lattice_sum(orientation, radius)
}
