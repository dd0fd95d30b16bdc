use std::f64::consts::PI;

use super::{BurstLength, InitKind, Observable, Phase, PulseAxis, PulseProgram, Statement};
use crate::error::{Error, Result};
use crate::operators::Axis;

pub const BUILTIN_NAMES: [&str; 3] = ["seq1", "seq2", "rpw"];

/// Timing shared by the built-in sequences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Acquisition {
    /// Burst amplitude ω₁/γ, G.
    pub gauss: f64,
    /// γ, rad·s⁻¹·G⁻¹, to convert half-cycles into delays.
    pub gamma: f64,
    /// Half width of the window around the expected echo, μs.
    pub half_width_us: f64,
    pub step_us: f64,
}

impl Acquisition {
    fn half_cycle_us(&self) -> f64 {
        PI / (self.gamma * self.gauss) * 1e6
    }

    fn check(&self, total_half_cycles: u64) -> Result<u64> {
        if !(self.gauss > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::param("burst amplitude and gamma must be positive"));
        }
        if !(self.half_width_us > 0.0) || !(self.step_us > 0.0) {
            return Err(Error::param("acquisition window and step must be positive"));
        }
        if !total_half_cycles.is_multiple_of(2) {
            let hc = self.half_cycle_us() * 1e-6;
            return Err(Error::NotHalfCycleMultiple {
                t1: total_half_cycles as f64 * hc,
                half_cycle: hc,
            });
        }
        Ok(total_half_cycles / 2)
    }

    fn bursts(&self, per_phase: u64) -> [Statement; 2] {
        [Phase::Plus, Phase::Minus].map(|phase| Statement::Burst {
            phase,
            gauss: self.gauss,
            length: BurstLength::HalfCycles(per_phase),
        })
    }
}

fn pulse_y(degrees: f64) -> Statement {
    Statement::Pulse {
        degrees,
        axis: PulseAxis {
            axis: Axis::Y,
            negative: false,
        },
    }
}

/// Dipolar-order echo: 90°_y, burst t₁ in two opposite phases, free
/// evolution t₁/2, 45°_y, read I_y.
pub fn seq1(total_half_cycles: u64, acq: &Acquisition) -> Result<PulseProgram> {
    let m = acq.check(total_half_cycles)?;
    let mut s = vec![Statement::Init(InitKind::Dipolar), pulse_y(90.0)];
    if m > 0 {
        s.extend(acq.bursts(m));
        s.push(Statement::Delay {
            micros: m as f64 * acq.half_cycle_us(),
        });
    }
    s.push(pulse_y(45.0));
    s.push(Statement::Acquire {
        observable: Observable::Iy,
        window_us: acq.half_width_us,
        step_us: acq.step_us,
    });
    PulseProgram::new(s)
}

/// Q echo: start from the post-45° state, burst t₁, read I_y around (3/2)t₁.
pub fn seq2(total_half_cycles: u64, acq: &Acquisition) -> Result<PulseProgram> {
    let m = acq.check(total_half_cycles)?;
    let mut s = vec![Statement::Init(InitKind::Seq2)];
    let free = m as f64 * acq.half_cycle_us();
    let lead = (free - acq.half_width_us).max(0.0);
    if m > 0 {
        s.extend(acq.bursts(m));
        if lead > 0.0 {
            s.push(Statement::Delay { micros: lead });
        }
    }
    s.push(Statement::Acquire {
        observable: Observable::Iy,
        window_us: free + acq.half_width_us - lead,
        step_us: acq.step_us,
    });
    PulseProgram::new(s)
}

/// Free-induction magic echo: FID for τ = t₁/2, burst t₁, read I_x.
pub fn rpw(total_half_cycles: u64, acq: &Acquisition) -> Result<PulseProgram> {
    let m = acq.check(total_half_cycles)?;
    if m == 0 {
        return Err(Error::param("rpw echo needs a positive free-evolution time"));
    }
    let mut s = vec![
        Statement::Init(InitKind::Ix),
        Statement::Acquire {
            observable: Observable::Ix,
            window_us: m as f64 * acq.half_cycle_us(),
            step_us: acq.step_us,
        },
    ];
    s.extend(acq.bursts(m));
    s.push(Statement::Acquire {
        observable: Observable::Ix,
        window_us: acq.half_width_us,
        step_us: acq.step_us,
    });
    PulseProgram::new(s)
}

pub fn builtin(name: &str, total_half_cycles: u64, acq: &Acquisition) -> Result<PulseProgram> {
    match name {
        "seq1" => seq1(total_half_cycles, acq),
        "seq2" => seq2(total_half_cycles, acq),
        "rpw" => rpw(total_half_cycles, acq),
        _ => Err(Error::param(format!(
            "unknown builtin `{name}` (expected one of {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acq() -> Acquisition {
        Acquisition {
            gauss: 10.0,
            gamma: 1e5 * PI,
            half_width_us: 5.0,
            step_us: 0.25,
        }
    }

    // half-cycle = π/(γ·G) = 1 μs with the numbers above
    #[test]
    fn seq1_text() {
        assert_eq!(
            seq1(8, &acq()).unwrap().to_string(),
            "init dipolar\npulse 90 y\nburst + 10G 4hc\nburst - 10G 4hc\ndelay 4us\npulse 45 y\nacquire Iy for 5us step 0.25us\n"
        );
        assert_eq!(
            seq1(0, &acq()).unwrap().to_string(),
            "init dipolar\npulse 90 y\npulse 45 y\nacquire Iy for 5us step 0.25us\n"
        );
    }

    #[test]
    fn seq2_window_tracks_three_halves_t1() {
        assert_eq!(
            seq2(20, &acq()).unwrap().to_string(),
            "init seq2\nburst + 10G 10hc\nburst - 10G 10hc\ndelay 5us\nacquire Iy for 10us step 0.25us\n"
        );
        assert_eq!(
            seq2(4, &acq()).unwrap().to_string(),
            "init seq2\nburst + 10G 2hc\nburst - 10G 2hc\nacquire Iy for 7us step 0.25us\n"
        );
    }

    #[test]
    fn rpw_text() {
        assert_eq!(
            rpw(6, &acq()).unwrap().to_string(),
            "init ix\nacquire Ix for 3us step 0.25us\nburst + 10G 3hc\nburst - 10G 3hc\nacquire Ix for 5us step 0.25us\n"
        );
        assert!(rpw(0, &acq()).is_err());
    }

    #[test]
    fn odd_half_cycles_rejected() {
        assert!(matches!(seq1(3, &acq()), Err(Error::NotHalfCycleMultiple { .. })));
        assert!(builtin("seq3", 2, &acq()).is_err());
    }
}
