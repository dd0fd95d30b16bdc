use std::f64::consts::PI;

use super::{BurstLength, InitKind, Observable, PulseProgram, Statement};
use crate::error::{Error, Result};
use crate::lattice::SpinCluster;
use crate::operators::Axis;

/// Hamiltonian a segment evolves under.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Generator {
    /// H′_d
    Secular,
    /// ω₁I_z − ½H′_d + (3/8)P, ω₁ signed by the burst phase.
    Tilted { omega1: f64 },
    /// −½H′_d
    IdealReversal,
}

impl Generator {
    pub fn label(&self) -> String {
        match self {
            Generator::Secular => "Hd".into(),
            Generator::Tilted { omega1 } => format!("{omega1:+e}*Iz-Hd/2+3P/8"),
            Generator::IdealReversal => "-Hd/2".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segment {
    Rotate {
        axis: Axis,
        angle: f64,
    },
    Evolve {
        generator: Generator,
        duration: f64,
        /// Set when the duration was given as n·π/ω₁.
        half_cycles: Option<u64>,
    },
    Acquire {
        observable: Observable,
        window: f64,
        step: f64,
    },
}

/// Executable form of a program, all times in seconds and frequencies in rad/s.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationPlan {
    pub initial: InitKind,
    pub segments: Vec<Segment>,
    pub n_sites: usize,
    pub ideal_reversal: bool,
}

impl PropagationPlan {
    pub fn empty(initial: InitKind, n_sites: usize) -> Self {
        PropagationPlan {
            initial,
            segments: Vec::new(),
            n_sites,
            ideal_reversal: false,
        }
    }

    /// Sum of evolution and acquisition times.
    pub fn total_duration(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match *s {
                Segment::Evolve { duration, .. } => duration,
                Segment::Acquire { window, .. } => window,
                Segment::Rotate { .. } => 0.0,
            })
            .sum()
    }
}

/// Lowers a program for `cluster`. Bursts become the tilted-frame Hamiltonian,
/// or −½H′_d when `ideal_reversal` is set; delays and acquisitions run under H′_d.
pub fn compile(program: &PulseProgram, cluster: &SpinCluster, ideal_reversal: bool) -> Result<PropagationPlan> {
    let gamma = cluster.constants().gamma;
    let mut segments = Vec::with_capacity(program.statements().len());
    for (idx, stmt) in program.statements().iter().enumerate().skip(1) {
        let seg = match *stmt {
            Statement::Init(_) => unreachable!("validated by PulseProgram"),
            Statement::Pulse { degrees, axis } => {
                let sign = if axis.negative { -1.0 } else { 1.0 };
                Segment::Rotate {
                    axis: axis.axis,
                    angle: sign * degrees.to_radians(),
                }
            }
            Statement::Burst { phase, gauss, length } => {
                if !(gauss > 0.0) {
                    return Err(Error::param(format!(
                        "statement {}: burst amplitude must be positive, got {gauss} G",
                        idx + 1
                    )));
                }
                let omega1 = gamma * gauss;
                let (duration, half_cycles) = match length {
                    BurstLength::HalfCycles(n) => (n as f64 * PI / omega1, Some(n)),
                    BurstLength::Micros(us) => (us / 1e6, None),
                };
                let generator = if ideal_reversal {
                    Generator::IdealReversal
                } else {
                    Generator::Tilted {
                        omega1: phase.sign() * omega1,
                    }
                };
                Segment::Evolve {
                    generator,
                    duration,
                    half_cycles,
                }
            }
            Statement::Delay { micros } => Segment::Evolve {
                generator: Generator::Secular,
                duration: micros / 1e6,
                half_cycles: None,
            },
            Statement::Acquire {
                observable,
                window_us,
                step_us,
            } => Segment::Acquire {
                observable,
                window: window_us / 1e6,
                step: step_us / 1e6,
            },
        };
        segments.push(seg);
    }
    Ok(PropagationPlan {
        initial: program.init(),
        segments,
        n_sites: cluster.len(),
        ideal_reversal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_cluster, Orientation, PhysicalConstants, GAMMA_F19};
    use crate::pulseprog::parse;

    fn cluster() -> SpinCluster {
        build_cluster(Orientation::hundred(), 1.0, 4, &PhysicalConstants::default()).unwrap()
    }

    #[test]
    fn burst_maps_to_tilted_hamiltonian() {
        let p = parse("init dipolar\nburst + 25.3G 40hc\nburst - 25.3G 40hc\ndelay 100us").unwrap();
        let plan = compile(&p, &cluster(), false).unwrap();
        let w1 = GAMMA_F19 * 25.3;
        assert_eq!(
            plan.segments[0],
            Segment::Evolve {
                generator: Generator::Tilted { omega1: w1 },
                duration: 40.0 * PI / w1,
                half_cycles: Some(40)
            }
        );
        assert!(
            matches!(plan.segments[1], Segment::Evolve { generator: Generator::Tilted { omega1 }, .. } if omega1 == -w1)
        );
        assert_eq!(
            plan.segments[2],
            Segment::Evolve {
                generator: Generator::Secular,
                duration: 1e-4,
                half_cycles: None
            }
        );
    }

    #[test]
    fn ideal_reversal_burst() {
        let p = parse("init dipolar\nburst + 25.3G 40hc").unwrap();
        let plan = compile(&p, &cluster(), true).unwrap();
        let w1 = GAMMA_F19 * 25.3;
        assert_eq!(
            plan.segments[0],
            Segment::Evolve {
                generator: Generator::IdealReversal,
                duration: 40.0 * PI / w1,
                half_cycles: Some(40)
            }
        );
    }

    #[test]
    fn half_cycle_durations_are_exact_multiples() {
        let p = parse("init ix\nburst + 7.1G 3hc\nburst - 7.1G 11hc").unwrap();
        let plan = compile(&p, &cluster(), false).unwrap();
        let hc = PI / (GAMMA_F19 * 7.1);
        for s in &plan.segments {
            if let Segment::Evolve {
                duration,
                half_cycles: Some(n),
                ..
            } = *s
            {
                let ratio = duration / hc;
                assert!((ratio - n as f64).abs() < 1e-12 * n as f64);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_amplitude() {
        let p = parse("init ix\nburst + 0G 3hc").unwrap();
        assert!(compile(&p, &cluster(), false).is_err());
        let p = parse("init ix\nburst + -2G 3hc").unwrap();
        assert!(compile(&p, &cluster(), true).is_err());
    }

    #[test]
    fn pulses_and_acquisition() {
        let p = parse("init ix\npulse 90 -y\nacquire Ix for 20us step 0.5us").unwrap();
        let plan = compile(&p, &cluster(), false).unwrap();
        assert_eq!(
            plan.segments[0],
            Segment::Rotate {
                axis: Axis::Y,
                angle: -PI / 2.0
            }
        );
        assert_eq!(
            plan.segments[1],
            Segment::Acquire {
                observable: Observable::Ix,
                window: 20e-6,
                step: 0.5e-6
            }
        );
        assert!((plan.total_duration() - 20e-6).abs() < 1e-18);
        let again = compile(&p, &cluster(), false).unwrap();
        assert_eq!(plan, again);
    }
}
