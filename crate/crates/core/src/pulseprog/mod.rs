//! Line-oriented pulse-program language.
//!
//! ```text
//! init dipolar
//! pulse 90 y
//! burst + 25.3G 40hc
//! burst - 25.3G 40hc
//! delay 100us
//! pulse 45 y
//! acquire Iy for 60us step 0.5us
//! ```
//!
//! Statements keep the units they were written in (degrees, Gauss,
//! microseconds, half-cycles); [`compile`] converts to SI.

mod builtin;
mod compile;
mod parse;
mod print;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::operators::Axis;

pub use builtin::{builtin, rpw, seq1, seq2, Acquisition, BUILTIN_NAMES};
pub use compile::{compile, Generator, PropagationPlan, Segment};
pub use parse::parse;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InitKind {
    /// Dipolar order, Δ = −H′_d.
    Dipolar,
    /// Transverse magnetization, Δ = I_x.
    Ix,
    /// State after the 45° pulse of sequence 2, Δ = −(¼H′_d + (3/16)P − (3/8)Q).
    Seq2,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::Dipolar => "dipolar",
            InitKind::Ix => "ix",
            InitKind::Seq2 => "seq2",
        }
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "dipolar" => Ok(InitKind::Dipolar),
            "ix" => Ok(InitKind::Ix),
            "seq2" => Ok(InitKind::Seq2),
            _ => Err(Error::param(format!("unknown init kind `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observable {
    Ix,
    Iy,
    Iz,
}

impl Observable {
    pub fn axis(self) -> Axis {
        match self {
            Observable::Ix => Axis::X,
            Observable::Iy => Axis::Y,
            Observable::Iz => Axis::Z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Observable::Ix => "Ix",
            Observable::Iy => "Iy",
            Observable::Iz => "Iz",
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "Ix" => Ok(Observable::Ix),
            "Iy" => Ok(Observable::Iy),
            "Iz" => Ok(Observable::Iz),
            _ => Err(Error::param(format!("unknown observable `{s}`"))),
        }
    }
}

/// Pulse axis with phase, e.g. `-y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PulseAxis {
    pub axis: Axis,
    pub negative: bool,
}

impl fmt::Display for PulseAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            f.write_str("-")?;
        }
        f.write_str(self.axis.name())
    }
}

impl FromStr for PulseAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (negative, rest) = match s.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, s),
        };
        if rest.len() != 1 {
            return Err(Error::param(format!("unknown axis `{s}`")));
        }
        Ok(PulseAxis {
            axis: rest.parse()?,
            negative,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Plus,
    Minus,
}

impl Phase {
    pub fn sign(self) -> f64 {
        match self {
            Phase::Plus => 1.0,
            Phase::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BurstLength {
    Micros(f64),
    HalfCycles(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Statement {
    Init(InitKind),
    Pulse {
        degrees: f64,
        axis: PulseAxis,
    },
    Burst {
        phase: Phase,
        gauss: f64,
        length: BurstLength,
    },
    Delay {
        micros: f64,
    },
    Acquire {
        observable: Observable,
        window_us: f64,
        step_us: f64,
    },
}

/// A parsed program. The first statement is always the single `init`.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseProgram {
    statements: Vec<Statement>,
}

impl PulseProgram {
    /// Checks the structural rules that `parse` enforces.
    pub fn new(statements: Vec<Statement>) -> Result<Self, Error> {
        match statements.first() {
            Some(Statement::Init(_)) => {}
            _ => return Err(Error::param("missing init")),
        }
        if statements[1..].iter().any(|s| matches!(s, Statement::Init(_))) {
            return Err(Error::param("init must appear exactly once"));
        }
        Ok(PulseProgram { statements })
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn init(&self) -> InitKind {
        match self.statements[0] {
            Statement::Init(k) => k,
            _ => unreachable!("validated on construction"),
        }
    }
}

impl fmt::Display for PulseProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::print(self))
    }
}

impl FromStr for PulseProgram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        parse(s)
    }
}
