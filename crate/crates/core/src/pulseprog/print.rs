use std::fmt::Write;

use super::{BurstLength, Phase, PulseProgram, Statement};

/// Canonical text: one statement per line, attached units, shortest
/// round-trip numbers, no comments.
pub(super) fn print(program: &PulseProgram) -> String {
    let mut out = String::new();
    for s in program.statements() {
        match *s {
            Statement::Init(kind) => writeln!(out, "init {}", kind.name()),
            Statement::Pulse { degrees, axis } => writeln!(out, "pulse {degrees} {axis}"),
            Statement::Burst { phase, gauss, length } => {
                let sign = match phase {
                    Phase::Plus => '+',
                    Phase::Minus => '-',
                };
                match length {
                    BurstLength::HalfCycles(n) => writeln!(out, "burst {sign} {gauss}G {n}hc"),
                    BurstLength::Micros(us) => writeln!(out, "burst {sign} {gauss}G {us}us"),
                }
            }
            Statement::Delay { micros } => writeln!(out, "delay {micros}us"),
            Statement::Acquire {
                observable,
                window_us,
                step_us,
            } => writeln!(out, "acquire {} for {window_us}us step {step_us}us", observable.name()),
        }
        .expect("writing to a String");
    }
    out
}
