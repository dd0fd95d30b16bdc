use super::{BurstLength, InitKind, Observable, Phase, PulseAxis, PulseProgram, Statement};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(line_no: usize, line: &str) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut col = 0;
    for (byte, ch) in code.char_indices() {
        col += 1;
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                out.push(Token {
                    text: &code[b..byte],
                    line: line_no,
                    column: c,
                });
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((b, c)) = start {
        out.push(Token {
            text: &code[b..],
            line: line_no,
            column: c,
        });
    }
    out
}

struct Cursor<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    line: usize,
    end_column: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, what: &str) -> Result<Token<'a>> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(*t)
            }
            None => Err(err(
                self.line,
                self.end_column,
                format!("expected {what}, found end of line"),
            )),
        }
    }

    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let t = self.next(&format!("`{kw}`"))?;
        if t.text == kw {
            Ok(())
        } else {
            Err(err(t.line, t.column, format!("expected `{kw}`, found `{}`", t.text)))
        }
    }

    /// A number followed by one of `units`, either attached (`40hc`) or as
    /// the next token (`40 hc`). An empty string in `units` allows a bare number.
    fn quantity(&mut self, units: &[&'static str], what: &str) -> Result<(f64, &'static str, Token<'a>)> {
        let t = self.next(what)?;
        for &u in units.iter().filter(|u| !u.is_empty()) {
            if let Some(num) = t.text.strip_suffix(u) {
                if let Some(v) = number(num) {
                    return Ok((v, u, t));
                }
            }
        }
        if let Some(v) = number(t.text) {
            if let Some(next) = self.peek() {
                if let Some(&u) = units.iter().find(|&&u| !u.is_empty() && u == next.text) {
                    self.pos += 1;
                    return Ok((v, u, t));
                }
            }
            if units.contains(&"") {
                return Ok((v, "", t));
            }
            let list = units.iter().map(|u| format!("`{u}`")).collect::<Vec<_>>().join(" or ");
            return Err(err(
                t.line,
                t.column,
                format!("missing unit for {what}, expected {list}"),
            ));
        }
        Err(err(
            t.line,
            t.column,
            format!("malformed number or unit `{}` for {what}", t.text),
        ))
    }

    fn finish(&self) -> Result<()> {
        match self.peek() {
            Some(t) => Err(err(t.line, t.column, format!("unexpected token `{}`", t.text))),
            None => Ok(()),
        }
    }
}

fn number(s: &str) -> Option<f64> {
    if s.is_empty() || !s.starts_with(|c: char| c.is_ascii_digit() || matches!(c, '.' | '-' | '+')) {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn positive(v: f64, t: Token<'_>, what: &str) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(err(t.line, t.column, format!("{what} must be positive")))
    }
}

fn statement(cur: &mut Cursor<'_>, head: Token<'_>) -> Result<Statement> {
    let stmt = match head.text {
        "init" => {
            let t = cur.next("init kind")?;
            let kind: InitKind = t
                .text
                .parse()
                .map_err(|_| err(t.line, t.column, format!("unknown init kind `{}`", t.text)))?;
            Statement::Init(kind)
        }
        "pulse" => {
            let (degrees, _, _) = cur.quantity(&["deg", ""], "pulse angle")?;
            let t = cur.next("pulse axis")?;
            let axis: PulseAxis = t
                .text
                .parse()
                .map_err(|_| err(t.line, t.column, format!("unknown axis `{}`", t.text)))?;
            Statement::Pulse { degrees, axis }
        }
        "burst" => {
            let t = cur.next("burst phase sign `+` or `-`")?;
            let phase = match t.text {
                "+" => Phase::Plus,
                "-" => Phase::Minus,
                _ => {
                    return Err(err(
                        t.line,
                        t.column,
                        format!("expected burst phase sign `+` or `-`, found `{}`", t.text),
                    ))
                }
            };
            let (gauss, _, _) = cur.quantity(&["G"], "burst amplitude")?;
            let (len, unit, lt) = cur.quantity(&["us", "hc"], "burst duration")?;
            let length = if unit == "hc" {
                if len.fract() != 0.0 || len < 1.0 || len > u32::MAX as f64 {
                    return Err(err(lt.line, lt.column, "half-cycle count must be a positive integer"));
                }
                BurstLength::HalfCycles(len as u64)
            } else {
                BurstLength::Micros(positive(len, lt, "burst duration")?)
            };
            Statement::Burst { phase, gauss, length }
        }
        "delay" => {
            let (v, _, t) = cur.quantity(&["us"], "delay")?;
            Statement::Delay {
                micros: positive(v, t, "delay")?,
            }
        }
        "acquire" => {
            let t = cur.next("observable")?;
            let observable: Observable = t
                .text
                .parse()
                .map_err(|_| err(t.line, t.column, format!("unknown observable `{}`", t.text)))?;
            cur.keyword("for")?;
            let (w, _, wt) = cur.quantity(&["us"], "acquisition window")?;
            cur.keyword("step")?;
            let (s, _, st) = cur.quantity(&["us"], "acquisition step")?;
            Statement::Acquire {
                observable,
                window_us: positive(w, wt, "acquisition window")?,
                step_us: positive(s, st, "acquisition step")?,
            }
        }
        other => return Err(err(head.line, head.column, format!("unknown keyword `{other}`"))),
    };
    cur.finish()?;
    Ok(stmt)
}

/// Parses program text; errors carry 1-based line and column.
pub fn parse(text: &str) -> Result<PulseProgram> {
    let mut statements = Vec::new();
    let mut first_at = (1, 1);
    for (i, line) in text.lines().enumerate() {
        let tokens = tokenize(i + 1, line);
        let Some(&head) = tokens.first() else { continue };
        let end_column = line.chars().count() + 1;
        let mut cur = Cursor {
            tokens,
            pos: 1,
            line: i + 1,
            end_column,
        };
        let stmt = statement(&mut cur, head)?;
        match (statements.is_empty(), stmt) {
            (true, Statement::Init(_)) => first_at = (head.line, head.column),
            (true, _) => {
                return Err(err(
                    head.line,
                    head.column,
                    "missing init: the first statement must be `init`",
                ))
            }
            (false, Statement::Init(_)) => {
                return Err(err(
                    head.line,
                    head.column,
                    format!("duplicate init (first at line {})", first_at.0),
                ))
            }
            _ => {}
        }
        statements.push(stmt);
    }
    if statements.is_empty() {
        return Err(err(1, 1, "missing init: program is empty"));
    }
    PulseProgram::new(statements)
}
