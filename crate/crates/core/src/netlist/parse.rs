// SPDX-License-Identifier: Apache-2.0

use super::{
    ClockBuffer, ErrorKind, FlipFlop, Gate, Locations, Netlist, NetlistError, Pos, Route, Segment, Tie,
};

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokens(line: &str) -> Vec<Tok<'_>> {
    let body = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in body.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &body[s..i], col: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &body[s..], col: s + 1 });
    }
    out
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> NetlistError {
    NetlistError::at(line, col, ErrorKind::Syntax(msg.into()))
}

fn name<'a>(line: usize, t: &Tok<'a>) -> Result<&'a str, NetlistError> {
    check_name(line, t.col, t.text)
}

fn check_name(line: usize, col: usize, s: &str) -> Result<&str, NetlistError> {
    if s.is_empty() || s.contains([',', '=', ':']) {
        return Err(syntax(line, col, format!("bad identifier `{s}`")));
    }
    Ok(s)
}

/// Splits `key=value`, returning the value and its column.
fn keyed<'a>(line: usize, t: &Tok<'a>, key: &str) -> Result<(&'a str, usize), NetlistError> {
    match t.text.split_once('=') {
        Some((k, v)) if k == key => Ok((v, t.col + k.len() + 1)),
        _ => Err(syntax(line, t.col, format!("expected `{key}=...`, found `{}`", t.text))),
    }
}

fn list(line: usize, col: usize, s: &str) -> Result<Vec<String>, NetlistError> {
    let mut out = Vec::new();
    let mut c = col;
    for part in s.split(',') {
        out.push(check_name(line, c, part)?.to_string());
        c += part.len() + 1;
    }
    Ok(out)
}

fn number(line: usize, col: usize, s: &str) -> Result<f64, NetlistError> {
    s.parse::<f64>().map_err(|_| syntax(line, col, format!("expected a number, found `{s}`")))
}

fn arity(line: usize, toks: &[Tok<'_>], n: usize) -> Result<(), NetlistError> {
    if toks.len() != n {
        let col = toks.get(n).map_or(toks[0].col, |t| t.col);
        return Err(syntax(line, col, format!("`{}` takes {} operand(s), found {}", toks[0].text, n - 1, toks.len() - 1)));
    }
    Ok(())
}

/// Parses the `.nlf` text format and validates the result.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut nl = Netlist::default();
    let mut loc = Locations::default();
    let mut have_period = false;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let toks = tokens(raw);
        let Some(head) = toks.first() else { continue };
        let at = Pos { line: ln, col: head.col };
        match head.text {
            "period" => {
                arity(ln, &toks, 2)?;
                if have_period {
                    return Err(syntax(ln, head.col, "period declared twice"));
                }
                have_period = true;
                nl.period = number(ln, toks[1].col, toks[1].text)?;
                loc.period = at;
            }
            "input" | "output" => {
                arity(ln, &toks, 2)?;
                let n = name(ln, &toks[1])?.to_string();
                let p = Pos { line: ln, col: toks[1].col };
                if head.text == "input" {
                    nl.inputs.push(n);
                    loc.inputs.push(p);
                } else {
                    nl.outputs.push(n);
                    loc.outputs.push(p);
                }
            }
            "tie" => {
                arity(ln, &toks, 3)?;
                let net = name(ln, &toks[1])?.to_string();
                let value = match toks[2].text {
                    "0" => false,
                    "1" => true,
                    other => return Err(syntax(ln, toks[2].col, format!("tie value must be 0 or 1, found `{other}`"))),
                };
                nl.ties.push(Tie { net, value });
                loc.ties.push(Pos { line: ln, col: toks[1].col });
            }
            "clkbuf" => {
                arity(ln, &toks, 3)?;
                let id = name(ln, &toks[1])?.to_string();
                let (d, col) = keyed(ln, &toks[2], "drive")?;
                let drive = d.parse().map_err(|e: String| syntax(ln, col, e))?;
                nl.clock_buffers.push(ClockBuffer { id, drive });
                loc.clock_buffers.push(Pos { line: ln, col: toks[1].col });
            }
            "ff" => {
                arity(ln, &toks, 5)?;
                let id = name(ln, &toks[1])?.to_string();
                let (d, dc) = keyed(ln, &toks[2], "d")?;
                let (q, qc) = keyed(ln, &toks[3], "q")?;
                let (cp, cc) = keyed(ln, &toks[4], "clkpath")?;
                let f = FlipFlop {
                    id,
                    d: check_name(ln, dc, d)?.to_string(),
                    q: check_name(ln, qc, q)?.to_string(),
                    clkpath: list(ln, cc, cp)?,
                };
                nl.flip_flops.push(f);
                let p = |col| Pos { line: ln, col };
                loc.flip_flops.push([at, p(dc), p(qc), p(cc)]);
            }
            "gate" => {
                arity(ln, &toks, 6)?;
                let id = name(ln, &toks[1])?.to_string();
                let gate_type = toks[2].text.parse().map_err(|e: String| syntax(ln, toks[2].col, e))?;
                let drive = toks[3].text.parse().map_err(|e: String| syntax(ln, toks[3].col, e))?;
                let (ins, ic) = keyed(ln, &toks[4], "in")?;
                let (out, oc) = keyed(ln, &toks[5], "out")?;
                let inputs = list(ln, ic, ins)?;
                let mut pos = vec![at];
                let mut c = ic;
                for s in &inputs {
                    pos.push(Pos { line: ln, col: c });
                    c += s.len() + 1;
                }
                pos.push(Pos { line: ln, col: oc });
                nl.gates.push(Gate { id, gate_type, drive, inputs, output: check_name(ln, oc, out)?.to_string() });
                loc.gates.push(pos);
            }
            "route" => {
                arity(ln, &toks, 3)?;
                let net = name(ln, &toks[1])?.to_string();
                let mut segments = Vec::new();
                let mut c = toks[2].col;
                for part in toks[2].text.split(',') {
                    let Some((l, len)) = part.split_once(':') else {
                        return Err(syntax(ln, c, format!("expected `<layer>:<length>`, found `{part}`")));
                    };
                    let layer = l.parse().map_err(|e: String| syntax(ln, c, e))?;
                    let length_um = number(ln, c + l.len() + 1, len)?;
                    segments.push(Segment { layer, length_um });
                    c += part.len() + 1;
                }
                nl.routes.push(Route { net, segments });
                loc.routes.push(Pos { line: ln, col: toks[1].col });
            }
            other => return Err(syntax(ln, head.col, format!("unknown statement `{other}`"))),
        }
    }
    if !have_period {
        return Err(syntax(1, 1, "missing `period` statement"));
    }
    nl.validate_at(&loc)?;
    Ok(nl)
}
