//! Plain-text model files.
//!
//! ```text
//! [alphabets]
//! x = 2
//! s = 2
//! z = 2
//! y = 2
//! estimates = 2      # optional, defaults to s
//!
//! [channel]
//! (0,0) -> [0.5, 0.0, 0.5, 0.0]   # p(y,z|x,s), y major
//!
//! [markov]
//! 0 -> [0.9, 0.1]
//!
//! [initial]
//! [0.5, 0.5]
//!
//! [distortion]
//! 0 -> [0, 1]
//! ```
//!
//! `#` starts a comment. Every `(x, s)` pair and every state needs exactly
//! one row.

use std::collections::BTreeMap;

use super::{check_distribution, Alphabets, DiscreteJcasModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Alphabets,
    Channel,
    Markov,
    Initial,
    Distortion,
}

impl Section {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "alphabets" => Section::Alphabets,
            "channel" => Section::Channel,
            "markov" => Section::Markov,
            "initial" => Section::Initial,
            "distortion" => Section::Distortion,
            _ => return None,
        })
    }
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::Schema { line, message: message.into() }
}

fn parse_list(text: &str, line: usize) -> Result<Vec<f64>> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| schema(line, format!("expected a bracketed list, found `{}`", text.trim())))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|tok| tok.trim().parse::<f64>().map_err(|_| schema(line, format!("`{}` is not a number", tok.trim()))))
        .collect()
}

fn parse_index(text: &str, line: usize) -> Result<usize> {
    text.trim().parse::<usize>().map_err(|_| schema(line, format!("`{}` is not a valid index", text.trim())))
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct Raw {
    sizes: BTreeMap<String, (usize, usize)>,
    channel: BTreeMap<(usize, usize), Row>,
    markov: BTreeMap<usize, Row>,
    initial: Option<Row>,
    distortion: BTreeMap<usize, Row>,
    headers: BTreeMap<&'static str, usize>,
}

pub(super) fn parse(text: &str) -> Result<DiscreteJcasModel> {
    let mut raw = Raw::default();
    let mut section = None;
    let mut last_line = 0;

    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            if !name.contains(',') && name.chars().all(|c| c.is_ascii_alphabetic() || c == '_') {
                let sec = Section::from_name(name).ok_or_else(|| schema(line, format!("unknown section [{name}]")))?;
                let key = match sec {
                    Section::Alphabets => "alphabets",
                    Section::Channel => "channel",
                    Section::Markov => "markov",
                    Section::Initial => "initial",
                    Section::Distortion => "distortion",
                };
                if raw.headers.insert(key, line).is_some() {
                    return Err(schema(line, format!("section [{key}] appears twice")));
                }
                section = Some(sec);
                continue;
            }
        }
        match section {
            None => return Err(schema(line, "content before the first section header")),
            Some(Section::Alphabets) => {
                let (key, value) = content
                    .split_once('=')
                    .ok_or_else(|| schema(line, format!("expected `name = size`, found `{content}`")))?;
                let key = key.trim().to_string();
                if !matches!(key.as_str(), "x" | "s" | "z" | "y" | "estimates") {
                    return Err(schema(line, format!("unknown alphabet `{key}`")));
                }
                let v = parse_index(value, line)?;
                if v == 0 {
                    return Err(schema(line, format!("alphabet `{key}` must be nonempty")));
                }
                if raw.sizes.insert(key.clone(), (v, line)).is_some() {
                    return Err(schema(line, format!("alphabet `{key}` given twice")));
                }
            }
            Some(Section::Channel) => {
                let (head, list) = content.split_once("->").ok_or_else(|| schema(line, "expected `(x,s) -> [..]`"))?;
                let pair = head
                    .trim()
                    .strip_prefix('(')
                    .and_then(|h| h.strip_suffix(')'))
                    .and_then(|h| h.split_once(','))
                    .ok_or_else(|| schema(line, format!("expected `(x,s)`, found `{}`", head.trim())))?;
                let key = (parse_index(pair.0, line)?, parse_index(pair.1, line)?);
                let values = parse_list(list, line)?;
                if raw.channel.insert(key, Row { line, values }).is_some() {
                    return Err(schema(line, format!("channel row (x={},s={}) given twice", key.0, key.1)));
                }
            }
            Some(sec @ (Section::Markov | Section::Distortion)) => {
                let (head, list) = content.split_once("->").ok_or_else(|| schema(line, "expected `s -> [..]`"))?;
                let s = parse_index(head, line)?;
                let values = parse_list(list, line)?;
                let (map, name) = if sec == Section::Markov {
                    (&mut raw.markov, "markov")
                } else {
                    (&mut raw.distortion, "distortion")
                };
                if map.insert(s, Row { line, values }).is_some() {
                    return Err(schema(line, format!("{name} row {s} given twice")));
                }
            }
            Some(Section::Initial) => {
                if raw.initial.is_some() {
                    return Err(schema(line, "initial distribution given twice"));
                }
                raw.initial = Some(Row { line, values: parse_list(content, line)? });
            }
        }
    }
    assemble(raw, last_line)
}

fn section_line(headers: &BTreeMap<&'static str, usize>, name: &str, last_line: usize) -> Result<usize> {
    headers.get(name).copied().ok_or_else(|| schema(last_line, format!("missing section [{name}]")))
}

fn check_len(row: &Row, want: usize, name: &str) -> Result<()> {
    if row.values.len() != want {
        return Err(schema(row.line, format!("{name} has {} entries, expected {want}", row.values.len())));
    }
    Ok(())
}

/// Pulls rows `0..count` out of `map`, checking width and entries.
fn state_rows(
    map: &mut BTreeMap<usize, Row>,
    name: &str,
    section: usize,
    count: usize,
    width: usize,
    stochastic: bool,
) -> Result<Vec<Vec<f64>>> {
    if let Some((s, row)) = map.iter().find(|(s, _)| **s >= count) {
        return Err(schema(row.line, format!("{name} row {s} is out of range")));
    }
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let label = format!("{name} row {s}");
        let row = map.remove(&s).ok_or_else(|| schema(section, format!("{label} is missing")))?;
        check_len(&row, width, &label)?;
        if stochastic {
            check_distribution(&label, &row.values).map_err(|m| schema(row.line, m))?;
        } else if let Some(v) = row.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(schema(row.line, format!("{label} has invalid entry {v}")));
        }
        out.push(row.values);
    }
    Ok(out)
}

fn assemble(mut raw: Raw, last_line: usize) -> Result<DiscreteJcasModel> {
    let headers = std::mem::take(&mut raw.headers);
    let alpha_line = section_line(&headers, "alphabets", last_line)?;
    let size = |name: &str| -> Result<usize> {
        raw.sizes.get(name).map(|s| s.0).ok_or_else(|| schema(alpha_line, format!("alphabet `{name}` is not declared")))
    };
    let (nx, ns, nz, ny) = (size("x")?, size("s")?, size("z")?, size("y")?);
    let ne = raw.sizes.get("estimates").map(|s| s.0).unwrap_or(ns);
    if ne > ns {
        let line = raw.sizes["estimates"].1;
        return Err(schema(line, format!("{ne} estimates exceed {ns} states")));
    }

    let channel_line = section_line(&headers, "channel", last_line)?;
    if let Some(((x, s), row)) = raw.channel.iter().find(|((x, s), _)| *x >= nx || *s >= ns) {
        return Err(schema(row.line, format!("channel row (x={x},s={s}) is out of range")));
    }
    let mut channel = Vec::with_capacity(nx * ns);
    for x in 0..nx {
        for s in 0..ns {
            let name = format!("channel row (x={x},s={s})");
            let row = raw.channel.remove(&(x, s)).ok_or_else(|| schema(channel_line, format!("{name} is missing")))?;
            check_len(&row, ny * nz, &name)?;
            check_distribution(&name, &row.values).map_err(|m| schema(row.line, m))?;
            channel.push(row.values);
        }
    }

    let markov_line = section_line(&headers, "markov", last_line)?;
    let markov = state_rows(&mut raw.markov, "markov", markov_line, ns, ns, true)?;
    let dist_line = section_line(&headers, "distortion", last_line)?;
    let distortion = state_rows(&mut raw.distortion, "distortion", dist_line, ns, ne, false)?;

    let init_line = section_line(&headers, "initial", last_line)?;
    let initial = raw.initial.ok_or_else(|| schema(init_line, "initial distribution is missing"))?;
    check_len(&initial, ns, "initial distribution")?;
    check_distribution("initial distribution", &initial.values).map_err(|m| schema(initial.line, m))?;

    DiscreteJcasModel::new(
        Alphabets { x: nx, s: ns, z: nz, y: ny, estimates: ne },
        channel,
        markov,
        initial.values,
        distortion,
    )
}

fn list(values: impl Iterator<Item = f64>) -> String {
    let parts: Vec<String> = values.map(|v| format!("{v:?}")).collect();
    format!("[{}]", parts.join(", "))
}

pub(super) fn write(model: &DiscreteJcasModel) -> String {
    let a = model.sizes;
    let mut out = String::new();
    out.push_str(&format!(
        "[alphabets]\nx = {}\ns = {}\nz = {}\ny = {}\nestimates = {}\n\n[channel]\n",
        a.x, a.s, a.z, a.y, a.estimates
    ));
    for x in 0..a.x {
        for s in 0..a.s {
            let vals = (0..a.y).flat_map(|y| (0..a.z).map(move |z| (y, z))).map(|(y, z)| model.channel(x, s, y, z));
            out.push_str(&format!("({x},{s}) -> {}\n", list(vals)));
        }
    }
    out.push_str("\n[markov]\n");
    for s in 0..a.s {
        out.push_str(&format!("{s} -> {}\n", list((0..a.s).map(|t| model.transition(s, t)))));
    }
    out.push_str(&format!("\n[initial]\n{}\n\n[distortion]\n", list(model.initial().iter().copied())));
    for s in 0..a.s {
        out.push_str(&format!("{s} -> {}\n", list((0..a.estimates).map(|e| model.distortion(s, e)))));
    }
    out
}
