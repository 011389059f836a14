//! Reader for the supported subset of the MATPOWER case format.
//!
//! Recognised statements: `function ...` headers, `mpc.version = '...';`,
//! `mpc.baseMVA = <number>;` and matrix assignments `mpc.<name> = [ ... ];`.
//! Only the `bus`, `gen` and `branch` matrices are interpreted; other
//! matrices (`gencost`, `areas`, ...) are read for syntax and then dropped.
//! Comments start with `%` and run to end of line.

use std::collections::HashMap;

use super::{Branch, Bus, BusKind, Generator, NetworkCase};
use crate::error::{Error, Result};

const BUS_COLS: usize = 9;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 11;

struct Table {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

pub fn parse_matpower(text: &str) -> Result<NetworkCase> {
    let mut base_mva = None;
    let mut tables: HashMap<String, Table> = HashMap::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, strip_comment(l)));

    while let Some((lineno, line)) = lines.next() {
        let stmt = line.trim();
        if stmt.is_empty() || stmt.starts_with("function") {
            continue;
        }
        let Some((lhs, rhs)) = stmt.split_once('=') else {
            return Err(syntax(lineno, format!("unrecognised statement `{stmt}`")));
        };
        let lhs = lhs.trim();
        let Some(field) = lhs.strip_prefix("mpc.") else {
            return Err(syntax(lineno, format!("expected `mpc.<field>`, found `{lhs}`")));
        };
        let rhs = rhs.trim();
        if let Some(body) = rhs.strip_prefix('[') {
            let table = read_matrix(lineno, body, &mut lines)?;
            tables.insert(field.to_string(), table);
        } else {
            let value = rhs.trim_end_matches(';').trim();
            match field {
                "baseMVA" => {
                    base_mva = Some(
                        value
                            .parse::<f64>()
                            .map_err(|_| syntax(lineno, format!("bad baseMVA `{value}`")))?,
                    );
                }
                "version" => {}
                _ => {
                    return Err(syntax(lineno, format!("unsupported scalar field `{field}`")));
                }
            }
        }
    }

    let base_mva = base_mva.ok_or_else(|| Error::Semantic("missing mpc.baseMVA".into()))?;
    let take = |name: &str| -> Result<Table> {
        tables
            .get(name)
            .map(|t| Table {
                line: t.line,
                rows: t.rows.clone(),
            })
            .ok_or_else(|| Error::Semantic(format!("missing mpc.{name} table")))
    };
    let bus_table = take("bus")?;
    let gen_table = take("gen")?;
    let branch_table = take("branch")?;
    build_case(base_mva, &bus_table, &gen_table, &branch_table)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn syntax(line: usize, message: String) -> Error {
    Error::Syntax { line, message }
}

fn read_matrix<'a>(
    start: usize,
    first: &'a str,
    rest: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Table> {
    let mut rows = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut current_line = start;
    let mut chunk = Some((start, first));

    while let Some((lineno, text)) = chunk.take().or_else(|| rest.next()) {
        let (body, closed) = match text.find(']') {
            Some(i) => {
                let tail = text[i + 1..].trim().trim_end_matches(';').trim();
                if !tail.is_empty() {
                    return Err(syntax(lineno, format!("unexpected `{tail}` after `]`")));
                }
                (&text[..i], true)
            }
            None => (text, false),
        };
        for (k, segment) in body.split(';').enumerate() {
            if k > 0 && !current.is_empty() {
                rows.push((current_line, std::mem::take(&mut current)));
            }
            for token in segment.split(|c: char| c.is_whitespace() || c == ',') {
                if token.is_empty() {
                    continue;
                }
                if current.is_empty() {
                    current_line = lineno;
                }
                let value = token
                    .parse::<f64>()
                    .map_err(|_| syntax(lineno, format!("bad number `{token}`")))?;
                current.push(value);
            }
        }
        // a newline also terminates a row
        if !current.is_empty() {
            rows.push((current_line, std::mem::take(&mut current)));
        }
        if closed {
            return Ok(Table { line: start, rows });
        }
    }
    Err(syntax(start, "matrix is not terminated by `]`".into()))
}

fn check_width(table: &Table, name: &str, width: usize) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Semantic(format!(
            "mpc.{name} (line {}) is empty",
            table.line
        )));
    }
    for (line, row) in &table.rows {
        if row.len() < width {
            return Err(syntax(
                *line,
                format!("mpc.{name} row has {} columns, need at least {width}", row.len()),
            ));
        }
    }
    Ok(())
}

fn as_id(line: usize, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 {
        Ok(value as usize)
    } else {
        Err(syntax(line, format!("`{value}` is not a valid bus id")))
    }
}

fn build_case(base: f64, bus_t: &Table, gen_t: &Table, branch_t: &Table) -> Result<NetworkCase> {
    check_width(bus_t, "bus", BUS_COLS)?;
    check_width(gen_t, "gen", GEN_COLS)?;
    check_width(branch_t, "branch", BRANCH_COLS)?;
    if !(base > 0.0) {
        return Err(Error::Semantic(format!("base_mva must be positive, got {base}")));
    }

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    for (line, row) in &bus_t.rows {
        let kind = match row[1] as i64 {
            1 => BusKind::PQ,
            2 => BusKind::PV,
            3 => BusKind::Slack,
            t => {
                return Err(Error::Semantic(format!(
                    "bus on line {line} has unsupported type {t}"
                )))
            }
        };
        buses.push(Bus {
            id: as_id(*line, row[0])?,
            kind,
            p_load: row[2] / base,
            q_load: row[3] / base,
            shunt_g: row[4] / base,
            shunt_b: row[5] / base,
            v_set: match kind {
                BusKind::PQ => None,
                _ => Some(row[7]),
            },
            angle_set: match kind {
                BusKind::Slack => row[8].to_radians(),
                _ => 0.0,
            },
        });
    }

    // Aggregate in-service generators per bus, keeping first-seen order.
    let mut generators: Vec<Generator> = Vec::new();
    for (line, row) in &gen_t.rows {
        if row[7] <= 0.0 {
            continue;
        }
        let bus = as_id(*line, row[0])?;
        let (pg, qmax, qmin, vg) = (row[1] / base, row[3] / base, row[4] / base, row[5]);
        match generators.iter_mut().find(|g| g.bus == bus) {
            Some(g) => {
                g.p_gen += pg;
                g.q_max += qmax;
                g.q_min += qmin;
            }
            None => generators.push(Generator {
                bus,
                p_gen: pg,
                q_min: qmin,
                q_max: qmax,
                v_set: vg,
            }),
        }
    }
    // Generator setpoints govern regulated buses.
    for g in &generators {
        if let Some(bus) = buses.iter_mut().find(|b| b.id == g.bus) {
            if bus.kind != BusKind::PQ {
                bus.v_set = Some(g.v_set);
            }
        }
    }

    let mut branches = Vec::with_capacity(branch_t.rows.len());
    for (line, row) in &branch_t.rows {
        branches.push(Branch {
            from: as_id(*line, row[0])?,
            to: as_id(*line, row[1])?,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            tap: if row[8] == 0.0 { 1.0 } else { row[8] },
            phase_shift: row[9].to_radians(),
            in_service: row[10] > 0.0,
        });
    }

    let case = NetworkCase {
        base_mva: base,
        buses,
        branches,
        generators,
    };
    case.validate()?;
    Ok(case)
}
