//! MATPOWER case file parsing and writing.
//!
//! Supports the MATLAB-function text form (`mpc.bus = [...];`) used by
//! every public archive. `parse` captures the raw matrices losslessly,
//! `lower` turns them into a semantic [`Network`] in per-unit, and
//! `write` emits a file that re-parses to the same case
//! (`parse ∘ write = id` modulo whitespace). Numbers are serialized with
//! their shortest round-trip representation so golden files are
//! bit-stable.

use crate::model::{
    Branch, Bus, BusId, BusKind, CostPoly, Generator, Network,
};
use std::fmt::Write as _;
use thiserror::Error;

/// Raw contents of a case file: numeric tables plus header comments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseFile {
    /// Case name from the `function mpc = <name>` line.
    pub name: String,
    /// `mpc.version` string, normally "2".
    pub version: String,
    pub base_mva: f64,
    pub bus: Vec<Vec<f64>>,
    pub gen: Vec<Vec<f64>>,
    pub branch: Vec<Vec<f64>>,
    pub gencost: Vec<Vec<f64>>,
    /// Comment lines in order of appearance, without the leading `%`.
    pub comments: Vec<String>,
}

pub const BUS_COLS: usize = 13;
pub const GEN_COLS: usize = 21;
pub const GEN_COLS_LEGACY: usize = 10;
pub const BRANCH_COLS: usize = 13;
pub const GENCOST_MIN_COLS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum MatpowerError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: `{token}` is not a number")]
    NotNumeric { line: usize, token: String },
    #[error("line {line}: non-finite entry `{token}` in {table}")]
    NonFinite { line: usize, token: String, table: &'static str },
    #[error("{table} row {row}: expected {expected} columns, got {got}")]
    ColumnCount { table: &'static str, row: usize, expected: String, got: usize },
    #[error("missing required table `{0}`")]
    MissingTable(&'static str),
    #[error("bus row {row}: unsupported bus type code {code}")]
    BusType { row: usize, code: f64 },
    #[error("gencost row {row}: piecewise-linear cost model is not supported")]
    PiecewiseCost { row: usize },
    #[error("gencost row {row}: unsupported cost model {model}")]
    CostModel { row: usize, model: f64 },
    #[error("gencost row {row}: polynomial degree {ncoef} exceeds 3 coefficients")]
    CostDegree { row: usize, ncoef: usize },
    #[error("gencost has {got} rows for {ngen} generators")]
    GencostRows { got: usize, ngen: usize },
    #[error("branch row {row}: zero series reactance")]
    ZeroReactance { row: usize },
}

// ---------------------------------------------------------------------------
// parsing

/// Parse the text of a MATPOWER case file into its raw tables.
pub fn parse(text: &str) -> Result<CaseFile, MatpowerError> {
    let mut case = CaseFile { version: "2".into(), ..Default::default() };
    let mut saw_base = false;

    // Current table being filled, if any.
    enum Target {
        Bus,
        Gen,
        Branch,
        Gencost,
        Skip, // recognized but unsupported matrix (e.g. bus_name)
    }
    let mut open: Option<(Target, &'static str)> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let mut s = raw;
        if let Some(pos) = s.find('%') {
            let comment = s[pos + 1..].trim_end().to_string();
            case.comments.push(comment);
            s = &s[..pos];
        }
        let s = s.trim();
        if s.is_empty() {
            continue;
        }

        if let Some((target, table)) = &open {
            // Inside a matrix: rows until a closing bracket.
            let (row_text, closes) = match s.find(']') {
                Some(pos) => (&s[..pos], true),
                None => (s, false),
            };
            let row_text = row_text.trim().trim_end_matches(';').trim();
            if !row_text.is_empty() {
                let row = parse_row(row_text, line)?;
                if !matches!(target, Target::Skip) {
                    check_finite(&row, row_text, line, table)?;
                }
                match target {
                    Target::Bus => case.bus.push(row),
                    Target::Gen => case.gen.push(row),
                    Target::Branch => case.branch.push(row),
                    Target::Gencost => case.gencost.push(row),
                    Target::Skip => {}
                }
            }
            if closes {
                open = None;
            }
            continue;
        }

        if let Some(rest) = s.strip_prefix("function") {
            // `function mpc = case9`
            if let Some(eq) = rest.find('=') {
                case.name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            continue;
        }

        if let Some((lhs, rhs)) = s.split_once('=') {
            let field = lhs.trim();
            let rhs = rhs.trim();
            match field {
                "mpc.version" => {
                    case.version =
                        rhs.trim_end_matches(';').trim_matches(|c| c == '\'' || c == '"').into();
                }
                "mpc.baseMVA" => {
                    let tok = rhs.trim_end_matches(';').trim();
                    case.base_mva = tok.parse().map_err(|_| MatpowerError::NotNumeric {
                        line,
                        token: tok.to_string(),
                    })?;
                    saw_base = true;
                }
                "mpc.bus" | "mpc.gen" | "mpc.branch" | "mpc.gencost" | "mpc.bus_name"
                | "mpc.gentype" | "mpc.genfuel" => {
                    let target = match field {
                        "mpc.bus" => (Target::Bus, "bus"),
                        "mpc.gen" => (Target::Gen, "gen"),
                        "mpc.branch" => (Target::Branch, "branch"),
                        "mpc.gencost" => (Target::Gencost, "gencost"),
                        _ => (Target::Skip, "ignored"),
                    };
                    let Some(pos) = rhs.find(['[', '{']) else {
                        return Err(MatpowerError::Syntax {
                            line,
                            msg: format!("expected `[` after `{field} =`"),
                        });
                    };
                    let inline = rhs[pos + 1..].trim();
                    let (row_part, closes) = match inline.find([']', '}']) {
                        Some(p) => (&inline[..p], true),
                        None => (inline, false),
                    };
                    let row_part = row_part.trim().trim_end_matches(';').trim();
                    if !row_part.is_empty() {
                        for piece in row_part.split(';') {
                            let piece = piece.trim();
                            if piece.is_empty() {
                                continue;
                            }
                            let row = parse_row(piece, line)?;
                            if !matches!(target.0, Target::Skip) {
                                check_finite(&row, piece, line, target.1)?;
                            }
                            match target.0 {
                                Target::Bus => case.bus.push(row),
                                Target::Gen => case.gen.push(row),
                                Target::Branch => case.branch.push(row),
                                Target::Gencost => case.gencost.push(row),
                                Target::Skip => {}
                            }
                        }
                    }
                    if !closes {
                        open = Some(target);
                    }
                }
                // unknown scalar assignment (areas, etc.) — tolerated
                _ => {
                    if rhs.contains('[') && !rhs.contains(']') {
                        open = Some((Target::Skip, "ignored"));
                    }
                }
            }
            continue;
        }

        return Err(MatpowerError::Syntax { line, msg: format!("unrecognized statement `{s}`") });
    }

    if !saw_base {
        return Err(MatpowerError::MissingTable("baseMVA"));
    }
    if case.bus.is_empty() {
        return Err(MatpowerError::MissingTable("bus"));
    }

    check_shape(&case.bus, "bus", |n| n >= BUS_COLS, "at least 13")?;
    check_shape(&case.gen, "gen", |n| n >= GEN_COLS || n == GEN_COLS_LEGACY, "21 (or legacy 10)")?;
    check_shape(&case.branch, "branch", |n| n >= BRANCH_COLS, "at least 13")?;
    check_shape(&case.gencost, "gencost", |n| n >= GENCOST_MIN_COLS, "at least 4")?;

    Ok(case)
}

fn parse_row(text: &str, line: usize) -> Result<Vec<f64>, MatpowerError> {
    text.split([' ', '\t', ','])
        .filter(|t| !t.is_empty())
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| MatpowerError::NotNumeric {
                line,
                token: tok.to_string(),
            })
        })
        .collect()
}

fn check_finite(
    row: &[f64],
    text: &str,
    line: usize,
    table: &'static str,
) -> Result<(), MatpowerError> {
    if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
        let token = text.split_whitespace().nth(bad).unwrap_or("?").to_string();
        return Err(MatpowerError::NonFinite { line, token, table });
    }
    Ok(())
}

fn check_shape(
    rows: &[Vec<f64>],
    table: &'static str,
    ok: impl Fn(usize) -> bool,
    expected: &str,
) -> Result<(), MatpowerError> {
    for (i, row) in rows.iter().enumerate() {
        if !ok(row.len()) {
            return Err(MatpowerError::ColumnCount {
                table,
                row: i,
                expected: expected.to_string(),
                got: row.len(),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// lowering to the semantic model

/// Interpret a parsed case as a per-unit [`Network`].
pub fn lower(case: &CaseFile) -> Result<Network, MatpowerError> {
    let base = case.base_mva;
    let mut buses = Vec::with_capacity(case.bus.len());
    for (row_idx, row) in case.bus.iter().enumerate() {
        let kind = match row[1] {
            t if t == 1.0 => BusKind::Pq,
            t if t == 2.0 => BusKind::Pv,
            t if t == 3.0 => BusKind::Slack,
            t if t == 4.0 => BusKind::Inactive,
            code => return Err(MatpowerError::BusType { row: row_idx, code }),
        };
        buses.push(Bus {
            id: row[0] as BusId,
            kind,
            pd: row[2] / base,
            qd: row[3] / base,
            gs: row[4] / base,
            bs: row[5] / base,
            v_init: if row[7] > 0.0 { row[7] } else { 1.0 },
            theta_init: row[8].to_radians(),
            base_kv: row[9],
            v_max: row[11],
            v_min: row[12],
        });
    }

    let mut generators = Vec::with_capacity(case.gen.len());
    for row in &case.gen {
        let col = |i: usize| row.get(i).copied().unwrap_or(0.0);
        generators.push(Generator {
            bus: row[0] as BusId,
            pg: row[1] / base,
            qg: row[2] / base,
            q_max: row[3] / base,
            q_min: row[4] / base,
            v_set: if row[5] > 0.0 { row[5] } else { 1.0 },
            status: row[7] > 0.5,
            p_max: col(8) / base,
            p_min: col(9) / base,
            cost: CostPoly::ZERO,
            fuel: None,
        });
    }

    match case.gencost.len() {
        0 => {} // power-flow-only case: all-zero costs
        n if n == generators.len() || n == 2 * generators.len() => {
            // 2*ngen rows carry reactive cost rows in the second half,
            // which this model does not represent.
            for (gi, row) in case.gencost.iter().take(generators.len()).enumerate() {
                generators[gi].cost = lower_cost(gi, row)?;
            }
        }
        n => return Err(MatpowerError::GencostRows { got: n, ngen: generators.len() }),
    }

    let mut branches = Vec::with_capacity(case.branch.len());
    for (row_idx, row) in case.branch.iter().enumerate() {
        if row[3] == 0.0 {
            return Err(MatpowerError::ZeroReactance { row: row_idx });
        }
        let (angle_min, angle_max) = lower_angle_bounds(row[11], row[12]);
        branches.push(Branch {
            from_bus: row[0] as BusId,
            to_bus: row[1] as BusId,
            r: row[2],
            x: row[3],
            b_charge: row[4],
            rate_a: if row[5] > 0.0 { Some(row[5] / base) } else { None },
            tap: if row[8] > 0.0 { row[8] } else { 1.0 },
            shift: row[9].to_radians(),
            status: row[10] > 0.5,
            angle_min,
            angle_max,
        });
    }

    Ok(Network {
        name: if case.name.is_empty() { "case".into() } else { case.name.clone() },
        base_mva: base,
        buses,
        branches,
        generators,
    })
}

fn lower_cost(row_idx: usize, row: &[f64]) -> Result<CostPoly, MatpowerError> {
    let model = row[0];
    if model == 1.0 {
        return Err(MatpowerError::PiecewiseCost { row: row_idx });
    }
    if model != 2.0 {
        return Err(MatpowerError::CostModel { row: row_idx, model });
    }
    let ncoef = row[3] as usize;
    let coefs = &row[4..];
    if ncoef > 3 || ncoef > coefs.len() {
        return Err(MatpowerError::CostDegree { row: row_idx, ncoef });
    }
    // coefficients are highest order first
    let mut c = [0.0f64; 3]; // [c2, c1, c0]
    for (k, &v) in coefs[..ncoef].iter().enumerate() {
        c[3 - ncoef + k] = v;
    }
    Ok(CostPoly { c2: c[0], c1: c[1], c0: c[2] })
}

/// MATPOWER angle-bound convention: a (0, 0) pair or magnitudes >= 360
/// degrees mean unconstrained.
fn lower_angle_bounds(amin_deg: f64, amax_deg: f64) -> (f64, f64) {
    if (amin_deg == 0.0 && amax_deg == 0.0) || amin_deg <= -360.0 || amax_deg >= 360.0 {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (amin_deg.to_radians(), amax_deg.to_radians())
    }
}

// ---------------------------------------------------------------------------
// building and writing

/// Build the raw tables for a network (inverse of [`lower`]).
pub fn build(net: &Network) -> CaseFile {
    let base = net.base_mva;
    let bus = net
        .buses
        .iter()
        .map(|b| {
            vec![
                b.id as f64,
                match b.kind {
                    BusKind::Pq => 1.0,
                    BusKind::Pv => 2.0,
                    BusKind::Slack => 3.0,
                    BusKind::Inactive => 4.0,
                },
                b.pd * base,
                b.qd * base,
                b.gs * base,
                b.bs * base,
                1.0, // area
                b.v_init,
                b.theta_init.to_degrees(),
                b.base_kv,
                1.0, // zone
                b.v_max,
                b.v_min,
            ]
        })
        .collect();

    let gen = net
        .generators
        .iter()
        .map(|g| {
            let mut row = vec![
                g.bus as f64,
                g.pg * base,
                g.qg * base,
                finite_or(g.q_max * base, 999999.0),
                finite_or(g.q_min * base, -999999.0),
                g.v_set,
                base,
                if g.status { 1.0 } else { 0.0 },
                finite_or(g.p_max * base, 999999.0),
                finite_or(g.p_min * base, -999999.0),
            ];
            row.resize(GEN_COLS, 0.0);
            row
        })
        .collect();

    let branch = net
        .branches
        .iter()
        .map(|br| {
            let (amin, amax) = if br.has_angle_bounds() {
                (br.angle_min.to_degrees(), br.angle_max.to_degrees())
            } else {
                (0.0, 0.0)
            };
            vec![
                br.from_bus as f64,
                br.to_bus as f64,
                br.r,
                br.x,
                br.b_charge,
                br.rate_a.map_or(0.0, |t| t * base),
                0.0,
                0.0,
                if br.tap == 1.0 { 0.0 } else { br.tap },
                br.shift.to_degrees(),
                if br.status { 1.0 } else { 0.0 },
                amin,
                amax,
            ]
        })
        .collect();

    let gencost = net
        .generators
        .iter()
        .map(|g| vec![2.0, 0.0, 0.0, 3.0, g.cost.c2, g.cost.c1, g.cost.c0])
        .collect();

    CaseFile {
        name: net.name.clone(),
        version: "2".into(),
        base_mva: base,
        bus,
        gen,
        branch,
        gencost,
        comments: Vec::new(),
    }
}

fn finite_or(v: f64, fallback: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        fallback
    }
}

/// Render a case file as text. Comments go first, then each table.
pub fn render(case: &CaseFile) -> String {
    let mut out = String::new();
    for c in &case.comments {
        writeln!(out, "%{c}").unwrap();
    }
    let name = if case.name.is_empty() { "case" } else { &case.name };
    writeln!(out, "function mpc = {name}").unwrap();
    writeln!(out, "mpc.version = '{}';", case.version).unwrap();
    writeln!(out, "mpc.baseMVA = {};", fmt_num(case.base_mva)).unwrap();
    render_table(&mut out, "bus", &case.bus);
    render_table(&mut out, "gen", &case.gen);
    render_table(&mut out, "branch", &case.branch);
    if !case.gencost.is_empty() {
        render_table(&mut out, "gencost", &case.gencost);
    }
    out
}

fn render_table(out: &mut String, name: &str, rows: &[Vec<f64>]) {
    writeln!(out, "mpc.{name} = [").unwrap();
    for row in rows {
        let mut line = String::new();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push('\t');
            }
            line.push_str(&fmt_num(*v));
        }
        writeln!(out, "\t{line};").unwrap();
    }
    writeln!(out, "];").unwrap();
}

/// Shortest decimal representation that re-parses to the same f64.
/// Rust's `{}` formatting guarantees round-tripping.
fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string() // normalize -0
    } else {
        format!("{v}")
    }
}

/// Serialize a network as a MATPOWER case file, with provenance lines
/// (models applied, seed, tool version) emitted as header comments.
pub fn write(net: &Network, provenance: &[String]) -> String {
    let mut case = build(net);
    case.comments = provenance.iter().map(|p| format!("% {p}")).collect();
    render(&case)
}
