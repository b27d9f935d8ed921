//! MATPOWER case files: parsing into raw [`CaseData`] and conversion to the
//! per-unit [`Network`].
//!
//! Only the numeric matrices `bus`, `gen`, `branch`, `gencost` and the scalar
//! `baseMVA` are interpreted. Other `mpc.*` fields (bus names, areas, user
//! extensions) are skipped and recorded in [`CaseData::warnings`].

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Branch, Bus, BusKind, CostFunction, Generator, Network, NetworkDiagnostic};

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("malformed matrix `{field}` at line {line}: {detail}")]
    MalformedMatrix {
        field: String,
        line: usize,
        detail: String,
    },
    #[error("missing section `mpc.{0}`")]
    MissingSection(&'static str),
    #[error("duplicate bus id {0}")]
    DuplicateBusId(usize),
    #[error("invalid case data: {0}")]
    Invalid(String),
    #[error("unsupported cost model for generator {gen}: {detail}")]
    UnsupportedCost { gen: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRow {
    pub id: usize,
    pub kind: u8,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: f64,
    pub vm: f64,
    pub va: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRow {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub status: u8,
    pub pmax: f64,
    pub pmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    pub tap: f64,
    pub shift: f64,
    pub status: u8,
    pub angmin: f64,
    pub angmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCostRow {
    /// 1 = piecewise linear, 2 = polynomial.
    pub model: u8,
    pub startup: f64,
    pub shutdown: f64,
    /// Polynomial coefficients (highest degree first) or flattened
    /// `(p, cost)` breakpoints, as in the file.
    pub coeffs: Vec<f64>,
}

/// Raw case contents in file units (MW, MVAr, degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseData {
    pub name: String,
    pub base_mva: f64,
    pub bus_rows: Vec<BusRow>,
    pub gen_rows: Vec<GenRow>,
    pub branch_rows: Vec<BranchRow>,
    pub gencost_rows: Vec<GenCostRow>,
    pub warnings: Vec<String>,
}

enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

struct Assignment {
    field: String,
    line: usize,
    value: Value,
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_str = false;
        let mut prev: Option<char> = None;
        for ch in line.chars() {
            match ch {
                '%' if !in_str => break,
                // A quote after an identifier, `]` or `)` is a transpose,
                // otherwise it opens or closes a string literal.
                '\'' if in_str => in_str = false,
                '\'' if !matches!(prev, Some(c) if c.is_alphanumeric() || c == ']' || c == ')' || c == '_') => {
                    in_str = true
                }
                _ => {}
            }
            out.push(ch);
            prev = Some(ch);
        }
        out.push('\n');
    }
    out.replace("...\n", " ")
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" | "+Inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        "NaN" | "nan" => Some(f64::NAN),
        _ => tok.parse().ok(),
    }
}

fn parse_matrix(field: &str, body: &str, first_line: usize) -> Result<Vec<Vec<f64>>, CaseError> {
    let mut rows = Vec::new();
    let mut line = first_line;
    let mut current: Vec<f64> = Vec::new();
    let mut token = String::new();
    let flush_token = |token: &mut String, row: &mut Vec<f64>, line: usize| -> Result<(), CaseError> {
        if token.is_empty() {
            return Ok(());
        }
        let v = parse_number(token).ok_or_else(|| CaseError::MalformedMatrix {
            field: field.to_string(),
            line,
            detail: format!("non-numeric token `{token}`"),
        })?;
        row.push(v);
        token.clear();
        Ok(())
    };
    for ch in body.chars() {
        match ch {
            ';' | '\n' => {
                flush_token(&mut token, &mut current, line)?;
                if !current.is_empty() {
                    rows.push(std::mem::take(&mut current));
                }
                if ch == '\n' {
                    line += 1;
                }
            }
            c if c.is_whitespace() || c == ',' => flush_token(&mut token, &mut current, line)?,
            '[' | ']' | '{' | '}' => {
                return Err(CaseError::MalformedMatrix {
                    field: field.to_string(),
                    line,
                    detail: format!("unexpected `{ch}`"),
                })
            }
            c => token.push(c),
        }
    }
    flush_token(&mut token, &mut current, line)?;
    if !current.is_empty() {
        rows.push(current);
    }
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some(bad) = rows.iter().position(|r| r.len() != w) {
            return Err(CaseError::MalformedMatrix {
                field: field.to_string(),
                line: first_line,
                detail: format!("row {} has {} columns, expected {w}", bad + 1, rows[bad].len()),
            });
        }
    }
    Ok(rows)
}

/// Finds the closing delimiter matching the opener at `start`.
fn matching_close(chars: &[char], start: usize, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    for (k, &c) in chars.iter().enumerate().skip(start) {
        if c == '\'' {
            in_str = !in_str;
            continue;
        }
        if in_str {
            continue;
        }
        if c == open {
            depth += 1;
        } else if c == close {
            depth -= 1;
            if depth == 0 {
                return Some(k);
            }
        }
    }
    None
}

fn scan_assignments(text: &str) -> Result<Vec<Assignment>, CaseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut k = 0;
    let mut line = 1;
    let line_at = |from: usize, to: usize, line: usize| line + chars[from..to].iter().filter(|&&c| c == '\n').count();
    while k < chars.len() {
        let at_mpc = chars[k..].starts_with(&['m', 'p', 'c', '.'])
            && (k == 0 || !(chars[k - 1].is_alphanumeric() || chars[k - 1] == '_'));
        if !at_mpc {
            if chars[k] == '\n' {
                line += 1;
            }
            k += 1;
            continue;
        }
        let start = k;
        let mut j = k + 4;
        while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
            j += 1;
        }
        let field: String = chars[k + 4..j].iter().collect();
        while j < chars.len() && chars[j].is_whitespace() && chars[j] != '\n' {
            j += 1;
        }
        if j >= chars.len() || chars[j] != '=' {
            k = j;
            continue;
        }
        j += 1;
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        let value_line = line_at(start, j.min(chars.len()), line);
        let (value, end) = match chars.get(j) {
            Some('[') => {
                let close = matching_close(&chars, j, '[', ']').ok_or_else(|| CaseError::MalformedMatrix {
                    field: field.clone(),
                    line: value_line,
                    detail: "unbalanced brackets".into(),
                })?;
                let body: String = chars[j + 1..close].iter().collect();
                (Value::Matrix(parse_matrix(&field, &body, value_line)?), close + 1)
            }
            Some('{') => {
                let close = matching_close(&chars, j, '{', '}').ok_or_else(|| CaseError::MalformedMatrix {
                    field: field.clone(),
                    line: value_line,
                    detail: "unbalanced braces".into(),
                })?;
                (Value::Other, close + 1)
            }
            _ => {
                let mut e = j;
                while e < chars.len() && chars[e] != ';' && chars[e] != '\n' {
                    e += 1;
                }
                let raw: String = chars[j..e].iter().collect();
                let raw = raw.trim();
                match parse_number(raw) {
                    Some(v) => (Value::Scalar(v), e),
                    None => (Value::Other, e),
                }
            }
        };
        line = line_at(start, end, line);
        out.push(Assignment {
            field,
            line: value_line,
            value,
        });
        k = end;
    }
    Ok(out)
}

fn case_name(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .find_map(|l| l.strip_prefix("function"))
        .and_then(|rest| rest.split('=').nth(1))
        .map(|n| n.trim().trim_end_matches(';').to_string())
        .unwrap_or_else(|| "case".to_string())
}

fn require_cols(field: &str, rows: &[Vec<f64>], min: usize) -> Result<(), CaseError> {
    match rows.first() {
        Some(r) if r.len() < min => Err(CaseError::MalformedMatrix {
            field: field.to_string(),
            line: 0,
            detail: format!("{} columns, at least {min} required", r.len()),
        }),
        _ => Ok(()),
    }
}

fn as_id(v: f64, what: &str) -> Result<usize, CaseError> {
    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(CaseError::Invalid(format!("{what} `{v}` is not a nonnegative integer")))
    }
}

fn as_status(v: f64, what: &str) -> Result<u8, CaseError> {
    if v == 0.0 || v == 1.0 {
        Ok(v as u8)
    } else {
        Err(CaseError::Invalid(format!("{what} status `{v}` is not 0 or 1")))
    }
}

/// Parses the text of a MATPOWER version 2 case file.
pub fn parse_case(text: &str) -> Result<CaseData, CaseError> {
    let clean = strip_comments(text);
    let mut base_mva = None;
    let mut mats: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    let mut warnings = Vec::new();
    for a in scan_assignments(&clean)? {
        match (a.field.as_str(), a.value) {
            ("baseMVA", Value::Scalar(v)) => base_mva = Some(v),
            ("version", _) => {}
            ("bus" | "gen" | "branch" | "gencost", Value::Matrix(m)) => {
                mats.insert(a.field, m);
            }
            ("bus" | "gen" | "branch" | "gencost" | "baseMVA", _) => {
                return Err(CaseError::MalformedMatrix {
                    field: a.field,
                    line: a.line,
                    detail: "expected a numeric value".into(),
                })
            }
            (other, _) => warnings.push(format!("ignored field `mpc.{other}` (line {})", a.line)),
        }
    }
    let base_mva = base_mva.ok_or(CaseError::MissingSection("baseMVA"))?;
    if !(base_mva > 0.0) {
        return Err(CaseError::Invalid(format!("baseMVA must be positive, got {base_mva}")));
    }
    let bus = mats.remove("bus").ok_or(CaseError::MissingSection("bus"))?;
    let gen = mats.remove("gen").ok_or(CaseError::MissingSection("gen"))?;
    let branch = mats.remove("branch").ok_or(CaseError::MissingSection("branch"))?;
    let gencost = mats.remove("gencost").unwrap_or_default();
    require_cols("bus", &bus, 13)?;
    require_cols("gen", &gen, 10)?;
    require_cols("branch", &branch, 11)?;

    let mut bus_rows = Vec::with_capacity(bus.len());
    let mut seen = BTreeMap::new();
    for r in &bus {
        let id = as_id(r[0], "bus id")?;
        if seen.insert(id, ()).is_some() {
            return Err(CaseError::DuplicateBusId(id));
        }
        bus_rows.push(BusRow {
            id,
            kind: as_id(r[1], "bus type")? as u8,
            pd: r[2],
            qd: r[3],
            gs: r[4],
            bs: r[5],
            area: r[6],
            vm: r[7],
            va: r[8],
            base_kv: r[9],
            zone: r[10],
            vmax: r[11],
            vmin: r[12],
        });
    }
    let known = |id: usize, what: &str| {
        if seen.contains_key(&id) {
            Ok(id)
        } else {
            Err(CaseError::Invalid(format!("{what} references unknown bus {id}")))
        }
    };
    let mut gen_rows = Vec::with_capacity(gen.len());
    for r in &gen {
        gen_rows.push(GenRow {
            bus: known(as_id(r[0], "generator bus")?, "generator")?,
            pg: r[1],
            qg: r[2],
            qmax: r[3],
            qmin: r[4],
            vg: r[5],
            status: as_status(r[7], "generator")?,
            pmax: r[8],
            pmin: r[9],
        });
    }
    let mut branch_rows = Vec::with_capacity(branch.len());
    for r in &branch {
        branch_rows.push(BranchRow {
            from: known(as_id(r[0], "branch from bus")?, "branch")?,
            to: known(as_id(r[1], "branch to bus")?, "branch")?,
            r: r[2],
            x: r[3],
            b: r[4],
            rate_a: r[5],
            tap: r[8],
            shift: r[9],
            status: as_status(r[10], "branch")?,
            angmin: r.get(11).copied().unwrap_or(-360.0),
            angmax: r.get(12).copied().unwrap_or(360.0),
        });
    }
    let mut gencost_rows = Vec::with_capacity(gencost.len());
    for r in &gencost {
        if r.len() < 4 {
            return Err(CaseError::MalformedMatrix {
                field: "gencost".into(),
                line: 0,
                detail: "fewer than 4 columns".into(),
            });
        }
        let model = as_id(r[0], "cost model")? as u8;
        let n = as_id(r[3], "cost size")?;
        let width = if model == 1 { 2 * n } else { n };
        if r.len() < 4 + width {
            return Err(CaseError::MalformedMatrix {
                field: "gencost".into(),
                line: 0,
                detail: format!("cost row declares {n} terms but has {} columns", r.len()),
            });
        }
        gencost_rows.push(GenCostRow {
            model,
            startup: r[1],
            shutdown: r[2],
            coeffs: r[4..4 + width].to_vec(),
        });
    }
    if !gencost_rows.is_empty() && gencost_rows.len() != gen_rows.len() {
        return Err(CaseError::Invalid(format!(
            "{} gencost rows for {} generators (reactive cost rows are not supported)",
            gencost_rows.len(),
            gen_rows.len()
        )));
    }
    Ok(CaseData {
        name: case_name(text),
        base_mva,
        bus_rows,
        gen_rows,
        branch_rows,
        gencost_rows,
        warnings,
    })
}

fn convert_cost(row: &GenCostRow, base: f64, gen: usize) -> Result<CostFunction, CaseError> {
    match row.model {
        2 => {
            let first = row.coeffs.iter().position(|&c| c != 0.0).unwrap_or(row.coeffs.len());
            let c = &row.coeffs[first..];
            if c.len() > 3 {
                return Err(CaseError::UnsupportedCost {
                    gen,
                    detail: format!("polynomial of degree {}", c.len() - 1),
                });
            }
            let mut q = [0.0; 3];
            for (k, &v) in c.iter().rev().enumerate() {
                q[k] = v * base.powi(k as i32);
            }
            if q[2] < 0.0 {
                return Err(CaseError::UnsupportedCost {
                    gen,
                    detail: "negative quadratic coefficient".into(),
                });
            }
            Ok(CostFunction::Polynomial {
                c2: q[2],
                c1: q[1],
                c0: q[0],
            })
        }
        1 => {
            let points: Vec<(f64, f64)> = row.coeffs.chunks(2).map(|p| (p[0] / base, p[1])).collect();
            if points.len() < 2 {
                return Err(CaseError::UnsupportedCost {
                    gen,
                    detail: "piecewise-linear cost with fewer than 2 points".into(),
                });
            }
            let slopes: Vec<f64> = points
                .windows(2)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                .collect();
            if slopes.iter().any(|s| !s.is_finite()) || slopes.windows(2).any(|w| w[1] < w[0] - 1e-12) {
                return Err(CaseError::UnsupportedCost {
                    gen,
                    detail: "piecewise-linear cost is not convex".into(),
                });
            }
            Ok(CostFunction::PiecewiseLinear { points })
        }
        m => Err(CaseError::UnsupportedCost {
            gen,
            detail: format!("cost model code {m}"),
        }),
    }
}

fn angle_limit(deg: f64) -> Option<f64> {
    (deg != 0.0 && deg.abs() < 360.0).then(|| deg * PI / 180.0)
}

/// Converts raw case data to the per-unit network, dropping out-of-service
/// rows and isolated (type 4) buses.
pub fn to_network(case: &CaseData) -> Result<Network, CaseError> {
    let base = case.base_mva;
    let mut diagnostics = Vec::new();
    let mut index_of = BTreeMap::new();
    let mut buses = Vec::new();
    for row in case.bus_rows.iter().filter(|b| b.kind != 4) {
        if !(row.vmin > 0.0 && row.vmin <= row.vmax) {
            return Err(CaseError::Invalid(format!(
                "bus {}: voltage bounds [{}, {}] are invalid",
                row.id, row.vmin, row.vmax
            )));
        }
        index_of.insert(row.id, buses.len());
        buses.push(Bus {
            id: row.id,
            kind: match row.kind {
                3 => BusKind::Reference,
                2 => BusKind::Pv,
                _ => BusKind::Pq,
            },
            v_min: row.vmin,
            v_max: row.vmax,
            g_sh: row.gs / base,
            b_sh: row.bs / base,
            p_load: row.pd / base,
            q_load: row.qd / base,
            vm: row.vm,
            va: row.va * PI / 180.0,
        });
    }
    let mut generators = Vec::new();
    for (k, row) in case.gen_rows.iter().enumerate() {
        let Some(&bus) = index_of.get(&row.bus) else { continue };
        if row.status == 0 {
            continue;
        }
        if row.pmin > row.pmax || row.qmin > row.qmax {
            return Err(CaseError::Invalid(format!("generator {k}: inverted limits")));
        }
        let cost = match case.gencost_rows.get(k) {
            Some(c) => convert_cost(c, base, k)?,
            None => CostFunction::Polynomial {
                c2: 0.0,
                c1: 0.0,
                c0: 0.0,
            },
        };
        generators.push(Generator {
            case_index: k,
            bus,
            p_min: row.pmin / base,
            p_max: row.pmax / base,
            q_min: row.qmin / base,
            q_max: row.qmax / base,
            pg: row.pg / base,
            qg: row.qg / base,
            cost,
        });
    }
    let mut branches = Vec::new();
    for (k, row) in case.branch_rows.iter().enumerate() {
        let (Some(&from), Some(&to)) = (index_of.get(&row.from), index_of.get(&row.to)) else {
            continue;
        };
        if row.status == 0 {
            continue;
        }
        if from == to {
            return Err(CaseError::Invalid(format!("branch {k} is a self loop at bus {}", row.from)));
        }
        if row.r < 0.0 {
            diagnostics.push(NetworkDiagnostic::NegativeResistance { branch: k, r: row.r });
        }
        let tap = if row.tap == 0.0 { 1.0 } else { row.tap };
        if !(tap > 0.0) {
            return Err(CaseError::Invalid(format!("branch {k}: tap ratio {tap} is not positive")));
        }
        if row.r == 0.0 && row.x == 0.0 {
            return Err(CaseError::Invalid(format!("branch {k}: zero impedance")));
        }
        branches.push(Branch::new(
            k,
            from,
            to,
            row.r,
            row.x,
            row.b,
            tap,
            row.shift * PI / 180.0,
            (row.rate_a > 0.0).then(|| row.rate_a / base),
            angle_limit(row.angmin),
            angle_limit(row.angmax),
        ));
    }
    Ok(Network::assemble(case.name.clone(), base, buses, generators, branches, diagnostics))
}

/// Reads and converts a case file in one step.
pub fn load_network(path: &std::path::Path) -> Result<Network, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.display().to_string(), e))?;
    let data = parse_case(&text)?;
    Ok(to_network(&data)?)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Case(#[from] CaseError),
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = r#"
function mpc = twobus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	100	20	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0	0.1	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.11	5	150;
];
"#;

    #[test]
    fn minimal_case_rows() {
        let c = parse_case(TWO_BUS).unwrap();
        assert_eq!(c.name, "twobus");
        assert_eq!(c.bus_rows.len(), 2);
        assert_eq!(c.branch_rows.len(), 1);
        assert_eq!(c.gen_rows.len(), 1);
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn missing_branch_section() {
        let text = TWO_BUS.replace("mpc.branch", "mpc.lines");
        assert_eq!(parse_case(&text).unwrap_err(), CaseError::MissingSection("branch"));
    }

    #[test]
    fn unbalanced_and_non_numeric() {
        let text = TWO_BUS.replace("1	2	0	0.1", "1	2	zz	0.1");
        assert!(matches!(parse_case(&text), Err(CaseError::MalformedMatrix { .. })));
        let text = TWO_BUS.replacen("];", "", 1);
        assert!(matches!(parse_case(&text), Err(CaseError::MalformedMatrix { .. })));
    }

    #[test]
    fn duplicate_bus() {
        let text = TWO_BUS.replace("2	1	100", "1	1	100");
        assert_eq!(parse_case(&text).unwrap_err(), CaseError::DuplicateBusId(1));
    }

    #[test]
    fn unknown_fields_warn() {
        let text = format!("{TWO_BUS}\nmpc.bus_name = {{\n 'A';\n 'B';\n}};\nmpc.areas = [1 1];\n");
        let c = parse_case(&text).unwrap();
        assert_eq!(c.warnings.len(), 2);
    }

    #[test]
    fn per_unit_conversion() {
        let net = to_network(&parse_case(TWO_BUS).unwrap()).unwrap();
        assert_eq!(net.buses[1].p_load, 1.0);
        assert_eq!(net.buses[1].q_load, 0.2);
        let br = &net.branches[0];
        assert_eq!(br.g, 0.0);
        assert!((br.b + 10.0).abs() < 1e-12);
        match net.generators[0].cost {
            CostFunction::Polynomial { c2, c1, c0 } => {
                assert!((c2 - 1100.0).abs() < 1e-9);
                assert!((c1 - 500.0).abs() < 1e-9);
                assert_eq!(c0, 150.0);
            }
            _ => panic!("expected polynomial cost"),
        }
        assert!(br.angle_min.is_none() && br.angle_max.is_none() && br.s_max.is_none());
    }

    #[test]
    fn cubic_cost_rejected_unless_leading_zero() {
        let text = TWO_BUS.replace("2	0	0	3	0.11	5	150", "2	0	0	4	1	0.11	5	150");
        assert!(matches!(
            to_network(&parse_case(&text).unwrap()),
            Err(CaseError::UnsupportedCost { .. })
        ));
        let text = TWO_BUS.replace("2	0	0	3	0.11	5	150", "2	0	0	4	0	0.11	5	150");
        assert!(to_network(&parse_case(&text).unwrap()).is_ok());
    }

    #[test]
    fn zero_tap_means_one_and_status_drop() {
        let text = TWO_BUS.replace(
            "1	2	0	0.1	0	0	0	0	0	0	1	-360	360;",
            "1	2	0	0.1	0	0	0	0	0	0	1	-360	360;\n1	2	0	0.2	0	0	0	0	0	0	0	-360	360;",
        );
        let net = to_network(&parse_case(&text).unwrap()).unwrap();
        assert_eq!(net.branches.len(), 1);
        assert_eq!(net.branches[0].tap, 1.0);
    }

    #[test]
    fn islanded_bus_reported() {
        let text = TWO_BUS.replace(
            "2	1	100	20	0	0	1	1	0	230	1	1.1	0.9;",
            "2	1	100	20	0	0	1	1	0	230	1	1.1	0.9;\n7	1	0	0	0	0	1	1	0	230	1	1.1	0.9;",
        );
        let net = to_network(&parse_case(&text).unwrap()).unwrap();
        assert!(net
            .diagnostics
            .iter()
            .any(|d| matches!(d, NetworkDiagnostic::IslandedBus { bus: 7 })));
    }

    #[test]
    fn angle_sentinels() {
        assert_eq!(angle_limit(360.0), None);
        assert_eq!(angle_limit(-360.0), None);
        assert_eq!(angle_limit(0.0), None);
        assert!((angle_limit(30.0).unwrap() - PI / 6.0).abs() < 1e-15);
    }

    #[test]
    fn string_with_percent_kept() {
        let text = TWO_BUS.replace("mpc.version = '2';", "mpc.version = '2'; % comment [");
        assert!(parse_case(&text).is_ok());
    }
}
