//! Reader and writer for literal-matrix MATPOWER case files.

use std::f64::consts::PI;
use std::fmt::Write as _;

use super::CaseError;
use crate::netmodel::{Branch, Bus, BusKind, Generator, Network};

/// Standard MATPOWER column positions (0-based).
pub mod col {
    pub mod bus {
        pub const BUS_I: usize = 0;
        pub const TYPE: usize = 1;
        pub const PD: usize = 2;
        pub const QD: usize = 3;
        pub const GS: usize = 4;
        pub const BS: usize = 5;
        pub const AREA: usize = 6;
        pub const VM: usize = 7;
        pub const VA: usize = 8;
        pub const BASE_KV: usize = 9;
        pub const ZONE: usize = 10;
        pub const VMAX: usize = 11;
        pub const VMIN: usize = 12;
        pub const COUNT: usize = 13;
    }
    pub mod gen {
        pub const BUS: usize = 0;
        pub const PG: usize = 1;
        pub const QG: usize = 2;
        pub const QMAX: usize = 3;
        pub const QMIN: usize = 4;
        pub const VG: usize = 5;
        pub const MBASE: usize = 6;
        pub const STATUS: usize = 7;
        pub const PMAX: usize = 8;
        pub const PMIN: usize = 9;
        pub const COUNT: usize = 10;
    }
    pub mod branch {
        pub const F_BUS: usize = 0;
        pub const T_BUS: usize = 1;
        pub const BR_R: usize = 2;
        pub const BR_X: usize = 3;
        pub const BR_B: usize = 4;
        pub const RATE_A: usize = 5;
        pub const RATE_B: usize = 6;
        pub const RATE_C: usize = 7;
        pub const TAP: usize = 8;
        pub const SHIFT: usize = 9;
        pub const BR_STATUS: usize = 10;
        pub const ANGMIN: usize = 11;
        pub const ANGMAX: usize = 12;
        pub const COUNT: usize = 13;
    }
    pub mod cost {
        pub const MODEL: usize = 0;
        pub const STARTUP: usize = 1;
        pub const SHUTDOWN: usize = 2;
        pub const NCOST: usize = 3;
        pub const COST: usize = 4;
    }
}

/// Angle bound substituted when a case leaves the difference unconstrained.
pub const DEFAULT_ANGLE_LIMIT: f64 = PI / 3.0;

/// A rectangular numeric table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    pub rows: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }
}

/// The four MATPOWER tables plus the system base, before interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub base_mva: f64,
    pub bus: Matrix,
    pub gen: Matrix,
    pub branch: Matrix,
    pub gencost: Matrix,
}

impl RawCase {
    pub fn bus(&self, row: usize, col: usize) -> f64 {
        self.bus.get(row, col)
    }

    pub fn gen(&self, row: usize, col: usize) -> f64 {
        self.gen.get(row, col)
    }

    pub fn branch(&self, row: usize, col: usize) -> f64 {
        self.branch.get(row, col)
    }

    pub fn gencost(&self, row: usize, col: usize) -> f64 {
        self.gencost.get(row, col)
    }

    fn check_columns(&self) -> Result<(), CaseError> {
        let need = [
            ("bus", &self.bus, col::bus::COUNT),
            ("gen", &self.gen, col::gen::COUNT),
            ("branch", &self.branch, col::branch::COUNT),
            ("gencost", &self.gencost, col::cost::COST),
        ];
        for (name, m, min) in need {
            if m.nrows() > 0 && m.ncols() < min {
                return Err(CaseError::Columns {
                    matrix: name.to_string(),
                    found: m.ncols(),
                    required: min,
                });
            }
        }
        for (k, row) in self.gencost.rows.iter().enumerate() {
            let ncost = row[col::cost::NCOST];
            let per = if row[col::cost::MODEL] == 1.0 { 2.0 } else { 1.0 };
            if !(ncost >= 0.0) || ncost.fract() != 0.0 {
                return Err(CaseError::Unsupported(format!("gencost row {} has NCOST {ncost}", k + 1)));
            }
            let required = col::cost::COST + (ncost * per) as usize;
            if row.len() < required {
                return Err(CaseError::Columns {
                    matrix: "gencost".into(),
                    found: row.len(),
                    required,
                });
            }
        }
        Ok(())
    }
}

/// Blanks out `%` comments, keeping line structure.
fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|line| match line.find('%') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn is_ident(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Locates `mpc.<name> = <rest>` and returns the text after `=`.
fn find_assignment<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("mpc.{name}");
    let mut from = 0;
    while let Some(off) = text[from..].find(&key) {
        let start = from + off;
        let after = &text[start + key.len()..];
        let preceded_ok = text[..start].chars().next_back().is_none_or(|c| !is_ident(c) && c != '.');
        if preceded_ok && !after.starts_with(is_ident) {
            let rest = after.trim_start();
            if let Some(rhs) = rest.strip_prefix('=') {
                if !rhs.starts_with('=') {
                    return Some(rhs.trim_start());
                }
            }
        }
        from = start + key.len();
    }
    None
}

fn parse_number(token: &str, matrix: &str, row: usize) -> Result<f64, CaseError> {
    token.parse::<f64>().map_err(|_| CaseError::Syntax {
        matrix: matrix.to_string(),
        row,
        message: format!("invalid number '{token}'"),
    })
}

fn parse_matrix(text: &str, name: &str) -> Result<Matrix, CaseError> {
    let rhs = find_assignment(text, name).ok_or_else(|| CaseError::MissingMatrix(name.to_string()))?;
    let body = rhs.strip_prefix('[').ok_or_else(|| CaseError::Syntax {
        matrix: name.to_string(),
        row: 0,
        message: "expected '['".into(),
    })?;
    let end = body.find(']').ok_or_else(|| CaseError::Syntax {
        matrix: name.to_string(),
        row: 0,
        message: "unterminated matrix".into(),
    })?;
    let body = body[..end].replace("...\n", " ");
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for chunk in body.split([';', '\n']) {
        let tokens: Vec<&str> = chunk
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            continue;
        }
        let row_no = rows.len() + 1;
        let values = tokens
            .iter()
            .map(|t| parse_number(t, name, row_no))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(CaseError::Ragged {
                    matrix: name.to_string(),
                    row: row_no,
                    expected: first.len(),
                    found: values.len(),
                });
            }
        }
        rows.push(values);
    }
    Ok(Matrix { rows })
}

fn parse_scalar(text: &str, name: &str) -> Result<f64, CaseError> {
    let rhs = find_assignment(text, name).ok_or_else(|| CaseError::MissingMatrix(name.to_string()))?;
    let token = rhs.split([';', '\n']).next().unwrap_or("").trim();
    parse_number(token, name, 1)
}

/// Extracts the base MVA and the bus, gen, branch and gencost tables.
pub fn parse_matpower(text: &str) -> Result<RawCase, CaseError> {
    let clean = strip_comments(text);
    let raw = RawCase {
        base_mva: parse_scalar(&clean, "baseMVA")?,
        bus: parse_matrix(&clean, "bus")?,
        gen: parse_matrix(&clean, "gen")?,
        branch: parse_matrix(&clean, "branch")?,
        gencost: parse_matrix(&clean, "gencost")?,
    };
    raw.check_columns()?;
    Ok(raw)
}

fn bus_id(value: f64, what: &str) -> Result<usize, CaseError> {
    if value >= 1.0 && value.fract() == 0.0 && value < usize::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(CaseError::Invalid(format!("{what}: bad bus number {value}")))
    }
}

fn angle_bound(deg: f64, lower: bool) -> f64 {
    if deg == 0.0 || deg.abs() >= 360.0 {
        if lower {
            -DEFAULT_ANGLE_LIMIT
        } else {
            DEFAULT_ANGLE_LIMIT
        }
    } else {
        deg.to_radians()
    }
}

/// Polynomial cost `(c2, c1, c0)` from a gencost row.
fn polynomial_cost(row: &[f64], k: usize) -> Result<(f64, f64, f64), CaseError> {
    use col::cost::*;
    if row[MODEL] == 1.0 {
        return Err(CaseError::Unsupported(format!(
            "gencost row {}: piecewise-linear costs",
            k + 1
        )));
    }
    if row[MODEL] != 2.0 {
        return Err(CaseError::Unsupported(format!(
            "gencost row {}: cost model {}",
            k + 1,
            row[MODEL]
        )));
    }
    let n = row[NCOST] as usize;
    if n > 3 {
        return Err(CaseError::Unsupported(format!(
            "gencost row {}: polynomial of degree {}",
            k + 1,
            n - 1
        )));
    }
    let mut c = [0.0; 3];
    // Highest order first: c(n-1) ... c0.
    for (pos, slot) in (3 - n..3).enumerate() {
        c[slot] = row[COST + pos];
    }
    Ok((c[0], c[1], c[2]))
}

/// Converts raw tables into a per-unit [`Network`].
pub fn to_network(raw: &RawCase) -> Result<Network, CaseError> {
    raw.check_columns()?;
    let base = raw.base_mva;
    if !(base > 0.0) {
        return Err(CaseError::Invalid(format!("baseMVA must be positive, got {base}")));
    }

    let mut buses = Vec::with_capacity(raw.bus.nrows());
    for (k, row) in raw.bus.rows.iter().enumerate() {
        use col::bus::*;
        let kind = match row[TYPE] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::Pv,
            1 | 4 => BusKind::Pq,
            other => {
                return Err(CaseError::Invalid(format!("bus row {}: unknown type {other}", k + 1)));
            }
        };
        buses.push(Bus {
            id: bus_id(row[BUS_I], &format!("bus row {}", k + 1))?,
            kind,
            p_demand: row[PD] / base,
            q_demand: row[QD] / base,
            gs: row[GS] / base,
            bs: row[BS] / base,
            v_min: row[VMIN],
            v_max: row[VMAX],
            base_kv: row[BASE_KV],
        });
    }

    if raw.gencost.nrows() < raw.gen.nrows() {
        return Err(CaseError::Invalid(format!(
            "gencost has {} rows for {} generators",
            raw.gencost.nrows(),
            raw.gen.nrows()
        )));
    }
    let mut generators = Vec::with_capacity(raw.gen.nrows());
    for (k, row) in raw.gen.rows.iter().enumerate() {
        use col::gen::*;
        let (c2, c1, c0) = polynomial_cost(&raw.gencost.rows[k], k)?;
        if row[STATUS] <= 0.0 {
            continue;
        }
        generators.push(Generator {
            bus: bus_id(row[BUS], &format!("gen row {}", k + 1))?,
            p_min: row[PMIN] / base,
            p_max: row[PMAX] / base,
            q_min: row[QMIN] / base,
            q_max: row[QMAX] / base,
            c2,
            c1,
            c0,
        });
    }

    let mut branches = Vec::with_capacity(raw.branch.nrows());
    for (k, row) in raw.branch.rows.iter().enumerate() {
        use col::branch::*;
        let what = format!("branch row {}", k + 1);
        let tap = if row[TAP] == 0.0 { 1.0 } else { row[TAP] };
        let shift = row[SHIFT].to_radians();
        let status = row[BR_STATUS] != 0.0;
        let transformer = tap != 1.0 || shift != 0.0;
        branches.push(Branch {
            from_bus: bus_id(row[F_BUS], &what)?,
            to_bus: bus_id(row[T_BUS], &what)?,
            r: row[BR_R],
            x: row[BR_X],
            b_sh: row[BR_B],
            tap,
            shift,
            rate: row[RATE_A] / base,
            status,
            switchable: status && !transformer,
            angle_min: angle_bound(row[ANGMIN], true),
            angle_max: angle_bound(row[ANGMAX], false),
        });
    }

    Ok(Network {
        base_mva: base,
        buses,
        branches,
        generators,
    })
}

/// Writes a network back out as a MATPOWER case. Switchable flags have no
/// MATPOWER column and are dropped; voltages are written as a flat profile.
pub fn write_matpower(network: &Network, name: &str) -> String {
    let base = network.base_mva;
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {base};");
    let _ = writeln!(out, "\n%% bus data\nmpc.bus = [");
    for b in &network.buses {
        let kind = match b.kind {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t{}\t1\t{}\t{};",
            b.id,
            kind,
            b.p_demand * base,
            b.q_demand * base,
            b.gs * base,
            b.bs * base,
            b.base_kv,
            b.v_max,
            b.v_min
        );
    }
    let _ = writeln!(out, "];\n\n%% generator data\nmpc.gen = [");
    for g in &network.generators {
        let _ = writeln!(
            out,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t1\t{}\t{};",
            g.bus,
            g.q_max * base,
            g.q_min * base,
            base,
            g.p_max * base,
            g.p_min * base
        );
    }
    let _ = writeln!(out, "];\n\n%% branch data\nmpc.branch = [");
    for br in &network.branches {
        let tap = if br.tap == 1.0 { 0.0 } else { br.tap };
        let rate = br.rate * base;
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{rate}\t{rate}\t{rate}\t{}\t{}\t{}\t{}\t{};",
            br.from_bus,
            br.to_bus,
            br.r,
            br.x,
            br.b_sh,
            tap,
            br.shift.to_degrees(),
            u8::from(br.status),
            br.angle_min.to_degrees(),
            br.angle_max.to_degrees()
        );
    }
    let _ = writeln!(out, "];\n\n%% generator cost data\nmpc.gencost = [");
    for g in &network.generators {
        let _ = writeln!(out, "\t2\t0\t0\t3\t{}\t{}\t{};", g.c2, g.c1, g.c0);
    }
    let _ = writeln!(out, "];");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = "function mpc = mini
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	1	90	30	0	0	1	1	0	345	1	1.1	0.9; % load
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10;
];
mpc.branch = [
	1	2	0.01	0.085	0.176	250	250	250	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.11	5	150;
];
";

    #[test]
    fn parses_and_converts_mini_case() {
        let raw = parse_matpower(MINI).unwrap();
        assert_eq!(raw.bus.nrows(), 2);
        assert_eq!(raw.base_mva, 100.0);
        let net = to_network(&raw).unwrap();
        assert!((net.buses[1].p_demand - 0.9).abs() < 1e-15);
        let g = &net.generators[0];
        assert_eq!((g.c2, g.c1, g.c0), (0.11, 5.0, 150.0));
        let br = &net.branches[0];
        assert_eq!(br.angle_min, -DEFAULT_ANGLE_LIMIT);
        assert_eq!(br.angle_max, DEFAULT_ANGLE_LIMIT);
        assert!((br.rate - 2.5).abs() < 1e-15);
        assert!(br.switchable);
    }

    #[test]
    fn zero_angle_bounds_default() {
        assert_eq!(angle_bound(0.0, true), -DEFAULT_ANGLE_LIMIT);
        assert_eq!(angle_bound(0.0, false), DEFAULT_ANGLE_LIMIT);
        assert!((angle_bound(-30.0, true) + 30f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn linear_cost_pads_quadratic_term() {
        assert_eq!(polynomial_cost(&[2.0, 0.0, 0.0, 2.0, 14.0, 0.0], 0).unwrap(), (0.0, 14.0, 0.0));
    }

    #[test]
    fn missing_branch_matrix() {
        let text = MINI.replace("mpc.branch", "mpc.lines");
        let err = parse_matpower(&text).unwrap_err();
        assert_eq!(err.to_string(), "matrix branch not found");
    }

    #[test]
    fn bus_name_is_not_bus() {
        let text = MINI.replace("mpc.bus = [", "mpc.bus_name = {'a';'b'};\nmpc.bus = [");
        assert_eq!(parse_matpower(&text).unwrap().bus.nrows(), 2);
    }

    #[test]
    fn ragged_row_reports_row_number() {
        let text = MINI.replace("2	1	90	30	0	0	1	1	0	345	1	1.1	0.9;", "2	1	90	30;");
        match parse_matpower(&text).unwrap_err() {
            CaseError::Ragged { matrix, row, .. } => {
                assert_eq!(matrix, "bus");
                assert_eq!(row, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn piecewise_cost_unsupported() {
        let text = MINI.replace("2	0	0	3	0.11	5	150;", "1	0	0	2	0	0	100	500;");
        let raw = parse_matpower(&text).unwrap();
        assert!(matches!(to_network(&raw), Err(CaseError::Unsupported(_))));
    }

    #[test]
    fn cubic_cost_unsupported() {
        let text = MINI.replace("2	0	0	3	0.11	5	150;", "2	0	0	4	1	0.11	5	150;");
        let raw = parse_matpower(&text).unwrap();
        assert!(matches!(to_network(&raw), Err(CaseError::Unsupported(_))));
    }

    #[test]
    fn scientific_notation() {
        let text = MINI.replace("0.01	0.085", "1e-2	8.5E-2");
        let net = to_network(&parse_matpower(&text).unwrap()).unwrap();
        assert_eq!(net.branches[0].r, 0.01);
        assert_eq!(net.branches[0].x, 0.085);
    }

    #[test]
    fn writer_round_trips() {
        let net = to_network(&parse_matpower(MINI).unwrap()).unwrap();
        let again = to_network(&parse_matpower(&write_matpower(&net, "mini")).unwrap()).unwrap();
        assert_eq!(net.buses.len(), again.buses.len());
        for (a, b) in net.branches.iter().zip(&again.branches) {
            assert!((a.angle_max - b.angle_max).abs() < 1e-12);
            assert_eq!(a.rate, b.rate);
        }
        assert_eq!(net.generators, again.generators);
    }
}
