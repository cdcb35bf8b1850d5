//! Network data model, per-unit conventions and case-file parsing.
//!
//! Two on-disk formats are supported: a native JSON schema and the
//! DC-relevant subset of the MATPOWER `.m` format. All MW quantities are
//! converted to per-unit on `base_mva` at parse time; cost coefficients are
//! rescaled so the objective value is identical whether evaluated in MW or
//! per-unit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

/// Sentinel capacity (p.u.) for branches with no thermal limit in the
/// source data (MATPOWER `rateA = 0`).
pub const UNBOUNDED_CAPACITY_PU: f64 = 1e6;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("base_mva must be positive, got {0}")]
    BadBaseMva(f64),
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("unknown bus id {bus} referenced by {referrer}")]
    UnknownBus { bus: usize, referrer: &'static str },
    #[error("line {index} connects bus {bus} to itself")]
    SelfLoop { index: usize, bus: usize },
    #[error("line {index}: {field} must be positive, got {value}")]
    BadLineValue {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("gen {index}: pmin {pmin} exceeds pmax {pmax}")]
    BadGenLimits {
        index: usize,
        pmin: f64,
        pmax: f64,
    },
    #[error("gen {index}: quadratic cost coefficient {c2} is negative")]
    NegativeCost { index: usize, c2: f64 },
    #[error("bus {bus}: negative load {load}")]
    NegativeLoad { bus: usize, load: f64 },
    #[error("slack bus {0} is not in the bus set")]
    BadSlackBus(usize),
    #[error("network graph is disconnected (bus {0} unreachable from slack)")]
    Disconnected(usize),
    #[error("MATPOWER: missing section mpc.{0}")]
    MatpowerMissingSection(&'static str),
    #[error("MATPOWER: malformed row {row} in mpc.{section}: {detail}")]
    MatpowerBadRow {
        section: &'static str,
        row: usize,
        detail: String,
    },
    #[error("MATPOWER: unsupported gencost model {model} (only polynomial model 2)")]
    UnsupportedGencostModel { model: i64 },
    #[error("MATPOWER: malformed scalar mpc.{0}")]
    MatpowerBadScalar(&'static str),
    #[error("partition is missing bus {0}")]
    PartitionMissingBus(usize),
    #[error("bus {bus} assigned to both zone {first} and zone {second}")]
    PartitionOverlap {
        bus: usize,
        first: String,
        second: String,
    },
    #[error("partition references unknown bus {0}")]
    PartitionUnknownBus(usize),
    #[error("zone {0} has no domestic generator and no tie line")]
    IsolatedZone(String),
    #[error("zone {0} is empty")]
    EmptyZone(String),
}

/// A transmission line in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub capacity: f64,
}

/// A generator; cost coefficients are rescaled to per-unit power.
#[derive(Debug, Clone, PartialEq)]
pub struct Gen {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub c2: f64,
    pub c1: f64,
}

/// Validated network case. Buses are kept sorted; loads align with `buses`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub slack_bus: usize,
    pub buses: Vec<usize>,
    pub loads: Vec<f64>,
    pub lines: Vec<Line>,
    pub gens: Vec<Gen>,
    index: HashMap<usize, usize>,
}

impl NetworkCase {
    pub fn new(
        base_mva: f64,
        slack_bus: usize,
        buses: Vec<usize>,
        loads: Vec<f64>,
        lines: Vec<Line>,
        gens: Vec<Gen>,
    ) -> Result<Self, CaseError> {
        if base_mva <= 0.0 {
            return Err(CaseError::BadBaseMva(base_mva));
        }
        let mut pairs: Vec<(usize, f64)> = buses.into_iter().zip(loads).collect();
        pairs.sort_by_key(|&(b, _)| b);
        let mut index = HashMap::new();
        for (i, &(b, _)) in pairs.iter().enumerate() {
            if index.insert(b, i).is_some() {
                return Err(CaseError::DuplicateBus(b));
            }
        }
        let buses: Vec<usize> = pairs.iter().map(|&(b, _)| b).collect();
        let loads: Vec<f64> = pairs.iter().map(|&(_, d)| d).collect();
        for (&b, &d) in buses.iter().zip(loads.iter()) {
            if d < 0.0 {
                return Err(CaseError::NegativeLoad { bus: b, load: d });
            }
        }
        if !index.contains_key(&slack_bus) {
            return Err(CaseError::BadSlackBus(slack_bus));
        }
        for (i, line) in lines.iter().enumerate() {
            if line.from == line.to {
                return Err(CaseError::SelfLoop {
                    index: i,
                    bus: line.from,
                });
            }
            for &b in [line.from, line.to].iter() {
                if !index.contains_key(&b) {
                    return Err(CaseError::UnknownBus {
                        bus: b,
                        referrer: "line",
                    });
                }
            }
            if line.susceptance <= 0.0 {
                return Err(CaseError::BadLineValue {
                    index: i,
                    field: "susceptance",
                    value: line.susceptance,
                });
            }
            if line.capacity <= 0.0 {
                return Err(CaseError::BadLineValue {
                    index: i,
                    field: "capacity",
                    value: line.capacity,
                });
            }
        }
        for (i, gen) in gens.iter().enumerate() {
            if !index.contains_key(&gen.bus) {
                return Err(CaseError::UnknownBus {
                    bus: gen.bus,
                    referrer: "gen",
                });
            }
            if gen.p_min > gen.p_max {
                return Err(CaseError::BadGenLimits {
                    index: i,
                    pmin: gen.p_min,
                    pmax: gen.p_max,
                });
            }
            if gen.c2 < 0.0 {
                return Err(CaseError::NegativeCost { index: i, c2: gen.c2 });
            }
        }
        let case = Self {
            base_mva,
            slack_bus,
            buses,
            loads,
            lines,
            gens,
            index,
        };
        case.check_connected()?;
        Ok(case)
    }

    fn check_connected(&self) -> Result<(), CaseError> {
        let n = self.buses.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for line in &self.lines {
            let a = self.index[&line.from];
            let b = self.index[&line.to];
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.index[&self.slack_bus]];
        seen[self.index[&self.slack_bus]] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CaseError::Disconnected(self.buses[i]));
        }
        Ok(())
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of a bus id in the sorted bus list.
    pub fn bus_index(&self, bus: usize) -> Option<usize> {
        self.index.get(&bus).copied()
    }

    /// Load at a bus in p.u.
    pub fn load(&self, bus: usize) -> f64 {
        self.loads[self.index[&bus]]
    }

    /// Largest load in the system, p.u.; the global sensitivity bound.
    pub fn max_load(&self) -> (usize, f64) {
        let mut best = (self.buses[0], 0.0);
        for (&b, &d) in self.buses.iter().zip(self.loads.iter()) {
            if d > best.1 {
                best = (b, d);
            }
        }
        best
    }
}

/// Weighted graph Laplacian over the sorted bus order: diagonal entries sum
/// incident susceptances, off-diagonals carry the negated line susceptance.
pub fn build_laplacian(case: &NetworkCase) -> DMatrix<f64> {
    let n = case.num_buses();
    let mut b = DMatrix::zeros(n, n);
    for line in &case.lines {
        let i = case.bus_index(line.from).expect("validated");
        let j = case.bus_index(line.to).expect("validated");
        b[(i, i)] += line.susceptance;
        b[(j, j)] += line.susceptance;
        b[(i, j)] -= line.susceptance;
        b[(j, i)] -= line.susceptance;
    }
    b
}

// --- native JSON schema ---

#[derive(Serialize, Deserialize)]
struct CaseFile {
    base_mva: f64,
    slack_bus: usize,
    buses: Vec<BusEntry>,
    lines: Vec<LineEntry>,
    gens: Vec<GenEntry>,
}

#[derive(Serialize, Deserialize)]
struct BusEntry {
    id: usize,
    load_mw: f64,
}

#[derive(Serialize, Deserialize)]
struct LineEntry {
    from: usize,
    to: usize,
    susceptance_pu: f64,
    capacity_mw: f64,
}

#[derive(Serialize, Deserialize)]
struct GenEntry {
    bus: usize,
    pmin_mw: f64,
    pmax_mw: f64,
    c2_per_mw2: f64,
    c1_per_mw: f64,
}

pub fn parse_case_json(text: &str) -> Result<NetworkCase, CaseError> {
    let file: CaseFile = serde_json::from_str(text)?;
    let base = file.base_mva;
    if base <= 0.0 {
        return Err(CaseError::BadBaseMva(base));
    }
    let buses: Vec<usize> = file.buses.iter().map(|b| b.id).collect();
    let loads: Vec<f64> = file.buses.iter().map(|b| b.load_mw / base).collect();
    let lines: Vec<Line> = file
        .lines
        .iter()
        .map(|l| Line {
            from: l.from,
            to: l.to,
            susceptance: l.susceptance_pu,
            capacity: l.capacity_mw / base,
        })
        .collect();
    let gens: Vec<Gen> = file
        .gens
        .iter()
        .map(|g| Gen {
            bus: g.bus,
            p_min: g.pmin_mw / base,
            p_max: g.pmax_mw / base,
            c2: g.c2_per_mw2 * base * base,
            c1: g.c1_per_mw * base,
        })
        .collect();
    NetworkCase::new(base, file.slack_bus, buses, loads, lines, gens)
}

/// Inverse of [`parse_case_json`]: writes the native JSON schema with MW
/// quantities recovered from the per-unit model.
pub fn serialize_case_json(case: &NetworkCase) -> String {
    let base = case.base_mva;
    let file = CaseFile {
        base_mva: base,
        slack_bus: case.slack_bus,
        buses: case
            .buses
            .iter()
            .zip(case.loads.iter())
            .map(|(&id, &d)| BusEntry {
                id,
                load_mw: d * base,
            })
            .collect(),
        lines: case
            .lines
            .iter()
            .map(|l| LineEntry {
                from: l.from,
                to: l.to,
                susceptance_pu: l.susceptance,
                capacity_mw: l.capacity * base,
            })
            .collect(),
        gens: case
            .gens
            .iter()
            .map(|g| GenEntry {
                bus: g.bus,
                pmin_mw: g.p_min * base,
                pmax_mw: g.p_max * base,
                c2_per_mw2: g.c2 / (base * base),
                c1_per_mw: g.c1 / base,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("serialization cannot fail")
}

// --- MATPOWER subset ---

/// Parse the DC-relevant subset of a MATPOWER `.m` case file.
///
/// Extracted columns: bus (BUS_I, PD), branch (F_BUS, T_BUS, BR_X -> beta =
/// 1/x, RATE_A), gen (GEN_BUS, PMAX, PMIN, GEN_STATUS), gencost (polynomial
/// c2, c1). Branches with RATE_A = 0 get the unbounded-capacity sentinel.
pub fn parse_matpower(text: &str) -> Result<NetworkCase, CaseError> {
    let base_mva = matpower_scalar(text, "baseMVA")?;
    if base_mva <= 0.0 {
        return Err(CaseError::BadBaseMva(base_mva));
    }
    let bus_rows = matpower_matrix(text, "bus")?;
    let gen_rows = matpower_matrix(text, "gen")?;
    let branch_rows = matpower_matrix(text, "branch")?;
    let gencost_rows = matpower_matrix(text, "gencost")?;

    let mut buses = Vec::new();
    let mut loads = Vec::new();
    let mut slack_bus = None;
    for (r, row) in bus_rows.iter().enumerate() {
        if row.len() < 3 {
            return Err(CaseError::MatpowerBadRow {
                section: "bus",
                row: r,
                detail: format!("expected >= 3 columns, got {}", row.len()),
            });
        }
        let id = row[0] as usize;
        buses.push(id);
        loads.push(row[2] / base_mva);
        if row[1] as i64 == 3 {
            slack_bus = Some(id);
        }
    }
    let slack_bus = slack_bus.unwrap_or_else(|| buses[0]);

    let mut lines = Vec::new();
    for (r, row) in branch_rows.iter().enumerate() {
        if row.len() < 6 {
            return Err(CaseError::MatpowerBadRow {
                section: "branch",
                row: r,
                detail: format!("expected >= 6 columns, got {}", row.len()),
            });
        }
        // BR_STATUS is column 11 when present.
        if row.len() > 10 && row[10] as i64 == 0 {
            continue;
        }
        let x = row[3];
        if x <= 0.0 {
            return Err(CaseError::MatpowerBadRow {
                section: "branch",
                row: r,
                detail: format!("non-positive reactance {x}"),
            });
        }
        let rate_a = row[5];
        lines.push(Line {
            from: row[0] as usize,
            to: row[1] as usize,
            susceptance: 1.0 / x,
            capacity: if rate_a > 0.0 {
                rate_a / base_mva
            } else {
                UNBOUNDED_CAPACITY_PU
            },
        });
    }

    if gencost_rows.len() < gen_rows.len() {
        return Err(CaseError::MatpowerBadRow {
            section: "gencost",
            row: gencost_rows.len(),
            detail: format!(
                "{} cost rows for {} generators",
                gencost_rows.len(),
                gen_rows.len()
            ),
        });
    }
    let mut gens = Vec::new();
    for (r, row) in gen_rows.iter().enumerate() {
        if row.len() < 10 {
            return Err(CaseError::MatpowerBadRow {
                section: "gen",
                row: r,
                detail: format!("expected >= 10 columns, got {}", row.len()),
            });
        }
        if row.len() > 7 && row[7] as i64 == 0 {
            continue;
        }
        let cost = &gencost_rows[r];
        if cost.len() < 4 {
            return Err(CaseError::MatpowerBadRow {
                section: "gencost",
                row: r,
                detail: format!("expected >= 4 columns, got {}", cost.len()),
            });
        }
        let model = cost[0] as i64;
        if model != 2 {
            return Err(CaseError::UnsupportedGencostModel { model });
        }
        let ncost = cost[3] as usize;
        if cost.len() < 4 + ncost {
            return Err(CaseError::MatpowerBadRow {
                section: "gencost",
                row: r,
                detail: format!("NCOST={} but only {} coefficients", ncost, cost.len() - 4),
            });
        }
        let (c2_mw, c1_mw) = match ncost {
            0 => (0.0, 0.0),
            1 => (0.0, 0.0),
            2 => (0.0, cost[4]),
            _ => (cost[4 + ncost - 3], cost[4 + ncost - 2]),
        };
        gens.push(Gen {
            bus: row[0] as usize,
            p_min: row[9] / base_mva,
            p_max: row[8] / base_mva,
            c2: c2_mw * base_mva * base_mva,
            c1: c1_mw * base_mva,
        });
    }

    NetworkCase::new(base_mva, slack_bus, buses, loads, lines, gens)
}

fn strip_matpower_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn matpower_scalar(text: &str, name: &'static str) -> Result<f64, CaseError> {
    let needle = format!("mpc.{name}");
    for line in text.lines() {
        let line = strip_matpower_comment(line);
        if let Some(rest) = line.trim_start().strip_prefix(&needle) {
            let rest = rest.trim_start();
            if let Some(value) = rest.strip_prefix('=') {
                let value = value.trim().trim_end_matches(';').trim();
                return value
                    .parse::<f64>()
                    .map_err(|_| CaseError::MatpowerBadScalar(name));
            }
        }
    }
    Err(CaseError::MatpowerMissingSection(name))
}

fn matpower_matrix(text: &str, name: &'static str) -> Result<Vec<Vec<f64>>, CaseError> {
    let needle = format!("mpc.{name}");
    let mut rows = Vec::new();
    let mut in_matrix = false;
    for raw in text.lines() {
        let line = strip_matpower_comment(raw).trim();
        if !in_matrix {
            if let Some(rest) = line.strip_prefix(&needle) {
                let rest = rest.trim_start();
                if let Some(rest) = rest.strip_prefix('=') {
                    if rest.trim_start().starts_with('[') {
                        in_matrix = true;
                        let tail = rest.trim_start().trim_start_matches('[');
                        consume_matrix_line(tail, &mut rows, &mut in_matrix, name)?;
                        if !in_matrix {
                            return Ok(rows);
                        }
                    }
                }
            }
            continue;
        }
        consume_matrix_line(line, &mut rows, &mut in_matrix, name)?;
        if !in_matrix {
            return Ok(rows);
        }
    }
    if rows.is_empty() {
        Err(CaseError::MatpowerMissingSection(name))
    } else {
        Ok(rows)
    }
}

fn consume_matrix_line(
    line: &str,
    rows: &mut Vec<Vec<f64>>,
    in_matrix: &mut bool,
    section: &'static str,
) -> Result<(), CaseError> {
    let mut line = line;
    if let Some(pos) = line.find(']') {
        line = &line[..pos];
        *in_matrix = false;
    }
    for chunk in line.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in chunk.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| CaseError::MatpowerBadRow {
                section,
                row: rows.len(),
                detail: format!("bad token {tok:?}"),
            })?;
            row.push(v);
        }
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Ok(())
}

// --- zone partitions ---

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    zones: BTreeMap<String, Vec<usize>>,
}

/// Total assignment of buses to zones.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePartition {
    pub assignment: BTreeMap<usize, String>,
}

impl ZonePartition {
    pub fn single_zone(case: &NetworkCase, zone_id: &str) -> Self {
        Self {
            assignment: case
                .buses
                .iter()
                .map(|&b| (b, zone_id.to_string()))
                .collect(),
        }
    }

    pub fn zone_ids(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.assignment.values().collect();
        set.into_iter().cloned().collect()
    }
}

pub fn parse_partition_json(text: &str) -> Result<ZonePartition, CaseError> {
    let file: PartitionFile = serde_json::from_str(text)?;
    let mut assignment = BTreeMap::new();
    for (zone, buses) in &file.zones {
        if buses.is_empty() {
            return Err(CaseError::EmptyZone(zone.clone()));
        }
        for &b in buses {
            if let Some(prev) = assignment.insert(b, zone.clone()) {
                return Err(CaseError::PartitionOverlap {
                    bus: b,
                    first: prev,
                    second: zone.clone(),
                });
            }
        }
    }
    Ok(ZonePartition { assignment })
}

pub fn serialize_partition_json(partition: &ZonePartition) -> String {
    let mut zones: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (&bus, zone) in &partition.assignment {
        zones.entry(zone.clone()).or_default().push(bus);
    }
    serde_json::to_string_pretty(&PartitionFile { zones }).expect("serialization cannot fail")
}

/// One zone's slice of the network: index sets, local constraint data and
/// the private load dataset.
#[derive(Debug, Clone)]
pub struct ZoneView {
    pub zone_id: String,
    /// Domestic buses R_z, sorted.
    pub domestic: Vec<usize>,
    /// Extended bus set V_z (domestic plus tie-line neighbors), sorted.
    pub extended: Vec<usize>,
    /// Boundary buses M_z (tie-line endpoints), sorted.
    pub boundary: Vec<usize>,
    /// Lines with at least one domestic endpoint, with their global index.
    pub lines: Vec<(usize, Line)>,
    /// Generators at domestic buses, with their global index.
    pub gens: Vec<(usize, Gen)>,
    /// Private load dataset D_z: per-domestic-bus load, p.u.
    pub loads: BTreeMap<usize, f64>,
    /// Slack bus id when it belongs to the extended set.
    pub slack: Option<usize>,
}

impl ZoneView {
    pub fn is_tie_line(&self, line: &Line) -> bool {
        let from_dom = self.domestic.binary_search(&line.from).is_ok();
        let to_dom = self.domestic.binary_search(&line.to).is_ok();
        from_dom != to_dom
    }
}

/// Build per-zone views from a total partition. Boundary sets collect the
/// endpoints of tie lines; both endpoints of every tie line appear in the
/// boundary of each zone the line touches.
pub fn build_zone_views(
    case: &NetworkCase,
    partition: &ZonePartition,
) -> Result<Vec<ZoneView>, CaseError> {
    for &b in &case.buses {
        if !partition.assignment.contains_key(&b) {
            return Err(CaseError::PartitionMissingBus(b));
        }
    }
    for &b in partition.assignment.keys() {
        if case.bus_index(b).is_none() {
            return Err(CaseError::PartitionUnknownBus(b));
        }
    }
    let mut views = Vec::new();
    for zone_id in partition.zone_ids() {
        let domestic: Vec<usize> = case
            .buses
            .iter()
            .filter(|b| partition.assignment[b] == zone_id)
            .copied()
            .collect();
        if domestic.is_empty() {
            return Err(CaseError::EmptyZone(zone_id));
        }
        let mut extended: BTreeSet<usize> = domestic.iter().copied().collect();
        let mut boundary: BTreeSet<usize> = BTreeSet::new();
        let mut lines = Vec::new();
        let mut has_tie = false;
        for (idx, line) in case.lines.iter().enumerate() {
            let from_dom = domestic.binary_search(&line.from).is_ok();
            let to_dom = domestic.binary_search(&line.to).is_ok();
            if !from_dom && !to_dom {
                continue;
            }
            extended.insert(line.from);
            extended.insert(line.to);
            if from_dom != to_dom {
                has_tie = true;
                boundary.insert(line.from);
                boundary.insert(line.to);
            }
            lines.push((idx, line.clone()));
        }
        let gens: Vec<(usize, Gen)> = case
            .gens
            .iter()
            .enumerate()
            .filter(|(_, g)| domestic.binary_search(&g.bus).is_ok())
            .map(|(i, g)| (i, g.clone()))
            .collect();
        if gens.is_empty() && !has_tie {
            return Err(CaseError::IsolatedZone(zone_id));
        }
        let loads: BTreeMap<usize, f64> =
            domestic.iter().map(|&b| (b, case.load(b))).collect();
        let extended: Vec<usize> = extended.into_iter().collect();
        let slack = if extended.binary_search(&case.slack_bus).is_ok() {
            Some(case.slack_bus)
        } else {
            None
        };
        views.push(ZoneView {
            zone_id,
            domestic,
            extended,
            boundary: boundary.into_iter().collect(),
            lines,
            gens,
            loads,
            slack,
        });
    }
    Ok(views)
}
