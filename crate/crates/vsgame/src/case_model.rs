//! Parsing, validation, and canonical normalization of power-system case data.
//!
//! Two on-disk formats are supported: a native JSON schema and MATPOWER-style
//! case text. Both produce the same canonical [`PowerSystemCase`]: all
//! quantities in per-unit on the system MVA base, load buses re-indexed first
//! (internal indices `0..K`), generator and slack buses after (`K..K+M`).

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("JSON error: {0}")]
    Json(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("MATPOWER parse error: {0}")]
    Matpower(String),
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("case invariant violated: {0}")]
    Invariant(String),
}

/// Bus role in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Generator,
    Load,
}

/// A single bus in canonical per-unit form.
///
/// For generator and slack buses `p_demand` stores the *net* demand
/// (load minus dispatched generation) since generation is not modeled
/// separately; the power flow consumes `-p_demand` as the net injection.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Active demand, pu (net of generation for non-load buses).
    pub p_demand: f64,
    /// Reactive demand, pu; positive = inductive consumption.
    pub q_demand: f64,
    /// Shunt conductance, pu.
    pub shunt_g: f64,
    /// Shunt susceptance, pu.
    pub shunt_b: f64,
    /// Voltage setpoint, pu (meaningful for slack/PV buses).
    pub v_setpoint: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// A branch (line or transformer) in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, pu.
    pub b_charging: f64,
    /// Off-nominal tap ratio at the from side; 1.0 = none.
    pub tap_ratio: f64,
}

/// A validated, canonically ordered power-system case.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystemCase {
    pub name: String,
    pub base_mva: f64,
    /// Load buses first (ascending id), then generator/slack buses (ascending id).
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    index_by_id: HashMap<u32, usize>,
    n_loads: usize,
}

impl PowerSystemCase {
    /// Build a canonical case from unordered parts, checking all invariants.
    pub fn new(
        name: String,
        base_mva: f64,
        mut buses: Vec<Bus>,
        branches: Vec<Branch>,
    ) -> Result<Self, CaseError> {
        if !(base_mva > 0.0) {
            return Err(CaseError::Invariant("base_mva must be positive".into()));
        }
        if buses.is_empty() {
            return Err(CaseError::Invariant("case has no buses".into()));
        }
        // Canonical order: loads ascending by id, then non-loads ascending by id.
        buses.sort_by_key(|b| (b.kind != BusKind::Load, b.id));
        let n_loads = buses.iter().filter(|b| b.kind == BusKind::Load).count();

        let mut index_by_id = HashMap::new();
        for (i, b) in buses.iter().enumerate() {
            if index_by_id.insert(b.id, i).is_some() {
                return Err(CaseError::Invariant(format!("duplicate bus id {}", b.id)));
            }
            if !(b.v_min < b.v_max) {
                return Err(CaseError::Invariant(format!(
                    "bus {}: v_min {} must be below v_max {}",
                    b.id, b.v_min, b.v_max
                )));
            }
            if b.kind != BusKind::Load && !(b.v_setpoint >= b.v_min && b.v_setpoint <= b.v_max) {
                return Err(CaseError::Invariant(format!(
                    "bus {}: v_setpoint {} outside [{}, {}]",
                    b.id, b.v_setpoint, b.v_min, b.v_max
                )));
            }
        }
        let slacks: Vec<u32> = buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        if slacks.len() != 1 {
            return Err(CaseError::Invariant(format!(
                "exactly one slack bus required, found {}: {:?}",
                slacks.len(),
                slacks
            )));
        }
        for br in &branches {
            if br.from_bus == br.to_bus {
                return Err(CaseError::Invariant(format!(
                    "branch {}-{} is a self-loop",
                    br.from_bus, br.to_bus
                )));
            }
            if br.x == 0.0 {
                return Err(CaseError::Invariant(format!(
                    "branch {}-{} has zero reactance",
                    br.from_bus, br.to_bus
                )));
            }
            for end in [br.from_bus, br.to_bus] {
                if !index_by_id.contains_key(&end) {
                    return Err(CaseError::Invariant(format!(
                        "branch {}-{} references unknown bus {}",
                        br.from_bus, br.to_bus, end
                    )));
                }
            }
        }
        let case = PowerSystemCase {
            name,
            base_mva,
            buses,
            branches,
            index_by_id,
            n_loads,
        };
        let unreachable = case.unreachable_buses();
        if !unreachable.is_empty() {
            return Err(CaseError::Invariant(format!(
                "network is disconnected; unreachable bus ids {:?}",
                unreachable
            )));
        }
        Ok(case)
    }

    /// Number of load (PQ) buses, K.
    pub fn n_loads(&self) -> usize {
        self.n_loads
    }

    /// Number of generator + slack buses, M.
    pub fn n_gens(&self) -> usize {
        self.buses.len() - self.n_loads
    }

    /// Internal index of an external bus id.
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.index_by_id.get(&id).copied()
    }

    /// External ids of the load buses in internal order.
    pub fn load_ids(&self) -> Vec<u32> {
        self.buses[..self.n_loads].iter().map(|b| b.id).collect()
    }

    /// Nominal reactive demand vector Q_L0 over the load buses, pu.
    pub fn q_nominal(&self) -> Vec<f64> {
        self.buses[..self.n_loads].iter().map(|b| b.q_demand).collect()
    }

    /// Generator voltage setpoints V_G in internal (generator-block) order, pu.
    pub fn v_gen(&self) -> Vec<f64> {
        self.buses[self.n_loads..].iter().map(|b| b.v_setpoint).collect()
    }

    fn unreachable_buses(&self) -> Vec<u32> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let f = self.index_by_id[&br.from_bus];
            let t = self.index_by_id[&br.to_bus];
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        (0..n)
            .filter(|&i| !seen[i])
            .map(|i| self.buses[i].id)
            .collect()
    }
}

/// Outcome of [`validate_case`]: violations (fatal) and warnings (advisory).
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-check invariants on an already-constructed case and flag advisory
/// conditions (capacitive loads). Never mutates the case.
pub fn validate_case(case: &PowerSystemCase) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = BTreeMap::new();
    for b in &case.buses {
        if ids.insert(b.id, ()).is_some() {
            report.violations.push(format!("duplicate bus id {}", b.id));
        }
        if b.kind == BusKind::Load && b.q_demand < 0.0 {
            report.warnings.push(format!(
                "bus {}: capacitive load (q_demand = {} < 0); index monotonicity arguments assume inductive demand",
                b.id, b.q_demand
            ));
        }
    }
    let slacks = case
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .count();
    if slacks != 1 {
        report
            .violations
            .push(format!("exactly one slack bus required, found {slacks}"));
    }
    let unreachable = case.unreachable_buses();
    if !unreachable.is_empty() {
        report
            .violations
            .push(format!("unreachable bus ids {unreachable:?}"));
    }
    report
}

// ---------------------------------------------------------------------------
// Native JSON format
// ---------------------------------------------------------------------------

fn default_vset() -> f64 {
    1.0
}
fn default_vmin() -> f64 {
    0.9
}
fn default_vmax() -> f64 {
    1.1
}
fn default_tap() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeBus {
    id: u32,
    kind: BusKind,
    #[serde(default)]
    pd: f64,
    #[serde(default)]
    qd: f64,
    #[serde(default)]
    gs: f64,
    #[serde(default)]
    bs: f64,
    #[serde(default = "default_vset")]
    vset: f64,
    #[serde(default = "default_vmin")]
    vmin: f64,
    #[serde(default = "default_vmax")]
    vmax: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeBranch {
    from: u32,
    to: u32,
    #[serde(default)]
    r: f64,
    x: f64,
    #[serde(default)]
    b: f64,
    #[serde(default = "default_tap")]
    tap: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeCase {
    name: String,
    base_mva: f64,
    buses: Vec<NativeBus>,
    branches: Vec<NativeBranch>,
}

/// Parse the native JSON case format (quantities already in per-unit).
pub fn parse_native_case(text: &str) -> Result<PowerSystemCase, CaseError> {
    let doc: NativeCase =
        serde_json::from_str(text).map_err(|e| CaseError::Json(e.to_string()))?;
    let buses = doc
        .buses
        .into_iter()
        .map(|b| Bus {
            id: b.id,
            kind: b.kind,
            p_demand: b.pd,
            q_demand: b.qd,
            shunt_g: b.gs,
            shunt_b: b.bs,
            v_setpoint: b.vset,
            v_min: b.vmin,
            v_max: b.vmax,
        })
        .collect();
    let branches = doc
        .branches
        .into_iter()
        .map(|br| Branch {
            from_bus: br.from,
            to_bus: br.to,
            r: br.r,
            x: br.x,
            b_charging: br.b,
            tap_ratio: br.tap,
        })
        .collect();
    PowerSystemCase::new(doc.name, doc.base_mva, buses, branches)
}

/// Serialize a case back to the native JSON format (canonical bus order).
pub fn to_native_json(case: &PowerSystemCase) -> String {
    let doc = NativeCase {
        name: case.name.clone(),
        base_mva: case.base_mva,
        buses: case
            .buses
            .iter()
            .map(|b| NativeBus {
                id: b.id,
                kind: b.kind,
                pd: b.p_demand,
                qd: b.q_demand,
                gs: b.shunt_g,
                bs: b.shunt_b,
                vset: b.v_setpoint,
                vmin: b.v_min,
                vmax: b.v_max,
            })
            .collect(),
        branches: case
            .branches
            .iter()
            .map(|br| NativeBranch {
                from: br.from_bus,
                to: br.to_bus,
                r: br.r,
                x: br.x,
                b: br.b_charging,
                tap: br.tap_ratio,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("native case serialization cannot fail")
}

// ---------------------------------------------------------------------------
// MATPOWER-style format
// ---------------------------------------------------------------------------

fn matpower_block<'a>(text: &'a str, name: &str) -> Result<Vec<Vec<f64>>, CaseError> {
    let marker = format!("mpc.{name}");
    let start = text
        .find(&marker)
        .ok_or_else(|| CaseError::Matpower(format!("missing block mpc.{name}")))?;
    let open = text[start..]
        .find('[')
        .ok_or_else(|| CaseError::Matpower(format!("block mpc.{name}: no opening bracket")))?;
    let close = text[start + open..]
        .find(']')
        .ok_or_else(|| CaseError::Matpower(format!("block mpc.{name}: no closing bracket")))?;
    let body = &text[start + open + 1..start + open + close];
    let mut rows = Vec::new();
    for line in body.lines() {
        let line = line.trim().trim_end_matches(';').trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| {
            CaseError::Matpower(format!("block mpc.{name}: bad numeric row `{line}`: {e}"))
        })?);
    }
    Ok(rows)
}

fn matpower_scalar(text: &str, name: &str) -> Result<f64, CaseError> {
    let marker = format!("mpc.{name}");
    let start = text
        .find(&marker)
        .ok_or_else(|| CaseError::Matpower(format!("missing scalar mpc.{name}")))?;
    let rest = &text[start + marker.len()..];
    let eq = rest
        .find('=')
        .ok_or_else(|| CaseError::Matpower(format!("scalar mpc.{name}: no `=`")))?;
    let val = rest[eq + 1..]
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .parse::<f64>()
        .map_err(|e| CaseError::Matpower(format!("scalar mpc.{name}: {e}")))?;
    Ok(val)
}

/// Parse MATPOWER-style case text (`baseMVA`, `bus`, `gen`, `branch` blocks).
///
/// Demands are divided by the MVA base; generator active power is netted into
/// `p_demand` of its bus; branch status 0 rows are dropped; a nonzero
/// phase-shift angle is rejected as unsupported.
pub fn parse_matpower_case(text: &str) -> Result<PowerSystemCase, CaseError> {
    let base = matpower_scalar(text, "baseMVA")?;
    let bus_rows = matpower_block(text, "bus")?;
    let gen_rows = matpower_block(text, "gen")?;
    let branch_rows = matpower_block(text, "branch")?;

    // Aggregate in-service generation per bus: dispatched MW and setpoint.
    let mut pg: HashMap<u32, f64> = HashMap::new();
    let mut vg: HashMap<u32, f64> = HashMap::new();
    for (i, row) in gen_rows.iter().enumerate() {
        if row.len() < 8 {
            return Err(CaseError::Matpower(format!(
                "gen row {}: expected at least 8 columns, got {}",
                i + 1,
                row.len()
            )));
        }
        if row[7] == 0.0 {
            continue; // out of service
        }
        let bus = row[0] as u32;
        *pg.entry(bus).or_insert(0.0) += row[1];
        vg.entry(bus).or_insert(row[5]);
    }

    let mut buses = Vec::new();
    for (i, row) in bus_rows.iter().enumerate() {
        if row.len() < 13 {
            return Err(CaseError::Matpower(format!(
                "bus row {}: expected at least 13 columns, got {}",
                i + 1,
                row.len()
            )));
        }
        let id = row[0] as u32;
        let kind = match row[1] as i32 {
            1 => BusKind::Load,
            2 => BusKind::Generator,
            3 => BusKind::Slack,
            t => {
                return Err(CaseError::Matpower(format!(
                    "bus {id}: unknown bus type {t}"
                )))
            }
        };
        buses.push(Bus {
            id,
            kind,
            p_demand: (row[2] - pg.get(&id).copied().unwrap_or(0.0)) / base,
            q_demand: row[3] / base,
            shunt_g: row[4] / base,
            shunt_b: row[5] / base,
            v_setpoint: vg.get(&id).copied().unwrap_or(1.0),
            v_min: row[12],
            v_max: row[11],
        });
    }

    let mut branches = Vec::new();
    for (i, row) in branch_rows.iter().enumerate() {
        if row.len() < 11 {
            return Err(CaseError::Matpower(format!(
                "branch row {}: expected at least 11 columns, got {}",
                i + 1,
                row.len()
            )));
        }
        if row[9] != 0.0 {
            return Err(CaseError::Unsupported(format!(
                "branch {}-{}: phase-shift angle {}° (phase shifters not modeled)",
                row[0] as u32, row[1] as u32, row[9]
            )));
        }
        if row[10] == 0.0 {
            continue; // out of service
        }
        branches.push(Branch {
            from_bus: row[0] as u32,
            to_bus: row[1] as u32,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            tap_ratio: if row[8] == 0.0 { 1.0 } else { row[8] },
        });
    }

    // case name from the `function mpc = <name>` header, if present
    let name = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("function mpc =").map(|n| n.trim().to_string()))
        .filter(|n| !n.is_empty())
        .unwrap_or_else(|| "matpower".into());
    PowerSystemCase::new(name, base, buses, branches)
}
