//! Network case representation, parsing and admittance assembly.
//!
//! Two input formats are accepted by [`parse_case`]: a strict subset of the
//! MATPOWER `.m` text format (the `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and
//! `mpc.branch` tables, in MW/MVAr/degrees) and a JSON document mirroring
//! [`NetworkCase`] field for field (already in per-unit and radians). The JSON
//! form is also the canonical serialization produced by [`to_json`].

mod admittance;
mod matpower;

pub use admittance::{build_admittance, build_admittance_parts, AdmittanceMatrix};
pub use matpower::parse_matpower;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
    /// Voltage magnitude setpoint; present for slack and PV buses only.
    pub v_set: Option<f64>,
    /// Angle reference in radians (slack only, zero elsewhere).
    pub angle_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub tap: f64,
    pub phase_shift: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_gen: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl NetworkCase {
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Map from external bus id to position in `buses`.
    pub fn bus_positions(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_position(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// Check every structural invariant. Parsers call this before returning.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) || !self.base_mva.is_finite() {
            return Err(Error::Semantic(format!(
                "base_mva must be positive, got {}",
                self.base_mva
            )));
        }
        if self.buses.is_empty() {
            return Err(Error::Semantic("case has no buses".into()));
        }
        let mut seen = HashMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if seen.insert(bus.id, i).is_some() {
                return Err(Error::Semantic(format!("duplicate bus id {}", bus.id)));
            }
            match (bus.kind, bus.v_set) {
                (BusKind::PQ, _) => {}
                (_, Some(v)) if v > 0.0 && v.is_finite() => {}
                (_, Some(v)) => {
                    return Err(Error::Semantic(format!(
                        "bus {} has non-positive voltage setpoint {v}",
                        bus.id
                    )))
                }
                (_, None) => {
                    return Err(Error::Semantic(format!(
                        "bus {} is {:?} but has no voltage setpoint",
                        bus.id, bus.kind
                    )))
                }
            }
        }
        let slacks = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        match slacks {
            0 => return Err(Error::Semantic("no slack bus".into())),
            1 => {}
            n => return Err(Error::Semantic(format!("{n} slack buses, expected one"))),
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !seen.contains_key(&end) {
                    return Err(Error::Semantic(format!(
                        "branch {}-{} references missing bus {end}",
                        br.from, br.to
                    )));
                }
            }
            if br.in_service && br.r == 0.0 && br.x == 0.0 {
                return Err(Error::Semantic(format!(
                    "branch {}-{} has zero impedance",
                    br.from, br.to
                )));
            }
            if !(br.tap > 0.0) {
                return Err(Error::Semantic(format!(
                    "branch {}-{} has non-positive tap ratio {}",
                    br.from, br.to, br.tap
                )));
            }
        }
        let mut gen_buses = HashMap::new();
        for g in &self.generators {
            let Some(&pos) = seen.get(&g.bus) else {
                return Err(Error::Semantic(format!(
                    "generator references missing bus {}",
                    g.bus
                )));
            };
            if gen_buses.insert(g.bus, ()).is_some() {
                return Err(Error::Semantic(format!(
                    "more than one generator record at bus {}",
                    g.bus
                )));
            }
            if g.q_min > g.q_max {
                return Err(Error::Semantic(format!(
                    "generator at bus {} has q_min > q_max",
                    g.bus
                )));
            }
            if self.buses[pos].kind == BusKind::PQ && g.p_gen != 0.0 {
                return Err(Error::Semantic(format!(
                    "generator with nonzero output at PQ bus {}",
                    g.bus
                )));
            }
        }
        for bus in &self.buses {
            if bus.kind == BusKind::PV && !gen_buses.contains_key(&bus.id) {
                return Err(Error::Semantic(format!(
                    "PV bus {} has no in-service generator",
                    bus.id
                )));
            }
        }
        Ok(())
    }
}

/// Parse a case from either supported text format. JSON is recognised by a
/// leading `{`.
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_matpower(text)
    }
}

pub fn parse_json(text: &str) -> Result<NetworkCase> {
    let case: NetworkCase = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        message: e.to_string(),
    })?;
    case.validate()?;
    Ok(case)
}

pub fn to_json(case: &NetworkCase) -> String {
    serde_json::to_string_pretty(case).expect("case serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = include_str!("../../../../cases/case2.m");
    const CASE39: &str = include_str!("../../../../cases/case39.m");

    #[test]
    fn parses_two_bus_case() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.bus_count(), 2);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.buses[1].p_load, 1.0);
        assert_eq!(case.buses[0].kind, BusKind::Slack);
    }

    #[test]
    fn parses_new_england_case() {
        let case = parse_case(CASE39).unwrap();
        assert_eq!(case.bus_count(), 39);
        assert_eq!(case.branches.len(), 46);
        assert_eq!(case.generators.len(), 10);
        assert_eq!(case.base_mva, 100.0);
        let pv = case.buses.iter().filter(|b| b.kind == BusKind::PV).count();
        assert_eq!(pv, 9);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let case = parse_case(CASE39).unwrap();
        let again = parse_case(&to_json(&case)).unwrap();
        assert_eq!(case, again);
    }

    #[test]
    fn rejects_two_slacks() {
        let text = TWO_BUS.replace("\t2\t1\t100", "\t2\t3\t100");
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, Error::Semantic(ref m) if m.contains("slack")), "{err}");
    }

    #[test]
    fn rejects_missing_slack() {
        let text = TWO_BUS.replace("\t1\t3\t0", "\t1\t1\t0");
        assert!(matches!(parse_case(&text), Err(Error::Semantic(_))));
    }

    #[test]
    fn rejects_duplicate_bus() {
        let text = TWO_BUS.replace("\t2\t1\t100", "\t1\t1\t100");
        let err = parse_case(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn rejects_dangling_branch() {
        let text = TWO_BUS.replace("\t1\t2\t0\t0.1", "\t1\t7\t0\t0.1");
        let err = parse_case(&text).unwrap_err();
        assert!(err.to_string().contains("missing bus 7"), "{err}");
    }

    #[test]
    fn rejects_zero_impedance() {
        let text = TWO_BUS.replace("\t1\t2\t0\t0.1", "\t1\t2\t0\t0");
        let err = parse_case(&text).unwrap_err();
        assert!(err.to_string().contains("zero impedance"), "{err}");
    }

    #[test]
    fn zero_impedance_allowed_when_out_of_service() {
        let text = TWO_BUS.replace(
            "-360\t360;\n];",
            "-360\t360;\n\t1\t2\t0\t0\t0\t0\t0\t0\t0\t0\t0\t-360\t360;\n];",
        );
        let case = parse_case(&text).unwrap();
        assert_eq!(case.branches.len(), 2);
        assert!(!case.branches[1].in_service);
    }

    #[test]
    fn json_syntax_error_reports_line() {
        let err = parse_case("{\n \"base_mva\": 100,\n oops }").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }), "{err:?}");
    }
}
