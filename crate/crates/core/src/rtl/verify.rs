//! Structural comparison of a netlist against the graph it should implement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ir::RoutingGraph;

use super::lower::{names, port_name, Plan, Role};
use super::{Endpoint, MuxRole, Primitive, RtlError, StructNetlist};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Finding {
    MissingInstance { name: String },
    ExtraInstance { name: String },
    WrongKind { name: String, expected: String, found: String },
    WrongArity { name: String, expected: u32, found: u32 },
    MissingConnection { sink: Endpoint, expected: Endpoint },
    WrongDriver { sink: Endpoint, expected: Endpoint, found: Endpoint },
    ExtraConnection { sink: Endpoint, driver: Endpoint },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::MissingInstance { name } => write!(f, "missing instance {name}"),
            Finding::ExtraInstance { name } => write!(f, "unexpected instance {name}"),
            Finding::WrongKind { name, expected, found } => write!(f, "{name} is {found}, expected {expected}"),
            Finding::WrongArity { name, expected, found } => write!(f, "{name} has {found} inputs, expected {expected}"),
            Finding::MissingConnection { sink, expected } => write!(f, "{sink} unconnected, expected {expected}"),
            Finding::WrongDriver { sink, expected, found } => write!(f, "{sink} driven by {found}, expected {expected}"),
            Finding::ExtraConnection { sink, driver } => write!(f, "{sink} driven by {driver} has no graph edge"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub findings: Vec<Finding>,
}

impl Report {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return writeln!(f, "structure matches");
        }
        for x in &self.findings {
            writeln!(f, "{x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Mux(u32),
    Register,
    Core,
}

fn kind_of(p: &Primitive) -> Option<Kind> {
    match p {
        Primitive::Mux { role: MuxRole::Valid, .. } => None,
        Primitive::Mux { inputs, .. } => Some(Kind::Mux(*inputs)),
        Primitive::Reg { .. } | Primitive::FifoReg { .. } => Some(Kind::Register),
        Primitive::Core { .. } => Some(Kind::Core),
        _ => None,
    }
}

fn kind_name(k: Kind) -> String {
    match k {
        Kind::Mux(_) => "MUX".into(),
        Kind::Register => "register".into(),
        Kind::Core => "CORE".into(),
    }
}

fn is_data_pin(p: &Primitive, pin: &str) -> bool {
    match p {
        Primitive::Mux { role: MuxRole::Valid, .. } => false,
        Primitive::Mux { .. } => pin.len() > 1 && pin.starts_with('I') && pin[1..].bytes().all(|b| b.is_ascii_digit()),
        Primitive::Reg { .. } | Primitive::FifoReg { .. } => pin == "D",
        Primitive::Core { .. } => pin.starts_with("I_"),
        _ => false,
    }
}

/// Checks that `netlist`'s data plane is exactly the one `g` implies: one
/// mux per multi-input node with the right arity, one register per register
/// node, and every data input driven by the hardware of the matching graph
/// predecessor.
pub fn verify_structure(g: &RoutingGraph, netlist: &StructNetlist) -> Result<Report, RtlError> {
    let plan = Plan::new(g)?;
    let mut expected_inst: BTreeMap<String, Kind> = BTreeMap::new();
    let mut expected_conn: BTreeMap<Endpoint, Endpoint> = BTreeMap::new();
    for (x, y) in plan.tiles_with_cores() {
        expected_inst.insert(names::core(x, y), Kind::Core);
    }
    for &id in &plan.order {
        let n = g.get(id);
        match plan.role(id) {
            Role::Mux => {
                let name = names::mux(n);
                for (j, &p) in g.preds(id).iter().enumerate() {
                    expected_conn.insert(Endpoint::new(&name, format!("I{j}")), plan.driver_endpoint(p));
                }
                expected_inst.insert(name, Kind::Mux(g.preds(id).len() as u32));
            }
            Role::Register => {
                let name = names::reg(n);
                let driver = match g.preds(id).first() {
                    Some(&p) => plan.driver_endpoint(p),
                    None => Endpoint::new(format!("const_{name}_d"), "O"),
                };
                expected_conn.insert(Endpoint::new(&name, "D"), driver);
                expected_inst.insert(name, Kind::Register);
            }
            _ => {}
        }
        if plan.is_core_input(id) {
            let sink = Endpoint::new(names::core(n.x, n.y), format!("I_{}", port_name(&n.kind)));
            expected_conn.insert(sink, plan.driver_endpoint(id));
        }
    }

    let mut findings = Vec::new();
    let mut seen = BTreeSet::new();
    for inst in &netlist.instances {
        let Some(kind) = kind_of(&inst.prim) else { continue };
        seen.insert(inst.name.clone());
        match expected_inst.get(&inst.name) {
            None => findings.push(Finding::ExtraInstance { name: inst.name.clone() }),
            Some(&exp) => match (exp, kind) {
                (Kind::Mux(e), Kind::Mux(f)) if e != f => {
                    findings.push(Finding::WrongArity { name: inst.name.clone(), expected: e, found: f })
                }
                (e, f) if std::mem::discriminant(&e) != std::mem::discriminant(&f) => findings.push(Finding::WrongKind {
                    name: inst.name.clone(),
                    expected: kind_name(e),
                    found: kind_name(f),
                }),
                _ => {}
            },
        }
    }
    for name in expected_inst.keys() {
        if !seen.contains(name) {
            findings.push(Finding::MissingInstance { name: name.clone() });
        }
    }

    let prims = netlist.instance_index();
    let mut actual: BTreeMap<Endpoint, Endpoint> = BTreeMap::new();
    for w in &netlist.wires {
        for s in &w.sinks {
            if prims.get(s.inst.as_str()).is_some_and(|i| is_data_pin(&i.prim, &s.pin)) {
                actual.insert(s.clone(), w.driver.clone());
            }
        }
    }
    for (sink, exp) in &expected_conn {
        match actual.get(sink) {
            None => {
                if seen.contains(&sink.inst) {
                    findings.push(Finding::MissingConnection { sink: sink.clone(), expected: exp.clone() });
                }
            }
            Some(found) if found != exp => {
                findings.push(Finding::WrongDriver { sink: sink.clone(), expected: exp.clone(), found: found.clone() })
            }
            _ => {}
        }
    }
    for (sink, driver) in &actual {
        if !expected_conn.contains_key(sink) {
            findings.push(Finding::ExtraConnection { sink: sink.clone(), driver: driver.clone() });
        }
    }
    findings.sort();
    Ok(Report { findings })
}

/// Valid counterpart of a data driver pin.
fn valid_of(ep: &Endpoint) -> Endpoint {
    if let Some(rest) = ep.inst.strip_prefix("mux_") {
        return Endpoint::new(format!("vmux_{rest}"), "O");
    }
    if ep.inst.starts_with("reg_") && ep.pin == "Q" {
        return Endpoint::new(&ep.inst, "VO");
    }
    if let Some(p) = ep.pin.strip_prefix("O_") {
        return Endpoint::new(&ep.inst, format!("VO_{p}"));
    }
    if let Some(rest) = ep.inst.strip_prefix("const_") {
        if let Some(base) = rest.strip_suffix("_d") {
            return Endpoint::new(format!("const_{base}_vi"), "O");
        }
        return Endpoint::new(format!("vconst_{rest}"), "O");
    }
    Endpoint::new(&ep.inst, format!("V{}", ep.pin))
}

/// Checks that the valid plane of a ready-valid netlist mirrors its data
/// plane: each valid mux has the data mux's arity and select, each valid
/// input comes from the valid output matching the data input's driver.
pub fn verify_valid_mirror(netlist: &StructNetlist) -> Report {
    let prims = netlist.instance_index();
    let mut driver_of: BTreeMap<&Endpoint, &Endpoint> = BTreeMap::new();
    for w in &netlist.wires {
        for s in &w.sinks {
            driver_of.insert(s, &w.driver);
        }
    }
    let mut findings = Vec::new();
    let check = |data_sink: Endpoint, valid_sink: Endpoint| -> Option<Finding> {
        let d = driver_of.get(&data_sink)?;
        let expected = if data_sink.pin == "S" { (*d).clone() } else { valid_of(d) };
        match driver_of.get(&valid_sink) {
            None => Some(Finding::MissingConnection { sink: valid_sink, expected }),
            Some(found) if **found != expected => {
                Some(Finding::WrongDriver { sink: valid_sink, expected, found: (*found).clone() })
            }
            _ => None,
        }
    };
    for inst in &netlist.instances {
        match &inst.prim {
            Primitive::Mux { inputs, role: MuxRole::Sb | MuxRole::Cb, .. } => {
                let vname = format!("v{}", inst.name);
                match prims.get(vname.as_str()).map(|v| &v.prim) {
                    Some(Primitive::Mux { inputs: k, role: MuxRole::Valid, .. }) => {
                        if k != inputs {
                            findings.push(Finding::WrongArity { name: vname.clone(), expected: *inputs, found: *k });
                        }
                    }
                    _ => {
                        findings.push(Finding::MissingInstance { name: vname });
                        continue;
                    }
                }
                for j in 0..*inputs {
                    findings.extend(check(Endpoint::new(&inst.name, format!("I{j}")), Endpoint::new(&vname, format!("I{j}"))));
                }
                findings.extend(check(Endpoint::new(&inst.name, "S"), Endpoint::new(&vname, "S")));
            }
            Primitive::FifoReg { .. } => {
                findings.extend(check(Endpoint::new(&inst.name, "D"), Endpoint::new(&inst.name, "VI")))
            }
            Primitive::Core { .. } => {
                for w in &netlist.wires {
                    for s in w.sinks.iter().filter(|s| s.inst == inst.name) {
                        if let Some(p) = s.pin.strip_prefix("I_") {
                            findings.extend(check(s.clone(), Endpoint::new(&inst.name, format!("VI_{p}"))));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    findings.sort();
    Report { findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{create_uniform_interconnect, ArchSpec, Topology};
    use crate::rtl::{lower_ready_valid, lower_static, FifoMode};

    fn graph() -> RoutingGraph {
        create_uniform_interconnect(&ArchSpec::uniform(2, 2, 2, Topology::Wilton, 0.5)).unwrap()
    }

    #[test]
    fn lowered_netlist_verifies() {
        let g = graph();
        let n = lower_static(&g).unwrap();
        let r = verify_structure(&g, &n).unwrap();
        assert!(r.is_ok(), "{r}");
        let (rv, _) = lower_ready_valid(&g, FifoMode::Full2).unwrap();
        assert!(verify_structure(&g, &rv).unwrap().is_ok());
        let m = verify_valid_mirror(&rv);
        assert!(m.is_ok(), "{m}");
    }

    #[test]
    fn swapped_inputs_are_caught() {
        let g = graph();
        let mut n = lower_static(&g).unwrap();
        let mux = n.instances.iter().find(|i| matches!(i.prim, Primitive::Mux { inputs: 3.., .. })).unwrap().name.clone();
        for w in &mut n.wires {
            for s in &mut w.sinks {
                if s.inst == mux && s.pin == "I0" {
                    s.pin = "I1".into();
                } else if s.inst == mux && s.pin == "I1" {
                    s.pin = "I0".into();
                }
            }
        }
        let r = verify_structure(&g, &n).unwrap();
        assert_eq!(r.findings.iter().filter(|f| matches!(f, Finding::WrongDriver { .. })).count(), 2);
    }

    #[test]
    fn removed_mux_is_missing() {
        let g = graph();
        let mut n = lower_static(&g).unwrap();
        let idx = n.instances.iter().position(|i| matches!(i.prim, Primitive::Mux { .. })).unwrap();
        let name = n.instances.remove(idx).name;
        let r = verify_structure(&g, &n).unwrap();
        assert!(r.findings.contains(&Finding::MissingInstance { name }));
    }
}
