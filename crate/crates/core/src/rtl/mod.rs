//! Structural netlist: lowering from the IR, configuration layout, a small
//! Verilog-like text format, and structural verification against the IR.

mod config;
mod join;
mod lower;
mod text;
mod verify;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

pub use config::{format_config_map, pack_address, parse_config_map, unpack_address, ConfigField, FieldMeaning, CONFIG_WORD_BITS};
pub use join::{ready_join, ready_join_lut, JoinInput};
pub use lower::{lower_ready_valid, lower_static, names, FifoMode, RtlDiagnostic};
pub use text::{emit_rtl, parse_rtl};
pub use verify::{verify_structure, verify_valid_mirror, Finding, Report};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RtlError {
    #[error("graph is not valid: {0}")]
    InvalidGraph(String),
    #[error("rtl parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("one-hot select vector {0:#b} has more than one bit set")]
    MalformedOneHot(u32),
    #[error("config map error at line {line}: {message}")]
    ConfigMap { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MuxRole {
    /// Switch-box output, register bypass or any other routing mux.
    Sb,
    /// Connection box feeding a core input.
    Cb,
    /// 1-bit valid mux mirroring a data mux.
    Valid,
}

impl MuxRole {
    pub fn name(self) -> &'static str {
        match self {
            MuxRole::Sb => "sb",
            MuxRole::Cb => "cb",
            MuxRole::Valid => "valid",
        }
    }

    fn parse(s: &str) -> Option<MuxRole> {
        match s {
            "sb" => Some(MuxRole::Sb),
            "cb" => Some(MuxRole::Cb),
            "valid" => Some(MuxRole::Valid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    Mux { inputs: u32, width: u32, role: MuxRole },
    Reg { width: u32 },
    /// FIFO-capable register. `depth` 2 is a full FIFO, 1 is one half of a
    /// split FIFO whose control is shared with the neighbouring register.
    FifoReg { width: u32, depth: u32 },
    CfgReg { bits: u32 },
    Core { name: String },
    Const { width: u32, value: u64 },
    /// Ready join: AND over consumers of (not selected || ready).
    Join { sel_index: Vec<Option<u32>> },
}

impl Primitive {
    pub fn type_name(&self) -> &'static str {
        match self {
            Primitive::Mux { .. } => "MUX",
            Primitive::Reg { .. } => "REG",
            Primitive::FifoReg { .. } => "FIFO_REG",
            Primitive::CfgReg { .. } => "CFG_REG",
            Primitive::Core { .. } => "CORE",
            Primitive::Const { .. } => "CONST",
            Primitive::Join { .. } => "JOIN",
        }
    }

    pub fn is_output_pin(&self, pin: &str) -> bool {
        match self {
            Primitive::Core { .. } => pin.starts_with("O_") || pin.starts_with("VO_") || pin.starts_with("RO_"),
            _ => matches!(pin, "O" | "Q" | "VO" | "RO" | "CO"),
        }
    }

    /// Bits of state, excluding configuration registers.
    pub fn storage_bits(&self) -> u64 {
        match *self {
            Primitive::Reg { width } => width as u64,
            // Each entry holds data plus its valid bit; a two-entry FIFO also
            // keeps a read and a write pointer.
            Primitive::FifoReg { width, depth } => {
                let ptr = if depth > 1 { 2 * (depth as u64 - 1) } else { 0 };
                depth as u64 * (width as u64 + 1) + ptr
            }
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub inst: String,
    pub pin: String,
}

impl Endpoint {
    pub fn new(inst: impl Into<String>, pin: impl Into<String>) -> Self {
        Endpoint { inst: inst.into(), pin: pin.into() }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.inst, self.pin)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance {
    pub name: String,
    pub prim: Primitive,
    pub tile: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire {
    pub name: String,
    pub width: u32,
    pub driver: Endpoint,
    pub sinks: Vec<Endpoint>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructNetlist {
    pub instances: Vec<Instance>,
    pub wires: Vec<Wire>,
    pub config_map: Vec<ConfigField>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AreaMetrics {
    pub mux_input_count: u64,
    pub config_bits: u64,
    pub storage_bits: u64,
    pub join_gates: u64,
    pub gate_count_estimate: u64,
    pub sb_mux_inputs: u64,
    pub cb_mux_inputs: u64,
    /// Switch-box muxes: inputs x width plus their select bits x `REG_GATES`.
    pub sb_area: u64,
    /// Connection-box muxes, same formula as `sb_area`.
    pub cb_area: u64,
}

/// Gate-equivalents per flip-flop bit in the area proxy.
pub const REG_GATES: u64 = 6;
/// Gate-equivalents per ready-join input (one OR with inverted select, one AND leg).
pub const JOIN_GATES_PER_INPUT: u64 = 2;

impl StructNetlist {
    /// Sorts instances, wires, sinks and config fields so that equal
    /// structures compare equal.
    pub fn normalize(&mut self) {
        self.instances.sort_by(|a, b| (a.tile, &a.name).cmp(&(b.tile, &b.name)));
        for w in &mut self.wires {
            w.sinks.sort();
        }
        self.wires.sort_by(|a, b| a.name.cmp(&b.name));
        self.config_map.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn instance_index(&self) -> HashMap<&str, &Instance> {
        self.instances.iter().map(|i| (i.name.as_str(), i)).collect()
    }

    pub fn instance(&self, name: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.name == name)
    }

    /// Map from sink endpoint to the wire feeding it.
    pub fn sink_index(&self) -> HashMap<&Endpoint, &Wire> {
        let mut out = HashMap::new();
        for w in &self.wires {
            for s in &w.sinks {
                out.insert(s, w);
            }
        }
        out
    }

    /// Checks single drivers, unique names and mux pin counts.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut names = HashMap::new();
        for inst in &self.instances {
            if names.insert(inst.name.as_str(), inst).is_some() {
                problems.push(format!("duplicate instance `{}`", inst.name));
            }
        }
        let mut wire_names = HashMap::new();
        let mut pins: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for w in &self.wires {
            if wire_names.insert(w.name.as_str(), ()).is_some() {
                problems.push(format!("duplicate wire `{}`", w.name));
            }
            for ep in std::iter::once(&w.driver).chain(&w.sinks) {
                pins.entry(ep.inst.as_str()).or_default().push(ep.pin.as_str());
                if !names.contains_key(ep.inst.as_str()) {
                    problems.push(format!("wire `{}` references unknown instance `{}`", w.name, ep.inst));
                }
            }
            match names.get(w.driver.inst.as_str()) {
                Some(inst) if !inst.prim.is_output_pin(&w.driver.pin) => {
                    problems.push(format!("wire `{}` driven by input pin {}", w.name, w.driver))
                }
                _ => {}
            }
        }
        for inst in &self.instances {
            let used = pins.get(inst.name.as_str()).cloned().unwrap_or_default();
            let mut seen = HashMap::new();
            for p in &used {
                if seen.insert(*p, ()).is_some() {
                    problems.push(format!("pin {}.{p} connected twice", inst.name));
                }
            }
            if let Primitive::Mux { inputs, .. } = inst.prim {
                let data = used.iter().filter(|p| p.starts_with('I')).count() as u32;
                if data != inputs {
                    problems.push(format!("mux `{}` has {data} of {inputs} data inputs", inst.name));
                }
                if !used.contains(&"S") && inputs > 1 {
                    problems.push(format!("mux `{}` has no select", inst.name));
                }
            }
        }
        problems
    }

    pub fn area_proxy(&self) -> AreaMetrics {
        let mut m = AreaMetrics::default();
        let mut select_bits: HashMap<&str, u64> = HashMap::new();
        for f in &self.config_map {
            if f.meaning == FieldMeaning::MuxSelect {
                select_bits.insert(f.target.inst.as_str(), f.bit_width as u64);
            }
        }
        let mut mux_gates = 0;
        for inst in &self.instances {
            match &inst.prim {
                Primitive::Mux { inputs, width, role } => {
                    let (k, w) = (*inputs as u64, *width as u64);
                    m.mux_input_count += k;
                    mux_gates += k * w;
                    let sel = select_bits.get(inst.name.as_str()).copied().unwrap_or(0);
                    match role {
                        MuxRole::Sb => {
                            m.sb_mux_inputs += k;
                            m.sb_area += k * w + sel * REG_GATES;
                        }
                        MuxRole::Cb => {
                            m.cb_mux_inputs += k;
                            m.cb_area += k * w + sel * REG_GATES;
                        }
                        MuxRole::Valid => {}
                    }
                }
                Primitive::CfgReg { bits } => m.config_bits += *bits as u64,
                Primitive::Join { sel_index } => m.join_gates += JOIN_GATES_PER_INPUT * sel_index.len() as u64,
                p => m.storage_bits += p.storage_bits(),
            }
        }
        m.gate_count_estimate = mux_gates + m.storage_bits * REG_GATES + m.join_gates;
        m
    }

    pub fn count_primitives(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for i in &self.instances {
            *out.entry(i.prim.type_name()).or_insert(0) += 1;
        }
        out
    }
}

/// Incrementally assembles a netlist from pin connections.
#[derive(Default)]
pub(crate) struct NetlistBuilder {
    instances: Vec<Instance>,
    nets: BTreeMap<String, (u32, Option<Endpoint>, Vec<Endpoint>)>,
}

impl NetlistBuilder {
    pub fn add(&mut self, name: impl Into<String>, prim: Primitive, tile: (u32, u32)) -> String {
        let name = name.into();
        self.instances.push(Instance { name: name.clone(), prim, tile });
        name
    }

    pub fn drive(&mut self, net: &str, width: u32, inst: &str, pin: &str) {
        let e = self.nets.entry(net.to_string()).or_insert((width, None, Vec::new()));
        debug_assert!(e.1.is_none(), "net {net} driven twice");
        e.1 = Some(Endpoint::new(inst, pin));
    }

    pub fn sink(&mut self, net: &str, width: u32, inst: &str, pin: &str) {
        let e = self.nets.entry(net.to_string()).or_insert((width, None, Vec::new()));
        e.2.push(Endpoint::new(inst, pin));
    }

    pub fn finish(self, config_map: Vec<ConfigField>) -> StructNetlist {
        let wires = self
            .nets
            .into_iter()
            .map(|(name, (width, driver, sinks))| Wire {
                driver: driver.unwrap_or_else(|| panic!("net `{name}` has no driver")),
                name,
                width,
                sinks,
            })
            .collect();
        StructNetlist { instances: self.instances, wires, config_map }.normalized()
    }
}

/// `ceil(log2(k))`, the select width of a `k`-input mux.
pub fn select_width(k: u32) -> u32 {
    if k <= 1 {
        0
    } else {
        32 - (k - 1).leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_widths() {
        assert_eq!(select_width(1), 0);
        assert_eq!(select_width(2), 1);
        assert_eq!(select_width(3), 2);
        assert_eq!(select_width(4), 2);
        assert_eq!(select_width(5), 3);
        assert_eq!(select_width(20), 5);
    }

    #[test]
    fn empty_netlist_has_zero_area() {
        assert_eq!(StructNetlist::default().area_proxy(), AreaMetrics::default());
    }

    #[test]
    fn fifo_storage_ordering() {
        let reg = Primitive::Reg { width: 16 }.storage_bits();
        let split = Primitive::FifoReg { width: 16, depth: 1 }.storage_bits();
        let full = Primitive::FifoReg { width: 16, depth: 2 }.storage_bits();
        assert!(reg < split && split < full);
        assert_eq!(full, 2 * 17 + 2);
    }
}
