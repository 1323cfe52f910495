//! Application dataflow graphs and packing.
//!
//! Constants fold into their consumers' operand annotations and a pipeline
//! register feeding a single PE input is absorbed into that PE. Packing
//! returns the same graph type with annotations, so it can be re-applied.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PackError {
    #[error("app parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("port {0} is driven by more than one net")]
    MultiplyDrivenNet(String),
    #[error("net endpoint {0} does not name a valid instance port")]
    DanglingPort(String),
    #[error("duplicate instance `{0}`")]
    DuplicateInstance(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstKind {
    Pe,
    Mem,
    Io,
    Const,
    Reg,
}

impl InstKind {
    pub fn name(self) -> &'static str {
        match self {
            InstKind::Pe => "PE",
            InstKind::Mem => "MEM",
            InstKind::Io => "IO",
            InstKind::Const => "CONST",
            InstKind::Reg => "REG",
        }
    }

    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            InstKind::Pe => &["in0", "in1", "in2", "in3"],
            InstKind::Mem => &["in0", "in1"],
            InstKind::Io | InstKind::Reg => &["in0"],
            InstKind::Const => &[],
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            InstKind::Pe => &["out0", "out1"],
            _ => &["out0"],
        }
    }

    /// Kinds that occupy a fabric tile after packing.
    pub fn is_placeable(self) -> bool {
        self != InstKind::Const
    }
}

impl FromStr for InstKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "PE" => Ok(InstKind::Pe),
            "MEM" => Ok(InstKind::Mem),
            "IO" => Ok(InstKind::Io),
            "CONST" => Ok(InstKind::Const),
            "REG" => Ok(InstKind::Reg),
            _ => Err(format!("unknown instance kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub inst: String,
    pub port: String,
}

impl PortRef {
    pub fn new(inst: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef { inst: inst.into(), port: port.into() }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.inst, self.port)
    }
}

impl FromStr for PortRef {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (i, p) = s.rsplit_once('.').ok_or_else(|| format!("`{s}` is not inst.port"))?;
        if i.is_empty() || p.is_empty() {
            return Err(format!("`{s}` is not inst.port"));
        }
        Ok(PortRef::new(i, p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppInstance {
    pub name: String,
    pub kind: InstKind,
    pub attrs: BTreeMap<String, String>,
    /// Folded constant operands, by input port.
    pub consts: BTreeMap<String, u64>,
    /// Absorbed input registers, by input port.
    pub input_regs: BTreeMap<String, String>,
}

impl AppInstance {
    pub fn new(name: impl Into<String>, kind: InstKind) -> Self {
        AppInstance {
            name: name.into(),
            kind,
            attrs: BTreeMap::new(),
            consts: BTreeMap::new(),
            input_regs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, k: &str, v: impl ToString) -> Self {
        self.attrs.insert(k.to_string(), v.to_string());
        self
    }

    /// Fixed site from `x=`/`y=` attributes, if both are present.
    pub fn fixed_site(&self) -> Option<(u32, u32)> {
        Some((self.attrs.get("x")?.parse().ok()?, self.attrs.get("y")?.parse().ok()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppNet {
    pub source: PortRef,
    pub sinks: Vec<PortRef>,
}

impl AppNet {
    /// Nets are named after their source port.
    pub fn name(&self) -> String {
        self.source.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppGraph {
    pub instances: Vec<AppInstance>,
    pub nets: Vec<AppNet>,
}

/// An application graph after packing.
pub type PackedGraph = AppGraph;

impl AppGraph {
    pub fn instance(&self, name: &str) -> Option<&AppInstance> {
        self.instances.iter().find(|i| i.name == name)
    }

    pub fn add(&mut self, inst: AppInstance) {
        self.instances.push(inst);
    }

    pub fn connect(&mut self, source: PortRef, sinks: Vec<PortRef>) {
        self.nets.push(AppNet { source, sinks });
    }

    /// Checks name uniqueness, single drivers and port validity.
    pub fn validate(&self) -> Result<(), PackError> {
        let mut kinds = HashMap::new();
        for i in &self.instances {
            if kinds.insert(i.name.as_str(), i.kind).is_some() {
                return Err(PackError::DuplicateInstance(i.name.clone()));
            }
        }
        let mut sources = BTreeSet::new();
        let mut driven = BTreeSet::new();
        for n in &self.nets {
            let k = kinds.get(n.source.inst.as_str()).ok_or_else(|| PackError::DanglingPort(n.source.to_string()))?;
            if !k.outputs().contains(&n.source.port.as_str()) {
                return Err(PackError::DanglingPort(n.source.to_string()));
            }
            if !sources.insert(&n.source) {
                return Err(PackError::MultiplyDrivenNet(n.source.to_string()));
            }
            for s in &n.sinks {
                let k = kinds.get(s.inst.as_str()).ok_or_else(|| PackError::DanglingPort(s.to_string()))?;
                if !k.inputs().contains(&s.port.as_str()) {
                    return Err(PackError::DanglingPort(s.to_string()));
                }
                if !driven.insert(s) {
                    return Err(PackError::MultiplyDrivenNet(s.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Deterministic order: instances by name, nets by source, sinks sorted.
    pub fn canonicalize(&mut self) {
        self.instances.sort_by(|a, b| a.name.cmp(&b.name));
        for n in &mut self.nets {
            n.sinks.sort();
        }
        self.nets.retain(|n| !n.sinks.is_empty());
        self.nets.sort_by(|a, b| a.source.cmp(&b.source));
    }

    pub fn count(&self, kind: InstKind) -> usize {
        self.instances.iter().filter(|i| i.kind == kind).count()
    }
}

/// Parses `inst <name> <kind> [k=v ...]` and `net <src.port> -> <a.p>,<b.p>`
/// lines. `#` starts a comment. Annotations written by [`format_app`]
/// (`const.<port>=v`, `inreg.<port>=name`) are read back.
pub fn parse_app(text: &str) -> Result<AppGraph, PackError> {
    let mut g = AppGraph::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| PackError::Parse { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("inst") => {
                let name = toks.next().ok_or_else(|| err("missing instance name".into()))?;
                let kind: InstKind = toks.next().ok_or_else(|| err("missing kind".into()))?.parse().map_err(err)?;
                let mut inst = AppInstance::new(name, kind);
                for kv in toks {
                    let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("attribute `{kv}` is not key=value")))?;
                    if let Some(port) = k.strip_prefix("const.") {
                        let v = v.parse().map_err(|_| err(format!("constant `{v}` is not an integer")))?;
                        inst.consts.insert(port.to_string(), v);
                    } else if let Some(port) = k.strip_prefix("inreg.") {
                        inst.input_regs.insert(port.to_string(), v.to_string());
                    } else {
                        inst.attrs.insert(k.to_string(), v.to_string());
                    }
                }
                g.instances.push(inst);
            }
            Some("net") => {
                let rest = content["net".len()..].trim();
                let (src, sinks) = rest.split_once("->").ok_or_else(|| err("expected `src -> sinks`".into()))?;
                let source: PortRef = src.trim().parse().map_err(err)?;
                let sinks = sinks
                    .split(',')
                    .map(|s| s.trim().parse::<PortRef>().map_err(err))
                    .collect::<Result<Vec<_>, _>>()?;
                g.nets.push(AppNet { source, sinks });
            }
            Some(other) => return Err(err(format!("unknown statement `{other}`"))),
            None => unreachable!(),
        }
    }
    g.validate()?;
    Ok(g)
}

pub fn format_app(g: &AppGraph) -> String {
    let mut out = String::new();
    for i in &g.instances {
        out.push_str(&format!("inst {} {}", i.name, i.kind.name()));
        for (k, v) in &i.attrs {
            out.push_str(&format!(" {k}={v}"));
        }
        for (p, v) in &i.consts {
            out.push_str(&format!(" const.{p}={v}"));
        }
        for (p, r) in &i.input_regs {
            out.push_str(&format!(" inreg.{p}={r}"));
        }
        out.push('\n');
    }
    for n in &g.nets {
        let sinks: Vec<String> = n.sinks.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("net {} -> {}\n", n.source, sinks.join(",")));
    }
    out
}

/// Folds constants and absorbs PE input registers.
pub fn pack(a: &AppGraph) -> Result<PackedGraph, PackError> {
    a.validate()?;
    let mut g = a.clone();

    // Constants: annotate every consumer, then drop the constant and its nets.
    let consts: HashMap<String, u64> = g
        .instances
        .iter()
        .filter(|i| i.kind == InstKind::Const)
        .map(|i| (i.name.clone(), i.attrs.get("value").and_then(|v| v.parse().ok()).unwrap_or(0)))
        .collect();
    let mut folds = Vec::new();
    for n in &g.nets {
        if let Some(&v) = consts.get(&n.source.inst) {
            folds.extend(n.sinks.iter().map(|s| (s.clone(), v)));
        }
    }
    for (sink, v) in folds {
        if let Some(inst) = g.instances.iter_mut().find(|i| i.name == sink.inst) {
            inst.consts.insert(sink.port, v);
        }
    }
    g.nets.retain(|n| !consts.contains_key(&n.source.inst));
    g.instances.retain(|i| i.kind != InstKind::Const);

    // Registers: absorb until nothing changes.
    loop {
        let mut absorbed = None;
        for r in g.instances.iter().filter(|i| i.kind == InstKind::Reg) {
            let Some(out) = g.nets.iter().position(|n| n.source.inst == r.name) else { continue };
            let [sink] = g.nets[out].sinks.as_slice() else { continue };
            let Some(pe) = g.instance(&sink.inst) else { continue };
            if pe.kind != InstKind::Pe || pe.input_regs.contains_key(&sink.port) {
                continue;
            }
            let Some(fan_in) = g.nets.iter().position(|n| n.sinks.iter().any(|s| s.inst == r.name)) else { continue };
            absorbed = Some((r.name.clone(), out, fan_in, sink.clone()));
            break;
        }
        let Some((reg, out, fan_in, sink)) = absorbed else { break };
        for s in g.nets[fan_in].sinks.iter_mut() {
            if s.inst == reg {
                *s = sink.clone();
            }
        }
        g.nets.remove(out);
        g.instances.retain(|i| i.name != reg);
        let pe = g.instances.iter_mut().find(|i| i.name == sink.inst).unwrap();
        pe.input_regs.insert(sink.port, reg);
    }
    g.canonicalize();
    Ok(g)
}

/// Register counts along every source-to-sink path of a packed or unpacked
/// graph, keyed by (source instance, sink instance). Absorbed input
/// registers count on the edge entering their PE. Paths start at IO, MEM and
/// PE outputs and end at the first non-register instance.
pub fn path_register_counts(g: &AppGraph) -> BTreeMap<(String, String), BTreeSet<u32>> {
    let kind: HashMap<&str, &AppInstance> = g.instances.iter().map(|i| (i.name.as_str(), i)).collect();
    let mut out_edges: HashMap<&str, Vec<&PortRef>> = HashMap::new();
    for n in &g.nets {
        out_edges.entry(n.source.inst.as_str()).or_default().extend(n.sinks.iter());
    }
    let mut result: BTreeMap<(String, String), BTreeSet<u32>> = BTreeMap::new();
    for start in g.instances.iter().filter(|i| !matches!(i.kind, InstKind::Reg | InstKind::Const)) {
        let mut stack: Vec<(&str, u32)> = vec![(start.name.as_str(), 0)];
        let mut guard = 0usize;
        while let Some((node, regs)) = stack.pop() {
            guard += 1;
            if guard > 1_000_000 {
                break;
            }
            for s in out_edges.get(node).into_iter().flatten() {
                let Some(inst) = kind.get(s.inst.as_str()) else { continue };
                let r = regs + u32::from(inst.input_regs.contains_key(&s.port));
                if inst.kind == InstKind::Reg {
                    stack.push((inst.name.as_str(), r + 1));
                } else {
                    result.entry((start.name.clone(), inst.name.clone())).or_default().insert(r);
                }
            }
        }
    }
    result
}
