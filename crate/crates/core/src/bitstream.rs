//! Bitstream generation from routes, decoding back into a configured fabric,
//! a token-level functional simulator, and the per-edge connection sweep.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::ir::{NodeId, NodeKind, RoutingGraph};
use crate::pack::PackedGraph;
use crate::place::Placement;
use crate::route::RouteSet;
use crate::rtl::{names, ConfigField, FieldMeaning, FifoMode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitstreamError {
    #[error("field {field} claimed by both {first} and {second}")]
    FieldConflict { field: String, first: String, second: String },
    #[error("no configuration field named {0}")]
    UnknownField(String),
    #[error("address {0:08X} does not decode to a configuration register")]
    BadAddress(u32),
    #[error("select {value} out of range for {field} (fan-in {fan_in})")]
    SelectOutOfRange { field: String, value: u32, fan_in: usize },
    #[error("bitstream parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Configuration words keyed by address; iteration order is ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bitstream {
    pub words: BTreeMap<u32, u32>,
}

impl Bitstream {
    pub fn set_field(&mut self, f: &ConfigField, value: u32) {
        let w = self.words.entry(f.address()).or_insert(0);
        *w = (*w & !f.mask()) | ((value << f.bit_offset) & f.mask());
    }

    pub fn field(&self, f: &ConfigField) -> u32 {
        self.words.get(&f.address()).map_or(0, |&w| f.extract(w))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn parse(text: &str) -> Result<Bitstream, BitstreamError> {
        let mut words = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let err = |message: String| BitstreamError::Parse { line: i + 1, message };
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(a), Some(d), None) = (it.next(), it.next(), it.next()) else {
                return Err(err(format!("expected `ADDR DATA`, got `{line}`")));
            };
            let parse = |s: &str| {
                if s.len() != 8 {
                    return Err(err(format!("`{s}` is not 8 hex digits")));
                }
                u32::from_str_radix(s, 16).map_err(|_| err(format!("`{s}` is not hex")))
            };
            if words.insert(parse(a)?, parse(d)?).is_some() {
                return Err(err(format!("duplicate address {a}")));
            }
        }
        Ok(Bitstream { words })
    }
}

impl fmt::Display for Bitstream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, d) in &self.words {
            writeln!(f, "{a:08X} {d:08X}")?;
        }
        Ok(())
    }
}

/// Name lookups shared by generation and decoding.
pub struct FabricIndex<'a> {
    g: &'a RoutingGraph,
    fields: HashMap<&'a str, &'a ConfigField>,
    by_inst: HashMap<String, NodeId>,
    addresses: std::collections::HashSet<u32>,
}

impl<'a> FabricIndex<'a> {
    pub fn new(g: &'a RoutingGraph, config_map: &'a [ConfigField]) -> Self {
        let mut by_inst = HashMap::new();
        for (id, n) in g.nodes() {
            if g.preds(id).len() >= 2 {
                by_inst.insert(names::mux(n), id);
            }
            if matches!(n.kind, NodeKind::Register { .. }) {
                by_inst.insert(names::reg(n), id);
            }
        }
        FabricIndex {
            g,
            fields: config_map.iter().map(|f| (f.name.as_str(), f)).collect(),
            by_inst,
            addresses: config_map.iter().map(|f| f.address()).collect(),
        }
    }

    pub fn field(&self, name: &str) -> Result<&'a ConfigField, BitstreamError> {
        self.fields.get(name).copied().ok_or_else(|| BitstreamError::UnknownField(name.to_string()))
    }

    pub fn select_field(&self, node: NodeId) -> Result<&'a ConfigField, BitstreamError> {
        self.field(&names::select_field(self.g.get(node)))
    }
}

/// Mux selections, register modes and core settings decoded from a
/// bitstream. Muxes without an entry select input 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfiguredFabric {
    pub selection: BTreeMap<NodeId, u32>,
    pub fifo_mode: BTreeMap<NodeId, u32>,
    pub fifo_role: BTreeMap<NodeId, u32>,
    pub core: BTreeMap<String, u32>,
}

impl ConfiguredFabric {
    /// The predecessor a node forwards from, if any.
    pub fn selected(&self, g: &RoutingGraph, node: NodeId) -> Option<NodeId> {
        let preds = g.preds(node);
        match preds.len() {
            0 => None,
            1 => Some(preds[0]),
            _ => preds.get(self.selection.get(&node).copied().unwrap_or(0) as usize).copied(),
        }
    }

    /// Selections differing from the default, for comparison with
    /// [`crate::route::selection_map`].
    pub fn non_default_selection(&self) -> BTreeMap<NodeId, u32> {
        self.selection.iter().filter(|(_, &v)| v != 0).map(|(&k, &v)| (k, v)).collect()
    }
}

struct Claims<'a> {
    owner: HashMap<&'a str, (String, u32)>,
}

impl<'a> Claims<'a> {
    fn claim(&mut self, f: &'a ConfigField, net: &str, value: u32) -> Result<(), BitstreamError> {
        match self.owner.get(f.name.as_str()) {
            Some((o, _)) if o != net => Err(BitstreamError::FieldConflict {
                field: f.name.clone(),
                first: o.clone(),
                second: net.to_string(),
            }),
            Some((_, v)) if *v != value => Err(BitstreamError::FieldConflict {
                field: f.name.clone(),
                first: net.to_string(),
                second: net.to_string(),
            }),
            _ => {
                self.owner.insert(&f.name, (net.to_string(), value));
                Ok(())
            }
        }
    }
}

/// Application data for core configuration fields.
pub struct CoreSettings<'a> {
    pub packed: &'a PackedGraph,
    pub placement: &'a Placement,
}

/// Sets the select field of every mux on every tree to the tree's input,
/// enables FIFO mode on used registers when the fabric has FIFO fields, and
/// writes folded constants and absorbed registers into core fields. With
/// `include_defaults` every configured address appears, zero if unused.
pub fn generate_bitstream(
    g: &RoutingGraph,
    config_map: &[ConfigField],
    routes: &RouteSet,
    cores: Option<CoreSettings<'_>>,
    include_defaults: bool,
) -> Result<Bitstream, BitstreamError> {
    let idx = FabricIndex::new(g, config_map);
    let mut b = Bitstream::default();
    if include_defaults {
        for f in config_map {
            b.words.entry(f.address()).or_insert(0);
        }
    }
    let mut claims = Claims { owner: HashMap::new() };
    for (net, tree) in routes {
        for (a, v) in tree.edges() {
            let preds = g.preds(v);
            if preds.len() >= 2 {
                let sel = preds.iter().position(|&p| p == a).unwrap() as u32;
                let f = idx.select_field(v)?;
                claims.claim(f, net, sel)?;
                b.set_field(f, sel);
            }
        }
        for v in tree.nodes() {
            let n = g.get(v);
            if !matches!(n.kind, NodeKind::Register { .. }) {
                continue;
            }
            let sig = names::signal(n);
            if let Ok(f) = idx.field(&format!("cfg_{sig}_fifo")) {
                claims.claim(f, net, 1)?;
                b.set_field(f, 1);
            }
            if let Ok(f) = idx.field(&format!("cfg_{sig}_role")) {
                claims.claim(f, net, 1)?;
                b.set_field(f, 1);
            }
        }
    }
    if let Some(c) = cores {
        for inst in &c.packed.instances {
            let Some((x, y)) = c.placement.get(&inst.name) else { continue };
            let settings = inst
                .consts
                .iter()
                .flat_map(|(p, &v)| [(p, "const_en", 1u32), (p, "const", v as u32)])
                .chain(inst.input_regs.keys().map(|p| (p, "reg", 1u32)));
            for (port, suffix, value) in settings {
                let node = g.find_port(x, y, port).ok_or_else(|| BitstreamError::UnknownField(format!("{}.{port}", inst.name)))?;
                let f = idx.field(&format!("cfg_{}_{suffix}", names::signal(g.get(node))))?;
                claims.claim(f, &inst.name, value)?;
                b.set_field(f, value);
            }
        }
    }
    Ok(b)
}

/// Decodes a bitstream against a configuration map. Every address must
/// belong to a configured register; missing words read as zero.
pub fn configure(g: &RoutingGraph, config_map: &[ConfigField], b: &Bitstream) -> Result<ConfiguredFabric, BitstreamError> {
    configure_with(&FabricIndex::new(g, config_map), config_map, b)
}

pub fn configure_with(idx: &FabricIndex<'_>, config_map: &[ConfigField], b: &Bitstream) -> Result<ConfiguredFabric, BitstreamError> {
    if let Some(&a) = b.words.keys().find(|a| !idx.addresses.contains(a)) {
        return Err(BitstreamError::BadAddress(a));
    }
    let mut out = ConfiguredFabric::default();
    for f in config_map {
        let value = b.field(f);
        match f.meaning {
            FieldMeaning::MuxSelect => {
                let Some(&node) = idx.by_inst.get(&f.target.inst) else { continue };
                let fan_in = idx.g.preds(node).len();
                if value as usize >= fan_in {
                    return Err(BitstreamError::SelectOutOfRange { field: f.name.clone(), value, fan_in });
                }
                out.selection.insert(node, value);
            }
            FieldMeaning::FifoMode | FieldMeaning::SplitFifoRole => {
                let Some(&node) = idx.by_inst.get(&f.target.inst) else { continue };
                let m = if f.meaning == FieldMeaning::FifoMode { &mut out.fifo_mode } else { &mut out.fifo_role };
                m.insert(node, value);
            }
            FieldMeaning::CoreConfig => {
                out.core.insert(f.name.clone(), value);
            }
        }
    }
    Ok(out)
}

pub type Token = u64;

/// Arrival at a node: the token and the number of registers it passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub token: Token,
    pub tick: u32,
}

/// Propagates tokens from source nodes along configured selections. A node
/// receives a token only from the predecessor it selects; registers add one
/// tick.
pub fn functional_sim(g: &RoutingGraph, f: &ConfiguredFabric, stimulus: &BTreeMap<NodeId, Token>) -> BTreeMap<NodeId, Arrival> {
    let mut out = BTreeMap::new();
    let mut queue = VecDeque::new();
    for (&n, &token) in stimulus {
        out.insert(n, Arrival { token, tick: 0 });
        queue.push_back(n);
    }
    while let Some(v) = queue.pop_front() {
        let a = out[&v];
        for &s in g.succs(v) {
            if out.contains_key(&s) || f.selected(g, s) != Some(v) {
                continue;
            }
            let tick = a.tick + matches!(g.get(s).kind, NodeKind::Register { .. }) as u32;
            out.insert(s, Arrival { token: a.token, tick });
            queue.push_back(s);
        }
    }
    out
}

/// FIFO capacity of each register on `path` under the configured modes.
/// Registers outside FIFO mode hold one token; a split FIFO stage holds one
/// token so two adjacent stages form a depth-2 queue.
pub fn fifo_depths(g: &RoutingGraph, f: &ConfiguredFabric, path: &[NodeId], mode: FifoMode) -> Vec<u32> {
    path.iter()
        .filter(|&&n| matches!(g.get(n).kind, NodeKind::Register { .. }))
        .map(|n| match (f.fifo_mode.get(n).copied().unwrap_or(0), mode) {
            (0, _) => 1,
            (_, FifoMode::Full2) => 2,
            (_, FifoMode::Split { .. }) => 1,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamTrace {
    /// Tokens in arrival order with their delivery cycle.
    pub delivered: Vec<(Token, u64)>,
    /// Highest occupancy seen per stage.
    pub max_occupancy: Vec<u32>,
}

/// Streams `tokens` through a chain of FIFO stages of the given depths. The
/// sink takes a token on cycles where `ready(cycle)` holds; each stage moves
/// at most one token per cycle.
pub fn stream_sim(depths: &[u32], tokens: &[Token], ready: &dyn Fn(u64) -> bool, max_cycles: u64) -> StreamTrace {
    let mut stages: Vec<VecDeque<Token>> = vec![VecDeque::new(); depths.len()];
    let mut max_occupancy = vec![0u32; depths.len()];
    let mut pending = tokens.iter().copied();
    let mut next = pending.next();
    let mut delivered = Vec::new();
    for cycle in 0..max_cycles {
        if delivered.len() == tokens.len() {
            break;
        }
        if ready(cycle) {
            if let Some(last) = stages.last_mut() {
                if let Some(t) = last.pop_front() {
                    delivered.push((t, cycle));
                }
            } else if let Some(t) = next.take() {
                delivered.push((t, cycle));
                next = pending.next();
            }
        }
        for i in (1..stages.len()).rev() {
            if (stages[i].len() as u32) < depths[i] {
                if let Some(t) = stages[i - 1].pop_front() {
                    stages[i].push_back(t);
                }
            }
        }
        if let Some(first) = stages.first_mut() {
            if (first.len() as u32) < depths[0] {
                if let Some(t) = next.take() {
                    first.push_back(t);
                    next = pending.next();
                }
            }
        }
        for (m, s) in max_occupancy.iter_mut().zip(&stages) {
            *m = (*m).max(s.len() as u32);
        }
    }
    StreamTrace { delivered, max_occupancy }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeFailure {
    pub from: NodeId,
    pub to: NodeId,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub cases: usize,
    pub failures: Vec<EdgeFailure>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} edges, {} failed", self.cases, self.failures.len())?;
        for e in &self.failures {
            writeln!(f, "FAIL {} -> {}: {}", e.from.0, e.to.0, e.reason)?;
        }
        Ok(())
    }
}

/// Tests every edge `(a, b)`: encodes "b selects a" with the `sidecar` map,
/// decodes the bitstream with the `hardware` map (the one the netlist was
/// built with), injects a unique token at `a` and checks it reaches `b`.
pub fn exhaustive_sweep(g: &RoutingGraph, sidecar: &[ConfigField], hardware: &[ConfigField]) -> SweepReport {
    let enc = FabricIndex::new(g, sidecar);
    let dec = FabricIndex::new(g, hardware);
    let edges: Vec<(NodeId, NodeId)> = g.edges().collect();
    let mut failures: Vec<EdgeFailure> = edges
        .par_iter()
        .enumerate()
        .filter_map(|(i, &(a, b))| {
            let fail = |reason: String| Some(EdgeFailure { from: a, to: b, reason });
            let mut bits = Bitstream::default();
            let preds = g.preds(b);
            if preds.len() >= 2 {
                let f = match enc.select_field(b) {
                    Ok(f) => f,
                    Err(e) => return fail(e.to_string()),
                };
                bits.set_field(f, preds.iter().position(|&p| p == a).unwrap() as u32);
            }
            let fabric = match configure_with(&dec, hardware, &bits) {
                Ok(f) => f,
                Err(e) => return fail(e.to_string()),
            };
            let token = 1000 + i as Token;
            let out = functional_sim(g, &fabric, &BTreeMap::from([(a, token)]));
            match out.get(&b) {
                Some(arr) if arr.token == token => None,
                _ => fail(format!("token {token} did not arrive")),
            }
        })
        .collect();
    failures.sort_by_key(|e| (e.to, e.from));
    SweepReport { cases: edges.len(), failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{create_uniform_interconnect, ArchSpec, Topology};
    use crate::route::RouteTree;
    use crate::rtl::lower_static;

    fn fabric(w: u32, tracks: u32, topo: Topology) -> (RoutingGraph, Vec<ConfigField>) {
        let g = create_uniform_interconnect(&ArchSpec::uniform(w, w, tracks, topo, 0.0)).unwrap();
        let n = lower_static(&g).unwrap();
        (g, n.config_map)
    }

    #[test]
    fn file_format() {
        let mut b = Bitstream::default();
        b.words.insert(0x0102_0300, 5);
        b.words.insert(0x0001_0000, 0xdead_beef);
        let s = b.to_string();
        assert_eq!(s, "00010000 DEADBEEF\n01020300 00000005\n");
        assert_eq!(Bitstream::parse(&s).unwrap(), b);
        assert!(Bitstream::parse("123 4\n").is_err());
    }

    #[test]
    fn empty_routes() {
        let (g, map) = fabric(2, 2, Topology::Wilton);
        assert!(generate_bitstream(&g, &map, &RouteSet::new(), None, false).unwrap().is_empty());
        let d = generate_bitstream(&g, &map, &RouteSet::new(), None, true).unwrap();
        assert!(d.words.values().all(|&w| w == 0));
        let f = configure(&g, &map, &d).unwrap();
        assert!(f.non_default_selection().is_empty());
    }

    #[test]
    fn bad_address_and_range() {
        let (g, map) = fabric(2, 2, Topology::Wilton);
        let mut b = Bitstream::default();
        b.words.insert(crate::rtl::pack_address(0, 0, 200, 0), 1);
        assert!(matches!(configure(&g, &map, &b), Err(BitstreamError::BadAddress(_))));
        let f = map.iter().find(|f| f.meaning == FieldMeaning::MuxSelect).unwrap();
        let mut b = Bitstream::default();
        b.set_field(f, f.max_value() as u32);
        let fan_in = 1u64 << f.bit_width;
        if f.max_value() + 1 == fan_in && fan_in > 2 {
            // Power-of-two fan-in: every value is in range.
            return;
        }
        assert!(matches!(configure(&g, &map, &b), Err(BitstreamError::SelectOutOfRange { .. })));
    }

    #[test]
    fn conflict_detected() {
        let (g, map) = fabric(2, 2, Topology::Wilton);
        let (b, _) = g.nodes().find(|(id, _)| g.preds(*id).len() >= 2).unwrap();
        let (p0, p1) = (g.preds(b)[0], g.preds(b)[1]);
        let mut r = RouteSet::new();
        r.insert("n1".into(), RouteTree { source: p0, sinks: vec![b], branches: vec![vec![p0, b]] });
        r.insert("n2".into(), RouteTree { source: p1, sinks: vec![b], branches: vec![vec![p1, b]] });
        assert!(matches!(generate_bitstream(&g, &map, &r, None, false), Err(BitstreamError::FieldConflict { .. })));
    }

    #[test]
    fn unselected_driver_blocked() {
        let (g, _) = fabric(2, 2, Topology::Wilton);
        let (b, _) = g.nodes().find(|(id, _)| g.preds(*id).len() >= 2).unwrap();
        let (p0, p1) = (g.preds(b)[0], g.preds(b)[1]);
        let f = ConfiguredFabric::default();
        let out = functional_sim(&g, &f, &BTreeMap::from([(p1, 7)]));
        assert!(!out.contains_key(&b));
        let out = functional_sim(&g, &f, &BTreeMap::from([(p0, 7)]));
        assert_eq!(out[&b], Arrival { token: 7, tick: 0 });
    }

    #[test]
    fn sweep_small_disjoint() {
        let (g, map) = fabric(2, 2, Topology::Disjoint);
        let r = exhaustive_sweep(&g, &map, &map);
        assert_eq!(r.cases, g.edge_count());
        assert!(r.passed(), "{r}");
        assert_eq!(exhaustive_sweep(&RoutingGraph::new(1, 1), &[], &[]), SweepReport::default());
    }

    #[test]
    fn stream_fifo_order_and_bounds() {
        let toks: Vec<Token> = (0..10).collect();
        let t = stream_sim(&[2, 1, 1], &toks, &|c| c % 3 == 0, 1000);
        assert_eq!(t.delivered.iter().map(|d| d.0).collect::<Vec<_>>(), toks);
        assert!(t.max_occupancy[0] <= 2 && t.max_occupancy[1] <= 1);
        let fast = stream_sim(&[2], &toks, &|_| true, 1000);
        assert!(fast.delivered.last().unwrap().1 < t.delivered.last().unwrap().1);
        assert!(stream_sim(&[1], &toks, &|_| false, 50).delivered.is_empty());
    }
}
