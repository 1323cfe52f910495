//! Directed-graph IR of the interconnect.
//!
//! Every routable resource is a node; every configurable or fixed wire is a
//! directed edge. Each bit width gets its own independent layer. Nodes are
//! identified by their semantic tuple (kind, position, side, track, ...), so
//! adding the same node twice hands back the original id.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::East, Side::South, Side::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Side {
        Side::ALL[i % 4]
    }

    pub fn opposite(self) -> Side {
        Side::from_index(self.index() + 2)
    }

    /// Next side in N, E, S, W order.
    pub fn clockwise(self) -> Side {
        Side::from_index(self.index() + 1)
    }

    pub fn counter_clockwise(self) -> Side {
        Side::from_index(self.index() + 3)
    }

    /// Tile offset of the neighbour across this side. North is row `y - 1`.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Side::North => (0, -1),
            Side::East => (1, 0),
            Side::South => (0, 1),
            Side::West => (-1, 0),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Side::North => 'N',
            Side::East => 'E',
            Side::South => 'S',
            Side::West => 'W',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::North => "North",
            Side::East => "East",
            Side::South => "South",
            Side::West => "West",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" | "north" => Ok(Side::North),
            "e" | "east" => Ok(Side::East),
            "s" | "south" => Ok(Side::South),
            "w" | "west" => Ok(Side::West),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Io {
    Incoming,
    Outgoing,
}

impl Io {
    pub fn name(self) -> &'static str {
        match self {
            Io::Incoming => "in",
            Io::Outgoing => "out",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    SwitchBox { side: Side, track: u32, io: Io },
    Port { name: String },
    Register { side: Side, track: u32 },
    RegMux { side: Side, track: u32 },
}

impl NodeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::SwitchBox { .. } => "sb",
            NodeKind::Port { .. } => "port",
            NodeKind::Register { .. } => "reg",
            NodeKind::RegMux { .. } => "regmux",
        }
    }

    pub fn track(&self) -> Option<u32> {
        match self {
            NodeKind::SwitchBox { track, .. }
            | NodeKind::Register { track, .. }
            | NodeKind::RegMux { track, .. } => Some(*track),
            NodeKind::Port { .. } => None,
        }
    }

    pub fn side(&self) -> Option<Side> {
        match self {
            NodeKind::SwitchBox { side, .. }
            | NodeKind::Register { side, .. }
            | NodeKind::RegMux { side, .. } => Some(*side),
            NodeKind::Port { .. } => None,
        }
    }
}

/// Semantic identity of a node. Two nodes with equal keys are the same node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub bitwidth: u32,
    pub x: u32,
    pub y: u32,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrNode {
    pub kind: NodeKind,
    pub x: u32,
    pub y: u32,
    pub bitwidth: u32,
    pub delay: f64,
}

impl IrNode {
    pub fn switch_box(x: u32, y: u32, side: Side, track: u32, io: Io, bitwidth: u32) -> Self {
        IrNode { kind: NodeKind::SwitchBox { side, track, io }, x, y, bitwidth, delay: 0.0 }
    }

    pub fn port(x: u32, y: u32, name: impl Into<String>, bitwidth: u32) -> Self {
        IrNode { kind: NodeKind::Port { name: name.into() }, x, y, bitwidth, delay: 0.0 }
    }

    pub fn register(x: u32, y: u32, side: Side, track: u32, bitwidth: u32) -> Self {
        IrNode { kind: NodeKind::Register { side, track }, x, y, bitwidth, delay: 0.0 }
    }

    pub fn reg_mux(x: u32, y: u32, side: Side, track: u32, bitwidth: u32) -> Self {
        IrNode { kind: NodeKind::RegMux { side, track }, x, y, bitwidth, delay: 0.0 }
    }

    pub fn with_delay(mut self, delay: f64) -> Self {
        self.delay = delay;
        self
    }

    pub fn key(&self) -> NodeKey {
        NodeKey { bitwidth: self.bitwidth, x: self.x, y: self.y, kind: self.kind.clone() }
    }

    pub fn is_sb(&self, io: Io) -> bool {
        matches!(self.kind, NodeKind::SwitchBox { io: i, .. } if i == io)
    }

    /// Identifier-safe name, unique within a graph. Used for RTL signals.
    pub fn signal_name(&self) -> String {
        let base = format!("x{}y{}_b{}", self.x, self.y, self.bitwidth);
        match &self.kind {
            NodeKind::SwitchBox { side, track, io } => {
                format!("{base}_sb_{}_{}{}", io.name(), side.letter(), track)
            }
            NodeKind::Port { name } => format!("{base}_port_{name}"),
            NodeKind::Register { side, track } => format!("{base}_reg_{}{}", side.letter(), track),
            NodeKind::RegMux { side, track } => format!("{base}_rmux_{}{}", side.letter(), track),
        }
    }
}

impl fmt::Display for IrNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signal_name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrError {
    #[error("node {node} out of bounds: {reason}")]
    OutOfBounds { node: String, reason: String },
    #[error("no layer declared for bit width {0}")]
    UnknownLayer(u32),
    #[error("edge {src} -> {dst} crosses bit-width layers")]
    LayerMismatch { src: NodeId, dst: NodeId },
    #[error("self loop on node {0}")]
    SelfLoop(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("{0}")]
    Invalid(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagnosticRule {
    UnknownNode,
    DuplicateNode,
    DuplicateEdge,
    SelfLoop,
    LayerMismatch,
    OutOfBounds,
    PortFields,
    NegativeDelay,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: DiagnosticRule,
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.rule, self.subject, self.message)
    }
}

/// Directed interconnect graph, one layer per bit width.
///
/// Node ids are dense indices into a single arena shared by all layers.
#[derive(Debug, Clone, Default)]
pub struct RoutingGraph {
    width: u32,
    height: u32,
    layers: BTreeMap<u32, u32>,
    nodes: Vec<IrNode>,
    fan_in: Vec<Vec<NodeId>>,
    fan_out: Vec<Vec<NodeId>>,
    index: HashMap<NodeKey, NodeId>,
    edge_set: HashSet<(NodeId, NodeId)>,
}

impl PartialEq for RoutingGraph {
    /// Equality on node tuples and edge set, independent of id assignment.
    fn eq(&self, other: &Self) -> bool {
        if self.width != other.width
            || self.height != other.height
            || self.layers != other.layers
            || self.nodes.len() != other.nodes.len()
            || self.edge_set.len() != other.edge_set.len()
        {
            return false;
        }
        for n in &self.nodes {
            match other.index.get(&n.key()) {
                Some(&id) if other.nodes[id.index()].delay == n.delay => {}
                _ => return false,
            }
        }
        self.edge_set.iter().all(|&(a, b)| {
            let ka = self.nodes[a.index()].key();
            let kb = self.nodes[b.index()].key();
            match (other.index.get(&ka), other.index.get(&kb)) {
                (Some(&oa), Some(&ob)) => other.edge_set.contains(&(oa, ob)),
                _ => false,
            }
        })
    }
}

impl RoutingGraph {
    pub fn new(width: u32, height: u32) -> Self {
        RoutingGraph { width, height, ..Default::default() }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn add_layer(&mut self, bitwidth: u32, num_tracks: u32) {
        self.layers.insert(bitwidth, num_tracks);
    }

    /// Declared layers as (bit width, track count), ascending by width.
    pub fn layers(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.layers.iter().map(|(&b, &t)| (b, t))
    }

    pub fn num_tracks(&self, bitwidth: u32) -> Option<u32> {
        self.layers.get(&bitwidth).copied()
    }

    fn check_node(&self, n: &IrNode) -> Result<(), IrError> {
        let tracks = self.num_tracks(n.bitwidth).ok_or(IrError::UnknownLayer(n.bitwidth))?;
        let oob = |reason: String| IrError::OutOfBounds { node: n.signal_name(), reason };
        if n.x >= self.width || n.y >= self.height {
            return Err(oob(format!("tile ({}, {}) outside {}x{} array", n.x, n.y, self.width, self.height)));
        }
        if let Some(t) = n.kind.track() {
            if t >= tracks {
                return Err(oob(format!("track {t} not below {tracks}")));
            }
        }
        if !(n.delay >= 0.0) {
            return Err(IrError::Invalid(format!("node {} has negative delay", n.signal_name())));
        }
        Ok(())
    }

    /// Adds `n`, or returns the id of the existing node with the same tuple.
    pub fn add_node(&mut self, n: IrNode) -> Result<NodeId, IrError> {
        self.check_node(&n)?;
        let key = n.key();
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(n);
        self.fan_in.push(Vec::new());
        self.fan_out.push(Vec::new());
        self.index.insert(key, id);
        Ok(id)
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId) -> Result<(), IrError> {
        let a = self.node(src)?;
        let b = self.node(dst)?;
        if src == dst {
            return Err(IrError::SelfLoop(src));
        }
        if a.bitwidth != b.bitwidth {
            return Err(IrError::LayerMismatch { src, dst });
        }
        if self.edge_set.insert((src, dst)) {
            self.fan_in[dst.index()].push(src);
            self.fan_out[src.index()].push(dst);
        }
        Ok(())
    }

    /// Removes an edge if present. Only used by builders before validation.
    pub(crate) fn remove_edge(&mut self, src: NodeId, dst: NodeId) -> bool {
        if !self.edge_set.remove(&(src, dst)) {
            return false;
        }
        self.fan_in[dst.index()].retain(|&n| n != src);
        self.fan_out[src.index()].retain(|&n| n != dst);
        true
    }

    pub fn node(&self, id: NodeId) -> Result<&IrNode, IrError> {
        self.nodes.get(id.index()).ok_or(IrError::UnknownNode(id))
    }

    /// Panicking accessor for ids known to come from this graph.
    pub fn get(&self, id: NodeId) -> &IrNode {
        &self.nodes[id.index()]
    }

    pub fn lookup(&self, key: &NodeKey) -> Option<NodeId> {
        self.index.get(key).copied()
    }

    pub fn find_sb(&self, bitwidth: u32, x: u32, y: u32, side: Side, track: u32, io: Io) -> Option<NodeId> {
        self.lookup(&NodeKey { bitwidth, x, y, kind: NodeKind::SwitchBox { side, track, io } })
    }

    /// Finds a core port node by name, searching every layer.
    pub fn find_port(&self, x: u32, y: u32, name: &str) -> Option<NodeId> {
        self.layers.keys().find_map(|&bitwidth| {
            self.lookup(&NodeKey { bitwidth, x, y, kind: NodeKind::Port { name: name.to_string() } })
        })
    }

    pub fn fan_in(&self, id: NodeId) -> Result<&[NodeId], IrError> {
        self.fan_in.get(id.index()).map(|v| v.as_slice()).ok_or(IrError::UnknownNode(id))
    }

    pub fn fan_out(&self, id: NodeId) -> Result<&[NodeId], IrError> {
        self.fan_out.get(id.index()).map(|v| v.as_slice()).ok_or(IrError::UnknownNode(id))
    }

    pub fn preds(&self, id: NodeId) -> &[NodeId] {
        &self.fan_in[id.index()]
    }

    pub fn succs(&self, id: NodeId) -> &[NodeId] {
        &self.fan_out[id.index()]
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.edge_set.contains(&(src, dst))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_set.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &IrNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i as u32), n))
    }

    /// Edges in deterministic order: by destination id, then fan-in order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.fan_in
            .iter()
            .enumerate()
            .flat_map(|(d, srcs)| srcs.iter().map(move |&s| (s, NodeId(d as u32))))
    }

    /// Core output ports: port nodes that drive the fabric and have no fan-in.
    pub fn is_core_output(&self, id: NodeId) -> bool {
        matches!(self.get(id).kind, NodeKind::Port { .. }) && self.preds(id).is_empty() && !self.succs(id).is_empty()
    }

    pub fn is_core_input(&self, id: NodeId) -> bool {
        matches!(self.get(id).kind, NodeKind::Port { .. }) && self.succs(id).is_empty() && !self.preds(id).is_empty()
    }

    /// Rebuilds the graph with ids ordered by node tuple so that two graphs
    /// built in different insertion orders serialize identically.
    pub fn canonicalize(&self) -> RoutingGraph {
        let mut order: Vec<NodeId> = self.node_ids().collect();
        order.sort_by_key(|&id| self.get(id).key());
        let mut out = RoutingGraph::new(self.width, self.height);
        out.layers = self.layers.clone();
        let mut remap = vec![NodeId(0); self.nodes.len()];
        for &old in &order {
            let n = self.get(old).clone();
            let id = NodeId(out.nodes.len() as u32);
            out.index.insert(n.key(), id);
            out.nodes.push(n);
            out.fan_in.push(Vec::new());
            out.fan_out.push(Vec::new());
            remap[old.index()] = id;
        }
        for &old in &order {
            for &src in &self.fan_in[old.index()] {
                let (s, d) = (remap[src.index()], remap[old.index()]);
                out.edge_set.insert((s, d));
                out.fan_in[d.index()].push(s);
                out.fan_out[s.index()].push(d);
            }
        }
        out
    }

    /// Checks every graph invariant; an empty result means the graph is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_parts(self.width, self.height, &self.layers, &self.nodes, &self.edges().collect::<Vec<_>>())
    }
}

fn validate_parts(
    width: u32,
    height: u32,
    layers: &BTreeMap<u32, u32>,
    nodes: &[IrNode],
    edges: &[(NodeId, NodeId)],
) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen: HashMap<NodeKey, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        let subject = format!("node {i} ({})", n.signal_name());
        match layers.get(&n.bitwidth) {
            None => out.push(Diagnostic {
                rule: DiagnosticRule::OutOfBounds,
                subject: subject.clone(),
                message: format!("bit width {} has no layer", n.bitwidth),
            }),
            Some(&tracks) => {
                if n.x >= width || n.y >= height {
                    out.push(Diagnostic {
                        rule: DiagnosticRule::OutOfBounds,
                        subject: subject.clone(),
                        message: format!("tile ({}, {}) outside {width}x{height}", n.x, n.y),
                    });
                }
                if let Some(t) = n.kind.track() {
                    if t >= tracks {
                        out.push(Diagnostic {
                            rule: DiagnosticRule::OutOfBounds,
                            subject: subject.clone(),
                            message: format!("track {t} not below {tracks}"),
                        });
                    }
                }
            }
        }
        if let NodeKind::Port { name } = &n.kind {
            if name.is_empty() {
                out.push(Diagnostic {
                    rule: DiagnosticRule::PortFields,
                    subject: subject.clone(),
                    message: "port node without a name".into(),
                });
            }
        }
        if !(n.delay >= 0.0) {
            out.push(Diagnostic {
                rule: DiagnosticRule::NegativeDelay,
                subject: subject.clone(),
                message: format!("delay {}", n.delay),
            });
        }
        if let Some(prev) = seen.insert(n.key(), i) {
            out.push(Diagnostic {
                rule: DiagnosticRule::DuplicateNode,
                subject,
                message: format!("same tuple as node {prev}"),
            });
        }
    }
    let mut edge_seen = HashSet::new();
    for &(a, b) in edges {
        let subject = format!("edge {a} -> {b}");
        let (na, nb) = (nodes.get(a.index()), nodes.get(b.index()));
        if na.is_none() || nb.is_none() {
            out.push(Diagnostic {
                rule: DiagnosticRule::UnknownNode,
                subject,
                message: "endpoint does not exist".into(),
            });
            continue;
        }
        if a == b {
            out.push(Diagnostic { rule: DiagnosticRule::SelfLoop, subject: subject.clone(), message: "self loop".into() });
        }
        if na.unwrap().bitwidth != nb.unwrap().bitwidth {
            out.push(Diagnostic {
                rule: DiagnosticRule::LayerMismatch,
                subject: subject.clone(),
                message: "endpoints in different layers".into(),
            });
        }
        if !edge_seen.insert((a, b)) {
            out.push(Diagnostic { rule: DiagnosticRule::DuplicateEdge, subject, message: "duplicate edge".into() });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Text format
//
//   graph <width> <height>
//   [layer <bitwidth> tracks=<n>]
//   node <id> sb <x> <y> <side> <track> <in|out> delay=<d>
//   node <id> port <x> <y> port=<name> delay=<d>
//   node <id> reg <x> <y> <side> <track> delay=<d>
//   node <id> regmux <x> <y> <side> <track> delay=<d>
//   edge <src> <dst>
//
// Node ids are global across layers. Blank lines and `#` comments are ignored.
// ---------------------------------------------------------------------------

fn fmt_delay(d: f64) -> String {
    format!("{d}")
}

/// Serializes the graph in canonical (tuple-sorted) order.
pub fn serialize_graph(g: &RoutingGraph) -> String {
    let g = g.canonicalize();
    let mut out = String::new();
    out.push_str(&format!("graph {} {}\n", g.width, g.height));
    for (bw, tracks) in g.layers() {
        out.push_str(&format!("[layer {bw} tracks={tracks}]\n"));
        for (id, n) in g.nodes().filter(|(_, n)| n.bitwidth == bw) {
            let body = match &n.kind {
                NodeKind::SwitchBox { side, track, io } => {
                    format!("sb {} {} {} {} {}", n.x, n.y, side.name(), track, io.name())
                }
                NodeKind::Port { name } => format!("port {} {} port={}", n.x, n.y, name),
                NodeKind::Register { side, track } => format!("reg {} {} {} {}", n.x, n.y, side.name(), track),
                NodeKind::RegMux { side, track } => format!("regmux {} {} {} {}", n.x, n.y, side.name(), track),
            };
            out.push_str(&format!("node {id} {body} delay={}\n", fmt_delay(n.delay)));
        }
        for (id, n) in g.nodes().filter(|(_, n)| n.bitwidth == bw) {
            let _ = n;
            for &src in g.preds(id) {
                out.push_str(&format!("edge {src} {id}\n"));
            }
        }
    }
    out
}

struct LineCursor<'a> {
    line: usize,
    text: &'a str,
    toks: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        let mut toks = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    toks.push((s, &text[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            toks.push((s, &text[s..]));
        }
        LineCursor { line, text, toks, pos: 0 }
    }

    fn err(&self, column: usize, message: impl Into<String>) -> IrError {
        IrError::Parse { line: self.line, column, message: message.into() }
    }

    fn end_col(&self) -> usize {
        self.text.len() + 1
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), IrError> {
        let t = self.toks.get(self.pos).copied().ok_or_else(|| self.err(self.end_col(), format!("expected {what}")))?;
        self.pos += 1;
        Ok((t.0 + 1, t.1))
    }

    fn num<T: FromStr>(&mut self, what: &str) -> Result<T, IrError> {
        let (col, t) = self.next(what)?;
        t.parse().map_err(|_| self.err(col, format!("expected {what}, found `{t}`")))
    }

    fn keyed<'b>(&mut self, key: &'b str) -> Result<(usize, &'a str), IrError> {
        let (col, t) = self.next(key)?;
        match t.split_once('=') {
            Some((k, v)) if k == key => Ok((col, v)),
            _ => Err(self.err(col, format!("expected `{key}=...`, found `{t}`"))),
        }
    }

    fn finish(&self) -> Result<(), IrError> {
        match self.toks.get(self.pos) {
            Some(&(c, t)) => Err(self.err(c + 1, format!("unexpected token `{t}`"))),
            None => Ok(()),
        }
    }
}

/// Parses the graph text format. Ids in the file are remapped densely in
/// order of appearance.
pub fn deserialize_graph(text: &str) -> Result<RoutingGraph, IrError> {
    let mut header: Option<(u32, u32)> = None;
    let mut layers = BTreeMap::new();
    let mut current: Option<u32> = None;
    let mut nodes: Vec<IrNode> = Vec::new();
    let mut ids: HashMap<u64, NodeId> = HashMap::new();
    let mut edges: Vec<(NodeId, NodeId, usize)> = Vec::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let mut cur = LineCursor::new(line_no, content);
        let (col, head) = cur.next("directive")?;
        if header.is_none() && head != "graph" {
            return Err(cur.err(col, "expected `graph <width> <height>` header"));
        }
        match head {
            "graph" => {
                if header.is_some() {
                    return Err(cur.err(col, "duplicate graph header"));
                }
                let w = cur.num("width")?;
                let h = cur.num("height")?;
                cur.finish()?;
                header = Some((w, h));
            }
            "[layer" => {
                let bw: u32 = cur.num("bit width")?;
                let (c, v) = cur.keyed("tracks")?;
                let v = v.strip_suffix(']').ok_or_else(|| cur.err(c, "expected closing `]`"))?;
                let tracks: u32 = v.parse().map_err(|_| cur.err(c, "bad track count"))?;
                cur.finish()?;
                layers.insert(bw, tracks);
                current = Some(bw);
            }
            "node" => {
                let bw = current.ok_or_else(|| cur.err(col, "node before any layer section"))?;
                let (file_id, node) = parse_node_body(&mut cur, bw)?;
                if ids.contains_key(&file_id) {
                    return Err(cur.err(col, format!("node id {file_id} defined twice")));
                }
                ids.insert(file_id, NodeId(nodes.len() as u32));
                nodes.push(node);
            }
            "edge" => {
                let a: u64 = cur.num("source id")?;
                let b: u64 = cur.num("sink id")?;
                cur.finish()?;
                let resolve = |v: u64| ids.get(&v).copied().unwrap_or(NodeId(u32::MAX));
                edges.push((resolve(a), resolve(b), line_no));
            }
            other => return Err(cur.err(col, format!("unknown directive `{other}`"))),
        }
    }
    let (width, height) = header.ok_or(IrError::Parse { line: last_line.max(1), column: 1, message: "missing graph header".into() })?;

    let plain: Vec<(NodeId, NodeId)> = edges.iter().map(|&(a, b, _)| (a, b)).collect();
    let diags = validate_parts(width, height, &layers, &nodes, &plain);
    if let Some(d) = diags.first() {
        let line = match d.rule {
            DiagnosticRule::UnknownNode | DiagnosticRule::SelfLoop | DiagnosticRule::LayerMismatch | DiagnosticRule::DuplicateEdge => {
                edges.iter().find(|(a, b, _)| d.subject == format!("edge {a} -> {b}")).map(|e| e.2).unwrap_or(last_line)
            }
            _ => last_line,
        };
        return Err(IrError::Parse { line, column: 1, message: d.to_string() });
    }

    let mut g = RoutingGraph::new(width, height);
    g.layers = layers;
    for n in nodes {
        g.add_node(n)?;
    }
    for (a, b, _) in edges {
        g.add_edge(a, b)?;
    }
    Ok(g)
}

/// Lenient parse that keeps invalid content and reports it as diagnostics
/// instead of failing. Syntax errors still fail.
pub fn deserialize_unchecked(text: &str) -> Result<(RoutingGraph, Vec<Diagnostic>), IrError> {
    let mut header = None;
    let mut layers = BTreeMap::new();
    let mut current = None;
    let mut nodes = Vec::new();
    let mut ids: HashMap<u64, NodeId> = HashMap::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let mut cur = LineCursor::new(i + 1, content);
        let (_, head) = cur.next("directive")?;
        match head {
            "graph" => header = Some((cur.num::<u32>("width")?, cur.num::<u32>("height")?)),
            "[layer" => {
                let bw: u32 = cur.num("bit width")?;
                let (c, v) = cur.keyed("tracks")?;
                let v = v.trim_end_matches(']');
                layers.insert(bw, v.parse().map_err(|_| cur.err(c, "bad track count"))?);
                current = Some(bw);
            }
            "node" => {
                let bw = current.ok_or_else(|| cur.err(1, "node before layer"))?;
                let (fid, node) = parse_node_body(&mut cur, bw)?;
                ids.insert(fid, NodeId(nodes.len() as u32));
                nodes.push(node);
            }
            "edge" => {
                let a: u64 = cur.num("source id")?;
                let b: u64 = cur.num("sink id")?;
                let r = |v| ids.get(&v).copied().unwrap_or(NodeId(u32::MAX));
                edges.push((r(a), r(b)));
            }
            other => return Err(cur.err(1, format!("unknown directive `{other}`"))),
        }
    }
    let (width, height) = header.ok_or(IrError::Parse { line: 1, column: 1, message: "missing graph header".into() })?;
    let diags = validate_parts(width, height, &layers, &nodes, &edges);
    let mut g = RoutingGraph::new(width, height);
    g.layers = layers;
    for n in nodes {
        let id = NodeId(g.nodes.len() as u32);
        g.index.entry(n.key()).or_insert(id);
        g.nodes.push(n);
        g.fan_in.push(Vec::new());
        g.fan_out.push(Vec::new());
    }
    for (a, b) in edges {
        if a.index() < g.nodes.len() && b.index() < g.nodes.len() && g.edge_set.insert((a, b)) {
            g.fan_in[b.index()].push(a);
            g.fan_out[a.index()].push(b);
        }
    }
    Ok((g, diags))
}

fn parse_node_body(cur: &mut LineCursor<'_>, bitwidth: u32) -> Result<(u64, IrNode), IrError> {
    let file_id: u64 = cur.num("node id")?;
    let (kc, kind) = cur.next("node kind")?;
    let x = cur.num("x")?;
    let y = cur.num("y")?;
    let side_track = |cur: &mut LineCursor<'_>| -> Result<(Side, u32), IrError> {
        let (c, s) = cur.next("side")?;
        let side = s.parse::<Side>().map_err(|e| cur.err(c, e))?;
        Ok((side, cur.num("track")?))
    };
    let kind = match kind {
        "sb" => {
            let (side, track) = side_track(cur)?;
            let (c, io) = cur.next("in|out")?;
            let io = match io {
                "in" => Io::Incoming,
                "out" => Io::Outgoing,
                _ => return Err(cur.err(c, format!("expected in|out, found `{io}`"))),
            };
            NodeKind::SwitchBox { side, track, io }
        }
        "port" => NodeKind::Port { name: cur.keyed("port")?.1.to_string() },
        "reg" => {
            let (side, track) = side_track(cur)?;
            NodeKind::Register { side, track }
        }
        "regmux" => {
            let (side, track) = side_track(cur)?;
            NodeKind::RegMux { side, track }
        }
        other => return Err(cur.err(kc, format!("unknown node kind `{other}`"))),
    };
    let (dc, d) = cur.keyed("delay")?;
    let delay: f64 = d.parse().map_err(|_| cur.err(dc, "bad delay"))?;
    cur.finish()?;
    Ok((file_id, IrNode { kind, x, y, bitwidth, delay }))
}
