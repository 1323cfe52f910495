//! Architecture description and the uniform interconnect builder.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ir::{Io, IrError, IrNode, NodeId, RoutingGraph, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("switch box connection from side {0} to itself")]
    SameSide(Side),
    #[error("track {track} out of range for {num_tracks} tracks")]
    TrackOutOfRange { track: u32, num_tracks: u32 },
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
    #[error("port connection policy has no sides for {0}")]
    EmptyPolicy(&'static str),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("spec parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Topology {
    Wilton,
    Disjoint,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Wilton => "wilton",
            Topology::Disjoint => "disjoint",
        }
    }

    pub fn map(self, from: Side, to: Side, track: u32, num_tracks: u32) -> Result<u32, ArchError> {
        match self {
            Topology::Wilton => wilton_map(from, to, track, num_tracks),
            Topology::Disjoint => disjoint_map(from, to, track, num_tracks),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wilton" => Ok(Topology::Wilton),
            "disjoint" => Ok(Topology::Disjoint),
            other => Err(format!("unknown topology `{other}`")),
        }
    }
}

fn check_turn(from: Side, to: Side, track: u32, num_tracks: u32) -> Result<(), ArchError> {
    if from == to {
        return Err(ArchError::SameSide(from));
    }
    if track >= num_tracks {
        return Err(ArchError::TrackOutOfRange { track, num_tracks });
    }
    Ok(())
}

/// Track reached on side `to` by a signal entering on `from` at `track`.
/// Disjoint keeps the track index on every turn.
pub fn disjoint_map(from: Side, to: Side, track: u32, num_tracks: u32) -> Result<u32, ArchError> {
    check_turn(from, to, track, num_tracks)?;
    Ok(track)
}

/// Wilton permutation: straight through keeps the track, a clockwise turn
/// (`to == from.clockwise()`) maps `t -> (W - t) mod W`, and a
/// counter-clockwise turn maps `t -> (t + 1) mod W`.
pub fn wilton_map(from: Side, to: Side, track: u32, num_tracks: u32) -> Result<u32, ArchError> {
    check_turn(from, to, track, num_tracks)?;
    let w = num_tracks;
    Ok(if to == from.opposite() {
        track
    } else if to == from.clockwise() {
        (w - track) % w
    } else {
        (track + 1) % w
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreSpec {
    pub name: String,
    pub inputs: Vec<(String, u32)>,
    pub outputs: Vec<(String, u32)>,
    pub delay: f64,
}

impl CoreSpec {
    /// Core with `n_in` inputs named `in0..` and `n_out` outputs named `out0..`.
    pub fn uniform(name: &str, n_in: usize, n_out: usize, bitwidth: u32, delay: f64) -> Self {
        CoreSpec {
            name: name.to_string(),
            inputs: (0..n_in).map(|i| (format!("in{i}"), bitwidth)).collect(),
            outputs: (0..n_out).map(|i| (format!("out{i}"), bitwidth)).collect(),
            delay,
        }
    }

    pub fn pe() -> Self {
        CoreSpec::uniform("pe", 4, 2, 16, 2.0)
    }

    pub fn mem() -> Self {
        CoreSpec::uniform("mem", 2, 1, 16, 1.0)
    }

    pub fn io() -> Self {
        CoreSpec::uniform("io", 1, 1, 16, 0.0)
    }

    pub fn input_width(&self, port: &str) -> Option<u32> {
        self.inputs.iter().find(|(n, _)| n == port).map(|&(_, w)| w)
    }

    pub fn output_width(&self, port: &str) -> Option<u32> {
        self.outputs.iter().find(|(n, _)| n == port).map(|&(_, w)| w)
    }

    fn validate(&self) -> Result<(), ArchError> {
        if self.inputs.is_empty() && self.outputs.is_empty() {
            return Err(ArchError::InvalidSpec(format!("core `{}` has no ports", self.name)));
        }
        let mut names = BTreeSet::new();
        for (n, _) in self.inputs.iter().chain(&self.outputs) {
            if !names.insert(n.as_str()) {
                return Err(ArchError::InvalidSpec(format!("core `{}` repeats port `{n}`", self.name)));
            }
        }
        if !(self.delay >= 0.0) {
            return Err(ArchError::InvalidSpec(format!("core `{}` has negative delay", self.name)));
        }
        Ok(())
    }
}

/// Which sides of a tile connect to its core, and optionally which tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct PortConnPolicy {
    pub cb_sides: Vec<Side>,
    pub sb_out_sides: Vec<Side>,
    /// Tracks connection boxes tap; `None` means all of them.
    pub cb_tracks: Option<Vec<u32>>,
    /// Tracks core outputs drive; `None` means all of them.
    pub sb_out_tracks: Option<Vec<u32>>,
}

impl Default for PortConnPolicy {
    fn default() -> Self {
        PortConnPolicy { cb_sides: Side::ALL.to_vec(), sb_out_sides: Side::ALL.to_vec(), cb_tracks: None, sb_out_tracks: None }
    }
}

impl PortConnPolicy {
    /// Side sets used by the port-connection sweep: East goes first, then South.
    pub fn sweep_sides(count: usize) -> Vec<Side> {
        const REMOVAL: [Side; 4] = [Side::East, Side::South, Side::West, Side::North];
        let removed = &REMOVAL[..4 - count.clamp(1, 4)];
        Side::ALL.iter().copied().filter(|s| !removed.contains(s)).collect()
    }

    fn allows(set: &Option<Vec<u32>>, track: u32) -> bool {
        set.as_ref().map_or(true, |v| v.contains(&track))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub bitwidth: u32,
    pub num_tracks: u32,
    pub topology: Topology,
    /// Fraction of (side, track) slots that carry a pipeline register.
    pub reg_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TileKind {
    Pe,
    Mem,
    Io,
}

impl TileKind {
    pub fn name(self) -> &'static str {
        match self {
            TileKind::Pe => "pe",
            TileKind::Mem => "mem",
            TileKind::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub width: u32,
    pub height: u32,
    pub layers: Vec<LayerSpec>,
    pub pe_core: Option<CoreSpec>,
    pub mem_core: Option<CoreSpec>,
    pub io_core: Option<CoreSpec>,
    pub port_policy: PortConnPolicy,
    /// Every column with `x % stride == stride / 2` holds MEM tiles; 0 disables.
    pub mem_column_stride: u32,
    /// Boundary tiles hold IO cores.
    pub io_ring: bool,
    /// Delay of a switch-box output mux (one routing hop).
    pub sb_delay: f64,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec::uniform(8, 8, 5, Topology::Wilton, 0.0)
    }
}

impl ArchSpec {
    /// Single 16-bit layer with default cores, mirroring
    /// `create_uniform_interconnect(width, height, sb_type, num_tracks, ...)`.
    pub fn uniform(width: u32, height: u32, num_tracks: u32, topology: Topology, reg_density: f64) -> Self {
        ArchSpec {
            width,
            height,
            layers: vec![LayerSpec { bitwidth: 16, num_tracks, topology, reg_density }],
            pe_core: Some(CoreSpec::pe()),
            mem_core: Some(CoreSpec::mem()),
            io_core: Some(CoreSpec::io()),
            port_policy: PortConnPolicy::default(),
            mem_column_stride: 4,
            io_ring: true,
            sb_delay: 1.0,
        }
    }

    pub fn without_cores(mut self) -> Self {
        self.pe_core = None;
        self.mem_core = None;
        self.io_core = None;
        self
    }

    pub fn layer(&self, bitwidth: u32) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.bitwidth == bitwidth)
    }

    pub fn is_boundary(&self, x: u32, y: u32) -> bool {
        x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height
    }

    pub fn is_mem_column(&self, x: u32) -> bool {
        self.mem_column_stride > 0 && x % self.mem_column_stride == self.mem_column_stride / 2
    }

    pub fn tile_kind(&self, x: u32, y: u32) -> TileKind {
        if self.io_ring && self.is_boundary(x, y) {
            TileKind::Io
        } else if self.is_mem_column(x) {
            TileKind::Mem
        } else {
            TileKind::Pe
        }
    }

    pub fn core(&self, kind: TileKind) -> Option<&CoreSpec> {
        match kind {
            TileKind::Pe => self.pe_core.as_ref(),
            TileKind::Mem => self.mem_core.as_ref(),
            TileKind::Io => self.io_core.as_ref(),
        }
    }

    pub fn core_at(&self, x: u32, y: u32) -> Option<&CoreSpec> {
        self.core(self.tile_kind(x, y))
    }

    pub fn mem_columns(&self) -> Vec<u32> {
        (0..self.width).filter(|&x| (0..self.height).any(|y| self.tile_kind(x, y) == TileKind::Mem)).collect()
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        let bad = |m: String| Err(ArchError::InvalidSpec(m));
        if self.width < 1 || self.height < 1 {
            return bad(format!("array must be at least 1x1, got {}x{}", self.width, self.height));
        }
        if self.width > 255 || self.height > 255 {
            return bad("array dimensions above 255 do not fit the config address".into());
        }
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        let mut widths = BTreeSet::new();
        for l in &self.layers {
            if !widths.insert(l.bitwidth) {
                return bad(format!("layer {} declared twice", l.bitwidth));
            }
            if l.bitwidth == 0 || l.num_tracks < 1 {
                return bad(format!("layer {} needs a bit width and at least one track", l.bitwidth));
            }
            if !(0.0..=1.0).contains(&l.reg_density) {
                return bad(format!("reg_density {} outside [0, 1]", l.reg_density));
            }
        }
        if self.port_policy.cb_sides.is_empty() {
            return Err(ArchError::EmptyPolicy("cb_sides"));
        }
        if self.port_policy.sb_out_sides.is_empty() {
            return Err(ArchError::EmptyPolicy("sb_out_sides"));
        }
        for core in [&self.pe_core, &self.mem_core, &self.io_core].into_iter().flatten() {
            core.validate()?;
            for (p, w) in core.inputs.iter().chain(&core.outputs) {
                if !widths.contains(w) {
                    return bad(format!("core `{}` port `{p}` is {w} bits but no such layer exists", core.name));
                }
            }
        }
        if !(self.sb_delay >= 0.0) {
            return bad("sb_delay must be non-negative".into());
        }
        Ok(())
    }
}

fn neighbor(spec_w: u32, spec_h: u32, x: u32, y: u32, side: Side) -> Option<(u32, u32)> {
    let (dx, dy) = side.delta();
    let nx = x as i64 + dx;
    let ny = y as i64 + dy;
    (nx >= 0 && ny >= 0 && nx < spec_w as i64 && ny < spec_h as i64).then(|| (nx as u32, ny as u32))
}

/// Builds the full graph: switch boxes, core ports with every connection
/// enabled, then trims to the port policy and inserts pipeline registers.
pub fn create_uniform_interconnect(spec: &ArchSpec) -> Result<RoutingGraph, ArchError> {
    spec.validate()?;
    let mut g = RoutingGraph::new(spec.width, spec.height);
    for l in &spec.layers {
        g.add_layer(l.bitwidth, l.num_tracks);
    }

    for y in 0..spec.height {
        for x in 0..spec.width {
            for l in &spec.layers {
                build_switch_box(&mut g, spec, l, x, y)?;
            }
            if let Some(core) = spec.core_at(x, y) {
                build_core_ports(&mut g, core, x, y)?;
            }
        }
    }

    for y in 0..spec.height {
        for x in 0..spec.width {
            for l in &spec.layers {
                for side in Side::ALL {
                    let Some((nx, ny)) = neighbor(spec.width, spec.height, x, y, side) else { continue };
                    for t in 0..l.num_tracks {
                        let out = g.find_sb(l.bitwidth, x, y, side, t, Io::Outgoing).expect("sb out");
                        let inp = g.find_sb(l.bitwidth, nx, ny, side.opposite(), t, Io::Incoming).expect("sb in");
                        g.add_edge(out, inp)?;
                    }
                }
            }
        }
    }

    let g = apply_port_policy(g, spec)?;
    Ok(insert_registers(g, spec))
}

fn build_switch_box(g: &mut RoutingGraph, spec: &ArchSpec, l: &LayerSpec, x: u32, y: u32) -> Result<(), ArchError> {
    let w = l.num_tracks;
    for io in [Io::Incoming, Io::Outgoing] {
        for side in Side::ALL {
            for t in 0..w {
                let delay = if io == Io::Outgoing { spec.sb_delay } else { 0.0 };
                g.add_node(IrNode::switch_box(x, y, side, t, io, l.bitwidth).with_delay(delay))?;
            }
        }
    }
    // Each output lists its three sources in N, E, S, W order of the
    // incoming side, so mux input indices are stable.
    for to in Side::ALL {
        for t_out in 0..w {
            let out = g.find_sb(l.bitwidth, x, y, to, t_out, Io::Outgoing).unwrap();
            for from in Side::ALL.into_iter().filter(|&s| s != to) {
                let t_in = (0..w)
                    .find(|&t| l.topology.map(from, to, t, w).ok() == Some(t_out))
                    .expect("topology map is a permutation");
                let src = g.find_sb(l.bitwidth, x, y, from, t_in, Io::Incoming).unwrap();
                g.add_edge(src, out)?;
            }
        }
    }
    Ok(())
}

fn build_core_ports(g: &mut RoutingGraph, core: &CoreSpec, x: u32, y: u32) -> Result<(), ArchError> {
    for (name, bw) in &core.inputs {
        let port = g.add_node(IrNode::port(x, y, name.clone(), *bw))?;
        let tracks = g.num_tracks(*bw).ok_or(IrError::UnknownLayer(*bw))?;
        for side in Side::ALL {
            for t in 0..tracks {
                let src = g.find_sb(*bw, x, y, side, t, Io::Incoming).unwrap();
                g.add_edge(src, port)?;
            }
        }
    }
    for (name, bw) in &core.outputs {
        let port = g.add_node(IrNode::port(x, y, name.clone(), *bw))?;
        let tracks = g.num_tracks(*bw).ok_or(IrError::UnknownLayer(*bw))?;
        for side in Side::ALL {
            for t in 0..tracks {
                let dst = g.find_sb(*bw, x, y, side, t, Io::Outgoing).unwrap();
                g.add_edge(port, dst)?;
            }
        }
    }
    Ok(())
}

/// Removes core connections the policy does not allow: connection-box edges
/// from incoming tracks on sides outside `cb_sides` (or tracks outside
/// `cb_tracks`), and core-output edges to sides outside `sb_out_sides`.
pub fn apply_port_policy(mut g: RoutingGraph, spec: &ArchSpec) -> Result<RoutingGraph, ArchError> {
    let p = &spec.port_policy;
    if p.cb_sides.is_empty() {
        return Err(ArchError::EmptyPolicy("cb_sides"));
    }
    if p.sb_out_sides.is_empty() {
        return Err(ArchError::EmptyPolicy("sb_out_sides"));
    }
    let mut doomed: Vec<(NodeId, NodeId)> = Vec::new();
    for (src, dst) in g.edges() {
        let (a, b) = (g.get(src), g.get(dst));
        match (&a.kind, &b.kind) {
            (crate::ir::NodeKind::SwitchBox { side, track, io: Io::Incoming }, crate::ir::NodeKind::Port { .. }) => {
                if !p.cb_sides.contains(side) || !PortConnPolicy::allows(&p.cb_tracks, *track) {
                    doomed.push((src, dst));
                }
            }
            (crate::ir::NodeKind::Port { .. }, crate::ir::NodeKind::SwitchBox { side, track, io: Io::Outgoing }) => {
                if !p.sb_out_sides.contains(side) || !PortConnPolicy::allows(&p.sb_out_tracks, *track) {
                    doomed.push((src, dst));
                }
            }
            _ => {}
        }
    }
    for (a, b) in doomed {
        g.remove_edge(a, b);
    }
    Ok(g)
}

/// Tracks that receive a register on every side: every `ceil(1/density)`-th.
pub fn registered_tracks(num_tracks: u32, reg_density: f64) -> Vec<u32> {
    if reg_density <= 0.0 {
        return Vec::new();
    }
    let step = (1.0 / reg_density).ceil().max(1.0) as u32;
    (0..num_tracks).filter(|t| t % step == 0).collect()
}

/// Splits each selected inter-tile wire `SB-out -> SB-in` into
/// `SB-out -> {Register, RegMux}`, `Register -> RegMux`, `RegMux -> SB-in`.
/// RegMux input 0 is the bypass path.
pub fn insert_registers(mut g: RoutingGraph, spec: &ArchSpec) -> RoutingGraph {
    for l in &spec.layers {
        let tracks = registered_tracks(l.num_tracks, l.reg_density);
        if tracks.is_empty() {
            continue;
        }
        for y in 0..spec.height {
            for x in 0..spec.width {
                for side in Side::ALL {
                    let Some((nx, ny)) = neighbor(spec.width, spec.height, x, y, side) else { continue };
                    for &t in &tracks {
                        let out = g.find_sb(l.bitwidth, x, y, side, t, Io::Outgoing).unwrap();
                        let inp = g.find_sb(l.bitwidth, nx, ny, side.opposite(), t, Io::Incoming).unwrap();
                        if !g.remove_edge(out, inp) {
                            continue;
                        }
                        let reg = g.add_node(IrNode::register(x, y, side, t, l.bitwidth)).unwrap();
                        let rmux = g.add_node(IrNode::reg_mux(x, y, side, t, l.bitwidth)).unwrap();
                        g.add_edge(out, rmux).unwrap();
                        g.add_edge(out, reg).unwrap();
                        g.add_edge(reg, rmux).unwrap();
                        g.add_edge(rmux, inp).unwrap();
                    }
                }
            }
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Spec file
// ---------------------------------------------------------------------------

fn parse_sides(v: &str) -> Result<Vec<Side>, String> {
    let mut out = Vec::new();
    for s in v.split(',').filter(|s| !s.is_empty()) {
        let side: Side = s.parse()?;
        if !out.contains(&side) {
            out.push(side);
        }
    }
    out.sort();
    Ok(out)
}

fn parse_ports(v: &str, prefix: &str) -> Result<Vec<(String, u32)>, String> {
    let mut out = Vec::new();
    for group in v.split(',').filter(|s| !s.is_empty()) {
        let (n, w) = group.split_once('x').ok_or_else(|| format!("expected <count>x<bits>, found `{group}`"))?;
        let n: usize = n.parse().map_err(|_| format!("bad port count `{n}`"))?;
        let w: u32 = w.parse().map_err(|_| format!("bad port width `{w}`"))?;
        for _ in 0..n {
            out.push((format!("{prefix}{}", out.len()), w));
        }
    }
    Ok(out)
}

fn fmt_ports(ports: &[(String, u32)]) -> String {
    let mut groups: Vec<(usize, u32)> = Vec::new();
    for &(_, w) in ports {
        match groups.last_mut() {
            Some((n, gw)) if *gw == w => *n += 1,
            _ => groups.push((1, w)),
        }
    }
    groups.iter().map(|(n, w)| format!("{n}x{w}")).collect::<Vec<_>>().join(",")
}

fn fmt_tracks(v: &[u32]) -> String {
    v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
}

/// Parses the sectioned `key=value` architecture file.
pub fn parse_arch_spec(text: &str) -> Result<ArchSpec, ArchError> {
    let mut spec = ArchSpec { layers: Vec::new(), ..ArchSpec::default() };
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut col = 0;
        for tok in content.split_whitespace() {
            let start = content[col..].find(tok).map(|p| p + col).unwrap_or(col);
            col = start + tok.len();
            let err = |message: String| ArchError::Parse { line, column: start + 1, message };
            if let Some(name) = tok.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| err(format!("unterminated section `{tok}`")))?;
                if let Some(bw) = name.strip_prefix("layer.") {
                    let bw: u32 = bw.parse().map_err(|_| err(format!("bad layer width `{bw}`")))?;
                    spec.layers.push(LayerSpec { bitwidth: bw, num_tracks: 5, topology: Topology::Wilton, reg_density: 0.0 });
                } else if !matches!(name, "array" | "policy" | "mem" | "core.pe" | "core.mem" | "core.io") {
                    return Err(err(format!("unknown section `{name}`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, val) = tok.split_once('=').ok_or_else(|| err(format!("expected key=value, found `{tok}`")))?;
            let sec = section.as_deref().ok_or_else(|| err("key outside any section".into()))?;
            let num = |v: &str| v.parse::<u32>().map_err(|_| err(format!("`{key}` expects an integer, found `{v}`")));
            let float = |v: &str| v.parse::<f64>().map_err(|_| err(format!("`{key}` expects a number, found `{v}`")));
            let boolean = |v: &str| v.parse::<bool>().map_err(|_| err(format!("`{key}` expects true/false, found `{v}`")));
            match (sec, key) {
                ("array", "width") => spec.width = num(val)?,
                ("array", "height") => spec.height = num(val)?,
                ("array", "io_ring") => spec.io_ring = boolean(val)?,
                ("array", "sb_delay") => spec.sb_delay = float(val)?,
                ("mem", "column_stride") => spec.mem_column_stride = num(val)?,
                ("policy", "cb_sides") => spec.port_policy.cb_sides = parse_sides(val).map_err(err)?,
                ("policy", "sb_out_sides") => spec.port_policy.sb_out_sides = parse_sides(val).map_err(err)?,
                ("policy", "cb_tracks") => {
                    spec.port_policy.cb_tracks = Some(val.split(',').map(num).collect::<Result<_, _>>()?)
                }
                ("policy", "sb_out_tracks") => {
                    spec.port_policy.sb_out_tracks = Some(val.split(',').map(num).collect::<Result<_, _>>()?)
                }
                (s, k) if s.starts_with("layer.") => {
                    let layer = spec.layers.last_mut().unwrap();
                    match k {
                        "tracks" => layer.num_tracks = num(val)?,
                        "topology" => layer.topology = val.parse().map_err(err)?,
                        "reg_density" => layer.reg_density = float(val)?,
                        _ => return Err(err(format!("unknown key `{k}` in [{s}]"))),
                    }
                }
                (s, k) if s.starts_with("core.") => {
                    let name = &s[5..];
                    let slot = match name {
                        "pe" => &mut spec.pe_core,
                        "mem" => &mut spec.mem_core,
                        _ => &mut spec.io_core,
                    };
                    let default = match name {
                        "pe" => CoreSpec::pe(),
                        "mem" => CoreSpec::mem(),
                        _ => CoreSpec::io(),
                    };
                    let core = slot.get_or_insert(default);
                    match k {
                        "in" => core.inputs = parse_ports(val, "in").map_err(err)?,
                        "out" => core.outputs = parse_ports(val, "out").map_err(err)?,
                        "delay" => core.delay = float(val)?,
                        "enabled" => {
                            if !boolean(val)? {
                                *slot = None;
                            }
                        }
                        _ => return Err(err(format!("unknown key `{k}` in [{s}]"))),
                    }
                }
                (s, k) => return Err(err(format!("unknown key `{k}` in [{s}]"))),
            }
        }
    }
    if spec.layers.is_empty() {
        spec.layers = ArchSpec::default().layers;
    }
    Ok(spec)
}

pub fn format_arch_spec(spec: &ArchSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "[array] width={} height={} io_ring={} sb_delay={}\n",
        spec.width, spec.height, spec.io_ring, spec.sb_delay
    ));
    for l in &spec.layers {
        out.push_str(&format!(
            "[layer.{}] tracks={} topology={} reg_density={}\n",
            l.bitwidth, l.num_tracks, l.topology, l.reg_density
        ));
    }
    for (name, core) in [("pe", &spec.pe_core), ("mem", &spec.mem_core), ("io", &spec.io_core)] {
        match core {
            Some(c) => out.push_str(&format!(
                "[core.{name}] in={} out={} delay={}\n",
                fmt_ports(&c.inputs),
                fmt_ports(&c.outputs),
                c.delay
            )),
            None => out.push_str(&format!("[core.{name}] enabled=false\n")),
        }
    }
    let sides = |v: &[Side]| v.iter().map(|s| s.letter().to_string()).collect::<Vec<_>>().join(",");
    out.push_str(&format!(
        "[policy] cb_sides={} sb_out_sides={}",
        sides(&spec.port_policy.cb_sides),
        sides(&spec.port_policy.sb_out_sides)
    ));
    if let Some(t) = &spec.port_policy.cb_tracks {
        out.push_str(&format!(" cb_tracks={}", fmt_tracks(t)));
    }
    if let Some(t) = &spec.port_policy.sb_out_tracks {
        out.push_str(&format!(" sb_out_tracks={}", fmt_tracks(t)));
    }
    out.push('\n');
    out.push_str(&format!("[mem] column_stride={}\n", spec.mem_column_stride));
    out
}
