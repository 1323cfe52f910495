//! IR to netlist lowering.
//!
//! Every IR node owns a signal named after its tuple. Nodes with two or more
//! incoming edges become muxes whose select comes from a configuration
//! field, register nodes become registers, core output ports are driven by
//! the tile's core, and nodes with nothing driving them are tied to zero.
//! A node with exactly one incoming edge is plain wire: it shares the net of
//! whatever drives it.

use std::collections::HashMap;

use crate::ir::{NodeId, NodeKind, RoutingGraph};

use super::config::{ConfigAllocator, ConfigField, FieldMeaning};
use super::{select_width, Endpoint, MuxRole, NetlistBuilder, Primitive, RtlError, StructNetlist};

/// Deterministic instance and net names derived from node signal names.
pub mod names {
    use crate::ir::IrNode;

    pub fn signal(n: &IrNode) -> String {
        n.signal_name()
    }
    pub fn mux(n: &IrNode) -> String {
        format!("mux_{}", n.signal_name())
    }
    pub fn valid_mux(n: &IrNode) -> String {
        format!("vmux_{}", n.signal_name())
    }
    pub fn reg(n: &IrNode) -> String {
        format!("reg_{}", n.signal_name())
    }
    pub fn tie(n: &IrNode) -> String {
        format!("const_{}", n.signal_name())
    }
    pub fn valid_tie(n: &IrNode) -> String {
        format!("vconst_{}", n.signal_name())
    }
    pub fn join(n: &IrNode) -> String {
        format!("join_{}", n.signal_name())
    }
    pub fn core(x: u32, y: u32) -> String {
        format!("core_x{x}y{y}")
    }
    pub fn select_field(n: &IrNode) -> String {
        format!("cfg_{}_sel", n.signal_name())
    }
    pub fn valid_net(signal: &str) -> String {
        format!("v_{signal}")
    }
    pub fn ready_net(signal: &str) -> String {
        format!("r_{signal}")
    }
    pub fn ready_out_net(signal: &str) -> String {
        format!("ro_{signal}")
    }
    pub fn ctl_net(signal: &str) -> String {
        format!("ctl_{signal}")
    }
}

/// FIFO flavour used by the ready-valid lowering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FifoMode {
    /// Each register becomes a full depth-2 FIFO.
    Full2,
    /// Each register holds one entry; adjacent registers chain their control
    /// into a FIFO of up to `chain_depth` entries.
    Split { chain_depth: u32 },
}

impl FifoMode {
    pub fn split() -> Self {
        FifoMode::Split { chain_depth: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RtlDiagnostic {
    /// Some cycle in the fabric passes through no register, so a
    /// ready-valid route along it would have nowhere to buffer.
    NoRegisters { example: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    Mux,
    Register,
    CoreOut,
    Tie,
    Alias(NodeId),
}

pub(crate) struct Plan<'g> {
    pub g: &'g RoutingGraph,
    roles: Vec<Role>,
    root: Vec<NodeId>,
    pub order: Vec<NodeId>,
    layer_index: HashMap<u32, u32>,
}

impl<'g> Plan<'g> {
    pub fn new(g: &'g RoutingGraph) -> Result<Self, RtlError> {
        let diags = g.validate();
        if let Some(d) = diags.first() {
            return Err(RtlError::InvalidGraph(d.to_string()));
        }
        let mut roles = Vec::with_capacity(g.node_count());
        for (id, n) in g.nodes() {
            let fan_in = g.preds(id);
            let role = match &n.kind {
                NodeKind::Register { .. } if fan_in.len() > 1 => {
                    return Err(RtlError::InvalidGraph(format!("register {} has {} drivers", n, fan_in.len())))
                }
                NodeKind::Register { .. } => Role::Register,
                NodeKind::Port { .. } if fan_in.is_empty() && !g.succs(id).is_empty() => Role::CoreOut,
                _ if fan_in.len() >= 2 => Role::Mux,
                _ if fan_in.is_empty() => Role::Tie,
                _ => Role::Alias(fan_in[0]),
            };
            roles.push(role);
        }
        // Resolve alias chains; a ring of single-input nodes has no driver and
        // is tied off at its first member.
        let mut root = vec![NodeId(u32::MAX); g.node_count()];
        for start in g.node_ids() {
            if root[start.index()].0 != u32::MAX {
                continue;
            }
            let mut chain = vec![start];
            let mut cur = start;
            let resolved = loop {
                match roles[cur.index()] {
                    Role::Alias(p) => {
                        if root[p.index()].0 != u32::MAX {
                            break root[p.index()];
                        }
                        if chain.contains(&p) {
                            roles[p.index()] = Role::Tie;
                            break p;
                        }
                        chain.push(p);
                        cur = p;
                    }
                    _ => break cur,
                }
            };
            for n in chain {
                root[n.index()] = if roles[n.index()] == Role::Tie && n != resolved { n } else { resolved };
            }
        }
        let mut order: Vec<NodeId> = g.node_ids().collect();
        order.sort_by_key(|&id| g.get(id).key());
        let layer_index = g.layers().enumerate().map(|(i, (bw, _))| (bw, i as u32)).collect();
        Ok(Plan { g, roles, root, order, layer_index })
    }

    pub fn role(&self, id: NodeId) -> Role {
        self.roles[id.index()]
    }

    /// Net carrying node `id`'s data.
    pub fn data_net(&self, id: NodeId) -> String {
        names::signal(self.g.get(self.root[id.index()]))
    }

    /// Instance pin that drives node `id`'s data net.
    pub fn driver_endpoint(&self, id: NodeId) -> Endpoint {
        let r = self.root[id.index()];
        let n = self.g.get(r);
        match self.role(r) {
            Role::Mux => Endpoint::new(names::mux(n), "O"),
            Role::Register => Endpoint::new(names::reg(n), "Q"),
            Role::CoreOut => Endpoint::new(names::core(n.x, n.y), format!("O_{}", port_name(&n.kind))),
            Role::Tie | Role::Alias(_) => Endpoint::new(names::tie(n), "O"),
        }
    }

    pub fn tiles_with_cores(&self) -> Vec<(u32, u32)> {
        self.tiles_with_ports()
    }

    pub fn is_mux(&self, id: NodeId) -> bool {
        self.role(id) == Role::Mux
    }

    pub fn is_core_input(&self, id: NodeId) -> bool {
        matches!(self.g.get(id).kind, NodeKind::Port { .. }) && self.role(id) != Role::CoreOut
    }

    fn sb_feature(&self, bw: u32) -> u32 {
        1 + 2 * self.layer_index[&bw]
    }

    fn cb_feature(&self, bw: u32) -> u32 {
        2 + 2 * self.layer_index[&bw]
    }

    fn tiles_with_ports(&self) -> Vec<(u32, u32)> {
        let mut tiles: Vec<(u32, u32)> = self
            .g
            .nodes()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Port { .. }))
            .map(|(_, n)| (n.x, n.y))
            .collect();
        tiles.sort();
        tiles.dedup();
        tiles
    }
}

pub(crate) fn port_name(kind: &NodeKind) -> &str {
    match kind {
        NodeKind::Port { name } => name,
        _ => unreachable!("not a port"),
    }
}

/// Lowers to a static mesh: muxes, registers, core shells and config.
pub fn lower_static(g: &RoutingGraph) -> Result<StructNetlist, RtlError> {
    let plan = Plan::new(g)?;
    let mut b = NetlistBuilder::default();
    let mut cfg = ConfigAllocator::default();
    build_data_plane(&plan, &mut b, &mut cfg, None);
    Ok(b.finish(cfg.into_fields()))
}

/// Lowers to a statically configured ready-valid network. Valid bits follow
/// the data topology through 1-bit muxes sharing the data selects; ready
/// bits are joined per source with `ready_join` semantics; registers become
/// FIFO registers.
pub fn lower_ready_valid(g: &RoutingGraph, mode: FifoMode) -> Result<(StructNetlist, Vec<RtlDiagnostic>), RtlError> {
    let plan = Plan::new(g)?;
    let mut b = NetlistBuilder::default();
    let mut cfg = ConfigAllocator::default();
    build_data_plane(&plan, &mut b, &mut cfg, Some(mode));
    let diags = combinational_cycle(g).map(|example| RtlDiagnostic::NoRegisters { example }).into_iter().collect();
    Ok((b.finish(cfg.into_fields()), diags))
}

fn build_data_plane(plan: &Plan<'_>, b: &mut NetlistBuilder, cfg: &mut ConfigAllocator, rv: Option<FifoMode>) {
    let g = plan.g;
    let mut select_net: HashMap<NodeId, (String, u32)> = HashMap::new();

    // Core shells.
    for (x, y) in plan.tiles_with_ports() {
        b.add(names::core(x, y), Primitive::Core { name: "core".into() }, (x, y));
    }

    for &id in &plan.order {
        let n = g.get(id);
        let sig = names::signal(n);
        let tile = (n.x, n.y);
        let w = n.bitwidth;
        match plan.role(id) {
            Role::Mux => {
                let preds = g.preds(id);
                let k = preds.len() as u32;
                let role = if matches!(n.kind, NodeKind::Port { .. }) { MuxRole::Cb } else { MuxRole::Sb };
                let inst = b.add(names::mux(n), Primitive::Mux { inputs: k, width: w, role }, tile);
                for (j, &p) in preds.iter().enumerate() {
                    b.sink(&plan.data_net(p), w, &inst, &format!("I{j}"));
                }
                b.drive(&sig, w, &inst, "O");
                let feature = if role == MuxRole::Cb { plan.cb_feature(w) } else { plan.sb_feature(w) };
                let bits = select_width(k);
                let field = cfg.alloc(names::select_field(n), tile, feature, bits, Endpoint::new(&inst, "S"), FieldMeaning::MuxSelect);
                b.add(field.name.clone(), Primitive::CfgReg { bits }, tile);
                b.drive(&field.name, bits, &field.name, "Q");
                b.sink(&field.name, bits, &inst, "S");
                select_net.insert(id, (field.name.clone(), bits));
                if rv.is_some() {
                    let vinst = b.add(names::valid_mux(n), Primitive::Mux { inputs: k, width: 1, role: MuxRole::Valid }, tile);
                    for (j, &p) in preds.iter().enumerate() {
                        b.sink(&names::valid_net(&plan.data_net(p)), 1, &vinst, &format!("I{j}"));
                    }
                    b.drive(&names::valid_net(&sig), 1, &vinst, "O");
                    b.sink(&field.name, bits, &vinst, "S");
                }
            }
            Role::Register => {
                let inst = names::reg(n);
                let prim = match rv {
                    None => Primitive::Reg { width: w },
                    Some(FifoMode::Full2) => Primitive::FifoReg { width: w, depth: 2 },
                    Some(FifoMode::Split { .. }) => Primitive::FifoReg { width: w, depth: 1 },
                };
                b.add(&inst, prim, tile);
                let pred = g.preds(id).first().copied();
                match pred {
                    Some(p) => b.sink(&plan.data_net(p), w, &inst, "D"),
                    None => tie_input(b, &format!("{inst}_d"), w, &inst, "D", tile),
                }
                b.drive(&sig, w, &inst, "Q");
                if let Some(mode) = rv {
                    match pred {
                        Some(p) => b.sink(&names::valid_net(&plan.data_net(p)), 1, &inst, "VI"),
                        None => tie_input(b, &format!("{inst}_vi"), 1, &inst, "VI", tile),
                    }
                    b.drive(&names::valid_net(&sig), 1, &inst, "VO");
                    b.sink(&names::ready_net(&sig), 1, &inst, "RI");
                    b.drive(&names::ready_out_net(&sig), 1, &inst, "RO");
                    let f = cfg.alloc(
                        format!("cfg_{sig}_fifo"),
                        tile,
                        plan.sb_feature(w),
                        1,
                        Endpoint::new(&inst, "MODE"),
                        FieldMeaning::FifoMode,
                    );
                    cfg_reg(b, &f);
                    if let FifoMode::Split { chain_depth } = mode {
                        // Roles: 0 standalone, 1 head, 2.. middle/tail up to the chain depth.
                        let bits = select_width(chain_depth.max(1) + 1).max(1);
                        let f = cfg.alloc(
                            format!("cfg_{sig}_role"),
                            tile,
                            plan.sb_feature(w),
                            bits,
                            Endpoint::new(&inst, "ROLE"),
                            FieldMeaning::SplitFifoRole,
                        );
                        cfg_reg(b, &f);
                        b.drive(&names::ctl_net(&sig), 1, &inst, "CO");
                        if let Some(up) = upstream_partner(g, id) {
                            b.sink(&names::ctl_net(&names::signal(g.get(up))), 1, &inst, "CI");
                        }
                    }
                }
            }
            Role::CoreOut => {
                let core = names::core(n.x, n.y);
                let p = port_name(&n.kind);
                b.drive(&sig, w, &core, &format!("O_{p}"));
                if rv.is_some() {
                    b.drive(&names::valid_net(&sig), 1, &core, &format!("VO_{p}"));
                    b.sink(&names::ready_net(&sig), 1, &core, &format!("RI_{p}"));
                }
            }
            Role::Tie => {
                let inst = b.add(names::tie(n), Primitive::Const { width: w, value: 0 }, tile);
                b.drive(&sig, w, &inst, "O");
                if rv.is_some() {
                    let v = b.add(names::valid_tie(n), Primitive::Const { width: 1, value: 0 }, tile);
                    b.drive(&names::valid_net(&sig), 1, &v, "O");
                }
            }
            Role::Alias(_) => {}
        }

        if plan.is_core_input(id) {
            let core = names::core(n.x, n.y);
            let p = port_name(&n.kind);
            b.sink(&plan.data_net(id), w, &core, &format!("I_{p}"));
            for (suffix, bits) in [("reg", 1), ("const_en", 1), ("const", w.min(32))] {
                let f = cfg.alloc(
                    format!("cfg_{sig}_{suffix}"),
                    tile,
                    0,
                    bits,
                    Endpoint::new(&core, format!("C_{p}_{suffix}")),
                    FieldMeaning::CoreConfig,
                );
                cfg_reg(b, &f);
            }
            if rv.is_some() {
                b.sink(&names::valid_net(&plan.data_net(id)), 1, &core, &format!("VI_{p}"));
                b.drive(&names::ready_out_net(&sig), 1, &core, &format!("RO_{p}"));
            }
        }
    }

    if rv.is_some() {
        // Ready joins: one per node that can feed something.
        for &id in &plan.order {
            if plan.is_core_input(id) {
                continue;
            }
            let n = g.get(id);
            let sig = names::signal(n);
            let consumers = g.succs(id);
            let sel_index: Vec<Option<u32>> = consumers
                .iter()
                .map(|&c| plan.is_mux(c).then(|| g.preds(c).iter().position(|&p| p == id).unwrap() as u32))
                .collect();
            let inst = b.add(names::join(n), Primitive::Join { sel_index }, (n.x, n.y));
            for (j, &c) in consumers.iter().enumerate() {
                let cn = g.get(c);
                let csig = names::signal(cn);
                let ready = if matches!(cn.kind, NodeKind::Register { .. }) || plan.is_core_input(c) {
                    names::ready_out_net(&csig)
                } else {
                    names::ready_net(&csig)
                };
                b.sink(&ready, 1, &inst, &format!("R{j}"));
                if let Some((net, bits)) = select_net.get(&c) {
                    b.sink(net, *bits, &inst, &format!("S{j}"));
                }
            }
            b.drive(&names::ready_net(&sig), 1, &inst, "O");
        }
    }
}

fn cfg_reg(b: &mut NetlistBuilder, f: &ConfigField) {
    b.add(f.name.clone(), Primitive::CfgReg { bits: f.bit_width }, f.tile);
    b.drive(&f.name, f.bit_width, &f.name, "Q");
    b.sink(&f.name, f.bit_width, &f.target.inst, &f.target.pin);
}

fn tie_input(b: &mut NetlistBuilder, name: &str, width: u32, inst: &str, pin: &str, tile: (u32, u32)) {
    let c = b.add(format!("const_{name}"), Primitive::Const { width, value: 0 }, tile);
    b.drive(name, width, &c, "O");
    b.sink(name, width, inst, pin);
}

/// Register one tile upstream on the same side and track, whose FIFO
/// control chains into `id` in split mode.
pub(crate) fn upstream_partner(g: &RoutingGraph, id: NodeId) -> Option<NodeId> {
    let n = g.get(id);
    let NodeKind::Register { side, track } = n.kind else { return None };
    let (dx, dy) = side.delta();
    let ux = n.x as i64 - dx;
    let uy = n.y as i64 - dy;
    if ux < 0 || uy < 0 {
        return None;
    }
    g.lookup(&crate::ir::NodeKey { bitwidth: n.bitwidth, x: ux as u32, y: uy as u32, kind: NodeKind::Register { side, track } })
}

/// Finds a directed cycle that avoids register nodes, if any.
fn combinational_cycle(g: &RoutingGraph) -> Option<String> {
    let blocked = |id: NodeId| matches!(g.get(id).kind, NodeKind::Register { .. });
    let mut color = vec![0u8; g.node_count()];
    for start in g.node_ids() {
        if color[start.index()] != 0 || blocked(start) {
            continue;
        }
        let mut stack: Vec<(NodeId, usize)> = vec![(start, 0)];
        color[start.index()] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let succs = g.succs(node);
            if *next < succs.len() {
                let s = succs[*next];
                *next += 1;
                if blocked(s) {
                    continue;
                }
                match color[s.index()] {
                    0 => {
                        color[s.index()] = 1;
                        stack.push((s, 0));
                    }
                    1 => return Some(g.get(s).signal_name()),
                    _ => {}
                }
            } else {
                color[node.index()] = 2;
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{create_uniform_interconnect, ArchSpec, Topology};
    use crate::ir::{Io, IrNode, Side};

    fn tiny_mux_graph() -> RoutingGraph {
        let mut g = RoutingGraph::new(1, 1);
        g.add_layer(16, 4);
        let out = g.add_node(IrNode::switch_box(0, 0, Side::North, 0, Io::Outgoing, 16)).unwrap();
        for s in [Side::East, Side::South, Side::West] {
            let i = g.add_node(IrNode::switch_box(0, 0, s, 0, Io::Incoming, 16)).unwrap();
            g.add_edge(i, out).unwrap();
        }
        g
    }

    #[test]
    fn three_input_node_becomes_mux_with_two_select_bits() {
        let n = lower_static(&tiny_mux_graph()).unwrap();
        let mux = n.instances.iter().find(|i| i.name.starts_with("mux_")).unwrap();
        assert_eq!(mux.prim, Primitive::Mux { inputs: 3, width: 16, role: MuxRole::Sb });
        assert_eq!(n.config_map.len(), 1);
        assert_eq!(n.config_map[0].bit_width, 2);
        assert!(n.check_invariants().is_empty(), "{:?}", n.check_invariants());
    }

    #[test]
    fn single_input_node_is_a_wire() {
        let mut g = RoutingGraph::new(2, 1);
        g.add_layer(16, 1);
        let a = g.add_node(IrNode::switch_box(0, 0, Side::East, 0, Io::Outgoing, 16)).unwrap();
        let b = g.add_node(IrNode::switch_box(1, 0, Side::West, 0, Io::Incoming, 16)).unwrap();
        g.add_edge(a, b).unwrap();
        let n = lower_static(&g).unwrap();
        assert!(n.config_map.is_empty());
        // `a` has nothing driving it and is tied off; `b` shares its net.
        assert_eq!(n.instances.len(), 1);
        assert_eq!(n.wires.len(), 1);
    }

    #[test]
    fn alias_ring_is_tied_off() {
        let mut g = RoutingGraph::new(2, 1);
        g.add_layer(16, 1);
        let a = g.add_node(IrNode::switch_box(0, 0, Side::East, 0, Io::Outgoing, 16)).unwrap();
        let b = g.add_node(IrNode::switch_box(1, 0, Side::West, 0, Io::Incoming, 16)).unwrap();
        g.add_edge(a, b).unwrap();
        g.add_edge(b, a).unwrap();
        let n = lower_static(&g).unwrap();
        assert!(n.check_invariants().is_empty());
        assert_eq!(n.instances.iter().filter(|i| matches!(i.prim, Primitive::Const { .. })).count(), 1);
    }

    #[test]
    fn rv_shares_select_fields() {
        let g = create_uniform_interconnect(&ArchSpec::uniform(2, 2, 2, Topology::Disjoint, 1.0)).unwrap();
        let s = lower_static(&g).unwrap();
        let (rv, _) = lower_ready_valid(&g, FifoMode::Full2).unwrap();
        let sel = |n: &StructNetlist| {
            n.config_map.iter().filter(|f| f.meaning == FieldMeaning::MuxSelect).map(|f| f.bit_width as u64).sum::<u64>()
        };
        assert_eq!(sel(&s), sel(&rv));
        assert!(rv.check_invariants().is_empty(), "{:?}", &rv.check_invariants()[..3.min(rv.check_invariants().len())]);
    }

    #[test]
    fn rv_flags_unregistered_cycles() {
        let g = create_uniform_interconnect(&ArchSpec::uniform(2, 2, 1, Topology::Wilton, 0.0)).unwrap();
        let (_, diags) = lower_ready_valid(&g, FifoMode::split()).unwrap();
        assert!(matches!(diags.as_slice(), [RtlDiagnostic::NoRegisters { .. }]));
    }

    #[test]
    fn split_mode_chains_control_to_downstream_register() {
        let g = create_uniform_interconnect(&ArchSpec::uniform(3, 1, 1, Topology::Wilton, 1.0).without_cores()).unwrap();
        let (n, _) = lower_ready_valid(&g, FifoMode::split()).unwrap();
        let ctl = n.wires.iter().find(|w| w.name == "ctl_x0y0_b16_reg_E0").unwrap();
        assert_eq!(ctl.sinks, vec![Endpoint::new("reg_x1y0_b16_reg_E0", "CI")]);
        assert!(n.config_map.iter().any(|f| f.meaning == FieldMeaning::SplitFifoRole));
    }
}
