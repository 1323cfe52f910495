use std::collections::{BTreeSet, VecDeque};

use cgra_core::arch::{create_uniform_interconnect, ArchSpec, PortConnPolicy, TileKind, Topology};
use cgra_core::ir::{deserialize_graph, serialize_graph, Io, NodeKind, RoutingGraph, Side};
use cgra_core::rtl::{lower_static, FieldMeaning};
use cgra_core::NodeId;
use proptest::prelude::*;

fn spec(w: u32, tracks: u32, topo: Topology, reg: f64) -> ArchSpec {
    ArchSpec::uniform(w, w, tracks, topo, reg)
}

fn build(s: &ArchSpec) -> RoutingGraph {
    create_uniform_interconnect(s).unwrap()
}

fn is_sb(g: &RoutingGraph, id: NodeId, want: Io) -> bool {
    matches!(g.get(id).kind, NodeKind::SwitchBox { io, .. } if io == want)
}

fn track(g: &RoutingGraph, id: NodeId) -> Option<u32> {
    g.get(id).kind.track()
}

fn edge_set(g: &RoutingGraph) -> BTreeSet<(String, String)> {
    g.edges().map(|(a, b)| (g.get(a).to_string(), g.get(b).to_string())).collect()
}

fn bits(k: u64) -> u64 {
    (0..).find(|b| (1u64 << b) >= k).unwrap()
}

#[test]
fn generated_fabrics_validate_and_round_trip() {
    for topo in [Topology::Wilton, Topology::Disjoint] {
        let g = build(&spec(8, 5, topo, 0.5));
        assert!(g.validate().is_empty());
        let text = serialize_graph(&g);
        let back = deserialize_graph(&text).unwrap();
        assert_eq!(serialize_graph(&back), text);
        assert_eq!(edge_set(&back), edge_set(&g));
    }
}

#[test]
fn large_registered_fabric_builds() {
    let g = build(&spec(32, 5, Topology::Wilton, 1.0));
    assert!(g.validate().is_empty());
    assert!(g.nodes().any(|(_, n)| matches!(n.kind, NodeKind::Register { .. })));
}

#[test]
fn construction_is_idempotent() {
    let s = spec(5, 3, Topology::Wilton, 1.0);
    let (a, b) = (build(&s), build(&s));
    assert_eq!(serialize_graph(&a), serialize_graph(&b));
    let keys = |g: &RoutingGraph| g.nodes().map(|(_, n)| n.to_string()).collect::<BTreeSet<_>>();
    assert_eq!(keys(&a), keys(&b));
}

#[test]
fn interior_sb_outputs_have_three_routing_inputs() {
    for topo in [Topology::Wilton, Topology::Disjoint] {
        let g = build(&spec(3, 5, topo, 0.0));
        for (id, n) in g.nodes() {
            if n.x == 1 && n.y == 1 && is_sb(&g, id, Io::Outgoing) {
                let sb: Vec<NodeId> = g.preds(id).iter().copied().filter(|&p| is_sb(&g, p, Io::Incoming)).collect();
                assert_eq!(sb.len(), 3, "{n}");
                let sides: BTreeSet<Side> = sb.iter().filter_map(|&p| g.get(p).kind.side()).collect();
                assert_eq!(sides.len(), 3);
                assert!(!sides.contains(&n.kind.side().unwrap()));
                if topo == Topology::Disjoint {
                    assert!(sb.iter().all(|&p| track(&g, p) == track(&g, id)));
                }
                // Two PE outputs drive every side.
                assert_eq!(g.preds(id).len(), 5);
            }
        }
    }
}

#[test]
fn wilton_and_disjoint_have_equal_fan_in() {
    let w = build(&spec(4, 5, Topology::Wilton, 0.0));
    let d = build(&spec(4, 5, Topology::Disjoint, 0.0));
    assert_eq!(w.node_count(), d.node_count());
    assert_eq!(w.edge_count(), d.edge_count());
    for (id, n) in w.nodes() {
        let other = d.lookup(&n.key()).unwrap();
        assert_eq!(w.preds(id).len(), d.preds(other).len(), "{n}");
    }
}

/// Tracks reachable from one incoming track through switch-box nodes only.
fn reachable_tracks(g: &RoutingGraph, start: NodeId) -> BTreeSet<u32> {
    let mut seen = BTreeSet::from([start]);
    let mut q = VecDeque::from([start]);
    while let Some(v) = q.pop_front() {
        for &s in g.succs(v) {
            if matches!(g.get(s).kind, NodeKind::SwitchBox { .. }) && seen.insert(s) {
                q.push_back(s);
            }
        }
    }
    seen.iter().filter_map(|&v| track(g, v)).collect()
}

#[test]
fn disjoint_keeps_tracks_and_wilton_changes_them() {
    let d = build(&spec(5, 5, Topology::Disjoint, 0.0));
    let w = build(&spec(5, 5, Topology::Wilton, 0.0));
    for t in 0..5 {
        let sd = d.find_sb(16, 2, 2, Side::West, t, Io::Incoming).unwrap();
        assert_eq!(reachable_tracks(&d, sd), BTreeSet::from([t]));
        let sw = w.find_sb(16, 2, 2, Side::West, t, Io::Incoming).unwrap();
        assert!(reachable_tracks(&w, sw).len() > 1);
    }
}

#[test]
fn port_policy_edge_counts() {
    let full = build(&spec(4, 5, Topology::Wilton, 0.0));
    let mut s = spec(4, 5, Topology::Wilton, 0.0);
    s.port_policy.sb_out_sides = PortConnPolicy::sweep_sides(3);
    let three = build(&s);
    let out_edges = |g: &RoutingGraph, x, y| {
        ["out0", "out1"].iter().map(|p| g.succs(g.find_port(x, y, p).unwrap()).len()).sum::<usize>()
    };
    assert_eq!(out_edges(&full, 1, 1) - out_edges(&three, 1, 1), 10);

    let mut s = spec(4, 5, Topology::Wilton, 0.0);
    s.port_policy.cb_sides = PortConnPolicy::sweep_sides(2);
    let two = build(&s);
    for p in ["in0", "in1", "in2", "in3"] {
        assert_eq!(full.preds(full.find_port(1, 1, p).unwrap()).len(), 20);
        assert_eq!(two.preds(two.find_port(1, 1, p).unwrap()).len(), 10);
    }
}

#[test]
fn full_register_density_counts() {
    let base = build(&spec(4, 5, Topology::Wilton, 0.0));
    assert_eq!(base.nodes().filter(|(_, n)| matches!(n.kind, NodeKind::Register { .. })).count(), 0);
    let g = build(&spec(4, 5, Topology::Wilton, 1.0));
    let at = |x, y, regmux: bool| {
        g.nodes()
            .filter(|(_, n)| n.x == x && n.y == y)
            .filter(|(_, n)| if regmux { matches!(n.kind, NodeKind::RegMux { .. }) } else { matches!(n.kind, NodeKind::Register { .. }) })
            .count()
    };
    assert_eq!((at(1, 1, false), at(1, 1, true)), (20, 20));
    assert_eq!((at(0, 0, false), at(0, 0, true)), (10, 10));
    for (id, n) in g.nodes() {
        if matches!(n.kind, NodeKind::RegMux { .. }) {
            assert_eq!(g.preds(id).len(), 2);
        }
    }
}

/// Select bits from the construction rules: every outgoing track muxes the
/// three other sides plus the core outputs allowed on its side, every core
/// input muxes the allowed incoming tracks, every register bypass is 2:1.
fn closed_form_select_bits(s: &ArchSpec) -> u64 {
    let w = s.layers[0].num_tracks as u64;
    let p = &s.port_policy;
    let mut total = 0;
    for y in 0..s.height {
        for x in 0..s.width {
            let core = s.core_at(x, y);
            let n_out = core.map_or(0, |c| c.outputs.len()) as u64;
            let n_in = core.map_or(0, |c| c.inputs.len()) as u64;
            for side in Side::ALL {
                let k = 3 + if p.sb_out_sides.contains(&side) { n_out } else { 0 };
                total += w * bits(k);
            }
            total += n_in * bits(w * p.cb_sides.len() as u64);
            if s.layers[0].reg_density > 0.0 {
                let inner = Side::ALL
                    .iter()
                    .filter(|sd| {
                        let (dx, dy) = sd.delta();
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        nx >= 0 && ny >= 0 && nx < s.width as i64 && ny < s.height as i64
                    })
                    .count() as u64;
                total += inner * w;
            }
        }
    }
    total
}

#[test]
fn select_bit_census_matches_closed_form() {
    for (w, tracks, topo, reg, sides) in [
        (2, 2, Topology::Disjoint, 0.0, 4),
        (3, 2, Topology::Wilton, 1.0, 4),
        (4, 3, Topology::Wilton, 0.0, 3),
        (5, 4, Topology::Disjoint, 1.0, 2),
    ] {
        let mut s = spec(w, tracks, topo, reg);
        s.port_policy.sb_out_sides = PortConnPolicy::sweep_sides(sides);
        s.port_policy.cb_sides = PortConnPolicy::sweep_sides(sides);
        let n = lower_static(&build(&s)).unwrap();
        let got: u64 = n.config_map.iter().filter(|f| f.meaning == FieldMeaning::MuxSelect).map(|f| f.bit_width as u64).sum();
        assert_eq!(got, closed_form_select_bits(&s), "{w}x{w} tracks {tracks} {topo} reg {reg} sides {sides}");
    }
}

#[test]
fn mem_columns_and_io_ring() {
    let s = spec(8, 5, Topology::Wilton, 0.0);
    assert_eq!(s.mem_columns(), vec![2, 6]);
    assert_eq!(s.tile_kind(0, 3), TileKind::Io);
    assert_eq!(s.tile_kind(2, 3), TileKind::Mem);
    assert_eq!(s.tile_kind(3, 3), TileKind::Pe);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn serialization_is_a_bijection(w in 1u32..5, h in 1u32..5, tracks in 1u32..5, wilton in any::<bool>(), reg in 0.0f64..=1.0, sides in 1usize..=4) {
        let topo = if wilton { Topology::Wilton } else { Topology::Disjoint };
        let mut s = ArchSpec::uniform(w, h, tracks, topo, reg);
        s.port_policy.sb_out_sides = PortConnPolicy::sweep_sides(sides);
        let g = build(&s);
        prop_assert!(g.validate().is_empty());
        let text = serialize_graph(&g);
        let back = deserialize_graph(&text).unwrap();
        prop_assert_eq!(serialize_graph(&back), text);
        prop_assert_eq!(edge_set(&back), edge_set(&g));
        let out_deg: usize = g.node_ids().map(|v| g.succs(v).len()).sum();
        let in_deg: usize = g.node_ids().map(|v| g.preds(v).len()).sum();
        prop_assert_eq!(out_deg, g.edge_count());
        prop_assert_eq!(in_deg, g.edge_count());
    }
}
