use std::collections::BTreeMap;

use cgra_core::arch::{create_uniform_interconnect, ArchSpec, Topology};
use cgra_core::ir::{IrNode, NodeKind, RoutingGraph};
use cgra_core::rtl::{
    emit_rtl, lower_ready_valid, lower_static, parse_rtl, verify_structure, verify_valid_mirror, ConfigField, Endpoint, FieldMeaning, FifoMode,
    Finding, Instance, MuxRole, Primitive, RtlError, StructNetlist, Wire,
};

fn mux2x16() -> StructNetlist {
    StructNetlist {
        instances: vec![
            Instance { name: "a".into(), prim: Primitive::Const { width: 16, value: 0 }, tile: (0, 0) },
            Instance { name: "b".into(), prim: Primitive::Const { width: 16, value: 1 }, tile: (0, 0) },
            Instance { name: "cfg_m".into(), prim: Primitive::CfgReg { bits: 1 }, tile: (0, 0) },
            Instance { name: "m".into(), prim: Primitive::Mux { inputs: 2, width: 16, role: MuxRole::Sb }, tile: (0, 0) },
        ],
        wires: vec![
            Wire { name: "cfg_m".into(), width: 1, driver: Endpoint::new("cfg_m", "Q"), sinks: vec![Endpoint::new("m", "S")] },
            Wire { name: "na".into(), width: 16, driver: Endpoint::new("a", "O"), sinks: vec![Endpoint::new("m", "I0")] },
            Wire { name: "nb".into(), width: 16, driver: Endpoint::new("b", "O"), sinks: vec![Endpoint::new("m", "I1")] },
        ],
        config_map: vec![ConfigField {
            name: "cfg_m".into(),
            tile: (0, 0),
            feature_id: 1,
            reg_index: 0,
            bit_offset: 0,
            bit_width: 1,
            target: Endpoint::new("m", "S"),
            meaning: FieldMeaning::MuxSelect,
        }],
    }
    .normalized()
}

fn fabric(w: u32, tracks: u32, topo: Topology, reg: f64) -> RoutingGraph {
    create_uniform_interconnect(&ArchSpec::uniform(w, w, tracks, topo, reg)).unwrap()
}

fn select_bits(k: usize) -> u32 {
    let mut b = 0;
    while (1usize << b) < k {
        b += 1;
    }
    b
}

fn mux_select_bits(n: &StructNetlist) -> u32 {
    n.config_map.iter().filter(|f| f.meaning == FieldMeaning::MuxSelect).map(|f| f.bit_width).sum()
}

#[test]
fn single_mux_matches_golden() {
    let golden = include_str!("golden/mux2x16.rtl");
    assert_eq!(emit_rtl(&mux2x16()), golden);
    assert_eq!(parse_rtl(golden).unwrap(), mux2x16());
}

#[test]
fn small_fabric_fixpoint() {
    for topo in [Topology::Wilton, Topology::Disjoint] {
        let g = fabric(2, 2, topo, 1.0);
        let n = lower_static(&g).unwrap();
        let text = emit_rtl(&n);
        let back = parse_rtl(&text).unwrap();
        assert_eq!(back, n);
        assert_eq!(emit_rtl(&back), text);
        assert!(verify_structure(&g, &back).unwrap().is_ok());
    }
}

#[test]
fn renamed_sink_gives_one_finding() {
    let g = fabric(2, 2, Topology::Wilton, 0.0);
    let text = emit_rtl(&lower_static(&g).unwrap());
    let bad = text.replacen(".I1(x0y0_b16_sb_in_N1)", ".I1(x0y0_b16_sb_in_N0)", 1);
    assert_ne!(bad, text);
    let n = parse_rtl(&bad).unwrap();
    let report = verify_structure(&g, &n).unwrap();
    assert_eq!(report.findings.len(), 1, "{report}");
    assert!(matches!(&report.findings[0], Finding::WrongDriver { sink, .. } if sink.pin == "I1"));
}

#[test]
fn deleted_mux_input_is_reported() {
    let g = fabric(2, 2, Topology::Disjoint, 0.0);
    let mut n = lower_static(&g).unwrap();
    let w = n.wires.iter_mut().find(|w| w.sinks.iter().any(|s| s.pin == "I2")).unwrap();
    let pos = w.sinks.iter().position(|s| s.pin == "I2").unwrap();
    let lost = w.sinks.remove(pos);
    let report = verify_structure(&g, &n).unwrap();
    assert_eq!(report.findings.len(), 1, "{report}");
    assert!(matches!(&report.findings[0], Finding::MissingConnection { sink, .. } if *sink == lost));
}

#[test]
fn empty_input_is_a_parse_error() {
    assert!(matches!(parse_rtl(""), Err(RtlError::Parse { .. })));
    assert!(matches!(parse_rtl("   \n"), Err(RtlError::Parse { .. })));
}

#[test]
fn select_bits_match_fan_in_census() {
    for (w, tracks, topo) in [(2, 2, Topology::Disjoint), (2, 3, Topology::Wilton), (3, 2, Topology::Wilton)] {
        let g = fabric(w, tracks, topo, 0.0);
        let mut want = 0;
        let mut muxes = 0;
        for id in g.node_ids() {
            let k = g.preds(id).len();
            if k >= 2 {
                want += select_bits(k);
                muxes += 1;
            }
        }
        let n = lower_static(&g).unwrap();
        assert_eq!(mux_select_bits(&n), want);
        let census = n.count_primitives();
        assert_eq!(census.get("MUX").copied().unwrap_or(0), muxes);
    }
}

#[test]
fn single_input_nodes_are_plain_wires() {
    let mut g = RoutingGraph::new(1, 1);
    g.add_layer(16, 1);
    let a = g.add_node(IrNode::port(0, 0, "out0", 16)).unwrap();
    let b = g.add_node(IrNode::port(0, 0, "in0", 16)).unwrap();
    g.add_edge(a, b).unwrap();
    let n = lower_static(&g).unwrap();
    assert!(n.instances.iter().all(|i| !matches!(i.prim, Primitive::Mux { .. })));
    assert_eq!(mux_select_bits(&n), 0);
    assert!(matches!(g.get(b).kind, NodeKind::Port { .. }));
}

#[test]
fn ready_valid_reuses_data_selects() {
    let g = fabric(3, 5, Topology::Wilton, 1.0);
    let st = lower_static(&g).unwrap();
    for mode in [FifoMode::Full2, FifoMode::split()] {
        let (rv, _) = lower_ready_valid(&g, mode).unwrap();
        assert_eq!(mux_select_bits(&rv), mux_select_bits(&st));
        assert!(verify_valid_mirror(&rv).is_ok());
        assert!(verify_structure(&g, &rv).unwrap().is_ok());
        let (cs, cr) = (st.count_primitives(), rv.count_primitives());
        assert_eq!(cr["MUX"], 2 * cs["MUX"], "one valid mux per data mux");
        assert!(cr.get("JOIN").copied().unwrap_or(0) > 0);
        let text = emit_rtl(&rv);
        assert_eq!(parse_rtl(&text).unwrap(), rv);
    }
}

#[test]
fn storage_bits_order_by_register_style() {
    let g = fabric(4, 4, Topology::Wilton, 1.0);
    let st = lower_static(&g).unwrap().area_proxy();
    let split = lower_ready_valid(&g, FifoMode::split()).unwrap().0.area_proxy();
    let full = lower_ready_valid(&g, FifoMode::Full2).unwrap().0.area_proxy();
    assert!(st.storage_bits < split.storage_bits && split.storage_bits < full.storage_bits);
    let regs = g.nodes().filter(|(_, n)| matches!(n.kind, NodeKind::Register { .. })).count() as u64;
    assert_eq!(st.storage_bits, regs * 16);
    assert_eq!(full.storage_bits, regs * (2 * 17 + 2));
}

#[test]
fn area_grows_with_tracks() {
    let mut prev: Option<BTreeMap<&str, u64>> = None;
    for tracks in 1..=6 {
        let a = lower_static(&fabric(4, tracks, Topology::Wilton, 0.0)).unwrap().area_proxy();
        let cur = BTreeMap::from([("sb", a.sb_area), ("cb", a.cb_area), ("mux", a.mux_input_count), ("cfg", a.config_bits)]);
        if let Some(p) = &prev {
            for (k, v) in &cur {
                assert!(v > &p[k], "{k} at {tracks} tracks");
            }
        }
        prev = Some(cur);
    }
}
