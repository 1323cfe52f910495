use std::collections::{BTreeMap, BTreeSet};

use cgra_core::pack::{format_app, pack, parse_app, AppGraph, AppInstance, InstKind, PackError, PortRef};
use proptest::prelude::*;

type Paths = BTreeSet<(String, String, u32)>;

fn walk(g: &AppGraph, from: &str, regs: u32, start: &str, out: &mut Paths) {
    for n in g.nets.iter().filter(|n| n.source.inst == from) {
        for s in &n.sinks {
            let inst = g.instance(&s.inst).unwrap();
            let r = regs + u32::from(inst.input_regs.contains_key(&s.port));
            if inst.kind == InstKind::Reg {
                walk(g, &inst.name, r + 1, start, out);
            } else {
                out.insert((start.to_string(), inst.name.clone(), r));
            }
        }
    }
}

fn all_paths(g: &AppGraph) -> Paths {
    let mut out = Paths::new();
    for i in g.instances.iter().filter(|i| !matches!(i.kind, InstKind::Reg | InstKind::Const)) {
        walk(g, &i.name, 0, &i.name, &mut out);
    }
    out
}

/// Random DAG: instance `k` may only read outputs of instances before it.
fn dag() -> impl Strategy<Value = AppGraph> {
    let kind = prop_oneof![
        3 => Just(InstKind::Pe),
        3 => Just(InstKind::Reg),
        1 => Just(InstKind::Mem),
        1 => Just(InstKind::Io),
        1 => Just(InstKind::Const),
    ];
    (proptest::collection::vec(kind, 2..14), proptest::collection::vec(any::<u32>(), 64)).prop_map(|(kinds, picks)| {
        let mut g = AppGraph::default();
        let mut nets: BTreeMap<PortRef, Vec<PortRef>> = BTreeMap::new();
        let mut pick = picks.into_iter().cycle();
        for (k, kind) in kinds.iter().enumerate() {
            let name = format!("{}{k}", kind.name().to_lowercase());
            let mut inst = AppInstance::new(&name, *kind);
            if *kind == InstKind::Const {
                inst = inst.with_attr("value", k * 10);
            }
            g.add(inst);
            for port in kind.inputs() {
                let p = pick.next().unwrap();
                if k == 0 || p % 4 == 0 {
                    continue;
                }
                let src = &g.instances[(p as usize / 4) % k];
                let outs = src.kind.outputs();
                let out = outs[(p as usize / 64) % outs.len()];
                nets.entry(PortRef::new(src.name.clone(), out)).or_default().push(PortRef::new(&name, *port));
            }
        }
        for (src, sinks) in nets {
            g.connect(src, sinks);
        }
        g
    })
}

proptest! {
    #[test]
    fn packing_preserves_register_counts(a in dag()) {
        let p = pack(&a).unwrap();
        prop_assert_eq!(all_paths(&p), all_paths(&a));
    }

    #[test]
    fn packed_graph_invariants(a in dag()) {
        let p = pack(&a).unwrap();
        prop_assert!(p.instances.iter().all(|i| i.kind != InstKind::Const));
        for r in p.instances.iter().filter(|i| i.kind == InstKind::Reg) {
            let fed = p.nets.iter().any(|n| n.sinks.iter().any(|s| s.inst == r.name));
            let out: Vec<&PortRef> = p.nets.iter().filter(|n| n.source.inst == r.name).flat_map(|n| &n.sinks).collect();
            if let [s] = out.as_slice() {
                let sink = p.instance(&s.inst).unwrap();
                let free = sink.kind == InstKind::Pe && !sink.input_regs.contains_key(&s.port);
                prop_assert!(!(fed && free), "register {} should have been absorbed", r.name);
            }
        }
        prop_assert!(p.validate().is_ok());
    }

    #[test]
    fn constants_annotate_every_consumer(a in dag()) {
        let p = pack(&a).unwrap();
        for c in a.instances.iter().filter(|i| i.kind == InstKind::Const) {
            let value: u64 = c.attrs["value"].parse().unwrap();
            for n in a.nets.iter().filter(|n| n.source.inst == c.name) {
                for s in &n.sinks {
                    if let Some(inst) = p.instance(&s.inst) {
                        prop_assert_eq!(inst.consts.get(&s.port), Some(&value));
                    }
                }
            }
        }
    }

    #[test]
    fn pack_is_idempotent(a in dag()) {
        let p = pack(&a).unwrap();
        prop_assert_eq!(pack(&p).unwrap(), p.clone());
        let text = format_app(&a);
        prop_assert_eq!(pack(&parse_app(&text).unwrap()).unwrap(), p);
    }
}

#[test]
fn reg_feeding_pe_and_mem_is_kept() {
    let a = parse_app(
        "inst i IO\ninst r REG\ninst p PE\ninst m MEM\nnet i.out0 -> r.in0\nnet r.out0 -> p.in0,m.in0\n",
    )
    .unwrap();
    let p = pack(&a).unwrap();
    assert!(p.instance("r").is_some());
    assert_eq!(p.nets.len(), a.nets.len());
}

#[test]
fn reg_chain_absorbs_one_per_port() {
    let a = parse_app(
        "inst i IO\ninst r0 REG\ninst r1 REG\ninst p PE\nnet i.out0 -> r0.in0\nnet r0.out0 -> r1.in0\nnet r1.out0 -> p.in0\n",
    )
    .unwrap();
    let p = pack(&a).unwrap();
    assert_eq!(p.count(InstKind::Reg), 1);
    assert_eq!(p.nets.len(), 2);
    assert_eq!(p.instance("p").unwrap().input_regs.len(), 1);
    assert_eq!(all_paths(&p), all_paths(&a));
}

#[test]
fn const_into_three_pes() {
    let a = parse_app(
        "inst k CONST value=5\ninst a PE\ninst b PE\ninst c PE\nnet k.out0 -> a.in1,b.in1,c.in0\n",
    )
    .unwrap();
    let p = pack(&a).unwrap();
    assert!(p.instance("k").is_none());
    assert!(p.nets.is_empty());
    let folded: Vec<_> = p.instances.iter().flat_map(|i| i.consts.iter().map(move |(k, v)| (i.name.as_str(), k.as_str(), *v))).collect();
    assert_eq!(folded, vec![("a", "in1", 5), ("b", "in1", 5), ("c", "in0", 5)]);
}

#[test]
fn malformed_netlists_are_rejected() {
    let mut g = AppGraph::default();
    g.add(AppInstance::new("a", InstKind::Pe));
    g.add(AppInstance::new("b", InstKind::Pe));
    let mut two = g.clone();
    two.connect(PortRef::new("a", "out0"), vec![PortRef::new("b", "in0")]);
    two.connect(PortRef::new("a", "out1"), vec![PortRef::new("b", "in0")]);
    assert!(matches!(pack(&two), Err(PackError::MultiplyDrivenNet(_))));
    let mut dangling = g;
    dangling.connect(PortRef::new("a", "out0"), vec![PortRef::new("b", "in9")]);
    assert!(matches!(pack(&dangling), Err(PackError::DanglingPort(_))));
    assert!(matches!(parse_app("inst a PE\ninst b PE\nnet a.out0 -> b.in9\n"), Err(PackError::DanglingPort(_))));
}
