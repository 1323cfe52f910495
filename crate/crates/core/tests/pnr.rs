use std::collections::BTreeMap;

use cgra_core::dse::{benchmark, run_pnr, PnrParams, BENCHMARKS};
use cgra_core::place::{format_placement, hpwl, SiteGrid};
use cgra_core::route::{format_routes, parse_routes, sta_routed, DelayModel};
use cgra_core::{create_uniform_interconnect, ArchSpec, NodeId, RoutingGraph};

fn tile(g: &RoutingGraph, v: NodeId) -> (u32, u32) {
    let n = g.get(v);
    (n.x, n.y)
}

#[test]
fn benchmark_runs_are_legal() {
    let spec = ArchSpec::default();
    let g = create_uniform_interconnect(&spec).unwrap();
    let grid = SiteGrid::from_fabric(&spec, &g);
    for (name, _) in BENCHMARKS {
        let app = benchmark(name).unwrap();
        let r = run_pnr(&spec, &g, &app, &PnrParams { alphas: vec![1.0, 5.0], ..PnrParams::with_seed(1) }).unwrap();
        r.placement.check_legal(&r.packed, &grid).unwrap();

        let mut owner: BTreeMap<NodeId, &str> = BTreeMap::new();
        for (net, tree) in &r.routing.routes {
            tree.check(&g).unwrap();
            for v in tree.nodes() {
                if let Some(other) = owner.insert(v, net) {
                    panic!("{name}: node {v} shared by {net} and {other}");
                }
            }
        }

        for n in &r.packed.nets {
            let Some(tree) = r.routing.routes.get(&n.name()) else { continue };
            let pins: Vec<(u32, u32)> = std::iter::once(&n.source)
                .chain(&n.sinks)
                .filter_map(|p| r.placement.get(&p.inst))
                .collect();
            let hops = tree.edges().iter().filter(|(a, b)| tile(&g, *a) != tile(&g, *b)).count() as u32;
            assert!(hops >= hpwl(&pins), "{name}: net {} uses {hops} hops, hpwl {}", n.name(), hpwl(&pins));
        }

        let t = sta_routed(&r.packed, &g, &r.placement, &r.routing.routes, &DelayModel::from_arch(&spec)).unwrap();
        assert_eq!(t.d_max, r.critical_path);
        assert!(r.critical_path > 0.0);
        for (net, slack) in &t.net_slack {
            assert!(*slack >= -1e-9, "{name}: net {net} slack {slack}");
        }
    }
}

#[test]
fn fixed_seed_is_reproducible() {
    let spec = ArchSpec::default();
    let g = create_uniform_interconnect(&spec).unwrap();
    let app = benchmark("fanout").unwrap();
    let p = PnrParams::with_seed(5);
    let a = run_pnr(&spec, &g, &app, &p).unwrap();
    let b = run_pnr(&spec, &g, &app, &p).unwrap();
    assert_eq!(format_placement(&a.placement), format_placement(&b.placement));
    let text = format_routes(&a.routing.routes);
    assert_eq!(text, format_routes(&b.routing.routes));
    assert_eq!(parse_routes(&text).unwrap(), a.routing.routes);
}

#[test]
fn alpha_sweep_never_loses_to_alpha_one() {
    let spec = ArchSpec::default();
    let g = create_uniform_interconnect(&spec).unwrap();
    let app = benchmark("tree").unwrap();
    for seed in 0..3 {
        let full = run_pnr(&spec, &g, &app, &PnrParams::with_seed(seed)).unwrap();
        let one = run_pnr(&spec, &g, &app, &PnrParams { alphas: vec![1.0], ..PnrParams::with_seed(seed) }).unwrap();
        assert!(full.critical_path <= one.critical_path);
        let best = full.alpha_runs.iter().filter_map(|r| r.critical_path).fold(f64::INFINITY, f64::min);
        assert_eq!(best, full.critical_path);
    }
}
