//! Timing-driven negotiated-congestion routing over the IR graph, and static
//! timing analysis of placed (and optionally routed) applications.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use log::debug;
use thiserror::Error;

use crate::arch::ArchSpec;
use crate::ir::{NodeId, NodeKind, RoutingGraph};
use crate::pack::{AppNet, InstKind, PackedGraph, PortRef};
use crate::place::Placement;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("no path from {from:?} to {to:?}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("sink {sink} of net {net} cannot be reached even without congestion")]
    UnroutableSink { net: String, sink: String },
    #[error("routing failed after {iterations} iterations with {remaining_overuse} overused nodes")]
    RoutingFailed { iterations: usize, remaining_overuse: usize },
    #[error("pin {0} has no fabric port at its placed tile")]
    UnmappedPin(String),
    #[error("combinational loop through {0}")]
    CombinationalLoop(String),
    #[error("route parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteParams {
    pub max_iterations: usize,
    pub present_factor: f64,
    pub present_growth: f64,
    pub history_increment: f64,
    /// Criticality is raised to this power before weighting delay.
    pub criticality_exponent: f64,
    pub max_criticality: f64,
    /// Extra base cost of nodes on tiles that hold no instance.
    pub unused_tile_penalty: f64,
    /// Allow routes through pipeline register nodes.
    pub use_registers: bool,
    pub seed: u64,
}

impl Default for RouteParams {
    fn default() -> Self {
        RouteParams {
            max_iterations: 50,
            present_factor: 0.5,
            present_growth: 1.5,
            history_increment: 0.5,
            criticality_exponent: 1.0,
            max_criticality: 0.99,
            unused_tile_penalty: 0.25,
            use_registers: false,
            seed: 0,
        }
    }
}

/// `crit * delay + (1 - crit) * base * (1 + history) * (1 + present)`.
pub fn edge_cost(delay: f64, crit: f64, history: f64, present: f64, base: f64) -> f64 {
    crit * delay + (1.0 - crit) * base * (1.0 + history) * (1.0 + present)
}

fn manhattan(g: &RoutingGraph, a: NodeId, b: NodeId) -> f64 {
    let (na, nb) = (g.get(a), g.get(b));
    ((na.x as i64 - nb.x as i64).abs() + (na.y as i64 - nb.y as i64).abs()) as f64
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    g: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.partial_cmp(&self.f).unwrap_or(Ordering::Equal).then_with(|| o.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// A* from any of `sources` (cost 0) to `sink`. A path's cost is the sum of
/// `cost` over its nodes after the source. `h_per_tile` times the Manhattan
/// tile distance must not exceed the cost of the cheapest node; nodes may be
/// reopened, so the result is a minimum-cost path for any such bound.
pub fn astar_multi(
    g: &RoutingGraph,
    sources: &[NodeId],
    sink: NodeId,
    cost: &dyn Fn(NodeId) -> f64,
    h_per_tile: f64,
    allowed: &dyn Fn(NodeId) -> bool,
) -> Result<(Vec<NodeId>, f64), RouteError> {
    let n = g.node_count();
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![None::<NodeId>; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        best[s.index()] = 0.0;
        heap.push(Entry { f: h_per_tile * manhattan(g, s, sink), g: 0.0, node: s });
    }
    while let Some(Entry { g: gv, node, .. }) = heap.pop() {
        if gv > best[node.index()] {
            continue;
        }
        if node == sink {
            let mut path = vec![sink];
            let mut cur = sink;
            while let Some(p) = parent[cur.index()] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok((path, gv));
        }
        for &s in g.succs(node) {
            if s != sink && !allowed(s) {
                continue;
            }
            let ng = gv + cost(s);
            if ng < best[s.index()] {
                best[s.index()] = ng;
                parent[s.index()] = Some(node);
                heap.push(Entry { f: ng + h_per_tile * manhattan(g, s, sink), g: ng, node: s });
            }
        }
    }
    Err(RouteError::Unreachable { from: sources.first().copied().unwrap_or(sink), to: sink })
}

/// Single-source A* with every node allowed.
pub fn astar(
    g: &RoutingGraph,
    src: NodeId,
    sink: NodeId,
    cost: &dyn Fn(NodeId) -> f64,
    h_per_tile: f64,
) -> Result<(Vec<NodeId>, f64), RouteError> {
    astar_multi(g, &[src], sink, cost, h_per_tile, &|_| true)
}

/// Routing tree of one net, kept as the branch paths in the order they were
/// found. The first branch starts at the source; every later branch starts
/// at a node already in the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteTree {
    pub source: NodeId,
    pub sinks: Vec<NodeId>,
    pub branches: Vec<Vec<NodeId>>,
}

impl RouteTree {
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = std::iter::once(self.source).chain(self.branches.iter().flatten().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Directed (parent, child) edges.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut e: Vec<(NodeId, NodeId)> = self.branches.iter().flat_map(|b| b.windows(2).map(|w| (w[0], w[1]))).collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Node path from the source to `sink`.
    pub fn path_to(&self, sink: NodeId) -> Option<Vec<NodeId>> {
        let parent: HashMap<NodeId, NodeId> = self.edges().into_iter().map(|(a, b)| (b, a)).collect();
        let mut path = vec![sink];
        let mut cur = sink;
        while cur != self.source {
            cur = *parent.get(&cur)?;
            path.push(cur);
            if path.len() > parent.len() + 2 {
                return None;
            }
        }
        path.reverse();
        Some(path)
    }

    /// Checks that edges exist, every node has one parent, and every sink
    /// is reachable from the source.
    pub fn check(&self, g: &RoutingGraph) -> Result<(), String> {
        let mut parent = HashMap::new();
        for (a, b) in self.edges() {
            if !g.has_edge(a, b) {
                return Err(format!("edge {a:?}->{b:?} not in graph"));
            }
            if let Some(p) = parent.insert(b, a) {
                if p != a {
                    return Err(format!("node {b:?} has two parents"));
                }
            }
        }
        if parent.contains_key(&self.source) {
            return Err("source has a parent".into());
        }
        for &s in &self.sinks {
            if self.path_to(s).is_none() {
                return Err(format!("sink {s:?} not connected"));
            }
        }
        Ok(())
    }
}

pub type RouteSet = BTreeMap<String, RouteTree>;

pub fn format_routes(routes: &RouteSet) -> String {
    let mut out = String::new();
    for (net, t) in routes {
        out.push_str(&format!("route {net}\n"));
        for b in &t.branches {
            let ids: Vec<String> = b.iter().map(|n| n.0.to_string()).collect();
            out.push_str(&format!("  {}\n", ids.join(" ")));
        }
    }
    out
}

/// Reads a route file. Sinks are the branch ends; the source is the first
/// node of the first branch.
pub fn parse_routes(text: &str) -> Result<RouteSet, RouteError> {
    let mut out = RouteSet::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let err = |message: String| RouteError::Parse { line: i + 1, message };
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        if let Some(net) = content.strip_prefix("route ") {
            let net = net.trim().to_string();
            out.insert(net.clone(), RouteTree { source: NodeId(0), sinks: vec![], branches: vec![] });
            current = Some(net);
        } else if content.starts_with(char::is_whitespace) {
            let net = current.as_ref().ok_or_else(|| err("branch before any `route` line".into()))?;
            let ids = content
                .split_whitespace()
                .map(|t| t.parse::<u32>().map(NodeId).map_err(|_| err(format!("`{t}` is not a node id"))))
                .collect::<Result<Vec<_>, _>>()?;
            let t = out.get_mut(net).unwrap();
            if t.branches.is_empty() {
                t.source = ids[0];
            }
            t.sinks.push(*ids.last().unwrap());
            t.branches.push(ids);
        } else {
            return Err(err(format!("unexpected line `{}`", content.trim())));
        }
    }
    Ok(out)
}

/// Per-kind core delays and the pre-route wire estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayModel {
    pub pe: f64,
    pub mem: f64,
    pub io: f64,
    pub reg: f64,
    /// Delay per tile of Manhattan distance before routing.
    pub wire_unit: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel { pe: 2.0, mem: 1.0, io: 0.0, reg: 0.0, wire_unit: 1.0 }
    }
}

impl DelayModel {
    pub fn from_arch(spec: &ArchSpec) -> Self {
        let d = DelayModel::default();
        DelayModel {
            pe: spec.pe_core.as_ref().map_or(d.pe, |c| c.delay),
            mem: spec.mem_core.as_ref().map_or(d.mem, |c| c.delay),
            io: spec.io_core.as_ref().map_or(d.io, |c| c.delay),
            reg: 0.0,
            wire_unit: spec.sb_delay,
        }
    }

    fn core(&self, k: InstKind) -> f64 {
        match k {
            InstKind::Pe => self.pe,
            InstKind::Mem => self.mem,
            InstKind::Io => self.io,
            InstKind::Reg | InstKind::Const => self.reg,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingInfo {
    pub d_max: f64,
    /// Slack per net name.
    pub net_slack: BTreeMap<String, f64>,
    /// Arrival time per `inst.port` pin.
    pub arrival: BTreeMap<String, f64>,
    /// Required time per `inst.port` pin.
    pub required: BTreeMap<String, f64>,
}

impl TimingInfo {
    /// `1 - slack / d_max`, clamped to `[0, max]`.
    pub fn criticality(&self, net: &str, max: f64) -> f64 {
        if self.d_max <= 0.0 {
            return 0.0;
        }
        let s = self.net_slack.get(net).copied().unwrap_or(self.d_max);
        (1.0 - s / self.d_max).clamp(0.0, max)
    }
}

fn is_sequential(k: InstKind) -> bool {
    !matches!(k, InstKind::Pe)
}

/// Longest-path timing. IO, MEM and unabsorbed REG instances are
/// sequential; PEs are combinational except at ports with an absorbed input
/// register. `net_delay(net, sink)` gives the wire delay to each sink.
pub fn sta_with(
    packed: &PackedGraph,
    model: &DelayModel,
    net_delay: &dyn Fn(&AppNet, &PortRef) -> f64,
) -> Result<TimingInfo, RouteError> {
    let kinds: HashMap<&str, &crate::pack::AppInstance> = packed.instances.iter().map(|i| (i.name.as_str(), i)).collect();
    let comb_in = |p: &PortRef| -> bool {
        kinds.get(p.inst.as_str()).is_some_and(|i| i.kind == InstKind::Pe && !i.input_regs.contains_key(&p.port))
    };
    // Topological order over PEs along combinational inputs.
    let pes: Vec<&str> = packed.instances.iter().filter(|i| i.kind == InstKind::Pe).map(|i| i.name.as_str()).collect();
    let mut indeg: HashMap<&str, usize> = pes.iter().map(|&p| (p, 0)).collect();
    let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
    for n in &packed.nets {
        let src_pe = kinds.get(n.source.inst.as_str()).is_some_and(|i| i.kind == InstKind::Pe);
        for s in &n.sinks {
            if src_pe && comb_in(s) {
                succ.entry(n.source.inst.as_str()).or_default().push(s.inst.as_str());
                *indeg.get_mut(s.inst.as_str()).unwrap() += 1;
            }
        }
    }
    let mut ready: Vec<&str> = pes.iter().copied().filter(|p| indeg[p] == 0).collect();
    ready.sort_unstable();
    let mut order = Vec::new();
    while let Some(p) = ready.pop() {
        order.push(p);
        for &s in succ.get(p).into_iter().flatten() {
            let d = indeg.get_mut(s).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(s);
            }
        }
    }
    if order.len() != pes.len() {
        let stuck = pes.iter().find(|p| !order.contains(p)).unwrap();
        return Err(RouteError::CombinationalLoop(stuck.to_string()));
    }

    let mut nets_from: HashMap<&str, Vec<&AppNet>> = HashMap::new();
    let mut net_into: HashMap<String, (&AppNet, &PortRef)> = HashMap::new();
    for n in &packed.nets {
        nets_from.entry(n.source.inst.as_str()).or_default().push(n);
        for s in &n.sinks {
            net_into.insert(s.to_string(), (n, s));
        }
    }

    // Forward: arrival at every output and input pin.
    let mut arrival: BTreeMap<String, f64> = BTreeMap::new();
    let mut out_arrival: HashMap<&str, f64> = HashMap::new();
    for i in &packed.instances {
        if is_sequential(i.kind) {
            out_arrival.insert(i.name.as_str(), model.core(i.kind));
        }
    }
    let input_arrival = |p: &PortRef, out_arrival: &HashMap<&str, f64>| -> Option<f64> {
        let (n, s) = net_into.get(&p.to_string())?;
        Some(out_arrival.get(n.source.inst.as_str()).copied().unwrap_or(0.0) + net_delay(n, s))
    };
    for &pe in &order {
        let inst = kinds[pe];
        let mut t: f64 = 0.0;
        for port in InstKind::Pe.inputs() {
            let p = PortRef::new(pe, *port);
            if inst.input_regs.contains_key(*port) {
                continue;
            }
            if let Some(a) = input_arrival(&p, &out_arrival) {
                t = t.max(a);
            }
        }
        out_arrival.insert(pe, t + model.pe);
    }
    let mut d_max: f64 = 0.0;
    for n in &packed.nets {
        let src = out_arrival.get(n.source.inst.as_str()).copied().unwrap_or(0.0);
        arrival.insert(n.source.to_string(), src);
        d_max = d_max.max(src);
        for s in &n.sinks {
            let a = src + net_delay(n, s);
            arrival.insert(s.to_string(), a);
            d_max = d_max.max(a);
        }
    }
    for (name, &a) in &out_arrival {
        if !nets_from.contains_key(name) {
            d_max = d_max.max(a);
        }
    }

    // Backward: required times.
    let mut required: BTreeMap<String, f64> = BTreeMap::new();
    let mut out_required: HashMap<&str, f64> = HashMap::new();
    let sink_required = |s: &PortRef, out_required: &HashMap<&str, f64>| -> f64 {
        if comb_in(s) {
            out_required.get(s.inst.as_str()).copied().unwrap_or(d_max) - model.pe
        } else {
            d_max
        }
    };
    let source_required = |name: &str, out_required: &HashMap<&str, f64>| -> f64 {
        let mut r = d_max;
        for n in nets_from.get(name).into_iter().flatten() {
            for s in &n.sinks {
                r = r.min(sink_required(s, out_required) - net_delay(n, s));
            }
        }
        r
    };
    for &pe in order.iter().rev() {
        let r = source_required(pe, &out_required);
        out_required.insert(pe, r);
    }
    let mut net_slack = BTreeMap::new();
    for n in &packed.nets {
        let mut slack = f64::INFINITY;
        for s in &n.sinks {
            let r = sink_required(s, &out_required);
            required.insert(s.to_string(), r);
            slack = slack.min(r - arrival[&s.to_string()]);
        }
        let src_req = if is_sequential(kinds[n.source.inst.as_str()].kind) {
            source_required(&n.source.inst, &out_required)
        } else {
            out_required[n.source.inst.as_str()]
        };
        required.insert(n.source.to_string(), src_req);
        net_slack.insert(n.name(), if slack.is_finite() { slack.max(0.0) } else { d_max });
    }
    Ok(TimingInfo { d_max, net_slack, arrival, required })
}

/// Pre-route timing: wire delay from the Manhattan distance between the
/// placed source and sink tiles.
pub fn sta_placed(packed: &PackedGraph, placement: &Placement, model: &DelayModel) -> Result<TimingInfo, RouteError> {
    sta_with(packed, model, &|n, s| {
        match (placement.get(&n.source.inst), placement.get(&s.inst)) {
            (Some(a), Some(b)) => model.wire_unit * ((a.0 as f64 - b.0 as f64).abs() + (a.1 as f64 - b.1 as f64).abs()),
            _ => 0.0,
        }
    })
}

/// Post-route timing: wire delay is the sum of node delays along the tree
/// path to each sink, excluding the source port.
pub fn sta_routed(
    packed: &PackedGraph,
    g: &RoutingGraph,
    placement: &Placement,
    routes: &RouteSet,
    model: &DelayModel,
) -> Result<TimingInfo, RouteError> {
    sta_with(packed, model, &|n, s| {
        let Some(tree) = routes.get(&n.name()) else { return 0.0 };
        let Ok(sink) = pin_node(g, placement, s) else { return 0.0 };
        tree.path_to(sink).map_or(0.0, |p| p.iter().skip(1).map(|&id| g.get(id).delay).sum())
    })
}

/// Fabric port node for an application pin.
pub fn pin_node(g: &RoutingGraph, placement: &Placement, p: &PortRef) -> Result<NodeId, RouteError> {
    let (x, y) = placement.get(&p.inst).ok_or_else(|| RouteError::UnmappedPin(p.to_string()))?;
    g.find_port(x, y, &p.port).ok_or_else(|| RouteError::UnmappedPin(p.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteResult {
    pub routes: RouteSet,
    pub timing: TimingInfo,
    pub iterations: usize,
    /// Overused node count after each iteration.
    pub overuse_history: Vec<usize>,
}

struct NetJob {
    name: String,
    source: NodeId,
    sinks: Vec<(NodeId, String)>,
}

/// PathFinder: every iteration rips up and reroutes all nets in decreasing
/// criticality, growing each tree sink by sink with A*, then raises history
/// on overused nodes, grows the present factor and reruns timing.
pub fn route(
    g: &RoutingGraph,
    placement: &Placement,
    packed: &PackedGraph,
    model: &DelayModel,
    params: &RouteParams,
) -> Result<RouteResult, RouteError> {
    let mut jobs = Vec::new();
    for n in &packed.nets {
        let source = pin_node(g, placement, &n.source)?;
        let mut sinks = Vec::new();
        for s in &n.sinks {
            if packed.instance(&s.inst).is_some_and(|i| i.kind.is_placeable()) {
                sinks.push((pin_node(g, placement, s)?, s.to_string()));
            }
        }
        sinks.sort_by(|a, b| manhattan(g, source, a.0).partial_cmp(&manhattan(g, source, b.0)).unwrap().then(a.1.cmp(&b.1)));
        sinks.dedup_by_key(|s| s.0);
        jobs.push(NetJob { name: n.name(), source, sinks });
    }

    let used_tiles: HashSet<(u32, u32)> = placement.sites.values().copied().collect();
    let pin_nodes: HashSet<NodeId> = jobs.iter().flat_map(|j| std::iter::once(j.source).chain(j.sinks.iter().map(|s| s.0))).collect();
    let n = g.node_count();
    let base: Vec<f64> = g
        .nodes()
        .map(|(_, node)| if used_tiles.contains(&(node.x, node.y)) { 1.0 } else { 1.0 + params.unused_tile_penalty })
        .collect();
    let usable: Vec<bool> = g
        .nodes()
        .map(|(id, node)| match node.kind {
            NodeKind::Register { .. } => params.use_registers,
            NodeKind::Port { .. } => pin_nodes.contains(&id),
            _ => true,
        })
        .collect();

    // Every sink must be reachable on an empty fabric.
    for j in &jobs {
        for (s, label) in &j.sinks {
            astar_multi(g, &[j.source], *s, &|id| base[id.index()], 0.0, &|id| usable[id.index()])
                .map_err(|_| RouteError::UnroutableSink { net: j.name.clone(), sink: label.clone() })?;
        }
    }

    let mut timing = sta_placed(packed, placement, model)?;
    let mut history = vec![0.0f64; n];
    let mut occ = vec![0u32; n];
    let mut trees: BTreeMap<String, RouteTree> = BTreeMap::new();
    let mut pres_fac = params.present_factor;
    let mut overuse_history = Vec::new();
    for iter in 1..=params.max_iterations {
        let mut order: Vec<usize> = (0..jobs.len()).collect();
        let crit: Vec<f64> = jobs.iter().map(|j| timing.criticality(&j.name, params.max_criticality)).collect();
        order.sort_by(|&a, &b| crit[b].partial_cmp(&crit[a]).unwrap().then(jobs[a].name.cmp(&jobs[b].name)));
        for &ji in &order {
            let job = &jobs[ji];
            if let Some(old) = trees.remove(&job.name) {
                for id in old.nodes() {
                    occ[id.index()] -= 1;
                }
            }
            let c = crit[ji].powf(params.criticality_exponent);
            let cost = |id: NodeId| {
                let i = id.index();
                edge_cost(g.get(id).delay, c, history[i], pres_fac * occ[i] as f64, base[i])
            };
            let h = 1.0 - c;
            let mut tree_nodes = vec![job.source];
            let mut branches = Vec::new();
            for (sink, _) in &job.sinks {
                if tree_nodes.contains(sink) {
                    continue;
                }
                let (path, _) = astar_multi(g, &tree_nodes, *sink, &cost, h, &|id| usable[id.index()])?;
                tree_nodes.extend(path.iter().skip(1).copied());
                branches.push(path);
            }
            let tree = RouteTree { source: job.source, sinks: job.sinks.iter().map(|s| s.0).collect(), branches };
            for id in tree.nodes() {
                occ[id.index()] += 1;
            }
            trees.insert(job.name.clone(), tree);
        }
        let over: Vec<usize> = (0..n).filter(|&i| occ[i] > 1).collect();
        overuse_history.push(over.len());
        debug!("route iteration {iter}: {} overused nodes", over.len());
        if over.is_empty() {
            let timing = sta_routed(packed, g, placement, &trees, model)?;
            return Ok(RouteResult { routes: trees, timing, iterations: iter, overuse_history });
        }
        for i in over {
            history[i] += params.history_increment;
        }
        pres_fac *= params.present_growth;
        timing = sta_routed(packed, g, placement, &trees, model)?;
    }
    Err(RouteError::RoutingFailed {
        iterations: params.max_iterations,
        remaining_overuse: *overuse_history.last().unwrap_or(&0),
    })
}

/// Selected input index per mux node (fan-in of two or more) used by any
/// tree.
pub fn selection_map(g: &RoutingGraph, routes: &RouteSet) -> BTreeMap<NodeId, u32> {
    let mut out = BTreeMap::new();
    for t in routes.values() {
        for (a, b) in t.edges() {
            let preds = g.preds(b);
            if preds.len() >= 2 {
                out.insert(b, preds.iter().position(|&p| p == a).unwrap() as u32);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{create_uniform_interconnect, Topology};
    use crate::ir::{Io, IrNode, Side};
    use crate::pack::{parse_app, AppGraph, AppInstance};

    #[test]
    fn edge_cost_endpoints() {
        assert_eq!(edge_cost(3.0, 1.0, 5.0, 5.0, 1.0), 3.0);
        assert_eq!(edge_cost(3.0, 0.0, 0.0, 0.0, 1.25), 1.25);
        assert!(edge_cost(3.0, 0.5, 0.0, 2.0, 1.0) > edge_cost(3.0, 0.5, 0.0, 1.0, 1.0));
    }

    #[test]
    fn unreachable_sink() {
        let mut g = RoutingGraph::new(2, 1);
        g.add_layer(16, 1);
        let a = g.add_node(IrNode::switch_box(0, 0, Side::East, 0, Io::Outgoing, 16)).unwrap();
        let b = g.add_node(IrNode::switch_box(1, 0, Side::West, 0, Io::Incoming, 16)).unwrap();
        assert!(matches!(astar(&g, a, b, &|_| 1.0, 0.0), Err(RouteError::Unreachable { .. })));
        g.add_edge(a, b).unwrap();
        assert_eq!(astar(&g, a, b, &|_| 1.0, 1.0).unwrap(), (vec![a, b], 1.0));
    }

    #[test]
    fn sta_single_pe() {
        let a = parse_app("inst i IO\ninst p PE\ninst o IO\nnet i.out0 -> p.in0\nnet p.out0 -> o.in0\n").unwrap();
        let t = sta_with(&a, &DelayModel::default(), &|_, _| 0.0).unwrap();
        assert_eq!(t.d_max, 2.0);
        assert_eq!(t.net_slack["p.out0"], 0.0);
        assert_eq!(t.criticality("p.out0", 0.99), 0.99);
    }

    #[test]
    fn sta_detects_loops() {
        let a = parse_app("inst p PE\ninst q PE\nnet p.out0 -> q.in0\nnet q.out0 -> p.in0\n").unwrap();
        assert!(matches!(sta_with(&a, &DelayModel::default(), &|_, _| 1.0), Err(RouteError::CombinationalLoop(_))));
        let mut r = a.clone();
        r.instances[0].input_regs.insert("in0".into(), "r".into());
        assert!(sta_with(&r, &DelayModel::default(), &|_, _| 1.0).is_ok());
    }

    #[test]
    fn routes_small_app() {
        let spec = ArchSpec::uniform(4, 4, 3, Topology::Wilton, 0.0);
        let g = create_uniform_interconnect(&spec).unwrap();
        let mut a = AppGraph::default();
        a.add(AppInstance::new("i", InstKind::Io));
        a.add(AppInstance::new("p", InstKind::Pe));
        a.add(AppInstance::new("o", InstKind::Io));
        a.connect(PortRef::new("i", "out0"), vec![PortRef::new("p", "in0")]);
        a.connect(PortRef::new("p", "out0"), vec![PortRef::new("o", "in0")]);
        let pl = Placement {
            sites: [("i", (0, 1)), ("p", (1, 1)), ("o", (3, 2))].into_iter().map(|(n, s)| (n.to_string(), s)).collect(),
            legal: true,
        };
        let r = route(&g, &pl, &a, &DelayModel::from_arch(&spec), &RouteParams::default()).unwrap();
        assert_eq!(r.iterations, 1);
        for t in r.routes.values() {
            t.check(&g).unwrap();
        }
        assert!(r.timing.d_max >= 2.0 + 1.0 + 3.0);
        assert_eq!(parse_routes(&format_routes(&r.routes)).unwrap(), r.routes);
    }
}
