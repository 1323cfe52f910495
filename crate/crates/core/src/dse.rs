//! Pack/place/route driver, bundled benchmarks, synthetic netlists and the
//! design-space sweep with CSV output.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{create_uniform_interconnect, ArchError, ArchSpec, PortConnPolicy, Topology};
use crate::ir::RoutingGraph;
use crate::pack::{pack, parse_app, AppGraph, AppInstance, InstKind, PackError, PackedGraph, PortRef};
use crate::place::{alpha_sweep, global_place, legalize, AlphaRun, PlaceError, PlaceParams, Placement, SiteGrid};
use crate::route::{route, DelayModel, RouteError, RouteParams, RouteResult};
use crate::rtl::{lower_ready_valid, lower_static, AreaMetrics, FifoMode, RtlError, StructNetlist};

/// Bundled applications as `(name, netlist text)`.
pub const BENCHMARKS: [(&str, &str); 5] = [
    ("butterfly", include_str!("../benchmarks/butterfly.app")),
    ("fanout", include_str!("../benchmarks/fanout.app")),
    ("pipeline", include_str!("../benchmarks/pipeline.app")),
    ("stencil", include_str!("../benchmarks/stencil.app")),
    ("tree", include_str!("../benchmarks/tree.app")),
];

pub fn benchmark(name: &str) -> Option<AppGraph> {
    BENCHMARKS.iter().find(|(n, _)| *n == name).map(|(_, t)| parse_app(t).expect("bundled benchmark parses"))
}

#[derive(Debug, Error)]
pub enum PnrError {
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error(transparent)]
    Place(#[from] PlaceError),
    #[error(transparent)]
    Route(#[from] RouteError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnrParams {
    pub place: PlaceParams,
    pub route: RouteParams,
    /// Overlap weights tried in detailed placement; the best post-route
    /// critical path wins.
    pub alphas: Vec<f64>,
}

impl Default for PnrParams {
    fn default() -> Self {
        PnrParams { place: PlaceParams::default(), route: RouteParams::default(), alphas: vec![1.0, 2.0, 5.0, 10.0, 20.0] }
    }
}

impl PnrParams {
    pub fn with_seed(seed: u64) -> Self {
        let mut p = PnrParams::default();
        p.place.seed = seed;
        p.route.seed = seed;
        p
    }
}

#[derive(Debug, Clone)]
pub struct PnrResult {
    pub packed: PackedGraph,
    pub placement: Placement,
    pub routing: RouteResult,
    pub alpha_runs: Vec<AlphaRun>,
    pub critical_path: f64,
}

/// Packs, places (global, legalize, detailed with an alpha sweep) and
/// routes `app` on `g`.
pub fn run_pnr(spec: &ArchSpec, g: &RoutingGraph, app: &AppGraph, params: &PnrParams) -> Result<PnrResult, PnrError> {
    let packed = pack(app)?;
    let grid = SiteGrid::from_fabric(spec, g);
    let cont = global_place::<f64>(&packed, &grid, &params.place);
    let legal = legalize(&cont, &packed, &grid)?;
    let model = DelayModel::from_arch(spec);
    let route_fn = |pl: &Placement| route(g, pl, &packed, &model, &params.route).ok().map(|r| r.timing.d_max);
    let (placement, alpha_runs) = match alpha_sweep(&legal, &packed, &grid, &params.place, &params.alphas, route_fn) {
        Ok((pl, _, runs)) => (pl, runs),
        Err(PlaceError::AllFailed) => {
            // Surface the router's own error for the first alpha.
            let p = PlaceParams { alpha: params.alphas.first().copied().unwrap_or(1.0), ..params.place };
            let (pl, _) = crate::place::detailed_place::<f64>(&legal, &packed, &grid, &p)?;
            route(g, &pl, &packed, &model, &params.route)?;
            return Err(PlaceError::AllFailed.into());
        }
        Err(e) => return Err(e.into()),
    };
    let routing = route(g, &placement, &packed, &model, &params.route)?;
    let critical_path = routing.timing.d_max;
    Ok(PnrResult { packed, placement, routing, alpha_runs, critical_path })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub pes: usize,
    pub inputs: usize,
    pub outputs: usize,
    /// Probability of an extra fan-out sink per net.
    pub fanout_prob: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams { pes: 16, inputs: 4, outputs: 2, fanout_prob: 0.35 }
    }
}

/// Random acyclic dataflow netlist: inputs feed a layered PE graph whose
/// last PEs drive the outputs.
pub fn synthetic_app(seed: u64, p: &SyntheticParams) -> AppGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = AppGraph::default();
    let mut free_inputs: Vec<PortRef> = Vec::new();
    for i in 0..p.pes {
        g.add(AppInstance::new(format!("p{i}"), InstKind::Pe));
        for port in InstKind::Pe.inputs() {
            free_inputs.push(PortRef::new(format!("p{i}"), *port));
        }
    }
    for o in 0..p.outputs {
        g.add(AppInstance::new(format!("o{o}"), InstKind::Io));
    }
    let mut taken = std::collections::HashSet::new();
    let pick = |rng: &mut ChaCha8Rng, lo: usize, taken: &mut std::collections::HashSet<PortRef>| -> Option<PortRef> {
        let cands: Vec<&PortRef> = free_inputs
            .iter()
            .filter(|r| r.inst[1..].parse::<usize>().unwrap() >= lo && !taken.contains(*r))
            .collect();
        if cands.is_empty() {
            return None;
        }
        let r = cands[rng.gen_range(0..cands.len())].clone();
        taken.insert(r.clone());
        Some(r)
    };
    for i in 0..p.inputs {
        g.add(AppInstance::new(format!("i{i}"), InstKind::Io));
        let lo = rng.gen_range(0..p.pes.max(1) / 2 + 1);
        let mut sinks: Vec<PortRef> = pick(&mut rng, lo, &mut taken).into_iter().collect();
        while rng.gen_bool(p.fanout_prob) {
            match pick(&mut rng, lo, &mut taken) {
                Some(s) => sinks.push(s),
                None => break,
            }
        }
        if !sinks.is_empty() {
            g.connect(PortRef::new(format!("i{i}"), "out0"), sinks);
        }
    }
    for i in 0..p.pes {
        let mut sinks = Vec::new();
        let tail = p.pes - i <= p.outputs;
        if tail {
            sinks.push(PortRef::new(format!("o{}", p.pes - 1 - i), "in0"));
        } else if let Some(s) = pick(&mut rng, i + 1, &mut taken) {
            sinks.push(s);
            while rng.gen_bool(p.fanout_prob) {
                match pick(&mut rng, i + 1, &mut taken) {
                    Some(s) => sinks.push(s),
                    None => break,
                }
            }
        }
        if !sinks.is_empty() {
            g.connect(PortRef::new(format!("p{i}"), "out0"), sinks);
        }
    }
    g.canonicalize();
    g
}

/// Fabric whose connection boxes tap only track 0 while core outputs drive
/// only track 1, so every route needs a track change that only Wilton
/// switch boxes provide.
pub fn crafted_track_change(topology: Topology) -> ArchSpec {
    let mut spec = ArchSpec::uniform(4, 4, 2, topology, 0.0);
    spec.port_policy.cb_tracks = Some(vec![0]);
    spec.port_policy.sb_out_tracks = Some(vec![1]);
    spec
}

pub fn crafted_track_change_app() -> AppGraph {
    parse_app("inst a IO\ninst p PE\ninst b IO\nnet a.out0 -> p.in0\nnet p.out0 -> b.in0\n").unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FifoKind {
    None,
    Split,
    Full2,
}

impl FifoKind {
    pub fn name(self) -> &'static str {
        match self {
            FifoKind::None => "none",
            FifoKind::Split => "split",
            FifoKind::Full2 => "full2",
        }
    }

    pub fn lower(self, g: &RoutingGraph) -> Result<StructNetlist, RtlError> {
        match self {
            FifoKind::None => lower_static(g),
            FifoKind::Split => lower_ready_valid(g, FifoMode::split()).map(|r| r.0),
            FifoKind::Full2 => lower_ready_valid(g, FifoMode::Full2).map(|r| r.0),
        }
    }
}

impl FromStr for FifoKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(FifoKind::None),
            "split" => Ok(FifoKind::Split),
            "full2" => Ok(FifoKind::Full2),
            _ => Err(format!("unknown fifo mode `{s}`")),
        }
    }
}

impl fmt::Display for FifoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture knobs of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Knobs {
    pub width: u32,
    pub height: u32,
    pub topology: Topology,
    pub tracks: u32,
    pub sb_out_sides: usize,
    pub cb_sides: usize,
    pub fifo: FifoKind,
    pub reg_density: f64,
}

impl Knobs {
    pub fn spec(&self) -> ArchSpec {
        let mut s = ArchSpec::uniform(self.width, self.height, self.tracks, self.topology, self.reg_density);
        s.port_policy = PortConnPolicy {
            cb_sides: PortConnPolicy::sweep_sides(self.cb_sides),
            sb_out_sides: PortConnPolicy::sweep_sides(self.sb_out_sides),
            ..PortConnPolicy::default()
        };
        s
    }
}

/// Cartesian sweep description. Text form: one `key = v1, v2, ...` per
/// line; unspecified keys keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct DseGrid {
    pub width: u32,
    pub height: u32,
    pub topologies: Vec<Topology>,
    pub tracks: Vec<u32>,
    pub sb_out_sides: Vec<usize>,
    pub cb_sides: Vec<usize>,
    pub fifo: Vec<FifoKind>,
    pub reg_density: Vec<f64>,
    pub benchmarks: Vec<String>,
    pub seeds: Vec<u64>,
    pub alphas: Vec<f64>,
}

impl Default for DseGrid {
    fn default() -> Self {
        DseGrid {
            width: 8,
            height: 8,
            topologies: vec![Topology::Wilton],
            tracks: vec![5],
            sb_out_sides: vec![4],
            cb_sides: vec![4],
            fifo: vec![FifoKind::None],
            reg_density: vec![0.0],
            benchmarks: BENCHMARKS.iter().map(|b| b.0.to_string()).collect(),
            seeds: vec![0],
            alphas: PnrParams::default().alphas,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("sweep spec line {line}: {message}")]
pub struct DseSpecError {
    pub line: usize,
    pub message: String,
}

impl DseGrid {
    pub fn parse(text: &str) -> Result<DseGrid, DseSpecError> {
        fn list<T: FromStr>(v: &str, line: usize) -> Result<Vec<T>, DseSpecError> {
            v.split(',')
                .map(|s| s.trim().parse::<T>().map_err(|_| DseSpecError { line, message: format!("bad value `{}`", s.trim()) }))
                .collect()
        }
        let mut g = DseGrid::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| DseSpecError { line, message: format!("expected `key = values`, got `{content}`") })?;
            let v = v.trim();
            match k.trim() {
                "width" => g.width = v.parse().map_err(|_| DseSpecError { line, message: format!("bad width `{v}`") })?,
                "height" => g.height = v.parse().map_err(|_| DseSpecError { line, message: format!("bad height `{v}`") })?,
                "topology" => {
                    g.topologies = v
                        .split(',')
                        .map(|s| match s.trim() {
                            "wilton" => Ok(Topology::Wilton),
                            "disjoint" => Ok(Topology::Disjoint),
                            o => Err(DseSpecError { line, message: format!("unknown topology `{o}`") }),
                        })
                        .collect::<Result<_, _>>()?
                }
                "tracks" => g.tracks = list(v, line)?,
                "sb_out_sides" => g.sb_out_sides = list(v, line)?,
                "cb_sides" => g.cb_sides = list(v, line)?,
                "fifo" => g.fifo = list(v, line)?,
                "reg_density" => g.reg_density = list(v, line)?,
                "benchmarks" => g.benchmarks = list(v, line)?,
                "seeds" => g.seeds = list(v, line)?,
                "alphas" => g.alphas = list(v, line)?,
                other => return Err(DseSpecError { line, message: format!("unknown key `{other}`") }),
            }
        }
        for b in &g.benchmarks {
            if benchmark(b).is_none() {
                return Err(DseSpecError { line: 0, message: format!("unknown benchmark `{b}`") });
            }
        }
        if g.cells().is_empty() {
            return Err(DseSpecError { line: 0, message: "sweep grid is empty".into() });
        }
        Ok(g)
    }

    pub fn cells(&self) -> Vec<Knobs> {
        let mut out = Vec::new();
        for &topology in &self.topologies {
            for &tracks in &self.tracks {
                for &sb_out_sides in &self.sb_out_sides {
                    for &cb_sides in &self.cb_sides {
                        for &fifo in &self.fifo {
                            for &reg_density in &self.reg_density {
                                out.push(Knobs {
                                    width: self.width,
                                    height: self.height,
                                    topology,
                                    tracks,
                                    sb_out_sides,
                                    cb_sides,
                                    fifo,
                                    reg_density,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// One CSV row. Metrics are blank when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsePoint {
    pub schema: u32,
    pub topology: String,
    pub tracks: u32,
    pub sb_out_sides: usize,
    pub cb_sides: usize,
    pub fifo: FifoKind,
    pub reg_density: f64,
    pub benchmark: String,
    pub seed: u64,
    pub success: u8,
    pub critical_path: Option<f64>,
    pub route_iterations: Option<usize>,
    pub sb_area: u64,
    pub cb_area: u64,
    pub mux_inputs: u64,
    pub config_bits: u64,
    pub storage_bits: u64,
    pub gate_estimate: u64,
    pub pnr_ms: Option<u64>,
}

impl DsePoint {
    fn key(&self) -> (String, u32, std::cmp::Reverse<usize>, std::cmp::Reverse<usize>, FifoKind, u64, String, u64) {
        (
            self.topology.clone(),
            self.tracks,
            std::cmp::Reverse(self.sb_out_sides),
            std::cmp::Reverse(self.cb_sides),
            self.fifo,
            self.reg_density.to_bits(),
            self.benchmark.clone(),
            self.seed,
        )
    }
}

/// Area census of one architecture cell.
pub fn cell_area(k: &Knobs) -> Result<AreaMetrics, String> {
    let g = create_uniform_interconnect(&k.spec()).map_err(|e: ArchError| e.to_string())?;
    Ok(k.fifo.lower(&g).map_err(|e| e.to_string())?.area_proxy())
}

/// Runs every cell x benchmark x seed on a pool of `jobs` threads (0 means
/// the rayon default). Failures become rows with `success = 0`.
pub fn run_dse(grid: &DseGrid, jobs: usize) -> Vec<DsePoint> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    pool.install(|| {
        let cells = grid.cells();
        let fabrics: Vec<Option<(ArchSpec, RoutingGraph, AreaMetrics)>> = cells
            .par_iter()
            .map(|k| {
                let spec = k.spec();
                let g = create_uniform_interconnect(&spec).ok()?;
                let area = k.fifo.lower(&g).ok()?.area_proxy();
                Some((spec, g, area))
            })
            .collect();
        let mut jobs_list = Vec::new();
        for (ci, _) in cells.iter().enumerate() {
            for b in &grid.benchmarks {
                for &seed in &grid.seeds {
                    jobs_list.push((ci, b.clone(), seed));
                }
            }
        }
        let mut rows: Vec<DsePoint> = jobs_list
            .par_iter()
            .map(|(ci, bench, seed)| {
                let k = &cells[*ci];
                let area = fabrics[*ci].as_ref().map(|f| f.2).unwrap_or_default();
                let mut row = DsePoint {
                    schema: CSV_SCHEMA_VERSION,
                    topology: k.topology.name().to_string(),
                    tracks: k.tracks,
                    sb_out_sides: k.sb_out_sides,
                    cb_sides: k.cb_sides,
                    fifo: k.fifo,
                    reg_density: k.reg_density,
                    benchmark: bench.clone(),
                    seed: *seed,
                    success: 0,
                    critical_path: None,
                    route_iterations: None,
                    sb_area: area.sb_area,
                    cb_area: area.cb_area,
                    mux_inputs: area.mux_input_count,
                    config_bits: area.config_bits,
                    storage_bits: area.storage_bits,
                    gate_estimate: area.gate_count_estimate,
                    pnr_ms: None,
                };
                let Some((spec, g, _)) = &fabrics[*ci] else { return row };
                let app = benchmark(bench).expect("benchmark validated");
                let mut params = PnrParams::with_seed(*seed);
                params.alphas = grid.alphas.clone();
                let t = Instant::now();
                if let Ok(r) = run_pnr(spec, g, &app, &params) {
                    row.success = 1;
                    row.critical_path = Some(r.critical_path);
                    row.route_iterations = Some(r.routing.iterations);
                    row.pnr_ms = Some(t.elapsed().as_millis() as u64);
                }
                row
            })
            .collect();
        rows.sort_by(|a, b| a.key().partial_cmp(&b.key()).unwrap());
        rows
    })
}

pub fn write_csv(rows: &[DsePoint]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        return Ok(String::new());
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

pub fn read_csv(text: &str) -> Result<Vec<DsePoint>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

/// Per-cell aggregate over benchmarks and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub topology: String,
    pub tracks: u32,
    pub sb_out_sides: usize,
    pub cb_sides: usize,
    pub fifo: FifoKind,
    pub reg_density: f64,
    pub runs: usize,
    pub success_rate: f64,
    pub median_critical_path: Option<f64>,
    pub sb_area: u64,
    pub cb_area: u64,
    pub storage_bits: u64,
}

pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Groups rows by architecture knobs, in row order.
pub fn summarize(rows: &[DsePoint]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<usize, Vec<&DsePoint>> = BTreeMap::new();
    let mut index: Vec<(String, u32, usize, usize, FifoKind, u64)> = Vec::new();
    for r in rows {
        let k = (r.topology.clone(), r.tracks, r.sb_out_sides, r.cb_sides, r.fifo, r.reg_density.to_bits());
        let i = index.iter().position(|x| *x == k).unwrap_or_else(|| {
            index.push(k);
            index.len() - 1
        });
        groups.entry(i).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let mut cps: Vec<f64> = g.iter().filter_map(|r| r.critical_path).collect();
            let first = g[0];
            CellSummary {
                topology: first.topology.clone(),
                tracks: first.tracks,
                sb_out_sides: first.sb_out_sides,
                cb_sides: first.cb_sides,
                fifo: first.fifo,
                reg_density: first.reg_density,
                runs: g.len(),
                success_rate: g.iter().filter(|r| r.success == 1).count() as f64 / g.len() as f64,
                median_critical_path: median(&mut cps),
                sb_area: first.sb_area,
                cb_area: first.cb_area,
                storage_bits: first.storage_bits,
            }
        })
        .collect()
}

pub fn format_summary(s: &[CellSummary]) -> String {
    let mut out = String::from("topology tracks sb_out cb fifo reg_density runs success median_cp sb_area cb_area storage_bits\n");
    for c in s {
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {:.2} {} {} {} {}\n",
            c.topology,
            c.tracks,
            c.sb_out_sides,
            c.cb_sides,
            c.fifo,
            c.reg_density,
            c.runs,
            c.success_rate,
            c.median_critical_path.map_or("-".to_string(), |v| format!("{v}")),
            c.sb_area,
            c.cb_area,
            c.storage_bits
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmarks_parse_and_pack() {
        let spec = ArchSpec::default();
        let grid = SiteGrid::from_arch(&spec);
        for (name, _) in BENCHMARKS {
            let p = pack(&benchmark(name).unwrap()).unwrap();
            for kind in [InstKind::Pe, InstKind::Mem, InstKind::Io] {
                let need = p.instances.iter().filter(|i| SiteGrid::site_kind(i.kind) == SiteGrid::site_kind(kind) && i.kind.is_placeable()).count();
                assert!(need <= grid.sites(SiteGrid::site_kind(kind)).len(), "{name} {kind:?}");
            }
        }
    }

    #[test]
    fn synthetic_is_valid_and_seeded() {
        let p = SyntheticParams::default();
        let a = synthetic_app(3, &p);
        a.validate().unwrap();
        assert_eq!(a, synthetic_app(3, &p));
        assert_ne!(a, synthetic_app(4, &p));
        assert_eq!(a.count(InstKind::Pe), 16);
    }

    #[test]
    fn grid_parse() {
        let g = DseGrid::parse("tracks = 4, 6\ntopology = wilton, disjoint\nbenchmarks = tree\nfifo = none,split\n").unwrap();
        assert_eq!(g.cells().len(), 8);
        assert!(DseGrid::parse("tracks = x").is_err());
        assert!(DseGrid::parse("bogus = 1").is_err());
        assert!(DseGrid::parse("tracks =").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = DseGrid {
            width: 6,
            height: 6,
            benchmarks: vec!["pipeline".into()],
            alphas: vec![1.0],
            tracks: vec![3],
            ..DseGrid::default()
        };
        let rows = run_dse(&g, 2);
        assert_eq!(rows.len(), 1);
        let text = write_csv(&rows).unwrap();
        assert!(text.starts_with("schema,topology,tracks"));
        assert_eq!(read_csv(&text).unwrap(), rows);
        assert_eq!(summarize(&rows).len(), 1);
    }

    #[test]
    fn crafted_gap() {
        let app = crafted_track_change_app();
        let p = PnrParams { alphas: vec![1.0], ..PnrParams::default() };
        let w = crafted_track_change(Topology::Wilton);
        let d = crafted_track_change(Topology::Disjoint);
        assert!(run_pnr(&w, &create_uniform_interconnect(&w).unwrap(), &app, &p).is_ok());
        let e = run_pnr(&d, &create_uniform_interconnect(&d).unwrap(), &app, &p).unwrap_err();
        assert!(matches!(e, PnrError::Route(_)), "{e}");
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
