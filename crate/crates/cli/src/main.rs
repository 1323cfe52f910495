//! `cgra`: generator, place-and-route and design-space exploration driver.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cgra_core::arch::{format_arch_spec, parse_arch_spec, ArchError};
use cgra_core::bitstream::{configure, exhaustive_sweep, functional_sim, generate_bitstream, Bitstream, CoreSettings};
use cgra_core::dse::{format_summary, read_csv, run_dse, run_pnr, summarize, write_csv, DseGrid, FifoKind, PnrError, PnrParams};
use cgra_core::ir::serialize_graph;
use cgra_core::pack::{pack, parse_app, AppGraph, PackError};
use cgra_core::place::{format_placement, parse_placement, PlaceError, Placement};
use cgra_core::route::{format_routes, parse_routes, pin_node, sta_routed, DelayModel, RouteError, TimingInfo};
use cgra_core::rtl::{emit_rtl, format_config_map, parse_config_map, parse_rtl, verify_structure, ConfigField, StructNetlist};
use cgra_core::{create_uniform_interconnect, ArchSpec, RoutingGraph};
use clap::{Parser, Subcommand};
use log::info;

/// Log verbosity is read from this variable (`error`..`trace`).
const LOG_ENV: &str = "CGRA_LOG";

#[derive(Parser, Debug)]
#[command(name = "cgra", version, about = "CGRA interconnect generator and place-and-route driver")]
struct Cli {
    /// Seed for placement and routing.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per CPU).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Build the interconnect from an architecture file and emit graph, RTL and config map.
    Gen {
        spec: PathBuf,
        /// Register style: none, split or full2.
        #[arg(long, default_value = "none")]
        fifo: FifoKind,
    },
    /// Pack, place and route an application.
    Pnr {
        spec: PathBuf,
        app: PathBuf,
        /// Comma-separated alpha values for the detailed-placement sweep.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Router iteration limit.
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Overlap weight in the detailed-placement cost.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Encode a placed and routed design into a bitstream.
    Bitstream {
        spec: PathBuf,
        app: PathBuf,
        placement: PathBuf,
        routes: PathBuf,
        /// Only write non-zero words.
        #[arg(long)]
        sparse: bool,
    },
    /// Configure the fabric from a bitstream and push one token through every net.
    Sim { spec: PathBuf, app: PathBuf, placement: PathBuf, bitstream: PathBuf },
    /// Check an RTL file (or a fresh lowering) against the graph.
    Verify {
        spec: PathBuf,
        /// RTL file to check; lowered from the spec when absent.
        #[arg(long)]
        rtl: Option<PathBuf>,
        /// Config map used to encode in the connection sweep; defaults to the RTL's own.
        #[arg(long)]
        config_map: Option<PathBuf>,
        /// Also exercise every graph edge through the config map.
        #[arg(long)]
        sweep: bool,
    },
    /// Run a design-space sweep and write CSV plus a median summary.
    Dse { grid: PathBuf },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Display) -> Self {
        Failure { code, message: message.to_string() }
    }
}

type Result<T> = std::result::Result<T, Failure>;

const EXIT_IO: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_MISMATCH: u8 = 4;
const EXIT_CAPACITY: u8 = 5;
const EXIT_ROUTE: u8 = 6;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", p.display())))?;
    info!("wrote {}", p.display());
    Ok(p)
}

fn arch_failure(path: &Path, e: ArchError) -> Failure {
    match e {
        ArchError::Parse { .. } => Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())),
        e => Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())),
    }
}

fn load_fabric(path: &Path) -> Result<(ArchSpec, RoutingGraph)> {
    let spec = parse_arch_spec(&read(path)?).map_err(|e| arch_failure(path, e))?;
    let g = create_uniform_interconnect(&spec).map_err(|e| arch_failure(path, e))?;
    let issues = g.validate();
    if !issues.is_empty() {
        let list: Vec<String> = issues.iter().map(|d| d.to_string()).collect();
        return Err(Failure::new(EXIT_INVALID, list.join("\n")));
    }
    Ok((spec, g))
}

fn load_app(path: &Path) -> Result<AppGraph> {
    parse_app(&read(path)?).map_err(|e| match e {
        PackError::Parse { .. } => Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())),
        e => Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())),
    })
}

fn load_placement(path: &Path) -> Result<Placement> {
    parse_placement(&read(path)?).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn static_map(g: &RoutingGraph) -> Result<Vec<ConfigField>> {
    FifoKind::None.lower(g).map(|n| n.config_map).map_err(|e| Failure::new(EXIT_INVALID, e))
}

fn pnr_failure(e: PnrError) -> Failure {
    match &e {
        PnrError::Pack(PackError::Parse { .. }) => Failure::new(EXIT_PARSE, e),
        PnrError::Pack(_) => Failure::new(EXIT_INVALID, e),
        PnrError::Place(PlaceError::InsufficientCapacity { .. }) => Failure::new(EXIT_CAPACITY, e),
        PnrError::Place(PlaceError::AllFailed) | PnrError::Route(_) => Failure::new(EXIT_ROUTE, format!("routing failed: {e}")),
        PnrError::Place(_) => Failure::new(EXIT_INVALID, e),
    }
}

fn timing_report(t: &TimingInfo, iterations: usize) -> String {
    let mut out = format!("critical_path {}\nroute_iterations {iterations}\n", t.d_max);
    for (net, slack) in &t.net_slack {
        out.push_str(&format!("slack {net} {slack}\n"));
    }
    out
}

fn cmd_gen(cli: &Cli, spec_path: &Path, fifo: FifoKind) -> Result<()> {
    let (spec, g) = load_fabric(spec_path)?;
    let netlist: StructNetlist = fifo.lower(&g).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    write(&cli.out_dir, "fabric.arch", &format_arch_spec(&spec))?;
    write(&cli.out_dir, "fabric.graph", &serialize_graph(&g))?;
    write(&cli.out_dir, "fabric.rtl", &emit_rtl(&netlist))?;
    write(&cli.out_dir, "fabric.cfgmap", &format_config_map(&netlist.config_map))?;
    let area = netlist.area_proxy();
    println!(
        "nodes {} edges {} sb_area {} cb_area {} config_bits {} storage_bits {}",
        g.node_count(),
        g.edge_count(),
        area.sb_area,
        area.cb_area,
        area.config_bits,
        area.storage_bits
    );
    let report = verify_structure(&g, &netlist).map_err(|e| Failure::new(EXIT_MISMATCH, e))?;
    if !report.is_ok() {
        return Err(Failure::new(EXIT_MISMATCH, report));
    }
    println!("verify PASS");
    Ok(())
}

fn cmd_pnr(cli: &Cli, spec_path: &Path, app_path: &Path, alphas: &Option<Vec<f64>>, max_iter: Option<usize>, gamma: Option<f64>) -> Result<()> {
    let (spec, g) = load_fabric(spec_path)?;
    let app = load_app(app_path)?;
    let mut params = PnrParams::with_seed(cli.seed);
    if let Some(a) = alphas {
        if a.is_empty() {
            return Err(Failure::new(EXIT_INVALID, "--alphas needs at least one value"));
        }
        params.alphas = a.clone();
    }
    if let Some(n) = max_iter {
        if n == 0 {
            return Err(Failure::new(EXIT_INVALID, "--max-iterations must be at least 1"));
        }
        params.route.max_iterations = n;
    }
    if let Some(gm) = gamma {
        params.place.gamma = gm;
    }
    let start = Instant::now();
    let r = run_pnr(&spec, &g, &app, &params).map_err(pnr_failure)?;
    write(&cli.out_dir, "design.place", &format_placement(&r.placement))?;
    write(&cli.out_dir, "design.route", &format_routes(&r.routing.routes))?;
    write(&cli.out_dir, "design.timing", &timing_report(&r.routing.timing, r.routing.iterations))?;
    println!(
        "critical_path {} iterations {} nets {} ({:.1?})",
        r.critical_path,
        r.routing.iterations,
        r.routing.routes.len(),
        start.elapsed()
    );
    Ok(())
}

fn cmd_bitstream(cli: &Cli, spec_path: &Path, app_path: &Path, place_path: &Path, route_path: &Path, sparse: bool) -> Result<()> {
    let (spec, g) = load_fabric(spec_path)?;
    let packed = pack(&load_app(app_path)?).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    let placement = load_placement(place_path)?;
    let routes = parse_routes(&read(route_path)?).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", route_path.display())))?;
    for (net, tree) in &routes {
        tree.check(&g).map_err(|e| Failure::new(EXIT_INVALID, format!("route {net}: {e}")))?;
    }
    let map = static_map(&g)?;
    let cores = CoreSettings { packed: &packed, placement: &placement };
    let b = generate_bitstream(&g, &map, &routes, Some(cores), !sparse).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    let t = sta_routed(&packed, &g, &placement, &routes, &DelayModel::from_arch(&spec)).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    write(&cli.out_dir, "design.bs", &b.to_string())?;
    println!("words {} critical_path {}", b.len(), t.d_max);
    Ok(())
}

fn cmd_sim(spec_path: &Path, app_path: &Path, place_path: &Path, bs_path: &Path) -> Result<()> {
    let (_, g) = load_fabric(spec_path)?;
    let packed = pack(&load_app(app_path)?).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    let placement = load_placement(place_path)?;
    let b = Bitstream::parse(&read(bs_path)?).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", bs_path.display())))?;
    let map = static_map(&g)?;
    let fabric = configure(&g, &map, &b).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    let pin = |p| pin_node(&g, &placement, p).map_err(|e: RouteError| Failure::new(EXIT_INVALID, e));

    let mut stimulus = BTreeMap::new();
    let mut expect = Vec::new();
    for (i, net) in packed.nets.iter().enumerate() {
        let token = i as u64 + 1;
        stimulus.insert(pin(&net.source)?, token);
        for s in &net.sinks {
            expect.push((net.name(), s.to_string(), pin(s)?, token));
        }
    }
    let arrivals = functional_sim(&g, &fabric, &stimulus);
    let mut bad = Vec::new();
    for (net, sink, node, token) in &expect {
        match arrivals.get(node) {
            Some(a) if a.token == *token => println!("{net} -> {sink} tick {}", a.tick),
            Some(a) => bad.push(format!("{net} -> {sink}: received token {} from another net", a.token)),
            None => bad.push(format!("{net} -> {sink}: no token arrived")),
        }
    }
    if !bad.is_empty() {
        return Err(Failure::new(EXIT_MISMATCH, bad.join("\n")));
    }
    println!("sim PASS: {} sinks", expect.len());
    Ok(())
}

fn cmd_verify(spec_path: &Path, rtl: &Option<PathBuf>, config_map: &Option<PathBuf>, sweep: bool) -> Result<()> {
    let (_, g) = load_fabric(spec_path)?;
    let netlist = match rtl {
        Some(p) => parse_rtl(&read(p)?).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", p.display())))?,
        None => FifoKind::None.lower(&g).map_err(|e| Failure::new(EXIT_INVALID, e))?,
    };
    let report = verify_structure(&g, &netlist).map_err(|e| Failure::new(EXIT_MISMATCH, e))?;
    if !report.is_ok() {
        return Err(Failure::new(EXIT_MISMATCH, report));
    }
    println!("structure PASS");
    if sweep {
        let sidecar = match config_map {
            Some(p) => parse_config_map(&read(p)?).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", p.display())))?,
            None => netlist.config_map.clone(),
        };
        let r = exhaustive_sweep(&g, &sidecar, &netlist.config_map);
        if !r.passed() {
            let list: Vec<String> = r.failures.iter().map(|f| format!("{} -> {}: {}", f.from, f.to, f.reason)).collect();
            return Err(Failure::new(EXIT_MISMATCH, format!("{} of {} edges failed\n{}", r.failures.len(), r.cases, list.join("\n"))));
        }
        println!("sweep PASS: {} edges", r.cases);
    }
    Ok(())
}

fn cmd_dse(cli: &Cli, grid_path: &Path) -> Result<()> {
    let grid = DseGrid::parse(&read(grid_path)?).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", grid_path.display())))?;
    let rows = run_dse(&grid, cli.jobs);
    let csv = write_csv(&rows).map_err(|e| Failure::new(EXIT_IO, e))?;
    write(&cli.out_dir, "dse.csv", &csv)?;
    let back = read_csv(&csv).map_err(|e| Failure::new(EXIT_IO, e))?;
    let summary = format_summary(&summarize(&back));
    write(&cli.out_dir, "dse_summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Gen { spec, fifo } => cmd_gen(cli, spec, *fifo),
        Cmd::Pnr { spec, app, alphas, max_iterations, gamma } => cmd_pnr(cli, spec, app, alphas, *max_iterations, *gamma),
        Cmd::Bitstream { spec, app, placement, routes, sparse } => cmd_bitstream(cli, spec, app, placement, routes, *sparse),
        Cmd::Sim { spec, app, placement, bitstream } => cmd_sim(spec, app, placement, bitstream),
        Cmd::Verify { spec, rtl, config_map, sweep } => cmd_verify(spec, rtl, config_map, *sweep),
        Cmd::Dse { grid } => cmd_dse(cli, grid),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // Ignore the error if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
