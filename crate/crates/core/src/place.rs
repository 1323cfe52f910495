//! Two-stage placement: smoothed-wirelength global placement by conjugate
//! gradient, legalization onto compatible tiles, and simulated-annealing
//! detailed placement on the pass-through-penalized cost.
//!
//! The numerics are generic over the scalar type; `f64` is the default.

use std::collections::{BTreeMap, HashMap};

use log::{debug, warn};
use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::arch::{ArchSpec, TileKind};
use crate::ir::{NodeKind, RoutingGraph};
use crate::pack::{InstKind, PackedGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlaceError {
    #[error("net pin `{0}` has no placement")]
    UnplacedPin(String),
    #[error("{needed} {kind} instances but only {available} {kind} sites")]
    InsufficientCapacity { kind: &'static str, needed: usize, available: usize },
    #[error("no alpha value produced a routable placement")]
    AllFailed,
    #[error("placement parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn cast<T: Float + FromPrimitive>(v: f64) -> T {
    T::from_f64(v).expect("scalar conversion")
}

/// Tile kind per grid cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteGrid {
    pub width: u32,
    pub height: u32,
    kinds: Vec<TileKind>,
    blocked: Vec<bool>,
}

impl SiteGrid {
    pub fn from_arch(spec: &ArchSpec) -> Self {
        let mut kinds = Vec::with_capacity((spec.width * spec.height) as usize);
        for y in 0..spec.height {
            for x in 0..spec.width {
                kinds.push(spec.tile_kind(x, y));
            }
        }
        let blocked = vec![false; kinds.len()];
        SiteGrid { width: spec.width, height: spec.height, kinds, blocked }
    }

    /// Like [`SiteGrid::from_arch`], but tiles with a core port that has no
    /// connection in `g` (for example a corner whose port sides all face
    /// off the array) offer no site.
    pub fn from_fabric(spec: &ArchSpec, g: &RoutingGraph) -> Self {
        let mut grid = SiteGrid::from_arch(spec);
        for (id, n) in g.nodes() {
            if let NodeKind::Port { name } = &n.kind {
                let input = spec.core_at(n.x, n.y).is_some_and(|c| c.input_width(name).is_some());
                let dead = if input {
                    g.preds(id).iter().all(|&p| g.preds(p).is_empty())
                } else {
                    g.succs(id).iter().all(|&q| g.succs(q).is_empty())
                };
                if dead && n.x < grid.width && n.y < grid.height {
                    grid.blocked[(n.y * grid.width + n.x) as usize] = true;
                }
            }
        }
        grid
    }

    pub fn is_blocked(&self, x: u32, y: u32) -> bool {
        self.blocked[(y * self.width + x) as usize]
    }

    pub fn uniform(width: u32, height: u32, kind: TileKind) -> Self {
        let n = (width * height) as usize;
        SiteGrid { width, height, kinds: vec![kind; n], blocked: vec![false; n] }
    }

    pub fn kind(&self, x: u32, y: u32) -> TileKind {
        self.kinds[(y * self.width + x) as usize]
    }

    /// Tile kind an instance kind must sit on.
    pub fn site_kind(kind: InstKind) -> TileKind {
        match kind {
            InstKind::Mem => TileKind::Mem,
            InstKind::Io => TileKind::Io,
            _ => TileKind::Pe,
        }
    }

    pub fn sites(&self, kind: TileKind) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.kind(x, y) == kind && !self.is_blocked(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn mem_columns(&self) -> Vec<u32> {
        (0..self.width).filter(|&x| (0..self.height).any(|y| self.kind(x, y) == TileKind::Mem)).collect()
    }
}

/// Legal (or snapped) placement: instance name to tile.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Placement {
    pub sites: BTreeMap<String, (u32, u32)>,
    pub legal: bool,
}

impl Placement {
    pub fn get(&self, name: &str) -> Option<(u32, u32)> {
        self.sites.get(name).copied()
    }

    /// Every placeable instance on a distinct compatible in-bounds tile.
    pub fn check_legal(&self, packed: &PackedGraph, grid: &SiteGrid) -> Result<(), String> {
        let mut used = HashMap::new();
        for inst in packed.instances.iter().filter(|i| i.kind.is_placeable()) {
            let (x, y) = self.get(&inst.name).ok_or_else(|| format!("`{}` unplaced", inst.name))?;
            if x >= grid.width || y >= grid.height {
                return Err(format!("`{}` at ({x},{y}) is out of bounds", inst.name));
            }
            if grid.kind(x, y) != SiteGrid::site_kind(inst.kind) || grid.is_blocked(x, y) {
                return Err(format!("`{}` ({}) on a {} tile", inst.name, inst.kind.name(), grid.kind(x, y).name()));
            }
            if let Some(other) = used.insert((x, y), &inst.name) {
                return Err(format!("`{}` and `{other}` share ({x},{y})", inst.name));
            }
        }
        Ok(())
    }
}

pub fn format_placement(p: &Placement) -> String {
    p.sites.iter().map(|(n, (x, y))| format!("place {n} {x} {y}\n")).collect()
}

pub fn parse_placement(text: &str) -> Result<Placement, PlaceError> {
    let mut p = Placement { legal: true, ..Default::default() };
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| PlaceError::Parse { line: i + 1, message };
        let t: Vec<&str> = content.split_whitespace().collect();
        if t.len() != 4 || t[0] != "place" {
            return Err(err(format!("expected `place <inst> <x> <y>`, found `{content}`")));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| err(format!("`{s}` is not a coordinate")));
        p.sites.insert(t[1].to_string(), (num(t[2])?, num(t[3])?));
    }
    Ok(p)
}

/// Exact half-perimeter wirelength of a pin set.
pub fn hpwl(pins: &[(u32, u32)]) -> u32 {
    let Some(&(x0, y0)) = pins.first() else { return 0 };
    let (mut lx, mut hx, mut ly, mut hy) = (x0, x0, y0, y0);
    for &(x, y) in pins {
        lx = lx.min(x);
        hx = hx.max(x);
        ly = ly.min(y);
        hy = hy.max(y);
    }
    (hx - lx) + (hy - ly)
}

/// Smoothed span of one coordinate: `tau ln sum_ij exp((v_i - v_j)/tau) - 2 tau ln n`.
/// Returns the span and its gradient. Zero for coincident pins, and within
/// `2 tau ln n` below the exact span.
pub fn smooth_span<T: Float + FromPrimitive>(v: &[T], tau: T) -> (T, Vec<T>) {
    let n = v.len();
    if n < 2 {
        return (T::zero(), vec![T::zero(); n]);
    }
    let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
    let lo = v.iter().copied().fold(T::infinity(), T::min);
    let p: Vec<T> = v.iter().map(|&x| ((x - hi) / tau).exp()).collect();
    let q: Vec<T> = v.iter().map(|&x| ((lo - x) / tau).exp()).collect();
    let sp = p.iter().copied().fold(T::zero(), |a, b| a + b);
    let sq = q.iter().copied().fold(T::zero(), |a, b| a + b);
    let nn: T = cast(n as f64);
    let two: T = cast(2.0);
    let span = (hi - lo) + tau * (sp.ln() + sq.ln()) - two * tau * nn.ln();
    let grad = p.iter().zip(&q).map(|(&a, &b)| a / sp - b / sq).collect();
    (span.max(T::zero()), grad)
}

/// Smoothing offset inside the L2 root so the gradient exists at zero span.
const L2_EPS: f64 = 1e-9;

/// Differentiable L2 surrogate of HPWL: `sqrt(sx^2 + sy^2)` over smoothed
/// spans. Returns the value and the gradients in x and y.
pub fn smooth_hpwl<T: Float + FromPrimitive>(xs: &[T], ys: &[T], tau: T) -> (T, Vec<T>, Vec<T>) {
    let (sx, gx) = smooth_span(xs, tau);
    let (sy, gy) = smooth_span(ys, tau);
    let eps: T = cast(L2_EPS);
    let r = (sx * sx + sy * sy + eps * eps).sqrt();
    let (ax, ay) = (sx / r, sy / r);
    (r - eps, gx.into_iter().map(|g| g * ax).collect(), gy.into_iter().map(|g| g * ay).collect())
}

/// Eq. 2 net cost: `max(hpwl - gamma * overlap, 0)^alpha`.
pub fn eq2_cost<T: Float>(hpwl: T, overlap: T, gamma: T, alpha: T) -> T {
    (hpwl - gamma * overlap).max(T::zero()).powf(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgParams {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub stages: usize,
    /// Weight of the MEM column potential.
    pub mem_weight: f64,
}

impl Default for CgParams {
    fn default() -> Self {
        CgParams { max_iters: 400, grad_tol: 1e-9, tau_start: 2.0, tau_end: 0.25, stages: 4, mem_weight: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaSchedule {
    /// Initial temperature; `None` calibrates for about 80% acceptance.
    pub t0: Option<f64>,
    pub decay: f64,
    pub moves_per_instance: usize,
    pub min_acceptance: f64,
    /// Annealing stops once the temperature drops below this fraction of
    /// the mean cost per net; a greedy quench follows.
    pub exit_ratio: f64,
    pub max_sweeps: usize,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule {
            t0: None,
            decay: 0.95,
            moves_per_instance: 10,
            min_acceptance: 0.01,
            exit_ratio: 0.005,
            max_sweeps: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaceParams {
    pub gamma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub sa: SaSchedule,
    pub cg: CgParams,
}

impl Default for PlaceParams {
    fn default() -> Self {
        PlaceParams { gamma: 1.0, alpha: 1.0, seed: 0, sa: SaSchedule::default(), cg: CgParams::default() }
    }
}

/// Instance and net tables shared by the placement stages.
#[derive(Debug, Clone)]
pub struct PlaceNetlist {
    pub names: Vec<String>,
    pub kinds: Vec<InstKind>,
    pub fixed: Vec<Option<(u32, u32)>>,
    /// Distinct instance indices per net.
    pub nets: Vec<Vec<usize>>,
    pub net_names: Vec<String>,
    pub nets_of: Vec<Vec<usize>>,
}

impl PlaceNetlist {
    pub fn new(packed: &PackedGraph) -> Self {
        let placeable: Vec<_> = packed.instances.iter().filter(|i| i.kind.is_placeable()).collect();
        let index: HashMap<&str, usize> = placeable.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
        let mut nets = Vec::new();
        let mut net_names = Vec::new();
        for n in &packed.nets {
            let mut pins: Vec<usize> = std::iter::once(&n.source.inst)
                .chain(n.sinks.iter().map(|s| &s.inst))
                .filter_map(|i| index.get(i.as_str()).copied())
                .collect();
            pins.sort_unstable();
            pins.dedup();
            if pins.len() >= 2 {
                nets.push(pins);
                net_names.push(n.name());
            }
        }
        let mut nets_of = vec![Vec::new(); placeable.len()];
        for (ni, pins) in nets.iter().enumerate() {
            for &p in pins {
                nets_of[p].push(ni);
            }
        }
        PlaceNetlist {
            names: placeable.iter().map(|p| p.name.clone()).collect(),
            kinds: placeable.iter().map(|p| p.kind).collect(),
            fixed: placeable.iter().map(|p| p.fixed_site()).collect(),
            nets,
            net_names,
            nets_of,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Continuous placement with the objective value after each accepted CG
/// step, one list per smoothing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPlacement<T> {
    pub positions: BTreeMap<String, (T, T)>,
    pub history: Vec<Vec<T>>,
}

/// IO sites in perimeter order starting at the top-left, clockwise.
fn perimeter_order(grid: &SiteGrid, sites: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let (w, h) = (grid.width as i64, grid.height as i64);
    let key = |&(x, y): &(u32, u32)| {
        let (x, y) = (x as i64, y as i64);
        if y == 0 {
            x
        } else if x == w - 1 {
            w + y
        } else if y == h - 1 {
            w + h + (w - 1 - x)
        } else {
            2 * w + h + (h - 1 - y)
        }
    };
    let mut s = sites.to_vec();
    s.sort_by_key(key);
    s
}

/// Anchor sites for IO instances: fixed attributes first, the rest spread
/// evenly around the free IO sites in name order.
fn anchor_sites(nl: &PlaceNetlist, grid: &SiteGrid) -> Vec<Option<(u32, u32)>> {
    let mut out = nl.fixed.clone();
    let taken: Vec<(u32, u32)> = out.iter().flatten().copied().collect();
    let free: Vec<(u32, u32)> =
        perimeter_order(grid, &grid.sites(TileKind::Io)).into_iter().filter(|s| !taken.contains(s)).collect();
    let mut ios: Vec<usize> = (0..nl.len()).filter(|&i| nl.kinds[i] == InstKind::Io && out[i].is_none()).collect();
    ios.sort_by(|&a, &b| nl.names[a].cmp(&nl.names[b]));
    if !free.is_empty() {
        for (k, &i) in ios.iter().enumerate() {
            out[i] = Some(free[k * free.len() / ios.len().max(1) % free.len()]);
        }
    }
    out
}

struct Objective<'a, T> {
    nl: &'a PlaceNetlist,
    movable: Vec<usize>,
    slot: Vec<Option<usize>>,
    fixed_pos: Vec<(T, T)>,
    mem_cols: Vec<T>,
    mem_weight: T,
    center: Option<(T, T)>,
    bounds: (T, T),
}

impl<'a, T: Float + FromPrimitive> Objective<'a, T> {
    fn pos(&self, x: &[T], i: usize) -> (T, T) {
        match self.slot[i] {
            Some(k) => (x[2 * k], x[2 * k + 1]),
            None => self.fixed_pos[i],
        }
    }

    fn eval(&self, x: &[T], tau: T) -> (T, Vec<T>) {
        let mut f = T::zero();
        let mut g = vec![T::zero(); x.len()];
        for pins in &self.nl.nets {
            let (xs, ys): (Vec<T>, Vec<T>) = pins.iter().map(|&i| self.pos(x, i)).unzip();
            let (v, gx, gy) = smooth_hpwl(&xs, &ys, tau);
            f = f + v;
            for (j, &i) in pins.iter().enumerate() {
                if let Some(k) = self.slot[i] {
                    g[2 * k] = g[2 * k] + gx[j];
                    g[2 * k + 1] = g[2 * k + 1] + gy[j];
                }
            }
        }
        let two: T = cast(2.0);
        for &i in &self.movable {
            let k = self.slot[i].unwrap();
            if self.nl.kinds[i] == InstKind::Mem && !self.mem_cols.is_empty() {
                let px = x[2 * k];
                let c = self
                    .mem_cols
                    .iter()
                    .copied()
                    .min_by(|a, b| (px - *a).abs().partial_cmp(&(px - *b).abs()).unwrap())
                    .unwrap();
                f = f + self.mem_weight * (px - c) * (px - c);
                g[2 * k] = g[2 * k] + self.mem_weight * two * (px - c);
            }
            if let Some((cx, cy)) = self.center {
                let w: T = cast(0.01);
                let (dx, dy) = (x[2 * k] - cx, x[2 * k + 1] - cy);
                f = f + w * (dx * dx + dy * dy);
                g[2 * k] = g[2 * k] + two * w * dx;
                g[2 * k + 1] = g[2 * k + 1] + two * w * dy;
            }
        }
        (f, g)
    }

    fn project(&self, x: &mut [T]) {
        for k in 0..x.len() / 2 {
            x[2 * k] = x[2 * k].max(T::zero()).min(self.bounds.0);
            x[2 * k + 1] = x[2 * k + 1].max(T::zero()).min(self.bounds.1);
        }
    }
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Global placement: minimizes smoothed wirelength plus the MEM column
/// potential with Polak-Ribiere conjugate gradient and Armijo backtracking,
/// annealing the smoothing temperature over `cg.stages` stages. IO
/// instances are anchors; a design without any falls back to a weak pull
/// towards the array centre.
pub fn global_place<T: Float + FromPrimitive>(
    packed: &PackedGraph,
    grid: &SiteGrid,
    params: &PlaceParams,
) -> ContinuousPlacement<T> {
    let nl = PlaceNetlist::new(packed);
    let anchors = anchor_sites(&nl, grid);
    let mut slot = vec![None; nl.len()];
    let mut movable = Vec::new();
    let mut fixed_pos = vec![(T::zero(), T::zero()); nl.len()];
    for i in 0..nl.len() {
        match anchors[i] {
            Some((x, y)) => fixed_pos[i] = (cast(x as f64), cast(y as f64)),
            None => {
                slot[i] = Some(movable.len());
                movable.push(i);
            }
        }
    }
    let center_xy: (T, T) = (cast((grid.width as f64 - 1.0) / 2.0), cast((grid.height as f64 - 1.0) / 2.0));
    let center = if movable.len() == nl.len() && !nl.is_empty() {
        warn!("no anchored instances; pulling towards the array centre");
        Some(center_xy)
    } else {
        None
    };
    let obj = Objective {
        nl: &nl,
        movable: movable.clone(),
        slot,
        fixed_pos,
        mem_cols: grid.mem_columns().into_iter().map(|c| cast(c as f64)).collect(),
        mem_weight: cast(params.cg.mem_weight),
        center,
        bounds: (cast(grid.width as f64 - 1.0), cast(grid.height as f64 - 1.0)),
    };

    // Start at the anchor centroid with a small seeded jitter.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let anchored: Vec<(T, T)> = (0..nl.len()).filter(|&i| anchors[i].is_some()).map(|i| obj.fixed_pos[i]).collect();
    let start = if anchored.is_empty() {
        center_xy
    } else {
        let n: T = cast(anchored.len() as f64);
        let sx = anchored.iter().fold(T::zero(), |s, p| s + p.0);
        let sy = anchored.iter().fold(T::zero(), |s, p| s + p.1);
        (sx / n, sy / n)
    };
    let mut x = Vec::with_capacity(2 * movable.len());
    for _ in &movable {
        x.push(start.0 + cast(rng.gen_range(-0.5..0.5)));
        x.push(start.1 + cast(rng.gen_range(-0.5..0.5)));
    }
    obj.project(&mut x);

    let mut history = Vec::new();
    let stages = params.cg.stages.max(1);
    for s in 0..stages {
        let frac = if stages == 1 { 1.0 } else { s as f64 / (stages - 1) as f64 };
        let tau: T = cast(params.cg.tau_start * (params.cg.tau_end / params.cg.tau_start).powf(frac));
        history.push(conjugate_gradient(&obj, &mut x, tau, &params.cg));
    }

    let mut positions = BTreeMap::new();
    for i in 0..nl.len() {
        positions.insert(nl.names[i].clone(), obj.pos(&x, i));
    }
    ContinuousPlacement { positions, history }
}

fn conjugate_gradient<T: Float + FromPrimitive>(obj: &Objective<'_, T>, x: &mut Vec<T>, tau: T, p: &CgParams) -> Vec<T> {
    let n = x.len();
    let (mut f, mut g) = obj.eval(x, tau);
    let mut hist = vec![f];
    if n == 0 {
        return hist;
    }
    let mut d: Vec<T> = g.iter().map(|&v| -v).collect();
    let tol: T = cast(p.grad_tol);
    let c1: T = cast(1e-4);
    let half: T = cast(0.5);
    let mut step: T = T::one();
    for it in 0..p.max_iters {
        if dot(&g, &g).sqrt() <= tol {
            break;
        }
        if dot(&g, &d) >= T::zero() || (it > 0 && it % n == 0) {
            d = g.iter().map(|&v| -v).collect();
        }
        let slope = dot(&g, &d);
        let mut a = step * cast(2.0);
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<T> = x.iter().zip(&d).map(|(&xi, &di)| xi + a * di).collect();
            obj.project(&mut xn);
            let (fnew, gnew) = obj.eval(&xn, tau);
            if fnew <= f + c1 * a * slope && fnew <= f {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            a = a * half;
        }
        let Some((xn, fnew, gnew)) = accepted else { break };
        step = a;
        let denom = dot(&g, &g);
        let diff: Vec<T> = gnew.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let beta = (dot(&gnew, &diff) / denom).max(T::zero());
        d = gnew.iter().zip(&d).map(|(&gi, &di)| -gi + beta * di).collect();
        let improved = f - fnew;
        *x = xn;
        f = fnew;
        g = gnew;
        hist.push(f);
        if improved <= T::epsilon() * f.abs().max(T::one()) && dot(&g, &g).sqrt() <= tol.sqrt() {
            break;
        }
    }
    hist
}

/// Snaps every instance to the nearest free compatible site. Fixed
/// instances go first, then the rest in name order; ties break on smaller
/// y, then smaller x.
pub fn legalize<T: Float>(cont: &ContinuousPlacement<T>, packed: &PackedGraph, grid: &SiteGrid) -> Result<Placement, PlaceError> {
    let nl = PlaceNetlist::new(packed);
    for kind in [TileKind::Pe, TileKind::Mem, TileKind::Io] {
        let needed = (0..nl.len()).filter(|&i| SiteGrid::site_kind(nl.kinds[i]) == kind).count();
        let available = grid.sites(kind).len();
        if needed > available {
            return Err(PlaceError::InsufficientCapacity { kind: kind.name(), needed, available });
        }
    }
    let mut order: Vec<usize> = (0..nl.len()).collect();
    order.sort_by(|&a, &b| (nl.fixed[a].is_none(), &nl.names[a]).cmp(&(nl.fixed[b].is_none(), &nl.names[b])));
    let mut used = vec![false; (grid.width * grid.height) as usize];
    let mut out = Placement { legal: true, ..Default::default() };
    for i in order {
        let kind = SiteGrid::site_kind(nl.kinds[i]);
        let (px, py) = match nl.fixed[i] {
            Some((x, y)) => (x as f64, y as f64),
            None => {
                let p = cont.positions.get(&nl.names[i]).ok_or_else(|| PlaceError::UnplacedPin(nl.names[i].clone()))?;
                (p.0.to_f64().unwrap_or(0.0), p.1.to_f64().unwrap_or(0.0))
            }
        };
        let best = grid
            .sites(kind)
            .into_iter()
            .filter(|&(x, y)| !used[(y * grid.width + x) as usize])
            .min_by(|&(ax, ay), &(bx, by)| {
                let da = (ax as f64 - px).powi(2) + (ay as f64 - py).powi(2);
                let db = (bx as f64 - px).powi(2) + (by as f64 - py).powi(2);
                da.partial_cmp(&db).unwrap().then((ay, ax).cmp(&(by, bx)))
            })
            .expect("capacity checked");
        used[(best.1 * grid.width + best.0) as usize] = true;
        out.sites.insert(nl.names[i].clone(), best);
    }
    Ok(out)
}

/// Counts of occupied cells in a net's bounding box that are not the net's
/// own pins.
fn overlap(pins: &[(u32, u32)], occ: &[u32], width: u32) -> u32 {
    let (mut lx, mut hx, mut ly, mut hy) = (u32::MAX, 0, u32::MAX, 0);
    for &(x, y) in pins {
        lx = lx.min(x);
        hx = hx.max(x);
        ly = ly.min(y);
        hy = hy.max(y);
    }
    let mut n = 0;
    for y in ly..=hy {
        for x in lx..=hx {
            if occ[(y * width + x) as usize] > 0 && !pins.contains(&(x, y)) {
                n += 1;
            }
        }
    }
    n
}

/// Eq. 2 cost of one net under a legal placement. `Area_existing` is the set
/// of tiles holding instances of this application other than the net's own
/// pins.
pub fn net_eq2_cost<T: Float + FromPrimitive>(
    pins: &[(u32, u32)],
    occupied: &[(u32, u32)],
    grid: &SiteGrid,
    gamma: T,
    alpha: T,
) -> T {
    let mut occ = vec![0u32; (grid.width * grid.height) as usize];
    for &(x, y) in occupied {
        occ[(y * grid.width + x) as usize] += 1;
    }
    eq2_cost(cast(hpwl(pins) as f64), cast(overlap(pins, &occ, grid.width) as f64), gamma, alpha)
}

/// Total Eq. 2 cost of a legal placement.
pub fn placement_cost<T: Float + FromPrimitive>(placement: &Placement, packed: &PackedGraph, grid: &SiteGrid, gamma: T, alpha: T) -> Result<T, PlaceError> {
    let nl = PlaceNetlist::new(packed);
    let pos: Vec<(u32, u32)> = nl
        .names
        .iter()
        .map(|n| placement.get(n).ok_or_else(|| PlaceError::UnplacedPin(n.clone())))
        .collect::<Result<_, _>>()?;
    let mut total = T::zero();
    for pins in &nl.nets {
        let pp: Vec<(u32, u32)> = pins.iter().map(|&i| pos[i]).collect();
        total = total + net_eq2_cost(&pp, &pos, grid, gamma, alpha);
    }
    Ok(total)
}

/// Outcome of a detailed placement run.
#[derive(Debug, Clone, PartialEq)]
pub struct SaStats<T> {
    pub initial_cost: T,
    pub final_cost: T,
    pub sweeps: usize,
    pub accepted: usize,
    /// Largest cost increase accepted by any move.
    pub max_accepted_delta: T,
}

struct SaState<'a, T> {
    nl: &'a PlaceNetlist,
    grid: &'a SiteGrid,
    pos: Vec<(u32, u32)>,
    at: Vec<Option<usize>>,
    occ: Vec<u32>,
    net_cost: Vec<T>,
    gamma: T,
    alpha: T,
}

impl<'a, T: Float + FromPrimitive> SaState<'a, T> {
    fn cell(&self, (x, y): (u32, u32)) -> usize {
        (y * self.grid.width + x) as usize
    }

    fn cost_of(&self, net: usize) -> T {
        let pins: Vec<(u32, u32)> = self.nl.nets[net].iter().map(|&i| self.pos[i]).collect();
        eq2_cost(
            cast(hpwl(&pins) as f64),
            cast(overlap(&pins, &self.occ, self.grid.width) as f64),
            self.gamma,
            self.alpha,
        )
    }

    fn total(&self) -> T {
        self.net_cost.iter().copied().fold(T::zero(), |a, b| a + b)
    }

    /// Nets whose cost may change when `cells` change occupancy or `insts` move.
    fn affected(&self, insts: &[usize], cells: &[(u32, u32)]) -> Vec<usize> {
        let mut out: Vec<usize> = insts.iter().flat_map(|&i| self.nl.nets_of[i].iter().copied()).collect();
        if !cells.is_empty() {
            for (ni, pins) in self.nl.nets.iter().enumerate() {
                let (mut lx, mut hx, mut ly, mut hy) = (u32::MAX, 0, u32::MAX, 0);
                for &i in pins {
                    let (x, y) = self.pos[i];
                    lx = lx.min(x);
                    hx = hx.max(x);
                    ly = ly.min(y);
                    hy = hy.max(y);
                }
                if cells.iter().any(|&(x, y)| x >= lx && x <= hx && y >= ly && y <= hy) {
                    out.push(ni);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Moves `i` to `to`, swapping with its occupant if any.
    fn apply(&mut self, i: usize, to: (u32, u32)) {
        let from = self.pos[i];
        let (cf, ct) = (self.cell(from), self.cell(to));
        let other = self.at[ct];
        self.at[cf] = other;
        self.at[ct] = Some(i);
        self.pos[i] = to;
        if let Some(j) = other {
            self.pos[j] = from;
        } else {
            self.occ[cf] -= 1;
            self.occ[ct] += 1;
        }
    }

    /// Applies the move, returning the cost delta and the saved costs
    /// needed to undo it.
    fn try_move(&mut self, i: usize, to: (u32, u32)) -> (T, Vec<(usize, T)>) {
        let from = self.pos[i];
        let other = self.at[self.cell(to)];
        let mut insts = vec![i];
        let mut cells = Vec::new();
        match other {
            Some(j) => insts.push(j),
            None => cells.extend([from, to]),
        }
        let before = self.affected(&insts, &cells);
        self.apply(i, to);
        let mut nets = self.affected(&insts, &cells);
        nets.extend(before);
        nets.sort_unstable();
        nets.dedup();
        let mut delta = T::zero();
        let mut saved = Vec::with_capacity(nets.len());
        for n in nets {
            let c = self.cost_of(n);
            delta = delta + (c - self.net_cost[n]);
            saved.push((n, self.net_cost[n]));
            self.net_cost[n] = c;
        }
        (delta, saved)
    }

    fn undo(&mut self, i: usize, from: (u32, u32), saved: Vec<(usize, T)>) {
        self.apply(i, from);
        for (n, c) in saved {
            self.net_cost[n] = c;
        }
    }
}

/// Simulated-annealing detailed placement on the Eq. 2 cost. Moves relocate
/// a movable instance to a random compatible site, swapping with a movable
/// occupant. Deterministic for a fixed seed; the returned placement is the
/// best seen, so its cost never exceeds the input's.
pub fn detailed_place<T: Float + FromPrimitive>(
    legal: &Placement,
    packed: &PackedGraph,
    grid: &SiteGrid,
    params: &PlaceParams,
) -> Result<(Placement, SaStats<T>), PlaceError> {
    let nl = PlaceNetlist::new(packed);
    let pos: Vec<(u32, u32)> = nl
        .names
        .iter()
        .map(|n| legal.get(n).ok_or_else(|| PlaceError::UnplacedPin(n.clone())))
        .collect::<Result<_, _>>()?;
    let cells = (grid.width * grid.height) as usize;
    let mut st = SaState {
        nl: &nl,
        grid,
        at: vec![None; cells],
        occ: vec![0; cells],
        pos,
        net_cost: vec![T::zero(); nl.nets.len()],
        gamma: cast(params.gamma),
        alpha: cast(params.alpha),
    };
    for i in 0..nl.len() {
        let c = st.cell(st.pos[i]);
        st.at[c] = Some(i);
        st.occ[c] += 1;
    }
    for n in 0..nl.nets.len() {
        st.net_cost[n] = st.cost_of(n);
    }
    let initial = st.total();
    let movable: Vec<usize> = (0..nl.len()).filter(|&i| nl.fixed[i].is_none()).collect();
    let sites_of: HashMap<TileKind, Vec<(u32, u32)>> =
        [TileKind::Pe, TileKind::Mem, TileKind::Io].into_iter().map(|k| (k, grid.sites(k))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut stats = SaStats { initial_cost: initial, final_cost: initial, sweeps: 0, accepted: 0, max_accepted_delta: T::neg_infinity() };
    if movable.is_empty() || nl.nets.is_empty() {
        return Ok((Placement { sites: legal.sites.clone(), legal: true }, stats));
    }

    let propose = |st: &SaState<'_, T>, rng: &mut ChaCha8Rng| -> Option<(usize, (u32, u32))> {
        let i = movable[rng.gen_range(0..movable.len())];
        let sites = &sites_of[&SiteGrid::site_kind(nl.kinds[i])];
        let to = sites[rng.gen_range(0..sites.len())];
        if to == st.pos[i] {
            return None;
        }
        match st.at[st.cell(to)] {
            Some(j) if nl.fixed[j].is_some() || SiteGrid::site_kind(nl.kinds[j]) != SiteGrid::site_kind(nl.kinds[i]) => None,
            _ => Some((i, to)),
        }
    };

    let moves = params.sa.moves_per_instance.max(1) * movable.len();
    let mut temp: T = match params.sa.t0 {
        Some(t) => cast(t),
        None => {
            let mut ups = Vec::new();
            for _ in 0..100 {
                if let Some((i, to)) = propose(&st, &mut rng) {
                    let from = st.pos[i];
                    let (d, saved) = st.try_move(i, to);
                    st.undo(i, from, saved);
                    if d > T::zero() {
                        ups.push(d);
                    }
                }
            }
            if ups.is_empty() {
                T::one()
            } else {
                let mean = ups.iter().copied().fold(T::zero(), |a, b| a + b) / cast(ups.len() as f64);
                -mean / cast::<T>(0.8).ln()
            }
        }
    };
    let mut greedy = temp <= T::zero();
    let exit_temp: T = cast::<T>(params.sa.exit_ratio) / cast(nl.nets.len() as f64);
    let decay: T = cast(params.sa.decay);
    let mut best = (initial, st.pos.clone());
    let mut cur = initial;
    for sweep in 0..params.sa.max_sweeps {
        let mut accepted = 0usize;
        let start = cur;
        for _ in 0..moves {
            let Some((i, to)) = propose(&st, &mut rng) else { continue };
            let from = st.pos[i];
            let (d, saved) = st.try_move(i, to);
            let ok = if d <= T::zero() {
                true
            } else if greedy {
                false
            } else {
                let u: f64 = rng.gen();
                cast::<T>(u) < (-d / temp).exp()
            };
            if ok {
                accepted += 1;
                stats.max_accepted_delta = stats.max_accepted_delta.max(d);
                cur = cur + d;
                if cur < best.0 {
                    best = (cur, st.pos.clone());
                }
            } else {
                st.undo(i, from, saved);
            }
        }
        stats.sweeps = sweep + 1;
        stats.accepted += accepted;
        let rate = accepted as f64 / moves as f64;
        debug!("sa sweep {sweep}: T={:?} cost={:?} accept={rate:.3}", temp.to_f64(), cur.to_f64());
        if greedy {
            if cur >= start - cast::<T>(1e-9) * start.abs().max(T::one()) {
                break;
            }
        } else {
            temp = temp * decay;
            if rate < params.sa.min_acceptance || cur <= T::zero() || temp < exit_temp * cur {
                greedy = true;
            }
        }
    }
    stats.final_cost = best.0;
    let mut out = Placement { legal: true, ..Default::default() };
    for (i, n) in nl.names.iter().enumerate() {
        out.sites.insert(n.clone(), best.1[i]);
    }
    Ok((out, stats))
}

/// Result of one alpha in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRun {
    pub alpha: f64,
    pub critical_path: Option<f64>,
}

/// Runs detailed placement and `route_fn` for every alpha and keeps the
/// placement with the smallest post-route critical path (ties to the
/// smaller alpha). Alphas whose routing fails are skipped.
pub fn alpha_sweep<F>(
    legal: &Placement,
    packed: &PackedGraph,
    grid: &SiteGrid,
    params: &PlaceParams,
    alphas: &[f64],
    route_fn: F,
) -> Result<(Placement, f64, Vec<AlphaRun>), PlaceError>
where
    F: Fn(&Placement) -> Option<f64> + Sync,
{
    let results: Vec<(f64, Result<(Placement, Option<f64>), PlaceError>)> = alphas
        .par_iter()
        .map(|&alpha| {
            let p = PlaceParams { alpha, ..*params };
            let r = detailed_place::<f64>(legal, packed, grid, &p).map(|(pl, _)| {
                let cp = route_fn(&pl);
                (pl, cp)
            });
            (alpha, r)
        })
        .collect();
    let mut runs = Vec::new();
    let mut best: Option<(f64, f64, Placement)> = None;
    for (alpha, r) in results {
        let (pl, cp) = r?;
        runs.push(AlphaRun { alpha, critical_path: cp });
        if let Some(cp) = cp {
            let better = match &best {
                None => true,
                Some((bcp, balpha, _)) => cp < *bcp || (cp == *bcp && alpha < *balpha),
            };
            if better {
                best = Some((cp, alpha, pl));
            }
        }
    }
    let (cp, _, pl) = best.ok_or(PlaceError::AllFailed)?;
    Ok((pl, cp, runs))
}

/// Global placement, legalization and detailed placement with default
/// scalar type.
pub fn place(packed: &PackedGraph, grid: &SiteGrid, params: &PlaceParams) -> Result<Placement, PlaceError> {
    let cont = global_place::<f64>(packed, grid, params);
    let legal = legalize(&cont, packed, grid)?;
    Ok(detailed_place::<f64>(&legal, packed, grid, params)?.0)
}
