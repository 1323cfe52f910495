//! Interconnect generator and compiler for coarse-grained reconfigurable
//! arrays: graph IR, architecture builder, RTL lowering, packing, placement,
//! routing, bitstream generation and configuration-level simulation.

pub mod arch;
pub mod bitstream;
pub mod dse;
pub mod ir;
pub mod pack;
pub mod place;
pub mod route;
pub mod rtl;

pub use arch::{create_uniform_interconnect, ArchSpec, CoreSpec, LayerSpec, PortConnPolicy, TileKind, Topology};
pub use ir::{IrNode, NodeId, RoutingGraph, Side};

/// Continuous placement in the default scalar type.
pub type ContinuousPlacement = place::ContinuousPlacement<f64>;
/// Continuous placement in single precision.
pub type ContinuousPlacementF32 = place::ContinuousPlacement<f32>;
/// Annealing statistics in the default scalar type.
pub type SaStats = place::SaStats<f64>;
