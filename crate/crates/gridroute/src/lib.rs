//! Compact routing on unit-disk graphs via a grid abstraction.
//!
//! The crate builds a routing scheme for a unit-disk graph in four layers:
//!
//! * [`geometry`]: the grid discretization of the graph contour (active
//!   cells, candidate sets, containment predicates).
//! * [`sim`]: a deterministic round-synchronous simulator for networks with
//!   a local channel (messages along graph edges) and a budgeted global
//!   channel (messages to any node whose id the sender has learned).
//! * [`grid`]: distributed election of cell representatives and
//!   construction of paths realizing grid edges inside the graph.
//! * [`portal`] and [`routing`]: a tree labelling of the grid derived from
//!   portals (maximal vertical cell runs) and the local routing function
//!   that forwards packets on those labels with constant stretch.
//!
//! The [`harness`] module generates random instances, computes exact
//! baselines, and checks the distance chain that yields the stretch bound.
//! End-to-end orchestration lives in [`pipeline`], and the `gridroute`
//! binary exposes it as subcommands. The `examples/` directory shows one
//! runnable program per capability.

pub mod geometry;
pub mod grid;
pub mod harness;
pub mod label;
pub mod pipeline;
pub mod portal;
pub mod routing;
pub mod sim;
#[cfg(test)]
pub(crate) mod testutil;

pub use geometry::{CellCoord, NodeId, Point, CELL_SIDE, EPS};
