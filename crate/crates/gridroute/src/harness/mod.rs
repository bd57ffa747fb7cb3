//! Instance generation, exact baselines, and verification reports.
//!
//! The submodules provide everything the routing pipeline does not
//! compute itself: random instances ([`gen`]), hop and Euclidean distance
//! oracles ([`oracle`]), the cell graph and cell polygon used by the
//! distance-chain checks ([`cellgraph`], [`polygon`]), the checks and
//! reports themselves ([`verify`], [`report`]), SVG rendering
//! ([`render`]), and the build artifact format ([`buildfile`]).

pub mod buildfile;
pub mod cellgraph;
pub mod gen;
pub mod oracle;
pub mod polygon;
pub mod render;
pub mod report;
pub mod verify;

pub use buildfile::{BuildFile, CellRec};
pub use cellgraph::{active_set, build_cell_graph, CellGraph};
pub use gen::{generate_instance, InstanceFile, ShapeParams};
pub use oracle::{bfs_distances, dijkstra, udg_euclidean, udg_hops, GridIndex};
pub use polygon::{CellPolygon, PolygonError, GEODESIC_CELL_CAP};
pub use render::{render_svg, Layer, Scene};
pub use report::{sample_pairs, stretch_report, StretchReport};
pub use verify::{check_instance, lemma_suite, verify_chain, ChainReport, LemmaReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no acceptable instance after {attempts} attempts")]
    GenerationFailed { attempts: u32 },
    #[error("bad instance file: {0}")]
    BadInstance(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Polygon(#[from] PolygonError),
    #[error(transparent)]
    Routing(#[from] crate::routing::RoutingError),
}
