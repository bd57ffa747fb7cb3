//! End-to-end orchestration: points to routable instance.
//!
//! [`Pipeline::run`] takes a unit-disk instance through every stage in
//! order: active cells, representative election and grid-edge paths,
//! then the tree labelling. The result holds all intermediate artifacts
//! and hands out a [`Router`] for queries.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{compute_active_cells, ActiveCellMap, UdgInstance};
use crate::grid::{build_grid, BuildOptions, GridBuild, GridError};
use crate::label::{run_labelling, LabelError, LabelOptions, Labelling};
use crate::routing::Router;
use crate::sim::LocalMode;

/// Local-channel discipline for the construction phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Distinct messages per neighbor.
    Congest,
    /// One identical message to all neighbors per round.
    Broadcast,
}

impl Mode {
    pub fn local_mode(self) -> LocalMode {
        match self {
            Mode::Congest => LocalMode::Unicast,
            Mode::Broadcast => LocalMode::Broadcast,
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "congest" => Ok(Mode::Congest),
            "broadcast" => Ok(Mode::Broadcast),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Congest => "congest",
            Mode::Broadcast => "broadcast",
        })
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub mode: Mode,
    pub trace: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            mode: Mode::Congest,
            trace: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Everything the pipeline computes, in dependency order.
pub struct Pipeline {
    pub udg: UdgInstance,
    pub map: ActiveCellMap,
    pub build: GridBuild,
    pub labelling: Labelling,
}

impl Pipeline {
    pub fn run(udg: UdgInstance, opts: &PipelineOptions) -> Result<Pipeline, PipelineError> {
        let map = compute_active_cells(&udg);
        let build_opts = BuildOptions {
            local_mode: opts.mode.local_mode(),
            trace: opts.trace,
        };
        let build = build_grid(&udg, &map, &build_opts)?;
        let label_opts = LabelOptions { trace: opts.trace };
        let labelling = run_labelling(&build.vid_of_cell, &label_opts)?;
        Ok(Pipeline {
            udg,
            map,
            build,
            labelling,
        })
    }

    pub fn router(&self) -> Router<'_> {
        Router::new(&self.udg, &self.build, &self.labelling.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen::generate_instance;

    #[test]
    fn both_modes_build_identical_artifacts() {
        for seed in 0..3u64 {
            let f = generate_instance(seed, 40, &Default::default()).unwrap();
            let congest = Pipeline::run(
                f.to_udg().unwrap(),
                &PipelineOptions { mode: Mode::Congest, trace: false },
            )
            .unwrap();
            let broadcast = Pipeline::run(
                f.to_udg().unwrap(),
                &PipelineOptions { mode: Mode::Broadcast, trace: false },
            )
            .unwrap();
            assert_eq!(congest.build.rep_of, broadcast.build.rep_of);
            assert_eq!(congest.build.edge_paths, broadcast.build.edge_paths);
            assert_eq!(congest.build.vid_of_cell, broadcast.build.vid_of_cell);
            assert_eq!(congest.labelling.labels, broadcast.labelling.labels);

            let rc = congest.router();
            let rb = broadcast.router();
            let n = congest.udg.n();
            for (a, b) in [(0, n - 1), (1, n / 2), (n / 3, n - 2)] {
                let (s, t) = (congest.udg.id(a), congest.udg.id(b));
                assert_eq!(rc.route(s, t).unwrap().path, rb.route(s, t).unwrap().path);
            }
        }
    }

    #[test]
    fn mode_names_parse_and_print() {
        assert_eq!("congest".parse::<Mode>().unwrap(), Mode::Congest);
        assert_eq!("broadcast".parse::<Mode>().unwrap(), Mode::Broadcast);
        assert_eq!(Mode::Broadcast.to_string(), "broadcast");
        assert!("x".parse::<Mode>().is_err());
    }
}
