//! On-disk build artifact: the grid representation and its labels.
//!
//! A build file is self-contained: it embeds the instance it was built
//! from, so it can be inspected or diffed without re-running anything.
//! It is an output format only; commands that need the grid rebuild it
//! from the instance, which is deterministic.

use serde::{Deserialize, Serialize};

use super::gen::InstanceFile;
use super::HarnessError;
use crate::pipeline::{Mode, Pipeline};
use crate::portal::NodeLabel;

pub const BUILD_SCHEMA_VERSION: u32 = 1;

/// One grid node: its cell, id, elected representative, and label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRec {
    pub i: i64,
    pub j: i64,
    pub vid: u64,
    pub rep: u64,
    pub label: NodeLabel,
}

/// Serialized result of a full pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildFile {
    pub schema: u32,
    pub mode: String,
    pub instance: InstanceFile,
    pub cells: Vec<CellRec>,
    pub election_rounds: u64,
    pub path_rounds: u64,
    pub labelling_rounds: Vec<(String, u64)>,
}

impl BuildFile {
    pub fn from_pipeline(instance: &InstanceFile, pipe: &Pipeline, mode: Mode) -> BuildFile {
        let cells = pipe
            .build
            .cells
            .iter()
            .map(|cell| CellRec {
                i: cell.i,
                j: cell.j,
                vid: pipe.build.vid_of_cell[cell],
                rep: pipe.build.rep_of[cell],
                label: pipe.labelling.labels[cell],
            })
            .collect();
        BuildFile {
            schema: BUILD_SCHEMA_VERSION,
            mode: mode.to_string(),
            instance: instance.clone(),
            cells,
            election_rounds: pipe.build.election_comm_rounds,
            path_rounds: pipe.build.path_comm_rounds,
            labelling_rounds: pipe
                .labelling
                .stage_rounds
                .iter()
                .map(|&(stage, rounds)| (stage.to_string(), rounds))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("build file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        let file: BuildFile = serde_json::from_str(s)
            .map_err(|e| HarnessError::BadInstance(format!("build file: {e}")))?;
        if file.schema != BUILD_SCHEMA_VERSION {
            return Err(HarnessError::BadInstance(format!(
                "unsupported build schema {}",
                file.schema
            )));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen::{generate_instance, ShapeParams};
    use crate::pipeline::PipelineOptions;
    use crate::portal::compute_labels;

    fn built(seed: u64) -> (InstanceFile, Pipeline) {
        let inst = generate_instance(seed, 30, &ShapeParams::default()).unwrap();
        let pipe = Pipeline::run(inst.to_udg().unwrap(), &PipelineOptions::default()).unwrap();
        (inst, pipe)
    }

    #[test]
    fn round_trip_preserves_the_build_file() {
        let (inst, pipe) = built(7);
        let file = BuildFile::from_pipeline(&inst, &pipe, Mode::Congest);
        let parsed = BuildFile::from_json(&file.to_json()).unwrap();
        assert_eq!(parsed, file);
    }

    #[test]
    fn labels_in_the_file_match_the_centralized_oracle() {
        let (inst, pipe) = built(11);
        let file = BuildFile::from_pipeline(&inst, &pipe, Mode::Congest);
        let active = pipe.build.vid_of_cell.keys().cloned().collect();
        let oracle = compute_labels(&active, &pipe.build.vid_of_cell).unwrap();
        assert_eq!(file.cells.len(), oracle.len());
        for rec in &file.cells {
            let cell = crate::geometry::CellCoord { i: rec.i, j: rec.j };
            assert_eq!(rec.label, oracle[&cell]);
            assert_eq!(rec.vid, pipe.build.vid_of_cell[&cell]);
        }
    }

    #[test]
    fn same_seed_build_files_are_byte_identical() {
        let (inst_a, pipe_a) = built(3);
        let (inst_b, pipe_b) = built(3);
        let a = BuildFile::from_pipeline(&inst_a, &pipe_a, Mode::Congest).to_json();
        let b = BuildFile::from_pipeline(&inst_b, &pipe_b, Mode::Congest).to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let (inst, pipe) = built(5);
        let mut file = BuildFile::from_pipeline(&inst, &pipe, Mode::Broadcast);
        file.schema = 9;
        assert!(BuildFile::from_json(&file.to_json()).is_err());
    }
}
