//! Run the labelling protocols twice: once on a network whose nodes are
//! the grid cells themselves, and once hosted on the unit-disk graph,
//! where each cell's program runs on its representative and every grid
//! round is emulated by a fixed window of graph rounds.
//!
//! The two runs must agree exactly: same labels, same neighbor views,
//! same per-stage round counts.

use gridroute::grid::adapter::ADAPTER_WINDOW;
use gridroute::harness::{generate_instance, ShapeParams};
use gridroute::label::{run_labelling, run_labelling_hosted, LabelOptions};
use gridroute::pipeline::{Pipeline, PipelineOptions};

fn main() {
    let inst = generate_instance(31, 60, &ShapeParams::default()).unwrap();
    let pipe = Pipeline::run(inst.to_udg().unwrap(), &PipelineOptions::default()).unwrap();

    let direct = run_labelling(&pipe.build.vid_of_cell, &LabelOptions::default()).unwrap();
    let hosted = run_labelling_hosted(&pipe.udg, &pipe.build, &LabelOptions::default()).unwrap();

    assert_eq!(hosted.labelling.labels, direct.labels);
    assert_eq!(hosted.labelling.neighbor_labels, direct.neighbor_labels);
    assert_eq!(hosted.labelling.stage_rounds, direct.stage_rounds);

    println!("grid cells: {}", pipe.build.cells.len());
    println!("labels agree on every cell");
    for &(stage, rounds) in &direct.stage_rounds {
        println!("stage {stage}: {rounds} grid rounds");
    }
    println!(
        "hosted run: {} grid rounds = {} graph rounds ({} per window)",
        hosted.gamma_rounds, hosted.udg_rounds, ADAPTER_WINDOW
    );
    assert_eq!(hosted.udg_rounds, hosted.gamma_rounds * ADAPTER_WINDOW);
}
