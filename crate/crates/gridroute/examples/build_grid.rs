//! Build the full pipeline: active cells, elected representatives,
//! realized grid edges, and interval labels, all inside the simulator.

use gridroute::harness::{generate_instance, ShapeParams};
use gridroute::pipeline::{Pipeline, PipelineOptions};

fn main() {
    let inst = generate_instance(7, 120, &ShapeParams::default()).unwrap();
    let pipe = Pipeline::run(inst.to_udg().unwrap(), &PipelineOptions::default()).unwrap();

    println!("nodes: {}", pipe.udg.n());
    println!("active cells: {}", pipe.build.cells.len());
    println!("representatives: {}", pipe.build.cells_of_rep.len());
    println!("grid edges realized as node paths: {}", pipe.build.edge_paths.len());

    let longest = pipe
        .build
        .edge_paths
        .values()
        .map(|p| p.len())
        .max()
        .unwrap();
    println!("longest edge path: {longest} nodes (cap is 4)");

    println!("election rounds: {}", pipe.build.election_comm_rounds);
    println!("path-selection rounds: {}", pipe.build.path_comm_rounds);
    for &(stage, rounds) in &pipe.labelling.stage_rounds {
        println!("labelling stage {stage}: {rounds} rounds");
    }
    println!("labelling round cap: {}", pipe.labelling.round_cap);

    let cell = pipe.build.cells[0];
    let label = pipe.labelling.labels[&cell];
    println!(
        "first cell ({}, {}): interval [{}, {}], portal interval [{}, {}]",
        cell.i, cell.j, label.l, label.r, label.pl, label.pr
    );
}
