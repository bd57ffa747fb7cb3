//! Build the pipeline under both local channel disciplines and show the
//! results are identical: per-neighbor messages buy nothing over
//! broadcasting the same word to everyone.

use gridroute::harness::{generate_instance, ShapeParams};
use gridroute::pipeline::{Mode, Pipeline, PipelineOptions};

fn main() {
    let inst = generate_instance(47, 100, &ShapeParams::default()).unwrap();

    let congest = Pipeline::run(
        inst.to_udg().unwrap(),
        &PipelineOptions { mode: Mode::Congest, trace: false },
    )
    .unwrap();
    let broadcast = Pipeline::run(
        inst.to_udg().unwrap(),
        &PipelineOptions { mode: Mode::Broadcast, trace: false },
    )
    .unwrap();

    assert_eq!(congest.build.rep_of, broadcast.build.rep_of);
    assert_eq!(congest.build.vid_of_cell, broadcast.build.vid_of_cell);
    assert_eq!(congest.build.edge_paths, broadcast.build.edge_paths);
    assert_eq!(congest.labelling.labels, broadcast.labelling.labels);

    let s = congest.udg.id(0);
    let t = congest.udg.id(congest.udg.n() - 1);
    let path_c = congest.router().route(s, t).unwrap().path;
    let path_b = broadcast.router().route(s, t).unwrap().path;
    assert_eq!(path_c, path_b);

    println!("representatives: identical");
    println!("grid ids: identical");
    println!("edge paths: identical");
    println!("labels: identical");
    println!("route {s} -> {t}: identical ({} hops)", path_c.len() - 1);
}
