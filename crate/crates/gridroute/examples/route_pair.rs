//! Route one pair through the grid and compare against the exact
//! hop-distance baseline.

use gridroute::harness::{generate_instance, udg_hops, ShapeParams};
use gridroute::pipeline::{Pipeline, PipelineOptions};

fn main() {
    let inst = generate_instance(3, 100, &ShapeParams::default()).unwrap();
    let pipe = Pipeline::run(inst.to_udg().unwrap(), &PipelineOptions::default()).unwrap();
    let router = pipe.router();

    let s = pipe.udg.id(0);
    let t = pipe.udg.id(pipe.udg.n() - 1);
    let record = router.route(s, t).unwrap();

    println!("source {s}, target {t}");
    println!("routed hops: {}", record.path.len() - 1);
    let ids: Vec<String> = record.path.iter().map(|id| id.to_string()).collect();
    println!("path: {}", ids.join(" -> "));
    println!("grid cells consulted: {}", record.grid_cells.len());

    let baseline = udg_hops(&pipe.udg, 0)[pipe.udg.n() - 1].unwrap();
    println!("shortest possible: {baseline} hops");
    println!(
        "stretch: {:.3}",
        (record.path.len() - 1) as f64 / baseline as f64
    );
}
