//! Route a batch of seeded random pairs and report stretch aggregates
//! plus the round counts of every pipeline stage.

use gridroute::harness::{generate_instance, stretch_report, ShapeParams};
use gridroute::pipeline::{Pipeline, PipelineOptions};

fn main() {
    let inst = generate_instance(11, 200, &ShapeParams::default()).unwrap();
    let pipe = Pipeline::run(inst.to_udg().unwrap(), &PipelineOptions::default()).unwrap();

    let report = stretch_report(
        &pipe.udg,
        &pipe.build,
        &pipe.labelling.labels,
        &pipe.labelling,
        200,
        5,
    )
    .unwrap();

    println!("pairs routed: {}", report.pairs.len());
    println!("max stretch: {:.4}", report.aggregates.max);
    println!("mean stretch: {:.4}", report.aggregates.mean);
    println!("p99 stretch: {:.4}", report.aggregates.p99);

    let worst = report
        .pairs
        .iter()
        .max_by(|a, b| a.stretch.total_cmp(&b.stretch))
        .unwrap();
    println!(
        "worst pair: {} -> {} routed {} hops, shortest {}",
        worst.s, worst.t, worst.routed_hops, worst.hop_g
    );

    println!("election rounds: {}", report.rounds.election);
    println!("path rounds: {}", report.rounds.paths);
    println!("labelling rounds: {}", report.rounds.labelling_total);

    let json = report.to_json();
    println!("report serializes to {} bytes of JSON", json.len());
}
