//! Check the distance chain that bounds the routed path length: routed
//! hops against the grid, the grid against the cell graph, the cell
//! graph against geodesics in the cell polygon, and those geodesics
//! against shortest paths in the graph itself.

use gridroute::harness::verify::chain_values;
use gridroute::harness::{generate_instance, sample_pairs, verify_chain, ShapeParams};
use gridroute::pipeline::{Pipeline, PipelineOptions};

fn main() {
    let inst = generate_instance(19, 80, &ShapeParams::default()).unwrap();
    let pipe = Pipeline::run(inst.to_udg().unwrap(), &PipelineOptions::default()).unwrap();

    let pairs = sample_pairs(&pipe.udg, 60, 13);
    let report = verify_chain(&pipe.udg, &pipe.build, &pipe.labelling.labels, &pairs).unwrap();

    println!("pairs checked: {}", report.pairs_checked);
    println!("adjacent pairs skipped: {}", report.skipped_adjacent);
    println!("violations: {}", report.violations.len());
    assert!(report.ok());

    let rec = report
        .records
        .iter()
        .max_by_key(|r| r.routed_hops)
        .expect("at least one non-adjacent pair");
    let ps = pipe.udg.pt(pipe.udg.idx_of(rec.s).unwrap());
    let pt = pipe.udg.pt(pipe.udg.idx_of(rec.t).unwrap());
    let values = chain_values(rec, ps, pt);

    println!("longest routed pair {} -> {}:", rec.s, rec.t);
    let names = [
        "routed hops",
        "3*grid + 2",
        "6*cell-graph + 2",
        "k*polygon(corners) + 2",
        "k*polygon(s,t) + 2",
        "k*(graph + slack) + 2",
    ];
    for (name, value) in names.iter().zip(values.iter()) {
        println!("  {name:<24} {value:.4}");
    }
    for w in values.windows(2) {
        assert!(w[0] <= w[1] + 1e-9, "chain must be monotone");
    }
    println!("chain is monotone for this pair");
}
