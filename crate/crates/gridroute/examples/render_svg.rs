//! Render an instance as a layered SVG: unit-disk edges, active cells,
//! the grid, portal runs, and one routed path.

use gridroute::harness::{generate_instance, render_svg, Layer, Scene, ShapeParams};
use gridroute::pipeline::{Pipeline, PipelineOptions};

fn main() {
    let inst = generate_instance(23, 90, &ShapeParams::default()).unwrap();
    let pipe = Pipeline::run(inst.to_udg().unwrap(), &PipelineOptions::default()).unwrap();

    let s = pipe.udg.id(0);
    let t = pipe.udg.id(pipe.udg.n() - 1);
    let route = pipe.router().route(s, t).unwrap();

    let scene = Scene {
        udg: &pipe.udg,
        map: Some(&pipe.map),
        route: Some(&route),
    };
    let layers = [Layer::Cells, Layer::Udg, Layer::Grid, Layer::Portals, Layer::Path];
    let svg = render_svg(&scene, &layers);

    let path = std::env::temp_dir().join("gridroute_example_scene.svg");
    std::fs::write(&path, &svg).expect("temp dir is writable");
    println!("layers: cells udg grid portals path");
    println!("svg bytes: {}", svg.len());
    println!("wrote {}", path.display());
}
