//! Deterministic layered SVG rendering of an instance and its artifacts.

use std::fmt;
use std::str::FromStr;

use crate::geometry::{ActiveCellMap, CellCoord, Point, UdgInstance, CELL_SIDE};
use crate::routing::RouteRecord;

/// Drawable layers, rendered in the order requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Udg,
    Grid,
    Cells,
    Portals,
    Path,
}

impl FromStr for Layer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "udg" => Ok(Layer::Udg),
            "grid" => Ok(Layer::Grid),
            "cells" => Ok(Layer::Cells),
            "portals" => Ok(Layer::Portals),
            "path" => Ok(Layer::Path),
            other => Err(format!("unknown layer '{other}'")),
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Layer::Udg => "udg",
            Layer::Grid => "grid",
            Layer::Cells => "cells",
            Layer::Portals => "portals",
            Layer::Path => "path",
        };
        f.write_str(s)
    }
}

/// What is available to draw. Layers whose data is absent come out empty.
pub struct Scene<'a> {
    pub udg: &'a UdgInstance,
    pub map: Option<&'a ActiveCellMap>,
    pub route: Option<&'a RouteRecord>,
}

/// Rendering transform: world bounding box to a fixed-width viewport.
pub struct Viewport {
    pub min_x: f64,
    pub max_y: f64,
    pub scale: f64,
    pub width: f64,
    pub height: f64,
}

pub const VIEW_WIDTH: f64 = 800.0;

pub fn viewport(udg: &UdgInstance) -> Viewport {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for i in 0..udg.n() {
        let p = udg.pt(i);
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let pad = 1.0 + CELL_SIDE;
    min_x -= pad;
    max_x += pad;
    min_y -= pad;
    max_y += pad;
    let scale = VIEW_WIDTH / (max_x - min_x);
    Viewport {
        min_x,
        max_y,
        scale,
        width: VIEW_WIDTH,
        height: (max_y - min_y) * scale,
    }
}

impl Viewport {
    pub fn x(&self, p: Point) -> f64 {
        (p.x - self.min_x) * self.scale
    }

    pub fn y(&self, p: Point) -> f64 {
        (self.max_y - p.y) * self.scale
    }
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

/// Renders the requested layers into a standalone SVG document. Pure in
/// its inputs: identical scenes and layer lists give identical bytes.
pub fn render_svg(scene: &Scene, layers: &[Layer]) -> String {
    let vp = viewport(scene.udg);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        num(vp.width),
        num(vp.height),
        num(vp.width),
        num(vp.height)
    ));
    for layer in layers {
        out.push_str(&format!("<g id=\"{layer}\">\n"));
        match layer {
            Layer::Cells => {
                if let Some(map) = scene.map {
                    for cell in map.cells.keys() {
                        let (x0, y0, x1, y1) = cell.rect();
                        let x = vp.x(Point::new(x0, y0));
                        let y = vp.y(Point::new(x0, y1));
                        let w = (x1 - x0) * vp.scale;
                        let h = (y1 - y0) * vp.scale;
                        out.push_str(&format!(
                            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#dce9f7\" stroke=\"#9db8d9\" stroke-width=\"0.5\"/>\n",
                            num(x), num(y), num(w), num(h)
                        ));
                    }
                }
            }
            Layer::Udg => {
                for &(u, v) in scene.udg.edges() {
                    let (a, b) = (scene.udg.pt(u), scene.udg.pt(v));
                    out.push_str(&format!(
                        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#555555\" stroke-width=\"0.6\"/>\n",
                        num(vp.x(a)), num(vp.y(a)), num(vp.x(b)), num(vp.y(b))
                    ));
                }
                for i in 0..scene.udg.n() {
                    let p = scene.udg.pt(i);
                    out.push_str(&format!(
                        "<circle cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"#222222\"/>\n",
                        num(vp.x(p)),
                        num(vp.y(p))
                    ));
                }
            }
            Layer::Grid => {
                if let Some(map) = scene.map {
                    for &cell in map.cells.keys() {
                        for (di, dj) in [(1i64, 0i64), (0, 1)] {
                            let other = cell.offset(di, dj);
                            if map.is_active(other) {
                                let (a, b) = (cell.center(), other.center());
                                out.push_str(&format!(
                                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#e08020\" stroke-width=\"1.2\"/>\n",
                                    num(vp.x(a)), num(vp.y(a)), num(vp.x(b)), num(vp.y(b))
                                ));
                            }
                        }
                    }
                    for &cell in map.cells.keys() {
                        let p = cell.center();
                        out.push_str(&format!(
                            "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"#e08020\"/>\n",
                            num(vp.x(p)),
                            num(vp.y(p))
                        ));
                    }
                }
            }
            Layer::Portals => {
                if let Some(map) = scene.map {
                    // A portal is a maximal vertical run of active cells.
                    let mut by_col: std::collections::BTreeMap<i64, Vec<i64>> =
                        std::collections::BTreeMap::new();
                    for cell in map.cells.keys() {
                        by_col.entry(cell.i).or_default().push(cell.j);
                    }
                    for (i, mut js) in by_col {
                        js.sort_unstable();
                        let mut run_start = js[0];
                        let mut prev = js[0];
                        let emit = |lo: i64, hi: i64, out: &mut String| {
                            let a = CellCoord::new(i, lo).center();
                            let b = CellCoord::new(i, hi).center();
                            out.push_str(&format!(
                                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#3f9d42\" stroke-width=\"2.5\" stroke-linecap=\"round\"/>\n",
                                num(vp.x(a)), num(vp.y(a)), num(vp.x(b)), num(vp.y(b))
                            ));
                        };
                        for &j in &js[1..] {
                            if j != prev + 1 {
                                emit(run_start, prev, &mut out);
                                run_start = j;
                            }
                            prev = j;
                        }
                        emit(run_start, prev, &mut out);
                    }
                }
            }
            Layer::Path => {
                if let Some(route) = scene.route {
                    let pts: Vec<String> = route
                        .path
                        .iter()
                        .map(|&id| {
                            let idx = scene.udg.idx_of(id).expect("route node exists");
                            let p = scene.udg.pt(idx);
                            format!("{},{}", num(vp.x(p)), num(vp.y(p)))
                        })
                        .collect();
                    out.push_str(&format!(
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"#c2302a\" stroke-width=\"1.8\"/>\n",
                        pts.join(" ")
                    ));
                    for (k, &id) in route.path.iter().enumerate() {
                        let idx = scene.udg.idx_of(id).unwrap();
                        let p = scene.udg.pt(idx);
                        let r = if k == 0 || k == route.path.len() - 1 { "4" } else { "2.2" };
                        out.push_str(&format!(
                            "<circle cx=\"{}\" cy=\"{}\" r=\"{r}\" fill=\"#c2302a\"/>\n",
                            num(vp.x(p)),
                            num(vp.y(p))
                        ));
                    }
                }
            }
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::compute_active_cells;
    use crate::grid::{build_grid, BuildOptions};
    use crate::harness::gen::generate_instance;
    use crate::label::{run_labelling, LabelOptions};
    use crate::routing::Router;

    #[test]
    fn empty_layer_list_is_a_valid_svg() {
        let f = generate_instance(0, 10, &Default::default()).unwrap();
        let udg = f.to_udg().unwrap();
        let scene = Scene { udg: &udg, map: None, route: None };
        let svg = render_svg(&scene, &[]);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("<g"));
    }

    #[test]
    fn same_inputs_render_byte_identical() {
        let f = generate_instance(1, 30, &Default::default()).unwrap();
        let udg = f.to_udg().unwrap();
        let map = compute_active_cells(&udg);
        let scene = Scene { udg: &udg, map: Some(&map), route: None };
        let layers = [Layer::Cells, Layer::Udg, Layer::Grid, Layer::Portals];
        assert_eq!(render_svg(&scene, &layers), render_svg(&scene, &layers));
    }

    #[test]
    fn path_layer_draws_exactly_the_routed_hops() {
        let f = generate_instance(2, 40, &Default::default()).unwrap();
        let udg = f.to_udg().unwrap();
        let map = compute_active_cells(&udg);
        let build = build_grid(&udg, &map, &BuildOptions::default()).unwrap();
        let labelling = run_labelling(&build.vid_of_cell, &LabelOptions::default()).unwrap();
        let router = Router::new(&udg, &build, &labelling.labels);
        let (s, t) = (udg.id(0), udg.id(udg.n() - 1));
        let record = router.route(s, t).unwrap();

        let scene = Scene { udg: &udg, map: None, route: Some(&record) };
        let svg = render_svg(&scene, &[Layer::Path]);
        let vp = viewport(&udg);
        let expected: Vec<String> = record
            .path
            .iter()
            .map(|&id| {
                let p = udg.pt(udg.idx_of(id).unwrap());
                format!("{:.4},{:.4}", vp.x(p), vp.y(p))
            })
            .collect();
        let needle = format!("points=\"{}\"", expected.join(" "));
        assert!(svg.contains(&needle), "polyline must match the hop sequence");
    }

    #[test]
    fn layer_names_round_trip() {
        for name in ["udg", "grid", "cells", "portals", "path"] {
            let l: Layer = name.parse().unwrap();
            assert_eq!(l.to_string(), name);
        }
        assert!("bogus".parse::<Layer>().is_err());
    }
}
