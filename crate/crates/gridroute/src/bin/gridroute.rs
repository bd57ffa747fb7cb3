//! Command-line front end: generate instances, build the grid and its
//! labels, route pairs, verify, render, and print stats.
//!
//! Exit codes: 0 on success, 1 on a verification violation or runtime
//! failure, 2 on a usage error (bad flags, malformed input files,
//! unknown ids or layer names).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use gridroute::harness::{
    check_instance, generate_instance, lemma_suite, render_svg, sample_pairs, stretch_report,
    verify_chain, BuildFile, HarnessError, InstanceFile, Layer, Scene, ShapeParams,
    GEODESIC_CELL_CAP,
};
use gridroute::pipeline::{Mode, Pipeline, PipelineOptions};
use gridroute::portal::compute_portals;
use gridroute::routing::RoutingError;

#[derive(Parser)]
#[command(name = "gridroute", version, about = "Grid-based routing over unit-disk graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random accepted instance and write it as JSON.
    Generate {
        /// Number of nodes.
        #[arg(long)]
        n: usize,
        /// RNG seed; the only source of randomness.
        #[arg(long)]
        seed: u64,
        /// Output path for the instance JSON.
        #[arg(long)]
        out: PathBuf,
        /// Walk steps for the sampling region; derived from n when absent.
        #[arg(long)]
        walk_steps: Option<usize>,
        /// Radius of each disk along the walk.
        #[arg(long, default_value_t = 1.5)]
        disk_radius: f64,
        /// Target points per unit area.
        #[arg(long, default_value_t = 6.0)]
        density: f64,
        /// Lay disks on a ring, forcing an interior cavity.
        #[arg(long)]
        cavity: bool,
    },
    /// Build the grid, representatives, and labels; write the artifact.
    Build {
        /// Instance JSON path.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output path for the build JSON.
        #[arg(long)]
        out: PathBuf,
        /// Local communication mode: congest or broadcast.
        #[arg(long, default_value = "congest")]
        mode: String,
    },
    /// Route one pair and print the hop sequence.
    Route {
        /// Instance JSON path.
        #[arg(long = "in")]
        input: PathBuf,
        /// Source node id.
        #[arg(long)]
        src: u64,
        /// Target node id.
        #[arg(long)]
        dst: u64,
        /// Optional path to write the route trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the verification suite; exit 1 on any violation.
    Verify {
        /// Instance JSON path.
        #[arg(long = "in")]
        input: PathBuf,
        /// Number of random pairs to route.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        /// Seed for pair sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also check the distance chain (small instances only).
        #[arg(long)]
        chain: bool,
    },
    /// Render the instance as a layered SVG.
    Render {
        /// Instance JSON path.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated layers: udg,grid,cells,portals,path.
        #[arg(long, value_delimiter = ',')]
        layers: Vec<String>,
    },
    /// Print instance and pipeline statistics.
    Stats {
        /// Instance JSON path.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Run(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> CliError {
        match e {
            HarnessError::BadInstance(_) => CliError::Usage(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

impl From<RoutingError> for CliError {
    fn from(e: RoutingError) -> CliError {
        match e {
            RoutingError::UnknownNode { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

fn read_instance(path: &Path) -> Result<InstanceFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(InstanceFile::from_json(&text)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn build_pipeline(inst: &InstanceFile, mode: Mode) -> Result<Pipeline, CliError> {
    let udg = inst.to_udg()?;
    Pipeline::run(udg, &PipelineOptions { mode, trace: false })
        .map_err(|e| CliError::Run(e.to_string()))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.cmd {
        Cmd::Generate { n, seed, out, walk_steps, disk_radius, density, cavity } => {
            let params = ShapeParams { disk_radius, density, walk_steps, cavity, ..ShapeParams::default() };
            let inst = generate_instance(seed, n, &params)?;
            write_file(&out, &inst.to_json())?;
            println!("wrote {} ({} nodes, seed {seed})", out.display(), inst.nodes.len());
            Ok(true)
        }
        Cmd::Build { input, out, mode } => {
            let mode = Mode::from_str(&mode).map_err(CliError::Usage)?;
            let inst = read_instance(&input)?;
            let pipe = build_pipeline(&inst, mode)?;
            let file = BuildFile::from_pipeline(&inst, &pipe, mode);
            write_file(&out, &file.to_json())?;
            println!(
                "wrote {} ({} cells, mode {mode})",
                out.display(),
                file.cells.len()
            );
            Ok(true)
        }
        Cmd::Route { input, src, dst, trace } => {
            let inst = read_instance(&input)?;
            let pipe = build_pipeline(&inst, Mode::Congest)?;
            let record = pipe.router().route(src, dst)?;
            println!("hops: {}", record.path.len() - 1);
            let ids: Vec<String> = record.path.iter().map(|id| id.to_string()).collect();
            println!("path: {}", ids.join(" "));
            if let Some(path) = trace {
                let cells: Vec<[i64; 2]> =
                    record.grid_cells.iter().map(|c| [c.i, c.j]).collect();
                let json = serde_json::json!({
                    "src": src,
                    "dst": dst,
                    "path": record.path,
                    "grid_cells": cells,
                });
                let mut text = serde_json::to_string_pretty(&json).expect("trace serializes");
                text.push('\n');
                write_file(&path, &text)?;
                println!("trace: {}", path.display());
            }
            Ok(true)
        }
        Cmd::Verify { input, pairs, seed, chain } => {
            let inst = read_instance(&input)?;
            let udg = inst.to_udg()?;
            let checks = check_instance(&udg);
            println!(
                "instance: connected={} hole_free={} portal_tree={}",
                checks.connected, checks.hole_free, checks.portal_tree
            );
            if !checks.passed() {
                println!("result: FAIL");
                return Ok(false);
            }
            let pipe = build_pipeline(&inst, Mode::Congest)?;
            let mut ok = true;

            let lemmas = lemma_suite(&pipe.udg, &pipe.build);
            println!(
                "lemmas: nodes={} edge_paths={} segment_pairs={} candidacies={} violations={}",
                lemmas.nodes_checked,
                lemmas.edge_paths_checked,
                lemmas.segment_pairs_checked,
                lemmas.candidacies_checked,
                lemmas.violations.len()
            );
            for v in &lemmas.violations {
                println!("  lemma violation: {v:?}");
                ok = false;
            }

            let report = stretch_report(
                &pipe.udg,
                &pipe.build,
                &pipe.labelling.labels,
                &pipe.labelling,
                pairs,
                seed,
            )?;
            let mut bound_violations = 0usize;
            for rec in &report.pairs {
                if rec.stretch < 1.0 {
                    bound_violations += 1;
                } else if !rec.adjacent {
                    let hops = rec.routed_hops as f64;
                    if hops > 36.0 * rec.dist_g || hops > 22.0 * rec.dist_g + 14.0 {
                        bound_violations += 1;
                    }
                }
            }
            println!(
                "stretch: pairs={} max={:.4} mean={:.4} p99={:.4} bound_violations={}",
                report.pairs.len(),
                report.aggregates.max,
                report.aggregates.mean,
                report.aggregates.p99,
                bound_violations
            );
            if bound_violations > 0 {
                ok = false;
            }

            if chain {
                let active_cells = pipe.build.cells.len();
                if active_cells > GEODESIC_CELL_CAP {
                    println!(
                        "chain: skipped ({active_cells} active cells > cap {GEODESIC_CELL_CAP})"
                    );
                } else {
                    let chain_pairs = sample_pairs(&pipe.udg, pairs, seed);
                    let report = verify_chain(
                        &pipe.udg,
                        &pipe.build,
                        &pipe.labelling.labels,
                        &chain_pairs,
                    )?;
                    println!(
                        "chain: pairs={} skipped_adjacent={} violations={}",
                        report.pairs_checked,
                        report.skipped_adjacent,
                        report.violations.len()
                    );
                    for v in &report.violations {
                        println!("  chain violation: {v:?}");
                        ok = false;
                    }
                }
            }

            println!("result: {}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
        Cmd::Render { input, out, layers } => {
            let mut parsed = Vec::with_capacity(layers.len());
            for name in &layers {
                let layer = Layer::from_str(name)
                    .map_err(|_| CliError::Usage(format!("unknown layer: {name}")))?;
                parsed.push(layer);
            }
            let inst = read_instance(&input)?;
            let pipe = build_pipeline(&inst, Mode::Congest)?;
            let route = if parsed.contains(&Layer::Path) {
                let s = *pipe.udg.ids().iter().min().expect("instance is non-empty");
                let t = *pipe.udg.ids().iter().max().expect("instance is non-empty");
                Some(pipe.router().route(s, t)?)
            } else {
                None
            };
            let scene = Scene {
                udg: &pipe.udg,
                map: Some(&pipe.map),
                route: route.as_ref(),
            };
            write_file(&out, &render_svg(&scene, &parsed))?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Cmd::Stats { input } => {
            let inst = read_instance(&input)?;
            let pipe = build_pipeline(&inst, Mode::Congest)?;
            let active: std::collections::BTreeSet<_> =
                pipe.build.vid_of_cell.keys().cloned().collect();
            let portals = compute_portals(&active);
            let max_load = pipe
                .build
                .cells_of_rep
                .values()
                .map(|cells| cells.len())
                .max()
                .unwrap_or(0);
            let labelling_total: u64 =
                pipe.labelling.stage_rounds.iter().map(|&(_, r)| r).sum();
            println!("nodes: {}", pipe.udg.n());
            println!("edges: {}", pipe.udg.edges().len());
            println!("active cells: {}", pipe.build.cells.len());
            println!("grid edges: {}", pipe.build.edge_paths.len());
            println!("representatives: {}", pipe.build.cells_of_rep.len());
            println!("max cells per representative: {max_load}");
            println!("portals: {}", portals.len());
            println!("election rounds: {}", pipe.build.election_comm_rounds);
            println!("path rounds: {}", pipe.build.path_comm_rounds);
            let stages: Vec<String> = pipe
                .labelling
                .stage_rounds
                .iter()
                .map(|&(stage, r)| format!("{stage}={r}"))
                .collect();
            println!("labelling rounds: {labelling_total} ({})", stages.join(" "));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
