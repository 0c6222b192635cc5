//! Command-line front end for scenario files.
//!
//! Exit codes: 0 on success, 1 when the configuration or a check is
//! rejected, 2 on numerical failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shapeopt::mesh::io::{write_mesh, write_vtk};
use shapeopt::mesh::{discrete_mean_curvature, MeshLevel, SimplicialMeshHierarchy};
use shapeopt::optimizer::{write_history_csv, Termination};
use shapeopt::scenario::{self, ScenarioConfig};
use shapeopt::Error;

#[derive(Debug, Parser)]
#[command(
    name = "shapeopt",
    version,
    about = "Multigrid shape optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Directory for all output files; created if missing.
    #[arg(long, short, default_value = "out")]
    output: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare assembled shape derivatives with finite differences.
    CheckGradient(Common),
    /// Run the optimization loop.
    Optimize(Common),
    /// Largest interface curvature per refinement level.
    CurvatureStudy(Common),
    /// Multigrid-preconditioned CG iteration counts across levels.
    MgBench(Common),
}

enum Failure {
    Rejected(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidInput(_) | Error::Parse { .. } | Error::Io(_) => {
                Failure::Rejected(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Rejected(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn vtk(level: &MeshLevel, dir: &Path, name: &str) -> Outcome {
    let curvature = discrete_mean_curvature(level)?.to_nodal(level.num_vertices());
    write_vtk(level, &[("curvature", &curvature)], create(dir, name)?)?;
    Ok(())
}

fn check_gradient(cfg: &ScenarioConfig, dir: &Path) -> Outcome {
    let check = scenario::check_gradient(cfg)?;
    let mut csv = create(dir, "gradient_check.csv")?;
    writeln!(csv, "term,direction,predicted,order,passed")?;
    println!(
        "{:>4} {:>4} {:>14} {:>8}  result",
        "term", "dir", "b(V)", "order"
    );
    for row in &check.rows {
        let r = &row.report;
        let order = r.order.map_or("-".to_string(), |o| format!("{o:.3}"));
        println!(
            "{:>4} {:>4} {:>14.6e} {:>8}  {}",
            format!("j{}", row.term),
            row.direction,
            r.predicted,
            order,
            if r.passed { "ok" } else { "FAILED" }
        );
        writeln!(
            csv,
            "{},{},{:e},{},{}",
            row.term, row.direction, r.predicted, order, r.passed
        )?;
    }
    csv.flush()?;
    if check.rows.is_empty() {
        println!("no active objective terms");
    }
    if check.passed() {
        Ok(())
    } else {
        Err(Failure::Rejected(format!(
            "observed Taylor order below {}",
            cfg.check.min_order
        )))
    }
}

fn optimize(cfg: &ScenarioConfig, dir: &Path) -> Outcome {
    cfg.require_hierarchy()?;
    vtk(cfg.build_mesh()?.finest(), dir, "initial.vtk")?;
    let mut io_error = None;
    let mut observer = |iteration: usize, mesh: &SimplicialMeshHierarchy| {
        if cfg.output.vtk_every_iteration && io_error.is_none() {
            if let Err(e) = vtk(mesh.finest(), dir, &format!("iter_{iteration:04}.vtk")) {
                io_error = Some(e);
            }
        }
    };
    let result = scenario::optimize(cfg, Some(&mut observer))?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let mut history = create(dir, "history.csv")?;
    write_history_csv(&result.history, &mut history)?;
    history.flush()?;
    let mut mesh = create(dir, "final.mesh")?;
    write_mesh(result.mesh.finest(), &mut mesh)?;
    mesh.flush()?;
    vtk(result.mesh.finest(), dir, "final.vtk")?;
    for r in &result.history {
        println!(
            "{:>4}  J {:.10e}  gs {:.4e}  step {:.3e}",
            r.iteration,
            r.values.total(),
            r.gs_norm,
            r.step_scale
        );
    }
    match result.termination {
        Termination::Converged => println!("converged"),
        Termination::MaxIterations => println!("stopped at the iteration limit"),
        Termination::MeshValidity(msg) => {
            return Err(Failure::Numerical(format!("mesh-validity failure: {msg}")))
        }
        Termination::LineSearch => {
            return Err(Failure::Numerical(
                "line search found no sufficient decrease".into(),
            ));
        }
    }
    Ok(())
}

fn curvature_study(cfg: &ScenarioConfig, dir: &Path) -> Outcome {
    let study = scenario::curvature_study(cfg)?;
    let mut csv = create(dir, "curvature.csv")?;
    writeln!(csv, "level,h,max_curvature")?;
    println!("{:>5} {:>12} {:>14}", "level", "h", "max|kappa|");
    for (l, h, k) in &study.rows {
        println!("{l:>5} {h:>12.5e} {k:>14.6e}");
        writeln!(csv, "{l},{h:e},{k:e}")?;
    }
    csv.flush()?;
    match study.slope {
        Some(s) => println!("log-log slope {s:.4}"),
        None => println!("log-log slope needs at least two levels"),
    }
    Ok(())
}

fn mg_bench(cfg: &ScenarioConfig, dir: &Path) -> Outcome {
    let rows = scenario::mg_bench(cfg)?;
    let mut csv = create(dir, "mg_bench.csv")?;
    writeln!(csv, "levels,free_dofs,iterations")?;
    println!("{:>6} {:>10} {:>10}", "levels", "dofs", "iterations");
    for r in &rows {
        println!("{:>6} {:>10} {:>10}", r.levels, r.free_dofs, r.iterations);
        writeln!(csv, "{},{},{}", r.levels, r.free_dofs, r.iterations)?;
    }
    csv.flush()?;
    let (lo, hi) = rows.iter().fold((usize::MAX, 0), |(lo, hi), r| {
        (lo.min(r.iterations), hi.max(r.iterations))
    });
    println!("iteration spread {}", hi - lo);
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let (common, command): (&Common, fn(&ScenarioConfig, &Path) -> Outcome) = match &cli.command {
        Command::CheckGradient(c) => (c, check_gradient),
        Command::Optimize(c) => (c, optimize),
        Command::CurvatureStudy(c) => (c, curvature_study),
        Command::MgBench(c) => (c, mg_bench),
    };
    let cfg = ScenarioConfig::load(&common.config)?;
    fs::create_dir_all(&common.output)?;
    command(&cfg, &common.output)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
