//! `tetriblend` command line. Exit codes: 0 success, 1 usage error,
//! 2 data or solver error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tetriblend_core::{
    blend, load_obj, mesh_stats, morph_sequence, tetrise, validate_correspondence, write_obj, BlendFunction,
    BlendRequest, Energy, Error, EsOptions, TetrisationMethod, WeightPath,
};

use crate::bench::run_bench;
use crate::service;
use crate::session::{Session, SessionSpec};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tetriblend", version, about = "Blend corresponding triangle meshes as rigidly as possible")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Rest shape (OBJ).
    #[arg(long)]
    rest: PathBuf,
    /// Target shapes (OBJ), comma separated, same connectivity as the rest shape.
    #[arg(long, value_delimiter = ',', required = true)]
    targets: Vec<PathBuf>,
    /// Tetrisation: face, edge or vertex.
    #[arg(long, default_value = "vertex")]
    method: TetrisationMethod,
    /// File with one non-negative weight per tetrahedron.
    #[arg(long)]
    tet_weights: Option<PathBuf>,
    /// Model cache file, reused when it matches the inputs.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl ModelArgs {
    fn spec(&self) -> SessionSpec {
        SessionSpec {
            rest: self.rest.clone(),
            targets: self.targets.clone(),
            method: self.method,
            tet_weights: self.tet_weights.clone(),
            cache: self.cache.clone(),
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Energy: ET (translation invariant) or ES (rotation invariant).
    #[arg(long, default_value = "ET")]
    energy: Energy,
    /// Blend function: C (log-linear) or P (linear shear).
    #[arg(long = "blendfn", default_value = "C")]
    blend_fn: BlendFunction,
    /// Maximum ES iterations.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Relative ES energy change that stops iteration.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl SolveArgs {
    fn es_options(&self) -> EsOptions {
        EsOptions { max_iterations: self.iters, tol: self.tol }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the tetrahedral structure of a mesh.
    Tetrise {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value = "vertex")]
        method: TetrisationMethod,
        /// Output file (standard output when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Blend the targets with the given weights and write one OBJ.
    Blend {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solve: SolveArgs,
        /// One weight per target, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        weights: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write numbered OBJ frames along a straight path in weight space.
    Morph {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solve: SolveArgs,
        /// Start weights (all zero when omitted).
        #[arg(long, allow_hyphen_values = true)]
        from: Option<String>,
        /// End weights.
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check that targets correspond to the rest shape and print mesh statistics.
    Validate {
        #[arg(long)]
        rest: PathBuf,
        #[arg(long, value_delimiter = ',')]
        targets: Vec<PathBuf>,
    },
    /// Print initialisation time and runtime fps for every configuration.
    Bench {
        #[arg(long)]
        rest: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<PathBuf>,
        /// Blend weights (0.5 each when omitted).
        #[arg(long, allow_hyphen_values = true)]
        weights: Option<String>,
        /// Timed runtime iterations per cell.
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Also write the table as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the local HTTP service.
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 7878)]
        port: u16,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn parse_weights(text: &str, expected: usize) -> Result<Vec<f64>, Failure> {
    let weights = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Failure::Usage(format!("invalid weight {t:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if weights.len() != expected {
        return Err(Failure::Usage(format!("{} weights given for {expected} targets", weights.len())));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Failure::Usage("weights must be finite".into()));
    }
    Ok(weights)
}

fn io_error(path: &Path, source: std::io::Error) -> Failure {
    Failure::Data(Error::Io { path: path.to_path_buf(), source })
}

/// Thread cap from `TETRIBLEND_THREADS`, applied to the global rayon pool.
pub fn configure_threads() -> Option<usize> {
    let n = std::env::var("TETRIBLEND_THREADS").ok()?.trim().parse::<usize>().ok().filter(|&n| n > 0)?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("rayon pool already initialised");
    }
    Some(n)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Tetrise { mesh, method, out } => {
            let mesh = load_obj(&mesh)?;
            let structure = tetrise(&mesh, method)?;
            let positions = tetriblend_core::tetrisation::instantiate_ghosts(&structure, &mesh.vertices)?;
            let dump = structure.dump(&positions);
            match out {
                Some(path) => fs::write(&path, dump).map_err(|e| io_error(&path, e))?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    stdout.write_all(dump.as_bytes()).map_err(|e| io_error(Path::new("<stdout>"), e))?;
                }
            }
        }
        Command::Blend { model, solve, weights, out } => {
            let weights = parse_weights(&weights, model.targets.len())?;
            let session = Session::load(&model.spec())?;
            let request = BlendRequest {
                weights,
                energy: solve.energy,
                blend_fn: solve.blend_fn,
                es_options: solve.es_options(),
            };
            let (mesh, report) = blend(&session.model, &request)?;
            write_obj(&mesh, &out)?;
            eprintln!(
                "wrote {} (energy {:.6e}, {} iteration(s), converged {})",
                out.display(),
                report.final_energy,
                report.iterations,
                report.converged
            );
        }
        Command::Morph { model, solve, from, to, frames, out_dir } => {
            let m = model.targets.len();
            let to = parse_weights(&to, m)?;
            let from = match from {
                Some(text) => parse_weights(&text, m)?,
                None => vec![0.0; m],
            };
            if frames < 2 {
                return Err(Failure::Usage("--frames must be at least 2".into()));
            }
            let session = Session::load(&model.spec())?;
            let path = WeightPath::Segment { from, to };
            let meshes =
                morph_sequence(&session.model, frames, &path, solve.energy, solve.blend_fn, solve.es_options())?;
            fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
            for (k, mesh) in meshes.iter().enumerate() {
                write_obj(mesh, out_dir.join(format!("frame_{k:04}.obj")))?;
            }
            eprintln!("wrote {} frames to {}", meshes.len(), out_dir.display());
        }
        Command::Validate { rest, targets } => {
            let rest = load_obj(&rest)?;
            let targets = targets.iter().map(load_obj).collect::<Result<Vec<_>, _>>()?;
            let stats = mesh_stats(&rest);
            println!(
                "vertices {} faces {} shared edges {} boundary edges {} non-manifold edges {} shared vertices {}",
                rest.vertex_count(),
                rest.face_count(),
                stats.shared_edge_count,
                stats.boundary_edge_count,
                stats.nonmanifold_edge_count,
                stats.shared_vertex_count
            );
            let report = validate_correspondence(&rest, &targets);
            for issue in &report.issues {
                println!("{issue}");
            }
            if !report.is_ok() {
                return Err(Failure::Data(Error::Correspondence(report)));
            }
            println!("{} target(s) correspond", targets.len());
        }
        Command::Bench { rest, targets, weights, runs, iters, tol, json } => {
            let weights = match weights {
                Some(text) => parse_weights(&text, targets.len())?,
                None => vec![0.5; targets.len()],
            };
            let rest = load_obj(&rest)?;
            let targets = targets.iter().map(load_obj).collect::<Result<Vec<_>, _>>()?;
            let table =
                run_bench(&rest, &targets, &weights, runs.max(1), EsOptions { max_iterations: iters, tol })?;
            print!("{table}");
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&table).map_err(|e| Failure::Data(Error::InvalidInput(e.to_string())))?;
                fs::write(&path, text).map_err(|e| io_error(&path, e))?;
            }
        }
        Command::Serve { model, port } => {
            let threads = configure_threads();
            let session = Session::load(&model.spec())?;
            service::serve(session, port, threads).map_err(|e| io_error(Path::new("<socket>"), e))?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
