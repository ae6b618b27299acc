//! `matmi` command-line driver.
//!
//! Exit codes: 0 on success, 2 for configuration, parameter or input format
//! errors, 3 when a solver fails or an inversion diverges, 1 otherwise.

use clap::{Args, Parser, Subcommand, ValueEnum};
use matmi_core::acoustic::{reconstruct_source, SourceImage};
use matmi_core::current::{recover_current, recover_stream};
use matmi_core::experiment::{run_pipeline, sweep_csv, write_outputs, ExperimentConfig};
use matmi_core::field::{ScalarField, ScalarRole, VectorField};
use matmi_core::forward::{
    current_density, evaluate_phantom, lorentz_source, simulate_wave, solve_potential,
    BoundaryRecord,
};
use matmi_core::inversion::{invert, Algorithm, Measurement};
use matmi_core::mesh::{build_ellipse_mesh, Mesh};
use matmi_core::MatmiError;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "matmi",
    version,
    about = "Magnetoacoustic tomography with magnetic induction: simulation and inversion"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured worker count (0 uses all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward chain: mesh, conductivity, currents, sources and boundary records.
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstructs the acoustic source from a boundary record.
    RecoverSource {
        #[arg(long)]
        record: PathBuf,
        /// Field file on the evaluation grid; grid metadata goes to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        omega_max: Option<f64>,
    },
    /// Recovers the current density from a source field.
    RecoverCurrent {
        /// Source on the mesh nodes, or on an evaluation grid with a `.json` sidecar.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Mesh file; the configured ellipse is meshed when omitted.
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Index of the configured excitation that produced the source.
        #[arg(long, default_value_t = 0)]
        excitation: usize,
    },
    /// Reconstructs the conductivity from measured currents.
    Invert {
        #[arg(long, value_enum)]
        algorithm: AlgorithmArg,
        /// Current field files, one per configured excitation in order.
        #[arg(long, required = true, num_args = 1..)]
        current: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// True conductivity; fills `final_error` in the report.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Noise sweep over the configured levels and inversions.
    SweepNoise {
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulation followed by the noise sweep, all in one directory.
    RunAll {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Oc,
    Fp,
    Of,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Oc => Algorithm::OptimalControl,
            AlgorithmArg::Fp => Algorithm::FixedPoint,
            AlgorithmArg::Of => Algorithm::OrthogonalField,
        }
    }
}

type Result<T> = std::result::Result<T, MatmiError>;

fn exit_code(e: &MatmiError) -> u8 {
    match e {
        MatmiError::Config(_)
        | MatmiError::Parameter(_)
        | MatmiError::Format(_)
        | MatmiError::Usage(_) => 2,
        MatmiError::Solver { .. } | MatmiError::StepSize(_) => 3,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| MatmiError::Usage(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| MatmiError::Format(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn mesh_for(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<Mesh> {
    match path {
        Some(p) => Mesh::read(open(p)?),
        None => build_ellipse_mesh(&cfg.ellipse()?, cfg.mesh.h),
    }
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let ellipse = cfg.ellipse()?;
    let mesh = build_ellipse_mesh(&ellipse, cfg.mesh.h)?;
    let sigma = evaluate_phantom(&cfg.phantom, &ellipse, &mesh)?;
    fs::create_dir_all(out)?;
    mesh.write(create(&out.join("mesh.txt"))?)?;
    sigma.write(create(&out.join("sigma.txt"))?)?;
    for (k, exc) in cfg.excitations.iter().enumerate() {
        let v = solve_potential(&mesh, &sigma, exc, &cfg.solver)?;
        let j = current_density(&mesh, &sigma, &v, exc)?;
        let f = lorentz_source(&mesh, &j, exc, &cfg.medium)?;
        let wave = simulate_wave(&mesh, &ellipse, &f, &cfg.medium, &cfg.wave)?;
        v.write(create(&out.join(format!("potential_{k}.txt")))?)?;
        j.write(create(&out.join(format!("current_{k}.txt")))?)?;
        f.write(create(&out.join(format!("source_{k}.txt")))?)?;
        wave.record
            .write(create(&out.join(format!("record_{k}.txt")))?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Simulate { out } => simulate(&cfg, &out),
        Command::RecoverSource {
            record,
            out,
            omega_max,
        } => {
            let rec = BoundaryRecord::read(open(&record)?)?;
            let mut acoustic = cfg.acoustic.clone();
            if omega_max.is_some() {
                acoustic.omega_max = omega_max;
            }
            let image = reconstruct_source(&rec, &cfg.medium, &acoustic)?;
            ScalarField::new(ScalarRole::Source, image.values.clone()).write(create(&out)?)?;
            let meta = serde_json::json!({
                "grid": image.grid,
                "inversion_constant": image.inversion_constant,
                "omega_max": image.omega_max,
                "d_omega": image.d_omega,
                "rayleigh_cell": image.rayleigh_cell(&cfg.medium),
            });
            write_json(&sidecar(&out), &meta)
        }
        Command::RecoverCurrent {
            source,
            out,
            mesh,
            excitation,
        } => {
            let mesh = mesh_for(&cfg, mesh.as_deref())?;
            let exc = cfg.excitations.get(excitation).ok_or_else(|| {
                MatmiError::Usage(format!("no excitation {excitation} in the configuration"))
            })?;
            let raw = ScalarField::read(open(&source)?)?;
            let f = if raw.values.len() == mesh.num_nodes() {
                raw
            } else {
                let meta = fs::read_to_string(sidecar(&source)).map_err(|_| {
                    MatmiError::Usage(format!(
                        "{} does not match the mesh and has no grid sidecar",
                        source.display()
                    ))
                })?;
                let v: serde_json::Value =
                    serde_json::from_str(&meta).map_err(|e| MatmiError::Format(e.to_string()))?;
                let grid = serde_json::from_value(v["grid"].clone())
                    .map_err(|e| MatmiError::Format(e.to_string()))?;
                let image = SourceImage {
                    grid,
                    values: raw.values,
                    inversion_constant: v["inversion_constant"].as_f64().unwrap_or(f64::NAN),
                    omega_max: v["omega_max"].as_f64().unwrap_or(f64::NAN),
                    d_omega: v["d_omega"].as_f64().unwrap_or(f64::NAN),
                };
                if image.values.len() != image.grid.nx * image.grid.ny {
                    return Err(MatmiError::Format(
                        "source field does not match its grid".into(),
                    ));
                }
                image.to_mesh(&mesh)
            };
            let w = recover_stream(&mesh, &f, exc, &cfg.medium, &cfg.solver)?;
            recover_current(&mesh, &w)?.write(create(&out)?)
        }
        Command::Invert {
            algorithm,
            current,
            out,
            report,
            mesh,
            truth,
        } => {
            let mesh = mesh_for(&cfg, mesh.as_deref())?;
            let algorithm = Algorithm::from(algorithm);
            let mut inv = cfg
                .inversions
                .iter()
                .find(|i| i.algorithm == algorithm)
                .unwrap_or(&cfg.inversions[0])
                .clone();
            inv.algorithm = algorithm;
            if current.len() > cfg.excitations.len() {
                return Err(MatmiError::Usage(format!(
                    "{} currents given but only {} excitations configured",
                    current.len(),
                    cfg.excitations.len()
                )));
            }
            let data = current
                .iter()
                .zip(&cfg.excitations)
                .map(|(p, exc)| {
                    let j = VectorField::read(open(p)?)?;
                    j.check_mesh(&mesh)?;
                    Ok(Measurement {
                        excitation: exc.clone(),
                        current: j,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let truth = truth.map(|p| ScalarField::read(open(&p)?)).transpose()?;
            let (sigma, rep) = invert(&mesh, &data, &inv, truth.as_ref())?;
            sigma.write(create(&out)?)?;
            match report {
                Some(p) => write_json(&p, &rep),
                None => Ok(()),
            }
        }
        Command::SweepNoise { out } => {
            let result = run_pipeline(&cfg)?;
            write_outputs(&cfg, &result, &out)?;
            print!("{}", sweep_csv(&result.sweep));
            Ok(())
        }
        Command::RunAll { out } => {
            simulate(&cfg, &out)?;
            let result = run_pipeline(&cfg)?;
            write_outputs(&cfg, &result, &out)?;
            print!("{}", sweep_csv(&result.sweep));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
