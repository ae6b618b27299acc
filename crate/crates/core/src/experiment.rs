//! End-to-end runs: configuration, noise injection and noise sweeps.

use crate::acoustic::{reconstruct_source, SourceReconstructionConfig};
use crate::current::{recover_current, recover_stream};
use crate::error::{MatmiError, Result};
use crate::fem;
use crate::field::{ScalarField, VectorField};
use crate::forward::{
    evaluate_phantom, forward_current, lorentz_source, simulate_wave, AcousticMedium,
    BoundaryRecord, Excitation, PhantomSpec, WaveConfig,
};
use crate::geometry::Ellipse;
use crate::inversion::{invert, InversionConfig, Measurement, ReconstructionReport};
use crate::mesh::{build_ellipse_mesh, Mesh};
use crate::sparse::SolverOptions;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

pub use crate::inversion::relative_error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    /// Semi-axes `(a, b)` of the ellipse `(x/a)² + (y/b)² < 1`.
    pub semi_axes: [f64; 2],
    /// Target edge length.
    pub h: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            semi_axes: [2.0, 1.0],
            h: 0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Invert the forward current directly.
    CurrentGiven,
    /// Simulate the acoustic record and recover the current from it first.
    FullChain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseTarget {
    Current,
    /// Boundary record; only meaningful for the full chain.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Relative levels in `[0, 1)`.
    pub levels: Vec<f64>,
    pub realizations: usize,
    pub target: NoiseTarget,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            levels: vec![0.0],
            realizations: 1,
            target: NoiseTarget::Current,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh: MeshSpec,
    pub phantom: PhantomSpec,
    #[serde(rename = "excitation")]
    pub excitations: Vec<Excitation>,
    pub medium: AcousticMedium,
    pub stage: Stage,
    pub wave: WaveConfig,
    pub acoustic: SourceReconstructionConfig,
    #[serde(rename = "inversion")]
    pub inversions: Vec<InversionConfig>,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Worker threads for the realizations; 0 uses all cores.
    pub jobs: usize,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let phantom = PhantomSpec::reference();
        let reference = crate::inversion::ReferenceRegion {
            width: phantom.guard_band,
            sigma0: phantom.sigma0,
        };
        Self {
            mesh: MeshSpec::default(),
            excitations: vec![Excitation::reference()],
            medium: AcousticMedium::default(),
            stage: Stage::CurrentGiven,
            wave: WaveConfig::default(),
            acoustic: SourceReconstructionConfig::default(),
            inversions: vec![InversionConfig {
                lower: phantom.lower,
                upper: phantom.upper,
                reference,
                ..InversionConfig::default()
            }],
            phantom,
            noise: NoiseSpec::default(),
            seed: 0,
            jobs: 1,
            solver: SolverOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| MatmiError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| MatmiError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MatmiError::Config(e.to_string()))
    }

    pub fn ellipse(&self) -> Result<Ellipse> {
        Ellipse::new(self.mesh.semi_axes[0], self.mesh.semi_axes[1])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MatmiError::Config(m));
        if !(self.mesh.h > 0.0) {
            return bad(format!("mesh size must be positive, got {}", self.mesh.h));
        }
        let e = self
            .ellipse()
            .map_err(|e| MatmiError::Config(e.to_string()))?;
        self.phantom
            .validate(&e)
            .map_err(|e| MatmiError::Config(e.to_string()))?;
        if self.excitations.is_empty() {
            return bad("at least one excitation is required".into());
        }
        for exc in &self.excitations {
            exc.validate()
                .map_err(|e| MatmiError::Config(e.to_string()))?;
        }
        self.medium
            .validate()
            .map_err(|e| MatmiError::Config(e.to_string()))?;
        if self.inversions.is_empty() {
            return bad("at least one inversion is required".into());
        }
        for inv in &self.inversions {
            inv.validate()
                .map_err(|e| MatmiError::Config(e.to_string()))?;
        }
        if self.noise.levels.is_empty() || self.noise.levels.iter().any(|l| !(0.0..1.0).contains(l))
        {
            return bad("noise levels must be non-empty and lie in [0, 1)".into());
        }
        if self.noise.realizations == 0 {
            return bad("realization count must be at least 1".into());
        }
        if self.noise.target == NoiseTarget::Record && self.stage != Stage::FullChain {
            return bad("record noise needs the full-chain stage".into());
        }
        Ok(())
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Root mean square of `|J|` over the domain.
fn rms(mesh: &Mesh, j: &[[f64; 2]]) -> f64 {
    fem::vector_l2_norm(mesh, j) / mesh.total_area().sqrt()
}

/// `J + level · rms(J) · G / √2` with `G` standard normal per component, so
/// the expected relative L2 perturbation equals `level`.
pub fn add_noise(
    mesh: &Mesh,
    j: &VectorField,
    level: f64,
    seed: u64,
    stream: u64,
) -> Result<VectorField> {
    j.check_mesh(mesh)?;
    if !(level >= 0.0 && level.is_finite()) {
        return Err(MatmiError::Parameter(format!(
            "noise level must be non-negative, got {level}"
        )));
    }
    if level == 0.0 {
        return Ok(j.clone());
    }
    let s = level * rms(mesh, &j.values) / std::f64::consts::SQRT_2;
    let mut r = rng(seed, stream);
    let values = j
        .values
        .iter()
        .map(|v| {
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut r), StandardNormal.sample(&mut r));
            [v[0] + s * a, v[1] + s * b]
        })
        .collect();
    Ok(VectorField::new(j.role, values))
}

/// `g + level · rms(g) · G` sample by sample.
pub fn add_record_noise(
    record: &BoundaryRecord,
    level: f64,
    seed: u64,
    stream: u64,
) -> BoundaryRecord {
    if level == 0.0 {
        return record.clone();
    }
    let n: usize = record.samples.iter().map(|s| s.len()).sum();
    let sq: f64 = record.samples.iter().flatten().map(|v| v * v).sum();
    let s = level * (sq / n.max(1) as f64).sqrt();
    let mut r = rng(seed, stream);
    let samples = record
        .samples
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    let g: f64 = StandardNormal.sample(&mut r);
                    v + s * g
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    BoundaryRecord {
        sensors: record.sensors.clone(),
        dt: record.dt,
        samples,
    }
}

/// Noise-free quantities shared by all realizations.
#[derive(Debug, Clone)]
pub struct Truth {
    pub mesh: Mesh,
    pub ellipse: Ellipse,
    pub sigma: ScalarField,
    /// Forward currents, one per excitation.
    pub currents: Vec<VectorField>,
    /// Boundary records for the full chain.
    pub records: Vec<BoundaryRecord>,
}

pub fn build_truth(cfg: &ExperimentConfig) -> Result<Truth> {
    let ellipse = cfg.ellipse()?;
    let mesh = build_ellipse_mesh(&ellipse, cfg.mesh.h)?;
    let sigma = evaluate_phantom(&cfg.phantom, &ellipse, &mesh)?;
    let mut currents = Vec::new();
    let mut records = Vec::new();
    for exc in &cfg.excitations {
        let (_, j) = forward_current(&mesh, &sigma, exc, &cfg.solver)?;
        if cfg.stage == Stage::FullChain {
            let f = lorentz_source(&mesh, &j, exc, &cfg.medium)?;
            records.push(simulate_wave(&mesh, &ellipse, &f, &cfg.medium, &cfg.wave)?.record);
        }
        currents.push(j);
    }
    Ok(Truth {
        mesh,
        ellipse,
        sigma,
        currents,
        records,
    })
}

/// Current recovered from a boundary record through the acoustic and
/// stream-function stages.
pub fn current_from_record(
    mesh: &Mesh,
    record: &BoundaryRecord,
    exc: &Excitation,
    medium: &AcousticMedium,
    acoustic: &SourceReconstructionConfig,
    opts: &SolverOptions,
) -> Result<VectorField> {
    let image = reconstruct_source(record, medium, acoustic)?;
    let f = image.to_mesh(mesh);
    let w = recover_stream(mesh, &f, exc, medium, opts)?;
    recover_current(mesh, &w)
}

/// Measured currents for one realization.
fn measurements(
    cfg: &ExperimentConfig,
    truth: &Truth,
    level: f64,
    stream: u64,
) -> Result<Vec<Measurement>> {
    cfg.excitations
        .iter()
        .enumerate()
        .map(|(k, exc)| {
            let sub = stream * cfg.excitations.len() as u64 + k as u64;
            let current = match (cfg.stage, cfg.noise.target) {
                (Stage::CurrentGiven, _) => {
                    add_noise(&truth.mesh, &truth.currents[k], level, cfg.seed, sub)?
                }
                (Stage::FullChain, NoiseTarget::Current) => {
                    let j = current_from_record(
                        &truth.mesh,
                        &truth.records[k],
                        exc,
                        &cfg.medium,
                        &cfg.acoustic,
                        &cfg.solver,
                    )?;
                    add_noise(&truth.mesh, &j, level, cfg.seed, sub)?
                }
                (Stage::FullChain, NoiseTarget::Record) => {
                    let rec = add_record_noise(&truth.records[k], level, cfg.seed, sub);
                    current_from_record(
                        &truth.mesh,
                        &rec,
                        exc,
                        &cfg.medium,
                        &cfg.acoustic,
                        &cfg.solver,
                    )?
                }
            };
            Ok(Measurement {
                excitation: exc.clone(),
                current,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub noise_level: f64,
    pub algorithm: String,
    /// Mean over the successful realizations.
    pub mean_error: f64,
    /// Sample standard deviation; zero for a single realization.
    pub std_error: f64,
    /// Per-realization errors, `None` where the run failed.
    pub errors: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

impl SweepResult {
    pub fn successes(&self) -> usize {
        self.errors.iter().flatten().count()
    }
}

fn summarize(
    level: f64,
    algorithm: String,
    outcomes: Vec<std::result::Result<f64, String>>,
) -> SweepResult {
    let errors: Vec<Option<f64>> = outcomes.iter().map(|o| o.as_ref().ok().copied()).collect();
    let failures = outcomes.into_iter().filter_map(|o| o.err()).collect();
    let ok: Vec<f64> = errors.iter().flatten().copied().collect();
    let n = ok.len();
    let mean = if n > 0 {
        ok.iter().sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    let std = if n > 1 {
        (ok.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    SweepResult {
        noise_level: level,
        algorithm,
        mean_error: mean,
        std_error: std,
        errors,
        failures,
    }
}

/// Label distinguishing several inversions of the same algorithm.
fn labels(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.inversions
        .iter()
        .enumerate()
        .map(|(k, inv)| {
            let tag = inv.algorithm.tag();
            if cfg
                .inversions
                .iter()
                .filter(|o| o.algorithm == inv.algorithm)
                .count()
                > 1
            {
                format!("{tag}-{k}")
            } else {
                tag.to_string()
            }
        })
        .collect()
}

/// Output of a run: per-(level, algorithm) statistics plus the first
/// realization's reconstructions and reports at each level.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub truth: Truth,
    pub sweep: Vec<SweepResult>,
    /// `(level, label, σ, report)` for realization 0.
    pub samples: Vec<(f64, String, ScalarField, ReconstructionReport)>,
}

type Realization = (
    Vec<std::result::Result<f64, String>>,
    Vec<Option<(ScalarField, ReconstructionReport)>>,
);

/// Runs every (level, realization) and every configured inversion. Failed
/// realizations are recorded and skipped; it is an error only when every
/// run failed.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let truth = build_truth(cfg)?;
    let labels = labels(cfg);
    let reps = cfg.noise.realizations;
    let jobs: Vec<(usize, usize)> = (0..cfg.noise.levels.len())
        .flat_map(|l| (0..reps).map(move |r| (l, r)))
        .collect();
    let run_one = |&(l, r): &(usize, usize)| -> Realization {
        let level = cfg.noise.levels[l];
        let stream = (l * reps + r) as u64;
        let data = match measurements(cfg, &truth, level, stream) {
            Ok(d) => d,
            Err(e) => {
                let msg = format!("level {level}, realization {r}: {e}");
                return (
                    vec![Err(msg); cfg.inversions.len()],
                    vec![None; cfg.inversions.len()],
                );
            }
        };
        let mut errs = Vec::new();
        let mut keep = Vec::new();
        for inv in &cfg.inversions {
            match invert(&truth.mesh, &data, inv, Some(&truth.sigma)) {
                Ok((s, rep)) => {
                    errs.push(Ok(rep.final_error.unwrap_or(f64::NAN)));
                    keep.push((r == 0).then_some((s, rep)));
                }
                Err(e) => {
                    errs.push(Err(format!(
                        "level {level}, realization {r}, {}: {e}",
                        inv.algorithm.tag()
                    )));
                    keep.push(None);
                }
            }
        }
        (errs, keep)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| MatmiError::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Realization> = pool.install(|| jobs.par_iter().map(run_one).collect());

    let mut sweep = Vec::new();
    let mut samples = Vec::new();
    for (l, &level) in cfg.noise.levels.iter().enumerate() {
        let block = &results[l * reps..(l + 1) * reps];
        for (k, label) in labels.iter().enumerate() {
            sweep.push(summarize(
                level,
                label.clone(),
                block.iter().map(|(e, _)| e[k].clone()).collect(),
            ));
            if let Some((s, rep)) = &block[0].1[k] {
                samples.push((level, label.clone(), s.clone(), rep.clone()));
            }
        }
    }
    if sweep.iter().all(|s| s.successes() == 0) {
        let first = sweep
            .iter()
            .flat_map(|s| s.failures.first())
            .next()
            .cloned()
            .unwrap_or_default();
        return Err(MatmiError::Data(format!(
            "every realization failed; first failure: {first}"
        )));
    }
    Ok(PipelineOutput {
        truth,
        sweep,
        samples,
    })
}

/// `noise_level,algorithm,mean_error,std_error,n` with 17 significant digits.
pub fn sweep_csv(sweep: &[SweepResult]) -> String {
    let mut out = String::from("noise_level,algorithm,mean_error,std_error,n\n");
    for s in sweep {
        out.push_str(&format!(
            "{:.16e},{},{:.16e},{:.16e},{}\n",
            s.noise_level,
            s.algorithm,
            s.mean_error,
            s.std_error,
            s.successes()
        ));
    }
    out
}

/// Writes the mesh, the true σ, one reconstruction and report per level and
/// algorithm, `sweep.csv`, `sweep.json` and `run.json` into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, out: &PipelineOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(dir.join(name))?))
    };
    out.truth.mesh.write(create("mesh.txt")?)?;
    out.truth.sigma.write(create("sigma_true.txt")?)?;
    for (level, label, sigma, report) in &out.samples {
        let stem = format!("{label}_noise{level}");
        sigma.write(create(&format!("sigma_{stem}.txt"))?)?;
        fs::write(dir.join(format!("report_{stem}.json")), to_json(report)?)?;
    }
    fs::write(dir.join("sweep.csv"), sweep_csv(&out.sweep))?;
    fs::write(dir.join("sweep.json"), to_json(&out.sweep)?)?;
    fs::write(
        dir.join("run.json"),
        to_json(&serde_json::json!({ "seed": cfg.seed, "config": cfg }))?,
    )?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| MatmiError::Format(e.to_string()))
}
