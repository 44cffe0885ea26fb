//! End-to-end runs over a dataset: model construction, TTA for every
//! sample, metrics, and deterministic on-disk artifacts with a manifest.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{load_dataset, DatasetError, Sample};
use crate::metrics::{
    evaluate, mare_tta, mere_histogram, mere_tta, EvaluatedSample, Histogram, MetricFlags, MetricsError, MetricsReport,
};
use crate::sampler::RotationStream;
use crate::sphere::{build_map, render_svg, write_seeds_csv, SphereError, SphereOptions};
use crate::surrogate::{
    equivariant_oracle, ExternalModel, ExternalModelConfig, Model, ModelError, OracleParams,
    Predictor,
};
use crate::tensor::{von_mises_path, Rotation3, TensorPath};
use crate::tta::{
    compensated_sum, numerics_audit, prefix_result, run_tta_with_rotations, AuditReport, DivisorMode, TtaConfig,
    TtaError, TtaResult,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("sample `{sample}`: {source}")]
    Tta {
        sample: String,
        #[source]
        source: TtaError,
    },
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit status: 2 configuration, 3 data, 4 external model.
    pub fn exit_code(&self) -> i32 {
        fn model_code(e: &ModelError) -> i32 {
            match e {
                ModelError::External(_) | ModelError::LengthMismatch { .. } => 4,
                ModelError::InvalidParams(_) => 2,
                ModelError::InvalidInput(_) => 3,
            }
        }
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Dataset(DatasetError::InvalidSettings(_)) => 2,
            ExperimentError::Dataset(_) | ExperimentError::Metrics(_) | ExperimentError::Io { .. } => 3,
            ExperimentError::Model(e) => model_code(e),
            ExperimentError::Tta { source, .. } => match source {
                TtaError::Model { source, .. } => model_code(source),
                TtaError::InvalidConfig(_) | TtaError::VerbatimWithoutRotations => 2,
                _ => 3,
            },
            ExperimentError::Sphere(SphereError::Io(_)) => 3,
            ExperimentError::Sphere(_) => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

/// `equivariant`, `noisy` or `external:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    #[default]
    Equivariant,
    Noisy,
    External(String),
}

impl FromStr for ModelSpec {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equivariant" => Ok(ModelSpec::Equivariant),
            "noisy" => Ok(ModelSpec::Noisy),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(ModelSpec::External(cmd.trim().to_owned())),
                _ => Err(ExperimentError::Config(format!(
                    "unknown model `{s}` (expected equivariant, noisy or external:<command>)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = ExperimentError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Equivariant => f.write_str("equivariant"),
            ModelSpec::Noisy => f.write_str("noisy"),
            ModelSpec::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

/// Noise amplitude of the noisy oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    /// Fraction of the mean von Mises stress of the noise-free model over the
    /// whole dataset.
    Relative(f64),
    /// MPa.
    Absolute(f64),
    /// Amplitude proportional to the noise-free von Mises stress of each
    /// step; the value is the factor.
    Proportional(f64),
}

impl Default for NoiseLevel {
    fn default() -> Self {
        NoiseLevel::Relative(0.05)
    }
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.00001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Parameters of the built-in oracles used as the model under test.
    pub oracle: OracleParams,
    pub noise: NoiseLevel,
    pub external_timeout_ms: u64,
    pub external_workers: usize,
    pub seed: u64,
    pub n_rotations: usize,
    pub include_identity: bool,
    pub divisor: DivisorMode,
    pub sd_include_identity: bool,
    pub metrics: MetricFlags,
    pub dataset: PathBuf,
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub bin_width: f64,
    pub sphere: Option<SphereOptions>,
    /// Rotation counts for sweeps.
    pub sweep: Vec<usize>,
    pub repeats: usize,
    /// Rotation count of the final column of the repeats table.
    pub repeats_large_n: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelSpec::Equivariant,
            oracle: OracleParams::default(),
            noise: NoiseLevel::default(),
            external_timeout_ms: 30_000,
            external_workers: 4,
            seed: 0,
            n_rotations: 200,
            include_identity: true,
            divisor: DivisorMode::Count,
            sd_include_identity: false,
            metrics: MetricFlags::default(),
            dataset: PathBuf::new(),
            out: PathBuf::from("out"),
            bin_width: DEFAULT_BIN_WIDTH,
            sphere: None,
            sweep: vec![0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000],
            repeats: 5,
            repeats_large_n: 2000,
        }
    }
}

impl ExperimentConfig {
    /// Reads either a bare configuration or a run manifest.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(format!("config: {e}")))?;
        let value = match value.get("config") {
            Some(inner) if value.get("outputs").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| ExperimentError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn tta(&self) -> TtaConfig {
        self.tta_with(self.seed, self.n_rotations)
    }

    pub fn tta_with(&self, seed: u64, n_rotations: usize) -> TtaConfig {
        TtaConfig {
            n_rotations,
            seed,
            include_identity: self.include_identity,
            mean_divisor_mode: self.divisor,
            sd_include_identity: self.sd_include_identity,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.dataset.as_os_str().is_empty() {
            return Err(ExperimentError::Config("no dataset given".into()));
        }
        if !self.dataset.is_file() {
            return Err(ExperimentError::Config(format!("dataset {} does not exist", self.dataset.display())));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(ExperimentError::Config(format!("bin width must be positive, got {}", self.bin_width)));
        }
        if !(self.metrics.eps_div > 0.0) {
            return Err(ExperimentError::Config("eps_div must be positive".into()));
        }
        self.oracle.validate()?;
        match self.noise {
            NoiseLevel::Relative(v) | NoiseLevel::Absolute(v) | NoiseLevel::Proportional(v) if !(v >= 0.0 && v.is_finite()) => {
                return Err(ExperimentError::Config(format!("noise level must be >= 0, got {v}")));
            }
            _ => {}
        }
        if let Some(s) = &self.sphere {
            if s.width == 0 || s.height == 0 || !(s.radius > 0.0) {
                return Err(ExperimentError::Config("sphere grid and radius must be positive".into()));
            }
        }
        self.tta().validate().map_err(|e| ExperimentError::Config(e.to_string()))
    }
}

/// Noise amplitude in MPa for `noise` on this dataset.
pub fn resolve_noise_amp(noise: NoiseLevel, params: &OracleParams, dataset: &[Sample]) -> f64 {
    match noise {
        NoiseLevel::Absolute(v) => v,
        NoiseLevel::Proportional(_) => 0.0,
        NoiseLevel::Relative(r) => {
            let per_sample: Vec<(f64, usize)> = dataset
                .par_iter()
                .map(|s| {
                    let vm = von_mises_path(&equivariant_oracle(params, &s.model_input()).stress);
                    (compensated_sum(vm.iter().copied()), vm.len())
                })
                .collect();
            let steps: usize = per_sample.iter().map(|x| x.1).sum();
            r * compensated_sum(per_sample.iter().map(|x| x.0)) / steps as f64
        }
    }
}

/// The model described by `cfg`, and the oracle parameters actually used.
pub fn build_model(cfg: &ExperimentConfig, dataset: &[Sample]) -> Result<(Model, OracleParams), ExperimentError> {
    cfg.oracle.validate()?;
    Ok(match &cfg.model {
        ModelSpec::Equivariant => (Model::Equivariant(cfg.oracle), cfg.oracle),
        ModelSpec::Noisy => {
            let mut p = cfg.oracle;
            p.noise_amp = resolve_noise_amp(cfg.noise, &cfg.oracle, dataset);
            if let NoiseLevel::Proportional(f) = cfg.noise {
                p.noise_rel = f;
            }
            (Model::Noisy(p), p)
        }
        ModelSpec::External(cmd) => {
            let mut ext = ExternalModelConfig::from_command_line(cmd).map_err(ModelError::External)?;
            ext.timeout_ms = cfg.external_timeout_ms;
            ext.workers = cfg.external_workers.max(1);
            let model = ExternalModel::spawn(ext).map_err(ModelError::External)?;
            (Model::External(model), cfg.oracle)
        }
    })
}

fn require_targets(dataset: &[Sample]) -> Result<(), ExperimentError> {
    match dataset.iter().find(|s| s.target_stress.is_none()) {
        Some(s) => Err(MetricsError::MissingTarget(s.id.clone()).into()),
        None => Ok(()),
    }
}

fn target(s: &Sample) -> &TensorPath {
    s.target_stress.as_ref().expect("targets checked")
}

/// TTA on every sample with one shared rotation list.
pub fn run_dataset(
    model: &dyn Predictor,
    dataset: &[Sample],
    rotations: &[Rotation3],
    tta: &TtaConfig,
) -> Result<Vec<TtaResult>, ExperimentError> {
    let results: Vec<Result<TtaResult, ExperimentError>> = dataset
        .par_iter()
        .map(|s| {
            run_tta_with_rotations(model, &s.model_input(), rotations, tta)
                .map_err(|source| ExperimentError::Tta { sample: s.id.clone(), source })
        })
        .collect();
    results.into_iter().collect()
}

pub fn evaluated<'a>(dataset: &'a [Sample], results: &'a [TtaResult]) -> Vec<EvaluatedSample<'a>> {
    dataset.iter().zip(results).map(|(s, r)| EvaluatedSample::new(&s.id, target(s), r)).collect()
}

/// MeRE and MaRE of the aggregated paths for each requested rotation count,
/// reusing prefixes of one rotation list. Only the aggregated von Mises paths
/// are kept per sample.
pub fn tta_error_curve(
    model: &dyn Predictor,
    dataset: &[Sample],
    cfg: &ExperimentConfig,
    seed: u64,
    counts: &[usize],
) -> Result<Vec<(usize, f64, f64)>, ExperimentError> {
    require_targets(dataset)?;
    let max_n = counts.iter().copied().max().ok_or_else(|| ExperimentError::Config("no rotation counts".into()))?;
    let tta_full = cfg.tta_with(seed, max_n);
    tta_full.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
    let offset = usize::from(cfg.include_identity);
    for &n in counts {
        cfg.tta_with(seed, n).validate().map_err(|e| ExperimentError::Config(format!("N = {n}: {e}")))?;
    }
    let rotations = tta_full.rotations();
    // per sample: one aggregated von Mises path per count
    let per_sample: Vec<Vec<Vec<f64>>> = dataset
        .iter()
        .map(|s| {
            let full = run_tta_with_rotations(model, &s.model_input(), &rotations, &tta_full)
                .map_err(|source| ExperimentError::Tta { sample: s.id.clone(), source })?;
            counts
                .iter()
                .map(|&n| {
                    prefix_result(&full, n + offset, &cfg.tta_with(seed, n))
                        .map(|r| r.vm_aggregated)
                        .map_err(|source| ExperimentError::Tta { sample: s.id.clone(), source })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let targets: Vec<Vec<f64>> = dataset.iter().map(|s| von_mises_path(target(s))).collect();
    counts
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let pairs: Vec<(&[f64], &[f64])> =
                targets.iter().zip(&per_sample).map(|(t, p)| (t.as_slice(), p[k].as_slice())).collect();
            Ok((n, mere_tta(&pairs, cfg.metrics.mere_normalization)?, mare_tta(&pairs, cfg.metrics.mare_abs)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatColumn {
    pub label: String,
    pub n_rotations: usize,
    pub seed: Option<u64>,
    pub mere: f64,
    pub mare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatsTable {
    pub columns: Vec<RepeatColumn>,
    pub repeat_mere_mean: f64,
    /// Sample standard deviation over the repeat columns.
    pub repeat_mere_sd: f64,
}

/// Initial prediction, `cfg.repeats` TTA runs at `cfg.n_rotations` with
/// seeds `seed, seed + 1, ...`, and one run at `cfg.repeats_large_n`.
pub fn repeats_table(model: &dyn Predictor, dataset: &[Sample], cfg: &ExperimentConfig) -> Result<RepeatsTable, ExperimentError> {
    if cfg.repeats == 0 {
        return Err(ExperimentError::Config("repeats must be at least 1".into()));
    }
    if !cfg.include_identity {
        return Err(ExperimentError::Config("the repeats table needs the identity prediction".into()));
    }
    let mut columns = Vec::new();
    for k in 0..cfg.repeats {
        let seed = cfg.seed.wrapping_add(k as u64);
        let curve = if k == 0 {
            tta_error_curve(model, dataset, cfg, seed, &[0, cfg.n_rotations])?
        } else {
            tta_error_curve(model, dataset, cfg, seed, &[cfg.n_rotations])?
        };
        if k == 0 {
            columns.push(RepeatColumn { label: "initial".into(), n_rotations: 0, seed: None, mere: curve[0].1, mare: curve[0].2 });
        }
        let (n, mere, mare) = *curve.last().expect("one count");
        columns.push(RepeatColumn { label: format!("repeat_{}", k + 1), n_rotations: n, seed: Some(seed), mere, mare });
    }
    let large_seed = cfg.seed.wrapping_add(cfg.repeats as u64);
    let (n, mere, mare) = tta_error_curve(model, dataset, cfg, large_seed, &[cfg.repeats_large_n])?[0];
    columns.push(RepeatColumn { label: "large_n".into(), n_rotations: n, seed: Some(large_seed), mere, mare });

    let reps: Vec<f64> = columns[1..=cfg.repeats].iter().map(|c| c.mere).collect();
    let mean = compensated_sum(reps.iter().copied()) / reps.len() as f64;
    let sd = if reps.len() > 1 {
        (compensated_sum(reps.iter().map(|v| (v - mean).powi(2))) / (reps.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(RepeatsTable { columns, repeat_mere_mean: mean, repeat_mere_sd: sd })
}

pub fn repeats_csv(table: &RepeatsTable) -> String {
    let mut s = String::from("column,n_rotations,seed,mere,mare\n");
    for c in &table.columns {
        let seed = c.seed.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", c.label, c.n_rotations, seed, c.mere, c.mare);
    }
    s
}

pub fn sweep_csv(rows: &[(usize, f64, f64)]) -> String {
    let mut s = String::from("n_rotations,mere_tta,mare_tta\n");
    for (n, mere, mare) in rows {
        let _ = writeln!(s, "{n},{mere},{mare}");
    }
    s
}

pub fn curve_csv(steps: impl IntoIterator<Item = usize>, values: &[f64]) -> String {
    let mut s = String::from("t,value\n");
    for (t, v) in steps.into_iter().zip(values) {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut s = String::from("bin_left,bin_right,count,density,normal_pdf\n");
    for (k, (&c, &d)) in h.counts.iter().zip(&h.density).enumerate() {
        let left = h.origin + k as f64 * h.bin_width;
        let right = left + h.bin_width;
        let _ = writeln!(s, "{left},{right},{c},{d},{}", h.normal_pdf(0.5 * (left + right)));
    }
    s
}

pub fn per_rotation_csv(report: &MetricsReport) -> String {
    let mut s = String::from("i,mere,mare\n");
    for (i, (a, b)) in report.mere_per_rotation.iter().zip(&report.mare_per_rotation).enumerate() {
        let _ = writeln!(s, "{i},{a},{b}");
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.6}"))
}

pub fn render_report(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "samples                 {}", r.samples);
    let _ = writeln!(s, "predictions per sample  {}", r.predictions_per_sample);
    let _ = writeln!(s, "steps                   {}", r.steps);
    let _ = writeln!(s, "MeRE (i = 0)            {}", opt(r.mere_i0));
    let _ = writeln!(s, "MaRE (i = 0)            {}", opt(r.mare_i0));
    let _ = writeln!(s, "MeRE average            {:.6}", r.mere_av);
    let _ = writeln!(s, "SD of MeRE              {}", opt(r.sd_mere));
    let _ = writeln!(s, "percentile of i = 0     {}", opt(r.mere_i0_percentile));
    let _ = writeln!(s, "MeRE TTA                {:.6}", r.mere_tta);
    let _ = writeln!(s, "MaRE TTA                {:.6}", r.mare_tta);
    let _ = writeln!(s, "mean C ratio            {}", opt(r.shape.mean_c_ratio));
    let _ = writeln!(s, "C ratio < 1 fraction    {}", opt(r.shape.below_one_fraction));
    let _ = writeln!(
        s,
        "shape pairs             {} finite, {} perfect, {} degenerate",
        r.shape.finite_pairs, r.shape.perfect_pairs, r.shape.degenerate_pairs
    );
    let _ = writeln!(s, "r(<SD>, <E_abs>)        {}", opt(r.uncertainty.r_abs));
    let _ = writeln!(s, "r(<SD_r>, <E_r>)        {}", opt(r.uncertainty.r_rel));
    let _ = writeln!(s, "r per component         {}", opt(r.uncertainty.r_components));
    let _ = writeln!(s, "excluded steps          {}", r.uncertainty.excluded_steps);
    s
}

pub fn render_audit(a: &AuditReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Round-trip error over M = {} samples ({} with targets)", a.samples, a.samples_with_target);
    let _ = writeln!(s, "{:<14}{:<14}{:<14}", "input", "target", "output");
    let _ = writeln!(s, "{:<14.3e}{:<14.3e}{:<14.3e}", a.input_err, a.target_err, a.output_err);
    s
}

/// Per-sample record of `tta_results.jsonl`.
#[derive(Serialize)]
struct ResultRecord<'a> {
    id: &'a str,
    aggregated: Vec<[f64; 6]>,
    sd: &'a [[f64; 6]],
    vm_initial: Option<&'a [f64]>,
    vm_aggregated: &'a [f64],
    vm_sd: &'a [f64],
}

fn results_jsonl(dataset: &[Sample], results: &[TtaResult]) -> String {
    let mut s = String::new();
    for (sample, r) in dataset.iter().zip(results) {
        let rec = ResultRecord {
            id: &sample.id,
            aggregated: r.aggregated.iter().map(|x| *x.components()).collect(),
            sd: &r.sd,
            vm_initial: r.identity_first.then(|| r.vm_individual[0].as_slice()),
            vm_aggregated: &r.vm_aggregated,
            vm_sd: &r.vm_sd,
        };
        s.push_str(&serde_json::to_string(&rec).expect("serializable"));
        s.push('\n');
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Files of one command, written together or not at all.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.push((name.into(), content.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    /// Adds `manifest.json` listing config, dataset hash and file hashes.
    pub fn seal(&mut self, command: &str, cfg: &ExperimentConfig, dataset_sha256: &str, model: &OracleParams) {
        let outputs: serde_json::Map<String, serde_json::Value> =
            self.files.iter().map(|(n, c)| (n.clone(), sha256_hex(c).into())).collect();
        let manifest = serde_json::json!({
            "command": command,
            "seed": cfg.seed,
            "config": cfg,
            "resolved_oracle": model,
            "dataset_sha256": dataset_sha256,
            "outputs": outputs,
        });
        self.add("manifest.json", pretty(&manifest));
    }

    /// Writes everything into a staging directory next to `out`, then moves
    /// the files in. Nothing is left behind on failure.
    pub fn commit(&self, out: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(out).map_err(io_err(out))?;
        let staging = out.join(format!(".staging-{}", std::process::id()));
        let result = (|| {
            fs::create_dir_all(&staging).map_err(io_err(&staging))?;
            for (name, content) in &self.files {
                let p = staging.join(name);
                fs::write(&p, content).map_err(io_err(&p))?;
            }
            for (name, _) in &self.files {
                let from = staging.join(name);
                let to = out.join(name);
                fs::rename(&from, &to).map_err(io_err(&to))?;
            }
            Ok(())
        })();
        let _ = fs::remove_dir_all(&staging);
        result
    }
}

/// Everything a `run` produces, kept in memory for inspection.
pub struct RunOutcome {
    pub report: MetricsReport,
    pub histogram: Option<Histogram>,
    pub artifacts: Artifacts,
    pub resolved_oracle: OracleParams,
}

fn load_checked(cfg: &ExperimentConfig) -> Result<(Vec<Sample>, String), ExperimentError> {
    cfg.validate()?;
    let bytes = fs::read(&cfg.dataset).map_err(io_err(&cfg.dataset))?;
    let dataset = load_dataset(&cfg.dataset)?;
    Ok((dataset, sha256_hex(&bytes)))
}

/// Builds every run artifact without touching the output directory.
pub fn prepare_run(cfg: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    let (dataset, dataset_sha) = load_checked(cfg)?;
    require_targets(&dataset)?;
    let (model, resolved) = build_model(cfg, &dataset)?;
    log::info!("running {} over {} samples with N = {}", model.describe(), dataset.len(), cfg.n_rotations);
    let tta = cfg.tta();
    let rotations = tta.rotations();
    let results = run_dataset(&model, &dataset, &rotations, &tta)?;
    let samples = evaluated(&dataset, &results);
    let report = evaluate(&samples, &cfg.metrics)?;
    let histogram = if report.mere_per_rotation.len() >= 2 {
        Some(mere_histogram(&report.mere_per_rotation, cfg.bin_width)?)
    } else {
        None
    };

    let mut art = Artifacts::default();
    art.add("tta_results.jsonl", results_jsonl(&dataset, &results));
    art.add("metrics.json", pretty(&report));
    art.add("metrics.txt", render_report(&report));
    art.add("mere_per_rotation.csv", per_rotation_csv(&report));
    let u = &report.uncertainty;
    art.add("curve_sd_mean.csv", curve_csv(0..u.sd_mean.len(), &u.sd_mean));
    art.add("curve_eabs_mean.csv", curve_csv(0..u.eabs_mean.len(), &u.eabs_mean));
    art.add("curve_er_mean.csv", curve_csv(u.relative_steps.iter().copied(), &u.er_mean));
    art.add("curve_sdr_mean.csv", curve_csv(u.relative_steps.iter().copied(), &u.sdr_mean));
    if let Some(h) = &histogram {
        art.add("mere_histogram.csv", histogram_csv(h));
        art.add("mere_histogram.json", pretty(h));
    }
    if let Some(opts) = &cfg.sphere {
        add_sphere(&mut art, &rotations, &report.mere_per_rotation, opts)?;
    }
    art.seal("run", cfg, &dataset_sha, &resolved);
    Ok(RunOutcome { report, histogram, artifacts: art, resolved_oracle: resolved })
}

fn add_sphere(art: &mut Artifacts, rotations: &[Rotation3], values: &[f64], opts: &SphereOptions) -> Result<(), ExperimentError> {
    let (points, grid) = build_map(rotations, values, opts)?;
    art.add("mere_sphere.svg", render_svg(&grid, opts.colormap));
    let mut csv = Vec::new();
    write_seeds_csv(&mut csv, &points).expect("writing to memory");
    art.add("mere_sphere_seeds.csv", csv);
    Ok(())
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    let outcome = prepare_run(cfg)?;
    outcome.artifacts.commit(&cfg.out)?;
    Ok(outcome)
}

/// Round-trip audit with one rotation per sample, or the identity for all
/// samples with `identity_only`.
pub fn cmd_audit(cfg: &ExperimentConfig, identity_only: bool) -> Result<AuditReport, ExperimentError> {
    let (dataset, _) = load_checked(cfg)?;
    let (model, _) = build_model(cfg, &dataset)?;
    let mut stream = RotationStream::new(cfg.seed);
    let stream = (!identity_only).then_some(&mut stream);
    numerics_audit(&dataset, &model, stream).map_err(|source| ExperimentError::Tta { sample: "<audit>".into(), source })
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<(usize, f64, f64)>, ExperimentError> {
    if cfg.sweep.is_empty() {
        return Err(ExperimentError::Config("sweep needs at least one rotation count".into()));
    }
    let (dataset, sha) = load_checked(cfg)?;
    let (model, resolved) = build_model(cfg, &dataset)?;
    let rows = tta_error_curve(&model, &dataset, cfg, cfg.seed, &cfg.sweep)?;
    let mut art = Artifacts::default();
    art.add("sweep.csv", sweep_csv(&rows));
    art.seal("sweep", cfg, &sha, &resolved);
    art.commit(&cfg.out)?;
    Ok(rows)
}

pub fn cmd_repeats(cfg: &ExperimentConfig) -> Result<RepeatsTable, ExperimentError> {
    let (dataset, sha) = load_checked(cfg)?;
    let (model, resolved) = build_model(cfg, &dataset)?;
    let table = repeats_table(&model, &dataset, cfg)?;
    let mut art = Artifacts::default();
    art.add("repeats.csv", repeats_csv(&table));
    art.add("repeats.json", pretty(&table));
    art.seal("repeats", cfg, &sha, &resolved);
    art.commit(&cfg.out)?;
    Ok(table)
}

/// Per-rotation MeRE on the sphere, projected and rasterized.
pub fn cmd_sphere_map(cfg: &ExperimentConfig) -> Result<Vec<f64>, ExperimentError> {
    let (dataset, sha) = load_checked(cfg)?;
    require_targets(&dataset)?;
    let (model, resolved) = build_model(cfg, &dataset)?;
    let tta = cfg.tta();
    let rotations = tta.rotations();
    let results = run_dataset(&model, &dataset, &rotations, &tta)?;
    let (mere, _) = crate::metrics::per_rotation_errors(&evaluated(&dataset, &results), &cfg.metrics)?;
    let opts = cfg.sphere.unwrap_or_default();
    let mut art = Artifacts::default();
    add_sphere(&mut art, &rotations, &mere, &opts)?;
    art.seal("sphere-map", cfg, &sha, &resolved);
    art.commit(&cfg.out)?;
    Ok(mere)
}
