use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tta_core::dataset::{generate_synthetic, save_dataset, GeneratorConfig, LoadingMode};
use tta_core::experiment::{
    cmd_audit, cmd_repeats, cmd_run, cmd_sphere_map, cmd_sweep, render_audit, render_report, repeats_csv, sweep_csv,
    ExperimentConfig, ExperimentError, ModelSpec, NoiseLevel,
};
use tta_core::sphere::{parse_grid, Colormap, SphereOptions};
use tta_core::tta::DivisorMode;

/// Rotation test-time augmentation for stress-path surrogate models.
#[derive(Parser)]
#[command(name = "tta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with ground-truth stress paths.
    Generate(GenerateArgs),
    /// Run TTA over a dataset and write metrics, curves and a manifest.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Also export the per-rotation error map.
        #[arg(long)]
        sphere: bool,
    },
    /// Report rotate/rotate-back round-trip errors.
    Audit {
        #[command(flatten)]
        common: CommonArgs,
        /// Use the identity instead of random rotations.
        #[arg(long)]
        identity_only: bool,
    },
    /// Aggregated errors as a function of the number of rotations.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated rotation counts.
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
    },
    /// Per-rotation error map on the sphere (SVG and seed CSV).
    SphereMap {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Repeated TTA runs with different rotation seeds.
    Repeats {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        repeats: Option<usize>,
        /// Rotation count of the final column.
        #[arg(long)]
        large_n: Option<usize>,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long)]
    max_strain: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Cyclic uniaxial loading instead of random paths.
    #[arg(long)]
    uniaxial: bool,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration or a previous run's manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of random rotations N.
    #[arg(long)]
    rotations: Option<usize>,
    /// equivariant | noisy | external:<command>
    #[arg(long)]
    model: Option<ModelSpec>,
    /// Noise of the noisy model as a fraction of its mean von Mises stress.
    #[arg(long, conflicts_with = "noise_abs")]
    noise: Option<f64>,
    /// Noise of the noisy model in MPa.
    #[arg(long)]
    noise_abs: Option<f64>,
    #[arg(long)]
    mare_abs: bool,
    /// count (predictions) | rotations (N)
    #[arg(long, value_parser = parse_divisor)]
    divisor: Option<DivisorMode>,
    /// Raster size of the sphere map, WxH.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    colormap: Option<String>,
    #[arg(long)]
    bin_width: Option<f64>,
    /// Per-request timeout of an external model.
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Number of external model processes.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_divisor(s: &str) -> Result<DivisorMode, String> {
    match s {
        "count" => Ok(DivisorMode::Count),
        "rotations" => Ok(DivisorMode::PaperVerbatim),
        _ => Err(format!("expected `count` or `rotations`, got `{s}`")),
    }
}

impl CommonArgs {
    fn config(&self, want_sphere: bool) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.rotations {
            cfg.n_rotations = v;
        }
        if let Some(v) = &self.model {
            cfg.model = v.clone();
        }
        if let Some(v) = self.noise {
            cfg.noise = NoiseLevel::Relative(v);
        }
        if let Some(v) = self.noise_abs {
            cfg.noise = NoiseLevel::Absolute(v);
        }
        if self.mare_abs {
            cfg.metrics.mare_abs = true;
        }
        if let Some(v) = self.divisor {
            cfg.divisor = v;
        }
        if let Some(v) = self.bin_width {
            cfg.bin_width = v;
        }
        if let Some(v) = self.timeout_ms {
            cfg.external_timeout_ms = v;
        }
        if let Some(v) = self.workers {
            cfg.external_workers = v;
        }
        let touches_sphere = self.grid.is_some() || self.radius.is_some() || self.colormap.is_some();
        if want_sphere || touches_sphere || cfg.sphere.is_some() {
            let mut s: SphereOptions = cfg.sphere.unwrap_or_default();
            if let Some(g) = &self.grid {
                (s.width, s.height) = parse_grid(g)?;
            }
            if let Some(r) = self.radius {
                s.radius = r;
            }
            if let Some(c) = &self.colormap {
                s.colormap = c.parse::<Colormap>()?;
            }
            cfg.sphere = Some(s);
        }
        Ok(cfg)
    }
}

fn generate(args: &GenerateArgs) -> Result<(), ExperimentError> {
    let mut g = if args.uniaxial {
        GeneratorConfig::uniaxial(args.seed, args.steps)
    } else {
        GeneratorConfig { seed: args.seed, steps: args.steps, mode: LoadingMode::Random, ..Default::default() }
    };
    if let Some(v) = args.samples {
        g.samples = v;
    }
    if let Some(v) = args.max_strain {
        g.max_strain = v;
    }
    if let Some(v) = args.noise_scale {
        g.noise_scale = v;
    }
    let data = generate_synthetic(&g)?;
    save_dataset(&args.out, &data)?;
    println!("wrote {} samples to {}", data.len(), args.out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Generate(args) => generate(&args)?,
        Command::Run { common, sphere } => {
            let cfg = common.config(sphere)?;
            let out = cmd_run(&cfg)?;
            print!("{}", render_report(&out.report));
            log::info!("outputs in {}", cfg.out.display());
        }
        Command::Audit { common, identity_only } => {
            let cfg = common.config(false)?;
            print!("{}", render_audit(&cmd_audit(&cfg, identity_only)?));
        }
        Command::Sweep { common, n_values } => {
            let mut cfg = common.config(false)?;
            if let Some(v) = n_values {
                cfg.sweep = v;
            }
            print!("{}", sweep_csv(&cmd_sweep(&cfg)?));
        }
        Command::SphereMap { common } => {
            let cfg = common.config(true)?;
            let values = cmd_sphere_map(&cfg)?;
            println!("mapped {} rotations into {}", values.len(), cfg.out.display());
        }
        Command::Repeats { common, repeats, large_n } => {
            let mut cfg = common.config(false)?;
            if let Some(v) = repeats {
                cfg.repeats = v;
            }
            if let Some(v) = large_n {
                cfg.repeats_large_n = v;
            }
            print!("{}", repeats_csv(&cmd_repeats(&cfg)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TTA_LOG", "warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
