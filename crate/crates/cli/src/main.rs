use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deformtomo::io::RunConfig;
use deformtomo::pipeline::{self, Evaluation};
use deformtomo::reconstruct::Mode;
use deformtomo::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "deformtomo", version, about = "Deformation-aware tomographic reconstruction with neural fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a tilt-series bundle.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the noise level of the configuration.
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
    },
    /// Fit the volume (and deformations) to a bundle.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// est | est-wo
        #[arg(long, default_value = "est")]
        mode: Mode,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Filtered back-projection of a bundle.
    Fbp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare reconstructions with the bundle's ground truth.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        /// Output directories of `reconstruct` or `fbp`.
        #[arg(long = "method", required = true)]
        methods: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage end to end.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Order of precedence: file, then `DEFORMTOMO_SEED`, then `--seed`.
fn load_config(common: &Common) -> deformtomo::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_toml("")?,
    };
    cfg.apply_env()?;
    if let Some(s) = common.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

/// Config for a stage reading a bundle: the bundle's own unless overridden.
fn stage_config(common: &Common, bundle: &Path) -> deformtomo::Result<RunConfig> {
    if common.config.is_some() {
        return load_config(common);
    }
    let mut cfg = RunConfig::load(&bundle.join(pipeline::CONFIG_FILE))?;
    cfg.apply_env()?;
    if let Some(s) = common.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn print_evaluation(eval: &Evaluation) {
    println!("method      shift_px  rot_deg  local_px  warp_px  proj_snr_db  fsc_res");
    for row in &eval.report.rows {
        let e = &row.errors;
        println!(
            "{:<10} {:>9.4} {:>8.4} {:>9.4} {:>8.4} {:>12.3} {:>8.3}",
            row.method,
            e.shift_px,
            e.rot_deg,
            e.local_px,
            e.warp_px,
            row.proj_snr_db,
            eval.resolution_of(&row.method).unwrap_or(f64::NAN)
        );
    }
}

fn run(cli: Cli) -> deformtomo::Result<()> {
    match cli.command {
        Command::Simulate { common, out, snr_db } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = snr_db {
                cfg.noise.snr_db = s;
                cfg.validate()?;
            }
            let measured = pipeline::simulate(&cfg, &out)?;
            println!("bundle written to {} (measured SNR {measured:.3} dB)", out.display());
        }
        Command::Reconstruct {
            common,
            bundle,
            out,
            mode,
            iterations,
        } => {
            let mut cfg = stage_config(&common, &bundle)?;
            if let Some(k) = iterations {
                cfg.training.iterations = k;
            }
            pipeline::reconstruct(&bundle, &out, mode, Some(&cfg))?;
            println!("{} reconstruction written to {}", mode.label(), out.display());
        }
        Command::Fbp { common, bundle, out } => {
            let cfg = stage_config(&common, &bundle)?;
            pipeline::run_fbp(&bundle, &out, Some(&cfg))?;
            println!("FBP volume written to {}", out.display());
        }
        Command::Evaluate { bundle, methods, out } => {
            let eval = pipeline::evaluate(&bundle, &methods, &out)?;
            print_evaluation(&eval);
        }
        Command::Pipeline { common, out } => {
            let cfg = load_config(&common)?;
            let eval = pipeline::pipeline(&cfg, &out)?;
            print_evaluation(&eval);
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 3,
        ErrorKind::Io => 4,
        ErrorKind::Numerics => 5,
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
