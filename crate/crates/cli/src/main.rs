//! `unmix`: generate benchmark scenes and run unmixing experiments.
//!
//! ```text
//! unmix gen dc1 --seed 0 --out data/dc1
//! unmix run --mode semi --data dc1 --model sunsal --snr 30 --seed 0
//! unmix run --mode blind --data dc2 --model nmf-qmv --set qmv.kind=boundary --repeats 5
//! ```
//!
//! Failures print one line, `error: <Token>: <message>`, and exit nonzero.

mod config;
mod models;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use unmix::datagen::{add_noise, generate_scene, NoiseSpec, SceneKind};
use unmix::fixtures::endmembers;
use unmix::io::{write_dataset, Layout};
use unmix::UnmixError;

use crate::config::Params;
use crate::models::Mode;
use crate::run::{builtin_spec, RunArgs};

#[derive(Debug)]
pub enum CliError {
    UnknownModel(String),
    BadConfig(String),
    Unmix(UnmixError),
}

impl CliError {
    pub fn token(&self) -> &'static str {
        match self {
            CliError::UnknownModel(_) => "UnknownModel",
            CliError::BadConfig(_) => "BadConfig",
            CliError::Unmix(e) => e.token(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::UnknownModel(_) | CliError::BadConfig(_) => 2,
            CliError::Unmix(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::UnknownModel(m) | CliError::BadConfig(m) => f.write_str(m),
            CliError::Unmix(e) => write!(f, "{e}"),
        }
    }
}

impl<E: Into<UnmixError>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Unmix(e.into())
    }
}

#[derive(Parser)]
#[command(name = "unmix", version, about = "Hyperspectral unmixing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark scene with its ground truth.
    Gen {
        /// dc1, dc2 or dc3
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (default data/<kind>-<seed>)
        #[arg(long)]
        out: Option<PathBuf>,
        /// SNR in dB, or inf
        #[arg(long, default_value = "inf")]
        snr: String,
        /// bsq or bip
        #[arg(long, default_value = "bsq")]
        layout: String,
    },
    /// Unmix a scene, score it against the truth and write a report.
    Run {
        /// supervised, semi or blind
        #[arg(long)]
        mode: String,
        /// dc1, dc2, dc3 or a dataset directory
        #[arg(long)]
        data: String,
        #[arg(long)]
        model: String,
        /// SNR in dB, or inf
        #[arg(long, default_value = "inf")]
        snr: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run seeds seed..seed+repeats-1 and aggregate
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Library CSV for library-based methods (default: built-in)
        #[arg(long)]
        library: Option<PathBuf>,
        /// Parent directory of the run directory
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Run directory name (default: <model>-<data>-<unix time>)
        #[arg(long)]
        name: Option<String>,
        /// Override, e.g. --set solver.rho=2 (repeatable)
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

fn parse_snr(s: &str) -> Result<f64, CliError> {
    match s.trim().parse::<f64>() {
        Ok(v) if !v.is_nan() => Ok(v),
        _ => Err(CliError::BadConfig(format!("snr must be a number or inf, got {s:?}"))),
    }
}

fn gen(kind: &str, seed: u64, out: Option<PathBuf>, snr: &str, layout: &str) -> Result<(), CliError> {
    let spec = builtin_spec(kind, seed)
        .ok_or_else(|| CliError::BadConfig(format!("kind must be dc1, dc2 or dc3, got {kind:?}")))?;
    let layout = match layout {
        "bsq" => Layout::Bsq,
        "bip" => Layout::Bip,
        _ => return Err(CliError::BadConfig(format!("layout must be bsq or bip, got {layout:?}"))),
    };
    let snr_db = parse_snr(snr)?;
    let dir = out.unwrap_or_else(|| PathBuf::from(format!("data/{kind}-{seed}")));
    let e = endmembers(spec.r)?;
    let (clean, a) = generate_scene(&spec, &e)?;
    let cube = add_noise(&clean, &NoiseSpec { snr_db, seed });
    write_dataset(&dir, &cube, layout, Some((&e, &a)))?;
    let purity = match spec.kind {
        SceneKind::PureBlocks => "pure-pixels".to_string(),
        SceneKind::DirichletField => "mixed-fields".to_string(),
        SceneKind::NoPurePixels => format!(
            "no-pure-pixels(max={},facet_points={})",
            spec.max_purity, spec.facet_points
        ),
    };
    println!(
        "{kind}: n={} ({}x{}) p={} r={} purity={purity} -> {}",
        cube.pixels(),
        cube.height(),
        cube.width(),
        cube.bands(),
        spec.r,
        dir.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { kind, seed, out, snr, layout } => gen(&kind, seed, out, &snr, &layout),
        Command::Run {
            mode,
            data,
            model,
            snr,
            seed,
            repeats,
            library,
            out,
            name,
            sets,
        } => {
            let name = name.unwrap_or_else(|| {
                let t = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                let tag: String = data
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                    .collect();
                format!("{model}-{tag}-{t}")
            });
            let args = RunArgs {
                mode: Mode::parse(&mode)?,
                model,
                data,
                snr_db: parse_snr(&snr)?,
                seed,
                repeats,
                library,
                dir: out.join(name),
                params: Params::from_overrides(&sets)?,
            };
            run::run(&args).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let msg = e.to_string();
            let detail: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error: BadConfig: {}", detail.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.token());
            ExitCode::from(e.exit_code())
        }
    }
}
