use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use coprime_blind::constellation::{decompose_difference, CoprimePair, SolveMode};
use coprime_blind::glrt::{verify_full_rank, Codebook};
use coprime_blind::harness::{
    emit_results, estimate_diversity_slope, run_ber_sweep, run_identify_roundtrip, write_csv,
    ConfigOverrides, Mode, OutputFormat, SweepResult,
};

#[derive(Parser)]
#[command(
    name = "coprime-blind",
    version,
    about = "Blind channel identification with coprime PSK blocks and GLRT diversity experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noise-free transmit/identify round trips.
    Identify(Common),
    /// Monte Carlo GLRT frame/symbol error rates over an SNR grid.
    BerSweep(Common),
    /// Pairwise full-column-rank check over the whole codebook.
    RankCheck {
        #[command(flatten)]
        common: Common,
        /// Draw every block from p-PSK instead of the coprime pair.
        #[arg(long)]
        baseline: bool,
    },
    /// Split w = re + j*im as x - y with x in p-PSK and y in q-PSK.
    Decompose {
        #[arg(long, allow_negative_numbers = true)]
        re: f64,
        #[arg(long, allow_negative_numbers = true)]
        im: f64,
        #[arg(long, default_value_t = 2)]
        p: u32,
        #[arg(long, default_value_t = 3)]
        q: u32,
        #[arg(long, value_enum, default_value_t = CliMode::Exact)]
        mode: CliMode,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Exact,
    Nearest,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    q: Option<u32>,
    #[arg(long)]
    z_order: Option<u32>,
    #[arg(long)]
    punctured_y: bool,
    #[arg(long, allow_negative_numbers = true)]
    snr_from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_to: Option<f64>,
    #[arg(long)]
    snr_step: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_errors: Option<u64>,
    /// Worker threads (defaults to all cores). Does not change results.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CliFormat::Json)]
    format: CliFormat,
}

impl Common {
    fn overrides(&self) -> Result<ConfigOverrides> {
        let file = match &self.config {
            Some(path) => ConfigOverrides::from_file(path)?,
            None => ConfigOverrides::default(),
        };
        Ok(file.merged_with(ConfigOverrides {
            k: self.k,
            l: self.l,
            t: self.t,
            p: self.p,
            q: self.q,
            z_order: self.z_order,
            punctured_y: self.punctured_y.then_some(true),
            snr_from: self.snr_from,
            snr_to: self.snr_to,
            snr_step: self.snr_step,
            trials: self.trials,
            seed: self.seed,
            min_errors: self.min_errors,
        }))
    }

    fn format(&self) -> OutputFormat {
        match self.format {
            CliFormat::Csv => OutputFormat::Csv,
            CliFormat::Json => OutputFormat::Json,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            builder = builder.num_threads(n);
        }
        builder.build().context("building thread pool")
    }
}

fn print_json<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| path.display().to_string())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_sweep(result: &SweepResult, common: &Common) -> Result<()> {
    match (&common.out, common.format()) {
        (Some(path), format) => emit_results(result, format, path)?,
        (None, OutputFormat::Csv) => print!("{}", write_csv(result)),
        (None, OutputFormat::Json) => print_json(result, None)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Identify(common) => {
            let spec = common.overrides()?.into_spec(Mode::IdentifyRoundtrip)?;
            let result = common.pool()?.install(|| run_identify_roundtrip(&spec))?;
            if let Some(rt) = &result.roundtrip {
                eprintln!(
                    "recovered {}/{} (max residual {:e})",
                    rt.recovered, rt.trials, rt.max_residual
                );
            }
            write_sweep(&result, &common)
        }
        Command::BerSweep(common) => {
            let spec = common.overrides()?.into_spec(Mode::BerSweep)?;
            let result = common.pool()?.install(|| run_ber_sweep(&spec))?;
            match estimate_diversity_slope(&result, spec.min_errors) {
                Ok(fit) => eprintln!(
                    "diversity slope {:.3} over {} points",
                    fit.slope, fit.points_used
                ),
                Err(e) => eprintln!("no slope: {e}"),
            }
            write_sweep(&result, &common)
        }
        Command::RankCheck { common, baseline } => {
            let mut overrides = common.overrides()?;
            let codebook = if baseline {
                // Every block from p-PSK; q is irrelevant, p + 1 keeps validation happy.
                let order = overrides.p.unwrap_or(2);
                overrides.q = Some(order + 1);
                let spec = overrides.into_spec(Mode::RankCheck)?;
                Codebook::same_psk(spec.k, spec.l, spec.t, order, spec.z_order)?
            } else {
                Codebook::new(&overrides.into_spec(Mode::RankCheck)?.frame_config()?)
            };
            let report = common.pool()?.install(|| verify_full_rank(&codebook))?;
            eprintln!(
                "min rank {} of {} over {} pairs",
                report.min_rank, report.full_rank, report.pairs_checked
            );
            print_json(&report, common.out.as_ref())
        }
        Command::Decompose { re, im, p, q, mode } => {
            let pair = CoprimePair::new(p, q)?;
            let mode = match mode {
                CliMode::Exact => SolveMode::Exact,
                CliMode::Nearest => SolveMode::Nearest,
            };
            let d = decompose_difference(Complex64::new(re, im), &pair, mode)?;
            print_json(&d, None)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
