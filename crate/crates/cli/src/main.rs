use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use instloc_cli::*;

#[derive(Parser)]
#[command(name = "instloc", version, about = "Object-instance global localization for RGB-D frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an object map from a posed sequence and its detection records.
    BuildMap {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        format: DatasetFormat,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value_t = 30)]
        stride: usize,
        #[arg(long, default_value_t = 0.05)]
        voxel: f64,
        #[arg(long, default_value_t = 0.25)]
        eps_iou: f64,
        #[arg(long, default_value_t = 0.5)]
        eps_l2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize the sampled query frames of a sequence against a map.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Dataset layout; guessed from the detection file when omitted.
        #[arg(long, value_enum)]
        format: Option<DatasetFormat>,
        #[arg(long, default_value_t = 30)]
        stride: usize,
        #[arg(long, default_value_t = 15)]
        offset: usize,
        #[arg(long, default_value_t = 8)]
        k_best: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against a ground-truth trajectory.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        te_max: f64,
        #[arg(long, default_value_t = 0.3)]
        re_max: f64,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-frame errors as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render a synthetic RGB-D scene with detection records.
    GenSynth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient check of the fusion model, optionally with toy training.
    FusionCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long)]
        train_toy: bool,
        /// Save the trained parameters (manifest path; data goes beside it).
        #[arg(long, requires = "train_toy")]
        save_params: Option<PathBuf>,
    },
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::BuildMap {
            dataset,
            format,
            detections,
            stride,
            voxel,
            eps_iou,
            eps_l2,
            out,
        } => print_json(&build_map(&BuildMapArgs {
            dataset,
            format,
            detections,
            stride,
            voxel,
            eps_iou,
            eps_l2,
            out,
        })?),
        Command::Localize {
            map,
            dataset,
            detections,
            format,
            stride,
            offset,
            k_best,
            out,
        } => print_json(&localize(&LocalizeArgs {
            map,
            dataset,
            detections,
            format,
            stride,
            offset,
            k_best,
            out,
        })?),
        Command::Evaluate {
            pred,
            gt,
            te_max,
            re_max,
            report,
            csv,
        } => {
            let r = evaluate(&EvaluateArgs {
                pred,
                gt,
                te_max,
                re_max,
                report,
                csv,
            })?;
            print!("{}", r.to_table());
        }
        Command::GenSynth { config, seed, out } => print_json(&gen_synth(&config, seed, &out)?),
        Command::FusionCheck {
            seed,
            eps,
            train_toy,
            save_params,
        } => {
            let report = fusion_check(seed, eps, train_toy, save_params.as_deref())?;
            print_json(&report);
            if !report.passed {
                return Err(CliError::Failure("fusion check failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    instloc::parallel::init_from_env();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("instloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
