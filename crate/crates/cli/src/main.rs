use std::path::PathBuf;
use std::process::ExitCode;

use boxforge_cli::{dump_maps, CliError, MapsDumpArgs, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "boxforge", version, about = "Box-conditioned synthesis of defect images and masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override `key.path=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Further overrides as trailing `key.path=value` arguments.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let all: Vec<String> = self.set.iter().chain(&self.overrides).cloned().collect();
        RunConfig::load(self.config.as_deref(), &all)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the joint denoiser on the diffusion_train split.
    Train(ConfigArgs),
    /// Generate image/mask pairs for the boxes of a manifest.
    Sample(ConfigArgs),
    /// Score masks against their boxes (SAE, EBR).
    Evaluate(ConfigArgs),
    /// Compare segmenters trained on real, synthetic and combined data.
    Downstream(ConfigArgs),
    /// Write a procedural toy dataset with its split.
    Toygen(ConfigArgs),
    /// Run the HTTP generation service.
    Serve(ConfigArgs),
    /// Conditioning-map utilities.
    Maps {
        #[command(subcommand)]
        command: MapsCommand,
    },
}

#[derive(Subcommand)]
enum MapsCommand {
    /// Write raw distance (f32) and class (u8) grids plus a JSON header.
    Dump {
        /// JSON array of boxes.
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Output prefix.
        #[arg(long)]
        out: PathBuf,
        /// Write the nearest box's class outside all boxes too.
        #[arg(long)]
        class_everywhere: bool,
        /// Use the brute-force implementation.
        #[arg(long)]
        reference: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => {
            let o = boxforge_cli::train(&a.load()?)?;
            if let Some(last) = o.history.last() {
                println!("epoch {} mean loss {:.6}", last.epoch + 1, last.mean_loss);
            }
            println!("checkpoint {}", o.checkpoint.display());
        }
        Command::Sample(a) => {
            let o = boxforge_cli::sample(&a.load()?)?;
            print!("{}", o.report.table());
            println!("{} samples, manifest {}", o.samples, o.manifest.display());
        }
        Command::Evaluate(a) => {
            let o = boxforge_cli::evaluate(&a.load()?)?;
            print!("{}", o.report.table());
            println!("{} records, report {}", o.records, o.report_path.display());
        }
        Command::Downstream(a) => print!("{}", boxforge_cli::downstream(&a.load()?)?.table()),
        Command::Toygen(a) => {
            let o = boxforge_cli::toygen(&a.load()?)?;
            println!("manifest {} split {:?}", o.manifest.display(), o.counts);
        }
        Command::Serve(a) => boxforge_cli::serve(&a.load()?)?,
        Command::Maps {
            command:
                MapsCommand::Dump {
                    boxes,
                    height,
                    width,
                    out,
                    class_everywhere,
                    reference,
                },
        } => {
            let h = dump_maps(&MapsDumpArgs {
                boxes,
                height,
                width,
                out,
                class_everywhere,
                reference,
            })?;
            println!("{}", serde_json::to_string(&h).expect("header serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
