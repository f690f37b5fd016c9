use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use t3s2s_cli::{
    cmd_ablate, cmd_analyze_prompt, cmd_probe_topk, cmd_run, exit_code, Module, Options, OutputBundle,
};

#[derive(Parser)]
#[command(name = "t3s2s", version, about = "Sketch-conditioned text-to-scene attention analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scene JSON file.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scene's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Modules to switch off, e.g. `--disable pb,cp`.
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1..)]
    disable: Vec<Module>,
}

#[derive(Subcommand)]
enum Command {
    /// Energy and cosine profiles of the prompt encoding.
    AnalyzePrompt(Common),
    /// One denoising run with heatmaps and a report.
    Run(Common),
    /// All six module variants side by side.
    Ablate(Common),
    /// Value-amplification sweep over K.
    ProbeTopk {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0,1,2,3,4")]
        k_list: Vec<usize>,
        #[arg(long, default_value_t = 2.0)]
        factor: f64,
    },
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options { scene: c.scene, out: c.out, seed: c.seed, disable: c.disable }
    }
}

fn report(bundle: &OutputBundle) {
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} files to {}", bundle.files.len(), bundle.dir.display());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::AnalyzePrompt(c) => cmd_analyze_prompt(&c.into()),
        Command::Run(c) => cmd_run(&c.into()).map(|(r, b)| {
            println!("digest {}", r.digest);
            b
        }),
        Command::Ablate(c) => cmd_ablate(&c.into()).map(|(_, b)| b),
        Command::ProbeTopk { common, k_list, factor } => cmd_probe_topk(&common.into(), &k_list, factor),
    };
    match result {
        Ok(bundle) => {
            report(&bundle);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
