use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qstein_cli::{run_file, Overrides, Stage};

#[derive(Parser)]
#[command(name = "qstein", version, about = "Finite-n experiments for quantum hypothesis testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the stages listed in the config (default: all it supports).
    Run(Common),
    /// D_n, V_n and their per-weight rates.
    Divergences(Common),
    /// Optimal type-II errors beta_n(eps).
    Beta(Common),
    /// -log beta_n(eps) against the second-order expansion.
    Expansion(Common),
    /// Cauchy differences of E_n(z)/w_n on a disk.
    Bryc(Common),
    /// Szego rates and Fourier decay of fermion symbols.
    FermionRates(Common),
    /// Finite-n type-I error curve against Phi(t2 / sqrt v).
    AlphaCurve(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to the config, then $QSTEIN_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    max_dim: Option<usize>,
    #[arg(long)]
    max_fock: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, stage) = match cli.command {
        Command::Run(c) => (c, None),
        Command::Divergences(c) => (c, Some(Stage::Divergences)),
        Command::Beta(c) => (c, Some(Stage::Beta)),
        Command::Expansion(c) => (c, Some(Stage::Expansion)),
        Command::Bryc(c) => (c, Some(Stage::Bryc)),
        Command::FermionRates(c) => (c, Some(Stage::FermionRates)),
        Command::AlphaCurve(c) => (c, Some(Stage::AlphaCurve)),
    };
    let overrides = Overrides {
        out: common.out,
        seed: common.seed,
        jobs: common.jobs,
        max_dim: common.max_dim,
        max_fock: common.max_fock,
    };
    let stages = stage.map(|s| vec![s]);
    match run_file(&common.config, stages.as_deref(), &overrides) {
        Ok(m) => {
            for f in &m.files {
                println!("{}", f.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qstein: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
