mod commands;
mod config;
mod error;
mod pipeline;
mod report;

use clap::{Parser, Subcommand};

use commands::RunArgs;
use error::AppError;

#[derive(Parser)]
#[command(
    name = "entop",
    version,
    about = "Entangled operations as coherent superpositions of local gates: \
             decompose them, simulate their time-bin realization, verify them \
             with tomography"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator-Schmidt decomposition of the configured operator
    Decompose(RunArgs),
    /// Simulate the post-selected output and verify it with state tomography
    Generate(RunArgs),
    /// Process tomography over the 16 standard probe states
    Qpt(RunArgs),
    /// Three-party scenarios: GHZ/W generation and doubly controlled gates
    Multiparty(RunArgs),
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    init_threads()?;
    match &cli.command {
        Command::Decompose(args) => commands::cmd_decompose(args)?,
        Command::Generate(args) => commands::cmd_generate(args)?,
        Command::Qpt(args) => commands::cmd_qpt(args)?,
        Command::Multiparty(args) => commands::cmd_multiparty(args)?,
    };
    Ok(())
}

/// ENTOP_THREADS caps the rayon worker count.  Reports stay byte-identical
/// either way; the cap only bounds resource use.
fn init_threads() -> Result<(), AppError> {
    let Ok(raw) = std::env::var("ENTOP_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            AppError::Config(format!("ENTOP_THREADS must be a positive integer, got {raw:?}"))
        })?;
    // Already-initialized is fine: the pool then keeps its existing size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}
