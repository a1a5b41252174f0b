use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "backflow-lab",
    about = "Batch correlation-backflow experiments on open-system dynamics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a config: scans per lambda, then CSV/JSON/SVG outputs.
    Run { config: String },
    /// Parse and validate a config without running it.
    Validate { config: String },
    /// List dynamics presets and their parameter keys.
    Presets,
}

fn main() {
    // BACKFLOW_LAB_THREADS caps the rayon worker count.
    if let Ok(threads) = std::env::var("BACKFLOW_LAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => backflow_lab::run(&config),
        Command::Validate { config } => backflow_lab::validate(&config),
        Command::Presets => {
            backflow_lab::presets();
            0
        }
    };
    std::process::exit(code);
}
