use clap::{Parser, Subcommand};
use fracpme_cli::config::EXPERIMENTS;
use fracpme_cli::{execute, load, output_dir, thread_count, Failure, THREADS_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fracpme", version, about = "Experiments for nonlocal porous-medium-type equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List the available experiments.
    List,
}

fn report(f: Failure) -> ExitCode {
    match f {
        Failure::Config { path, error } => {
            match error.line {
                Some(l) => eprintln!("{}:{l}: {}", path.display(), error.message),
                None => eprintln!("{}: {}", path.display(), error.message),
            }
            ExitCode::from(1)
        }
        Failure::Runtime { report } => {
            eprintln!("{report}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, doc) in EXPERIMENTS {
                println!("{name:<18} {doc}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, output } => {
            let (src, cfg) = match load(&config) {
                Ok(x) => x,
                Err(f) => return report(f),
            };
            let threads = match thread_count(&cfg, std::env::var(THREADS_ENV).ok().as_deref()) {
                Ok(t) => t,
                Err(f) => return report(f),
            };
            rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().expect("thread pool");
            let dir = output_dir(&cfg, &config, output.as_deref());
            match execute(&src, &cfg, &dir) {
                Ok(_) => {
                    println!("{}", dir.join("manifest.json").display());
                    ExitCode::SUCCESS
                }
                Err(f) => report(f),
            }
        }
    }
}
