//! `hjsys <kind> --config <path> [--out <dir>] [--threads k]`
//! `hjsys list <hamiltonians|couplings|suites>`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hjsys::experiment::{
    exit_code_for, list_builtin, run, ExperimentConfig, ExperimentKind, EXIT_CONFIG, THREADS_ENV,
};

#[derive(Parser, Debug)]
#[command(name = "hjsys", version, about = "Weakly coupled Hamilton-Jacobi experiments")]
struct Cli {
    /// evolve | ergodic | diagnose | simulate | validate-coupling | theorem-suite | list
    kind: String,
    /// Catalog name for `list`.
    catalog: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    ExitCode::from(real_main(cli) as u8)
}

fn real_main(cli: Cli) -> i32 {
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return EXIT_CONFIG;
        }
    }
    if cli.kind == "list" {
        return match list_builtin(cli.catalog.as_deref().unwrap_or("")) {
            Ok(names) => {
                for n in names {
                    println!("{n}");
                }
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        };
    }
    let result = (|| {
        let kind: ExperimentKind = cli.kind.parse()?;
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| hjsys::Error::Config("--config is required".into()))?;
        let mut config = ExperimentConfig::load(path)?;
        if let Some(k) = config.experiment_kind {
            if k != kind {
                return Err(hjsys::Error::Config(format!(
                    "experiment_kind: config says '{k}' but '{kind}' was requested"
                )));
            }
        }
        config.experiment_kind = Some(kind);
        run(&config, cli.out.as_deref())
    })();
    match result {
        Ok(outcome) => {
            for c in &outcome.checks {
                println!("{c}");
            }
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
