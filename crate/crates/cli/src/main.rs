//! Command-line front end for the projection-consensus experiments.
//!
//! Exit codes: 0 converged, 2 ran without converging, 1 invalid input or
//! runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use projcons::experiment::{self, ExperimentConfig, RECIPES};

#[derive(Debug, Parser)]
#[command(name = "projcons", version, about = "Run distributed projection-consensus experiments")]
struct Args {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "recipe", required_unless_present_any = ["recipe", "list_recipes"])]
    config: Option<PathBuf>,

    /// Named built-in experiment.
    #[arg(long)]
    recipe: Option<String>,

    /// Override the top-level seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for trace.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    max_steps: Option<u64>,

    #[arg(long)]
    tol: Option<f64>,

    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,

    /// List built-in recipes and exit.
    #[arg(long)]
    list_recipes: bool,
}

fn load(args: &Args) -> projcons::Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.recipe) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(name)) => experiment::recipe(name)?,
        (None, None) => unreachable!("clap requires one of --config/--recipe"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.max_steps {
        cfg.engine.max_steps = n;
    }
    if let Some(tol) = args.tol {
        cfg.engine.tol = tol;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    // usage errors exit 1; clap's default 2 would read as non-convergence
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if args.list_recipes {
        for name in RECIPES {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let cfg = match load(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if args.print_config {
        println!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match experiment::run(&cfg, &out) {
        Ok(code) => {
            eprintln!("wrote {}", out.display());
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
