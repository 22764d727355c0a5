use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shelfsize::commands::{cmd_compare, cmd_eval, cmd_gen, cmd_infer, cmd_train, format_report_table};
use shelfsize::config::RunConfig;
use shelfsize::pipeline::Method;
use shelfsize::Error;

/// Size-variant classification of shelf boxes.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output location: a directory for gen, eval and compare, a file for
    /// train and infer.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic catalog and scenes.
    Gen,
    /// Train one model per group and save the bundle.
    Train {
        #[arg(long, value_enum)]
        method: Method,
    },
    /// Evaluate a bundle on the held-out scenes.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Predict every box of a scenes file.
    Infer {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
    },
    /// Train and evaluate both methods on one split.
    Compare,
}

fn run(cli: Cli) -> shelfsize::Result<()> {
    let path = cli.config.ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen => {
            let (cat, scenes, summary) = cmd_gen(&cfg, out)?;
            println!("wrote {} and {}", cat.display(), scenes.display());
            print!("{summary}");
        }
        Command::Train { method } => {
            let (path, diag) = cmd_train(&cfg, method, out)?;
            for t in &diag.trained {
                let last = t.loss.last().copied().unwrap_or(f64::NAN);
                println!("{:<10} candidates {:>6}  final loss {last:.5}", t.group_id, t.n_candidates);
            }
            for (g, n) in &diag.skipped {
                println!("{g:<10} skipped, {n} candidates");
            }
            for g in &diag.single_variant {
                println!("{g:<10} single variant, no model");
            }
            println!("wrote {}", path.display());
        }
        Command::Eval { bundle } => {
            let (report, json, csv) = cmd_eval(&cfg, &bundle, out)?;
            print!("{}", format_report_table(&report));
            println!("wrote {} and {}", json.display(), csv.display());
        }
        Command::Infer { bundle, scenes } => {
            let (path, n) = cmd_infer(&cfg, &bundle, &scenes, out)?;
            println!("wrote {n} predictions to {}", path.display());
        }
        Command::Compare => {
            let (summary, csv, json) = cmd_compare(&cfg, out)?;
            for (name, m) in [("gbdt", &summary.gbdt), ("setnet", &summary.setnet)] {
                match (m.macro_accuracy, &m.error) {
                    (Some(a), _) => println!("{name:<7} macro accuracy {a:.4}"),
                    (None, Some(e)) => println!("{name:<7} failed: {e}"),
                    (None, None) => {}
                }
            }
            println!("setnet wins {}/{} groups", summary.setnet_wins, summary.n_groups);
            println!("wrote {} and {}", csv.display(), json.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
