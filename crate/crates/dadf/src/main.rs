use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use dadf::checkpoint::load_checkpoint;
use dadf::config;
use dadf::datagen::{generate, GenerateOptions};
use dadf::manifest::load_dataset;
use dadf::report::evaluate;

#[derive(Parser)]
#[command(name = "dadf", version, about = "Face forgery detection and localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes logs and checkpoints to `out.dir`.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `--set train.epochs=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Evaluate a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for report.txt / report.json; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ablation grid.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write input | ground truth | prediction | attention panels.
    Viz {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic dataset tools.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
    /// Print the default config.
    Config,
}

#[derive(Subcommand)]
enum DataCommand {
    /// Generate train/val/test splits with manifests.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Train, val and test counts.
        #[arg(long, default_value = "200,50,100")]
        counts: String,
        /// Also write a compression-shifted copy of the test split.
        #[arg(long)]
        shifted: bool,
    },
}

fn parse_counts(s: &str) -> anyhow::Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad --counts `{s}`"))?;
    match parts.as_slice() {
        &[a, b, c] => Ok([a, b, c]),
        _ => bail!("--counts takes three comma-separated numbers"),
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train { config, set } => {
            let cfg = config::load(config.as_deref(), &set)?;
            let out = dadf::train::train(&cfg)?;
            println!("best epoch {} -> {}", out.best_epoch, out.best_checkpoint.display());
            for path in &cfg.data.test {
                let (_, samples) = load_dataset(path)?;
                let (model, _, _) = load_checkpoint(&out.best_checkpoint)?;
                let report = evaluate(&model, &samples, cfg.train.eval_batch)?;
                let stem = format!("report_{}", path.file_stem().and_then(|s| s.to_str()).unwrap_or("test"));
                report.write(&cfg.out_dir, &stem)?;
                println!("{}: {}", path.display(), report.summary_line());
            }
        }
        Command::Eval { ckpt, manifest, out } => {
            let (model, cfg, _) = load_checkpoint(&ckpt)?;
            let (_, samples) = load_dataset(&manifest)?;
            let report = evaluate(&model, &samples, cfg.train.eval_batch)?;
            let dir = out.unwrap_or_else(|| ckpt.parent().map(PathBuf::from).unwrap_or_default());
            report.write(&dir, "report")?;
            print!("{}", report.to_text());
        }
        Command::Ablate { config, set } => {
            let cfg = config::load(config.as_deref(), &set)?;
            let rows = dadf::ablate::ablate(&cfg)?;
            print!("{}", dadf::ablate::render_markdown(&rows));
        }
        Command::Viz { ckpt, manifest, out } => {
            let (model, cfg, _) = load_checkpoint(&ckpt)?;
            let (_, samples) = load_dataset(&manifest)?;
            let paths = dadf::viz::visualize(&model, &samples, &out, cfg.train.eval_batch)?;
            println!("wrote {} panels to {}", paths.len(), out.display());
        }
        Command::Data {
            command:
                DataCommand::Generate {
                    out,
                    seed,
                    size,
                    counts,
                    shifted,
                },
        } => {
            let mut opts = GenerateOptions::desk(out, seed);
            opts.size = size;
            opts.counts = parse_counts(&counts)?;
            opts.shifted = shifted;
            let ds = generate(&opts)?;
            println!("train {}", ds.train.display());
            println!("val {}", ds.val.display());
            println!("test {}", ds.test.display());
            if let Some(p) = ds.test_shifted {
                println!("test_shifted {}", p.display());
            }
        }
        Command::Config => print!("{}", dadf::config::RunConfig::default().to_text()),
    }
    Ok(())
}
