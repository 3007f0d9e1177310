use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hybridseg::Result;
use hybridseg_cli::{commands, exit_code, Outcome, RunConfig, EXIT_INPUT, EXIT_NUMERICAL};

#[derive(Parser)]
#[command(name = "hybridseg", version, about = "Primitive segmentation of point clouds")]
struct Cli {
    /// key = value run configuration; flags and --set override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Format of written point clouds.
    #[arg(long, global = true, value_parser = ["xyz", "ply"])]
    format: Option<String>,
    /// Config override, repeatable: --set key=value.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normals and surface variation.
    Features {
        #[arg(long)]
        input: PathBuf,
    },
    /// Per-segment primitive fit and residuals.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// plane, sphere, cylinder, cone or auto.
        #[arg(long = "type")]
        fit_type: Option<String>,
    },
    /// Full segmentation pipeline.
    Segment {
        #[arg(long)]
        input: PathBuf,
        /// Ground-truth labels; adds metrics.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Query sampling with UDF labels.
    Implicit {
        #[arg(long)]
        input: PathBuf,
    },
    /// FPS patches and a random patch mask.
    Mask {
        #[arg(long)]
        input: PathBuf,
    },
    /// Metrics of predicted against ground-truth labels.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Point cloud, needed for geometric metrics.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        pred_segments: Option<PathBuf>,
        #[arg(long)]
        gt_segments: Option<PathBuf>,
    },
    /// Linear-autoencoder subspace and derivative checks.
    AeVerify,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set("seed", s.to_string())?;
    }
    if let Some(f) = &cli.format {
        cfg.set("format", f.as_str())?;
    }
    match &cli.command {
        Command::Fit { fit_type: Some(t), .. } => cfg.set("fit_type", t.as_str())?,
        Command::Segment { labels: Some(l), .. } => cfg.set("labels", l.display().to_string())?,
        _ => {}
    }
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::Features { input } => commands::cmd_features(input, &cfg, out),
        Command::Fit { input, labels, .. } => commands::cmd_fit(input, labels, &cfg, out),
        Command::Segment { input, .. } => commands::cmd_segment(input, &cfg, out),
        Command::Implicit { input } => commands::cmd_implicit(input, &cfg, out),
        Command::Mask { input } => commands::cmd_mask(input, &cfg, out),
        Command::Eval {
            pred,
            gt,
            input,
            pred_segments,
            gt_segments,
        } => commands::cmd_eval(
            pred,
            gt,
            input.as_deref(),
            (pred_segments.as_deref(), gt_segments.as_deref()),
            &cfg,
            out,
        ),
        Command::AeVerify => commands::cmd_ae_verify(&cfg, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HYBRIDSEG_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(EXIT_INPUT as u8);
    }
    match run(&cli) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string(outcome.summary()).expect("serialisable"));
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: verification failed (see {})", cli.out.display());
                ExitCode::from(EXIT_NUMERICAL as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()) as u8)
        }
    }
}

