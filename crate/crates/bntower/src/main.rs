use anyhow::Context;
use bntower::cli::{run_command, stage_plan, RunConfig, SUBCOMMANDS};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Bubble-tower construction for the Brezis-Nirenberg problem on the ball:
/// constants, Robin functions, projected linear solves, the weighted fixed
/// point, the reduced system and the full radial PDE.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// One of: constants, robin, tparams, ansatz, linsolve, picard, nu,
    /// reduced, solve, sweep, pipeline.
    command: String,

    /// TOML configuration file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for the CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Ambient dimension (>= 7).
    #[arg(long)]
    n: Option<u32>,

    /// Number of bubbles.
    #[arg(long)]
    k: Option<usize>,

    /// Comma-separated list of eps values.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,

    /// Continuation seeding: "ansatz" or "previous".
    #[arg(long)]
    seed_mode: Option<String>,

    /// Print the resolved stage plan and exit without computing.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<bntower::Error>()
                .map(|e| e.exit_code())
                .unwrap_or(2);
            ExitCode::from(code as u8)
        }
    }
}

fn run(args: Args) -> anyhow::Result<()> {
    if !SUBCOMMANDS.contains(&args.command.as_str()) {
        return Err(bntower::Error::InvalidConfig(format!(
            "unknown subcommand '{}'; expected one of {}",
            args.command,
            SUBCOMMANDS.join(", ")
        ))
        .into());
    }
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(n) = args.n {
        cfg.run.n = n;
    }
    if let Some(k) = args.k {
        cfg.run.k = k;
    }
    if let Some(eps) = args.eps {
        cfg.run.eps = eps;
    }
    if let Some(mode) = args.seed_mode {
        cfg.run.seed_mode = mode;
    }
    if let Some(out) = &args.out {
        cfg.run.out_dir = out.display().to_string();
    }

    if args.dry_run {
        println!("command: {}", args.command);
        println!("config_hash: {}", cfg.hash());
        for stage in stage_plan(&args.command) {
            println!("stage: {stage}");
        }
        return Ok(());
    }

    let output = run_command(&args.command, &cfg)?;
    let out_dir = PathBuf::from(&cfg.run.out_dir);
    for table in &output.tables {
        let path = table.write_to(&out_dir)?;
        println!("wrote {}", path.display());
    }
    if let Some(summary) = &output.summary {
        let path = out_dir.join("summary.txt");
        std::fs::write(&path, summary)?;
        println!("wrote {}", path.display());
        print!("{summary}");
    }
    Ok(())
}
