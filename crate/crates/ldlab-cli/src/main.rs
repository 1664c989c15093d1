use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ldlab_cli::config::{self, Config};
use ldlab_cli::manifest::{resolve_run_dir, Manifest};
use ldlab_cli::plots::emit_plots;
use ldlab_cli::profiles;
use ldlab_cli::runners;

/// Numerical laboratory for correlation decay and large deviations of
/// chaotic interval maps.
#[derive(Parser)]
#[command(name = "ldlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file (sectioned key = value text).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Named preset (p1..p7) applied before the config file.
    #[arg(long, global = true)]
    profile: Option<String>,

    /// Override a config value: --set section.key=value (repeatable).
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    /// Run directory (default: runs/TIMESTAMP-CONFIGHASH).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sample-parallel stages (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Build the Ulam operator and measure + fit the decay curve.
    Decay,
    /// Estimate large-deviation probabilities over an (n, epsilon) grid.
    Ld,
    /// Run the verification chain (or a named profile's checks).
    Verify,
    /// Render SVG plots for an existing run manifest.
    Plots {
        /// Path to manifest.json of the run to plot.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// decay + ld + verify + plots in one run directory.
    All,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();

    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .context("initializing worker pool")?;
    }

    if let Command::Plots { manifest } = &cli.command {
        let run_dir = manifest
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut m = Manifest::load(manifest)?;
        let t0 = Instant::now();
        let written = emit_plots(&mut m, &run_dir)?;
        m.timings_ms
            .insert("plots".into(), t0.elapsed().as_millis());
        m.save(&run_dir)?;
        if written.is_empty() {
            println!("no curves to plot");
        } else {
            for f in written {
                println!("wrote {}", run_dir.join(f).display());
            }
        }
        return Ok(true);
    }

    let file_text = match &cli.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?,
        ),
        None => None,
    };
    let cfg: Config =
        config::resolve(cli.profile.as_deref(), file_text.as_deref(), &cli.overrides)?;
    let config_text = cfg.to_text();
    let seed = cfg.seed()?;

    // The --workers flag wins; otherwise honor the [run] workers key.
    if cli.workers == 0 {
        let workers = cfg.get_usize("run", "workers")?;
        if workers > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global()
                .context("initializing worker pool")?;
        }
    }

    let command_name = match &cli.command {
        Command::Decay => "decay",
        Command::Ld => "ld",
        Command::Verify => "verify",
        Command::All => "all",
        Command::Plots { .. } => unreachable!(),
    };
    let mut manifest = Manifest::new(command_name, seed, config_text);
    let run_dir = resolve_run_dir(cli.out.as_deref(), &manifest.config_sha256);
    std::fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;

    let stage = |manifest: &mut Manifest, name: &str| -> Result<()> {
        let t0 = Instant::now();
        let out = match name {
            "decay" => runners::decay_stage(&cfg, &run_dir)?,
            "ld" => runners::ld_stage(&cfg, &run_dir)?,
            "verify" => match &cli.profile {
                Some(p) => profiles::run_profile(p, &cfg, &run_dir)?,
                None => runners::verify_stage(&cfg, &run_dir)?,
            },
            _ => unreachable!(),
        };
        manifest.absorb(name, out, t0.elapsed().as_millis());
        Ok(())
    };

    match cli.command {
        Command::Decay => stage(&mut manifest, "decay")?,
        Command::Ld => stage(&mut manifest, "ld")?,
        Command::Verify => stage(&mut manifest, "verify")?,
        Command::All => {
            stage(&mut manifest, "decay")?;
            stage(&mut manifest, "ld")?;
            stage(&mut manifest, "verify")?;
            let t0 = Instant::now();
            emit_plots(&mut manifest, &run_dir)?;
            manifest
                .timings_ms
                .insert("plots".into(), t0.elapsed().as_millis());
        }
        Command::Plots { .. } => unreachable!(),
    }

    for check in &manifest.checks {
        println!(
            "{} {} — {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    let path = manifest.save(&run_dir)?;
    manifest.verify_artifacts(&run_dir)?;
    println!("manifest: {}", path.display());
    Ok(manifest.all_passed())
}
