use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use cascade_cli::{parse_config, run, Command};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cascade", version, about = "Cascading-failure experiments on coupled networks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; batch seeds are `seed, seed + 1, ...`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Heatmap grid step.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    /// Bisection tolerance on the attack size.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Edge list for network K, as `K=PATH`. Repeatable.
    #[arg(long = "edges", global = true, value_name = "K=PATH")]
    edges: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// One mean-field trajectory.
    Meanfield,
    /// A batch of Monte-Carlo runs.
    Simulate,
    /// Critical attack size by bisection.
    Critical,
    /// Surviving fraction over a grid of attack sizes.
    Sweep,
    /// Critical attack size of every fixed coupling on a grid.
    Heatmap,
    /// Side-by-side comparison of strategies.
    Compare,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    let path = cli.config.ok_or_else(|| anyhow!("--config is required"))?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    // overrides go through the parser so they get the same checks
    let mut extra = String::new();
    if let Some(s) = cli.seed {
        extra += &format!("seed = {s}\n");
    }
    if let Some(r) = cli.resolution {
        extra += &format!("resolution = {r}\n");
    }
    if let Some(t) = cli.tol {
        extra += &format!("tol = {t}\n");
    }
    if let Some(d) = &cli.out_dir {
        extra += &format!("out_dir = {}\n", d.display());
    }
    for e in &cli.edges {
        let (k, p) = e.split_once('=').ok_or_else(|| anyhow!("--edges expects K=PATH, got `{e}`"))?;
        let k: usize = k.parse().with_context(|| format!("--edges: bad network index `{k}`"))?;
        extra += &format!("network.{k}.edges = {p}\n");
    }
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    if !extra.is_empty() {
        cfg = merge(&cfg, &extra)?;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let command = match cli.command {
        Cmd::Meanfield => Command::MeanField,
        Cmd::Simulate => Command::Simulate,
        Cmd::Critical => Command::Critical,
        Cmd::Sweep => Command::Sweep,
        Cmd::Heatmap => Command::Heatmap,
        Cmd::Compare => Command::Compare,
    };
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let report = run(command, &cfg, &base)?;
    for line in &report.lines {
        println!("{line}");
    }
    println!("manifest: {}", report.manifest.display());
    Ok(())
}

/// Re-parses the normalized config with command-line values replacing its keys.
fn merge(cfg: &cascade_cli::RunConfig, extra: &str) -> Result<cascade_cli::RunConfig> {
    let overridden: Vec<&str> = extra.lines().filter_map(|l| l.split_once(" = ").map(|(k, _)| k)).collect();
    let mut text: String = cfg
        .emit()
        .lines()
        .filter(|l| {
            let key = l.split_once(" = ").map_or("", |(k, _)| k);
            let edge_override = key.starts_with("network.")
                && key.ends_with(".topology")
                && overridden.contains(&key.replace(".topology", ".edges").as_str());
            !overridden.contains(&key) && !edge_override
        })
        .map(|l| format!("{l}\n"))
        .collect();
    text += extra;
    parse_config(&text).context("in command-line overrides")
}
