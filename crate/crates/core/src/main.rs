use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bbayes::chain::{ChainModel, ChainReport, ChainSummary, KSweepRow};
use bbayes::harness::experiment::{for_each_replication, summarize};
use bbayes::harness::output::{
    self, read_json, read_steps, replication_dir, write_json, write_replication, Manifest, MANIFEST_FILE, SCORE_FILE,
    STEPS_FILE,
};
use bbayes::harness::ExperimentConfig;
use bbayes::scoring::{forecast_gap_series, truth_ratio_series, ScoreReport};

#[derive(Parser)]
#[command(name = "bbayes", version, about = "Mixture, search-and-revise and forgetting forecasters on simulated data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the forecasters of a config on generated streams.
    Run(RunArgs),
    /// Exact stationary analysis of the forgetting variant.
    Chain(ChainArgs),
    /// Validate stored runs and recompute their score reports.
    Score(ScoreArgs),
    /// Gap and ratio series between two forecasters of a stored run.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replications: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Trial lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the recomputed reports here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    replication: u64,
    #[arg(long, default_value = "sr")]
    a: String,
    #[arg(long, default_value = "mixture")]
    b: String,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    windows: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(n) = args.replications {
        config.run.replications = n;
    }
    let out = match args.out.or_else(|| config.run.out.clone()) {
        Some(out) => out,
        None => bail!("no output directory: pass --out or set run.out"),
    };
    // the echo must not depend on where the files land
    config.run.out = None;
    let exp = config.build()?;
    create_dir(&out)?;
    let master = config.run.seed;
    let written = for_each_replication(&exp, master, |record| write_replication(&out, &exp, &record))?;
    let (entries, reps): (Vec<_>, Vec<_>) = written.into_iter().unzip();
    let summary = summarize(&exp, reps);
    output::write_run_files(&out, &exp, &config, master, entries, &summary)?;
    if !args.quiet {
        println!("{} replications of {} steps written to {}", summary.replications, summary.horizon, out.display());
        for f in &summary.forecasters {
            println!(
                "{:<8} mean U_T {:>10.6}  first-window gap {:.6}  final-window gap {:.6}",
                f.name, f.mean_u_t, f.mean_first_window_gap_to_truth, f.mean_final_window_gap_to_truth
            );
        }
    }
    Ok(())
}

fn chain(args: ChainArgs) -> anyhow::Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let exp = config.build()?;
    let ks = args.k.unwrap_or_else(|| exp.chain.k.clone());
    if ks.is_empty() || ks.contains(&0) {
        bail!("--k needs trial lengths of at least 1");
    }
    let mut chains = Vec::new();
    let mut k_sweep = Vec::new();
    for &k in &ks {
        let inst = exp.chain_instance(k)?;
        let model = ChainModel::build(&inst)?;
        let summary = ChainSummary::new(&inst, &model);
        k_sweep.push(KSweepRow { k, pi_c: summary.pi_c, state_count: summary.state_count });
        if !args.quiet {
            println!("k={k:<4} states={:<8} pi(C)={:.12} pi(D)={:.12}", summary.state_count, summary.pi_c, summary.pi_d);
        }
        chains.push(summary);
    }
    let report = ChainReport { version: 1, chains, k_sweep };
    match args.out {
        Some(out) => {
            create_dir(&out)?;
            write_json(&out.join("chain.json"), &report)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn find_manifest(input: &Path) -> anyhow::Result<(PathBuf, Manifest, Option<String>)> {
    if input.join(MANIFEST_FILE).is_file() {
        return Ok((input.to_path_buf(), read_json(&input.join(MANIFEST_FILE))?, None));
    }
    if let Some(parent) = input.parent() {
        if parent.join(MANIFEST_FILE).is_file() {
            let dir = input.file_name().map(|d| d.to_string_lossy().into_owned());
            return Ok((parent.to_path_buf(), read_json(&parent.join(MANIFEST_FILE))?, dir));
        }
    }
    bail!("no {MANIFEST_FILE} in {} or its parent", input.display())
}

#[derive(Serialize)]
struct RecomputedScores {
    version: u32,
    replications: Vec<RecomputedEntry>,
}

#[derive(Serialize)]
struct RecomputedEntry {
    replication: u64,
    report: ScoreReport,
}

fn score(args: ScoreArgs) -> anyhow::Result<()> {
    let (root, manifest, only) = find_manifest(&args.input)?;
    let mut entries = Vec::new();
    for entry in &manifest.replications {
        if only.as_deref().is_some_and(|d| d != entry.dir) {
            continue;
        }
        let dir = root.join(&entry.dir);
        let steps = read_steps(&dir.join(STEPS_FILE), &manifest)?;
        let series = steps
            .forecasters
            .iter()
            .map(|n| Ok((n.clone(), steps.realized(n)?)))
            .collect::<bbayes::Result<Vec<_>>>()?;
        let report = ScoreReport::from_series(&series)?;
        let stored: ScoreReport = read_json(&dir.join(SCORE_FILE))?;
        for f in &report.forecasters {
            let Some(s) = stored.get(&f.name) else { bail!("{}: {} has no `{}` entry", entry.dir, SCORE_FILE, f.name) };
            // rows carry 12 significant digits
            if (s.u_t - f.u_t).abs() > 1e-9 || s.steps != f.steps {
                bail!("{}: stored U_T {} for `{}` disagrees with recomputed {}", entry.dir, s.u_t, f.name, f.u_t);
            }
        }
        if !args.quiet {
            for f in &report.forecasters {
                println!("{} {:<8} U_T {:.12}", entry.dir, f.name, f.u_t);
            }
        }
        entries.push(RecomputedEntry { replication: entry.replication, report });
    }
    if entries.is_empty() {
        bail!("no replications matched {}", args.input.display());
    }
    if let Some(out) = args.out {
        write_json(&out, &RecomputedScores { version: 1, replications: entries })?;
    }
    Ok(())
}

fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let (root, manifest, _) = find_manifest(&args.input)?;
    let dir = replication_dir(&root, args.replication);
    let steps = read_steps(&dir.join(STEPS_FILE), &manifest)?;
    let report = forecast_gap_series(steps.series(&args.a)?, steps.series(&args.b)?, &args.epsilons, args.windows)?;
    let ratios = truth_ratio_series(&steps.realized(&args.a)?, &steps.realized(&args.b)?)?;
    let out = args.out.unwrap_or(dir);
    create_dir(&out)?;
    let stem = format!("{}_vs_{}", args.a, args.b);
    for (suffix, values) in [("gap", &report.gaps), ("ratio", &ratios)] {
        let path = out.join(format!("{stem}_{suffix}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["t", "value"])?;
        for (t, v) in values.iter().enumerate() {
            w.write_record([(t + 1).to_string(), output::fmt_num(*v)])?;
        }
        w.flush()?;
    }
    write_json(&out.join(format!("{stem}_convergence.json")), &report)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Chain(a) => chain(a),
        Command::Score(a) => score(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
