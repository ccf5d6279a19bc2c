use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use oblivion_core::config::CampaignFile;
use oblivion_core::controller::{Campaign, CampaignError, Journal, Overhead};
use oblivion_core::report::{build_report, render, Format};

mod agent;

const EXIT_ABORT: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "oblivion",
    version,
    about = "Exception-injection resilience campaigns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the reference execution and list perturbation points.
    Detect(Opts),
    /// Classify every reached point.
    Classify(Opts),
    /// Collect candidate failure-oblivious methods.
    Discover(Opts),
    /// Assess every candidate.
    Assess(Opts),
    /// Render the report from a complete journal.
    Report(Opts),
    /// Full pipeline followed by the report.
    Run(Opts),
    /// Check a config file without running anything.
    ValidateConfig(Opts),
    /// Simulator wired to the agent protocol, for use as an external target.
    #[command(hide = true)]
    AgentSim(agent::AgentArgs),
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count (simulator backend only).
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long, default_value = "human")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Detect,
    Classify,
    Discover,
    Assess,
}

enum Failure {
    Usage(anyhow::Error),
    Abort(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Abort(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::AgentSim(args) => return agent::run(args),
        Command::ValidateConfig(o) => load(&o).map(|cfg| {
            println!("{}: ok", o.config.display());
            drop(cfg);
        }),
        Command::Detect(o) => stage(&o, Stage::Detect, false),
        Command::Classify(o) => stage(&o, Stage::Classify, false),
        Command::Discover(o) => stage(&o, Stage::Discover, false),
        Command::Assess(o) => stage(&o, Stage::Assess, false),
        Command::Report(o) => stage(&o, Stage::Assess, true),
        Command::Run(o) => stage(&o, Stage::Assess, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Abort(e)) => {
            eprintln!("aborted: {e:#}");
            ExitCode::from(EXIT_ABORT)
        }
    }
}

fn load(o: &Opts) -> Result<CampaignFile, Failure> {
    let mut cfg = CampaignFile::load(&o.config).map_err(|e| Failure::Usage(e.into()))?;
    if let Some(t) = o.timeout_ms {
        if t == 0 {
            return Err(Failure::Usage(anyhow::anyhow!(
                "--timeout-ms must be positive"
            )));
        }
        cfg.campaign.oracle.set_timeout_ms(t);
    }
    if let Some(f) = &o.filter {
        cfg.campaign.filter = f.clone();
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    if let Some(n) = o.parallel {
        if n == 0 {
            return Err(Failure::Usage(anyhow::anyhow!(
                "--parallel must be at least 1"
            )));
        }
        if n > 1 && !cfg.target.is_simulator() {
            return Err(Failure::Usage(anyhow::anyhow!(
                "--parallel applies to the simulator backend only"
            )));
        }
        cfg.campaign.parallelism = n;
    }
    cfg.campaign.experiment_root = Some(cfg.experiments_dir());
    Ok(cfg)
}

fn stage(o: &Opts, upto: Stage, report: bool) -> Result<(), Failure> {
    let cfg = load(o)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let journal = Journal::open(&cfg.journal_path())?;
    let target = cfg.target.build().map_err(|e| Failure::Usage(e.into()))?;
    let mut campaign = Campaign::new(target.as_ref(), cfg.campaign.clone(), journal);

    let outcome = advance(&mut campaign, upto);
    for w in &campaign.state().warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "{} workload executions ({} new)",
        campaign.state().experiments,
        campaign.executed()
    );
    outcome?;

    if !report {
        print_stage(&campaign, upto);
        return Ok(());
    }
    let overhead = overhead(&cfg, &campaign)?;
    let report = build_report(campaign.state(), overhead.as_ref())?;
    write(
        &cfg.out.join("report.json"),
        &render(&report, Format::Structured),
    )?;
    write(&cfg.out.join("report.txt"), &render(&report, Format::Human))?;
    write(
        &cfg.out.join("matrix.csv"),
        &render(&report, Format::CsvMatrix),
    )?;
    print!("{}", render(&report, o.format));
    Ok(())
}

fn advance(c: &mut Campaign<'_>, upto: Stage) -> Result<(), CampaignError> {
    c.detect()?;
    if upto >= Stage::Classify {
        c.classify()?;
    }
    if upto >= Stage::Discover {
        c.discover()?;
    }
    if upto >= Stage::Assess {
        c.assess()?;
    }
    Ok(())
}

/// Measured once per output directory, then reused.
fn overhead(cfg: &CampaignFile, c: &Campaign<'_>) -> Result<Option<Overhead>, Failure> {
    let path = cfg.out.join("overhead.json");
    if path.exists() {
        let text = fs::read_to_string(&path)?;
        return Ok(Some(
            serde_json::from_str(&text).with_context(|| format!("reading {}", path.display()))?,
        ));
    }
    if cfg.overhead_runs == 0 {
        return Ok(None);
    }
    let o = c.measure_overhead(cfg.overhead_runs)?;
    if o.baseline_ms <= 0.0 {
        eprintln!("warning: baseline too fast to time; overhead not reported");
        return Ok(None);
    }
    write(&path, &(serde_json::to_string_pretty(&o)? + "\n"))?;
    Ok(Some(o))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn print_stage(c: &Campaign<'_>, stage: Stage) {
    let s = c.state();
    match stage {
        Stage::Detect => {
            for p in &s.points {
                println!("{p}\t{}", s.reach_counts.get(p).copied().unwrap_or(0));
            }
        }
        Stage::Classify => {
            for p in &s.points {
                if let Some(cat) = s.original_category(p) {
                    let flag = if s.anomalies.contains(p) {
                        "\tanomaly"
                    } else {
                        ""
                    };
                    println!("{p}\t{cat}{flag}");
                }
            }
        }
        Stage::Discover => {
            for b in &s.candidates {
                println!("{}\t{}", b.point, b.handler);
            }
        }
        Stage::Assess => {
            for (b, a) in &s.assessments {
                let outcome = match (a.achieved, a.status) {
                    (Some(cat), Some(st)) => format!("{cat}\t{st:?}"),
                    _ => "excluded".to_string(),
                };
                println!("{}\t{}\t{outcome}", b.point, b.handler);
            }
        }
    }
}
