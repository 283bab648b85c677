//! Command-line harness: generate synthetic datasets, build graphs, train,
//! detect, attack, evaluate robustness, and export embeddings.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use provguard::adversary::{AttackKind, AttackPhase, AttackSpec};
use provguard::config::RunConfig;
use provguard::error::{Error, Result};
use provguard::pipeline;
use provguard::synth::{self, Profile, SynthConfig};

#[derive(Parser)]
#[command(name = "provguard", version, about = "Provenance-graph anomaly detection toolkit")]
struct Cli {
    /// Config file with dotted keys (encoder.lr=0.001); defaults apply
    /// without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, repeatable: --set encoder.lr=0.01
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset into data.dir
    Gen {
        /// graph | node
        #[arg(long, default_value = "graph")]
        profile: String,
        /// Total benign instances (the last --holdout go to the test split)
        #[arg(long, default_value_t = 100)]
        benign: usize,
        #[arg(long, default_value_t = 25)]
        malicious: usize,
        #[arg(long, default_value_t = 25)]
        holdout: usize,
    },
    /// Parse one event file and print (or write) the canonical graph dump
    BuildGraph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train encoder + detector on the train split and persist the artifact
    Train,
    /// Score the test split against the artifact and write reports
    Detect,
    /// Apply an attack descriptor (e.g. cgpa:y=0.2:seed=7) and write the
    /// attacked dataset
    Attack {
        #[arg(long)]
        attack: String,
        /// detection | training; must match the attack kind
        #[arg(long)]
        phase: Option<String>,
        #[arg(long, default_value = "attacked-data")]
        out: PathBuf,
    },
    /// Run a grid of detection-phase attacks and report metrics plus ACR
    EvalRobustness {
        #[arg(long, default_value = "gspa,gfpa,cgpa")]
        attacks: String,
        #[arg(long, default_value = "0.1,0.2,0.5")]
        rates: String,
    },
    /// Export embeddings of a split as id<TAB>floats lines
    ExportEmbeddings {
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "embeddings.tsv")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    for set in &cli.sets {
        let (key, value) = set
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {set:?}")))?;
        cfg.set_key(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Gen {
            ref profile,
            benign,
            malicious,
            holdout,
        } => {
            let profile = Profile::parse(profile)
                .ok_or_else(|| Error::Usage(format!("profile must be graph or node, got {profile:?}")))?;
            if benign < 2 {
                return Err(Error::Usage("need at least 2 benign instances".into()));
            }
            let ds = synth::generate(&SynthConfig {
                profile,
                benign,
                malicious,
                holdout,
                seed: cfg.seed,
            });
            synth::write_dataset(&ds, &cfg.data_dir)?;
            println!(
                "wrote {} train / {} test instances ({} labels) to {}",
                ds.train.len(),
                ds.test.len(),
                ds.test_labels.len(),
                cfg.data_dir.display()
            );
            Ok(())
        }
        Command::BuildGraph { input, output } => {
            let (dump, report) = pipeline::cmd_build_graph(&cfg, &input)?;
            eprintln!(
                "parsed: {} accepted, {} rejected, {} skipped",
                report.accepted, report.rejected, report.skipped
            );
            for (line, reason) in &report.rejections {
                eprintln!("  line {line}: {reason}");
            }
            match output {
                Some(path) => std::fs::write(path, dump)?,
                None => print!("{dump}"),
            }
            Ok(())
        }
        Command::Train => {
            let summary = pipeline::cmd_train(&cfg)?;
            println!("trained on {} graphs", summary.graphs);
            println!(
                "loss history: [{}]",
                summary
                    .loss_history
                    .iter()
                    .map(|l| format!("{l:.4}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            println!("d_mean: {:.6}", summary.d_mean);
            println!("theta:  {:.6}", summary.theta);
            println!("artifact: {}", summary.artifact_path.display());
            Ok(())
        }
        Command::Detect => {
            let out = pipeline::cmd_detect(&cfg)?;
            println!("scored {} entities", out.scored.len());
            let anomalous = out
                .scored
                .iter()
                .filter(|s| s.verdict == provguard::detector::Verdict::Anomalous)
                .count();
            println!("verdicts: {anomalous} anomalous, {} benign", out.scored.len() - anomalous);
            if let Some(s) = &out.summary {
                println!(
                    "normalized scores: min {:.4}  p50 {:.4}  p95 {:.4}  max {:.4}",
                    s.min, s.p50, s.p95, s.max
                );
            }
            if let Some(r) = &out.report {
                println!("metrics: {}", r.summary_line());
            }
            if let Some(p) = &out.scores_path {
                println!("scores: {}", p.display());
            }
            Ok(())
        }
        Command::Attack { attack, phase, out } => {
            if let Some(phase) = &phase {
                let wanted = AttackPhase::parse(phase)
                    .ok_or_else(|| Error::Usage(format!("bad phase {phase:?}")))?;
                let spec = AttackSpec::parse_descriptor(&attack)?;
                if spec.phase != wanted {
                    return Err(Error::Usage(format!(
                        "{} is a {}-phase attack",
                        spec.kind.as_str(),
                        spec.phase.as_str()
                    )));
                }
            }
            let result = pipeline::cmd_attack(&cfg, &attack, &out)?;
            println!(
                "attacked {} split ({} graphs) with {} → {}",
                result.split,
                result.graphs,
                result.spec,
                result.out_dir.display()
            );
            Ok(())
        }
        Command::EvalRobustness { attacks, rates } => {
            let attacks = parse_attack_list(&attacks)?;
            let rates = parse_rate_list(&rates)?;
            let report = pipeline::cmd_eval_robustness(&cfg, &attacks, &rates, true)?;
            print!("{}", pipeline::render_robustness_table(&report.clean, &report.cells));
            if let Some(p) = &report.table_path {
                println!("table: {}", p.display());
            }
            Ok(())
        }
        Command::ExportEmbeddings { split, out } => {
            let count = pipeline::cmd_export_embeddings(&cfg, &split, &out)?;
            println!("exported {count} embeddings to {}", out.display());
            Ok(())
        }
    }
}

fn parse_attack_list(s: &str) -> Result<Vec<AttackKind>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| AttackKind::parse(p).ok_or_else(|| Error::Usage(format!("unknown attack {p:?}"))))
        .collect()
}

fn parse_rate_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let rate: f64 = p
                .parse()
                .map_err(|_| Error::Usage(format!("bad rate {p:?}")))?;
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Usage(format!("rate {rate} outside [0,1]")));
            }
            Ok(rate)
        })
        .collect()
}
