use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sleepwake::config::PipelineConfig;
use sleepwake::evaluation::{evaluate, read_labels_csv};
use sleepwake::features::FeatureTable;
use sleepwake::ingest::Manifest;
use sleepwake::pipeline::{diagnose, extract_run_features, ingest_subjects, run_pipeline, select_subjects};
use sleepwake::synth::{fig3_experiment, inject_abnormal, simulate_cohort, AbnormalKind, SimConfig};
use sleepwake::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sleepwake",
    version,
    about = "Sleep/wake detection and feature extraction for wearable recordings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON, or TOML by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Cohort {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated subject IDs to process.
    #[arg(long, value_delimiter = ',')]
    subjects: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment raw streams into epoch summaries.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cohort: Cohort,
    },
    /// Run the full pipeline: screening, HMM bootstrap, sequential labeling, sessions, features.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cohort: Cohort,
    },
    /// Re-extract the feature table from a finished run directory.
    Features {
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Keep a single study day.
        #[arg(long, allow_hyphen_values = true)]
        day: Option<i64>,
    },
    /// Fit per-feature outcome models with leave-one-out AUC.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        /// CSV with subject and binary and/or ordinal columns.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        day: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic cohort (raw CSVs, truth and manifest).
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// A SimConfig or an array of them; a default cohort is built otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        subjects: usize,
        #[arg(long, default_value_t = 3)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Share of epochs replaced by abnormal segments in the default cohort.
        #[arg(long, default_value_t = 0.05)]
        abnormal: f64,
    },
    /// Separability indices for two bivariate normal classes at mu = 0, 1.5, 3.
    Fig3 {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 100)]
        n_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write fig3.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PCA scatter data and marginal SI screening for a finished run.
    Diagnose {
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<(PipelineConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
    Ok((cfg, out))
}

fn read_sim_configs(path: &Path) -> Result<Vec<SimConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let configs = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|c| vec![c])
    };
    configs.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { common, cohort } => {
            let (cfg, out) = load_config(&common)?;
            let manifest = Manifest::load(&cohort.manifest)?;
            let subjects = select_subjects(&manifest, cohort.subjects.as_deref())?;
            let mut failed = 0;
            for (s, r) in subjects.iter().zip(ingest_subjects(&subjects, &cfg, &out)?) {
                match r {
                    Ok(series) => println!("{}: {} epochs", s.id, series.len()),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{}: {e}", s.id);
                    }
                }
            }
            Ok(if failed > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Detect { common, cohort } => {
            let (cfg, out) = load_config(&common)?;
            let manifest = Manifest::load(&cohort.manifest)?;
            let subjects = select_subjects(&manifest, cohort.subjects.as_deref())?;
            let report = run_pipeline(&subjects, &cfg, &out)?;
            for s in &report.subjects {
                match &s.error {
                    Some(e) => eprintln!("{}: failed: {e}", s.subject),
                    None => println!(
                        "{}: {:?}, {} sessions, {} feature days",
                        s.subject, s.status, s.n_sessions, s.feature_days
                    ),
                }
            }
            Ok(if report.failed().is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Features { out, day } => {
            let table = extract_run_features(&out, day)?;
            let path = match day {
                Some(d) => out.join(format!("features_day{d}.csv")),
                None => out.join("features.csv"),
            };
            table.write_csv(&path)?;
            println!("{} rows -> {}", table.rows.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            features,
            labels,
            day,
            out,
        } => {
            let table = FeatureTable::read_csv(&features)?;
            let labels = read_labels_csv(&labels)?;
            let e = evaluate(&table, &labels, day)?;
            e.write(&out)?;
            for r in e.binary.iter().take(5) {
                println!("{:<40} beta1 {:>9.4}  AUC {:.3}", r.feature, r.beta1, r.auc);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            out,
            config,
            subjects,
            days,
            seed,
            abnormal,
        } => {
            let configs = match config {
                Some(p) => read_sim_configs(&p)?,
                None => (0..subjects)
                    .map(|i| {
                        let mut c = SimConfig::new(format!("sim{:02}", i + 1), days, seed + i as u64);
                        if abnormal > 0.0 {
                            inject_abnormal(&mut c, abnormal, &AbnormalKind::ALL, 30, seed + 1000 + i as u64)?;
                        }
                        Ok(c)
                    })
                    .collect::<Result<_>>()?,
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
            let text = serde_json::to_string_pretty(&configs)?;
            std::fs::write(out.join("sim-config.json"), text + "\n")?;
            let manifest = simulate_cohort(&out, &configs)?;
            println!(
                "{} subjects -> {}",
                manifest.subjects.len(),
                out.join("manifest.json").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Fig3 {
            seeds,
            n_per_class,
            seed,
            out,
        } => {
            let list: Vec<u64> = (seed..seed + seeds).collect();
            let mut rows = Vec::new();
            println!("mu     SI_projection  SI_euclidean  (n = {n_per_class} per class, {seeds} seeds)");
            for mu in [0.0, 1.5, 3.0] {
                let r = fig3_experiment(mu, n_per_class, &list)?;
                println!("{mu:<6} {:<14.4} {:.4}", r.si_projection, r.si_euclidean);
                rows.push(r);
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
                let mut w = csv::Writer::from_path(dir.join("fig3.csv"))?;
                for r in &rows {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnose { out } => {
            let d = diagnose(&out)?;
            for m in &d.marginal {
                println!(
                    "{:<10} mean SI {:.3}{}",
                    m.variable.to_string(),
                    m.mean_si,
                    if m.recommended { "  *" } else { "" }
                );
            }
            for (k, e) in &d.errors {
                eprintln!("{k}: {e}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
