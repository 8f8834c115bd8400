//! Per-subject orchestration and the artifact directory layout.
//!
//! ```text
//! <out>/epochs/<id>.csv      per-epoch summaries
//! <out>/anomaly/<id>.json    cutoff rules and abnormal share
//! <out>/hmm/<id>.json        bootstrap model selection
//! <out>/audit/<id>.jsonl     one line per sequential batch
//! <out>/timeline/<id>.csv    final per-epoch status
//! <out>/sessions/<id>.csv    sleep/wake sessions with assigned days
//! <out>/excluded/<id>.csv    category of each excluded epoch
//! <out>/excluded_counts.csv  category counts per subject
//! <out>/features.csv         cohort feature table
//! <out>/report.json          per-subject outcome
//! <out>/run-metadata.json    version, config hash, seed
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{
    marginal_si_screen, sequential_label, summarize_marginal, write_audit_jsonl, EpochStatus, InitialLabels,
    LabeledTimeline, MarginalSi, MarginalSummary, REST_WINDOW, SLEEP_WINDOW,
};
use crate::anomaly::{categorize_excluded, screen_subject, AbnormalReport, ExcludedCategory, ScreenedSeries};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::{extract_subject, FeatureRow, FeatureTable};
use crate::hmm::select_model;
use crate::ingest::{read_epochs_csv, write_epochs_csv, EpochSeries, Manifest, SubjectEntry};
use crate::pca::pca_diagnostics;
use crate::sessions::{build_sessions, read_sessions_csv, wake_epochs, write_sessions_csv, Session};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectStatus {
    Ok,
    Unusable,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectOutcome {
    pub subject: String,
    pub status: SubjectStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub origin_clock_hours: f64,
    pub n_epochs: usize,
    /// Final status per epoch; `unlabeled` counts usable epochs of unusable subjects.
    pub status_counts: BTreeMap<String, usize>,
    pub excluded_categories: BTreeMap<String, usize>,
    pub abnormal_proportion: Option<f64>,
    pub hmm_config: Option<String>,
    pub n_sessions: usize,
    pub feature_days: usize,
}

impl SubjectOutcome {
    fn empty(subject: &str, clock: f64) -> Self {
        SubjectOutcome {
            subject: subject.to_string(),
            status: SubjectStatus::Ok,
            error: None,
            origin_clock_hours: clock,
            n_epochs: 0,
            status_counts: BTreeMap::new(),
            excluded_categories: BTreeMap::new(),
            abnormal_proportion: None,
            hmm_config: None,
            n_sessions: 0,
            feature_days: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub subjects: Vec<SubjectOutcome>,
}

impl RunReport {
    pub fn failed(&self) -> Vec<&SubjectOutcome> {
        self.subjects
            .iter()
            .filter(|s| s.status == SubjectStatus::Failed)
            .collect()
    }

    pub fn unusable(&self) -> Vec<&SubjectOutcome> {
        self.subjects
            .iter()
            .filter(|s| s.status == SubjectStatus::Unusable)
            .collect()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("report.json");
        let file = File::open(&path).map_err(|e| Error::file(&path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub subjects: Vec<String>,
    pub config: PipelineConfig,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn subdir(out: &Path, name: &str) -> Result<PathBuf> {
    let dir = out.join(name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    Ok(dir)
}

/// Keeps the named subjects, in manifest order; unknown names are a config error.
pub fn select_subjects(manifest: &Manifest, only: Option<&[String]>) -> Result<Vec<SubjectEntry>> {
    let Some(only) = only else {
        return Ok(manifest.subjects.clone());
    };
    let unknown: Vec<&str> = only
        .iter()
        .filter(|id| !manifest.subjects.iter().any(|s| &s.id == *id))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown subjects: {}", unknown.join(", "))));
    }
    Ok(manifest
        .subjects
        .iter()
        .filter(|s| only.contains(&s.id))
        .cloned()
        .collect())
}

fn with_pool<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    match cfg.workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn sorted_by_id(mut subjects: Vec<SubjectEntry>) -> Vec<SubjectEntry> {
    subjects.sort_by(|a, b| a.id.cmp(&b.id));
    subjects
}

/// Writes `epochs/<id>.csv` for each subject.
pub fn ingest_subjects(
    subjects: &[SubjectEntry],
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<Vec<Result<EpochSeries>>> {
    cfg.validate()?;
    let dir = subdir(out, "epochs")?;
    let subjects = sorted_by_id(subjects.to_vec());
    with_pool(cfg, || {
        subjects
            .par_iter()
            .map(|s| {
                let series = s.ingest(cfg.epoch_length)?;
                write_epochs_csv(&dir.join(format!("{}.csv", s.id)), &series)?;
                Ok(series)
            })
            .collect()
    })
}

fn status_counts(statuses: &[EpochStatus]) -> BTreeMap<String, usize> {
    let mut m: BTreeMap<String, usize> = ["sleep", "wake", "abnormal", "na"]
        .into_iter()
        .map(|k| (k.to_string(), 0))
        .collect();
    for s in statuses {
        *m.entry(s.name().to_string()).or_default() += 1;
    }
    m
}

fn usable_mask(timeline: &LabeledTimeline) -> Vec<bool> {
    timeline.entries.iter().map(|e| e.status.is_sleep().is_some()).collect()
}

struct Processed {
    outcome: SubjectOutcome,
    features: Vec<FeatureRow>,
    excluded: Vec<(f64, ExcludedCategory)>,
}

fn process_subject(entry: &SubjectEntry, cfg: &PipelineConfig, out: &Path) -> Result<Processed> {
    let clock = entry.origin_clock_hours.unwrap_or(cfg.origin_clock_hours);
    let mut outcome = SubjectOutcome::empty(&entry.id, clock);
    let id = &entry.id;

    let series = entry.ingest(cfg.epoch_length)?;
    write_epochs_csv(&out.join("epochs").join(format!("{id}.csv")), &series)?;
    outcome.n_epochs = series.len();

    let (rules, screened) = screen_subject(&series, &cfg.screening, cfg.seed)?;
    let report = AbnormalReport::new(rules, &screened, cfg.unusable_fraction);
    write_json(&out.join("anomaly").join(format!("{id}.json")), &report)?;
    outcome.abnormal_proportion = Some(report.abnormal_proportion);
    if report.unusable {
        outcome.status = SubjectStatus::Unusable;
        let mut counts = status_counts(&[]);
        for j in 0..screened.len() {
            let key = match screened.state(j) {
                crate::anomaly::EpochState::Na => "na",
                crate::anomaly::EpochState::Abnormal => "abnormal",
                crate::anomaly::EpochState::Usable => "unlabeled",
            };
            *counts.entry(key.to_string()).or_default() += 1;
        }
        outcome.status_counts = counts;
        return Ok(Processed {
            outcome,
            features: Vec::new(),
            excluded: Vec::new(),
        });
    }

    let selection = select_model(
        &screened,
        &cfg.hmm_pool,
        series.origin + cfg.initial_end_seconds,
        cfg.seed,
    )?;
    write_json(&out.join("hmm").join(format!("{id}.json")), &selection)?;
    outcome.hmm_config = Some(selection.config.label());

    let init = InitialLabels::from(&selection);
    let sequenced = sequential_label(&screened, &selection.config.features, &init, &cfg.sequencer)?;
    write_audit_jsonl(&out.join("audit").join(format!("{id}.jsonl")), &sequenced.audit)?;

    let (timeline, sessions) = build_sessions(&sequenced.timeline, &cfg.sessions, clock)?;
    timeline.write_csv(&out.join("timeline").join(format!("{id}.csv")))?;
    write_sessions_csv(&out.join("sessions").join(format!("{id}.csv")), id, &sessions)?;
    outcome.n_sessions = sessions.len();
    outcome.status_counts = status_counts(&timeline.statuses());

    let excluded = categorize(&screened, &timeline, &sessions)?;
    let mut cats: BTreeMap<String, usize> = ExcludedCategory::ALL
        .iter()
        .map(|c| (c.name().to_string(), 0))
        .collect();
    for (_, c) in &excluded {
        *cats.entry(c.name().to_string()).or_default() += 1;
    }
    outcome.excluded_categories = cats;
    write_excluded_csv(&out.join("excluded").join(format!("{id}.csv")), &excluded)?;

    let features = extract_subject(id, &sessions, &series, &usable_mask(&timeline), clock)?;
    outcome.feature_days = features.len();
    Ok(Processed {
        outcome,
        features,
        excluded,
    })
}

/// Categories of the screened-out epochs against the final wake epochs.
pub fn categorize(
    screened: &ScreenedSeries,
    timeline: &LabeledTimeline,
    sessions: &[Session],
) -> Result<Vec<(f64, ExcludedCategory)>> {
    let series = &screened.series;
    let excluded = screened.excluded_indices();
    if excluded.is_empty() {
        return Ok(Vec::new());
    }
    let reference: Vec<usize> = wake_epochs(sessions, series.origin, series.epoch_length, series.len())
        .into_iter()
        .filter(|&j| timeline.entries[j].status == EpochStatus::Wake)
        .collect();
    let cats = categorize_excluded(series, &excluded, &reference)?;
    Ok(excluded.iter().map(|&j| series.epoch_start(j)).zip(cats).collect())
}

fn write_excluded_csv(path: &Path, rows: &[(f64, ExcludedCategory)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch_start", "category"])?;
    for (t, c) in rows {
        w.write_record([t.to_string(), c.name().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every subject, isolating failures, and writes the artifact directory.
pub fn run_pipeline(subjects: &[SubjectEntry], cfg: &PipelineConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    for name in ["epochs", "anomaly", "hmm", "audit", "timeline", "sessions", "excluded"] {
        subdir(out, name)?;
    }
    let subjects = sorted_by_id(subjects.to_vec());
    let results: Vec<Result<Processed>> = with_pool(cfg, || {
        subjects.par_iter().map(|s| process_subject(s, cfg, out)).collect()
    })?;

    let mut table = FeatureTable::default();
    let mut outcomes = Vec::with_capacity(subjects.len());
    let mut counts = csv::Writer::from_path(out.join("excluded_counts.csv"))?;
    let mut header = vec!["subject".to_string()];
    header.extend(ExcludedCategory::ALL.iter().map(|c| c.name().to_string()));
    counts.write_record(&header)?;
    for (entry, res) in subjects.iter().zip(results) {
        match res {
            Ok(p) => {
                if p.outcome.status == SubjectStatus::Ok {
                    let mut rec = vec![entry.id.clone()];
                    rec.extend(
                        ExcludedCategory::ALL
                            .iter()
                            .map(|c| p.excluded.iter().filter(|(_, k)| k == c).count().to_string()),
                    );
                    counts.write_record(&rec)?;
                    table.rows.extend(p.features);
                }
                outcomes.push(p.outcome);
            }
            Err(e) => {
                let clock = entry.origin_clock_hours.unwrap_or(cfg.origin_clock_hours);
                let mut o = SubjectOutcome::empty(&entry.id, clock);
                o.status = SubjectStatus::Failed;
                o.error = Some(e.to_string());
                outcomes.push(o);
            }
        }
    }
    counts.flush()?;
    table.write_csv(&out.join("features.csv"))?;
    let report = RunReport { subjects: outcomes };
    write_json(&out.join("report.json"), &report)?;
    write_json(
        &out.join("run-metadata.json"),
        &RunMetadata {
            version: VERSION.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            subjects: subjects.iter().map(|s| s.id.clone()).collect(),
            config: cfg.clone(),
        },
    )?;
    Ok(report)
}

struct RunSubject {
    series: EpochSeries,
    timeline: LabeledTimeline,
    clock: f64,
}

fn load_run_subject(dir: &Path, outcome: &SubjectOutcome) -> Result<RunSubject> {
    let id = &outcome.subject;
    let series = read_epochs_csv(&dir.join("epochs").join(format!("{id}.csv")), id)?;
    let timeline = LabeledTimeline::read_csv(&dir.join("timeline").join(format!("{id}.csv")), id, series.epoch_length)?;
    if timeline.len() != series.len() {
        return Err(Error::Data(format!(
            "subject {id}: timeline has {} epochs, summaries {}",
            timeline.len(),
            series.len()
        )));
    }
    Ok(RunSubject {
        series,
        timeline,
        clock: outcome.origin_clock_hours,
    })
}

fn completed(report: &RunReport) -> Vec<&SubjectOutcome> {
    report
        .subjects
        .iter()
        .filter(|s| s.status == SubjectStatus::Ok)
        .collect()
}

/// Re-extracts the feature table from a finished run; `day` keeps one day only.
pub fn extract_run_features(dir: &Path, day: Option<i64>) -> Result<FeatureTable> {
    let report = RunReport::load(dir)?;
    let mut table = FeatureTable::default();
    for o in completed(&report) {
        let s = load_run_subject(dir, o)?;
        let sessions = read_sessions_csv(
            &dir.join("sessions").join(format!("{}.csv", o.subject)),
            Some(&o.subject),
        )?;
        let rows = extract_subject(&o.subject, &sessions, &s.series, &usable_mask(&s.timeline), s.clock)?;
        table
            .rows
            .extend(rows.into_iter().filter(|r| day.is_none_or(|d| r.day == d)));
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub subject: String,
    pub columns: Vec<String>,
    pub dropped: Vec<String>,
    pub explained_variance_ratio: Vec<f64>,
    pub loadings: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub pca: Vec<PcaSummary>,
    pub marginal: Vec<MarginalSummary>,
    pub errors: BTreeMap<String, String>,
}

/// PCA scatter data and marginal SI screening for every completed subject of a run.
///
/// Writes `pca/<id>.csv`, `marginal_si.csv`, `marginal_si_summary.csv` and
/// `diagnostics.json` under `dir`.
pub fn diagnose(dir: &Path) -> Result<DiagnoseReport> {
    let report = RunReport::load(dir)?;
    let pca_dir = subdir(dir, "pca")?;
    let mut summaries = Vec::new();
    let mut tables: Vec<(String, Vec<MarginalSi>)> = Vec::new();
    let mut errors = BTreeMap::new();
    for o in completed(&report) {
        let s = load_run_subject(dir, o)?;
        match pca_diagnostics(&s.series, &s.timeline.statuses()) {
            Ok(d) => {
                d.write_csv(&pca_dir.join(format!("{}.csv", o.subject)), &s.series)?;
                summaries.push(PcaSummary {
                    subject: o.subject.clone(),
                    columns: d.pca.columns,
                    dropped: d.pca.dropped,
                    explained_variance_ratio: d.pca.explained_variance_ratio,
                    loadings: d.pca.loadings,
                });
            }
            Err(e) => {
                errors.insert(format!("{}/pca", o.subject), e.to_string());
            }
        }
        let excluded = s
            .timeline
            .entries
            .iter()
            .map(|e| e.status == EpochStatus::Abnormal)
            .collect();
        let screened = ScreenedSeries::with_exclusions(s.series, excluded)?;
        match marginal_si_screen(&screened, REST_WINDOW, SLEEP_WINDOW, s.clock) {
            Ok(t) => tables.push((o.subject.clone(), t)),
            Err(e) => {
                errors.insert(format!("{}/marginal_si", o.subject), e.to_string());
            }
        }
    }

    let mut w = csv::Writer::from_path(dir.join("marginal_si.csv"))?;
    w.write_record([
        "subject",
        "variable",
        "si",
        "zero_distance_fraction",
        "uninformative",
        "n_rest",
        "n_sleep",
    ])?;
    for (id, t) in &tables {
        for m in t {
            w.write_record([
                id.clone(),
                m.variable.to_string(),
                m.si.to_string(),
                m.zero_distance_fraction.to_string(),
                m.uninformative.to_string(),
                m.n_rest.to_string(),
                m.n_sleep.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let marginal = summarize_marginal(&tables.into_iter().map(|(_, t)| t).collect::<Vec<_>>());
    let mut w = csv::Writer::from_path(dir.join("marginal_si_summary.csv"))?;
    w.write_record([
        "variable",
        "mean_si",
        "n_subjects",
        "uninformative_subjects",
        "recommended",
    ])?;
    for m in &marginal {
        w.write_record([
            m.variable.to_string(),
            m.mean_si.to_string(),
            m.n_subjects.to_string(),
            m.uninformative_subjects.to_string(),
            m.recommended.to_string(),
        ])?;
    }
    w.flush()?;
    let out = DiagnoseReport {
        pca: summaries,
        marginal,
        errors,
    };
    write_json(&dir.join("diagnostics.json"), &out)?;
    Ok(out)
}
