//! Separability index and sequential labeling with adaptive-size sliding
//! training windows.
//!
//! After the initial segment is labeled by the HMM, the recording is labeled
//! forward one batch at a time. For each candidate window length a Fisher
//! discriminant is trained on the most recent labeled epochs and applied to
//! the next batch; the window whose train-plus-test set is most separable
//! along its own discriminant direction supplies the committed labels.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anomaly::{EpochState, ScreenedSeries};
use crate::error::{Error, Result};
use crate::hmm::{gather_rows, HmmSelection};
use crate::lda::{dot, fit_lda, LdaClassifier};
use crate::signal::Variable;

/// Fraction of samples whose nearest neighbor under `|z_t - z_t'|` shares
/// their label. The neighbor excludes the sample itself; equidistant
/// neighbors resolve to the earlier sample (lower index).
pub fn separability_index_scores(z: &[f64], y: &[bool]) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::Dimension {
            expected: z.len(),
            got: y.len(),
        });
    }
    if z.len() < 2 {
        return Err(Error::Data("separability index needs at least 2 samples".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("separability index of non-finite scores".into()));
    }
    let neighbors = projection_neighbors(z);
    let same = neighbors.iter().enumerate().filter(|&(i, &nb)| y[i] == y[nb]).count();
    Ok(same as f64 / z.len() as f64)
}

/// Nearest neighbor of each score on the line, ties to the lowest index.
fn projection_neighbors(z: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    // runs of equal scores; members ascending by index
    let mut runs: Vec<(f64, Vec<usize>)> = Vec::new();
    for &i in &order {
        match runs.last_mut() {
            Some((v, m)) if *v == z[i] => m.push(i),
            _ => runs.push((z[i], vec![i])),
        }
    }
    let mut nb = vec![0; z.len()];
    for (r, (v, members)) in runs.iter().enumerate() {
        if members.len() >= 2 {
            for &i in members {
                nb[i] = if members[0] != i { members[0] } else { members[1] };
            }
            continue;
        }
        let i = members[0];
        let left = (r > 0).then(|| (v - runs[r - 1].0, runs[r - 1].1[0]));
        let right = runs.get(r + 1).map(|(w, m)| (w - v, m[0]));
        nb[i] = match (left, right) {
            (Some((dl, a)), Some((dr, b))) => {
                if dl < dr {
                    a
                } else if dr < dl {
                    b
                } else {
                    a.min(b)
                }
            }
            (Some((_, a)), None) => a,
            (None, Some((_, b))) => b,
            (None, None) => unreachable!("at least two samples"),
        };
    }
    nb
}

/// Separability index under the projection distance `|w'(x_t - x_t')|`.
pub fn separability_index(x: &[Vec<f64>], y: &[bool], w: &[f64]) -> Result<f64> {
    let z: Vec<f64> = x.iter().map(|r| dot(w, r)).collect();
    separability_index_scores(&z, y)
}

/// Separability index with Euclidean nearest neighbors.
pub fn si_euclidean(x: &[Vec<f64>], y: &[bool]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Data("separability index needs at least 2 samples".into()));
    }
    let mut same = 0;
    for i in 0..x.len() {
        let mut best = usize::MAX;
        let mut bd = f64::INFINITY;
        for j in 0..x.len() {
            if i == j {
                continue;
            }
            let d: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
            if d < bd {
                bd = d;
                best = j;
            }
        }
        if y[i] == y[best] {
            same += 1;
        }
    }
    Ok(same as f64 / x.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequencerConfig {
    pub batch_seconds: f64,
    /// Candidate training window lengths, strictly increasing.
    pub windows_seconds: Vec<f64>,
    pub gamma: f64,
    pub min_class_samples: usize,
}

impl Default for SequencerConfig {
    fn default() -> Self {
        SequencerConfig {
            batch_seconds: 6.0 * 3600.0,
            windows_seconds: vec![24.0 * 3600.0, 48.0 * 3600.0, 72.0 * 3600.0],
            gamma: 1.0,
            min_class_samples: 5,
        }
    }
}

fn whole_epochs(seconds: f64, epoch_length: f64, what: &str) -> Result<usize> {
    let n = seconds / epoch_length;
    if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{what} of {seconds} s is not a positive whole number of {epoch_length} s epochs"
        )));
    }
    Ok(n.round() as usize)
}

impl SequencerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.batch_seconds > 0.0) {
            return Err(Error::Config("batch length must be positive".into()));
        }
        if self.windows_seconds.is_empty() {
            return Err(Error::Config("at least one candidate window is required".into()));
        }
        if self.windows_seconds.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config("candidate windows must be strictly increasing".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        Ok(())
    }

    /// Batch and window lengths in epochs; errors unless each is a whole number.
    pub fn in_epochs(&self, epoch_length: f64) -> Result<(usize, Vec<usize>)> {
        self.validate()?;
        let batch = whole_epochs(self.batch_seconds, epoch_length, "batch length")?;
        let windows = self
            .windows_seconds
            .iter()
            .map(|&d| whole_epochs(d, epoch_length, "window length"))
            .collect::<Result<_>>()?;
        Ok((batch, windows))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochStatus {
    Sleep,
    Wake,
    Abnormal,
    Na,
}

impl EpochStatus {
    pub fn from_label(sleep: bool) -> Self {
        if sleep {
            EpochStatus::Sleep
        } else {
            EpochStatus::Wake
        }
    }

    pub fn is_sleep(self) -> Option<bool> {
        match self {
            EpochStatus::Sleep => Some(true),
            EpochStatus::Wake => Some(false),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EpochStatus::Sleep => "sleep",
            EpochStatus::Wake => "wake",
            EpochStatus::Abnormal => "abnormal",
            EpochStatus::Na => "na",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Hmm,
    Lda,
    Smoothed,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub status: EpochStatus,
    pub provenance: Provenance,
    /// Batch that labeled the epoch, for sequential labels.
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTimeline {
    pub subject_id: String,
    pub origin: f64,
    pub epoch_length: f64,
    pub entries: Vec<TimelineEntry>,
}

impl LabeledTimeline {
    /// Every epoch NA or abnormal per the screening, unlabeled otherwise.
    fn skeleton(screened: &ScreenedSeries) -> (Self, Vec<bool>) {
        let s = &screened.series;
        let mut unlabeled = vec![false; s.len()];
        let entries = (0..s.len())
            .map(|j| {
                let status = match screened.state(j) {
                    EpochState::Na => EpochStatus::Na,
                    EpochState::Abnormal => EpochStatus::Abnormal,
                    EpochState::Usable => {
                        unlabeled[j] = true;
                        EpochStatus::Wake
                    }
                };
                TimelineEntry {
                    status,
                    provenance: Provenance::None,
                    batch: None,
                }
            })
            .collect();
        (
            LabeledTimeline {
                subject_id: s.subject_id.clone(),
                origin: s.origin,
                epoch_length: s.epoch_length,
                entries,
            },
            unlabeled,
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn epoch_start(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.epoch_length
    }

    pub fn statuses(&self) -> Vec<EpochStatus> {
        self.entries.iter().map(|e| e.status).collect()
    }

    /// Sleep/wake labels, `None` for abnormal and NA epochs.
    pub fn sleep_labels(&self) -> Vec<Option<bool>> {
        self.entries.iter().map(|e| e.status.is_sleep()).collect()
    }

    pub fn count(&self, status: EpochStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch_start", "status", "provenance", "batch"])?;
        for (j, e) in self.entries.iter().enumerate() {
            let prov = match e.provenance {
                Provenance::Hmm => "hmm",
                Provenance::Lda => "lda",
                Provenance::Smoothed => "smoothed",
                Provenance::None => "none",
            };
            w.write_record([
                self.epoch_start(j).to_string(),
                e.status.name().to_string(),
                prov.to_string(),
                e.batch.map_or_else(String::new, |b| b.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, subject_id: &str, epoch_length: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        let mut origin = None;
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
            let t: f64 = field(0)
                .parse()
                .map_err(|_| Error::Data(format!("{}: bad epoch_start {:?}", path.display(), field(0))))?;
            let o = *origin.get_or_insert(t);
            let expected = o + entries.len() as f64 * epoch_length;
            if (t - expected).abs() > 1e-6 * epoch_length.max(1.0) {
                return Err(Error::Data(format!(
                    "{}: epoch_start {t} is off the {epoch_length} s grid",
                    path.display()
                )));
            }
            let status = match field(1).as_str() {
                "sleep" => EpochStatus::Sleep,
                "wake" => EpochStatus::Wake,
                "abnormal" => EpochStatus::Abnormal,
                "na" => EpochStatus::Na,
                other => return Err(Error::Data(format!("{}: unknown status {other:?}", path.display()))),
            };
            let provenance = match field(2).as_str() {
                "hmm" => Provenance::Hmm,
                "lda" => Provenance::Lda,
                "smoothed" => Provenance::Smoothed,
                _ => Provenance::None,
            };
            let batch = field(3).parse().ok();
            entries.push(TimelineEntry {
                status,
                provenance,
                batch,
            });
        }
        Ok(LabeledTimeline {
            subject_id: subject_id.to_string(),
            origin: origin.unwrap_or(0.0),
            epoch_length,
            entries,
        })
    }
}

/// Labels of the initial segment, as produced by the HMM bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLabels {
    /// Grid index of the last epoch of the initial segment.
    pub end_index: usize,
    pub epochs: Vec<usize>,
    pub labels: Vec<bool>,
}

impl From<&HmmSelection> for InitialLabels {
    fn from(s: &HmmSelection) -> Self {
        InitialLabels {
            end_index: s.end_index,
            epochs: s.epochs.clone(),
            labels: s.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAudit {
    pub window_seconds: f64,
    pub n_sleep: usize,
    pub n_wake: usize,
    pub eligible: bool,
    pub si: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAudit {
    pub batch: usize,
    /// Test batch covers epochs starting in `(start, end]`.
    pub start: f64,
    pub end: f64,
    pub n_test: usize,
    pub skipped: bool,
    pub candidates: Vec<CandidateAudit>,
    pub chosen_window_seconds: Option<f64>,
    pub chosen_si: Option<f64>,
    pub fallback: bool,
    pub n_sleep: usize,
    pub n_wake: usize,
    pub classifier: Option<LdaClassifier>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequenced {
    pub timeline: LabeledTimeline,
    pub audit: Vec<BatchAudit>,
}

struct Context<'a> {
    screened: &'a ScreenedSeries,
    rows: Vec<Vec<f64>>,
}

impl<'a> Context<'a> {
    fn new(screened: &'a ScreenedSeries, features: &[Variable]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("sequential labeling needs at least one feature".into()));
        }
        let all: Vec<usize> = (0..screened.len()).collect();
        let rows = gather_rows(screened, features, &all)?;
        Ok(Context { screened, rows })
    }

    fn start_timeline(&self, init: &InitialLabels) -> Result<(LabeledTimeline, Vec<Option<bool>>)> {
        if init.epochs.len() != init.labels.len() {
            return Err(Error::Dimension {
                expected: init.epochs.len(),
                got: init.labels.len(),
            });
        }
        let n_sleep = init.labels.iter().filter(|&&l| l).count();
        if n_sleep == 0 || n_sleep == init.labels.len() {
            return Err(Error::SingleClass(
                "initial segment contains only one class; choose a different initial window or HMM configuration"
                    .into(),
            ));
        }
        let (mut timeline, _) = LabeledTimeline::skeleton(self.screened);
        let mut labels = vec![None; self.screened.len()];
        for (&j, &l) in init.epochs.iter().zip(&init.labels) {
            if !self.screened.is_usable(j) {
                return Err(Error::Data(format!("initial label on unusable epoch {j}")));
            }
            labels[j] = Some(l);
            timeline.entries[j] = TimelineEntry {
                status: EpochStatus::from_label(l),
                provenance: Provenance::Hmm,
                batch: None,
            };
        }
        Ok((timeline, labels))
    }

    fn labeled_in(&self, labels: &[Option<bool>], lo: usize, hi: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for j in lo..=hi.min(labels.len() - 1) {
            if let Some(l) = labels[j] {
                x.push(self.rows[j].clone());
                y.push(l);
            }
        }
        (x, y)
    }
}

/// Labels every usable epoch after the initial segment, one batch at a time.
pub fn sequential_label(
    screened: &ScreenedSeries,
    features: &[Variable],
    init: &InitialLabels,
    cfg: &SequencerConfig,
) -> Result<Sequenced> {
    let ctx = Context::new(screened, features)?;
    let (batch_len, windows) = cfg.in_epochs(screened.series.epoch_length)?;
    let (mut timeline, mut labels) = ctx.start_timeline(init)?;
    let n = screened.len();
    let dim = features.len();
    let min_class = cfg.min_class_samples.max(dim + 1);

    let mut audit = Vec::new();
    let mut previous: Option<LdaClassifier> = None;
    let mut current = init.end_index;
    let mut batch = 0;
    while current + 1 < n {
        let test_hi = (current + batch_len).min(n - 1);
        let test: Vec<usize> = (current + 1..=test_hi).filter(|&j| screened.is_usable(j)).collect();
        let mut entry = BatchAudit {
            batch,
            start: screened.series.epoch_start(current),
            end: screened.series.epoch_start(current) + cfg.batch_seconds,
            n_test: test.len(),
            skipped: test.is_empty(),
            candidates: Vec::new(),
            chosen_window_seconds: None,
            chosen_si: None,
            fallback: false,
            n_sleep: 0,
            n_wake: 0,
            classifier: None,
        };
        if test.is_empty() {
            audit.push(entry);
            current += batch_len;
            batch += 1;
            continue;
        }
        let test_x: Vec<Vec<f64>> = test.iter().map(|&j| ctx.rows[j].clone()).collect();

        let mut best: Option<(f64, f64, LdaClassifier, Vec<bool>)> = None;
        for (&w_len, &w_sec) in windows.iter().zip(&cfg.windows_seconds) {
            let lo = (current + 1).saturating_sub(w_len);
            let (train_x, train_y) = ctx.labeled_in(&labels, lo, current);
            let n_sleep = train_y.iter().filter(|&&l| l).count();
            let n_wake = train_y.len() - n_sleep;
            let mut cand = CandidateAudit {
                window_seconds: w_sec,
                n_sleep,
                n_wake,
                eligible: n_sleep >= min_class && n_wake >= min_class,
                si: None,
                error: None,
            };
            if !cand.eligible {
                entry.candidates.push(cand);
                continue;
            }
            match fit_lda(&train_x, &train_y, cfg.gamma) {
                Ok(clf) => {
                    let pred: Vec<bool> = test_x.iter().map(|x| clf.classify(x)).collect();
                    let z: Vec<f64> = train_x.iter().chain(&test_x).map(|x| clf.score(x)).collect();
                    let y: Vec<bool> = train_y.iter().chain(&pred).copied().collect();
                    let si = separability_index_scores(&z, &y)?;
                    cand.si = Some(si);
                    if best.as_ref().is_none_or(|b| si >= b.0) {
                        best = Some((si, w_sec, clf, pred));
                    }
                }
                Err(e) => {
                    cand.eligible = false;
                    cand.error = Some(e.to_string());
                }
            }
            entry.candidates.push(cand);
        }

        let (clf, pred) = match best {
            Some((si, w_sec, clf, pred)) => {
                entry.chosen_si = Some(si);
                entry.chosen_window_seconds = Some(w_sec);
                (clf, pred)
            }
            None => {
                entry.fallback = true;
                let clf = match &previous {
                    Some(c) => c.clone(),
                    None => {
                        let (x, y) = ctx.labeled_in(&labels, 0, current);
                        fit_lda(&x, &y, cfg.gamma)?
                    }
                };
                let pred = test_x.iter().map(|x| clf.classify(x)).collect();
                (clf, pred)
            }
        };
        for (&j, &l) in test.iter().zip(&pred) {
            labels[j] = Some(l);
            timeline.entries[j] = TimelineEntry {
                status: EpochStatus::from_label(l),
                provenance: Provenance::Lda,
                batch: Some(batch),
            };
        }
        entry.n_sleep = pred.iter().filter(|&&l| l).count();
        entry.n_wake = pred.len() - entry.n_sleep;
        entry.classifier = Some(clf.clone());
        previous = Some(clf);
        audit.push(entry);
        current += batch_len;
        batch += 1;
    }
    Ok(Sequenced { timeline, audit })
}

/// Baseline: one classifier trained on the initial segment labels everything after it.
pub fn static_label(
    screened: &ScreenedSeries,
    features: &[Variable],
    init: &InitialLabels,
    gamma: f64,
) -> Result<LabeledTimeline> {
    let ctx = Context::new(screened, features)?;
    let (mut timeline, labels) = ctx.start_timeline(init)?;
    let (x, y) = ctx.labeled_in(&labels, 0, init.end_index);
    let clf = fit_lda(&x, &y, gamma)?;
    for j in init.end_index + 1..screened.len() {
        if screened.is_usable(j) {
            timeline.entries[j] = TimelineEntry {
                status: EpochStatus::from_label(clf.classify(&ctx.rows[j])),
                provenance: Provenance::Lda,
                batch: None,
            };
        }
    }
    Ok(timeline)
}

/// Fraction of epochs from `from` on, labeled sleep/wake in both, with equal labels.
pub fn agreement(a: &[Option<bool>], b: &[Option<bool>], from: usize) -> f64 {
    let mut both = 0;
    let mut same = 0;
    for (x, y) in a.iter().zip(b).skip(from) {
        if let (Some(x), Some(y)) = (x, y) {
            both += 1;
            if x == y {
                same += 1;
            }
        }
    }
    if both == 0 {
        return f64::NAN;
    }
    same as f64 / both as f64
}

pub fn write_audit_jsonl(path: &Path, audit: &[BatchAudit]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for a in audit {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Clock-time range `[start_hour, end_hour)`; wraps past midnight when end < start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockWindow {
    pub start_hour: f64,
    pub end_hour: f64,
}

impl ClockWindow {
    pub const fn new(start_hour: f64, end_hour: f64) -> Self {
        ClockWindow { start_hour, end_hour }
    }

    pub fn contains(&self, hour: f64) -> bool {
        let h = hour.rem_euclid(24.0);
        if self.start_hour <= self.end_hour {
            h >= self.start_hour && h < self.end_hour
        } else {
            h >= self.start_hour || h < self.end_hour
        }
    }
}

pub const REST_WINDOW: ClockWindow = ClockWindow::new(21.0, 22.0);
pub const SLEEP_WINDOW: ClockWindow = ClockWindow::new(3.0, 4.0);
pub const RECOMMEND_SI: f64 = 0.7;
pub const UNINFORMATIVE_ZERO_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSi {
    pub variable: Variable,
    pub si: f64,
    pub zero_distance_fraction: f64,
    pub uninformative: bool,
    pub n_rest: usize,
    pub n_sleep: usize,
}

fn zero_distance_fraction(values: &[f64]) -> f64 {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut zero_pairs = 0usize;
    let mut run = 1usize;
    for i in 1..=n {
        if i < n && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            zero_pairs += run * (run - 1) / 2;
            run = 1;
        }
    }
    zero_pairs as f64 / (n * (n - 1) / 2) as f64
}

/// Scores each summary statistic by how well it separates a resting-awake
/// clock window (label 0) from a deep-night window (label 1).
pub fn marginal_si_screen(
    screened: &ScreenedSeries,
    rest: ClockWindow,
    sleep: ClockWindow,
    origin_clock_hours: f64,
) -> Result<Vec<MarginalSi>> {
    let s = &screened.series;
    let mut idx = Vec::new();
    let mut y = Vec::new();
    for j in 0..s.len() {
        if !screened.is_usable(j) {
            continue;
        }
        let hour = origin_clock_hours + (s.epoch_start(j) - s.origin) / 3600.0;
        if rest.contains(hour) {
            idx.push(j);
            y.push(false);
        } else if sleep.contains(hour) {
            idx.push(j);
            y.push(true);
        }
    }
    let n_sleep = y.iter().filter(|&&l| l).count();
    let n_rest = y.len() - n_sleep;
    if n_rest < 2 {
        return Err(Error::Data(format!(
            "subject {}: rest window {}-{} h has {n_rest} usable epochs",
            s.subject_id, rest.start_hour, rest.end_hour
        )));
    }
    if n_sleep < 2 {
        return Err(Error::Data(format!(
            "subject {}: sleep window {}-{} h has {n_sleep} usable epochs",
            s.subject_id, sleep.start_hour, sleep.end_hour
        )));
    }
    s.variables()
        .into_iter()
        .map(|variable| {
            let col = s.require_column(variable)?;
            let z: Vec<f64> = idx.iter().map(|&j| s.row(j)[col]).collect();
            let zero = zero_distance_fraction(&z);
            Ok(MarginalSi {
                variable,
                si: separability_index_scores(&z, &y)?,
                zero_distance_fraction: zero,
                uninformative: zero > UNINFORMATIVE_ZERO_FRACTION,
                n_rest,
                n_sleep,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub variable: Variable,
    pub mean_si: f64,
    pub n_subjects: usize,
    pub uninformative_subjects: usize,
    pub recommended: bool,
}

/// Averages per-subject screens; highest mean SI first.
pub fn summarize_marginal(tables: &[Vec<MarginalSi>]) -> Vec<MarginalSummary> {
    let mut vars: Vec<Variable> = tables.iter().flatten().map(|m| m.variable).collect();
    vars.sort();
    vars.dedup();
    let mut out: Vec<MarginalSummary> = vars
        .into_iter()
        .map(|v| {
            let rows: Vec<&MarginalSi> = tables.iter().flatten().filter(|m| m.variable == v).collect();
            let mean_si = rows.iter().map(|m| m.si).sum::<f64>() / rows.len() as f64;
            let uninformative_subjects = rows.iter().filter(|m| m.uninformative).count();
            MarginalSummary {
                variable: v,
                mean_si,
                n_subjects: rows.len(),
                uninformative_subjects,
                recommended: mean_si > RECOMMEND_SI && uninformative_subjects * 2 <= rows.len(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.mean_si.total_cmp(&a.mean_si));
    out
}
