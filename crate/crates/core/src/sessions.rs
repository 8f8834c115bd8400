//! Epoch labels to sleep/wake sessions: median smoothing, partitioning with a
//! minimum sleep duration, and assignment of sessions to study days.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptive::{ClockWindow, EpochStatus, LabeledTimeline, Provenance};
use crate::error::{Error, Result};
use crate::DAY_SECONDS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Odd median filter width in epochs.
    pub median_window: usize,
    pub apply_min_sleep: bool,
    pub min_sleep_seconds: f64,
    /// Preceding wake longer than this keeps a sleep session on its onset day.
    pub substantial_wake_seconds: f64,
    pub night_window: ClockWindow,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            median_window: 5,
            apply_min_sleep: true,
            min_sleep_seconds: 3600.0,
            substantial_wake_seconds: 5.0 * 3600.0,
            night_window: ClockWindow::new(20.0, 4.0),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        check_window(self.median_window)?;
        if !(self.min_sleep_seconds >= 0.0) || !(self.substantial_wake_seconds >= 0.0) {
            return Err(Error::Config("session durations must be nonnegative".into()));
        }
        Ok(())
    }
}

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "median window must be odd and at least 3, got {window}"
        )));
    }
    Ok(())
}

/// Recursive running median of a gap-free binary run. Each output is the
/// majority of the already-smoothed left half, the center, and the raw right
/// half; windows shrink symmetrically at the edges.
fn smooth_run(input: &[bool], window: usize) -> Vec<bool> {
    let half = window / 2;
    let m = input.len();
    let mut out: Vec<bool> = Vec::with_capacity(m);
    for i in 0..m {
        let h = half.min(i).min(m - 1 - i);
        let ones = out[i - h..i].iter().filter(|&&v| v).count() + input[i..=i + h].iter().filter(|&&v| v).count();
        out.push(ones > h);
    }
    out
}

/// Index ranges of labeled stretches whose internal gaps are shorter than `bridge`.
fn segments(labels: &[Option<bool>], bridge: usize) -> Vec<(usize, usize)> {
    let mut segs: Vec<(usize, usize)> = Vec::new();
    let mut j = 0;
    while j < labels.len() {
        if labels[j].is_none() {
            j += 1;
            continue;
        }
        let start = j;
        let mut end = j;
        while j < labels.len() {
            if labels[j].is_some() {
                end = j + 1;
                j += 1;
            } else {
                let gap_start = j;
                while j < labels.len() && labels[j].is_none() {
                    j += 1;
                }
                if j == labels.len() || j - gap_start >= bridge {
                    break;
                }
            }
        }
        segs.push((start, end));
    }
    segs
}

/// Median-filters binary labels. Unlabeled gaps shorter than the window are
/// skipped over; longer gaps split the sequence. Gaps stay unlabeled.
pub fn median_smooth(labels: &[Option<bool>], window: usize) -> Result<Vec<Option<bool>>> {
    check_window(window)?;
    let mut out = labels.to_vec();
    for (start, end) in segments(labels, window) {
        let idx: Vec<usize> = (start..end).filter(|&j| labels[j].is_some()).collect();
        let vals: Vec<bool> = idx.iter().map(|&j| labels[j].unwrap()).collect();
        for (&j, v) in idx.iter().zip(smooth_run(&vals, window)) {
            out[j] = Some(v);
        }
    }
    Ok(out)
}

/// Smooths the sleep/wake labels of a timeline, marking changed epochs.
pub fn smooth_timeline(timeline: &LabeledTimeline, window: usize) -> Result<LabeledTimeline> {
    let labels = timeline.sleep_labels();
    let smoothed = median_smooth(&labels, window)?;
    let mut out = timeline.clone();
    for (e, (before, after)) in out.entries.iter_mut().zip(labels.iter().zip(&smoothed)) {
        if before != after {
            e.status = EpochStatus::from_label(after.expect("gaps stay gaps"));
            e.provenance = Provenance::Smoothed;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Sleep,
    Wake,
}

impl SessionKind {
    pub fn name(self) -> &'static str {
        match self {
            SessionKind::Sleep => "sleep",
            SessionKind::Wake => "wake",
        }
    }

    fn from_label(sleep: bool) -> Self {
        if sleep {
            SessionKind::Sleep
        } else {
            SessionKind::Wake
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub kind: SessionKind,
    pub onset: f64,
    pub offset: f64,
    pub assigned_day: i64,
    pub is_night_sleep: bool,
}

impl Session {
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.onset && t < self.offset
    }
}

/// Splits labels into sessions. Gaps shorter than `bridge` epochs are absorbed
/// into the preceding session; sleep shorter than `min_sleep` seconds becomes
/// wake, after which touching sessions of the same kind merge.
pub fn partition_sessions(
    labels: &[Option<bool>],
    origin: f64,
    epoch_length: f64,
    min_sleep: Option<f64>,
    bridge: usize,
) -> Vec<Session> {
    let t = |j: usize| origin + j as f64 * epoch_length;
    let mut raw: Vec<(SessionKind, usize, usize)> = Vec::new();
    let mut j = 0;
    while j < labels.len() {
        let Some(l) = labels[j] else {
            j += 1;
            continue;
        };
        let start = j;
        while j < labels.len() && labels[j] == Some(l) {
            j += 1;
        }
        let mut end = j;
        let gap_start = j;
        while j < labels.len() && labels[j].is_none() {
            j += 1;
        }
        if j < labels.len() && j - gap_start < bridge {
            end = j;
        } else {
            j = gap_start.max(end);
        }
        let kind = SessionKind::from_label(l);
        match raw.last_mut() {
            Some((k, _, e)) if *k == kind && *e == start => *e = end,
            _ => raw.push((kind, start, end)),
        }
    }

    let mut sessions: Vec<Session> = Vec::with_capacity(raw.len());
    for (kind, s, e) in raw {
        let mut kind = kind;
        if let Some(min) = min_sleep {
            if kind == SessionKind::Sleep && ((e - s) as f64 * epoch_length) < min {
                kind = SessionKind::Wake;
            }
        }
        let (onset, offset) = (t(s), t(e));
        match sessions.last_mut() {
            Some(prev) if prev.kind == kind && prev.offset == onset => prev.offset = offset,
            _ => sessions.push(Session {
                kind,
                onset,
                offset,
                assigned_day: 0,
                is_night_sleep: false,
            }),
        }
    }
    sessions
}

fn day_of(t: f64, origin: f64) -> i64 {
    ((t - origin) / DAY_SECONDS).floor() as i64
}

/// Assigns study days and marks at most one night sleep per day.
///
/// Wake sessions belong to their onset day. A sleep session belongs to its
/// onset day when the wake right before it lasted longer than
/// `substantial_wake`. Otherwise it continues the previous sleep period and
/// takes that period's day, or the day before its onset when no sleep came
/// earlier. Wake sessions split only by excluded gaps count as one wake period.
pub fn assign_days(
    sessions: &mut [Session],
    origin: f64,
    origin_clock_hours: f64,
    substantial_wake: f64,
    night: ClockWindow,
) {
    for i in 0..sessions.len() {
        let day = day_of(sessions[i].onset, origin);
        sessions[i].assigned_day = match sessions[i].kind {
            SessionKind::Wake => day,
            SessionKind::Sleep if i == 0 => day,
            SessionKind::Sleep => {
                let wake: f64 = sessions[..i]
                    .iter()
                    .rev()
                    .take_while(|s| s.kind == SessionKind::Wake)
                    .map(Session::duration)
                    .sum();
                let previous_sleep = sessions[..i].iter().rev().find(|s| s.kind == SessionKind::Sleep);
                match previous_sleep {
                    _ if wake > substantial_wake => day,
                    Some(p) => p.assigned_day,
                    None => day - 1,
                }
            }
        };
        sessions[i].is_night_sleep = false;
    }
    let clock = |t: f64| origin_clock_hours + (t - origin) / 3600.0;
    let mut best: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
    for (i, s) in sessions.iter().enumerate() {
        if s.kind != SessionKind::Sleep || !night.contains(clock(s.onset)) {
            continue;
        }
        match best.get(&s.assigned_day) {
            Some(&b) if sessions[b].duration() >= s.duration() => {}
            _ => {
                best.insert(s.assigned_day, i);
            }
        }
    }
    for &i in best.values() {
        sessions[i].is_night_sleep = true;
    }
}

/// Smoothing, partitioning and day assignment in one step.
pub fn build_sessions(
    timeline: &LabeledTimeline,
    cfg: &SessionConfig,
    origin_clock_hours: f64,
) -> Result<(LabeledTimeline, Vec<Session>)> {
    cfg.validate()?;
    let smoothed = smooth_timeline(timeline, cfg.median_window)?;
    let mut sessions = partition_sessions(
        &smoothed.sleep_labels(),
        smoothed.origin,
        smoothed.epoch_length,
        cfg.apply_min_sleep.then_some(cfg.min_sleep_seconds),
        cfg.median_window,
    );
    assign_days(
        &mut sessions,
        smoothed.origin,
        origin_clock_hours,
        cfg.substantial_wake_seconds,
        cfg.night_window,
    );
    Ok((smoothed, sessions))
}

/// Epoch indices whose start falls inside a wake session.
pub fn wake_epochs(sessions: &[Session], origin: f64, epoch_length: f64, n: usize) -> Vec<usize> {
    (0..n)
        .filter(|&j| {
            let t = origin + j as f64 * epoch_length;
            sessions.iter().any(|s| s.kind == SessionKind::Wake && s.contains(t))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionRecord {
    subject: String,
    kind: SessionKind,
    onset: f64,
    offset: f64,
    assigned_day: i64,
    is_night_sleep: bool,
}

pub fn write_sessions_csv(path: &Path, subject: &str, sessions: &[Session]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if sessions.is_empty() {
        w.write_record(["subject", "kind", "onset", "offset", "assigned_day", "is_night_sleep"])?;
    }
    for s in sessions {
        w.serialize(SessionRecord {
            subject: subject.to_string(),
            kind: s.kind,
            onset: s.onset,
            offset: s.offset,
            assigned_day: s.assigned_day,
            is_night_sleep: s.is_night_sleep,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sessions CSV, keeping rows for `subject` (all rows when `None`).
pub fn read_sessions_csv(path: &Path, subject: Option<&str>) -> Result<Vec<Session>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: SessionRecord = rec?;
        if subject.is_some_and(|s| s != rec.subject) {
            continue;
        }
        if !(rec.offset > rec.onset) {
            return Err(Error::Data(format!(
                "{}: session offset {} is not after onset {}",
                path.display(),
                rec.offset,
                rec.onset
            )));
        }
        out.push(Session {
            kind: rec.kind,
            onset: rec.onset,
            offset: rec.offset,
            assigned_day: rec.assigned_day,
            is_night_sleep: rec.is_night_sleep,
        });
    }
    Ok(out)
}
