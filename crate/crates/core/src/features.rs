//! Per-day features from sleep and wake sessions.
//!
//! For each kind of session and each signal, the nine summaries are the
//! mean/median/SD over the day's session epochs of each per-epoch statistic,
//! and the regression features are least-squares polynomial coefficients of
//! each statistic against hours since session onset. Sleep sessions add total
//! and night sleep duration and night sleep onset/offset clock times.
//!
//! Column names: `sleep_total_duration`, `sleep_night_duration`,
//! `sleep_onset`, `sleep_offset`, then `<kind>_<SIGNAL>_<STAT>_<agg>` with
//! `agg` one of `mean`, `med`, `sd`, `lin0`, `lin1`, `quad0`, `quad1`, `quad2`.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ingest::{fmt_value, EpochSeries};
use crate::sessions::{Session, SessionKind};
use crate::signal::{Signal, Stat, Variable};
use crate::stats;

pub const FEATURE_COUNT: usize = 196;
pub const SLEEP_FEATURE_COUNT: usize = 100;
pub const WAKE_FEATURE_COUNT: usize = 96;
/// Floor applied before taking logs of SD-derived features.
pub const LOG_FLOOR: f64 = 1e-6;

const AGGREGATIONS: [&str; 8] = ["mean", "med", "sd", "lin0", "lin1", "quad0", "quad1", "quad2"];
const SLEEP_ONLY: [&str; 4] = ["total_duration", "night_duration", "onset", "offset"];

fn kind_prefix(kind: SessionKind) -> &'static str {
    kind.name()
}

/// All 196 column names in table order.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = SLEEP_ONLY.iter().map(|n| format!("sleep_{n}")).collect();
    for kind in [SessionKind::Sleep, SessionKind::Wake] {
        for signal in Signal::ALL {
            for stat in Stat::ALL {
                for agg in AGGREGATIONS {
                    names.push(format!("{}_{}_{}", kind_prefix(kind), Variable::new(signal, stat), agg));
                }
            }
        }
    }
    names
}

/// Whether a column is stored on the log scale.
pub fn is_log_feature(name: &str) -> bool {
    let mut parts = name.rsplitn(2, '_');
    let agg = parts.next().unwrap_or("");
    let head = parts.next().unwrap_or("");
    matches!(agg, "mean" | "med" | "sd") && (agg == "sd" || head.ends_with("_SD"))
}

fn log_floor(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.max(LOG_FLOOR).ln()
    }
}

/// Least-squares polynomial coefficients, intercept first, via QR.
/// `None` when the design is rank deficient.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Option<Vec<f64>> {
    let p = degree + 1;
    if x.len() != y.len() || x.len() < p {
        return None;
    }
    let a = DMatrix::from_fn(x.len(), p, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let qr = a.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * scale) {
        return None;
    }
    let qtb = qr.q().transpose() * b;
    let coef = r.solve_upper_triangular(&qtb)?;
    Some(coef.iter().copied().collect())
}

/// Clock hour of `t` in `[12, 36)`, so evening onsets precede morning ones.
pub fn evening_clock(t: f64, origin: f64, origin_clock_hours: f64) -> f64 {
    let h = (origin_clock_hours + (t - origin) / 3600.0).rem_euclid(24.0);
    if h < 12.0 {
        h + 24.0
    } else {
        h
    }
}

fn summary_block(series: &EpochSeries, usable: &[bool], sessions: &[&Session], kind: SessionKind) -> Vec<f64> {
    let mut epochs: Vec<(usize, f64)> = Vec::new();
    for s in sessions.iter().filter(|s| s.kind == kind) {
        for j in 0..series.len() {
            let t = series.epoch_start(j);
            if usable[j] && s.contains(t) {
                epochs.push((j, (t - s.onset) / 3600.0));
            }
        }
    }
    let mut out = Vec::with_capacity(WAKE_FEATURE_COUNT);
    for signal in Signal::ALL {
        for stat in Stat::ALL {
            let var = Variable::new(signal, stat);
            let Some(col) = series.column(var) else {
                out.extend([f64::NAN; 8]);
                continue;
            };
            let v: Vec<f64> = epochs.iter().map(|&(j, _)| series.row(j)[col]).collect();
            let h: Vec<f64> = epochs.iter().map(|&(_, h)| h).collect();
            let (mean, med, sd) = if v.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let sd = if v.len() > 1 { stats::sample_sd(&v) } else { f64::NAN };
                (stats::mean(&v), stats::median(&v), sd)
            };
            let summaries = [mean, med, sd];
            for (i, x) in summaries.into_iter().enumerate() {
                let log = stat == Stat::Sd || i == 2;
                out.push(if log { log_floor(x) } else { x });
            }
            let lin = polyfit(&h, &v, 1).unwrap_or_else(|| vec![f64::NAN; 2]);
            let quad = polyfit(&h, &v, 2).unwrap_or_else(|| vec![f64::NAN; 3]);
            out.extend(lin);
            out.extend(quad);
        }
    }
    out
}

/// Feature row for one day. `usable` marks epochs labeled sleep or wake.
pub fn extract_features(
    sessions: &[Session],
    series: &EpochSeries,
    usable: &[bool],
    day: i64,
    origin_clock_hours: f64,
) -> Result<Vec<f64>> {
    if usable.len() != series.len() {
        return Err(Error::Dimension {
            expected: series.len(),
            got: usable.len(),
        });
    }
    let today: Vec<&Session> = sessions.iter().filter(|s| s.assigned_day == day).collect();
    let sleeps: Vec<&&Session> = today.iter().filter(|s| s.kind == SessionKind::Sleep).collect();

    let mut row = Vec::with_capacity(FEATURE_COUNT);
    if sleeps.is_empty() {
        row.extend([f64::NAN; SLEEP_FEATURE_COUNT]);
    } else {
        let total: f64 = sleeps.iter().map(|s| s.duration()).sum::<f64>() / 3600.0;
        row.push(total);
        match sleeps.iter().find(|s| s.is_night_sleep) {
            Some(night) => {
                let hours = night.duration() / 3600.0;
                let onset = evening_clock(night.onset, series.origin, origin_clock_hours);
                row.extend([hours, onset, onset + hours]);
            }
            None => row.extend([f64::NAN; 3]),
        }
        row.extend(summary_block(series, usable, &today, SessionKind::Sleep));
    }
    if today.iter().any(|s| s.kind == SessionKind::Wake) {
        row.extend(summary_block(series, usable, &today, SessionKind::Wake));
    } else {
        row.extend([f64::NAN; WAKE_FEATURE_COUNT]);
    }
    debug_assert_eq!(row.len(), FEATURE_COUNT);
    Ok(row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject: String,
    pub day: i64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl Default for FeatureTable {
    fn default() -> Self {
        FeatureTable {
            columns: feature_names(),
            rows: Vec::new(),
        }
    }
}

impl FeatureTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.subject.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Rows for one day, ordered by subject.
    pub fn day(&self, day: i64) -> Vec<&FeatureRow> {
        let mut rows: Vec<&FeatureRow> = self.rows.iter().filter(|r| r.day == day).collect();
        rows.sort_by(|a, b| a.subject.cmp(&b.subject));
        rows
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["subject".to_string(), "day".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.subject.clone(), r.day.to_string()];
            rec.extend(r.values.iter().map(|&v| fmt_value(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 2 || &header[0] != "subject" || &header[1] != "day" {
            return Err(Error::Data(format!(
                "{}: feature table must start with subject,day columns",
                path.display()
            )));
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let day = rec[1]
                .parse()
                .map_err(|_| Error::Data(format!("{}: bad day {:?}", path.display(), &rec[1])))?;
            let values = rec
                .iter()
                .skip(2)
                .map(|f| match f.trim() {
                    "NA" | "" => Ok(f64::NAN),
                    s => s
                        .parse()
                        .map_err(|_| Error::Data(format!("{}: bad value {s:?}", path.display()))),
                })
                .collect::<Result<_>>()?;
            rows.push(FeatureRow {
                subject: rec[0].to_string(),
                day,
                values,
            });
        }
        Ok(FeatureTable { columns, rows })
    }
}

/// Feature rows for every day that has at least one assigned session.
pub fn extract_subject(
    subject: &str,
    sessions: &[Session],
    series: &EpochSeries,
    usable: &[bool],
    origin_clock_hours: f64,
) -> Result<Vec<FeatureRow>> {
    let days: BTreeSet<i64> = sessions.iter().map(|s| s.assigned_day).collect();
    days.into_iter()
        .map(|day| {
            Ok(FeatureRow {
                subject: subject.to_string(),
                day,
                values: extract_features(sessions, series, usable, day, origin_clock_hours)?,
            })
        })
        .collect()
}
