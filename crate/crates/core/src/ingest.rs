//! Raw stream parsing, fixed-epoch segmentation and per-epoch summaries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Signal, Stat, Variable};
use crate::stats;

/// Fraction of the designed sample count an epoch needs to be usable.
pub const MIN_CAPACITY_FRACTION: f64 = 0.9;

pub const DEFAULT_EPOCH_LENGTH: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds since the study origin.
    pub t: f64,
    pub value: f64,
}

/// One channel of raw samples. ACC values are already the acceleration norm.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStream {
    signal: Signal,
    sampling_hz: f64,
    samples: Vec<Sample>,
}

impl RawStream {
    pub fn new(signal: Signal, sampling_hz: f64, samples: Vec<Sample>) -> Result<Self> {
        if !(sampling_hz > 0.0 && sampling_hz.is_finite()) {
            return Err(Error::Config(format!(
                "{signal}: sampling rate must be positive, got {sampling_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::Config(format!("{signal}: stream has no samples")));
        }
        for (i, pair) in samples.windows(2).enumerate() {
            if !(pair[1].t > pair[0].t) {
                return Err(Error::Data(format!(
                    "{signal}: timestamps not strictly increasing at sample {} ({} then {})",
                    i + 1,
                    pair[0].t,
                    pair[1].t
                )));
            }
        }
        Ok(RawStream {
            signal,
            sampling_hz,
            samples,
        })
    }

    /// Builds an ACC stream from 3-axis readings, taking the Euclidean norm per sample.
    pub fn from_xyz(sampling_hz: f64, samples: &[(f64, [f64; 3])]) -> Result<Self> {
        let norms = samples
            .iter()
            .map(|&(t, [x, y, z])| Sample {
                t,
                value: (x * x + y * y + z * z).sqrt(),
            })
            .collect();
        RawStream::new(Signal::Acc, sampling_hz, norms)
    }

    pub fn signal(&self) -> Signal {
        self.signal
    }

    pub fn sampling_hz(&self) -> f64 {
        self.sampling_hz
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }
}

/// Per-subject grid of epoch summaries: `{MEAN, MED, SD}` for each signal.
///
/// Column `3 * s + stat.index()` holds statistic `stat` of `signals[s]`.
/// Rows flagged in `na_mask` carry NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSeries {
    pub subject_id: String,
    pub epoch_length: f64,
    pub origin: f64,
    signals: Vec<Signal>,
    stats: Vec<f64>,
    na_mask: Vec<bool>,
}

impl EpochSeries {
    /// Assembles a series from row-major statistics. Rows marked NA are blanked.
    pub fn from_parts(
        subject_id: impl Into<String>,
        epoch_length: f64,
        origin: f64,
        signals: Vec<Signal>,
        mut stats: Vec<f64>,
        na_mask: Vec<bool>,
    ) -> Result<Self> {
        if !(epoch_length > 0.0) {
            return Err(Error::Config(format!(
                "epoch length must be positive, got {epoch_length}"
            )));
        }
        let width = 3 * signals.len();
        if stats.len() != width * na_mask.len() {
            return Err(Error::Dimension {
                expected: width * na_mask.len(),
                got: stats.len(),
            });
        }
        for w in signals.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config("signals must be unique and in canonical order".into()));
            }
        }
        for (j, &na) in na_mask.iter().enumerate() {
            if na {
                stats[j * width..(j + 1) * width].fill(f64::NAN);
            }
        }
        Ok(EpochSeries {
            subject_id: subject_id.into(),
            epoch_length,
            origin,
            signals,
            stats,
            na_mask,
        })
    }

    pub fn len(&self) -> usize {
        self.na_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.na_mask.is_empty()
    }

    pub fn width(&self) -> usize {
        3 * self.signals.len()
    }

    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    pub fn na_mask(&self) -> &[bool] {
        &self.na_mask
    }

    pub fn is_na(&self, j: usize) -> bool {
        self.na_mask[j]
    }

    pub fn epoch_start(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.epoch_length
    }

    pub fn epoch_starts(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.epoch_start(j)).collect()
    }

    /// End of the grid, `origin + N * epoch_length`.
    pub fn end(&self) -> f64 {
        self.epoch_start(self.len())
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let w = self.width();
        &self.stats[j * w..(j + 1) * w]
    }

    pub fn variables(&self) -> Vec<Variable> {
        self.signals
            .iter()
            .flat_map(|&s| Stat::ALL.map(|st| Variable::new(s, st)))
            .collect()
    }

    pub fn column(&self, var: Variable) -> Option<usize> {
        self.signals
            .iter()
            .position(|&s| s == var.signal)
            .map(|s| 3 * s + var.stat.index())
    }

    pub fn require_column(&self, var: Variable) -> Result<usize> {
        self.column(var).ok_or_else(|| {
            Error::Config(format!(
                "variable {var} not present in series for subject {}",
                self.subject_id
            ))
        })
    }

    /// Value of `var` at epoch `j`; `None` for NA epochs or absent signals.
    pub fn value(&self, j: usize, var: Variable) -> Option<f64> {
        if self.na_mask[j] {
            return None;
        }
        self.column(var).map(|c| self.row(j)[c])
    }

    /// Values of several columns at epoch `j`.
    pub fn gather(&self, j: usize, columns: &[usize]) -> Vec<f64> {
        let row = self.row(j);
        columns.iter().map(|&c| row[c]).collect()
    }
}

/// Summarizes raw streams into non-overlapping epochs starting at `origin`.
///
/// The grid length is `n_epochs` when given, otherwise just long enough to
/// cover the latest sample. An epoch is NA when any signal delivers fewer than
/// 90% of its designed sample count (`sampling_hz * epoch_length`).
pub fn segment_and_summarize(
    subject_id: &str,
    streams: &[RawStream],
    epoch_length: f64,
    origin: f64,
    n_epochs: Option<usize>,
) -> Result<EpochSeries> {
    if streams.is_empty() {
        return Err(Error::Config(format!(
            "subject {subject_id}: no signal streams supplied"
        )));
    }
    if !(epoch_length > 0.0 && epoch_length.is_finite()) {
        return Err(Error::Config(format!(
            "epoch length must be positive, got {epoch_length}"
        )));
    }
    let mut ordered: Vec<&RawStream> = streams.iter().collect();
    ordered.sort_by_key(|s| s.signal);
    for w in ordered.windows(2) {
        if w[0].signal == w[1].signal {
            return Err(Error::Config(format!(
                "subject {subject_id}: signal {} supplied twice",
                w[0].signal
            )));
        }
    }

    let n = match n_epochs {
        Some(n) => n,
        None => {
            let last = ordered
                .iter()
                .filter_map(|s| s.samples.last())
                .map(|s| s.t)
                .fold(f64::NEG_INFINITY, f64::max);
            if last < origin {
                return Err(Error::Data(format!(
                    "subject {subject_id}: all samples precede the origin {origin}"
                )));
            }
            ((last - origin) / epoch_length).floor() as usize + 1
        }
    };

    let signals: Vec<Signal> = ordered.iter().map(|s| s.signal).collect();
    let width = 3 * signals.len();
    let mut stats = vec![f64::NAN; n * width];
    let mut na_mask = vec![false; n];
    let mut bucket = Vec::new();

    for (s, stream) in ordered.iter().enumerate() {
        let capacity = stream.sampling_hz * epoch_length;
        let needed = MIN_CAPACITY_FRACTION * capacity - 1e-9;
        let samples = stream.samples();
        let mut cursor = samples.partition_point(|x| x.t < origin);
        for j in 0..n {
            let end = origin + (j + 1) as f64 * epoch_length;
            bucket.clear();
            while cursor < samples.len() && samples[cursor].t < end {
                let v = samples[cursor].value;
                if v.is_finite() {
                    bucket.push(v);
                }
                cursor += 1;
            }
            if (bucket.len() as f64) < needed || bucket.is_empty() {
                na_mask[j] = true;
                continue;
            }
            let cell = &mut stats[j * width + 3 * s..j * width + 3 * s + 3];
            cell[Stat::Mean.index()] = stats::mean(&bucket);
            cell[Stat::Sd.index()] = stats::sample_sd(&bucket);
            bucket.sort_by(f64::total_cmp);
            cell[Stat::Med.index()] = stats::median_sorted(&bucket);
        }
    }

    EpochSeries::from_parts(subject_id, epoch_length, origin, signals, stats, na_mask)
}

/// Subject manifest: which files hold which signal, at which rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    /// Timestamp (seconds) where the epoch grid starts.
    #[serde(default)]
    pub origin: f64,
    /// Fixed grid length; inferred from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_epochs: Option<usize>,
    /// Wall-clock hour at the origin; the pipeline default applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_clock_hours: Option<f64>,
    pub streams: Vec<StreamEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub signal: Signal,
    pub path: PathBuf,
    pub sampling_hz: f64,
}

impl Manifest {
    /// Reads a manifest and resolves relative stream paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let mut manifest: Manifest = serde_json::from_reader(BufReader::new(file))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for subject in &mut manifest.subjects {
            for stream in &mut subject.streams {
                if stream.path.is_relative() {
                    stream.path = base.join(&stream.path);
                }
            }
        }
        let mut ids: Vec<&str> = manifest.subjects.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate subject id `{}`", w[0])));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

impl SubjectEntry {
    pub fn load_streams(&self) -> Result<Vec<RawStream>> {
        self.streams
            .iter()
            .map(|s| read_signal_csv(&s.path, s.signal, s.sampling_hz))
            .collect()
    }

    pub fn ingest(&self, epoch_length: f64) -> Result<EpochSeries> {
        let streams = self.load_streams()?;
        segment_and_summarize(&self.id, &streams, epoch_length, self.origin, self.n_epochs)
    }
}

/// Reads `timestamp,value`, or `timestamp,x,y,z` for ACC (norm taken per row).
pub fn read_signal_csv(path: &Path, signal: Signal, sampling_hz: f64) -> Result<RawStream> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let t_col =
        col("timestamp").ok_or_else(|| Error::Data(format!("{}: missing `timestamp` column", path.display())))?;
    let value_cols: Vec<usize> = match col("value") {
        Some(v) => vec![v],
        None if signal == Signal::Acc => match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => vec![x, y, z],
            _ => {
                return Err(Error::Data(format!(
                    "{}: expected `value` or `x,y,z` columns",
                    path.display()
                )))
            }
        },
        None => return Err(Error::Data(format!("{}: missing `value` column", path.display()))),
    };

    let parse = |field: Option<&str>, line: u64| -> Result<f64> {
        let raw = field.unwrap_or("").trim();
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
            return Ok(f64::NAN);
        }
        raw.parse::<f64>()
            .map_err(|_| Error::Data(format!("{}:{line}: cannot parse `{raw}`", path.display())))
    };

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let t = parse(record.get(t_col), line)?;
        if !t.is_finite() {
            return Err(Error::Data(format!("{}:{line}: missing timestamp", path.display())));
        }
        let value = if value_cols.len() == 1 {
            parse(record.get(value_cols[0]), line)?
        } else {
            let mut sq = 0.0;
            for &c in &value_cols {
                let v = parse(record.get(c), line)?;
                sq += v * v;
            }
            sq.sqrt()
        };
        samples.push(Sample { t, value });
    }
    RawStream::new(signal, sampling_hz, samples).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_signal_csv(path: &Path, stream: &RawStream) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "timestamp,value")?;
    for s in stream.samples() {
        writeln!(w, "{},{}", s.t, s.value)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

/// Writes `epoch_start,<SIGNAL>_<STAT>...,na`.
pub fn write_epochs_csv(path: &Path, series: &EpochSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "epoch_start")?;
    for var in series.variables() {
        write!(w, ",{var}")?;
    }
    writeln!(w, ",na")?;
    for j in 0..series.len() {
        write!(w, "{}", series.epoch_start(j))?;
        for &v in series.row(j) {
            write!(w, ",{}", fmt_value(v))?;
        }
        writeln!(w, ",{}", u8::from(series.is_na(j)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file produced by [`write_epochs_csv`].
pub fn read_epochs_csv(path: &Path, subject_id: &str) -> Result<EpochSeries> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    let n_cols = headers.len();
    if n_cols < 2 || &headers[0] != "epoch_start" || &headers[n_cols - 1] != "na" {
        return Err(Error::Data(format!(
            "{}: expected header `epoch_start,...,na`",
            path.display()
        )));
    }
    let vars: Vec<Variable> = headers
        .iter()
        .skip(1)
        .take(n_cols - 2)
        .map(str::parse)
        .collect::<Result<_>>()?;
    let mut signals: Vec<Signal> = vars.iter().map(|v| v.signal).collect();
    signals.dedup();
    let expected: Vec<Variable> = signals
        .iter()
        .flat_map(|&s| Stat::ALL.map(|st| Variable::new(s, st)))
        .collect();
    if expected != vars {
        return Err(Error::Data(format!(
            "{}: columns must be MEAN,MED,SD per signal in canonical order",
            path.display()
        )));
    }

    let mut starts = Vec::new();
    let mut stats = Vec::new();
    let mut na_mask = Vec::new();
    for record in reader.records() {
        let record = record?;
        let num = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("").trim();
            if raw == "NA" {
                Ok(f64::NAN)
            } else {
                raw.parse()
                    .map_err(|_| Error::Data(format!("{}: bad number `{raw}`", path.display())))
            }
        };
        starts.push(num(0)?);
        for c in 1..n_cols - 1 {
            stats.push(num(c)?);
        }
        na_mask.push(record.get(n_cols - 1).map(str::trim) == Some("1"));
    }
    let (origin, epoch_length) = match starts.as_slice() {
        [] => return Err(Error::Data(format!("{}: no epochs", path.display()))),
        [only] => (*only, DEFAULT_EPOCH_LENGTH),
        [first, second, ..] => (*first, second - first),
    };
    for (j, &s) in starts.iter().enumerate() {
        let expected = origin + j as f64 * epoch_length;
        if (s - expected).abs() > 1e-6 * epoch_length.max(1.0) {
            return Err(Error::Data(format!(
                "{}: epoch starts are not an arithmetic grid at row {}",
                path.display(),
                j + 1
            )));
        }
    }
    EpochSeries::from_parts(subject_id, epoch_length, origin, signals, stats, na_mask)
}
