//! Synthetic wearable subjects with known sleep/wake truth, abnormal
//! segments and covariate drift, plus the bivariate-normal SI experiment.
//!
//! Each epoch draws a latent level and spread per signal from its state's
//! emission (shifted by the accumulated drift); raw samples are then Gaussian
//! around that level with that spread, so epoch summaries go through the real
//! segmentation path.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{separability_index, si_euclidean};
use crate::anomaly::ExcludedCategory;
use crate::error::{Error, Result};
use crate::ingest::{write_signal_csv, Manifest, RawStream, Sample, StreamEntry, SubjectEntry};
use crate::lda::fit_lda;
use crate::signal::Signal;
use crate::DAY_SECONDS;

/// Epoch-level emission of one signal in one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub level: f64,
    pub level_sd: f64,
    /// Within-epoch sample SD.
    pub spread: f64,
    pub spread_sd: f64,
}

impl Emission {
    pub const fn new(level: f64, level_sd: f64, spread: f64, spread_sd: f64) -> Self {
        Emission {
            level,
            level_sd,
            spread,
            spread_sd,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = self.level.is_finite()
            && self.level_sd >= 0.0
            && self.spread > 0.0
            && self.spread_sd >= 0.0
            && self.level_sd.is_finite()
            && self.spread.is_finite()
            && self.spread_sd.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{what}: emission needs finite level, spread > 0 and non-negative SDs"
            )))
        }
    }
}

/// Additive change per day of an emission's level and spread.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftRate {
    #[serde(default)]
    pub level: f64,
    #[serde(default)]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub signal: Signal,
    pub sampling_hz: f64,
    pub sleep: Emission,
    pub wake: Emission,
    #[serde(default)]
    pub sleep_drift: DriftRate,
    #[serde(default)]
    pub wake_drift: DriftRate,
}

impl SignalModel {
    pub fn new(signal: Signal, sampling_hz: f64, sleep: Emission, wake: Emission) -> Self {
        SignalModel {
            signal,
            sampling_hz,
            sleep,
            wake,
            sleep_drift: DriftRate::default(),
            wake_drift: DriftRate::default(),
        }
    }
}

/// ACC 4 Hz, HR/TEMP/EDA 1 Hz with typical rest and activity levels.
pub fn default_signals() -> Vec<SignalModel> {
    vec![
        SignalModel::new(
            Signal::Acc,
            4.0,
            Emission::new(1.0, 0.005, 0.02, 0.008),
            Emission::new(1.0, 0.02, 0.10, 0.02),
        ),
        SignalModel::new(
            Signal::Hr,
            1.0,
            Emission::new(58.0, 4.0, 3.0, 0.6),
            Emission::new(75.0, 6.0, 5.0, 1.2),
        ),
        SignalModel::new(
            Signal::Temp,
            1.0,
            Emission::new(34.6, 0.3, 0.05, 0.01),
            Emission::new(34.2, 0.3, 0.08, 0.02),
        ),
        SignalModel::new(
            Signal::Eda,
            1.0,
            Emission::new(0.4, 0.1, 0.02, 0.005),
            Emission::new(0.3, 0.1, 0.03, 0.01),
        ),
    ]
}

/// Sleep block by wall-clock onset hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepBlock {
    pub onset_hour: f64,
    pub duration_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Blocks repeated every day.
    pub blocks: Vec<SleepBlock>,
    /// Replacement blocks for specific study days.
    #[serde(default)]
    pub per_day: BTreeMap<usize, Vec<SleepBlock>>,
    /// SD (hours) of the random shift applied to each onset and duration.
    #[serde(default)]
    pub jitter_hours: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            blocks: vec![SleepBlock {
                onset_hour: 23.0,
                duration_hours: 8.0,
            }],
            per_day: BTreeMap::new(),
            jitter_hours: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbnormalKind {
    #[serde(rename = "NW")]
    NotWorn,
    #[serde(rename = "LOC")]
    LostContact,
    #[serde(rename = "ACTIVE")]
    Active,
}

impl AbnormalKind {
    pub const ALL: [AbnormalKind; 3] = [AbnormalKind::NotWorn, AbnormalKind::LostContact, AbnormalKind::Active];

    pub fn category(self) -> ExcludedCategory {
        match self {
            AbnormalKind::NotWorn => ExcludedCategory::NotWorn,
            AbnormalKind::LostContact => ExcludedCategory::LostContact,
            AbnormalKind::Active => ExcludedCategory::Active,
        }
    }

    pub fn name(self) -> &'static str {
        self.category().name()
    }
}

/// Seconds since the origin, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbnormalSegment {
    pub start: f64,
    pub end: f64,
    pub kind: AbnormalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub signal: Signal,
    pub emission: Emission,
}

/// Emissions replacing the state emission inside abnormal segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbnormalProfiles {
    pub not_worn: Vec<Override>,
    pub lost_contact: Vec<Override>,
    pub active: Vec<Override>,
}

impl Default for AbnormalProfiles {
    fn default() -> Self {
        AbnormalProfiles {
            not_worn: vec![
                Override {
                    signal: Signal::Temp,
                    emission: Emission::new(22.0, 0.3, 0.05, 0.01),
                },
                Override {
                    signal: Signal::Acc,
                    emission: Emission::new(1.0, 0.0, 0.002, 0.0005),
                },
            ],
            lost_contact: vec![
                Override {
                    signal: Signal::Temp,
                    emission: Emission::new(25.0, 0.5, 0.1, 0.02),
                },
                Override {
                    signal: Signal::Acc,
                    emission: Emission::new(1.0, 0.02, 0.10, 0.02),
                },
            ],
            active: vec![
                Override {
                    signal: Signal::Hr,
                    emission: Emission::new(140.0, 8.0, 8.0, 1.5),
                },
                Override {
                    signal: Signal::Acc,
                    emission: Emission::new(1.2, 0.05, 1.0, 0.2),
                },
            ],
        }
    }
}

impl AbnormalProfiles {
    fn get(&self, kind: AbnormalKind, signal: Signal) -> Option<Emission> {
        let list = match kind {
            AbnormalKind::NotWorn => &self.not_worn,
            AbnormalKind::LostContact => &self.lost_contact,
            AbnormalKind::Active => &self.active,
        };
        list.iter().find(|o| o.signal == signal).map(|o| o.emission)
    }
}

fn default_epoch_length() -> f64 {
    60.0
}

fn default_origin_clock() -> f64 {
    12.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub subject_id: String,
    pub days: usize,
    #[serde(default = "default_epoch_length")]
    pub epoch_length: f64,
    /// Timestamp of the first epoch.
    #[serde(default)]
    pub origin: f64,
    /// Wall-clock hour at the origin.
    #[serde(default = "default_origin_clock")]
    pub origin_clock_hours: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_signals")]
    pub signals: Vec<SignalModel>,
    #[serde(default)]
    pub abnormal: Vec<AbnormalSegment>,
    #[serde(default)]
    pub profiles: AbnormalProfiles,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn new(subject_id: impl Into<String>, days: usize, seed: u64) -> Self {
        SimConfig {
            subject_id: subject_id.into(),
            days,
            epoch_length: default_epoch_length(),
            origin: 0.0,
            origin_clock_hours: default_origin_clock(),
            schedule: Schedule::default(),
            signals: default_signals(),
            abnormal: Vec::new(),
            profiles: AbnormalProfiles::default(),
            seed,
        }
    }

    pub fn n_epochs(&self) -> usize {
        (self.days as f64 * DAY_SECONDS / self.epoch_length).round() as usize
    }

    pub fn duration(&self) -> f64 {
        self.days as f64 * DAY_SECONDS
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(format!("simulation {}: {m}", self.subject_id)));
        if self.days == 0 {
            return cfg("days must be positive".into());
        }
        if !(self.epoch_length > 0.0) || (DAY_SECONDS / self.epoch_length).fract() != 0.0 {
            return cfg(format!("epoch length {} must divide a day evenly", self.epoch_length));
        }
        if !(0.0..24.0).contains(&self.origin_clock_hours) {
            return cfg("origin clock hour must lie in [0, 24)".into());
        }
        let blocks = self
            .schedule
            .blocks
            .iter()
            .chain(self.schedule.per_day.values().flatten());
        for b in blocks {
            if !(0.0..24.0).contains(&b.onset_hour) || !(b.duration_hours > 0.0 && b.duration_hours <= 24.0) {
                return cfg(format!(
                    "sleep block ({}, {}) outside day bounds",
                    b.onset_hour, b.duration_hours
                ));
            }
        }
        if !(self.schedule.jitter_hours >= 0.0) {
            return cfg("jitter must be non-negative".into());
        }
        if self.signals.is_empty() {
            return cfg("no signals configured".into());
        }
        let mut seen = Vec::new();
        for s in &self.signals {
            if seen.contains(&s.signal) {
                return cfg(format!("signal {} configured twice", s.signal));
            }
            seen.push(s.signal);
            let per_epoch = s.sampling_hz * self.epoch_length;
            if !(per_epoch >= 1.0) || per_epoch.fract() != 0.0 {
                return cfg(format!(
                    "{}: sampling rate must give a whole number of samples per epoch",
                    s.signal
                ));
            }
            s.sleep.validate(s.signal.name())?;
            s.wake.validate(s.signal.name())?;
        }
        let mut segs = self.abnormal.clone();
        segs.sort_by(|a, b| a.start.total_cmp(&b.start));
        for s in &segs {
            if !(s.start >= 0.0 && s.end > s.start && s.end <= self.duration()) {
                return cfg(format!("abnormal segment [{}, {}) out of range", s.start, s.end));
            }
        }
        if let Some(w) = segs.windows(2).find(|w| w[1].start < w[0].end) {
            return cfg(format!(
                "abnormal segments [{}, {}) and [{}, {}) overlap",
                w[0].start, w[0].end, w[1].start, w[1].end
            ));
        }
        for p in [
            &self.profiles.not_worn,
            &self.profiles.lost_contact,
            &self.profiles.active,
        ] {
            for o in p {
                o.emission.validate(o.signal.name())?;
            }
        }
        Ok(())
    }

    /// Resolved sleep intervals in seconds since the origin.
    fn sleep_intervals(&self, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
        let jitter = self.schedule.jitter_hours;
        let mut out = Vec::new();
        // day -1 covers sleep that started before the origin
        for d in -1..self.days as i64 {
            let blocks = if d >= 0 {
                self.schedule
                    .per_day
                    .get(&(d as usize))
                    .unwrap_or(&self.schedule.blocks)
            } else {
                &self.schedule.blocks
            };
            for b in blocks {
                let (mut on, mut dur) = (0.0, 0.0);
                if jitter > 0.0 {
                    let a: f64 = StandardNormal.sample(rng);
                    let c: f64 = StandardNormal.sample(rng);
                    on = jitter * a;
                    dur = jitter * c;
                }
                let offset = (b.onset_hour - self.origin_clock_hours).rem_euclid(24.0);
                let start = (d as f64 * 24.0 + offset + on) * 3600.0;
                let end = start + (b.duration_hours + dur).max(0.25) * 3600.0;
                if end > 0.0 && start < self.duration() {
                    out.push((start.max(0.0), end.min(self.duration())));
                }
            }
        }
        out
    }
}

/// Generated subject: raw streams plus per-epoch truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSubject {
    pub subject_id: String,
    pub origin: f64,
    pub origin_clock_hours: f64,
    pub epoch_length: f64,
    pub streams: Vec<RawStream>,
    /// True for sleep.
    pub truth: Vec<bool>,
    pub abnormal: Vec<Option<AbnormalKind>>,
}

impl SimSubject {
    pub fn n_epochs(&self) -> usize {
        self.truth.len()
    }
}

fn draw(e: &Emission, drift: &DriftRate, days: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    let level = e.level + drift.level * days + e.level_sd * a;
    let base = e.spread + drift.spread * days;
    let spread = (base + e.spread_sd * b).max(0.01 * e.spread.abs().max(1e-9));
    (level, spread)
}

pub fn generate_subject(cfg: &SimConfig) -> Result<SimSubject> {
    cfg.validate()?;
    let n = cfg.n_epochs();
    let l = cfg.epoch_length;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let intervals = cfg.sleep_intervals(&mut rng);
    let mid = |j: usize| (j as f64 + 0.5) * l;
    let truth: Vec<bool> = (0..n)
        .map(|j| intervals.iter().any(|&(a, b)| (a..b).contains(&mid(j))))
        .collect();
    let abnormal: Vec<Option<AbnormalKind>> = (0..n)
        .map(|j| {
            cfg.abnormal
                .iter()
                .find(|s| (s.start..s.end).contains(&mid(j)))
                .map(|s| s.kind)
        })
        .collect();

    let mut signals: Vec<&SignalModel> = cfg.signals.iter().collect();
    signals.sort_by_key(|s| s.signal);
    let streams = signals
        .par_iter()
        .map(|model| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1 + model.signal as u64);
            let per_epoch = (model.sampling_hz * l).round() as usize;
            let mut samples = Vec::with_capacity(n * per_epoch);
            for j in 0..n {
                let start = j as f64 * l;
                let days = start / DAY_SECONDS;
                let (emission, drift) = match abnormal[j].and_then(|k| cfg.profiles.get(k, model.signal)) {
                    Some(e) => (e, DriftRate::default()),
                    None if truth[j] => (model.sleep, model.sleep_drift),
                    None => (model.wake, model.wake_drift),
                };
                let (level, spread) = draw(&emission, &drift, days, &mut rng);
                for k in 0..per_epoch {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    samples.push(Sample {
                        t: cfg.origin + start + k as f64 / model.sampling_hz,
                        value: level + spread * z,
                    });
                }
            }
            RawStream::new(model.signal, model.sampling_hz, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimSubject {
        subject_id: cfg.subject_id.clone(),
        origin: cfg.origin,
        origin_clock_hours: cfg.origin_clock_hours,
        epoch_length: l,
        streams,
        truth,
        abnormal,
    })
}

/// Adds abnormal segments of `block_epochs` epochs at random positions until
/// they cover `fraction` of the grid, cycling through `kinds`.
pub fn inject_abnormal(
    cfg: &mut SimConfig,
    fraction: f64,
    kinds: &[AbnormalKind],
    block_epochs: usize,
    seed: u64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) || kinds.is_empty() || block_epochs == 0 {
        return Err(Error::Config(
            "abnormal injection needs a fraction in [0, 1], a kind and a block length".into(),
        ));
    }
    let n_blocks = cfg.n_epochs() / block_epochs;
    let wanted = ((fraction * cfg.n_epochs() as f64) / block_epochs as f64).round() as usize;
    let free: Vec<usize> = (0..n_blocks)
        .filter(|&b| {
            let (s, e) = block_span(cfg, b, block_epochs);
            !cfg.abnormal.iter().any(|a| a.start < e && s < a.end)
        })
        .collect();
    if wanted > free.len() {
        return Err(Error::Config(format!(
            "cannot place {wanted} abnormal blocks; only {} free",
            free.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = free.choose_multiple(&mut rng, wanted).copied().collect();
    chosen.sort_unstable();
    for (i, b) in chosen.into_iter().enumerate() {
        let (start, end) = block_span(cfg, b, block_epochs);
        cfg.abnormal.push(AbnormalSegment {
            start,
            end,
            kind: kinds[i % kinds.len()],
        });
    }
    cfg.abnormal.sort_by(|a, b| a.start.total_cmp(&b.start));
    Ok(())
}

fn block_span(cfg: &SimConfig, b: usize, len: usize) -> (f64, f64) {
    let l = cfg.epoch_length;
    ((b * len) as f64 * l, ((b + 1) * len) as f64 * l)
}

/// Approximate SD of an epoch's median and sample SD given its emission.
fn observed_sds(e: &Emission, samples: f64) -> (f64, f64) {
    let med = (e.level_sd.powi(2) + std::f64::consts::FRAC_PI_2 * e.spread.powi(2) / samples).sqrt();
    let sd = (e.spread_sd.powi(2) + e.spread.powi(2) / (2.0 * (samples - 1.0))).sqrt();
    (med, sd)
}

/// Subject whose HR MED, HR SD and ACC SD class means all move down by
/// `pooled_sds` pooled standard deviations over `days` days.
///
/// HR MED separates the states by about five pooled SDs; HR SD and ACC SD
/// carry weak extra signal.
pub fn drift_scenario(subject_id: &str, days: usize, pooled_sds: f64, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::new(subject_id, days, seed);
    let acc = SignalModel::new(
        Signal::Acc,
        4.0,
        Emission::new(1.0, 0.01, 0.25, 0.02),
        Emission::new(1.0, 0.01, 0.26, 0.02),
    );
    let hr = SignalModel::new(
        Signal::Hr,
        1.0,
        Emission::new(55.0, 4.0, 6.0, 0.6),
        Emission::new(75.0, 4.0, 6.4, 0.6),
    );
    let mut signals = default_signals();
    signals.retain(|s| !matches!(s.signal, Signal::Acc | Signal::Hr));
    signals.push(acc);
    signals.push(hr);
    let per_day = -pooled_sds / days as f64;
    for s in &mut signals {
        if !matches!(s.signal, Signal::Acc | Signal::Hr) {
            continue;
        }
        let m = s.sampling_hz * cfg.epoch_length;
        let (med0, sd0) = observed_sds(&s.sleep, m);
        let (med1, sd1) = observed_sds(&s.wake, m);
        let pooled_med = ((med0 * med0 + med1 * med1) / 2.0).sqrt();
        let pooled_sd = ((sd0 * sd0 + sd1 * sd1) / 2.0).sqrt();
        let rate = DriftRate {
            level: if s.signal == Signal::Hr {
                per_day * pooled_med
            } else {
                0.0
            },
            spread: per_day * pooled_sd,
        };
        s.sleep_drift = rate;
        s.wake_drift = rate;
    }
    cfg.signals = signals;
    cfg
}

/// Writes one CSV per signal plus `<id>_truth.csv`; returns the manifest entry
/// with paths relative to `dir`.
pub fn write_subject(dir: &Path, subject: &SimSubject) -> Result<SubjectEntry> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut streams = Vec::new();
    for s in &subject.streams {
        let name = format!("{}_{}.csv", subject.subject_id, s.signal());
        write_signal_csv(&dir.join(&name), s)?;
        streams.push(StreamEntry {
            signal: s.signal(),
            path: PathBuf::from(name),
            sampling_hz: s.sampling_hz(),
        });
    }
    write_truth_csv(&dir.join(format!("{}_truth.csv", subject.subject_id)), subject)?;
    Ok(SubjectEntry {
        id: subject.subject_id.clone(),
        origin: subject.origin,
        n_epochs: Some(subject.n_epochs()),
        origin_clock_hours: Some(subject.origin_clock_hours),
        streams,
    })
}

/// `epoch_start,truth,abnormal` with truth `sleep`/`wake` and the injected kind or empty.
pub fn write_truth_csv(path: &Path, subject: &SimSubject) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "epoch_start,truth,abnormal")?;
    for (j, (&t, a)) in subject.truth.iter().zip(&subject.abnormal).enumerate() {
        writeln!(
            w,
            "{},{},{}",
            subject.origin + j as f64 * subject.epoch_length,
            if t { "sleep" } else { "wake" },
            a.map_or("", AbnormalKind::name)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Generates and writes every subject, then `manifest.json`, into `dir`.
pub fn simulate_cohort(dir: &Path, configs: &[SimConfig]) -> Result<Manifest> {
    let mut ids: Vec<&str> = configs.iter().map(|c| c.subject_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate simulated subject `{}`", w[0])));
    }
    let subjects = configs
        .iter()
        .map(|c| {
            let s = generate_subject(c)?;
            write_subject(dir, &s)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { subjects };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Mean separability indices for two bivariate normal classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig3Result {
    pub mu: f64,
    pub n_per_class: usize,
    pub n_seeds: usize,
    /// Projection-distance SI with the Fisher direction.
    pub si_projection: f64,
    /// Euclidean-distance SI.
    pub si_euclidean: f64,
}

/// Class 0 from BVN(0, 0, 1, 1, 0), class 1 from BVN(mu, mu, 1, 1, 0).
pub fn bvn_sample(mu: f64, n_per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * n_per_class);
    let mut y = Vec::with_capacity(2 * n_per_class);
    for class in [false, true] {
        let m = if class { mu } else { 0.0 };
        for _ in 0..n_per_class {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            x.push(vec![m + a, m + b]);
            y.push(class);
        }
    }
    (x, y)
}

pub fn fig3_experiment(mu: f64, n_per_class: usize, seeds: &[u64]) -> Result<Fig3Result> {
    if n_per_class < 3 || seeds.is_empty() {
        return Err(Error::Config(
            "SI experiment needs at least 3 samples per class and one seed".into(),
        ));
    }
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let (x, y) = bvn_sample(mu, n_per_class, seed);
            let lda = fit_lda(&x, &y, 1.0)?;
            Ok((separability_index(&x, &y, &lda.w)?, si_euclidean(&x, &y)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let k = per_seed.len() as f64;
    Ok(Fig3Result {
        mu,
        n_per_class,
        n_seeds: seeds.len(),
        si_projection: per_seed.iter().map(|p| p.0).sum::<f64>() / k,
        si_euclidean: per_seed.iter().map(|p| p.1).sum::<f64>() / k,
    })
}
