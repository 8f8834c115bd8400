//! Per-subject adaptive thresholding of abnormal epochs and post-hoc
//! categorization of what was excluded.
//!
//! Each screening variable is clustered into three groups with 1-D k-means.
//! The groups judged normal define a feasible half-line whose edge is an
//! extreme quantile of the normal values; epochs outside any feasible
//! half-line are excluded before learning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EpochSeries;
use crate::signal::{vars, Variable};
use crate::stats;

pub const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 300;

/// Quantile of the normal set used as a lower cutoff (upper uses `1 - q`).
pub const CUTOFF_QUANTILE: f64 = 0.025;

/// Subjects with more than this fraction of abnormal epochs are unusable.
pub const DEFAULT_UNUSABLE_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Centroids, highest first.
    pub centroids: Vec<f64>,
    /// Index into `centroids` for each input value.
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    pub wcss: f64,
}

impl ClusterSummary {
    pub fn members<'a>(&'a self, values: &'a [f64], cluster: usize) -> impl Iterator<Item = f64> + 'a {
        values
            .iter()
            .zip(&self.assignments)
            .filter(move |(_, &a)| a == cluster)
            .map(|(&v, _)| v)
    }
}

/// One-dimensional k-means with farthest-point seeding and restarts.
///
/// Each restart draws the first center uniformly from the data and adds the
/// point farthest from all chosen centers until `k` are placed; the restart
/// with the lowest within-cluster sum of squares wins (earliest on ties).
pub fn kmeans_1d(values: &[f64], k: usize, seed: u64) -> Result<ClusterSummary> {
    if k == 0 {
        return Err(Error::Config("k-means needs k >= 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("k-means input contains non-finite values".into()));
    }
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Degenerate(format!(
            "k-means with k={k} needs at least {k} distinct values, got {}",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let first = values[rng.random_range(0..values.len())];
        let centers = farthest_point_seeds(values, first, k);
        let (centers, assign, wcss) = lloyd_1d(values, centers);
        if best.as_ref().is_none_or(|b| wcss < b.0) {
            best = Some((wcss, centers, assign));
        }
    }
    let (wcss, centers, assign) = best.expect("at least one restart");

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[b].total_cmp(&centers[a]));
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let assignments: Vec<usize> = assign.iter().map(|&a| rank[a]).collect();
    let mut sizes = vec![0; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    Ok(ClusterSummary {
        centroids: order.iter().map(|&c| centers[c]).collect(),
        assignments,
        sizes,
        wcss,
    })
}

fn farthest_point_seeds(values: &[f64], first: f64, k: usize) -> Vec<f64> {
    let mut centers = vec![first];
    while centers.len() < k {
        let mut far = values[0];
        let mut far_d = -1.0;
        for &v in values {
            let d = centers.iter().map(|c| (v - c).abs()).fold(f64::INFINITY, f64::min);
            if d > far_d {
                far_d = d;
                far = v;
            }
        }
        centers.push(far);
    }
    centers
}

fn nearest(v: f64, centers: &[f64]) -> usize {
    let mut best = 0;
    for (c, &m) in centers.iter().enumerate().skip(1) {
        if (v - m).abs() < (v - centers[best]).abs() {
            best = c;
        }
    }
    best
}

fn lloyd_1d(values: &[f64], mut centers: Vec<f64>) -> (Vec<f64>, Vec<usize>, f64) {
    let k = centers.len();
    let mut assign: Vec<usize> = values.iter().map(|&v| nearest(v, &centers)).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&v, &a) in values.iter().zip(&assign) {
            sums[a] += v;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
        // re-seed empty clusters with the worst-fitting point
        for c in 0..k {
            if counts[c] == 0 {
                let (idx, _) = values
                    .iter()
                    .zip(&assign)
                    .enumerate()
                    .map(|(i, (&v, &a))| (i, (v - centers[a]).abs()))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                centers[c] = values[idx];
                assign[idx] = c;
            }
        }
        let next: Vec<usize> = values.iter().map(|&v| nearest(v, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let wcss = values
        .iter()
        .zip(&assign)
        .map(|(&v, &a)| (v - centers[a]).powi(2))
        .sum();
    (centers, assign, wcss)
}

/// Which tail of a variable's distribution holds abnormal readings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbnormalSide {
    /// Abnormal readings sit below normal ones (e.g. skin temperature when
    /// the sensor reads ambient air). The lowest cluster is abnormal, and
    /// the middle one too when it is closer to the lowest than to the top.
    Low,
    /// Mirror image of `Low` for abnormally high readings.
    High,
    /// The isolated extreme cluster is abnormal; the two closer clusters are normal.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffDirection {
    /// Feasible region `[cutoff, +inf)`.
    LowerBound,
    /// Feasible region `(-inf, cutoff]`.
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffRule {
    pub variable: Variable,
    pub cutoff: f64,
    pub direction: CutoffDirection,
    pub normal_mean: f64,
    pub abnormal_mean: f64,
    pub normal_count: usize,
    pub abnormal_count: usize,
    pub centroids: Vec<f64>,
}

impl CutoffRule {
    pub fn is_feasible(&self, value: f64) -> bool {
        match self.direction {
            CutoffDirection::LowerBound => value >= self.cutoff,
            CutoffDirection::UpperBound => value <= self.cutoff,
        }
    }
}

/// Clusters values into three groups, picks the normal set, and derives the cutoff.
pub fn compute_cutoff(variable: Variable, values: &[f64], side: AbnormalSide, seed: u64) -> Result<CutoffRule> {
    let summary = kmeans_1d(values, 3, seed)?;
    let mu = &summary.centroids;
    let upper_gap = (mu[1] - mu[0]).abs();
    let lower_gap = (mu[2] - mu[1]).abs();
    let normal: &[usize] = match side {
        AbnormalSide::Low if upper_gap < lower_gap => &[0, 1],
        AbnormalSide::Low => &[0],
        AbnormalSide::High if lower_gap < upper_gap => &[1, 2],
        AbnormalSide::High => &[2],
        AbnormalSide::Auto if lower_gap < upper_gap => &[1, 2],
        AbnormalSide::Auto => &[0, 1],
    };
    let (mut normal_vals, mut abnormal_vals) = (Vec::new(), Vec::new());
    for (&v, a) in values.iter().zip(&summary.assignments) {
        if normal.contains(a) {
            normal_vals.push(v);
        } else {
            abnormal_vals.push(v);
        }
    }
    let normal_mean = stats::mean(&normal_vals);
    let abnormal_mean = stats::mean(&abnormal_vals);
    let (direction, q) = if normal_mean > abnormal_mean {
        (CutoffDirection::LowerBound, CUTOFF_QUANTILE)
    } else {
        (CutoffDirection::UpperBound, 1.0 - CUTOFF_QUANTILE)
    };
    Ok(CutoffRule {
        variable,
        cutoff: stats::quantile(&normal_vals, q),
        direction,
        normal_mean,
        abnormal_mean,
        normal_count: normal_vals.len(),
        abnormal_count: abnormal_vals.len(),
        centroids: summary.centroids,
    })
}

/// A screening variable and the tail its abnormal readings fall in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningVariable {
    pub variable: Variable,
    #[serde(default)]
    pub side: AbnormalSide,
}

/// HR MED (abnormally high) and TEMP MED (abnormally low).
pub fn default_screening() -> Vec<ScreeningVariable> {
    vec![
        ScreeningVariable {
            variable: vars::HR_MED,
            side: AbnormalSide::High,
        },
        ScreeningVariable {
            variable: vars::TEMP_MED,
            side: AbnormalSide::Low,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochState {
    Na,
    Abnormal,
    Usable,
}

/// An epoch series together with the epochs excluded as abnormal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenedSeries {
    pub series: EpochSeries,
    excluded: Vec<bool>,
}

impl ScreenedSeries {
    pub fn unscreened(series: EpochSeries) -> Self {
        let excluded = vec![false; series.len()];
        ScreenedSeries { series, excluded }
    }

    pub fn with_exclusions(series: EpochSeries, excluded: Vec<bool>) -> Result<Self> {
        if excluded.len() != series.len() {
            return Err(Error::Dimension {
                expected: series.len(),
                got: excluded.len(),
            });
        }
        let excluded = excluded
            .iter()
            .zip(series.na_mask())
            .map(|(&e, &na)| e && !na)
            .collect();
        Ok(ScreenedSeries { series, excluded })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn state(&self, j: usize) -> EpochState {
        if self.series.is_na(j) {
            EpochState::Na
        } else if self.excluded[j] {
            EpochState::Abnormal
        } else {
            EpochState::Usable
        }
    }

    pub fn is_usable(&self, j: usize) -> bool {
        self.state(j) == EpochState::Usable
    }

    pub fn is_excluded(&self, j: usize) -> bool {
        self.excluded[j]
    }

    pub fn usable_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.is_usable(j)).collect()
    }

    pub fn excluded_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.excluded[j]).collect()
    }

    /// Excluded epochs as a fraction of non-NA epochs.
    pub fn abnormal_proportion(&self) -> f64 {
        let observed = self.series.na_mask().iter().filter(|&&na| !na).count();
        if observed == 0 {
            return 0.0;
        }
        self.excluded.iter().filter(|&&e| e).count() as f64 / observed as f64
    }

    /// Applies further rules to the currently usable epochs.
    pub fn apply(&self, rules: &[CutoffRule]) -> Result<ScreenedSeries> {
        let extra = violations(&self.series, rules)?;
        let excluded = self.excluded.iter().zip(extra).map(|(&a, b)| a || b).collect();
        Ok(ScreenedSeries {
            series: self.series.clone(),
            excluded,
        })
    }
}

fn violations(series: &EpochSeries, rules: &[CutoffRule]) -> Result<Vec<bool>> {
    let cols: Vec<usize> = rules
        .iter()
        .map(|r| series.require_column(r.variable))
        .collect::<Result<_>>()?;
    Ok((0..series.len())
        .map(|j| !series.is_na(j) && rules.iter().zip(&cols).any(|(r, &c)| !r.is_feasible(series.row(j)[c])))
        .collect())
}

/// Marks every non-NA epoch that violates any rule as excluded.
pub fn filter_epochs(series: &EpochSeries, rules: &[CutoffRule]) -> Result<ScreenedSeries> {
    let excluded = violations(series, rules)?;
    Ok(ScreenedSeries {
        series: series.clone(),
        excluded,
    })
}

/// Derives cutoff rules for the screening variables and filters the series.
pub fn screen_subject(
    series: &EpochSeries,
    screening: &[ScreeningVariable],
    seed: u64,
) -> Result<(Vec<CutoffRule>, ScreenedSeries)> {
    let mut rules = Vec::with_capacity(screening.len());
    for sv in screening {
        let col = series.require_column(sv.variable)?;
        let values: Vec<f64> = (0..series.len())
            .filter(|&j| !series.is_na(j))
            .map(|j| series.row(j)[col])
            .collect();
        rules.push(compute_cutoff(sv.variable, &values, sv.side, seed)?);
    }
    let screened = filter_epochs(series, &rules)?;
    Ok((rules, screened))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fences {
    pub low: f64,
    pub up: f64,
}

impl Fences {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.up
    }
}

/// Tukey fences `Q1 - 1.5 IQR` and `Q3 + 1.5 IQR`.
pub fn tukey_fences(values: &[f64]) -> Result<Fences> {
    if values.is_empty() {
        return Err(Error::Data("Tukey fences of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = stats::quantile_sorted(&sorted, 0.25);
    let q3 = stats::quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(Fences {
        low: q1 - 1.5 * iqr,
        up: q3 + 1.5 * iqr,
    })
}

/// Device state inferred for an excluded epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExcludedCategory {
    /// Device not worn: low temperature and low movement.
    #[serde(rename = "NW")]
    NotWorn,
    /// Lost sensor contact: low temperature, normal movement.
    #[serde(rename = "LOC")]
    LostContact,
    /// Vigorous activity: normal temperature, high heart rate and movement.
    #[serde(rename = "ACTIVE")]
    Active,
    #[serde(rename = "OTHER")]
    Other,
}

impl ExcludedCategory {
    pub const ALL: [ExcludedCategory; 4] = [
        ExcludedCategory::NotWorn,
        ExcludedCategory::LostContact,
        ExcludedCategory::Active,
        ExcludedCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExcludedCategory::NotWorn => "NW",
            ExcludedCategory::LostContact => "LOC",
            ExcludedCategory::Active => "ACTIVE",
            ExcludedCategory::Other => "OTHER",
        }
    }
}

/// Normal ranges used by [`categorize_excluded`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WakeRanges {
    pub temp_med: Fences,
    pub acc_sd: Fences,
    pub hr_med: Fences,
}

impl WakeRanges {
    pub fn from_reference(series: &EpochSeries, wake_reference: &[usize]) -> Result<Self> {
        let fences = |var: Variable| -> Result<Fences> {
            let col = series.require_column(var)?;
            let vals: Vec<f64> = wake_reference
                .iter()
                .filter(|&&j| !series.is_na(j))
                .map(|&j| series.row(j)[col])
                .collect();
            if vals.is_empty() {
                return Err(Error::Data(format!(
                    "subject {}: empty wake reference, cannot categorize excluded epochs",
                    series.subject_id
                )));
            }
            tukey_fences(&vals)
        };
        Ok(WakeRanges {
            temp_med: fences(vars::TEMP_MED)?,
            acc_sd: fences(vars::ACC_SD)?,
            hr_med: fences(vars::HR_MED)?,
        })
    }

    pub fn categorize(&self, temp_med: f64, acc_sd: f64, hr_med: f64) -> ExcludedCategory {
        let low_temp = temp_med < self.temp_med.low;
        if low_temp && acc_sd < self.acc_sd.low {
            ExcludedCategory::NotWorn
        } else if low_temp && self.acc_sd.contains(acc_sd) {
            ExcludedCategory::LostContact
        } else if self.temp_med.contains(temp_med) && hr_med > self.hr_med.up && acc_sd > self.acc_sd.up {
            ExcludedCategory::Active
        } else {
            ExcludedCategory::Other
        }
    }
}

/// Labels each excluded epoch using Tukey fences over the wake-session epochs.
pub fn categorize_excluded(
    series: &EpochSeries,
    excluded: &[usize],
    wake_reference: &[usize],
) -> Result<Vec<ExcludedCategory>> {
    let ranges = WakeRanges::from_reference(series, wake_reference)?;
    let cols = [
        series.require_column(vars::TEMP_MED)?,
        series.require_column(vars::ACC_SD)?,
        series.require_column(vars::HR_MED)?,
    ];
    Ok(excluded
        .iter()
        .map(|&j| {
            let row = series.row(j);
            ranges.categorize(row[cols[0]], row[cols[1]], row[cols[2]])
        })
        .collect())
}

/// Per-subject screening summary, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbnormalReport {
    pub subject: String,
    pub rules: Vec<CutoffRule>,
    pub n_epochs: usize,
    pub n_na: usize,
    pub n_excluded: usize,
    pub abnormal_proportion: f64,
    pub unusable: bool,
}

impl AbnormalReport {
    pub fn new(rules: Vec<CutoffRule>, screened: &ScreenedSeries, unusable_fraction: f64) -> Self {
        let proportion = screened.abnormal_proportion();
        AbnormalReport {
            subject: screened.series.subject_id.clone(),
            rules,
            n_epochs: screened.len(),
            n_na: screened.series.na_mask().iter().filter(|&&na| na).count(),
            n_excluded: screened.excluded_indices().len(),
            abnormal_proportion: proportion,
            unusable: proportion > unusable_fraction,
        }
    }
}
