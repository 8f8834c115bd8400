//! Per-feature outcome models for one study day: ranked binary and ordinal
//! tables, a pairwise correlation table of the top features, and a joint
//! logistic fit.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::pipeline::write_json;
use crate::predict::{fit_continuation_ratio, fit_logistic, loocv_auc, loocv_auc_multi, loocv_auc_ordinal, Submodel};
use crate::stats;

/// Features entering the correlation table and the joint model.
pub const TOP_CORRELATION: usize = 10;
pub const TOP_JOINT: usize = 3;

/// Outcomes for one subject; either may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabels {
    pub subject: String,
    pub binary: Option<bool>,
    /// 1 = early, 2 = mid, 3 = late.
    pub ordinal: Option<u8>,
}

/// Reads `subject[,binary][,ordinal]`; `NA` or empty marks a missing outcome.
pub fn read_labels_csv(path: &Path) -> Result<Vec<OutcomeLabels>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let subject = col("subject").ok_or_else(|| Error::Data(format!("{}: missing subject column", path.display())))?;
    let (binary, ordinal) = (col("binary"), col("ordinal"));
    if binary.is_none() && ordinal.is_none() {
        return Err(Error::Data(format!(
            "{}: needs a binary and/or ordinal column",
            path.display()
        )));
    }
    let mut out: Vec<OutcomeLabels> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |c: Option<usize>| {
            c.and_then(|c| rec.get(c))
                .map(str::trim)
                .filter(|v| !v.is_empty() && *v != "NA")
        };
        let bad = |v: &str| Error::Data(format!("{}: bad outcome {v:?}", path.display()));
        let b = match field(binary) {
            None => None,
            Some("1") | Some("true") => Some(true),
            Some("0") | Some("false") => Some(false),
            Some(v) => return Err(bad(v)),
        };
        let o = match field(ordinal) {
            None => None,
            Some(v) => match v.parse::<u8>() {
                Ok(k @ 1..=3) => Some(k),
                _ => return Err(bad(v)),
            },
        };
        let id = rec.get(subject).unwrap_or("").trim().to_string();
        if out.iter().any(|l| l.subject == id) {
            return Err(Error::Data(format!("{}: subject {id} listed twice", path.display())));
        }
        out.push(OutcomeLabels {
            subject: id,
            binary: b,
            ordinal: o,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryResult {
    pub feature: String,
    pub beta0: f64,
    pub beta1: f64,
    pub converged: bool,
    pub auc: f64,
    pub n: usize,
    pub skipped_folds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalResult {
    pub feature: String,
    /// (beta0, beta1) of the two conditional logits; NaN for constant submodels.
    pub coefficients: [[f64; 2]; 2],
    /// One-vs-rest AUC for early, mid, late.
    pub auc: [f64; 3],
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl OrdinalResult {
    fn mean_auc(&self) -> f64 {
        let v: Vec<f64> = self.auc.iter().copied().filter(|a| a.is_finite()).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub features: Vec<String>,
    /// Row-major Pearson correlations over subjects with both values.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointResult {
    pub features: Vec<String>,
    /// Intercept first.
    pub coef: Vec<f64>,
    pub converged: bool,
    pub auc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub day: i64,
    pub subjects: Vec<String>,
    /// Highest LOOCV AUC first; failed fits last.
    pub binary: Vec<BinaryResult>,
    /// Highest mean one-vs-rest AUC first.
    pub ordinal: Vec<OrdinalResult>,
    pub correlation: Option<Correlation>,
    pub joint: Option<JointResult>,
}

fn pairs<T: Copy>(x: &[f64], y: &[Option<T>]) -> (Vec<f64>, Vec<T>) {
    x.iter()
        .zip(y)
        .filter_map(|(&v, &l)| l.filter(|_| v.is_finite()).map(|l| (v, l)))
        .unzip()
}

fn binary_result(feature: &str, x: &[f64], y: &[Option<bool>]) -> BinaryResult {
    let (xs, ys) = pairs(x, y);
    let mut r = BinaryResult {
        feature: feature.to_string(),
        beta0: f64::NAN,
        beta1: f64::NAN,
        converged: false,
        auc: f64::NAN,
        n: xs.len(),
        skipped_folds: 0,
        error: None,
    };
    let fit = fit_logistic(&xs, &ys).and_then(|m| Ok((m, loocv_auc(&xs, &ys)?)));
    match fit {
        Ok((m, cv)) => {
            r.beta0 = m.beta0;
            r.beta1 = m.beta1;
            r.converged = m.converged;
            r.auc = cv.auc;
            r.skipped_folds = cv.skipped.len();
        }
        Err(e) => r.error = Some(e.to_string()),
    }
    r
}

fn ordinal_result(feature: &str, x: &[f64], y: &[Option<u8>]) -> OrdinalResult {
    let (xs, ys) = pairs(x, y);
    let mut r = OrdinalResult {
        feature: feature.to_string(),
        coefficients: [[f64::NAN; 2]; 2],
        auc: [f64::NAN; 3],
        n: xs.len(),
        error: None,
    };
    let fit = fit_continuation_ratio(&xs, &ys).and_then(|m| Ok((m, loocv_auc_ordinal(&xs, &ys)?)));
    match fit {
        Ok((m, cv)) => {
            for (c, level) in r.coefficients.iter_mut().zip(&m.levels) {
                if let Submodel::Fitted(b) = level {
                    *c = [b.beta0, b.beta1];
                }
            }
            r.auc = cv.auc;
        }
        Err(e) => r.error = Some(e.to_string()),
    }
    r
}

/// Descending by score, NaN last, ties kept in column order.
fn rank_by<T>(items: &mut [T], score: impl Fn(&T) -> f64) {
    items.sort_by(|a, b| {
        let (x, y) = (score(a), score(b));
        match (x.is_nan(), y.is_nan()) {
            (true, true) => std::cmp::Ordering::Equal,
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => y.total_cmp(&x),
        }
    });
}

pub fn correlation(columns: &[Vec<f64>], names: &[String]) -> Correlation {
    let k = columns.len();
    let mut matrix = vec![vec![f64::NAN; k]; k];
    for a in 0..k {
        matrix[a][a] = 1.0;
        for b in a + 1..k {
            let (x, y): (Vec<f64>, Vec<f64>) = columns[a]
                .iter()
                .zip(&columns[b])
                .filter(|(u, v)| u.is_finite() && v.is_finite())
                .map(|(&u, &v)| (u, v))
                .unzip();
            let r = if x.len() >= 3 { stats::pearson(&x, &y) } else { f64::NAN };
            matrix[a][b] = r;
            matrix[b][a] = r;
        }
    }
    Correlation {
        features: names.to_vec(),
        matrix,
    }
}

/// Fits every feature of day `day` against the outcomes.
pub fn evaluate(table: &FeatureTable, labels: &[OutcomeLabels], day: i64) -> Result<Evaluation> {
    let rows = table.day(day);
    if rows.is_empty() {
        return Err(Error::Data(format!("feature table has no rows for day {day}")));
    }
    let have: BTreeSet<&str> = rows.iter().map(|r| r.subject.as_str()).collect();
    let want: BTreeSet<&str> = labels.iter().map(|l| l.subject.as_str()).collect();
    let unmatched: Vec<&str> = have.symmetric_difference(&want).copied().collect();
    if !unmatched.is_empty() {
        return Err(Error::Data(format!(
            "subjects without both features and outcomes: {}",
            unmatched.join(", ")
        )));
    }
    let label = |s: &str| labels.iter().find(|l| l.subject == s).expect("matched above");
    let yb: Vec<Option<bool>> = rows.iter().map(|r| label(&r.subject).binary).collect();
    let yo: Vec<Option<u8>> = rows.iter().map(|r| label(&r.subject).ordinal).collect();
    let column = |c: usize| -> Vec<f64> { rows.iter().map(|r| r.values[c]).collect() };

    let has_binary = yb.iter().any(Option::is_some);
    let has_ordinal = yo.iter().any(Option::is_some);
    let mut binary: Vec<BinaryResult> = if has_binary {
        table
            .columns
            .par_iter()
            .enumerate()
            .map(|(c, name)| binary_result(name, &column(c), &yb))
            .collect()
    } else {
        Vec::new()
    };
    rank_by(&mut binary, |r| r.auc);
    let mut ordinal: Vec<OrdinalResult> = if has_ordinal {
        table
            .columns
            .par_iter()
            .enumerate()
            .map(|(c, name)| ordinal_result(name, &column(c), &yo))
            .collect()
    } else {
        Vec::new()
    };
    rank_by(&mut ordinal, OrdinalResult::mean_auc);

    let top: Vec<&BinaryResult> = binary.iter().filter(|r| r.auc.is_finite()).collect();
    let correlation = (top.len() >= 2).then(|| {
        let names: Vec<String> = top.iter().take(TOP_CORRELATION).map(|r| r.feature.clone()).collect();
        let cols: Vec<Vec<f64>> = names
            .iter()
            .map(|n| column(table.column_index(n).expect("ranked feature exists")))
            .collect();
        correlation(&cols, &names)
    });

    let joint = if top.len() >= 2 {
        let names: Vec<String> = top.iter().take(TOP_JOINT).map(|r| r.feature.clone()).collect();
        let idx: Vec<usize> = names.iter().map(|n| table.column_index(n).expect("exists")).collect();
        let (x, y): (Vec<Vec<f64>>, Vec<bool>) = rows
            .iter()
            .zip(&yb)
            .filter_map(|(r, l)| {
                let v: Vec<f64> = idx.iter().map(|&c| r.values[c]).collect();
                l.filter(|_| v.iter().all(|x| x.is_finite())).map(|l| (v, l))
            })
            .unzip();
        crate::predict::fit_logistic_multi(&x, &y)
            .and_then(|m| Ok((m, loocv_auc_multi(&x, &y)?)))
            .ok()
            .map(|(m, cv)| JointResult {
                features: names,
                coef: m.coef,
                converged: m.converged,
                auc: cv.auc,
                n: x.len(),
            })
    } else {
        None
    };

    Ok(Evaluation {
        day,
        subjects: rows.iter().map(|r| r.subject.clone()).collect(),
        binary,
        ordinal,
        correlation,
        joint,
    })
}

fn num(v: f64) -> String {
    crate::ingest::fmt_value(v)
}

impl Evaluation {
    /// Writes `binary_ranking.csv`, `ordinal_ranking.csv`, `correlation.csv`
    /// and `evaluation.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("binary_ranking.csv"))?;
        w.write_record([
            "rank",
            "feature",
            "beta0",
            "beta1",
            "converged",
            "auc",
            "n",
            "skipped_folds",
        ])?;
        for (i, r) in self.binary.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                r.feature.clone(),
                num(r.beta0),
                num(r.beta1),
                r.converged.to_string(),
                num(r.auc),
                r.n.to_string(),
                r.skipped_folds.to_string(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("ordinal_ranking.csv"))?;
        w.write_record([
            "rank",
            "feature",
            "beta0_1",
            "beta1_1",
            "beta0_2",
            "beta1_2",
            "auc_early",
            "auc_mid",
            "auc_late",
            "n",
        ])?;
        for (i, r) in self.ordinal.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                r.feature.clone(),
                num(r.coefficients[0][0]),
                num(r.coefficients[0][1]),
                num(r.coefficients[1][0]),
                num(r.coefficients[1][1]),
                num(r.auc[0]),
                num(r.auc[1]),
                num(r.auc[2]),
                r.n.to_string(),
            ])?;
        }
        w.flush()?;
        if let Some(c) = &self.correlation {
            let mut w = csv::Writer::from_path(dir.join("correlation.csv"))?;
            let mut header = vec!["feature".to_string()];
            header.extend(c.features.iter().cloned());
            w.write_record(&header)?;
            for (name, row) in c.features.iter().zip(&c.matrix) {
                let mut rec = vec![name.clone()];
                rec.extend(row.iter().map(|&v| num(v)));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        write_json(&dir.join("evaluation.json"), self)
    }
}
